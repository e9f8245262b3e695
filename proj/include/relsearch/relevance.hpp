#pragma once

#include "relsearch/index.hpp"
#include "relsearch/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace relsearch {

// Probabilities are clamped to [kProbabilityFloor, 1 - kProbabilityFloor]
// before taking logs so no image ever reaches zero relevance.
inline constexpr double kProbabilityFloor = 1e-9;

// "The target is <response> <attribute> than ref_image."
struct FeedbackConstraint {
    ImageId ref_image = 0;
    AttributeIndex attribute = 0;
    Response response = Response::More;
    double weight = 1.0;

    bool operator==(const FeedbackConstraint&) const = default;
};

void validate(const FeedbackConstraint& c, const SearchIndex& index);

struct RelevanceState {
    // log P(relevant | feedback) per image; always <= 0. Mirrors log_units exactly.
    std::vector<double> log_relevance;
    // The same sums in fixed point (units of 2^-40), so the result does not
    // depend on the order in which constraints arrive.
    std::vector<std::int64_t> log_units;
    std::vector<FeedbackConstraint> history;
    // Number of history constraints each image satisfies under hard predicates.
    std::vector<std::uint32_t> satisfied_counts;

    static RelevanceState initial(std::size_t num_images);
    std::size_t size() const { return log_relevance.size(); }
    bool operator==(const RelevanceState&) const = default;
};

/// Clamped probability that `image` satisfies `c`, before weighting.
double constraint_probability(const SearchIndex& index, ImageId image, const FeedbackConstraint& c);

/// weight * log(clamped probability).
double constraint_log_prob(const SearchIndex& index, ImageId image, const FeedbackConstraint& c);

bool satisfies_hard(const SearchIndex& index, ImageId image, const FeedbackConstraint& c);

/// Appends `c` and accumulates its log term on every image. Repeated
/// constraints accumulate; nothing is deduplicated.
void apply_feedback(RelevanceState& state, const SearchIndex& index, const FeedbackConstraint& c);
RelevanceState update_relevance(RelevanceState state, const SearchIndex& index, const FeedbackConstraint& c);

/// Recomputes a state from scratch over `history`.
RelevanceState rebuild_relevance(const SearchIndex& index, std::span<const FeedbackConstraint> history);

enum class RankingMode { Probabilistic, Counting };

/// Image ids by descending score, ties by ascending id.
std::vector<ImageId> rank_by_score(std::span<const double> scores);
std::vector<ImageId> rank_images(const RelevanceState& state, RankingMode mode);

/// Fraction of the other images ranked below `target`: 1.0 when first.
double percentile_rank(std::span<const ImageId> ranking, ImageId target);

/// Image with the highest log relevance; lowest id on ties.
ImageId most_relevant(const RelevanceState& state);

}  // namespace relsearch

#include "relsearch/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace relsearch {

namespace {

constexpr int kLogUnitBits = 40;

}  // namespace

void validate(const FeedbackConstraint& c, const SearchIndex& index) {
    if (c.ref_image >= index.size()) throw InvalidInput("feedback: unknown reference image " + std::to_string(c.ref_image));
    if (c.attribute >= index.num_attributes()) throw InvalidInput("feedback: unknown attribute " + std::to_string(c.attribute));
    if (!(c.weight > 0.0) || !std::isfinite(c.weight)) throw InvalidInput("feedback: weight must be positive");
}

RelevanceState RelevanceState::initial(std::size_t num_images) {
    RelevanceState s;
    s.log_relevance.assign(num_images, 0.0);
    s.log_units.assign(num_images, 0);
    s.satisfied_counts.assign(num_images, 0);
    return s;
}

double constraint_probability(const SearchIndex& index, ImageId image, const FeedbackConstraint& c) {
    if (c.ref_image >= index.size()) throw InvalidInput("feedback: unknown reference image " + std::to_string(c.ref_image));
    const auto probs = response_probabilities(index.models[c.attribute], index.attribute(image, c.attribute),
                                              index.attribute(c.ref_image, c.attribute));
    return std::clamp(probs[static_cast<std::size_t>(c.response)], kProbabilityFloor, 1.0 - kProbabilityFloor);
}

double constraint_log_prob(const SearchIndex& index, ImageId image, const FeedbackConstraint& c) {
    return c.weight * std::log(constraint_probability(index, image, c));
}

bool satisfies_hard(const SearchIndex& index, ImageId image, const FeedbackConstraint& c) {
    const double a = index.attribute(image, c.attribute);
    const double ref = index.attribute(c.ref_image, c.attribute);
    switch (c.response) {
        case Response::More: return a > ref;
        case Response::Less: return a < ref;
        case Response::Equal: return std::abs(a - ref) <= index.equal_thresholds[c.attribute];
    }
    return false;
}

void apply_feedback(RelevanceState& state, const SearchIndex& index, const FeedbackConstraint& c) {
    validate(c, index);
    if (state.size() != index.size()) throw InvalidInput("feedback: state does not match the index");
    for (std::size_t i = 0; i < state.size(); ++i) {
        const auto image = static_cast<ImageId>(i);
        const auto term = static_cast<std::int64_t>(std::llround(std::ldexp(constraint_log_prob(index, image, c), kLogUnitBits)));
        if (__builtin_add_overflow(state.log_units[i], term, &state.log_units[i])) {
            throw InvalidInput("feedback: relevance accumulator overflow");
        }
        state.log_relevance[i] = std::ldexp(static_cast<double>(state.log_units[i]), -kLogUnitBits);
        if (satisfies_hard(index, image, c)) ++state.satisfied_counts[i];
    }
    state.history.push_back(c);
}

RelevanceState update_relevance(RelevanceState state, const SearchIndex& index, const FeedbackConstraint& c) {
    apply_feedback(state, index, c);
    return state;
}

RelevanceState rebuild_relevance(const SearchIndex& index, std::span<const FeedbackConstraint> history) {
    auto state = RelevanceState::initial(index.size());
    for (const auto& c : history) apply_feedback(state, index, c);
    return state;
}

std::vector<ImageId> rank_by_score(std::span<const double> scores) {
    std::vector<ImageId> order(scores.size());
    std::iota(order.begin(), order.end(), ImageId{0});
    std::stable_sort(order.begin(), order.end(), [&](ImageId a, ImageId b) { return scores[a] > scores[b]; });
    return order;
}

std::vector<ImageId> rank_images(const RelevanceState& state, RankingMode mode) {
    if (mode == RankingMode::Probabilistic) return rank_by_score(state.log_relevance);
    std::vector<double> counts(state.satisfied_counts.begin(), state.satisfied_counts.end());
    return rank_by_score(counts);
}

double percentile_rank(std::span<const ImageId> ranking, ImageId target) {
    const auto it = std::find(ranking.begin(), ranking.end(), target);
    if (it == ranking.end()) throw InvalidInput("percentile_rank: target not in ranking");
    const auto n = ranking.size();
    if (n == 1) return 1.0;
    const auto position = static_cast<std::size_t>(it - ranking.begin());
    return static_cast<double>(n - 1 - position) / static_cast<double>(n - 1);
}

ImageId most_relevant(const RelevanceState& state) {
    if (state.log_relevance.empty()) throw InvalidInput("most_relevant: empty state");
    const auto it = std::max_element(state.log_relevance.begin(), state.log_relevance.end());
    return static_cast<ImageId>(it - state.log_relevance.begin());
}

}  // namespace relsearch

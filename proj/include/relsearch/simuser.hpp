#pragma once

#include "relsearch/index.hpp"
#include "relsearch/relevance.hpp"

#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <utility>
#include <vector>

namespace relsearch {

/// 75th percentile (nearest rank) of |a_m(i) - a_m(j)| over EQUAL pairs.
double equal_threshold_from_training(std::span<const double> equal_abs_diffs);

/// One threshold per attribute from the manifest's EQUAL labels; attributes
/// without EQUAL labels fall back to 0.1 x SD of their predicted values.
std::vector<double> equal_thresholds(const DatasetManifest& manifest, const AttributeMatrix& attributes);

struct SimUserConfig {
    // Gaussian noise SD added to each predicted strength, per attribute.
    std::vector<double> noise_sd;
    // Per-attribute "equally" band; empty means use the index's thresholds.
    std::vector<double> equal_threshold;
    // SIMILAR when d <= mean - band * SD of the target's distances.
    double binary_similar_band = 1.0;
    // Noise on perceived distances, as a fraction of the target's distance SD.
    double binary_noise_fraction = 0.1;
    std::uint64_t seed = 0;
};

/// Noise SD = noise_fraction x SD of predicted values, per attribute.
SimUserConfig default_simuser_config(const SearchIndex& index, double noise_fraction = 0.1, std::uint64_t seed = 0);

struct RelativeAnswer {
    Response response = Response::Equal;
    // 3 = "a lot", 2 = plain answer.
    int confidence = 2;
};

enum class BinaryAnswer { Similar, Dissimilar };

// Answers questions about a fixed target from the index's predicted
// strengths plus seeded Gaussian noise. One instance per episode.
class SimulatedUser {
public:
    SimulatedUser(const SearchIndex& index, SimUserConfig config);

    RelativeAnswer relative_response(ImageId target, ImageId pivot, AttributeIndex attribute);

    /// `target_distances[i]` is the ground-truth distance from the target to image i.
    BinaryAnswer binary_response(ImageId exemplar, std::span<const double> target_distances);

    /// Compares the target to every unused (shown image, attribute) pair and
    /// keeps the `n_statements` most confident answers; ties are broken by a
    /// seeded draw. Returned pairs are never offered again by this user.
    std::vector<FeedbackConstraint> free_choice_feedback(ImageId target, std::span<const ImageId> shown,
                                                         std::size_t n_statements);

    bool used(ImageId ref, AttributeIndex attribute) const { return used_.count({ref, attribute}) > 0; }
    void mark_used(ImageId ref, AttributeIndex attribute) { used_.insert({ref, attribute}); }

    const SimUserConfig& config() const { return config_; }
    std::mt19937_64& rng() { return rng_; }

private:
    const SearchIndex* index_;
    SimUserConfig config_;
    std::mt19937_64 rng_;
    std::set<std::pair<ImageId, AttributeIndex>> used_;
};

/// Constraint weight for a confidence level: "a lot" answers count double.
double confidence_weight(int confidence);

struct BinaryInit {
    ImageId positive = 0;
    ImageId negative = 0;
};

/// Peeks at the distances from the target to a seeded pool of `pool_size`
/// other images and returns the closest as positive, the furthest as negative.
BinaryInit peek_binary_init(ImageId target, std::span<const double> target_distances, std::size_t pool_size,
                            std::mt19937_64& rng);

}  // namespace relsearch

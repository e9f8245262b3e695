#pragma once

#include "relsearch/index.hpp"
#include "relsearch/ranker.hpp"
#include "relsearch/relevance.hpp"

#include <cstdint>
#include <set>
#include <vector>

namespace relsearch {

struct BinaryFeedback {
    std::set<ImageId> relevant;
    std::set<ImageId> irrelevant;

    bool empty() const { return relevant.empty() && irrelevant.empty(); }
    bool operator==(const BinaryFeedback&) const = default;
};

void validate(const BinaryFeedback& feedback, std::size_t num_images);

// buckets[k] holds the images satisfying exactly k of the relative constraints.
struct SatisfactionPartition {
    std::vector<std::vector<ImageId>> buckets;
};

/// Buckets images by their hard-satisfied constraint counts.
SatisfactionPartition partition_by_satisfaction(const RelevanceState& state);

struct PairOptions {
    // Total pair budget, split evenly over the non-empty blocks.
    std::size_t cap = 20000;
    std::uint64_t seed = 0;
};

/// R x R-bar plus C_F x C_{F-1}, ..., C_1 x C_0 (adjacent buckets only).
/// Oversized blocks are subsampled uniformly without replacement. Binary
/// pairs are weighted by (#attribute pairs / #binary pairs) when both kinds
/// are present.
std::vector<RankPair> build_ordered_pairs(const BinaryFeedback& binary, const SatisfactionPartition& partition,
                                          const PairOptions& options = {});

/// Weighted large-margin ranker over the pairs; score images with w.x.
TrainResult train_hybrid_scorer(std::span<const RankPair> pairs, const FeatureMatrix& features,
                                const TrainConfig& config);

}  // namespace relsearch

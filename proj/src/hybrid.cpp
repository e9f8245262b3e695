#include "relsearch/hybrid.hpp"

#include <algorithm>
#include <random>
#include <unordered_set>

namespace relsearch {

void validate(const BinaryFeedback& feedback, std::size_t num_images) {
    for (ImageId id : feedback.relevant) {
        if (id >= num_images) throw InvalidInput("binary feedback: unknown image " + std::to_string(id));
        if (feedback.irrelevant.count(id)) throw InvalidInput("binary feedback: image " + std::to_string(id) + " is both relevant and irrelevant");
    }
    for (ImageId id : feedback.irrelevant) {
        if (id >= num_images) throw InvalidInput("binary feedback: unknown image " + std::to_string(id));
    }
}

SatisfactionPartition partition_by_satisfaction(const RelevanceState& state) {
    SatisfactionPartition p;
    p.buckets.resize(state.history.size() + 1);
    for (std::size_t i = 0; i < state.satisfied_counts.size(); ++i) {
        p.buckets.at(state.satisfied_counts[i]).push_back(static_cast<ImageId>(i));
    }
    return p;
}

namespace {

void emit_block(const std::vector<ImageId>& better, const std::vector<ImageId>& worse, std::size_t budget,
                std::mt19937_64& rng, std::vector<RankPair>& out) {
    const std::size_t total = better.size() * worse.size();
    if (total == 0) return;
    auto push = [&](std::size_t flat) {
        const ImageId b = better[flat / worse.size()];
        const ImageId w = worse[flat % worse.size()];
        if (b != w) out.push_back({b, w, 1.0});
    };
    if (total <= budget) {
        for (std::size_t k = 0; k < total; ++k) push(k);
        return;
    }
    // Floyd's algorithm: `budget` distinct flat indices out of `total`.
    std::unordered_set<std::size_t> chosen;
    std::vector<std::size_t> picked;
    for (std::size_t j = total - budget; j < total; ++j) {
        const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
        const std::size_t v = chosen.insert(t).second ? t : (chosen.insert(j), j);
        picked.push_back(v);
    }
    std::sort(picked.begin(), picked.end());
    for (std::size_t k : picked) push(k);
}

}  // namespace

std::vector<RankPair> build_ordered_pairs(const BinaryFeedback& binary, const SatisfactionPartition& partition,
                                          const PairOptions& options) {
    if (options.cap == 0) throw InvalidInput("hybrid: pair cap must be positive");
    const std::vector<ImageId> relevant(binary.relevant.begin(), binary.relevant.end());
    const std::vector<ImageId> irrelevant(binary.irrelevant.begin(), binary.irrelevant.end());

    std::size_t blocks = (!relevant.empty() && !irrelevant.empty()) ? 1 : 0;
    for (std::size_t k = 1; k < partition.buckets.size(); ++k) {
        if (!partition.buckets[k].empty() && !partition.buckets[k - 1].empty()) ++blocks;
    }
    if (blocks == 0) throw InvalidInput("hybrid: no ordered pairs (no usable feedback)");
    const std::size_t budget = std::max<std::size_t>(1, options.cap / blocks);

    std::mt19937_64 rng(options.seed);
    std::vector<RankPair> binary_pairs;
    emit_block(relevant, irrelevant, budget, rng, binary_pairs);
    std::vector<RankPair> attribute_pairs;
    for (std::size_t k = partition.buckets.size(); k-- > 1;) {
        emit_block(partition.buckets[k], partition.buckets[k - 1], budget, rng, attribute_pairs);
    }
    if (!binary_pairs.empty() && !attribute_pairs.empty()) {
        const double w = static_cast<double>(attribute_pairs.size()) / static_cast<double>(binary_pairs.size());
        for (auto& p : binary_pairs) p.weight = w;
    }
    std::vector<RankPair> out = std::move(binary_pairs);
    out.insert(out.end(), attribute_pairs.begin(), attribute_pairs.end());
    if (out.empty()) throw InvalidInput("hybrid: no ordered pairs (no usable feedback)");
    return out;
}

TrainResult train_hybrid_scorer(std::span<const RankPair> pairs, const FeatureMatrix& features,
                                const TrainConfig& config) {
    return train_attribute_ranker(pairs, features, config);
}

}  // namespace relsearch

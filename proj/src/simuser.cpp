#include "relsearch/simuser.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace relsearch {

namespace {

double stddev(std::span<const double> v) {
    if (v.empty()) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

std::vector<double> column(const AttributeMatrix& a, Eigen::Index m) {
    std::vector<double> out(static_cast<std::size_t>(a.rows()));
    for (Eigen::Index i = 0; i < a.rows(); ++i) out[static_cast<std::size_t>(i)] = a(i, m);
    return out;
}

}  // namespace

double equal_threshold_from_training(std::span<const double> equal_abs_diffs) {
    if (equal_abs_diffs.empty()) throw InvalidInput("equal threshold: no EQUAL pairs");
    std::vector<double> sorted(equal_abs_diffs.begin(), equal_abs_diffs.end());
    for (auto& d : sorted) d = std::abs(d);
    std::sort(sorted.begin(), sorted.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.75 * static_cast<double>(sorted.size())));
    return sorted[std::max<std::size_t>(rank, 1) - 1];
}

std::vector<double> equal_thresholds(const DatasetManifest& manifest, const AttributeMatrix& attributes) {
    std::vector<double> out;
    for (Eigen::Index m = 0; m < attributes.cols(); ++m) {
        std::vector<double> diffs;
        for (const auto& c : manifest.comparisons) {
            if (c.attribute == m && c.relation == Response::Equal) {
                diffs.push_back(std::abs(attributes(c.first, m) - attributes(c.second, m)));
            }
        }
        if (diffs.empty()) {
            out.push_back(0.1 * stddev(column(attributes, m)));
        } else {
            out.push_back(equal_threshold_from_training(diffs));
        }
    }
    return out;
}

SimUserConfig default_simuser_config(const SearchIndex& index, double noise_fraction, std::uint64_t seed) {
    SimUserConfig cfg;
    for (Eigen::Index m = 0; m < index.attributes.cols(); ++m) {
        cfg.noise_sd.push_back(noise_fraction * stddev(column(index.attributes, m)));
    }
    cfg.equal_threshold = index.equal_thresholds;
    cfg.binary_noise_fraction = noise_fraction;
    cfg.seed = seed;
    return cfg;
}

SimulatedUser::SimulatedUser(const SearchIndex& index, SimUserConfig config)
    : index_(&index), config_(std::move(config)), rng_(config_.seed) {
    const auto m = index.num_attributes();
    if (config_.noise_sd.empty()) config_.noise_sd.assign(m, 0.0);
    if (config_.equal_threshold.empty()) config_.equal_threshold = index.equal_thresholds;
    if (config_.noise_sd.size() != m || config_.equal_threshold.size() != m) {
        throw InvalidInput("simuser: per-attribute settings must have one entry per attribute");
    }
    for (double sd : config_.noise_sd) {
        if (sd < 0.0) throw InvalidInput("simuser: noise_sd must be non-negative");
    }
}

RelativeAnswer SimulatedUser::relative_response(ImageId target, ImageId pivot, AttributeIndex attribute) {
    if (target >= index_->size() || pivot >= index_->size()) throw InvalidInput("simuser: unknown image");
    if (attribute >= index_->num_attributes()) throw InvalidInput("simuser: unknown attribute");
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = config_.noise_sd[attribute];
    // Both draws are always consumed so the stream is independent of sd.
    const double eps_target = normal(rng_) * sd;
    const double eps_pivot = normal(rng_) * sd;
    const double diff = (index_->attribute(target, attribute) + eps_target) -
                        (index_->attribute(pivot, attribute) + eps_pivot);
    const double band = config_.equal_threshold[attribute];
    RelativeAnswer out;
    if (std::abs(diff) <= band) {
        out.response = Response::Equal;
        out.confidence = 2;
        return out;
    }
    out.response = diff > 0.0 ? Response::More : Response::Less;
    out.confidence = std::abs(diff) > 2.0 * band ? 3 : 2;
    return out;
}

BinaryAnswer SimulatedUser::binary_response(ImageId exemplar, std::span<const double> target_distances) {
    if (exemplar >= target_distances.size()) throw InvalidInput("simuser: unknown exemplar");
    const double n = static_cast<double>(target_distances.size());
    const double mean = std::accumulate(target_distances.begin(), target_distances.end(), 0.0) / n;
    const double sd = stddev(target_distances);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double perceived = target_distances[exemplar] + config_.binary_noise_fraction * sd * normal(rng_);
    return perceived <= mean - config_.binary_similar_band * sd ? BinaryAnswer::Similar : BinaryAnswer::Dissimilar;
}

std::vector<FeedbackConstraint> SimulatedUser::free_choice_feedback(ImageId target, std::span<const ImageId> shown,
                                                                    std::size_t n_statements) {
    if (shown.empty()) throw InvalidInput("simuser: no reference images shown");
    struct Candidate {
        FeedbackConstraint constraint;
        int confidence;
        std::uint64_t tiebreak;
    };
    std::vector<Candidate> candidates;
    std::set<std::pair<ImageId, AttributeIndex>> seen;
    for (ImageId ref : shown) {
        for (AttributeIndex m = 0; m < index_->num_attributes(); ++m) {
            if (used(ref, m) || !seen.insert({ref, m}).second) continue;
            const auto answer = relative_response(target, ref, m);
            candidates.push_back({{ref, m, answer.response, confidence_weight(answer.confidence)},
                                  answer.confidence,
                                  rng_()});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(b.confidence, a.tiebreak) < std::tie(a.confidence, b.tiebreak);
    });
    if (candidates.size() > n_statements) candidates.resize(n_statements);
    std::vector<FeedbackConstraint> out;
    for (const auto& c : candidates) {
        mark_used(c.constraint.ref_image, c.constraint.attribute);
        out.push_back(c.constraint);
    }
    return out;
}

double confidence_weight(int confidence) { return confidence >= 3 ? 2.0 : 1.0; }

BinaryInit peek_binary_init(ImageId target, std::span<const double> target_distances, std::size_t pool_size,
                            std::mt19937_64& rng) {
    std::vector<ImageId> others;
    for (ImageId i = 0; i < target_distances.size(); ++i) {
        if (i != target) others.push_back(i);
    }
    if (others.size() < 2) throw InvalidInput("binary init: need at least two other images");
    std::shuffle(others.begin(), others.end(), rng);
    others.resize(std::clamp<std::size_t>(pool_size, 2, others.size()));
    const auto by_distance = [&](ImageId a, ImageId b) {
        return target_distances[a] != target_distances[b] ? target_distances[a] < target_distances[b] : a < b;
    };
    BinaryInit init;
    init.positive = *std::min_element(others.begin(), others.end(), by_distance);
    init.negative = *std::max_element(others.begin(), others.end(), by_distance);
    return init;
}

}  // namespace relsearch

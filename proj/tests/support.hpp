#pragma once

#include "relsearch/active.hpp"
#include "relsearch/index.hpp"
#include "relsearch/pivots.hpp"
#include "relsearch/ranker.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

namespace testsupport {

using namespace relsearch;

// Calibrated model with order slope alpha and equal sigmoid (gamma, delta).
inline AttributeModel make_model(AttributeIndex m, std::size_t dim, double alpha = -4.0, double gamma = 6.0,
                                 double delta = -1.0) {
    AttributeModel model;
    model.attribute = m;
    model.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    if (m < dim) model.weights[m] = 1.0;
    model.alpha = alpha;
    model.beta = 0.0;
    model.gamma = gamma;
    model.delta = delta;
    model.calibrated = true;
    return model;
}

// Index whose attribute values equal the first M feature columns.
inline SearchIndex make_index(const FeatureMatrix& features, std::size_t num_attributes, double alpha = -4.0,
                              double gamma = 6.0, double delta = -1.0) {
    SearchIndex index;
    index.name = "handmade";
    index.features = features;
    const auto n = features.rows();
    index.attributes = AttributeMatrix(n, static_cast<Eigen::Index>(num_attributes));
    for (std::size_t m = 0; m < num_attributes; ++m) {
        index.attribute_names.push_back("attr" + std::to_string(m));
        index.models.push_back(make_model(static_cast<AttributeIndex>(m), static_cast<std::size_t>(features.cols()),
                                          alpha, gamma, delta));
        index.attributes.col(static_cast<Eigen::Index>(m)) = features.col(static_cast<Eigen::Index>(m));
        index.equal_thresholds.push_back(0.05);
        std::vector<double> column(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) column[static_cast<std::size_t>(i)] = features(i, static_cast<Eigen::Index>(m));
        index.trees.push_back(build_tree(column));
    }
    index.attribute_tau = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(num_attributes),
                                                    static_cast<Eigen::Index>(num_attributes));
    index.distance_scale = 1.0;
    index.asset_paths.assign(static_cast<std::size_t>(n), std::nullopt);
    index.class_ids.assign(static_cast<std::size_t>(n), std::nullopt);
    return index;
}

inline FeatureMatrix random_features(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    FeatureMatrix f(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
        for (Eigen::Index j = 0; j < f.cols(); ++j) f(i, j) = normal(rng);
    }
    return f;
}

inline SearchIndex random_index(std::size_t n, std::size_t m, std::uint64_t seed, std::size_t d = 0) {
    return make_index(random_features(n, d ? d : m, seed), m);
}

// Normalized three-way probabilities written out from the sigmoid definitions.
inline std::array<double, 3> oracle_probabilities(const AttributeModel& model, double a_image, double a_ref) {
    const double delta = a_image - a_ref;
    const double s = 1.0 / (1.0 + std::exp(model.alpha * delta + model.beta));
    const double e = 1.0 / (1.0 + std::exp(model.gamma * std::abs(delta) + model.delta));
    return {s / (1.0 + e), (1.0 - s) / (1.0 + e), e / (1.0 + e)};
}

inline double oracle_constraint_probability(const SearchIndex& index, ImageId image, const FeedbackConstraint& c) {
    const auto p = oracle_probabilities(index.models[c.attribute], index.attributes(image, c.attribute),
                                        index.attributes(c.ref_image, c.attribute));
    const double raw = p[static_cast<std::size_t>(c.response)];
    return std::clamp(raw, 1e-9, 1.0 - 1e-9);
}

// Relevance as the explicit product of weighted per-constraint probabilities.
inline std::vector<double> oracle_relevance(const SearchIndex& index, const std::vector<FeedbackConstraint>& history) {
    std::vector<double> out(index.size(), 1.0);
    for (std::size_t i = 0; i < index.size(); ++i) {
        for (const auto& c : history) {
            out[i] *= std::pow(oracle_constraint_probability(index, static_cast<ImageId>(i), c), c.weight);
        }
    }
    return out;
}

inline double oracle_entropy(const std::vector<double>& probabilities) {
    double h = 0.0;
    for (double p : probabilities) {
        if (p > 0.0 && p < 1.0) h -= p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p);
    }
    return h;
}

inline std::size_t oracle_argmax(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

// Likelihood of each answer about (pivot, attribute) under the history, by direct summation.
inline std::array<double, 3> oracle_likelihood(LikelihoodKind kind, const SearchIndex& index, ImageId pivot,
                                               AttributeIndex m, const std::vector<FeedbackConstraint>& history) {
    const auto relevance = oracle_relevance(index, history);
    const double a_pivot = index.attributes(pivot, m);
    if (kind == LikelihoodKind::MostRelevant) {
        const auto best = static_cast<ImageId>(oracle_argmax(relevance));
        return oracle_probabilities(index.models[m], index.attributes(best, m), a_pivot);
    }
    std::array<double, 3> out{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto p = oracle_probabilities(index.models[m], index.attributes(static_cast<Eigen::Index>(i), m), a_pivot);
        for (std::size_t r = 0; r < 3; ++r) out[r] += relevance[i] * p[r] / static_cast<double>(index.size());
    }
    const double total = out[0] + out[1] + out[2];
    for (double& v : out) v /= total;
    return out;
}

// Expected entropy by rebuilding the relevance product for each hypothetical answer.
inline double oracle_expected_entropy(LikelihoodKind kind, const SearchIndex& index, ImageId pivot, AttributeIndex m,
                                      const std::vector<FeedbackConstraint>& history) {
    const auto likelihood = oracle_likelihood(kind, index, pivot, m, history);
    double h = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
        auto extended = history;
        extended.push_back({pivot, m, static_cast<Response>(r), 1.0});
        h += likelihood[r] * oracle_entropy(oracle_relevance(index, extended));
    }
    return h;
}

struct OracleChoice {
    AttributeIndex attribute = 0;
    ImageId pivot = 0;
    double expected_entropy = 0.0;
};

// Scans every live cursor; strict improvement keeps the lowest attribute on ties.
inline std::optional<OracleChoice> oracle_select(LikelihoodKind kind, const SearchIndex& index, const PivotSet& pivots,
                                                 const std::vector<FeedbackConstraint>& history) {
    std::optional<OracleChoice> best;
    for (std::size_t m = 0; m < pivots.cursors.size(); ++m) {
        if (!pivots.cursors[m]) continue;
        const ImageId pivot = index.trees[m].node(*pivots.cursors[m]).pivot_image;
        const double h = oracle_expected_entropy(kind, index, pivot, static_cast<AttributeIndex>(m), history);
        if (!best || h < best->expected_entropy) best = OracleChoice{static_cast<AttributeIndex>(m), pivot, h};
    }
    return best;
}

}  // namespace testsupport

#include "relsearch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace relsearch {

double ndcg_at_k(std::span<const ImageId> predicted, std::span<const double> graded_relevance, std::size_t k) {
    const std::size_t n = graded_relevance.size();
    if (k == 0 || k > n) throw InvalidInput("ndcg: K must be in 1..N");
    if (predicted.size() < k) throw InvalidInput("ndcg: ranking shorter than K");
    auto gain = [](double rel) { return std::exp2(rel) - 1.0; };

    double dcg = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        if (predicted[p] >= n) throw InvalidInput("ndcg: ranking references an unknown item");
        dcg += gain(graded_relevance[predicted[p]]) / std::log2(static_cast<double>(p) + 2.0);
    }
    std::vector<double> ideal(graded_relevance.begin(), graded_relevance.end());
    std::partial_sort(ideal.begin(), ideal.begin() + static_cast<long>(k), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t p = 0; p < k; ++p) idcg += gain(ideal[p]) / std::log2(static_cast<double>(p) + 2.0);
    if (idcg <= 0.0) throw InvalidInput("ndcg: ideal DCG is zero");
    return dcg / idcg;
}

namespace {

template <typename Matrix>
double block_scale(const Matrix& m) {
    if (m.rows() < 2 || m.cols() == 0) return 1.0;
    const Eigen::RowVectorXd mean = m.colwise().mean();
    const double total = (m.rowwise() - mean).squaredNorm() / static_cast<double>(m.rows());
    return total > 0.0 ? std::sqrt(total) : 1.0;
}

}  // namespace

GroundTruthMetric::GroundTruthMetric(const SearchIndex& index, DistanceWeights weights)
    : index_(&index), weights_(weights) {
    if (weights.feature < 0.0 || weights.attribute < 0.0 || weights.feature + weights.attribute <= 0.0) {
        throw InvalidInput("ground truth: block weights must be non-negative and not both zero");
    }
    feature_scale_ = block_scale(index.features);
    attribute_scale_ = block_scale(index.attributes);
}

std::vector<double> GroundTruthMetric::distances_from(ImageId target) const {
    const auto n = index_->size();
    if (target >= n) throw InvalidInput("ground truth: unknown target");
    std::vector<double> d(n);
    const Eigen::RowVectorXd xt = index_->features.row(target);
    const Eigen::RowVectorXd at = index_->attributes.row(target);
    const double wf = weights_.feature / (feature_scale_ * feature_scale_);
    const double wa = weights_.attribute / (attribute_scale_ * attribute_scale_);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        double sq = 0.0;
        if (wf > 0.0) sq += wf * (index_->features.row(row) - xt).squaredNorm();
        if (wa > 0.0) sq += wa * (index_->attributes.row(row) - at).squaredNorm();
        d[i] = std::sqrt(sq);
    }
    return d;
}

GroundTruth ground_truth_for(const GroundTruthMetric& metric, ImageId target) {
    GroundTruth gt;
    gt.target = target;
    gt.distances = metric.distances_from(target);
    const auto n = gt.distances.size();
    gt.ranking.resize(n);
    std::iota(gt.ranking.begin(), gt.ranking.end(), ImageId{0});
    std::stable_sort(gt.ranking.begin(), gt.ranking.end(),
                     [&](ImageId a, ImageId b) { return gt.distances[a] < gt.distances[b]; });
    gt.graded_relevance.assign(n, 0.0);
    for (std::size_t pos = 0; pos < n; ++pos) {
        gt.graded_relevance[gt.ranking[pos]] = static_cast<double>(n - (pos + 1)) / static_cast<double>(n);
    }
    return gt;
}

LinearClassifier train_binary_svm(const FeatureMatrix& features, std::span<const ImageId> positives,
                                  std::span<const ImageId> negatives, double C) {
    if (positives.empty() || negatives.empty()) throw InvalidInput("svm: need positive and negative examples");
    const auto d = features.cols();
    FeatureMatrix rows(static_cast<Eigen::Index>(positives.size() + negatives.size()), d + 1);
    Eigen::Index r = 0;
    auto add = [&](ImageId id, double label) {
        if (id >= features.rows()) throw InvalidInput("svm: unknown image");
        rows.row(r).head(d) = label * features.row(id);
        rows(r, d) = label;
        ++r;
    };
    for (ImageId id : positives) add(id, 1.0);
    for (ImageId id : negatives) add(id, -1.0);
    TrainConfig config;
    config.C = C;
    const auto trained = minimize_hinge(rows, Eigen::VectorXd::Ones(rows.rows()), config);
    LinearClassifier out;
    out.weights = trained.weights.head(d);
    out.bias = trained.weights[d];
    return out;
}

double sign_test_p_value(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidInput("sign test: length mismatch");
    std::size_t wins = 0, losses = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) ++wins;
        if (a[i] < b[i]) ++losses;
    }
    const std::size_t n = wins + losses;
    if (n == 0) return 1.0;
    const std::size_t k = std::min(wins, losses);
    // P(X <= k) for X ~ Binomial(n, 1/2), summed in log space.
    double tail = 0.0;
    for (std::size_t i = 0; i <= k; ++i) {
        const double log_term = std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(i) + 1.0) -
                                std::lgamma(static_cast<double>(n - i) + 1.0) - static_cast<double>(n) * std::log(2.0);
        tail += std::exp(log_term);
    }
    return std::min(1.0, 2.0 * tail);
}

}  // namespace relsearch

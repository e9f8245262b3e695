#pragma once

#include "relsearch/index.hpp"
#include "relsearch/ranker.hpp"

#include <span>
#include <vector>

namespace relsearch {

/// NDCG@K with gains 2^rel - 1 and log2(p + 1) discounts, normalized by the
/// ideal ordering of the same relevance vector.
double ndcg_at_k(std::span<const ImageId> predicted, std::span<const double> graded_relevance, std::size_t k);

// Relative weight of the feature block and the predicted-attribute block in
// the ground-truth distance. Each block is first divided by the square root
// of its total variance.
struct DistanceWeights {
    double feature = 0.5;
    double attribute = 0.5;
};

class GroundTruthMetric {
public:
    GroundTruthMetric(const SearchIndex& index, DistanceWeights weights = {});

    std::vector<double> distances_from(ImageId target) const;
    const DistanceWeights& weights() const { return weights_; }

private:
    const SearchIndex* index_;
    DistanceWeights weights_;
    double feature_scale_ = 1.0;
    double attribute_scale_ = 1.0;
};

struct GroundTruth {
    ImageId target = 0;
    std::vector<double> distances;
    // Ascending distance, ties by id.
    std::vector<ImageId> ranking;
    // (N - position) / N with 1-based positions in `ranking`.
    std::vector<double> graded_relevance;
};

GroundTruth ground_truth_for(const GroundTruthMetric& metric, ImageId target);

struct LinearClassifier {
    Eigen::VectorXd weights;
    double bias = 0.0;

    double decision(const Eigen::Ref<const Eigen::RowVectorXd>& row) const { return row.dot(weights.transpose()) + bias; }
};

/// Linear SVM (hinge loss, regularized bias) trained with the ranker's solver.
LinearClassifier train_binary_svm(const FeatureMatrix& features, std::span<const ImageId> positives,
                                  std::span<const ImageId> negatives, double C = 1.0);

/// Two-sided exact sign test on paired samples; zero differences are dropped.
/// Returns 1.0 when every pair ties.
double sign_test_p_value(std::span<const double> a, std::span<const double> b);

}  // namespace relsearch

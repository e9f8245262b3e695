#pragma once

#include "relsearch/dataset.hpp"
#include "relsearch/types.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace relsearch {

struct TrainConfig {
    double C = 0.1;
    int epochs = 500;
    double step_size = 1.0;
    // Stop once the relative objective decrease of an accepted step falls below this.
    double tolerance = 1e-6;
    // Full-batch descent has no sampling; kept so configs round-trip unchanged.
    std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

// `better` has more of the attribute (or relevance) than `worse`.
struct RankPair {
    ImageId better = 0;
    ImageId worse = 0;
    double weight = 1.0;
};

struct TrainResult {
    Eigen::VectorXd weights;
    double violation_rate = 0.0;
    // Objective after every accepted step; nonincreasing.
    std::vector<double> objective_trace;
};

/// Minimizes 0.5*|w|^2 + C * sum_k c_k * max(0, 1 - w.z_k) over the rows z_k
/// of `rows` by full-batch subgradient descent with backtracking. Only steps
/// that lower the objective are accepted.
TrainResult minimize_hinge(const FeatureMatrix& rows, const Eigen::VectorXd& row_weights,
                           const TrainConfig& config);

/// Large-margin ranking: each pair contributes the hinge on w.(x_better - x_worse).
/// violation_rate is the fraction of pairs with w.x_better <= w.x_worse.
TrainResult train_attribute_ranker(std::span<const RankPair> pairs, const FeatureMatrix& features,
                                   const TrainConfig& config);

double predict_attribute(const Eigen::VectorXd& weights, const Eigen::Ref<const Eigen::RowVectorXd>& row);
double predict_attribute(std::span<const double> weights, std::span<const double> row);

// P(positive | x) = 1 / (1 + exp(slope * x + intercept)).
struct Sigmoid {
    double slope = 0.0;
    double intercept = 0.0;

    double operator()(double x) const;
};

struct CalibrationSample {
    double value = 0.0;
    bool positive = false;
};

struct SigmoidFitOptions {
    int max_iterations = 100;
    // Converged when the NLL gradient norm, per sample and with the slope term
    // in input units, drops below this.
    double gradient_tolerance = 1e-12;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

/// Damped Newton fit of a Platt sigmoid with one pseudo-count of label
/// smoothing per class. Throws CalibrationError on single-class input
/// ("degenerate labels") or when max_iterations is exhausted.
Sigmoid fit_sigmoid(std::span<const CalibrationSample> samples, const SigmoidFitOptions& options = {});

// Samples are (score difference, is MORE). Result is (alpha, beta).
Sigmoid fit_order_sigmoid(std::span<const CalibrationSample> diffs, const SigmoidFitOptions& options = {});
// Samples are (|score difference|, is EQUAL). Result is (gamma, delta).
Sigmoid fit_equal_sigmoid(std::span<const CalibrationSample> abs_diffs, const SigmoidFitOptions& options = {});

// Indexed by Response: {more, less, equal}.
using ResponseDistribution = std::array<double, kResponseCount>;

struct AttributeModel {
    AttributeIndex attribute = 0;
    Eigen::VectorXd weights;
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double delta = 0.0;
    double train_violation_rate = 0.0;
    bool calibrated = false;

    double score(const Eigen::Ref<const Eigen::RowVectorXd>& row) const { return predict_attribute(weights, row); }
};

/// Normalized probabilities that an image with strength `a_image` is
/// more / less / equally strong as a reference with strength `a_ref`.
ResponseDistribution response_probabilities(const AttributeModel& model, double a_image, double a_ref);

struct ModelSet {
    std::vector<std::string> attribute_names;
    std::size_t dim = 0;
    std::vector<AttributeModel> models;
};

/// Trains and calibrates one model per attribute from the manifest's labels.
/// EQUAL labels only feed the equal sigmoid.
ModelSet train_models(const DatasetManifest& manifest, const TrainConfig& config);

/// Score of every image on every attribute (N x M).
AttributeMatrix predict_all(const ModelSet& models, const FeatureMatrix& features);

std::string serialize_models(const ModelSet& models);
ModelSet parse_models(const std::string& text);
void save_models(const ModelSet& models, const std::filesystem::path& path);
ModelSet load_models(const std::filesystem::path& path);

}  // namespace relsearch

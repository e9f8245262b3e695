#include "relsearch/ranker.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace relsearch {

using nlohmann::json;

void validate(const TrainConfig& config) {
    if (!(config.C > 0.0)) throw InvalidInput("train: C must be positive");
    if (config.epochs < 1) throw InvalidInput("train: epochs must be positive");
    if (!(config.step_size > 0.0)) throw InvalidInput("train: step_size must be positive");
    if (config.tolerance < 0.0) throw InvalidInput("train: tolerance must be non-negative");
}

namespace {

double hinge_objective(const FeatureMatrix& rows, const Eigen::VectorXd& row_weights, double c,
                       const Eigen::VectorXd& w, Eigen::VectorXd& margins) {
    margins.noalias() = rows * w;
    double loss = 0.0;
    for (Eigen::Index k = 0; k < margins.size(); ++k) {
        const double slack = 1.0 - margins[k];
        if (slack > 0.0) loss += row_weights[k] * slack;
    }
    return 0.5 * w.squaredNorm() + c * loss;
}

}  // namespace

TrainResult minimize_hinge(const FeatureMatrix& rows, const Eigen::VectorXd& row_weights,
                           const TrainConfig& config) {
    validate(config);
    if (rows.rows() == 0) throw InvalidInput("train: empty pair list");
    if (row_weights.size() != rows.rows()) throw InvalidInput("train: one weight per row required");
    if (!rows.allFinite()) throw InvalidInput("train: non-finite features");
    for (Eigen::Index k = 0; k < row_weights.size(); ++k) {
        if (!(row_weights[k] > 0.0) || !std::isfinite(row_weights[k])) throw InvalidInput("train: pair weights must be positive");
    }

    const Eigen::Index dim = rows.cols();
    TrainResult result;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd margins;
    Eigen::VectorXd trial_margins;
    double objective = hinge_objective(rows, row_weights, config.C, w, margins);
    result.objective_trace.push_back(objective);

    double step = config.step_size;
    Eigen::VectorXd active(rows.rows());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (Eigen::Index k = 0; k < margins.size(); ++k) active[k] = margins[k] < 1.0 ? row_weights[k] : 0.0;
        const Eigen::VectorXd grad = w - config.C * (rows.transpose() * active);
        if (grad.squaredNorm() == 0.0) break;

        bool accepted = false;
        Eigen::VectorXd trial;
        double trial_objective = objective;
        for (int halving = 0; halving < 60; ++halving) {
            trial = w - step * grad;
            trial_objective = hinge_objective(rows, row_weights, config.C, trial, trial_margins);
            if (trial_objective < objective) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        const double decrease = (objective - trial_objective) / std::max(1.0, std::abs(objective));
        w.swap(trial);
        margins.swap(trial_margins);
        objective = trial_objective;
        result.objective_trace.push_back(objective);
        step *= 2.0;
        if (decrease < config.tolerance) break;
    }

    result.weights = std::move(w);
    std::size_t violated = 0;
    for (Eigen::Index k = 0; k < margins.size(); ++k) {
        if (margins[k] <= 0.0) ++violated;
    }
    result.violation_rate = static_cast<double>(violated) / static_cast<double>(margins.size());
    return result;
}

TrainResult train_attribute_ranker(std::span<const RankPair> pairs, const FeatureMatrix& features,
                                   const TrainConfig& config) {
    if (pairs.empty()) throw InvalidInput("train: empty pair list");
    const auto n = static_cast<ImageId>(features.rows());
    FeatureMatrix diffs(static_cast<Eigen::Index>(pairs.size()), features.cols());
    Eigen::VectorXd weights(static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& p = pairs[k];
        if (p.better >= n || p.worse >= n) throw InvalidInput("train: pair references an unknown image");
        const auto row = static_cast<Eigen::Index>(k);
        diffs.row(row) = features.row(p.better) - features.row(p.worse);
        weights[row] = p.weight;
    }
    return minimize_hinge(diffs, weights, config);
}

double predict_attribute(const Eigen::VectorXd& weights, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    if (weights.size() != row.size()) throw InvalidInput("predict: dimension mismatch");
    return row.dot(weights.transpose());
}

double predict_attribute(std::span<const double> weights, std::span<const double> row) {
    if (weights.size() != row.size()) throw InvalidInput("predict: dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) s += weights[k] * row[k];
    return s;
}

double Sigmoid::operator()(double x) const {
    const double z = slope * x + intercept;
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(z));
}

Sigmoid fit_sigmoid(std::span<const CalibrationSample> samples, const SigmoidFitOptions& options) {
    double n_pos = 0.0;
    double n_neg = 0.0;
    for (const auto& s : samples) {
        if (!std::isfinite(s.value)) throw CalibrationError("calibration: non-finite value");
        (s.positive ? n_pos : n_neg) += 1.0;
    }
    if (n_pos == 0.0 || n_neg == 0.0) throw CalibrationError("calibration: degenerate labels (need both classes)");

    const double hi = (n_pos + 1.0) / (n_pos + 2.0);
    const double lo = 1.0 / (n_neg + 2.0);
    auto target = [&](const CalibrationSample& s) { return s.positive ? hi : lo; };
    // Negative log-likelihood of smoothed targets under P = 1/(1+exp(z)).
    auto nll = [&](double a, double b) {
        double f = 0.0;
        for (const auto& s : samples) {
            const double z = a * s.value + b;
            const double t = target(s);
            f += z >= 0.0 ? t * z + std::log1p(std::exp(-z)) : (t - 1.0) * z + std::log1p(std::exp(z));
        }
        return f;
    };

    const double count = static_cast<double>(samples.size());
    // Slope gradient is measured in units of the input scale so rescaled inputs converge alike.
    double scale = 0.0;
    for (const auto& s : samples) scale += s.value * s.value;
    scale = std::sqrt(scale / count);
    if (!(scale > 0.0)) scale = 1.0;
    double a = 0.0;
    double b = std::log((n_neg + 1.0) / (n_pos + 1.0));
    double f = nll(a, b);
    double grad_norm = std::numeric_limits<double>::infinity();
    constexpr double kRidge = 1e-12;
    for (int it = 0; it < options.max_iterations; ++it) {
        double h11 = kRidge, h22 = kRidge, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (const auto& s : samples) {
            const double z = a * s.value + b;
            double p, q;
            if (z >= 0.0) {
                const double e = std::exp(-z);
                p = e / (1.0 + e);
                q = 1.0 / (1.0 + e);
            } else {
                const double e = std::exp(z);
                p = 1.0 / (1.0 + e);
                q = e / (1.0 + e);
            }
            const double d2 = p * q;
            h11 += s.value * s.value * d2;
            h22 += d2;
            h21 += s.value * d2;
            const double d1 = target(s) - p;
            g1 += s.value * d1;
            g2 += d1;
        }
        grad_norm = std::hypot(g1 / scale, g2) / count;
        if (grad_norm < options.gradient_tolerance) return {a, b};

        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;

        double step = 1.0;
        bool moved = false;
        while (step >= 1e-10) {
            const double na = a + step * da;
            const double nb = b + step * db;
            const double nf = nll(na, nb);
            if (nf < f + 1e-4 * step * gd) {
                moved = na != a || nb != b;
                a = na;
                b = nb;
                f = nf;
                break;
            }
            step *= 0.5;
        }
        // At the floating-point floor the line search stalls; accept if already tight.
        if (!moved) {
            if (grad_norm < 1e-8) return {a, b};
            break;
        }
    }
    std::ostringstream msg;
    msg << "calibration: no convergence after " << options.max_iterations << " iterations (gradient residual "
        << grad_norm << ")";
    throw CalibrationError(msg.str());
}

Sigmoid fit_order_sigmoid(std::span<const CalibrationSample> diffs, const SigmoidFitOptions& options) {
    return fit_sigmoid(diffs, options);
}

Sigmoid fit_equal_sigmoid(std::span<const CalibrationSample> abs_diffs, const SigmoidFitOptions& options) {
    for (const auto& s : abs_diffs) {
        if (s.value < 0.0) throw CalibrationError("calibration: equal sigmoid expects absolute differences");
    }
    return fit_sigmoid(abs_diffs, options);
}

ResponseDistribution response_probabilities(const AttributeModel& model, double a_image, double a_ref) {
    if (!model.calibrated) throw InvalidInput("response_probabilities: model is not calibrated");
    const double diff = a_image - a_ref;
    const double more = Sigmoid{model.alpha, model.beta}(diff);
    // Complement as its own sigmoid so it stays positive when `more` rounds to 1.
    const double less = Sigmoid{-model.alpha, -model.beta}(diff);
    const double equal = Sigmoid{model.gamma, model.delta}(std::abs(diff));
    const double total = more + less + equal;
    // A saturated component would round to exactly 1; keep it representably inside (0,1).
    const double top = std::nextafter(1.0, 0.0);
    return {std::min(more / total, top), std::min(less / total, top), std::min(equal / total, top)};
}

ModelSet train_models(const DatasetManifest& manifest, const TrainConfig& config) {
    validate(config);
    const FeatureMatrix x = manifest.feature_matrix();
    ModelSet out;
    out.attribute_names = manifest.attribute_names;
    out.dim = manifest.dim;
    for (std::size_t m = 0; m < manifest.num_attributes; ++m) {
        std::vector<RankPair> pairs;
        for (const auto& c : manifest.comparisons) {
            if (c.attribute != m) continue;
            if (c.relation == Response::More) pairs.push_back({c.first, c.second, 1.0});
            if (c.relation == Response::Less) pairs.push_back({c.second, c.first, 1.0});
        }
        if (pairs.empty()) {
            throw InvalidInput("train: attribute '" + manifest.attribute_names[m] + "' has no ordered pairs");
        }
        auto trained = train_attribute_ranker(pairs, x, config);

        AttributeModel model;
        model.attribute = static_cast<AttributeIndex>(m);
        model.weights = std::move(trained.weights);
        model.train_violation_rate = trained.violation_rate;

        const Eigen::VectorXd scores = x * model.weights;
        std::vector<CalibrationSample> order;
        std::vector<CalibrationSample> equal;
        for (const auto& c : manifest.comparisons) {
            if (c.attribute != m) continue;
            const double diff = scores[c.first] - scores[c.second];
            if (c.relation == Response::Equal) {
                equal.push_back({std::abs(diff), true});
            } else {
                const bool more = c.relation == Response::More;
                // Both orientations of every ordered pair, so the fit is symmetric in the sign of diff.
                order.push_back({diff, more});
                order.push_back({-diff, !more});
                equal.push_back({std::abs(diff), false});
            }
        }
        if (std::none_of(equal.begin(), equal.end(), [](const auto& s) { return s.positive; })) {
            equal.push_back({0.0, true});
        }
        const auto order_fit = fit_order_sigmoid(order);
        const auto equal_fit = fit_equal_sigmoid(equal);
        model.alpha = order_fit.slope;
        model.beta = order_fit.intercept;
        model.gamma = equal_fit.slope;
        model.delta = equal_fit.intercept;
        model.calibrated = true;
        out.models.push_back(std::move(model));
    }
    return out;
}

AttributeMatrix predict_all(const ModelSet& models, const FeatureMatrix& features) {
    if (static_cast<std::size_t>(features.cols()) != models.dim) throw InvalidInput("predict: dimension mismatch");
    Eigen::MatrixXd w(features.cols(), static_cast<Eigen::Index>(models.models.size()));
    for (std::size_t m = 0; m < models.models.size(); ++m) w.col(static_cast<Eigen::Index>(m)) = models.models[m].weights;
    return features * w;
}

std::string serialize_models(const ModelSet& models) {
    json doc;
    doc["attribute_names"] = models.attribute_names;
    doc["d"] = models.dim;
    json arr = json::array();
    for (const auto& m : models.models) {
        arr.push_back({{"attribute", m.attribute},
                       {"weights", std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size())},
                       {"alpha", m.alpha},
                       {"beta", m.beta},
                       {"gamma", m.gamma},
                       {"delta", m.delta},
                       {"train_violation_rate", m.train_violation_rate}});
    }
    doc["models"] = std::move(arr);
    return doc.dump();
}

ModelSet parse_models(const std::string& text) {
    ModelSet out;
    try {
        const auto doc = json::parse(text);
        out.attribute_names = doc.at("attribute_names").get<std::vector<std::string>>();
        out.dim = doc.at("d").get<std::size_t>();
        for (const auto& j : doc.at("models")) {
            AttributeModel m;
            m.attribute = j.at("attribute").get<AttributeIndex>();
            const auto w = j.at("weights").get<std::vector<double>>();
            if (w.size() != out.dim) throw InvalidInput("model file: weights dimension mismatch");
            m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
            m.alpha = j.at("alpha").get<double>();
            m.beta = j.at("beta").get<double>();
            m.gamma = j.at("gamma").get<double>();
            m.delta = j.at("delta").get<double>();
            m.train_violation_rate = j.at("train_violation_rate").get<double>();
            m.calibrated = true;
            if (m.attribute != out.models.size()) throw InvalidInput("model file: models must be ordered by attribute");
            out.models.push_back(std::move(m));
        }
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("model file: ") + e.what());
    }
    if (out.models.size() != out.attribute_names.size()) throw InvalidInput("model file: one model per attribute required");
    return out;
}

void save_models(const ModelSet& models, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write model file " + path.string());
    out << serialize_models(models);
}

ModelSet load_models(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open model file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_models(buffer.str());
}

}  // namespace relsearch

#include "relsearch/active.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace relsearch {

std::string_view to_string(LikelihoodKind kind) {
    switch (kind) {
        case LikelihoodKind::AllRelevant: return "all_relevant";
        case LikelihoodKind::MostRelevant: return "most_relevant";
        case LikelihoodKind::SimilarQuestion: return "similar_question";
    }
    return "most_relevant";
}

LikelihoodKind likelihood_from_string(std::string_view s) {
    if (s == "all_relevant") return LikelihoodKind::AllRelevant;
    if (s == "most_relevant") return LikelihoodKind::MostRelevant;
    if (s == "similar_question") return LikelihoodKind::SimilarQuestion;
    throw InvalidInput("unknown likelihood model '" + std::string(s) + "'");
}

namespace {

// Binary entropy in bits of p = exp(log_p).
inline double binary_entropy_from_log(double log_p) {
    if (log_p >= 0.0) return 0.0;
    const double p = std::exp(log_p);
    const double q = -std::expm1(log_p);
    double h = -p * log_p;
    if (q > 0.0) h -= q * std::log(q);
    return h / std::numbers::ln2;
}

ResponseDistribution clamped(ResponseDistribution probs) {
    for (auto& p : probs) p = std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
    return probs;
}

}  // namespace

double entropy(std::span<const double> log_relevance) {
    double h = 0.0;
    for (double l : log_relevance) h += binary_entropy_from_log(l);
    return h;
}

double entropy(const RelevanceState& state) { return entropy(state.log_relevance); }

ResponseDistribution response_likelihood(const LikelihoodModel& model, const SearchIndex& index, ImageId pivot,
                                         AttributeIndex attribute, const RelevanceState& state) {
    const auto& attr_model = index.models.at(attribute);
    const double a_pivot = index.attribute(pivot, attribute);
    auto kind = model.kind;
    if (kind == LikelihoodKind::SimilarQuestion && state.history.empty()) kind = LikelihoodKind::MostRelevant;

    switch (kind) {
        case LikelihoodKind::MostRelevant: {
            const ImageId best = most_relevant(state);
            return response_probabilities(attr_model, index.attribute(best, attribute), a_pivot);
        }
        case LikelihoodKind::AllRelevant: {
            ResponseDistribution acc{0.0, 0.0, 0.0};
            for (std::size_t i = 0; i < state.size(); ++i) {
                const double relevance = std::exp(state.log_relevance[i]);
                const auto probs = response_probabilities(attr_model, index.attribute(static_cast<ImageId>(i), attribute), a_pivot);
                for (std::size_t r = 0; r < kResponseCount; ++r) acc[r] += relevance * probs[r];
            }
            const double n = static_cast<double>(state.size());
            double total = 0.0;
            for (auto& v : acc) {
                v /= n;
                total += v;
            }
            for (auto& v : acc) v /= total;
            return acc;
        }
        case LikelihoodKind::SimilarQuestion: {
            const Eigen::MatrixXd& tau = model.tau_table ? *model.tau_table : index.attribute_tau;
            const double lambda = model.distance_scale.value_or(index.distance_scale);
            double best_score = -std::numeric_limits<double>::infinity();
            Response answer = Response::Equal;
            for (const auto& past : state.history) {
                const double similarity = tau(attribute, past.attribute) -
                                          lambda * (index.features.row(pivot) - index.features.row(past.ref_image)).norm();
                if (similarity > best_score) {
                    best_score = similarity;
                    answer = past.response;
                }
            }
            ResponseDistribution out{0.0, 0.0, 0.0};
            out[static_cast<std::size_t>(answer)] = 1.0;
            return out;
        }
    }
    return {1.0 / 3, 1.0 / 3, 1.0 / 3};
}

double expected_entropy(const SearchIndex& index, ImageId pivot, AttributeIndex attribute,
                        const LikelihoodModel& model, const RelevanceState& state, ResponseDistribution* likelihood) {
    const auto weights = response_likelihood(model, index, pivot, attribute, state);
    if (likelihood) *likelihood = weights;
    const auto& attr_model = index.models.at(attribute);
    const double a_pivot = index.attribute(pivot, attribute);
    ResponseDistribution per_response{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < state.size(); ++i) {
        const auto probs = clamped(response_probabilities(attr_model, index.attribute(static_cast<ImageId>(i), attribute), a_pivot));
        const double base = state.log_relevance[i];
        for (std::size_t r = 0; r < kResponseCount; ++r) {
            if (weights[r] == 0.0) continue;
            per_response[r] += binary_entropy_from_log(base + std::log(probs[r]));
        }
    }
    double h = 0.0;
    for (std::size_t r = 0; r < kResponseCount; ++r) h += weights[r] * per_response[r];
    return h;
}

CandidateQuestion select_question(const PivotSet& pivots, const LikelihoodModel& model, const SearchIndex& index,
                                  const RelevanceState& state, SelectionStats* stats) {
    std::optional<CandidateQuestion> best;
    for (std::size_t m = 0; m < pivots.cursors.size(); ++m) {
        const auto& cursor = pivots.cursors[m];
        if (!cursor) continue;
        CandidateQuestion q;
        q.attribute = static_cast<AttributeIndex>(m);
        q.pivot_image = index.trees.at(m).node(*cursor).pivot_image;
        q.expected_entropy = expected_entropy(index, q.pivot_image, q.attribute, model, state, &q.response_likelihoods);
        if (stats) ++stats->evaluations;
        if (!best || q.expected_entropy < best->expected_entropy) best = q;
    }
    if (!best) throw SearchExhausted();
    return *best;
}

double kendall_tau(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidInput("kendall_tau: length mismatch");
    const std::size_t n = a.size();
    if (n < 2) throw InvalidInput("kendall_tau: need at least two items");
    long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double da = a[i] - a[j];
            const double db = b[i] - b[j];
            if (da == 0.0 && db == 0.0) continue;
            if (da == 0.0) {
                ++ties_a;
            } else if (db == 0.0) {
                ++ties_b;
            } else if ((da > 0.0) == (db > 0.0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const double n1 = static_cast<double>(concordant + discordant + ties_a);
    const double n2 = static_cast<double>(concordant + discordant + ties_b);
    if (n1 == 0.0 || n2 == 0.0) throw InvalidInput("kendall_tau: zero variance input");
    return static_cast<double>(concordant - discordant) / std::sqrt(n1 * n2);
}

Eigen::MatrixXd attribute_tau_table(const AttributeMatrix& attributes, std::span<const ImageId> validation) {
    const auto m = attributes.cols();
    Eigen::MatrixXd tau = Eigen::MatrixXd::Identity(m, m);
    std::vector<std::vector<double>> cols(static_cast<std::size_t>(m));
    for (Eigen::Index k = 0; k < m; ++k) {
        for (ImageId i : validation) cols[static_cast<std::size_t>(k)].push_back(attributes(i, k));
    }
    for (Eigen::Index p = 0; p < m; ++p) {
        for (Eigen::Index q = p + 1; q < m; ++q) {
            double t = 0.0;
            try {
                t = kendall_tau(cols[static_cast<std::size_t>(p)], cols[static_cast<std::size_t>(q)]);
            } catch (const InvalidInput&) {
                t = 0.0;  // constant attribute: no evidence of similarity
            }
            tau(p, q) = tau(q, p) = t;
        }
    }
    return tau;
}

}  // namespace relsearch

#pragma once

#include "relsearch/index.hpp"
#include "relsearch/pivots.hpp"
#include "relsearch/relevance.hpp"

#include <optional>
#include <span>

namespace relsearch {

// How the user's answer to a not-yet-asked question is predicted.
enum class LikelihoodKind {
    // Relevance-weighted average of every image's response probabilities.
    AllRelevant,
    // Response probabilities of the current most relevant image.
    MostRelevant,
    // Copies the answer of the most similar question already answered.
    SimilarQuestion,
};

std::string_view to_string(LikelihoodKind kind);
LikelihoodKind likelihood_from_string(std::string_view s);

struct LikelihoodModel {
    LikelihoodKind kind = LikelihoodKind::MostRelevant;
    // Attribute similarity; the index's table is used when absent.
    std::optional<Eigen::MatrixXd> tau_table;
    // Weight on pivot feature distance; the index's scale is used when absent.
    std::optional<double> distance_scale;
};

/// Total binary relevance entropy in bits: sum_i H2(exp(log_relevance[i])).
double entropy(std::span<const double> log_relevance);
double entropy(const RelevanceState& state);

/// Predicted {more, less, equal} answer to "is the target <r> than `pivot`
/// on `attribute`?". SimilarQuestion falls back to MostRelevant when there is
/// no history.
ResponseDistribution response_likelihood(const LikelihoodModel& model, const SearchIndex& index, ImageId pivot,
                                         AttributeIndex attribute, const RelevanceState& state);

/// sum_r P(r) * entropy(state + (pivot, attribute, r)). The state is not
/// modified. Writes the response likelihoods used when `likelihood` is set.
double expected_entropy(const SearchIndex& index, ImageId pivot, AttributeIndex attribute,
                        const LikelihoodModel& model, const RelevanceState& state,
                        ResponseDistribution* likelihood = nullptr);

struct CandidateQuestion {
    ImageId pivot_image = 0;
    AttributeIndex attribute = 0;
    double expected_entropy = 0.0;
    ResponseDistribution response_likelihoods{};
};

// Thrown when every attribute tree has been fully explored.
class SearchExhausted : public Error {
public:
    SearchExhausted() : Error("search exhausted: every attribute tree has bottomed out") {}
};

struct SelectionStats {
    std::size_t evaluations = 0;
};

/// Minimizes expected entropy over the live cursor pivots only (at most M
/// evaluations); ties go to the lower attribute index.
CandidateQuestion select_question(const PivotSet& pivots, const LikelihoodModel& model, const SearchIndex& index,
                                  const RelevanceState& state, SelectionStats* stats = nullptr);

/// Kendall tau-b with tie correction, by O(n^2) pair comparison.
double kendall_tau(std::span<const double> a, std::span<const double> b);

/// M x M tau table between the attribute columns over the given images.
Eigen::MatrixXd attribute_tau_table(const AttributeMatrix& attributes, std::span<const ImageId> validation);

}  // namespace relsearch

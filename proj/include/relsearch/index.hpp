#pragma once

#include "relsearch/dataset.hpp"
#include "relsearch/pivots.hpp"
#include "relsearch/ranker.hpp"

#include <optional>
#include <string>
#include <vector>

namespace relsearch {

// Everything a search needs about one dataset. Immutable once built and
// shared read-only by all sessions.
struct SearchIndex {
    std::string name;
    std::vector<std::string> attribute_names;
    FeatureMatrix features;
    // attributes(i, m) = predicted strength of attribute m in image i.
    AttributeMatrix attributes;
    std::vector<AttributeModel> models;
    // Per-attribute band inside which two strengths count as "equal".
    std::vector<double> equal_thresholds;
    std::vector<AttributeTree> trees;
    // Kendall tau between attribute rankings on a validation subset (M x M).
    Eigen::MatrixXd attribute_tau;
    // Scale for feature distances when comparing questions.
    double distance_scale = 1.0;
    std::vector<std::optional<std::string>> asset_paths;
    std::vector<std::optional<std::uint32_t>> class_ids;

    std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
    std::size_t num_attributes() const { return models.size(); }
    double attribute(ImageId image, AttributeIndex m) const { return attributes(image, m); }
};

struct IndexOptions {
    // Validation subset size for the attribute tau table.
    std::size_t tau_validation_size = 200;
    std::uint64_t seed = 7;
};

/// Predicts attribute values, derives equality thresholds from the EQUAL
/// labels, builds one pivot tree per attribute (unless `trees` is given) and
/// the attribute similarity table.
SearchIndex build_index(const DatasetManifest& manifest, const ModelSet& models,
                        std::optional<std::vector<AttributeTree>> trees = std::nullopt,
                        const IndexOptions& options = {});

/// 1 / median pairwise feature distance over a seeded sample of pairs.
double median_distance_scale(const FeatureMatrix& features, std::uint64_t seed, std::size_t samples = 2000);

}  // namespace relsearch

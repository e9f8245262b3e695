#pragma once

#include "relsearch/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace relsearch {

struct ImageRecord {
    ImageId id = 0;
    std::vector<double> features;
    std::optional<std::uint32_t> class_id;
    std::optional<std::string> asset_path;

    bool operator==(const ImageRecord&) const = default;
};

// Strength of `attribute` in image `first` relative to image `second`.
struct ComparisonLabel {
    AttributeIndex attribute = 0;
    ImageId first = 0;
    ImageId second = 0;
    Response relation = Response::More;
    int confidence = 2;  // 1..3

    bool operator==(const ComparisonLabel&) const = default;
};

// class_orders[m][c] is the rank of class c on attribute m (1 = least).
using ClassOrders = std::vector<std::vector<int>>;

struct DatasetManifest {
    std::string name;
    std::size_t num_images = 0;
    std::size_t dim = 0;
    std::size_t num_attributes = 0;
    std::vector<std::string> attribute_names;
    std::vector<ImageRecord> images;
    std::vector<ComparisonLabel> comparisons;
    std::optional<ClassOrders> class_orders;

    bool operator==(const DatasetManifest&) const = default;

    FeatureMatrix feature_matrix() const;
};

/// Throws InvalidInput if any manifest invariant is broken. The message names
/// the offending field, e.g. "comparisons[3].second: dangling id 99".
void validate(const DatasetManifest& manifest);

DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(const std::string& text);
std::string serialize_manifest(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct SynthConfig {
    std::size_t num_images = 2000;
    std::size_t dim = 10;
    std::size_t num_attributes = 6;
    std::size_t num_classes = 10;
    std::size_t pairs_per_attribute = 500;
    // Probability min(0.5, noise_sd) of flipping a MORE/LESS label.
    double noise_sd = 0.0;
    // Per-image latent jitter around the class rank, in class-rank units.
    double jitter_sd = 1.0;
    // EQUAL band as a fraction of jitter_sd.
    double equal_band_fraction = 0.25;
    std::uint64_t seed = 1;
    // When absent: the shoe table rows if num_classes == 10 and
    // num_attributes <= 10, otherwise a seeded random permutation per attribute.
    std::optional<ClassOrders> class_orders;
    std::vector<std::string> attribute_names;
};

struct SynthResult {
    DatasetManifest manifest;
    // Debug side channel: latent[m][i] is the true strength of attribute m in image i.
    std::vector<std::vector<double>> latent;
};

SynthResult synthesize_dataset(const SynthConfig& config);

/// Class ordering of the ten shoe categories (Athletic, Boots, Clogs, Flats,
/// Heels, Pumps, Rain Boots, Sneakers, Stiletto, Wedding) on ten attributes.
const ClassOrders& shoe_class_orders();
const std::vector<std::string>& shoe_attribute_names();

// One annotator vote on a pair; several votes per (attribute, first, second).
struct RawVote {
    AttributeIndex attribute = 0;
    ImageId first = 0;
    ImageId second = 0;
    Response relation = Response::More;
    int confidence = 2;
};

/// Collapses redundant votes into labels: a pair is kept when at least
/// `min_agree` votes share the same relation. Votes on (j, i) are mirrored onto
/// (i, j). Confidence is the rounded mean over the agreeing votes.
std::vector<ComparisonLabel> aggregate_majority(const std::vector<RawVote>& votes,
                                                int min_agree = 3);

}  // namespace relsearch

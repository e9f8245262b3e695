#pragma once

#include "relsearch/active.hpp"
#include "relsearch/dataset.hpp"
#include "relsearch/eval.hpp"
#include "relsearch/index.hpp"
#include "relsearch/relevance.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace relsearch {

enum class Policy {
    // Entropy-minimizing question among the current attribute-tree pivots.
    ActivePivots,
    // Attribute-tree pivots, attributes visited in a shuffled round-robin.
    PivotsRoundRobin,
    // Entropy-minimizing question over every (image, attribute) pair.
    ActiveExhaustive,
    // Most relevant image paired with a random attribute.
    Top,
    // Random image paired with a random attribute.
    Passive,
    // Binary similar/dissimilar question on the image with SVM decision nearest 0.
    BinaryActive,
    // Binary question on a random image.
    BinaryPassive,
    // User picks statements about the top-ranked page (free-form relative feedback).
    WhittleFree,
    // User labels the top and bottom quartile of the top-ranked page as similar/dissimilar.
    BinaryFree,
};

std::string_view to_string(Policy p);
Policy policy_from_string(std::string_view s);
bool is_binary(Policy p);

struct EpisodeConfig {
    std::size_t iterations = 10;
    LikelihoodModel likelihood;
    std::size_t k_page = 40;
    std::size_t k_ndcg = 50;
    // Simulated noise SD as a fraction of each attribute's predicted-value SD.
    double noise_fraction = 0.1;
    // Reference images shown per round in the free-form protocols.
    std::size_t reference_pool = 16;
    std::size_t statements_per_iteration = 8;
    RankingMode free_ranking = RankingMode::Counting;
    bool confidence_weighting = true;
    // Rank binary baselines by |decision| instead of the signed decision value.
    bool binary_magnitude = false;
    std::size_t binary_init_pool = 40;
    double svm_C = 1.0;
    std::size_t exhaustive_max_images = 2000;
    DistanceWeights gt_weights;
};

struct EpisodeRecord {
    std::size_t iteration = 0;
    double percentile_rank = 0.0;
    double ndcg = 0.0;
    // NaN for binary policies, which keep no relevance distribution.
    double entropy = 0.0;
    double selection_seconds = 0.0;
    std::size_t constraints = 0;
    // Fraction of the top 10 closer to the target than its 1st-percentile distance.
    double very_similar_top10 = 0.0;
};

struct AskedQuestion {
    ImageId image = 0;
    AttributeIndex attribute = 0;
};

struct EpisodeResult {
    std::vector<EpisodeRecord> records;
    std::vector<AskedQuestion> questions;
    std::vector<FeedbackConstraint> constraints;
    // Set when the policy ran out of questions before the last iteration.
    bool exhausted_early = false;
};

/// Runs one simulated search for `target`. Every policy started with the same
/// seed sees the same initial feedback: one random relative constraint for
/// the attribute policies, a peeked positive/negative pair for the binary
/// question policies and the same random first page for the free-form ones.
EpisodeResult run_episode(Policy policy, const SearchIndex& index, const GroundTruthMetric& metric, ImageId target,
                          const EpisodeConfig& config, std::uint64_t seed);

struct ExperimentConfig {
    std::vector<Policy> policies;
    std::size_t queries = 200;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    EpisodeConfig episode;
};

struct AggregateRow {
    Policy policy = Policy::ActivePivots;
    std::size_t iteration = 0;
    std::size_t count = 0;
    double mean_percentile = 0.0;
    double median_percentile = 0.0;
    double sd_percentile = 0.0;
    double mean_ndcg = 0.0;
    double mean_entropy = 0.0;
    double mean_selection_seconds = 0.0;
    double mean_very_similar = 0.0;
};

struct ExperimentResult {
    std::vector<ImageId> targets;
    std::vector<AggregateRow> rows;
    // final_percentile[policy][q] for query q, for paired comparisons.
    std::map<Policy, std::vector<double>> final_percentile;
    std::map<Policy, std::vector<double>> final_ndcg;
    std::map<Policy, std::size_t> exhausted_early;
    std::map<Policy, std::size_t> failures;
};

/// Seeded target list shared by all policies; episodes that end early carry
/// their last record forward so every curve spans 0..T.
ExperimentResult run_experiment(const SearchIndex& index, const ExperimentConfig& config);

std::string results_csv(const ExperimentResult& result);
std::string plot_data_json(const ExperimentResult& result);

/// Paired comparison of final percentile ranks: (mean a - mean b, sign-test p).
std::pair<double, double> compare_policies(const ExperimentResult& result, Policy a, Policy b);

// Where the data for an experiment comes from.
struct DataSource {
    std::optional<std::filesystem::path> dataset_path;
    std::optional<SynthConfig> synthetic;
    std::optional<std::filesystem::path> model_path;
    std::optional<std::filesystem::path> index_path;
    TrainConfig train;
};

struct ExperimentFile {
    DataSource data;
    ExperimentConfig experiment;
};

ExperimentFile parse_experiment_config(const std::string& text);
ExperimentFile load_experiment_config(const std::filesystem::path& path);

/// Loads or synthesizes the dataset, trains (or loads) models and builds the index.
SearchIndex prepare_index(const DataSource& source);

SynthConfig synth_config_from_json(const std::string& text);

}  // namespace relsearch

#include "relsearch/index.hpp"

#include "relsearch/active.hpp"
#include "relsearch/simuser.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace relsearch {

double median_distance_scale(const FeatureMatrix& features, std::uint64_t seed, std::size_t samples) {
    const auto n = static_cast<std::size_t>(features.rows());
    if (n < 2) return 1.0;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> dists;
    dists.reserve(samples);
    for (std::size_t s = 0; s < samples; ++s) {
        const auto i = pick(rng);
        auto j = pick(rng);
        while (j == i) j = pick(rng);
        dists.push_back((features.row(static_cast<Eigen::Index>(i)) - features.row(static_cast<Eigen::Index>(j))).norm());
    }
    auto mid = dists.begin() + static_cast<long>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    return *mid > 0.0 ? 1.0 / *mid : 1.0;
}

SearchIndex build_index(const DatasetManifest& manifest, const ModelSet& models,
                        std::optional<std::vector<AttributeTree>> trees, const IndexOptions& options) {
    validate(manifest);
    if (models.dim != manifest.dim) throw InvalidInput("index: model dimension does not match the dataset");
    if (models.models.size() != manifest.num_attributes) throw InvalidInput("index: model count does not match the dataset");

    SearchIndex index;
    index.name = manifest.name;
    index.attribute_names = manifest.attribute_names;
    index.features = manifest.feature_matrix();
    index.models = models.models;
    index.attributes = predict_all(models, index.features);
    index.equal_thresholds = equal_thresholds(manifest, index.attributes);

    if (trees) {
        if (trees->size() != manifest.num_attributes) throw InvalidInput("index: one tree per attribute required");
        for (const auto& t : *trees) {
            if (t.size() != manifest.num_images) throw InvalidInput("index: tree does not cover every image");
            for (const auto& node : t.nodes()) {
                if (node.pivot_image >= manifest.num_images) throw InvalidInput("index: tree references an unknown image");
            }
        }
        index.trees = std::move(*trees);
    } else {
        for (Eigen::Index m = 0; m < index.attributes.cols(); ++m) {
            const Eigen::VectorXd col = index.attributes.col(m);
            index.trees.push_back(build_tree(std::span<const double>(col.data(), static_cast<std::size_t>(col.size()))));
        }
    }

    std::vector<ImageId> ids(manifest.num_images);
    std::iota(ids.begin(), ids.end(), ImageId{0});
    std::mt19937_64 rng(options.seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(std::min(ids.size(), options.tau_validation_size));
    index.attribute_tau = ids.size() >= 2 ? attribute_tau_table(index.attributes, ids)
                                          : Eigen::MatrixXd::Identity(index.attributes.cols(), index.attributes.cols());
    index.distance_scale = median_distance_scale(index.features, options.seed);

    for (const auto& rec : manifest.images) {
        index.asset_paths.push_back(rec.asset_path);
        index.class_ids.push_back(rec.class_id);
    }
    return index;
}

}  // namespace relsearch

#include "relsearch/dataset.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>

using namespace relsearch;

namespace {

const char* kMinimal = R"({
  "name": "tiny", "N": 2, "d": 2, "M": 1, "attribute_names": ["pointy"],
  "images": [{"id": 0, "features": [0.0, 1.0]}, {"id": 1, "features": [1.0, 0.5], "class_id": 0, "asset_path": "b.png"}],
  "comparisons": [{"attribute": 0, "first": 1, "second": 0, "relation": "more", "confidence": 3}]
})";

std::string error_of(const std::string& text) {
    try {
        parse_manifest(text);
    } catch (const InvalidInput& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("minimal manifest parses") {
    const auto m = parse_manifest(kMinimal);
    CHECK(m.num_images == 2);
    CHECK(m.dim == 2);
    CHECK(m.images[1].asset_path == std::optional<std::string>("b.png"));
    CHECK(m.comparisons[0].relation == Response::More);
    CHECK(m.comparisons[0].confidence == 3);
}

TEST_CASE("manifest errors name the offending field") {
    std::string bad_dim = kMinimal;
    bad_dim.replace(bad_dim.find("[1.0, 0.5]"), 10, "[1.0, 0.5, 2.0]");
    const auto dim_error = error_of(bad_dim);
    CHECK(dim_error.find("images[1].features") != std::string::npos);
    CHECK(dim_error.find("dimension mismatch") != std::string::npos);

    std::string dangling = kMinimal;
    dangling.replace(dangling.find("\"second\": 0"), 11, "\"second\": 99");
    const auto dangling_error = error_of(dangling);
    CHECK(dangling_error.find("comparisons[0].second") != std::string::npos);
    CHECK(dangling_error.find("dangling id 99") != std::string::npos);

    const auto syntax = error_of("{\n\"name\": \"x\",\n oops }");
    CHECK(syntax.find("line 3") != std::string::npos);

    std::string self = kMinimal;
    self.replace(self.find("\"first\": 1"), 10, "\"first\": 0");
    CHECK(error_of(self).find("must differ") != std::string::npos);
}

TEST_CASE("response strings") {
    CHECK(response_from_string("more") == Response::More);
    CHECK(response_from_string("less") == Response::Less);
    CHECK(response_from_string("equal") == Response::Equal);
    CHECK(response_from_string("equally") == Response::Equal);
    CHECK_THROWS_AS(response_from_string("sideways"), InvalidInput);
}

TEST_CASE("save and load round-trip") {
    SynthConfig cfg;
    cfg.num_images = 50;
    cfg.pairs_per_attribute = 20;
    cfg.noise_sd = 0.1;
    const auto m = synthesize_dataset(cfg).manifest;
    const auto path = std::filesystem::temp_directory_path() / "relsearch_roundtrip.json";
    save_manifest(m, path);
    CHECK(load_manifest(path) == m);
    std::filesystem::remove(path);
}

TEST_CASE("synthesis is deterministic and noiseless labels follow the latents") {
    SynthConfig cfg;
    cfg.num_images = 300;
    cfg.pairs_per_attribute = 200;
    const auto a = synthesize_dataset(cfg);
    const auto b = synthesize_dataset(cfg);
    CHECK(serialize_manifest(a.manifest) == serialize_manifest(b.manifest));

    const double band = cfg.equal_band_fraction * cfg.jitter_sd;
    std::size_t equal = 0;
    for (const auto& c : a.manifest.comparisons) {
        const double li = a.latent[c.attribute][c.first];
        const double lj = a.latent[c.attribute][c.second];
        if (c.relation == Response::More) CHECK(li > lj);
        if (c.relation == Response::Less) CHECK(li < lj);
        if (c.relation == Response::Equal) {
            CHECK(std::abs(li - lj) < band);
            ++equal;
        }
    }
    CHECK(equal > 0);
    // Features 0..M-1 are the standardized latents.
    for (std::size_t m = 0; m < cfg.num_attributes; ++m) {
        double mean = 0.0;
        for (const auto& img : a.manifest.images) mean += img.features[m];
        CHECK(mean / 300.0 == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("class means follow the class orders") {
    SynthConfig cfg;
    cfg.num_images = 600;
    cfg.num_classes = 3;
    cfg.num_attributes = 1;
    cfg.dim = 2;
    cfg.class_orders = ClassOrders{{1, 2, 3}};
    const auto r = synthesize_dataset(cfg);
    std::vector<double> sum(3, 0.0), count(3, 0.0);
    for (const auto& img : r.manifest.images) {
        sum[*img.class_id] += r.latent[0][img.id];
        count[*img.class_id] += 1.0;
    }
    CHECK(sum[2] / count[2] > sum[0] / count[0]);
    CHECK(sum[1] / count[1] > sum[0] / count[0]);

    // Zero jitter: class-mean latents reproduce the ranks exactly.
    cfg.jitter_sd = 0.0;
    const auto exact = synthesize_dataset(cfg);
    for (const auto& img : exact.manifest.images) {
        CHECK(exact.latent[0][img.id] == static_cast<double>((*cfg.class_orders)[0][*img.class_id]));
    }
}

TEST_CASE("label noise flips only ordered labels") {
    SynthConfig clean;
    clean.num_images = 200;
    clean.pairs_per_attribute = 300;
    SynthConfig noisy = clean;
    noisy.noise_sd = 0.3;
    const auto a = synthesize_dataset(clean).manifest;
    const auto b = synthesize_dataset(noisy).manifest;
    REQUIRE(a.comparisons.size() == b.comparisons.size());
    std::size_t flipped = 0, ordered = 0;
    for (std::size_t k = 0; k < a.comparisons.size(); ++k) {
        CHECK(a.comparisons[k].first == b.comparisons[k].first);
        if (a.comparisons[k].relation == Response::Equal) {
            CHECK(b.comparisons[k].relation == Response::Equal);
            continue;
        }
        ++ordered;
        if (a.comparisons[k].relation != b.comparisons[k].relation) ++flipped;
    }
    const double rate = static_cast<double>(flipped) / static_cast<double>(ordered);
    CHECK(rate == doctest::Approx(0.3).epsilon(0.2));
}

TEST_CASE("synthesis rejects invalid bounds") {
    SynthConfig cfg;
    cfg.num_images = 5;
    CHECK_THROWS_AS(synthesize_dataset(cfg), InvalidInput);
    cfg = SynthConfig{};
    cfg.dim = 3;
    CHECK_THROWS_AS(synthesize_dataset(cfg), InvalidInput);
}

TEST_CASE("shoe class table is a ranking per attribute") {
    const auto& orders = shoe_class_orders();
    REQUIRE(orders.size() == 10);
    for (const auto& row : orders) {
        REQUIRE(row.size() == 10);
        for (int v : row) {
            CHECK(v >= 1);
            CHECK(v <= 10);
        }
    }
    CHECK(shoe_attribute_names().size() == 10);
}

TEST_CASE("majority aggregation keeps pairs with three agreeing votes") {
    std::vector<RawVote> votes;
    for (int k = 0; k < 3; ++k) votes.push_back({0, 1, 2, Response::More, 3});
    votes.push_back({0, 2, 1, Response::More, 2});  // mirrored: 1 less than 2
    votes.push_back({0, 1, 2, Response::Equal, 2});
    for (int k = 0; k < 2; ++k) votes.push_back({0, 3, 4, Response::Less, 2});
    const auto labels = aggregate_majority(votes);
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].first == 1);
    CHECK(labels[0].second == 2);
    CHECK(labels[0].relation == Response::More);
    CHECK(labels[0].confidence == 3);
}

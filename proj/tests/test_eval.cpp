#include "relsearch/eval.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace relsearch;
using namespace testsupport;

namespace {

// Two-sided sign test from Pascal's triangle.
double pascal_sign_test(std::size_t wins, std::size_t losses) {
    const std::size_t n = wins + losses;
    std::vector<double> row{1.0};
    for (std::size_t r = 0; r < n; ++r) {
        std::vector<double> next(row.size() + 1, 0.0);
        for (std::size_t i = 0; i < row.size(); ++i) {
            next[i] += row[i];
            next[i + 1] += row[i];
        }
        row = std::move(next);
    }
    double tail = 0.0;
    for (std::size_t i = 0; i <= std::min(wins, losses); ++i) tail += row[i];
    return std::min(1.0, 2.0 * tail / std::pow(2.0, static_cast<double>(n)));
}

}  // namespace

TEST_CASE("ndcg of the ideal ordering is one") {
    const std::vector<double> rel{0.2, 0.9, 0.5, 0.0, 0.7};
    std::vector<ImageId> ideal(5);
    std::iota(ideal.begin(), ideal.end(), ImageId{0});
    std::sort(ideal.begin(), ideal.end(), [&](ImageId a, ImageId b) { return rel[a] > rel[b]; });
    for (std::size_t k = 1; k <= 5; ++k) CHECK(ndcg_at_k(ideal, rel, k) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("ndcg on three items by hand") {
    const std::vector<double> rel{1.0, 0.5, 0.0};
    const std::vector<ImageId> reversed{2, 1, 0};
    const double g1 = 1.0, g05 = std::sqrt(2.0) - 1.0;
    const double dcg = 0.0 / std::log2(2.0) + g05 / std::log2(3.0) + g1 / std::log2(4.0);
    const double idcg = g1 / std::log2(2.0) + g05 / std::log2(3.0) + 0.0 / std::log2(4.0);
    CHECK(std::abs(ndcg_at_k(reversed, rel, 3) - dcg / idcg) <= 1e-12);
    const std::vector<ImageId> swapped{1, 0, 2};
    const double dcg2 = g05 / std::log2(2.0) + g1 / std::log2(3.0);
    CHECK(std::abs(ndcg_at_k(swapped, rel, 3) - dcg2 / idcg) <= 1e-12);
    CHECK(std::abs(ndcg_at_k(swapped, rel, 1) - g05 / g1) <= 1e-12);
}

TEST_CASE("ndcg ignores zero-relevance items below the cutoff") {
    const std::vector<double> rel{0.8, 0.4, 0.0, 0.0, 0.0};
    const std::vector<ImageId> a{1, 0, 2, 3, 4};
    const std::vector<ImageId> b{1, 0, 4, 2, 3};
    CHECK(ndcg_at_k(a, rel, 5) == ndcg_at_k(b, rel, 5));
    const std::vector<double> zero(3, 0.0);
    const std::vector<ImageId> any{0, 1, 2};
    CHECK_THROWS_AS(ndcg_at_k(any, zero, 2), InvalidInput);
    CHECK_THROWS_AS(ndcg_at_k(any, rel, 6), InvalidInput);
}

TEST_CASE("ground truth ranks the target first") {
    const auto index = random_index(80, 3, 13, 6);
    const GroundTruthMetric metric(index);
    const auto gt = ground_truth_for(metric, 17);
    CHECK(gt.distances[17] == 0.0);
    CHECK(gt.ranking.front() == 17);
    CHECK(gt.graded_relevance[17] == doctest::Approx(79.0 / 80.0));
    for (std::size_t k = 1; k < 80; ++k) CHECK(gt.distances[gt.ranking[k - 1]] <= gt.distances[gt.ranking[k]]);
    auto sorted = gt.ranking;
    std::sort(sorted.begin(), sorted.end());
    for (ImageId i = 0; i < 80; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("feature-only weights give the plain feature ranking") {
    const auto index = random_index(60, 2, 21, 5);
    const GroundTruthMetric metric(index, {1.0, 0.0});
    const auto gt = ground_truth_for(metric, 4);
    std::vector<double> plain(60);
    for (int i = 0; i < 60; ++i) plain[i] = (index.features.row(i) - index.features.row(4)).norm();
    std::vector<ImageId> expected(60);
    std::iota(expected.begin(), expected.end(), ImageId{0});
    std::stable_sort(expected.begin(), expected.end(), [&](ImageId a, ImageId b) { return plain[a] < plain[b]; });
    CHECK(gt.ranking == expected);
    CHECK_THROWS_AS(GroundTruthMetric(index, {0.0, 0.0}), InvalidInput);
}

TEST_CASE("same-class images dominate the ground-truth top 10") {
    SynthConfig cfg;
    cfg.num_images = 600;
    cfg.pairs_per_attribute = 200;
    const auto data = synthesize_dataset(cfg);
    const auto models = train_models(data.manifest, {});
    const auto index = build_index(data.manifest, models, {});
    const GroundTruthMetric metric(index);
    double share = 0.0;
    for (ImageId t = 0; t < 50; ++t) {
        const auto gt = ground_truth_for(metric, t);
        int same = 0;
        for (std::size_t k = 1; k <= 10; ++k) same += index.class_ids[gt.ranking[k]] == index.class_ids[t];
        share += same / 10.0;
    }
    CHECK(share / 50.0 > 0.5);
}

TEST_CASE("linear svm separates two clouds") {
    auto f = random_features(200, 3, 7);
    std::vector<ImageId> pos, neg;
    for (ImageId i = 0; i < 200; ++i) {
        if (i % 2) {
            f(i, 0) += 4.0;
            pos.push_back(i);
        } else {
            f(i, 0) -= 4.0;
            neg.push_back(i);
        }
    }
    const auto svm = train_binary_svm(f, pos, neg);
    int errors = 0;
    for (ImageId i : pos) errors += svm.decision(f.row(i)) <= 0.0;
    for (ImageId i : neg) errors += svm.decision(f.row(i)) >= 0.0;
    CHECK(errors <= 2);
    CHECK(svm.weights[0] > 0.0);

    // One positive and one negative: the midpoint sits near the boundary.
    FeatureMatrix two(2, 1);
    two << 1.0, -1.0;
    const std::vector<ImageId> p{0}, n{1};
    const auto s = train_binary_svm(two, p, n, 10.0);
    CHECK(s.decision(two.row(0)) > 0.0);
    CHECK(s.decision(two.row(1)) < 0.0);
    CHECK_THROWS_AS(train_binary_svm(two, std::vector<ImageId>{}, n), InvalidInput);
}

TEST_CASE("sign test") {
    const std::vector<double> same{1, 2, 3};
    CHECK(sign_test_p_value(same, same) == 1.0);
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> coin(0, 2);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> a(40), b(40);
        std::size_t wins = 0, losses = 0;
        for (int i = 0; i < 40; ++i) {
            a[i] = coin(rng);
            b[i] = coin(rng);
            wins += a[i] > b[i];
            losses += a[i] < b[i];
        }
        CHECK(sign_test_p_value(a, b) == doctest::Approx(pascal_sign_test(wins, losses)).epsilon(1e-10));
    }
    // Ten wins, no losses: 2 / 2^10.
    const std::vector<double> hi(10, 1.0), lo(10, 0.0);
    CHECK(sign_test_p_value(hi, lo) == doctest::Approx(2.0 / 1024.0).epsilon(1e-12));
    CHECK_THROWS_AS(sign_test_p_value(hi, same), InvalidInput);
}

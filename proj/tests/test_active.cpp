#include "relsearch/active.hpp"

#include "support.hpp"

#include <doctest.h>

#include <map>
#include <numeric>
#include <random>

using namespace relsearch;
using namespace testsupport;

namespace {

std::vector<FeedbackConstraint> random_history(const SearchIndex& index, std::size_t length, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> image(0, index.size() - 1);
    std::uniform_int_distribution<std::size_t> attr(0, index.num_attributes() - 1);
    std::uniform_int_distribution<int> resp(0, 2);
    std::vector<FeedbackConstraint> out;
    for (std::size_t k = 0; k < length; ++k) {
        out.push_back({static_cast<ImageId>(image(rng)), static_cast<AttributeIndex>(attr(rng)),
                       static_cast<Response>(resp(rng)), k % 3 == 0 ? 2.0 : 1.0});
    }
    return out;
}

// Tau-b from sign products and tie-group sizes.
double tau_by_groups(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double da = (a[i] > a[j]) - (a[i] < a[j]);
            const double db = (b[i] > b[j]) - (b[i] < b[j]);
            s += da * db;
        }
    }
    auto tied = [](const std::vector<double>& v) {
        std::map<double, double> groups;
        for (double x : v) groups[x] += 1.0;
        double t = 0.0;
        for (const auto& [value, count] : groups) t += count * (count - 1.0) / 2.0;
        return t;
    };
    const double n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
    return s / std::sqrt((n0 - tied(a)) * (n0 - tied(b)));
}

}  // namespace

TEST_CASE("entropy in bits") {
    const std::vector<double> half(10, std::log(0.5));
    CHECK(entropy(half) == doctest::Approx(10.0).epsilon(1e-12));
    const std::vector<double> certain{0.0, 0.0, -1e6};
    CHECK(entropy(certain) == doctest::Approx(0.0));

    const auto index = random_index(30, 3, 14);
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const auto history = random_history(index, 6, rng);
        const auto state = rebuild_relevance(index, history);
        CHECK(std::abs(entropy(state) - oracle_entropy(oracle_relevance(index, history))) <= 1e-9);
    }
}

TEST_CASE("likelihood strings") {
    for (auto k : {LikelihoodKind::AllRelevant, LikelihoodKind::MostRelevant, LikelihoodKind::SimilarQuestion}) {
        CHECK(likelihood_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(likelihood_from_string("psychic"), InvalidInput);
}

TEST_CASE("most relevant likelihood") {
    const auto index = random_index(20, 2, 5);
    const std::vector<FeedbackConstraint> history{{3, 0, Response::More, 1.0}, {8, 1, Response::Less, 2.0}};
    const auto state = rebuild_relevance(index, history);
    const ImageId best = most_relevant(state);
    LikelihoodModel model;
    const auto got = response_likelihood(model, index, 11, 1, state);
    const auto expected = response_probabilities(index.models[1], index.attribute(best, 1), index.attribute(11, 1));
    CHECK(got == expected);

    // Asking about the best guess itself: "equally" dominates.
    const auto self = response_likelihood(model, index, best, 0, state);
    CHECK(self[2] > self[0]);
    CHECK(self[2] > self[1]);
}

TEST_CASE("similar question likelihood copies the closest answer") {
    const auto index = random_index(20, 3, 7);
    LikelihoodModel model;
    model.kind = LikelihoodKind::SimilarQuestion;
    const std::vector<FeedbackConstraint> history{{4, 2, Response::Less, 1.0}, {9, 1, Response::More, 1.0}};
    const auto state = rebuild_relevance(index, history);
    const auto got = response_likelihood(model, index, 9, 1, state);
    CHECK(got == ResponseDistribution{1.0, 0.0, 0.0});
    const auto other = response_likelihood(model, index, 4, 2, state);
    CHECK(other == ResponseDistribution{0.0, 1.0, 0.0});

    // No history: falls back to the most relevant image.
    const auto cold = RelevanceState::initial(20);
    LikelihoodModel most;
    CHECK(response_likelihood(model, index, 2, 0, cold) == response_likelihood(most, index, 2, 0, cold));
}

TEST_CASE("all relevant likelihood matches direct summation") {
    const auto index = random_index(35, 3, 19);
    std::mt19937_64 rng(3);
    LikelihoodModel model;
    model.kind = LikelihoodKind::AllRelevant;
    for (int trial = 0; trial < 10; ++trial) {
        const auto history = random_history(index, 4, rng);
        const auto state = rebuild_relevance(index, history);
        const ImageId pivot = static_cast<ImageId>(trial * 3);
        const auto m = static_cast<AttributeIndex>(trial % 3);
        const auto got = response_likelihood(model, index, pivot, m, state);
        const auto expected = oracle_likelihood(LikelihoodKind::AllRelevant, index, pivot, m, history);
        CHECK(std::abs(got[0] + got[1] + got[2] - 1.0) <= 1e-9);
        for (std::size_t r = 0; r < 3; ++r) CHECK(std::abs(got[r] - expected[r]) <= 1e-9);
    }
}

TEST_CASE("expected entropy matches brute force and leaves the state alone") {
    const auto index = random_index(40, 3, 23);
    std::mt19937_64 rng(12);
    for (auto kind : {LikelihoodKind::MostRelevant, LikelihoodKind::AllRelevant}) {
        LikelihoodModel model;
        model.kind = kind;
        for (int trial = 0; trial < 8; ++trial) {
            const auto history = random_history(index, 5, rng);
            const auto state = rebuild_relevance(index, history);
            const auto snapshot = state;
            const ImageId pivot = static_cast<ImageId>(5 * trial);
            const auto m = static_cast<AttributeIndex>(trial % 3);
            ResponseDistribution likelihood{};
            const double h = expected_entropy(index, pivot, m, model, state, &likelihood);
            CHECK(state == snapshot);
            CHECK(std::abs(h - oracle_expected_entropy(kind, index, pivot, m, history)) <= 1e-9);
            double lo = 1e300, hi = -1e300;
            for (int r = 0; r < 3; ++r) {
                const auto next = update_relevance(state, index, {pivot, m, static_cast<Response>(r), 1.0});
                lo = std::min(lo, entropy(next));
                hi = std::max(hi, entropy(next));
            }
            CHECK(h >= lo - 1e-9);
            CHECK(h <= hi + 1e-9);
        }
    }
}

TEST_CASE("selection picks the informative attribute") {
    // Attribute 0 is steep and splits the images; attribute 1 answers at random.
    FeatureMatrix f(30, 2);
    for (int i = 0; i < 30; ++i) {
        f(i, 0) = static_cast<double>(i);
        f(i, 1) = static_cast<double>((7 * i) % 30);
    }
    auto index = make_index(f, 2, -40.0, 40.0, -2.0);
    index.models[1].alpha = 0.0;
    index.models[1].gamma = 0.0;
    index.models[1].delta = 0.0;
    const auto pivots = PivotSet::at_roots(index.trees);
    const auto state = RelevanceState::initial(30);
    SelectionStats stats;
    const auto q = select_question(pivots, LikelihoodModel{}, index, state, &stats);
    CHECK(q.attribute == 0);
    CHECK(q.pivot_image == index.trees[0].root().pivot_image);
    CHECK(stats.evaluations == 2);
    const auto oracle = oracle_select(LikelihoodKind::MostRelevant, index, pivots, {});
    REQUIRE(oracle);
    CHECK(oracle->attribute == 0);
    CHECK(std::abs(oracle->expected_entropy - q.expected_entropy) <= 1e-9);
}

TEST_CASE("selection equals the brute-force argmin over live cursors") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 15; ++trial) {
        const auto index = random_index(30 + trial, 4, 100 + static_cast<std::uint64_t>(trial));
        const auto history = random_history(index, 3, rng);
        const auto state = rebuild_relevance(index, history);
        auto pivots = PivotSet::at_roots(index.trees);
        // Walk a couple of cursors down and exhaust one.
        pivots = descend(pivots, index.trees, 0, Response::More);
        pivots = descend(pivots, index.trees, 1, Response::Less);
        pivots = descend(pivots, index.trees, 3, Response::Equal);
        SelectionStats stats;
        const auto q = select_question(pivots, LikelihoodModel{}, index, state, &stats);
        const auto oracle = oracle_select(LikelihoodKind::MostRelevant, index, pivots, history);
        REQUIRE(oracle);
        CHECK(q.attribute == oracle->attribute);
        CHECK(q.pivot_image == oracle->pivot);
        CHECK(std::abs(q.expected_entropy - oracle->expected_entropy) <= 1e-9);
        CHECK(stats.evaluations <= index.num_attributes());
        CHECK(stats.evaluations == pivots.live_count());
        CHECK(std::abs(q.response_likelihoods[0] + q.response_likelihoods[1] + q.response_likelihoods[2] - 1.0) <= 1e-9);
    }
}

TEST_CASE("single attribute and exhaustion") {
    const auto index = random_index(15, 1, 2);
    auto pivots = PivotSet::at_roots(index.trees);
    const auto q = select_question(pivots, LikelihoodModel{}, index, RelevanceState::initial(15));
    CHECK(q.attribute == 0);
    CHECK(q.pivot_image == index.trees[0].root().pivot_image);
    pivots = descend(pivots, index.trees, 0, Response::Equal);
    CHECK_THROWS_AS(select_question(pivots, LikelihoodModel{}, index, RelevanceState::initial(15)), SearchExhausted);
}

TEST_CASE("kendall tau") {
    const std::vector<double> a{1, 2, 3, 4, 5};
    const std::vector<double> rev{5, 4, 3, 2, 1};
    CHECK(kendall_tau(a, a) == 1.0);
    CHECK(kendall_tau(a, rev) == -1.0);
    CHECK_THROWS_AS(kendall_tau(std::vector<double>{1.0}, std::vector<double>{1.0}), InvalidInput);
    CHECK_THROWS_AS(kendall_tau(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), InvalidInput);

    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> small(0, 9);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(50), y(50);
        std::iota(x.begin(), x.end(), 0.0);
        std::iota(y.begin(), y.end(), 0.0);
        std::shuffle(x.begin(), x.end(), rng);
        std::shuffle(y.begin(), y.end(), rng);
        CHECK(kendall_tau(x, y) == doctest::Approx(tau_by_groups(x, y)).epsilon(1e-12));
        // With ties.
        for (auto& v : x) v = small(rng);
        for (auto& v : y) v = small(rng);
        CHECK(kendall_tau(x, y) == doctest::Approx(tau_by_groups(x, y)).epsilon(1e-12));
    }
}

TEST_CASE("attribute tau table") {
    const auto index = random_index(60, 3, 41);
    std::vector<ImageId> validation(60);
    std::iota(validation.begin(), validation.end(), ImageId{0});
    const auto t = attribute_tau_table(index.attributes, validation);
    REQUIRE(t.rows() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(t(i, i) == 1.0);
        for (int j = 0; j < 3; ++j) CHECK(t(i, j) == t(j, i));
    }
}

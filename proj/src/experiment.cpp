#include "relsearch/experiment.hpp"

#include "relsearch/simuser.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace relsearch {

using nlohmann::json;

namespace {

constexpr std::pair<Policy, std::string_view> kPolicyNames[] = {
    {Policy::ActivePivots, "active_pivots"},   {Policy::PivotsRoundRobin, "pivots_round_robin"},
    {Policy::ActiveExhaustive, "active_exhaustive"}, {Policy::Top, "top"},
    {Policy::Passive, "passive"},              {Policy::BinaryActive, "binary_active"},
    {Policy::BinaryPassive, "binary_passive"}, {Policy::WhittleFree, "whittle_free"},
    {Policy::BinaryFree, "binary_free"},
};

}  // namespace

std::string_view to_string(Policy p) {
    for (const auto& [policy, name] : kPolicyNames) {
        if (policy == p) return name;
    }
    return "unknown";
}

Policy policy_from_string(std::string_view s) {
    for (const auto& [policy, name] : kPolicyNames) {
        if (name == s) return policy;
    }
    throw InvalidInput("unknown policy '" + std::string(s) + "'");
}

bool is_binary(Policy p) {
    return p == Policy::BinaryActive || p == Policy::BinaryPassive || p == Policy::BinaryFree;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Metric readout shared by every policy.
class Recorder {
public:
    Recorder(const SearchIndex& index, const GroundTruthMetric& metric, ImageId target, const EpisodeConfig& config)
        : gt_(ground_truth_for(metric, target)), k_ndcg_(std::min(config.k_ndcg, index.size())) {
        std::vector<double> sorted = gt_.distances;
        std::sort(sorted.begin(), sorted.end());
        const auto rank = static_cast<std::size_t>(std::ceil(0.01 * static_cast<double>(sorted.size())));
        very_similar_ = sorted[std::max<std::size_t>(rank, 1) - 1];
    }

    const GroundTruth& ground_truth() const { return gt_; }

    EpisodeRecord record(std::size_t iteration, const std::vector<ImageId>& ranking, double entropy,
                         double seconds, std::size_t constraints) const {
        EpisodeRecord r;
        r.iteration = iteration;
        r.percentile_rank = percentile_rank(ranking, gt_.target);
        r.ndcg = ndcg_at_k(ranking, gt_.graded_relevance, k_ndcg_);
        r.entropy = entropy;
        r.selection_seconds = seconds;
        r.constraints = constraints;
        const std::size_t top = std::min<std::size_t>(10, ranking.size());
        std::size_t close = 0;
        for (std::size_t p = 0; p < top; ++p) {
            if (gt_.distances[ranking[p]] <= very_similar_) ++close;
        }
        r.very_similar_top10 = static_cast<double>(close) / static_cast<double>(top);
        return r;
    }

private:
    GroundTruth gt_;
    std::size_t k_ndcg_;
    double very_similar_ = 0.0;
};

using PairKey = std::pair<ImageId, AttributeIndex>;

class RelativeEpisode {
public:
    RelativeEpisode(Policy policy, const SearchIndex& index, const Recorder& recorder, ImageId target,
                    const EpisodeConfig& config, std::uint64_t seed)
        : policy_(policy),
          index_(index),
          recorder_(recorder),
          target_(target),
          config_(config),
          user_(index, default_simuser_config(index, config.noise_fraction, splitmix64(seed ^ 0x5eedULL))),
          rng_(splitmix64(seed ^ 0xc0ffeeULL)),
          state_(RelevanceState::initial(index.size())),
          pivots_(PivotSet::at_roots(index.trees)) {
        if (policy == Policy::ActiveExhaustive && index.size() > config.exhaustive_max_images) {
            throw InvalidInput("active_exhaustive is limited to " + std::to_string(config.exhaustive_max_images) + " images");
        }
        for (AttributeIndex m = 0; m < index.num_attributes(); ++m) round_robin_.push_back(m);
        std::shuffle(round_robin_.begin(), round_robin_.end(), rng_);

        // Identical first constraint for every attribute policy with this seed.
        std::mt19937_64 init_rng(seed);
        const auto ref = static_cast<ImageId>(std::uniform_int_distribution<std::size_t>(0, index.size() - 1)(init_rng));
        const auto attr = static_cast<AttributeIndex>(std::uniform_int_distribution<std::size_t>(0, index.num_attributes() - 1)(init_rng));
        ask({ref, attr}, false);
    }

    EpisodeResult run() {
        result_.records.push_back(snapshot(0, 0.0));
        for (std::size_t t = 1; t <= config_.iterations; ++t) {
            const auto start = Clock::now();
            const auto question = choose();
            const double seconds = seconds_since(start);
            if (!question) {
                result_.exhausted_early = true;
                break;
            }
            ask(*question, policy_ == Policy::ActivePivots || policy_ == Policy::PivotsRoundRobin);
            result_.records.push_back(snapshot(t, seconds));
        }
        result_.constraints = state_.history;
        return std::move(result_);
    }

private:
    EpisodeRecord snapshot(std::size_t t, double seconds) const {
        return recorder_.record(t, rank_images(state_, RankingMode::Probabilistic), entropy(state_), seconds,
                                state_.history.size());
    }

    void ask(AskedQuestion q, bool descend_tree) {
        const auto answer = user_.relative_response(target_, q.image, q.attribute);
        const double weight = config_.confidence_weighting ? confidence_weight(answer.confidence) : 1.0;
        apply_feedback(state_, index_, {q.image, q.attribute, answer.response, weight});
        asked_.insert({q.image, q.attribute});
        result_.questions.push_back(q);
        if (descend_tree) pivots_ = descend(pivots_, index_.trees, q.attribute, answer.response);
    }

    std::optional<AskedQuestion> choose() {
        switch (policy_) {
            case Policy::ActivePivots: {
                if (pivots_.all_exhausted()) return std::nullopt;
                const auto q = select_question(pivots_, config_.likelihood, index_, state_);
                return AskedQuestion{q.pivot_image, q.attribute};
            }
            case Policy::PivotsRoundRobin: {
                for (std::size_t k = 0; k < round_robin_.size(); ++k) {
                    const auto m = round_robin_[(next_ + k) % round_robin_.size()];
                    if (const auto& cursor = pivots_.cursors[m]) {
                        next_ = (next_ + k + 1) % round_robin_.size();
                        return AskedQuestion{index_.trees[m].node(*cursor).pivot_image, m};
                    }
                }
                return std::nullopt;
            }
            case Policy::ActiveExhaustive: return choose_exhaustive();
            case Policy::Top: return choose_top();
            case Policy::Passive: return choose_random();
            default: throw InvalidInput("not an attribute policy");
        }
    }

    std::optional<AskedQuestion> choose_exhaustive() const {
        std::optional<AskedQuestion> best;
        double best_h = std::numeric_limits<double>::infinity();
        for (AttributeIndex m = 0; m < index_.num_attributes(); ++m) {
            for (ImageId i = 0; i < index_.size(); ++i) {
                if (asked_.count({i, m})) continue;
                const double h = expected_entropy(index_, i, m, config_.likelihood, state_);
                if (h < best_h) {
                    best_h = h;
                    best = AskedQuestion{i, m};
                }
            }
        }
        return best;
    }

    std::optional<AskedQuestion> choose_top() {
        const auto ranking = rank_images(state_, RankingMode::Probabilistic);
        for (ImageId image : ranking) {
            std::vector<AttributeIndex> open;
            for (AttributeIndex m = 0; m < index_.num_attributes(); ++m) {
                if (!asked_.count({image, m})) open.push_back(m);
            }
            if (open.empty()) continue;
            const auto pick = std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng_);
            return AskedQuestion{image, open[pick]};
        }
        return std::nullopt;
    }

    std::optional<AskedQuestion> choose_random() {
        std::uniform_int_distribution<std::size_t> image(0, index_.size() - 1);
        std::uniform_int_distribution<std::size_t> attr(0, index_.num_attributes() - 1);
        for (int tries = 0; tries < 64; ++tries) {
            const AskedQuestion q{static_cast<ImageId>(image(rng_)), static_cast<AttributeIndex>(attr(rng_))};
            if (!asked_.count({q.image, q.attribute})) return q;
        }
        std::vector<AskedQuestion> open;
        for (ImageId i = 0; i < index_.size(); ++i) {
            for (AttributeIndex m = 0; m < index_.num_attributes(); ++m) {
                if (!asked_.count({i, m})) open.push_back({i, m});
            }
        }
        if (open.empty()) return std::nullopt;
        return open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng_)];
    }

    Policy policy_;
    const SearchIndex& index_;
    const Recorder& recorder_;
    ImageId target_;
    const EpisodeConfig& config_;
    SimulatedUser user_;
    std::mt19937_64 rng_;
    RelevanceState state_;
    PivotSet pivots_;
    std::set<PairKey> asked_;
    std::vector<AttributeIndex> round_robin_;
    std::size_t next_ = 0;
    EpisodeResult result_;
};

std::vector<ImageId> first_page(std::size_t n, std::size_t count, std::uint64_t seed) {
    std::vector<ImageId> ids(n);
    std::iota(ids.begin(), ids.end(), ImageId{0});
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(std::min(count, n));
    return ids;
}

EpisodeResult run_whittle_free(const SearchIndex& index, const Recorder& recorder, ImageId target,
                               const EpisodeConfig& config, std::uint64_t seed) {
    EpisodeResult result;
    SimulatedUser user(index, default_simuser_config(index, config.noise_fraction, splitmix64(seed ^ 0x5eedULL)));
    auto state = RelevanceState::initial(index.size());
    auto ranking = rank_images(state, config.free_ranking);
    result.records.push_back(recorder.record(0, ranking, entropy(state), 0.0, 0));
    for (std::size_t t = 1; t <= config.iterations; ++t) {
        const auto start = Clock::now();
        std::vector<ImageId> shown;
        if (t == 1) {
            shown = first_page(index.size(), config.reference_pool, seed);
        } else {
            for (ImageId image : ranking) {
                if (shown.size() >= config.reference_pool) break;
                for (AttributeIndex m = 0; m < index.num_attributes(); ++m) {
                    if (!user.used(image, m)) {
                        shown.push_back(image);
                        break;
                    }
                }
            }
        }
        const double seconds = seconds_since(start);
        if (shown.empty()) {
            result.exhausted_early = true;
            break;
        }
        auto statements = user.free_choice_feedback(target, shown, config.statements_per_iteration);
        if (statements.empty()) {
            result.exhausted_early = true;
            break;
        }
        for (auto& c : statements) {
            if (!config.confidence_weighting) c.weight = 1.0;
            apply_feedback(state, index, c);
            result.questions.push_back({c.ref_image, c.attribute});
        }
        ranking = rank_images(state, config.free_ranking);
        result.records.push_back(recorder.record(t, ranking, entropy(state), seconds, state.history.size()));
    }
    result.constraints = state.history;
    return result;
}

class BinaryEpisode {
public:
    BinaryEpisode(Policy policy, const SearchIndex& index, const Recorder& recorder, ImageId target,
                  const EpisodeConfig& config, std::uint64_t seed)
        : policy_(policy),
          index_(index),
          recorder_(recorder),
          target_(target),
          config_(config),
          user_(index, default_simuser_config(index, config.noise_fraction, splitmix64(seed ^ 0x5eedULL))),
          rng_(splitmix64(seed ^ 0xc0ffeeULL)),
          seed_(seed),
          scores_(index.size(), 0.0) {}

    EpisodeResult run() {
        const auto& distances = recorder_.ground_truth().distances;
        if (policy_ != Policy::BinaryFree) {
            std::mt19937_64 init_rng(seed_);
            const auto init = peek_binary_init(target_, distances, config_.binary_init_pool, init_rng);
            label(init.positive, true);
            label(init.negative, false);
            retrain();
        }
        result_.records.push_back(snapshot(0, 0.0));
        for (std::size_t t = 1; t <= config_.iterations; ++t) {
            const auto start = Clock::now();
            bool progressed = false;
            if (policy_ == Policy::BinaryFree) {
                const auto shown = t == 1 ? first_page(index_.size(), config_.reference_pool, seed_) : top_unlabeled();
                const double seconds = seconds_since(start);
                progressed = label_quartiles(shown);
                if (!progressed) {
                    result_.exhausted_early = true;
                    break;
                }
                retrain();
                result_.records.push_back(snapshot(t, seconds));
                continue;
            }
            const auto exemplar = choose_exemplar();
            const double seconds = seconds_since(start);
            if (!exemplar) {
                result_.exhausted_early = true;
                break;
            }
            label(*exemplar, user_.binary_response(*exemplar, distances) == BinaryAnswer::Similar);
            retrain();
            result_.records.push_back(snapshot(t, seconds));
        }
        return std::move(result_);
    }

private:
    void label(ImageId image, bool similar) {
        (similar ? positives_ : negatives_).push_back(image);
        labeled_.insert(image);
        result_.questions.push_back({image, 0});
    }

    void retrain() {
        if (positives_.empty() || negatives_.empty()) return;
        const auto svm = train_binary_svm(index_.features, positives_, negatives_, config_.svm_C);
        for (std::size_t i = 0; i < index_.size(); ++i) {
            const double d = svm.decision(index_.features.row(static_cast<Eigen::Index>(i)));
            scores_[i] = config_.binary_magnitude ? std::abs(d) : d;
            decision_[i] = d;
        }
        trained_ = true;
    }

    EpisodeRecord snapshot(std::size_t t, double seconds) const {
        return recorder_.record(t, rank_by_score(scores_), std::numeric_limits<double>::quiet_NaN(), seconds,
                                positives_.size() + negatives_.size());
    }

    std::optional<ImageId> choose_exemplar() {
        std::vector<ImageId> open;
        for (ImageId i = 0; i < index_.size(); ++i) {
            if (!labeled_.count(i)) open.push_back(i);
        }
        if (open.empty()) return std::nullopt;
        if (policy_ == Policy::BinaryPassive || !trained_) {
            return open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng_)];
        }
        return *std::min_element(open.begin(), open.end(), [&](ImageId a, ImageId b) {
            const double da = std::abs(decision_[a]);
            const double db = std::abs(decision_[b]);
            return da != db ? da < db : a < b;
        });
    }

    std::vector<ImageId> top_unlabeled() const {
        std::vector<ImageId> out;
        for (ImageId image : rank_by_score(scores_)) {
            if (out.size() >= config_.reference_pool) break;
            if (!labeled_.count(image)) out.push_back(image);
        }
        return out;
    }

    // Closest quarter of the page (raw feature distance, perceived with noise)
    // is similar, furthest quarter dissimilar.
    bool label_quartiles(const std::vector<ImageId>& shown) {
        if (shown.empty()) return false;
        std::vector<double> raw(index_.size());
        for (std::size_t i = 0; i < index_.size(); ++i) {
            raw[i] = (index_.features.row(static_cast<Eigen::Index>(i)) - index_.features.row(target_)).norm();
        }
        const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(raw.size());
        double var = 0.0;
        for (double v : raw) var += (v - mean) * (v - mean);
        const double noise = config_.noise_fraction * std::sqrt(var / static_cast<double>(raw.size()));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<std::pair<double, ImageId>> perceived;
        for (ImageId image : shown) perceived.emplace_back(raw[image] + noise * normal(rng_), image);
        std::sort(perceived.begin(), perceived.end());
        const std::size_t quarter = std::max<std::size_t>(1, shown.size() / 4);
        if (shown.size() < 2) return false;
        for (std::size_t k = 0; k < quarter; ++k) label(perceived[k].second, true);
        for (std::size_t k = 0; k < quarter; ++k) label(perceived[perceived.size() - 1 - k].second, false);
        return true;
    }

    Policy policy_;
    const SearchIndex& index_;
    const Recorder& recorder_;
    ImageId target_;
    const EpisodeConfig& config_;
    SimulatedUser user_;
    std::mt19937_64 rng_;
    std::uint64_t seed_;
    std::vector<double> scores_;
    std::map<ImageId, double> decision_;
    std::vector<ImageId> positives_;
    std::vector<ImageId> negatives_;
    std::set<ImageId> labeled_;
    bool trained_ = false;
    EpisodeResult result_;
};

}  // namespace

EpisodeResult run_episode(Policy policy, const SearchIndex& index, const GroundTruthMetric& metric, ImageId target,
                          const EpisodeConfig& config, std::uint64_t seed) {
    if (index.size() < 2) throw InvalidInput("episode: need at least two images");
    if (target >= index.size()) throw InvalidInput("episode: unknown target");
    const Recorder recorder(index, metric, target, config);
    switch (policy) {
        case Policy::ActivePivots:
        case Policy::PivotsRoundRobin:
        case Policy::ActiveExhaustive:
        case Policy::Top:
        case Policy::Passive: return RelativeEpisode(policy, index, recorder, target, config, seed).run();
        case Policy::WhittleFree: return run_whittle_free(index, recorder, target, config, seed);
        case Policy::BinaryActive:
        case Policy::BinaryPassive:
        case Policy::BinaryFree: return BinaryEpisode(policy, index, recorder, target, config, seed).run();
    }
    throw InvalidInput("episode: unknown policy");
}

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    std::size_t n = 0;
    for (double x : v) {
        if (std::isnan(x)) continue;
        s += x;
        ++n;
    }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

double sd_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    std::size_t n = 0;
    for (double x : v) {
        if (std::isnan(x)) continue;
        s += (x - m) * (x - m);
        ++n;
    }
    return n > 1 ? std::sqrt(s / static_cast<double>(n - 1)) : 0.0;
}

double median_of(std::vector<double> v) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ExperimentResult run_experiment(const SearchIndex& index, const ExperimentConfig& config) {
    if (config.episode.iterations < 1) throw InvalidInput("experiment: iterations must be at least 1");
    if (config.policies.empty()) throw InvalidInput("experiment: no policies");
    if (index.size() < 2) throw InvalidInput("experiment: need at least two images");

    ExperimentResult result;
    {
        std::vector<ImageId> ids(index.size());
        std::iota(ids.begin(), ids.end(), ImageId{0});
        std::mt19937_64 rng(config.seed);
        std::shuffle(ids.begin(), ids.end(), rng);
        for (std::size_t q = 0; q < config.queries; ++q) result.targets.push_back(ids[q % ids.size()]);
    }

    const GroundTruthMetric metric(index, config.episode.gt_weights);
    const std::size_t np = config.policies.size();
    const std::size_t nq = config.queries;
    std::vector<std::optional<EpisodeResult>> episodes(np * nq);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t task = next++; task < episodes.size(); task = next++) {
            const std::size_t p = task / nq;
            const std::size_t q = task % nq;
            try {
                episodes[task] = run_episode(config.policies[p], index, metric, result.targets[q], config.episode,
                                             splitmix64(config.seed + q));
            } catch (const InvalidInput&) {
                throw;
            } catch (const Error&) {
                episodes[task].reset();
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, config.threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        std::mutex error_mutex;
        std::exception_ptr error;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                try {
                    worker();
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = episodes.size();
                }
            });
        }
        pool.clear();
        if (error) std::rethrow_exception(error);
    }

    const std::size_t iterations = config.episode.iterations;
    for (std::size_t p = 0; p < np; ++p) {
        const Policy policy = config.policies[p];
        auto& finals = result.final_percentile[policy];
        auto& final_ndcg = result.final_ndcg[policy];
        result.exhausted_early[policy] = 0;
        result.failures[policy] = 0;
        std::vector<std::vector<const EpisodeRecord*>> by_iter(iterations + 1);
        for (std::size_t q = 0; q < nq; ++q) {
            const auto& ep = episodes[p * nq + q];
            if (!ep || ep->records.empty()) {
                ++result.failures[policy];
                finals.push_back(std::numeric_limits<double>::quiet_NaN());
                final_ndcg.push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            if (ep->exhausted_early) ++result.exhausted_early[policy];
            for (std::size_t t = 0; t <= iterations; ++t) {
                by_iter[t].push_back(&ep->records[std::min(t, ep->records.size() - 1)]);
            }
            finals.push_back(ep->records.back().percentile_rank);
            final_ndcg.push_back(ep->records.back().ndcg);
        }
        for (std::size_t t = 0; t <= iterations; ++t) {
            std::vector<double> pr, nd, en, st, vs;
            for (const auto* r : by_iter[t]) {
                pr.push_back(r->percentile_rank);
                nd.push_back(r->ndcg);
                en.push_back(r->entropy);
                // Carried-forward records did not select anything at this iteration.
                st.push_back(r->iteration == t ? r->selection_seconds : std::numeric_limits<double>::quiet_NaN());
                vs.push_back(r->very_similar_top10);
            }
            AggregateRow row;
            row.policy = policy;
            row.iteration = t;
            row.count = pr.size();
            row.mean_percentile = mean_of(pr);
            row.median_percentile = median_of(pr);
            row.sd_percentile = sd_of(pr);
            row.mean_ndcg = mean_of(nd);
            row.mean_entropy = mean_of(en);
            row.mean_selection_seconds = mean_of(st);
            row.mean_very_similar = mean_of(vs);
            result.rows.push_back(row);
        }
    }
    return result;
}

std::string results_csv(const ExperimentResult& result) {
    std::ostringstream out;
    out << std::setprecision(10);
    out << "policy,iteration,count,mean_percentile_rank,median_percentile_rank,sd_percentile_rank,mean_ndcg,"
           "mean_entropy,mean_selection_seconds,mean_very_similar_top10\n";
    for (const auto& r : result.rows) {
        out << to_string(r.policy) << ',' << r.iteration << ',' << r.count << ',' << r.mean_percentile << ','
            << r.median_percentile << ',' << r.sd_percentile << ',' << r.mean_ndcg << ',' << r.mean_entropy << ','
            << r.mean_selection_seconds << ',' << r.mean_very_similar << '\n';
    }
    return out.str();
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string plot_data_json(const ExperimentResult& result) {
    json doc;
    doc["targets"] = result.targets;
    json curves = json::object();
    for (const auto& r : result.rows) {
        auto& c = curves[std::string(to_string(r.policy))];
        c["iteration"].push_back(r.iteration);
        c["mean_percentile_rank"].push_back(number_or_null(r.mean_percentile));
        c["median_percentile_rank"].push_back(number_or_null(r.median_percentile));
        c["mean_ndcg"].push_back(number_or_null(r.mean_ndcg));
        c["mean_entropy"].push_back(number_or_null(r.mean_entropy));
        c["mean_selection_seconds"].push_back(number_or_null(r.mean_selection_seconds));
    }
    doc["curves"] = std::move(curves);
    json counts = json::object();
    for (const auto& [policy, n] : result.exhausted_early) {
        counts[std::string(to_string(policy))] = {{"exhausted_early", n}, {"failures", result.failures.at(policy)}};
    }
    doc["episodes"] = std::move(counts);
    return doc.dump(2);
}

std::pair<double, double> compare_policies(const ExperimentResult& result, Policy a, Policy b) {
    const auto& va = result.final_percentile.at(a);
    const auto& vb = result.final_percentile.at(b);
    std::vector<double> xa, xb;
    for (std::size_t q = 0; q < va.size(); ++q) {
        if (std::isnan(va[q]) || std::isnan(vb[q])) continue;
        xa.push_back(va[q]);
        xb.push_back(vb[q]);
    }
    return {mean_of(xa) - mean_of(xb), sign_test_p_value(xa, xb)};
}

namespace {

SynthConfig synth_from(const json& j) {
    SynthConfig c;
    c.num_images = j.value("N", c.num_images);
    c.dim = j.value("d", c.dim);
    c.num_attributes = j.value("M", c.num_attributes);
    c.num_classes = j.value("C", c.num_classes);
    c.pairs_per_attribute = j.value("pairs_per_attribute", c.pairs_per_attribute);
    c.noise_sd = j.value("noise_sd", c.noise_sd);
    c.jitter_sd = j.value("jitter_sd", c.jitter_sd);
    c.equal_band_fraction = j.value("equal_band_fraction", c.equal_band_fraction);
    c.seed = j.value("seed", c.seed);
    if (j.contains("class_orders")) c.class_orders = j["class_orders"].get<ClassOrders>();
    if (j.contains("attribute_names")) c.attribute_names = j["attribute_names"].get<std::vector<std::string>>();
    return c;
}

}  // namespace

SynthConfig synth_config_from_json(const std::string& text) {
    try {
        return synth_from(json::parse(text));
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("synthetic config: ") + e.what());
    }
}

ExperimentFile parse_experiment_config(const std::string& text) {
    ExperimentFile out;
    try {
        const auto doc = json::parse(text);
        const auto& data = doc.at("dataset");
        if (data.contains("path")) out.data.dataset_path = data["path"].get<std::string>();
        if (data.contains("synthetic")) out.data.synthetic = synth_from(data["synthetic"]);
        if (!out.data.dataset_path && !out.data.synthetic) throw InvalidInput("experiment: dataset needs 'path' or 'synthetic'");
        if (doc.contains("model")) out.data.model_path = doc["model"].get<std::string>();
        if (doc.contains("index")) out.data.index_path = doc["index"].get<std::string>();
        if (doc.contains("train")) {
            const auto& t = doc["train"];
            out.data.train.C = t.value("C", out.data.train.C);
            out.data.train.epochs = t.value("epochs", out.data.train.epochs);
            out.data.train.step_size = t.value("step_size", out.data.train.step_size);
            out.data.train.tolerance = t.value("tolerance", out.data.train.tolerance);
            out.data.train.seed = t.value("seed", out.data.train.seed);
        }

        auto& exp = out.experiment;
        for (const auto& p : doc.at("policies")) exp.policies.push_back(policy_from_string(p.get<std::string>()));
        exp.queries = doc.value("queries", exp.queries);
        exp.seed = doc.value("seed", exp.seed);
        exp.threads = doc.value("threads", exp.threads);

        auto& ep = exp.episode;
        ep.iterations = doc.value("iterations", ep.iterations);
        ep.k_page = doc.value("k_page", ep.k_page);
        ep.k_ndcg = doc.value("k_ndcg", ep.k_ndcg);
        ep.noise_fraction = doc.value("noise_fraction", ep.noise_fraction);
        ep.reference_pool = doc.value("reference_pool", ep.reference_pool);
        ep.statements_per_iteration = doc.value("statements_per_iteration", ep.statements_per_iteration);
        ep.confidence_weighting = doc.value("confidence_weighting", ep.confidence_weighting);
        ep.binary_magnitude = doc.value("binary_magnitude", ep.binary_magnitude);
        ep.binary_init_pool = doc.value("binary_init_pool", ep.binary_init_pool);
        ep.svm_C = doc.value("svm_C", ep.svm_C);
        ep.exhaustive_max_images = doc.value("exhaustive_max_images", ep.exhaustive_max_images);
        if (doc.contains("likelihood_model")) ep.likelihood.kind = likelihood_from_string(doc["likelihood_model"].get<std::string>());
        if (doc.contains("lambda_distance_scale")) ep.likelihood.distance_scale = doc["lambda_distance_scale"].get<double>();
        if (doc.contains("entropy_base") && doc["entropy_base"].get<int>() != 2) {
            throw InvalidInput("experiment: entropy_base is fixed to 2");
        }
        if (doc.contains("free_ranking")) {
            const auto mode = doc["free_ranking"].get<std::string>();
            if (mode == "counting") ep.free_ranking = RankingMode::Counting;
            else if (mode == "probabilistic") ep.free_ranking = RankingMode::Probabilistic;
            else throw InvalidInput("experiment: free_ranking must be 'counting' or 'probabilistic'");
        }
        if (doc.contains("gt_weights")) {
            ep.gt_weights.feature = doc["gt_weights"].value("feature", ep.gt_weights.feature);
            ep.gt_weights.attribute = doc["gt_weights"].value("attribute", ep.gt_weights.attribute);
        }
        if (ep.iterations < 1) throw InvalidInput("experiment: iterations must be at least 1");
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("experiment config: ") + e.what());
    }
    return out;
}

ExperimentFile load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open experiment config " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto out = parse_experiment_config(buffer.str());
    // Relative paths in the config are relative to the config file.
    const auto base = path.parent_path();
    for (auto* p : {&out.data.dataset_path, &out.data.model_path, &out.data.index_path}) {
        if (*p && p->value().is_relative()) *p = base / p->value();
    }
    return out;
}

SearchIndex prepare_index(const DataSource& source) {
    DatasetManifest manifest = source.dataset_path ? load_manifest(*source.dataset_path)
                                                   : synthesize_dataset(source.synthetic.value()).manifest;
    const ModelSet models = source.model_path ? load_models(*source.model_path) : train_models(manifest, source.train);
    std::optional<std::vector<AttributeTree>> trees;
    if (source.index_path) {
        std::ifstream in(*source.index_path);
        if (!in) throw InvalidInput("cannot open index file " + source.index_path->string());
        std::stringstream buffer;
        buffer << in.rdbuf();
        trees = parse_trees(buffer.str(), manifest.attribute_names);
    }
    return build_index(manifest, models, std::move(trees));
}

}  // namespace relsearch

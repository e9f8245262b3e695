#include "relsearch/service.hpp"

#include "relsearch/simuser.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace relsearch {

using nlohmann::json;

std::string_view to_string(SessionMode mode) {
    switch (mode) {
        case SessionMode::Free: return "free";
        case SessionMode::Active: return "active";
        case SessionMode::Hybrid: return "hybrid";
    }
    return "unknown";
}

SessionMode session_mode_from_string(std::string_view s) {
    if (s == "free" || s == "FREE") return SessionMode::Free;
    if (s == "active" || s == "ACTIVE") return SessionMode::Active;
    if (s == "hybrid" || s == "HYBRID") return SessionMode::Hybrid;
    throw InvalidInput("unknown session mode '" + std::string(s) + "'");
}

std::vector<ImageId> keyword_matches(const SearchIndex& index, std::span<const KeywordPredicate> predicates) {
    const std::size_t n = index.size();
    std::vector<bool> keep(n, true);
    for (const auto& p : predicates) {
        if (p.attribute >= index.num_attributes()) throw InvalidInput("keyword filter: unknown attribute");
        std::vector<double> sorted(n);
        for (std::size_t i = 0; i < n; ++i) sorted[i] = index.attribute(static_cast<ImageId>(i), p.attribute);
        std::sort(sorted.begin(), sorted.end());
        const std::size_t third = (n + 2) / 3;
        const double low_cut = sorted[third - 1];
        const double high_cut = sorted[n - third];
        for (std::size_t i = 0; i < n; ++i) {
            const double v = index.attribute(static_cast<ImageId>(i), p.attribute);
            if (p.high ? v < high_cut : v > low_cut) keep[i] = false;
        }
    }
    std::vector<ImageId> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (keep[i]) out.push_back(static_cast<ImageId>(i));
    }
    return out;
}

// ---------------------------------------------------------------------------

class Session {
public:
    Session(std::shared_ptr<const SearchIndex> index, const EngineOptions& options, SessionRecord record)
        : index_(std::move(index)), options_(options), record_(std::move(record)) {
        const auto n = index_->size();
        // Seeded display order; keyword matches come first.
        std::vector<ImageId> order(n);
        std::iota(order.begin(), order.end(), ImageId{0});
        std::mt19937_64 rng(record_.seed);
        std::shuffle(order.begin(), order.end(), rng);
        if (!record_.keyword_filter.empty()) {
            const auto matches = keyword_matches(*index_, record_.keyword_filter);
            if (matches.empty()) throw InvalidInput("keyword filter matches no images");
            std::vector<bool> hit(n, false);
            for (ImageId i : matches) hit[i] = true;
            std::stable_partition(order.begin(), order.end(), [&](ImageId i) { return hit[i]; });
            first_page_limit_ = matches.size();
        }
        prior_rank_.resize(n);
        for (std::size_t p = 0; p < n; ++p) prior_rank_[order[p]] = p;

        for (ImageId i : record_.shown) {
            if (i >= n) throw InvalidInput("session record: shown id out of range");
        }
        shown_.insert(record_.shown.begin(), record_.shown.end());
        validate(record_.binary, n);
        for (const auto& c : record_.history) validate(c, *index_);
        state_ = rebuild_relevance(*index_, record_.history);
        if (record_.mode == SessionMode::Active) {
            pivots_ = PivotSet::at_roots(index_->trees);
            for (const auto& c : record_.history) pivots_ = descend(pivots_, index_->trees, c.attribute, c.response);
            next_question();
        }
        if (record_.mode == SessionMode::Hybrid) retrain();
        rerank();
        touched_ = Engine::Clock::now();
    }

    std::mutex mutex;

    Engine::Clock::time_point touched() const { return touched_; }
    void touch() { touched_ = Engine::Clock::now(); }
    const SessionRecord& record() const { return record_; }

    ResultPage first_page(std::size_t page_size) {
        if (page_size == 0) throw InvalidInput("page_size must be at least 1");
        // A keyword filter bounds the first page to its matches.
        return page({0, std::min(page_size, first_page_limit_.value_or(page_size))});
    }

    ResultPage page(const PageRequest& request) {
        if (request.page_size == 0) throw InvalidInput("page_size must be at least 1");
        const std::size_t n = ranking_.size();
        const std::size_t begin = request.page * request.page_size;
        if (request.page > 0 && begin >= n) throw InvalidInput("page beyond the end of the ranking");
        ResultPage out;
        out.page = request.page;
        out.page_size = request.page_size;
        out.total = n;
        const std::size_t end = std::min(n, begin + request.page_size);
        const auto m = index_->num_attributes();
        for (std::size_t p = begin; p < end; ++p) {
            const ImageId id = ranking_[p];
            ResultItem item;
            item.id = id;
            item.asset_path = index_->asset_paths.empty() ? std::nullopt : index_->asset_paths[id];
            item.score = scores_[id];
            item.satisfied_count = state_.satisfied_counts[id];
            for (AttributeIndex a = 0; a < m; ++a) item.attributes.push_back(index_->attribute(id, a));
            out.items.push_back(std::move(item));
            if (shown_.insert(id).second) record_.shown.push_back(id);
        }
        return out;
    }

    void submit(const FeedbackPayload& payload) {
        switch (record_.mode) {
            case SessionMode::Active: submit_answer(payload); break;
            case SessionMode::Free:
                if (!payload.binary.empty()) throw InvalidInput("relevant/irrelevant sets need a hybrid session");
                submit_statements(payload);
                break;
            case SessionMode::Hybrid: submit_statements(payload); break;
        }
        ++record_.iteration;
        if (record_.mode == SessionMode::Hybrid) retrain();
        rerank();
    }

    SessionView view(ResultPage page) const {
        SessionView v;
        v.session_id = record_.session_id;
        v.dataset = record_.dataset;
        v.mode = record_.mode;
        v.page = std::move(page);
        v.question = question_;
        v.exhausted = record_.mode == SessionMode::Active && !question_;
        v.entropy = entropy(state_);
        v.iteration = record_.iteration;
        return v;
    }

    const std::vector<ImageId>& ranking() const { return ranking_; }

private:
    void submit_answer(const FeedbackPayload& payload) {
        if (!payload.statements.empty() || !payload.binary.empty()) {
            throw InvalidInput("active sessions take a single answer to the pending question");
        }
        if (!payload.answer) throw InvalidInput("missing response");
        if (!payload.question_token) throw InvalidInput("missing question_token");
        if (!question_) throw Conflict("no pending question: search exhausted");
        if (*payload.question_token != question_->token) throw Conflict("stale or duplicate question token");
        check_confidence(payload.confidence);
        const FeedbackConstraint c{question_->pivot_image, question_->attribute, *payload.answer,
                                   confidence_weight(payload.confidence)};
        apply_feedback(state_, *index_, c);
        record_.history.push_back(c);
        pivots_ = descend(pivots_, index_->trees, c.attribute, c.response);
        next_question();
    }

    static void check_confidence(int confidence) {
        if (confidence < 1 || confidence > 3) throw InvalidInput("confidence must be 1, 2 or 3");
    }

    void submit_statements(const FeedbackPayload& payload) {
        if (payload.answer || payload.question_token) throw InvalidInput("this session has no pending question");
        if (payload.statements.empty() && payload.binary.empty()) throw InvalidInput("empty feedback");
        // Validate everything before touching the state.
        std::vector<FeedbackConstraint> constraints;
        for (const auto& s : payload.statements) {
            check_confidence(s.confidence);
            const FeedbackConstraint c{s.ref_image, s.attribute, s.response, confidence_weight(s.confidence)};
            validate(c, *index_);
            if (!shown_.count(s.ref_image)) {
                throw InvalidInput("reference not shown: image " + std::to_string(s.ref_image));
            }
            constraints.push_back(c);
        }
        validate(payload.binary, index_->size());
        for (const auto* set : {&payload.binary.relevant, &payload.binary.irrelevant}) {
            for (ImageId id : *set) {
                if (!shown_.count(id)) throw InvalidInput("reference not shown: image " + std::to_string(id));
            }
        }
        for (const auto& c : constraints) {
            apply_feedback(state_, *index_, c);
            record_.history.push_back(c);
        }
        // A later label overrides an earlier one for the same image.
        for (ImageId id : payload.binary.relevant) {
            record_.binary.irrelevant.erase(id);
            record_.binary.relevant.insert(id);
        }
        for (ImageId id : payload.binary.irrelevant) {
            record_.binary.relevant.erase(id);
            record_.binary.irrelevant.insert(id);
        }
    }

    void next_question() {
        question_.reset();
        if (pivots_.all_exhausted()) return;
        const auto q = select_question(pivots_, options_.likelihood, *index_, state_);
        PendingQuestion pending;
        pending.pivot_image = q.pivot_image;
        pending.attribute = q.attribute;
        pending.expected_entropy = q.expected_entropy;
        pending.token = random_token();
        question_ = std::move(pending);
    }

    void retrain() {
        hybrid_weights_.reset();
        const auto partition = partition_by_satisfaction(state_);
        PairOptions pair_options = options_.hybrid_pairs;
        pair_options.seed = record_.seed;
        std::vector<RankPair> pairs;
        try {
            pairs = build_ordered_pairs(record_.binary, partition, pair_options);
        } catch (const InvalidInput&) {
            return;  // nothing to learn from yet
        }
        hybrid_weights_ = train_hybrid_scorer(pairs, index_->features, options_.hybrid_train).weights;
    }

    void rerank() {
        const auto n = index_->size();
        scores_.assign(n, 0.0);
        if (hybrid_weights_) {
            const Eigen::VectorXd s = index_->features * *hybrid_weights_;
            for (std::size_t i = 0; i < n; ++i) scores_[i] = s[static_cast<Eigen::Index>(i)];
        } else if (record_.mode != SessionMode::Active && options_.free_ranking == RankingMode::Counting) {
            for (std::size_t i = 0; i < n; ++i) scores_[i] = state_.satisfied_counts[i];
        } else {
            scores_ = state_.log_relevance;
        }
        ranking_.resize(n);
        std::iota(ranking_.begin(), ranking_.end(), ImageId{0});
        std::sort(ranking_.begin(), ranking_.end(), [&](ImageId a, ImageId b) {
            if (scores_[a] != scores_[b]) return scores_[a] > scores_[b];
            // Counting mode breaks ties by the probabilistic score.
            if (state_.log_relevance[a] != state_.log_relevance[b]) return state_.log_relevance[a] > state_.log_relevance[b];
            return prior_rank_[a] < prior_rank_[b];
        });
    }

    static std::string random_token() {
        static thread_local std::mt19937_64 rng{std::random_device{}()};
        std::ostringstream out;
        out << std::hex << rng() << rng();
        return out.str();
    }

    std::shared_ptr<const SearchIndex> index_;
    const EngineOptions& options_;
    SessionRecord record_;
    RelevanceState state_;
    PivotSet pivots_;
    std::optional<PendingQuestion> question_;
    std::optional<Eigen::VectorXd> hybrid_weights_;
    std::vector<std::size_t> prior_rank_;
    std::optional<std::size_t> first_page_limit_;
    std::set<ImageId> shown_;
    std::vector<double> scores_;
    std::vector<ImageId> ranking_;
    Engine::Clock::time_point touched_;
};

// ---------------------------------------------------------------------------

Engine::Engine(EngineOptions options) : options_(std::move(options)) {}
Engine::~Engine() = default;

void Engine::add_dataset(std::shared_ptr<const SearchIndex> index) {
    if (!index) throw InvalidInput("null dataset");
    if (index->trees.size() != index->num_attributes()) throw InvalidInput("dataset '" + index->name + "' is not indexed");
    std::unique_lock lock(mutex_);
    datasets_[index->name] = std::move(index);
}

std::vector<DatasetInfo> Engine::datasets() const {
    std::shared_lock lock(mutex_);
    std::vector<DatasetInfo> out;
    for (const auto& [name, index] : datasets_) out.push_back({name, index->size(), index->attribute_names});
    return out;
}

std::shared_ptr<const SearchIndex> Engine::dataset(const std::string& name) const {
    std::shared_lock lock(mutex_);
    const auto it = datasets_.find(name);
    if (it == datasets_.end()) throw NotFound("unknown dataset '" + name + "'");
    return it->second;
}

namespace {

std::string new_session_id() {
    static std::mutex mutex;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mutex);
    std::ostringstream out;
    out << std::hex << std::setfill('0') << std::setw(16) << rng() << std::setw(16) << rng();
    return out.str();
}

}  // namespace

SessionView Engine::create_session(const CreateRequest& request) {
    if (request.mode == SessionMode::Active && !request.keyword_filter.empty()) {
        throw InvalidInput("keyword_filter applies to free and hybrid sessions");
    }
    evict_idle();
    SessionRecord record;
    record.session_id = new_session_id();
    record.dataset = request.dataset;
    record.mode = request.mode;
    record.seed = request.seed.value_or(options_.default_seed);
    record.keyword_filter = request.keyword_filter;
    auto session = std::make_shared<Session>(dataset(request.dataset), options_, std::move(record));
    std::lock_guard session_lock(session->mutex);
    auto view = session->view(session->first_page(request.page_size));
    std::unique_lock lock(mutex_);
    sessions_[view.session_id] = session;
    return view;
}

std::shared_ptr<Session> Engine::find(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw NotFound("unknown session '" + session_id + "'");
    return it->second;
}

SessionView Engine::submit_feedback(const std::string& session_id, const FeedbackPayload& payload,
                                    std::optional<PageRequest> page) {
    auto session = find(session_id);
    std::lock_guard lock(session->mutex);
    session->touch();
    session->submit(payload);
    return session->view(session->page(page.value_or(PageRequest{0, options_.default_page_size})));
}

ResultPage Engine::get_results(const std::string& session_id, const PageRequest& page) {
    auto session = find(session_id);
    std::lock_guard lock(session->mutex);
    session->touch();
    return session->page(page);
}

std::vector<ImageId> Engine::ranking(const std::string& session_id) {
    auto session = find(session_id);
    std::lock_guard lock(session->mutex);
    return session->ranking();
}

SessionView Engine::view(const std::string& session_id) {
    auto session = find(session_id);
    std::lock_guard lock(session->mutex);
    return session->view({});
}

SessionRecord Engine::export_session(const std::string& session_id) {
    auto session = find(session_id);
    std::lock_guard lock(session->mutex);
    return session->record();
}

SessionView Engine::restore_session(const SessionRecord& record) {
    if (record.session_id.empty()) throw InvalidInput("session record without id");
    auto session = std::make_shared<Session>(dataset(record.dataset), options_, record);
    auto view = session->view({});
    std::unique_lock lock(mutex_);
    sessions_[record.session_id] = std::move(session);
    return view;
}

void Engine::save_sessions(const std::filesystem::path& path) {
    std::vector<std::shared_ptr<Session>> live;
    {
        std::shared_lock lock(mutex_);
        for (const auto& [id, s] : sessions_) live.push_back(s);
    }
    std::vector<SessionRecord> records;
    for (const auto& s : live) {
        std::lock_guard lock(s->mutex);
        records.push_back(s->record());
    }
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write session store " + tmp);
        out << serialize_session_records(records);
    }
    std::filesystem::rename(tmp, path);
}

std::size_t Engine::load_sessions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open session store " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    const auto records = parse_session_records(buffer.str());
    for (const auto& r : records) restore_session(r);
    return records.size();
}

std::size_t Engine::evict_idle(Clock::time_point now) {
    std::unique_lock lock(mutex_);
    std::size_t evicted = 0;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        std::unique_lock session_lock(it->second->mutex, std::try_to_lock);
        // A session busy with a request is not idle.
        if (session_lock.owns_lock() && now - it->second->touched() > options_.idle_ttl) {
            session_lock.unlock();
            it = sessions_.erase(it);
            ++evicted;
        } else {
            ++it;
        }
    }
    return evicted;
}

std::size_t Engine::session_count() const {
    std::shared_lock lock(mutex_);
    return sessions_.size();
}

// ---------------------------------------------------------------------------

std::string serialize_session_records(std::span<const SessionRecord> records) {
    json doc = json::array();
    for (const auto& r : records) {
        json history = json::array();
        for (const auto& c : r.history) {
            history.push_back({{"ref_image", c.ref_image},
                               {"attribute", c.attribute},
                               {"response", std::string(to_string(c.response))},
                               {"weight", c.weight}});
        }
        json filter = json::array();
        for (const auto& p : r.keyword_filter) filter.push_back({{"attribute", p.attribute}, {"high", p.high}});
        doc.push_back({{"session_id", r.session_id},
                       {"dataset", r.dataset},
                       {"mode", std::string(to_string(r.mode))},
                       {"seed", r.seed},
                       {"keyword_filter", filter},
                       {"history", history},
                       {"relevant", r.binary.relevant},
                       {"irrelevant", r.binary.irrelevant},
                       {"shown", r.shown},
                       {"iteration", r.iteration}});
    }
    return json{{"sessions", doc}}.dump();
}

std::vector<SessionRecord> parse_session_records(const std::string& text) {
    std::vector<SessionRecord> out;
    try {
        const auto doc = json::parse(text);
        for (const auto& s : doc.at("sessions")) {
            SessionRecord r;
            r.session_id = s.at("session_id").get<std::string>();
            r.dataset = s.at("dataset").get<std::string>();
            r.mode = session_mode_from_string(s.at("mode").get<std::string>());
            r.seed = s.at("seed").get<std::uint64_t>();
            for (const auto& p : s.value("keyword_filter", json::array())) {
                r.keyword_filter.push_back({p.at("attribute").get<AttributeIndex>(), p.at("high").get<bool>()});
            }
            for (const auto& c : s.at("history")) {
                r.history.push_back({c.at("ref_image").get<ImageId>(), c.at("attribute").get<AttributeIndex>(),
                                     response_from_string(c.at("response").get<std::string>()),
                                     c.at("weight").get<double>()});
            }
            r.binary.relevant = s.value("relevant", std::set<ImageId>{});
            r.binary.irrelevant = s.value("irrelevant", std::set<ImageId>{});
            r.shown = s.value("shown", std::vector<ImageId>{});
            r.iteration = s.value("iteration", std::size_t{0});
            out.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("session store: ") + e.what());
    }
    return out;
}

}  // namespace relsearch

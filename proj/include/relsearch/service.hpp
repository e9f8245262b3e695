#pragma once

#include "relsearch/active.hpp"
#include "relsearch/hybrid.hpp"
#include "relsearch/index.hpp"
#include "relsearch/relevance.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace relsearch {

class NotFound : public Error {
public:
    using Error::Error;
};

// A retried or out-of-date answer to an active question.
class Conflict : public Error {
public:
    using Error::Error;
};

enum class SessionMode { Free, Active, Hybrid };

std::string_view to_string(SessionMode mode);
SessionMode session_mode_from_string(std::string_view s);

// Images whose predicted strength lies in the top (high) or bottom tercile.
struct KeywordPredicate {
    AttributeIndex attribute = 0;
    bool high = true;

    bool operator==(const KeywordPredicate&) const = default;
};

/// Ids matching every predicate, ascending.
std::vector<ImageId> keyword_matches(const SearchIndex& index, std::span<const KeywordPredicate> predicates);

struct PageRequest {
    std::size_t page = 0;
    std::size_t page_size = 40;
};

struct ResultItem {
    ImageId id = 0;
    std::optional<std::string> asset_path;
    double score = 0.0;
    std::uint32_t satisfied_count = 0;
    std::vector<double> attributes;
};

struct ResultPage {
    std::vector<ResultItem> items;
    std::size_t page = 0;
    std::size_t page_size = 0;
    std::size_t total = 0;
};

struct PendingQuestion {
    std::string token;
    ImageId pivot_image = 0;
    AttributeIndex attribute = 0;
    double expected_entropy = 0.0;
};

struct Statement {
    ImageId ref_image = 0;
    AttributeIndex attribute = 0;
    Response response = Response::More;
    // 1..3; 3 counts twice.
    int confidence = 2;
};

struct FeedbackPayload {
    // FREE and HYBRID.
    std::vector<Statement> statements;
    // HYBRID only.
    BinaryFeedback binary;
    // ACTIVE only: answer to the pending question.
    std::optional<Response> answer;
    int confidence = 2;
    std::optional<std::string> question_token;
};

struct SessionView {
    std::string session_id;
    std::string dataset;
    SessionMode mode = SessionMode::Free;
    ResultPage page;
    std::optional<PendingQuestion> question;
    bool exhausted = false;
    double entropy = 0.0;
    std::size_t iteration = 0;
};

// Durable form of a session: everything else is recomputed on load.
struct SessionRecord {
    std::string session_id;
    std::string dataset;
    SessionMode mode = SessionMode::Free;
    std::uint64_t seed = 0;
    std::vector<KeywordPredicate> keyword_filter;
    std::vector<FeedbackConstraint> history;
    BinaryFeedback binary;
    std::vector<ImageId> shown;
    std::size_t iteration = 0;

    bool operator==(const SessionRecord&) const = default;
};

std::string serialize_session_records(std::span<const SessionRecord> records);
std::vector<SessionRecord> parse_session_records(const std::string& text);

struct EngineOptions {
    std::chrono::seconds idle_ttl{3600};
    std::uint64_t default_seed = 1;
    std::size_t default_page_size = 40;
    LikelihoodModel likelihood;
    RankingMode free_ranking = RankingMode::Counting;
    PairOptions hybrid_pairs;
    TrainConfig hybrid_train;
};

struct DatasetInfo {
    std::string name;
    std::size_t num_images = 0;
    std::vector<std::string> attribute_names;
};

struct CreateRequest {
    std::string dataset;
    SessionMode mode = SessionMode::Free;
    std::vector<KeywordPredicate> keyword_filter;
    std::optional<std::uint64_t> seed;
    std::size_t page_size = 40;
};

class Session;

/// Holds the shared read-only indexes and the live sessions. Every public
/// member is safe to call concurrently; calls on one session are serialized.
class Engine {
public:
    using Clock = std::chrono::steady_clock;

    explicit Engine(EngineOptions options = {});
    ~Engine();

    void add_dataset(std::shared_ptr<const SearchIndex> index);
    std::vector<DatasetInfo> datasets() const;
    std::shared_ptr<const SearchIndex> dataset(const std::string& name) const;

    SessionView create_session(const CreateRequest& request);
    SessionView submit_feedback(const std::string& session_id, const FeedbackPayload& payload,
                                std::optional<PageRequest> page = std::nullopt);
    ResultPage get_results(const std::string& session_id, const PageRequest& page);
    /// Full current ranking.
    std::vector<ImageId> ranking(const std::string& session_id);
    SessionView view(const std::string& session_id);

    SessionRecord export_session(const std::string& session_id);
    /// Rebuilds a session from its record; replaces a live session with the same id.
    SessionView restore_session(const SessionRecord& record);

    void save_sessions(const std::filesystem::path& path);
    std::size_t load_sessions(const std::filesystem::path& path);

    /// Drops sessions idle for longer than the TTL as of `now`.
    std::size_t evict_idle(Clock::time_point now = Clock::now());
    std::size_t session_count() const;

private:
    std::shared_ptr<Session> find(const std::string& session_id) const;

    EngineOptions options_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<const SearchIndex>> datasets_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace relsearch

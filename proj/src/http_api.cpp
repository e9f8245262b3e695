#include "relsearch/http_api.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace relsearch {

using nlohmann::json;

std::filesystem::path asset_root_from_env() {
    if (const char* dir = std::getenv("WHITTLE_DATA_DIR"); dir && *dir) return dir;
    return std::filesystem::current_path();
}

namespace {

json to_json(const ResultItem& item, const SearchIndex& index) {
    json attrs = json::object();
    for (std::size_t m = 0; m < item.attributes.size(); ++m) attrs[index.attribute_names[m]] = item.attributes[m];
    return {{"id", item.id},
            {"asset_path", item.asset_path ? json(*item.asset_path) : json(nullptr)},
            {"score", item.score},
            {"satisfied_count", item.satisfied_count},
            {"attributes", attrs}};
}

json to_json(const ResultPage& page, const SearchIndex& index) {
    json items = json::array();
    for (const auto& item : page.items) items.push_back(to_json(item, index));
    return items;
}

json to_json(const PendingQuestion& q, const SearchIndex& index) {
    const auto& asset = index.asset_paths.empty() ? std::nullopt : index.asset_paths[q.pivot_image];
    return {{"token", q.token},
            {"pivot_image", q.pivot_image},
            {"attribute", q.attribute},
            {"attribute_name", index.attribute_names[q.attribute]},
            {"expected_entropy", q.expected_entropy},
            {"asset_path", asset ? json(*asset) : json(nullptr)}};
}

json question_or_null(const SessionView& v, const SearchIndex& index) {
    return v.question ? to_json(*v.question, index) : json(nullptr);
}

AttributeIndex parse_attribute(const json& j, const SearchIndex& index) {
    if (j.is_number_unsigned()) {
        const auto m = j.get<AttributeIndex>();
        if (m >= index.num_attributes()) throw InvalidInput("unknown attribute " + std::to_string(m));
        return m;
    }
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        for (std::size_t m = 0; m < index.attribute_names.size(); ++m) {
            if (index.attribute_names[m] == name) return static_cast<AttributeIndex>(m);
        }
        throw InvalidInput("unknown attribute '" + name + "'");
    }
    throw InvalidInput("attribute must be a name or an index");
}

std::vector<KeywordPredicate> parse_keyword_filter(const json& j, const SearchIndex& index) {
    std::vector<KeywordPredicate> out;
    if (j.is_null()) return out;
    if (!j.is_array()) throw InvalidInput("keyword_filter must be an array");
    for (const auto& p : j) {
        const auto level = p.at("level").get<std::string>();
        if (level != "high" && level != "low") throw InvalidInput("keyword_filter level must be 'high' or 'low'");
        out.push_back({parse_attribute(p.at("attribute"), index), level == "high"});
    }
    return out;
}

FeedbackPayload parse_feedback(const json& body, const SearchIndex& index) {
    FeedbackPayload p;
    if (body.contains("statements")) {
        for (const auto& s : body["statements"]) {
            Statement st;
            st.ref_image = s.at("ref_id").get<ImageId>();
            st.attribute = parse_attribute(s.at("attribute"), index);
            st.response = response_from_string(s.at("response").get<std::string>());
            st.confidence = s.value("confidence", 2);
            p.statements.push_back(st);
        }
    }
    if (body.contains("relevant")) p.binary.relevant = body["relevant"].get<std::set<ImageId>>();
    if (body.contains("irrelevant")) p.binary.irrelevant = body["irrelevant"].get<std::set<ImageId>>();
    if (body.contains("response")) {
        p.answer = response_from_string(body["response"].get<std::string>());
        p.confidence = body.value("confidence", 2);
    }
    if (body.contains("question_token")) p.question_token = body["question_token"].get<std::string>();
    return p;
}

std::size_t query_size(const httplib::Request& req, const char* key, std::size_t fallback) {
    if (!req.has_param(key)) return fallback;
    const auto text = req.get_param_value(key);
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != text.size() || text.front() == '-') {
        throw InvalidInput(std::string(key) + " must be a non-negative integer");
    }
    return static_cast<std::size_t>(v);
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

// Runs `fn`, mapping exceptions onto status codes.
void guarded(httplib::Response& res, const std::function<void()>& fn) {
    try {
        fn();
    } catch (const NotFound& e) {
        send_json(res, {{"error", e.what()}}, 404);
    } catch (const Conflict& e) {
        send_json(res, {{"error", e.what()}}, 409);
    } catch (const InvalidInput& e) {
        send_json(res, {{"error", e.what()}}, 400);
    } catch (const json::exception& e) {
        send_json(res, {{"error", std::string("malformed payload: ") + e.what()}}, 400);
    } catch (const std::exception& e) {
        send_json(res, {{"error", e.what()}}, 500);
    }
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto body = json::parse(req.body);
    if (!body.is_object()) throw InvalidInput("request body must be a JSON object");
    return body;
}

std::string content_type_for(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".gif") return "image/gif";
    if (ext == ".webp") return "image/webp";
    if (ext == ".bmp") return "image/bmp";
    if (ext == ".svg") return "image/svg+xml";
    return "application/octet-stream";
}

}  // namespace

void register_routes(httplib::Server& server, Engine& engine, std::filesystem::path asset_root) {
    server.Get("/v1/healthz", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, {{"status", "ok"}});
    });

    server.Get("/v1/datasets", [&engine](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            json list = json::array();
            for (const auto& d : engine.datasets()) {
                list.push_back({{"name", d.name},
                                {"N", d.num_images},
                                {"M", d.attribute_names.size()},
                                {"attribute_names", d.attribute_names}});
            }
            send_json(res, {{"datasets", list}});
        });
    });

    server.Post("/v1/sessions", [&engine](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = parse_body(req);
            CreateRequest request;
            request.dataset = body.at("dataset").get<std::string>();
            request.mode = session_mode_from_string(body.at("mode").get<std::string>());
            const auto index = engine.dataset(request.dataset);
            request.keyword_filter = parse_keyword_filter(body.value("keyword_filter", json(nullptr)), *index);
            if (body.contains("seed")) request.seed = body["seed"].get<std::uint64_t>();
            request.page_size = body.value("page_size", std::size_t{40});
            const auto view = engine.create_session(request);
            send_json(res,
                      {{"session_id", view.session_id},
                       {"mode", std::string(to_string(view.mode))},
                       {"page", to_json(view.page, *index)},
                       {"question", question_or_null(view, *index)},
                       {"entropy", view.entropy},
                       {"iteration", view.iteration}},
                      201);
        });
    });

    server.Post("/v1/sessions/:id/feedback", [&engine](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto& id = req.path_params.at("id");
            const auto body = parse_body(req);
            const auto index = engine.dataset(engine.view(id).dataset);
            const PageRequest page{body.value("page", std::size_t{0}), body.value("page_size", std::size_t{40})};
            const auto view = engine.submit_feedback(id, parse_feedback(body, *index), page);
            send_json(res, {{"page", to_json(view.page, *index)},
                            {"question", question_or_null(view, *index)},
                            {"exhausted", view.exhausted},
                            {"entropy", view.entropy},
                            {"iteration", view.iteration}});
        });
    });

    server.Get("/v1/sessions/:id/results", [&engine](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto& id = req.path_params.at("id");
            const auto index = engine.dataset(engine.view(id).dataset);
            const PageRequest page{query_size(req, "page", 0), query_size(req, "page_size", 40)};
            const auto result = engine.get_results(id, page);
            send_json(res, {{"items", to_json(result, *index)},
                            {"page", result.page},
                            {"page_size", result.page_size},
                            {"total", result.total}});
        });
    });

    server.Get("/v1/images/:dataset/:id", [&engine, asset_root](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto index = engine.dataset(req.path_params.at("dataset"));
            const auto& text = req.path_params.at("id");
            std::size_t pos = 0;
            unsigned long long id = 0;
            try {
                id = std::stoull(text, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos == 0 || pos != text.size() || id >= index->size()) throw NotFound("unknown image '" + text + "'");
            const auto& asset = index->asset_paths.empty() ? std::nullopt : index->asset_paths[id];
            if (!asset) throw NotFound("image has no asset");
            const auto root = std::filesystem::weakly_canonical(asset_root);
            const auto path = std::filesystem::weakly_canonical(root / *asset);
            const auto rel = path.lexically_relative(root);
            if (rel.empty() || *rel.begin() == "..") throw NotFound("asset outside the data directory");
            std::ifstream in(path, std::ios::binary);
            if (!in) throw NotFound("asset file missing");
            std::ostringstream bytes;
            bytes << in.rdbuf();
            res.set_content(bytes.str(), content_type_for(path));
        });
    });
}

}  // namespace relsearch

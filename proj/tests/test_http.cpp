#include "relsearch/http_api.hpp"

#include "relsearch/experiment.hpp"

#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

using namespace relsearch;
using nlohmann::json;

namespace {

// A live server on an ephemeral port, backed by a 60-image synthetic index.
class TestServer {
public:
    TestServer() {
        root_ = std::filesystem::temp_directory_path() / "relsearch_http_test";
        std::filesystem::create_directories(root_ / "img");
        std::ofstream(root_ / "img" / "0.png", std::ios::binary) << "\x89PNG fake";
        std::ofstream(root_.parent_path() / "relsearch_secret.txt") << "secret";

        DataSource source;
        SynthConfig cfg;
        cfg.num_images = 60;
        cfg.dim = 6;
        cfg.num_attributes = 3;
        cfg.pairs_per_attribute = 100;
        source.synthetic = cfg;
        auto index = prepare_index(source);
        index.name = "synth";
        index.asset_paths[0] = "img/0.png";
        index.asset_paths[1] = "../relsearch_secret.txt";
        index.asset_paths[2] = "img/missing.jpg";
        engine_.add_dataset(std::make_shared<const SearchIndex>(std::move(index)));

        register_routes(server_, engine_, root_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~TestServer() {
        server_.stop();
        thread_.join();
        std::filesystem::remove_all(root_);
        std::filesystem::remove(root_.parent_path() / "relsearch_secret.txt");
    }

    httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

private:
    std::filesystem::path root_;
    Engine engine_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

json post(httplib::Client& c, const std::string& path, const json& body, int expected_status) {
    const auto res = c.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == expected_status);
    return json::parse(res->body);
}

json get(httplib::Client& c, const std::string& path, int expected_status) {
    const auto res = c.Get(path);
    REQUIRE(res);
    CHECK(res->status == expected_status);
    return json::parse(res->body);
}

}  // namespace

TEST_CASE("http api end to end") {
    TestServer server;
    auto c = server.client();

    CHECK(get(c, "/v1/healthz", 200)["status"] == "ok");
    const auto datasets = get(c, "/v1/datasets", 200)["datasets"];
    REQUIRE(datasets.size() == 1);
    CHECK(datasets[0]["name"] == "synth");
    CHECK(datasets[0]["N"] == 60);
    CHECK(datasets[0]["M"] == 3);
    const auto names = datasets[0]["attribute_names"];
    REQUIRE(names.size() == 3);

    SUBCASE("free session") {
        const auto created = post(c, "/v1/sessions", {{"dataset", "synth"}, {"mode", "free"}, {"seed", 4}, {"page_size", 10}}, 201);
        const std::string id = created["session_id"];
        CHECK(created["mode"] == "free");
        CHECK(created["question"].is_null());
        REQUIRE(created["page"].size() == 10);
        const auto& first = created["page"][0];
        for (const char* key : {"id", "asset_path", "score", "satisfied_count", "attributes"}) CHECK(first.contains(key));
        CHECK(first["attributes"].size() == 3);

        const int ref = created["page"][1]["id"];
        const auto fb = post(c, "/v1/sessions/" + id + "/feedback",
                             {{"statements", {{{"ref_id", ref}, {"attribute", names[0]}, {"response", "more"}, {"confidence", 3}}}},
                              {"page_size", 5}},
                             200);
        CHECK(fb["iteration"] == 1);
        CHECK(fb["page"].size() == 5);

        const auto results = get(c, "/v1/sessions/" + id + "/results?page=1&page_size=25", 200);
        CHECK(results["items"].size() == 25);
        CHECK(results["total"] == 60);
        CHECK(get(c, "/v1/sessions/" + id + "/results?page=2&page_size=25", 200)["items"].size() == 10);
        CHECK(get(c, "/v1/sessions/" + id + "/results?page=3&page_size=25", 400).contains("error"));
        CHECK(get(c, "/v1/sessions/" + id + "/results?page=-1", 400).contains("error"));

        // A reference never displayed to this session.
        const auto fresh = post(c, "/v1/sessions", {{"dataset", "synth"}, {"mode", "free"}, {"seed", 4}, {"page_size", 3}}, 201);
        std::set<int> shown;
        for (const auto& item : fresh["page"]) shown.insert(item["id"].get<int>());
        int hidden = 0;
        while (shown.count(hidden)) ++hidden;
        const auto rejected = post(c, "/v1/sessions/" + fresh["session_id"].get<std::string>() + "/feedback",
                                   {{"statements", {{{"ref_id", hidden}, {"attribute", 0}, {"response", "less"}}}}}, 400);
        CHECK(rejected["error"].get<std::string>().find("reference not shown") != std::string::npos);

        CHECK(post(c, "/v1/sessions/" + id + "/feedback", {{"statements", {{{"ref_id", ref}, {"attribute", "glitter"}, {"response", "more"}}}}}, 400)
                  .contains("error"));
        CHECK(post(c, "/v1/sessions/" + id + "/feedback", {{"statements", {{{"ref_id", ref}, {"attribute", 1}, {"response", "sideways"}}}}}, 400)
                  .contains("error"));
    }

    SUBCASE("active session and question tokens") {
        const auto created = post(c, "/v1/sessions", {{"dataset", "synth"}, {"mode", "active"}, {"seed", 2}}, 201);
        const std::string id = created["session_id"];
        REQUIRE(created["question"].is_object());
        const std::string token = created["question"]["token"];
        CHECK(created["question"].contains("pivot_image"));
        CHECK(created["question"].contains("attribute_name"));

        const auto next = post(c, "/v1/sessions/" + id + "/feedback", {{"response", "less"}, {"question_token", token}}, 200);
        CHECK(next["iteration"] == 1);
        CHECK(next["exhausted"] == false);
        CHECK(next["question"]["token"] != token);
        // Retrying the answered question.
        CHECK(post(c, "/v1/sessions/" + id + "/feedback", {{"response", "less"}, {"question_token", token}}, 409).contains("error"));

        json current = next;
        int guard = 0;
        while (!current["question"].is_null() && guard++ < 10) {
            current = post(c, "/v1/sessions/" + id + "/feedback",
                           {{"response", "equal"}, {"question_token", current["question"]["token"]}}, 200);
        }
        CHECK(current["exhausted"] == true);
    }

    SUBCASE("keyword filter and hybrid") {
        const auto created = post(c, "/v1/sessions",
                                  {{"dataset", "synth"},
                                   {"mode", "hybrid"},
                                   {"keyword_filter", {{{"attribute", names[1]}, {"level", "high"}}}}},
                                  201);
        CHECK(created["page"].size() == 20);
        const std::string id = created["session_id"];
        const int a = created["page"][0]["id"];
        const int b = created["page"][1]["id"];
        const auto fb = post(c, "/v1/sessions/" + id + "/feedback", {{"relevant", {b}}, {"irrelevant", {a}}}, 200);
        CHECK(fb["iteration"] == 1);
        CHECK(post(c, "/v1/sessions", {{"dataset", "synth"}, {"mode", "free"}, {"keyword_filter", {{{"attribute", 0}, {"level", "middling"}}}}}, 400)
                  .contains("error"));
    }

    SUBCASE("errors") {
        CHECK(post(c, "/v1/sessions", {{"dataset", "nope"}, {"mode", "free"}}, 404).contains("error"));
        CHECK(post(c, "/v1/sessions", {{"dataset", "synth"}, {"mode", "psychic"}}, 400).contains("error"));
        CHECK(post(c, "/v1/sessions", {{"mode", "free"}}, 400).contains("error"));
        CHECK(get(c, "/v1/sessions/unknown/results", 404).contains("error"));
        CHECK(post(c, "/v1/sessions/unknown/feedback", json::object(), 404).contains("error"));
        const auto res = c.Post("/v1/sessions", "{not json", "application/json");
        REQUIRE(res);
        CHECK(res->status == 400);
    }

    SUBCASE("images") {
        const auto ok = c.Get("/v1/images/synth/0");
        REQUIRE(ok);
        CHECK(ok->status == 200);
        CHECK(ok->get_header_value("Content-Type") == "image/png");
        CHECK(ok->body == "\x89PNG fake");
        for (const char* path : {"/v1/images/synth/1", "/v1/images/synth/2", "/v1/images/synth/3", "/v1/images/synth/999",
                                 "/v1/images/synth/x", "/v1/images/other/0"}) {
            const auto res = c.Get(path);
            REQUIRE(res);
            CHECK(res->status == 404);
        }
    }
}

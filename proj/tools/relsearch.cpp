#include "relsearch/experiment.hpp"
#include "relsearch/http_api.hpp"
#include "relsearch/service.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace relsearch;

namespace {

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void ensure_parent(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    ensure_parent(path);
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

SearchIndex load_index(const std::string& dataset, const std::string& model, const std::string& index) {
    DataSource source;
    source.dataset_path = dataset;
    source.model_path = model;
    if (!index.empty()) source.index_path = index;
    return prepare_index(source);
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Relative-attribute interactive image search"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synthesize", "Write a synthetic dataset manifest");
    std::string synth_out, synth_config;
    SynthConfig sc;
    synth->add_option("--out", synth_out, "Manifest path")->required();
    synth->add_option("--config", synth_config, "JSON generator settings (overrides the flags)");
    synth->add_option("--images", sc.num_images);
    synth->add_option("--dim", sc.dim);
    synth->add_option("--attributes", sc.num_attributes);
    synth->add_option("--classes", sc.num_classes);
    synth->add_option("--pairs", sc.pairs_per_attribute, "Labeled pairs per attribute");
    synth->add_option("--label-noise", sc.noise_sd);
    synth->add_option("--seed", sc.seed);

    auto* train = app.add_subcommand("train", "Train attribute rankers and calibration");
    std::string train_dataset, train_out;
    TrainConfig tc;
    train->add_option("--dataset", train_dataset)->required();
    train->add_option("--out", train_out, "Model path")->required();
    train->add_option("--C", tc.C);
    train->add_option("--epochs", tc.epochs);
    train->add_option("--seed", tc.seed);

    auto* index = app.add_subcommand("index", "Build the per-attribute pivot trees");
    std::string index_dataset, index_model, index_out;
    index->add_option("--dataset", index_dataset)->required();
    index->add_option("--model", index_model)->required();
    index->add_option("--out", index_out)->required();

    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    std::string serve_dataset, serve_model, serve_index, serve_host = "127.0.0.1", serve_store;
    int serve_port = 8080;
    int ttl_seconds = 3600;
    serve->add_option("--dataset", serve_dataset)->required();
    serve->add_option("--model", serve_model)->required();
    serve->add_option("--index", serve_index);
    serve->add_option("--port", serve_port);
    serve->add_option("--host", serve_host);
    serve->add_option("--ttl", ttl_seconds, "Idle session lifetime in seconds");
    serve->add_option("--session-store", serve_store, "Load sessions from and save them to this file");

    auto* simulate = app.add_subcommand("simulate", "Run one simulated search and print its trace");
    std::string sim_dataset, sim_model, sim_index, sim_policy = "active_pivots", sim_likelihood = "most_relevant";
    ImageId sim_target = 0;
    std::uint64_t sim_seed = 1;
    std::size_t sim_iterations = 10;
    simulate->add_option("--dataset", sim_dataset)->required();
    simulate->add_option("--model", sim_model)->required();
    simulate->add_option("--index", sim_index);
    simulate->add_option("--policy", sim_policy);
    simulate->add_option("--likelihood", sim_likelihood);
    simulate->add_option("--target", sim_target);
    simulate->add_option("--seed", sim_seed);
    simulate->add_option("--iterations", sim_iterations);

    auto* evaluate = app.add_subcommand("evaluate", "Run a batch experiment from a JSON config");
    std::string eval_config, eval_out;
    evaluate->add_option("--config", eval_config)->required();
    evaluate->add_option("--out", eval_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            if (!synth_config.empty()) sc = synth_config_from_json(read_text(synth_config));
            ensure_parent(synth_out);
            save_manifest(synthesize_dataset(sc).manifest, synth_out);
        } else if (train->parsed()) {
            const auto manifest = load_manifest(train_dataset);
            const auto models = train_models(manifest, tc);
            ensure_parent(train_out);
            save_models(models, train_out);
            for (const auto& m : models.models) {
                std::cout << models.attribute_names[m.attribute] << ": training violation rate "
                          << m.train_violation_rate << '\n';
            }
        } else if (index->parsed()) {
            const auto built = load_index(index_dataset, index_model, "");
            write_text(index_out, serialize_trees(built.trees, built.attribute_names));
        } else if (serve->parsed()) {
            EngineOptions options;
            options.idle_ttl = std::chrono::seconds(ttl_seconds);
            Engine engine(options);
            engine.add_dataset(std::make_shared<const SearchIndex>(load_index(serve_dataset, serve_model, serve_index)));
            if (!serve_store.empty() && std::filesystem::exists(serve_store)) {
                std::cout << "restored " << engine.load_sessions(serve_store) << " sessions\n";
            }
            httplib::Server server;
            register_routes(server, engine, asset_root_from_env());
            g_server = &server;
            std::signal(SIGINT, stop_server);
            std::signal(SIGTERM, stop_server);
            std::cout << "listening on " << serve_host << ':' << serve_port << std::endl;
            if (!server.listen(serve_host, serve_port)) throw Error("cannot listen on port " + std::to_string(serve_port));
            if (!serve_store.empty()) engine.save_sessions(serve_store);
        } else if (simulate->parsed()) {
            const auto built = load_index(sim_dataset, sim_model, sim_index);
            const GroundTruthMetric metric(built);
            EpisodeConfig config;
            config.iterations = sim_iterations;
            config.likelihood.kind = likelihood_from_string(sim_likelihood);
            const auto result = run_episode(policy_from_string(sim_policy), built, metric, sim_target, config, sim_seed);
            std::cout << "iteration,percentile_rank,ndcg,entropy,selection_seconds,constraints\n";
            for (const auto& r : result.records) {
                std::cout << r.iteration << ',' << r.percentile_rank << ',' << r.ndcg << ',' << r.entropy << ','
                          << r.selection_seconds << ',' << r.constraints << '\n';
            }
            if (result.exhausted_early) std::cout << "# ran out of questions early\n";
        } else if (evaluate->parsed()) {
            const auto file = load_experiment_config(eval_config);
            const auto built = prepare_index(file.data);
            const auto result = run_experiment(built, file.experiment);
            const std::filesystem::path out = eval_out;
            write_text(out / "results.csv", results_csv(result));
            write_text(out / "plot_data.json", plot_data_json(result));
            for (const auto& [policy, finals] : result.final_percentile) {
                double sum = 0.0;
                std::size_t n = 0;
                for (double v : finals) {
                    if (v == v) {
                        sum += v;
                        ++n;
                    }
                }
                std::cout << to_string(policy) << ": mean final percentile rank " << (n ? sum / n : 0.0)
                          << " (failures " << result.failures.at(policy) << ", exhausted early "
                          << result.exhausted_early.at(policy) << ")\n";
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

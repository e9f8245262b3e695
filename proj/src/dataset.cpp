#include "relsearch/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace relsearch {

using nlohmann::json;

std::string_view to_string(Response r) {
    switch (r) {
        case Response::More: return "more";
        case Response::Less: return "less";
        case Response::Equal: return "equal";
    }
    return "equal";
}

Response response_from_string(std::string_view s) {
    if (s == "more") return Response::More;
    if (s == "less") return Response::Less;
    if (s == "equal" || s == "equally") return Response::Equal;
    throw InvalidInput("unknown response '" + std::string(s) + "'");
}

FeatureMatrix DatasetManifest::feature_matrix() const {
    FeatureMatrix x(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (std::size_t k = 0; k < dim; ++k) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = images[i].features[k];
        }
    }
    return x;
}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
    throw InvalidInput(field + ": " + what);
}

std::string at(const std::string& base, std::size_t index) {
    return base + "[" + std::to_string(index) + "]";
}

}  // namespace

void validate(const DatasetManifest& m) {
    if (m.dim == 0) fail("d", "feature dimension must be positive");
    if (m.images.size() != m.num_images) {
        fail("images", "expected " + std::to_string(m.num_images) + " records, found " +
                           std::to_string(m.images.size()));
    }
    if (m.attribute_names.size() != m.num_attributes) {
        fail("attribute_names", "expected " + std::to_string(m.num_attributes) + " names");
    }
    for (std::size_t i = 0; i < m.images.size(); ++i) {
        const auto& rec = m.images[i];
        if (rec.id != i) fail(at("images", i) + ".id", "ids must be dense 0..N-1, got " + std::to_string(rec.id));
        if (rec.features.size() != m.dim) {
            fail(at("images", i) + ".features", "dimension mismatch: expected " + std::to_string(m.dim) +
                                                    ", got " + std::to_string(rec.features.size()));
        }
        for (double v : rec.features) {
            if (!std::isfinite(v)) fail(at("images", i) + ".features", "non-finite value");
        }
    }
    for (std::size_t k = 0; k < m.comparisons.size(); ++k) {
        const auto& c = m.comparisons[k];
        const auto base = at("comparisons", k);
        if (c.attribute >= m.num_attributes) fail(base + ".attribute", "attribute index out of range");
        if (c.first >= m.num_images) fail(base + ".first", "dangling id " + std::to_string(c.first));
        if (c.second >= m.num_images) fail(base + ".second", "dangling id " + std::to_string(c.second));
        if (c.first == c.second) fail(base, "first and second must differ");
        if (c.confidence < 1 || c.confidence > 3) fail(base + ".confidence", "must be 1, 2 or 3");
    }
    if (m.class_orders) {
        const auto& orders = *m.class_orders;
        if (orders.size() != m.num_attributes) fail("class_orders", "expected one row per attribute");
        const std::size_t classes = orders.empty() ? 0 : orders.front().size();
        for (std::size_t r = 0; r < orders.size(); ++r) {
            if (orders[r].size() != classes) fail(at("class_orders", r), "ragged row");
            for (int v : orders[r]) {
                if (v < 1 || static_cast<std::size_t>(v) > classes) {
                    fail(at("class_orders", r), "rank " + std::to_string(v) + " outside 1.." +
                                                    std::to_string(classes));
                }
            }
        }
        for (std::size_t i = 0; i < m.images.size(); ++i) {
            const auto& cls = m.images[i].class_id;
            if (cls && *cls >= classes) fail(at("images", i) + ".class_id", "class outside class_orders");
        }
    }
}

namespace {

template <typename T>
T field(const json& j, const std::string& key, const std::string& path) {
    auto it = j.find(key);
    if (it == j.end()) fail(path + "." + key, "missing field");
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        fail(path + "." + key, std::string("wrong type (") + e.what() + ")");
    }
}

std::size_t line_of(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

}  // namespace

DatasetManifest parse_manifest(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidInput("parse error at line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
    }
    if (!doc.is_object()) fail("$", "dataset must be a JSON object");

    DatasetManifest m;
    m.name = field<std::string>(doc, "name", "$");
    m.num_images = field<std::size_t>(doc, "N", "$");
    m.dim = field<std::size_t>(doc, "d", "$");
    m.num_attributes = field<std::size_t>(doc, "M", "$");
    m.attribute_names = field<std::vector<std::string>>(doc, "attribute_names", "$");

    const auto images = field<json>(doc, "images", "$");
    if (!images.is_array()) fail("images", "must be an array");
    m.images.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& j = images[i];
        const auto path = at("images", i);
        ImageRecord rec;
        rec.id = field<ImageId>(j, "id", path);
        rec.features = field<std::vector<double>>(j, "features", path);
        if (j.contains("class_id") && !j["class_id"].is_null()) rec.class_id = field<std::uint32_t>(j, "class_id", path);
        if (j.contains("asset_path") && !j["asset_path"].is_null()) rec.asset_path = field<std::string>(j, "asset_path", path);
        m.images.push_back(std::move(rec));
    }

    const auto comparisons = field<json>(doc, "comparisons", "$");
    if (!comparisons.is_array()) fail("comparisons", "must be an array");
    m.comparisons.reserve(comparisons.size());
    for (std::size_t k = 0; k < comparisons.size(); ++k) {
        const auto& j = comparisons[k];
        const auto path = at("comparisons", k);
        ComparisonLabel c;
        c.attribute = field<AttributeIndex>(j, "attribute", path);
        c.first = field<ImageId>(j, "first", path);
        c.second = field<ImageId>(j, "second", path);
        try {
            c.relation = response_from_string(field<std::string>(j, "relation", path));
        } catch (const InvalidInput& e) {
            fail(path + ".relation", e.what());
        }
        c.confidence = field<int>(j, "confidence", path);
        m.comparisons.push_back(c);
    }

    if (doc.contains("class_orders") && !doc["class_orders"].is_null()) {
        m.class_orders = field<ClassOrders>(doc, "class_orders", "$");
    }
    validate(m);
    return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open dataset file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_manifest(buffer.str());
    } catch (const InvalidInput& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
}

std::string serialize_manifest(const DatasetManifest& m) {
    json doc;
    doc["name"] = m.name;
    doc["N"] = m.num_images;
    doc["d"] = m.dim;
    doc["M"] = m.num_attributes;
    doc["attribute_names"] = m.attribute_names;
    json images = json::array();
    for (const auto& rec : m.images) {
        json j{{"id", rec.id}, {"features", rec.features}};
        if (rec.class_id) j["class_id"] = *rec.class_id;
        if (rec.asset_path) j["asset_path"] = *rec.asset_path;
        images.push_back(std::move(j));
    }
    doc["images"] = std::move(images);
    json comparisons = json::array();
    for (const auto& c : m.comparisons) {
        comparisons.push_back({{"attribute", c.attribute},
                               {"first", c.first},
                               {"second", c.second},
                               {"relation", to_string(c.relation)},
                               {"confidence", c.confidence}});
    }
    doc["comparisons"] = std::move(comparisons);
    if (m.class_orders) doc["class_orders"] = *m.class_orders;
    // nlohmann prints the shortest representation that round-trips a double.
    return doc.dump();
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write dataset file " + path.string());
    out << serialize_manifest(m);
}

const ClassOrders& shoe_class_orders() {
    static const ClassOrders orders = {
        {2, 6, 3, 5, 10, 9, 4, 1, 8, 7},   // pointy at the front
        {3, 2, 8, 5, 7, 6, 1, 4, 9, 10},   // open
        {6, 1, 2, 8, 4, 3, 10, 7, 9, 5},   // bright in color
        {4, 9, 6, 5, 8, 7, 1, 3, 10, 2},   // covered with ornaments
        {2, 9, 4, 3, 6, 5, 8, 1, 10, 7},   // shiny
        {4, 6, 5, 1, 9, 8, 3, 2, 10, 7},   // high at the heel
        {7, 9, 2, 3, 6, 5, 10, 8, 4, 1},   // long on the leg
        {3, 6, 4, 7, 9, 8, 1, 2, 5, 10},   // formal
        {10, 5, 6, 7, 4, 3, 8, 9, 1, 2},   // sporty
        {1, 6, 4, 5, 10, 9, 3, 2, 8, 7},   // feminine
    };
    return orders;
}

const std::vector<std::string>& shoe_attribute_names() {
    static const std::vector<std::string> names = {
        "pointy", "open", "bright", "ornamented", "shiny",
        "high_heel", "long_leg", "formal", "sporty", "feminine",
    };
    return names;
}

SynthResult synthesize_dataset(const SynthConfig& cfg) {
    const std::size_t n = cfg.num_images;
    const std::size_t nm = cfg.num_attributes;
    const std::size_t nc = cfg.num_classes;
    if (nc < 2 || n < nc) throw InvalidInput("synth: need N >= C >= 2");
    if (nm < 1) throw InvalidInput("synth: need M >= 1");
    if (cfg.dim < nm) throw InvalidInput("synth: need d >= M");
    if (cfg.noise_sd < 0.0 || cfg.jitter_sd < 0.0 || cfg.equal_band_fraction < 0.0) {
        throw InvalidInput("synth: noise, jitter and band must be non-negative");
    }

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    ClassOrders orders;
    std::vector<std::string> names = cfg.attribute_names;
    if (cfg.class_orders) {
        orders = *cfg.class_orders;
        if (orders.size() != nm) throw InvalidInput("synth: class_orders needs one row per attribute");
        for (const auto& row : orders) {
            if (row.size() != nc) throw InvalidInput("synth: class_orders rows need C entries");
        }
    } else if (nc == 10 && nm <= 10) {
        orders.assign(shoe_class_orders().begin(), shoe_class_orders().begin() + static_cast<long>(nm));
        if (names.empty()) names.assign(shoe_attribute_names().begin(), shoe_attribute_names().begin() + static_cast<long>(nm));
    } else {
        for (std::size_t m = 0; m < nm; ++m) {
            std::vector<int> row(nc);
            std::iota(row.begin(), row.end(), 1);
            std::shuffle(row.begin(), row.end(), rng);
            orders.push_back(std::move(row));
        }
    }
    if (names.empty()) {
        for (std::size_t m = 0; m < nm; ++m) names.push_back("attr" + std::to_string(m));
    }
    if (names.size() != nm) throw InvalidInput("synth: attribute_names needs M entries");

    std::vector<std::uint32_t> classes(n);
    for (std::size_t i = 0; i < n; ++i) classes[i] = static_cast<std::uint32_t>(i % nc);
    std::shuffle(classes.begin(), classes.end(), rng);

    SynthResult out;
    out.latent.assign(nm, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t m = 0; m < nm; ++m) {
            out.latent[m][i] = orders[m][classes[i]] + cfg.jitter_sd * normal(rng);
        }
    }

    auto& man = out.manifest;
    man.name = "synthetic";
    man.num_images = n;
    man.dim = cfg.dim;
    man.num_attributes = nm;
    man.attribute_names = names;
    man.class_orders = orders;
    man.images.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        man.images[i].id = static_cast<ImageId>(i);
        man.images[i].class_id = classes[i];
        man.images[i].features.assign(cfg.dim, 0.0);
    }
    for (std::size_t m = 0; m < nm; ++m) {
        const auto& lat = out.latent[m];
        const double mean = std::accumulate(lat.begin(), lat.end(), 0.0) / static_cast<double>(n);
        double var = 0.0;
        for (double v : lat) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            man.images[i].features[m] = sd > 0.0 ? (lat[i] - mean) / sd : 0.0;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = nm; k < cfg.dim; ++k) man.images[i].features[k] = normal(rng);
    }

    const double band = cfg.equal_band_fraction * cfg.jitter_sd;
    const double flip = std::min(0.5, cfg.noise_sd);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t m = 0; m < nm; ++m) {
        for (std::size_t p = 0; p < cfg.pairs_per_attribute; ++p) {
            std::size_t i = pick(rng);
            std::size_t j = pick(rng);
            while (j == i) j = pick(rng);
            const double diff = out.latent[m][i] - out.latent[m][j];
            ComparisonLabel c;
            c.attribute = static_cast<AttributeIndex>(m);
            c.first = static_cast<ImageId>(i);
            c.second = static_cast<ImageId>(j);
            const double gap = std::abs(diff);
            if (gap < band || gap == 0.0) {
                c.relation = Response::Equal;
                c.confidence = 2;
            } else {
                c.relation = diff > 0.0 ? Response::More : Response::Less;
                c.confidence = gap > 2.0 ? 3 : (gap > 1.0 ? 2 : 1);
                // Always draw so the stream does not depend on noise_sd.
                const double u = unit(rng);
                if (u < flip) c.relation = c.relation == Response::More ? Response::Less : Response::More;
            }
            man.comparisons.push_back(c);
        }
    }
    validate(man);
    return out;
}

std::vector<ComparisonLabel> aggregate_majority(const std::vector<RawVote>& votes, int min_agree) {
    struct Tally {
        int count[kResponseCount] = {0, 0, 0};
        int confidence[kResponseCount] = {0, 0, 0};
    };
    std::map<std::tuple<AttributeIndex, ImageId, ImageId>, Tally> tallies;
    for (const auto& v : votes) {
        if (v.first == v.second) continue;
        auto rel = v.relation;
        auto a = v.first;
        auto b = v.second;
        if (a > b) {
            std::swap(a, b);
            if (rel != Response::Equal) rel = rel == Response::More ? Response::Less : Response::More;
        }
        auto& t = tallies[{v.attribute, a, b}];
        t.count[static_cast<int>(rel)] += 1;
        t.confidence[static_cast<int>(rel)] += v.confidence;
    }
    std::vector<ComparisonLabel> out;
    for (const auto& [key, t] : tallies) {
        for (std::size_t r = 0; r < kResponseCount; ++r) {
            if (t.count[r] >= min_agree) {
                ComparisonLabel c;
                c.attribute = std::get<0>(key);
                c.first = std::get<1>(key);
                c.second = std::get<2>(key);
                c.relation = static_cast<Response>(r);
                c.confidence = static_cast<int>(std::lround(static_cast<double>(t.confidence[r]) / t.count[r]));
                out.push_back(c);
                break;
            }
        }
    }
    return out;
}

}  // namespace relsearch

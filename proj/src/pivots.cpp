#include "relsearch/pivots.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>

namespace relsearch {

using nlohmann::json;

AttributeTree::AttributeTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
    // Nodes are stored in pre-order, so every child sits after its parent.
    for (std::size_t k = nodes_.size(); k-- > 0;) {
        auto& n = nodes_[k];
        n.subset_size = 1;
        if (n.left) n.subset_size += nodes_[*n.left].subset_size;
        if (n.right) n.subset_size += nodes_[*n.right].subset_size;
    }
}

std::size_t AttributeTree::depth() const {
    if (nodes_.empty()) return 0;
    std::size_t best = 0;
    std::vector<std::pair<NodeIndex, std::size_t>> stack{{0, 1}};
    while (!stack.empty()) {
        auto [at, d] = stack.back();
        stack.pop_back();
        best = std::max(best, d);
        if (nodes_[at].left) stack.emplace_back(*nodes_[at].left, d + 1);
        if (nodes_[at].right) stack.emplace_back(*nodes_[at].right, d + 1);
    }
    return best;
}

std::vector<NodeIndex> AttributeTree::in_order() const {
    std::vector<NodeIndex> out;
    if (nodes_.empty()) return out;
    std::vector<NodeIndex> stack;
    std::optional<NodeIndex> cur = 0;
    while (cur || !stack.empty()) {
        while (cur) {
            stack.push_back(*cur);
            cur = nodes_[*cur].left;
        }
        const NodeIndex top = stack.back();
        stack.pop_back();
        out.push_back(top);
        cur = nodes_[top].right;
    }
    return out;
}

AttributeTree build_tree(std::span<const double> values) {
    if (values.empty()) throw InvalidInput("build_tree: empty input");
    std::vector<ImageId> order(values.size());
    std::iota(order.begin(), order.end(), ImageId{0});
    std::sort(order.begin(), order.end(), [&](ImageId a, ImageId b) {
        return values[a] != values[b] ? values[a] < values[b] : a < b;
    });

    std::vector<TreeNode> nodes;
    nodes.reserve(order.size());
    // Pre-order construction over half-open ranges of `order`.
    struct Frame {
        std::size_t lo, hi;
        std::optional<NodeIndex> parent;
        bool is_left;
    };
    std::vector<Frame> stack{{0, order.size(), std::nullopt, false}};
    while (!stack.empty()) {
        const Frame f = stack.back();
        stack.pop_back();
        const std::size_t mid = f.lo + (f.hi - f.lo - 1) / 2;
        const auto index = static_cast<NodeIndex>(nodes.size());
        nodes.push_back({order[mid], values[order[mid]], std::nullopt, std::nullopt, 0});
        if (f.parent) (f.is_left ? nodes[*f.parent].left : nodes[*f.parent].right) = index;
        if (mid + 1 < f.hi) stack.push_back({mid + 1, f.hi, index, false});
        if (f.lo < mid) stack.push_back({f.lo, mid, index, true});
    }
    return AttributeTree(std::move(nodes));
}

PivotSet PivotSet::at_roots(std::span<const AttributeTree> trees) {
    PivotSet p;
    for (const auto& t : trees) p.cursors.push_back(t.empty() ? Cursor{} : Cursor{0});
    return p;
}

bool PivotSet::all_exhausted() const {
    return std::none_of(cursors.begin(), cursors.end(), [](const Cursor& c) { return c.has_value(); });
}

std::size_t PivotSet::live_count() const {
    return static_cast<std::size_t>(std::count_if(cursors.begin(), cursors.end(), [](const Cursor& c) { return c.has_value(); }));
}

PivotSet descend(const PivotSet& pivots, std::span<const AttributeTree> trees, AttributeIndex attribute,
                 Response response) {
    if (attribute >= pivots.cursors.size() || attribute >= trees.size()) throw InvalidInput("descend: unknown attribute");
    const auto& cursor = pivots.cursors[attribute];
    if (!cursor) throw InvalidInput("descend: attribute " + std::to_string(attribute) + " is exhausted");
    PivotSet next = pivots;
    const auto& node = trees[attribute].node(*cursor);
    switch (response) {
        case Response::Less: next.cursors[attribute] = node.left; break;
        case Response::More: next.cursors[attribute] = node.right; break;
        case Response::Equal: next.cursors[attribute] = std::nullopt; break;
    }
    return next;
}

std::string serialize_trees(std::span<const AttributeTree> trees, std::span<const std::string> attribute_names) {
    if (trees.size() != attribute_names.size()) throw InvalidInput("index: one tree per attribute required");
    json doc;
    json by_name = json::object();
    for (std::size_t m = 0; m < trees.size(); ++m) {
        json arr = json::array();
        for (const auto& n : trees[m].nodes()) {
            json j{{"pivot_image", n.pivot_image}, {"pivot_value", n.pivot_value}};
            if (n.left) j["left_index"] = *n.left;
            if (n.right) j["right_index"] = *n.right;
            arr.push_back(std::move(j));
        }
        by_name[attribute_names[m]] = std::move(arr);
    }
    doc["trees"] = std::move(by_name);
    return doc.dump();
}

std::vector<AttributeTree> parse_trees(const std::string& text, std::span<const std::string> attribute_names) {
    std::vector<AttributeTree> out;
    try {
        const auto doc = json::parse(text);
        const auto& by_name = doc.at("trees");
        for (const auto& name : attribute_names) {
            if (!by_name.contains(name)) throw InvalidInput("index file: no tree for attribute '" + name + "'");
            std::vector<TreeNode> nodes;
            for (const auto& j : by_name.at(name)) {
                TreeNode n;
                n.pivot_image = j.at("pivot_image").get<ImageId>();
                n.pivot_value = j.at("pivot_value").get<double>();
                if (j.contains("left_index")) n.left = j["left_index"].get<NodeIndex>();
                if (j.contains("right_index")) n.right = j["right_index"].get<NodeIndex>();
                nodes.push_back(n);
            }
            // Children always follow their parent in pre-order, which also rules out cycles.
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                for (const auto& child : {nodes[k].left, nodes[k].right}) {
                    if (child && (*child >= nodes.size() || *child <= k)) {
                        throw InvalidInput("index file: bad child index in tree for attribute '" + name + "'");
                    }
                }
            }
            out.emplace_back(std::move(nodes));
        }
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("index file: ") + e.what());
    }
    return out;
}

}  // namespace relsearch

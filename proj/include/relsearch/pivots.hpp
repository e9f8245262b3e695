#pragma once

#include "relsearch/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace relsearch {

using NodeIndex = std::uint32_t;

struct TreeNode {
    ImageId pivot_image = 0;
    double pivot_value = 0.0;
    // Left subtree holds images sorted before the pivot (value <= pivot_value),
    // right subtree the ones sorted after it. The pivot itself is in neither.
    std::optional<NodeIndex> left;
    std::optional<NodeIndex> right;
    std::uint32_t subset_size = 0;
};

// Balanced binary search tree over one attribute's predicted values, stored
// flat with the root at index 0.
class AttributeTree {
public:
    AttributeTree() = default;
    explicit AttributeTree(std::vector<TreeNode> nodes);

    const TreeNode& root() const { return nodes_.front(); }
    const TreeNode& node(NodeIndex index) const { return nodes_.at(index); }
    std::span<const TreeNode> nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

    std::size_t depth() const;
    std::vector<NodeIndex> in_order() const;

private:
    std::vector<TreeNode> nodes_;
};

/// Sorts ids by value (ties by id), makes the lower median the pivot and
/// recurses on the items before and after it.
AttributeTree build_tree(std::span<const double> values);

// One cursor per attribute; nullopt means the attribute is exhausted.
using Cursor = std::optional<NodeIndex>;

struct PivotSet {
    std::vector<Cursor> cursors;

    static PivotSet at_roots(std::span<const AttributeTree> trees);
    bool all_exhausted() const;
    std::size_t live_count() const;
    bool operator==(const PivotSet&) const = default;
};

/// LESS moves to the left child, MORE to the right, EQUAL exhausts the
/// attribute. Moving to a missing child also exhausts it.
PivotSet descend(const PivotSet& pivots, std::span<const AttributeTree> trees, AttributeIndex attribute,
                 Response response);

/// {"trees": {attribute name: [{pivot_image, pivot_value, left_index?, right_index?}]}}
std::string serialize_trees(std::span<const AttributeTree> trees, std::span<const std::string> attribute_names);
std::vector<AttributeTree> parse_trees(const std::string& text, std::span<const std::string> attribute_names);

}  // namespace relsearch

#pragma once

#include "lanecast/tensor.hpp"

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lanecast {

/// Handle to a node inside one Graph.
struct NodeId {
    std::size_t index = 0;
    friend bool operator==(NodeId, NodeId) = default;
};

enum class OpKind {
    Leaf,
    Constant,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    Offset,
    LeakyRelu,
    Gelu,
    Logistic,
    Sqrt,
    Softmax,
    RowMean,
    RowVariance,
    Sum,
    ConcatCols,
    ConcatRows,
    SliceCols,
    SliceRows,
    Reshape,
};

std::string_view op_name(OpKind kind);

template <std::floating_point T>
using Bindings = std::unordered_map<std::string, BasicTensor<T>>;

/// Gradient per named leaf, shape-matched to the leaf.
template <std::floating_point T>
using GradientMap = std::map<std::string, BasicTensor<T>>;

template <std::floating_point T>
class Graph;

/// Values of every evaluated node, kept for the reverse pass.
template <std::floating_point T>
class Evaluation {
public:
    const BasicTensor<T>& value(NodeId id) const { return values_.at(id.index); }
    std::size_t size() const noexcept { return values_.size(); }

private:
    friend class Graph<T>;
    std::vector<BasicTensor<T>> values_;
};

/// Static-shape computation graph with exact reverse-mode gradients.
///
/// Nodes are appended in construction order, which is also the evaluation
/// order, so evaluation and gradient accumulation are deterministic. Shapes
/// are inferred when a node is added and mismatches throw ShapeError naming
/// the node. Elementwise binary ops broadcast numpy-style.
///
/// A built graph is immutable from the point of view of evaluate/backward and
/// may be evaluated concurrently from several threads.
template <std::floating_point T>
class Graph {
public:
    /// Declares a named input or parameter. Names are unique per graph.
    NodeId leaf(std::string name, Shape shape);
    NodeId constant(BasicTensor<T> value);

    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId scale(NodeId a, double factor);
    NodeId offset(NodeId a, double shift);
    /// x for x >= 0, slope * x otherwise. The derivative at 0 is taken as 1.
    NodeId leaky_relu(NodeId a, double slope = 0.01);
    /// Tanh-approximated GELU.
    NodeId gelu(NodeId a);
    NodeId logistic(NodeId a);
    NodeId sqrt(NodeId a);
    /// Softmax over the last axis, max-subtracted.
    NodeId softmax(NodeId a);
    /// Mean over the last axis, keeping it as extent 1.
    NodeId row_mean(NodeId a);
    /// Population variance over the last axis, keeping it as extent 1.
    NodeId row_variance(NodeId a);
    /// Sum of all entries, shape [1].
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId square(NodeId a) { return mul(a, a); }
    /// Concatenate along the last axis; leading extents must agree.
    NodeId concat_cols(const std::vector<NodeId>& parts);
    /// Concatenate rank-2 tensors along the first axis.
    NodeId concat_rows(const std::vector<NodeId>& parts);
    /// Columns [begin, end) of the last axis.
    NodeId slice_cols(NodeId a, std::size_t begin, std::size_t end);
    /// Rows [begin, end) of a rank-2 tensor.
    NodeId slice_rows(NodeId a, std::size_t begin, std::size_t end);
    NodeId reshape(NodeId a, Shape shape);

    void set_label(NodeId id, std::string label);

    std::size_t size() const noexcept { return nodes_.size(); }
    const Shape& shape(NodeId id) const { return node(id).shape; }
    OpKind kind(NodeId id) const { return node(id).op; }
    std::span<const NodeId> inputs(NodeId id) const { return node(id).inputs; }
    double parameter(NodeId id) const { return node(id).param; }
    /// "#12 softmax 'attention' [4x4]" style description for diagnostics.
    std::string describe(NodeId id) const;

    bool has_leaf(const std::string& name) const { return leaves_.contains(name); }
    NodeId leaf_id(const std::string& name) const;
    std::vector<std::string> leaf_names() const;

    /// Evaluates every node. Every leaf must be bound with its declared shape.
    Evaluation<T> evaluate(const Bindings<T>& bindings) const;
    /// Evaluates nodes 0..until only; leaves declared after `until` need no binding.
    Evaluation<T> evaluate(const Bindings<T>& bindings, NodeId until) const;

    /// Reverse pass from a scalar node. Leaves the output does not depend on
    /// receive exact zeros.
    GradientMap<T> backward(const Evaluation<T>& evaluation, NodeId output) const;
    GradientMap<T> gradient(const Bindings<T>& bindings, NodeId output) const;

private:
    struct Node {
        OpKind op = OpKind::Leaf;
        std::vector<NodeId> inputs;
        Shape shape;
        double param = 0.0;
        std::size_t begin = 0;
        std::size_t end = 0;
        // Flat source index per output element for broadcast operands; empty
        // when the operand already has the output shape.
        std::vector<std::uint32_t> map_a;
        std::vector<std::uint32_t> map_b;
        std::optional<BasicTensor<T>> constant;
        std::string name;
        bool needs_grad = false;
    };

    const Node& node(NodeId id) const;
    NodeId push(Node n);
    NodeId binary(OpKind op, NodeId a, NodeId b);
    NodeId unary(OpKind op, NodeId a, Shape shape, double param = 0.0);
    void compute(const Node& n, std::size_t index, std::vector<BasicTensor<T>>& values,
                 const Bindings<T>& bindings) const;

    std::vector<Node> nodes_;
    std::unordered_map<std::string, std::size_t> leaves_;
};

extern template class Graph<float>;
extern template class Graph<double>;

/// Left-to-right pairwise-tree summation; the association order depends only
/// on the length.
template <std::floating_point T>
T pairwise_sum(std::span<const T> values);

} // namespace lanecast

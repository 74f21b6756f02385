#include "lanecast/graph.hpp"

#include "lanecast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lanecast {

std::string_view op_name(OpKind kind) {
    switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Scale: return "scale";
    case OpKind::Offset: return "offset";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::Gelu: return "gelu";
    case OpKind::Logistic: return "logistic";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Softmax: return "softmax";
    case OpKind::RowMean: return "row_mean";
    case OpKind::RowVariance: return "row_variance";
    case OpKind::Sum: return "sum";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::SliceRows: return "slice_rows";
    case OpKind::Reshape: return "reshape";
    }
    return "unknown";
}

template <std::floating_point T>
T pairwise_sum(std::span<const T> values) {
    constexpr std::size_t block = 8;
    if (values.size() <= block) {
        T acc = T(0);
        for (T v : values) acc += v;
        return acc;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

template float pairwise_sum<float>(std::span<const float>);
template double pairwise_sum<double>(std::span<const double>);

namespace {

constexpr double kGeluScale = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

std::size_t leading(const Shape& s) {
    return shape_size(s) / s.back();
}

Shape broadcast_shape(const Shape& a, const Shape& b, bool& ok) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    ok = true;
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (ea != eb && ea != 1 && eb != 1) ok = false;
        out[i] = std::max(ea, eb);
    }
    return out;
}

std::vector<std::uint32_t> broadcast_map(const Shape& in, const Shape& out) {
    if (in == out) return {};
    const std::size_t rank = out.size();
    const std::size_t pad = rank - in.size();
    std::vector<std::size_t> in_stride(rank, 0);
    std::size_t stride = 1;
    for (std::size_t i = rank; i-- > pad;) {
        const std::size_t e = in[i - pad];
        in_stride[i] = e == 1 ? 0 : stride;
        stride *= e;
    }
    const std::size_t total = shape_size(out);
    std::vector<std::uint32_t> map(total);
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t src = 0;
        for (std::size_t d = 0; d < rank; ++d) src += idx[d] * in_stride[d];
        map[flat] = static_cast<std::uint32_t>(src);
        for (std::size_t d = rank; d-- > 0;) {
            if (++idx[d] < out[d]) break;
            idx[d] = 0;
        }
    }
    return map;
}

template <typename T>
inline T operand(std::span<const T> v, const std::vector<std::uint32_t>& map, std::size_t i) {
    return map.empty() ? v[i] : v[map[i]];
}

template <typename T>
inline T& operand_ref(std::vector<T>& v, const std::vector<std::uint32_t>& map, std::size_t i) {
    return map.empty() ? v[i] : v[map[i]];
}

} // namespace

template <std::floating_point T>
const typename Graph<T>::Node& Graph<T>::node(NodeId id) const {
    if (id.index >= nodes_.size()) {
        throw ShapeError("node id " + std::to_string(id.index) + " does not belong to this graph");
    }
    return nodes_[id.index];
}

template <std::floating_point T>
NodeId Graph<T>::push(Node n) {
    n.needs_grad = n.op == OpKind::Leaf;
    for (NodeId in : n.inputs) n.needs_grad = n.needs_grad || nodes_[in.index].needs_grad;
    nodes_.push_back(std::move(n));
    return NodeId{nodes_.size() - 1};
}

template <std::floating_point T>
std::string Graph<T>::describe(NodeId id) const {
    const Node& n = node(id);
    std::string s = "#" + std::to_string(id.index) + " " + std::string(op_name(n.op));
    if (!n.name.empty()) s += " '" + n.name + "'";
    return s + " " + shape_string(n.shape);
}

template <std::floating_point T>
void Graph<T>::set_label(NodeId id, std::string label) {
    node(id);
    if (nodes_[id.index].op != OpKind::Leaf) nodes_[id.index].name = std::move(label);
}

template <std::floating_point T>
NodeId Graph<T>::leaf(std::string name, Shape shape) {
    if (name.empty()) throw ShapeError("leaf name must not be empty");
    if (leaves_.contains(name)) throw ShapeError("leaf '" + name + "' declared twice");
    if (shape.empty() || shape_size(shape) == 0) {
        throw ShapeError("leaf '" + name + "' needs positive extents, got " + shape_string(shape));
    }
    Node n;
    n.op = OpKind::Leaf;
    n.shape = std::move(shape);
    n.name = name;
    NodeId id = push(std::move(n));
    leaves_.emplace(std::move(name), id.index);
    return id;
}

template <std::floating_point T>
NodeId Graph<T>::constant(BasicTensor<T> value) {
    Node n;
    n.op = OpKind::Constant;
    n.shape = value.shape();
    n.constant = std::move(value);
    return push(std::move(n));
}

template <std::floating_point T>
NodeId Graph<T>::leaf_id(const std::string& name) const {
    auto it = leaves_.find(name);
    if (it == leaves_.end()) throw ShapeError("graph has no leaf named '" + name + "'");
    return NodeId{it->second};
}

template <std::floating_point T>
std::vector<std::string> Graph<T>::leaf_names() const {
    std::vector<std::string> names;
    for (const Node& n : nodes_) {
        if (n.op == OpKind::Leaf) names.push_back(n.name);
    }
    return names;
}

template <std::floating_point T>
NodeId Graph<T>::unary(OpKind op, NodeId a, Shape shape, double param) {
    node(a);
    Node n;
    n.op = op;
    n.inputs = {a};
    n.shape = std::move(shape);
    n.param = param;
    return push(std::move(n));
}

template <std::floating_point T>
NodeId Graph<T>::binary(OpKind op, NodeId a, NodeId b) {
    const Shape& sa = node(a).shape;
    const Shape& sb = node(b).shape;
    bool ok = false;
    Shape out = broadcast_shape(sa, sb, ok);
    if (!ok) {
        throw ShapeError(std::string(op_name(op)) + " node #" + std::to_string(nodes_.size()) +
                         ": cannot broadcast " + shape_string(sa) + " with " + shape_string(sb));
    }
    Node n;
    n.op = op;
    n.inputs = {a, b};
    n.map_a = broadcast_map(sa, out);
    n.map_b = broadcast_map(sb, out);
    n.shape = std::move(out);
    return push(std::move(n));
}

template <std::floating_point T>
NodeId Graph<T>::matmul(NodeId a, NodeId b) {
    const Shape& sa = node(a).shape;
    const Shape& sb = node(b).shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
        throw ShapeError("matmul node #" + std::to_string(nodes_.size()) + ": incompatible " +
                         shape_string(sa) + " x " + shape_string(sb));
    }
    Node n;
    n.op = OpKind::MatMul;
    n.inputs = {a, b};
    n.shape = {sa[0], sb[1]};
    return push(std::move(n));
}

template <std::floating_point T>
NodeId Graph<T>::transpose(NodeId a) {
    const Shape& s = node(a).shape;
    if (s.size() != 2) {
        throw ShapeError("transpose node #" + std::to_string(nodes_.size()) + ": needs rank 2, got " +
                         shape_string(s));
    }
    return unary(OpKind::Transpose, a, {s[1], s[0]});
}

template <std::floating_point T>
NodeId Graph<T>::add(NodeId a, NodeId b) { return binary(OpKind::Add, a, b); }
template <std::floating_point T>
NodeId Graph<T>::sub(NodeId a, NodeId b) { return binary(OpKind::Sub, a, b); }
template <std::floating_point T>
NodeId Graph<T>::mul(NodeId a, NodeId b) { return binary(OpKind::Mul, a, b); }
template <std::floating_point T>
NodeId Graph<T>::div(NodeId a, NodeId b) { return binary(OpKind::Div, a, b); }

template <std::floating_point T>
NodeId Graph<T>::scale(NodeId a, double factor) {
    return unary(OpKind::Scale, a, node(a).shape, factor);
}

template <std::floating_point T>
NodeId Graph<T>::offset(NodeId a, double shift) {
    return unary(OpKind::Offset, a, node(a).shape, shift);
}

template <std::floating_point T>
NodeId Graph<T>::leaky_relu(NodeId a, double slope) {
    return unary(OpKind::LeakyRelu, a, node(a).shape, slope);
}

template <std::floating_point T>
NodeId Graph<T>::gelu(NodeId a) { return unary(OpKind::Gelu, a, node(a).shape); }
template <std::floating_point T>
NodeId Graph<T>::logistic(NodeId a) { return unary(OpKind::Logistic, a, node(a).shape); }
template <std::floating_point T>
NodeId Graph<T>::sqrt(NodeId a) { return unary(OpKind::Sqrt, a, node(a).shape); }
template <std::floating_point T>
NodeId Graph<T>::softmax(NodeId a) { return unary(OpKind::Softmax, a, node(a).shape); }

template <std::floating_point T>
NodeId Graph<T>::row_mean(NodeId a) {
    Shape s = node(a).shape;
    s.back() = 1;
    return unary(OpKind::RowMean, a, std::move(s));
}

template <std::floating_point T>
NodeId Graph<T>::row_variance(NodeId a) {
    Shape s = node(a).shape;
    s.back() = 1;
    return unary(OpKind::RowVariance, a, std::move(s));
}

template <std::floating_point T>
NodeId Graph<T>::sum(NodeId a) { return unary(OpKind::Sum, a, {1}); }

template <std::floating_point T>
NodeId Graph<T>::mean(NodeId a) {
    return scale(sum(a), 1.0 / static_cast<double>(shape_size(node(a).shape)));
}

template <std::floating_point T>
NodeId Graph<T>::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols needs at least one operand");
    Shape out = node(parts.front()).shape;
    out.back() = 0;
    for (NodeId p : parts) {
        const Shape& s = node(p).shape;
        if (s.size() != out.size() || !std::equal(s.begin(), s.end() - 1, out.begin())) {
            throw ShapeError("concat_cols node #" + std::to_string(nodes_.size()) +
                             ": leading extents differ for operand " + shape_string(s));
        }
        out.back() += s.back();
    }
    Node n;
    n.op = OpKind::ConcatCols;
    n.inputs = parts;
    n.shape = std::move(out);
    return push(std::move(n));
}

template <std::floating_point T>
NodeId Graph<T>::concat_rows(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows needs at least one operand");
    Shape out = node(parts.front()).shape;
    if (out.size() != 2) throw ShapeError("concat_rows needs rank-2 operands");
    out[0] = 0;
    for (NodeId p : parts) {
        const Shape& s = node(p).shape;
        if (s.size() != 2 || s[1] != out[1]) {
            throw ShapeError("concat_rows node #" + std::to_string(nodes_.size()) +
                             ": column count differs for operand " + shape_string(s));
        }
        out[0] += s[0];
    }
    Node n;
    n.op = OpKind::ConcatRows;
    n.inputs = parts;
    n.shape = std::move(out);
    return push(std::move(n));
}

template <std::floating_point T>
NodeId Graph<T>::slice_cols(NodeId a, std::size_t begin, std::size_t end) {
    Shape s = node(a).shape;
    if (begin >= end || end > s.back()) {
        throw ShapeError("slice_cols node #" + std::to_string(nodes_.size()) + ": range [" +
                         std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                         shape_string(s));
    }
    s.back() = end - begin;
    NodeId id = unary(OpKind::SliceCols, a, std::move(s));
    nodes_[id.index].begin = begin;
    nodes_[id.index].end = end;
    return id;
}

template <std::floating_point T>
NodeId Graph<T>::slice_rows(NodeId a, std::size_t begin, std::size_t end) {
    Shape s = node(a).shape;
    if (s.size() != 2 || begin >= end || end > s[0]) {
        throw ShapeError("slice_rows node #" + std::to_string(nodes_.size()) + ": range [" +
                         std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                         shape_string(s));
    }
    s[0] = end - begin;
    NodeId id = unary(OpKind::SliceRows, a, std::move(s));
    nodes_[id.index].begin = begin;
    nodes_[id.index].end = end;
    return id;
}

template <std::floating_point T>
NodeId Graph<T>::reshape(NodeId a, Shape shape) {
    if (shape_size(shape) != shape_size(node(a).shape) || shape.empty()) {
        throw ShapeError("reshape node #" + std::to_string(nodes_.size()) + ": cannot view " +
                         shape_string(node(a).shape) + " as " + shape_string(shape));
    }
    return unary(OpKind::Reshape, a, std::move(shape));
}

template <std::floating_point T>
void Graph<T>::compute(const Node& n, std::size_t index, std::vector<BasicTensor<T>>& values,
                       const Bindings<T>& bindings) const {
    if (n.op == OpKind::Leaf) {
        auto it = bindings.find(n.name);
        if (it == bindings.end()) throw ShapeError("leaf '" + n.name + "' is not bound");
        if (it->second.shape() != n.shape) {
            throw ShapeError("leaf '" + n.name + "' declared " + shape_string(n.shape) + " but bound to " +
                             shape_string(it->second.shape()));
        }
        values.push_back(it->second);
        return;
    }
    if (n.op == OpKind::Constant) {
        values.push_back(*n.constant);
        return;
    }
    if (n.op == OpKind::Reshape) {
        values.push_back(values[n.inputs[0].index].reshaped(n.shape));
        return;
    }

    const std::size_t total = shape_size(n.shape);
    std::vector<T> out(total);
    auto in = [&](std::size_t k) { return values[n.inputs[k].index].values(); };
    const T p = static_cast<T>(n.param);

    switch (n.op) {
    case OpKind::MatMul: {
        const auto a = in(0);
        const auto b = in(1);
        const Shape& sa = nodes_[n.inputs[0].index].shape;
        const std::size_t m = sa[0], k = sa[1], cols = n.shape[1];
        for (std::size_t i = 0; i < m; ++i) {
            T* row = out.data() + i * cols;
            for (std::size_t q = 0; q < k; ++q) {
                const T aiq = a[i * k + q];
                const T* brow = b.data() + q * cols;
                for (std::size_t j = 0; j < cols; ++j) row[j] += aiq * brow[j];
            }
        }
        break;
    }
    case OpKind::Transpose: {
        const auto a = in(0);
        const std::size_t r = n.shape[1], c = n.shape[0];
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
        break;
    }
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div: {
        const auto a = in(0);
        const auto b = in(1);
        for (std::size_t i = 0; i < total; ++i) {
            const T x = operand(a, n.map_a, i);
            const T y = operand(b, n.map_b, i);
            switch (n.op) {
            case OpKind::Add: out[i] = x + y; break;
            case OpKind::Sub: out[i] = x - y; break;
            case OpKind::Mul: out[i] = x * y; break;
            default: out[i] = x / y; break;
            }
        }
        break;
    }
    case OpKind::Scale: {
        const auto a = in(0);
        for (std::size_t i = 0; i < total; ++i) out[i] = a[i] * p;
        break;
    }
    case OpKind::Offset: {
        const auto a = in(0);
        for (std::size_t i = 0; i < total; ++i) out[i] = a[i] + p;
        break;
    }
    case OpKind::LeakyRelu: {
        const auto a = in(0);
        for (std::size_t i = 0; i < total; ++i) out[i] = a[i] >= T(0) ? a[i] : p * a[i];
        break;
    }
    case OpKind::Gelu: {
        const auto a = in(0);
        for (std::size_t i = 0; i < total; ++i) {
            const T x = a[i];
            const T u = T(kGeluScale) * (x + T(kGeluCubic) * x * x * x);
            out[i] = T(0.5) * x * (T(1) + std::tanh(u));
        }
        break;
    }
    case OpKind::Logistic: {
        const auto a = in(0);
        for (std::size_t i = 0; i < total; ++i) {
            const T x = a[i];
            out[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
        }
        break;
    }
    case OpKind::Sqrt: {
        const auto a = in(0);
        for (std::size_t i = 0; i < total; ++i) {
            out[i] = a[i] < T(0) ? std::numeric_limits<T>::quiet_NaN() : std::sqrt(a[i]);
        }
        break;
    }
    case OpKind::Softmax: {
        const auto a = in(0);
        const std::size_t c = n.shape.back(), r = total / c;
        for (std::size_t i = 0; i < r; ++i) {
            const T* x = a.data() + i * c;
            T* y = out.data() + i * c;
            const T mx = *std::max_element(x, x + c);
            for (std::size_t j = 0; j < c; ++j) y[j] = std::exp(x[j] - mx);
            const T z = pairwise_sum<T>(std::span<const T>(y, c));
            for (std::size_t j = 0; j < c; ++j) y[j] /= z;
        }
        break;
    }
    case OpKind::RowMean:
    case OpKind::RowVariance: {
        const auto a = in(0);
        const Shape& sa = nodes_[n.inputs[0].index].shape;
        const std::size_t c = sa.back(), r = leading(sa);
        std::vector<T> dev(c);
        for (std::size_t i = 0; i < r; ++i) {
            auto row = a.subspan(i * c, c);
            const T mu = pairwise_sum(row) / static_cast<T>(c);
            if (n.op == OpKind::RowMean) {
                out[i] = mu;
            } else {
                for (std::size_t j = 0; j < c; ++j) dev[j] = (row[j] - mu) * (row[j] - mu);
                out[i] = pairwise_sum<T>(dev) / static_cast<T>(c);
            }
        }
        break;
    }
    case OpKind::Sum:
        out[0] = pairwise_sum(in(0));
        break;
    case OpKind::ConcatCols: {
        const std::size_t r = leading(n.shape), c = n.shape.back();
        std::size_t col = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const auto a = in(k);
            const std::size_t w = nodes_[n.inputs[k].index].shape.back();
            for (std::size_t i = 0; i < r; ++i)
                std::copy_n(a.data() + i * w, w, out.data() + i * c + col);
            col += w;
        }
        break;
    }
    case OpKind::ConcatRows: {
        std::size_t at = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const auto a = in(k);
            std::copy(a.begin(), a.end(), out.begin() + static_cast<std::ptrdiff_t>(at));
            at += a.size();
        }
        break;
    }
    case OpKind::SliceCols: {
        const auto a = in(0);
        const std::size_t w = nodes_[n.inputs[0].index].shape.back();
        const std::size_t c = n.shape.back(), r = total / c;
        for (std::size_t i = 0; i < r; ++i)
            std::copy_n(a.data() + i * w + n.begin, c, out.data() + i * c);
        break;
    }
    case OpKind::SliceRows: {
        const auto a = in(0);
        const std::size_t c = n.shape[1];
        std::copy_n(a.data() + n.begin * c, total, out.data());
        break;
    }
    default:
        break;
    }

    try {
        values.emplace_back(n.shape, std::move(out));
    } catch (const NonFiniteError&) {
        throw NonFiniteError("non-finite value produced by node " + describe(NodeId{index}));
    }
}

template <std::floating_point T>
Evaluation<T> Graph<T>::evaluate(const Bindings<T>& bindings) const {
    if (nodes_.empty()) throw ShapeError("cannot evaluate an empty graph");
    return evaluate(bindings, NodeId{nodes_.size() - 1});
}

template <std::floating_point T>
Evaluation<T> Graph<T>::evaluate(const Bindings<T>& bindings, NodeId until) const {
    node(until);
    Evaluation<T> ev;
    ev.values_.reserve(until.index + 1);
    for (std::size_t i = 0; i <= until.index; ++i) compute(nodes_[i], i, ev.values_, bindings);
    return ev;
}

template <std::floating_point T>
GradientMap<T> Graph<T>::gradient(const Bindings<T>& bindings, NodeId output) const {
    return backward(evaluate(bindings, output), output);
}

template <std::floating_point T>
GradientMap<T> Graph<T>::backward(const Evaluation<T>& ev, NodeId output) const {
    node(output);
    if (shape_size(nodes_[output.index].shape) != 1) {
        throw ShapeError("gradient requested for non-scalar output " + describe(output));
    }
    if (ev.size() <= output.index) throw ShapeError("evaluation does not cover the output node");

    std::vector<std::vector<T>> adj(output.index + 1);
    adj[output.index] = {T(1)};

    auto grad_of = [&](NodeId id) -> std::vector<T>* {
        const Node& in = nodes_[id.index];
        if (!in.needs_grad) return nullptr;
        auto& g = adj[id.index];
        if (g.empty()) g.assign(shape_size(in.shape), T(0));
        return &g;
    };

    for (std::size_t i = output.index + 1; i-- > 0;) {
        if (adj[i].empty()) continue;
        const Node& n = nodes_[i];
        if (n.op == OpKind::Leaf || n.op == OpKind::Constant) continue;
        const std::vector<T>& g = adj[i];
        const std::size_t total = g.size();
        auto val = [&](std::size_t k) { return ev.values_[n.inputs[k].index].values(); };
        const auto y = ev.values_[i].values();
        const T p = static_cast<T>(n.param);

        switch (n.op) {
        case OpKind::MatMul: {
            const Shape& sa = nodes_[n.inputs[0].index].shape;
            const std::size_t m = sa[0], k = sa[1], cols = n.shape[1];
            const auto a = val(0);
            const auto b = val(1);
            if (auto* da = grad_of(n.inputs[0])) {
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t q = 0; q < k; ++q) {
                        T acc = T(0);
                        for (std::size_t j = 0; j < cols; ++j) acc += g[r * cols + j] * b[q * cols + j];
                        (*da)[r * k + q] += acc;
                    }
            }
            if (auto* db = grad_of(n.inputs[1])) {
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t q = 0; q < k; ++q) {
                        const T arq = a[r * k + q];
                        T* dst = db->data() + q * cols;
                        const T* src = g.data() + r * cols;
                        for (std::size_t j = 0; j < cols; ++j) dst[j] += arq * src[j];
                    }
            }
            break;
        }
        case OpKind::Transpose: {
            if (auto* da = grad_of(n.inputs[0])) {
                const std::size_t r = n.shape[0], c = n.shape[1];
                for (std::size_t a = 0; a < r; ++a)
                    for (std::size_t b = 0; b < c; ++b) (*da)[b * r + a] += g[a * c + b];
            }
            break;
        }
        case OpKind::Add:
        case OpKind::Sub: {
            if (auto* da = grad_of(n.inputs[0])) {
                for (std::size_t k = 0; k < total; ++k) operand_ref(*da, n.map_a, k) += g[k];
            }
            if (auto* db = grad_of(n.inputs[1])) {
                const T sign = n.op == OpKind::Add ? T(1) : T(-1);
                for (std::size_t k = 0; k < total; ++k) operand_ref(*db, n.map_b, k) += sign * g[k];
            }
            break;
        }
        case OpKind::Mul: {
            const auto a = val(0);
            const auto b = val(1);
            if (auto* da = grad_of(n.inputs[0])) {
                for (std::size_t k = 0; k < total; ++k)
                    operand_ref(*da, n.map_a, k) += g[k] * operand(b, n.map_b, k);
            }
            if (auto* db = grad_of(n.inputs[1])) {
                for (std::size_t k = 0; k < total; ++k)
                    operand_ref(*db, n.map_b, k) += g[k] * operand(a, n.map_a, k);
            }
            break;
        }
        case OpKind::Div: {
            const auto a = val(0);
            const auto b = val(1);
            if (auto* da = grad_of(n.inputs[0])) {
                for (std::size_t k = 0; k < total; ++k)
                    operand_ref(*da, n.map_a, k) += g[k] / operand(b, n.map_b, k);
            }
            if (auto* db = grad_of(n.inputs[1])) {
                for (std::size_t k = 0; k < total; ++k) {
                    const T bk = operand(b, n.map_b, k);
                    operand_ref(*db, n.map_b, k) -= g[k] * operand(a, n.map_a, k) / (bk * bk);
                }
            }
            break;
        }
        case OpKind::Scale: {
            if (auto* da = grad_of(n.inputs[0]))
                for (std::size_t k = 0; k < total; ++k) (*da)[k] += p * g[k];
            break;
        }
        case OpKind::Offset:
        case OpKind::Reshape: {
            if (auto* da = grad_of(n.inputs[0]))
                for (std::size_t k = 0; k < total; ++k) (*da)[k] += g[k];
            break;
        }
        case OpKind::LeakyRelu: {
            const auto x = val(0);
            if (auto* da = grad_of(n.inputs[0]))
                for (std::size_t k = 0; k < total; ++k) (*da)[k] += x[k] >= T(0) ? g[k] : p * g[k];
            break;
        }
        case OpKind::Gelu: {
            const auto x = val(0);
            if (auto* da = grad_of(n.inputs[0])) {
                for (std::size_t k = 0; k < total; ++k) {
                    const T xv = x[k];
                    const T u = T(kGeluScale) * (xv + T(kGeluCubic) * xv * xv * xv);
                    const T t = std::tanh(u);
                    const T du = T(kGeluScale) * (T(1) + T(3 * kGeluCubic) * xv * xv);
                    (*da)[k] += g[k] * (T(0.5) * (T(1) + t) + T(0.5) * xv * (T(1) - t * t) * du);
                }
            }
            break;
        }
        case OpKind::Logistic: {
            if (auto* da = grad_of(n.inputs[0]))
                for (std::size_t k = 0; k < total; ++k) (*da)[k] += g[k] * y[k] * (T(1) - y[k]);
            break;
        }
        case OpKind::Sqrt: {
            if (auto* da = grad_of(n.inputs[0]))
                for (std::size_t k = 0; k < total; ++k) (*da)[k] += g[k] / (T(2) * y[k]);
            break;
        }
        case OpKind::Softmax: {
            if (auto* da = grad_of(n.inputs[0])) {
                const std::size_t c = n.shape.back(), r = total / c;
                for (std::size_t a = 0; a < r; ++a) {
                    T dot = T(0);
                    for (std::size_t j = 0; j < c; ++j) dot += g[a * c + j] * y[a * c + j];
                    for (std::size_t j = 0; j < c; ++j)
                        (*da)[a * c + j] += y[a * c + j] * (g[a * c + j] - dot);
                }
            }
            break;
        }
        case OpKind::RowMean:
        case OpKind::RowVariance: {
            if (auto* da = grad_of(n.inputs[0])) {
                const auto x = val(0);
                const Shape& sa = nodes_[n.inputs[0].index].shape;
                const std::size_t c = sa.back(), r = leading(sa);
                const T inv = T(1) / static_cast<T>(c);
                for (std::size_t a = 0; a < r; ++a) {
                    if (n.op == OpKind::RowMean) {
                        for (std::size_t j = 0; j < c; ++j) (*da)[a * c + j] += g[a] * inv;
                    } else {
                        const T mu = pairwise_sum(x.subspan(a * c, c)) * inv;
                        for (std::size_t j = 0; j < c; ++j)
                            (*da)[a * c + j] += g[a] * T(2) * (x[a * c + j] - mu) * inv;
                    }
                }
            }
            break;
        }
        case OpKind::Sum: {
            if (auto* da = grad_of(n.inputs[0]))
                for (T& v : *da) v += g[0];
            break;
        }
        case OpKind::ConcatCols: {
            const std::size_t r = leading(n.shape), c = n.shape.back();
            std::size_t col = 0;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                const std::size_t w = nodes_[n.inputs[k].index].shape.back();
                if (auto* da = grad_of(n.inputs[k])) {
                    for (std::size_t a = 0; a < r; ++a)
                        for (std::size_t j = 0; j < w; ++j) (*da)[a * w + j] += g[a * c + col + j];
                }
                col += w;
            }
            break;
        }
        case OpKind::ConcatRows: {
            std::size_t at = 0;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                const std::size_t len = shape_size(nodes_[n.inputs[k].index].shape);
                if (auto* da = grad_of(n.inputs[k]))
                    for (std::size_t j = 0; j < len; ++j) (*da)[j] += g[at + j];
                at += len;
            }
            break;
        }
        case OpKind::SliceCols: {
            if (auto* da = grad_of(n.inputs[0])) {
                const std::size_t w = nodes_[n.inputs[0].index].shape.back();
                const std::size_t c = n.shape.back(), r = total / c;
                for (std::size_t a = 0; a < r; ++a)
                    for (std::size_t j = 0; j < c; ++j) (*da)[a * w + n.begin + j] += g[a * c + j];
            }
            break;
        }
        case OpKind::SliceRows: {
            if (auto* da = grad_of(n.inputs[0])) {
                const std::size_t offset = n.begin * n.shape[1];
                for (std::size_t k = 0; k < total; ++k) (*da)[offset + k] += g[k];
            }
            break;
        }
        default:
            break;
        }
    }

    GradientMap<T> grads;
    for (const auto& [name, index] : leaves_) {
        const Node& n = nodes_[index];
        if (index <= output.index && !adj[index].empty()) {
            grads.emplace(name, BasicTensor<T>(n.shape, std::move(adj[index])));
        } else {
            grads.emplace(name, BasicTensor<T>::zeros(n.shape));
        }
    }
    return grads;
}

template class Graph<float>;
template class Graph<double>;

} // namespace lanecast

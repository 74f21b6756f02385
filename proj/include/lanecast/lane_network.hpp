#pragma once

#include "lanecast/tensor.hpp"

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lanecast {

/// Lane j of road segment i, both 1-based.
struct LaneSegment {
    std::size_t road = 1;
    std::size_t lane = 1;
    friend bool operator==(const LaneSegment&, const LaneSegment&) = default;
};

struct LaneEdge {
    std::size_t u = 0;
    std::size_t v = 0;
    double length = 1.0;
};

/// Undirected lane-segment graph. Segments are numbered road-major with dense
/// ids 0..N-1; each edge is stored once with u < v and no self-edges.
class LaneNetwork {
public:
    LaneNetwork(std::vector<std::size_t> lanes_per_road, std::vector<LaneEdge> edges, bool irregular);

    std::size_t size() const noexcept { return segments_.size(); }
    std::size_t roads() const noexcept { return lanes_per_road_.size(); }
    std::span<const std::size_t> lanes_per_road() const noexcept { return lanes_per_road_; }
    bool irregular() const noexcept { return irregular_; }

    const LaneSegment& segment(std::size_t id) const { return segments_.at(id); }
    std::optional<std::size_t> id_of(LaneSegment seg) const;
    /// Column label "<road>_<lane>".
    std::string column_name(std::size_t id) const;

    std::span<const LaneEdge> edges() const noexcept { return edges_; }
    bool adjacent(std::size_t u, std::size_t v) const;
    /// Breadth-first hop counts from every segment; unreachable pairs are npos.
    std::vector<std::size_t> hop_distances() const;

private:
    std::vector<std::size_t> lanes_per_road_;
    std::vector<LaneSegment> segments_;
    std::vector<std::size_t> road_offset_;
    std::vector<LaneEdge> edges_;
    std::vector<std::vector<std::size_t>> neighbors_;
    bool irregular_ = false;
};

struct GridGeometry {
    /// Longitudinal distance between consecutive road segments.
    double segment_length = 500.0;
    /// Lateral distance between neighbouring lanes of one road segment.
    double lane_width = 3.5;
};

/// Builds the front/back + left/right lane grid. Each entry of `entrances`
/// names a 1-based road that gains one extra (entrance) lane beside its
/// declared lanes; any entrance makes the network irregular.
LaneNetwork build_grid_network(std::size_t roads, std::vector<std::size_t> lanes_per_road,
                               const std::vector<std::size_t>& entrances = {}, GridGeometry geometry = {});

enum class AdjacencyKind { Distance, Binary, Adaptive, Dynamic };

std::string_view adjacency_kind_name(AdjacencyKind kind);

/// Dense N x N nonnegative weights with the construction that produced them.
class AdjacencyMatrix {
public:
    AdjacencyMatrix(std::size_t n, std::vector<double> weights, AdjacencyKind kind);

    std::size_t size() const noexcept { return n_; }
    AdjacencyKind kind() const noexcept { return kind_; }
    double operator()(std::size_t u, std::size_t v) const { return weights_[u * n_ + v]; }
    std::span<const double> weights() const noexcept { return weights_; }
    bool symmetric() const;

private:
    std::size_t n_;
    std::vector<double> weights_;
    AdjacencyKind kind_;
};

/// Shortest-path distances over edge lengths, +inf for disconnected pairs.
std::vector<double> network_distances(const LaneNetwork& net);

/// Population standard deviation of all finite pairwise distances u < v.
double distance_sigma(const LaneNetwork& net);

/// Thresholded Gaussian kernel: exp(-d^2 / sigma^2) when d <= threshold, else 0.
AdjacencyMatrix distance_adjacency(const LaneNetwork& net, double sigma, double threshold);

/// 1 for front/back/left/right neighbours, 0 elsewhere including the diagonal.
AdjacencyMatrix binary_adjacency(const LaneNetwork& net);

using FeatureMapping = std::function<std::vector<double>(std::span<const double>)>;

/// Single affine layer usable as the feature mapping of adaptive_adjacency.
struct LinearFeatureMap {
    Tensor weight; // in x out
    std::vector<double> bias;
    std::vector<double> operator()(std::span<const double> x) const;
};

/// exp(-||f(x_u) - f(x_v)||^2 / sigma^2) over per-node feature rows.
/// An empty mapping means the identity.
AdjacencyMatrix adaptive_adjacency(const std::vector<std::vector<double>>& features, double sigma,
                                   const FeatureMapping& mapping = {});

/// Text graph format:
///   lanes I J                 (regular: I roads of J lanes)
///   lanes irregular J1 J2 ... (per-road lane counts)
///   edge u v [length]         (one per edge, length defaults to 1.0)
/// Blank lines and '#' comments are ignored.
LaneNetwork parse_graph(std::istream& in);
void write_graph(std::ostream& out, const LaneNetwork& net);
LaneNetwork read_graph_file(const std::string& path);
void write_graph_file(const std::string& path, const LaneNetwork& net);

} // namespace lanecast

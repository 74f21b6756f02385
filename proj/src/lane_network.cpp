#include "lanecast/lane_network.hpp"

#include "lanecast/errors.hpp"
#include "numfmt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace lanecast {

LaneNetwork::LaneNetwork(std::vector<std::size_t> lanes_per_road, std::vector<LaneEdge> edges, bool irregular)
    : lanes_per_road_(std::move(lanes_per_road)), irregular_(irregular) {
    if (lanes_per_road_.empty()) throw std::invalid_argument("lane network needs at least one road");
    for (std::size_t i = 0; i < lanes_per_road_.size(); ++i) {
        if (lanes_per_road_[i] == 0) {
            throw std::invalid_argument("road " + std::to_string(i + 1) + " has no lanes");
        }
        road_offset_.push_back(segments_.size());
        for (std::size_t j = 0; j < lanes_per_road_[i]; ++j) segments_.push_back({i + 1, j + 1});
    }
    const std::size_t n = segments_.size();
    for (LaneEdge& e : edges) {
        if (e.u >= n || e.v >= n) {
            throw std::invalid_argument("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                                        ") references a segment outside 0.." + std::to_string(n - 1));
        }
        if (e.u == e.v) throw std::invalid_argument("self-edge on segment " + std::to_string(e.u));
        if (!(e.length > 0.0) || !std::isfinite(e.length)) {
            throw std::invalid_argument("edge lengths must be positive and finite");
        }
        if (e.u > e.v) std::swap(e.u, e.v);
    }
    std::sort(edges.begin(), edges.end(),
              [](const LaneEdge& a, const LaneEdge& b) { return a.u != b.u ? a.u < b.u : a.v < b.v; });
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (edges[i].u == edges[i - 1].u && edges[i].v == edges[i - 1].v) {
            throw std::invalid_argument("duplicate edge (" + std::to_string(edges[i].u) + "," +
                                        std::to_string(edges[i].v) + ")");
        }
    }
    edges_ = std::move(edges);
    neighbors_.resize(n);
    for (const LaneEdge& e : edges_) {
        neighbors_[e.u].push_back(e.v);
        neighbors_[e.v].push_back(e.u);
    }
}

std::optional<std::size_t> LaneNetwork::id_of(LaneSegment seg) const {
    if (seg.road == 0 || seg.road > lanes_per_road_.size()) return std::nullopt;
    if (seg.lane == 0 || seg.lane > lanes_per_road_[seg.road - 1]) return std::nullopt;
    return road_offset_[seg.road - 1] + seg.lane - 1;
}

std::string LaneNetwork::column_name(std::size_t id) const {
    const LaneSegment& s = segment(id);
    return std::to_string(s.road) + "_" + std::to_string(s.lane);
}

bool LaneNetwork::adjacent(std::size_t u, std::size_t v) const {
    const auto& nb = neighbors_.at(u);
    return std::find(nb.begin(), nb.end(), v) != nb.end();
}

std::vector<std::size_t> LaneNetwork::hop_distances() const {
    const std::size_t n = size();
    constexpr std::size_t unreachable = static_cast<std::size_t>(-1);
    std::vector<std::size_t> hops(n * n, unreachable);
    for (std::size_t s = 0; s < n; ++s) {
        std::queue<std::size_t> q;
        hops[s * n + s] = 0;
        q.push(s);
        while (!q.empty()) {
            const std::size_t u = q.front();
            q.pop();
            for (std::size_t v : neighbors_[u]) {
                if (hops[s * n + v] != unreachable) continue;
                hops[s * n + v] = hops[s * n + u] + 1;
                q.push(v);
            }
        }
    }
    return hops;
}

LaneNetwork build_grid_network(std::size_t roads, std::vector<std::size_t> lanes_per_road,
                               const std::vector<std::size_t>& entrances, GridGeometry geometry) {
    if (roads < 1) throw std::invalid_argument("grid needs at least one road");
    if (lanes_per_road.size() != roads) {
        throw std::invalid_argument("expected " + std::to_string(roads) + " lane counts, got " +
                                    std::to_string(lanes_per_road.size()));
    }
    for (std::size_t road : entrances) {
        if (road == 0 || road > roads) {
            throw std::invalid_argument("entrance references nonexistent road " + std::to_string(road));
        }
        ++lanes_per_road[road - 1];
    }
    std::vector<std::size_t> offset(roads, 0);
    for (std::size_t i = 1; i < roads; ++i) offset[i] = offset[i - 1] + lanes_per_road[i - 1];

    std::vector<LaneEdge> edges;
    for (std::size_t i = 0; i < roads; ++i) {
        for (std::size_t j = 0; j < lanes_per_road[i]; ++j) {
            const std::size_t id = offset[i] + j;
            if (j + 1 < lanes_per_road[i]) edges.push_back({id, id + 1, geometry.lane_width});
            if (i + 1 < roads && j < lanes_per_road[i + 1]) {
                edges.push_back({id, offset[i + 1] + j, geometry.segment_length});
            }
        }
    }
    const bool irregular = !entrances.empty();
    return LaneNetwork(std::move(lanes_per_road), std::move(edges), irregular);
}

std::string_view adjacency_kind_name(AdjacencyKind kind) {
    switch (kind) {
    case AdjacencyKind::Distance: return "distance";
    case AdjacencyKind::Binary: return "binary";
    case AdjacencyKind::Adaptive: return "adaptive";
    case AdjacencyKind::Dynamic: return "dynamic";
    }
    return "unknown";
}

AdjacencyMatrix::AdjacencyMatrix(std::size_t n, std::vector<double> weights, AdjacencyKind kind)
    : n_(n), weights_(std::move(weights)), kind_(kind) {
    if (n_ == 0 || weights_.size() != n_ * n_) {
        throw ShapeError("adjacency matrix needs " + std::to_string(n_ * n_) + " weights, got " +
                         std::to_string(weights_.size()));
    }
    for (double w : weights_) {
        if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("adjacency weights must be finite and >= 0");
    }
    if (kind_ == AdjacencyKind::Binary) {
        for (double w : weights_) {
            if (w != 0.0 && w != 1.0) throw std::invalid_argument("binary adjacency entries must be 0 or 1");
        }
    }
    if ((kind_ == AdjacencyKind::Binary || kind_ == AdjacencyKind::Distance) && !symmetric()) {
        throw std::invalid_argument(std::string(adjacency_kind_name(kind_)) + " adjacency must be symmetric");
    }
    if (kind_ == AdjacencyKind::Dynamic) {
        for (std::size_t u = 0; u < n_; ++u) {
            double s = 0.0;
            for (std::size_t v = 0; v < n_; ++v) s += weights_[u * n_ + v];
            if (std::abs(s - 1.0) > 1e-6) {
                throw std::invalid_argument("dynamic adjacency row " + std::to_string(u) + " sums to " +
                                            std::to_string(s));
            }
        }
    }
}

bool AdjacencyMatrix::symmetric() const {
    for (std::size_t u = 0; u < n_; ++u)
        for (std::size_t v = u + 1; v < n_; ++v)
            if (weights_[u * n_ + v] != weights_[v * n_ + u]) return false;
    return true;
}

std::vector<double> network_distances(const LaneNetwork& net) {
    const std::size_t n = net.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
    for (const LaneEdge& e : net.edges()) {
        adj[e.u].emplace_back(e.v, e.length);
        adj[e.v].emplace_back(e.u, e.length);
    }
    std::vector<double> dist(n * n, inf);
    using Item = std::pair<double, std::size_t>;
    for (std::size_t s = 0; s < n; ++s) {
        double* d = dist.data() + s * n;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        d[s] = 0.0;
        pq.emplace(0.0, s);
        while (!pq.empty()) {
            auto [du, u] = pq.top();
            pq.pop();
            if (du > d[u]) continue;
            for (auto [v, len] : adj[u]) {
                if (du + len < d[v]) {
                    d[v] = du + len;
                    pq.emplace(d[v], v);
                }
            }
        }
    }
    // Path sums may round differently per direction; keep the matrix exactly symmetric.
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v) {
            const double m = std::min(dist[u * n + v], dist[v * n + u]);
            dist[u * n + v] = dist[v * n + u] = m;
        }
    return dist;
}

double distance_sigma(const LaneNetwork& net) {
    const std::vector<double> dist = network_distances(net);
    const std::size_t n = net.size();
    std::vector<double> finite;
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v)
            if (std::isfinite(dist[u * n + v])) finite.push_back(dist[u * n + v]);
    if (finite.empty()) throw DataError("distance sigma needs at least one connected segment pair");
    double mean = 0.0;
    for (double d : finite) mean += d;
    mean /= static_cast<double>(finite.size());
    double var = 0.0;
    for (double d : finite) var += (d - mean) * (d - mean);
    return std::sqrt(var / static_cast<double>(finite.size()));
}

AdjacencyMatrix distance_adjacency(const LaneNetwork& net, double sigma, double threshold) {
    if (!(sigma > 0.0)) throw std::invalid_argument("distance kernel sigma must be positive");
    if (!(threshold > 0.0)) throw std::invalid_argument("distance threshold must be positive");
    const std::vector<double> dist = network_distances(net);
    std::vector<double> w(dist.size(), 0.0);
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] <= threshold) w[i] = std::exp(-(dist[i] * dist[i]) / (sigma * sigma));
    }
    return AdjacencyMatrix(net.size(), std::move(w), AdjacencyKind::Distance);
}

AdjacencyMatrix binary_adjacency(const LaneNetwork& net) {
    const std::size_t n = net.size();
    std::vector<double> w(n * n, 0.0);
    for (const LaneEdge& e : net.edges()) w[e.u * n + e.v] = w[e.v * n + e.u] = 1.0;
    return AdjacencyMatrix(n, std::move(w), AdjacencyKind::Binary);
}

std::vector<double> LinearFeatureMap::operator()(std::span<const double> x) const {
    if (weight.rank() != 2 || weight.shape()[0] != x.size()) {
        throw ShapeError("feature map expects inputs of length " + std::to_string(weight.shape()[0]));
    }
    const std::size_t out = weight.shape()[1];
    std::vector<double> y(out, 0.0);
    for (std::size_t j = 0; j < out; ++j) {
        for (std::size_t i = 0; i < x.size(); ++i) y[j] += x[i] * weight.at(i, j);
        if (!bias.empty()) y[j] += bias.at(j);
    }
    return y;
}

AdjacencyMatrix adaptive_adjacency(const std::vector<std::vector<double>>& features, double sigma,
                                   const FeatureMapping& mapping) {
    if (!(sigma > 0.0)) throw std::invalid_argument("adaptive kernel sigma must be positive");
    if (features.empty()) throw std::invalid_argument("adaptive adjacency needs at least one node");
    const std::size_t n = features.size();
    std::vector<std::vector<double>> mapped;
    mapped.reserve(n);
    for (const auto& f : features) {
        if (f.size() != features.front().size()) {
            throw ShapeError("embedding length mismatch: " + std::to_string(f.size()) + " vs " +
                             std::to_string(features.front().size()));
        }
        mapped.push_back(mapping ? mapping(f) : f);
    }
    std::vector<double> w(n * n, 0.0);
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = 0; v < n; ++v) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < mapped[u].size(); ++k) {
                const double diff = mapped[u][k] - mapped[v][k];
                d2 += diff * diff;
            }
            w[u * n + v] = std::exp(-d2 / (sigma * sigma));
        }
    }
    return AdjacencyMatrix(n, std::move(w), AdjacencyKind::Adaptive);
}

LaneNetwork parse_graph(std::istream& in) {
    std::vector<std::size_t> lanes;
    bool irregular = false;
    bool have_header = false;
    std::vector<LaneEdge> edges;
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& what) {
        throw ParseError("graph line " + std::to_string(lineno) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream tok(line);
        std::vector<std::string> words;
        for (std::string w; tok >> w;) words.push_back(w);
        if (words.empty()) continue;

        if (words[0] == "lanes") {
            if (have_header) fail("duplicate 'lanes' header");
            have_header = true;
            if (words.size() >= 2 && words[1] == "irregular") {
                irregular = true;
                for (std::size_t i = 2; i < words.size(); ++i) {
                    auto c = detail::parse_index(words[i]);
                    if (!c || *c == 0) fail("bad lane count '" + words[i] + "'");
                    lanes.push_back(*c);
                }
                if (lanes.empty()) fail("'lanes irregular' needs per-road lane counts");
            } else {
                if (words.size() != 3) fail("expected 'lanes I J'");
                auto roads = detail::parse_index(words[1]);
                auto per = detail::parse_index(words[2]);
                if (!roads || !per || *roads == 0 || *per == 0) fail("bad 'lanes I J' header");
                lanes.assign(*roads, *per);
            }
        } else if (words[0] == "edge") {
            if (!have_header) fail("'edge' before 'lanes' header");
            if (words.size() != 3 && words.size() != 4) fail("expected 'edge u v [length]'");
            auto u = detail::parse_index(words[1]);
            auto v = detail::parse_index(words[2]);
            if (!u || !v) fail("bad edge endpoints");
            double length = 1.0;
            if (words.size() == 4) {
                auto l = detail::parse_double(words[3]);
                if (!l) fail("bad edge length '" + words[3] + "'");
                length = *l;
            }
            edges.push_back({*u, *v, length});
        } else {
            fail("unknown directive '" + words[0] + "'");
        }
    }
    if (!have_header) throw ParseError("graph file has no 'lanes' header");
    try {
        return LaneNetwork(std::move(lanes), std::move(edges), irregular);
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("invalid graph: ") + e.what());
    }
}

void write_graph(std::ostream& out, const LaneNetwork& net) {
    const auto lanes = net.lanes_per_road();
    const bool uniform = std::all_of(lanes.begin(), lanes.end(), [&](std::size_t j) { return j == lanes[0]; });
    if (net.irregular() || !uniform) {
        out << "lanes irregular";
        for (std::size_t j : lanes) out << ' ' << j;
        out << '\n';
    } else {
        out << "lanes " << lanes.size() << ' ' << lanes[0] << '\n';
    }
    for (const LaneEdge& e : net.edges()) {
        out << "edge " << e.u << ' ' << e.v << ' ' << detail::format_double(e.length) << '\n';
    }
}

LaneNetwork read_graph_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open graph file " + path);
    return parse_graph(in);
}

void write_graph_file(const std::string& path, const LaneNetwork& net) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write graph file " + path);
    write_graph(out, net);
    if (!out) throw std::runtime_error("failed writing graph file " + path);
}

} // namespace lanecast

#include "lanecast/data.hpp"

#include "lanecast/errors.hpp"
#include "numfmt.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

namespace lanecast {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::optional<int> parse_fixed(std::string_view s) {
    int v = 0;
    if (s.empty()) return std::nullopt;
    for (char c : s) {
        if (c < '0' || c > '9') return std::nullopt;
        v = v * 10 + (c - '0');
    }
    return v;
}

} // namespace

std::optional<Timestamp> parse_iso8601(std::string_view text) {
    using namespace std::chrono;
    text = trim(text);
    if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
    // YYYY-MM-DD?HH:MM[:SS]
    if (text.size() != 16 && text.size() != 19) return std::nullopt;
    if (text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') || text[13] != ':') {
        return std::nullopt;
    }
    auto y = parse_fixed(text.substr(0, 4));
    auto mo = parse_fixed(text.substr(5, 2));
    auto d = parse_fixed(text.substr(8, 2));
    auto h = parse_fixed(text.substr(11, 2));
    auto mi = parse_fixed(text.substr(14, 2));
    std::optional<int> s = 0;
    if (text.size() == 19) {
        if (text[16] != ':') return std::nullopt;
        s = parse_fixed(text.substr(17, 2));
    }
    if (!y || !mo || !d || !h || !mi || !s) return std::nullopt;
    const year_month_day ymd{year{*y}, month{static_cast<unsigned>(*mo)}, day{static_cast<unsigned>(*d)}};
    if (!ymd.ok() || *h > 23 || *mi > 59 || *s > 59) return std::nullopt;
    const sys_days days{ymd};
    return static_cast<Timestamp>(days.time_since_epoch().count()) * 86400 + *h * 3600 + *mi * 60 + *s;
}

std::string format_iso8601(Timestamp t) {
    using namespace std::chrono;
    Timestamp day_index = t / 86400;
    Timestamp secs = t % 86400;
    if (secs < 0) {
        secs += 86400;
        --day_index;
    }
    const year_month_day ymd{sys_days{days{day_index}}};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(secs / 3600),
                  static_cast<int>(secs / 60 % 60), static_cast<int>(secs % 60));
    return buf;
}

bool TimeSeriesPanel::fully_observed() const {
    for (std::uint8_t m : mask)
        if (!m) return false;
    return true;
}

TimeSeriesPanel TimeSeriesPanel::rows(std::size_t begin, std::size_t end) const {
    if (begin > end || end > length()) {
        throw std::out_of_range("panel rows [" + std::to_string(begin) + "," + std::to_string(end) +
                                ") outside 0.." + std::to_string(length()));
    }
    const std::size_t n = nodes();
    TimeSeriesPanel out;
    out.network = network;
    out.start = time_at(begin);
    out.interval_seconds = interval_seconds;
    out.unit = unit;
    out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * n),
                      values.begin() + static_cast<std::ptrdiff_t>(end * n));
    out.mask.assign(mask.begin() + static_cast<std::ptrdiff_t>(begin * n),
                    mask.begin() + static_cast<std::ptrdiff_t>(end * n));
    return out;
}

bool operator==(const TimeSeriesPanel& a, const TimeSeriesPanel& b) {
    if (a.nodes() != b.nodes() || a.start != b.start || a.interval_seconds != b.interval_seconds ||
        a.unit != b.unit || a.mask != b.mask || a.values.size() != b.values.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a.values[i]) != std::bit_cast<std::uint64_t>(b.values[i])) return false;
    }
    return true;
}

TimeSeriesPanel read_csv(std::istream& in, std::shared_ptr<const LaneNetwork> network) {
    if (!network) throw std::invalid_argument("read_csv needs a lane network");
    const std::size_t n = network->size();
    std::string line;
    if (!std::getline(in, line)) throw ParseError("csv is empty");
    std::vector<std::string> header;
    for (std::string_view h : split_commas(line)) header.emplace_back(trim(h));
    if (trim(header[0]) != "timestamp") throw ParseError("csv header must start with 'timestamp'");

    std::unordered_map<std::string, std::size_t> by_name;
    for (std::size_t id = 0; id < n; ++id) by_name.emplace(network->column_name(id), id);
    std::vector<std::size_t> column_to_id;
    std::vector<bool> seen(n, false);
    for (std::size_t c = 1; c < header.size(); ++c) {
        const std::string name(trim(header[c]));
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ParseError("unknown column '" + name + "'");
        if (seen[it->second]) throw ParseError("duplicate column '" + name + "'");
        seen[it->second] = true;
        column_to_id.push_back(it->second);
    }
    for (std::size_t id = 0; id < n; ++id) {
        if (!seen[id]) throw ParseError("missing column '" + network->column_name(id) + "'");
    }

    TimeSeriesPanel panel;
    panel.network = std::move(network);
    std::vector<Timestamp> stamps;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        if (cells.size() != header.size()) {
            throw ParseError("csv line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                             " cells, got " + std::to_string(cells.size()));
        }
        auto t = parse_iso8601(cells[0]);
        if (!t) throw ParseError("csv line " + std::to_string(lineno) + ": bad timestamp '" + std::string(cells[0]) + "'");
        stamps.push_back(*t);
        const std::size_t row = stamps.size() - 1;
        panel.values.resize((row + 1) * n, 0.0);
        panel.mask.resize((row + 1) * n, 0);
        for (std::size_t c = 1; c < cells.size(); ++c) {
            const std::string_view cell = trim(cells[c]);
            if (cell.empty()) continue;
            auto v = detail::parse_double(cell);
            if (!v || !std::isfinite(*v)) {
                throw ParseError("csv line " + std::to_string(lineno) + ": unparseable cell '" + std::string(cell) +
                                 "' in column " + std::string(trim(header[c])));
            }
            const std::size_t id = column_to_id[c - 1];
            panel.values[row * n + id] = *v;
            panel.mask[row * n + id] = 1;
        }
    }
    if (stamps.empty()) throw ParseError("csv has no data rows");
    panel.start = stamps[0];
    if (stamps.size() >= 2) {
        panel.interval_seconds = stamps[1] - stamps[0];
        if (panel.interval_seconds <= 0) throw ParseError("timestamps must be strictly increasing");
        for (std::size_t r = 2; r < stamps.size(); ++r) {
            if (stamps[r] - stamps[r - 1] != panel.interval_seconds) {
                throw ParseError("non-uniform timestamps at row " + std::to_string(r + 1) + " (" +
                                 format_iso8601(stamps[r]) + ")");
            }
        }
    }
    return panel;
}

TimeSeriesPanel load_csv(const std::string& path, std::shared_ptr<const LaneNetwork> network) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open csv " + path);
    return read_csv(in, std::move(network));
}

void write_csv(std::ostream& out, const TimeSeriesPanel& panel) {
    const std::size_t n = panel.nodes();
    out << "timestamp";
    for (std::size_t id = 0; id < n; ++id) out << ',' << panel.network->column_name(id);
    out << '\n';
    for (std::size_t r = 0; r < panel.length(); ++r) {
        out << format_iso8601(panel.time_at(r));
        for (std::size_t id = 0; id < n; ++id) {
            out << ',';
            if (panel.observed(r, id)) out << detail::format_double(panel.value(r, id));
        }
        out << '\n';
    }
}

void save_csv(const std::string& path, const TimeSeriesPanel& panel) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write csv " + path);
    write_csv(out, panel);
    if (!out) throw std::runtime_error("failed writing csv " + path);
}

TimeSeriesPanel impute_adjacent_mean(const TimeSeriesPanel& panel) {
    const std::size_t n = panel.nodes();
    const std::size_t len = panel.length();
    TimeSeriesPanel out = panel;
    for (std::size_t id = 0; id < n; ++id) {
        std::optional<std::size_t> prev;
        std::vector<std::size_t> pending;
        bool any = false;
        for (std::size_t r = 0; r <= len; ++r) {
            const bool obs = r < len && panel.observed(r, id);
            if (r < len && !obs) {
                pending.push_back(r);
                continue;
            }
            if (obs) any = true;
            for (std::size_t p : pending) {
                double fill = 0.0;
                if (prev && obs) fill = 0.5 * (panel.value(*prev, id) + panel.value(r, id));
                else if (prev) fill = panel.value(*prev, id);
                else if (obs) fill = panel.value(r, id);
                out.values[p * n + id] = fill;
            }
            pending.clear();
            if (obs) prev = r;
        }
        if (!any && len > 0) {
            throw DataError("column " + panel.network->column_name(id) + " has no observed values");
        }
    }
    std::fill(out.mask.begin(), out.mask.end(), std::uint8_t{1});
    return out;
}

PanelSplit split(const TimeSeriesPanel& panel, SplitRatios ratios, std::size_t min_length) {
    if (!(ratios.train > 0.0) || !(ratios.validation > 0.0) || !(ratios.test > 0.0)) {
        throw std::invalid_argument("split ratios must all be positive");
    }
    if (std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
        throw std::invalid_argument("split ratios must sum to 1");
    }
    const std::size_t len = panel.length();
    const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(len)));
    const auto n_val = static_cast<std::size_t>(std::llround(ratios.validation * static_cast<double>(len)));
    if (n_train + n_val > len) throw DataError("panel too short to split");
    const std::size_t n_test = len - n_train - n_val;
    const std::size_t need = std::max<std::size_t>(min_length, 1);
    if (n_train < need || n_val < need || n_test < need) {
        throw DataError("split of " + std::to_string(len) + " rows gives " + std::to_string(n_train) + "/" +
                        std::to_string(n_val) + "/" + std::to_string(n_test) + ", each part needs >= " +
                        std::to_string(need));
    }
    return {panel.rows(0, n_train), panel.rows(n_train, n_train + n_val), panel.rows(n_train + n_val, len)};
}

std::size_t window_count(std::size_t length, const ForecastTask& task) {
    if (task.window == 0 || task.horizon == 0 || task.stride == 0) {
        throw std::invalid_argument("window, horizon and stride must be positive");
    }
    if (length < task.window + task.horizon) return 0;
    return (length - task.window - task.horizon) / task.stride + 1;
}

Tensor SampleSet::input(std::size_t s) const {
    const std::size_t per = nodes() * window();
    const auto v = inputs.values().subspan(s * per, per);
    return Tensor({nodes(), window()}, std::vector<double>(v.begin(), v.end()));
}

Tensor SampleSet::target(std::size_t s) const {
    const std::size_t per = nodes() * horizon();
    const auto v = targets.values().subspan(s * per, per);
    return Tensor({nodes(), horizon()}, std::vector<double>(v.begin(), v.end()));
}

SampleSet make_windows(const TimeSeriesPanel& panel, const ForecastTask& task) {
    const std::size_t len = panel.length();
    const std::size_t count = window_count(len, task);
    if (count == 0) {
        throw DataError("panel of " + std::to_string(len) + " rows is shorter than T+z = " +
                        std::to_string(task.window + task.horizon));
    }
    if (!panel.fully_observed()) throw DataError("make_windows needs a fully observed panel; impute first");
    const std::size_t n = panel.nodes();
    const std::size_t T = task.window;
    const std::size_t z = task.horizon;
    std::vector<double> in(count * n * T);
    std::vector<double> tg(count * n * z);
    SampleSet set;
    for (std::size_t s = 0; s < count; ++s) {
        const std::size_t o = s * task.stride;
        set.origins.push_back(o);
        set.target_times.push_back(panel.time_at(o + T));
        for (std::size_t u = 0; u < n; ++u) {
            for (std::size_t t = 0; t < T; ++t) in[(s * n + u) * T + t] = panel.value(o + t, u);
            for (std::size_t t = 0; t < z; ++t) tg[(s * n + u) * z + t] = panel.value(o + T + t, u);
        }
    }
    set.inputs = Tensor({count, n, T}, std::move(in));
    set.targets = Tensor({count, n, z}, std::move(tg));
    return set;
}

TimeSeriesPanel synth_generate(std::shared_ptr<const LaneNetwork> network, const SynthSpec& spec) {
    if (!network) throw std::invalid_argument("synth_generate needs a lane network");
    if (spec.days < 1) throw std::invalid_argument("synthetic panel needs at least one day");
    if (spec.interval_minutes <= 0 || 1440 % spec.interval_minutes != 0) {
        throw std::invalid_argument("interval must divide one day");
    }
    if (spec.noise_ar < 0.0 || spec.noise_ar >= 1.0) throw std::invalid_argument("noise_ar must lie in [0, 1)");
    const std::size_t n = network->size();
    const std::size_t per_day = static_cast<std::size_t>(1440 / spec.interval_minutes);
    const std::size_t len = spec.days * per_day;

    // Mixing weights decay^hop, normalised so each segment's noise has variance noise_std^2.
    const auto hops = network->hop_distances();
    std::vector<double> mix(n * n, 0.0);
    for (std::size_t u = 0; u < n; ++u) {
        double norm = 0.0;
        for (std::size_t v = 0; v < n; ++v) {
            const std::size_t h = hops[u * n + v];
            if (h == static_cast<std::size_t>(-1)) continue;
            mix[u * n + v] = std::pow(spec.noise_decay, static_cast<double>(h));
            norm += mix[u * n + v] * mix[u * n + v];
        }
        for (std::size_t v = 0; v < n; ++v) mix[u * n + v] /= std::sqrt(norm);
    }

    std::vector<double> phase(n);
    for (std::size_t u = 0; u < n; ++u) {
        const LaneSegment& s = network->segment(u);
        phase[u] = spec.road_phase * static_cast<double>(s.road - 1) + spec.lane_phase * static_cast<double>(s.lane - 1);
    }

    std::size_t trend_start = len;
    if (spec.trend) {
        if (spec.trend->fraction <= 0.0 || spec.trend->fraction > 1.0) {
            throw std::invalid_argument("trend fraction must lie in (0, 1]");
        }
        trend_start = len - static_cast<std::size_t>(std::llround(spec.trend->fraction * static_cast<double>(len)));
    }

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> eta(n);
    std::vector<double> noise(n, 0.0);
    const double innovation = std::sqrt(1.0 - spec.noise_ar * spec.noise_ar);

    TimeSeriesPanel panel;
    panel.network = network;
    panel.start = spec.start;
    panel.interval_seconds = spec.interval_minutes * 60;
    panel.unit = spec.unit;
    panel.values.resize(len * n);
    panel.mask.assign(len * n, 1);
    for (std::size_t r = 0; r < len; ++r) {
        const double day_fraction = static_cast<double>(r % per_day) / static_cast<double>(per_day);
        const double angle = 2.0 * std::numbers::pi * day_fraction;
        double trend = 0.0;
        if (r >= trend_start) {
            trend = spec.trend->rise * static_cast<double>(r - trend_start + 1) / static_cast<double>(len - trend_start);
        }
        if (spec.noise_std > 0.0) {
            for (double& e : eta) e = gauss(rng);
            for (std::size_t u = 0; u < n; ++u) {
                double mixed = 0.0;
                for (std::size_t v = 0; v < n; ++v) mixed += mix[u * n + v] * eta[v];
                noise[u] = r == 0 ? mixed : spec.noise_ar * noise[u] + innovation * mixed;
            }
        }
        for (std::size_t u = 0; u < n; ++u) {
            panel.values[r * n + u] =
                spec.base + spec.amplitude * std::sin(angle + phase[u]) + spec.noise_std * noise[u] + trend;
        }
    }
    return panel;
}

} // namespace lanecast

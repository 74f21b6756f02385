#include "lanecast/metrics.hpp"

#include "lanecast/errors.hpp"
#include "numfmt.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace lanecast {

ErrorMetrics compute_metrics(const Tensor& pred, const Tensor& truth, double mape_floor) {
    if (pred.shape() != truth.shape()) throw ShapeError("prediction and truth shapes differ");
    if (!(mape_floor > 0.0)) throw std::invalid_argument("mape floor must be positive");
    if (pred.size() == 0) throw ShapeError("metrics need at least one entry");
    double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
    std::size_t pct_count = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = truth[i] - pred[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
        if (std::abs(truth[i]) >= mape_floor) {
            pct_sum += std::abs(e / truth[i]);
            ++pct_count;
        }
    }
    const auto n = static_cast<double>(pred.size());
    ErrorMetrics m;
    m.mae = abs_sum / n;
    m.rmse = std::sqrt(sq_sum / n);
    if (pct_count > 0) m.mape = pct_sum / static_cast<double>(pct_count);
    return m;
}

double cost_metric(std::span<const double> seconds) {
    if (seconds.size() < 10) throw std::invalid_argument("cost needs at least 10 timed iterations");
    double s = 0.0;
    for (double t : seconds) {
        if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("iteration time must be finite and >= 0");
        s += t;
    }
    return 100.0 * s / static_cast<double>(seconds.size());
}

double difference_metric(double mae_irregular, double mae_regular) {
    if (!(mae_irregular > 0.0)) throw std::invalid_argument("irregular MAE must be positive");
    return (mae_irregular - mae_regular) / mae_irregular;
}

std::vector<MetricsReport> mean_rows(const std::vector<MetricsReport>& rows) {
    struct Acc {
        MetricsReport head;
        std::size_t n = 0;
        double mae = 0, rmse = 0, mape = 0, cost = 0;
        bool all_mape = true, all_cost = true;
    };
    std::vector<Acc> groups;
    for (const auto& r : rows) {
        if (!r.ok() || !r.seed) continue;
        auto it = std::find_if(groups.begin(), groups.end(), [&](const Acc& a) {
            return a.head.dataset == r.dataset && a.head.model == r.model && a.head.horizon == r.horizon;
        });
        if (it == groups.end()) {
            groups.push_back({});
            it = groups.end() - 1;
            it->head.dataset = r.dataset;
            it->head.model = r.model;
            it->head.horizon = r.horizon;
        }
        ++it->n;
        it->mae += r.mae;
        it->rmse += r.rmse;
        if (r.mape) it->mape += *r.mape; else it->all_mape = false;
        if (r.cost) it->cost += *r.cost; else it->all_cost = false;
    }
    std::vector<MetricsReport> out;
    for (auto& a : groups) {
        const auto n = static_cast<double>(a.n);
        MetricsReport m = a.head;
        m.mae = a.mae / n;
        m.rmse = a.rmse / n;
        if (a.all_mape) m.mape = a.mape / n;
        if (a.all_cost) m.cost = a.cost / n;
        out.push_back(std::move(m));
    }
    return out;
}

namespace {

constexpr const char* kReportHeader = "dataset,model,horizon,seed,mae,rmse,mape,cost,status";

std::string opt(const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); }

// Keeps error text on one CSV cell.
std::string clean(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ' ';
    return s;
}

std::vector<std::string> cells(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double need_double(const std::string& s, const char* what) {
    auto v = detail::parse_double(s);
    if (!v) throw ParseError(std::string("bad ") + what + " value '" + s + "'");
    return *v;
}

std::optional<double> maybe_double(const std::string& s, const char* what) {
    if (s.empty()) return std::nullopt;
    return need_double(s, what);
}

} // namespace

void write_reports_csv(std::ostream& out, const std::vector<MetricsReport>& rows) {
    out << kReportHeader << '\n';
    for (const auto& r : rows) {
        out << r.dataset << ',' << r.model << ',' << r.horizon << ','
            << (r.seed ? std::to_string(*r.seed) : std::string("mean")) << ',';
        if (r.ok()) {
            out << detail::format_double(r.mae) << ',' << detail::format_double(r.rmse) << ',' << opt(r.mape) << ','
                << opt(r.cost) << ",ok\n";
        } else {
            out << ",,,," << "failed: " << clean(r.error) << '\n';
        }
    }
}

std::vector<MetricsReport> read_reports_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("report csv is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kReportHeader) throw ParseError("unexpected report header '" + line + "'");
    std::vector<MetricsReport> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c = cells(line);
        if (c.size() != 9) throw ParseError("report line " + std::to_string(lineno) + " has " + std::to_string(c.size()) + " cells");
        MetricsReport r;
        r.dataset = c[0];
        r.model = c[1];
        auto h = detail::parse_index(c[2]);
        if (!h) throw ParseError("bad horizon on report line " + std::to_string(lineno));
        r.horizon = *h;
        if (c[3] != "mean") {
            auto s = detail::parse_index(c[3]);
            if (!s) throw ParseError("bad seed on report line " + std::to_string(lineno));
            r.seed = *s;
        }
        if (c[8] == "ok") {
            r.mae = need_double(c[4], "mae");
            r.rmse = need_double(c[5], "rmse");
            r.mape = maybe_double(c[6], "mape");
            r.cost = maybe_double(c[7], "cost");
        } else {
            const std::string prefix = "failed: ";
            r.error = c[8].rfind(prefix, 0) == 0 ? c[8].substr(prefix.size()) : c[8];
            if (r.error.empty()) r.error = "failed";
        }
        out.push_back(std::move(r));
    }
    return out;
}

nlohmann::json reports_to_json(const std::vector<MetricsReport>& rows) {
    auto j = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json o{{"dataset", r.dataset}, {"model", r.model}, {"horizon", r.horizon}};
        o["seed"] = r.seed ? nlohmann::json(*r.seed) : nlohmann::json("mean");
        if (r.ok()) {
            o["mae"] = r.mae;
            o["rmse"] = r.rmse;
            o["mape"] = r.mape ? nlohmann::json(*r.mape) : nlohmann::json();
            o["cost"] = r.cost ? nlohmann::json(*r.cost) : nlohmann::json();
            o["status"] = "ok";
        } else {
            o["status"] = "failed";
            o["error"] = r.error;
        }
        j.push_back(std::move(o));
    }
    return j;
}

std::vector<MetricsReport> reports_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ParseError("report json must be an array");
    std::vector<MetricsReport> out;
    try {
        for (const auto& o : j) {
            MetricsReport r;
            r.dataset = o.at("dataset").get<std::string>();
            r.model = o.at("model").get<std::string>();
            r.horizon = o.at("horizon").get<std::size_t>();
            if (!o.at("seed").is_string()) r.seed = o.at("seed").get<std::uint64_t>();
            if (o.at("status") == "ok") {
                r.mae = o.at("mae").get<double>();
                r.rmse = o.at("rmse").get<double>();
                if (!o.at("mape").is_null()) r.mape = o.at("mape").get<double>();
                if (!o.at("cost").is_null()) r.cost = o.at("cost").get<double>();
            } else {
                r.error = o.value("error", std::string("failed"));
            }
            out.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad report json: ") + e.what());
    }
    return out;
}

void write_table_csv(std::ostream& out, const std::vector<MetricsReport>& rows) {
    // Mean rows win; a cell with a single seed and no mean row uses that row.
    std::map<std::tuple<std::string, std::string, std::size_t>, const MetricsReport*> cell;
    std::vector<std::pair<std::string, std::string>> order;
    std::set<std::size_t> horizons;
    for (const auto& r : rows) {
        if (!r.ok()) continue;
        const auto key = std::make_tuple(r.dataset, r.model, r.horizon);
        auto it = cell.find(key);
        if (it == cell.end() || (!r.seed && it->second->seed)) cell[key] = &r;
        horizons.insert(r.horizon);
        const auto dm = std::make_pair(r.dataset, r.model);
        if (std::find(order.begin(), order.end(), dm) == order.end()) order.push_back(dm);
    }
    out << "dataset,model";
    for (std::size_t h : horizons) out << ",H" << h << "_MAE,H" << h << "_RMSE,H" << h << "_MAPE%,H" << h << "_Cost";
    out << '\n';
    for (const auto& [dataset, model] : order) {
        out << dataset << ',' << model;
        for (std::size_t h : horizons) {
            auto it = cell.find(std::make_tuple(dataset, model, h));
            if (it == cell.end()) {
                out << ",,,,";
                continue;
            }
            const MetricsReport& r = *it->second;
            out << ',' << detail::format_double(r.mae) << ',' << detail::format_double(r.rmse) << ','
                << (r.mape ? detail::format_double(100.0 * *r.mape) : std::string()) << ',' << opt(r.cost);
        }
        out << '\n';
    }
}

} // namespace lanecast

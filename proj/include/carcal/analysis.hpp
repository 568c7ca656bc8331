#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "carcal/io.hpp"
#include "carcal/sim.hpp"

namespace carcal {

// ---------------------------------------------------------------------------
// fundamental diagram

struct FdPoint {
    double density = 0.0;     ///< veh/km
    double flow = 0.0;        ///< veh/h
    double mean_speed = 0.0;  ///< km/h
    int zone_id = 0;
    double window_start = 0.0;
};

/// Detector windows to flow/density/speed points. Empty windows are omitted.
inline std::vector<FdPoint> fundamental_diagram(const SimulationLog& log) {
    std::vector<FdPoint> out;
    for (const auto& d : log.detectors) {
        if (d.count <= 0) continue;
        FdPoint p;
        p.zone_id = d.zone_id;
        p.window_start = d.window_start;
        p.flow = double(d.count) * 3600.0 / d.window_length;
        p.mean_speed = d.mean_speed * 3.6;
        p.density = p.flow / p.mean_speed;
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// capacity drop

struct CapacityDrop {
    double q_free_max = 0.0;   ///< max flow before the first breakdown (veh/h)
    double q_discharge = 0.0;  ///< mean flow over congested windows after it
    double drop = 0.0;         ///< 1 - q_discharge / q_free_max
    bool valid = false;        ///< false when no congested windows exist
    std::size_t congested_windows = 0;
};

/// breakdown_t: time of the first closure (traffic breakdown trigger).
/// Congested windows are those with mean speed below half the limit.
inline CapacityDrop capacity_drop(const std::vector<FdPoint>& points, double breakdown_t,
                                  double speed_limit_kmh) {
    CapacityDrop res;
    double q_dis_sum = 0.0;
    for (const auto& p : points) {
        if (p.window_start < breakdown_t) {
            res.q_free_max = std::max(res.q_free_max, p.flow);
        } else if (p.mean_speed < 0.5 * speed_limit_kmh) {
            q_dis_sum += p.flow;
            ++res.congested_windows;
        }
    }
    if (res.congested_windows == 0 || res.q_free_max <= 0.0) return res;
    res.q_discharge = q_dis_sum / double(res.congested_windows);
    res.drop = 1.0 - res.q_discharge / res.q_free_max;
    res.valid = true;
    return res;
}

// ---------------------------------------------------------------------------
// stop-and-go wave speed

struct WaveEstimate {
    double speed = 0.0;      ///< upstream propagation speed magnitude, m/s
    double r_squared = 0.0;  ///< linear-fit quality
    std::vector<std::pair<double, double>> front;  ///< (t, x) samples
    bool valid = false;
};

/// Tracks the congestion front after the road reopens: per record time, the
/// rearmost member of the largest cluster of slow vehicles (v < v_c,
/// clustered within cluster_gap). The wave speed is the |slope| of the
/// least-squares line through the front samples.
inline WaveEstimate wave_speed(const SimulationLog& log, double reopen_t, double v_c = 2.0,
                               double cluster_gap = 100.0) {
    std::map<double, std::vector<std::pair<double, double>>> slow_by_t;  // t -> (x, v)
    for (const auto& r : log.records)
        if (r.t >= reopen_t && r.v < v_c) slow_by_t[r.t].push_back({r.position, r.v});

    WaveEstimate est;
    for (auto& [t, slow] : slow_by_t) {
        std::sort(slow.begin(), slow.end());
        // largest cluster of consecutive slow vehicles
        std::size_t best_start = 0, best_len = 0, start = 0;
        for (std::size_t i = 1; i <= slow.size(); ++i) {
            if (i == slow.size() || slow[i].first - slow[i - 1].first > cluster_gap) {
                if (i - start > best_len) {
                    best_len = i - start;
                    best_start = start;
                }
                start = i;
            }
        }
        if (best_len < 3) continue;  // require an actual jam cluster
        est.front.push_back({t, slow[best_start].first});
    }

    if (est.front.size() < 10) return est;  // too few samples for a fit

    double st = 0, sx = 0, stt = 0, stx = 0;
    const double n = double(est.front.size());
    for (const auto& [t, x] : est.front) {
        st += t;
        sx += x;
        stt += t * t;
        stx += t * x;
    }
    const double denom = n * stt - st * st;
    if (denom <= 0) return est;
    const double slope = (n * stx - st * sx) / denom;
    const double intercept = (sx - slope * st) / n;
    double ss_res = 0, ss_tot = 0;
    const double mean_x = sx / n;
    for (const auto& [t, x] : est.front) {
        const double fit = intercept + slope * t;
        ss_res += (x - fit) * (x - fit);
        ss_tot += (x - mean_x) * (x - mean_x);
    }
    est.speed = std::abs(slope);
    est.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    est.valid = true;
    return est;
}

// ---------------------------------------------------------------------------
// queue discharge statistics

struct QueueCrossing {
    int cycle = 0;
    int position = 0;  ///< 1-based order of crossing within the cycle
    int vehicle_id = -1;
    double t_cross = 0.0;
    double headway = 0.0;  ///< crossing time minus the previous position's
    double speed = 0.0;
    double accel = 0.0;
};

struct AccelCurve {
    int position = 0;
    std::vector<double> t_rel;    ///< time since green onset
    std::vector<double> mean_a;   ///< mean over cycles
};

struct QueueStats {
    std::vector<QueueCrossing> crossings;
    std::vector<AccelCurve> curves;
};

/// Orders stop-line crossings by green phase, interpolates speed and
/// acceleration at the line, and aggregates acceleration-over-time curves by
/// queue position across cycles.
inline QueueStats queue_discharge_stats(const SimulationLog& log, double stop_line_x,
                                        const std::vector<double>& green_onsets,
                                        double curve_horizon = 20.0) {
    QueueStats out;
    if (green_onsets.empty()) return out;

    std::map<int, std::vector<VehicleRecord>> by_vehicle;
    for (const auto& r : log.records) by_vehicle[r.vehicle_id].push_back(r);

    struct Crossing {
        int vehicle_id;
        double t, v, a;
    };
    std::vector<Crossing> crossings;
    for (auto& [id, recs] : by_vehicle) {
        std::sort(recs.begin(), recs.end(),
                  [](const VehicleRecord& a, const VehicleRecord& b) { return a.t < b.t; });
        for (std::size_t i = 1; i < recs.size(); ++i) {
            if (recs[i - 1].position < stop_line_x && recs[i].position >= stop_line_x) {
                const double span = recs[i].position - recs[i - 1].position;
                const double w = span > 0 ? (stop_line_x - recs[i - 1].position) / span : 0.0;
                Crossing c;
                c.vehicle_id = id;
                c.t = recs[i - 1].t + w * (recs[i].t - recs[i - 1].t);
                c.v = recs[i - 1].v + w * (recs[i].v - recs[i - 1].v);
                c.a = recs[i - 1].a + w * (recs[i].a - recs[i - 1].a);
                crossings.push_back(c);
                break;  // first crossing only
            }
        }
    }
    std::sort(crossings.begin(), crossings.end(),
              [](const Crossing& a, const Crossing& b) { return a.t < b.t; });

    const auto cycle_of = [&](double t) -> int {
        int c = -1;
        for (std::size_t i = 0; i < green_onsets.size(); ++i)
            if (t >= green_onsets[i]) c = int(i);
        return c;
    };

    std::map<int, int> count_in_cycle;
    std::map<int, double> last_cross_in_cycle;
    for (const auto& c : crossings) {
        const int cyc = cycle_of(c.t);
        if (cyc < 0) continue;
        const int pos = ++count_in_cycle[cyc];
        QueueCrossing qc;
        qc.cycle = cyc;
        qc.position = pos;
        qc.vehicle_id = c.vehicle_id;
        qc.t_cross = c.t;
        qc.speed = c.v;
        qc.accel = c.a;
        qc.headway = pos == 1 ? c.t - green_onsets[cyc] : c.t - last_cross_in_cycle[cyc];
        last_cross_in_cycle[cyc] = c.t;
        out.crossings.push_back(qc);
    }

    // mean acceleration curves per queue position, time measured from green
    std::map<int, std::map<long, std::pair<double, int>>> accum;  // pos -> grid -> (sum, n)
    std::map<std::pair<int, int>, int> position_of;               // (cycle, vehicle) -> pos
    for (const auto& qc : out.crossings) position_of[{qc.cycle, qc.vehicle_id}] = qc.position;

    for (const auto& r : log.records) {
        const int cyc = cycle_of(r.t);
        if (cyc < 0) continue;
        const double t_rel = r.t - green_onsets[std::size_t(cyc)];
        if (t_rel > curve_horizon) continue;
        const auto it = position_of.find({cyc, r.vehicle_id});
        if (it == position_of.end()) continue;
        const long grid = std::lround(t_rel * 10.0);  // 0.1 s bins
        auto& cell = accum[it->second][grid];
        cell.first += r.a;
        cell.second += 1;
    }
    for (const auto& [pos, cells] : accum) {
        AccelCurve curve;
        curve.position = pos;
        for (const auto& [grid, cell] : cells) {
            curve.t_rel.push_back(double(grid) / 10.0);
            curve.mean_a.push_back(cell.first / double(cell.second));
        }
        out.curves.push_back(std::move(curve));
    }
    return out;
}

/// Time of the maximum of a position's mean acceleration curve.
inline std::optional<double> time_of_peak_accel(const QueueStats& stats, int position) {
    for (const auto& c : stats.curves)
        if (c.position == position && !c.mean_a.empty()) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < c.mean_a.size(); ++i)
                if (c.mean_a[i] > c.mean_a[best]) best = i;
            return c.t_rel[best];
        }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// scenario metrics

struct ScenarioMetrics {
    std::size_t collisions = 0;
    std::size_t emergency_stops = 0;
    double vehicles_per_cycle = 0.0;  ///< mean stop-line crossings per green phase
};

inline ScenarioMetrics scenario_metrics(const SimulationLog& log, double stop_line_x,
                                        const std::vector<double>& green_onsets) {
    ScenarioMetrics m;
    m.collisions = log.count_events(EventKind::collision);
    m.emergency_stops = log.count_events(EventKind::emergency_stop);
    if (!green_onsets.empty()) {
        const auto stats = queue_discharge_stats(log, stop_line_x, green_onsets, 0.0);
        m.vehicles_per_cycle = double(stats.crossings.size()) / double(green_onsets.size());
    }
    return m;
}

// ---------------------------------------------------------------------------
// CSV / JSON emission

inline std::string fd_points_csv(const std::vector<FdPoint>& points) {
    std::string s = "zone_id,window_start,density,flow,mean_speed\n";
    for (const auto& p : points) {
        s += std::to_string(p.zone_id);
        s += ',';
        s += fmt_double(p.window_start);
        s += ',';
        s += fmt_double(p.density);
        s += ',';
        s += fmt_double(p.flow);
        s += ',';
        s += fmt_double(p.mean_speed);
        s += '\n';
    }
    return s;
}

inline std::string wave_csv(const WaveEstimate& est) {
    std::string s = "t,front_x\n";
    for (const auto& [t, x] : est.front) {
        s += fmt_double(t);
        s += ',';
        s += fmt_double(x);
        s += '\n';
    }
    return s;
}

inline std::string queue_stats_csv(const QueueStats& stats) {
    std::string s = "cycle,position,headway,speed,accel\n";
    for (const auto& c : stats.crossings) {
        s += std::to_string(c.cycle);
        s += ',';
        s += std::to_string(c.position);
        s += ',';
        s += fmt_double(c.headway);
        s += ',';
        s += fmt_double(c.speed);
        s += ',';
        s += fmt_double(c.accel);
        s += '\n';
    }
    return s;
}

inline std::string queue_accel_csv(const QueueStats& stats) {
    std::string s = "position,t_rel,mean_accel\n";
    for (const auto& curve : stats.curves)
        for (std::size_t i = 0; i < curve.t_rel.size(); ++i) {
            s += std::to_string(curve.position);
            s += ',';
            s += fmt_double(curve.t_rel[i]);
            s += ',';
            s += fmt_double(curve.mean_a[i]);
            s += '\n';
        }
    return s;
}

inline nlohmann::json to_json(const ScenarioMetrics& m) {
    return {{"collisions", m.collisions},
            {"emergency_stops", m.emergency_stops},
            {"vehicles_per_lane_per_cycle", m.vehicles_per_cycle}};
}

inline nlohmann::json to_json(const WaveEstimate& e) {
    return {{"speed", e.speed},
            {"r_squared", e.r_squared},
            {"valid", e.valid},
            {"front_samples", e.front.size()},
            {"reference_band_ms", {4.17, 5.56}}};
}

}  // namespace carcal

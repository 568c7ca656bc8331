#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "carcal/bounds.hpp"
#include "carcal/models.hpp"

namespace carcal {

struct TrajectorySample {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    double driven = 0.0;  ///< cumulative driven distance, non-decreasing
    double v = 0.0;
    std::string lane_id;
};

struct Trajectory {
    std::string vehicle_id;
    std::vector<TrajectorySample> samples;
    double vehicle_length = 5.0;
    std::string leader_id;  ///< empty for free leaders

    double t_first() const { return samples.front().t; }
    double t_last() const { return samples.back().t; }

    /// Most frequent lane over the samples; ties resolved by first occurrence.
    std::string primary_lane() const {
        std::map<std::string, int> counts;
        for (const auto& s : samples) ++counts[s.lane_id];
        std::string best;
        int best_n = -1;
        for (const auto& s : samples) {
            const int n = counts[s.lane_id];
            if (n > best_n) {
                best_n = n;
                best = s.lane_id;
            }
        }
        return best;
    }

    /// Linear interpolation at time t, clamped to the recorded range.
    TrajectorySample at(double t) const {
        if (samples.empty()) throw std::logic_error("empty trajectory");
        if (t <= samples.front().t) return samples.front();
        if (t >= samples.back().t) return samples.back();
        auto it = std::lower_bound(samples.begin(), samples.end(), t,
                                   [](const TrajectorySample& s, double tt) { return s.t < tt; });
        const auto& hi = *it;
        const auto& lo = *(it - 1);
        const double w = (t - lo.t) / (hi.t - lo.t);
        TrajectorySample out = lo;
        out.t = t;
        out.x = lo.x + w * (hi.x - lo.x);
        out.y = lo.y + w * (hi.y - lo.y);
        out.driven = lo.driven + w * (hi.driven - lo.driven);
        out.v = lo.v + w * (hi.v - lo.v);
        out.lane_id = w < 0.5 ? lo.lane_id : hi.lane_id;
        return out;
    }
};

// ---------------------------------------------------------------------------
// CSV loading

/// Maps the canonical column names onto the file's header. Values are the
/// header names to look for; adapt them to ingest other tabular datasets.
struct CsvSchema {
    std::string track_id = "track_id";
    std::string frame = "frame";
    std::string t = "t";
    std::string x = "x";
    std::string y = "y";
    std::string speed = "speed";
    std::string lane_id = "lane_id";
    std::string length = "length";
    std::string leader_id = "leader_id";
};

struct TrackRejection {
    std::string track_id;
    std::string reason;
};

struct LoadResult {
    std::vector<Trajectory> tracks;
    std::vector<TrackRejection> rejected;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

/// Loads one trajectory per track id. Tracks with non-monotonic time,
/// non-finite fields or negative speeds are dropped with a reason code;
/// a header that does not match the schema is a hard error.
inline LoadResult load_dataset(const std::string& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open trajectory file: " + path);

    std::string header_line;
    if (!std::getline(in, header_line))
        throw std::invalid_argument("trajectory file is empty (no header): " + path);
    if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();
    const auto header = detail::split_csv_line(header_line);

    const auto col = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };
    struct Cols {
        int track, frame, t, x, y, speed, lane, length, leader;
    } c{col(schema.track_id), col(schema.frame),  col(schema.t),
        col(schema.x),        col(schema.y),      col(schema.speed),
        col(schema.lane_id),  col(schema.length), col(schema.leader_id)};
    for (const auto& [idx, name] :
         std::initializer_list<std::pair<int, std::string>>{{c.track, schema.track_id},
                                                            {c.frame, schema.frame},
                                                            {c.t, schema.t},
                                                            {c.x, schema.x},
                                                            {c.y, schema.y},
                                                            {c.speed, schema.speed},
                                                            {c.lane, schema.lane_id},
                                                            {c.length, schema.length},
                                                            {c.leader, schema.leader_id}})
        if (idx < 0) throw std::invalid_argument("missing column '" + name + "' in " + path);

    struct Row {
        long frame;
        TrajectorySample s;
        double length;
        std::string leader;
    };
    std::map<std::string, std::vector<Row>> by_track;
    std::vector<std::string> order;  // first-seen order of track ids

    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        const auto need = static_cast<std::size_t>(
            std::max({c.track, c.frame, c.t, c.x, c.y, c.speed, c.lane, c.length, c.leader}));
        if (fields.size() <= need)
            throw std::runtime_error("short row in " + path + ": " + line);
        Row r;
        r.frame = std::strtol(fields[c.frame].c_str(), nullptr, 10);
        r.s.t = std::strtod(fields[c.t].c_str(), nullptr);
        r.s.x = std::strtod(fields[c.x].c_str(), nullptr);
        r.s.y = std::strtod(fields[c.y].c_str(), nullptr);
        r.s.v = std::strtod(fields[c.speed].c_str(), nullptr);
        r.s.lane_id = fields[c.lane];
        r.length = std::strtod(fields[c.length].c_str(), nullptr);
        r.leader = fields[c.leader];
        const std::string& id = fields[c.track];
        if (by_track.find(id) == by_track.end()) order.push_back(id);
        by_track[id].push_back(std::move(r));
    }

    LoadResult out;
    for (const auto& id : order) {
        auto& rows = by_track[id];
        std::stable_sort(rows.begin(), rows.end(),
                         [](const Row& a, const Row& b) { return a.s.t < b.s.t; });
        bool finite = true, monotonic = true, nonneg = true;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& s = rows[i].s;
            if (!std::isfinite(s.t) || !std::isfinite(s.x) || !std::isfinite(s.y) ||
                !std::isfinite(s.v) || !std::isfinite(rows[i].length))
                finite = false;
            if (s.v < 0) nonneg = false;
            if (i > 0 && !(s.t > rows[i - 1].s.t)) monotonic = false;
        }
        if (!finite) {
            out.rejected.push_back({id, "non-finite values"});
            continue;
        }
        if (!monotonic) {
            out.rejected.push_back({id, "non-monotonic time"});
            continue;
        }
        if (!nonneg) {
            out.rejected.push_back({id, "negative speed"});
            continue;
        }
        Trajectory traj;
        traj.vehicle_id = id;
        traj.vehicle_length = rows.front().length;
        double driven = 0.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            TrajectorySample s = rows[i].s;
            if (i > 0)
                driven += std::hypot(s.x - rows[i - 1].s.x, s.y - rows[i - 1].s.y);
            s.driven = driven;
            traj.samples.push_back(std::move(s));
            if (traj.leader_id.empty() && !rows[i].leader.empty())
                traj.leader_id = rows[i].leader;
        }
        out.tracks.push_back(std::move(traj));
    }
    return out;
}

// ---------------------------------------------------------------------------
// resampling

/// Resamples onto a uniform dt grid anchored at the first sample; the exact
/// last sample time is appended when the grid misses it, so resampling a
/// second time onto the same dt is the identity.
inline Trajectory resample(const Trajectory& traj, double dt) {
    if (!(dt > 0)) throw std::invalid_argument("resample: dt must be > 0");
    if (traj.samples.size() < 2)
        throw std::invalid_argument("resample: fewer than 2 samples in track " + traj.vehicle_id);
    Trajectory out;
    out.vehicle_id = traj.vehicle_id;
    out.vehicle_length = traj.vehicle_length;
    out.leader_id = traj.leader_id;
    const double t0 = traj.t_first();
    const double t1 = traj.t_last();
    const auto n = static_cast<std::size_t>(std::floor((t1 - t0) / dt + kTimeEps));
    for (std::size_t i = 0; i <= n; ++i) out.samples.push_back(traj.at(t0 + double(i) * dt));
    if (out.samples.back().t < t1 - kTimeEps) out.samples.push_back(traj.at(t1));
    return out;
}

// ---------------------------------------------------------------------------
// leader-follower selection

struct LeaderFollowerPair {
    Trajectory leader;    ///< resampled to the common window, driven rebased
    Trajectory follower;  ///< same grid; driven is 0 at the window start
    double t_start = 0.0;
    double t_end = 0.0;
    double dt = 0.04;
    std::vector<double> spacing;  ///< bumper-to-bumper gap per grid point
    bool is_free_leader = false;  ///< leader was first in row (no own leader)
};

struct PairRejection {
    std::string leader_id;
    std::string follower_id;
    std::vector<std::string> reasons;
};

struct SelectionConfig {
    std::vector<std::string> lanes;            ///< empty = all lanes admitted
    std::map<std::string, double> stop_line;   ///< per-lane stop-line x; empty = skip criterion
    double dt = 0.04;
    double stop_speed = 0.1;        ///< m/s, full-stop detection
    double stop_duration = 0.5;     ///< s, minimum time below stop_speed
    double jump_threshold = 5.0;    ///< m, max position step between samples
    double gap_factor = 2.0;        ///< max sampling gap over median interval
    double min_window = 1.0;        ///< s, minimum usable common window
};

struct SelectionResult {
    std::vector<LeaderFollowerPair> pairs;
    std::vector<PairRejection> rejected;
    std::size_t candidates = 0;
};

namespace detail {

inline bool has_full_stop(const Trajectory& t, double stop_speed, double stop_duration) {
    double run_start = -1.0;
    for (const auto& s : t.samples) {
        if (s.v < stop_speed) {
            if (run_start < 0) run_start = s.t;
            if (s.t - run_start >= stop_duration - kTimeEps) return true;
        } else {
            run_start = -1.0;
        }
    }
    return false;
}

inline int stop_line_crossings(const Trajectory& t, double line_x) {
    int n = 0;
    for (std::size_t i = 1; i < t.samples.size(); ++i)
        if (t.samples[i - 1].x < line_x && t.samples[i].x >= line_x) ++n;
    return n;
}

inline bool continuously_tracked(const Trajectory& t, double gap_factor, double jump_threshold,
                                 std::string* why) {
    if (t.samples.size() < 2) {
        *why = "too few samples";
        return false;
    }
    std::vector<double> intervals;
    for (std::size_t i = 1; i < t.samples.size(); ++i)
        intervals.push_back(t.samples[i].t - t.samples[i - 1].t);
    std::vector<double> sorted = intervals;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    for (std::size_t i = 1; i < t.samples.size(); ++i) {
        if (intervals[i - 1] > gap_factor * median + kTimeEps) {
            *why = "tracking gap";
            return false;
        }
        const double jump = std::hypot(t.samples[i].x - t.samples[i - 1].x,
                                       t.samples[i].y - t.samples[i - 1].y);
        if (jump > jump_threshold) {
            *why = "position jump";
            return false;
        }
    }
    return true;
}

inline std::optional<double> first_departure(const Trajectory& t, double stop_speed) {
    // first time the vehicle exceeds stop_speed after having been stopped
    bool was_stopped = false;
    for (const auto& s : t.samples) {
        if (s.v < stop_speed) was_stopped = true;
        else if (was_stopped) return s.t;
    }
    return std::nullopt;
}

}  // namespace detail

/// Applies the six selection criteria to every (leader, follower) pairing
/// found in the tracks and returns calibration-ready pairs, resampled onto
/// the common time window, together with a per-pair rejection report.
inline SelectionResult select_candidates(const std::vector<Trajectory>& tracks,
                                         const SelectionConfig& cfg = {}) {
    std::map<std::string, const Trajectory*> by_id;
    for (const auto& t : tracks) by_id[t.vehicle_id] = &t;

    SelectionResult out;
    std::vector<std::pair<std::pair<std::string, double>, LeaderFollowerPair>> keyed;

    for (const auto& follower : tracks) {
        if (follower.leader_id.empty()) continue;
        const auto it = by_id.find(follower.leader_id);
        if (it == by_id.end()) continue;
        const Trajectory& leader = *it->second;
        ++out.candidates;

        std::vector<std::string> reasons;
        const auto lane_ok = [&](const Trajectory& t) {
            return cfg.lanes.empty() ||
                   std::find(cfg.lanes.begin(), cfg.lanes.end(), t.primary_lane()) !=
                       cfg.lanes.end();
        };
        if (!lane_ok(leader) || !lane_ok(follower)) reasons.push_back("lane not selected");

        std::string why;
        if (!detail::continuously_tracked(leader, cfg.gap_factor, cfg.jump_threshold, &why))
            reasons.push_back("leader " + why);
        if (!detail::continuously_tracked(follower, cfg.gap_factor, cfg.jump_threshold, &why))
            reasons.push_back("follower " + why);

        if (!cfg.stop_line.empty()) {
            const auto crossing_ok = [&](const Trajectory& t, const char* who) {
                const auto sl = cfg.stop_line.find(t.primary_lane());
                if (sl == cfg.stop_line.end()) {
                    reasons.push_back(std::string(who) + " has no stop line configured");
                    return;
                }
                const int n = detail::stop_line_crossings(t, sl->second);
                if (n != 1)
                    reasons.push_back(std::string(who) + " crosses stop line " +
                                      std::to_string(n) + " times");
            };
            crossing_ok(leader, "leader");
            crossing_ok(follower, "follower");
        }

        if (!detail::has_full_stop(leader, cfg.stop_speed, cfg.stop_duration))
            reasons.push_back("leader has no full stop");
        if (!detail::has_full_stop(follower, cfg.stop_speed, cfg.stop_duration))
            reasons.push_back("follower has no full stop");

        const double t0 = std::max(leader.t_first(), follower.t_first());
        const double t1 = std::min(leader.t_last(), follower.t_last());
        if (t1 - t0 < cfg.min_window) {
            reasons.push_back("window too short");
        } else {
            const auto lane_change = [&](const Trajectory& t, const char* who) {
                std::string lane;
                for (const auto& s : t.samples) {
                    if (s.t < t0 - kTimeEps || s.t > t1 + kTimeEps) continue;
                    if (lane.empty()) lane = s.lane_id;
                    else if (s.lane_id != lane) {
                        reasons.push_back(std::string(who) + " lane change");
                        return;
                    }
                }
            };
            lane_change(leader, "leader");
            lane_change(follower, "follower");
        }

        LeaderFollowerPair pair;
        if (reasons.empty()) {
            pair.t_start = t0;
            pair.t_end = t1;
            pair.dt = cfg.dt;
            pair.is_free_leader = leader.leader_id.empty();

            Trajectory lw = leader, fw = follower;
            const auto crop = [&](Trajectory& t) {
                Trajectory c;
                c.vehicle_id = t.vehicle_id;
                c.vehicle_length = t.vehicle_length;
                c.leader_id = t.leader_id;
                const auto n = static_cast<std::size_t>(std::floor((t1 - t0) / cfg.dt + kTimeEps));
                for (std::size_t i = 0; i <= n; ++i) c.samples.push_back(t.at(t0 + double(i) * cfg.dt));
                t = std::move(c);
            };
            crop(lw);
            crop(fw);

            // Rebase driven distance to a common origin (follower at window
            // start) so spacing = leader.driven - follower.driven - leader len.
            const double origin = fw.samples.front().driven;
            const double initial_gap0 = [&] {
                // gap at t0 from plane positions, projected on the travel axis
                const auto ls = leader.at(t0);
                const auto fs = follower.at(t0);
                const double dx = ls.x - fs.x;
                const double dy = ls.y - fs.y;
                return std::hypot(dx, dy) - leader.vehicle_length;
            }();
            const double lead_offset =
                initial_gap0 + leader.vehicle_length + origin - lw.samples.front().driven;
            for (auto& s : fw.samples) s.driven -= origin;
            for (auto& s : lw.samples) s.driven += lead_offset - origin;

            bool spacing_ok = true;
            for (std::size_t i = 0; i < fw.samples.size(); ++i) {
                const double gap =
                    lw.samples[i].driven - fw.samples[i].driven - leader.vehicle_length;
                pair.spacing.push_back(gap);
                if (gap < 0) spacing_ok = false;
            }
            if (!spacing_ok) reasons.push_back("negative spacing");
            pair.leader = std::move(lw);
            pair.follower = std::move(fw);
        }

        if (!reasons.empty()) {
            out.rejected.push_back({leader.vehicle_id, follower.vehicle_id, std::move(reasons)});
            continue;
        }

        double first_cross = pair.t_start;
        if (!cfg.stop_line.empty()) {
            const auto sl = cfg.stop_line.find(follower.primary_lane());
            if (sl != cfg.stop_line.end())
                for (std::size_t i = 1; i < follower.samples.size(); ++i)
                    if (follower.samples[i - 1].x < sl->second &&
                        follower.samples[i].x >= sl->second) {
                        first_cross = follower.samples[i].t;
                        break;
                    }
        }
        keyed.push_back({{follower.primary_lane(), first_cross}, std::move(pair)});
    }

    // deterministic output order: (lane, first stop-line crossing, id)
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
        if (a.first.first != b.first.first) return a.first.first < b.first.first;
        if (a.first.second != b.first.second) return a.first.second < b.first.second;
        return a.second.follower.vehicle_id < b.second.follower.vehicle_id;
    });
    for (auto& [key, pair] : keyed) out.pairs.push_back(std::move(pair));
    return out;
}

// ---------------------------------------------------------------------------
// initial parameter estimation

/// Heuristic calibration seed: a_max from the 95th-percentile observed
/// follower acceleration, headway from the median time headway above 5 m/s,
/// F_v from the speed ratio, t_start from the drive-off lag behind the
/// leader. Everything else sits at mid-bounds; the result is clamped into
/// the bounds box.
inline ParameterSet estimate_initial_params(const LeaderFollowerPair& pair,
                                            const ParameterBounds& bounds, double v_limit) {
    std::vector<double> vec = bounds.midpoint();
    const auto set = [&](const std::string& name, double value) {
        for (std::size_t i = 0; i < bounds.ranges.size(); ++i)
            if (bounds.ranges[i].name == name) vec[i] = value;
    };

    const auto& f = pair.follower.samples;
    double v_max = 0.0;
    for (const auto& s : f) v_max = std::max(v_max, s.v);

    if (v_max >= kStopSpeed && f.size() >= 3) {
        std::vector<double> accels(f.size(), 0.0);
        for (std::size_t i = 1; i < f.size(); ++i) {
            const double dt = f[i].t - f[i - 1].t;
            if (dt > 0) accels[i] = (f[i].v - f[i - 1].v) / dt;
        }
        std::vector<double> sorted = accels;
        std::sort(sorted.begin(), sorted.end());
        const double a95 = sorted[static_cast<std::size_t>(0.95 * double(sorted.size() - 1))];
        if (a95 > 0) {
            set("a_max", a95);
            for (std::size_t i = 0; i < bounds.sched_speeds.size(); ++i)
                set("a_max_" + std::to_string(i + 1), a95);
        }

        // headway of the desired-gap law: (gap - s0) / v, s0 being the fixed
        // minimum gap the models keep at standstill
        const double s0 = 2.0;
        std::vector<double> headways;
        for (std::size_t i = 0; i < f.size(); ++i)
            if (f[i].v > 5.0 && pair.spacing[i] > s0)
                headways.push_back((pair.spacing[i] - s0) / f[i].v);
        if (!headways.empty()) {
            std::sort(headways.begin(), headways.end());
            const double t_med = headways[headways.size() / 2];
            set("T", t_med);
            set("tau", t_med);
        }

        if (v_limit > 0) set("F_v", v_max / v_limit);

        const auto dep_l = detail::first_departure(pair.leader, kStopSpeed);
        const auto dep_f = detail::first_departure(pair.follower, kStopSpeed);
        if (dep_l && dep_f) set("t_start", std::max(0.0, *dep_f - *dep_l));
    }

    return apply_vector(bounds, bounds.clamp(std::move(vec)));
}

// ---------------------------------------------------------------------------
// pair (de)serialization

inline nlohmann::json to_json(const LeaderFollowerPair& p) {
    nlohmann::json j;
    j["leader_id"] = p.leader.vehicle_id;
    j["follower_id"] = p.follower.vehicle_id;
    j["is_free_leader"] = p.is_free_leader;
    j["t_start"] = p.t_start;
    j["t_end"] = p.t_end;
    j["dt"] = p.dt;
    j["leader_length"] = p.leader.vehicle_length;
    j["follower_length"] = p.follower.vehicle_length;
    const auto series = [](const Trajectory& t, nlohmann::json& out) {
        nlohmann::json pos = nlohmann::json::array(), v = nlohmann::json::array();
        for (const auto& s : t.samples) {
            pos.push_back(s.driven);
            v.push_back(s.v);
        }
        out["driven"] = std::move(pos);
        out["v"] = std::move(v);
    };
    series(p.leader, j["leader"]);
    series(p.follower, j["follower"]);
    j["spacing"] = p.spacing;
    return j;
}

inline LeaderFollowerPair pair_from_json(const nlohmann::json& j) {
    LeaderFollowerPair p;
    p.t_start = j.at("t_start");
    p.t_end = j.at("t_end");
    p.dt = j.at("dt");
    p.is_free_leader = j.at("is_free_leader");
    const auto series = [&](const nlohmann::json& src, const std::string& id, double length,
                            Trajectory& out) {
        out.vehicle_id = id;
        out.vehicle_length = length;
        const auto& pos = src.at("driven");
        const auto& v = src.at("v");
        for (std::size_t i = 0; i < pos.size(); ++i) {
            TrajectorySample s;
            s.t = p.t_start + double(i) * p.dt;
            s.driven = pos[i];
            s.x = s.driven;
            s.v = v[i];
            out.samples.push_back(std::move(s));
        }
    };
    series(j.at("leader"), j.at("leader_id"), j.at("leader_length"), p.leader);
    series(j.at("follower"), j.at("follower_id"), j.at("follower_length"), p.follower);
    p.spacing = j.at("spacing").get<std::vector<double>>();
    return p;
}

inline nlohmann::json to_json(const SelectionResult& r) {
    nlohmann::json j;
    j["pairs"] = nlohmann::json::array();
    for (const auto& p : r.pairs) j["pairs"].push_back(to_json(p));
    j["rejected"] = nlohmann::json::array();
    for (const auto& rej : r.rejected)
        j["rejected"].push_back({{"leader_id", rej.leader_id},
                                 {"follower_id", rej.follower_id},
                                 {"reasons", rej.reasons}});
    j["counts"] = {{"candidates", r.candidates},
                   {"selected", r.pairs.size()},
                   {"rejected", r.rejected.size()}};
    return j;
}

inline std::vector<LeaderFollowerPair> pairs_from_json(const nlohmann::json& j) {
    std::vector<LeaderFollowerPair> out;
    for (const auto& p : j.at("pairs")) out.push_back(pair_from_json(p));
    return out;
}

}  // namespace carcal

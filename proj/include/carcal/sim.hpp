#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "carcal/io.hpp"
#include "carcal/models.hpp"
#include "carcal/trajectory.hpp"

namespace carcal {

// ---------------------------------------------------------------------------
// log types

struct VehicleRecord {
    int vehicle_id = 0;
    double t = 0.0;
    double position = 0.0;  ///< m along lane (ring: wrapped into [0, L))
    double v = 0.0;
    double a = 0.0;
    int lane_id = 0;
    std::optional<double> gap_to_leader;
};

enum class EventKind { collision, emergency_stop, insertion_blocked };

inline std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::collision: return "collision";
        case EventKind::emergency_stop: return "emergency_stop";
        case EventKind::insertion_blocked: return "insertion_blocked";
    }
    return "?";
}

struct SimEvent {
    double t = 0.0;
    EventKind kind = EventKind::collision;
    int vehicle_id = -1;
};

struct DetectorRecord {
    int zone_id = 0;
    double window_start = 0.0;
    double window_length = 60.0;
    int count = 0;
    double mean_speed = 0.0;  ///< harmonic mean of crossing speeds, m/s
    double density = 0.0;     ///< veh/km via the flow/speed identity
};

struct SimulationLog {
    std::vector<VehicleRecord> records;
    std::vector<SimEvent> events;
    std::vector<DetectorRecord> detectors;

    std::size_t count_events(EventKind k) const {
        std::size_t n = 0;
        for (const auto& e : events) n += e.kind == k;
        return n;
    }
};

// ---------------------------------------------------------------------------
// scenario description

enum class ScenarioKind { calibration_harness, queue, ring, stopgo };

inline std::string to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::calibration_harness: return "calibration-harness";
        case ScenarioKind::queue: return "queue";
        case ScenarioKind::ring: return "ring";
        case ScenarioKind::stopgo: return "stopgo";
    }
    return "?";
}

struct ClosureWindow {
    double start = 0.0;
    double duration = 0.0;
    double position = 0.0;
};

struct SignalPlan {
    double cycle = 60.5;
    double green = 30.25;
    double offset = 30.25;  ///< start of the green phase within the cycle
};

/// Phase query: green iff t falls inside [offset, offset+green) mod cycle.
inline bool signal_is_green(const SignalPlan& plan, double t) {
    double phase = std::fmod(t - plan.offset, plan.cycle);
    if (phase < 0) phase += plan.cycle;
    return phase < plan.green - kTimeEps;
}

struct DetectorZone {
    double start = 0.0;
    double length = 50.0;
};

struct InitialVehicle {
    double x = 0.0;
    double v = 0.0;
    std::size_t fleet_index = 0;
};

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::queue;
    double dt = 0.04;
    double duration = 0.0;
    double lane_length = 500.0;
    double speed_limit = 50.0 / 3.6;
    double insertion_interval = 0.0;  ///< s between entry attempts; 0 = none
    std::vector<ClosureWindow> closures;
    std::optional<SignalPlan> signal;
    double stop_line = 300.0;  ///< used when a signal plan is present
    std::vector<DetectorZone> detector_zones;
    double detector_window = 60.0;
    std::vector<ParameterSet> fleet;    ///< assigned round-robin or weighted
    std::vector<double> fleet_weights;  ///< empty = round-robin
    std::vector<InitialVehicle> initial_vehicles;
    double vehicle_length = 5.0;
    double record_interval = 0.2;  ///< s between trajectory records
    bool keep_records = true;      ///< false: only events + detectors
    bool leader_decel_visibility = true;

    void check() const {
        if (!(dt > 0)) throw std::invalid_argument("scenario: dt must be > 0");
        if (!(duration >= 0)) throw std::invalid_argument("scenario: duration must be >= 0");
        if (!(lane_length > 0)) throw std::invalid_argument("scenario: lane_length must be > 0");
        for (const auto& z : detector_zones)
            if (z.start < 0 || z.start + z.length > lane_length)
                throw std::invalid_argument("scenario: detector zone outside lane");
        for (const auto& c : closures)
            if (c.position < 0 || c.position > lane_length)
                throw std::invalid_argument("scenario: closure position outside lane");
        if ((insertion_interval > 0 || !initial_vehicles.empty()) && fleet.empty())
            throw std::invalid_argument("scenario: fleet is empty");
    }
};

/// Paper-style scenario presets. Fleet must be filled in by the caller.
inline ScenarioConfig queue_scenario() {
    ScenarioConfig cfg;
    cfg.kind = ScenarioKind::queue;
    cfg.duration = 2600.0;
    cfg.lane_length = 500.0;
    cfg.stop_line = 300.0;
    cfg.signal = SignalPlan{60.5, 30.25, 30.25};  // red first, 43 green phases
    cfg.insertion_interval = 3.0;
    return cfg;
}

inline ScenarioConfig ring_scenario() {
    ScenarioConfig cfg;
    cfg.kind = ScenarioKind::ring;
    cfg.duration = 4200.0;
    cfg.lane_length = 3400.0;
    cfg.insertion_interval = 5.0;
    // fill-up phase first, then a short blockage every 250 s for 25 s
    for (double t = 1000.0; t < cfg.duration; t += 250.0)
        cfg.closures.push_back({t, 25.0, 3200.0});
    cfg.detector_zones = {{400.0, 50.0}, {1400.0, 50.0}, {2400.0, 50.0}};
    return cfg;
}

inline ScenarioConfig stopgo_scenario() {
    ScenarioConfig cfg;
    cfg.kind = ScenarioKind::stopgo;
    cfg.duration = 900.0;
    cfg.lane_length = 5000.0;
    cfg.insertion_interval = 2.5;
    cfg.closures.push_back({300.0, 200.0, 3500.0});
    return cfg;
}

// ---------------------------------------------------------------------------
// engine

namespace detail {

inline double min_gap_of(const ParameterSet& ps) {
    switch (ps.kind) {
        case ModelKind::krauss: return 2.0;
        case ModelKind::eidm: return ps.eidm().base.s0;
        default: return ps.idm().s0;
    }
}

inline double headway_of(const ParameterSet& ps) {
    switch (ps.kind) {
        case ModelKind::krauss: return ps.krauss().tau;
        case ModelKind::eidm: return ps.eidm().base.T;
        default: return ps.idm().T;
    }
}

inline double decel_of(const ParameterSet& ps) {
    switch (ps.kind) {
        case ModelKind::krauss: return ps.krauss().b;
        case ModelKind::eidm: return ps.eidm().base.b;
        default: return ps.idm().b;
    }
}

inline double speed_factor_of(const ParameterSet& ps) {
    switch (ps.kind) {
        case ModelKind::krauss: return ps.krauss().F_v;
        case ModelKind::eidm: return ps.eidm().base.F_v;
        default: return ps.idm().F_v;
    }
}

// Deterministic uniform in [0,1) from the raw engine; avoids distribution
// implementation differences.
inline double canonical(std::uint64_t raw) {
    return double(raw >> 11) * 0x1.0p-53;
}

}  // namespace detail

class Simulation {
  public:
    struct Vehicle {
        int id = 0;
        double x = 0.0;  ///< cumulative position; display = fmod(x, L) on rings
        double v = 0.0;
        double a = 0.0;
        double length = 5.0;
        ParameterSet params;
        DriverState state;
        bool emergency_prev = false;
        long last_leader_ident = std::numeric_limits<long>::min();
        std::vector<std::pair<long, bool>> barrier_verdicts;
    };

    Simulation(ScenarioConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
        cfg_.check();
        for (const auto& iv : cfg_.initial_vehicles) {
            if (iv.fleet_index >= cfg_.fleet.size())
                throw std::invalid_argument("initial vehicle: fleet index out of range");
            spawn(iv.x, iv.v, cfg_.fleet[iv.fleet_index]);
        }
    }

    double time() const { return t_; }
    const std::deque<Vehicle>& vehicles() const { return order_; }
    SimulationLog& log() { return log_; }

    void add_vehicle(double x, double v, const ParameterSet& ps) { spawn(x, v, ps); }

    bool ring() const { return cfg_.kind == ScenarioKind::ring; }

    double display_pos(double x) const {
        if (!ring()) return x;
        double p = std::fmod(x, cfg_.lane_length);
        if (p < 0) p += cfg_.lane_length;
        return p;
    }

    /// One fixed time step: control decisions from the pre-step state, then
    /// the semi-implicit kinematic update, then event detection.
    void step() {
        maybe_insert();
        cur_barriers_ = active_barriers();

        const std::size_t n = order_.size();
        std::vector<double> accel(n, 0.0);
        std::vector<bool> emergency(n, false);
        for (std::size_t i = 0; i < n; ++i) {
            Vehicle& veh = order_[i];
            const auto [ctx, ident] = context_for(i);
            if (ident != veh.last_leader_ident) {
                veh.state.last_perception_time = -std::numeric_limits<double>::infinity();
                veh.last_leader_ident = ident;
            }
            double eta = 0.0;
            if (veh.params.kind == ModelKind::krauss && veh.params.krauss().epsilon > 0)
                eta = detail::canonical(rng_());
            auto out = follower_control(veh.params, ctx, veh.state, cfg_.dt, eta);
            veh.state = out.state;
            accel[i] = out.a;
            emergency[i] = out.emergency;
        }

        std::vector<double> x_prev(n);
        for (std::size_t i = 0; i < n; ++i) {
            Vehicle& veh = order_[i];
            x_prev[i] = veh.x;
            veh.a = accel[i];
            veh.v = std::max(0.0, veh.v + accel[i] * cfg_.dt);
            veh.x += veh.v * cfg_.dt;
            if (emergency[i] && !veh.emergency_prev)
                log_.events.push_back({t_ + cfg_.dt, EventKind::emergency_stop, veh.id});
            veh.emergency_prev = emergency[i];
        }

        // collision scan: each gap crossing is one event; the clamp restores a
        // 1 cm gap so a renewed crossing counts again
        for (std::size_t i = 0; i < n; ++i) {
            if (i == 0 && !ring()) continue;
            Vehicle& veh = order_[i];
            const Vehicle& lead = order_[i == 0 ? n - 1 : i - 1];
            if (&lead == &veh) continue;
            const double gap_now = gap_between(veh.x, lead.x, lead.length);
            if (gap_now <= 0.0) {
                log_.events.push_back({t_ + cfg_.dt, EventKind::collision, veh.id});
                veh.x += gap_now - 0.01;
                veh.v = lead.v;
            }
        }

        update_detectors(x_prev);
        ++step_k_;
        t_ = double(step_k_) * cfg_.dt;  // exact grid, no accumulation drift

        // exits at the downstream end (open lanes only)
        if (!ring())
            while (!order_.empty() && order_.front().x - order_.front().length > cfg_.lane_length)
                order_.pop_front();
    }

    void record_states() {
        if (!cfg_.keep_records) return;
        const std::size_t n = order_.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vehicle& veh = order_[i];
            VehicleRecord r;
            r.vehicle_id = veh.id;
            r.t = t_;
            r.position = display_pos(veh.x);
            r.v = veh.v;
            r.a = veh.a;
            r.lane_id = 0;
            if (i > 0 || (ring() && n > 1)) {
                const Vehicle& lead = order_[i == 0 ? n - 1 : i - 1];
                if (&lead != &veh) r.gap_to_leader = gap_between(veh.x, lead.x, lead.length);
            }
            log_.records.push_back(r);
        }
    }

    SimulationLog run() {
        const auto steps = static_cast<std::size_t>(std::llround(cfg_.duration / cfg_.dt));
        const auto every = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(cfg_.record_interval / cfg_.dt)));
        for (std::size_t k = 0; k < steps; ++k) {
            if (k % every == 0) record_states();
            step();
        }
        if (steps % every == 0) record_states();
        return std::move(log_);  // trailing partial detector windows are dropped
    }

  private:
    struct Barrier {
        long ident;       ///< stable identity of this activation
        double position;  ///< display coordinate
    };

    std::vector<Barrier> active_barriers() const {
        std::vector<Barrier> out;
        for (std::size_t i = 0; i < cfg_.closures.size(); ++i) {
            const auto& c = cfg_.closures[i];
            if (t_ >= c.start - kTimeEps && t_ < c.start + c.duration - kTimeEps)
                out.push_back({long(1000 + i), c.position});
        }
        if (cfg_.signal && !signal_is_green(*cfg_.signal, t_)) {
            const long phase = long(std::floor((t_ - cfg_.signal->offset) / cfg_.signal->cycle)) ;
            out.push_back({long(2000000) + phase, cfg_.stop_line});
        }
        return out;
    }

    double gap_between(double follower_x, double leader_x, double leader_len) const {
        if (!ring()) return leader_x - leader_len - follower_x;
        double d = std::fmod(leader_x - follower_x, cfg_.lane_length);
        if (d < 0) d += cfg_.lane_length;
        if (d == 0.0) d = cfg_.lane_length;  // self-leader: full lap
        return d - leader_len;
    }

    /// Distance from display position `from` forward to display position `to`.
    double ring_ahead(double from, double to) const {
        double d = std::fmod(to - from, cfg_.lane_length);
        if (d < 0) d += cfg_.lane_length;
        return d;
    }

    /// Barrier commitment: a driver stops for a barrier only if braking to a
    /// halt before it stays well inside its desired deceleration (vehicles
    /// already too close pass through, like a late yellow). The 0.7 headroom
    /// keeps the following models' peak braking clear of the emergency floor.
    /// Slow vehicles always stop. The verdict is frozen per activation.
    static constexpr double kCommitFactor = 0.7;

    bool bound_to(Vehicle& veh, const Barrier& b, double gap) const {
        for (auto& [ident, bound] : veh.barrier_verdicts)
            if (ident == b.ident) return bound;
        bool bound = true;
        if (veh.v >= 1.0 && gap > 0) {
            const double required = veh.v * veh.v / (2.0 * gap);
            bound = required <= kCommitFactor * detail::decel_of(veh.params);
        } else if (gap <= 0) {
            bound = false;
        }
        // prune stale verdicts
        if (veh.barrier_verdicts.size() > 8)
            veh.barrier_verdicts.erase(veh.barrier_verdicts.begin());
        veh.barrier_verdicts.push_back({b.ident, bound});
        return bound;
    }

    std::pair<FollowerContext, long> context_for(std::size_t i) {
        Vehicle& veh = order_[i];
        const std::size_t n = order_.size();
        FollowerContext ctx;
        ctx.v = veh.v;
        ctx.v_limit = cfg_.speed_limit;
        ctx.t = t_;
        ctx.gap = kInfiniteGap;
        long ident = -1;  // free road

        const Vehicle* lead = nullptr;
        if (i > 0)
            lead = &order_[i - 1];
        else if (ring() && n > 1)
            lead = &order_[n - 1];
        if (lead) {
            ctx.gap = gap_between(veh.x, lead->x, lead->length);
            ctx.v_leader = lead->v;
            ident = lead->id;
            if (cfg_.leader_decel_visibility && veh.params.kind == ModelKind::krauss)
                ctx.leader_b = detail::decel_of(lead->params);
        }

        for (const auto& b : cur_barriers_) {
            double bgap;
            if (ring()) {
                bgap = ring_ahead(display_pos(veh.x), b.position);
                if (bgap == 0.0) bgap = cfg_.lane_length;
            } else {
                bgap = b.position - veh.x;
            }
            if (bgap <= 0.05) continue;       // already past the line
            if (bgap >= ctx.gap) continue;    // real leader is closer
            if (!bound_to(veh, b, bgap)) continue;
            ctx.gap = bgap;
            ctx.v_leader = 0.0;
            ctx.leader_b.reset();
            ident = -b.ident;
        }

        if (ctx.gap <= 0.0) ctx.gap = 0.001;  // overlapped after a collision
        return {ctx, ident};
    }

    void spawn(double x, double v, const ParameterSet& ps) {
        Vehicle veh;
        veh.id = next_id_++;
        veh.x = x;
        veh.v = v;
        veh.length = cfg_.vehicle_length;
        veh.params = ps;
        if (order_.empty()) {
            order_.push_back(std::move(veh));
            return;
        }
        if (!ring()) {
            // entry is the upstream end; keep descending-x order
            std::size_t pos = order_.size();
            while (pos > 0 && order_[pos - 1].x < x) --pos;
            order_.insert(order_.begin() + long(pos), std::move(veh));
            return;
        }
        // ring: splice behind the vehicle nearest ahead of the entry point
        const double entry = display_pos(x);
        std::size_t ahead = 0;
        double best = std::numeric_limits<double>::max();
        for (std::size_t i = 0; i < order_.size(); ++i) {
            const double d = ring_ahead(entry, display_pos(order_[i].x));
            if (d < best) {
                best = d;
                ahead = i;
            }
        }
        order_.insert(order_.begin() + long(ahead) + 1, std::move(veh));
    }

    const ParameterSet& pick_fleet_member() {
        if (cfg_.fleet_weights.empty())
            return cfg_.fleet[(insert_count_) % cfg_.fleet.size()];
        const double u = detail::canonical(rng_()) ;
        double total = 0.0;
        for (double w : cfg_.fleet_weights) total += w;
        double acc = 0.0;
        for (std::size_t i = 0; i < cfg_.fleet.size(); ++i) {
            acc += cfg_.fleet_weights[i] / total;
            if (u < acc) return cfg_.fleet[i];
        }
        return cfg_.fleet.back();
    }

    void maybe_insert() {
        if (cfg_.insertion_interval <= 0 || cfg_.fleet.empty()) return;
        const double due = double(insert_count_) * cfg_.insertion_interval;
        if (t_ + kTimeEps < due) return;

        const ParameterSet& ps = pick_fleet_member();
        ++insert_count_;

        const double desired = detail::speed_factor_of(ps) * cfg_.speed_limit;
        const double entry = 0.0;

        const Vehicle* lead = nullptr;
        const Vehicle* rear = nullptr;
        if (!order_.empty()) {
            if (!ring()) {
                lead = &order_.back();
            } else {
                double best_ahead = std::numeric_limits<double>::max();
                double best_behind = std::numeric_limits<double>::max();
                for (const auto& veh : order_) {
                    const double da = ring_ahead(entry, display_pos(veh.x));
                    const double db = ring_ahead(display_pos(veh.x), entry);
                    if (da < best_ahead) {
                        best_ahead = da;
                        lead = &veh;
                    }
                    if (db < best_behind) {
                        best_behind = db;
                        rear = &veh;
                    }
                }
            }
        }

        double v_ins = desired;
        if (lead) {
            const double gap = ring() ? ring_ahead(entry, display_pos(lead->x)) - lead->length
                                      : lead->x - lead->length - entry;
            if (gap < 100.0) v_ins = std::min(desired, lead->v + 1.0);
            const double need = detail::min_gap_of(ps) + v_ins * detail::headway_of(ps);
            if (gap < need) {
                log_.events.push_back({t_, EventKind::insertion_blocked, -1});
                return;
            }
        }
        if (rear && rear != lead) {
            const double rgap = ring_ahead(display_pos(rear->x), entry) - cfg_.vehicle_length;
            const double need = detail::min_gap_of(rear->params) +
                                rear->v * detail::headway_of(rear->params);
            if (rgap < need) {
                log_.events.push_back({t_, EventKind::insertion_blocked, -1});
                return;
            }
        }
        spawn(entry, v_ins, ps);
    }

    void update_detectors(const std::vector<double>& x_prev) {
        if (cfg_.detector_zones.empty()) return;
        if (windows_.empty()) windows_.resize(cfg_.detector_zones.size());

        for (std::size_t z = 0; z < cfg_.detector_zones.size(); ++z) {
            const double zs = cfg_.detector_zones[z].start;
            for (std::size_t i = 0; i < order_.size(); ++i) {
                if (i >= x_prev.size()) continue;  // inserted this step
                const double before = x_prev[i];
                const double after = order_[i].x;
                bool crossed;
                if (!ring()) {
                    crossed = before < zs && after >= zs;
                } else {
                    const double L = cfg_.lane_length;
                    crossed = std::floor((after - zs) / L) > std::floor((before - zs) / L);
                }
                if (crossed) {
                    windows_[z].count += 1;
                    windows_[z].inv_speed_sum += 1.0 / std::max(order_[i].v, 0.1);
                }
            }
        }

        const double w = cfg_.detector_window;
        if (std::floor((t_ + cfg_.dt) / w) > std::floor(t_ / w + kTimeEps)) {
            const double start = std::floor(t_ / w + kTimeEps) * w;
            emit_detector_windows(start);
        }
    }

    void emit_detector_windows(double window_start) {
        for (std::size_t z = 0; z < windows_.size(); ++z) {
            DetectorRecord rec;
            rec.zone_id = int(z);
            rec.window_start = window_start;
            rec.window_length = cfg_.detector_window;
            rec.count = windows_[z].count;
            if (windows_[z].count > 0) {
                rec.mean_speed = std::max(double(windows_[z].count) / windows_[z].inv_speed_sum,
                                          0.1);
                const double flow = double(windows_[z].count) / cfg_.detector_window;  // veh/s
                rec.density = flow / rec.mean_speed * 1000.0;  // veh/km
            }
            log_.detectors.push_back(rec);
            windows_[z] = {};
        }
    }

    struct WindowAccum {
        int count = 0;
        double inv_speed_sum = 0.0;
    };

    ScenarioConfig cfg_;
    std::mt19937_64 rng_;
    std::deque<Vehicle> order_;  ///< spatial order, front first (ring: circular)
    std::vector<Barrier> cur_barriers_;
    std::vector<WindowAccum> windows_;
    SimulationLog log_;
    double t_ = 0.0;
    std::size_t step_k_ = 0;
    int next_id_ = 0;
    std::size_t insert_count_ = 0;
};

inline SimulationLog run_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
    Simulation sim(cfg, seed);
    return sim.run();
}

// ---------------------------------------------------------------------------
// ground-truth leader replay

/// Position (driven distance) and speed at time t, linearly interpolated;
/// outside the recorded range the first/last sample is held.
inline std::pair<double, double> replay_leader(const Trajectory& traj, double t) {
    const auto s = traj.at(t);
    return {s.driven, s.v};
}

// ---------------------------------------------------------------------------
// calibration harness: N isolated lanes, one replayed leader and one
// model-driven follower per lane

struct HarnessLaneResult {
    std::vector<double> spacing;  ///< simulated bumper-to-bumper gap per grid point
    bool collided = false;
    bool emergency = false;
};

/// Steps one candidate follower behind the pair's replayed leader across the
/// pair's grid. Lanes never interact, so batched evaluation equals running
/// the lanes one at a time.
inline HarnessLaneResult run_harness_lane(const LeaderFollowerPair& pair,
                                          const ParameterSet& candidate, double v_limit,
                                          SimulationLog* log = nullptr, int lane_id = 0) {
    const std::size_t n = pair.spacing.size();
    HarnessLaneResult out;
    out.spacing.reserve(n);

    const double leader_len = pair.leader.vehicle_length;
    double x = pair.follower.samples.front().driven;
    double v = pair.follower.samples.front().v;
    DriverState st;

    for (std::size_t i = 0; i < n; ++i) {
        const double t = pair.t_start + double(i) * pair.dt;
        const auto [lead_x, lead_v] = replay_leader(pair.leader, t);
        const double gap = lead_x - leader_len - x;
        out.spacing.push_back(gap);
        if (log) {
            VehicleRecord leader_rec{2 * lane_id, t, lead_x, lead_v, 0.0, lane_id, std::nullopt};
            VehicleRecord follower_rec{2 * lane_id + 1, t, x, v, 0.0, lane_id, gap};
            log->records.push_back(leader_rec);
            log->records.push_back(follower_rec);
        }
        if (gap <= 0.0) {
            out.collided = true;
            if (log) log->events.push_back({t, EventKind::collision, 2 * lane_id + 1});
            break;
        }
        if (i + 1 == n) break;

        FollowerContext ctx;
        ctx.v = v;
        ctx.gap = gap;
        ctx.v_leader = lead_v;
        ctx.v_limit = v_limit;
        ctx.t = t;
        auto res = follower_control(candidate, ctx, st, pair.dt);
        st = res.state;
        if (res.emergency) {
            out.emergency = true;
            if (log) log->events.push_back({t, EventKind::emergency_stop, 2 * lane_id + 1});
        }
        v = std::max(0.0, v + res.a * pair.dt);
        x += v * pair.dt;
    }
    return out;
}

/// Runs the N-lane harness with full trajectory records (lane k holds the
/// replayed leader 2k and the candidate follower 2k+1).
inline SimulationLog run_calibration_harness(const LeaderFollowerPair& pair,
                                             const std::vector<ParameterSet>& candidates,
                                             double v_limit) {
    if (candidates.empty())
        throw std::invalid_argument("calibration harness: no candidates (N = 0 lanes)");
    SimulationLog log;
    for (std::size_t k = 0; k < candidates.size(); ++k)
        run_harness_lane(pair, candidates[k], v_limit, &log, int(k));
    return log;
}

/// Simulated spacing series for one harness lane, aligned with the pair's
/// ground-truth grid.
inline std::vector<double> spacing_mop(const SimulationLog& log, int lane_id) {
    std::vector<double> out;
    const int follower_id = 2 * lane_id + 1;
    for (const auto& r : log.records)
        if (r.vehicle_id == follower_id && r.lane_id == lane_id && r.gap_to_leader)
            out.push_back(*r.gap_to_leader);
    if (out.empty()) throw std::runtime_error("spacing_mop: lane not present in log");
    return out;
}

// ---------------------------------------------------------------------------
// log CSV serialization

inline std::string log_records_csv(const SimulationLog& log) {
    std::string s = "vehicle_id,t,position,v,a,lane_id,gap\n";
    for (const auto& r : log.records) {
        s += std::to_string(r.vehicle_id);
        s += ',';
        s += fmt_double(r.t);
        s += ',';
        s += fmt_double(r.position);
        s += ',';
        s += fmt_double(r.v);
        s += ',';
        s += fmt_double(r.a);
        s += ',';
        s += std::to_string(r.lane_id);
        s += ',';
        if (r.gap_to_leader) s += fmt_double(*r.gap_to_leader);
        s += '\n';
    }
    return s;
}

inline std::string log_events_csv(const SimulationLog& log) {
    std::string s = "t,kind,vehicle_id\n";
    for (const auto& e : log.events) {
        s += fmt_double(e.t);
        s += ',';
        s += to_string(e.kind);
        s += ',';
        s += std::to_string(e.vehicle_id);
        s += '\n';
    }
    return s;
}

inline std::string log_detectors_csv(const SimulationLog& log) {
    std::string s = "zone_id,window_start,window_length,count,mean_speed,density\n";
    for (const auto& d : log.detectors) {
        s += std::to_string(d.zone_id);
        s += ',';
        s += fmt_double(d.window_start);
        s += ',';
        s += fmt_double(d.window_length);
        s += ',';
        s += std::to_string(d.count);
        s += ',';
        s += fmt_double(d.mean_speed);
        s += ',';
        s += fmt_double(d.density);
        s += '\n';
    }
    return s;
}

inline void write_log_csv(const SimulationLog& log, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file(dir / "log.csv", log_records_csv(log));
    write_file(dir / "events.csv", log_events_csv(log));
    write_file(dir / "detectors.csv", log_detectors_csv(log));
}

inline SimulationLog read_log_csv(const std::filesystem::path& dir) {
    SimulationLog log;
    {
        std::ifstream in(dir / "log.csv");
        if (!in) throw std::runtime_error("cannot read " + (dir / "log.csv").string());
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto f = detail::split_csv_line(line);
            VehicleRecord r;
            r.vehicle_id = std::atoi(f[0].c_str());
            r.t = std::strtod(f[1].c_str(), nullptr);
            r.position = std::strtod(f[2].c_str(), nullptr);
            r.v = std::strtod(f[3].c_str(), nullptr);
            r.a = std::strtod(f[4].c_str(), nullptr);
            r.lane_id = std::atoi(f[5].c_str());
            if (f.size() > 6 && !f[6].empty()) r.gap_to_leader = std::strtod(f[6].c_str(), nullptr);
            log.records.push_back(r);
        }
    }
    {
        std::ifstream in(dir / "events.csv");
        if (in) {
            std::string line;
            std::getline(in, line);
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                const auto f = detail::split_csv_line(line);
                SimEvent e;
                e.t = std::strtod(f[0].c_str(), nullptr);
                e.kind = f[1] == "collision" ? EventKind::collision
                         : f[1] == "emergency_stop" ? EventKind::emergency_stop
                                                    : EventKind::insertion_blocked;
                e.vehicle_id = std::atoi(f[2].c_str());
                log.events.push_back(e);
            }
        }
    }
    {
        std::ifstream in(dir / "detectors.csv");
        if (in) {
            std::string line;
            std::getline(in, line);
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                const auto f = detail::split_csv_line(line);
                DetectorRecord d;
                d.zone_id = std::atoi(f[0].c_str());
                d.window_start = std::strtod(f[1].c_str(), nullptr);
                d.window_length = std::strtod(f[2].c_str(), nullptr);
                d.count = std::atoi(f[3].c_str());
                d.mean_speed = std::strtod(f[4].c_str(), nullptr);
                d.density = std::strtod(f[5].c_str(), nullptr);
                log.detectors.push_back(d);
            }
        }
    }
    return log;
}

}  // namespace carcal

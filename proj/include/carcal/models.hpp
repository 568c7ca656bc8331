#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace carcal {

/// Command floor for every model output (m/s^2). Hitting it is an
/// emergency-stop event in the simulation log.
inline constexpr double kEmergencyDecel = 9.0;

/// Below this speed a vehicle counts as stopped (m/s).
inline constexpr double kStopSpeed = 0.1;

/// Perceived gap must open by this much beyond s0 before a stopped driver
/// starts the drive-off sequence (m).
inline constexpr double kDriveOffGapMargin = 0.25;

/// Free-flow sentinel: no leader in sight.
inline constexpr double kInfiniteGap = std::numeric_limits<double>::infinity();

/// Slack when comparing simulation clocks against action/perception periods.
inline constexpr double kTimeEps = 1e-9;

// ---------------------------------------------------------------------------
// parameter sets

/// Speed-dependent maximum acceleration: (v_i, a_i) breakpoints, strictly
/// increasing in v, linear interpolation in between, clamped outside.
struct AmaxSchedule {
    std::vector<std::pair<double, double>> breakpoints;
};

inline double amax_lookup(double v, const AmaxSchedule& sched) {
    const auto& bp = sched.breakpoints;
    if (bp.empty()) throw std::invalid_argument("amax_lookup: empty schedule");
    if (v <= bp.front().first) return bp.front().second;
    if (v >= bp.back().first) return bp.back().second;
    for (std::size_t i = 1; i < bp.size(); ++i) {
        if (v <= bp[i].first) {
            const double w = (v - bp[i - 1].first) / (bp[i].first - bp[i - 1].first);
            return bp[i - 1].second + w * (bp[i].second - bp[i - 1].second);
        }
    }
    return bp.back().second;  // unreachable
}

struct IdmParams {
    double a_max = 2.6;   ///< max acceleration (m/s^2)
    double b = 4.5;       ///< desired deceleration (m/s^2)
    double T = 1.0;       ///< desired time headway (s)
    double delta = 4.0;   ///< acceleration exponent
    double F_v = 1.0;     ///< speed factor: desired speed = F_v * speed limit
    double s0 = 2.0;      ///< minimum gap (m); fixed, not calibrated
    double t_AP = 0.04;   ///< action step length (s)
};

struct EidmParams {
    IdmParams base;
    double t_reac = 0.5;    ///< reaction time: perception refresh period (s)
    double t_start = 0.5;   ///< start-up delay before drive-off (s)
    double M_bg = 0.15;     ///< start-up begin factor, fraction of full accel
    double t_amax = 4.0;    ///< time from drive-off until maximal acceleration (s)
    std::optional<AmaxSchedule> amax_schedule;  ///< overrides base.a_max when set
};

struct KraussParams {
    double a_max = 2.6;
    double b = 4.5;
    double tau = 1.0;      ///< driver headway; must stay >= simulation step
    double F_v = 1.0;
    double t_AP = 0.04;
    double epsilon = 0.0;  ///< dawdle factor; 0 disables stochastic output
};

enum class ModelKind { krauss, idm, iidm, eidm };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::krauss: return "krauss";
        case ModelKind::idm: return "idm";
        case ModelKind::iidm: return "iidm";
        case ModelKind::eidm: return "eidm";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "krauss") return ModelKind::krauss;
    if (s == "idm") return ModelKind::idm;
    if (s == "iidm") return ModelKind::iidm;
    if (s == "eidm") return ModelKind::eidm;
    throw std::invalid_argument("unknown model kind: " + s);
}

/// One vehicle-driver combination: model kind plus its parameters.
struct ParameterSet {
    ModelKind kind = ModelKind::eidm;
    std::variant<KraussParams, IdmParams, EidmParams> values = EidmParams{};

    const KraussParams& krauss() const { return std::get<KraussParams>(values); }
    const IdmParams& idm() const { return std::get<IdmParams>(values); }
    const EidmParams& eidm() const { return std::get<EidmParams>(values); }

    double action_step() const {
        switch (kind) {
            case ModelKind::krauss: return krauss().t_AP;
            case ModelKind::eidm: return eidm().base.t_AP;
            default: return idm().t_AP;
        }
    }

    static ParameterSet defaults(ModelKind k) {
        ParameterSet p;
        p.kind = k;
        switch (k) {
            case ModelKind::krauss: p.values = KraussParams{}; break;
            case ModelKind::idm:
            case ModelKind::iidm: p.values = IdmParams{}; break;
            case ModelKind::eidm: p.values = EidmParams{}; break;
        }
        return p;
    }
};

inline void validate(const IdmParams& p) {
    if (!(p.a_max > 0)) throw std::invalid_argument("idm: a_max must be > 0");
    if (!(p.b > 0)) throw std::invalid_argument("idm: b must be > 0");
    if (!(p.T >= 0)) throw std::invalid_argument("idm: T must be >= 0");
    if (!(p.delta > 0)) throw std::invalid_argument("idm: delta must be > 0");
    if (!(p.F_v > 0)) throw std::invalid_argument("idm: F_v must be > 0");
    if (!(p.s0 >= 0)) throw std::invalid_argument("idm: s0 must be >= 0");
    if (!(p.t_AP > 0)) throw std::invalid_argument("idm: t_AP must be > 0");
}

inline void validate(const AmaxSchedule& s) {
    if (s.breakpoints.empty()) throw std::invalid_argument("amax_schedule: empty");
    for (std::size_t i = 0; i < s.breakpoints.size(); ++i) {
        if (!(s.breakpoints[i].second > 0))
            throw std::invalid_argument("amax_schedule: accelerations must be > 0");
        if (i > 0 && !(s.breakpoints[i].first > s.breakpoints[i - 1].first))
            throw std::invalid_argument("amax_schedule: speeds must be strictly increasing");
    }
}

inline void validate(const EidmParams& p) {
    validate(p.base);
    if (!(p.t_reac >= 0)) throw std::invalid_argument("eidm: t_reac must be >= 0");
    if (!(p.t_start >= 0)) throw std::invalid_argument("eidm: t_start must be >= 0");
    if (!(p.M_bg >= 0 && p.M_bg <= 1)) throw std::invalid_argument("eidm: M_bg must be in [0,1]");
    if (!(p.t_amax >= 0)) throw std::invalid_argument("eidm: t_amax must be >= 0");
    if (p.amax_schedule) validate(*p.amax_schedule);
}

inline void validate(const KraussParams& p) {
    if (!(p.a_max > 0)) throw std::invalid_argument("krauss: a_max must be > 0");
    if (!(p.b > 0)) throw std::invalid_argument("krauss: b must be > 0");
    if (!(p.tau >= 0)) throw std::invalid_argument("krauss: tau must be >= 0");
    if (!(p.F_v > 0)) throw std::invalid_argument("krauss: F_v must be > 0");
    if (!(p.t_AP > 0)) throw std::invalid_argument("krauss: t_AP must be > 0");
    if (!(p.epsilon >= 0 && p.epsilon <= 1))
        throw std::invalid_argument("krauss: epsilon must be in [0,1]");
}

inline void validate(const ParameterSet& p) {
    std::visit([](const auto& v) { validate(v); }, p.values);
}

// ---------------------------------------------------------------------------
// follower context and per-driver state

/// Everything a follower can see at time t. gap is bumper to bumper;
/// kInfiniteGap means free road. leader_b is filled in only when the
/// leader-deceleration-visibility policy is enabled.
struct FollowerContext {
    double v = 0.0;
    double gap = kInfiniteGap;
    double v_leader = 0.0;
    double v_limit = 13.89;
    double t = 0.0;
    std::optional<double> leader_b;
};

/// Per-driver mutable memory. Perception fields hold the last look at the
/// leader; startup fields drive the EIDM drive-off sequence; action fields
/// implement the t_AP hold shared by all models.
struct DriverState {
    std::optional<double> stopped_since;
    std::optional<double> startup_elapsed;  ///< time since drive-off trigger
    double perceived_gap = kInfiniteGap;
    double perceived_dv = 0.0;
    double last_perception_time = -std::numeric_limits<double>::infinity();
    double last_action_time = -std::numeric_limits<double>::infinity();
    double held_acceleration = 0.0;
};

// ---------------------------------------------------------------------------
// acceleration laws

namespace detail {

inline void check_gap(double gap) {
    if (!(gap > 0))
        throw std::domain_error("car-following model evaluated in collision state (gap <= 0)");
}

inline double desired_gap(double v, double dv, const IdmParams& p) {
    return p.s0 + std::max(0.0, v * p.T + v * dv / (2.0 * std::sqrt(p.a_max * p.b)));
}

}  // namespace detail

/// Classic IDM acceleration. Output is clamped to the emergency floor.
inline double idm_acceleration(const FollowerContext& ctx, const IdmParams& p) {
    detail::check_gap(ctx.gap);
    const double v0 = p.F_v * ctx.v_limit;
    const double s_star = detail::desired_gap(ctx.v, ctx.v - ctx.v_leader, p);
    const double z = s_star / ctx.gap;
    const double a = p.a_max * (1.0 - std::pow(ctx.v / v0, p.delta) - z * z);
    return std::max(a, -kEmergencyDecel);
}

/// Improved IDM: removes the IDM's excess braking near the desired gap and
/// its harsh response above the desired speed.
inline double iidm_acceleration(const FollowerContext& ctx, const IdmParams& p) {
    detail::check_gap(ctx.gap);
    const double v0 = p.F_v * ctx.v_limit;
    const double z = detail::desired_gap(ctx.v, ctx.v - ctx.v_leader, p) / ctx.gap;
    double a;
    if (ctx.v <= v0) {
        const double a_free = p.a_max * (1.0 - std::pow(ctx.v / v0, p.delta));
        if (z >= 1.0) {
            a = p.a_max * (1.0 - z * z);
        } else {
            a = a_free == 0.0 ? 0.0 : a_free * (1.0 - std::pow(z, 2.0 * p.a_max / a_free));
        }
    } else {
        const double a_free = -p.b * (1.0 - std::pow(v0 / ctx.v, p.a_max * p.delta / p.b));
        a = z >= 1.0 ? a_free + p.a_max * (1.0 - z * z) : a_free;
    }
    return std::max(a, -kEmergencyDecel);
}

/// Drive-off ramp: fraction of full acceleration applied tau seconds after
/// the start-up delay expired.
inline double startup_ramp(double tau, double M_bg, double t_amax) {
    if (t_amax <= 0.0) return 1.0;
    return M_bg + (1.0 - M_bg) * std::min(1.0, tau / t_amax);
}

/// EIDM: Improved IDM plus perception held for t_reac, a start-up delay and
/// an acceleration ramp after drive-off, and an optional speed-dependent
/// a_max. Call once per simulation step; returns the updated driver state.
inline std::pair<double, DriverState> eidm_acceleration(const FollowerContext& ctx,
                                                        DriverState st, const EidmParams& p,
                                                        double dt) {
    if (!(dt > 0)) throw std::invalid_argument("eidm_acceleration: dt must be > 0");
    detail::check_gap(ctx.gap);

    IdmParams eff = p.base;
    if (p.amax_schedule) eff.a_max = amax_lookup(ctx.v, *p.amax_schedule);

    if (ctx.t - st.last_perception_time >= p.t_reac - kTimeEps) {
        st.perceived_gap = ctx.gap;
        st.perceived_dv = ctx.v - ctx.v_leader;
        st.last_perception_time = ctx.t;
    }

    const double perceived_leader_v = ctx.v - st.perceived_dv;
    const bool trigger =
        st.perceived_gap > eff.s0 + kDriveOffGapMargin || perceived_leader_v > kStopSpeed;

    if (ctx.v < kStopSpeed) {
        if (!st.stopped_since) st.stopped_since = ctx.t;
        if (st.startup_elapsed) {
            if (trigger)
                *st.startup_elapsed += dt;
            else
                st.startup_elapsed.reset();  // gap closed again, re-arm
        } else if (trigger) {
            st.startup_elapsed = 0.0;
        }
    } else {
        st.stopped_since.reset();
        if (st.startup_elapsed) {
            *st.startup_elapsed += dt;
            if (*st.startup_elapsed >= p.t_start + p.t_amax) st.startup_elapsed.reset();
        }
    }

    FollowerContext seen = ctx;
    seen.gap = st.perceived_gap;
    seen.v_leader = perceived_leader_v;
    double a = iidm_acceleration(seen, eff);

    if (st.startup_elapsed) {
        if (*st.startup_elapsed < p.t_start)
            a = 0.0;
        else if (a > 0.0)
            a *= startup_ramp(*st.startup_elapsed - p.t_start, p.M_bg, p.t_amax);
    }
    return {std::max(a, -kEmergencyDecel), st};
}

/// Krauss safe speed bound. With the deceleration-visibility policy on,
/// ctx.leader_b replaces the follower's own b.
inline double krauss_safe_speed(const FollowerContext& ctx, const KraussParams& p) {
    if (ctx.gap == kInfiniteGap) return kInfiniteGap;
    const double b = ctx.leader_b.value_or(p.b);
    const double v_safe = ctx.v_leader + (ctx.gap - ctx.v_leader * p.tau) /
                                             ((ctx.v_leader + ctx.v) / (2.0 * b) + p.tau);
    return std::max(0.0, v_safe);
}

/// Krauss speed update. eta is the uniform [0,1] dawdle draw; with
/// epsilon = 0 the update is deterministic and eta is ignored.
inline double krauss_step(const FollowerContext& ctx, const KraussParams& p, double dt,
                          double eta = 0.0) {
    if (!(dt > 0)) throw std::invalid_argument("krauss_step: dt must be > 0");
    const double v_des = std::min({p.F_v * ctx.v_limit, ctx.v + p.a_max * dt,
                                   krauss_safe_speed(ctx, p)});
    return std::max(0.0, v_des - p.epsilon * p.a_max * eta * dt);
}

// ---------------------------------------------------------------------------
// engine-facing dispatch

struct ControlOutput {
    double a = 0.0;
    bool emergency = false;  ///< command hit the -kEmergencyDecel floor
    DriverState state;
};

/// One control decision. Recomputes the acceleration only when an action
/// step is due (every t_AP seconds); in between the previous command is
/// held. EIDM perception and startup timers advance every call.
inline ControlOutput follower_control(const ParameterSet& ps, const FollowerContext& ctx,
                                      DriverState st, double dt, double krauss_eta = 0.0) {
    const bool due = ctx.t - st.last_action_time >= ps.action_step() - kTimeEps;
    double a = st.held_acceleration;
    switch (ps.kind) {
        case ModelKind::krauss:
            // the safe-speed bound may brake arbitrarily hard; only the
            // desired-measures models carry the emergency floor
            if (due) a = (krauss_step(ctx, ps.krauss(), dt, krauss_eta) - ctx.v) / dt;
            break;
        case ModelKind::idm:
            if (due) a = idm_acceleration(ctx, ps.idm());
            break;
        case ModelKind::iidm:
            if (due) a = iidm_acceleration(ctx, ps.idm());
            break;
        case ModelKind::eidm: {
            auto [ae, st2] = eidm_acceleration(ctx, st, ps.eidm(), dt);
            st = st2;
            if (due) a = ae;
            break;
        }
    }
    if (due) {
        st.last_action_time = ctx.t;
        st.held_acceleration = a;
    }
    return {a, a <= -kEmergencyDecel + kTimeEps, st};
}

}  // namespace carcal

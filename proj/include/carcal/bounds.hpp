#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "carcal/models.hpp"

namespace carcal {

struct ParamRange {
    std::string name;
    double lb = 0.0;
    double ub = 1.0;
};

/// Box constraints over a named parameter subset of one model kind. The
/// ranges define the optimization vector layout; sched_speeds carries the
/// fixed breakpoint speeds when a_max is calibrated as a schedule.
struct ParameterBounds {
    ModelKind kind = ModelKind::eidm;
    std::vector<double> sched_speeds;  ///< empty = scalar a_max
    std::vector<ParamRange> ranges;

    std::size_t dim() const { return ranges.size(); }

    void check() const {
        if (ranges.empty()) throw std::invalid_argument("bounds: empty parameter list");
        for (const auto& r : ranges)
            if (!(r.lb < r.ub))
                throw std::invalid_argument("bounds: LB must be < UB for " + r.name);
    }

    std::vector<double> lower() const {
        std::vector<double> v;
        for (const auto& r : ranges) v.push_back(r.lb);
        return v;
    }
    std::vector<double> upper() const {
        std::vector<double> v;
        for (const auto& r : ranges) v.push_back(r.ub);
        return v;
    }
    std::vector<double> midpoint() const {
        std::vector<double> v;
        for (const auto& r : ranges) v.push_back(0.5 * (r.lb + r.ub));
        return v;
    }
    std::vector<double> clamp(std::vector<double> v) const {
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = std::min(ranges[i].ub, std::max(ranges[i].lb, v[i]));
        return v;
    }
};

namespace detail {

inline double* field_by_name(ParameterSet& ps, const std::string& name) {
    switch (ps.kind) {
        case ModelKind::krauss: {
            auto& k = std::get<KraussParams>(ps.values);
            if (name == "a_max") return &k.a_max;
            if (name == "b") return &k.b;
            if (name == "tau" || name == "T") return &k.tau;
            if (name == "F_v") return &k.F_v;
            if (name == "t_AP") return &k.t_AP;
            if (name == "epsilon") return &k.epsilon;
            break;
        }
        case ModelKind::idm:
        case ModelKind::iidm: {
            auto& p = std::get<IdmParams>(ps.values);
            if (name == "a_max") return &p.a_max;
            if (name == "b") return &p.b;
            if (name == "T") return &p.T;
            if (name == "delta") return &p.delta;
            if (name == "F_v") return &p.F_v;
            if (name == "s0") return &p.s0;
            if (name == "t_AP") return &p.t_AP;
            break;
        }
        case ModelKind::eidm: {
            auto& e = std::get<EidmParams>(ps.values);
            if (name == "a_max") return &e.base.a_max;
            if (name == "b") return &e.base.b;
            if (name == "T") return &e.base.T;
            if (name == "delta") return &e.base.delta;
            if (name == "F_v") return &e.base.F_v;
            if (name == "s0") return &e.base.s0;
            if (name == "t_AP") return &e.base.t_AP;
            if (name == "t_reac") return &e.t_reac;
            if (name == "t_start") return &e.t_start;
            if (name == "M_bg") return &e.M_bg;
            if (name == "t_amax") return &e.t_amax;
            break;
        }
    }
    return nullptr;
}

inline bool is_sched_name(const std::string& name, std::size_t* index) {
    if (name.rfind("a_max_", 0) != 0) return false;
    *index = std::size_t(std::stoul(name.substr(6))) - 1;
    return true;
}

}  // namespace detail

/// Calibrated subsets: a_max, headway and speed factor for every model;
/// b and t_AP for Krauss and IDM; delta for IDM and EIDM; the EIDM adds its
/// four startup/reaction parameters. Remaining fields stay at defaults.
inline ParameterBounds default_bounds(ModelKind kind, double dt,
                                      std::vector<double> sched_speeds = {}) {
    ParameterBounds b;
    b.kind = kind;
    const ParamRange a_max{"a_max", 0.3, 4.0};
    const ParamRange desired_decel{"b", 0.5, 5.0};
    const ParamRange speed_factor{"F_v", 0.7, 1.4};
    const ParamRange action_step{"t_AP", dt, 2.0};
    switch (kind) {
        case ModelKind::krauss:
            b.ranges = {a_max, desired_decel, {"tau", 0.1, 3.0}, speed_factor, action_step};
            break;
        case ModelKind::idm:
        case ModelKind::iidm:
            b.ranges = {a_max,        desired_decel, {"T", 0.1, 3.0},
                        speed_factor, action_step,   {"delta", 1.0, 10.0}};
            break;
        case ModelKind::eidm:
            b.sched_speeds = std::move(sched_speeds);
            if (b.sched_speeds.empty()) {
                b.ranges.push_back(a_max);
            } else {
                for (std::size_t i = 0; i < b.sched_speeds.size(); ++i)
                    b.ranges.push_back({"a_max_" + std::to_string(i + 1), a_max.lb, a_max.ub});
            }
            b.ranges.push_back({"T", 0.1, 3.0});
            b.ranges.push_back(speed_factor);
            b.ranges.push_back({"delta", 1.0, 10.0});
            b.ranges.push_back({"t_reac", 0.0, 1.5});
            b.ranges.push_back({"t_start", 0.0, 2.5});
            b.ranges.push_back({"M_bg", 0.0, 1.0});
            b.ranges.push_back({"t_amax", 0.1, 8.0});
            break;
    }
    return b;
}

/// Wider set for sensitivity screening: every plausibly influential
/// parameter, including those the calibration later drops.
inline ParameterBounds screening_bounds(ModelKind kind, double dt) {
    ParameterBounds b = default_bounds(kind, dt);
    if (kind == ModelKind::eidm) {
        b.ranges.insert(b.ranges.begin() + 1, {"b", 0.5, 5.0});
        b.ranges.insert(b.ranges.begin() + 2, {"t_AP", dt, 2.0});
    }
    return b;
}

/// Builds a full ParameterSet from an optimization vector by range name,
/// starting from the model defaults for fields outside the subset.
inline ParameterSet apply_vector(const ParameterBounds& b, const std::vector<double>& v) {
    if (v.size() != b.dim()) throw std::invalid_argument("apply_vector: dimension mismatch");
    ParameterSet ps = ParameterSet::defaults(b.kind);

    AmaxSchedule sched;
    sched.breakpoints.resize(b.sched_speeds.size());
    for (std::size_t i = 0; i < b.sched_speeds.size(); ++i)
        sched.breakpoints[i].first = b.sched_speeds[i];

    for (std::size_t i = 0; i < b.ranges.size(); ++i) {
        const std::string& name = b.ranges[i].name;
        std::size_t sched_i = 0;
        if (detail::is_sched_name(name, &sched_i)) {
            sched.breakpoints.at(sched_i).second = v[i];
            continue;
        }
        double* field = detail::field_by_name(ps, name);
        if (!field) throw std::invalid_argument("apply_vector: unknown parameter " + name);
        *field = v[i];
    }
    if (!b.sched_speeds.empty()) {
        auto& e = std::get<EidmParams>(ps.values);
        e.base.a_max = sched.breakpoints.front().second;
        e.amax_schedule = std::move(sched);
    }
    return ps;
}

inline std::vector<double> extract_vector(const ParameterBounds& b, const ParameterSet& ps) {
    if (ps.kind != b.kind) throw std::invalid_argument("extract_vector: model kind mismatch");
    ParameterSet copy = ps;
    std::vector<double> v;
    for (const auto& r : b.ranges) {
        std::size_t sched_i = 0;
        if (detail::is_sched_name(r.name, &sched_i)) {
            const auto& e = std::get<EidmParams>(copy.values);
            if (e.amax_schedule && sched_i < e.amax_schedule->breakpoints.size())
                v.push_back(e.amax_schedule->breakpoints[sched_i].second);
            else
                v.push_back(e.base.a_max);
            continue;
        }
        const double* field = detail::field_by_name(copy, r.name);
        if (!field) throw std::invalid_argument("extract_vector: unknown parameter " + r.name);
        v.push_back(*field);
    }
    return v;
}

}  // namespace carcal

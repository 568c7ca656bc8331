#pragma once

#include <json.hpp>

#include "carcal/models.hpp"

namespace carcal {

/// JSON document shape:
///   {"model": "krauss"|"idm"|"iidm"|"eidm",
///    "params": {name: number, ...},
///    "amax_schedule": [[v, a], ...]}   // optional, EIDM only
inline nlohmann::json to_json(const ParameterSet& ps) {
    nlohmann::json j;
    j["model"] = to_string(ps.kind);
    nlohmann::json& p = j["params"];
    switch (ps.kind) {
        case ModelKind::krauss: {
            const auto& k = ps.krauss();
            p = {{"a_max", k.a_max}, {"b", k.b},       {"tau", k.tau},
                 {"F_v", k.F_v},     {"t_AP", k.t_AP}, {"epsilon", k.epsilon}};
            break;
        }
        case ModelKind::idm:
        case ModelKind::iidm: {
            const auto& i = ps.idm();
            p = {{"a_max", i.a_max}, {"b", i.b},   {"T", i.T},       {"delta", i.delta},
                 {"F_v", i.F_v},     {"s0", i.s0}, {"t_AP", i.t_AP}};
            break;
        }
        case ModelKind::eidm: {
            const auto& e = ps.eidm();
            const auto& i = e.base;
            p = {{"a_max", i.a_max},     {"b", i.b},
                 {"T", i.T},             {"delta", i.delta},
                 {"F_v", i.F_v},         {"s0", i.s0},
                 {"t_AP", i.t_AP},       {"t_reac", e.t_reac},
                 {"t_start", e.t_start}, {"M_bg", e.M_bg},
                 {"t_amax", e.t_amax}};
            if (e.amax_schedule) {
                nlohmann::json sched = nlohmann::json::array();
                for (const auto& [v, a] : e.amax_schedule->breakpoints)
                    sched.push_back({v, a});
                j["amax_schedule"] = sched;
            }
            break;
        }
    }
    return j;
}

inline ParameterSet parameter_set_from_json(const nlohmann::json& j) {
    ParameterSet ps = ParameterSet::defaults(model_kind_from_string(j.at("model")));
    const nlohmann::json& p = j.at("params");
    const auto get = [&p](const char* name, double fallback) {
        return p.contains(name) ? p.at(name).get<double>() : fallback;
    };
    switch (ps.kind) {
        case ModelKind::krauss: {
            KraussParams k;
            k.a_max = get("a_max", k.a_max);
            k.b = get("b", k.b);
            k.tau = get("tau", k.tau);
            k.F_v = get("F_v", k.F_v);
            k.t_AP = get("t_AP", k.t_AP);
            k.epsilon = get("epsilon", k.epsilon);
            ps.values = k;
            break;
        }
        case ModelKind::idm:
        case ModelKind::iidm: {
            IdmParams i;
            i.a_max = get("a_max", i.a_max);
            i.b = get("b", i.b);
            i.T = get("T", i.T);
            i.delta = get("delta", i.delta);
            i.F_v = get("F_v", i.F_v);
            i.s0 = get("s0", i.s0);
            i.t_AP = get("t_AP", i.t_AP);
            ps.values = i;
            break;
        }
        case ModelKind::eidm: {
            EidmParams e;
            e.base.a_max = get("a_max", e.base.a_max);
            e.base.b = get("b", e.base.b);
            e.base.T = get("T", e.base.T);
            e.base.delta = get("delta", e.base.delta);
            e.base.F_v = get("F_v", e.base.F_v);
            e.base.s0 = get("s0", e.base.s0);
            e.base.t_AP = get("t_AP", e.base.t_AP);
            e.t_reac = get("t_reac", e.t_reac);
            e.t_start = get("t_start", e.t_start);
            e.M_bg = get("M_bg", e.M_bg);
            e.t_amax = get("t_amax", e.t_amax);
            if (j.contains("amax_schedule")) {
                AmaxSchedule sched;
                for (const auto& row : j.at("amax_schedule"))
                    sched.breakpoints.emplace_back(row.at(0).get<double>(),
                                                   row.at(1).get<double>());
                e.amax_schedule = std::move(sched);
            }
            ps.values = e;
            break;
        }
    }
    validate(ps);
    return ps;
}

}  // namespace carcal

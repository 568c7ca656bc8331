#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "carcal/bounds.hpp"
#include "carcal/parallel.hpp"
#include "carcal/params_json.hpp"
#include "carcal/sim.hpp"
#include "carcal/trajectory.hpp"

namespace carcal {

inline double rmse(const std::vector<double>& gt, const std::vector<double>& sim) {
    if (gt.size() != sim.size() || gt.empty())
        throw std::invalid_argument("rmse: series length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const double d = sim[i] - gt[i];
        acc += d * d;
    }
    return std::sqrt(acc / double(gt.size()));
}

/// GoF of one candidate on one pair: spacing RMSE, or +inf when the lane
/// produced a collision (collisions are strictly dominated).
inline double pair_gof(const LeaderFollowerPair& pair, const ParameterSet& candidate,
                       double v_limit) {
    const auto lane = run_harness_lane(pair, candidate, v_limit);
    if (lane.collided) return std::numeric_limits<double>::infinity();
    return rmse(pair.spacing, lane.spacing);
}

/// Batched GoF over N isolated harness lanes. Lane k fails independently
/// (+inf sentinel); the result is bitwise equal to evaluating the candidates
/// one by one, for any worker count.
inline std::vector<double> evaluate_population(const LeaderFollowerPair& pair,
                                               const std::vector<ParameterSet>& candidates,
                                               double v_limit, unsigned jobs = 1) {
    std::vector<double> gof(candidates.size());
    parallel_for(candidates.size(), jobs,
                 [&](std::size_t k) { gof[k] = pair_gof(pair, candidates[k], v_limit); });
    return gof;
}

// ---------------------------------------------------------------------------
// optimizers

/// Evaluates a whole generation of parameter vectors at once.
using BatchObjective =
    std::function<std::vector<double>(const std::vector<std::vector<double>>&)>;

inline BatchObjective batch_from_scalar(std::function<double(const std::vector<double>&)> f) {
    return [f = std::move(f)](const std::vector<std::vector<double>>& xs) {
        std::vector<double> out(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
        return out;
    };
}

struct CalibrationResult {
    std::vector<double> best_vector;
    ParameterSet best_params;
    double gof = std::numeric_limits<double>::infinity();
    std::vector<double> trace;  ///< best GoF after init and per iteration
    std::size_t evaluations = 0;
    std::uint64_t seed = 0;
    double wall_time = 0.0;  ///< seconds; not serialized (volatile)
};

struct DeConfig {
    std::size_t pop = 200;
    std::size_t iters = 50;
    double F = 0.8;
    double CR = 0.9;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
};

struct GaConfig {
    std::size_t pop = 500;
    std::size_t iters = 1000;
    std::size_t tournament_k = 3;
    double blend_alpha = 0.5;
    double mutation_rate = -1.0;   ///< per-gene probability; <0 = 1/dim
    double mutation_sigma = 0.05;  ///< gaussian step as fraction of range
    std::size_t elitism = 1;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    std::vector<std::vector<double>> initial_population;  ///< optional override
};

namespace detail {

/// Fills best_params when the bounds map onto a model parameter set; raw
/// vector objectives (benchmarks) keep the defaults.
inline ParameterSet best_effort_params(const ParameterBounds& bounds,
                                       const std::vector<double>& v) {
    try {
        return apply_vector(bounds, v);
    } catch (const std::invalid_argument&) {
        return ParameterSet::defaults(bounds.kind);
    }
}

/// Folds x into [lb, ub] by reflection, preserving diversity near the box
/// faces better than clamping.
inline double reflect(double x, double lb, double ub) {
    const double w = ub - lb;
    if (x >= lb && x <= ub) return x;
    double y = std::fmod(x - lb, 2.0 * w);
    if (y < 0) y += 2.0 * w;
    return lb + (y <= w ? y : 2.0 * w - y);
}

inline double box_muller(std::mt19937_64& rng) {
    double u1 = canonical(rng());
    const double u2 = canonical(rng());
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace detail

/// DE/rand/1/bin with reflective bound repair. Population member 0 starts at
/// `initial` (the heuristic estimate) when provided. All random draws for a
/// generation happen before the batch evaluation, so results do not depend
/// on the worker count.
inline CalibrationResult differential_evolution(const BatchObjective& objective,
                                                const ParameterBounds& bounds,
                                                const DeConfig& cfg,
                                                const std::vector<double>* initial = nullptr) {
    bounds.check();
    if (cfg.pop < 4) throw std::invalid_argument("differential_evolution: population too small");
    const auto start = std::chrono::steady_clock::now();
    const std::size_t d = bounds.dim();
    const auto lb = bounds.lower();
    const auto ub = bounds.upper();
    std::mt19937_64 rng(cfg.seed);

    std::vector<std::vector<double>> pop(cfg.pop, std::vector<double>(d));
    for (std::size_t i = 0; i < cfg.pop; ++i)
        for (std::size_t j = 0; j < d; ++j)
            pop[i][j] = lb[j] + detail::canonical(rng()) * (ub[j] - lb[j]);
    if (initial) pop[0] = bounds.clamp(*initial);

    std::vector<double> cost = objective(pop);
    std::size_t evals = cfg.pop;

    CalibrationResult res;
    res.seed = cfg.seed;
    const auto best_of = [&]() {
        std::size_t bi = 0;
        for (std::size_t i = 1; i < cfg.pop; ++i)
            if (cost[i] < cost[bi]) bi = i;
        return bi;
    };
    res.trace.push_back(cost[best_of()]);

    std::vector<std::vector<double>> trial(cfg.pop, std::vector<double>(d));
    for (std::size_t it = 0; it < cfg.iters; ++it) {
        for (std::size_t i = 0; i < cfg.pop; ++i) {
            std::size_t r1, r2, r3;
            do r1 = rng() % cfg.pop; while (r1 == i);
            do r2 = rng() % cfg.pop; while (r2 == i || r2 == r1);
            do r3 = rng() % cfg.pop; while (r3 == i || r3 == r1 || r3 == r2);
            const std::size_t j_rand = rng() % d;
            for (std::size_t j = 0; j < d; ++j) {
                const bool cross = detail::canonical(rng()) < cfg.CR || j == j_rand;
                const double mut = pop[r1][j] + cfg.F * (pop[r2][j] - pop[r3][j]);
                trial[i][j] = cross ? detail::reflect(mut, lb[j], ub[j]) : pop[i][j];
            }
        }
        const std::vector<double> trial_cost = objective(trial);
        evals += cfg.pop;
        for (std::size_t i = 0; i < cfg.pop; ++i)
            if (trial_cost[i] <= cost[i]) {
                pop[i] = trial[i];
                cost[i] = trial_cost[i];
            }
        res.trace.push_back(cost[best_of()]);
    }

    const std::size_t bi = best_of();
    res.best_vector = pop[bi];
    res.best_params = detail::best_effort_params(bounds, pop[bi]);
    res.gof = cost[bi];
    res.evaluations = evals;
    res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

/// Real-valued GA: tournament selection, BLX-alpha blend crossover, gaussian
/// mutation, one elite carried over (the trace cannot increase).
inline CalibrationResult genetic_algorithm(const BatchObjective& objective,
                                           const ParameterBounds& bounds, const GaConfig& cfg,
                                           const std::vector<double>* initial = nullptr) {
    bounds.check();
    if (cfg.pop < 2) throw std::invalid_argument("genetic_algorithm: population too small");
    const auto start = std::chrono::steady_clock::now();
    const std::size_t d = bounds.dim();
    const auto lb = bounds.lower();
    const auto ub = bounds.upper();
    const double mut_rate = cfg.mutation_rate < 0 ? 1.0 / double(d) : cfg.mutation_rate;
    std::mt19937_64 rng(cfg.seed);

    std::vector<std::vector<double>> pop(cfg.pop, std::vector<double>(d));
    for (std::size_t i = 0; i < cfg.pop; ++i)
        for (std::size_t j = 0; j < d; ++j)
            pop[i][j] = lb[j] + detail::canonical(rng()) * (ub[j] - lb[j]);
    if (initial) pop[0] = bounds.clamp(*initial);
    for (std::size_t i = 0; i < std::min(cfg.initial_population.size(), cfg.pop); ++i)
        pop[i] = bounds.clamp(cfg.initial_population[i]);

    std::vector<double> cost = objective(pop);
    std::size_t evals = cfg.pop;

    CalibrationResult res;
    res.seed = cfg.seed;
    const auto best_of = [&]() {
        std::size_t bi = 0;
        for (std::size_t i = 1; i < cfg.pop; ++i)
            if (cost[i] < cost[bi]) bi = i;
        return bi;
    };
    res.trace.push_back(cost[best_of()]);

    const auto tournament = [&]() {
        std::size_t best = rng() % cfg.pop;
        for (std::size_t k = 1; k < cfg.tournament_k; ++k) {
            const std::size_t c = rng() % cfg.pop;
            if (cost[c] < cost[best]) best = c;
        }
        return best;
    };

    for (std::size_t it = 0; it < cfg.iters; ++it) {
        std::vector<std::vector<double>> next;
        next.reserve(cfg.pop);
        std::vector<std::size_t> by_cost(cfg.pop);
        for (std::size_t i = 0; i < cfg.pop; ++i) by_cost[i] = i;
        std::sort(by_cost.begin(), by_cost.end(),
                  [&](std::size_t a, std::size_t b) { return cost[a] < cost[b]; });
        for (std::size_t e = 0; e < std::min(cfg.elitism, cfg.pop); ++e)
            next.push_back(pop[by_cost[e]]);

        while (next.size() < cfg.pop) {
            const auto& p1 = pop[tournament()];
            const auto& p2 = pop[tournament()];
            std::vector<double> child(d);
            for (std::size_t j = 0; j < d; ++j) {
                const double lo = std::min(p1[j], p2[j]);
                const double hi = std::max(p1[j], p2[j]);
                const double span = hi - lo;
                const double u = detail::canonical(rng());
                double g = lo - cfg.blend_alpha * span +
                           u * (1.0 + 2.0 * cfg.blend_alpha) * span;
                if (detail::canonical(rng()) < mut_rate)
                    g += detail::box_muller(rng) * cfg.mutation_sigma * (ub[j] - lb[j]);
                child[j] = detail::reflect(g, lb[j], ub[j]);
            }
            next.push_back(std::move(child));
        }

        pop = std::move(next);
        cost = objective(pop);
        evals += cfg.pop;
        res.trace.push_back(std::min(res.trace.back(), cost[best_of()]));
    }

    // the elite of the final generation is the overall best
    const std::size_t bi = best_of();
    res.best_vector = pop[bi];
    res.best_params = detail::best_effort_params(bounds, pop[bi]);
    res.gof = cost[bi];
    res.evaluations = evals;
    res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

// ---------------------------------------------------------------------------
// pair-level calibration

struct AlgoConfig {
    enum class Kind { de, ga } kind = Kind::de;
    DeConfig de;
    GaConfig ga;
};

/// Wires estimate -> optimizer -> batched harness objective for one pair.
inline CalibrationResult calibrate_pair(const LeaderFollowerPair& pair,
                                        const ParameterBounds& bounds, const AlgoConfig& algo,
                                        double v_limit, unsigned jobs = 1) {
    const ParameterSet seed_params = estimate_initial_params(pair, bounds, v_limit);
    const std::vector<double> seed_vec = extract_vector(bounds, seed_params);

    const BatchObjective objective = [&](const std::vector<std::vector<double>>& xs) {
        std::vector<double> out(xs.size());
        parallel_for(xs.size(), jobs, [&](std::size_t i) {
            out[i] = pair_gof(pair, apply_vector(bounds, xs[i]), v_limit);
        });
        return out;
    };

    if (algo.kind == AlgoConfig::Kind::de) {
        DeConfig cfg = algo.de;
        cfg.jobs = jobs;
        return differential_evolution(objective, bounds, cfg, &seed_vec);
    }
    GaConfig cfg = algo.ga;
    cfg.jobs = jobs;
    return genetic_algorithm(objective, bounds, cfg, &seed_vec);
}

// ---------------------------------------------------------------------------
// optimizer comparison

struct OptimizerComparison {
    struct PairRow {
        double de_gof = 0.0;
        double ga_matched_gof = 0.0;
        double ga_extended_gof = 0.0;
    };
    std::vector<PairRow> per_pair;
    std::size_t de_wins_matched = 0;       ///< DE beats GA at equal iterations
    std::size_t ga_wins_extended = 0;      ///< long-budget GA beats the 50-iter DE
    double mean_rel_gap_matched = 0.0;     ///< mean (GA - DE)/DE at matched budget
    double mean_rel_gap_extended = 0.0;
};

struct CompareConfig {
    DeConfig de{200, 50};
    std::size_t ga_pop = 500;
    std::size_t ga_matched_iters = 50;
    std::size_t ga_extended_iters = 300;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
};

inline OptimizerComparison compare_optimizers(const std::vector<LeaderFollowerPair>& pairs,
                                              const ParameterBounds& bounds,
                                              const CompareConfig& cfg, double v_limit) {
    if (pairs.size() < 2)
        throw std::invalid_argument("compare_optimizers: need at least 2 pairs");
    OptimizerComparison cmp;
    double gap_m = 0.0, gap_e = 0.0;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        AlgoConfig de;
        de.kind = AlgoConfig::Kind::de;
        de.de = cfg.de;
        de.de.seed = cfg.seed + 7919 * p;

        AlgoConfig ga_m;
        ga_m.kind = AlgoConfig::Kind::ga;
        ga_m.ga.pop = cfg.ga_pop;
        ga_m.ga.iters = cfg.ga_matched_iters;
        ga_m.ga.seed = cfg.seed + 7919 * p;

        AlgoConfig ga_e = ga_m;
        ga_e.ga.iters = cfg.ga_extended_iters;

        OptimizerComparison::PairRow row;
        row.de_gof = calibrate_pair(pairs[p], bounds, de, v_limit, cfg.jobs).gof;
        row.ga_matched_gof = calibrate_pair(pairs[p], bounds, ga_m, v_limit, cfg.jobs).gof;
        row.ga_extended_gof = calibrate_pair(pairs[p], bounds, ga_e, v_limit, cfg.jobs).gof;
        cmp.de_wins_matched += row.de_gof < row.ga_matched_gof;
        cmp.ga_wins_extended += row.ga_extended_gof < row.de_gof;
        if (row.de_gof > 0) {
            gap_m += (row.ga_matched_gof - row.de_gof) / row.de_gof;
            gap_e += (row.ga_extended_gof - row.de_gof) / row.de_gof;
        }
        cmp.per_pair.push_back(row);
    }
    cmp.mean_rel_gap_matched = gap_m / double(pairs.size());
    cmp.mean_rel_gap_extended = gap_e / double(pairs.size());
    return cmp;
}

// ---------------------------------------------------------------------------
// serialization

inline nlohmann::json to_json(const CalibrationResult& r) {
    nlohmann::json j;
    j["best_params"] = to_json(r.best_params);
    j["best_vector"] = r.best_vector;
    j["gof"] = r.gof;
    j["trace"] = r.trace;
    j["evaluations"] = r.evaluations;
    j["seed"] = r.seed;
    // wall_time is intentionally not serialized: outputs must be bitwise
    // reproducible for a fixed seed
    return j;
}

inline nlohmann::json to_json(const ParameterBounds& b) {
    nlohmann::json j;
    j["model"] = to_string(b.kind);
    j["sched_speeds"] = b.sched_speeds;
    j["ranges"] = nlohmann::json::array();
    for (const auto& r : b.ranges)
        j["ranges"].push_back({{"name", r.name}, {"lb", r.lb}, {"ub", r.ub}});
    return j;
}

}  // namespace carcal

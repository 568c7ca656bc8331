#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "carcal/bounds.hpp"
#include "carcal/parallel.hpp"
#include "carcal/sobol_table.hpp"

namespace carcal {

// ---------------------------------------------------------------------------
// Sobol' sequence (32-bit, Gray-code order, optional digital shift)

class SobolSequence {
  public:
    /// dims <= kSobolMaxDims. A nonzero scramble seed applies a random
    /// digital shift per dimension (deterministic for the seed).
    explicit SobolSequence(unsigned dims, std::uint64_t scramble_seed = 0)
        : dims_(dims), x_(dims, 0), shift_(dims, 0) {
        if (dims == 0 || dims > unsigned(detail::kSobolMaxDims))
            throw std::invalid_argument("SobolSequence: unsupported dimension count");
        v_.resize(dims);
        for (unsigned j = 0; j < dims; ++j) v_[j] = direction_numbers(j);
        if (scramble_seed != 0) {
            std::mt19937_64 rng(scramble_seed);
            for (unsigned j = 0; j < dims; ++j)
                shift_[j] = std::uint32_t(rng() >> 32);
        }
    }

    /// Point with index n+1 in Gray-code order (the all-zero point 0 is
    /// skipped). Coordinates lie in [0, 1).
    std::vector<double> next() {
        ++index_;
        const unsigned bit = unsigned(std::countr_zero(index_));
        std::vector<double> p(dims_);
        for (unsigned j = 0; j < dims_; ++j) {
            x_[j] ^= v_[j][bit];
            p[j] = double(x_[j] ^ shift_[j]) * 0x1.0p-32;
        }
        return p;
    }

  private:
    static std::array<std::uint32_t, 32> direction_numbers(unsigned j) {
        std::array<std::uint32_t, 32> v{};
        std::array<std::uint32_t, 32> m{};
        if (j == 0) {
            for (unsigned k = 0; k < 32; ++k) v[k] = 1u << (31 - k);
            return v;
        }
        const std::uint32_t poly = detail::kSobolPoly[j];
        const unsigned s = unsigned(std::bit_width(poly)) - 1;
        for (unsigned k = 0; k < s; ++k) m[k] = detail::kSobolMinit[j][k];
        for (unsigned k = s; k < 32; ++k) {
            std::uint32_t mk = m[k - s] ^ (m[k - s] << s);
            for (unsigned i = 1; i < s; ++i)
                if ((poly >> (s - i)) & 1u) mk ^= m[k - i] << i;
            m[k] = mk;
        }
        for (unsigned k = 0; k < 32; ++k) v[k] = m[k] << (31 - k);
        return v;
    }

    unsigned dims_;
    std::uint64_t index_ = 0;
    std::vector<std::array<std::uint32_t, 32>> v_;
    std::vector<std::uint32_t> x_;
    std::vector<std::uint32_t> shift_;
};

// ---------------------------------------------------------------------------
// variance-based (Sobol/Saltelli) total-order indices

struct SobolResult {
    std::vector<double> total_order;
    bool zero_variance = false;
    std::size_t evaluations = 0;
    std::size_t base_samples = 0;
};

/// Saltelli A/B/AB_i design with the Jansen total-order estimator:
///   S_Ti = (1/2n) sum_j (f(A_j) - f(AB_i,j))^2 / Var(f).
/// n must be a power of two. Cost is exactly n*(d+2) evaluations.
inline SobolResult sobol_total_order(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<ParamRange>& ranges, std::size_t n,
                                     std::uint64_t seed = 1, unsigned jobs = 1) {
    const std::size_t d = ranges.size();
    if (d == 0) throw std::invalid_argument("sobol_total_order: no parameters");
    if (n < 2 || (n & (n - 1)) != 0)
        throw std::invalid_argument("sobol_total_order: base sample count must be a power of 2");

    SobolSequence seq(unsigned(2 * d), seed);
    std::vector<std::vector<double>> A(n, std::vector<double>(d));
    std::vector<std::vector<double>> B(n, std::vector<double>(d));
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = seq.next();
        for (std::size_t j = 0; j < d; ++j) {
            A[r][j] = ranges[j].lb + row[j] * (ranges[j].ub - ranges[j].lb);
            B[r][j] = ranges[j].lb + row[d + j] * (ranges[j].ub - ranges[j].lb);
        }
    }

    // flat task list: fA (n), fB (n), fAB_i (n per parameter)
    const std::size_t total = n * (d + 2);
    std::vector<double> y(total);
    parallel_for(total, jobs, [&](std::size_t k) {
        if (k < n) {
            y[k] = f(A[k]);
        } else if (k < 2 * n) {
            y[k] = f(B[k - n]);
        } else {
            const std::size_t i = (k - 2 * n) / n;  // parameter index
            const std::size_t r = (k - 2 * n) % n;
            std::vector<double> x = A[r];
            x[i] = B[r][i];
            y[k] = f(x);
        }
    });

    double mean = 0.0;
    for (std::size_t k = 0; k < 2 * n; ++k) mean += y[k];
    mean /= double(2 * n);
    double var = 0.0;
    for (std::size_t k = 0; k < 2 * n; ++k) var += (y[k] - mean) * (y[k] - mean);
    var /= double(2 * n);

    SobolResult res;
    res.evaluations = total;
    res.base_samples = n;
    res.total_order.assign(d, 0.0);
    if (var <= 1e-300) {
        res.zero_variance = true;
        return res;
    }
    for (std::size_t i = 0; i < d; ++i) {
        double acc = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double diff = y[r] - y[2 * n + i * n + r];
            acc += diff * diff;
        }
        res.total_order[i] = acc / (2.0 * double(n)) / var;
    }
    return res;
}

// ---------------------------------------------------------------------------
// one-at-a-time screening

struct OatResult {
    std::vector<double> index;  ///< normalized GoF swing per parameter
    std::size_t evaluations = 0;
};

/// Sweeps each parameter over its range with the others held at the
/// baseline; index = (max - min) / baseline objective value. The index is a
/// ratio, so rescaling the objective does not change it.
inline OatResult oat_sensitivity(const std::function<double(const std::vector<double>&)>& f,
                                 const std::vector<ParamRange>& ranges,
                                 const std::vector<double>& baseline, std::size_t grid_n = 17,
                                 unsigned jobs = 1) {
    const std::size_t d = ranges.size();
    if (baseline.size() != d) throw std::invalid_argument("oat_sensitivity: baseline size");
    if (grid_n < 2) throw std::invalid_argument("oat_sensitivity: grid too small");

    const double f0 = f(baseline);
    const double denom = std::max(std::abs(f0), 1e-12);

    OatResult res;
    res.index.assign(d, 0.0);
    res.evaluations = 1 + d * grid_n;
    std::vector<double> lo(d), hi(d);
    parallel_for(d, jobs, [&](std::size_t i) {
        double fmin = std::numeric_limits<double>::infinity();
        double fmax = -std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < grid_n; ++g) {
            std::vector<double> x = baseline;
            x[i] = ranges[i].lb +
                   double(g) / double(grid_n - 1) * (ranges[i].ub - ranges[i].lb);
            const double v = f(x);
            fmin = std::min(fmin, v);
            fmax = std::max(fmax, v);
        }
        lo[i] = fmin;
        hi[i] = fmax;
    });
    for (std::size_t i = 0; i < d; ++i) res.index[i] = (hi[i] - lo[i]) / denom;
    return res;
}

// ---------------------------------------------------------------------------
// report

struct SensitivityReport {
    struct Row {
        std::string parameter;
        double oat_index = 0.0;
        double sobol_total = 0.0;
    };
    std::vector<Row> rows;
    std::size_t oat_evaluations = 0;
    std::size_t sobol_evaluations = 0;
    std::size_t sobol_base_samples = 0;
    bool zero_variance = false;
    std::vector<ParamRange> ranges;
};

/// Parameters whose total-order index clears the threshold, most influential
/// first. This is the calibrated-subset recommendation.
inline std::vector<std::string> rank_parameters(const SensitivityReport& report,
                                                double threshold) {
    std::vector<const SensitivityReport::Row*> rows;
    for (const auto& r : report.rows)
        if (r.sobol_total >= threshold) rows.push_back(&r);
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto* a, const auto* b) { return a->sobol_total > b->sobol_total; });
    std::vector<std::string> out;
    for (const auto* r : rows) out.push_back(r->parameter);
    return out;
}

inline nlohmann::json to_json(const SensitivityReport& rep) {
    nlohmann::json j;
    j["parameters"] = nlohmann::json::array();
    for (const auto& r : rep.rows)
        j["parameters"].push_back({{"parameter", r.parameter},
                                   {"oat_index", r.oat_index},
                                   {"sobol_total", r.sobol_total}});
    j["oat_evaluations"] = rep.oat_evaluations;
    j["sobol_evaluations"] = rep.sobol_evaluations;
    j["sobol_base_samples"] = rep.sobol_base_samples;
    j["zero_variance"] = rep.zero_variance;
    j["ranges"] = nlohmann::json::array();
    for (const auto& r : rep.ranges)
        j["ranges"].push_back({{"name", r.name}, {"lb", r.lb}, {"ub", r.ub}});
    return j;
}

inline std::string to_csv(const SensitivityReport& rep) {
    std::string s = "parameter,oat_index,sobol_total\n";
    for (const auto& r : rep.rows) {
        s += r.parameter;
        s += ',';
        s += std::to_string(r.oat_index);
        s += ',';
        s += std::to_string(r.sobol_total);
        s += '\n';
    }
    return s;
}

// ---------------------------------------------------------------------------
// reference functions for estimator self-tests

/// Ishigami function on [-pi, pi]^3; the classic variance-based SA benchmark.
inline double ishigami(const std::vector<double>& x, double a = 7.0, double b = 0.1) {
    return std::sin(x[0]) + a * std::sin(x[1]) * std::sin(x[1]) +
           b * x[2] * x[2] * x[2] * x[2] * std::sin(x[0]);
}

/// Analytic total-order indices of the Ishigami function.
inline std::array<double, 3> ishigami_total_order(double a = 7.0, double b = 0.1) {
    const double pi4 = std::pow(3.14159265358979323846, 4);
    const double pi8 = pi4 * pi4;
    const double V = a * a / 8.0 + b * pi4 / 5.0 + b * b * pi8 / 18.0 + 0.5;
    const double V1 = b * pi4 / 5.0 + b * b * pi8 / 50.0 + 0.5;
    const double V2 = a * a / 8.0;
    const double V13 = b * b * pi8 * (1.0 / 18.0 - 1.0 / 50.0);
    return {(V1 + V13) / V, V2 / V, V13 / V};
}

}  // namespace carcal

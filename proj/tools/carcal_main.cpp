// carcal: calibrate car-following models against leader-follower trajectory
// data and study the calibrated populations in microscopic traffic scenarios.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "carcal/analysis.hpp"
#include "carcal/bounds.hpp"
#include "carcal/calibration.hpp"
#include "carcal/manifest.hpp"
#include "carcal/models.hpp"
#include "carcal/params_json.hpp"
#include "carcal/sensitivity.hpp"
#include "carcal/sim.hpp"
#include "carcal/trajectory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

unsigned default_jobs() {
    if (const char* env = std::getenv("CARCAL_JOBS")) {
        const int n = std::atoi(env);
        if (n > 0) return unsigned(n);
    }
    return 1;
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

carcal::ModelKind parse_model_flag(const std::string& model, bool* scheduled) {
    *scheduled = model == "eidm_sched";
    return *scheduled ? carcal::ModelKind::eidm : carcal::model_kind_from_string(model);
}

std::vector<carcal::ParameterSet> load_fleet(const fs::path& path) {
    const json doc = json::parse(carcal::read_file(path));
    std::vector<carcal::ParameterSet> fleet;
    if (doc.is_array()) {
        for (const auto& item : doc) fleet.push_back(carcal::parameter_set_from_json(item));
    } else if (doc.contains("results")) {
        for (const auto& r : doc.at("results"))
            fleet.push_back(carcal::parameter_set_from_json(r.at("best_params")));
    } else if (doc.contains("fleet")) {
        for (const auto& item : doc.at("fleet"))
            fleet.push_back(carcal::parameter_set_from_json(item));
    } else {
        fleet.push_back(carcal::parameter_set_from_json(doc));
    }
    if (fleet.empty()) throw std::runtime_error("no parameter sets found in " + path.string());
    return fleet;
}

json scenario_config_json(const carcal::ScenarioConfig& cfg) {
    json j;
    j["scenario"] = carcal::to_string(cfg.kind);
    j["dt"] = cfg.dt;
    j["duration"] = cfg.duration;
    j["lane_length"] = cfg.lane_length;
    j["speed_limit"] = cfg.speed_limit;
    j["insertion_interval"] = cfg.insertion_interval;
    j["closures"] = json::array();
    for (const auto& c : cfg.closures) j["closures"].push_back({c.start, c.duration, c.position});
    if (cfg.signal)
        j["signal"] = {{"cycle", cfg.signal->cycle},
                       {"green", cfg.signal->green},
                       {"offset", cfg.signal->offset}};
    else
        j["signal"] = nullptr;
    j["stop_line"] = cfg.stop_line;
    j["detector_zones"] = json::array();
    for (const auto& z : cfg.detector_zones) j["detector_zones"].push_back({z.start, z.length});
    j["detector_window"] = cfg.detector_window;
    j["record_interval"] = cfg.record_interval;
    j["vehicle_length"] = cfg.vehicle_length;
    j["fleet_size"] = cfg.fleet.size();
    return j;
}

std::vector<double> green_onsets_from(const json& signal, double duration) {
    std::vector<double> onsets;
    if (signal.is_null()) return onsets;
    const double cycle = signal.at("cycle");
    const double green = signal.at("green");
    const double offset = signal.at("offset");
    (void)green;
    for (double t = offset; t < duration; t += cycle) onsets.push_back(t);
    return onsets;
}

// ---------------------------------------------------------------------------

int cmd_select(const std::string& input, const std::vector<std::string>& lanes,
               const std::vector<std::string>& stop_line_specs, double dt,
               const std::string& out_dir) {
    Timer timer;
    carcal::SelectionConfig cfg;
    cfg.lanes = lanes;
    cfg.dt = dt;
    for (const auto& spec : stop_line_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--stop-line entries must look like lane=x");
        cfg.stop_line[spec.substr(0, eq)] = std::strtod(spec.c_str() + eq + 1, nullptr);
    }

    const auto loaded = carcal::load_dataset(input);
    auto result = carcal::select_candidates(loaded.tracks, cfg);

    json out = carcal::to_json(result);
    out["load_rejected"] = json::array();
    for (const auto& r : loaded.rejected)
        out["load_rejected"].push_back({{"track_id", r.track_id}, {"reason", r.reason}});

    fs::create_directories(out_dir);
    carcal::write_file(fs::path(out_dir) / "pairs.json", out.dump(2) + "\n");

    carcal::RunManifest manifest;
    manifest.subcommand = "select";
    manifest.config = {{"input", input}, {"lanes", lanes}, {"dt", dt}};
    manifest.add_input(input);
    manifest.wall_time = timer.seconds();
    carcal::write_manifest(out_dir, manifest);

    std::cout << "selected " << result.pairs.size() << " of " << result.candidates
              << " candidate pairs (" << result.rejected.size() << " rejected)\n";
    return kExitOk;
}

int cmd_calibrate(const std::string& pairs_file, const std::string& model,
                  const std::vector<double>& sched_breakpoints, const std::string& algo,
                  std::size_t pop, std::size_t iters, double dt, std::uint64_t seed,
                  double speed_limit, unsigned jobs, const std::string& out_dir) {
    Timer timer;
    bool scheduled = false;
    const carcal::ModelKind kind = parse_model_flag(model, &scheduled);
    if (scheduled && sched_breakpoints.empty())
        throw CLI::ValidationError("--model eidm_sched needs --schedule-breakpoints");

    const auto pairs = carcal::pairs_from_json(json::parse(carcal::read_file(pairs_file)));
    if (pairs.empty()) {
        std::cerr << "no pairs in " << pairs_file << "\n";
        return kExitRuntime;
    }

    const carcal::ParameterBounds bounds = carcal::default_bounds(
        kind, dt, scheduled ? sched_breakpoints : std::vector<double>{});

    carcal::AlgoConfig algo_cfg;
    if (algo == "de") {
        algo_cfg.kind = carcal::AlgoConfig::Kind::de;
        algo_cfg.de.pop = pop;
        algo_cfg.de.iters = iters;
    } else if (algo == "ga") {
        algo_cfg.kind = carcal::AlgoConfig::Kind::ga;
        algo_cfg.ga.pop = pop;
        algo_cfg.ga.iters = iters;
    } else {
        throw CLI::ValidationError("--algo must be de or ga");
    }

    json results = json::array();
    std::vector<double> gofs;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        if (algo_cfg.kind == carcal::AlgoConfig::Kind::de)
            algo_cfg.de.seed = seed + 7919 * p;
        else
            algo_cfg.ga.seed = seed + 7919 * p;
        auto res = carcal::calibrate_pair(pairs[p], bounds, algo_cfg, speed_limit, jobs);
        json row = carcal::to_json(res);
        row["pair_index"] = p;
        row["leader_id"] = pairs[p].leader.vehicle_id;
        row["follower_id"] = pairs[p].follower.vehicle_id;
        results.push_back(std::move(row));
        gofs.push_back(res.gof);
        std::cout << "pair " << p << " (" << pairs[p].follower.vehicle_id
                  << "): gof = " << res.gof << " m\n";
    }

    std::vector<double> sorted = gofs;
    std::sort(sorted.begin(), sorted.end());
    double mean = 0.0;
    for (double g : gofs) mean += g;
    mean /= double(gofs.size());
    const double median = sorted[sorted.size() / 2];

    json doc;
    doc["metadata"] = {{"model", model},        {"algo", algo}, {"pop", pop},
                       {"iters", iters},        {"dt", dt},     {"seed", seed},
                       {"speed_limit", speed_limit},
                       {"bounds", carcal::to_json(bounds)}};
    doc["results"] = std::move(results);
    doc["summary"] = {{"pairs", gofs.size()}, {"mean_gof", mean}, {"median_gof", median}};

    fs::create_directories(out_dir);
    carcal::write_file(fs::path(out_dir) / "results.json", doc.dump(2) + "\n");

    carcal::RunManifest manifest;
    manifest.subcommand = "calibrate";
    manifest.config = doc["metadata"];
    manifest.seed = seed;
    manifest.add_input(pairs_file);
    manifest.wall_time = timer.seconds();
    carcal::write_manifest(out_dir, manifest);

    std::cout << "mean gof " << mean << " m, median " << median << " m over " << gofs.size()
              << " pairs\n";
    return kExitOk;
}

int cmd_simulate(const std::string& scenario, const std::string& params_file,
                 const std::string& default_model, std::optional<double> duration,
                 std::uint64_t seed, double dt, std::optional<double> record_interval,
                 std::optional<double> insertion_interval, const std::string& out_dir) {
    Timer timer;
    carcal::ScenarioConfig cfg;
    if (scenario == "queue")
        cfg = carcal::queue_scenario();
    else if (scenario == "ring")
        cfg = carcal::ring_scenario();
    else if (scenario == "stopgo")
        cfg = carcal::stopgo_scenario();
    else
        throw CLI::ValidationError("unknown scenario: " + scenario);

    cfg.dt = dt;
    if (duration) cfg.duration = *duration;
    if (record_interval) cfg.record_interval = *record_interval;
    if (insertion_interval) cfg.insertion_interval = *insertion_interval;

    std::string params_source;
    if (!params_file.empty()) {
        cfg.fleet = load_fleet(params_file);
        params_source = params_file;
    } else if (!default_model.empty()) {
        bool scheduled = false;
        const auto kind = parse_model_flag(default_model, &scheduled);
        cfg.fleet = {carcal::ParameterSet::defaults(kind)};
        params_source = "defaults:" + default_model;
    } else {
        throw CLI::ValidationError("one of --params or --model is required");
    }

    auto log = carcal::run_scenario(cfg, seed);
    fs::create_directories(out_dir);
    carcal::write_log_csv(log, out_dir);

    carcal::RunManifest manifest;
    manifest.subcommand = "simulate";
    manifest.config = scenario_config_json(cfg);
    manifest.config["params_source"] = params_source;
    manifest.seed = seed;
    if (!params_file.empty()) manifest.add_input(params_file);
    manifest.wall_time = timer.seconds();
    carcal::write_manifest(out_dir, manifest);

    std::cout << "simulated " << cfg.duration << " s: " << log.records.size() << " records, "
              << log.count_events(carcal::EventKind::collision) << " collisions, "
              << log.count_events(carcal::EventKind::emergency_stop) << " emergency stops\n";
    return kExitOk;
}

int cmd_analyze(const std::string& log_dir, const std::string& report,
                const std::string& out_dir) {
    Timer timer;
    if (report != "fd" && report != "wave" && report != "queue" && report != "metrics")
        throw CLI::ValidationError("unknown report: " + report);
    const fs::path in_dir(log_dir);
    json sim_manifest;
    if (fs::exists(in_dir / "manifest.json"))
        sim_manifest = json::parse(carcal::read_file(in_dir / "manifest.json"));
    const json sim_cfg = sim_manifest.value("config", json::object());

    const auto log = carcal::read_log_csv(in_dir);
    fs::create_directories(out_dir);

    json summary;
    if (report == "fd") {
        const auto points = carcal::fundamental_diagram(log);
        carcal::write_file(fs::path(out_dir) / "fd_points.csv", carcal::fd_points_csv(points));
        if (!sim_cfg.value("closures", json::array()).empty()) {
            const double breakdown_t = sim_cfg["closures"][0][0];
            const double limit_kmh = sim_cfg.value("speed_limit", 13.89) * 3.6;
            const auto drop = carcal::capacity_drop(points, breakdown_t, limit_kmh);
            summary = {{"points", points.size()},
                       {"q_free_max", drop.q_free_max},
                       {"q_discharge", drop.q_discharge},
                       {"capacity_drop", drop.drop},
                       {"valid", drop.valid}};
            carcal::write_file(fs::path(out_dir) / "capacity_drop.json", summary.dump(2) + "\n");
        }
    } else if (report == "wave") {
        double reopen_t = 0.0;
        if (!sim_cfg.value("closures", json::array()).empty()) {
            reopen_t = double(sim_cfg["closures"][0][0]) + double(sim_cfg["closures"][0][1]);
        }
        const auto est = carcal::wave_speed(log, reopen_t);
        carcal::write_file(fs::path(out_dir) / "wave.csv", carcal::wave_csv(est));
        carcal::write_file(fs::path(out_dir) / "wave_estimate.json",
                           carcal::to_json(est).dump(2) + "\n");
        summary = carcal::to_json(est);
    } else if (report == "queue") {
        const double stop_line = sim_cfg.value("stop_line", 300.0);
        const auto onsets = green_onsets_from(sim_cfg.value("signal", json()),
                                              sim_cfg.value("duration", 2600.0));
        const auto stats = carcal::queue_discharge_stats(log, stop_line, onsets);
        carcal::write_file(fs::path(out_dir) / "queue_stats.csv",
                           carcal::queue_stats_csv(stats));
        carcal::write_file(fs::path(out_dir) / "queue_accel.csv",
                           carcal::queue_accel_csv(stats));
        summary = {{"crossings", stats.crossings.size()}, {"positions", stats.curves.size()}};
    } else if (report == "metrics") {
        const double stop_line = sim_cfg.value("stop_line", 300.0);
        const auto onsets = green_onsets_from(sim_cfg.value("signal", json()),
                                              sim_cfg.value("duration", 0.0));
        const auto m = carcal::scenario_metrics(log, stop_line, onsets);
        carcal::write_file(fs::path(out_dir) / "metrics.json",
                           carcal::to_json(m).dump(2) + "\n");
        summary = carcal::to_json(m);
    } else {
        throw CLI::ValidationError("unknown report: " + report);
    }

    carcal::RunManifest manifest;
    manifest.subcommand = "analyze";
    manifest.config = {{"log_dir", log_dir}, {"report", report}};
    if (fs::exists(in_dir / "log.csv")) manifest.add_input(in_dir / "log.csv");
    manifest.wall_time = timer.seconds();
    carcal::write_manifest(out_dir, manifest);

    std::cout << "analyze " << report << ": " << summary.dump() << "\n";
    return kExitOk;
}

int cmd_sensitivity(const std::string& pairs_file, const std::string& model,
                    const std::string& method, std::size_t samples, std::uint64_t seed,
                    double dt, double speed_limit, bool exclude_amax, bool self_test,
                    unsigned jobs, const std::string& out_dir) {
    Timer timer;

    if (self_test) {
        // estimator check against analytic benchmarks
        const std::vector<carcal::ParamRange> ranges = {{"x1", -3.14159265358979323846, 3.14159265358979323846},
                                                        {"x2", -3.14159265358979323846, 3.14159265358979323846},
                                                        {"x3", -3.14159265358979323846, 3.14159265358979323846}};
        const auto res = carcal::sobol_total_order(
            [](const std::vector<double>& x) { return carcal::ishigami(x); }, ranges, 4096, seed,
            jobs);
        const auto ref = carcal::ishigami_total_order();
        double worst = 0.0;
        for (int i = 0; i < 3; ++i)
            worst = std::max(worst, std::abs(res.total_order[i] - ref[i]));
        std::cout << "ishigami S_T = [" << res.total_order[0] << ", " << res.total_order[1]
                  << ", " << res.total_order[2] << "], analytic = [" << ref[0] << ", " << ref[1]
                  << ", " << ref[2] << "], max |err| = " << worst << "\n";
        return worst <= 0.05 ? kExitOk : kExitRuntime;
    }

    bool scheduled = false;
    const carcal::ModelKind kind = parse_model_flag(model, &scheduled);
    const auto pairs = carcal::pairs_from_json(json::parse(carcal::read_file(pairs_file)));
    if (pairs.empty()) {
        std::cerr << "no pairs in " << pairs_file << "\n";
        return kExitRuntime;
    }

    carcal::ParameterBounds bounds = carcal::screening_bounds(kind, dt);
    std::vector<carcal::ParamRange> ranges;
    std::vector<std::size_t> range_to_vec;
    for (std::size_t i = 0; i < bounds.ranges.size(); ++i) {
        if (exclude_amax && bounds.ranges[i].name.rfind("a_max", 0) == 0) continue;
        ranges.push_back(bounds.ranges[i]);
        range_to_vec.push_back(i);
    }

    const std::vector<double> baseline = bounds.midpoint();
    // collisions enter as a large finite penalty so the output variance and
    // the OAT ratios stay defined
    constexpr double kCollisionPenalty = 100.0;
    const auto objective = [&](const std::vector<double>& sweep) {
        std::vector<double> full = baseline;
        for (std::size_t i = 0; i < sweep.size(); ++i) full[range_to_vec[i]] = sweep[i];
        const auto ps = carcal::apply_vector(bounds, full);
        double acc = 0.0;
        for (const auto& pair : pairs)
            acc += std::min(carcal::pair_gof(pair, ps, speed_limit), kCollisionPenalty);
        return acc / double(pairs.size());
    };
    std::vector<double> sweep_baseline;
    for (std::size_t i : range_to_vec) sweep_baseline.push_back(baseline[i]);

    carcal::SensitivityReport report;
    report.ranges = ranges;
    for (const auto& r : ranges) report.rows.push_back({r.name, 0.0, 0.0});

    if (method == "oat" || method == "both") {
        const auto oat = carcal::oat_sensitivity(objective, ranges, sweep_baseline, 17, jobs);
        for (std::size_t i = 0; i < ranges.size(); ++i) report.rows[i].oat_index = oat.index[i];
        report.oat_evaluations = oat.evaluations;
    }
    if (method == "sobol" || method == "both") {
        std::size_t n = 1;
        while (n * 2 <= samples) n *= 2;
        if (n != samples)
            std::cerr << "warning: rounding --samples down to power of two: " << n << "\n";
        const auto sob = carcal::sobol_total_order(objective, ranges, n, seed, jobs);
        for (std::size_t i = 0; i < ranges.size(); ++i)
            report.rows[i].sobol_total = sob.total_order[i];
        report.sobol_evaluations = sob.evaluations;
        report.sobol_base_samples = sob.base_samples;
        report.zero_variance = sob.zero_variance;
    }
    if (method != "oat" && method != "sobol" && method != "both")
        throw CLI::ValidationError("--method must be oat, sobol or both");

    fs::create_directories(out_dir);
    carcal::write_file(fs::path(out_dir) / "sensitivity.json",
                       carcal::to_json(report).dump(2) + "\n");
    carcal::write_file(fs::path(out_dir) / "sensitivity.csv", carcal::to_csv(report));

    carcal::RunManifest manifest;
    manifest.subcommand = "sensitivity";
    manifest.config = {{"pairs", pairs_file}, {"model", model},   {"method", method},
                       {"samples", samples},  {"dt", dt},         {"exclude_amax", exclude_amax},
                       {"speed_limit", speed_limit}};
    manifest.seed = seed;
    manifest.add_input(pairs_file);
    manifest.wall_time = timer.seconds();
    carcal::write_manifest(out_dir, manifest);

    for (const auto& row : report.rows)
        std::cout << row.parameter << ": oat " << row.oat_index << ", sobol "
                  << row.sobol_total << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"car-following model calibration and scenario analysis"};
    app.require_subcommand(1);
    const unsigned jobs_default = default_jobs();

    // select
    std::string sel_input, sel_out;
    std::vector<std::string> sel_lanes, sel_stop_lines;
    double sel_dt = 0.04;
    auto* select = app.add_subcommand("select", "filter leader-follower calibration pairs");
    select->add_option("--input", sel_input, "trajectory CSV")->required();
    select->add_option("--lanes", sel_lanes, "lane ids to keep")->delimiter(',');
    select->add_option("--stop-line", sel_stop_lines, "per-lane stop line, lane=x")
        ->delimiter(',');
    select->add_option("--dt", sel_dt, "resampling step (s)");
    select->add_option("--out", sel_out, "output directory")->required();

    // calibrate
    std::string cal_pairs, cal_model = "eidm", cal_algo = "de", cal_out;
    std::vector<double> cal_sched;
    std::size_t cal_pop = 200, cal_iters = 50;
    double cal_dt = 0.04, cal_limit = 50.0 / 3.6;
    std::uint64_t cal_seed = 1;
    unsigned cal_jobs = jobs_default;
    auto* calibrate = app.add_subcommand("calibrate", "fit model parameters per pair");
    calibrate->add_option("--pairs", cal_pairs, "pairs.json from select")->required();
    calibrate->add_option("--model", cal_model, "krauss|idm|iidm|eidm|eidm_sched");
    calibrate->add_option("--schedule-breakpoints", cal_sched, "speeds for eidm_sched")
        ->delimiter(',');
    calibrate->add_option("--algo", cal_algo, "de|ga");
    calibrate->add_option("--pop", cal_pop, "population size");
    calibrate->add_option("--iters", cal_iters, "iterations");
    calibrate->add_option("--dt", cal_dt, "simulation step (s)");
    calibrate->add_option("--seed", cal_seed, "random seed");
    calibrate->add_option("--speed-limit", cal_limit, "legal speed limit (m/s)");
    calibrate->add_option("--jobs", cal_jobs, "parallel workers");
    calibrate->add_option("--out", cal_out, "output directory")->required();

    // simulate
    std::string sim_scenario, sim_params, sim_model, sim_out;
    std::optional<double> sim_duration, sim_record, sim_insert;
    double sim_dt = 0.04;
    std::uint64_t sim_seed = 1;
    auto* simulate = app.add_subcommand("simulate", "run a traffic scenario");
    simulate->add_option("--scenario", sim_scenario, "queue|ring|stopgo")->required();
    simulate->add_option("--params", sim_params, "results.json or parameter JSON");
    simulate->add_option("--model", sim_model, "use built-in defaults for this model");
    simulate->add_option("--duration", sim_duration, "seconds");
    simulate->add_option("--seed", sim_seed, "random seed");
    simulate->add_option("--dt", sim_dt, "simulation step (s)");
    simulate->add_option("--record-interval", sim_record, "seconds between records");
    simulate->add_option("--insertion-interval", sim_insert, "seconds between entries");
    simulate->add_option("--out", sim_out, "output directory")->required();

    // analyze
    std::string an_log, an_report, an_out;
    auto* analyze = app.add_subcommand("analyze", "post-process a simulation log");
    analyze->add_option("--log", an_log, "simulation output directory")->required();
    analyze->add_option("--report", an_report, "fd|wave|queue|metrics")->required();
    analyze->add_option("--out", an_out, "output directory")->required();

    // sensitivity
    std::string sen_pairs, sen_model = "eidm", sen_method = "sobol", sen_out;
    std::size_t sen_samples = 1024;
    std::uint64_t sen_seed = 1;
    double sen_dt = 0.04, sen_limit = 50.0 / 3.6;
    bool sen_exclude_amax = false, sen_self_test = false;
    unsigned sen_jobs = jobs_default;
    auto* sensitivity = app.add_subcommand("sensitivity", "parameter sensitivity analysis");
    sensitivity->add_option("--pairs", sen_pairs, "pairs.json from select");
    sensitivity->add_option("--model", sen_model, "krauss|idm|iidm|eidm");
    sensitivity->add_option("--method", sen_method, "oat|sobol|both");
    sensitivity->add_option("--samples", sen_samples, "sobol base sample count");
    sensitivity->add_option("--seed", sen_seed, "random seed");
    sensitivity->add_option("--dt", sen_dt, "simulation step (s)");
    sensitivity->add_option("--speed-limit", sen_limit, "legal speed limit (m/s)");
    sensitivity->add_flag("--exclude-amax", sen_exclude_amax,
                          "drop a_max from the analyzed set");
    sensitivity->add_flag("--self-test", sen_self_test,
                          "check the estimator against analytic benchmarks");
    sensitivity->add_option("--jobs", sen_jobs, "parallel workers");
    sensitivity->add_option("--out", sen_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (select->parsed())
            return cmd_select(sel_input, sel_lanes, sel_stop_lines, sel_dt, sel_out);
        if (calibrate->parsed()) {
            if (cal_pop < 4 && cal_algo == "de") {
                std::cerr << "population too small (need >= 4 for de)\n";
                return kExitUsage;
            }
            return cmd_calibrate(cal_pairs, cal_model, cal_sched, cal_algo, cal_pop, cal_iters,
                                 cal_dt, cal_seed, cal_limit, cal_jobs, cal_out);
        }
        if (simulate->parsed())
            return cmd_simulate(sim_scenario, sim_params, sim_model, sim_duration, sim_seed,
                                sim_dt, sim_record, sim_insert, sim_out);
        if (analyze->parsed()) return cmd_analyze(an_log, an_report, an_out);
        if (sensitivity->parsed()) {
            if (!sen_self_test && sen_pairs.empty()) {
                std::cerr << "--pairs is required unless --self-test is set\n";
                return kExitUsage;
            }
            if (!sen_self_test && sen_out.empty()) {
                std::cerr << "--out is required unless --self-test is set\n";
                return kExitUsage;
            }
            return cmd_sensitivity(sen_pairs, sen_model, sen_method, sen_samples, sen_seed,
                                   sen_dt, sen_limit, sen_exclude_amax, sen_self_test, sen_jobs,
                                   sen_out);
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

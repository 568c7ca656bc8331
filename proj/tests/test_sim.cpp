#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "carcal/calibration.hpp"
#include "carcal/sim.hpp"
#include "support/synthetic.hpp"

using namespace carcal;

namespace {

ParameterSet iidm_at_desired(double v0, double v_limit = 50.0 / 3.6) {
    ParameterSet ps = ParameterSet::defaults(ModelKind::iidm);
    IdmParams p = ps.idm();
    p.F_v = v0 / v_limit;
    ps.values = p;
    return ps;
}

ScenarioConfig bare_lane(double length = 1000.0) {
    ScenarioConfig cfg;
    cfg.kind = ScenarioKind::queue;
    cfg.signal.reset();
    cfg.lane_length = length;
    cfg.duration = 1.0;
    cfg.record_interval = cfg.dt;
    return cfg;
}

}  // namespace

TEST_CASE("step: single vehicle accelerates from rest on an empty road") {
    ScenarioConfig cfg = bare_lane();
    cfg.fleet = {ParameterSet::defaults(ModelKind::idm)};
    cfg.initial_vehicles = {{0.0, 0.0, 0}};
    Simulation sim(cfg, 1);
    sim.step();
    REQUIRE(sim.vehicles().size() == 1);
    CHECK(sim.vehicles()[0].v == Catch::Approx(2.6 * 0.04).margin(1e-12));
    CHECK(sim.vehicles()[0].x ==
          Catch::Approx(2.6 * 0.04 * 0.04).margin(1e-12));  // semi-implicit update
}

TEST_CASE("step: two vehicles at equilibrium spacing stay put") {
    const double v = 8.0;
    ScenarioConfig cfg = bare_lane();
    cfg.fleet = {iidm_at_desired(v)};
    const double gap = 2.0 + v * 1.0;  // s0 + v T
    cfg.initial_vehicles = {{100.0, v, 0}, {100.0 - 5.0 - gap, v, 0}};
    Simulation sim(cfg, 1);
    for (int k = 0; k < 25; ++k) sim.step();
    CHECK(sim.vehicles()[0].v == Catch::Approx(v).margin(1e-9));
    CHECK(sim.vehicles()[1].v == Catch::Approx(v).margin(1e-9));
}

TEST_CASE("step: forced overlap emits exactly one collision event") {
    ScenarioConfig cfg = bare_lane();
    cfg.fleet = {ParameterSet::defaults(ModelKind::iidm)};
    cfg.initial_vehicles = {{100.0, 0.0, 0}, {95.1, 0.0, 0}};  // gap = -0.1
    Simulation sim(cfg, 1);
    sim.step();
    CHECK(sim.log().count_events(EventKind::collision) == 1);
    sim.step();
    CHECK(sim.log().count_events(EventKind::collision) == 1);  // clamp holds
}

TEST_CASE("step: emergency stop event on the deceleration clamp") {
    ScenarioConfig cfg = bare_lane();
    ParameterSet idm = ParameterSet::defaults(ModelKind::idm);
    cfg.fleet = {idm};
    cfg.initial_vehicles = {{200.0, 0.0, 0}, {185.0, 13.0, 0}};  // closing fast
    Simulation sim(cfg, 1);
    for (int k = 0; k < 50; ++k) sim.step();
    CHECK(sim.log().count_events(EventKind::emergency_stop) >= 1);
}

TEST_CASE("replay_leader: interpolation and end-holding") {
    Trajectory traj;
    for (int i = 0; i < 3; ++i) {
        TrajectorySample s;
        s.t = double(i);
        s.driven = 10.0 + double(i) * 2.0;  // 10, 12, 14
        s.v = 2.0;
        traj.samples.push_back(s);
    }
    CHECK(replay_leader(traj, 1.0).first == 12.0);
    CHECK(replay_leader(traj, 0.5).first == Catch::Approx(11.0));
    CHECK(replay_leader(traj, -5.0).first == 10.0);  // parked before recording
    CHECK(replay_leader(traj, 99.0).first == 14.0);  // parked after
}

TEST_CASE("replay_leader: monotone input stays monotone") {
    std::mt19937_64 rng(3);
    Trajectory traj;
    double driven = 0.0;
    for (int i = 0; i < 50; ++i) {
        TrajectorySample s;
        s.t = double(i) * 0.1;
        driven += double(rng() % 100) / 50.0;
        s.driven = driven;
        traj.samples.push_back(s);
    }
    double prev = -1.0;
    for (double t = -0.5; t < 5.5; t += 0.013) {
        const double x = replay_leader(traj, t).first;
        CHECK(x >= prev - 1e-12);
        prev = x;
    }
}

TEST_CASE("harness: one lane per candidate, lanes fully isolated") {
    testing::SyntheticSpec spec;
    spec.window = 10.0;
    const auto truth = testing::random_eidm_truth;
    std::mt19937_64 rng(41);
    const auto pair = testing::make_pair_from_truth(truth(rng, false), spec);

    std::vector<ParameterSet> candidates;
    for (int i = 0; i < 5; ++i) candidates.push_back(testing::random_eidm_truth(rng, false));

    const auto base = evaluate_population(pair, candidates, spec.v_limit);
    REQUIRE(base.size() == 5);

    // perturbing lane 2 leaves every other lane's result bit-identical
    auto perturbed = candidates;
    EidmParams e = perturbed[2].eidm();
    e.base.T += 0.2;
    perturbed[2].values = e;
    const auto after = evaluate_population(pair, perturbed, spec.v_limit);
    for (std::size_t k = 0; k < 5; ++k) {
        if (k == 2)
            CHECK(after[k] != base[k]);
        else
            CHECK(after[k] == base[k]);
    }
}

TEST_CASE("harness: 200 candidates make 200 lanes") {
    testing::SyntheticSpec spec;
    spec.window = 5.0;
    const auto pair =
        testing::make_pair_from_truth(ParameterSet::defaults(ModelKind::eidm), spec);
    std::vector<ParameterSet> candidates(200, ParameterSet::defaults(ModelKind::eidm));
    const auto log = run_calibration_harness(pair, candidates, spec.v_limit);
    std::set<int> lanes;
    for (const auto& r : log.records) lanes.insert(r.lane_id);
    CHECK(lanes.size() == 200);

    CHECK_THROWS_AS(run_calibration_harness(pair, {}, spec.v_limit), std::invalid_argument);
}

TEST_CASE("harness: spacing_mop matches the direct lane run bitwise") {
    testing::SyntheticSpec spec;
    spec.window = 8.0;
    std::mt19937_64 rng(43);
    const auto truth = testing::random_eidm_truth(rng, false);
    const auto pair = testing::make_pair_from_truth(truth, spec);
    const auto candidate = testing::random_eidm_truth(rng, false);

    const auto direct = run_harness_lane(pair, candidate, spec.v_limit);
    const auto log = run_calibration_harness(pair, {candidate}, spec.v_limit);
    const auto extracted = spacing_mop(log, 0);
    REQUIRE(extracted.size() == direct.spacing.size());
    for (std::size_t i = 0; i < extracted.size(); ++i) CHECK(extracted[i] == direct.spacing[i]);

    // leader length enters the spacing definition head-on
    auto longer = pair;
    longer.leader.vehicle_length += 1.0;
    const auto shifted = run_harness_lane(longer, candidate, spec.v_limit);
    CHECK(shifted.spacing[0] == Catch::Approx(direct.spacing[0] - 1.0).margin(1e-12));
}

TEST_CASE("signal controller: phase arithmetic") {
    SignalPlan plan{60.5, 30.25, 0.0};
    CHECK(signal_is_green(plan, 0.0));
    CHECK(!signal_is_green(plan, 60.5 - 1e-6));

    // default queue plan: red first, 43 green onsets in 2600 s
    SignalPlan queue_plan{60.5, 30.25, 30.25};
    int onsets = 0;
    bool prev = signal_is_green(queue_plan, 0.0);
    CHECK(!prev);
    for (double t = 0.0; t < 2600.0; t += 0.04) {
        const bool now = signal_is_green(queue_plan, t);
        if (now && !prev) ++onsets;
        prev = now;
    }
    CHECK(onsets == 43);
}

TEST_CASE("queue: EIDM platoon departs after its start-up delay") {
    ScenarioConfig cfg;
    cfg.kind = ScenarioKind::queue;
    cfg.lane_length = 400.0;
    cfg.stop_line = 300.0;
    cfg.signal = SignalPlan{20.0, 10.0, 10.0};  // red [0,10), green [10,20)
    cfg.duration = 18.0;
    cfg.record_interval = cfg.dt;
    ParameterSet eidm = ParameterSet::defaults(ModelKind::eidm);
    cfg.fleet = {eidm};
    cfg.initial_vehicles = {{298.0, 0.0, 0}};  // waiting at the line, gap = s0
    const auto log = run_scenario(cfg, 1);

    double first_move = -1.0;
    for (const auto& r : log.records)
        if (r.v > 0.1) {
            first_move = r.t;
            break;
        }
    REQUIRE(first_move > 0.0);
    const double t_start = eidm.eidm().t_start;
    CHECK(first_move >= 10.0 + t_start);
    CHECK(first_move <= 10.0 + t_start + 2.0);
}

TEST_CASE("run_scenario: identical seed gives bit-identical logs") {
    ScenarioConfig cfg = queue_scenario();
    cfg.duration = 120.0;
    cfg.insertion_interval = 2.0;
    cfg.fleet = {ParameterSet::defaults(ModelKind::eidm),
                 ParameterSet::defaults(ModelKind::idm),
                 ParameterSet::defaults(ModelKind::krauss)};
    cfg.fleet_weights = {0.5, 0.3, 0.2};

    const auto a = run_scenario(cfg, 99);
    const auto b = run_scenario(cfg, 99);
    CHECK(log_records_csv(a) == log_records_csv(b));
    CHECK(log_events_csv(a) == log_events_csv(b));
    CHECK(log_detectors_csv(a) == log_detectors_csv(b));

    const auto c = run_scenario(cfg, 100);
    CHECK(log_records_csv(a) != log_records_csv(c));
}

TEST_CASE("run_scenario: ring with zero insertions is empty except detectors") {
    ScenarioConfig cfg = ring_scenario();
    cfg.duration = 130.0;
    cfg.insertion_interval = 0.0;
    cfg.fleet = {ParameterSet::defaults(ModelKind::idm)};
    const auto log = run_scenario(cfg, 1);
    CHECK(log.records.empty());
    CHECK(log.events.empty());
    CHECK(log.detectors.size() == 3 * 2);  // 3 zones, two full 60 s windows
    for (const auto& d : log.detectors) CHECK(d.count == 0);
}

TEST_CASE("run_scenario: conservation and no teleportation") {
    ScenarioConfig cfg = queue_scenario();
    cfg.duration = 90.0;
    cfg.insertion_interval = 4.0;
    cfg.record_interval = cfg.dt;
    cfg.fleet = {ParameterSet::defaults(ModelKind::eidm)};
    const auto log = run_scenario(cfg, 5);

    std::map<int, std::vector<VehicleRecord>> by_id;
    for (const auto& r : log.records) by_id[r.vehicle_id].push_back(r);
    CHECK(!by_id.empty());

    const double v_cap = (50.0 / 3.6) * 1.0 + 2.6 * 0.04;
    for (auto& [id, recs] : by_id) {
        // records come out in time order per vehicle
        for (std::size_t i = 1; i < recs.size(); ++i) {
            const double dt = recs[i].t - recs[i - 1].t;
            CHECK(dt == Catch::Approx(0.04).margin(1e-9));
            const double dx = recs[i].position - recs[i - 1].position;
            CHECK(dx >= -1e-12);
            CHECK(dx <= v_cap * dt + 1e-9);
        }
        // residence time matches the record count (one record per step +- 1)
        const double residence = recs.back().t - recs.front().t;
        CHECK(std::abs(double(recs.size()) - (residence / 0.04 + 1.0)) <= 1.0);
    }
}

TEST_CASE("run_scenario: saturated entry produces insertion_blocked events") {
    ScenarioConfig cfg = queue_scenario();
    cfg.duration = 150.0;
    cfg.insertion_interval = 1.0;  // far above what one lane at red can absorb
    cfg.fleet = {ParameterSet::defaults(ModelKind::eidm)};
    const auto log = run_scenario(cfg, 7);
    CHECK(log.count_events(EventKind::insertion_blocked) > 0);
    CHECK(log.count_events(EventKind::collision) == 0);
}

TEST_CASE("run_scenario: zero duration gives an empty log") {
    ScenarioConfig cfg = queue_scenario();
    cfg.duration = 0.0;
    cfg.fleet = {ParameterSet::defaults(ModelKind::idm)};
    const auto log = run_scenario(cfg, 1);
    CHECK(log.records.empty());
    CHECK(log.events.empty());
}

TEST_CASE("heterogeneous Krauss platoon: decel visibility changes outcomes") {
    // a hard-braking leader with a soft-braking follower behind it
    ParameterSet hard = ParameterSet::defaults(ModelKind::krauss);
    KraussParams kh = hard.krauss();
    kh.b = 4.5;
    kh.tau = 0.5;
    hard.values = kh;
    ParameterSet soft = hard;
    KraussParams ks = soft.krauss();
    ks.b = 1.2;
    soft.values = ks;

    const auto run_with = [&](bool visibility) {
        ScenarioConfig cfg = bare_lane(2000.0);
        cfg.duration = 60.0;
        cfg.leader_decel_visibility = visibility;
        cfg.fleet = {hard, soft};
        // platoon at speed behind a stopped blocker
        cfg.initial_vehicles = {{900.0, 0.0, 0}};
        for (int i = 1; i <= 12; ++i)
            cfg.initial_vehicles.push_back(
                {900.0 - double(i) * 12.0, 11.0, i % 2 == 0 ? std::size_t(0) : std::size_t(1)});
        const auto log = run_scenario(cfg, 11);
        return log_records_csv(log) + log_events_csv(log);
    };
    CHECK(run_with(true) != run_with(false));
}

TEST_CASE("log CSV round trip") {
    ScenarioConfig cfg = queue_scenario();
    cfg.duration = 30.0;
    cfg.insertion_interval = 4.0;
    cfg.fleet = {ParameterSet::defaults(ModelKind::eidm)};
    const auto log = run_scenario(cfg, 3);

    const auto dir = std::filesystem::temp_directory_path() /
                     ("carcal_log_" + std::to_string(std::random_device{}()));
    write_log_csv(log, dir);
    const auto back = read_log_csv(dir);
    CHECK(log_records_csv(back) == log_records_csv(log));
    CHECK(log_events_csv(back) == log_events_csv(log));
    CHECK(log_detectors_csv(back) == log_detectors_csv(log));
    std::filesystem::remove_all(dir);
}

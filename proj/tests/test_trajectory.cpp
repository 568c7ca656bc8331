#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <random>

#include "carcal/trajectory.hpp"
#include "support/synthetic.hpp"

using namespace carcal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("carcal_traj_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Trajectory straight_track(const std::string& id, double t0, double x0, double v,
                          std::size_t n, double dt = 0.1, const std::string& lane = "1") {
    Trajectory t;
    t.vehicle_id = id;
    t.vehicle_length = 5.0;
    for (std::size_t i = 0; i < n; ++i) {
        TrajectorySample s;
        s.t = t0 + double(i) * dt;
        s.x = x0 + v * double(i) * dt;
        s.driven = v * double(i) * dt;
        s.v = v;
        s.lane_id = lane;
        t.samples.push_back(s);
    }
    return t;
}

}  // namespace

TEST_CASE("load_dataset: empty file with header gives empty list") {
    TempDir tmp;
    const auto path = tmp.path / "empty.csv";
    write_file(path, "track_id,frame,t,x,y,speed,lane_id,length,leader_id\n");
    const auto res = load_dataset(path.string());
    CHECK(res.tracks.empty());
    CHECK(res.rejected.empty());
}

TEST_CASE("load_dataset: driven distance integrated from positions") {
    TempDir tmp;
    const auto path = tmp.path / "two.csv";
    write_file(path,
               "track_id,frame,t,x,y,speed,lane_id,length,leader_id\n"
               "a,0,0.0,10.0,0.0,1.0,1,5.0,\n"
               "a,1,1.0,11.0,0.0,1.0,1,5.0,\n");
    const auto res = load_dataset(path.string());
    REQUIRE(res.tracks.size() == 1);
    const auto& t = res.tracks[0];
    REQUIRE(t.samples.size() == 2);
    CHECK(t.samples[0].driven == 0.0);
    CHECK(t.samples[1].driven == Catch::Approx(1.0));
    CHECK(t.leader_id.empty());
}

TEST_CASE("load_dataset: duplicated timestamp rejects the track") {
    TempDir tmp;
    const auto path = tmp.path / "dup.csv";
    write_file(path,
               "track_id,frame,t,x,y,speed,lane_id,length,leader_id\n"
               "a,0,0.0,0,0,1.0,1,5.0,\n"
               "a,1,0.0,1,0,1.0,1,5.0,\n"
               "b,0,0.0,0,0,1.0,1,5.0,\n"
               "b,1,0.5,1,0,1.0,1,5.0,\n");
    const auto res = load_dataset(path.string());
    REQUIRE(res.tracks.size() == 1);
    CHECK(res.tracks[0].vehicle_id == "b");
    REQUIRE(res.rejected.size() == 1);
    CHECK(res.rejected[0].track_id == "a");
    CHECK(res.rejected[0].reason == "non-monotonic time");
}

TEST_CASE("load_dataset: NaN and negative speed rejection") {
    TempDir tmp;
    const auto path = tmp.path / "bad.csv";
    write_file(path,
               "track_id,frame,t,x,y,speed,lane_id,length,leader_id\n"
               "a,0,0.0,nan,0,1.0,1,5.0,\n"
               "a,1,0.5,1,0,1.0,1,5.0,\n"
               "b,0,0.0,0,0,-1.0,1,5.0,\n"
               "b,1,0.5,1,0,1.0,1,5.0,\n");
    const auto res = load_dataset(path.string());
    CHECK(res.tracks.empty());
    REQUIRE(res.rejected.size() == 2);
    CHECK(res.rejected[0].reason == "non-finite values");
    CHECK(res.rejected[1].reason == "negative speed");
}

TEST_CASE("load_dataset: missing column is a hard error") {
    TempDir tmp;
    const auto path = tmp.path / "cols.csv";
    write_file(path, "track_id,frame,t,x,y,speed,lane_id,length\n");
    CHECK_THROWS_AS(load_dataset(path.string()), std::invalid_argument);
}

TEST_CASE("resample: identity on its own grid") {
    const auto track = straight_track("a", 0.0, 0.0, 2.0, 11, 0.04);
    const auto r = resample(track, 0.04);
    REQUIRE(r.samples.size() == track.samples.size());
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        CHECK(r.samples[i].t == Catch::Approx(track.samples[i].t).margin(1e-12));
        CHECK(r.samples[i].x == Catch::Approx(track.samples[i].x).margin(1e-12));
    }
}

TEST_CASE("resample: linear blend onto a finer grid") {
    const auto track = straight_track("a", 0.0, 0.0, 1.0, 5, 0.1);  // x = t
    const auto r = resample(track, 0.04);
    CHECK(r.samples[1].t == Catch::Approx(0.04).margin(1e-12));
    CHECK(r.samples[1].x == Catch::Approx(0.04).margin(1e-12));
    CHECK(r.samples[1].driven == Catch::Approx(0.04).margin(1e-12));
}

TEST_CASE("resample: idempotent once on the target grid") {
    std::mt19937_64 rng(5);
    Trajectory t;
    t.vehicle_id = "a";
    double x = 0.0, time = 0.0;
    for (int i = 0; i < 40; ++i) {
        TrajectorySample s;
        s.t = time;
        s.x = x;
        s.driven = x;
        s.v = 1.0 + double(rng() % 100) / 50.0;
        s.lane_id = "1";
        t.samples.push_back(s);
        time += 0.05 + double(rng() % 100) / 1000.0;
        x += s.v * 0.05;
    }
    const auto once = resample(t, 0.04);
    const auto twice = resample(once, 0.04);
    REQUIRE(once.samples.size() == twice.samples.size());
    for (std::size_t i = 0; i < once.samples.size(); ++i) {
        CHECK(twice.samples[i].t == Catch::Approx(once.samples[i].t).margin(1e-9));
        CHECK(twice.samples[i].x == Catch::Approx(once.samples[i].x).margin(1e-9));
    }
}

TEST_CASE("resample: too few samples is a rejection") {
    Trajectory t;
    t.samples.push_back({});
    CHECK_THROWS_AS(resample(t, 0.04), std::invalid_argument);
}

TEST_CASE("select_candidates: six criteria rejections carry reasons") {
    SelectionConfig cfg;
    cfg.lanes = {"1"};
    cfg.stop_line = {{"1", 50.0}};
    cfg.min_window = 0.5;

    // healthy pair: stopped, then drives off and crosses x=50 once
    testing::SyntheticSpec spec;
    spec.window = 20.0;
    auto leader = testing::make_drive_off_leader(spec, "L");
    for (auto& s : leader.samples) s.x += 41.0;  // stop line 50, front starts at 48
    auto follower = leader;                      // same shape, shifted back
    follower.vehicle_id = "F";
    follower.leader_id = "L";
    for (auto& s : follower.samples) s.x -= 7.0;

    SECTION("healthy pair is selected and marked free leader") {
        const auto res = select_candidates({leader, follower}, cfg);
        REQUIRE(res.pairs.size() == 1);
        CHECK(res.pairs[0].is_free_leader);
        CHECK(res.candidates == 1);
        for (double s : res.pairs[0].spacing) CHECK(s >= 0.0);
    }

    SECTION("lane filter") {
        auto off_lane = follower;
        for (auto& s : off_lane.samples) s.lane_id = "2";
        const auto res = select_candidates({leader, off_lane}, cfg);
        CHECK(res.pairs.empty());
        REQUIRE(res.rejected.size() == 1);
        bool found = false;
        for (const auto& r : res.rejected[0].reasons) found |= r == "lane not selected";
        CHECK(found);
    }

    SECTION("lane change") {
        auto changer = follower;
        for (std::size_t i = changer.samples.size() / 2; i < changer.samples.size(); ++i)
            changer.samples[i].lane_id = "2";
        cfg.lanes = {};  // lane membership passes; the change is the offense
        cfg.stop_line = {{"1", 50.0}, {"2", 50.0}};
        const auto res = select_candidates({leader, changer}, cfg);
        CHECK(res.pairs.empty());
        REQUIRE(res.rejected.size() == 1);
        bool found = false;
        for (const auto& r : res.rejected[0].reasons) found |= r == "follower lane change";
        CHECK(found);
    }

    SECTION("no full stop") {
        auto mover = follower;
        for (auto& s : mover.samples) s.v = std::max(s.v, 0.5);
        const auto res = select_candidates({leader, mover}, cfg);
        CHECK(res.pairs.empty());
        bool found = false;
        for (const auto& r : res.rejected[0].reasons) found |= r == "follower has no full stop";
        CHECK(found);
    }

    SECTION("crossing count") {
        auto parked = follower;
        for (auto& s : parked.samples) s.x = 10.0;  // never crosses
        const auto res = select_candidates({leader, parked}, cfg);
        CHECK(res.pairs.empty());
        bool found = false;
        for (const auto& r : res.rejected[0].reasons)
            found |= r == "follower crosses stop line 0 times";
        CHECK(found);
    }

    SECTION("tracking gap") {
        auto gappy = follower;
        gappy.samples.erase(gappy.samples.begin() + 50, gappy.samples.begin() + 150);
        const auto res = select_candidates({leader, gappy}, cfg);
        CHECK(res.pairs.empty());
        bool found = false;
        for (const auto& r : res.rejected[0].reasons) found |= r == "follower tracking gap";
        CHECK(found);
    }

    SECTION("position jump") {
        auto jumpy = follower;
        for (std::size_t i = jumpy.samples.size() / 2; i < jumpy.samples.size(); ++i)
            jumpy.samples[i].x += 8.0;
        const auto res = select_candidates({leader, jumpy}, cfg);
        CHECK(res.pairs.empty());
        bool found = false;
        for (const auto& r : res.rejected[0].reasons) found |= r == "follower position jump";
        CHECK(found);
    }

    SECTION("negative spacing") {
        auto pushy = follower;
        for (auto& s : pushy.samples) s.x += 3.0;  // front overlaps leader rear
        const auto res = select_candidates({leader, pushy}, cfg);
        CHECK(res.pairs.empty());
        bool found = false;
        for (const auto& r : res.rejected[0].reasons) found |= r == "negative spacing";
        CHECK(found);
    }
}

TEST_CASE("select_candidates: selection is a pure, idempotent filter") {
    testing::SyntheticSpec spec;
    spec.window = 15.0;
    auto leader = testing::make_drive_off_leader(spec, "L");
    auto follower = leader;
    follower.vehicle_id = "F";
    follower.leader_id = "L";
    for (auto& s : follower.samples) s.x -= 7.0;

    SelectionConfig cfg;
    cfg.min_window = 0.5;
    const auto once = select_candidates({leader, follower}, cfg);
    const auto again = select_candidates({leader, follower}, cfg);
    REQUIRE(once.pairs.size() == again.pairs.size());
    for (std::size_t i = 0; i < once.pairs.size(); ++i)
        CHECK(to_json(once.pairs[i]).dump() == to_json(again.pairs[i]).dump());
}

TEST_CASE("pair JSON round trip") {
    testing::SyntheticSpec spec;
    spec.window = 10.0;
    const auto truth = ParameterSet::defaults(ModelKind::eidm);
    const auto pair = testing::make_pair_from_truth(truth, spec);
    const auto j = to_json(pair);
    const auto back = pair_from_json(j);
    CHECK(to_json(back).dump() == j.dump());
    CHECK(back.spacing.size() == pair.spacing.size());
}

TEST_CASE("estimate_initial_params: recovers headway on steady following") {
    // constant-speed leader, follower glued at gap = v*T_true + s0
    const double v = 8.0, T_true = 1.4, s0 = 2.0;
    LeaderFollowerPair pair;
    pair.dt = 0.04;
    pair.t_start = 0.0;
    pair.t_end = 20.0;
    const std::size_t n = 501;
    pair.leader.vehicle_id = "L";
    pair.leader.vehicle_length = 5.0;
    pair.follower.vehicle_id = "F";
    pair.follower.vehicle_length = 5.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = double(i) * pair.dt;
        TrajectorySample lead;
        lead.t = t;
        lead.driven = 100.0 + v * t;
        lead.x = lead.driven;
        lead.v = v;
        // brief initial stop so the drive-off lag heuristic has anchors
        if (i < 25) {
            lead.v = 0.0;
            lead.driven = 100.0;
            lead.x = 100.0;
        }
        pair.leader.samples.push_back(lead);
        TrajectorySample fol = lead;
        fol.driven = lead.driven - 5.0 - (s0 + lead.v * T_true);
        fol.x = fol.driven;
        pair.follower.samples.push_back(fol);
        pair.spacing.push_back(s0 + lead.v * T_true);
    }
    const auto bounds = default_bounds(ModelKind::eidm, 0.04);
    const auto est = estimate_initial_params(pair, bounds, 13.89);
    const double t_est = est.eidm().base.T;
    CHECK(t_est == Catch::Approx(T_true).margin(0.3));
}

TEST_CASE("estimate_initial_params: degenerate pair falls back to mid-bounds") {
    LeaderFollowerPair pair;
    pair.dt = 0.04;
    for (std::size_t i = 0; i < 100; ++i) {
        TrajectorySample s;
        s.t = double(i) * 0.04;
        s.driven = 10.0;
        s.x = 10.0;
        s.v = 0.0;
        pair.leader.samples.push_back(s);
        TrajectorySample f = s;
        f.driven = 0.0;
        f.x = 0.0;
        pair.follower.samples.push_back(f);
        pair.spacing.push_back(5.0);
    }
    const auto bounds = default_bounds(ModelKind::idm, 0.04);
    const auto est = estimate_initial_params(pair, bounds, 13.89);
    const auto mid = bounds.midpoint();
    const auto vec = extract_vector(bounds, est);
    for (std::size_t i = 0; i < vec.size(); ++i) CHECK(vec[i] == Catch::Approx(mid[i]));
}

TEST_CASE("estimate_initial_params: always inside bounds") {
    std::mt19937_64 rng(31);
    const auto bounds = default_bounds(ModelKind::eidm, 0.04);
    for (int rep = 0; rep < 10; ++rep) {
        testing::SyntheticSpec spec;
        spec.leader_vmax = 25.0;  // exaggerate to push F_v estimate at its cap
        const auto truth = testing::random_eidm_truth(rng, false);
        const auto pair = testing::make_pair_from_truth(truth, spec);
        const auto est = estimate_initial_params(pair, bounds, 13.89);
        const auto vec = extract_vector(bounds, est);
        for (std::size_t i = 0; i < vec.size(); ++i) {
            CHECK(vec[i] >= bounds.ranges[i].lb - 1e-12);
            CHECK(vec[i] <= bounds.ranges[i].ub + 1e-12);
        }
    }
}

TEST_CASE("accepted trajectories keep non-decreasing driven distance") {
    testing::SyntheticSpec spec;
    const auto truth = ParameterSet::defaults(ModelKind::eidm);
    const auto pair = testing::make_pair_from_truth(truth, spec);
    for (std::size_t i = 1; i < pair.follower.samples.size(); ++i)
        CHECK(pair.follower.samples[i].driven >= pair.follower.samples[i - 1].driven - 1e-12);
}

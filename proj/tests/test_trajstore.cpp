#include <gtest/gtest.h>

#include <sstream>

#include "cfcal/synthesize.hpp"
#include "cfcal/trajstore.hpp"

using namespace cfcal;

namespace {

Trajectory ramp(int id, int leader, Frame first, std::size_t n, double x0, double v, double dt = 0.1) {
    Trajectory t;
    t.vehicle_id = id;
    t.first_frame = first;
    t.dt = dt;
    for (std::size_t k = 0; k < n; ++k) {
        t.positions.push_back(x0 + v * dt * static_cast<double>(k));
        t.speeds.push_back(v);
        t.leaders.push_back(leader);
        t.lanes.push_back(1);
    }
    return t;
}

}  // namespace

TEST(LoadTrajectories, SpeedFromForwardDifferenceWithLastRepeated) {
    const auto set = load_trajectories("vehicle_id,time,position\n1,0.0,0.0\n1,0.1,1.0\n1,0.2,2.0\n");
    const auto& t = set.at(1);
    ASSERT_EQ(t.size(), 3u);
    for (double v : t.speeds) EXPECT_NEAR(v, 10.0, 1e-9);
    EXPECT_NEAR(set.dt(), 0.1, 1e-12);
}

TEST(LoadTrajectories, EmptyInputIsRejected) {
    try {
        (void)load_trajectories(std::string{});
        FAIL() << "expected an error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("no records"), std::string::npos) << e.what();
    }
}

TEST(LoadTrajectories, LeaderColumnPassesThrough) {
    std::string csv = "vehicle_id,time,position,speed,leader_id\n";
    for (int k = 0; k < 4; ++k) {
        csv += "1," + std::to_string(0.1 * k) + "," + std::to_string(100.0 + k) + ",10,0\n";
        csv += "2," + std::to_string(0.1 * k) + "," + std::to_string(50.0 + k) + ",10,1\n";
    }
    const auto set = load_trajectories(csv);
    for (int l : set.at(2).leaders) EXPECT_EQ(l, 1);
    EXPECT_FALSE(set.leader_column_missing());
}

TEST(LoadTrajectories, MissingLeaderColumnSetsFlag) {
    const auto set = load_trajectories("vehicle_id,time,position,speed\n1,0,0,1\n1,0.1,0.1,1\n");
    EXPECT_TRUE(set.leader_column_missing());
    for (int l : set.at(1).leaders) EXPECT_EQ(l, 0);
}

TEST(LoadTrajectories, NonUniformTimestampsNameTheVehicle) {
    try {
        (void)load_trajectories("vehicle_id,time,position\n7,0.0,0\n7,0.1,1\n7,0.35,2\n");
        FAIL() << "expected an error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find('7'), std::string::npos) << e.what();
    }
}

TEST(LoadTrajectories, DuplicateRowsAreRejected) {
    EXPECT_THROW((void)load_trajectories("vehicle_id,time,position\n1,0.0,0\n1,0.0,0\n1,0.1,1\n"), DataError);
}

TEST(LoadTrajectories, CsvRoundTripIsExact) {
    const auto m = ModelInstance::ovm();
    SynthOptions o;
    o.noise_std = 0.37;
    const auto set = synthesize_scenario(m, m.params, LeadProfile::sinusoid(30, 5, 12), 3, 0.1, 8.0, 11, o);
    std::ostringstream out;
    write_trajectories(out, set);
    const auto back = load_trajectories(out.str());
    EXPECT_TRUE(back == set);
}

TEST(TrajectorySetTest, RejectsDuplicateIdsAndBadDt) {
    TrajectorySet s(0.1);
    s.add(ramp(1, 0, 0, 5, 0, 10));
    EXPECT_THROW(s.add(ramp(1, 0, 0, 5, 0, 10)), DataError);
    EXPECT_THROW(s.add(ramp(2, 0, 0, 5, 0, 10, 0.2)), DataError);
}

TEST(BuildPlatoon, ChainOrderAndFollowers) {
    TrajectorySet s(0.1);
    s.add(ramp(1, 0, 0, 30, 200, 10));
    s.add(ramp(2, 1, 0, 30, 100, 10));
    s.add(ramp(3, 2, 0, 30, 0, 10));
    const std::vector<int> ids{3, 1, 2};
    const auto p = build_platoon(s, ids);
    const auto s1 = *p.slot_of(1), s2 = *p.slot_of(2), s3 = *p.slot_of(3);
    for (Frame f = 0; f < 29; ++f) {
        EXPECT_EQ(p.follower(s1, f), 2);
        EXPECT_EQ(p.follower(s2, f), 3);
        EXPECT_EQ(p.follower(s3, f), 0);
    }
    ASSERT_FALSE(p.orders().empty());
    std::vector<int> chi;
    for (auto slot : p.orders().front()) chi.push_back(p.member(slot).id);
    EXPECT_EQ(chi, (std::vector<int>{1, 2, 3}));
}

TEST(BuildPlatoon, OutsideLeaderIsNotAFollowerSource) {
    TrajectorySet s(0.1);
    s.add(ramp(1, 0, 0, 20, 100, 10));
    s.add(ramp(2, 1, 0, 20, 0, 10));
    const auto p = build_platoon(s, {2});
    ASSERT_EQ(p.size(), 1u);
    for (Frame f = 0; f < 19; ++f) {
        EXPECT_EQ(p.follower(0, f), 0);
        EXPECT_EQ(p.leader(0, f), 1);
    }
}

TEST(BuildPlatoon, LeaderSwitchIsAnEvent) {
    // Vehicle 2 follows 1 until t = 5.0 and then 4; neither leader is in the
    // platoon. Events enumerated by hand: entry 0, switch 5.0, model end.
    TrajectorySet s(0.1);
    s.add(ramp(1, 0, 0, 101, 300, 10));
    s.add(ramp(4, 0, 0, 101, 150, 10));
    auto t = ramp(2, 1, 0, 101, 0, 10);
    for (std::size_t k = 50; k < t.leaders.size(); ++k) t.leaders[k] = 4;
    s.add(t);
    const auto p = build_platoon(s, {2});
    const auto times = p.event_times();
    EXPECT_NE(std::find_if(times.begin(), times.end(), [](double x) { return std::abs(x - 5.0) < 1e-9; }),
              times.end());
    EXPECT_EQ(p.leader(0, 49), 1);
    EXPECT_EQ(p.leader(0, 50), 4);
    EXPECT_EQ(p.leader(0, 90), 4);
}

TEST(BuildPlatoon, CircularLeadershipIsRejected) {
    TrajectorySet s(0.1);
    s.add(ramp(1, 2, 0, 10, 100, 10));
    s.add(ramp(2, 1, 0, 10, 0, 10));
    EXPECT_THROW((void)build_platoon(s, {1, 2}), DataError);
}

TEST(BuildPlatoon, LeaderGapIsNamed) {
    TrajectorySet s(0.1);
    s.add(ramp(1, 0, 0, 10, 100, 10));  // leader ends at frame 9
    s.add(ramp(2, 1, 0, 20, 0, 10));    // but is named through frame 19
    try {
        (void)build_platoon(s, {2});
        FAIL() << "expected an error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("gap"), std::string::npos) << e.what();
    }
}

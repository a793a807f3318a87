#include <gtest/gtest.h>

#include "cfcal/objective.hpp"
#include "cfcal/synthesize.hpp"

using namespace cfcal;

namespace {

// One vehicle, constant speed 10, with a model window of `steps` frames.
struct Toy {
    TrajectorySet data{0.1};
    SimResult sim;
};

Toy toy(int frames, Frame model_end) {
    Toy t;
    Trajectory tr;
    tr.vehicle_id = 2;
    for (int k = 0; k < frames; ++k) {
        tr.positions.push_back(k);
        tr.speeds.push_back(10.0);
        tr.leaders.push_back(0);
        tr.lanes.push_back(1);
    }
    t.data.add(tr);
    VehicleSim v;
    v.id = 2;
    v.first = 0;
    v.last = frames - 1;
    v.model_start = 0;
    v.model_end = model_end;
    for (int k = 0; k < frames; ++k) v.states.push_back({static_cast<double>(k), 10.0});
    v.phase.assign(static_cast<std::size_t>(frames), Phase::Model);
    t.sim.vehicles.push_back(v);
    t.sim.dt = 0.1;
    return t;
}

}  // namespace

TEST(Objective, ExactFitIsZero) {
    auto t = toy(5, 3);
    EXPECT_EQ(objective_value(t.sim, t.data), 0.0);
    EXPECT_EQ(loss_state_partial(t.sim, t.data, 1, 2), Eigen::Vector2d::Zero());
}

TEST(Objective, SingleStepOffByTwo) {
    auto t = toy(3, 1);
    t.sim.vehicles[0].states[0].pos += 2.0;
    EXPECT_DOUBLE_EQ(objective_value(t.sim, t.data), 4.0);
    EXPECT_DOUBLE_EQ(rmse(objective_value(t.sim, t.data), t.sim), 2.0);
}

TEST(Objective, LossPartial) {
    auto t = toy(6, 3);
    t.sim.vehicles[0].states[1].pos += 3.0;
    t.sim.vehicles[0].states[4].pos += 3.0;  // frame 4 is outside [0, 3)
    EXPECT_EQ(loss_state_partial(t.sim, t.data, 1, 2), Eigen::Vector2d(6.0, 0.0));
    EXPECT_EQ(loss_state_partial(t.sim, t.data, 4, 2), Eigen::Vector2d::Zero());
    EXPECT_DOUBLE_EQ(objective_value(t.sim, t.data), 9.0);
}

TEST(Objective, GridMismatchIsStructural) {
    auto t = toy(5, 3);
    t.sim.vehicles[0].last = 7;
    EXPECT_THROW((void)objective_value(t.sim, t.data), StructuralError);
    auto u = toy(5, 3);
    u.sim.dt = 0.2;
    EXPECT_THROW((void)objective_value(u.sim, u.data), StructuralError);
}

TEST(Rmse, Examples) {
    EXPECT_EQ(rmse(0.0, 10), 0.0);
    EXPECT_DOUBLE_EQ(rmse(4.0, 1), 2.0);
    EXPECT_DOUBLE_EQ(rmse(4.0, 4), 1.0);
    EXPECT_THROW((void)rmse(1.0, 0), StructuralError);
}

TEST(Rmse, PooledWeightsBySteps) {
    // (F, steps) = (1, 1) and (0, 3): pooled sqrt(1/4), unweighted (1+0)/2.
    const std::vector<LossTally> parts{{1.0, 1}, {0.0, 3}};
    EXPECT_DOUBLE_EQ(pooled_rmse(parts), 0.5);
    EXPECT_DOUBLE_EQ(average_rmse(parts), 0.5 * (1.0 + 0.0));
    const std::vector<LossTally> q{{4.0, 1}, {4.0, 4}};
    EXPECT_DOUBLE_EQ(pooled_rmse(q), std::sqrt(8.0 / 5.0));
    EXPECT_DOUBLE_EQ(average_rmse(q), 1.5);
}

TEST(TranslationObjective, DualGridByHand) {
    // Lead at constant speed; follower an exact translation plus a constant
    // error d. α = 0.2 (2 frames). Data grid: frames k in [from, to) with k-2
    // covered by the lead. Shifted grid: lead frames j with j+2 in [from, to).
    const double dt = 0.1, alpha = 0.2, s_jam = 20.0, d = 1.5;
    Trajectory lead, fol;
    lead.vehicle_id = 1;
    fol.vehicle_id = 2;
    for (int k = 0; k < 30; ++k) {
        lead.positions.push_back(100.0 + 3.0 * k);
        lead.speeds.push_back(30.0);
        fol.positions.push_back(100.0 + 3.0 * (k - 2) - s_jam + d);
        fol.speeds.push_back(30.0);
    }
    lead.dt = fol.dt = dt;
    const Frame from = 5, to = 25;
    const double pairs_a = static_cast<double>(to - from);  // every k - 2 is covered
    const double pairs_b = static_cast<double>(to - from);  // j = 3..22
    EXPECT_NEAR(tt_objective(fol, lead, alpha, s_jam, from, to), 0.5 * (pairs_a + pairs_b) * d * d, 1e-9);

    for (auto& x : fol.positions) x -= d;
    EXPECT_NEAR(tt_objective(fol, lead, alpha, s_jam, from, to), 0.0, 1e-18);
    // Off-grid α interpolates linearly; a linear lead keeps the fit exact.
    for (int k = 0; k < 30; ++k) fol.positions[static_cast<std::size_t>(k)] = 100.0 + 3.0 * (k - 2.5) - s_jam;
    EXPECT_NEAR(tt_objective(fol, lead, 0.25, s_jam, from, to), 0.0, 1e-18);
}

TEST(LossSpecTest, SpeedTermIsNotImplemented) {
    auto t = toy(5, 3);
    LossSpec l;
    l.speed_weight = 1.0;
    EXPECT_THROW((void)objective_value(t.sim, t.data, l), StructuralError);
}

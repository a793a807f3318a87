#include <gtest/gtest.h>

#include "cfcal/optimize.hpp"

using namespace cfcal;
using namespace cfcal::opt;

namespace {

// F = Σ w_j (x_j - c_j)² with call counters and a log of evaluated points.
struct Bowl {
    Vector c, w;
    Vector lo, hi;
    std::shared_ptr<int> nf = std::make_shared<int>(0), ng = std::make_shared<int>(0),
                         nh = std::make_shared<int>(0);
    std::shared_ptr<std::vector<Vector>> points = std::make_shared<std::vector<Vector>>();

    [[nodiscard]] Problem problem() const {
        Problem p;
        auto self = *this;
        p.objective = [self](const Vector& x) {
            ++*self.nf;
            self.points->push_back(x);
            return self.value(x);
        };
        p.objective_gradient = [self](const Vector& x, Vector& g) {
            ++*self.ng;
            self.points->push_back(x);
            g = 2.0 * self.w.cwiseProduct(x - self.c);
            return self.value(x);
        };
        p.objective_hessian = [self](const Vector& x, Vector& g, Matrix& H) {
            ++*self.nh;
            self.points->push_back(x);
            g = 2.0 * self.w.cwiseProduct(x - self.c);
            H = (2.0 * self.w).asDiagonal();
            return self.value(x);
        };
        p.lower = lo;
        p.upper = hi;
        return p;
    }
    [[nodiscard]] double value(const Vector& x) const { return w.dot((x - c).cwiseAbs2()); }
};

Bowl bowl(Vector c, double box = 10.0, Vector w = {}) {
    Bowl b;
    const auto n = c.size();
    b.c = std::move(c);
    b.w = w.size() ? w : Vector::Ones(n);
    b.lo = Vector::Constant(n, -box);
    b.hi = Vector::Constant(n, box);
    return b;
}

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }
Vector v3(double a, double b, double c) { return (Vector(3) << a, b, c).finished(); }

}  // namespace

TEST(GdSpectral, InteriorQuadratic) {
    auto b = bowl(v3(1.0, -2.0, 0.5), 10.0, v3(1.0, 3.0, 0.5));
    const auto r = gd_spectral(b.problem(), v3(5, 5, 5));
    EXPECT_LE((r.best - b.c).norm(), 1e-6);
    EXPECT_LE(r.iterations, 100);
}

TEST(GdSpectral, ProjectsOntoTheBox) {
    auto b = bowl(v2(4.0, -7.0), 3.0);
    const auto r = gd_spectral(b.problem(), v2(0, 0));
    EXPECT_LE((r.best - v2(3.0, -3.0)).norm(), 1e-6);
}

TEST(GdSpectral, RejectsBadStarts) {
    auto b = bowl(v2(0, 0), 1.0);
    EXPECT_THROW((void)gd_spectral(b.problem(), v2(2, 0)), ParameterError);
    auto p = b.problem();
    p.objective_gradient = [](const Vector&, Vector& g) {
        g = Vector::Zero(2);
        return kInf;
    };
    EXPECT_THROW((void)gd_spectral(p, v2(0, 0)), ParameterError);
}

TEST(Lbfgsb, ConvexQuadraticToHighAccuracy) {
    auto b = bowl(v3(1.0, -2.0, 0.5), 10.0, v3(1.0, 30.0, 0.1));
    const auto r = lbfgsb_like(b.problem(), v3(5, 5, 5));
    EXPECT_LE((r.best - b.c).norm(), 1e-8);
}

TEST(Lbfgsb, ActiveBounds) {
    // Minimum at (3, -1, 0.5) after clamping c = (9, -1, 0.5) to x0 ≤ 3.
    auto b = bowl(v3(9.0, -1.0, 0.5), 10.0, v3(1.0, 2.0, 4.0));
    b.hi[0] = 3.0;
    const auto r = lbfgsb_like(b.problem(), v3(0, 0, 0));
    EXPECT_LE((r.best - v3(3.0, -1.0, 0.5)).norm(), 1e-8);
    EXPECT_EQ(r.best[0], 3.0);
}

TEST(Tnc, IsotropicQuadraticInOneOuterIteration) {
    // CG converges in one inner iteration here, before the forcing test can
    // truncate it, so the first step is the exact Newton step.
    auto b = bowl(v3(1.0, -2.0, 0.5), 10.0);
    const auto r = tnc(b.problem(), v3(5, 5, 5));
    ASSERT_GE(r.trace.size(), 2u);
    EXPECT_LE(r.trace[1], 1e-10);
}

TEST(Tnc, AnisotropicQuadratic) {
    auto b = bowl(v3(1.0, -2.0, 0.5), 10.0, v3(1.0, 3.0, 0.5));
    const auto r = tnc(b.problem(), v3(5, 5, 5));
    EXPECT_LE((r.best - b.c).norm(), 1e-6);
    EXPECT_LE(r.iterations, 10);
}

TEST(Tnc, DescendsFromASaddle) {
    // F = x² - y² + y⁴ has a saddle at the origin; start just off it.
    Problem p;
    p.objective = [](const Vector& x) { return x[0] * x[0] - x[1] * x[1] + std::pow(x[1], 4); };
    p.objective_gradient = [](const Vector& x, Vector& g) {
        g = v2(2 * x[0], -2 * x[1] + 4 * std::pow(x[1], 3));
        return x[0] * x[0] - x[1] * x[1] + std::pow(x[1], 4);
    };
    p.lower = Vector::Constant(2, -3.0);
    p.upper = Vector::Constant(2, 3.0);
    const auto r = tnc(p, v2(0.5, 1e-3));
    ASSERT_GE(r.trace.size(), 2u);
    EXPECT_LT(r.trace[1], r.trace[0]);
    EXPECT_LT(r.best_F, -0.2);
}

TEST(Sqp, QuadraticInOneStep) {
    auto b = bowl(v3(1.0, -2.0, 0.5), 10.0, v3(1.0, 3.0, 0.5));
    const auto r = sqp_explicit(b.problem(), v3(5, 5, 5));
    ASSERT_GE(r.trace.size(), 2u);
    // The regularization ε = 1e-6·‖H‖ leaves a relative residual of order ε².
    EXPECT_LE(r.trace[1], 1e-10 * r.trace[0]);
    EXPECT_GT(r.counts.hessian, 0u);
    EXPECT_EQ(r.counts.hessian, static_cast<std::size_t>(*b.nh));
}

TEST(Sqp, IndefiniteHessianFallsBack) {
    Problem p;
    auto F = [](const Vector& x) { return x[0] * x[0] - x[1] * x[1] + std::pow(x[1], 4); };
    p.objective = F;
    p.objective_gradient = [F](const Vector& x, Vector& g) {
        g = v2(2 * x[0], -2 * x[1] + 4 * std::pow(x[1], 3));
        return F(x);
    };
    p.objective_hessian = [F](const Vector& x, Vector& g, Matrix& H) {
        g = v2(2 * x[0], -2 * x[1] + 4 * std::pow(x[1], 3));
        H = Matrix::Zero(2, 2);
        H(0, 0) = 2;
        H(1, 1) = -2 + 12 * x[1] * x[1];
        return F(x);
    };
    p.lower = Vector::Constant(2, -3.0);
    p.upper = Vector::Constant(2, 3.0);
    const auto r = sqp_explicit(p, v2(0.5, 0.1));
    ASSERT_GE(r.trace.size(), 2u);
    EXPECT_LT(r.trace[1], r.trace[0]);
}

TEST(Sqp, NeedsAHessian) {
    auto p = bowl(v2(0, 0)).problem();
    p.objective_hessian = nullptr;
    EXPECT_THROW((void)sqp_explicit(p, v2(1, 1)), StructuralError);
}

TEST(SpsaDescent, OneDimensionalLinearMovesAlongTheGradient) {
    // Projected SPSA on F = a x is exact in one dimension: every accepted
    // step is x_{k+1} = x_k - a_k a with the gain sequence a_k.
    Problem p;
    const double a = 0.75;
    p.objective = [a](const Vector& x) { return a * x[0]; };
    p.lower = Vector::Constant(1, -1e6);
    p.upper = Vector::Constant(1, 1e6);
    Config cfg;
    cfg.max_iter = 20;
    cfg.seed = 3;
    const auto r = spsa_descent(p, Vector::Constant(1, 10.0), cfg);
    ASSERT_GE(r.trace.size(), 3u);
    for (std::size_t k = 1; k < r.trace.size(); ++k) {
        const double gain = cfg.spsa_a / std::pow(static_cast<double>(k) + cfg.spsa_A, cfg.spsa_alpha);
        EXPECT_NEAR(r.trace[k - 1] - r.trace[k], gain * a * a, 1e-9) << k;
    }
}

TEST(SpsaDescent, SeededReproducibility) {
    auto b = bowl(v3(1, 2, 3));
    Config cfg;
    cfg.seed = 5;
    cfg.max_iter = 50;
    const auto x = spsa_descent(b.problem(), v3(0, 0, 0), cfg), y = spsa_descent(b.problem(), v3(0, 0, 0), cfg);
    EXPECT_EQ(x.trace, y.trace);
    EXPECT_EQ(x.best, y.best);
}

TEST(SpsaDescent, StallsOnAPoorlyScaledQuadratic) {
    auto b = bowl(v2(1.0, 1.0), 10.0, v2(1e6, 1.0));
    Config cfg;
    cfg.seed = 1;
    cfg.max_evals = 2000;
    const auto r = spsa_descent(b.problem(), v2(0.0, 5.0), cfg);
    const auto g = lbfgsb_like(b.problem(), v2(0.0, 5.0));
    EXPECT_GT(std::abs(r.best[1] - 1.0), 0.1);
    EXPECT_LE(g.best_F, 1e-10);
}

TEST(NelderMead, TwoDimensionalQuadratic) {
    auto b = bowl(v2(1.5, -0.5), 10.0, v2(1.0, 4.0));
    const auto r = nelder_mead_penalty(b.problem(), v2(3.0, 2.0));
    EXPECT_LE((r.best - b.c).norm(), 1e-6);
    EXPECT_LE(r.counts.objective, 500u);
}

TEST(NelderMead, BoundaryStartStaysFeasible) {
    auto b = bowl(v2(-20.0, 0.0), 10.0);  // optimum outside the box
    const auto r = nelder_mead_penalty(b.problem(), v2(-10.0, 0.0));
    EXPECT_TRUE(feasible(r.best, b.problem()));
    EXPECT_NEAR(r.best[0], -10.0, 1e-3);
    EXPECT_LE(r.best_raw[0], -10.0 + 1e-3);
}

TEST(Genetic, OneDimensionalQuadratic) {
    Problem p;
    p.objective = [](const Vector& x) { return (x[0] - 2.5) * (x[0] - 2.5); };
    p.lower = Vector::Constant(1, -10.0);
    p.upper = Vector::Constant(1, 10.0);
    Config cfg;
    cfg.max_generations = 100;
    cfg.seed = 4;
    const auto r = genetic(p, cfg);
    EXPECT_NEAR(r.best[0], 2.5, 1e-3);
    const auto s = genetic(p, cfg);
    EXPECT_EQ(r.best, s.best);
    EXPECT_EQ(r.trace, s.trace);
}

TEST(Genetic, NeedsAFiniteBox) {
    Problem p;
    p.objective = [](const Vector& x) { return x.squaredNorm(); };
    p.lower = Vector::Constant(1, -kInf);
    p.upper = Vector::Constant(1, 1.0);
    EXPECT_THROW((void)genetic(p), StructuralError);
}

TEST(Multistart, ThresholdSemantics) {
    auto b = bowl(v2(1.0, 1.0));
    const std::vector<Vector> guesses{v2(0, 0), v2(5, 5), v2(-5, 3)};
    EXPECT_EQ(multistart(lbfgsb_like, b.problem(), guesses, kInf).guesses_used, 1);
    EXPECT_EQ(multistart(lbfgsb_like, b.problem(), guesses, 0.0).guesses_used, 3);
    EXPECT_EQ(multistart(lbfgsb_like, b.problem(), guesses, 7.5).guesses_used, 1);
    EXPECT_THROW((void)multistart(lbfgsb_like, b.problem(), {}, kInf), StructuralError);
}

TEST(Multistart, CountsAreSummedAndTheBestRunKept) {
    // A stalled optimizer that returns its start: the best start wins.
    const Optimizer stay = [](const Problem& p, const Vector& x0, const Config&) {
        Evaluator ev(p);
        RunRecord r;
        r.best = x0;
        r.best_F = ev.f(x0);
        r.rmse = p.rmse_of(r.best_F);
        r.counts = ev.counts();
        return r;
    };
    auto b = bowl(v2(1.0, 1.0));
    const std::vector<Vector> guesses{v2(4, 4), v2(1, 2), v2(-5, 3)};
    const auto r = multistart(stay, b.problem(), guesses, 0.0);
    EXPECT_EQ(r.guesses_used, 3);
    EXPECT_EQ(r.counts.objective, 3u);
    EXPECT_EQ(r.best, v2(1, 2));
}

class EveryAlgorithm : public ::testing::TestWithParam<std::string> {};

TEST_P(EveryAlgorithm, ContractsOnABowl) {
    const auto name = GetParam();
    auto b = bowl(v3(1.0, -2.0, 0.5), 5.0, v3(1.0, 3.0, 0.5));
    Config cfg;
    cfg.seed = 11;
    cfg.max_evals = 4000;
    const Vector x0 = v3(4, 4, -4);
    const auto r = optimizer(name)(b.problem(), x0, cfg);

    // Feasible answer, best F is the minimum of the trace and no worse than the start.
    EXPECT_TRUE(feasible(r.best, b.problem())) << name;
    ASSERT_FALSE(r.trace.empty()) << name;
    EXPECT_EQ(r.best_F, *std::min_element(r.trace.begin(), r.trace.end())) << name;
    if (name != "ga") {
        EXPECT_LE(r.best_F, b.value(x0)) << name;
    }
    EXPECT_NEAR(b.value(r.best), r.best_F, 1e-12 * std::max(1.0, r.best_F)) << name;

    // Counts equal callable invocations.
    EXPECT_EQ(r.counts.objective, static_cast<std::size_t>(*b.nf + *b.ng + *b.nh)) << name;
    EXPECT_EQ(r.counts.gradient, static_cast<std::size_t>(*b.ng + *b.nh)) << name;
    EXPECT_EQ(r.counts.hessian, static_cast<std::size_t>(*b.nh)) << name;

    // Gradient methods never evaluate outside the box.
    if (uses_gradient(name))
        for (const auto& x : *b.points) EXPECT_TRUE(feasible(x, b.problem())) << name << " " << x.transpose();

    // Deterministic given config and seed.
    auto b2 = bowl(v3(1.0, -2.0, 0.5), 5.0, v3(1.0, 3.0, 0.5));
    const auto again = optimizer(name)(b2.problem(), x0, cfg);
    EXPECT_EQ(again.best, r.best) << name;
    EXPECT_EQ(again.trace, r.trace) << name;
}

INSTANTIATE_TEST_SUITE_P(Algorithms, EveryAlgorithm, ::testing::ValuesIn(algorithm_names()),
                         [](const auto& info) { return info.param; });

TEST(Optimizer, UnknownNamesAndConfigKeys) {
    EXPECT_THROW((void)optimizer("bfgs"), StructuralError);
    EXPECT_THROW((void)config_from_json(nlohmann::json{{"max_iters", 3}}), StructuralError);
    EXPECT_THROW((void)config_from_json(nlohmann::json{{"max_iter", 2.5}}), StructuralError);
    const auto c = config_from_json(nlohmann::json{{"max_iter", 3}, {"ftol", 1e-9}, {"seed", 4}});
    EXPECT_EQ(c.max_iter, 3);
    EXPECT_EQ(c.ftol, 1e-9);
    EXPECT_EQ(c.seed, 4u);
}

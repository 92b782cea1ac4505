#include <catch2/catch_amalgamated.hpp>

#include "slts/forward.hpp"
#include "slts/oracle.hpp"
#include "slts/weyl.hpp"

#include <random>

using namespace slts;
using Catch::Approx;

namespace {

const double pi = kPi;

TimeScale unit_segment() { return TimeScale::validate({{0.0, pi}}); }

TimeScale chain(const std::vector<double>& pts) {
    std::vector<std::pair<double, double>> blocks;
    for (double x : pts) blocks.emplace_back(x, x);
    return TimeScale::validate(blocks);
}

Potential point_potential(const TimeScale& ts, const std::vector<double>& values) {
    std::map<int, double> pv;
    auto idx = ts.core2_isolated_blocks();
    for (size_t i = 0; i < idx.size(); ++i) pv[idx[i]] = values[i];
    return Potential::create(ts, {}, pv);
}

} // namespace

TEST_CASE("propagation reproduces the free closed form on a single segment") {
    TimeScale ts = unit_segment();
    Potential p = Potential::zero_model(ts, 65);
    for (bool closed : {true, false}) {
        PropagateOptions opt;
        opt.use_closed_form = closed;
        for (double lambda : {0.25, 2.0, 9.0, -4.0}) {
            SolutionState st = propagate(ts, p, lambda, opt);
            const SegmentSolution& sol = st.segments[0];
            for (size_t i = 0; i < sol.x.size(); i += 7) {
                double x = sol.x[i];
                double c_exact = cosm(lambda, x);
                double s_exact = sinm(lambda, x);
                CHECK(sol.values[i][0] == Approx(c_exact).margin(1e-10));
                CHECK(sol.values[i][4] == Approx(s_exact).margin(1e-10));
            }
            CHECK(st.wronskian_drift < 1e-10);
        }
    }
}

TEST_CASE("two-step discrete recurrence by hand") {
    TimeScale ts = chain({0, 1, 2});
    Potential p = point_potential(ts, {0.0});
    for (double lambda : {-3.0, 0.0, 0.7, 5.0}) {
        SolutionState st = propagate(ts, p, lambda);
        CHECK(st.theta0 == Approx(2.0 - lambda).margin(1e-13));
        CHECK(st.theta1 == Approx(1.0 - lambda).margin(1e-13));
        CHECK(st.dtheta1 == Approx(-1.0).margin(1e-14));
        CHECK(st.dtheta0 == Approx(-1.0).margin(1e-14));
        CHECK_FALSE(st.final_delta_defined);
    }
}

TEST_CASE("theta closed forms and the rho -> 0 limit") {
    TimeScale ts = unit_segment();
    Potential p = Potential::zero_model(ts, 65);
    for (double lambda : {0.3, 1.7, 16.5, -2.5}) {
        ThetaPair t0 = theta(ts, p, lambda, 0);
        ThetaPair t1 = theta(ts, p, lambda, 1);
        CHECK(t0.value == Approx(sinm(lambda, pi)).margin(1e-10));
        CHECK(t1.value == Approx(cosm(lambda, pi)).margin(1e-10));
    }
    CHECK(theta(ts, p, 0.0, 0).value == Approx(pi).margin(1e-12));
    CHECK(theta(ts, p, 0.0, 1).value == Approx(1.0).margin(1e-12));
    CHECK_THROWS_AS(theta(ts, p, 0.0, 2), IndexError);
}

TEST_CASE("wronskian stays at -1 across mixed scales") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-2, 2);
    TimeScale ts = TimeScale::validate({{0, 0}, {0.8, 2.0}, {2.9, 2.9}, {3.5, 4.6}});
    for (int trial = 0; trial < 10; ++trial) {
        double q1 = u(rng), q3 = u(rng), amp = u(rng);
        Potential p = Potential::create(
            ts,
            {std::vector<double>(17, amp), [&] {
                 std::vector<double> s(17);
                 for (int i = 0; i < 17; ++i) s[size_t(i)] = amp * std::sin(3.0 * i / 16.0) + q3;
                 return s;
             }()},
            {{1, q1}, {3, q3}});
        SolutionState st = propagate(ts, p, 10 * u(rng));
        CHECK(st.wronskian_drift < 1e-10);
        // every block endpoint satisfies the Wronskian identity
        for (const BlockEndpoints& be : st.blocks) {
            if (!be.delta_defined_out) continue;
            double w = be.S_out.y * be.C_out.yd - be.S_out.yd * be.C_out.y;
            CHECK(w == Approx(-1.0).margin(1e-10));
        }
    }
}

TEST_CASE("lambda-derivative companions match central differences") {
    TimeScale ts = TimeScale::validate({{0, 0}, {0.8, 2.0}, {2.9, 2.9}, {3.5, 4.6}});
    Potential p = Potential::from_function(ts, [](double x) { return 0.4 * std::cos(x); }, 33);
    for (double lambda : {0.9, 7.3, 24.0}) {
        double h = 1e-5 * (1 + std::abs(lambda));
        for (int j : {0, 1}) {
            ThetaPair t = theta(ts, p, lambda, j);
            double fd = (theta(ts, p, lambda + h, j).value - theta(ts, p, lambda - h, j).value) /
                        (2 * h);
            CHECK(t.dvalue == Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("dirichlet and neumann-dirichlet spectra on [0, pi]") {
    TimeScale ts = unit_segment();
    Potential p = Potential::zero_model(ts, 65);
    EigenOptions opt;
    opt.count = 20;
    std::vector<double> l0 = eigenvalues(ts, p, 0, opt);
    std::vector<double> l1 = eigenvalues(ts, p, 1, opt);
    REQUIRE(l0.size() == 20);
    REQUIRE(l1.size() == 20);
    for (int n = 1; n <= 20; ++n) {
        CHECK(l0[size_t(n - 1)] == Approx(double(n) * n).margin(1e-9));
        CHECK(l1[size_t(n - 1)] == Approx((n - 0.5) * (n - 0.5)).margin(1e-9));
    }
    std::vector<double> w = weight_numbers(ts, p, l1, opt);
    for (double wn : w) CHECK(wn == Approx(2.0 / pi).margin(1e-9));
}

TEST_CASE("three-point discrete spectra via theta scan") {
    TimeScale ts = chain({0, 1, 2});
    Potential p = point_potential(ts, {0.0});
    EigenOptions opt;
    std::vector<double> l0 = eigenvalues(ts, p, 0, opt);
    std::vector<double> l1 = eigenvalues(ts, p, 1, opt);
    REQUIRE(l0.size() == 1);
    REQUIRE(l1.size() == 1);
    CHECK(l0[0] == Approx(2.0).margin(1e-10));
    CHECK(l1[0] == Approx(1.0).margin(1e-10));
    CHECK(weight_numbers(ts, p, l1, opt)[0] == Approx(1.0).margin(1e-10));
}

TEST_CASE("forward agrees with the pencil oracle on random discrete scales") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> qd(-2, 2);
    std::uniform_real_distribution<double> gd(0.3, 3.0);
    for (int trial = 0; trial < 10; ++trial) {
        int m = 3 + int(rng() % 5);
        std::vector<double> pts;
        double x = 0;
        for (int i = 0; i < m; ++i) {
            pts.push_back(x);
            x += gd(rng);
        }
        TimeScale ts = chain(pts);
        std::vector<double> qv(size_t(m - 2));
        for (double& v : qv) v = qd(rng);
        Potential p = point_potential(ts, qv);
        DiscreteOracle o = discrete_solve(ts, p);
        EigenOptions opt;
        std::vector<double> l0 = eigenvalues(ts, p, 0, opt);
        std::vector<double> l1 = eigenvalues(ts, p, 1, opt);
        REQUIRE(l0.size() == o.pencil_lambda0.size());
        for (size_t i = 0; i < l0.size(); ++i) {
            CHECK(l0[i] == Approx(o.pencil_lambda0[i]).margin(1e-10 * (1 + std::abs(l0[i]))));
            CHECK(l1[i] == Approx(o.pencil_lambda1[i]).margin(1e-10 * (1 + std::abs(l1[i]))));
        }
        std::vector<double> w = weight_numbers(ts, p, l1, opt);
        for (size_t i = 0; i < w.size(); ++i)
            CHECK(w[i] == Approx(o.weights[i]).margin(1e-9 * (1 + std::abs(o.weights[i]))));
        // oracle theta polynomial matches propagated theta at random lambda
        std::uniform_real_distribution<double> lam(-5, 20);
        for (int i = 0; i < 20; ++i) {
            double l = lam(rng);
            SolutionState st = propagate(ts, p, l);
            double scale0 = std::abs(st.theta0) + 1;
            double scale1 = std::abs(st.theta1) + 1;
            CHECK(std::abs(polyop::eval(o.theta0, l) - st.theta0) / scale0 < 1e-10);
            CHECK(std::abs(polyop::eval(o.theta1, l) - st.theta1) / scale1 < 1e-10);
        }
    }
}

TEST_CASE("interlacing and disjointness on a mixed scale") {
    TimeScale ts = TimeScale::validate({{0, 0}, {0.8, 2.0}, {2.9, 2.9}, {3.5, 4.6}});
    Potential p = Potential::from_function(ts, [](double x) { return 0.5 * std::sin(x); }, 65);
    ForwardOptions fopt;
    fopt.count = 25;
    SpectralData sd = forward_solve(ts, p, fopt);
    CHECK(sd.invariant_violations().empty());
    CHECK(sd.wronskian_drift_max < 1e-10);
}

TEST_CASE("weyl function closed form and monotonicity") {
    TimeScale ts = unit_segment();
    Potential p = Potential::zero_model(ts, 65);
    ForwardOptions fopt;
    fopt.count = 10;
    WeylData w = weyl_direct(ts, p, fopt);
    SECTION("M(lambda) = -tan(rho pi)/rho off the poles") {
        for (double lam : {-9.0, -2.0, 0.1, 0.6, 1.4}) {
            double rho = lam >= 0 ? std::sqrt(lam) : 0;
            double exact = lam >= 0 ? -std::tan(rho * pi) / rho
                                    : -std::tanh(std::sqrt(-lam) * pi) / std::sqrt(-lam);
            if (lam == 0.0) exact = -pi;
            CHECK(w(lam) == Approx(exact).margin(1e-8));
        }
    }
    SECTION("poles and residues are the j=1 spectral data") {
        REQUIRE(w.poles.size() == 10);
        CHECK(w.poles[0] == Approx(0.25).margin(1e-9));
        CHECK(w.residues[0] == Approx(2 / pi).margin(1e-9));
        CHECK(w.c0 == 0.0);
    }
}

TEST_CASE("weyl limit at -infinity for a leading point") {
    TimeScale ts = chain({0, 1, 2});
    Potential p = point_potential(ts, {0.0});
    ForwardOptions fopt;
    WeylData w = weyl_direct(ts, p, fopt);
    CHECK(w.c0 == Approx(-1.0));
    // M^{-1} -> -1/(a_2 - a_1) and M^{-1} increasing on (-inf, lambda_{10})
    double prev = -std::numeric_limits<double>::infinity();
    bool monotone = true;
    for (double lam = -200.0; lam < 1.95; lam += 0.35) {
        double minv = 1.0 / w(lam);
        monotone = monotone && (minv > prev);
        prev = minv;
    }
    CHECK(monotone);
    CHECK(1.0 / w(-1e7) == Approx(-1.0).epsilon(1e-3));
}

TEST_CASE("asymptotic constants") {
    SECTION("single segment, empty sums") {
        TimeScale ts = unit_segment();
        Potential p = Potential::zero_model(ts, 33);
        AsymptoticConstants ac = asymptotic_constants(ts, p);
        CHECK(ac.c[0] == Approx(0.0).margin(1e-15));
        CHECK(ac.z[0] == Approx(0.0).margin(1e-15));
        CHECK(ac.gamma1 == Approx(pi));
        CHECK(ac.commensurable);
        CHECK(ac.D == Approx(pi));
        CHECK(ac.x[0] == 1);
    }
    SECTION("gap terms enter c_k") {
        // segment [0,pi], isolated point at pi+1, segment [pi+2, 2pi+2]
        TimeScale ts = TimeScale::validate({{0, pi}, {pi + 1, pi + 1}, {pi + 2, 2 * pi + 2}});
        Potential p = Potential::from_function(ts, [](double) { return 2.0; }, 33);
        AsymptoticConstants ac = asymptotic_constants(ts, p);
        // c_1 = (1/2) integral q + 1/(a_2 - b_1) = pi + 1
        CHECK(ac.c[0] == Approx(pi + 1.0).epsilon(1e-9));
        // z_1 = c_1 / pi (no predecessor gap)
        CHECK(ac.z[0] == Approx((pi + 1.0) / pi).epsilon(1e-9));
        // c_2 = pi (no following gap), z_2 = (pi + 1/(a_3 - b_2)) / pi
        CHECK(ac.c[1] == Approx(pi).epsilon(1e-9));
        CHECK(ac.z[1] == Approx((pi + 1.0) / pi).epsilon(1e-9));
    }
    SECTION("equal lengths d = (pi, pi)") {
        TimeScale ts = TimeScale::validate({{0, pi}, {4, 4 + pi}});
        Potential p = Potential::zero_model(ts, 33);
        AsymptoticConstants ac = asymptotic_constants(ts, p);
        REQUIRE(ac.commensurable);
        CHECK(ac.r == Approx(pi));
        CHECK(ac.x[0] == 1);
        CHECK(ac.x[1] == 1);
        CHECK(ac.D == Approx(pi));
        CHECK(ac.ring_radius(0) == 0.0);
        CHECK(ac.ring_radius(1) > 0.0);
        CHECK(ac.ring_radius(2) > ac.ring_radius(1));
    }
    SECTION("incommensurable lengths flagged") {
        TimeScale ts = TimeScale::validate({{0, 1}, {2, 2 + pi}});
        Potential p = Potential::zero_model(ts, 33);
        AsymptoticConstants ac = asymptotic_constants(ts, p);
        CHECK_FALSE(ac.commensurable);
        CHECK_FALSE(ac.note.empty());
    }
}

TEST_CASE("branch residuals on [0, pi] with zero and zero-mean potentials") {
    TimeScale ts = unit_segment();
    SECTION("q = 0: residuals are essentially zero") {
        Potential p = Potential::zero_model(ts, 65);
        ForwardOptions fopt;
        fopt.count = 40;
        SpectralData sd = forward_solve(ts, p, fopt);
        BranchResidualReport rep = branch_check(ts, sd, 10, 40);
        REQUIRE_FALSE(rep.branches.empty());
        for (const auto& br : rep.branches) CHECK(br.sup_tail < 1e-6);
    }
    SECTION("q = cos: z_1 = 0, bounded residuals with no growth") {
        Potential p = Potential::from_function(ts, [](double x) { return std::cos(x); }, 129);
        AsymptoticConstants ac = asymptotic_constants(ts, p);
        CHECK(ac.z[0] == Approx(0.0).margin(1e-9));
        ForwardOptions fopt;
        fopt.count = 40;
        SpectralData sd = forward_solve(ts, p, fopt);
        BranchResidualReport rep = branch_check(ts, sd, 10, 40);
        for (const auto& br : rep.branches) {
            CHECK(br.sup_tail < 1.0);
            CHECK(br.trend_slope < 0.01);
        }
    }
}

TEST_CASE("two equal segments: two branches matching the main term") {
    TimeScale ts = TimeScale::validate({{0, pi}, {4, 4 + pi}});
    Potential p = Potential::zero_model(ts, 33);
    ForwardOptions fopt;
    fopt.count = 30;
    SpectralData sd = forward_solve(ts, p, fopt);
    CHECK(sd.invariant_violations().empty());
    BranchResidualReport rep = branch_check(ts, sd, 5, 15);
    int populated = 0;
    for (const auto& br : rep.branches)
        if (br.n.size() >= 5) ++populated;
    CHECK(populated >= 2);
}

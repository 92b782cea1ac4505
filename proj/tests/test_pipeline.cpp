#include <catch2/catch_amalgamated.hpp>

#include "slts/oracle.hpp"
#include "slts/pipeline.hpp"

#include <random>

using namespace slts;
using Catch::Approx;

namespace {
const double pi = kPi;

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

TEST_CASE("algorithm 2 on exact rational data") {
    SECTION("three points, a2 = b2") {
        for (double c : {-1.3, 0.0, 0.4, 2.0}) {
            TimeScale ts = chain({0, 1, 2});
            Potential p = point_potential(ts, {c});
            WeylData w = weyl_direct(ts, p);
            PointRecovery pr = recover_point_q(ts, w);
            CHECK(pr.q_value == Approx(c).margin(1e-8));
            CHECK(pr.next_is_point);
        }
    }
    SECTION("four points, arbitrary values") {
        std::mt19937_64 rng(99);
        std::uniform_real_distribution<double> u(-2, 2);
        for (int trial = 0; trial < 6; ++trial) {
            std::vector<double> pts = {0.0};
            for (int i = 0; i < 3; ++i) pts.push_back(pts.back() + 0.4 + 2.0 * (rng() % 1000) / 1000.0);
            TimeScale ts = chain(pts);
            double q0 = u(rng), q1 = u(rng);
            Potential p = point_potential(ts, {q0, q1});
            WeylData w = weyl_direct(ts, p);
            PointRecovery pr = recover_point_q(ts, w);
            CHECK(pr.q_value == Approx(q0).margin(1e-8));
        }
    }
    SECTION("mixed case: point then segment, forward-generated data") {
        TimeScale ts = TimeScale::validate({{0, 0}, {1, 1 + pi}});
        Potential p = Potential::from_function(ts, [](double x) { return 0.4 * std::sin(x); }, 65);
        ForwardOptions fopt;
        fopt.count = 40;
        WeylData w = weyl_direct(ts, p, fopt);
        PointRecovery pr = recover_point_q(ts, w);
        CHECK_FALSE(pr.next_is_point);
        CHECK(pr.q_value == Approx(p.point_value(1)).margin(1e-2));
        // sqrt-term coefficient approximates a2 - a1
        CHECK(pr.second_coeff == Approx(1.0).epsilon(0.2));
    }
    SECTION("precondition violations") {
        TimeScale seg = TimeScale::validate({{0.0, pi}});
        Potential p = Potential::zero_model(seg, 65);
        WeylData w = weyl_direct(seg, p);
        CHECK_THROWS_AS(recover_point_q(seg, w), ModelMismatchError);
    }
}

TEST_CASE("peeling") {
    SECTION("refuses without a tail") {
        TimeScale seg = TimeScale::validate({{0.0, pi}});
        Potential p = Potential::zero_model(seg, 65);
        WeylData w = weyl_direct(seg, p);
        HeadData hd;
        hd.is_point = false;
        hd.samples = p.segment(1).samples;
        CHECK_THROWS_AS(peel(seg, hd, w), ModelMismatchError);
    }
    SECTION("true head q reproduces the tail spectral data") {
        TimeScale ts = TimeScale::validate({{0.0, pi}, {pi + 1, pi + 1 + pi / 2}});
        Potential p = Potential::from_function(
            ts, [](double x) { return 0.5 * std::cos(2 * x) + 0.2; }, 65);
        ForwardOptions fopt;
        fopt.count = 160;
        WeylData w = weyl_direct(ts, p, fopt);
        HeadData hd;
        hd.is_point = false;
        hd.samples = p.segment(1).samples;
        InverseOptions opt;
        opt.tail_n_max = 15;
        WeylData tail = peel(ts, hd, w, opt);
        REQUIRE(tail.poles.size() >= 15);
        // oracle: forward eigenvalues of L_1(T_2)
        TimeScale t2 = ts.tail(2);
        Potential p2 = p.restrict_to_tail(ts, 2, t2);
        EigenOptions eo;
        eo.count = 15;
        std::vector<double> exact = eigenvalues(t2, p2, 1, eo);
        std::vector<double> exact_w = weight_numbers(t2, p2, exact, eo);
        for (int n = 0; n < 15; ++n) {
            CHECK(tail.poles[size_t(n)] ==
                  Approx(exact[size_t(n)]).margin(1e-6 * (1 + std::abs(exact[size_t(n)]))));
            CHECK(tail.residues[size_t(n)] > 0.0);
            CHECK(tail.residues[size_t(n)] == Approx(exact_w[size_t(n)]).epsilon(2e-2));
        }
        // the peeled evaluator matches the direct tail Weyl function off poles
        WeylData w2 = weyl_direct(t2, p2, fopt);
        for (double lam : {-20.0, -5.0, -1.0})
            CHECK(tail(lam) == Approx(w2(lam)).epsilon(1e-4));
    }
    SECTION("point head peel against the discrete oracle") {
        TimeScale ts = chain({0, 1, 2, 3, 4.2});
        Potential p = point_potential(ts, {0.7, -0.4, 1.1});
        WeylData w = weyl_direct(ts, p);
        HeadData hd;
        hd.is_point = true;
        hd.point_value = 0.7;
        WeylData tail = peel(ts, hd, w);
        TimeScale t2 = ts.tail(2);
        Potential p2 = p.restrict_to_tail(ts, 2, t2);
        DiscreteOracle o = discrete_solve(t2, p2);
        REQUIRE(tail.poles.size() == o.lambda1.size());
        for (size_t n = 0; n < tail.poles.size(); ++n) {
            CHECK(tail.poles[n] == Approx(o.lambda1[n]).margin(1e-8));
            CHECK(tail.residues[n] == Approx(o.weights[n]).margin(1e-7));
        }
    }
}

TEST_CASE("run_inverse") {
    SECTION("fixed point on a single segment") {
        TimeScale ts = TimeScale::validate({{0.0, pi}});
        Potential p0 = Potential::zero_model(ts, 129);
        EigenOptions eo;
        eo.count = 40;
        SpectralInput in;
        in.lambda1 = eigenvalues(ts, p0, 1, eo);
        in.weights = weight_numbers(ts, p0, in.lambda1, eo);
        in.n_max = 40;
        InverseOptions opt;
        opt.n_max = 40;
        opt.grid = 513;
        InverseRunResult res = run_inverse(ts, in, p0, opt);
        CHECK(distance(res.recovered, Potential::zero_model(ts, 513)).sup < 1e-6);
    }
    SECTION("pure-discrete scale matches the oracle") {
        TimeScale ts = chain({0, 1.1, 2.3, 3.1});
        Potential ptrue = point_potential(ts, {0.8, -0.5});
        DiscreteOracle o = discrete_solve(ts, ptrue);
        SpectralInput in;
        in.lambda1 = o.lambda1;
        in.weights = o.weights;
        Potential p0 = point_potential(ts, {0.0, 0.0});
        InverseRunResult res = run_inverse(ts, in, p0);
        CHECK(res.recovered.point_value(1) == Approx(0.8).margin(1e-8));
        CHECK(res.recovered.point_value(2) == Approx(-0.5).margin(1e-8));
    }
}

TEST_CASE("spectra to weights") {
    SECTION("free segment: truncation-limited 2/pi") {
        TimeScale ts = TimeScale::validate({{0.0, pi}});
        Potential p0 = Potential::zero_model(ts, 65);
        EigenOptions eo;
        eo.count = 200;
        std::vector<double> l0 = eigenvalues(ts, p0, 0, eo);
        std::vector<double> l1 = eigenvalues(ts, p0, 1, eo);
        AsymptoticConstants ac = asymptotic_constants(ts, p0);
        std::vector<double> w = spectra_to_weights(ts, l0, l1, ac);
        for (size_t n = 0; n < 20; ++n) CHECK(w[n] == Approx(2 / pi).epsilon(2e-2));
    }
    SECTION("discrete case is exact") {
        TimeScale ts = chain({0, 0.9, 2.0, 3.2, 4.0});
        Potential p = point_potential(ts, {0.5, -0.7, 1.2});
        DiscreteOracle o = discrete_solve(ts, p);
        AsymptoticConstants ac = asymptotic_constants(ts, p);
        std::vector<double> w = spectra_to_weights(ts, o.lambda0, o.lambda1, ac);
        for (size_t n = 0; n < w.size(); ++n)
            CHECK(w[n] == Approx(o.weights[n]).margin(1e-10 * (1 + o.weights[n])));
    }
    SECTION("consistency with direct weights on a mixed scale") {
        TimeScale ts = TimeScale::validate({{0, 0}, {1, 1 + pi}});
        Potential p = Potential::from_function(ts, [](double x) { return 0.3 * std::cos(x); }, 65);
        EigenOptions eo;
        eo.count = 120;
        std::vector<double> l0 = eigenvalues(ts, p, 0, eo);
        std::vector<double> l1 = eigenvalues(ts, p, 1, eo);
        std::vector<double> wd = weight_numbers(ts, p, l1, eo);
        AsymptoticConstants ac = asymptotic_constants(ts, p);
        std::vector<double> wh = spectra_to_weights(ts, l0, l1, ac);
        for (size_t n = 0; n < 10; ++n) CHECK(wh[n] == Approx(wd[n]).epsilon(5e-2));
    }
}

#include <catch2/catch_amalgamated.hpp>

#include "slts/closed_form.hpp"
#include "slts/ode.hpp"

#include <cmath>

using namespace slts;
using Catch::Approx;

TEST_CASE("dopri5 integrates the harmonic oscillator to tight tolerance") {
    auto rhs = [](double, const std::array<double, 2>& y, std::array<double, 2>& dy) {
        dy[0] = y[1];
        dy[1] = -y[0];
    };
    std::array<double, 2> y = {1.0, 0.0};
    Dopri5<2>::Options opt;
    Dopri5<2>::integrate(rhs, 0.0, 10.0, y, opt);
    CHECK(y[0] == Approx(std::cos(10.0)).margin(1e-10));
    CHECK(y[1] == Approx(-std::sin(10.0)).margin(1e-10));
}

TEST_CASE("dense output matches the solution inside steps") {
    auto rhs = [](double t, const std::array<double, 1>& y, std::array<double, 1>& dy) {
        dy[0] = std::cos(t) * y[0];
    };
    std::array<double, 1> y = {1.0};
    Dopri5<1>::Options opt;
    std::vector<Dopri5<1>::DenseSegment> dense;
    Dopri5<1>::integrate(rhs, 0.0, 6.0, y, opt, &dense);
    for (double t : {0.1, 0.77, 1.9, 3.14, 5.5}) {
        double exact = std::exp(std::sin(t));
        CHECK(Dopri5<1>::eval_dense(dense, t)[0] == Approx(exact).margin(1e-9));
    }
}

TEST_CASE("closed-form constant-q propagation agrees with integration") {
    for (double lambda : {-9.0, -0.3, 0.0, 2.0e-14, 4.0, 37.0}) {
        double q0 = 0.6;
        auto rhs = [&](double, const std::array<double, 4>& y, std::array<double, 4>& dy) {
            dy[0] = y[1];
            dy[1] = (q0 - lambda) * y[0];
            dy[2] = y[3];
            dy[3] = (q0 - lambda) * y[2] - y[0];
        };
        std::array<double, 4> y = {0.3, -1.1, 0.02, 0.5};
        Dopri5<4>::Options opt;
        Dopri5<4>::integrate(rhs, 0.0, 1.7, y, opt);
        ConstQStep s = const_q_propagate(q0, lambda, 1.7, 0.3, -1.1, 0.02, 0.5);
        CHECK(s.y == Approx(y[0]).margin(1e-9));
        CHECK(s.yp == Approx(y[1]).margin(1e-9));
        CHECK(s.dy == Approx(y[2]).margin(1e-9));
        CHECK(s.dyp == Approx(y[3]).margin(1e-9));
    }
}

TEST_CASE("sinm family is stable through the lambda -> 0 limit") {
    CHECK(sinm(0.0, 2.0) == Approx(2.0));
    CHECK(cosm(0.0, 2.0) == Approx(1.0));
    CHECK(sinm(1e-13, 3.0) == Approx(3.0).epsilon(1e-10));
    CHECK(dsinm(1e-13, 1.0) == Approx(-1.0 / 6.0).epsilon(1e-8));
    // both sides of the series/direct switch agree with the trig closed form
    for (double x : {0.5, 1.0, 2.0}) {
        for (double w : {0.9e-6, 1.1e-6}) {
            double mu = w / (x * x);
            CHECK(sinm(mu, x) == Approx(std::sin(std::sqrt(mu) * x) / std::sqrt(mu)).epsilon(1e-12));
            CHECK(cosm(mu, x) == Approx(std::cos(std::sqrt(mu) * x)).epsilon(1e-12));
            CHECK(sinm(-mu, x) == Approx(std::sinh(std::sqrt(mu) * x) / std::sqrt(mu)).epsilon(1e-12));
        }
    }
}

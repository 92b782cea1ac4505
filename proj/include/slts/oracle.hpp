#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <vector>

#include "slts/asymptotics.hpp"
#include "slts/errors.hpp"
#include "slts/potential.hpp"
#include "slts/time_scale.hpp"

namespace slts {

// Polynomial in lambda, coefficients ascending.
using Poly = std::vector<double>;

namespace polyop {

inline double eval(const Poly& p, double x) {
    double acc = 0.0;
    for (size_t i = p.size(); i-- > 0;) acc = acc * x + p[i];
    return acc;
}

inline Poly derivative(const Poly& p) {
    Poly d;
    for (size_t i = 1; i < p.size(); ++i) d.push_back(p[i] * static_cast<double>(i));
    if (d.empty()) d.push_back(0.0);
    return d;
}

inline Poly add(const Poly& a, const Poly& b) {
    Poly out(std::max(a.size(), b.size()), 0.0);
    for (size_t i = 0; i < a.size(); ++i) out[i] += a[i];
    for (size_t i = 0; i < b.size(); ++i) out[i] += b[i];
    return out;
}

inline Poly scale(const Poly& a, double s) {
    Poly out = a;
    for (double& c : out) c *= s;
    return out;
}

// multiply by (q - lambda)
inline Poly mul_qml(const Poly& a, double q) {
    Poly out(a.size() + 1, 0.0);
    for (size_t i = 0; i < a.size(); ++i) {
        out[i] += q * a[i];
        out[i + 1] -= a[i];
    }
    return out;
}

inline void trim(Poly& p) {
    while (p.size() > 1 && p.back() == 0.0) p.pop_back();
}

// Real roots via companion matrix, polished by Newton on the polynomial.
inline std::vector<double> real_roots(const Poly& p_in) {
    Poly p = p_in;
    trim(p);
    int deg = static_cast<int>(p.size()) - 1;
    if (deg <= 0) return {};
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(deg, deg);
    for (int i = 0; i < deg; ++i) comp(i, deg - 1) = -p[static_cast<size_t>(i)] / p.back();
    for (int i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
    std::vector<double> roots;
    Poly dp = derivative(p);
    for (int i = 0; i < deg; ++i) {
        auto ev = es.eigenvalues()(i);
        if (std::abs(ev.imag()) > 1e-8 * (1.0 + std::abs(ev.real()))) continue;
        double x = ev.real();
        for (int it = 0; it < 4; ++it) {
            double fv = eval(p, x), dv = eval(dp, x);
            if (dv == 0.0) break;
            x -= fv / dv;
        }
        roots.push_back(x);
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

} // namespace polyop

// Closed-recurrence reference for pure-discrete scales (N = 0): characteristic
// polynomials of degree M-2, their roots, the weight numbers, plus the
// generalized pencil A v = lambda B v assembled from the same recurrence.
struct DiscreteOracle {
    Poly theta0, theta1;
    std::vector<double> lambda0, lambda1, weights;
    std::vector<double> pencil_lambda0, pencil_lambda1;
    Eigen::MatrixXd A0, A1, B;  // pencils for j = 0, 1
};

namespace detail {

inline std::pair<Poly, Poly> discrete_theta(const TimeScale& ts, const Potential& p, Poly y,
                                            Poly yd) {
    int nm = ts.block_count();
    for (int l = 1; l <= nm - 2; ++l) {
        double g = ts.gap(l);
        double q = p.point_value(l);
        Poly ynew = polyop::add(y, polyop::scale(yd, g));
        Poly ydnew = polyop::add(
            polyop::scale(polyop::mul_qml(y, q), g),
            polyop::add(yd, polyop::scale(polyop::mul_qml(yd, q), g * g)));
        y = std::move(ynew);
        yd = std::move(ydnew);
    }
    double g = ts.gap(nm - 1);
    Poly yfinal = polyop::add(y, polyop::scale(yd, g));
    polyop::trim(yfinal);
    return {yfinal, yd};
}

} // namespace detail

inline DiscreteOracle discrete_solve(const TimeScale& ts, const Potential& p) {
    if (ts.num_segments() != 0) throw DegenerateError("discrete oracle needs N = 0");
    int m = ts.num_points();
    if (m < 3) throw DegenerateError("discrete oracle needs M >= 3");
    DiscreteOracle out;
    out.theta1 = detail::discrete_theta(ts, p, {1.0}, {0.0}).first;  // C
    out.theta0 = detail::discrete_theta(ts, p, {0.0}, {1.0}).first;  // S
    out.lambda0 = polyop::real_roots(out.theta0);
    out.lambda1 = polyop::real_roots(out.theta1);
    if (static_cast<int>(out.lambda0.size()) != m - 2 ||
        static_cast<int>(out.lambda1.size()) != m - 2)
        throw DegenerateError("discrete characteristic polynomial has missing real roots");

    Poly dtheta1 = polyop::derivative(out.theta1);
    for (double lam : out.lambda1)
        out.weights.push_back(-polyop::eval(out.theta0, lam) / polyop::eval(dtheta1, lam));

    // generalized pencil over the interior values y_2..y_{M-1}
    int n = m - 2;
    out.B = Eigen::MatrixXd::Zero(n, n);
    for (int j = 0; j <= 1; ++j) {
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        for (int i = 1; i <= n; ++i) {
            double hi = ts.gap(i);
            double hn = ts.gap(i + 1);
            double qi = p.point_value(i);
            double diag = 1.0 / hi + 1.0 / hn + hi * qi;
            if (i == 1 && j == 1) diag = 1.0 / hn + hi * qi;  // y^Delta(min) = 0 folds y_1 = y_2
            A(i - 1, i - 1) = diag;
            if (i >= 2) A(i - 1, i - 2) = -1.0 / hi;
            if (i <= n - 1) A(i - 1, i) = -1.0 / hn;
            out.B(i - 1, i - 1) = hi;
        }
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(A, out.B);
        std::vector<double> ev(ges.eigenvalues().data(), ges.eigenvalues().data() + n);
        std::sort(ev.begin(), ev.end());
        if (j == 0) {
            out.A0 = A;
            out.pencil_lambda0 = ev;
        } else {
            out.A1 = A;
            out.pencil_lambda1 = ev;
        }
    }
    return out;
}

// Spec-facing wrapper: spectrum/weights/characteristic coefficients for one
// boundary condition index.
struct DiscreteSolveResult {
    std::vector<double> spectrum;
    std::vector<double> weights;
    Poly theta_coeffs;
};

inline DiscreteSolveResult discrete_solve(const TimeScale& ts, const Potential& p, int j) {
    DiscreteOracle o = discrete_solve(ts, p);
    DiscreteSolveResult r;
    r.spectrum = (j == 0) ? o.lambda0 : o.lambda1;
    r.weights = o.weights;
    r.theta_coeffs = (j == 0) ? o.theta0 : o.theta1;
    return r;
}

// Closed-form spectra and weights for a single segment with q = 0.
struct ClassicalReference {
    std::vector<double> lambda0, lambda1;
    double weight = 0.0;  // alpha_n = 2/d for every n
};

inline ClassicalReference classical_reference(double d, int count) {
    ClassicalReference r;
    r.weight = 2.0 / d;
    for (int n = 1; n <= count; ++n) {
        double r0 = n * kPi / d;
        double r1 = (n - 0.5) * kPi / d;
        r.lambda0.push_back(r0 * r0);
        r.lambda1.push_back(r1 * r1);
    }
    return r;
}

} // namespace slts

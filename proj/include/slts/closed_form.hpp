#pragma once

#include <cmath>

namespace slts {

// Stable evaluations of the constant-coefficient solution basis
//   cosm(mu, x) = cos(sqrt(mu) x)        (cosh for mu < 0)
//   sinm(mu, x) = sin(sqrt(mu) x)/sqrt(mu)  (sinh variant for mu < 0, -> x at mu = 0)
// together with their mu-derivatives. These solve y'' = -mu y.

inline double cosm(double mu, double x) {
    double w = mu * x * x;
    if (std::abs(w) < 1e-6)
        return 1.0 - w / 2.0 + w * w / 24.0 - w * w * w / 720.0;
    if (mu > 0) return std::cos(std::sqrt(mu) * x);
    return std::cosh(std::sqrt(-mu) * x);
}

inline double sinm(double mu, double x) {
    double w = mu * x * x;
    if (std::abs(w) < 1e-6)
        return x * (1.0 - w / 6.0 + w * w / 120.0 - w * w * w / 5040.0);
    if (mu > 0) return std::sin(std::sqrt(mu) * x) / std::sqrt(mu);
    double s = std::sqrt(-mu);
    return std::sinh(s * x) / s;
}

// d/dmu cosm = -(x/2) sinm
inline double dcosm(double mu, double x) { return -0.5 * x * sinm(mu, x); }

// d/dmu sinm = (x cosm - sinm) / (2 mu), with a series fallback near mu = 0.
inline double dsinm(double mu, double x) {
    double w = mu * x * x;
    if (std::abs(w) < 1e-3) {
        double x3 = x * x * x;
        return x3 * (-1.0 / 6.0 + w / 60.0 - w * w / 1680.0 + w * w * w / 75600.0);
    }
    return (x * cosm(mu, x) - sinm(mu, x)) / (2.0 * mu);
}

// Propagates (y, y', dly, dly') across [0, x] for y'' = (q0 - lambda) y with
// constant q0, where dl* are the lambda-derivatives.
struct ConstQStep {
    double y, yp, dy, dyp;
};

inline ConstQStep const_q_propagate(double q0, double lambda, double x, double y0, double yp0,
                                    double dy0, double dyp0) {
    double mu = lambda - q0;  // y'' = -mu y
    double cm = cosm(mu, x), sm = sinm(mu, x);
    double dcm = dcosm(mu, x), dsm = dsinm(mu, x);
    ConstQStep out;
    out.y = y0 * cm + yp0 * sm;
    out.yp = -mu * y0 * sm + yp0 * cm;
    out.dy = dy0 * cm + dyp0 * sm + y0 * dcm + yp0 * dsm;
    out.dyp = -y0 * sm - mu * (dy0 * sm + y0 * dsm) + dyp0 * cm + yp0 * dcm;
    return out;
}

} // namespace slts

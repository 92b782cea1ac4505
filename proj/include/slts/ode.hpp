#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "slts/errors.hpp"

namespace slts {

// Dormand-Prince 5(4) embedded pair with the standard 4th-order continuous
// extension. Fixed compile-time dimension; the right-hand side is any callable
// f(t, y, dydt).
template <int N>
class Dopri5 {
public:
    using Vec = std::array<double, N>;

    struct Options {
        double rtol = 1e-12;
        double atol = 1e-12;
        long max_steps = 4000000;
    };

    struct DenseSegment {
        double t0 = 0.0, h = 0.0;
        std::array<Vec, 5> rcont{};
    };

    template <class F>
    static void integrate(F&& f, double t0, double t1, Vec& y, const Options& opt,
                          std::vector<DenseSegment>* dense = nullptr) {
        if (t1 == t0) return;
        const double dir = t1 > t0 ? 1.0 : -1.0;
        double t = t0;
        double h = (t1 - t0);  // first trial step: the whole interval
        Vec k1, k2, k3, k4, k5, k6, k7, ytmp, ynew;
        f(t, y, k1);
        long steps = 0;
        while (dir * (t1 - t) > 0) {
            if (++steps > opt.max_steps) throw IntegrationError("step budget exhausted");
            if (dir * (t + h) > dir * t1) h = t1 - t;
            if (std::abs(h) < 1e-14 * (std::abs(t) + 1.0))
                throw IntegrationError("step size underflow");

            stage(f, t, y, h, k1, k2, k3, k4, k5, k6, k7, ytmp, ynew);

            double err = 0.0;
            for (int i = 0; i < N; ++i) {
                double sk = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
                double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                                e6 * k6[i] + e7 * k7[i]);
                err += (e / sk) * (e / sk);
            }
            err = std::sqrt(err / N);

            if (err <= 1.0) {
                if (dense) {
                    DenseSegment seg;
                    seg.t0 = t;
                    seg.h = h;
                    for (int i = 0; i < N; ++i) {
                        double ydiff = ynew[i] - y[i];
                        double bspl = h * k1[i] - ydiff;
                        seg.rcont[0][i] = y[i];
                        seg.rcont[1][i] = ydiff;
                        seg.rcont[2][i] = bspl;
                        seg.rcont[3][i] = ydiff - h * k7[i] - bspl;
                        seg.rcont[4][i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] +
                                               d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
                    }
                    dense->push_back(seg);
                }
                t += h;
                y = ynew;
                k1 = k7;  // FSAL
                double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.2);
                h *= std::clamp(fac, 0.2, 5.0);
            } else {
                double fac = 0.9 * std::pow(err, -0.2);
                h *= std::clamp(fac, 0.1, 0.9);
            }
        }
    }

    static Vec eval_dense(const std::vector<DenseSegment>& segs, double t) {
        const DenseSegment& s = locate(segs, t);
        double th = (t - s.t0) / s.h;
        double th1 = 1.0 - th;
        Vec out;
        for (int i = 0; i < N; ++i)
            out[i] = s.rcont[0][i] +
                     th * (s.rcont[1][i] +
                           th1 * (s.rcont[2][i] +
                                  th * (s.rcont[3][i] + th1 * s.rcont[4][i])));
        return out;
    }

private:
    static const DenseSegment& locate(const std::vector<DenseSegment>& segs, double t) {
        if (segs.empty()) throw IntegrationError("no dense output recorded");
        size_t lo = 0, hi = segs.size() - 1;
        while (lo < hi) {
            size_t mid = (lo + hi + 1) / 2;
            if (segs[mid].t0 <= t) lo = mid;
            else hi = mid - 1;
        }
        return segs[lo];
    }

    template <class F>
    static void stage(F&& f, double t, const Vec& y, double h, const Vec& k1, Vec& k2, Vec& k3,
                      Vec& k4, Vec& k5, Vec& k6, Vec& k7, Vec& ytmp, Vec& ynew) {
        for (int i = 0; i < N; ++i) ytmp[i] = y[i] + h * a21 * k1[i];
        f(t + c2 * h, ytmp, k2);
        for (int i = 0; i < N; ++i) ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
        f(t + c3 * h, ytmp, k3);
        for (int i = 0; i < N; ++i) ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        f(t + c4 * h, ytmp, k4);
        for (int i = 0; i < N; ++i)
            ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        f(t + c5 * h, ytmp, k5);
        for (int i = 0; i < N; ++i)
            ytmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                                  a65 * k5[i]);
        f(t + h, ytmp, k6);
        for (int i = 0; i < N; ++i)
            ynew[i] = y[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] +
                                  a76 * k6[i]);
        f(t + h, ynew, k7);
    }

    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                            a75 = -2187.0 / 6784, a76 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
    static constexpr double d1 = -12715105075.0 / 11282082432.0,
                            d3 = 87487479700.0 / 32700410799.0,
                            d4 = -10690763975.0 / 1880347072.0,
                            d5 = 701980252875.0 / 199316789632.0,
                            d6 = -1453857185.0 / 822651844.0,
                            d7 = 69997945.0 / 29380423.0;
};

} // namespace slts

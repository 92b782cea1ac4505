#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "slts/asymptotics.hpp"
#include "slts/errors.hpp"
#include "slts/transfer.hpp"

namespace slts {

namespace detail {

// log-magnitude plus phase accumulator for products that overflow doubles
struct LogVal {
    double mag = 0.0;    // log |value|
    double phase = 0.0;  // arg(value), accumulated exactly in multiples of pi/2
    void mul_real(double v) {
        mag += std::log(std::abs(v));
        if (v < 0) phase += kPi;
    }
};

inline double log_sinh(double x) { return x + std::log1p(-std::exp(-2 * x)) - std::log(2.0); }
inline double log_cosh(double x) { return x + std::log1p(std::exp(-2 * x)) - std::log(2.0); }

// log of the leading monomial coeff * lambda^deg at lambda = -t
inline void mul_monomial(LogVal& lv, const LeadingTerm& lt, double log_t) {
    lv.mag += std::log(std::abs(lt.coeff)) + lt.degree * log_t;
    lv.phase += kPi * lt.degree + (lt.coeff < 0 ? kPi : 0.0);
}

// f_{k,idx}(rho) at rho = i sqrt(t): sinh/cosh in log space
inline void mul_trig(LogVal& lv, int delta_k, int idx, double d, double sqrt_t) {
    bool is_sin = (delta_k == 1) == (idx == 0);
    double s = d * sqrt_t;
    if (is_sin) {
        lv.mag += log_sinh(s);
        lv.phase += kPi / 2;  // sin(i s) = i sinh(s)
    } else {
        lv.mag += log_cosh(s);
    }
}

// log F_j(-t) built from the leading beta monomials; the dropped lower-order
// parts are O(1/rho) relative and vanish in the Hadamard limit.
inline LogVal log_Fj(const TimeScale& ts, const AsymptoticConstants& ac, int j, double t) {
    LogVal lv;
    double log_t = std::log(t);
    double sqrt_t = std::sqrt(t);
    int N = ac.N;
    int mu0 = ac.mu0, mu1 = ac.mu1;
    if ((j * (1 - ac.delta[0]) * (1 - mu0)) % 2 == 1) lv.phase += kPi;
    int pw = mu1 + j * (1 - mu0) - 1;
    lv.mag += pw * 0.5 * log_t;
    lv.phase += pw * kPi / 2;  // rho = i sqrt(t)
    for (int k = 1 - mu0; k <= N - 1; ++k) {
        int col = (k == 0) ? 2 - j : 2;
        mul_monomial(lv, beta_leading_term(ts, k + 1, 2, col), log_t);
    }
    if (ac.lk[static_cast<size_t>(N - 1)] < ts.block_count())
        mul_monomial(lv, beta_leading_term(ts, N + 1, 1, 1 + mu1), log_t);
    for (int k = 2; k <= N; ++k)
        mul_trig(lv, ac.delta[static_cast<size_t>(k - 1)], 0, ac.d[static_cast<size_t>(k - 1)],
                 sqrt_t);
    mul_trig(lv, ac.delta[0], (1 - mu0) * j, ac.d[0], sqrt_t);
    return lv;
}

} // namespace detail

// Truncated Hadamard product for Theta_j rebuilt from a spectrum: supplied zeros
// verbatim, per-branch model zeros beyond them, and the constant C_j from the
// limit of F_j / p_j along the negative real axis.
class HadamardTheta {
public:
    struct BranchTail {
        double d = 0.0, c = 0.0, shift = 0.0, z = 0.0;
        int n_start = 0, n_explicit = 0;
    };

    int j = 0;
    double C = 0.0;
    double C_error = 0.0;
    int zero_multiplicity = 0;
    std::vector<double> zeros;  // nonzero supplied zeros
    std::vector<BranchTail> tails;

    double log_abs_p(double lambda, double* sign_out) const {
        double mag = 0.0, sign = 1.0;
        if (zero_multiplicity > 0) {
            mag += zero_multiplicity * std::log(std::abs(lambda));
            if (lambda < 0 && zero_multiplicity % 2 == 1) sign = -sign;
        }
        for (double zn : zeros) {
            double f = 1.0 - lambda / zn;
            mag += std::log(std::abs(f));
            if (f < 0) sign = -sign;
        }
        for (const BranchTail& bt : tails) {
            for (int n = bt.n_start; n <= bt.n_explicit; ++n) {
                double m = n - bt.shift;
                double rho = bt.c * m + bt.z / m;
                double f = 1.0 - lambda / (rho * rho);
                mag += std::log(std::abs(f));
                if (f < 0) sign = -sign;
            }
            double A = bt.n_explicit + 0.5 - bt.shift;
            if (lambda <= 0) {
                double v = std::sqrt(-lambda) / bt.c;
                if (v > 0)
                    mag += (-A * std::log1p(v * v / (A * A)) + 2 * v * std::atan(v / A)) * 1.0;
            } else {
                double w = std::sqrt(lambda) / bt.c;
                if (w >= A) throw GridError("evaluation point beyond the modeled tail");
                mag += -(A * std::log1p(-w * w / (A * A)) + w * std::log((A + w) / (A - w)));
            }
        }
        if (sign_out) *sign_out = sign;
        return mag;
    }

    // Theta_j(lambda) = C p_j(lambda) with the model-completed product.
    double operator()(double lambda) const {
        double sign = 1.0;
        double mag = log_abs_p(lambda, &sign);
        return C * sign * std::exp(mag);
    }

    // derivative by symmetric differencing of the evaluator
    double derivative(double lambda, double h_rel = 1e-6) const {
        double h = h_rel * (1.0 + std::abs(lambda));
        return ((*this)(lambda + h) - (*this)(lambda - h)) / (2 * h);
    }
};

inline HadamardTheta hadamard_theta(const std::vector<double>& spectrum, int j,
                                    const TimeScale& ts, const AsymptoticConstants& ac) {
    if (spectrum.empty()) throw DataLengthError("empty spectrum");
    HadamardTheta h;
    h.j = j;
    double lam_max = spectrum.back();
    double zero_tol = 1e-12 * (1.0 + std::abs(lam_max));
    for (double lam : spectrum) {
        if (std::abs(lam) <= zero_tol) ++h.zero_multiplicity;
        else h.zeros.push_back(lam);
    }

    if (ac.N == 0) {
        // polynomial case: exact constant from the leading coefficient
        LeadingTerm lt = beta_leading_term(ts, 1, 1, 2 - j);
        double lead_p = 1.0;
        for (double zn : h.zeros) lead_p *= -1.0 / zn;
        double lead_theta = lt.coeff;
        h.C = lead_theta / lead_p;
        h.C_error = 0.0;
        return h;
    }

    // Each supplied zero must consume exactly one model zero, otherwise the
    // completed product has the wrong growth order. Distribute the supplied
    // count (minus the finite part Lambda_j) over the branches by prediction
    // order, then continue each branch from the next index.
    int branch_total =
        std::max(0, static_cast<int>(spectrum.size()) - ac.lambda_finite_count(j));
    std::vector<int> counts(static_cast<size_t>(ac.N), 0);
    {
        int assigned = 0;
        while (assigned < branch_total) {
            int best = -1;
            double best_pred = 0.0;
            for (int k = 1; k <= ac.N; ++k) {
                double pred = ac.lambda_pred(k, counts[static_cast<size_t>(k - 1)] + 1, j);
                if (best < 0 || pred < best_pred) {
                    best = k;
                    best_pred = pred;
                }
            }
            ++counts[static_cast<size_t>(best - 1)];
            ++assigned;
        }
    }
    for (int k = 1; k <= ac.N; ++k) {
        HadamardTheta::BranchTail bt;
        bt.d = ac.d[static_cast<size_t>(k - 1)];
        bt.c = kPi / bt.d;
        bt.shift = ac.shift(k, j);
        bt.z = ac.z[static_cast<size_t>(k - 1)];
        bt.n_start = counts[static_cast<size_t>(k - 1)] + 1;
        bt.n_explicit = std::max(64 * (bt.n_start + static_cast<int>(spectrum.size())), 4096);
        h.tails.push_back(bt);
    }

    // C_j = lim F_j / p_j along lambda = -t, Richardson-extrapolated in 1/sqrt(t)
    double T0 = std::max(16.0 * std::abs(lam_max), 100.0);
    std::vector<double> V;
    for (int m = 0; m < 5; ++m) {
        double t = T0 * std::pow(4.0, m);
        detail::LogVal f = detail::log_Fj(ts, ac, j, t);
        double sign_p = 1.0;
        double mag_p = h.log_abs_p(-t, &sign_p);
        double cosph = std::cos(f.phase), sinph = std::sin(f.phase);
        if (std::abs(sinph) > 1e-6)
            throw ExtrapolationDivergenceError("F_j phase is not real");
        double sign_f = cosph > 0 ? 1.0 : -1.0;
        V.push_back(sign_f * sign_p * std::exp(f.mag - mag_p));
    }
    std::vector<double> W, X;
    for (size_t m = 0; m + 1 < V.size(); ++m) W.push_back(2 * V[m + 1] - V[m]);
    for (size_t m = 0; m + 1 < W.size(); ++m) X.push_back((4 * W[m + 1] - W[m]) / 3);
    h.C = X.back();
    h.C_error = std::abs(X.back() - X[X.size() - 2]);
    if (!std::isfinite(h.C) || h.C == 0.0 || h.C_error > 0.2 * std::abs(h.C))
        throw ExtrapolationDivergenceError("C_j limit did not settle: C=" + std::to_string(h.C) +
                                           " err=" + std::to_string(h.C_error));
    return h;
}

} // namespace slts

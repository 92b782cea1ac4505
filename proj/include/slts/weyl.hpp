#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "slts/asymptotics.hpp"
#include "slts/forward.hpp"

namespace slts {

// M(lambda) together with its pole/residue list: the currency of the inverse
// pipeline. The evaluator is only meaningful off the poles.
struct WeylData {
    enum class Provenance { direct, hadamard, data, peeled };
    Provenance provenance = Provenance::direct;
    std::vector<double> poles;     // lambda_{n1}
    std::vector<double> residues;  // alpha_n
    double c0 = 0.0;               // lim M(lambda) as lambda -> -inf
    std::function<double(double)> evaluator;

    double operator()(double lambda) const { return evaluator(lambda); }
};

// Limit of M at -infinity: -(a_2 - a_1) when the scale starts with a point,
// 0 when it starts with a segment.
inline double weyl_limit_at_minus_inf(const TimeScale& ts) {
    if (ts.mu0() == 1) return -(ts.block(2).a - ts.block(1).a);
    return 0.0;
}

// M(lambda) = -Theta_0 / Theta_1 straight from propagation.
inline WeylData weyl_direct(const TimeScale& ts, const Potential& p,
                            const ForwardOptions& opt = {}) {
    WeylData w;
    w.provenance = WeylData::Provenance::direct;
    EigenOptions e = opt.eigen;
    e.count = opt.count;
    if (ts.num_segments() == 0) e.count = ts.num_points() - 2;
    w.poles = eigenvalues(ts, p, 1, e);
    w.residues = weight_numbers(ts, p, w.poles, e);
    w.c0 = weyl_limit_at_minus_inf(ts);
    auto ts_copy = std::make_shared<TimeScale>(ts);
    auto p_copy = std::make_shared<Potential>(p);
    double rtol = e.rtol, atol = e.atol;
    w.evaluator = [ts_copy, p_copy, rtol, atol](double lambda) {
        PropagateOptions popt;
        popt.rtol = rtol;
        popt.atol = atol;
        std::vector<std::vector<double>> empty(static_cast<size_t>(ts_copy->num_segments()));
        popt.segment_grids = &empty;
        SolutionState st = propagate(*ts_copy, *p_copy, lambda, popt);
        return -st.theta0 / st.theta1;
    };
    return w;
}

namespace detail {

// Tail of the partial-fraction sum beyond the supplied poles, modeled on the
// first-branch asymptotics alpha_n -> 2/d_1 (only present when a_1 < b_1; all
// weights decay when the scale starts with a point).
struct WeylTailModel {
    bool active = false;
    double alpha_hat = 0.0;   // 2/d_1
    double c = 0.0;           // pi/d_1
    double shift = 0.0;       // branch index shift
    double z = 0.0;           // z_1
    int n_start = 0;          // first modeled index
    int n_explicit_end = 0;   // explicit terms up to here, integral beyond

    double operator()(double lambda) const {
        if (!active) return 0.0;
        double acc = 0.0;
        for (int n = n_start; n <= n_explicit_end; ++n) {
            double m = n - shift;
            double rho = c * m + z / m;
            acc += alpha_hat / (lambda - rho * rho);
        }
        // integral remainder of alpha_hat / (lambda - c^2 m^2) dm from A to inf
        double A = n_explicit_end + 0.5 - shift;
        if (lambda < 0) {
            double v = std::sqrt(-lambda);
            acc -= alpha_hat / (c * v) * (kPi / 2 - std::atan(c * A / v));
        } else {
            double v = std::sqrt(lambda);
            double cA = c * A;
            acc -= alpha_hat / (2 * c * v) * std::log((cA + v) / (cA - v));
        }
        return acc;
    }
};

inline WeylTailModel make_tail_model(const TimeScale& ts, const AsymptoticConstants& ac,
                                     const std::vector<double>& poles, int j = 1) {
    WeylTailModel tm;
    if (ts.mu0() != 0 || ac.N == 0 || poles.empty()) return tm;
    tm.active = true;
    tm.alpha_hat = 2.0 / ac.d[0];
    tm.c = kPi / ac.d[0];
    tm.shift = ac.shift(1, j);
    tm.z = ac.z[0];
    double lam_max = poles.back();
    int n = 1;
    while (ac.lambda_pred(1, n, j) <= lam_max + 1e-9) ++n;
    tm.n_start = n;
    tm.n_explicit_end = std::max(8 * static_cast<int>(poles.size()), tm.n_start + 512);
    return tm;
}

} // namespace detail

// M(lambda) ~= c0 + sum alpha_n / (lambda - lambda_n1) + tail, built from a
// truncated pole/residue list.
inline WeylData weyl_from_data(const TimeScale& ts, const AsymptoticConstants& ac,
                               const std::vector<double>& lambda1,
                               const std::vector<double>& weights) {
    if (lambda1.size() != weights.size()) throw DataLengthError("poles vs residues");
    WeylData w;
    w.provenance = WeylData::Provenance::data;
    w.poles = lambda1;
    w.residues = weights;
    w.c0 = weyl_limit_at_minus_inf(ts);
    detail::WeylTailModel tail = detail::make_tail_model(ts, ac, lambda1);
    auto poles = std::make_shared<std::vector<double>>(lambda1);
    auto res = std::make_shared<std::vector<double>>(weights);
    double c0 = w.c0;
    w.evaluator = [poles, res, c0, tail](double lambda) {
        double acc = c0;
        for (size_t i = 0; i < poles->size(); ++i)
            acc += (*res)[i] / (lambda - (*poles)[i]);
        return acc + tail(lambda);
    };
    return w;
}

} // namespace slts

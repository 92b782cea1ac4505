#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "slts/hadamard.hpp"
#include "slts/inverse.hpp"
#include "slts/weyl.hpp"

namespace slts {

// ---------------------------------------------------------------------------
// Algorithm 2: recovering q(a_1) when the scale starts with an isolated point
// ---------------------------------------------------------------------------

struct PointRecovery {
    double q_value = 0.0;
    double fit_residual = 0.0;    // relative LS residual over the window
    double lambda_coeff = 0.0;    // fitted coefficient of lambda (exact: -(a2-a1)^2)
    double second_coeff = 0.0;    // sqrt-term (a2 < b2) or 1/lambda-term coefficient
    bool next_is_point = false;
};

// Samples g(lambda) = M / (M + (a_2 - b_1)) = Theta_0 / D_0^2 on a geometric
// negative-lambda window and fits the divergent model of its asymptotics:
//   a2 < b2:  (a2-a1)^2 (q - lambda) + (a2-a1) sqrt|lambda| + 1 + o(1)
//   a2 = b2:  (a2-a1)^2 (q - lambda) + (a2-a1)/(a3-a2) + 1 + o(1)
// The o(1) part is soaked up by decaying basis functions.
inline PointRecovery recover_point_q(const TimeScale& ts, const WeylData& weyl,
                                     const InverseOptions& opt = {}) {
    if (!ts.block(1).is_point()) throw ModelMismatchError("head block is not a point");
    if (ts.block_count() - ts.mu1() <= 1)
        throw ModelMismatchError("no tail beyond the head point");
    double gap1 = ts.gap(1);
    bool next_point = ts.block(2).is_point();
    if (next_point && ts.block_count() < 3)
        throw ModelMismatchError("a_3 required when a_2 = b_2");

    int K = opt.fit_levels;
    std::vector<double> lam(static_cast<size_t>(K) + 1), gval(lam.size());
    for (int m = 0; m <= K; ++m) {
        lam[size_t(m)] = -opt.fit_lambda0 * std::pow(2.0, m);
        double Mv = weyl(lam[size_t(m)]);
        double denom = Mv + gap1;
        if (denom == 0.0) throw FitResidualError("M + (a2-b1) vanished on the window");
        gval[size_t(m)] = Mv / denom;
    }

    // basis: divergent part exactly as in the asymptotics, then decaying terms
    std::vector<std::function<double(double)>> basis;
    basis.push_back([](double l) { return l; });
    if (!next_point) basis.push_back([](double l) { return std::sqrt(std::abs(l)); });
    basis.push_back([](double) { return 1.0; });
    if (!next_point) {
        basis.push_back([](double l) { return 1.0 / std::sqrt(std::abs(l)); });
        basis.push_back([](double l) { return 1.0 / l; });
        basis.push_back([](double l) { return 1.0 / (l * std::sqrt(std::abs(l))); });
        basis.push_back([](double l) { return 1.0 / (l * l); });
    } else {
        basis.push_back([](double l) { return 1.0 / l; });
        basis.push_back([](double l) { return 1.0 / (l * l); });
        basis.push_back([](double l) { return 1.0 / (l * l * l); });
        basis.push_back([](double l) { return 1.0 / (l * l * l * l); });
        basis.push_back([](double l) { return 1.0 / (l * l * l * l * l); });
    }

    size_t rows = lam.size(), cols = basis.size();
    Eigen::MatrixXd A(rows, cols);
    Eigen::VectorXd b(rows);
    for (size_t r = 0; r < rows; ++r) {
        for (size_t c = 0; c < cols; ++c) A(long(r), long(c)) = basis[c](lam[r]);
        b(long(r)) = gval[r];
    }
    Eigen::VectorXd colscale(cols);
    for (size_t c = 0; c < cols; ++c) {
        colscale(long(c)) = A.col(long(c)).cwiseAbs().maxCoeff();
        A.col(long(c)) /= colscale(long(c));
    }
    Eigen::VectorXd coef = A.colPivHouseholderQr().solve(b);
    double rel_res = (A * coef - b).norm() / b.norm();
    for (size_t c = 0; c < cols; ++c) coef(long(c)) /= colscale(long(c));

    PointRecovery out;
    out.next_is_point = next_point;
    out.fit_residual = rel_res;
    out.lambda_coeff = coef(0);
    out.second_coeff = coef(1);
    double g2 = gap1 * gap1;
    double c0 = next_point ? coef(2) : coef(2);
    if (next_point)
        out.q_value = (c0 - 1.0 - gap1 / ts.gap(2)) / g2;
    else
        out.q_value = (c0 - 1.0) / g2;

    if (rel_res > opt.fit_residual_tol)
        throw FitResidualError("window fit residual " + std::to_string(rel_res) +
                               " (o(1) term not settling; widen the window)");
    if (std::abs(out.lambda_coeff + g2) > 0.25 * g2)
        throw BranchError("lambda coefficient " + std::to_string(out.lambda_coeff) +
                          " inconsistent with -(a2-a1)^2 = " + std::to_string(-g2));
    if (std::abs(out.q_value) > opt.q_bound)
        throw BranchError("recovered point value out of bounds; constant term inconsistent");
    return out;
}

// ---------------------------------------------------------------------------
// Algorithm 3 step machinery: peeling the Weyl data to the tail scale
// ---------------------------------------------------------------------------

// Recovered potential data of the leading block.
struct HeadData {
    bool is_point = false;
    double point_value = 0.0;
    std::vector<double> samples;  // uniform on [a1, b1] when a segment
};

namespace detail {

// S, C and their Delta-derivatives at a_2 as functions of lambda, propagated
// across the head block with the recovered q, jump conditions included.
struct HeadTransfer {
    // returns [C, C^D, dC, dC^D, S, S^D, dS, dS^D] at a_2
    std::function<std::array<double, 8>(double)> at_a2;
};

inline HeadTransfer make_head_transfer(const TimeScale& ts, const HeadData& head,
                                       double rtol) {
    double gap = ts.gap(1);
    const Block blk = ts.block(1);
    if (head.is_point) {
        double q0 = head.point_value;
        return {[gap, q0](double lambda) -> std::array<double, 8> {
            auto a = alpha_values(gap, q0, lambda);
            // C starts (1,0), S starts (0,1); derivative rows via d alpha
            return {a.a11, a.a21, 0.0, -gap, a.a12, a.a22, 0.0, -gap * gap};
        }};
    }
    auto seg_scale = std::make_shared<TimeScale>(TimeScale::validate({{blk.a, blk.b}}));
    auto seg_pot = std::make_shared<Potential>(
        Potential::create(*seg_scale, {head.samples}, {}));
    double qb = head.samples.back();
    return {[seg_scale, seg_pot, gap, qb, rtol](double lambda) -> std::array<double, 8> {
        PropagateOptions popt;
        popt.rtol = rtol;
        popt.atol = rtol;
        std::vector<std::vector<double>> none = {{}};
        popt.segment_grids = &none;
        SolutionState st = propagate(*seg_scale, *seg_pot, lambda, popt);
        const BlockEndpoints& be = st.blocks.back();
        auto a = alpha_values(gap, qb, lambda);
        auto jump = [&](const EndpointState& e) -> std::array<double, 4> {
            return {a.a11 * e.y + a.a12 * e.yd, a.a21 * e.y + a.a22 * e.yd,
                    a.a11 * e.dy + a.a12 * e.dyd,
                    a.a21 * e.dy + a.a22 * e.dyd - gap * e.y - gap * gap * e.yd};
        };
        auto c = jump(be.C_out);
        auto s = jump(be.S_out);
        return {c[0], c[1], c[2], c[3], s[0], s[1], s[2], s[3]};
    }};
}

// W(lambda) = prod (1 - lambda/lambda_n) over the data poles, its derivative,
// and the pole-free combination [W*M](lambda) with all lambda-derivatives.
struct ClearedWeyl {
    std::vector<double> poles, residues;
    double c0 = 0.0;
    WeylTailModel tail;

    struct Eval {
        double W, dW, WM, dWM;
    };

    Eval operator()(double lambda) const {
        size_t n = poles.size();
        double W = 1.0;
        for (double p : poles) W *= (1.0 - lambda / p);
        // P_k = prod_{j != k}; W_k = W / (lambda - lambda_k) = -P_k / lambda_k
        double sumWk = 0.0, WM = c0 * W, dWM_partial = 0.0;
        for (size_t k = 0; k < n; ++k) {
            double Pk = 1.0;
            for (size_t j = 0; j < n; ++j)
                if (j != k) Pk *= (1.0 - lambda / poles[j]);
            double Wk = -Pk / poles[k];
            sumWk += Wk;
            WM += residues[k] * Wk;
            double sum_inv = 0.0;
            for (size_t j = 0; j < n; ++j)
                if (j != k) sum_inv += 1.0 / (poles[j] - lambda);
            double dWk = -(-Pk * sum_inv) / poles[k];  // d/dlambda of -P_k/lambda_k
            dWM_partial += residues[k] * dWk;
        }
        double dW = sumWk;
        double tv = tail.active ? tail(lambda) : 0.0;
        double h = 1e-6 * (1.0 + std::abs(lambda));
        double dtv = tail.active ? (tail(lambda + h) - tail(lambda - h)) / (2 * h) : 0.0;
        double WM_full = WM + W * tv;
        double dWM = c0 * dW + dWM_partial + dW * tv + W * dtv;
        return {W, dW, WM_full, dWM};
    }
};

} // namespace detail

// Transforms the Weyl data of T to the Weyl data of T_2 = tail(T, 2): with the
// head q known, M_2 = Phi(a_2)/Phi^D(a_2) is evaluated through the pole-free
// pair num_nu = W S^{D nu} + [WM] C^{D nu}; its poles and residues are the tail
// spectral data.
inline WeylData peel(const TimeScale& ts, const HeadData& head, const WeylData& weyl,
                     const InverseOptions& opt = {}) {
    if (ts.block_count() - ts.mu1() <= 1)
        throw ModelMismatchError("peel: no tail beyond the head block");
    TimeScale tail_ts = ts.tail(2);
    if (weyl.poles.empty()) throw DataLengthError("peel needs pole data");

    detail::ClearedWeyl cw;
    cw.poles = weyl.poles;
    cw.residues = weyl.residues;
    cw.c0 = weyl.c0;
    if (ts.mu0() == 0 && !head.is_point) {
        // branch-1 tail model from the recovered head segment
        AsymptoticConstants ac;
        ac.N = 1;
        ac.M = ts.num_points();
        ac.mu0 = 0;
        ac.mu1 = ts.mu1();
        ac.lk = {1};
        ac.d = {ts.block(1).b - ts.block(1).a};
        ac.delta = {ts.block_count() == 1 ? 1 : 0};
        TimeScale seg = TimeScale::validate({{ts.block(1).a, ts.block(1).b}});
        Potential hp = Potential::create(seg, {head.samples}, {});
        double c1 = 0.5 * hp.segment_integral(1) + 1.0 / ts.gap(1);
        ac.c = {c1};
        ac.z = {c1 / kPi};
        cw.tail = detail::make_tail_model(ts, ac, weyl.poles);
    }
    detail::HeadTransfer ht = detail::make_head_transfer(ts, head, opt.rtol);

    struct NumPair {
        double v0, v1, d0, d1;  // num_0, num_1 and lambda-derivatives
    };
    auto nums = [&](double lambda) -> NumPair {
        auto u = ht.at_a2(lambda);
        auto e = cw(lambda);
        NumPair np;
        np.v0 = e.W * u[4] + e.WM * u[0];
        np.v1 = e.W * u[5] + e.WM * u[1];
        np.d0 = e.dW * u[4] + e.W * u[6] + e.dWM * u[0] + e.WM * u[2];
        np.d1 = e.dW * u[5] + e.W * u[7] + e.dWM * u[1] + e.WM * u[3];
        return np;
    };

    // pole scan for the tail problem: density from the tail geometry
    int want = std::min<int>(opt.tail_n_max, std::max<int>(4, int(weyl.poles.size()) - 2));
    double lam_front = weyl.poles.front();
    double lambda_lo = std::min(0.0, lam_front) - 5.0 - 2.0 * std::abs(lam_front);
    std::vector<double> roots;
    std::vector<double> root_num0, root_dnum1;

    auto harvest = [&](double lo, double hi, int nsteps) {
        std::vector<double> xs(size_t(nsteps) + 1);
        for (int i = 0; i <= nsteps; ++i) xs[size_t(i)] = lo + (hi - lo) * i / nsteps;
        std::vector<NumPair> vals(xs.size());
        parallel_for(xs.size(), [&](size_t i) { vals[i] = nums(xs[i]); }, opt.threads);
        for (size_t i = 0; i + 1 < xs.size() && int(roots.size()) < want; ++i) {
            if ((vals[i].v1 > 0) == (vals[i + 1].v1 > 0)) continue;
            double a = xs[i], b = xs[i + 1], fa = vals[i].v1;
            NumPair mid{};
            for (int it = 0; it < 60; ++it) {
                double m = 0.5 * (a + b);
                mid = nums(m);
                if ((mid.v1 > 0) == (fa > 0)) {
                    a = m;
                    fa = mid.v1;
                } else {
                    b = m;
                }
                if (b - a < 1e-13 * (1 + std::abs(a))) break;
            }
            double root = 0.5 * (a + b);
            NumPair at = nums(root);
            // Newton polish
            for (int it = 0; it < 3 && at.d1 != 0.0; ++it) {
                double step = at.v1 / at.d1;
                double cand = root - step;
                if (cand <= xs[i] || cand >= xs[i + 1]) break;
                root = cand;
                at = nums(root);
            }
            roots.push_back(root);
            root_num0.push_back(at.v0);
            root_dnum1.push_back(at.d1);
        }
    };

    if (tail_ts.num_segments() > 0) {
        double gamma1 = 0.0, dmin = 1e300;
        for (int k = 1; k <= tail_ts.num_segments(); ++k) {
            gamma1 += tail_ts.segment_length(k);
            dmin = std::min(dmin, tail_ts.segment_length(k));
        }
        harvest(lambda_lo, 0.0, 512);
        double drho = (kPi / gamma1) / 12.0;
        double rho_hi = kPi * (want + tail_ts.block_count() + 2.0) / gamma1 + 2.0;
        double rho_lo = 1e-6;
        for (int expand = 0; expand < 8 && int(roots.size()) < want; ++expand) {
            int nsteps = int(std::ceil((rho_hi - rho_lo) / drho));
            std::vector<double> xs(size_t(nsteps) + 1);
            for (int i = 0; i <= nsteps; ++i) {
                double rho = rho_lo + (rho_hi - rho_lo) * i / nsteps;
                xs[size_t(i)] = rho * rho;
            }
            std::vector<NumPair> vals(xs.size());
            parallel_for(xs.size(), [&](size_t i) { vals[i] = nums(xs[i]); }, opt.threads);
            for (size_t i = 0; i + 1 < xs.size() && int(roots.size()) < want; ++i) {
                if ((vals[i].v1 > 0) != (vals[i + 1].v1 > 0)) {
                    double a = xs[i], b = xs[i + 1], fa = vals[i].v1;
                    NumPair mid{};
                    for (int it = 0; it < 60; ++it) {
                        double m = 0.5 * (a + b);
                        mid = nums(m);
                        if ((mid.v1 > 0) == (fa > 0)) {
                            a = m;
                            fa = mid.v1;
                        } else {
                            b = m;
                        }
                        if (b - a < 1e-13 * (1 + std::abs(a))) break;
                    }
                    double root = 0.5 * (a + b);
                    NumPair at = nums(root);
                    roots.push_back(root);
                    root_num0.push_back(at.v0);
                    root_dnum1.push_back(at.d1);
                }
            }
            rho_lo = rho_hi;
            rho_hi *= 1.3;
        }
    } else {
        // pure-point tail: finitely many poles in a bounded window
        want = std::min<int>(want, std::max(0, tail_ts.num_points() - 2));
        double hmin = 1e300;
        for (int l = 1; l < tail_ts.block_count(); ++l) hmin = std::min(hmin, tail_ts.gap(l));
        double hi = std::abs(weyl.poles.back()) * 1.5 + 4.0 / (hmin * hmin) + 10.0;
        if (want > 0) harvest(lambda_lo, hi, 4096);
    }

    if (int(roots.size()) < std::min(want, 1))
        throw PoleExtractionError("no tail poles found");

    // residues = num_0 / num_1' at the roots; stop at the first sign of
    // degraded data (non-positive residue)
    WeylData out;
    out.provenance = WeylData::Provenance::peeled;
    out.c0 = weyl_limit_at_minus_inf(tail_ts);
    for (size_t i = 0; i < roots.size(); ++i) {
        if (root_dnum1[i] == 0.0) throw PoleExtractionError("num_1' vanished at a pole");
        double scale0 = std::abs(cw(roots[i]).W) * (1.0 + std::abs(roots[i]));
        if (std::abs(root_num0[i]) < 1e-12 * scale0)
            throw CancellationError("num_0 and num_1 share a near-zero at lambda=" +
                                    std::to_string(roots[i]));
        double res = root_num0[i] / root_dnum1[i];
        if (!(res > 0)) {
            if (int(i) < std::min(8, want / 2))
                throw PoleExtractionError("non-positive residue at pole " + std::to_string(i + 1));
            break;  // truncate: deeper poles are noise-dominated
        }
        out.poles.push_back(roots[i]);
        out.residues.push_back(res);
    }
    // Evaluator in the W-free form M_2 = (S + M C)/(S^D + M C^D): the cleared
    // numerator pair overflows doubles far on the negative axis, the
    // partial-fraction M does not.
    auto mhat = weyl.evaluator;
    auto ht_copy = std::make_shared<detail::HeadTransfer>(ht);
    out.evaluator = [ht_copy, mhat](double lambda) {
        auto u = ht_copy->at_a2(lambda);
        double Mv = mhat(lambda);
        return (u[4] + Mv * u[0]) / (u[5] + Mv * u[1]);
    };
    return out;
}

// ---------------------------------------------------------------------------
// full inverse pipeline (Algorithm 3)
// ---------------------------------------------------------------------------

struct InverseRunResult {
    Potential recovered;
    std::vector<std::string> log;
    std::vector<std::string> warnings;
    InverseRunResult(Potential p) : recovered(std::move(p)) {}
};

// Recovers q on T^{0^2} from one set of spectral data: head recovery by
// Algorithm 1 (segment) or Algorithm 2 (point), then peeling to the tail until
// nothing constrained remains.
inline InverseRunResult run_inverse(const TimeScale& ts, const SpectralInput& input,
                                    const Potential& model_p, const InverseOptions& opt = {}) {
    input.validate();
    std::vector<std::string> log, warnings;

    // condition flags are advisory: recovery proceeds with a warning
    {
        AsymptoticConstants ac = asymptotic_constants(ts, model_p);
        if (ts.num_segments() > 0 && !ac.commensurable)
            warnings.push_back("commensurability fails: asymptotic guarantees unavailable");
        else if (ts.num_segments() > 1 && !ac.condition_on_z_ok)
            warnings.push_back("condition on z fails for nested tails: proceeding anyway");
    }

    std::vector<std::vector<double>> seg_samples(static_cast<size_t>(ts.num_segments()));
    std::map<int, double> point_values;

    TimeScale cur = ts;
    int m_offset = 0;  // blocks consumed so far
    Potential cur_model = model_p;
    WeylData cur_weyl;
    {
        AsymptoticConstants ac = asymptotic_constants(ts, model_p);
        cur_weyl = weyl_from_data(ts, ac, input.lambda1, input.weights);
    }

    for (int iter = 1;; ++iter) {
        if (iter > ts.block_count()) throw IterationLimitError("peeling did not terminate");
        int core2 = cur.core2_block_count();
        if (core2 == 0) {
            log.push_back("iteration " + std::to_string(iter) + ": empty core, stop");
            break;
        }
        const Block& head = cur.block(1);
        HeadData hd;
        if (head.is_segment()) {
            SpectralInput cin;
            cin.lambda1 = cur_weyl.poles;
            cin.weights = cur_weyl.residues;
            cin.n_max = std::min<int>(opt.n_max, static_cast<int>(cur_weyl.poles.size()));
            MainEquationSystem sys = build_main_equation(cur, cur_model, cin, opt);
            MainEquationSolution sol = solve_main_equation(sys, opt);
            ReconstructedC rc = reconstruct_C(sys, sol);
            SegmentRecovery sr = recover_segment_q(sys, rc, opt);
            hd.is_point = false;
            hd.samples = sr.q;
            int seg_index_full = 0;
            for (int k = 1; k <= ts.num_segments(); ++k)
                if (ts.segment_block(k) == m_offset + 1) seg_index_full = k;
            seg_samples[static_cast<size_t>(seg_index_full - 1)] = sr.q;
            double cmax = *std::max_element(sol.condition.begin(), sol.condition.end());
            std::ostringstream os;
            os << "iteration " << iter << ": segment block " << (m_offset + 1) << " recovered (n_max="
               << sys.n_max << ", cond<=" << cmax << ")";
            log.push_back(os.str());
        } else {
            PointRecovery pr = recover_point_q(cur, cur_weyl, opt);
            hd.is_point = true;
            hd.point_value = pr.q_value;
            point_values[m_offset + 1] = pr.q_value;
            std::ostringstream os;
            os << "iteration " << iter << ": point block " << (m_offset + 1) << " recovered (q="
               << pr.q_value << ", fit residual=" << pr.fit_residual << ")";
            log.push_back(os.str());
        }
        if (core2 <= 1) {
            log.push_back("iteration " + std::to_string(iter) + ": core exhausted, stop");
            break;
        }
        cur_weyl = peel(cur, hd, cur_weyl, opt);
        TimeScale next = cur.tail(2);
        cur_model = cur_model.restrict_to_tail(cur, 2, next);
        cur = next;
        ++m_offset;
    }

    // assemble the recovered potential; untouched segments (beyond a stopped
    // recursion) should not occur, but guard with the model values
    for (int k = 1; k <= ts.num_segments(); ++k)
        if (seg_samples[static_cast<size_t>(k - 1)].empty())
            throw IterationLimitError("segment " + std::to_string(k) + " was never recovered");
    InverseRunResult out(Potential::create(ts, seg_samples, point_values));
    out.log = std::move(log);
    out.warnings = std::move(warnings);
    return out;
}

// ---------------------------------------------------------------------------
// spectra -> weight numbers via the Hadamard evaluators
// ---------------------------------------------------------------------------

inline std::vector<double> spectra_to_weights(const TimeScale& ts,
                                              const std::vector<double>& lambda0,
                                              const std::vector<double>& lambda1,
                                              const AsymptoticConstants& ac) {
    if (lambda0.empty() || lambda1.empty()) throw DataLengthError("two spectra required");
    size_t m = std::min(lambda0.size(), lambda1.size());
    for (size_t n = 0; n + 1 < m; ++n)
        if (!(lambda1[n] < lambda0[n] && lambda0[n] < lambda1[n + 1]))
            throw DataLengthError("spectra do not interlace");
    HadamardTheta h0 = hadamard_theta(lambda0, 0, ts, ac);
    HadamardTheta h1 = hadamard_theta(lambda1, 1, ts, ac);
    std::vector<double> w;
    for (size_t n = 0; n < m; ++n) {
        double alpha = -h0(lambda1[n]) / h1.derivative(lambda1[n]);
        if (!(alpha > 0))
            throw NonPositiveWeightError("converted weight " + std::to_string(n + 1));
        w.push_back(alpha);
    }
    return w;
}

} // namespace slts

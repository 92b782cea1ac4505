#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <vector>

#include "slts/closed_form.hpp"
#include "slts/errors.hpp"
#include "slts/forward.hpp"
#include "slts/ode.hpp"
#include "slts/parallel.hpp"
#include "slts/potential.hpp"
#include "slts/time_scale.hpp"

namespace slts {

struct InverseOptions {
    int n_max = 100;
    int grid = 129;
    double rtol = 1e-12, atol = 1e-12;
    int working_set = 5;           // eigen-lambdas used by the q formula
    double eps_d_scale = 1e-6;     // quadrature/quotient switch for the D kernel
    double residual_tol = 1e-10;   // relative linear-solve residual
    double fit_lambda0 = 100.0;    // Algorithm 2 window start
    int fit_levels = 8;            // Algorithm 2 window depth (K)
    double fit_residual_tol = 5e-2;
    double q_bound = 1e3;          // sanity bound on a recovered point value
    int tail_n_max = 80;           // poles extracted per peeling step
    int threads = 0;
    bool verbose = false;
};

// Spectral data of one boundary value problem, as handed to the inverse solver.
struct SpectralInput {
    std::vector<double> lambda1;
    std::vector<double> weights;
    std::vector<double> lambda0;  // optional second spectrum (may be empty)
    int n_max = 0;                // 0 = use everything available

    void validate() const {
        if (lambda1.size() != weights.size())
            throw DataLengthError("lambda1 and weights lengths differ");
        if (lambda1.empty()) throw DataLengthError("no spectral data");
        for (size_t i = 0; i + 1 < lambda1.size(); ++i)
            if (!(lambda1[i] < lambda1[i + 1]))
                throw DataLengthError("lambda1 not strictly increasing");
        for (double w : weights)
            if (!(w > 0)) throw DataLengthError("weights must be positive");
        if (!lambda0.empty()) {
            for (size_t i = 0; i + 1 < lambda0.size(); ++i)
                if (!(lambda0[i] < lambda0[i + 1]))
                    throw DataLengthError("lambda0 not strictly increasing");
            size_t m = std::min(lambda0.size(), lambda1.size());
            for (size_t n = 0; n < m; ++n) {
                if (!(lambda1[n] < lambda0[n]))
                    throw DataLengthError("interlacing lambda1 < lambda0 violated");
                if (n + 1 < lambda1.size() && !(lambda0[n] < lambda1[n + 1]))
                    throw DataLengthError("interlacing lambda0 < next lambda1 violated");
            }
        }
    }
};

namespace detail {

// C(x, theta) for a family of theta values on one segment [a, b], from the
// cosine-type initial data C(a) = 1, C'(a) = 0. Constant-q segments evaluate in
// closed form; otherwise adaptive integration with dense output.
class HeadFamily {
public:
    static HeadFamily build(double a, double b, const std::vector<double>& q_samples,
                            const std::vector<double>& thetas, const std::vector<double>& grid,
                            double rtol, int threads = 0) {
        HeadFamily f;
        f.a_ = a;
        f.b_ = b;
        f.grid_ = grid;
        f.thetas_ = thetas;
        f.closed_ = detail_constant(q_samples);
        f.values_.resize(thetas.size());
        f.derivs_.resize(thetas.size());
        if (f.closed_) {
            f.q0_ = q_samples.front();
            for (size_t i = 0; i < thetas.size(); ++i) {
                f.values_[i].resize(grid.size());
                f.derivs_[i].resize(grid.size());
                for (size_t g = 0; g < grid.size(); ++g) {
                    double mu = thetas[i] - f.q0_;
                    double x = grid[g] - a;
                    f.values_[i][g] = cosm(mu, x);
                    f.derivs_[i][g] = -mu * sinm(mu, x);
                }
            }
            return f;
        }
        TimeScale seg = TimeScale::validate({{a, b}});
        Potential pq = Potential::create(seg, {q_samples}, {});
        f.dense_.resize(thetas.size());
        parallel_for(
            thetas.size(),
            [&](size_t i) {
                auto rhs = [&](double t, const std::array<double, 2>& y,
                               std::array<double, 2>& dy) {
                    dy[0] = y[1];
                    dy[1] = (pq.eval_segment(1, t) - thetas[i]) * y[0];
                };
                Dopri5<2>::Options iopt;
                iopt.rtol = rtol;
                iopt.atol = rtol;
                std::array<double, 2> y = {1.0, 0.0};
                f.values_[i].resize(grid.size());
                f.derivs_[i].resize(grid.size());
                // integrate across the sample cells, recording at grid nodes
                std::vector<double> nodes;
                int n = static_cast<int>(q_samples.size());
                for (int m = 0; m < n; ++m) nodes.push_back(a + (b - a) * m / (n - 1));
                nodes.insert(nodes.end(), grid.begin(), grid.end());
                std::sort(nodes.begin(), nodes.end());
                nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
                size_t gi = 0;
                auto record = [&](double xnode) {
                    while (gi < grid.size() && grid[gi] <= xnode + 1e-14 * (1 + std::abs(xnode))) {
                        f.values_[i][gi] = y[0];
                        f.derivs_[i][gi] = y[1];
                        ++gi;
                    }
                };
                record(nodes.front());
                for (size_t m = 0; m + 1 < nodes.size(); ++m) {
                    Dopri5<2>::integrate(rhs, nodes[m], nodes[m + 1], y, iopt, &f.dense_[i]);
                    record(nodes[m + 1]);
                }
            },
            threads);
        return f;
    }

    size_t size() const { return thetas_.size(); }
    double theta(size_t i) const { return thetas_[i]; }
    double val(size_t i, size_t g) const { return values_[i][g]; }
    double der(size_t i, size_t g) const { return derivs_[i][g]; }
    const std::vector<double>& grid() const { return grid_; }

    double eval_at(size_t i, double x) const {
        if (closed_) return cosm(thetas_[i] - q0_, x - a_);
        return Dopri5<2>::eval_dense(dense_[i], x)[0];
    }

private:
    static bool detail_constant(const std::vector<double>& v) {
        for (double s : v)
            if (s != v.front()) return false;
        return true;
    }
    double a_ = 0, b_ = 0, q0_ = 0;
    bool closed_ = false;
    std::vector<double> grid_, thetas_;
    std::vector<std::vector<double>> values_, derivs_;
    std::vector<std::vector<Dopri5<2>::DenseSegment>> dense_;
};

// Cumulative integral of C(t, th_a) C(t, th_b) over the grid, by composite
// Gauss-Legendre refined enough to resolve the oscillation.
inline std::vector<double> cumulative_product_integral(const HeadFamily& fam, size_t ia,
                                                       size_t ib) {
    static const double gx[7] = {-0.9491079123427585, -0.7415311855993945, -0.4058451513773972,
                                 0.0, 0.4058451513773972, 0.7415311855993945, 0.9491079123427585};
    static const double gw[7] = {0.1294849661688697, 0.2797053914892767, 0.3818300505051189,
                                 0.4179591836734694, 0.3818300505051189, 0.2797053914892767,
                                 0.1294849661688697};
    const std::vector<double>& grid = fam.grid();
    double rho = std::sqrt(std::max({std::abs(fam.theta(ia)), std::abs(fam.theta(ib)), 1.0}));
    std::vector<double> out(grid.size(), 0.0);
    double acc = 0.0;
    for (size_t g = 0; g + 1 < grid.size(); ++g) {
        double h = grid[g + 1] - grid[g];
        int nsub = std::max(1, static_cast<int>(std::ceil(rho * h / 1.0)));
        for (int s = 0; s < nsub; ++s) {
            double lo = grid[g] + h * s / nsub;
            double hi = grid[g] + h * (s + 1) / nsub;
            double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
            double cell = 0.0;
            for (int q = 0; q < 7; ++q) {
                double x = mid + half * gx[q];
                cell += gw[q] * fam.eval_at(ia, x) * fam.eval_at(ib, x);
            }
            acc += cell * half;
        }
        out[g + 1] = acc;
    }
    return out;
}

} // namespace detail

struct DKernelEval {
    double value = 0.0;
    bool used_quadrature = false;
};

// D(x, lambda, mu) = <C(x,lambda), C(x,mu)> / (lambda - mu) = int_a^x C C dt for
// the cosine-type solutions on the head segment: Wronskian quotient away from
// the diagonal, cumulative quadrature within eps_D of it.
inline DKernelEval d_kernel(const TimeScale& ts, const Potential& p, double x, double lambda,
                            double mu, const InverseOptions& opt = {}) {
    const Block& head = ts.block(1);
    if (!head.is_segment()) throw ModelMismatchError("head block is not a segment");
    if (x < head.a || x > head.b) throw GridError("x outside the head segment");
    std::vector<double> grid;
    int G = 65;
    for (int g = 0; g < G; ++g) grid.push_back(head.a + (x - head.a) * g / (G - 1));
    detail::HeadFamily fam = detail::HeadFamily::build(head.a, head.b, p.segment(1).samples,
                                                       {lambda, mu}, grid, opt.rtol, 1);
    DKernelEval out;
    double eps = opt.eps_d_scale * (1.0 + std::abs(lambda) + std::abs(mu));
    if (std::abs(lambda - mu) > eps) {
        size_t last = grid.size() - 1;
        out.value = (fam.val(0, last) * fam.der(1, last) - fam.der(0, last) * fam.val(1, last)) /
                    (lambda - mu);
        return out;
    }
    out.used_quadrature = true;
    out.value = detail::cumulative_product_integral(fam, 0, 1).back();
    return out;
}

// Assembled ingredients of the linear main equation psi~ = (I + H~) psi on the
// head segment, truncated at n_max.
class MainEquationSystem {
public:
    int n_max = 0;
    std::vector<double> grid;                         // x nodes on [a1, b1]
    std::vector<double> theta0, theta1;               // data / model j=1 eigenvalues
    std::vector<double> alpha0, alpha1;               // data / model weight numbers
    std::vector<double> xi, chi;
    detail::HeadFamily model;                         // C~ at all theta_{ni}
    std::map<std::pair<size_t, size_t>, std::vector<double>> near_diag;  // quadrature D~
    double eps_d_scale = 1e-6;

    size_t flat(int n, int i) const { return 2 * static_cast<size_t>(n) + static_cast<size_t>(i); }
    double theta_flat(size_t u) const { return model.theta(u); }

    // D~(x_g, theta_u, theta_v): Wronskian quotient off the diagonal, cumulative
    // quadrature within eps_D of it.
    double D(size_t u, size_t v, size_t g) const {
        double tu = model.theta(u), tv = model.theta(v);
        double eps = eps_d_scale * (1.0 + std::abs(tu) + std::abs(tv));
        if (std::abs(tu - tv) > eps) {
            double num = model.val(u, g) * model.der(v, g) - model.der(u, g) * model.val(v, g);
            return num / (tu - tv);
        }
        auto it = near_diag.find(std::minmax(u, v));
        if (it == near_diag.end()) throw GridError("missing near-diagonal D table");
        return it->second[g];
    }

    Eigen::MatrixXd matrix(size_t g) const {
        int m = 2 * n_max;
        Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m);
        for (int n = 0; n < n_max; ++n) {
            for (int k = 0; k < n_max; ++k) {
                double r00 = alpha0[size_t(k)] * D(flat(n, 0), flat(k, 0), g);
                double r01 = alpha1[size_t(k)] * D(flat(n, 0), flat(k, 1), g);
                double r10 = alpha0[size_t(k)] * D(flat(n, 1), flat(k, 0), g);
                double r11 = alpha1[size_t(k)] * D(flat(n, 1), flat(k, 1), g);
                double cn = chi[size_t(n)], xk = xi[size_t(k)];
                A(2 * n, 2 * k) += cn * xk * (r00 - r10);
                A(2 * n, 2 * k + 1) += cn * ((r00 - r10) - (r01 - r11));
                A(2 * n + 1, 2 * k) += xk * r10;
                A(2 * n + 1, 2 * k + 1) += r10 - r11;
            }
        }
        return A;
    }

    Eigen::VectorXd rhs(size_t g) const {
        Eigen::VectorXd b(2 * n_max);
        for (int n = 0; n < n_max; ++n) {
            b(2 * n) = chi[size_t(n)] * (model.val(flat(n, 0), g) - model.val(flat(n, 1), g));
            b(2 * n + 1) = model.val(flat(n, 1), g);
        }
        return b;
    }
};

// Builds psi~ and H~ from the model problem (same scale, potential q~) and the
// supplied spectral data, on a uniform recovery grid over the head segment.
// model_data, when given, supplies (lambda~_{n1}, alpha~_n) directly; tables_p
// still provides the C~ solution tables (they differ only in cross-validation
// setups that build the kernel of the *true* problem over the same data).
inline MainEquationSystem build_main_equation(const TimeScale& ts, const Potential& tables_p,
                                              const SpectralInput& input,
                                              const InverseOptions& opt = {},
                                              const SpectralInput* model_data = nullptr) {
    input.validate();
    if (ts.num_segments() == 0 || ts.segment_block(1) != 1)
        throw ModelMismatchError("head block must be a segment");
    int n_max = input.n_max > 0 ? input.n_max : static_cast<int>(input.lambda1.size());
    n_max = std::min<int>(n_max, static_cast<int>(input.lambda1.size()));
    if (n_max < 1) throw DataLengthError("need at least one eigenvalue");

    std::vector<double> mtheta, malpha;
    if (model_data) {
        if (static_cast<int>(model_data->lambda1.size()) < n_max)
            throw DataLengthError("model data shorter than n_max");
        mtheta.assign(model_data->lambda1.begin(), model_data->lambda1.begin() + n_max);
        malpha.assign(model_data->weights.begin(), model_data->weights.begin() + n_max);
    } else {
        // model spectral data for L~_1(T)
        EigenOptions eo;
        eo.count = n_max;
        eo.rtol = opt.rtol;
        eo.atol = opt.atol;
        eo.threads = opt.threads;
        mtheta = eigenvalues(ts, tables_p, 1, eo);
        malpha = weight_numbers(ts, tables_p, mtheta, eo);
    }

    MainEquationSystem sys;
    sys.n_max = n_max;
    sys.eps_d_scale = opt.eps_d_scale;
    const Block& head = ts.block(1);
    for (int g = 0; g < opt.grid; ++g)
        sys.grid.push_back(head.a + (head.b - head.a) * g / (opt.grid - 1));
    sys.theta0.assign(input.lambda1.begin(), input.lambda1.begin() + n_max);
    sys.alpha0.assign(input.weights.begin(), input.weights.begin() + n_max);
    sys.theta1 = mtheta;
    sys.alpha1 = malpha;
    for (int n = 0; n < n_max; ++n) {
        // principal square roots; negative eigenvalues give imaginary parts
        std::complex<double> s0 = std::sqrt(std::complex<double>(sys.theta0[size_t(n)]));
        std::complex<double> s1 = std::sqrt(std::complex<double>(sys.theta1[size_t(n)]));
        double xin = std::abs(s0 - s1) + std::abs(sys.alpha0[size_t(n)] - sys.alpha1[size_t(n)]);
        sys.xi.push_back(xin);
        sys.chi.push_back(xin != 0.0 ? 1.0 / xin : 0.0);
    }

    // model solutions at the interleaved theta values
    std::vector<double> thetas;
    for (int n = 0; n < n_max; ++n) {
        thetas.push_back(sys.theta0[size_t(n)]);
        thetas.push_back(sys.theta1[size_t(n)]);
    }
    sys.model = detail::HeadFamily::build(head.a, head.b, tables_p.segment(1).samples, thetas,
                                          sys.grid, opt.rtol, opt.threads);

    // near-diagonal D tables
    std::vector<std::pair<size_t, size_t>> pairs;
    for (size_t u = 0; u < thetas.size(); ++u) {
        for (size_t v = u; v < thetas.size(); ++v) {
            double eps = opt.eps_d_scale * (1.0 + std::abs(thetas[u]) + std::abs(thetas[v]));
            if (std::abs(thetas[u] - thetas[v]) <= eps) pairs.emplace_back(u, v);
        }
    }
    std::vector<std::vector<double>> tables(pairs.size());
    parallel_for(
        pairs.size(),
        [&](size_t i) {
            tables[i] = detail::cumulative_product_integral(sys.model, pairs[i].first,
                                                            pairs[i].second);
        },
        opt.threads);
    for (size_t i = 0; i < pairs.size(); ++i)
        sys.near_diag[pairs[i]] = std::move(tables[i]);
    return sys;
}

struct MainEquationSolution {
    std::vector<Eigen::VectorXd> psi;  // per grid node
    std::vector<double> residual;      // relative solve residual per node
    std::vector<double> condition;     // 1-norm condition estimate per node
};

// Dense solve per grid node with partial pivoting; unique solvability of the
// main equation makes a singular factorization a data error.
inline MainEquationSolution solve_main_equation(const MainEquationSystem& sys,
                                                const InverseOptions& opt = {}) {
    MainEquationSolution sol;
    size_t G = sys.grid.size();
    sol.psi.resize(G);
    sol.residual.resize(G);
    sol.condition.resize(G);
    std::vector<std::string> errs(G);
    parallel_for(
        G,
        [&](size_t g) {
            Eigen::MatrixXd A = sys.matrix(g);
            Eigen::VectorXd b = sys.rhs(g);
            Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
            Eigen::VectorXd x = lu.solve(b);
            double rel = (A * x - b).lpNorm<Eigen::Infinity>() /
                         std::max(b.lpNorm<Eigen::Infinity>(), 1e-300);
            if (!std::isfinite(rel) || rel > opt.residual_tol) {
                errs[g] = "main equation residual " + std::to_string(rel) + " at x index " +
                          std::to_string(g);
                return;
            }
            // 1-norm condition estimate via a few solves on sign vectors
            double anorm = A.cwiseAbs().colwise().sum().maxCoeff();
            Eigen::VectorXd v = Eigen::VectorXd::Constant(A.rows(), 1.0 / A.rows());
            double ainv = 0.0;
            for (int it = 0; it < 3; ++it) {
                v = lu.solve(v);
                ainv = v.lpNorm<1>();
                Eigen::VectorXd s = v.unaryExpr([](double t) { return t >= 0 ? 1.0 : -1.0; });
                v = lu.adjoint().solve(s);
                int idx = 0;
                v.cwiseAbs().maxCoeff(&idx);
                v = Eigen::VectorXd::Unit(A.rows(), idx);
            }
            sol.psi[g] = x;
            sol.residual[g] = rel;
            sol.condition[g] = anorm * ainv;
        },
        opt.threads);
    for (const auto& e : errs)
        if (!e.empty()) throw SingularSystemError(e);
    return sol;
}

struct ReconstructedC {
    // values over the grid for each flat (n, i) family
    std::vector<std::vector<double>> C;
    bool truncation_warning = false;
    double tail_estimate = 0.0;
};

// psi already contains C_{n1}; C_{n0} = C_{n1} + xi_n psi_{n0}.
inline ReconstructedC reconstruct_C(const MainEquationSystem& sys,
                                    const MainEquationSolution& sol) {
    ReconstructedC rc;
    size_t G = sys.grid.size();
    rc.C.assign(2 * static_cast<size_t>(sys.n_max), std::vector<double>(G, 0.0));
    for (size_t g = 0; g < G; ++g) {
        for (int n = 0; n < sys.n_max; ++n) {
            double psi0 = sol.psi[g](2 * n);
            double psi1 = sol.psi[g](2 * n + 1);
            rc.C[sys.flat(n, 1)][g] = psi1;
            rc.C[sys.flat(n, 0)][g] = psi1 + sys.xi[size_t(n)] * psi0;
        }
    }
    // crude tail size indicator from the last few xi
    double tail = 0.0;
    for (int n = std::max(0, sys.n_max - 5); n < sys.n_max; ++n) tail += sys.xi[size_t(n)];
    rc.tail_estimate = tail / std::max(1, std::min(5, sys.n_max));
    rc.truncation_warning = rc.tail_estimate > 1e-2;
    return rc;
}

// C(x, lambda*) by the reconstruction series at an extra lambda.
inline std::vector<double> reconstruct_C_at(const TimeScale& ts, const Potential& model_p,
                                            const MainEquationSystem& sys,
                                            const ReconstructedC& rc, double lambda_star,
                                            const InverseOptions& opt = {}) {
    const Block& head = ts.block(1);
    detail::HeadFamily star = detail::HeadFamily::build(
        head.a, head.b, model_p.segment(1).samples, {lambda_star}, sys.grid, opt.rtol, 1);
    std::vector<double> out(sys.grid.size());
    for (size_t g = 0; g < sys.grid.size(); ++g) {
        double acc = star.val(0, g);
        for (int k = 0; k < sys.n_max; ++k) {
            // quotient-route D~(x, lambda*, theta_kj) from the star family values
            auto dstar = [&](size_t vflat) {
                double tv = sys.model.theta(vflat);
                double eps = sys.eps_d_scale * (1.0 + std::abs(lambda_star) + std::abs(tv));
                if (std::abs(lambda_star - tv) <= eps)
                    throw GridError("lambda* collides with a data eigenvalue");
                double num = star.val(0, g) * sys.model.der(vflat, g) -
                             star.der(0, g) * sys.model.val(vflat, g);
                return num / (lambda_star - tv);
            };
            acc -= sys.alpha0[size_t(k)] * dstar(sys.flat(k, 0)) * rc.C[sys.flat(k, 0)][g] -
                   sys.alpha1[size_t(k)] * dstar(sys.flat(k, 1)) * rc.C[sys.flat(k, 1)][g];
        }
        out[g] = acc;
    }
    return out;
}

namespace detail {

// finite-difference weights for the m-th derivative on arbitrary offsets
inline std::vector<double> fd_weights(const std::vector<int>& offsets, int order, double h) {
    int n = static_cast<int>(offsets.size());
    Eigen::MatrixXd V(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) V(r, c) = std::pow(static_cast<double>(offsets[size_t(c)]), r);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    double fact = 1.0;
    for (int i = 2; i <= order; ++i) fact *= i;
    rhs(order) = fact;
    Eigen::VectorXd w = V.fullPivLu().solve(rhs);
    std::vector<double> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out[size_t(i)] = w(i) / std::pow(h, order);
    return out;
}

} // namespace detail

struct SegmentRecovery {
    std::vector<double> q;           // samples on the system grid
    std::vector<int> used;           // admissible candidate count per node
    int working_set = 0;
};

// q(x) = theta_n0 + C''_{n0}(x) / C_{n0}(x), medianized over the working set of
// the smallest data eigenvalues, skipping near-zeros of C.
inline SegmentRecovery recover_segment_q(const MainEquationSystem& sys,
                                         const ReconstructedC& rc,
                                         const InverseOptions& opt = {}) {
    size_t G = sys.grid.size();
    if (G < 7) throw GridError("recovery grid too small");
    double h = sys.grid[1] - sys.grid[0];
    int W = std::min(opt.working_set, sys.n_max);
    SegmentRecovery out;
    out.q.assign(G, 0.0);
    out.used.assign(G, 0);

    for (int attempt = 0; attempt < 2; ++attempt) {
        out.working_set = W;
        // second derivatives of the working families
        std::vector<std::vector<double>> d2(static_cast<size_t>(W), std::vector<double>(G));
        std::vector<double> cmax(static_cast<size_t>(W), 0.0);
        static const std::vector<int> central = {-2, -1, 0, 1, 2};
        std::vector<double> wc = detail::fd_weights(central, 2, h);
        for (int n = 0; n < W; ++n) {
            const std::vector<double>& c = rc.C[sys.flat(n, 0)];
            for (double v : c) cmax[size_t(n)] = std::max(cmax[size_t(n)], std::abs(v));
            for (size_t g = 0; g < G; ++g) {
                if (g >= 2 && g + 2 < G) {
                    double acc = 0;
                    for (int s = 0; s < 5; ++s) acc += wc[size_t(s)] * c[g - 2 + size_t(s)];
                    d2[size_t(n)][g] = acc;
                } else {
                    std::vector<int> offs(7);
                    int base = g < 2 ? 0 : static_cast<int>(G) - 7;
                    for (int s = 0; s < 7; ++s) offs[size_t(s)] = base + s - static_cast<int>(g);
                    std::vector<double> wside = detail::fd_weights(offs, 2, h);
                    double acc = 0;
                    for (int s = 0; s < 7; ++s) acc += wside[size_t(s)] * c[size_t(base + s)];
                    d2[size_t(n)][g] = acc;
                }
            }
        }
        std::vector<size_t> empty_nodes;
        for (size_t g = 0; g < G; ++g) {
            std::vector<double> cand;
            for (int n = 0; n < W; ++n) {
                const std::vector<double>& c = rc.C[sys.flat(n, 0)];
                if (std::abs(c[g]) < 0.1 * cmax[size_t(n)]) continue;
                cand.push_back(sys.theta0[size_t(n)] + d2[size_t(n)][g] / c[g]);
            }
            out.used[g] = static_cast<int>(cand.size());
            if (cand.empty()) {
                empty_nodes.push_back(g);
                continue;
            }
            std::sort(cand.begin(), cand.end());
            out.q[g] = cand[cand.size() / 2];
            if (cand.size() % 2 == 0) out.q[g] = 0.5 * (cand[cand.size() / 2 - 1] + out.q[g]);
        }
        if (empty_nodes.size() <= std::max<size_t>(2, G / 16)) {
            // structural zeros of every working C_{n0} (e.g. x = b1 on a
            // single-segment scale, where C(b1, lambda_n1) = Theta_1(lambda_n1)
            // vanishes for all n). There C'' also vanishes, so the formula has
            // the finite limit q = theta + C'''/C'.
            for (size_t g : empty_nodes) {
                std::vector<double> cand;
                if (G >= 9) {
                    int base = std::clamp(static_cast<int>(g) - 4, 0, static_cast<int>(G) - 9);
                    std::vector<int> offs(9);
                    for (int s = 0; s < 9; ++s) offs[size_t(s)] = base + s - static_cast<int>(g);
                    std::vector<double> w1 = detail::fd_weights(offs, 1, h);
                    std::vector<double> w3 = detail::fd_weights(offs, 3, h);
                    for (int n = 0; n < W; ++n) {
                        const std::vector<double>& c = rc.C[sys.flat(n, 0)];
                        double d1 = 0, d3 = 0;
                        for (int s = 0; s < 9; ++s) {
                            d1 += w1[size_t(s)] * c[size_t(base + s)];
                            d3 += w3[size_t(s)] * c[size_t(base + s)];
                        }
                        double rho = std::sqrt(std::max(1.0, std::abs(sys.theta0[size_t(n)])));
                        if (std::abs(d1) < 0.1 * rho * cmax[size_t(n)]) continue;
                        cand.push_back(sys.theta0[size_t(n)] + d3 / d1);
                    }
                }
                if (!cand.empty()) {
                    std::sort(cand.begin(), cand.end());
                    out.q[g] = cand[cand.size() / 2];
                    if (cand.size() % 2 == 0)
                        out.q[g] = 0.5 * (cand[cand.size() / 2 - 1] + out.q[g]);
                    continue;
                }
                // last resort: cubic extrapolation from the nearest recovered nodes
                std::vector<size_t> near;
                for (size_t d = 1; d < G && near.size() < 4; ++d) {
                    if (g >= d && out.used[g - d] > 0) near.push_back(g - d);
                    if (near.size() < 4 && g + d < G && out.used[g + d] > 0)
                        near.push_back(g + d);
                }
                if (near.size() < 4) throw AllNearZeroError("too few usable nodes to fill");
                double acc = 0.0;
                for (size_t a = 0; a < 4; ++a) {
                    double term = out.q[near[a]];
                    for (size_t b = 0; b < 4; ++b) {
                        if (a == b) continue;
                        term *= (double(g) - double(near[b])) /
                                (double(near[a]) - double(near[b]));
                    }
                    acc += term;
                }
                out.q[g] = acc;
            }
            return out;
        }
        if (W >= sys.n_max) break;
        W = std::min(2 * W, sys.n_max);  // enlarge the working set and retry
    }
    throw AllNearZeroError("every working C_{n0} vanishes near many grid nodes");
}

} // namespace slts

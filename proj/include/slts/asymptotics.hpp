#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "slts/errors.hpp"
#include "slts/potential.hpp"
#include "slts/time_scale.hpp"

namespace slts {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Eigenvalue-localization constants: segment lengths, branch shifts, the z_k
// constants, and the commensurability data (r, x_k, D) with the ring radii R_B.
struct AsymptoticConstants {
    int N = 0;
    std::vector<double> d;      // segment lengths d_k
    std::vector<int> delta;     // delta_k = 1 iff segment k is the last block
    std::vector<int> lk;        // block index of segment k
    double gamma1 = 0.0;        // sum of d_k
    std::vector<double> c;      // c_k
    std::vector<double> z;      // z_k
    int mu0 = 0, mu1 = 0, M = 0;

    bool commensurable = false;
    double r = 0.0;
    std::vector<long long> x;   // d_k = r * x_k
    double D = 0.0;             // x_1 ... x_N * r
    bool z_restriction_ok = false;   // z_l/d_l pairwise distinct
    bool condition_on_z_ok = false;  // nested-tail variant
    std::string note;

    double ring_radius(int B) const {
        if (B <= 0) return 0.0;
        if (!commensurable) throw CommensurabilityError("rings undefined");
        double t = B / (2.0 * D) + 1.0 / (4.0 * D);
        return kPi * kPi * t * t;
    }

    // Index shift in the branch main term: 1/2 when delta_k equals the effective
    // boundary index (j for the leading segment when it starts the scale, else 0).
    double shift(int k, int j) const {
        int e = (lk[static_cast<size_t>(k - 1)] == 1) ? j : 0;
        return delta[static_cast<size_t>(k - 1)] == e ? 0.5 : 0.0;
    }

    double rho_pred(int k, int n, int j) const {
        double s = shift(k, j);
        double m = static_cast<double>(n) - s;
        return kPi * m / d[static_cast<size_t>(k - 1)] + z[static_cast<size_t>(k - 1)] / m;
    }
    double lambda_pred(int k, int n, int j) const {
        double rho = rho_pred(k, n, j);
        return rho * rho;
    }

    // Size of the finite part Lambda_j of the spectrum.
    int lambda_finite_count(int j) const {
        int sgn = (N - 1 + mu1) > 0 ? 1 : 0;
        return N + M - 1 + j * (1 - mu0) * sgn - mu1;
    }
};

namespace detail {

// Best rational p/q ~ value with q <= max_den, by continued fractions.
inline std::pair<long long, long long> rational_approx(double value, long long max_den) {
    long long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
    double x = value;
    for (int it = 0; it < 64; ++it) {
        double fl = std::floor(x);
        long long a = static_cast<long long>(fl);
        long long p2 = a * p1 + p0, q2 = a * q1 + q0;
        if (q2 > max_den) break;
        p0 = p1; q0 = q1; p1 = p2; q1 = q2;
        double frac = x - fl;
        if (frac < 1e-15) break;
        x = 1.0 / frac;
    }
    return {p1, q1};
}

inline long long gcd_ll(long long a, long long b) {
    while (b) { long long t = a % b; a = b; b = t; }
    return a;
}

} // namespace detail

// Computes all localization constants. A failed commensurability detection is
// reported through the flags, not thrown: root scans still work without rings.
inline AsymptoticConstants asymptotic_constants(const TimeScale& ts, const Potential& p) {
    AsymptoticConstants ac;
    ac.N = ts.num_segments();
    ac.M = ts.num_points();
    ac.mu0 = ts.mu0();
    ac.mu1 = ts.mu1();
    int nm = ts.block_count();
    for (int k = 1; k <= ac.N; ++k) {
        int l = ts.segment_block(k);
        ac.lk.push_back(l);
        ac.d.push_back(ts.segment_length(k));
        ac.delta.push_back(l == nm ? 1 : 0);
        double ck = 0.5 * p.segment_integral(k);
        if (l < nm) ck += 1.0 / ts.gap(l);
        ac.c.push_back(ck);
        double zk = ck;
        if (l >= 2) zk += 1.0 / ts.gap(l - 1);
        ac.z.push_back(zk / kPi);
    }
    ac.gamma1 = std::accumulate(ac.d.begin(), ac.d.end(), 0.0);

    if (ac.N > 0) {
        double dmin = *std::min_element(ac.d.begin(), ac.d.end());
        long long Q = 1;
        std::vector<std::pair<long long, long long>> fracs;
        bool ok = true;
        for (double dk : ac.d) {
            auto [pk, qk] = detail::rational_approx(dk / dmin, 512);
            if (qk == 0 || std::abs(dk - dmin * double(pk) / double(qk)) > 1e-9 * std::max(1.0, dk)) {
                ok = false;
                break;
            }
            fracs.emplace_back(pk, qk);
            Q = Q / detail::gcd_ll(Q, qk) * qk;
        }
        if (ok) {
            double r0 = dmin / static_cast<double>(Q);
            std::vector<long long> xs;
            for (double dk : ac.d) {
                long long xk = llround(dk / r0);
                if (xk < 1 || std::abs(dk - r0 * double(xk)) > 1e-9 * std::max(1.0, dk)) {
                    ok = false;
                    break;
                }
                xs.push_back(xk);
            }
            if (ok) {
                long long g = 0;
                for (long long v : xs) g = detail::gcd_ll(g, v);
                for (long long& v : xs) v /= g;
                ac.r = r0 * static_cast<double>(g);
                ac.x = xs;
                ac.D = ac.r;
                for (long long v : xs) ac.D *= static_cast<double>(v);
                ac.commensurable = true;
            }
        }
        if (!ac.commensurable)
            ac.note = "segment lengths not commensurable within 1e-9; ring localization disabled";

        ac.z_restriction_ok = true;
        for (int l = 0; l < ac.N; ++l)
            for (int v = l + 1; v < ac.N; ++v)
                if (std::abs(ac.z[size_t(l)] / ac.d[size_t(l)] - ac.z[size_t(v)] / ac.d[size_t(v)]) < 1e-9)
                    ac.z_restriction_ok = false;
        ac.condition_on_z_ok = true;
        for (int k = 1; k <= ac.N - 1; ++k) {
            double lhs = ac.c[size_t(k - 1)] / (kPi * ac.d[size_t(k - 1)]);
            for (int s = k + 1; s <= ac.N; ++s)
                if (std::abs(lhs - ac.z[size_t(s - 1)] / ac.d[size_t(s - 1)]) < 1e-9)
                    ac.condition_on_z_ok = false;
            for (int l = k + 1; l <= ac.N; ++l)
                for (int v = l + 1; v <= ac.N; ++v)
                    if (std::abs(ac.z[size_t(l - 1)] / ac.d[size_t(l - 1)] -
                                 ac.z[size_t(v - 1)] / ac.d[size_t(v - 1)]) < 1e-9)
                        ac.condition_on_z_ok = false;
        }
    }
    return ac;
}

// Branch label of one eigenvalue: k >= 1 for a segment branch, k = 0 for the
// finite part Lambda_j.
struct BranchLabel {
    int k = 0;
    int n = 0;
};

struct BranchAssignment {
    std::vector<BranchLabel> labels;  // aligned with the input spectrum
    std::vector<std::string> anomalies;
    bool ok = true;
};

// Greedy nearest-prediction assignment in rho space, ring by ring; ties go to the
// smaller branch index. Unmatched eigenvalues fall into the Lambda_j pool, whose
// final size is checked against the theoretical count.
inline BranchAssignment assign_branches(const AsymptoticConstants& ac,
                                        const std::vector<double>& spectrum, int j,
                                        bool strict = false) {
    BranchAssignment out;
    out.labels.assign(spectrum.size(), BranchLabel{});
    if (spectrum.empty()) return out;
    if (ac.N == 0) {
        // pure finite part
        if (strict && static_cast<int>(spectrum.size()) != ac.lambda_finite_count(j))
            throw AssignmentError("discrete spectrum size != M-2");
        return out;
    }
    if (!ac.commensurable) {
        out.ok = false;
        out.anomalies.push_back("not commensurable: branch assignment skipped");
        return out;
    }

    double lam_max = spectrum.back();
    struct Pred {
        double rho;
        int k, n;
        bool used = false;
    };
    std::vector<Pred> preds;
    for (int k = 1; k <= ac.N; ++k) {
        for (int n = 1;; ++n) {
            double lam = ac.lambda_pred(k, n, j);
            preds.push_back({ac.rho_pred(k, n, j), k, n, false});
            if (lam > lam_max * 1.2 + 10.0) break;
        }
    }

    // ring index of a lambda value (first B with lambda < R_B)
    auto ring_of = [&](double lam) {
        if (lam < 0) return 0;
        double t = std::sqrt(std::max(lam, 0.0)) * 2.0 * ac.D / kPi;  // B + 1/2 scale
        int B = static_cast<int>(std::ceil(t - 0.5));
        return std::max(B, 0);
    };

    int max_ring = ring_of(lam_max);
    std::vector<std::vector<int>> eig_in_ring(static_cast<size_t>(max_ring + 1));
    for (size_t i = 0; i < spectrum.size(); ++i)
        eig_in_ring[static_cast<size_t>(ring_of(spectrum[i]))].push_back(static_cast<int>(i));
    std::vector<std::vector<int>> pred_in_ring(static_cast<size_t>(max_ring + 1));
    for (size_t i = 0; i < preds.size(); ++i) {
        int B = ring_of(preds[i].rho * preds[i].rho);
        if (B <= max_ring) pred_in_ring[static_cast<size_t>(B)].push_back(static_cast<int>(i));
    }

    int lambda_pool = 0;
    for (int B = 0; B <= max_ring; ++B) {
        auto& eigs = eig_in_ring[static_cast<size_t>(B)];
        auto& prds = pred_in_ring[static_cast<size_t>(B)];
        struct Pair {
            double dist;
            int e, p;
        };
        std::vector<Pair> pairs;
        for (int e : eigs) {
            double rho = spectrum[static_cast<size_t>(e)] >= 0
                             ? std::sqrt(spectrum[static_cast<size_t>(e)])
                             : -1.0;
            for (int pi : prds)
                pairs.push_back({std::abs(rho - preds[static_cast<size_t>(pi)].rho), e, pi});
        }
        std::stable_sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
            if (a.dist != b.dist) return a.dist < b.dist;
            return preds[static_cast<size_t>(a.p)].k < preds[static_cast<size_t>(b.p)].k;
        });
        std::vector<bool> eig_used(spectrum.size(), false);
        for (const Pair& pr : pairs) {
            if (eig_used[static_cast<size_t>(pr.e)] || preds[static_cast<size_t>(pr.p)].used)
                continue;
            // only accept matches within half the ring width in rho
            if (pr.dist > kPi / (2.0 * ac.D) * 0.75 + 0.5) continue;
            eig_used[static_cast<size_t>(pr.e)] = true;
            preds[static_cast<size_t>(pr.p)].used = true;
            out.labels[static_cast<size_t>(pr.e)] =
                BranchLabel{preds[static_cast<size_t>(pr.p)].k, preds[static_cast<size_t>(pr.p)].n};
        }
        for (int e : eigs)
            if (!eig_used[static_cast<size_t>(e)]) ++lambda_pool;
        if (B >= 2 && static_cast<int>(eigs.size()) > ac.N + ac.lambda_finite_count(j)) {
            out.ok = false;
            out.anomalies.push_back("ring " + std::to_string(B) + " holds " +
                                    std::to_string(eigs.size()) + " eigenvalues");
            if (strict) throw AssignmentError(out.anomalies.back());
        }
    }
    if (lambda_pool != ac.lambda_finite_count(j)) {
        out.anomalies.push_back("Lambda_" + std::to_string(j) + " pool size " +
                                std::to_string(lambda_pool) + " vs theoretical " +
                                std::to_string(ac.lambda_finite_count(j)) +
                                " (finite-size effect at small n)");
    }
    return out;
}

} // namespace slts

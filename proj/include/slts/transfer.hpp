#pragma once

#include <cmath>
#include <complex>
#include <string>

#include "slts/errors.hpp"
#include "slts/potential.hpp"
#include "slts/time_scale.hpp"

namespace slts {

// Jump matrix alpha^l(lambda) transporting (y, y^Delta) across the gap between
// block l and block l+1, together with its analytic lambda-derivative.
// Entries: a11 = 1, a12 = gap, a21 = gap*(q(b_l)-lambda), a22 = 1 + gap^2*(q(b_l)-lambda).
struct JumpMatrix {
    double a11 = 1.0, a12 = 0.0, a21 = 0.0, a22 = 1.0;
    double da21 = 0.0, da22 = 0.0;  // d/d lambda; rows 1 are constant in lambda
    double gap = 0.0, qb = 0.0;
    double det() const { return a11 * a22 - a12 * a21; }
};

template <class Scalar>
struct JumpMatrixValues {
    Scalar a11, a12, a21, a22;
};

template <class Scalar>
inline JumpMatrixValues<Scalar> alpha_values(double gap, double qb, Scalar lambda) {
    Scalar w = (qb - lambda);
    return {Scalar(1.0), Scalar(gap), gap * w, Scalar(1.0) + gap * gap * w};
}

inline void check_gap_index(const TimeScale& ts, int l) {
    if (l < 1 || l > ts.block_count() - 1)
        throw IndexError("gap index l=" + std::to_string(l));
}

inline JumpMatrix alpha_matrix(const TimeScale& ts, const Potential& p, int l, double lambda) {
    check_gap_index(ts, l);
    JumpMatrix m;
    m.gap = ts.gap(l);
    m.qb = p.value_at_block_end(l);  // throws MissingPointValueError outside T^{0^2}
    auto v = alpha_values(m.gap, m.qb, lambda);
    m.a11 = v.a11;
    m.a12 = v.a12;
    m.a21 = v.a21;
    m.a22 = v.a22;
    m.da21 = -m.gap;
    m.da22 = -m.gap * m.gap;
    return m;
}

// Ordered product beta^{l_k - s} = alpha^{l_k-1} ... alpha^{l_k-s} with its
// lambda-derivative, propagated by the product rule. For the terminal family
// k = N+1 (only when mu1 = 1) the product is a 1x2 row.
struct BetaProduct {
    bool is_row = false;
    int k = 0, s = 0;
    double b11 = 1.0, b12 = 0.0, b21 = 0.0, b22 = 1.0;
    double d11 = 0.0, d12 = 0.0, d21 = 0.0, d22 = 0.0;
    double det() const {
        if (is_row) throw IndexError("det of a row beta product");
        return b11 * b22 - b12 * b21;
    }
};

namespace detail {

// out = out * alpha (value and derivative), where alpha rows 1 are lambda-free.
inline void right_multiply(BetaProduct& m, const JumpMatrix& a) {
    double n11 = m.b11 * a.a11 + m.b12 * a.a21;
    double n12 = m.b11 * a.a12 + m.b12 * a.a22;
    double e11 = m.d11 * a.a11 + m.d12 * a.a21 + m.b12 * a.da21;
    double e12 = m.d11 * a.a12 + m.d12 * a.a22 + m.b12 * a.da22;
    double n21 = 0, n22 = 0, e21 = 0, e22 = 0;
    if (!m.is_row) {
        n21 = m.b21 * a.a11 + m.b22 * a.a21;
        n22 = m.b21 * a.a12 + m.b22 * a.a22;
        e21 = m.d21 * a.a11 + m.d22 * a.a21 + m.b22 * a.da21;
        e22 = m.d21 * a.a12 + m.d22 * a.a22 + m.b22 * a.da22;
    }
    m.b11 = n11; m.b12 = n12; m.b21 = n21; m.b22 = n22;
    m.d11 = e11; m.d12 = e12; m.d21 = e21; m.d22 = e22;
}

} // namespace detail

inline BetaProduct beta_product(const TimeScale& ts, const Potential& p, int k, int s,
                                double lambda) {
    int n_seg = ts.num_segments();
    int k_max = n_seg + ts.mu1();
    if (k < 1 || k > k_max) throw IndexError("beta family k=" + std::to_string(k));
    int lk = ts.segment_block(k);
    int lk_prev = ts.segment_block(k - 1);
    if (s < 1 || s > lk - lk_prev) throw IndexError("beta shift s=" + std::to_string(s));

    BetaProduct m;
    m.k = k;
    m.s = s;
    int top = lk - 1;  // highest gap index in the product
    if (k == n_seg + 1) {
        // terminal family: the topmost factor is the first row of alpha^{N+M-1}
        m.is_row = true;
        m.b11 = 1.0;
        m.b12 = ts.gap(top);
        for (int l = top - 1; l >= lk - s; --l)
            detail::right_multiply(m, alpha_matrix(ts, p, l, lambda));
    } else {
        detail::right_multiply(m, alpha_matrix(ts, p, top, lambda));
        for (int l = top - 1; l >= lk - s; --l)
            detail::right_multiply(m, alpha_matrix(ts, p, l, lambda));
    }
    return m;
}

// Full run beta^{l_k}: the transfer between segment k and segment k+1 (or the
// scale ends). beta^{l_N} = (1, 0) by convention when the N-th segment is last.
inline BetaProduct beta_run(const TimeScale& ts, const Potential& p, int k, double lambda) {
    int n_seg = ts.num_segments();
    if (k < 1 - ts.mu0() || k > n_seg) throw IndexError("beta run k=" + std::to_string(k));
    if (k == n_seg && ts.segment_block(n_seg) == ts.block_count()) {
        BetaProduct m;
        m.is_row = true;
        m.k = n_seg;
        m.s = 0;
        m.b11 = 1.0;
        m.b12 = 0.0;
        return m;
    }
    int lk = ts.segment_block(k);
    int lk_next = ts.segment_block(k + 1);
    return beta_product(ts, p, k + 1, lk_next - lk, lambda);
}

struct LeadingTerm {
    double coeff = 0.0;  // coefficient of lambda^degree, sign (-1)^degree folded in
    int degree = 0;
};

// Leading term of the polynomial beta^{l_{k-1}}_{ij}(lambda) per the gap-product
// formula; single-gap runs reduce to the bare alpha entries.
inline LeadingTerm beta_leading_term(const TimeScale& ts, int k, int i, int j) {
    int n_seg = ts.num_segments();
    int k_lo = 2 - ts.mu0();
    int k_hi = n_seg + ts.mu1();
    if (k < k_lo || k > k_hi) throw IndexError("leading-term k=" + std::to_string(k));
    int i_max = (k == n_seg + 1) ? 1 : 2;
    if (i < 1 || i > i_max) throw IndexError("leading-term i=" + std::to_string(i));
    if (j < 1 || j > 2) throw IndexError("leading-term j=" + std::to_string(j));

    int l_prev = ts.segment_block(k - 1);
    int l_cur = ts.segment_block(k);
    int L = l_cur - l_prev;  // number of gaps in the run
    LeadingTerm out;
    if (L == 1) {
        double g = ts.gap(l_prev);
        out.degree = i - 1;
        out.coeff = std::pow(g, i + j - 2) * (i == 2 ? -1.0 : 1.0);
        return out;
    }
    out.degree = L - 2 + i;
    double c = std::pow(ts.gap(l_prev), j) * std::pow(ts.gap(l_cur - 1), i);
    for (int l = l_prev + 1; l <= l_cur - 2; ++l) c *= ts.gap(l) * ts.gap(l);
    out.coeff = (out.degree % 2 == 0) ? c : -c;
    return out;
}

} // namespace slts

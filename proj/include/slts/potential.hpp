#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <vector>

#include "slts/errors.hpp"
#include "slts/time_scale.hpp"

namespace slts {

// Real potential q on T^{0^2}: uniformly sampled values on each segment, scalar
// values at the isolated points of T^{0^2}. Values at points outside T^{0^2} are
// unrepresentable; the equation never reads them.
class Potential {
public:
    struct Segment {
        int block = 0;                // 1-based block index l_k
        double a = 0.0, b = 0.0;
        std::vector<double> samples;  // uniform grid including both endpoints
        double spacing() const { return (b - a) / static_cast<double>(samples.size() - 1); }
    };

    static constexpr int kMinSamples = 9;

    static Potential create(const TimeScale& ts,
                            std::vector<std::vector<double>> segment_samples,
                            std::map<int, double> point_values) {
        Potential p;
        if (static_cast<int>(segment_samples.size()) != ts.num_segments())
            throw ShapeMismatchError("expected one sample set per segment");
        for (int k = 1; k <= ts.num_segments(); ++k) {
            auto& samples = segment_samples[static_cast<size_t>(k - 1)];
            if (static_cast<int>(samples.size()) < kMinSamples)
                throw ShapeMismatchError("segment grid needs at least 9 samples");
            for (double v : samples)
                if (!std::isfinite(v)) throw NonFiniteError("potential sample not finite");
            const Block& blk = ts.block(ts.segment_block(k));
            p.segments_.push_back(Segment{ts.segment_block(k), blk.a, blk.b, std::move(samples)});
        }
        std::vector<int> required = ts.core2_isolated_blocks();
        for (int l : required) {
            auto it = point_values.find(l);
            if (it == point_values.end())
                throw MissingPointValueError("no q value for isolated point block " + std::to_string(l));
            if (!std::isfinite(it->second)) throw NonFiniteError("point value not finite");
        }
        if (point_values.size() != required.size())
            throw ShapeMismatchError("q values present for points outside T^{0^2}");
        p.point_values_ = std::move(point_values);
        return p;
    }

    // Sample q(x) = f(x) on every segment and at every isolated point of T^{0^2}.
    static Potential from_function(const TimeScale& ts, const std::function<double(double)>& f,
                                   int grid = 129) {
        std::vector<std::vector<double>> seg;
        for (int k = 1; k <= ts.num_segments(); ++k) {
            const Block& blk = ts.block(ts.segment_block(k));
            std::vector<double> samples(static_cast<size_t>(grid));
            for (int i = 0; i < grid; ++i) {
                double x = blk.a + (blk.b - blk.a) * i / (grid - 1);
                samples[static_cast<size_t>(i)] = f(x);
            }
            seg.push_back(std::move(samples));
        }
        std::map<int, double> pts;
        for (int l : ts.core2_isolated_blocks()) pts[l] = f(ts.block(l).a);
        return create(ts, std::move(seg), std::move(pts));
    }

    static Potential zero_model(const TimeScale& ts, int grid = 129) {
        return from_function(ts, [](double) { return 0.0; }, grid);
    }

    int num_segments() const { return static_cast<int>(segments_.size()); }
    const Segment& segment(int k) const {
        if (k < 1 || k > num_segments()) throw IndexError("segment index k=" + std::to_string(k));
        return segments_[static_cast<size_t>(k - 1)];
    }
    const std::map<int, double>& point_values() const { return point_values_; }

    bool has_point_value(int block) const { return point_values_.count(block) != 0; }
    double point_value(int block) const {
        auto it = point_values_.find(block);
        if (it == point_values_.end())
            throw MissingPointValueError("q not defined at block " + std::to_string(block));
        return it->second;
    }

    // q(b_l) for a gap's left endpoint: last segment sample or the point value.
    double value_at_block_end(int block) const {
        for (const Segment& s : segments_)
            if (s.block == block) return s.samples.back();
        return point_value(block);
    }

    // Piecewise cubic Lagrange interpolation on the uniform sample grid; exact at
    // the nodes and for polynomials of degree <= 3.
    double eval_segment(int k, double x) const {
        const Segment& s = segment(k);
        double slack = 1e-13 * (s.b - s.a);
        if (x < s.a - slack || x > s.b + slack) throw OutOfRangeError("x outside segment");
        x = std::clamp(x, s.a, s.b);
        int n = static_cast<int>(s.samples.size());
        double h = s.spacing();
        double u = (x - s.a) / h;
        int cell = std::clamp(static_cast<int>(std::floor(u)), 0, n - 2);
        int start = std::clamp(cell - 1, 0, n - 4);
        double t = u - start;  // position in units of h relative to stencil start
        const double* y = s.samples.data() + start;
        // Lagrange basis on nodes {0,1,2,3}
        double l0 = -(t - 1) * (t - 2) * (t - 3) / 6.0;
        double l1 = t * (t - 2) * (t - 3) / 2.0;
        double l2 = -t * (t - 1) * (t - 3) / 2.0;
        double l3 = t * (t - 1) * (t - 2) / 6.0;
        return y[0] * l0 + y[1] * l1 + y[2] * l2 + y[3] * l3;
    }

    // Integral of the interpolant over segment k (cubic cell rule, O(h^4)).
    double segment_integral(int k) const {
        const Segment& s = segment(k);
        const std::vector<double>& y = s.samples;
        int n = static_cast<int>(y.size());
        double h = s.spacing();
        double acc = (9 * y[0] + 19 * y[1] - 5 * y[2] + y[3]) / 24.0;
        for (int i = 1; i + 2 < n; ++i)
            acc += (-y[static_cast<size_t>(i - 1)] + 13 * y[static_cast<size_t>(i)] +
                    13 * y[static_cast<size_t>(i + 1)] - y[static_cast<size_t>(i + 2)]) / 24.0;
        acc += (9 * y[static_cast<size_t>(n - 1)] + 19 * y[static_cast<size_t>(n - 2)] -
                5 * y[static_cast<size_t>(n - 3)] + y[static_cast<size_t>(n - 4)]) / 24.0;
        return acc * h;
    }

    double min_value() const {
        double m = std::numeric_limits<double>::infinity();
        for (const Segment& s : segments_)
            for (double v : s.samples) m = std::min(m, v);
        for (const auto& [l, v] : point_values_) m = std::min(m, v);
        return std::isfinite(m) ? m : 0.0;
    }

    double max_value() const {
        double m = -std::numeric_limits<double>::infinity();
        for (const Segment& s : segments_)
            for (double v : s.samples) m = std::max(m, v);
        for (const auto& [l, v] : point_values_) m = std::max(m, v);
        return std::isfinite(m) ? m : 0.0;
    }

    // Potential for the tail scale T_m: same data, blocks reindexed by m-1.
    Potential restrict_to_tail(const TimeScale& ts, int m, const TimeScale& tail_ts) const {
        std::vector<std::vector<double>> seg;
        for (const Segment& s : segments_)
            if (s.block >= m) seg.push_back(s.samples);
        std::map<int, double> pts;
        for (int l : tail_ts.core2_isolated_blocks()) {
            int orig = l + m - 1;
            pts[l] = point_value(orig);
        }
        (void)ts;
        return create(tail_ts, std::move(seg), std::move(pts));
    }

private:
    std::vector<Segment> segments_;
    std::map<int, double> point_values_;
};

struct PotentialDistance {
    double l2 = 0.0;         // RMS of the difference over the union of segments
    double point_max = 0.0;  // max |q1 - q2| over isolated points
    double sup = 0.0;        // sup of |q1 - q2| over the union grid and points
};

// Pseudo-metric between two potentials on the same scale. The L2 part is
// ||q1-q2||_L2 / sqrt(total segment length) computed by trapezoid quadrature on
// the union of the two sample grids, so it is symmetric and satisfies the
// triangle inequality.
inline PotentialDistance distance(const Potential& p1, const Potential& p2) {
    if (p1.num_segments() != p2.num_segments())
        throw ShapeMismatchError("different segment counts");
    PotentialDistance d;
    double sum = 0.0, total_len = 0.0;
    for (int k = 1; k <= p1.num_segments(); ++k) {
        const auto& s1 = p1.segment(k);
        const auto& s2 = p2.segment(k);
        if (s1.a != s2.a || s1.b != s2.b)
            throw ShapeMismatchError("segment intervals differ");
        std::vector<double> grid;
        for (size_t i = 0; i < s1.samples.size(); ++i)
            grid.push_back(s1.a + (s1.b - s1.a) * static_cast<double>(i) / (s1.samples.size() - 1));
        for (size_t i = 0; i < s2.samples.size(); ++i)
            grid.push_back(s2.a + (s2.b - s2.a) * static_cast<double>(i) / (s2.samples.size() - 1));
        std::sort(grid.begin(), grid.end());
        grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
        std::vector<double> diff2(grid.size());
        for (size_t i = 0; i < grid.size(); ++i) {
            double e = p1.eval_segment(k, grid[i]) - p2.eval_segment(k, grid[i]);
            d.sup = std::max(d.sup, std::abs(e));
            diff2[i] = e * e;
        }
        for (size_t i = 0; i + 1 < grid.size(); ++i)
            sum += 0.5 * (diff2[i] + diff2[i + 1]) * (grid[i + 1] - grid[i]);
        total_len += s1.b - s1.a;
    }
    if (p1.point_values().size() != p2.point_values().size())
        throw ShapeMismatchError("different point value sets");
    for (const auto& [l, v] : p1.point_values()) {
        double e = std::abs(v - p2.point_value(l));
        d.point_max = std::max(d.point_max, e);
        d.sup = std::max(d.sup, e);
    }
    d.l2 = total_len > 0 ? std::sqrt(sum / total_len) : 0.0;
    return d;
}

// ||p - ref||_L2 / ||ref||_L2 over segments; used by round-trip reports where one
// side is the known truth.
inline double relative_l2(const Potential& ref, const Potential& p) {
    double num = 0.0, den = 0.0;
    for (int k = 1; k <= ref.num_segments(); ++k) {
        const auto& sr = ref.segment(k);
        int n = 4 * static_cast<int>(sr.samples.size());
        double h = (sr.b - sr.a) / n;
        for (int i = 0; i <= n; ++i) {
            double x = sr.a + h * i;
            double w = (i == 0 || i == n) ? 0.5 : 1.0;
            double r = ref.eval_segment(k, x);
            double e = p.eval_segment(k, x) - r;
            num += w * e * e * h;
            den += w * r * r * h;
        }
    }
    if (den <= 1e-300) return std::sqrt(num);
    return std::sqrt(num / den);
}

} // namespace slts

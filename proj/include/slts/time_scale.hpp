#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "slts/errors.hpp"

namespace slts {

// One block [a_l, b_l] of the scale; a == b marks an isolated point.
struct Block {
    double a = 0.0;
    double b = 0.0;
    bool is_segment() const { return a < b; }
    bool is_point() const { return a == b; }
};

enum class PointClass {
    isolated,        // left-isolated and right-isolated
    left_isolated,   // left-isolated, right-dense
    right_isolated,  // right-isolated, left-dense
    dense_interior,  // dense on both sides (scale endpoints count as dense by convention)
};

// A time scale made of finitely many segments and isolated points, stored as an
// ordered block list with strict gaps between consecutive blocks. Immutable after
// construction; all block indices in the public interface are 1-based.
class TimeScale {
public:
    // Validates the block list and populates derived fields. Top-level scales must
    // satisfy N > 0 or M >= 3; degenerate tails are only reachable through tail().
    static TimeScale validate(const std::vector<std::pair<double, double>>& pairs) {
        return TimeScale(pairs, /*allow_terminus=*/false);
    }

    int block_count() const { return static_cast<int>(blocks_.size()); }
    const Block& block(int l) const {
        check_block_index(l);
        return blocks_[static_cast<size_t>(l - 1)];
    }
    const std::vector<Block>& blocks() const { return blocks_; }

    int num_segments() const { return N_; }
    int num_points() const { return M_; }
    int mu0() const { return mu0_; }
    int mu1() const { return mu1_; }

    // l_k for k = 1..N, plus the conventions l_0 = 1 and l_{N+1} = N+M.
    int segment_block(int k) const {
        if (k == 0) return 1;
        if (k == N_ + 1) return block_count();
        if (k < 1 || k > N_) throw IndexError("segment index k=" + std::to_string(k));
        return segment_blocks_[static_cast<size_t>(k - 1)];
    }
    const std::vector<int>& segment_blocks() const { return segment_blocks_; }

    double segment_length(int k) const {            // d_k
        const Block& blk = block(segment_block(k));
        return blk.b - blk.a;
    }
    int delta_k(int k) const { return segment_block(k) == block_count() ? 1 : 0; }

    double min_t() const { return blocks_.front().a; }
    double max_t() const { return blocks_.back().b; }

    // a_{l+1} - b_l for l = 1..N+M-1.
    double gap(int l) const {
        if (l < 1 || l >= block_count()) throw IndexError("gap index l=" + std::to_string(l));
        return blocks_[static_cast<size_t>(l)].a - blocks_[static_cast<size_t>(l - 1)].b;
    }

    // True for tails with N = 0, M < 3: valid only as a recursion terminus.
    bool is_terminus() const { return N_ == 0 && M_ < 3; }

    // 1-based index of the block containing x, or 0 if x is not in the scale.
    // Block boundaries are compared exactly: inputs are config values, never computed.
    int find_block(double x) const {
        for (int l = 1; l <= block_count(); ++l) {
            const Block& blk = blocks_[static_cast<size_t>(l - 1)];
            if (x < blk.a) return 0;
            if (x <= blk.b) return l;
        }
        return 0;
    }

    double sigma(double x) const {
        int l = require_block(x);
        const Block& blk = blocks_[static_cast<size_t>(l - 1)];
        if (x < blk.b) return x;                       // right-dense inside a segment
        if (l == block_count()) return x;              // sigma(max T) = max T
        return blocks_[static_cast<size_t>(l)].a;
    }

    double sigma_minus(double x) const {
        int l = require_block(x);
        const Block& blk = blocks_[static_cast<size_t>(l - 1)];
        if (x > blk.a) return x;                       // left-dense inside a segment
        if (l == 1) return x;                          // sigma_minus(min T) = min T
        return blocks_[static_cast<size_t>(l - 2)].b;
    }

    PointClass classify(double x) const {
        bool left_iso = sigma_minus(x) < x;
        bool right_iso = sigma(x) > x;
        if (left_iso && right_iso) return PointClass::isolated;
        if (left_iso) return PointClass::left_isolated;
        if (right_iso) return PointClass::right_isolated;
        return PointClass::dense_interior;
    }

    // Block list of T^{0^order}. Removing max T drops the last block iff it is an
    // isolated point; segment right endpoints are left-dense and survive.
    std::vector<Block> core_blocks(int order) const {
        if (order != 1 && order != 2) throw IndexError("core order must be 1 or 2");
        std::vector<Block> out = blocks_;
        for (int r = 0; r < order; ++r) {
            if (!out.empty() && out.back().is_point()) out.pop_back();
            else break;
        }
        return out;
    }

    std::vector<Block> truncated_core(int order) const {
        std::vector<Block> out = core_blocks(order);
        if (out.empty() && order == 2)
            throw EmptyCoreError("T^{0^2} is empty: equation poses no constraint");
        return out;
    }

    int core2_block_count() const { return static_cast<int>(core_blocks(2).size()); }

    // 1-based indices of the isolated points belonging to T^{0^2}; these are exactly
    // the blocks where a point value of the potential must be specified.
    std::vector<int> core2_isolated_blocks() const {
        int keep = core2_block_count();
        std::vector<int> out;
        for (int l = 1; l <= keep; ++l)
            if (blocks_[static_cast<size_t>(l - 1)].is_point()) out.push_back(l);
        return out;
    }

    // Tail scale T_m over blocks m..N+M. Degenerate tails (N = 0, M < 3) are allowed
    // as recursion termini of the peeling algorithm.
    TimeScale tail(int m) const {
        if (m < 1 || m > block_count() - mu1_)
            throw IndexError("tail start m=" + std::to_string(m) +
                             " outside 1..N+M-mu1=" + std::to_string(block_count() - mu1_));
        std::vector<std::pair<double, double>> pairs;
        for (int l = m; l <= block_count(); ++l) {
            const Block& blk = blocks_[static_cast<size_t>(l - 1)];
            pairs.emplace_back(blk.a, blk.b);
        }
        return TimeScale(pairs, /*allow_terminus=*/true);
    }

private:
    TimeScale(const std::vector<std::pair<double, double>>& pairs, bool allow_terminus) {
        if (pairs.empty()) throw DegenerateError("empty block list");
        blocks_.reserve(pairs.size());
        for (const auto& [a, b] : pairs) {
            if (!std::isfinite(a) || !std::isfinite(b))
                throw NonFiniteError("block endpoints must be finite");
            if (a > b) throw OverlapError("block with a > b");
            blocks_.push_back(Block{a, b});
        }
        for (size_t l = 1; l < blocks_.size(); ++l)
            if (blocks_[l - 1].b >= blocks_[l].a)
                throw OverlapError("blocks must be separated by strict gaps");
        for (int l = 1; l <= block_count(); ++l) {
            if (blocks_[static_cast<size_t>(l - 1)].is_segment()) segment_blocks_.push_back(l);
        }
        N_ = static_cast<int>(segment_blocks_.size());
        M_ = block_count() - N_;
        mu0_ = blocks_.front().is_point() ? 1 : 0;
        mu1_ = blocks_.back().is_point() ? 1 : 0;
        if (!allow_terminus && N_ == 0 && M_ < 3)
            throw DegenerateError("need N > 0 or M >= 3");
    }

    void check_block_index(int l) const {
        if (l < 1 || l > block_count()) throw IndexError("block index l=" + std::to_string(l));
    }

    int require_block(double x) const {
        int l = find_block(x);
        if (l == 0) throw NotInScaleError("x not in scale");
        return l;
    }

    std::vector<Block> blocks_;
    std::vector<int> segment_blocks_;
    int N_ = 0, M_ = 0, mu0_ = 0, mu1_ = 0;
};

} // namespace slts

#include <catch2/catch_amalgamated.hpp>

#include "slts/time_scale.hpp"

#include <random>

using namespace slts;

TEST_CASE("validate populates derived fields") {
    SECTION("single segment") {
        TimeScale ts = TimeScale::validate({{0.0, 3.141592653589793}});
        CHECK(ts.num_segments() == 1);
        CHECK(ts.num_points() == 0);
        CHECK(ts.mu0() == 0);
        CHECK(ts.mu1() == 0);
        CHECK(ts.segment_block(1) == 1);
    }
    SECTION("pure discrete minimal case") {
        TimeScale ts = TimeScale::validate({{0, 0}, {1, 1}, {2, 2}});
        CHECK(ts.num_segments() == 0);
        CHECK(ts.num_points() == 3);
        CHECK(ts.mu0() == 1);
        CHECK(ts.mu1() == 1);
    }
    SECTION("mixed scale") {
        TimeScale ts = TimeScale::validate({{0, 0}, {1, 2}, {3, 3}});
        CHECK(ts.num_segments() == 1);
        CHECK(ts.num_points() == 2);
        CHECK(ts.segment_block(1) == 2);
        CHECK(ts.mu0() == 1);
        CHECK(ts.mu1() == 1);
    }
    SECTION("violated gap") {
        CHECK_THROWS_AS(TimeScale::validate({{0, 1}, {0.5, 2}}), OverlapError);
    }
    SECTION("degenerate and malformed inputs") {
        CHECK_THROWS_AS(TimeScale::validate({{0, 0}, {1, 1}}), DegenerateError);
        CHECK_THROWS_AS(TimeScale::validate({}), DegenerateError);
        CHECK_THROWS_AS(TimeScale::validate({{1, 0}}), OverlapError);
        double inf = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(TimeScale::validate({{0, inf}}), NonFiniteError);
    }
}

TEST_CASE("jump functions") {
    TimeScale ts = TimeScale::validate({{0, 0}, {1, 2}});
    CHECK(ts.sigma(0) == 1.0);
    CHECK(ts.sigma(1.5) == 1.5);
    CHECK(ts.sigma(2) == 2.0);  // max convention
    CHECK(ts.sigma_minus(1) == 0.0);
    CHECK(ts.sigma_minus(0) == 0.0);  // min convention
    CHECK(ts.sigma_minus(1.7) == 1.7);
    CHECK_THROWS_AS(ts.sigma(0.5), NotInScaleError);
    CHECK_THROWS_AS(ts.sigma_minus(2.5), NotInScaleError);

    CHECK(ts.classify(0) == PointClass::right_isolated);  // min is left-dense by convention
    CHECK(ts.classify(1) == PointClass::left_isolated);
    CHECK(ts.classify(1.5) == PointClass::dense_interior);
    TimeScale td = TimeScale::validate({{0, 0}, {1, 1}, {2, 2}});
    CHECK(td.classify(1) == PointClass::isolated);
}

TEST_CASE("truncated cores") {
    SECTION("remove max twice") {
        TimeScale ts = TimeScale::validate({{0, 0}, {1, 1}, {2, 2}});
        auto core = ts.truncated_core(2);
        REQUIRE(core.size() == 1);
        CHECK(core[0].a == 0.0);
        CHECK(core[0].b == 0.0);
    }
    SECTION("right endpoint left-dense: no removal") {
        TimeScale ts = TimeScale::validate({{0.0, 3.141592653589793}});
        auto core = ts.truncated_core(2);
        REQUIRE(core.size() == 1);
        CHECK(core[0].is_segment());
    }
    SECTION("segment plus trailing point") {
        TimeScale ts = TimeScale::validate({{0, 1}, {2, 2}});
        auto core = ts.truncated_core(2);
        REQUIRE(core.size() == 1);
        CHECK(core[0].b == 1.0);
    }
    SECTION("empty core throws at order 2") {
        TimeScale ts = TimeScale::validate({{0, 0}, {1, 1}, {2, 2}});
        TimeScale tail = ts.tail(2);  // {1, 2}: T^{0^2} empty
        CHECK_THROWS_AS(tail.truncated_core(2), EmptyCoreError);
    }
}

TEST_CASE("tails") {
    TimeScale ts = TimeScale::validate({{0, 0}, {1, 2}, {3, 3}});
    SECTION("drop leading point") {
        TimeScale t2 = ts.tail(2);
        REQUIRE(t2.block_count() == 2);
        CHECK(t2.block(1).a == 1.0);
        CHECK(t2.block(1).b == 2.0);
        CHECK(t2.num_segments() == 1);
    }
    SECTION("identity tail") {
        TimeScale t1 = ts.tail(1);
        CHECK(t1.block_count() == ts.block_count());
    }
    SECTION("terminus tail permitted") {
        TimeScale ts2 = TimeScale::validate({{0, 1}, {2, 2}, {3, 3}});
        TimeScale t2 = ts2.tail(2);
        CHECK(t2.num_segments() == 0);
        CHECK(t2.num_points() == 2);
        CHECK(t2.is_terminus());
    }
    SECTION("index bounds honor mu1") {
        CHECK_THROWS_AS(ts.tail(3), IndexError);  // m <= N+M-mu1 = 2
        CHECK_THROWS_AS(ts.tail(0), IndexError);
    }
    SECTION("re-truncation is idempotent") {
        TimeScale t2 = ts.tail(2);
        TimeScale t2b = t2.tail(1);
        REQUIRE(t2b.block_count() == t2.block_count());
        for (int l = 1; l <= t2.block_count(); ++l) {
            CHECK(t2b.block(l).a == t2.block(l).a);
            CHECK(t2b.block(l).b == t2.block(l).b);
        }
    }
}

TEST_CASE("randomized scale properties") {
    std::mt19937_64 rng(20240811);
    std::uniform_real_distribution<double> gap(0.3, 3.0);
    std::uniform_real_distribution<double> len(0.5, 2.0);
    std::bernoulli_distribution is_seg(0.5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<double, double>> blocks;
        double x = -2.0;
        int nseg = 0;
        int nblocks = 3 + static_cast<int>(rng() % 4);
        for (int i = 0; i < nblocks; ++i) {
            if (is_seg(rng)) {
                double d = len(rng);
                blocks.emplace_back(x, x + d);
                x += d + gap(rng);
                ++nseg;
            } else {
                blocks.emplace_back(x, x);
                x += gap(rng);
            }
        }
        if (nseg == 0 && nblocks < 3) continue;
        TimeScale ts = TimeScale::validate(blocks);

        // sigma(sigma_minus(x)) = x for isolated points strictly inside T
        for (int l = 2; l < ts.block_count(); ++l) {
            if (!ts.block(l).is_point()) continue;
            double p = ts.block(l).a;
            CHECK(ts.sigma(ts.sigma_minus(p)) == p);
            CHECK(ts.sigma_minus(ts.sigma(p)) == p);
        }
        // blocks are inside T, gaps are outside
        for (int l = 1; l <= ts.block_count(); ++l) {
            CHECK(ts.find_block(ts.block(l).a) == l);
            CHECK(ts.find_block(ts.block(l).b) == l);
            if (l < ts.block_count())
                CHECK(ts.find_block(0.5 * (ts.block(l).b + ts.block(l + 1).a)) == 0);
        }
        // isolated-point count in the core is exact
        int removed = 0;
        int last = ts.block_count();
        if (ts.block(last).is_point()) {
            ++removed;
            if (last >= 2 && ts.block(last - 1).is_point()) ++removed;
        }
        CHECK(static_cast<int>(ts.core2_isolated_blocks().size()) == ts.num_points() - removed);
    }
}

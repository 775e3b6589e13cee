#include <doctest.h>

#include <cmath>

#include "qmel/classical.hpp"

using namespace qmel;

namespace {
Rational R(std::int64_t a, std::int64_t b = 1) { return Rational(a, b); }
}  // namespace

TEST_CASE("build_map offsets and branches") {
    auto m = build_map({2, 2});
    CHECK(m.branches[0] == Interval{R(0), R(1, 2)});
    CHECK(m.branches[1] == Interval{R(1, 2), R(1)});
    CHECK(m.offsets[0] == R(0));
    CHECK(m.offsets[1] == R(-1));

    auto t = build_map({2, 4, 4});
    CHECK(t.branches[1] == Interval{R(1, 2), R(3, 4)});
    CHECK(t.branches[2] == Interval{R(3, 4), R(1)});
    CHECK(t.offsets == std::vector<Rational>{R(0), R(-2), R(-3)});
    REQUIRE(t.uniform_base);
    CHECK(*t.uniform_base == 2);
    CHECK(t.exponents == std::vector<int>{1, 2, 2});

    CHECK_THROWS_AS(build_map({3, 3, 2}), SlopeSumError);
    CHECK_THROWS_AS(build_map({3, 3}), SlopeSumError);
    CHECK_THROWS_AS(build_map({1}), SlopeRangeError);

    auto g = build_map({6, 6, 6, 4, 4});
    CHECK_FALSE(g.uniform_base.has_value());
    auto u = build_map({4, 4, 4, 4});
    CHECK(*u.uniform_base == 2);
    CHECK(u.exponents == std::vector<int>{2, 2, 2, 2});
}

TEST_CASE("apply_map exact") {
    CHECK(apply_map(build_map({2, 2}), R(1, 3), 1) == R(2, 3));
    auto t = build_map({2, 4, 4});
    CHECK(apply_map(t, R(5, 8), 1) == R(1, 2));
    for (int n = 0; n < 20; ++n) CHECK(apply_map(t, R(0), n) == R(0));
    // right-open branches: 1/2 belongs to the second branch
    CHECK(apply_map(t, R(1, 2), 1) == R(0));
    CHECK(apply_map(t, R(1), 1) == R(1));
}

TEST_CASE("transfer matrices") {
    auto B2 = transfer_matrix(build_map({2, 2}), 2);
    CHECK(B2.at(0, 0) == R(1, 2));
    CHECK(B2.at(1, 1) == R(1, 2));

    auto B4 = transfer_matrix(build_map({2, 2}), 4);
    int expect[4][4] = {{1, 1, 0, 0}, {0, 0, 1, 1}, {1, 1, 0, 0}, {0, 0, 1, 1}};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(B4.at(i, j) == R(expect[i][j], 2));

    auto C = transfer_matrix(build_map({2, 4, 4}), 4);
    Rational e[4][4] = {{R(1, 2), R(1, 2), R(0), R(0)},
                        {R(0), R(0), R(1, 2), R(1, 2)},
                        {R(1, 4), R(1, 4), R(1, 4), R(1, 4)},
                        {R(1, 4), R(1, 4), R(1, 4), R(1, 4)}};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(C.at(i, j) == e[i][j]);

    CHECK_THROWS_AS(transfer_matrix(build_map({2, 4, 4}), 2), PartitionAlignmentError);
    CHECK_THROWS_AS(transfer_matrix(build_map({3, 3, 3}), 4), PartitionAlignmentError);
}

TEST_CASE("transfer matrices are doubly stochastic with entries 0 or 1/slope") {
    struct Case {
        std::vector<int> slopes;
        std::vector<int> sizes;
    };
    std::vector<Case> cases = {{{2, 2}, {2, 8, 64, 1024, 4096}},
                               {{2, 4, 4}, {4, 16, 256, 4096}},
                               {{3, 3, 3}, {3, 9, 81, 729}},
                               {{6, 6, 6, 4, 4}, {12, 144, 1728}},
                               {{4, 2, 4}, {4, 64}}};
    for (const auto& c : cases) {
        auto m = build_map(c.slopes);
        for (int N : c.sizes) {
            auto B = transfer_matrix(m, N);
            CHECK(B.doubly_stochastic());
            for (int i = 0; i < N; ++i) {
                auto j = m.branch_of(Rational(i, N));
                for (const auto& [col, v] : B.rows[i]) CHECK(v == Rational(1, m.slopes[j]));
            }
        }
    }
}

TEST_CASE("decompose") {
    auto g = build_map({6, 6, 6, 4, 4});
    auto d = decompose(g);
    CHECK(d.p == 2);
    CHECK(d.N0 == 12);
    REQUIRE(d.blocks.size() == 2);
    CHECK(d.blocks[0].interval == Interval{R(0), R(1, 2)});
    CHECK(d.blocks[0].slope_bar == 3);
    CHECK(d.blocks[1].interval == Interval{R(1, 2), R(1)});
    CHECK(d.blocks[1].slope_bar == 2);

    for (int N : {12, 144}) {
        auto B = transfer_matrix(g, N);
        auto Bbd = transfer_matrix(d.block_map, N);
        auto Bbar = transfer_matrix(d.uniform_map, N);
        CHECK(Bbd.doubly_stochastic());
        CHECK(B == Bbd * Bbar);
    }

    auto u = decompose(build_map({2, 2}));
    CHECK(u.p == 2);
    REQUIRE(u.blocks.size() == 1);
    CHECK(u.blocks[0].slope_bar == 1);
    CHECK(u.N0 == 2);

    CHECK_THROWS_AS(decompose(build_map({2, 4, 4})), NotDecomposableError);
    CHECK_THROWS_AS(decompose(build_map({2, 3, 6})), NotDecomposableError);
    // reduced slopes 2 and 4 share a factor
    CHECK_THROWS_AS(decompose(build_map({4, 4, 8, 8, 8, 8})), NotDecomposableError);

    // two sub-blocks of the same slope: p=3, reduced slopes (2,2,2,2,3,3,3)
    auto h = build_map({6, 6, 6, 6, 9, 9, 9});
    auto dh = decompose(h);
    CHECK(dh.p == 3);
    CHECK(dh.N0 == 18);
    auto Bh = transfer_matrix(h, 18);
    CHECK(Bh == transfer_matrix(dh.block_map, 18) * transfer_matrix(dh.uniform_map, 18));
}

TEST_CASE("cylinder intervals") {
    CHECK(cylinder_interval(2, "1") == Interval{R(1, 2), R(1)});
    CHECK(cylinder_interval(2, "10") == Interval{R(1, 2), R(3, 4)});
    CHECK(cylinder_interval(3, "21") == Interval{R(7, 9), R(8, 9)});
    CHECK(cylinder_interval(2, "") == Interval{R(0), R(1)});
    CHECK_THROWS_AS(cylinder_interval(2, "2"), DigitRangeError);
    CHECK_THROWS_AS(cylinder_interval(3, "1a"), DigitRangeError);
}

TEST_CASE("one step of T_p shifts cylinders by the branch exponent") {
    auto t = build_map({2, 4, 4});
    for (int m = 1; m <= 10; ++m) {
        for (const auto& x : all_strings("01", m)) {
            auto cyl = cylinder_interval(2, x);
            std::size_t j = t.branch_of(cyl.lo);
            if (!t.branches[j].contains(cyl)) continue;
            int n = t.exponents[j];
            Interval img{apply_map(t, cyl.lo), Rational(t.slopes[j]) * cyl.hi + t.offsets[j]};
            CHECK(img == cylinder_interval(2, x.substr(n)));
        }
    }
}

TEST_CASE("entropy and pressure") {
    CylinderTable uni;
    for (const auto& s : all_strings("01", 5)) uni.entries[s] = 1.0 / 32;
    CHECK(classical_entropy(uni) == doctest::Approx(5 * std::log(2.0)).epsilon(1e-14));

    CylinderTable point;
    point.entries["0101"] = 1.0;
    point.entries["0000"] = 0.0;
    CHECK(classical_entropy(point) == 0.0);

    CylinderTable t;
    t.entries = {{"1", 0.5}, {"2", 0.25}, {"3", 0.25}};
    auto one = [](const std::string&) { return 1.0; };
    CHECK(classical_entropy(t) == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-14));
    CHECK(classical_pressure(t, one) == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-14));

    // p_v = h - sum mu log prod slope with v = prod slope^{-1/2}
    auto m = build_map({2, 4, 4});
    double expect = 1.5 * std::log(2.0) + 0.5 * std::log(2.0) + 0.5 * std::log(4.0);
    CHECK(classical_pressure(t, branch_weights(m)) == doctest::Approx(expect).epsilon(1e-14));

    CylinderTable bad;
    bad.entries["0"] = -0.1;
    CHECK_THROWS_AS(classical_entropy(bad), NegativeWeightError);
}

TEST_CASE("ks entropy estimate") {
    auto bern = [](const std::string& s) { return std::pow(0.5, static_cast<double>(s.size())); };
    auto est = ks_entropy_estimate(bern, "01", 10);
    for (double h : est.h_over_n) CHECK(h == doctest::Approx(std::log(2.0)).epsilon(1e-13));

    // odd positions deterministic (digit 1), even positions uniform
    auto alt = [](const std::string& s) {
        double w = 1.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i % 2 == 0) w *= (s[i] == '1') ? 1.0 : 0.0;
            else w *= 0.5;
        }
        return w;
    };
    auto e1 = ks_entropy_estimate(alt, "01", 14);
    CHECK(e1.estimate == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-13));
    CHECK(e1.h_over_n[0] == 0.0);

    auto broken = [](const std::string& s) { return s.size() == 1 ? 0.5 : 0.3; };
    CHECK_THROWS_AS(ks_entropy_estimate(broken, "01", 3), InconsistentMeasureError);
}

TEST_CASE("entropy subadditivity on product measures") {
    const double a = 0.3;
    auto prod = [a](const std::string& s) {
        double w = 1.0;
        for (char c : s) w *= (c == '0') ? a : 1.0 - a;
        return w;
    };
    auto markov = [](const std::string& s) {
        if (s.empty()) return 1.0;
        double w = 0.5;
        for (std::size_t i = 1; i < s.size(); ++i) w *= (s[i] == s[i - 1]) ? 0.8 : 0.2;
        return w;
    };
    for (const MeasureOracle& o : {MeasureOracle(prod), MeasureOracle(markov)}) {
        std::vector<double> h(13, 0.0);
        for (int n = 1; n <= 12; ++n) h[n] = classical_entropy(tabulate(o, "01", n));
        for (int n = 1; n <= 12; ++n)
            for (int m = 1; n + m <= 12; ++m) CHECK(h[n + m] <= h[n] + h[m] + 1e-12);
    }
}

TEST_CASE("branch prefixes") {
    CHECK(branch_prefixes(build_map({2, 4, 4})) == std::vector<std::string>{"0", "10", "11"});
    CHECK(branch_prefixes(build_map({2, 2})) == std::vector<std::string>{"0", "1"});
    CHECK_THROWS_AS(branch_prefixes(build_map({4, 2, 4})), NotTpError);
    CHECK_THROWS_AS(branch_prefixes(build_map({6, 6, 6, 4, 4})), NotTpError);
    CHECK(branch_prefixes(build_map({3, 3, 3})) == std::vector<std::string>{"0", "1", "2"});
}

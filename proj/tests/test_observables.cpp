#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "qmel/observables.hpp"

using namespace qmel;

namespace {

UnitaryOperator t244(int k) { return tensorial_nonuniform(build_map({2, 4, 4}), {dft(2), dft(2)}, k); }

}  // namespace

TEST_CASE("op_quantize cell averages") {
    auto one = op_quantize(obs_const(1.0), 16).diagonal;
    CHECK((one.array() - 1.0).abs().maxCoeff() < 1e-15);

    auto x = op_quantize(obs_x(), 4).diagonal;
    for (int i = 0; i < 4; ++i) CHECK(std::abs(x[i] - (2 * i + 1) / 8.0) < 1e-15);

    auto ind = op_quantize(obs_indicator(0.5, 1.0), 4).diagonal;
    CHECK(ind[0] == 0.0);
    CHECK(ind[1] == 0.0);
    CHECK(std::abs(ind[2] - 1.0) < 1e-15);
    CHECK(std::abs(ind[3] - 1.0) < 1e-15);

    // kink at 1/2 inside the middle cell
    auto hat = op_quantize(obs_hat(), 3).diagonal;
    CHECK(std::abs(hat[1] - 5.0 / 6.0) < 1e-15);
    CHECK(std::abs(hat[0] - 1.0 / 3.0) < 1e-15);

    auto s = op_quantize(obs_sin(), 8).diagonal;
    for (int i = 0; i < 8; ++i) {
        double a = i / 8.0, b = (i + 1) / 8.0;
        double exact = 8.0 * (std::cos(2 * std::numbers::pi * a) - std::cos(2 * std::numbers::pi * b)) / (2 * std::numbers::pi);
        CHECK(std::abs(s[i] - exact) < 1e-14);
    }

    auto bad = Observable{"nan", [](double) { return std::nan(""); }, {}};
    CHECK_THROWS_AS(op_quantize(bad, 4), IntegrationError);
}

TEST_CASE("composition with the map") {
    auto t = build_map({2, 4, 4});
    auto fx = op_quantize(compose(obs_x(), t, 1), 4).diagonal;
    CHECK(std::abs(fx[0] - 0.25) < 1e-15);
    CHECK(std::abs(fx[1] - 0.75) < 1e-15);
    CHECK(std::abs(fx[2] - 0.5) < 1e-15);
    CHECK(std::abs(fx[3] - 0.5) < 1e-15);

    // cell [3/8,1/2] under T^2: first 2x in [3/4,1], then 4y-3 covers [0,1]
    auto f2 = op_quantize(compose(obs_x(), t, 2), 8).diagonal;
    CHECK(std::abs(f2[3] - 0.5) < 1e-14);
    // a coarse grid still integrates exactly thanks to breakpoint splitting
    auto coarse = op_quantize(compose(obs_x(), t, 3), 2).diagonal;
    CHECK(std::abs(coarse[0] - 0.5) < 1e-14);
    CHECK(std::abs(coarse[1] - 0.5) < 1e-14);
}

TEST_CASE("Op is linear, positive and contractive") {
    const long N = 64;
    auto a = op_quantize(obs_sin(), N).diagonal;
    auto b = op_quantize(obs_hat(), N).diagonal;
    Observable lin{"lin", [](double x) { return 2.0 * std::sin(2 * std::numbers::pi * x) - 3.0 * (1.0 - std::abs(2 * x - 1)); }, {0.5}};
    auto c = op_quantize(lin, N).diagonal;
    CHECK((c - (2.0 * a - 3.0 * b)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(b.minCoeff() >= 0.0);
    CHECK(a.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("smooth partitions") {
    std::vector<Interval> halves{{Rational(0), Rational(1, 2)}, {Rational(1, 2), Rational(1)}};
    auto sharp = smooth_partition(halves, 0.0);
    CHECK(sharp.chi(0, 0.25) == 1.0);
    CHECK(sharp.chi(1, 0.25) == 0.0);

    auto part = smooth_partition(halves, 1.0 / 16);
    CHECK(std::abs(part.chi(0, 0.5) - 1.0 / std::sqrt(2.0)) < 1e-15);
    CHECK(std::abs(part.chi(1, 0.5) - 1.0 / std::sqrt(2.0)) < 1e-15);

    auto m = build_map({2, 4, 4});
    for (double delta : {1.0 / 64, 0.05, 0.1}) {
        auto p3 = smooth_partition(m.branches, delta);
        double worst = 0.0, slope = 0.0;
        const int M = 100000;
        std::vector<double> prev(p3.size(), 0.0);
        for (int s = 0; s <= M; ++s) {
            double x = static_cast<double>(s) / M, sum = 0.0;
            for (std::size_t i = 0; i < p3.size(); ++i) {
                double c = p3.chi(i, x);
                CHECK(c >= 0.0);
                CHECK(c <= 1.0);
                sum += c * c;
                if (s > 0) slope = std::max(slope, std::abs(c - prev[i]) * M);
                prev[i] = c;
            }
            worst = std::max(worst, std::abs(sum - 1.0));
        }
        CHECK(worst < 1e-12);
        CHECK(slope <= (std::numbers::pi / 2) / delta + 1.0);
        // equal to one on the shrunk interval
        CHECK(p3.chi(1, 0.5 + delta + 1e-9) == 1.0);
        CHECK(p3.chi(1, 0.75 - delta - 1e-9) == 1.0);
    }
    CHECK_THROWS_AS(smooth_partition(m.branches, 0.125), DeltaTooLargeError);
    CHECK_THROWS_AS(smooth_partition(m.branches, -0.01), DeltaTooLargeError);

    auto P = quantize_partition(smooth_partition(m.branches, 1.0 / 64), 256);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(256);
    for (const auto& d : P) sum += d.cwiseProduct(d);
    CHECK((sum.array() - 1.0).abs().maxCoeff() < 1e-13);
    auto S = quantize_partition(smooth_partition(m.branches, 0.0), 16);
    CHECK(S[1][8] == 1.0);
    CHECK(S[1][12] == 0.0);
}

TEST_CASE("power iteration norm") {
    Eigen::VectorXd d(5);
    d << 0.3, -2.0, 1.5, 0.1, 1.9;
    auto gram = [&](const CVector& v) { return CVector(d.cwiseAbs2().cast<cd>().cwiseProduct(v)); };
    auto r = gram_norm(gram, 5);
    CHECK(std::abs(r.norm - 2.0) < 1e-8);
    NormOptions tight;
    tight.max_iterations = 3;
    tight.tol = 1e-15;
    CHECK_THROWS_AS(gram_norm(gram, 5, tight), ConvergenceError);
}

TEST_CASE("Egorov defect") {
    auto t = build_map({2, 4, 4});
    CHECK(egorov_defect(t244(8), t, obs_const(1.0), 1) < 1e-13);

    double d8 = egorov_defect(t244(8), t, obs_sin(), 1);
    double d10 = egorov_defect(t244(10), t, obs_sin(), 1);
    CHECK(d10 / d8 > 0.125);
    CHECK(d10 / d8 < 0.5);

    // dense oracle: largest singular value of U^-1 Op(f) U - Op(f o T)
    {
        CMatrix U = t244(8).to_dense();
        CVector a = op_quantize(obs_sin(), 256).diagonal.cast<cd>();
        CVector b = op_quantize(compose(obs_sin(), t, 1), 256).diagonal.cast<cd>();
        CMatrix A = U.adjoint() * a.asDiagonal() * U;
        A -= CMatrix(b.asDiagonal());
        Eigen::JacobiSVD<CMatrix> svd(A);
        CHECK(std::abs(d8 - svd.singularValues()[0]) < 1e-8 * d8);
    }

    // empirical D(T) stays within +-50% of its mean across k
    NormOptions wide;
    wide.max_iterations = 3000;
    std::vector<double> ratios;
    for (int k = 6; k <= 12; ++k) ratios.push_back(egorov_defect(t244(k), t, obs_sin(), 1, wide) * (1 << k) / 4.0);
    double mean = 0.0;
    for (double r : ratios) mean += r / ratios.size();
    for (double r : ratios) CHECK(std::abs(r - mean) < 0.5 * mean);

    // grid-aligned indicator within the exact regime
    CHECK(egorov_defect(t244(8), t, obs_indicator(0.5, 1.0), 3) < 1e-12);
    CHECK(egorov_defect(t244(8), t, obs_indicator(0.75, 1.0), 2) < 1e-12);
}

TEST_CASE("commutator defect") {
    auto t = build_map({2, 4, 4});
    auto U = t244(8);
    CHECK(commutator_defect(U, obs_sin(), obs_const(2.0), 1) < 1e-13);
    double e = egorov_defect(U, t, obs_sin(), 1);
    double c = commutator_defect(U, obs_sin(), obs_sin(), 1);
    CHECK(c <= 2.0 * e * 1.0 + 1e-12);
    double c10 = commutator_defect(t244(10), obs_sin(), obs_sin(), 1);
    CHECK(c10 / c > 0.125);
    CHECK(c10 / c < 0.5);
}

TEST_CASE("preimages and exact Egorov") {
    auto t = build_map({2, 4, 4});
    auto pre = preimage(t, cylinder_interval(2, "1"), 1);
    REQUIRE(pre.size() == 3);
    CHECK(pre[0] == Interval{Rational(1, 4), Rational(1, 2)});
    CHECK(pre[1] == Interval{Rational(5, 8), Rational(3, 4)});
    CHECK(pre[2] == Interval{Rational(7, 8), Rational(1)});

    auto U = t244(8);
    CHECK(exact_egorov_check(U, t, cylinder_interval(2, "1"), 1) < 1e-13);
    // n + |x| up to the Ehrenfest time floor(k log 2 / log 4) = 4
    CHECK(exact_egorov_check(U, t, cylinder_interval(2, "10"), 2) < 1e-12);
    CHECK(exact_egorov_check(U, t, cylinder_interval(2, "011"), 1) < 1e-12);
    CHECK(exact_egorov_check(U, t, cylinder_interval(2, "0"), 3) < 1e-12);
    CHECK_THROWS_AS(exact_egorov_check(U, t, cylinder_interval(2, "10"), 5), AlignmentError);
    CHECK(exact_egorov_check(U, t, Interval{Rational(0), Rational(1)}, 3) < 1e-14);
    CHECK_THROWS_AS(exact_egorov_check(U, t, Interval{Rational(0), Rational(1, 3)}, 1), AlignmentError);
    // beyond the Ehrenfest horizon the identity fails
    CHECK(exact_egorov_check(t244(4), t, cylinder_interval(2, "01"), 4, false) > 1e-3);
}

TEST_CASE("eigenstate measures are probabilities and nearly invariant") {
    auto t = build_map({2, 4, 4});
    auto U = t244(6);
    Eigen::ComplexEigenSolver<CMatrix> es(U.to_dense());
    auto f = op_quantize(obs_sin(), 64).diagonal;
    auto fT = op_quantize(compose(obs_sin(), t, 1), 64).diagonal;
    double bound = egorov_defect(U, t, obs_sin(), 1);
    for (int j = 0; j < 64; ++j) {
        CVector psi = es.eigenvectors().col(j).normalized();
        CHECK(std::abs(psi.squaredNorm() - 1.0) < 1e-12);
        double a = (psi.cwiseAbs2().transpose() * f)(0);
        double b = (psi.cwiseAbs2().transpose() * fT)(0);
        CHECK(std::abs(a - b) <= bound + 1e-9);
    }
}

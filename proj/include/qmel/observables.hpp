#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qmel/classical.hpp"
#include "qmel/quantizer.hpp"

namespace qmel {

struct Observable {
    std::string name;
    std::function<double(double)> f;
    std::vector<double> breakpoints;  // interior points where f or a derivative jumps
};

Observable obs_const(double c);
Observable obs_x();
Observable obs_sin();  // sin(2 pi x)
Observable obs_indicator(double a, double b);
Observable obs_hat();  // 1 - |2x - 1|
// Accepts "const[ c]", "x", "sin", "indicator a b", "hat".
Observable parse_observable(const std::string& text);

// f o T^n with the breakpoints of the composition.
Observable compose(const Observable& f, const PiecewiseLinearMap& map, int n);

struct QuantizedObservable {
    Eigen::VectorXd diagonal;
    double delta = 0.0;
    std::string source;
};

// Cell averages N * int_{E_i} f, 16-point Gauss-Legendre per smooth piece.
QuantizedObservable op_quantize(const Observable& f, long N);

struct SmoothPartition {
    std::vector<double> cuts;  // 0 = c_0 < c_1 < ... < c_s = 1
    double delta = 0.0;

    std::size_t size() const { return cuts.size() - 1; }
    double chi(std::size_t i, double x) const;
    Observable component(std::size_t i) const;
    Observable component_squared(std::size_t i) const;
};

SmoothPartition smooth_partition(const std::vector<Interval>& intervals, double delta);

// Diagonals of the quantum partition elements: sqrt(Op(chi_i^2)), so that sum_i P_i^2 = 1.
std::vector<Eigen::VectorXd> quantize_partition(const SmoothPartition& part, long N);

struct NormOptions {
    int max_iterations = 500;
    double tol = 1e-10;
    unsigned seed = 12345;
};

struct NormResult {
    double norm = 0.0;
    int iterations = 0;
};

// sqrt of the largest eigenvalue of a positive semidefinite G, from the Krylov space of the power iterates.
// Throws ConvergenceError when the top Ritz value has not settled to tol after max_iterations.
NormResult gram_norm(const std::function<CVector(const CVector&)>& gram, long dim, const NormOptions& opt = {});

double egorov_defect(const UnitaryOperator& U, const PiecewiseLinearMap& map, const Observable& f, int n,
                     const NormOptions& opt = {});
double commutator_defect(const UnitaryOperator& U, const Observable& f, const Observable& g, int n,
                         const NormOptions& opt = {});

// Preimage of an interval under T^n as a sorted list of disjoint intervals.
std::vector<Interval> preimage(const PiecewiseLinearMap& map, const Interval& X, int n);

// Max-norm residual of U^{-n} P_X U^n - P_{T^{-n}X}. With require_alignment = false the right side is
// Op of the indicator of T^{-n}X (fractional on cells cut by the preimage) instead of an AlignmentError.
double exact_egorov_check(const UnitaryOperator& U, const PiecewiseLinearMap& map, const Interval& X, int n,
                          bool require_alignment = true);

Observable obs_union(const std::vector<Interval>& set);

Eigen::VectorXd indicator_diagonal(const std::vector<Interval>& set, long N);

}  // namespace qmel

#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qmel/classical.hpp"
#include "qmel/observables.hpp"
#include "qmel/quantizer.hpp"

namespace qmel {

struct EigenState {
    CVector psi;
    double theta = 0.0;  // in (-pi, pi]
    double residual = 0.0;
};

// Full spectrum from the complex Schur form, so degenerate eigenspaces come with orthonormal
// vectors. Sorted by phase. Throws ConvergenceError if any residual exceeds accept.
std::vector<EigenState> eigensolve(const UnitaryOperator& U, double accept = 1e-9);

double eigen_residual(const UnitaryOperator& U, const CVector& psi, double theta);
double phase_of(cd lambda);

enum class Flavor { Forward, Reversed };

// Dynamical refinement of the branch partition. Labels are branch strings over '1'..'l'.
// Forward:  P_eps = P_{eps_{n-1}}(n-1) ... P_{eps_0}(0) with P(j) = U^{-j} P U^j.
// Reversed: the same factors in the opposite order.
struct QuantumPartition {
    UnitaryOperator U;
    std::vector<Eigen::VectorXd> base;  // diagonals of the one-step elements
    std::vector<int> slopes;
    int n = 1;
    Flavor flavor = Flavor::Forward;
    double delta = 0.0;
    double resolution_residual = 0.0;

    std::string alphabet() const;
    long dim() const { return U.dim(); }
    std::vector<std::string> labels() const;
    double weight(const std::string& eps) const;  // v_eps, product over all n symbols
    CVector apply(const std::string& eps, const CVector& v) const;
    CVector apply_adjoint(const std::string& eps, const CVector& v) const;
};

QuantumPartition build_quantum_partition(const UnitaryOperator& U, const PiecewiseLinearMap& map, int n, double delta,
                                         Flavor flavor);

// mu-hat (forward) or mu-hat* (reversed) on all strings of length n.
CylinderTable state_weights(const QuantumPartition& part, const CVector& psi);

// ||P_{[eps]} psi||^2 with P the quantized indicator of the branch cylinder of eps.
CylinderTable projective_weights(const PiecewiseLinearMap& map, const CVector& psi, int n);
Interval branch_cylinder(const PiecewiseLinearMap& map, const std::string& eps);

double quantum_entropy(const CylinderTable& table);
double quantum_pressure(const CylinderTable& table, const WeightFunction& v);

struct PairMax {
    std::string eps;
    std::string eps_prime;
    double norm = 0.0;  // weighted norm v w ||pi_j U tau_k^*||
};

struct EupReport {
    int n = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;
    PairMax pairs_max;
};

// Explicit partitions given as matrices.
EupReport eup_audit(const std::vector<CMatrix>& pi, const std::vector<CMatrix>& tau, const std::vector<double>& v,
                    const std::vector<double>& w, const CMatrix& isometry, const CVector& psi);

// Dynamical partitions of one length: forward pairs (P, P*) with isometry U^n, reversed pairs
// (P*, P) with U^{-n}. Both give the same set of pair norms ||A_eps U A_eps'||, where
// A_x = P_{x_{n-1}} U ... U P_{x_0}, so the right side is computed once per partition length.
struct EupBound {
    int n = 0;
    double rhs = 0.0;
    PairMax pairs_max;
};
EupBound eup_rhs(const QuantumPartition& part);
EupReport eup_audit(const EupBound& bound, const QuantumPartition& forward, const QuantumPartition& reversed,
                    Flavor flavor, const CVector& psi);

struct NormBound {
    double measured = 0.0;
    double bound = 0.0;
    bool holds = false;
};

// ||U P_{eps_0} U P_{eps_1} ... U P_{eps_{n-1}}|| against e^{n c delta} N^{1/2} prod slope^{-1/2}, c = 2 sqrt(max slope).
NormBound norm_bound_check(const UnitaryOperator& U, const PiecewiseLinearMap& map, const std::string& eps,
                           double delta);
// Every string of length 1..n_max at once, sharing chain prefixes.
std::vector<std::pair<std::string, NormBound>> norm_bound_sweep(const UnitaryOperator& U, const PiecewiseLinearMap& map,
                                                                int n_max, double delta);

// |mu-hat([eps]) - sum_{|eps'|=n} mu-hat([eps' eps])|.
double invariance_defect(const UnitaryOperator& U, const PiecewiseLinearMap& map, double delta, Flavor flavor,
                         const CVector& psi, const std::string& eps, int n);

// Right-hand sides of the two entropy bounds from the branch masses mu(I_j).
// With lambda = sum_j mu(I_j) log slope_j:
double entropy_bound_shifted(const std::vector<double>& branch_mass, const PiecewiseLinearMap& map);  // lambda - log(max slope)/2
double entropy_bound_half(const std::vector<double>& branch_mass, const PiecewiseLinearMap& map);     // lambda / 2
std::vector<double> branch_masses(const CylinderTable& table);

// floor(log N / log max slope).
int ehrenfest_time(long N, const PiecewiseLinearMap& map);

struct SubadditivityRow {
    int n = 0;
    int q = 0;
    int r = 0;
    double lhs = 0.0;  // p_{nE}
    double rhs = 0.0;  // q p_n + p_r
    bool holds = false;
};

// p_{nE,v}(mu) <= q p_{n,v}(mu) + p_{r,v}(mu) for n = 1..n_max, mu the projective branch measure of psi.
std::vector<SubadditivityRow> subadditivity_audit(const PiecewiseLinearMap& map, const CVector& psi, int n_E,
                                                  int n_max);

}  // namespace qmel

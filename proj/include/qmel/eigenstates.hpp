#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qmel/classical.hpp"
#include "qmel/entropy.hpp"
#include "qmel/quantizer.hpp"

namespace qmel {

// Superposition of d shifted tensor products: sum_i C_i (w^(i) (x) w^(i+1) (x) ... ), k/d cycles long.
struct ProductFamily {
    int d = 1;
    std::vector<CVector> w;         // w^(0) .. w^(d-1), unit p-vectors
    std::vector<cd> coefficients;   // finite-k coefficients, before normalization
    std::vector<SiteUnitary> sites;
};

struct FamilyMeasure {
    int p = 2;
    int d = 1;
    std::vector<CVector> w;
    std::vector<cd> coefficients;  // as given
    std::vector<double> weight;    // limit C_i^2, summing to 1
    double gamma = 1.0;            // sum_j n_j mu(I_j)
    double entropy_pd = 0.0;       // -sum_i sum_j |w^(i)_j|^2 log |w^(i)_j|^2, entropy for bar T_{p^d}
    double entropy_p = 0.0;        // entropy_pd / d, the per-digit reading
    double entropy = 0.0;          // Gamma / d * entropy_pd, entropy for the map itself

    // Limit measure of the digit cylinder [x].
    double operator()(const std::string& x) const;
    // ||P_[x] psi||^2 at finite k, cross terms included.
    double finite(const std::string& x, int k) const;
    MeasureOracle oracle() const;
    std::vector<double> branch_masses(const PiecewiseLinearMap& map) const;
};

struct FamilyState {
    EigenState state;
    FamilyMeasure measure;
    UnitaryOperator U;
    PiecewiseLinearMap map;
};

// Tensor product with the first factor on the most significant digit.
CVector kron_chain(const std::vector<CVector>& factors);

// Unit eigenvectors of a site unitary, sorted by phase.
std::vector<std::pair<cd, CVector>> site_eigenvectors(const SiteUnitary& site);

// Throws NotEigenstateError when the residual exceeds accept, or when k is not a multiple of d.
FamilyState cycle_family(const ProductFamily& family, const PiecewiseLinearMap& map, int k, double accept = 1e-9);

// w^{(x) k} for the uniform map. Throws NotEigenvectorError unless site w = lambda w.
FamilyState product_eigenstate(const SiteUnitary& site, const CVector& w, int k);

// (|1> (x) U|1>)^{(x) k/2} on T_{2,4,4}. Throws PrecondError unless k is even and U is flat with U^2 = -1.
FamilyState example1_state(const SiteUnitary& site, int k);

// w^{(x) k} on T_{2,4,4} with sites (U, e^{-i gamma} U), where U w = e^{i gamma} w.
FamilyState example2_state(const SiteUnitary& site, const CVector& w, int k);
double example2_entropy(double q);  // -(p log p + pq log pq + q^2 log q^2)

SiteUnitary example3_site(double alpha);
std::pair<CVector, CVector> example3_vectors(cd z, double alpha);
// Closed-form measure only, without building a state.
FamilyMeasure example3_measure(cd z, double alpha);
// At z = -1 the two terms cancel for every k and NotEigenstateError is thrown; the limit measure
// is still defined there.
FamilyState example3_state(cd z, double alpha, int k);

// Gamma (h_n - h_{n-d}) / d from the limit measure on digit strings.
double family_entropy_numeric(const FamilyMeasure& m, int n);

struct Fig4Row {
    double re_z = 0.0;
    double entropy = 0.0;
    double bound = 0.0;
    double entropy_numeric = 0.0;
    double margin = 0.0;
    double mirror_gap = 0.0;  // |H(z) - H(1/z)|, 0 at z = 0
    double residual = 0.0;    // eigen-residual of the finite-k state, NaN where it vanishes
};

struct Fig4Report {
    double alpha = 0.0;
    int k = 0;
    int n = 0;
    std::vector<Fig4Row> rows;
    double min_margin = 0.0;
    double max_mirror_gap = 0.0;
    double max_residual = 0.0;
    int vanishing = 0;  // grid points without a finite-k state
};

Fig4Report fig4_scan(double z_min, double z_max, int steps, double alpha, int k, int n);
std::string fig4_csv(const Fig4Report& report);
std::string fig4_svg(const Fig4Report& report);

}  // namespace qmel

#pragma once

#include <string>
#include <vector>

#include "qmel/classical.hpp"
#include "qmel/entropy.hpp"
#include "qmel/quantizer.hpp"

namespace qmel {

// Tower over a T_p map. A point at level eta sitting in the image of branch j after eta steps
// returns to level 0 when n_j = eta + 1 and climbs otherwise. Strings are p-adic digit strings.
struct TowerMap {
    PiecewiseLinearMap base;
    PiecewiseLinearMap uniform;  // bar T_p
    int p = 2;
    int levels = 1;
    std::vector<std::string> prefixes;  // digit cylinder of each branch
    std::vector<int> depth;             // n_j
    std::vector<std::vector<std::string>> jump;   // per level
    std::vector<std::vector<std::string>> climb;  // per level

    // Level after one step from (x, eta), or -1 when x lies in neither set.
    int next_level(const std::string& x, int eta) const;
};

// Throws NotTpError for maps without a common base, or when the jump and climb sets of a level overlap.
TowerMap build_classical_tower(const PiecewiseLinearMap& map);

struct FirstReturnReport {
    int max_length = 0;
    long cylinders = 0;
    long mismatches = 0;
    std::string first_mismatch;
    bool ok() const { return mismatches == 0; }
};

// Every cylinder of length <= max_length inside a branch returns to level 0 after n_j steps,
// onto the exact image of the cylinder under the base map.
FirstReturnReport first_return_check(const TowerMap& tower, int max_length);

// T-invariant Bernoulli measure on branch sequences, as an oracle on digit cylinders.
MeasureOracle bernoulli_measure(const TowerMap& tower, const std::vector<double>& branch_mass);

struct TowerMeasure {
    TowerMap tower;
    MeasureOracle base;
    double gamma = 1.0;

    double lifted(const std::string& x, int eta) const;  // mu~([x] x eta)
    double projected(const std::string& x) const;        // mu-bar([x])
};

// Gamma = sum_j n_j mu(I_j).
TowerMeasure lift_classical_measure(const MeasureOracle& mu, const TowerMap& tower);

// Tables over all strings of length n. Lifted keys are "<digits>@<level>".
CylinderTable lifted_table(const TowerMeasure& m, int n);
CylinderTable project_measure(const CylinderTable& lifted);

// mu on branch strings: branch string eps is the digit cylinder c_{eps_0} c_{eps_1} ...
CylinderTable branch_table(const TowerMap& tower, const MeasureOracle& mu, int n);

struct AbramovRow {
    int n = 0;
    double h_base = 0.0;   // h_n(T, mu)
    double h_bar = 0.0;    // h_n(bar T, mu-bar)
    double h_tilde = 0.0;  // h_n(T~, mu~)
    double gap = 0.0;      // |h_base - Gamma h_bar| / n
    bool sandwich = false; // h_bar <= h_tilde <= h_bar + log(levels)
};

struct AbramovReport {
    double gamma = 1.0;
    std::vector<AbramovRow> rows;
    double final_gap = 0.0;
    bool decreasing = false;  // gap(n) <= gap(n-1) + 1e-10 throughout, rounding included
    bool sandwich = false;
};

AbramovReport abramov_audit(const MeasureOracle& mu, const TowerMap& tower, int n_max);

// Quantum tower of T_{2,4,4}: H~ = H (+) V C^{N/2}, V e_x = |x> (x) U_1|1>.
// Vectors are stored as [phi_0 (N entries); c_1 (N/2 entries)].
class TowerEvolution {
public:
    TowerEvolution(int k, double theta, const SiteUnitary& u1, const SiteUnitary& u2);

    int k() const { return k_; }
    double theta() const { return theta_; }
    long base_dim() const { return N_; }
    long dim() const { return N_ + N_ / 2; }

    CVector apply(const CVector& Phi) const;
    CVector apply_adjoint(const CVector& Phi) const;
    CVector power_apply(const CVector& Phi, int n) const;
    CMatrix dense() const;  // SizeError above k = 11

    CVector embed(const CVector& c1) const;      // V c
    CVector coords(const CVector& phi1) const;   // V* phi
    CVector ubar(const CVector& v) const;
    CVector ubar1(const CVector& v) const;       // sigma bar U^{(U_2)}
    CVector ubar1_adjoint(const CVector& v) const;
    const SiteUnitary& site() const { return u1_; }

private:
    int k_;
    double theta_;
    long N_;
    SiteUnitary u1_;
    UnitaryOperator ubar_;
    UnitaryOperator ubar2_;
    CVector f_;  // U_1|1>
};

// Orthonormal basis of H~ as columns of a (2N) x (3N/2) matrix in H (+) H.
CMatrix tower_basis(int k, const SiteUnitary& u1);

struct TowerUnitarity {
    double unitarity = 0.0;  // max of |U~* U~ - I| and |U~ U~* - I|
    double adjoint = 0.0;    // closed-form adjoint against the conjugate transpose
    double commutation = 0.0;  // |[bar U_1, P'_j]|
};
TowerUnitarity tower_unitarity(const TowerEvolution& ev);

// Residuals of the two tower Egorov identities for the cylinder [x], probed with random vectors.
struct TowerEgorov {
    double first = 0.0;
    double second = 0.0;
};
TowerEgorov tower_egorov(const TowerEvolution& ev, const std::string& x, int probes = 3, unsigned seed = 7);

struct TowerState {
    CVector Phi;
    double gamma = 1.0;     // Gamma_psi
    double residual = 0.0;  // |U~ Psi - e^{i theta} Psi|
};

// Psi = (psi, bar U P_[1] psi) / Gamma^{1/2}. Throws ResidualError above accept.
TowerState lift_eigenstate(const TowerEvolution& ev, const CVector& psi, double accept = 1e-10);

struct TowerMeasures {
    CylinderTable lifted;  // keys "<digits>@<level>"
    CylinderTable bar;
};
// Strings of length m <= k - 1.
TowerMeasures tower_measures(const TowerEvolution& ev, const CVector& Phi, int m);

// mu-bar on all strings of length 1..k-1 at once; index n-1 holds length n.
std::vector<CylinderTable> tower_bar_tables(const TowerEvolution& ev, const CVector& Phi);

struct TowerBoundReport {
    int k = 0;
    std::vector<double> h_seq;  // h_n(mu-bar_k), n = 1..k-1
    double h_top = 0.0;
    double tower_bound = 0.0;  // ((k-1)/2 - 1) log 2
    bool tower_bound_holds = false;
    // -log sup ||P~_y U~^{k-1} P~_y'||, filled when with_eup is set
    double eup_rhs = 0.0;
    bool eup_computed = false;
    bool eup = false;  // h_{k-1} >= eup_rhs >= tower_bound
    bool scaled_holds = false;  // h_n/n >= h_{k-1}/(k-1) - n log 2/(k-1)
    std::vector<double> scaled_margin;  // n = 1..k-2
    double invariance = 0.0;  // max |mu-bar([x]) - mu-bar(bar T^{-n}[x])| over m + n <= k-1
};

TowerBoundReport tower_entropy_bound_audit(const TowerEvolution& ev, const CVector& Phi, bool with_eup);

}  // namespace qmel

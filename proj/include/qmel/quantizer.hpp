#pragma once

#include <complex>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "qmel/classical.hpp"

namespace qmel {

using cd = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using CSparse = Eigen::SparseMatrix<cd, Eigen::ColMajor>;

// Dense materialization is refused above this many qubit-equivalents.
constexpr double kDenseQubitCap = 14.0;

struct SiteUnitary {
    CMatrix m;
    bool flat = false;
    int p() const { return static_cast<int>(m.rows()); }
};

SiteUnitary dft(int p);
// Wraps a user matrix; throws InvalidArgument when it is not square unitary within tol.
SiteUnitary make_site(const CMatrix& m, double tol = 1e-12);

// Shift-type operator on (C^p)^{(x) k}: a basis string with branch prefix c of length n is sent to
// |x_{n+1}..x_k> (x) U_n|c_n> (x) ... (x) U_1|c_1>.
struct TensorialForm {
    int p = 2;
    int k = 1;
    std::vector<std::string> prefixes;
    std::vector<SiteUnitary> sites;
    std::vector<CVector> tails;  // per branch, the p^n tail vector

    long dim() const;
    void apply(const cd* in, cd* out) const;
    void apply_adjoint(const cd* in, cd* out) const;
    // Nonzero entries of column x as (row, value).
    std::vector<std::pair<long, cd>> column(long x) const;
};

class UnitaryOperator {
public:
    UnitaryOperator() = default;
    static UnitaryOperator from_dense(CMatrix m);
    static UnitaryOperator from_tensorial(TensorialForm t);

    long dim() const;
    bool is_dense() const { return dense_ != nullptr; }
    bool is_tensorial() const { return tens_ != nullptr; }
    const CMatrix& matrix() const;
    const TensorialForm& tensorial() const;

    CVector apply(const CVector& v) const;
    CVector apply_adjoint(const CVector& v) const;
    CMatrix apply(const CMatrix& m) const;
    CMatrix apply_adjoint(const CMatrix& m) const;
    CVector power_apply(const CVector& v, int n) const;  // U^n v, negative n uses the adjoint

    CMatrix to_dense() const;
    CSparse to_sparse() const;

    std::optional<double> theta;

private:
    std::shared_ptr<const CMatrix> dense_;
    std::shared_ptr<const TensorialForm> tens_;
};

// Block DFT quantization of a transfer matrix: columns of U sharing the image set S of their
// row of B form one block; rows and columns are taken in increasing cell order.
CSparse quantize_blocks(const TransferMatrix& B);

UnitaryOperator quantize_uniform(const PiecewiseLinearMap& map, long N);
UnitaryOperator quantize_general(const PiecewiseLinearMap& map, int k);

UnitaryOperator tensorial_uniform(const SiteUnitary& site, int k);
UnitaryOperator tensorial_nonuniform(const PiecewiseLinearMap& map, const std::vector<SiteUnitary>& sites, int k);

struct QuantizationReport {
    double modulus_residual = 0.0;    // max | |U(i,j)|^2 - B(j,i) |
    double unitarity_residual = 0.0;  // max |U*U - I|
    bool support_match = false;
};

QuantizationReport verify_quantization(const UnitaryOperator& U, const TransferMatrix& B);
double unitarity_residual(const CSparse& U);

long ipow(long base, int exp);

}  // namespace qmel

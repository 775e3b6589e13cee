#include "qmel/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace qmel {

long ipow(long base, int exp) {
    long r = 1;
    for (int i = 0; i < exp; ++i) {
        if (r > (1L << 40) / std::max(base, 1L)) throw SizeError("dimension overflow");
        r *= base;
    }
    return r;
}

namespace {

bool dense_allowed(long N) { return std::log2(static_cast<double>(N)) <= kDenseQubitCap + 1e-9; }

bool is_flat(const CMatrix& m) {
    const double target = 1.0 / std::sqrt(static_cast<double>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            if (std::abs(std::abs(m(i, j)) - target) > 1e-12) return false;
    return true;
}

CMatrix dft_matrix(int p) {
    CMatrix F(p, p);
    const double s = 1.0 / std::sqrt(static_cast<double>(p));
    for (int l = 0; l < p; ++l)
        for (int m = 0; m < p; ++m)
            F(l, m) = std::polar(s, 2.0 * std::numbers::pi * ((l * m) % p) / p);
    return F;
}

}  // namespace

SiteUnitary dft(int p) {
    if (p < 2) throw InvalidArgument("DFT size must be at least 2");
    return {dft_matrix(p), true};
}

SiteUnitary make_site(const CMatrix& m, double tol) {
    if (m.rows() != m.cols() || m.rows() < 2) throw InvalidArgument("site unitary must be square of size >= 2");
    double res = (m.adjoint() * m - CMatrix::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff();
    if (res > tol) throw InvalidArgument("site matrix is not unitary (residual " + std::to_string(res) + ")");
    return {m, is_flat(m)};
}

long TensorialForm::dim() const { return ipow(p, k); }

void TensorialForm::apply(const cd* in, cd* out) const {
    const long N = dim();
    std::fill(out, out + N, cd(0.0));
    for (std::size_t j = 0; j < prefixes.size(); ++j) {
        const int n = static_cast<int>(prefixes[j].size());
        const long tail = ipow(p, n);
        const long block = N / tail;
        long c = 0;
        for (char ch : prefixes[j]) c = c * p + (ch - '0');
        const cd* src = in + c * block;
        const CVector& phi = tails[j];
        for (long y = 0; y < block; ++y) {
            const cd a = src[y];
            if (a == cd(0.0)) continue;
            cd* dst = out + y * tail;
            for (long m = 0; m < tail; ++m) dst[m] += a * phi[m];
        }
    }
}

void TensorialForm::apply_adjoint(const cd* in, cd* out) const {
    const long N = dim();
    for (std::size_t j = 0; j < prefixes.size(); ++j) {
        const int n = static_cast<int>(prefixes[j].size());
        const long tail = ipow(p, n);
        const long block = N / tail;
        long c = 0;
        for (char ch : prefixes[j]) c = c * p + (ch - '0');
        cd* dst = out + c * block;
        const CVector& phi = tails[j];
        for (long y = 0; y < block; ++y) {
            const cd* src = in + y * tail;
            cd acc(0.0);
            for (long m = 0; m < tail; ++m) acc += std::conj(phi[m]) * src[m];
            dst[y] = acc;
        }
    }
}

std::vector<std::pair<long, cd>> TensorialForm::column(long x) const {
    const long N = dim();
    for (std::size_t j = 0; j < prefixes.size(); ++j) {
        const int n = static_cast<int>(prefixes[j].size());
        const long tail = ipow(p, n);
        const long block = N / tail;
        long c = 0;
        for (char ch : prefixes[j]) c = c * p + (ch - '0');
        if (x / block != c) continue;
        const long y = x % block;
        std::vector<std::pair<long, cd>> out;
        for (long m = 0; m < tail; ++m) out.emplace_back(y * tail + m, tails[j][m]);
        return out;
    }
    throw DimensionError("basis index outside every branch");
}

UnitaryOperator UnitaryOperator::from_dense(CMatrix m) {
    if (m.rows() != m.cols()) throw DimensionError("operator must be square");
    UnitaryOperator u;
    u.dense_ = std::make_shared<const CMatrix>(std::move(m));
    return u;
}

UnitaryOperator UnitaryOperator::from_tensorial(TensorialForm t) {
    UnitaryOperator u;
    u.tens_ = std::make_shared<const TensorialForm>(std::move(t));
    return u;
}

long UnitaryOperator::dim() const {
    if (dense_) return dense_->rows();
    if (tens_) return tens_->dim();
    return 0;
}

const CMatrix& UnitaryOperator::matrix() const {
    if (!dense_) throw InvalidArgument("operator has no dense representation");
    return *dense_;
}

const TensorialForm& UnitaryOperator::tensorial() const {
    if (!tens_) throw InvalidArgument("operator has no tensorial representation");
    return *tens_;
}

CVector UnitaryOperator::apply(const CVector& v) const {
    if (v.size() != dim()) throw DimensionError("vector size mismatch");
    if (dense_) return (*dense_) * v;
    CVector out(v.size());
    tens_->apply(v.data(), out.data());
    return out;
}

CVector UnitaryOperator::apply_adjoint(const CVector& v) const {
    if (v.size() != dim()) throw DimensionError("vector size mismatch");
    if (dense_) return dense_->adjoint() * v;
    CVector out(v.size());
    tens_->apply_adjoint(v.data(), out.data());
    return out;
}

CMatrix UnitaryOperator::apply(const CMatrix& m) const {
    if (m.rows() != dim()) throw DimensionError("matrix size mismatch");
    if (dense_) return (*dense_) * m;
    CMatrix out(m.rows(), m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) tens_->apply(m.col(c).data(), out.col(c).data());
    return out;
}

CMatrix UnitaryOperator::apply_adjoint(const CMatrix& m) const {
    if (m.rows() != dim()) throw DimensionError("matrix size mismatch");
    if (dense_) return dense_->adjoint() * m;
    CMatrix out(m.rows(), m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) tens_->apply_adjoint(m.col(c).data(), out.col(c).data());
    return out;
}

CVector UnitaryOperator::power_apply(const CVector& v, int n) const {
    CVector out = v;
    for (int i = 0; i < std::abs(n); ++i) out = (n > 0) ? apply(out) : apply_adjoint(out);
    return out;
}

CMatrix UnitaryOperator::to_dense() const {
    if (dense_) return *dense_;
    const long N = dim();
    if (!dense_allowed(N)) throw SizeError("dense materialization above the 14-qubit cap");
    CMatrix out = CMatrix::Zero(N, N);
    for (long x = 0; x < N; ++x)
        for (const auto& [row, v] : tens_->column(x)) out(row, x) = v;
    return out;
}

CSparse UnitaryOperator::to_sparse() const {
    const long N = dim();
    std::vector<Eigen::Triplet<cd>> trip;
    if (dense_) {
        for (long j = 0; j < N; ++j)
            for (long i = 0; i < N; ++i)
                if ((*dense_)(i, j) != cd(0.0)) trip.emplace_back(i, j, (*dense_)(i, j));
    } else {
        for (long x = 0; x < N; ++x)
            for (const auto& [row, v] : tens_->column(x)) trip.emplace_back(row, x, v);
    }
    CSparse S(N, N);
    S.setFromTriplets(trip.begin(), trip.end());
    return S;
}

CSparse quantize_blocks(const TransferMatrix& B) {
    const int N = B.N;
    // group cells by image set
    std::map<std::vector<int>, std::vector<int>> groups;
    for (int j = 0; j < N; ++j) {
        std::vector<int> img;
        for (const auto& [c, v] : B.rows[j]) img.push_back(c);
        std::sort(img.begin(), img.end());
        groups[img].push_back(j);
    }
    std::vector<Eigen::Triplet<cd>> trip;
    for (const auto& [img, cols] : groups) {
        if (img.size() != cols.size()) {
            throw SizeError("transfer matrix is not block structured: image of size " + std::to_string(img.size()) +
                            " shared by " + std::to_string(cols.size()) + " cells");
        }
        const CMatrix F = dft_matrix(static_cast<int>(img.size()));
        for (std::size_t r = 0; r < img.size(); ++r)
            for (std::size_t t = 0; t < cols.size(); ++t) trip.emplace_back(img[r], cols[t], F(r, t));
    }
    CSparse U(N, N);
    U.setFromTriplets(trip.begin(), trip.end());
    return U;
}

UnitaryOperator quantize_uniform(const PiecewiseLinearMap& map, long N) {
    if (!map.is_uniform()) throw InvalidArgument("quantize_uniform needs equal slopes");
    const long p = map.slopes.front();
    long n = N;
    while (n > 1 && n % p == 0) n /= p;
    if (N < p || n != 1) throw SizeError(std::to_string(N) + " is not a power of " + std::to_string(p));
    if (!dense_allowed(N)) throw SizeError("dense materialization above the 14-qubit cap");
    CSparse U = quantize_blocks(transfer_matrix(map, static_cast<int>(N)));
    return UnitaryOperator::from_dense(CMatrix(U));
}

UnitaryOperator quantize_general(const PiecewiseLinearMap& map, int k) {
    Decomposition d = decompose(map);
    if (k < 1) throw SizeError("k must be positive");
    const long N = ipow(d.N0, k);
    if (!dense_allowed(N)) throw SizeError("dense materialization above the 14-qubit cap");
    CSparse Ubd = quantize_blocks(transfer_matrix(d.block_map, static_cast<int>(N)));
    CSparse Ubar = quantize_blocks(transfer_matrix(d.uniform_map, static_cast<int>(N)));
    CSparse U = Ubar * Ubd;
    return UnitaryOperator::from_dense(CMatrix(U));
}

namespace {

TensorialForm make_form(int p, int k, std::vector<std::string> prefixes, std::vector<SiteUnitary> sites) {
    TensorialForm t;
    t.p = p;
    t.k = k;
    t.prefixes = std::move(prefixes);
    t.sites = std::move(sites);
    for (const auto& pre : t.prefixes) {
        const int n = static_cast<int>(pre.size());
        CVector phi = CVector::Ones(1);
        for (int i = n; i >= 1; --i) {
            const CVector col = t.sites[i - 1].m.col(pre[i - 1] - '0');
            CVector next(phi.size() * col.size());
            for (Eigen::Index a = 0; a < phi.size(); ++a) next.segment(a * col.size(), col.size()) = phi[a] * col;
            phi.swap(next);
        }
        t.tails.push_back(phi);
    }
    return t;
}

}  // namespace

UnitaryOperator tensorial_uniform(const SiteUnitary& site, int k) {
    if (!site.flat) throw PrecondError("site unitary is not flat");
    if (k < 1) throw DepthError("k must be positive");
    std::vector<std::string> prefixes;
    for (int d = 0; d < site.p(); ++d) prefixes.push_back(std::string(1, static_cast<char>('0' + d)));
    return UnitaryOperator::from_tensorial(make_form(site.p(), k, prefixes, {site}));
}

UnitaryOperator tensorial_nonuniform(const PiecewiseLinearMap& map, const std::vector<SiteUnitary>& sites, int k) {
    auto prefixes = branch_prefixes(map);
    const int p = *map.uniform_base;
    const int nmax = map.max_exponent();
    if (k < nmax) throw DepthError("k=" + std::to_string(k) + " is below the largest branch exponent " +
                                   std::to_string(nmax));
    if (static_cast<int>(sites.size()) < nmax) throw InvalidArgument("need one site unitary per branch depth");
    for (const auto& s : sites) {
        if (s.p() != p) throw InvalidArgument("site unitary size differs from the map base");
        if (!s.flat) throw PrecondError("site unitary is not flat");
    }
    return UnitaryOperator::from_tensorial(make_form(p, k, prefixes, sites));
}

double unitarity_residual(const CSparse& U) {
    CSparse G = U.adjoint() * U;
    double res = 0.0;
    std::vector<bool> diag(G.cols(), false);
    for (Eigen::Index c = 0; c < G.outerSize(); ++c) {
        for (CSparse::InnerIterator it(G, c); it; ++it) {
            cd target = (it.row() == it.col()) ? cd(1.0) : cd(0.0);
            if (it.row() == it.col()) diag[c] = true;
            res = std::max(res, std::abs(it.value() - target));
        }
    }
    if (std::find(diag.begin(), diag.end(), false) != diag.end()) res = std::max(res, 1.0);
    return res;
}

QuantizationReport verify_quantization(const UnitaryOperator& U, const TransferMatrix& B) {
    if (U.dim() != B.N) throw DimensionError("operator dimension " + std::to_string(U.dim()) +
                                             " differs from transfer matrix size " + std::to_string(B.N));
    CSparse S = U.to_sparse();
    QuantizationReport rep;
    rep.support_match = true;
    for (int j = 0; j < B.N; ++j) {
        std::map<long, double> expect;
        for (const auto& [i, v] : B.rows[j]) expect[i] = to_double(v);
        std::map<long, double> got;
        for (CSparse::InnerIterator it(S, j); it; ++it) got[it.row()] = std::norm(it.value());
        for (const auto& [i, v] : expect) {
            auto g = got.find(i);
            double u2 = g == got.end() ? 0.0 : g->second;
            rep.modulus_residual = std::max(rep.modulus_residual, std::abs(u2 - v));
            if (u2 < 1e-16) rep.support_match = false;
        }
        for (const auto& [i, u2] : got) {
            if (expect.count(i)) continue;
            rep.modulus_residual = std::max(rep.modulus_residual, u2);
            if (u2 > 1e-16) rep.support_match = false;
        }
    }
    rep.unitarity_residual = unitarity_residual(S);
    return rep;
}

}  // namespace qmel

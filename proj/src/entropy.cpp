#include "qmel/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "qmel/parallel.hpp"

namespace qmel {

namespace {

constexpr long kMaxLabels = 1L << 20;
constexpr double kRankTol = 1e-14;

CVector scaled(const Eigen::VectorXd& d, const CVector& v) { return d.cast<cd>().cwiseProduct(v); }

// Dense copy of U when it fits, so repeated products avoid the matrix-free kernel.
struct Applier {
    const UnitaryOperator* U;
    std::optional<CMatrix> dense;

    explicit Applier(const UnitaryOperator& op) : U(&op) {
        if (op.is_dense() || op.dim() <= 2048) dense = op.to_dense();
    }
    CMatrix apply(const CMatrix& m) const { return dense ? CMatrix(*dense * m) : U->apply(m); }
};

// Thin factorization A = W diag(s) V^* with orthonormal columns in W and V.
struct ChainFactor {
    CMatrix W;
    Eigen::VectorXd s;
    CMatrix V;
    double norm() const { return s.size() ? s.maxCoeff() : 0.0; }
};

ChainFactor start_factor(const Eigen::VectorXd& d) {
    std::vector<long> supp;
    for (long i = 0; i < d.size(); ++i)
        if (d[i] > 0.0) supp.push_back(i);
    ChainFactor f;
    f.W = CMatrix::Zero(d.size(), static_cast<long>(supp.size()));
    f.s.resize(static_cast<long>(supp.size()));
    for (std::size_t c = 0; c < supp.size(); ++c) {
        f.W(supp[c], static_cast<long>(c)) = 1.0;
        f.s[static_cast<long>(c)] = d[supp[c]];
    }
    f.V = f.W;
    return f;
}

// Factor of diag(d) U A from the factor of A.
ChainFactor extend_factor(const ChainFactor& a, const Eigen::VectorXd& d, const Applier& U) {
    ChainFactor f;
    if (a.s.size() == 0) {
        f.W = CMatrix::Zero(d.size(), 0);
        f.V = CMatrix::Zero(a.V.rows(), 0);
        return f;
    }
    CMatrix M = U.apply(a.W * a.s.cast<cd>().asDiagonal());
    M = d.cast<cd>().asDiagonal() * M;
    Eigen::BDCSVD<CMatrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    long r = 0;
    while (r < sv.size() && sv[r] > kRankTol) ++r;
    f.W = svd.matrixU().leftCols(r);
    f.s = sv.head(r);
    f.V = a.V * svd.matrixV().leftCols(r);
    return f;
}

std::vector<std::string> strings_of(const std::string& alphabet, int n) {
    long count = 1;
    for (int i = 0; i < n; ++i) {
        count *= static_cast<long>(alphabet.size());
        if (count > kMaxLabels) throw DepthError("partition of length " + std::to_string(n) + " has too many elements");
    }
    return all_strings(alphabet, n);
}

// Factors of A_x for every string x of length n, in lexicographic order of x read from x_0.
std::vector<ChainFactor> all_factors(const std::vector<Eigen::VectorXd>& base, const Applier& U, int n) {
    std::vector<ChainFactor> level;
    for (const auto& d : base) level.push_back(start_factor(d));
    for (int j = 1; j < n; ++j) {
        std::vector<ChainFactor> next(level.size() * base.size());
        parallel_for(next.size(), [&](std::size_t t) {
            next[t] = extend_factor(level[t / base.size()], base[t % base.size()], U);
        });
        level = std::move(next);
    }
    return level;
}

std::vector<Eigen::VectorXd> branch_diagonals(const PiecewiseLinearMap& map, long N, double delta) {
    return quantize_partition(smooth_partition(map.branches, delta), N);
}

double gram_top(const CMatrix& C) {
    if (C.size() == 0) return 0.0;
    CMatrix G = C.rows() <= C.cols() ? CMatrix(C * C.adjoint()) : CMatrix(C.adjoint() * C);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(G, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0));
}

double weighted_pressure(const std::vector<double>& mass, const std::vector<double>& v) {
    double p = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i) {
        p -= xlogx(mass[i]);
        if (mass[i] > 0.0) p -= 2.0 * mass[i] * std::log(v[i]);
    }
    return p;
}

}  // namespace

double phase_of(cd lambda) {
    double t = std::arg(lambda);
    if (t <= -std::numbers::pi + 1e-13) t = std::numbers::pi;
    return t;
}

double eigen_residual(const UnitaryOperator& U, const CVector& psi, double theta) {
    return (U.apply(psi) - std::polar(1.0, theta) * psi).norm();
}

std::vector<EigenState> eigensolve(const UnitaryOperator& U, double accept) {
    if (U.dim() > 4096) throw SizeError("eigensolve is limited to dimension 4096");
    const CMatrix D = U.to_dense();
    Eigen::ComplexSchur<CMatrix> schur(D);
    if (schur.info() != Eigen::Success) throw ConvergenceError("Schur iteration did not converge");
    const CMatrix& T = schur.matrixT();
    const CMatrix& Q = schur.matrixU();
    std::vector<EigenState> out(static_cast<std::size_t>(D.rows()));
    std::vector<std::string> failed;
    for (long j = 0; j < D.rows(); ++j) {
        EigenState& e = out[static_cast<std::size_t>(j)];
        e.psi = Q.col(j).normalized();
        e.theta = phase_of(T(j, j));
        e.residual = (D * e.psi - std::polar(1.0, e.theta) * e.psi).norm();
        if (!(e.residual <= accept)) failed.push_back(std::to_string(j));
    }
    if (!failed.empty()) {
        std::ostringstream os;
        os << failed.size() << " eigenpairs above residual " << accept << ", first index " << failed.front();
        throw ConvergenceError(os.str());
    }
    std::stable_sort(out.begin(), out.end(), [](const EigenState& a, const EigenState& b) { return a.theta < b.theta; });
    return out;
}

std::string QuantumPartition::alphabet() const {
    std::string a;
    for (std::size_t i = 0; i < base.size(); ++i) a.push_back(static_cast<char>('1' + i));
    return a;
}

std::vector<std::string> QuantumPartition::labels() const { return strings_of(alphabet(), n); }

double QuantumPartition::weight(const std::string& eps) const {
    double v = 1.0;
    for (char c : eps) v /= std::sqrt(static_cast<double>(slopes.at(static_cast<std::size_t>(c - '1'))));
    return v;
}

CVector QuantumPartition::apply(const std::string& eps, const CVector& v) const {
    if (static_cast<int>(eps.size()) != n) throw InvalidArgument("label length differs from partition length");
    auto P = [&](std::size_t j) -> const Eigen::VectorXd& { return base.at(static_cast<std::size_t>(eps[j] - '1')); };
    CVector w;
    if (flavor == Flavor::Forward) {
        w = scaled(P(0), v);
        for (int j = 1; j < n; ++j) w = scaled(P(static_cast<std::size_t>(j)), U.apply(w));
        return U.power_apply(w, -(n - 1));
    }
    w = scaled(P(static_cast<std::size_t>(n - 1)), U.power_apply(v, n - 1));
    for (int j = n - 2; j >= 0; --j) w = scaled(P(static_cast<std::size_t>(j)), U.apply_adjoint(w));
    return w;
}

CVector QuantumPartition::apply_adjoint(const std::string& eps, const CVector& v) const {
    QuantumPartition other = *this;
    other.flavor = (flavor == Flavor::Forward) ? Flavor::Reversed : Flavor::Forward;
    return other.apply(eps, v);
}

QuantumPartition build_quantum_partition(const UnitaryOperator& U, const PiecewiseLinearMap& map, int n, double delta,
                                         Flavor flavor) {
    if (n < 1) throw InvalidArgument("partition length must be at least 1");
    if (map.size() > 9) throw InvalidArgument("at most 9 branches are supported");
    QuantumPartition part;
    part.U = U;
    part.base = branch_diagonals(map, U.dim(), delta);
    part.slopes = map.slopes;
    part.n = n;
    part.flavor = flavor;
    part.delta = delta;
    strings_of(part.alphabet(), n);

    // sum over labels of C^* C on probe vectors, C the chain without its outer unitary factor
    const std::size_t l = part.base.size();
    std::function<CVector(const CVector&, int)> tree = [&](const CVector& u, int depth) -> CVector {
        CVector acc = CVector::Zero(u.size());
        const CVector moved = (flavor == Flavor::Forward) ? U.apply(u) : U.apply_adjoint(u);
        for (std::size_t i = 0; i < l; ++i) {
            CVector child = scaled(part.base[i], moved);
            CVector back = (depth + 1 == n) ? child : tree(child, depth + 1);
            back = scaled(part.base[i], back);
            acc += (flavor == Flavor::Forward) ? U.apply_adjoint(back) : U.apply(back);
        }
        return acc;
    };
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> g;
    double worst = 0.0;
    for (int probe = 0; probe < 2; ++probe) {
        CVector v(U.dim());
        for (auto& c : v) c = cd(g(rng), g(rng));
        v.normalize();
        CVector sum = CVector::Zero(v.size());
        for (std::size_t i = 0; i < l; ++i) {
            CVector first = scaled(part.base[i], v);
            CVector back = (n == 1) ? first : tree(first, 1);
            sum += scaled(part.base[i], back);
        }
        worst = std::max(worst, (sum - v).cwiseAbs().maxCoeff());
    }
    part.resolution_residual = worst;
    return part;
}

CylinderTable state_weights(const QuantumPartition& part, const CVector& psi) {
    const std::string alpha = part.alphabet();
    CylinderTable table;
    table.alphabet = alpha;
    table.length = part.n;
    strings_of(alpha, part.n);
    const UnitaryOperator& U = part.U;
    const bool fwd = part.flavor == Flavor::Forward;
    // forward walks eps_0 first with U; reversed walks eps_{n-1} first with U^{-1}
    std::function<void(const CVector&, std::string&, int)> walk = [&](const CVector& u, std::string& label, int depth) {
        const CVector moved = (depth == 0) ? u : (fwd ? U.apply(u) : U.apply_adjoint(u));
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            CVector w = scaled(part.base[i], moved);
            if (fwd) label.push_back(alpha[i]);
            else label.insert(label.begin(), alpha[i]);
            if (depth + 1 == part.n) table.entries[label] = w.squaredNorm();
            else walk(w, label, depth + 1);
            if (fwd) label.pop_back();
            else label.erase(label.begin());
        }
    };
    std::string label;
    const CVector start = fwd ? psi : U.power_apply(psi, part.n - 1);
    walk(start, label, 0);
    return table;
}

Interval branch_cylinder(const PiecewiseLinearMap& map, const std::string& eps) {
    Interval J{Rational(0), Rational(1)};
    for (auto it = eps.rbegin(); it != eps.rend(); ++it) {
        const std::size_t b = static_cast<std::size_t>(*it - '1');
        if (b >= map.size()) throw InvalidArgument(std::string("unknown branch symbol ") + *it);
        const Rational s(map.slopes[b]);
        Interval pre{(J.lo - map.offsets[b]) / s, (J.hi - map.offsets[b]) / s};
        pre.lo = std::max(pre.lo, map.branches[b].lo);
        pre.hi = std::min(pre.hi, map.branches[b].hi);
        if (pre.hi < pre.lo) pre.hi = pre.lo;
        J = pre;
    }
    return J;
}

CylinderTable projective_weights(const PiecewiseLinearMap& map, const CVector& psi, int n) {
    std::string alpha;
    for (std::size_t i = 0; i < map.size(); ++i) alpha.push_back(static_cast<char>('1' + i));
    CylinderTable table;
    table.alphabet = alpha;
    table.length = n;
    const long N = psi.size();
    for (const auto& eps : strings_of(alpha, n)) {
        const Interval J = branch_cylinder(map, eps);
        double w = 0.0;
        if (J.hi > J.lo) {
            const Rational lo = J.lo * N, hi = J.hi * N;
            const long c0 = static_cast<long>(boost::rational_cast<double>(lo));
            for (long c = std::max(0L, c0 - 1); c < N && Rational(c) < hi; ++c) {
                const Rational a = std::max(lo, Rational(c)), b = std::min(hi, Rational(c + 1));
                if (b > a) w += std::norm(psi[c]) * to_double(b - a);
            }
        }
        table.entries[eps] = w;
    }
    return table;
}

double quantum_entropy(const CylinderTable& table) { return classical_entropy(table); }

double quantum_pressure(const CylinderTable& table, const WeightFunction& v) { return classical_pressure(table, v); }

EupReport eup_audit(const std::vector<CMatrix>& pi, const std::vector<CMatrix>& tau, const std::vector<double>& v,
                    const std::vector<double>& w, const CMatrix& isometry, const CVector& psi) {
    if (pi.size() != v.size() || tau.size() != w.size()) throw InvalidArgument("one weight per partition element");
    const CVector moved = isometry * psi;
    std::vector<double> a, b;
    for (const auto& P : pi) a.push_back((P * psi).squaredNorm());
    for (const auto& P : tau) b.push_back((P * moved).squaredNorm());
    EupReport rep;
    rep.lhs = weighted_pressure(a, v) + weighted_pressure(b, w);
    for (std::size_t j = 0; j < pi.size(); ++j) {
        for (std::size_t k = 0; k < tau.size(); ++k) {
            const double nm = v[j] * w[k] * gram_top(pi[j] * isometry * tau[k].adjoint());
            if (nm > rep.pairs_max.norm) rep.pairs_max = {std::to_string(j), std::to_string(k), nm};
        }
    }
    if (!(rep.pairs_max.norm > 0.0)) throw NormConvergenceError("all pair norms vanish");
    rep.rhs = -2.0 * std::log(rep.pairs_max.norm);
    rep.margin = rep.lhs - rep.rhs;
    return rep;
}

EupBound eup_rhs(const QuantumPartition& part) {
    const Applier U(part.U);
    const std::vector<ChainFactor> A = all_factors(part.base, U, part.n);
    // labels in factor order: index t has x_0 as the most significant symbol
    const std::vector<std::string> labels = part.labels();
    std::vector<CMatrix> moved(A.size());
    parallel_for(A.size(), [&](std::size_t t) { moved[t] = U.apply(A[t].W * A[t].s.cast<cd>().asDiagonal()); });
    std::vector<PairMax> best(A.size());
    parallel_for(A.size(), [&](std::size_t a) {
        const double va = part.weight(labels[a]);
        const CMatrix Vh = A[a].s.cast<cd>().asDiagonal() * A[a].V.adjoint();
        for (std::size_t b = 0; b < A.size(); ++b) {
            if (A[a].s.size() == 0 || A[b].s.size() == 0) continue;
            const double nm = va * part.weight(labels[b]) * gram_top(Vh * moved[b]);
            if (nm > best[a].norm) best[a] = {labels[a], labels[b], nm};
        }
    });
    EupBound out;
    out.n = part.n;
    for (const auto& b : best)
        if (b.norm > out.pairs_max.norm) out.pairs_max = b;
    if (!(out.pairs_max.norm > 0.0)) throw NormConvergenceError("all pair norms vanish");
    out.rhs = -2.0 * std::log(out.pairs_max.norm);
    return out;
}

EupReport eup_audit(const EupBound& bound, const QuantumPartition& forward, const QuantumPartition& reversed,
                    Flavor flavor, const CVector& psi) {
    if (forward.flavor != Flavor::Forward || reversed.flavor != Flavor::Reversed || forward.n != reversed.n ||
        bound.n != forward.n)
        throw InvalidArgument("eup_audit needs a forward and a reversed partition of the bound's length");
    const int n = forward.n;
    const WeightFunction v = [&](const std::string& s) { return forward.weight(s); };
    EupReport rep;
    rep.n = n;
    if (flavor == Flavor::Forward) {
        rep.lhs = quantum_pressure(state_weights(forward, psi), v) +
                  quantum_pressure(state_weights(reversed, forward.U.power_apply(psi, n)), v);
    } else {
        rep.lhs = quantum_pressure(state_weights(reversed, psi), v) +
                  quantum_pressure(state_weights(forward, forward.U.power_apply(psi, -n)), v);
    }
    rep.rhs = bound.rhs;
    rep.pairs_max = bound.pairs_max;
    if (flavor == Flavor::Reversed) std::swap(rep.pairs_max.eps, rep.pairs_max.eps_prime);
    rep.margin = rep.lhs - rep.rhs;
    return rep;
}

namespace {

NormBound bound_for(const PiecewiseLinearMap& map, long N, const std::string& eps, double delta, double measured) {
    const double c = 2.0 * std::sqrt(static_cast<double>(map.max_slope()));
    double b = std::exp(static_cast<double>(eps.size()) * c * delta) * std::sqrt(static_cast<double>(N));
    for (char ch : eps) b /= std::sqrt(static_cast<double>(map.slopes.at(static_cast<std::size_t>(ch - '1'))));
    return {measured, b, measured <= b * (1.0 + 1e-9)};
}

}  // namespace

NormBound norm_bound_check(const UnitaryOperator& U, const PiecewiseLinearMap& map, const std::string& eps,
                           double delta) {
    if (eps.empty()) throw InvalidArgument("empty branch string");
    const auto base = branch_diagonals(map, U.dim(), delta);
    const Applier A(U);
    // ||P_{e0} U P_{e1} ... U P_{e_{n-1}}|| is the chain started from the last symbol
    auto sym = [&](std::size_t j) { return base.at(static_cast<std::size_t>(eps[j] - '1')); };
    ChainFactor f = start_factor(sym(eps.size() - 1));
    for (std::size_t j = eps.size() - 1; j-- > 0;) f = extend_factor(f, sym(j), A);
    return bound_for(map, U.dim(), eps, delta, f.norm());
}

std::vector<std::pair<std::string, NormBound>> norm_bound_sweep(const UnitaryOperator& U, const PiecewiseLinearMap& map,
                                                                int n_max, double delta) {
    const auto base = branch_diagonals(map, U.dim(), delta);
    const Applier A(U);
    std::string alpha;
    for (std::size_t i = 0; i < base.size(); ++i) alpha.push_back(static_cast<char>('1' + i));
    std::vector<std::pair<std::string, NormBound>> out;
    // a chain grown by prepending symbol i to the operator word is eps with i appended at the front
    std::function<void(const ChainFactor&, const std::string&)> walk = [&](const ChainFactor& f, const std::string& eps) {
        out.emplace_back(eps, bound_for(map, U.dim(), eps, delta, f.norm()));
        if (static_cast<int>(eps.size()) == n_max) return;
        for (std::size_t i = 0; i < base.size(); ++i) walk(extend_factor(f, base[i], A), std::string(1, alpha[i]) + eps);
    };
    for (std::size_t i = 0; i < base.size(); ++i) walk(start_factor(base[i]), std::string(1, alpha[i]));
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.first.size() != b.first.size() ? a.first.size() < b.first.size() : a.first < b.first;
    });
    return out;
}

double invariance_defect(const UnitaryOperator& U, const PiecewiseLinearMap& map, double delta, Flavor flavor,
                         const CVector& psi, const std::string& eps, int n) {
    if (n < 0) throw InvalidArgument("n must be nonnegative");
    if (n == 0) return 0.0;
    const int m = static_cast<int>(eps.size());
    const auto shortp = build_quantum_partition(U, map, m, delta, flavor);
    const auto longp = build_quantum_partition(U, map, m + n, delta, flavor);
    const double direct = state_weights(shortp, psi).weight(eps);
    double pulled = 0.0;
    for (const auto& [label, w] : state_weights(longp, psi).entries)
        if (label.compare(static_cast<std::size_t>(n), std::string::npos, eps) == 0) pulled += w;
    return std::abs(direct - pulled);
}

double entropy_bound_shifted(const std::vector<double>& branch_mass, const PiecewiseLinearMap& map) {
    if (branch_mass.size() != map.size()) throw InvalidArgument("one mass per branch");
    double s = 0.0;
    for (std::size_t j = 0; j < map.size(); ++j) s += branch_mass[j] * std::log(static_cast<double>(map.slopes[j]));
    return s - 0.5 * std::log(static_cast<double>(map.max_slope()));
}

double entropy_bound_half(const std::vector<double>& branch_mass, const PiecewiseLinearMap& map) {
    if (branch_mass.size() != map.size()) throw InvalidArgument("one mass per branch");
    double s = 0.0;
    for (std::size_t j = 0; j < map.size(); ++j) s += branch_mass[j] * std::log(static_cast<double>(map.slopes[j]));
    return 0.5 * s;
}

std::vector<double> branch_masses(const CylinderTable& table) {
    std::vector<double> out(table.alphabet.size(), 0.0);
    for (const auto& [s, w] : table.entries) {
        if (s.empty()) continue;
        const auto pos = table.alphabet.find(s.front());
        if (pos == std::string::npos) throw InvalidArgument("symbol outside the table alphabet");
        out[pos] += w;
    }
    return out;
}

int ehrenfest_time(long N, const PiecewiseLinearMap& map) {
    return static_cast<int>(std::floor(std::log(static_cast<double>(N)) / std::log(static_cast<double>(map.max_slope())) + 1e-12));
}

std::vector<SubadditivityRow> subadditivity_audit(const PiecewiseLinearMap& map, const CVector& psi, int n_E,
                                                  int n_max) {
    if (n_E < 1) throw InvalidArgument("Ehrenfest time below 1");
    const WeightFunction v = branch_weights(map);
    std::vector<double> p(static_cast<std::size_t>(n_E + 1), 0.0);
    for (int n = 1; n <= n_E; ++n) p[static_cast<std::size_t>(n)] = classical_pressure(projective_weights(map, psi, n), v);
    std::vector<SubadditivityRow> rows;
    for (int n = 1; n <= std::min(n_max, n_E); ++n) {
        SubadditivityRow r;
        r.n = n;
        r.q = n_E / n;
        r.r = n_E % n;
        r.lhs = p[static_cast<std::size_t>(n_E)];
        r.rhs = r.q * p[static_cast<std::size_t>(n)] + p[static_cast<std::size_t>(r.r)];
        r.holds = r.lhs <= r.rhs + 1e-10;
        rows.push_back(r);
    }
    return rows;
}

}  // namespace qmel

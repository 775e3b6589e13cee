#include "qmel/tower.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "qmel/parallel.hpp"

namespace qmel {

namespace {

bool starts_with(const std::string& s, const std::string& prefix) {
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

bool overlaps(const std::string& a, const std::string& b) { return starts_with(a, b) || starts_with(b, a); }

std::string digits_of(long idx, int len) {
    std::string s(static_cast<std::size_t>(len), '0');
    for (int i = len - 1; i >= 0; --i, idx >>= 1) s[static_cast<std::size_t>(i)] = static_cast<char>('0' + (idx & 1));
    return s;
}

long index_of(const std::string& x) {
    long v = 0;
    for (char c : x) v = 2 * v + (c - '0');
    return v;
}

// Keep entries whose digits offset+1 .. offset+|x| equal x; ndigits is the string length of an index.
CVector mask(const CVector& v, int ndigits, int offset, const std::string& x) {
    const int m = static_cast<int>(x.size());
    const long want = index_of(x);
    const int shift = ndigits - offset - m;
    CVector out = v;
    for (long i = 0; i < v.size(); ++i)
        if (((i >> shift) & ((1L << m) - 1)) != want) out[i] = 0.0;
    return out;
}

// The prefixes form a prefix code, so at most one of them starts x.
double bernoulli_weight(const std::vector<std::string>& prefixes, const std::vector<double>& mass, const std::string& x) {
    if (x.empty()) return 1.0;
    double w = 0.0;
    for (std::size_t j = 0; j < prefixes.size(); ++j) {
        if (starts_with(x, prefixes[j]))
            w += mass[j] * bernoulli_weight(prefixes, mass, x.substr(prefixes[j].size()));
        else if (starts_with(prefixes[j], x))
            w += mass[j];
    }
    return w;
}

double entropy_of(const std::vector<double>& w) {
    double h = 0.0;
    for (double x : w) h -= xlogx(std::max(x, 0.0));
    return h;
}

}  // namespace

int TowerMap::next_level(const std::string& x, int eta) const {
    if (eta < 0 || eta >= levels) return -1;
    for (const auto& c : jump[static_cast<std::size_t>(eta)])
        if (starts_with(x, c)) return 0;
    for (const auto& c : climb[static_cast<std::size_t>(eta)])
        if (starts_with(x, c)) return eta + 1;
    return -1;
}

TowerMap build_classical_tower(const PiecewiseLinearMap& map) {
    if (!map.uniform_base) throw NotTpError("slopes are not powers of a common base");
    TowerMap t;
    t.base = map;
    t.p = *map.uniform_base;
    t.uniform = build_map(std::vector<int>(static_cast<std::size_t>(t.p), t.p));
    t.prefixes = branch_prefixes(map);
    t.depth = map.exponents;
    t.levels = map.max_exponent();
    t.jump.resize(static_cast<std::size_t>(t.levels));
    t.climb.resize(static_cast<std::size_t>(t.levels));
    for (std::size_t j = 0; j < t.prefixes.size(); ++j) {
        for (int eta = 0; eta < t.depth[j]; ++eta) {
            auto tail = t.prefixes[j].substr(static_cast<std::size_t>(eta));
            auto& dst = (t.depth[j] == eta + 1) ? t.jump[static_cast<std::size_t>(eta)] : t.climb[static_cast<std::size_t>(eta)];
            if (std::find(dst.begin(), dst.end(), tail) == dst.end()) dst.push_back(tail);
        }
    }
    for (int eta = 0; eta < t.levels; ++eta) {
        for (const auto& a : t.jump[static_cast<std::size_t>(eta)])
            for (const auto& b : t.climb[static_cast<std::size_t>(eta)])
                if (overlaps(a, b))
                    throw NotTpError("level " + std::to_string(eta) + " cannot tell return [" + a + "] from climb [" + b +
                                     "]; the tower is not well defined");
    }
    return t;
}

FirstReturnReport first_return_check(const TowerMap& tower, int max_length) {
    if (std::pow(static_cast<double>(tower.p), max_length) > 4194304.0)
        throw DepthError("too many cylinders at length " + std::to_string(max_length));
    FirstReturnReport rep;
    rep.max_length = max_length;
    std::string alphabet;
    for (int d = 0; d < tower.p; ++d) alphabet.push_back(static_cast<char>('0' + d));
    for (int len = 1; len <= max_length; ++len) {
        for (const auto& x : all_strings(alphabet, len)) {
            std::size_t j = 0;
            while (j < tower.prefixes.size() && !starts_with(x, tower.prefixes[j])) ++j;
            if (j == tower.prefixes.size()) continue;
            ++rep.cylinders;
            std::string s = x;
            int eta = 0, steps = 0;
            bool ok = true;
            while (true) {
                const int next = tower.next_level(s, eta);
                if (next < 0) {
                    ok = false;
                    break;
                }
                s.erase(0, 1);
                ++steps;
                if (next == 0) break;
                eta = next;
            }
            if (ok) ok = steps == tower.depth[j];
            if (ok) {
                const Interval c = cylinder_interval(tower.p, x);
                const Rational slope(tower.base.slopes[j]);
                const Interval image{slope * c.lo + tower.base.offsets[j], slope * c.hi + tower.base.offsets[j]};
                ok = tower.base.branches[j].contains(c) && image == cylinder_interval(tower.p, s);
            }
            if (!ok) {
                if (rep.mismatches == 0) rep.first_mismatch = x;
                ++rep.mismatches;
            }
        }
    }
    return rep;
}

MeasureOracle bernoulli_measure(const TowerMap& tower, const std::vector<double>& branch_mass) {
    if (branch_mass.size() != tower.prefixes.size()) throw InvalidArgument("one mass per branch");
    return [prefixes = tower.prefixes, mass = branch_mass](const std::string& x) {
        return bernoulli_weight(prefixes, mass, x);
    };
}

double TowerMeasure::lifted(const std::string& x, int eta) const {
    double w = 0.0;
    for (std::size_t j = 0; j < tower.prefixes.size(); ++j) {
        if (tower.depth[j] <= eta) continue;
        const auto& c = tower.prefixes[j];
        const std::string head = c.substr(0, static_cast<std::size_t>(eta));
        const std::string tail = c.substr(static_cast<std::size_t>(eta));
        if (starts_with(x, tail))
            w += base(head + x);
        else if (starts_with(tail, x))
            w += base(c);
    }
    return w / gamma;
}

double TowerMeasure::projected(const std::string& x) const {
    double w = 0.0;
    for (int eta = 0; eta < tower.levels; ++eta) w += lifted(x, eta);
    return w;
}

TowerMeasure lift_classical_measure(const MeasureOracle& mu, const TowerMap& tower) {
    TowerMeasure m;
    m.tower = tower;
    m.base = mu;
    m.gamma = 0.0;
    for (std::size_t j = 0; j < tower.prefixes.size(); ++j) m.gamma += tower.depth[j] * mu(tower.prefixes[j]);
    if (!(m.gamma > 0.0)) throw InvalidArgument("measure gives no mass to the branches");
    return m;
}

CylinderTable lifted_table(const TowerMeasure& m, int n) {
    CylinderTable tab;
    for (int d = 0; d < m.tower.p; ++d) tab.alphabet.push_back(static_cast<char>('0' + d));
    tab.length = n;
    for (const auto& x : all_strings(tab.alphabet, n))
        for (int eta = 0; eta < m.tower.levels; ++eta) tab.entries[x + "@" + std::to_string(eta)] = m.lifted(x, eta);
    return tab;
}

CylinderTable project_measure(const CylinderTable& lifted) {
    CylinderTable tab;
    tab.alphabet = lifted.alphabet;
    tab.length = lifted.length;
    for (const auto& [key, w] : lifted.entries) tab.entries[key.substr(0, key.find('@'))] += w;
    return tab;
}

CylinderTable branch_table(const TowerMap& tower, const MeasureOracle& mu, int n) {
    CylinderTable tab;
    for (std::size_t j = 0; j < tower.prefixes.size(); ++j) tab.alphabet.push_back(static_cast<char>('1' + j));
    tab.length = n;
    for (const auto& eps : all_strings(tab.alphabet, n)) {
        std::string x;
        for (char c : eps) x += tower.prefixes[static_cast<std::size_t>(c - '1')];
        tab.entries[eps] = mu(x);
    }
    return tab;
}

AbramovReport abramov_audit(const MeasureOracle& mu, const TowerMap& tower, int n_max) {
    const double branches = static_cast<double>(tower.prefixes.size());
    if (std::pow(branches, n_max) > 4194304.0 || std::pow(static_cast<double>(tower.p), n_max) > 4194304.0)
        throw DepthError("n_max=" + std::to_string(n_max) + " is too deep for this map");
    const TowerMeasure m = lift_classical_measure(mu, tower);
    AbramovReport rep;
    rep.gamma = m.gamma;
    rep.sandwich = true;
    const double log_levels = std::log(static_cast<double>(tower.levels));
    std::string alphabet;
    for (int d = 0; d < tower.p; ++d) alphabet.push_back(static_cast<char>('0' + d));

    for (int n = 1; n <= n_max; ++n) {
        AbramovRow row;
        row.n = n;
        // branch strings streamed depth first; only the digit string is needed
        std::function<void(int, const std::string&)> walk = [&](int depth, const std::string& x) {
            if (depth == n) {
                row.h_base -= xlogx(std::max(mu(x), 0.0));
                return;
            }
            for (const auto& c : tower.prefixes) walk(depth + 1, x + c);
        };
        walk(0, "");

        const auto strings = all_strings(alphabet, n);
        std::vector<double> bar(strings.size(), 0.0), tilde(strings.size() * static_cast<std::size_t>(tower.levels), 0.0);
        parallel_for(strings.size(), [&](std::size_t i) {
            for (int eta = 0; eta < tower.levels; ++eta) {
                const double w = m.lifted(strings[i], eta);
                tilde[i * static_cast<std::size_t>(tower.levels) + static_cast<std::size_t>(eta)] = w;
                bar[i] += w;
            }
        });
        row.h_bar = entropy_of(bar);
        row.h_tilde = entropy_of(tilde);
        row.gap = std::abs(row.h_base - m.gamma * row.h_bar) / n;
        row.sandwich = row.h_bar <= row.h_tilde + 1e-12 && row.h_tilde <= row.h_bar + log_levels + 1e-12;
        rep.sandwich = rep.sandwich && row.sandwich;
        rep.rows.push_back(row);
    }
    rep.final_gap = rep.rows.empty() ? 0.0 : rep.rows.back().gap;
    rep.decreasing = true;
    for (std::size_t i = 1; i < rep.rows.size(); ++i)
        if (rep.rows[i].gap > rep.rows[i - 1].gap + 1e-10) rep.decreasing = false;
    return rep;
}

TowerEvolution::TowerEvolution(int k, double theta, const SiteUnitary& u1, const SiteUnitary& u2)
    : k_(k), theta_(theta), N_(1L << k), u1_(u1) {
    if (k < 2) throw DepthError("the quantum tower needs k >= 2");
    if (u1.p() != 2 || u2.p() != 2) throw InvalidArgument("the quantum tower is built for binary sites");
    ubar_ = tensorial_uniform(u1, k);
    ubar2_ = tensorial_uniform(u2, k);
    f_ = u1.m.col(1);
}

CVector TowerEvolution::embed(const CVector& c1) const {
    CVector out(N_);
    for (long x = 0; x < N_ / 2; ++x) {
        out[2 * x] = c1[x] * f_[0];
        out[2 * x + 1] = c1[x] * f_[1];
    }
    return out;
}

CVector TowerEvolution::coords(const CVector& phi1) const {
    CVector out(N_ / 2);
    for (long x = 0; x < N_ / 2; ++x) out[x] = std::conj(f_[0]) * phi1[2 * x] + std::conj(f_[1]) * phi1[2 * x + 1];
    return out;
}

CVector TowerEvolution::ubar(const CVector& v) const { return ubar_.apply(v); }

namespace {
CVector swap_last_two(const CVector& v) {
    CVector out = v;
    for (long i = 0; i < v.size(); i += 4) std::swap(out[i + 1], out[i + 2]);
    return out;
}
}  // namespace

CVector TowerEvolution::ubar1(const CVector& v) const { return swap_last_two(ubar2_.apply(v)); }

CVector TowerEvolution::ubar1_adjoint(const CVector& v) const { return ubar2_.apply_adjoint(swap_last_two(v)); }

CVector TowerEvolution::apply(const CVector& Phi) const {
    if (Phi.size() != dim()) throw DimensionError("tower vector has the wrong length");
    const long h = N_ / 2;
    CVector p0 = Phi.head(N_), p1 = Phi.head(N_);
    p0.tail(h).setZero();
    p1.head(h).setZero();
    CVector out(dim());
    out.head(N_) = ubar1(embed(Phi.tail(h))) + ubar_.apply(p0);
    out.tail(h) = std::polar(1.0, theta_) * coords(ubar_.apply(p1));
    return out;
}

CVector TowerEvolution::apply_adjoint(const CVector& Phi) const {
    if (Phi.size() != dim()) throw DimensionError("tower vector has the wrong length");
    const long h = N_ / 2;
    CVector a = ubar_.apply_adjoint(embed(Phi.tail(h)));
    CVector b = ubar_.apply_adjoint(CVector(Phi.head(N_)));
    a.head(h).setZero();
    b.tail(h).setZero();
    CVector out(dim());
    out.head(N_) = std::polar(1.0, -theta_) * a + b;
    out.tail(h) = coords(ubar1_adjoint(Phi.head(N_)));
    return out;
}

CVector TowerEvolution::power_apply(const CVector& Phi, int n) const {
    CVector v = Phi;
    for (int i = 0; i < std::abs(n); ++i) v = n > 0 ? apply(v) : apply_adjoint(v);
    return v;
}

CMatrix TowerEvolution::dense() const {
    if (k_ > 11) throw SizeError("dense tower evolution refused above k=11");
    CMatrix D(dim(), dim());
    parallel_for(static_cast<std::size_t>(dim()), [&](std::size_t c) {
        CVector e = CVector::Zero(dim());
        e[static_cast<long>(c)] = 1.0;
        D.col(static_cast<long>(c)) = apply(e);
    });
    return D;
}

CMatrix tower_basis(int k, const SiteUnitary& u1) {
    if (k < 1) throw DepthError("k must be positive");
    if (u1.p() != 2) throw InvalidArgument("the quantum tower is built for binary sites");
    const long N = 1L << k;
    CMatrix B = CMatrix::Zero(2 * N, N + N / 2);
    for (long x = 0; x < N; ++x) B(x, x) = 1.0;
    for (long x = 0; x < N / 2; ++x) {
        B(N + 2 * x, N + x) = u1.m(0, 1);
        B(N + 2 * x + 1, N + x) = u1.m(1, 1);
    }
    return B;
}

TowerUnitarity tower_unitarity(const TowerEvolution& ev) {
    TowerUnitarity r;
    const CMatrix D = ev.dense();
    const long d = D.rows();
    // every factor is a product of shifts and single-site unitaries, so the matrices are sparse
    const CSparse S = D.sparseView();
    const CSparse St = S.adjoint();
    auto max_dev = [](const CSparse& M) {
        double m = 0.0;
        for (int c = 0; c < M.outerSize(); ++c) {
            double diag = 0.0;
            for (CSparse::InnerIterator it(M, c); it; ++it) {
                if (it.row() == it.col())
                    diag = 1.0, m = std::max(m, std::abs(it.value() - 1.0));
                else
                    m = std::max(m, std::abs(it.value()));
            }
            if (diag == 0.0) m = 1.0;
        }
        return m;
    };
    r.unitarity = std::max(max_dev(CSparse(St * S)), max_dev(CSparse(S * St)));
    CMatrix A(d, d);
    parallel_for(static_cast<std::size_t>(d), [&](std::size_t c) {
        CVector e = CVector::Zero(d);
        e[static_cast<long>(c)] = 1.0;
        A.col(static_cast<long>(c)) = ev.apply_adjoint(e);
    });
    r.adjoint = (A - D.adjoint()).cwiseAbs().maxCoeff();

    const long N = ev.base_dim();
    CMatrix U1(N, N), Ub(N, N);
    parallel_for(static_cast<std::size_t>(N), [&](std::size_t c) {
        CVector e = CVector::Zero(N);
        e[static_cast<long>(c)] = 1.0;
        U1.col(static_cast<long>(c)) = ev.ubar1(e);
        Ub.col(static_cast<long>(c)) = ev.ubar(e);
    });
    const CSparse U1s = U1.sparseView(), Ubs = Ub.sparseView();
    for (int j = 0; j < 2; ++j) {
        CSparse Pj(N, N);
        Pj.reserve(N / 2);
        for (long i = j * N / 2; i < (j + 1) * N / 2; ++i) Pj.insert(i, i) = 1.0;
        const CSparse Pp = Ubs * Pj * CSparse(Ubs.adjoint());
        const CSparse C = U1s * Pp - Pp * U1s;
        for (int c = 0; c < C.outerSize(); ++c)
            for (CSparse::InnerIterator it(C, c); it; ++it) r.commutation = std::max(r.commutation, std::abs(it.value()));
    }
    return r;
}

TowerEgorov tower_egorov(const TowerEvolution& ev, const std::string& x, int probes, unsigned seed) {
    const int k = ev.k();
    const int m = static_cast<int>(x.size());
    if (m > k - 2) throw DepthError("tower Egorov needs |x| <= k-2");
    const long N = ev.base_dim(), h = N / 2;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    TowerEgorov r;
    for (int t = 0; t < probes; ++t) {
        CVector Phi(ev.dim());
        for (auto& c : Phi) c = cd(g(rng), g(rng));
        const CVector phi0 = Phi.head(N), c1 = Phi.tail(h);

        // U~* (P_[x] (+) 0) U~
        CVector moved = ev.apply(Phi);
        CVector w = CVector::Zero(ev.dim());
        w.head(N) = mask(moved.head(N), k, 0, x);
        CVector lhs = ev.apply_adjoint(w);
        CVector rhs(ev.dim());
        CVector a = mask(phi0, k, 1, x);
        a.tail(h).setZero();
        rhs.head(N) = a;
        rhs.tail(h) = mask(c1, k - 1, 1, x);
        r.first = std::max(r.first, (lhs - rhs).norm() / Phi.norm());

        // U~* (0 (+) P'_[1] P_[x]) U~
        w.setZero();
        w.tail(h) = mask(moved.tail(h), k - 1, 0, x);
        lhs = ev.apply_adjoint(w);
        CVector b = mask(phi0, k, 1, x);
        b.head(h).setZero();
        rhs.setZero();
        rhs.head(N) = b;
        r.second = std::max(r.second, (lhs - rhs).norm() / Phi.norm());
    }
    return r;
}

TowerState lift_eigenstate(const TowerEvolution& ev, const CVector& psi, double accept) {
    const long N = ev.base_dim(), h = N / 2;
    if (psi.size() != N) throw DimensionError("state dimension differs from 2^k");
    CVector p1 = psi;
    p1.head(h).setZero();
    TowerState s;
    s.gamma = 1.0 + p1.squaredNorm();
    s.Phi.resize(ev.dim());
    s.Phi.head(N) = psi;
    s.Phi.tail(h) = ev.coords(ev.ubar(p1));
    s.Phi /= std::sqrt(s.gamma);
    s.residual = (ev.apply(s.Phi) - std::polar(1.0, ev.theta()) * s.Phi).norm();
    if (!(s.residual <= accept))
        throw ResidualError("lifted state residual " + std::to_string(s.residual) + " exceeds " + std::to_string(accept));
    return s;
}

TowerMeasures tower_measures(const TowerEvolution& ev, const CVector& Phi, int m) {
    const int k = ev.k();
    if (m < 0 || m > k - 1) throw DepthError("tower measures need 0 <= m <= k-1");
    const long N = ev.base_dim(), h = N / 2;
    std::vector<double> lvl0(1UL << m, 0.0), lvl1(1UL << m, 0.0);
    for (long i = 0; i < N; ++i) lvl0[static_cast<std::size_t>(i >> (k - m))] += std::norm(Phi[i]);
    for (long i = 0; i < h; ++i) lvl1[static_cast<std::size_t>(i >> (k - 1 - m))] += std::norm(Phi[N + i]);
    TowerMeasures out;
    out.lifted.alphabet = out.bar.alphabet = "01";
    out.lifted.length = out.bar.length = m;
    for (std::size_t i = 0; i < lvl0.size(); ++i) {
        const std::string x = digits_of(static_cast<long>(i), m);
        out.lifted.entries[x + "@0"] = lvl0[i];
        out.lifted.entries[x + "@1"] = lvl1[i];
        out.bar.entries[x] = lvl0[i] + lvl1[i];
    }
    return out;
}

namespace {

// mu-bar as arrays: out[n][index of x] for |x| = n, n = 0..k-1.
std::vector<std::vector<double>> bar_arrays(const TowerEvolution& ev, const CVector& Phi) {
    const int k = ev.k();
    const long N = ev.base_dim(), h = N / 2;
    std::vector<std::vector<double>> out(static_cast<std::size_t>(k));
    auto& top = out[static_cast<std::size_t>(k - 1)];
    top.assign(static_cast<std::size_t>(h), 0.0);
    for (long y = 0; y < h; ++y)
        top[static_cast<std::size_t>(y)] = std::norm(Phi[2 * y]) + std::norm(Phi[2 * y + 1]) + std::norm(Phi[N + y]);
    for (int n = k - 2; n >= 0; --n) {
        const auto& fine = out[static_cast<std::size_t>(n + 1)];
        auto& coarse = out[static_cast<std::size_t>(n)];
        coarse.assign(fine.size() / 2, 0.0);
        for (std::size_t i = 0; i < coarse.size(); ++i) coarse[i] = fine[2 * i] + fine[2 * i + 1];
    }
    return out;
}

}  // namespace

std::vector<CylinderTable> tower_bar_tables(const TowerEvolution& ev, const CVector& Phi) {
    const auto arrays = bar_arrays(ev, Phi);
    std::vector<CylinderTable> out;
    for (int n = 1; n < ev.k(); ++n) {
        CylinderTable t;
        t.alphabet = "01";
        t.length = n;
        const auto& a = arrays[static_cast<std::size_t>(n)];
        for (std::size_t i = 0; i < a.size(); ++i) t.entries[digits_of(static_cast<long>(i), n)] = a[i];
        out.push_back(std::move(t));
    }
    return out;
}

TowerBoundReport tower_entropy_bound_audit(const TowerEvolution& ev, const CVector& Phi, bool with_eup) {
    const int k = ev.k();
    if (k < 3) throw DepthError("the tower bound audit needs k >= 3");
    const double l2 = std::log(2.0);
    const auto arrays = bar_arrays(ev, Phi);
    TowerBoundReport r;
    r.k = k;
    for (int n = 1; n <= k - 1; ++n) r.h_seq.push_back(entropy_of(arrays[static_cast<std::size_t>(n)]));
    r.h_top = r.h_seq.back();
    r.tower_bound = ((k - 1) / 2.0 - 1.0) * l2;
    r.tower_bound_holds = r.h_top >= r.tower_bound - 1e-12;

    r.scaled_holds = true;
    for (int n = 1; n <= k - 2; ++n) {
        const double margin = r.h_seq[static_cast<std::size_t>(n - 1)] / n - (r.h_top / (k - 1) - n * l2 / (k - 1));
        r.scaled_margin.push_back(margin);
        if (margin < -1e-12) r.scaled_holds = false;
    }

    for (int m = 1; m <= k - 2; ++m) {
        for (int n = 1; m + n <= k - 1; ++n) {
            const auto& coarse = arrays[static_cast<std::size_t>(m)];
            const auto& fine = arrays[static_cast<std::size_t>(m + n)];
            for (std::size_t x = 0; x < coarse.size(); ++x) {
                double s = 0.0;
                for (std::size_t w = 0; w < (1UL << n); ++w) s += fine[(w << m) + x];
                r.invariance = std::max(r.invariance, std::abs(coarse[x] - s));
            }
        }
    }

    if (with_eup) {
        const long N = ev.base_dim(), h = N / 2;
        std::vector<double> best(static_cast<std::size_t>(h), 0.0);
        parallel_for(static_cast<std::size_t>(h), [&](std::size_t yp) {
            const long cols[3] = {2 * static_cast<long>(yp), 2 * static_cast<long>(yp) + 1, N + static_cast<long>(yp)};
            CVector ev_cols[3];
            for (int c = 0; c < 3; ++c) {
                CVector e = CVector::Zero(ev.dim());
                e[cols[c]] = 1.0;
                ev_cols[c] = ev.power_apply(e, k - 1);
            }
            for (long y = 0; y < h; ++y) {
                const long rows[3] = {2 * y, 2 * y + 1, N + y};
                Eigen::Matrix3cd C;
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b) C(a, b) = ev_cols[b][rows[a]];
                Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(C.adjoint() * C, Eigen::EigenvaluesOnly);
                best[yp] = std::max(best[yp], std::sqrt(std::max(es.eigenvalues()[2], 0.0)));
            }
        });
        r.eup_rhs = -std::log(*std::max_element(best.begin(), best.end()));
        r.eup_computed = true;
        r.eup = r.h_top >= r.eup_rhs - 1e-10 && r.eup_rhs >= r.tower_bound - 1e-10;
    }
    return r;
}

}  // namespace qmel

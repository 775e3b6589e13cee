#include "qmel/observables.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace qmel {

namespace {

constexpr int kGaussPoints = 16;

struct GaussLegendre {
    std::array<double, kGaussPoints> x{};
    std::array<double, kGaussPoints> w{};
    GaussLegendre() {
        const int n = kGaussPoints;
        for (int i = 0; i < n; ++i) {
            double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = z;
                for (int j = 2; j <= n; ++j) {
                    double p2 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p0) / j;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (z * p1 - p0) / (z * z - 1.0);
                double dz = p1 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-16) break;
            }
            x[i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
    }
};

const GaussLegendre& gauss() {
    static const GaussLegendre g;
    return g;
}

double integrate_piece(const std::function<double(double)>& f, double a, double b) {
    const auto& g = gauss();
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0.0;
    for (int i = 0; i < kGaussPoints; ++i) {
        double v = f(mid + half * g.x[i]);
        if (!std::isfinite(v)) throw IntegrationError("non-finite sample at x=" + std::to_string(mid + half * g.x[i]));
        s += g.w[i] * v;
    }
    return s * half;
}

std::vector<double> sorted_unique(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end(), [](double a, double b) { return std::abs(a - b) < 1e-15; }), v.end());
    return v;
}

}  // namespace

Observable obs_const(double c) {
    return {"const", [c](double) { return c; }, {}};
}

Observable obs_x() {
    return {"x", [](double x) { return x; }, {}};
}

Observable obs_sin() {
    return {"sin", [](double x) { return std::sin(2.0 * std::numbers::pi * x); }, {}};
}

Observable obs_indicator(double a, double b) {
    std::vector<double> bps;
    if (a > 0.0 && a < 1.0) bps.push_back(a);
    if (b > 0.0 && b < 1.0) bps.push_back(b);
    return {"indicator", [a, b](double x) { return (x >= a && x < b) || (b >= 1.0 && x >= a) ? 1.0 : 0.0; }, bps};
}

Observable obs_hat() {
    return {"hat", [](double x) { return 1.0 - std::abs(2.0 * x - 1.0); }, {0.5}};
}

Observable parse_observable(const std::string& text) {
    std::istringstream is(text);
    std::string head;
    is >> head;
    if (head == "const") {
        double c = 1.0;
        if (!(is >> c)) c = 1.0;
        return obs_const(c);
    }
    if (head == "x") return obs_x();
    if (head == "sin") return obs_sin();
    if (head == "hat") return obs_hat();
    if (head == "indicator") {
        double a = 0.0, b = 0.0;
        if (!(is >> a >> b) || !(a < b)) throw InvalidArgument("indicator needs two endpoints a < b");
        return obs_indicator(a, b);
    }
    throw InvalidArgument("unknown observable '" + text + "'");
}

Observable compose(const Observable& f, const PiecewiseLinearMap& map, int n) {
    std::vector<double> ends;
    for (std::size_t j = 0; j + 1 < map.size(); ++j) ends.push_back(to_double(map.branches[j].hi));
    std::vector<double> bps = f.breakpoints;
    for (int step = 0; step < n; ++step) {
        std::vector<double> pre = ends;
        for (double y : bps) {
            for (std::size_t j = 0; j < map.size(); ++j) {
                double x = (y - to_double(map.offsets[j])) / map.slopes[j];
                if (x > 0.0 && x < 1.0) pre.push_back(x);
            }
        }
        // the images of branch endpoints hit 0 and 1, whose preimages are the branch ends themselves
        bps = sorted_unique(pre);
    }
    auto base = f.f;
    PiecewiseLinearMap m = map;
    Observable out;
    out.name = f.name + "oT^" + std::to_string(n);
    out.breakpoints = bps;
    out.f = [base, m, n](double x) {
        for (int i = 0; i < n; ++i) x = m.apply(x);
        return base(x);
    };
    return out;
}

QuantizedObservable op_quantize(const Observable& f, long N) {
    if (N < 1) throw InvalidArgument("partition size must be positive");
    QuantizedObservable q;
    q.source = f.name;
    q.diagonal.resize(N);
    const std::vector<double> bps = sorted_unique(f.breakpoints);
    std::size_t next = 0;
    for (long i = 0; i < N; ++i) {
        const double a = static_cast<double>(i) / N, b = static_cast<double>(i + 1) / N;
        while (next < bps.size() && bps[next] <= a) ++next;
        double left = a, s = 0.0;
        std::size_t k = next;
        while (k < bps.size() && bps[k] < b) {
            if (bps[k] - left > 1e-15) s += integrate_piece(f.f, left, bps[k]);
            left = bps[k];
            ++k;
        }
        s += integrate_piece(f.f, left, b);
        q.diagonal[i] = s * N;
    }
    return q;
}

double SmoothPartition::chi(std::size_t i, double x) const {
    const double lo = cuts[i], hi = cuts[i + 1];
    if (delta == 0.0) {
        bool last = (i + 1 == size());
        return (x >= lo && (x < hi || (last && x <= hi))) ? 1.0 : 0.0;
    }
    const double h = std::numbers::pi / 2.0;
    if (i > 0 && x < lo + delta) {
        if (x <= lo - delta) return 0.0;
        return std::sin(h * (x - (lo - delta)) / (2.0 * delta));
    }
    if (i + 1 < size() && x > hi - delta) {
        if (x >= hi + delta) return 0.0;
        return std::cos(h * (x - (hi - delta)) / (2.0 * delta));
    }
    return (x >= lo && x <= hi) ? 1.0 : 0.0;
}

Observable SmoothPartition::component(std::size_t i) const {
    SmoothPartition self = *this;
    std::vector<double> bps;
    for (double c : {cuts[i] - delta, cuts[i] + delta, cuts[i + 1] - delta, cuts[i + 1] + delta})
        if (c > 0.0 && c < 1.0) bps.push_back(c);
    return {"chi" + std::to_string(i + 1), [self, i](double x) { return self.chi(i, x); }, sorted_unique(bps)};
}

Observable SmoothPartition::component_squared(std::size_t i) const {
    Observable c = component(i);
    auto f = c.f;
    c.name += "^2";
    c.f = [f](double x) {
        double v = f(x);
        return v * v;
    };
    return c;
}

SmoothPartition smooth_partition(const std::vector<Interval>& intervals, double delta) {
    if (intervals.empty()) throw InvalidArgument("empty partition");
    if (delta < 0.0) throw DeltaTooLargeError("negative smoothing width");
    SmoothPartition part;
    part.delta = delta;
    part.cuts.push_back(to_double(intervals.front().lo));
    double shortest = 1.0;
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        if (i > 0 && intervals[i].lo != intervals[i - 1].hi) throw InvalidArgument("intervals must be contiguous");
        part.cuts.push_back(to_double(intervals[i].hi));
        shortest = std::min(shortest, to_double(intervals[i].length()));
    }
    if (part.cuts.front() != 0.0 || part.cuts.back() != 1.0) throw InvalidArgument("intervals must cover [0,1]");
    if (delta > 0.0 && delta >= 0.5 * shortest) {
        throw DeltaTooLargeError("delta " + std::to_string(delta) + " must stay below half the shortest interval " +
                                 std::to_string(shortest));
    }
    return part;
}

std::vector<Eigen::VectorXd> quantize_partition(const SmoothPartition& part, long N) {
    std::vector<Eigen::VectorXd> out;
    for (std::size_t i = 0; i < part.size(); ++i) {
        Eigen::VectorXd d = op_quantize(part.component_squared(i), N).diagonal;
        out.push_back(d.cwiseMax(0.0).cwiseSqrt());
    }
    return out;
}

NormResult gram_norm(const std::function<CVector(const CVector&)>& gram, long dim, const NormOptions& opt) {
    // Lanczos with full reorthogonalization: the Krylov span of the power iterates, so the top Ritz
    // value dominates the plain Rayleigh quotient after the same number of Gram applications.
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> g;
    CVector v(dim);
    for (auto& c : v) c = cd(g(rng), g(rng));
    v.normalize();
    const int cap = static_cast<int>(std::min<long>(opt.max_iterations, dim));
    std::vector<CVector> basis{v};
    std::vector<double> alpha, beta;
    NormResult res;
    double prev = -1.0, ritz = 0.0, before = 0.0;
    for (int it = 1; it <= cap; ++it) {
        CVector w = gram(basis.back());
        alpha.push_back(std::real(basis.back().dot(w)));
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& q : basis) w -= q * q.dot(w);
        const double b = w.norm();
        const int m = static_cast<int>(alpha.size());
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
        for (int i = 0; i < m; ++i) {
            T(i, i) = alpha[i];
            if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
        }
        ritz = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(T, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
        res.iterations = it;
        const double scale = std::max(std::abs(ritz), 1e-300);
        const bool invariant = b <= 1e-14 * std::max(1.0, scale);
        const bool settled = prev >= 0.0 && std::abs(ritz - prev) <= opt.tol * scale;
        const bool negligible = std::abs(ritz) < 1e-26;
        if (invariant || settled || negligible || it == dim) {
            res.norm = std::sqrt(std::max(ritz, 0.0));
            return res;
        }
        before = prev;
        prev = ritz;
        beta.push_back(b);
        basis.push_back(w / b);
    }
    std::ostringstream os;
    os.precision(17);
    os << "norm iteration did not settle after " << cap << " steps; last Ritz values " << std::sqrt(std::max(before, 0.0))
       << " and " << std::sqrt(std::max(ritz, 0.0));
    throw ConvergenceError(os.str());
}

double egorov_defect(const UnitaryOperator& U, const PiecewiseLinearMap& map, const Observable& f, int n,
                     const NormOptions& opt) {
    if (n < 1) throw InvalidArgument("n must be at least 1");
    const long N = U.dim();
    const Eigen::VectorXd d0 = op_quantize(f, N).diagonal;
    const Eigen::VectorXd dn = op_quantize(compose(f, map, n), N).diagonal;
    auto A = [&](const CVector& v) {
        CVector w = U.power_apply(v, n);
        w = d0.cast<cd>().cwiseProduct(w);
        w = U.power_apply(w, -n);
        return CVector(w - dn.cast<cd>().cwiseProduct(v));
    };
    return gram_norm([&](const CVector& v) { return A(A(v)); }, N, opt).norm;
}

double commutator_defect(const UnitaryOperator& U, const Observable& f, const Observable& g, int n,
                         const NormOptions& opt) {
    const long N = U.dim();
    const CVector df = op_quantize(f, N).diagonal.cast<cd>();
    const CVector dg = op_quantize(g, N).diagonal.cast<cd>();
    auto A = [&](const CVector& v) { return CVector(U.power_apply(df.cwiseProduct(U.power_apply(v, n)), -n)); };
    auto C = [&](const CVector& v) { return CVector(A(dg.cwiseProduct(v)) - dg.cwiseProduct(A(v))); };
    // C is anti-Hermitian, so C*C = -C^2
    return gram_norm([&](const CVector& v) { return CVector(-C(C(v))); }, N, opt).norm;
}

std::vector<Interval> preimage(const PiecewiseLinearMap& map, const Interval& X, int n) {
    std::vector<Interval> cur{X};
    for (int s = 0; s < n; ++s) {
        std::vector<Interval> next;
        for (std::size_t j = 0; j < map.size(); ++j) {
            const Rational L(map.slopes[j]);
            for (const auto& iv : cur) {
                Rational lo = std::max((iv.lo - map.offsets[j]) / L, map.branches[j].lo);
                Rational hi = std::min((iv.hi - map.offsets[j]) / L, map.branches[j].hi);
                if (hi > lo) next.push_back({lo, hi});
            }
        }
        std::sort(next.begin(), next.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
        std::vector<Interval> merged;
        for (const auto& iv : next) {
            if (!merged.empty() && merged.back().hi == iv.lo) merged.back().hi = iv.hi;
            else merged.push_back(iv);
        }
        cur.swap(merged);
    }
    return cur;
}

Eigen::VectorXd indicator_diagonal(const std::vector<Interval>& set, long N) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(N);
    for (const auto& iv : set) {
        Rational a = iv.lo * Rational(N), b = iv.hi * Rational(N);
        if (a.denominator() != 1 || b.denominator() != 1) {
            std::ostringstream os;
            os << "interval [" << iv.lo << ", " << iv.hi << "] is not on the 1/" << N << " grid";
            throw AlignmentError(os.str());
        }
        for (auto i = a.numerator(); i < b.numerator(); ++i) d[i] = 1.0;
    }
    return d;
}

Observable obs_union(const std::vector<Interval>& set) {
    std::vector<std::pair<double, double>> iv;
    std::vector<double> bps;
    for (const auto& i : set) {
        iv.emplace_back(to_double(i.lo), to_double(i.hi));
        for (double c : {iv.back().first, iv.back().second})
            if (c > 0.0 && c < 1.0) bps.push_back(c);
    }
    return {"union", [iv](double x) {
                for (const auto& [a, b] : iv)
                    if (x >= a && (x < b || (b >= 1.0 && x <= b))) return 1.0;
                return 0.0;
            },
            sorted_unique(bps)};
}

double exact_egorov_check(const UnitaryOperator& U, const PiecewiseLinearMap& map, const Interval& X, int n,
                          bool require_alignment) {
    const long N = U.dim();
    const Eigen::VectorXd px = indicator_diagonal({X}, N);
    Eigen::VectorXd py = px;
    if (require_alignment) {
        for (int j = 1; j <= n; ++j) py = indicator_diagonal(preimage(map, X, j), N);
    } else if (n > 0) {
        py = op_quantize(obs_union(preimage(map, X, n)), N).diagonal;
    }
    CMatrix W = CMatrix::Identity(N, N);
    for (int s = 0; s < n; ++s) W = U.apply(W);
    W = px.cast<cd>().asDiagonal() * W;
    for (int s = 0; s < n; ++s) W = U.apply_adjoint(W);
    W.diagonal() -= py.cast<cd>();
    return W.cwiseAbs().maxCoeff();
}

}  // namespace qmel

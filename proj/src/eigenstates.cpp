#include "qmel/eigenstates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "qmel/errors.hpp"
#include "qmel/io.hpp"
#include "qmel/parallel.hpp"

namespace qmel {

namespace {

constexpr double kVectorTol = 1e-12;

std::string digit_alphabet(int p) {
    std::string a;
    for (int i = 0; i < p; ++i) a.push_back(static_cast<char>('0' + i));
    return a;
}

bool is_uniform(const PiecewiseLinearMap& map) {
    return std::all_of(map.slopes.begin(), map.slopes.end(),
                       [&](int s) { return s == static_cast<int>(map.size()); });
}

PiecewiseLinearMap t244() { return build_map({2, 4, 4}); }

double binary_entropy_terms(const CVector& w) {
    double h = 0.0;
    for (long j = 0; j < w.size(); ++j) h -= xlogx(std::norm(w[j]));
    return h;
}

void require_unit(const CVector& w, int p) {
    if (w.size() != p) throw DimensionError("vector length " + std::to_string(w.size()) + " does not match p = " + std::to_string(p));
    if (std::abs(w.norm() - 1.0) > kVectorTol) throw InvalidArgument("family vectors must have unit norm");
}

// lambda with |U w - lambda w| <= tol, else NotEigenvectorError.
cd eigenvalue_of(const SiteUnitary& site, const CVector& w) {
    require_unit(w, site.p());
    const CVector Uw = site.m * w;
    const cd lambda = w.dot(Uw);
    const double r = (Uw - lambda * w).norm();
    if (r > kVectorTol) throw NotEigenvectorError("site residual " + format_double(r));
    return lambda;
}

FamilyMeasure make_measure(const ProductFamily& f, const PiecewiseLinearMap& map) {
    FamilyMeasure m;
    m.p = f.sites.empty() ? static_cast<int>(f.w.front().size()) : f.sites.front().p();
    m.d = f.d;
    m.w = f.w;
    m.coefficients = f.coefficients;
    double tot = 0.0;
    for (const auto& c : f.coefficients) tot += std::norm(c);
    if (!(tot > 0.0)) throw InvalidArgument("all family coefficients vanish");
    for (const auto& c : f.coefficients) m.weight.push_back(std::norm(c) / tot);
    for (const auto& w : f.w) m.entropy_pd += binary_entropy_terms(w);
    m.entropy_p = m.entropy_pd / m.d;
    const auto prefixes = branch_prefixes(map);
    m.gamma = 0.0;
    for (std::size_t j = 0; j < prefixes.size(); ++j) m.gamma += map.exponents[j] * m(prefixes[j]);
    m.entropy = m.gamma / m.d * m.entropy_pd;
    return m;
}

}  // namespace

double FamilyMeasure::operator()(const std::string& x) const {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        if (weight[i] == 0.0) continue;
        double prod = weight[i];
        for (std::size_t t = 0; t < x.size(); ++t) prod *= std::norm(w[(i + t) % d][x[t] - '0']);
        s += prod;
    }
    return s;
}

double FamilyMeasure::finite(const std::string& x, int k) const {
    if (static_cast<int>(x.size()) > k) throw InvalidArgument("string longer than k");
    std::vector<cd> overlap(d * d);  // <w^(b), w^(a)>
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) overlap[a * d + b] = w[b].dot(w[a]);
    const int m = static_cast<int>(x.size());
    cd num = 0.0, den = 0.0;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            cd ci = coefficients[i] * std::conj(coefficients[j]);
            cd pn = ci, pd = ci;
            for (int t = 0; t < k; ++t) {
                const int a = (i + t) % d, b = (j + t) % d;
                pd *= overlap[a * d + b];
                if (t < m) {
                    const int dig = x[t] - '0';
                    pn *= std::conj(w[b][dig]) * w[a][dig];
                } else {
                    pn *= overlap[a * d + b];
                }
            }
            num += pn;
            den += pd;
        }
    }
    return num.real() / den.real();
}

MeasureOracle FamilyMeasure::oracle() const {
    return [m = *this](const std::string& x) { return m(x); };
}

std::vector<double> FamilyMeasure::branch_masses(const PiecewiseLinearMap& map) const {
    std::vector<double> out;
    for (const auto& c : branch_prefixes(map)) out.push_back((*this)(c));
    return out;
}

CVector kron_chain(const std::vector<CVector>& factors) {
    CVector psi(1);
    psi << 1.0;
    for (const auto& f : factors) {
        CVector next(psi.size() * f.size());
        for (long a = 0; a < psi.size(); ++a) next.segment(a * f.size(), f.size()) = psi[a] * f;
        psi = std::move(next);
    }
    return psi;
}

std::vector<std::pair<cd, CVector>> site_eigenvectors(const SiteUnitary& site) {
    Eigen::ComplexSchur<CMatrix> schur(site.m);
    const CMatrix& T = schur.matrixT();
    const CMatrix& Q = schur.matrixU();
    std::vector<std::pair<cd, CVector>> out;
    // for a normal matrix the Schur form is diagonal up to rounding
    for (long j = 0; j < T.rows(); ++j) out.emplace_back(T(j, j), Q.col(j).normalized());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return phase_of(a.first) < phase_of(b.first); });
    return out;
}

FamilyState cycle_family(const ProductFamily& family, const PiecewiseLinearMap& map, int k, double accept) {
    if (family.d < 1 || static_cast<int>(family.w.size()) != family.d ||
        static_cast<int>(family.coefficients.size()) != family.d) {
        throw InvalidArgument("a family needs d vectors and d coefficients");
    }
    if (family.sites.empty()) throw InvalidArgument("a family needs site unitaries");
    if (k < 1 || k % family.d != 0) throw NotEigenstateError("k must be a positive multiple of d");
    const int p = family.sites.front().p();
    for (const auto& w : family.w) require_unit(w, p);

    FamilyState out;
    out.map = map;
    out.U = is_uniform(map) ? tensorial_uniform(family.sites.front(), k) : tensorial_nonuniform(map, family.sites, k);

    CVector psi = CVector::Zero(out.U.dim());
    for (int i = 0; i < family.d; ++i) {
        if (family.coefficients[i] == 0.0) continue;
        std::vector<CVector> factors;
        for (int t = 0; t < k; ++t) factors.push_back(family.w[(i + t) % family.d]);
        psi += family.coefficients[i] * kron_chain(factors);
    }
    const double nrm = psi.norm();
    if (!(nrm > 0.0)) throw NotEigenstateError("the superposition vanishes");
    psi /= nrm;
    const double theta = phase_of(psi.dot(out.U.apply(psi)));
    const double r = eigen_residual(out.U, psi, theta);
    if (!(r <= accept)) throw NotEigenstateError("eigen-residual " + format_double(r));
    out.state = EigenState{psi, theta, r};
    out.measure = make_measure(family, map);
    return out;
}

FamilyState product_eigenstate(const SiteUnitary& site, const CVector& w, int k) {
    eigenvalue_of(site, w);
    const PiecewiseLinearMap uniform = build_map(std::vector<int>(site.p(), site.p()));
    return cycle_family(ProductFamily{1, {w}, {1.0}, {site}}, uniform, k);
}

FamilyState example1_state(const SiteUnitary& site, int k) {
    if (site.p() != 2) throw PrecondError("the alternating state needs a 2x2 site unitary");
    if (k < 2 || k % 2 != 0) throw PrecondError("k must be even");
    if (!site.flat) throw PrecondError("site unitary is not flat");
    const double sq = (site.m * site.m + CMatrix::Identity(2, 2)).cwiseAbs().maxCoeff();
    if (sq > kVectorTol) throw PrecondError("U^2 differs from -1 by " + format_double(sq));
    const CVector one = CVector::Unit(2, 1);
    const CVector e_plus = site.m * one;
    return cycle_family(ProductFamily{2, {one, e_plus}, {1.0, 0.0}, {site, site}}, t244(), k);
}

double example2_entropy(double q) {
    const double p = 1.0 - q;
    return -(xlogx(p) + xlogx(p * q) + xlogx(q * q));
}

FamilyState example2_state(const SiteUnitary& site, const CVector& w, int k) {
    if (site.p() != 2) throw PrecondError("the constant-product state needs a 2x2 site unitary");
    if (!site.flat) throw PrecondError("site unitary is not flat");
    const cd lambda = eigenvalue_of(site, w);
    SiteUnitary u2 = site;
    u2.m *= std::conj(lambda) / std::abs(lambda);
    const double q = std::norm(w[1]);
    const double lo = (2.0 - std::sqrt(2.0)) / 4.0, hi = (2.0 + std::sqrt(2.0)) / 4.0;
    if (q < lo - kVectorTol || q > hi + kVectorTol) throw PrecondError("q = " + format_double(q) + " lies outside the admissible interval");
    return cycle_family(ProductFamily{1, {w}, {1.0}, {site, u2}}, t244(), k);
}

SiteUnitary example3_site(double alpha) {
    CMatrix m(2, 2);
    m << 1.0, std::polar(1.0, alpha), std::polar(1.0, -alpha), -1.0;
    return make_site(m / std::sqrt(2.0));
}

std::pair<CVector, CVector> example3_vectors(cd z, double alpha) {
    const double r2 = std::sqrt(2.0);
    const double c = 1.0 + std::norm(z * r2 - 1.0);
    const cd ph = std::polar(1.0, -alpha);
    CVector w1(2), w2(2);
    w1 << 1.0, ph * (z * r2 - 1.0);
    w2 << z, ph * (r2 - z);
    return {w1 / std::sqrt(c), w2 / std::sqrt(c)};
}

FamilyMeasure example3_measure(cd z, double alpha) {
    auto [w1, w2] = example3_vectors(z, alpha);
    const SiteUnitary u = example3_site(alpha);
    return make_measure(ProductFamily{2, {w1, w2}, {z, 1.0}, {u, u}}, t244());
}

FamilyState example3_state(cd z, double alpha, int k) {
    if (k < 2 || k % 2 != 0) throw PrecondError("k must be even");
    auto [w1, w2] = example3_vectors(z, alpha);
    const SiteUnitary u = example3_site(alpha);
    return cycle_family(ProductFamily{2, {w1, w2}, {z, 1.0}, {u, u}}, t244(), k);
}

double family_entropy_numeric(const FamilyMeasure& m, int n) {
    if (n <= m.d) throw InvalidArgument("n must exceed the cycle length");
    const auto est = ks_entropy_estimate(m.oracle(), digit_alphabet(m.p), n);
    const double hn = n * est.h_over_n[n - 1];
    const double hd = (n - m.d) * est.h_over_n[n - m.d - 1];
    return m.gamma * (hn - hd) / m.d;
}

Fig4Report fig4_scan(double z_min, double z_max, int steps, double alpha, int k, int n) {
    if (steps < 2) throw InvalidArgument("steps must be at least 2");
    if (!(z_max > z_min)) throw InvalidArgument("z_max must exceed z_min");
    Fig4Report rep;
    rep.alpha = alpha;
    rep.k = k;
    rep.n = n;
    rep.rows.resize(steps);
    const auto map = t244();
    parallel_for(static_cast<std::size_t>(steps), [&](std::size_t i) {
        Fig4Row& row = rep.rows[i];
        // snap to the grid so z = 0 is hit exactly on symmetric ranges
        double z = z_min + (z_max - z_min) * static_cast<double>(i) / (steps - 1);
        if (std::abs(z) < 1e-12 * (z_max - z_min)) z = 0.0;
        row.re_z = z;
        const FamilyMeasure m = example3_measure(z, alpha);
        row.entropy = m.entropy;
        row.bound = entropy_bound_half(m.branch_masses(map), map);
        row.margin = row.entropy - row.bound;
        row.entropy_numeric = family_entropy_numeric(m, n);
        row.mirror_gap = z == 0.0 ? 0.0 : std::abs(m.entropy - example3_measure(1.0 / z, alpha).entropy);
        try {
            row.residual = k > 0 ? example3_state(z, alpha, k).state.residual : 0.0;
        } catch (const NotEigenstateError&) {
            row.residual = std::numeric_limits<double>::quiet_NaN();
        }
    });
    rep.min_margin = rep.rows.front().margin;
    for (const auto& r : rep.rows) {
        rep.min_margin = std::min(rep.min_margin, r.margin);
        rep.max_mirror_gap = std::max(rep.max_mirror_gap, r.mirror_gap);
        if (std::isnan(r.residual))
            ++rep.vanishing;
        else
            rep.max_residual = std::max(rep.max_residual, r.residual);
    }
    return rep;
}

std::string fig4_csv(const Fig4Report& report) {
    std::vector<std::vector<double>> rows;
    for (const auto& r : report.rows) rows.push_back({r.re_z, r.entropy, r.bound, r.entropy_numeric, r.margin});
    return to_csv({"re_z", "entropy", "bound", "entropy_numeric_n", "margin"}, rows);
}

std::string fig4_svg(const Fig4Report& report) {
    const double W = 720, H = 440, L = 60, R = 20, T = 20, B = 50;
    const double x0 = report.rows.front().re_z, x1 = report.rows.back().re_z;
    double ymax = 0.0;
    for (const auto& r : report.rows) ymax = std::max({ymax, r.entropy, r.bound});
    ymax = ymax > 0.0 ? 1.1 * ymax : 1.0;
    auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto sy = [&](double y) { return H - B - y / ymax * (H - T - B); };
    auto polyline = [&](auto field, const char* cls, const char* colour) {
        std::ostringstream os;
        os << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& r : report.rows) os << sx(r.re_z) << ',' << sy(field(r)) << ' ';
        os << "\"/>\n";
        return os.str();
    };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = ymax * i / 4.0;
        os << "<text x=\"" << L - 6 << "\" y=\"" << sy(y) + 4 << "\" font-size=\"11\" text-anchor=\"end\">"
           << std::round(y * 1000) / 1000 << "</text>\n";
    }
    for (int i = 0; i <= 6; ++i) {
        const double x = x0 + (x1 - x0) * i / 6.0;
        os << "<text x=\"" << sx(x) << "\" y=\"" << H - B + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
           << std::round(x * 100) / 100 << "</text>\n";
    }
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" font-size=\"13\" text-anchor=\"middle\">Re z</text>\n";
    os << polyline([](const Fig4Row& r) { return r.entropy; }, "entropy", "#1b7837");
    os << polyline([](const Fig4Row& r) { return r.bound; }, "bound", "#2166ac");
    const double zs = std::sqrt(2.0);
    if (zs >= x0 && zs <= x1) {
        const FamilyMeasure m = example3_measure(zs, report.alpha);
        os << "<circle class=\"saturation\" cx=\"" << sx(zs) << "\" cy=\"" << sy(m.entropy)
           << "\" r=\"5\" fill=\"none\" stroke=\"#b2182b\" stroke-width=\"2\"/>\n";
    }
    os << "<text x=\"" << W - R - 150 << "\" y=\"" << T + 14 << "\" font-size=\"12\" fill=\"#1b7837\">entropy</text>\n";
    os << "<text x=\"" << W - R - 150 << "\" y=\"" << T + 30 << "\" font-size=\"12\" fill=\"#2166ac\">lower bound</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace qmel

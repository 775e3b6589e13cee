#include "qmel/classical.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace qmel {

namespace {

std::int64_t floor_of(const Rational& r) {
    std::int64_t q = r.numerator() / r.denominator();
    if (r.numerator() < 0 && q * r.denominator() != r.numerator()) --q;
    return q;
}

std::int64_t ceil_of(const Rational& r) {
    std::int64_t f = floor_of(r);
    return (Rational(f) == r) ? f : f + 1;
}

bool is_power_of(int value, int base, int& exponent) {
    exponent = 0;
    while (value % base == 0) {
        value /= base;
        ++exponent;
    }
    return value == 1 && exponent > 0;
}

void check_aligned(const Rational& point, int N) {
    Rational scaled = point * Rational(N);
    if (scaled.denominator() != 1) {
        std::ostringstream os;
        os << "endpoint " << point << " is not a multiple of 1/" << N;
        throw PartitionAlignmentError(os.str());
    }
}

}  // namespace

double to_double(const Rational& r) {
    return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

int PiecewiseLinearMap::max_slope() const {
    return slopes.empty() ? 0 : *std::max_element(slopes.begin(), slopes.end());
}

int PiecewiseLinearMap::max_exponent() const {
    return exponents.empty() ? 0 : *std::max_element(exponents.begin(), exponents.end());
}

bool PiecewiseLinearMap::is_uniform() const {
    return std::adjacent_find(slopes.begin(), slopes.end(), std::not_equal_to<>()) == slopes.end();
}

std::size_t PiecewiseLinearMap::branch_of(const Rational& x) const {
    for (std::size_t j = 0; j + 1 < branches.size(); ++j) {
        if (x < branches[j].hi) return j;
    }
    return branches.size() - 1;
}

std::size_t PiecewiseLinearMap::branch_of(double x) const {
    for (std::size_t j = 0; j + 1 < branches.size(); ++j) {
        if (x < to_double(branches[j].hi)) return j;
    }
    return branches.size() - 1;
}

double PiecewiseLinearMap::apply(double x) const {
    std::size_t j = branch_of(x);
    return slopes[j] * x + to_double(offsets[j]);
}

PiecewiseLinearMap build_map(const std::vector<int>& slopes) {
    if (slopes.empty()) throw SlopeSumError("empty slope list");
    for (int s : slopes) {
        if (s < 2) throw SlopeRangeError("slope " + std::to_string(s) + " is below 2");
    }
    Rational sum(0);
    for (int s : slopes) sum += Rational(1, s);
    if (sum != Rational(1)) {
        std::ostringstream os;
        os << "sum of inverse slopes is " << sum;
        throw SlopeSumError(os.str());
    }

    PiecewiseLinearMap m;
    m.slopes = slopes;
    Rational left(0);
    for (int s : slopes) {
        m.offsets.push_back(-Rational(s) * left);
        Rational right = left + Rational(1, s);
        m.branches.push_back({left, right});
        left = right;
    }

    int smallest = *std::min_element(slopes.begin(), slopes.end());
    for (int p = 2; p <= smallest; ++p) {
        std::vector<int> exps;
        bool ok = true;
        for (int s : slopes) {
            int e = 0;
            if (!is_power_of(s, p, e)) {
                ok = false;
                break;
            }
            exps.push_back(e);
        }
        if (ok) {
            m.uniform_base = p;
            m.exponents = exps;
            break;
        }
    }
    return m;
}

Rational apply_map(const PiecewiseLinearMap& map, Rational x, int steps) {
    for (int s = 0; s < steps; ++s) {
        std::size_t j = map.branch_of(x);
        x = Rational(map.slopes[j]) * x + map.offsets[j];
    }
    return x;
}

std::vector<AffinePiece> pieces_of(const PiecewiseLinearMap& map) {
    std::vector<AffinePiece> out;
    for (std::size_t j = 0; j < map.size(); ++j) {
        out.push_back({map.branches[j], Rational(map.slopes[j]), map.offsets[j]});
    }
    return out;
}

Rational TransferMatrix::at(int i, int j) const {
    for (const auto& [col, v] : rows.at(i)) {
        if (col == j) return v;
    }
    return Rational(0);
}

Eigen::MatrixXd TransferMatrix::dense() const {
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(N, N);
    for (int i = 0; i < N; ++i) {
        for (const auto& [j, v] : rows[i]) B(i, j) = to_double(v);
    }
    return B;
}

bool TransferMatrix::doubly_stochastic() const {
    std::vector<Rational> col(N, Rational(0));
    for (int i = 0; i < N; ++i) {
        Rational row(0);
        for (const auto& [j, v] : rows[i]) {
            if (v < Rational(0)) return false;
            row += v;
            col[j] += v;
        }
        if (row != Rational(1)) return false;
    }
    return std::all_of(col.begin(), col.end(), [](const Rational& c) { return c == Rational(1); });
}

TransferMatrix TransferMatrix::operator*(const TransferMatrix& other) const {
    if (N != other.N) throw DimensionError("transfer matrix sizes differ");
    TransferMatrix out;
    out.N = N;
    out.rows.resize(N);
    for (int i = 0; i < N; ++i) {
        std::map<int, Rational> acc;
        for (const auto& [m, a] : rows[i]) {
            for (const auto& [j, b] : other.rows[m]) acc[j] += a * b;
        }
        for (const auto& [j, v] : acc) {
            if (v != Rational(0)) out.rows[i].emplace_back(j, v);
        }
    }
    return out;
}

bool TransferMatrix::operator==(const TransferMatrix& other) const {
    if (N != other.N) return false;
    for (int i = 0; i < N; ++i) {
        auto a = rows[i];
        auto b = other.rows[i];
        std::sort(a.begin(), a.end(), [](auto& x, auto& y) { return x.first < y.first; });
        std::sort(b.begin(), b.end(), [](auto& x, auto& y) { return x.first < y.first; });
        if (a != b) return false;
    }
    return true;
}

TransferMatrix transfer_matrix(const std::vector<AffinePiece>& pieces, int N) {
    if (N < 1) throw PartitionAlignmentError("partition size must be positive");
    for (const auto& pc : pieces) {
        check_aligned(pc.domain.lo, N);
        check_aligned(pc.domain.hi, N);
    }
    TransferMatrix B;
    B.N = N;
    B.rows.resize(N);
    const Rational cell(1, N);
    std::size_t piece = 0;
    for (int i = 0; i < N; ++i) {
        Rational a = Rational(i) * cell;
        while (piece + 1 < pieces.size() && a >= pieces[piece].domain.hi) ++piece;
        const AffinePiece& pc = pieces[piece];
        Rational u = pc.slope * a + pc.offset;
        Rational v = pc.slope * (a + cell) + pc.offset;
        Rational len = v - u;
        std::int64_t j0 = std::max<std::int64_t>(0, floor_of(u * Rational(N)));
        std::int64_t j1 = std::min<std::int64_t>(N, ceil_of(v * Rational(N)));
        for (std::int64_t j = j0; j < j1; ++j) {
            Rational lo = std::max(u, Rational(j) * cell);
            Rational hi = std::min(v, Rational(j + 1) * cell);
            if (hi > lo) B.rows[i].emplace_back(static_cast<int>(j), (hi - lo) / len);
        }
    }
    return B;
}

TransferMatrix transfer_matrix(const PiecewiseLinearMap& map, int N) {
    return transfer_matrix(pieces_of(map), N);
}

Decomposition decompose(const PiecewiseLinearMap& map) {
    Decomposition d;
    int g = 0;
    for (int s : map.slopes) g = std::gcd(g, s);
    d.p = g;
    if (g < 2) throw NotDecomposableError("slopes have gcd 1");
    for (int s : map.slopes) d.slope_bar.push_back(s / g);

    if (!map.is_uniform()) {
        std::vector<int> distinct;
        for (std::size_t i = 0; i < map.size(); ++i) {
            if (i > 0 && map.slopes[i] != map.slopes[i - 1] &&
                std::find(distinct.begin(), distinct.end(), d.slope_bar[i]) != distinct.end()) {
                throw NotDecomposableError("equal slopes are not contiguous");
            }
            if (std::find(distinct.begin(), distinct.end(), d.slope_bar[i]) == distinct.end()) {
                distinct.push_back(d.slope_bar[i]);
            }
        }
        for (int a : distinct) {
            if (a == 1) {
                throw NotDecomposableError("reduced slope 1 next to other slopes; gcd " + std::to_string(g) +
                                           " equals one of the slopes");
            }
        }
        for (std::size_t a = 0; a < distinct.size(); ++a) {
            for (std::size_t b = a + 1; b < distinct.size(); ++b) {
                int h = std::gcd(distinct[a], distinct[b]);
                if (h != 1) {
                    throw NotDecomposableError("reduced slopes " + std::to_string(distinct[a]) + " and " +
                                               std::to_string(distinct[b]) + " share factor " +
                                               std::to_string(h));
                }
            }
        }
    }

    // Each sub-block [s/p, (s+1)/p] must be a union of branches sharing one slope.
    const Rational sub(1, g);
    std::vector<int> block_slope(g, 0);
    for (std::size_t i = 0; i < map.size(); ++i) {
        std::int64_t s = floor_of(map.branches[i].lo * Rational(g));
        if (map.branches[i].hi > Rational(s + 1) * sub) {
            throw NotDecomposableError("branch " + std::to_string(i + 1) + " straddles a 1/p block boundary");
        }
        if (block_slope[s] != 0 && block_slope[s] != map.slopes[i]) {
            throw NotDecomposableError("block " + std::to_string(s) + " mixes slopes");
        }
        block_slope[s] = map.slopes[i];
        Rational off = (map.offsets[i] + Rational(s)) / Rational(g);
        d.block_map.push_back({map.branches[i], Rational(d.slope_bar[i]), off});
    }

    for (std::size_t i = 0; i < map.size(); ++i) {
        if (!d.blocks.empty() && d.blocks.back().slope_bar == d.slope_bar[i]) {
            d.blocks.back().interval.hi = map.branches[i].hi;
        } else {
            d.blocks.push_back({map.branches[i], d.slope_bar[i]});
        }
    }

    d.N0 = g;
    std::vector<int> seen;
    for (int a : d.slope_bar) {
        if (std::find(seen.begin(), seen.end(), a) == seen.end()) {
            seen.push_back(a);
            d.N0 *= a;
        }
    }
    for (int t = 0; t < g; ++t) {
        d.uniform_map.push_back({{Rational(t, g), Rational(t + 1, g)}, Rational(g), Rational(-t)});
    }
    return d;
}

Interval cylinder_interval(int p, const std::string& digits) {
    if (p < 2) throw DigitRangeError("base must be at least 2");
    Rational v(0);
    std::int64_t scale = 1;
    for (char c : digits) {
        int d = c - '0';
        if (d < 0 || d >= p) throw DigitRangeError(std::string("digit '") + c + "' outside base " + std::to_string(p));
        if (scale > (std::int64_t(1) << 55) / p) throw DigitRangeError("cylinder string too long");
        scale *= p;
        v += Rational(d, scale);
    }
    return {v, v + Rational(1, scale)};
}

double CylinderTable::weight(const std::string& s) const {
    auto it = entries.find(s);
    return it == entries.end() ? 0.0 : it->second;
}

double CylinderTable::total() const {
    double t = 0.0;
    for (const auto& [s, w] : entries) t += w;
    return t;
}

double xlogx(double w) {
    if (w < 0.0) throw NegativeWeightError("weight " + std::to_string(w));
    return w > 0.0 ? w * std::log(w) : 0.0;
}

double classical_entropy(const CylinderTable& table) {
    double h = 0.0;
    for (const auto& [s, w] : table.entries) h -= xlogx(w);
    return h;
}

double classical_pressure(const CylinderTable& table, const WeightFunction& v) {
    double p = 0.0;
    for (const auto& [s, w] : table.entries) {
        double vs = v(s);
        if (!(vs > 0.0)) throw InvalidArgument("pressure weights must be positive");
        p -= xlogx(w);
        if (w > 0.0) p -= 2.0 * w * std::log(vs);
    }
    return p;
}

WeightFunction branch_weights(const PiecewiseLinearMap& map) {
    std::vector<int> slopes = map.slopes;
    return [slopes](const std::string& eps) {
        double v = 1.0;
        for (char c : eps) v /= std::sqrt(static_cast<double>(slopes.at(c - '1')));
        return v;
    };
}

std::vector<std::string> all_strings(const std::string& alphabet, int length) {
    std::vector<std::string> out{""};
    for (int n = 0; n < length; ++n) {
        std::vector<std::string> next;
        next.reserve(out.size() * alphabet.size());
        for (const auto& s : out) {
            for (char a : alphabet) next.push_back(s + a);
        }
        out.swap(next);
    }
    return out;
}

CylinderTable tabulate(const MeasureOracle& oracle, const std::string& alphabet, int length) {
    CylinderTable t;
    t.alphabet = alphabet;
    t.length = length;
    for (const auto& s : all_strings(alphabet, length)) t.entries[s] = oracle(s);
    return t;
}

KsEstimate ks_entropy_estimate(const MeasureOracle& oracle, const std::string& alphabet, int n_max) {
    if (alphabet.empty() || n_max < 1) throw InvalidArgument("empty alphabet or n_max < 1");
    const std::size_t A = alphabet.size();
    KsEstimate est;
    std::vector<double> parent{1.0};
    std::string name;
    for (int n = 1; n <= n_max; ++n) {
        std::vector<double> level(parent.size() * A);
        double h = 0.0;
        name.assign(n, alphabet[0]);
        for (std::size_t c = 0; c < parent.size(); ++c) {
            std::size_t rest = c;
            for (int i = n - 2; i >= 0; --i) {
                name[i] = alphabet[rest % A];
                rest /= A;
            }
            double sum = 0.0;
            for (std::size_t a = 0; a < A; ++a) {
                name[n - 1] = alphabet[a];
                double w = oracle(name);
                level[c * A + a] = w;
                sum += w;
                h -= xlogx(w);
            }
            if (std::abs(sum - parent[c]) > 1e-9) {
                throw InconsistentMeasureError("marginal of '" + name.substr(0, n - 1) + "' is " +
                                               std::to_string(parent[c]) + " but children sum to " +
                                               std::to_string(sum));
            }
        }
        est.h_over_n.push_back(h / n);
        parent.swap(level);
    }
    est.estimate = est.h_over_n.back();
    return est;
}

std::vector<std::string> branch_prefixes(const PiecewiseLinearMap& map) {
    if (!map.uniform_base) throw NotTpError("slopes are not powers of a common base");
    const int p = *map.uniform_base;
    std::vector<std::string> out;
    for (std::size_t j = 0; j < map.size(); ++j) {
        const int n = map.exponents[j];
        Rational scaled = map.branches[j].lo * Rational(map.slopes[j]);
        if (scaled.denominator() != 1) {
            throw NotTpError("branch " + std::to_string(j + 1) + " is not a " + std::to_string(p) + "-adic cylinder");
        }
        std::int64_t v = scaled.numerator();
        std::string digits(n, '0');
        for (int i = n - 1; i >= 0; --i) {
            digits[i] = static_cast<char>('0' + v % p);
            v /= p;
        }
        out.push_back(digits);
    }
    return out;
}

}  // namespace qmel

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/rational.hpp>

#include "qmel/errors.hpp"

namespace qmel {

using Rational = boost::rational<std::int64_t>;

double to_double(const Rational& r);

struct Interval {
    Rational lo;
    Rational hi;
    Rational length() const { return hi - lo; }
    bool contains(const Interval& other) const { return lo <= other.lo && other.hi <= hi; }
    bool operator==(const Interval& o) const { return lo == o.lo && hi == o.hi; }
};

// Piecewise linear Lebesgue-preserving map T(x) = slope_j * x + offset_j on branch j.
// Branches are right-open except the last one.
struct PiecewiseLinearMap {
    std::vector<int> slopes;
    std::vector<Rational> offsets;
    std::vector<Interval> branches;
    std::optional<int> uniform_base;
    std::vector<int> exponents;  // slope_j = base^exponents_j, filled when uniform_base is set

    std::size_t size() const { return slopes.size(); }
    int max_slope() const;
    int max_exponent() const;
    bool is_uniform() const;
    std::size_t branch_of(const Rational& x) const;
    std::size_t branch_of(double x) const;
    double apply(double x) const;
};

PiecewiseLinearMap build_map(const std::vector<int>& slopes);
Rational apply_map(const PiecewiseLinearMap& map, Rational x, int steps = 1);

// Affine piece used for maps that need not map each branch onto [0,1].
struct AffinePiece {
    Interval domain;
    Rational slope;
    Rational offset;
};

std::vector<AffinePiece> pieces_of(const PiecewiseLinearMap& map);

// Sparse exact transfer matrix: rows[i] lists (j, B(i,j)) with B(i,j) != 0.
struct TransferMatrix {
    int N = 0;
    std::vector<std::vector<std::pair<int, Rational>>> rows;

    Rational at(int i, int j) const;
    Eigen::MatrixXd dense() const;
    bool doubly_stochastic() const;
    TransferMatrix operator*(const TransferMatrix& other) const;
    bool operator==(const TransferMatrix& other) const;
};

TransferMatrix transfer_matrix(const PiecewiseLinearMap& map, int N);
TransferMatrix transfer_matrix(const std::vector<AffinePiece>& pieces, int N);

struct DecompositionBlock {
    Interval interval;
    int slope_bar = 1;
};

struct Decomposition {
    int p = 0;
    std::vector<int> slope_bar;            // per branch
    std::vector<DecompositionBlock> blocks;
    long N0 = 0;
    std::vector<AffinePiece> block_map;    // T_BD as affine pieces, one per branch
    std::vector<AffinePiece> uniform_map;  // bar T_p as affine pieces
};

Decomposition decompose(const PiecewiseLinearMap& map);

Interval cylinder_interval(int p, const std::string& digits);

// Digit strings use '0'..'9'; branch strings use '1'..'9'.
struct CylinderTable {
    std::string alphabet;
    int length = 0;
    std::map<std::string, double> entries;

    double weight(const std::string& s) const;
    double total() const;
};

using MeasureOracle = std::function<double(const std::string&)>;
using WeightFunction = std::function<double(const std::string&)>;

double xlogx(double w);
double classical_entropy(const CylinderTable& table);
double classical_pressure(const CylinderTable& table, const WeightFunction& v);

// v_eps = prod over symbols of slope^{-1/2}; symbols are branch labels '1'..'9'.
WeightFunction branch_weights(const PiecewiseLinearMap& map);

struct KsEstimate {
    std::vector<double> h_over_n;  // index n-1 holds h_n / n
    double estimate = 0.0;         // h_{n_max} / n_max
};

KsEstimate ks_entropy_estimate(const MeasureOracle& oracle, const std::string& alphabet, int n_max);

// Tabulate an oracle on all strings of one length.
CylinderTable tabulate(const MeasureOracle& oracle, const std::string& alphabet, int length);

// Enumerate all strings of a given length over an alphabet, lexicographically.
std::vector<std::string> all_strings(const std::string& alphabet, int length);

// Digit string of a branch cylinder for T_p maps: branch j is the cylinder of its p-adic prefix.
std::vector<std::string> branch_prefixes(const PiecewiseLinearMap& map);

}  // namespace qmel

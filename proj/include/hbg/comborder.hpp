#pragma once

#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "hbg/sampler.hpp"

// Exact combinatorics of backward route destruction: the count recurrence,
// its closed form, and a brute-force enumerator used as ground truth.
namespace hbg {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

/// B(a, j) = 2a B(a-1, j) + j B(a, j-1), B(0, 0) = 1.
BigInt count_recurrence(int a, int j);
/// (a + j)! * 2^a
BigInt count_closed(int a, int j);
BigInt binomial(int n, int k);

struct DestructionStep {
    int segment = 0;
    bool reverse = false;  // always false for single-customer segments
    bool operator==(const DestructionStep&) const = default;
    auto operator<=>(const DestructionStep&) const = default;
};

struct DestructionSequence {
    std::vector<DestructionStep> steps;
    /// Product over depot decisions of 1 / (2 a_k + j_k) with the remaining counts.
    Rational probability;
};

inline constexpr int kMaxEnumeratedSegments = 7;

/// Every (order x direction) destruction of the decomposition's segments.
/// Throws CapacityError when a + j exceeds kMaxEnumeratedSegments.
std::vector<DestructionSequence> enumerate_destructions(const RouteDecomposition& decomp);
/// Same, on a synthetic decomposition: segments 0..a-1 multi-customer, then j singles.
std::vector<DestructionSequence> enumerate_destructions(int a, int j);

struct StatementRow {
    int a = 0;
    int j = 0;
    BigInt recurrence;
    BigInt closed;
    BigInt enumerated;
    Rational prob_sum;
    Rational min_prob;
    Rational max_prob;
    Rational normalized;  // B / (2^a a! j!)
    BigInt binom;         // C(a + j, a)

    bool counts_agree() const { return recurrence == closed && closed == enumerated; }
    bool mass_is_one() const { return prob_sum == 1; }
    bool normalized_is_binomial() const { return normalized == Rational(binom); }
    /// True when every destruction order has probability exactly 1 / B(a, j).
    bool uniform_over_orders() const { return min_prob == max_prob && min_prob == Rational(1, closed); }
};

struct VerificationReport {
    std::vector<StatementRow> rows;

    bool counts_agree() const;
    bool mass_is_one() const;
    bool normalized_is_binomial() const;
    /// Rows where step-wise probabilities are not uniform over orders.
    std::vector<const StatementRow*> discrepancies() const;
    /// Columns: a, j, recurrence, closed, enumerated, prob_sum, min_prob, max_prob.
    std::string table() const;
};

/// All (a, j) with a <= a_max, j <= j_max; requires a_max + j_max <= kMaxEnumeratedSegments.
VerificationReport verify_statements(int a_max, int j_max);

std::string to_string(const Rational& q);

}  // namespace hbg

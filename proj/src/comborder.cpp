#include "hbg/comborder.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "hbg/errors.hpp"

namespace hbg {

namespace {

BigInt factorial(int n) {
    BigInt f = 1;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

void require_counts(int a, int j, const char* where) {
    if (a < 0 || j < 0) throw DomainError(std::string(where) + ": counts must be non-negative");
}

}  // namespace

BigInt count_recurrence(int a, int j) {
    require_counts(a, j, "count_recurrence");
    // Row-by-row table; B[x][y] for x <= a, y <= j.
    std::vector<std::vector<BigInt>> b(static_cast<std::size_t>(a) + 1, std::vector<BigInt>(static_cast<std::size_t>(j) + 1));
    for (int x = 0; x <= a; ++x) {
        for (int y = 0; y <= j; ++y) {
            if (x == 0 && y == 0) {
                b[0][0] = 1;
                continue;
            }
            BigInt v = 0;
            if (x > 0) v += 2 * x * b[static_cast<std::size_t>(x - 1)][static_cast<std::size_t>(y)];
            if (y > 0) v += y * b[static_cast<std::size_t>(x)][static_cast<std::size_t>(y - 1)];
            b[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] = v;
        }
    }
    return b[static_cast<std::size_t>(a)][static_cast<std::size_t>(j)];
}

BigInt count_closed(int a, int j) {
    require_counts(a, j, "count_closed");
    return factorial(a + j) * (BigInt(1) << a);
}

BigInt binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    return factorial(n) / (factorial(k) * factorial(n - k));
}

namespace {

struct Enumerator {
    std::vector<bool> multi;  // per segment
    std::vector<bool> used;
    std::vector<DestructionStep> path;
    std::vector<DestructionSequence> out;

    void run(int remaining_multi, int remaining_single, const Rational& prob) {
        if (remaining_multi + remaining_single == 0) {
            out.push_back({path, prob});
            return;
        }
        const Rational p = prob * Rational(1, 2 * remaining_multi + remaining_single);
        for (std::size_t s = 0; s < multi.size(); ++s) {
            if (used[s]) continue;
            used[s] = true;
            if (multi[s]) {
                for (bool rev : {false, true}) {
                    path.push_back({static_cast<int>(s), rev});
                    run(remaining_multi - 1, remaining_single, p);
                    path.pop_back();
                }
            } else {
                path.push_back({static_cast<int>(s), false});
                run(remaining_multi, remaining_single - 1, p);
                path.pop_back();
            }
            used[s] = false;
        }
    }
};

}  // namespace

std::vector<DestructionSequence> enumerate_destructions(const RouteDecomposition& decomp) {
    if (decomp.a < 0 || decomp.j < 0) throw DomainError("enumerate_destructions: counts must be non-negative");
    if (decomp.a + decomp.j > kMaxEnumeratedSegments)
        throw CapacityError("enumerate_destructions: a + j = " + std::to_string(decomp.a + decomp.j) + " exceeds " +
                            std::to_string(kMaxEnumeratedSegments));
    Enumerator e;
    if (decomp.segments.empty()) {
        e.multi.assign(static_cast<std::size_t>(decomp.a), true);
        e.multi.resize(static_cast<std::size_t>(decomp.a + decomp.j), false);
    } else {
        for (const auto& seg : decomp.segments) e.multi.push_back(seg.size() >= 2);
        const auto a = std::count(e.multi.begin(), e.multi.end(), true);
        if (a != decomp.a || static_cast<long>(e.multi.size()) - a != decomp.j)
            throw InvariantError("enumerate_destructions: segment sizes disagree with (a, j)");
    }
    e.used.assign(e.multi.size(), false);
    e.run(decomp.a, decomp.j, Rational(1));
    return std::move(e.out);
}

std::vector<DestructionSequence> enumerate_destructions(int a, int j) {
    RouteDecomposition d;
    d.a = a;
    d.j = j;
    return enumerate_destructions(d);
}

bool VerificationReport::counts_agree() const {
    return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.counts_agree(); });
}

bool VerificationReport::mass_is_one() const {
    return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.mass_is_one(); });
}

bool VerificationReport::normalized_is_binomial() const {
    return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.normalized_is_binomial(); });
}

std::vector<const StatementRow*> VerificationReport::discrepancies() const {
    std::vector<const StatementRow*> out;
    for (const auto& r : rows)
        if (!r.uniform_over_orders()) out.push_back(&r);
    return out;
}

std::string to_string(const Rational& q) {
    std::ostringstream s;
    s << boost::multiprecision::numerator(q);
    if (boost::multiprecision::denominator(q) != 1) s << "/" << boost::multiprecision::denominator(q);
    return s.str();
}

std::string VerificationReport::table() const {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%3s %3s %12s %12s %12s %9s %12s %12s  %s\n", "a", "j", "recurrence", "closed",
                  "enumerated", "prob_sum", "min_prob", "max_prob", "1/closed");
    out << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%3d %3d %12s %12s %12s %9s %12s %12s  %s%s\n", r.a, r.j, r.recurrence.str().c_str(),
                      r.closed.str().c_str(), r.enumerated.str().c_str(), to_string(r.prob_sum).c_str(),
                      to_string(r.min_prob).c_str(), to_string(r.max_prob).c_str(),
                      to_string(Rational(1, r.closed)).c_str(), r.uniform_over_orders() ? "" : "  (non-uniform)");
        out << buf;
    }
    return out.str();
}

VerificationReport verify_statements(int a_max, int j_max) {
    if (a_max < 0 || j_max < 0) throw DomainError("verify_statements: ranges must be non-negative");
    if (a_max + j_max > kMaxEnumeratedSegments)
        throw CapacityError("verify_statements: a_max + j_max exceeds " + std::to_string(kMaxEnumeratedSegments));
    VerificationReport report;
    for (int a = 0; a <= a_max; ++a) {
        for (int j = 0; j <= j_max; ++j) {
            StatementRow row;
            row.a = a;
            row.j = j;
            row.recurrence = count_recurrence(a, j);
            row.closed = count_closed(a, j);
            const auto seqs = enumerate_destructions(a, j);
            row.enumerated = seqs.size();
            row.prob_sum = 0;
            row.min_prob = seqs.front().probability;
            row.max_prob = seqs.front().probability;
            for (const auto& s : seqs) {
                row.prob_sum += s.probability;
                row.min_prob = std::min(row.min_prob, s.probability);
                row.max_prob = std::max(row.max_prob, s.probability);
            }
            row.normalized = Rational(row.recurrence, factorial(a) * factorial(j) * (BigInt(1) << a));
            row.binom = binomial(a + j, a);
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

}  // namespace hbg

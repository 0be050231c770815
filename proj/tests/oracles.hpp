#pragma once

// Independent reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "hbg/instances.hpp"

namespace oracle {

inline double dist(const hbg::VrpInstance& in, int a, int b) {
    const auto& p = in.coords[static_cast<std::size_t>(a)];
    const auto& q = in.coords[static_cast<std::size_t>(b)];
    return std::hypot(p.x - q.x, p.y - q.y);
}

inline double path_length(const hbg::VrpInstance& in, const std::vector<int>& nodes) {
    double s = 0.0;
    for (std::size_t i = 1; i < nodes.size(); ++i) s += dist(in, nodes[i - 1], nodes[i]);
    return s;
}

/// Optimal closed tour by enumerating permutations of nodes 1..n-1 (node 0 fixed).
inline double tsp_optimum(const hbg::VrpInstance& in) {
    std::vector<int> perm(static_cast<std::size_t>(in.size() - 1));
    std::iota(perm.begin(), perm.end(), 1);
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = dist(in, 0, perm.front()) + dist(in, perm.back(), 0);
        for (std::size_t i = 1; i < perm.size(); ++i) s += dist(in, perm[i - 1], perm[i]);
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

/// Optimal CVRP cost: every customer order, split optimally into capacity-feasible routes.
inline double cvrp_optimum(const hbg::VrpInstance& in) {
    std::vector<int> perm;
    for (int v = 0; v < in.size(); ++v)
        if (v != in.depot) perm.push_back(v);
    const int cap = *in.capacity;
    double best = std::numeric_limits<double>::infinity();
    do {
        const std::size_t n = perm.size();
        std::vector<double> f(n + 1, std::numeric_limits<double>::infinity());
        f[0] = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int load = 0;
            double inner = 0.0;
            for (std::size_t j = i; j < n; ++j) {
                load += in.demands[static_cast<std::size_t>(perm[j])];
                if (load > cap) break;
                if (j > i) inner += dist(in, perm[j - 1], perm[j]);
                const double route = dist(in, in.depot, perm[i]) + inner + dist(in, perm[j], in.depot);
                f[j + 1] = std::min(f[j + 1], f[i] + route);
            }
        }
        best = std::min(best, f[n]);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

/// Empty string when the node sequence is a feasible complete solution, else the first problem found.
inline std::string feasibility_problem(const hbg::VrpInstance& in, const std::vector<int>& nodes) {
    std::vector<int> seen(static_cast<std::size_t>(in.size()), 0);
    if (in.kind == hbg::ProblemKind::TSP) {
        if (static_cast<int>(nodes.size()) != in.size()) return "tour size";
        for (int v : nodes)
            if (v < 0 || v >= in.size() || seen[static_cast<std::size_t>(v)]++) return "duplicate or bad node";
        return "";
    }
    if (nodes.size() < 2 || nodes.front() != in.depot || nodes.back() != in.depot) return "not depot-bounded";
    int load = 0;
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        const int v = nodes[i];
        if (v < 0 || v >= in.size()) return "bad node";
        if (v == in.depot) {
            if (nodes[i - 1] == in.depot) return "consecutive depot visits";
            load = 0;
            continue;
        }
        if (seen[static_cast<std::size_t>(v)]++) return "customer visited twice";
        load += in.demands[static_cast<std::size_t>(v)];
        if (load > *in.capacity) return "capacity exceeded";
    }
    for (int v = 0; v < in.size(); ++v)
        if (v != in.depot && seen[static_cast<std::size_t>(v)] != 1) return "customer missing";
    return "";
}

struct FdResult {
    double max_rel = 0.0;
    int checked = 0;
};

/// Central differences on the given coordinates of x against `analytic`.
inline FdResult finite_diff(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                            const std::vector<double>& analytic, const std::vector<std::size_t>& coords,
                            double eps = 1e-4) {
    FdResult r;
    for (std::size_t c : coords) {
        const double x0 = x[c];
        x[c] = x0 + eps;
        const double fp = f(x);
        x[c] = x0 - eps;
        const double fm = f(x);
        x[c] = x0;
        const double num = (fp - fm) / (2 * eps);
        const double rel = std::abs(num - analytic[c]) / std::max({std::abs(num), std::abs(analytic[c]), 1e-8});
        r.max_rel = std::max(r.max_rel, rel);
        ++r.checked;
    }
    return r;
}

}  // namespace oracle

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace hbg {

enum class ProblemKind { CVRP, TSP };

std::string to_string(ProblemKind kind);
ProblemKind problem_kind_from_string(std::string_view s);

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

/// Complete Euclidean graph over a depot and customers (CVRP) or cities (TSP).
struct VrpInstance {
    std::string name;
    ProblemKind kind = ProblemKind::CVRP;
    std::vector<Point> coords;
    std::vector<int> demands;     // empty for TSP
    std::optional<int> capacity;  // absent for TSP
    int depot = 0;

    bool operator==(const VrpInstance&) const = default;

    int size() const { return static_cast<int>(coords.size()); }
    bool is_cvrp() const { return kind == ProblemKind::CVRP; }
    int customer_count() const { return is_cvrp() ? size() - 1 : size(); }
    int demand(int node) const { return is_cvrp() ? demands[static_cast<std::size_t>(node)] : 0; }

    /// Throws ConsistencyError when a type invariant is violated.
    void validate() const;
};

/// Euclidean distance between two nodes; throws IndexError on bad indices.
double distance(const VrpInstance& instance, int i, int j);

/// Unchecked variant for inner loops.
inline double distance_unchecked(const VrpInstance& instance, int i, int j);

/// Symmetric Euclidean lookup; keeps a dense matrix only for small instances.
class DistanceOracle {
public:
    static constexpr int kDenseLimit = 2000;

    explicit DistanceOracle(const VrpInstance& instance);

    double operator()(int i, int j) const;
    int size() const { return n_; }

private:
    const VrpInstance* instance_;
    int n_;
    std::vector<double> dense_;
};

VrpInstance generate_cvrp(int n, std::uint64_t seed, int capacity = 50, int demand_lo = 1, int demand_hi = 9);
VrpInstance generate_tsp(int n, std::uint64_t seed);

struct ParseOptions {
    /// Rescale coordinates into the unit square (shared scale on both axes).
    bool normalize = false;
};

VrpInstance parse_tsplib(std::string_view text, const ParseOptions& options = {});
VrpInstance load_tsplib(const std::string& path, const ParseOptions& options = {});

/// Writes the EUC_2D TSPLIB form accepted by parse_tsplib.
std::string to_tsplib(const VrpInstance& instance);

void to_json(nlohmann::json& j, const VrpInstance& instance);
void from_json(const nlohmann::json& j, VrpInstance& instance);

/// Total tour length of a closed node sequence (returns to the first node).
double closed_tour_length(const VrpInstance& instance, const std::vector<int>& nodes);

inline double distance_unchecked(const VrpInstance& instance, int i, int j) {
    const Point& a = instance.coords[static_cast<std::size_t>(i)];
    const Point& b = instance.coords[static_cast<std::size_t>(j)];
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace hbg

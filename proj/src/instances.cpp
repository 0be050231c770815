#include "hbg/instances.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "hbg/errors.hpp"
#include "hbg/rng.hpp"

namespace hbg {

std::string to_string(ProblemKind kind) {
    return kind == ProblemKind::CVRP ? "CVRP" : "TSP";
}

ProblemKind problem_kind_from_string(std::string_view s) {
    if (s == "CVRP" || s == "cvrp") return ProblemKind::CVRP;
    if (s == "TSP" || s == "tsp") return ProblemKind::TSP;
    throw ParameterError("unknown problem kind: " + std::string(s));
}

void VrpInstance::validate() const {
    const int n = size();
    if (kind == ProblemKind::TSP) {
        if (n < 2) throw ConsistencyError("TSP instance needs at least 2 nodes");
        if (!demands.empty() || capacity) throw ConsistencyError("TSP instance carries demands or capacity");
        return;
    }
    if (n < 2) throw ConsistencyError("CVRP instance needs a depot and at least one customer");
    if (!capacity || *capacity <= 0) throw ConsistencyError("CVRP capacity must be a positive integer");
    if (static_cast<int>(demands.size()) != n)
        throw ConsistencyError("demand count " + std::to_string(demands.size()) + " != node count " + std::to_string(n));
    if (depot < 0 || depot >= n) throw ConsistencyError("depot index out of range");
    if (demands[static_cast<std::size_t>(depot)] != 0) throw ConsistencyError("depot demand must be 0");
    for (int i = 0; i < n; ++i) {
        if (i == depot) continue;
        const int d = demands[static_cast<std::size_t>(i)];
        if (d < 1 || d > *capacity)
            throw ConsistencyError("customer " + std::to_string(i) + " demand " + std::to_string(d) +
                                   " outside [1, " + std::to_string(*capacity) + "]");
    }
}

double distance(const VrpInstance& instance, int i, int j) {
    const int n = instance.size();
    if (i < 0 || j < 0 || i >= n || j >= n)
        throw IndexError("distance: node index out of range (" + std::to_string(i) + ", " + std::to_string(j) + ")");
    return distance_unchecked(instance, i, j);
}

DistanceOracle::DistanceOracle(const VrpInstance& instance) : instance_(&instance), n_(instance.size()) {
    if (n_ <= kDenseLimit) {
        dense_.resize(static_cast<std::size_t>(n_) * n_);
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j)
                dense_[static_cast<std::size_t>(i) * n_ + j] = distance_unchecked(instance, i, j);
    }
}

double DistanceOracle::operator()(int i, int j) const {
    if (i < 0 || j < 0 || i >= n_ || j >= n_) throw IndexError("DistanceOracle: node index out of range");
    if (!dense_.empty()) return dense_[static_cast<std::size_t>(i) * n_ + j];
    return distance_unchecked(*instance_, i, j);
}

VrpInstance generate_cvrp(int n, std::uint64_t seed, int capacity, int demand_lo, int demand_hi) {
    if (n < 1) throw ParameterError("generate_cvrp: n must be >= 1");
    if (capacity < 1) throw ParameterError("generate_cvrp: capacity must be positive");
    if (demand_lo < 1 || demand_lo > demand_hi || demand_hi > capacity)
        throw ParameterError("generate_cvrp: need 1 <= demand_lo <= demand_hi <= capacity");

    Rng root(seed);
    Rng coord_rng = root.stream(StreamPurpose::instance, 0);
    Rng demand_rng = root.stream(StreamPurpose::instance, 1);

    VrpInstance inst;
    inst.name = "cvrp" + std::to_string(n) + "_s" + std::to_string(seed);
    inst.kind = ProblemKind::CVRP;
    inst.capacity = capacity;
    inst.depot = 0;
    inst.coords.reserve(static_cast<std::size_t>(n) + 1);
    inst.demands.reserve(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) {
        const double x = coord_rng.uniform();
        const double y = coord_rng.uniform();
        inst.coords.push_back({x, y});
        inst.demands.push_back(i == 0 ? 0 : static_cast<int>(demand_rng.uniform_int(demand_lo, demand_hi)));
    }
    return inst;
}

VrpInstance generate_tsp(int n, std::uint64_t seed) {
    if (n < 2) throw ParameterError("generate_tsp: n must be >= 2");
    Rng rng = Rng(seed).stream(StreamPurpose::instance, 0);
    VrpInstance inst;
    inst.name = "tsp" + std::to_string(n) + "_s" + std::to_string(seed);
    inst.kind = ProblemKind::TSP;
    inst.depot = 0;
    inst.coords.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double x = rng.uniform();
        const double y = rng.uniform();
        inst.coords.push_back({x, y});
    }
    return inst;
}

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

long parse_long(const std::string& s, const std::string& what) {
    long v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ParseError("invalid integer for " + what + ": '" + s + "'");
    return v;
}

enum class Section { none, coords, demands, depot };

}  // namespace

VrpInstance parse_tsplib(std::string_view text, const ParseOptions& options) {
    std::map<std::string, std::string> headers;
    std::vector<std::pair<long, Point>> coord_rows;
    std::vector<std::pair<long, long>> demand_rows;
    std::vector<long> depot_ids;
    bool seen_coords = false, seen_demands = false, seen_depot = false;

    Section section = Section::none;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        std::string line = trim(raw);
        if (line.empty()) continue;
        const std::string key = upper(line);
        if (key == "EOF") break;
        if (key.rfind("NODE_COORD_SECTION", 0) == 0) { section = Section::coords; seen_coords = true; continue; }
        if (key.rfind("DEMAND_SECTION", 0) == 0) { section = Section::demands; seen_demands = true; continue; }
        if (key.rfind("DEPOT_SECTION", 0) == 0) { section = Section::depot; seen_depot = true; continue; }
        if (key.find("_SECTION") != std::string::npos)
            throw UnsupportedFormatError("unsupported TSPLIB section: " + line);

        const auto colon = line.find(':');
        if (colon != std::string::npos && std::isalpha(static_cast<unsigned char>(line[0]))) {
            headers[upper(trim(line.substr(0, colon)))] = trim(line.substr(colon + 1));
            section = Section::none;
            continue;
        }

        std::istringstream fields(line);
        switch (section) {
            case Section::coords: {
                long id;
                double x, y;
                if (!(fields >> id >> x >> y)) throw ParseError("malformed NODE_COORD_SECTION line: " + line);
                coord_rows.push_back({id, {x, y}});
                break;
            }
            case Section::demands: {
                long id, d;
                if (!(fields >> id >> d)) throw ParseError("malformed DEMAND_SECTION line: " + line);
                demand_rows.push_back({id, d});
                break;
            }
            case Section::depot: {
                long id;
                if (!(fields >> id)) throw ParseError("malformed DEPOT_SECTION line: " + line);
                if (id != -1) depot_ids.push_back(id);
                break;
            }
            case Section::none:
                throw ParseError("unexpected line outside any section: " + line);
        }
    }

    auto require = [&](const char* name) -> const std::string& {
        auto it = headers.find(name);
        if (it == headers.end()) throw ParseError(std::string("missing mandatory section: ") + name);
        return it->second;
    };

    VrpInstance inst;
    inst.name = require("NAME");
    const std::string type = upper(require("TYPE"));
    const long dimension = parse_long(require("DIMENSION"), "DIMENSION");
    const std::string ewt = upper(require("EDGE_WEIGHT_TYPE"));
    if (ewt != "EUC_2D") throw UnsupportedFormatError("unsupported EDGE_WEIGHT_TYPE: " + ewt + " (only EUC_2D)");
    if (!seen_coords) throw ParseError("missing mandatory section: NODE_COORD_SECTION");
    if (dimension < 1) throw ParseError("DIMENSION must be positive");

    if (type == "TSP") {
        inst.kind = ProblemKind::TSP;
    } else if (type == "CVRP") {
        inst.kind = ProblemKind::CVRP;
    } else {
        throw UnsupportedFormatError("unsupported TYPE: " + type);
    }

    if (static_cast<long>(coord_rows.size()) != dimension)
        throw ConsistencyError("coordinate count " + std::to_string(coord_rows.size()) + " != DIMENSION " +
                               std::to_string(dimension));
    inst.coords.assign(static_cast<std::size_t>(dimension), Point{});
    std::vector<bool> filled(static_cast<std::size_t>(dimension), false);
    for (const auto& [id, p] : coord_rows) {
        if (id < 1 || id > dimension || filled[static_cast<std::size_t>(id - 1)])
            throw ConsistencyError("bad or duplicate node id in NODE_COORD_SECTION: " + std::to_string(id));
        filled[static_cast<std::size_t>(id - 1)] = true;
        inst.coords[static_cast<std::size_t>(id - 1)] = p;
    }

    if (inst.kind == ProblemKind::CVRP) {
        inst.capacity = static_cast<int>(parse_long(require("CAPACITY"), "CAPACITY"));
        if (!seen_demands) throw ParseError("missing mandatory section: DEMAND_SECTION");
        if (!seen_depot) throw ParseError("missing mandatory section: DEPOT_SECTION");
        if (static_cast<long>(demand_rows.size()) != dimension)
            throw ConsistencyError("demand count " + std::to_string(demand_rows.size()) + " != DIMENSION " +
                                   std::to_string(dimension));
        inst.demands.assign(static_cast<std::size_t>(dimension), 0);
        for (const auto& [id, d] : demand_rows) {
            if (id < 1 || id > dimension) throw ConsistencyError("bad node id in DEMAND_SECTION: " + std::to_string(id));
            inst.demands[static_cast<std::size_t>(id - 1)] = static_cast<int>(d);
        }
        if (depot_ids.empty()) throw ParseError("DEPOT_SECTION lists no depot");
        if (depot_ids.front() < 1 || depot_ids.front() > dimension) throw ConsistencyError("depot id out of range");
        inst.depot = static_cast<int>(depot_ids.front() - 1);
    }

    if (options.normalize) {
        double minx = std::numeric_limits<double>::infinity(), miny = minx;
        double maxx = -minx, maxy = -minx;
        for (const auto& p : inst.coords) {
            minx = std::min(minx, p.x);
            maxx = std::max(maxx, p.x);
            miny = std::min(miny, p.y);
            maxy = std::max(maxy, p.y);
        }
        const double scale = std::max(maxx - minx, maxy - miny);
        if (scale > 0.0) {
            for (auto& p : inst.coords) p = {(p.x - minx) / scale, (p.y - miny) / scale};
        }
    }

    inst.validate();
    return inst;
}

VrpInstance load_tsplib(const std::string& path, const ParseOptions& options) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_tsplib(ss.str(), options);
}

std::string to_tsplib(const VrpInstance& instance) {
    std::ostringstream out;
    char buf[96];
    out << "NAME : " << instance.name << "\n";
    out << "TYPE : " << to_string(instance.kind) << "\n";
    out << "DIMENSION : " << instance.size() << "\n";
    if (instance.is_cvrp()) out << "CAPACITY : " << *instance.capacity << "\n";
    out << "EDGE_WEIGHT_TYPE : EUC_2D\n";
    out << "NODE_COORD_SECTION\n";
    for (int i = 0; i < instance.size(); ++i) {
        const Point& p = instance.coords[static_cast<std::size_t>(i)];
        std::snprintf(buf, sizeof buf, "%d %.17g %.17g\n", i + 1, p.x, p.y);
        out << buf;
    }
    if (instance.is_cvrp()) {
        out << "DEMAND_SECTION\n";
        for (int i = 0; i < instance.size(); ++i) out << i + 1 << " " << instance.demands[static_cast<std::size_t>(i)] << "\n";
        out << "DEPOT_SECTION\n" << instance.depot + 1 << "\n-1\n";
    }
    out << "EOF\n";
    return out.str();
}

void to_json(nlohmann::json& j, const VrpInstance& instance) {
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& p : instance.coords) coords.push_back({p.x, p.y});
    j = nlohmann::json{
        {"name", instance.name},
        {"kind", to_string(instance.kind)},
        {"coords", std::move(coords)},
        {"demands", instance.demands},
        {"capacity", instance.capacity ? nlohmann::json(*instance.capacity) : nlohmann::json(nullptr)},
        {"depot", instance.depot},
    };
}

void from_json(const nlohmann::json& j, VrpInstance& instance) {
    instance.name = j.at("name").get<std::string>();
    instance.kind = problem_kind_from_string(j.at("kind").get<std::string>());
    instance.coords.clear();
    for (const auto& p : j.at("coords")) instance.coords.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    instance.demands = j.at("demands").get<std::vector<int>>();
    if (j.at("capacity").is_null()) {
        instance.capacity.reset();
    } else {
        instance.capacity = j.at("capacity").get<int>();
    }
    instance.depot = j.at("depot").get<int>();
    instance.validate();
}

double closed_tour_length(const VrpInstance& instance, const std::vector<int>& nodes) {
    double total = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        total += distance(instance, nodes[i], nodes[(i + 1) % nodes.size()]);
    return total;
}

}  // namespace hbg

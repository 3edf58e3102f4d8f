#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gridsafe/common.hpp"

namespace gridsafe {

enum class BusType { Slack, PV, PQ };

inline const char* to_string(BusType t) {
    switch (t) {
        case BusType::Slack: return "slack";
        case BusType::PV: return "pv";
        default: return "pq";
    }
}

struct Bus {
    int id = 0;
    BusType bus_type = BusType::PQ;
    double vn_kv = 0.0;
    double min_vm_pu = 0.9;
    double max_vm_pu = 1.1;
    bool in_service = true;

    friend bool operator==(const Bus&, const Bus&) = default;
};

struct Branch {
    int id = 0;
    int from_bus = 0;
    int to_bus = 0;
    double r_pu = 0.0;
    double x_pu = 0.0;
    double b_charging_pu = 0.0;  // total line charging, split half per end
    double tap_ratio = 1.0;      // 1.0 = no transformer
    double shift_rad = 0.0;
    double rate_mva = 0.0;  // 0 = unlimited
    bool in_service = true;

    bool is_transformer() const { return tap_ratio != 1.0 || shift_rad != 0.0; }

    friend bool operator==(const Branch&, const Branch&) = default;
};

struct CostCurve {
    double a = 0.0;  // offset [currency]
    double b = 0.0;  // linear [currency/MW]
    double c = 0.0;  // quadratic [currency/MW^2]

    double eval(double p_mw) const { return c * p_mw * p_mw + b * p_mw + a; }

    friend bool operator==(const CostCurve&, const CostCurve&) = default;
};

struct Generator {
    int id = 0;
    int bus = 0;
    double p_mw = 0.0;    // dispatch setpoint
    double vm_pu = 1.0;   // voltage setpoint
    double min_p_mw = 0.0;
    double max_p_mw = 0.0;
    double min_q_mvar = 0.0;
    double max_q_mvar = 0.0;
    CostCurve cost;
    bool in_service = true;

    friend bool operator==(const Generator&, const Generator&) = default;
};

struct Slack {
    int bus = 0;
    double vm_pu = 1.0;
    double va_rad = 0.0;  // angle reference, fixed at load time
    double min_p_mw = 0.0;
    double max_p_mw = 0.0;
    double min_q_mvar = 0.0;
    double max_q_mvar = 0.0;
    CostCurve cost;

    friend bool operator==(const Slack&, const Slack&) = default;
};

struct Load {
    int id = 0;
    int bus = 0;
    double p_mw = 0.0;   // negative values allowed (net injection)
    double q_mvar = 0.0;
    bool in_service = true;

    friend bool operator==(const Load&, const Load&) = default;
};

struct Shunt {
    int bus = 0;
    double g_pu = 0.0;
    double b_pu = 0.0;

    friend bool operator==(const Shunt&, const Shunt&) = default;
};

/// Complete electrical network description in per-unit on base_mva.
struct Grid {
    std::string name;
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;
    Slack slack;
    std::vector<Load> loads;
    std::vector<Shunt> shunts;

    const Bus* find_bus(int id) const {
        for (const auto& b : buses)
            if (b.id == id) return &b;
        return nullptr;
    }

    friend bool operator==(const Grid&, const Grid&) = default;
};

/// Dense 0-based internal index for external bus ids (iteration order =
/// position in Grid::buses; external ids preserved for reporting).
struct BusIndex {
    std::vector<int> ext_ids;
    std::unordered_map<int, int> to_internal;

    explicit BusIndex(const Grid& grid) {
        ext_ids.reserve(grid.buses.size());
        for (const auto& b : grid.buses) {
            to_internal.emplace(b.id, static_cast<int>(ext_ids.size()));
            ext_ids.push_back(b.id);
        }
    }

    int size() const { return static_cast<int>(ext_ids.size()); }

    int at(int ext_id) const {
        auto it = to_internal.find(ext_id);
        if (it == to_internal.end())
            throw ValidationError("unknown bus id " + std::to_string(ext_id));
        return it->second;
    }
};

namespace detail {

/// Buses reachable from the slack bus over in-service branches between
/// in-service buses.
inline std::vector<bool> reachable_from_slack(const Grid& grid, const BusIndex& index) {
    const int n = index.size();
    std::vector<std::vector<int>> adj(n);
    for (const auto& br : grid.branches) {
        if (!br.in_service) continue;
        auto f = index.to_internal.find(br.from_bus);
        auto t = index.to_internal.find(br.to_bus);
        if (f == index.to_internal.end() || t == index.to_internal.end()) continue;
        if (!grid.buses[f->second].in_service || !grid.buses[t->second].in_service) continue;
        adj[f->second].push_back(t->second);
        adj[t->second].push_back(f->second);
    }
    std::vector<bool> seen(n, false);
    auto it = index.to_internal.find(grid.slack.bus);
    if (it == index.to_internal.end()) return seen;
    std::vector<int> stack{it->second};
    seen[it->second] = true;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int v : adj[u]) {
            if (!seen[v]) {
                seen[v] = true;
                stack.push_back(v);
            }
        }
    }
    return seen;
}

}  // namespace detail

/// Structural invariant checks only (no connectivity); used by deserializers,
/// where islanded-but-well-formed grids must still load.
inline std::vector<std::string> validate_grid_structure(const Grid& grid) {
    std::vector<std::string> out;
    auto add = [&out](std::string msg) { out.push_back(std::move(msg)); };

    if (!(grid.base_mva > 0.0)) add("base_mva must be positive");

    std::unordered_map<int, int> bus_count;
    int slack_typed = 0;
    for (const auto& b : grid.buses) {
        if (++bus_count[b.id] == 2) add("duplicated bus id " + std::to_string(b.id));
        if (b.bus_type == BusType::Slack) ++slack_typed;
        if (!(b.min_vm_pu > 0.0))
            add("bus " + std::to_string(b.id) + ": min_vm_pu must be positive");
        if (b.min_vm_pu > b.max_vm_pu)
            add("bus " + std::to_string(b.id) + ": min_vm_pu > max_vm_pu");
    }
    if (slack_typed == 0) add("no bus marked as slack (Vtheta) type");
    if (slack_typed > 1) add("multiple slack-typed buses (" + std::to_string(slack_typed) + ")");

    auto bus_exists = [&bus_count](int id) { return bus_count.count(id) > 0; };

    if (!bus_exists(grid.slack.bus))
        add("slack references unknown bus " + std::to_string(grid.slack.bus));
    else {
        const Bus* sb = grid.find_bus(grid.slack.bus);
        if (sb->bus_type != BusType::Slack)
            add("slack unit bus " + std::to_string(grid.slack.bus) + " is not marked Vtheta");
        if (!sb->in_service) add("slack bus is out of service");
    }
    for (const auto& b : grid.buses) {
        if (b.bus_type == BusType::Slack && b.id != grid.slack.bus)
            add("bus " + std::to_string(b.id) + " marked Vtheta but is not the slack unit's bus");
    }
    if (grid.slack.min_p_mw > grid.slack.max_p_mw) add("slack: min_p_mw > max_p_mw");
    if (grid.slack.min_q_mvar > grid.slack.max_q_mvar) add("slack: min_q_mvar > max_q_mvar");
    if (grid.slack.cost.c < 0.0) add("slack: quadratic cost coefficient must be >= 0");

    for (const auto& br : grid.branches) {
        std::string tag = "branch " + std::to_string(br.id);
        if (!bus_exists(br.from_bus))
            add(tag + ": unknown from_bus " + std::to_string(br.from_bus));
        if (!bus_exists(br.to_bus)) add(tag + ": unknown to_bus " + std::to_string(br.to_bus));
        if (br.r_pu < 0.0) add(tag + ": negative resistance");
        if (br.in_service && br.x_pu == 0.0 && br.r_pu == 0.0)
            add(tag + ": zero series impedance while in service");
        if (!(br.tap_ratio > 0.0)) add(tag + ": tap_ratio must be positive");
    }
    for (const auto& g : grid.generators) {
        std::string tag = "generator " + std::to_string(g.id);
        if (!bus_exists(g.bus)) add(tag + ": unknown bus " + std::to_string(g.bus));
        if (g.min_p_mw > g.max_p_mw) add(tag + ": min_p_mw > max_p_mw");
        if (g.min_q_mvar > g.max_q_mvar) add(tag + ": min_q_mvar > max_q_mvar");
        if (g.cost.c < 0.0) add(tag + ": quadratic cost coefficient must be >= 0");
    }
    for (const auto& l : grid.loads) {
        if (!bus_exists(l.bus))
            add("load " + std::to_string(l.id) + ": unknown bus " + std::to_string(l.bus));
    }
    for (const auto& s : grid.shunts) {
        if (!bus_exists(s.bus)) add("shunt: unknown bus " + std::to_string(s.bus));
        if (!std::isfinite(s.g_pu) || !std::isfinite(s.b_pu))
            add("shunt at bus " + std::to_string(s.bus) + ": non-finite admittance");
    }
    return out;
}

/// Full invariant check: structure plus connectivity of every in-service
/// load/generator bus to the slack over the in-service subgraph. Violations
/// are data, not failures; an empty list means the grid is valid.
inline std::vector<std::string> validate_grid(const Grid& grid) {
    std::vector<std::string> out = validate_grid_structure(grid);
    if (!out.empty()) return out;  // connectivity is meaningless on broken structure

    BusIndex index(grid);
    std::vector<bool> seen = detail::reachable_from_slack(grid, index);
    auto check_connected = [&](int bus_id, const std::string& what) {
        int i = index.at(bus_id);
        if (grid.buses[i].in_service && !seen[i])
            out.push_back(what + " bus " + std::to_string(bus_id) +
                          " is islanded from the slack");
    };
    for (const auto& l : grid.loads)
        if (l.in_service) check_connected(l.bus, "load");
    for (const auto& g : grid.generators)
        if (g.in_service) check_connected(g.bus, "generator");
    return out;
}

}  // namespace gridsafe

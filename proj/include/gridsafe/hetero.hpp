#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "gridsafe/grid_json.hpp"
#include "gridsafe/powerflow.hpp"

namespace gridsafe {

/// Predictions share the oracle solution's shape: per-bus voltage state plus
/// per-generator and slack powers.
using Prediction = GridSolution;

inline constexpr double kGridFrequencyHz = 50.0;

// Node types of the heterogeneous embedding, in canonical order.
inline const std::array<const char*, 7> kNodeTypes = {
    "bus", "line", "transformer", "generator", "slack", "load", "capacitor"};

// Feature schemas. Line and transformer electrical data are emitted as
// per-km quantities with length_km = 1 (source cases store aggregates).
// The transformer's trailing tap_ratio column is what makes the embedding
// invertible back to an admittance matrix.
namespace hetero_schema {
inline const std::vector<std::string> bus = {"vn_kv", "min_vm_pu", "max_vm_pu", "in_service"};
inline const std::vector<std::string> line = {"length_km",   "r_ohm_per_km", "x_ohm_per_km",
                                              "c_nf_per_km", "g_us_per_km",  "max_i_ka",
                                              "max_loading_percent", "in_service"};
inline const std::vector<std::string> transformer = {
    "sn_mva",      "vn_hv_kv",   "vn_lv_kv",           "vk_percent", "vkr_percent", "pfe_kw",
    "i0_percent",  "shift_degree", "max_loading_percent", "in_service", "tap_ratio"};
inline const std::vector<std::string> generator = {
    "p_mw",       "vm_pu",      "sn_mva",     "min_p_mw", "max_p_mw", "min_q_mvar",
    "max_q_mvar", "in_service", "cp0_eur",    "cp1_eur",  "cp2_eur"};
inline const std::vector<std::string> slack = {
    "va_rad",     "vm_pu",      "min_p_mw", "max_p_mw", "min_q_mvar",
    "max_q_mvar", "in_service", "cp0_eur",  "cp1_eur",  "cp2_eur"};
inline const std::vector<std::string> load = {"p_mw", "const_z_percent", "const_i_percent",
                                              "sn_mva", "in_service"};
inline const std::vector<std::string> capacitor = {"g_pu", "b_pu", "in_service"};

inline const std::vector<std::string>& columns_of(const std::string& type) {
    if (type == "bus") return bus;
    if (type == "line") return line;
    if (type == "transformer") return transformer;
    if (type == "generator") return generator;
    if (type == "slack") return slack;
    if (type == "load") return load;
    if (type == "capacitor") return capacitor;
    throw SchemaError("unknown node type '" + type + "'");
}
}  // namespace hetero_schema

struct NodeTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    int count() const { return static_cast<int>(rows.size()); }

    double at(int row, const std::string& column) const {
        for (std::size_t c = 0; c < columns.size(); ++c)
            if (columns[c] == column) return rows[row][c];
        throw SchemaError("node table has no column '" + column + "'");
    }

    friend bool operator==(const NodeTable&, const NodeTable&) = default;
};

struct HeteroEdge {
    std::string type_a;
    int index_a = 0;
    std::string type_b;
    int index_b = 0;

    friend bool operator==(const HeteroEdge&, const HeteroEdge&) = default;
};

/// Typed-node graph embedding of a grid: one node per component, a single
/// undirected edge type, per-type feature tables and (once attached) label
/// tables for bus, generator and slack nodes.
struct HeteroGraph {
    std::string grid_name;
    double base_mva = 0.0;
    std::vector<int> bus_ids;  // external ids, aligned with the bus table

    std::map<std::string, NodeTable> nodes;
    std::vector<HeteroEdge> edges;

    bool labeled = false;
    NodeTable bus_labels;    // vm_pu, va_rad
    NodeTable gen_labels;    // p_mw, q_mvar
    NodeTable slack_labels;  // p_mw, q_mvar

    int label_count() const {
        if (!labeled) return 0;
        return 2 * (bus_labels.count() + gen_labels.count() + slack_labels.count());
    }

    friend bool operator==(const HeteroGraph&, const HeteroGraph&) = default;
};

inline HeteroGraph embed_grid(const Grid& grid) {
    BusIndex index(grid);
    HeteroGraph h;
    h.grid_name = grid.name;
    h.base_mva = grid.base_mva;
    h.bus_ids = index.ext_ids;
    for (const char* t : kNodeTypes) h.nodes[t].columns = hetero_schema::columns_of(t);

    auto z_base = [&](int internal_bus) {
        const double vn = grid.buses[internal_bus].vn_kv;
        return vn * vn / grid.base_mva;
    };
    auto sv = [](bool b) { return b ? 1.0 : 0.0; };

    for (const auto& b : grid.buses)
        h.nodes["bus"].rows.push_back({b.vn_kv, b.min_vm_pu, b.max_vm_pu, sv(b.in_service)});

    for (const auto& br : grid.branches) {
        const int f = index.at(br.from_bus);
        const int t = index.at(br.to_bus);
        const double zb = z_base(f);
        if (!br.is_transformer()) {
            const double c_nf = br.b_charging_pu / (2.0 * kPi * kGridFrequencyHz * zb) * 1e9;
            const double max_i_ka =
                br.rate_mva > 0.0
                    ? br.rate_mva / (std::sqrt(3.0) * grid.buses[f].vn_kv)
                    : 0.0;
            const int li = h.nodes["line"].count();
            h.nodes["line"].rows.push_back({1.0, br.r_pu * zb, br.x_pu * zb, c_nf, 0.0,
                                            max_i_ka, 100.0, sv(br.in_service)});
            h.edges.push_back({"bus", f, "line", li});
            h.edges.push_back({"bus", t, "line", li});
        } else {
            const int ti = h.nodes["transformer"].count();
            h.nodes["transformer"].rows.push_back(
                {br.rate_mva, grid.buses[f].vn_kv, grid.buses[t].vn_kv,
                 100.0 * std::hypot(br.r_pu, br.x_pu), 100.0 * br.r_pu, 0.0,
                 100.0 * br.b_charging_pu, rad2deg(br.shift_rad), 100.0, sv(br.in_service),
                 br.tap_ratio});
            h.edges.push_back({"bus", f, "transformer", ti});
            h.edges.push_back({"bus", t, "transformer", ti});
        }
    }

    for (const auto& g : grid.generators) {
        const int gi = h.nodes["generator"].count();
        h.nodes["generator"].rows.push_back({g.p_mw, g.vm_pu, g.max_p_mw, g.min_p_mw, g.max_p_mw,
                                             g.min_q_mvar, g.max_q_mvar, sv(g.in_service),
                                             g.cost.a, g.cost.b, g.cost.c});
        h.edges.push_back({"bus", index.at(g.bus), "generator", gi});
    }

    h.nodes["slack"].rows.push_back({grid.slack.va_rad, grid.slack.vm_pu, grid.slack.min_p_mw,
                                     grid.slack.max_p_mw, grid.slack.min_q_mvar,
                                     grid.slack.max_q_mvar, 1.0, grid.slack.cost.a,
                                     grid.slack.cost.b, grid.slack.cost.c});
    h.edges.push_back({"bus", index.at(grid.slack.bus), "slack", 0});

    for (const auto& l : grid.loads) {
        const int li = h.nodes["load"].count();
        h.nodes["load"].rows.push_back(
            {l.p_mw, 0.0, 0.0, std::hypot(l.p_mw, l.q_mvar), sv(l.in_service)});
        h.edges.push_back({"bus", index.at(l.bus), "load", li});
    }

    for (const auto& sh : grid.shunts) {
        const int ci = h.nodes["capacitor"].count();
        h.nodes["capacitor"].rows.push_back({sh.g_pu, sh.b_pu, 1.0});
        h.edges.push_back({"bus", index.at(sh.bus), "capacitor", ci});
    }
    return h;
}

/// Populates the label tables from an oracle solution; features untouched.
inline HeteroGraph attach_labels(HeteroGraph graph, const GridSolution& solution) {
    const auto n_bus = static_cast<int>(graph.bus_ids.size());
    const int n_gen = graph.nodes.at("generator").count();
    if (solution.state.vm.size() != n_bus || solution.gen_p_mw.size() != n_gen)
        throw DimensionError("solution does not match the graph's bus/generator counts");

    graph.bus_labels.columns = {"vm_pu", "va_rad"};
    graph.bus_labels.rows.clear();
    for (int i = 0; i < n_bus; ++i)
        graph.bus_labels.rows.push_back({solution.state.vm[i], solution.state.va[i]});

    graph.gen_labels.columns = {"p_mw", "q_mvar"};
    graph.gen_labels.rows.clear();
    for (int g = 0; g < n_gen; ++g)
        graph.gen_labels.rows.push_back({solution.gen_p_mw[g], solution.gen_q_mvar[g]});

    graph.slack_labels.columns = {"p_mw", "q_mvar"};
    graph.slack_labels.rows = {{solution.slack_p_mw, solution.slack_q_mvar}};

    graph.labeled = true;
    return graph;
}

inline GridSolution solution_from_labels(const HeteroGraph& graph) {
    if (!graph.labeled) throw SchemaError("graph carries no labels");
    GridSolution sol;
    const int n = graph.bus_labels.count();
    sol.state.vm.resize(n);
    sol.state.va.resize(n);
    for (int i = 0; i < n; ++i) {
        sol.state.vm[i] = graph.bus_labels.rows[i][0];
        sol.state.va[i] = graph.bus_labels.rows[i][1];
    }
    const int ng = graph.gen_labels.count();
    sol.gen_p_mw.resize(ng);
    sol.gen_q_mvar.resize(ng);
    for (int g = 0; g < ng; ++g) {
        sol.gen_p_mw[g] = graph.gen_labels.rows[g][0];
        sol.gen_q_mvar[g] = graph.gen_labels.rows[g][1];
    }
    sol.slack_p_mw = graph.slack_labels.rows[0][0];
    sol.slack_q_mvar = graph.slack_labels.rows[0][1];
    return sol;
}

/// Inverts the embedding back to a grid sufficient for admittance assembly
/// (buses, branches, shunts). Device tables are not needed for Y.
inline Grid topology_from_embedding(const HeteroGraph& graph) {
    Grid g;
    g.name = graph.grid_name;
    g.base_mva = graph.base_mva;

    const NodeTable& bus = graph.nodes.at("bus");
    for (int i = 0; i < bus.count(); ++i) {
        Bus b;
        b.id = graph.bus_ids[i];
        b.vn_kv = bus.at(i, "vn_kv");
        b.min_vm_pu = bus.at(i, "min_vm_pu");
        b.max_vm_pu = bus.at(i, "max_vm_pu");
        b.in_service = bus.at(i, "in_service") != 0.0;
        g.buses.push_back(b);
    }
    // endpoint buses of a branch-like node, in edge insertion order (from, to)
    auto endpoints = [&](const std::string& type, int idx) {
        std::pair<int, int> ft{-1, -1};
        for (const auto& e : graph.edges) {
            if (e.type_b != type || e.index_b != idx) continue;
            if (ft.first < 0)
                ft.first = e.index_a;
            else if (ft.second < 0) {
                ft.second = e.index_a;
                break;
            }
        }
        if (ft.first < 0 || ft.second < 0)
            throw SchemaError(type + " node " + std::to_string(idx) +
                              " is not connected to two buses");
        return ft;
    };

    int next_branch = 0;
    const NodeTable& line = graph.nodes.at("line");
    for (int i = 0; i < line.count(); ++i) {
        auto [f, t] = endpoints("line", i);
        const double vn = g.buses[f].vn_kv;
        const double zb = vn * vn / g.base_mva;
        Branch br;
        br.id = ++next_branch;
        br.from_bus = g.buses[f].id;
        br.to_bus = g.buses[t].id;
        const double len = line.at(i, "length_km");
        br.r_pu = line.at(i, "r_ohm_per_km") * len / zb;
        br.x_pu = line.at(i, "x_ohm_per_km") * len / zb;
        br.b_charging_pu =
            line.at(i, "c_nf_per_km") * len * 1e-9 * 2.0 * kPi * kGridFrequencyHz * zb;
        br.rate_mva = line.at(i, "max_i_ka") * std::sqrt(3.0) * vn;
        br.in_service = line.at(i, "in_service") != 0.0;
        g.branches.push_back(br);
    }
    const NodeTable& xfmr = graph.nodes.at("transformer");
    for (int i = 0; i < xfmr.count(); ++i) {
        auto [f, t] = endpoints("transformer", i);
        Branch br;
        br.id = ++next_branch;
        br.from_bus = g.buses[f].id;
        br.to_bus = g.buses[t].id;
        br.r_pu = xfmr.at(i, "vkr_percent") / 100.0;
        const double vk = xfmr.at(i, "vk_percent") / 100.0;
        br.x_pu = std::sqrt(std::max(0.0, vk * vk - br.r_pu * br.r_pu));
        br.b_charging_pu = xfmr.at(i, "i0_percent") / 100.0;
        br.shift_rad = deg2rad(xfmr.at(i, "shift_degree"));
        br.tap_ratio = xfmr.at(i, "tap_ratio");
        br.rate_mva = xfmr.at(i, "sn_mva");
        br.in_service = xfmr.at(i, "in_service") != 0.0;
        g.branches.push_back(br);
    }
    const NodeTable& cap = graph.nodes.at("capacitor");
    for (int i = 0; i < cap.count(); ++i) {
        int bus_idx = -1;
        for (const auto& e : graph.edges)
            if (e.type_b == "capacitor" && e.index_b == i) {
                bus_idx = e.index_a;
                break;
            }
        if (bus_idx < 0) throw SchemaError("capacitor node without a bus");
        g.shunts.push_back({g.buses[bus_idx].id, cap.at(i, "g_pu"), cap.at(i, "b_pu")});
    }
    // dummy slack for structural completeness; Y assembly ignores it
    g.slack.bus = g.buses.empty() ? 0 : g.buses.front().id;
    return g;
}

// --- JSON form (one graph per dataset line) ---

inline Json node_table_to_json(const NodeTable& t) {
    return Json{{"columns", t.columns}, {"data", t.rows}};
}

inline NodeTable node_table_from_json(const Json& j) {
    NodeTable t;
    t.columns = j.at("columns").get<std::vector<std::string>>();
    t.rows = j.at("data").get<std::vector<std::vector<double>>>();
    for (const auto& r : t.rows)
        if (r.size() != t.columns.size())
            throw SchemaError("node table row width does not match its columns");
    return t;
}

inline Json hetero_to_json(const HeteroGraph& h) {
    Json nodes;
    for (const auto& [type, table] : h.nodes) nodes[type] = node_table_to_json(table);
    Json edges = Json::array();
    for (const auto& e : h.edges)
        edges.push_back(Json::array({e.type_a, e.index_a, e.type_b, e.index_b}));
    Json j{{"grid_name", h.grid_name},
           {"base_mva", h.base_mva},
           {"bus_ids", h.bus_ids},
           {"nodes", std::move(nodes)},
           {"edges", std::move(edges)}};
    if (h.labeled) {
        j["labels"] = Json{{"bus", node_table_to_json(h.bus_labels)},
                           {"generator", node_table_to_json(h.gen_labels)},
                           {"slack", node_table_to_json(h.slack_labels)}};
    }
    return j;
}

inline HeteroGraph hetero_from_json(const Json& j) {
    HeteroGraph h;
    try {
        h.grid_name = j.at("grid_name").get<std::string>();
        h.base_mva = j.at("base_mva").get<double>();
        h.bus_ids = j.at("bus_ids").get<std::vector<int>>();
        for (const auto& [type, table] : j.at("nodes").items())
            h.nodes[type] = node_table_from_json(table);
        for (const auto& e : j.at("edges")) {
            h.edges.push_back({e.at(0).get<std::string>(), e.at(1).get<int>(),
                               e.at(2).get<std::string>(), e.at(3).get<int>()});
        }
        if (j.contains("labels")) {
            h.labeled = true;
            h.bus_labels = node_table_from_json(j.at("labels").at("bus"));
            h.gen_labels = node_table_from_json(j.at("labels").at("generator"));
            h.slack_labels = node_table_from_json(j.at("labels").at("slack"));
        }
    } catch (const Json::exception& e) {
        throw SchemaError(std::string("hetero graph document: ") + e.what());
    }
    for (const char* t : kNodeTypes)
        if (h.nodes.find(t) == h.nodes.end())
            throw SchemaError(std::string("hetero graph document: missing node type '") + t +
                              "'");
    return h;
}

}  // namespace gridsafe

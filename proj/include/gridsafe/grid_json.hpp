#pragma once

#include <string>

#include <json.hpp>

#include "gridsafe/grid.hpp"

namespace gridsafe {

using Json = nlohmann::json;

namespace detail {

inline Json cost_to_json(const CostCurve& c) {
    return Json{{"a", c.a}, {"b", c.b}, {"c", c.c}};
}

inline CostCurve cost_from_json(const Json& j) {
    CostCurve c;
    c.a = j.at("a").get<double>();
    c.b = j.at("b").get<double>();
    c.c = j.at("c").get<double>();
    return c;
}

inline BusType bus_type_from_string(const std::string& s) {
    if (s == "slack") return BusType::Slack;
    if (s == "pv") return BusType::PV;
    if (s == "pq") return BusType::PQ;
    throw SchemaError("unknown bus type '" + s + "'");
}

}  // namespace detail

inline Json grid_to_json_object(const Grid& grid) {
    Json j;
    j["name"] = grid.name;
    j["base_mva"] = grid.base_mva;
    j["buses"] = Json::array();
    for (const auto& b : grid.buses) {
        j["buses"].push_back({{"id", b.id},
                              {"type", to_string(b.bus_type)},
                              {"vn_kv", b.vn_kv},
                              {"min_vm_pu", b.min_vm_pu},
                              {"max_vm_pu", b.max_vm_pu},
                              {"in_service", b.in_service}});
    }
    j["branches"] = Json::array();
    for (const auto& br : grid.branches) {
        j["branches"].push_back({{"id", br.id},
                                 {"from_bus", br.from_bus},
                                 {"to_bus", br.to_bus},
                                 {"r_pu", br.r_pu},
                                 {"x_pu", br.x_pu},
                                 {"b_charging_pu", br.b_charging_pu},
                                 {"tap_ratio", br.tap_ratio},
                                 {"shift_rad", br.shift_rad},
                                 {"rate_mva", br.rate_mva},
                                 {"in_service", br.in_service}});
    }
    j["generators"] = Json::array();
    for (const auto& g : grid.generators) {
        j["generators"].push_back({{"id", g.id},
                                   {"bus", g.bus},
                                   {"p_mw", g.p_mw},
                                   {"vm_pu", g.vm_pu},
                                   {"min_p_mw", g.min_p_mw},
                                   {"max_p_mw", g.max_p_mw},
                                   {"min_q_mvar", g.min_q_mvar},
                                   {"max_q_mvar", g.max_q_mvar},
                                   {"cost", detail::cost_to_json(g.cost)},
                                   {"in_service", g.in_service}});
    }
    j["slack"] = {{"bus", grid.slack.bus},
                  {"vm_pu", grid.slack.vm_pu},
                  {"va_rad", grid.slack.va_rad},
                  {"min_p_mw", grid.slack.min_p_mw},
                  {"max_p_mw", grid.slack.max_p_mw},
                  {"min_q_mvar", grid.slack.min_q_mvar},
                  {"max_q_mvar", grid.slack.max_q_mvar},
                  {"cost", detail::cost_to_json(grid.slack.cost)}};
    j["loads"] = Json::array();
    for (const auto& l : grid.loads) {
        j["loads"].push_back({{"id", l.id},
                              {"bus", l.bus},
                              {"p_mw", l.p_mw},
                              {"q_mvar", l.q_mvar},
                              {"in_service", l.in_service}});
    }
    j["shunts"] = Json::array();
    for (const auto& s : grid.shunts) {
        j["shunts"].push_back({{"bus", s.bus}, {"g_pu", s.g_pu}, {"b_pu", s.b_pu}});
    }
    return j;
}

inline std::string grid_to_json(const Grid& grid) { return grid_to_json_object(grid).dump(2); }

/// Deserializes and checks structural invariants. Connectivity is not
/// enforced here so that exported outage mutants round-trip.
inline Grid grid_from_json_object(const Json& j) {
    Grid grid;
    try {
        grid.name = j.value("name", std::string{});
        grid.base_mva = j.at("base_mva").get<double>();
        for (const auto& jb : j.at("buses")) {
            Bus b;
            b.id = jb.at("id").get<int>();
            b.bus_type = detail::bus_type_from_string(jb.at("type").get<std::string>());
            b.vn_kv = jb.at("vn_kv").get<double>();
            b.min_vm_pu = jb.at("min_vm_pu").get<double>();
            b.max_vm_pu = jb.at("max_vm_pu").get<double>();
            b.in_service = jb.at("in_service").get<bool>();
            grid.buses.push_back(b);
        }
        for (const auto& jb : j.at("branches")) {
            Branch br;
            br.id = jb.at("id").get<int>();
            br.from_bus = jb.at("from_bus").get<int>();
            br.to_bus = jb.at("to_bus").get<int>();
            br.r_pu = jb.at("r_pu").get<double>();
            br.x_pu = jb.at("x_pu").get<double>();
            br.b_charging_pu = jb.at("b_charging_pu").get<double>();
            br.tap_ratio = jb.at("tap_ratio").get<double>();
            br.shift_rad = jb.at("shift_rad").get<double>();
            br.rate_mva = jb.at("rate_mva").get<double>();
            br.in_service = jb.at("in_service").get<bool>();
            grid.branches.push_back(br);
        }
        for (const auto& jg : j.at("generators")) {
            Generator g;
            g.id = jg.at("id").get<int>();
            g.bus = jg.at("bus").get<int>();
            g.p_mw = jg.at("p_mw").get<double>();
            g.vm_pu = jg.at("vm_pu").get<double>();
            g.min_p_mw = jg.at("min_p_mw").get<double>();
            g.max_p_mw = jg.at("max_p_mw").get<double>();
            g.min_q_mvar = jg.at("min_q_mvar").get<double>();
            g.max_q_mvar = jg.at("max_q_mvar").get<double>();
            g.cost = detail::cost_from_json(jg.at("cost"));
            g.in_service = jg.at("in_service").get<bool>();
            grid.generators.push_back(g);
        }
        const auto& js = j.at("slack");
        grid.slack.bus = js.at("bus").get<int>();
        grid.slack.vm_pu = js.at("vm_pu").get<double>();
        grid.slack.va_rad = js.at("va_rad").get<double>();
        grid.slack.min_p_mw = js.at("min_p_mw").get<double>();
        grid.slack.max_p_mw = js.at("max_p_mw").get<double>();
        grid.slack.min_q_mvar = js.at("min_q_mvar").get<double>();
        grid.slack.max_q_mvar = js.at("max_q_mvar").get<double>();
        grid.slack.cost = detail::cost_from_json(js.at("cost"));
        for (const auto& jl : j.at("loads")) {
            Load l;
            l.id = jl.at("id").get<int>();
            l.bus = jl.at("bus").get<int>();
            l.p_mw = jl.at("p_mw").get<double>();
            l.q_mvar = jl.at("q_mvar").get<double>();
            l.in_service = jl.at("in_service").get<bool>();
            grid.loads.push_back(l);
        }
        for (const auto& jsh : j.at("shunts")) {
            Shunt s;
            s.bus = jsh.at("bus").get<int>();
            s.g_pu = jsh.at("g_pu").get<double>();
            s.b_pu = jsh.at("b_pu").get<double>();
            grid.shunts.push_back(s);
        }
    } catch (const Json::exception& e) {
        throw SchemaError(std::string("grid document: ") + e.what());
    }

    auto violations = validate_grid_structure(grid);
    if (!violations.empty())
        throw ValidationError("grid document: " + violations.front());
    return grid;
}

inline Grid grid_from_json(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        throw SchemaError(std::string("grid document: ") + e.what());
    }
    return grid_from_json_object(j);
}

}  // namespace gridsafe

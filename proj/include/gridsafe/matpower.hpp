#pragma once

#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gridsafe/grid.hpp"

namespace gridsafe {

namespace detail {

struct MatpowerSection {
    std::vector<std::vector<double>> rows;
    std::vector<int> row_lines;  // 1-based source line of each row
};

inline std::string strip_comment(const std::string& line) {
    auto pos = line.find('%');
    return pos == std::string::npos ? line : line.substr(0, pos);
}

inline bool parse_row(const std::string& text, std::vector<double>& out) {
    out.clear();
    std::string cleaned;
    cleaned.reserve(text.size());
    for (char c : text) cleaned.push_back(c == ';' || c == ',' ? ' ' : c);
    std::istringstream is(cleaned);
    std::string tok;
    while (is >> tok) {
        try {
            std::size_t used = 0;
            double v = std::stod(tok, &used);
            if (used != tok.size()) return false;
            out.push_back(v);
        } catch (const std::exception&) {
            return false;
        }
    }
    return true;
}

}  // namespace detail

/// Parses the MATPOWER case subset: mpc.baseMVA, mpc.bus (cols 1-13),
/// mpc.gen (cols 1-10), mpc.branch (cols 1-13) and mpc.gencost (polynomial
/// model 2, up to 3 coefficients). Extra trailing columns are ignored.
/// The generator at the type-3 bus becomes the slack unit; bus-table demand
/// becomes Load records and bus-table Gs/Bs become Shunt records.
inline Grid parse_matpower_case(const std::string& text) {
    using detail::MatpowerSection;

    std::map<std::string, MatpowerSection> sections;
    std::string case_name;
    double base_mva = 0.0;
    bool have_base = false;

    std::istringstream stream(text);
    std::string raw;
    int line_no = 0;
    std::string open_section;

    auto fail = [](int line, const std::string& msg) -> void {
        throw ParseError("line " + std::to_string(line) + ": " + msg);
    };

    while (std::getline(stream, raw)) {
        ++line_no;
        std::string line = detail::strip_comment(raw);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);

        if (open_section.empty()) {
            if (line.rfind("function", 0) == 0) {
                auto eq = line.find('=');
                if (eq != std::string::npos) {
                    case_name = line.substr(eq + 1);
                    auto f = case_name.find_first_not_of(" \t");
                    auto l = case_name.find_last_not_of(" \t;");
                    case_name = (f == std::string::npos) ? "" : case_name.substr(f, l - f + 1);
                }
                continue;
            }
            if (line.rfind("mpc.", 0) != 0) continue;  // tolerate unrelated statements
            auto eq = line.find('=');
            if (eq == std::string::npos) fail(line_no, "expected '=' after mpc.* field");
            std::string key = line.substr(4, eq - 4);
            auto kend = key.find_last_not_of(" \t");
            key = key.substr(0, kend + 1);
            std::string rhs = line.substr(eq + 1);

            if (key == "baseMVA") {
                std::vector<double> vals;
                if (!detail::parse_row(rhs, vals) || vals.size() != 1)
                    fail(line_no, "malformed baseMVA value");
                base_mva = vals[0];
                have_base = true;
                continue;
            }
            if (key == "version") continue;
            auto bracket = rhs.find('[');
            if (bracket == std::string::npos) continue;  // scalar field outside the subset
            open_section = key;
            sections[key];  // create
            rhs = rhs.substr(bracket + 1);
            // fall through to row handling for same-line content
            line = rhs;
            if (line.find_first_not_of(" \t\r;") == std::string::npos) continue;
        }

        // inside a section
        bool closes = false;
        auto close_pos = line.find(']');
        if (close_pos != std::string::npos) {
            closes = true;
            line = line.substr(0, close_pos);
        }
        if (line.find_first_not_of(" \t\r;") != std::string::npos) {
            std::vector<double> row;
            if (!detail::parse_row(line, row))
                fail(line_no, "malformed " + open_section + " row: '" + line + "'");
            sections[open_section].rows.push_back(std::move(row));
            sections[open_section].row_lines.push_back(line_no);
        }
        if (closes) open_section.clear();
    }

    if (!open_section.empty())
        throw ParseError("section '" + open_section + "' not terminated with '];'");
    if (!have_base) throw ParseError("missing required section 'baseMVA'");
    for (const char* req : {"bus", "gen", "branch", "gencost"}) {
        if (sections.find(req) == sections.end())
            throw ParseError("missing required section '" + std::string(req) + "'");
    }

    const auto& bus_sec = sections["bus"];
    const auto& gen_sec = sections["gen"];
    const auto& branch_sec = sections["branch"];
    const auto& cost_sec = sections["gencost"];

    Grid grid;
    grid.name = case_name;
    grid.base_mva = base_mva;
    if (!(base_mva > 0.0)) throw ParseError("baseMVA must be positive");

    // --- buses, loads, shunts ---
    int slack_bus = -1;
    double slack_va_deg = 0.0;
    int load_id = 0;
    for (std::size_t r = 0; r < bus_sec.rows.size(); ++r) {
        const auto& row = bus_sec.rows[r];
        int ln = bus_sec.row_lines[r];
        if (row.size() < 13) fail(ln, "bus row needs 13 columns, got " + std::to_string(row.size()));
        Bus bus;
        bus.id = static_cast<int>(row[0]);
        int type = static_cast<int>(row[1]);
        switch (type) {
            case 1: bus.bus_type = BusType::PQ; break;
            case 2: bus.bus_type = BusType::PV; break;
            case 3:
                bus.bus_type = BusType::Slack;
                if (slack_bus >= 0) fail(ln, "more than one type-3 (slack) bus");
                slack_bus = bus.id;
                slack_va_deg = row[8];
                break;
            default: fail(ln, "unsupported bus type " + std::to_string(type));
        }
        bus.vn_kv = row[9];
        bus.max_vm_pu = row[11];
        bus.min_vm_pu = row[12];
        grid.buses.push_back(bus);

        if (row[2] != 0.0 || row[3] != 0.0) {
            Load load;
            load.id = ++load_id;
            load.bus = bus.id;
            load.p_mw = row[2];
            load.q_mvar = row[3];
            grid.loads.push_back(load);
        }
        if (row[4] != 0.0 || row[5] != 0.0) {
            Shunt sh;
            sh.bus = bus.id;
            sh.g_pu = row[4] / base_mva;  // Gs is MW consumed at V = 1 pu
            sh.b_pu = row[5] / base_mva;  // Bs is MVAr injected at V = 1 pu
            grid.shunts.push_back(sh);
        }
    }
    if (slack_bus < 0) throw ParseError("no type-3 (slack) bus in the bus section");

    // --- gencost rows, one per gen row ---
    if (cost_sec.rows.size() != gen_sec.rows.size())
        fail(cost_sec.row_lines.empty() ? 0 : cost_sec.row_lines.front(),
             "gencost must have one row per gen row");
    std::vector<CostCurve> costs;
    for (std::size_t r = 0; r < cost_sec.rows.size(); ++r) {
        const auto& row = cost_sec.rows[r];
        int ln = cost_sec.row_lines[r];
        if (row.size() < 4) fail(ln, "gencost row needs at least 4 columns");
        if (static_cast<int>(row[0]) != 2) fail(ln, "only polynomial cost model 2 is supported");
        int ncost = static_cast<int>(row[3]);
        if (ncost < 1 || ncost > 3) fail(ln, "gencost supports 1 to 3 coefficients");
        if (static_cast<int>(row.size()) < 4 + ncost) fail(ln, "gencost row truncated");
        CostCurve cc;  // coefficients listed highest order first
        if (ncost == 3) {
            cc.c = row[4];
            cc.b = row[5];
            cc.a = row[6];
        } else if (ncost == 2) {
            cc.b = row[4];
            cc.a = row[5];
        } else {
            cc.a = row[4];
        }
        costs.push_back(cc);
    }

    // --- generators; the first in-service unit at the slack bus becomes Slack ---
    bool have_slack_unit = false;
    int gen_id = 0;
    for (std::size_t r = 0; r < gen_sec.rows.size(); ++r) {
        const auto& row = gen_sec.rows[r];
        int ln = gen_sec.row_lines[r];
        if (row.size() < 10) fail(ln, "gen row needs 10 columns, got " + std::to_string(row.size()));
        int bus_id = static_cast<int>(row[0]);
        if (!grid.find_bus(bus_id)) fail(ln, "gen references unknown bus " + std::to_string(bus_id));
        bool status = row[7] != 0.0;
        if (bus_id == slack_bus && status && !have_slack_unit) {
            grid.slack.bus = bus_id;
            grid.slack.vm_pu = row[5];
            grid.slack.va_rad = deg2rad(slack_va_deg);
            grid.slack.max_q_mvar = row[3];
            grid.slack.min_q_mvar = row[4];
            grid.slack.max_p_mw = row[8];
            grid.slack.min_p_mw = row[9];
            grid.slack.cost = costs[r];
            have_slack_unit = true;
            continue;
        }
        Generator gen;
        gen.id = ++gen_id;
        gen.bus = bus_id;
        gen.p_mw = row[1];
        gen.max_q_mvar = row[3];
        gen.min_q_mvar = row[4];
        gen.vm_pu = row[5];
        gen.in_service = status;
        gen.max_p_mw = row[8];
        gen.min_p_mw = row[9];
        gen.cost = costs[r];
        grid.generators.push_back(gen);
    }
    if (!have_slack_unit)
        throw ParseError("no in-service generator at the slack bus " + std::to_string(slack_bus));

    // --- branches ---
    int branch_id = 0;
    for (std::size_t r = 0; r < branch_sec.rows.size(); ++r) {
        const auto& row = branch_sec.rows[r];
        int ln = branch_sec.row_lines[r];
        if (row.size() < 13)
            fail(ln, "branch row needs 13 columns, got " + std::to_string(row.size()));
        Branch br;
        br.id = ++branch_id;
        br.from_bus = static_cast<int>(row[0]);
        br.to_bus = static_cast<int>(row[1]);
        if (!grid.find_bus(br.from_bus))
            fail(ln, "branch references unknown bus " + std::to_string(br.from_bus));
        if (!grid.find_bus(br.to_bus))
            fail(ln, "branch references unknown bus " + std::to_string(br.to_bus));
        br.r_pu = row[2];
        br.x_pu = row[3];
        br.b_charging_pu = row[4];
        br.rate_mva = row[5];
        br.tap_ratio = row[8] == 0.0 ? 1.0 : row[8];  // 0 means nominal in MATPOWER
        br.shift_rad = deg2rad(row[9]);
        br.in_service = row[10] != 0.0;
        grid.branches.push_back(br);
    }

    auto structural = validate_grid_structure(grid);
    if (!structural.empty()) throw ParseError("invalid case data: " + structural.front());
    return grid;
}

}  // namespace gridsafe

#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "gridsafe/cases_data.hpp"
#include "gridsafe/matpower.hpp"

namespace gridsafe {

inline bool is_bundled_case(const std::string& name) {
    return name == "case9" || name == "case30" || name == "case118";
}

inline const char* bundled_case_text(const std::string& name) {
    if (name == "case9") return cases_data::case9;
    if (name == "case30") return cases_data::case30;
    if (name == "case118") return cases_data::case118;
    throw IoError("unknown bundled case '" + name + "'");
}

/// Resolves a bundled case name (case9, case30, case118) or a path to a
/// MATPOWER case file.
inline Grid load_case(const std::string& name_or_path) {
    if (is_bundled_case(name_or_path)) {
        Grid g = parse_matpower_case(bundled_case_text(name_or_path));
        g.name = name_or_path;
        return g;
    }
    return parse_matpower_case(read_file(name_or_path));
}

}  // namespace gridsafe

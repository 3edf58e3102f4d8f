#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gridsafe/grid_json.hpp"
#include "gridsafe/opf.hpp"
#include "gridsafe/parallel.hpp"
#include "gridsafe/powerflow.hpp"
#include "gridsafe/rng.hpp"

namespace gridsafe {

enum class Scenario { InDistributionLoad, LoadVariation, PriceVariation, LineOutage };
enum class Task { PF, OPF };

inline const char* to_string(Scenario s) {
    switch (s) {
        case Scenario::InDistributionLoad: return "id";
        case Scenario::LoadVariation: return "load";
        case Scenario::PriceVariation: return "price";
        default: return "line-outage";
    }
}

inline Scenario scenario_from_string(const std::string& s) {
    if (s == "id") return Scenario::InDistributionLoad;
    if (s == "load") return Scenario::LoadVariation;
    if (s == "price") return Scenario::PriceVariation;
    if (s == "line-outage") return Scenario::LineOutage;
    throw SchemaError("unknown scenario '" + s + "'");
}

inline const char* to_string(Task t) { return t == Task::PF ? "pf" : "opf"; }

inline Task task_from_string(const std::string& s) {
    if (s == "pf") return Task::PF;
    if (s == "opf") return Task::OPF;
    throw SchemaError("unknown task '" + s + "'");
}

struct MutationSpec {
    Scenario scenario = Scenario::LoadVariation;
    double load_mult_min = 0.9;
    double load_mult_max = 1.1;
    double load_fraction = 1.0;  // fraction of loads affected, (0, 1]
    std::uint64_t seed = 0;
};

inline Json mutation_spec_to_json(const MutationSpec& s) {
    return Json{{"scenario", to_string(s.scenario)},
                {"load_mult_min", s.load_mult_min},
                {"load_mult_max", s.load_mult_max},
                {"load_fraction", s.load_fraction},
                {"seed", s.seed}};
}

inline MutationSpec mutation_spec_from_json(const Json& j) {
    MutationSpec s;
    s.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    s.load_mult_min = j.at("load_mult_min").get<double>();
    s.load_mult_max = j.at("load_mult_max").get<double>();
    s.load_fraction = j.at("load_fraction").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

inline void validate_spec(const MutationSpec& s) {
    if (!(s.load_mult_min > 0.0) || s.load_mult_min > s.load_mult_max)
        throw ValidationError("load multiplier bounds must satisfy 0 < min <= max");
    if (!(s.load_fraction > 0.0) || s.load_fraction > 1.0)
        throw ValidationError("load_fraction must be in (0, 1]");
}

/// A mutated grid plus the metadata needed to replay it exactly.
struct Mutation {
    Grid grid;
    Scenario scenario;
    Json metadata;            // the drawn values, keyed by record id
    bool degenerate = false;  // price range collapsed; grid returned unchanged
};

/// Multiplies p and q of a seeded-uniform subset of loads by per-load draws
/// in [load_mult_min, load_mult_max].
inline Mutation mutate_loads(const Grid& grid, const MutationSpec& spec,
                             std::uint64_t draw_index) {
    validate_spec(spec);
    if (grid.loads.empty()) throw ValidationError("grid has no loads to mutate");
    SeededStream subset_rng(spec.seed, draw_index, rng_tag::load_subset);
    SeededStream mult_rng(spec.seed, draw_index, rng_tag::load_multiplier);

    const std::size_t n = grid.loads.size();
    const auto k = static_cast<std::size_t>(std::llround(spec.load_fraction * n));
    auto picks = subset_rng.sample_without_replacement(n, std::max<std::size_t>(k, 0));

    Mutation mut;
    mut.grid = grid;
    mut.scenario = spec.scenario;
    Json draws = Json::array();
    for (std::size_t pos : picks) {
        const double m = mult_rng.uniform(spec.load_mult_min, spec.load_mult_max);
        auto& load = mut.grid.loads[pos];
        load.p_mw *= m;
        load.q_mvar *= m;
        draws.push_back(Json{{"load", load.id}, {"mult", m}});
    }
    mut.metadata = Json{{"loads", std::move(draws)}};
    return mut;
}

/// Redraws every unit's linear cost coefficient uniformly within the range
/// spanned by the grid's original linear coefficients. A collapsed range
/// (all equal) returns the grid unchanged with the degenerate flag set.
inline Mutation mutate_prices(const Grid& grid, const MutationSpec& spec,
                              std::uint64_t draw_index) {
    double lo = grid.slack.cost.b, hi = grid.slack.cost.b;
    for (const auto& g : grid.generators) {
        lo = std::min(lo, g.cost.b);
        hi = std::max(hi, g.cost.b);
    }
    Mutation mut;
    mut.grid = grid;
    mut.scenario = spec.scenario;
    if (lo == hi) {
        mut.degenerate = true;
        mut.metadata = Json{{"degenerate", true}};
        return mut;
    }
    SeededStream rng(spec.seed, draw_index, rng_tag::price);
    Json gens = Json::array();
    for (auto& g : mut.grid.generators) {
        g.cost.b = rng.uniform(lo, hi);
        gens.push_back(Json{{"gen", g.id}, {"b", g.cost.b}});
    }
    mut.grid.slack.cost.b = rng.uniform(lo, hi);
    mut.metadata = Json{{"gens", std::move(gens)}, {"slack_b", mut.grid.slack.cost.b}};
    return mut;
}

/// Takes exactly one in-service branch, chosen uniformly, out of service.
inline Mutation line_outage(const Grid& grid, const MutationSpec& spec,
                            std::uint64_t draw_index) {
    std::vector<std::size_t> in_service;
    for (std::size_t i = 0; i < grid.branches.size(); ++i)
        if (grid.branches[i].in_service) in_service.push_back(i);
    if (in_service.size() < 2)
        throw ValidationError("line outage needs at least two in-service branches");
    SeededStream rng(spec.seed, draw_index, rng_tag::outage);
    const std::size_t pick = in_service[rng.uniform_index(in_service.size())];
    Mutation mut;
    mut.grid = grid;
    mut.scenario = spec.scenario;
    mut.grid.branches[pick].in_service = false;
    mut.metadata = Json{{"branch", grid.branches[pick].id}};
    return mut;
}

inline Mutation apply_mutation(const Grid& grid, const MutationSpec& spec,
                               std::uint64_t draw_index) {
    switch (spec.scenario) {
        case Scenario::InDistributionLoad:
        case Scenario::LoadVariation: return mutate_loads(grid, spec, draw_index);
        case Scenario::PriceVariation: return mutate_prices(grid, spec, draw_index);
        default: return line_outage(grid, spec, draw_index);
    }
}

/// Rebuilds a mutant from its stored metadata; bitwise-identical to the
/// original mutation because the drawn doubles are stored exactly.
inline Grid replay_mutation(const Grid& base, Scenario scenario, const Json& metadata) {
    Grid g = base;
    switch (scenario) {
        case Scenario::InDistributionLoad:
        case Scenario::LoadVariation: {
            for (const auto& d : metadata.at("loads")) {
                const int id = d.at("load").get<int>();
                const double m = d.at("mult").get<double>();
                bool found = false;
                for (auto& load : g.loads) {
                    if (load.id == id) {
                        load.p_mw *= m;
                        load.q_mvar *= m;
                        found = true;
                        break;
                    }
                }
                if (!found) throw SchemaError("metadata references unknown load " +
                                              std::to_string(id));
            }
            break;
        }
        case Scenario::PriceVariation: {
            if (metadata.value("degenerate", false)) break;
            for (const auto& d : metadata.at("gens")) {
                const int id = d.at("gen").get<int>();
                bool found = false;
                for (auto& gen : g.generators) {
                    if (gen.id == id) {
                        gen.cost.b = d.at("b").get<double>();
                        found = true;
                        break;
                    }
                }
                if (!found)
                    throw SchemaError("metadata references unknown generator " +
                                      std::to_string(id));
            }
            g.slack.cost.b = metadata.at("slack_b").get<double>();
            break;
        }
        default: {
            const int id = metadata.at("branch").get<int>();
            bool found = false;
            for (auto& br : g.branches) {
                if (br.id == id) {
                    br.in_service = false;
                    found = true;
                    break;
                }
            }
            if (!found)
                throw SchemaError("metadata references unknown branch " + std::to_string(id));
            break;
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Convergence-filtered dataset generation
// ---------------------------------------------------------------------------

struct DatasetEntry {
    std::uint64_t draw_index = 0;
    Scenario scenario = Scenario::LoadVariation;
    Json metadata;
    Grid grid;
    GridSolution solution;
};

struct Dataset {
    Task task = Task::PF;
    std::string case_name;
    Grid base_grid;
    MutationSpec train_spec;
    MutationSpec test_spec;
    std::size_t n_train_requested = 0;
    std::size_t n_test_requested = 0;
    std::vector<DatasetEntry> train;
    std::vector<DatasetEntry> test;
    std::uint64_t train_rejections = 0;
    std::uint64_t test_rejections = 0;
};

struct GenerateOptions {
    int workers = 1;
    PFOptions pf;
    OPFOptions opf;
    // validity filter: oracle converged, PF residual within pf_tol and every
    // box within boundary_tol (the evaluation-side tolerances)
    double filter_pf_tol = 1e-2;
    double filter_boundary_tol = 1e-4;
};

/// Test draws start at 2^32 so train and test index ranges never overlap.
inline constexpr std::uint64_t kTestDrawOffset = std::uint64_t{1} << 32;

namespace detail {

struct OracleAttempt {
    bool ok = false;
    Mutation mutation;
    GridSolution solution;
};

inline OracleAttempt run_oracle(const Grid& base, const MutationSpec& spec,
                                std::uint64_t draw_index, Task task,
                                const GenerateOptions& opt) {
    OracleAttempt out;
    out.mutation = apply_mutation(base, spec, draw_index);
    try {
        if (task == Task::PF) {
            PFResult pf = solve_powerflow(out.mutation.grid, opt.pf);
            out.solution = pf.solution;
        } else {
            OPFSolution opf = solve_opf(out.mutation.grid, opt.opf);
            if (!opf.feasible) return out;
            out.solution = opf.solution;
        }
    } catch (const Error&) {
        return out;  // divergence, islanding, infeasibility: rejected draw
    }
    out.ok = feasibility_check(out.mutation.grid, out.solution, opt.filter_pf_tol,
                               opt.filter_boundary_tol)
                 .empty();
    return out;
}

inline void fill_split(const Grid& base, const MutationSpec& spec, Task task, std::size_t want,
                       std::uint64_t first_draw, const GenerateOptions& opt,
                       std::vector<DatasetEntry>& out, std::uint64_t& rejections,
                       const std::string& split_name) {
    out.clear();
    rejections = 0;
    if (want == 0) return;
    const std::uint64_t budget = 10 * static_cast<std::uint64_t>(want);
    std::uint64_t used = 0;
    const std::size_t chunk = std::max<std::size_t>(1, static_cast<std::size_t>(opt.workers) * 4);
    while (out.size() < want && used < budget) {
        const auto batch =
            static_cast<std::size_t>(std::min<std::uint64_t>(chunk, budget - used));
        auto attempts = parallel_map(batch, opt.workers, [&](std::size_t i) {
            return run_oracle(base, spec, first_draw + used + i, task, opt);
        });
        for (std::size_t i = 0; i < attempts.size() && out.size() < want; ++i) {
            auto& a = attempts[i];
            if (!a.ok) {
                ++rejections;
                continue;
            }
            DatasetEntry entry;
            entry.draw_index = first_draw + used + i;
            entry.scenario = a.mutation.scenario;
            entry.metadata = std::move(a.mutation.metadata);
            entry.grid = std::move(a.mutation.grid);
            entry.solution = std::move(a.solution);
            out.push_back(std::move(entry));
        }
        used += batch;
    }
    if (out.size() < want) {
        const double rate = 100.0 * static_cast<double>(rejections) / static_cast<double>(used);
        throw GenerationError(split_name + " generation failed: " + std::to_string(out.size()) +
                              "/" + std::to_string(want) + " valid mutants after " +
                              std::to_string(used) + " draws (" + std::to_string(rate) +
                              "% rejected)");
    }
}

}  // namespace detail

/// Draws mutants sequentially by draw index, solves the task oracle on each
/// and keeps converged, boundary-clean entries until the requested counts are
/// met. Deterministic for fixed (case, task, specs, counts) regardless of
/// worker count; a split gets a 10x oversampling budget before giving up.
inline Dataset generate_dataset(const Grid& base, Task task, const MutationSpec& train_spec,
                                const MutationSpec& test_spec, std::size_t n_train,
                                std::size_t n_test, const GenerateOptions& opt = {}) {
    auto violations = validate_grid(base);
    if (!violations.empty()) throw ValidationError(violations.front());
    Dataset ds;
    ds.task = task;
    ds.case_name = base.name;
    ds.base_grid = base;
    ds.train_spec = train_spec;
    ds.test_spec = test_spec;
    ds.n_train_requested = n_train;
    ds.n_test_requested = n_test;
    detail::fill_split(base, train_spec, task, n_train, 0, opt, ds.train, ds.train_rejections,
                       "train");
    detail::fill_split(base, test_spec, task, n_test, kTestDrawOffset, opt, ds.test,
                       ds.test_rejections, "test");
    return ds;
}

}  // namespace gridsafe

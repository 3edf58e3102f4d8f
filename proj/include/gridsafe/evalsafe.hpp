#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "gridsafe/dataset_io.hpp"
#include "gridsafe/hetero.hpp"
#include "gridsafe/opf.hpp"
#include "gridsafe/perturb.hpp"

namespace gridsafe {

struct EvalConfig {
    double boundary_tol = 1e-4;  // dimensionless, on per-unit quantities
    double pf_tol = 1e-2;        // [p.u.] per-bus power flow residual
    double mu = 0.1;             // acceptable prediction-vs-oracle distance
    double norm_order = 2.0;     // p of the distance norm
};

/// Per-variable normalization constants for the supervised metrics.
struct Norms {
    double p_gen = 1.0;
    double q_gen = 1.0;
    double p_slack = 1.0;
    double q_slack = 1.0;
    double v = 1.0;
    double theta = 1.0;
};

inline constexpr double kNormFloor = 1e-3;

/// max(|truth|) per output group across a dataset, floored at 1e-3.
inline Norms compute_norms(const std::vector<const GridSolution*>& truths) {
    Norms n;
    n.p_gen = n.q_gen = n.p_slack = n.q_slack = n.v = n.theta = kNormFloor;
    for (const GridSolution* t : truths) {
        for (int g = 0; g < t->gen_p_mw.size(); ++g) {
            n.p_gen = std::max(n.p_gen, std::abs(t->gen_p_mw[g]));
            n.q_gen = std::max(n.q_gen, std::abs(t->gen_q_mvar[g]));
        }
        n.p_slack = std::max(n.p_slack, std::abs(t->slack_p_mw));
        n.q_slack = std::max(n.q_slack, std::abs(t->slack_q_mvar));
        for (int i = 0; i < t->state.vm.size(); ++i) {
            n.v = std::max(n.v, std::abs(t->state.vm[i]));
            n.theta = std::max(n.theta, std::abs(t->state.va[i]));
        }
    }
    return n;
}

/// The six supervised metrics: normalized squared error per output group,
/// averaged across the nodes of that group.
struct SupervisedSE {
    double p_gen = 0.0;
    double q_gen = 0.0;
    double p_slack = 0.0;
    double q_slack = 0.0;
    double v = 0.0;
    double theta = 0.0;
};

inline SupervisedSE supervised_error(const Prediction& pred, const GridSolution& truth,
                                     const Norms& norms) {
    if (pred.state.vm.size() != truth.state.vm.size() ||
        pred.gen_p_mw.size() != truth.gen_p_mw.size())
        throw DimensionError("prediction and truth have different shapes");
    for (double nz : {norms.p_gen, norms.q_gen, norms.p_slack, norms.q_slack, norms.v,
                      norms.theta})
        if (nz == 0.0) throw ValidationError("normalization constant is zero");

    SupervisedSE se;
    const auto ng = static_cast<int>(truth.gen_p_mw.size());
    for (int g = 0; g < ng; ++g) {
        const double dp = (pred.gen_p_mw[g] - truth.gen_p_mw[g]) / norms.p_gen;
        const double dq = (pred.gen_q_mvar[g] - truth.gen_q_mvar[g]) / norms.q_gen;
        se.p_gen += dp * dp;
        se.q_gen += dq * dq;
    }
    if (ng > 0) {
        se.p_gen /= ng;
        se.q_gen /= ng;
    }
    {
        const double dp = (pred.slack_p_mw - truth.slack_p_mw) / norms.p_slack;
        const double dq = (pred.slack_q_mvar - truth.slack_q_mvar) / norms.q_slack;
        se.p_slack = dp * dp;
        se.q_slack = dq * dq;
    }
    const auto nb = static_cast<int>(truth.state.vm.size());
    for (int i = 0; i < nb; ++i) {
        const double dv = (pred.state.vm[i] - truth.state.vm[i]) / norms.v;
        const double dt = wrap_angle(pred.state.va[i] - truth.state.va[i]) / norms.theta;
        se.v += dv * dv;
        se.theta += dt * dt;
    }
    if (nb > 0) {
        se.v /= nb;
        se.theta /= nb;
    }
    return se;
}

/// Physics (self-supervised) error: both injection-equation residuals
/// evaluated at the prediction, mean of squares over all buses.
inline double ssl_error(const Grid& grid, const Prediction& pred) {
    AdmittanceMatrix adm = build_admittance(grid);
    FullResiduals res = full_residuals(grid, adm, pred);
    const auto n = static_cast<double>(grid.buses.size());
    return (res.p.squaredNorm() + res.q.squaredNorm()) / (2.0 * n);
}

/// Binary per-constraint flags: busX_pf (residual beyond pf_tol), busX_bd
/// (voltage box), genX_bd / slack_bd (unit P or Q box), tolerances applied in
/// per-unit space. A graph is valid iff nothing is flagged.
struct BoundaryFlags {
    std::vector<std::pair<std::string, bool>> flags;
    bool valid = true;

    bool flagged(const std::string& name) const {
        for (const auto& [k, v] : flags)
            if (k == name) return v;
        throw SchemaError("unknown constraint '" + name + "'");
    }
};

inline BoundaryFlags boundary_violations(const Grid& grid, const Prediction& pred,
                                         const EvalConfig& config) {
    BoundaryFlags out;
    AdmittanceMatrix adm = build_admittance(grid);
    FullResiduals res = full_residuals(grid, adm, pred);
    BusIndex index(grid);
    const double base = grid.base_mva;

    auto push = [&out](const std::string& name, bool flag) {
        out.flags.emplace_back(name, flag);
        if (flag) out.valid = false;
    };
    auto outside = [&config](double v, double lo, double hi) {
        return v > hi + config.boundary_tol || v < lo - config.boundary_tol;
    };

    for (int i = 0; i < index.size(); ++i) {
        const std::string bus = "bus" + std::to_string(index.ext_ids[i]);
        push(bus + "_pf", std::max(std::abs(res.p[i]), std::abs(res.q[i])) > config.pf_tol);
        push(bus + "_bd",
             outside(pred.state.vm[i], grid.buses[i].min_vm_pu, grid.buses[i].max_vm_pu));
    }
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        const auto& gen = grid.generators[g];
        if (!gen.in_service) continue;  // not a live constraint
        const auto gi = static_cast<int>(g);
        const bool bad =
            outside(pred.gen_p_mw[gi] / base, gen.min_p_mw / base, gen.max_p_mw / base) ||
            outside(pred.gen_q_mvar[gi] / base, gen.min_q_mvar / base, gen.max_q_mvar / base);
        push("gen" + std::to_string(gen.id) + "_bd", bad);
    }
    const bool slack_bad =
        outside(pred.slack_p_mw / base, grid.slack.min_p_mw / base, grid.slack.max_p_mw / base) ||
        outside(pred.slack_q_mvar / base, grid.slack.min_q_mvar / base,
                grid.slack.max_q_mvar / base);
    push("slack_bd", slack_bad);
    return out;
}

/// |total generation cost| at the predicted unit outputs.
inline double cost_loss(const Grid& grid, const Prediction& pred) {
    return std::abs(generation_cost(grid, pred.gen_p_mw, pred.slack_p_mw));
}

// ---------------------------------------------------------------------------
// Combined training-style loss. Supervised terms are squared L2 distances
// over the label tables (powers in per-unit, angles wrapped); the constraint
// term is the sum of squared hinges beyond each box in per-unit space.
// ---------------------------------------------------------------------------
struct LossWeights {
    double w_bus = 1.0;
    double w_slack = 1.0;
    double w_gen = 1.0;
    double w_boundary = 1.0;
    double w_ssl = 1.0;
    double w_cost = 1.0;
};

struct LossBreakdown {
    double bus = 0.0;
    double slack = 0.0;
    double gen = 0.0;
    double boundary = 0.0;
    double ssl = 0.0;
    double cost = 0.0;
    double total = 0.0;
};

inline double hinge_sq(double v, double lo, double hi) {
    const double over = std::max(0.0, v - hi);
    const double under = std::max(0.0, lo - v);
    return over * over + under * under;
}

inline LossBreakdown combined_loss(const Grid& grid, const Prediction& pred,
                                   const GridSolution& truth, const LossWeights& w,
                                   const EvalConfig& config) {
    (void)config;
    if (pred.state.vm.size() != truth.state.vm.size() ||
        pred.gen_p_mw.size() != truth.gen_p_mw.size())
        throw DimensionError("prediction and truth have different shapes");
    const double base = grid.base_mva;
    LossBreakdown out;

    double bus_sq = 0.0;
    for (int i = 0; i < truth.state.vm.size(); ++i) {
        const double dv = pred.state.vm[i] - truth.state.vm[i];
        const double dt = wrap_angle(pred.state.va[i] - truth.state.va[i]);
        bus_sq += dv * dv + dt * dt;
    }
    double gen_sq = 0.0;
    for (int g = 0; g < truth.gen_p_mw.size(); ++g) {
        const double dp = (pred.gen_p_mw[g] - truth.gen_p_mw[g]) / base;
        const double dq = (pred.gen_q_mvar[g] - truth.gen_q_mvar[g]) / base;
        gen_sq += dp * dp + dq * dq;
    }
    const double dsp = (pred.slack_p_mw - truth.slack_p_mw) / base;
    const double dsq = (pred.slack_q_mvar - truth.slack_q_mvar) / base;

    double ctr = 0.0;
    BusIndex index(grid);
    for (int i = 0; i < index.size(); ++i)
        ctr += hinge_sq(pred.state.vm[i], grid.buses[i].min_vm_pu, grid.buses[i].max_vm_pu);
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        const auto& gen = grid.generators[g];
        const auto gi = static_cast<int>(g);
        ctr += hinge_sq(pred.gen_p_mw[gi] / base, gen.min_p_mw / base, gen.max_p_mw / base);
        ctr += hinge_sq(pred.gen_q_mvar[gi] / base, gen.min_q_mvar / base, gen.max_q_mvar / base);
    }
    ctr += hinge_sq(pred.slack_p_mw / base, grid.slack.min_p_mw / base,
                    grid.slack.max_p_mw / base);
    ctr += hinge_sq(pred.slack_q_mvar / base, grid.slack.min_q_mvar / base,
                    grid.slack.max_q_mvar / base);

    out.bus = w.w_bus * bus_sq;
    out.slack = w.w_slack * (dsp * dsp + dsq * dsq);
    out.gen = w.w_gen * gen_sq;
    out.boundary = w.w_boundary * ctr;
    out.ssl = w.w_ssl * ssl_error(grid, pred);
    out.cost = w.w_cost * cost_loss(grid, pred);
    out.total = out.bus + out.slack + out.gen + out.boundary + out.ssl + out.cost;
    return out;
}

enum class WeightStrategy { Uniform, Random, Relative };

inline WeightStrategy weight_strategy_from_string(const std::string& s) {
    if (s == "uniform") return WeightStrategy::Uniform;
    if (s == "random") return WeightStrategy::Random;
    if (s == "relative") return WeightStrategy::Relative;
    throw SchemaError("unknown weighting strategy '" + s + "'");
}

/// Weight vectors over the six loss terms [bus, slack, gen, boundary, ssl,
/// cost], each strategy normalized to sum to 1: equal weights, softmax of
/// standard normal draws, or inverse-cardinality weights.
inline LossWeights make_weights(WeightStrategy strategy,
                                const std::array<double, 6>& term_cardinalities,
                                SeededStream& rng) {
    std::array<double, 6> w{};
    switch (strategy) {
        case WeightStrategy::Uniform:
            w.fill(1.0 / 6.0);
            break;
        case WeightStrategy::Random: {
            double sum = 0.0;
            for (auto& x : w) {
                x = std::exp(rng.next_normal());
                sum += x;
            }
            for (auto& x : w) x /= sum;
            break;
        }
        case WeightStrategy::Relative: {
            double sum = 0.0;
            for (std::size_t i = 0; i < 6; ++i) {
                if (!(term_cardinalities[i] > 0.0))
                    throw ValidationError("relative weighting needs positive cardinalities");
                w[i] = 1.0 / term_cardinalities[i];
                sum += w[i];
            }
            for (auto& x : w) x /= sum;
            break;
        }
    }
    return LossWeights{w[0], w[1], w[2], w[3], w[4], w[5]};
}

// ---------------------------------------------------------------------------
// Dataset-level evaluation report
// ---------------------------------------------------------------------------
struct MetricStat {
    double mean = 0.0;
    double std_dev = 0.0;  // across graphs
};

struct EvalReport {
    std::size_t n_entries = 0;
    Norms norms;
    MetricStat p_gen, q_gen, p_slack, q_slack, v, theta;
    MetricStat ssl;
    double percent_invalid = 0.0;
    int total_constraints = 0;
    std::vector<std::pair<std::string, double>> constraint_frequency;
    std::vector<double> entry_distance;  // normalized p-norm, one per entry
    double norm_order = 2.0;
};

namespace detail {

inline MetricStat stat_of(const std::vector<double>& xs) {
    MetricStat s;
    if (xs.empty()) return s;
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - s.mean) * (x - s.mean);
    s.std_dev = std::sqrt(var / static_cast<double>(xs.size()));
    return s;
}

inline double prediction_distance(const Prediction& pred, const GridSolution& truth,
                                  const Norms& norms, double p) {
    double acc = 0.0;
    auto add = [&](double diff) { acc += std::pow(std::abs(diff), p); };
    for (int i = 0; i < truth.state.vm.size(); ++i) {
        add((pred.state.vm[i] - truth.state.vm[i]) / norms.v);
        add(wrap_angle(pred.state.va[i] - truth.state.va[i]) / norms.theta);
    }
    for (int g = 0; g < truth.gen_p_mw.size(); ++g) {
        add((pred.gen_p_mw[g] - truth.gen_p_mw[g]) / norms.p_gen);
        add((pred.gen_q_mvar[g] - truth.gen_q_mvar[g]) / norms.q_gen);
    }
    add((pred.slack_p_mw - truth.slack_p_mw) / norms.p_slack);
    add((pred.slack_q_mvar - truth.slack_q_mvar) / norms.q_slack);
    return std::pow(acc, 1.0 / p);
}

}  // namespace detail

/// Per-constraint violation frequencies over a test split.
inline std::vector<std::pair<std::string, double>> constraint_report(
    const std::vector<DatasetEntry>& entries, const std::vector<Prediction>& predictions,
    const EvalConfig& config, int* total_constraints = nullptr) {
    if (entries.size() != predictions.size())
        throw DimensionError("one prediction per test entry required");
    std::vector<std::pair<std::string, double>> freq;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        BoundaryFlags flags = boundary_violations(entries[k].grid, predictions[k], config);
        if (k == 0) {
            freq.reserve(flags.flags.size());
            for (const auto& [name, hit] : flags.flags) freq.emplace_back(name, hit ? 1.0 : 0.0);
        } else {
            if (flags.flags.size() != freq.size())
                throw DimensionError("constraint sets differ across entries");
            for (std::size_t c = 0; c < freq.size(); ++c)
                freq[c].second += flags.flags[c].second ? 1.0 : 0.0;
        }
    }
    if (!entries.empty())
        for (auto& [name, f] : freq) f /= static_cast<double>(entries.size());
    if (total_constraints) *total_constraints = static_cast<int>(freq.size());
    return freq;
}

/// Full quantitative + qualitative evaluation of predictions against the
/// stored oracle labels of a test split.
inline EvalReport evaluate_predictions(const std::vector<DatasetEntry>& entries,
                                       const std::vector<Prediction>& predictions,
                                       const EvalConfig& config) {
    if (entries.size() != predictions.size())
        throw DimensionError("one prediction per test entry required");
    EvalReport rep;
    rep.n_entries = entries.size();
    rep.norm_order = config.norm_order;

    std::vector<const GridSolution*> truths;
    truths.reserve(entries.size());
    for (const auto& e : entries) truths.push_back(&e.solution);
    rep.norms = compute_norms(truths);

    std::vector<double> pg, qg, ps, qs, v, th, ssl;
    int invalid = 0;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        SupervisedSE se = supervised_error(predictions[k], entries[k].solution, rep.norms);
        pg.push_back(se.p_gen);
        qg.push_back(se.q_gen);
        ps.push_back(se.p_slack);
        qs.push_back(se.q_slack);
        v.push_back(se.v);
        th.push_back(se.theta);
        ssl.push_back(ssl_error(entries[k].grid, predictions[k]));
        if (!boundary_violations(entries[k].grid, predictions[k], config).valid) ++invalid;
        rep.entry_distance.push_back(detail::prediction_distance(
            predictions[k], entries[k].solution, rep.norms, config.norm_order));
    }
    rep.p_gen = detail::stat_of(pg);
    rep.q_gen = detail::stat_of(qg);
    rep.p_slack = detail::stat_of(ps);
    rep.q_slack = detail::stat_of(qs);
    rep.v = detail::stat_of(v);
    rep.theta = detail::stat_of(th);
    rep.ssl = detail::stat_of(ssl);
    rep.percent_invalid =
        entries.empty() ? 0.0 : 100.0 * static_cast<double>(invalid) / entries.size();
    rep.constraint_frequency =
        constraint_report(entries, predictions, config, &rep.total_constraints);
    return rep;
}

struct RobustnessSummary {
    bool robust = false;
    double worst_distance = 0.0;
    std::size_t entries_beyond_mu = 0;
};

/// A model is robust on the evaluated set iff every entry's prediction lies
/// within mu of the oracle in the configured norm.
inline RobustnessSummary robustness_summary(const EvalReport& report, const EvalConfig& config) {
    RobustnessSummary s;
    s.robust = true;
    for (double d : report.entry_distance) {
        s.worst_distance = std::max(s.worst_distance, d);
        if (d > config.mu) {
            s.robust = false;
            ++s.entries_beyond_mu;
        }
    }
    return s;
}

// --- report writers ---

inline Json report_to_json(const EvalReport& rep) {
    auto stat = [](const MetricStat& m) { return Json{{"mean", m.mean}, {"std", m.std_dev}}; };
    Json constraints;
    for (const auto& [name, f] : rep.constraint_frequency) constraints[name] = f;
    return Json{{"n_entries", rep.n_entries},
                {"norms",
                 Json{{"p_gen", rep.norms.p_gen},
                      {"q_gen", rep.norms.q_gen},
                      {"p_slack", rep.norms.p_slack},
                      {"q_slack", rep.norms.q_slack},
                      {"v", rep.norms.v},
                      {"theta", rep.norms.theta}}},
                {"supervised",
                 Json{{"P_gen", stat(rep.p_gen)},
                      {"Q_gen", stat(rep.q_gen)},
                      {"P_slack", stat(rep.p_slack)},
                      {"Q_slack", stat(rep.q_slack)},
                      {"V", stat(rep.v)},
                      {"theta", stat(rep.theta)}}},
                {"ssl_mse", stat(rep.ssl)},
                {"percent_invalid", rep.percent_invalid},
                {"total_constraints", rep.total_constraints},
                {"constraint_frequency", std::move(constraints)},
                {"entry_distance", rep.entry_distance},
                {"norm_order", rep.norm_order}};
}

inline std::string report_to_csv(const EvalReport& rep) {
    std::string out = "kind,name,value,value2\n";
    char buf[160];
    auto row = [&](const char* kind, const std::string& name, double a, double b) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g\n", kind, name.c_str(), a, b);
        out += buf;
    };
    row("metric", "P_gen", rep.p_gen.mean, rep.p_gen.std_dev);
    row("metric", "Q_gen", rep.q_gen.mean, rep.q_gen.std_dev);
    row("metric", "P_slack", rep.p_slack.mean, rep.p_slack.std_dev);
    row("metric", "Q_slack", rep.q_slack.mean, rep.q_slack.std_dev);
    row("metric", "V", rep.v.mean, rep.v.std_dev);
    row("metric", "theta", rep.theta.mean, rep.theta.std_dev);
    row("metric", "ssl_mse", rep.ssl.mean, rep.ssl.std_dev);
    row("summary", "percent_invalid", rep.percent_invalid, 0.0);
    row("summary", "total_constraints", rep.total_constraints, 0.0);
    row("summary", "n_entries", static_cast<double>(rep.n_entries), 0.0);
    for (const auto& [name, f] : rep.constraint_frequency) row("constraint", name, f, 0.0);
    return out;
}

/// Horizontal bar chart of broken-constraint frequencies. Constraints that
/// are never violated are omitted.
inline std::string constraint_frequency_svg(const EvalReport& rep) {
    std::vector<std::pair<std::string, double>> broken;
    for (const auto& [name, f] : rep.constraint_frequency)
        if (f > 0.0) broken.emplace_back(name, f);
    const int bar_h = 18, gap = 6, left = 140, width = 640, top = 30;
    const int height = top + 10 + static_cast<int>(broken.size()) * (bar_h + gap);
    std::string svg;
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                  "font-family=\"sans-serif\" font-size=\"12\">\n",
                  width, std::max(height, 60));
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"8\" y=\"18\" font-size=\"14\">Violated constraints "
                  "(%d total, %zu broken)</text>\n",
                  rep.total_constraints, broken.size());
    svg += buf;
    int y = top;
    for (const auto& [name, f] : broken) {
        const int w = static_cast<int>(f * (width - left - 60));
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%d\" text-anchor=\"end\">%s</text>\n"
                      "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"#c0392b\"/>\n"
                      "<text x=\"%d\" y=\"%d\">%.1f%%</text>\n",
                      left - 6, y + bar_h - 4, name.c_str(), left, y, std::max(w, 1), bar_h,
                      left + std::max(w, 1) + 6, y + bar_h - 4, 100.0 * f);
        svg += buf;
        y += bar_h + gap;
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace gridsafe

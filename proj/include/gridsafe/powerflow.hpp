#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <optional>
#include <string>
#include <vector>

#include "gridsafe/admittance.hpp"
#include "gridsafe/grid.hpp"

namespace gridsafe {

using Eigen::VectorXd;
using SparseReal = Eigen::SparseMatrix<double>;

/// Per-bus voltage magnitudes [p.u.] and angles [rad], internal bus order.
struct VoltageState {
    VectorXd vm;
    VectorXd va;

    friend bool operator==(const VoltageState& a, const VoltageState& b) {
        return a.vm.size() == b.vm.size() && a.vm == b.vm && a.va == b.va;
    }
};

/// The oracle target and the prediction payload: per-bus voltage state plus
/// per-generator and slack power outputs in MW / MVar.
struct GridSolution {
    VoltageState state;
    VectorXd gen_p_mw;   // aligned one-to-one with Grid::generators
    VectorXd gen_q_mvar;
    double slack_p_mw = 0.0;
    double slack_q_mvar = 0.0;

    friend bool operator==(const GridSolution& a, const GridSolution& b) {
        return a.state == b.state && a.gen_p_mw.size() == b.gen_p_mw.size() &&
               a.gen_p_mw == b.gen_p_mw && a.gen_q_mvar == b.gen_q_mvar &&
               a.slack_p_mw == b.slack_p_mw && a.slack_q_mvar == b.slack_q_mvar;
    }
};

struct PFOptions {
    double tol = 1e-8;   // infinity norm of the mismatch vector [p.u.]
    int max_iter = 30;
    bool flat_start = true;
};

struct PFResult {
    GridSolution solution;
    int iterations = 0;
    double residual = 0.0;
};

struct LineFlow {
    int branch_id = 0;
    double p_from_mw = 0.0;
    double q_from_mvar = 0.0;
    double p_to_mw = 0.0;
    double q_to_mvar = 0.0;
    double loading_percent = 0.0;  // |S|/rate * 100, zero when unrated
    bool rated = false;
};

// ---------------------------------------------------------------------------
// Compiled per-unit view of a grid: effective bus types, fixed injections and
// unit-to-bus maps. Pure data, shared by the PF and OPF solvers and the
// evaluation residuals.
// ---------------------------------------------------------------------------
struct PuModel {
    const Grid* grid = nullptr;
    int n = 0;
    int slack = -1;  // internal index
    std::vector<int> ext_ids;
    std::unordered_map<int, int> index_of;

    std::vector<bool> active;          // bus in_service
    std::vector<BusType> eff_type;     // Slack / PV (has in-service unit) / PQ
    VectorXd p_fixed;                  // [p.u.] gen setpoints minus loads; excludes slack unit
    VectorXd q_load_inj;               // [p.u.] load reactive injection (negative of demand)
    VectorXd vm_setpoint;              // valid at slack/PV buses
    std::vector<std::vector<int>> gens_at_bus;  // indices into grid.generators, in-service only
    std::vector<int> unit_count;       // in-service units per bus (slack unit included)

    int internal(int ext_id) const {
        auto it = index_of.find(ext_id);
        if (it == index_of.end())
            throw ValidationError("unknown bus id " + std::to_string(ext_id));
        return it->second;
    }
};

inline PuModel compile_model(const Grid& grid) {
    BusIndex index(grid);
    PuModel m;
    m.grid = &grid;
    m.n = index.size();
    m.ext_ids = index.ext_ids;
    m.index_of = index.to_internal;
    m.active.resize(m.n);
    m.eff_type.assign(m.n, BusType::PQ);
    m.p_fixed = VectorXd::Zero(m.n);
    m.q_load_inj = VectorXd::Zero(m.n);
    m.vm_setpoint = VectorXd::Ones(m.n);
    m.gens_at_bus.resize(m.n);
    m.unit_count.assign(m.n, 0);

    for (int i = 0; i < m.n; ++i) m.active[i] = grid.buses[i].in_service;

    m.slack = index.at(grid.slack.bus);
    m.eff_type[m.slack] = BusType::Slack;
    m.vm_setpoint[m.slack] = grid.slack.vm_pu;
    m.unit_count[m.slack] += 1;

    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        const auto& gen = grid.generators[g];
        if (!gen.in_service) continue;
        int i = index.at(gen.bus);
        if (!m.active[i]) continue;
        m.gens_at_bus[i].push_back(static_cast<int>(g));
        m.unit_count[i] += 1;
        m.p_fixed[i] += gen.p_mw / grid.base_mva;
        if (i != m.slack) {
            if (m.eff_type[i] != BusType::PV) {
                m.eff_type[i] = BusType::PV;
                m.vm_setpoint[i] = gen.vm_pu;
            }
        }
    }
    for (const auto& load : grid.loads) {
        if (!load.in_service) continue;
        int i = index.at(load.bus);
        if (!m.active[i]) continue;
        m.p_fixed[i] -= load.p_mw / grid.base_mva;
        m.q_load_inj[i] -= load.q_mvar / grid.base_mva;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Injection sums and their partials (Eq. of the bus injection model):
//   P_i = V_i sum_k V_k (G_ik cos t_ik + B_ik sin t_ik)
//   Q_i = V_i sum_k V_k (G_ik sin t_ik - B_ik cos t_ik), t_ik = va_i - va_k
// ---------------------------------------------------------------------------
inline void bus_injections(const AdmittanceMatrix& adm, const VoltageState& s, VectorXd& p_calc,
                           VectorXd& q_calc) {
    const int n = adm.size();
    p_calc.setZero(n);
    q_calc.setZero(n);
    for (int i = 0; i < n; ++i) {
        double pi = 0.0, qi = 0.0;
        for (Eigen::SparseMatrix<Complex, Eigen::RowMajor>::InnerIterator it(adm.Y, i); it;
             ++it) {
            const int k = it.col();
            const double g = it.value().real();
            const double b = it.value().imag();
            const double t = s.va[i] - s.va[k];
            const double ct = std::cos(t), st = std::sin(t);
            pi += s.vm[k] * (g * ct + b * st);
            qi += s.vm[k] * (g * st - b * ct);
        }
        p_calc[i] = s.vm[i] * pi;
        q_calc[i] = s.vm[i] * qi;
    }
}

/// Full 2n x 2n sparse Jacobian of the injection sums:
/// rows [P_0..P_{n-1}, Q_0..Q_{n-1}], columns [va_0..va_{n-1}, vm_0..vm_{n-1}].
inline SparseReal injection_partials(const AdmittanceMatrix& adm, const VoltageState& s,
                                     const VectorXd& p_calc, const VectorXd& q_calc) {
    const int n = adm.size();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(adm.Y.nonZeros()) * 4);
    for (int i = 0; i < n; ++i) {
        for (Eigen::SparseMatrix<Complex, Eigen::RowMajor>::InnerIterator it(adm.Y, i); it;
             ++it) {
            const int k = it.col();
            const double g = it.value().real();
            const double b = it.value().imag();
            if (k == i) {
                trip.emplace_back(i, i, -q_calc[i] - b * s.vm[i] * s.vm[i]);
                trip.emplace_back(i, n + i, p_calc[i] / s.vm[i] + g * s.vm[i]);
                trip.emplace_back(n + i, i, p_calc[i] - g * s.vm[i] * s.vm[i]);
                trip.emplace_back(n + i, n + i, q_calc[i] / s.vm[i] - b * s.vm[i]);
            } else {
                const double t = s.va[i] - s.va[k];
                const double ct = std::cos(t), st = std::sin(t);
                const double vv = s.vm[i] * s.vm[k];
                trip.emplace_back(i, k, vv * (g * st - b * ct));
                trip.emplace_back(i, n + k, s.vm[i] * (g * ct + b * st));
                trip.emplace_back(n + i, k, -vv * (g * ct + b * st));
                trip.emplace_back(n + i, n + k, s.vm[i] * (g * st - b * ct));
            }
        }
    }
    SparseReal J(2 * n, 2 * n);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
}

// ---------------------------------------------------------------------------
// PF mismatch, Jacobian, solver
// ---------------------------------------------------------------------------

/// Unknown/equation bookkeeping for the NR system.
struct PFStructure {
    std::vector<int> p_rows;   // buses with a dP equation (active non-slack)
    std::vector<int> q_rows;   // buses with a dQ equation (active PQ)
    std::vector<int> va_cols;  // buses whose angle is unknown (= p_rows)
    std::vector<int> vm_cols;  // buses whose magnitude is unknown (= q_rows)
    std::vector<int> row_of_p, row_of_q, col_of_va, col_of_vm;  // -1 where fixed

    int rows() const { return static_cast<int>(p_rows.size() + q_rows.size()); }
};

inline PFStructure pf_structure(const PuModel& m) {
    PFStructure st;
    st.row_of_p.assign(m.n, -1);
    st.row_of_q.assign(m.n, -1);
    st.col_of_va.assign(m.n, -1);
    st.col_of_vm.assign(m.n, -1);
    for (int i = 0; i < m.n; ++i) {
        if (!m.active[i] || m.eff_type[i] == BusType::Slack) continue;
        st.row_of_p[i] = static_cast<int>(st.p_rows.size());
        st.p_rows.push_back(i);
    }
    const auto np = static_cast<int>(st.p_rows.size());
    for (int i = 0; i < m.n; ++i) {
        if (!m.active[i] || m.eff_type[i] != BusType::PQ) continue;
        st.row_of_q[i] = np + static_cast<int>(st.q_rows.size());
        st.q_rows.push_back(i);
    }
    st.va_cols = st.p_rows;
    st.vm_cols = st.q_rows;
    for (std::size_t c = 0; c < st.va_cols.size(); ++c) st.col_of_va[st.va_cols[c]] = (int)c;
    for (std::size_t c = 0; c < st.vm_cols.size(); ++c)
        st.col_of_vm[st.vm_cols[c]] = static_cast<int>(st.va_cols.size() + c);
    return st;
}

inline VectorXd pf_mismatch_model(const PuModel& m, const AdmittanceMatrix& adm,
                                  const PFStructure& st, const VoltageState& s, VectorXd& p_calc,
                                  VectorXd& q_calc) {
    if (s.vm.size() != m.n || s.va.size() != m.n)
        throw DimensionError("voltage state does not match grid bus count");
    bus_injections(adm, s, p_calc, q_calc);
    VectorXd f(st.rows());
    const auto np = static_cast<int>(st.p_rows.size());
    for (int r = 0; r < np; ++r) {
        const int i = st.p_rows[r];
        f[r] = m.p_fixed[i] - p_calc[i];
    }
    for (std::size_t r = 0; r < st.q_rows.size(); ++r) {
        const int i = st.q_rows[r];
        f[np + static_cast<int>(r)] = m.q_load_inj[i] - q_calc[i];
    }
    return f;
}

/// Mismatch vector [dP at PV+PQ buses; dQ at PQ buses] in p.u.
inline VectorXd pf_mismatch(const Grid& grid, const AdmittanceMatrix& adm,
                            const VoltageState& state) {
    PuModel m = compile_model(grid);
    PFStructure st = pf_structure(m);
    VectorXd p_calc, q_calc;
    return pf_mismatch_model(m, adm, st, state, p_calc, q_calc);
}

/// Analytic Jacobian of the mismatch w.r.t. [va at non-slack; vm at PQ].
/// Sparsity follows Y. Mismatch is specified minus calculated power, hence
/// the negated injection partials.
inline SparseReal pf_jacobian_model(const PuModel& m, const AdmittanceMatrix& adm,
                                    const PFStructure& st, const VoltageState& s) {
    VectorXd p_calc, q_calc;
    bus_injections(adm, s, p_calc, q_calc);
    const int n = m.n;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(adm.Y.nonZeros()) * 4);
    for (int i = 0; i < n; ++i) {
        const int rp = st.row_of_p[i];
        const int rq = st.row_of_q[i];
        if (rp < 0 && rq < 0) continue;
        for (Eigen::SparseMatrix<Complex, Eigen::RowMajor>::InnerIterator it(adm.Y, i); it;
             ++it) {
            const int k = it.col();
            const double g = it.value().real();
            const double b = it.value().imag();
            const int cva = st.col_of_va[k];
            const int cvm = st.col_of_vm[k];
            double dp_dva, dp_dvm, dq_dva, dq_dvm;
            if (k == i) {
                dp_dva = -q_calc[i] - b * s.vm[i] * s.vm[i];
                dp_dvm = p_calc[i] / s.vm[i] + g * s.vm[i];
                dq_dva = p_calc[i] - g * s.vm[i] * s.vm[i];
                dq_dvm = q_calc[i] / s.vm[i] - b * s.vm[i];
            } else {
                const double t = s.va[i] - s.va[k];
                const double ct = std::cos(t), st_ = std::sin(t);
                const double vv = s.vm[i] * s.vm[k];
                dp_dva = vv * (g * st_ - b * ct);
                dp_dvm = s.vm[i] * (g * ct + b * st_);
                dq_dva = -vv * (g * ct + b * st_);
                dq_dvm = s.vm[i] * (g * st_ - b * ct);
            }
            if (rp >= 0 && cva >= 0) trip.emplace_back(rp, cva, -dp_dva);
            if (rp >= 0 && cvm >= 0) trip.emplace_back(rp, cvm, -dp_dvm);
            if (rq >= 0 && cva >= 0) trip.emplace_back(rq, cva, -dq_dva);
            if (rq >= 0 && cvm >= 0) trip.emplace_back(rq, cvm, -dq_dvm);
        }
    }
    const int rows = st.rows();
    SparseReal J(rows, rows);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
}

inline SparseReal pf_jacobian(const Grid& grid, const AdmittanceMatrix& adm,
                              const VoltageState& state) {
    PuModel m = compile_model(grid);
    PFStructure st = pf_structure(m);
    if (state.vm.size() != m.n || state.va.size() != m.n)
        throw DimensionError("voltage state does not match grid bus count");
    return pf_jacobian_model(m, adm, st, state);
}

inline VoltageState flat_start_state(const PuModel& m) {
    VoltageState s;
    s.vm = VectorXd::Ones(m.n);
    s.va = VectorXd::Constant(m.n, m.grid->slack.va_rad);
    for (int i = 0; i < m.n; ++i)
        if (m.eff_type[i] != BusType::PQ) s.vm[i] = m.vm_setpoint[i];
    return s;
}

/// Clamps a warm-start state onto the PF constraint manifold: slack angle and
/// slack/PV magnitudes at their setpoints.
inline void enforce_setpoints(const PuModel& m, VoltageState& s) {
    s.va[m.slack] = m.grid->slack.va_rad;
    for (int i = 0; i < m.n; ++i)
        if (m.eff_type[i] != BusType::PQ) s.vm[i] = m.vm_setpoint[i];
}

/// Recovers unit outputs from a converged state: slack P/Q and PV-bus Q from
/// the full injection equations. Reactive output at a multi-unit bus is split
/// equally among its in-service units.
inline GridSolution recover_solution(const PuModel& m, const AdmittanceMatrix& adm,
                                     const VoltageState& s) {
    const Grid& grid = *m.grid;
    VectorXd p_calc, q_calc;
    bus_injections(adm, s, p_calc, q_calc);

    GridSolution sol;
    sol.state = s;
    sol.gen_p_mw = VectorXd::Zero(static_cast<int>(grid.generators.size()));
    sol.gen_q_mvar = VectorXd::Zero(static_cast<int>(grid.generators.size()));

    for (int i = 0; i < m.n; ++i) {
        if (!m.active[i] || m.unit_count[i] == 0) continue;
        const double q_total_mvar = (q_calc[i] - m.q_load_inj[i]) * grid.base_mva;
        const double q_share = q_total_mvar / m.unit_count[i];
        for (int g : m.gens_at_bus[i]) {
            sol.gen_p_mw[g] = grid.generators[g].p_mw;
            sol.gen_q_mvar[g] = q_share;
        }
        if (i == m.slack) {
            sol.slack_p_mw = (p_calc[i] - m.p_fixed[i]) * grid.base_mva;
            sol.slack_q_mvar = q_share;
        }
    }
    return sol;
}

namespace detail {

inline void require_solvable(const Grid& grid, const PuModel& m) {
    auto violations = validate_grid(grid);
    if (!violations.empty()) {
        for (const auto& v : violations)
            if (v.find("islanded") != std::string::npos) throw TopologyError(v);
        throw ValidationError(violations.front());
    }
    BusIndex index(grid);
    auto seen = reachable_from_slack(grid, index);
    for (int i = 0; i < m.n; ++i)
        if (m.active[i] && !seen[i])
            throw TopologyError("bus " + std::to_string(m.ext_ids[i]) +
                                " is not connected to the slack bus");
}

}  // namespace detail

/// Newton-Raphson power flow. Full Newton steps; on a mismatch-norm increase
/// the step is halved up to 4 times before declaring divergence.
inline PFResult solve_powerflow(const Grid& grid, const PFOptions& options = {},
                                const std::optional<VoltageState>& warm = std::nullopt) {
    if (!(options.tol > 0.0)) throw ValidationError("tol must be positive");
    if (options.max_iter < 1) throw ValidationError("max_iter must be >= 1");

    PuModel m = compile_model(grid);
    detail::require_solvable(grid, m);
    AdmittanceMatrix adm = build_admittance(grid);
    PFStructure st = pf_structure(m);

    VoltageState s;
    if (warm && !options.flat_start) {
        s = *warm;
        if (s.vm.size() != m.n || s.va.size() != m.n)
            throw DimensionError("warm-start state does not match grid bus count");
        enforce_setpoints(m, s);
    } else {
        s = flat_start_state(m);
    }

    VectorXd p_calc, q_calc;
    VectorXd f = pf_mismatch_model(m, adm, st, s, p_calc, q_calc);
    double norm = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;

    int iterations = 0;
    while (norm > options.tol) {
        if (iterations >= options.max_iter)
            throw DivergenceError("power flow did not converge in " +
                                      std::to_string(options.max_iter) +
                                      " iterations (|F| = " + std::to_string(norm) + ")",
                                  norm);
        SparseReal J = pf_jacobian_model(m, adm, st, s);
        Eigen::SparseLU<SparseReal> lu;
        lu.compute(J);
        if (lu.info() != Eigen::Success)
            throw NumericalError("singular Jacobian in power flow iteration " +
                                 std::to_string(iterations + 1));
        VectorXd dx = lu.solve(-f);
        if (lu.info() != Eigen::Success)
            throw NumericalError("Jacobian solve failed in power flow");

        const auto nva = static_cast<int>(st.va_cols.size());
        double step = 1.0;
        VoltageState trial = s;
        VectorXd f_trial;
        double trial_norm = norm;
        bool accepted = false;
        for (int halving = 0; halving <= 4; ++halving) {
            trial = s;
            for (int c = 0; c < nva; ++c) trial.va[st.va_cols[c]] += step * dx[c];
            for (std::size_t c = 0; c < st.vm_cols.size(); ++c)
                trial.vm[st.vm_cols[c]] += step * dx[nva + static_cast<int>(c)];
            if ((trial.vm.array() > 0.0).all()) {
                f_trial = pf_mismatch_model(m, adm, st, trial, p_calc, q_calc);
                trial_norm = f_trial.cwiseAbs().maxCoeff();
                if (trial_norm <= norm) {
                    accepted = true;
                    break;
                }
            }
            step /= 2.0;
        }
        if (!accepted)
            throw DivergenceError("power flow diverged: mismatch norm increased from " +
                                      std::to_string(norm),
                                  trial_norm);
        s = trial;
        f = f_trial;
        norm = trial_norm;
        ++iterations;
    }

    PFResult result;
    result.solution = recover_solution(m, adm, s);
    result.iterations = iterations;
    result.residual = norm;
    return result;
}

// ---------------------------------------------------------------------------
// Line flows and loading classification
// ---------------------------------------------------------------------------

/// Directed per-branch flows from the pi model. Out-of-service branches
/// report zero flow.
inline std::vector<LineFlow> line_flows(const Grid& grid, const AdmittanceMatrix& adm,
                                        const VoltageState& s) {
    BusIndex index(grid);
    if (s.vm.size() != adm.size() || adm.size() != index.size())
        throw DimensionError("voltage state does not match grid bus count");
    std::vector<LineFlow> flows;
    flows.reserve(grid.branches.size());
    for (const auto& br : grid.branches) {
        LineFlow lf;
        lf.branch_id = br.id;
        lf.rated = br.rate_mva > 0.0;
        const int f = index.at(br.from_bus);
        const int t = index.at(br.to_bus);
        if (br.in_service && grid.buses[f].in_service && grid.buses[t].in_service) {
            const BranchStamp stamp = branch_stamp(br);
            const Complex vf = std::polar(s.vm[f], s.va[f]);
            const Complex vt = std::polar(s.vm[t], s.va[t]);
            const Complex s_from = vf * std::conj(stamp.ff * vf + stamp.ft * vt);
            const Complex s_to = vt * std::conj(stamp.tf * vf + stamp.tt * vt);
            lf.p_from_mw = s_from.real() * grid.base_mva;
            lf.q_from_mvar = s_from.imag() * grid.base_mva;
            lf.p_to_mw = s_to.real() * grid.base_mva;
            lf.q_to_mvar = s_to.imag() * grid.base_mva;
            if (lf.rated) {
                const double s_max =
                    std::max(std::abs(s_from), std::abs(s_to)) * grid.base_mva;
                lf.loading_percent = 100.0 * s_max / br.rate_mva;
            }
        }
        flows.push_back(lf);
    }
    return flows;
}

enum class BusBand { Ideal, Acceptable, Unsafe };
enum class LineBand { Ideal, Elevated, Dangerous };

inline BusBand classify_bus_vm(double vm) {
    if (vm > 1.10 || vm < 0.90) return BusBand::Unsafe;
    if (vm >= 0.95 && vm <= 1.05) return BusBand::Ideal;
    return BusBand::Acceptable;
}

inline LineBand classify_line_loading(double loading_percent) {
    if (loading_percent > 100.0) return LineBand::Dangerous;
    if (loading_percent >= 80.0) return LineBand::Elevated;
    return LineBand::Ideal;
}

inline const char* to_string(BusBand b) {
    switch (b) {
        case BusBand::Ideal: return "ideal";
        case BusBand::Acceptable: return "acceptable";
        default: return "unsafe";
    }
}

inline const char* to_string(LineBand b) {
    switch (b) {
        case LineBand::Ideal: return "ideal";
        case LineBand::Elevated: return "elevated";
        default: return "dangerous";
    }
}

struct LoadingReport {
    std::vector<std::pair<int, BusBand>> bus_bands;    // external bus id
    std::vector<std::pair<int, LineBand>> line_bands;  // branch id (rated, in service)
    int bus_ideal = 0, bus_acceptable = 0, bus_unsafe = 0;
    int line_ideal = 0, line_elevated = 0, line_dangerous = 0;
};

inline LoadingReport loading_report(const Grid& grid, const GridSolution& sol) {
    BusIndex index(grid);
    if (sol.state.vm.size() != index.size())
        throw DimensionError("solution does not match grid bus count");
    LoadingReport rep;
    for (int i = 0; i < index.size(); ++i) {
        BusBand band = classify_bus_vm(sol.state.vm[i]);
        rep.bus_bands.emplace_back(index.ext_ids[i], band);
        (band == BusBand::Ideal ? rep.bus_ideal
         : band == BusBand::Acceptable ? rep.bus_acceptable
                                       : rep.bus_unsafe)++;
    }
    AdmittanceMatrix adm = build_admittance(grid);
    for (const auto& lf : line_flows(grid, adm, sol.state)) {
        if (!lf.rated) continue;
        LineBand band = classify_line_loading(lf.loading_percent);
        rep.line_bands.emplace_back(lf.branch_id, band);
        (band == LineBand::Ideal ? rep.line_ideal
         : band == LineBand::Elevated ? rep.line_elevated
                                      : rep.line_dangerous)++;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Full residuals of a dispatch: treats the solution's own unit outputs as the
// specified injections and evaluates both injection equations at every active
// bus. Shared by the feasibility checker and the physics (SSL) metric.
// ---------------------------------------------------------------------------
struct FullResiduals {
    VectorXd p;  // [p.u.] per bus, zero at inactive buses
    VectorXd q;
};

inline FullResiduals full_residuals(const Grid& grid, const AdmittanceMatrix& adm,
                                    const GridSolution& sol) {
    PuModel m = compile_model(grid);
    if (sol.state.vm.size() != m.n)
        throw DimensionError("solution does not match grid bus count");
    if (sol.gen_p_mw.size() != static_cast<int>(grid.generators.size()))
        throw DimensionError("solution generator arrays do not match grid unit count");

    VectorXd p_spec = VectorXd::Zero(m.n);
    VectorXd q_spec = VectorXd::Zero(m.n);
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        const auto& gen = grid.generators[g];
        if (!gen.in_service) continue;
        int i = m.internal(gen.bus);
        p_spec[i] += sol.gen_p_mw[static_cast<int>(g)] / grid.base_mva;
        q_spec[i] += sol.gen_q_mvar[static_cast<int>(g)] / grid.base_mva;
    }
    p_spec[m.slack] += sol.slack_p_mw / grid.base_mva;
    q_spec[m.slack] += sol.slack_q_mvar / grid.base_mva;
    for (const auto& load : grid.loads) {
        if (!load.in_service) continue;
        int i = m.internal(load.bus);
        p_spec[i] -= load.p_mw / grid.base_mva;
        q_spec[i] -= load.q_mvar / grid.base_mva;
    }

    VectorXd p_calc, q_calc;
    bus_injections(adm, sol.state, p_calc, q_calc);
    FullResiduals res;
    res.p = VectorXd::Zero(m.n);
    res.q = VectorXd::Zero(m.n);
    for (int i = 0; i < m.n; ++i) {
        if (!m.active[i]) continue;
        res.p[i] = p_spec[i] - p_calc[i];
        res.q[i] = q_spec[i] - q_calc[i];
    }
    return res;
}

}  // namespace gridsafe

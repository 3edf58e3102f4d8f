#pragma once

#include <Eigen/Cholesky>
#include <algorithm>
#include <string>
#include <vector>

#include "gridsafe/powerflow.hpp"

namespace gridsafe {

struct OPFOptions {
    double eq_tol = 1e-6;    // PF-equality tolerance [p.u.]
    double ineq_tol = 1e-6;  // bound tolerance [p.u.]
    int max_outer = 50;      // penalty-loop budget
    double penalty_growth = 10.0;
    bool enforce_line_limits = false;
    int max_inner = 200;     // Gauss-Newton iterations per penalty round
    PFOptions pf;            // warm start and polish solves
};

struct OPFSolution {
    GridSolution solution;
    double objective = 0.0;
    double kkt_residual = 0.0;  // gradient infinity norm of the scaled penalized objective
    bool feasible = false;
    int outer_iterations = 0;
    double final_penalty = 0.0;
};

struct Violation {
    std::string constraint;
    double magnitude = 0.0;  // [p.u.] beyond the tolerance band
};

/// Total quadratic generation cost over all units including the slack.
inline double generation_cost(const Grid& grid, const VectorXd& gen_p_mw, double slack_p_mw) {
    if (gen_p_mw.size() != static_cast<int>(grid.generators.size()))
        throw DimensionError("dispatch vector does not match generator count");
    double total = 0.0;
    for (std::size_t g = 0; g < grid.generators.size(); ++g)
        total += grid.generators[g].cost.eval(gen_p_mw[static_cast<int>(g)]);
    total += grid.slack.cost.eval(slack_p_mw);
    return total;
}

inline double generation_cost(const Grid& grid, const GridSolution& sol) {
    return generation_cost(grid, sol.gen_p_mw, sol.slack_p_mw);
}

/// Lists every violated constraint of a dispatch: per-bus PF residuals beyond
/// eq_tol, then vm / unit P / unit Q box violations beyond ineq_tol, all in
/// per-unit. Line ratings are checked only when asked.
inline std::vector<Violation> feasibility_check(const Grid& grid, const GridSolution& sol,
                                                double eq_tol, double ineq_tol,
                                                bool check_line_limits = false) {
    std::vector<Violation> out;
    AdmittanceMatrix adm = build_admittance(grid);
    FullResiduals res = full_residuals(grid, adm, sol);
    BusIndex index(grid);
    const double base = grid.base_mva;

    for (int i = 0; i < index.size(); ++i) {
        const double r = std::max(std::abs(res.p[i]), std::abs(res.q[i]));
        if (r > eq_tol)
            out.push_back({"bus" + std::to_string(index.ext_ids[i]) + "_pf", r});
    }
    for (int i = 0; i < index.size(); ++i) {
        const auto& b = grid.buses[i];
        if (!b.in_service) continue;
        const double vm = sol.state.vm[i];
        if (vm > b.max_vm_pu + ineq_tol)
            out.push_back({"bus" + std::to_string(b.id) + "_vm", vm - b.max_vm_pu});
        else if (vm < b.min_vm_pu - ineq_tol)
            out.push_back({"bus" + std::to_string(b.id) + "_vm", b.min_vm_pu - vm});
    }
    auto check_box = [&](const std::string& name, double value_mw, double lo_mw, double hi_mw) {
        const double v = value_mw / base, lo = lo_mw / base, hi = hi_mw / base;
        if (v > hi + ineq_tol)
            out.push_back({name, v - hi});
        else if (v < lo - ineq_tol)
            out.push_back({name, lo - v});
    };
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        const auto& gen = grid.generators[g];
        if (!gen.in_service) continue;
        const auto gi = static_cast<int>(g);
        check_box("gen" + std::to_string(gen.id) + "_p", sol.gen_p_mw[gi], gen.min_p_mw,
                  gen.max_p_mw);
        check_box("gen" + std::to_string(gen.id) + "_q", sol.gen_q_mvar[gi], gen.min_q_mvar,
                  gen.max_q_mvar);
    }
    check_box("slack_p", sol.slack_p_mw, grid.slack.min_p_mw, grid.slack.max_p_mw);
    check_box("slack_q", sol.slack_q_mvar, grid.slack.min_q_mvar, grid.slack.max_q_mvar);

    if (check_line_limits) {
        for (const auto& lf : line_flows(grid, adm, sol.state)) {
            if (!lf.rated || lf.loading_percent == 0.0) continue;
            const Branch* br = nullptr;
            for (const auto& b : grid.branches)
                if (b.id == lf.branch_id) br = &b;
            const double s_pu = std::max(std::hypot(lf.p_from_mw, lf.q_from_mvar),
                                         std::hypot(lf.p_to_mw, lf.q_to_mvar)) /
                                base;
            const double rate_pu = br->rate_mva / base;
            if (s_pu > rate_pu + ineq_tol)
                out.push_back(
                    {"branch" + std::to_string(lf.branch_id) + "_rate", s_pu - rate_pu - ineq_tol});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reduced OPF formulation. Decision variables: vm at every active bus, va at
// active non-slack buses, P^g of in-service generators (per-unit). Slack P
// and every unit's Q are derived from the injection equations; PF equalities
// and all boxes enter a quadratic-penalty objective (squared hinges for the
// boxes), minimized by damped Gauss-Newton steps on the analytic gradient.
// ---------------------------------------------------------------------------
class OpfProblem {
  public:
    OpfProblem(const Grid& grid, const OPFOptions& options)
        : grid_(grid), opt_(options), model_(compile_model(grid)), adm_(build_admittance(grid)) {
        const int n = model_.n;
        idx_vm_.assign(n, -1);
        idx_va_.assign(n, -1);
        int d = 0;
        for (int i = 0; i < n; ++i)
            if (model_.active[i]) idx_vm_[i] = d++;
        for (int i = 0; i < n; ++i)
            if (model_.active[i] && i != model_.slack) idx_va_[i] = d++;
        idx_pg_.assign(grid.generators.size(), -1);
        for (std::size_t g = 0; g < grid.generators.size(); ++g) {
            const auto& gen = grid.generators[g];
            if (!gen.in_service) continue;
            if (!model_.active[model_.internal(gen.bus)]) continue;
            idx_pg_[g] = d++;
        }
        dim_ = d;

        p_load_inj_ = VectorXd::Zero(n);
        q_load_inj_ = model_.q_load_inj;
        for (const auto& load : grid.loads) {
            if (!load.in_service) continue;
            int i = model_.internal(load.bus);
            if (model_.active[i]) p_load_inj_[i] -= load.p_mw / grid.base_mva;
        }

        lo_ = VectorXd::Constant(dim_, -1e30);
        hi_ = VectorXd::Constant(dim_, 1e30);
        for (int i = 0; i < n; ++i) {
            if (idx_vm_[i] >= 0) {
                lo_[idx_vm_[i]] = grid.buses[i].min_vm_pu;
                hi_[idx_vm_[i]] = grid.buses[i].max_vm_pu;
            }
        }
        for (std::size_t g = 0; g < grid.generators.size(); ++g) {
            if (idx_pg_[g] < 0) continue;
            lo_[idx_pg_[g]] = grid.generators[g].min_p_mw / grid.base_mva;
            hi_[idx_pg_[g]] = grid.generators[g].max_p_mw / grid.base_mva;
        }

        for (int i = 0; i < n; ++i) {
            if (!model_.active[i]) continue;
            if (i != model_.slack) eq_p_rows_.push_back(i);
            if (model_.unit_count[i] == 0 && i != model_.slack) eq_q_rows_.push_back(i);
        }
    }

    int dimension() const { return dim_; }
    const VectorXd& lower() const { return lo_; }
    const VectorXd& upper() const { return hi_; }

    /// Packs (voltage state, generator dispatch) into a decision vector.
    VectorXd pack(const VoltageState& s, const VectorXd& pg_pu) const {
        VectorXd x = VectorXd::Zero(dim_);
        for (int i = 0; i < model_.n; ++i) {
            if (idx_vm_[i] >= 0) x[idx_vm_[i]] = s.vm[i];
            if (idx_va_[i] >= 0) x[idx_va_[i]] = s.va[i];
        }
        for (std::size_t g = 0; g < idx_pg_.size(); ++g)
            if (idx_pg_[g] >= 0) x[idx_pg_[g]] = pg_pu[static_cast<int>(g)];
        return x;
    }

    VoltageState unpack_state(const VectorXd& x) const {
        VoltageState s;
        s.vm = VectorXd::Ones(model_.n);
        s.va = VectorXd::Constant(model_.n, grid_.slack.va_rad);
        for (int i = 0; i < model_.n; ++i) {
            if (idx_vm_[i] >= 0) s.vm[i] = x[idx_vm_[i]];
            if (idx_va_[i] >= 0) s.va[i] = x[idx_va_[i]];
        }
        return s;
    }

    VectorXd unpack_pg_pu(const VectorXd& x) const {
        VectorXd pg = VectorXd::Zero(static_cast<int>(grid_.generators.size()));
        for (std::size_t g = 0; g < idx_pg_.size(); ++g)
            if (idx_pg_[g] >= 0) pg[static_cast<int>(g)] = x[idx_pg_[g]];
        return pg;
    }

    void set_cost_scale(double f0) {
        double s = std::max(1.0, std::abs(f0));
        scale_ = std::exp2(std::ceil(std::log2(s)));
    }
    double cost_scale() const { return scale_; }

    /// Scaled penalized objective.
    double value(const VectorXd& x, double rho_eq, double rho_box) const {
        Eval ev;
        evaluate(x, ev);
        double eq = 0.0;
        for (double h : ev.h) eq += h * h;
        double box = 0.0;
        for (const auto& hv : ev.hinges) box += hv.violation * hv.violation;
        return ev.cost / scale_ + rho_eq * eq + rho_box * box;
    }

    /// Analytic gradient of the scaled penalized objective.
    VectorXd gradient(const VectorXd& x, double rho_eq, double rho_box) const {
        Eval ev;
        evaluate(x, ev, /*with_rows=*/true);
        VectorXd g = VectorXd::Zero(dim_);
        // cost: direct pg terms plus the slack-P chain
        for (std::size_t gi = 0; gi < grid_.generators.size(); ++gi) {
            if (idx_pg_[gi] < 0) continue;
            const auto& gen = grid_.generators[gi];
            const double p_mw = x[idx_pg_[gi]] * grid_.base_mva;
            g[idx_pg_[gi]] += (2.0 * gen.cost.c * p_mw + gen.cost.b) * grid_.base_mva / scale_;
        }
        const double sl_mw = ev.slack_p * grid_.base_mva;
        const double w_slack =
            (2.0 * grid_.slack.cost.c * sl_mw + grid_.slack.cost.b) * grid_.base_mva / scale_;
        for (const auto& [c, v] : ev.slack_row) g[c] += w_slack * v;

        for (std::size_t r = 0; r < ev.h.size(); ++r) {
            const double w = 2.0 * rho_eq * ev.h[r];
            for (const auto& [c, v] : ev.h_rows[r]) g[c] += w * v;
        }
        for (const auto& hv : ev.hinges) {
            if (hv.violation == 0.0) continue;
            const double w = 2.0 * rho_box * hv.violation * hv.sign;
            for (const auto& [c, v] : hv.row) g[c] += w * v;
        }
        return g;
    }

    struct InnerResult {
        VectorXd x;
        double grad_norm = 0.0;
        int iterations = 0;
    };

    /// Damped Gauss-Newton with backtracking line search.
    InnerResult minimize(VectorXd x, double rho_eq, double rho_box) const {
        double lm = 1e-8;
        const double gtol = 1e-12 * std::max(1.0, rho_eq);
        double f0 = value(x, rho_eq, rho_box);
        InnerResult out;
        bool stagnated = false;
        int it = 0;
        for (; it < opt_.max_inner && !stagnated; ++it) {
            Eval ev;
            evaluate(x, ev, /*with_rows=*/true);
            VectorXd g = gradient(x, rho_eq, rho_box);
            out.grad_norm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
            if (out.grad_norm <= gtol) break;

            Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim_, dim_);
            for (std::size_t gi = 0; gi < grid_.generators.size(); ++gi) {
                if (idx_pg_[gi] < 0) continue;
                H(idx_pg_[gi], idx_pg_[gi]) += 2.0 * grid_.generators[gi].cost.c *
                                               grid_.base_mva * grid_.base_mva / scale_;
            }
            const double slack_curv =
                2.0 * grid_.slack.cost.c * grid_.base_mva * grid_.base_mva / scale_;
            add_outer(H, ev.slack_row, slack_curv);
            for (const auto& row : ev.h_rows) add_outer(H, row, 2.0 * rho_eq);
            for (const auto& hv : ev.hinges)
                if (hv.violation != 0.0) add_outer(H, hv.row, 2.0 * rho_box);

            bool stepped = false;
            for (int damp = 0; damp < 12 && !stepped; ++damp) {
                Eigen::MatrixXd Hd = H;
                Hd.diagonal().array() += lm;
                Eigen::LDLT<Eigen::MatrixXd> ldlt(Hd);
                if (ldlt.info() != Eigen::Success) {
                    lm = std::max(lm * 10.0, 1e-6);
                    continue;
                }
                VectorXd dx = ldlt.solve(-g);
                const double slope = g.dot(dx);
                if (!std::isfinite(slope) || slope >= 0.0) {
                    lm = std::max(lm * 10.0, 1e-6);
                    continue;
                }
                double alpha = 1.0;
                for (int ls = 0; ls < 40; ++ls) {
                    VectorXd xt = x + alpha * dx;
                    double ft = value(xt, rho_eq, rho_box);
                    if (std::isfinite(ft) && ft <= f0 + 1e-4 * alpha * slope) {
                        const double df = f0 - ft;
                        x = xt;
                        f0 = ft;
                        stepped = true;
                        lm = (alpha == 1.0) ? std::max(lm * 0.3, 1e-10) : lm * 2.0;
                        if (df <= 1e-15 * std::max(1.0, std::abs(f0)) &&
                            (alpha * dx).cwiseAbs().maxCoeff() <= 1e-13)
                            stagnated = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if (!stepped) lm *= 10.0;
            }
            if (!stepped) break;
        }
        out.x = x;
        out.iterations = it;
        VectorXd g = gradient(out.x, rho_eq, rho_box);
        out.grad_norm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
        return out;
    }

    /// Derived slack active power [p.u.] at a decision point.
    double slack_p_pu(const VectorXd& x) const {
        Eval ev;
        evaluate(x, ev);
        return ev.slack_p;
    }

  private:
    using Row = std::vector<std::pair<int, double>>;

    struct HingeEval {
        double violation = 0.0;  // >= 0, magnitude beyond the box
        double sign = 1.0;       // +1 above upper bound, -1 below lower
        Row row;                 // gradient of the underlying value
    };

    struct Eval {
        double cost = 0.0;       // unscaled currency
        double slack_p = 0.0;    // [p.u.]
        Row slack_row;
        std::vector<double> h;   // PF equality residuals [p.u.]
        std::vector<Row> h_rows;
        std::vector<HingeEval> hinges;
    };

    static void add_outer(Eigen::MatrixXd& H, const Row& row, double w) {
        for (const auto& [c1, v1] : row)
            for (const auto& [c2, v2] : row) H(c1, c2) += w * v1 * v2;
    }

    void evaluate(const VectorXd& x, Eval& ev, bool with_rows = false) const {
        const int n = model_.n;
        VoltageState s = unpack_state(x);
        VectorXd pg = unpack_pg_pu(x);

        VectorXd p_calc, q_calc;
        bus_injections(adm_, s, p_calc, q_calc);

        Eigen::SparseMatrix<double, Eigen::RowMajor> J;
        if (with_rows) {
            VectorXd pc = p_calc, qc = q_calc;
            J = Eigen::SparseMatrix<double, Eigen::RowMajor>(
                injection_partials(adm_, s, pc, qc));
        }
        // decision-space gradient row of P_calc (q=false) or Q_calc at a bus
        auto calc_row = [&](int bus, bool q_row) {
            Row row;
            const int r = (q_row ? n : 0) + bus;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(J, r); it; ++it) {
                const auto col = static_cast<int>(it.col());
                const int bus_k = col < n ? col : col - n;
                const int idx = col < n ? idx_va_[bus_k] : idx_vm_[bus_k];
                if (idx >= 0) row.emplace_back(idx, it.value());
            }
            return row;
        };

        // per-bus specified injections from decision variables
        VectorXd p_spec = p_load_inj_;
        for (std::size_t g = 0; g < grid_.generators.size(); ++g)
            if (idx_pg_[g] >= 0) p_spec[model_.internal(grid_.generators[g].bus)] +=
                pg[static_cast<int>(g)];

        // equalities
        ev.h.clear();
        ev.h_rows.clear();
        for (int i : eq_p_rows_) {
            ev.h.push_back(p_spec[i] - p_calc[i]);
            if (with_rows) {
                Row row = calc_row(i, false);
                for (auto& [c, v] : row) v = -v;
                for (int g : model_.gens_at_bus[i])
                    if (idx_pg_[g] >= 0) row.emplace_back(idx_pg_[g], 1.0);
                ev.h_rows.push_back(std::move(row));
            }
        }
        for (int i : eq_q_rows_) {
            ev.h.push_back(q_load_inj_[i] - q_calc[i]);
            if (with_rows) {
                Row row = calc_row(i, true);
                for (auto& [c, v] : row) v = -v;
                ev.h_rows.push_back(std::move(row));
            }
        }

        // derived slack P and its row
        double pg_at_slack = 0.0;
        for (int g : model_.gens_at_bus[model_.slack])
            if (idx_pg_[g] >= 0) pg_at_slack += pg[g];
        ev.slack_p = p_calc[model_.slack] - pg_at_slack - p_load_inj_[model_.slack];
        if (with_rows) {
            ev.slack_row = calc_row(model_.slack, false);
            for (int g : model_.gens_at_bus[model_.slack])
                if (idx_pg_[g] >= 0) ev.slack_row.emplace_back(idx_pg_[g], -1.0);
        }

        // cost
        ev.cost = 0.0;
        for (std::size_t g = 0; g < grid_.generators.size(); ++g) {
            if (idx_pg_[g] < 0) continue;
            ev.cost += grid_.generators[g].cost.eval(pg[static_cast<int>(g)] * grid_.base_mva);
        }
        ev.cost += grid_.slack.cost.eval(ev.slack_p * grid_.base_mva);

        // box hinges
        ev.hinges.clear();
        auto push_hinge = [&](double value, double lo, double hi, Row row) {
            HingeEval hv;
            if (value > hi) {
                hv.violation = value - hi;
                hv.sign = 1.0;
            } else if (value < lo) {
                hv.violation = lo - value;
                hv.sign = -1.0;
            } else {
                return;
            }
            hv.row = std::move(row);
            ev.hinges.push_back(std::move(hv));
        };
        // decision boxes (vm, pg)
        for (int c = 0; c < dim_; ++c) {
            if (lo_[c] <= -1e30 && hi_[c] >= 1e30) continue;
            push_hinge(x[c], lo_[c], hi_[c], Row{{c, 1.0}});
        }
        // slack P box
        push_hinge(ev.slack_p, grid_.slack.min_p_mw / grid_.base_mva,
                   grid_.slack.max_p_mw / grid_.base_mva,
                   with_rows ? ev.slack_row : Row{});
        // unit Q boxes: the reactive output at a multi-unit bus splits equally
        for (int i = 0; i < n; ++i) {
            if (!model_.active[i] || model_.unit_count[i] == 0) continue;
            const double q_tot = q_calc[i] - q_load_inj_[i];
            const double share = q_tot / model_.unit_count[i];
            Row base_row;
            if (with_rows) {
                base_row = calc_row(i, true);
                for (auto& [c, v] : base_row) v /= model_.unit_count[i];
            }
            for (int g : model_.gens_at_bus[i]) {
                const auto& gen = grid_.generators[g];
                push_hinge(share, gen.min_q_mvar / grid_.base_mva, gen.max_q_mvar / grid_.base_mva,
                           base_row);
            }
            if (i == model_.slack)
                push_hinge(share, grid_.slack.min_q_mvar / grid_.base_mva,
                           grid_.slack.max_q_mvar / grid_.base_mva, base_row);
        }
        // optional line thermal limits on |S|^2
        if (opt_.enforce_line_limits) evaluate_line_hinges(s, ev, with_rows);
    }

    void evaluate_line_hinges(const VoltageState& s, Eval& ev, bool with_rows) const {
        for (const auto& br : grid_.branches) {
            if (!br.in_service || br.rate_mva <= 0.0) continue;
            const int f = model_.internal(br.from_bus);
            const int t = model_.internal(br.to_bus);
            if (!model_.active[f] || !model_.active[t]) continue;
            const BranchStamp stamp = branch_stamp(br);
            const double rate_pu = br.rate_mva / grid_.base_mva;
            add_flow_hinge(s, f, t, stamp.ff, stamp.ft, rate_pu, ev, with_rows);
            add_flow_hinge(s, t, f, stamp.tt, stamp.tf, rate_pu, ev, with_rows);
        }
    }

    /// Hinge on |S_from|^2 of a directed branch end: S = A vf^2 + B vf vt e^{j phi},
    /// A = conj(Y_ff), B = conj(Y_ft), phi = va_f - va_t.
    void add_flow_hinge(const VoltageState& s, int f, int t, Complex yff, Complex yft,
                        double rate_pu, Eval& ev, bool with_rows) const {
        const Complex A = std::conj(yff);
        const Complex B = std::conj(yft);
        const double vf = s.vm[f], vt = s.vm[t];
        const double phi = s.va[f] - s.va[t];
        const double cp = std::cos(phi), sp = std::sin(phi);
        const double p = A.real() * vf * vf + vf * vt * (B.real() * cp - B.imag() * sp);
        const double q = A.imag() * vf * vf + vf * vt * (B.imag() * cp + B.real() * sp);
        const double s2 = p * p + q * q;
        const double cap = rate_pu * rate_pu;
        if (s2 <= cap) return;

        HingeEval hv;
        hv.violation = s2 - cap;
        hv.sign = 1.0;
        if (with_rows) {
            const double dp_dvf = 2.0 * A.real() * vf + vt * (B.real() * cp - B.imag() * sp);
            const double dp_dvt = vf * (B.real() * cp - B.imag() * sp);
            const double dp_dphi = vf * vt * (-B.real() * sp - B.imag() * cp);
            const double dq_dvf = 2.0 * A.imag() * vf + vt * (B.imag() * cp + B.real() * sp);
            const double dq_dvt = vf * (B.imag() * cp + B.real() * sp);
            const double dq_dphi = vf * vt * (-B.imag() * sp + B.real() * cp);
            auto add = [&](int idx, double v) {
                if (idx >= 0 && v != 0.0) hv.row.emplace_back(idx, v);
            };
            add(idx_vm_[f], 2.0 * p * dp_dvf + 2.0 * q * dq_dvf);
            add(idx_vm_[t], 2.0 * p * dp_dvt + 2.0 * q * dq_dvt);
            add(idx_va_[f], 2.0 * p * dp_dphi + 2.0 * q * dq_dphi);
            add(idx_va_[t], -(2.0 * p * dp_dphi + 2.0 * q * dq_dphi));
        }
        ev.hinges.push_back(std::move(hv));
    }

    const Grid& grid_;
    OPFOptions opt_;
    PuModel model_;
    AdmittanceMatrix adm_;
    std::vector<int> idx_vm_, idx_va_, idx_pg_;
    int dim_ = 0;
    VectorXd lo_, hi_;
    VectorXd p_load_inj_, q_load_inj_;
    std::vector<int> eq_p_rows_, eq_q_rows_;
    double scale_ = 1.0;

    friend VectorXd opf_gradient(const Grid&, const VectorXd&, double, double, const OPFOptions&);
    friend OPFSolution solve_opf(const Grid&, const OPFOptions&);
};

/// Gradient of the scaled penalized objective at a decision point; exposed
/// for finite-difference verification.
inline VectorXd opf_gradient(const Grid& grid, const VectorXd& x, double rho_eq, double rho_box,
                             const OPFOptions& options = {}) {
    OpfProblem prob(grid, options);
    if (x.size() != prob.dimension()) throw DimensionError("decision vector size mismatch");
    return prob.gradient(x, rho_eq, rho_box);
}

namespace detail {

/// Projects a decision point back onto the PF manifold: generator dispatch
/// and voltage setpoints from x, then one Newton-Raphson solve.
inline GridSolution pf_polish(const Grid& grid, const OpfProblem& prob, const VectorXd& x,
                              const PFOptions& pf_opts) {
    Grid dispatch = grid;
    VoltageState s = prob.unpack_state(x);
    VectorXd pg = prob.unpack_pg_pu(x);
    BusIndex index(grid);
    for (std::size_t g = 0; g < dispatch.generators.size(); ++g) {
        auto& gen = dispatch.generators[g];
        if (!gen.in_service) continue;
        gen.p_mw = std::clamp(pg[static_cast<int>(g)] * grid.base_mva, gen.min_p_mw, gen.max_p_mw);
        gen.vm_pu = std::clamp(s.vm[index.at(gen.bus)], grid.buses[index.at(gen.bus)].min_vm_pu,
                               grid.buses[index.at(gen.bus)].max_vm_pu);
    }
    const int sb = index.at(dispatch.slack.bus);
    dispatch.slack.vm_pu = std::clamp(s.vm[sb], grid.buses[sb].min_vm_pu, grid.buses[sb].max_vm_pu);
    PFOptions warm = pf_opts;
    warm.flat_start = false;
    PFResult pf = solve_powerflow(dispatch, warm, s);
    return pf.solution;
}

}  // namespace detail

/// Quadratic-penalty AC-OPF with increasing penalty weight, warm-started from
/// the power flow solution. Each penalty round ends with a PF projection of
/// the iterate; the loop stops once the projected point passes the
/// feasibility check and its objective has stabilized.
inline OPFSolution solve_opf(const Grid& grid, const OPFOptions& options = {}) {
    if (!(options.eq_tol > 0.0) || !(options.ineq_tol > 0.0))
        throw ValidationError("OPF tolerances must be positive");
    if (!(options.penalty_growth > 1.0))
        throw ValidationError("penalty_growth must exceed 1");

    auto violations = validate_grid(grid);
    if (!violations.empty()) throw ValidationError(violations.front());

    double capacity = grid.slack.max_p_mw;
    for (const auto& g : grid.generators)
        if (g.in_service) capacity += g.max_p_mw;
    double demand = 0.0;
    for (const auto& l : grid.loads)
        if (l.in_service) demand += l.p_mw;
    if (capacity < demand)
        throw InfeasibleError("total generation capacity " + std::to_string(capacity) +
                              " MW cannot cover demand " + std::to_string(demand) + " MW");

    OpfProblem prob(grid, options);

    // warm start from the PF solution (flat state if PF fails)
    VoltageState s0;
    try {
        PFResult pf = solve_powerflow(grid, options.pf);
        s0 = pf.solution.state;
    } catch (const Error&) {
        PuModel m = compile_model(grid);
        s0 = flat_start_state(m);
    }
    VectorXd pg0 = VectorXd::Zero(static_cast<int>(grid.generators.size()));
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        const auto& gen = grid.generators[g];
        pg0[static_cast<int>(g)] =
            std::clamp(gen.p_mw, gen.min_p_mw, gen.max_p_mw) / grid.base_mva;
    }
    VectorXd x = prob.pack(s0, pg0);
    x = x.cwiseMax(prob.lower()).cwiseMin(prob.upper());

    {
        VectorXd pg_mw = prob.unpack_pg_pu(x) * grid.base_mva;
        prob.set_cost_scale(
            generation_cost(grid, pg_mw, prob.slack_p_pu(x) * grid.base_mva));
    }

    double rho = 100.0;
    OPFSolution out;
    bool have_candidate = false;
    double prev_objective = 0.0;
    std::string last_failure = "penalty loop exhausted";

    for (int outer = 1; outer <= options.max_outer; ++outer) {
        OpfProblem::InnerResult inner = prob.minimize(x, rho, rho);
        x = inner.x.cwiseMax(prob.lower()).cwiseMin(prob.upper());
        out.kkt_residual = inner.grad_norm;
        out.outer_iterations = outer;
        out.final_penalty = rho;

        try {
            GridSolution candidate = detail::pf_polish(grid, prob, x, options.pf);
            auto viols = feasibility_check(grid, candidate, options.eq_tol, options.ineq_tol,
                                           options.enforce_line_limits);
            if (viols.empty()) {
                const double obj = generation_cost(grid, candidate);
                const bool settled =
                    have_candidate &&
                    std::abs(obj - prev_objective) <= std::max(1e-9 * std::abs(obj), 1e-7);
                out.solution = candidate;
                out.objective = obj;
                out.feasible = true;
                have_candidate = true;
                if (settled) return out;
                prev_objective = obj;
            } else {
                last_failure = "unsatisfied: " + viols.front().constraint + " by " +
                               std::to_string(viols.front().magnitude);
            }
        } catch (const Error& e) {
            last_failure = e.what();
        }
        rho *= options.penalty_growth;
    }
    if (have_candidate) return out;  // feasible but objective never fully settled
    throw NumericalError("OPF did not converge: " + last_failure +
                         " (final penalty " + std::to_string(rho) + ")");
}

}  // namespace gridsafe

#pragma once

#include <Eigen/Sparse>
#include <vector>

#include "gridsafe/grid.hpp"

namespace gridsafe {

/// Sparse nodal admittance Y = G + jB on the grid's internal bus ordering.
/// Row-major so injection sums iterate rows directly. Immutable after
/// construction; safe to share across threads.
struct AdmittanceMatrix {
    Eigen::SparseMatrix<Complex, Eigen::RowMajor> Y;
    std::vector<int> ext_ids;

    int size() const { return static_cast<int>(Y.rows()); }

    Complex at(int i, int k) const { return Y.coeff(i, k); }
};

/// Four-point stamp of one branch in the pi model. For series admittance
/// y = 1/(r + jx), charging b_c, tap t and shift phi:
///   Y_ff = (y + j b_c/2)/t^2,  Y_tt = y + j b_c/2,
///   Y_ft = -y e^{-j phi}/t,    Y_tf = -y e^{+j phi}/t.
struct BranchStamp {
    Complex ff, ft, tf, tt;
};

inline BranchStamp branch_stamp(const Branch& br) {
    if (br.r_pu == 0.0 && br.x_pu == 0.0)
        throw SingularBranchError("branch " + std::to_string(br.id) +
                                  ": r = x = 0, series admittance is singular");
    const Complex y = 1.0 / Complex(br.r_pu, br.x_pu);
    const Complex y_sh(0.0, br.b_charging_pu / 2.0);
    const double t = br.tap_ratio;
    const Complex rot = std::polar(1.0, br.shift_rad);
    BranchStamp s;
    s.ff = (y + y_sh) / (t * t);
    s.tt = y + y_sh;
    s.ft = -y * std::conj(rot) / t;
    s.tf = -y * rot / t;
    return s;
}

/// Assembles the nodal admittance matrix. Out-of-service branches (or
/// branches touching out-of-service buses) contribute nothing; shunts add
/// g + jb to the diagonal. Diagonals are stamped for every bus so the
/// structural pattern always includes them.
inline AdmittanceMatrix build_admittance(const Grid& grid) {
    BusIndex index(grid);
    const int n = index.size();

    std::vector<Eigen::Triplet<Complex>> trip;
    trip.reserve(grid.buses.size() + 4 * grid.branches.size() + grid.shunts.size());
    for (int i = 0; i < n; ++i) trip.emplace_back(i, i, Complex(0.0, 0.0));

    for (const auto& br : grid.branches) {
        if (!br.in_service) continue;
        const int f = index.at(br.from_bus);
        const int t = index.at(br.to_bus);
        if (!grid.buses[f].in_service || !grid.buses[t].in_service) continue;
        const BranchStamp s = branch_stamp(br);
        trip.emplace_back(f, f, s.ff);
        trip.emplace_back(t, t, s.tt);
        trip.emplace_back(f, t, s.ft);
        trip.emplace_back(t, f, s.tf);
    }
    for (const auto& sh : grid.shunts) {
        const int i = index.at(sh.bus);
        if (!grid.buses[i].in_service) continue;
        trip.emplace_back(i, i, Complex(sh.g_pu, sh.b_pu));
    }

    AdmittanceMatrix out;
    out.ext_ids = index.ext_ids;
    out.Y.resize(n, n);
    out.Y.setFromTriplets(trip.begin(), trip.end());
    out.Y.makeCompressed();
    return out;
}

}  // namespace gridsafe

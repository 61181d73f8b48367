#pragma once

#include <complex>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "core.hpp"

namespace tsvnet {

// Lumped inter-metal-dielectric capacitor between two signal top nodes.
struct ImdCoupling {
    std::size_t a = 0;  // signal ordinal (position in signal_cells)
    std::size_t b = 0;
    double capacitance = 0.0;  // F
};

// Per-unit-length model after ground elimination. Matrices are indexed by
// signal ordinal; signal_cells[k] is the layout cell of ordinal k.
struct RlcgModel {
    GeometryMaterials geometry;
    std::vector<std::size_t> signal_cells;
    std::size_t reference_cell = 0;
    double t_dep_um = 0.0;
    Mat l_eff;       // H/m
    Mat c_sub_eff;   // F/m
    Mat g_sub_eff;   // S/m
    Vec c_oxdep;     // F/m, one per signal
    std::vector<ImdCoupling> imd;
    FrequencyGrid grid;
    std::vector<Complex> z_cond;  // Ohm/m, tabulated on grid
    double ground_condition = 1.0;

    std::size_t signal_count() const { return signal_cells.size(); }
};

// ---------------------------------------------------------------------------
// Depletion thickness of the MOS liner.
//
// Solves K = -t^2/2 - t a + (a + t)^2 ln((a + t)/a), a = r_cond + t_ins,
// K = 4 eps_s k T ln(N_A/n_i) / (q^2 N_A). The right-hand side is zero at
// t = 0 and has derivative 2 (a + t) ln(1 + t/a) >= 0, so the root is unique.
namespace detail {
    inline double depletion_constant_m2(const GeometryMaterials& g) {
        const double na = g.n_a * 1e6;  // m^-3
        const double eps = constants::eps0 * g.eps_s;
        return 4.0 * eps * constants::boltzmann * g.temperature * std::log(g.n_a / g.n_i) /
               (constants::charge * constants::charge * na);
    }

    inline double depletion_rhs_m2(double t, double a) {
        return -0.5 * t * t - t * a + (a + t) * (a + t) * std::log1p(t / a);
    }

    inline double depletion_rhs_slope(double t, double a) { return 2.0 * (a + t) * std::log1p(t / a); }
}

inline double depletion_thickness(const GeometryMaterials& g) {
    detail::require(g.n_a > g.n_i && g.n_i > 0, "depletion_thickness: requires N_A > n_i > 0");
    detail::require(g.r_cond > 0 && g.t_ins > 0, "depletion_thickness: radii must be positive");
    const double a = g.cell_half() * constants::um;
    const double k = detail::depletion_constant_m2(g);
    if (k <= 0) return 0.0;

    auto f = [&](double t) { return detail::depletion_rhs_m2(t, a) - k; };
    double lo = 0.0, hi = 10.0 * a;
    if (f(hi) < 0)
        throw SolverError("depletion_thickness: no root in [0, 10 (r_cond + t_ins)]; non-physical parameters");

    // Bisection to a tight bracket, then Newton steps kept inside it.
    for (int i = 0; i < 200 && (hi - lo) > 1e-6 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0 ? hi : lo) = mid;
    }
    double t = 0.5 * (lo + hi);
    for (int i = 0; i < 50; ++i) {
        const double slope = detail::depletion_rhs_slope(t, a);
        const double step = f(t) / slope;
        double next = t - step;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        (f(next) > 0 ? hi : lo) = next;
        const bool done = std::abs(next - t) <= 1e-14 * next;
        t = next;
        if (done) break;
    }
    return t / constants::um;
}

// Series combination of the oxide and depletion coaxial capacitors (F/m).
inline double oxide_depletion_capacitance(const GeometryMaterials& g, double t_dep_um) {
    detail::require(t_dep_um >= 0, "oxide_depletion_capacitance: t_dep must be >= 0");
    detail::require(g.r_cond > 0 && g.t_ins > 0, "oxide_depletion_capacitance: radii must be positive");
    const double r = g.r_cond, ro = g.r_cond + g.t_ins, rd = ro + t_dep_um;
    const double denom = g.eps_s * std::log(ro / r) + g.eps_ins * std::log(rd / ro);
    return 2.0 * constants::pi * constants::eps0 * g.eps_ins * g.eps_s / denom;
}

// ---------------------------------------------------------------------------
struct PartialInductance {
    std::size_t reference_cell = 0;
    std::vector<std::size_t> cells;  // occupied cells except the reference, ascending
    Mat l;                           // H/m
};

inline PartialInductance partial_inductance_matrix(const TsvLayout& x, const GeometryMaterials& g,
                                                   std::size_t reference) {
    detail::require(reference < x.cells() && x.role(reference) != Role::Empty,
                    "partial_inductance_matrix: reference must be an occupied cell");
    PartialInductance out;
    out.reference_cell = reference;
    for (auto c : x.occupied_indices())
        if (c != reference) out.cells.push_back(c);
    const auto n = static_cast<Eigen::Index>(out.cells.size());
    out.l = Mat::Zero(n, n);
    const double k = constants::mu0 / (2.0 * constants::pi);
    const double r = g.r_cond;
    std::vector<double> dref(out.cells.size());
    for (std::size_t i = 0; i < out.cells.size(); ++i) {
        dref[i] = cell_distance(x, g.p_int, out.cells[i], reference);
        if (!(dref[i] > 0)) throw ValidationError("partial_inductance_matrix: zero distance to reference");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        out.l(i, i) = k * std::log(dref[i] * dref[i] / (r * r));
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double dij = cell_distance(x, g.p_int, out.cells[i], out.cells[j]);
            if (!(dij > 0)) throw ValidationError("partial_inductance_matrix: zero distance between conductors");
            out.l(i, j) = out.l(j, i) = k * std::log(dref[i] * dref[j] / (r * dij));
        }
    }
    return out;
}

struct SchurResult {
    Mat reduced;
    double ground_condition = 1.0;  // 2-norm condition number of the eliminated block
};

// full_ss - full_sg * full_gg^-1 * full_gs.
inline SchurResult schur_reduce(const Mat& full, const std::vector<std::size_t>& signal_idx,
                                const std::vector<std::size_t>& ground_idx) {
    detail::require(full.rows() == full.cols(), "schur_reduce: matrix must be square");
    const auto ns = static_cast<Eigen::Index>(signal_idx.size());
    const auto ng = static_cast<Eigen::Index>(ground_idx.size());
    for (auto i : signal_idx) detail::require(static_cast<Eigen::Index>(i) < full.rows(), "schur_reduce: index out of range");
    for (auto i : ground_idx) detail::require(static_cast<Eigen::Index>(i) < full.rows(), "schur_reduce: index out of range");

    Mat ss(ns, ns), sg(ns, ng), gg(ng, ng);
    for (Eigen::Index i = 0; i < ns; ++i) {
        for (Eigen::Index j = 0; j < ns; ++j) ss(i, j) = full(signal_idx[i], signal_idx[j]);
        for (Eigen::Index j = 0; j < ng; ++j) sg(i, j) = full(signal_idx[i], ground_idx[j]);
    }
    for (Eigen::Index i = 0; i < ng; ++i)
        for (Eigen::Index j = 0; j < ng; ++j) gg(i, j) = full(ground_idx[i], ground_idx[j]);

    SchurResult out;
    if (ng == 0) {
        out.reduced = ss;
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(gg, Eigen::EigenvaluesOnly);
    const double emax = eig.eigenvalues().cwiseAbs().maxCoeff();
    const double emin = eig.eigenvalues().cwiseAbs().minCoeff();
    if (!(emax > 0) || emin <= 1e-12 * emax)
        throw SolverError("schur_reduce: ground block is singular (relative eigenvalue " +
                          std::to_string(emax > 0 ? emin / emax : 0.0) + ")");
    out.ground_condition = emax / emin;
    Eigen::PartialPivLU<Mat> lu(gg);
    out.reduced = ss - sg * lu.solve(sg.transpose());
    out.reduced = 0.5 * (out.reduced + out.reduced.transpose()).eval();
    return out;
}

struct SubstrateCG {
    Mat c;  // F/m
    Mat g;  // S/m
};

// C = mu0 eps0 eps_s L^-1 and G = mu0 sigma_s L^-1.
inline SubstrateCG substrate_cg(const Mat& l_eff, const GeometryMaterials& g) {
    detail::require(l_eff.rows() == l_eff.cols() && l_eff.rows() > 0, "substrate_cg: L must be square");
    Eigen::PartialPivLU<Mat> lu(l_eff);
    if (!(lu.rcond() > 1e-14)) throw SolverError("substrate_cg: singular L_eff");
    Mat inv = lu.inverse();
    inv = 0.5 * (inv + inv.transpose()).eval();
    return {constants::mu0 * constants::eps0 * g.eps_s * inv, constants::mu0 * g.sigma_s * inv};
}

// ---------------------------------------------------------------------------
// I1(z)/I0(z) by the continued fraction
// I_v/I_{v-1} = 1 / (2v/z + I_{v+1}/I_v), modified Lentz. Converges for all
// z != 0 without the overflow of the individual functions.
inline Complex bessel_i1_over_i0(Complex z) {
    const double tiny = 1e-300;
    Complex f = tiny, c = f, d = 0.0;
    for (int k = 1; k < 100000; ++k) {
        const Complex b = 2.0 * static_cast<double>(k) / z;
        d = b + d;
        if (std::abs(d) < tiny) d = tiny;
        c = b + 1.0 / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const Complex delta = c * d;
        f *= delta;
        if (std::abs(delta - 1.0) < 1e-16) return f;
    }
    throw SolverError("bessel_i1_over_i0: continued fraction did not converge");
}

// Internal impedance of a round wire with skin effect (Ohm/m).
inline Complex conductor_internal_impedance(double omega, const GeometryMaterials& g, double sigma_cu) {
    detail::require(omega >= 0, "conductor_internal_impedance: omega must be >= 0");
    const double r = g.r_cond * constants::um;
    const double dc = 1.0 / (sigma_cu * constants::pi * r * r);
    if (omega == 0) return dc;
    const double mu = constants::mu0 * g.mu_r_cond;
    const Complex chi = r * std::sqrt(Complex(0.0, omega * mu * sigma_cu));
    if (std::abs(chi) < 1e-6) return Complex(dc, 0.0) + Complex(0.0, omega * mu / (8.0 * constants::pi));
    return (chi / sigma_cu) / (2.0 * constants::pi * r * r) / bessel_i1_over_i0(chi);
}

inline Complex conductor_internal_impedance(double omega, const GeometryMaterials& g) {
    return conductor_internal_impedance(omega, g, g.sigma_cu);
}

// Parallel-wire capacitance per unit length times the IMD height (F).
inline double imd_capacitance(double d_ij_um, const GeometryMaterials& g) {
    detail::require(d_ij_um > 2.0 * g.r_cond, "imd_capacitance: conductors overlap (d <= 2 r_cond)");
    const double per_len = constants::pi * constants::eps0 * g.eps_imd / std::acosh(d_ij_um / (2.0 * g.r_cond));
    return per_len * g.h_imd * constants::um;
}

// ---------------------------------------------------------------------------
inline std::size_t default_reference(const TsvLayout& x) {
    auto grounds = x.ground_indices();
    detail::require(!grounds.empty(), "layout has no ground TSV");
    return grounds.front();
}

inline RlcgModel extract_rlcg(const TsvLayout& x, const GeometryMaterials& g, const FrequencyGrid& grid,
                              std::optional<std::size_t> reference = std::nullopt) {
    g.validate();
    detail::require(x.electrically_solvable(),
                    "extract_rlcg: layout needs at least one signal and one ground TSV");
    RlcgModel m;
    m.geometry = g;
    m.grid = grid;
    m.signal_cells = x.signal_indices();
    m.reference_cell = reference.value_or(default_reference(x));
    detail::require(m.reference_cell < x.cells() && x.role(m.reference_cell) == Role::Ground,
                    "extract_rlcg: reference must be a ground cell");

    const auto pl = partial_inductance_matrix(x, g, m.reference_cell);
    std::vector<std::size_t> sidx, gidx;
    for (std::size_t i = 0; i < pl.cells.size(); ++i)
        (x.role(pl.cells[i]) == Role::Signal ? sidx : gidx).push_back(i);
    auto red = schur_reduce(pl.l, sidx, gidx);
    m.l_eff = std::move(red.reduced);
    m.ground_condition = red.ground_condition;

    auto cg = substrate_cg(m.l_eff, g);
    m.c_sub_eff = std::move(cg.c);
    m.g_sub_eff = std::move(cg.g);

    m.t_dep_um = depletion_thickness(g);
    m.c_oxdep = Vec::Constant(static_cast<Eigen::Index>(m.signal_count()), oxide_depletion_capacitance(g, m.t_dep_um));

    const double adjacent = g.p_int * std::sqrt(2.0) * (1.0 + 1e-9);
    for (std::size_t a = 0; a < m.signal_count(); ++a)
        for (std::size_t b = a + 1; b < m.signal_count(); ++b) {
            const double d = cell_distance(x, g.p_int, m.signal_cells[a], m.signal_cells[b]);
            if (d <= adjacent) m.imd.push_back({a, b, imd_capacitance(d, g)});
        }

    m.z_cond.reserve(grid.size());
    for (auto f : grid.points()) m.z_cond.push_back(conductor_internal_impedance(2.0 * constants::pi * f, g));
    return m;
}

inline nlohmann::json rlcg_to_json(const RlcgModel& m) {
    auto mat = [](const Mat& a) {
        std::vector<double> v;
        v.reserve(static_cast<std::size_t>(a.size()));
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < a.cols(); ++j) v.push_back(a(i, j));
        return nlohmann::json{{"rows", a.rows()}, {"cols", a.cols()}, {"data", v}};
    };
    nlohmann::json imd = nlohmann::json::array();
    for (const auto& c : m.imd) imd.push_back({{"a", c.a}, {"b", c.b}, {"capacitance_F", c.capacitance}});
    nlohmann::json z = nlohmann::json::array();
    for (std::size_t i = 0; i < m.grid.size(); ++i)
        z.push_back({{"frequency_hz", m.grid[i]}, {"z_cond_ohm_per_m", {m.z_cond[i].real(), m.z_cond[i].imag()}}});
    std::vector<double> cox(m.c_oxdep.data(), m.c_oxdep.data() + m.c_oxdep.size());
    return {{"signal_cells", m.signal_cells},
            {"reference_cell", m.reference_cell},
            {"t_dep_m", m.t_dep_um * constants::um},
            {"l_eff_H_per_m", mat(m.l_eff)},
            {"c_sub_eff_F_per_m", mat(m.c_sub_eff)},
            {"g_sub_eff_S_per_m", mat(m.g_sub_eff)},
            {"c_oxdep_F_per_m", cox},
            {"imd", imd},
            {"z_cond", z},
            {"ground_condition", m.ground_condition}};
}

} // namespace tsvnet

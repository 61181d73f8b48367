#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "em_solver.hpp"

namespace tsvnet {

// Cross-section areas of the square thermal unit cell (um^2).
struct UnitCellAreas {
    double via = 0, liner = 0, substrate = 0;
    double total() const { return via + liner + substrate; }
};

inline UnitCellAreas unit_cell_areas(const GeometryMaterials& g) {
    detail::require(g.r_cond > 0 && g.t_ins >= 0, "unit_cell_areas: r_cond must be > 0, t_ins >= 0");
    const double r = g.r_cond, a = g.cell_half();
    return {constants::pi * r * r, constants::pi * (a * a - r * r), a * a * (4.0 - constants::pi)};
}

inline double vertical_unit_etc(const GeometryMaterials& g) {
    const auto s = unit_cell_areas(g);
    const double a = g.cell_half();
    return (g.k_v * s.via + g.k_l * s.liner + g.k_s * s.substrate) / (4.0 * a * a);
}

inline double volumetric_heat_capacity(const GeometryMaterials& g) {
    const auto s = unit_cell_areas(g);
    const double a = g.cell_half();
    return (g.rho_v * g.cp_v * s.via + g.rho_l * g.cp_l * s.liner + g.rho_s * g.cp_s * s.substrate) / (4.0 * a * a);
}

namespace detail {
    // 1 / (W_v/k_v + W_l/k_l + W_s/k_s) at offset x from the via axis.
    inline double lateral_integrand(const GeometryMaterials& g, double x) {
        const double r = g.r_cond, a = g.cell_half();
        const double wv = 2.0 * std::sqrt(std::max(r * r - x * x, 0.0));
        const double wl = 2.0 * std::sqrt(std::max(a * a - x * x, 0.0)) - wv;
        const double ws = 2.0 * a - wv - wl;
        return 1.0 / (wv / g.k_v + wl / g.k_l + ws / g.k_s);
    }

    inline double simpson(auto&& f, double lo, double hi, std::size_t panels) {
        if (panels % 2) ++panels;
        const double h = (hi - lo) / static_cast<double>(panels);
        double acc = f(lo) + f(hi);
        for (std::size_t i = 1; i < panels; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(lo + h * static_cast<double>(i));
        return acc * h / 3.0;
    }

    // Integral of the strip conductance over the half cell [0, r + t]. The
    // chord widths have square-root kinks at x = r and x = r + t; the
    // substitutions x = r sin(u) and x = (r + t) sin(u) make each piece smooth.
    inline double lateral_half_integral(const GeometryMaterials& g, std::size_t panels) {
        const double r = g.r_cond, a = g.cell_half();
        const std::size_t half = std::max<std::size_t>(2, panels / 2);
        const double inner = simpson([&](double u) { return lateral_integrand(g, r * std::sin(u)) * r * std::cos(u); },
                                     0.0, constants::pi / 2, half);
        if (a <= r) return inner;
        const double u0 = std::asin(r / a);
        const double outer = simpson(
            [&](double u) { return lateral_integrand(g, a * std::sin(u)) * a * std::cos(u); }, u0, constants::pi / 2, half);
        return inner + outer;
    }
}

// Lateral unit-cell conductivity from the strip integral. Strips across the
// full cell pair up symmetrically about the axis, so the half-cell integral is
// doubled; flow length equals cell width, which makes the result a
// conductivity (uniform material gives exactly k).
inline double lateral_unit_etc(const GeometryMaterials& g, std::size_t panels = 1000) {
    const double fine = detail::lateral_half_integral(g, panels);
    const double coarse = detail::lateral_half_integral(g, panels / 2);
    const double richardson = std::abs(fine - coarse) / 15.0;
    if (richardson > 1e-6 * std::abs(fine))
        throw SolverError("lateral_unit_etc: quadrature did not converge");
    return 2.0 * fine;
}

// a || b = ab / (a + b).
inline double series(double a, double b) { return (a + b) > 0 ? a * b / (a + b) : 0.0; }

// Homogenised anisotropic block. x runs along columns (span w_s, N cells),
// y along rows (span l_s, M cells), z along the TSV axis.
struct ThermalBlock {
    double k_x = 0, k_y = 0, k_z = 0;  // W/mK
    double rho_cp = 0;                 // J/(m^3 K), whole block
    double k_cell_lateral = 0, k_cell_vertical = 0, rho_cp_cell = 0;
    double l_s = 0, w_s = 0, height = 0;  // um
    double f_occ = 0;
    double footprint = 0;  // effective unit-cell side, um
    std::size_t rows = 0, cols = 0, n_tsv = 0;
    double pitch = 0;

    // Centre of a grid cell inside the block (um); the array is centred.
    std::pair<double, double> cell_center(std::size_t cell) const {
        const double r = static_cast<double>(cell / cols), c = static_cast<double>(cell % cols);
        const double ox = 0.5 * (w_s - static_cast<double>(cols) * pitch);
        const double oy = 0.5 * (l_s - static_cast<double>(rows) * pitch);
        return {ox + (c + 0.5) * pitch, oy + (r + 0.5) * pitch};
    }
};

// Array-level conductivities for an explicit unit-cell footprint side.
inline ThermalBlock array_etc_with_footprint(const TsvLayout& x, const GeometryMaterials& g, double footprint) {
    ThermalBlock b;
    b.rows = x.rows();
    b.cols = x.cols();
    b.pitch = g.p_int;
    b.n_tsv = x.tsv_count();
    b.f_occ = x.occupancy();
    b.l_s = g.span_rows(x.rows());
    b.w_s = g.span_cols(x.cols());
    b.height = g.h_int;
    b.footprint = footprint;
    const double m = static_cast<double>(x.rows()), n = static_cast<double>(x.cols());
    detail::require(b.l_s >= m * g.p_int * (1 - 1e-12) && b.w_s >= n * g.p_int * (1 - 1e-12),
                    "array_etc: substrate span smaller than the TSV array");
    detail::require(n * footprint < b.w_s && m * footprint < b.l_s, "array_etc: footprint exceeds substrate span");

    b.k_cell_vertical = vertical_unit_etc(g);
    b.k_cell_lateral = lateral_unit_etc(g);
    b.rho_cp_cell = volumetric_heat_capacity(g);

    const double cell_area = 4.0 * g.cell_half() * g.cell_half();
    const double tsv_fraction = cell_area * static_cast<double>(b.n_tsv) / (b.l_s * b.w_s);
    if (b.n_tsv == 0) {
        b.k_x = b.k_y = b.k_z = g.k_s;
    } else {
        const double w_eff = footprint, l_eff = footprint;
        b.k_x = series(g.k_s * (b.w_s - n * w_eff) / b.w_s, b.k_cell_lateral * n * b.l_s * w_eff / (m * l_eff * b.w_s));
        b.k_y = series(g.k_s * (b.l_s - m * l_eff) / b.l_s, b.k_cell_lateral * m * b.w_s * l_eff / (n * b.l_s * w_eff));
        b.k_z = g.k_s + tsv_fraction * (b.k_cell_vertical - g.k_s);
    }
    b.rho_cp = tsv_fraction * b.rho_cp_cell + (1.0 - tsv_fraction) * g.rho_s * g.cp_s;
    return b;
}

// Footprint scaled by sqrt(f_occ) so the total TSV area is preserved.
inline ThermalBlock array_etc(const TsvLayout& x, const GeometryMaterials& g) {
    return array_etc_with_footprint(x, g, 2.0 * g.cell_half() * std::sqrt(x.occupancy()));
}

// rho(T) = rho0 [1 + alpha (T - T0)].
inline double copper_resistivity(double t_kelvin) {
    detail::require(t_kelvin > 0, "copper_resistivity: temperature must be > 0");
    constexpr double rho0 = 1.7e-8, alpha = 3.9e-3, t0 = 300.0;
    return rho0 * (1.0 + alpha * (t_kelvin - t0));
}

// ---------------------------------------------------------------------------
struct BoundaryCondition {
    enum class Kind { Adiabatic, Convection } kind = Kind::Adiabatic;
    double h = 0.0;       // W/m^2K
    double t_inf = 300.0; // K

    static BoundaryCondition adiabatic() { return {}; }
    static BoundaryCondition convection(double h, double t_inf) { return {Kind::Convection, h, t_inf}; }
};

enum Face : std::size_t { XMin, XMax, YMin, YMax, Bottom, Top };

struct TsvSource {
    std::size_t cell = 0;
    double power = 0.0;       // W
    double generation = 0.0;  // W/m^3 over the conductor volume
};

struct HeatSourceField {
    std::vector<TsvSource> sources;
    double t_amb = 300.0;
    std::array<BoundaryCondition, 6> faces{};

    double total_power() const {
        double p = 0;
        for (const auto& s : sources) p += s.power;
        return p;
    }
};

enum class ThermalPreset { NaturalFull, NaturalSparse, ForcedTop };

inline const char* name(ThermalPreset p) {
    switch (p) {
    case ThermalPreset::NaturalFull: return "natural-full";
    case ThermalPreset::NaturalSparse: return "natural-sparse";
    case ThermalPreset::ForcedTop: return "forced-top";
    }
    return "?";
}

inline ThermalPreset preset_from_name(const std::string& s) {
    if (s == "natural-full") return ThermalPreset::NaturalFull;
    if (s == "natural-sparse") return ThermalPreset::NaturalSparse;
    if (s == "forced-top") return ThermalPreset::ForcedTop;
    throw ValidationError("unknown thermal scenario '" + s + "' (natural-full, natural-sparse, forced-top)");
}

// Natural convection (10 W/m^2K) on every face but an adiabatic bottom, or
// forced convection (500 W/m^2K) on the top face only.
inline std::array<BoundaryCondition, 6> preset_faces(ThermalPreset p, double t_amb) {
    std::array<BoundaryCondition, 6> f{};
    if (p == ThermalPreset::ForcedTop) {
        f[Top] = BoundaryCondition::convection(500.0, t_amb);
        return f;
    }
    for (auto face : {XMin, XMax, YMin, YMax, Top}) f[face] = BoundaryCondition::convection(10.0, t_amb);
    return f;
}

// Dissipated power per excited port from the column deficit of |S|^2.
inline HeatSourceField heat_sources_from_s(const SParameterBlock& s, double f, double p_in,
                                           const std::vector<std::size_t>& excited_ports, const GeometryMaterials& g) {
    detail::require(p_in > 0, "heat_sources_from_s: P_in must be > 0");
    const auto fi = s.frequency_index(f);
    const auto& m = s.data[fi];
    const double vol = constants::pi * std::pow(g.r_cond * constants::um, 2) * g.h_int * constants::um;
    HeatSourceField out;
    for (auto j : excited_ports) {
        detail::require(j < s.port_count(), "heat_sources_from_s: excited port out of range");
        const double transmitted = m.col(static_cast<Eigen::Index>(j)).cwiseAbs2().sum();
        double deficit = 1.0 - transmitted;
        if (deficit < -1e-9) throw SolverError("heat_sources_from_s: passivity violation on port " + std::to_string(j));
        deficit = std::max(deficit, 0.0);
        const double p_loss = p_in * deficit;
        const auto cell = s.ports[j].cell;
        auto it = std::find_if(out.sources.begin(), out.sources.end(), [&](const TsvSource& t) { return t.cell == cell; });
        if (it == out.sources.end()) {
            out.sources.push_back({cell, 0.0, 0.0});
            it = std::prev(out.sources.end());
        }
        it->power += p_loss;
        it->generation += p_loss / vol;
    }
    return out;
}

// ---------------------------------------------------------------------------
struct ThermalResolution {
    std::size_t nx = 41, ny = 41, nz = 21;
};

struct TemperatureField {
    std::size_t nx = 0, ny = 0, nz = 0;
    double dx = 0, dy = 0, dz = 0;  // um
    std::vector<double> t;          // K, index (k * ny + j) * nx + i
    double t_max = 0;
    double residual = 0;  // ||b - A T|| / ||b||
    std::size_t iterations = 0;
    double heat_in = 0;   // W
    double heat_out = 0;  // W through convective faces

    double at(std::size_t i, std::size_t j, std::size_t k) const { return t[(k * ny + j) * nx + i]; }
};

namespace detail {
    inline double overlap(double a0, double a1, double b0, double b1) {
        return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
    }

    // Preconditioned CG with Jacobi plus an additive correction on the
    // constant vector, which is the slow mode when the boundary film
    // coefficients are small compared with conduction.
    inline std::size_t pcg(const Eigen::SparseMatrix<double, Eigen::RowMajor>& a, const Vec& b, Vec& x, double tol,
                           std::size_t max_iter, double& rel_res) {
        const Vec dinv = a.diagonal().cwiseInverse();
        const double ones_a_ones = (a * Vec::Ones(a.rows())).sum();
        auto precond = [&](const Vec& r) -> Vec {
            Vec z = dinv.cwiseProduct(r);
            if (ones_a_ones > 0) z.array() += r.sum() / ones_a_ones;
            return z;
        };
        const double bn = b.norm();
        if (bn == 0) {
            x.setZero();
            rel_res = 0;
            return 0;
        }
        Vec r = b - a * x;
        Vec z = precond(r);
        Vec p = z;
        double rz = r.dot(z);
        std::size_t it = 0;
        for (; it < max_iter; ++it) {
            rel_res = r.norm() / bn;
            if (rel_res < tol) return it;
            const Vec ap = a * p;
            const double alpha = rz / p.dot(ap);
            x += alpha * p;
            r -= alpha * ap;
            z = precond(r);
            const double rz_new = r.dot(z);
            p = z + (rz_new / rz) * p;
            rz = rz_new;
        }
        rel_res = (b - a * x).norm() / bn;
        return it;
    }
}

// Steady conduction div(K grad T) + G = 0 on the homogenised block with a
// vertex-centred 7-point finite-volume stencil and Robin faces.
inline TemperatureField solve_steady_state(const ThermalBlock& blk, const HeatSourceField& src,
                                           const ThermalResolution& res = {}) {
    detail::require(res.nx >= 2 && res.ny >= 2 && res.nz >= 2, "solve_steady_state: need at least 2 nodes per axis");
    bool any_conv = false;
    for (const auto& f : src.faces) {
        if (f.kind == BoundaryCondition::Kind::Convection) {
            detail::require(f.h > 0, "solve_steady_state: convection coefficient must be > 0");
            any_conv = true;
        }
    }
    for (const auto& s : src.sources) detail::require(s.power >= 0, "solve_steady_state: negative heat source");
    if (!any_conv) throw SolverError("solve_steady_state: all faces adiabatic; steady problem is singular");

    const double um = constants::um;
    const double lx = blk.w_s * um, ly = blk.l_s * um, lz = blk.height * um;
    TemperatureField out;
    out.nx = res.nx;
    out.ny = res.ny;
    out.nz = res.nz;
    const double dx = lx / static_cast<double>(res.nx - 1), dy = ly / static_cast<double>(res.ny - 1),
                 dz = lz / static_cast<double>(res.nz - 1);
    out.dx = dx / um;
    out.dy = dy / um;
    out.dz = dz / um;
    const auto nx = res.nx, ny = res.ny, nz = res.nz;
    const std::size_t n = nx * ny * nz;
    auto id = [&](std::size_t i, std::size_t j, std::size_t k) { return static_cast<Eigen::Index>((k * ny + j) * nx + i); };
    auto cv = [](std::size_t i, std::size_t count, double h) { return (i == 0 || i + 1 == count) ? h / 2 : h; };

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(n * 7);
    Vec b = Vec::Zero(static_cast<Eigen::Index>(n));
    Vec diag = Vec::Zero(static_cast<Eigen::Index>(n));
    auto link = [&](Eigen::Index p, Eigen::Index q, double c) {
        trip.emplace_back(p, q, -c);
        trip.emplace_back(q, p, -c);
        diag(p) += c;
        diag(q) += c;
    };
    // Unknown is T - t_amb.
    auto robin = [&](Eigen::Index p, const BoundaryCondition& bc, double area) {
        if (bc.kind != BoundaryCondition::Kind::Convection) return;
        diag(p) += bc.h * area;
        b(p) += bc.h * area * (bc.t_inf - src.t_amb);
    };

    for (std::size_t k = 0; k < nz; ++k)
        for (std::size_t j = 0; j < ny; ++j)
            for (std::size_t i = 0; i < nx; ++i) {
                const auto p = id(i, j, k);
                const double cx = cv(i, nx, dx), cy = cv(j, ny, dy), cz = cv(k, nz, dz);
                if (i + 1 < nx) link(p, id(i + 1, j, k), blk.k_x * cy * cz / dx);
                if (j + 1 < ny) link(p, id(i, j + 1, k), blk.k_y * cx * cz / dy);
                if (k + 1 < nz) link(p, id(i, j, k + 1), blk.k_z * cx * cy / dz);
                if (i == 0) robin(p, src.faces[XMin], cy * cz);
                if (i + 1 == nx) robin(p, src.faces[XMax], cy * cz);
                if (j == 0) robin(p, src.faces[YMin], cx * cz);
                if (j + 1 == ny) robin(p, src.faces[YMax], cx * cz);
                if (k == 0) robin(p, src.faces[Bottom], cx * cy);
                if (k + 1 == nz) robin(p, src.faces[Top], cx * cy);
            }
    for (Eigen::Index p = 0; p < static_cast<Eigen::Index>(n); ++p) trip.emplace_back(p, p, diag(p));

    // Each source spreads over its footprint column; weights are exact
    // control-volume overlaps, so the injected power is preserved.
    const double half = 0.5 * blk.footprint * um;
    for (const auto& s : src.sources) {
        if (s.power <= 0) continue;
        auto [cxu, cyu] = blk.cell_center(s.cell);
        const double x0 = cxu * um - half, x1 = cxu * um + half, y0 = cyu * um - half, y1 = cyu * um + half;
        const double density = s.power / ((x1 - x0) * (y1 - y0) * lz);
        for (std::size_t k = 0; k < nz; ++k) {
            const double zc = static_cast<double>(k) * dz;
            const double wz = detail::overlap(zc - dz / 2, zc + dz / 2, 0.0, lz);
            for (std::size_t j = 0; j < ny; ++j) {
                const double yc = static_cast<double>(j) * dy;
                const double wy = detail::overlap(yc - dy / 2, yc + dy / 2, std::max(y0, 0.0), std::min(y1, ly));
                if (wy <= 0) continue;
                for (std::size_t i = 0; i < nx; ++i) {
                    const double xc = static_cast<double>(i) * dx;
                    const double wx = detail::overlap(xc - dx / 2, xc + dx / 2, std::max(x0, 0.0), std::min(x1, lx));
                    if (wx > 0) b(id(i, j, k)) += density * wx * wy * wz;
                }
            }
        }
    }

    Eigen::SparseMatrix<double, Eigen::RowMajor> a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    a.setFromTriplets(trip.begin(), trip.end());
    Vec theta = Vec::Zero(static_cast<Eigen::Index>(n));
    double rel = 0;
    out.iterations = detail::pcg(a, b, theta, 1e-11, 20000, rel);
    out.residual = rel;
    if (!(rel < 1e-8))
        throw SolverError("solve_steady_state: CG did not converge (relative residual " + std::to_string(rel) + ")");

    out.t.resize(n);
    for (std::size_t p = 0; p < n; ++p) out.t[p] = theta(static_cast<Eigen::Index>(p)) + src.t_amb;
    out.t_max = *std::max_element(out.t.begin(), out.t.end());

    out.heat_in = 0;
    for (std::size_t k = 0; k < nz; ++k)
        for (std::size_t j = 0; j < ny; ++j)
            for (std::size_t i = 0; i < nx; ++i) {
                const double cx = cv(i, nx, dx), cy = cv(j, ny, dy), cz = cv(k, nz, dz);
                const double tt = out.at(i, j, k);
                auto flux = [&](const BoundaryCondition& bc, double area) {
                    if (bc.kind == BoundaryCondition::Kind::Convection) out.heat_out += bc.h * area * (tt - bc.t_inf);
                };
                if (i == 0) flux(src.faces[XMin], cy * cz);
                if (i + 1 == nx) flux(src.faces[XMax], cy * cz);
                if (j == 0) flux(src.faces[YMin], cx * cz);
                if (j + 1 == ny) flux(src.faces[YMax], cx * cz);
                if (k == 0) flux(src.faces[Bottom], cx * cy);
                if (k + 1 == nz) flux(src.faces[Top], cx * cy);
            }
    out.heat_in = src.total_power();
    return out;
}

inline void write_temperature_csv(std::ostream& os, const TemperatureField& f) {
    os << "x_um,y_um,z_um,T_K\n";
    os << std::setprecision(10);
    for (std::size_t k = 0; k < f.nz; ++k)
        for (std::size_t j = 0; j < f.ny; ++j)
            for (std::size_t i = 0; i < f.nx; ++i)
                os << static_cast<double>(i) * f.dx << ',' << static_cast<double>(j) * f.dy << ','
                   << static_cast<double>(k) * f.dz << ',' << f.at(i, j, k) << '\n';
}

// ---------------------------------------------------------------------------
struct Excitation {
    double frequency = 15e9;
    double power = 0.1;                      // W per excited port
    std::vector<std::size_t> excited_ports;  // default: top port of the first signal
    double t_amb = 300.0;
    std::array<BoundaryCondition, 6> faces = preset_faces(ThermalPreset::NaturalFull, 300.0);
    ThermalResolution resolution{};
    std::size_t max_iterations = 20;
    double tolerance = 0.1;  // K on T_max
    std::size_t workers = 1;
};

struct ElectrothermalResult {
    TemperatureField field;
    SParameterBlock s;
    ThermalBlock block;
    HeatSourceField sources;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<double> t_max_history;  // after each iteration
    std::vector<double> delta_history;  // |T_max(k) - T_max(k-1)|, T_max(0) = t_amb
    std::vector<double> sigma_history;  // copper conductivity used in each iteration
};

// Electrical solve at the current copper conductivity, heat extraction,
// thermal solve, conductivity update from the peak temperature; repeat.
inline ElectrothermalResult electrothermal_fixed_point(const TsvLayout& x, const GeometryMaterials& g,
                                                       const FrequencyGrid& grid, const Excitation& ex) {
    detail::require(x.electrically_solvable(), "electrothermal: layout needs a signal and a ground TSV");
    detail::require(grid.find(ex.frequency).has_value(), "electrothermal: excitation frequency not on the grid");
    ElectrothermalResult out;
    out.block = array_etc(x, g);
    auto ports = ex.excited_ports;
    if (ports.empty()) ports.push_back(0);

    GeometryMaterials cur = g;
    double prev = ex.t_amb;
    std::size_t growing = 0;
    for (std::size_t it = 1; it <= ex.max_iterations; ++it) {
        out.sigma_history.push_back(cur.sigma_cu);
        SolveOptions so;
        so.workers = ex.workers;
        out.s = solve_sweep(x, cur, grid, so);
        if (ex.power > 0) {
            out.sources = heat_sources_from_s(out.s, ex.frequency, ex.power, ports, cur);
        } else {
            out.sources = HeatSourceField{};
        }
        out.sources.t_amb = ex.t_amb;
        out.sources.faces = ex.faces;
        out.field = solve_steady_state(out.block, out.sources, ex.resolution);
        const double delta = std::abs(out.field.t_max - prev);
        if (!out.delta_history.empty() && delta > out.delta_history.back()) {
            if (++growing >= 3)
                throw SolverError("electrothermal: diverging (|dT_max| grew for 3 consecutive iterations)");
        } else {
            growing = 0;
        }
        out.t_max_history.push_back(out.field.t_max);
        out.delta_history.push_back(delta);
        out.iterations = it;
        prev = out.field.t_max;
        if (delta < ex.tolerance) {
            out.converged = true;
            break;
        }
        cur.sigma_cu = 1.0 / copper_resistivity(out.field.t_max);
    }
    return out;
}

} // namespace tsvnet

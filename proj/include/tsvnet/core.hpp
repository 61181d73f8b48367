#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "error.hpp"

namespace tsvnet {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using Complex = std::complex<double>;

namespace constants {
    inline constexpr double pi = std::numbers::pi;
    inline constexpr double mu0 = 1.25663706212e-6;    // H/m
    inline constexpr double eps0 = 8.8541878128e-12;   // F/m
    inline constexpr double boltzmann = 1.380649e-23;  // J/K
    inline constexpr double charge = 1.602176634e-19;  // C
    inline constexpr double um = 1e-6;
}

enum class Role : std::int8_t { Ground = -1, Empty = 0, Signal = 1 };

// Rectangular TSV grid, row-major: index = row * cols + col.
class TsvLayout {
public:
    TsvLayout() = default;
    TsvLayout(std::size_t rows, std::size_t cols, std::vector<Role> roles)
        : rows_(rows), cols_(cols), roles_(std::move(roles)) {
        detail::require(rows_ > 0 && cols_ > 0, "layout: rows and cols must be positive");
        detail::require(roles_.size() == rows_ * cols_,
                        "layout: roles length " + std::to_string(roles_.size()) + " != rows*cols " +
                            std::to_string(rows_ * cols_));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t cells() const { return roles_.size(); }
    bool square() const { return rows_ == cols_; }

    Role role(std::size_t idx) const { return roles_.at(idx); }
    Role role(std::size_t r, std::size_t c) const { return roles_.at(r * cols_ + c); }
    const std::vector<Role>& roles() const { return roles_; }

    std::size_t index(std::size_t r, std::size_t c) const { return r * cols_ + c; }
    std::size_t row_of(std::size_t idx) const { return idx / cols_; }
    std::size_t col_of(std::size_t idx) const { return idx % cols_; }

    std::size_t count(Role r) const {
        return static_cast<std::size_t>(std::count(roles_.begin(), roles_.end(), r));
    }
    std::size_t signal_count() const { return count(Role::Signal); }
    std::size_t ground_count() const { return count(Role::Ground); }
    std::size_t tsv_count() const { return cells() - count(Role::Empty); }
    double occupancy() const { return static_cast<double>(tsv_count()) / static_cast<double>(cells()); }

    std::vector<std::size_t> indices_of(Role r) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < roles_.size(); ++i)
            if (roles_[i] == r) out.push_back(i);
        return out;
    }
    std::vector<std::size_t> signal_indices() const { return indices_of(Role::Signal); }
    std::vector<std::size_t> ground_indices() const { return indices_of(Role::Ground); }
    std::vector<std::size_t> occupied_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < roles_.size(); ++i)
            if (roles_[i] != Role::Empty) out.push_back(i);
        return out;
    }

    // An electrical solve needs at least one signal and one return path.
    bool electrically_solvable() const { return signal_count() >= 1 && ground_count() >= 1; }

    friend bool operator==(const TsvLayout&, const TsvLayout&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Role> roles_;
};

inline TsvLayout build_layout(std::size_t rows, std::size_t cols, const std::vector<std::size_t>& signal_cells,
                              const std::vector<std::size_t>& ground_cells) {
    detail::require(rows > 0 && cols > 0, "build_layout: rows and cols must be positive");
    const std::size_t n = rows * cols;
    std::vector<Role> roles(n, Role::Empty);
    auto assign = [&](const std::vector<std::size_t>& cells, Role r, const char* name) {
        for (auto i : cells) {
            detail::require(i < n, std::string("build_layout: ") + name + " index " + std::to_string(i) +
                                       " out of range for " + std::to_string(n) + " cells");
            detail::require(roles[i] == Role::Empty || roles[i] == r,
                            "build_layout: cell " + std::to_string(i) + " is both signal and ground");
            roles[i] = r;
        }
    };
    assign(signal_cells, Role::Signal, "signal");
    assign(ground_cells, Role::Ground, "ground");
    return TsvLayout(rows, cols, std::move(roles));
}

// ---------------------------------------------------------------------------
// Geometry and materials. Lengths in micrometres, everything else SI unless
// the field name says otherwise.
struct GeometryMaterials {
    double r_cond = 5.0;      // conductor radius
    double p_int = 60.0;      // pitch
    double h_int = 100.0;     // TSV height
    double t_ins = 0.5;       // oxide liner thickness
    double h_imd = 1.0;       // inter-metal dielectric height
    double l_s = 0.0;         // substrate span along rows (0: rows * pitch)
    double w_s = 0.0;         // substrate span along cols (0: cols * pitch)

    double sigma_s = 10.0;     // S/m
    double sigma_cu = 5.8e7;   // S/m
    double eps_s = 11.9;
    double eps_ins = 4.0;
    double eps_imd = 4.0;
    double mu_r_cond = 1.0;
    double n_a = 1e15;         // cm^-3
    double n_i = 1.45e10;      // cm^-3
    double temperature = 300.0;

    double k_v = 400.0, k_l = 1.4, k_s = 150.0;              // W/mK
    double rho_v = 8960.0, rho_l = 2200.0, rho_s = 2329.0;   // kg/m^3
    double cp_v = 385.0, cp_l = 730.0, cp_s = 700.0;         // J/kgK

    double cell_half() const { return r_cond + t_ins; }
    double span_rows(std::size_t rows) const { return l_s > 0 ? l_s : static_cast<double>(rows) * p_int; }
    double span_cols(std::size_t cols) const { return w_s > 0 ? w_s : static_cast<double>(cols) * p_int; }

    void validate() const {
        auto pos = [](double v, const char* name) {
            detail::require(std::isfinite(v) && v > 0, std::string("geometry: ") + name + " must be > 0");
        };
        pos(r_cond, "r_cond");
        pos(p_int, "p_int");
        pos(h_int, "h_int");
        pos(t_ins, "t_ins");
        pos(h_imd, "h_imd");
        pos(sigma_s, "sigma_s");
        pos(sigma_cu, "sigma_cu");
        pos(eps_s, "eps_s");
        pos(eps_ins, "eps_ins");
        pos(eps_imd, "eps_imd");
        pos(mu_r_cond, "mu_r_cond");
        pos(n_i, "n_i");
        pos(temperature, "temperature");
        pos(k_v, "k_v");
        pos(k_l, "k_l");
        pos(k_s, "k_s");
        pos(rho_v, "rho_v");
        pos(rho_l, "rho_l");
        pos(rho_s, "rho_s");
        pos(cp_v, "cp_v");
        pos(cp_l, "cp_l");
        pos(cp_s, "cp_s");
        detail::require(l_s >= 0 && w_s >= 0, "geometry: substrate spans must be >= 0");
        detail::require(n_a > n_i, "geometry: n_a must exceed n_i");
        detail::require(t_ins < p_int / 2 - r_cond,
                        "geometry: t_ins must be < p_int/2 - r_cond (liners of neighbours overlap)");
    }
};

inline void to_json(nlohmann::json& j, const GeometryMaterials& g) {
    j = nlohmann::json{{"r_cond", g.r_cond},   {"p_int", g.p_int},       {"h_int", g.h_int},
                       {"t_ins", g.t_ins},     {"h_imd", g.h_imd},       {"l_s", g.l_s},
                       {"w_s", g.w_s},         {"sigma_s", g.sigma_s},   {"sigma_cu", g.sigma_cu},
                       {"eps_s", g.eps_s},     {"eps_ins", g.eps_ins},   {"eps_imd", g.eps_imd},
                       {"mu_r_cond", g.mu_r_cond}, {"n_a", g.n_a},       {"n_i", g.n_i},
                       {"temperature", g.temperature}, {"k_v", g.k_v},   {"k_l", g.k_l},
                       {"k_s", g.k_s},         {"rho_v", g.rho_v},       {"rho_l", g.rho_l},
                       {"rho_s", g.rho_s},     {"cp_v", g.cp_v},         {"cp_l", g.cp_l},
                       {"cp_s", g.cp_s}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, GeometryMaterials& g) {
    nlohmann::json ref;
    to_json(ref, g);
    detail::require(j.is_object(), "geometry: expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        detail::require(ref.contains(it.key()), "geometry: unknown parameter '" + it.key() + "'");
    ref.update(j);
    g.r_cond = ref["r_cond"];
    g.p_int = ref["p_int"];
    g.h_int = ref["h_int"];
    g.t_ins = ref["t_ins"];
    g.h_imd = ref["h_imd"];
    g.l_s = ref["l_s"];
    g.w_s = ref["w_s"];
    g.sigma_s = ref["sigma_s"];
    g.sigma_cu = ref["sigma_cu"];
    g.eps_s = ref["eps_s"];
    g.eps_ins = ref["eps_ins"];
    g.eps_imd = ref["eps_imd"];
    g.mu_r_cond = ref["mu_r_cond"];
    g.n_a = ref["n_a"];
    g.n_i = ref["n_i"];
    g.temperature = ref["temperature"];
    g.k_v = ref["k_v"];
    g.k_l = ref["k_l"];
    g.k_s = ref["k_s"];
    g.rho_v = ref["rho_v"];
    g.rho_l = ref["rho_l"];
    g.rho_s = ref["rho_s"];
    g.cp_v = ref["cp_v"];
    g.cp_l = ref["cp_l"];
    g.cp_s = ref["cp_s"];
}

// ---------------------------------------------------------------------------
class FrequencyGrid {
public:
    FrequencyGrid() = default;
    explicit FrequencyGrid(std::vector<double> hz) : points_(std::move(hz)) {
        detail::require(!points_.empty(), "frequency grid: empty");
        for (std::size_t i = 0; i < points_.size(); ++i) {
            detail::require(std::isfinite(points_[i]) && points_[i] > 0, "frequency grid: points must be > 0");
            if (i > 0) detail::require(points_[i] > points_[i - 1], "frequency grid: must be strictly increasing");
        }
    }

    static FrequencyGrid linear(double f_start, double f_stop, std::size_t count) {
        detail::require(count >= 1, "frequency grid: count must be >= 1");
        if (count == 1) return FrequencyGrid({f_start});
        std::vector<double> pts(count);
        for (std::size_t i = 0; i < count; ++i)
            pts[i] = f_start + (f_stop - f_start) * static_cast<double>(i) / static_cast<double>(count - 1);
        return FrequencyGrid(std::move(pts));
    }

    // 100 points, 1 to 100 GHz.
    static FrequencyGrid default_sweep() { return linear(1e9, 100e9, 100); }

    std::size_t size() const { return points_.size(); }
    double operator[](std::size_t i) const { return points_[i]; }
    const std::vector<double>& points() const { return points_; }

    std::optional<std::size_t> find(double f, double rel_tol = 1e-9) const {
        for (std::size_t i = 0; i < points_.size(); ++i)
            if (std::abs(points_[i] - f) <= rel_tol * f) return i;
        return std::nullopt;
    }

    friend bool operator==(const FrequencyGrid&, const FrequencyGrid&) = default;

private:
    std::vector<double> points_;
};

// ---------------------------------------------------------------------------
// D4: identity, three clockwise rotations, reflections about the vertical,
// horizontal, main-diagonal and anti-diagonal axes.
enum class D4Transform : std::uint8_t {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipVertical,
    FlipHorizontal,
    Transpose,
    AntiTranspose
};

inline constexpr std::array<D4Transform, 8> all_d4 = {
    D4Transform::Identity,     D4Transform::Rot90,          D4Transform::Rot180,    D4Transform::Rot270,
    D4Transform::FlipVertical, D4Transform::FlipHorizontal, D4Transform::Transpose, D4Transform::AntiTranspose};

inline const char* name(D4Transform t) {
    switch (t) {
    case D4Transform::Identity: return "identity";
    case D4Transform::Rot90: return "rot90";
    case D4Transform::Rot180: return "rot180";
    case D4Transform::Rot270: return "rot270";
    case D4Transform::FlipVertical: return "flip-vertical";
    case D4Transform::FlipHorizontal: return "flip-horizontal";
    case D4Transform::Transpose: return "transpose";
    case D4Transform::AntiTranspose: return "anti-transpose";
    }
    return "?";
}

inline bool needs_square(D4Transform t) {
    return t == D4Transform::Rot90 || t == D4Transform::Rot270 || t == D4Transform::Transpose ||
           t == D4Transform::AntiTranspose;
}

// Destination cell of (r, c) under t on a rows x cols grid.
inline std::pair<std::size_t, std::size_t> d4_map(D4Transform t, std::size_t rows, std::size_t cols, std::size_t r,
                                                  std::size_t c) {
    const std::size_t lr = rows - 1, lc = cols - 1;
    switch (t) {
    case D4Transform::Identity: return {r, c};
    case D4Transform::Rot90: return {c, lr - r};
    case D4Transform::Rot180: return {lr - r, lc - c};
    case D4Transform::Rot270: return {lc - c, r};
    case D4Transform::FlipVertical: return {r, lc - c};
    case D4Transform::FlipHorizontal: return {lr - r, c};
    case D4Transform::Transpose: return {c, r};
    case D4Transform::AntiTranspose: return {lc - c, lr - r};
    }
    return {r, c};
}

// perm[i] = destination index of cell i.
inline std::vector<std::size_t> d4_permutation(D4Transform t, std::size_t rows, std::size_t cols) {
    if (needs_square(t) && rows != cols)
        throw ValidationError(std::string("apply_d4: ") + name(t) + " requires a square grid");
    std::vector<std::size_t> perm(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            auto [nr, nc] = d4_map(t, rows, cols, r, c);
            perm[r * cols + c] = nr * cols + nc;
        }
    return perm;
}

// Element equal to "apply a, then b" (checked on a 3x3 probe grid).
inline D4Transform compose(D4Transform a, D4Transform b) {
    auto pa = d4_permutation(a, 3, 3);
    auto pb = d4_permutation(b, 3, 3);
    std::vector<std::size_t> ab(9);
    for (std::size_t i = 0; i < 9; ++i) ab[i] = pb[pa[i]];
    for (auto t : all_d4)
        if (d4_permutation(t, 3, 3) == ab) return t;
    throw SolverError("compose: D4 closure violated");
}

inline TsvLayout apply_d4(const TsvLayout& x, D4Transform t) {
    auto perm = d4_permutation(t, x.rows(), x.cols());
    std::vector<Role> out(x.cells());
    for (std::size_t i = 0; i < x.cells(); ++i) out[perm[i]] = x.role(i);
    return TsvLayout(x.rows(), x.cols(), std::move(out));
}

// Lexicographically smallest role sequence over the orbit (Ground < Empty < Signal).
inline TsvLayout canonical_form(const TsvLayout& x) {
    detail::require(x.square(), "canonical_form: requires a square grid");
    TsvLayout best = x;
    for (auto t : all_d4) {
        auto y = apply_d4(x, t);
        if (std::lexicographical_compare(y.roles().begin(), y.roles().end(), best.roles().begin(), best.roles().end()))
            best = std::move(y);
    }
    return best;
}

// ---------------------------------------------------------------------------
struct DistanceMatrix {
    std::vector<std::size_t> cells;  // occupied cell indices, ascending
    Mat d;                           // micrometres
};

inline double cell_distance(const TsvLayout& x, double pitch, std::size_t a, std::size_t b) {
    const double dr = static_cast<double>(x.row_of(a)) - static_cast<double>(x.row_of(b));
    const double dc = static_cast<double>(x.col_of(a)) - static_cast<double>(x.col_of(b));
    return pitch * std::hypot(dr, dc);
}

inline DistanceMatrix pairwise_distances(const TsvLayout& x, const GeometryMaterials& g) {
    DistanceMatrix out{x.occupied_indices(), {}};
    detail::require(out.cells.size() >= 2, "pairwise_distances: fewer than 2 occupied cells");
    const auto n = static_cast<Eigen::Index>(out.cells.size());
    out.d = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            out.d(i, j) = out.d(j, i) = cell_distance(x, g.p_int, out.cells[i], out.cells[j]);
    return out;
}

// ---------------------------------------------------------------------------
// {"rows":M,"cols":N,"roles":[1,0,-1,...]}
inline nlohmann::json layout_to_json(const TsvLayout& x) {
    std::vector<int> roles;
    roles.reserve(x.cells());
    for (auto r : x.roles()) roles.push_back(static_cast<int>(r));
    return {{"rows", x.rows()}, {"cols", x.cols()}, {"roles", roles}};
}

inline TsvLayout layout_from_json(const nlohmann::json& j) {
    detail::require(j.is_object() && j.contains("rows") && j.contains("cols") && j.contains("roles"),
                    "layout: expected object with rows, cols, roles");
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    std::vector<Role> roles;
    for (const auto& v : j.at("roles")) {
        const int r = v.get<int>();
        detail::require(r >= -1 && r <= 1, "layout: role values must be in {1,0,-1}");
        roles.push_back(static_cast<Role>(r));
    }
    return TsvLayout(rows, cols, std::move(roles));
}

} // namespace tsvnet

#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "parallel.hpp"
#include "rlcg.hpp"

namespace tsvnet {

// Port k < Ns is the top end of signal ordinal k; port Ns + k its bottom end.
struct PortLabel {
    std::size_t cell = 0;
    bool top = true;
    std::string name() const { return "tsv" + std::to_string(cell) + (top ? "_top" : "_bot"); }
};

struct SParameterBlock {
    FrequencyGrid grid;
    std::vector<std::size_t> signal_cells;
    std::vector<PortLabel> ports;
    std::vector<CMat> data;  // one (2Ns x 2Ns) matrix per frequency
    double z_ref = 50.0;

    std::size_t signal_count() const { return signal_cells.size(); }
    std::size_t port_count() const { return ports.size(); }
    std::size_t top(std::size_t k) const { return k; }
    std::size_t bottom(std::size_t k) const { return signal_count() + k; }

    std::size_t frequency_index(double f) const {
        auto i = grid.find(f);
        if (!i) throw ValidationError("frequency " + std::to_string(f) + " Hz is not on the sweep grid");
        return *i;
    }
};

inline std::vector<PortLabel> make_ports(const std::vector<std::size_t>& signal_cells) {
    std::vector<PortLabel> ports;
    for (auto c : signal_cells) ports.push_back({c, true});
    for (auto c : signal_cells) ports.push_back({c, false});
    return ports;
}

// ---------------------------------------------------------------------------
struct PerUnitLength {
    CMat z;  // Ohm/m
    CMat y;  // S/m
};

// Z = diag(Z_cond) + jw L_eff; Y = D_ox (D_ox + Y_sub)^-1 Y_sub, i.e. the
// liner capacitance in series with the substrate network.
inline PerUnitLength per_unit_length_matrices(const RlcgModel& m, double omega, Complex z_cond) {
    detail::require(omega > 0, "per_unit_length_matrices: omega must be > 0");
    const Complex jw(0.0, omega);
    PerUnitLength out;
    out.z = jw * m.l_eff.cast<Complex>();
    out.z.diagonal().array() += z_cond;
    const CMat ysub = m.g_sub_eff.cast<Complex>() + jw * m.c_sub_eff.cast<Complex>();
    const CVec dox = jw * m.c_oxdep.cast<Complex>();
    CMat sum = ysub;
    sum.diagonal() += dox;
    Eigen::PartialPivLU<CMat> lu(sum);
    if (!(lu.rcond() > 1e-15)) throw SolverError("per_unit_length_matrices: singular (D_ox + Y_sub)");
    out.y = dox.asDiagonal() * lu.solve(ysub);
    out.y = (0.5 * (out.y + out.y.transpose())).eval();
    return out;
}

inline PerUnitLength per_unit_length_matrices(const RlcgModel& m, double omega) {
    return per_unit_length_matrices(m, omega, conductor_internal_impedance(omega, m.geometry));
}

// [V(0); I(0)] = [A B; C D] [V(h); I(h)], currents flowing toward +z.
struct ChainMatrix {
    CMat a, b, c, d;
    Eigen::Index size() const { return a.rows(); }
};

namespace detail {
    // sinh(x)/x
    inline Complex sinhc(Complex x) {
        if (std::abs(x) < 1e-4) {
            const Complex x2 = x * x;
            return 1.0 + x2 / 6.0 + x2 * x2 / 120.0;
        }
        return std::sinh(x) / x;
    }

    inline ChainMatrix chain_by_expm(const CMat& z, const CMat& y, double h) {
        const auto n = z.rows();
        CMat m = CMat::Zero(2 * n, 2 * n);
        m.topRightCorner(n, n) = z * h;
        m.bottomLeftCorner(n, n) = y * h;
        const CMat e = m.exp();  // exp(-M h) with M = [0 -Z; -Y 0]
        return {e.topLeftCorner(n, n), e.topRightCorner(n, n), e.bottomLeftCorner(n, n), e.bottomRightCorner(n, n)};
    }
}

// Exact chain matrix of a uniform multiconductor line of length h (m). Z and Y
// must be symmetric. Uses the eigendecomposition ZY = T diag(gamma^2) T^-1;
// falls back to scaling-and-squaring on the first-order system when T is
// too ill-conditioned.
inline ChainMatrix mtl_chain(const CMat& z, const CMat& y, double h) {
    detail::require(h > 0, "mtl_chain: h must be > 0");
    detail::require(z.rows() == z.cols() && y.rows() == y.cols() && z.rows() == y.rows(),
                    "mtl_chain: Z and Y must be square and the same size");
    const auto n = z.rows();
    const CMat zy = z * y;
    Eigen::ComplexEigenSolver<CMat> es(zy);
    if (es.info() != Eigen::Success) return detail::chain_by_expm(z, y, h);
    const CMat& t = es.eigenvectors();
    Eigen::PartialPivLU<CMat> tlu(t);
    if (!(tlu.rcond() > 1e-10)) return detail::chain_by_expm(z, y, h);
    const CMat tinv = tlu.inverse();

    CVec ch(n), sh(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Complex gh = std::sqrt(es.eigenvalues()(k)) * h;
        ch(k) = std::cosh(gh);
        sh(k) = h * detail::sinhc(gh);
    }
    ChainMatrix out;
    out.a = t * ch.asDiagonal() * tinv;
    const CMat s = t * sh.asDiagonal() * tinv;
    out.b = s * z;
    out.c = y * s;
    out.d = out.a.transpose();
    return out;
}

// Adds a shunt admittance matrix at the near (z = 0) end.
inline ChainMatrix with_near_shunt(ChainMatrix ch, const CMat& y_shunt) {
    ch.c += y_shunt * ch.a;
    ch.d += y_shunt * ch.b;
    return ch;
}

// Chain matrix to S with the same real reference impedance on every port.
// Near-end ports come first, then far-end ports.
inline CMat chain_to_s(const ChainMatrix& ch, double z_ref) {
    detail::require(z_ref > 0, "chain_to_s: z_ref must be > 0");
    const auto n = ch.size();
    const double z0 = z_ref;
    // b = Q [V2; I2], a = P [V2; I2] with P = [A+z0C, B+z0D; I, -z0 I],
    // Q = [A-z0C, B-z0D; I, z0 I]; eliminate I2 through the second block row.
    const CMat p12 = ch.b + z0 * ch.d;
    const CMat k = ch.a + ch.b / z0 + z0 * ch.c + ch.d;
    Eigen::PartialPivLU<CMat> lu(k);
    if (!(lu.rcond() > 1e-15)) throw SolverError("chain_to_s: singular conversion denominator");
    const CMat q12 = ch.b - z0 * ch.d;
    const CMat w = ch.a - z0 * ch.c + q12 / z0;

    CMat rhs(n, 2 * n);
    rhs.leftCols(n) = CMat::Identity(n, n);
    rhs.rightCols(n) = p12 / z0;
    const CMat x = lu.solve(rhs);  // [K^-1, K^-1 P12 / z0]

    CMat s(2 * n, 2 * n);
    s.topRows(n) = w * x;
    s.topRightCorner(n, n) -= q12 / z0;
    s.bottomRows(n) = 2.0 * x;
    s.bottomRightCorner(n, n) -= CMat::Identity(n, n);
    return s;
}

// Y-parameter form used by the lumped oracle: S = (I - z0 Y)(I + z0 Y)^-1.
inline CMat y_to_s(const CMat& y, double z_ref) {
    const auto n = y.rows();
    const CMat id = CMat::Identity(n, n);
    Eigen::PartialPivLU<CMat> lu((id + z_ref * y).transpose());
    if (!(lu.rcond() > 1e-15)) throw SolverError("y_to_s: singular (I + z0 Y)");
    return lu.solve((id - z_ref * y).transpose()).transpose();
}

// Shunt admittance of the IMD couplings between signal top nodes.
inline CMat imd_admittance(const RlcgModel& m, double omega) {
    const auto n = static_cast<Eigen::Index>(m.signal_count());
    Mat c = Mat::Zero(n, n);
    for (const auto& k : m.imd) {
        const auto a = static_cast<Eigen::Index>(k.a), b = static_cast<Eigen::Index>(k.b);
        c(a, a) += k.capacitance;
        c(b, b) += k.capacitance;
        c(a, b) -= k.capacitance;
        c(b, a) -= k.capacitance;
    }
    return Complex(0.0, omega) * c.cast<Complex>();
}

// ---------------------------------------------------------------------------
inline double frobenius(const CMat& a) { return a.norm(); }

inline double reciprocity_error(const CMat& s) {
    const double n = s.norm();
    return n > 0 ? (s - s.transpose()).norm() / n : 0.0;
}

// max_i (sum_j |S_ij|^2 - 1); <= 0 means passive.
inline double passivity_margin(const CMat& s) {
    detail::require(s.rows() == s.cols(), "passivity_margin: matrix must be square");
    if (s.rows() == 0) return -1.0;
    return s.cwiseAbs2().rowwise().sum().maxCoeff() - 1.0;
}

inline double rfe(const SParameterBlock& a, const SParameterBlock& b) {
    detail::require(a.grid == b.grid, "rfe: frequency grids differ");
    detail::require(a.data.size() == b.data.size(), "rfe: block counts differ");
    detail::require(a.port_count() == b.port_count(), "rfe: port counts differ");
    for (std::size_t i = 0; i < a.ports.size(); ++i)
        detail::require(a.ports[i].cell == b.ports[i].cell && a.ports[i].top == b.ports[i].top,
                        "rfe: port orderings differ");
    double num = 0.0, den = 0.0;
    for (std::size_t f = 0; f < a.data.size(); ++f) {
        num += (a.data[f] - b.data[f]).squaredNorm();
        den += b.data[f].squaredNorm();
    }
    return std::sqrt(num) / std::sqrt(den);
}

// Same metric for a single matrix pair.
inline double rfe(const CMat& a, const CMat& b) {
    detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "rfe: shape mismatch");
    return (a - b).norm() / b.norm();
}

// ---------------------------------------------------------------------------
enum class SolveMethod { Modal, Chain };

struct SolveOptions {
    double z_ref = 50.0;
    std::size_t workers = 1;
    SolveMethod method = SolveMethod::Modal;
    bool check_invariants = true;
    std::optional<std::size_t> reference;
};

namespace detail {
    // Q X Q^T for real orthogonal Q and complex X.
    inline CMat similarity(const Mat& q, const CMat& x) {
        const Mat re = q * x.real() * q.transpose();
        const Mat im = q * x.imag() * q.transpose();
        CMat out(re.rows(), re.cols());
        out.real() = re;
        out.imag() = im;
        return out;
    }

    // All per-unit-length matrices are functions of L_eff when the liner
    // capacitance is the same for every TSV:
    //   Z = z_c I + jw L,  Y = d k (d L + k I)^-1,  d = jw C_ox, k = mu0 (sigma_s + jw eps0 eps_s).
    // One real eigendecomposition of L therefore diagonalises every frequency.
    struct ModalBasis {
        Mat q;
        Vec lambda;
        Mat c_imd_modal;  // Q^T C_imd Q
        bool usable = false;
    };

    inline ModalBasis make_modal_basis(const RlcgModel& m) {
        ModalBasis mb;
        const auto n = m.c_oxdep.size();
        if (n == 0) return mb;
        if ((m.c_oxdep.array() - m.c_oxdep(0)).abs().maxCoeff() > 1e-14 * m.c_oxdep(0)) return mb;
        Eigen::SelfAdjointEigenSolver<Mat> es(m.l_eff);
        if (es.info() != Eigen::Success) return mb;
        mb.q = es.eigenvectors();
        mb.lambda = es.eigenvalues();
        const CMat cimd = imd_admittance(m, 1.0) / Complex(0.0, 1.0);
        mb.c_imd_modal = mb.q.transpose() * cimd.real() * mb.q;
        mb.usable = true;
        return mb;
    }

    inline CMat solve_modal(const RlcgModel& m, const ModalBasis& mb, std::size_t fi, double z_ref) {
        const auto& g = m.geometry;
        const double omega = 2.0 * constants::pi * m.grid[fi];
        const Complex jw(0.0, omega);
        const Complex zc = m.z_cond[fi];
        const Complex d = jw * m.c_oxdep(0);
        const Complex kappa = constants::mu0 * (g.sigma_s + jw * constants::eps0 * g.eps_s);
        const double h = g.h_int * constants::um;
        const auto n = mb.lambda.size();

        CVec ch(n), sz(n), ys(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const Complex zeta = zc + jw * mb.lambda(k);
            const Complex yk = d * kappa / (d * mb.lambda(k) + kappa);
            const Complex gh = std::sqrt(zeta * yk) * h;
            const Complex s = h * sinhc(gh);
            ch(k) = std::cosh(gh);
            sz(k) = s * zeta;
            ys(k) = yk * s;
        }
        // With diagonal A, B and the IMD shunt folded into C and D, the chain to S
        // conversion collapses onto one complex-symmetric inverse
        //   N = (diag(delta / alpha) + Yimd)^-1,  alpha = z0 ch + sz,  delta = 2 ch + sz / z0 + z0 ys
        // and every block is a diagonal scaling of N (u = 1 / alpha):
        //   S11 = 2/z0 N - I, S21 = 2 u N, S12 = S21^T, S22 = 2 z0 u N u + 2 sz u - I.
        const double z0 = z_ref;
        CVec u(n), diag(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const Complex alpha = z0 * ch(k) + sz(k);
            if (!(std::abs(alpha) > 1e-300)) throw SolverError("solve_modal: degenerate modal impedance");
            u(k) = 1.0 / alpha;
            diag(k) = (2.0 * ch(k) + sz(k) / z0 + z0 * ys(k)) * u(k);
        }
        CMat kmat = m.imd.empty() ? CMat::Zero(n, n) : CMat(jw * mb.c_imd_modal.cast<Complex>());
        kmat.diagonal() += diag;
        Eigen::PartialPivLU<CMat> lu(kmat);
        if (!(lu.rcond() > 1e-15)) throw SolverError("solve_modal: singular conversion denominator");
        CMat nm = lu.inverse();
        nm = 0.5 * (nm + nm.transpose()).eval();

        const CMat s11 = (2.0 / z0) * nm;
        const CMat s21 = 2.0 * (u.asDiagonal() * nm);
        CMat s22 = (2.0 * z0) * (u.asDiagonal() * nm * u.asDiagonal());
        s22.diagonal() += 2.0 * sz.cwiseProduct(u);
        CMat s(2 * n, 2 * n);
        s.topLeftCorner(n, n) = similarity(mb.q, s11);
        s.topLeftCorner(n, n).diagonal().array() -= 1.0;
        s.bottomLeftCorner(n, n) = similarity(mb.q, s21);
        s.topRightCorner(n, n) = s.bottomLeftCorner(n, n).transpose();
        s.bottomRightCorner(n, n) = similarity(mb.q, s22);
        s.bottomRightCorner(n, n).diagonal().array() -= 1.0;
        return s;
    }

    inline CMat solve_chain(const RlcgModel& m, std::size_t fi, double z_ref) {
        const double omega = 2.0 * constants::pi * m.grid[fi];
        const auto pul = per_unit_length_matrices(m, omega, m.z_cond[fi]);
        auto ch = mtl_chain(pul.z, pul.y, m.geometry.h_int * constants::um);
        if (!m.imd.empty()) ch = with_near_shunt(std::move(ch), imd_admittance(m, omega));
        return chain_to_s(ch, z_ref);
    }
}

inline void check_sparameter_invariants(const CMat& s, double f) {
    const double rec = reciprocity_error(s);
    if (!(rec < 1e-10))
        throw SolverError("reciprocity violated at " + std::to_string(f) + " Hz (error " + std::to_string(rec) + ")");
    const double pm = passivity_margin(s);
    if (!(pm <= 1e-9))
        throw SolverError("passivity violated at " + std::to_string(f) + " Hz (margin " + std::to_string(pm) + ")");
}

inline SParameterBlock solve_sweep(const RlcgModel& m, const SolveOptions& opt = {}) {
    SParameterBlock out;
    out.grid = m.grid;
    out.signal_cells = m.signal_cells;
    out.ports = make_ports(m.signal_cells);
    out.z_ref = opt.z_ref;
    out.data.resize(m.grid.size());

    detail::ModalBasis mb;
    if (opt.method == SolveMethod::Modal) mb = detail::make_modal_basis(m);
    parallel_for(m.grid.size(), opt.workers, [&](std::size_t fi) {
        try {
            CMat s = mb.usable ? detail::solve_modal(m, mb, fi, opt.z_ref) : detail::solve_chain(m, fi, opt.z_ref);
            if (opt.check_invariants) check_sparameter_invariants(s, m.grid[fi]);
            out.data[fi] = std::move(s);
        } catch (const SolverError& e) {
            throw SolverError("solve_sweep failed at " + std::to_string(m.grid[fi]) + " Hz: " + e.what());
        }
    });
    return out;
}

inline SParameterBlock solve_sweep(const TsvLayout& x, const GeometryMaterials& g, const FrequencyGrid& grid,
                                   const SolveOptions& opt = {}) {
    return solve_sweep(extract_rlcg(x, g, grid, opt.reference), opt);
}

// n_seg cascaded lumped pi-sections solved by nodal analysis; ports ordered
// like SParameterBlock. Interior node layers are eliminated one at a time.
inline CMat lumped_oracle(const RlcgModel& m, double omega, std::size_t n_seg, double z_ref = 50.0) {
    detail::require(n_seg >= 1, "lumped_oracle: n_seg must be >= 1");
    const auto n = static_cast<Eigen::Index>(m.signal_count());
    const auto pul = per_unit_length_matrices(m, omega);
    const double dz = m.geometry.h_int * constants::um / static_cast<double>(n_seg);
    Eigen::PartialPivLU<CMat> zlu(pul.z * dz);
    if (!(zlu.rcond() > 1e-15)) throw SolverError("lumped_oracle: singular series impedance");
    const CMat ys = zlu.inverse();
    const CMat yp = pul.y * (dz / 2.0);

    CMat y00 = imd_admittance(m, omega) + ys + yp;
    CMat y0m = -ys;
    CMat ymm = ys + yp;
    for (std::size_t k = 1; k < n_seg; ++k) {
        Eigen::PartialPivLU<CMat> lu(ymm + ys + yp);
        if (!(lu.rcond() > 1e-15)) throw SolverError("lumped_oracle: singular nodal matrix");
        const CMat w_ym0 = lu.solve(y0m.transpose());
        const CMat w_ys = lu.solve(ys);
        y00 -= y0m * w_ym0;
        const CMat new_0m = y0m * w_ys;
        ymm = ys + yp - ys * w_ys;
        y0m = new_0m;
    }
    CMat y(2 * n, 2 * n);
    y.topLeftCorner(n, n) = y00;
    y.topRightCorner(n, n) = y0m;
    y.bottomLeftCorner(n, n) = y0m.transpose();
    y.bottomRightCorner(n, n) = ymm;
    return y_to_s(y, z_ref);
}

inline CMat lumped_oracle(const TsvLayout& x, const GeometryMaterials& g, double omega, std::size_t n_seg,
                          double z_ref = 50.0) {
    const auto m = extract_rlcg(x, g, FrequencyGrid({omega / (2.0 * constants::pi)}));
    return lumped_oracle(m, omega, n_seg, z_ref);
}

// ---------------------------------------------------------------------------
// Crosstalk. Victim/aggressor indices are signal ordinals.
inline double to_db(double linear) { return 20.0 * std::log10(linear); }

inline double victim_total_crosstalk(const SParameterBlock& s, std::size_t fi, std::size_t v) {
    detail::require(v < s.signal_count(), "victim_total_crosstalk: victim is not a signal TSV");
    detail::require(fi < s.data.size(), "victim_total_crosstalk: frequency index out of range");
    const auto& m = s.data[fi];
    double acc = 0.0;
    for (std::size_t a = 0; a < s.signal_count(); ++a) {
        if (a == v) continue;
        acc += std::norm(m(s.top(v), s.top(a)));     // NEXT
        acc += std::norm(m(s.top(v), s.bottom(a)));  // FEXT
    }
    return std::sqrt(acc);
}

inline double victim_total_crosstalk_at(const SParameterBlock& s, double f, std::size_t v) {
    return victim_total_crosstalk(s, s.frequency_index(f), v);
}

// (1 / (s (s-1))) sum_v |dB(X_v)| over victim totals.
inline double average_crosstalk_db(const std::vector<double>& victim_totals) {
    const auto s = victim_totals.size();
    detail::require(s >= 2, "average_crosstalk: needs at least two signal TSVs");
    double acc = 0.0;
    for (double x : victim_totals) acc += std::abs(to_db(x));
    return acc / static_cast<double>(s * (s - 1));
}

inline double average_crosstalk(const SParameterBlock& s, std::size_t fi) {
    detail::require(s.signal_count() >= 2, "average_crosstalk: needs at least two signal TSVs");
    std::vector<double> tot;
    for (std::size_t v = 0; v < s.signal_count(); ++v) tot.push_back(victim_total_crosstalk(s, fi, v));
    return average_crosstalk_db(tot);
}

struct CrosstalkReport {
    double frequency = 0.0;
    std::vector<double> victim_totals;  // linear
    std::size_t worst_victim = 0;
    double worst_total_db = 0.0;
    double worst_next_db = 0.0;  // worst single NEXT entry of the worst victim
    double worst_fext_db = 0.0;
    std::size_t worst_next_aggressor = 0;
    std::size_t worst_fext_aggressor = 0;
    double average_db = 0.0;  // 0 when fewer than two signals
};

inline CrosstalkReport crosstalk_report(const SParameterBlock& s, std::size_t fi) {
    CrosstalkReport r;
    r.frequency = s.grid[fi];
    const auto& m = s.data[fi];
    for (std::size_t v = 0; v < s.signal_count(); ++v) r.victim_totals.push_back(victim_total_crosstalk(s, fi, v));
    r.worst_victim = static_cast<std::size_t>(
        std::distance(r.victim_totals.begin(), std::max_element(r.victim_totals.begin(), r.victim_totals.end())));
    r.worst_total_db = to_db(r.victim_totals[r.worst_victim]);
    double next = 0.0, fext = 0.0;
    const auto v = r.worst_victim;
    for (std::size_t a = 0; a < s.signal_count(); ++a) {
        if (a == v) continue;
        if (std::abs(m(s.top(v), s.top(a))) > next) {
            next = std::abs(m(s.top(v), s.top(a)));
            r.worst_next_aggressor = a;
        }
        if (std::abs(m(s.top(v), s.bottom(a))) > fext) {
            fext = std::abs(m(s.top(v), s.bottom(a)));
            r.worst_fext_aggressor = a;
        }
    }
    r.worst_next_db = to_db(next);
    r.worst_fext_db = to_db(fext);
    r.average_db = s.signal_count() >= 2 ? average_crosstalk_db(r.victim_totals) : 0.0;
    return r;
}

inline nlohmann::json to_json(const CrosstalkReport& r, const SParameterBlock& s) {
    nlohmann::json victims = nlohmann::json::array();
    for (std::size_t v = 0; v < r.victim_totals.size(); ++v)
        victims.push_back({{"signal", v}, {"cell", s.signal_cells[v]}, {"total_linear", r.victim_totals[v]},
                           {"total_db", to_db(r.victim_totals[v])}});
    return {{"frequency_hz", r.frequency},
            {"victims", victims},
            {"worst_victim", r.worst_victim},
            {"worst_victim_cell", s.signal_cells.empty() ? 0 : s.signal_cells[r.worst_victim]},
            {"worst_total_db", r.worst_total_db},
            {"worst_next_db", r.worst_next_db},
            {"worst_next_aggressor", r.worst_next_aggressor},
            {"worst_fext_db", r.worst_fext_db},
            {"worst_fext_aggressor", r.worst_fext_aggressor},
            {"average_db", r.average_db}};
}

// Ports of `permuted` that correspond to each port of the original layout
// under t: result[p] is the port index in solve(apply_d4(x, t)).
inline std::vector<std::size_t> d4_port_map(const TsvLayout& x, D4Transform t) {
    const auto perm = d4_permutation(t, x.rows(), x.cols());
    const auto y = apply_d4(x, t);
    const auto sx = x.signal_indices();
    const auto sy = y.signal_indices();
    std::vector<std::size_t> ordinal(y.cells(), 0);
    for (std::size_t k = 0; k < sy.size(); ++k) ordinal[sy[k]] = k;
    const auto ns = sx.size();
    std::vector<std::size_t> out(2 * ns);
    for (std::size_t k = 0; k < ns; ++k) {
        out[k] = ordinal[perm[sx[k]]];
        out[ns + k] = ns + ordinal[perm[sx[k]]];
    }
    return out;
}

inline CMat permute_ports(const CMat& s, const std::vector<std::size_t>& map) {
    const auto n = s.rows();
    CMat out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(i, j) = s(static_cast<Eigen::Index>(map[i]), static_cast<Eigen::Index>(map[j]));
    return out;
}

} // namespace tsvnet

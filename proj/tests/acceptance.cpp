// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include <tsvnet/tsvnet.hpp>

#include "oracles.hpp"

using namespace tsvnet;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

int failures = 0;

void check(const char* name, const std::function<Outcome()>& body) {
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.ok;
    std::printf("%s %s: %s\n", o.ok ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
}

template <typename Fn>
double seconds(Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

TsvLayout random_layout(std::mt19937_64& rng, std::size_t n, std::size_t min_signals = 1) {
    std::uniform_int_distribution<int> role(-1, 1);
    for (;;) {
        std::vector<Role> roles(n * n);
        for (auto& r : roles) r = static_cast<Role>(role(rng));
        TsvLayout x(n, n, roles);
        if (x.electrically_solvable() && x.signal_count() >= min_signals) return x;
    }
}

// Uniform over the design-space ranges (radius, pitch, height, liner thickness).
GeometryMaterials random_geometry(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0, 1);
    for (;;) {
        GeometryMaterials g;
        g.r_cond = 2 + 4 * u(rng);
        g.p_int = 20 + 40 * u(rng);
        g.h_int = 60 + 40 * u(rng);
        g.t_ins = 0.5 + 2.5 * u(rng);
        try {
            g.validate();
            return g;
        } catch (const ValidationError&) {
        }
    }
}

TsvLayout grounded(std::size_t n, std::vector<std::size_t> signals, std::vector<std::size_t> empty = {}) {
    std::vector<std::size_t> grounds;
    auto has = [](const auto& v, std::size_t i) { return std::find(v.begin(), v.end(), i) != v.end(); };
    for (std::size_t i = 0; i < n * n; ++i)
        if (!has(signals, i) && !has(empty, i)) grounds.push_back(i);
    return build_layout(n, n, signals, grounds);
}

TsvLayout checkerboard(std::size_t n) {
    std::vector<std::size_t> sig, gnd;
    for (std::size_t i = 0; i < n * n; ++i) ((i / n + i % n) % 2 ? sig : gnd).push_back(i);
    return build_layout(n, n, sig, gnd);
}

} // namespace

int main() {
    check("enumeration 5x5/12", [] {
        std::uint64_t n = 0;
        const double t = seconds([&] { n = count_layouts(5, 5, 12); });
        return Outcome{n == 5200300 && n == binomial(25, 12) && t < 10.0,
                       fmt("%.0f layouts in %.2f s", static_cast<double>(n), t)};
    });

    check("symmetry reduction 5x5/12", [] {
        const auto st = symmetry_reduce(5, 5, 12);
        const auto burnside = oracle::burnside_orbits(5, 12);
        const bool ok = st.canonical >= 650037 && st.canonical <= 660000 && st.canonical == burnside &&
                        st.orbit_sum == st.total && st.total == 5200300;
        return Outcome{ok, fmt("%.0f orbits, Burnside %.0f", static_cast<double>(st.canonical),
                               static_cast<double>(burnside))};
    });

    check("symmetry reduction 3x3 vs bucketing", [] {
        std::size_t bad = 0;
        for (std::size_t k = 1; k <= 8; ++k) bad += symmetry_reduce(3, 3, k).canonical != oracle::bucket_orbits(3, k);
        return Outcome{bad == 0, fmt("%.0f mismatching signal counts of 8", static_cast<double>(bad))};
    });

    check("S-parameter invariants", [] {
        std::mt19937_64 rng(2024);
        const auto grid = FrequencyGrid::default_sweep();
        double rec = 0, pm = -1;
        std::size_t viol = 0;
        for (int d = 0; d < 200; ++d) {
            SolveOptions opt;
            opt.check_invariants = false;
            const auto s = solve_sweep(random_layout(rng, 3 + d % 4), random_geometry(rng), grid, opt);
            for (const auto& m : s.data) {
                const double r = reciprocity_error(m), p = passivity_margin(m);
                viol += r >= 1e-10 || p > 1e-9;
                rec = std::max(rec, r);
                pm = std::max(pm, p);
            }
        }
        return Outcome{viol == 0, fmt("200 designs x 100 freqs, max RFE_rec %.2e, max passivity margin %.2e, %.0f "
                                      "violations",
                                      rec, pm, static_cast<double>(viol))};
    });

    check("lumped oracle equivalence", [] {
        std::mt19937_64 rng(7);
        const double w = 2 * constants::pi * 15e9;
        double worst = 0;
        bool monotone = true;
        for (int d = 0; d < 20; ++d) {
            const auto x = random_layout(rng, 3);
            const auto g = random_geometry(rng);
            const auto exact = solve_sweep(x, g, FrequencyGrid({15e9}));
            double prev = 1e300;
            for (std::size_t n = 8; n <= 128; n *= 2) {
                const double e = rfe(lumped_oracle(x, g, w, n), exact.data[0]);
                monotone = monotone && e < prev;
                prev = e;
            }
            worst = std::max(worst, prev);
        }
        return Outcome{worst < 1e-3 && monotone,
                       fmt("worst RFE at n=128 %.2e, monotone 8->128: ", worst) + (monotone ? "yes" : "no")};
    });

    check("scalar telegrapher", [] {
        GeometryMaterials g;
        const auto grid = FrequencyGrid::default_sweep();
        const auto m = extract_rlcg(build_layout(1, 2, {0}, {1}), g, grid);
        const auto s = solve_sweep(m);
        const double r = g.r_cond * 1e-6;
        double worst = 0;
        for (std::size_t fi = 0; fi < grid.size(); ++fi) {
            const double w = 2 * constants::pi * grid[fi];
            const Complex jw(0, w);
            const Complex chi = r * std::sqrt(Complex(0, w * 4e-7 * constants::pi * g.sigma_cu));
            const Complex zc = (chi / g.sigma_cu) / (2 * constants::pi * r * r) / oracle::bessel_ratio(chi);
            const Complex ysub = m.g_sub_eff(0, 0) + jw * m.c_sub_eff(0, 0);
            const Complex dox = jw * m.c_oxdep(0);
            const auto ref = oracle::telegrapher(zc + jw * m.l_eff(0, 0), dox * ysub / (dox + ysub), g.h_int * 1e-6, 50.0);
            CMat want(2, 2);
            want << ref.s11, ref.s21, ref.s21, ref.s11;
            worst = std::max(worst, rfe(s.data[fi], want));
        }
        return Outcome{worst < 1e-3, fmt("worst relative error %.2e over 100 points", worst)};
    });

    check("D4 covariance", [] {
        std::mt19937_64 rng(11);
        GeometryMaterials g;
        const auto grid = FrequencyGrid::linear(1e9, 100e9, 10);
        double worst = 0;
        for (int d = 0; d < 10; ++d) {
            const auto x = random_layout(rng, 4, 2);
            const auto sx = solve_sweep(x, g, grid);
            for (auto t : all_d4) {
                const auto sy = solve_sweep(apply_d4(x, t), g, grid);
                const auto map = d4_port_map(x, t);
                for (std::size_t fi = 0; fi < grid.size(); ++fi)
                    worst = std::max(worst, rfe(permute_ports(sy.data[fi], map), sx.data[fi]));
            }
        }
        return Outcome{worst < 1e-9, fmt("worst RFE %.2e over 10 designs x 8 transforms", worst)};
    });

    check("ETC identities", [] {
        double uni = 0;
        for (double k : {1.4, 150.0, 400.0}) {
            GeometryMaterials flat;
            flat.k_v = flat.k_l = flat.k_s = k;
            const auto b = array_etc(grounded(4, {0, 5, 10}, {3, 15}), flat);
            for (double v : {vertical_unit_etc(flat), lateral_unit_etc(flat), b.k_z}) uni = std::max(uni, std::abs(v / k - 1));
        }
        GeometryMaterials g;
        const auto e = array_etc(TsvLayout(3, 3, std::vector<Role>(9, Role::Empty)), g);
        const auto x = grounded(4, {0, 5, 10});
        const auto full = array_etc(x, g);
        const auto direct = array_etc_with_footprint(x, g, 2 * g.cell_half());
        const bool same = full.k_x == direct.k_x && full.k_y == direct.k_y && full.k_z == direct.k_z;
        const bool ok = uni < 1e-12 && e.k_z == g.k_s && same && full.f_occ == 1.0;
        return Outcome{ok, fmt("uniform-material rel. error %.1e, empty k_z - k_s = %.1e, f_occ=1 path identical: ", uni,
                               e.k_z - g.k_s) +
                               (same ? "yes" : "no")};
    });

    check("thermal slab", [] {
        const double k = 150, side = 200, height = 100, h = 5e4, t_inf = 300, power = 0.5;
        ThermalBlock b;
        b.k_x = b.k_y = b.k_z = k;
        b.rows = b.cols = 1;
        b.pitch = b.l_s = b.w_s = b.footprint = side;
        b.height = height;
        HeatSourceField src;
        src.t_amb = t_inf;
        src.sources.push_back({0, power, 0});
        src.faces[Top] = BoundaryCondition::convection(h, t_inf);
        const auto f = solve_steady_state(b, src, {9, 9, 41});
        const double length = height * 1e-6, q = power / (side * side * 1e-12 * length);
        double worst = 0;
        for (std::size_t kk = 0; kk < f.nz; ++kk) {
            const double want = oracle::slab_temperature(static_cast<double>(kk) * f.dz * 1e-6, length, k, q, h, t_inf);
            for (std::size_t j = 0; j < f.ny; ++j)
                for (std::size_t i = 0; i < f.nx; ++i)
                    worst = std::max(worst, std::abs(f.at(i, j, kk) - want) / (want - t_inf));
        }
        const double balance = std::abs(f.heat_out - f.heat_in) / f.heat_in;
        return Outcome{worst < 5e-3 && balance < 1e-3,
                       fmt("max node error %.3f%% of the rise, energy imbalance %.2e%%", 100 * worst, 100 * balance)};
    });

    check("electrothermal loop", [] {
        GeometryMaterials g;
        const auto grid = FrequencyGrid({15e9});
        Excitation ex;
        ex.power = 0.1;
        const auto full = electrothermal_fixed_point(grounded(5, {12}), g, grid, ex);
        const auto sparse = electrothermal_fixed_point(grounded(5, {12}, {0, 4, 20, 24}), g, grid, ex);
        bool monotone = true;
        for (std::size_t i = 1; i < full.delta_history.size(); ++i)
            monotone = monotone && full.delta_history[i] < full.delta_history[i - 1];
        const bool ok = full.converged && full.iterations <= 20 && full.delta_history.back() < 0.1 && monotone &&
                        sparse.converged && sparse.field.t_max >= full.field.t_max;
        return Outcome{ok, fmt("%.0f iterations, final |dT| %.2e K, T_max full %.4f K", static_cast<double>(full.iterations),
                               full.delta_history.back(), full.field.t_max) +
                               fmt(", sparse %.4f K", sparse.field.t_max)};
    });

    check("runtime 15x15 evaluation", [] {
        GeometryMaterials g;
        const auto x = checkerboard(15);
        SolveOptions opt;
        opt.workers = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
        double sum = 0;
        const double t = seconds([&] {
            const auto m = extract_rlcg(x, g, FrequencyGrid::default_sweep());
            const auto s = solve_sweep(m, opt);
            for (std::size_t fi = 0; fi < s.data.size(); ++fi) sum += crosstalk_report(s, fi).average_db;
            sum += array_etc(x, g).k_z;
        });
        return Outcome{t < 1.0 && std::isfinite(sum),
                       fmt("%.3f s with %.0f workers", t, static_cast<double>(opt.workers))};
    });

    check("runtime 3x3 exhaustive search", [] {
        SearchConfig c;
        c.s_max = 8;
        SearchResult r;
        const double t = seconds([&] { r = combinatorial_search(c); });
        return Outcome{t < 60.0 && r.designs_covered == 501 && r.failures == 0,
                       fmt("%.0f canonical designs covering %.0f in %.2f s", static_cast<double>(r.records.size()),
                           static_cast<double>(r.designs_covered), t)};
    });

    check("7x7 multi-ground sweep trends", [] {
        GeometryMaterials g;
        g.r_cond = 2.5;
        g.p_int = 35;
        g.h_int = 100;
        g.t_ins = 0.25;
        const auto s = solve_sweep(checkerboard(7), g, FrequencyGrid::default_sweep());
        const auto n = s.signal_count();
        std::vector<double> s21(s.data.size(), 0.0), xt(s.data.size());
        for (std::size_t fi = 0; fi < s.data.size(); ++fi) {
            for (std::size_t v = 0; v < n; ++v)
                s21[fi] += std::abs(s.data[fi](static_cast<Eigen::Index>(n + v), static_cast<Eigen::Index>(v))) / static_cast<double>(n);
            xt[fi] = 0;
            for (std::size_t v = 0; v < n; ++v) xt[fi] += victim_total_crosstalk(s, fi, v) / static_cast<double>(n);
        }
        bool rolloff = true, rising = true;
        for (std::size_t fi = 1; fi < s.data.size(); ++fi) {
            rolloff = rolloff && s21[fi] < s21[fi - 1];
            rising = rising && xt[fi] > xt[fi - 1];
        }
        return Outcome{rolloff && rising, fmt("mean |S21| %.4f -> %.4f, mean victim crosstalk %.1f", s21.front(), s21.back(),
                                              to_db(xt.front())) +
                                              fmt(" -> %.1f dB", to_db(xt.back()))};
    });

    std::printf("%s: %d failing criteria\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}

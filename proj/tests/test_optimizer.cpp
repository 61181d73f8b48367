#include <catch_amalgamated.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <tsvnet/dataset.hpp>
#include <tsvnet/optimizer.hpp>

#include "oracles.hpp"

using namespace tsvnet;
using Catch::Approx;

namespace {

std::array<double, 4> key(const ObjectiveVector& o) {
    return {o.max_reflection, std::abs(o.mean_insertion), o.worst_crosstalk, -o.k_z};
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "tsvnet-optimizer-tests";
    std::filesystem::create_directories(dir);
    auto p = dir / name;
    std::filesystem::remove(p);
    return p;
}

ObjectiveVector random_objectives(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d(0, 20);
    return {-static_cast<double>(d(rng)), -static_cast<double>(d(rng)) / 10, -static_cast<double>(d(rng)) - 20,
            150.0 + d(rng)};
}

std::set<std::array<double, 4>> front_keys(const std::vector<ObjectiveVector>& v) {
    std::set<std::array<double, 4>> out;
    for (auto i : pareto_front(v)) out.insert(key(v[i]));
    return out;
}

} // namespace

TEST_CASE("binomial and layout enumeration") {
    CHECK(binomial(25, 12) == 5200300);
    CHECK(binomial(9, 2) == 36);
    CHECK(binomial(3, 5) == 0);

    std::vector<CellMask> masks;
    CHECK(enumerate_layouts(3, 3, 2, [&](CellMask m) { masks.push_back(m); }) == 36);
    CHECK(masks.front() == 0b11);
    CHECK(masks.back() == 0b110000000);
    CHECK(std::set<CellMask>(masks.begin(), masks.end()).size() == 36);
    for (auto m : masks) CHECK(__builtin_popcountll(m) == 2);
    CHECK(count_layouts(4, 4, 8) == 12870);

    CHECK_THROWS_AS(count_layouts(3, 3, 9), ValidationError);
    CHECK_THROWS_AS(count_layouts(3, 3, 0), ValidationError);
    CHECK_THROWS_AS(count_layouts(9, 9, 2), ValidationError);
}

TEST_CASE("mask and layout conversion") {
    const auto x = layout_from_mask(3, 3, 0b100010001);
    CHECK(x.signal_indices() == std::vector<std::size_t>{0, 4, 8});
    CHECK(x.ground_count() == 6);
    CHECK(mask_from_layout(x) == 0b100010001);
    CHECK_THROWS_AS(mask_from_layout(build_layout(2, 2, {0}, {1})), ValidationError);
}

TEST_CASE("symmetry reduction on small grids") {
    const auto one = symmetry_reduce(3, 3, 1);
    CHECK(one.total == 9);
    CHECK(one.canonical == 3);
    for (std::size_t n : {3, 4}) {
        for (std::size_t k = 1; k <= (n == 3 ? 8 : 6); ++k) {
            const auto st = symmetry_reduce(n, n, k);
            CHECK(st.total == binomial(n * n, k));
            CHECK(st.orbit_sum == st.total);
            CHECK(st.canonical * 8 >= st.total);
            CHECK(st.canonical == oracle::burnside_orbits(n, k));
            if (n == 3) CHECK(st.canonical == oracle::bucket_orbits(n, k));
        }
    }
    CHECK_THROWS_AS(symmetry_reduce(3, 4, 2), ValidationError);
}

TEST_CASE("canonical masks agree with the layout canonical form") {
    const D4Canonicalizer d4(4);
    enumerate_layouts(4, 4, 5, [&](CellMask m) {
        const auto o = d4.orbit(m);
        CHECK(layout_from_mask(4, 4, o.canonical) == canonical_form(layout_from_mask(4, 4, m)));
    });
}

TEST_CASE("design evaluation") {
    GeometryMaterials g;
    std::vector<std::size_t> sig, gnd;
    for (std::size_t i = 0; i < 25; ++i) (i % 2 ? sig : gnd).push_back(i);
    const auto alternating = build_layout(5, 5, sig, gnd);
    const auto o = evaluate_design(alternating, g, 15e9);
    CHECK(std::isfinite(o.worst_crosstalk));
    CHECK(o.mean_insertion < 0);
    CHECK(o.k_z > g.k_s);

    const auto s = solve_sweep(alternating, g, FrequencyGrid({15e9}));
    CHECK(o.worst_crosstalk == Approx(oracle::worst_crosstalk_db(s.data[0], s.signal_count())).epsilon(1e-12));

    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 5; ++trial) {
        CellMask m = 0;
        while (__builtin_popcountll(m) < 4) m |= CellMask{1} << (rng() % 16);
        const auto x = layout_from_mask(4, 4, m);
        const auto base = evaluate_design(x, g, 15e9);
        for (auto t : all_d4) {
            const auto y = evaluate_design(apply_d4(x, t), g, 15e9);
            CHECK(y.max_reflection == Approx(base.max_reflection).epsilon(1e-9));
            CHECK(y.mean_insertion == Approx(base.mean_insertion).epsilon(1e-9));
            CHECK(y.worst_crosstalk == Approx(base.worst_crosstalk).epsilon(1e-9));
            CHECK(y.k_z == base.k_z);
        }
    }
    CHECK_THROWS_AS(evaluate_design(build_layout(2, 2, {0}, {1, 2, 3}), g, 15e9), ValidationError);
}

TEST_CASE("Pareto front") {
    const ObjectiveVector a{-10, -0.1, -30, 200};
    CHECK(pareto_front({a}) == std::vector<std::size_t>{0});
    const ObjectiveVector worse{-9, -0.2, -29, 190};
    CHECK(dominates(a, worse));
    CHECK_FALSE(dominates(a, a));
    CHECK(pareto_front({worse, a}) == std::vector<std::size_t>{1});

    std::mt19937_64 rng(67);
    std::vector<ObjectiveVector> v(1000);
    for (auto& o : v) o = random_objectives(rng);
    std::vector<std::array<double, 4>> keys;
    for (const auto& o : v) keys.push_back(key(o));
    CHECK(pareto_front(v) == oracle::pareto_brute(keys));

    auto shuffled = v;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto doubled = v;
    doubled.insert(doubled.end(), v.begin(), v.begin() + 300);
    CHECK(front_keys(shuffled) == front_keys(v));
    CHECK(front_keys(doubled) == front_keys(v));
}

TEST_CASE("best per objective") {
    std::vector<ObjectiveVector> v{{-10, -0.3, -30, 200}, {-12, -0.1, -25, 180}, {-8, -0.2, -35, 210}};
    const auto b = best_per_objective(v, {0, 1, 2});
    CHECK(b.crosstalk == 2);
    CHECK(b.thermal == 2);
    CHECK(b.insertion == 1);
    CHECK(b.reflection == 1);
    CHECK_THROWS_AS(best_per_objective(v, {}), ValidationError);
}

TEST_CASE("combinatorial search is deterministic and symmetry-consistent") {
    SearchConfig c;
    c.symmetry = false;
    const auto full = combinatorial_search(c);
    CHECK(full.records.size() == 36 + 84);
    CHECK(full.failures == 0);

    auto parallel = c;
    parallel.workers = 3;
    const auto par = combinatorial_search(parallel);
    CHECK(par.records == full.records);
    CHECK(par.ranking == full.ranking);
    CHECK(par.front == full.front);

    auto reduced_cfg = c;
    reduced_cfg.symmetry = true;
    const auto reduced = combinatorial_search(reduced_cfg);
    CHECK(reduced.records.size() == oracle::burnside_orbits(3, 2) + oracle::burnside_orbits(3, 3));
    CHECK(reduced.designs_covered == 120);

    const auto& bf = full.records[full.ranking[0]];
    const auto& br = reduced.records[reduced.ranking[0]];
    CHECK(br.objectives.worst_crosstalk == Approx(bf.objectives.worst_crosstalk).epsilon(1e-9));
    CHECK(canonical_form(reduced.layout(reduced.ranking[0])) == canonical_form(full.layout(full.ranking[0])));

    std::set<std::vector<Role>> full_front, reduced_front;
    for (auto i : full.front) full_front.insert(canonical_form(full.layout(i)).roles());
    for (auto i : reduced.front) reduced_front.insert(canonical_form(reduced.layout(i)).roles());
    CHECK(full_front == reduced_front);

    std::mt19937_64 rng(71);
    for (int trial = 0; trial < 100; ++trial) {
        CellMask m = 0;
        const int k = 2 + trial % 2;
        while (__builtin_popcountll(m) < k) m |= CellMask{1} << (rng() % 9);
        CHECK(bf.objectives.worst_crosstalk <= evaluate_design(layout_from_mask(3, 3, m), c.geometry, c.frequency).worst_crosstalk);
    }
}

TEST_CASE("search configuration errors") {
    SearchConfig c;
    c.rows = c.cols = 2;
    c.s_min = 4;
    c.s_max = 4;
    CHECK_THROWS_AS(combinatorial_search(c), ValidationError);
    c = {};
    c.s_min = 1;
    CHECK_THROWS_AS(combinatorial_search(c), ValidationError);
    c = {};
    c.rows = 2;
    CHECK_THROWS_AS(combinatorial_search(c), ValidationError);
    c.symmetry = false;
    c.s_max = 2;
    CHECK(combinatorial_search(c).records.size() == 15);
    c.evaluator = "oracle";
    CHECK_THROWS_AS(combinatorial_search(c), ValidationError);
}

TEST_CASE("checkpoint and resume") {
    const auto path = scratch("search.ckpt").string();
    SearchConfig c;
    c.s_max = 4;
    c.checkpoint_path = path;
    c.checkpoint_every = 7;
    const auto whole = combinatorial_search(c);
    REQUIRE(std::filesystem::exists(path));

    // Simulate an interrupted run by keeping only the first chunks.
    const auto fp = detail::fnv1a(to_json(c).dump());
    detail::write_checkpoint(path, fp, whole.records, 14);
    auto resumed_cfg = c;
    resumed_cfg.resume = true;
    std::size_t first_progress = 0;
    const auto resumed = combinatorial_search(resumed_cfg, [&](std::size_t done, std::size_t) {
        if (first_progress == 0) first_progress = done;
    });
    CHECK(first_progress == 21);
    CHECK(resumed.records == whole.records);
    CHECK(resumed.ranking == whole.ranking);
    CHECK(resumed.front == whole.front);

    std::ostringstream a, b;
    write_search_csv(a, whole, c.geometry);
    write_search_csv(b, resumed, c.geometry);
    CHECK(a.str() == b.str());

    auto other = resumed_cfg;
    other.frequency = 20e9;
    CHECK_THROWS_AS(combinatorial_search(other), ValidationError);

    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(40);
        char byte = 0;
        f.read(&byte, 1);
        f.seekp(40);
        byte = static_cast<char>(byte ^ 0x5a);
        f.write(&byte, 1);
    }
    CHECK_THROWS_WITH(combinatorial_search(resumed_cfg), Catch::Matchers::ContainsSubstring("checksum"));
}

TEST_CASE("search CSV follows the Pareto table columns") {
    SearchConfig c;
    const auto r = combinatorial_search(c);
    std::ostringstream os;
    write_search_csv(os, r, c.geometry);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    CHECK(header ==
          "rank,index,n_signal,orbit,layout,r_um,p_um,h_um,t_ox_um,mean_s21_db,max_s11_db,worst_xtalk_db,k_z_w_mk,pareto");
    std::size_t rows = 0;
    for (std::string line; std::getline(is, line);) ++rows;
    CHECK(rows == r.records.size());
    const auto j = front_json(r, c.geometry, c.frequency);
    CHECK(j["front"].size() == r.front.size());
    CHECK(j.contains("best"));
}

TEST_CASE("symmetry reduction pays off in wall time") {
    SearchConfig c;
    c.rows = c.cols = 4;
    c.s_max = 3;
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    combinatorial_search(c);
    const auto with = clock::now() - t0;
    c.symmetry = false;
    t0 = clock::now();
    combinatorial_search(c);
    const auto without = clock::now() - t0;
    CHECK(with * 2 <= without);
}

TEST_CASE("Latin hypercube sampling") {
    const auto a = latin_hypercube(64, 42);
    CHECK(a == latin_hypercube(64, 42));
    CHECK(a != latin_hypercube(64, 43));
    for (std::size_t d = 0; d < 4; ++d) {
        std::set<std::size_t> strata;
        for (const auto& s : a) {
            CHECK(s[d] >= 0.0);
            CHECK(s[d] < 1.0);
            strata.insert(static_cast<std::size_t>(s[d] * 64));
        }
        CHECK(strata.size() == 64);
    }
}

TEST_CASE("geometric sweep") {
    SweepConfig c;
    c.layout = build_layout(3, 3, {0, 4, 8}, {1, 2, 3, 5, 6, 7});

    SweepConfig point = c;
    point.r = point.p = point.h = point.t_ox = {};
    point.r = {5, 5};
    point.p = {60, 60};
    point.h = {100, 100};
    point.t_ox = {0.5, 0.5};
    point.samples = 16;
    const auto one = geometric_sweep(point);
    CHECK(one.records.size() == 1);
    CHECK(one.front == std::vector<std::size_t>{0});

    SweepConfig radius = c;
    radius.sampler = Sampler::Grid;
    radius.grid_points = 6;
    radius.p = {50, 50};
    radius.h = {80, 80};
    radius.t_ox = {1, 1};
    const auto rr = geometric_sweep(radius);
    REQUIRE(rr.records.size() == 6);
    for (std::size_t i = 1; i < rr.records.size(); ++i) {
        CHECK(rr.records[i].geometry.r > rr.records[i - 1].geometry.r);
        CHECK(rr.records[i].objectives.k_z > rr.records[i - 1].objectives.k_z);
    }

    SweepConfig bad = point;
    bad.p = {20, 20};
    bad.r = {6, 6};
    bad.t_ox = {4.5, 4.5};
    const auto skipped = geometric_sweep(bad);
    CHECK(skipped.records.empty());
    CHECK(skipped.skipped.size() == 1);

    SweepConfig lhs = c;
    lhs.samples = 32;
    const auto a = geometric_sweep(lhs);
    lhs.workers = 3;
    const auto b = geometric_sweep(lhs);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].objectives == b.records[i].objectives);
    CHECK(a.front == b.front);

    std::ostringstream os;
    write_sweep_csv(os, a);
    CHECK(os.str().rfind("r_um,p_um,h_um,t_ox_um,mean_s21_db,max_s11_db,worst_xtalk_db,k_z_w_mk,pareto\n", 0) == 0);

    SweepConfig inverted = c;
    inverted.r = {6, 2};
    CHECK_THROWS_AS(geometric_sweep(inverted), ValidationError);
}

TEST_CASE("surrogate-file evaluator serves dataset-schema predictions") {
    const auto path = scratch("predictions.jsonl");
    GeometryMaterials g;
    std::vector<TsvLayout> layouts;
    enumerate_layouts(3, 3, 2, [&](CellMask m) { layouts.push_back(layout_from_mask(3, 3, m)); });
    {
        std::ofstream out(path);
        for (std::size_t i = 0; i < layouts.size(); ++i) {
            DatasetSample s{i, false, layouts[i], g, 15e9};
            out << dataset_record(s, solve_sweep(layouts[i], g, FrequencyGrid({15e9}))).dump() << '\n';
        }
    }
    const SurrogateFileEvaluator sur(path.string());
    CHECK(sur.size() == layouts.size());
    for (const auto& x : layouts) CHECK(sur(x, g, 15e9) == evaluate_design(x, g, 15e9));
    CHECK_THROWS_AS(sur(layouts[0], g, 16e9), SolverError);

    SearchConfig c;
    c.s_max = 2;
    c.symmetry = false;
    const auto analytical = combinatorial_search(c);
    c.evaluator = "surrogate-file";
    c.surrogate_path = path.string();
    const auto served = combinatorial_search(c);
    CHECK(served.records == analytical.records);

    c.surrogate_path = scratch("missing.jsonl").string();
    CHECK_THROWS_AS(combinatorial_search(c), ValidationError);
}

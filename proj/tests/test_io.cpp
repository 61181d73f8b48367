#include <catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include <tsvnet/dataset.hpp>
#include <tsvnet/touchstone.hpp>

using namespace tsvnet;
using Catch::Approx;

namespace {

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string line; std::getline(is, line);)
        if (!line.empty()) out.push_back(line);
    return out;
}

double max_abs_diff(const SParameterBlock& a, const SParameterBlock& b) {
    double d = 0;
    for (std::size_t f = 0; f < a.data.size(); ++f) d = std::max(d, (a.data[f] - b.data[f]).cwiseAbs().maxCoeff());
    return d;
}

} // namespace

TEST_CASE("Touchstone round trip") {
    GeometryMaterials g;
    const auto grid = FrequencyGrid::linear(1e9, 100e9, 12);
    for (const auto& x : {build_layout(1, 2, {1}, {0}), build_layout(3, 3, {0, 4, 7}, {1, 2, 3, 5, 6, 8})}) {
        const auto s = solve_sweep(x, g, grid);
        std::stringstream ss;
        write_touchstone(ss, s);
        const auto back = read_touchstone(ss, s.port_count());
        CHECK(back.grid == s.grid);
        CHECK(back.z_ref == 50.0);
        CHECK(max_abs_diff(back, s) < 1e-12);
        CHECK(back.signal_cells == s.signal_cells);
        for (std::size_t p = 0; p < s.port_count(); ++p) CHECK(back.ports[p].name() == s.ports[p].name());
    }
}

TEST_CASE("two-port files use the S11 S21 S12 S22 order") {
    SParameterBlock s;
    s.grid = FrequencyGrid({1e9});
    s.signal_cells = {0};
    s.ports = make_ports(s.signal_cells);
    CMat m(2, 2);
    m << Complex(0.1, 0), Complex(0.2, 0), Complex(0.3, 0), Complex(0.4, 0);
    s.data.push_back(m);
    std::ostringstream os;
    write_touchstone(os, s);
    const auto data = lines_of(os.str()).back();
    std::istringstream is(data);
    double f, v[8];
    is >> f;
    for (double& x : v) is >> x;
    CHECK(v[0] == 0.1);
    CHECK(v[2] == 0.3);
    CHECK(v[4] == 0.2);
    CHECK(v[6] == 0.4);
    CHECK(touchstone_extension(2) == ".s2p");
}

TEST_CASE("Touchstone reader formats and units") {
    std::istringstream ma("! magnitude/angle\n# GHz S MA R 50\n1.0 0.5 90 1 0 1 0 0.5 -90\n");
    const auto a = read_touchstone(ma, 2);
    CHECK(a.grid[0] == 1e9);
    CHECK(a.data[0](0, 0).imag() == Approx(0.5).epsilon(1e-12));
    CHECK(a.data[0](1, 0).real() == Approx(1.0));
    CHECK(a.data[0](1, 1).imag() == Approx(-0.5).epsilon(1e-12));

    std::istringstream db("# MHz S DB R 75\n500 -20 0 0 0 0 0 -6.0206 180\n");
    const auto b = read_touchstone(db, 2);
    CHECK(b.grid[0] == 5e8);
    CHECK(b.z_ref == 75.0);
    CHECK(b.data[0](0, 0).real() == Approx(0.1).epsilon(1e-9));
    CHECK(b.data[0](1, 1).real() == Approx(-0.5).epsilon(1e-5));

    std::istringstream truncated("# Hz S RI R 50\n1e9 0 0 1 0\n");
    CHECK_THROWS_AS(read_touchstone(truncated, 2), ValidationError);
    std::istringstream garbage("# Hz S RI R 50\n1e9 0 0 x 0 1 0 0 0\n");
    CHECK_THROWS_AS(read_touchstone(garbage, 2), ValidationError);
    std::istringstream twice("# Hz S RI R 50\n# Hz S RI R 50\n");
    CHECK_THROWS_AS(read_touchstone(twice, 2), ValidationError);
    CHECK_THROWS_AS(read_touchstone("results.txt"), ValidationError);
}

TEST_CASE("Touchstone files on disk") {
    const auto dir = std::filesystem::temp_directory_path() / "tsvnet-io-tests";
    std::filesystem::create_directories(dir);
    GeometryMaterials g;
    const auto s = solve_sweep(build_layout(2, 2, {0, 3}, {1, 2}), g, FrequencyGrid({1e9, 2e9}));
    const auto path = (dir / ("pair" + touchstone_extension(s.port_count()))).string();
    write_touchstone(path, s);
    const auto back = read_touchstone(path);
    CHECK(back.port_count() == 4);
    CHECK(max_abs_diff(back, s) < 1e-12);
}

TEST_CASE("dataset generation") {
    DatasetConfig c;
    c.count = 1000;
    c.max_size = 4;
    std::ostringstream train, val;
    const auto sum = write_dataset(c, train, val);
    CHECK(sum.train == 800);
    CHECK(sum.val == 200);
    const auto tl = lines_of(train.str());
    const auto vl = lines_of(val.str());
    CHECK(tl.size() == 800);
    CHECK(vl.size() == 200);

    std::set<std::size_t> ids;
    for (const auto* set : {&tl, &vl})
        for (const auto& line : *set) {
            const auto j = nlohmann::json::parse(line);
            ids.insert(j.at("id").get<std::size_t>());
            CHECK(j.at("split") == (set == &tl ? "train" : "val"));
            const auto x = layout_from_json(j.at("layout"));
            CHECK(x.electrically_solvable());
            CHECK(x.rows() >= 3);
            CHECK(x.rows() <= 4);
            const auto geo = j.at("geometry").get<GeometryMaterials>();
            CHECK(geo.r_cond >= 2);
            CHECK(geo.r_cond <= 6);
            CHECK_NOTHROW(geo.validate());
            const auto l = labels_from_json(j.at("labels"));
            CHECK(l.signal_cells == x.signal_indices());
            for (std::size_t p = 0; p < l.pairs.size(); ++p) {
                const auto [v, a] = l.pairs[p];
                const auto mirror = std::find(l.pairs.begin(), l.pairs.end(), std::make_pair(a, v)) - l.pairs.begin();
                CHECK(std::abs(l.next[p] - l.next[static_cast<std::size_t>(mirror)]) < 1e-12);
            }
        }
    CHECK(ids.size() == 1000);
}

TEST_CASE("dataset output is reproducible and seed dependent") {
    DatasetConfig c;
    c.count = 40;
    c.max_size = 5;
    c.empty_probability = 0.2;
    std::ostringstream a, b, d;
    write_dataset(c, a, a);
    c.workers = 3;
    write_dataset(c, b, b);
    CHECK(a.str() == b.str());
    c.seed = 7;
    write_dataset(c, d, d);
    CHECK(a.str() != d.str());
}

TEST_CASE("dataset configuration errors") {
    DatasetConfig c;
    c.count = 0;
    CHECK_THROWS_AS(dataset_samples(c), ValidationError);
    c = {};
    c.min_size = 5;
    c.max_size = 4;
    CHECK_THROWS_AS(dataset_samples(c), ValidationError);
    c = {};
    c.signal_probability = 1.0;
    CHECK_THROWS_AS(dataset_samples(c), ValidationError);
    c = {};
    c.validation_fraction = 1.5;
    CHECK_THROWS_AS(dataset_samples(c), ValidationError);
    c = {};
    c.validation_fraction = 0.25;
    c.count = 10;
    std::size_t val = 0;
    for (const auto& s : dataset_samples(c)) val += s.validation;
    CHECK(val == 3);
}

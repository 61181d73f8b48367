#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <tsvnet/tsvnet.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tsvnet;

namespace {

constexpr int exit_validation = 2;
constexpr int exit_solver = 3;

// Thrown for a completed run that must still exit with the solver code.
struct RunFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read file: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

void check_keys(const json& j, const json& defaults, const std::string& where) {
    detail::require(j.is_object(), where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!defaults.contains(it.key())) throw ValidationError(where + ": unknown key '" + it.key() + "'");
        if (defaults[it.key()].is_object() && it.key() != "geometry" && it.key() != "faces")
            check_keys(it.value(), defaults[it.key()], where + "." + it.key());
    }
}

// Defaults < config file < explicit flags.
json resolve(json defaults, const std::string& config_path, const json& flags) {
    if (!config_path.empty()) {
        json file = read_json_file(config_path);
        check_keys(file, defaults, config_path);
        if (file.contains("command") && file["command"] != defaults["command"])
            throw ValidationError(config_path + ": config is for command '" + file["command"].get<std::string>() +
                                  "'");
        defaults.merge_patch(file);
    }
    defaults.merge_patch(flags);
    GeometryMaterials g = defaults.at("geometry").get<GeometryMaterials>();
    g.validate();
    defaults["geometry"] = g;
    return defaults;
}

// JSON {"rows","cols","roles"} or a character grid: S signal, G ground, . empty.
TsvLayout load_layout_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("layout file not readable: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        try {
            return layout_from_json(json::parse(text));
        } catch (const json::exception& e) {
            throw ValidationError(path + ": " + e.what());
        }
    }
    std::vector<Role> roles;
    std::size_t rows = 0, cols = 0;
    std::istringstream ls(text);
    std::string line;
    while (std::getline(ls, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::size_t n = 0;
        for (char c : line) {
            if (std::isspace(static_cast<unsigned char>(c))) continue;
            if (c == 'S' || c == 's') roles.push_back(Role::Signal);
            else if (c == 'G' || c == 'g') roles.push_back(Role::Ground);
            else if (c == '.' || c == '0') roles.push_back(Role::Empty);
            else throw ValidationError(path + ": unexpected character '" + std::string(1, c) + "' in layout grid");
            ++n;
        }
        if (n == 0) continue;
        if (cols == 0) cols = n;
        if (n != cols) throw ValidationError(path + ": ragged layout grid at row " + std::to_string(rows + 1));
        ++rows;
    }
    if (rows == 0) throw ValidationError(path + ": empty layout");
    return TsvLayout(rows, cols, std::move(roles));
}

TsvLayout layout_of(const json& cfg) {
    const auto& l = cfg.at("layout");
    if (l.is_null()) throw ValidationError("layout: required (--layout FILE or \"layout\" in the config)");
    if (l.is_string()) return load_layout_file(l.get<std::string>());
    return layout_from_json(l);
}

FrequencyGrid grid_of(const json& f) {
    const double a = f.at("start_hz"), b = f.at("stop_hz");
    const std::size_t n = f.at("points");
    detail::require(a > 0 && b >= a, "frequency: need 0 < start_hz <= stop_hz");
    detail::require(n >= 1, "frequency: points must be >= 1");
    detail::require(n > 1 || a == b, "frequency: a single point needs start_hz == stop_hz");
    return FrequencyGrid::linear(a, b, n);
}

fs::path prepare_out(const json& cfg) {
    const fs::path out = cfg.at("out").get<std::string>();
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw ValidationError("out: cannot create directory " + out.string() + ": " + ec.message());
    return out;
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream o(p);
    if (!o) throw SolverError("cannot write " + p.string());
    o << j.dump(2) << '\n';
}

void echo_config(const fs::path& out, const json& cfg) { write_json(out / "resolved_config.json", cfg); }

std::size_t workers_of(const json& cfg) {
    const std::size_t w = cfg.at("workers");
    return w == 0 ? default_workers() : w;
}

ProgressFn stderr_progress(const std::string& what) {
    return [what](std::size_t done, std::size_t total) {
        std::cerr << what << ": " << done << "/" << total << "\n";
    };
}

// ---------------------------------------------------------------------------
json sweep_defaults() {
    return {{"command", "sweep"},
            {"layout", nullptr},
            {"geometry", json::object()},
            {"frequency", {{"start_hz", 1e9}, {"stop_hz", 100e9}, {"points", 100}}},
            {"z_ref", 50.0},
            {"method", "modal"},
            {"report_frequency_hz", 15e9},
            {"dump_rlcg", false},
            {"name", "sweep"},
            {"workers", 0},
            {"out", "out"}};
}

int run_sweep(const json& cfg) {
    const auto x = layout_of(cfg);
    const auto g = cfg.at("geometry").get<GeometryMaterials>();
    const auto grid = grid_of(cfg.at("frequency"));
    SolveOptions so;
    so.z_ref = cfg.at("z_ref");
    detail::require(so.z_ref > 0, "z_ref must be > 0");
    const std::string method = cfg.at("method");
    if (method == "modal") so.method = SolveMethod::Modal;
    else if (method == "chain") so.method = SolveMethod::Chain;
    else throw ValidationError("method: expected modal or chain, got '" + method + "'");
    so.workers = workers_of(cfg);
    so.check_invariants = false;  // reported below instead of aborting
    const double report_f = cfg.at("report_frequency_hz");
    detail::require(report_f > 0, "report_frequency_hz must be > 0");
    // Nearest grid point, so changing the sweep does not invalidate the default.
    std::size_t report_fi = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (std::abs(grid[i] - report_f) < std::abs(grid[report_fi] - report_f)) report_fi = i;

    const auto out = prepare_out(cfg);
    echo_config(out, cfg);
    const auto model = extract_rlcg(x, g, grid);
    if (cfg.at("dump_rlcg").get<bool>()) write_json(out / "rlcg.json", rlcg_to_json(model));
    const auto s = solve_sweep(model, so);

    const std::string name = cfg.at("name");
    write_touchstone((out / (name + touchstone_extension(s.port_count()))).string(), s);

    double worst_rec = 0, worst_pass = -1;
    std::size_t rec_viol = 0, pass_viol = 0;
    for (const auto& m : s.data) {
        const double r = reciprocity_error(m), p = passivity_margin(m);
        worst_rec = std::max(worst_rec, r);
        worst_pass = std::max(worst_pass, p);
        rec_viol += r >= 1e-10;
        pass_viol += p > 1e-9;
    }
    write_json(out / "checks.json", {{"frequencies", s.data.size()},
                                     {"ports", s.port_count()},
                                     {"max_reciprocity_rfe", worst_rec},
                                     {"max_passivity_margin", worst_pass},
                                     {"reciprocity_violations", rec_viol},
                                     {"passivity_violations", pass_viol}});

    json xt;
    if (s.signal_count() >= 2) {
        auto per_f = json::array();
        for (std::size_t fi = 0; fi < s.data.size(); ++fi) {
            const auto rep = crosstalk_report(s, fi);
            per_f.push_back({{"frequency_hz", s.grid[fi]},
                             {"average_db", rep.average_db},
                             {"worst_total_db", rep.worst_total_db},
                             {"worst_victim_cell", s.signal_cells[rep.worst_victim]}});
        }
        xt["per_frequency"] = per_f;
        xt["detail"] = to_json(crosstalk_report(s, report_fi), s);
        xt["detail"]["frequency_hz"] = s.grid[report_fi];
    } else {
        xt["note"] = "crosstalk needs at least two signal TSVs";
    }
    write_json(out / "crosstalk.json", xt);
    std::cerr << "sweep: " << s.port_count() << " ports, " << s.data.size() << " frequencies -> " << out.string()
              << "\n";
    if (rec_viol || pass_viol)
        throw RunFailure("S-parameter invariants violated (" + std::to_string(rec_viol) + " reciprocity, " +
                         std::to_string(pass_viol) + " passivity); see checks.json");
    return 0;
}

// ---------------------------------------------------------------------------
json thermal_defaults() {
    return {{"command", "thermal"},
            {"layout", nullptr},
            {"geometry", json::object()},
            {"scenario", "natural-full"},
            {"faces", json::object()},
            {"excitation", {{"frequency_hz", 15e9}, {"power_w", 0.1}, {"ports", json::array()}, {"t_amb_k", 300.0}}},
            {"resolution", {{"nx", 41}, {"ny", 41}, {"nz", 21}}},
            {"max_iterations", 20},
            {"tolerance_k", 0.1},
            {"workers", 0},
            {"out", "out"}};
}

BoundaryCondition face_of(const json& j, double t_amb, const std::string& where) {
    detail::require(j.is_object() && j.contains("type"), where + ": expected {\"type\": ...}");
    const std::string type = j.at("type");
    if (type == "adiabatic") return BoundaryCondition::adiabatic();
    if (type == "convection") {
        const double h = j.at("h");
        detail::require(h > 0, where + ": h must be > 0");
        return BoundaryCondition::convection(h, j.value("t_inf", t_amb));
    }
    throw ValidationError(where + ": type must be adiabatic or convection");
}

int run_thermal(const json& cfg) {
    const auto x = layout_of(cfg);
    const auto g = cfg.at("geometry").get<GeometryMaterials>();
    const auto& e = cfg.at("excitation");
    Excitation ex;
    ex.frequency = e.at("frequency_hz");
    ex.power = e.at("power_w");
    detail::require(ex.power >= 0, "excitation.power_w must be >= 0");
    ex.excited_ports = e.at("ports").get<std::vector<std::size_t>>();
    ex.t_amb = e.at("t_amb_k");
    const auto scenario = preset_from_name(cfg.at("scenario"));
    ex.faces = preset_faces(scenario, ex.t_amb);
    static const std::array<const char*, 6> face_names{"x_min", "x_max", "y_min", "y_max", "bottom", "top"};
    for (auto it = cfg.at("faces").begin(); it != cfg.at("faces").end(); ++it) {
        const auto pos = std::find(face_names.begin(), face_names.end(), it.key());
        if (pos == face_names.end()) throw ValidationError("faces: unknown face '" + it.key() + "'");
        ex.faces[static_cast<std::size_t>(pos - face_names.begin())] = face_of(it.value(), ex.t_amb, "faces." + it.key());
    }
    const auto& res = cfg.at("resolution");
    ex.resolution = {res.at("nx"), res.at("ny"), res.at("nz")};
    ex.max_iterations = cfg.at("max_iterations");
    ex.tolerance = cfg.at("tolerance_k");
    ex.workers = workers_of(cfg);
    if (scenario == ThermalPreset::NaturalSparse && x.count(Role::Empty) == 0)
        std::cerr << "thermal: warning: natural-sparse scenario with a fully populated layout\n";
    for (auto p : ex.excited_ports)
        detail::require(p < 2 * x.signal_count(), "excitation.ports: port " + std::to_string(p) + " out of range");

    const auto out = prepare_out(cfg);
    echo_config(out, cfg);
    ElectrothermalResult r;
    try {
        r = electrothermal_fixed_point(x, g, FrequencyGrid({ex.frequency}), ex);
    } catch (const SolverError& err) {
        write_json(out / "summary.json", {{"converged", false}, {"error", err.what()}});
        throw;
    }
    {
        std::ofstream csv(out / "temperature.csv");
        write_temperature_csv(csv, r.field);
    }
    json summary = {{"scenario", name(scenario)},
                    {"converged", r.converged},
                    {"iterations", r.iterations},
                    {"t_max_k", r.field.t_max},
                    {"t_amb_k", ex.t_amb},
                    {"dissipated_w", r.sources.total_power()},
                    {"heat_in_w", r.field.heat_in},
                    {"heat_out_w", r.field.heat_out},
                    {"k_eq_w_mk", {{"k_x", r.block.k_x}, {"k_y", r.block.k_y}, {"k_z", r.block.k_z}}},
                    {"rho_cp_j_m3k", r.block.rho_cp},
                    {"t_max_history_k", r.t_max_history},
                    {"delta_history_k", r.delta_history},
                    {"sigma_cu_history", r.sigma_history}};
    write_json(out / "summary.json", summary);
    std::cerr << "thermal: T_max " << r.field.t_max << " K after " << r.iterations << " iterations\n";
    if (!r.converged) {
        std::ostringstream os;
        os << "electrothermal loop did not converge in " << r.iterations << " iterations; |dT_max| trace:";
        for (double d : r.delta_history) os << ' ' << d;
        throw RunFailure(os.str());
    }
    return 0;
}

// ---------------------------------------------------------------------------
json optimize_defaults() {
    return {{"command", "optimize"},
            {"mode", "combinatorial"},
            {"geometry", json::object()},
            {"frequency_hz", 15e9},
            {"evaluator", "analytical"},
            {"surrogate_path", ""},
            {"rows", 3},
            {"cols", 3},
            {"s_min", 2},
            {"s_max", 3},
            {"symmetry", true},
            {"checkpoint_every", 10000},
            {"layout", nullptr},
            {"ranges", {{"r_um", {2.0, 6.0}}, {"p_um", {20.0, 60.0}}, {"h_um", {60.0, 100.0}}, {"t_ox_um", {0.5, 3.0}}}},
            {"sampler", "lhs"},
            {"samples", 4096},
            {"grid_points", 5},
            {"seed", 42},
            {"workers", 0},
            {"out", "out"}};
}

Range range_of(const json& j, const std::string& where) {
    detail::require(j.is_array() && j.size() == 2, where + ": expected [lo, hi]");
    return {j[0].get<double>(), j[1].get<double>()};
}

int run_optimize(const json& cfg, bool resume) {
    const std::string mode = cfg.at("mode");
    const auto g = cfg.at("geometry").get<GeometryMaterials>();
    const auto out = prepare_out(cfg);
    if (mode == "combinatorial") {
        SearchConfig c;
        c.rows = cfg.at("rows");
        c.cols = cfg.at("cols");
        c.s_min = cfg.at("s_min");
        c.s_max = cfg.at("s_max");
        c.frequency = cfg.at("frequency_hz");
        c.geometry = g;
        c.symmetry = cfg.at("symmetry");
        c.workers = workers_of(cfg);
        c.evaluator = cfg.at("evaluator");
        c.surrogate_path = cfg.at("surrogate_path");
        c.checkpoint_every = cfg.at("checkpoint_every");
        c.checkpoint_path = (out / "checkpoint.bin").string();
        c.resume = resume;
        echo_config(out, cfg);
        const auto r = combinatorial_search(c, stderr_progress("optimize"));
        {
            std::ofstream csv(out / "results.csv");
            write_search_csv(csv, r, g);
        }
        write_json(out / "front.json", front_json(r, g, c.frequency));
        std::cerr << "optimize: " << r.records.size() << " designs evaluated (" << r.designs_covered
                  << " layouts covered), " << r.failures << " failed, front size " << r.front.size() << "\n";
        for (const auto& d : r.records)
            if (!d.ok) std::cerr << "optimize: " << d.error << "\n";
        return 0;
    }
    if (mode == "geometric") {
        SweepConfig c;
        c.layout = layout_of(cfg);
        c.base = g;
        const auto& rg = cfg.at("ranges");
        c.r = range_of(rg.at("r_um"), "ranges.r_um");
        c.p = range_of(rg.at("p_um"), "ranges.p_um");
        c.h = range_of(rg.at("h_um"), "ranges.h_um");
        c.t_ox = range_of(rg.at("t_ox_um"), "ranges.t_ox_um");
        const std::string sampler = cfg.at("sampler");
        if (sampler == "lhs") c.sampler = Sampler::LatinHypercube;
        else if (sampler == "grid") c.sampler = Sampler::Grid;
        else throw ValidationError("sampler: expected lhs or grid, got '" + sampler + "'");
        c.samples = cfg.at("samples");
        c.grid_points = cfg.at("grid_points");
        c.seed = cfg.at("seed");
        c.frequency = cfg.at("frequency_hz");
        c.workers = workers_of(cfg);
        c.evaluator = cfg.at("evaluator");
        c.surrogate_path = cfg.at("surrogate_path");
        echo_config(out, cfg);
        const auto r = geometric_sweep(c, stderr_progress("optimize"));
        {
            std::ofstream csv(out / "results.csv");
            write_sweep_csv(csv, r);
        }
        write_json(out / "front.json", front_json(r, c));
        for (const auto& s : r.skipped) std::cerr << "optimize: skipped infeasible sample " << s << "\n";
        for (const auto& d : r.records)
            if (!d.ok) std::cerr << "optimize: " << d.error << "\n";
        std::cerr << "optimize: " << r.records.size() << " samples, " << r.skipped.size() << " skipped, front size "
                  << r.front.size() << "\n";
        return 0;
    }
    throw ValidationError("mode: expected combinatorial or geometric, got '" + mode + "'");
}

// ---------------------------------------------------------------------------
json dataset_defaults() {
    return {{"command", "dataset"},
            {"geometry", json::object()},
            {"count", 1000},
            {"min_size", 3},
            {"max_size", 20},
            {"signal_probability", 0.5},
            {"empty_probability", 0.0},
            {"ranges", {{"r_um", {2.0, 6.0}}, {"p_um", {20.0, 60.0}}, {"h_um", {60.0, 100.0}}, {"t_ox_um", {0.5, 3.0}}}},
            {"frequency", {{"start_hz", 1e9}, {"stop_hz", 100e9}, {"points", 100}}},
            {"validation_fraction", 0.2},
            {"seed", 42},
            {"workers", 0},
            {"out", "out"}};
}

int run_dataset(const json& cfg) {
    DatasetConfig c;
    c.base = cfg.at("geometry").get<GeometryMaterials>();
    c.count = cfg.at("count");
    c.min_size = cfg.at("min_size");
    c.max_size = cfg.at("max_size");
    c.signal_probability = cfg.at("signal_probability");
    c.empty_probability = cfg.at("empty_probability");
    const auto& rg = cfg.at("ranges");
    c.r = range_of(rg.at("r_um"), "ranges.r_um");
    c.p = range_of(rg.at("p_um"), "ranges.p_um");
    c.h = range_of(rg.at("h_um"), "ranges.h_um");
    c.t_ox = range_of(rg.at("t_ox_um"), "ranges.t_ox_um");
    c.grid = grid_of(cfg.at("frequency"));
    c.validation_fraction = cfg.at("validation_fraction");
    c.seed = cfg.at("seed");
    c.workers = workers_of(cfg);
    const auto out = prepare_out(cfg);
    echo_config(out, cfg);
    std::ofstream train(out / "train.jsonl"), val(out / "val.jsonl");
    if (!train || !val) throw SolverError("cannot open dataset files in " + out.string());
    const auto sum = write_dataset(c, train, val, stderr_progress("dataset"));
    std::cerr << "dataset: " << sum.train << " train, " << sum.val << " val records -> " << out.string() << "\n";
    return 0;
}

// Geometry flags shared by every command.
struct GeometryFlags {
    double r = 0, p = 0, h = 0, t_ox = 0, h_imd = 0, sigma_s = 0, n_a = 0;
    std::vector<std::pair<CLI::Option*, std::pair<const char*, double*>>> opts;

    void add(CLI::App* app) {
        auto opt = [&](const char* flag, const char* key, double* v, const char* help) {
            opts.push_back({app->add_option(flag, *v, help), {key, v}});
        };
        opt("--r-um", "r_cond", &r, "TSV conductor radius [um]");
        opt("--pitch-um", "p_int", &p, "TSV pitch [um]");
        opt("--height-um", "h_int", &h, "TSV height [um]");
        opt("--t-ox-um", "t_ins", &t_ox, "oxide liner thickness [um]");
        opt("--h-imd-um", "h_imd", &h_imd, "inter-metal dielectric height [um]");
        opt("--sigma-si", "sigma_s", &sigma_s, "substrate conductivity [S/m]");
        opt("--n-a", "n_a", &n_a, "substrate doping [cm^-3]");
    }

    void apply(json& flags) const {
        for (const auto& [o, kv] : opts)
            if (o->count() > 0) flags["geometry"][kv.first] = *kv.second;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"TSV array electro-thermal solver and layout optimizer"};
    app.require_subcommand(1);
    std::string config;
    std::size_t workers = 0;
    auto* workers_opt = app.add_option("--workers", workers, "worker threads (0: all cores)");
    app.add_option("--config", config, "JSON config file; flags override its values")->check(CLI::ExistingFile);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "broadband S-parameters of a layout");
    GeometryFlags sweep_geo;
    sweep_geo.add(sweep);
    std::string sweep_layout, sweep_out, sweep_method, sweep_name;
    double f_start = 0, f_stop = 0, z_ref = 0, report_ghz = 0;
    std::size_t points = 0;
    bool dump_rlcg = false;
    auto* s_layout = sweep->add_option("--layout", sweep_layout, "layout file (JSON or S/G/. grid)");
    auto* s_out = sweep->add_option("--out", sweep_out, "output directory");
    auto* s_fstart = sweep->add_option("--f-start-ghz", f_start, "first frequency [GHz]");
    auto* s_fstop = sweep->add_option("--f-stop-ghz", f_stop, "last frequency [GHz]");
    auto* s_points = sweep->add_option("--points", points, "number of frequencies");
    auto* s_zref = sweep->add_option("--z-ref", z_ref, "port reference impedance [ohm]");
    auto* s_method = sweep->add_option("--method", sweep_method, "modal or chain");
    auto* s_report = sweep->add_option("--report-ghz", report_ghz, "frequency of the detailed crosstalk report [GHz]");
    auto* s_name = sweep->add_option("--name", sweep_name, "Touchstone file stem");
    auto* s_dump = sweep->add_flag("--dump-rlcg", dump_rlcg, "write the extracted per-unit-length model");

    // thermal
    auto* thermal = app.add_subcommand("thermal", "electro-thermal steady state of a layout");
    GeometryFlags th_geo;
    th_geo.add(thermal);
    std::string th_layout, th_out, scenario, scenario_json;
    double power = 0, th_freq = 0, t_amb = 0;
    std::vector<std::size_t> ports;
    std::size_t nx = 0, ny = 0, nz = 0;
    auto* t_layout = thermal->add_option("--layout", th_layout, "layout file (JSON or S/G/. grid)");
    auto* t_out = thermal->add_option("--out", th_out, "output directory");
    auto* t_scn = thermal->add_option("--scenario", scenario, "natural-full, natural-sparse or forced-top");
    auto* t_sjson = thermal->add_option("--scenario-json", scenario_json, "custom face conditions (JSON object)")
                        ->check(CLI::ExistingFile);
    auto* t_power = thermal->add_option("--power-w", power, "input power per excited port [W]");
    auto* t_freq = thermal->add_option("--freq-ghz", th_freq, "excitation frequency [GHz]");
    auto* t_ports = thermal->add_option("--excite", ports, "excited port indices (default: 0)");
    auto* t_amb_opt = thermal->add_option("--t-amb-k", t_amb, "ambient temperature [K]");
    auto* t_nx = thermal->add_option("--nx", nx, "grid nodes along x");
    auto* t_ny = thermal->add_option("--ny", ny, "grid nodes along y");
    auto* t_nz = thermal->add_option("--nz", nz, "grid nodes along z");

    // optimize
    auto* optimize = app.add_subcommand("optimize", "layout search or geometric sweep with Pareto extraction");
    GeometryFlags opt_geo;
    opt_geo.add(optimize);
    std::string mode, o_layout, o_out, evaluator, surrogate, sampler;
    std::size_t rows = 0, cols = 0, s_min = 0, s_max = 0, samples = 0, grid_points = 0, seed = 0;
    double o_freq = 0;
    bool no_symmetry = false, resume = false;
    auto* o_mode = optimize->add_option("--mode", mode, "combinatorial or geometric");
    auto* o_rows = optimize->add_option("--rows", rows, "grid rows");
    auto* o_cols = optimize->add_option("--cols", cols, "grid columns");
    auto* o_smin = optimize->add_option("--s-min", s_min, "smallest signal count");
    auto* o_smax = optimize->add_option("--s-max", s_max, "largest signal count");
    auto* o_nosym = optimize->add_flag("--no-symmetry", no_symmetry, "evaluate every layout, not one per D4 orbit");
    auto* o_layout_opt = optimize->add_option("--layout", o_layout, "fixed layout for --mode geometric");
    auto* o_sampler = optimize->add_option("--sampler", sampler, "lhs or grid");
    auto* o_samples = optimize->add_option("--samples", samples, "Latin-hypercube sample count");
    auto* o_gp = optimize->add_option("--grid-points", grid_points, "grid sampler points per axis");
    auto* o_seed = optimize->add_option("--seed", seed, "sampler seed");
    auto* o_freq_opt = optimize->add_option("--freq-ghz", o_freq, "evaluation frequency [GHz]");
    auto* o_eval = optimize->add_option("--evaluator", evaluator, "analytical or surrogate-file");
    auto* o_sur = optimize->add_option("--surrogate", surrogate, "prediction file for --evaluator surrogate-file");
    auto* o_out_opt = optimize->add_option("--out", o_out, "output directory");
    optimize->add_flag("--resume", resume, "continue from the checkpoint in the output directory");

    // dataset
    auto* dataset = app.add_subcommand("dataset", "labelled JSON-lines samples for surrogate training");
    GeometryFlags ds_geo;
    ds_geo.add(dataset);
    std::size_t count = 0, min_size = 0, max_size = 0, ds_seed = 0;
    double val_fraction = 0;
    std::string d_out;
    auto* d_count = dataset->add_option("--count", count, "number of samples");
    auto* d_min = dataset->add_option("--min-size", min_size, "smallest grid side");
    auto* d_max = dataset->add_option("--max-size", max_size, "largest grid side");
    auto* d_seed = dataset->add_option("--seed", ds_seed, "generator seed");
    auto* d_val = dataset->add_option("--val-fraction", val_fraction, "validation share of the samples");
    auto* d_out_opt = dataset->add_option("--out", d_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_validation;
    }

    auto set = [](json& j, CLI::Option* o, const char* key, const auto& v) {
        if (o->count() > 0) j[key] = v;
    };

    try {
        json flags = json::object();
        if (workers_opt->count() > 0) flags["workers"] = workers;
        if (*sweep) {
            sweep_geo.apply(flags);
            set(flags, s_layout, "layout", sweep_layout);
            set(flags, s_out, "out", sweep_out);
            if (s_fstart->count()) flags["frequency"]["start_hz"] = f_start * 1e9;
            if (s_fstop->count()) flags["frequency"]["stop_hz"] = f_stop * 1e9;
            set(flags["frequency"], s_points, "points", points);
            if (flags["frequency"].is_null()) flags.erase("frequency");
            set(flags, s_zref, "z_ref", z_ref);
            set(flags, s_method, "method", sweep_method);
            if (s_report->count()) flags["report_frequency_hz"] = report_ghz * 1e9;
            set(flags, s_name, "name", sweep_name);
            set(flags, s_dump, "dump_rlcg", dump_rlcg);
            return run_sweep(resolve(sweep_defaults(), config, flags));
        }
        if (*thermal) {
            th_geo.apply(flags);
            set(flags, t_layout, "layout", th_layout);
            set(flags, t_out, "out", th_out);
            set(flags, t_scn, "scenario", scenario);
            if (t_sjson->count()) flags["faces"] = read_json_file(scenario_json);
            if (t_power->count()) flags["excitation"]["power_w"] = power;
            if (t_freq->count()) flags["excitation"]["frequency_hz"] = th_freq * 1e9;
            if (t_ports->count()) flags["excitation"]["ports"] = ports;
            if (t_amb_opt->count()) flags["excitation"]["t_amb_k"] = t_amb;
            if (t_nx->count()) flags["resolution"]["nx"] = nx;
            if (t_ny->count()) flags["resolution"]["ny"] = ny;
            if (t_nz->count()) flags["resolution"]["nz"] = nz;
            return run_thermal(resolve(thermal_defaults(), config, flags));
        }
        if (*optimize) {
            opt_geo.apply(flags);
            set(flags, o_mode, "mode", mode);
            set(flags, o_rows, "rows", rows);
            set(flags, o_cols, "cols", cols);
            set(flags, o_smin, "s_min", s_min);
            set(flags, o_smax, "s_max", s_max);
            if (o_nosym->count()) flags["symmetry"] = false;
            set(flags, o_layout_opt, "layout", o_layout);
            set(flags, o_sampler, "sampler", sampler);
            set(flags, o_samples, "samples", samples);
            set(flags, o_gp, "grid_points", grid_points);
            set(flags, o_seed, "seed", seed);
            if (o_freq_opt->count()) flags["frequency_hz"] = o_freq * 1e9;
            set(flags, o_eval, "evaluator", evaluator);
            set(flags, o_sur, "surrogate_path", surrogate);
            set(flags, o_out_opt, "out", o_out);
            return run_optimize(resolve(optimize_defaults(), config, flags), resume);
        }
        if (*dataset) {
            ds_geo.apply(flags);
            set(flags, d_count, "count", count);
            set(flags, d_min, "min_size", min_size);
            set(flags, d_max, "max_size", max_size);
            set(flags, d_seed, "seed", ds_seed);
            set(flags, d_val, "validation_fraction", val_fraction);
            set(flags, d_out_opt, "out", d_out);
            return run_dataset(resolve(dataset_defaults(), config, flags));
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation;
    } catch (const json::exception& e) {
        std::cerr << "error: invalid configuration value: " << e.what() << "\n";
        return exit_validation;
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return exit_solver;
    } catch (const RunFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_solver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_solver;
    }
    return 0;
}

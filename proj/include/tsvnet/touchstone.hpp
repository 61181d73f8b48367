#pragma once

#include <cctype>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>

#include "em_solver.hpp"

namespace tsvnet {

// Touchstone v1, real/imaginary pairs, Hz. Port names and order go into the
// comment header so the file can be read back with its labels.
inline void write_touchstone(std::ostream& os, const SParameterBlock& s) {
    const auto n = s.port_count();
    detail::require(n >= 1, "touchstone: no ports");
    os << "! tsvnet S-parameters, " << s.signal_count() << " signal TSVs, " << n << " ports\n";
    os << "! reference impedance " << s.z_ref << " ohm on every port\n";
    for (std::size_t p = 0; p < n; ++p) os << "! port " << (p + 1) << " " << s.ports[p].name() << "\n";
    os << "# Hz S RI R " << s.z_ref << "\n";
    os << std::scientific << std::setprecision(12);
    auto pair = [&](const Complex& c) { os << ' ' << c.real() << ' ' << c.imag(); };
    for (std::size_t f = 0; f < s.data.size(); ++f) {
        const auto& m = s.data[f];
        os << s.grid[f];
        if (n == 2) {
            // Two-port files list S11 S21 S12 S22.
            pair(m(0, 0));
            pair(m(1, 0));
            pair(m(0, 1));
            pair(m(1, 1));
            os << '\n';
            continue;
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j > 0 && j % 4 == 0) os << "\n";
                pair(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            }
            os << '\n';
        }
    }
    os << std::defaultfloat;
}

inline std::string touchstone_extension(std::size_t ports) { return ".s" + std::to_string(ports) + "p"; }

inline void write_touchstone(const std::string& path, const SParameterBlock& s) {
    std::ofstream out(path);
    if (!out) throw SolverError("cannot write " + path);
    write_touchstone(out, s);
    if (!out) throw SolverError("write failed: " + path);
}

// Reads v1 files with RI, MA or DB data in Hz/kHz/MHz/GHz. Port labels are
// restored from "! port k tsvC_top|tsvC_bot" comments when present.
inline SParameterBlock read_touchstone(std::istream& is, std::size_t ports) {
    detail::require(ports >= 1, "touchstone: port count must be >= 1");
    double unit = 1e9;  // v1 default is GHz
    std::string format = "MA";
    double z_ref = 50.0;
    bool have_option = false;
    std::vector<double> values;
    std::vector<PortLabel> labels(ports);
    std::vector<bool> labelled(ports, false);
    std::string line;
    while (std::getline(is, line)) {
        const auto bang = line.find('!');
        if (bang != std::string::npos) {
            std::istringstream cs(line.substr(bang + 1));
            std::string word, name;
            std::size_t k = 0;
            if (cs >> word >> k >> name && word == "port" && k >= 1 && k <= ports) {
                const auto us = name.rfind('_');
                if (name.rfind("tsv", 0) == 0 && us != std::string::npos) {
                    labels[k - 1].cell = std::stoul(name.substr(3, us - 3));
                    labels[k - 1].top = name.substr(us + 1) == "top";
                    labelled[k - 1] = true;
                }
            }
            line.resize(bang);
        }
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok)) continue;
        if (tok[0] == '#') {
            detail::require(!have_option, "touchstone: more than one option line");
            have_option = true;
            std::string rest = line.substr(line.find('#') + 1);
            std::istringstream os(rest);
            std::string w;
            while (os >> w) {
                for (auto& ch : w) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
                if (w == "HZ") unit = 1;
                else if (w == "KHZ") unit = 1e3;
                else if (w == "MHZ") unit = 1e6;
                else if (w == "GHZ") unit = 1e9;
                else if (w == "RI" || w == "MA" || w == "DB") format = w;
                else if (w == "S") continue;
                else if (w == "R") {
                    detail::require(static_cast<bool>(os >> z_ref), "touchstone: R without a value");
                } else {
                    throw ValidationError("touchstone: unsupported option '" + w + "'");
                }
            }
            continue;
        }
        ls.clear();
        ls.str(line);
        double v;
        while (ls >> v) values.push_back(v);
        if (!ls.eof()) throw ValidationError("touchstone: bad number in line '" + line + "'");
    }
    const std::size_t per = 1 + 2 * ports * ports;
    detail::require(!values.empty() && values.size() % per == 0,
                    "touchstone: data length " + std::to_string(values.size()) + " is not a multiple of " +
                        std::to_string(per));
    const auto nf = values.size() / per;
    SParameterBlock s;
    s.z_ref = z_ref;
    std::vector<double> freq;
    const auto n = static_cast<Eigen::Index>(ports);
    for (std::size_t f = 0; f < nf; ++f) {
        const double* row = values.data() + f * per;
        freq.push_back(row[0] * unit);
        CMat m(n, n);
        for (Eigen::Index k = 0; k < n * n; ++k) {
            const double a = row[1 + 2 * k], b = row[2 + 2 * k];
            Complex c;
            if (format == "RI") c = {a, b};
            else if (format == "MA") c = std::polar(a, b * constants::pi / 180.0);
            else c = std::polar(std::pow(10.0, a / 20.0), b * constants::pi / 180.0);
            Eigen::Index i = k / n, j = k % n;
            if (ports == 2) {
                static constexpr Eigen::Index order[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
                i = order[k][0];
                j = order[k][1];
            }
            m(i, j) = c;
        }
        s.data.push_back(std::move(m));
    }
    s.grid = FrequencyGrid(std::move(freq));
    if (std::all_of(labelled.begin(), labelled.end(), [](bool b) { return b; })) {
        s.ports = labels;
        for (const auto& p : labels)
            if (p.top) s.signal_cells.push_back(p.cell);
    } else {
        for (std::size_t p = 0; p < ports; ++p) s.ports.push_back({p, true});
    }
    return s;
}

inline SParameterBlock read_touchstone(const std::string& path) {
    const auto dot = path.rfind('.');
    detail::require(dot != std::string::npos, "touchstone: cannot infer port count from '" + path + "'");
    std::string ext = path.substr(dot + 1);
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    detail::require(ext.size() >= 3 && ext.front() == 's' && ext.back() == 'p',
                    "touchstone: extension must be .sNp: '" + path + "'");
    const auto ports = std::stoul(ext.substr(1, ext.size() - 2));
    std::ifstream in(path);
    if (!in) throw ValidationError("touchstone file not readable: " + path);
    return read_touchstone(in, ports);
}

} // namespace tsvnet

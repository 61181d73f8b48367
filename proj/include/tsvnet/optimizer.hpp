#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "em_solver.hpp"
#include "thermal.hpp"

namespace tsvnet {

// Bit i set means cell i carries a signal; every other cell is ground.
using CellMask = std::uint64_t;

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 acc = 1;
    for (std::uint64_t i = 1; i <= k; ++i) acc = acc * (n - k + i) / i;
    return static_cast<std::uint64_t>(acc);
}

inline TsvLayout layout_from_mask(std::size_t rows, std::size_t cols, CellMask mask) {
    std::vector<Role> roles(rows * cols, Role::Ground);
    for (std::size_t i = 0; i < roles.size(); ++i)
        if ((mask >> i) & 1U) roles[i] = Role::Signal;
    return TsvLayout(rows, cols, std::move(roles));
}

inline CellMask mask_from_layout(const TsvLayout& x) {
    detail::require(x.cells() <= 64, "mask_from_layout: at most 64 cells");
    detail::require(x.count(Role::Empty) == 0, "mask_from_layout: layout has empty cells");
    CellMask m = 0;
    for (std::size_t i = 0; i < x.cells(); ++i)
        if (x.role(i) == Role::Signal) m |= CellMask{1} << i;
    return m;
}

// Calls fn(mask) for every placement of n_signal signals, in lexicographic
// order of the sorted signal index set. Returns the number of layouts.
template <typename Fn>
std::uint64_t enumerate_layouts(std::size_t rows, std::size_t cols, std::size_t n_signal, Fn&& fn) {
    const std::size_t n = rows * cols;
    detail::require(rows > 0 && cols > 0, "enumerate_layouts: empty grid");
    detail::require(n <= 64, "enumerate_layouts: at most 64 cells");
    detail::require(n_signal > 0 && n_signal < n,
                    "enumerate_layouts: n_signal must be in [1, " + std::to_string(n - 1) + "] so a ground remains");
    std::vector<std::size_t> c(n_signal);
    for (std::size_t i = 0; i < n_signal; ++i) c[i] = i;
    std::uint64_t count = 0;
    for (;;) {
        CellMask m = 0;
        for (auto i : c) m |= CellMask{1} << i;
        fn(m);
        ++count;
        std::size_t i = n_signal;
        while (i > 0 && c[i - 1] == n - n_signal + i - 1) --i;
        if (i == 0) break;
        ++c[i - 1];
        for (std::size_t j = i; j < n_signal; ++j) c[j] = c[j - 1] + 1;
    }
    return count;
}

inline std::uint64_t count_layouts(std::size_t rows, std::size_t cols, std::size_t n_signal) {
    return enumerate_layouts(rows, cols, n_signal, [](CellMask) {});
}

// D4 images of a mask via per-row lookup tables. Keys put cell 0 in the most
// significant position, so the smallest key is the lexicographically smallest
// role sequence (ground sorts before signal), matching canonical_form.
class D4Canonicalizer {
public:
    explicit D4Canonicalizer(std::size_t n) : n_(n) {
        detail::require(n >= 1 && n <= 8, "symmetry reduction supports square grids up to 8x8");
        const std::size_t width = std::size_t{1} << n;
        tables_.assign(8 * n * width, 0);
        const std::size_t cells = n * n;
        for (std::size_t t = 0; t < 8; ++t) {
            const auto perm = d4_permutation(all_d4[t], n, n);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t bits = 0; bits < width; ++bits) {
                    CellMask key = 0;
                    for (std::size_t c = 0; c < n; ++c)
                        if ((bits >> c) & 1U) key |= CellMask{1} << (cells - 1 - perm[r * n + c]);
                    tables_[(t * n + r) * width + bits] = key;
                }
        }
    }

    std::size_t size() const { return n_; }

    CellMask key(CellMask mask, std::size_t t) const {
        const std::size_t width = std::size_t{1} << n_;
        const CellMask row_mask = width - 1;
        CellMask k = 0;
        for (std::size_t r = 0; r < n_; ++r) k |= tables_[(t * n_ + r) * width + ((mask >> (r * n_)) & row_mask)];
        return k;
    }

    CellMask mask_of_key(CellMask key) const {
        const std::size_t cells = n_ * n_;
        CellMask m = 0;
        for (std::size_t i = 0; i < cells; ++i)
            if ((key >> (cells - 1 - i)) & 1U) m |= CellMask{1} << i;
        return m;
    }

    struct Orbit {
        CellMask canonical = 0;
        std::uint8_t size = 0;
        bool is_canonical = false;
    };

    Orbit orbit(CellMask mask) const {
        std::array<CellMask, 8> keys{};
        for (std::size_t t = 0; t < 8; ++t) keys[t] = key(mask, t);
        const CellMask self = keys[0];
        std::sort(keys.begin(), keys.end());
        const auto distinct = std::unique(keys.begin(), keys.end()) - keys.begin();
        return {mask_of_key(keys[0]), static_cast<std::uint8_t>(distinct), keys[0] == self};
    }

private:
    std::size_t n_;
    std::vector<CellMask> tables_;
};

struct SymmetryStats {
    std::uint64_t total = 0;
    std::uint64_t canonical = 0;
    std::uint64_t orbit_sum = 0;  // equals total when every orbit is covered once
};

// Streams only canonical representatives: fn(mask, orbit_size).
template <typename Fn>
SymmetryStats symmetry_reduce(std::size_t rows, std::size_t cols, std::size_t n_signal, Fn&& fn) {
    if (rows != cols) throw ValidationError("symmetry_reduce: requires a square grid");
    const D4Canonicalizer d4(rows);
    SymmetryStats st;
    st.total = enumerate_layouts(rows, cols, n_signal, [&](CellMask m) {
        const auto o = d4.orbit(m);
        if (!o.is_canonical) return;
        ++st.canonical;
        st.orbit_sum += o.size;
        fn(m, o.size);
    });
    return st;
}

inline SymmetryStats symmetry_reduce(std::size_t rows, std::size_t cols, std::size_t n_signal) {
    return symmetry_reduce(rows, cols, n_signal, [](CellMask, std::uint8_t) {});
}

// ---------------------------------------------------------------------------
struct ObjectiveVector {
    double max_reflection = 0;   // dB, max |S11| over signals
    double mean_insertion = 0;   // dB, mean of dB|S21| over signals
    double worst_crosstalk = 0;  // dB, max over victims of the total NEXT+FEXT
    double k_z = 0;              // W/mK

    friend bool operator==(const ObjectiveVector&, const ObjectiveVector&) = default;
};

inline nlohmann::json to_json(const ObjectiveVector& o) {
    return {{"max_s11_db", o.max_reflection},
            {"mean_s21_db", o.mean_insertion},
            {"worst_xtalk_db", o.worst_crosstalk},
            {"k_z_w_mk", o.k_z}};
}

// Per-design S-parameter labels at one frequency. Signal ordinals follow
// ascending cell index; pairs are ordered (victim, aggressor), victim != aggressor.
struct DesignLabels {
    std::vector<std::size_t> signal_cells;
    std::vector<Complex> s11;   // S(top v, top v)
    std::vector<Complex> s21;   // S(bottom v, top v)
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<Complex> next;  // S(top v, top a)
    std::vector<Complex> fext;  // S(top v, bottom a)
};

inline DesignLabels labels_from_s(const SParameterBlock& s, std::size_t fi) {
    const auto& m = s.data.at(fi);
    DesignLabels l;
    l.signal_cells = s.signal_cells;
    const auto ns = s.signal_count();
    for (std::size_t v = 0; v < ns; ++v) {
        l.s11.push_back(m(s.top(v), s.top(v)));
        l.s21.push_back(m(s.bottom(v), s.top(v)));
    }
    for (std::size_t v = 0; v < ns; ++v)
        for (std::size_t a = 0; a < ns; ++a) {
            if (a == v) continue;
            l.pairs.emplace_back(v, a);
            l.next.push_back(m(s.top(v), s.top(a)));
            l.fext.push_back(m(s.top(v), s.bottom(a)));
        }
    return l;
}

namespace detail {
    inline nlohmann::json complex_list(const std::vector<Complex>& v) {
        auto out = nlohmann::json::array();
        for (const auto& c : v) out.push_back({c.real(), c.imag()});
        return out;
    }
    inline std::vector<Complex> complex_list(const nlohmann::json& j, const char* what) {
        require(j.is_array(), std::string("labels: ") + what + " must be an array");
        std::vector<Complex> out;
        for (const auto& e : j) {
            require(e.is_array() && e.size() == 2, std::string("labels: ") + what + " entries must be [re, im]");
            out.emplace_back(e[0].get<double>(), e[1].get<double>());
        }
        return out;
    }
}

inline nlohmann::json to_json(const DesignLabels& l) {
    auto pairs = nlohmann::json::array();
    for (auto [v, a] : l.pairs) pairs.push_back({v, a});
    return {{"signal_cells", l.signal_cells},
            {"s11", detail::complex_list(l.s11)},
            {"s21", detail::complex_list(l.s21)},
            {"pairs", pairs},
            {"next", detail::complex_list(l.next)},
            {"fext", detail::complex_list(l.fext)}};
}

inline DesignLabels labels_from_json(const nlohmann::json& j) {
    DesignLabels l;
    l.signal_cells = j.at("signal_cells").get<std::vector<std::size_t>>();
    l.s11 = detail::complex_list(j.at("s11"), "s11");
    l.s21 = detail::complex_list(j.at("s21"), "s21");
    for (const auto& p : j.at("pairs")) l.pairs.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
    l.next = detail::complex_list(j.at("next"), "next");
    l.fext = detail::complex_list(j.at("fext"), "fext");
    const auto ns = l.signal_cells.size();
    detail::require(l.s11.size() == ns && l.s21.size() == ns, "labels: s11/s21 length must match signal_cells");
    detail::require(l.next.size() == l.pairs.size() && l.fext.size() == l.pairs.size(),
                    "labels: next/fext length must match pairs");
    for (auto [v, a] : l.pairs) detail::require(v < ns && a < ns && v != a, "labels: invalid signal pair");
    return l;
}

inline ObjectiveVector objectives_from_labels(const DesignLabels& l, double k_z) {
    const auto ns = l.signal_cells.size();
    detail::require(ns >= 2, "objectives: crosstalk needs at least two signal TSVs");
    ObjectiveVector o;
    o.max_reflection = -std::numeric_limits<double>::infinity();
    double il = 0;
    for (std::size_t v = 0; v < ns; ++v) {
        o.max_reflection = std::max(o.max_reflection, to_db(std::abs(l.s11[v])));
        il += to_db(std::abs(l.s21[v]));
    }
    o.mean_insertion = il / static_cast<double>(ns);
    std::vector<double> acc(ns, 0.0);
    for (std::size_t p = 0; p < l.pairs.size(); ++p) acc[l.pairs[p].first] += std::norm(l.next[p]) + std::norm(l.fext[p]);
    o.worst_crosstalk = to_db(std::sqrt(*std::max_element(acc.begin(), acc.end())));
    o.k_z = k_z;
    const bool finite = std::isfinite(o.max_reflection) && std::isfinite(o.mean_insertion) &&
                        std::isfinite(o.worst_crosstalk) && std::isfinite(o.k_z);
    if (!finite) throw SolverError("objectives: non-finite objective value");
    return o;
}

// Electrical objectives at frequency f plus the array k_z.
using Evaluator = std::function<ObjectiveVector(const TsvLayout&, const GeometryMaterials&, double)>;

inline ObjectiveVector evaluate_design(const TsvLayout& x, const GeometryMaterials& g, double f) {
    detail::require(x.electrically_solvable(), "evaluate_design: layout needs a signal and a ground TSV");
    detail::require(x.signal_count() >= 2, "evaluate_design: crosstalk needs at least two signal TSVs");
    SolveOptions so;
    const auto s = solve_sweep(x, g, FrequencyGrid({f}), so);
    return objectives_from_labels(labels_from_s(s, 0), array_etc(x, g).k_z);
}

namespace detail {
    inline std::string design_key(const TsvLayout& x, const GeometryMaterials& g, double f) {
        std::ostringstream os;
        os << std::setprecision(17) << x.rows() << 'x' << x.cols() << ':';
        for (auto r : x.roles()) os << static_cast<int>(r) << ',';
        os << '|' << g.r_cond << ',' << g.p_int << ',' << g.h_int << ',' << g.t_ins << '|' << f;
        return os.str();
    }
}

// Reads predictions written in the dataset record schema (one JSON object per
// line with layout, geometry, frequency_hz and labels) and serves objectives
// for matching designs. k_z is always computed analytically.
class SurrogateFileEvaluator {
public:
    explicit SurrogateFileEvaluator(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("surrogate file not readable: " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                const auto x = layout_from_json(j.at("layout"));
                GeometryMaterials g = j.at("geometry").get<GeometryMaterials>();
                const double f = j.at("frequency_hz").get<double>();
                table_[detail::design_key(x, g, f)] = labels_from_json(j.at("labels"));
            } catch (const nlohmann::json::exception& e) {
                throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
            } catch (const ValidationError& e) {
                throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    std::size_t size() const { return table_.size(); }

    ObjectiveVector operator()(const TsvLayout& x, const GeometryMaterials& g, double f) const {
        auto it = table_.find(detail::design_key(x, g, f));
        if (it == table_.end()) throw SolverError("surrogate file has no prediction for this design");
        detail::require(it->second.signal_cells == x.signal_indices(), "surrogate labels do not match the layout");
        return objectives_from_labels(it->second, array_etc(x, g).k_z);
    }

private:
    std::map<std::string, DesignLabels> table_;
};

// ---------------------------------------------------------------------------
// a dominates b: no worse in every objective and strictly better in one.
// Minimised: max_reflection, |mean_insertion|, worst_crosstalk, -k_z.
inline bool dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
    const std::array<double, 4> ka{a.max_reflection, std::abs(a.mean_insertion), a.worst_crosstalk, -a.k_z};
    const std::array<double, 4> kb{b.max_reflection, std::abs(b.mean_insertion), b.worst_crosstalk, -b.k_z};
    bool strict = false;
    for (std::size_t i = 0; i < 4; ++i) {
        if (ka[i] > kb[i]) return false;
        if (ka[i] < kb[i]) strict = true;
    }
    return strict;
}

// Indices of non-dominated entries, ascending.
inline std::vector<std::size_t> pareto_front(const std::vector<ObjectiveVector>& v) {
    std::vector<std::size_t> front;
    for (std::size_t i = 0; i < v.size(); ++i) {
        bool dominated = false;
        for (auto j : front)
            if (dominates(v[j], v[i])) {
                dominated = true;
                break;
            }
        if (dominated) continue;
        std::erase_if(front, [&](std::size_t j) { return dominates(v[i], v[j]); });
        front.push_back(i);
    }
    std::sort(front.begin(), front.end());
    return front;
}

// Indices of the entries minimising each objective (first wins on ties):
// crosstalk, thermal (max k_z), insertion (min |IL|), reflection.
struct BestDesigns {
    std::size_t crosstalk = 0, thermal = 0, insertion = 0, reflection = 0;
};

inline BestDesigns best_per_objective(const std::vector<ObjectiveVector>& v, const std::vector<std::size_t>& subset) {
    detail::require(!subset.empty(), "best_per_objective: empty set");
    BestDesigns b{subset[0], subset[0], subset[0], subset[0]};
    for (auto i : subset) {
        if (v[i].worst_crosstalk < v[b.crosstalk].worst_crosstalk) b.crosstalk = i;
        if (v[i].k_z > v[b.thermal].k_z) b.thermal = i;
        if (std::abs(v[i].mean_insertion) < std::abs(v[b.insertion].mean_insertion)) b.insertion = i;
        if (v[i].max_reflection < v[b.reflection].max_reflection) b.reflection = i;
    }
    return b;
}

// ---------------------------------------------------------------------------
// Combinatorial search.
struct SearchConfig {
    std::size_t rows = 3, cols = 3;
    std::size_t s_min = 2, s_max = 3;
    double frequency = 15e9;
    GeometryMaterials geometry{};
    bool symmetry = true;
    std::size_t workers = 1;
    std::string evaluator = "analytical";  // or "surrogate-file"
    std::string surrogate_path;
    std::string checkpoint_path;
    std::size_t checkpoint_every = 10000;
    bool resume = false;
};

inline nlohmann::json to_json(const SearchConfig& c) {
    return {{"rows", c.rows},
            {"cols", c.cols},
            {"s_min", c.s_min},
            {"s_max", c.s_max},
            {"frequency_hz", c.frequency},
            {"geometry", c.geometry},
            {"symmetry", c.symmetry},
            {"evaluator", c.evaluator},
            {"surrogate_path", c.surrogate_path}};
}

struct DesignRecord {
    std::uint64_t index = 0;  // position in the evaluation list
    CellMask mask = 0;
    std::uint8_t n_signal = 0;
    std::uint8_t orbit = 1;  // designs represented (1 without symmetry reduction)
    bool ok = false;
    ObjectiveVector objectives{};
    std::string error;

    friend bool operator==(const DesignRecord&, const DesignRecord&) = default;
};

struct SearchResult {
    std::size_t rows = 0, cols = 0;
    std::vector<DesignRecord> records;  // evaluation order
    std::vector<std::size_t> ranking;   // successful records by worst_crosstalk, then index
    std::vector<std::size_t> front;     // record indices on the Pareto front
    std::size_t failures = 0;
    std::uint64_t designs_covered = 0;  // sum of orbit sizes

    TsvLayout layout(std::size_t i) const { return layout_from_mask(rows, cols, records.at(i).mask); }
};

namespace detail {
    inline std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 1469598103934665603ULL) {
        for (unsigned char c : bytes) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return h;
    }

    struct DesignSlot {
        CellMask mask;
        std::uint8_t n_signal;
        std::uint8_t orbit;
    };

    inline std::vector<DesignSlot> design_list(const SearchConfig& c) {
        std::vector<DesignSlot> out;
        for (std::size_t k = c.s_min; k <= c.s_max; ++k) {
            const auto kk = static_cast<std::uint8_t>(k);
            if (c.symmetry) {
                symmetry_reduce(c.rows, c.cols, k, [&](CellMask m, std::uint8_t o) { out.push_back({m, kk, o}); });
            } else {
                enumerate_layouts(c.rows, c.cols, k, [&](CellMask m) { out.push_back({m, kk, 1}); });
            }
        }
        return out;
    }

    template <typename T>
    void put(std::string& s, const T& v) {
        s.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }

    template <typename T>
    T get(const std::string& s, std::size_t& pos) {
        if (pos + sizeof(T) > s.size()) throw ValidationError("checkpoint truncated");
        T v;
        std::memcpy(&v, s.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }

    inline constexpr char checkpoint_magic[8] = {'T', 'S', 'V', 'N', 'C', 'K', 'P', 'T'};
    inline constexpr std::uint32_t checkpoint_version = 1;

    inline std::string serialize_records(const std::vector<DesignRecord>& recs, std::size_t count) {
        std::string s;
        for (std::size_t i = 0; i < count; ++i) {
            const auto& r = recs[i];
            put(s, r.index);
            put(s, r.mask);
            put(s, r.n_signal);
            put(s, r.orbit);
            put(s, static_cast<std::uint8_t>(r.ok));
            put(s, r.objectives.max_reflection);
            put(s, r.objectives.mean_insertion);
            put(s, r.objectives.worst_crosstalk);
            put(s, r.objectives.k_z);
            put(s, static_cast<std::uint32_t>(r.error.size()));
            s += r.error;
        }
        return s;
    }

    // Layout: magic, then payload {version, config fingerprint, record count,
    // records}, then FNV-1a of the payload.
    inline void write_checkpoint(const std::string& path, std::uint64_t fingerprint,
                                 const std::vector<DesignRecord>& recs, std::size_t count) {
        std::string payload;
        put(payload, checkpoint_version);
        put(payload, fingerprint);
        put(payload, static_cast<std::uint64_t>(count));
        payload += serialize_records(recs, count);
        const std::string tmp = path + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw SolverError("cannot write checkpoint " + tmp);
            out.write(checkpoint_magic, sizeof checkpoint_magic);
            out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
            const auto sum = fnv1a(payload);
            out.write(reinterpret_cast<const char*>(&sum), sizeof sum);
            if (!out) throw SolverError("checkpoint write failed: " + tmp);
        }
        std::filesystem::rename(tmp, path);
    }

    inline std::vector<DesignRecord> read_checkpoint(const std::string& path, std::uint64_t fingerprint) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ValidationError("checkpoint not readable: " + path);
        std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (all.size() < sizeof checkpoint_magic + 8 || all.compare(0, 8, checkpoint_magic, 8) != 0)
            throw ValidationError("checkpoint " + path + ": not a tsvnet checkpoint");
        const std::string payload = all.substr(8, all.size() - 16);
        std::uint64_t stored;
        std::memcpy(&stored, all.data() + all.size() - 8, 8);
        if (stored != fnv1a(payload)) throw ValidationError("checkpoint " + path + ": checksum mismatch (corrupted)");
        std::size_t pos = 0;
        if (get<std::uint32_t>(payload, pos) != checkpoint_version)
            throw ValidationError("checkpoint " + path + ": unsupported version");
        if (get<std::uint64_t>(payload, pos) != fingerprint)
            throw ValidationError("checkpoint " + path + ": written for a different search configuration");
        const auto count = get<std::uint64_t>(payload, pos);
        std::vector<DesignRecord> recs(count);
        for (auto& r : recs) {
            r.index = get<std::uint64_t>(payload, pos);
            r.mask = get<CellMask>(payload, pos);
            r.n_signal = get<std::uint8_t>(payload, pos);
            r.orbit = get<std::uint8_t>(payload, pos);
            r.ok = get<std::uint8_t>(payload, pos) != 0;
            r.objectives.max_reflection = get<double>(payload, pos);
            r.objectives.mean_insertion = get<double>(payload, pos);
            r.objectives.worst_crosstalk = get<double>(payload, pos);
            r.objectives.k_z = get<double>(payload, pos);
            const auto len = get<std::uint32_t>(payload, pos);
            if (pos + len > payload.size()) throw ValidationError("checkpoint truncated");
            r.error = payload.substr(pos, len);
            pos += len;
        }
        if (pos != payload.size()) throw ValidationError("checkpoint " + path + ": trailing bytes");
        return recs;
    }

    inline Evaluator make_evaluator(const std::string& kind, const std::string& surrogate_path) {
        if (kind == "analytical") return evaluate_design;
        if (kind == "surrogate-file") {
            if (surrogate_path.empty()) throw ValidationError("evaluator surrogate-file needs a surrogate path");
            auto sur = std::make_shared<SurrogateFileEvaluator>(surrogate_path);
            return [sur](const TsvLayout& x, const GeometryMaterials& g, double f) { return (*sur)(x, g, f); };
        }
        throw ValidationError("unknown evaluator '" + kind + "' (analytical, surrogate-file)");
    }

    inline std::vector<std::size_t> rank_by_crosstalk(const std::vector<DesignRecord>& recs) {
        std::vector<std::size_t> r;
        for (std::size_t i = 0; i < recs.size(); ++i)
            if (recs[i].ok) r.push_back(i);
        std::stable_sort(r.begin(), r.end(), [&](std::size_t a, std::size_t b) {
            return recs[a].objectives.worst_crosstalk < recs[b].objectives.worst_crosstalk;
        });
        return r;
    }
}

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

inline SearchResult combinatorial_search(const SearchConfig& c, const ProgressFn& progress = {}) {
    c.geometry.validate();
    const std::size_t cells = c.rows * c.cols;
    detail::require(c.rows > 0 && c.cols > 0, "search: empty grid");
    detail::require(cells <= 64, "search: at most 64 cells");
    detail::require(c.s_min >= 2, "search: s_min must be >= 2 (crosstalk needs two signals)");
    detail::require(c.s_min <= c.s_max, "search: s_min must be <= s_max");
    if (c.s_min > cells - 1)
        throw ValidationError("search: empty feasible set (s_min " + std::to_string(c.s_min) + " > cells - 1 = " +
                              std::to_string(cells - 1) + ")");
    detail::require(c.s_max <= cells - 1, "search: s_max must leave at least one ground cell");
    detail::require(!c.symmetry || c.rows == c.cols, "search: symmetry reduction requires a square grid");
    detail::require(c.checkpoint_every > 0, "search: checkpoint_every must be > 0");
    detail::require(c.frequency > 0, "search: frequency must be > 0");

    const auto eval = detail::make_evaluator(c.evaluator, c.surrogate_path);
    const auto slots = detail::design_list(c);
    const std::uint64_t fingerprint = detail::fnv1a(to_json(c).dump());

    SearchResult out;
    out.rows = c.rows;
    out.cols = c.cols;
    out.records.resize(slots.size());
    std::size_t done = 0;
    if (c.resume && !c.checkpoint_path.empty() && std::filesystem::exists(c.checkpoint_path)) {
        auto saved = detail::read_checkpoint(c.checkpoint_path, fingerprint);
        if (saved.size() > slots.size()) throw ValidationError("checkpoint has more records than the search");
        for (std::size_t i = 0; i < saved.size(); ++i) {
            if (saved[i].mask != slots[i].mask || saved[i].index != i)
                throw ValidationError("checkpoint does not match the design enumeration");
            out.records[i] = std::move(saved[i]);
        }
        done = saved.size();
    }

    while (done < slots.size()) {
        const std::size_t end = std::min(slots.size(), done + c.checkpoint_every);
        parallel_for(end - done, c.workers, [&](std::size_t k) {
            const std::size_t i = done + k;
            DesignRecord r;
            r.index = i;
            r.mask = slots[i].mask;
            r.n_signal = slots[i].n_signal;
            r.orbit = slots[i].orbit;
            try {
                r.objectives = eval(layout_from_mask(c.rows, c.cols, r.mask), c.geometry, c.frequency);
                r.ok = true;
            } catch (const std::exception& e) {
                r.error = "design " + std::to_string(i) + ": " + e.what();
            }
            out.records[i] = std::move(r);
        });
        done = end;
        if (!c.checkpoint_path.empty()) detail::write_checkpoint(c.checkpoint_path, fingerprint, out.records, done);
        if (progress) progress(done, slots.size());
    }

    for (const auto& r : out.records) {
        out.designs_covered += r.orbit;
        if (!r.ok) ++out.failures;
    }
    out.ranking = detail::rank_by_crosstalk(out.records);
    std::vector<std::size_t> ok_idx;
    std::vector<ObjectiveVector> ok_obj;
    for (std::size_t i = 0; i < out.records.size(); ++i)
        if (out.records[i].ok) {
            ok_idx.push_back(i);
            ok_obj.push_back(out.records[i].objectives);
        }
    for (auto f : pareto_front(ok_obj)) out.front.push_back(ok_idx[f]);
    return out;
}

// ---------------------------------------------------------------------------
// Geometric sweep over (r, p, h, t_ox) for a fixed layout.
struct Range {
    double lo = 0, hi = 0;
    double at(double u) const { return lo + (hi - lo) * u; }
};

enum class Sampler { Grid, LatinHypercube };

struct SweepConfig {
    TsvLayout layout;
    GeometryMaterials base{};
    Range r{2, 6}, p{20, 60}, h{60, 100}, t_ox{0.5, 3};
    Sampler sampler = Sampler::LatinHypercube;
    std::size_t samples = 4096;    // Latin hypercube
    std::size_t grid_points = 5;   // per axis for Sampler::Grid
    std::uint64_t seed = 42;
    double frequency = 15e9;
    std::size_t workers = 1;
    std::string evaluator = "analytical";
    std::string surrogate_path;
};

struct GeometrySample {
    double r = 0, p = 0, h = 0, t_ox = 0;
    friend bool operator==(const GeometrySample&, const GeometrySample&) = default;
};

struct SweepRecord {
    GeometrySample geometry;
    bool ok = false;
    ObjectiveVector objectives{};
    std::string error;
};

struct SweepResult {
    std::vector<SweepRecord> records;
    std::vector<std::size_t> front;
    std::vector<std::string> skipped;  // infeasible samples
    std::size_t failures = 0;
};

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::vector<std::array<double, 4>> latin_hypercube(std::size_t n, std::uint64_t seed) {
    detail::require(n >= 1, "latin_hypercube: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<std::array<double, 4>> out(n);
    for (std::size_t d = 0; d < 4; ++d) {
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        for (std::size_t i = n - 1; i > 0; --i) {
            const auto j = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(i + 1));
            std::swap(perm[i], perm[std::min(j, i)]);
        }
        for (std::size_t i = 0; i < n; ++i)
            out[i][d] = (static_cast<double>(perm[i]) + unit_uniform(rng)) / static_cast<double>(n);
    }
    return out;
}

inline std::vector<GeometrySample> sweep_samples(const SweepConfig& c) {
    for (const auto* rg : {&c.r, &c.p, &c.h, &c.t_ox})
        detail::require(std::isfinite(rg->lo) && std::isfinite(rg->hi) && rg->lo > 0 && rg->lo <= rg->hi,
                        "sweep: ranges need 0 < lo <= hi");
    std::vector<GeometrySample> raw;
    if (c.sampler == Sampler::Grid) {
        detail::require(c.grid_points >= 1, "sweep: grid_points must be >= 1");
        const auto m = c.grid_points;
        auto u = [&](std::size_t i) { return m == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(m - 1); };
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = 0; b < m; ++b)
                for (std::size_t d = 0; d < m; ++d)
                    for (std::size_t e = 0; e < m; ++e)
                        raw.push_back({c.r.at(u(a)), c.p.at(u(b)), c.h.at(u(d)), c.t_ox.at(u(e))});
    } else {
        for (const auto& s : latin_hypercube(c.samples, c.seed))
            raw.push_back({c.r.at(s[0]), c.p.at(s[1]), c.h.at(s[2]), c.t_ox.at(s[3])});
    }
    // Collapsed ranges repeat samples; keep first occurrences.
    std::vector<GeometrySample> out;
    std::set<std::array<double, 4>> seen;
    for (const auto& s : raw)
        if (seen.insert({s.r, s.p, s.h, s.t_ox}).second) out.push_back(s);
    return out;
}

inline GeometryMaterials with_sample(GeometryMaterials g, const GeometrySample& s) {
    g.r_cond = s.r;
    g.p_int = s.p;
    g.h_int = s.h;
    g.t_ins = s.t_ox;
    return g;
}

inline SweepResult geometric_sweep(const SweepConfig& c, const ProgressFn& progress = {}) {
    detail::require(c.frequency > 0, "sweep: frequency must be > 0");
    const auto eval = detail::make_evaluator(c.evaluator, c.surrogate_path);
    const auto samples = sweep_samples(c);

    SweepResult out;
    std::vector<GeometrySample> feasible;
    for (const auto& s : samples) {
        try {
            with_sample(c.base, s).validate();
            feasible.push_back(s);
        } catch (const ValidationError& e) {
            std::ostringstream os;
            os << "r=" << s.r << " p=" << s.p << " h=" << s.h << " t_ox=" << s.t_ox << ": " << e.what();
            out.skipped.push_back(os.str());
        }
    }
    out.records.resize(feasible.size());
    std::atomic<std::size_t> finished{0};
    parallel_for(feasible.size(), c.workers, [&](std::size_t i) {
        SweepRecord r;
        r.geometry = feasible[i];
        try {
            r.objectives = eval(c.layout, with_sample(c.base, feasible[i]), c.frequency);
            r.ok = true;
        } catch (const std::exception& e) {
            r.error = "sample " + std::to_string(i) + ": " + e.what();
        }
        out.records[i] = std::move(r);
        const auto d = ++finished;
        if (progress && (d % 256 == 0 || d == feasible.size())) progress(d, feasible.size());
    });
    std::vector<std::size_t> ok_idx;
    std::vector<ObjectiveVector> ok_obj;
    for (std::size_t i = 0; i < out.records.size(); ++i) {
        if (!out.records[i].ok) {
            ++out.failures;
            continue;
        }
        ok_idx.push_back(i);
        ok_obj.push_back(out.records[i].objectives);
    }
    for (auto f : pareto_front(ok_obj)) out.front.push_back(ok_idx[f]);
    return out;
}

// ---------------------------------------------------------------------------
// Result files. Columns follow the Pareto table: geometry, mean S21, max S11,
// worst crosstalk, k_z.
namespace detail {
    inline std::string roles_string(const TsvLayout& x) {
        std::string s;
        for (auto r : x.roles()) s += r == Role::Signal ? 'S' : (r == Role::Ground ? 'G' : '.');
        return s;
    }

    inline void write_objectives(std::ostream& os, const ObjectiveVector& o) {
        os << o.mean_insertion << ',' << o.max_reflection << ',' << o.worst_crosstalk << ',' << o.k_z;
    }
}

inline void write_search_csv(std::ostream& os, const SearchResult& r, const GeometryMaterials& g) {
    os << std::setprecision(10);
    os << "rank,index,n_signal,orbit,layout,r_um,p_um,h_um,t_ox_um,mean_s21_db,max_s11_db,worst_xtalk_db,k_z_w_mk,"
          "pareto\n";
    std::vector<bool> on_front(r.records.size(), false);
    for (auto i : r.front) on_front[i] = true;
    std::size_t rank = 0;
    for (auto i : r.ranking) {
        const auto& d = r.records[i];
        os << ++rank << ',' << d.index << ',' << int(d.n_signal) << ',' << int(d.orbit) << ','
           << detail::roles_string(r.layout(i)) << ',' << g.r_cond << ',' << g.p_int << ',' << g.h_int << ','
           << g.t_ins << ',';
        detail::write_objectives(os, d.objectives);
        os << ',' << (on_front[i] ? 1 : 0) << '\n';
    }
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
    os << std::setprecision(10);
    os << "r_um,p_um,h_um,t_ox_um,mean_s21_db,max_s11_db,worst_xtalk_db,k_z_w_mk,pareto\n";
    std::vector<bool> on_front(r.records.size(), false);
    for (auto i : r.front) on_front[i] = true;
    for (std::size_t i = 0; i < r.records.size(); ++i) {
        const auto& d = r.records[i];
        if (!d.ok) continue;
        os << d.geometry.r << ',' << d.geometry.p << ',' << d.geometry.h << ',' << d.geometry.t_ox << ',';
        detail::write_objectives(os, d.objectives);
        os << ',' << (on_front[i] ? 1 : 0) << '\n';
    }
}

namespace detail {
    inline nlohmann::json best_json(const BestDesigns& b) {
        return {{"crosstalk", b.crosstalk}, {"thermal", b.thermal}, {"insertion", b.insertion},
                {"reflection", b.reflection}};
    }
}

inline nlohmann::json front_json(const SearchResult& r, const GeometryMaterials& g, double f) {
    nlohmann::json j;
    j["frequency_hz"] = f;
    j["geometry"] = g;
    j["evaluated"] = r.records.size();
    j["designs_covered"] = r.designs_covered;
    j["failures"] = r.failures;
    auto arr = nlohmann::json::array();
    std::vector<ObjectiveVector> obj;
    for (const auto& d : r.records) obj.push_back(d.objectives);
    for (auto i : r.front) {
        arr.push_back({{"index", r.records[i].index},
                       {"n_signal", r.records[i].n_signal},
                       {"orbit", r.records[i].orbit},
                       {"layout", layout_to_json(r.layout(i))},
                       {"objectives", to_json(r.records[i].objectives)}});
    }
    j["front"] = arr;
    if (!r.front.empty()) j["best"] = detail::best_json(best_per_objective(obj, r.front));
    return j;
}

inline nlohmann::json front_json(const SweepResult& r, const SweepConfig& c) {
    nlohmann::json j;
    j["frequency_hz"] = c.frequency;
    j["layout"] = layout_to_json(c.layout);
    j["evaluated"] = r.records.size();
    j["skipped"] = r.skipped;
    j["failures"] = r.failures;
    auto arr = nlohmann::json::array();
    std::vector<ObjectiveVector> obj;
    for (const auto& d : r.records) obj.push_back(d.objectives);
    for (auto i : r.front) {
        const auto& s = r.records[i].geometry;
        arr.push_back({{"index", i},
                       {"r_um", s.r},
                       {"p_um", s.p},
                       {"h_um", s.h},
                       {"t_ox_um", s.t_ox},
                       {"objectives", to_json(r.records[i].objectives)}});
    }
    j["front"] = arr;
    if (!r.front.empty()) j["best"] = detail::best_json(best_per_objective(obj, r.front));
    return j;
}

} // namespace tsvnet

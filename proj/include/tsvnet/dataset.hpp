#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "optimizer.hpp"

namespace tsvnet {

// Random (layout, geometry, frequency) samples labelled by the analytical
// solver, one JSON object per line.
struct DatasetConfig {
    std::size_t count = 1000;
    std::size_t min_size = 3;   // square grids min_size x min_size .. max_size x max_size
    std::size_t max_size = 20;
    double signal_probability = 0.5;
    double empty_probability = 0.0;
    Range r{2, 6}, p{20, 60}, h{60, 100}, t_ox{0.5, 3};
    FrequencyGrid grid = FrequencyGrid::default_sweep();
    double validation_fraction = 0.2;
    std::uint64_t seed = 42;
    std::size_t workers = 1;
    GeometryMaterials base{};
};

inline nlohmann::json to_json(const DatasetConfig& c) {
    auto range = [](const Range& r) { return nlohmann::json::array({r.lo, r.hi}); };
    return {{"count", c.count},
            {"min_size", c.min_size},
            {"max_size", c.max_size},
            {"signal_probability", c.signal_probability},
            {"empty_probability", c.empty_probability},
            {"r_um", range(c.r)},
            {"p_um", range(c.p)},
            {"h_um", range(c.h)},
            {"t_ox_um", range(c.t_ox)},
            {"frequencies_hz", c.grid.points()},
            {"validation_fraction", c.validation_fraction},
            {"seed", c.seed}};
}

struct DatasetSample {
    std::size_t id = 0;
    bool validation = false;
    TsvLayout layout;
    GeometryMaterials geometry;
    double frequency = 0;
};

namespace detail {
    inline std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t id) {
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (id + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
        return std::min(n - 1, static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n)));
    }

    // Exactly round(count * fraction) validation ids, chosen by a seeded shuffle.
    inline std::vector<bool> validation_mask(std::size_t count, double fraction, std::uint64_t seed) {
        std::vector<std::size_t> ids(count);
        for (std::size_t i = 0; i < count; ++i) ids[i] = i;
        std::mt19937_64 rng(sample_seed(seed, ~std::uint64_t{0}));
        for (std::size_t i = count; i > 1; --i) std::swap(ids[i - 1], ids[uniform_index(rng, i)]);
        const auto nval = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(count)));
        std::vector<bool> mask(count, false);
        for (std::size_t i = 0; i < nval; ++i) mask[ids[i]] = true;
        return mask;
    }
}

inline std::vector<DatasetSample> dataset_samples(const DatasetConfig& c) {
    detail::require(c.count >= 1, "dataset: count must be >= 1");
    detail::require(c.min_size >= 1 && c.min_size <= c.max_size, "dataset: need 1 <= min_size <= max_size");
    detail::require(c.max_size * c.max_size >= 2, "dataset: grids need at least two cells");
    detail::require(c.signal_probability > 0 && c.signal_probability < 1, "dataset: signal_probability in (0, 1)");
    detail::require(c.empty_probability >= 0 && c.empty_probability < 1, "dataset: empty_probability in [0, 1)");
    detail::require(c.validation_fraction >= 0 && c.validation_fraction <= 1, "dataset: validation_fraction in [0, 1]");
    const auto val = detail::validation_mask(c.count, c.validation_fraction, c.seed);
    std::vector<DatasetSample> out(c.count);
    for (std::size_t id = 0; id < c.count; ++id) {
        std::mt19937_64 rng(detail::sample_seed(c.seed, id));
        auto& s = out[id];
        s.id = id;
        s.validation = val[id];
        std::size_t n = c.min_size + detail::uniform_index(rng, c.max_size - c.min_size + 1);
        if (n * n < 2) n = 2;
        std::vector<Role> roles(n * n);
        for (;;) {
            for (auto& r : roles) {
                const double u = unit_uniform(rng);
                if (u < c.empty_probability) r = Role::Empty;
                else r = unit_uniform(rng) < c.signal_probability ? Role::Signal : Role::Ground;
            }
            const TsvLayout x(n, n, roles);
            if (x.electrically_solvable()) {
                s.layout = x;
                break;
            }
        }
        // Liner overlap can only occur outside the default ranges; redraw then.
        for (std::size_t tries = 0;; ++tries) {
            GeometryMaterials g = c.base;
            g.r_cond = c.r.at(unit_uniform(rng));
            g.p_int = c.p.at(unit_uniform(rng));
            g.h_int = c.h.at(unit_uniform(rng));
            g.t_ins = c.t_ox.at(unit_uniform(rng));
            try {
                g.validate();
                s.geometry = g;
                break;
            } catch (const ValidationError&) {
                if (tries > 1000) throw ValidationError("dataset: geometry ranges admit no feasible sample");
            }
        }
        s.frequency = c.grid[detail::uniform_index(rng, c.grid.size())];
    }
    return out;
}

inline nlohmann::json dataset_record(const DatasetSample& s, const SParameterBlock& sp) {
    return {{"id", s.id},
            {"split", s.validation ? "val" : "train"},
            {"layout", layout_to_json(s.layout)},
            {"geometry", s.geometry},
            {"frequency_hz", s.frequency},
            {"z_ref", sp.z_ref},
            {"labels", to_json(labels_from_s(sp, 0))}};
}

struct DatasetSummary {
    std::size_t train = 0, val = 0;
};

// Records are computed in parallel and written in id order; the train and
// validation streams may be the same object.
inline DatasetSummary write_dataset(const DatasetConfig& c, std::ostream& train, std::ostream& val,
                                    const ProgressFn& progress = {}) {
    const auto samples = dataset_samples(c);
    DatasetSummary sum;
    const std::size_t chunk = 256;
    for (std::size_t start = 0; start < samples.size(); start += chunk) {
        const std::size_t end = std::min(samples.size(), start + chunk);
        std::vector<std::string> lines(end - start);
        parallel_for(end - start, c.workers, [&](std::size_t k) {
            const auto& s = samples[start + k];
            SolveOptions so;
            const auto sp = solve_sweep(s.layout, s.geometry, FrequencyGrid({s.frequency}), so);
            lines[k] = dataset_record(s, sp).dump();
        });
        for (std::size_t k = 0; k < lines.size(); ++k) {
            auto& os = samples[start + k].validation ? val : train;
            os << lines[k] << '\n';
            ++(samples[start + k].validation ? sum.val : sum.train);
        }
        if (!train || !val) throw SolverError("dataset: write failed");
        if (progress) progress(end, samples.size());
    }
    return sum;
}

} // namespace tsvnet

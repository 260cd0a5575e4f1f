#pragma once

// Noise sweeps, stage timing and CSV export for the fullspace and latent
// inverse pipelines.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "capinv/io.hpp"

namespace capinv {

// Sum of squared differences over all grid nodes.
inline double ssd(const FieldGrid& v, const FieldGrid& v_hat) {
    require_shape(v.n == v_hat.n && v.values.size() == v_hat.values.size(), "ssd: grid size mismatch");
    if (v.normalized != v_hat.normalized) throw ShapeError("ssd: normalization mismatch");
    double sum = 0.0;
    for (std::size_t k = 0; k < v.values.size(); ++k) {
        const double diff = v.values[k] - v_hat.values[k];
        sum += diff * diff;
    }
    return sum;
}

// One inverse pipeline: "fullspace" (optimizer "-") or "ae"/"vae" with the
// optimizer tag it was trained with.
struct ApproachKey {
    std::string approach;
    std::string optimizer;

    std::string label() const { return optimizer == "-" ? approach : approach + "-" + optimizer; }
    auto operator<=>(const ApproachKey&) const = default;
};

struct SweepConfig {
    std::vector<double> noise_levels{0.01, 0.1, 0.5, 1.0};
    std::vector<double> test_d = default_test_d();
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::vector<ApproachKey> approaches;
    InverseOptions inverse;
    NoiseSite noise_site = NoiseSite::SearchSpace;
    unsigned threads = 1;
};

struct SweepInputs {
    std::optional<FullspaceSurrogate> fullspace;
    std::map<ApproachKey, LatentSurrogate> latent;
    Dataset groundtruth;  // one record per test d
};

struct SweepCell {
    ApproachKey key;
    double d = 0.0;
    double noise = 0.0;
    std::uint64_t seed = 0;
    double ssd = 0.0;
    bool failed = false;
    std::string error;
    FieldGrid reconstruction;
};

struct Aggregate {
    ApproachKey key;
    double d = 0.0;
    double noise = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    std::size_t count = 0;     // successful cells
    std::size_t failures = 0;

    double iqr() const { return q3 - q1; }
};

struct TimingRow {
    std::string stage;     // encoder, regression, inverse, decoder, total
    std::string approach;  // column label
    std::optional<double> median_ms;  // empty where the stage does not apply
};

struct SweepResult {
    std::vector<SweepCell> cells;
    std::vector<TimingRow> timing;
};

// Linear-interpolated quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, 0.5);
}

// Aggregates over seeds, ordered by (approach, d, noise).
inline std::vector<Aggregate> aggregate(const std::vector<SweepCell>& cells) {
    std::map<std::tuple<ApproachKey, double, double>, std::pair<std::vector<double>, std::size_t>> groups;
    for (const auto& c : cells) {
        auto& g = groups[{c.key, c.d, c.noise}];
        if (c.failed)
            ++g.second;
        else
            g.first.push_back(c.ssd);
    }
    std::vector<Aggregate> out;
    for (auto& [key, g] : groups) {
        auto& values = g.first;
        std::sort(values.begin(), values.end());
        Aggregate a;
        std::tie(a.key, a.d, a.noise) = key;
        a.count = values.size();
        a.failures = g.second;
        a.median = quantile_sorted(values, 0.5);
        a.q1 = quantile_sorted(values, 0.25);
        a.q3 = quantile_sorted(values, 0.75);
        out.push_back(a);
    }
    return out;
}

inline const Sample& groundtruth_for(const Dataset& truth, double d) {
    for (const auto& s : truth.samples)
        if (std::abs(s.d - d) < 1e-12) return s;
    throw ConfigError("sweep: no groundtruth field for d=" + std::to_string(d));
}

inline FieldGrid recover_for(const SweepInputs& inputs, const SweepConfig& config, const ApproachKey& key,
                             double d, double noise, std::uint64_t seed) {
    if (key.approach == "fullspace") {
        if (!inputs.fullspace) throw ConfigError("sweep: fullspace surrogate missing");
        return recover_field(*inputs.fullspace, d, noise, seed, config.inverse);
    }
    const auto it = inputs.latent.find(key);
    if (it == inputs.latent.end()) throw ConfigError("sweep: no model for approach " + key.label());
    return recover_field(it->second, d, noise, seed, config.inverse, config.noise_site);
}

// Cells are laid out by (approach, d, noise, seed) in config order; each cell
// depends only on its own identity, so threads and ordering do not matter.
inline SweepResult run_noise_sweep(const SweepConfig& config, const SweepInputs& inputs) {
    for (double e : config.noise_levels)
        if (!(e >= 0.0)) throw ConfigError("sweep: noise levels must be non-negative");
    for (double d : config.test_d)
        if (!(d >= 0.0 && d <= 1.0)) throw ConfigError("sweep: test d must lie in [0,1]");

    SweepResult result;
    for (const auto& key : config.approaches)
        for (double d : config.test_d)
            for (double e : config.noise_levels)
                for (std::uint64_t seed : config.seeds) result.cells.push_back({key, d, e, seed});

    auto run = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t k = begin; k < result.cells.size(); k += stride) {
            SweepCell& cell = result.cells[k];
            try {
                const Sample& truth = groundtruth_for(inputs.groundtruth, cell.d);
                cell.reconstruction = recover_for(inputs, config, cell.key, cell.d, cell.noise, cell.seed);
                cell.ssd = ssd(as_grid(truth.field, inputs.groundtruth.grid), cell.reconstruction);
            } catch (const std::exception& e) {
                cell.failed = true;
                cell.error = e.what();
            }
        }
    };
    const unsigned threads =
        std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(result.cells.size())));
    if (threads <= 1) {
        run(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(run, t, threads);
    }
    return result;
}

// Median wall-clock of fn in milliseconds after `warmup` untimed calls.
template <typename Fn>
double median_ms(Fn&& fn, std::size_t repetitions, std::size_t warmup = 10) {
    for (std::size_t k = 0; k < warmup; ++k) fn();
    std::vector<double> samples(repetitions);
    for (auto& s : samples) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        s = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    return median(std::move(samples));
}

struct TimingInputs {
    const Dataset* train = nullptr;
    std::optional<FullspaceSurrogate> fullspace;
    std::vector<std::pair<std::string, LatentSurrogate>> latent;  // column label, surrogate
    double target_d = 0.36;
    InverseOptions inverse;
};

template <typename T>
inline void keep(const T& value) {
    asm volatile("" : : "g"(&value) : "memory");
}

// Per-stage medians for each approach. Fullspace has no encoder/decoder rows.
inline std::vector<TimingRow> run_timing(const TimingInputs& in, std::size_t repetitions = 100) {
    if (repetitions < 100) throw ConfigError("timing: at least 100 repetitions required");
    if (!in.train) throw ConfigError("timing: training set required");
    std::vector<TimingRow> rows;
    const auto targets = dataset_targets(*in.train);

    if (in.fullspace) {
        const FullspaceSurrogate& s = *in.fullspace;
        const auto fields = dataset_fields(*in.train);
        const InverseProblem problem{in.target_d, s.anchor_field, in.inverse};
        const double regression = median_ms([&] { keep(fit_regression(Space::Fullspace, fields, targets)); }, repetitions);
        const double inverse = median_ms([&] { keep(inverse_predict(s.regression, problem)); }, repetitions);
        const double total = median_ms(
            [&] {
                const auto reg = fit_regression(Space::Fullspace, fields, targets);
                keep(inverse_predict(reg, problem));
            },
            repetitions);
        rows.push_back({"encoder", "fullspace", std::nullopt});
        rows.push_back({"regression", "fullspace", regression});
        rows.push_back({"inverse", "fullspace", inverse});
        rows.push_back({"decoder", "fullspace", std::nullopt});
        rows.push_back({"total", "fullspace", total});
    }
    for (const auto& [label, s] : in.latent) {
        const Matrix fields = dataset_matrix(*in.train);
        const auto codes = encode_all(s.model, *in.train);
        const InverseProblem problem{in.target_d, s.anchor_code, in.inverse};
        const LatentVector solved = inverse_predict(s.regression, problem).x;
        const double encoder = median_ms([&] { keep(encode(s.model, s.anchor_field)); }, repetitions);
        const double regression = median_ms([&] { keep(fit_regression(Space::Latent, codes, targets)); }, repetitions);
        const double inverse = median_ms([&] { keep(inverse_predict(s.regression, problem)); }, repetitions);
        const double decoder = median_ms([&] { keep(decode(s.model, solved)); }, repetitions);
        const double total = median_ms(
            [&] {
                const auto c = encode_all(s.model, *in.train);
                const auto reg = fit_regression(Space::Latent, c, targets);
                const auto code = encode(s.model, s.anchor_field).mu;
                keep(decode(s.model, inverse_predict(reg, {in.target_d, code, in.inverse}).x));
            },
            repetitions);
        rows.push_back({"encoder", label, encoder});
        rows.push_back({"regression", label, regression});
        rows.push_back({"inverse", label, inverse});
        rows.push_back({"decoder", label, decoder});
        rows.push_back({"total", label, total});
    }
    return rows;
}

// --- CSV export -----------------------------------------------------------

inline constexpr const char* kCellsHeader = "approach,optimizer,d,noise,seed,ssd,status";
inline constexpr const char* kAggregateHeader = "approach,optimizer,d,noise,median_ssd,q1_ssd,q3_ssd,iqr_ssd,n_ok,n_failed";
inline constexpr const char* kTimingHeader = "stage,approach,median_ms";

inline std::string cells_to_csv(const std::vector<SweepCell>& cells) {
    std::string out = std::string(kCellsHeader) + "\n";
    for (const auto& c : cells)
        out += c.key.approach + "," + c.key.optimizer + "," + io::format_double(c.d) + "," +
               io::format_double(c.noise) + "," + std::to_string(c.seed) + "," +
               (c.failed ? std::string("nan") : io::format_double(c.ssd)) + "," + (c.failed ? "failed" : "ok") + "\n";
    return out;
}

inline std::vector<SweepCell> cells_from_csv(std::string text) {
    io::LineReader reader(std::move(text));
    if (reader.expect() != kCellsHeader) throw FormatError("cells: unexpected header");
    std::vector<SweepCell> cells;
    std::string_view line;
    while (reader.next(line)) {
        const auto f = io::split(line, ',');
        if (f.size() != 7) throw FormatError("cells: expected 7 columns");
        SweepCell c;
        c.key = {std::string(f[0]), std::string(f[1])};
        c.d = io::parse_double(f[2]);
        c.noise = io::parse_double(f[3]);
        c.seed = io::parse_count(f[4]);
        c.failed = f[6] == "failed";
        if (!c.failed) c.ssd = io::parse_double(f[5]);
        cells.push_back(std::move(c));
    }
    return cells;
}

inline std::string aggregates_to_csv(const std::vector<Aggregate>& rows) {
    std::string out = std::string(kAggregateHeader) + "\n";
    for (const auto& a : rows)
        out += a.key.approach + "," + a.key.optimizer + "," + io::format_double(a.d) + "," +
               io::format_double(a.noise) + "," + io::format_double(a.median) + "," + io::format_double(a.q1) +
               "," + io::format_double(a.q3) + "," + io::format_double(a.iqr()) + "," + std::to_string(a.count) +
               "," + std::to_string(a.failures) + "\n";
    return out;
}

inline std::vector<Aggregate> aggregates_from_csv(std::string text) {
    io::LineReader reader(std::move(text));
    if (reader.expect() != kAggregateHeader) throw FormatError("aggregates: unexpected header");
    std::vector<Aggregate> rows;
    std::string_view line;
    while (reader.next(line)) {
        const auto f = io::split(line, ',');
        if (f.size() != 10) throw FormatError("aggregates: expected 10 columns");
        Aggregate a;
        a.key = {std::string(f[0]), std::string(f[1])};
        a.d = io::parse_double(f[2]);
        a.noise = io::parse_double(f[3]);
        a.median = io::parse_double(f[4]);
        a.q1 = io::parse_double(f[5]);
        a.q3 = io::parse_double(f[6]);
        a.count = io::parse_count(f[8]);
        a.failures = io::parse_count(f[9]);
        rows.push_back(a);
    }
    return rows;
}

inline std::string timing_to_csv(const std::vector<TimingRow>& rows) {
    std::string out = std::string(kTimingHeader) + "\n";
    for (const auto& r : rows)
        out += r.stage + "," + r.approach + "," + (r.median_ms ? io::format_double(*r.median_ms) : "-") + "\n";
    return out;
}

inline std::vector<TimingRow> timing_from_csv(std::string text) {
    io::LineReader reader(std::move(text));
    if (reader.expect() != kTimingHeader) throw FormatError("timing: unexpected header");
    std::vector<TimingRow> rows;
    std::string_view line;
    while (reader.next(line)) {
        const auto f = io::split(line, ',');
        if (f.size() != 3) throw FormatError("timing: expected 3 columns");
        TimingRow r{std::string(f[0]), std::string(f[1]), std::nullopt};
        if (f[2] != "-") r.median_ms = io::parse_double(f[2]);
        rows.push_back(r);
    }
    return rows;
}

// Reconstructed 21x21 grids for the field figure: the groundtruth block plus
// every cell at the chosen d for the first seed of the sweep.
inline std::string fig6_fields_csv(const SweepResult& result, const Dataset& groundtruth, double d) {
    std::string out = "approach,optimizer,d,noise,seed,row";
    std::size_t n = groundtruth.grid;
    for (std::size_t c = 0; c < n; ++c) out += ",c" + std::to_string(c);
    out += "\n";
    auto emit = [&](const std::string& prefix, const FieldGrid& g) {
        for (std::size_t r = 0; r < g.n; ++r)
            out += prefix + "," + std::to_string(r) + "," +
                   io::join(std::span<const double>(g.values).subspan(r * g.n, g.n)) + "\n";
    };
    if (result.cells.empty()) return out;
    const std::uint64_t first_seed = result.cells.front().seed;
    for (const auto& s : groundtruth.samples)
        if (std::abs(s.d - d) < 1e-12)
            emit("groundtruth,-," + io::format_double(d) + ",0,0", as_grid(s.field, n));
    for (const auto& c : result.cells)
        if (!c.failed && c.seed == first_seed && std::abs(c.d - d) < 1e-12)
            emit(c.key.approach + "," + c.key.optimizer + "," + io::format_double(c.d) + "," +
                     io::format_double(c.noise) + "," + std::to_string(c.seed),
                 c.reconstruction);
    return out;
}

struct ExportPaths {
    std::filesystem::path fig6_fields, fig8_ssd, fig9_ssd, table2_timing, cells;
};

// Adam-trained models go to the fig9 table, everything else to fig8.
inline ExportPaths export_results(const SweepResult& result, const Dataset& groundtruth,
                                  const std::filesystem::path& dir, double field_d = 0.36) {
    std::filesystem::create_directories(dir);
    ExportPaths paths{dir / "fig6_fields.csv", dir / "fig8_ssd.csv", dir / "fig9_ssd.csv",
                      dir / "table2_timing.csv", dir / "sweep_cells.csv"};
    std::vector<Aggregate> fig8, fig9;
    for (const auto& a : aggregate(result.cells)) (a.key.optimizer == "adam" ? fig9 : fig8).push_back(a);
    io::write_file(paths.fig6_fields, fig6_fields_csv(result, groundtruth, field_d));
    io::write_file(paths.fig8_ssd, aggregates_to_csv(fig8));
    io::write_file(paths.fig9_ssd, aggregates_to_csv(fig9));
    io::write_file(paths.table2_timing, timing_to_csv(result.timing));
    io::write_file(paths.cells, cells_to_csv(result.cells));
    return paths;
}

}  // namespace capinv

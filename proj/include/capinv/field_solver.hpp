#pragma once

// Parametric air-filled capacitor: geometry, red-black SOR solve of the
// 5-point Laplacian, and downsampling to the 21x21 model grid.
//
// Coordinates are dimensionless on the unit square. Node (row j, col i) sits
// at x = i*h, y = j*h with h = 1/(n-1); row 0 is the bottom wall (y = 0).
// Values are stored row-major: values[j*n + i].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "capinv/error.hpp"

namespace capinv {

struct CapacitorConfig {
    double a = 0.25;   // plate left edge
    double b = 0.75;   // plate right edge
    double d = 0.5;    // plate separation, the dynamic parameter
    double v0 = 1.0;   // upper plate at +v0, lower plate at -v0
    std::size_t fine_n = 401;
    std::size_t coarse_n = 21;

    void validate() const {
        if (!(0.0 <= a && a < b && b <= 1.0))
            throw ConfigError("capacitor: need 0 <= a < b <= 1");
        if (!(0.0 <= d && d <= 1.0))
            throw ConfigError("capacitor: d must lie in [0,1]");
        if (!(v0 > 0.0)) throw ConfigError("capacitor: v0 must be positive");
        if (fine_n < 3 || coarse_n < 2)
            throw ConfigError("capacitor: grids too small");
        if ((fine_n - 1) % (coarse_n - 1) != 0)
            throw ConfigError("capacitor: (fine_n-1) must be divisible by (coarse_n-1)");
    }
};

struct FieldGrid {
    std::size_t n = 0;
    std::vector<double> values;
    bool normalized = false;  // values divided by v0

    FieldGrid() = default;
    explicit FieldGrid(std::size_t n_, double fill = 0.0) : n(n_), values(n_ * n_, fill) {}
    FieldGrid(std::size_t n_, std::vector<double> v) : n(n_), values(std::move(v)) {
        require_shape(values.size() == n * n, "FieldGrid: value count is not n*n");
    }

    double& at(std::size_t row, std::size_t col) { return values[row * n + col]; }
    double at(std::size_t row, std::size_t col) const { return values[row * n + col]; }

    friend bool operator==(const FieldGrid&, const FieldGrid&) = default;
};

struct BoundaryMask {
    std::size_t n = 0;
    std::vector<unsigned char> fixed;  // 1 where the node is Dirichlet
    std::vector<double> value;         // prescribed potential where fixed
    std::size_t upper_row = 0;
    std::size_t lower_row = 0;

    bool is_fixed(std::size_t row, std::size_t col) const { return fixed[row * n + col] != 0; }
};

// Row index nearest to the dimensionless coordinate y on an n-node axis.
inline std::size_t snap_to_node(double y, std::size_t n) {
    return static_cast<std::size_t>(std::lround(y * static_cast<double>(n - 1)));
}

// Dirichlet data on the fine grid: grounded box plus two plates at
// y = 0.5 +- d/2 spanning x in [a,b].
inline BoundaryMask build_boundary_mask(const CapacitorConfig& config, std::size_t n) {
    config.validate();
    if (n < 3) throw ConfigError("boundary mask: grid needs at least 3 nodes per side");

    BoundaryMask mask;
    mask.n = n;
    mask.fixed.assign(n * n, 0);
    mask.value.assign(n * n, 0.0);

    for (std::size_t k = 0; k < n; ++k) {
        mask.fixed[k] = 1;                    // y = 0
        mask.fixed[(n - 1) * n + k] = 1;      // y = 1
        mask.fixed[k * n] = 1;                // x = 0
        mask.fixed[k * n + n - 1] = 1;        // x = 1
    }

    const std::size_t upper = snap_to_node(0.5 + config.d / 2.0, n);
    const std::size_t lower = snap_to_node(0.5 - config.d / 2.0, n);
    if (upper == lower)
        throw ResolutionError("boundary mask: plates snap to the same row (d=" +
                              std::to_string(config.d) + ", n=" + std::to_string(n) + ")");
    if (config.d < 1.0 && (upper == n - 1 || lower == 0))
        throw ResolutionError("boundary mask: plate snaps onto the outer wall (d=" +
                              std::to_string(config.d) + ", n=" + std::to_string(n) + ")");

    const double scale = static_cast<double>(n - 1);
    constexpr double eps = 1e-9;
    const auto first_col = static_cast<std::size_t>(std::ceil(config.a * scale - eps));
    const auto last_col = static_cast<std::size_t>(std::floor(config.b * scale + eps));
    if (first_col > last_col)
        throw ResolutionError("boundary mask: plate narrower than one grid step");

    for (std::size_t col = first_col; col <= last_col; ++col) {
        mask.fixed[upper * n + col] = 1;
        mask.value[upper * n + col] = config.v0;
        mask.fixed[lower * n + col] = 1;
        mask.value[lower * n + col] = -config.v0;
    }
    mask.upper_row = upper;
    mask.lower_row = lower;
    return mask;
}

inline BoundaryMask build_boundary_mask(const CapacitorConfig& config) {
    return build_boundary_mask(config, config.fine_n);
}

struct SorOptions {
    double omega = 0.0;        // 0 selects 2/(1 + sin(pi/n))
    double tol = 1e-6;         // absolute, in the units of the boundary data
    std::size_t max_sweeps = 100000;

    static double default_omega(std::size_t n) {
        return 2.0 / (1.0 + std::sin(std::numbers::pi / static_cast<double>(n)));
    }
};

struct SorStats {
    std::size_t sweeps = 0;
    double last_update = 0.0;
};

// Red-black SOR. Terminates once the max update of a sweep is below tol and
// the geometric tail estimate update*rho/(1-rho), with rho the ratio of
// successive max updates, is below tol as well.
inline FieldGrid solve_sor(const BoundaryMask& mask, const SorOptions& options = {},
                           SorStats* stats = nullptr) {
    const std::size_t n = mask.n;
    const double omega = options.omega == 0.0 ? SorOptions::default_omega(n) : options.omega;
    if (!(omega >= 1.0 && omega < 2.0)) throw ConfigError("sor: omega must lie in [1,2)");
    if (!(options.tol > 0.0)) throw ConfigError("sor: tol must be positive");
    require_shape(mask.fixed.size() == n * n && mask.value.size() == n * n,
                  "sor: mask arrays are not n*n");

    FieldGrid field(n);
    for (std::size_t k = 0; k < n * n; ++k)
        if (mask.fixed[k]) field.values[k] = mask.value[k];

    double* v = field.values.data();
    const unsigned char* fixed = mask.fixed.data();
    double previous = 0.0;
    double update = 0.0;
    std::size_t sweep = 0;
    bool converged = false;
    while (sweep < options.max_sweeps && !converged) {
        ++sweep;
        update = 0.0;
        for (std::size_t color = 0; color < 2; ++color) {
            for (std::size_t row = 1; row + 1 < n; ++row) {
                const std::size_t base = row * n;
                for (std::size_t col = 1 + ((row + color + 1) % 2); col + 1 < n; col += 2) {
                    const std::size_t k = base + col;
                    if (fixed[k]) continue;
                    const double gs = 0.25 * ((v[k - 1] + v[k + 1]) + (v[k - n] + v[k + n]));
                    const double delta = omega * (gs - v[k]);
                    v[k] += delta;
                    update = std::max(update, std::abs(delta));
                }
            }
        }
        if (update == 0.0) {
            converged = true;
        } else if (update < options.tol && sweep > 1) {
            const double rho = update / previous;
            converged = rho < 1.0 && update * rho / (1.0 - rho) < options.tol;
        }
        previous = update;
    }
    if (stats) *stats = {sweep, update};
    if (!converged && !(update < options.tol))
        throw ConvergenceError("sor: no convergence within " + std::to_string(options.max_sweeps) +
                                   " sweeps, last update " + std::to_string(update),
                               update, sweep);
    return field;
}

// Takes every k-th node, k = (fine.n-1)/(coarse_n-1).
inline FieldGrid downsample(const FieldGrid& fine, std::size_t coarse_n) {
    if (coarse_n < 2 || fine.n < 2 || (fine.n - 1) % (coarse_n - 1) != 0)
        throw ShapeError("downsample: (fine.n-1) must be divisible by (coarse_n-1)");
    const std::size_t k = (fine.n - 1) / (coarse_n - 1);
    FieldGrid coarse(coarse_n);
    coarse.normalized = fine.normalized;
    for (std::size_t row = 0; row < coarse_n; ++row)
        for (std::size_t col = 0; col < coarse_n; ++col)
            coarse.at(row, col) = fine.at(row * k, col * k);
    return coarse;
}

// One labelled field: d and the coarse grid flattened row-major, divided by v0.
struct Sample {
    double d = 0.0;
    std::vector<double> field;

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
    std::size_t grid = 21;
    double v0 = 1.0;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Normalized coarse field for a single separation.
inline std::vector<double> solve_normalized_field(const CapacitorConfig& config,
                                                  const SorOptions& options) {
    const FieldGrid fine = solve_sor(build_boundary_mask(config), options);
    FieldGrid coarse = downsample(fine, config.coarse_n);
    for (double& x : coarse.values) x /= config.v0;
    return std::move(coarse.values);
}

// Solves one field per d. Output is sorted by ascending d and independent of
// the thread count.
inline Dataset generate_dataset(std::vector<double> d_values, const CapacitorConfig& base,
                                const SorOptions& options = {}, unsigned threads = 0) {
    base.validate();
    std::sort(d_values.begin(), d_values.end());
    Dataset out;
    out.grid = base.coarse_n;
    out.v0 = base.v0;
    out.samples.resize(d_values.size());
    if (d_values.empty()) return out;

    for (double d : d_values) {
        CapacitorConfig c = base;
        c.d = d;
        c.validate();
        build_boundary_mask(c);
    }

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, d_values.size()));

    std::vector<std::string> failures(d_values.size());
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t k = begin; k < d_values.size(); k += stride) {
            CapacitorConfig c = base;
            c.d = d_values[k];
            try {
                out.samples[k] = {c.d, solve_normalized_field(c, options)};
            } catch (const std::exception& e) {
                failures[k] = e.what();
            }
        }
    };
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    }
    for (std::size_t k = 0; k < failures.size(); ++k)
        if (!failures[k].empty())
            throw Error("dataset: sample d=" + std::to_string(d_values[k]) + " failed: " +
                        failures[k]);
    return out;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
    std::vector<double> v(count);
    if (count == 1) {
        v[0] = lo;
        return v;
    }
    for (std::size_t k = 0; k < count; ++k)
        v[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
    return v;
}

inline std::vector<double> default_training_d() { return linspace(0.1, 0.9, 120); }
inline std::vector<double> default_test_d() { return {0.3, 0.36, 0.4, 0.5, 0.6, 0.7, 0.8}; }

}  // namespace capinv

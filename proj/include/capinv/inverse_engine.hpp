#pragma once

// Affine regression x -> d and inverse prediction of x for a target d, in
// either the 441-wide field space or the Z-wide latent space.

#include <Eigen/QR>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "capinv/field_solver.hpp"
#include "capinv/generative.hpp"

namespace capinv {

enum class Space { Fullspace, Latent };

inline std::string to_string(Space s) { return s == Space::Latent ? "latent" : "fullspace"; }

inline Space space_from_string(const std::string& s) {
    if (s == "fullspace") return Space::Fullspace;
    if (s == "latent") return Space::Latent;
    throw FormatError("unknown regression space '" + s + "'");
}

// d_hat = x . phi + intercept
struct RegressionModel {
    Space space = Space::Fullspace;
    std::vector<double> phi;
    double intercept = 0.0;
    double fit_residual = 0.0;  // RMS over the training set, in d units

    std::size_t width() const { return phi.size(); }

    double predict(std::span<const double> x) const {
        require_shape(x.size() == phi.size(), "predict: width " + std::to_string(x.size()) +
                                                  ", model expects " + std::to_string(phi.size()));
        double s = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * phi[k];
        return s + intercept;
    }

    friend bool operator==(const RegressionModel&, const RegressionModel&) = default;
};

inline double predict_d(const RegressionModel& model, std::span<const double> x) { return model.predict(x); }

inline double rms_residual(const RegressionModel& model, const std::vector<std::vector<double>>& samples,
                           std::span<const double> targets) {
    double sum = 0.0;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const double r = model.predict(samples[k]) - targets[k];
        sum += r * r;
    }
    return std::sqrt(sum / static_cast<double>(samples.size()));
}

// Least-squares affine fit. Columns are centred first, so the intercept is
// free and phi is the minimum-norm solution of the centred system.
inline RegressionModel fit_regression(Space space, const std::vector<std::vector<double>>& samples,
                                      std::span<const double> targets) {
    if (samples.size() < 2) throw ConfigError("fit_regression: need at least 2 samples");
    require_shape(samples.size() == targets.size(), "fit_regression: sample/target count mismatch");
    const std::size_t width = samples.front().size();
    for (const auto& s : samples) require_shape(s.size() == width, "fit_regression: ragged samples");

    const auto rows = static_cast<Eigen::Index>(samples.size());
    const auto cols = static_cast<Eigen::Index>(width);
    Matrix x(rows, cols);
    Eigen::VectorXd d(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        x.row(r) = Eigen::Map<const RowVector>(samples[static_cast<std::size_t>(r)].data(), cols);
        d(r) = targets[static_cast<std::size_t>(r)];
    }
    const RowVector x_mean = x.colwise().mean();
    const double d_mean = d.mean();
    x.rowwise() -= x_mean;
    d.array() -= d_mean;

    RegressionModel model;
    model.space = space;
    const bool flat_targets = d.cwiseAbs().maxCoeff() == 0.0;
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(cols);
    if (!flat_targets) {
        if (x.cwiseAbs().maxCoeff() == 0.0)
            throw Error("fit_regression: rank collapse, samples are identical but targets vary");
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(x);
        phi = cod.solve(d);
    }
    model.phi.assign(phi.data(), phi.data() + phi.size());
    model.intercept = d_mean - x_mean.dot(phi.transpose());
    model.fit_residual = rms_residual(model, samples, targets);
    return model;
}

// Zero-mean Gaussian noise with variance e, drawn from a generator seeded by seed.
inline std::vector<double> add_awgn(std::span<const double> x, double variance, std::uint64_t seed) {
    if (!(variance >= 0.0)) throw ConfigError("add_awgn: noise variance must be non-negative");
    std::vector<double> y(x.begin(), x.end());
    if (variance == 0.0) return y;
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(variance));
    for (double& v : y) v += normal(rng);
    return y;
}

struct InverseOptions {
    double step_scale = 0.5;  // step = step_scale / (phi . phi)
    double tolerance = 1e-8;
    std::size_t max_iterations = 10000;
};

struct InverseProblem {
    double target_d = 0.5;
    std::vector<double> initial_estimate;
    InverseOptions options;
};

struct InverseResult {
    std::vector<double> x;
    double residual = 0.0;  // |x . phi + c - target|
    std::size_t iterations = 0;
};

// Gradient descent on 1/2 (x . phi + c - target)^2 from the initial estimate.
// Every iterate stays on initial_estimate + span(phi).
inline InverseResult inverse_predict(const RegressionModel& model, const InverseProblem& problem) {
    require_shape(problem.initial_estimate.size() == model.width(),
                  "inverse_predict: initial estimate width " +
                      std::to_string(problem.initial_estimate.size()) + ", model expects " +
                      std::to_string(model.width()));
    if (!(problem.target_d >= 0.0 && problem.target_d <= 1.0))
        throw ConfigError("inverse_predict: target d must lie in [0,1]");
    const InverseOptions& opt = problem.options;
    if (!(opt.step_scale > 0.0 && opt.step_scale < 2.0))
        throw ConfigError("inverse_predict: step scale must lie in (0,2)");

    const std::size_t n = model.width();
    const double* phi = model.phi.data();
    double norm2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) norm2 += phi[k] * phi[k];

    InverseResult out;
    out.x = problem.initial_estimate;
    double* x = out.x.data();
    auto residual = [&] {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += x[k] * phi[k];
        return s + model.intercept - problem.target_d;
    };

    double r = residual();
    if (norm2 == 0.0) {
        if (std::abs(r) < opt.tolerance) {
            out.residual = std::abs(r);
            return out;
        }
        throw Error("inverse_predict: infeasible, phi is zero and the intercept differs from the target");
    }
    const double step = opt.step_scale / norm2;
    while (std::abs(r) >= opt.tolerance) {
        if (out.iterations == opt.max_iterations)
            throw ConvergenceError("inverse_predict: no convergence within " +
                                       std::to_string(opt.max_iterations) + " iterations, residual " +
                                       std::to_string(std::abs(r)),
                                   std::abs(r), out.iterations);
        const double g = step * r;
        for (std::size_t k = 0; k < n; ++k) x[k] -= g * phi[k];
        r = residual();
        ++out.iterations;
    }
    out.residual = std::abs(r);
    return out;
}

// Where the AWGN of the initial estimate is injected for the latent approach.
enum class NoiseSite { SearchSpace, FieldThenEncode };

// Index of the training sample whose d is nearest to `center` (lowest d on ties).
inline std::size_t anchor_index(const Dataset& train, double center = 0.5, double window = 0.2) {
    if (train.empty()) throw ConfigError("anchor: empty training set");
    std::size_t best = 0;
    for (std::size_t k = 1; k < train.size(); ++k)
        if (std::abs(train.samples[k].d - center) < std::abs(train.samples[best].d - center)) best = k;
    if (std::abs(train.samples[best].d - center) > window + 1e-12)
        throw ConfigError("anchor: no training sample within the window around d=" + std::to_string(center));
    return best;
}

inline std::vector<double> dataset_targets(const Dataset& data) {
    std::vector<double> d;
    d.reserve(data.size());
    for (const auto& s : data.samples) d.push_back(s.d);
    return d;
}

inline Matrix dataset_matrix(const Dataset& data) {
    if (data.empty()) return Matrix();
    const auto width = static_cast<Eigen::Index>(data.samples.front().field.size());
    Matrix m(static_cast<Eigen::Index>(data.size()), width);
    for (std::size_t k = 0; k < data.size(); ++k) {
        require_shape(static_cast<Eigen::Index>(data.samples[k].field.size()) == width,
                      "dataset: ragged records");
        m.row(static_cast<Eigen::Index>(k)) = Eigen::Map<const RowVector>(data.samples[k].field.data(), width);
    }
    return m;
}

// Regression and anchor for inverse prediction directly on fields.
struct FullspaceSurrogate {
    RegressionModel regression;
    std::vector<double> anchor_field;
    double anchor_d = 0.0;
    std::size_t grid = 21;
};

// Generative model, latent regression and latent anchor.
struct LatentSurrogate {
    GenerativeModel model;
    RegressionModel regression;
    std::vector<double> anchor_field;
    LatentVector anchor_code;
    double anchor_d = 0.0;
    std::size_t grid = 21;
};

inline std::vector<std::vector<double>> dataset_fields(const Dataset& data) {
    std::vector<std::vector<double>> f;
    f.reserve(data.size());
    for (const auto& s : data.samples) f.push_back(s.field);
    return f;
}

inline std::vector<std::vector<double>> encode_all(const GenerativeModel& model, const Dataset& data) {
    const BatchEncoding e = encode_batch(model, dataset_matrix(data));
    std::vector<std::vector<double>> codes;
    codes.reserve(data.size());
    for (Eigen::Index r = 0; r < e.mu.rows(); ++r) codes.push_back(to_vector(e.mu.row(r)));
    return codes;
}

inline FullspaceSurrogate build_fullspace(const Dataset& train) {
    FullspaceSurrogate s;
    s.grid = train.grid;
    s.regression = fit_regression(Space::Fullspace, dataset_fields(train), dataset_targets(train));
    const std::size_t a = anchor_index(train);
    s.anchor_field = train.samples[a].field;
    s.anchor_d = train.samples[a].d;
    return s;
}

inline FullspaceSurrogate build_fullspace(const Dataset& train, RegressionModel regression) {
    require_shape(regression.space == Space::Fullspace, "fullspace: regression is not fullspace");
    FullspaceSurrogate s;
    s.grid = train.grid;
    s.regression = std::move(regression);
    const std::size_t a = anchor_index(train);
    s.anchor_field = train.samples[a].field;
    s.anchor_d = train.samples[a].d;
    require_shape(s.regression.width() == s.anchor_field.size(), "fullspace: regression width mismatch");
    return s;
}

// Latent regression is fitted on the encoder means of the training fields.
inline LatentSurrogate build_latent(GenerativeModel model, const Dataset& train) {
    LatentSurrogate s;
    s.grid = train.grid;
    s.regression = fit_regression(Space::Latent, encode_all(model, train), dataset_targets(train));
    const std::size_t a = anchor_index(train);
    s.anchor_field = train.samples[a].field;
    s.anchor_code = encode(model, s.anchor_field).mu;
    s.anchor_d = train.samples[a].d;
    s.model = std::move(model);
    return s;
}

inline LatentSurrogate build_latent(GenerativeModel model, const Dataset& train, RegressionModel regression) {
    require_shape(regression.space == Space::Latent && regression.width() == model.latent_dim,
                  "latent: regression does not match the model");
    LatentSurrogate s;
    s.grid = train.grid;
    s.regression = std::move(regression);
    const std::size_t a = anchor_index(train);
    s.anchor_field = train.samples[a].field;
    s.anchor_code = encode(model, s.anchor_field).mu;
    s.anchor_d = train.samples[a].d;
    s.model = std::move(model);
    return s;
}

inline FieldGrid as_grid(std::vector<double> values, std::size_t n) {
    FieldGrid g(n, std::move(values));
    g.normalized = true;
    return g;
}

inline FieldGrid recover_field(const FullspaceSurrogate& s, double target_d, double noise,
                               std::uint64_t seed, const InverseOptions& options = {}) {
    InverseProblem problem{target_d, add_awgn(s.anchor_field, noise, seed), options};
    return as_grid(inverse_predict(s.regression, problem).x, s.grid);
}

inline FieldGrid recover_field(const LatentSurrogate& s, double target_d, double noise,
                               std::uint64_t seed, const InverseOptions& options = {},
                               NoiseSite site = NoiseSite::SearchSpace) {
    LatentVector start = site == NoiseSite::SearchSpace
                             ? add_awgn(s.anchor_code, noise, seed)
                             : encode(s.model, add_awgn(s.anchor_field, noise, seed)).mu;
    InverseProblem problem{target_d, std::move(start), options};
    return as_grid(decode(s.model, inverse_predict(s.regression, problem).x), s.grid);
}

}  // namespace capinv

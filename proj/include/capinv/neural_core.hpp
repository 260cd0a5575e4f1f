#pragma once

// Dense tanh networks with exact backpropagation and the two gradient
// learners (Momentum, Adam). Batches are row-major in the sense that each row
// of an input matrix is one sample.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "capinv/error.hpp"

namespace capinv {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

enum class Activation { Tanh, Linear };

inline std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "linear"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "linear") return Activation::Linear;
    throw FormatError("unknown activation '" + s + "'");
}

// Three independent streams carved from one master seed: parameter init,
// minibatch order, latent noise.
struct SeedStreams {
    std::uint64_t init;
    std::uint64_t shuffle;
    std::uint64_t noise;

    explicit SeedStreams(std::uint64_t master) {
        Rng rng(master);
        init = rng();
        shuffle = rng();
        noise = rng();
    }
};

struct Mlp {
    std::vector<std::size_t> layer_sizes;
    std::vector<Matrix> weights;     // fan_in x fan_out
    std::vector<RowVector> biases;   // 1 x fan_out
    Activation hidden_activation = Activation::Tanh;
    Activation output_activation = Activation::Tanh;

    Mlp() = default;

    // Zero-initialized network.
    Mlp(std::vector<std::size_t> sizes, Activation output)
        : layer_sizes(std::move(sizes)), output_activation(output) {
        if (layer_sizes.size() < 2) throw ShapeError("mlp: need at least input and output widths");
        for (std::size_t w : layer_sizes)
            if (w == 0) throw ShapeError("mlp: zero-width layer");
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
            weights.push_back(Matrix::Zero(static_cast<Eigen::Index>(layer_sizes[l]),
                                           static_cast<Eigen::Index>(layer_sizes[l + 1])));
            biases.push_back(RowVector::Zero(static_cast<Eigen::Index>(layer_sizes[l + 1])));
        }
    }

    // Uniform in +-sqrt(6/(fan_in+fan_out)), biases zero.
    Mlp(std::vector<std::size_t> sizes, Activation output, Rng& rng) : Mlp(std::move(sizes), output) {
        for (auto& w : weights) {
            const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
        }
    }

    std::size_t layers() const { return weights.size(); }
    std::size_t input_width() const { return layer_sizes.front(); }
    std::size_t output_width() const { return layer_sizes.back(); }

    Activation activation_of(std::size_t layer) const {
        return layer + 1 == layers() ? output_activation : hidden_activation;
    }

    std::size_t parameter_count() const {
        std::size_t count = 0;
        for (std::size_t l = 0; l < layers(); ++l)
            count += static_cast<std::size_t>(weights[l].size() + biases[l].size());
        return count;
    }

    bool all_finite() const {
        for (std::size_t l = 0; l < layers(); ++l)
            if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
        return true;
    }

    friend bool operator==(const Mlp& x, const Mlp& y) {
        if (x.layer_sizes != y.layer_sizes || x.hidden_activation != y.hidden_activation ||
            x.output_activation != y.output_activation)
            return false;
        for (std::size_t l = 0; l < x.layers(); ++l)
            if (x.weights[l] != y.weights[l] || x.biases[l] != y.biases[l]) return false;
        return true;
    }
};

// layers[0] is the input batch, layers[l+1] the post-activation output of layer l.
struct Activations {
    std::vector<Matrix> layers;

    const Matrix& output() const { return layers.back(); }
};

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<RowVector> biases;
    Matrix input;  // d loss / d input batch

    static Gradients zeros_like(const Mlp& net) {
        Gradients g;
        for (std::size_t l = 0; l < net.layers(); ++l) {
            g.weights.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
            g.biases.push_back(RowVector::Zero(net.biases[l].size()));
        }
        return g;
    }

    bool all_finite() const {
        for (std::size_t l = 0; l < weights.size(); ++l)
            if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
        return true;
    }
};

inline void apply_activation(Matrix& z, Activation a) {
    if (a == Activation::Tanh) z = z.array().tanh().matrix();
}

inline Activations forward(const Mlp& net, const Matrix& batch) {
    require_shape(static_cast<std::size_t>(batch.cols()) == net.input_width(),
                  "forward: batch width " + std::to_string(batch.cols()) +
                      " does not match input layer " + std::to_string(net.input_width()));
    Activations acts;
    acts.layers.reserve(net.layers() + 1);
    acts.layers.push_back(batch);
    for (std::size_t l = 0; l < net.layers(); ++l) {
        Matrix z(batch.rows(), net.weights[l].cols());
        z.noalias() = acts.layers.back() * net.weights[l];
        z.rowwise() += net.biases[l];
        apply_activation(z, net.activation_of(l));
        acts.layers.push_back(std::move(z));
    }
    return acts;
}

// Exact gradients of a scalar loss given d loss / d output (post-activation).
inline Gradients backward(const Mlp& net, const Activations& acts, const Matrix& output_gradient) {
    require_shape(acts.layers.size() == net.layers() + 1, "backward: activations from another net");
    for (std::size_t l = 0; l <= net.layers(); ++l)
        require_shape(static_cast<std::size_t>(acts.layers[l].cols()) == net.layer_sizes[l] &&
                          acts.layers[l].rows() == acts.layers[0].rows(),
                      "backward: activations do not match the net");
    require_shape(output_gradient.rows() == acts.output().rows() &&
                      output_gradient.cols() == acts.output().cols(),
                  "backward: output gradient shape mismatch");

    Gradients grads;
    grads.weights.resize(net.layers());
    grads.biases.resize(net.layers());

    Matrix delta = output_gradient;
    for (std::size_t l = net.layers(); l-- > 0;) {
        if (net.activation_of(l) == Activation::Tanh)
            delta.array() *= 1.0 - acts.layers[l + 1].array().square();
        grads.weights[l].noalias() = acts.layers[l].transpose() * delta;
        grads.biases[l] = delta.colwise().sum();
        Matrix upstream(delta.rows(), net.weights[l].rows());
        upstream.noalias() = delta * net.weights[l].transpose();
        delta = std::move(upstream);
    }
    grads.input = std::move(delta);
    return grads;
}

enum class OptimizerKind { Momentum, Adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "momentum"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "momentum") return OptimizerKind::Momentum;
    throw ConfigError("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    // Learning-rate pairing used for the published runs.
    static OptimizerConfig defaults(OptimizerKind kind) {
        OptimizerConfig c;
        c.kind = kind;
        c.learning_rate = kind == OptimizerKind::Adam ? 1e-3 : 1e-5;
        return c;
    }
};

// Per-network optimizer state. Buffers are shaped like the net's parameters.
class Optimizer {
public:
    Optimizer(OptimizerConfig config, const Mlp& net)
        : config_(config), first_(Gradients::zeros_like(net)), second_(Gradients::zeros_like(net)) {}

    const OptimizerConfig& config() const { return config_; }
    std::uint64_t steps() const { return steps_; }
    const Gradients& velocity() const { return first_; }

    void step(Mlp& net, const Gradients& grads) {
        require_shape(grads.weights.size() == net.layers() && grads.biases.size() == net.layers(),
                      "optimizer: gradient layer count mismatch");
        for (std::size_t l = 0; l < net.layers(); ++l)
            require_shape(grads.weights[l].rows() == net.weights[l].rows() &&
                              grads.weights[l].cols() == net.weights[l].cols() &&
                              grads.biases[l].size() == net.biases[l].size(),
                          "optimizer: gradient shape mismatch");
        require_shape(first_.weights.size() == net.layers(), "optimizer: state belongs to another net");
        if (!grads.all_finite()) throw NonFiniteError("optimizer: non-finite gradient", steps_);

        ++steps_;
        for (std::size_t l = 0; l < net.layers(); ++l) {
            update(net.weights[l], grads.weights[l], first_.weights[l], second_.weights[l]);
            update(net.biases[l], grads.biases[l], first_.biases[l], second_.biases[l]);
        }
    }

private:
    template <typename P>
    void update(P& param, const P& grad, P& m, P& v) const {
        const double lr = config_.learning_rate;
        if (config_.kind == OptimizerKind::Momentum) {
            m = config_.momentum * m - lr * grad;
            param += m;
            return;
        }
        const double t = static_cast<double>(steps_);
        const double c1 = 1.0 - std::pow(config_.beta1, t);
        const double c2 = 1.0 - std::pow(config_.beta2, t);
        m = config_.beta1 * m + (1.0 - config_.beta1) * grad;
        v = config_.beta2 * v + (1.0 - config_.beta2) * grad.cwiseProduct(grad);
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config_.epsilon);
    }

    OptimizerConfig config_;
    Gradients first_;   // velocity (Momentum) or first moment (Adam)
    Gradients second_;  // second moment (Adam only)
    std::uint64_t steps_ = 0;
};

struct Schedule {
    std::size_t max_iterations = 20000;
    std::size_t minibatch_size = 20;
    std::uint64_t seed = 0;
};

// Walks seeded permutations of [0, n) in chunks, reshuffling each epoch.
// A trailing chunk shorter than the batch is dropped.
class MinibatchSampler {
public:
    MinibatchSampler(std::size_t n, std::size_t batch, std::uint64_t seed)
        : order_(n), batch_(batch), rng_(seed) {
        if (n == 0) throw ConfigError("minibatch: empty dataset");
        if (batch == 0 || batch > n) throw ConfigError("minibatch: size must lie in [1, dataset size]");
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        reshuffle();
    }

    std::vector<std::size_t> next() {
        if (cursor_ + batch_ > order_.size()) reshuffle();
        std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                     order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_));
        cursor_ += batch_;
        return out;
    }

private:
    void reshuffle() {
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
    }

    std::vector<std::size_t> order_;
    std::size_t batch_;
    std::size_t cursor_ = 0;
    Rng rng_;
};

inline Matrix gather_rows(const Matrix& data, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), data.cols());
    for (std::size_t k = 0; k < rows.size(); ++k)
        out.row(static_cast<Eigen::Index>(k)) = data.row(static_cast<Eigen::Index>(rows[k]));
    return out;
}

// Loss over a minibatch: returns the batch-mean loss and d loss / d output.
using LossFn = std::function<std::pair<double, Matrix>(const Matrix& output, const Matrix& target)>;

// Mean over rows of 1/2 * sum of squared differences.
inline std::pair<double, Matrix> half_squared_error(const Matrix& output, const Matrix& target) {
    require_shape(output.rows() == target.rows() && output.cols() == target.cols(),
                  "loss: output/target shape mismatch");
    const double batch = static_cast<double>(output.rows());
    Matrix diff = output - target;
    const double loss = 0.5 * diff.squaredNorm() / batch;
    diff /= batch;
    return {loss, std::move(diff)};
}

// Runs exactly schedule.max_iterations supervised minibatch steps.
inline std::vector<double> train(Mlp& net, const Matrix& inputs, const Matrix& targets,
                                 const LossFn& loss_fn, Optimizer& optimizer,
                                 const Schedule& schedule) {
    require_shape(inputs.rows() == targets.rows(), "train: input/target row mismatch");
    std::vector<double> history;
    if (schedule.max_iterations == 0) return history;
    history.reserve(schedule.max_iterations);
    MinibatchSampler sampler(static_cast<std::size_t>(inputs.rows()), schedule.minibatch_size,
                             schedule.seed);
    for (std::size_t it = 0; it < schedule.max_iterations; ++it) {
        const auto rows = sampler.next();
        const Activations acts = forward(net, gather_rows(inputs, rows));
        auto [loss, dout] = loss_fn(acts.output(), gather_rows(targets, rows));
        if (!std::isfinite(loss))
            throw NonFiniteError("train: non-finite loss at iteration " + std::to_string(it), it);
        optimizer.step(net, backward(net, acts, dout));
        history.push_back(loss);
    }
    return history;
}

}  // namespace capinv

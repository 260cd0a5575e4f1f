#pragma once

// AE and VAE on top of neural_core.
//
// Encoder: input -> hidden... -> Z (AE) or 2Z (VAE, columns [mu | log-variance]),
// linear heads. Decoder: Z -> hidden... -> input, tanh output.
// Training minimizes 1/2 sum (V - V')^2 + beta * 1/2 sum (sigma^2 + mu^2 - ln sigma^2 - 1),
// summed over coordinates and averaged over the minibatch.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "capinv/neural_core.hpp"

namespace capinv {

enum class ModelKind { AE, VAE };

inline std::string to_string(ModelKind k) { return k == ModelKind::VAE ? "vae" : "ae"; }

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "ae") return ModelKind::AE;
    if (s == "vae") return ModelKind::VAE;
    throw ConfigError("unknown model kind '" + s + "'");
}

struct GenerativeModel {
    ModelKind kind = ModelKind::VAE;
    std::size_t latent_dim = 20;
    Mlp encoder;
    Mlp decoder;

    std::size_t input_width() const { return encoder.input_width(); }

    void check() const {
        const std::size_t heads = kind == ModelKind::VAE ? 2 * latent_dim : latent_dim;
        require_shape(encoder.output_width() == heads, "generative: encoder head width mismatch");
        require_shape(decoder.input_width() == latent_dim, "generative: decoder input width mismatch");
        require_shape(decoder.output_width() == encoder.input_width(),
                      "generative: decoder output width mismatch");
    }

    friend bool operator==(const GenerativeModel&, const GenerativeModel&) = default;
};

struct Architecture {
    std::size_t input = 441;
    std::vector<std::size_t> hidden = {200};
    std::size_t latent = 20;
};

// Zero weights when rng is null.
inline GenerativeModel make_generative(ModelKind kind, const Architecture& arch, Rng* rng = nullptr) {
    std::vector<std::size_t> enc{arch.input};
    enc.insert(enc.end(), arch.hidden.begin(), arch.hidden.end());
    enc.push_back(kind == ModelKind::VAE ? 2 * arch.latent : arch.latent);
    std::vector<std::size_t> dec{arch.latent};
    dec.insert(dec.end(), arch.hidden.rbegin(), arch.hidden.rend());
    dec.push_back(arch.input);

    GenerativeModel model;
    model.kind = kind;
    model.latent_dim = arch.latent;
    if (rng) {
        model.encoder = Mlp(enc, Activation::Linear, *rng);
        model.decoder = Mlp(dec, Activation::Tanh, *rng);
    } else {
        model.encoder = Mlp(enc, Activation::Linear);
        model.decoder = Mlp(dec, Activation::Tanh);
    }
    return model;
}

using LatentVector = std::vector<double>;

struct Encoding {
    LatentVector mu;
    std::vector<double> sigma;  // empty for AE
};

struct BatchEncoding {
    Matrix mu;
    Matrix log_var;  // empty for AE
};

inline BatchEncoding encode_batch(const GenerativeModel& model, const Matrix& fields) {
    model.check();
    const Activations acts = forward(model.encoder, fields);
    const auto z = static_cast<Eigen::Index>(model.latent_dim);
    if (model.kind == ModelKind::AE) return {acts.output(), Matrix()};
    return {acts.output().leftCols(z), acts.output().rightCols(z)};
}

inline Matrix as_row(std::span<const double> v) {
    return Eigen::Map<const RowVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_vector(const Eigen::Ref<const RowVector>& row) {
    return {row.data(), row.data() + row.size()};
}

inline Encoding encode(const GenerativeModel& model, std::span<const double> field) {
    require_shape(field.size() == model.input_width(),
                  "encode: field length " + std::to_string(field.size()) + ", expected " +
                      std::to_string(model.input_width()));
    const BatchEncoding e = encode_batch(model, as_row(field));
    Encoding out;
    out.mu = to_vector(e.mu.row(0));
    if (model.kind == ModelKind::VAE) {
        out.sigma.resize(model.latent_dim);
        for (std::size_t k = 0; k < model.latent_dim; ++k)
            out.sigma[k] = std::exp(0.5 * e.log_var(0, static_cast<Eigen::Index>(k)));
    }
    return out;
}

// z = mu + sigma * noise, elementwise.
inline LatentVector sample_latent(std::span<const double> mu, std::span<const double> sigma,
                                  std::span<const double> noise) {
    require_shape(mu.size() == sigma.size() && mu.size() == noise.size(),
                  "sample_latent: mu/sigma/noise lengths differ");
    LatentVector z(mu.size());
    for (std::size_t k = 0; k < mu.size(); ++k) {
        if (sigma[k] < 0.0) throw ConfigError("sample_latent: negative sigma");
        z[k] = mu[k] + sigma[k] * noise[k];
    }
    return z;
}

inline LatentVector sample_latent(std::span<const double> mu, std::span<const double> sigma,
                                  Rng& rng) {
    std::normal_distribution<double> normal;
    std::vector<double> noise(mu.size());
    for (double& x : noise) x = normal(rng);
    return sample_latent(mu, sigma, noise);
}

inline double rec_loss(std::span<const double> v, std::span<const double> v_rec) {
    require_shape(v.size() == v_rec.size(), "rec_loss: length mismatch");
    double sum = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        const double diff = v[k] - v_rec[k];
        sum += diff * diff;
    }
    return 0.5 * sum;
}

inline double kld_loss(std::span<const double> mu, std::span<const double> sigma) {
    require_shape(mu.size() == sigma.size(), "kld_loss: length mismatch");
    double sum = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        if (!(sigma[k] > 0.0)) throw ConfigError("kld_loss: sigma must be positive");
        const double s2 = sigma[k] * sigma[k];
        sum += s2 + mu[k] * mu[k] - std::log(s2) - 1.0;
    }
    return 0.5 * sum;
}

inline Matrix decode_batch(const GenerativeModel& model, const Matrix& codes) {
    model.check();
    return forward(model.decoder, codes).output();
}

// Output is normalized to [-1,1]; pass v0 to get volts back.
inline std::vector<double> decode(const GenerativeModel& model, std::span<const double> z,
                                  double v0 = 1.0) {
    require_shape(z.size() == model.latent_dim,
                  "decode: latent length " + std::to_string(z.size()) + ", expected " +
                      std::to_string(model.latent_dim));
    std::vector<double> out = to_vector(decode_batch(model, as_row(z)).row(0));
    if (v0 != 1.0)
        for (double& x : out) x *= v0;
    return out;
}

struct GenerativeConfig {
    OptimizerConfig optimizer = OptimizerConfig::defaults(OptimizerKind::Adam);
    std::size_t max_iterations = 20000;
    std::size_t minibatch_size = 20;
    double beta = 1.0;
    bool sample_noise = true;  // false pins every noise draw to 0
};

struct LossRecord {
    double total = 0.0;
    double rec = 0.0;
    double kld = 0.0;
};

struct TrainedGenerative {
    GenerativeModel model;
    std::vector<LossRecord> history;
};

// Batch-mean losses and the gradients of encoder/decoder for one minibatch.
struct GenerativeStep {
    LossRecord loss;
    Gradients encoder;
    Gradients decoder;
};

// noise holds one standard-normal row per sample (ignored for AE).
inline GenerativeStep generative_gradients(const GenerativeModel& model, const Matrix& batch,
                                           const Matrix& noise, double beta) {
    model.check();
    const auto zdim = static_cast<Eigen::Index>(model.latent_dim);
    const double count = static_cast<double>(batch.rows());

    const Activations enc = forward(model.encoder, batch);
    Matrix mu = enc.output().leftCols(zdim);
    Matrix log_var, sigma, code;
    if (model.kind == ModelKind::VAE) {
        require_shape(noise.rows() == batch.rows() && noise.cols() == zdim,
                      "generative: noise shape mismatch");
        log_var = enc.output().rightCols(zdim);
        sigma = (0.5 * log_var.array()).exp().matrix();
        code = mu + sigma.cwiseProduct(noise);
    } else {
        code = mu;
    }

    const Activations dec = forward(model.decoder, code);
    Matrix diff = dec.output() - batch;

    GenerativeStep step;
    step.loss.rec = 0.5 * diff.squaredNorm() / count;
    diff /= count;
    step.decoder = backward(model.decoder, dec, diff);
    const Matrix& dcode = step.decoder.input;

    Matrix dhead(batch.rows(), enc.output().cols());
    if (model.kind == ModelKind::VAE) {
        const Matrix s2 = sigma.cwiseProduct(sigma);
        step.loss.kld = 0.5 * (s2.array() + mu.array().square() - log_var.array() - 1.0).sum() / count;
        dhead.leftCols(zdim) = dcode + (beta / count) * mu;
        dhead.rightCols(zdim) = (0.5 * dcode.cwiseProduct(noise).cwiseProduct(sigma)) +
                                (0.5 * beta / count) * (s2.array() - 1.0).matrix();
    } else {
        dhead = dcode;
    }
    step.loss.total = step.loss.rec + beta * step.loss.kld;
    step.encoder = backward(model.encoder, enc, dhead);
    return step;
}

// Trains a given initial model on unlabelled fields (one row each).
inline TrainedGenerative train_generative(GenerativeModel model, const Matrix& fields,
                                          const GenerativeConfig& config, std::uint64_t seed) {
    model.check();
    require_shape(static_cast<std::size_t>(fields.cols()) == model.input_width(),
                  "train_generative: field width mismatch");
    const SeedStreams streams(seed);
    TrainedGenerative out;
    out.history.reserve(config.max_iterations);
    if (config.max_iterations == 0) {
        out.model = std::move(model);
        return out;
    }

    MinibatchSampler sampler(static_cast<std::size_t>(fields.rows()), config.minibatch_size,
                             streams.shuffle);
    Rng noise_rng(streams.noise);
    std::normal_distribution<double> normal;
    Optimizer enc_opt(config.optimizer, model.encoder);
    Optimizer dec_opt(config.optimizer, model.decoder);
    const auto zdim = static_cast<Eigen::Index>(model.latent_dim);

    for (std::size_t it = 0; it < config.max_iterations; ++it) {
        const Matrix batch = gather_rows(fields, sampler.next());
        Matrix noise = Matrix::Zero(batch.rows(), model.kind == ModelKind::VAE ? zdim : 0);
        if (model.kind == ModelKind::VAE && config.sample_noise)
            for (Eigen::Index r = 0; r < noise.rows(); ++r)
                for (Eigen::Index c = 0; c < zdim; ++c) noise(r, c) = normal(noise_rng);

        GenerativeStep step = generative_gradients(model, batch, noise, config.beta);
        if (!std::isfinite(step.loss.total))
            throw NonFiniteError("train_generative: non-finite loss at iteration " + std::to_string(it),
                                 it);
        try {
            enc_opt.step(model.encoder, step.encoder);
            dec_opt.step(model.decoder, step.decoder);
        } catch (const NonFiniteError&) {
            throw NonFiniteError("train_generative: non-finite gradient at iteration " +
                                     std::to_string(it),
                                 it);
        }
        out.history.push_back(step.loss);
    }
    out.model = std::move(model);
    return out;
}

inline TrainedGenerative train_generative(ModelKind kind, const Matrix& fields,
                                          const GenerativeConfig& config, std::uint64_t seed,
                                          Architecture arch = {}) {
    arch.input = static_cast<std::size_t>(fields.cols());
    Rng init(SeedStreams(seed).init);
    return train_generative(make_generative(kind, arch, &init), fields, config, seed);
}

}  // namespace capinv

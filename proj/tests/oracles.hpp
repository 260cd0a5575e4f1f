#pragma once

// Independent reference computations used only by the tests.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "capinv/capinv.hpp"

namespace oracle {

// Assembles the 5-point Laplacian over the free nodes and solves it with a
// dense LU factorization.
inline std::vector<double> direct_laplace(const capinv::BoundaryMask& mask) {
    const std::size_t n = mask.n;
    std::vector<long> index(n * n, -1);
    long unknowns = 0;
    for (std::size_t k = 0; k < n * n; ++k)
        if (!mask.fixed[k]) index[k] = unknowns++;

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(unknowns, unknowns);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(unknowns);
    for (std::size_t row = 0; row < n; ++row)
        for (std::size_t col = 0; col < n; ++col) {
            const std::size_t k = row * n + col;
            if (mask.fixed[k]) continue;
            const long eq = index[k];
            a(eq, eq) = 4.0;
            for (std::size_t nb : {k - 1, k + 1, k - n, k + n}) {
                if (mask.fixed[nb])
                    rhs(eq) += mask.value[nb];
                else
                    a(eq, index[nb]) = -1.0;
            }
        }
    const Eigen::VectorXd x = a.partialPivLu().solve(rhs);
    std::vector<double> out(n * n);
    for (std::size_t k = 0; k < n * n; ++k) out[k] = mask.fixed[k] ? mask.value[k] : x(index[k]);
    return out;
}

// Plain per-neuron forward pass of an Mlp on one sample.
inline std::vector<double> neuron_forward(const capinv::Mlp& net, std::vector<double> x) {
    for (std::size_t l = 0; l < net.layers(); ++l) {
        const auto& w = net.weights[l];
        std::vector<double> y(static_cast<std::size_t>(w.cols()));
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            double s = net.biases[l](j);
            for (Eigen::Index i = 0; i < w.rows(); ++i) s += x[static_cast<std::size_t>(i)] * w(i, j);
            y[static_cast<std::size_t>(j)] =
                net.activation_of(l) == capinv::Activation::Tanh ? std::tanh(s) : s;
        }
        x = std::move(y);
    }
    return x;
}

// Pointers to every scalar parameter of a net, in a fixed order.
inline std::vector<double*> parameters(capinv::Mlp& net) {
    std::vector<double*> p;
    for (std::size_t l = 0; l < net.layers(); ++l) {
        for (Eigen::Index k = 0; k < net.weights[l].size(); ++k) p.push_back(net.weights[l].data() + k);
        for (Eigen::Index k = 0; k < net.biases[l].size(); ++k) p.push_back(net.biases[l].data() + k);
    }
    return p;
}

inline std::vector<double> flatten(const capinv::Gradients& g) {
    std::vector<double> out;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        out.insert(out.end(), g.weights[l].data(), g.weights[l].data() + g.weights[l].size());
        out.insert(out.end(), g.biases[l].data(), g.biases[l].data() + g.biases[l].size());
    }
    return out;
}

// Central differences of loss() with respect to each pointed-to parameter.
inline std::vector<double> central_differences(const std::vector<double*>& params,
                                               const std::function<double()>& loss, double h = 1e-5) {
    std::vector<double> out(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double keep = *params[k];
        *params[k] = keep + h;
        const double up = loss();
        *params[k] = keep - h;
        const double down = loss();
        *params[k] = keep;
        out[k] = (up - down) / (2.0 * h);
    }
    return out;
}

// max_k |a_k - b_k| / max(1, |a_k|, |b_k|)
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double scale = std::max({1.0, std::abs(a[k]), std::abs(b[k])});
        worst = std::max(worst, std::abs(a[k] - b[k]) / scale);
    }
    return worst;
}

// Orthogonal projection of x0 onto {x : x.phi + c = target}.
inline std::vector<double> projection(const std::vector<double>& x0, const std::vector<double>& phi, double c,
                                      double target) {
    double dot = 0.0, norm2 = 0.0;
    for (std::size_t k = 0; k < x0.size(); ++k) {
        dot += x0[k] * phi[k];
        norm2 += phi[k] * phi[k];
    }
    const double t = (target - dot - c) / norm2;
    std::vector<double> out(x0);
    for (std::size_t k = 0; k < x0.size(); ++k) out[k] += t * phi[k];
    return out;
}

inline double naive_dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

inline double naive_ssd(const capinv::FieldGrid& a, const capinv::FieldGrid& b) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.n; ++r)
        for (std::size_t c = 0; c < a.n; ++c) s += (a.at(r, c) - b.at(r, c)) * (a.at(r, c) - b.at(r, c));
    return s;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

inline void randomize(capinv::Mlp& net, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    for (double* p : parameters(net)) *p = u(rng);
}

}  // namespace oracle

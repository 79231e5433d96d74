#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "nasg/math.hpp"

namespace nasg {

constexpr int kHiddenUnits = 128;
constexpr int kNumLayers = 4;

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// Weights of the bias-free 4-layer MLP. Layer l maps row vectors through
/// Y = X * w[l]; shapes are 64x128, 128x128, 128x128, 128x(8N+1).
template <typename T>
struct NetworkParameters {
    std::array<Matrix<T>, kNumLayers> w;

    int input_dim() const { return static_cast<int>(w[0].rows()); }
    int output_dim() const { return static_cast<int>(w[kNumLayers - 1].cols()); }

    bool same_shape(const NetworkParameters &o) const {
        for (int l = 0; l < kNumLayers; ++l)
            if (w[l].rows() != o.w[l].rows() || w[l].cols() != o.w[l].cols()) return false;
        return true;
    }

    bool finite() const {
        for (const auto &m : w)
            if (!m.allFinite()) return false;
        return true;
    }
};

/// Scaled uniform fan-in initialization.
template <typename T>
NetworkParameters<T> init_network(int input_dim, int output_dim, std::uint64_t seed) {
    NetworkParameters<T> p;
    int dims[kNumLayers + 1] = {input_dim, kHiddenUnits, kHiddenUnits, kHiddenUnits,
                                output_dim};
    Pcg32 rng(hash_mix(seed), 0xda3e39cb94b95bdbull);
    for (int l = 0; l < kNumLayers; ++l) {
        p.w[l].resize(dims[l], dims[l + 1]);
        double limit = std::sqrt(6.0 / dims[l]);
        for (int r = 0; r < p.w[l].rows(); ++r)
            for (int c = 0; c < p.w[l].cols(); ++c)
                p.w[l](r, c) = static_cast<T>((rng.next_double() * 2.0 - 1.0) * limit);
    }
    return p;
}

/// Activations cached by forward for reuse in backward. `h[0]` is the input
/// batch; `h[l]` for l >= 1 holds the rectified output of hidden layer l.
template <typename T>
struct ForwardCache {
    std::array<Matrix<T>, kNumLayers> h;
    Matrix<T> out;
};

/// Batched forward pass: three rectified hidden layers, linear output.
/// Rows of `batch` are individual inputs.
template <typename T>
void forward(const NetworkParameters<T> &params, const Matrix<T> &batch,
             ForwardCache<T> *cache) {
    cache->h[0] = batch;
    for (int l = 0; l < kNumLayers - 1; ++l)
        cache->h[l + 1] = (cache->h[l] * params.w[l]).cwiseMax(T(0));
    cache->out = cache->h[kNumLayers - 1] * params.w[kNumLayers - 1];
}

template <typename T>
Matrix<T> forward(const NetworkParameters<T> &params, const Matrix<T> &batch) {
    ForwardCache<T> cache;
    forward(params, batch, &cache);
    return cache.out;
}

/// Index of the first batch row with a non-finite output, or -1.
template <typename T>
int first_nonfinite_row(const Matrix<T> &out) {
    for (int r = 0; r < out.rows(); ++r)
        if (!out.row(r).allFinite()) return r;
    return -1;
}

/// Exact reverse-mode gradients of the forward map contracted with
/// `output_gradients` (same shape as cache.out).
template <typename T>
NetworkParameters<T> backward(const NetworkParameters<T> &params,
                              const ForwardCache<T> &cache,
                              const Matrix<T> &output_gradients) {
    NetworkParameters<T> grads;
    Matrix<T> delta = output_gradients;
    for (int l = kNumLayers - 1; l >= 0; --l) {
        grads.w[l] = cache.h[l].transpose() * delta;
        if (l > 0) {
            delta = delta * params.w[l].transpose();
            // rectifier gate: post-activation > 0 iff pre-activation > 0
            delta.array() *= (cache.h[l].array() > T(0)).template cast<T>();
        }
    }
    return grads;
}

template <typename T>
struct AdamState {
    std::array<Matrix<T>, kNumLayers> m;
    std::array<Matrix<T>, kNumLayers> v;
    std::int64_t t = 0;
    std::uint64_t skipped = 0;

    T learning_rate = T(0.002);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);

    static AdamState make(const NetworkParameters<T> &params, T learning_rate = T(0.002)) {
        AdamState s;
        s.learning_rate = learning_rate;
        for (int l = 0; l < kNumLayers; ++l) {
            s.m[l] = Matrix<T>::Zero(params.w[l].rows(), params.w[l].cols());
            s.v[l] = Matrix<T>::Zero(params.w[l].rows(), params.w[l].cols());
        }
        return s;
    }
};

/// Standard bias-corrected Adam update. Non-finite gradients skip the whole
/// update and bump the skip counter. Returns false when skipped.
template <typename T>
bool adam_step(AdamState<T> &state, NetworkParameters<T> &params,
               const NetworkParameters<T> &grads) {
    for (int l = 0; l < kNumLayers; ++l)
        if (!grads.w[l].allFinite()) {
            ++state.skipped;
            return false;
        }
    ++state.t;
    T corr1 = T(1) - std::pow(state.beta1, T(state.t));
    T corr2 = T(1) - std::pow(state.beta2, T(state.t));
    for (int l = 0; l < kNumLayers; ++l) {
        state.m[l] = state.beta1 * state.m[l] + (T(1) - state.beta1) * grads.w[l];
        state.v[l] =
            state.beta2 * state.v[l].array() +
            (T(1) - state.beta2) * grads.w[l].array().square();
        auto m_hat = state.m[l].array() / corr1;
        auto v_hat = state.v[l].array() / corr2;
        params.w[l].array() -= state.learning_rate * m_hat / (v_hat.sqrt() + state.eps);
    }
    return true;
}

/// Immutable inference snapshot published at iteration boundaries.
using NetworkSnapshot = std::shared_ptr<const NetworkParameters<float>>;

/// Checkpoint file: magic "NASGNET1", u32 component count, u32 dim count,
/// u32 layer dims, then row-major little-endian f32 matrices W1..W4.
void save_checkpoint(const std::string &path, const NetworkParameters<float> &params,
                     int n_components);
NetworkParameters<float> load_checkpoint(const std::string &path, int *n_components);

} // namespace nasg

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nasg/encoding.hpp"
#include "nasg/net.hpp"
#include "nasg/sphdist.hpp"

namespace nasg {

/// Learned guide at one shading point: an NASG mixture plus the selection
/// probability c used to blend against BSDF sampling.
struct GuideDistribution {
    NasgMixture mixture;
    double c = 0.5;
};

constexpr double kSelectionMin = 0.01;
constexpr double kSelectionMax = 0.99;

/// Raw network output layout for N components:
///   [0, 5N)      orientation logits, 5 per component
///   [5N, 7N)     (lambda, a) logits, 2 per component
///   [7N, 8N)     mixture weight logits
///   [8N]         selection probability logit
constexpr int raw_output_dim(int n_components) { return 8 * n_components + 1; }

/// Decode plus the intermediates needed to push gradients back to the raw
/// outputs (sigmoid values, pair norms, clamp flags, softmax weights).
struct DecodedGuide {
    GuideDistribution g;
    int n = 0;
    std::vector<double> sig_s0;      // 5N sigmoid outputs
    std::vector<double> pair_norm;   // 2N pre-renormalization pair norms (0 => degenerate)
    std::vector<bool> lambda_clamped; // N
    std::vector<bool> a_clamped;      // N
    double c_sig = 0.5;               // sigmoid(c_logit) before clamping
};

DecodedGuide decode_full(std::span<const float> raw);

/// Spec-facing decode: every finite raw vector yields a valid guide.
GuideDistribution decode(std::span<const float> raw);

/// Effective scattering pdf: q^(v) = c' q_mix(v) + (1 - c') p_bsdf(v) with
/// c' = b * c.
double guided_pdf(const GuideDistribution &g, double b, double bsdf_pdf, const Vec3 &v);

/// One recorded shading event used as a training sample.
struct TrainingSample {
    Vec3 position;
    Vec3 omega_o;
    Vec3 normal;
    Vec3 omega_i;
    double p_value = 0.0;        // luminance of f_s * <L> * |cos|
    double q_sampling = 1.0;     // pdf the sample obeyed when drawn (> 0)
    double bsdf_pdf_at_wi = 0.0;
    bool bsdf_is_delta = false;
};

/// One-sample KL gradient with respect to the raw network outputs.
/// Returns false (and leaves grad zeroed) when the sample must be dropped
/// because an intermediate is not finite or the current densities underflow.
/// A p_value of zero is the valid cheap path: true with a zero gradient.
bool kl_loss_gradient(const TrainingSample &sample, const DecodedGuide &decoded, double b,
                      double loss_blend, Eigen::VectorXd *grad);

/// Scalar whose gradient w.r.t. the raw outputs is kl_loss_gradient; also the
/// quantity logged as the per-iteration mean loss.
double loss_surrogate(const TrainingSample &sample, const DecodedGuide &decoded, double b,
                      double loss_blend);

/// Progressive blend schedule: b = min(1, floor(i/M)/B).
struct BlendSchedule {
    int m = 4;
    int b_steps = 64;
    std::int64_t iteration = 0;

    double coefficient() const {
        double b = static_cast<double>(iteration / m) / b_steps;
        return b < 1.0 ? b : 1.0;
    }
    void advance() { ++iteration; }
};

/// Tile stride update: l <- max(1, l*sqrt(s/S)). A zero collected count
/// clamps to 1 (callers may flag it).
double stride_update(double l, std::uint64_t collected, std::uint64_t capacity);

/// Capacity-capped per-iteration sample store. `offered` counts every append
/// attempt, including ones rejected once the buffer is full; the stride rule
/// uses the offered count.
class SampleBuffer {
public:
    explicit SampleBuffer(std::size_t capacity) : capacity_(capacity) {}

    bool append(const TrainingSample &s) {
        ++offered_;
        if (samples_.size() >= capacity_) return false;
        samples_.push_back(s);
        return true;
    }
    void clear() {
        samples_.clear();
        offered_ = 0;
    }
    std::size_t size() const { return samples_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t offered() const { return offered_; }
    std::span<const TrainingSample> samples() const { return samples_; }

private:
    std::size_t capacity_;
    std::uint64_t offered_ = 0;
    std::vector<TrainingSample> samples_;
};

struct TrainerConfig {
    int n_components = 8;
    int sample_capacity = 1 << 16; // S
    int batch_size = 1 << 12;      // t
    int step_factor = 1;           // nu
    float learning_rate = 0.002f;
    double loss_blend = 0.2;       // e
    std::uint64_t seed = 0;
};

struct TrainStats {
    int steps = 0;
    double mean_loss = 0.0;
    std::uint64_t dropped_samples = 0;
    std::uint64_t skipped_updates = 0;
};

/// Owns the live network parameters and Adam state; runs the per-iteration
/// training loop and publishes immutable snapshots for inference. Training is
/// single-writer; snapshots may be read concurrently.
class Trainer {
public:
    Trainer(const TrainerConfig &config, const Aabb &scene_bounds);

    /// Runs T = nu * ceil(S/t) minibatch steps over the buffer (epochs are
    /// reshuffled without replacement) and publishes a new snapshot.
    /// An empty buffer is a no-op.
    TrainStats train_iteration(std::span<const TrainingSample> buffer, double blend_b);

    NetworkSnapshot snapshot() const { return snapshot_; }
    const NetworkParameters<float> &parameters() const { return params_; }
    NetworkParameters<float> &mutable_parameters() { return params_; }
    const TrainerConfig &config() const { return config_; }
    const Aabb &scene_bounds() const { return bounds_; }
    std::int64_t iterations_run() const { return iterations_; }
    void publish();

private:
    TrainerConfig config_;
    Aabb bounds_;
    NetworkParameters<float> params_;
    AdamState<float> adam_;
    NetworkSnapshot snapshot_;
    std::int64_t iterations_ = 0;
};

/// Single-point inference: encode, forward the snapshot, decode.
GuideDistribution infer_guide(const NetworkParameters<float> &params, const Vec3 &position,
                              const Vec3 &omega_o, const Vec3 &normal, const Aabb &bounds);

} // namespace nasg

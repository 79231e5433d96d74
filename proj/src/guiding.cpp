#include "nasg/guiding.hpp"

#include <cmath>

namespace nasg {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kDensityFloor = 1e-300;

} // namespace

DecodedGuide decode_full(std::span<const float> raw) {
    const int n = static_cast<int>((raw.size() - 1) / 8);
    DecodedGuide d;
    d.n = n;
    d.sig_s0.resize(5 * n);
    d.pair_norm.assign(2 * n, 0.0);
    d.lambda_clamped.assign(n, false);
    d.a_clamped.assign(n, false);
    d.g.mixture.components.resize(n);
    d.g.mixture.weights.resize(n);

    for (int i = 0; i < n; ++i) {
        double trig[5];
        for (int k = 0; k < 5; ++k) {
            double s = sigmoid(raw[5 * i + k]);
            d.sig_s0[5 * i + k] = s;
            trig[k] = s * 2.0 - 1.0;
        }
        // pairwise renormalization of (sin, cos); degenerate pairs fall back
        // to the canonical (0, 1) and are marked with a zero norm
        for (int pair = 0; pair < 2; ++pair) {
            double &s = trig[1 + 2 * pair];
            double &c = trig[2 + 2 * pair];
            double norm = std::sqrt(s * s + c * c);
            if (norm < 1e-6) {
                s = 0.0;
                c = 1.0;
                d.pair_norm[2 * i + pair] = 0.0;
            } else {
                s /= norm;
                c /= norm;
                d.pair_norm[2 * i + pair] = norm;
            }
        }

        NasgComponent &comp = d.g.mixture.components[i];
        frame_from_euler(trig[0], trig[1], trig[2], trig[3], trig[4], &comp.frame);

        double lambda = std::exp(static_cast<double>(raw[5 * n + 2 * i]));
        double a = std::exp(static_cast<double>(raw[5 * n + 2 * i + 1]));
        comp.lambda = std::clamp(lambda, kLambdaMin, kLambdaMax);
        comp.a = std::min(a, kEccentricityMax);
        comp.epsilon = 0.0;
        d.lambda_clamped[i] = comp.lambda != lambda;
        d.a_clamped[i] = comp.a != a;
    }

    // shift-invariant softmax over the weight logits
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
        max_logit = std::max(max_logit, static_cast<double>(raw[7 * n + i]));
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        double w = std::exp(static_cast<double>(raw[7 * n + i]) - max_logit);
        d.g.mixture.weights[i] = w;
        sum += w;
    }
    for (int i = 0; i < n; ++i) d.g.mixture.weights[i] /= sum;

    d.c_sig = sigmoid(raw[8 * n]);
    d.g.c = std::clamp(d.c_sig, kSelectionMin, kSelectionMax);
    return d;
}

GuideDistribution decode(std::span<const float> raw) { return decode_full(raw).g; }

double guided_pdf(const GuideDistribution &g, double b, double bsdf_pdf, const Vec3 &v) {
    double c_eff = b * g.c;
    if (c_eff <= 0.0) return bsdf_pdf;
    return c_eff * mixture_pdf(g.mixture, v) + (1.0 - c_eff) * bsdf_pdf;
}

namespace {

struct BlendEval {
    double q_mix;
    double q_hat;    // current-network blended pdf at omega_i
    double c_eff;
    bool usable;
};

BlendEval eval_blend(const TrainingSample &sample, const DecodedGuide &d, double b) {
    BlendEval e;
    e.q_mix = mixture_pdf(d.g.mixture, sample.omega_i);
    e.c_eff = b * d.g.c;
    e.q_hat = e.c_eff * e.q_mix + (1.0 - e.c_eff) * sample.bsdf_pdf_at_wi;
    e.usable = std::isfinite(e.q_mix) && e.q_mix > kDensityFloor &&
               std::isfinite(e.q_hat) && e.q_hat > kDensityFloor;
    return e;
}

} // namespace

bool kl_loss_gradient(const TrainingSample &sample, const DecodedGuide &d, double b,
                      double loss_blend, Eigen::VectorXd *grad) {
    const int n = d.n;
    grad->setZero(raw_output_dim(n));
    if (sample.p_value == 0.0) return true;

    BlendEval bl = eval_blend(sample, d, b);
    if (!bl.usable || !(sample.q_sampling > 0.0)) return false;

    const double w = sample.p_value / sample.q_sampling;
    const double e = loss_blend;
    // d loss / d log(q_mix) for the mixture parameters: both KL terms reach
    // the mixture, the blended one scaled by its share of q^
    const double mix_scale = e * (bl.c_eff * bl.q_mix / bl.q_hat) + (1.0 - e);

    const NasgMixture &mix = d.g.mixture;
    for (int i = 0; i < n; ++i) {
        ParamGradient pg = nasg_grad_logpdf(mix, i, sample.omega_i);
        const double scale = -w * mix_scale;

        // orientation logits: sigmoid chain, pair renormalization for the
        // (sin, cos) pairs; degenerate pairs contribute nothing
        double dtrig[5] = {pg.d_cos_theta, pg.d_sin_phi, pg.d_cos_phi, pg.d_sin_tau,
                           pg.d_cos_tau};
        for (int pair = 0; pair < 2; ++pair) {
            double norm = d.pair_norm[2 * i + pair];
            double inv = norm > 0.0 ? 1.0 / norm : 0.0;
            dtrig[1 + 2 * pair] *= inv;
            dtrig[2 + 2 * pair] *= inv;
        }
        for (int k = 0; k < 5; ++k) {
            double s = d.sig_s0[5 * i + k];
            (*grad)[5 * i + k] = scale * dtrig[k] * 2.0 * s * (1.0 - s);
        }

        // exponential decode of lambda and a; clamped values stop the flow
        (*grad)[5 * n + 2 * i] =
            d.lambda_clamped[i] ? 0.0 : scale * pg.d_lambda * mix.components[i].lambda;
        (*grad)[5 * n + 2 * i + 1] =
            d.a_clamped[i] ? 0.0 : scale * pg.d_a * mix.components[i].a;

        // softmax weight logits: d log(q_mix) / d logit_j = r_j - A_j
        double pdf_i = nasg_pdf(mix.components[i], sample.omega_i);
        double r_i = mix.weights[i] * pdf_i / bl.q_mix;
        (*grad)[7 * n + i] = scale * (r_i - mix.weights[i]);
    }

    // selection probability: only the blended KL term sees c
    double c_clamped = d.g.c != d.c_sig ? 0.0 : 1.0;
    double dsig_c = d.c_sig * (1.0 - d.c_sig) * c_clamped;
    (*grad)[8 * n] = -w * e * b * (bl.q_mix - sample.bsdf_pdf_at_wi) / bl.q_hat * dsig_c;

    if (!grad->allFinite()) {
        grad->setZero(raw_output_dim(n));
        return false;
    }
    return true;
}

double loss_surrogate(const TrainingSample &sample, const DecodedGuide &d, double b,
                      double loss_blend) {
    if (sample.p_value == 0.0) return 0.0;
    BlendEval bl = eval_blend(sample, d, b);
    if (!bl.usable || !(sample.q_sampling > 0.0))
        return std::numeric_limits<double>::quiet_NaN();
    double w = sample.p_value / sample.q_sampling;
    return -w * (loss_blend * std::log(bl.q_hat) +
                 (1.0 - loss_blend) * std::log(bl.q_mix));
}

double stride_update(double l, std::uint64_t collected, std::uint64_t capacity) {
    double next = l * std::sqrt(static_cast<double>(collected) /
                                static_cast<double>(capacity));
    return std::max(1.0, next);
}

Trainer::Trainer(const TrainerConfig &config, const Aabb &scene_bounds)
    : config_(config), bounds_(scene_bounds),
      params_(init_network<float>(kEncodedInputSize, raw_output_dim(config.n_components),
                                  config.seed)),
      adam_(AdamState<float>::make(params_, config.learning_rate)) {
    publish();
}

void Trainer::publish() {
    snapshot_ = std::make_shared<const NetworkParameters<float>>(params_);
}

TrainStats Trainer::train_iteration(std::span<const TrainingSample> buffer, double blend_b) {
    TrainStats stats;
    if (buffer.empty()) {
        ++iterations_;
        publish();
        return stats;
    }

    const int t = config_.batch_size;
    const int steps = config_.step_factor *
                      ((config_.sample_capacity + t - 1) / t);

    // encode every sample once; rows are reused across epochs
    Matrix<float> encoded(buffer.size(), kEncodedInputSize);
    for (std::size_t s = 0; s < buffer.size(); ++s) {
        EncodedInput enc = encode_inputs(buffer[s].position, buffer[s].omega_o,
                                         buffer[s].normal, bounds_);
        for (int k = 0; k < kEncodedInputSize; ++k) encoded(s, k) = enc[k];
    }

    Pcg32 shuffle_rng(hash_combine(config_.seed, 0x7261696e) + iterations_, 5);
    std::vector<std::uint32_t> order(buffer.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    auto reshuffle = [&] {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = shuffle_rng.next_below(static_cast<std::uint32_t>(i));
            std::swap(order[i - 1], order[j]);
        }
    };
    reshuffle();
    std::size_t cursor = 0;

    double loss_sum = 0.0;
    std::uint64_t loss_count = 0;

    Matrix<float> batch;
    Matrix<float> out_grads;
    ForwardCache<float> cache;
    Eigen::VectorXd sample_grad;

    for (int step = 0; step < steps; ++step) {
        if (cursor >= order.size()) {
            reshuffle();
            cursor = 0;
        }
        std::size_t count = std::min<std::size_t>(t, order.size() - cursor);
        batch.resize(count, kEncodedInputSize);
        for (std::size_t r = 0; r < count; ++r)
            batch.row(r) = encoded.row(order[cursor + r]);

        forward(params_, batch, &cache);
        out_grads.setZero(count, params_.output_dim());

        std::vector<float> raw_row(params_.output_dim());
        for (std::size_t r = 0; r < count; ++r) {
            if (!cache.out.row(r).allFinite()) {
                ++stats.dropped_samples;
                continue;
            }
            for (int k = 0; k < params_.output_dim(); ++k) raw_row[k] = cache.out(r, k);
            DecodedGuide d = decode_full(raw_row);
            const TrainingSample &smp = buffer[order[cursor + r]];
            if (!kl_loss_gradient(smp, d, blend_b, config_.loss_blend, &sample_grad)) {
                ++stats.dropped_samples;
                continue;
            }
            double inv = 1.0 / static_cast<double>(count);
            for (int k = 0; k < params_.output_dim(); ++k)
                out_grads(r, k) = static_cast<float>(sample_grad[k] * inv);
            double l = loss_surrogate(smp, d, blend_b, config_.loss_blend);
            if (std::isfinite(l)) {
                loss_sum += l;
                ++loss_count;
            }
        }
        cursor += count;

        NetworkParameters<float> grads = backward(params_, cache, out_grads);
        if (!adam_step(adam_, params_, grads)) ++stats.skipped_updates;
        ++stats.steps;
    }

    stats.mean_loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    ++iterations_;
    publish();
    return stats;
}

GuideDistribution infer_guide(const NetworkParameters<float> &params, const Vec3 &position,
                              const Vec3 &omega_o, const Vec3 &normal, const Aabb &bounds) {
    EncodedInput enc = encode_inputs(position, omega_o, normal, bounds);
    Matrix<float> row(1, kEncodedInputSize);
    for (int k = 0; k < kEncodedInputSize; ++k) row(0, k) = enc[k];
    Matrix<float> out = forward(params, row);
    std::vector<float> raw(out.cols());
    for (int k = 0; k < out.cols(); ++k) raw[k] = out(0, k);
    return decode(raw);
}

} // namespace nasg

#pragma once

#include <array>
#include <vector>

#include "nasg/math.hpp"

namespace nasg {

// Numerical guards for the anisotropic lobe parameters. The sharpness guard
// keeps exp(2*lambda) terms representable in log space; the lower bound avoids
// the degenerate uniform limit.
constexpr double kLambdaMin = 1e-3;
constexpr double kLambdaMax = 3e3;
constexpr double kEccentricityMax = 3e3;

/// Right-handed orthonormal frame. y_axis == cross(z_axis, x_axis).
struct Frame {
    Vec3 x_axis{1.0, 0.0, 0.0};
    Vec3 y_axis{0.0, 1.0, 0.0};
    Vec3 z_axis{0.0, 0.0, 1.0};
};

/// Builds the frame whose lobe axis (z) and tangent axis (x) are given by the
/// Euler-angle trigonometric values. The (sin,cos) pairs are renormalized
/// here; a pair with norm below 1e-6 falls back to the canonical (0, 1).
/// Returns true when no degenerate fallback was needed.
bool frame_from_euler(double cos_theta, double sin_phi, double cos_phi,
                      double sin_tau, double cos_tau, Frame *out);

/// One anisotropic spherical lobe: sharpness lambda, eccentricity a along the
/// tangent axis, and the continuity parameter epsilon (0 by default).
struct NasgComponent {
    Frame frame;
    double lambda = 1.0;
    double a = 0.0;
    double epsilon = 0.0;
};

struct NasgMixture {
    std::vector<NasgComponent> components;
    std::vector<double> weights; // nonnegative, sum to 1

    bool valid(double tol = 1e-6) const;
};

/// Isotropic spherical Gaussian lobe; its normalized form is the
/// von Mises-Fisher distribution on S^2.
struct VmfComponent {
    Vec3 mu{0.0, 0.0, 1.0};
    double lambda = 1.0;
};

struct VmfMixture {
    std::vector<VmfComponent> components;
    std::vector<double> weights;
};

/// Gradient of a log mixture density with respect to the seven decoded
/// scalars of one component (orientation trig values, sharpness,
/// eccentricity). Orientation entries differentiate through the pair
/// renormalization inside frame_from_euler.
struct ParamGradient {
    double d_cos_theta = 0.0;
    double d_sin_phi = 0.0;
    double d_cos_phi = 0.0;
    double d_sin_tau = 0.0;
    double d_cos_tau = 0.0;
    double d_lambda = 0.0;
    double d_a = 0.0;
};

/// log of the unnormalized density G(v). Exactly 0 at v == z_axis and -inf
/// at v == -z_axis (measure-zero sentinel branch).
double nasg_log_eval(const NasgComponent &c, const Vec3 &v);

/// Closed-form normalizer K = integral of G over the sphere.
double nasg_norm_const(const NasgComponent &c);

/// Normalized density G(v)/K.
double nasg_pdf(const NasgComponent &c, const Vec3 &v);

/// Mixture density sum_i A_i G_i(v)/K_i.
double mixture_pdf(const NasgMixture &m, const Vec3 &v);

/// Draws a direction distributed as G/K from three uniform variates.
/// (xi0, xi1) map linearly onto the (s, rho) rectangle; xi2 picks the
/// eastern or western hemisphere chart.
Vec3 nasg_sample(const NasgComponent &c, double xi0, double xi1, double xi2);

/// Categorical component selection by inverse CDF over the weights, then a
/// component draw. The returned pdf is the full mixture density.
struct DirectionSample {
    Vec3 direction;
    double pdf = 0.0;
};
DirectionSample mixture_sample(const NasgMixture &m, double xi_select, double xi0,
                               double xi1, double xi2);

/// Analytic gradient of log(mixture_pdf(m, v)) with respect to the seven
/// decoded scalars of component `index`, including the normalizer's
/// dependence on lambda and a. Returns a zero gradient when v lies within
/// 1e-6 of either pole of the component or when any intermediate is
/// non-finite.
ParamGradient nasg_grad_logpdf(const NasgMixture &m, std::size_t index, const Vec3 &v);

/// Gradient of log(vmf mixture pdf) w.r.t. one component's (mu, lambda).
/// The mu entries differentiate through vector renormalization.
struct VmfParamGradient {
    Vec3 d_mu;
    double d_lambda = 0.0;
};

double vmf_log_eval(const VmfComponent &c, const Vec3 &v);
double vmf_norm_const(const VmfComponent &c);
double vmf_pdf(const VmfComponent &c, const Vec3 &v);
double vmf_mixture_pdf(const VmfMixture &m, const Vec3 &v);
Vec3 vmf_sample(const VmfComponent &c, double xi0, double xi1);
DirectionSample vmf_mixture_sample(const VmfMixture &m, double xi_select, double xi0,
                                   double xi1);
VmfParamGradient vmf_grad_logpdf(const VmfMixture &m, std::size_t index, const Vec3 &v);

/// Completes (z, x) into a right-handed orthonormal frame around z when only
/// the lobe axis matters (isotropic lobes, sampling charts).
Frame frame_around(const Vec3 &z);

} // namespace nasg

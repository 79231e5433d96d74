#include "nasg/sphdist.hpp"

#include <cmath>

namespace nasg {

namespace {

constexpr double kUMin = 1e-12;
constexpr double kPairNormMin = 1e-6;
// Directions this close to a lobe pole get a zero parameter gradient; the
// chart derivative dx^2/(1-dz^2) is no longer well conditioned there.
constexpr double kPoleGuard = 1e-6;

bool renormalize_pair(double &s, double &c) {
    double n = std::sqrt(s * s + c * c);
    if (n < kPairNormMin) {
        s = 0.0;
        c = 1.0;
        return false;
    }
    s /= n;
    c /= n;
    return true;
}

struct EulerTrig {
    double cos_theta, sin_phi, cos_phi, sin_tau, cos_tau;
};

// Recovers the Euler trig values that frame_from_euler would have been given.
// At the gimbal poles (sin_theta == 0) phi is folded into tau.
EulerTrig euler_from_frame(const Frame &f) {
    EulerTrig e;
    e.cos_theta = std::clamp(f.z_axis.z, -1.0, 1.0);
    double st = std::sqrt(std::max(0.0, 1.0 - e.cos_theta * e.cos_theta));
    if (st > 1e-9) {
        e.cos_phi = f.z_axis.x / st;
        e.sin_phi = f.z_axis.y / st;
        renormalize_pair(e.sin_phi, e.cos_phi);
        e.cos_tau = -f.x_axis.z / st;
        e.sin_tau = f.x_axis.y * e.cos_phi - f.x_axis.x * e.sin_phi;
        renormalize_pair(e.sin_tau, e.cos_tau);
    } else {
        e.sin_phi = 0.0;
        e.cos_phi = 1.0;
        if (e.cos_theta > 0.0) {
            e.cos_tau = f.x_axis.x;
            e.sin_tau = f.x_axis.y;
        } else {
            e.cos_tau = -f.x_axis.x;
            e.sin_tau = f.x_axis.y;
        }
        renormalize_pair(e.sin_tau, e.cos_tau);
    }
    return e;
}

// Core NASG quantities shared by eval and gradients.
struct LobeEval {
    double dz, dx;
    double u;      // (dz + 1) / 2, clamped away from zero
    double log_u;
    double t2;     // dx^2 / (1 - dz^2), clamped to [0, 1]
    double denom;  // 1 - dz^2
    double beta;   // a * t2
    double m;      // 1 + eps + beta
    double u_pow_m;
};

LobeEval eval_lobe(const NasgComponent &c, const Vec3 &v) {
    LobeEval e;
    e.dz = dot(v, c.frame.z_axis);
    e.dx = dot(v, c.frame.x_axis);
    e.u = std::clamp((e.dz + 1.0) * 0.5, kUMin, 1.0);
    e.log_u = std::log(e.u);
    e.denom = std::max(1.0 - e.dz * e.dz, 1e-12);
    e.t2 = std::clamp(e.dx * e.dx / e.denom, 0.0, 1.0);
    e.beta = c.a * e.t2;
    e.m = 1.0 + c.epsilon + e.beta;
    e.u_pow_m = std::pow(e.u, e.m);
    return e;
}

} // namespace

bool frame_from_euler(double cos_theta, double sin_phi, double cos_phi,
                      double sin_tau, double cos_tau, Frame *out) {
    bool ok = true;
    ok &= renormalize_pair(sin_phi, cos_phi);
    ok &= renormalize_pair(sin_tau, cos_tau);
    double ct = std::clamp(cos_theta, -1.0, 1.0);
    double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));

    out->z_axis = {cos_phi * st, sin_phi * st, ct};
    out->x_axis = {ct * cos_phi * cos_tau - sin_phi * sin_tau,
                   ct * sin_phi * cos_tau + cos_phi * sin_tau,
                   -st * cos_tau};
    out->y_axis = cross(out->z_axis, out->x_axis);
    return ok;
}

Frame frame_around(const Vec3 &z) {
    Frame f;
    f.z_axis = normalize(z);
    Vec3 helper = std::fabs(f.z_axis.x) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
    f.x_axis = normalize(cross(helper, f.z_axis));
    f.y_axis = cross(f.z_axis, f.x_axis);
    return f;
}

bool NasgMixture::valid(double tol) const {
    if (components.empty() || components.size() != weights.size()) return false;
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) return false;
        sum += w;
    }
    if (std::fabs(sum - 1.0) > tol) return false;
    for (const NasgComponent &c : components) {
        if (!(c.lambda >= kLambdaMin && c.lambda <= kLambdaMax)) return false;
        if (!(c.a >= 0.0 && c.a <= kEccentricityMax)) return false;
        if (!(c.epsilon >= 0.0)) return false;
        const Frame &f = c.frame;
        if (std::fabs(dot(f.x_axis, f.z_axis)) > tol) return false;
        if (std::fabs(dot(f.y_axis, f.z_axis)) > tol) return false;
        if (std::fabs(dot(f.x_axis, f.y_axis)) > tol) return false;
        if (length(f.y_axis - cross(f.z_axis, f.x_axis)) > tol) return false;
    }
    return true;
}

double nasg_log_eval(const NasgComponent &c, const Vec3 &v) {
    double dz = dot(v, c.frame.z_axis);
    if (dz >= 1.0 - 1e-12) return 0.0;
    if (dz <= -1.0 + 1e-12)
        return -std::numeric_limits<double>::infinity();
    LobeEval e = eval_lobe(c, v);
    return 2.0 * c.lambda * (e.u_pow_m - 1.0) + (c.epsilon + e.beta) * e.log_u;
}

double nasg_norm_const(const NasgComponent &c) {
    double one_eps = 1.0 + c.epsilon;
    return kTwoPi * (-std::expm1(-2.0 * c.lambda)) /
           (c.lambda * std::sqrt(one_eps * (one_eps + c.a)));
}

double nasg_pdf(const NasgComponent &c, const Vec3 &v) {
    return std::exp(nasg_log_eval(c, v)) / nasg_norm_const(c);
}

double mixture_pdf(const NasgMixture &m, const Vec3 &v) {
    double pdf = 0.0;
    for (std::size_t i = 0; i < m.components.size(); ++i)
        pdf += m.weights[i] * nasg_pdf(m.components[i], v);
    return pdf;
}

Vec3 nasg_sample(const NasgComponent &c, double xi0, double xi1, double xi2) {
    double emin = std::exp(-2.0 * c.lambda);
    double s = emin + xi0 * (1.0 - emin);
    double rho = (xi1 - 0.5) * kPi;

    double one_eps = 1.0 + c.epsilon;
    double cos_rho = std::cos(rho);
    double exponent = (one_eps + c.a - c.a * cos_rho * cos_rho) /
                      (one_eps * (one_eps + c.a));
    double base = std::clamp(std::log(s) / (2.0 * c.lambda) + 1.0, 0.0, 1.0);
    double cos_theta = std::clamp(2.0 * std::pow(base, exponent) - 1.0, -1.0, 1.0);
    double sin_theta = std::sqrt(1.0 - cos_theta * cos_theta);

    // Quadrant-correct inversion of tan(phi) = sqrt((1+e+a)/(1+e)) tan(rho):
    // phi stays in rho's quadrant.
    double stretch = std::sqrt((one_eps + c.a) / one_eps);
    double phi = std::atan2(stretch * std::sin(rho), cos_rho);
    if (xi2 <= 0.5) phi += kPi; // western chart

    double cp = std::cos(phi), sp = std::sin(phi);
    return c.frame.x_axis * (sin_theta * cp) + c.frame.y_axis * (sin_theta * sp) +
           c.frame.z_axis * cos_theta;
}

DirectionSample mixture_sample(const NasgMixture &m, double xi_select, double xi0,
                               double xi1, double xi2) {
    std::size_t pick = m.components.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        acc += m.weights[i];
        if (xi_select < acc) {
            pick = i;
            break;
        }
    }
    DirectionSample out;
    out.direction = nasg_sample(m.components[pick], xi0, xi1, xi2);
    out.pdf = mixture_pdf(m, out.direction);
    return out;
}

ParamGradient nasg_grad_logpdf(const NasgMixture &m, std::size_t index, const Vec3 &v) {
    ParamGradient g;
    const NasgComponent &c = m.components[index];

    double dz = dot(v, c.frame.z_axis);
    if (std::fabs(dz) > 1.0 - kPoleGuard) return g;

    double q = mixture_pdf(m, v);
    if (!(q > 0.0) || !std::isfinite(q)) return g;

    LobeEval e = eval_lobe(c, v);
    double log_g = 2.0 * c.lambda * (e.u_pow_m - 1.0) + (c.epsilon + e.beta) * e.log_u;
    double K = nasg_norm_const(c);
    // posterior responsibility of this component at v
    double r = m.weights[index] * std::exp(log_g) / K / q;

    double expm2l = std::exp(-2.0 * c.lambda);
    double dlogK_dlambda = 2.0 * expm2l / (1.0 - expm2l) - 1.0 / c.lambda;
    double dlogK_da = -0.5 / (1.0 + c.epsilon + c.a);

    double dlogG_dbeta = (2.0 * c.lambda * e.u_pow_m + 1.0) * e.log_u;
    double dlogG_du = 2.0 * c.lambda * e.m * std::pow(e.u, e.m - 1.0) +
                      (c.epsilon + e.beta) / e.u;
    double dt2_ddz = 2.0 * e.dz * e.t2 / e.denom;
    double dlogG_ddz = 0.5 * dlogG_du + dlogG_dbeta * c.a * dt2_ddz;
    double dlogG_ddx = dlogG_dbeta * c.a * 2.0 * e.dx / e.denom;

    g.d_lambda = r * (2.0 * (e.u_pow_m - 1.0) - dlogK_dlambda);
    g.d_a = r * (e.t2 * dlogG_dbeta - dlogK_da);

    EulerTrig t = euler_from_frame(c.frame);
    double ct = t.cos_theta;
    double st = std::sqrt(std::max(1e-18, 1.0 - ct * ct));
    double dst_dct = -ct / st;

    // dz/dz-axis and dz/dx-axis contracted with the axis derivatives
    Vec3 dz_dct{t.cos_phi * dst_dct, t.sin_phi * dst_dct, 1.0};
    Vec3 dz_dsp{0.0, st, 0.0};
    Vec3 dz_dcp{st, 0.0, 0.0};

    Vec3 dx_dct{t.cos_phi * t.cos_tau, t.sin_phi * t.cos_tau, -dst_dct * t.cos_tau};
    Vec3 dx_dsp{-t.sin_tau, ct * t.cos_tau, 0.0};
    Vec3 dx_dcp{ct * t.cos_tau, t.sin_tau, 0.0};
    Vec3 dx_dst{-t.sin_phi, t.cos_phi, 0.0};
    Vec3 dx_dctau{ct * t.cos_phi, ct * t.sin_phi, -st};

    double g_ct = dlogG_ddz * dot(v, dz_dct) + dlogG_ddx * dot(v, dx_dct);
    double g_sp = dlogG_ddz * dot(v, dz_dsp) + dlogG_ddx * dot(v, dx_dsp);
    double g_cp = dlogG_ddz * dot(v, dz_dcp) + dlogG_ddx * dot(v, dx_dcp);
    double g_stau = dlogG_ddx * dot(v, dx_dst);
    double g_ctau = dlogG_ddx * dot(v, dx_dctau);

    // project pair gradients through the unit-norm renormalization of
    // (sin, cos) pairs: at n == 1 the Jacobian is I - p p^T
    auto project_pair = [](double s, double c2, double &gs, double &gc) {
        double ps = c2 * (c2 * gs - s * gc);
        double pc = s * (s * gc - c2 * gs);
        gs = ps;
        gc = pc;
    };
    project_pair(t.sin_phi, t.cos_phi, g_sp, g_cp);
    project_pair(t.sin_tau, t.cos_tau, g_stau, g_ctau);

    g.d_cos_theta = r * g_ct;
    g.d_sin_phi = r * g_sp;
    g.d_cos_phi = r * g_cp;
    g.d_sin_tau = r * g_stau;
    g.d_cos_tau = r * g_ctau;

    for (double val : {g.d_cos_theta, g.d_sin_phi, g.d_cos_phi, g.d_sin_tau,
                       g.d_cos_tau, g.d_lambda, g.d_a}) {
        if (!std::isfinite(val)) return ParamGradient{};
    }
    return g;
}

double vmf_log_eval(const VmfComponent &c, const Vec3 &v) {
    return c.lambda * (dot(c.mu, v) - 1.0);
}

double vmf_norm_const(const VmfComponent &c) {
    return kTwoPi * (-std::expm1(-2.0 * c.lambda)) / c.lambda;
}

double vmf_pdf(const VmfComponent &c, const Vec3 &v) {
    return std::exp(vmf_log_eval(c, v)) / vmf_norm_const(c);
}

double vmf_mixture_pdf(const VmfMixture &m, const Vec3 &v) {
    double pdf = 0.0;
    for (std::size_t i = 0; i < m.components.size(); ++i)
        pdf += m.weights[i] * vmf_pdf(m.components[i], v);
    return pdf;
}

Vec3 vmf_sample(const VmfComponent &c, double xi0, double xi1) {
    // invert the marginal CDF of cos(theta) around mu
    double cos_theta =
        std::clamp(1.0 + std::log1p(-xi0 * (-std::expm1(-2.0 * c.lambda))) / c.lambda,
                   -1.0, 1.0);
    double sin_theta = std::sqrt(1.0 - cos_theta * cos_theta);
    double phi = kTwoPi * xi1;
    Frame f = frame_around(c.mu);
    return f.x_axis * (sin_theta * std::cos(phi)) +
           f.y_axis * (sin_theta * std::sin(phi)) + f.z_axis * cos_theta;
}

DirectionSample vmf_mixture_sample(const VmfMixture &m, double xi_select, double xi0,
                                   double xi1) {
    std::size_t pick = m.components.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        acc += m.weights[i];
        if (xi_select < acc) {
            pick = i;
            break;
        }
    }
    DirectionSample out;
    out.direction = vmf_sample(m.components[pick], xi0, xi1);
    out.pdf = vmf_mixture_pdf(m, out.direction);
    return out;
}

VmfParamGradient vmf_grad_logpdf(const VmfMixture &m, std::size_t index, const Vec3 &v) {
    VmfParamGradient g;
    double q = vmf_mixture_pdf(m, v);
    if (!(q > 0.0) || !std::isfinite(q)) return g;
    const VmfComponent &c = m.components[index];
    double r = m.weights[index] * vmf_pdf(c, v) / q;

    double expm2l = std::exp(-2.0 * c.lambda);
    double dlogK_dlambda = 2.0 * expm2l / (1.0 - expm2l) - 1.0 / c.lambda;
    g.d_lambda = r * ((dot(c.mu, v) - 1.0) - dlogK_dlambda);

    // lambda * v projected onto the tangent space of the unit axis
    Vec3 grad_mu = v * c.lambda;
    Vec3 tangential = grad_mu - c.mu * dot(grad_mu, c.mu);
    g.d_mu = tangential * r;
    return g;
}

} // namespace nasg

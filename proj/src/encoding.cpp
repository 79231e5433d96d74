#include "nasg/encoding.hpp"

#include <cmath>

namespace nasg {

namespace {
std::atomic<std::uint64_t> g_clamp_count{0};
}

void one_blob(double x, int k, float *out) {
    double sigma = 1.0 / k;
    double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    for (int i = 0; i < k; ++i) {
        double center = (i + 0.5) / k;
        double d = x - center;
        out[i] = static_cast<float>(std::exp(-d * d * inv_two_sigma2));
    }
}

EncodedInput encode_inputs(const Vec3 &position, const Vec3 &omega_o, const Vec3 &normal,
                           const Aabb &scene_bounds) {
    EncodedInput enc;
    Vec3 ext = scene_bounds.extent();
    double coords[3] = {position.x, position.y, position.z};
    double mins[3] = {scene_bounds.min.x, scene_bounds.min.y, scene_bounds.min.z};
    double exts[3] = {ext.x, ext.y, ext.z};

    for (int axis = 0; axis < 3; ++axis) {
        double t = exts[axis] > 0.0 ? (coords[axis] - mins[axis]) / exts[axis] : 0.5;
        if (t < 0.0 || t > 1.0) {
            g_clamp_count.fetch_add(1, std::memory_order_relaxed);
            t = clamp01(t);
        }
        one_blob(t, kOneBlobBins, enc.data() + axis * kOneBlobBins);
    }

    enc[57] = static_cast<float>(omega_o.x);
    enc[58] = static_cast<float>(omega_o.y);
    enc[59] = static_cast<float>(omega_o.z);
    enc[60] = static_cast<float>(normal.x);
    enc[61] = static_cast<float>(normal.y);
    enc[62] = static_cast<float>(normal.z);
    enc[63] = 1.0f;
    return enc;
}

std::uint64_t encode_clamp_count() { return g_clamp_count.load(std::memory_order_relaxed); }
void reset_encode_clamp_count() { g_clamp_count.store(0, std::memory_order_relaxed); }

} // namespace nasg

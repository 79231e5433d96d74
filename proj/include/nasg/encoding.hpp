#pragma once

#include <array>
#include <atomic>
#include <cstdint>

#include "nasg/math.hpp"

namespace nasg {

constexpr int kOneBlobBins = 19;           // per position coordinate
constexpr int kEncodedInputSize = 64;      // 3*19 + 3 + 3, padded to 64

/// Network feature vector. Layout: entries 0..56 one-blob(position),
/// 57..59 outgoing direction, 60..62 surface normal, 63 constant 1
/// (the pad channel doubles as a bias input for the bias-free MLP).
using EncodedInput = std::array<float, kEncodedInputSize>;

/// Soft-binning encoding of a scalar in [0,1]: entry i is a Gaussian bump
/// exp(-(x - center_i)^2 / (2 sigma^2)) with sigma = 1/k and centers at
/// (i + 0.5)/k. Non-periodic; peak value 1 at a bin center.
void one_blob(double x, int k, float *out);

/// Encodes one shading event. The position is normalized into [0,1]^3 by the
/// scene bounds; coordinates outside are clamped (counted, not fatal).
EncodedInput encode_inputs(const Vec3 &position, const Vec3 &omega_o, const Vec3 &normal,
                           const Aabb &scene_bounds);

/// Number of position coordinates clamped because they fell outside the
/// declared scene bounds.
std::uint64_t encode_clamp_count();
void reset_encode_clamp_count();

} // namespace nasg

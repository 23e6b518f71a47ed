#pragma once

#include <cstdint>

#include "restorekit/image.hpp"

namespace restorekit {

/// Procedural stand-in for a natural photograph: a smooth illumination
/// gradient, a few soft-edged shapes and a Fourier-synthesized texture with
/// 1/f^2 power. Values stay inside [0.05, 0.95].
ImageTensor natural_test_image(int height, int width, int channels, std::uint64_t seed);

/// Small frontal face-like RGB image (background, hair, face oval, eyes,
/// brows, nose shading, mouth) with seed-dependent geometry and colours.
ImageTensor face_like_image(int size, std::uint64_t seed);

}  // namespace restorekit

#pragma once

#include "frontal/tensor.hpp"

#include <string>

namespace frontal {

// Binary PPM (P6, 3 channels) / PGM (P5, 1 channel) image I/O, maxval 255.
//
// Pixel values map linearly between bytes and the [-1, 1] range used
// everywhere else in the library: value = byte / 255 * 2 - 1 on read,
// byte = round((value + 1) / 2 * 255) clamped to [0, 255] on write.
// The channel count of the returned tensor follows the file magic.

Tensor read_image(const std::string& path);

// channels must be 1 (writes P5) or 3 (writes P6).
void write_image(const std::string& path, const Tensor& image);

}  // namespace frontal

#pragma once

#include <filesystem>
#include <stdexcept>

#include "dint/tensor.hpp"

namespace dint {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decodes an 8- or 16-bit grayscale/RGB(A) PNG to a 1 x C x H x W tensor
/// in [0, 1] (value / bit-depth maximum, no gamma handling). Gray images
/// give C = 1, colour images C = 3; alpha is dropped.
Tensor read_png(const std::filesystem::path& path);

/// Like read_png but always returns 3 channels (gray is replicated).
Tensor read_png_rgb(const std::filesystem::path& path);

/// Writes a 1 x {1,3} x H x W tensor as a PNG; values are clipped to [0, 1]
/// and rounded to the nearest code of the chosen bit depth (8 or 16).
void write_png(const std::filesystem::path& path, const Tensor& image, int bit_depth = 16);

}  // namespace dint

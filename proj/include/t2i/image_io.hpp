#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t2i/tensor.hpp"

namespace t2i {

struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

// Minimal 8-bit RGB PNG writer/reader. The writer emits uncompressed
// (stored) deflate blocks, which keeps output bytes a pure function of the
// pixels; the reader handles exactly that subset.
void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);
std::vector<std::uint8_t> encode_png(const ImageU8& img);

// [3 x H x W] tensor in [-1, 1] <-> 8-bit image.
ImageU8 tensor_to_image(const Tensor& chw);
Tensor image_to_tensor(const ImageU8& img);

// Lays tiles out horizontally on a shared canvas (nearest upscale to the
// tallest tile), with a 2-pixel gutter. Used for sample grids.
ImageU8 tile_row(const std::vector<ImageU8>& tiles);

}  // namespace t2i

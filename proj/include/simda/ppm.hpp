#pragma once

// Binary PPM (P6, maxval 255) frame I/O. One file per frame; values are
// clamped to [0,1] and quantized on write, mapped back as byte/255 on read.

#include <string>

#include "simda/tensor.hpp"

namespace simda {

// frame: [3,H,W] in [0,1]
void write_ppm(const std::string& path, const Tensor& frame);

// Returns [3,H,W] in [0,1].
Tensor read_ppm(const std::string& path);

} // namespace simda

#pragma once

#include <string>

#include "director/tensor.hpp"

namespace director {

// Binary PPM (P6). Values are clamped to [0,1] and quantized to 8 bits.
void write_ppm(const std::string& path, const Tensor& image);  // [H,W,3]
Tensor read_ppm(const std::string& path);

}  // namespace director

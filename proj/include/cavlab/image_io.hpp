#pragma once
#include <string>

#include "cavlab/tensor.hpp"

namespace cavlab {

// raw little-endian float32 tensor with a 16-byte header (magic, h, w, c)
void save_tensor(const std::string& path, const TensorF& t);
TensorF load_tensor(const std::string& path);

// 8-bit RGB PNG via zlib; values clamped to [0, 1]
void write_png(const std::string& path, const TensorF& img);

} // namespace cavlab

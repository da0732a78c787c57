#pragma once

#include <string>

#include "avseg/tensor.hpp"

namespace avseg {

// Raw tensor file: magic "SAVT" | u32-LE header length | UTF-8 JSON header
// {"dtype":"f32","shape":[...]} | row-major little-endian f32 payload.
// Round-trips bit-exactly.

void write_raw_tensor(const std::string& path, const Tensor<float>& t);
Tensor<float> read_raw_tensor(const std::string& path);

}  // namespace avseg

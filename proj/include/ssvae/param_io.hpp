#pragma once

#include <filesystem>
#include <string>

#include "ssvae/nets.hpp"

namespace ssvae {

// Binary parameter container, all integers and floats little-endian:
//
//   char[8]  magic "SSVAEPRM"
//   u32      format version (1)
//   u64      input_dim
//   u64      number of widths W, then W x u64 widths
//   u8       activation (0 leaky_relu, 1 relu)
//   f64      leaky slope
//   u8       use_bias
//   u8       likelihood (0 gaussian, 1 bernoulli)
//   u64      tensor count T, then per tensor:
//            u64 rank R, R x u64 dims, prod(dims) x f64 values
//
// Tensors appear in VaeParams::parameters() order. A JSON sidecar at
// `<path>.json` repeats the spec in readable form.
void save_params(const VaeParams& params, const std::filesystem::path& path);
VaeParams load_params(const std::filesystem::path& path);

std::string spec_json(const VaeSpec& spec);

}  // namespace ssvae

#pragma once

#include <iosfwd>
#include <string>

#include "tsc/nn/tape.hpp"

namespace tsc::nn {

// Archive layout, little-endian:
//   "TSCK" | u32 version (1) | u64 tensor count
//   per tensor: u32 name length | name bytes | u64 rows | u64 cols | rows*cols f64, row-major
void save_checkpoint(std::ostream& out, const ParamStore& params);
void save_checkpoint(const std::string& path, const ParamStore& params);

/// Loads values into an existing store; names and shapes must match exactly.
void load_checkpoint(std::istream& in, ParamStore& params);
void load_checkpoint(const std::string& path, ParamStore& params);

}  // namespace tsc::nn

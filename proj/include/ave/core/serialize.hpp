#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ave/core/nn.hpp"
#include "ave/core/tensor.hpp"

namespace ave::io {

void write_u64(std::ostream& os, std::uint64_t v);
std::uint64_t read_u64(std::istream& is);
void write_f64(std::ostream& os, double v);
double read_f64(std::istream& is);
void write_string(std::ostream& os, const std::string& s);
std::string read_string(std::istream& is);
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

/// Named parameter block; load checks names and shapes one by one.
void write_params(std::ostream& os, const nn::ParamList& params);
void read_params(std::istream& is, const nn::ParamList& params);

/// FNV-1a over raw bytes, used for config and parameter fingerprints.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fingerprint(const nn::ParamList& params);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

} // namespace ave::io

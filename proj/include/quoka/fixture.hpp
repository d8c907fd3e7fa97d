#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "quoka/tensor.hpp"

namespace quoka {

// Binary tensor fixtures ("QTNS" v1):
//   "QTNS" | u8 version=1 | u8 rank | rank x u32 LE dims | prod(dims) x f32 LE
inline constexpr std::uint8_t kFixtureVersion = 1;

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// Git-style blob hash (sha1 of "blob <len>\0" + bytes), lowercase hex.
std::string content_hash(const std::string& bytes);
std::string file_content_hash(const std::filesystem::path& path);

} // namespace quoka

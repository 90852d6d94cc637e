#pragma once

// Little-endian binary primitives and small file helpers shared by the
// dataset, feature and checkpoint containers.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

namespace simpool::io {

void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, std::string_view s);
void write_magic(std::ostream& out, std::string_view magic);

// Readers throw FormatError on truncated input.
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in, std::uint64_t max_len = 1u << 20);
void expect_magic(std::istream& in, std::string_view magic);

// Writes `contents` to a sibling temporary file and renames it over `path`,
// so readers never observe a partially written file.
void atomic_write(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

// 64-bit FNV-1a, used for content hashes and manifest keys.
class Fnv1a {
 public:
  void update(std::string_view bytes);
  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ull;
};

std::string hex64(std::uint64_t v);

}  // namespace simpool::io

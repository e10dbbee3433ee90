#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ubr/diffcore/grad_check.hpp"

// Little-endian primitives shared by the checkpoint and volume containers.
namespace ubr::io {

void write_u32(std::ostream& out, std::uint32_t value);
void write_f64(std::ostream& out, double value);
void write_f64_array(std::ostream& out, const std::vector<double>& values);
void write_string(std::ostream& out, const std::string& value);  // u32 length + bytes

/// Readers throw a data error naming `context` on a short read.
std::uint32_t read_u32(std::istream& in, const std::string& context);
double read_f64(std::istream& in, const std::string& context);
void read_f64_array(std::istream& in, std::vector<double>& values, const std::string& context);
std::string read_string(std::istream& in, const std::string& context, std::uint32_t max_length = 1u << 24);
void expect_magic(std::istream& in, const char (&magic)[5], const std::string& context);

/// Checkpoint container: magic "UBRC", u32 version, length-prefixed config
/// text, then tensors (name, u32 rank, u32 extents, f64 data) until EOF.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointFile {
  std::uint32_t version = kCheckpointVersion;
  std::string config_text;
  std::vector<diff::NamedTensor> tensors;

  const diff::Tensor* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

}  // namespace ubr::io

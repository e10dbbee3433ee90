#include "ubr/binary_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ubr/error.hpp"

namespace ubr::io {

namespace {

template <typename T>
void write_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& context) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw data_error(context + ": truncated file");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t value) { write_le(out, value); }
void write_f64(std::ostream& out, double value) { write_le(out, value); }

void write_f64_array(std::ostream& out, const std::vector<double>& values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    for (double v : values) write_f64(out, v);
  }
}

void write_string(std::ostream& out, const std::string& value) {
  write_u32(out, static_cast<std::uint32_t>(value.size()));
  out.write(value.data(), static_cast<std::streamsize>(value.size()));
}

std::uint32_t read_u32(std::istream& in, const std::string& context) { return read_le<std::uint32_t>(in, context); }
double read_f64(std::istream& in, const std::string& context) { return read_le<double>(in, context); }

void read_f64_array(std::istream& in, std::vector<double>& values, const std::string& context) {
  if constexpr (std::endian::native == std::endian::little) {
    const auto bytes = static_cast<std::streamsize>(values.size() * sizeof(double));
    if (!in.read(reinterpret_cast<char*>(values.data()), bytes)) throw data_error(context + ": truncated file");
  } else {
    for (auto& v : values) v = read_f64(in, context);
  }
}

std::string read_string(std::istream& in, const std::string& context, std::uint32_t max_length) {
  const auto length = read_u32(in, context);
  if (length > max_length) throw data_error(context + ": implausible string length " + std::to_string(length));
  std::string value(length, '\0');
  if (length > 0 && !in.read(value.data(), length)) throw data_error(context + ": truncated file");
  return value;
}

void expect_magic(std::istream& in, const char (&magic)[5], const std::string& context) {
  char found[4] = {};
  if (!in.read(found, 4)) throw data_error(context + ": truncated file");
  if (std::memcmp(found, magic, 4) != 0) {
    throw data_error(context + ": bad magic bytes, expected \"" + std::string(magic, 4) + "\"");
  }
}

const diff::Tensor* CheckpointFile::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error(path.string() + ": cannot open for writing");
  out.write("UBRC", 4);
  write_u32(out, file.version);
  write_string(out, file.config_text);
  for (const auto& t : file.tensors) {
    write_string(out, t.name);
    write_u32(out, static_cast<std::uint32_t>(t.value.rank()));
    for (auto e : t.value.shape()) write_u32(out, static_cast<std::uint32_t>(e));
    write_f64_array(out, t.value.storage());
  }
  if (!out) throw data_error(path.string() + ": write failed");
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string ctx = path.string();
  if (!in) throw data_error(ctx + ": cannot open checkpoint");
  expect_magic(in, "UBRC", ctx);
  CheckpointFile file;
  file.version = read_u32(in, ctx);
  if (file.version != kCheckpointVersion) {
    throw data_error(ctx + ": unsupported checkpoint version " + std::to_string(file.version) + " (expected " +
                     std::to_string(kCheckpointVersion) + ")");
  }
  file.config_text = read_string(in, ctx);
  while (in.peek() != std::char_traits<char>::eof()) {
    diff::NamedTensor t;
    t.name = read_string(in, ctx, 4096);
    const std::string tctx = ctx + " tensor '" + t.name + "'";
    const auto rank = read_u32(in, tctx);
    if (rank == 0 || rank > 4) throw data_error(tctx + ": invalid rank " + std::to_string(rank));
    diff::Tensor::Shape shape(rank);
    for (auto& e : shape) {
      e = read_u32(in, tctx);
      if (e == 0) throw data_error(tctx + ": zero extent");
    }
    std::vector<double> values(diff::element_count(shape));
    read_f64_array(in, values, tctx);
    t.value = diff::Tensor(std::move(shape), std::move(values));
    file.tensors.push_back(std::move(t));
  }
  return file;
}

}  // namespace ubr::io

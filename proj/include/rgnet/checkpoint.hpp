// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rgnet/tensor.hpp"

// Self-describing binary container:
//
//   "RGNET" | u16 version | record*
//   record := u32 name_len | name (UTF-8) | u8 dtype | u32 rank | u64 extent[rank]
//             | [int8 only: f64 scale | i32 zero_point] | payload
//
// All integers and payload elements are little-endian. Records run to EOF.

namespace rgnet {

inline constexpr char kCheckpointMagic[] = "RGNET";
inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2, kInt8 = 3, kUInt8 = 4 };

std::size_t dtype_size(DType dtype);
const char* dtype_name(DType dtype);

struct QuantFields {
  double scale = 1.0;
  std::int32_t zero_point = 0;
};

struct Record {
  std::string name;
  DType dtype = DType::kFloat32;
  Shape shape;
  std::vector<std::uint8_t> payload;  // little-endian element bytes
  std::optional<QuantFields> quant;   // present iff dtype == kInt8

  std::size_t element_count() const { return numel(shape); }
};

class Checkpoint {
 public:
  void add_float32(const std::string& name, const Shape& shape, std::span<const float> values);
  void add_float64(const std::string& name, const Shape& shape, std::span<const double> values);
  void add_int8(const std::string& name, const Shape& shape, std::span<const std::int8_t> values, QuantFields quant);
  void add_bytes(const std::string& name, std::span<const std::uint8_t> bytes);
  void add_text(const std::string& name, const std::string& text);

  template <typename T>
  void add_tensor(const std::string& name, const Tensor<T>& t);

  const std::vector<Record>& records() const noexcept { return records_; }
  const Record* find(const std::string& name) const;
  const Record& at(const std::string& name) const;
  bool contains(const std::string& name) const { return find(name) != nullptr; }

  /// Element values widened to double (float32/float64 records).
  std::vector<double> floats(const std::string& name) const;
  std::vector<std::int8_t> int8s(const std::string& name) const;
  std::string text(const std::string& name) const;
  double scalar(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint parse(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  void add(Record record);
  std::vector<Record> records_;
};

}  // namespace rgnet

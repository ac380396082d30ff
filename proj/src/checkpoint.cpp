// SPDX-License-Identifier: Apache-2.0
#include "rgnet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rgnet/error.hpp"

namespace rgnet {
namespace {

template <typename V>
void put_le(std::vector<std::uint8_t>& out, V value) {
  std::uint8_t bytes[sizeof(V)];
  std::memcpy(bytes, &value, sizeof(V));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  out.insert(out.end(), std::begin(bytes), std::end(bytes));
}

template <typename V>
V get_le(const std::uint8_t* src) {
  std::uint8_t bytes[sizeof(V)];
  std::memcpy(bytes, src, sizeof(V));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  V value;
  std::memcpy(&value, bytes, sizeof(V));
  return value;
}

template <typename V>
std::vector<std::uint8_t> encode_values(std::span<const V> values) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * sizeof(V));
  for (V v : values) put_le(out, v);
  return out;
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  const std::uint8_t* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw IoError(std::string("checkpoint truncated while reading ") + what + " at byte " + std::to_string(pos_));
    }
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  template <typename V>
  V read(const char* what) {
    return get_le<V>(take(sizeof(V), what));
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kFloat32: return 4;
    case DType::kFloat64: return 8;
    case DType::kInt8:
    case DType::kUInt8: return 1;
  }
  throw IoError("unknown dtype tag");
}

const char* dtype_name(DType dtype) {
  switch (dtype) {
    case DType::kFloat32: return "float32";
    case DType::kFloat64: return "float64";
    case DType::kInt8: return "int8";
    case DType::kUInt8: return "uint8";
  }
  return "unknown";
}

void Checkpoint::add(Record record) {
  if (contains(record.name)) throw IoError("duplicate checkpoint record '" + record.name + "'");
  records_.push_back(std::move(record));
}

void Checkpoint::add_float32(const std::string& name, const Shape& shape, std::span<const float> values) {
  if (numel(shape) != values.size()) throw ShapeError("record '" + name + "' shape/value mismatch");
  add(Record{name, DType::kFloat32, shape, encode_values(values), std::nullopt});
}

void Checkpoint::add_float64(const std::string& name, const Shape& shape, std::span<const double> values) {
  if (numel(shape) != values.size()) throw ShapeError("record '" + name + "' shape/value mismatch");
  add(Record{name, DType::kFloat64, shape, encode_values(values), std::nullopt});
}

void Checkpoint::add_int8(const std::string& name, const Shape& shape, std::span<const std::int8_t> values,
                          QuantFields quant) {
  if (numel(shape) != values.size()) throw ShapeError("record '" + name + "' shape/value mismatch");
  add(Record{name, DType::kInt8, shape, encode_values(values), quant});
}

void Checkpoint::add_bytes(const std::string& name, std::span<const std::uint8_t> bytes) {
  add(Record{name, DType::kUInt8, Shape{bytes.size()}, std::vector<std::uint8_t>(bytes.begin(), bytes.end()),
             std::nullopt});
}

void Checkpoint::add_text(const std::string& name, const std::string& text) {
  add_bytes(name, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

template <typename T>
void Checkpoint::add_tensor(const std::string& name, const Tensor<T>& t) {
  if constexpr (std::is_same_v<T, float>) {
    add_float32(name, t.shape(), t.data());
  } else {
    add_float64(name, t.shape(), t.data());
  }
}

template void Checkpoint::add_tensor<float>(const std::string&, const Tensor<float>&);
template void Checkpoint::add_tensor<double>(const std::string&, const Tensor<double>&);

const Record* Checkpoint::find(const std::string& name) const {
  auto it = std::find_if(records_.begin(), records_.end(), [&](const Record& r) { return r.name == name; });
  return it == records_.end() ? nullptr : &*it;
}

const Record& Checkpoint::at(const std::string& name) const {
  const Record* r = find(name);
  if (r == nullptr) throw IoError("checkpoint has no record '" + name + "'");
  return *r;
}

std::vector<double> Checkpoint::floats(const std::string& name) const {
  const Record& r = at(name);
  const std::size_t n = r.element_count();
  std::vector<double> out(n);
  if (r.dtype == DType::kFloat32) {
    for (std::size_t i = 0; i < n; ++i) out[i] = get_le<float>(r.payload.data() + 4 * i);
  } else if (r.dtype == DType::kFloat64) {
    for (std::size_t i = 0; i < n; ++i) out[i] = get_le<double>(r.payload.data() + 8 * i);
  } else {
    throw IoError("record '" + name + "' is " + dtype_name(r.dtype) + ", expected floating point");
  }
  return out;
}

std::vector<std::int8_t> Checkpoint::int8s(const std::string& name) const {
  const Record& r = at(name);
  if (r.dtype != DType::kInt8) throw IoError("record '" + name + "' is not int8");
  std::vector<std::int8_t> out(r.payload.size());
  std::memcpy(out.data(), r.payload.data(), r.payload.size());
  return out;
}

std::string Checkpoint::text(const std::string& name) const {
  const Record& r = at(name);
  if (r.dtype != DType::kUInt8) throw IoError("record '" + name + "' is not a byte record");
  return std::string(r.payload.begin(), r.payload.end());
}

double Checkpoint::scalar(const std::string& name) const {
  auto values = floats(name);
  if (values.size() != 1) throw IoError("record '" + name + "' is not a scalar");
  return values[0];
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 5);
  put_le<std::uint16_t>(out, kCheckpointVersion);
  for (const Record& r : records_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(r.dtype));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.shape.size()));
    for (std::size_t e : r.shape) put_le<std::uint64_t>(out, e);
    if (r.dtype == DType::kInt8) {
      const QuantFields q = r.quant.value_or(QuantFields{});
      put_le<double>(out, q.scale);
      put_le<std::int32_t>(out, q.zero_point);
    }
    out.insert(out.end(), r.payload.begin(), r.payload.end());
  }
  return out;
}

Checkpoint Checkpoint::parse(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const std::uint8_t* magic = in.take(5, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 5) != 0) throw IoError("not an RGNET checkpoint (bad magic)");
  const auto version = in.read<std::uint16_t>("version");
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  while (!in.done()) {
    Record r;
    const auto name_len = in.read<std::uint32_t>("name length");
    const std::uint8_t* name = in.take(name_len, "name");
    r.name.assign(reinterpret_cast<const char*>(name), name_len);
    const auto tag = in.read<std::uint8_t>("dtype");
    if (tag < 1 || tag > 4) throw IoError("record '" + r.name + "' has unknown dtype tag " + std::to_string(tag));
    r.dtype = static_cast<DType>(tag);
    const auto rank = in.read<std::uint32_t>("rank");
    for (std::uint32_t d = 0; d < rank; ++d) r.shape.push_back(static_cast<std::size_t>(in.read<std::uint64_t>("extent")));
    if (r.dtype == DType::kInt8) {
      QuantFields q;
      q.scale = in.read<double>("scale");
      q.zero_point = in.read<std::int32_t>("zero point");
      r.quant = q;
    }
    const std::size_t n = numel(r.shape) * dtype_size(r.dtype);
    const std::uint8_t* payload = in.take(n, "payload");
    r.payload.assign(payload, payload + n);
    ckpt.add(std::move(r));
  }
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(bytes);
}

}  // namespace rgnet

#ifndef DOCCLF_SERIALIZE_HPP
#define DOCCLF_SERIALIZE_HPP

// Binary tensor files: an 8-byte little-endian header length, a JSON header
// {"dtype": "float32"|"float64", "shape": [...]}, then the flat row-major
// data in little-endian order. Checkpoints use the same layout with a richer
// header listing every named tensor and its byte offset into the data blob.

#include "docclf/tensor.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace docclf {

class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
constexpr const char *dtype_name() {
  static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
  return std::is_same_v<Scalar, float> ? "float32" : "float64";
}

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

inline void write_u64(std::ostream &os, std::uint64_t v) {
  v = byteswap_if_big(v);
  os.write(reinterpret_cast<const char *>(&v), sizeof v);
}

inline std::uint64_t read_u64(std::istream &is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char *>(&v), sizeof v)) throw FormatError("truncated header length");
  return byteswap_if_big(v);
}

inline void write_header(std::ostream &os, const nlohmann::json &header) {
  const std::string text = header.dump();
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline nlohmann::json read_header(std::istream &is) {
  const std::uint64_t len = read_u64(is);
  if (len > (1u << 28)) throw FormatError("implausible header length");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("truncated header");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("bad header: ") + e.what());
  }
}

template <typename Scalar>
void write_values(std::ostream &os, const Tensor<Scalar> &t) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char *>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
  } else {
    for (Index i = 0; i < t.size(); ++i) {
      Scalar v = byteswap_if_big(t[i]);
      os.write(reinterpret_cast<const char *>(&v), sizeof v);
    }
  }
}

template <typename Stored, typename Scalar>
void read_values_as(std::istream &is, Tensor<Scalar> &t) {
  std::vector<Stored> buf(static_cast<std::size_t>(t.size()));
  if (!is.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(Stored))))
    throw FormatError("truncated tensor data");
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(byteswap_if_big(buf[static_cast<std::size_t>(i)]));
}

template <typename Scalar>
void read_values(std::istream &is, const std::string &dtype, Tensor<Scalar> &t) {
  if (dtype == "float32")
    read_values_as<float>(is, t);
  else if (dtype == "float64")
    read_values_as<double>(is, t);
  else
    throw FormatError("unsupported dtype '" + dtype + "'");
}

inline std::size_t dtype_size(const std::string &dtype) {
  if (dtype == "float32") return 4;
  if (dtype == "float64") return 8;
  throw FormatError("unsupported dtype '" + dtype + "'");
}

} // namespace detail

template <typename Scalar>
void write_tensor(std::ostream &os, const Tensor<Scalar> &t) {
  detail::write_header(os, {{"dtype", dtype_name<Scalar>()}, {"shape", t.shape()}});
  detail::write_values(os, t);
}

/// Reads a tensor file, converting the stored dtype to Scalar.
template <typename Scalar>
Tensor<Scalar> read_tensor(std::istream &is) {
  const auto header = detail::read_header(is);
  Tensor<Scalar> t(header.at("shape").get<Shape>());
  detail::read_values(is, header.at("dtype").get<std::string>(), t);
  return t;
}

template <typename Scalar>
void save_tensor(const std::filesystem::path &path, const Tensor<Scalar> &t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

template <typename Scalar>
Tensor<Scalar> load_tensor(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_tensor<Scalar>(is);
}

/// Named tensors plus free-form metadata (model kind, config, provenance).
template <typename Scalar>
struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::string> order;
  std::map<std::string, Tensor<Scalar>> tensors;

  void put(const std::string &name, Tensor<Scalar> t) {
    if (!tensors.count(name)) order.push_back(name);
    tensors[name] = std::move(t);
  }
  const Tensor<Scalar> &at(const std::string &name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint has no tensor '" + name + "'");
    return it->second;
  }
};

template <typename Scalar>
void save_checkpoint(const std::filesystem::path &path, const Checkpoint<Scalar> &ckpt) {
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto &name : ckpt.order) {
    const auto &t = ckpt.tensors.at(name);
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.size()) * sizeof(Scalar);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  detail::write_header(os, {{"format", "docclf-checkpoint"},
                            {"version", 1},
                            {"dtype", dtype_name<Scalar>()},
                            {"meta", ckpt.meta},
                            {"tensors", entries}});
  for (const auto &name : ckpt.order) detail::write_values(os, ckpt.tensors.at(name));
}

template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  const auto header = detail::read_header(is);
  if (header.value("format", "") != "docclf-checkpoint") throw FormatError(path.string() + " is not a checkpoint");
  const auto dtype = header.at("dtype").get<std::string>();
  detail::dtype_size(dtype);
  const auto base = is.tellg();
  Checkpoint<Scalar> ckpt;
  ckpt.meta = header.at("meta");
  for (const auto &entry : header.at("tensors")) {
    Tensor<Scalar> t(entry.at("shape").get<Shape>());
    is.seekg(base + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    detail::read_values(is, dtype, t);
    ckpt.put(entry.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

} // namespace docclf

#endif // DOCCLF_SERIALIZE_HPP

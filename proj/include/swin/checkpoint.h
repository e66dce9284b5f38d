#pragma once

// Parameter serialization: one file holding a length-prefixed UTF-8 JSON
// header ({name, shape, dtype, byte_offset} per tensor, plus caller metadata)
// followed by the raw little-endian scalar payload. Save -> load -> save is
// byte-identical.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "swin/tensor.h"

namespace swin {

namespace detail {
inline void require_little_endian() {
  if (std::endian::native != std::endian::little) {
    throw NumericError("checkpoint: payload is little-endian; this host is not");
  }
}
}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const std::vector<Parameter<T>*>& params,
                     const nlohmann::ordered_json& meta = nlohmann::ordered_json::object()) {
  detail::require_little_endian();

  nlohmann::ordered_json header;
  header["format"] = "swin-checkpoint";
  header["version"] = 1;
  header["meta"] = meta;
  auto& tensors = header["tensors"] = nlohmann::ordered_json::array();
  uint64_t offset = 0;
  for (const Parameter<T>* p : params) {
    nlohmann::ordered_json t;
    t["name"] = p->name;
    t["dtype"] = dtype_name<T>();
    t["shape"] = p->value.shape();
    t["byte_offset"] = offset;
    tensors.push_back(std::move(t));
    offset += static_cast<uint64_t>(p->value.numel()) * sizeof(T);
  }
  const std::string header_bytes = header.dump();
  const uint64_t header_len = header_bytes.size();

  const std::filesystem::path target(path);
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw NumericError("checkpoint: cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
    for (const Parameter<T>* p : params) {
      const auto& v = p->value.data();
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(T)));
    }
    if (!out) throw NumericError("checkpoint: write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, target);  // atomic publish
}

// Fills `params` (matched by name) from the file; every file tensor must map
// onto exactly one parameter with identical dtype and shape, and vice versa.
// Returns the metadata object stored at save time.
template <typename T>
nlohmann::ordered_json load_checkpoint(const std::string& path,
                                       const std::vector<Parameter<T>*>& params) {
  detail::require_little_endian();

  std::ifstream in(path, std::ios::binary);
  if (!in) throw NumericError("checkpoint: cannot open '" + path + "'");
  uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in) throw NumericError("checkpoint: truncated header length in '" + path + "'");
  std::string header_bytes(header_len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw NumericError("checkpoint: truncated header in '" + path + "'");

  nlohmann::ordered_json header = nlohmann::ordered_json::parse(header_bytes, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "swin-checkpoint") {
    throw NumericError("checkpoint: '" + path + "' is not a parameter checkpoint");
  }

  std::map<std::string, Parameter<T>*> by_name;
  for (Parameter<T>* p : params) by_name[p->name] = p;

  const std::streampos payload_start = in.tellg();
  size_t matched = 0;
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name");
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw NumericError("checkpoint: file tensor '" + name + "' has no matching parameter");
    }
    Parameter<T>* p = it->second;
    const std::string dtype = t.at("dtype");
    if (dtype != dtype_name<T>()) {
      throw NumericError("checkpoint: tensor '" + name + "' is " + dtype + ", expected " +
                         dtype_name<T>());
    }
    const Shape shape = t.at("shape").get<Shape>();
    if (shape != p->value.shape()) {
      throw ShapeError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                       ", parameter expects " + shape_str(p->value.shape()));
    }
    auto& v = p->value.mutable_data();
    in.seekg(payload_start + static_cast<std::streamoff>(t.at("byte_offset").get<uint64_t>()));
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
    if (!in) throw NumericError("checkpoint: truncated payload for tensor '" + name + "'");
    ++matched;
  }
  if (matched != by_name.size()) {
    for (const auto& [name, p] : by_name) {
      bool found = false;
      for (const auto& t : header.at("tensors")) found |= t.at("name") == name;
      if (!found) throw NumericError("checkpoint: parameter '" + name + "' missing from file");
    }
  }
  return header.value("meta", nlohmann::ordered_json::object());
}

}  // namespace swin

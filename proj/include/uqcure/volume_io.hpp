#pragma once

// Volume files: a small JSON header (*.vqh) next to a headerless
// little-endian payload dump in z,y,x order.
//
//   {"shape":[Z,Y,X],"dtype":"float32","spacing":[1,1,1],
//    "payload":"unc.raw","endianness":"little"}
//
// The payload path is resolved relative to the header's directory.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <json.hpp>

#include "uqcure/volume.hpp"

namespace uqcure {

namespace fs = std::filesystem;

struct ReadOptions {
  std::int64_t max_voxels = kDefaultMaxVoxels;
};

namespace detail {

template <typename T>
void to_little_endian_inplace(std::span<T> data) {
  if constexpr (std::endian::native != std::endian::little && sizeof(T) > 1) {
    for (auto& v : data) {
      auto* b = reinterpret_cast<unsigned char*>(&v);
      std::reverse(b, b + sizeof(T));
    }
  }
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + p.string());
  return s;
}

inline void write_file(const fs::path& p, std::string_view bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failure on " + p.string());
}

template <typename T>
Volume<T> decode_payload(const VolumeMeta& meta, const std::string& bytes) {
  std::vector<T> data(static_cast<std::size_t>(meta.shape.voxels()));
  std::memcpy(data.data(), bytes.data(), bytes.size());
  to_little_endian_inplace(std::span<T>(data));
  return Volume<T>(meta.shape, std::move(data), meta.spacing);
}

}  // namespace detail

inline nlohmann::json header_json(const VolumeMeta& meta, const std::string& payload_name) {
  nlohmann::json j;
  j["shape"] = {meta.shape.z, meta.shape.y, meta.shape.x};
  j["dtype"] = std::string(dtype_name(meta.dtype));
  j["spacing"] = {meta.spacing[0], meta.spacing[1], meta.spacing[2]};
  j["payload"] = payload_name;
  j["endianness"] = "little";
  return j;
}

inline VolumeMeta parse_header(const nlohmann::json& j, std::int64_t max_voxels,
                               std::string* payload = nullptr) {
  VolumeMeta meta;
  try {
    const auto& shape = j.at("shape");
    if (!shape.is_array() || shape.size() != 3) throw ValidationError("shape must have 3 entries");
    for (const auto& s : shape)
      if (!s.is_number_integer()) throw ValidationError("shape entries must be integers");
    meta.shape = {shape[0].get<std::int64_t>(), shape[1].get<std::int64_t>(),
                  shape[2].get<std::int64_t>()};
    meta.dtype = parse_dtype(j.at("dtype").get<std::string>());
    if (j.contains("spacing")) {
      const auto& sp = j.at("spacing");
      if (!sp.is_array() || sp.size() != 3) throw ValidationError("spacing must have 3 entries");
      meta.spacing = {sp[0].get<double>(), sp[1].get<double>(), sp[2].get<double>()};
    }
    if (j.contains("endianness") && j.at("endianness").get<std::string>() != "little") {
      throw ValidationError("only little-endian payloads are supported");
    }
    if (payload) *payload = j.at("payload").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed header: ") + e.what());
  }
  meta.validate(max_voxels);
  return meta;
}

inline AnyVolume read_volume(const fs::path& header_path, const ReadOptions& opts = {}) {
  const std::string text = detail::read_file(header_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed header " + header_path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError("malformed header: expected an object");
  std::string payload_name;
  const VolumeMeta meta = parse_header(j, opts.max_voxels, &payload_name);

  const fs::path payload_path = header_path.parent_path() / payload_name;
  const std::string bytes = detail::read_file(payload_path);
  if (bytes.size() != meta.payload_bytes()) {
    throw ValidationError("payload length mismatch: " + payload_path.string() + " has " +
                          std::to_string(bytes.size()) + " bytes, header implies " +
                          std::to_string(meta.payload_bytes()));
  }
  switch (meta.dtype) {
    case DType::uint8: return detail::decode_payload<std::uint8_t>(meta, bytes);
    case DType::uint16: return detail::decode_payload<std::uint16_t>(meta, bytes);
    case DType::uint32: return detail::decode_payload<std::uint32_t>(meta, bytes);
    case DType::float32: return detail::decode_payload<float>(meta, bytes);
  }
  throw ValidationError("unsupported dtype");
}

template <typename T>
Volume<T> read_volume_as(const fs::path& header_path, std::string_view role = "input",
                         const ReadOptions& opts = {}) {
  AnyVolume v = read_volume(header_path, opts);
  expect_dtype<T>(v, role);
  return std::get<Volume<T>>(std::move(v));
}

// Payload file lives next to the header as <stem>.raw.
inline fs::path payload_path_for(const fs::path& header_path) {
  fs::path p = header_path;
  p.replace_extension(".raw");
  return p;
}

template <typename T>
std::string encode_payload(const Volume<T>& vol) {
  std::vector<T> copy = vol.buffer();
  detail::to_little_endian_inplace(std::span<T>(copy));
  return std::string(reinterpret_cast<const char*>(copy.data()), copy.size() * sizeof(T));
}

template <typename T>
void write_volume(const Volume<T>& vol, const fs::path& header_path) {
  const fs::path payload = payload_path_for(header_path);
  detail::write_file(payload, encode_payload(vol));
  detail::write_file(header_path,
                     header_json(vol.meta(), payload.filename().string()).dump(2) + "\n");
}

inline void write_volume(const AnyVolume& vol, const fs::path& header_path) {
  std::visit([&](const auto& v) { write_volume(v, header_path); }, vol);
}

// Loads raw.vqh, seg.vqh and unc.vqh from a dataset directory.
inline DatasetTriplet read_dataset(const fs::path& dir, const ReadOptions& opts = {}) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  fs::path norm = dir.lexically_normal();
  if (norm.filename().empty()) norm = norm.parent_path();
  return validate_triplet(read_volume(dir / "raw.vqh", opts), read_volume(dir / "seg.vqh", opts),
                          read_volume(dir / "unc.vqh", opts), norm.filename().string());
}

inline void write_dataset(const DatasetTriplet& t, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_volume(t.raw, dir / "raw.vqh");
  write_volume(t.seg, dir / "seg.vqh");
  write_volume(t.unc, dir / "unc.vqh");
}

}  // namespace uqcure

#include "apa/volume.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>

#include "apa/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace apa {

namespace {

json read_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::io("io.not_found", "cannot open header: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error::io("io.malformed", "bad JSON in " + path + ": " + e.what());
  }
  return j;
}

std::string payload_path(const std::string& json_path, const json& header) {
  std::string name = header.value("payload", "");
  if (name.empty())
    throw Error::io("io.malformed", "header missing payload field: " + json_path);
  return (fs::path(json_path).parent_path() / name).string();
}

template <typename T>
std::vector<T> read_payload(const std::string& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error::io("io.not_found", "cannot open payload: " + path);
  in.seekg(0, std::ios::end);
  std::size_t bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes != expected * sizeof(T))
    throw Error::validation("data.size_mismatch",
                            "payload " + path + " holds " +
                                std::to_string(bytes / sizeof(T)) +
                                " elements, header declares " +
                                std::to_string(expected));
  std::vector<T> out(expected);
  in.read(reinterpret_cast<char*>(out.data()),
          static_cast<std::streamsize>(bytes));
  if (!in)
    throw Error::io("io.read_failed", "short read on payload: " + path);
  return out;
}

template <typename T>
void write_payload(const std::string& path, const std::vector<T>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error::io("io.write_failed", "cannot write payload: " + path);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
  if (!out) throw Error::io("io.write_failed", "short write on payload: " + path);
}

void write_header(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error::io("io.write_failed", "cannot write header: " + path);
  out << j.dump(2) << "\n";
}

std::string raw_name(const std::string& json_path) {
  fs::path p(json_path);
  std::string stem = p.filename().string();
  auto pos = stem.rfind(".json");
  if (pos != std::string::npos) stem = stem.substr(0, pos);
  return stem + ".raw";
}

std::array<std::size_t, 3> dims3(const json& header, const std::string& path) {
  auto d = header.value("dims", std::vector<long long>{});
  if (d.size() != 3 || d[0] < 1 || d[1] < 1 || d[2] < 1)
    throw Error::validation("data.bad_dims", "expected 3 positive dims in " + path);
  return {static_cast<std::size_t>(d[0]), static_cast<std::size_t>(d[1]),
          static_cast<std::size_t>(d[2])};
}

void check_finite(const std::vector<float>& v, const std::string& path) {
  for (float f : v)
    if (!std::isfinite(f))
      throw Error::validation("data.non_finite",
                              "non-finite voxel value in " + path);
}

}  // namespace

void Volume3D::validate() const {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
    throw Error::validation("data.bad_dims", "Volume3D dims must be positive");
  if (voxels.size() != size())
    throw Error::validation("data.size_mismatch", "Volume3D length mismatch");
  for (float f : voxels)
    if (!std::isfinite(f))
      throw Error::validation("data.non_finite", "Volume3D has non-finite value");
}

void Volume4D::validate() const {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1 || dims[3] < 1)
    throw Error::validation("data.bad_dims", "Volume4D dims must be positive");
  if (voxels.size() != size())
    throw Error::validation("data.size_mismatch", "Volume4D length mismatch");
  for (float f : voxels)
    if (!std::isfinite(f))
      throw Error::validation("data.non_finite", "Volume4D has non-finite value");
}

void AtlasVolume::validate() const {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
    throw Error::validation("data.bad_dims", "atlas dims must be positive");
  if (labels.size() != size())
    throw Error::validation("data.size_mismatch", "atlas label length mismatch");
  if (region_count < 1)
    throw Error::validation("data.bad_atlas", "atlas needs at least one region");
  std::vector<bool> seen(static_cast<std::size_t>(region_count) + 1, false);
  for (std::int32_t l : labels) {
    if (l < 0 || l > region_count)
      throw Error::validation("data.bad_atlas",
                              "label " + std::to_string(l) + " outside 0.." +
                                  std::to_string(region_count));
    seen[static_cast<std::size_t>(l)] = true;
  }
  for (std::int32_t r = 1; r <= region_count; ++r)
    if (!seen[static_cast<std::size_t>(r)])
      throw Error::validation("data.bad_atlas",
                              "region " + std::to_string(r) + " has no voxels");
}

Volume3D Volume4D::slice(std::size_t t) const {
  Volume3D out;
  out.dims = {dims[0], dims[1], dims[2]};
  std::size_t v = spatial_size();
  out.voxels.assign(voxels.begin() + static_cast<std::ptrdiff_t>(v * t),
                    voxels.begin() + static_cast<std::ptrdiff_t>(v * (t + 1)));
  return out;
}

Volume3D load_volume3d(const std::string& json_path) {
  json h = read_header(json_path);
  if (h.value("type", "") != "volume3d")
    throw Error::validation("data.wrong_type",
                            "expected volume3d header in " + json_path);
  Volume3D v;
  v.dims = dims3(h, json_path);
  v.voxels = read_payload<float>(payload_path(json_path, h), v.size());
  check_finite(v.voxels, json_path);
  return v;
}

Volume4D load_volume4d(const std::string& json_path) {
  json h = read_header(json_path);
  if (h.value("type", "") != "volume4d")
    throw Error::validation("data.wrong_type",
                            "expected volume4d header in " + json_path);
  auto d = h.value("dims", std::vector<long long>{});
  if (d.size() != 4 || d[0] < 1 || d[1] < 1 || d[2] < 1 || d[3] < 1)
    throw Error::validation("data.bad_dims",
                            "expected 4 positive dims in " + json_path);
  Volume4D v;
  v.dims = {static_cast<std::size_t>(d[0]), static_cast<std::size_t>(d[1]),
            static_cast<std::size_t>(d[2]), static_cast<std::size_t>(d[3])};
  v.tr_ms = h.value("tr_ms", 0.0);
  v.voxels = read_payload<float>(payload_path(json_path, h), v.size());
  check_finite(v.voxels, json_path);
  return v;
}

AtlasVolume load_atlas(const std::string& json_path) {
  json h = read_header(json_path);
  if (h.value("type", "") != "atlas")
    throw Error::validation("data.wrong_type",
                            "expected atlas header in " + json_path);
  AtlasVolume a;
  a.dims = dims3(h, json_path);
  a.region_count = h.value("region_count", 0);
  a.labels = read_payload<std::int32_t>(payload_path(json_path, h), a.size());
  a.validate();
  return a;
}

void save_volume3d(const Volume3D& v, const std::string& json_path) {
  v.validate();
  std::string raw = raw_name(json_path);
  json h = {{"type", "volume3d"},
            {"dims", {v.dims[0], v.dims[1], v.dims[2]}},
            {"dtype", "float32le"},
            {"payload", raw}};
  write_header(json_path, h);
  write_payload((fs::path(json_path).parent_path() / raw).string(), v.voxels);
}

void save_volume4d(const Volume4D& v, const std::string& json_path) {
  v.validate();
  std::string raw = raw_name(json_path);
  json h = {{"type", "volume4d"},
            {"dims", {v.dims[0], v.dims[1], v.dims[2], v.dims[3]}},
            {"tr_ms", v.tr_ms},
            {"dtype", "float32le"},
            {"payload", raw}};
  write_header(json_path, h);
  write_payload((fs::path(json_path).parent_path() / raw).string(), v.voxels);
}

void save_atlas(const AtlasVolume& a, const std::string& json_path) {
  a.validate();
  std::string raw = raw_name(json_path);
  json h = {{"type", "atlas"},
            {"dims", {a.dims[0], a.dims[1], a.dims[2]}},
            {"region_count", a.region_count},
            {"dtype", "int32le"},
            {"payload", raw}};
  write_header(json_path, h);
  write_payload((fs::path(json_path).parent_path() / raw).string(), a.labels);
}

}  // namespace apa

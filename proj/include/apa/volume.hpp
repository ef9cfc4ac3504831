#ifndef APA_VOLUME_HPP
#define APA_VOLUME_HPP

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace apa {

/// Dense 3D grid, x-fastest then y then z ordering.
struct Volume3D {
  std::array<std::size_t, 3> dims{0, 0, 0};
  std::vector<float> voxels;

  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims[0] * (y + dims[1] * z);
  }
  float at(std::size_t x, std::size_t y, std::size_t z) const {
    return voxels[index(x, y, z)];
  }
  float& at(std::size_t x, std::size_t y, std::size_t z) {
    return voxels[index(x, y, z)];
  }

  static Volume3D zeros(std::size_t x, std::size_t y, std::size_t z) {
    Volume3D v;
    v.dims = {x, y, z};
    v.voxels.assign(x * y * z, 0.0f);
    return v;
  }

  /// Throws validation errors on dim/length mismatch or non-finite values.
  void validate() const;
};

/// Dense 4D functional series, x-fastest then y, z, t.
struct Volume4D {
  std::array<std::size_t, 4> dims{0, 0, 0, 0};  // X, Y, Z, T
  double tr_ms = 0.0;
  std::vector<float> voxels;

  std::size_t spatial_size() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t size() const { return spatial_size() * dims[3]; }
  std::size_t time_points() const { return dims[3]; }

  /// Flat spatial index v at time t.
  float at(std::size_t v, std::size_t t) const {
    return voxels[v + spatial_size() * t];
  }
  float& at(std::size_t v, std::size_t t) {
    return voxels[v + spatial_size() * t];
  }

  Volume3D slice(std::size_t t) const;

  void validate() const;
};

/// Integer-labeled parcellation: 0 = background, 1..region_count = regions.
struct AtlasVolume {
  std::array<std::size_t, 3> dims{0, 0, 0};
  std::vector<std::int32_t> labels;
  std::int32_t region_count = 0;

  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }

  void validate() const;
};

// File I/O: "<stem>.vol.json" header + "<stem>.vol.raw" little-endian
// float32 payload; atlases use ".atlas.json"/".atlas.raw" with int32 labels.

Volume3D load_volume3d(const std::string& json_path);
Volume4D load_volume4d(const std::string& json_path);
AtlasVolume load_atlas(const std::string& json_path);

void save_volume3d(const Volume3D& v, const std::string& json_path);
void save_volume4d(const Volume4D& v, const std::string& json_path);
void save_atlas(const AtlasVolume& a, const std::string& json_path);

}  // namespace apa

#endif

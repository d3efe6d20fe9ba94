#pragma once
// 3-D voxel containers with physical spacing, the bit-exact ITSV file format,
// and the geometric primitives (nearest-neighbour resampling, exact surface
// distance, 26-connected components) every other module builds on.
//
// Conventions, fixed once for the whole codebase:
//   * linearization is x-fastest, then y, then z;
//   * voxel (i,j,k) sits at world position (i*sx, j*sy, k*sz) mm;
//   * ties between voxels are broken by the smallest linear index.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace trialforge {

// Single error type for domain failures; the CLI maps it to exit code 1.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Spacing {
  double sx = 1.0, sy = 1.0, sz = 1.0;  // mm per voxel, strictly positive
  bool operator==(const Spacing&) const = default;
};

struct Dims {
  int nx = 0, ny = 0, nz = 0;
  [[nodiscard]] std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  bool operator==(const Dims&) const = default;
};

// Point in the volume's physical frame (mm). Voxel index times spacing.
struct WorldPoint {
  double x = 0, y = 0, z = 0;
};

struct VoxelIndex {
  int x = 0, y = 0, z = 0;
  bool operator==(const VoxelIndex&) const = default;
};

// Inclusive voxel-index bounding box.
struct VoxelBox {
  VoxelIndex lo, hi;
};

inline double distance_mm(const WorldPoint& a, const WorldPoint& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline constexpr int kHUMin = -1024;
inline constexpr int kHUMax = 3071;

// Isotropic scale bounds for mask resampling.
inline constexpr double kAlphaMin = 0.03;
inline constexpr double kAlphaMax = 1.5;

template <typename T>
class Volume {
 public:
  Volume() = default;
  Volume(Dims dims, Spacing spacing, T fill = T{})
      : dims_(dims), spacing_(spacing), vox_(check_dims(dims), fill) {
    if (spacing.sx <= 0 || spacing.sy <= 0 || spacing.sz <= 0)
      throw error("volume spacing must be strictly positive");
  }

  [[nodiscard]] const Dims& dims() const { return dims_; }
  [[nodiscard]] const Spacing& spacing() const { return spacing_; }
  [[nodiscard]] std::size_t size() const { return vox_.size(); }
  [[nodiscard]] bool empty() const { return vox_.empty(); }

  [[nodiscard]] std::size_t linear(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims_.nx) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(dims_.ny) * static_cast<std::size_t>(z));
  }
  [[nodiscard]] VoxelIndex unlinear(std::size_t i) const {
    const auto nx = static_cast<std::size_t>(dims_.nx);
    const auto ny = static_cast<std::size_t>(dims_.ny);
    return {static_cast<int>(i % nx), static_cast<int>((i / nx) % ny),
            static_cast<int>(i / (nx * ny))};
  }

  [[nodiscard]] bool in_bounds(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims_.nx && y < dims_.ny && z < dims_.nz;
  }

  [[nodiscard]] T at(int x, int y, int z) const { return vox_[linear(x, y, z)]; }
  [[nodiscard]] T& at(int x, int y, int z) { return vox_[linear(x, y, z)]; }
  [[nodiscard]] T at(const VoxelIndex& v) const { return at(v.x, v.y, v.z); }
  [[nodiscard]] T& at(const VoxelIndex& v) { return at(v.x, v.y, v.z); }

  [[nodiscard]] std::span<const T> voxels() const { return vox_; }
  [[nodiscard]] std::span<T> voxels() { return vox_; }

  [[nodiscard]] WorldPoint world(int x, int y, int z) const {
    return {x * spacing_.sx, y * spacing_.sy, z * spacing_.sz};
  }
  [[nodiscard]] WorldPoint world(const VoxelIndex& v) const { return world(v.x, v.y, v.z); }

  // Nearest voxel to a world point, clamped into bounds.
  [[nodiscard]] VoxelIndex nearest_voxel(const WorldPoint& p) const;

  bool operator==(const Volume&) const = default;

 private:
  static std::size_t check_dims(Dims d) {
    if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0)
      throw error("volume dims must be strictly positive");
    return d.count();
  }

  Dims dims_{};
  Spacing spacing_{};
  std::vector<T> vox_;
};

using LabelVolume = Volume<std::uint8_t>;
using HUVolume = Volume<std::int16_t>;

extern template class Volume<std::uint8_t>;
extern template class Volume<std::int16_t>;

// --- ITSV on-disk format -----------------------------------------------------
// Line 1: "ITSV1"; line 2: "dims=<nx>,<ny>,<nz>;spacing=<sx>,<sy>,<sz>;dtype=<u8|i16>"
// (spacing printed as shortest round-trip decimal); then the raw payload in
// x-fastest order, i16 little-endian. No trailing bytes.

void write_volume(const LabelVolume& vol, const std::filesystem::path& path);
void write_volume(const HUVolume& vol, const std::filesystem::path& path);

std::variant<LabelVolume, HUVolume> read_volume(const std::filesystem::path& path);
LabelVolume read_label_volume(const std::filesystem::path& path);
HUVolume read_hu_volume(const std::filesystem::path& path);

// Shortest decimal string that parses back to exactly the same double.
std::string shortest_double(double v);

// --- geometry ----------------------------------------------------------------

// Nearest-neighbour resample of a single-label mask onto a dst-spacing grid,
// scaling the physical extent by alpha. alpha must lie in [kAlphaMin, kAlphaMax].
LabelVolume resample_mask(const LabelVolume& mask, const Spacing& src,
                          const Spacing& dst, double alpha);

// Exact Euclidean distance (mm) from p to the nearest boundary voxel of the
// label. A boundary voxel has the label and at least one 6-neighbour that does
// not (volume edges count as outside).
double surface_distance(const LabelVolume& vol, const WorldPoint& p, std::uint8_t label);

// Boundary voxels of a label *set*: voxels whose label is in `labels` with a
// 6-neighbour outside the set. Labels in `transparent` are treated as interior
// in the neighbour test without belonging to the set (used to keep airway
// channels from punching holes in the lung surface).
std::vector<VoxelIndex> boundary_voxels(const LabelVolume& vol,
                                        std::span<const std::uint8_t> labels,
                                        std::span<const std::uint8_t> transparent = {});

double min_distance_mm(std::span<const VoxelIndex> voxels, const Spacing& spacing,
                       const WorldPoint& p);

// Largest 26-connected component of a binary mask (nonzero = foreground);
// size ties go to the component with the smallest minimal linear index.
LabelVolume largest_component(const LabelVolume& mask);

// Equivalent-sphere diameter (mm) of the nonzero voxels of a mask.
double equivalent_sphere_diameter_mm(const LabelVolume& mask);

// Centroid (world mm) of the nonzero voxels of a mask.
WorldPoint mask_centroid(const LabelVolume& mask);

// Bounding box of voxels whose label is in the set; nullopt when none match.
std::optional<VoxelBox> labels_bbox(const LabelVolume& vol,
                                    std::span<const std::uint8_t> labels);
std::optional<VoxelBox> label_bbox(const LabelVolume& vol, std::uint8_t label);
// Bounding box of the nonzero voxels of a mask.
std::optional<VoxelBox> mask_bbox(const LabelVolume& mask);

std::size_t count_nonzero(const LabelVolume& mask);
std::size_t count_label(const LabelVolume& vol, std::uint8_t label);

}  // namespace trialforge

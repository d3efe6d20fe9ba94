#pragma once
// Stage 4 surrogate: maps a composed label volume to an HU volume with
// per-label Gaussian intensities, plus pre-synthesis QC and lung-windowed
// slice extraction. Deliberately textureless; it exists so the metric and QC
// paths run on real intensity data, not to make realism claims.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "trialforge/voxgrid.hpp"

namespace trialforge {

inline constexpr double kWindowWidthHU = 1500.0;
inline constexpr double kWindowLevelHU = -600.0;

struct LabelIntensity {
  double mean_hu = 0;
  double sigma_hu = 0;
};

// Per-label intensity table; every label present in a volume must have an
// entry. Means must lie in [-1024, 3071] and sigmas must be non-negative.
struct RenderParams {
  std::map<std::uint8_t, LabelIntensity> table;
  std::uint64_t noise_seed = 0;
};

// Background air, soft-tissue body, parenchymal lobes, air columns for the
// airway and trachea, per-structure mediastinum, and a subsolid nodule.
RenderParams default_render_params();

// Per-voxel HU = table mean + seeded Gaussian noise, clipped to the HU range.
// Noise is keyed by (seed, voxel linear index), so results are independent of
// evaluation order. Throws on an unknown label or an invalid table.
HUVolume render(const LabelVolume& composed, const RenderParams& params,
                std::uint64_t seed);
HUVolume render(const LabelVolume& composed, const RenderParams& params);

struct QcResult {
  bool accepted = false;
  std::string reason;  // empty when accepted
};

// Pre-synthesis QC: a composed volume must carry all five lobes and, unless
// the row is a lesion-free negative, at least one nodule voxel.
QcResult qc_check(const LabelVolume& composed, bool lesion_free = false);

// Linear lung window W=1500, L=-600 mapping HU to [0, 1]; monotone, and
// values already in range stay put.
double window_value(double hu);

// Row-major windowed intensity plane.
struct SliceImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // y * width + x
};

// Three consecutive axial slices centred on the nodule plus one coronal and
// one sagittal plane, all windowed. `clamped` marks a centroid within one
// voxel of the z boundary whose neighbour slices were clamped into range.
struct SlicePack {
  std::array<SliceImage, 3> axial;  // z-1, z, z+1
  SliceImage coronal;
  SliceImage sagittal;
  bool clamped = false;
};

// Throws when the centroid is out of bounds.
SlicePack extract_slices(const HUVolume& hu, const WorldPoint& centroid);

// 16-bit binary PGM (P5, big-endian samples), intensities scaled to 0..65535.
void write_slice_pgm(const std::filesystem::path& path, const SliceImage& image);

// The five slices of a pack as "<row>_<plane>.pgm" in `dir`, with plane in
// {axial0, axial1, axial2, coronal, sagittal}. Returns the paths written.
std::vector<std::filesystem::path> write_slice_pack(
    const std::filesystem::path& dir, std::size_t row_index, const SlicePack& pack);

}  // namespace trialforge

#include "trialforge/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "trialforge/labels.hpp"
#include "trialforge/rng.hpp"

namespace trialforge {

namespace {

constexpr double kHuMin = -1024.0;
constexpr double kHuMax = 3071.0;

void validate(const RenderParams& params) {
  for (const auto& [label, li] : params.table) {
    if (li.mean_hu < kHuMin || li.mean_hu > kHuMax)
      throw error("render table mean out of HU range for label " +
                  std::to_string(label));
    if (li.sigma_hu < 0)
      throw error("render table sigma negative for label " + std::to_string(label));
  }
}

SliceImage axial_slice(const HUVolume& hu, int z) {
  const auto& d = hu.dims();
  SliceImage img{d.nx, d.ny, {}};
  img.values.reserve(static_cast<std::size_t>(d.nx) * static_cast<std::size_t>(d.ny));
  for (int y = 0; y < d.ny; ++y)
    for (int x = 0; x < d.nx; ++x) img.values.push_back(window_value(hu.at(x, y, z)));
  return img;
}

SliceImage coronal_slice(const HUVolume& hu, int y) {
  const auto& d = hu.dims();
  SliceImage img{d.nx, d.nz, {}};
  img.values.reserve(static_cast<std::size_t>(d.nx) * static_cast<std::size_t>(d.nz));
  for (int z = 0; z < d.nz; ++z)
    for (int x = 0; x < d.nx; ++x) img.values.push_back(window_value(hu.at(x, y, z)));
  return img;
}

SliceImage sagittal_slice(const HUVolume& hu, int x) {
  const auto& d = hu.dims();
  SliceImage img{d.ny, d.nz, {}};
  img.values.reserve(static_cast<std::size_t>(d.ny) * static_cast<std::size_t>(d.nz));
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y) img.values.push_back(window_value(hu.at(x, y, z)));
  return img;
}

}  // namespace

RenderParams default_render_params() {
  RenderParams p;
  p.table[labels::background] = {-1000, 5};
  p.table[labels::body] = {40, 20};
  for (const auto lobe : labels::lobes) p.table[lobe] = {-780, 60};
  p.table[labels::airway] = {-950, 15};
  p.table[labels::heart] = {45, 20};
  p.table[labels::aorta] = {50, 20};
  p.table[labels::esophagus] = {30, 20};
  p.table[labels::trachea] = {-950, 15};
  p.table[labels::pulmonary_vein] = {50, 20};
  p.table[labels::svc] = {40, 20};
  p.table[labels::nodule] = {-600, 80};
  return p;
}

HUVolume render(const LabelVolume& composed, const RenderParams& params,
                std::uint64_t seed) {
  validate(params);
  HUVolume hu(composed.dims(), composed.spacing());
  const auto& d = composed.dims();
  const std::size_t total = static_cast<std::size_t>(d.nx) * d.ny * d.nz;
  for (std::size_t i = 0; i < total; ++i) {
    const auto v = composed.unlinear(i);
    const auto it = params.table.find(composed.at(v));
    if (it == params.table.end())
      throw error("no render table entry for label " +
                  std::to_string(composed.at(v)));
    double value = it->second.mean_hu;
    if (it->second.sigma_hu > 0) {
      RandomStream noise(seed, "render", static_cast<std::uint64_t>(i));
      value = noise.normal(it->second.mean_hu, it->second.sigma_hu);
    }
    hu.at(v) = static_cast<std::int16_t>(
        std::llround(std::clamp(value, kHuMin, kHuMax)));
  }
  return hu;
}

HUVolume render(const LabelVolume& composed, const RenderParams& params) {
  return render(composed, params, params.noise_seed);
}

QcResult qc_check(const LabelVolume& composed, bool lesion_free) {
  for (const auto lobe : labels::lobes)
    if (count_label(composed, lobe) == 0) return {false, "missing_lobes"};
  if (!lesion_free && count_label(composed, labels::nodule) == 0)
    return {false, "empty_label_23"};
  return {true, ""};
}

double window_value(double hu) {
  const double lo = kWindowLevelHU - kWindowWidthHU / 2;
  return std::clamp((hu - lo) / kWindowWidthHU, 0.0, 1.0);
}

SlicePack extract_slices(const HUVolume& hu, const WorldPoint& centroid) {
  const auto& d = hu.dims();
  const auto& sp = hu.spacing();
  const VoxelIndex v{static_cast<int>(std::llround(centroid.x / sp.sx)),
                     static_cast<int>(std::llround(centroid.y / sp.sy)),
                     static_cast<int>(std::llround(centroid.z / sp.sz))};
  if (!hu.in_bounds(v.x, v.y, v.z)) throw error("slice centroid out of bounds");
  SlicePack pack;
  pack.clamped = v.z == 0 || v.z == d.nz - 1;
  pack.axial[0] = axial_slice(hu, std::max(0, v.z - 1));
  pack.axial[1] = axial_slice(hu, v.z);
  pack.axial[2] = axial_slice(hu, std::min(d.nz - 1, v.z + 1));
  pack.coronal = coronal_slice(hu, v.y);
  pack.sagittal = sagittal_slice(hu, v.x);
  return pack;
}

void write_slice_pgm(const std::filesystem::path& path, const SliceImage& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.values.size() !=
          static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height))
    throw error("malformed slice image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot open for writing: " + path.string());
  out << "P5\n" << image.width << " " << image.height << "\n65535\n";
  for (const double value : image.values) {
    const auto s = static_cast<std::uint16_t>(
        std::llround(std::clamp(value, 0.0, 1.0) * 65535.0));
    const char bytes[2] = {static_cast<char>(s >> 8), static_cast<char>(s & 0xff)};
    out.write(bytes, 2);
  }
  if (!out) throw error("write failed: " + path.string());
}

std::vector<std::filesystem::path> write_slice_pack(
    const std::filesystem::path& dir, std::size_t row_index, const SlicePack& pack) {
  const std::string row = std::to_string(row_index);
  std::vector<std::filesystem::path> paths;
  const auto emit = [&](const std::string& plane, const SliceImage& img) {
    auto path = dir / (row + "_" + plane + ".pgm");
    write_slice_pgm(path, img);
    paths.push_back(std::move(path));
  };
  emit("axial0", pack.axial[0]);
  emit("axial1", pack.axial[1]);
  emit("axial2", pack.axial[2]);
  emit("coronal", pack.coronal);
  emit("sagittal", pack.sagittal);
  return paths;
}

}  // namespace trialforge

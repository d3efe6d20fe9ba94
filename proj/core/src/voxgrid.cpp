#include "trialforge/voxgrid.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

namespace trialforge {

template class Volume<std::uint8_t>;
template class Volume<std::int16_t>;

namespace {

constexpr char kMagic[] = "ITSV1";

template <typename T>
VoxelIndex nearest_voxel_impl(const Volume<T>& vol, const WorldPoint& p) {
  const auto& d = vol.dims();
  const auto& s = vol.spacing();
  auto snap = [](double w, double sp, int n) {
    auto i = static_cast<int>(std::llround(w / sp));
    return std::clamp(i, 0, n - 1);
  };
  return {snap(p.x, s.sx, d.nx), snap(p.y, s.sy, d.ny), snap(p.z, s.sz, d.nz)};
}

std::string header_line(const Dims& d, const Spacing& s, const char* dtype) {
  std::string h = "dims=";
  h += std::to_string(d.nx);
  h += ',';
  h += std::to_string(d.ny);
  h += ',';
  h += std::to_string(d.nz);
  h += ";spacing=";
  h += shortest_double(s.sx);
  h += ',';
  h += shortest_double(s.sy);
  h += ',';
  h += shortest_double(s.sz);
  h += ";dtype=";
  h += dtype;
  return h;
}

void write_itsv(const std::filesystem::path& path, const Dims& d, const Spacing& s,
                const char* dtype, const void* payload, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw error("cannot open for writing: " + path.string());
  out << kMagic << '\n' << header_line(d, s, dtype) << '\n';
  out.write(static_cast<const char*>(payload), static_cast<std::streamsize>(bytes));
  if (!out) throw error("short write: " + path.string());
}

// Payload is stored little-endian; hosts here are little-endian, but keep the
// swap path honest for portability.
void to_little_endian_i16(std::vector<std::int16_t>& v) {
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& x : v) {
      auto u = static_cast<std::uint16_t>(x);
      x = static_cast<std::int16_t>(static_cast<std::uint16_t>((u >> 8) | (u << 8)));
    }
  } else {
    (void)v;
  }
}

struct ParsedHeader {
  Dims dims;
  Spacing spacing;
  std::string dtype;
};

long long parse_int(std::string_view& sv) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), value);
  if (ec != std::errc()) throw error("ITSV header: bad integer");
  sv.remove_prefix(static_cast<std::size_t>(ptr - sv.data()));
  return value;
}

double parse_double(std::string_view& sv) {
  double value = 0;
  auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), value);
  if (ec != std::errc()) throw error("ITSV header: bad number");
  sv.remove_prefix(static_cast<std::size_t>(ptr - sv.data()));
  return value;
}

void expect(std::string_view& sv, std::string_view token) {
  if (!sv.starts_with(token)) throw error("ITSV header: expected '" + std::string(token) + "'");
  sv.remove_prefix(token.size());
}

ParsedHeader parse_header(std::string_view line) {
  ParsedHeader h;
  expect(line, "dims=");
  h.dims.nx = static_cast<int>(parse_int(line));
  expect(line, ",");
  h.dims.ny = static_cast<int>(parse_int(line));
  expect(line, ",");
  h.dims.nz = static_cast<int>(parse_int(line));
  expect(line, ";spacing=");
  h.spacing.sx = parse_double(line);
  expect(line, ",");
  h.spacing.sy = parse_double(line);
  expect(line, ",");
  h.spacing.sz = parse_double(line);
  expect(line, ";dtype=");
  if (line == "u8" || line == "i16") {
    h.dtype = line;
  } else {
    throw error("ITSV header: unknown dtype");
  }
  if (h.dims.nx <= 0 || h.dims.ny <= 0 || h.dims.nz <= 0)
    throw error("ITSV header: dims must be positive");
  if (h.spacing.sx <= 0 || h.spacing.sy <= 0 || h.spacing.sz <= 0)
    throw error("ITSV header: spacing must be positive");
  return h;
}

}  // namespace

template <>
VoxelIndex Volume<std::uint8_t>::nearest_voxel(const WorldPoint& p) const {
  return nearest_voxel_impl(*this, p);
}
template <>
VoxelIndex Volume<std::int16_t>::nearest_voxel(const WorldPoint& p) const {
  return nearest_voxel_impl(*this, p);
}

std::string shortest_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw error("cannot format double");
  return std::string(buf.data(), ptr);
}

void write_volume(const LabelVolume& vol, const std::filesystem::path& path) {
  write_itsv(path, vol.dims(), vol.spacing(), "u8", vol.voxels().data(), vol.size());
}

void write_volume(const HUVolume& vol, const std::filesystem::path& path) {
  for (auto x : vol.voxels()) {
    if (x < kHUMin || x > kHUMax) throw error("HU value out of range on write");
  }
  std::vector<std::int16_t> payload(vol.voxels().begin(), vol.voxels().end());
  to_little_endian_i16(payload);
  write_itsv(path, vol.dims(), vol.spacing(), "i16", payload.data(),
             payload.size() * sizeof(std::int16_t));
}

std::variant<LabelVolume, HUVolume> read_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open: " + path.string());

  std::string magic, header;
  if (!std::getline(in, magic) || magic != kMagic)
    throw error("not an ITSV file: " + path.string());
  if (!std::getline(in, header)) throw error("ITSV: missing header line");
  const ParsedHeader h = parse_header(header);

  const std::size_t n = h.dims.count();
  const std::size_t elem = h.dtype == "u8" ? 1 : 2;
  std::vector<char> payload(n * elem);
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload.size())
    throw error("ITSV: truncated payload");
  if (in.get() != std::ifstream::traits_type::eof())
    throw error("ITSV: trailing bytes after payload");

  if (h.dtype == "u8") {
    LabelVolume vol(h.dims, h.spacing);
    std::memcpy(vol.voxels().data(), payload.data(), payload.size());
    return vol;
  }
  HUVolume vol(h.dims, h.spacing);
  std::memcpy(vol.voxels().data(), payload.data(), payload.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& x : vol.voxels()) {
      auto u = static_cast<std::uint16_t>(x);
      x = static_cast<std::int16_t>(static_cast<std::uint16_t>((u >> 8) | (u << 8)));
    }
  }
  for (auto x : vol.voxels()) {
    if (x < kHUMin || x > kHUMax) throw error("ITSV: HU value out of range");
  }
  return vol;
}

LabelVolume read_label_volume(const std::filesystem::path& path) {
  auto v = read_volume(path);
  if (auto* lv = std::get_if<LabelVolume>(&v)) return std::move(*lv);
  throw error("expected u8 volume: " + path.string());
}

HUVolume read_hu_volume(const std::filesystem::path& path) {
  auto v = read_volume(path);
  if (auto* hv = std::get_if<HUVolume>(&v)) return std::move(*hv);
  throw error("expected i16 volume: " + path.string());
}

LabelVolume resample_mask(const LabelVolume& mask, const Spacing& src,
                          const Spacing& dst, double alpha) {
  if (alpha < kAlphaMin || alpha > kAlphaMax)
    throw error("resample alpha out of range");
  auto out_extent = [&](int n, double s, double d) {
    return static_cast<int>(std::max<long long>(
        1, 1 + std::llround((n - 1) * alpha * s / d)));
  };
  const auto& di = mask.dims();
  Dims od{out_extent(di.nx, src.sx, dst.sx), out_extent(di.ny, src.sy, dst.sy),
          out_extent(di.nz, src.sz, dst.sz)};
  LabelVolume out(od, dst);
  auto src_index = [&](int i, double d, double s, int n) {
    auto j = static_cast<int>(std::llround(i * d / (alpha * s)));
    return std::clamp(j, 0, n - 1);
  };
  for (int z = 0; z < od.nz; ++z) {
    const int zi = src_index(z, dst.sz, src.sz, di.nz);
    for (int y = 0; y < od.ny; ++y) {
      const int yi = src_index(y, dst.sy, src.sy, di.ny);
      for (int x = 0; x < od.nx; ++x) {
        out.at(x, y, z) = mask.at(src_index(x, dst.sx, src.sx, di.nx), yi, zi);
      }
    }
  }
  return out;
}

double surface_distance(const LabelVolume& vol, const WorldPoint& p, std::uint8_t label) {
  const std::array<std::uint8_t, 1> labels{label};
  auto boundary = boundary_voxels(vol, labels);
  return min_distance_mm(boundary, vol.spacing(), p);
}

std::vector<VoxelIndex> boundary_voxels(const LabelVolume& vol,
                                        std::span<const std::uint8_t> labels,
                                        std::span<const std::uint8_t> transparent) {
  std::array<bool, 256> in_set{};
  std::array<bool, 256> interior{};
  for (auto l : labels) {
    in_set[l] = true;
    interior[l] = true;
  }
  for (auto l : transparent) interior[l] = true;

  static constexpr std::array<std::array<int, 3>, 6> kFaces{
      {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};

  std::vector<VoxelIndex> out;
  const auto& d = vol.dims();
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        if (!in_set[vol.at(x, y, z)]) continue;
        for (const auto& f : kFaces) {
          const int nx = x + f[0], ny = y + f[1], nz = z + f[2];
          if (!vol.in_bounds(nx, ny, nz) || !interior[vol.at(nx, ny, nz)]) {
            out.push_back({x, y, z});
            break;
          }
        }
      }
    }
  }
  return out;
}

double min_distance_mm(std::span<const VoxelIndex> voxels, const Spacing& spacing,
                       const WorldPoint& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& v : voxels) {
    const double dx = v.x * spacing.sx - p.x;
    const double dy = v.y * spacing.sy - p.y;
    const double dz = v.z * spacing.sz - p.z;
    best = std::min(best, dx * dx + dy * dy + dz * dz);
  }
  return std::sqrt(best);
}

LabelVolume largest_component(const LabelVolume& mask) {
  const auto& d = mask.dims();
  std::vector<std::int32_t> comp(mask.size(), -1);
  std::size_t best_size = 0;
  std::int32_t best_id = -1;
  std::int32_t next_id = 0;

  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < mask.size(); ++seed) {
    if (mask.voxels()[seed] == 0 || comp[seed] != -1) continue;
    const std::int32_t id = next_id++;
    std::size_t size = 0;
    stack.assign(1, seed);
    comp[seed] = id;
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      ++size;
      const auto v = mask.unlinear(cur);
      for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0 && dz == 0) continue;
            const int nx = v.x + dx, ny = v.y + dy, nz = v.z + dz;
            if (!mask.in_bounds(nx, ny, nz)) continue;
            const std::size_t ni = mask.linear(nx, ny, nz);
            if (mask.voxels()[ni] == 0 || comp[ni] != -1) continue;
            comp[ni] = id;
            stack.push_back(ni);
          }
        }
      }
    }
    // Seeds are scanned in ascending linear order, so on a size tie the
    // earlier component (smallest minimal linear index) is kept.
    if (size > best_size) {
      best_size = size;
      best_id = id;
    }
  }

  LabelVolume out(d, mask.spacing());
  if (best_id >= 0) {
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (comp[i] == best_id) out.voxels()[i] = mask.voxels()[i];
    }
  }
  return out;
}

double equivalent_sphere_diameter_mm(const LabelVolume& mask) {
  const auto& s = mask.spacing();
  const double voxel_mm3 = s.sx * s.sy * s.sz;
  const double volume = static_cast<double>(count_nonzero(mask)) * voxel_mm3;
  if (volume <= 0) return 0.0;
  return std::cbrt(6.0 * volume / std::numbers::pi);
}

WorldPoint mask_centroid(const LabelVolume& mask) {
  double sx = 0, sy = 0, sz = 0;
  std::size_t n = 0;
  const auto& d = mask.dims();
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        if (mask.at(x, y, z) == 0) continue;
        sx += x;
        sy += y;
        sz += z;
        ++n;
      }
    }
  }
  if (n == 0) throw error("centroid of empty mask");
  const auto& sp = mask.spacing();
  const double inv = 1.0 / static_cast<double>(n);
  return {sx * inv * sp.sx, sy * inv * sp.sy, sz * inv * sp.sz};
}

namespace {

std::optional<VoxelBox> bbox_where(const LabelVolume& vol, const bool (&in_set)[256]) {
  const auto& d = vol.dims();
  VoxelBox box{{d.nx, d.ny, d.nz}, {-1, -1, -1}};
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        if (!in_set[vol.at(x, y, z)]) continue;
        box.lo.x = std::min(box.lo.x, x);
        box.lo.y = std::min(box.lo.y, y);
        box.lo.z = std::min(box.lo.z, z);
        box.hi.x = std::max(box.hi.x, x);
        box.hi.y = std::max(box.hi.y, y);
        box.hi.z = std::max(box.hi.z, z);
      }
    }
  }
  if (box.hi.x < 0) return std::nullopt;
  return box;
}

}  // namespace

std::optional<VoxelBox> labels_bbox(const LabelVolume& vol,
                                    std::span<const std::uint8_t> labels) {
  bool in_set[256] = {};
  for (auto l : labels) in_set[l] = true;
  return bbox_where(vol, in_set);
}

std::optional<VoxelBox> label_bbox(const LabelVolume& vol, std::uint8_t label) {
  return labels_bbox(vol, std::span(&label, 1));
}

std::optional<VoxelBox> mask_bbox(const LabelVolume& mask) {
  bool in_set[256];
  std::fill(std::begin(in_set), std::end(in_set), true);
  in_set[0] = false;
  return bbox_where(mask, in_set);
}

std::size_t count_nonzero(const LabelVolume& mask) {
  std::size_t n = 0;
  for (auto v : mask.voxels()) n += v != 0;
  return n;
}

std::size_t count_label(const LabelVolume& vol, std::uint8_t label) {
  std::size_t n = 0;
  for (auto v : vol.voxels()) n += v == label;
  return n;
}

}  // namespace trialforge

#include "trialforge/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace trialforge {

namespace {

struct Frac3 {
  double x, y, z;
};

// All structure geometry is laid out in fractional coordinates of the volume
// extent so the same anatomy scales with dims and spacing. Radii are fractions
// of the smallest extent.
struct Ellipsoid {
  Frac3 center;
  Frac3 semi;  // semi-axes, fractional
  [[nodiscard]] bool contains(const Frac3& p) const {
    const double dx = (p.x - center.x) / semi.x;
    const double dy = (p.y - center.y) / semi.y;
    const double dz = (p.z - center.z) / semi.z;
    return dx * dx + dy * dy + dz * dz <= 1.0;
  }
};

struct Tube {
  Frac3 a, b;
  double radius;  // fraction of min extent
};

struct Extent {
  double ex, ey, ez, emin;
};

Frac3 to_mm(const Frac3& f, const Extent& e) {
  return {f.x * e.ex, f.y * e.ey, f.z * e.ez};
}

double segment_distance_mm(const Frac3& p_mm, const Frac3& a_mm, const Frac3& b_mm) {
  const double vx = b_mm.x - a_mm.x, vy = b_mm.y - a_mm.y, vz = b_mm.z - a_mm.z;
  const double wx = p_mm.x - a_mm.x, wy = p_mm.y - a_mm.y, wz = p_mm.z - a_mm.z;
  const double vv = vx * vx + vy * vy + vz * vz;
  double t = vv > 0 ? (wx * vx + wy * vy + wz * vz) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = wx - t * vx, dy = wy - t * vy, dz = wz - t * vz;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Paints `label` over voxels within the tube that currently hold a label from
// `over`; scans only the tube's bounding box.
void paint_tube(LabelVolume& vol, const Tube& tube, std::uint8_t label,
                std::span<const std::uint8_t> over, const Extent& ext) {
  std::array<bool, 256> writable{};
  for (auto l : over) writable[l] = true;

  const Frac3 a = to_mm(tube.a, ext);
  const Frac3 b = to_mm(tube.b, ext);
  const double r = tube.radius * ext.emin;
  const auto& d = vol.dims();
  const auto& s = vol.spacing();

  const double lo[3] = {std::min(a.x, b.x) - r, std::min(a.y, b.y) - r,
                        std::min(a.z, b.z) - r};
  const double hi[3] = {std::max(a.x, b.x) + r, std::max(a.y, b.y) + r,
                        std::max(a.z, b.z) + r};
  const int x0 = std::max(0, static_cast<int>(std::floor(lo[0] / s.sx)));
  const int y0 = std::max(0, static_cast<int>(std::floor(lo[1] / s.sy)));
  const int z0 = std::max(0, static_cast<int>(std::floor(lo[2] / s.sz)));
  const int x1 = std::min(d.nx - 1, static_cast<int>(std::ceil(hi[0] / s.sx)));
  const int y1 = std::min(d.ny - 1, static_cast<int>(std::ceil(hi[1] / s.sy)));
  const int z1 = std::min(d.nz - 1, static_cast<int>(std::ceil(hi[2] / s.sz)));

  for (int z = z0; z <= z1; ++z) {
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (!writable[vol.at(x, y, z)]) continue;
        const Frac3 p{x * s.sx, y * s.sy, z * s.sz};
        if (segment_distance_mm(p, a, b) <= r) vol.at(x, y, z) = label;
      }
    }
  }

  // A very coarse grid can miss a thin tube entirely; walking the centerline
  // guarantees the structure exists wherever it may legally be painted.
  const int steps = 64;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const WorldPoint p{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y),
                       a.z + t * (b.z - a.z)};
    const auto v = vol.nearest_voxel(p);
    if (writable[vol.at(v)]) vol.at(v) = label;
  }
}

void paint_ellipsoid(LabelVolume& vol, const Ellipsoid& e, std::uint8_t label,
                     std::span<const std::uint8_t> over) {
  std::array<bool, 256> writable{};
  for (auto l : over) writable[l] = true;
  const auto& d = vol.dims();
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        if (!writable[vol.at(x, y, z)]) continue;
        const Frac3 f{(x + 0.5) / d.nx, (y + 0.5) / d.ny, (z + 0.5) / d.nz};
        if (e.contains(f)) vol.at(x, y, z) = label;
      }
    }
  }
}

// Approximate distance (mm, voxel center to voxel center) from each lung
// voxel to the nearest non-lung voxel, by a two-pass 26-neighbour chamfer
// with anisotropic step weights. Used only to propose nodule centers; exact
// containment is verified afterwards.
std::vector<float> lung_depth_mm(const LabelVolume& anatomy) {
  constexpr float kInf = 1e30f;
  std::array<bool, 256> is_lung{};
  for (auto l : labels::lobes) is_lung[l] = true;

  const auto& d = anatomy.dims();
  const auto& s = anatomy.spacing();
  std::vector<float> dist(anatomy.size());
  for (std::size_t i = 0; i < anatomy.size(); ++i)
    dist[i] = is_lung[anatomy.voxels()[i]] ? kInf : 0.0f;

  struct Step {
    int dx, dy, dz;
    float w;
  };
  std::vector<Step> half;
  for (int dz = -1; dz <= 0; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dz == 0 && (dy > 0 || (dy == 0 && dx >= 0))) continue;
        half.push_back({dx, dy, dz,
                        static_cast<float>(std::sqrt(dx * s.sx * dx * s.sx +
                                                     dy * s.sy * dy * s.sy +
                                                     dz * s.sz * dz * s.sz))});
      }
    }
  }

  auto relax = [&](int x, int y, int z, int sign) {
    const std::size_t i = anatomy.linear(x, y, z);
    float best = dist[i];
    for (const auto& st : half) {
      const int nx = x + sign * st.dx, ny = y + sign * st.dy, nz = z + sign * st.dz;
      if (nx < 0 || ny < 0 || nz < 0 || nx >= d.nx || ny >= d.ny || nz >= d.nz) continue;
      const float cand = dist[anatomy.linear(nx, ny, nz)] + st.w;
      if (cand < best) best = cand;
    }
    dist[i] = best;
  };

  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) relax(x, y, z, 1);
  for (int z = d.nz - 1; z >= 0; --z)
    for (int y = d.ny - 1; y >= 0; --y)
      for (int x = d.nx - 1; x >= 0; --x) relax(x, y, z, -1);
  return dist;
}

// Lung voxels bucketed by whole-mm depth, with suffix counts so "uniform
// among voxels at least `need` mm deep" is a single bounded draw.
class DepthIndex {
 public:
  explicit DepthIndex(const std::vector<float>& depth) {
    for (std::size_t i = 0; i < depth.size(); ++i) {
      if (depth[i] <= 0.0f) continue;
      const auto bin = std::min<std::size_t>(
          kBins - 1, static_cast<std::size_t>(depth[i]));
      buckets_[bin].push_back(static_cast<std::uint32_t>(i));
    }
    std::uint64_t acc = 0;
    for (std::size_t b = kBins; b-- > 0;) {
      acc += buckets_[b].size();
      suffix_[b] = acc;
    }
  }

  // Number of candidate centers at depth >= need (by bucket floor).
  [[nodiscard]] std::uint64_t count_at_least(double need) const {
    const auto b = std::min<std::size_t>(
        kBins - 1, static_cast<std::size_t>(std::max(0.0, std::ceil(need))));
    return suffix_[b];
  }

  [[nodiscard]] std::uint32_t pick(double need, RandomStream& rng) const {
    const auto b0 = std::min<std::size_t>(
        kBins - 1, static_cast<std::size_t>(std::max(0.0, std::ceil(need))));
    std::uint64_t k = rng.uniform_below(suffix_[b0]);
    for (std::size_t b = kBins; b-- > b0;) {
      if (k < buckets_[b].size()) return buckets_[b][static_cast<std::size_t>(k)];
      k -= buckets_[b].size();
    }
    return buckets_[b0].back();  // unreachable when counts are consistent
  }

 private:
  static constexpr std::size_t kBins = 128;
  std::array<std::vector<std::uint32_t>, kBins> buckets_{};
  std::array<std::uint64_t, kBins> suffix_{};
};

}  // namespace

SizeSampler bin_mixture_sampler(const std::array<double, 6>& bin_weights,
                                double cap_mm) {
  static constexpr std::array<double, 6> kLo{2.6, 4.0, 6.0, 10.0, 20.0, 30.0};
  static constexpr std::array<double, 6> kHi{4.0, 6.0, 10.0, 20.0, 30.0, 100.0};
  double total = 0;
  for (double w : bin_weights) {
    if (w < 0) throw error("bin weight must be non-negative");
    total += w;
  }
  if (total <= 0) throw error("bin weights must not all be zero");

  return [bin_weights, total, cap_mm](RandomStream& rng) {
    const double u = rng.next_unit() * total;
    double acc = 0;
    std::size_t bin = 5;
    for (std::size_t i = 0; i < 6; ++i) {
      acc += bin_weights[i];
      if (u < acc) {
        bin = i;
        break;
      }
    }
    const double lo = kLo[bin];
    const double hi = std::min(kHi[bin], cap_mm);
    return lo + rng.next_unit() * (std::max(hi, lo) - lo);
  };
}

PhantomPatient generate_phantom(std::uint64_t seed, Dims dims, Spacing spacing) {
  if (dims.nx < 32 || dims.ny < 32 || dims.nz < 32)
    throw error("phantom dims must be at least 32 per axis");

  RandomStream rng(seed, "anatomy");
  auto jitter = [&rng](double scale) { return (rng.next_unit() - 0.5) * 2.0 * scale; };

  // Lobe cut planes, jittered per patient so lobe shapes vary across a cohort.
  const double right_cut_low = 0.40 + jitter(0.03);
  const double right_cut_high = 0.70 + jitter(0.03);
  const double right_ap_cut = 0.55 + jitter(0.03);
  const double left_cut = 0.50 + jitter(0.03);

  // Lung semi-axes: right scaled for a ~1.1 volume ratio; per-axis jitter kept
  // small enough that the ratio stays above 1.
  const double right_scale = std::cbrt(1.1);
  const Ellipsoid right_lung{
      {0.30, 0.48, 0.52},
      {0.16 * right_scale * (1 + jitter(0.015)), 0.22 * right_scale * (1 + jitter(0.015)),
       0.32 * right_scale * (1 + jitter(0.015))}};
  const Ellipsoid left_lung{{0.70, 0.48, 0.52},
                            {0.16 * (1 + jitter(0.015)), 0.22 * (1 + jitter(0.015)),
                             0.32 * (1 + jitter(0.015))}};
  const Ellipsoid body{{0.50, 0.50, 0.50}, {0.46, 0.38, 0.48}};

  PhantomPatient patient;
  patient.anatomy = LabelVolume(dims, spacing);
  LabelVolume& vol = patient.anatomy;

  // Base pass: background, body shell, and the two lungs cut into lobes.
  // Lobe rules use the z fraction within each lung's own vertical span.
  const double right_z0 = right_lung.center.z - right_lung.semi.z;
  const double right_span = 2 * right_lung.semi.z;
  const double left_z0 = left_lung.center.z - left_lung.semi.z;
  const double left_span = 2 * left_lung.semi.z;
  const double right_y0 = right_lung.center.y - right_lung.semi.y;
  const double right_yspan = 2 * right_lung.semi.y;

  for (int z = 0; z < dims.nz; ++z) {
    for (int y = 0; y < dims.ny; ++y) {
      for (int x = 0; x < dims.nx; ++x) {
        const Frac3 f{(x + 0.5) / dims.nx, (y + 0.5) / dims.ny, (z + 0.5) / dims.nz};
        std::uint8_t label = labels::background;
        if (body.contains(f)) label = labels::body;
        if (right_lung.contains(f)) {
          const double zf = (f.z - right_z0) / right_span;
          if (zf >= right_cut_high) {
            label = labels::rul;
          } else if (zf < right_cut_low) {
            label = labels::rll;
          } else {
            const double yf = (f.y - right_y0) / right_yspan;
            label = yf < right_ap_cut ? labels::rml : labels::rll;
          }
        } else if (left_lung.contains(f)) {
          const double zf = (f.z - left_z0) / left_span;
          label = zf >= left_cut ? labels::lul : labels::lll;
        }
        vol.at(x, y, z) = label;
      }
    }
  }

  const Extent ext{dims.nx * spacing.sx, dims.ny * spacing.sy, dims.nz * spacing.sz,
                   std::min({dims.nx * spacing.sx, dims.ny * spacing.sy,
                             dims.nz * spacing.sz})};
  const std::array<std::uint8_t, 1> over_body{labels::body};
  const std::array<std::uint8_t, 6> over_lungs{labels::body, labels::rul, labels::rml,
                                               labels::rll, labels::lul, labels::lll};

  // Mediastinum: carved from the body shell only, so lungs keep their shape.
  paint_ellipsoid(vol, {{0.55, 0.42, 0.36}, {0.10, 0.09, 0.11}}, labels::heart,
                  over_body);
  paint_tube(vol, {{0.53, 0.56, 0.28}, {0.53, 0.56, 0.78}, 0.022}, labels::aorta,
             over_body, ext);
  paint_tube(vol, {{0.505, 0.56, 0.22}, {0.505, 0.56, 0.86}, 0.011}, labels::esophagus,
             over_body, ext);
  paint_tube(vol, {{0.42, 0.47, 0.46}, {0.58, 0.47, 0.46}, 0.013},
             labels::pulmonary_vein, over_body, ext);
  paint_tube(vol, {{0.43, 0.42, 0.52}, {0.43, 0.42, 0.78}, 0.014}, labels::svc,
             over_body, ext);
  paint_tube(vol, {{0.50, 0.44, 0.70}, {0.50, 0.44, 0.92}, 0.020}, labels::trachea,
             over_body, ext);

  // Airway tree: carina at the trachea foot, main bronchi to each hilum, then
  // a short run toward each lower lobe. Painted over lung labels as well.
  const Frac3 carina{0.50, 0.44, 0.70};
  paint_tube(vol, {carina, {0.30, 0.48, 0.52}, 0.016}, labels::airway, over_lungs, ext);
  paint_tube(vol, {carina, {0.70, 0.48, 0.52}, 0.016}, labels::airway, over_lungs, ext);
  paint_tube(vol, {{0.30, 0.48, 0.52}, {0.28, 0.50, 0.36}, 0.012}, labels::airway,
             over_lungs, ext);
  paint_tube(vol, {{0.70, 0.48, 0.52}, {0.72, 0.50, 0.36}, 0.012}, labels::airway,
             over_lungs, ext);

  for (auto l : labels::lobes) {
    if (count_label(vol, l) == 0)
      throw error(std::string("phantom too small: lobe ") + labels::name(l) + " empty");
  }
  return patient;
}

PhantomPatient seed_nodules(PhantomPatient patient, std::uint64_t seed, int count,
                            const SizeSampler& size_sampler, double malignancy_rate) {
  if (count < 0) throw error("nodule count must be non-negative");
  if (count == 0) return patient;

  RandomStream rng(seed, "nodules");
  const LabelVolume& anatomy = patient.anatomy;
  const auto& dims = anatomy.dims();
  const auto& sp = anatomy.spacing();

  // The lung exterior is fixed while nodules are placed strictly inside it,
  // so the pleural boundary can be computed once. Airway channels are
  // transparent: they do not belong to the lung set but do not expose it.
  const std::array<std::uint8_t, 1> transparent{labels::airway};
  const auto pleura = boundary_voxels(anatomy, labels::lobes, transparent);

  // Centers are proposed uniformly among lung voxels deep enough for the
  // sampled ellipsoid, then verified exactly; the depth map does not know
  // about fissures or earlier nodules, so rejections remain possible.
  const DepthIndex depth_index(lung_depth_mm(anatomy));

  // Voxels already claimed by earlier nodules of this patient.
  std::vector<bool> occupied(anatomy.size(), false);

  const bool unlabeled = patient.dataset_tag == kUnlabeledTag;

  for (int i = 0; i < count; ++i) {
    const double diameter = size_sampler(rng);
    if (diameter <= 0 || diameter > 100) throw error("sampled diameter out of (0,100]");
    const double rx = 0.7 + rng.next_unit() * 0.6;
    const double ry = 0.7 + rng.next_unit() * 0.6;
    const double rz = 0.7 + rng.next_unit() * 0.6;
    const double norm = std::cbrt(rx * ry * rz);
    const double ax = (diameter / 2) * rx / norm;
    const double ay = (diameter / 2) * ry / norm;
    const double az = (diameter / 2) * rz / norm;
    // Deep enough for the widest semi-axis and the 2 mm pleural floor.
    const double need = std::max({ax, ay, az, 2.0});

    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      if (depth_index.count_at_least(need) == 0) break;
      const auto center_lin = depth_index.pick(need, rng);
      const VoxelIndex c = anatomy.unlinear(center_lin);
      const std::uint8_t lobe_id = anatomy.voxels()[center_lin];
      const auto lobe_opt = lobe_from_label(lobe_id);
      if (!lobe_opt) continue;
      const Lobe lobe = *lobe_opt;

      // Rasterize: every voxel center inside the ellipsoid must carry the
      // lobe label and be free of earlier nodules.
      const int bx = static_cast<int>(std::ceil(ax / sp.sx)) + 1;
      const int by = static_cast<int>(std::ceil(ay / sp.sy)) + 1;
      const int bz = static_cast<int>(std::ceil(az / sp.sz)) + 1;
      std::vector<std::size_t> voxels;
      bool ok = true;
      for (int z = c.z - bz; z <= c.z + bz && ok; ++z) {
        for (int y = c.y - by; y <= c.y + by && ok; ++y) {
          for (int x = c.x - bx; x <= c.x + bx && ok; ++x) {
            const double dx = (x - c.x) * sp.sx / ax;
            const double dy = (y - c.y) * sp.sy / ay;
            const double dz = (z - c.z) * sp.sz / az;
            if (dx * dx + dy * dy + dz * dz > 1.0) continue;
            if (!anatomy.in_bounds(x, y, z)) {
              ok = false;
              break;
            }
            const std::size_t lin = anatomy.linear(x, y, z);
            if (anatomy.voxels()[lin] != lobe_id || occupied[lin]) {
              ok = false;
              break;
            }
            voxels.push_back(lin);
          }
        }
      }
      if (!ok) continue;
      if (voxels.empty()) {
        // Sub-voxel nodule: claim the center voxel alone.
        voxels.push_back(anatomy.linear(c.x, c.y, c.z));
      }

      LabelVolume mask(dims, sp);
      for (auto lin : voxels) mask.voxels()[lin] = labels::nodule;
      const WorldPoint centroid = mask_centroid(mask);
      if (min_distance_mm(pleura, sp, centroid) < 2.0) continue;

      for (auto lin : voxels) occupied[lin] = true;
      NoduleTruth truth;
      truth.diameter_mm = equivalent_sphere_diameter_mm(mask);
      truth.lobe = lobe;
      truth.centroid = centroid;
      if (unlabeled) {
        truth.malignancy = Malignancy::unlabeled;
      } else {
        truth.malignancy = rng.next_unit() < malignancy_rate ? Malignancy::malignant
                                                             : Malignancy::benign;
      }
      patient.nodule_masks.push_back(std::move(mask));
      patient.nodule_truth.push_back(truth);
      placed = true;
    }
    if (!placed) {
      char buf[96];
      std::snprintf(buf, sizeof buf,
                    "cannot place %.1f mm nodule after 1000 attempts", diameter);
      throw error(buf);
    }
  }
  return patient;
}

PhantomPatient cohort_patient(std::uint64_t seed, int index,
                              const CohortProfile& profile) {
  if (index < 0) throw error("patient index must be non-negative");
  if (profile.min_nodules < 0 || profile.max_nodules < profile.min_nodules)
    throw error("invalid nodule count range");

  const std::uint64_t patient_seed = seed ^ static_cast<std::uint64_t>(index);
  PhantomPatient p = generate_phantom(patient_seed, profile.dims, profile.spacing);

  char id[16];
  std::snprintf(id, sizeof id, "P%06d", index);
  p.patient_id = id;
  p.dataset_tag = kDatasetTags[static_cast<std::size_t>(index) % kDatasetTags.size()];

  RandomStream demo(patient_seed, "demo");
  p.sex = demo.next_unit() < profile.demographics.male_fraction ? 'M' : 'F';
  const auto& dm = profile.demographics;
  if (dm.age_kind == DemographicModel::AgeKind::uniform) {
    p.age_years = dm.age_a + demo.next_unit() * (dm.age_b - dm.age_a);
  } else {
    p.age_years = std::clamp(demo.normal(dm.age_a, dm.age_b), dm.age_lo, dm.age_hi);
  }

  RandomStream planner(patient_seed, "plan");
  int count = profile.min_nodules +
              static_cast<int>(planner.uniform_below(
                  static_cast<std::uint64_t>(profile.max_nodules - profile.min_nodules + 1)));
  double rate = profile.malignancy_rate;
  if (p.dataset_tag == kAllMalignantTag) {
    count = std::min(count, 1);
    rate = 1.0;
  }
  return seed_nodules(std::move(p), patient_seed, count,
                      bin_mixture_sampler(profile.bin_weights), rate);
}

std::vector<PhantomPatient> phantom_cohort(std::uint64_t seed, int n_patients,
                                           const CohortProfile& profile) {
  if (n_patients < 1) throw error("cohort needs at least one patient");
  std::vector<PhantomPatient> cohort;
  cohort.reserve(static_cast<std::size_t>(n_patients));
  for (int i = 0; i < n_patients; ++i) cohort.push_back(cohort_patient(seed, i, profile));
  return cohort;
}

}  // namespace trialforge

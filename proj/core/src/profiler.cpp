#include "trialforge/profiler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

namespace trialforge {

namespace {

// Thoracic structures checked for proximity and distance, label-id ascending.
constexpr std::array<std::uint8_t, 7> kStructureLabels{
    labels::airway, labels::heart,   labels::aorta,         labels::esophagus,
    labels::trachea, labels::pulmonary_vein, labels::svc};

constexpr double kNearbyOrganRadiusMm = 10.0;
constexpr double kLobeSnapRadiusMm = 10.0;

constexpr std::array<std::string_view, 54> kCoreColumns{
    "ct_path",
    "coordX", "coordY", "coordZ", "w", "h", "d",
    "nodule_mean_diam_mm", "nodule_vol_mm3",
    "organ_label_id", "organ_label_name", "nearby_organs_10mm", "lung_side",
    "lobe_name", "lung_zone", "central_peripheral",
    "cranio_caudal_pct", "mediolateral_pct", "anteroposterior_pct",
    "lobe_cc_pct", "lobe_ml_pct", "lobe_ap_pct",
    "dist_to_heart_mm", "dist_to_aorta_mm", "dist_to_esophagus_mm",
    "dist_to_trachea_mm", "dist_to_pulmonary_vein_mm", "dist_to_svc_mm",
    "pleural_distance_mm", "airway_distance_mm",
    "n_nodules_in_patient", "nearest_nodule_id", "nearest_nodule_dist_mm",
    "nearest_nodule_dx_mm", "nearest_nodule_dy_mm", "nearest_nodule_dz_mm",
    "all_nodule_ids", "all_nodule_dists_mm", "ipsilateral", "nearest_same_lobe",
    "bilateral_distribution",
    "reinsertion_valid", "reinsertion_lobe", "reinsertion_lung_side",
    "reinsertion_lung_zone", "reinsertion_lung_cc_pct", "reinsertion_lung_ml_pct",
    "reinsertion_lung_ap_pct", "reinsertion_lobe_cc_pct", "reinsertion_lobe_ml_pct",
    "reinsertion_lobe_ap_pct", "reinsertion_pleural_dist_mm",
    "reinsertion_airway_dist_mm", "reinsertion_diam_mm"};

struct LungFrame {
  VoxelBox whole;
  std::array<std::optional<VoxelBox>, 2> side_box;  // indexed by Side
  std::array<std::optional<VoxelBox>, 5> lobe_box;  // canonical lobe order
};

VoxelBox union_box(const VoxelBox& a, const VoxelBox& b) {
  return {{std::min(a.lo.x, b.lo.x), std::min(a.lo.y, b.lo.y), std::min(a.lo.z, b.lo.z)},
          {std::max(a.hi.x, b.hi.x), std::max(a.hi.y, b.hi.y), std::max(a.hi.z, b.hi.z)}};
}

// One scan for the per-lobe boxes; side and whole boxes are unions.
LungFrame lung_frame(const LabelVolume& anatomy) {
  const auto& d = anatomy.dims();
  LungFrame f{};
  std::array<VoxelBox, 5> box;
  std::array<bool, 5> seen{};
  box.fill({{d.nx, d.ny, d.nz}, {-1, -1, -1}});
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        const auto lobe = lobe_from_label(anatomy.at(x, y, z));
        if (!lobe) continue;
        auto& b = box[static_cast<int>(*lobe)];
        seen[static_cast<int>(*lobe)] = true;
        b.lo.x = std::min(b.lo.x, x);
        b.lo.y = std::min(b.lo.y, y);
        b.lo.z = std::min(b.lo.z, z);
        b.hi.x = std::max(b.hi.x, x);
        b.hi.y = std::max(b.hi.y, y);
        b.hi.z = std::max(b.hi.z, z);
      }
    }
  }
  std::optional<VoxelBox> whole;
  for (int i = 0; i < 5; ++i) {
    if (!seen[i]) continue;
    f.lobe_box[i] = box[i];
    const int side = static_cast<int>(lobe_side(static_cast<Lobe>(i)));
    auto& sb = f.side_box[side];
    sb = sb ? union_box(*sb, box[i]) : box[i];
    whole = whole ? union_box(*whole, box[i]) : box[i];
  }
  if (!whole) throw error("anatomy contains no lung lobe labels");
  f.whole = *whole;
  return f;
}

double axis_pct(double c, double lo_mm, double hi_mm) {
  if (hi_mm <= lo_mm) return 50.0;
  return std::clamp((c - lo_mm) / (hi_mm - lo_mm) * 100.0, 0.0, 100.0);
}

Zone zone_in(const VoxelBox& side_box, double cz, double sz_mm) {
  const double lo = side_box.lo.z * sz_mm, hi = side_box.hi.z * sz_mm;
  const double f = hi > lo ? (cz - lo) / (hi - lo) : 0.5;
  if (f < 1.0 / 3.0) return Zone::lower;
  if (f < 2.0 / 3.0) return Zone::middle;
  return Zone::upper;
}

// Central when the centroid is within a third of the lung's mediolateral
// extent of the hilum, taken as the medial face centre of the side box.
bool central_in(const VoxelBox& side_box, Side side, const WorldPoint& c,
                const Spacing& sp) {
  const double medial_x = (side == Side::right ? side_box.hi.x : side_box.lo.x) * sp.sx;
  const WorldPoint hilum{medial_x, (side_box.lo.y + side_box.hi.y) * 0.5 * sp.sy,
                         (side_box.lo.z + side_box.hi.z) * 0.5 * sp.sz};
  const double ml_extent = (side_box.hi.x - side_box.lo.x + 1) * sp.sx;
  return distance_mm(c, hilum) < ml_extent / 3.0;
}

// Lobe at the centroid voxel, else the nearest lobe voxel within the snap
// radius (world distance, ties by smallest linear index).
std::optional<Lobe> lobe_at(const LabelVolume& anatomy, const WorldPoint& c) {
  const VoxelIndex v = anatomy.nearest_voxel(c);
  if (auto l = lobe_from_label(anatomy.at(v))) return l;
  const auto& sp = anatomy.spacing();
  const auto& d = anatomy.dims();
  const int rx = static_cast<int>(std::ceil(kLobeSnapRadiusMm / sp.sx)) + 1;
  const int ry = static_cast<int>(std::ceil(kLobeSnapRadiusMm / sp.sy)) + 1;
  const int rz = static_cast<int>(std::ceil(kLobeSnapRadiusMm / sp.sz)) + 1;
  std::optional<Lobe> found;
  double best = kLobeSnapRadiusMm * kLobeSnapRadiusMm;
  for (int z = std::max(0, v.z - rz); z <= std::min(d.nz - 1, v.z + rz); ++z) {
    for (int y = std::max(0, v.y - ry); y <= std::min(d.ny - 1, v.y + ry); ++y) {
      for (int x = std::max(0, v.x - rx); x <= std::min(d.nx - 1, v.x + rx); ++x) {
        const auto lobe = lobe_from_label(anatomy.at(x, y, z));
        if (!lobe) continue;
        const double dx = x * sp.sx - c.x;
        const double dy = y * sp.sy - c.y;
        const double dz = z * sp.sz - c.z;
        const double d2 = dx * dx + dy * dy + dz * dz;
        if (d2 < best || (!found && d2 <= best)) {
          best = d2;
          found = lobe;
        }
      }
    }
  }
  return found;
}

Side side_of(const std::optional<Lobe>& lobe, const LungFrame& f, const WorldPoint& c,
             const Spacing& sp) {
  if (lobe) return lobe_side(*lobe);
  const auto& r = f.side_box[static_cast<int>(Side::right)];
  const auto& l = f.side_box[static_cast<int>(Side::left)];
  if (r && !l) return Side::right;
  if (l && !r) return Side::left;
  const double rc = (r->lo.x + r->hi.x) * 0.5 * sp.sx;
  const double lc = (l->lo.x + l->hi.x) * 0.5 * sp.sx;
  return std::abs(c.x - rc) <= std::abs(c.x - lc) ? Side::right : Side::left;
}

}  // namespace

std::vector<VoxelIndex> lung_boundary(const LabelVolume& anatomy) {
  const std::array<std::uint8_t, 6> lung{labels::rul, labels::rml, labels::rll,
                                         labels::lul, labels::lll, labels::nodule};
  const std::array<std::uint8_t, 1> transparent{labels::airway};
  return boundary_voxels(anatomy, lung, transparent);
}

namespace {

// Shared per-patient precomputation for profiling every nodule.
struct PatientContext {
  LungFrame frame;
  std::vector<VoxelIndex> lung_edge;
  std::array<std::vector<VoxelIndex>, 7> structure_edge;  // kStructureLabels order
};

PatientContext patient_context(const LabelVolume& anatomy) {
  PatientContext ctx{lung_frame(anatomy), lung_boundary(anatomy), {}};
  for (std::size_t s = 0; s < kStructureLabels.size(); ++s)
    ctx.structure_edge[s] = boundary_voxels(anatomy, std::span(&kStructureLabels[s], 1));
  return ctx;
}

NoduleProfile profile_one(const PhantomPatient& patient, int idx,
                          const PatientContext& ctx) {
  if (idx < 0 || idx >= static_cast<int>(patient.nodule_masks.size()))
    throw error("nodule index out of range for " + patient.patient_id);
  const auto& mask = patient.nodule_masks[idx];
  const auto& anatomy = patient.anatomy;
  if (!(mask.dims() == anatomy.dims()))
    throw error("nodule mask dims differ from anatomy");
  if (count_nonzero(mask) == 0) throw error("empty nodule mask");
  const auto& sp = anatomy.spacing();

  NoduleProfile p;
  p.patient_id = patient.patient_id;
  p.nodule_index = idx;
  p.dataset_tag = patient.dataset_tag;
  p.malignancy = idx < static_cast<int>(patient.nodule_truth.size())
                     ? patient.nodule_truth[idx].malignancy
                     : Malignancy::unlabeled;
  p.ct_path = patient.patient_id + "/anatomy.itsv";

  p.centroid = mask_centroid(mask);
  const auto box = mask_bbox(mask);
  p.bbox_w_mm = (box->hi.x - box->lo.x + 1) * sp.sx;
  p.bbox_h_mm = (box->hi.y - box->lo.y + 1) * sp.sy;
  p.bbox_d_mm = (box->hi.z - box->lo.z + 1) * sp.sz;

  p.mean_diameter_mm = equivalent_sphere_diameter_mm(mask);
  p.volume_mm3 =
      static_cast<double>(count_nonzero(mask)) * sp.sx * sp.sy * sp.sz;

  const std::uint8_t organ = anatomy.at(anatomy.nearest_voxel(p.centroid));
  p.organ_label_id = organ;
  p.organ_label_name = labels::name(organ);

  for (std::size_t s = 0; s < kStructureLabels.size(); ++s) {
    if (ctx.structure_edge[s].empty()) continue;  // label absent: leave missing
    const double dist = min_distance_mm(ctx.structure_edge[s], sp, p.centroid);
    switch (kStructureLabels[s]) {
      case labels::airway: p.airway_distance_mm = dist; break;
      case labels::heart: p.heart_distance_mm = dist; break;
      case labels::aorta: p.aorta_distance_mm = dist; break;
      case labels::esophagus: p.esophagus_distance_mm = dist; break;
      case labels::trachea: p.trachea_distance_mm = dist; break;
      case labels::pulmonary_vein: p.pulmonary_vein_distance_mm = dist; break;
      case labels::svc: p.svc_distance_mm = dist; break;
    }
    if (dist <= kNearbyOrganRadiusMm) p.nearby_organs.push_back(kStructureLabels[s]);
  }
  p.pleural_distance_mm = min_distance_mm(ctx.lung_edge, sp, p.centroid);

  p.lobe = lobe_at(anatomy, p.centroid);
  p.side = side_of(p.lobe, ctx.frame, p.centroid, sp);
  const auto& sbox = ctx.frame.side_box[static_cast<int>(p.side)];
  const VoxelBox zbox = sbox ? *sbox : ctx.frame.whole;
  p.zone = zone_in(zbox, p.centroid.z, sp.sz);
  p.central = central_in(zbox, p.side, p.centroid, sp);

  const auto& w = ctx.frame.whole;
  p.lung_cc_pct = axis_pct(p.centroid.z, w.lo.z * sp.sz, w.hi.z * sp.sz);
  p.lung_ml_pct = axis_pct(p.centroid.x, w.lo.x * sp.sx, w.hi.x * sp.sx);
  p.lung_ap_pct = axis_pct(p.centroid.y, w.lo.y * sp.sy, w.hi.y * sp.sy);
  if (p.lobe) {
    if (const auto& lb = ctx.frame.lobe_box[static_cast<int>(*p.lobe)]) {
      p.lobe_cc_pct = axis_pct(p.centroid.z, lb->lo.z * sp.sz, lb->hi.z * sp.sz);
      p.lobe_ml_pct = axis_pct(p.centroid.x, lb->lo.x * sp.sx, lb->hi.x * sp.sx);
      p.lobe_ap_pct = axis_pct(p.centroid.y, lb->lo.y * sp.sy, lb->hi.y * sp.sy);
    }
  }

  p.n_nodules_in_patient = static_cast<int>(patient.nodule_masks.size());
  p.blueprint = reinsertion_blueprint(p, anatomy);
  return p;
}

void append_reason(std::string& reasons, std::string_view what) {
  if (!reasons.empty()) reasons += "; ";
  reasons += what;
}

}  // namespace

std::span<const std::string_view> profile_core_columns() { return kCoreColumns; }

CompactFeatureVector NoduleProfile::compact() const {
  if (!lobe) throw error("compact vector requires a defined lobe");
  return {mean_diameter_mm, *lobe, malignancy, zone, side, central, pleural_distance_mm};
}

CompactFeatureVector compact_vector(const LabelVolume& anatomy, const LabelVolume& nodule,
                                    Malignancy malignancy) {
  if (!(nodule.dims() == anatomy.dims()))
    throw error("nodule mask dims differ from anatomy");
  if (count_nonzero(nodule) == 0) throw error("empty nodule mask");
  const LungFrame frame = lung_frame(anatomy);
  const auto& sp = anatomy.spacing();
  const WorldPoint c = mask_centroid(nodule);
  const auto lobe = lobe_at(anatomy, c);
  if (!lobe) throw error("nodule centroid has no lung lobe within 10 mm");
  const Side side = lobe_side(*lobe);
  const auto& sbox = frame.side_box[static_cast<int>(side)];
  const VoxelBox zbox = sbox ? *sbox : frame.whole;

  CompactFeatureVector v;
  v.diameter_mm = equivalent_sphere_diameter_mm(nodule);
  v.lobe = *lobe;
  v.malignancy = malignancy;
  v.zone = zone_in(zbox, c.z, sp.sz);
  v.side = side;
  v.central = central_in(zbox, side, c, sp);
  v.pleural_distance_mm = min_distance_mm(lung_boundary(anatomy), sp, c);
  return v;
}

NoduleProfile full_profile(const PhantomPatient& patient, int nodule_index) {
  return profile_one(patient, nodule_index, patient_context(patient.anatomy));
}

void inter_nodule_attrs(std::span<NoduleProfile> profiles) {
  if (profiles.empty()) throw error("inter_nodule_attrs needs at least one profile");
  for (const auto& p : profiles)
    if (p.patient_id != profiles.front().patient_id)
      throw error("inter_nodule_attrs given profiles from different patients");

  const int n = static_cast<int>(profiles.size());
  bool bilateral = false;
  for (const auto& p : profiles) bilateral |= p.side != profiles.front().side;

  for (auto& p : profiles) {
    p.n_nodules_in_patient = n;
    p.bilateral = bilateral;
    p.nearest_nodule_index.reset();
    p.nearest_nodule_distance_mm.reset();
    p.nearest_dx_mm.reset();
    p.nearest_dy_mm.reset();
    p.nearest_dz_mm.reset();
    p.nearest_ipsilateral.reset();
    p.nearest_same_lobe.reset();
    p.other_nodule_indices.clear();
    p.other_nodule_distances_mm.clear();
  }
  if (n == 1) return;

  std::vector<const NoduleProfile*> by_index;
  by_index.reserve(profiles.size());
  for (const auto& p : profiles) by_index.push_back(&p);
  std::sort(by_index.begin(), by_index.end(),
            [](const NoduleProfile* a, const NoduleProfile* b) {
              return a->nodule_index < b->nodule_index;
            });

  for (auto& p : profiles) {
    const NoduleProfile* nearest = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const auto* q : by_index) {
      if (q->nodule_index == p.nodule_index) continue;
      const double dist = distance_mm(p.centroid, q->centroid);
      p.other_nodule_indices.push_back(q->nodule_index);
      p.other_nodule_distances_mm.push_back(dist);
      if (dist < best) {
        best = dist;
        nearest = q;
      }
    }
    p.nearest_nodule_index = nearest->nodule_index;
    p.nearest_nodule_distance_mm = best;
    p.nearest_dx_mm = nearest->centroid.x - p.centroid.x;
    p.nearest_dy_mm = nearest->centroid.y - p.centroid.y;
    p.nearest_dz_mm = nearest->centroid.z - p.centroid.z;
    p.nearest_ipsilateral = nearest->side == p.side;
    p.nearest_same_lobe = p.lobe && nearest->lobe && *p.lobe == *nearest->lobe;
  }
}

ReinsertionBlueprint reinsertion_blueprint(const NoduleProfile& profile,
                                           const LabelVolume& anatomy) {
  ReinsertionBlueprint b;
  if (!profile.lobe) return b;  // undefined lobe assignment: invalid
  const auto lb = label_bbox(anatomy, lobe_label(*profile.lobe));
  if (!lb) return b;
  const auto& sp = anatomy.spacing();
  b.valid = true;
  b.lobe = *profile.lobe;
  b.side = profile.side;
  b.zone = profile.zone;
  b.lung_cc_pct = profile.lung_cc_pct;
  b.lung_ml_pct = profile.lung_ml_pct;
  b.lung_ap_pct = profile.lung_ap_pct;
  b.lobe_cc_pct = axis_pct(profile.centroid.z, lb->lo.z * sp.sz, lb->hi.z * sp.sz);
  b.lobe_ml_pct = axis_pct(profile.centroid.x, lb->lo.x * sp.sx, lb->hi.x * sp.sx);
  b.lobe_ap_pct = axis_pct(profile.centroid.y, lb->lo.y * sp.sy, lb->hi.y * sp.sy);
  b.pleural_target_mm = profile.pleural_distance_mm;
  b.airway_target_mm = profile.airway_distance_mm;
  b.diameter_mm = profile.mean_diameter_mm;
  return b;
}

Eligibility eligibility(const PhantomPatient& patient, const NoduleProfile& profile) {
  Eligibility e;
  std::string reasons;

  const bool mask_ok =
      profile.nodule_index >= 0 &&
      profile.nodule_index < static_cast<int>(patient.nodule_masks.size()) &&
      count_nonzero(patient.nodule_masks[profile.nodule_index]) > 0;
  e.donor_eligible = mask_ok && profile.blueprint.valid;
  if (!mask_ok)
    append_reason(reasons, "donor: missing or empty nodule mask");
  else if (!profile.blueprint.valid)
    append_reason(reasons, "donor: invalid reinsertion blueprint");

  bool present[256] = {};
  for (auto v : patient.anatomy.voxels()) present[v] = true;
  e.host_eligible = true;
  for (auto l : labels::lobes) {
    if (present[l]) continue;
    e.host_eligible = false;
    append_reason(reasons, std::string("host: missing ") + labels::name(l));
  }
  e.reason = reasons;
  return e;
}

std::vector<NoduleProfile> profile_patient(const PhantomPatient& patient) {
  std::vector<NoduleProfile> out;
  if (patient.nodule_masks.empty()) return out;
  const PatientContext ctx = patient_context(patient.anatomy);
  out.reserve(patient.nodule_masks.size());
  for (int i = 0; i < static_cast<int>(patient.nodule_masks.size()); ++i)
    out.push_back(profile_one(patient, i, ctx));
  inter_nodule_attrs(out);
  return out;
}

HostRecord host_record(const PhantomPatient& patient) {
  HostRecord h;
  h.patient_id = patient.patient_id;
  h.sex = patient.sex;
  h.age_years = patient.age_years;
  h.dataset_tag = patient.dataset_tag;
  h.n_nodules = static_cast<int>(patient.nodule_masks.size());
  const auto& sp = patient.anatomy.spacing();
  h.spacing = sp;
  h.host_eligible = true;
  for (int i = 0; i < 5; ++i) {
    const auto box = label_bbox(patient.anatomy, labels::lobes[i]);
    if (!box) {
      h.host_eligible = false;
      continue;
    }
    const double wx = (box->hi.x - box->lo.x + 1) * sp.sx;
    const double wy = (box->hi.y - box->lo.y + 1) * sp.sy;
    const double wz = (box->hi.z - box->lo.z + 1) * sp.sz;
    h.lobe_fit_mm[i] = std::min({wx, wy, wz});
    h.lobe_bbox[i] = *box;
  }
  return h;
}

// --- CSV ----------------------------------------------------------------------

namespace {

std::string opt_num(const std::optional<double>& v) {
  return v ? shortest_double(*v) : std::string();
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

std::string opt_bool(const std::optional<bool>& v) {
  return v ? bool_str(*v) : std::string();
}

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_num(const std::string& s, std::string_view what) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw error("bad numeric value for " + std::string(what) + ": '" + s + "'");
  return v;
}

int parse_int(const std::string& s, std::string_view what) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw error("bad integer value for " + std::string(what) + ": '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s, std::string_view what) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw error("bad boolean value for " + std::string(what) + ": '" + s + "'");
}

std::optional<double> parse_opt_num(const std::string& s, std::string_view what) {
  if (s.empty()) return std::nullopt;
  return parse_num(s, what);
}

std::optional<bool> parse_opt_bool(const std::string& s, std::string_view what) {
  if (s.empty()) return std::nullopt;
  return parse_bool(s, what);
}

Side parse_side(const std::string& s) {
  if (s == "right") return Side::right;
  if (s == "left") return Side::left;
  throw error("bad lung side: '" + s + "'");
}

std::uint8_t structure_from_name(const std::string& s) {
  for (auto l : kStructureLabels)
    if (s == labels::name(l)) return l;
  throw error("unknown structure name: '" + s + "'");
}

std::string profile_header() {
  std::string h = "patient_id,nodule_index";
  for (auto c : kCoreColumns) {
    h += ',';
    h += c;
  }
  h += ",dataset_tag,malignancy";
  return h;
}

std::vector<std::string> profile_fields(const NoduleProfile& p) {
  std::vector<std::string> f;
  f.reserve(58);
  f.push_back(p.patient_id);
  f.push_back(std::to_string(p.nodule_index));

  f.push_back(p.ct_path);
  f.push_back(shortest_double(p.centroid.x));
  f.push_back(shortest_double(p.centroid.y));
  f.push_back(shortest_double(p.centroid.z));
  f.push_back(shortest_double(p.bbox_w_mm));
  f.push_back(shortest_double(p.bbox_h_mm));
  f.push_back(shortest_double(p.bbox_d_mm));
  f.push_back(shortest_double(p.mean_diameter_mm));
  f.push_back(shortest_double(p.volume_mm3));
  f.push_back(std::to_string(p.organ_label_id));
  f.push_back(p.organ_label_name);
  std::string nearby;
  for (auto l : p.nearby_organs) {
    if (!nearby.empty()) nearby += ';';
    nearby += labels::name(l);
  }
  f.push_back(nearby);
  f.push_back(std::string(to_string(p.side)));
  f.push_back(p.lobe ? std::string(to_string(*p.lobe)) : std::string());
  f.push_back(std::string(to_string(p.zone)));
  f.push_back(p.central ? "central" : "peripheral");
  f.push_back(shortest_double(p.lung_cc_pct));
  f.push_back(shortest_double(p.lung_ml_pct));
  f.push_back(shortest_double(p.lung_ap_pct));
  f.push_back(opt_num(p.lobe_cc_pct));
  f.push_back(opt_num(p.lobe_ml_pct));
  f.push_back(opt_num(p.lobe_ap_pct));
  f.push_back(opt_num(p.heart_distance_mm));
  f.push_back(opt_num(p.aorta_distance_mm));
  f.push_back(opt_num(p.esophagus_distance_mm));
  f.push_back(opt_num(p.trachea_distance_mm));
  f.push_back(opt_num(p.pulmonary_vein_distance_mm));
  f.push_back(opt_num(p.svc_distance_mm));
  f.push_back(shortest_double(p.pleural_distance_mm));
  f.push_back(opt_num(p.airway_distance_mm));
  f.push_back(std::to_string(p.n_nodules_in_patient));
  f.push_back(p.nearest_nodule_index ? std::to_string(*p.nearest_nodule_index)
                                     : std::string());
  f.push_back(opt_num(p.nearest_nodule_distance_mm));
  f.push_back(opt_num(p.nearest_dx_mm));
  f.push_back(opt_num(p.nearest_dy_mm));
  f.push_back(opt_num(p.nearest_dz_mm));
  std::string ids, dists;
  for (std::size_t i = 0; i < p.other_nodule_indices.size(); ++i) {
    if (!ids.empty()) ids += ';';
    ids += std::to_string(p.other_nodule_indices[i]);
    if (!dists.empty()) dists += ';';
    dists += shortest_double(p.other_nodule_distances_mm[i]);
  }
  f.push_back(ids);
  f.push_back(dists);
  f.push_back(opt_bool(p.nearest_ipsilateral));
  f.push_back(opt_bool(p.nearest_same_lobe));
  f.push_back(bool_str(p.bilateral));

  const auto& b = p.blueprint;
  f.push_back(bool_str(b.valid));
  if (b.valid) {
    f.push_back(std::string(to_string(b.lobe)));
    f.push_back(std::string(to_string(b.side)));
    f.push_back(std::string(to_string(b.zone)));
    f.push_back(shortest_double(b.lung_cc_pct));
    f.push_back(shortest_double(b.lung_ml_pct));
    f.push_back(shortest_double(b.lung_ap_pct));
    f.push_back(shortest_double(b.lobe_cc_pct));
    f.push_back(shortest_double(b.lobe_ml_pct));
    f.push_back(shortest_double(b.lobe_ap_pct));
    f.push_back(shortest_double(b.pleural_target_mm));
    f.push_back(opt_num(b.airway_target_mm));
    f.push_back(shortest_double(b.diameter_mm));
  } else {
    for (int i = 0; i < 12; ++i) f.emplace_back();
  }

  f.push_back(p.dataset_tag);
  f.push_back(std::string(to_string(p.malignancy)));
  return f;
}

NoduleProfile profile_from_fields(const std::vector<std::string>& f) {
  NoduleProfile p;
  std::size_t i = 0;
  p.patient_id = f[i++];
  p.nodule_index = parse_int(f[i++], "nodule_index");

  p.ct_path = f[i++];
  p.centroid.x = parse_num(f[i++], "coordX");
  p.centroid.y = parse_num(f[i++], "coordY");
  p.centroid.z = parse_num(f[i++], "coordZ");
  p.bbox_w_mm = parse_num(f[i++], "w");
  p.bbox_h_mm = parse_num(f[i++], "h");
  p.bbox_d_mm = parse_num(f[i++], "d");
  p.mean_diameter_mm = parse_num(f[i++], "nodule_mean_diam_mm");
  p.volume_mm3 = parse_num(f[i++], "nodule_vol_mm3");
  p.organ_label_id = parse_int(f[i++], "organ_label_id");
  p.organ_label_name = f[i++];
  for (const auto& name : split_line(f[i], ';'))
    if (!name.empty()) p.nearby_organs.push_back(structure_from_name(name));
  ++i;
  p.side = parse_side(f[i++]);
  if (!f[i].empty()) {
    p.lobe = lobe_from_string(f[i]);
    if (!p.lobe) throw error("bad lobe name: '" + f[i] + "'");
  }
  ++i;
  if (auto z = zone_from_string(f[i])) p.zone = *z;
  else throw error("bad lung zone: '" + f[i] + "'");
  ++i;
  if (f[i] == "central") p.central = true;
  else if (f[i] == "peripheral") p.central = false;
  else throw error("bad central_peripheral: '" + f[i] + "'");
  ++i;
  p.lung_cc_pct = parse_num(f[i++], "cranio_caudal_pct");
  p.lung_ml_pct = parse_num(f[i++], "mediolateral_pct");
  p.lung_ap_pct = parse_num(f[i++], "anteroposterior_pct");
  p.lobe_cc_pct = parse_opt_num(f[i++], "lobe_cc_pct");
  p.lobe_ml_pct = parse_opt_num(f[i++], "lobe_ml_pct");
  p.lobe_ap_pct = parse_opt_num(f[i++], "lobe_ap_pct");
  p.heart_distance_mm = parse_opt_num(f[i++], "dist_to_heart_mm");
  p.aorta_distance_mm = parse_opt_num(f[i++], "dist_to_aorta_mm");
  p.esophagus_distance_mm = parse_opt_num(f[i++], "dist_to_esophagus_mm");
  p.trachea_distance_mm = parse_opt_num(f[i++], "dist_to_trachea_mm");
  p.pulmonary_vein_distance_mm = parse_opt_num(f[i++], "dist_to_pulmonary_vein_mm");
  p.svc_distance_mm = parse_opt_num(f[i++], "dist_to_svc_mm");
  p.pleural_distance_mm = parse_num(f[i++], "pleural_distance_mm");
  p.airway_distance_mm = parse_opt_num(f[i++], "airway_distance_mm");
  p.n_nodules_in_patient = parse_int(f[i++], "n_nodules_in_patient");
  if (!f[i].empty()) p.nearest_nodule_index = parse_int(f[i], "nearest_nodule_id");
  ++i;
  p.nearest_nodule_distance_mm = parse_opt_num(f[i++], "nearest_nodule_dist_mm");
  p.nearest_dx_mm = parse_opt_num(f[i++], "nearest_nodule_dx_mm");
  p.nearest_dy_mm = parse_opt_num(f[i++], "nearest_nodule_dy_mm");
  p.nearest_dz_mm = parse_opt_num(f[i++], "nearest_nodule_dz_mm");
  for (const auto& id : split_line(f[i], ';'))
    if (!id.empty()) p.other_nodule_indices.push_back(parse_int(id, "all_nodule_ids"));
  ++i;
  for (const auto& d : split_line(f[i], ';'))
    if (!d.empty())
      p.other_nodule_distances_mm.push_back(parse_num(d, "all_nodule_dists_mm"));
  ++i;
  p.nearest_ipsilateral = parse_opt_bool(f[i++], "ipsilateral");
  p.nearest_same_lobe = parse_opt_bool(f[i++], "nearest_same_lobe");
  p.bilateral = parse_bool(f[i++], "bilateral_distribution");

  auto& b = p.blueprint;
  b.valid = parse_bool(f[i++], "reinsertion_valid");
  if (b.valid) {
    if (auto l = lobe_from_string(f[i])) b.lobe = *l;
    else throw error("bad reinsertion lobe: '" + f[i] + "'");
    ++i;
    b.side = parse_side(f[i++]);
    if (auto z = zone_from_string(f[i])) b.zone = *z;
    else throw error("bad reinsertion zone: '" + f[i] + "'");
    ++i;
    b.lung_cc_pct = parse_num(f[i++], "reinsertion_lung_cc_pct");
    b.lung_ml_pct = parse_num(f[i++], "reinsertion_lung_ml_pct");
    b.lung_ap_pct = parse_num(f[i++], "reinsertion_lung_ap_pct");
    b.lobe_cc_pct = parse_num(f[i++], "reinsertion_lobe_cc_pct");
    b.lobe_ml_pct = parse_num(f[i++], "reinsertion_lobe_ml_pct");
    b.lobe_ap_pct = parse_num(f[i++], "reinsertion_lobe_ap_pct");
    b.pleural_target_mm = parse_num(f[i++], "reinsertion_pleural_dist_mm");
    b.airway_target_mm = parse_opt_num(f[i++], "reinsertion_airway_dist_mm");
    b.diameter_mm = parse_num(f[i++], "reinsertion_diam_mm");
  } else {
    i += 12;
  }

  p.dataset_tag = f[i++];
  if (auto m = malignancy_from_string(f[i])) p.malignancy = *m;
  else throw error("bad malignancy: '" + f[i] + "'");
  return p;
}

}  // namespace

void write_profiles_csv(const std::filesystem::path& path,
                        std::span<const NoduleProfile> profiles) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot open for writing: " + path.string());
  out << profile_header() << '\n';
  for (const auto& p : profiles) {
    const auto fields = profile_fields(p);
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].find(',') != std::string::npos)
        throw error("profile field contains a comma: '" + fields[i] + "'");
      if (i) out << ',';
      out << fields[i];
    }
    out << '\n';
  }
  if (!out) throw error("write failed: " + path.string());
}

std::vector<NoduleProfile> read_profiles_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != profile_header())
    throw error("bad profile CSV header in " + path.string());
  std::vector<NoduleProfile> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_line(line, ',');
    if (fields.size() != 58)
      throw error("bad field count at " + path.string() + ":" +
                  std::to_string(lineno));
    try {
      out.push_back(profile_from_fields(fields));
    } catch (const error& e) {
      throw error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

namespace {

constexpr const char* kHostsHeader =
    "patient_id,host_eligible,sex,age_years,dataset_tag,n_nodules,"
    "spacing_x,spacing_y,spacing_z,"
    "rul_fit_mm,rul_x0,rul_y0,rul_z0,rul_x1,rul_y1,rul_z1,"
    "rml_fit_mm,rml_x0,rml_y0,rml_z0,rml_x1,rml_y1,rml_z1,"
    "rll_fit_mm,rll_x0,rll_y0,rll_z0,rll_x1,rll_y1,rll_z1,"
    "lul_fit_mm,lul_x0,lul_y0,lul_z0,lul_x1,lul_y1,lul_z1,"
    "lll_fit_mm,lll_x0,lll_y0,lll_z0,lll_x1,lll_y1,lll_z1";

}  // namespace

void write_hosts_csv(const std::filesystem::path& path,
                     std::span<const HostRecord> hosts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot open for writing: " + path.string());
  out << kHostsHeader << '\n';
  for (const auto& h : hosts) {
    out << h.patient_id << ',' << bool_str(h.host_eligible) << ',' << h.sex << ','
        << shortest_double(h.age_years) << ',' << h.dataset_tag << ','
        << h.n_nodules << ',' << shortest_double(h.spacing.sx) << ','
        << shortest_double(h.spacing.sy) << ',' << shortest_double(h.spacing.sz);
    for (int i = 0; i < 5; ++i) {
      out << ',' << shortest_double(h.lobe_fit_mm[i]);
      if (h.lobe_bbox[i]) {
        const auto& b = *h.lobe_bbox[i];
        out << ',' << b.lo.x << ',' << b.lo.y << ',' << b.lo.z << ',' << b.hi.x
            << ',' << b.hi.y << ',' << b.hi.z;
      } else {
        out << ",,,,,,";
      }
    }
    out << '\n';
  }
  if (!out) throw error("write failed: " + path.string());
}

std::vector<HostRecord> read_hosts_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kHostsHeader)
    throw error("bad hosts CSV header in " + path.string());
  std::vector<HostRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_line(line, ',');
    if (f.size() != 44)
      throw error("bad field count at " + path.string() + ":" +
                  std::to_string(lineno));
    HostRecord h;
    h.patient_id = f[0];
    h.host_eligible = parse_bool(f[1], "host_eligible");
    if (f[2] != "M" && f[2] != "F")
      throw error("bad sex at " + path.string() + ":" + std::to_string(lineno));
    h.sex = f[2][0];
    h.age_years = parse_num(f[3], "age_years");
    h.dataset_tag = f[4];
    h.n_nodules = parse_int(f[5], "n_nodules");
    h.spacing = {parse_num(f[6], "spacing_x"), parse_num(f[7], "spacing_y"),
                 parse_num(f[8], "spacing_z")};
    for (int i = 0; i < 5; ++i) {
      const std::size_t base = 9 + 7 * static_cast<std::size_t>(i);
      h.lobe_fit_mm[i] = parse_num(f[base], "lobe_fit_mm");
      const bool absent = f[base + 1].empty();
      for (int j = 1; j <= 6; ++j)
        if (f[base + j].empty() != absent)
          throw error("inconsistent lobe bbox at " + path.string() + ":" +
                      std::to_string(lineno));
      if (!absent) {
        VoxelBox b;
        b.lo = {parse_int(f[base + 1], "lobe x0"), parse_int(f[base + 2], "lobe y0"),
                parse_int(f[base + 3], "lobe z0")};
        b.hi = {parse_int(f[base + 4], "lobe x1"), parse_int(f[base + 5], "lobe y1"),
                parse_int(f[base + 6], "lobe z1")};
        h.lobe_bbox[i] = b;
      }
    }
    out.push_back(h);
  }
  return out;
}

}  // namespace trialforge

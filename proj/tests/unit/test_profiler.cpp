#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "trialforge/digest.hpp"
#include "trialforge/labels.hpp"
#include "trialforge/phantom.hpp"
#include "trialforge/profiler.hpp"
#include "trialforge/voxgrid.hpp"

using namespace trialforge;

namespace {

const Dims kDims{64, 64, 64};
const Spacing kSpacing{2.0, 2.0, 2.0};

LabelVolume empty_mask(const LabelVolume& anatomy) {
  return LabelVolume(anatomy.dims(), anatomy.spacing());
}

LabelVolume voxel_nodule(const LabelVolume& anatomy, const VoxelIndex& v) {
  auto mask = empty_mask(anatomy);
  mask.at(v) = labels::nodule;
  return mask;
}

// Rasterize a sphere mask; every covered voxel must carry `label` in anatomy.
LabelVolume sphere_nodule(const LabelVolume& anatomy, const VoxelIndex& center,
                          double radius_mm) {
  auto mask = empty_mask(anatomy);
  const auto& sp = anatomy.spacing();
  const auto& d = anatomy.dims();
  const WorldPoint c = anatomy.world(center);
  const int rx = static_cast<int>(std::ceil(radius_mm / sp.sx));
  const int ry = static_cast<int>(std::ceil(radius_mm / sp.sy));
  const int rz = static_cast<int>(std::ceil(radius_mm / sp.sz));
  for (int z = std::max(0, center.z - rz); z <= std::min(d.nz - 1, center.z + rz); ++z)
    for (int y = std::max(0, center.y - ry); y <= std::min(d.ny - 1, center.y + ry); ++y)
      for (int x = std::max(0, center.x - rx); x <= std::min(d.nx - 1, center.x + rx); ++x)
        if (distance_mm(anatomy.world(x, y, z), c) <= radius_mm)
          mask.at(x, y, z) = labels::nodule;
  return mask;
}

// Voxel of `label` closest to the label's bbox centre such that a ball of
// radius_mm around it stays entirely on the label.
VoxelIndex fitting_center(const LabelVolume& anatomy, std::uint8_t label,
                          double radius_mm) {
  const auto box = label_bbox(anatomy, label);
  REQUIRE(box.has_value());
  const auto& sp = anatomy.spacing();
  const auto& d = anatomy.dims();
  const WorldPoint mid = anatomy.world((box->lo.x + box->hi.x) / 2,
                                       (box->lo.y + box->hi.y) / 2,
                                       (box->lo.z + box->hi.z) / 2);
  const int rx = static_cast<int>(std::ceil(radius_mm / sp.sx));
  const int ry = static_cast<int>(std::ceil(radius_mm / sp.sy));
  const int rz = static_cast<int>(std::ceil(radius_mm / sp.sz));
  VoxelIndex best{};
  double best_dist = 1e30;
  bool found = false;
  for (int z = box->lo.z; z <= box->hi.z; ++z) {
    for (int y = box->lo.y; y <= box->hi.y; ++y) {
      for (int x = box->lo.x; x <= box->hi.x; ++x) {
        if (anatomy.at(x, y, z) != label) continue;
        bool fits = true;
        for (int dz = -rz; fits && dz <= rz; ++dz)
          for (int dy = -ry; fits && dy <= ry; ++dy)
            for (int dx = -rx; fits && dx <= rx; ++dx) {
              if (distance_mm(anatomy.world(x + dx, y + dy, z + dz),
                              anatomy.world(x, y, z)) > radius_mm)
                continue;
              if (!anatomy.in_bounds(x + dx, y + dy, z + dz) ||
                  anatomy.at(x + dx, y + dy, z + dz) != label)
                fits = false;
            }
        if (!fits) continue;
        const double dist = distance_mm(anatomy.world(x, y, z), mid);
        if (dist < best_dist) {
          best_dist = dist;
          best = {x, y, z};
          found = true;
        }
      }
    }
  }
  REQUIRE(found);
  return best;
}

// Minimal hand-built patient around a single box-shaped RUL "lobe".
PhantomPatient box_patient() {
  PhantomPatient p;
  p.patient_id = "BOX001";
  p.dataset_tag = "DLCS24";
  p.sex = 'M';
  p.age_years = 60;
  p.anatomy = LabelVolume({40, 40, 40}, {1.0, 1.0, 1.0}, labels::body);
  for (int z = 10; z <= 28; ++z)
    for (int y = 10; y <= 28; ++y)
      for (int x = 10; x <= 28; ++x) p.anatomy.at(x, y, z) = labels::rul;
  return p;
}

NoduleProfile profile_with_mask(PhantomPatient& p, const LabelVolume& mask) {
  p.nodule_masks = {mask};
  p.nodule_truth = {{equivalent_sphere_diameter_mm(mask), Lobe::RUL,
                     Malignancy::benign, mask_centroid(mask)}};
  return full_profile(p, 0);
}

const std::filesystem::path kTmp = std::filesystem::temp_directory_path();

}  // namespace

TEST_CASE("core schema has exactly 54 attributes in group order") {
  const auto cols = profile_core_columns();
  REQUIRE(cols.size() == 54);
  CHECK(cols[0] == "ct_path");
  CHECK(cols[1] == "coordX");
  CHECK(cols[6] == "d");
  CHECK(cols[7] == "nodule_mean_diam_mm");
  CHECK(cols[9] == "organ_label_id");
  CHECK(cols[15] == "central_peripheral");
  CHECK(cols[16] == "cranio_caudal_pct");
  CHECK(cols[19] == "lobe_cc_pct");
  CHECK(cols[22] == "dist_to_heart_mm");
  CHECK(cols[28] == "pleural_distance_mm");
  CHECK(cols[29] == "airway_distance_mm");
  CHECK(cols[30] == "n_nodules_in_patient");
  CHECK(cols[40] == "bilateral_distribution");
  CHECK(cols[41] == "reinsertion_valid");
  CHECK(cols[53] == "reinsertion_diam_mm");
}

TEST_CASE("10 mm sphere centred in RUL profiles as expected") {
  const auto phantom = generate_phantom(11, kDims, kSpacing);
  const auto center = fitting_center(phantom.anatomy, labels::rul, 5.0 + 2.0);
  const auto mask = sphere_nodule(phantom.anatomy, center, 5.0);

  // voxel-count oracle for the equivalent-sphere diameter
  const double voxel_mm3 = kSpacing.sx * kSpacing.sy * kSpacing.sz;
  const double volume = static_cast<double>(count_nonzero(mask)) * voxel_mm3;
  const double d_oracle = std::cbrt(6.0 * volume / std::numbers::pi);

  const auto v = compact_vector(phantom.anatomy, mask, Malignancy::malignant);
  CHECK(v.diameter_mm == doctest::Approx(d_oracle));
  CHECK(std::abs(v.diameter_mm - 10.0) <= 2.0);  // within one voxel
  CHECK(v.lobe == Lobe::RUL);
  CHECK(v.side == Side::right);
  CHECK(v.malignancy == Malignancy::malignant);
  CHECK(v.pleural_distance_mm >= 0.0);

  auto patient = phantom;
  const auto p = profile_with_mask(patient, mask);
  CHECK(p.mean_diameter_mm == v.diameter_mm);
  CHECK(p.volume_mm3 == volume);
  CHECK(std::abs(p.volume_mm3 - 523.6) / 523.6 < 0.25);  // (4/3) pi r^3
  CHECK(p.lobe.has_value());
  CHECK(*p.lobe == Lobe::RUL);
  CHECK(p.organ_label_id == labels::rul);
  CHECK(p.organ_label_name == "RUL");
}

TEST_CASE("nodule abutting the pleura has zero pleural distance") {
  const auto phantom = generate_phantom(12, kDims, kSpacing);
  const std::array<std::uint8_t, 1> transparent{labels::airway};
  const auto pleura = boundary_voxels(phantom.anatomy, labels::lobes, transparent);
  REQUIRE_FALSE(pleura.empty());
  const auto v = compact_vector(phantom.anatomy,
                                voxel_nodule(phantom.anatomy, pleura.front()));
  CHECK(v.pleural_distance_mm == 0.0);
}

TEST_CASE("zone and side follow the per-side lung frame") {
  const auto phantom = generate_phantom(13, kDims, kSpacing);
  const std::array<std::uint8_t, 2> left_labels{labels::lul, labels::lll};
  const auto left_box = labels_bbox(phantom.anatomy, left_labels);
  REQUIRE(left_box.has_value());

  // an LLL voxel in the lower third of the left lung's cc extent
  const int z_cut = left_box->lo.z + (left_box->hi.z - left_box->lo.z) / 4;
  VoxelIndex low{-1, -1, -1};
  for (int z = left_box->lo.z; z <= z_cut && low.x < 0; ++z)
    for (int y = left_box->lo.y; y <= left_box->hi.y && low.x < 0; ++y)
      for (int x = left_box->lo.x; x <= left_box->hi.x && low.x < 0; ++x)
        if (phantom.anatomy.at(x, y, z) == labels::lll) low = {x, y, z};
  REQUIRE(low.x >= 0);

  const auto v = compact_vector(phantom.anatomy, voxel_nodule(phantom.anatomy, low));
  CHECK(v.lobe == Lobe::LLL);
  CHECK(v.side == Side::left);
  CHECK(v.zone == Zone::lower);

  // an RUL voxel at the very top of the right lung lands in the upper zone
  const std::array<std::uint8_t, 3> right_labels{labels::rul, labels::rml, labels::rll};
  const auto right_box = labels_bbox(phantom.anatomy, right_labels);
  REQUIRE(right_box.has_value());
  VoxelIndex high{-1, -1, -1};
  for (int z = right_box->hi.z; z >= right_box->lo.z && high.x < 0; --z)
    for (int y = right_box->lo.y; y <= right_box->hi.y && high.x < 0; ++y)
      for (int x = right_box->lo.x; x <= right_box->hi.x && high.x < 0; ++x)
        if (phantom.anatomy.at(x, y, z) == labels::rul) high = {x, y, z};
  REQUIRE(high.x >= 0);
  const auto u = compact_vector(phantom.anatomy, voxel_nodule(phantom.anatomy, high));
  CHECK(u.lobe == Lobe::RUL);
  CHECK(u.side == Side::right);
  CHECK(u.zone == Zone::upper);
}

TEST_CASE("compact_vector rejects degenerate inputs") {
  const auto phantom = generate_phantom(14, kDims, kSpacing);
  CHECK_THROWS_AS(compact_vector(phantom.anatomy, empty_mask(phantom.anatomy)), error);

  // anatomy without lobes
  LabelVolume bare({8, 8, 8}, {1, 1, 1}, labels::body);
  LabelVolume one(bare.dims(), bare.spacing());
  one.at(4, 4, 4) = labels::nodule;
  CHECK_THROWS_AS(compact_vector(bare, one), error);

  // centroid further than 10 mm from any lobe voxel
  auto boxed = box_patient();
  const auto far_mask = voxel_nodule(boxed.anatomy, {36, 36, 36});
  CHECK_THROWS_AS(compact_vector(boxed.anatomy, far_mask), error);
}

TEST_CASE("three collinear nodules give nearest distances 40/40/60") {
  std::vector<NoduleProfile> ps(3);
  for (int i = 0; i < 3; ++i) {
    ps[i].patient_id = "P000007";
    ps[i].nodule_index = i;
    ps[i].side = Side::right;
    ps[i].lobe = Lobe::RUL;
  }
  ps[0].centroid = {0, 0, 0};
  ps[1].centroid = {40, 0, 0};
  ps[2].centroid = {100, 0, 0};
  ps[2].lobe = Lobe::RML;

  inter_nodule_attrs(ps);
  for (const auto& p : ps) CHECK(p.n_nodules_in_patient == 3);
  CHECK(*ps[0].nearest_nodule_distance_mm == 40.0);
  CHECK(*ps[1].nearest_nodule_distance_mm == 40.0);
  CHECK(*ps[2].nearest_nodule_distance_mm == 60.0);
  CHECK(*ps[0].nearest_nodule_index == 1);
  CHECK(*ps[1].nearest_nodule_index == 0);
  CHECK(*ps[2].nearest_nodule_index == 1);
  CHECK(*ps[0].nearest_dx_mm == 40.0);
  CHECK(*ps[2].nearest_dx_mm == -60.0);
  CHECK(*ps[0].nearest_ipsilateral);
  CHECK(*ps[0].nearest_same_lobe);
  CHECK_FALSE(*ps[2].nearest_same_lobe);
  CHECK_FALSE(ps[0].bilateral);
  CHECK(ps[0].other_nodule_indices == std::vector<int>{1, 2});
  CHECK(ps[0].other_nodule_distances_mm == std::vector<double>{40.0, 100.0});

  ps[2].side = Side::left;
  inter_nodule_attrs(ps);
  CHECK(ps[0].bilateral);
  CHECK(ps[1].bilateral);
  CHECK_FALSE(*ps[2].nearest_ipsilateral);

  // symmetry: two nodules 50 mm apart see each other at 50 mm
  std::vector<NoduleProfile> two(2);
  two[0].patient_id = two[1].patient_id = "P000008";
  two[0].nodule_index = 0;
  two[1].nodule_index = 1;
  two[1].centroid = {30, 40, 0};
  inter_nodule_attrs(two);
  CHECK(*two[0].nearest_nodule_distance_mm == 50.0);
  CHECK(*two[1].nearest_nodule_distance_mm == 50.0);

  // single profile keeps empty nearest fields
  std::vector<NoduleProfile> one(1);
  one[0].patient_id = "P000009";
  inter_nodule_attrs(one);
  CHECK(one[0].n_nodules_in_patient == 1);
  CHECK_FALSE(one[0].nearest_nodule_index.has_value());
  CHECK_FALSE(one[0].bilateral);

  // mixed patients are rejected
  two[1].patient_id = "P000010";
  CHECK_THROWS_AS(inter_nodule_attrs(two), error);
  CHECK_THROWS_AS(inter_nodule_attrs(std::span<NoduleProfile>{}), error);
}

TEST_CASE("nodule at the lobe bounding-box centre gets 50/50/50 lobe percentiles") {
  auto p = box_patient();
  const auto prof = profile_with_mask(p, voxel_nodule(p.anatomy, {19, 19, 19}));
  REQUIRE(prof.lobe.has_value());
  CHECK(*prof.lobe_cc_pct == 50.0);
  CHECK(*prof.lobe_ml_pct == 50.0);
  CHECK(*prof.lobe_ap_pct == 50.0);
  CHECK(prof.blueprint.valid);
  CHECK(prof.blueprint.lobe_cc_pct == 50.0);
  CHECK(prof.blueprint.lobe_ml_pct == 50.0);
  CHECK(prof.blueprint.lobe_ap_pct == 50.0);
  CHECK(prof.blueprint.diameter_mm == prof.mean_diameter_mm);
  CHECK(prof.blueprint.pleural_target_mm == prof.pleural_distance_mm);
  // no thoracic structures in the box anatomy
  CHECK_FALSE(prof.airway_distance_mm.has_value());
  CHECK_FALSE(prof.heart_distance_mm.has_value());
  CHECK_FALSE(prof.blueprint.airway_target_mm.has_value());
  CHECK(prof.nearby_organs.empty());
}

TEST_CASE("undefined lobe yields an invalid blueprint and an ineligible donor") {
  auto p = box_patient();
  p.nodule_masks = {voxel_nodule(p.anatomy, {36, 36, 36})};
  p.nodule_truth = {{1.0, Lobe::RUL, Malignancy::benign,
                     p.anatomy.world(36, 36, 36)}};
  const auto prof = full_profile(p, 0);
  CHECK_FALSE(prof.lobe.has_value());
  CHECK_FALSE(prof.blueprint.valid);
  CHECK(prof.organ_label_id == labels::body);
  CHECK_THROWS_AS(static_cast<void>(prof.compact()), error);

  const auto e = eligibility(p, prof);
  CHECK_FALSE(e.donor_eligible);
  CHECK_FALSE(e.host_eligible);  // box anatomy has only RUL
  CHECK(e.reason.find("blueprint") != std::string::npos);
  CHECK(e.reason.find("RML") != std::string::npos);
}

TEST_CASE("eligibility on a phantom patient with a nodule is clean") {
  const auto patient = cohort_patient(42, 0, CohortProfile{});
  REQUIRE_FALSE(patient.nodule_masks.empty());
  const auto prof = full_profile(patient, 0);
  const auto e = eligibility(patient, prof);
  CHECK(e.donor_eligible);
  CHECK(e.host_eligible);
  CHECK(e.reason.empty());

  // empty mask flips only the donor side
  auto broken = patient;
  broken.nodule_masks[0] = empty_mask(patient.anatomy);
  const auto e2 = eligibility(broken, prof);
  CHECK_FALSE(e2.donor_eligible);
  CHECK(e2.host_eligible);
  CHECK(e2.reason.find("mask") != std::string::npos);
}

TEST_CASE("profile distances match surface_distance") {
  const auto patient = cohort_patient(43, 1, CohortProfile{});
  REQUIRE_FALSE(patient.nodule_masks.empty());
  const auto prof = full_profile(patient, 0);
  const auto c = prof.centroid;
  REQUIRE(prof.airway_distance_mm.has_value());
  CHECK(*prof.airway_distance_mm ==
        doctest::Approx(surface_distance(patient.anatomy, c, labels::airway))
            .epsilon(1e-12));
  REQUIRE(prof.heart_distance_mm.has_value());
  CHECK(*prof.heart_distance_mm ==
        doctest::Approx(surface_distance(patient.anatomy, c, labels::heart))
            .epsilon(1e-12));
  REQUIRE(prof.svc_distance_mm.has_value());
  CHECK(*prof.svc_distance_mm ==
        doctest::Approx(surface_distance(patient.anatomy, c, labels::svc))
            .epsilon(1e-12));

  // nearby organs are exactly the structures within 10 mm
  std::vector<std::uint8_t> expect;
  for (std::uint8_t l : {labels::airway, labels::heart, labels::aorta,
                         labels::esophagus, labels::trachea, labels::pulmonary_vein,
                         labels::svc})
    if (count_label(patient.anatomy, l) > 0 &&
        surface_distance(patient.anatomy, c, l) <= 10.0)
      expect.push_back(l);
  CHECK(prof.nearby_organs == expect);
}

TEST_CASE("chest-wall nodule: pleural distance is the smallest of the eight") {
  const auto phantom = generate_phantom(15, kDims, kSpacing);
  const std::array<std::uint8_t, 1> transparent{labels::airway};
  const auto pleura = boundary_voxels(phantom.anatomy, labels::lobes, transparent);
  // most lateral boundary voxel on the right side (lowest x)
  VoxelIndex wall = pleura.front();
  for (const auto& v : pleura)
    if (v.x < wall.x) wall = v;
  auto patient = phantom;
  const auto prof = profile_with_mask(patient, voxel_nodule(phantom.anatomy, wall));
  const std::array<std::optional<double>, 7> others{
      prof.airway_distance_mm,        prof.heart_distance_mm,
      prof.aorta_distance_mm,         prof.esophagus_distance_mm,
      prof.trachea_distance_mm,       prof.pulmonary_vein_distance_mm,
      prof.svc_distance_mm};
  for (const auto& d : others)
    if (d) CHECK(prof.pleural_distance_mm <= *d);
}

TEST_CASE("profile_patient fills inter-nodule fields consistently") {
  CohortProfile cp;
  cp.min_nodules = 3;
  cp.max_nodules = 5;
  PhantomPatient patient;
  for (int idx = 0;; ++idx) {
    patient = cohort_patient(7, idx, cp);
    if (patient.nodule_masks.size() >= 2 && patient.dataset_tag != "NSCLCR") break;
  }
  const auto profiles = profile_patient(patient);
  REQUIRE(profiles.size() == patient.nodule_masks.size());
  const auto solo = full_profile(patient, 0);
  CHECK(profiles[0].centroid.x == solo.centroid.x);
  CHECK(profiles[0].mean_diameter_mm == solo.mean_diameter_mm);
  CHECK(profiles[0].pleural_distance_mm == solo.pleural_distance_mm);
  CHECK(profiles[0].blueprint.valid == solo.blueprint.valid);
  for (const auto& p : profiles) {
    CHECK(p.n_nodules_in_patient == static_cast<int>(profiles.size()));
    REQUIRE(p.nearest_nodule_index.has_value());
    CHECK(*p.nearest_nodule_index != p.nodule_index);
    CHECK(*p.nearest_nodule_distance_mm > 0.0);
    CHECK(p.other_nodule_indices.size() == profiles.size() - 1);
    // blueprint mirrors the profile exactly where it copies
    CHECK(p.blueprint.diameter_mm == p.mean_diameter_mm);
    CHECK(p.blueprint.lung_cc_pct == p.lung_cc_pct);
  }
}

TEST_CASE("phantom cohorts are predominantly peripheral with consistent morphology") {
  CohortProfile cp;
  int central = 0, total = 0;
  for (int idx = 0; idx < 12; ++idx) {
    const auto patient = cohort_patient(77, idx, cp);
    for (const auto& prof : profile_patient(patient)) {
      ++total;
      central += prof.central;
      // volume against the equivalent sphere of the recorded diameter
      const double sphere =
          std::numbers::pi / 6.0 * std::pow(prof.mean_diameter_mm, 3);
      CHECK(prof.volume_mm3 >= 0.5 * sphere);
      CHECK(prof.volume_mm3 <= 2.0 * sphere);
      CHECK(prof.blueprint.valid);
      CHECK(prof.blueprint.diameter_mm == prof.mean_diameter_mm);
      CHECK(prof.lung_cc_pct >= 0.0);
      CHECK(prof.lung_cc_pct <= 100.0);
      const auto v = prof.compact();
      CHECK(v.diameter_mm == prof.mean_diameter_mm);
      CHECK(v.zone == prof.zone);
      CHECK(v.central == prof.central);
    }
  }
  REQUIRE(total >= 20);
  CHECK(static_cast<double>(total - central) / total >= 0.85);
}

TEST_CASE("profile CSV round-trips byte-identically") {
  CohortProfile cp;
  std::vector<NoduleProfile> all;
  std::vector<HostRecord> hosts;
  for (int idx = 0; idx < 3; ++idx) {
    const auto patient = cohort_patient(9, idx, cp);
    for (auto& prof : profile_patient(patient)) all.push_back(std::move(prof));
    hosts.push_back(host_record(patient));
  }
  // one structurally sparse row: box anatomy, missing structures and lobe
  auto boxed = box_patient();
  boxed.nodule_masks = {voxel_nodule(boxed.anatomy, {36, 36, 36}),
                        voxel_nodule(boxed.anatomy, {15, 15, 15})};
  boxed.nodule_truth = {
      {1.0, Lobe::RUL, Malignancy::unlabeled, boxed.anatomy.world(36, 36, 36)},
      {1.0, Lobe::RUL, Malignancy::malignant, boxed.anatomy.world(15, 15, 15)}};
  for (auto& prof : profile_patient(boxed)) all.push_back(std::move(prof));
  hosts.push_back(host_record(boxed));

  const auto csv = kTmp / "trialforge_profiles_test.csv";
  write_profiles_csv(csv, all);
  const auto back = read_profiles_csv(csv);
  REQUIRE(back.size() == all.size());
  const auto csv2 = kTmp / "trialforge_profiles_test2.csv";
  write_profiles_csv(csv2, back);
  CHECK(sha256_hex_file(csv) == sha256_hex_file(csv2));

  for (std::size_t i = 0; i < all.size(); ++i) {
    CHECK(back[i].patient_id == all[i].patient_id);
    CHECK(back[i].nodule_index == all[i].nodule_index);
    CHECK(back[i].centroid.x == all[i].centroid.x);
    CHECK(back[i].centroid.y == all[i].centroid.y);
    CHECK(back[i].centroid.z == all[i].centroid.z);
    CHECK(back[i].mean_diameter_mm == all[i].mean_diameter_mm);
    CHECK(back[i].volume_mm3 == all[i].volume_mm3);
    CHECK(back[i].lobe == all[i].lobe);
    CHECK(back[i].zone == all[i].zone);
    CHECK(back[i].central == all[i].central);
    CHECK(back[i].nearby_organs == all[i].nearby_organs);
    CHECK(back[i].lobe_cc_pct == all[i].lobe_cc_pct);
    CHECK(back[i].airway_distance_mm == all[i].airway_distance_mm);
    CHECK(back[i].svc_distance_mm == all[i].svc_distance_mm);
    CHECK(back[i].pleural_distance_mm == all[i].pleural_distance_mm);
    CHECK(back[i].n_nodules_in_patient == all[i].n_nodules_in_patient);
    CHECK(back[i].nearest_nodule_index == all[i].nearest_nodule_index);
    CHECK(back[i].nearest_nodule_distance_mm == all[i].nearest_nodule_distance_mm);
    CHECK(back[i].other_nodule_indices == all[i].other_nodule_indices);
    CHECK(back[i].other_nodule_distances_mm == all[i].other_nodule_distances_mm);
    CHECK(back[i].nearest_ipsilateral == all[i].nearest_ipsilateral);
    CHECK(back[i].bilateral == all[i].bilateral);
    CHECK(back[i].blueprint.valid == all[i].blueprint.valid);
    if (all[i].blueprint.valid) {
      CHECK(back[i].blueprint.lobe == all[i].blueprint.lobe);
      CHECK(back[i].blueprint.lobe_cc_pct == all[i].blueprint.lobe_cc_pct);
      CHECK(back[i].blueprint.diameter_mm == all[i].blueprint.diameter_mm);
      CHECK(back[i].blueprint.airway_target_mm == all[i].blueprint.airway_target_mm);
    }
    CHECK(back[i].dataset_tag == all[i].dataset_tag);
    CHECK(back[i].malignancy == all[i].malignancy);
  }

  // every row carries 2 + 54 + 2 columns
  std::ifstream in(csv);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 57);
    ++rows;
  }
  CHECK(rows == all.size() + 1);

  const auto hosts_csv = kTmp / "trialforge_hosts_test.csv";
  write_hosts_csv(hosts_csv, hosts);
  const auto hosts_back = read_hosts_csv(hosts_csv);
  REQUIRE(hosts_back.size() == hosts.size());
  for (std::size_t i = 0; i < hosts.size(); ++i) {
    CHECK(hosts_back[i].patient_id == hosts[i].patient_id);
    CHECK(hosts_back[i].host_eligible == hosts[i].host_eligible);
    CHECK(hosts_back[i].sex == hosts[i].sex);
    CHECK(hosts_back[i].age_years == hosts[i].age_years);
    CHECK(hosts_back[i].dataset_tag == hosts[i].dataset_tag);
    CHECK(hosts_back[i].n_nodules == hosts[i].n_nodules);
    CHECK(hosts_back[i].spacing == hosts[i].spacing);
    CHECK(hosts_back[i].lobe_fit_mm == hosts[i].lobe_fit_mm);
    for (int l = 0; l < 5; ++l) {
      REQUIRE(hosts_back[i].lobe_bbox[l].has_value() ==
              hosts[i].lobe_bbox[l].has_value());
      if (hosts[i].lobe_bbox[l]) {
        CHECK(hosts_back[i].lobe_bbox[l]->lo == hosts[i].lobe_bbox[l]->lo);
        CHECK(hosts_back[i].lobe_bbox[l]->hi == hosts[i].lobe_bbox[l]->hi);
      }
    }
  }

  std::filesystem::remove(csv);
  std::filesystem::remove(csv2);
  std::filesystem::remove(hosts_csv);
}

TEST_CASE("host record reports per-lobe fit extents") {
  // box RUL spanning 19x10x7 voxels under anisotropic spacing
  PhantomPatient p;
  p.patient_id = "BOX002";
  p.dataset_tag = "IMDCT";
  p.sex = 'F';
  p.age_years = 55;
  p.anatomy = LabelVolume({40, 40, 40}, {1.0, 2.0, 3.0}, labels::body);
  for (int z = 3; z <= 9; ++z)
    for (int y = 5; y <= 14; ++y)
      for (int x = 10; x <= 28; ++x) p.anatomy.at(x, y, z) = labels::rul;
  const auto h = host_record(p);
  CHECK_FALSE(h.host_eligible);  // four lobes missing
  CHECK(h.lobe_fit_mm[0] == 19.0);  // min(19*1, 10*2, 7*3)
  CHECK(h.lobe_fit_mm[1] == 0.0);
  CHECK(h.n_nodules == 0);
  CHECK(h.spacing == Spacing{1.0, 2.0, 3.0});
  REQUIRE(h.lobe_bbox[0].has_value());
  CHECK(h.lobe_bbox[0]->lo == VoxelIndex{10, 5, 3});
  CHECK(h.lobe_bbox[0]->hi == VoxelIndex{28, 14, 9});
  CHECK_FALSE(h.lobe_bbox[1].has_value());

  const auto full = cohort_patient(21, 2, CohortProfile{});
  const auto hf = host_record(full);
  CHECK(hf.host_eligible);
  for (double fit : hf.lobe_fit_mm) CHECK(fit > 0.0);
  CHECK(hf.patient_id == full.patient_id);
  CHECK(hf.n_nodules == static_cast<int>(full.nodule_masks.size()));
}

#pragma once
// Stage 1: nodule profiling. Turns a patient's anatomy and nodule masks into
// the compact feature vector, the full 54-attribute profile row, inter-nodule
// relationships, the 13-field reinsertion blueprint, and donor/host
// eligibility. Profiles and the host catalog round-trip through CSV so the
// later stages are file-driven.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trialforge/labels.hpp"
#include "trialforge/phantom.hpp"
#include "trialforge/voxgrid.hpp"

namespace trialforge {

// Compact descriptor (d, lobe, y, zone, side, centrality, rho).
struct CompactFeatureVector {
  double diameter_mm = 0;
  Lobe lobe = Lobe::RUL;
  Malignancy malignancy = Malignancy::unlabeled;
  Zone zone = Zone::middle;
  Side side = Side::right;
  bool central = false;  // false = peripheral
  double pleural_distance_mm = 0;
};

// The 13 reinsertion fields (group 9 of the profile schema). When valid is
// false (undefined lobe assignment) the remaining fields are meaningless and
// the nodule is not donor-eligible.
struct ReinsertionBlueprint {
  bool valid = false;
  Lobe lobe = Lobe::RUL;
  Side side = Side::right;
  Zone zone = Zone::middle;
  double lung_cc_pct = 0, lung_ml_pct = 0, lung_ap_pct = 0;
  double lobe_cc_pct = 0, lobe_ml_pct = 0, lobe_ap_pct = 0;
  double pleural_target_mm = 0;
  std::optional<double> airway_target_mm;
  double diameter_mm = 0;
};

// One profile row: 54 core attributes in nine groups, plus provenance and the
// auxiliary identity fields that make the CSV usable as a donor table.
struct NoduleProfile {
  // identity
  std::string ct_path;
  // bounding box: world-space centroid and physical box dimensions
  WorldPoint centroid;
  double bbox_w_mm = 0, bbox_h_mm = 0, bbox_d_mm = 0;
  // morphology
  double mean_diameter_mm = 0;
  double volume_mm3 = 0;
  // anatomy
  int organ_label_id = 0;
  std::string organ_label_name;
  std::vector<std::uint8_t> nearby_organs;  // structure labels within 10 mm, ascending
  Side side = Side::right;
  std::optional<Lobe> lobe;  // nullopt = undefined lobe assignment
  Zone zone = Zone::middle;
  bool central = false;
  // position percentiles within the whole lung, then within the assigned lobe.
  // AP percentiles carry a known normalization caveat; they are reported but
  // only used as a starting guess downstream.
  double lung_cc_pct = 0, lung_ml_pct = 0, lung_ap_pct = 0;
  std::optional<double> lobe_cc_pct, lobe_ml_pct, lobe_ap_pct;
  // centroid-to-surface distances; missing when the structure label is absent
  std::optional<double> heart_distance_mm;
  std::optional<double> aorta_distance_mm;
  std::optional<double> esophagus_distance_mm;
  std::optional<double> trachea_distance_mm;
  std::optional<double> pulmonary_vein_distance_mm;
  std::optional<double> svc_distance_mm;
  double pleural_distance_mm = 0;
  std::optional<double> airway_distance_mm;
  // inter-nodule (nearest-neighbour fields empty for single-nodule patients)
  int n_nodules_in_patient = 1;
  std::optional<int> nearest_nodule_index;
  std::optional<double> nearest_nodule_distance_mm;
  std::optional<double> nearest_dx_mm, nearest_dy_mm, nearest_dz_mm;
  std::vector<int> other_nodule_indices;
  std::vector<double> other_nodule_distances_mm;
  std::optional<bool> nearest_ipsilateral;
  std::optional<bool> nearest_same_lobe;
  bool bilateral = false;
  // reinsertion blueprint
  ReinsertionBlueprint blueprint;
  // provenance and auxiliary identity
  std::string dataset_tag;
  std::string patient_id;
  int nodule_index = 0;
  Malignancy malignancy = Malignancy::unlabeled;

  // Throws when the lobe is undefined.
  [[nodiscard]] CompactFeatureVector compact() const;
};

struct Eligibility {
  bool donor_eligible = false;
  bool host_eligible = false;
  std::string reason;  // empty when both eligible
};

// Host-catalog row consumed by the trial engine (hosts.csv sidecar).
struct HostRecord {
  std::string patient_id;
  bool host_eligible = false;
  char sex = 'F';
  double age_years = 0;
  std::string dataset_tag;
  int n_nodules = 0;
  Spacing spacing;  // grid spacing, needed to turn placements into mm
  // Per-lobe geometry in canonical order (RUL, RML, RLL, LUL, LLL): minimal
  // physical bounding-box extent (0 when the lobe is absent) and the
  // inclusive voxel bounding box (nullopt when absent).
  std::array<double, 5> lobe_fit_mm{};
  std::array<std::optional<VoxelBox>, 5> lobe_bbox{};
};

// The 54 core attribute names in fixed schema order.
std::span<const std::string_view> profile_core_columns();

// Lung exterior surface: boundary voxels of all lobes plus composed nodule
// voxels as one object, with airway channels transparent so they do not punch
// interior holes. Pleural distances everywhere are measured against this set.
std::vector<VoxelIndex> lung_boundary(const LabelVolume& anatomy);

CompactFeatureVector compact_vector(const LabelVolume& anatomy, const LabelVolume& nodule,
                                    Malignancy malignancy = Malignancy::unlabeled);

NoduleProfile full_profile(const PhantomPatient& patient, int nodule_index);

// Fills the inter-nodule group across one patient's profiles, in place.
void inter_nodule_attrs(std::span<NoduleProfile> profiles);

ReinsertionBlueprint reinsertion_blueprint(const NoduleProfile& profile,
                                           const LabelVolume& anatomy);

Eligibility eligibility(const PhantomPatient& patient, const NoduleProfile& profile);

// full_profile for every nodule of the patient plus inter-nodule attributes.
std::vector<NoduleProfile> profile_patient(const PhantomPatient& patient);

HostRecord host_record(const PhantomPatient& patient);

// Profile table CSV: patient_id, nodule_index, the 54 core columns, then
// dataset_tag and malignancy. Structurally empty fields are empty strings.
void write_profiles_csv(const std::filesystem::path& path,
                        std::span<const NoduleProfile> profiles);
std::vector<NoduleProfile> read_profiles_csv(const std::filesystem::path& path);

void write_hosts_csv(const std::filesystem::path& path, std::span<const HostRecord> hosts);
std::vector<HostRecord> read_hosts_csv(const std::filesystem::path& path);

}  // namespace trialforge

#pragma once
// Procedural lung-phantom generator: deterministic label anatomy (five lobes,
// airway, mediastinal structures), seeded ellipsoidal nodules with truth
// records, and whole cohorts with demographics and dataset provenance tags.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "trialforge/labels.hpp"
#include "trialforge/rng.hpp"
#include "trialforge/voxgrid.hpp"

namespace trialforge {

// Simulated provenance names; purely strings, no real statistics implied.
inline constexpr std::array<std::string_view, 7> kDatasetTags{
    "DLCS24", "LUNA25", "LUNA16", "LUNGx", "LNDbv4", "NSCLCR", "IMDCT"};

// Tag-specific quirks mirrored by the generator: LUNA16 carries no malignancy
// labels; NSCLCR is single-nodule, all-malignant.
inline constexpr std::string_view kUnlabeledTag = "LUNA16";
inline constexpr std::string_view kAllMalignantTag = "NSCLCR";

struct DemographicModel {
  enum class AgeKind { normal_clipped, uniform };
  AgeKind age_kind = AgeKind::normal_clipped;
  double age_a = 61.4;   // mean (normal) or low bound (uniform)
  double age_b = 5.0;    // sd (normal) or high bound (uniform)
  double age_lo = 55.0;  // clamp bounds, normal_clipped only
  double age_hi = 74.0;
  double male_fraction = 0.59;
};

struct NoduleTruth {
  double diameter_mm = 0;  // equivalent-sphere diameter measured on the mask
  Lobe lobe = Lobe::RUL;
  Malignancy malignancy = Malignancy::benign;
  WorldPoint centroid;
};

struct PhantomPatient {
  std::string patient_id;
  LabelVolume anatomy;
  char sex = 'F';  // 'M' or 'F'
  double age_years = 0;
  std::string dataset_tag;
  std::vector<LabelVolume> nodule_masks;  // anatomy-sized, foreground 23
  std::vector<NoduleTruth> nodule_truth;
};

// Diameter sampler in mm; must yield values in (0, 100].
using SizeSampler = std::function<double(RandomStream&)>;

// Mixture sampler over the six size bins; within a bin the diameter is
// uniform. The top bin is capped at cap_mm so phantoms can still host it.
SizeSampler bin_mixture_sampler(const std::array<double, 6>& bin_weights,
                                double cap_mm = 34.0);

// Anatomy only; demographics and provenance are cohort concerns.
PhantomPatient generate_phantom(std::uint64_t seed, Dims dims, Spacing spacing);

// Adds `count` nodules to a copy of the patient. Each nodule is an ellipsoid
// (axis ratios in [0.7, 1.3]) fully inside one lobe with centroid at least
// 2 mm from the lung exterior, disjoint from earlier nodules. Throws after
// 1000 failed placement attempts for any single nodule.
PhantomPatient seed_nodules(PhantomPatient patient, std::uint64_t seed, int count,
                            const SizeSampler& size_sampler, double malignancy_rate);

struct CohortProfile {
  Dims dims{96, 96, 96};
  Spacing spacing{2.0, 2.0, 2.0};
  int min_nodules = 1;  // uniform inclusive range per patient
  int max_nodules = 8;
  std::array<double, 6> bin_weights{0.10, 0.22, 0.30, 0.24, 0.09, 0.05};
  double malignancy_rate = 0.14;
  DemographicModel demographics;
};

// One cohort member, regenerable in isolation: derived seed seed^index,
// dataset tag round-robin over kDatasetTags, demographics from the profile's
// model. phantom_cohort(seed, n, p)[i] == cohort_patient(seed, i, p).
PhantomPatient cohort_patient(std::uint64_t seed, int index, const CohortProfile& profile);

std::vector<PhantomPatient> phantom_cohort(std::uint64_t seed, int n_patients,
                                           const CohortProfile& profile);

}  // namespace trialforge

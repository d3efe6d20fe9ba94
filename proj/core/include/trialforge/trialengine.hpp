#pragma once
// Stage 2: clinical trial templates, the declarative TrialSpec, the
// deterministic Build operator expanding a spec into an evaluation manifest,
// and the thirteen trial-mode constructors.
//
// Randomness is strictly stream-derived so a (spec, seed) pair always expands
// to one manifest, byte for byte:
//   * host draw for row r:   RandomStream(sigma, "host", r)
//     (independent of the sub-cohort tag and of the donor, so prevalence
//     sweeps that share sigma reuse the same host sequence);
//   * donor draws for row r: RandomStream(sigma, "donor/" + subcohort, r),
//     consumed in order bin, lobe, pool pick, then again on each redraw;
//   * cross-mode pairing:    RandomStream(seed, "cross/" + subcohort + ...).

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "trialforge/labels.hpp"
#include "trialforge/phantom.hpp"
#include "trialforge/profiler.hpp"
#include "trialforge/voxgrid.hpp"

namespace trialforge {

// Diameter bin edges in mm shared by size priors and size filters; bin i
// covers [edge[i], edge[i+1]).
inline constexpr std::array<double, 7> kSizeBinEdgesMm{
    0.0, 4.0, 6.0, 10.0, 20.0, 30.0, std::numeric_limits<double>::infinity()};

// Bin index 0..5 for a diameter; negative diameters are rejected.
int size_bin(double diameter_mm);

struct Template {
  std::string name;                      // "NLST" or "NELSON"
  double prevalence = 0;                 // default pi
  std::array<double, 6> size_weights{};  // prior over kSizeBinEdgesMm bins
  std::array<double, 5> lobe_weights{};  // prior in canonical lobe order
  DemographicModel demographics;
};

// Exact published constants for the two screening-trial templates.
Template trial_template(std::string_view name);

// Half-open diameter interval [lo, hi) in mm.
struct SizeInterval {
  double lo = 0;
  double hi = std::numeric_limits<double>::infinity();
  [[nodiscard]] bool contains(double d) const { return d >= lo && d < hi; }
};

// Donor predicate; every set criterion must hold, default accepts all.
struct DonorFilter {
  std::optional<SizeInterval> size_mm;
  std::vector<Lobe> lobes;            // empty = any
  std::vector<std::string> datasets;  // empty = any
  [[nodiscard]] bool matches(const NoduleProfile& profile) const;
};

// Host predicate over demographics; default accepts all.
struct HostFilter {
  std::optional<std::string> dataset;
  std::vector<std::string> datasets_excluded;  // leave-one-out sub-cohorts
  std::optional<char> sex;                     // 'M' or 'F'
  std::optional<std::array<double, 2>> age;    // [lo, hi) years
  [[nodiscard]] bool matches(const HostRecord& host) const;
};

// Insertion-feasibility parameters carried by the spec.
struct InsertionBounds {
  double alpha_max = kAlphaMax;
  double rho_min_mm = 2.0;
};

struct TrialSpec {
  std::size_t n = 1000;
  double pi = 0.04;
  Template tmpl;                  // defaulted to NLST by default_trial_spec()
  DonorFilter donor_filter;       // phi_nod
  InsertionBounds insertion;      // phi_ins
  HostFilter host_filter;         // phi_demo
  std::uint64_t sigma = 0;
  int bootstrap_replicates = 0;   // B
  std::vector<std::string> excluded_datasets;  // D_excl, donor-side
};

// The baseline spec every mode derives from: n=1000, NLST template and its
// default prevalence, sigma=0, B=0, no filters, no exclusions.
TrialSpec default_trial_spec();

// SHA-256 over a canonical field serialization; binds every spec field
// including the seed.
std::string spec_digest(const TrialSpec& spec);

struct ManifestRow {
  std::size_t row_index = 0;
  std::string donor_patient;
  int donor_nodule = 0;
  std::string host_patient;
  Malignancy label = Malignancy::benign;
  WorldPoint placement;  // host-frame mm, blueprint percentiles mapped into
                         // the host lobe's bounding box
  Lobe target_lobe = Lobe::RUL;
  double alpha = 1.0;    // applied physical scale; 1 preserves donor size
};

struct Manifest {
  std::string spec_digest;
  std::string mode;  // "M1".."M13"
  std::string subcohort;
  std::vector<ManifestRow> rows;
};

// SHA-256 over the canonical serialization of (mode, subcohort, rows); row
// order is semantic.
std::string manifest_digest(const Manifest& manifest);

// CSV with header row_index,mode,subcohort,donor_patient,donor_nodule,
// host_patient,label,lobe,px,py,pz,alpha plus a "<path>.digest" sidecar
// holding manifest_digest.
void write_manifest_csv(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest_csv(const std::filesystem::path& path);

// The profiler stage's two tables, in the shape Build consumes them.
struct CohortTable {
  std::vector<NoduleProfile> profiles;
  std::vector<HostRecord> hosts;
};

CohortTable read_cohort_table(const std::filesystem::path& profiles_csv,
                              const std::filesystem::path& hosts_csv);

// Derives the table from in-memory patients; convenience for tests and the
// end-to-end path.
CohortTable cohort_table(std::span<const PhantomPatient> patients);

// Counters exposing how often sampling had to widen a cell or redraw a donor.
struct BuildStats {
  std::size_t lobe_relaxations = 0;
  std::size_t bin_relaxations = 0;
  std::size_t donor_redraws = 0;
};

// Deterministic expansion of one spec into one manifest: the first
// floor(n*pi) rows are malignant, the rest benign; each row draws its host
// uniformly over demographic-eligible hosts, then draws donors (size bin,
// lobe, uniform pool pick) until one is insertion-feasible for that host,
// failing loudly after 100 redraws. Throws when the donor pool cannot cover
// the label quotas.
Manifest build(const TrialSpec& spec, const CohortTable& table,
               std::string_view mode = "M1", std::string_view subcohort = "all",
               BuildStats* stats = nullptr);

// M10's multi-nodule sub-cohort: n cases, each drawing a nodule count
// uniformly from [2,5]; a case's rows are consecutive and share one host,
// and each of the first floor(n*pi) cases carries exactly one malignant
// nodule so the malignant row count stays floor(n*pi).
Manifest build_multi(const TrialSpec& spec, const CohortTable& table,
                     std::string_view subcohort = "multi",
                     BuildStats* stats = nullptr);

// Sub-cohort expansions for the synthetic-cohort modes M1..M10, in fixed
// order. Fields a mode pins (its n, sigma, prevalence grid, filters) override
// the base spec; everything else is inherited from it.
std::vector<std::pair<std::string, TrialSpec>> mode_specs(std::string_view mode,
                                                          const TrialSpec& base);

// M11: one row per donor-eligible nodule, host = donor patient.
Manifest build_iso(const CohortTable& table);

// M12: for every host-eligible patient with at least one donor-eligible
// nodule, all of its eligible nodules as consecutive self-hosted rows.
Manifest build_comp(const CohortTable& table);

enum class CrossPolicy { one_to_one, one_to_many_hosts, donor_patient_complete };

std::string_view to_string(CrossPolicy policy);
std::optional<CrossPolicy> cross_policy_from_string(std::string_view name);

// Hosts per donor patient under one_to_many_hosts.
inline constexpr int kCrossHostsPerDonor = 3;

// Patient-level donor-to-host pairing: entries are (donor patient, host
// patient) cells of the sparse boolean assignment matrix, diagonal-free.
// one_to_one and donor_patient_complete give each donor patient exactly one
// host (injectively); one_to_many_hosts gives each donor patient
// kCrossHostsPerDonor distinct hosts.
struct AssignmentMatrix {
  CrossPolicy policy = CrossPolicy::one_to_one;
  std::vector<std::pair<std::string, std::string>> pairs;
};

// Builds the pairing over donor patients (those with eligible nodules, from
// donor_dataset when nonempty) and host-eligible patients (from host_dataset
// when nonempty). one_to_one and donor_patient_complete match
// min(donors, hosts) pairs; surplus patients on either side go unmatched.
// Throws when no self-free pairing exists or a donor has fewer than
// kCrossHostsPerDonor host choices.
AssignmentMatrix cross_assignment(const CohortTable& table, CrossPolicy policy,
                                  std::uint64_t seed,
                                  std::string_view host_dataset = {},
                                  std::string_view donor_dataset = {},
                                  std::string_view subcohort = "all");

// M13: expands a pairing into rows (one per donor nodule and host). Dataset
// arguments restrict hosts and donors for the cross-dataset sub-cohorts.
Manifest build_cross(const CohortTable& table, CrossPolicy policy,
                     std::uint64_t seed, std::string_view host_dataset = {},
                     std::string_view donor_dataset = {},
                     std::string_view subcohort = "all");

// The 42 off-diagonal (host dataset, donor dataset) sub-cohorts of M13 over
// kDatasetTags, tagged "host-X_donor-Y"; pairs without donors or hosts yield
// empty manifests.
std::vector<Manifest> cross_mode_manifests(const CohortTable& table,
                                           CrossPolicy policy,
                                           std::uint64_t seed);

// Runs a whole mode: M1..M10 via mode_specs + build (+ build_multi), M11/M12
// via the twin constructors, M13 via the dataset grid under `policy`.
std::vector<Manifest> build_mode(std::string_view mode, const TrialSpec& base,
                                 const CohortTable& table,
                                 std::string_view policy = {},
                                 BuildStats* stats = nullptr);

// JSON config: the declarative fields (n, pi, template, phi_nod, phi_demo,
// sigma, B, d_excl) plus the run selectors (mode, policy).
struct TrialConfig {
  TrialSpec spec;
  std::string mode = "M1";
  std::string policy;  // M13 pairing policy name; empty elsewhere
};

TrialConfig parse_trial_config(const std::string& json_text);
TrialConfig load_trial_config(const std::filesystem::path& path);
std::string trial_config_json(const TrialConfig& config);

}  // namespace trialforge

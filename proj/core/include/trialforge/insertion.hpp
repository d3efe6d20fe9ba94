#pragma once
// Stage 3: executes manifest rows as constrained label insertions. Each row
// runs five steps: target the blueprint lobe, resample the donor mask onto the
// host grid at the row's scale, map the placement to a candidate voxel, snap
// out-of-parenchyma candidates to the nearest valid position, then validate
// pleural clearance and overlap, re-placing with jittered percentiles until
// accepted or attempts run out.
//
// Determinism: re-placement jitter for a row draws from
// RandomStream(0, "insert/jitter", row_index, attempt), so batches are
// bit-identical across runs and independent of scheduling.

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trialforge/labels.hpp"
#include "trialforge/phantom.hpp"
#include "trialforge/profiler.hpp"
#include "trialforge/trialengine.hpp"
#include "trialforge/voxgrid.hpp"

namespace trialforge {

struct InsertionConstraints {
  double alpha_min = kAlphaMin;
  double alpha_max = kAlphaMax;
  double rho_min_mm = 2.0;
  // Snap cap in mm; attempts snapping farther are retried. Unlimited by
  // default since no published threshold exists.
  double max_snap_mm = std::numeric_limits<double>::infinity();
  int max_replacements = 10;
};

enum class InsertionStatus { accepted, rejected };

// Rejection reasons, stable strings for the diagnostics CSV:
//   alpha_bounds         row scale outside [alpha_min, alpha_max]
//   empty_resample       donor mask vanishes at host spacing
//   no_feasible_position footprint fits nowhere in the target lobe
//   snap_cap             every attempt snapped farther than max_snap_mm
//   pleural_distance     every attempt landed shallower than rho_min
//   overlap              every attempt collided and overlap is not permitted
//   structural           unresolvable inputs (batch only; insert throws)
struct InsertionResult {
  std::size_t row_index = 0;
  InsertionStatus status = InsertionStatus::rejected;
  std::string reason;  // empty when accepted
  // Host anatomy with inserted voxels written as label 23. Rows of an M10/M12
  // group share their group's final composition; empty when rejected.
  LabelVolume composed;
  bool snap_triggered = false;
  double snap_distance_voxels = 0;
  double pleural_distance_mm = 0;
  double alpha = 0;
  std::size_t overlap_voxels = 0;
  WorldPoint final_placement;
  Lobe lobe = Lobe::RUL;
};

struct InsertionReport {
  std::string mode;
  std::string subcohort;
  std::size_t rows = 0;
  std::size_t accepted = 0;
  std::size_t snap_count = 0;  // accepted rows whose final attempt snapped
  double success_rate = 0;
  double snap_rate = 0;
  double mean_snap_distance_voxels = 0;  // over snapped rows, 0 when none
  double pleural_mean_mm = 0;            // over accepted rows
  double pleural_median_mm = 0;
  std::array<double, 7> alpha_edges{};       // six uniform bins over alpha bounds
  std::array<std::size_t, 6> alpha_histogram{};
  std::array<std::size_t, 5> lobe_counts{};  // accepted rows, canonical order
  double overlap_rate = 0;                   // accepted rows with overlap > 0
  std::map<std::string, std::size_t> rejections;  // reason -> count
};

// Foreground voxels of a mask as offsets from the voxel nearest its centroid
// (the anchor a placement center stands in for).
std::vector<VoxelIndex> mask_extent_offsets(const LabelVolume& mask);

// Nearest position (by Euclidean voxel distance, ties to the smallest linear
// index) whose whole extent lands on nonzero lobe-mask voxels. Distance 0 when
// the candidate is already valid. Throws when no valid position exists.
std::pair<WorldPoint, double> snap_correct(const WorldPoint& candidate,
                                           std::span<const VoxelIndex> extent_offsets,
                                           const LabelVolume& lobe_mask);

// One row into a fresh copy of the host anatomy. Structural problems (invalid
// blueprint, missing lobe, mismatched mask) throw; insertion failures return
// a rejected result.
InsertionResult insert(const ManifestRow& row, const LabelVolume& donor_mask,
                       const NoduleProfile& donor_profile, const PhantomPatient& host,
                       const InsertionConstraints& constraints = {},
                       bool permit_overlap = false);

// Whole manifest against a cohort. Rows resolve donors and hosts by patient id
// and nodule index. For M10 and M12, maximal consecutive same-host runs form
// groups composed into one volume with overlap permitted; every other mode
// inserts rows independently with overlap forbidden. Rejected rows are
// recorded, never thrown; results stay in manifest row order.
std::pair<std::vector<InsertionResult>, InsertionReport> insert_batch(
    const Manifest& manifest, std::span<const PhantomPatient> patients,
    std::span<const NoduleProfile> profiles,
    const InsertionConstraints& constraints = {});

InsertionReport insertion_report(const Manifest& manifest,
                                 std::span<const InsertionResult> results,
                                 const InsertionConstraints& constraints = {});

// Diagnostics CSV: row_index,status,snap,snap_dist,pleural_mm,alpha,overlap.
// status is "accepted" or "rejected(<reason>)".
void write_insertion_csv(const std::filesystem::path& path,
                         std::span<const InsertionResult> results);

std::string insertion_report_json(const InsertionReport& report);
void write_insertion_report(const std::filesystem::path& path,
                            const InsertionReport& report);

}  // namespace trialforge

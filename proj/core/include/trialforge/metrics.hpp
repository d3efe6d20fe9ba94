#pragma once
// Quality metric suite: HU histograms with intersection/KL/W1 distances,
// Fréchet and kernel distances over per-volume feature vectors, nodule ROI
// statistics, and the real-to-real pairwise baseline. Feature vectors are
// consumed from files; no extractor lives here.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trialforge/voxgrid.hpp"

namespace trialforge {

// cohort: every voxel over the full HU range. body: only voxels above
// -950 HU, binned over (-950, 3071].
enum class HistogramMode { cohort, body };

// Uniform binning over (lo, hi]; masses are normalized to sum to 1.
struct HUHistogram {
  int bins = 0;
  double lo = 0;
  double hi = 0;
  std::vector<double> mass;
  [[nodiscard]] double bin_width() const { return (hi - lo) / bins; }
};

// Throws when the selection is empty (all-air volume in body mode).
HUHistogram hu_histogram(const HUVolume& volume, HistogramMode mode,
                         int bins = 256);

// Sum of per-bin minima, in [0, 1]; 1 on identical histograms.
double histogram_intersection(const HUHistogram& p, const HUHistogram& q);

// KL(p || q~) with q smoothed by epsilon = 1e-10 and renormalized, so empty
// q bins stay finite. Asymmetric by construction.
double kl_divergence(const HUHistogram& p, const HUHistogram& q);

// 1-D earth mover's distance in HU: sum of |CDF differences| times bin width.
double wasserstein1(const HUHistogram& p, const HUHistogram& q);

// Per-volume feature vectors, one row per volume. Tags are optional; when
// present there is one per row.
struct FeatureSet {
  std::size_t dim = 0;
  std::vector<std::string> tags;
  std::vector<double> data;  // row-major
  [[nodiscard]] std::size_t rows() const { return dim == 0 ? 0 : data.size() / dim; }
};

// Fréchet distance between Gaussian moment fits of the two sets:
// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), covariance with the
// unbiased (n-1) estimator and the matrix square root by eigendecomposition
// of sqrt(S_a) S_b sqrt(S_a), eigenvalues below 1e-12 clipped to zero.
// Requires at least 2 rows per set and equal dimensions.
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

// Mean of per-plane Fréchet distances over paired feature files (the
// three-plane average when given a triple).
double frechet_average(std::span<const FeatureSet> a_planes,
                       std::span<const FeatureSet> b_planes);

// Unbiased MMD^2 with the cubic kernel k(x, y) = (x.y / dim + 1)^3.
double kid(const FeatureSet& a, const FeatureSet& b);

struct RoiStats {
  double mean_hu = 0;
  double sd_hu = 0;  // population
  std::int16_t min_hu = 0;
  std::int16_t max_hu = 0;
  std::size_t voxels = 0;
};

// Statistics over exactly the nodule-label voxels; throws when none exist.
RoiStats nodule_roi_stats(const HUVolume& hu, const LabelVolume& composed);

struct TaggedFeatures {
  std::string tag;
  FeatureSet features;
};

struct PairDistance {
  std::string a;
  std::string b;
  double fid = 0;
};

// All unordered cohort pairs with summary quartiles (linear interpolation
// between order statistics).
struct R2RBaseline {
  std::vector<PairDistance> pairs;
  double median_fid = 0;
  double q1_fid = 0;
  double q3_fid = 0;
};

R2RBaseline r2r_baseline(std::span<const TaggedFeatures> cohorts);

// CSV: one volume per row, optional leading tag column (detected by a
// non-numeric first field). ITSF: "ITSF1" magic, "rows=<r>;cols=<c>" header
// line, then row-major little-endian 32-bit floats.
FeatureSet read_features_csv(const std::filesystem::path& path);
void write_features_csv(const std::filesystem::path& path, const FeatureSet& fs);
FeatureSet read_features_itsf(const std::filesystem::path& path);
void write_features_itsf(const std::filesystem::path& path, const FeatureSet& fs);

// One line of the per-mode quality table.
struct QualityRow {
  std::string mode;
  double fid_avg = 0;
  double hi_mean = 0, hi_sd = 0;
  double kl_mean = 0, kl_sd = 0;
  double w1_mean = 0, w1_sd = 0;
  double cohort_hi = 0;
  double nodule_mean_hu = 0;
};

void write_quality_csv(const std::filesystem::path& path,
                       std::span<const QualityRow> rows);

}  // namespace trialforge

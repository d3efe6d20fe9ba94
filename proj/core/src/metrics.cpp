#include "trialforge/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

#include "trialforge/labels.hpp"

namespace trialforge {

namespace {

constexpr double kKlEpsilon = 1e-10;
constexpr double kEigClip = 1e-12;

void check_same_binning(const HUHistogram& p, const HUHistogram& q) {
  if (p.bins != q.bins || p.lo != q.lo || p.hi != q.hi)
    throw error("histogram binning mismatch");
  if (p.mass.size() != static_cast<std::size_t>(p.bins) ||
      q.mass.size() != static_cast<std::size_t>(q.bins))
    throw error("histogram mass size does not match bin count");
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                               Eigen::RowMajor>>
as_matrix(const FeatureSet& fs) {
  return {fs.data.data(), static_cast<Eigen::Index>(fs.rows()),
          static_cast<Eigen::Index>(fs.dim)};
}

void check_feature_pair(const FeatureSet& a, const FeatureSet& b) {
  if (a.dim == 0 || b.dim == 0 || a.dim != b.dim)
    throw error("feature dimension mismatch");
  if (a.data.size() % a.dim != 0 || b.data.size() % b.dim != 0)
    throw error("feature matrix is ragged");
  if (a.rows() < 2 || b.rows() < 2)
    throw error("feature sets need at least 2 rows");
}

// Symmetric PSD square root with small negative eigenvalues clipped.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw error("matrix square root failed");
  Eigen::VectorXd vals = eig.eigenvalues();
  for (Eigen::Index i = 0; i < vals.size(); ++i)
    vals(i) = vals(i) > kEigClip ? std::sqrt(vals(i)) : 0.0;
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

// Quartile by linear interpolation between closest order statistics.
double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw error("quantile of empty data");
  if (sorted.size() == 1) return sorted[0];
  const double h = q * (static_cast<double>(sorted.size()) - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

bool numeric_field(const std::string& field) {
  if (field.empty()) return false;
  char* end = nullptr;
  std::strtod(field.c_str(), &end);
  return end != field.c_str() && *end == '\0';
}

}  // namespace

HUHistogram hu_histogram(const HUVolume& volume, HistogramMode mode, int bins) {
  if (volume.empty()) throw error("histogram of empty volume");
  if (bins < 1) throw error("histogram needs at least one bin");
  HUHistogram h;
  h.bins = bins;
  h.lo = mode == HistogramMode::body ? -950.0 : -1024.0;
  h.hi = 3071.0;
  h.mass.assign(static_cast<std::size_t>(bins), 0.0);
  const double width = h.bin_width();
  std::size_t selected = 0;
  const auto& d = volume.dims();
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const double v = volume.at(x, y, z);
        if (mode == HistogramMode::body && v <= -950.0) continue;
        auto bin = static_cast<std::int64_t>(std::floor((v - h.lo) / width));
        bin = std::clamp<std::int64_t>(bin, 0, bins - 1);
        h.mass[static_cast<std::size_t>(bin)] += 1.0;
        ++selected;
      }
  if (selected == 0) throw error("histogram selection is empty");
  for (auto& m : h.mass) m /= static_cast<double>(selected);
  return h;
}

double histogram_intersection(const HUHistogram& p, const HUHistogram& q) {
  check_same_binning(p, q);
  double sum = 0;
  for (std::size_t i = 0; i < p.mass.size(); ++i)
    sum += std::min(p.mass[i], q.mass[i]);
  return sum;
}

double kl_divergence(const HUHistogram& p, const HUHistogram& q) {
  check_same_binning(p, q);
  const double norm = 1.0 + kKlEpsilon * static_cast<double>(q.bins);
  double sum = 0;
  for (std::size_t i = 0; i < p.mass.size(); ++i) {
    if (p.mass[i] <= 0) continue;
    const double smoothed = (q.mass[i] + kKlEpsilon) / norm;
    sum += p.mass[i] * std::log(p.mass[i] / smoothed);
  }
  return sum;
}

double wasserstein1(const HUHistogram& p, const HUHistogram& q) {
  check_same_binning(p, q);
  double cdf_gap = 0, sum = 0;
  for (std::size_t i = 0; i < p.mass.size(); ++i) {
    cdf_gap += p.mass[i] - q.mass[i];
    sum += std::abs(cdf_gap);
  }
  return sum * p.bin_width();
}

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  check_feature_pair(a, b);
  const auto ma = as_matrix(a);
  const auto mb = as_matrix(b);
  const Eigen::VectorXd mu_a = ma.colwise().mean();
  const Eigen::VectorXd mu_b = mb.colwise().mean();
  const Eigen::MatrixXd ca = (ma.rowwise() - mu_a.transpose()).transpose() *
                             (ma.rowwise() - mu_a.transpose()) /
                             static_cast<double>(a.rows() - 1);
  const Eigen::MatrixXd cb = (mb.rowwise() - mu_b.transpose()).transpose() *
                             (mb.rowwise() - mu_b.transpose()) /
                             static_cast<double>(b.rows() - 1);
  const Eigen::MatrixXd sa = psd_sqrt(ca);
  const Eigen::MatrixXd cross = psd_sqrt(sa * cb * sa);
  const double trace_term = ca.trace() + cb.trace() - 2.0 * cross.trace();
  return (mu_a - mu_b).squaredNorm() + trace_term;
}

double frechet_average(std::span<const FeatureSet> a_planes,
                       std::span<const FeatureSet> b_planes) {
  if (a_planes.empty() || a_planes.size() != b_planes.size())
    throw error("plane lists must be nonempty and paired");
  double sum = 0;
  for (std::size_t i = 0; i < a_planes.size(); ++i)
    sum += frechet_distance(a_planes[i], b_planes[i]);
  return sum / static_cast<double>(a_planes.size());
}

double kid(const FeatureSet& a, const FeatureSet& b) {
  check_feature_pair(a, b);
  const auto ma = as_matrix(a);
  const auto mb = as_matrix(b);
  const double d = static_cast<double>(a.dim);
  const auto kernel = [&](const auto& x, const auto& y) {
    const double v = x.dot(y) / d + 1.0;
    return v * v * v;
  };
  const auto m = static_cast<Eigen::Index>(a.rows());
  const auto n = static_cast<Eigen::Index>(b.rows());
  double kaa = 0, kbb = 0, kab = 0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j) kaa += kernel(ma.row(i), ma.row(j));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) kbb += kernel(mb.row(i), mb.row(j));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) kab += kernel(ma.row(i), mb.row(j));
  const double md = static_cast<double>(m);
  const double nd = static_cast<double>(n);
  return kaa / (md * (md - 1)) + kbb / (nd * (nd - 1)) - 2.0 * kab / (md * nd);
}

RoiStats nodule_roi_stats(const HUVolume& hu, const LabelVolume& composed) {
  if (hu.dims() != composed.dims())
    throw error("hu and label dims differ");
  RoiStats s;
  double sum = 0, sum_sq = 0;
  const auto& d = composed.dims();
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        if (composed.at(x, y, z) != labels::nodule) continue;
        const std::int16_t v = hu.at(x, y, z);
        if (s.voxels == 0) {
          s.min_hu = v;
          s.max_hu = v;
        } else {
          s.min_hu = std::min(s.min_hu, v);
          s.max_hu = std::max(s.max_hu, v);
        }
        sum += v;
        sum_sq += static_cast<double>(v) * v;
        ++s.voxels;
      }
  if (s.voxels == 0) throw error("no nodule voxels in composed volume");
  const double n = static_cast<double>(s.voxels);
  s.mean_hu = sum / n;
  s.sd_hu = std::sqrt(std::max(0.0, sum_sq / n - s.mean_hu * s.mean_hu));
  return s;
}

R2RBaseline r2r_baseline(std::span<const TaggedFeatures> cohorts) {
  if (cohorts.size() < 2) throw error("r2r baseline needs at least 2 cohorts");
  R2RBaseline out;
  std::vector<double> fids;
  for (std::size_t i = 0; i < cohorts.size(); ++i)
    for (std::size_t j = i + 1; j < cohorts.size(); ++j) {
      const double fid = frechet_distance(cohorts[i].features, cohorts[j].features);
      out.pairs.push_back({cohorts[i].tag, cohorts[j].tag, fid});
      fids.push_back(fid);
    }
  std::sort(fids.begin(), fids.end());
  out.q1_fid = quantile_sorted(fids, 0.25);
  out.median_fid = quantile_sorted(fids, 0.5);
  out.q3_fid = quantile_sorted(fids, 0.75);
  return out;
}

FeatureSet read_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw error("cannot open: " + path.string());
  FeatureSet fs;
  bool tagged = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    if (fs.dim == 0 && fs.data.empty()) tagged = !numeric_field(fields.front());
    std::size_t first = tagged ? 1 : 0;
    if (fields.size() <= first)
      throw error(path.string() + ":" + std::to_string(line_no) + ": no values");
    if (tagged) fs.tags.push_back(fields[0]);
    const std::size_t dim = fields.size() - first;
    if (fs.dim == 0)
      fs.dim = dim;
    else if (dim != fs.dim)
      throw error(path.string() + ":" + std::to_string(line_no) +
                  ": expected " + std::to_string(fs.dim) + " values, got " +
                  std::to_string(dim));
    for (std::size_t i = first; i < fields.size(); ++i) {
      if (!numeric_field(fields[i]))
        throw error(path.string() + ":" + std::to_string(line_no) +
                    ": non-numeric value '" + fields[i] + "'");
      fs.data.push_back(std::stod(fields[i]));
    }
  }
  if (fs.data.empty()) throw error("no feature rows in " + path.string());
  return fs;
}

void write_features_csv(const std::filesystem::path& path, const FeatureSet& fs) {
  if (!fs.tags.empty() && fs.tags.size() != fs.rows())
    throw error("tag count does not match row count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot open for writing: " + path.string());
  for (std::size_t r = 0; r < fs.rows(); ++r) {
    if (!fs.tags.empty()) out << fs.tags[r] << ',';
    for (std::size_t c = 0; c < fs.dim; ++c) {
      if (c) out << ',';
      out << shortest_double(fs.data[r * fs.dim + c]);
    }
    out << '\n';
  }
  if (!out) throw error("write failed: " + path.string());
}

FeatureSet read_features_itsf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open: " + path.string());
  std::string magic, header;
  std::getline(in, magic);
  if (magic != "ITSF1") throw error("bad ITSF magic in " + path.string());
  std::getline(in, header);
  std::size_t rows = 0, cols = 0;
  if (std::sscanf(header.c_str(), "rows=%zu;cols=%zu", &rows, &cols) != 2 ||
      rows == 0 || cols == 0)
    throw error("bad ITSF header in " + path.string());
  FeatureSet fs;
  fs.dim = cols;
  fs.data.resize(rows * cols);
  std::vector<unsigned char> raw(rows * cols * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw error("truncated ITSF payload in " + path.string());
  for (std::size_t i = 0; i < rows * cols; ++i) {
    std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) |
                         static_cast<std::uint32_t>(raw[4 * i + 1]) << 8 |
                         static_cast<std::uint32_t>(raw[4 * i + 2]) << 16 |
                         static_cast<std::uint32_t>(raw[4 * i + 3]) << 24;
    fs.data[i] = std::bit_cast<float>(bits);
  }
  return fs;
}

void write_features_itsf(const std::filesystem::path& path, const FeatureSet& fs) {
  if (fs.dim == 0 || fs.rows() == 0) throw error("empty feature set");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot open for writing: " + path.string());
  out << "ITSF1\nrows=" << fs.rows() << ";cols=" << fs.dim << "\n";
  for (const double value : fs.data) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
    const char bytes[4] = {static_cast<char>(bits & 0xff),
                           static_cast<char>(bits >> 8 & 0xff),
                           static_cast<char>(bits >> 16 & 0xff),
                           static_cast<char>(bits >> 24 & 0xff)};
    out.write(bytes, 4);
  }
  if (!out) throw error("write failed: " + path.string());
}

void write_quality_csv(const std::filesystem::path& path,
                       std::span<const QualityRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot open for writing: " + path.string());
  out << "mode,fid_avg,hi_mean,hi_sd,kl_mean,kl_sd,w1_mean,w1_sd,cohort_hi,"
         "nodule_mean_hu\n";
  for (const auto& r : rows) {
    out << r.mode << ',' << shortest_double(r.fid_avg) << ','
        << shortest_double(r.hi_mean) << ',' << shortest_double(r.hi_sd) << ','
        << shortest_double(r.kl_mean) << ',' << shortest_double(r.kl_sd) << ','
        << shortest_double(r.w1_mean) << ',' << shortest_double(r.w1_sd) << ','
        << shortest_double(r.cohort_hi) << ',' << shortest_double(r.nodule_mean_hu)
        << '\n';
  }
  if (!out) throw error("write failed: " + path.string());
}

}  // namespace trialforge

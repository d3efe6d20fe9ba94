#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "trialforge/labels.hpp"
#include "trialforge/metrics.hpp"
#include "trialforge/rng.hpp"
#include "trialforge/voxgrid.hpp"

using namespace trialforge;

namespace {

HUHistogram make_hist(double lo, double hi, std::vector<double> mass) {
  HUHistogram h;
  h.bins = static_cast<int>(mass.size());
  h.lo = lo;
  h.hi = hi;
  h.mass = std::move(mass);
  return h;
}

HUVolume constant_volume(std::int16_t hu, Dims dims = {8, 8, 8}) {
  HUVolume vol(dims, {1, 1, 1});
  for (int z = 0; z < dims.nz; ++z)
    for (int y = 0; y < dims.ny; ++y)
      for (int x = 0; x < dims.nx; ++x) vol.at(x, y, z) = hu;
  return vol;
}

// Optimal transport cost between two histograms on the same bin centers,
// solved as a min-cost flow with successive shortest paths (Bellman-Ford on
// the residual bipartite graph). Independent of any CDF identity. Arc costs
// are integer bin-index gaps so path sums stay exact; real-valued HU costs
// accumulate rounding that can fake a negative residual cycle and trap the
// parent walk. The bin width scales the result once at the end.
double w1_lp_oracle(const HUHistogram& p, const HUHistogram& q) {
  const auto n = p.mass.size();
  std::vector<double> supply = p.mass, demand = q.mass;
  std::vector<std::vector<double>> flow(n, std::vector<double>(n, 0.0));
  const auto cost = [&](std::size_t i, std::size_t j) {
    return std::abs(static_cast<double>(i) - static_cast<double>(j));
  };
  constexpr double kTol = 1e-15;
  double remaining = std::accumulate(supply.begin(), supply.end(), 0.0);
  std::size_t augmentations = 0;
  while (remaining > kTol) {
    REQUIRE(++augmentations <= 4 * n * n);
    // Shortest path from any unexhausted supply to any unmet demand over the
    // residual graph. Nodes: 0..n-1 supplies, n..2n-1 demands.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(2 * n, inf);
    std::vector<int> parent(2 * n, -1);
    for (std::size_t i = 0; i < n; ++i)
      if (supply[i] > kTol) dist[i] = 0;
    for (std::size_t pass = 0; pass < 2 * n; ++pass) {
      bool relaxed = false;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          if (dist[i] < inf && dist[i] + cost(i, j) < dist[n + j]) {
            dist[n + j] = dist[i] + cost(i, j);
            parent[n + j] = static_cast<int>(i);
            relaxed = true;
          }
          if (flow[i][j] > kTol && dist[n + j] < inf &&
              dist[n + j] - cost(i, j) < dist[i]) {
            dist[i] = dist[n + j] - cost(i, j);
            parent[i] = static_cast<int>(n + j);
            relaxed = true;
          }
        }
      if (!relaxed) break;
    }
    std::size_t best = 2 * n;
    for (std::size_t j = 0; j < n; ++j)
      if (demand[j] > kTol && dist[n + j] < inf &&
          (best == 2 * n || dist[n + j] < dist[best]))
        best = n + j;
    REQUIRE(best != 2 * n);
    // Bottleneck along the path.
    double delta = demand[best - n];
    std::size_t steps = 0;
    for (std::size_t node = best; parent[node] != -1;
         node = static_cast<std::size_t>(parent[node])) {
      REQUIRE(++steps <= 2 * n);
      const auto prev = static_cast<std::size_t>(parent[node]);
      if (node >= n) {
        if (parent[prev] == -1) delta = std::min(delta, supply[prev]);
      } else {
        delta = std::min(delta, flow[node][prev - n]);
      }
    }
    // Apply.
    for (std::size_t node = best; parent[node] != -1;
         node = static_cast<std::size_t>(parent[node])) {
      const auto prev = static_cast<std::size_t>(parent[node]);
      if (node >= n)
        flow[prev][node - n] += delta;
      else
        flow[node][prev - n] -= delta;
    }
    std::size_t src = best;
    while (parent[src] != -1) src = static_cast<std::size_t>(parent[src]);
    supply[src] -= delta;
    demand[best - n] -= delta;
    remaining -= delta;
  }
  double total = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) total += flow[i][j] * cost(i, j);
  return total * p.bin_width();
}

FeatureSet features_from_rows(const std::vector<std::vector<double>>& rows) {
  FeatureSet fs;
  fs.dim = rows.front().size();
  for (const auto& r : rows) {
    REQUIRE(r.size() == fs.dim);
    fs.data.insert(fs.data.end(), r.begin(), r.end());
  }
  return fs;
}

// Rows mu +/- delta_i e_i whose empirical mean is exactly mu and whose
// unbiased covariance is exactly diagonal with v_i = 2 delta_i^2 / (2d - 1).
FeatureSet diagonal_moment_set(const std::vector<double>& mu,
                               const std::vector<double>& variances) {
  const std::size_t d = mu.size();
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < d; ++i) {
    const double delta =
        std::sqrt(variances[i] * (2.0 * static_cast<double>(d) - 1.0) / 2.0);
    auto hi = mu, lo = mu;
    hi[i] += delta;
    lo[i] -= delta;
    rows.push_back(hi);
    rows.push_back(lo);
  }
  return features_from_rows(rows);
}

double kid_brute_force(const FeatureSet& a, const FeatureSet& b) {
  const auto kernel = [&](std::size_t ra, const FeatureSet& fa, std::size_t rb,
                          const FeatureSet& fb) {
    double dot = 0;
    for (std::size_t c = 0; c < fa.dim; ++c)
      dot += fa.data[ra * fa.dim + c] * fb.data[rb * fb.dim + c];
    const double v = dot / static_cast<double>(fa.dim) + 1.0;
    return v * v * v;
  };
  const auto m = a.rows(), n = b.rows();
  double kaa = 0, kbb = 0, kab = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) kaa += kernel(i, a, j, a);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) kbb += kernel(i, b, j, b);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) kab += kernel(i, a, j, b);
  const auto md = static_cast<double>(m), nd = static_cast<double>(n);
  return kaa / (md * (md - 1)) + kbb / (nd * (nd - 1)) - 2.0 * kab / (md * nd);
}

FeatureSet random_features(RandomStream& rng, std::size_t rows, std::size_t dim) {
  FeatureSet fs;
  fs.dim = dim;
  for (std::size_t i = 0; i < rows * dim; ++i)
    fs.data.push_back(rng.normal(0.0, 1.0));
  return fs;
}

}  // namespace

TEST_CASE("histograms from volumes are normalized over the declared range") {
  const auto h = hu_histogram(constant_volume(-600), HistogramMode::cohort);
  CHECK(h.bins == 256);
  CHECK(h.lo == -1024.0);
  CHECK(h.hi == 3071.0);
  double sum = 0;
  int nonzero = 0;
  for (const auto m : h.mass) {
    CHECK(m >= 0.0);
    sum += m;
    if (m > 0) ++nonzero;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(nonzero == 1);

  // Two-value volume splits evenly across two bins.
  HUVolume two(Dims{8, 8, 8}, {1, 1, 1});
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) two.at(x, y, z) = (x < 4) ? -600 : 300;
  const auto h2 = hu_histogram(two, HistogramMode::cohort);
  std::vector<double> nz;
  for (const auto m : h2.mass)
    if (m > 0) nz.push_back(m);
  REQUIRE(nz.size() == 2);
  CHECK(nz[0] == doctest::Approx(0.5));
  CHECK(nz[1] == doctest::Approx(0.5));
}

TEST_CASE("body mode drops air and fails on all-air volumes") {
  HUVolume vol(Dims{4, 4, 4}, {1, 1, 1});
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) vol.at(x, y, z) = (z == 0) ? 40 : -1000;
  const auto h = hu_histogram(vol, HistogramMode::body);
  CHECK(h.lo == -950.0);
  double sum = 0;
  for (const auto m : h.mass) sum += m;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));  // only the soft voxels

  CHECK_THROWS_AS(
      static_cast<void>(hu_histogram(constant_volume(-1000), HistogramMode::body)),
      error);
  // -950 itself is excluded, one HU above is kept.
  CHECK_THROWS_AS(
      static_cast<void>(hu_histogram(constant_volume(-950), HistogramMode::body)),
      error);
  CHECK_NOTHROW(
      static_cast<void>(hu_histogram(constant_volume(-949), HistogramMode::body)));
}

TEST_CASE("histogram intersection identities") {
  const auto p = make_hist(0, 3, {0.5, 0.5, 0.0});
  const auto q = make_hist(0, 3, {0.25, 0.25, 0.5});
  CHECK(histogram_intersection(p, p) == doctest::Approx(1.0));
  CHECK(histogram_intersection(p, q) == doctest::Approx(0.5));
  CHECK(histogram_intersection(q, p) == doctest::Approx(0.5));
  const auto r = make_hist(0, 3, {0.0, 0.0, 1.0});
  const auto s = make_hist(0, 3, {1.0, 0.0, 0.0});
  CHECK(histogram_intersection(r, s) == 0.0);
  CHECK_THROWS_AS(static_cast<void>(histogram_intersection(p, make_hist(0, 4, {1, 0}))),
                  error);
}

TEST_CASE("kl divergence identities and asymmetry") {
  const auto p = make_hist(0, 2, {1.0, 0.0});
  const auto q = make_hist(0, 2, {0.5, 0.5});
  CHECK(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(kl_divergence(q, q) == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(kl_divergence(p, q) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(kl_divergence(p, q) != kl_divergence(q, p));
  // Smoothing keeps zero target bins finite.
  const auto zeroed = make_hist(0, 2, {0.0, 1.0});
  CHECK(std::isfinite(kl_divergence(q, zeroed)));
  CHECK(kl_divergence(q, zeroed) >= 0.0);
}

TEST_CASE("wasserstein distance matches translation and identity") {
  // 100 HU-wide bins put the two point masses one bin apart.
  const auto p = make_hist(-640, 160, {1, 0, 0, 0, 0, 0, 0, 0});
  const auto q = make_hist(-640, 160, {0, 1, 0, 0, 0, 0, 0, 0});
  CHECK(wasserstein1(p, q) == doctest::Approx(100.0));
  CHECK(wasserstein1(p, p) == 0.0);
  CHECK(wasserstein1(q, p) == doctest::Approx(100.0));
}

TEST_CASE("wasserstein equals the transport lp on every small case") {
  RandomStream rng(5, "test/w1-lp");
  for (int trial = 0; trial < 25; ++trial) {
    const int bins = 2 + static_cast<int>(rng.uniform_below(15));  // up to 16
    std::vector<double> pm(static_cast<std::size_t>(bins)), qm(pm.size());
    double ps = 0, qs = 0;
    for (auto& v : pm) {
      v = rng.next_unit();
      ps += v;
    }
    for (auto& v : qm) {
      v = rng.next_unit();
      qs += v;
    }
    // Occasional sparse masses exercise zero bins.
    if (trial % 3 == 0) {
      pm[0] = 0;
      qm[static_cast<std::size_t>(bins) - 1] = 0;
      ps = std::accumulate(pm.begin(), pm.end(), 0.0);
      qs = std::accumulate(qm.begin(), qm.end(), 0.0);
    }
    for (auto& v : pm) v /= ps;
    for (auto& v : qm) v /= qs;
    const auto p = make_hist(-1024, 3071, pm);
    const auto q = make_hist(-1024, 3071, qm);
    CHECK(wasserstein1(p, q) == doctest::Approx(w1_lp_oracle(p, q)).epsilon(1e-9));
  }
}

TEST_CASE("frechet distance vanishes on identical sets") {
  RandomStream rng(8, "test/fid-self");
  const auto a = random_features(rng, 12, 6);
  CHECK(frechet_distance(a, a) == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("frechet distance matches the 1-d closed form") {
  // Statistical: large samples from N(0,1) and N(3,1) give roughly 9.
  RandomStream rng(13, "test/fid-gauss");
  FeatureSet a, b;
  a.dim = 1;
  b.dim = 1;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) a.data.push_back(rng.normal(0.0, 1.0));
  for (std::size_t i = 0; i < n; ++i) b.data.push_back(rng.normal(3.0, 1.0));
  const double fid = frechet_distance(a, b);
  CHECK(fid == doctest::Approx(9.0).epsilon(0.01));

  // Exact: the 1-d formula (m1-m2)^2 + (s1-s2)^2 on the empirical moments.
  const auto moments = [](const FeatureSet& fs) {
    const double mean =
        std::accumulate(fs.data.begin(), fs.data.end(), 0.0) /
        static_cast<double>(fs.data.size());
    double ss = 0;
    for (const double v : fs.data) ss += (v - mean) * (v - mean);
    return std::pair{mean, std::sqrt(ss / (static_cast<double>(fs.data.size()) - 1))};
  };
  const auto [ma, sa] = moments(a);
  const auto [mb, sb] = moments(b);
  const double closed = (ma - mb) * (ma - mb) + (sa - sb) * (sa - sb);
  CHECK(fid == doctest::Approx(closed).epsilon(1e-9));
}

TEST_CASE("frechet distance matches the diagonal closed form on exact moments") {
  const std::vector<double> mu_a{0.0, 1.0, -2.0};
  const std::vector<double> va{1.0, 4.0, 0.25};
  const std::vector<double> mu_b{0.5, -1.0, 0.0};
  const std::vector<double> vb{2.0, 1.0, 1.0};
  const auto a = diagonal_moment_set(mu_a, va);
  const auto b = diagonal_moment_set(mu_b, vb);
  double expected = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    expected += (mu_a[i] - mu_b[i]) * (mu_a[i] - mu_b[i]);
    expected += va[i] + vb[i] - 2.0 * std::sqrt(va[i] * vb[i]);
  }
  CHECK(frechet_distance(a, b) == doctest::Approx(expected).epsilon(1e-6));
  // Pseudometric: symmetric and nonnegative.
  CHECK(frechet_distance(b, a) == doctest::Approx(frechet_distance(a, b)));
  CHECK(frechet_distance(a, b) >= 0.0);
}

TEST_CASE("frechet preconditions reject bad inputs") {
  RandomStream rng(3, "test/fid-bad");
  const auto a = random_features(rng, 4, 3);
  const auto b = random_features(rng, 4, 2);
  CHECK_THROWS_AS(static_cast<void>(frechet_distance(a, b)), error);
  FeatureSet single;
  single.dim = 3;
  single.data = {1, 2, 3};
  CHECK_THROWS_AS(static_cast<void>(frechet_distance(a, single)), error);
}

TEST_CASE("frechet average is the mean of per-plane distances") {
  RandomStream rng(9, "test/fid-avg");
  std::vector<FeatureSet> as, bs;
  for (int i = 0; i < 3; ++i) {
    as.push_back(random_features(rng, 10, 4));
    bs.push_back(random_features(rng, 12, 4));
  }
  double mean = 0;
  for (int i = 0; i < 3; ++i) mean += frechet_distance(as[i], bs[i]);
  mean /= 3;
  CHECK(frechet_average(as, bs) == doctest::Approx(mean).epsilon(1e-12));
  as.pop_back();
  CHECK_THROWS_AS(static_cast<void>(frechet_average(as, bs)), error);
}

TEST_CASE("kid matches the brute-force u-statistic") {
  RandomStream rng(4, "test/kid");
  for (const auto [m, n, d] : {std::array<std::size_t, 3>{5, 7, 3},
                               {20, 20, 8},
                               {50, 30, 4}}) {
    const auto a = random_features(rng, m, d);
    const auto b = random_features(rng, n, d);
    CHECK(kid(a, b) == doctest::Approx(kid_brute_force(a, b)).epsilon(1e-12));
    CHECK(kid(b, a) == doctest::Approx(kid(a, b)).epsilon(1e-12));
  }
  // Identical sets still go through the unbiased estimator.
  const auto a = random_features(rng, 15, 5);
  CHECK(kid(a, a) == doctest::Approx(kid_brute_force(a, a)).epsilon(1e-12));
}

TEST_CASE("kid on orthogonal singleton directions is hand-computable") {
  FeatureSet a, b;
  a.dim = 4;
  b.dim = 4;
  a.data = {1, 0, 0, 0, 1, 0, 0, 0};  // two copies of e1
  b.data = {0, 1, 0, 0, 0, 1, 0, 0};  // two copies of e2
  // within-set kernel (1/4 + 1)^3, cross kernel 1^3.
  const double k_same = std::pow(1.25, 3);
  CHECK(kid(a, b) == doctest::Approx(2 * k_same - 2.0).epsilon(1e-12));
}

TEST_CASE("nodule roi stats are exact over the mask") {
  LabelVolume composed(Dims{4, 4, 4}, {1, 1, 1});
  HUVolume hu(Dims{4, 4, 4}, {1, 1, 1});
  composed.at(1, 1, 1) = labels::nodule;
  composed.at(2, 1, 1) = labels::nodule;
  hu.at(1, 1, 1) = -700;
  hu.at(2, 1, 1) = -500;
  hu.at(0, 0, 0) = 3000;  // outside the mask, ignored
  const auto s = nodule_roi_stats(hu, composed);
  CHECK(s.voxels == 2);
  CHECK(s.mean_hu == doctest::Approx(-600.0));
  CHECK(s.sd_hu == doctest::Approx(100.0));  // population sd
  CHECK(s.min_hu == -700);
  CHECK(s.max_hu == -500);

  LabelVolume lone(Dims{4, 4, 4}, {1, 1, 1});
  lone.at(3, 3, 3) = labels::nodule;
  HUVolume flat = constant_volume(-600, {4, 4, 4});
  const auto c = nodule_roi_stats(flat, lone);
  CHECK(c.mean_hu == doctest::Approx(-600.0));
  CHECK(c.sd_hu == 0.0);
  CHECK(c.min_hu == -600);
  CHECK(c.max_hu == -600);

  CHECK_THROWS_AS(static_cast<void>(nodule_roi_stats(hu, LabelVolume({4, 4, 4}, {1, 1, 1}))),
                  error);
}

TEST_CASE("r2r baseline enumerates unordered pairs with quartiles") {
  // 1-d two-point cohorts with exact unit variance: pairwise FID is the
  // squared mean gap.
  const auto cohort = [](double mean) {
    TaggedFeatures tf;
    tf.features.dim = 1;
    const double delta = std::sqrt(0.5);
    tf.features.data = {mean - delta, mean + delta};
    return tf;
  };
  std::vector<TaggedFeatures> cohorts{cohort(0.0), cohort(1.0), cohort(3.0)};
  cohorts[0].tag = "A";
  cohorts[1].tag = "B";
  cohorts[2].tag = "C";
  const auto base = r2r_baseline(cohorts);
  REQUIRE(base.pairs.size() == 3);
  CHECK(base.pairs[0].a == "A");
  CHECK(base.pairs[0].b == "B");
  CHECK(base.pairs[0].fid == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(base.pairs[1].fid == doctest::Approx(9.0).epsilon(1e-9));
  CHECK(base.pairs[2].fid == doctest::Approx(4.0).epsilon(1e-9));
  // Sorted distances 1, 4, 9: type-7 quartiles.
  CHECK(base.median_fid == doctest::Approx(4.0));
  CHECK(base.q1_fid == doctest::Approx(2.5));
  CHECK(base.q3_fid == doctest::Approx(6.5));

  // Six cohorts give 15 pairs; identical cohorts give an all-zero table.
  std::vector<TaggedFeatures> six;
  for (int i = 0; i < 6; ++i) {
    auto tf = cohort(0.0);
    tf.tag = "D" + std::to_string(i);
    six.push_back(std::move(tf));
  }
  const auto zero = r2r_baseline(six);
  CHECK(zero.pairs.size() == 15);
  for (const auto& pr : zero.pairs) CHECK(pr.fid == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(zero.median_fid == doctest::Approx(0.0).epsilon(1e-10));

  CHECK_THROWS_AS(static_cast<void>(r2r_baseline(std::span<const TaggedFeatures>{
                      cohorts.data(), 1})),
                  error);
}

TEST_CASE("feature csv round trips with and without tags") {
  FeatureSet fs;
  fs.dim = 3;
  fs.data = {1.5, -2.25, 0.0, 4.0, 5.5, -6.125};
  const auto dir = std::filesystem::temp_directory_path();
  const auto plain = dir / "tf_features_plain.csv";
  write_features_csv(plain, fs);
  const auto back = read_features_csv(plain);
  CHECK(back.dim == 3);
  CHECK(back.data == fs.data);
  CHECK(back.tags.empty());

  fs.tags = {"vol0", "vol1"};
  const auto tagged = dir / "tf_features_tagged.csv";
  write_features_csv(tagged, fs);
  const auto tback = read_features_csv(tagged);
  CHECK(tback.tags == fs.tags);
  CHECK(tback.data == fs.data);
  std::filesystem::remove(plain);
  std::filesystem::remove(tagged);
}

TEST_CASE("feature csv rejects ragged and non-numeric rows") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "tf_features_bad.csv";
  std::ofstream(path) << "1,2,3\n4,5\n";
  CHECK_THROWS_AS(static_cast<void>(read_features_csv(path)), error);
  std::ofstream(path) << "1,2\n3,oops\n";
  CHECK_THROWS_AS(static_cast<void>(read_features_csv(path)), error);
  std::ofstream(path) << "";
  CHECK_THROWS_AS(static_cast<void>(read_features_csv(path)), error);
  std::filesystem::remove(path);
}

TEST_CASE("itsf binary round trips float32 payloads") {
  FeatureSet fs;
  fs.dim = 2;
  fs.data = {1.5, -0.25, 1024.0, 0.0, -3.75, 65536.0};
  const auto path = std::filesystem::temp_directory_path() / "tf_features.itsf";
  write_features_itsf(path, fs);
  const auto back = read_features_itsf(path);
  CHECK(back.dim == 2);
  CHECK(back.rows() == 3);
  CHECK(back.data == fs.data);  // all values exactly float-representable

  std::ofstream(path, std::ios::binary) << "NOPE1\nrows=1;cols=1\n";
  CHECK_THROWS_AS(static_cast<void>(read_features_itsf(path)), error);
  std::ofstream(path, std::ios::binary) << "ITSF1\nrows=2;cols=2\n\x00\x00";
  CHECK_THROWS_AS(static_cast<void>(read_features_itsf(path)), error);
  std::filesystem::remove(path);
}

TEST_CASE("quality csv mirrors the table columns") {
  QualityRow row;
  row.mode = "M1";
  row.fid_avg = 1.5;
  row.hi_mean = 0.9;
  row.hi_sd = 0.05;
  row.kl_mean = 0.12;
  row.kl_sd = 0.01;
  row.w1_mean = 25.5;
  row.w1_sd = 3.25;
  row.cohort_hi = 0.95;
  row.nodule_mean_hu = -612.5;
  const auto path = std::filesystem::temp_directory_path() / "tf_quality.csv";
  write_quality_csv(path, std::span<const QualityRow>{&row, 1});
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line ==
        "mode,fid_avg,hi_mean,hi_sd,kl_mean,kl_sd,w1_mean,w1_sd,cohort_hi,"
        "nodule_mean_hu");
  std::getline(in, line);
  CHECK(line == "M1,1.5,0.9,0.05,0.12,0.01,25.5,3.25,0.95,-612.5");
  std::filesystem::remove(path);
}

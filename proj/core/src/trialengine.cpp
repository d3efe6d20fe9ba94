#include "trialforge/trialengine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "trialforge/digest.hpp"
#include "trialforge/rng.hpp"

namespace trialforge {

namespace {

constexpr double kWeightSumTolerance = 1e-9;

double weight_sum(std::span<const double> w) {
  double s = 0;
  for (double v : w) s += v;
  return s;
}

std::string join(std::span<const std::string> parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

int size_bin(double diameter_mm) {
  if (diameter_mm < 0 || std::isnan(diameter_mm))
    throw error("size_bin: diameter must be non-negative");
  for (int i = 0; i < 6; ++i)
    if (diameter_mm < kSizeBinEdgesMm[static_cast<std::size_t>(i) + 1]) return i;
  return 5;
}

Template trial_template(std::string_view name) {
  Template t;
  if (name == "NLST") {
    t.name = "NLST";
    t.prevalence = 0.040;
    t.size_weights = {0.42, 0.38, 0.11, 0.05, 0.03, 0.01};
    t.lobe_weights = {0.30, 0.08, 0.18, 0.28, 0.16};
    t.demographics.age_kind = DemographicModel::AgeKind::normal_clipped;
    t.demographics.age_a = 61.4;
    t.demographics.age_b = 5.0;
    t.demographics.age_lo = 55.0;
    t.demographics.age_hi = 74.0;
    t.demographics.male_fraction = 0.59;
    return t;
  }
  if (name == "NELSON") {
    t.name = "NELSON";
    t.prevalence = 0.022;
    t.size_weights = {0.38, 0.40, 0.14, 0.05, 0.02, 0.01};
    t.lobe_weights = {0.28, 0.08, 0.19, 0.27, 0.18};
    t.demographics.age_kind = DemographicModel::AgeKind::uniform;
    t.demographics.age_a = 50.0;
    t.demographics.age_b = 75.0;
    t.demographics.male_fraction = 0.84;
    return t;
  }
  throw error("unknown trial template: " + std::string(name));
}

TrialSpec default_trial_spec() {
  TrialSpec s;
  s.tmpl = trial_template("NLST");
  s.n = 1000;
  s.pi = s.tmpl.prevalence;
  s.sigma = 0;
  s.bootstrap_replicates = 0;
  return s;
}

bool DonorFilter::matches(const NoduleProfile& profile) const {
  if (size_mm && !size_mm->contains(profile.mean_diameter_mm)) return false;
  if (!lobes.empty()) {
    if (!profile.lobe) return false;
    if (std::find(lobes.begin(), lobes.end(), *profile.lobe) == lobes.end())
      return false;
  }
  if (!datasets.empty() &&
      std::find(datasets.begin(), datasets.end(), profile.dataset_tag) ==
          datasets.end())
    return false;
  return true;
}

bool HostFilter::matches(const HostRecord& host) const {
  if (dataset && host.dataset_tag != *dataset) return false;
  if (std::find(datasets_excluded.begin(), datasets_excluded.end(),
                host.dataset_tag) != datasets_excluded.end())
    return false;
  if (sex && host.sex != *sex) return false;
  if (age && (host.age_years < (*age)[0] || host.age_years >= (*age)[1]))
    return false;
  return true;
}

// --- digests --------------------------------------------------------------------

namespace {

std::string canonical_spec(const TrialSpec& s) {
  std::string out;
  out += "n=" + std::to_string(s.n);
  out += ";pi=" + shortest_double(s.pi);
  out += ";template=" + s.tmpl.name;
  out += ";tpl_pi=" + shortest_double(s.tmpl.prevalence);
  out += ";w=";
  for (int i = 0; i < 6; ++i)
    out += (i ? "," : "") + shortest_double(s.tmpl.size_weights[static_cast<std::size_t>(i)]);
  out += ";lambda=";
  for (int i = 0; i < 5; ++i)
    out += (i ? "," : "") + shortest_double(s.tmpl.lobe_weights[static_cast<std::size_t>(i)]);
  const auto& d = s.tmpl.demographics;
  out += ";age_kind=";
  out += d.age_kind == DemographicModel::AgeKind::normal_clipped ? "normal" : "uniform";
  out += ";age=" + shortest_double(d.age_a) + "," + shortest_double(d.age_b) +
         "," + shortest_double(d.age_lo) + "," + shortest_double(d.age_hi);
  out += ";male=" + shortest_double(d.male_fraction);
  out += ";nod_size=";
  out += s.donor_filter.size_mm
             ? shortest_double(s.donor_filter.size_mm->lo) + "," +
                   shortest_double(s.donor_filter.size_mm->hi)
             : std::string("any");
  out += ";nod_lobes=";
  if (s.donor_filter.lobes.empty()) {
    out += "any";
  } else {
    for (std::size_t i = 0; i < s.donor_filter.lobes.size(); ++i)
      out += (i ? "|" : "") + std::string(to_string(s.donor_filter.lobes[i]));
  }
  out += ";nod_datasets=";
  out += s.donor_filter.datasets.empty() ? "any" : join(s.donor_filter.datasets, '|');
  out += ";ins=" + shortest_double(s.insertion.alpha_max) + "," +
         shortest_double(s.insertion.rho_min_mm);
  out += ";demo_dataset=" + (s.host_filter.dataset ? *s.host_filter.dataset
                                                   : std::string("any"));
  auto excluded = s.host_filter.datasets_excluded;
  std::sort(excluded.begin(), excluded.end());
  out += ";demo_not=" + (excluded.empty() ? std::string("-") : join(excluded, '|'));
  out += ";demo_sex=";
  out += s.host_filter.sex ? std::string(1, *s.host_filter.sex) : std::string("any");
  out += ";demo_age=";
  out += s.host_filter.age ? shortest_double((*s.host_filter.age)[0]) + "," +
                                 shortest_double((*s.host_filter.age)[1])
                           : std::string("any");
  out += ";sigma=" + std::to_string(s.sigma);
  out += ";B=" + std::to_string(s.bootstrap_replicates);
  auto excl = s.excluded_datasets;
  std::sort(excl.begin(), excl.end());
  out += ";d_excl=" + (excl.empty() ? std::string("-") : join(excl, '|'));
  return out;
}

std::string canonical_row(const ManifestRow& r) {
  std::string out = std::to_string(r.row_index);
  out += ',' + r.donor_patient;
  out += ',' + std::to_string(r.donor_nodule);
  out += ',' + r.host_patient;
  out += ',' + std::string(to_string(r.label));
  out += ',' + std::string(to_string(r.target_lobe));
  out += ',' + shortest_double(r.placement.x);
  out += ',' + shortest_double(r.placement.y);
  out += ',' + shortest_double(r.placement.z);
  out += ',' + shortest_double(r.alpha);
  return out;
}

}  // namespace

std::string spec_digest(const TrialSpec& spec) {
  return sha256_hex(canonical_spec(spec));
}

std::string manifest_digest(const Manifest& manifest) {
  std::string body = "mode=" + manifest.mode + ";subcohort=" + manifest.subcohort + "\n";
  for (const auto& row : manifest.rows) body += canonical_row(row) + "\n";
  return sha256_hex(body);
}

// --- manifest CSV ---------------------------------------------------------------

namespace {

constexpr const char* kManifestHeader =
    "row_index,mode,subcohort,donor_patient,donor_nodule,host_patient,label,"
    "lobe,px,py,pz,alpha";

void check_field(const std::string& value, const char* what) {
  if (value.find(',') != std::string::npos || value.find('\n') != std::string::npos)
    throw error(std::string("manifest ") + what + " contains a separator: " + value);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw error(std::string("bad ") + what + ": '" + s + "'");
  }
}

long long parse_ll(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw error(std::string("bad ") + what + ": '" + s + "'");
  }
}

}  // namespace

void write_manifest_csv(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot open for writing: " + path.string());
  out << kManifestHeader << '\n';
  check_field(manifest.mode, "mode");
  check_field(manifest.subcohort, "subcohort");
  for (const auto& r : manifest.rows) {
    check_field(r.donor_patient, "donor_patient");
    check_field(r.host_patient, "host_patient");
    out << r.row_index << ',' << manifest.mode << ',' << manifest.subcohort << ','
        << r.donor_patient << ',' << r.donor_nodule << ',' << r.host_patient << ','
        << to_string(r.label) << ',' << to_string(r.target_lobe) << ','
        << shortest_double(r.placement.x) << ',' << shortest_double(r.placement.y)
        << ',' << shortest_double(r.placement.z) << ','
        << shortest_double(r.alpha) << '\n';
  }
  if (!out) throw error("write failed: " + path.string());

  std::ofstream sidecar(path.string() + ".digest", std::ios::binary);
  if (!sidecar) throw error("cannot open for writing: " + path.string() + ".digest");
  sidecar << manifest_digest(manifest) << '\n';
  if (!sidecar) throw error("write failed: " + path.string() + ".digest");
}

Manifest read_manifest_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader)
    throw error("bad manifest header in " + path.string());
  Manifest m;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 12)
      throw error("bad field count at " + path.string() + ":" + std::to_string(lineno));
    ManifestRow r;
    r.row_index = static_cast<std::size_t>(parse_ll(f[0], "row_index"));
    if (r.row_index != m.rows.size())
      throw error("non-contiguous row_index at " + path.string() + ":" +
                  std::to_string(lineno));
    if (m.rows.empty()) {
      m.mode = f[1];
      m.subcohort = f[2];
    } else if (f[1] != m.mode || f[2] != m.subcohort) {
      throw error("mixed mode/subcohort tags at " + path.string() + ":" +
                  std::to_string(lineno));
    }
    r.donor_patient = f[3];
    r.donor_nodule = static_cast<int>(parse_ll(f[4], "donor_nodule"));
    r.host_patient = f[5];
    const auto label = malignancy_from_string(f[6]);
    if (!label) throw error("bad label at " + path.string() + ":" + std::to_string(lineno));
    r.label = *label;
    const auto lobe = lobe_from_string(f[7]);
    if (!lobe) throw error("bad lobe at " + path.string() + ":" + std::to_string(lineno));
    r.target_lobe = *lobe;
    r.placement = {parse_double(f[8], "px"), parse_double(f[9], "py"),
                   parse_double(f[10], "pz")};
    r.alpha = parse_double(f[11], "alpha");
    m.rows.push_back(std::move(r));
  }
  return m;
}

// --- cohort table ---------------------------------------------------------------

CohortTable read_cohort_table(const std::filesystem::path& profiles_csv,
                              const std::filesystem::path& hosts_csv) {
  return {read_profiles_csv(profiles_csv), read_hosts_csv(hosts_csv)};
}

CohortTable cohort_table(std::span<const PhantomPatient> patients) {
  CohortTable table;
  for (const auto& p : patients) {
    auto profiles = profile_patient(p);
    table.profiles.insert(table.profiles.end(),
                          std::make_move_iterator(profiles.begin()),
                          std::make_move_iterator(profiles.end()));
    table.hosts.push_back(host_record(p));
  }
  return table;
}

// --- Build ----------------------------------------------------------------------

namespace {

bool donor_eligible(const NoduleProfile& p) { return p.blueprint.valid; }

// [label][bin][lobe] donor pointers plus the lobe- and bin-relaxed tiers.
// Label index: 0 benign, 1 malignant; unlabeled donors take part only in the
// twin modes.
struct DonorPools {
  std::array<std::array<std::array<std::vector<const NoduleProfile*>, 5>, 6>, 2> cell;
  std::array<std::array<std::vector<const NoduleProfile*>, 6>, 2> by_bin;
  std::array<std::vector<const NoduleProfile*>, 2> all;
};

DonorPools donor_pools(const TrialSpec& spec, const CohortTable& table) {
  DonorPools pools;
  for (const auto& p : table.profiles) {
    if (!donor_eligible(p)) continue;
    if (std::find(spec.excluded_datasets.begin(), spec.excluded_datasets.end(),
                  p.dataset_tag) != spec.excluded_datasets.end())
      continue;
    if (!spec.donor_filter.matches(p)) continue;
    int label = -1;
    if (p.malignancy == Malignancy::benign) label = 0;
    if (p.malignancy == Malignancy::malignant) label = 1;
    if (label < 0) continue;
    const auto li = static_cast<std::size_t>(label);
    const auto bin = static_cast<std::size_t>(size_bin(p.mean_diameter_mm));
    const auto lobe = static_cast<std::size_t>(p.blueprint.lobe);
    pools.cell[li][bin][lobe].push_back(&p);
    pools.by_bin[li][bin].push_back(&p);
    pools.all[li].push_back(&p);
  }
  return pools;
}

std::vector<const HostRecord*> host_pool(const TrialSpec& spec,
                                         const CohortTable& table) {
  std::vector<const HostRecord*> pool;
  for (const auto& h : table.hosts)
    if (h.host_eligible && spec.host_filter.matches(h)) pool.push_back(&h);
  std::sort(pool.begin(), pool.end(),
            [](const HostRecord* a, const HostRecord* b) {
              return a->patient_id < b->patient_id;
            });
  return pool;
}

bool host_feasible(const NoduleProfile& donor, const HostRecord& host) {
  if (donor.patient_id == host.patient_id) return false;
  const auto lobe = static_cast<std::size_t>(donor.blueprint.lobe);
  if (!host.lobe_bbox[lobe]) return false;
  return donor.blueprint.diameter_mm <= host.lobe_fit_mm[lobe];
}

int categorical(RandomStream& s, std::span<const double> weights) {
  const double u = s.next_unit();
  double acc = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}

// Maps the blueprint's lobe percentiles into the host lobe's voxel bounding
// box (ml along x, ap along y, cc along z) and returns host-frame mm.
WorldPoint blueprint_placement(const ReinsertionBlueprint& bp, const HostRecord& host) {
  const auto& box = *host.lobe_bbox[static_cast<std::size_t>(bp.lobe)];
  const auto axis = [](double pct, int lo, int hi) {
    const auto v = lo + static_cast<int>(std::llround(pct / 100.0 * (hi - lo)));
    return std::clamp(v, lo, hi);
  };
  const int vx = axis(bp.lobe_ml_pct, box.lo.x, box.hi.x);
  const int vy = axis(bp.lobe_ap_pct, box.lo.y, box.hi.y);
  const int vz = axis(bp.lobe_cc_pct, box.lo.z, box.hi.z);
  return {vx * host.spacing.sx, vy * host.spacing.sy, vz * host.spacing.sz};
}

void validate_spec(const TrialSpec& spec) {
  if (spec.n < 1) throw error("trial spec: n must be at least 1");
  if (!(spec.pi >= 0.0 && spec.pi <= 1.0))
    throw error("trial spec: pi must lie in [0, 1]");
  if (std::abs(weight_sum(spec.tmpl.size_weights) - 1.0) > kWeightSumTolerance)
    throw error("trial spec: template size prior must sum to 1");
  if (std::abs(weight_sum(spec.tmpl.lobe_weights) - 1.0) > kWeightSumTolerance)
    throw error("trial spec: template lobe prior must sum to 1");
}

std::size_t malignant_quota(const TrialSpec& spec) {
  return static_cast<std::size_t>(std::floor(static_cast<long double>(spec.n) *
                                             static_cast<long double>(spec.pi)));
}

// The malignant pool must hold at least the malignant quota; benign rows draw
// with replacement, so any nonempty benign pool suffices.
void check_pool_quotas(const TrialSpec& spec, const DonorPools& pools,
                       std::size_t quota) {
  if (quota > pools.all[1].size())
    throw error("infeasible prevalence: need " + std::to_string(quota) +
                " malignant donors, pool has " + std::to_string(pools.all[1].size()));
  if (spec.n > quota && pools.all[0].empty())
    throw error("infeasible prevalence: " + std::to_string(spec.n - quota) +
                " benign rows requested but the benign donor pool is empty");
}

constexpr int kMaxDonorRedraws = 100;

const NoduleProfile* sample_donor(RandomStream& ds, const TrialSpec& spec,
                                  const DonorPools& pools, int label,
                                  const HostRecord& host, BuildStats& stats) {
  const auto li = static_cast<std::size_t>(label);
  if (pools.all[li].empty())
    throw error(std::string("donor pool for ") +
                std::string(to_string(label ? Malignancy::malignant
                                            : Malignancy::benign)) +
                " label is empty");
  for (int attempt = 0; attempt < kMaxDonorRedraws; ++attempt) {
    const auto bin = static_cast<std::size_t>(categorical(ds, spec.tmpl.size_weights));
    const auto lobe = static_cast<std::size_t>(categorical(ds, spec.tmpl.lobe_weights));
    const auto* cell = &pools.cell[li][bin][lobe];
    if (cell->empty()) {
      cell = &pools.by_bin[li][bin];
      ++stats.lobe_relaxations;
      if (cell->empty()) {
        cell = &pools.all[li];
        ++stats.bin_relaxations;
      }
    }
    const NoduleProfile* pick = (*cell)[ds.uniform_below(cell->size())];
    if (host_feasible(*pick, host)) return pick;
    ++stats.donor_redraws;
  }
  throw error("no feasible donor for host " + host.patient_id + " after " +
              std::to_string(kMaxDonorRedraws) + " redraws");
}

ManifestRow make_row(std::size_t index, const NoduleProfile& donor,
                     const HostRecord& host, Malignancy label) {
  ManifestRow r;
  r.row_index = index;
  r.donor_patient = donor.patient_id;
  r.donor_nodule = donor.nodule_index;
  r.host_patient = host.patient_id;
  r.label = label;
  r.target_lobe = donor.blueprint.lobe;
  r.placement = blueprint_placement(donor.blueprint, host);
  r.alpha = 1.0;
  return r;
}

}  // namespace

Manifest build(const TrialSpec& spec, const CohortTable& table,
               std::string_view mode, std::string_view subcohort,
               BuildStats* stats) {
  validate_spec(spec);
  const auto pools = donor_pools(spec, table);
  const auto quota = malignant_quota(spec);
  check_pool_quotas(spec, pools, quota);
  const auto hosts = host_pool(spec, table);
  if (hosts.empty()) throw error("no eligible hosts for trial spec");

  Manifest m;
  m.spec_digest = spec_digest(spec);
  m.mode = std::string(mode);
  m.subcohort = std::string(subcohort);
  m.rows.reserve(spec.n);
  BuildStats local;
  const std::string donor_label = "donor/" + m.subcohort;
  for (std::size_t r = 0; r < spec.n; ++r) {
    RandomStream hs(spec.sigma, "host", r);
    const HostRecord& host = *hosts[hs.uniform_below(hosts.size())];
    RandomStream ds(spec.sigma, donor_label, r);
    const int label = r < quota ? 1 : 0;
    const NoduleProfile* donor = sample_donor(ds, spec, pools, label, host, local);
    m.rows.push_back(make_row(r, *donor, host,
                              label ? Malignancy::malignant : Malignancy::benign));
  }
  if (stats) {
    stats->lobe_relaxations += local.lobe_relaxations;
    stats->bin_relaxations += local.bin_relaxations;
    stats->donor_redraws += local.donor_redraws;
  }
  return m;
}

Manifest build_multi(const TrialSpec& spec, const CohortTable& table,
                     std::string_view subcohort, BuildStats* stats) {
  validate_spec(spec);
  const auto pools = donor_pools(spec, table);
  const auto quota = malignant_quota(spec);
  check_pool_quotas(spec, pools, quota);
  const auto hosts = host_pool(spec, table);
  if (hosts.empty()) throw error("no eligible hosts for trial spec");

  Manifest m;
  m.spec_digest = spec_digest(spec);
  m.mode = "M10";
  m.subcohort = std::string(subcohort);
  BuildStats local;
  const std::string donor_label = "donor/" + m.subcohort;
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.n; ++c) {
    RandomStream hs(spec.sigma, "host", c);
    const HostRecord& host = *hosts[hs.uniform_below(hosts.size())];
    RandomStream ds(spec.sigma, donor_label, c);
    const int nodules = 2 + static_cast<int>(ds.uniform_below(4));
    for (int t = 0; t < nodules; ++t) {
      const int label = (c < quota && t == 0) ? 1 : 0;
      const NoduleProfile* donor = sample_donor(ds, spec, pools, label, host, local);
      m.rows.push_back(make_row(row++, *donor, host,
                                label ? Malignancy::malignant : Malignancy::benign));
    }
  }
  if (stats) {
    stats->lobe_relaxations += local.lobe_relaxations;
    stats->bin_relaxations += local.bin_relaxations;
    stats->donor_redraws += local.donor_redraws;
  }
  return m;
}

// --- mode constructors ----------------------------------------------------------

namespace {

// Leave-one-dataset-out sources: the five tags that can seed a mixed-label
// donor pool on their own (LUNA16 carries no labels, NSCLCR no benign cases).
constexpr std::array<std::string_view, 5> kLeaveOneOutTags{
    "DLCS24", "LUNA25", "LUNGx", "LNDbv4", "IMDCT"};

double round3(double v) { return std::llround(v * 1000.0) / 1000.0; }

}  // namespace

std::vector<std::pair<std::string, TrialSpec>> mode_specs(std::string_view mode,
                                                          const TrialSpec& base) {
  std::vector<std::pair<std::string, TrialSpec>> out;
  if (mode == "M1") {
    out.emplace_back("all", base);
    return out;
  }
  if (mode == "M2") {
    for (int i = 0; i < 6; ++i) {
      TrialSpec s = base;
      s.n = 100;
      s.donor_filter.size_mm =
          SizeInterval{kSizeBinEdgesMm[static_cast<std::size_t>(i)],
                       kSizeBinEdgesMm[static_cast<std::size_t>(i) + 1]};
      out.emplace_back("bin" + std::to_string(i + 1), std::move(s));
    }
    return out;
  }
  if (mode == "M3") {
    for (int i = 0; i < 5; ++i) {
      TrialSpec s = base;
      s.n = 100;
      s.donor_filter.size_mm = SizeInterval{6.0, 15.0};
      s.donor_filter.lobes = {static_cast<Lobe>(i)};
      out.emplace_back(std::string(to_string(static_cast<Lobe>(i))), std::move(s));
    }
    return out;
  }
  if (mode == "M4") {
    constexpr double kAgeSplit = 65.0;
    const std::array<std::tuple<const char*, char, bool>, 4> strata{{
        {"M_lt65", 'M', false},
        {"M_ge65", 'M', true},
        {"F_lt65", 'F', false},
        {"F_ge65", 'F', true},
    }};
    for (const auto& [tag, sex, older] : strata) {
      TrialSpec s = base;
      s.n = 200;
      s.host_filter.dataset = "DLCS24";
      s.host_filter.sex = sex;
      s.host_filter.age =
          older ? std::array<double, 2>{kAgeSplit,
                                        std::numeric_limits<double>::infinity()}
                : std::array<double, 2>{0.0, kAgeSplit};
      out.emplace_back(tag, std::move(s));
    }
    return out;
  }
  if (mode == "M5") {
    constexpr std::array<double, 5> grid{0.01, 0.02, 0.05, 0.10, 0.20};
    constexpr std::array<const char*, 5> tags{"pi0.01", "pi0.02", "pi0.05",
                                              "pi0.10", "pi0.20"};
    for (int i = 0; i < 5; ++i) {
      TrialSpec s = base;
      s.n = 500;
      s.sigma = 42;
      s.pi = grid[static_cast<std::size_t>(i)];
      out.emplace_back(tags[static_cast<std::size_t>(i)], std::move(s));
    }
    return out;
  }
  if (mode == "M6") {
    for (const auto source : kLeaveOneOutTags) {
      TrialSpec s = base;
      s.n = 300;
      s.excluded_datasets.clear();
      for (const auto tag : kDatasetTags)
        if (tag != source) s.excluded_datasets.emplace_back(tag);
      s.host_filter.datasets_excluded = {std::string(source)};
      out.emplace_back(std::string(source), std::move(s));
    }
    return out;
  }
  if (mode == "M7") {
    for (int b = 1; b <= 20; ++b) {
      TrialSpec s = base;
      s.sigma = static_cast<std::uint64_t>(b);
      out.emplace_back("b" + std::to_string(b), std::move(s));
    }
    return out;
  }
  if (mode == "M8") {
    TrialSpec s = base;
    s.n = 500;
    s.sigma = 42;
    out.emplace_back("all", std::move(s));
    return out;
  }
  if (mode == "M9") {
    for (int r = 0; r < 3; ++r) {
      TrialSpec s = base;
      s.n = 500;
      s.pi = round3(base.pi * std::pow(0.7, r));
      s.sigma = base.sigma + static_cast<std::uint64_t>(r);
      out.emplace_back("r" + std::to_string(r), std::move(s));
    }
    return out;
  }
  if (mode == "M10") {
    TrialSpec single = base;
    single.n = static_cast<std::size_t>(std::floor(0.75 * static_cast<double>(base.n)));
    TrialSpec multi = base;
    multi.n = static_cast<std::size_t>(std::ceil(0.25 * static_cast<double>(base.n)));
    out.emplace_back("single", std::move(single));
    out.emplace_back("multi", std::move(multi));
    return out;
  }
  throw error("mode_specs: unknown mode '" + std::string(mode) + "'");
}

// --- twin modes -----------------------------------------------------------------

namespace {

std::unordered_map<std::string_view, const HostRecord*> hosts_by_id(
    const CohortTable& table) {
  std::unordered_map<std::string_view, const HostRecord*> out;
  for (const auto& h : table.hosts) out.emplace(h.patient_id, &h);
  return out;
}

const HostRecord& host_for(const CohortTable& table,
                           const std::unordered_map<std::string_view, const HostRecord*>& map,
                           const std::string& patient_id) {
  (void)table;
  const auto it = map.find(patient_id);
  if (it == map.end())
    throw error("no host record for patient " + patient_id);
  return *it->second;
}

void require_lobe(const HostRecord& host, Lobe lobe, const std::string& donor_id) {
  if (!host.lobe_bbox[static_cast<std::size_t>(lobe)])
    throw error("host " + host.patient_id + " lacks lobe " +
                std::string(to_string(lobe)) + " required by donor " + donor_id);
}

}  // namespace

Manifest build_iso(const CohortTable& table) {
  Manifest m;
  m.spec_digest = sha256_hex("op=iso");
  m.mode = "M11";
  m.subcohort = "all";
  const auto hosts = hosts_by_id(table);
  std::size_t row = 0;
  for (const auto& p : table.profiles) {
    if (!donor_eligible(p)) continue;
    const HostRecord& self = host_for(table, hosts, p.patient_id);
    require_lobe(self, p.blueprint.lobe, p.patient_id);
    m.rows.push_back(make_row(row++, p, self, p.malignancy));
  }
  return m;
}

Manifest build_comp(const CohortTable& table) {
  Manifest m;
  m.spec_digest = sha256_hex("op=comp");
  m.mode = "M12";
  m.subcohort = "all";
  std::unordered_map<std::string_view, std::vector<const NoduleProfile*>> by_patient;
  for (const auto& p : table.profiles)
    if (donor_eligible(p)) by_patient[p.patient_id].push_back(&p);
  std::size_t row = 0;
  for (const auto& h : table.hosts) {
    if (!h.host_eligible) continue;
    const auto it = by_patient.find(h.patient_id);
    if (it == by_patient.end()) continue;
    for (const NoduleProfile* p : it->second)
      m.rows.push_back(make_row(row++, *p, h, p->malignancy));
  }
  return m;
}

// --- cross mode -----------------------------------------------------------------

std::string_view to_string(CrossPolicy policy) {
  switch (policy) {
    case CrossPolicy::one_to_one: return "one_to_one";
    case CrossPolicy::one_to_many_hosts: return "one_to_many_hosts";
    case CrossPolicy::donor_patient_complete: return "donor_patient_complete";
  }
  return "one_to_one";
}

std::optional<CrossPolicy> cross_policy_from_string(std::string_view name) {
  if (name == "one_to_one") return CrossPolicy::one_to_one;
  if (name == "one_to_many_hosts") return CrossPolicy::one_to_many_hosts;
  if (name == "donor_patient_complete") return CrossPolicy::donor_patient_complete;
  return std::nullopt;
}

namespace {

template <typename T>
void shuffle(RandomStream& s, std::vector<T>& v) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[s.uniform_below(i)]);
}

std::vector<std::string> donor_patients(const CohortTable& table,
                                        std::string_view donor_dataset) {
  std::vector<std::string> out;
  for (const auto& p : table.profiles) {
    if (!donor_eligible(p)) continue;
    if (!donor_dataset.empty() && p.dataset_tag != donor_dataset) continue;
    out.push_back(p.patient_id);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::string> host_patients(const CohortTable& table,
                                       std::string_view host_dataset) {
  std::vector<std::string> out;
  for (const auto& h : table.hosts) {
    if (!h.host_eligible) continue;
    if (!host_dataset.empty() && h.dataset_tag != host_dataset) continue;
    out.push_back(h.patient_id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

AssignmentMatrix cross_assignment(const CohortTable& table, CrossPolicy policy,
                                  std::uint64_t seed,
                                  std::string_view host_dataset,
                                  std::string_view donor_dataset,
                                  std::string_view subcohort) {
  const auto donors = donor_patients(table, donor_dataset);
  const auto hosts = host_patients(table, host_dataset);
  {
    std::vector<std::string> all = donors;
    all.insert(all.end(), hosts.begin(), hosts.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    if (all.size() < 2)
      throw error("cross pairing needs at least 2 patients");
  }

  AssignmentMatrix matrix;
  matrix.policy = policy;
  const std::string scope = "cross/" + std::string(subcohort);

  if (policy == CrossPolicy::one_to_many_hosts) {
    RandomStream hs(seed, scope + "/hosts");
    for (const auto& donor : donors) {
      std::vector<std::string> candidates;
      for (const auto& h : hosts)
        if (h != donor) candidates.push_back(h);
      if (candidates.size() < static_cast<std::size_t>(kCrossHostsPerDonor))
        throw error("one_to_many_hosts: donor " + donor + " has " +
                    std::to_string(candidates.size()) + " eligible hosts, needs " +
                    std::to_string(kCrossHostsPerDonor));
      for (int k = 0; k < kCrossHostsPerDonor; ++k) {
        const auto j = static_cast<std::size_t>(k) +
                       hs.uniform_below(candidates.size() - static_cast<std::size_t>(k));
        std::swap(candidates[static_cast<std::size_t>(k)], candidates[j]);
        matrix.pairs.emplace_back(donor, candidates[static_cast<std::size_t>(k)]);
      }
    }
    return matrix;
  }

  // one_to_one and donor_patient_complete both give each donor patient one
  // host, injectively; when hosts outnumber donors the spares go unused, and
  // when donors outnumber hosts the seeded shuffle decides which donors pair.
  if (hosts.empty()) throw error("cross pairing has no eligible hosts");
  RandomStream ps(seed, scope + "/pairing");
  const std::size_t k = std::min(donors.size(), hosts.size());
  constexpr int kMaxPairingAttempts = 1000;
  for (int attempt = 0; attempt < kMaxPairingAttempts; ++attempt) {
    std::vector<std::string> d = donors;
    std::vector<std::string> h = hosts;
    shuffle(ps, d);
    shuffle(ps, h);
    bool clean = true;
    for (std::size_t i = 0; i < k && clean; ++i) clean = d[i] != h[i];
    if (!clean) continue;
    for (std::size_t i = 0; i < k; ++i) matrix.pairs.emplace_back(d[i], h[i]);
    std::sort(matrix.pairs.begin(), matrix.pairs.end());
    return matrix;
  }
  throw error("cross pairing failed: no self-free assignment exists");
}

Manifest build_cross(const CohortTable& table, CrossPolicy policy,
                     std::uint64_t seed, std::string_view host_dataset,
                     std::string_view donor_dataset, std::string_view subcohort) {
  Manifest m;
  m.spec_digest = sha256_hex("op=cross;policy=" + std::string(to_string(policy)) +
                             ";seed=" + std::to_string(seed) + ";host=" +
                             std::string(host_dataset) + ";donor=" +
                             std::string(donor_dataset));
  m.mode = "M13";
  m.subcohort = std::string(subcohort);

  const auto matrix =
      cross_assignment(table, policy, seed, host_dataset, donor_dataset, subcohort);
  std::unordered_map<std::string_view, std::vector<const NoduleProfile*>> by_patient;
  for (const auto& p : table.profiles)
    if (donor_eligible(p) && (donor_dataset.empty() || p.dataset_tag == donor_dataset))
      by_patient[p.patient_id].push_back(&p);
  const auto hosts = hosts_by_id(table);

  std::size_t row = 0;
  for (const auto& [donor_id, host_id] : matrix.pairs) {
    const HostRecord& host = host_for(table, hosts, host_id);
    for (const NoduleProfile* p : by_patient.at(donor_id)) {
      require_lobe(host, p->blueprint.lobe, p->patient_id);
      m.rows.push_back(make_row(row++, *p, host, p->malignancy));
    }
  }
  return m;
}

std::vector<Manifest> cross_mode_manifests(const CohortTable& table,
                                           CrossPolicy policy,
                                           std::uint64_t seed) {
  std::vector<Manifest> out;
  for (const auto host_tag : kDatasetTags) {
    for (const auto donor_tag : kDatasetTags) {
      if (host_tag == donor_tag) continue;
      const std::string tag =
          "host-" + std::string(host_tag) + "_donor-" + std::string(donor_tag);
      const bool any_donor = !donor_patients(table, donor_tag).empty();
      const bool any_host = !host_patients(table, host_tag).empty();
      if (!any_donor || !any_host) {
        Manifest m;
        m.spec_digest = sha256_hex(
            "op=cross;policy=" + std::string(to_string(policy)) + ";seed=" +
            std::to_string(seed) + ";host=" + std::string(host_tag) + ";donor=" +
            std::string(donor_tag));
        m.mode = "M13";
        m.subcohort = tag;
        out.push_back(std::move(m));
        continue;
      }
      out.push_back(build_cross(table, policy, seed, host_tag, donor_tag, tag));
    }
  }
  return out;
}

std::vector<Manifest> build_mode(std::string_view mode, const TrialSpec& base,
                                 const CohortTable& table,
                                 std::string_view policy, BuildStats* stats) {
  if (mode == "M11") return {build_iso(table)};
  if (mode == "M12") return {build_comp(table)};
  if (mode == "M13") {
    CrossPolicy p = CrossPolicy::one_to_one;
    if (!policy.empty()) {
      const auto parsed = cross_policy_from_string(policy);
      if (!parsed) throw error("unknown cross policy '" + std::string(policy) + "'");
      p = *parsed;
    }
    return cross_mode_manifests(table, p, base.sigma);
  }
  std::vector<Manifest> out;
  for (const auto& [tag, spec] : mode_specs(mode, base)) {
    if (mode == "M10" && tag == "multi")
      out.push_back(build_multi(spec, table, tag, stats));
    else
      out.push_back(build(spec, table, mode, tag, stats));
  }
  return out;
}

// --- JSON config ----------------------------------------------------------------

namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void config_error(const std::string& what) {
  throw error("trial config: " + what);
}

void check_keys(const ordered_json& j, std::initializer_list<const char*> allowed,
                const char* where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
          return key == a;
        }) == allowed.end())
      config_error(std::string("unknown field '") + key + "' in " + where);
  }
}

double number_field(const ordered_json& j, const char* what) {
  if (!j.is_number()) config_error(std::string(what) + " must be a number");
  return j.get<double>();
}

}  // namespace

TrialConfig parse_trial_config(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    config_error(std::string("parse failure: ") + e.what());
  }
  if (!j.is_object()) config_error("top level must be an object");
  check_keys(j,
             {"version", "n", "pi", "template", "phi_nod", "phi_demo", "sigma",
              "B", "d_excl", "mode", "policy"},
             "config");

  TrialConfig c;
  c.spec = default_trial_spec();

  if (j.contains("version")) {
    if (!j["version"].is_number_integer() || j["version"].get<int>() != 1)
      config_error("unsupported version (expected 1)");
  }
  if (j.contains("template")) {
    if (!j["template"].is_string()) config_error("template must be a string");
    c.spec.tmpl = trial_template(j["template"].get<std::string>());
    c.spec.pi = c.spec.tmpl.prevalence;
  }
  if (j.contains("n")) {
    if (!j["n"].is_number_integer() || j["n"].get<long long>() < 1)
      config_error("n must be a positive integer");
    c.spec.n = j["n"].get<std::size_t>();
  }
  if (j.contains("pi")) {
    const double pi = number_field(j["pi"], "pi");
    if (pi < 0.0 || pi > 1.0) config_error("pi must lie in [0, 1]");
    c.spec.pi = pi;
  }
  if (j.contains("phi_nod")) {
    const auto& pn = j["phi_nod"];
    if (!pn.is_object()) config_error("phi_nod must be an object");
    check_keys(pn, {"size_mm", "lobes", "datasets"}, "phi_nod");
    if (pn.contains("size_mm")) {
      const auto& arr = pn["size_mm"];
      if (!arr.is_array() || arr.size() != 2)
        config_error("phi_nod.size_mm must be [lo, hi]");
      SizeInterval iv{number_field(arr[0], "size_mm lo"),
                      number_field(arr[1], "size_mm hi")};
      if (!(iv.lo < iv.hi)) config_error("phi_nod.size_mm needs lo < hi");
      c.spec.donor_filter.size_mm = iv;
    }
    if (pn.contains("lobes")) {
      if (!pn["lobes"].is_array()) config_error("phi_nod.lobes must be an array");
      for (const auto& v : pn["lobes"]) {
        if (!v.is_string()) config_error("phi_nod.lobes entries must be strings");
        const auto lobe = lobe_from_string(v.get<std::string>());
        if (!lobe) config_error("unknown lobe '" + v.get<std::string>() + "'");
        c.spec.donor_filter.lobes.push_back(*lobe);
      }
    }
    if (pn.contains("datasets")) {
      if (!pn["datasets"].is_array())
        config_error("phi_nod.datasets must be an array");
      for (const auto& v : pn["datasets"]) {
        if (!v.is_string()) config_error("phi_nod.datasets entries must be strings");
        c.spec.donor_filter.datasets.push_back(v.get<std::string>());
      }
    }
  }
  if (j.contains("phi_demo")) {
    const auto& pd = j["phi_demo"];
    if (!pd.is_object()) config_error("phi_demo must be an object");
    check_keys(pd, {"dataset", "sex", "age"}, "phi_demo");
    if (pd.contains("dataset")) {
      if (!pd["dataset"].is_string()) config_error("phi_demo.dataset must be a string");
      c.spec.host_filter.dataset = pd["dataset"].get<std::string>();
    }
    if (pd.contains("sex")) {
      if (!pd["sex"].is_string()) config_error("phi_demo.sex must be a string");
      const auto s = pd["sex"].get<std::string>();
      if (s != "M" && s != "F") config_error("phi_demo.sex must be 'M' or 'F'");
      c.spec.host_filter.sex = s[0];
    }
    if (pd.contains("age")) {
      const auto& arr = pd["age"];
      if (!arr.is_array() || arr.size() != 2)
        config_error("phi_demo.age must be [lo, hi]");
      std::array<double, 2> band{number_field(arr[0], "age lo"),
                                 number_field(arr[1], "age hi")};
      if (!(band[0] < band[1])) config_error("phi_demo.age needs lo < hi");
      c.spec.host_filter.age = band;
    }
  }
  if (j.contains("sigma")) {
    if (!j["sigma"].is_number_integer() || j["sigma"].is_number_float() ||
        (j["sigma"].is_number_integer() && !j["sigma"].is_number_unsigned() &&
         j["sigma"].get<long long>() < 0))
      config_error("sigma must be a non-negative integer");
    c.spec.sigma = j["sigma"].get<std::uint64_t>();
  }
  if (j.contains("B")) {
    if (!j["B"].is_number_integer() || j["B"].get<long long>() < 0)
      config_error("B must be a non-negative integer");
    c.spec.bootstrap_replicates = j["B"].get<int>();
  }
  if (j.contains("d_excl")) {
    if (!j["d_excl"].is_array()) config_error("d_excl must be an array");
    for (const auto& v : j["d_excl"]) {
      if (!v.is_string()) config_error("d_excl entries must be strings");
      c.spec.excluded_datasets.push_back(v.get<std::string>());
    }
  }
  if (j.contains("mode")) {
    if (!j["mode"].is_string()) config_error("mode must be a string");
    c.mode = j["mode"].get<std::string>();
    bool known = false;
    for (int i = 1; i <= 13; ++i)
      if (c.mode == "M" + std::to_string(i)) known = true;
    if (!known) config_error("unknown mode '" + c.mode + "'");
  }
  if (j.contains("policy")) {
    if (!j["policy"].is_string()) config_error("policy must be a string");
    c.policy = j["policy"].get<std::string>();
    if (!cross_policy_from_string(c.policy))
      config_error("unknown policy '" + c.policy + "'");
  }
  return c;
}

TrialConfig load_trial_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trial_config(buf.str());
}

std::string trial_config_json(const TrialConfig& config) {
  // Non-finite filter bounds (mode-internal open intervals) have no JSON
  // representation and are omitted; hand-written configs never carry them.
  ordered_json j;
  j["version"] = 1;
  j["n"] = config.spec.n;
  j["pi"] = config.spec.pi;
  j["template"] = config.spec.tmpl.name;
  const auto& nod = config.spec.donor_filter;
  if (nod.size_mm || !nod.lobes.empty() || !nod.datasets.empty()) {
    ordered_json pn = ordered_json::object();
    if (nod.size_mm && std::isfinite(nod.size_mm->hi))
      pn["size_mm"] = {nod.size_mm->lo, nod.size_mm->hi};
    if (!nod.lobes.empty()) {
      auto arr = ordered_json::array();
      for (const auto lobe : nod.lobes) arr.push_back(std::string(to_string(lobe)));
      pn["lobes"] = std::move(arr);
    }
    if (!nod.datasets.empty()) pn["datasets"] = nod.datasets;
    j["phi_nod"] = std::move(pn);
  }
  const auto& demo = config.spec.host_filter;
  if (demo.dataset || demo.sex || demo.age) {
    ordered_json pd = ordered_json::object();
    if (demo.dataset) pd["dataset"] = *demo.dataset;
    if (demo.sex) pd["sex"] = std::string(1, *demo.sex);
    if (demo.age && std::isfinite((*demo.age)[1]))
      pd["age"] = {(*demo.age)[0], (*demo.age)[1]};
    j["phi_demo"] = std::move(pd);
  }
  j["sigma"] = config.spec.sigma;
  j["B"] = config.spec.bootstrap_replicates;
  if (!config.spec.excluded_datasets.empty())
    j["d_excl"] = config.spec.excluded_datasets;
  j["mode"] = config.mode;
  if (!config.policy.empty()) j["policy"] = config.policy;
  return j.dump(2) + "\n";
}

}  // namespace trialforge

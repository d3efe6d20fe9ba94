#include "trialforge/evalstats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace trialforge {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

int parse_class(const std::string& s, Task task, const std::string& what) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw error("non-integer " + what + " '" + s + "'");
  if (v < 0 || v >= class_count(task))
    throw error(what + " " + s + " outside the " + to_string(task) +
                " class set");
  return static_cast<int>(v);
}

void validate_record(const PredictionRecord& r) {
  if (r.model.empty()) throw error("prediction record with empty model");
  const int k = class_count(r.task);
  if (r.pred < 0 || r.pred >= k || r.truth < 0 || r.truth >= k)
    throw error("prediction record for " + r.model + " has classes outside the " +
                to_string(r.task) + " class set");
}

// Regularized incomplete beta via the Lentz continued fraction, good to
// ~1e-14 over the arguments a t-test produces.
double beta_cf(double a, double b, double x) {
  constexpr double kFloor = 1e-300;
  const double qab = a + b, qap = a + 1, qam = a - 1;
  double c = 1;
  double d = 1 - qab * x / qap;
  if (std::abs(d) < kFloor) d = kFloor;
  d = 1 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (std::abs(d) < kFloor) d = kFloor;
    c = 1 + aa / c;
    if (std::abs(c) < kFloor) c = kFloor;
    d = 1 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (std::abs(d) < kFloor) d = kFloor;
    c = 1 + aa / c;
    if (std::abs(c) < kFloor) c = kFloor;
    d = 1 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 3e-16) break;
  }
  return h;
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  const double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                    a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln);
  if (x < (a + 1) / (a + b + 2)) return front * beta_cf(a, b, x) / a;
  return 1 - front * beta_cf(b, a, 1 - x) / b;
}

std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2 + 1;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

// Binomial(n, 1/2) lower tail; exact in double for the n <= 25 regime.
double binomial_tail_half(std::size_t n, std::size_t upto) {
  double binom = 1;  // C(n, 0)
  double sum = 1;
  for (std::size_t k = 1; k <= upto; ++k) {
    binom *= static_cast<double>(n - k + 1) / static_cast<double>(k);
    sum += binom;
  }
  return sum * std::pow(0.5, static_cast<double>(n));
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double h = q * (static_cast<double>(sorted.size()) - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

const char* kLogHeader =
    "model,task,condition,domain,mode,sample_id,host_dataset,donor_dataset,"
    "pred,truth";

}  // namespace

std::string to_string(Task t) {
  switch (t) {
    case Task::presence: return "presence";
    case Task::lobe: return "lobe";
    case Task::size: return "size";
  }
  throw error("unknown task");
}

std::string to_string(Condition c) {
  switch (c) {
    case Condition::plain: return "plain";
    case Condition::bbox: return "bbox";
    case Condition::contour: return "contour";
    case Condition::bbox_contour: return "bbox_contour";
  }
  throw error("unknown condition");
}

std::string to_string(Domain d) {
  switch (d) {
    case Domain::real: return "real";
    case Domain::synthetic: return "synthetic";
  }
  throw error("unknown domain");
}

Task parse_task(std::string_view s) {
  if (s == "presence") return Task::presence;
  if (s == "lobe") return Task::lobe;
  if (s == "size") return Task::size;
  throw error("unknown task '" + std::string(s) + "'");
}

Condition parse_condition(std::string_view s) {
  if (s == "plain") return Condition::plain;
  if (s == "bbox") return Condition::bbox;
  if (s == "contour") return Condition::contour;
  if (s == "bbox_contour") return Condition::bbox_contour;
  throw error("unknown condition '" + std::string(s) + "'");
}

Domain parse_domain(std::string_view s) {
  if (s == "real") return Domain::real;
  if (s == "synthetic") return Domain::synthetic;
  throw error("unknown domain '" + std::string(s) + "'");
}

int class_count(Task t) {
  switch (t) {
    case Task::presence: return 2;
    case Task::lobe: return 5;
    case Task::size: return 4;
  }
  throw error("unknown task");
}

std::vector<EvalCell> accuracy_cells(std::span<const PredictionRecord> records,
                                     CellGrouping grouping) {
  if (records.empty()) throw error("accuracy over an empty log");
  using Key = std::tuple<std::string, Task, Condition, Domain, std::string>;
  std::map<Key, std::pair<std::size_t, std::size_t>> tally;  // n, correct
  for (const auto& r : records) {
    validate_record(r);
    const std::string mode =
        grouping == CellGrouping::by_condition_and_mode ? r.mode : "";
    auto& [n, correct] = tally[{r.model, r.task, r.condition, r.domain, mode}];
    ++n;
    if (r.pred == r.truth) ++correct;
  }
  std::vector<EvalCell> cells;
  cells.reserve(tally.size());
  for (const auto& [key, counts] : tally) {
    EvalCell cell;
    std::tie(cell.model, cell.task, cell.condition, cell.domain, cell.mode) =
        key;
    cell.n = counts.first;
    cell.correct = counts.second;
    cell.accuracy =
        static_cast<double>(counts.second) / static_cast<double>(counts.first);
    cells.push_back(std::move(cell));
  }
  return cells;
}

GuidanceLift guidance_lift(std::span<const EvalCell> cells) {
  const EvalCell* plain = nullptr;
  const EvalCell* guided[3] = {nullptr, nullptr, nullptr};
  const Condition order[3] = {Condition::bbox, Condition::contour,
                              Condition::bbox_contour};
  for (const auto& cell : cells) {
    const EvalCell** slot = nullptr;
    if (cell.condition == Condition::plain) {
      slot = &plain;
    } else {
      for (int i = 0; i < 3; ++i)
        if (cell.condition == order[i]) slot = &guided[i];
    }
    if (*slot)
      throw error("duplicate " + to_string(cell.condition) +
                  " cell in one lift slice");
    *slot = &cell;
  }
  if (!plain) throw error("guidance lift without a plain cell");
  GuidanceLift lift;
  const EvalCell* best = nullptr;
  for (int i = 0; i < 3; ++i) {
    if (!guided[i]) continue;
    if (!best || guided[i]->accuracy > best->accuracy) best = guided[i];
  }
  if (!best) throw error("guidance lift without guided cells");
  lift.best = best->condition;
  lift.plain_accuracy = plain->accuracy;
  lift.best_accuracy = best->accuracy;
  lift.delta = best->accuracy - plain->accuracy;
  return lift;
}

SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw error("rank correlation over unequal lengths");
  if (x.size() < 3) throw error("rank correlation needs at least 3 pairs");
  const auto constant = [](std::span<const double> v) {
    for (const double e : v)
      if (e != v[0]) return false;
    return true;
  };
  if (constant(x) || constant(y))
    throw error("rank correlation of a constant vector");
  SpearmanResult res;
  res.rho = pearson(average_ranks(x), average_ranks(y));
  const auto df = static_cast<double>(x.size() - 2);
  const double r2 = res.rho * res.rho;
  if (r2 >= 1.0) {
    res.p = 0.0;
    return res;
  }
  const double t2 = r2 * df / (1 - r2);
  res.p = incomplete_beta(df / 2, 0.5, df / (df + t2));
  return res;
}

McNemarResult mcnemar(std::span<const std::pair<bool, bool>> outcomes,
                      int bonferroni_m) {
  if (bonferroni_m < 1) throw error("Bonferroni multiplier below 1");
  McNemarResult res;
  for (const auto& [first, second] : outcomes) {
    if (first && !second) ++res.b;
    if (!first && second) ++res.c;
  }
  const std::size_t discordant = res.b + res.c;
  if (discordant == 0) {
    res.statistic = 0;
    res.p = 1;
  } else if (discordant <= 25) {
    res.statistic = std::abs(static_cast<double>(res.b) -
                             static_cast<double>(res.c));
    res.p = std::min(
        1.0, 2 * binomial_tail_half(discordant, std::min(res.b, res.c)));
  } else {
    const double gap = std::abs(static_cast<double>(res.b) -
                                static_cast<double>(res.c));
    res.statistic = (gap - 1) * (gap - 1) / static_cast<double>(discordant);
    res.p = std::erfc(std::sqrt(res.statistic / 2));
  }
  res.corrected_p = std::min(1.0, res.p * bonferroni_m);
  return res;
}

std::vector<std::pair<bool, bool>> pair_by_sample(
    std::span<const PredictionRecord> records, Condition guided) {
  if (guided == Condition::plain)
    throw error("guided condition cannot be plain");
  std::map<std::string, bool> plain, other;
  for (const auto& r : records) {
    if (r.condition != Condition::plain && r.condition != guided) continue;
    auto& side = r.condition == Condition::plain ? plain : other;
    if (!side.emplace(r.sample_id, r.pred == r.truth).second)
      throw error("duplicate sample '" + r.sample_id + "' under " +
                  to_string(r.condition));
  }
  std::vector<std::pair<bool, bool>> pairs;
  for (const auto& [id, correct] : plain) {
    const auto it = other.find(id);
    if (it != other.end()) pairs.emplace_back(correct, it->second);
  }
  return pairs;
}

BootstrapCi bootstrap_ci(std::span<const double> replicates, double level) {
  if (replicates.size() < 2)
    throw error("bootstrap interval needs at least 2 replicates");
  if (!(level > 0 && level < 1))
    throw error("bootstrap level outside (0, 1)");
  std::vector<double> sorted(replicates.begin(), replicates.end());
  std::sort(sorted.begin(), sorted.end());
  const double alpha = 1 - level;
  return {quantile_sorted(sorted, alpha / 2),
          quantile_sorted(sorted, 1 - alpha / 2)};
}

HostDonorDecomposition host_donor_decomposition(
    std::span<const HostDonorCell> cells) {
  std::map<std::string, std::pair<double, std::size_t>> hosts, donors;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& cell : cells) {
    if (!seen.emplace(cell.host, cell.donor).second)
      throw error("duplicate host/donor cell " + cell.host + "/" + cell.donor);
    auto& h = hosts[cell.host];
    h.first += cell.accuracy;
    ++h.second;
    auto& d = donors[cell.donor];
    d.first += cell.accuracy;
    ++d.second;
  }
  if (hosts.size() < 2 || donors.size() < 2)
    throw error("decomposition needs at least 2 hosts and 2 donors");
  const auto spread = [](const auto& marginals) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& [name, acc] : marginals) {
      const double mean = acc.first / static_cast<double>(acc.second);
      lo = std::min(lo, mean);
      hi = std::max(hi, mean);
    }
    return hi - lo;
  };
  HostDonorDecomposition out;
  out.host_spread = spread(hosts);
  out.donor_spread = spread(donors);
  if (out.donor_spread == 0) {
    out.infinite_ratio = true;
    out.ratio = std::numeric_limits<double>::infinity();
  } else {
    out.ratio = out.host_spread / out.donor_spread;
  }
  return out;
}

DegeneracyReport degenerate_detector(
    std::span<const PredictionRecord> records) {
  if (records.empty()) throw error("degeneracy check over an empty log");
  std::size_t counts[2] = {0, 0};
  for (const auto& r : records) {
    if (r.task != Task::presence)
      throw error("degeneracy check is defined for the presence task");
    validate_record(r);
    ++counts[r.pred];
  }
  DegeneracyReport rep;
  rep.n = records.size();
  rep.dominant_class = counts[1] > counts[0] ? 1 : 0;
  rep.rate = static_cast<double>(counts[rep.dominant_class]) /
             static_cast<double>(rep.n);
  rep.flagged = rep.rate > 0.999;
  return rep;
}

std::vector<PredictionRecord> read_prediction_log(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw error("cannot open prediction log " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kLogHeader)
    throw error("bad prediction log header in " + path.string());
  std::vector<PredictionRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 10)
      throw error("prediction log " + path.string() + ":" +
                  std::to_string(lineno) + " has " + std::to_string(f.size()) +
                  " fields, want 10");
    PredictionRecord r;
    r.model = f[0];
    r.task = parse_task(f[1]);
    r.condition = parse_condition(f[2]);
    r.domain = parse_domain(f[3]);
    r.mode = f[4];
    r.sample_id = f[5];
    r.host_dataset = f[6];
    r.donor_dataset = f[7];
    r.pred = parse_class(f[8], r.task, "prediction");
    r.truth = parse_class(f[9], r.task, "truth");
    validate_record(r);
    records.push_back(std::move(r));
  }
  return records;
}

void write_prediction_log(const std::filesystem::path& path,
                          std::span<const PredictionRecord> records) {
  std::ofstream out(path);
  if (!out) throw error("cannot write prediction log " + path.string());
  out << kLogHeader << '\n';
  for (const auto& r : records) {
    validate_record(r);
    out << r.model << ',' << to_string(r.task) << ',' << to_string(r.condition)
        << ',' << to_string(r.domain) << ',' << r.mode << ',' << r.sample_id
        << ',' << r.host_dataset << ',' << r.donor_dataset << ',' << r.pred
        << ',' << r.truth << '\n';
  }
}

void write_cells_csv(const std::filesystem::path& path,
                     std::span<const EvalCell> cells) {
  std::ofstream out(path);
  if (!out) throw error("cannot write cells CSV " + path.string());
  out << "model,task,condition,domain,mode,n,correct,accuracy\n";
  for (const auto& c : cells)
    out << c.model << ',' << to_string(c.task) << ',' << to_string(c.condition)
        << ',' << to_string(c.domain) << ',' << c.mode << ',' << c.n << ','
        << c.correct << ',' << shortest_double(c.accuracy) << '\n';
}

void write_lifts_csv(const std::filesystem::path& path,
                     std::span<const LiftRow> rows) {
  std::ofstream out(path);
  if (!out) throw error("cannot write lifts CSV " + path.string());
  out << "model,task,domain,plain,best,best_condition,delta\n";
  for (const auto& r : rows)
    out << r.model << ',' << to_string(r.task) << ',' << to_string(r.domain)
        << ',' << shortest_double(r.lift.plain_accuracy) << ','
        << shortest_double(r.lift.best_accuracy) << ','
        << to_string(r.lift.best) << ',' << shortest_double(r.lift.delta)
        << '\n';
}

void write_tests_csv(const std::filesystem::path& path,
                     std::span<const PairedTestRow> rows) {
  std::ofstream out(path);
  if (!out) throw error("cannot write tests CSV " + path.string());
  out << "model,task,domain,guided,b,c,statistic,p,corrected_p\n";
  for (const auto& r : rows)
    out << r.model << ',' << to_string(r.task) << ',' << to_string(r.domain)
        << ',' << to_string(r.guided) << ',' << r.test.b << ',' << r.test.c
        << ',' << shortest_double(r.test.statistic) << ','
        << shortest_double(r.test.p) << ','
        << shortest_double(r.test.corrected_p) << '\n';
}

}  // namespace trialforge

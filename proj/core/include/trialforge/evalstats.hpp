// Statistics over model prediction logs: accuracy cells, guidance lifts,
// rank correlation, paired tests, bootstrap intervals, host/donor
// decomposition, and degeneracy detection.
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trialforge/voxgrid.hpp"

namespace trialforge {

enum class Task { presence, lobe, size };
enum class Condition { plain, bbox, contour, bbox_contour };
enum class Domain { real, synthetic };

std::string to_string(Task t);
std::string to_string(Condition c);
std::string to_string(Domain d);
Task parse_task(std::string_view s);
Condition parse_condition(std::string_view s);
Domain parse_domain(std::string_view s);

// Number of classes a task predicts over.
int class_count(Task t);

struct PredictionRecord {
  std::string model;
  Task task = Task::presence;
  Condition condition = Condition::plain;
  Domain domain = Domain::real;
  std::string mode;
  std::string sample_id;
  std::string host_dataset;
  std::string donor_dataset;
  int pred = 0;
  int truth = 0;

  bool operator==(const PredictionRecord&) const = default;
};

// Whether mode participates in the cell key.
enum class CellGrouping { by_condition, by_condition_and_mode };

struct EvalCell {
  std::string model;
  Task task = Task::presence;
  Condition condition = Condition::plain;
  Domain domain = Domain::real;
  std::string mode;  // empty under by_condition grouping
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

// Exact per-cell accuracies; empty cells never appear. Output is sorted by
// (model, task, condition, domain, mode) so equal logs give equal tables.
std::vector<EvalCell> accuracy_cells(
    std::span<const PredictionRecord> records,
    CellGrouping grouping = CellGrouping::by_condition);

struct GuidanceLift {
  Condition best = Condition::bbox;
  double plain_accuracy = 0.0;
  double best_accuracy = 0.0;
  double delta = 0.0;  // best - plain, may be negative
};

// Lift for one model/task/domain slice of cells. Ties among guided
// conditions resolve in the order bbox, contour, bbox_contour.
GuidanceLift guidance_lift(std::span<const EvalCell> cells);

struct SpearmanResult {
  double rho = 0.0;
  double p = 1.0;  // two-sided, t-approximation
};

// Rank correlation with average ranks for ties. Throws on constant input.
SpearmanResult spearman(std::span<const double> x, std::span<const double> y);

struct McNemarResult {
  std::size_t b = 0;  // first correct, second wrong
  std::size_t c = 0;  // first wrong, second correct
  double statistic = 0.0;
  double p = 1.0;
  double corrected_p = 1.0;
};

// Paired test on (correct_first, correct_second) outcomes: exact binomial on
// the discordant counts while b + c <= 25, continuity-corrected chi-square
// above. The caller supplies the Bonferroni multiplier; corrected p caps at 1.
McNemarResult mcnemar(std::span<const std::pair<bool, bool>> outcomes,
                      int bonferroni_m = 1);

// Pairs plain vs guided outcomes by sample id within an already-sliced log
// (one model/task/domain). Samples lacking either side are skipped; duplicate
// sample ids within a condition throw.
std::vector<std::pair<bool, bool>> pair_by_sample(
    std::span<const PredictionRecord> records, Condition guided);

struct BootstrapCi {
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile interval with linear interpolation between order statistics.
BootstrapCi bootstrap_ci(std::span<const double> replicates,
                         double level = 0.95);

struct HostDonorCell {
  std::string host;
  std::string donor;
  double accuracy = 0.0;
};

struct HostDonorDecomposition {
  double host_spread = 0.0;   // max - min of host-marginal means
  double donor_spread = 0.0;  // max - min of donor-marginal means
  double ratio = 0.0;         // host / donor
  bool infinite_ratio = false;
};

// Marginal means are taken over the cells present for each host or donor, so
// incomplete grids (such as an off-diagonal dataset pairing) are welcome.
// Needs at least two hosts and two donors; duplicate (host, donor) keys throw.
HostDonorDecomposition host_donor_decomposition(
    std::span<const HostDonorCell> cells);

struct DegeneracyReport {
  bool flagged = false;
  double rate = 0.0;  // prediction rate of the dominant class
  int dominant_class = 0;
  std::size_t n = 0;
};

// Flags a presence log whose dominant prediction class exceeds 99.9%.
DegeneracyReport degenerate_detector(
    std::span<const PredictionRecord> records);

// Log CSV columns: model,task,condition,domain,mode,sample_id,host_dataset,
// donor_dataset,pred,truth.
std::vector<PredictionRecord> read_prediction_log(
    const std::filesystem::path& path);
void write_prediction_log(const std::filesystem::path& path,
                          std::span<const PredictionRecord> records);

void write_cells_csv(const std::filesystem::path& path,
                     std::span<const EvalCell> cells);

struct LiftRow {
  std::string model;
  Task task = Task::presence;
  Domain domain = Domain::real;
  GuidanceLift lift;
};

void write_lifts_csv(const std::filesystem::path& path,
                     std::span<const LiftRow> rows);

struct PairedTestRow {
  std::string model;
  Task task = Task::presence;
  Domain domain = Domain::real;
  Condition guided = Condition::bbox;
  McNemarResult test;
};

void write_tests_csv(const std::filesystem::path& path,
                     std::span<const PairedTestRow> rows);

}  // namespace trialforge

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "faceaudit/classifier.hpp"
#include "faceaudit/skin_transform.hpp"

namespace faceaudit {

struct EmptyInputError : std::runtime_error {
  EmptyInputError() : std::runtime_error("no records to aggregate") {}
};
struct TooFewSamplesError : std::runtime_error {
  TooFewSamplesError() : std::runtime_error("t interval needs at least two samples") {}
};
struct MissingLabelError : std::runtime_error {
  MissingLabelError() : std::runtime_error("record lacks a ground-truth gender label") {}
};

/// Per-image stability outcome. diff = avg_new_score - original_score,
/// so lightening that raises the male score is positive.
struct ScoreRecord {
  std::string image_id;
  std::optional<Gender> label;
  double original_score = 0.0;
  std::vector<double> ensemble_scores;
  double avg_new_score = 0.0;
  double diff = 0.0;
};

struct ConfidenceInterval {
  double lo = 0.0, hi = 0.0;
  double level = 0.95;
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample (n-1) standard deviation
};

/// Decision flips relative to ground truth: to_correct counts images
/// misclassified originally whose averaged decision becomes correct after
/// the transform; to_incorrect is the mirror.
struct FlipCounts {
  std::size_t n = 0;
  std::size_t to_correct = 0;
  std::size_t to_incorrect = 0;
};

struct DiffHistogram {
  double lo = -1.0, hi = 1.0;
  std::vector<std::uint64_t> counts;  // bins over [lo,hi], last bin closed
};

struct StabilityReport {
  std::string group;
  Direction direction = Direction::Lighten;
  TransformMethod method = TransformMethod::ModeShift;
  double threshold = 0.1;
  std::vector<ScoreRecord> records;
  double fraction_stable = 0.0;
  ConfidenceInterval ci;
  FlipCounts flips;
  DiffHistogram hist;
  std::size_t excluded_no_face = 0;
  std::size_t skipped_empty_ensemble = 0;
};

struct StabilityItem {
  std::string id;
  RasterImage image;
  SkinMask mask;
  std::optional<Gender> label;
};

struct StabilityRunStats {
  std::size_t excluded_no_face = 0;
  std::size_t skipped_empty_ensemble = 0;
};

/// Scores every image and its transform ensemble. Images for which the
/// classifier reports NoFace (on the original or any member) are excluded
/// and counted; images whose ensemble is empty are skipped and counted.
/// Records come back sorted by image id. Transport errors propagate.
std::vector<ScoreRecord> run_stability(const Classifier& classifier,
                                       const std::vector<StabilityItem>& items,
                                       Direction direction, TransformMethod method,
                                       const EnsembleConfig& config,
                                       StabilityRunStats* stats = nullptr);

/// Fraction of records with |diff| <= threshold.
double stability_fraction(const std::vector<ScoreRecord>& records, double threshold);

/// Two-sided t confidence interval for the mean of diffs:
/// mean +/- t_{(1+level)/2, n-1} * stddev / sqrt(n).
ConfidenceInterval one_sample_t_ci(const std::vector<double>& diffs, double level = 0.95);

/// Requires every record to carry a gender label.
FlipCounts decision_flips(const std::vector<ScoreRecord>& records);

DiffHistogram diff_histogram(const std::vector<ScoreRecord>& records, int bins = 20);

/// Aggregates records into a report (fraction at `threshold`, t-CI, flips,
/// diff histogram). Flips are computed only when every record is labeled.
StabilityReport build_report(std::string group, Direction direction, TransformMethod method,
                             std::vector<ScoreRecord> records, double threshold = 0.1,
                             double level = 0.95, int bins = 20);

/// Writes report.txt (6 significant digits), hist.csv, scatter.csv and
/// records.csv (full precision) under dir.
void export_report(const StabilityReport& report, const std::filesystem::path& dir);

/// Formats a double with 6 significant digits, matching report.txt.
std::string format_sig6(double v);

}  // namespace faceaudit

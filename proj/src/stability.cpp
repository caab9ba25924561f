#include "faceaudit/stability.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace faceaudit {

std::vector<ScoreRecord> run_stability(const Classifier& classifier,
                                       const std::vector<StabilityItem>& items,
                                       Direction direction, TransformMethod method,
                                       const EnsembleConfig& config,
                                       StabilityRunStats* stats) {
  std::vector<ScoreRecord> records;
  records.reserve(items.size());
  StabilityRunStats local;

  for (const StabilityItem& item : items) {
    const YCrCbImage ycc = rgb_to_ycrcb(item.image);
    TransformEnsemble ensemble;
    try {
      ensemble = build_ensemble(ycc, item.mask, direction, method, config);
    } catch (const EmptyEnsembleError&) {
      ++local.skipped_empty_ensemble;
      continue;
    }

    ScoreRecord record;
    record.image_id = item.id;
    record.label = item.label;
    try {
      record.original_score = classifier.score(item.image).s;
      for (const EnsembleMember& member : ensemble.members)
        record.ensemble_scores.push_back(classifier.score(ycrcb_to_rgb(member.image)).s);
    } catch (const NoFaceError&) {
      ++local.excluded_no_face;
      continue;
    }

    record.avg_new_score =
        std::accumulate(record.ensemble_scores.begin(), record.ensemble_scores.end(), 0.0) /
        static_cast<double>(record.ensemble_scores.size());
    record.diff = record.avg_new_score - record.original_score;
    records.push_back(std::move(record));
  }

  std::sort(records.begin(), records.end(),
            [](const ScoreRecord& a, const ScoreRecord& b) { return a.image_id < b.image_id; });
  if (stats) *stats = local;
  return records;
}

double stability_fraction(const std::vector<ScoreRecord>& records, double threshold) {
  if (records.empty()) throw EmptyInputError();
  const auto stable = std::count_if(records.begin(), records.end(), [&](const ScoreRecord& r) {
    return std::fabs(r.diff) <= threshold;
  });
  return static_cast<double>(stable) / static_cast<double>(records.size());
}

ConfidenceInterval one_sample_t_ci(const std::vector<double>& diffs, double level) {
  if (diffs.size() < 2) throw TooFewSamplesError();
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must lie in (0,1)");

  const auto n = diffs.size();
  const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double d : diffs) ss += (d - mean) * (d - mean);
  const double stddev = std::sqrt(ss / static_cast<double>(n - 1));

  const boost::math::students_t dist(static_cast<double>(n - 1));
  const double t = boost::math::quantile(dist, (1.0 + level) / 2.0);
  const double half = t * stddev / std::sqrt(static_cast<double>(n));

  ConfidenceInterval ci;
  ci.lo = mean - half;
  ci.hi = mean + half;
  ci.level = level;
  ci.n = n;
  ci.mean = mean;
  ci.stddev = stddev;
  return ci;
}

FlipCounts decision_flips(const std::vector<ScoreRecord>& records) {
  FlipCounts flips;
  flips.n = records.size();
  for (const ScoreRecord& r : records) {
    if (!r.label) throw MissingLabelError();
    const bool orig_male = r.original_score > 0.5;
    const bool new_male = r.avg_new_score > 0.5;
    const bool truth_male = *r.label == Gender::Male;
    const bool orig_correct = orig_male == truth_male;
    const bool new_correct = new_male == truth_male;
    if (!orig_correct && new_correct) ++flips.to_correct;
    if (orig_correct && !new_correct) ++flips.to_incorrect;
  }
  return flips;
}

DiffHistogram diff_histogram(const std::vector<ScoreRecord>& records, int bins) {
  if (bins < 1) throw std::invalid_argument("bins must be positive");
  DiffHistogram hist;
  hist.counts.assign(bins, 0);
  const double span = hist.hi - hist.lo;
  for (const ScoreRecord& r : records) {
    int bin = static_cast<int>(std::floor((r.diff - hist.lo) / span * bins));
    bin = std::clamp(bin, 0, bins - 1);
    ++hist.counts[bin];
  }
  return hist;
}

StabilityReport build_report(std::string group, Direction direction, TransformMethod method,
                             std::vector<ScoreRecord> records, double threshold, double level,
                             int bins) {
  StabilityReport report;
  report.group = std::move(group);
  report.direction = direction;
  report.method = method;
  report.threshold = threshold;
  report.fraction_stable = stability_fraction(records, threshold);

  std::vector<double> diffs;
  diffs.reserve(records.size());
  for (const ScoreRecord& r : records) diffs.push_back(r.diff);
  report.ci = one_sample_t_ci(diffs, level);

  const bool labeled = std::all_of(records.begin(), records.end(),
                                   [](const ScoreRecord& r) { return r.label.has_value(); });
  if (labeled) report.flips = decision_flips(records);
  report.flips.n = records.size();

  report.hist = diff_histogram(records, bins);
  report.records = std::move(records);
  return report;
}

std::string format_sig6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

namespace {

std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void export_report(const StabilityReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  {
    auto out = open_out(dir / "report.txt");
    out << "group: " << report.group << "\n";
    out << "direction: " << to_string(report.direction) << "\n";
    out << "method: " << to_string(report.method) << "\n";
    out << "n: " << report.records.size() << "\n";
    out << "threshold: " << format_sig6(report.threshold) << "\n";
    out << "fraction_stable: " << format_sig6(report.fraction_stable) << "\n";
    out << "mean_diff: " << format_sig6(report.ci.mean) << "\n";
    out << "stddev_diff: " << format_sig6(report.ci.stddev) << "\n";
    out << "ci_level: " << format_sig6(report.ci.level) << "\n";
    out << "ci_lo: " << format_sig6(report.ci.lo) << "\n";
    out << "ci_hi: " << format_sig6(report.ci.hi) << "\n";
    out << "flips_to_correct: " << report.flips.to_correct << "\n";
    out << "flips_to_incorrect: " << report.flips.to_incorrect << "\n";
    out << "excluded_no_face: " << report.excluded_no_face << "\n";
    out << "skipped_empty_ensemble: " << report.skipped_empty_ensemble << "\n";
  }
  {
    auto out = open_out(dir / "hist.csv");
    out << "bin_lo,bin_hi,count\n";
    const int bins = static_cast<int>(report.hist.counts.size());
    const double span = report.hist.hi - report.hist.lo;
    for (int b = 0; b < bins; ++b) {
      const double lo = report.hist.lo + span * b / bins;
      const double hi = report.hist.lo + span * (b + 1) / bins;
      out << format_full(lo) << "," << format_full(hi) << "," << report.hist.counts[b] << "\n";
    }
  }
  {
    auto out = open_out(dir / "scatter.csv");
    out << "original,avg_new\n";
    for (const ScoreRecord& r : report.records)
      out << format_full(r.original_score) << "," << format_full(r.avg_new_score) << "\n";
  }
  {
    auto out = open_out(dir / "records.csv");
    out << "image_id,gender,original,avg_new,diff,members\n";
    for (const ScoreRecord& r : report.records) {
      out << r.image_id << "," << (r.label ? to_string(*r.label) : "") << ","
          << format_full(r.original_score) << "," << format_full(r.avg_new_score) << ","
          << format_full(r.diff) << "," << r.ensemble_scores.size() << "\n";
    }
  }
}

}  // namespace faceaudit

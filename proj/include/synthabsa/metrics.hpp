#pragma once

// The shared evaluation contract: per-aspect confusion counts, detection
// metrics, detected-aspect sentiment MSE and per-aspect threshold calibration.

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthabsa/schema.hpp"

namespace synthabsa {

using AspectSet = std::set<std::string, std::less<>>;
using SentimentScores = std::map<std::string, double, std::less<>>;

struct AspectConfusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  AspectConfusion& operator+=(const AspectConfusion& o) noexcept {
    tp += o.tp; fp += o.fp; fn += o.fn; tn += o.tn;
    return *this;
  }
  bool operator==(const AspectConfusion&) const = default;
};

struct ConfusionCounts {
  std::vector<std::string> aspects;  // evaluated aspect universe, in order
  std::vector<AspectConfusion> counts;
  std::size_t n_reviews = 0;

  AspectConfusion pooled() const noexcept;
};

/// Per aspect a: tp = #(a in gold and pred), fp = #(a in pred only),
/// fn = #(a in gold only), tn = remainder. Throws ArgumentError on length
/// mismatch or when gold/pred mention an aspect outside `aspects`.
ConfusionCounts confusion_counts(std::span<const LabelSet> gold, std::span<const AspectSet> pred,
                                 std::span<const std::string> aspects);

struct BinaryMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double specificity = 0.0;
  double balanced_accuracy = 0.0;
  double mcc = 0.0;
};

/// Zero denominators resolve to 0 (precision, recall, specificity, f1, mcc).
BinaryMetrics binary_metrics(const AspectConfusion& c) noexcept;

struct AspectMetrics {
  std::string aspect;
  AspectConfusion counts;
  BinaryMetrics metrics;
  std::size_t support = 0;  // tp + fn
};

struct DetectionAggregates {
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double macro_balanced_accuracy = 0.0;
  double macro_specificity = 0.0;
  double macro_mcc = 0.0;
};

struct DetectionReport {
  std::vector<AspectMetrics> per_aspect;
  DetectionAggregates aggregates;
};

/// Micro metrics from summed counts; macro metrics are unweighted means.
DetectionReport detection_report(const ConfusionCounts& counts);

enum class SentimentView {
  detected,      // every predicted (review, aspect); gold 0 for false positives
  gold_present,  // every gold-present (review, aspect); missing scores count as 0
};

struct SentimentError {
  std::optional<double> mse;  // absent when no pair was accumulated
  std::size_t pairs = 0;
  std::map<std::string, std::pair<double, std::size_t>> per_aspect;  // sum of squares, count

  std::optional<double> aspect_mse(std::string_view aspect) const;
};

/// Throws ArgumentError on length mismatch or a score outside [-1, 1].
SentimentError sentiment_mse(std::span<const LabelSet> gold, std::span<const SentimentScores> pred,
                             SentimentView view = SentimentView::detected);

// ---------------------------------------------------------------------------
// Threshold calibration

/// 0.05, 0.10, ..., 0.95 (k / 20 for k = 1..19).
const std::array<double, 19>& threshold_grid() noexcept;
inline constexpr double kDefaultThreshold = 0.95;

struct ThresholdTable {
  std::vector<std::string> aspects;
  std::vector<double> thresholds;
  std::vector<bool> defaulted;  // aspect had no gold support on validation
  std::vector<double> validation_f1;

  /// Throws ArgumentError for an unknown aspect.
  double at(std::string_view aspect) const;
};

/// For each aspect, evaluates all 19 grid thresholds on validation scores
/// (present iff score >= threshold) and keeps the F1-maximizing one, ties to
/// the lowest threshold. Aspects with no gold positives get 0.95, flagged.
/// `scores[i][a]` is review i's score for aspects[a].
ThresholdTable calibrate_thresholds(std::span<const std::vector<double>> scores,
                                    std::span<const LabelSet> gold,
                                    std::span<const std::string> aspects);

nlohmann::json to_json(const ThresholdTable& table);
ThresholdTable threshold_table_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Score files: one JSON object per line, {id, probabilities, sentiments},
// shared by every model family.

struct ScoreRow {
  std::string id;
  SentimentScores probabilities;  // aspect -> detector probability in [0, 1]
  SentimentScores sentiments;     // aspect -> sentiment score in [-1, 1]
  bool operator==(const ScoreRow&) const = default;
};

void write_score_file(std::span<const ScoreRow> rows, const std::filesystem::path& path);
/// Throws ParseError (with line) on malformed rows or out-of-range values.
std::vector<ScoreRow> read_score_file(const std::filesystem::path& path);

struct Predictions {
  std::vector<AspectSet> aspects;
  std::vector<SentimentScores> sentiments;  // only for predicted aspects, clipped to [-1, 1]
};

/// Aspect present iff probability >= its threshold. Aspects absent from the
/// threshold table are never predicted.
Predictions apply_thresholds(std::span<const ScoreRow> rows, const ThresholdTable& thresholds);

/// Row-major probability matrix over `aspects` (missing probabilities read 0).
std::vector<std::vector<double>> probability_matrix(std::span<const ScoreRow> rows,
                                                    std::span<const std::string> aspects);

// ---------------------------------------------------------------------------
// Evaluation reports

struct EvalReport {
  std::string approach;
  std::string split_id;
  std::vector<std::string> aspects;
  ConfusionCounts counts;
  DetectionReport detection;
  SentimentError sentiment;
  SentimentView sentiment_view = SentimentView::detected;
  std::optional<double> runtime_minutes;
  /// Free-form provenance: seed, prompt_state_id, config hash, ...
  nlohmann::json provenance = nlohmann::json::object();
  /// Extra sections, e.g. prompt parse statistics.
  nlohmann::json extras = nlohmann::json::object();
};

/// Scores aligned predictions against gold over `aspects`.
EvalReport evaluate_predictions(std::string approach, std::span<const LabelSet> gold,
                                std::span<const AspectSet> predicted,
                                std::span<const SentimentScores> scores,
                                std::span<const std::string> aspects,
                                SentimentView view = SentimentView::detected);

inline constexpr std::string_view kEvalReportSchema = "synthabsa.eval_report.v1";

nlohmann::ordered_json to_json(const EvalReport& report);
/// Rebuilds a report (counts are authoritative; metrics are recomputed).
EvalReport eval_report_from_json(const nlohmann::json& j);

}  // namespace synthabsa

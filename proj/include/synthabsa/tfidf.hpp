#pragma once

// Classical two-step baseline: TF-IDF features, per-aspect logistic
// detectors and per-aspect ridge sentiment regressors.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthabsa/metrics.hpp"
#include "synthabsa/schema.hpp"

namespace synthabsa {

struct VectorizerConfig {
  int ngram_min = 1;
  int ngram_max = 2;
  std::size_t min_df = 2;
  bool lowercase = true;
  bool operator==(const VectorizerConfig&) const = default;
};

/// Sorted (column, value) pairs.
using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

/// Runs of ASCII letters and digits; everything else separates tokens.
std::vector<std::string> tokenize(std::string_view text, bool lowercase = true);

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(VectorizerConfig config, std::vector<std::string> terms,
             std::vector<std::size_t> document_frequency, std::size_t n_documents);

  std::size_t size() const noexcept { return terms_.size(); }
  const VectorizerConfig& config() const noexcept { return config_; }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  const std::vector<std::size_t>& document_frequency() const noexcept { return df_; }
  std::size_t n_documents() const noexcept { return n_docs_; }
  /// ln((1 + N) / (1 + df)) + 1
  double idf(std::size_t column) const { return idf_.at(column); }
  /// Column of `term`, or -1.
  long index_of(std::string_view term) const;

  /// Sublinear tf (1 + ln count) times idf, L2-normalized. Unknown terms are ignored.
  SparseVector transform(std::string_view text) const;

  bool operator==(const Vocabulary& o) const {
    return config_ == o.config_ && terms_ == o.terms_ && df_ == o.df_ && n_docs_ == o.n_docs_;
  }

 private:
  VectorizerConfig config_;
  std::vector<std::string> terms_;  // lexicographic; position = column
  std::vector<std::size_t> df_;
  std::vector<double> idf_;
  std::size_t n_docs_ = 0;
  std::map<std::string, std::uint32_t, std::less<>> index_;
};

/// Throws ArgumentError on no texts and SchemaError when min_df leaves an
/// empty vocabulary.
Vocabulary fit_vectorizer(std::span<const std::string> train_texts, const VectorizerConfig& config = {});

struct TwoStepConfig {
  VectorizerConfig vectorizer;
  double detector_l2 = 1.0;
  int detector_iterations = 200;
  double detector_learning_rate = 2.0;
  double detector_tolerance = 1e-6;
  double positive_weight_min = 1.0;
  double positive_weight_max = 50.0;
  double sentiment_l2 = 1.0;
};

struct AspectModel {
  std::string aspect;
  std::vector<double> detector_weights;
  double detector_bias = 0.0;
  bool degenerate = false;  // no training positives: always negative
  double positive_weight = 1.0;
  int iterations_run = 0;
  std::vector<double> sentiment_weights;
  double sentiment_bias = 0.0;
  std::size_t sentiment_rows = 0;
};

struct TwoStepModel {
  Vocabulary vocabulary;
  TwoStepConfig config;
  std::vector<AspectModel> aspects;  // inventory order
  ThresholdTable thresholds;
  std::uint64_t seed = 0;

  std::vector<std::string> aspect_ids() const;
};

/// Fits on `train` only; thresholds are calibrated on `validation`.
/// Throws ContractError if any record is tagged real_transfer or if the two
/// partitions share an id.
TwoStepModel train_two_step(std::span<const ReviewRecord> train,
                            std::span<const ReviewRecord> validation,
                            const AspectInventory& inventory, std::uint64_t seed,
                            const TwoStepConfig& config = {});

/// Detector probabilities and (unthresholded) sentiment scores for every aspect.
ScoreRow score_text(const TwoStepModel& model, std::string_view id, std::string_view text);
std::vector<ScoreRow> score_records(const TwoStepModel& model, std::span<const ReviewRecord> records);

struct TwoStepPrediction {
  AspectSet aspects;
  SentimentScores sentiments;  // predicted aspects only
};

TwoStepPrediction predict_two_step(const TwoStepModel& model, std::string_view text);

/// Recalibrates thresholds from fresh validation scores.
void recalibrate(TwoStepModel& model, std::span<const ReviewRecord> validation);

nlohmann::json to_json(const TwoStepModel& model);
TwoStepModel two_step_model_from_json(const nlohmann::json& j);
void save_model(const TwoStepModel& model, const std::filesystem::path& path);
TwoStepModel load_model(const std::filesystem::path& path);

}  // namespace synthabsa

#pragma once

// External-transfer evaluation on a user-supplied annotated real corpus,
// restricted to the aspects a conservative mapping can reach.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthabsa/corpus.hpp"
#include "synthabsa/metrics.hpp"
#include "synthabsa/schema.hpp"

namespace synthabsa {

enum class MultiMentionPolicy {
  majority,  // most frequent polarity, ties -> neutral
  first,     // first annotation wins
};

// {
//   "map": {"<external label>": "<internal aspect>", ...},
//   "unmapped": ["<external label>", ...],
//   "polarity": {"pos": "positive", "+1": "positive", ...}   (optional)
// }
struct AspectMapping {
  std::map<std::string, std::string> map;  // external -> internal
  std::vector<std::string> unmapped;
  std::map<std::string, Sentiment> polarity;

  /// The mapping's image, in inventory order.
  std::vector<std::string> overlap_aspects(const AspectInventory& inventory) const;
};

/// Default polarity table: negative/neutral/positive, neg/neu/pos, -1/0/+1/1.
std::map<std::string, Sentiment> default_polarity_table();

/// Throws SchemaError when a target is outside the inventory, an external
/// label is mapped twice (repeated key) or also listed as unmapped.
AspectMapping load_aspect_mapping(std::string_view document, const AspectInventory& inventory);
AspectMapping load_aspect_mapping_file(const std::filesystem::path& path, const AspectInventory& inventory);

struct ExternalAnnotation {
  std::string label;
  std::string polarity;
};

struct ExternalRecord {
  std::string id;
  std::string text;
  std::vector<ExternalAnnotation> annotations;
};

/// JSONL of {text, annotations: [{label, polarity}]} with optional id
/// (defaults to "ext-NNNNNN" by line order).
std::vector<ExternalRecord> load_external_corpus(const std::filesystem::path& path);

struct OverlapBenchmark {
  std::vector<ReviewRecord> records;  // source = real_transfer
  std::vector<std::string> overlap_aspects;
  std::map<std::string, PolaritySupport> support;  // every overlap aspect present
  std::size_t input_count = 0;
  std::size_t dropped_count = 0;                   // no mapped label
  std::map<std::string, std::size_t> unlisted_labels;  // neither mapped nor declared unmapped
};

/// Throws SchemaError naming an unknown polarity string.
OverlapBenchmark map_external_corpus(std::span<const ExternalRecord> records, const AspectMapping& mapping,
                                     const AspectInventory& inventory,
                                     MultiMentionPolicy policy = MultiMentionPolicy::majority);

nlohmann::ordered_json support_table_json(const OverlapBenchmark& benchmark);

/// Drops predicted aspects outside `overlap`.
Predictions restrict_to_overlap(const Predictions& predictions, std::span<const std::string> overlap);

/// Scores over the overlap aspects only. Throws ContractError if any
/// prediction names a non-overlap aspect (restrict first).
EvalReport evaluate_overlap(std::string approach, const Predictions& predictions, const OverlapBenchmark& benchmark);

struct OverlapComparison {
  EvalReport synthetic;  // synthetic test split, gold restricted to the overlap
  EvalReport real;       // mapped real benchmark
  double delta_micro_f1 = 0.0;               // real minus synthetic
  std::optional<double> delta_sentiment_mse;
};

/// Both sides restricted to the same overlap aspects; every synthetic test
/// record is kept, with its gold cut down to overlap aspects.
OverlapComparison overlap_matched_comparison(std::string approach, const Predictions& synthetic_predictions,
                                             std::span<const ReviewRecord> synthetic_test,
                                             const Predictions& real_predictions, const OverlapBenchmark& benchmark);

nlohmann::ordered_json to_json(const OverlapComparison& comparison);

}  // namespace synthabsa

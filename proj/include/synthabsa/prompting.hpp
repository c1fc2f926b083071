#pragma once

// Prompted aspect/sentiment inference under the exact-key sparse JSON
// contract: zero-shot, few-shot variants and the two decomposed modes.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synthabsa/metrics.hpp"
#include "synthabsa/provider.hpp"
#include "synthabsa/schema.hpp"
#include "synthabsa/tfidf.hpp"

namespace synthabsa {

enum class PromptingMode {
  zero_shot,
  few_shot_fixed,
  few_shot_diverse,
  retrieval_few_shot,
  two_pass,
  aspect_by_aspect,
};

inline constexpr std::array<PromptingMode, 6> kPromptingModes = {
    PromptingMode::zero_shot,          PromptingMode::few_shot_fixed, PromptingMode::few_shot_diverse,
    PromptingMode::retrieval_few_shot, PromptingMode::two_pass,       PromptingMode::aspect_by_aspect};

std::string_view to_string(PromptingMode mode) noexcept;
/// Throws ArgumentError for an unknown name.
PromptingMode parse_prompting_mode(std::string_view name);

struct Demonstration {
  std::string id;
  std::string text;
  LabelSet labels;
};

struct DemonstrationConfig {
  std::vector<std::string> fixed_ids;    // exactly 3 when set
  std::vector<std::string> diverse_ids;  // exactly 5 when set
  std::size_t retrieval_k = 3;
};

/// Demonstration pool over the training partition. Construction throws
/// ContractError for records tagged with another split or real_transfer.
class DemonstrationPool {
 public:
  DemonstrationPool(std::span<const ReviewRecord> train, DemonstrationConfig config = {});

  /// The configured triple, or the first training record of each label-set
  /// size 1, 2, 3 when unconfigured.
  const std::vector<Demonstration>& fixed() const noexcept { return fixed_; }
  /// The configured five, or a greedy pick covering sizes 1-3 and at least
  /// three writing styles.
  const std::vector<Demonstration>& diverse() const noexcept { return diverse_; }
  /// Top-k training records by TF-IDF cosine to `query`; ties by train index.
  std::vector<Demonstration> retrieve(std::string_view query) const;
  /// Cosine similarities of `query` to every training record, in train order.
  std::vector<double> similarities(std::string_view query) const;

  bool contains(std::string_view id) const;
  std::size_t size() const noexcept { return train_.size(); }

 private:
  std::vector<Demonstration> train_;
  DemonstrationConfig config_;
  std::vector<Demonstration> fixed_;
  std::vector<Demonstration> diverse_;
  std::optional<Vocabulary> vocabulary_;
  std::vector<SparseVector> vectors_;
};

/// Ordered demonstrations for a mode; two_pass and aspect_by_aspect use none.
/// Throws ArgumentError for retrieval on an empty pool.
std::vector<Demonstration> select_demonstrations(PromptingMode mode, const DemonstrationPool& pool,
                                                 std::string_view query);

inline constexpr std::string_view kQueryOpen = "Review to annotate:\n<<<\n";
inline constexpr std::string_view kQueryClose = "\n>>>";
inline constexpr std::string_view kPresenceMarker = "Presence question: ";
inline constexpr std::string_view kSentimentMarker = "Sentiment question: ";
inline constexpr std::string_view kDetectionMarker = "Detection step: ";
inline constexpr std::string_view kConditionedMarker = "Sentiment step for detected aspects: ";

/// Single-prompt modes: schema block, demonstrations, query.
std::string build_inference_prompt(std::string_view review, std::span<const Demonstration> demonstrations,
                                   const AspectInventory& inventory);

/// two_pass, step 1: asks for a JSON array of aspect ids.
std::string build_detection_prompt(std::string_view review, const AspectInventory& inventory);
/// two_pass, step 2: asks for an object with exactly the detected aspects.
std::string build_conditioned_sentiment_prompt(std::string_view review, std::span<const std::string> detected);
/// aspect_by_aspect: yes/no presence question for one aspect.
std::string build_presence_prompt(std::string_view review, std::string_view aspect);
/// aspect_by_aspect: one ternary label for a present aspect.
std::string build_aspect_sentiment_prompt(std::string_view review, std::string_view aspect);

/// Text between kQueryOpen and kQueryClose, if the prompt has one.
std::optional<std::string> extract_query(std::string_view prompt);

struct ParsedPrediction {
  LabelSet labels;
  bool valid = false;
  std::string error;
};

/// Strict: exactly one JSON object of inventory aspect -> ternary label.
/// Unknown keys, other values, duplicate keys or trailing content invalidate
/// the whole response. `{}` is valid. Never throws.
ParsedPrediction parse_structured_output(std::string_view raw, const AspectInventory& inventory);

/// Strict JSON array of distinct inventory aspect ids. Never throws.
std::optional<std::vector<std::string>> parse_aspect_list(std::string_view raw, const AspectInventory& inventory);
/// "yes" / "no" after trimming whitespace.
std::optional<bool> parse_yes_no(std::string_view raw);
/// A bare ternary label after trimming whitespace.
std::optional<Sentiment> parse_ternary(std::string_view raw);

struct ParseStats {
  std::size_t n_responses = 0;  // reviews
  std::size_t n_valid = 0;
  std::size_t n_failed = 0;     // provider gave up after retries
  std::size_t n_requests = 0;   // provider calls issued
  double parse_success_rate() const noexcept {
    return n_responses ? static_cast<double>(n_valid) / static_cast<double>(n_responses) : 0.0;
  }
};

nlohmann::json to_json(const ParseStats& stats);

struct PromptingResult {
  PromptingMode mode = PromptingMode::zero_shot;
  std::vector<ParsedPrediction> predictions;  // test order
  ParseStats stats;
  EvalReport report;
};

/// Scores invalid or failed reviews as empty predictions. Sentiment uses the
/// ternary value as score.
PromptingResult run_prompting_eval(Provider& provider, PromptingMode mode, std::span<const ReviewRecord> test,
                                   const DemonstrationPool& pool, const AspectInventory& inventory,
                                   const DispatchOptions& options = {});

}  // namespace synthabsa

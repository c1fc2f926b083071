#pragma once

// Blinded real-vs-synthetic judging, per-cycle statistics, the equivalence
// check and editor-driven instruction updates.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthabsa/provider.hpp"
#include "synthabsa/random.hpp"
#include "synthabsa/schema.hpp"
#include "synthabsa/stats.hpp"

namespace synthabsa {

enum class ItemSource { real, synthetic };

std::string_view to_string(ItemSource s) noexcept;

struct JudgeItem {
  std::string id;
  std::string text;
  ItemSource hidden_source = ItemSource::real;
  std::string prompt_state_id;  // synthetic items only
};

inline constexpr std::size_t kItemsPerSource = 30;

/// Samples `per_source` items from each pool without replacement and
/// shuffles them together. Throws ArgumentError naming the counts when a
/// pool is too small, ContractError when synthetic items mix prompt states.
std::vector<JudgeItem> build_cycle_pool(std::span<const ReviewRecord> real, std::span<const ReviewRecord> synthetic,
                                        Rng& rng, std::size_t per_source = kItemsPerSource);

/// The judge sees the review text and nothing else.
std::string build_judge_prompt(std::string_view text);

struct JudgeVerdict {
  std::string item_id;
  std::optional<ItemSource> decision;  // empty: abstention
  double confidence = 0.0;
  std::vector<std::string> cue_tags;
  std::string justification;
  bool reasked = false;
  std::string error;

  bool abstained() const noexcept { return !decision.has_value(); }
};

/// Strict verdict object {decision, confidence, cue_tags, justification}.
std::optional<JudgeVerdict> parse_judge_verdict(std::string_view raw, std::string& error);

/// One independent request per item. An unparseable answer is re-asked once;
/// a second failure or a transport failure becomes an abstention.
std::vector<JudgeVerdict> run_judge_cycle(Provider& provider, std::span<const JudgeItem> pool,
                                          const DispatchOptions& options = {});

struct CycleStatistics {
  std::size_t n_items = 0;
  std::size_t n_scored = 0;     // abstentions excluded
  std::size_t n_abstained = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  double chance_confusion = 0.0;
  double mean_entropy_nats = 0.0;
  double p_value = 1.0;
  Interval wilson;
  std::size_t correctly_detected_synthetic = 0;
};

/// Pure function of verdicts and their items' hidden sources (matched by id).
/// Throws ArgumentError if a verdict's item is missing.
CycleStatistics cycle_statistics(std::span<const JudgeVerdict> verdicts, std::span<const JudgeItem> items);

struct EquivalenceResult {
  bool passed = false;
  Interval interval;
  double margin = 0.10;
};

/// Passes iff the Wilson 95% interval for round(accuracy * n) / n lies
/// within [0.5 - margin, 0.5 + margin].
EquivalenceResult equivalence_check(double accuracy, std::size_t n, double margin = 0.10);

/// Verdicts with decision = synthetic on items that are synthetic.
std::vector<JudgeVerdict> true_positive_synthetic(std::span<const JudgeVerdict> verdicts,
                                                  std::span<const JudgeItem> items);

std::string build_editor_prompt(std::string_view instruction, std::span<const JudgeVerdict> detections);

struct EditorResult {
  std::string instruction;
  bool triggered = false;
  std::string error;
};

/// Triggered iff `detections` is non-empty; the provider's trimmed answer
/// becomes the next instruction. On provider failure the instruction is kept
/// and triggered is false.
EditorResult editor_update(Provider& provider, std::string_view instruction,
                           std::span<const JudgeVerdict> detections, const DispatchOptions& options = {},
                           std::string_view request_id = "editor");

/// Bundled id when the text matches a bundled state, else "edited-<hash>".
std::string prompt_state_id_for(std::string_view instruction);

struct CycleRecord {
  std::size_t cycle = 0;
  std::string prompt_state_id;
  CycleStatistics stats;
  bool editor_triggered = false;
  std::string instruction_before;
  std::string instruction_after;
  std::vector<JudgeItem> items;
  std::vector<JudgeVerdict> verdicts;
};

nlohmann::ordered_json to_json(const CycleRecord& record);

/// Supplies at least 30 synthetic reviews written under an instruction.
using SyntheticSource =
    std::function<std::vector<ReviewRecord>(std::size_t cycle, const std::string& prompt_state_id,
                                            const std::string& instruction)>;

struct RealismConfig {
  std::size_t cycles = 3;
  std::uint64_t seed = 0;
  std::string initial_instruction;
  std::size_t per_source = kItemsPerSource;
  DispatchOptions dispatch;
};

/// Strictly sequential cycles; cycle c + 1 generates under the instruction
/// the editor produced after cycle c.
std::vector<CycleRecord> run_realism_cycles(Provider& judge, Provider& editor, std::span<const ReviewRecord> real,
                                            const SyntheticSource& synthetic, const RealismConfig& config);

}  // namespace synthabsa

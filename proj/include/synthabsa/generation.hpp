#pragma once

// Two-stream sampling of supervision targets and nuance states, prompt
// rendering, token budgeting, batched generation, refinement and the pilot gate.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synthabsa/provider.hpp"
#include "synthabsa/random.hpp"
#include "synthabsa/schema.hpp"

namespace synthabsa {

// ---------------------------------------------------------------------------
// Sampling

enum class AspectCountPolicy {
  rounded,    // K ~ Categorical(0.30, 0.40, 0.30)
  empirical,  // proportional to the realized 2008 / 1969 / 2007 counts
};

std::array<double, 3> aspect_count_probabilities(AspectCountPolicy policy) noexcept;

/// K in {1, 2, 3}.
int sample_aspect_count(Rng& rng, AspectCountPolicy policy = AspectCountPolicy::rounded);

/// K distinct aspects uniformly without replacement, each with a uniform
/// sentiment. Throws ArgumentError unless 1 <= k <= 3.
LabelSet sample_label_set(Rng& rng, int k, const AspectInventory& inventory);

/// 5/4/3/3 selections per group with course_name and review_length_band
/// forced; the remaining picks in each group are uniform without replacement
/// and values are uniform per attribute. Selections come back in schema order.
NuanceState sample_nuance_state(Rng& rng, const NuanceSchema& schema);

/// Stream labels for the two independent sampling streams.
inline constexpr std::string_view kTargetStream = "targets";
inline constexpr std::string_view kNuanceStream = "nuance";

// ---------------------------------------------------------------------------
// Prompt states and rendering

struct PromptState {
  std::string id;
  std::string instruction;
};

/// rich_attributes_baseline, reduce_synthetic_signatures, messier_realism.
const std::vector<PromptState>& bundled_prompt_states();
/// Throws ArgumentError for an unknown id.
const PromptState& bundled_prompt_state(std::string_view id);
/// The state used for full-scale generation (messier_realism).
const PromptState& final_prompt_state();

inline constexpr std::string_view kGenerationPreamble =
    "You are writing one realistic student course review for research validation. The review "
    "must feel like a naturally written student comment rather than a labeled synthetic sample.";
inline constexpr std::string_view kAspectBlockLabel = "Target aspect sentiments: ";
inline constexpr std::string_view kAttributeBlockLabel = "Target attributes: ";
inline constexpr std::string_view kLengthGuidanceLabel = "- Hard length guidance: write between ";
inline constexpr std::string_view kStableInstructionLabel = "- Additional stable realism instruction: ";
inline constexpr std::string_view kReturnReviewOnly = "Return only the review text.";

/// {"aspect": "sentiment", ...} in aspect-id order, single line.
std::string render_aspect_block(const LabelSet& labels);
/// {"attribute": "value", ...} in schema order, single line.
std::string render_attribute_block(const NuanceState& nuance);

/// Deterministic prompt T(A, N, I). Throws ContractError when the nuance
/// state has no review_length_band or the band is unknown.
std::string build_generation_prompt(const LabelSet& labels, const NuanceState& nuance,
                                    std::string_view instruction,
                                    const LengthBandTable& bands = default_length_bands());

// ---------------------------------------------------------------------------
// Token budgets
//
// budget = ceil32(midpoint_words(band) * 1.6 * 1.25 * (1 + 0.10 * (K - 1)))

inline constexpr double kTokensPerWord = 1.6;
inline constexpr double kBudgetSafetyMargin = 1.25;
inline constexpr double kBudgetPerExtraAspect = 0.10;
inline constexpr int kBudgetGranularity = 32;

/// Throws ArgumentError for an unknown band or K outside {1, 2, 3}.
int output_token_budget(std::string_view band, int k,
                        const LengthBandTable& bands = default_length_bands());

// ---------------------------------------------------------------------------
// Batched generation

struct GenerationRequest {
  std::string id;
  std::string prompt_text;
  int max_output_tokens = 0;
  LabelSet labels;
  NuanceState nuance;
  std::string prompt_state_id;
};

struct GenerationResponse {
  std::string id;
  std::string text;
  CompletionStatus completion_status = CompletionStatus::completed;
  bool failed = false;  // retries exhausted; text is empty
  std::string error;
};

/// One response per request, same order, matched by id. Incomplete
/// responses are kept; transport failures come back with failed = true.
std::vector<GenerationResponse> generate_batch(Provider& provider,
                                               std::span<const GenerationRequest> requests,
                                               const DispatchOptions& options = {});

inline constexpr std::string_view kRefinementPreamble =
    "You are editing one student course review draft so it reads like a naturally written "
    "comment.";
inline constexpr std::string_view kDraftOpen = "Draft review:\n<<<\n";
inline constexpr std::string_view kDraftClose = "\n>>>";
inline constexpr std::string_view kReturnRevisedOnly = "Return only the revised review text.";

std::string build_refinement_prompt(std::string_view draft, const LabelSet& labels,
                                    const NuanceState& nuance, std::string_view instruction);

struct RefinementResult {
  std::string text;
  RefinementStatus status = RefinementStatus::not_run;
};

/// x = R(x0, A, N, I). A failed or incomplete refinement keeps the draft and
/// reports skipped. Labels and nuance are inputs only.
std::vector<RefinementResult> refine_batch(Provider& provider, std::span<const std::string> drafts,
                                           std::span<const LabelSet> labels,
                                           std::span<const NuanceState> nuance,
                                           std::string_view instruction,
                                           const DispatchOptions& options = {});

// ---------------------------------------------------------------------------
// End-to-end record generation

struct GenerationConfig {
  std::size_t n = 0;
  std::uint64_t master_seed = 0;
  AspectCountPolicy policy = AspectCountPolicy::rounded;
  std::string prompt_state_id = "messier_realism";
  std::string instruction;  // empty: taken from the bundled prompt state
  bool refine = false;
  std::string id_prefix = "syn";
  std::size_t id_offset = 0;
  DispatchOptions dispatch;
};

/// Samples targets and nuance from two streams derived from master_seed and
/// renders one request per record.
std::vector<GenerationRequest> plan_generation(const GenerationConfig& config,
                                               const AspectInventory& inventory,
                                               const NuanceSchema& schema,
                                               const LengthBandTable& bands = default_length_bands());

struct GenerationRun {
  std::vector<ReviewRecord> records;    // successful requests, in request order
  std::vector<std::string> failed_ids;  // requests whose retries ran out
  std::size_t requested = 0;
};

GenerationRun generate_records(Provider& provider, const GenerationConfig& config,
                               const AspectInventory& inventory, const NuanceSchema& schema,
                               const LengthBandTable& bands = default_length_bands());

// ---------------------------------------------------------------------------
// Pilot gate

struct PilotThresholds {
  double completed_rate = 1.0;
  double text_success_rate = 1.0;
  double duplicate_rate = 0.0;  // maximum
  double length_band_match_rate = 0.80;
};

struct PilotGateReport {
  std::size_t n_reviews = 0;
  double completed_rate = 0.0;
  double text_success_rate = 0.0;
  double duplicate_rate = 0.0;
  double length_band_match_rate = 0.0;
  double mean_words = 0.0;
  bool passed = false;
  std::vector<std::string> diagnostics;
};

/// Rates are over `n_requested`; missing records count as failures.
PilotGateReport evaluate_pilot(std::span<const ReviewRecord> records, std::size_t n_requested,
                               const PilotThresholds& thresholds = {},
                               const LengthBandTable& bands = default_length_bands());

/// Generates config.n records (25 by default when n == 0) and evaluates the gate.
PilotGateReport run_pilot_gate(Provider& provider, GenerationConfig config,
                               const PilotThresholds& thresholds = {},
                               const AspectInventory& inventory = default_aspect_inventory(),
                               const NuanceSchema& schema = default_nuance_schema(),
                               const LengthBandTable& bands = default_length_bands());

nlohmann::json to_json(const PilotGateReport& report);

}  // namespace synthabsa

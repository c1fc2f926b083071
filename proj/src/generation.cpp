#include "synthabsa/generation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "synthabsa/default_config.hpp"
#include "synthabsa/errors.hpp"

namespace synthabsa {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Sampling

std::array<double, 3> aspect_count_probabilities(AspectCountPolicy policy) noexcept {
  if (policy == AspectCountPolicy::empirical) {
    constexpr double total = 2008.0 + 1969.0 + 2007.0;
    return {2008.0 / total, 1969.0 / total, 2007.0 / total};
  }
  return {0.30, 0.40, 0.30};
}

int sample_aspect_count(Rng& rng, AspectCountPolicy policy) {
  const auto probs = aspect_count_probabilities(policy);
  return static_cast<int>(rng.categorical(probs)) + 1;
}

LabelSet sample_label_set(Rng& rng, int k, const AspectInventory& inventory) {
  if (k < static_cast<int>(kMinLabels) || k > static_cast<int>(kMaxLabels))
    throw ArgumentError("aspect count must be in [1, 3], got " + std::to_string(k));
  LabelSet labels;
  for (auto index : rng.sample_indices(inventory.size(), static_cast<std::size_t>(k))) {
    const auto sentiment = kAllSentiments[rng.uniform_below(kAllSentiments.size())];
    labels.set(inventory.id(index), sentiment);
  }
  return labels;
}

NuanceState sample_nuance_state(Rng& rng, const NuanceSchema& schema) {
  std::set<std::string_view> chosen;
  for (auto group : kNuanceGroups) {
    std::vector<const NuanceAttribute*> pool;
    std::size_t forced = 0;
    for (const auto* attr : schema.attributes_in(group)) {
      if (attr->id == kCourseNameAttribute || attr->id == kLengthBandAttribute) {
        chosen.insert(attr->id);
        ++forced;
      } else {
        pool.push_back(attr);
      }
    }
    const auto need = selections_per_group(group) - forced;
    for (auto i : rng.sample_indices(pool.size(), need)) chosen.insert(pool[i]->id);
  }
  NuanceState state;
  for (const auto& attr : schema.attributes()) {
    if (!chosen.contains(attr.id)) continue;
    const auto& value = attr.values[rng.uniform_below(attr.values.size())];
    state.selections.push_back({attr.id, attr.group, value});
  }
  return state;
}

// ---------------------------------------------------------------------------
// Prompt states

const std::vector<PromptState>& bundled_prompt_states() {
  static const std::vector<PromptState> states = [] {
    std::vector<PromptState> out;
    const auto doc = json::parse(bundled::kPromptStatesJson);
    for (const auto& s : doc.at("states"))
      out.push_back({s.at("id").get<std::string>(), s.at("instruction").get<std::string>()});
    return out;
  }();
  return states;
}

const PromptState& bundled_prompt_state(std::string_view id) {
  for (const auto& s : bundled_prompt_states())
    if (s.id == id) return s;
  throw ArgumentError("unknown prompt state '" + std::string(id) + "'");
}

const PromptState& final_prompt_state() { return bundled_prompt_state("messier_realism"); }

// ---------------------------------------------------------------------------
// Rendering

std::string render_aspect_block(const LabelSet& labels) {
  ordered_json block = ordered_json::object();
  for (const auto& e : labels) block[e.aspect] = std::string(to_string(e.sentiment));
  return block.dump();
}

std::string render_attribute_block(const NuanceState& nuance) {
  ordered_json block = ordered_json::object();
  for (const auto& s : nuance.selections) block[s.attribute] = s.value;
  return block.dump();
}

std::string build_generation_prompt(const LabelSet& labels, const NuanceState& nuance,
                                    std::string_view instruction, const LengthBandTable& bands) {
  const auto band_name = nuance.find(kLengthBandAttribute);
  if (!band_name) throw ContractError("nuance state has no review_length_band");
  const auto* band = bands.find(*band_name);
  if (!band) throw ContractError("nuance state names unknown length band '" + std::string(*band_name) + "'");

  std::string prompt;
  prompt += kGenerationPreamble;
  prompt += "\n\n";
  prompt += kAspectBlockLabel;
  prompt += render_aspect_block(labels);
  prompt += "\n\n";
  prompt += kAttributeBlockLabel;
  prompt += render_attribute_block(nuance);
  prompt += "\n\nRequirements:\n";
  prompt +=
      "- Keep the review first-person and specific.\n"
      "- Do not mention aspect labels or sentiment labels explicitly.\n"
      "- Do not force a tidy conclusion.\n"
      "- Do not cover every aspect with the same level of detail.\n"
      "- Let at least one point feel incidental rather than checklist-driven.\n"
      "- Preserve mixed feelings when the attributes imply them.\n";
  prompt += fmt::format("{}{} and {} words ({} band).\n", kLengthGuidanceLabel, band->min_words,
                        band->max_words, band->name);
  prompt += kStableInstructionLabel;
  prompt += instruction;
  prompt += "\n\n";
  prompt += kReturnReviewOnly;
  return prompt;
}

// ---------------------------------------------------------------------------
// Budgets

int output_token_budget(std::string_view band, int k, const LengthBandTable& bands) {
  if (k < 1 || k > 3) throw ArgumentError("aspect count must be in [1, 3], got " + std::to_string(k));
  const auto& b = bands.at(band);
  const double tokens = b.midpoint() * kTokensPerWord * kBudgetSafetyMargin *
                        (1.0 + kBudgetPerExtraAspect * (k - 1));
  // Round before ceil so float noise on exact multiples does not bump a step.
  const double steps = std::ceil(std::round(tokens * 1e6) / 1e6 / kBudgetGranularity);
  return static_cast<int>(steps) * kBudgetGranularity;
}

// ---------------------------------------------------------------------------
// Generation

std::vector<GenerationResponse> generate_batch(Provider& provider,
                                               std::span<const GenerationRequest> requests,
                                               const DispatchOptions& options) {
  std::vector<CompletionRequest> wire;
  wire.reserve(requests.size());
  for (const auto& r : requests) wire.push_back({r.id, r.prompt_text, r.max_output_tokens});
  const auto outcomes = dispatch_batch(provider, wire, options);

  std::vector<GenerationResponse> responses;
  responses.reserve(outcomes.size());
  for (const auto& o : outcomes) {
    GenerationResponse r;
    r.id = o.id;
    if (o.ok()) {
      r.text = o.response->text;
      r.completion_status = o.response->status;
    } else {
      r.failed = true;
      r.completion_status = CompletionStatus::incomplete;
      r.error = o.error;
    }
    responses.push_back(std::move(r));
  }
  return responses;
}

std::string build_refinement_prompt(std::string_view draft, const LabelSet& labels,
                                    const NuanceState& nuance, std::string_view instruction) {
  std::string prompt;
  prompt += kRefinementPreamble;
  prompt +=
      "\nRemove recurrent synthetic cues such as checklist coverage of every aspect, neatly "
      "balanced pros and cons, stock recommendation summaries and stacked domain terms. Keep every "
      "declared aspect sentiment recognizable and do not add new aspects.\n\n";
  prompt += "Declared aspect sentiments: " + render_aspect_block(labels) + "\n";
  prompt += "Context attributes: " + render_attribute_block(nuance) + "\n";
  prompt += "Stable realism instruction: ";
  prompt += instruction;
  prompt += "\n\n";
  prompt += kDraftOpen;
  prompt += draft;
  prompt += kDraftClose;
  prompt += "\n\n";
  prompt += kReturnRevisedOnly;
  return prompt;
}

std::vector<RefinementResult> refine_batch(Provider& provider, std::span<const std::string> drafts,
                                           std::span<const LabelSet> labels,
                                           std::span<const NuanceState> nuance,
                                           std::string_view instruction,
                                           const DispatchOptions& options) {
  if (labels.size() != drafts.size() || nuance.size() != drafts.size())
    throw ArgumentError("refine_batch: drafts, labels and nuance must align");
  std::vector<CompletionRequest> wire;
  wire.reserve(drafts.size());
  for (std::size_t i = 0; i < drafts.size(); ++i)
    wire.push_back({"refine-" + std::to_string(i),
                    build_refinement_prompt(drafts[i], labels[i], nuance[i], instruction), 0});
  const auto outcomes = dispatch_batch(provider, wire, options);

  std::vector<RefinementResult> results(drafts.size());
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    const auto& o = outcomes[i];
    const bool usable = o.ok() && o.response->status == CompletionStatus::completed &&
                        !o.response->text.empty();
    if (usable) {
      results[i] = {o.response->text, RefinementStatus::applied};
    } else {
      spdlog::warn("refinement skipped for draft {}: {}", i,
                   o.ok() ? "incomplete or empty response" : o.error);
      results[i] = {drafts[i], RefinementStatus::skipped};
    }
  }
  return results;
}

std::vector<GenerationRequest> plan_generation(const GenerationConfig& config,
                                               const AspectInventory& inventory,
                                               const NuanceSchema& schema,
                                               const LengthBandTable& bands) {
  const std::string instruction = config.instruction.empty()
                                      ? bundled_prompt_state(config.prompt_state_id).instruction
                                      : config.instruction;
  Rng targets = derive_stream(config.master_seed, kTargetStream);
  Rng nuance_rng = derive_stream(config.master_seed, kNuanceStream);

  std::vector<GenerationRequest> requests;
  requests.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    GenerationRequest req;
    req.id = fmt::format("{}-{:06d}", config.id_prefix, config.id_offset + i + 1);
    const int k = sample_aspect_count(targets, config.policy);
    req.labels = sample_label_set(targets, k, inventory);
    req.nuance = sample_nuance_state(nuance_rng, schema);
    req.prompt_text = build_generation_prompt(req.labels, req.nuance, instruction, bands);
    req.max_output_tokens =
        output_token_budget(*req.nuance.find(kLengthBandAttribute), k, bands);
    req.prompt_state_id = config.prompt_state_id;
    requests.push_back(std::move(req));
  }
  return requests;
}

GenerationRun generate_records(Provider& provider, const GenerationConfig& config,
                               const AspectInventory& inventory, const NuanceSchema& schema,
                               const LengthBandTable& bands) {
  const auto requests = plan_generation(config, inventory, schema, bands);
  const auto responses = generate_batch(provider, requests, config.dispatch);

  GenerationRun run;
  run.requested = requests.size();
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& req = requests[i];
    const auto& res = responses[i];
    if (res.failed) {
      run.failed_ids.push_back(req.id);
      continue;
    }
    ReviewRecord rec;
    rec.id = req.id;
    rec.labels = req.labels;
    rec.nuance = req.nuance;
    rec.meta.length_band = std::string(*req.nuance.find(kLengthBandAttribute));
    rec.meta.max_output_tokens = req.max_output_tokens;
    rec.meta.completion_status = res.completion_status;
    rec.meta.prompt_state_id = req.prompt_state_id;
    rec.set_text(res.text);
    run.records.push_back(std::move(rec));
    kept.push_back(i);
  }

  if (config.refine) {
    const std::string instruction = config.instruction.empty()
                                        ? bundled_prompt_state(config.prompt_state_id).instruction
                                        : config.instruction;
    std::vector<std::size_t> targets;
    std::vector<std::string> drafts;
    std::vector<LabelSet> labels;
    std::vector<NuanceState> nuance;
    for (std::size_t r = 0; r < run.records.size(); ++r) {
      const auto& rec = run.records[r];
      if (rec.meta.completion_status != CompletionStatus::completed) continue;
      targets.push_back(r);
      drafts.push_back(rec.text);
      labels.push_back(rec.labels);
      nuance.push_back(*rec.nuance);
    }
    const auto refined = refine_batch(provider, drafts, labels, nuance, instruction, config.dispatch);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      auto& rec = run.records[targets[t]];
      rec.set_text(refined[t].text);
      rec.meta.refinement = refined[t].status;
    }
  }
  return run;
}

// ---------------------------------------------------------------------------
// Pilot gate

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

PilotGateReport evaluate_pilot(std::span<const ReviewRecord> records, std::size_t n_requested,
                               const PilotThresholds& thresholds, const LengthBandTable& bands) {
  PilotGateReport report;
  report.n_reviews = n_requested;
  if (n_requested == 0) {
    report.diagnostics.push_back("no reviews requested");
    return report;
  }
  std::size_t completed = 0, with_text = 0, duplicates = 0, in_band = 0;
  double words = 0.0;
  std::set<std::string_view> seen;
  for (const auto& r : records) {
    if (r.meta.completion_status == CompletionStatus::completed) ++completed;
    const auto body = trim(r.text);
    if (!body.empty()) {
      ++with_text;
      if (!seen.insert(body).second) ++duplicates;
    }
    if (r.meta.length_band) {
      const auto* band = bands.find(*r.meta.length_band);
      if (band && band->contains(r.meta.word_count)) ++in_band;
    }
    words += r.meta.word_count;
  }
  const auto n = static_cast<double>(n_requested);
  report.completed_rate = completed / n;
  report.text_success_rate = with_text / n;
  report.duplicate_rate = duplicates / n;
  report.length_band_match_rate = in_band / n;
  report.mean_words = records.empty() ? 0.0 : words / static_cast<double>(records.size());

  if (records.size() < n_requested)
    report.diagnostics.push_back(fmt::format("{} of {} requests produced no record",
                                             n_requested - records.size(), n_requested));
  if (report.completed_rate < thresholds.completed_rate)
    report.diagnostics.push_back(fmt::format("completed rate {:.4f} below {:.2f}",
                                             report.completed_rate, thresholds.completed_rate));
  if (report.text_success_rate < thresholds.text_success_rate)
    report.diagnostics.push_back(fmt::format("text success rate {:.4f} below {:.2f}",
                                             report.text_success_rate, thresholds.text_success_rate));
  if (report.duplicate_rate > thresholds.duplicate_rate)
    report.diagnostics.push_back(fmt::format("duplicate rate {:.4f} above {:.2f}",
                                             report.duplicate_rate, thresholds.duplicate_rate));
  if (report.length_band_match_rate < thresholds.length_band_match_rate)
    report.diagnostics.push_back(fmt::format("length-band match rate {:.4f} below {:.2f}",
                                             report.length_band_match_rate,
                                             thresholds.length_band_match_rate));
  report.passed = report.diagnostics.empty();
  return report;
}

PilotGateReport run_pilot_gate(Provider& provider, GenerationConfig config,
                               const PilotThresholds& thresholds, const AspectInventory& inventory,
                               const NuanceSchema& schema, const LengthBandTable& bands) {
  if (config.n == 0) config.n = 25;
  GenerationRun run;
  try {
    run = generate_records(provider, config, inventory, schema, bands);
  } catch (const std::exception& e) {
    PilotGateReport failed;
    failed.n_reviews = config.n;
    failed.diagnostics.push_back(std::string("provider failure: ") + e.what());
    return failed;
  }
  auto report = evaluate_pilot(run.records, config.n, thresholds, bands);
  for (const auto& id : run.failed_ids) report.diagnostics.push_back("request failed: " + id);
  report.passed = report.diagnostics.empty();
  return report;
}

json to_json(const PilotGateReport& report) {
  return {{"n_reviews", report.n_reviews},
          {"completed_rate", report.completed_rate},
          {"text_success_rate", report.text_success_rate},
          {"duplicate_rate", report.duplicate_rate},
          {"length_band_match_rate", report.length_band_match_rate},
          {"mean_words", report.mean_words},
          {"passed", report.passed},
          {"diagnostics", report.diagnostics}};
}

}  // namespace synthabsa

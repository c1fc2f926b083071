#include "synthabsa/realism.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "synthabsa/errors.hpp"
#include "synthabsa/generation.hpp"

namespace synthabsa {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(ItemSource s) noexcept { return s == ItemSource::real ? "real" : "synthetic"; }

std::vector<JudgeItem> build_cycle_pool(std::span<const ReviewRecord> real, std::span<const ReviewRecord> synthetic,
                                        Rng& rng, std::size_t per_source) {
  if (real.size() < per_source || synthetic.size() < per_source)
    throw ArgumentError(fmt::format("a cycle needs {} real and {} synthetic reviews; got {} and {}", per_source,
                                    per_source, real.size(), synthetic.size()));
  std::vector<JudgeItem> items;
  for (auto i : rng.sample_indices(real.size(), per_source))
    items.push_back({real[i].id, real[i].text, ItemSource::real, ""});
  std::string state;
  for (auto i : rng.sample_indices(synthetic.size(), per_source)) {
    const auto& r = synthetic[i];
    if (state.empty()) state = r.meta.prompt_state_id;
    if (r.meta.prompt_state_id != state)
      throw ContractError("synthetic items in one cycle come from different prompt states ('" + state + "', '" +
                          r.meta.prompt_state_id + "')");
    items.push_back({r.id, r.text, ItemSource::synthetic, r.meta.prompt_state_id});
  }
  rng.shuffle(items);
  return items;
}

std::string build_judge_prompt(std::string_view text) {
  std::string p =
      "You are judging whether a student course review was written by a real student or generated "
      "by a language model.\n"
      "Answer with exactly one JSON object: {\"decision\": \"real\" or \"synthetic\", \"confidence\": "
      "a number from 0 to 1, \"cue_tags\": [short strings naming the cues you used], "
      "\"justification\": one or two sentences}.\n\nReview:\n<<<\n";
  p += text;
  p += "\n>>>";
  return p;
}

std::optional<JudgeVerdict> parse_judge_verdict(std::string_view raw, std::string& error) {
  const json j = json::parse(raw.begin(), raw.end(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    error = "verdict is not a JSON object";
    return std::nullopt;
  }
  JudgeVerdict v;
  const auto d = j.find("decision");
  if (d == j.end() || !d->is_string() || (*d != "real" && *d != "synthetic")) {
    error = "decision must be \"real\" or \"synthetic\"";
    return std::nullopt;
  }
  v.decision = *d == "real" ? ItemSource::real : ItemSource::synthetic;
  const auto q = j.find("confidence");
  if (q == j.end() || !q->is_number() || !(q->get<double>() >= 0.0 && q->get<double>() <= 1.0)) {
    error = "confidence must be a number in [0, 1]";
    return std::nullopt;
  }
  v.confidence = q->get<double>();
  if (auto c = j.find("cue_tags"); c != j.end()) {
    if (!c->is_array()) {
      error = "cue_tags must be an array of strings";
      return std::nullopt;
    }
    for (const auto& t : *c) {
      if (!t.is_string()) {
        error = "cue_tags must be an array of strings";
        return std::nullopt;
      }
      v.cue_tags.push_back(t.get<std::string>());
    }
  }
  if (auto s = j.find("justification"); s != j.end()) {
    if (!s->is_string()) {
      error = "justification must be a string";
      return std::nullopt;
    }
    v.justification = s->get<std::string>();
  }
  return v;
}

std::vector<JudgeVerdict> run_judge_cycle(Provider& provider, std::span<const JudgeItem> pool,
                                          const DispatchOptions& options) {
  std::vector<CompletionRequest> requests;
  for (const auto& item : pool) requests.push_back({item.id, build_judge_prompt(item.text), 0});
  const auto outcomes = dispatch_batch(provider, requests, options);

  std::vector<JudgeVerdict> verdicts(pool.size());
  std::vector<CompletionRequest> reasks;
  std::vector<std::size_t> reask_index;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    auto& v = verdicts[i];
    v.item_id = pool[i].id;
    if (!outcomes[i].ok()) {
      v.error = "provider failure: " + outcomes[i].error;
      continue;
    }
    std::string error;
    if (auto parsed = parse_judge_verdict(outcomes[i].response->text, error)) {
      parsed->item_id = v.item_id;
      v = std::move(*parsed);
    } else {
      v.error = error;
      reasks.push_back({pool[i].id + "|reask", requests[i].prompt, 0});
      reask_index.push_back(i);
    }
  }
  const auto second = dispatch_batch(provider, reasks, options);
  for (std::size_t k = 0; k < second.size(); ++k) {
    auto& v = verdicts[reask_index[k]];
    v.reasked = true;
    if (!second[k].ok()) {
      v.error = "provider failure on re-ask: " + second[k].error;
      continue;
    }
    std::string error;
    if (auto parsed = parse_judge_verdict(second[k].response->text, error)) {
      parsed->item_id = v.item_id;
      parsed->reasked = true;
      v = std::move(*parsed);
    } else {
      v.error = "unparseable after re-ask: " + error;
    }
  }
  for (const auto& v : verdicts)
    if (v.abstained()) spdlog::warn("judge abstained on item {}: {}", v.item_id, v.error);
  return verdicts;
}

CycleStatistics cycle_statistics(std::span<const JudgeVerdict> verdicts, std::span<const JudgeItem> items) {
  std::map<std::string_view, ItemSource> truth;
  for (const auto& item : items) truth.emplace(item.id, item.hidden_source);
  CycleStatistics s;
  s.n_items = verdicts.size();
  std::vector<double> confidences;
  for (const auto& v : verdicts) {
    auto it = truth.find(v.item_id);
    if (it == truth.end()) throw ArgumentError("verdict for unknown item '" + v.item_id + "'");
    if (v.abstained()) {
      ++s.n_abstained;
      continue;
    }
    ++s.n_scored;
    confidences.push_back(v.confidence);
    if (*v.decision == it->second) {
      ++s.correct;
      if (it->second == ItemSource::synthetic) ++s.correctly_detected_synthetic;
    }
  }
  if (s.n_scored > 0) {
    s.accuracy = static_cast<double>(s.correct) / static_cast<double>(s.n_scored);
    s.chance_confusion = chance_confusion(s.accuracy);
    s.mean_entropy_nats = binary_entropy_mean(confidences);
    s.p_value = binomial_two_sided_p(s.correct, s.n_scored, 0.5);
    s.wilson = wilson_interval(s.correct, s.n_scored);
  }
  return s;
}

EquivalenceResult equivalence_check(double accuracy, std::size_t n, double margin) {
  if (n == 0) throw ArgumentError("equivalence_check needs n > 0");
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw ArgumentError("accuracy outside [0, 1]");
  const auto k = static_cast<std::size_t>(std::llround(accuracy * static_cast<double>(n)));
  EquivalenceResult r;
  r.margin = margin;
  r.interval = wilson_interval(k, n);
  r.passed = r.interval.lower >= 0.5 - margin && r.interval.upper <= 0.5 + margin;
  return r;
}

std::vector<JudgeVerdict> true_positive_synthetic(std::span<const JudgeVerdict> verdicts,
                                                  std::span<const JudgeItem> items) {
  std::map<std::string_view, ItemSource> truth;
  for (const auto& item : items) truth.emplace(item.id, item.hidden_source);
  std::vector<JudgeVerdict> out;
  for (const auto& v : verdicts) {
    auto it = truth.find(v.item_id);
    if (it == truth.end()) throw ArgumentError("verdict for unknown item '" + v.item_id + "'");
    if (v.decision == ItemSource::synthetic && it->second == ItemSource::synthetic) out.push_back(v);
  }
  return out;
}

std::string build_editor_prompt(std::string_view instruction, std::span<const JudgeVerdict> detections) {
  std::string p =
      "You maintain the stable realism instruction used when generating synthetic student course "
      "reviews.\n\nCurrent instruction:\n<<<\n";
  p += instruction;
  p += "\n>>>\n\nA judge correctly identified the following generated reviews as synthetic. Cues and "
       "justifications:\n";
  for (const auto& v : detections) {
    std::string tags;
    for (const auto& t : v.cue_tags) tags += (tags.empty() ? "" : ", ") + t;
    p += "- cues: " + (tags.empty() ? std::string("none given") : tags) + "; justification: " + v.justification + "\n";
  }
  p += "\nRewrite the instruction so future reviews avoid these cues while staying faithful to the "
       "declared aspects. Return only the new instruction text.";
  return p;
}

namespace {

std::string trim_copy(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

EditorResult editor_update(Provider& provider, std::string_view instruction,
                           std::span<const JudgeVerdict> detections, const DispatchOptions& options,
                           std::string_view request_id) {
  EditorResult out{std::string(instruction), false, {}};
  if (detections.empty()) return out;
  std::string error;
  const auto response = complete_with_retries(
      provider, {std::string(request_id), build_editor_prompt(instruction, detections), 0}, options, &error);
  if (!response) {
    out.error = "editor provider failure: " + error;
    spdlog::error("{}", out.error);
    return out;
  }
  auto next = trim_copy(response->text);
  if (next.empty()) {
    out.error = "editor returned an empty instruction";
    spdlog::error("{}", out.error);
    return out;
  }
  out.instruction = std::move(next);
  out.triggered = true;
  return out;
}

std::string prompt_state_id_for(std::string_view instruction) {
  for (const auto& s : bundled_prompt_states())
    if (s.instruction == instruction) return s.id;
  return fmt::format("edited-{:016x}", fnv1a64(instruction));
}

ordered_json to_json(const CycleRecord& r) {
  ordered_json verdicts = ordered_json::array();
  for (std::size_t i = 0; i < r.verdicts.size(); ++i) {
    const auto& v = r.verdicts[i];
    const JudgeItem* item = nullptr;
    for (const auto& it : r.items)
      if (it.id == v.item_id) item = &it;
    verdicts.push_back({{"item_id", v.item_id},
                        {"hidden_source", item ? to_string(item->hidden_source) : "unknown"},
                        {"decision", v.decision ? json(to_string(*v.decision)) : json(nullptr)},
                        {"confidence", v.confidence},
                        {"cue_tags", v.cue_tags},
                        {"justification", v.justification},
                        {"reasked", v.reasked},
                        {"error", v.error}});
  }
  const auto& s = r.stats;
  return {{"cycle", r.cycle},
          {"prompt_state_id", r.prompt_state_id},
          {"n_items", s.n_items},
          {"n_scored", s.n_scored},
          {"n_abstained", s.n_abstained},
          {"correct", s.correct},
          {"accuracy", s.accuracy},
          {"chance_confusion_percent", s.chance_confusion},
          {"mean_entropy_nats", s.mean_entropy_nats},
          {"mean_entropy_bits", s.mean_entropy_nats / std::log(2.0)},
          {"p_value", s.p_value},
          {"wilson", {{"lower", s.wilson.lower}, {"upper", s.wilson.upper}}},
          {"correctly_detected_synthetic", s.correctly_detected_synthetic},
          {"editor_triggered", r.editor_triggered},
          {"instruction_before", r.instruction_before},
          {"instruction_after", r.instruction_after},
          {"verdicts", verdicts}};
}

std::vector<CycleRecord> run_realism_cycles(Provider& judge, Provider& editor, std::span<const ReviewRecord> real,
                                            const SyntheticSource& synthetic, const RealismConfig& config) {
  std::vector<CycleRecord> records;
  std::string instruction =
      config.initial_instruction.empty() ? bundled_prompt_states().front().instruction : config.initial_instruction;
  Rng rng = derive_stream(config.seed, "realism");
  for (std::size_t c = 0; c < config.cycles; ++c) {
    CycleRecord rec;
    rec.cycle = c;
    rec.instruction_before = instruction;
    rec.prompt_state_id = prompt_state_id_for(instruction);
    const auto synth = synthetic(c, rec.prompt_state_id, instruction);
    rec.items = build_cycle_pool(real, synth, rng, config.per_source);
    rec.verdicts = run_judge_cycle(judge, rec.items, config.dispatch);
    rec.stats = cycle_statistics(rec.verdicts, rec.items);
    const auto detections = true_positive_synthetic(rec.verdicts, rec.items);
    const auto edit = editor_update(editor, instruction, detections, config.dispatch, fmt::format("editor-{}", c));
    rec.editor_triggered = edit.triggered;
    rec.instruction_after = edit.instruction;
    instruction = edit.instruction;
    spdlog::info("cycle {} ({}): accuracy {:.4f}, {} synthetic detected, editor {}", c, rec.prompt_state_id,
                 rec.stats.accuracy, rec.stats.correctly_detected_synthetic, rec.editor_triggered ? "yes" : "no");
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace synthabsa

#include "synthabsa/prompting.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "synthabsa/errors.hpp"

namespace synthabsa {

using nlohmann::json;

std::string_view to_string(PromptingMode mode) noexcept {
  switch (mode) {
    case PromptingMode::zero_shot: return "zero_shot";
    case PromptingMode::few_shot_fixed: return "few_shot_fixed";
    case PromptingMode::few_shot_diverse: return "few_shot_diverse";
    case PromptingMode::retrieval_few_shot: return "retrieval_few_shot";
    case PromptingMode::two_pass: return "two_pass";
    case PromptingMode::aspect_by_aspect: return "aspect_by_aspect";
  }
  return "zero_shot";
}

PromptingMode parse_prompting_mode(std::string_view name) {
  for (auto m : kPromptingModes)
    if (to_string(m) == name) return m;
  throw ArgumentError("unknown prompting mode '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Demonstrations

namespace {

std::string style_of(const ReviewRecord& r) {
  if (r.nuance)
    if (const auto s = r.nuance->find("writing_style")) return std::string(*s);
  return "unspecified";
}

std::vector<Demonstration> pick_by_id(const std::vector<Demonstration>& train,
                                      const std::vector<std::string>& ids, std::size_t expected,
                                      const char* what) {
  if (ids.size() != expected)
    throw ArgumentError(std::string(what) + " demonstrations need exactly " + std::to_string(expected) + " ids");
  std::vector<Demonstration> out;
  for (const auto& id : ids) {
    auto it = std::find_if(train.begin(), train.end(), [&](const Demonstration& d) { return d.id == id; });
    if (it == train.end()) throw ContractError("demonstration '" + id + "' is not in the training partition");
    out.push_back(*it);
  }
  return out;
}

double cosine(const SparseVector& a, const SparseVector& b) {
  // Both are L2-normalized (or empty).
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first == b[j].first) s += a[i++].second * b[j++].second;
    else if (a[i].first < b[j].first) ++i;
    else ++j;
  }
  return s;
}

}  // namespace

DemonstrationPool::DemonstrationPool(std::span<const ReviewRecord> train, DemonstrationConfig config)
    : config_(std::move(config)) {
  std::vector<std::string> styles;
  for (const auto& r : train) {
    if (r.split && *r.split != Split::train)
      throw ContractError("record '" + r.id + "' is tagged " + std::string(to_string(*r.split)) +
                          "; demonstrations come from train only");
    if (r.source == RecordSource::real_transfer)
      throw ContractError("record '" + r.id + "' is real_transfer; it cannot be a demonstration");
    train_.push_back({r.id, r.text, r.labels});
    styles.push_back(style_of(r));
  }

  if (!config_.fixed_ids.empty()) {
    fixed_ = pick_by_id(train_, config_.fixed_ids, 3, "fixed");
  } else {
    for (std::size_t k = 1; k <= 3; ++k) {
      auto it = std::find_if(train_.begin(), train_.end(), [&](const Demonstration& d) { return d.labels.size() == k; });
      if (it != train_.end()) fixed_.push_back(*it);
    }
  }

  if (!config_.diverse_ids.empty()) {
    diverse_ = pick_by_id(train_, config_.diverse_ids, 5, "diverse");
  } else {
    // Greedy: cover each label-set size first, then new styles, then anything.
    std::vector<bool> used(train_.size(), false);
    std::set<std::string> seen_styles;
    auto take = [&](std::size_t i) {
      used[i] = true;
      seen_styles.insert(styles[i]);
      diverse_.push_back(train_[i]);
    };
    for (std::size_t k = 1; k <= 3; ++k)
      for (std::size_t i = 0; i < train_.size(); ++i)
        if (!used[i] && train_[i].labels.size() == k && !seen_styles.contains(styles[i])) {
          take(i);
          break;
        }
    for (std::size_t i = 0; i < train_.size() && diverse_.size() < 5; ++i)
      if (!used[i] && !seen_styles.contains(styles[i])) take(i);
    for (std::size_t i = 0; i < train_.size() && diverse_.size() < 5; ++i)
      if (!used[i]) take(i);
  }

  if (!train_.empty()) {
    std::vector<std::string> texts;
    for (const auto& d : train_) texts.push_back(d.text);
    try {
      vocabulary_ = fit_vectorizer(texts, VectorizerConfig{.min_df = 1});
      for (const auto& t : texts) vectors_.push_back(vocabulary_->transform(t));
    } catch (const SchemaError&) {
      // Texts without a single token: retrieval degrades to train order.
      vectors_.assign(texts.size(), {});
    }
  }
}

std::vector<double> DemonstrationPool::similarities(std::string_view query) const {
  const SparseVector q = vocabulary_ ? vocabulary_->transform(query) : SparseVector{};
  std::vector<double> out;
  out.reserve(vectors_.size());
  for (const auto& v : vectors_) out.push_back(cosine(q, v));
  return out;
}

std::vector<Demonstration> DemonstrationPool::retrieve(std::string_view query) const {
  if (train_.empty()) throw ArgumentError("retrieval needs a non-empty training partition");
  const auto sims = similarities(query);
  std::vector<std::size_t> order(sims.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  std::vector<Demonstration> out;
  for (std::size_t i = 0; i < std::min(config_.retrieval_k, order.size()); ++i) out.push_back(train_[order[i]]);
  return out;
}

bool DemonstrationPool::contains(std::string_view id) const {
  return std::any_of(train_.begin(), train_.end(), [&](const Demonstration& d) { return d.id == id; });
}

std::vector<Demonstration> select_demonstrations(PromptingMode mode, const DemonstrationPool& pool,
                                                 std::string_view query) {
  switch (mode) {
    case PromptingMode::few_shot_fixed: return pool.fixed();
    case PromptingMode::few_shot_diverse: return pool.diverse();
    case PromptingMode::retrieval_few_shot: return pool.retrieve(query);
    default: return {};
  }
}

// ---------------------------------------------------------------------------
// Prompts

namespace {

std::string query_block(std::string_view review) {
  std::string s(kQueryOpen);
  s += review;
  s += kQueryClose;
  return s;
}

std::string sparse_object(const LabelSet& labels) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& e : labels) j[e.aspect] = to_string(e.sentiment);
  return j.dump();
}

}  // namespace

std::string build_inference_prompt(std::string_view review, std::span<const Demonstration> demonstrations,
                                   const AspectInventory& inventory) {
  std::string p =
      "You are annotating one student course review for aspect-based sentiment.\n\n"
      "Allowed aspects (use these exact keys):\n";
  for (const auto& a : inventory.aspects()) p += "- " + a.id + "\n";
  p +=
      "\nAllowed sentiments: negative, neutral, positive.\n"
      "Output contract: return exactly one JSON object whose keys are the allowed aspects the "
      "review discusses and whose values are allowed sentiments. Leave out aspects the review does "
      "not discuss. Return {} when none apply. Return nothing else.\n";
  for (std::size_t i = 0; i < demonstrations.size(); ++i) {
    p += "\nExample " + std::to_string(i + 1) + "\nText: ";
    p += demonstrations[i].text;
    p += "\nOutput: " + sparse_object(demonstrations[i].labels) + "\n";
  }
  p += "\n" + query_block(review) + "\nOutput:";
  return p;
}

std::string build_detection_prompt(std::string_view review, const AspectInventory& inventory) {
  std::string p(kDetectionMarker);
  p += "list the aspects this student course review discusses.\n\nAllowed aspects:\n";
  for (const auto& a : inventory.aspects()) p += "- " + a.id + "\n";
  p += "\nReturn exactly one JSON array of allowed aspect ids, [] when none apply. Return nothing else.\n\n";
  p += query_block(review) + "\nOutput:";
  return p;
}

std::string build_conditioned_sentiment_prompt(std::string_view review, std::span<const std::string> detected) {
  std::string p(kConditionedMarker);
  p += json(std::vector<std::string>(detected.begin(), detected.end())).dump();
  p +=
      "\nFor each listed aspect give the sentiment the review expresses: negative, neutral or "
      "positive. Return exactly one JSON object with exactly the listed aspects as keys. Return "
      "nothing else.\n\n";
  p += query_block(review) + "\nOutput:";
  return p;
}

std::string build_presence_prompt(std::string_view review, std::string_view aspect) {
  std::string p(kPresenceMarker);
  p += aspect;
  p += "\nDoes the student course review below discuss this aspect? Answer with exactly yes or no.\n\n";
  p += query_block(review) + "\nAnswer:";
  return p;
}

std::string build_aspect_sentiment_prompt(std::string_view review, std::string_view aspect) {
  std::string p(kSentimentMarker);
  p += aspect;
  p += "\nWhat sentiment does the review below express about this aspect? Answer with exactly one "
       "of negative, neutral, positive.\n\n";
  p += query_block(review) + "\nAnswer:";
  return p;
}

std::optional<std::string> extract_query(std::string_view prompt) {
  const auto open = prompt.find(kQueryOpen);
  if (open == std::string_view::npos) return std::nullopt;
  const auto start = open + kQueryOpen.size();
  const auto close = prompt.rfind(kQueryClose);
  if (close == std::string_view::npos || close < start) return std::nullopt;
  return std::string(prompt.substr(start, close - start));
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Parses strictly and rejects repeated keys in any object.
std::optional<json> strict_json(std::string_view raw, std::string& error) {
  std::vector<std::set<std::string>> keys;
  bool duplicate = false;
  auto cb = [&](int, json::parse_event_t event, json& parsed) {
    switch (event) {
      case json::parse_event_t::object_start: keys.emplace_back(); break;
      case json::parse_event_t::object_end: keys.pop_back(); break;
      case json::parse_event_t::key:
        if (!keys.back().insert(parsed.get<std::string>()).second) duplicate = true;
        break;
      default: break;
    }
    return true;
  };
  json j = json::parse(raw.begin(), raw.end(), cb, /*allow_exceptions=*/false);
  if (j.is_discarded()) {
    error = "not a single JSON value";
    return std::nullopt;
  }
  if (duplicate) {
    error = "duplicate key";
    return std::nullopt;
  }
  return j;
}

}  // namespace

ParsedPrediction parse_structured_output(std::string_view raw, const AspectInventory& inventory) {
  ParsedPrediction out;
  auto j = strict_json(raw, out.error);
  if (!j) return out;
  if (!j->is_object()) {
    out.error = "top-level value is not an object";
    return out;
  }
  LabelSet labels;
  for (const auto& [key, value] : j->items()) {
    if (!inventory.contains(key)) {
      out.error = "unknown aspect '" + key + "'";
      return out;
    }
    const auto s = value.is_string() ? parse_sentiment(value.get_ref<const std::string&>()) : std::nullopt;
    if (!s) {
      out.error = "non-ternary value for '" + key + "'";
      return out;
    }
    labels.set(key, *s);
  }
  out.labels = std::move(labels);
  out.valid = true;
  return out;
}

std::optional<std::vector<std::string>> parse_aspect_list(std::string_view raw, const AspectInventory& inventory) {
  std::string error;
  auto j = strict_json(raw, error);
  if (!j || !j->is_array()) return std::nullopt;
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& v : *j) {
    if (!v.is_string()) return std::nullopt;
    const auto& a = v.get_ref<const std::string&>();
    if (!inventory.contains(a) || !seen.insert(a).second) return std::nullopt;
    out.push_back(a);
  }
  return out;
}

std::optional<bool> parse_yes_no(std::string_view raw) {
  const auto t = trim(raw);
  if (t == "yes") return true;
  if (t == "no") return false;
  return std::nullopt;
}

std::optional<Sentiment> parse_ternary(std::string_view raw) { return parse_sentiment(trim(raw)); }

json to_json(const ParseStats& s) {
  return {{"n_responses", s.n_responses},
          {"n_valid", s.n_valid},
          {"n_failed", s.n_failed},
          {"n_requests", s.n_requests},
          {"parse_success_rate", s.parse_success_rate()}};
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct Answer {
  std::optional<std::string> text;  // nullopt: provider gave up
};

std::vector<Answer> ask(Provider& provider, std::vector<CompletionRequest> requests, const DispatchOptions& options,
                        ParseStats& stats) {
  stats.n_requests += requests.size();
  const auto outcomes = dispatch_batch(provider, requests, options);
  std::vector<Answer> answers;
  answers.reserve(outcomes.size());
  for (const auto& o : outcomes)
    answers.push_back({o.ok() ? std::optional<std::string>(o.response->text) : std::nullopt});
  return answers;
}

void run_single_prompt(Provider& provider, PromptingMode mode, std::span<const ReviewRecord> test,
                       const DemonstrationPool& pool, const AspectInventory& inventory, const DispatchOptions& options,
                       PromptingResult& result) {
  std::vector<CompletionRequest> requests;
  for (const auto& r : test) {
    const auto demos = select_demonstrations(mode, pool, r.text);
    for (const auto& d : demos)
      if (d.id == r.id) throw ContractError("review '" + r.id + "' is its own demonstration");
    requests.push_back({r.id, build_inference_prompt(r.text, demos, inventory), 0});
  }
  const auto answers = ask(provider, std::move(requests), options, result.stats);
  for (const auto& a : answers) {
    if (!a.text) {
      ++result.stats.n_failed;
      result.predictions.push_back({{}, false, "provider failure"});
    } else {
      result.predictions.push_back(parse_structured_output(*a.text, inventory));
    }
  }
}

void run_two_pass(Provider& provider, std::span<const ReviewRecord> test, const AspectInventory& inventory,
                  const DispatchOptions& options, PromptingResult& result) {
  std::vector<CompletionRequest> detect;
  for (const auto& r : test) detect.push_back({r.id + "|detect", build_detection_prompt(r.text, inventory), 0});
  const auto detected_raw = ask(provider, std::move(detect), options, result.stats);

  result.predictions.assign(test.size(), {});
  std::vector<std::optional<std::vector<std::string>>> detected(test.size());
  std::vector<CompletionRequest> second;
  std::vector<std::size_t> second_index;
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto& pred = result.predictions[i];
    if (!detected_raw[i].text) {
      ++result.stats.n_failed;
      pred.error = "provider failure";
      continue;
    }
    detected[i] = parse_aspect_list(*detected_raw[i].text, inventory);
    if (!detected[i]) {
      pred.error = "detection step is not a valid aspect array";
      continue;
    }
    if (detected[i]->empty()) {
      pred.valid = true;
      continue;
    }
    second.push_back({test[i].id + "|sentiment", build_conditioned_sentiment_prompt(test[i].text, *detected[i]), 0});
    second_index.push_back(i);
  }
  const auto answers = ask(provider, std::move(second), options, result.stats);
  for (std::size_t k = 0; k < answers.size(); ++k) {
    const std::size_t i = second_index[k];
    auto& pred = result.predictions[i];
    if (!answers[k].text) {
      ++result.stats.n_failed;
      pred.error = "provider failure";
      continue;
    }
    auto parsed = parse_structured_output(*answers[k].text, inventory);
    if (parsed.valid) {
      std::vector<std::string> keys;
      for (const auto& e : parsed.labels) keys.push_back(e.aspect);
      auto expected = *detected[i];
      std::sort(expected.begin(), expected.end());
      if (keys != expected) parsed = {{}, false, "sentiment step keys differ from the detected aspects"};
    }
    pred = std::move(parsed);
  }
}

void run_aspect_by_aspect(Provider& provider, std::span<const ReviewRecord> test, const AspectInventory& inventory,
                          const DispatchOptions& options, PromptingResult& result) {
  const auto aspects = inventory.ids();
  std::vector<CompletionRequest> presence;
  for (const auto& r : test)
    for (const auto& a : aspects) presence.push_back({r.id + "|presence|" + a, build_presence_prompt(r.text, a), 0});
  const auto present_raw = ask(provider, std::move(presence), options, result.stats);

  result.predictions.assign(test.size(), {});
  std::vector<bool> failed(test.size(), false), invalid(test.size(), false);
  std::vector<CompletionRequest> sentiment;
  std::vector<std::pair<std::size_t, std::string>> owners;
  for (std::size_t i = 0; i < test.size(); ++i) {
    for (std::size_t a = 0; a < aspects.size(); ++a) {
      const auto& ans = present_raw[i * aspects.size() + a];
      if (!ans.text) {
        failed[i] = true;
        continue;
      }
      const auto yes = parse_yes_no(*ans.text);
      if (!yes) invalid[i] = true;
      else if (*yes) {
        sentiment.push_back({test[i].id + "|sentiment|" + aspects[a], build_aspect_sentiment_prompt(test[i].text, aspects[a]), 0});
        owners.emplace_back(i, aspects[a]);
      }
    }
  }
  const auto answers = ask(provider, std::move(sentiment), options, result.stats);
  std::vector<LabelSet> labels(test.size());
  for (std::size_t k = 0; k < answers.size(); ++k) {
    const auto& [i, aspect] = owners[k];
    if (!answers[k].text) {
      failed[i] = true;
      continue;
    }
    if (const auto s = parse_ternary(*answers[k].text)) labels[i].set(aspect, *s);
    else invalid[i] = true;
  }
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto& pred = result.predictions[i];
    if (failed[i]) {
      ++result.stats.n_failed;
      pred.error = "provider failure";
    } else if (invalid[i]) {
      pred.error = "an answer was not in the allowed vocabulary";
    } else {
      pred.labels = std::move(labels[i]);
      pred.valid = true;
    }
  }
}

}  // namespace

PromptingResult run_prompting_eval(Provider& provider, PromptingMode mode, std::span<const ReviewRecord> test,
                                   const DemonstrationPool& pool, const AspectInventory& inventory,
                                   const DispatchOptions& options) {
  for (const auto& r : test)
    if (pool.contains(r.id)) throw ContractError("test review '" + r.id + "' is in the demonstration pool");

  PromptingResult result;
  result.mode = mode;
  switch (mode) {
    case PromptingMode::two_pass: run_two_pass(provider, test, inventory, options, result); break;
    case PromptingMode::aspect_by_aspect: run_aspect_by_aspect(provider, test, inventory, options, result); break;
    default: run_single_prompt(provider, mode, test, pool, inventory, options, result); break;
  }
  result.stats.n_responses = test.size();

  std::vector<LabelSet> gold;
  std::vector<AspectSet> predicted;
  std::vector<SentimentScores> scores;
  for (std::size_t i = 0; i < test.size(); ++i) {
    gold.push_back(test[i].labels);
    AspectSet p;
    SentimentScores s;
    const auto& pred = result.predictions[i];
    if (pred.valid) {
      ++result.stats.n_valid;
      for (const auto& e : pred.labels) {
        p.insert(e.aspect);
        s[e.aspect] = sentiment_value(e.sentiment);
      }
    } else {
      spdlog::debug("review {} scored empty: {}", test[i].id, pred.error);
    }
    predicted.push_back(std::move(p));
    scores.push_back(std::move(s));
  }
  result.report = evaluate_predictions(std::string("prompt_") + std::string(to_string(mode)), gold, predicted, scores,
                                       inventory.ids());
  result.report.extras["parse_stats"] = to_json(result.stats);
  return result;
}

}  // namespace synthabsa

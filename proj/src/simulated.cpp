#include "synthabsa/simulated.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "synthabsa/errors.hpp"
#include "synthabsa/generation.hpp"
#include "synthabsa/prompting.hpp"
#include "synthabsa/random.hpp"
#include "synthabsa/tfidf.hpp"

namespace synthabsa {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 3> kPositive = {"excellent", "great", "solid"};
constexpr std::array<std::string_view, 3> kNeutral = {"okay", "average", "passable"};
constexpr std::array<std::string_view, 3> kNegative = {"terrible", "awful", "poor"};

// {pol} always sits directly before {cue}.
constexpr std::array<std::string_view, 4> kAspectTemplates = {
    "honestly the {pol} {cue} stayed with me.",
    "i remember the {pol} {cue} more than anything.",
    "there was {pol} {cue} throughout.",
    "what stood out was the {pol} {cue}.",
};

// No cue tokens and no polarity words in here.
constexpr std::array<std::string_view, 24> kFiller = {
    "i mostly did the work late at night after my shift.",
    "there were a few weeks where i barely kept up.",
    "i had taken something similar years ago so parts of it were familiar.",
    "the forum was busy right before each deadline.",
    "my study group met on sundays and that kept me going.",
    "i took notes by hand which helped more than i expected.",
    "some of the readings took longer than the videos.",
    "i wish i had started the first milestone a week earlier.",
    "a friend of mine took it last year and warned me about the middle stretch.",
    "by the end i was tired but glad i stuck with it.",
    "the second half moved in a different direction than the first.",
    "i spent one whole weekend just getting my setup to run.",
    "most of my questions got answered by other students eventually.",
    "there is a lot packed into a short term.",
    "i would plan around family commitments if you have them.",
    "it took me a while to get used to the format.",
    "i kept a running list of things to revisit before the final.",
    "some weeks were quiet and others were packed.",
    "i mostly watched things at double speed and paused a lot.",
    "the final stretch overlapped with a busy period at my job.",
    "i rewatched a couple of sessions right before the deadline.",
    "it was my second course in the program.",
    "i ended up printing a few things to read on the train.",
    "there was a week where nothing made sense and then it clicked.",
};

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

std::optional<std::string> between(std::string_view text, std::string_view open, std::string_view close) {
  const auto a = text.find(open);
  if (a == std::string_view::npos) return std::nullopt;
  const auto start = a + open.size();
  const auto b = text.find(close, start);
  if (b == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(start, b - start));
}

std::string line_after(std::string_view text, std::string_view label) {
  const auto a = text.find(label);
  if (a == std::string_view::npos) return {};
  const auto start = a + label.size();
  const auto end = text.find('\n', start);
  return std::string(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
}

std::size_t id_number(std::string_view id) {
  std::size_t end = id.size();
  while (end > 0 && std::isdigit(static_cast<unsigned char>(id[end - 1]))) --end;
  if (end == id.size()) return 0;
  return static_cast<std::size_t>(std::stoull(std::string(id.substr(end))));
}

std::optional<Sentiment> polarity_of(std::string_view word) {
  for (auto w : kPositive)
    if (w == word) return Sentiment::positive;
  for (auto w : kNeutral)
    if (w == word) return Sentiment::neutral;
  for (auto w : kNegative)
    if (w == word) return Sentiment::negative;
  return std::nullopt;
}

}  // namespace

const std::map<std::string, std::string, std::less<>>& simulated_cues() {
  static const std::map<std::string, std::string, std::less<>> cues = {
      {"clarity", "explanations"},
      {"lecturer_quality", "lecturer"},
      {"materials", "slides"},
      {"feedback_quality", "feedback"},
      {"exam_fairness", "exams"},
      {"assessment_design", "assignments"},
      {"grading_transparency", "grading"},
      {"organization", "logistics"},
      {"tooling_usability", "autograder"},
      {"difficulty", "difficulty"},
      {"workload", "workload"},
      {"pacing", "pacing"},
      {"prerequisite_fit", "prerequisites"},
      {"support", "tas"},
      {"accessibility", "captions"},
      {"peer_interaction", "classmates"},
      {"relevance", "relevance"},
      {"interest", "lectures"},
      {"practical_application", "labs"},
      {"overall_experience", "experience"},
  };
  return cues;
}

std::string_view simulated_polarity_word(Sentiment s, std::size_t variant) {
  switch (s) {
    case Sentiment::positive: return kPositive[variant % kPositive.size()];
    case Sentiment::neutral: return kNeutral[variant % kNeutral.size()];
    case Sentiment::negative: return kNegative[variant % kNegative.size()];
  }
  return kNeutral[0];
}

std::string simulated_trigger(std::string_view aspect, Sentiment s) {
  auto cue = simulated_cues().find(aspect);
  if (cue == simulated_cues().end()) throw ArgumentError(fmt::format("no simulated cue for aspect '{}'", aspect));
  switch (s) {
    case Sentiment::positive: return cue->second + "plus";
    case Sentiment::neutral: return cue->second + "flat";
    case Sentiment::negative: return cue->second + "minus";
  }
  return cue->second;
}

SimulatedProvider::SimulatedProvider(SimulatedOptions options, const AspectInventory& inventory)
    : options_(options), inventory_(&inventory) {}

LabelSet SimulatedProvider::annotate(std::string_view text) const {
  std::map<std::string_view, std::string_view> by_cue;
  for (const auto& [aspect, cue] : simulated_cues())
    if (inventory_->contains(aspect)) by_cue.emplace(cue, aspect);
  const auto tokens = tokenize(text);
  LabelSet out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto it = by_cue.find(tokens[i]);
    if (it == by_cue.end()) continue;
    Sentiment s = Sentiment::neutral;
    if (i > 0)
      if (auto p = polarity_of(tokens[i - 1])) s = *p;
    out.insert(std::string(it->second), s);
  }
  return out;
}

std::string SimulatedProvider::write_review(const LabelSet& labels, std::size_t words, std::uint64_t salt) const {
  Rng rng(options_.seed ^ salt);
  std::vector<std::vector<std::string>> aspect_sentences;
  std::size_t aspect_words = 0;
  if (!options_.trigger_free) {
    for (const auto& e : labels) {
      auto cue = simulated_cues().find(e.aspect);
      if (cue == simulated_cues().end()) continue;
      std::string s(kAspectTemplates[rng.uniform_below(kAspectTemplates.size())]);
      s = replace_all(s, "{cue}", cue->second);
      s = replace_all(s, "{pol}", simulated_polarity_word(e.sentiment, options_.polarity_variants ? rng.uniform_below(3) : 0));
      if (options_.sentiment_triggers) {
        const auto t = simulated_trigger(e.aspect, e.sentiment);
        s.pop_back();
        for (std::size_t i = 0; i < std::max<std::size_t>(options_.trigger_repeats, 1); ++i) s += " " + t;
        s += ".";
      }
      aspect_sentences.push_back(split_words(s));
      aspect_words += aspect_sentences.back().size();
    }
  }
  std::vector<std::vector<std::string>> sentences;
  std::size_t filler_words = 0;
  const std::size_t need = words > aspect_words ? words - aspect_words : 0;
  while (filler_words < need) {
    const std::size_t bank = options_.filler_sentences == 0 ? kFiller.size() : std::min(options_.filler_sentences, kFiller.size());
    auto s = split_words(kFiller[rng.uniform_below(bank)]);
    if (filler_words + s.size() > need) {
      s.resize(need - filler_words);
      s.back() += ".";
    }
    filler_words += s.size();
    sentences.push_back(std::move(s));
  }
  for (auto& s : aspect_sentences) {
    const auto pos = rng.uniform_below(sentences.size() + 1);
    sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(pos), std::move(s));
  }
  std::string text;
  for (auto& s : sentences) {
    s.front()[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s.front()[0])));
    for (const auto& w : s) {
      if (!text.empty()) text += ' ';
      text += w;
    }
  }
  return text;
}

std::string SimulatedProvider::generate(const CompletionRequest& request, CompletionStatus& status) const {
  const LabelSet labels = label_set_from_json(json::parse(line_after(request.prompt, kAspectBlockLabel)));
  static const std::regex band_re(R"(write between (\d+) and (\d+) words)");
  std::smatch m;
  if (!std::regex_search(request.prompt, m, band_re))
    throw TransportError("generation prompt carries no length guidance");
  const std::size_t lo = std::stoul(m[1].str()), hi = std::stoul(m[2].str());
  const std::uint64_t salt = fnv1a64(request.prompt);
  Rng rng(options_.seed ^ salt);
  std::size_t words = lo + rng.uniform_below(hi - lo + 1);

  const std::size_t n = id_number(request.id);
  auto hit = [&](std::size_t every) { return every > 0 && n > 0 && n % every == 0; };
  if (hit(options_.empty_every)) return "";
  if (hit(options_.off_band_every)) words = lo > 10 ? lo - 10 : 1;
  std::string text = write_review(labels, words, salt);
  if (hit(options_.incomplete_every)) {
    status = CompletionStatus::incomplete;
    auto w = split_words(text);
    w.resize(w.size() / 2);
    text.clear();
    for (const auto& x : w) text += (text.empty() ? "" : " ") + x;
  }
  return text;
}

std::string SimulatedProvider::infer(std::string_view prompt) const {
  const auto query = extract_query(prompt).value_or("");
  const LabelSet found = annotate(query);
  auto first_line = [&](std::string_view marker) {
    return line_after(prompt.substr(0, prompt.find('\n') == std::string_view::npos ? prompt.size() : prompt.find('\n') + 1),
                      marker);
  };
  if (prompt.starts_with(kPresenceMarker)) return found.contains(first_line(kPresenceMarker)) ? "yes" : "no";
  if (prompt.starts_with(kSentimentMarker)) {
    const auto s = found.find(first_line(kSentimentMarker));
    return std::string(to_string(s.value_or(Sentiment::neutral)));
  }
  if (prompt.starts_with(kDetectionMarker)) {
    json arr = json::array();
    for (const auto& a : inventory_->aspects())
      if (found.contains(a.id)) arr.push_back(a.id);
    return arr.dump();
  }
  if (prompt.starts_with(kConditionedMarker)) {
    const auto listed = json::parse(first_line(kConditionedMarker));
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& a : listed) {
      const auto aspect = a.get<std::string>();
      out[aspect] = to_string(found.find(aspect).value_or(Sentiment::neutral));
    }
    return out.dump();
  }
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& e : found) out[e.aspect] = to_string(e.sentiment);
  return out.dump();
}

std::string SimulatedProvider::judge(std::string_view prompt) const {
  const auto text = between(prompt, "Review:\n<<<\n", "\n>>>").value_or("");
  Rng rng(options_.seed ^ fnv1a64(text) ^ 0x6a75646765ULL);
  const bool synthetic = rng.uniform01() < options_.judge_synthetic_rate;
  const double confidence = 0.55 + 0.4 * rng.uniform01();
  json v = {{"decision", synthetic ? "synthetic" : "real"},
            {"confidence", std::round(confidence * 100.0) / 100.0},
            {"cue_tags", synthetic ? json{"tidy structure", "stock phrasing"} : json{"specific anecdote"}},
            {"justification", synthetic ? "Sentences follow a repeated evaluative template."
                                        : "Reads like an offhand personal account."}};
  return v.dump();
}

std::string SimulatedProvider::edit(std::string_view prompt) const {
  const auto current = between(prompt, "Current instruction:\n<<<\n", "\n>>>").value_or("");
  const auto& states = bundled_prompt_states();
  for (std::size_t i = 0; i + 1 < states.size(); ++i)
    if (states[i].instruction == current) return states[i + 1].instruction;
  return current;
}

std::string SimulatedProvider::audit(std::string_view prompt) const {
  const auto declared = label_set_from_json(json::parse(line_after(prompt, "Declared aspect sentiments: ")));
  const auto text = between(prompt, "Review:\n<<<\n", "\n>>>").value_or("");
  const auto found = annotate(text);
  json verdicts = json::object();
  for (const auto& e : declared) {
    const auto s = found.find(e.aspect);
    verdicts[e.aspect] = {{"supported", s.has_value()}, {"sentiment_match", s.has_value() && *s == e.sentiment}};
  }
  return json{{"verdicts", verdicts}}.dump();
}

CompletionResponse SimulatedProvider::complete(const CompletionRequest& request) {
  CompletionResponse out{request.id, {}, CompletionStatus::completed};
  const std::string_view p = request.prompt;
  if (p.starts_with(kGenerationPreamble)) out.text = generate(request, out.status);
  else if (p.starts_with(kRefinementPreamble)) out.text = between(p, kDraftOpen, kDraftClose).value_or("");
  else if (p.starts_with("You are judging whether")) out.text = judge(p);
  else if (p.starts_with("You maintain the stable realism instruction")) out.text = edit(p);
  else if (p.starts_with("You are auditing whether")) out.text = audit(p);
  else if (extract_query(p)) out.text = infer(p);
  else throw TransportError("simulated provider does not recognize the prompt for '" + request.id + "'");
  return out;
}

}  // namespace synthabsa

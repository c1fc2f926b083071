#pragma once

// Shared fixtures for the unit suites and the acceptance binary.

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthabsa/corpus.hpp"
#include "synthabsa/errors.hpp"
#include "synthabsa/generation.hpp"
#include "synthabsa/prompting.hpp"
#include "synthabsa/provider.hpp"
#include "synthabsa/random.hpp"
#include "synthabsa/simulated.hpp"

namespace synthabsa::testing {

inline std::filesystem::path fixture_dir() { return SYNTHABSA_FIXTURE_DIR; }

inline ReviewRecord make_record(std::string id, std::string text, LabelSet labels,
                                std::optional<Split> split = std::nullopt) {
  ReviewRecord r;
  r.id = std::move(id);
  r.set_text(std::move(text));
  r.labels = std::move(labels);
  r.split = split;
  r.meta.prompt_state_id = "messier_realism";
  return r;
}

/// Random label set of size 1-3 over the default inventory.
inline LabelSet random_labels(Rng& rng, const AspectInventory& inv = default_aspect_inventory()) {
  return sample_label_set(rng, static_cast<int>(1 + rng.uniform_below(3)), inv);
}

/// Simulator-generated, assembled and split corpus.
inline Corpus simulated_corpus(std::size_t n, std::uint64_t seed, SimulatedOptions options = {}) {
  options.seed = seed;
  SimulatedProvider sim(options);
  GenerationConfig g;
  g.n = n;
  g.master_seed = seed;
  g.dispatch.initial_backoff = std::chrono::milliseconds(0);
  auto run = generate_records(sim, g, default_aspect_inventory(), default_nuance_schema());
  auto assembled = assemble_corpus(std::move(run.records));
  apply_split(assembled.corpus, split_corpus(assembled.corpus, 42));
  return assembled.corpus;
}

/// Answers every inference prompt family from the gold labels of the query
/// text, so every prompting mode should score perfectly.
class OracleInferenceProvider final : public Provider {
 public:
  explicit OracleInferenceProvider(std::span<const ReviewRecord> records) {
    for (const auto& r : records) gold_[r.text] = r.labels;
  }

  CompletionResponse complete(const CompletionRequest& request) override {
    {
      std::lock_guard lock(mutex_);
      ++calls_;
      prompts_.push_back(request.prompt);
    }
    const auto query = extract_query(request.prompt);
    if (!query) throw TransportError("oracle: prompt without a query block");
    const auto it = gold_.find(*query);
    if (it == gold_.end()) throw TransportError("oracle: unknown review");
    const LabelSet& gold = it->second;
    const std::string_view prompt = request.prompt;
    auto first_line = [&](std::string_view marker) {
      const auto end = prompt.find('\n');
      return std::string(prompt.substr(marker.size(), end - marker.size()));
    };
    std::string text;
    if (prompt.starts_with(kPresenceMarker)) {
      text = gold.contains(first_line(kPresenceMarker)) ? "yes" : "no";
    } else if (prompt.starts_with(kSentimentMarker)) {
      text = std::string(to_string(gold.find(first_line(kSentimentMarker)).value_or(Sentiment::neutral)));
    } else if (prompt.starts_with(kDetectionMarker)) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& e : gold) a.push_back(e.aspect);
      text = a.dump();
    } else if (prompt.starts_with(kConditionedMarker)) {
      nlohmann::ordered_json o = nlohmann::ordered_json::object();
      for (const auto& a : nlohmann::json::parse(first_line(kConditionedMarker)))
        o[a.get<std::string>()] = to_string(gold.find(a.get<std::string>()).value_or(Sentiment::neutral));
      text = o.dump();
    } else {
      text = label_set_to_json(gold).dump();
    }
    return {request.id, text, CompletionStatus::completed};
  }

  std::size_t calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
  }
  std::vector<std::string> prompts() const {
    std::lock_guard lock(mutex_);
    return prompts_;
  }

 private:
  std::map<std::string, LabelSet> gold_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
  std::vector<std::string> prompts_;
};

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(std::string_view name) {
  auto dir = std::filesystem::temp_directory_path() / ("synthabsa-" + std::string(name));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace synthabsa::testing

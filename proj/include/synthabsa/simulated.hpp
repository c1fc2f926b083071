#pragma once

// Offline stand-in for a language model. It recognizes each prompt family
// the pipeline emits and answers deterministically, so every command runs
// without network access:
//
//   generation   band-compliant review with one cue sentence per declared aspect,
//                the polarity word directly before the cue
//   refinement   returns the draft unchanged
//   inference    scans the query text for aspect cues and the polarity word before each
//   judge        hash-based real/synthetic verdict with a fixed detection rate
//   editor       advances to the next bundled prompt state
//   audit        checks each declared aspect's cue and polarity in the text

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "synthabsa/provider.hpp"
#include "synthabsa/schema.hpp"

namespace synthabsa {

struct SimulatedOptions {
  std::uint64_t seed = 0;
  /// Probability that the judge calls an item synthetic.
  double judge_synthetic_rate = 0.5;
  /// Defect injection for generation requests, keyed on the numeric suffix
  /// of the request id: every n-th request (n > 0) is affected.
  std::size_t incomplete_every = 0;
  std::size_t empty_every = 0;
  std::size_t off_band_every = 0;   // writes below the band minimum
  /// Generation writes filler only, with no aspect cues.
  bool trigger_free = false;
  /// Rotate among three polarity words per sentiment instead of one.
  bool polarity_variants = false;
  /// Close each cue sentence with a token naming aspect and polarity
  /// together, e.g. "lecturerplus".
  bool sentiment_triggers = true;
  std::size_t trigger_repeats = 1;
  /// Draw filler from the first n sentences of the bank only (0 = all).
  std::size_t filler_sentences = 0;
};

/// The cue token planted for each aspect.
const std::map<std::string, std::string, std::less<>>& simulated_cues();
/// Polarity words written right before a cue.
std::string_view simulated_polarity_word(Sentiment s, std::size_t variant = 0);
/// The planted aspect-and-polarity token.
std::string simulated_trigger(std::string_view aspect, Sentiment s);

class SimulatedProvider final : public Provider {
 public:
  explicit SimulatedProvider(SimulatedOptions options = {}, const AspectInventory& inventory = default_aspect_inventory());
  CompletionResponse complete(const CompletionRequest& request) override;

  /// Cue-scan annotation of a text: each cue found, with the polarity word
  /// right before it (neutral when there is none).
  LabelSet annotate(std::string_view text) const;
  /// A review of `words` words carrying the given labels.
  std::string write_review(const LabelSet& labels, std::size_t words, std::uint64_t salt) const;

 private:
  std::string generate(const CompletionRequest& request, CompletionStatus& status) const;
  std::string infer(std::string_view prompt) const;
  std::string judge(std::string_view prompt) const;
  std::string edit(std::string_view prompt) const;
  std::string audit(std::string_view prompt) const;

  SimulatedOptions options_;
  const AspectInventory* inventory_;
};

}  // namespace synthabsa

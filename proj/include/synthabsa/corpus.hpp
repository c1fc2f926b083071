#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthabsa/schema.hpp"

namespace synthabsa {

struct CorpusProvenance {
  std::string generator_run_id;
  std::string prompt_state_id;
  std::optional<std::uint64_t> seed;
  bool operator==(const CorpusProvenance&) const = default;
};

struct Corpus {
  std::vector<ReviewRecord> records;
  CorpusProvenance provenance;
  bool operator==(const Corpus&) const = default;
};

struct DuplicatePair {
  std::string original_id;
  std::string duplicate_id;
};

struct DedupReport {
  std::vector<DuplicatePair> pairs;
  std::size_t duplicate_count() const noexcept { return pairs.size(); }
};

struct AssembledCorpus {
  Corpus corpus;
  DedupReport dedup;
};

/// Validates every record, rejects repeated ids (SchemaError naming the id),
/// and flags exact-text duplicates (outer whitespace trimmed) by setting
/// meta.duplicate_of on each later copy. Nothing is removed.
AssembledCorpus assemble_corpus(std::vector<ReviewRecord> records,
                                const AspectInventory& inventory = default_aspect_inventory(),
                                CorpusProvenance provenance = {});

/// Explicit removal of records flagged as duplicates.
Corpus drop_flagged_duplicates(const Corpus& corpus);

struct PolaritySupport {
  std::size_t reviews = 0;
  std::size_t positive = 0;
  std::size_t neutral = 0;
  std::size_t negative = 0;
  bool operator==(const PolaritySupport&) const = default;
};

/// Per-aspect (reviews, positive, neutral, negative) tally.
std::map<std::string, PolaritySupport> polarity_support(std::span<const ReviewRecord> records);

struct CorpusProfile {
  std::size_t n_records = 0;
  double mean_words = 0.0;
  double median_words = 0.0;
  int min_words = 0;
  int max_words = 0;
  double mean_aspects_per_review = 0.0;
  std::map<std::size_t, std::size_t> aspect_count_histogram;  // label-set size -> records
  std::size_t course_name_count = 0;
  std::size_t style_count = 0;
  std::size_t grade_band_count = 0;
  std::size_t incomplete_count = 0;
  std::map<std::string, std::size_t> length_band_histogram;
  std::map<std::string, PolaritySupport> polarity;
};

/// Throws ArgumentError for an empty corpus.
CorpusProfile corpus_profile(const Corpus& corpus);
nlohmann::json to_json(const CorpusProfile& profile);

/// Fraction of records whose word count lies inside their own band's
/// inclusive range. Every record counts in the denominator, incomplete ones
/// included. Throws ArgumentError for a missing or unknown band.
double length_band_adherence(const Corpus& corpus,
                             const LengthBandTable& bands = default_length_bands());

// ---------------------------------------------------------------------------
// Splitting

struct SplitFractions {
  double train = 0.80;
  double validation = 0.10;
  double test = 0.10;
};

struct SplitAssignment {
  std::vector<std::pair<std::string, Split>> assignments;  // corpus order
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
  std::uint64_t seed = 0;

  std::optional<Split> find(std::string_view id) const;
  bool operator==(const SplitAssignment&) const = default;
};

/// Permutes record indices with Rng(seed) (xoshiro256** + Fisher-Yates),
/// then assigns the first floor(0.80 n) permuted positions to train, the next
/// floor(0.10 n) to validation and the remainder to test.
/// Throws ArgumentError when n < 3 or fractions do not sum to 1.
SplitAssignment split_corpus(const Corpus& corpus, std::uint64_t seed = 42,
                             const SplitFractions& fractions = {});

/// Writes split tags into the records.
void apply_split(Corpus& corpus, const SplitAssignment& assignment);

/// Records carrying the given split tag, in corpus order.
std::vector<ReviewRecord> records_in_split(const Corpus& corpus, Split split);

/// Stable identifier of a split membership (hash of the member ids), used to
/// refuse merging reports computed on different test sets.
std::string split_id(std::span<const ReviewRecord> records, Split split);

// ---------------------------------------------------------------------------
// Persistence (JSONL, UTF-8, LF)

nlohmann::ordered_json record_to_json(const ReviewRecord& record);
/// Throws ParseError (with `line` when non-zero) for structural problems and
/// SchemaError for aspects outside the inventory.
ReviewRecord record_from_json(const nlohmann::json& object, const AspectInventory& inventory,
                              const NuanceSchema& schema, std::size_t line = 0);

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path,
                   const AspectInventory& inventory = default_aspect_inventory(),
                   const NuanceSchema& schema = default_nuance_schema());

/// Sidecar holding provenance: "<corpus path>.provenance.json".
std::filesystem::path provenance_path(const std::filesystem::path& corpus_path);

}  // namespace synthabsa

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace synthabsa {

// ---------------------------------------------------------------------------
// Sentiment
// ---------------------------------------------------------------------------

enum class Sentiment : int { negative = -1, neutral = 0, positive = 1 };

inline constexpr std::array<Sentiment, 3> kAllSentiments = {
    Sentiment::negative, Sentiment::neutral, Sentiment::positive};

constexpr int sentiment_value(Sentiment s) noexcept { return static_cast<int>(s); }

/// Inverse of sentiment_value. Throws ArgumentError outside {-1, 0, 1}.
Sentiment sentiment_from_value(int value);

std::string_view to_string(Sentiment s) noexcept;

/// Exact lowercase label match ("negative", "neutral", "positive").
std::optional<Sentiment> parse_sentiment(std::string_view label) noexcept;

// ---------------------------------------------------------------------------
// Aspect inventory
// ---------------------------------------------------------------------------

struct AspectInfo {
  std::string id;
  std::string group;
  bool operator==(const AspectInfo&) const = default;
};

/// The flat 20-aspect inventory with its five pedagogical group tags.
/// Construction validates; an instance always satisfies the invariants.
class AspectInventory {
 public:
  static constexpr std::size_t kAspectCount = 20;

  /// The five group identifiers, in canonical order.
  static const std::array<std::string_view, 5>& group_ids() noexcept;

  explicit AspectInventory(std::vector<AspectInfo> aspects);

  const std::vector<AspectInfo>& aspects() const noexcept { return aspects_; }
  std::size_t size() const noexcept { return aspects_.size(); }
  const std::string& id(std::size_t index) const { return aspects_.at(index).id; }
  std::vector<std::string> ids() const;

  std::optional<std::size_t> index_of(std::string_view aspect) const noexcept;
  bool contains(std::string_view aspect) const noexcept { return index_of(aspect).has_value(); }
  /// Group tag of a known aspect; throws SchemaError for unknown ids.
  const std::string& group_of(std::string_view aspect) const;

  bool operator==(const AspectInventory& other) const { return aspects_ == other.aspects_; }

 private:
  std::vector<AspectInfo> aspects_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Parses {"aspects": [{"id", "group"}, ...]}. Document order is preserved.
AspectInventory load_aspect_inventory(const nlohmann::json& document);
AspectInventory load_aspect_inventory_file(const std::filesystem::path& path);
const AspectInventory& default_aspect_inventory();

// ---------------------------------------------------------------------------
// Label sets
// ---------------------------------------------------------------------------

struct LabelEntry {
  std::string aspect;
  Sentiment sentiment;
  bool operator==(const LabelEntry&) const = default;
};

/// Mapping aspect -> sentiment. Entries are kept sorted by aspect id so that
/// rendering and serialization are key-order stable.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::initializer_list<std::pair<std::string, Sentiment>> entries);

  /// Inserts or overwrites.
  void set(std::string aspect, Sentiment sentiment);
  /// Inserts only if absent; returns false for a duplicate key.
  bool insert(std::string aspect, Sentiment sentiment);
  bool erase(std::string_view aspect);

  std::optional<Sentiment> find(std::string_view aspect) const noexcept;
  bool contains(std::string_view aspect) const noexcept { return find(aspect).has_value(); }

  const std::vector<LabelEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  bool operator==(const LabelSet&) const = default;

 private:
  std::vector<LabelEntry> entries_;
};

inline constexpr std::size_t kMinLabels = 1;
inline constexpr std::size_t kMaxLabels = 3;

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const noexcept { return violations.empty(); }
};

/// Accepts iff 1-3 entries, every aspect is in the inventory. Never throws.
ValidationResult validate_label_set(const LabelSet& labels, const AspectInventory& inventory);

nlohmann::json label_set_to_json(const LabelSet& labels);
/// Strict: object of aspect -> label string. Throws SchemaError on bad values.
LabelSet label_set_from_json(const nlohmann::json& object);

// ---------------------------------------------------------------------------
// Nuance schema
// ---------------------------------------------------------------------------

enum class NuanceGroup { core_context, assessment_teaching, linguistic_diversity, realism_controls };

inline constexpr std::array<NuanceGroup, 4> kNuanceGroups = {
    NuanceGroup::core_context, NuanceGroup::assessment_teaching,
    NuanceGroup::linguistic_diversity, NuanceGroup::realism_controls};

std::string_view to_string(NuanceGroup group) noexcept;
std::optional<NuanceGroup> parse_nuance_group(std::string_view name) noexcept;

/// How many attributes each group contributes to one nuance state: 5/4/3/3.
std::size_t selections_per_group(NuanceGroup group) noexcept;

/// Attributes present in every state regardless of sampling.
inline constexpr std::string_view kCourseNameAttribute = "course_name";
inline constexpr std::string_view kLengthBandAttribute = "review_length_band";

struct NuanceAttribute {
  std::string id;
  NuanceGroup group;
  std::vector<std::string> values;
  bool operator==(const NuanceAttribute&) const = default;
};

class NuanceSchema {
 public:
  static constexpr std::size_t kMinValues = 4;
  static constexpr std::size_t kMaxValues = 6;

  explicit NuanceSchema(std::vector<NuanceAttribute> attributes);

  const std::vector<NuanceAttribute>& attributes() const noexcept { return attributes_; }
  std::vector<const NuanceAttribute*> attributes_in(NuanceGroup group) const;
  const NuanceAttribute* find(std::string_view id) const noexcept;

  bool operator==(const NuanceSchema& other) const { return attributes_ == other.attributes_; }

 private:
  std::vector<NuanceAttribute> attributes_;
};

/// Parses {"attributes": [{"id", "group", "values"}, ...]}.
NuanceSchema load_nuance_schema(const nlohmann::json& document);
NuanceSchema load_nuance_schema_file(const std::filesystem::path& path);
const NuanceSchema& default_nuance_schema();

struct NuanceSelection {
  std::string attribute;
  NuanceGroup group;
  std::string value;
  bool operator==(const NuanceSelection&) const = default;
};

struct NuanceState {
  std::vector<NuanceSelection> selections;

  std::optional<std::string_view> find(std::string_view attribute) const noexcept;
  std::size_t count(NuanceGroup group) const noexcept;
  bool operator==(const NuanceState&) const = default;
};

/// Checks group counts (5/4/3/3) and the two forced attributes; when a schema
/// is given, also that every attribute/value belongs to it.
ValidationResult validate_nuance_state(const NuanceState& state,
                                       const NuanceSchema* schema = nullptr);

nlohmann::json nuance_state_to_json(const NuanceState& state);
/// Group tags are recovered from `schema`; unknown attributes or values
/// raise SchemaError.
NuanceState nuance_state_from_json(const nlohmann::json& object, const NuanceSchema& schema);

// ---------------------------------------------------------------------------
// Length bands
// ---------------------------------------------------------------------------

struct LengthBand {
  std::string name;
  int min_words;
  int max_words;  // inclusive
  double midpoint() const noexcept { return 0.5 * (min_words + max_words); }
  bool contains(int words) const noexcept { return words >= min_words && words <= max_words; }
  bool operator==(const LengthBand&) const = default;
};

class LengthBandTable {
 public:
  /// Bands must be ordered by increasing range.
  explicit LengthBandTable(std::vector<LengthBand> bands);

  const std::vector<LengthBand>& bands() const noexcept { return bands_; }
  const LengthBand* find(std::string_view name) const noexcept;
  /// Throws ArgumentError for an unknown band.
  const LengthBand& at(std::string_view name) const;
  std::size_t rank(std::string_view name) const;
  /// Band containing `words`; shared boundaries resolve to the shorter band.
  std::optional<std::string> classify(int words) const;

 private:
  std::vector<LengthBand> bands_;
};

/// very_short 35-70, short 70-110, medium 110-170, long 170-280.
const LengthBandTable& default_length_bands();

// ---------------------------------------------------------------------------
// Review records
// ---------------------------------------------------------------------------

enum class CompletionStatus { completed, incomplete };
enum class Split { train, validation, test };
enum class RecordSource { synthetic, real_transfer };
enum class RefinementStatus { not_run, applied, skipped };

std::string_view to_string(CompletionStatus s) noexcept;
std::string_view to_string(Split s) noexcept;
std::string_view to_string(RecordSource s) noexcept;
std::string_view to_string(RefinementStatus s) noexcept;
std::optional<CompletionStatus> parse_completion_status(std::string_view s) noexcept;
std::optional<Split> parse_split(std::string_view s) noexcept;
std::optional<RecordSource> parse_record_source(std::string_view s) noexcept;
std::optional<RefinementStatus> parse_refinement_status(std::string_view s) noexcept;

/// Whitespace-token count.
int count_words(std::string_view text) noexcept;

struct RecordMeta {
  std::optional<std::string> length_band;
  std::optional<int> max_output_tokens;
  CompletionStatus completion_status = CompletionStatus::completed;
  std::string prompt_state_id;
  int word_count = 0;
  RefinementStatus refinement = RefinementStatus::not_run;
  /// Set by corpus assembly on the later member of an exact-text duplicate pair.
  std::optional<std::string> duplicate_of;
  /// Unknown meta keys, preserved on round-trip.
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const RecordMeta&) const = default;
};

struct ReviewRecord {
  std::string id;
  std::string text;
  LabelSet labels;
  std::optional<NuanceState> nuance;
  RecordMeta meta;
  RecordSource source = RecordSource::synthetic;
  std::optional<Split> split;
  /// Unknown top-level keys, preserved on round-trip.
  nlohmann::json extra = nlohmann::json::object();

  /// Sets text and recomputes meta.word_count.
  void set_text(std::string new_text);

  bool operator==(const ReviewRecord&) const = default;
};

/// Record-level invariants: labels valid, word count consistent, completed
/// records have text. real_transfer records may exceed three labels.
ValidationResult validate_record(const ReviewRecord& record, const AspectInventory& inventory);

}  // namespace synthabsa

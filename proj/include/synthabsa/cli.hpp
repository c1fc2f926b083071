#pragma once

// Command-line orchestration. Every command reads and writes only the paths
// it is given and drops a "<output>.run.json" manifest next to its main
// output with the resolved configuration and its hash.
//
// Exit status: 0 success, 1 failed gate or validation, 2 usage error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthabsa/generation.hpp"
#include "synthabsa/metrics.hpp"
#include "synthabsa/simulated.hpp"
#include "synthabsa/tfidf.hpp"
#include "synthabsa/transfer.hpp"

namespace synthabsa {

struct ProviderSettings {
  std::string kind = "stub";  // stub | http
  /// Stub only: answer from a fixture file instead of the built-in simulator.
  std::string fixture;
  /// Names of the environment variables holding endpoint and token. The
  /// values themselves never appear in a config file.
  std::string endpoint_env = kEndpointEnv;
  std::string token_env = kTokenEnv;
  int max_retries = 3;
  int initial_backoff_ms = 200;
  std::size_t max_in_flight = 8;
};

struct RunConfig {
  std::uint64_t seed = 42;
  std::string inventory;  // path; empty = bundled
  ProviderSettings provider;
  SimulatedOptions stub;

  std::size_t generate_n = 1000;
  std::string prompt_state = "messier_realism";
  bool refine = false;
  AspectCountPolicy policy = AspectCountPolicy::rounded;
  std::string id_prefix = "syn";

  std::uint64_t split_seed = 42;
  SplitFractions fractions;

  TwoStepConfig tfidf;

  std::string mode = "zero_shot";
  std::size_t prompt_sample = 0;  // 0 = whole test split

  std::size_t cycles = 3;
  std::size_t per_source = 30;
  std::string real_pool;

  std::size_t audit_sample = 500;

  std::size_t pilot_n = 25;
  PilotThresholds pilot;

  MultiMentionPolicy multi_mention = MultiMentionPolicy::majority;

  /// Record wall-clock runtime in evaluation reports. Off by default so
  /// reruns stay byte-identical.
  bool timing = false;
};

/// Reads a JSON config; absent keys keep their defaults, unknown keys are a
/// SchemaError.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RunConfig& config);
/// Hex FNV-1a of the canonical JSON.
std::string config_hash(const RunConfig& config);

/// Runs one command. `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace synthabsa

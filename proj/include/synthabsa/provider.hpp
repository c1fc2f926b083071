#pragma once

// Text-completion provider contract shared by generation, refinement,
// prompted inference, judging, editing and auditing.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthabsa/schema.hpp"

namespace synthabsa {

struct CompletionRequest {
  std::string id;
  std::string prompt;
  int max_output_tokens = 0;  // 0 = provider default
};

struct CompletionResponse {
  std::string id;
  std::string text;
  /// incomplete iff the provider reports the output-token cap was reached.
  CompletionStatus status = CompletionStatus::completed;
};

class Provider {
 public:
  virtual ~Provider() = default;
  /// Must be safe to call from several threads at once.
  /// Throws TransportError for failures worth retrying.
  virtual CompletionResponse complete(const CompletionRequest& request) = 0;
};

/// Adapts any callable; handy for scripted stubs in tests.
class FunctionProvider final : public Provider {
 public:
  using Fn = std::function<CompletionResponse(const CompletionRequest&)>;
  explicit FunctionProvider(Fn fn) : fn_(std::move(fn)) {}
  CompletionResponse complete(const CompletionRequest& request) override { return fn_(request); }

 private:
  Fn fn_;
};

struct DispatchOptions {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::size_t max_in_flight = 8;
};

struct BatchOutcome {
  std::string id;
  std::optional<CompletionResponse> response;
  std::string error;  // set when retries were exhausted
  int attempts = 0;
  bool ok() const noexcept { return response.has_value(); }
};

/// Sends every request, retrying TransportError with exponential backoff.
/// Returns exactly one outcome per request, in request order, regardless of
/// completion order. Throws ArgumentError on duplicate request ids.
std::vector<BatchOutcome> dispatch_batch(Provider& provider,
                                         std::span<const CompletionRequest> requests,
                                         const DispatchOptions& options = {});

/// Single request with the same retry policy; nullopt when retries run out.
std::optional<CompletionResponse> complete_with_retries(Provider& provider,
                                                        const CompletionRequest& request,
                                                        const DispatchOptions& options = {},
                                                        std::string* error = nullptr);

// ---------------------------------------------------------------------------
// Fixture-driven stub
//
// {
//   "rules": [
//     {"contains": "workload", "text": "...", "status": "completed"},
//     {"regex": "Review:.*", "fail": true},
//     {"contains": "x", "fail_times": 2, "text": "..."}
//   ],
//   "default": {"text": "...", "status": "completed"}
// }
//
// Rules are tried in order against the prompt; the first match answers.
// "fail": true always throws TransportError; "fail_times": n throws on the
// first n matching calls and answers afterwards. "echo_prompt": true answers
// with the prompt itself. Without a default, an unmatched prompt is a
// TransportError.
// ---------------------------------------------------------------------------

class FixtureStubProvider final : public Provider {
 public:
  explicit FixtureStubProvider(const nlohmann::json& fixture);
  static FixtureStubProvider from_file(const std::filesystem::path& path);

  CompletionResponse complete(const CompletionRequest& request) override;
  std::size_t calls() const;

 private:
  struct Rule {
    std::optional<std::string> contains;
    std::optional<std::regex> pattern;
    std::string text;
    CompletionStatus status = CompletionStatus::completed;
    bool fail = false;
    bool echo_prompt = false;
    int fail_times = 0;
  };
  static Rule parse_rule(const nlohmann::json& j, bool require_matcher);

  std::vector<Rule> rules_;
  std::optional<Rule> default_;
  mutable std::mutex mutex_;
  std::map<std::size_t, int> failures_seen_;
  std::size_t calls_ = 0;
};

// ---------------------------------------------------------------------------
// HTTP provider
//
// POST <endpoint> with {"id", "prompt", "max_output_tokens"}; expects
// {"id", "text", "status"} where status is "completed" or "incomplete".
// The bearer token is sent as "Authorization: Bearer <token>" when set.
// ---------------------------------------------------------------------------

struct HttpProviderConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:8080/v1/complete
  std::string token;
  std::chrono::seconds timeout{120};
};

inline constexpr const char* kEndpointEnv = "SYNTHABSA_PROVIDER_ENDPOINT";
inline constexpr const char* kTokenEnv = "SYNTHABSA_PROVIDER_TOKEN";

/// Reads endpoint and token from the environment; throws ArgumentError when
/// the endpoint variable is unset.
HttpProviderConfig http_config_from_env();

class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig config);
  CompletionResponse complete(const CompletionRequest& request) override;

 private:
  HttpProviderConfig config_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
};

}  // namespace synthabsa

#include "synthabsa/provider.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "synthabsa/errors.hpp"

namespace synthabsa {

using nlohmann::json;

std::optional<CompletionResponse> complete_with_retries(Provider& provider,
                                                        const CompletionRequest& request,
                                                        const DispatchOptions& options,
                                                        std::string* error) {
  auto backoff = options.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    try {
      auto response = provider.complete(request);
      if (response.id != request.id)
        throw TransportError("response id '" + response.id + "' does not match request '" +
                             request.id + "'");
      return response;
    } catch (const TransportError& e) {
      if (attempt >= options.max_retries) {
        if (error) *error = e.what();
        spdlog::warn("request {} failed after {} attempts: {}", request.id, attempt + 1, e.what());
        return std::nullopt;
      }
      if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
}

std::vector<BatchOutcome> dispatch_batch(Provider& provider,
                                         std::span<const CompletionRequest> requests,
                                         const DispatchOptions& options) {
  std::set<std::string_view> ids;
  for (const auto& r : requests)
    if (!ids.insert(r.id).second) throw ArgumentError("duplicate request id '" + r.id + "'");

  std::vector<BatchOutcome> outcomes(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      auto& out = outcomes[i];
      out.id = requests[i].id;
      std::string error;
      // Count attempts by wrapping the provider.
      int attempts = 0;
      FunctionProvider counting([&](const CompletionRequest& req) {
        ++attempts;
        return provider.complete(req);
      });
      out.response = complete_with_retries(counting, requests[i], options, &error);
      out.attempts = attempts;
      if (!out.response) out.error = error.empty() ? "provider failure" : error;
    }
  };
  const std::size_t workers =
      std::max<std::size_t>(1, std::min(options.max_in_flight, requests.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  return outcomes;
}

// ---------------------------------------------------------------------------
// FixtureStubProvider

FixtureStubProvider::Rule FixtureStubProvider::parse_rule(const json& j, bool require_matcher) {
  if (!j.is_object()) throw SchemaError("stub rule must be an object");
  Rule rule;
  if (auto it = j.find("contains"); it != j.end()) rule.contains = it->get<std::string>();
  if (auto it = j.find("regex"); it != j.end()) rule.pattern.emplace(it->get<std::string>());
  if (require_matcher && !rule.contains && !rule.pattern)
    throw SchemaError("stub rule needs 'contains' or 'regex'");
  rule.text = j.value("text", std::string{});
  const auto status = j.value("status", std::string{"completed"});
  auto parsed = parse_completion_status(status);
  if (!parsed) throw SchemaError("stub rule has unknown status '" + status + "'");
  rule.status = *parsed;
  rule.fail = j.value("fail", false);
  rule.echo_prompt = j.value("echo_prompt", false);
  rule.fail_times = j.value("fail_times", 0);
  return rule;
}

FixtureStubProvider::FixtureStubProvider(const json& fixture) {
  if (auto it = fixture.find("rules"); it != fixture.end()) {
    if (!it->is_array()) throw SchemaError("stub fixture 'rules' must be a list");
    for (const auto& r : *it) rules_.push_back(parse_rule(r, true));
  }
  if (auto it = fixture.find("default"); it != fixture.end()) default_ = parse_rule(*it, false);
}

FixtureStubProvider FixtureStubProvider::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open stub fixture " + path.string());
  return FixtureStubProvider(json::parse(in));
}

CompletionResponse FixtureStubProvider::complete(const CompletionRequest& request) {
  const Rule* chosen = nullptr;
  std::size_t chosen_index = rules_.size();
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const auto& rule = rules_[i];
    const bool hit = (rule.contains && request.prompt.find(*rule.contains) != std::string::npos) ||
                     (rule.pattern && std::regex_search(request.prompt, *rule.pattern));
    if (hit) {
      chosen = &rule;
      chosen_index = i;
      break;
    }
  }
  if (!chosen && default_) chosen = &*default_;
  {
    std::lock_guard lock(mutex_);
    ++calls_;
    if (chosen && chosen->fail_times > 0) {
      int& seen = failures_seen_[chosen_index];
      if (seen < chosen->fail_times) {
        ++seen;
        throw TransportError("stub transient failure");
      }
    }
  }
  if (!chosen) throw TransportError("no stub rule matches request " + request.id);
  if (chosen->fail) throw TransportError("stub configured to fail");
  return {request.id, chosen->echo_prompt ? request.prompt : chosen->text, chosen->status};
}

std::size_t FixtureStubProvider::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

// ---------------------------------------------------------------------------
// HttpProvider

HttpProviderConfig http_config_from_env() {
  HttpProviderConfig config;
  const char* endpoint = std::getenv(kEndpointEnv);
  if (!endpoint || !*endpoint)
    throw ArgumentError(std::string("http provider needs ") + kEndpointEnv);
  config.endpoint = endpoint;
  if (const char* token = std::getenv(kTokenEnv)) config.token = token;
  return config;
}

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos)
    throw ArgumentError("endpoint must include a scheme: " + config_.endpoint);
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  base_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
}

CompletionResponse HttpProvider::complete(const CompletionRequest& request) {
  httplib::Client client(base_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);

  const json body = {{"id", request.id},
                     {"prompt", request.prompt},
                     {"max_output_tokens", request.max_output_tokens}};
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw TransportError("http transport error: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw TransportError("http status " + std::to_string(res->status));

  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw TransportError(std::string("unparseable provider reply: ") + e.what());
  }
  CompletionResponse response;
  response.id = reply.value("id", std::string{});
  response.text = reply.value("text", std::string{});
  auto status = parse_completion_status(reply.value("status", std::string{"completed"}));
  if (!status) throw TransportError("provider reply has unknown status");
  response.status = *status;
  return response;
}

}  // namespace synthabsa

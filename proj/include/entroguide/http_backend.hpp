#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file http_backend.hpp
 * @brief Client for OpenAI-compatible chat-completions endpoints
 *
 * Requests logprobs for every generated token and converts
 * choices[0].logprobs.content[*] into TokenRecords. Transport failures and
 * 429/5xx responses are retried with exponential backoff.
 */

#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "entroguide/backend.hpp"
#include "entroguide/errors.hpp"

namespace entroguide {

struct HttpBackendConfig {
  std::string endpoint = "http://127.0.0.1:8000";  ///< scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model = "default";
  std::string api_key;
  int max_in_flight = 4;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{30};
  std::string step_delimiter{kDefaultStepDelimiter};
  std::string answer_pattern{kDefaultAnswerPattern};

  /// Fills endpoint, model and api_key from the environment when set.
  static HttpBackendConfig from_environment(HttpBackendConfig base) {
    if (const char* v = std::getenv("ENTROGUIDE_ENDPOINT"); v && *v) base.endpoint = v;
    if (const char* v = std::getenv("ENTROGUIDE_MODEL"); v && *v) base.model = v;
    if (const char* v = std::getenv("ENTROGUIDE_API_KEY"); v && *v) base.api_key = v;
    return base;
  }
  static HttpBackendConfig from_environment() { return from_environment(HttpBackendConfig{}); }
};

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config)
      : config_(std::move(config)), slots_(config_.max_in_flight) {
    if (config_.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    if (config_.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
    if (config_.endpoint.rfind("https://", 0) == 0)
      throw ConfigError("https endpoints need a TLS-enabled build; use http://");
  }

  static nlohmann::json build_payload(const GenerationRequest& r, const std::string& model) {
    nlohmann::json messages = nlohmann::json::array();
    if (!r.system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", r.system_prompt}});
    messages.push_back({{"role", "user"}, {"content", render_user_message(r)}});
    return {{"model", model},
            {"messages", std::move(messages)},
            {"temperature", r.temperature},
            {"max_tokens", r.max_tokens},
            {"logprobs", true},
            {"top_logprobs", r.top_logprobs},
            {"stop", r.stop_sequences}};
  }

  /// Converts a chat-completions response body into one step.
  static StepGeneration parse_response(const nlohmann::json& body, const std::string& step_delimiter,
                                       const std::string& answer_pattern) {
    const auto choices = body.find("choices");
    if (choices == body.end() || !choices->is_array() || choices->empty())
      throw BackendError("response has no choices", false);
    const auto& choice = (*choices)[0];
    const auto lp = choice.find("logprobs");
    if (lp == choice.end() || lp->is_null() || !lp->contains("content") || (*lp)["content"].is_null())
      throw ConfigError("logprobs unavailable");

    StepGeneration g;
    for (const auto& jt : (*lp)["content"]) {
      TokenRecord t;
      t.text = jt.at("token").get<std::string>();
      t.chosen_logprob = std::min(jt.at("logprob").get<double>(), 0.0);
      if (auto top = jt.find("top_logprobs"); top != jt.end() && top->is_array() && !top->empty()) {
        std::vector<TokenAlternative> alts;
        for (const auto& ja : *top)
          alts.push_back({ja.at("token").get<std::string>(), std::min(ja.at("logprob").get<double>(), 0.0)});
        std::stable_sort(alts.begin(), alts.end(),
                         [](const auto& a, const auto& b) { return a.logprob > b.logprob; });
        t.top_alternatives = std::move(alts);
      }
      g.text += t.text;
      g.tokens.push_back(std::move(t));
    }
    const std::string finish = choice.value("finish_reason", std::string("stop"));
    g.finish_reason = finish == "length" ? FinishReason::Length : FinishReason::StopSequence;
    if (!step_delimiter.empty()) truncate_at_delimiter(g, step_delimiter);
    if (g.tokens.empty() || detail::trim(g.text).empty()) throw BackendError("empty step", false);
    if (detect_answer_marker(g.text, answer_pattern)) g.finish_reason = FinishReason::AnswerMarker;
    return g;
  }

  StepGeneration generate_step(const GenerationRequest& request) override {
    SlotGuard guard(slots_);
    const std::string body = build_payload(request, config_.model).dump();
    auto backoff = config_.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
      httplib::Client client(config_.endpoint);
      const auto secs = static_cast<time_t>(config_.timeout.count());
      client.set_connection_timeout(secs, 0);
      client.set_read_timeout(secs, 0);
      client.set_write_timeout(secs, 0);
      httplib::Headers headers;
      if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

      auto res = client.Post(config_.path, headers, body, "application/json");
      if (!res) {
        last_error = "endpoint unreachable: " + httplib::to_string(res.error());
      } else if (res->status == 429 || res->status >= 500) {
        last_error = "endpoint returned HTTP " + std::to_string(res->status);
      } else if (res->status != 200) {
        throw BackendError("endpoint returned HTTP " + std::to_string(res->status) + ": " +
                               res->body.substr(0, 200),
                           false);
      } else {
        nlohmann::json parsed;
        try {
          parsed = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
          throw BackendError(std::string("malformed response: ") + e.what(), false);
        }
        return parse_response(parsed, config_.step_delimiter, config_.answer_pattern);
      }
      if (attempt < config_.max_attempts) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
    }
    throw BackendError(last_error, true);
  }

  const HttpBackendConfig& config() const { return config_; }

 private:
  struct SlotGuard {
    explicit SlotGuard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
    ~SlotGuard() { sem.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;
    std::counting_semaphore<>& sem;
  };

  HttpBackendConfig config_;
  std::counting_semaphore<> slots_;
};

}  // namespace entroguide

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "medeval/manifest.hpp"
#include "medeval/promptforge.hpp"

namespace medeval::evalrunner {

struct RetryPolicy {
  int count = 3;        // retries after the first attempt, transport faults only
  int backoff_ms = 200;  // doubles per retry
};

struct EndpointConfig {
  std::string target = "mock:gold";  // "mock:NAME" or a base URL
  std::string model = "default";
  double temperature = 0.0;
  int max_output_tokens = 1024;
  int max_in_flight = 8;
  RetryPolicy retry;
  std::uint64_t seed = 0;
  std::string api_key_env = "MEDEVAL_API_KEY";  // never echoed into reports
  int timeout_s = 120;
};

struct CallContext {
  const ManifestRecord* record = nullptr;
  std::string condition;  // set for per-condition classification calls
};

class Endpoint {
 public:
  virtual ~Endpoint() = default;

  /// One chat-style completion for the prompt; throws TransportError after
  /// exhausted retries and EndpointError on non-2xx replies.
  std::string generate(const promptforge::RenderedPrompt& prompt, const CallContext& ctx);

  virtual std::string describe() const = 0;
  long calls() const { return calls_.load(); }
  int max_observed_in_flight() const { return max_in_flight_seen_.load(); }

 protected:
  virtual std::string generate_impl(const promptforge::RenderedPrompt& prompt,
                                    const CallContext& ctx) = 0;

 private:
  std::atomic<long> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_seen_{0};
};

/// Scripted responder; sees the record and condition so it can answer from
/// gold (or deliberately wrong).
class MockEndpoint : public Endpoint {
 public:
  using Responder =
      std::function<std::string(const promptforge::RenderedPrompt&, const CallContext&)>;

  MockEndpoint(std::string name, Responder responder)
      : name_(std::move(name)), responder_(std::move(responder)) {}

  std::string describe() const override { return "mock:" + name_; }

 protected:
  std::string generate_impl(const promptforge::RenderedPrompt& prompt,
                            const CallContext& ctx) override {
    return responder_(prompt, ctx);
  }

 private:
  std::string name_;
  Responder responder_;
};

/// Chat-completion HTTP endpoint (POST {base}/v1/chat/completions with
/// inline base64 PNG image parts).
class HttpEndpoint : public Endpoint {
 public:
  explicit HttpEndpoint(EndpointConfig config);
  std::string describe() const override { return config_.target; }

 protected:
  std::string generate_impl(const promptforge::RenderedPrompt& prompt,
                            const CallContext& ctx) override;

 private:
  EndpointConfig config_;
};

/// Builds the JSON request body exactly as the HTTP endpoint sends it;
/// exposed so the request shape is testable without a server.
std::string build_chat_request(const promptforge::RenderedPrompt& prompt,
                               const EndpointConfig& config);

/// Built-in mock names: gold, wrong, silent, echo.
std::unique_ptr<Endpoint> make_endpoint(const EndpointConfig& config);
std::unique_ptr<MockEndpoint> make_mock(const std::string& name);

}  // namespace medeval::evalrunner

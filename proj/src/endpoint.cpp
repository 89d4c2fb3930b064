#include "medeval/endpoint.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "medeval/common.hpp"

namespace medeval::evalrunner {

using nlohmann::json;
using promptforge::PromptPart;
using promptforge::RenderedPrompt;
using promptforge::TaskKind;

std::string Endpoint::generate(const RenderedPrompt& prompt, const CallContext& ctx) {
  if (prompt.parts.empty()) throw ValidationError("generate: prompt has no parts");
  ++calls_;
  const int now = ++in_flight_;
  int seen = max_in_flight_seen_.load();
  while (now > seen && !max_in_flight_seen_.compare_exchange_weak(seen, now)) {
  }
  try {
    std::string reply = generate_impl(prompt, ctx);
    --in_flight_;
    return reply;
  } catch (...) {
    --in_flight_;
    throw;
  }
}

std::string build_chat_request(const RenderedPrompt& prompt, const EndpointConfig& config) {
  json content = json::array();
  for (const PromptPart& part : prompt.parts) {
    if (part.kind == PromptPart::Kind::Text) {
      content.push_back({{"type", "text"}, {"text", part.text}});
    } else {
      const std::vector<std::uint8_t> png = part.image.load();
      content.push_back(
          {{"type", "image_url"},
           {"image_url",
            {{"url", "data:image/png;base64," + base64_encode(png.data(), png.size())}}}});
    }
  }
  json messages = json::array();
  if (prompt.system_text) {
    messages.push_back({{"role", "system"}, {"content", *prompt.system_text}});
  }
  messages.push_back({{"role", "user"}, {"content", content}});
  json body{{"model", config.model},
            {"temperature", prompt.temperature},
            {"max_tokens", config.max_output_tokens},
            {"seed", config.seed},
            {"messages", messages}};
  return body.dump();
}

HttpEndpoint::HttpEndpoint(EndpointConfig config) : config_(std::move(config)) {}

std::string HttpEndpoint::generate_impl(const RenderedPrompt& prompt, const CallContext&) {
  const std::string body = build_chat_request(prompt, config_);

  httplib::Client client(config_.target);
  client.set_connection_timeout(config_.timeout_s, 0);
  client.set_read_timeout(config_.timeout_s, 0);
  client.set_write_timeout(config_.timeout_s, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  int backoff_ms = config_.retry.backoff_ms;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retry.count; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
    httplib::Result res =
        client.Post("/v1/chat/completions", headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;  // transport fault: retry
    }
    if (res->status < 200 || res->status >= 300) {
      const std::string excerpt = res->body.substr(0, 200);
      throw EndpointError("endpoint returned status " + std::to_string(res->status) + ": " +
                          excerpt);
    }
    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) throw EndpointError("endpoint returned non-JSON body");
    try {
      const json& message = reply.at("choices").at(0).at("message");
      const json& content = message.at("content");
      if (content.is_string()) return content.get<std::string>();
      if (content.is_array()) {
        std::string text;
        for (const json& piece : content) {
          if (piece.is_object() && piece.value("type", "") == "text") {
            text += piece.value("text", "");
          }
        }
        return text;
      }
      throw EndpointError("unexpected content shape in endpoint reply");
    } catch (const json::exception& e) {
      throw EndpointError(std::string("malformed endpoint reply: ") + e.what());
    }
  }
  throw TransportError("transport failure after " + std::to_string(config_.retry.count) +
                       " retries: " + last_error);
}

namespace {

std::string letter_answer(char letter) {
  return std::string("Final Answer: (") + letter + ")";
}

char cycle_choice(char gold) { return gold == 'E' ? 'A' : static_cast<char>(gold + 1); }

TemporalClass cycle_temporal(TemporalClass c) {
  switch (c) {
    case TemporalClass::Improved: return TemporalClass::Stable;
    case TemporalClass::Stable: return TemporalClass::Worsened;
    default: return TemporalClass::Improved;
  }
}

char temporal_letter(TemporalClass c) {
  switch (c) {
    case TemporalClass::Improved: return 'A';
    case TemporalClass::Stable: return 'B';
    default: return 'C';
  }
}

std::string respond_gold(const RenderedPrompt&, const CallContext& ctx) {
  const ManifestRecord& r = *ctx.record;
  switch (r.task_kind) {
    case TaskKind::CtCls:
    case TaskKind::MrCls:
    case TaskKind::CtRateCls:
      return gold_label(r, ctx.condition) ? "Final Answer: yes" : "Final Answer: no";
    case TaskKind::WsiReport:
      return gold_reference(r);
    case TaskKind::Temporal:
      return letter_answer(temporal_letter(gold_temporal(r)));
    case TaskKind::BboxLoc: {
      const BBox box = gold_box(r);
      json j = json::array(
          {{{"label", box.label}, {"box_2d", {box.y0, box.x0, box.y1, box.x1}}}});
      return j.dump();
    }
    case TaskKind::LabExtract: {
      json entries = json::array();
      for (const LabTestEntry& e : gold_lab_entries(r)) entries.push_back(lab_entry_to_json(e));
      return entries.dump();
    }
    case TaskKind::TextMcq:
    case TaskKind::EhrNoteMcq:
      return letter_answer(gold_choice(r));
  }
  return {};
}

std::string respond_wrong(const RenderedPrompt&, const CallContext& ctx) {
  const ManifestRecord& r = *ctx.record;
  switch (r.task_kind) {
    case TaskKind::CtCls:
    case TaskKind::MrCls:
    case TaskKind::CtRateCls:
      return gold_label(r, ctx.condition) ? "Final Answer: no" : "Final Answer: yes";
    case TaskKind::WsiReport:
      return "qqq zzz xxx";
    case TaskKind::Temporal:
      return letter_answer(temporal_letter(cycle_temporal(gold_temporal(r))));
    case TaskKind::BboxLoc:
      return "[]";
    case TaskKind::LabExtract:
      return R"([{"name": "qqq zzz spurious assay", "result": "-1"}])";
    case TaskKind::TextMcq:
    case TaskKind::EhrNoteMcq:
      return letter_answer(cycle_choice(gold_choice(r)));
  }
  return {};
}

std::string respond_silent(const RenderedPrompt&, const CallContext&) {
  return "I could not determine a definitive answer from the provided input.";
}

std::string respond_echo(const RenderedPrompt& prompt, const CallContext&) {
  return "ECHO " + sha256_hex(prompt.debug_text());
}

}  // namespace

std::unique_ptr<MockEndpoint> make_mock(const std::string& name) {
  if (name == "gold") return std::make_unique<MockEndpoint>(name, respond_gold);
  if (name == "wrong") return std::make_unique<MockEndpoint>(name, respond_wrong);
  if (name == "silent") return std::make_unique<MockEndpoint>(name, respond_silent);
  if (name == "echo") return std::make_unique<MockEndpoint>(name, respond_echo);
  throw ValidationError("unknown mock responder: " + name +
                        " (known: gold, wrong, silent, echo)");
}

std::unique_ptr<Endpoint> make_endpoint(const EndpointConfig& config) {
  if (config.target.rfind("mock:", 0) == 0) {
    return make_mock(config.target.substr(5));
  }
  return std::make_unique<HttpEndpoint>(config);
}

}  // namespace medeval::evalrunner

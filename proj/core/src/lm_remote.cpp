#include <chrono>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "seqsel/lm.hpp"

namespace seqsel {

using json = nlohmann::json;

RemoteBackend::RemoteBackend(RemoteLmConfig config) : config_(std::move(config)) {
  require(!config_.endpoint.empty(), ErrorKind::config, "remote backend: endpoint must be set");
  require(config_.retries >= 0, ErrorKind::config, "remote backend: retries must be >= 0");
}

std::string RemoteBackend::post_completion(const std::string& body) {
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) {
      const auto wait = std::chrono::milliseconds(config_.retry_backoff_ms) * (1 << (attempt - 1));
      std::this_thread::sleep_for(wait);
    }
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_s, 0);
    client.set_read_timeout(config_.timeout_s, 0);
    client.set_write_timeout(config_.timeout_s, 0);
    auto res = client.Post(config_.path, body, "application/json");
    if (!res) {
      last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
      continue;
    }
    if (res->status >= 200 && res->status < 300) return res->body;
    if (res->status >= 400 && res->status < 500) {
      throw Error(ErrorKind::backend,
                  "remote backend: HTTP " + std::to_string(res->status) + " from " +
                      config_.endpoint + config_.path + ": " + res->body,
                  /*retryable=*/false);
    }
    last_error = "HTTP " + std::to_string(res->status);
  }
  throw Error(ErrorKind::backend,
              "remote backend: " + config_.endpoint + config_.path + " unreachable after " +
                  std::to_string(config_.retries + 1) + " attempts: " + last_error,
              /*retryable=*/true);
}

std::vector<double> RemoteBackend::loglikelihood(const std::string& context,
                                                 const std::string& continuation) {
  json request = {
      {"model", config_.model},  {"prompt", context + continuation},
      {"max_tokens", 0},         {"echo", true},
      {"logprobs", 1},           {"temperature", 0},
  };
  const std::string body = post_completion(request.dump());
  return parse_echo_logprobs(body, context.size());
}

std::string RemoteBackend::generate(const std::string& context, int max_tokens,
                                    const std::string& stop) {
  json request = {
      {"model", config_.model}, {"prompt", context}, {"max_tokens", max_tokens},
      {"echo", false},          {"logprobs", 0},     {"temperature", 0},
  };
  if (!stop.empty()) request["stop"] = json::array({stop});
  const std::string body = post_completion(request.dump());
  return parse_completion_text(body);
}

std::string RemoteBackend::backend_id() const {
  return "remote:" + config_.endpoint + config_.path + "#" + config_.model;
}

namespace {

json parse_response(std::string_view body) {
  json response = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (response.is_discarded()) {
    throw Error(ErrorKind::scoring, "remote backend: response is not valid JSON");
  }
  if (!response.contains("choices") || !response["choices"].is_array() ||
      response["choices"].empty()) {
    throw Error(ErrorKind::scoring, "remote backend: response has no choices");
  }
  return response["choices"][0];
}

}  // namespace

std::vector<double> parse_echo_logprobs(std::string_view response_body, size_t context_chars) {
  const json choice = parse_response(response_body);
  if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
    throw Error(ErrorKind::scoring, "remote backend: response carries no logprobs block");
  }
  const json& lp = choice["logprobs"];
  for (const char* key : {"tokens", "token_logprobs", "text_offset"}) {
    if (!lp.contains(key) || !lp[key].is_array()) {
      throw Error(ErrorKind::scoring,
                  std::string("remote backend: logprobs block missing array '") + key + "'");
    }
  }
  const json& offsets = lp["text_offset"];
  const json& logprobs = lp["token_logprobs"];
  if (offsets.size() != logprobs.size() || offsets.size() != lp["tokens"].size()) {
    throw Error(ErrorKind::scoring, "remote backend: ragged logprobs arrays");
  }

  // The continuation's tokens are exactly those starting at or after the
  // context/continuation boundary; the first one must start exactly on it,
  // otherwise the backend merged the boundary into one token and the
  // continuation's probability cannot be isolated.
  size_t first = offsets.size();
  for (size_t i = 0; i < offsets.size(); ++i) {
    const size_t off = offsets[i].get<size_t>();
    if (off == context_chars) {
      first = i;
      break;
    }
    if (off > context_chars) break;
  }
  if (first == offsets.size()) {
    throw Error(ErrorKind::scoring,
                "remote backend: continuation does not start on a token boundary at offset " +
                    std::to_string(context_chars));
  }

  std::vector<double> out;
  out.reserve(offsets.size() - first);
  for (size_t i = first; i < offsets.size(); ++i) {
    if (logprobs[i].is_null()) {
      throw Error(ErrorKind::scoring, "remote backend: null log-prob inside continuation");
    }
    out.push_back(logprobs[i].get<double>());
  }
  if (out.empty()) {
    throw Error(ErrorKind::scoring, "remote backend: continuation spans zero tokens");
  }
  return out;
}

std::string parse_completion_text(std::string_view response_body) {
  const json choice = parse_response(response_body);
  if (!choice.contains("text") || !choice["text"].is_string()) {
    throw Error(ErrorKind::scoring, "remote backend: choice carries no text field");
  }
  return choice["text"].get<std::string>();
}

}  // namespace seqsel

#include "subplan/remote_lm.hpp"

#include <cmath>

#include "httplib.h"
#include "json.hpp"

namespace subplan {

using json = nlohmann::json;

HttpTransport::HttpTransport(const std::string& endpoint, int timeout_seconds)
    : timeout_seconds_(timeout_seconds) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos)
    throw RemoteError(RemoteError::Kind::Transport,
                      "endpoint '" + endpoint + "' must look like http://host:port/path");
  const auto slash = endpoint.find('/', scheme + 3);
  base_ = endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : endpoint.substr(slash);
}

std::string HttpTransport::post(const std::string& request_body) {
  httplib::Client client(base_);
  client.set_connection_timeout(timeout_seconds_);
  client.set_read_timeout(timeout_seconds_);
  auto res = client.Post(path_, request_body, "application/json");
  if (!res)
    throw RemoteError(RemoteError::Kind::Transport,
                      "request to " + base_ + path_ + " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    std::string detail = res->body;
    try {
      auto j = json::parse(res->body);
      if (j.contains("error")) detail = j["error"].dump();
    } catch (const json::exception&) {
    }
    throw RemoteError(RemoteError::Kind::MalformedResponse,
                      "server returned status " + std::to_string(res->status) + ": " + detail);
  }
  return res->body;
}

RemoteTokenModel::RemoteTokenModel(RemoteModelConfig config,
                                   std::unique_ptr<LmTransport> transport,
                                   std::shared_ptr<const Tokenizer> tokenizer)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      tokenizer_(tokenizer ? std::move(tokenizer) : std::make_shared<WordTokenizer>()) {
  if (!transport_) transport_ = std::make_unique<HttpTransport>(config_.endpoint);
}

LogProbs RemoteTokenModel::decode_response(const std::string& body) const {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw RemoteError(RemoteError::Kind::MalformedResponse,
                      std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object())
    throw RemoteError(RemoteError::Kind::MalformedResponse, "response must be a JSON object");
  if (j.contains("error"))
    throw RemoteError(RemoteError::Kind::MalformedResponse, "server error: " + j["error"].dump());
  if (!j.contains("logprobs") || !j["logprobs"].is_object())
    throw RemoteError(RemoteError::Kind::MalformedResponse, "response lacks a logprobs object");

  LogProbs out;
  for (const auto& [tok, val] : j["logprobs"].items()) {
    if (!val.is_number())
      throw RemoteError(RemoteError::Kind::MalformedResponse,
                        "logprob for '" + tok + "' is not a number");
    const double lp = val.get<double>();
    if (std::isnan(lp) || lp > 1e-9)
      throw RemoteError(RemoteError::Kind::MalformedResponse,
                        "logprob for '" + tok + "' is not a log-probability");
    if (tok.empty() || tok.find_first_of(" \t\r\n") != std::string::npos)
      throw RemoteError(RemoteError::Kind::ServerVocabMismatch,
                        "server token '" + tok + "' cannot be produced by the client tokenizer");
    if (config_.expected_vocabulary && !config_.expected_vocabulary->contains(tok))
      throw RemoteError(RemoteError::Kind::ServerVocabMismatch,
                        "server token '" + tok + "' is outside the expected vocabulary");
    out.emplace(tok, lp);
  }
  if (j.contains("deterministic") && j["deterministic"].is_boolean())
    deterministic_.store(j["deterministic"].get<bool>());
  else
    deterministic_.store(false);
  return out;
}

LogProbs RemoteTokenModel::next_logprobs(std::span<const std::string> context) const {
  std::string key = config_.endpoint;
  key += '\n';
  for (const auto& t : context) {
    key += t;
    key += '\x1f';
  }
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }

  json req;
  req["context"] = std::vector<std::string>(context.begin(), context.end());
  req["top_k"] = config_.top_k;
  ++requests_;
  auto result = decode_response(transport_->post(req.dump()));

  std::lock_guard lock(mutex_);
  cache_.emplace(std::move(key), result);
  return result;
}

}  // namespace subplan

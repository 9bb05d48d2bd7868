#pragma once

// Client for a remote next-token log-probability server.
//
// Wire format (JSON over HTTP POST):
//   request  {"context": ["tok", ...], "top_k": 50}
//   response {"logprobs": {"tok": -1.25, ...}, "deterministic": true}
// All probabilities are natural-log. A response carrying "error", or a
// non-2xx status, is reported as a malformed response.

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "subplan/token_model.hpp"

namespace subplan {

class RemoteError : public std::runtime_error {
 public:
  enum class Kind { Transport, MalformedResponse, ServerVocabMismatch };
  RemoteError(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Carries one request document to the server and returns the response body.
class LmTransport {
 public:
  virtual ~LmTransport() = default;
  virtual std::string post(const std::string& request_body) = 0;
};

/// HTTP transport for endpoints of the form "http://host:port/path".
class HttpTransport final : public LmTransport {
 public:
  explicit HttpTransport(const std::string& endpoint, int timeout_seconds = 30);
  std::string post(const std::string& request_body) override;

 private:
  std::string base_;
  std::string path_;
  int timeout_seconds_;
};

struct RemoteModelConfig {
  std::string endpoint;
  /// Number of entries requested per call; 0 asks the server for everything.
  int top_k = 0;
  /// When set, any response token outside this set is a vocabulary mismatch.
  std::optional<std::set<std::string>> expected_vocabulary;
};

class RemoteTokenModel final : public TokenModel {
 public:
  RemoteTokenModel(RemoteModelConfig config, std::unique_ptr<LmTransport> transport,
                   std::shared_ptr<const Tokenizer> tokenizer = nullptr);

  const Tokenizer& tokenizer() const override { return *tokenizer_; }
  /// Cached per (endpoint, context). Tokens the server omits score -inf.
  LogProbs next_logprobs(std::span<const std::string> context) const override;
  /// The server's determinism flag from the most recent response.
  bool deterministic() const override { return deterministic_.load(); }

  /// Number of requests that reached the transport.
  std::size_t request_count() const noexcept { return requests_.load(); }

 private:
  LogProbs decode_response(const std::string& body) const;

  RemoteModelConfig config_;
  std::unique_ptr<LmTransport> transport_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, LogProbs> cache_;
  mutable std::atomic<std::size_t> requests_{0};
  mutable std::atomic<bool> deterministic_{false};
};

}  // namespace subplan

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "irsim/random.hpp"
#include "json.hpp"

namespace irsim {

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  std::int64_t max_tokens = 512;
  std::optional<std::int64_t> seed;

  friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

struct ChatResponse {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  std::int64_t total_tokens() const noexcept { return prompt_tokens + completion_tokens; }
  friend bool operator==(const ChatResponse&, const ChatResponse&) = default;
};

nlohmann::json to_json(const ChatRequest& request);
ChatRequest request_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ChatResponse& response);
ChatResponse response_from_json(const nlohmann::json& j);

// Sorted keys, no insignificant whitespace, UTF-8.
std::string canonical_request(const ChatRequest& request);
std::string request_digest(const ChatRequest& request);

struct CallLogEntry {
  std::int64_t index = 0;
  std::string label;
  std::string request_digest;
  ChatRequest request;
  ChatResponse response;

  friend bool operator==(const CallLogEntry&, const CallLogEntry&) = default;
};

struct CallLog {
  std::vector<CallLogEntry> entries;
  friend bool operator==(const CallLog&, const CallLog&) = default;
};

nlohmann::json to_json(const CallLogEntry& entry);

// JSON lines, one entry per line, each line newline-terminated.
std::string serialize_log(const CallLog& log);
CallLog parse_log(std::string_view text);
void save_log(const CallLog& log, const std::filesystem::path& destination);
CallLog load_log(const std::filesystem::path& source);

// HTTP POST of a JSON body; returns the response body.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string post_json(const std::string& url, const std::string& body) = 0;
};

// Transport over cpp-httplib; url is scheme://host[:port]/path.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(int timeout_seconds = 120, std::string api_key = {})
      : timeout_seconds_(timeout_seconds), api_key_(std::move(api_key)) {}
  std::string post_json(const std::string& url, const std::string& body) override;

 private:
  int timeout_seconds_;
  std::string api_key_;
};

// Produces the response text for a request in scripted mode. The stream is
// seeded from (gateway seed, request digest).
using ScriptedBehavior = std::function<std::string(const ChatRequest&, Stream&)>;

struct LiveMode {
  std::string endpoint_url;  // full chat-completions URL
};
struct ScriptedMode {
  std::uint64_t seed = 0;
};
struct ReplayMode {
  CallLog log;
};
using GatewayMode = std::variant<LiveMode, ScriptedMode, ReplayMode>;

// Every model call in the engine goes through one of these.
class LlmGateway {
 public:
  explicit LlmGateway(GatewayMode mode, std::shared_ptr<Transport> transport = nullptr);

  void register_behavior(std::string label, ScriptedBehavior behavior);
  bool has_behavior(const std::string& label) const { return behaviors_.count(label) > 0; }

  ChatResponse complete(std::string_view label, const ChatRequest& request);

  const CallLog& log() const noexcept { return log_; }
  bool is_live() const noexcept { return std::holds_alternative<LiveMode>(mode_); }
  bool is_scripted() const noexcept { return std::holds_alternative<ScriptedMode>(mode_); }
  bool is_replay() const noexcept { return std::holds_alternative<ReplayMode>(mode_); }

  // Number of requests sent through the transport (live mode only).
  std::size_t transport_calls() const noexcept { return transport_calls_; }
  // Replay mode: entries of the cached log not yet consumed.
  std::size_t replay_remaining() const;

  void set_retries(int retries) { retries_ = retries; }

 private:
  ChatResponse complete_live(const ChatRequest& request);
  ChatResponse complete_scripted(std::string_view label, const ChatRequest& request, const std::string& digest);

  GatewayMode mode_;
  std::shared_ptr<Transport> transport_;
  std::map<std::string, ScriptedBehavior, std::less<>> behaviors_;
  CallLog log_;
  std::size_t replay_cursor_ = 0;
  std::size_t transport_calls_ = 0;
  int retries_ = 1;
};

// ceil(1.3 * words) summed over message contents.
std::int64_t estimate_prompt_tokens(const ChatRequest& request);

// SHA-256 of the empty input: the content hash of an empty artifact set.
inline constexpr std::string_view kEmptyContentHash =
    "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

// Hash over "path\n<file digest>\n" records in sorted path order.
std::string content_hash(std::vector<std::pair<std::string, std::string>> path_digests);
std::string content_hash_of_bytes(const std::map<std::string, std::string>& path_bytes);
std::string content_hash_of_files(const std::filesystem::path& root, const std::vector<std::string>& relative_paths);

}  // namespace irsim

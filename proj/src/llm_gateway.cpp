#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "irsim/llm_gateway.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "irsim/error.hpp"
#include "irsim/hashing.hpp"
#include "irsim/text.hpp"

namespace irsim {

using nlohmann::json;

json to_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  json j = {{"model", request.model},
            {"messages", std::move(messages)},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
  if (request.seed) j["seed"] = *request.seed;
  return j;
}

ChatRequest request_from_json(const json& j) {
  ChatRequest r;
  r.model = j.at("model").get<std::string>();
  for (const auto& m : j.at("messages")) {
    r.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
  }
  r.temperature = j.at("temperature").get<double>();
  r.max_tokens = j.at("max_tokens").get<std::int64_t>();
  if (j.contains("seed") && !j["seed"].is_null()) r.seed = j["seed"].get<std::int64_t>();
  return r;
}

json to_json(const ChatResponse& response) {
  return {{"text", response.text},
          {"prompt_tokens", response.prompt_tokens},
          {"completion_tokens", response.completion_tokens}};
}

ChatResponse response_from_json(const json& j) {
  return {j.at("text").get<std::string>(), j.at("prompt_tokens").get<std::int64_t>(),
          j.at("completion_tokens").get<std::int64_t>()};
}

std::string canonical_request(const ChatRequest& request) { return to_json(request).dump(); }

std::string request_digest(const ChatRequest& request) { return sha256_hex(canonical_request(request)); }

json to_json(const CallLogEntry& entry) {
  return {{"index", entry.index},
          {"label", entry.label},
          {"request_digest", entry.request_digest},
          {"request", to_json(entry.request)},
          {"response", to_json(entry.response)}};
}

std::string serialize_log(const CallLog& log) {
  std::string out;
  for (const auto& e : log.entries) {
    out += to_json(e).dump();
    out.push_back('\n');
  }
  return out;
}

CallLog parse_log(std::string_view text) {
  CallLog log;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      throw Error(ErrorCode::MalformedLog, "line " + std::to_string(line_no) + " is not newline-terminated");
    }
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    try {
      const json j = json::parse(line);
      CallLogEntry e;
      e.index = j.at("index").get<std::int64_t>();
      e.label = j.at("label").get<std::string>();
      e.request_digest = j.at("request_digest").get<std::string>();
      e.request = request_from_json(j.at("request"));
      e.response = response_from_json(j.at("response"));
      if (e.index != static_cast<std::int64_t>(line_no)) {
        throw Error(ErrorCode::MalformedLog, "index " + std::to_string(e.index) + " at line " + std::to_string(line_no));
      }
      if (e.request_digest != request_digest(e.request)) {
        throw Error(ErrorCode::MalformedLog, "digest mismatch at line " + std::to_string(line_no));
      }
      log.entries.push_back(std::move(e));
    } catch (const Error&) {
      throw;
    } catch (const std::exception& ex) {
      throw Error(ErrorCode::MalformedLog, "line " + std::to_string(line_no) + ": " + ex.what());
    }
    ++line_no;
  }
  return log;
}

void save_log(const CallLog& log, const std::filesystem::path& destination) {
  std::ofstream out(destination, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + destination.string());
  out << serialize_log(log);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + destination.string());
}

CallLog load_log(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + source.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_log(buf.str());
}

std::string HttpTransport::post_json(const std::string& url, const std::string& body) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::EndpointError, "endpoint URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Client client(origin);
  client.set_connection_timeout(timeout_seconds_);
  client.set_read_timeout(timeout_seconds_);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = client.Post(path, headers, body, "application/json");
  if (!res) throw Error(ErrorCode::EndpointError, "POST " + url + " failed: " + httplib::to_string(res.error()));
  if (res->status / 100 != 2) {
    throw Error(ErrorCode::EndpointError, "POST " + url + " returned HTTP " + std::to_string(res->status));
  }
  return res->body;
}

std::int64_t estimate_prompt_tokens(const ChatRequest& request) {
  std::size_t words = 0;
  for (const auto& m : request.messages) words += word_count(m.content);
  return estimate_tokens(words);
}

LlmGateway::LlmGateway(GatewayMode mode, std::shared_ptr<Transport> transport)
    : mode_(std::move(mode)), transport_(std::move(transport)) {
  if (is_live() && !transport_) transport_ = std::make_shared<HttpTransport>();
}

void LlmGateway::register_behavior(std::string label, ScriptedBehavior behavior) {
  behaviors_[std::move(label)] = std::move(behavior);
}

std::size_t LlmGateway::replay_remaining() const {
  if (const auto* r = std::get_if<ReplayMode>(&mode_)) return r->log.entries.size() - replay_cursor_;
  return 0;
}

ChatResponse LlmGateway::complete_live(const ChatRequest& request) {
  const auto& live = std::get<LiveMode>(mode_);
  const std::string body = canonical_request(request);
  std::string reply;
  for (int attempt = 0;; ++attempt) {
    try {
      ++transport_calls_;
      reply = transport_->post_json(live.endpoint_url, body);
      break;
    } catch (const std::exception& e) {
      if (attempt >= retries_) {
        if (const auto* err = dynamic_cast<const Error*>(&e); err && err->code() == ErrorCode::EndpointError) throw;
        throw Error(ErrorCode::EndpointError, e.what());
      }
    }
  }
  try {
    const json j = json::parse(reply);
    ChatResponse r;
    r.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    if (j.contains("usage")) {
      r.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
      r.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
    } else {
      r.prompt_tokens = estimate_prompt_tokens(request);
      r.completion_tokens = estimate_tokens(word_count(r.text));
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::EndpointError, std::string("unparseable chat-completions body: ") + e.what());
  }
}

ChatResponse LlmGateway::complete_scripted(std::string_view label, const ChatRequest& request,
                                           const std::string& digest) {
  const auto seed = std::get<ScriptedMode>(mode_).seed;
  Stream draws(sha256_u64(std::to_string(seed) + ":" + digest));
  std::string text;
  if (auto it = behaviors_.find(label); it != behaviors_.end()) {
    text = it->second(request, draws);
  } else {
    text = "acknowledged " + digest.substr(0, 12);
  }
  return {text, estimate_prompt_tokens(request), estimate_tokens(word_count(text))};
}

ChatResponse LlmGateway::complete(std::string_view label, const ChatRequest& request) {
  if (request.messages.empty()) throw Error(ErrorCode::GatewayError, "chat request without messages");
  const std::string digest = request_digest(request);
  const auto index = static_cast<std::int64_t>(log_.entries.size());
  ChatResponse response;
  if (auto* replay = std::get_if<ReplayMode>(&mode_)) {
    if (replay_cursor_ >= replay->log.entries.size()) {
      throw Error(ErrorCode::ReplayDivergence,
                  "call " + std::to_string(index) + " has no cached entry (log holds " +
                      std::to_string(replay->log.entries.size()) + ")");
    }
    const auto& cached = replay->log.entries[replay_cursor_];
    if (cached.request_digest != digest) {
      throw Error(ErrorCode::ReplayDivergence, "call " + std::to_string(index) + ": logged digest " +
                                                   cached.request_digest + " != replayed digest " + digest);
    }
    ++replay_cursor_;
    response = cached.response;
  } else if (is_live()) {
    response = complete_live(request);
  } else {
    response = complete_scripted(label, request, digest);
  }
  log_.entries.push_back({index, std::string(label), digest, request, response});
  return response;
}

std::string content_hash(std::vector<std::pair<std::string, std::string>> path_digests) {
  std::sort(path_digests.begin(), path_digests.end());
  std::string acc;
  for (const auto& [path, digest] : path_digests) {
    acc += path;
    acc.push_back('\n');
    acc += digest;
    acc.push_back('\n');
  }
  return sha256_hex(acc);
}

std::string content_hash_of_bytes(const std::map<std::string, std::string>& path_bytes) {
  std::vector<std::pair<std::string, std::string>> pd;
  for (const auto& [path, bytes] : path_bytes) pd.emplace_back(path, sha256_hex(bytes));
  return content_hash(std::move(pd));
}

std::string content_hash_of_files(const std::filesystem::path& root, const std::vector<std::string>& relative_paths) {
  std::vector<std::pair<std::string, std::string>> pd;
  for (const auto& rel : relative_paths) {
    std::ifstream in(root / rel, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + (root / rel).string());
    std::ostringstream buf;
    buf << in.rdbuf();
    pd.emplace_back(rel, sha256_hex(buf.str()));
  }
  return content_hash(std::move(pd));
}

}  // namespace irsim

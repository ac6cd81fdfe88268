#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "irsim/persona.hpp"
#include "json.hpp"

namespace irsim {

struct Chunk {
  std::string id;
  std::string text;    // normalized
  std::string digest;  // lowercase hex SHA-256 of text
  std::string source_id;
  std::int64_t position = 0;  // word offset in source, or append sequence number

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct Document {
  std::string source_id;
  std::string text;
};

struct ChunkingConfig {
  std::size_t window_words = 512;
  std::size_t overlap_words = 64;
  bool allow_empty = true;
};

// A per-scenario corpus. Plain value type: copies share nothing.
class WorldModelInstance {
 public:
  explicit WorldModelInstance(std::string instance_id = "world") : instance_id_(std::move(instance_id)) {}

  const std::string& instance_id() const noexcept { return instance_id_; }
  const std::vector<Chunk>& chunks() const noexcept { return chunks_; }
  const std::vector<Chunk>& appended() const noexcept { return appended_; }

  // Ingested chunks followed by appended ones.
  std::vector<const Chunk*> all_chunks() const;
  std::size_t size() const noexcept { return chunks_.size() + appended_.size(); }
  bool empty() const noexcept { return size() == 0; }

  // Order-independent digest over the ingested chunk digests.
  std::string content_hash() const;

 private:
  friend WorldModelInstance ingest(const std::vector<Document>&, const ChunkingConfig&, std::string);
  friend Chunk append_content(WorldModelInstance&, std::string_view, const std::string&);

  std::string instance_id_;
  std::vector<Chunk> chunks_;
  std::vector<Chunk> appended_;
};

WorldModelInstance ingest(const std::vector<Document>& documents, const ChunkingConfig& chunking,
                          std::string instance_id = "world");

// Word-window starts for a document of n words.
std::vector<std::size_t> chunk_starts(std::size_t n_words, const ChunkingConfig& chunking);

enum class LookupScope { All, Corpus, Appended };

// Ranked by number of distinct query terms present, ties by (source_id, position).
// Chunks matching no term are not returned. Never touches any budget.
std::vector<Chunk> keyword_lookup(const WorldModelInstance& instance, const std::vector<std::string>& terms,
                                  std::size_t k, LookupScope scope = LookupScope::All);

Chunk append_content(WorldModelInstance& instance, std::string_view text, const std::string& author_persona_id);

struct SearchRequest {
  std::string query;
  std::optional<std::string> justification;
};

bool is_justified(const SearchRequest& request, std::size_t min_words = 5);

struct SearchResult {
  std::string title;
  std::string url;
  std::string snippet;
  double score = 0.0;
};

nlohmann::json to_json(const SearchResult& result);

// query -> results. Implementations: internal hybrid retrieval, seeded web stub.
class SearchBackend {
 public:
  virtual ~SearchBackend() = default;
  virtual std::string name() const = 0;
  virtual std::vector<SearchResult> search(const WorldModelInstance& instance, const std::string& query) = 0;
};

// No-network stand-in for an external web search service.
class StubWebBackend : public SearchBackend {
 public:
  explicit StubWebBackend(std::uint64_t seed, std::size_t results = 3) : seed_(seed), results_(results) {}
  std::string name() const override { return "stub-web"; }
  std::vector<SearchResult> search(const WorldModelInstance& instance, const std::string& query) override;

 private:
  std::uint64_t seed_;
  std::size_t results_;
};

struct SearchLogEntry {
  std::int64_t step = 0;
  std::string persona_id;
  std::string query;
  std::optional<std::string> justification;
  std::string backend;
  std::string status;  // accepted | rejected_unjustified | search_budget_exhausted | backend_error
};

nlohmann::json to_json(const SearchLogEntry& entry);

// Justification gate, then budget, then backend. Every attempt is journaled.
std::vector<SearchResult> justified_search(const WorldModelInstance& instance, const SearchRequest& request,
                                           BudgetLedger& ledger, const Persona& persona, SearchBackend& backend,
                                           std::int64_t step, std::vector<SearchLogEntry>& journal,
                                           std::size_t min_justification_words = 5);

// Plain-text files under a directory, source_id = path relative to it (sorted).
std::vector<Document> load_corpus_directory(const std::filesystem::path& directory);
// {"documents": [{"source_id": ..., "text": ...}]}
std::vector<Document> load_corpus_manifest(const nlohmann::json& manifest);

}  // namespace irsim

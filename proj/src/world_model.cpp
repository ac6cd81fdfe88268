#include "irsim/world_model.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "irsim/error.hpp"
#include "irsim/hashing.hpp"
#include "irsim/random.hpp"
#include "irsim/text.hpp"

namespace irsim {

namespace {

bool chunk_order(const Chunk* a, const Chunk* b) {
  if (a->source_id != b->source_id) return a->source_id < b->source_id;
  return a->position < b->position;
}

Chunk make_chunk(std::string source_id, std::int64_t position, std::string normalized) {
  Chunk c;
  c.id = source_id + "#" + std::to_string(position);
  c.digest = sha256_hex(normalized);
  c.text = std::move(normalized);
  c.source_id = std::move(source_id);
  c.position = position;
  return c;
}

}  // namespace

std::vector<const Chunk*> WorldModelInstance::all_chunks() const {
  std::vector<const Chunk*> out;
  out.reserve(size());
  for (const auto& c : chunks_) out.push_back(&c);
  for (const auto& c : appended_) out.push_back(&c);
  return out;
}

std::string WorldModelInstance::content_hash() const {
  std::vector<std::string> digests;
  digests.reserve(chunks_.size());
  for (const auto& c : chunks_) digests.push_back(c.digest);
  std::sort(digests.begin(), digests.end());
  return sha256_hex(join(digests, "\n"));
}

std::vector<std::size_t> chunk_starts(std::size_t n_words, const ChunkingConfig& chunking) {
  if (chunking.window_words == 0 || chunking.overlap_words >= chunking.window_words) {
    throw Error(ErrorCode::InvalidField, "chunking requires window_words > overlap_words >= 0");
  }
  std::vector<std::size_t> starts;
  if (n_words == 0) return starts;
  const std::size_t stride = chunking.window_words - chunking.overlap_words;
  for (std::size_t start = 0;; start += stride) {
    starts.push_back(start);
    if (start + chunking.window_words >= n_words) break;
  }
  return starts;
}

WorldModelInstance ingest(const std::vector<Document>& documents, const ChunkingConfig& chunking,
                          std::string instance_id) {
  if (documents.empty() && !chunking.allow_empty) {
    throw Error(ErrorCode::EmptyCorpus, "no documents supplied to world model '" + instance_id + "'");
  }
  WorldModelInstance instance(std::move(instance_id));
  std::set<std::string> seen_sources;
  for (const auto& doc : documents) {
    if (!seen_sources.insert(doc.source_id).second) {
      throw Error(ErrorCode::InvalidField, "duplicate source_id '" + doc.source_id + "'");
    }
    const auto words = split_words(normalize_text(doc.text));
    for (std::size_t start : chunk_starts(words.size(), chunking)) {
      const std::size_t end = std::min(words.size(), start + chunking.window_words);
      std::vector<std::string> window(words.begin() + static_cast<std::ptrdiff_t>(start),
                                      words.begin() + static_cast<std::ptrdiff_t>(end));
      instance.chunks_.push_back(make_chunk(doc.source_id, static_cast<std::int64_t>(start), join(window, " ")));
    }
  }
  return instance;
}

std::vector<Chunk> keyword_lookup(const WorldModelInstance& instance, const std::vector<std::string>& terms,
                                  std::size_t k, LookupScope scope) {
  std::set<std::string> wanted;
  for (const auto& t : terms) {
    for (auto& tok : tokenize(t)) wanted.insert(std::move(tok));
  }
  std::vector<std::pair<std::size_t, const Chunk*>> hits;
  auto consider = [&](const Chunk& c) {
    std::set<std::string> present;
    for (auto& tok : tokenize(c.text)) {
      if (wanted.count(tok)) present.insert(std::move(tok));
    }
    if (!present.empty()) hits.emplace_back(present.size(), &c);
  };
  if (scope != LookupScope::Appended) {
    for (const auto& c : instance.chunks()) consider(c);
  }
  if (scope != LookupScope::Corpus) {
    for (const auto& c : instance.appended()) consider(c);
  }
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return chunk_order(a.second, b.second);
  });
  std::vector<Chunk> out;
  for (std::size_t i = 0; i < hits.size() && i < k; ++i) out.push_back(*hits[i].second);
  return out;
}

Chunk append_content(WorldModelInstance& instance, std::string_view text, const std::string& author_persona_id) {
  std::string normalized = normalize_text(text);
  if (normalized.empty()) throw Error(ErrorCode::EmptyText, "cannot append empty content");
  const auto position = static_cast<std::int64_t>(instance.appended_.size());
  instance.appended_.push_back(make_chunk("@append/" + author_persona_id, position, std::move(normalized)));
  return instance.appended_.back();
}

bool is_justified(const SearchRequest& request, std::size_t min_words) {
  return request.justification.has_value() && word_count(*request.justification) >= min_words;
}

nlohmann::json to_json(const SearchResult& result) {
  return {{"title", result.title}, {"url", result.url}, {"snippet", result.snippet}, {"score", result.score}};
}

nlohmann::json to_json(const SearchLogEntry& entry) {
  nlohmann::json j = {{"step", entry.step},       {"persona_id", entry.persona_id}, {"query", entry.query},
                      {"backend", entry.backend}, {"status", entry.status}};
  j["justification"] = entry.justification ? nlohmann::json(*entry.justification) : nlohmann::json(nullptr);
  return j;
}

std::vector<SearchResult> StubWebBackend::search(const WorldModelInstance&, const std::string& query) {
  Stream draws(seed_ ^ fnv1a64(query));
  const auto terms = tokenize(query);
  const std::string slug = terms.empty() ? std::string("query") : join(terms, "-");
  std::vector<SearchResult> out;
  for (std::size_t i = 0; i < results_; ++i) {
    SearchResult r;
    const auto tag = draws.next_u64() % 100000;
    r.title = "Result " + std::to_string(i + 1) + " for " + query;
    r.url = "https://search.invalid/" + slug + "/" + std::to_string(tag);
    r.snippet = "Synthetic snippet " + std::to_string(tag) + " about " + query + ".";
    r.score = 1.0 / static_cast<double>(i + 1);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SearchResult> justified_search(const WorldModelInstance& instance, const SearchRequest& request,
                                           BudgetLedger& ledger, const Persona& persona, SearchBackend& backend,
                                           std::int64_t step, std::vector<SearchLogEntry>& journal,
                                           std::size_t min_justification_words) {
  SearchLogEntry entry{step, persona.id, request.query, request.justification, backend.name(), "accepted"};
  if (!is_justified(request, min_justification_words)) {
    entry.status = "rejected_unjustified";
    journal.push_back(entry);
    throw Error(ErrorCode::RejectedUnjustified, "search '" + request.query + "' by " + persona.id +
                                                    " lacks a justification of at least " +
                                                    std::to_string(min_justification_words) + " words");
  }
  try {
    debit_search(ledger, persona, step, "search: " + request.query);
  } catch (const Error&) {
    entry.status = "search_budget_exhausted";
    journal.push_back(entry);
    throw;
  }
  try {
    auto results = backend.search(instance, request.query);
    journal.push_back(entry);
    return results;
  } catch (const Error& e) {
    entry.status = "backend_error";
    journal.push_back(entry);
    if (e.code() == ErrorCode::BackendError) throw;
    throw Error(ErrorCode::BackendError, e.what());
  } catch (const std::exception& e) {
    entry.status = "backend_error";
    journal.push_back(entry);
    throw Error(ErrorCode::BackendError, e.what());
  }
}

std::vector<Document> load_corpus_directory(const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory)) {
    throw Error(ErrorCode::IoError, "corpus directory not found: " + directory.string());
  }
  std::vector<Document> docs;
  for (const auto& entry : fs::recursive_directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + entry.path().string());
    std::ostringstream buf;
    buf << in.rdbuf();
    docs.push_back({fs::relative(entry.path(), directory).generic_string(), buf.str()});
  }
  std::sort(docs.begin(), docs.end(), [](const Document& a, const Document& b) { return a.source_id < b.source_id; });
  return docs;
}

std::vector<Document> load_corpus_manifest(const nlohmann::json& manifest) {
  if (!manifest.contains("documents") || !manifest["documents"].is_array()) {
    throw Error(ErrorCode::InvalidField, "corpus manifest needs a 'documents' array");
  }
  std::vector<Document> docs;
  for (const auto& d : manifest["documents"]) {
    if (!d.contains("source_id") || !d["source_id"].is_string() || !d.contains("text") || !d["text"].is_string()) {
      throw Error(ErrorCode::InvalidField, "each document needs string 'source_id' and 'text'");
    }
    docs.push_back({d["source_id"].get<std::string>(), d["text"].get<std::string>()});
  }
  return docs;
}

}  // namespace irsim

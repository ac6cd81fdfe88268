#include "irsim/retrieval.hpp"

#include <algorithm>
#include <numbers>
#include <set>

#include "irsim/hashing.hpp"
#include "irsim/text.hpp"

namespace irsim {

CorpusStats build_stats(const std::vector<std::vector<std::string>>& tokenized_chunks) {
  CorpusStats stats;
  stats.N = tokenized_chunks.size();
  std::size_t total = 0;
  for (const auto& tokens : tokenized_chunks) {
    stats.len.push_back(tokens.size());
    total += tokens.size();
    std::set<std::string_view> unique(tokens.begin(), tokens.end());
    for (auto t : unique) ++stats.df[std::string(t)];
  }
  stats.avg_len = stats.N == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(stats.N);
  return stats;
}

CorpusStats build_stats(const WorldModelInstance& instance) {
  std::vector<std::vector<std::string>> tokenized;
  for (const Chunk* c : instance.all_chunks()) tokenized.push_back(tokenize(c->text));
  return build_stats(tokenized);
}

void HybridConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::InvalidField, "hybrid.lambda must lie in [0,1]");
  if (!(k1 > 0.0)) throw Error(ErrorCode::InvalidField, "hybrid.k1 must be positive");
  if (!(b >= 0.0 && b <= 1.0)) throw Error(ErrorCode::InvalidField, "hybrid.b must lie in [0,1]");
  if (top_k == 0) throw Error(ErrorCode::InvalidField, "hybrid.top_k must be positive");
  if (embedding_dim == 0) throw Error(ErrorCode::InvalidField, "hybrid.embedding_dim must be positive");
}

HybridConfig hybrid_config_from_json(const nlohmann::json& j) {
  HybridConfig cfg;
  if (j.is_null()) return cfg;
  cfg.lambda = j.value("lambda", cfg.lambda);
  cfg.k1 = j.value("k1", cfg.k1);
  cfg.b = j.value("b", cfg.b);
  cfg.top_k = j.value("top_k", cfg.top_k);
  cfg.embedding_dim = j.value("embedding_dim", cfg.embedding_dim);
  cfg.validate();
  return cfg;
}

Eigen::VectorXd HashingEmbedder::token_vector(std::string_view token) const {
  std::uint64_t state = seed_ ^ fnv1a64(token);
  Eigen::VectorXd v(dim_);
  for (Eigen::Index i = 0; i < dim_; ++i) {
    // Box-Muller from two splitmix draws.
    const double u1 = (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    v[i] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  const double n = v.norm();
  return n > 0.0 ? Eigen::VectorXd(v / n) : v;
}

Eigen::VectorXd HashingEmbedder::embed(std::string_view text) const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim_);
  const auto tokens = tokenize(text);
  if (tokens.empty()) return sum;
  for (const auto& t : tokens) sum += token_vector(t);
  sum /= static_cast<double>(tokens.size());
  const double n = sum.norm();
  if (n > 0.0) sum /= n;
  return sum;
}

double bm25_idf(std::size_t N, std::size_t df) {
  const double n = static_cast<double>(N);
  const double d = static_cast<double>(df);
  return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
}

double bm25_score(const std::vector<std::string>& query_terms, const std::vector<std::string>& chunk_tokens,
                  const CorpusStats& stats, double k1, double b) {
  if (stats.N == 0 || stats.avg_len <= 0.0) return 0.0;
  std::unordered_map<std::string_view, std::size_t> tf;
  for (const auto& t : chunk_tokens) ++tf[t];
  const double len_ratio = static_cast<double>(chunk_tokens.size()) / stats.avg_len;
  double score = 0.0;
  for (const auto& term : query_terms) {
    const auto it = tf.find(term);
    if (it == tf.end()) continue;
    const auto df_it = stats.df.find(term);
    const std::size_t df = df_it == stats.df.end() ? 0 : df_it->second;
    const double f = static_cast<double>(it->second);
    score += bm25_idf(stats.N, df) * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * len_ratio));
  }
  return score;
}

double bm25_score(const std::vector<std::string>& query_terms, const Chunk& chunk, const CorpusStats& stats,
                  double k1, double b) {
  return bm25_score(query_terms, tokenize(chunk.text), stats, k1, b);
}

std::vector<ScoredChunk> hybrid_search(const WorldModelInstance& instance, std::string_view query,
                                       const HybridConfig& cfg, const Embedder& embedder) {
  cfg.validate();
  const auto chunks = instance.all_chunks();
  if (chunks.empty()) throw Error(ErrorCode::EmptyInstance, "hybrid search over empty world model");

  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(chunks.size());
  for (const Chunk* c : chunks) tokenized.push_back(tokenize(c->text));
  const CorpusStats stats = build_stats(tokenized);
  const auto query_terms = tokenize(query);
  const Eigen::VectorXd qv = embedder.embed(query);

  std::vector<ScoredChunk> scored(chunks.size());
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    scored[i].chunk = *chunks[i];
    scored[i].lexical = bm25_score(query_terms, tokenized[i], stats, cfg.k1, cfg.b);
    scored[i].vector = cosine(qv, embedder.embed(chunks[i]->text));
    if (i == 0 || scored[i].lexical < lo) lo = scored[i].lexical;
    if (i == 0 || scored[i].lexical > hi) hi = scored[i].lexical;
  }
  for (auto& s : scored) {
    const double norm_lex = hi > lo ? (s.lexical - lo) / (hi - lo) : 0.5;
    const double norm_vec = (s.vector + 1.0) / 2.0;
    s.score = cfg.lambda * norm_lex + (1.0 - cfg.lambda) * norm_vec;
  }
  std::sort(scored.begin(), scored.end(), [](const ScoredChunk& a, const ScoredChunk& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.chunk.source_id != b.chunk.source_id) return a.chunk.source_id < b.chunk.source_id;
    return a.chunk.position < b.chunk.position;
  });
  if (scored.size() > cfg.top_k) scored.resize(cfg.top_k);
  return scored;
}

std::vector<SearchResult> HybridBackend::search(const WorldModelInstance& instance, const std::string& query) {
  std::vector<SearchResult> out;
  for (auto& s : hybrid_search(instance, query, cfg_, embedder_)) {
    const auto words = split_words(s.chunk.text);
    std::vector<std::string> head(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(words.size(), 40)));
    out.push_back({s.chunk.id, "world://" + s.chunk.id, join(head, " "), s.score});
  }
  return out;
}

}  // namespace irsim

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "irsim/error.hpp"
#include "irsim/world_model.hpp"

namespace irsim {

struct CorpusStats {
  std::size_t N = 0;
  std::unordered_map<std::string, std::size_t> df;
  double avg_len = 0.0;
  std::vector<std::size_t> len;  // aligned with the chunk order used to build the stats
};

CorpusStats build_stats(const std::vector<std::vector<std::string>>& tokenized_chunks);
CorpusStats build_stats(const WorldModelInstance& instance);

struct HybridConfig {
  double lambda = 0.5;
  double k1 = 1.2;
  double b = 0.75;
  std::size_t top_k = 10;
  std::size_t embedding_dim = 64;

  void validate() const;
};

HybridConfig hybrid_config_from_json(const nlohmann::json& j);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Eigen::VectorXd embed(std::string_view text) const = 0;
};

// Token -> seeded pseudo-random unit vector; text -> L2-normalized mean.
// Empty text (no tokens) maps to the zero vector.
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(Eigen::Index dim = 64, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {}
  Eigen::Index dim() const override { return dim_; }
  Eigen::VectorXd embed(std::string_view text) const override;
  Eigen::VectorXd token_vector(std::string_view token) const;

 private:
  Eigen::Index dim_;
  std::uint64_t seed_;
};

double bm25_idf(std::size_t N, std::size_t df);

// Duplicated query terms contribute once per occurrence.
double bm25_score(const std::vector<std::string>& query_terms, const std::vector<std::string>& chunk_tokens,
                  const CorpusStats& stats, double k1 = 1.2, double b = 0.75);
double bm25_score(const std::vector<std::string>& query_terms, const Chunk& chunk, const CorpusStats& stats,
                  double k1 = 1.2, double b = 0.75);

// dot(u, v) / (|u| |v|); 0 when either norm is 0.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
  using Scalar = typename DerivedA::Scalar;
  if (u.size() != v.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "cosine of sizes " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
  }
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  if (nu == Scalar(0) || nv == Scalar(0)) return Scalar(0);
  Scalar c = u.dot(v) / (nu * nv);
  if (c > Scalar(1)) c = Scalar(1);
  if (c < Scalar(-1)) c = Scalar(-1);
  return c;
}

struct ScoredChunk {
  Chunk chunk;
  double score = 0.0;
  double lexical = 0.0;  // raw BM25
  double vector = 0.0;   // raw cosine
};

// lambda * minmax(BM25) + (1 - lambda) * (cosine + 1) / 2 over every chunk;
// constant BM25 pools normalize to 0.5. Top-k, ties by (source_id, position).
std::vector<ScoredChunk> hybrid_search(const WorldModelInstance& instance, std::string_view query,
                                       const HybridConfig& cfg, const Embedder& embedder);

class HybridBackend : public SearchBackend {
 public:
  HybridBackend(HybridConfig cfg, const Embedder& embedder) : cfg_(cfg), embedder_(embedder) {}
  std::string name() const override { return "internal-hybrid"; }
  std::vector<SearchResult> search(const WorldModelInstance& instance, const std::string& query) override;

 private:
  HybridConfig cfg_;
  const Embedder& embedder_;
};

}  // namespace irsim

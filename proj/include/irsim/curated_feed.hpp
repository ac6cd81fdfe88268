#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "irsim/retrieval.hpp"
#include "irsim/runtime.hpp"
#include "json.hpp"

namespace irsim::feed {

struct ClickModel {
  double beta = 4.0;
  double b0 = -2.0;
};

struct UpdateRule {
  double eta = 0.05;
  double gamma_exposed = 0.1;
};

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return x >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-x)) : std::exp(x) / (Scalar(1) + std::exp(x));
}

template <typename DerivedB, typename DerivedV>
typename DerivedB::Scalar click_probability(const Eigen::MatrixBase<DerivedB>& b, const Eigen::MatrixBase<DerivedV>& v,
                                            const ClickModel& model) {
  using Scalar = typename DerivedB::Scalar;
  return sigmoid(Scalar(model.beta) * cosine(b, v) + Scalar(model.b0));
}

// b' = b + eta * (v - b), with the pull scaled by gamma when not clicked.
template <typename DerivedB, typename DerivedV>
Eigen::Matrix<typename DerivedB::Scalar, Eigen::Dynamic, 1> update_belief(const Eigen::MatrixBase<DerivedB>& b,
                                                                         const Eigen::MatrixBase<DerivedV>& v,
                                                                         bool clicked, const UpdateRule& rule) {
  using Scalar = typename DerivedB::Scalar;
  if (b.size() != v.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "belief of size " + std::to_string(b.size()) + " vs item of size " + std::to_string(v.size()));
  }
  const Scalar weight = clicked ? Scalar(1) : Scalar(rule.gamma_exposed);
  return b + Scalar(rule.eta) * weight * (v - b);
}

// (1/k) sum over dimensions of the population variance across rows (users).
// Deviations are taken from the first row, so identical rows give exactly 0.
template <typename Derived>
typename Derived::Scalar opinion_variance(const Eigen::MatrixBase<Derived>& beliefs) {
  using Scalar = typename Derived::Scalar;
  const auto n = beliefs.rows();
  if (n == 0 || beliefs.cols() == 0) return Scalar(0);
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> d = beliefs.rowwise() - beliefs.row(0);
  const auto mean = d.colwise().mean();
  const auto sq = d.array().square().colwise().mean();
  return ((sq - mean.array().square()).max(Scalar(0))).mean();
}

struct FeedItem {
  std::string id;
  int topic = 0;
  Eigen::VectorXd v;
  std::int64_t global_clicks = 0;
};

struct Impression {
  std::int64_t week = 0;
  std::size_t item = 0;  // catalog index
  double ranker_score = 0.0;
  double oracle_score = 0.0;
  bool click = false;
  double tau = 0.0;
};

struct UserAgent {
  std::string persona_id;
  Eigen::VectorXd b;
  std::vector<Impression> history;
  std::map<std::size_t, std::int64_t> clicks;      // item -> count
  std::map<std::size_t, std::int64_t> last_click;  // item -> impression ordinal
  std::vector<std::int64_t> topic_exposures;
  Eigen::VectorXd helpful;  // helpful_history_vector, refreshed after each click
};

struct FeedParams {
  int k = 12;
  std::int64_t catalog_size = 500;
  std::int64_t weeks = 12;
  std::int64_t impressions_per_week = 50;
  std::int64_t pool_size = 20;
  std::string ranker = "popularity";
  std::int64_t history_top = 10;
  double init_scale = 0.5;
  ClickModel click;
  UpdateRule update;
};

FeedParams parse_params(const nlohmann::json& params);

struct FeedState;

// Scores one candidate for one user; larger ranks first.
using Scorer = std::function<double(const FeedState&, const UserAgent&, const FeedItem&)>;

class RankerRegistry {
 public:
  // popularity, similarity_to_belief, similarity_to_helpful_history.
  RankerRegistry();
  void add(const std::string& name, Scorer scorer);
  bool contains(const std::string& name) const { return scorers_.count(name) > 0; }
  const Scorer& get(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, Scorer> scorers_;
};

struct FeedState {
  FeedParams params;
  std::vector<FeedItem> items;
  std::vector<UserAgent> users;
  std::int64_t week = 0;
  std::vector<nlohmann::json> weekly;
};

// Normalized mean of v over the user's most-clicked items (ties: most recent
// click first); empty when the user has no clicks.
Eigen::VectorXd helpful_history_vector(const FeedState& state, const UserAgent& user);

struct Ranked {
  std::size_t item;
  double score;
};

// Orders candidates by descending score, ties by item id. Throws EmptyCandidates.
std::vector<Ranked> rank(const Scorer& scorer, const FeedState& state, const UserAgent& user,
                         const std::vector<std::size_t>& candidates);

// Items from world-model chunks: topic is a hash pseudo-label, v the embedding
// projected to R^k with the topic coordinate lifted above the rest, normalized.
std::vector<FeedItem> build_catalog(const WorldModelInstance& world, const Embedder& embedder, int k,
                                    std::int64_t size, Stream& stream);

FeedState init_state(RunContext& ctx, FeedParams params);

// One simulated week for every user, in roster order.
void step_week(FeedState& state, const Scorer& scorer, std::map<std::string, Stream>& streams);

struct FeedMetrics {
  double opinion_variance = 0.0;
  double exposure_entropy = 0.0;
  double kendall_tau_mean = 0.0;
  std::vector<double> per_topic_share;
  std::int64_t impressions = 0;
  std::int64_t clicks = 0;
};

FeedMetrics feed_metrics(const FeedState& state);
nlohmann::json to_json(const FeedMetrics& m);

Eigen::MatrixXd belief_matrix(const FeedState& state);

inline constexpr const char* kImpressionHeader = "week,ranker,user,item,topic,ranker_score,oracle_score,click";

// CSV with the header above; doubles printed with 17 significant digits.
std::string impressions_csv(const FeedState& state);
void export_impressions(const FeedState& state, const std::filesystem::path& destination);

class CuratedFeedType : public ScenarioType {
 public:
  CuratedFeedType(RunContext& ctx, FeedParams params, std::shared_ptr<const RankerRegistry> rankers);

  std::vector<ActionSpec> actions() const override;
  Step schedule(RunContext& ctx) override;
  nlohmann::json metrics(const RunContext& ctx) const override;
  std::vector<Artifact> surfaces(const RunContext& ctx) const override;

  const FeedState& state() const noexcept { return *state_; }

 private:
  std::unique_ptr<FeedState> state_;
  std::shared_ptr<const RankerRegistry> rankers_;
  std::map<std::string, Stream> streams_;
};

// Registers "curated_feed"; custom scorers may be added to the registry first.
void register_type(TypeRegistry& registry, std::shared_ptr<RankerRegistry> rankers = nullptr);

}  // namespace irsim::feed

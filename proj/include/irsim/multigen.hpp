#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "irsim/curated_feed.hpp"
#include "irsim/metrics.hpp"
#include "irsim/runtime.hpp"
#include "json.hpp"

namespace irsim::multigen {

struct RetrievalPolicy {
  double lambda = 0.5;
  std::int64_t top_k = 5;
  std::int64_t expansion_terms = 0;

  friend bool operator==(const RetrievalPolicy&, const RetrievalPolicy&) = default;
};

// Ranges the policy locus is clipped to.
inline constexpr double kLambdaMin = 0.0, kLambdaMax = 1.0;
inline constexpr std::int64_t kTopKMin = 1, kTopKMax = 50;
inline constexpr std::int64_t kExpansionMin = 0, kExpansionMax = 10;

struct Genome {
  std::string template_text;
  RetrievalPolicy policy;
  std::string bio;
  Eigen::VectorXd numeric_core;

  friend bool operator==(const Genome& a, const Genome& b) {
    return a.template_text == b.template_text && a.policy == b.policy && a.bio == b.bio &&
           a.numeric_core.size() == b.numeric_core.size() && a.numeric_core == b.numeric_core;
  }
};

struct Agent {
  std::string id;
  Genome genome;
};

enum class Locus { Template, Policy, Bio, None };
std::string_view to_string(Locus locus);
std::optional<Locus> parse_locus(std::string_view text);

struct LineageRecord {
  std::optional<std::string> parent;
  std::int64_t generation = 0;
  Locus mutated_locus = Locus::None;
};
using Lineage = std::map<std::string, LineageRecord>;

struct EvalItem {
  std::string claim_id;
  Eigen::VectorXd features;        // the false version's features
  Eigen::VectorXd true_features;   // mirrored in the signal component
  std::string true_version;
  std::string false_version;
};

// Fixed seeded matrices of the desk-scale arena.
struct Arena {
  Eigen::MatrixXd P;  // producer shift
  Eigen::MatrixXd W;  // detector weights
  double c = 0.0;
};

Arena make_arena(int m, Stream& stream);

// Pairs with equal norms and an opposite signed component 0 of magnitude signal.
std::vector<EvalItem> make_eval_set(int m, std::int64_t n, double signal, const WorldModelInstance& world,
                                    Stream& stream);

template <typename DerivedF, typename DerivedC>
Eigen::Matrix<typename DerivedF::Scalar, Eigen::Dynamic, 1> produce_features(
    const Eigen::MatrixBase<DerivedF>& item_features, const Eigen::MatrixBase<DerivedC>& core,
    const Eigen::Matrix<typename DerivedF::Scalar, Eigen::Dynamic, Eigen::Dynamic>& P) {
  return item_features + P * core;
}

template <typename DerivedC, typename DerivedF>
typename DerivedC::Scalar detect_score(const Eigen::MatrixBase<DerivedC>& core, const Eigen::MatrixBase<DerivedF>& features,
                                       const Eigen::Matrix<typename DerivedC::Scalar, Eigen::Dynamic, Eigen::Dynamic>& W,
                                       typename DerivedC::Scalar c) {
  return feed::sigmoid((W * core).dot(features) + c);
}

Eigen::VectorXd produce(const Genome& producer, const EvalItem& item, const Arena& arena);
double detect(const Genome& detector, const Eigen::VectorXd& features, const Arena& arena);

struct MatchupResult {
  std::int64_t generation = 0;
  std::map<std::string, std::int64_t> landed;  // producer -> claims with mean score < 0.5
  std::map<std::string, Confusion> confusion;  // detector
  std::map<std::string, CalibrationHistogram> histograms;
  std::map<std::string, double> producer_fitness;
  std::map<std::string, double> detector_fitness;
};

// Produced features for each producer, one row per eval item.
using ProducedClaims = std::map<std::string, std::vector<Eigen::VectorXd>>;

ProducedClaims arena_claims(const std::vector<Agent>& producers, const std::vector<EvalItem>& eval, const Arena& arena);

MatchupResult run_matchup(const std::vector<Agent>& producers, const std::vector<Agent>& detectors,
                          const std::vector<EvalItem>& eval, const ProducedClaims& claims, const Arena& arena,
                          double lambda_cal, std::int64_t generation = 0);

struct MutationRates {
  double template_p = 0.3;
  double policy_p = 0.5;
  double bio_p = 0.2;
  double core_sigma = 0.1;
};

// Seeded token-level edit: replace, insert or delete one word.
std::string token_edit(const std::string& text, const std::vector<std::string>& vocabulary, Stream& stream);
RetrievalPolicy perturb_policy(const RetrievalPolicy& policy, Stream& stream);

// Elite copied unchanged (new id, locus none); the rest sampled
// fitness-proportionally (uniform when every weight is zero) and mutated at one
// locus. New ids are prefix + generation + index.
std::vector<Agent> next_generation(const std::vector<Agent>& population, const std::map<std::string, double>& fitness,
                                   Stream& stream, const MutationRates& rates, const std::vector<std::string>& vocabulary,
                                   std::int64_t generation, const std::string& prefix, Lineage& lineage);

// Index drawn proportionally to max(weight, 0); uniform when all are zero.
std::size_t sample_proportional(const std::vector<double>& weights, Stream& stream);

struct LineageStep {
  std::string agent;
  std::int64_t generation = 0;
  std::optional<std::string> parent;
  Locus mutated_locus = Locus::None;
};

// From the agent back to its generation-0 ancestor. Throws UnknownAgent.
std::vector<LineageStep> trace_lineage(const Lineage& lineage, const std::string& agent);

struct TraceRow {
  std::int64_t generation = 0;
  double producer_mean = 0, producer_max = 0, producer_min = 0;
  double detector_mean = 0, detector_max = 0, detector_min = 0;
  std::string producer_elite, detector_elite;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

TraceRow summarize(const MatchupResult& result, const std::vector<Agent>& producers, const std::vector<Agent>& detectors);

inline constexpr const char* kTraceHeader =
    "generation,producer_mean,producer_max,producer_min,detector_mean,detector_max,detector_min,producer_elite,"
    "detector_elite";
std::string traces_csv(const std::vector<TraceRow>& rows);

struct MultigenParams {
  std::int64_t producers = 20;
  std::int64_t detectors = 20;
  std::int64_t generations = 50;
  int m = 8;
  std::int64_t eval_items = 32;
  double signal = 1.0;
  double lambda_cal = 0.5;
  MutationRates rates;
  std::string content = "arena";  // arena or gateway
};

MultigenParams parse_params(const nlohmann::json& params);

struct Cohort {
  std::int64_t generation = 0;
  std::vector<Agent> producers;
  std::vector<Agent> detectors;
  MatchupResult matchup;
  std::optional<ProducedClaims> produced;  // kept only when content came from the gateway
};

struct MultigenState {
  MultigenParams params;
  Arena arena;
  std::vector<EvalItem> eval;
  std::vector<std::string> vocabulary;
  std::vector<Cohort> cohorts;
  std::vector<Agent> producers;  // current generation
  std::vector<Agent> detectors;
  Lineage lineage;
  std::vector<TraceRow> traces;
  std::int64_t generation = 0;
};

MultigenState init_state(RunContext& ctx, MultigenParams params);

// One matchup on the current cohorts, then (unless it was the last) selection.
void step_generation(MultigenState& state, RunContext& ctx, Stream& producer_stream, Stream& detector_stream);

// Everything needed to replay a run without the gateway.
struct Snapshot {
  MultigenParams params;
  Arena arena;
  std::vector<EvalItem> eval;
  std::vector<Cohort> cohorts;
  Lineage lineage;
  std::vector<TraceRow> traces;
};

Snapshot make_snapshot(const MultigenState& state);

// Single-file SQLite database; tables meta, arena, eval_items, agents,
// matchups, produced, lineage, traces. Vectors are little-endian float64 blobs.
std::string snapshot_bytes(const Snapshot& snapshot);
Snapshot read_snapshot(const std::string& bytes);
void save_snapshot(const Snapshot& snapshot, const std::filesystem::path& path);
Snapshot load_snapshot(const std::filesystem::path& path);

// Recomputes every stored matchup from the snapshot alone; no gateway involved.
std::vector<TraceRow> replay_snapshot(const Snapshot& snapshot);

std::vector<LineageStep> trace_lineage(const Snapshot& snapshot, const std::string& agent);

class MultigenType : public ScenarioType {
 public:
  MultigenType(RunContext& ctx, MultigenParams params);

  std::vector<ActionSpec> actions() const override;
  Step schedule(RunContext& ctx) override;
  nlohmann::json metrics(const RunContext& ctx) const override;
  std::vector<Artifact> surfaces(const RunContext& ctx) const override;

  const MultigenState& state() const noexcept { return *state_; }

 private:
  std::unique_ptr<MultigenState> state_;
  Stream producer_stream_;
  Stream detector_stream_;
};

void register_type(TypeRegistry& registry);

}  // namespace irsim::multigen

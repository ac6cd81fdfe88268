#include <cmath>
#include <set>

#include "doctest.h"
#include "irsim/multigen.hpp"
#include "support.hpp"

using namespace irsim;
using namespace irsim::multigen;
using nlohmann::json;

namespace {

Agent agent(const std::string& id, Eigen::VectorXd core) {
  return {id, {"state the claim plainly", {}, "a careful writer", std::move(core)}};
}

// Identity detector weights; false items carry +1 in component 0, true items -1.
Arena axis_arena(int m, double c) {
  return {Eigen::MatrixXd::Identity(m, m), Eigen::MatrixXd::Identity(m, m), c};
}

std::vector<EvalItem> axis_items(int m, int n) {
  std::vector<EvalItem> items;
  for (int i = 0; i < n; ++i) {
    EvalItem it;
    it.claim_id = "c" + std::to_string(i);
    it.features = Eigen::VectorXd::Zero(m);
    it.features[0] = 1.0;
    it.true_features = -it.features;
    it.true_version = "true";
    it.false_version = "false";
    items.push_back(it);
  }
  return items;
}

std::unique_ptr<RunContext> make_ctx(std::uint64_t seed) {
  auto world = testing_support::small_world(
      {"misinformation spreads when claims sound plausible and detectors are poorly calibrated",
       "audits pair true and false versions of the same claim for evaluation"});
  return std::make_unique<RunContext>(json::object(), seed, std::move(world),
                                      std::make_unique<LlmGateway>(ScriptedMode{seed}));
}

MultigenState run_to_end(RunContext& ctx, MultigenType& type) {
  while (!std::holds_alternative<End>(type.schedule(ctx))) {
  }
  return type.state();
}

}  // namespace

TEST_CASE("zero core leaves item features unchanged") {
  Stream s(1);
  const Arena arena = make_arena(6, s);
  const auto items = make_eval_set(6, 4, 1.0, WorldModelInstance{}, s);
  const Agent a = agent("P", Eigen::VectorXd::Zero(6));
  for (const auto& it : items) CHECK(produce(a.genome, it, arena) == it.features);
}

TEST_CASE("eval pairs are plausibility matched") {
  Stream s(2);
  const auto items = make_eval_set(8, 20, 1.5, WorldModelInstance{}, s);
  for (const auto& it : items) {
    CHECK(std::abs(it.features.norm() - it.true_features.norm()) < 1e-12);
    CHECK(it.features[0] == doctest::Approx(1.5));
    CHECK(it.true_features[0] == doctest::Approx(-1.5));
    CHECK(it.features.tail(7) == it.true_features.tail(7));
    CHECK_FALSE(it.true_version.empty());
    CHECK_FALSE(it.false_version.empty());
  }
}

TEST_CASE("equal genomes give equal outputs") {
  Stream s(3);
  const Arena arena = make_arena(5, s);
  const auto items = make_eval_set(5, 3, 1.0, WorldModelInstance{}, s);
  Eigen::VectorXd core(5);
  core << 0.1, -0.2, 0.3, 0.0, 1.0;
  const Agent a = agent("A", core), b = agent("B", core);
  for (const auto& it : items) {
    CHECK(produce(a.genome, it, arena) == produce(b.genome, it, arena));
    CHECK(detect(a.genome, it.features, arena) == detect(b.genome, it.features, arena));
  }
}

TEST_CASE("zero detector weights give sigmoid of the intercept") {
  Stream s(4);
  const Arena arena = make_arena(4, s);
  const Agent d = agent("D", Eigen::VectorXd::Zero(4));
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd f(4);
    for (int j = 0; j < 4; ++j) f[j] = s.normal();
    CHECK(detect(d.genome, f, arena) == feed::sigmoid(arena.c));
  }
}

TEST_CASE("scaling the aligned feature never lowers the score") {
  Stream s(5);
  const Arena arena = make_arena(6, s);
  Eigen::VectorXd core(6);
  for (int j = 0; j < 6; ++j) core[j] = s.normal();
  const Agent d = agent("D", core);
  const Eigen::VectorXd w = arena.W * core;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(6);
  double prev = -1;
  for (int k = 0; k <= 20; ++k) {
    f = w * (0.1 * k);
    const double score = detect(d.genome, f, arena);
    CHECK(score >= prev);
    prev = score;
  }
}

TEST_CASE("a detector just under one half rejects nothing") {
  const int m = 3;
  const Arena arena = axis_arena(m, -1e-3);
  const auto items = axis_items(m, 6);
  const std::vector<Agent> producers = {agent("P0", Eigen::VectorXd::Zero(m))};
  const std::vector<Agent> detectors = {agent("D0", Eigen::VectorXd::Zero(m))};
  const auto r = run_matchup(producers, detectors, items, arena_claims(producers, items, arena), arena, 0.5);
  const auto& c = r.confusion.at("D0");
  CHECK(c.tp == 0);
  CHECK(c.fn == 6);
  CHECK(c.tn == 6);
  CHECK(c.fp == 0);
  CHECK(balanced_accuracy(c) == 0.5);
  CHECK(r.producer_fitness.at("P0") == 1.0);
  CHECK(r.landed.at("P0") == 6);
}

TEST_CASE("claims that never get under one half do not land") {
  const int m = 3;
  const Arena arena = axis_arena(m, 1.0);
  const auto items = axis_items(m, 5);
  const std::vector<Agent> producers = {agent("P0", Eigen::VectorXd::Zero(m)), agent("P1", Eigen::VectorXd::Zero(m))};
  const std::vector<Agent> detectors = {agent("D0", Eigen::VectorXd::Zero(m))};
  const auto r = run_matchup(producers, detectors, items, arena_claims(producers, items, arena), arena, 0.5);
  CHECK(r.producer_fitness.at("P0") == 0.0);
  CHECK(r.producer_fitness.at("P1") == 0.0);
}

TEST_CASE("a certain and correct detector has fitness one") {
  const int m = 3;
  const Arena arena = axis_arena(m, 0.0);
  const auto items = axis_items(m, 8);
  Eigen::VectorXd core = Eigen::VectorXd::Zero(m);
  core[0] = 1000.0;
  const std::vector<Agent> producers = {agent("P0", Eigen::VectorXd::Zero(m))};
  const std::vector<Agent> detectors = {agent("D0", core)};
  const auto r = run_matchup(producers, detectors, items, arena_claims(producers, items, arena), arena, 0.5);
  CHECK(r.detector_fitness.at("D0") == 1.0);
  CHECK(r.producer_fitness.at("P0") == 0.0);
  CHECK_THROWS_AS(run_matchup({}, detectors, items, {}, arena, 0.5), Error);
}

TEST_CASE("matchup counts match the population sizes") {
  Stream s(6);
  const Arena arena = make_arena(4, s);
  const auto items = make_eval_set(4, 7, 1.0, WorldModelInstance{}, s);
  std::vector<Agent> ps, ds;
  for (int i = 0; i < 3; ++i) ps.push_back(agent("P" + std::to_string(i), Eigen::VectorXd::Random(4)));
  for (int i = 0; i < 4; ++i) ds.push_back(agent("D" + std::to_string(i), Eigen::VectorXd::Random(4)));
  const auto r = run_matchup(ps, ds, items, arena_claims(ps, items, arena), arena, 0.5);
  for (const auto& [id, c] : r.confusion) {
    CHECK(c.tp + c.fn == 3 * 7);
    CHECK(c.tn + c.fp == 7);
  }
  for (const auto& [id, f] : r.producer_fitness) CHECK((f >= 0.0 && f <= 1.0));
  for (const auto& [id, f] : r.detector_fitness) CHECK((f >= -0.5 && f <= 1.0));
}

TEST_CASE("all-zero fitness samples parents uniformly") {
  const std::size_t n = 20;
  const std::vector<double> zero(n, 0.0);
  Stream s(7);
  const int draws = 20000;
  std::vector<double> counts(n, 0.0);
  for (int i = 0; i < draws; ++i) counts[sample_proportional(zero, s)] += 1;
  double chi2 = 0;
  const double expected = static_cast<double>(draws) / n;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 99.9th percentile of chi-square with 19 degrees of freedom.
  CHECK(chi2 < 43.82);
}

TEST_CASE("proportional sampling follows the weights") {
  const std::vector<double> w = {1.0, 0.0, 3.0};
  Stream s(8);
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 40000; ++i) counts[sample_proportional(w, s)]++;
  CHECK(counts[1] == 0);
  CHECK(std::abs(counts[2] / 40000.0 - 0.75) < 0.01);
}

TEST_CASE("selection keeps the size, copies the elite and records lineage") {
  Stream s(9);
  std::vector<Agent> pop;
  std::map<std::string, double> fit;
  Lineage lineage;
  for (int i = 0; i < 6; ++i) {
    pop.push_back(agent("P000-" + std::to_string(i), Eigen::VectorXd::Random(4)));
    fit[pop.back().id] = 0.1 * i;
    lineage[pop.back().id] = {std::nullopt, 0, Locus::None};
  }
  const auto next = next_generation(pop, fit, s, MutationRates{}, {"alpha", "beta"}, 1, "P", lineage);
  CHECK(next.size() == pop.size());
  CHECK(next[0].genome == pop[5].genome);
  CHECK(lineage.at(next[0].id).parent == pop[5].id);
  CHECK(lineage.at(next[0].id).mutated_locus == Locus::None);
  for (std::size_t i = 1; i < next.size(); ++i) {
    const auto& rec = lineage.at(next[i].id);
    CHECK(rec.generation == 1);
    CHECK(rec.mutated_locus != Locus::None);
    REQUIRE(rec.parent.has_value());
    const auto parent = std::find_if(pop.begin(), pop.end(), [&](const Agent& a) { return a.id == *rec.parent; });
    REQUIRE(parent != pop.end());
    // Exactly the chosen locus differs among the text and policy fields.
    const int changed = (next[i].genome.template_text != parent->genome.template_text) +
                        (next[i].genome.policy != parent->genome.policy) + (next[i].genome.bio != parent->genome.bio);
    CHECK(changed <= 1);
    CHECK((next[i].genome.policy.lambda >= kLambdaMin && next[i].genome.policy.lambda <= kLambdaMax));
  }
  CHECK_THROWS_AS(next_generation({pop[0]}, fit, s, MutationRates{}, {"x"}, 1, "P", lineage), Error);
}

TEST_CASE("lineage tracing") {
  Lineage l;
  l["a"] = {std::nullopt, 0, Locus::None};
  l["b"] = {std::string("a"), 1, Locus::Bio};
  l["c"] = {std::string("b"), 2, Locus::Template};
  CHECK(trace_lineage(l, "a").size() == 1);
  const auto chain = trace_lineage(l, "c");
  REQUIRE(chain.size() == 3);
  CHECK(chain.back().agent == "a");
  CHECK(chain.front().mutated_locus == Locus::Template);
  CHECK_THROWS_AS(trace_lineage(l, "zzz"), Error);
  l["x"] = {std::string("y"), 3, Locus::Bio};
  l["y"] = {std::string("x"), 2, Locus::Bio};
  CHECK_THROWS_AS(trace_lineage(l, "x"), Error);
}

TEST_CASE("full run: constant sizes, elitism, lineage, snapshot replay") {
  auto ctx = make_ctx(11);
  MultigenParams params;
  params.producers = 6;
  params.detectors = 5;
  params.generations = 12;
  params.eval_items = 10;
  MultigenType type(*ctx, params);
  const auto state = run_to_end(*ctx, type);
  REQUIRE(state.cohorts.size() == 12);
  CHECK(state.traces.size() == 12);
  CHECK(ctx->gateway().log().entries.empty());
  for (std::size_t g = 0; g < state.cohorts.size(); ++g) {
    CHECK(state.cohorts[g].producers.size() == 6);
    CHECK(state.cohorts[g].detectors.size() == 5);
    if (g + 1 < state.cohorts.size()) {
      const auto& c = state.cohorts[g];
      const auto best = std::max_element(c.matchup.producer_fitness.begin(), c.matchup.producer_fitness.end(),
                                         [](const auto& a, const auto& b) { return a.second < b.second; });
      const auto& elite = *std::find_if(c.producers.begin(), c.producers.end(),
                                        [&](const Agent& a) { return a.id == state.traces[g].producer_elite; });
      CHECK(c.matchup.producer_fitness.at(elite.id) == best->second);
      CHECK(state.cohorts[g + 1].producers[0].genome == elite.genome);
    }
  }
  for (const auto& a : state.cohorts.back().producers) {
    const auto chain = trace_lineage(state.lineage, a.id);
    CHECK(chain.back().generation == 0);
    CHECK(chain.size() <= 12);
  }

  const Snapshot snap = make_snapshot(state);
  const std::string bytes = snapshot_bytes(snap);
  const Snapshot back = read_snapshot(bytes);
  CHECK(replay_snapshot(back) == state.traces);
  CHECK(back.traces == state.traces);
  CHECK(snapshot_bytes(back) == bytes);
  CHECK(trace_lineage(back, state.cohorts.back().detectors[2].id).back().generation == 0);
  CHECK(traces_csv(state.traces).rfind(kTraceHeader, 0) == 0);
}

TEST_CASE("one generation snapshot holds just the initial cohort") {
  auto ctx = make_ctx(12);
  MultigenParams params;
  params.producers = 3;
  params.detectors = 3;
  params.generations = 1;
  MultigenType type(*ctx, params);
  const auto state = run_to_end(*ctx, type);
  const Snapshot snap = read_snapshot(snapshot_bytes(make_snapshot(state)));
  REQUIRE(snap.cohorts.size() == 1);
  CHECK(snap.cohorts[0].generation == 0);
  CHECK(snap.cohorts[0].producers.size() == 3);
  CHECK(snap.lineage.size() == 6);
}

TEST_CASE("gateway content is logged and replays from the snapshot alone") {
  auto ctx = make_ctx(13);
  MultigenParams params;
  params.producers = 3;
  params.detectors = 2;
  params.generations = 3;
  params.eval_items = 4;
  params.content = "gateway";
  MultigenType type(*ctx, params);
  const auto state = run_to_end(*ctx, type);
  const auto& log = ctx->gateway().log().entries;
  REQUIRE_FALSE(log.empty());
  for (const auto& e : log) CHECK(e.label == "multigen.produce");
  CHECK(log.size() == 3u * 3u * 4u);
  const auto calls_before = log.size();
  CHECK(replay_snapshot(read_snapshot(snapshot_bytes(make_snapshot(state)))) == state.traces);
  CHECK(ctx->gateway().log().entries.size() == calls_before);
}

TEST_CASE("param validation") {
  CHECK_THROWS_AS(parse_params({{"producers", 1}}), Error);
  CHECK_THROWS_AS(parse_params({{"content", "other"}}), Error);
  CHECK(parse_params(json::object()).generations == 50);
}

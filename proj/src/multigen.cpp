#include "irsim/multigen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <sqlite3.h>

#include <cstring>

#include "irsim/text.hpp"

namespace irsim::multigen {

using nlohmann::json;

namespace {

const std::vector<std::string> kTemplates = {
    "Write a short post asserting: {claim}. Draw on: {evidence}",
    "As a concerned citizen, explain why {claim}. Cite: {evidence}",
    "Summarize the story that {claim}, quoting {evidence}",
    "Report, in a neutral newsroom tone, that {claim}. Background: {evidence}",
};

const std::vector<std::string> kBios = {
    "A regional news aggregator account with a large following.",
    "A self-described independent researcher who posts long threads.",
    "A fact-checking desk that reviews viral claims daily.",
    "A lifestyle influencer who occasionally posts about current events.",
};

const std::vector<std::string> kBaseVocabulary = {"urgent", "report", "sources", "officials", "confirmed",
                                                   "leaked", "study",  "experts", "breaking",  "analysis",
                                                   "claim",  "viral",  "verify",  "evidence",  "context"};

std::string agent_id(const std::string& prefix, std::int64_t generation, std::size_t index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%03lld-%02zu", prefix.c_str(), static_cast<long long>(generation), index);
  return buf;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json trace_json(const TraceRow& t) {
  return {{"generation", t.generation},     {"producer_mean", t.producer_mean}, {"producer_max", t.producer_max},
          {"producer_min", t.producer_min}, {"detector_mean", t.detector_mean}, {"detector_max", t.detector_max},
          {"detector_min", t.detector_min}, {"producer_elite", t.producer_elite},
          {"detector_elite", t.detector_elite}};
}

std::string elite_of(const std::map<std::string, double>& fitness, const std::vector<Agent>& population) {
  const Agent* best = &population.front();
  for (const auto& a : population) {
    if (fitness.at(a.id) > fitness.at(best->id)) best = &a;
  }
  return best->id;
}

std::string render(const std::string& tmpl, const std::string& claim, const std::string& evidence) {
  std::string out = tmpl;
  for (auto [key, value] : {std::pair<std::string, std::string>{"{claim}", claim}, {"{evidence}", evidence}}) {
    for (auto at = out.find(key); at != std::string::npos; at = out.find(key, at + value.size())) {
      out.replace(at, key.size(), value);
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(Locus locus) {
  switch (locus) {
    case Locus::Template: return "template";
    case Locus::Policy: return "policy";
    case Locus::Bio: return "bio";
    case Locus::None: return "none";
  }
  return "?";
}

std::optional<Locus> parse_locus(std::string_view text) {
  for (auto l : {Locus::Template, Locus::Policy, Locus::Bio, Locus::None}) {
    if (to_string(l) == text) return l;
  }
  return std::nullopt;
}

Arena make_arena(int m, Stream& stream) {
  Arena a;
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  a.P.resize(m, m);
  a.W.resize(m, m);
  for (Eigen::Index i = 0; i < a.P.size(); ++i) a.P.data()[i] = stream.normal() * scale;
  for (Eigen::Index i = 0; i < a.W.size(); ++i) a.W.data()[i] = stream.normal() * scale;
  a.c = stream.normal(0.0, 0.1);
  return a;
}

std::vector<EvalItem> make_eval_set(int m, std::int64_t n, double signal, const WorldModelInstance& world,
                                    Stream& stream) {
  const auto chunks = world.all_chunks();
  std::vector<EvalItem> out;
  for (std::int64_t i = 0; i < n; ++i) {
    EvalItem item;
    char buf[32];
    std::snprintf(buf, sizeof buf, "claim-%02lld", static_cast<long long>(i));
    item.claim_id = buf;
    item.features.resize(m);
    for (int d = 1; d < m; ++d) item.features[d] = stream.normal();
    item.features[0] = signal;
    item.true_features = item.features;
    item.true_features[0] = -signal;
    std::string sentence;
    if (!chunks.empty()) {
      auto words = split_words(chunks[static_cast<std::size_t>(i) % chunks.size()]->text);
      if (words.size() > 14) words.resize(14);
      sentence = join(words, " ");
    } else {
      sentence = "claim " + std::to_string(i) + " holds as reported";
    }
    item.true_version = sentence;
    item.false_version = "It is not true that " + sentence;
    out.push_back(std::move(item));
  }
  return out;
}

Eigen::VectorXd produce(const Genome& producer, const EvalItem& item, const Arena& arena) {
  return produce_features(item.features, producer.numeric_core, arena.P);
}

double detect(const Genome& detector, const Eigen::VectorXd& features, const Arena& arena) {
  return detect_score(detector.numeric_core, features, arena.W, arena.c);
}

ProducedClaims arena_claims(const std::vector<Agent>& producers, const std::vector<EvalItem>& eval, const Arena& arena) {
  ProducedClaims out;
  for (const auto& p : producers) {
    auto& rows = out[p.id];
    for (const auto& item : eval) rows.push_back(produce(p.genome, item, arena));
  }
  return out;
}

MatchupResult run_matchup(const std::vector<Agent>& producers, const std::vector<Agent>& detectors,
                          const std::vector<EvalItem>& eval, const ProducedClaims& claims, const Arena& arena,
                          double lambda_cal, std::int64_t generation) {
  if (producers.empty() || detectors.empty()) {
    throw Error(ErrorCode::EmptyPopulation, "a matchup needs at least one producer and one detector");
  }
  MatchupResult r;
  r.generation = generation;
  for (const auto& d : detectors) {
    r.confusion[d.id];
    r.histograms[d.id];
  }
  for (const auto& p : producers) {
    std::int64_t landed = 0;
    const auto& rows = claims.at(p.id);
    for (std::size_t i = 0; i < eval.size(); ++i) {
      double sum = 0.0;
      for (const auto& d : detectors) {
        const double s = detect(d.genome, rows[i], arena);
        sum += s;
        auto& c = r.confusion[d.id];
        (s >= 0.5 ? c.tp : c.fn) += 1;
        r.histograms[d.id].add(s, true);
      }
      if (sum / static_cast<double>(detectors.size()) < 0.5) ++landed;
    }
    r.landed[p.id] = landed;
    r.producer_fitness[p.id] = eval.empty() ? 0.0 : static_cast<double>(landed) / static_cast<double>(eval.size());
  }
  for (const auto& d : detectors) {
    auto& c = r.confusion[d.id];
    for (const auto& item : eval) {
      const double s = detect(d.genome, item.true_features, arena);
      (s < 0.5 ? c.tn : c.fp) += 1;
      r.histograms[d.id].add(s, false);
    }
    r.detector_fitness[d.id] = balanced_accuracy(c) - lambda_cal * expected_calibration_error(r.histograms[d.id]);
  }
  return r;
}

std::string token_edit(const std::string& text, const std::vector<std::string>& vocabulary, Stream& stream) {
  auto words = split_words(text);
  const std::string& fresh = vocabulary[stream.below(vocabulary.size())];
  const auto op = words.size() > 1 ? stream.below(3) : stream.below(2);
  if (words.empty()) {
    words.push_back(fresh);
  } else if (op == 0) {
    words[stream.below(words.size())] = fresh;
  } else if (op == 1) {
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(stream.below(words.size() + 1)), fresh);
  } else {
    words.erase(words.begin() + static_cast<std::ptrdiff_t>(stream.below(words.size())));
  }
  return join(words, " ");
}

RetrievalPolicy perturb_policy(const RetrievalPolicy& policy, Stream& stream) {
  RetrievalPolicy p = policy;
  switch (stream.below(3)) {
    case 0: p.lambda = std::clamp(p.lambda + stream.normal(0.0, 0.1), kLambdaMin, kLambdaMax); break;
    case 1:
      p.top_k = std::clamp<std::int64_t>(std::llround(static_cast<double>(p.top_k) + stream.normal(0.0, 2.0)), kTopKMin,
                                         kTopKMax);
      break;
    default:
      p.expansion_terms = std::clamp<std::int64_t>(
          std::llround(static_cast<double>(p.expansion_terms) + stream.normal(0.0, 1.0)), kExpansionMin, kExpansionMax);
      break;
  }
  return p;
}

std::size_t sample_proportional(const std::vector<double>& weights, Stream& stream) {
  double total = 0.0;
  for (double w : weights) total += std::max(0.0, w);
  if (!(total > 0.0)) return static_cast<std::size_t>(stream.below(weights.size()));
  const double r = stream.uniform() * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = i;
    if (r < acc) return i;
  }
  return last;
}

std::vector<Agent> next_generation(const std::vector<Agent>& population, const std::map<std::string, double>& fitness,
                                   Stream& stream, const MutationRates& rates, const std::vector<std::string>& vocabulary,
                                   std::int64_t generation, const std::string& prefix, Lineage& lineage) {
  if (population.size() < 2) {
    throw Error(ErrorCode::PopulationTooSmall,
                "selection needs at least 2 agents, got " + std::to_string(population.size()));
  }
  std::vector<double> weights;
  for (const auto& a : population) weights.push_back(fitness.at(a.id));
  std::vector<Agent> next;
  const std::string elite = elite_of(fitness, population);
  const Agent& best = *std::find_if(population.begin(), population.end(), [&](const Agent& a) { return a.id == elite; });
  next.push_back({agent_id(prefix, generation, 0), best.genome});
  lineage[next.back().id] = {best.id, generation, Locus::None};

  for (std::size_t i = 1; i < population.size(); ++i) {
    const Agent& parent = population[sample_proportional(weights, stream)];
    Agent child{agent_id(prefix, generation, i), parent.genome};
    const double r = stream.uniform() * (rates.template_p + rates.policy_p + rates.bio_p);
    Locus locus;
    if (r < rates.template_p) {
      locus = Locus::Template;
      child.genome.template_text = token_edit(child.genome.template_text, vocabulary, stream);
    } else if (r < rates.template_p + rates.policy_p) {
      locus = Locus::Policy;
      child.genome.policy = perturb_policy(child.genome.policy, stream);
    } else {
      locus = Locus::Bio;
      child.genome.bio = token_edit(child.genome.bio, vocabulary, stream);
    }
    for (Eigen::Index d = 0; d < child.genome.numeric_core.size(); ++d) {
      child.genome.numeric_core[d] += stream.normal(0.0, rates.core_sigma);
    }
    lineage[child.id] = {parent.id, generation, locus};
    next.push_back(std::move(child));
  }
  return next;
}

std::vector<LineageStep> trace_lineage(const Lineage& lineage, const std::string& agent) {
  std::vector<LineageStep> chain;
  std::string current = agent;
  for (;;) {
    auto it = lineage.find(current);
    if (it == lineage.end()) {
      throw Error(ErrorCode::UnknownAgent, "no lineage record for '" + current + "'");
    }
    chain.push_back({current, it->second.generation, it->second.parent, it->second.mutated_locus});
    if (!it->second.parent || it->second.generation == 0) break;
    if (chain.size() > lineage.size()) throw Error(ErrorCode::MalformedLog, "lineage cycle at '" + current + "'");
    current = *it->second.parent;
  }
  return chain;
}

TraceRow summarize(const MatchupResult& result, const std::vector<Agent>& producers, const std::vector<Agent>& detectors) {
  TraceRow t;
  t.generation = result.generation;
  auto stats = [](const std::map<std::string, double>& f, double& mean, double& mx, double& mn) {
    mean = 0.0;
    mx = -1e300;
    mn = 1e300;
    for (const auto& [id, v] : f) {
      mean += v;
      mx = std::max(mx, v);
      mn = std::min(mn, v);
    }
    mean /= static_cast<double>(f.size());
  };
  stats(result.producer_fitness, t.producer_mean, t.producer_max, t.producer_min);
  stats(result.detector_fitness, t.detector_mean, t.detector_max, t.detector_min);
  t.producer_elite = elite_of(result.producer_fitness, producers);
  t.detector_elite = elite_of(result.detector_fitness, detectors);
  return t;
}

std::string traces_csv(const std::vector<TraceRow>& rows) {
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& t : rows) {
    out += std::to_string(t.generation) + "," + fmt(t.producer_mean) + "," + fmt(t.producer_max) + "," +
           fmt(t.producer_min) + "," + fmt(t.detector_mean) + "," + fmt(t.detector_max) + "," + fmt(t.detector_min) +
           "," + t.producer_elite + "," + t.detector_elite + "\n";
  }
  return out;
}

MultigenParams parse_params(const json& j) {
  MultigenParams p;
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
  p.producers = j.value("producers", p.producers);
  p.detectors = j.value("detectors", p.detectors);
  if (p.producers < 2 || p.detectors < 2) fail("'producers' and 'detectors' must each be >= 2");
  p.generations = j.value("generations", p.generations);
  if (p.generations < 1) fail("'generations' must be >= 1");
  p.m = j.value("m", p.m);
  if (p.m < 1) fail("'m' must be >= 1");
  p.eval_items = j.value("eval_items", p.eval_items);
  if (p.eval_items < 1) fail("'eval_items' must be >= 1");
  p.signal = j.value("signal", p.signal);
  p.lambda_cal = j.value("lambda_cal", p.lambda_cal);
  if (p.lambda_cal < 0) fail("'lambda_cal' must be >= 0");
  if (j.contains("mutation")) {
    const auto& m = j["mutation"];
    p.rates.template_p = m.value("template", p.rates.template_p);
    p.rates.policy_p = m.value("policy", p.rates.policy_p);
    p.rates.bio_p = m.value("bio", p.rates.bio_p);
    p.rates.core_sigma = m.value("core_sigma", p.rates.core_sigma);
    if (p.rates.template_p < 0 || p.rates.policy_p < 0 || p.rates.bio_p < 0 ||
        p.rates.template_p + p.rates.policy_p + p.rates.bio_p <= 0) {
      fail("mutation locus probabilities must be non-negative with a positive sum");
    }
    if (p.rates.core_sigma < 0) fail("'core_sigma' must be >= 0");
  }
  p.content = j.value("content", p.content);
  if (p.content != "arena" && p.content != "gateway") fail("'content' must be \"arena\" or \"gateway\"");
  return p;
}

MultigenState init_state(RunContext& ctx, MultigenParams params) {
  MultigenState s;
  s.params = std::move(params);
  Stream arena = ctx.random().stream("multigen", "arena");
  s.arena = make_arena(s.params.m, arena);
  Stream eval = ctx.random().stream("multigen", "eval");
  s.eval = make_eval_set(s.params.m, s.params.eval_items, s.params.signal, ctx.world(), eval);

  std::map<std::string, std::size_t> freq;
  for (const Chunk* c : ctx.world().all_chunks()) {
    for (const auto& t : tokenize(c->text)) {
      if (t.size() >= 5) ++freq[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  s.vocabulary = kBaseVocabulary;
  for (std::size_t i = 0; i < ranked.size() && i < 200; ++i) s.vocabulary.push_back(ranked[i].first);

  std::vector<std::string> bios;
  for (const auto& p : ctx.roster()) bios.push_back(p.bio);
  if (bios.empty()) bios = kBios;
  Stream init = ctx.random().stream("multigen", "init");
  auto make = [&](const std::string& prefix, std::int64_t n) {
    std::vector<Agent> pop;
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
      Agent a;
      a.id = agent_id(prefix, 0, i);
      a.genome.template_text = kTemplates[init.below(kTemplates.size())];
      a.genome.bio = bios[i % bios.size()];
      a.genome.policy.lambda = init.uniform();
      a.genome.policy.top_k = static_cast<std::int64_t>(1 + init.below(10));
      a.genome.policy.expansion_terms = static_cast<std::int64_t>(init.below(4));
      a.genome.numeric_core.resize(s.params.m);
      for (int d = 0; d < s.params.m; ++d) a.genome.numeric_core[d] = init.normal(0.0, 0.5);
      s.lineage[a.id] = {std::nullopt, 0, Locus::None};
      pop.push_back(std::move(a));
    }
    return pop;
  };
  s.producers = make("P", s.params.producers);
  s.detectors = make("D", s.params.detectors);
  return s;
}

namespace {

ProducedClaims gateway_claims(const MultigenState& s, RunContext& ctx) {
  ProducedClaims out;
  Stream q = ctx.random().stream("multigen", "content-projection");
  Eigen::MatrixXd Q(s.params.m, ctx.embedder().dim());
  for (Eigen::Index i = 0; i < Q.size(); ++i) Q.data()[i] = q.normal() * 0.1;
  for (const auto& p : s.producers) {
    auto& rows = out[p.id];
    HybridConfig cfg = ctx.hybrid();
    cfg.lambda = p.genome.policy.lambda;
    cfg.top_k = static_cast<std::size_t>(p.genome.policy.top_k);
    for (const auto& item : s.eval) {
      std::string query = item.false_version;
      auto bio_terms = tokenize(p.genome.bio);
      for (std::size_t t = 0; t < bio_terms.size() && t < static_cast<std::size_t>(p.genome.policy.expansion_terms); ++t) {
        query += " " + bio_terms[t];
      }
      std::string evidence;
      if (!ctx.world().all_chunks().empty()) {
        for (const auto& hit : hybrid_search(ctx.world(), query, cfg, ctx.embedder())) {
          auto words = split_words(hit.chunk.text);
          if (words.size() > 20) words.resize(20);
          evidence += "[" + hit.chunk.id + "] " + join(words, " ") + " ";
        }
      }
      const std::string prompt = render(p.genome.template_text, item.false_version, evidence);
      const ChatResponse resp =
          ctx.gateway().complete("multigen.produce", ctx.make_request("You write persuasive social posts. " + p.genome.bio, prompt, 200));
      rows.push_back(produce(p.genome, item, s.arena) + Q * ctx.embedder().embed(resp.text));
    }
  }
  return out;
}

}  // namespace

void step_generation(MultigenState& s, RunContext& ctx, Stream& producer_stream, Stream& detector_stream) {
  Cohort cohort;
  cohort.generation = s.generation;
  cohort.producers = s.producers;
  cohort.detectors = s.detectors;
  ProducedClaims claims;
  if (s.params.content == "gateway") {
    claims = gateway_claims(s, ctx);
    cohort.produced = claims;
  } else {
    claims = arena_claims(s.producers, s.eval, s.arena);
  }
  cohort.matchup = run_matchup(s.producers, s.detectors, s.eval, claims, s.arena, s.params.lambda_cal, s.generation);
  s.traces.push_back(summarize(cohort.matchup, s.producers, s.detectors));
  const bool last = s.generation + 1 >= s.params.generations;
  if (!last) {
    s.producers = next_generation(s.producers, cohort.matchup.producer_fitness, producer_stream, s.params.rates,
                                  s.vocabulary, s.generation + 1, "P", s.lineage);
    s.detectors = next_generation(s.detectors, cohort.matchup.detector_fitness, detector_stream, s.params.rates,
                                  s.vocabulary, s.generation + 1, "D", s.lineage);
  }
  s.cohorts.push_back(std::move(cohort));
  ++s.generation;
}

namespace {

class Db {
 public:
  Db() {
    if (sqlite3_open(":memory:", &db_) != SQLITE_OK) fail("open");
  }
  ~Db() { sqlite3_close(db_); }
  Db(const Db&) = delete;
  Db& operator=(const Db&) = delete;

  sqlite3* get() const { return db_; }

  void exec(const char* sql) {
    char* msg = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &msg) != SQLITE_OK) {
      const std::string m = msg ? msg : "?";
      sqlite3_free(msg);
      throw Error(ErrorCode::IoError, "snapshot: " + m);
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::IoError, "snapshot " + what + ": " + (db_ ? sqlite3_errmsg(db_) : "no database"));
  }

 private:
  sqlite3* db_ = nullptr;
};

class Stmt {
 public:
  Stmt(Db& db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db.get(), sql, -1, &stmt_, nullptr) != SQLITE_OK) db.fail("prepare");
  }
  ~Stmt() { sqlite3_finalize(stmt_); }
  Stmt(const Stmt&) = delete;
  Stmt& operator=(const Stmt&) = delete;

  Stmt& bind(int i, std::int64_t v) {
    sqlite3_bind_int64(stmt_, i, v);
    return *this;
  }
  Stmt& bind(int i, double v) {
    sqlite3_bind_double(stmt_, i, v);
    return *this;
  }
  Stmt& bind(int i, const std::string& v) {
    sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Stmt& bind_blob(int i, const void* data, std::size_t n) {
    sqlite3_bind_blob(stmt_, i, n ? data : "", static_cast<int>(n), SQLITE_TRANSIENT);
    return *this;
  }
  Stmt& bind_null(int i) {
    sqlite3_bind_null(stmt_, i);
    return *this;
  }
  void run() {
    if (sqlite3_step(stmt_) != SQLITE_DONE) db_.fail("insert");
    sqlite3_reset(stmt_);
    sqlite3_clear_bindings(stmt_);
  }
  bool next() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc != SQLITE_DONE) db_.fail("query");
    return false;
  }
  std::int64_t i64(int c) const { return sqlite3_column_int64(stmt_, c); }
  double f64(int c) const { return sqlite3_column_double(stmt_, c); }
  bool is_null(int c) const { return sqlite3_column_type(stmt_, c) == SQLITE_NULL; }
  std::string text(int c) const {
    const auto* p = sqlite3_column_text(stmt_, c);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, c)))
             : std::string();
  }
  std::string blob(int c) const {
    const auto* p = static_cast<const char*>(sqlite3_column_blob(stmt_, c));
    return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, c))) : std::string();
  }

 private:
  Db& db_;
  sqlite3_stmt* stmt_ = nullptr;
};

// Little-endian float64 / int64 blobs; the engine only targets little-endian hosts.
template <typename T>
std::string pack(const T* data, std::size_t n) {
  static_assert(sizeof(T) == 8);
  return std::string(reinterpret_cast<const char*>(data), n * 8);
}

template <typename T>
std::vector<T> unpack(const std::string& bytes) {
  std::vector<T> out(bytes.size() / 8);
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), out.size() * 8);
  return out;
}

std::string pack(const Eigen::VectorXd& v) { return pack(v.data(), static_cast<std::size_t>(v.size())); }

Eigen::VectorXd unpack_vector(const std::string& bytes) {
  const auto d = unpack<double>(bytes);
  return Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
}

constexpr const char* kSchema = R"sql(
CREATE TABLE meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE arena (name TEXT PRIMARY KEY, rows INTEGER NOT NULL, cols INTEGER NOT NULL, data BLOB NOT NULL);
CREATE TABLE eval_items (idx INTEGER PRIMARY KEY, claim_id TEXT NOT NULL, features BLOB NOT NULL,
  true_features BLOB NOT NULL, true_version TEXT NOT NULL, false_version TEXT NOT NULL);
CREATE TABLE agents (generation INTEGER NOT NULL, population TEXT NOT NULL, idx INTEGER NOT NULL, id TEXT NOT NULL,
  template TEXT NOT NULL, lambda REAL NOT NULL, top_k INTEGER NOT NULL, expansion_terms INTEGER NOT NULL,
  bio TEXT NOT NULL, numeric_core BLOB NOT NULL, PRIMARY KEY (generation, population, idx));
CREATE TABLE matchups (generation INTEGER NOT NULL, population TEXT NOT NULL, agent TEXT NOT NULL,
  fitness REAL NOT NULL, landed INTEGER, tp INTEGER, fn INTEGER, tn INTEGER, fp INTEGER,
  hist_count BLOB, hist_score_sum BLOB, hist_positives BLOB, PRIMARY KEY (generation, population, agent));
CREATE TABLE produced (generation INTEGER NOT NULL, producer TEXT NOT NULL, idx INTEGER NOT NULL,
  features BLOB NOT NULL, PRIMARY KEY (generation, producer, idx));
CREATE TABLE lineage (agent TEXT PRIMARY KEY, parent TEXT, generation INTEGER NOT NULL, locus TEXT NOT NULL);
CREATE TABLE traces (generation INTEGER PRIMARY KEY, producer_mean REAL, producer_max REAL, producer_min REAL,
  detector_mean REAL, detector_max REAL, detector_min REAL, producer_elite TEXT, detector_elite TEXT);
)sql";

json params_json(const MultigenParams& p) {
  return {{"producers", p.producers},
          {"detectors", p.detectors},
          {"generations", p.generations},
          {"m", p.m},
          {"eval_items", p.eval_items},
          {"signal", p.signal},
          {"lambda_cal", p.lambda_cal},
          {"mutation",
           {{"template", p.rates.template_p},
            {"policy", p.rates.policy_p},
            {"bio", p.rates.bio_p},
            {"core_sigma", p.rates.core_sigma}}},
          {"content", p.content}};
}

void insert_matrix(Db& db, const std::string& name, const Eigen::MatrixXd& m) {
  // Row-major so the blob reads naturally.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = m;
  Stmt st(db, "INSERT INTO arena VALUES (?, ?, ?, ?)");
  const std::string data = pack(r.data(), static_cast<std::size_t>(r.size()));
  st.bind(1, name).bind(2, static_cast<std::int64_t>(m.rows())).bind(3, static_cast<std::int64_t>(m.cols()));
  st.bind_blob(4, data.data(), data.size()).run();
}

}  // namespace

Snapshot make_snapshot(const MultigenState& s) {
  return {s.params, s.arena, s.eval, s.cohorts, s.lineage, s.traces};
}

std::string snapshot_bytes(const Snapshot& snap) {
  Db db;
  db.exec(kSchema);
  db.exec("BEGIN");
  {
    Stmt st(db, "INSERT INTO meta VALUES (?, ?)");
    st.bind(1, std::string("schema")).bind(2, std::string("multigen-snapshot/1")).run();
    st.bind(1, std::string("params")).bind(2, params_json(snap.params).dump()).run();
  }
  insert_matrix(db, "P", snap.arena.P);
  insert_matrix(db, "W", snap.arena.W);
  insert_matrix(db, "c", Eigen::MatrixXd::Constant(1, 1, snap.arena.c));
  {
    Stmt st(db, "INSERT INTO eval_items VALUES (?, ?, ?, ?, ?, ?)");
    for (std::size_t i = 0; i < snap.eval.size(); ++i) {
      const auto& e = snap.eval[i];
      const std::string f = pack(e.features), t = pack(e.true_features);
      st.bind(1, static_cast<std::int64_t>(i)).bind(2, e.claim_id);
      st.bind_blob(3, f.data(), f.size()).bind_blob(4, t.data(), t.size());
      st.bind(5, e.true_version).bind(6, e.false_version).run();
    }
  }
  {
    Stmt agents(db, "INSERT INTO agents VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)");
    Stmt matchups(db, "INSERT INTO matchups VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)");
    Stmt produced(db, "INSERT INTO produced VALUES (?, ?, ?, ?)");
    for (const auto& c : snap.cohorts) {
      for (const auto& [pop, list] : {std::pair<std::string, const std::vector<Agent>*>{"producer", &c.producers},
                                      {"detector", &c.detectors}}) {
        for (std::size_t i = 0; i < list->size(); ++i) {
          const Agent& a = (*list)[i];
          const std::string core = pack(a.genome.numeric_core);
          agents.bind(1, c.generation).bind(2, pop).bind(3, static_cast<std::int64_t>(i)).bind(4, a.id);
          agents.bind(5, a.genome.template_text).bind(6, a.genome.policy.lambda).bind(7, a.genome.policy.top_k);
          agents.bind(8, a.genome.policy.expansion_terms).bind(9, a.genome.bio);
          agents.bind_blob(10, core.data(), core.size()).run();
        }
      }
      for (const auto& [id, f] : c.matchup.producer_fitness) {
        matchups.bind(1, c.generation).bind(2, std::string("producer")).bind(3, id).bind(4, f);
        matchups.bind(5, c.matchup.landed.at(id));
        for (int col = 6; col <= 12; ++col) matchups.bind_null(col);
        matchups.run();
      }
      for (const auto& [id, f] : c.matchup.detector_fitness) {
        const Confusion& k = c.matchup.confusion.at(id);
        const CalibrationHistogram& h = c.matchup.histograms.at(id);
        const std::string hc = pack(h.count.data(), h.count.size());
        const std::string hs = pack(h.score_sum.data(), h.score_sum.size());
        const std::string hp = pack(h.positives.data(), h.positives.size());
        matchups.bind(1, c.generation).bind(2, std::string("detector")).bind(3, id).bind(4, f).bind_null(5);
        matchups.bind(6, k.tp).bind(7, k.fn).bind(8, k.tn).bind(9, k.fp);
        matchups.bind_blob(10, hc.data(), hc.size()).bind_blob(11, hs.data(), hs.size());
        matchups.bind_blob(12, hp.data(), hp.size()).run();
      }
      if (c.produced) {
        for (const auto& [id, rows] : *c.produced) {
          for (std::size_t i = 0; i < rows.size(); ++i) {
            const std::string f = pack(rows[i]);
            produced.bind(1, c.generation).bind(2, id).bind(3, static_cast<std::int64_t>(i));
            produced.bind_blob(4, f.data(), f.size()).run();
          }
        }
      }
    }
  }
  {
    Stmt st(db, "INSERT INTO lineage VALUES (?, ?, ?, ?)");
    for (const auto& [id, r] : snap.lineage) {
      st.bind(1, id);
      if (r.parent) {
        st.bind(2, *r.parent);
      } else {
        st.bind_null(2);
      }
      st.bind(3, r.generation).bind(4, std::string(to_string(r.mutated_locus))).run();
    }
  }
  {
    Stmt st(db, "INSERT INTO traces VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)");
    for (const auto& t : snap.traces) {
      st.bind(1, t.generation).bind(2, t.producer_mean).bind(3, t.producer_max).bind(4, t.producer_min);
      st.bind(5, t.detector_mean).bind(6, t.detector_max).bind(7, t.detector_min);
      st.bind(8, t.producer_elite).bind(9, t.detector_elite).run();
    }
  }
  db.exec("COMMIT");
  sqlite3_int64 size = 0;
  unsigned char* data = sqlite3_serialize(db.get(), "main", &size, 0);
  if (!data) db.fail("serialize");
  std::string bytes(reinterpret_cast<const char*>(data), static_cast<std::size_t>(size));
  sqlite3_free(data);
  return bytes;
}

Snapshot read_snapshot(const std::string& bytes) {
  Db db;
  auto* buf = static_cast<unsigned char*>(sqlite3_malloc64(bytes.size()));
  if (!buf) db.fail("allocate");
  std::memcpy(buf, bytes.data(), bytes.size());
  if (sqlite3_deserialize(db.get(), "main", buf, static_cast<sqlite3_int64>(bytes.size()),
                          static_cast<sqlite3_int64>(bytes.size()),
                          SQLITE_DESERIALIZE_FREEONCLOSE | SQLITE_DESERIALIZE_READONLY) != SQLITE_OK) {
    db.fail("deserialize");
  }
  Snapshot snap;
  try {
    Stmt meta(db, "SELECT value FROM meta WHERE key = 'params'");
    if (!meta.next()) throw Error(ErrorCode::IoError, "snapshot has no params");
    snap.params = parse_params(json::parse(meta.text(0)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("snapshot params: ") + e.what());
  }
  {
    Stmt st(db, "SELECT name, rows, cols, data FROM arena");
    while (st.next()) {
      const auto d = unpack<double>(st.blob(3));
      Eigen::MatrixXd m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          d.data(), static_cast<Eigen::Index>(st.i64(1)), static_cast<Eigen::Index>(st.i64(2)));
      const std::string name = st.text(0);
      if (name == "P") snap.arena.P = m;
      if (name == "W") snap.arena.W = m;
      if (name == "c") snap.arena.c = m(0, 0);
    }
  }
  {
    Stmt st(db, "SELECT claim_id, features, true_features, true_version, false_version FROM eval_items ORDER BY idx");
    while (st.next()) {
      snap.eval.push_back({st.text(0), unpack_vector(st.blob(1)), unpack_vector(st.blob(2)), st.text(3), st.text(4)});
    }
  }
  std::map<std::int64_t, Cohort> cohorts;
  {
    Stmt st(db,
            "SELECT generation, population, id, template, lambda, top_k, expansion_terms, bio, numeric_core FROM agents "
            "ORDER BY generation, population, idx");
    while (st.next()) {
      Cohort& c = cohorts[st.i64(0)];
      c.generation = st.i64(0);
      Agent a;
      a.id = st.text(2);
      a.genome.template_text = st.text(3);
      a.genome.policy = {st.f64(4), st.i64(5), st.i64(6)};
      a.genome.bio = st.text(7);
      a.genome.numeric_core = unpack_vector(st.blob(8));
      (st.text(1) == "producer" ? c.producers : c.detectors).push_back(std::move(a));
    }
  }
  {
    Stmt st(db, "SELECT generation, population, agent, fitness, landed, tp, fn, tn, fp, hist_count, hist_score_sum, "
                "hist_positives FROM matchups ORDER BY generation, population, agent");
    while (st.next()) {
      MatchupResult& m = cohorts[st.i64(0)].matchup;
      m.generation = st.i64(0);
      const std::string id = st.text(2);
      if (st.text(1) == "producer") {
        m.producer_fitness[id] = st.f64(3);
        m.landed[id] = st.i64(4);
      } else {
        m.detector_fitness[id] = st.f64(3);
        m.confusion[id] = {st.i64(5), st.i64(6), st.i64(7), st.i64(8)};
        CalibrationHistogram h;
        const auto hc = unpack<std::int64_t>(st.blob(9));
        const auto hs = unpack<double>(st.blob(10));
        const auto hp = unpack<std::int64_t>(st.blob(11));
        for (int b = 0; b < CalibrationHistogram::kBins && b < static_cast<int>(hc.size()); ++b) {
          h.count[b] = hc[b];
          h.score_sum[b] = hs[b];
          h.positives[b] = hp[b];
        }
        m.histograms[id] = h;
      }
    }
  }
  {
    Stmt st(db, "SELECT generation, producer, features FROM produced ORDER BY generation, producer, idx");
    while (st.next()) {
      Cohort& c = cohorts[st.i64(0)];
      if (!c.produced) c.produced.emplace();
      (*c.produced)[st.text(1)].push_back(unpack_vector(st.blob(2)));
    }
  }
  for (auto& [g, c] : cohorts) snap.cohorts.push_back(std::move(c));
  {
    Stmt st(db, "SELECT agent, parent, generation, locus FROM lineage");
    while (st.next()) {
      LineageRecord r;
      if (!st.is_null(1)) r.parent = st.text(1);
      r.generation = st.i64(2);
      r.mutated_locus = parse_locus(st.text(3)).value_or(Locus::None);
      snap.lineage[st.text(0)] = r;
    }
  }
  {
    Stmt st(db, "SELECT generation, producer_mean, producer_max, producer_min, detector_mean, detector_max, "
                "detector_min, producer_elite, detector_elite FROM traces ORDER BY generation");
    while (st.next()) {
      snap.traces.push_back({st.i64(0), st.f64(1), st.f64(2), st.f64(3), st.f64(4), st.f64(5), st.f64(6), st.text(7),
                             st.text(8)});
    }
  }
  return snap;
}

void save_snapshot(const Snapshot& snapshot, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << snapshot_bytes(snapshot);
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

Snapshot load_snapshot(const std::filesystem::path& path) { return read_snapshot(read_file(path)); }

std::vector<TraceRow> replay_snapshot(const Snapshot& snap) {
  std::vector<TraceRow> rows;
  for (const auto& c : snap.cohorts) {
    const ProducedClaims claims = c.produced ? *c.produced : arena_claims(c.producers, snap.eval, snap.arena);
    const auto result =
        run_matchup(c.producers, c.detectors, snap.eval, claims, snap.arena, snap.params.lambda_cal, c.generation);
    rows.push_back(summarize(result, c.producers, c.detectors));
  }
  return rows;
}

std::vector<LineageStep> trace_lineage(const Snapshot& snapshot, const std::string& agent) {
  return trace_lineage(snapshot.lineage, agent);
}

MultigenType::MultigenType(RunContext& ctx, MultigenParams params)
    : state_(std::make_unique<MultigenState>(init_state(ctx, std::move(params)))),
      producer_stream_(ctx.random().stream("multigen", "selection.producers")),
      detector_stream_(ctx.random().stream("multigen", "selection.detectors")) {
  ctx.gateway().register_behavior("multigen.produce", [](const ChatRequest& req, Stream& draws) {
    auto words = split_words(req.messages.back().content);
    std::string out;
    for (std::size_t i = 0; i < 24 && !words.empty(); ++i) {
      out += (i ? " " : "") + words[draws.below(words.size())];
    }
    return out;
  });
}

std::vector<ActionSpec> MultigenType::actions() const {
  return {{"produce", "Author a claim for an eval item."},
          {"detect", "Score a claim's probability of being false."},
          {"select", "Sample the next generation with elitism and single-locus mutation."}};
}

Step MultigenType::schedule(RunContext& ctx) {
  MultigenState& s = *state_;
  if (s.generation >= s.params.generations) return End{};
  const std::string name = "generation " + std::to_string(s.generation);
  step_generation(s, ctx, producer_stream_, detector_stream_);
  return RoundBoundary{name};
}

json MultigenType::metrics(const RunContext&) const {
  const MultigenState& s = *state_;
  json traces = json::array();
  for (const auto& t : s.traces) traces.push_back(trace_json(t));
  json loci = {{"template", 0}, {"policy", 0}, {"bio", 0}, {"none", 0}};
  for (const auto& [id, r] : s.lineage) {
    if (r.generation == 0) continue;
    const std::string l(to_string(r.mutated_locus));
    loci[l] = loci[l].get<std::int64_t>() + 1;
  }
  return {{"generations", s.generation},
          {"producers", s.producers.size()},
          {"detectors", s.detectors.size()},
          {"final", s.traces.empty() ? json(nullptr) : trace_json(s.traces.back())},
          {"mutations_by_locus", loci},
          {"traces", traces}};
}

std::vector<Artifact> MultigenType::surfaces(const RunContext&) const {
  return {{"snapshot.sqlite", snapshot_bytes(make_snapshot(*state_))}, {"fitness_traces.csv", traces_csv(state_->traces)}};
}

void register_type(TypeRegistry& registry) {
  registry.register_type(
      "multigen",
      [](RunContext& ctx, const json& params) { return std::make_unique<MultigenType>(ctx, parse_params(params)); },
      [](const json& params) { parse_params(params); });
}

}  // namespace irsim::multigen

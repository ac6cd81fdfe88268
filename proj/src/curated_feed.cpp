#include "irsim/curated_feed.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "irsim/hashing.hpp"
#include "irsim/metrics.hpp"

namespace irsim::feed {

using nlohmann::json;

namespace {

std::string item_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "i%05zu", i);
  return buf;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

FeedParams parse_params(const json& j) {
  FeedParams p;
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
  p.k = j.value("k", p.k);
  if (p.k < 8 || p.k > 16) fail("'k' must lie in [8, 16]");
  p.catalog_size = j.value("catalog_size", p.catalog_size);
  if (p.catalog_size < 1) fail("'catalog_size' must be >= 1");
  p.weeks = j.value("weeks", p.weeks);
  if (p.weeks < 0) fail("'weeks' must be >= 0");
  p.impressions_per_week = j.value("impressions_per_week", p.impressions_per_week);
  if (p.impressions_per_week < 0) fail("'impressions_per_week' must be >= 0");
  p.pool_size = j.value("pool_size", p.pool_size);
  if (p.pool_size < 1) fail("'pool_size' must be >= 1");
  p.ranker = j.value("ranker", p.ranker);
  p.history_top = j.value("history_top", p.history_top);
  if (p.history_top < 1) fail("'history_top' must be >= 1");
  p.init_scale = j.value("init_scale", p.init_scale);
  if (p.init_scale < 0 || p.init_scale > 1) fail("'init_scale' must lie in [0, 1]");
  p.click.beta = j.value("beta", p.click.beta);
  if (!(p.click.beta >= 0)) fail("'beta' must be >= 0");
  p.click.b0 = j.value("b0", p.click.b0);
  p.update.eta = j.value("eta", p.update.eta);
  if (p.update.eta < 0 || p.update.eta > 1) fail("'eta' must lie in [0, 1]");
  p.update.gamma_exposed = j.value("gamma_exposed", p.update.gamma_exposed);
  if (p.update.gamma_exposed < 0 || p.update.gamma_exposed >= 1) fail("'gamma_exposed' must lie in [0, 1)");
  return p;
}

Eigen::VectorXd helpful_history_vector(const FeedState& state, const UserAgent& user) {
  std::vector<std::size_t> items;
  for (const auto& [item, n] : user.clicks) items.push_back(item);
  if (items.empty()) return {};
  std::sort(items.begin(), items.end(), [&](std::size_t a, std::size_t b) {
    const auto ca = user.clicks.at(a), cb = user.clicks.at(b);
    if (ca != cb) return ca > cb;
    return user.last_click.at(a) > user.last_click.at(b);
  });
  items.resize(std::min<std::size_t>(items.size(), static_cast<std::size_t>(state.params.history_top)));
  Eigen::VectorXd h = Eigen::VectorXd::Zero(state.params.k);
  for (auto i : items) h += state.items[i].v;
  h /= static_cast<double>(items.size());
  const double n = h.norm();
  return n > 0 ? Eigen::VectorXd(h / n) : h;
}

RankerRegistry::RankerRegistry() {
  add("popularity", [](const FeedState&, const UserAgent&, const FeedItem& item) {
    return static_cast<double>(item.global_clicks);
  });
  add("similarity_to_belief",
      [](const FeedState&, const UserAgent& user, const FeedItem& item) { return cosine(user.b, item.v); });
  add("similarity_to_helpful_history", [](const FeedState&, const UserAgent& user, const FeedItem& item) {
    if (user.helpful.size() == 0) return cosine(user.b, item.v);
    return cosine(user.helpful, item.v);
  });
}

void RankerRegistry::add(const std::string& name, Scorer scorer) { scorers_[name] = std::move(scorer); }

const Scorer& RankerRegistry::get(const std::string& name) const {
  auto it = scorers_.find(name);
  if (it == scorers_.end()) throw Error(ErrorCode::ConfigError, "unknown ranker '" + name + "'");
  return it->second;
}

std::vector<std::string> RankerRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [n, s] : scorers_) out.push_back(n);
  return out;
}

std::vector<Ranked> rank(const Scorer& scorer, const FeedState& state, const UserAgent& user,
                         const std::vector<std::size_t>& candidates) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCandidates, "nothing to rank for " + user.persona_id);
  std::vector<Ranked> out;
  out.reserve(candidates.size());
  for (auto c : candidates) out.push_back({c, scorer(state, user, state.items[c])});
  std::sort(out.begin(), out.end(), [&](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return state.items[a.item].id < state.items[b.item].id;
  });
  return out;
}

std::vector<FeedItem> build_catalog(const WorldModelInstance& world, const Embedder& embedder, int k,
                                    std::int64_t size, Stream& stream) {
  const auto chunks = world.all_chunks();
  if (chunks.empty()) throw Error(ErrorCode::EmptyCorpus, "the curated feed draws its items from the world model");
  Eigen::MatrixXd proj(k, embedder.dim());
  for (Eigen::Index i = 0; i < proj.size(); ++i) proj.data()[i] = stream.normal();
  std::vector<FeedItem> items;
  items.reserve(static_cast<std::size_t>(size));
  for (std::size_t i = 0; i < static_cast<std::size_t>(size); ++i) {
    const Chunk& c = *chunks[i % chunks.size()];
    FeedItem item;
    item.id = item_id(i);
    item.topic = static_cast<int>(fnv1a64(c.id + "#" + std::to_string(i)) % static_cast<std::uint64_t>(k));
    Eigen::VectorXd u = proj * embedder.embed(c.text + " #" + std::to_string(i));
    u[item.topic] = u.cwiseAbs().maxCoeff() + 1.0;
    item.v = u / u.norm();
    items.push_back(std::move(item));
  }
  return items;
}

FeedState init_state(RunContext& ctx, FeedParams params) {
  FeedState s;
  s.params = std::move(params);
  Stream catalog = ctx.random().stream("world", "feed.catalog");
  s.items = build_catalog(ctx.world(), ctx.embedder(), s.params.k, s.params.catalog_size, catalog);
  for (const auto& p : ctx.roster()) {
    UserAgent u;
    u.persona_id = p.id;
    Stream init = ctx.random().stream(p.id, "feed.init");
    Eigen::VectorXd g(s.params.k);
    do {
      for (int d = 0; d < s.params.k; ++d) g[d] = init.normal();
    } while (g.norm() == 0.0);
    u.b = s.params.init_scale * g / g.norm();
    u.topic_exposures.assign(static_cast<std::size_t>(s.params.k), 0);
    s.users.push_back(std::move(u));
  }
  return s;
}

void step_week(FeedState& state, const Scorer& scorer, std::map<std::string, Stream>& streams) {
  const std::size_t n_items = state.items.size();
  const std::size_t pool = std::min<std::size_t>(static_cast<std::size_t>(state.params.pool_size), n_items);
  std::vector<std::size_t> indices(n_items);
  std::vector<double> realised(pool), oracle(pool);
  for (auto& user : state.users) {
    Stream& s = streams.at(user.persona_id);
    for (std::int64_t i = 0; i < state.params.impressions_per_week; ++i) {
      std::iota(indices.begin(), indices.end(), std::size_t{0});
      for (std::size_t j = 0; j < pool; ++j) std::swap(indices[j], indices[j + s.below(n_items - j)]);
      const std::vector<std::size_t> candidates(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(pool));
      const auto ranked = rank(scorer, state, user, candidates);
      for (std::size_t j = 0; j < pool; ++j) {
        realised[j] = -static_cast<double>(j);
        oracle[j] = cosine(user.b, state.items[ranked[j].item].v);
      }
      FeedItem& item = state.items[ranked.front().item];
      Impression imp;
      imp.week = state.week;
      imp.item = ranked.front().item;
      imp.ranker_score = ranked.front().score;
      imp.oracle_score = oracle.front();
      imp.tau = kendall_tau_b(realised, oracle);
      imp.click = s.bernoulli(click_probability(user.b, item.v, state.params.click));
      user.b = update_belief(user.b, item.v, imp.click, state.params.update);
      user.topic_exposures[static_cast<std::size_t>(item.topic)] += 1;
      if (imp.click) {
        item.global_clicks += 1;
        user.clicks[imp.item] += 1;
        user.last_click[imp.item] = static_cast<std::int64_t>(user.history.size());
        user.helpful = helpful_history_vector(state, user);
      }
      user.history.push_back(imp);
    }
  }
  ++state.week;
}

Eigen::MatrixXd belief_matrix(const FeedState& state) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(state.users.size()), state.params.k);
  for (std::size_t i = 0; i < state.users.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = state.users[i].b.transpose();
  return m;
}

FeedMetrics feed_metrics(const FeedState& state) {
  FeedMetrics m;
  m.opinion_variance = opinion_variance(belief_matrix(state));
  m.per_topic_share.assign(static_cast<std::size_t>(state.params.k), 0.0);
  std::vector<double> totals(static_cast<std::size_t>(state.params.k), 0.0);
  double entropy_sum = 0.0, tau_sum = 0.0;
  std::size_t exposed_users = 0;
  for (const auto& u : state.users) {
    std::vector<double> counts(u.topic_exposures.begin(), u.topic_exposures.end());
    if (!u.history.empty()) {
      entropy_sum += entropy_bits(counts);
      ++exposed_users;
    }
    for (std::size_t t = 0; t < counts.size(); ++t) totals[t] += counts[t];
    for (const auto& imp : u.history) {
      tau_sum += imp.tau;
      m.clicks += imp.click ? 1 : 0;
    }
    m.impressions += static_cast<std::int64_t>(u.history.size());
  }
  if (m.impressions > 0) {
    for (std::size_t t = 0; t < totals.size(); ++t) m.per_topic_share[t] = totals[t] / static_cast<double>(m.impressions);
    m.kendall_tau_mean = tau_sum / static_cast<double>(m.impressions);
  }
  if (exposed_users > 0) m.exposure_entropy = entropy_sum / static_cast<double>(exposed_users);
  return m;
}

json to_json(const FeedMetrics& m) {
  return {{"opinion_variance", m.opinion_variance},
          {"exposure_entropy", m.exposure_entropy},
          {"kendall_tau_mean", m.kendall_tau_mean},
          {"per_topic_share", m.per_topic_share},
          {"impressions", m.impressions},
          {"clicks", m.clicks}};
}

std::string impressions_csv(const FeedState& state) {
  std::string out = std::string(kImpressionHeader) + "\n";
  out.reserve(out.size() + static_cast<std::size_t>(state.week * state.params.impressions_per_week) *
                               state.users.size() * 96);
  // Week-major order, users in roster order within a week.
  for (std::int64_t w = 0; w < state.week; ++w) {
    for (const auto& u : state.users) {
      const auto from = static_cast<std::size_t>(w * state.params.impressions_per_week);
      for (std::size_t i = from; i < from + static_cast<std::size_t>(state.params.impressions_per_week); ++i) {
        const Impression& imp = u.history[i];
        const FeedItem& item = state.items[imp.item];
        out += std::to_string(imp.week) + "," + state.params.ranker + "," + u.persona_id + "," + item.id + "," +
               std::to_string(item.topic) + "," + fmt(imp.ranker_score) + "," + fmt(imp.oracle_score) + "," +
               (imp.click ? "1" : "0") + "\n";
      }
    }
  }
  return out;
}

void export_impressions(const FeedState& state, const std::filesystem::path& destination) {
  std::ofstream out(destination, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + destination.string());
  out << impressions_csv(state);
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + destination.string());
}

CuratedFeedType::CuratedFeedType(RunContext& ctx, FeedParams params, std::shared_ptr<const RankerRegistry> rankers)
    : state_(std::make_unique<FeedState>(init_state(ctx, std::move(params)))), rankers_(std::move(rankers)) {
  rankers_->get(state_->params.ranker);
  for (const auto& u : state_->users) streams_.emplace(u.persona_id, ctx.random().stream(u.persona_id, "feed.impressions"));
}

std::vector<ActionSpec> CuratedFeedType::actions() const {
  return {{"impression", "Rank a candidate pool and expose the top item to a user."},
          {"click", "Click the exposed item with alignment-dependent probability."}};
}

Step CuratedFeedType::schedule(RunContext&) {
  FeedState& s = *state_;
  if (s.week >= s.params.weeks) return End{};
  step_week(s, rankers_->get(s.params.ranker), streams_);
  const FeedMetrics m = feed_metrics(s);
  s.weekly.push_back({{"week", s.week - 1},
                      {"opinion_variance", m.opinion_variance},
                      {"exposure_entropy", m.exposure_entropy},
                      {"kendall_tau_mean", m.kendall_tau_mean},
                      {"clicks", m.clicks}});
  return RoundBoundary{"week " + std::to_string(s.week - 1)};
}

json CuratedFeedType::metrics(const RunContext&) const {
  json j = to_json(feed_metrics(*state_));
  j["ranker"] = state_->params.ranker;
  j["weeks"] = state_->week;
  j["users"] = state_->users.size();
  j["weekly"] = state_->weekly;
  return j;
}

std::vector<Artifact> CuratedFeedType::surfaces(const RunContext&) const {
  json beliefs = json::object();
  for (const auto& u : state_->users) {
    beliefs[u.persona_id] = std::vector<double>(u.b.data(), u.b.data() + u.b.size());
  }
  json items = json::array();
  for (const auto& it : state_->items) {
    items.push_back({{"id", it.id}, {"topic", it.topic}, {"global_clicks", it.global_clicks}});
  }
  return {{"impressions.csv", impressions_csv(*state_)},
          {"beliefs.json", beliefs.dump(2) + "\n"},
          {"items.json", items.dump(2) + "\n"}};
}

void register_type(TypeRegistry& registry, std::shared_ptr<RankerRegistry> rankers) {
  if (!rankers) rankers = std::make_shared<RankerRegistry>();
  std::shared_ptr<const RankerRegistry> shared = rankers;
  registry.register_type(
      "curated_feed",
      [shared](RunContext& ctx, const json& params) {
        return std::make_unique<CuratedFeedType>(ctx, parse_params(params), shared);
      },
      [shared](const json& params) { shared->get(parse_params(params).ranker); });
}

}  // namespace irsim::feed

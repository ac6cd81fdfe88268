#include "irsim/social.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "irsim/text.hpp"

namespace irsim::social {

using nlohmann::json;

namespace {

std::string post_id(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%06zu", n);
  return buf;
}

std::string line_value(const std::string& text, const std::string& key) {
  const auto at = text.find("\n" + key + ": ");
  if (at == std::string::npos) return {};
  const auto start = at + key.size() + 3;
  return text.substr(start, text.find('\n', start) - start);
}

std::map<std::string, double> influence_map(const RunContext& ctx) {
  std::map<std::string, double> m;
  for (const auto& p : ctx.roster()) m[p.id] = p.influence_weight.value_or(0.0);
  return m;
}

Post& add_post(SocialState& state, Post post) {
  post.id = post_id(state.posts.size() + 1);
  if (post.kind == PostKind::Original) {
    post.root = post.id;
  } else {
    post.root = state.find_post(*post.parent)->root;
  }
  state.post_index[post.id] = state.posts.size();
  state.posts.push_back(std::move(post));
  return state.posts.back();
}

// Writes the post back into the world model and the claim graph.
void write_back(SocialState& state, RunContext& ctx, Post& post) {
  const std::string prose = strip_claim_markup(post.text);
  if (!normalize_text(prose).empty()) append_content(ctx.world(), prose, post.author);
  MarkupExtractor extractor;
  try {
    const auto index = static_cast<std::int64_t>(state.post_index.at(post.id));
    const GraphDelta delta = add_utterance(state.graph, {post.author, index, post.text}, extractor, state.params.topic);
    for (const auto& c : delta.claims) post.claims.push_back(c.id);
  } catch (const Error& e) {
    ctx.note({{"kind", "extraction_error"}, {"post", post.id}, {"error", e.what()}});
  }
}

void enqueue(SocialState& state, PendingAction action) {
  action.seq = state.next_seq++;
  ++state.enqueued_by_agent[action.agent];
  state.pending[action.agent].push_back(std::move(action));
}

}  // namespace

std::string_view to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::Post: return "post";
    case ActionKind::Repost: return "repost";
    case ActionKind::Comment: return "comment";
    case ActionKind::Like: return "like";
    case ActionKind::Dislike: return "dislike";
    case ActionKind::Follow: return "follow";
    case ActionKind::Search: return "search";
  }
  return "?";
}

std::optional<ActionKind> parse_action_kind(std::string_view text) {
  for (auto k : all_action_kinds()) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

bool is_reactive(ActionKind kind) {
  return kind == ActionKind::Comment || kind == ActionKind::Like || kind == ActionKind::Dislike ||
         kind == ActionKind::Repost;
}

const std::vector<ActionKind>& all_action_kinds() {
  static const std::vector<ActionKind> kinds = {ActionKind::Post,    ActionKind::Repost, ActionKind::Comment,
                                                ActionKind::Like,    ActionKind::Dislike, ActionKind::Follow,
                                                ActionKind::Search};
  return kinds;
}

std::string_view to_string(PostKind kind) {
  switch (kind) {
    case PostKind::Original: return "original";
    case PostKind::Repost: return "repost";
    case PostKind::Comment: return "comment";
  }
  return "?";
}

json to_json(const Post& p) {
  return {{"id", p.id},
          {"author", p.author},
          {"text", p.text},
          {"kind", to_string(p.kind)},
          {"parent", p.parent ? json(*p.parent) : json(nullptr)},
          {"root", p.root},
          {"round_created", p.round_created},
          {"likes", p.likes},
          {"dislikes", p.dislikes},
          {"claims", p.claims}};
}

const Post* SocialState::find_post(const std::string& id) const {
  auto it = post_index.find(id);
  return it == post_index.end() ? nullptr : &posts[it->second];
}

Post* SocialState::find_post(const std::string& id) {
  auto it = post_index.find(id);
  return it == post_index.end() ? nullptr : &posts[it->second];
}

SocialParams parse_params(const json& j) {
  SocialParams p;
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
  p.rounds = j.value("rounds", p.rounds);
  if (p.rounds < 1) fail("'rounds' must be >= 1");
  p.round_minutes = j.value("round_minutes", p.round_minutes);
  if (!(p.round_minutes > 0)) fail("'round_minutes' must be positive");
  p.start_hour = j.value("start_hour", p.start_hour);
  if (p.start_hour < 0 || p.start_hour > 23) fail("'start_hour' must be in 0..23");
  p.topic = j.value("topic", p.topic);
  p.flavor = j.value("flavor", p.flavor);
  if (p.flavor != "twitter" && p.flavor != "reddit" && p.flavor != "none") {
    fail("'flavor' must be twitter, reddit or none");
  }
  p.w_follow = j.value("w_follow", p.w_follow);
  p.w_recency = j.value("w_recency", p.w_recency);
  p.feed_size = j.value("feed_size", p.feed_size);
  if (p.feed_size < 1) fail("'feed_size' must be >= 1");
  p.follow_probability = j.value("follow_probability", p.follow_probability);
  p.search_probability = j.value("search_probability", p.search_probability);
  for (double q : {p.follow_probability, p.search_probability}) {
    if (q < 0 || q > 1) fail("probabilities must lie in [0, 1]");
  }
  for (const auto& m : j.value("milestones", json::array())) {
    MilestoneEvent ev;
    ev.round = m.value("round", std::int64_t{-1});
    if (ev.round < 0 || ev.round >= p.rounds) fail("milestone round must lie within the run horizon");
    if (m.contains("rate_multiplier")) {
      const auto& r = m["rate_multiplier"];
      RateMultiplier rm;
      rm.factor = r.value("factor", 1.0);
      if (rm.factor < 0) fail("milestone factor must be >= 0");
      rm.scope = r.value("scope", std::string("all"));
      if (r.contains("duration") && !r["duration"].is_null()) {
        rm.duration = r["duration"].get<std::int64_t>();
        if (*rm.duration < 1) fail("milestone duration must be >= 1");
      }
      ev.effect = rm;
    } else if (m.contains("inject_post")) {
      const auto& r = m["inject_post"];
      if (!r.contains("author") || !r.contains("text")) fail("inject_post needs 'author' and 'text'");
      ev.effect = InjectPost{r["author"].get<std::string>(), r["text"].get<std::string>()};
    } else {
      fail("milestone needs 'rate_multiplier' or 'inject_post'");
    }
    p.milestones.push_back(std::move(ev));
  }
  if (j.contains("sentiment_bias")) p.sentiment_bias = j["sentiment_bias"].get<std::map<std::string, double>>();
  return p;
}

int hour_of_day(const SocialParams& params, std::int64_t round) {
  const auto minutes = static_cast<std::int64_t>(std::floor(static_cast<double>(round) * params.round_minutes));
  return static_cast<int>((params.start_hour + minutes / 60) % 24);
}

std::int64_t delay_rounds(double response_delay_minutes, double round_minutes) {
  if (response_delay_minutes <= 0) return 0;
  return static_cast<std::int64_t>(std::ceil(response_delay_minutes / round_minutes));
}

double rate_factor(const SocialState& state, const std::string& agent, std::int64_t round) {
  double f = 1.0;
  for (const auto& [start, m] : state.multipliers) {
    if (round < start || (m.duration && round >= start + *m.duration)) continue;
    if (m.scope == "all" || m.scope == agent) f *= m.factor;
  }
  return f;
}

ActivityDraw draw_activity(Stream& stream, const ActivityProfile& profile, int hour, double round_hours,
                           double factor) {
  if (!profile.active_at(hour)) return {};
  ActivityDraw d;
  d.posts = stream.poisson(profile.posts_per_hour * round_hours * factor);
  d.reactions = stream.poisson(profile.comments_per_hour * round_hours * factor);
  return d;
}

double visibility(const SocialState& state, const std::string& viewer, const Post& post, double author_influence,
                  const FeedWeights& weights) {
  const double follows = state.follows.count({viewer, post.author}) ? 1.0 : 0.0;
  const double age = static_cast<double>(std::max<std::int64_t>(0, state.round - post.round_created));
  return weights.w_follow * follows + author_influence + weights.w_recency / (1.0 + age);
}

std::vector<const Post*> build_feed(const std::string& viewer, const SocialState& state, std::size_t m,
                                    const std::map<std::string, double>& influence, const FeedWeights& weights) {
  std::vector<std::pair<double, const Post*>> scored;
  for (const auto& p : state.posts) {
    if (p.author == viewer) continue;
    auto it = influence.find(p.author);
    scored.emplace_back(visibility(state, viewer, p, it == influence.end() ? 0.0 : it->second, weights), &p);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->id < b.second->id;
  });
  std::vector<const Post*> out;
  for (std::size_t i = 0; i < scored.size() && i < m; ++i) out.push_back(scored[i].second);
  return out;
}

std::vector<Persona> apply_flavor(std::vector<Persona> roster, const std::string& flavor, RandomSource& random) {
  if (flavor == "none") return roster;
  const bool twitter = flavor == "twitter";
  for (auto& p : roster) {
    if (p.activity_profile) continue;
    Stream s = random.stream(p.id, "social.profile");
    ActivityProfile a;
    if (twitter) {
      a.posts_per_hour = s.uniform(0.2, 1.5);
      a.comments_per_hour = s.uniform(0.5, 3.0);
      const int start = 6 + static_cast<int>(s.below(5));
      for (int h = 0; h < 14; ++h) a.active_hours.insert((start + h) % 24);
      a.response_delay_minutes = s.uniform(5.0, 30.0);
    } else {
      a.posts_per_hour = s.uniform(0.05, 0.4);
      a.comments_per_hour = s.uniform(1.0, 4.0);
      const int start = 12 + static_cast<int>(s.below(7));
      for (int h = 0; h < 10; ++h) a.active_hours.insert((start + h) % 24);
      a.response_delay_minutes = s.uniform(30.0, 180.0);
    }
    p.activity_profile = a;
  }
  return roster;
}

void register_behaviors(LlmGateway& gateway) {
  gateway.register_behavior("social.compose", [](const ChatRequest& request, Stream& draws) -> std::string {
    const std::string& user = "\n" + request.messages.back().content;
    const std::string id = line_value(user, "Post id");
    const std::string action = line_value(user, "Action");
    const auto own = parse_stance(line_value(user, "Your stance")).value_or(Stance::Neutral);
    const std::string parent_claim = line_value(user, "Parent claim");
    const auto parent_stance = parse_stance(line_value(user, "Parent stance"));

    std::vector<std::string> pool = tokenize(line_value(user, "Context"));
    pool.erase(std::remove_if(pool.begin(), pool.end(), [](const std::string& w) { return w.size() < 4; }),
               pool.end());
    if (pool.empty()) pool = tokenize(line_value(user, "Topic"));
    if (pool.empty()) pool = {"this"};
    auto word = [&]() -> const std::string& { return pool[draws.below(pool.size())]; };

    static const char* kPost[] = {"Hot take on", "Reading up on", "Can we talk about", "New thread on"};
    static const char* kComment[] = {"Not sure about this,", "Exactly right,", "Source needed on", "Agree on"};
    std::ostringstream out;
    if (action == "repost") {
      out << "Worth sharing: " << word() << " and " << word() << ".";
    } else if (action == "comment") {
      out << kComment[draws.below(std::size(kComment))] << " " << word() << " is the crux here.";
    } else {
      out << kPost[draws.below(std::size(kPost))] << " " << word() << ": " << word() << " keeps coming up.";
    }
    out << " [[" << id << "c1|" << to_string(own);
    if (!parent_claim.empty() && parent_stance) {
      const bool same = *parent_stance == own;
      const char* kind = action == "repost" ? "supports"
                         : same            ? (draws.bernoulli(0.6) ? "supports" : "refines")
                                           : (draws.bernoulli(0.6) ? "counters" : "questions");
      out << "|" << kind << ":" << parent_claim;
    }
    out << "]]";
    return out.str();
  });
}

std::optional<std::string> execute_action(SocialState& state, RunContext& ctx, const PendingAction& action) {
  ExecutedAction record{action, state.round, std::nullopt, json::object()};
  const Post* parent = nullptr;
  if (is_reactive(action.kind)) {
    parent = state.find_post(action.target);
    if (!parent) throw Error(ErrorCode::MissingParent, "no post '" + action.target + "' to " + std::string(to_string(action.kind)));
  }

  switch (action.kind) {
    case ActionKind::Like:
      state.find_post(action.target)->likes += 1;
      break;
    case ActionKind::Dislike:
      state.find_post(action.target)->dislikes += 1;
      break;
    case ActionKind::Follow:
      if (action.target == action.agent) {
        throw Error(ErrorCode::InvalidField, "agent '" + action.agent + "' cannot follow itself");
      }
      state.follows.insert({action.agent, action.target});
      break;
    case ActionKind::Search: {
      const auto hits = keyword_lookup(ctx.world(), tokenize(action.target), 5, LookupScope::Appended);
      json ids = json::array();
      for (const auto& c : hits) ids.push_back(c.id);
      record.detail = {{"query", action.target}, {"results", ids}};
      break;
    }
    case ActionKind::Post:
    case ActionKind::Repost:
    case ActionKind::Comment: {
      const Persona& persona = ctx.persona(action.agent);
      BudgetLedger& ledger = ctx.ledger(action.agent);
      if (is_exhausted(ledger, persona)) {
        state.dropped.push_back({action, state.round, "budget_exhausted"});
        return std::nullopt;
      }
      const std::string id = post_id(state.posts.size() + 1);
      const Stance own = persona.stance ? stance_label(*persona.stance) : Stance::Neutral;
      std::ostringstream user;
      user << "Topic: " << state.params.topic << "\nPost id: " << id << "\nAction: " << to_string(action.kind)
           << "\nYour stance: " << to_string(own);
      if (auto it = state.params.sentiment_bias.find(persona.id); it != state.params.sentiment_bias.end()) {
        user << "\nSentiment bias: " << it->second;
      }
      std::string context;
      if (parent) {
        user << "\nReplying to: " << parent->id << " by " << parent->author << ": " << strip_claim_markup(parent->text);
        context = strip_claim_markup(parent->text);
        if (!parent->claims.empty()) {
          const Claim& c = state.graph.claims.at(parent->claims.front());
          user << "\nParent claim: " << c.id << "\nParent stance: " << to_string(c.stance);
        }
      } else {
        const auto hits = keyword_lookup(ctx.world(), tokenize(state.params.topic + " " + persona.bio), 1);
        if (!hits.empty()) context = join(split_words(hits.front().text), " ");
      }
      auto words = split_words(context);
      if (words.size() > 40) words.resize(40);
      user << "\nContext: " << join(words, " ");
      const std::string system = "You are " + persona.id + ", a user of a social platform. " + persona.bio +
                                 " Write one short post in character. Mark each claim with [[" + id +
                                 "cN|stance]] or [[" + id + "cN|stance|kind:parent-claim-id]].";
      const ChatResponse resp = ctx.gateway().complete("social.compose", ctx.make_request(system, user.str(), 200));
      debit_tokens(ledger, persona, std::max<std::int64_t>(1, resp.total_tokens()), ctx.step(),
                   std::string(to_string(action.kind)) + " " + id);

      Post post;
      post.author = action.agent;
      post.text = resp.text;
      post.kind = action.kind == ActionKind::Post     ? PostKind::Original
                  : action.kind == ActionKind::Repost ? PostKind::Repost
                                                      : PostKind::Comment;
      if (parent) post.parent = parent->id;
      post.round_created = state.round;
      Post& added = add_post(state, std::move(post));
      write_back(state, ctx, added);
      record.post_id = added.id;
      break;
    }
  }
  state.executed.push_back(std::move(record));
  return state.executed.back().post_id;
}

void step_round(SocialState& state, RunContext& ctx) {
  const SocialParams& params = state.params;
  for (const auto& m : params.milestones) {
    if (m.round != state.round) continue;
    if (const auto* rm = std::get_if<RateMultiplier>(&m.effect)) {
      state.multipliers.emplace_back(state.round, *rm);
    } else {
      const auto& inject = std::get<InjectPost>(m.effect);
      Post post;
      post.author = inject.author;
      post.text = inject.text;
      post.round_created = state.round;
      Post& added = add_post(state, std::move(post));
      write_back(state, ctx, added);
    }
  }

  const int hour = hour_of_day(params, state.round);
  const double round_hours = params.round_minutes / 60.0;
  const auto influence = influence_map(ctx);
  const FeedWeights weights{params.w_follow, params.w_recency};
  for (const auto& p : ctx.roster()) {
    if (!p.activity_profile) continue;
    Stream& s = state.streams.try_emplace(p.id, ctx.random().stream(p.id, "social.activity")).first->second;
    const ActivityDraw d = draw_activity(s, *p.activity_profile, hour, round_hours, rate_factor(state, p.id, state.round));
    for (std::int64_t i = 0; i < d.posts; ++i) {
      enqueue(state, {0, p.id, ActionKind::Post, "", state.round, state.round});
    }
    const std::int64_t due = state.round + delay_rounds(p.activity_profile->response_delay_minutes, params.round_minutes);
    for (std::int64_t i = 0; i < d.reactions; ++i) {
      const double r = s.uniform();
      const ActionKind kind = r < kCommentWeight                              ? ActionKind::Comment
                              : r < kCommentWeight + kLikeWeight               ? ActionKind::Like
                              : r < kCommentWeight + kLikeWeight + kRepostWeight ? ActionKind::Repost
                                                                                : ActionKind::Dislike;
      const auto feed = build_feed(p.id, state, static_cast<std::size_t>(params.feed_size), influence, weights);
      if (feed.empty()) continue;
      const Post* target = feed[s.below(feed.size())];
      enqueue(state, {0, p.id, kind, target->id, state.round, due});
      if (!state.follows.count({p.id, target->author}) && s.bernoulli(params.follow_probability)) {
        bool queued = false;
        for (const auto& q : state.pending[p.id]) {
          queued = queued || (q.kind == ActionKind::Follow && q.target == target->author);
        }
        if (!queued && target->author != p.id) enqueue(state, {0, p.id, ActionKind::Follow, target->author, state.round, state.round});
      }
    }
    if (p.activity_profile->active_at(hour) && s.bernoulli(params.search_probability)) {
      auto terms = tokenize(params.topic + " " + p.bio);
      std::vector<std::string> query;
      for (int i = 0; i < 3 && !terms.empty(); ++i) query.push_back(terms[s.below(terms.size())]);
      enqueue(state, {0, p.id, ActionKind::Search, join(query, " "), state.round, state.round});
    }
  }

  std::vector<PendingAction> due;
  for (auto& [agent, queue] : state.pending) {
    auto split = std::stable_partition(queue.begin(), queue.end(),
                                       [&](const PendingAction& a) { return a.due_round > state.round; });
    due.insert(due.end(), split, queue.end());
    queue.erase(split, queue.end());
  }
  std::sort(due.begin(), due.end(), [](const PendingAction& a, const PendingAction& b) {
    if (a.agent != b.agent) return a.agent < b.agent;
    return a.seq < b.seq;
  });
  for (const auto& a : due) execute_action(state, ctx, a);

  ++state.round;
  state.clock_minutes += params.round_minutes;
}

void close_horizon(SocialState& state) {
  for (auto& [agent, queue] : state.pending) {
    for (auto& a : queue) state.dropped.push_back({a, state.round, "horizon"});
    queue.clear();
  }
}

std::vector<Cascade> cascades(const SocialState& state) {
  std::map<std::string, Cascade> by_root;
  std::map<std::string, std::set<std::string>> actors;
  for (const auto& p : state.posts) {
    if (p.kind == PostKind::Original) by_root[p.id] = {p.id, 1, 0};
  }
  for (const auto& p : state.posts) {
    if (p.kind == PostKind::Original) continue;
    by_root[p.root].size += 1;
    actors[p.root].insert(p.author);
  }
  for (const auto& e : state.executed) {
    if (e.action.kind != ActionKind::Like && e.action.kind != ActionKind::Dislike) continue;
    actors[state.find_post(e.action.target)->root].insert(e.action.agent);
  }
  std::vector<Cascade> out;
  for (auto& [root, c] : by_root) {
    c.reach = static_cast<std::int64_t>(actors[root].size());
    out.push_back(c);
  }
  return out;
}

json social_metrics(const SocialState& state, const RunContext& ctx) {
  json by_kind = json::object();
  for (auto k : all_action_kinds()) by_kind[std::string(to_string(k))] = 0;
  json engagement = json::object();
  for (const auto& p : ctx.roster()) engagement[p.id] = 0;
  for (const auto& e : state.executed) {
    const std::string k(to_string(e.action.kind));
    by_kind[k] = by_kind[k].get<std::int64_t>() + 1;
    engagement[e.action.agent] = engagement.value(e.action.agent, std::int64_t{0}) + 1;
  }
  json dropped = {{"horizon", 0}, {"budget_exhausted", 0}};
  for (const auto& d : state.dropped) dropped[d.reason] = dropped[d.reason].get<std::int64_t>() + 1;
  std::int64_t enqueued = 0;
  for (const auto& [agent, n] : state.enqueued_by_agent) enqueued += n;
  std::int64_t pending = 0;
  for (const auto& [agent, q] : state.pending) pending += static_cast<std::int64_t>(q.size());

  json cs = json::array();
  std::int64_t max_size = 0;
  double total = 0;
  const auto all = cascades(state);
  for (const auto& c : all) {
    cs.push_back({{"root", c.root}, {"size", c.size}, {"reach", c.reach}});
    max_size = std::max(max_size, c.size);
    total += static_cast<double>(c.size);
  }
  json posts = {{"original", 0}, {"repost", 0}, {"comment", 0}};
  for (const auto& p : state.posts) {
    const std::string k(to_string(p.kind));
    posts[k] = posts[k].get<std::int64_t>() + 1;
  }
  return {{"rounds", state.round},
          {"clock_minutes", state.clock_minutes},
          {"posts", posts},
          {"actions",
           {{"enqueued", enqueued},
            {"executed", state.executed.size()},
            {"dropped", dropped},
            {"pending", pending},
            {"by_kind", by_kind}}},
          {"engagement", engagement},
          {"cascades", cs},
          {"max_cascade_size", max_size},
          {"mean_cascade_size", all.empty() ? 0.0 : total / static_cast<double>(all.size())},
          {"follow_edges", state.follows.size()},
          {"graph", irsim::to_json(graph_stats(state.graph))}};
}

SocialState init_state(RunContext& ctx, SocialParams params) {
  ctx.set_roster(apply_flavor(ctx.roster(), params.flavor, ctx.random()));
  SocialState s;
  s.params = std::move(params);
  return s;
}

SocialType::SocialType(RunContext& ctx, SocialParams params)
    : state_(std::make_unique<SocialState>(init_state(ctx, std::move(params)))) {
  register_behaviors(ctx.gateway());
}

std::vector<ActionSpec> SocialType::actions() const {
  return {{"post", "Write an original post."},
          {"repost", "Share a post with a short note."},
          {"comment", "Reply to a post."},
          {"like", "Like a post."},
          {"dislike", "Dislike a post."},
          {"follow", "Follow another agent."},
          {"search", "Search past posts by keyword."}};
}

Step SocialType::schedule(RunContext& ctx) {
  SocialState& s = *state_;
  if (s.round >= s.params.rounds) {
    if (!closed_) close_horizon(s);
    closed_ = true;
    return End{};
  }
  const std::string name = "round " + std::to_string(s.round);
  step_round(s, ctx);
  return RoundBoundary{name};
}

json SocialType::metrics(const RunContext& ctx) const { return social_metrics(*state_, ctx); }

std::vector<Artifact> SocialType::surfaces(const RunContext&) const {
  const SocialState& s = *state_;
  std::string posts;
  for (const auto& p : s.posts) posts += to_json(p).dump() + "\n";
  json follows = json::array();
  for (const auto& [a, b] : s.follows) follows.push_back({{"follower", a}, {"followee", b}});
  return {{"posts.jsonl", posts},
          {"follows.json", follows.dump(2) + "\n"},
          {"graph.json", export_graph_string(s.graph, {{"topic", s.params.topic}})}};
}

void register_type(TypeRegistry& registry) {
  registry.register_type(
      "social",
      [](RunContext& ctx, const json& params) { return std::make_unique<SocialType>(ctx, parse_params(params)); },
      [](const json& params) { parse_params(params); });
}

}  // namespace irsim::social

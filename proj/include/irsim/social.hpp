#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "irsim/claim_graph.hpp"
#include "irsim/runtime.hpp"
#include "json.hpp"

namespace irsim::social {

enum class ActionKind { Post, Repost, Comment, Like, Dislike, Follow, Search };

std::string_view to_string(ActionKind kind);
std::optional<ActionKind> parse_action_kind(std::string_view text);
bool is_reactive(ActionKind kind);
const std::vector<ActionKind>& all_action_kinds();

enum class PostKind { Original, Repost, Comment };
std::string_view to_string(PostKind kind);

struct Post {
  std::string id;
  std::string author;
  std::string text;
  PostKind kind = PostKind::Original;
  std::optional<std::string> parent;
  std::string root;  // the original at the top of this post's cascade
  std::int64_t round_created = 0;
  std::int64_t likes = 0;
  std::int64_t dislikes = 0;
  std::vector<std::string> claims;
};

nlohmann::json to_json(const Post& post);

struct RateMultiplier {
  double factor = 1.0;
  std::string scope = "all";             // "all" or a persona id
  std::optional<std::int64_t> duration;  // rounds; open-ended when absent
};

struct InjectPost {
  std::string author;
  std::string text;
};

struct MilestoneEvent {
  std::int64_t round = 0;
  std::variant<RateMultiplier, InjectPost> effect;
};

struct SocialParams {
  std::int64_t rounds = 24;
  double round_minutes = 60.0;
  int start_hour = 0;
  std::string topic = "the shared topic";
  std::string flavor = "none";  // twitter, reddit or none; fills missing activity profiles
  double w_follow = 1.0;
  double w_recency = 0.5;
  std::int64_t feed_size = 5;
  double follow_probability = 0.1;
  double search_probability = 0.05;
  std::vector<MilestoneEvent> milestones;
  // Persona attribute absent from the shared schema; only passed into the compose prompt.
  std::map<std::string, double> sentiment_bias;
};

SocialParams parse_params(const nlohmann::json& params);

// Reactive kinds are drawn with these weights.
inline constexpr double kCommentWeight = 0.4;
inline constexpr double kLikeWeight = 0.3;
inline constexpr double kRepostWeight = 0.15;
inline constexpr double kDislikeWeight = 0.15;

struct PendingAction {
  std::int64_t seq = 0;  // global enqueue order
  std::string agent;
  ActionKind kind = ActionKind::Post;
  std::string target;  // post id, followed agent id, or search query
  std::int64_t created_round = 0;
  std::int64_t due_round = 0;
};

struct ExecutedAction {
  PendingAction action;
  std::int64_t executed_round = 0;
  std::optional<std::string> post_id;  // created post, if any
  nlohmann::json detail;
};

struct DroppedAction {
  PendingAction action;
  std::int64_t round = 0;
  std::string reason;  // horizon, budget_exhausted
};

struct SocialState {
  SocialParams params;
  std::vector<Post> posts;
  std::map<std::string, std::size_t> post_index;
  std::set<std::pair<std::string, std::string>> follows;  // (follower, followee)
  std::map<std::string, std::vector<PendingAction>> pending;
  std::int64_t round = 0;
  double clock_minutes = 0.0;
  std::int64_t next_seq = 0;
  std::vector<ExecutedAction> executed;
  std::vector<DroppedAction> dropped;
  std::vector<std::pair<std::int64_t, RateMultiplier>> multipliers;  // (start round, effect)
  ArgumentGraph graph;
  std::map<std::string, std::int64_t> enqueued_by_agent;
  std::map<std::string, Stream> streams;  // per-agent activity draws

  const Post* find_post(const std::string& id) const;
  Post* find_post(const std::string& id);
};

int hour_of_day(const SocialParams& params, std::int64_t round);
std::int64_t delay_rounds(double response_delay_minutes, double round_minutes);

// Product of the multipliers active for this agent at this round.
double rate_factor(const SocialState& state, const std::string& agent, std::int64_t round);

struct ActivityDraw {
  std::int64_t posts = 0;
  std::int64_t reactions = 0;
};

// Poisson counts with mean rate x round hours x factor; no draws when inactive.
ActivityDraw draw_activity(Stream& stream, const ActivityProfile& profile, int hour, double round_hours,
                           double factor);

struct FeedWeights {
  double w_follow = 1.0;
  double w_recency = 0.5;
};

double visibility(const SocialState& state, const std::string& viewer, const Post& post, double author_influence,
                  const FeedWeights& weights);

// Top-m posts by visibility for the viewer, excluding their own; ties by post id.
std::vector<const Post*> build_feed(const std::string& viewer, const SocialState& state, std::size_t m,
                                    const std::map<std::string, double>& influence, const FeedWeights& weights = {});

// Fills activity profiles missing from the roster; other attributes untouched.
std::vector<Persona> apply_flavor(std::vector<Persona> roster, const std::string& flavor, RandomSource& random);

void register_behaviors(LlmGateway& gateway);

// Executes one action now. Throws MissingParent for reactions on unknown posts.
// Returns the created post id, if any; std::nullopt with a drop logged when the
// author's token budget is exhausted.
std::optional<std::string> execute_action(SocialState& state, RunContext& ctx, const PendingAction& action);

// Applies milestones, draws and enqueues new actions, then runs every due action
// in (agent id, enqueue order) order. Advances the clock by one round.
void step_round(SocialState& state, RunContext& ctx);

// Drops whatever is still queued with reason "horizon".
void close_horizon(SocialState& state);

struct Cascade {
  std::string root;
  std::int64_t size = 1;
  std::int64_t reach = 0;
};

std::vector<Cascade> cascades(const SocialState& state);
nlohmann::json social_metrics(const SocialState& state, const RunContext& ctx);

SocialState init_state(RunContext& ctx, SocialParams params);

class SocialType : public ScenarioType {
 public:
  SocialType(RunContext& ctx, SocialParams params);

  std::vector<ActionSpec> actions() const override;
  Step schedule(RunContext& ctx) override;
  nlohmann::json metrics(const RunContext& ctx) const override;
  std::vector<Artifact> surfaces(const RunContext& ctx) const override;

  const SocialState& state() const noexcept { return *state_; }

 private:
  std::unique_ptr<SocialState> state_;
  bool closed_ = false;
};

void register_type(TypeRegistry& registry);

}  // namespace irsim::social

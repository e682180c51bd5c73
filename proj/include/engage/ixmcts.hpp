#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "engage/dialogue.hpp"
#include "engage/engagement.hpp"
#include "engage/scoring.hpp"

namespace engage {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

enum class NodeKind { Model, User };

enum class PruneCriterion { Auto, StateAlignment, AccumulatedSentiment, None };

struct SearchConfig {
  double exploration_constant = std::sqrt(2.0);
  int expansion_width = 3;
  int depth_cap = 25;
  int prune_cap = 81;
  /// Search stops once this many root-to-terminal trajectories exist.
  int trajectory_budget = 81;
  int iterations = 300;
  PruneCriterion criterion = PruneCriterion::Auto;
  double gamma = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
  /// Auto resolves by scenario: state alignment for emotional support,
  /// accumulated sentiment for persuasion.
  PruneCriterion resolved_criterion(Scenario scenario) const;
};

void to_json(nlohmann::json& j, const SearchConfig& c);
void from_json(const nlohmann::json& j, SearchConfig& c);

struct DialogueNode {
  NodeId id = kNoNode;
  NodeKind kind = NodeKind::User;
  Turn turn;
  NodeId parent = kNoNode;
  std::vector<NodeId> children;
  std::uint64_t visits = 0;       // N
  double total_reward = 0.0;      // Q
  int depth = 0;                  // turn index in the conversation
  std::optional<EngagementOutcome> terminal;
  bool pruned = false;
  /// No expandable node remains in this subtree. Derived, not persisted.
  bool exhausted = false;

  double value() const { return visits == 0 ? 0.0 : total_reward / static_cast<double>(visits); }
};

/// Search tree of alternating user/model utterances. The root is the user's
/// opening turn; every model node has at most one user child. Nodes refer to
/// their parent by id, so conversation prefixes are shared, not copied.
class DialogueTree {
 public:
  DialogueTree(UserCondition condition, SearchConfig config);

  const UserCondition& condition() const { return condition_; }
  const SearchConfig& config() const { return config_; }
  Scenario scenario() const { return condition_.scenario; }

  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }
  NodeId root() const { return 0; }
  const DialogueNode& node(NodeId id) const { return nodes_.at(id); }
  const std::vector<DialogueNode>& nodes() const { return nodes_; }

  NodeId add_node(NodeKind kind, Turn turn, NodeId parent);
  std::optional<NodeId> user_child(NodeId model) const;
  /// Root-to-node utterances, inclusive.
  std::vector<Turn> path_turns(NodeId id) const;
  /// Unpruned model nodes at `depth`, in creation order.
  std::vector<NodeId> live_model_nodes_at(int depth) const;
  const std::vector<NodeId>& model_nodes_at(int depth) const;
  int max_depth() const { return static_cast<int>(by_depth_.size()) - 1; }

  void set_terminal(NodeId id, EngagementOutcome outcome);
  /// Marks the node and its whole subtree pruned.
  void prune_subtree(NodeId id);
  void add_visit(NodeId id, double reward);
  void record_evaluation(NodeId id, double reward) { evaluations_.emplace_back(id, reward); }
  const std::vector<std::pair<NodeId, double>>& evaluations() const { return evaluations_; }

  /// Number of model nodes whose conversation has ended (engaged or not).
  std::size_t terminal_trajectories() const;
  /// Model node with no user child yet that is neither terminal nor pruned.
  bool expandable(NodeId model) const;
  /// Recomputes `exhausted` from `id` up to the root.
  void refresh_exhausted(NodeId id);

  nlohmann::json to_json() const;
  static DialogueTree from_json(const nlohmann::json& j);
  /// Throws InvariantViolation on any structural or value inconsistency.
  void check_structure() const;

 private:
  bool compute_exhausted(NodeId id) const;

  UserCondition condition_;
  SearchConfig config_;
  std::vector<DialogueNode> nodes_;
  std::vector<std::vector<NodeId>> by_depth_;  // model nodes per depth
  std::vector<std::pair<NodeId, double>> evaluations_;
};

/// Scores a model node for depth-wise pruning; higher is kept.
using NodeCriterion = std::function<double(const DialogueTree&, NodeId)>;

/// Shared read-only helpers a search needs.
struct SearchResources {
  const EngagementDetector* detector = &default_detector();
  const EmbeddingFn* embedder = nullptr;        // defaults to a 256-dim hashing embedder
  const SentimentLexicon* lexicon = &SentimentLexicon::builtin();
};

/// UCB(a) = Q(a)/N(a) + c * sqrt(ln N(a'') / N(a)), where a'' is the model node
/// two turns above a (the root user node stands in at the top level).
/// Unvisited nodes score +inf.
double ucb_score(const DialogueTree& tree, NodeId model, double c);
double ucb_formula(double q, double n, double n_grandparent, double c);

/// Walks from the root choosing the highest-UCB live model child at each user
/// node (lowest id on ties) until it reaches an expandable node.
/// Throws Exhausted when none remains.
NodeId select(const DialogueTree& tree);
std::vector<NodeId> select_path(const DialogueTree& tree);

/// Generates the node's user reply and, unless that reply ends the
/// conversation, `expansion_width` model replies beneath it. Nodes at the
/// depth cap are closed as terminal with reward 0. Nothing is added to the
/// tree if an agent throws. Returns the new model node ids.
std::vector<NodeId> expand(DialogueTree& tree, NodeId model, const AgentPolicy& user_sim,
                           const AgentPolicy& policy, const SearchResources& res = {});

/// Terminal engagement level, 0 for anything else. No random playout.
double evaluate_leaf(const DialogueTree& tree, NodeId node);

/// N += 1 and Q += reward for the node and all its ancestors.
void backpropagate(DialogueTree& tree, NodeId node, double reward);

/// Keeps the `keep` best live model nodes at `depth` (ties: lower id) and
/// prunes the rest. Returns the pruned ids in ascending order.
std::vector<NodeId> prune_depth(DialogueTree& tree, int depth, const NodeCriterion& criterion,
                                int keep);

NodeCriterion make_criterion(const DialogueTree& tree, const SearchResources& res);

/// Creates the root (user opening) and the first layer of model replies.
void initialize_tree(DialogueTree& tree, const AgentPolicy& user_sim, const AgentPolicy& policy,
                     const SearchResources& res = {});

/// Runs select -> expand -> evaluate -> backpropagate until the iteration
/// budget or trajectory budget is spent or nothing is left to expand. On an
/// agent error the tree keeps everything completed so far and the error
/// propagates.
void run_search(DialogueTree& tree, const AgentPolicy& user_sim, const AgentPolicy& policy,
                const SearchResources& res = {});

DialogueTree search(const UserCondition& condition, const AgentPolicy& user_sim,
                    const AgentPolicy& policy, const SearchConfig& config,
                    const SearchResources& res = {});

}  // namespace engage

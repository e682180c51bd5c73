#include "engage/ixmcts.hpp"

#include <algorithm>
#include <numeric>

#include "engage/error.hpp"
#include "engage/text.hpp"
#include "json_util.hpp"

namespace engage {

using nlohmann::json;

// --- SearchConfig -------------------------------------------------------------

void SearchConfig::validate() const {
  auto fail = [](const std::string& what) { throw EngageError(ErrorKind::ConfigError, what); };
  if (!(exploration_constant > 0.0) || !std::isfinite(exploration_constant)) {
    fail("exploration_constant must be > 0");
  }
  if (expansion_width < 1) fail("expansion_width must be >= 1");
  if (depth_cap < 1) fail("depth_cap must be >= 1");
  if (prune_cap < 1) fail("prune_cap must be >= 1");
  if (trajectory_budget < 1) fail("trajectory_budget must be >= 1");
  if (iterations < 0) fail("iterations must be >= 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
}

PruneCriterion SearchConfig::resolved_criterion(Scenario scenario) const {
  if (criterion != PruneCriterion::Auto) return criterion;
  return scenario == Scenario::EmotionalSupport ? PruneCriterion::StateAlignment
                                                : PruneCriterion::AccumulatedSentiment;
}

namespace {

std::string_view criterion_name(PruneCriterion c) {
  switch (c) {
    case PruneCriterion::Auto: return "auto";
    case PruneCriterion::StateAlignment: return "state_alignment";
    case PruneCriterion::AccumulatedSentiment: return "accumulated_sentiment";
    case PruneCriterion::None: return "none";
  }
  return "auto";
}

PruneCriterion parse_criterion(std::string_view s) {
  for (auto c : {PruneCriterion::Auto, PruneCriterion::StateAlignment,
                 PruneCriterion::AccumulatedSentiment, PruneCriterion::None}) {
    if (criterion_name(c) == s) return c;
  }
  throw EngageError(ErrorKind::ConfigError, "unknown pruning criterion '" + std::string(s) + "'");
}

}  // namespace

void to_json(json& j, const SearchConfig& c) {
  j = json{{"exploration_constant", c.exploration_constant},
           {"expansion_width", c.expansion_width},
           {"depth_cap", c.depth_cap},
           {"prune_cap", c.prune_cap},
           {"trajectory_budget", c.trajectory_budget},
           {"iterations", c.iterations},
           {"criterion", criterion_name(c.criterion)},
           {"gamma", c.gamma},
           {"seed", c.seed}};
}

void from_json(const json& j, SearchConfig& c) {
  detail::require_object(j, "search config",
                         {"exploration_constant", "expansion_width", "depth_cap", "prune_cap",
                          "trajectory_budget", "iterations", "criterion", "gamma", "seed"});
  SearchConfig d;
  try {
    d.exploration_constant = j.value("exploration_constant", d.exploration_constant);
    d.expansion_width = j.value("expansion_width", d.expansion_width);
    d.depth_cap = j.value("depth_cap", d.depth_cap);
    d.prune_cap = j.value("prune_cap", d.prune_cap);
    d.trajectory_budget = j.value("trajectory_budget", d.trajectory_budget);
    d.iterations = j.value("iterations", d.iterations);
    if (j.contains("criterion")) d.criterion = parse_criterion(j.at("criterion").get<std::string>());
    d.gamma = j.value("gamma", d.gamma);
    d.seed = j.value("seed", d.seed);
  } catch (const json::exception& e) {
    throw EngageError(ErrorKind::ConfigError, std::string("search config: ") + e.what());
  }
  d.validate();
  c = d;
}

// --- DialogueTree -------------------------------------------------------------

DialogueTree::DialogueTree(UserCondition condition, SearchConfig config)
    : condition_(std::move(condition)), config_(config) {
  condition_.validate();
  config_.validate();
}

NodeId DialogueTree::add_node(NodeKind kind, Turn turn, NodeId parent) {
  const Role expected_role = kind == NodeKind::User ? Role::User : Role::Model;
  if (turn.role != expected_role) {
    throw EngageError(ErrorKind::RoleViolation, "node kind does not match its turn's role");
  }
  DialogueNode n;
  n.id = static_cast<NodeId>(nodes_.size());
  n.kind = kind;
  n.turn = std::move(turn);
  n.parent = parent;
  if (parent == kNoNode) {
    if (!nodes_.empty() || kind != NodeKind::User) {
      throw EngageError(ErrorKind::InvariantViolation, "only the first node may be a root");
    }
    n.depth = 0;
  } else {
    const auto& p = nodes_.at(parent);
    if (p.kind == kind) {
      throw EngageError(ErrorKind::RoleViolation, "a node's kind must differ from its parent's");
    }
    if (p.kind == NodeKind::Model && !p.children.empty()) {
      throw EngageError(ErrorKind::InvariantViolation, "model node already has a user child");
    }
    n.depth = p.depth + 1;
    n.pruned = p.pruned;
    n.exhausted = p.pruned;
  }
  const NodeId id = n.id;
  const int depth = n.depth;
  nodes_.push_back(std::move(n));
  if (parent != kNoNode) nodes_[parent].children.push_back(id);
  if (kind == NodeKind::Model) {
    if (by_depth_.size() <= static_cast<std::size_t>(depth)) by_depth_.resize(depth + 1);
    by_depth_[depth].push_back(id);
  }
  return id;
}

std::optional<NodeId> DialogueTree::user_child(NodeId model) const {
  const auto& n = nodes_.at(model);
  if (n.kind != NodeKind::Model || n.children.empty()) return std::nullopt;
  return n.children.front();
}

std::vector<Turn> DialogueTree::path_turns(NodeId id) const {
  std::vector<Turn> out;
  for (NodeId cur = id; cur != kNoNode; cur = nodes_.at(cur).parent) {
    out.push_back(nodes_[cur].turn);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

const std::vector<NodeId>& DialogueTree::model_nodes_at(int depth) const {
  static const std::vector<NodeId> kNone;
  if (depth < 0 || static_cast<std::size_t>(depth) >= by_depth_.size()) return kNone;
  return by_depth_[depth];
}

std::vector<NodeId> DialogueTree::live_model_nodes_at(int depth) const {
  std::vector<NodeId> out;
  for (NodeId id : model_nodes_at(depth)) {
    if (!nodes_[id].pruned) out.push_back(id);
  }
  return out;
}

void DialogueTree::set_terminal(NodeId id, EngagementOutcome outcome) {
  outcome.validate();
  nodes_.at(id).terminal = std::move(outcome);
  refresh_exhausted(id);
}

void DialogueTree::prune_subtree(NodeId id) {
  std::vector<NodeId> stack{id};
  while (!stack.empty()) {
    const NodeId cur = stack.back();
    stack.pop_back();
    auto& n = nodes_.at(cur);
    n.pruned = true;
    n.exhausted = true;
    for (NodeId c : n.children) stack.push_back(c);
  }
  if (nodes_[id].parent != kNoNode) refresh_exhausted(nodes_[id].parent);
}

void DialogueTree::add_visit(NodeId id, double reward) {
  auto& n = nodes_.at(id);
  n.visits += 1;
  n.total_reward += reward;
}

std::size_t DialogueTree::terminal_trajectories() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const auto& n) {
    return n.kind == NodeKind::Model && n.terminal.has_value();
  }));
}

bool DialogueTree::expandable(NodeId model) const {
  const auto& n = nodes_.at(model);
  return n.kind == NodeKind::Model && !n.pruned && !n.terminal && n.children.empty();
}

bool DialogueTree::compute_exhausted(NodeId id) const {
  const auto& n = nodes_[id];
  if (n.pruned) return true;
  if (n.kind == NodeKind::Model) {
    if (n.terminal) return true;
    if (n.children.empty()) return false;
    return nodes_[n.children.front()].exhausted;
  }
  if (n.terminal) return true;
  return std::all_of(n.children.begin(), n.children.end(),
                     [&](NodeId c) { return nodes_[c].exhausted; });
}

void DialogueTree::refresh_exhausted(NodeId id) {
  for (NodeId cur = id; cur != kNoNode; cur = nodes_[cur].parent) {
    nodes_[cur].exhausted = compute_exhausted(cur);
  }
}

json DialogueTree::to_json() const {
  json nodes = json::object();
  for (const auto& n : nodes_) {
    json item{{"kind", n.kind == NodeKind::Model ? "model" : "user"},
              {"turn", n.turn},
              {"parent", n.parent == kNoNode ? json(nullptr) : json(n.parent)},
              {"children", n.children},
              {"N", n.visits},
              {"Q", n.total_reward},
              {"depth", n.depth},
              {"pruned", n.pruned}};
    if (n.terminal) item["terminal"] = *n.terminal;
    nodes[std::to_string(n.id)] = std::move(item);
  }
  json evals = json::array();
  for (const auto& [id, r] : evaluations_) evals.push_back(json::array({id, r}));
  return json{{"kind", "dialogue_tree"},
              {"condition", condition_},
              {"config", config_},
              {"nodes", std::move(nodes)},
              {"evaluations", std::move(evals)}};
}

DialogueTree DialogueTree::from_json(const json& j) {
  detail::require_object(j, "dialogue tree", {"kind", "condition", "config", "nodes", "evaluations"});
  if (j.value("kind", "") != "dialogue_tree") {
    throw EngageError(ErrorKind::ParseError, "not a dialogue tree document");
  }
  DialogueTree tree(j.at("condition").get<UserCondition>(), j.at("config").get<SearchConfig>());
  const auto& nodes = j.at("nodes");
  if (!nodes.is_object()) throw EngageError(ErrorKind::ParseError, "tree nodes must be an object");
  for (std::size_t id = 0; id < nodes.size(); ++id) {
    const auto key = std::to_string(id);
    if (!nodes.contains(key)) {
      throw EngageError(ErrorKind::ParseError, "tree node ids must be 0..n-1; missing " + key);
    }
    const auto& item = nodes.at(key);
    detail::require_object(item, "tree node", {"kind", "turn", "parent", "children", "N", "Q",
                                               "depth", "pruned", "terminal"});
    const auto kind_s = detail::get_string(item, "kind");
    if (kind_s != "model" && kind_s != "user") {
      throw EngageError(ErrorKind::ParseError, "bad node kind '" + kind_s + "'");
    }
    const NodeKind kind = kind_s == "model" ? NodeKind::Model : NodeKind::User;
    const NodeId parent = item.at("parent").is_null() ? kNoNode : item.at("parent").get<NodeId>();
    if (parent != kNoNode && parent >= id) {
      throw EngageError(ErrorKind::ParseError, "node " + key + " precedes its parent");
    }
    const NodeId got = tree.add_node(kind, item.at("turn").get<Turn>(), parent);
    auto& n = tree.nodes_[got];
    n.visits = item.at("N").get<std::uint64_t>();
    n.total_reward = item.at("Q").get<double>();
    n.pruned = item.at("pruned").get<bool>();
    if (item.at("depth").get<int>() != n.depth) {
      throw EngageError(ErrorKind::ParseError, "node " + key + " has inconsistent depth");
    }
    if (item.contains("terminal")) n.terminal = item.at("terminal").get<EngagementOutcome>();
  }
  // Children are rebuilt from parent links; the listed ones must agree.
  for (std::size_t id = 0; id < nodes.size(); ++id) {
    const auto listed = nodes.at(std::to_string(id)).at("children").get<std::vector<NodeId>>();
    if (listed != tree.nodes_[id].children) {
      throw EngageError(ErrorKind::ParseError,
                        "node " + std::to_string(id) + " children disagree with parent links");
    }
  }
  for (const auto& e : j.at("evaluations")) {
    tree.evaluations_.emplace_back(e.at(0).get<NodeId>(), e.at(1).get<double>());
  }
  // Exhaustion is derived; recompute bottom-up.
  for (std::size_t k = tree.nodes_.size(); k-- > 0;) {
    tree.nodes_[k].exhausted = tree.compute_exhausted(static_cast<NodeId>(k));
  }
  tree.check_structure();
  return tree;
}

void DialogueTree::check_structure() const {
  auto fail = [](const std::string& what) {
    throw EngageError(ErrorKind::InvariantViolation, what);
  };
  if (nodes_.empty()) return;
  if (nodes_[0].kind != NodeKind::User || nodes_[0].parent != kNoNode) {
    fail("root must be a parentless user node");
  }
  for (const auto& n : nodes_) {
    const std::string tag = "node " + std::to_string(n.id) + ": ";
    if ((n.kind == NodeKind::User) != (n.turn.role == Role::User)) fail(tag + "role/kind mismatch");
    if (n.kind == NodeKind::Model && n.children.size() > 1) fail(tag + "more than one user child");
    for (NodeId c : n.children) {
      if (c >= nodes_.size() || nodes_[c].parent != n.id) fail(tag + "broken child link");
      if (nodes_[c].kind == n.kind) fail(tag + "child of the same kind");
      if (n.pruned && !nodes_[c].pruned) fail(tag + "live child under a pruned node");
    }
    if (n.total_reward < 0.0 || n.total_reward > static_cast<double>(n.visits) + 1e-9) {
      fail(tag + "Q outside [0, N]");
    }
    std::uint64_t child_visits = 0;
    for (NodeId c : n.children) child_visits += nodes_[c].visits;
    if (child_visits > n.visits) fail(tag + "children visited more often than their parent");
    if (n.terminal) n.terminal->validate();
  }
  if (!evaluations_.empty() || nodes_[0].visits > 0) {
    std::vector<std::uint64_t> visits(nodes_.size(), 0);
    std::vector<double> reward(nodes_.size(), 0.0);
    for (const auto& [id, r] : evaluations_) {
      if (id >= nodes_.size()) fail("evaluation of an unknown node");
      for (NodeId cur = id; cur != kNoNode; cur = nodes_[cur].parent) {
        visits[cur] += 1;
        reward[cur] += r;
      }
    }
    for (const auto& n : nodes_) {
      if (visits[n.id] != n.visits || reward[n.id] != n.total_reward) {
        fail("node " + std::to_string(n.id) + ": N/Q disagree with the evaluation log");
      }
    }
  }
}

// --- UCB and selection --------------------------------------------------------

double ucb_formula(double q, double n, double n_grandparent, double c) {
  if (n == 0.0) return std::numeric_limits<double>::infinity();
  return q / n + c * std::sqrt(std::log(n_grandparent) / n);
}

double ucb_score(const DialogueTree& tree, NodeId model, double c) {
  const auto& n = tree.node(model);
  if (n.kind != NodeKind::Model) {
    throw EngageError(ErrorKind::InvalidArgument, "UCB is defined for model nodes only");
  }
  if (n.visits == 0) return std::numeric_limits<double>::infinity();
  const auto& user_parent = tree.node(n.parent);
  const NodeId grandparent = user_parent.parent;
  const std::uint64_t base =
      grandparent == kNoNode ? user_parent.visits : tree.node(grandparent).visits;
  return ucb_formula(n.total_reward, static_cast<double>(n.visits), static_cast<double>(base), c);
}

std::vector<NodeId> select_path(const DialogueTree& tree) {
  if (tree.empty() || tree.node(tree.root()).exhausted) {
    throw EngageError(ErrorKind::Exhausted, "no expandable model node remains");
  }
  const double c = tree.config().exploration_constant;
  std::vector<NodeId> path;
  NodeId user = tree.root();
  while (true) {
    NodeId best = kNoNode;
    double best_score = -std::numeric_limits<double>::infinity();
    for (NodeId child : tree.node(user).children) {
      const auto& cn = tree.node(child);
      if (cn.pruned || cn.exhausted) continue;
      const double s = ucb_score(tree, child, c);
      if (best == kNoNode || s > best_score) {
        best = child;
        best_score = s;
      }
    }
    if (best == kNoNode) {
      throw EngageError(ErrorKind::InvariantViolation,
                        "live user node " + std::to_string(user) + " has no live model child");
    }
    if (tree.node(best).pruned) {
      throw EngageError(ErrorKind::InvariantViolation, "selection reached a pruned node");
    }
    path.push_back(best);
    if (tree.expandable(best)) return path;
    const auto next = tree.user_child(best);
    if (!next) {
      throw EngageError(ErrorKind::InvariantViolation,
                        "non-expandable live model node without a user child");
    }
    user = *next;
  }
}

NodeId select(const DialogueTree& tree) { return select_path(tree).back(); }

// --- Expansion, evaluation, back-propagation ----------------------------------

namespace {

const EmbeddingFn& default_embedder() {
  static const HashingEmbedder embedder(256, 0);
  return embedder;
}

std::uint64_t node_seed(const DialogueTree& tree, std::string_view role, NodeId anchor,
                        std::uint64_t k) {
  return derive_seed(derive_seed(tree.config().seed, role), (std::uint64_t{anchor} << 16) ^ k);
}

}  // namespace

NodeCriterion make_criterion(const DialogueTree& tree, const SearchResources& res) {
  switch (tree.config().resolved_criterion(tree.scenario())) {
    case PruneCriterion::StateAlignment: {
      const EmbeddingFn* embed = res.embedder ? res.embedder : &default_embedder();
      return [embed](const DialogueTree& t, NodeId id) {
        const auto& n = t.node(id);
        return alignment_criterion(t.node(n.parent).turn.state, n.turn.state, *embed);
      };
    }
    case PruneCriterion::AccumulatedSentiment: {
      const SentimentLexicon* lex = res.lexicon;
      const double gamma = tree.config().gamma;
      return [lex, gamma](const DialogueTree& t, NodeId id) {
        return accumulated_sentiment(t.path_turns(t.node(id).parent), *lex, gamma);
      };
    }
    default:
      return [](const DialogueTree&, NodeId) { return 0.0; };
  }
}

std::vector<NodeId> prune_depth(DialogueTree& tree, int depth, const NodeCriterion& criterion,
                                int keep) {
  if (keep < 1) throw EngageError(ErrorKind::InvalidArgument, "prune cap must be >= 1");
  auto live = tree.live_model_nodes_at(depth);
  if (live.size() <= static_cast<std::size_t>(keep)) return {};
  std::vector<std::pair<double, NodeId>> scored;
  scored.reserve(live.size());
  for (NodeId id : live) {
    double s = criterion(tree, id);
    if (std::isnan(s)) s = -std::numeric_limits<double>::infinity();
    scored.emplace_back(s, id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<NodeId> pruned;
  for (std::size_t k = static_cast<std::size_t>(keep); k < scored.size(); ++k) {
    pruned.push_back(scored[k].second);
  }
  std::sort(pruned.begin(), pruned.end());
  for (NodeId id : pruned) tree.prune_subtree(id);
  return pruned;
}

std::vector<NodeId> expand(DialogueTree& tree, NodeId model, const AgentPolicy& user_sim,
                           const AgentPolicy& policy, const SearchResources& res) {
  if (!tree.expandable(model)) {
    throw EngageError(ErrorKind::InvalidArgument,
                      "node " + std::to_string(model) + " is not expandable");
  }
  const auto& cfg = tree.config();
  if (tree.node(model).depth >= cfg.depth_cap) {
    EngagementOutcome capped;
    capped.warnings.emplace_back("depth cap reached");
    tree.set_terminal(model, capped);
    return {};
  }

  // Generate everything first so a throwing agent leaves the tree untouched.
  auto context = tree.path_turns(model);
  Turn user_turn = user_sim.respond(tree.condition(), context,
                                    node_seed(tree, "user", model, 0));
  if (user_turn.role != Role::User) {
    throw EngageError(ErrorKind::RoleViolation, "user simulator produced a model turn");
  }
  const auto outcome = res.detector->detect(tree.scenario(), user_turn);
  std::vector<Turn> replies;
  if (!outcome.terminated) {
    context.push_back(user_turn);
    for (int k = 0; k < cfg.expansion_width; ++k) {
      Turn reply = policy.respond(tree.condition(), context,
                                  node_seed(tree, "model", model, static_cast<std::uint64_t>(k)));
      if (reply.role != Role::Model) {
        throw EngageError(ErrorKind::RoleViolation, "policy produced a user turn");
      }
      replies.push_back(std::move(reply));
    }
  }

  const NodeId user = tree.add_node(NodeKind::User, std::move(user_turn), model);
  if (outcome.terminated) {
    tree.set_terminal(user, outcome);
    tree.set_terminal(model, outcome);
    return {};
  }
  std::vector<NodeId> created;
  for (auto& reply : replies) created.push_back(tree.add_node(NodeKind::Model, std::move(reply), user));
  tree.refresh_exhausted(user);

  const int depth = tree.node(model).depth + 2;
  if (tree.live_model_nodes_at(depth).size() > static_cast<std::size_t>(cfg.prune_cap)) {
    prune_depth(tree, depth, make_criterion(tree, res), cfg.prune_cap);
  }
  return created;
}

double evaluate_leaf(const DialogueTree& tree, NodeId node) {
  const auto& n = tree.node(node);
  if (n.terminal && n.terminal->engaged) return n.terminal->level;
  return 0.0;
}

void backpropagate(DialogueTree& tree, NodeId node, double reward) {
  if (!(reward >= 0.0 && reward <= 1.0)) {
    throw EngageError(ErrorKind::InvalidArgument, "reward must lie in [0, 1]");
  }
  for (NodeId cur = node; cur != kNoNode; cur = tree.node(cur).parent) tree.add_visit(cur, reward);
  tree.record_evaluation(node, reward);
}

void initialize_tree(DialogueTree& tree, const AgentPolicy& user_sim, const AgentPolicy& policy,
                     const SearchResources& res) {
  if (!tree.empty()) throw EngageError(ErrorKind::InvalidArgument, "tree already initialized");
  Turn opening = user_sim.respond(tree.condition(), {}, node_seed(tree, "root", 0, 0));
  const auto outcome = res.detector->detect(tree.scenario(), opening);
  std::vector<Turn> replies;
  if (!outcome.terminated) {
    const std::vector<Turn> context{opening};
    for (int k = 0; k < tree.config().expansion_width; ++k) {
      replies.push_back(policy.respond(tree.condition(), context,
                                       node_seed(tree, "model", kNoNode, static_cast<std::uint64_t>(k))));
    }
  }
  const NodeId root = tree.add_node(NodeKind::User, std::move(opening), kNoNode);
  if (outcome.terminated) {
    tree.set_terminal(root, outcome);
    return;
  }
  for (auto& reply : replies) tree.add_node(NodeKind::Model, std::move(reply), root);
  tree.refresh_exhausted(root);
  if (static_cast<int>(replies.size()) > tree.config().prune_cap) {
    prune_depth(tree, 1, make_criterion(tree, res), tree.config().prune_cap);
  }
}

void run_search(DialogueTree& tree, const AgentPolicy& user_sim, const AgentPolicy& policy,
                const SearchResources& res) {
  if (tree.empty()) initialize_tree(tree, user_sim, policy, res);
  const auto& cfg = tree.config();
  for (int it = 0; it < cfg.iterations; ++it) {
    if (tree.terminal_trajectories() >= static_cast<std::size_t>(cfg.trajectory_budget)) break;
    if (tree.node(tree.root()).exhausted) break;
    const NodeId leaf = select(tree);
    expand(tree, leaf, user_sim, policy, res);
    backpropagate(tree, leaf, evaluate_leaf(tree, leaf));
  }
}

DialogueTree search(const UserCondition& condition, const AgentPolicy& user_sim,
                    const AgentPolicy& policy, const SearchConfig& config,
                    const SearchResources& res) {
  DialogueTree tree(condition, config);
  run_search(tree, user_sim, policy, res);
  return tree;
}

}  // namespace engage

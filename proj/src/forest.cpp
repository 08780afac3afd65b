// Apache License, Version 2.0, refer to LICENSE.txt

#include "cloglog/forest.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cloglog/error.hpp"

namespace cloglog {

double category_rank_cdf(int m) {
  if (m < 0) return 0.0;
  return 1.0 - std::pow(2.0 / 3.0, m + 1);
}

bool category_goes_left(int k, double threshold) {
  return category_rank_cdf(k - 1) <= threshold;
}

// ---------------------------------------------------------------- Tree

Tree::Tree() : nodes_(1) {}

Tree::Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) nodes_.emplace_back();
}

std::vector<int> Tree::leaves() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf()) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> Tree::internal_nodes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_leaf()) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> Tree::prunable_nodes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const TreeNode& n = nodes_[i];
    if (!n.is_leaf() && node(n.left).is_leaf() && node(n.right).is_leaf()) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

int Tree::max_depth() const {
  int d = 0;
  for (const TreeNode& n : nodes_) d = std::max(d, n.depth);
  return d;
}

void Tree::accumulate_range(int id, std::span<const double> x, int lo, int hi,
                            std::span<double> out) const {
  while (true) {
    const TreeNode& n = node(id);
    if (n.is_leaf()) {
      for (int k = lo; k <= hi; ++k) out[static_cast<std::size_t>(k - 1)] += n.value;
      return;
    }
    if (n.rule.kind == SplitRule::Kind::kPredictor) {
      id = n.rule.goes_left(x, 0) ? n.left : n.right;
      continue;
    }
    // Left set is a prefix of the categories.
    int split = lo;
    while (split <= hi && category_goes_left(split, n.rule.threshold)) ++split;
    if (split > lo) accumulate_range(n.left, x, lo, split - 1, out);
    if (split > hi) return;
    lo = split;
    id = n.right;
  }
}

void Tree::accumulate_categories(std::span<const double> x, std::span<double> out) const {
  if (out.empty()) return;
  accumulate_range(0, x, 1, static_cast<int>(out.size()), out);
}

void Tree::grow(int leaf, const SplitRule& rule) {
  if (leaf < 0 || static_cast<std::size_t>(leaf) >= nodes_.size() ||
      !nodes_[static_cast<std::size_t>(leaf)].is_leaf()) {
    throw DomainError("Tree::grow: node is not a leaf");
  }
  const int depth = nodes_[static_cast<std::size_t>(leaf)].depth + 1;
  TreeNode child;
  child.parent = leaf;
  child.depth = depth;
  const int left = static_cast<int>(nodes_.size());
  nodes_.push_back(child);
  nodes_.push_back(child);
  TreeNode& n = nodes_[static_cast<std::size_t>(leaf)];
  n.rule = rule;
  n.left = left;
  n.right = left + 1;
}

void Tree::prune(int id) {
  const TreeNode& target = node(id);
  if (target.is_leaf() || !node(target.left).is_leaf() || !node(target.right).is_leaf()) {
    throw DomainError("Tree::prune: node does not have two leaf children");
  }
  const int drop_a = target.left;
  const int drop_b = target.right;
  std::vector<int> remap(nodes_.size(), -1);
  std::vector<TreeNode> kept;
  kept.reserve(nodes_.size() - 2);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (static_cast<int>(i) == drop_a || static_cast<int>(i) == drop_b) continue;
    remap[i] = static_cast<int>(kept.size());
    kept.push_back(nodes_[i]);
  }
  for (TreeNode& n : kept) {
    if (n.parent >= 0) n.parent = remap[static_cast<std::size_t>(n.parent)];
    if (n.left >= 0) {
      n.left = remap[static_cast<std::size_t>(n.left)];
      n.right = remap[static_cast<std::size_t>(n.right)];
    }
  }
  TreeNode& collapsed = kept[static_cast<std::size_t>(remap[static_cast<std::size_t>(id)])];
  collapsed.left = -1;
  collapsed.right = -1;
  collapsed.rule = SplitRule{};
  nodes_ = std::move(kept);
}

void Tree::set_rule(int id, const SplitRule& rule) {
  if (node(id).is_leaf()) throw DomainError("Tree::set_rule: node is a leaf");
  nodes_[static_cast<std::size_t>(id)].rule = rule;
}

void Tree::set_leaf_values(std::span<const double> values) {
  std::size_t k = 0;
  for (TreeNode& n : nodes_) {
    if (!n.is_leaf()) continue;
    if (k >= values.size()) throw DomainError("Tree::set_leaf_values: too few values");
    n.value = values[k++];
  }
  if (k != values.size()) throw DomainError("Tree::set_leaf_values: too many values");
}

void Tree::set_value(int id, double value) { nodes_[static_cast<std::size_t>(id)].value = value; }

// ---------------------------------------------------------------- grid and priors

SplitGrid SplitGrid::from_data(const Matrix& x, int max_cuts) {
  std::vector<std::vector<double>> cuts(x.cols());
  std::vector<double> col(x.rows());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    for (std::size_t i = 0; i < x.rows(); ++i) col[i] = x(i, j);
    std::sort(col.begin(), col.end());
    std::vector<double> uniq(col.begin(), std::unique(col.begin(), col.end()));
    std::vector<double>& c = cuts[j];
    if (uniq.size() <= 1) {
      // Constant column: a single rule that sends everything left.
      c.push_back(uniq.empty() ? 0.0 : uniq.front());
    } else if (uniq.size() - 1 <= static_cast<std::size_t>(max_cuts)) {
      for (std::size_t k = 0; k + 1 < uniq.size(); ++k) c.push_back(0.5 * (uniq[k] + uniq[k + 1]));
    } else {
      const double n1 = static_cast<double>(col.size() - 1);
      for (int k = 1; k <= max_cuts; ++k) {
        const double h = n1 * k / (max_cuts + 1.0);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, col.size() - 1);
        const double q = col[lo] + (h - static_cast<double>(lo)) * (col[hi] - col[lo]);
        if (q < uniq.back() && (c.empty() || q > c.back())) c.push_back(q);
      }
    }
  }
  return SplitGrid(std::move(cuts));
}

double DepthPrior::split_probability(int depth) const {
  return alpha * std::pow(1.0 + depth, -beta);
}

SplitPrior::SplitPrior(std::shared_ptr<const SplitGrid> g, int categories)
    : grid(std::move(g)), num_categories(categories) {
  const std::size_t slots = num_slots();
  probs.assign(slots, slots > 0 ? 1.0 / static_cast<double>(slots) : 0.0);
}

SplitRule SplitPrior::draw(Rng& rng) const {
  SplitRule rule;
  const std::size_t slot = rng.categorical(probs);
  if (slot < num_predictors()) {
    const auto cuts = grid->cuts(slot);
    rule.kind = SplitRule::Kind::kPredictor;
    rule.var = static_cast<int>(slot);
    rule.cut = static_cast<int>(rng.index(cuts.size()));
    rule.threshold = cuts[static_cast<std::size_t>(rule.cut)];
  } else {
    rule.kind = SplitRule::Kind::kCategory;
    rule.var = -1;
    rule.threshold = rng.uniform();
  }
  return rule;
}

double SplitPrior::log_prob(const SplitRule& rule) const {
  if (rule.kind == SplitRule::Kind::kPredictor) {
    const auto j = static_cast<std::size_t>(rule.var);
    return std::log(probs[j]) - std::log(static_cast<double>(grid->cuts(j).size()));
  }
  return std::log(probs[num_predictors()]);
}

// ---------------------------------------------------------------- Forest

Forest::Forest(std::size_t num_trees, std::shared_ptr<const SplitGrid> grid, int num_categories,
               DepthPrior depth)
    : trees_(num_trees), split_(std::move(grid), num_categories), depth_(depth) {
  if (num_trees == 0) throw DomainError("Forest: need at least one tree");
}

void Forest::set_split_probs(std::vector<double> probs) {
  if (probs.size() != split_.num_slots()) throw SchemaError("Forest: wrong split-probability size");
  split_.probs = std::move(probs);
}

double Forest::evaluate(std::span<const double> x, int k) const {
  if (x.size() != split_.num_predictors()) {
    throw SchemaError("Forest::evaluate: expected " + std::to_string(split_.num_predictors()) +
                      " predictors, got " + std::to_string(x.size()));
  }
  if (has_category_slot() ? (k < 1 || k > num_categories()) : (k < 0 || k > num_categories())) {
    throw SchemaError("Forest::evaluate: category index out of range");
  }
  double s = 0.0;
  for (const Tree& tr : trees_) s += tr.evaluate(x, k);
  return s;
}

std::vector<double> Forest::evaluate_categories(std::span<const double> x) const {
  if (x.size() != split_.num_predictors()) {
    throw SchemaError("Forest::evaluate_categories: predictor dimension mismatch");
  }
  std::vector<double> out(static_cast<std::size_t>(std::max(num_categories(), 1)), 0.0);
  for (const Tree& tr : trees_) tr.accumulate_categories(x, out);
  return out;
}

std::vector<double> Forest::split_counts() const {
  std::vector<double> counts(split_.num_slots(), 0.0);
  const std::size_t p = split_.num_predictors();
  for (const Tree& tr : trees_) {
    for (const TreeNode& n : tr.nodes()) {
      if (n.is_leaf()) continue;
      if (n.rule.kind == SplitRule::Kind::kPredictor) {
        counts[static_cast<std::size_t>(n.rule.var)] += 1.0;
      } else {
        counts[p] += 1.0;
      }
    }
  }
  return counts;
}

// ---------------------------------------------------------------- priors and marginals

double tree_log_prior(const Tree& tree, const DepthPrior& depth, const SplitPrior& splits) {
  double lp = 0.0;
  for (const TreeNode& n : tree.nodes()) {
    const double p = depth.split_probability(n.depth);
    if (n.is_leaf()) {
      lp += std::log1p(-p);
    } else {
      lp += std::log(p) + splits.log_prob(n.rule);
    }
  }
  return lp;
}

double integrated_log_marginal(std::span<const LeafStats> stats, const LogGammaPrior& prior) {
  const double base = prior.a * std::log(prior.b) - std::lgamma(prior.a);
  double total = 0.0;
  for (const LeafStats& s : stats) {
    if (!std::isfinite(s.count) || !std::isfinite(s.exposure)) {
      throw NumericalError("integrated_log_marginal: non-finite leaf statistics");
    }
    const double shape = prior.a + s.count;
    total += base + std::lgamma(shape) - shape * std::log(prior.b + s.exposure);
  }
  if (!std::isfinite(total)) throw NumericalError("integrated_log_marginal: overflow");
  return total;
}

double integrated_log_marginal(std::span<const NormalLeafStats> stats,
                               const NormalLeafPrior& prior) {
  const double v = prior.sigma_mu * prior.sigma_mu;
  double total = 0.0;
  for (const NormalLeafStats& s : stats) {
    if (!std::isfinite(s.weight) || !std::isfinite(s.weighted_sum)) {
      throw NumericalError("integrated_log_marginal: non-finite leaf statistics");
    }
    total += -0.5 * std::log1p(v * s.weight) +
             0.5 * s.weighted_sum * s.weighted_sum / (s.weight + 1.0 / v);
  }
  return total;
}

std::vector<double> draw_leaves(std::span<const LeafStats> stats, const LogGammaPrior& prior,
                                Rng& rng) {
  std::vector<double> out(stats.size());
  for (std::size_t l = 0; l < stats.size(); ++l) {
    out[l] = sample_log_gamma(prior.a + stats[l].count, prior.b + stats[l].exposure, rng);
  }
  return out;
}

std::vector<double> draw_leaves(std::span<const NormalLeafStats> stats,
                                const NormalLeafPrior& prior, Rng& rng) {
  const double prior_prec = 1.0 / (prior.sigma_mu * prior.sigma_mu);
  std::vector<double> out(stats.size());
  for (std::size_t l = 0; l < stats.size(); ++l) {
    const double prec = stats[l].weight + prior_prec;
    out[l] = stats[l].weighted_sum / prec + rng.normal() / std::sqrt(prec);
  }
  return out;
}

// ---------------------------------------------------------------- MH kernel

namespace {

double grow_probability(const Tree& t) { return t.is_root_only() ? 1.0 : kGrowProb; }

}  // namespace

TreeProposal propose_tree(const Tree& current, const SplitPrior& splits, Rng& rng) {
  TreeProposal prop{current, TreeMove::kGrow, 0.0, 0.0};
  if (!current.is_root_only()) {
    const double u = rng.uniform();
    if (u < kGrowProb) {
      prop.move = TreeMove::kGrow;
    } else if (u < kGrowProb + kPruneProb) {
      prop.move = TreeMove::kPrune;
    } else {
      prop.move = TreeMove::kChange;
    }
  }
  switch (prop.move) {
    case TreeMove::kGrow: {
      const auto leaves = current.leaves();
      const int leaf = leaves[rng.index(leaves.size())];
      const SplitRule rule = splits.draw(rng);
      prop.tree.grow(leaf, rule);
      prop.log_q_forward = std::log(grow_probability(current)) -
                           std::log(static_cast<double>(leaves.size())) + splits.log_prob(rule);
      prop.log_q_reverse =
          std::log(kPruneProb) - std::log(static_cast<double>(prop.tree.prunable_nodes().size()));
      break;
    }
    case TreeMove::kPrune: {
      const auto nogs = current.prunable_nodes();
      const int id = nogs[rng.index(nogs.size())];
      const SplitRule old_rule = current.node(id).rule;
      prop.tree.prune(id);
      prop.log_q_forward = std::log(kPruneProb) - std::log(static_cast<double>(nogs.size()));
      prop.log_q_reverse = std::log(grow_probability(prop.tree)) -
                           std::log(static_cast<double>(prop.tree.leaves().size())) +
                           splits.log_prob(old_rule);
      break;
    }
    case TreeMove::kChange: {
      const auto internal = current.internal_nodes();
      const int id = internal[rng.index(internal.size())];
      const SplitRule old_rule = current.node(id).rule;
      const SplitRule rule = splits.draw(rng);
      prop.tree.set_rule(id, rule);
      const double pick = std::log(kChangeProb) - std::log(static_cast<double>(internal.size()));
      prop.log_q_forward = pick + splits.log_prob(rule);
      prop.log_q_reverse = pick + splits.log_prob(old_rule);
      break;
    }
  }
  return prop;
}

template <class Stats, class Prior>
double acceptance_log_ratio(const Tree& current, const Tree& proposal, double log_q_forward,
                            double log_q_reverse, std::span<const Stats> current_stats,
                            std::span<const Stats> proposal_stats, const Prior& leaf_prior,
                            const DepthPrior& depth, const SplitPrior& splits) {
  double marginal_delta;
  try {
    marginal_delta = integrated_log_marginal(proposal_stats, leaf_prior) -
                     integrated_log_marginal(current_stats, leaf_prior);
  } catch (const NumericalError&) {
    return -INFINITY;
  }
  if (!std::isfinite(marginal_delta)) return -INFINITY;
  const double prior_delta =
      tree_log_prior(proposal, depth, splits) - tree_log_prior(current, depth, splits);
  return prior_delta + marginal_delta + log_q_reverse - log_q_forward;
}

template double acceptance_log_ratio<LeafStats, LogGammaPrior>(
    const Tree&, const Tree&, double, double, std::span<const LeafStats>,
    std::span<const LeafStats>, const LogGammaPrior&, const DepthPrior&, const SplitPrior&);
template double acceptance_log_ratio<NormalLeafStats, NormalLeafPrior>(
    const Tree&, const Tree&, double, double, std::span<const NormalLeafStats>,
    std::span<const NormalLeafStats>, const NormalLeafPrior&, const DepthPrior&,
    const SplitPrior&);

namespace {

template <class Stats, class Prior, class Provider>
BackfitStep backfit_impl(Forest& forest, std::size_t t, const Provider& provider,
                         const Prior& prior, Rng& rng) {
  Tree& current = forest.tree(t);
  std::vector<Stats> current_stats = provider(current);
  TreeProposal prop = propose_tree(current, forest.split_prior(), rng);
  std::vector<Stats> prop_stats = provider(prop.tree);
  BackfitStep step;
  step.move = prop.move;
  step.log_ratio = acceptance_log_ratio<Stats, Prior>(
      current, prop.tree, prop.log_q_forward, prop.log_q_reverse,
      std::span<const Stats>(current_stats), std::span<const Stats>(prop_stats), prior,
      forest.depth_prior(), forest.split_prior());
  step.accepted = std::log(rng.uniform()) < step.log_ratio;
  if (step.accepted) {
    current = std::move(prop.tree);
    current_stats = std::move(prop_stats);
  }
  current.set_leaf_values(draw_leaves(std::span<const Stats>(current_stats), prior, rng));
  return step;
}

}  // namespace

BackfitStep backfit_tree(Forest& forest, std::size_t t, const LeafStatsProvider& provider,
                         const LogGammaPrior& prior, Rng& rng) {
  return backfit_impl<LeafStats>(forest, t, provider, prior, rng);
}

BackfitStep backfit_tree(Forest& forest, std::size_t t, const NormalStatsProvider& provider,
                         const NormalLeafPrior& prior, Rng& rng) {
  return backfit_impl<NormalLeafStats>(forest, t, provider, prior, rng);
}

std::vector<double> update_split_probs(std::span<const double> counts,
                                       std::optional<double> category_weight, Rng& rng) {
  std::vector<double> alpha(counts.size());
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] < 0.0) throw DomainError("update_split_probs: negative count");
    alpha[j] = 1.0 + counts[j];
  }
  if (category_weight) {
    if (counts.empty() || !(*category_weight > 0.0)) {
      throw DomainError("update_split_probs: invalid category weight");
    }
    alpha.back() = *category_weight + counts.back();
  }
  return rng.dirichlet(alpha);
}

Tree sample_tree_prior(const DepthPrior& depth, const SplitPrior& splits, Rng& rng) {
  Tree tree;
  std::vector<int> frontier{0};
  while (!frontier.empty()) {
    const int id = frontier.back();
    frontier.pop_back();
    if (rng.uniform() < depth.split_probability(tree.node(id).depth)) {
      tree.grow(id, splits.draw(rng));
      frontier.push_back(tree.node(id).right);
      frontier.push_back(tree.node(id).left);
    }
  }
  return tree;
}

// ---------------------------------------------------------------- ExposureEnsemble

ExposureEnsemble::ExposureEnsemble(Forest forest, const Matrix& x)
    : forest_(std::move(forest)), x_(&x), contrib_(forest_.num_trees()) {}

void ExposureEnsemble::set_units(std::vector<int> rows, std::vector<int> slots) {
  if (rows.size() != slots.size()) throw SchemaError("ExposureEnsemble: rows/slots size mismatch");
  rows_ = std::move(rows);
  slots_ = std::move(slots);
  const std::size_t n = rows_.size();
  counts_.assign(n, 0.0);
  bases_.assign(n, 0.0);
  weighted_base_.assign(n, 0.0);
  recompute_contributions();
}

void ExposureEnsemble::set_forest(Forest forest) {
  forest_ = std::move(forest);
  contrib_.assign(forest_.num_trees(), {});
  recompute_contributions();
}

void ExposureEnsemble::recompute_contributions() {
  const std::size_t n = rows_.size();
  total_.assign(n, 0.0);
  for (std::size_t t = 0; t < forest_.num_trees(); ++t) {
    const Tree& tree = forest_.tree(t);
    auto& c = contrib_[t];
    c.resize(n);
    for (std::size_t u = 0; u < n; ++u) {
      c[u] = tree.evaluate(x_->row(static_cast<std::size_t>(rows_[u])), slots_[u]);
      total_[u] += c[u];
    }
  }
}

std::vector<LeafStats> ExposureEnsemble::accumulate(const Tree& candidate,
                                                   std::span<const double> weighted,
                                                   double scale) const {
  std::vector<int> pos(candidate.size(), -1);
  int nleaves = 0;
  for (int id : candidate.leaves()) pos[static_cast<std::size_t>(id)] = nleaves++;
  std::vector<LeafStats> stats(static_cast<std::size_t>(nleaves));
  for (std::size_t u = 0; u < rows_.size(); ++u) {
    const int leaf = candidate.find_leaf(x_->row(static_cast<std::size_t>(rows_[u])), slots_[u]);
    LeafStats& s = stats[static_cast<std::size_t>(pos[static_cast<std::size_t>(leaf)])];
    s.count += counts_[u];
    s.exposure += weighted[u];
  }
  if (scale != 1.0) {
    for (LeafStats& s : stats) s.exposure *= scale;
  }
  return stats;
}

void ExposureEnsemble::prepare_tree(std::size_t t) {
  const auto& c = contrib_[t];
  for (std::size_t u = 0; u < rows_.size(); ++u) {
    const double eta = std::clamp(total_[u] - c[u], -kExponentClamp, kExponentClamp);
    weighted_base_[u] = bases_[u] * std::exp(eta);
  }
}

std::vector<LeafStats> ExposureEnsemble::stats_for(const Tree& candidate, std::size_t t) const {
  std::vector<double> weighted(rows_.size());
  const auto& c = contrib_[t];
  for (std::size_t u = 0; u < rows_.size(); ++u) {
    const double eta = std::clamp(total_[u] - c[u], -kExponentClamp, kExponentClamp);
    weighted[u] = bases_[u] * std::exp(eta);
  }
  return accumulate(candidate, weighted, 1.0);
}

void ExposureEnsemble::refresh_tree(std::size_t t) {
  const Tree& tree = forest_.tree(t);
  auto& c = contrib_[t];
  for (std::size_t u = 0; u < rows_.size(); ++u) {
    const double v = tree.evaluate(x_->row(static_cast<std::size_t>(rows_[u])), slots_[u]);
    total_[u] += v - c[u];
    c[u] = v;
  }
}

void ExposureEnsemble::sweep(const LogGammaPrior& prior, Rng& rng, double exposure_scale) {
  // Re-sum from per-tree contributions so rounding drift cannot accumulate.
  std::fill(total_.begin(), total_.end(), 0.0);
  for (const auto& c : contrib_) {
    for (std::size_t u = 0; u < total_.size(); ++u) total_[u] += c[u];
  }
  const LeafStatsProvider provider = [this, exposure_scale](const Tree& candidate) {
    return accumulate(candidate, weighted_base_, exposure_scale);
  };
  for (std::size_t t = 0; t < forest_.num_trees(); ++t) {
    prepare_tree(t);
    backfit_tree(forest_, t, provider, prior, rng);
    refresh_tree(t);
  }
}

void ExposureEnsemble::update_split_probs(double category_weight, Rng& rng) {
  if (!forest_.has_category_slot()) return;
  const std::vector<double> counts = forest_.split_counts();
  forest_.set_split_probs(cloglog::update_split_probs(counts, category_weight, rng));
}

// ---------------------------------------------------------------- GaussianEnsemble

GaussianEnsemble::GaussianEnsemble(Forest forest, const Matrix& x)
    : forest_(std::move(forest)), x_(&x), contrib_(forest_.num_trees()) {
  const std::size_t n = x.rows();
  total_.assign(n, 0.0);
  partial_.assign(n, 0.0);
  targets_.assign(n, 0.0);
  weights_.assign(n, 1.0);
  for (std::size_t t = 0; t < forest_.num_trees(); ++t) {
    auto& c = contrib_[t];
    c.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = forest_.tree(t).evaluate(x.row(i), 0);
      total_[i] += c[i];
    }
  }
}

void GaussianEnsemble::set_targets(std::span<const double> targets,
                                   std::span<const double> weights) {
  if (targets.size() != x_->rows() || weights.size() != x_->rows()) {
    throw SchemaError("GaussianEnsemble: target/weight length mismatch");
  }
  targets_.assign(targets.begin(), targets.end());
  weights_.assign(weights.begin(), weights.end());
}

std::vector<NormalLeafStats> GaussianEnsemble::stats_for(const Tree& candidate,
                                                         std::size_t t) const {
  std::vector<int> pos(candidate.size(), -1);
  int nleaves = 0;
  for (int id : candidate.leaves()) pos[static_cast<std::size_t>(id)] = nleaves++;
  std::vector<NormalLeafStats> stats(static_cast<std::size_t>(nleaves));
  const auto& c = contrib_[t];
  for (std::size_t i = 0; i < x_->rows(); ++i) {
    const int leaf = candidate.find_leaf(x_->row(i), 0);
    NormalLeafStats& s = stats[static_cast<std::size_t>(pos[static_cast<std::size_t>(leaf)])];
    const double resid = targets_[i] - (total_[i] - c[i]);
    s.weight += weights_[i];
    s.weighted_sum += weights_[i] * resid;
  }
  return stats;
}

void GaussianEnsemble::sweep(const NormalLeafPrior& prior, Rng& rng) {
  std::fill(total_.begin(), total_.end(), 0.0);
  for (const auto& c : contrib_) {
    for (std::size_t i = 0; i < total_.size(); ++i) total_[i] += c[i];
  }
  for (std::size_t t = 0; t < forest_.num_trees(); ++t) {
    const NormalStatsProvider provider = [this, t](const Tree& candidate) {
      return stats_for(candidate, t);
    };
    backfit_tree(forest_, t, provider, prior, rng);
    const Tree& tree = forest_.tree(t);
    auto& c = contrib_[t];
    for (std::size_t i = 0; i < x_->rows(); ++i) {
      const double v = tree.evaluate(x_->row(i), 0);
      total_[i] += v - c[i];
      c[i] = v;
    }
  }
}

}  // namespace cloglog

// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "cloglog/matrix.hpp"
#include "cloglog/rng.hpp"
#include "cloglog/special_math.hpp"

namespace cloglog {

// Category index k (1-based) goes left iff p(k - 1) <= C_b, where p is the
// cdf of a Geometric(1/3) variable on {0, 1, 2, ...}.
double category_rank_cdf(int m);
bool category_goes_left(int k, double threshold);

struct SplitRule {
  enum class Kind : std::uint8_t { kPredictor, kCategory };

  Kind kind = Kind::kPredictor;
  int var = 0;             // predictor column
  int cut = 0;             // index into the candidate grid of `var`
  double threshold = 0.0;  // cut value, or C_b for category rules

  bool goes_left(std::span<const double> x, int k) const {
    if (kind == Kind::kPredictor) return x[static_cast<std::size_t>(var)] <= threshold;
    return category_goes_left(k, threshold);
  }
  bool operator==(const SplitRule&) const = default;
};

struct TreeNode {
  int left = -1;
  int right = -1;
  int parent = -1;
  int depth = 0;
  SplitRule rule;
  double value = 0.0;

  bool is_leaf() const { return left < 0; }
  bool operator==(const TreeNode&) const = default;
};

// Binary decision tree stored as a node array; node 0 is the root.
class Tree {
 public:
  Tree();
  explicit Tree(std::vector<TreeNode> nodes);

  std::size_t size() const { return nodes_.size(); }
  const TreeNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  bool is_root_only() const { return nodes_.size() == 1; }

  std::vector<int> leaves() const;
  std::vector<int> internal_nodes() const;
  // Internal nodes whose children are both leaves.
  std::vector<int> prunable_nodes() const;
  int max_depth() const;

  // k is the 1-based category/bin index, or 0 when the forest has no
  // category slot.
  int find_leaf(std::span<const double> x, int k = 0) const {
    int id = 0;
    while (!nodes_[static_cast<std::size_t>(id)].is_leaf()) {
      const TreeNode& n = nodes_[static_cast<std::size_t>(id)];
      id = n.rule.goes_left(x, k) ? n.left : n.right;
    }
    return id;
  }
  double evaluate(std::span<const double> x, int k = 0) const {
    return nodes_[static_cast<std::size_t>(find_leaf(x, k))].value;
  }
  // Adds the tree's value at (x, k) to out[k - 1] for k = 1..out.size(),
  // visiting each leaf at most once.
  void accumulate_categories(std::span<const double> x, std::span<double> out) const;

  void grow(int leaf, const SplitRule& rule);
  void prune(int node);
  void set_rule(int node, const SplitRule& rule);
  // Values in leaves() order.
  void set_leaf_values(std::span<const double> values);
  void set_value(int node, double value);

  bool operator==(const Tree&) const = default;

 private:
  void accumulate_range(int id, std::span<const double> x, int lo, int hi,
                        std::span<double> out) const;

  std::vector<TreeNode> nodes_;
};

// Candidate cutpoints per predictor: up to `max_cuts` empirical quantiles.
class SplitGrid {
 public:
  SplitGrid() = default;
  explicit SplitGrid(std::vector<std::vector<double>> cuts) : cuts_(std::move(cuts)) {}
  static SplitGrid from_data(const Matrix& x, int max_cuts = 100);

  std::size_t num_predictors() const { return cuts_.size(); }
  std::span<const double> cuts(std::size_t j) const { return cuts_[j]; }

 private:
  std::vector<std::vector<double>> cuts_;
};

struct DepthPrior {
  double alpha = 0.95;
  double beta = 2.0;
  double split_probability(int depth) const;
};

// Prior over split rules: slot j ~ probs, then a uniform cutpoint on the
// grid of j, or C_b ~ Uniform(0, 1) for the category slot.
struct SplitPrior {
  std::shared_ptr<const SplitGrid> grid;
  int num_categories = 0;
  std::vector<double> probs;

  SplitPrior() = default;
  SplitPrior(std::shared_ptr<const SplitGrid> grid, int num_categories);

  // A single category carries no information, so no slot is created for it.
  bool has_category_slot() const { return num_categories >= 2; }
  std::size_t num_predictors() const { return grid ? grid->num_predictors() : 0; }
  std::size_t num_slots() const { return num_predictors() + (has_category_slot() ? 1 : 0); }
  SplitRule draw(Rng& rng) const;
  double log_prob(const SplitRule& rule) const;
};

struct NormalLeafPrior {
  double sigma_mu = 1.0;
};

struct LeafStats {
  double count = 0.0;     // A
  double exposure = 0.0;  // B
};

struct NormalLeafStats {
  double weight = 0.0;        // sum of observation weights
  double weighted_sum = 0.0;  // sum of weight * partial residual
};

class Forest {
 public:
  Forest() = default;
  Forest(std::size_t num_trees, std::shared_ptr<const SplitGrid> grid, int num_categories,
         DepthPrior depth = {});

  std::size_t num_trees() const { return trees_.size(); }
  const Tree& tree(std::size_t t) const { return trees_[t]; }
  Tree& tree(std::size_t t) { return trees_[t]; }
  const std::vector<Tree>& trees() const { return trees_; }

  const SplitPrior& split_prior() const { return split_; }
  std::span<const double> split_probs() const { return split_.probs; }
  void set_split_probs(std::vector<double> probs);
  const DepthPrior& depth_prior() const { return depth_; }
  bool has_category_slot() const { return split_.has_category_slot(); }
  int num_categories() const { return split_.num_categories; }

  // Throws SchemaError on a dimension mismatch.
  double evaluate(std::span<const double> x, int k = 0) const;
  // r(x, k) for k = 1..num_categories.
  std::vector<double> evaluate_categories(std::span<const double> x) const;
  // Number of splits per slot, over the whole ensemble.
  std::vector<double> split_counts() const;

 private:
  std::vector<Tree> trees_;
  SplitPrior split_;
  DepthPrior depth_;
};

double tree_log_prior(const Tree& tree, const DepthPrior& depth, const SplitPrior& splits);

// Sum over leaves of a log b - lgamma(a) + lgamma(a + A) - (a + A) log(b + B).
// Throws NumericalError when any input is non-finite.
double integrated_log_marginal(std::span<const LeafStats> stats, const LogGammaPrior& prior);
// Normal leaves, unit observation variance, weighted observations; terms
// that do not depend on the tree are dropped.
double integrated_log_marginal(std::span<const NormalLeafStats> stats,
                               const NormalLeafPrior& prior);

std::vector<double> draw_leaves(std::span<const LeafStats> stats, const LogGammaPrior& prior,
                                Rng& rng);
std::vector<double> draw_leaves(std::span<const NormalLeafStats> stats,
                                const NormalLeafPrior& prior, Rng& rng);

enum class TreeMove : std::uint8_t { kGrow, kPrune, kChange };

inline constexpr double kGrowProb = 0.4;
inline constexpr double kPruneProb = 0.4;
inline constexpr double kChangeProb = 0.2;

struct TreeProposal {
  Tree tree;
  TreeMove move = TreeMove::kGrow;
  double log_q_forward = 0.0;
  double log_q_reverse = 0.0;
};

TreeProposal propose_tree(const Tree& current, const SplitPrior& splits, Rng& rng);

// log of the Metropolis-Hastings ratio; -inf when the proposal's marginal is
// not finite.
template <class Stats, class Prior>
double acceptance_log_ratio(const Tree& current, const Tree& proposal, double log_q_forward,
                            double log_q_reverse, std::span<const Stats> current_stats,
                            std::span<const Stats> proposal_stats, const Prior& leaf_prior,
                            const DepthPrior& depth, const SplitPrior& splits);

struct BackfitStep {
  TreeMove move = TreeMove::kGrow;
  bool accepted = false;
  double log_ratio = 0.0;
};

// Maps a candidate structure for tree t to per-leaf statistics (leaves()
// order) against the partial residual of tree t.
using LeafStatsProvider = std::function<std::vector<LeafStats>(const Tree&)>;
using NormalStatsProvider = std::function<std::vector<NormalLeafStats>(const Tree&)>;

// One grow/prune/change Metropolis-Hastings move on tree t followed by a
// Gibbs draw of its leaves.
BackfitStep backfit_tree(Forest& forest, std::size_t t, const LeafStatsProvider& provider,
                         const LogGammaPrior& prior, Rng& rng);
BackfitStep backfit_tree(Forest& forest, std::size_t t, const NormalStatsProvider& provider,
                         const NormalLeafPrior& prior, Rng& rng);

// Posterior draw of split probabilities: Dirichlet(1 + n_1, ..., 1 + n_P)
// with a trailing (w + n_{P+1}) entry when `category_weight` is set (the
// last entry of `counts` is then the category slot).
std::vector<double> update_split_probs(std::span<const double> counts,
                                       std::optional<double> category_weight, Rng& rng);

// Draws a tree structure from the branching-process prior (leaf values 0).
Tree sample_tree_prior(const DepthPrior& depth, const SplitPrior& splits, Rng& rng);

// Poisson-gamma backfitting over "exposure units". Each unit u refers to a
// data row and a category slot and contributes count[u] to A and
// base[u] * exp(eta_u) to B of the leaf it falls into, where eta_u is the
// fit of all other trees.
class ExposureEnsemble {
 public:
  ExposureEnsemble(Forest forest, const Matrix& x);

  void set_units(std::vector<int> rows, std::vector<int> slots);
  std::size_t num_units() const { return rows_.size(); }
  int unit_row(std::size_t u) const { return rows_[u]; }
  int unit_slot(std::size_t u) const { return slots_[u]; }
  std::span<const int> unit_rows() const { return rows_; }
  std::span<const int> unit_slots() const { return slots_; }

  std::vector<double>& counts() { return counts_; }
  std::vector<double>& bases() { return bases_; }
  std::span<const double> fit() const { return total_; }

  // Statistics for a candidate replacement of tree t.
  std::vector<LeafStats> stats_for(const Tree& candidate, std::size_t t) const;

  // Backfits every tree once. `exposure_scale` multiplies every B_l and
  // exists only for negative-control calibration runs.
  void sweep(const LogGammaPrior& prior, Rng& rng, double exposure_scale = 1.0);
  // Dirichlet update of split probabilities; no-op without a category slot.
  void update_split_probs(double category_weight, Rng& rng);

  const Forest& forest() const { return forest_; }
  // Replaces the ensemble (e.g. a fixed or restored forest) keeping units.
  void set_forest(Forest forest);

 private:
  void recompute_contributions();
  void prepare_tree(std::size_t t);
  void refresh_tree(std::size_t t);
  std::vector<LeafStats> accumulate(const Tree& candidate, std::span<const double> weighted,
                                    double scale) const;

  Forest forest_;
  const Matrix* x_;
  std::vector<int> rows_;
  std::vector<int> slots_;
  std::vector<double> counts_;
  std::vector<double> bases_;
  std::vector<std::vector<double>> contrib_;
  std::vector<double> total_;
  std::vector<double> weighted_base_;  // scratch: base * exp(eta) for the active tree
};

// Weighted normal-leaf backfitting on residual targets (unit variance).
class GaussianEnsemble {
 public:
  GaussianEnsemble(Forest forest, const Matrix& x);

  void set_targets(std::span<const double> targets, std::span<const double> weights);
  void sweep(const NormalLeafPrior& prior, Rng& rng);
  std::span<const double> fit() const { return total_; }
  const Forest& forest() const { return forest_; }
  std::vector<NormalLeafStats> stats_for(const Tree& candidate, std::size_t t) const;

 private:
  Forest forest_;
  const Matrix* x_;
  std::vector<double> targets_;
  std::vector<double> weights_;
  std::vector<std::vector<double>> contrib_;
  std::vector<double> total_;
  std::vector<double> partial_;
};

// Exponent clamp used when forming exp(gamma + r) style terms.
inline constexpr double kExponentClamp = 30.0;

}  // namespace cloglog

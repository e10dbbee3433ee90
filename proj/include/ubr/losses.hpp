#pragma once

#include <cstddef>
#include <vector>

#include "ubr/diffcore/graph.hpp"

namespace ubr {

/// g x m matrix of slice scores; row i holds volume i's sampled slices in
/// ascending slice order.
class ScoreTable {
 public:
  ScoreTable(std::size_t volumes, std::size_t slices, std::vector<double> scores);
  ScoreTable(std::size_t volumes, std::size_t slices) : ScoreTable(volumes, slices, std::vector<double>(volumes * slices)) {}

  std::size_t volumes() const noexcept { return volumes_; }
  std::size_t slices() const noexcept { return slices_; }
  double operator()(std::size_t i, std::size_t j) const { return scores_[i * slices_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return scores_[i * slices_ + j]; }
  const std::vector<double>& values() const noexcept { return scores_; }

 private:
  std::size_t volumes_;
  std::size_t slices_;
  std::vector<double> scores_;
};

struct LossTerm {
  double value = 0.0;
  std::vector<double> grad;  // d value / d S(i,j), row-major g x m
};

/// Logistic loss over consecutive score gaps: -sum log sigmoid(S(i,j+1) - S(i,j)).
LossTerm order_loss(const ScoreTable& scores);

/// Smooth-L1 penalty on second differences: sum f(D(i,j+2) - D(i,j+1)) with
/// D(i,j) = S(i,j) - S(i,j-1).
LossTerm distance_loss(const ScoreTable& scores);

struct LossReport {
  double order = 0.0;
  double dist = 0.0;
  double total = 0.0;
  std::vector<double> grad;
};

/// order + dist_weight * dist. With m == 2 the distance term is 0.
/// `dist_weight` defaults to the unweighted sum; 0 disables the term.
LossReport total_loss(const ScoreTable& scores, double dist_weight = 1.0);

/// The same losses recorded on a graph; `scores` must be a [g,m] node.
/// Independent of the closed-form gradients above, used to cross-check them.
diff::Var order_loss_graph(diff::Graph& graph, diff::Var scores);
diff::Var distance_loss_graph(diff::Graph& graph, diff::Var scores);
diff::Var total_loss_graph(diff::Graph& graph, diff::Var scores, double dist_weight = 1.0);

}  // namespace ubr

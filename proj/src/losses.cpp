#include "ubr/losses.hpp"

#include "ubr/diffcore/scalar.hpp"
#include "ubr/error.hpp"

namespace ubr {

ScoreTable::ScoreTable(std::size_t volumes, std::size_t slices, std::vector<double> scores)
    : volumes_(volumes), slices_(slices), scores_(std::move(scores)) {
  if (volumes_ == 0) throw usage_error("score table needs at least one volume");
  if (slices_ == 0) throw usage_error("score table needs at least one slice per volume");
  if (scores_.size() != volumes_ * slices_) {
    throw ShapeError("scores", "score table " + std::to_string(volumes_) + "x" + std::to_string(slices_) + " needs " +
                                   std::to_string(volumes_ * slices_) + " scores, got " +
                                   std::to_string(scores_.size()));
  }
}

LossTerm order_loss(const ScoreTable& s) {
  if (s.slices() < 2) throw usage_error("order loss needs m >= 2, got m = " + std::to_string(s.slices()));
  const std::size_t m = s.slices();
  LossTerm out;
  out.grad.assign(s.volumes() * m, 0.0);
  for (std::size_t i = 0; i < s.volumes(); ++i) {
    for (std::size_t j = 0; j + 1 < m; ++j) {
      const double h = diff::sigmoid(s(i, j + 1) - s(i, j));
      out.value -= diff::log_probability(h);
      // d(-log h(x))/dx = -(1 - h), zero inside the clamp.
      const double g = -diff::log_probability_derivative(h) * h * (1.0 - h);
      out.grad[i * m + j + 1] += g;
      out.grad[i * m + j] -= g;
    }
  }
  return out;
}

LossTerm distance_loss(const ScoreTable& s) {
  if (s.slices() < 3) throw usage_error("distance loss needs m >= 3, got m = " + std::to_string(s.slices()));
  const std::size_t m = s.slices();
  LossTerm out;
  out.grad.assign(s.volumes() * m, 0.0);
  for (std::size_t i = 0; i < s.volumes(); ++i) {
    for (std::size_t j = 0; j + 2 < m; ++j) {
      const double x = (s(i, j + 2) - s(i, j + 1)) - (s(i, j + 1) - s(i, j));
      out.value += diff::smooth_l1(x);
      const double d = diff::smooth_l1_derivative(x);
      out.grad[i * m + j + 2] += d;
      out.grad[i * m + j + 1] -= 2.0 * d;
      out.grad[i * m + j] += d;
    }
  }
  return out;
}

LossReport total_loss(const ScoreTable& scores, double dist_weight) {
  auto order = order_loss(scores);
  LossReport report;
  report.order = order.value;
  report.grad = std::move(order.grad);
  if (scores.slices() >= 3) {
    const auto dist = distance_loss(scores);
    report.dist = dist.value;
    for (std::size_t k = 0; k < report.grad.size(); ++k) report.grad[k] += dist_weight * dist.grad[k];
  }
  report.total = report.order + dist_weight * report.dist;
  return report;
}

diff::Var order_loss_graph(diff::Graph& graph, diff::Var scores) {
  const auto gaps = graph.adjacent_diff(scores);
  const auto logp = graph.log_probability(graph.sigmoid(gaps));
  return graph.scale(graph.sum(logp), -1.0);
}

diff::Var distance_loss_graph(diff::Graph& graph, diff::Var scores) {
  const auto second = graph.adjacent_diff(graph.adjacent_diff(scores));
  return graph.sum(graph.smooth_l1(second));
}

diff::Var total_loss_graph(diff::Graph& graph, diff::Var scores, double dist_weight) {
  const auto order = order_loss_graph(graph, scores);
  if (graph.value(scores).extent(1) < 3) return order;
  return graph.add(order, graph.scale(distance_loss_graph(graph, scores), dist_weight));
}

}  // namespace ubr

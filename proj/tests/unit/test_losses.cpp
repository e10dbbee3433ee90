#include <doctest.h>

#include <cmath>
#include <random>

#include "ubr/diffcore/grad_check.hpp"
#include "ubr/losses.hpp"

using namespace ubr;

namespace {

ScoreTable random_table(std::size_t g, std::size_t m, std::uint64_t seed, double spread = 2.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-spread, spread);
  ScoreTable t(g, m);
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = 0; j < m; ++j) t(i, j) = u(rng);
  }
  return t;
}

double central_difference(const ScoreTable& table, std::size_t index, double (*f)(const ScoreTable&)) {
  const double h = 1e-6;
  ScoreTable plus = table, minus = table;
  plus(index / table.slices(), index % table.slices()) += h;
  minus(index / table.slices(), index % table.slices()) -= h;
  return (f(plus) - f(minus)) / (2 * h);
}

double order_value(const ScoreTable& t) { return order_loss(t).value; }
double dist_value(const ScoreTable& t) { return distance_loss(t).value; }
double total_value(const ScoreTable& t) { return total_loss(t).total; }

}  // namespace

TEST_CASE("order loss unit values") {
  CHECK(std::fabs(order_loss(ScoreTable(1, 2, {0, 0})).value - std::log(2.0)) <= 1e-12);
  CHECK(order_loss(ScoreTable(1, 2, {0, 50})).value < 1e-12);
  CHECK(std::fabs(order_loss(ScoreTable(1, 2, {0, 1})).value - 0.3132617) <= 1e-6);
  // log1p(exp(-1)) to full precision
  CHECK(order_loss(ScoreTable(1, 2, {0, 1})).value == doctest::Approx(0.31326168751822286).epsilon(1e-14));
  CHECK_THROWS(order_loss(ScoreTable(1, 1, {0})));
}

TEST_CASE("order loss stays finite for extreme gaps") {
  const auto l = order_loss(ScoreTable(1, 2, {0, -1000}));
  CHECK(std::isfinite(l.value));
  for (double g : l.grad) CHECK(std::isfinite(g));
}

TEST_CASE("distance loss unit values") {
  CHECK(distance_loss(ScoreTable(1, 3, {0, 1, 1.5})).value == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(std::fabs(distance_loss(ScoreTable(1, 3, {0, 1, 1.5})).value - 0.125) <= 1e-12);
  CHECK(distance_loss(ScoreTable(1, 4, {0, 1, 2, 5})).value == 1.5);
  CHECK(distance_loss(ScoreTable(2, 5, {-3, -1, 1, 3, 5, 0.25, 0.5, 0.75, 1.0, 1.25})).value == 0.0);
  CHECK_THROWS(distance_loss(ScoreTable(1, 2, {0, 1})));
}

TEST_CASE("distance loss is zero iff rows are arithmetic") {
  ScoreTable t(1, 6, {0, 2, 4, 6, 8, 10});
  CHECK(distance_loss(t).value == 0.0);
  t(0, 3) += 1e-3;
  CHECK(distance_loss(t).value > 0.0);
}

TEST_CASE("total loss composition") {
  const auto t = random_table(3, 8, 4);
  const auto r = total_loss(t);
  CHECK(r.total == r.order + r.dist);
  const auto o = order_loss(t), d = distance_loss(t);
  CHECK(r.order == o.value);
  CHECK(r.dist == d.value);
  for (std::size_t i = 0; i < r.grad.size(); ++i) CHECK(r.grad[i] == doctest::Approx(o.grad[i] + d.grad[i]).epsilon(1e-15));

  const auto constant = total_loss(ScoreTable(3, 8, std::vector<double>(24, 1.7)));
  CHECK(constant.dist == 0.0);
  CHECK(constant.order == doctest::Approx(3 * 7 * std::log(2.0)).epsilon(1e-12));

  std::vector<double> ramp;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 8; ++j) ramp.push_back(60.0 * j);
  CHECK(total_loss(ScoreTable(2, 8, ramp)).total < 1e-12);

  const auto pair = total_loss(ScoreTable(2, 2, {0, 1, 0, 1}));
  CHECK(pair.dist == 0.0);
  CHECK(pair.total == pair.order);

  const auto weighted = total_loss(t, 0.25);
  CHECK(weighted.total == r.order + 0.25 * r.dist);
}

TEST_CASE("losses are invariant to per-row translation") {
  const auto t = random_table(4, 8, 9);
  ScoreTable shifted = t;
  const double c[] = {3.0, -7.25, 0.5, 100.0};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) shifted(i, j) += c[i];
  const auto a = total_loss(t), b = total_loss(shifted);
  CHECK(std::fabs(a.order - b.order) <= 1e-12);
  CHECK(std::fabs(a.dist - b.dist) <= 1e-12);
  CHECK(std::fabs(a.total - b.total) <= 1e-12);
}

TEST_CASE("order loss decreases in each forward gap") {
  ScoreTable t(1, 4, {0, 0.5, 0.2, 1});
  double prev = order_loss(t).value;
  for (int step = 0; step < 20; ++step) {
    t(0, 3) += 0.3;
    const double now = order_loss(t).value;
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("analytic loss gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto t = random_table(3, 8, seed);
    const auto o = order_loss(t), d = distance_loss(t);
    const auto r = total_loss(t);
    for (std::size_t k = 0; k < 24; ++k) {
      CHECK(o.grad[k] == doctest::Approx(central_difference(t, k, order_value)).epsilon(1e-6));
      CHECK(d.grad[k] == doctest::Approx(central_difference(t, k, dist_value)).epsilon(1e-6));
      CHECK(r.grad[k] == doctest::Approx(central_difference(t, k, total_value)).epsilon(1e-6));
    }
  }
}

TEST_CASE("graph losses agree with the closed form") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto t = random_table(3, 8, seed);
    diff::Graph graph;
    const diff::Var s = graph.parameter(diff::Tensor({3, 8}, t.values()));
    const diff::Var total = total_loss_graph(graph, s, 1.0);
    graph.backward(total);
    const auto r = total_loss(t);
    CHECK(graph.value(total)[0] == doctest::Approx(r.total).epsilon(1e-12));
    for (std::size_t k = 0; k < 24; ++k) CHECK(graph.grad(s)[k] == doctest::Approx(r.grad[k]).epsilon(1e-10));
    diff::Graph g2;
    const diff::Var s2 = g2.parameter(diff::Tensor({3, 8}, t.values()));
    CHECK(g2.value(order_loss_graph(g2, s2))[0] == doctest::Approx(r.order).epsilon(1e-12));
    CHECK(g2.value(distance_loss_graph(g2, s2))[0] == doctest::Approx(r.dist).epsilon(1e-12));
  }
}

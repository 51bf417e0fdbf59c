#pragma once

// Independent reference implementations shared by the unit and acceptance
// tests. Each one follows the textbook definition as literally as possible
// and is deliberately slow.

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "avstress/collision.hpp"
#include "avstress/mdp.hpp"
#include "avstress/rng.hpp"

namespace avstress::testing {

// A_t = sum_k (gamma lambda)^k delta_{t+k}, stopping after the first done.
inline std::vector<double> brute_force_gae(const std::vector<double>& r,
                                           const std::vector<double>& v,
                                           const std::vector<std::uint8_t>& done, double boot,
                                           double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? v[t + 1] : boot;
    delta[t] = r[t] + gamma * (done[t] ? 0.0 : next) - v[t];
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      adv[t] += weight * delta[k];
      if (done[k]) break;
      weight *= gamma * lambda;
    }
  }
  return adv;
}

inline FiniteMdp random_mdp(Rng& rng, int states, int actions, int support = 3) {
  FiniteMdp m;
  m.num_states = states;
  m.num_actions = actions;
  m.transitions.assign(states, std::vector<TransitionRow>(actions));
  m.reward = Eigen::MatrixXd(states, actions);
  for (int s = 0; s < states; ++s) {
    for (int a = 0; a < actions; ++a) {
      m.reward(s, a) = rng.uniform(-1, 1);
      TransitionRow row;
      double total = 0;
      for (int k = 0; k < support; ++k) {
        const double w = rng.uniform(0.1, 1.0);
        row.push_back({static_cast<int>(rng.below(states)), w});
        total += w;
      }
      for (auto& t : row) t.prob /= total;
      m.transitions[s][a] = row;
    }
  }
  return m;
}

// Dense Bellman iteration to machine precision. With `choice` set, row
// (s, a) is taken from model choice[s][a] of the uncertainty set.
inline Eigen::MatrixXd dense_q(const FiniteMdp& m, double gamma,
                               const std::vector<std::vector<int>>* choice = nullptr,
                               const UncertaintySet* u = nullptr) {
  std::vector<Eigen::MatrixXd> P(m.num_actions, Eigen::MatrixXd::Zero(m.num_states, m.num_states));
  for (int s = 0; s < m.num_states; ++s) {
    for (int a = 0; a < m.num_actions; ++a) {
      const TransitionRow& row = choice ? u->models[s][a][(*choice)[s][a]] : m.transitions[s][a];
      for (const auto& t : row) P[a](s, t.next) += t.prob;
    }
  }
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(m.num_states, m.num_actions);
  for (int it = 0; it < 20000; ++it) {
    const Eigen::VectorXd v = q.rowwise().maxCoeff();
    Eigen::MatrixXd next(m.num_states, m.num_actions);
    for (int a = 0; a < m.num_actions; ++a) next.col(a) = m.reward.col(a) + gamma * P[a] * v;
    if ((next - q).cwiseAbs().maxCoeff() < 1e-14) return next;
    q = next;
  }
  return q;
}

// Nature fixes one model per (s, a); the robust Q is the elementwise minimum
// over every such assignment. Exponential in states x actions.
inline Eigen::MatrixXd exhaustive_robust_q(const FiniteMdp& m, const UncertaintySet& u,
                                           double gamma) {
  const int cells = m.num_states * m.num_actions;
  std::vector<std::vector<int>> choice(m.num_states, std::vector<int>(m.num_actions, 0));
  Eigen::MatrixXd best = Eigen::MatrixXd::Constant(m.num_states, m.num_actions, 1e300);
  while (true) {
    best = best.cwiseMin(dense_q(m, gamma, &choice, &u));
    // Mixed-radix increment over the per-cell model indices.
    int c = 0;
    for (; c < cells; ++c) {
      const int s = c / m.num_actions, a = c % m.num_actions;
      if (++choice[s][a] < static_cast<int>(u.models[s][a].size())) break;
      choice[s][a] = 0;
    }
    if (c == cells) break;
  }
  return best;
}

inline bool rect_contains(const OrientedRect& r, Vec2 p) {
  const Vec2 u = unit_from_angle(r.heading);
  const Vec2 n{-u.y, u.x};
  const Vec2 q = p - r.center;
  return std::abs(q.dot(u)) < 0.5 * r.length && std::abs(q.dot(n)) < 0.5 * r.width;
}

// Samples a on a grid with the given spacing (metres); any sample inside b,
// or any corner of b inside a, counts as overlap.
inline bool sampled_overlap(const OrientedRect& a, const OrientedRect& b, double spacing) {
  const Vec2 u = unit_from_angle(a.heading);
  const Vec2 nrm{-u.y, u.x};
  const int nx = std::max(1, static_cast<int>(std::ceil(a.length / spacing)));
  const int ny = std::max(1, static_cast<int>(std::ceil(a.width / spacing)));
  for (int i = 0; i <= nx; ++i) {
    const double x = (static_cast<double>(i) / nx - 0.5) * a.length * 0.999999;
    for (int j = 0; j <= ny; ++j) {
      const double y = (static_cast<double>(j) / ny - 0.5) * a.width * 0.999999;
      if (rect_contains(b, a.center + x * u + y * nrm)) return true;
    }
  }
  for (const Vec2& c : b.corners()) {
    if (rect_contains(a, c)) return true;
  }
  return false;
}

inline OrientedRect grown(OrientedRect r, double margin) {
  r.length += 2 * margin;
  r.width += 2 * margin;
  return r;
}

inline OrientedRect random_rect(Rng& rng, Vec2 around, double spread) {
  return {{around.x + rng.uniform(-spread, spread), around.y + rng.uniform(-spread, spread)},
          rng.uniform(-kPi, kPi), rng.uniform(2.0, 6.0), rng.uniform(1.0, 2.5)};
}

inline OrientedRect rigid_transform(OrientedRect r, double rot, Vec2 shift) {
  const double c = std::cos(rot), s = std::sin(rot);
  r.center = Vec2{c * r.center.x - s * r.center.y, s * r.center.x + c * r.center.y} + shift;
  r.heading = wrap_angle(r.heading + rot);
  return r;
}

}  // namespace avstress::testing

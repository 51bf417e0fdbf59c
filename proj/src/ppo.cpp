#include "avstress/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace avstress {

void validate(const PpoConfig& c) {
  if (!(c.gamma >= 0.0 && c.gamma < 1.0)) throw ConfigError("train.gamma must lie in [0, 1)");
  if (!(c.gae_lambda >= 0.0 && c.gae_lambda <= 1.0)) {
    throw ConfigError("train.gae_lambda must lie in [0, 1]");
  }
  if (!(c.clip_eps > 0.0)) throw ConfigError("train.clip_eps must be positive");
  if (!(c.value_clip > 0.0)) throw ConfigError("train.value_clip must be positive");
  if (!(c.entropy_coef >= 0.0)) throw ConfigError("train.entropy_coef must be non-negative");
  if (!(c.actor_lr > 0.0 && c.critic_lr > 0.0)) {
    throw ConfigError("train learning rates must be positive");
  }
  if (c.epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (c.minibatches < 1) throw ConfigError("train.minibatches must be >= 1");
  if (!(c.max_grad_norm >= 0.0)) throw ConfigError("train.max_grad_norm must be non-negative");
  if (!(c.log_ratio_clamp > 0.0)) throw ConfigError("train.log_ratio_clamp must be positive");
}

void RolloutBatch::resize(int n_streams, int n_steps) {
  streams = n_streams;
  steps = n_steps;
  const auto n = static_cast<std::size_t>(n_streams) * static_cast<std::size_t>(n_steps);
  obs = Eigen::MatrixXd::Zero(kObservationDim, static_cast<Eigen::Index>(n));
  actions.assign(n, 0);
  log_probs.assign(n, 0.0);
  values.assign(n, 0.0);
  rewards.assign(n, 0.0);
  dones.assign(n, 0);
  valid.assign(n, 1);
  bootstrap_values.assign(static_cast<std::size_t>(n_streams), 0.0);
  advantages.clear();
  returns.clear();
}

void RolloutBatch::check_shapes() const {
  const std::size_t n = static_cast<std::size_t>(streams) * static_cast<std::size_t>(steps);
  if (actions.size() != n || log_probs.size() != n || values.size() != n ||
      rewards.size() != n || dones.size() != n || valid.size() != n ||
      static_cast<std::size_t>(obs.cols()) != n ||
      bootstrap_values.size() != static_cast<std::size_t>(streams)) {
    throw DimensionError("rollout batch sequences differ in length");
  }
  if ((!advantages.empty() && advantages.size() != n) || (!returns.empty() && returns.size() != n)) {
    throw DimensionError("rollout batch advantages/returns differ in length");
  }
}

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<std::uint8_t>& dones, double bootstrap_value,
                      double gamma, double gae_lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw DimensionError("GAE inputs differ in length");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = bootstrap_value;
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * live * next_value - values[i];
    next_adv = delta + gamma * gae_lambda * live * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + values[i];
    next_value = values[i];
  }
  return out;
}

void compute_batch_gae(RolloutBatch& batch, double gamma, double gae_lambda) {
  batch.check_shapes();
  const std::size_t T = static_cast<std::size_t>(batch.steps);
  batch.advantages.assign(batch.size(), 0.0);
  batch.returns.assign(batch.size(), 0.0);
  for (int k = 0; k < batch.streams; ++k) {
    const std::size_t off = static_cast<std::size_t>(k) * T;
    auto slice = [&](const auto& v) {
      return std::vector<typename std::decay_t<decltype(v)>::value_type>(v.begin() + off,
                                                                         v.begin() + off + T);
    };
    const GaeResult g = compute_gae(slice(batch.rewards), slice(batch.values), slice(batch.dones),
                                    batch.bootstrap_values[k], gamma, gae_lambda);
    std::copy(g.advantages.begin(), g.advantages.end(), batch.advantages.begin() + off);
    std::copy(g.returns.begin(), g.returns.end(), batch.returns.begin() + off);
  }
}

void normalize_advantages(std::vector<double>& adv, const std::vector<std::uint8_t>& mask) {
  if (!mask.empty() && mask.size() != adv.size()) {
    throw DimensionError("advantage mask differs in length");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    if (mask.empty() || mask[i]) {
      sum += adv[i];
      ++count;
    }
  }
  if (count == 0) return;
  const double mean = sum / static_cast<double>(count);
  double var = 0.0;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    if (mask.empty() || mask[i]) var += (adv[i] - mean) * (adv[i] - mean);
  }
  var /= static_cast<double>(count);
  const double scale = 1.0 / std::sqrt(var + 1e-12);
  for (double& a : adv) a = (a - mean) * scale;
}

LossResult actor_loss(const NetParams& actor, const Eigen::MatrixXd& obs,
                      const std::vector<int>& actions, const Eigen::VectorXd& old_log_probs,
                      const Eigen::VectorXd& advantages, const PpoConfig& cfg) {
  const Eigen::Index m = obs.cols();
  if (m == 0 || static_cast<Eigen::Index>(actions.size()) != m || old_log_probs.size() != m ||
      advantages.size() != m) {
    throw DimensionError("actor loss inputs differ in length or are empty");
  }
  ForwardCache cache;
  const Eigen::MatrixXd logits = forward(actor, obs, &cache);
  Eigen::MatrixXd grad_logits(logits.rows(), m);
  LossResult out;
  double objective = 0.0;
  int clipped = 0;
  const double inv_m = 1.0 / static_cast<double>(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::VectorXd z = logits.col(i);
    const Eigen::VectorXd lp = log_softmax(z);
    const Eigen::VectorXd p = lp.array().exp().matrix();
    const int a = actions[static_cast<std::size_t>(i)];
    if (a < 0 || a >= z.size()) throw DimensionError("action index out of range");
    const double raw_log_ratio = lp[a] - old_log_probs[i];
    const double log_ratio = std::clamp(raw_log_ratio, -cfg.log_ratio_clamp, cfg.log_ratio_clamp);
    const double ratio = std::exp(log_ratio);
    if (!std::isfinite(ratio)) throw NumericError("non-finite probability ratio");
    const double adv = advantages[i];
    const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    const double unclipped_term = ratio * adv;
    const double clipped_term = clipped_ratio * adv;
    double d_surrogate_d_logp = 0.0;
    if (unclipped_term <= clipped_term) {
      objective += unclipped_term;
      if (log_ratio == raw_log_ratio) d_surrogate_d_logp = ratio * adv;
    } else {
      objective += clipped_term;
    }
    if (std::abs(ratio - 1.0) > cfg.clip_eps) ++clipped;
    out.approx_kl += (ratio - 1.0) - log_ratio;

    const double s = -(p.array() * lp.array()).sum();
    out.entropy += s;
    objective += cfg.entropy_coef * s;

    // d(log p_a)/dz = onehot(a) - p; dS/dz = -p .* (log p + S).
    Eigen::VectorXd g = -d_surrogate_d_logp * (-p);
    g[a] += -d_surrogate_d_logp;
    g += -cfg.entropy_coef * (-(p.array() * (lp.array() + s))).matrix();
    grad_logits.col(i) = g * inv_m;
  }
  out.loss = -objective * inv_m;
  out.entropy *= inv_m;
  out.approx_kl *= inv_m;
  out.clip_fraction = static_cast<double>(clipped) * inv_m;
  out.grads = backward(actor, cache, grad_logits);
  return out;
}

LossResult critic_loss(const NetParams& critic, const Eigen::MatrixXd& obs,
                       const Eigen::VectorXd& old_values, const Eigen::VectorXd& returns,
                       const PpoConfig& cfg) {
  const Eigen::Index m = obs.cols();
  if (m == 0 || old_values.size() != m || returns.size() != m) {
    throw DimensionError("critic loss inputs differ in length or are empty");
  }
  if (critic.output_dim() != 1) throw DimensionError("critic must have a single output");
  ForwardCache cache;
  const Eigen::MatrixXd v = forward(critic, obs, &cache);
  Eigen::MatrixXd grad(1, m);
  LossResult out;
  const double inv_m = 1.0 / static_cast<double>(m);
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double value = v(0, i);
    const double lo = old_values[i] - cfg.value_clip;
    const double hi = old_values[i] + cfg.value_clip;
    const double clipped_value = std::clamp(value, lo, hi);
    const double e_unclipped = (value - returns[i]) * (value - returns[i]);
    const double e_clipped = (clipped_value - returns[i]) * (clipped_value - returns[i]);
    if (e_unclipped >= e_clipped) {
      total += e_unclipped;
      grad(0, i) = 2.0 * (value - returns[i]) * inv_m;
    } else {
      total += e_clipped;
      const bool inside = value > lo && value < hi;
      grad(0, i) = inside ? 2.0 * (clipped_value - returns[i]) * inv_m : 0.0;
      if (!inside) out.clip_fraction += inv_m;
    }
  }
  out.loss = total * inv_m;
  out.grads = backward(critic, cache, grad);
  return out;
}

UpdateMetrics mappo_update(RolloutBatch& batch, NetParams& actor, NetParams& critic,
                           OptState& actor_opt, OptState& critic_opt, const PpoConfig& cfg,
                           Rng& rng) {
  batch.check_shapes();
  if (batch.advantages.size() != batch.size()) {
    throw UsageError("compute advantages before the policy update");
  }
  std::vector<double> adv = batch.advantages;
  normalize_advantages(adv, batch.valid);

  std::vector<std::size_t> actor_idx, critic_idx;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    critic_idx.push_back(i);
    if (batch.valid[i]) actor_idx.push_back(i);
  }
  UpdateMetrics metrics;
  if (actor_idx.empty()) return metrics;

  auto shuffle = [&](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  };
  auto gather = [&](const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
    Eigen::MatrixXd obs(batch.obs.rows(), static_cast<Eigen::Index>(end - begin));
    for (std::size_t j = begin; j < end; ++j) {
      obs.col(static_cast<Eigen::Index>(j - begin)) = batch.obs.col(static_cast<Eigen::Index>(idx[j]));
    }
    return obs;
  };

  int actor_batches = 0, critic_batches = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(actor_idx);
    shuffle(critic_idx);
    for (int mb = 0; mb < cfg.minibatches; ++mb) {
      const std::size_t a0 = actor_idx.size() * mb / cfg.minibatches;
      const std::size_t a1 = actor_idx.size() * (mb + 1) / cfg.minibatches;
      if (a1 > a0) {
        const Eigen::Index n = static_cast<Eigen::Index>(a1 - a0);
        std::vector<int> acts(n);
        Eigen::VectorXd old_lp(n), a_vec(n);
        for (Eigen::Index j = 0; j < n; ++j) {
          const std::size_t s = actor_idx[a0 + j];
          acts[j] = batch.actions[s];
          old_lp[j] = batch.log_probs[s];
          a_vec[j] = adv[s];
        }
        const LossResult r = actor_loss(actor, gather(actor_idx, a0, a1), acts, old_lp, a_vec, cfg);
        opt_step(actor, r.grads, actor_opt);
        metrics.actor_loss += r.loss;
        metrics.entropy += r.entropy;
        metrics.clip_fraction += r.clip_fraction;
        metrics.approx_kl += r.approx_kl;
        ++actor_batches;
      }
      const std::size_t c0 = critic_idx.size() * mb / cfg.minibatches;
      const std::size_t c1 = critic_idx.size() * (mb + 1) / cfg.minibatches;
      if (c1 > c0) {
        const Eigen::Index n = static_cast<Eigen::Index>(c1 - c0);
        Eigen::VectorXd old_v(n), ret(n);
        for (Eigen::Index j = 0; j < n; ++j) {
          const std::size_t s = critic_idx[c0 + j];
          old_v[j] = batch.values[s];
          ret[j] = batch.returns[s];
        }
        const LossResult r = critic_loss(critic, gather(critic_idx, c0, c1), old_v, ret, cfg);
        opt_step(critic, r.grads, critic_opt);
        metrics.critic_loss += r.loss;
        ++critic_batches;
      }
    }
  }
  if (actor_batches > 0) {
    metrics.actor_loss /= actor_batches;
    metrics.entropy /= actor_batches;
    metrics.clip_fraction /= actor_batches;
    metrics.approx_kl /= actor_batches;
  }
  if (critic_batches > 0) metrics.critic_loss /= critic_batches;
  metrics.optimizer_steps = actor_batches + critic_batches;
  return metrics;
}

}  // namespace avstress

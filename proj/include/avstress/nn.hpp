#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "avstress/rng.hpp"
#include "avstress/sim.hpp"

namespace avstress {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
           a.bias.size() == b.bias.size() && a.weight == b.weight && a.bias == b.bias;
  }
};

// Feedforward network with tanh hidden activations and a linear output layer.
// Logits for policies and values/Q-values are both linear outputs.
struct NetParams {
  std::vector<DenseLayer> layers;

  int input_dim() const;
  int output_dim() const;
  // Layer widths from input to output, e.g. {25, 64, 64, 5}.
  std::vector<int> dims() const;
  std::size_t num_params() const;
  bool all_finite() const;

  // Flattened in layer order, each layer weights (column-major) then bias.
  Eigen::VectorXd flat() const;
  void assign_flat(const Eigen::VectorXd& values);

  // Zero-valued parameters of the same shape.
  NetParams zeros_like() const;

  friend bool operator==(const NetParams&, const NetParams&) = default;
};

// Xavier-uniform hidden layers; the output layer is scaled by output_gain so
// fresh policies start close to uniform.
NetParams make_mlp(const std::vector<int>& dims, Rng& rng, double output_gain = 1.0);

// Intermediates of a batched forward pass. Columns are samples.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer
  std::vector<Eigen::MatrixXd> hidden;  // tanh outputs of hidden layers
  std::uint64_t fingerprint = 0;
};

std::uint64_t params_fingerprint(const NetParams& p);

Eigen::MatrixXd forward(const NetParams& p, const Eigen::MatrixXd& x, ForwardCache* cache = nullptr);
Eigen::VectorXd forward(const NetParams& p, const Eigen::VectorXd& x);

// Gradients of sum(output .* grad_output) with respect to every parameter.
// Throws UsageError if the cache was produced by different parameters.
NetParams backward(const NetParams& p, const ForwardCache& cache, const Eigen::MatrixXd& grad_output);

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clip; zero disables clipping.
  double max_grad_norm = 0.0;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct OptState {
  AdamConfig config;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;

  friend bool operator==(const OptState& a, const OptState& b) {
    return a.config == b.config && a.step == b.step && a.m.size() == b.m.size() &&
           a.v.size() == b.v.size() && a.m == b.m && a.v == b.v;
  }
};

OptState make_opt_state(const NetParams& p, const AdamConfig& config);

// In-place Adam step with bias correction. Non-finite gradients throw
// NumericError before anything is modified.
void opt_step(NetParams& p, const NetParams& grads, OptState& opt);

// Policy-head utilities over logits of any length.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits);
double entropy(const Eigen::VectorXd& logits);

struct CategoricalSample {
  int index = 0;
  double log_prob = 0.0;
};
CategoricalSample categorical_sample(const Eigen::VectorXd& logits, Rng& rng);
// Greedy choice; ties go to the lowest index.
int argmax(const Eigen::VectorXd& values);

// Observation normalization: positions / 100 m, speeds / 40 m/s.
inline constexpr double kPositionScale = 100.0;
inline constexpr double kSpeedScale = 40.0;
inline constexpr int kObservationDim = Observation::kRows * Observation::kFeatures;
Eigen::VectorXd encode_observation(const Observation& obs);

enum class CheckpointRole { AttackerActor, AttackerCritic, DefenderPpo, DefenderD3qn, D3qnTarget };
std::string_view to_string(CheckpointRole role);
CheckpointRole checkpoint_role_from_string(std::string_view s);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  CheckpointRole role = CheckpointRole::AttackerActor;
  std::uint64_t config_hash = 0;
  // Environment steps consumed when the checkpoint was written.
  std::int64_t train_steps = 0;
  NetParams params;
  std::optional<OptState> opt;
};

// Binary layout, little endian:
//   magic "AVSCKPT1", u32 version, u32 role, u64 config_hash, i64 train_steps,
//   u32 layer count L, (L+1) x u32 dims, u64 parameter count, f64 params,
//   u8 has_opt, [f64 lr, beta1, beta2, eps, max_grad_norm, i64 step, f64 m, f64 v],
//   u64 FNV-1a checksum of every preceding byte.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Throws ArtifactError if the file cannot be read, IntegrityError on
// corruption or unknown version, and ArtifactError on a config hash mismatch
// unless allow_hash_mismatch is set.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_hash = std::nullopt,
                           bool allow_hash_mismatch = false);

}  // namespace avstress

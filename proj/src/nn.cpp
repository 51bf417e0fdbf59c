#include "avstress/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace avstress {

int NetParams::input_dim() const {
  if (layers.empty()) throw DimensionError("network has no layers");
  return static_cast<int>(layers.front().weight.cols());
}

int NetParams::output_dim() const {
  if (layers.empty()) throw DimensionError("network has no layers");
  return static_cast<int>(layers.back().weight.rows());
}

std::vector<int> NetParams::dims() const {
  std::vector<int> out;
  if (layers.empty()) return out;
  out.push_back(input_dim());
  for (const DenseLayer& l : layers) out.push_back(static_cast<int>(l.weight.rows()));
  return out;
}

std::size_t NetParams::num_params() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

bool NetParams::all_finite() const {
  for (const DenseLayer& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

Eigen::VectorXd NetParams::flat() const {
  Eigen::VectorXd out(num_params());
  Eigen::Index k = 0;
  for (const DenseLayer& l : layers) {
    out.segment(k, l.weight.size()) = l.weight.reshaped();
    k += l.weight.size();
    out.segment(k, l.bias.size()) = l.bias;
    k += l.bias.size();
  }
  return out;
}

void NetParams::assign_flat(const Eigen::VectorXd& values) {
  if (static_cast<std::size_t>(values.size()) != num_params()) {
    throw DimensionError("flat parameter vector has " + std::to_string(values.size()) +
                         " entries, expected " + std::to_string(num_params()));
  }
  Eigen::Index k = 0;
  for (DenseLayer& l : layers) {
    l.weight.reshaped() = values.segment(k, l.weight.size());
    k += l.weight.size();
    l.bias = values.segment(k, l.bias.size());
    k += l.bias.size();
  }
}

NetParams NetParams::zeros_like() const {
  NetParams z;
  for (const DenseLayer& l : layers) {
    z.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                        Eigen::VectorXd::Zero(l.bias.size())});
  }
  return z;
}

NetParams make_mlp(const std::vector<int>& dims, Rng& rng, double output_gain) {
  if (dims.size() < 2) throw DimensionError("network needs at least input and output widths");
  for (int d : dims) {
    if (d <= 0) throw DimensionError("layer widths must be positive");
  }
  NetParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int in = dims[i], out = dims[i + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    const double gain = i + 2 == dims.size() ? output_gain : 1.0;
    DenseLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
        l.weight(r, c) = gain * rng.uniform(-limit, limit);
      }
    }
    p.layers.push_back(std::move(l));
  }
  return p;
}

std::uint64_t params_fingerprint(const NetParams& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const DenseLayer& l : p.layers) {
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(l.weight.data()),
                                 sizeof(double) * l.weight.size()),
                h ^ static_cast<std::uint64_t>(l.weight.rows()));
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(l.bias.data()),
                                 sizeof(double) * l.bias.size()),
                h);
  }
  return h;
}

Eigen::MatrixXd forward(const NetParams& p, const Eigen::MatrixXd& x, ForwardCache* cache) {
  if (x.rows() != p.input_dim()) {
    throw DimensionError("input has " + std::to_string(x.rows()) + " rows, network expects " +
                         std::to_string(p.input_dim()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->hidden.clear();
    cache->fingerprint = params_fingerprint(p);
  }
  Eigen::MatrixXd h = x;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const DenseLayer& l = p.layers[i];
    if (cache) cache->inputs.push_back(h);
    Eigen::MatrixXd z = l.weight * h;
    z.colwise() += l.bias;
    if (i + 1 < p.layers.size()) {
      h = z.array().tanh().matrix();
      if (cache) cache->hidden.push_back(h);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Eigen::VectorXd forward(const NetParams& p, const Eigen::VectorXd& x) {
  return forward(p, Eigen::MatrixXd(x), nullptr).col(0);
}

NetParams backward(const NetParams& p, const ForwardCache& cache, const Eigen::MatrixXd& grad_output) {
  if (cache.inputs.size() != p.layers.size() || cache.fingerprint != params_fingerprint(p)) {
    throw UsageError("forward cache does not belong to these parameters");
  }
  const Eigen::Index batch = cache.inputs.front().cols();
  if (grad_output.rows() != p.output_dim() || grad_output.cols() != batch) {
    throw DimensionError("grad_output shape does not match network output");
  }
  NetParams grads = p.zeros_like();
  Eigen::MatrixXd delta = grad_output;
  for (std::size_t i = p.layers.size(); i-- > 0;) {
    grads.layers[i].weight.noalias() = delta * cache.inputs[i].transpose();
    grads.layers[i].bias = delta.rowwise().sum();
    if (i == 0) break;
    Eigen::MatrixXd back = p.layers[i].weight.transpose() * delta;
    const Eigen::MatrixXd& h = cache.hidden[i - 1];
    delta = back.array() * (1.0 - h.array().square());
  }
  return grads;
}

OptState make_opt_state(const NetParams& p, const AdamConfig& config) {
  OptState s;
  s.config = config;
  s.m = Eigen::VectorXd::Zero(p.num_params());
  s.v = Eigen::VectorXd::Zero(p.num_params());
  return s;
}

void opt_step(NetParams& p, const NetParams& grads, OptState& opt) {
  const std::size_t n = p.num_params();
  if (grads.dims() != p.dims() || static_cast<std::size_t>(opt.m.size()) != n ||
      static_cast<std::size_t>(opt.v.size()) != n) {
    throw DimensionError("optimizer state, gradients and parameters differ in shape");
  }
  Eigen::VectorXd g = grads.flat();
  if (!g.allFinite()) throw NumericError("non-finite gradient rejected by optimizer");
  const AdamConfig& c = opt.config;
  if (c.max_grad_norm > 0.0) {
    const double norm = g.norm();
    if (norm > c.max_grad_norm) g *= c.max_grad_norm / norm;
  }
  opt.step += 1;
  opt.m = c.beta1 * opt.m + (1.0 - c.beta1) * g;
  opt.v = c.beta2 * opt.v + (1.0 - c.beta2) * g.cwiseProduct(g);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.step));
  const Eigen::ArrayXd m_hat = opt.m.array() / bc1;
  const Eigen::ArrayXd v_hat = opt.v.array() / bc2;
  const Eigen::VectorXd update = (c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon)).matrix();
  p.assign_flat(p.flat() - update);
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

double entropy(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd lp = log_softmax(logits);
  const Eigen::ArrayXd pr = lp.array().exp();
  return -(pr * lp.array()).sum();
}

CategoricalSample categorical_sample(const Eigen::VectorXd& logits, Rng& rng) {
  const Eigen::VectorXd lp = log_softmax(logits);
  const double u = rng.uniform();
  double cumulative = 0.0;
  int chosen = static_cast<int>(logits.size()) - 1;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    cumulative += std::exp(lp[i]);
    if (u < cumulative) {
      chosen = static_cast<int>(i);
      break;
    }
  }
  // Guard against rounding leaving the last bucket with zero mass.
  while (chosen > 0 && std::exp(lp[chosen]) == 0.0) --chosen;
  return {chosen, lp[chosen]};
}

int argmax(const Eigen::VectorXd& values) {
  int best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

Eigen::VectorXd encode_observation(const Observation& obs) {
  Eigen::VectorXd x(kObservationDim);
  for (int r = 0; r < Observation::kRows; ++r) {
    const auto& row = obs.rows[r];
    x[r * 5 + 0] = row[0];
    x[r * 5 + 1] = row[1] / kPositionScale;
    x[r * 5 + 2] = row[2] / kPositionScale;
    x[r * 5 + 3] = row[3] / kSpeedScale;
    x[r * 5 + 4] = row[4] / kSpeedScale;
  }
  return x;
}

std::string_view to_string(CheckpointRole role) {
  switch (role) {
    case CheckpointRole::AttackerActor: return "attacker_actor";
    case CheckpointRole::AttackerCritic: return "attacker_critic";
    case CheckpointRole::DefenderPpo: return "defender_ppo";
    case CheckpointRole::DefenderD3qn: return "defender_d3qn";
    case CheckpointRole::D3qnTarget: return "d3qn_target";
  }
  return "unknown";
}

CheckpointRole checkpoint_role_from_string(std::string_view s) {
  for (auto r : {CheckpointRole::AttackerActor, CheckpointRole::AttackerCritic,
                 CheckpointRole::DefenderPpo, CheckpointRole::DefenderD3qn,
                 CheckpointRole::D3qnTarget}) {
    if (to_string(r) == s) return r;
  }
  throw ConfigError("unknown checkpoint role '" + std::string(s) + "'");
}

namespace {

constexpr char kMagic[8] = {'A', 'V', 'S', 'C', 'K', 'P', 'T', '1'};
static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  void put_doubles(const double* p, std::size_t n) {
    put_raw(reinterpret_cast<const char*>(p), n * sizeof(double));
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end, std::string source)
      : bytes_(bytes), end_(end), source_(std::move(source)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void get_doubles(double* out, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(out, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) {
    if (end_ - pos_ < n) throw IntegrityError("corrupt checkpoint " + source_ + ": truncated");
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string source_;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (!ckpt.params.all_finite()) throw NumericError("refusing to save non-finite parameters");
  Writer w;
  w.put_raw(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(ckpt.version);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.role));
  w.put<std::uint64_t>(ckpt.config_hash);
  w.put<std::int64_t>(ckpt.train_steps);
  const std::vector<int> dims = ckpt.params.dims();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.params.layers.size()));
  for (int d : dims) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  const Eigen::VectorXd flat = ckpt.params.flat();
  w.put<std::uint64_t>(static_cast<std::uint64_t>(flat.size()));
  w.put_doubles(flat.data(), flat.size());
  w.put<std::uint8_t>(ckpt.opt ? 1 : 0);
  if (ckpt.opt) {
    const OptState& o = *ckpt.opt;
    if (static_cast<std::size_t>(o.m.size()) != ckpt.params.num_params() ||
        o.v.size() != o.m.size()) {
      throw DimensionError("optimizer state does not match parameters");
    }
    w.put<double>(o.config.learning_rate);
    w.put<double>(o.config.beta1);
    w.put<double>(o.config.beta2);
    w.put<double>(o.config.epsilon);
    w.put<double>(o.config.max_grad_norm);
    w.put<std::int64_t>(o.step);
    w.put_doubles(o.m.data(), o.m.size());
    w.put_doubles(o.v.data(), o.v.size());
  }
  const std::uint64_t checksum = fnv1a64(w.bytes());
  w.put<std::uint64_t>(checksum);

  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactError("cannot write checkpoint " + path.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw ArtifactError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_hash, bool allow_hash_mismatch) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot read checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string source = path.string();
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint64_t)) {
    throw IntegrityError("corrupt checkpoint " + source + ": truncated");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IntegrityError("corrupt checkpoint " + source + ": bad magic");
  }

  const std::size_t body_end = bytes.size() - sizeof(std::uint64_t);
  Reader r(bytes, body_end, source);
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.get<char>();
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint32_t>();
  if (ckpt.version != kCheckpointVersion) {
    throw IntegrityError("checkpoint " + source + " has format version " +
                         std::to_string(ckpt.version) + ", expected " +
                         std::to_string(kCheckpointVersion));
  }
  const auto role = r.get<std::uint32_t>();
  if (role > static_cast<std::uint32_t>(CheckpointRole::D3qnTarget)) {
    throw IntegrityError("corrupt checkpoint " + source + ": unknown role tag");
  }
  ckpt.role = static_cast<CheckpointRole>(role);
  ckpt.config_hash = r.get<std::uint64_t>();
  ckpt.train_steps = r.get<std::int64_t>();
  const auto n_layers = r.get<std::uint32_t>();
  if (n_layers == 0 || n_layers > 64) {
    throw IntegrityError("corrupt checkpoint " + source + ": implausible layer count");
  }
  std::vector<int> dims;
  for (std::uint32_t i = 0; i <= n_layers; ++i) {
    const auto d = r.get<std::uint32_t>();
    if (d == 0 || d > (1u << 20)) {
      throw IntegrityError("corrupt checkpoint " + source + ": implausible layer width");
    }
    dims.push_back(static_cast<int>(d));
  }
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    ckpt.params.layers.push_back({Eigen::MatrixXd::Zero(dims[i + 1], dims[i]),
                                  Eigen::VectorXd::Zero(dims[i + 1])});
  }
  const auto count = r.get<std::uint64_t>();
  if (count != ckpt.params.num_params()) {
    throw IntegrityError("corrupt checkpoint " + source +
                         ": parameter count does not match declared dimensions");
  }
  Eigen::VectorXd flat(static_cast<Eigen::Index>(count));
  r.get_doubles(flat.data(), count);
  ckpt.params.assign_flat(flat);
  const auto has_opt = r.get<std::uint8_t>();
  if (has_opt > 1) throw IntegrityError("corrupt checkpoint " + source + ": bad optimizer flag");
  if (has_opt) {
    OptState o;
    o.config.learning_rate = r.get<double>();
    o.config.beta1 = r.get<double>();
    o.config.beta2 = r.get<double>();
    o.config.epsilon = r.get<double>();
    o.config.max_grad_norm = r.get<double>();
    o.step = r.get<std::int64_t>();
    o.m.resize(static_cast<Eigen::Index>(count));
    o.v.resize(static_cast<Eigen::Index>(count));
    r.get_doubles(o.m.data(), count);
    r.get_doubles(o.v.data(), count);
    ckpt.opt = std::move(o);
  }
  if (r.pos() != body_end) {
    throw IntegrityError("corrupt checkpoint " + source + ": trailing bytes");
  }
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body_end, sizeof(stored));
  if (stored != fnv1a64(std::string_view(bytes.data(), body_end))) {
    throw IntegrityError("corrupt checkpoint " + source + ": checksum mismatch");
  }
  if (!ckpt.params.all_finite()) {
    throw IntegrityError("corrupt checkpoint " + source + ": non-finite parameters");
  }
  if (expected_hash && *expected_hash != ckpt.config_hash && !allow_hash_mismatch) {
    throw ArtifactError("checkpoint " + source + " was produced under config hash " +
                        std::to_string(ckpt.config_hash) + ", current config hash is " +
                        std::to_string(*expected_hash) + " (pass the override flag to load anyway)");
  }
  return ckpt;
}

}  // namespace avstress

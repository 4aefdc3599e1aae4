#include "unroll/unrolled.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "../common/binary_io.hpp"
#include "unroll/error.hpp"
#include "unroll/rng.hpp"
#include "unroll/solver.hpp"

namespace unroll {
namespace {

constexpr std::uint64_t kShuffleStream = 0x53485546464c4531ULL;

Image stage_denoise(const NetParams& p, const Image& x, CnnTape* tape) {
  if (p.fixed_denoiser) return denoise(*p.fixed_denoiser, x, p.eta);
  return cnn_forward(p.spec, p.theta, x, tape);
}

// Jᵀg for the stage denoiser; Θ gradients are added into grad_theta.
Image stage_denoise_backward(const NetParams& p, const CnnTape& tape, const Image& g, double* grad_theta) {
  if (p.fixed_denoiser) {
    const Denoiser& d = *p.fixed_denoiser;
    switch (d.kind()) {
      case DenoiserKind::Zero: return g.filled(0.0);
      case DenoiserKind::QuadraticProx: return scaled(g, p.eta / (p.eta + d.strength()));
      default: throw Error(std::string("no backward pass through a fixed ") + to_string(d.kind()) + " denoiser");
    }
  }
  CnnGradients cg = cnn_backward(p.spec, p.theta, tape, g);
  for (std::size_t i = 0; i < cg.grad_params.size(); ++i) grad_theta[i] += cg.grad_params[i];
  return std::move(cg.grad_in);
}

void require_finite(const Image& img, const char* what, int stage) {
  if (!img.all_finite())
    throw Error(std::string("non-finite ") + what + " at stage " + std::to_string(stage));
}

void check_pair(const TrainPair& pair, const DegradationOp& op) {
  const Shape in = op.input_shape();
  const Shape out = op.output_shape();
  if (pair.y.height() != out.height || pair.y.width() != out.width)
    throw Error("training observation does not match the operator's output shape");
  if (pair.truth.height() != in.height || pair.truth.width() != in.width)
    throw Error("training target does not match the operator's input shape");
}

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::uint64_t epoch, std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = Rng::derive(seed ^ kShuffleStream, epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

void write_f64_vec(std::ostream& out, const std::vector<double>& v) {
  for (double x : v) binary::write_f64(out, x);
}

std::vector<double> read_f64_vec(std::istream& in, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) {
    x = binary::read_f64(in);
    if (!std::isfinite(x)) throw FormatError("checkpoint contains non-finite values");
  }
  return v;
}

}  // namespace

void NetParams::validate() const {
  if (K < 1) throw Error("unrolled network needs K >= 1");
  if (stage_weights.size() != static_cast<std::size_t>(K)) throw Error("unrolled network needs exactly K weight pairs");
  if (!std::isfinite(delta1) || !std::isfinite(abar_delta)) throw Error("non-finite stage weight");
  for (const auto& w : stage_weights)
    if (!std::isfinite(w[0]) || !std::isfinite(w[1])) throw Error("non-finite stage weight");
  if (!(eta > 0.0)) throw Error("eta must be positive");
  if (!fixed_denoiser) {
    spec.validate();
    if (theta.size() != param_count(spec)) throw Error("denoiser parameter count does not match its NetSpec");
  } else if (!theta.empty()) {
    throw Error("a fixed denoiser takes no learned parameters");
  }
}

std::size_t NetParams::flat_size() const { return 1 + 2 * static_cast<std::size_t>(K) + theta.size(); }

std::vector<double> flatten(const NetParams& p) {
  std::vector<double> flat;
  flat.reserve(p.flat_size());
  flat.push_back(p.delta1);
  for (const auto& w : p.stage_weights) {
    flat.push_back(w[0]);
    flat.push_back(w[1]);
  }
  flat.insert(flat.end(), p.theta.begin(), p.theta.end());
  return flat;
}

void unflatten(NetParams& p, const std::vector<double>& flat) {
  if (flat.size() != p.flat_size()) throw Error("flat parameter vector has the wrong length");
  p.delta1 = flat[0];
  for (int k = 0; k < p.K; ++k) p.stage_weights[k] = {flat[1 + 2 * k], flat[2 + 2 * k]};
  std::copy(flat.begin() + 1 + 2 * p.K, flat.end(), p.theta.begin());
}

namespace {

NetParams hqs_weights(int K, double delta, double eta) {
  NetParams p;
  p.K = K;
  p.delta1 = delta;
  p.stage_weights.assign(static_cast<std::size_t>(std::max(K, 0)), {delta, delta * eta});
  p.abar_delta = delta;
  p.eta = eta;
  return p;
}

}  // namespace

NetParams hqs_params(int K, double delta, double eta, NetSpec spec, ParamVector theta) {
  NetParams p = hqs_weights(K, delta, eta);
  p.spec = spec;
  p.theta = std::move(theta);
  p.validate();
  return p;
}

NetParams hqs_params(int K, double delta, double eta, const Denoiser& fixed) {
  NetParams p = hqs_weights(K, delta, eta);
  p.fixed_denoiser = fixed;
  p.validate();
  return p;
}

Image unrolled_forward(const NetParams& p, const Image& y, const DegradationOp& op, StageTape* tape) {
  p.validate();
  const Shape out = op.output_shape();
  if (y.height() != out.height || y.width() != out.width)
    throw Error("unrolled_forward: observation does not match the operator's output shape");
  if (!y.all_finite()) throw Error("unrolled_forward: observation contains non-finite values");
  const Image x0 = adjoint(op, y);
  Image x = x0;
  Image v = x0.filled(0.0);
  if (tape) {
    tape->params_fingerprint = fingerprint(flatten(p));
    tape->x0 = x0;
    tape->x.clear();
    tape->v.clear();
    tape->cnn.assign(static_cast<std::size_t>(p.K), CnnTape{});
  }
  for (int k = 1; k <= p.K; ++k) {
    const double a = k == 1 ? p.delta1 : p.stage_weights[k - 1][0];
    const double b = p.stage_weights[k - 1][1];
    Image xn = apply_abar(op, p.abar_delta, p.eta, x);
    xn = axpy(a, x0, xn);
    xn = axpy(b, v, xn);
    require_finite(xn, "x activation", k);
    v = stage_denoise(p, xn, tape ? &tape->cnn[k - 1] : nullptr);
    require_finite(v, "denoiser output", k);
    x = std::move(xn);
    if (tape) {
      tape->x.push_back(x);
      tape->v.push_back(v);
    }
  }
  return v;
}

std::vector<double> unrolled_backward(const NetParams& p, const StageTape& tape, const DegradationOp& op,
                                      const Image& grad_out) {
  p.validate();
  const std::vector<double> flat = flatten(p);
  if (tape.params_fingerprint != fingerprint(flat) || tape.x.size() != static_cast<std::size_t>(p.K) ||
      tape.v.size() != tape.x.size())
    throw Error("unrolled_backward: tape does not match these parameters");
  require_same_shape(grad_out, tape.v.back(), "unrolled_backward");
  std::vector<double> grad(flat.size(), 0.0);
  double* grad_theta = grad.data() + 1 + 2 * p.K;
  Image g_v = grad_out;
  Image carry;  // Āᵀ g_{x^{k+1}}
  for (int k = p.K; k >= 1; --k) {
    Image g_x = stage_denoise_backward(p, tape.cnn[k - 1], g_v, grad_theta);
    if (!carry.empty()) g_x = g_x + carry;
    const Image& v_prev = k == 1 ? tape.x0.filled(0.0) : tape.v[k - 2];
    const double g_a = dot(g_x, tape.x0);
    if (k == 1) {
      grad[0] += g_a;
    } else {
      grad[1 + 2 * (k - 1)] += g_a;
    }
    grad[2 + 2 * (k - 1)] += dot(g_x, v_prev);
    if (k > 1) {
      g_v = scaled(g_x, p.stage_weights[k - 1][1]);
      carry = apply_abar_transpose(op, p.abar_delta, p.eta, g_x);
    }
  }
  return grad;
}

double mse_loss(const NetParams& p, const std::vector<TrainPair>& batch, const DegradationOp& op) {
  if (batch.empty()) throw Error("mse_loss: empty batch");
  double total = 0.0;
  std::size_t count = 0;
  for (const TrainPair& pair : batch) {
    check_pair(pair, op);
    total += dist_sq(unrolled_forward(p, pair.y, op), pair.truth);
    count += pair.truth.size();
  }
  return total / static_cast<double>(count);
}

LossGrad loss_and_gradient(const NetParams& p, const std::vector<TrainPair>& batch, const DegradationOp& op) {
  if (batch.empty()) throw Error("loss_and_gradient: empty batch");
  std::size_t count = 0;
  for (const TrainPair& pair : batch) {
    check_pair(pair, op);
    count += pair.truth.size();
  }
  LossGrad out;
  out.grad.assign(p.flat_size(), 0.0);
  const double scale = 2.0 / static_cast<double>(count);
  for (const TrainPair& pair : batch) {
    StageTape tape;
    const Image diff = unrolled_forward(p, pair.y, op, &tape) - pair.truth;
    out.loss += norm_sq(diff);
    const std::vector<double> g = unrolled_backward(p, tape, op, scaled(diff, scale));
    for (std::size_t i = 0; i < g.size(); ++i) out.grad[i] += g[i];
  }
  out.loss /= static_cast<double>(count);
  return out;
}

double grad_check(const NetParams& p, const std::vector<TrainPair>& batch, const DegradationOp& op, double h,
                  std::uint64_t sample_seed) {
  const LossGrad lg = loss_and_gradient(p, batch, op);
  const std::vector<double> flat = flatten(p);
  std::vector<std::size_t> coords(flat.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (flat.size() > 1000) {
    Rng rng(sample_seed);
    for (std::size_t i = 0; i < 200; ++i) std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
    coords.resize(200);
  }
  NetParams q = p;
  std::vector<double> probe = flat;
  double worst = 0.0;
  for (std::size_t c : coords) {
    probe[c] = flat[c] + h;
    unflatten(q, probe);
    const double lp = mse_loss(q, batch, op);
    probe[c] = flat[c] - h;
    unflatten(q, probe);
    const double lm = mse_loss(q, batch, op);
    probe[c] = flat[c];
    const double fd = (lp - lm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(lg.grad[c]), 1e-8});
    worst = std::max(worst, std::abs(fd - lg.grad[c]) / denom);
  }
  return worst;
}

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw Error("lr0 must be a non-negative number");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw Error("ADAM betas must lie in (0, 1)");
  if (!(eps_adam > 0.0)) throw Error("ADAM epsilon must be positive");
  if (halve_every < 1) throw Error("halve_every must be positive");
  if (batch_size < 1) throw Error("batch_size must be positive");
  if (steps < 0) throw Error("steps must be non-negative");
}

double learning_rate(const TrainConfig& cfg, long n) {
  return std::ldexp(cfg.lr0, -static_cast<int>(std::min<long>((n - 1) / cfg.halve_every, 1074)));
}

double adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grad,
                 const TrainConfig& cfg) {
  if (state.m.empty() && state.v.empty() && state.t == 0) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (grad.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw Error("adam_step: parameter, gradient and state sizes differ");
  ++state.t;
  const double lr = learning_rate(cfg, state.t);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps_adam);
  }
  return lr;
}

NetParams init_net(const NetSpec& spec, int K, const DegradationOp& op, double eta, double delta_fraction,
                   std::uint64_t seed) {
  if (!(delta_fraction > 0.0 && delta_fraction < 1.0)) throw Error("delta_fraction must lie in (0, 1)");
  const double delta = delta_fraction * max_step(operator_norm_sq(op).value, eta);
  Rng rng = Rng::derive(seed, 0x494e4954);
  return hqs_params(K, delta, eta, spec, init_params(spec, rng));
}

std::vector<TrainRecord> train(NetParams& params, AdamState& adam, const std::vector<TrainPair>& data,
                               const DegradationOp& op, const TrainConfig& cfg,
                               const std::function<void(const TrainProgress&)>& on_step) {
  cfg.validate();
  params.validate();
  if (data.empty()) throw Error("training set is empty");
  for (const TrainPair& pair : data) check_pair(pair, op);
  std::vector<double> flat = flatten(params);
  if (adam.t == 0 && adam.m.empty()) {
    adam.m.assign(flat.size(), 0.0);
    adam.v.assign(flat.size(), 0.0);
  }
  if (adam.m.size() != flat.size()) throw Error("ADAM state does not match the network");

  const std::size_t n = data.size();
  const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  std::vector<TrainRecord> records;
  std::uint64_t cached_epoch = UINT64_MAX;
  std::vector<std::size_t> perm;
  std::vector<TrainPair> batch;
  for (long step = adam.t + 1; step <= cfg.steps; ++step) {
    batch.clear();
    for (std::size_t j = 0; j < b; ++j) {
      const std::uint64_t pos = static_cast<std::uint64_t>(step - 1) * b + j;
      const std::uint64_t epoch = pos / n;
      if (epoch != cached_epoch) {
        perm = epoch_permutation(cfg.seed, epoch, n);
        cached_epoch = epoch;
      }
      batch.push_back(data[perm[pos % n]]);
    }
    const LossGrad lg = loss_and_gradient(params, batch, op);
    bool finite = std::isfinite(lg.loss);
    for (double g : lg.grad) finite = finite && std::isfinite(g);
    if (!finite) throw Error("training diverged: non-finite loss or gradient at step " + std::to_string(step));
    const double lr = adam_step(adam, flat, lg.grad, cfg);
    unflatten(params, flat);
    records.push_back({step, lg.loss, lr});
    if (on_step) on_step(TrainProgress{params, adam, records.back()});
  }
  return records;
}

void save_checkpoint(const std::filesystem::path& path, const NetParams& p, const AdamState* adam) {
  p.validate();
  if (p.fixed_denoiser) throw Error("only networks with a learned denoiser can be checkpointed");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  write_weights(out, p.spec, p.theta);
  binary::write_magic(out, "UNRT1");
  binary::write_i32(out, p.K);
  binary::write_f64(out, p.delta1);
  for (const auto& w : p.stage_weights) {
    binary::write_f64(out, w[0]);
    binary::write_f64(out, w[1]);
  }
  binary::write_magic(out, "UNRH1");
  binary::write_f64(out, p.abar_delta);
  binary::write_f64(out, p.eta);
  if (adam) {
    const std::vector<double> flat = flatten(p);
    const AdamState fresh{0, std::vector<double>(flat.size(), 0.0), std::vector<double>(flat.size(), 0.0)};
    if (adam->t == 0 && adam->m.empty()) adam = &fresh;
    if (adam->m.size() != flat.size() || adam->v.size() != flat.size())
      throw Error("ADAM state does not match the network");
    binary::write_magic(out, "UNRA1");
    binary::write_i64(out, adam->t);
    binary::write_i64(out, static_cast<std::int64_t>(flat.size()));
    write_f64_vec(out, adam->m);
    write_f64_vec(out, adam->v);
    write_f64_vec(out, flat);
  }
  if (!out) throw Error("cannot write checkpoint: " + path.string());
}

NetParams load_checkpoint(const std::filesystem::path& path, AdamState* adam) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  NetParams p;
  read_weights(in, p.spec, p.theta);
  binary::expect_magic(in, "UNRT1");
  p.K = binary::read_i32(in);
  if (p.K < 1 || p.K > 1000) throw FormatError("checkpoint has an invalid stage count");
  p.delta1 = binary::read_f64(in);
  p.stage_weights.resize(static_cast<std::size_t>(p.K));
  for (auto& w : p.stage_weights) {
    w[0] = binary::read_f64(in);
    w[1] = binary::read_f64(in);
  }
  binary::expect_magic(in, "UNRH1");
  p.abar_delta = binary::read_f64(in);
  p.eta = binary::read_f64(in);
  try {
    p.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid checkpoint: ") + e.what());
  }
  if (in.peek() == std::char_traits<char>::eof()) {
    if (adam) *adam = AdamState{};
    return p;
  }
  binary::expect_magic(in, "UNRA1");
  AdamState st;
  st.t = static_cast<long>(binary::read_i64(in));
  const std::int64_t n = binary::read_i64(in);
  if (st.t < 0 || n != static_cast<std::int64_t>(p.flat_size())) throw FormatError("checkpoint ADAM section does not match the network");
  st.m = read_f64_vec(in, static_cast<std::size_t>(n));
  st.v = read_f64_vec(in, static_cast<std::size_t>(n));
  const std::vector<double> master = read_f64_vec(in, static_cast<std::size_t>(n));
  // The float32 weights above are for portability; the f64 copy continues training exactly.
  unflatten(p, master);
  if (adam) *adam = std::move(st);
  return p;
}

void write_loss_csv(std::ostream& out, const std::vector<TrainRecord>& records) {
  out << "step,loss,lr\n";
  char buf[96];
  for (const TrainRecord& r : records) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g\n", r.step, r.loss, r.lr);
    out << buf;
  }
}

}  // namespace unroll

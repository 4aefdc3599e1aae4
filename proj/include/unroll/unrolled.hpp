#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "unroll/cnn.hpp"
#include "unroll/denoiser.hpp"
#include "unroll/image.hpp"
#include "unroll/operators.hpp"

namespace unroll {

/// K-stage unfolded network. Stage 1 computes x¹ = Āx⁰ + δ₁x⁰ + δ_{1,2}v⁰ and
/// stage k ≥ 2 computes xᵏ = Āxᵏ⁻¹ + δ_{k,1}x⁰ + δ_{k,2}vᵏ⁻¹, with x⁰ = Aᵀy,
/// v⁰ = 0 and vᵏ = f(xᵏ). The output is v^K. Ā = (1−δ̄η)I − δ̄AᵀA is fixed.
struct NetParams {
  int K = 5;
  double delta1 = 0.0;
  /// (δ_{k,1}, δ_{k,2}); the first entry of pair 1 is unused because stage 1 takes δ₁.
  std::vector<std::array<double, 2>> stage_weights;
  /// δ̄ and η of the fixed Ā map.
  double abar_delta = 0.0;
  double eta = 1.0;
  NetSpec spec;
  ParamVector theta;
  /// When set, this fixed map replaces the learned CNN (Θ is then empty).
  std::optional<Denoiser> fixed_denoiser;

  void validate() const;
  /// 1 + 2K + |Θ|.
  std::size_t flat_size() const;
};

/// Flat order: δ₁, then (δ_{k,1}, δ_{k,2}) for k = 1..K, then Θ.
std::vector<double> flatten(const NetParams& p);
void unflatten(NetParams& p, const std::vector<double>& flat);

/// Stage weights that make the network execute K iterations of the HQS solver
/// with step delta: δ₁ = δ_{k,1} = δ, δ_{k,2} = δη, δ̄ = δ.
NetParams hqs_params(int K, double delta, double eta, NetSpec spec, ParamVector theta);
NetParams hqs_params(int K, double delta, double eta, const Denoiser& fixed);

struct StageTape {
  std::uint64_t params_fingerprint = 0;
  Image x0;
  std::vector<Image> x;  // x¹..x^K
  std::vector<Image> v;  // v¹..v^K
  std::vector<CnnTape> cnn;
};

/// Returns v^K and optionally records the tape for unrolled_backward.
Image unrolled_forward(const NetParams& p, const Image& y, const DegradationOp& op, StageTape* tape = nullptr);

/// Gradient of ⟨grad_out, v^K⟩ with respect to the flat parameters, given a
/// tape recorded with the same parameters.
std::vector<double> unrolled_backward(const NetParams& p, const StageTape& tape, const DegradationOp& op,
                                      const Image& grad_out);

struct TrainPair {
  Image y;
  Image truth;
};

/// Mean over batch items and pixels of (v^K − truth)².
double mse_loss(const NetParams& p, const std::vector<TrainPair>& batch, const DegradationOp& op);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// mse_loss and its flat gradient; items are reduced in batch order.
LossGrad loss_and_gradient(const NetParams& p, const std::vector<TrainPair>& batch, const DegradationOp& op);

/// Max relative error between loss_and_gradient and central differences with
/// step h, denominators floored at 1e-8. Above 1000 parameters a seeded sample
/// of 200 coordinates is checked.
double grad_check(const NetParams& p, const std::vector<TrainPair>& batch, const DegradationOp& op, double h,
                  std::uint64_t sample_seed = 0);

struct TrainConfig {
  double lr0 = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  long halve_every = 2000;
  int batch_size = 4;
  long steps = 2000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamState {
  long t = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// Learning rate of update number n (1-based): lr0 · 2^−⌊(n−1)/halve_every⌋.
double learning_rate(const TrainConfig& cfg, long n);

/// One bias-corrected ADAM update of the flat parameters; returns the rate used.
double adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grad,
                 const TrainConfig& cfg);

/// Initial network: HQS stage weights at delta_fraction·max_step and He-initialized Θ.
NetParams init_net(const NetSpec& spec, int K, const DegradationOp& op, double eta, double delta_fraction,
                   std::uint64_t seed);

struct TrainRecord {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainProgress {
  const NetParams& params;
  const AdamState& adam;
  const TrainRecord& record;
};

/// Minibatch ADAM on the mean squared error. Batches follow a per-epoch
/// permutation derived from cfg.seed, so a run resumed from (params, adam)
/// continues exactly. on_step is called after every update. A non-finite loss
/// or gradient throws before the parameters are touched.
std::vector<TrainRecord> train(NetParams& params, AdamState& adam, const std::vector<TrainPair>& data,
                               const DegradationOp& op, const TrainConfig& cfg,
                               const std::function<void(const TrainProgress&)>& on_step = {});

/// Checkpoint: the weights file, then "UNRT1" (int32 K, f64 δ₁, K f64 pairs),
/// then "UNRH1" (f64 δ̄, f64 η), then an "UNRA1" ADAM section when `adam` is given
/// (int64 t, int64 n, f64 m[n], f64 v[n], f64 flat parameters[n]) that makes
/// resuming exact.
void save_checkpoint(const std::filesystem::path& path, const NetParams& p, const AdamState* adam = nullptr);
NetParams load_checkpoint(const std::filesystem::path& path, AdamState* adam = nullptr);

void write_loss_csv(std::ostream& out, const std::vector<TrainRecord>& records);

}  // namespace unroll

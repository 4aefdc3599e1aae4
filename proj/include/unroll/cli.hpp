#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "unroll/operators.hpp"

namespace unroll::cli {

enum class Task { Denoise, Deblur, SuperRes };

const char* to_string(Task t);

struct OperatorSection {
  /// Plain-text kernel file; when empty a Gaussian of kernel_size/kernel_sigma is used.
  std::string kernel;
  int kernel_size = 25;
  double kernel_sigma = 1.6;
  int scale = 2;
  /// "decimate" (blur then keep every scale-th pixel) or "bicubic".
  std::string resize = "decimate";
  double noise_sigma = 0.0;
};

struct SolverSection {
  /// "hqs", "hqs_cg" or "admm".
  std::string mode = "hqs";
  std::optional<double> delta;
  double delta_fraction = 0.9;
  double eta = 0.5;
  /// Defaults to the value that matches the denoiser's prior.
  std::optional<double> lambda;
  int iters = 100;
  double tol = 1e-8;
  double cg_tol = 1e-10;
  int cg_maxit = 1000;
  double rho = 1.0;
};

struct DenoiserSection {
  /// "dct", "tv", "quadratic", "zero", "cnn" or "unrolled".
  std::string type = "dct";
  int patch = 8;
  double tau = 20.0;
  double lambda = 0.1;
  int inner_iters = 50;
  /// Weights file for "cnn", checkpoint for "unrolled".
  std::string weights;
};

struct TrainingSection {
  int stages = 3;
  /// "tiny", "desk" or "full".
  std::string net = "tiny";
  int patch = 32;
  int stride = 16;
  bool augment = false;
  /// 0 keeps every patch.
  int max_pairs = 0;
  long steps = 2000;
  double lr0 = 1e-4;
  long halve_every = 2000;
  int batch_size = 4;
  double eta = 0.5;
  double delta_fraction = 0.9;
  long checkpoint_every = 100;
  bool resume = false;
};

struct IoSection {
  std::string input;
  std::string output;
  std::string truth;
  std::string dataset;
  std::string validation;
};

struct RunConfig {
  Task task = Task::Denoise;
  std::uint64_t seed = 0;
  /// Absent when the config gives no operator (restore then needs a manifest).
  std::optional<OperatorSection> op;
  SolverSection solver;
  DenoiserSection denoiser;
  TrainingSection training;
  IoSection io;
  /// Wall-clock runtimes make reports non-reproducible, so they are opt-in.
  bool record_runtime = false;
};

/// Parses JSON text. Unknown keys and wrong types throw Error naming the key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Every field with its effective value, keys sorted, two-space indent.
std::string resolved_config_json(const RunConfig& cfg);

/// The operator a config describes for clean images of the given shape.
DegradationOp build_operator(Task task, const OperatorSection& op, Shape clean);

struct EvalRow {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> runtime;
  std::optional<int> iterations;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double avg_psnr = 0.0;
  double avg_ssim = 0.0;
  std::optional<double> avg_runtime;
  std::optional<double> avg_iterations;
};

/// Rows sorted by name; averages are plain arithmetic means.
EvalReport make_report(std::vector<EvalRow> rows);
std::string report_json(const EvalReport& r);
std::string report_table(const EvalReport& r);

/// Worker cap from UNROLL_RESTORE_THREADS (0 or unset means serial).
int worker_count();

int cmd_degrade(const RunConfig& cfg, std::ostream& out);
int cmd_restore(const RunConfig& cfg, std::ostream& out);
int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_eval(const RunConfig& cfg, std::ostream& out);
int cmd_diagnose(const std::filesystem::path& trace_csv, std::ostream& out);

struct Invocation {
  std::string command;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> input;
  std::optional<std::filesystem::path> output;
  std::optional<std::filesystem::path> truth;
  std::optional<std::uint64_t> seed;
};

/// Runs one command and maps failures to exit codes: 0 success, 1 domain or
/// configuration failure, 2 malformed input data.
int run(const Invocation& inv, std::ostream& out, std::ostream& err);

}  // namespace unroll::cli

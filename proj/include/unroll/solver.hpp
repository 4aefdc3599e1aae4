#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "unroll/denoiser.hpp"
#include "unroll/image.hpp"
#include "unroll/operators.hpp"

namespace unroll {

struct Problem {
  Image y;
  DegradationOp op = DegradationOp::identity({1, 1});
  double lambda = 0.0;
  double eta = 1.0;

  void validate() const;
};

enum class SolverMode { GradStep, ExactCG, Admm };

const char* to_string(SolverMode mode);

struct SolverConfig {
  SolverMode mode = SolverMode::GradStep;
  double delta = 0.0;
  int max_iters = 500;
  /// Stop when ‖x⁽ᵗ⁺¹⁾−x⁽ᵗ⁾‖/‖x⁽ᵗ⁾‖ < tol; 0 runs all max_iters.
  double tol = 1e-8;
  double cg_tol = 1e-10;
  int cg_maxit = 1000;
  double rho = 1.0;
  /// ‖AᵀA‖ if already known; estimated with operator_norm_sq when 0.
  double op_norm_sq = 0.0;
};

struct TraceRecord {
  int t = 0;
  double xi = 0.0;
  double dx2 = 0.0;
  double gap = 0.0;
  double c1_resid = 0.0;
  bool partial = false;
};

struct SolverTrace {
  double op_norm_sq = 0.0;
  /// 1/δ − (‖AᵀA‖+η)/2 for GradStep, 0 for the exact x-update modes.
  double c1 = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Some inner CG solve stopped at cg_maxit before reaching cg_tol.
  bool cg_warning = false;
  /// Row 0 is the initial state; row t follows the t-th x/v update.
  std::vector<TraceRecord> records;
};

struct SolveResult {
  Image x;
  Image v;
  SolverTrace trace;
};

struct EnergyValue {
  double value = 0.0;
  /// Only ½‖y−Ax‖² + (η/2)‖x−v‖²; the denoiser has no explicit prior.
  bool partial = false;
};

/// ξ(x, v) = ½‖y−Ax‖² + (η/2)‖x−v‖² + λJ(v).
EnergyValue energy(const Problem& p, const Image& x, const Image& v, const Denoiser& d);

/// 2/(‖AᵀA‖ + η).
double max_step(const Problem& p);
double max_step(double op_norm_sq, double eta);

struct CgResult {
  Image x;
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

/// Solves (AᵀA + ηI)x = Aᵀy + ηv by conjugate gradients, optionally warm-started.
CgResult cg_solve_x(const Problem& p, const Image& v, double cg_tol, int cg_maxit, const Image* x0 = nullptr);

/// Half-quadratic splitting from x⁽⁰⁾ = Aᵀy, v⁽⁰⁾ = 0. GradStep uses
/// x⁽ᵗ⁺¹⁾ = Āx⁽ᵗ⁾ + δAᵀy + δηv⁽ᵗ⁾; ExactCG solves the x-subproblem.
SolveResult hqs_solve(const Problem& p, const SolverConfig& cfg, const Denoiser& d);

/// Scaled-form ADMM: x by CG on (AᵀA+ηI)x = Aᵀy + η(v−u), v = f(x+u), u += ρ(x−v).
SolveResult admm_solve(const Problem& p, const SolverConfig& cfg, const Denoiser& d);

/// Dispatches on cfg.mode.
SolveResult solve(const Problem& p, const SolverConfig& cfg, const Denoiser& d);

void write_trace_csv(std::ostream& out, const SolverTrace& trace);
void save_trace_csv(const std::string& path, const SolverTrace& trace);
/// Throws FormatError on a malformed file.
SolverTrace read_trace_csv(std::istream& in);

enum class CheckStatus { Pass, Fail, Skip };

struct CheckResult {
  std::string name;
  CheckStatus status = CheckStatus::Skip;
  std::string detail;
};

struct DiagnoseTolerances {
  double energy = 1e-10;
  double x_descent = 1e-10;
  double gap = 1e-12;
  double vanish_ratio = 0.01;
};

/// Energy monotonicity, x-step sufficient descent, v-step gap and vanishing increments.
std::vector<CheckResult> diagnose(const SolverTrace& trace, const DiagnoseTolerances& tol = {});

const char* to_string(CheckStatus s);

}  // namespace unroll

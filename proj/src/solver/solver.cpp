#include "unroll/solver.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "unroll/error.hpp"

namespace unroll {
namespace {

Image zeros_like_input(const Problem& p) {
  const Shape s = p.op.input_shape();
  return Image(s.height, s.width, p.y.peak());
}

// ½‖y−Ax‖² + (η/2)‖x−v‖² with Ax supplied.
double quadratic_terms(const Problem& p, const Image& ax, const Image& x, const Image& v) {
  return 0.5 * dist_sq(p.y, ax) + 0.5 * p.eta * dist_sq(x, v);
}

EnergyValue energy_with(const Problem& p, const Image& ax, const Image& x, const Image& v, const Denoiser& d) {
  EnergyValue e{quadratic_terms(p, ax, x, v), !d.has_prior()};
  if (!e.partial && p.lambda != 0.0) e.value += p.lambda * *eval_prior(d, v);
  return e;
}

Image normal_apply(const Problem& p, const Image& x) {
  return axpy(p.eta, x, apply_transpose(p.op, apply(p.op, x)));
}

void require_finite(const Image& img, const char* what, int t) {
  if (!img.all_finite())
    throw Error(std::string("non-finite ") + what + " at iteration " + std::to_string(t));
}

double v_gap(const Problem& p, const Image& x, const Image& v_old, const Image& v_new, const Denoiser& d) {
  if (d.has_prior()) return descent_gap(x, v_old, v_new, p.eta, p.lambda, d);
  return 0.5 * p.eta * (dist_sq(x, v_old) - dist_sq(x, v_new));
}

double relative_change(double dx2, const Image& x_prev) {
  const double n = norm(x_prev);
  if (n > 0.0) return std::sqrt(dx2) / n;
  return dx2 == 0.0 ? 0.0 : INFINITY;
}

double resolve_norm(const Problem& p, const SolverConfig& cfg) {
  return cfg.op_norm_sq > 0.0 ? cfg.op_norm_sq : operator_norm_sq(p.op).value;
}

void check_common(const Problem& p, const SolverConfig& cfg) {
  p.validate();
  if (cfg.max_iters < 0) throw Error("max_iters must be non-negative");
  if (!(cfg.tol >= 0.0)) throw Error("tol must be non-negative");
}

TraceRecord initial_record(const Problem& p, const Image& ax, const Image& x, const Image& v, const Denoiser& d) {
  const EnergyValue e = energy_with(p, ax, x, v, d);
  return {0, e.value, 0.0, 0.0, 0.0, e.partial};
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, int line) {
  if (s.empty()) throw FormatError("empty field on trace line " + std::to_string(line));
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw FormatError("bad number '" + s + "' on trace line " + std::to_string(line));
  if (!std::isfinite(v)) throw FormatError("non-finite value on trace line " + std::to_string(line));
  return v;
}

}  // namespace

void Problem::validate() const {
  const Shape out = op.output_shape();
  if (y.height() != out.height || y.width() != out.width)
    throw Error("observation is " + std::to_string(y.height()) + "x" + std::to_string(y.width()) +
                " but the operator produces " + std::to_string(out.height) + "x" + std::to_string(out.width));
  if (!(eta > 0.0)) throw Error("eta must be positive");
  if (!(lambda >= 0.0)) throw Error("lambda must be non-negative");
  if (!y.all_finite()) throw Error("observation contains non-finite values");
}

const char* to_string(SolverMode mode) {
  switch (mode) {
    case SolverMode::GradStep: return "gradstep";
    case SolverMode::ExactCG: return "exactcg";
    case SolverMode::Admm: return "admm";
  }
  return "unknown";
}

const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::Pass: return "PASS";
    case CheckStatus::Fail: return "FAIL";
    case CheckStatus::Skip: return "SKIP";
  }
  return "?";
}

EnergyValue energy(const Problem& p, const Image& x, const Image& v, const Denoiser& d) {
  return energy_with(p, apply(p.op, x), x, v, d);
}

double max_step(double op_norm_sq, double eta) { return 2.0 / (op_norm_sq + eta); }

double max_step(const Problem& p) { return max_step(operator_norm_sq(p.op).value, p.eta); }

CgResult cg_solve_x(const Problem& p, const Image& v, double cg_tol, int cg_maxit, const Image* x0) {
  p.validate();
  const Image b = axpy(p.eta, v, apply_transpose(p.op, p.y));
  CgResult res;
  res.x = x0 ? *x0 : zeros_like_input(p);
  require_same_shape(res.x, b, "cg_solve_x");
  const double bn = norm(b);
  if (bn == 0.0) {
    res.x = b.filled(0.0);
    res.converged = true;
    return res;
  }
  Image r = x0 ? b - normal_apply(p, res.x) : b;
  Image dir = r;
  double rs = norm_sq(r);
  while (std::sqrt(rs) > cg_tol * bn && res.iterations < cg_maxit) {
    const Image hd = normal_apply(p, dir);
    const double alpha = rs / dot(dir, hd);
    res.x = axpy(alpha, dir, res.x);
    r = axpy(-alpha, hd, r);
    const double rs_new = norm_sq(r);
    dir = axpy(rs_new / rs, dir, r);
    rs = rs_new;
    ++res.iterations;
  }
  res.rel_residual = std::sqrt(rs) / bn;
  res.converged = res.rel_residual <= cg_tol;
  return res;
}

SolveResult hqs_solve(const Problem& p, const SolverConfig& cfg, const Denoiser& d) {
  if (cfg.mode == SolverMode::Admm) return admm_solve(p, cfg, d);
  check_common(p, cfg);
  SolveResult res;
  SolverTrace& tr = res.trace;
  tr.op_norm_sq = resolve_norm(p, cfg);
  const bool grad = cfg.mode == SolverMode::GradStep;
  if (grad) {
    const double bound = max_step(tr.op_norm_sq, p.eta);
    if (!(cfg.delta > 0.0) || !(cfg.delta < bound))
      throw Error("step size delta = " + fmt17(cfg.delta) + " violates 0 < delta < max_step = " + fmt17(bound));
    tr.c1 = 1.0 / cfg.delta - 0.5 * (tr.op_norm_sq + p.eta);
  }
  Image x = adjoint(p.op, p.y);
  Image v = x.filled(0.0);
  Image ax = apply(p.op, x);
  tr.records.push_back(initial_record(p, ax, x, v, d));
  for (int t = 1; t <= cfg.max_iters; ++t) {
    Image x_new;
    if (grad) {
      // Āx + δAᵀy + δηv, written as a gradient step on the quadratic terms.
      const Image g = axpy(p.eta, x - v, adjoint(p.op, ax - p.y));
      x_new = axpy(-cfg.delta, g, x);
    } else {
      CgResult cg = cg_solve_x(p, v, cfg.cg_tol, cfg.cg_maxit, &x);
      tr.cg_warning = tr.cg_warning || !cg.converged;
      x_new = std::move(cg.x);
    }
    require_finite(x_new, "x iterate", t);
    Image ax_new = apply(p.op, x_new);
    const double dx2 = dist_sq(x, x_new);
    const double c1_resid = quadratic_terms(p, ax, x, v) - quadratic_terms(p, ax_new, x_new, v) - tr.c1 * dx2;
    Image v_new = denoise(d, x_new, p.eta);
    require_finite(v_new, "v iterate", t);
    const double gap = v_gap(p, x_new, v, v_new, d);
    const EnergyValue e = energy_with(p, ax_new, x_new, v_new, d);
    tr.records.push_back({t, e.value, dx2, gap, c1_resid, e.partial});
    const double rel = relative_change(dx2, x);
    x = std::move(x_new);
    ax = std::move(ax_new);
    v = std::move(v_new);
    tr.iterations = t;
    if (cfg.tol > 0.0 && rel < cfg.tol) {
      tr.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.v = std::move(v);
  return res;
}

SolveResult admm_solve(const Problem& p, const SolverConfig& cfg, const Denoiser& d) {
  check_common(p, cfg);
  if (!(cfg.rho > 0.0)) throw Error("ADMM needs rho > 0");
  SolveResult res;
  SolverTrace& tr = res.trace;
  tr.op_norm_sq = cfg.op_norm_sq;
  Image x = adjoint(p.op, p.y);
  Image v = x.filled(0.0);
  Image u = x.filled(0.0);
  Image ax = apply(p.op, x);
  tr.records.push_back(initial_record(p, ax, x, v, d));
  for (int t = 1; t <= cfg.max_iters; ++t) {
    CgResult cg = cg_solve_x(p, v - u, cfg.cg_tol, cfg.cg_maxit, &x);
    tr.cg_warning = tr.cg_warning || !cg.converged;
    Image x_new = std::move(cg.x);
    require_finite(x_new, "x iterate", t);
    const Image z = x_new + u;
    Image v_new = denoise(d, z, p.eta);
    require_finite(v_new, "v iterate", t);
    u = axpy(cfg.rho, x_new - v_new, u);
    Image ax_new = apply(p.op, x_new);
    const double dx2 = dist_sq(x, x_new);
    const double c1_resid = quadratic_terms(p, ax, x, v) - quadratic_terms(p, ax_new, x_new, v);
    const double gap = v_gap(p, z, v, v_new, d);
    const EnergyValue e = energy_with(p, ax_new, x_new, v_new, d);
    tr.records.push_back({t, e.value, dx2, gap, c1_resid, e.partial});
    const double rel = relative_change(dx2, x);
    x = std::move(x_new);
    ax = std::move(ax_new);
    v = std::move(v_new);
    tr.iterations = t;
    if (cfg.tol > 0.0 && rel < cfg.tol) {
      tr.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.v = std::move(v);
  return res;
}

SolveResult solve(const Problem& p, const SolverConfig& cfg, const Denoiser& d) {
  return cfg.mode == SolverMode::Admm ? admm_solve(p, cfg, d) : hqs_solve(p, cfg, d);
}

void write_trace_csv(std::ostream& out, const SolverTrace& trace) {
  out << "t,xi,dx2,gap,c1_resid,partial\n";
  for (const TraceRecord& r : trace.records)
    out << r.t << ',' << fmt17(r.xi) << ',' << fmt17(r.dx2) << ',' << fmt17(r.gap) << ',' << fmt17(r.c1_resid) << ','
        << (r.partial ? 1 : 0) << '\n';
}

void save_trace_csv(const std::string& path, const SolverTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write trace file: " + path);
  write_trace_csv(out, trace);
  if (!out) throw Error("cannot write trace file: " + path);
}

SolverTrace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty trace file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,xi,dx2,gap,c1_resid,partial") throw FormatError("unexpected trace header: " + line);
  SolverTrace tr;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6 || line.back() == ',')
      throw FormatError("trace line " + std::to_string(lineno) + " does not have 6 fields");
    TraceRecord r;
    const double t = parse_double(f[0], lineno);
    if (t != std::floor(t) || t < 0 || t > 1e9) throw FormatError("bad iteration index on trace line " + std::to_string(lineno));
    r.t = static_cast<int>(t);
    r.xi = parse_double(f[1], lineno);
    r.dx2 = parse_double(f[2], lineno);
    r.gap = parse_double(f[3], lineno);
    r.c1_resid = parse_double(f[4], lineno);
    if (f[5] != "0" && f[5] != "1") throw FormatError("partial flag must be 0 or 1 on trace line " + std::to_string(lineno));
    r.partial = f[5] == "1";
    if (!tr.records.empty() && r.t <= tr.records.back().t)
      throw FormatError("trace rows are not strictly ordered at line " + std::to_string(lineno));
    tr.records.push_back(r);
  }
  if (tr.records.empty()) throw FormatError("trace has no rows");
  tr.iterations = tr.records.back().t;
  return tr;
}

std::vector<CheckResult> diagnose(const SolverTrace& trace, const DiagnoseTolerances& tol) {
  const auto& rs = trace.records;
  std::vector<CheckResult> out;
  auto worst = [&](auto value) {
    double w = INFINITY;
    int at = -1;
    for (std::size_t i = 1; i < rs.size(); ++i) {
      const double val = value(i);
      if (val < w) {
        w = val;
        at = rs[i].t;
      }
    }
    return std::pair{w, at};
  };
  auto describe = [](double w, int at) {
    return at < 0 ? std::string("no iterations") : "worst " + fmt17(w) + " at t=" + std::to_string(at);
  };

  bool partial = false;
  for (const auto& r : rs) partial = partial || r.partial;
  if (partial) {
    out.push_back({"energy monotone", CheckStatus::Skip, "energy is partial (no explicit prior)"});
  } else {
    // Negative of the largest per-step increase.
    const auto [w, at] = worst([&](std::size_t i) { return rs[i - 1].xi - rs[i].xi; });
    out.push_back({"energy monotone", w >= -tol.energy ? CheckStatus::Pass : CheckStatus::Fail, describe(w, at)});
  }
  {
    const auto [w, at] = worst([&](std::size_t i) { return rs[i].c1_resid; });
    out.push_back({"x-descent >= c1*|dx|^2", w >= -tol.x_descent ? CheckStatus::Pass : CheckStatus::Fail, describe(w, at)});
  }
  {
    const auto [w, at] = worst([&](std::size_t i) { return rs[i].gap; });
    out.push_back({"v-step gap >= 0", w >= -tol.gap ? CheckStatus::Pass : CheckStatus::Fail, describe(w, at)});
  }
  if (rs.size() < 3) {
    out.push_back({"vanishing increments", CheckStatus::Skip, "fewer than two iterations"});
  } else {
    const double first = std::sqrt(rs[1].dx2);
    const double last = std::sqrt(rs.back().dx2);
    const bool ok = first == 0.0 ? last == 0.0 : last < tol.vanish_ratio * first;
    out.push_back({"vanishing increments", ok ? CheckStatus::Pass : CheckStatus::Fail,
                   "|dx| first " + fmt17(first) + ", last " + fmt17(last)});
  }
  return out;
}

}  // namespace unroll

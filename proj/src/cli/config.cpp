#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

#include "unroll/cli.hpp"
#include "unroll/error.hpp"

namespace unroll::cli {
namespace {

using nlohmann::json;

// Reads the keys of one JSON object and rejects anything it was not asked about.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error("config: " + where() + " must be an object");
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, std::string& out) {
    if (const json* v = raw(key)) {
      if (!v->is_string()) throw type_error(key, "a string");
      out = v->get<std::string>();
    }
  }

  void get(const std::string& key, double& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number()) throw type_error(key, "a number");
      out = v->get<double>();
    }
  }

  void get(const std::string& key, std::optional<double>& out) {
    if (const json* v = raw(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      if (!v->is_number()) throw type_error(key, "a number or null");
      out = v->get<double>();
    }
  }

  template <class Int>
  void get_int(const std::string& key, Int& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_integer()) throw type_error(key, "an integer");
      out = v->get<Int>();
    }
  }

  void get(const std::string& key, bool& out) {
    if (const json* v = raw(key)) {
      if (!v->is_boolean()) throw type_error(key, "true or false");
      out = v->get<bool>();
    }
  }

  void get(const std::string& key, std::uint64_t& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_unsigned()) throw type_error(key, "a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw Error("config: unknown key " + where(it.key()));
  }

  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "top level" : "'" + path_ + "'";
    return "'" + (path_.empty() ? key : path_ + "." + key) + "'";
  }

 private:
  Error type_error(const std::string& key, const char* what) const {
    return Error("config: " + where(key) + " must be " + what);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Task parse_task(const std::string& s) {
  if (s == "denoise") return Task::Denoise;
  if (s == "deblur") return Task::Deblur;
  if (s == "sr") return Task::SuperRes;
  throw Error("config: 'task' must be one of denoise, deblur, sr (got '" + s + "')");
}

void require_one_of(const std::string& value, std::initializer_list<const char*> allowed, const std::string& key) {
  std::string list;
  for (const char* a : allowed) {
    if (value == a) return;
    list += list.empty() ? a : std::string(", ") + a;
  }
  throw Error("config: '" + key + "' must be one of " + list + " (got '" + value + "')");
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

const char* to_string(Task t) {
  switch (t) {
    case Task::Denoise: return "denoise";
    case Task::Deblur: return "deblur";
    case Task::SuperRes: return "sr";
  }
  return "?";
}

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section top(root, "");
  std::string task = "denoise";
  top.get("task", task);
  cfg.task = parse_task(task);
  top.get("seed", cfg.seed);
  top.get("record_runtime", cfg.record_runtime);

  if (const json* j = top.raw("operator"); j && !j->is_null()) {
    OperatorSection op;
    Section s(*j, "operator");
    s.get("kernel", op.kernel);
    s.get_int("kernel_size", op.kernel_size);
    s.get("kernel_sigma", op.kernel_sigma);
    s.get_int("scale", op.scale);
    s.get("resize", op.resize);
    s.get("noise_sigma", op.noise_sigma);
    s.finish();
    require_one_of(op.resize, {"decimate", "bicubic"}, "operator.resize");
    if (!(op.noise_sigma >= 0.0)) throw Error("config: 'operator.noise_sigma' must be non-negative");
    if (op.scale < 1) throw Error("config: 'operator.scale' must be positive");
    cfg.op = op;
  }
  if (const json* j = top.raw("solver")) {
    Section s(*j, "solver");
    SolverSection& v = cfg.solver;
    s.get("mode", v.mode);
    s.get("delta", v.delta);
    s.get("delta_fraction", v.delta_fraction);
    s.get("eta", v.eta);
    s.get("lambda", v.lambda);
    s.get_int("iters", v.iters);
    s.get("tol", v.tol);
    s.get("cg_tol", v.cg_tol);
    s.get_int("cg_maxit", v.cg_maxit);
    s.get("rho", v.rho);
    s.finish();
  }
  require_one_of(cfg.solver.mode, {"hqs", "hqs_cg", "admm"}, "solver.mode");
  if (const json* j = top.raw("denoiser")) {
    Section s(*j, "denoiser");
    DenoiserSection& v = cfg.denoiser;
    s.get("type", v.type);
    s.get_int("patch", v.patch);
    s.get("tau", v.tau);
    s.get("lambda", v.lambda);
    s.get_int("inner_iters", v.inner_iters);
    s.get("weights", v.weights);
    s.finish();
  }
  require_one_of(cfg.denoiser.type, {"dct", "tv", "quadratic", "zero", "cnn", "unrolled"}, "denoiser.type");
  if (const json* j = top.raw("training")) {
    Section s(*j, "training");
    TrainingSection& v = cfg.training;
    s.get_int("stages", v.stages);
    s.get("net", v.net);
    s.get_int("patch", v.patch);
    s.get_int("stride", v.stride);
    s.get("augment", v.augment);
    s.get_int("max_pairs", v.max_pairs);
    s.get_int("steps", v.steps);
    s.get("lr0", v.lr0);
    s.get_int("halve_every", v.halve_every);
    s.get_int("batch_size", v.batch_size);
    s.get("eta", v.eta);
    s.get("delta_fraction", v.delta_fraction);
    s.get_int("checkpoint_every", v.checkpoint_every);
    s.get("resume", v.resume);
    s.finish();
  }
  require_one_of(cfg.training.net, {"tiny", "desk", "full"}, "training.net");
  if (const json* j = top.raw("io")) {
    Section s(*j, "io");
    s.get("input", cfg.io.input);
    s.get("output", cfg.io.output);
    s.get("truth", cfg.io.truth);
    s.get("dataset", cfg.io.dataset);
    s.get("validation", cfg.io.validation);
    s.finish();
  }
  top.finish();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config: " + path.string());
  return parse_config(std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()));
}

std::string resolved_config_json(const RunConfig& cfg) {
  json j;
  j["task"] = to_string(cfg.task);
  j["seed"] = cfg.seed;
  j["record_runtime"] = cfg.record_runtime;
  if (cfg.op) {
    const OperatorSection& o = *cfg.op;
    j["operator"] = {{"kernel", o.kernel},         {"kernel_size", o.kernel_size}, {"kernel_sigma", o.kernel_sigma},
                     {"scale", o.scale},           {"resize", o.resize},           {"noise_sigma", o.noise_sigma}};
  } else {
    j["operator"] = nullptr;
  }
  const SolverSection& s = cfg.solver;
  j["solver"] = {{"mode", s.mode},   {"delta", optional_number(s.delta)},
                 {"delta_fraction", s.delta_fraction},
                 {"eta", s.eta},     {"lambda", optional_number(s.lambda)},
                 {"iters", s.iters}, {"tol", s.tol},
                 {"cg_tol", s.cg_tol}, {"cg_maxit", s.cg_maxit},
                 {"rho", s.rho}};
  const DenoiserSection& d = cfg.denoiser;
  j["denoiser"] = {{"type", d.type},   {"patch", d.patch},           {"tau", d.tau},
                   {"lambda", d.lambda}, {"inner_iters", d.inner_iters}, {"weights", d.weights}};
  const TrainingSection& t = cfg.training;
  j["training"] = {{"stages", t.stages},
                   {"net", t.net},
                   {"patch", t.patch},
                   {"stride", t.stride},
                   {"augment", t.augment},
                   {"max_pairs", t.max_pairs},
                   {"steps", t.steps},
                   {"lr0", t.lr0},
                   {"halve_every", t.halve_every},
                   {"batch_size", t.batch_size},
                   {"eta", t.eta},
                   {"delta_fraction", t.delta_fraction},
                   {"checkpoint_every", t.checkpoint_every},
                   {"resume", t.resume}};
  j["io"] = {{"input", cfg.io.input},
             {"output", cfg.io.output},
             {"truth", cfg.io.truth},
             {"dataset", cfg.io.dataset},
             {"validation", cfg.io.validation}};
  return j.dump(2) + "\n";
}

DegradationOp build_operator(Task task, const OperatorSection& op, Shape clean) {
  if (task == Task::Denoise) return DegradationOp::identity(clean);
  const Kernel k = op.kernel.empty() ? gaussian_kernel(op.kernel_size, op.kernel_sigma) : load_kernel(op.kernel);
  if (task == Task::Deblur) return DegradationOp::blur(k, clean);
  if (op.resize == "bicubic") return DegradationOp::bicubic(op.scale, clean);
  return DegradationOp::blur_downsample(k, op.scale, clean);
}

EvalReport make_report(std::vector<EvalRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const EvalRow& a, const EvalRow& b) { return a.name < b.name; });
  EvalReport r;
  r.rows = std::move(rows);
  if (r.rows.empty()) return r;
  const double n = static_cast<double>(r.rows.size());
  double p = 0.0, s = 0.0, t = 0.0, it = 0.0;
  bool all_t = true, all_it = true;
  for (const EvalRow& row : r.rows) {
    p += row.psnr;
    s += row.ssim;
    all_t = all_t && row.runtime.has_value();
    all_it = all_it && row.iterations.has_value();
    if (row.runtime) t += *row.runtime;
    if (row.iterations) it += *row.iterations;
  }
  r.avg_psnr = p / n;
  r.avg_ssim = s / n;
  if (all_t) r.avg_runtime = t / n;
  if (all_it) r.avg_iterations = it / n;
  return r;
}

std::string report_json(const EvalReport& r) {
  json rows = json::array();
  for (const EvalRow& row : r.rows) {
    rows.push_back({{"name", row.name},
                    {"psnr_db", row.psnr},
                    {"ssim", row.ssim},
                    {"runtime_s", optional_number(row.runtime)},
                    {"iterations", row.iterations ? json(*row.iterations) : json(nullptr)}});
  }
  json j;
  j["rows"] = std::move(rows);
  j["average"] = {{"psnr_db", r.avg_psnr},
                  {"ssim", r.avg_ssim},
                  {"runtime_s", optional_number(r.avg_runtime)},
                  {"iterations", optional_number(r.avg_iterations)}};
  return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& r) {
  std::size_t width = 7;
  for (const EvalRow& row : r.rows) width = std::max(width, row.name.size());
  std::ostringstream out;
  auto line = [&](const std::string& name, const std::string& p, const std::string& s, const std::string& t,
                  const std::string& it) {
    std::string text = name + std::string(width - name.size(), ' ');
    for (const auto& [cell, w] : {std::pair{p, 9}, std::pair{s, 8}, std::pair{t, 11}, std::pair{it, 6}})
      text += "  " + std::string(cell.size() < static_cast<std::size_t>(w) ? w - cell.size() : 0, ' ') + cell;
    out << text << '\n';
  };
  auto opt = [](const auto& v, int digits) { return v ? fixed(static_cast<double>(*v), digits) : std::string("-"); };
  line("image", "PSNR(dB)", "SSIM", "runtime(s)", "iters");
  for (const EvalRow& row : r.rows)
    line(row.name, fixed(row.psnr, 2), fixed(row.ssim, 4), opt(row.runtime, 3), opt(row.iterations, 0));
  line("Average", fixed(r.avg_psnr, 2), fixed(r.avg_ssim, 4), opt(r.avg_runtime, 3), opt(r.avg_iterations, 1));
  return out.str();
}

}  // namespace unroll::cli

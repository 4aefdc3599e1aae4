#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "unroll/cli.hpp"
#include "unroll/error.hpp"
#include "unroll/image_io.hpp"
#include "unroll/imaging.hpp"
#include "unroll/metrics.hpp"
#include "unroll/solver.hpp"
#include "unroll/unrolled.hpp"

namespace unroll::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kManifest = "manifest.json";
constexpr const char* kResolved = "resolved_config.json";
constexpr std::uint64_t kValidationStream = 0x56414c4944415445ULL;
constexpr std::uint64_t kSubsetStream = 0x5355425345540000ULL;

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool is_image_file(const fs::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".pgm" || ext == ".png";
}

std::vector<std::string> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

fs::path require_dir(const std::string& path, const char* what) {
  if (path.empty()) throw Error(std::string("no ") + what + " directory given");
  return path;
}

fs::path prepare_output(const std::string& path) {
  const fs::path out = require_dir(path, "output");
  fs::create_directories(out);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw Error("cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Runs f(i) for i < n on up to worker_count() threads and rethrows the
// failure with the smallest index.
template <class F>
void parallel_for(std::size_t n, F&& f) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---- manifest ----

struct ManifestImage {
  std::string name;
  Shape clean;
  Shape degraded;
};

struct Manifest {
  Task task = Task::Denoise;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  OpKind kind = OpKind::Identity;
  Kernel kernel = Kernel::delta();
  int scale = 1;
  std::vector<ManifestImage> images;
};

const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Identity: return "identity";
    case OpKind::Blur: return "blur";
    case OpKind::BlurDownsample: return "blur_downsample";
    case OpKind::BicubicResize: return "bicubic";
  }
  return "?";
}

DegradationOp manifest_operator(const Manifest& m, Shape clean) {
  switch (m.kind) {
    case OpKind::Identity: return DegradationOp::identity(clean);
    case OpKind::Blur: return DegradationOp::blur(m.kernel, clean);
    case OpKind::BlurDownsample: return DegradationOp::blur_downsample(m.kernel, m.scale, clean);
    case OpKind::BicubicResize: return DegradationOp::bicubic(m.scale, clean);
  }
  throw Error("unknown operator kind");
}

std::string manifest_json(const Manifest& m) {
  json images = json::array();
  for (const auto& im : m.images)
    images.push_back({{"name", im.name},
                      {"clean_shape", {im.clean.height, im.clean.width}},
                      {"degraded_shape", {im.degraded.height, im.degraded.width}}});
  json j;
  j["version"] = 1;
  j["task"] = to_string(m.task);
  j["seed"] = m.seed;
  j["noise_sigma"] = m.noise_sigma;
  j["operator"] = {{"kind", op_kind_name(m.kind)},
                   {"kernel_size", m.kernel.size()},
                   {"kernel_taps", m.kernel.taps()},
                   {"scale", m.scale}};
  j["images"] = std::move(images);
  return j.dump(2) + "\n";
}

Shape read_shape(const json& j) {
  if (!j.is_array() || j.size() != 2) throw FormatError("manifest: shapes must be [height, width]");
  return {j.at(0).get<int>(), j.at(1).get<int>()};
}

Manifest read_manifest(const fs::path& path) {
  Manifest m;
  try {
    const json j = json::parse(read_text(path));
    if (j.at("version").get<int>() != 1) throw FormatError("manifest: unsupported version");
    const std::string task = j.at("task").get<std::string>();
    m.task = task == "denoise" ? Task::Denoise : task == "deblur" ? Task::Deblur : Task::SuperRes;
    if (task != "denoise" && task != "deblur" && task != "sr") throw FormatError("manifest: unknown task");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.noise_sigma = j.at("noise_sigma").get<double>();
    const json& op = j.at("operator");
    const std::string kind = op.at("kind").get<std::string>();
    if (kind == "identity") m.kind = OpKind::Identity;
    else if (kind == "blur") m.kind = OpKind::Blur;
    else if (kind == "blur_downsample") m.kind = OpKind::BlurDownsample;
    else if (kind == "bicubic") m.kind = OpKind::BicubicResize;
    else throw FormatError("manifest: unknown operator kind '" + kind + "'");
    m.kernel = Kernel(op.at("kernel_size").get<int>(), op.at("kernel_taps").get<std::vector<double>>());
    m.scale = op.at("scale").get<int>();
    for (const json& im : j.at("images"))
      m.images.push_back({im.at("name").get<std::string>(), read_shape(im.at("clean_shape")),
                          read_shape(im.at("degraded_shape"))});
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

// ---- denoisers and solver settings ----

NetSpec net_by_name(const std::string& name) {
  if (name == "full") return NetSpec::full();
  if (name == "desk") return NetSpec::desk();
  return NetSpec::tiny();
}

Denoiser make_denoiser(const DenoiserSection& d) {
  if (d.type == "dct") return Denoiser::dct(d.patch, d.tau);
  if (d.type == "tv") return Denoiser::tv(d.lambda, d.inner_iters);
  if (d.type == "quadratic") return Denoiser::quadratic(d.lambda);
  if (d.type == "zero") return Denoiser::zero();
  if (d.type == "cnn") {
    if (d.weights.empty()) throw Error("denoiser 'cnn' needs 'denoiser.weights'");
    NetSpec spec;
    ParamVector params;
    load_weights(d.weights, spec, params);
    return Denoiser::cnn(spec, std::move(params));
  }
  throw Error("denoiser '" + d.type + "' is not a plug-in denoiser");
}

SolverMode solver_mode(const std::string& m) {
  if (m == "hqs_cg") return SolverMode::ExactCG;
  if (m == "admm") return SolverMode::Admm;
  return SolverMode::GradStep;
}

struct Restorer {
  const RunConfig& cfg;
  std::optional<Denoiser> denoiser;
  std::optional<NetParams> net;

  explicit Restorer(const RunConfig& c) : cfg(c) {
    if (cfg.denoiser.type == "unrolled") {
      if (cfg.denoiser.weights.empty()) throw Error("denoiser 'unrolled' needs 'denoiser.weights' (a checkpoint)");
      net = load_checkpoint(cfg.denoiser.weights);
    } else {
      denoiser = make_denoiser(cfg.denoiser);
    }
  }

  // Returns the estimate and, for solver runs, the trace.
  std::pair<Image, std::optional<SolverTrace>> run(const Image& y, const DegradationOp& op) const {
    if (net) return {unrolled_forward(*net, y, op), std::nullopt};
    const SolverSection& s = cfg.solver;
    const double lambda = s.lambda ? *s.lambda : denoiser->has_prior() ? matched_lambda(*denoiser, s.eta) : 0.0;
    const Problem p{y, op, lambda, s.eta};
    SolverConfig sc;
    sc.mode = solver_mode(s.mode);
    sc.op_norm_sq = operator_norm_sq(op).value;
    sc.delta = s.delta ? *s.delta : s.delta_fraction * max_step(sc.op_norm_sq, s.eta);
    sc.max_iters = s.iters;
    sc.tol = s.tol;
    sc.cg_tol = s.cg_tol;
    sc.cg_maxit = s.cg_maxit;
    sc.rho = s.rho;
    SolveResult r = solve(p, sc, *denoiser);
    return {std::move(r.v), std::move(r.trace)};
  }
};

std::string stem_of(const std::string& name) { return fs::path(name).stem().string(); }

// ---- training data ----

std::vector<Image> collect_patches(const fs::path& dir, int size, int stride, bool augment) {
  std::vector<Image> patches;
  for (const std::string& name : list_images(dir)) {
    const Image img = load_image(dir / name);
    if (img.height() < size || img.width() < size) continue;
    for (Image& p : extract_patches(img, size, stride, name).patches) {
      if (augment) {
        for (Image& a : augment8(p)) patches.push_back(std::move(a));
      } else {
        patches.push_back(std::move(p));
      }
    }
  }
  if (patches.empty()) throw Error("no " + std::to_string(size) + "x" + std::to_string(size) + " patches found in " + dir.string());
  return patches;
}

std::vector<TrainPair> degrade_patches(std::vector<Image> patches, const DegradationOp& op, double sigma,
                                       std::uint64_t seed) {
  std::vector<TrainPair> pairs;
  pairs.reserve(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    Rng rng = Rng::derive(seed, i);
    Image y = add_gaussian_noise(apply(op, patches[i]), sigma, rng);
    pairs.push_back({std::move(y), std::move(patches[i])});
  }
  return pairs;
}

std::vector<TrainRecord> read_loss_csv(const fs::path& path) {
  std::vector<TrainRecord> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  std::getline(in, line);
  if (line != "step,loss,lr") throw FormatError("malformed loss CSV: " + path.string());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TrainRecord r;
    if (std::sscanf(line.c_str(), "%ld,%lf,%lf", &r.step, &r.loss, &r.lr) != 3)
      throw FormatError("malformed loss CSV row: " + line);
    rows.push_back(r);
  }
  return rows;
}

void save_checkpoint_atomic(const fs::path& path, const NetParams& p, const AdamState& adam) {
  const fs::path tmp = path.string() + ".tmp";
  save_checkpoint(tmp, p, &adam);
  fs::rename(tmp, path);
}

std::string loss_csv_text(const std::vector<TrainRecord>& rows) {
  std::ostringstream out;
  write_loss_csv(out, rows);
  return out.str();
}

double mean_psnr(const std::vector<TrainPair>& pairs, const std::function<Image(const Image&)>& f) {
  double total = 0.0;
  for (const TrainPair& p : pairs) total += psnr(f(p.y), p.truth);
  return total / static_cast<double>(pairs.size());
}

}  // namespace

int worker_count() {
  const char* env = std::getenv("UNROLL_RESTORE_THREADS");
  if (!env || !*env) return 0;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 0) throw Error(std::string("UNROLL_RESTORE_THREADS must be a non-negative integer (got '") + env + "')");
  return static_cast<int>(std::min<long>(v, 256));
}

int cmd_degrade(const RunConfig& cfg, std::ostream& out) {
  const fs::path in_dir = require_dir(cfg.io.input, "input");
  const std::vector<std::string> names = list_images(in_dir);
  if (names.empty()) throw Error("no images in " + in_dir.string());
  const fs::path out_dir = prepare_output(cfg.io.output);
  const OperatorSection op_cfg = cfg.op.value_or(OperatorSection{});

  Manifest m;
  m.task = cfg.task;
  m.seed = cfg.seed;
  m.noise_sigma = op_cfg.noise_sigma;
  m.images.resize(names.size());
  std::vector<DegradationOp> ops(names.size(), DegradationOp::identity({1, 1}));
  parallel_for(names.size(), [&](std::size_t i) {
    const Image x = load_image(in_dir / names[i]);
    const Shape clean{x.height(), x.width()};
    ops[i] = build_operator(cfg.task, op_cfg, clean);
    Rng rng = Rng::derive(cfg.seed, name_hash(names[i]));
    const Image y = add_gaussian_noise(apply(ops[i], x), op_cfg.noise_sigma, rng);
    save_image(y, out_dir / names[i]);
    m.images[i] = {names[i], clean, ops[i].output_shape()};
  });
  m.kind = ops[0].kind();
  m.kernel = ops[0].kernel().size() > 0 ? ops[0].kernel() : Kernel::delta();
  m.scale = ops[0].factor();
  write_text(out_dir / kManifest, manifest_json(m));
  write_text(out_dir / kResolved, resolved_config_json(cfg));
  out << "degraded " << names.size() << " image(s) into " << out_dir.string() << "\n";
  return 0;
}

int cmd_restore(const RunConfig& cfg, std::ostream& out) {
  const fs::path in_dir = require_dir(cfg.io.input, "input");
  std::optional<Manifest> manifest;
  if (fs::exists(in_dir / kManifest)) manifest = read_manifest(in_dir / kManifest);
  if (!manifest && !cfg.op) throw Error("operator unspecified: no manifest in " + in_dir.string() + " and no 'operator' in the config");

  std::vector<std::string> names;
  if (manifest) {
    for (const auto& im : manifest->images) names.push_back(im.name);
  } else {
    names = list_images(in_dir);
  }
  if (names.empty()) throw Error("no images in " + in_dir.string());
  const Task task = manifest ? manifest->task : cfg.task;
  const fs::path out_dir = prepare_output(cfg.io.output);
  const Restorer restorer(cfg);
  const bool have_truth = !cfg.io.truth.empty();

  std::vector<EvalRow> rows(names.size());
  parallel_for(names.size(), [&](std::size_t i) {
    const Image y = load_image(in_dir / names[i]);
    Shape clean{y.height(), y.width()};
    if (manifest) {
      clean = manifest->images[i].clean;
    } else if (task == Task::SuperRes) {
      clean = {y.height() * cfg.op->scale, y.width() * cfg.op->scale};
    }
    const DegradationOp op = manifest ? manifest_operator(*manifest, clean) : build_operator(task, *cfg.op, clean);
    const Shape expected = op.output_shape();
    if (y.height() != expected.height || y.width() != expected.width)
      throw Error(names[i] + ": image shape does not match the operator's output shape");

    const auto t0 = std::chrono::steady_clock::now();
    auto [estimate, trace] = restorer.run(y, op);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    save_image(estimate, out_dir / names[i]);
    if (trace) save_trace_csv((out_dir / (stem_of(names[i]) + ".trace.csv")).string(), *trace);
    if (have_truth) {
      const Image truth = load_image(fs::path(cfg.io.truth) / names[i]);
      // Scores use the saved 8-bit image so that eval on the output directory agrees.
      const Image saved = load_image(out_dir / names[i]);
      rows[i].name = names[i];
      rows[i].psnr = psnr(saved, truth);
      rows[i].ssim = ssim(saved, truth);
      if (cfg.record_runtime) rows[i].runtime = seconds;
      rows[i].iterations = trace ? trace->iterations : restorer.net->K;
    }
  });
  write_text(out_dir / kResolved, resolved_config_json(cfg));
  if (have_truth) {
    const EvalReport report = make_report(std::move(rows));
    write_text(out_dir / "report.json", report_json(report));
    const std::string table = report_table(report);
    write_text(out_dir / "report.txt", table);
    out << table;
  }
  out << "restored " << names.size() << " image(s) into " << out_dir.string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const fs::path restored = require_dir(cfg.io.input, "restored (input)");
  const fs::path truth = require_dir(cfg.io.truth, "truth");
  const std::vector<std::string> a = list_images(restored);
  const std::vector<std::string> b = list_images(truth);
  if (a != b) {
    std::vector<std::string> diff;
    std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(diff));
    std::string list;
    for (const auto& d : diff) list += (list.empty() ? "" : ", ") + d;
    throw Error("filename mismatch between " + restored.string() + " and " + truth.string() + ": " + list);
  }
  if (a.empty()) throw Error("no images in " + restored.string());
  std::vector<EvalRow> rows(a.size());
  parallel_for(a.size(), [&](std::size_t i) {
    const Image x = load_image(restored / a[i]);
    const Image t = load_image(truth / a[i]);
    rows[i].name = a[i];
    rows[i].psnr = psnr(x, t);
    rows[i].ssim = ssim(x, t);
    const fs::path trace_path = restored / (stem_of(a[i]) + ".trace.csv");
    if (fs::exists(trace_path)) {
      std::ifstream in(trace_path);
      rows[i].iterations = read_trace_csv(in).iterations;
    }
  });
  const EvalReport report = make_report(std::move(rows));
  const std::string table = report_table(report);
  if (!cfg.io.output.empty()) {
    const fs::path out_dir = prepare_output(cfg.io.output);
    write_text(out_dir / "report.json", report_json(report));
    write_text(out_dir / "report.txt", table);
  }
  out << table;
  return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const TrainingSection& t = cfg.training;
  const fs::path data_dir = require_dir(cfg.io.dataset, "dataset");
  const fs::path out_dir = prepare_output(cfg.io.output);
  const OperatorSection op_cfg = cfg.op.value_or(OperatorSection{});
  const DegradationOp op = build_operator(cfg.task, op_cfg, {t.patch, t.patch});

  std::vector<Image> patches = collect_patches(data_dir, t.patch, t.stride, t.augment);
  if (t.max_pairs > 0 && patches.size() > static_cast<std::size_t>(t.max_pairs)) {
    std::vector<std::size_t> idx(patches.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng = Rng::derive(cfg.seed, kSubsetStream);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    idx.resize(static_cast<std::size_t>(t.max_pairs));
    std::sort(idx.begin(), idx.end());
    std::vector<Image> kept;
    for (std::size_t i : idx) kept.push_back(std::move(patches[i]));
    patches = std::move(kept);
  }
  const std::vector<TrainPair> data = degrade_patches(std::move(patches), op, op_cfg.noise_sigma, cfg.seed);
  std::vector<TrainPair> validation;
  if (!cfg.io.validation.empty())
    validation = degrade_patches(collect_patches(cfg.io.validation, t.patch, t.patch, false), op, op_cfg.noise_sigma,
                                 cfg.seed ^ kValidationStream);

  TrainConfig tc;
  tc.lr0 = t.lr0;
  tc.halve_every = t.halve_every;
  tc.batch_size = t.batch_size;
  tc.steps = t.steps;
  tc.seed = cfg.seed;
  tc.validate();
  if (t.checkpoint_every < 1) throw Error("config: 'training.checkpoint_every' must be positive");

  const fs::path ckpt = out_dir / "checkpoint.bin";
  const fs::path loss_path = out_dir / "loss.csv";
  NetParams net;
  AdamState adam;
  std::vector<TrainRecord> history;
  if (t.resume && fs::exists(ckpt)) {
    net = load_checkpoint(ckpt, &adam);
    for (const TrainRecord& r : read_loss_csv(loss_path))
      if (r.step <= adam.t) history.push_back(r);
    out << "resuming from step " << adam.t << "\n";
  } else {
    net = init_net(net_by_name(t.net), t.stages, op, t.eta, t.delta_fraction, cfg.seed);
  }
  write_text(out_dir / kResolved, resolved_config_json(cfg));
  out << "training on " << data.size() << " pair(s), " << net.flat_size() << " parameter(s)\n";

  auto snapshot = [&](const NetParams& p, const AdamState& a) {
    save_checkpoint_atomic(ckpt, p, a);
    write_text(loss_path, loss_csv_text(history));
  };
  std::optional<double> val_before;
  if (!validation.empty()) val_before = mean_psnr(validation, [&](const Image& y) { return unrolled_forward(net, y, op); });
  if (adam.t == 0) snapshot(net, adam);
  try {
    train(net, adam, data, op, tc, [&](const TrainProgress& pr) {
      history.push_back(pr.record);
      if (pr.record.step % t.checkpoint_every == 0) snapshot(pr.params, pr.adam);
    });
  } catch (const Error&) {
    write_text(loss_path, loss_csv_text(history));
    out << "training stopped; last checkpoint kept at " << ckpt.string() << "\n";
    throw;
  }
  snapshot(net, adam);
  if (!history.empty()) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "step %ld loss %.6g\n", history.back().step, history.back().loss);
    out << buf;
  }
  if (val_before) {
    const double noisy = mean_psnr(validation, [](const Image& y) { return y; });
    const double after = mean_psnr(validation, [&](const Image& y) { return unrolled_forward(net, y, op); });
    char buf[160];
    std::snprintf(buf, sizeof buf, "validation PSNR: input %.2f dB, initial %.2f dB, final %.2f dB\n", noisy,
                  *val_before, after);
    out << buf;
  }
  return 0;
}

int cmd_diagnose(const fs::path& trace_csv, std::ostream& out) {
  std::ifstream in(trace_csv);
  if (!in) throw Error("cannot read trace: " + trace_csv.string());
  const SolverTrace trace = read_trace_csv(in);
  bool ok = true;
  for (const CheckResult& c : diagnose(trace)) {
    out << to_string(c.status) << "  " << c.name;
    if (!c.detail.empty()) out << "  (" << c.detail << ")";
    out << "\n";
    ok = ok && c.status != CheckStatus::Fail;
  }
  return ok ? 0 : 1;
}

int run(const Invocation& inv, std::ostream& out, std::ostream& err) {
  try {
    if (inv.command == "diagnose") {
      if (!inv.input) throw Error("diagnose needs --input <trace.csv>");
      return cmd_diagnose(*inv.input, out);
    }
    RunConfig cfg;
    if (inv.config) {
      cfg = load_config(*inv.config);
    } else if (inv.command != "eval") {
      throw Error(inv.command + " needs --config <path>");
    }
    if (inv.input) cfg.io.input = inv.input->string();
    if (inv.output) cfg.io.output = inv.output->string();
    if (inv.truth) cfg.io.truth = inv.truth->string();
    if (inv.seed) cfg.seed = *inv.seed;
    if (inv.command == "degrade") return cmd_degrade(cfg, out);
    if (inv.command == "restore") return cmd_restore(cfg, out);
    if (inv.command == "train") return cmd_train(cfg, out);
    if (inv.command == "eval") return cmd_eval(cfg, out);
    throw Error("unknown command '" + inv.command + "'");
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace unroll::cli

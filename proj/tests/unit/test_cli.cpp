#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <sys/wait.h>

#include "unroll/cli.hpp"
#include "unroll/error.hpp"
#include "unroll/image_io.hpp"
#include "unroll/metrics.hpp"
#include "unroll/solver.hpp"
#include "unroll/unrolled.hpp"

using namespace unroll;
using namespace unroll::cli;
namespace fs = std::filesystem;

namespace {

const fs::path kData = UNROLL_TEST_DATA_DIR;
const fs::path kTest = kData / "images" / "test";
const fs::path kTrain = kData / "images" / "train";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "unroll_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

fs::path write_config(const fs::path& dir, const std::string& json) {
  const fs::path p = dir / "config.json";
  write_file(p, json);
  return p;
}

int invoke(const std::string& command, const std::optional<fs::path>& config, const std::optional<fs::path>& input,
           const std::optional<fs::path>& output, const std::optional<fs::path>& truth = std::nullopt,
           std::string* stdout_text = nullptr, std::string* stderr_text = nullptr) {
  Invocation inv;
  inv.command = command;
  inv.config = config;
  inv.input = input;
  inv.output = output;
  inv.truth = truth;
  std::ostringstream out, err;
  const int code = run(inv, out, err);
  if (stdout_text) *stdout_text = out.str();
  if (stderr_text) *stderr_text = err.str();
  return code;
}

// A single 64×64 fixture copied into its own directory.
fs::path single_image_dir(const std::string& name, const std::string& image) {
  const fs::path dir = fresh_dir(name);
  fs::copy_file(kTest / image, dir / image);
  return dir;
}

}  // namespace

TEST_CASE("config parsing is strict") {
  CHECK_NOTHROW(parse_config("{}"));
  CHECK_THROWS_WITH_AS(parse_config(R"({"solver": {"detla": 1}})"), doctest::Contains("solver.detla"), Error);
  CHECK_THROWS_WITH_AS(parse_config(R"({"colour": 1})"), doctest::Contains("'colour'"), Error);
  CHECK_THROWS_AS(parse_config(R"({"task": "inpaint"})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"solver": {"iters": 1.5}})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"seed": -1})"), Error);
  CHECK_THROWS_AS(parse_config("{"), Error);
  const RunConfig c = parse_config(R"({"task": "sr", "operator": {"scale": 3}, "solver": {"lambda": null}})");
  CHECK(c.task == Task::SuperRes);
  REQUIRE(c.op.has_value());
  CHECK(c.op->scale == 3);
  CHECK_FALSE(c.solver.lambda.has_value());
  CHECK_FALSE(parse_config("{}").op.has_value());
}

TEST_CASE("resolved config round trips") {
  const RunConfig c = parse_config(R"({"task": "deblur", "seed": 12, "operator": {"noise_sigma": 2},
                                      "solver": {"delta": 0.5}, "training": {"steps": 7}})");
  const std::string text = resolved_config_json(c);
  CHECK(resolved_config_json(parse_config(text)) == text);
}

TEST_CASE("degrade examples") {
  const fs::path work = fresh_dir("degrade");
  SUBCASE("denoise with sigma 0 is byte identical") {
    const auto cfg = write_config(work, R"({"task": "denoise", "operator": {"noise_sigma": 0}})");
    REQUIRE(invoke("degrade", cfg, kTest, work / "out") == 0);
    for (const char* n : {"astronaut.pgm", "text.pgm"}) CHECK(read_file(work / "out" / n) == read_file(kTest / n));
    CHECK(fs::exists(work / "out" / "manifest.json"));
    CHECK(fs::exists(work / "out" / "resolved_config.json"));
  }
  SUBCASE("deblur with a delta kernel and sigma 0 is identical") {
    write_file(work / "delta.txt", "1 1\n1\n");
    const auto cfg = write_config(
        work, R"({"task": "deblur", "operator": {"kernel": ")" + (work / "delta.txt").string() + R"(", "noise_sigma": 0}})");
    REQUIRE(invoke("degrade", cfg, kTest, work / "out") == 0);
    CHECK(read_file(work / "out" / "coffee.pgm") == read_file(kTest / "coffee.pgm"));
  }
  SUBCASE("sr halves the shape") {
    const auto cfg = write_config(work, R"({"task": "sr", "operator": {"kernel_size": 7, "scale": 2}})");
    REQUIRE(invoke("degrade", cfg, kTest, work / "out") == 0);
    const Image y = load_image(work / "out" / "rocket.pgm");
    CHECK(y.height() == 32);
    CHECK(y.width() == 32);
  }
  SUBCASE("missing input fails with exit 1") {
    const auto cfg = write_config(work, "{}");
    CHECK(invoke("degrade", cfg, work / "nope", work / "out") == 1);
  }
}

TEST_CASE("restore examples") {
  const fs::path work = fresh_dir("restore");
  SUBCASE("identity problem with a lambda 0 quadratic prior returns the input") {
    const fs::path in = single_image_dir("restore_identity", "text.pgm");
    const auto cfg = write_config(work, R"({"task": "denoise", "operator": {},
        "solver": {"iters": 50}, "denoiser": {"type": "quadratic", "lambda": 0}})");
    REQUIRE(invoke("restore", cfg, in, work / "out") == 0);
    const Image a = load_image(in / "text.pgm");
    const Image b = load_image(work / "out" / "text.pgm");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.pixels()[i] - b.pixels()[i]));
    CHECK(worst <= 1e-8);
    CHECK(fs::exists(work / "out" / "text.trace.csv"));
  }
  SUBCASE("deblurring a fixture gains at least 2 dB") {
    const fs::path clean = single_image_dir("restore_clean", "astronaut.pgm");
    const auto cfg = write_config(work, R"({"task": "deblur", "seed": 0,
        "operator": {"kernel_size": 25, "kernel_sigma": 1.6, "noise_sigma": 2.0},
        "solver": {"eta": 0.05, "iters": 1000}, "denoiser": {"type": "dct", "patch": 8, "tau": 3.0}})");
    REQUIRE(invoke("degrade", cfg, clean, work / "deg") == 0);
    REQUIRE(invoke("restore", cfg, work / "deg", work / "res", clean) == 0);
    const Image truth = load_image(clean / "astronaut.pgm");
    const double before = psnr(load_image(work / "deg" / "astronaut.pgm"), truth);
    const double after = psnr(load_image(work / "res" / "astronaut.pgm"), truth);
    MESSAGE("deblur gain " << after - before << " dB");
    CHECK(after - before >= 2.0);
    CHECK(after - before == doctest::Approx(4.112).epsilon(0.005));
    CHECK(fs::exists(work / "res" / "report.json"));
  }
  SUBCASE("no manifest and no operator") {
    const auto cfg = write_config(work, R"({"task": "deblur"})");
    std::string err;
    CHECK(invoke("restore", cfg, kTest, work / "out", std::nullopt, nullptr, &err) == 1);
    CHECK(err.find("operator unspecified") != std::string::npos);
  }
  SUBCASE("step size violation reports max_step") {
    const auto cfg = write_config(work, R"({"task": "denoise", "operator": {}, "solver": {"delta": 10}})");
    std::string err;
    CHECK(invoke("restore", cfg, single_image_dir("restore_step", "text.pgm"), work / "out", std::nullopt, nullptr,
                 &err) == 1);
    CHECK(err.find("max_step") != std::string::npos);
  }
  SUBCASE("malformed manifest is a data error") {
    const fs::path in = single_image_dir("restore_badmanifest", "text.pgm");
    write_file(in / "manifest.json", R"({"version": 1})");
    const auto cfg = write_config(work, "{}");
    CHECK(invoke("restore", cfg, in, work / "out") == 2);
  }
}

TEST_CASE("eval examples") {
  const fs::path work = fresh_dir("eval");
  SUBCASE("restored equal to truth") {
    std::string table;
    REQUIRE(invoke("eval", std::nullopt, kTest, work / "out", kTest, &table) == 0);
    const std::string json = read_file(work / "out" / "report.json");
    CHECK(json.find("\"psnr_db\": 100.0") != std::string::npos);
    CHECK(json.find("\"ssim\": 1.0") != std::string::npos);
    CHECK(table.find("Average") != std::string::npos);
  }
  SUBCASE("average of two rows") {
    const EvalReport r = make_report({{"b.pgm", 30.0, 0.5, std::nullopt, 3}, {"a.pgm", 20.5, 0.25, std::nullopt, 4}});
    CHECK(r.rows[0].name == "a.pgm");
    CHECK(std::abs(r.avg_psnr - 25.25) <= 1e-12);
    CHECK(std::abs(r.avg_ssim - 0.375) <= 1e-12);
    REQUIRE(r.avg_iterations.has_value());
    CHECK(*r.avg_iterations == 3.5);
    CHECK_FALSE(r.avg_runtime.has_value());
  }
  SUBCASE("filename mismatch") {
    const fs::path one = single_image_dir("eval_one", "text.pgm");
    std::string err;
    CHECK(invoke("eval", std::nullopt, one, std::nullopt, kTest, nullptr, &err) == 1);
    CHECK(err.find("filename mismatch") != std::string::npos);
  }
  SUBCASE("fixture set matches the golden report") {
    const auto cfg = write_config(work, R"({"task": "denoise", "seed": 0, "operator": {"noise_sigma": 25}})");
    REQUIRE(invoke("degrade", cfg, kTest, work / "deg") == 0);
    fs::remove(work / "deg" / "manifest.json");
    REQUIRE(invoke("eval", std::nullopt, work / "deg", work / "out", kTest) == 0);
    CHECK(read_file(work / "out" / "report.json") == read_file(kData / "golden" / "eval_denoise25.json"));
  }
}

TEST_CASE("train examples") {
  const fs::path work = fresh_dir("train");
  const std::string base = R"({"task": "denoise", "seed": 4, "operator": {"noise_sigma": 25},
      "io": {"dataset": ")" + kTrain.string() + R"("}, "training": {"max_pairs": 24, "batch_size": 4, "checkpoint_every": 3, )";
  SUBCASE("zero steps saves the initialization") {
    const auto cfg = write_config(work, base + R"("steps": 0}})");
    REQUIRE(invoke("train", cfg, std::nullopt, work / "out") == 0);
    const NetParams saved = load_checkpoint(work / "out" / "checkpoint.bin");
    const NetParams init = init_net(NetSpec::tiny(), 3, DegradationOp::identity({32, 32}), 0.5, 0.9, 4);
    CHECK(flatten(saved) == flatten(init));
    CHECK(read_file(work / "out" / "loss.csv") == "step,loss,lr\n");
  }
  SUBCASE("resume continues the loss curve") {
    const auto full = write_config(work, base + R"("steps": 8}})");
    REQUIRE(invoke("train", full, std::nullopt, work / "full") == 0);
    const auto part = write_config(work, base + R"("steps": 5}})");
    REQUIRE(invoke("train", part, std::nullopt, work / "part") == 0);
    // The shorter run stands in for one interrupted after step 5.
    const auto resume = write_config(work, base + R"("steps": 8, "resume": true}})");
    std::string out;
    REQUIRE(invoke("train", resume, std::nullopt, work / "part", std::nullopt, &out) == 0);
    CHECK(out.find("resuming from step 5") != std::string::npos);
    CHECK(read_file(work / "part" / "loss.csv") == read_file(work / "full" / "loss.csv"));
    CHECK(read_file(work / "part" / "checkpoint.bin") == read_file(work / "full" / "checkpoint.bin"));
  }
  SUBCASE("divergence exits 1 and keeps the checkpoint") {
    const auto cfg = write_config(work, base + R"("steps": 6, "lr0": 1e300}})");
    CHECK(invoke("train", cfg, std::nullopt, work / "out") == 1);
    CHECK_NOTHROW(load_checkpoint(work / "out" / "checkpoint.bin"));
  }
}

TEST_CASE("diagnose examples") {
  const fs::path work = fresh_dir("diagnose");
  const auto cfg = write_config(work, R"({"task": "deblur", "operator": {"kernel_size": 7, "noise_sigma": 2},
      "solver": {"iters": 60, "tol": 0}, "denoiser": {"type": "dct", "tau": 5}})");
  const fs::path in = single_image_dir("diagnose_in", "coffee.pgm");
  REQUIRE(invoke("degrade", cfg, in, work / "deg") == 0);
  REQUIRE(invoke("restore", cfg, work / "deg", work / "res") == 0);
  const fs::path trace = work / "res" / "coffee.trace.csv";
  std::string out;
  CHECK(invoke("diagnose", std::nullopt, trace, std::nullopt, std::nullopt, &out) == 0);
  std::size_t passes = 0;
  for (std::size_t pos = out.find("PASS"); pos != std::string::npos; pos = out.find("PASS", pos + 1)) ++passes;
  CHECK(passes == 4);

  std::ifstream in_csv(trace);
  SolverTrace t = read_trace_csv(in_csv);
  t.records[5].xi = t.records[4].xi + 1e-3;
  save_trace_csv((work / "bumped.csv").string(), t);
  CHECK(invoke("diagnose", std::nullopt, work / "bumped.csv", std::nullopt, std::nullopt, &out) == 1);
  CHECK(out.find("FAIL  energy monotone") != std::string::npos);

  for (auto& r : t.records) r.partial = true;
  t.records[5].xi = t.records[4].xi - 1.0;
  save_trace_csv((work / "partial.csv").string(), t);
  CHECK(invoke("diagnose", std::nullopt, work / "partial.csv", std::nullopt, std::nullopt, &out) == 0);
  CHECK(out.find("SKIP  energy monotone") != std::string::npos);

  write_file(work / "garbage.csv", "t,xi,dx2,gap,c1_resid,partial\n0,abc,0,0,0,0\n");
  CHECK(invoke("diagnose", std::nullopt, work / "garbage.csv", std::nullopt) == 2);
}

TEST_CASE("thread cap") {
  setenv("UNROLL_RESTORE_THREADS", "3", 1);
  CHECK(worker_count() == 3);
  setenv("UNROLL_RESTORE_THREADS", "x", 1);
  CHECK_THROWS_AS(worker_count(), Error);
  unsetenv("UNROLL_RESTORE_THREADS");
  CHECK(worker_count() == 0);
}

TEST_CASE("the executable maps failures to exit codes") {
  const fs::path work = fresh_dir("exe");
  const std::string exe = UNROLL_CLI_PATH;
  auto status = [](const std::string& cmd) {
    const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  write_file(work / "bad.csv", "nonsense\n");
  CHECK(status(exe + " diagnose --input " + (work / "bad.csv").string()) == 2);
  write_file(work / "typo.json", R"({"sovler": {}})");
  CHECK(status(exe + " restore --config " + (work / "typo.json").string() + " --input " + kTest.string()) == 1);
  CHECK(status(exe + " eval --input " + kTest.string() + " --truth " + kTest.string()) == 0);
  CHECK(status(exe + " frobnicate") == 1);
}

#include <fstream>

#include "doctest.h"
#include "dnet/cli.hpp"
#include "dnet/evaluator.hpp"
#include "dnet/log.hpp"
#include "dnet/model_io.hpp"
#include "dnet/parallel.hpp"
#include "dnet/router.hpp"
#include "helpers.hpp"

using namespace dnet;
using cli::run;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> quick_train(const testutil::TempDir& dir, const std::string& out, const std::string& log) {
  return {"-q",          "train",     "--synthetic", "4",      "--synthetic-size", "48",           "--sigma",
          "25",          "--depth",   "2",           "--kernels", "5",             "--steps",      "4",
          "--batch",     "2",         "--patch",     "44",     "--log-every",      "2",            "--no-wall-time",
          "--log",       (dir / log).string(),       "--out",  (dir / out).string()};
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run({"--help"}) == cli::kOk);
  CHECK(run({"train", "--help"}) == cli::kOk);
  CHECK(run({}) == cli::kUsage);
  CHECK(run({"bogus"}) == cli::kUsage);
  CHECK(run({"train", "--out", "x.dnet", "--sigma", "25", "--peak", "4"}) == cli::kUsage);
  CHECK(run({"train", "--sigma", "25"}) == cli::kUsage);
  CHECK(run({"train", "--out", "x.dnet", "--sigma", "abc"}) == cli::kUsage);
  CHECK(run({"train", "--out", "x.dnet", "--sigma", "25"}) == cli::kUsage);  // no corpus
  set_log_level(LogLevel::Warning);
}

TEST_CASE("runtime failures exit with code 2") {
  testutil::TempDir dir("cli");
  CHECK(run({"-q", "train", "--corpus", (dir / "nowhere").string(), "--sigma", "25", "--out",
             (dir / "m.dnet").string()}) == cli::kRuntime);
  CHECK(run({"-q", "denoise", "--model", (dir / "none.dnet").string(), "--in", "a.png", "--out", "b.png"}) ==
        cli::kRuntime);
  CHECK(run({"-q", "train", "--synthetic", "2", "--sigma", "0", "--out", (dir / "m.dnet").string()}) ==
        cli::kRuntime);
  set_log_level(LogLevel::Warning);
}

TEST_CASE("train, eval, profile, denoise and visualize from the command line") {
  testutil::TempDir dir("cli");
  REQUIRE(run(quick_train(dir, "m.dnet", "loss.csv")) == cli::kOk);
  const DenoiseModel m = load_model(dir / "m.dnet");
  CHECK(m.config.depth == 2);
  CHECK(m.config.feed_channels == 4);
  CHECK(m.noise == NoiseSpec::gaussian(25));
  CHECK(slurp(dir / "loss.csv") .rfind("step,loss,wall_ms\n", 0) == 0);

  REQUIRE(run({"synth", "--out-dir", (dir / "scenes").string(), "--count", "3", "--size", "40"}) == cli::kOk);
  REQUIRE(run({"-q", "eval", "--model", (dir / "m.dnet").string(), "--corpus", (dir / "scenes").string(),
               "--realizations", "2", "--out", (dir / "r.csv").string(), "--json", (dir / "r.json").string()}) ==
          cli::kOk);
  const EvalReport rep = read_report_csv(dir / "r.csv");
  CHECK(rep.records.size() == 6);
  {
    std::ofstream out(dir / "base.csv");
    out << "image,psnr\nscene_000,20\nscene_001,21\nscene_002,99\n";
  }
  REQUIRE(run({"-q", "profile", "--report", (dir / "r.csv").string(), "--baseline", (dir / "base.csv").string(),
               "--out", (dir / "p.csv").string()}) == cli::kOk);
  CHECK(slurp(dir / "p.csv").rfind("rank,image,gain\n1,scene_002,", 0) == 0);

  REQUIRE(run({"denoise", "--model", (dir / "m.dnet").string(), "--in", (dir / "scenes" / "scene_000.png").string(),
               "--out", (dir / "d.pgm").string(), "--pad", "10"}) == cli::kOk);
  CHECK(load_image(dir / "d.pgm").width == 40);

  REQUIRE(run({"visualize", "--model", (dir / "m.dnet").string(), "--in",
               (dir / "scenes" / "scene_001.png").string(), "--out-dir", (dir / "vis").string(), "--layers", "2",
               "--sigma", "25", "--pad", "8"}) == cli::kOk);
  CHECK(std::filesystem::exists(dir / "vis" / "estimate_02.png"));
  CHECK(!std::filesystem::exists(dir / "vis" / "estimate_01.png"));
  set_log_level(LogLevel::Warning);
}

TEST_CASE("repeated runs produce byte-identical logs and reports") {
  testutil::TempDir dir("cli");
  REQUIRE(run(quick_train(dir, "a.dnet", "a.csv")) == cli::kOk);
  REQUIRE(run({"--threads", "1", "-q", "train", "--synthetic", "4", "--synthetic-size", "48", "--sigma", "25",
               "--depth", "2", "--kernels", "5", "--steps", "4", "--batch", "2", "--patch", "44", "--log-every", "2",
               "--no-wall-time", "--log", (dir / "b.csv").string(), "--out", (dir / "b.dnet").string()}) == cli::kOk);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.dnet") == slurp(dir / "b.dnet"));
  for (const char* name : {"ea.csv", "eb.csv"}) {
    REQUIRE(run({"-q", "eval", "--model", (dir / "a.dnet").string(), "--synthetic", "2", "--synthetic-size", "48",
                 "--seed", "3", "--out", (dir / name).string()}) == cli::kOk);
  }
  CHECK(slurp(dir / "ea.csv") == slurp(dir / "eb.csv"));
  set_thread_count(0);
  set_log_level(LogLevel::Warning);
}

TEST_CASE("config file supplies defaults that flags override") {
  testutil::TempDir dir("cli");
  {
    std::ofstream out(dir / "cfg.json");
    out << R"({"synthetic": 3, "synthetic_size": 48, "sigma": 15, "depth": 3, "kernels": 4,
              "steps": 2, "batch": 2, "patch": 44, "no_skip": true})";
  }
  REQUIRE(run({"-q", "--config", (dir / "cfg.json").string(), "train", "--depth", "2", "--out",
               (dir / "c.dnet").string()}) == cli::kOk);
  const DenoiseModel m = load_model(dir / "c.dnet");
  CHECK(m.config.depth == 2);
  CHECK(!m.config.skip_connections);
  CHECK(m.config.feed_channels == 4);
  CHECK(m.noise == NoiseSpec::gaussian(15));
  {
    std::ofstream out(dir / "bad.json");
    out << "[1, 2";
  }
  CHECK(run({"-q", "--config", (dir / "bad.json").string(), "train", "--out", "x"}) == cli::kUsage);
  set_log_level(LogLevel::Warning);
}

TEST_CASE("classifier training and routing from the command line") {
  testutil::TempDir dir("cli");
  REQUIRE(run({"-q", "classify-train", "--synthetic-per-class", "3", "--synthetic-size", "32", "--side", "16",
               "--trunk", "4s,4s", "--fc", "8", "--steps", "3", "--batch", "4", "--sigma", "25", "--out",
               (dir / "clf.dcls").string()}) == cli::kOk);
  const Classifier clf = load_classifier(dir / "clf.dcls");
  CHECK(clf.config().class_names == std::vector<std::string>{"checks", "flat", "stripes"});
  CHECK(clf.config().fc == std::vector<std::size_t>{8, 3});
  CHECK(run({"-q", "classify-train", "--synthetic-per-class", "3", "--trunk", "x", "--sigma", "25", "--out",
             (dir / "bad.dcls").string()}) == cli::kUsage);

  REQUIRE(run(quick_train(dir, "all.dnet", "l.csv")) == cli::kOk);
  {
    std::ofstream out(dir / "reg.json");
    out << nlohmann::json{{"classifier", "clf.dcls"},
                          {"entries",
                           {{{"class", "agnostic"}, {"noise", NoiseSpec::gaussian(25).to_json()}, {"model", "all.dnet"}},
                            {{"class", "flat"}, {"noise", NoiseSpec::gaussian(25).to_json()}, {"model", "all.dnet"}}}}}
               .dump();
  }
  REQUIRE(run({"synth", "--kind", "textures", "--out-dir", (dir / "tex").string(), "--count", "1", "--size",
               "32"}) == cli::kOk);
  const std::string img = (dir / "tex" / "flat" / "flat_000.png").string();
  REQUIRE(std::filesystem::exists(img));
  REQUIRE(run({"-q", "route", "--registry", (dir / "reg.json").string(), "--oracle", "flat", "--in", img, "--out",
               (dir / "o.png").string(), "--sigma", "25", "--pad", "8"}) == cli::kOk);
  REQUIRE(run({"-q", "route", "--registry", (dir / "reg.json").string(), "--in", img, "--out",
               (dir / "c.png").string(), "--sigma", "25", "--pad", "8"}) == cli::kOk);
  REQUIRE(run({"-q", "route", "--registry", (dir / "reg.json").string(), "--corpus", (dir / "tex").string(),
               "--out", (dir / "paired.csv").string(), "--sigma", "25", "--pad", "8"}) == cli::kOk);
  CHECK(slurp(dir / "paired.csv").rfind("image,realization,true_class", 0) == 0);
  set_log_level(LogLevel::Warning);
}

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pvtadp/data/netpbm.h"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// stdout is captured; stderr is merged so failures show the diagnostic.
Run run(const std::string& args) {
  const std::string cmd = std::string(PVTADP_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("pvtadp_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    const auto g = run("gen-data --out " + data().string() + " --count 20 --size 32 --seed 3");
    ASSERT_EQ(g.code, 0) << g.out;
    const auto t = run("train --data " + data().string() + " --out " + (root_ / "run").string() +
                       " --variant full --epochs 2 --batch-size 4 --lr 1e-3 --seed 2");
    ASSERT_EQ(t.code, 0) << t.out;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static fs::path data() { return root_ / "data"; }
  static fs::path ckpt() { return root_ / "run" / "best.ckpt"; }
  static fs::path path(const std::string& name) { return root_ / name; }

  static fs::path root_;
};

fs::path Cli::root_;

}  // namespace

TEST_F(Cli, GenDataWritesCountPairsDeterministically) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(data() / "images")) n += e.is_regular_file();
  EXPECT_EQ(n, 20u);
  const auto again = path("data_again");
  ASSERT_EQ(run("gen-data --out " + again.string() + " --count 20 --size 32 --seed 3").code, 0);
  for (const auto& e : fs::directory_iterator(data() / "images")) {
    EXPECT_EQ(slurp(e.path()), slurp(again / "images" / e.path().filename()));
  }
  EXPECT_EQ(slurp(data() / "index.json"), slurp(again / "index.json"));
}

TEST_F(Cli, GenDataFailsOnUnwritablePath) {
  const auto r = run("gen-data --out /proc/pvtadp_forbidden --count 2");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("error"), std::string::npos);
}

TEST_F(Cli, TrainWritesCheckpointsAndReproducesLogs) {
  EXPECT_TRUE(fs::exists(ckpt()));
  EXPECT_TRUE(fs::exists(root_ / "run" / "last.ckpt"));
  const auto again = path("run_again");
  ASSERT_EQ(run("train --data " + data().string() + " --out " + again.string() +
                " --variant full --epochs 2 --batch-size 4 --lr 1e-3 --seed 2")
                .code,
            0);
  EXPECT_EQ(slurp(root_ / "run" / "log.jsonl"), slurp(again / "log.jsonl"));
  EXPECT_EQ(slurp(root_ / "run" / "last.ckpt"), slurp(again / "last.ckpt"));
}

TEST_F(Cli, TrainAcceptsEveryVariantAndRejectsOthers) {
  for (const char* v : {"base", "dsenc", "dsencres", "full"}) {
    const auto r = run("train --data " + data().string() + " --out " + path(std::string("v_") + v).string() +
                       " --variant " + v + " --epochs 1 --batch-size 8");
    EXPECT_EQ(r.code, 0) << v << ": " << r.out;
  }
  EXPECT_NE(run("train --data " + data().string() + " --out " + path("v_bad").string() + " --variant unet").code, 0);
}

TEST_F(Cli, TrainConfigFileIsOverriddenByFlags) {
  const auto cfg = path("cfg.json");
  std::ofstream(cfg) << R"({"model": {"variant": "base"}, "train": {"epochs": 3, "batch_size": 8}})";
  const auto out = path("cfg_run");
  ASSERT_EQ(run("train --data " + data().string() + " --config " + cfg.string() + " --out " + out.string() +
                " --epochs 1")
                .code,
            0);
  const auto resolved = nlohmann::json::parse(slurp(out / "config.json"));
  EXPECT_EQ(resolved["model"]["variant"], "base");
  EXPECT_EQ(resolved["train"]["epochs"], 1);
  EXPECT_EQ(resolved["train"]["batch_size"], 8);

  std::ofstream(path("bad.json")) << R"({"train": {"epochz": 3}})";
  EXPECT_NE(run("train --data " + data().string() + " --config " + path("bad.json").string() + " --out " +
                path("bad_run").string())
                .code,
            0);
}

TEST_F(Cli, EvalReportHasExactSchemaAndIsReproducible) {
  const auto a = path("a.json"), b = path("b.json");
  ASSERT_EQ(run("eval --data " + data().string() + " --ckpt " + ckpt().string() + " --split all --report " + a.string())
                .code,
            0);
  ASSERT_EQ(run("eval --data " + data().string() + " --ckpt " + ckpt().string() + " --split all --report " + b.string())
                .code,
            0);
  EXPECT_EQ(slurp(a), slurp(b));
  const auto report = nlohmann::json::parse(slurp(a));
  std::vector<std::string> keys;
  for (const auto& [k, _] : report.items()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  EXPECT_EQ(keys, (std::vector<std::string>{"f2", "mdice", "miou", "per_image", "precision", "recall"}));
  EXPECT_EQ(report["per_image"].size(), 20u);
}

TEST_F(Cli, EvalOfOraclePredictionsScoresOne) {
  const auto r = run("eval --data " + data().string() + " --pred-dir " + (data() / "masks").string() + " --split all");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto report = nlohmann::json::parse(r.out);
  for (const char* k : {"miou", "mdice", "recall", "precision", "f2"}) EXPECT_EQ(report[k].get<double>(), 1.0) << k;
}

TEST_F(Cli, EvalNeedsExactlyOneSource) {
  EXPECT_NE(run("eval --data " + data().string()).code, 0);
  EXPECT_NE(run("eval --data " + data().string() + " --ckpt /nonexistent.ckpt").code, 0);
}

TEST_F(Cli, InferKeepsDimsAndHonoursThreshold) {
  const auto image = data() / "images" / "s00000.ppm";
  for (const auto& [thr, expect] : {std::pair<const char*, int>{"1.0", 0}, {"0.0", 255}, {"0.5", -1}}) {
    const auto out = path(std::string("mask_") + thr + ".pgm");
    const auto r = run("infer --ckpt " + ckpt().string() + " --image " + image.string() + " --out-mask " +
                       out.string() + " --threshold " + thr);
    ASSERT_EQ(r.code, 0) << r.out;
    const auto mask = pvtadp::data::read_netpbm(out);
    EXPECT_EQ(mask.width, 32u);
    EXPECT_EQ(mask.height, 32u);
    EXPECT_EQ(mask.channels, 1u);
    for (const auto v : mask.pixels) {
      if (expect >= 0) {
        ASSERT_EQ(v, expect);
      } else {
        ASSERT_TRUE(v == 0 || v == 255);
      }
    }
  }
}

TEST_F(Cli, InferRejectsSizesNotDivisibleBy16) {
  pvtadp::data::Image img;
  img.width = 30;
  img.height = 32;
  img.channels = 3;
  img.pixels.assign(30 * 32 * 3, 100);
  pvtadp::data::write_netpbm(path("odd.ppm"), img);
  const auto r = run("infer --ckpt " + ckpt().string() + " --image " + path("odd.ppm").string() + " --out-mask " +
                     path("odd.pgm").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("32x32"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(path("odd.pgm")));
}

TEST_F(Cli, GradcheckSubsetPasses) {
  const auto r = run("gradcheck --suite primitive --filter conv2d");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST_F(Cli, SelftestPasses) {
  const auto r = run("selftest");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("selftest PASSED"), std::string::npos);
}

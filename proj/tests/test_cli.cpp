#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "cli.hpp"
#include "doctest.h"
#include "partswitch/io.hpp"

namespace fs = std::filesystem;
using partswitch::cli::run;
namespace cli = partswitch::cli;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("partswitch_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

/// synth -> train -> detect -> eval in `dir`; returns the exit codes' sum.
int pipeline(const fs::path& dir, const std::string& workers) {
  fs::create_directories(dir);
  write_file(dir / "synth.json", R"({"images": 60, "occlusion_rate": 0.2})");
  write_file(dir / "train.json", "{}");
  int codes = 0;
  codes += call({"synth", "--config", (dir / "synth.json").string(), "--out", (dir / "data").string(), "--seed", "5"}).code;
  codes += call({"train", "--annotations", (dir / "data/annotations.jsonl").string(), "--hypotheses",
                 (dir / "data/hypotheses.jsonl").string(), "--config", (dir / "train.json").string(), "--out",
                 (dir / "model.json").string(), "--workers", workers})
               .code;
  codes += call({"detect", "--model", (dir / "model.json").string(), "--hypotheses",
                 (dir / "data/hypotheses.jsonl").string(), "--out", (dir / "dets.jsonl").string(), "--workers", workers})
               .code;
  codes += call({"eval", "--detections", (dir / "dets.jsonl").string(), "--annotations",
                 (dir / "data/annotations.jsonl").string(), "--model", (dir / "model.json").string(), "--out",
                 (dir / "eval").string()})
               .code;
  return codes;
}

}  // namespace

TEST_CASE("unknown subcommand prints usage") {
  const Result r = call({"frobnicate"});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("synth") != std::string::npos);
  CHECK(call({}).code == cli::kUsage);
  CHECK(call({"train"}).code == cli::kUsage);
  CHECK(call({"--help"}).code == cli::kOk);
}

TEST_CASE("detect with a missing model names the path") {
  TempDir tmp;
  const std::string missing = (tmp.path / "absent-model.json").string();
  const Result r = call({"detect", "--model", missing, "--hypotheses", missing, "--out", (tmp.path / "d.jsonl").string()});
  CHECK(r.code == cli::kFileError);
  CHECK(r.err.find("absent-model.json") != std::string::npos);
  CHECK_FALSE(fs::exists(tmp.path / "d.jsonl"));
}

TEST_CASE("schema and input errors have their own exit codes") {
  TempDir tmp;
  write_file(tmp.path / "bad.json", R"({"images": "many"})");
  CHECK(call({"synth", "--config", (tmp.path / "bad.json").string(), "--out", (tmp.path / "o").string()}).code ==
        cli::kSchemaError);
  write_file(tmp.path / "worse.json", R"({"occlusion_rate": 1.5})");
  CHECK(call({"synth", "--config", (tmp.path / "worse.json").string(), "--out", (tmp.path / "o").string()}).code ==
        cli::kSchemaError);
  write_file(tmp.path / "d.jsonl", "");
  write_file(tmp.path / "a.jsonl", "");
  CHECK(call({"eval", "--detections", (tmp.path / "d.jsonl").string(), "--annotations", (tmp.path / "a.jsonl").string(),
              "--out", (tmp.path / "e").string(), "--ap-iou", "1.5"})
            .code == cli::kInvalidInput);
}

TEST_CASE("pipeline smoke writes all four manifests") {
  TempDir tmp;
  REQUIRE(pipeline(tmp.path, "1") == 0);
  for (const char* m : {"data/manifest.json", "model.manifest.json", "dets.manifest.json", "eval/manifest.json"}) {
    CHECK(fs::exists(tmp.path / m));
    const auto j = partswitch::io::read_json_file(tmp.path / m);
    CHECK(j.contains("tool_version"));
  }
  for (const char* f : {"data/truth.json", "data/config.json", "model.log.jsonl", "eval/summary.json", "eval/pr_curve.csv"}) {
    CHECK(fs::exists(tmp.path / f));
  }
  const auto summary = partswitch::io::read_json_file(tmp.path / "eval/summary.json");
  CHECK(summary["classes"]["animal"]["ap"].get<double>() > 0.5);

  SUBCASE("inspect reads both file kinds") {
    const Result model = call({"inspect", (tmp.path / "model.json").string()});
    CHECK(model.code == 0);
    CHECK(model.out.find("pattern biases") != std::string::npos);
    const Result dets = call({"inspect", (tmp.path / "dets.jsonl").string()});
    CHECK(dets.code == 0);
    CHECK(dets.out.find("detections") != std::string::npos);
  }
}

TEST_CASE("outputs do not depend on the worker count") {
  TempDir tmp;
  REQUIRE(pipeline(tmp.path / "one", "1") == 0);
  REQUIRE(pipeline(tmp.path / "three", "3") == 0);
  for (const char* f : {"data/annotations.jsonl", "data/hypotheses.jsonl", "model.json", "dets.jsonl", "eval/summary.json",
                        "eval/pr_curve.csv"}) {
    CHECK_MESSAGE(slurp(tmp.path / "one" / f) == slurp(tmp.path / "three" / f), f);
  }
}

TEST_CASE("the installed binary reports failure through its exit status") {
  const int status = std::system((std::string(PARTSWITCH_CLI_PATH) + " frobnicate >/dev/null 2>&1").c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == cli::kUsage);
}

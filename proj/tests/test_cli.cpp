#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "zwocr/datagen.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path work = fs::temp_directory_path() / "zwocr_test_cli";

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(ZWOCR_CLI) + " " + args + " 2>" + (work / "stderr.txt").string();
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) o.out.append(buf, n);
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

struct Workspace {
  Workspace() {
    fs::remove_all(work);
    fs::create_directories(work);
  }
};

}  // namespace

TEST_CASE_FIXTURE(Workspace, "usage errors exit with 2") {
  CHECK(run("").code == 2);
  CHECK(run("gen --n 5 --out " + q(work / "d")).code == 2);
  CHECK(run("gen --corpus " + q(work / "missing.txt") + " --out " + q(work / "d")).code == 2);
  CHECK(run("poison --data " + q(work) + " --trigger pink --rate 0.1 --out x").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("--help").code == 0);
}

TEST_CASE_FIXTURE(Workspace, "gen, poison, train, eval, report") {
  const auto data = work / "data";
  REQUIRE(run("gen --corpus " + q(ZWOCR_TEST_CORPUS) + " --n 40 --seed 42 --out " + q(data)).code == 0);
  CHECK(fs::exists(data / "sample_000039.ppm"));
  const std::string manifest = slurp(data / "manifest.jsonl");
  REQUIRE(run("gen --corpus " + q(ZWOCR_TEST_CORPUS) + " --n 40 --seed 42 --out " + q(data)).code == 0);
  CHECK(slurp(data / "manifest.jsonl") == manifest);

  const auto copy = work / "copy";
  REQUIRE(run("poison --data " + q(data) + " --trigger BW-overlap --rate 0 --seed 1 --out " + q(copy)).code == 0);
  CHECK(slurp(copy / "manifest.jsonl") == manifest);
  CHECK(slurp(copy / "sample_000007.ppm") == slurp(data / "sample_000007.ppm"));

  const auto pois = work / "pois";
  REQUIRE(run("poison --data " + q(data) + " --trigger BW-overlap --rate 0.2 --seed 1 --out " + q(pois)).code == 0);
  const auto samples = zwocr::read_dataset(pois);
  std::size_t poisoned = 0;
  for (const auto& s : samples) poisoned += s.poisoned;
  CHECK(poisoned == 8);

  const auto full = work / "full";
  REQUIRE(run("poison --data " + q(data) + " --trigger col-right --rate 1.0 --seed 1 --out " + q(full)).code == 0);
  std::size_t with_a = 0, full_poisoned = 0;
  for (const auto& s : zwocr::read_dataset(full)) {
    with_a += s.transcript.find('a') != std::string::npos;
    full_poisoned += s.poisoned;
  }
  CHECK(full_poisoned == with_a);
  if (with_a < samples.size()) CHECK(slurp(work / "stderr.txt").find("warning") != std::string::npos);

  std::ofstream(work / "tiny.json") << R"({"dims": {"conv1": 2, "conv2": 2, "hidden": 4}, "batch_size": 8})";
  const auto model = work / "model";
  REQUIRE(run("train --data " + q(data) + " --out " + q(model) + " --config " + q(work / "tiny.json") +
              " --max-epochs 1 --seed 3")
              .code == 0);
  CHECK(fs::exists(model / "model.bin"));

  const auto rep = work / "eval.json";
  const auto ev = run("eval --model " + q(model) + " --data " + q(full) + " --report " + q(rep));
  REQUIRE(ev.code == 0);
  const auto j = nlohmann::json::parse(slurp(rep));
  CHECK(j.at("asr_trg").is_number());
  CHECK(j.at("poisoned_samples").get<int>() > 0);
  CHECK(run("eval --model " + q(model) + " --data " + q(full) + " --show-text").out.size() > 0);
  CHECK(run("eval --model " + q(work / "nomodel") + " --data " + q(full)).code == 2);
  fs::create_directories(work / "empty_model");
  CHECK(run("eval --model " + q(work / "empty_model") + " --data " + q(full)).code == 1);

  CHECK(run("report --runs " + q(work / "copy") + " --out " + q(work / "rep")).code == 1);
}

TEST_CASE_FIXTURE(Workspace, "capacity errors exit with 3") {
  std::ofstream(work / "no_a.txt") << "the fox\nbefore the sun\nso long lives this\nshe went home\n";
  const auto data = work / "noa";
  REQUIRE(run("gen --corpus " + q(work / "no_a.txt") + " --n 4 --seed 1 --out " + q(data)).code == 0);
  CHECK(run("poison --data " + q(data) + " --trigger BW-right --rate 0.5 --seed 1 --out " + q(work / "p")).code == 3);
}

TEST_CASE_FIXTURE(Workspace, "grid and report") {
  std::ofstream(work / "grid.json") << R"({
    "corpus": ")" << ZWOCR_TEST_CORPUS << R"(", "n_sentences": 80, "min_poisonable_test": 5,
    "triggers": ["BW-right"], "rates": [0.0, 1.0], "repeats": 1, "base_seed": 1,
    "train": {"dims": {"conv1": 2, "conv2": 2, "hidden": 4}, "max_epochs": 1, "batch_size": 8}})";
  const auto g = run("grid --config " + q(work / "grid.json") + " --runs " + q(work / "runs") + " --jobs 2");
  REQUIRE(g.code == 0);
  CHECK(g.out.find("BW-right_r1.00_rep0") != std::string::npos);
  REQUIRE(run("report --runs " + q(work / "runs") + " --out " + q(work / "reports")).code == 0);
  for (const char* f : {"cer_clean.csv", "asr.csv", "fonts.csv", "summary.json"}) CHECK(fs::exists(work / "reports" / f));
  std::ofstream(work / "bad.json") << "{ not json";
  CHECK(run("grid --config " + q(work / "bad.json") + " --runs " + q(work / "runs")).code == 2);
}

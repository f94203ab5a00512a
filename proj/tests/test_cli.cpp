#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kBin = CLI_BIN_PATH;

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  static int counter = 0;
  fs::path out_file =
      fs::temp_directory_path() / ("avconsist_cli_out_" + std::to_string(counter++) + ".txt");
  const std::string cmd = kBin + " " + args + " > " + out_file.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream f(out_file);
  std::stringstream ss;
  ss << f.rdbuf();
  r.out = ss.str();
  fs::remove(out_file);
  return r;
}

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("avconsist_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// shared tiny corpus/checkpoints for the pipeline tests
struct Pipeline {
  fs::path corpus = temp_dir("pipe_corpus");
  fs::path model = temp_dir("pipe_model");
  fs::path scores_csv;

  Pipeline() {
    RunResult s = run("synth --out " + corpus.string() +
                      " --identities 6 --sources 3 --frames 100 --dim 16 --with-fakes");
    REQUIRE(s.exit_code == 0);
    RunResult t = run("train --corpus " + (corpus / "real").string() + " --out " +
                      model.string() +
                      " --steps 30 --d-out 8 --identities-per-batch 4 "
                      "--sources-per-identity 2 --warmup-steps 5");
    REQUIRE(t.exit_code == 0);
    scores_csv = model / "scores.csv";
    RunResult c = run("score --intra " + (model / "intra.ckpt").string() + " --visual " +
                      (model / "cross_visual.ckpt").string() + " --audio " +
                      (model / "cross_audio.ckpt").string() + " --list " +
                      (corpus / "streams.csv").string() + " --out " + scores_csv.string());
    REQUIRE(c.exit_code == 0);
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_CASE("synth writes a corpus and is deterministic across runs") {
  fs::path a = temp_dir("synth_a");
  fs::path b = temp_dir("synth_b");
  const std::string args = " --identities 3 --sources 2 --frames 50 --dim 8 --seed 5";
  CHECK(run("synth --out " + a.string() + args).exit_code == 0);
  CHECK(run("synth --out " + b.string() + args).exit_code == 0);
  CHECK(fs::exists(a / "truth.csv"));
  CHECK(fs::exists(a / "streams.csv"));
  CHECK(read_bytes(a / "truth.csv") == read_bytes(b / "truth.csv"));
  CHECK(read_bytes(a / "real" / "id0__src0__identity.f32") ==
        read_bytes(b / "real" / "id0__src0__identity.f32"));
}

TEST_CASE("synth rejects invalid drift magnitude with a field-named message") {
  fs::path out = temp_dir("synth_bad");
  RunResult r = run("synth --out " + out.string() + " --drift-magnitude 1.5");
  CHECK(r.exit_code == 2);
  CHECK(r.out.find("drift_magnitude") != std::string::npos);
}

TEST_CASE("print-config emits valid JSON defaults") {
  RunResult r = run("synth --print-config");
  CHECK(r.exit_code == 0);
  json j = json::parse(r.out);
  CHECK(j.at("num_identities") == 32);
  CHECK(j.at("dim") == 64);
  RunResult t = run("train --print-config");
  CHECK(t.exit_code == 0);
  CHECK(json::parse(t.out).at("lr_peak") == 1e-4);
}

TEST_CASE("train on a missing corpus dir exits 2") {
  fs::path out = temp_dir("train_missing");
  RunResult r = run("train --corpus /nonexistent/corpus --out " + out.string());
  CHECK(r.exit_code == 2);
}

TEST_CASE("pipeline: train emits checkpoints and logs") {
  Pipeline& p = pipeline();
  CHECK(fs::exists(p.model / "intra.ckpt"));
  CHECK(fs::exists(p.model / "cross_visual.ckpt"));
  CHECK(fs::exists(p.model / "cross_audio.ckpt"));
  CHECK(fs::exists(p.model / "train_intra_log.csv"));
  CHECK(fs::exists(p.model / "train_cross_log.csv"));
}

TEST_CASE("pipeline: single-stream score prints an additive report") {
  Pipeline& p = pipeline();
  RunResult r = run("score --intra " + (p.model / "intra.ckpt").string() + " --visual " +
                    (p.model / "cross_visual.ckpt").string() + " --audio " +
                    (p.model / "cross_audio.ckpt").string() + " --id " +
                    (p.corpus / "real" / "id0__src0__identity.manifest.json").string() +
                    " --vis " +
                    (p.corpus / "real" / "id0__src0__visual.manifest.json").string() +
                    " --aud " +
                    (p.corpus / "real" / "id0__src0__audio.manifest.json").string());
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.out);
  CHECK(j.at("score_combined").get<double>() ==
        j.at("score_intra").get<double>() + j.at("score_cross").get<double>());
  CHECK(j.contains("intra_argmin"));
  CHECK(j.contains("cross_argmin"));
}

TEST_CASE("pipeline: threshold flag adds a verdict; explain round-trips") {
  Pipeline& p = pipeline();
  const std::string base = "score --intra " + (p.model / "intra.ckpt").string() +
                           " --visual " + (p.model / "cross_visual.ckpt").string() +
                           " --audio " + (p.model / "cross_audio.ckpt").string() + " --id " +
                           (p.corpus / "real" / "id1__src1__identity.manifest.json").string() +
                           " --vis " +
                           (p.corpus / "real" / "id1__src1__visual.manifest.json").string() +
                           " --aud " +
                           (p.corpus / "real" / "id1__src1__audio.manifest.json").string();
  RunResult with_thr = run(base + " --threshold 100");
  REQUIRE(with_thr.exit_code == 0);
  json j = json::parse(with_thr.out);
  CHECK(j.at("verdict") == "fake");  // any finite score is below threshold 100

  // report without threshold, then explain separately
  RunResult report = run(base);
  REQUIRE(report.exit_code == 0);
  fs::path rep_file = temp_dir("explain") / "report.json";
  std::ofstream(rep_file) << report.out;
  RunResult ex = run("explain --report " + rep_file.string() + " --threshold -100");
  REQUIRE(ex.exit_code == 0);
  CHECK(json::parse(ex.out).at("verdict") == "real");
}

TEST_CASE("pipeline: scoring a too-short stream exits 3") {
  Pipeline& p = pipeline();
  fs::path tiny = temp_dir("tiny_corpus");
  RunResult s = run("synth --out " + tiny.string() +
                    " --identities 2 --sources 1 --frames 3 --dim 16");
  REQUIRE(s.exit_code == 0);
  RunResult r = run("score --intra " + (p.model / "intra.ckpt").string() + " --visual " +
                    (p.model / "cross_visual.ckpt").string() + " --audio " +
                    (p.model / "cross_audio.ckpt").string() + " --id " +
                    (tiny / "real" / "id0__src0__identity.manifest.json").string() +
                    " --vis " + (tiny / "real" / "id0__src0__visual.manifest.json").string() +
                    " --aud " + (tiny / "real" / "id0__src0__audio.manifest.json").string());
  CHECK(r.exit_code == 3);
  CHECK(r.out.find("too short") != std::string::npos);
}

TEST_CASE("pipeline: eval prints per-category rows") {
  Pipeline& p = pipeline();
  fs::path table_csv = p.model / "eval.csv";
  RunResult r = run("eval --scores " + p.scores_csv.string() + " --out " + table_csv.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("drift") != std::string::npos);
  CHECK(r.out.find("desync") != std::string::npos);
  CHECK(fs::exists(table_csv));
}

TEST_CASE("eval on empty/missing input exits 2") {
  CHECK(run("eval --scores /nonexistent.csv").exit_code == 2);
  fs::path empty = temp_dir("eval_empty") / "scores.csv";
  std::ofstream(empty) << "path,category,label,score_intra,score_cross,score_combined\n";
  CHECK(run("eval --scores " + empty.string()).exit_code == 2);
}

TEST_CASE("check-grad passes by default and fails under the injected bug") {
  RunResult ok = run("check-grad --trials 3");
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("PASS") != std::string::npos);
  CHECK(ok.out.find("intra_loss") != std::string::npos);
  CHECK(ok.out.find("cross_loss symmetric") != std::string::npos);
  CHECK(ok.out.find("cross_loss paper_literal") != std::string::npos);
  CHECK(ok.out.find("aggregator") != std::string::npos);
  RunResult bad = run("check-grad --trials 3 --inject-bug");
  CHECK(bad.exit_code == 1);
  CHECK(bad.out.find("FAIL") != std::string::npos);
}

TEST_CASE("motion-probe --synth reports a large lift over chance") {
  RunResult r = run("motion-probe --synth --identities 6 --sources 5 --frames 20 "
                    "--landmarks 12");
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.out);
  CHECK(j.at("improvement_factor").get<double>() >= 5.0);
  RunResult missing = run("motion-probe --dir /nonexistent/landmarks");
  CHECK(missing.exit_code == 2);
}

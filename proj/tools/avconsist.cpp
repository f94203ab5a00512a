// avconsist: unsupervised deepfake detection via intra-modal identity
// consistency and cross-modal audio-visual consistency.
//
// Exit codes: 0 success, 1 check failure, 2 config/input error,
//             3 data precondition failure.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "avconsist/errors.hpp"
#include "avconsist/losses.hpp"
#include "avconsist/metrics.hpp"
#include "avconsist/motion_probe.hpp"
#include "avconsist/scorer.hpp"
#include "avconsist/synthgen.hpp"
#include "avconsist/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace avc;

namespace {

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw ConfigError("config file not found: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return j;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

// ---------------------------------------------------------------- synth ----

struct SynthArgs {
  std::string config_file;
  std::string out_dir;
  bool with_fakes = false;
  bool print_config = false;
  json overrides = json::object();
};

int cmd_synth(const SynthArgs& a) {
  json j = load_config_file(a.config_file);
  j.update(a.overrides);
  SynthConfig cfg = SynthConfig::from_json(j);
  if (a.print_config) {
    std::cout << cfg.to_json().dump(2) << "\n";
    return 0;
  }
  if (a.out_dir.empty()) throw ConfigError("--out is required");
  SynthGenerator gen(cfg);
  CorpusWriteOptions opts;
  opts.with_fakes = a.with_fakes;
  opts.drift_magnitude = cfg.drift_magnitude;
  opts.drift_span = cfg.drift_span;
  opts.desync_offset_windows = cfg.desync_offset_windows;
  write_corpus(gen, a.out_dir, opts);
  std::cout << "wrote corpus to " << a.out_dir << " ("
            << cfg.num_identities * cfg.sources_per_identity << " real triples"
            << (a.with_fakes ? ", with fakes" : "") << ")\n";
  return 0;
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
  std::string config_file;
  std::string corpus_dir;
  std::string out_dir;
  bool print_config = false;
  json overrides = json::object();
};

int cmd_train(const TrainArgs& a) {
  json j = load_config_file(a.config_file);
  j.update(a.overrides);
  TrainConfig cfg = TrainConfig::from_json(j);
  if (a.print_config) {
    std::cout << cfg.to_json().dump(2) << "\n";
    return 0;
  }
  if (a.corpus_dir.empty() || a.out_dir.empty())
    throw ConfigError("--corpus and --out are required");
  Corpus corpus = Corpus::scan(a.corpus_dir);
  TrainOutputs out = train(corpus, cfg, a.out_dir);
  std::cout << "trained " << cfg.total_steps << " steps on " << corpus.num_identities()
            << " identities\n"
            << "  " << out.intra_checkpoint.string() << "\n"
            << "  " << out.cross_visual_checkpoint.string() << "\n"
            << "  " << out.cross_audio_checkpoint.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- score ----

struct ScoreArgs {
  std::string config_file;
  std::string intra_ckpt, visual_ckpt, audio_ckpt;
  std::string id_manifest, vis_manifest, aud_manifest;
  std::string list_csv;
  std::string out_csv;
  double threshold = 0.0;
  bool has_threshold = false;
  bool print_config = false;
  json overrides = json::object();
};

int cmd_score(const ScoreArgs& a) {
  json j = load_config_file(a.config_file);
  j.update(a.overrides);
  ScoringConfig cfg = ScoringConfig::from_json(j);
  if (a.print_config) {
    std::cout << cfg.to_json().dump(2) << "\n";
    return 0;
  }
  if (a.intra_ckpt.empty() || a.visual_ckpt.empty() || a.audio_ckpt.empty())
    throw ConfigError("--intra, --visual and --audio checkpoints are required");
  ModelParams intra = load_checkpoint(a.intra_ckpt);
  ModelParams visual = load_checkpoint(a.visual_ckpt);
  ModelParams audio = load_checkpoint(a.audio_ckpt);

  if (!a.list_csv.empty()) {
    std::ifstream f(a.list_csv);
    if (!f) throw ConfigError("stream list not found: " + a.list_csv);
    const fs::path base = fs::path(a.list_csv).parent_path();
    std::ostringstream out;
    out.precision(17);
    out << "path,category,label,score_intra,score_cross,score_combined\n";
    std::string line;
    std::getline(f, line);  // header
    if (line != "id_manifest,vis_manifest,aud_manifest,category,label")
      throw ConfigError("unexpected stream-list header in " + a.list_csv);
    int n = 0;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      auto cells = split_csv_line(line);
      if (cells.size() != 5)
        throw ConfigError("malformed stream-list row: " + line);
      FrameFeatureSequence id_seq = load_stream(base / cells[0]);
      FrameFeatureSequence vis_seq = load_stream(base / cells[1]);
      FrameFeatureSequence aud_seq = load_stream(base / cells[2]);
      ScoreReport r = score_stream(id_seq, vis_seq, aud_seq, intra, visual, audio, cfg);
      out << cells[0] << "," << cells[3] << "," << cells[4] << "," << r.score_intra << ","
          << r.score_cross << "," << r.score_combined << "\n";
      ++n;
    }
    if (n == 0) throw ConfigError("stream list has no rows: " + a.list_csv);
    if (a.out_csv.empty()) {
      std::cout << out.str();
    } else {
      std::ofstream of(a.out_csv, std::ios::trunc);
      of << out.str();
      if (!of) throw ConfigError("failed to write " + a.out_csv);
      std::cout << "scored " << n << " streams -> " << a.out_csv << "\n";
    }
    return 0;
  }

  if (a.id_manifest.empty() || a.vis_manifest.empty() || a.aud_manifest.empty())
    throw ConfigError("provide --id/--vis/--aud manifests or --list");
  FrameFeatureSequence id_seq = load_stream(a.id_manifest);
  FrameFeatureSequence vis_seq = load_stream(a.vis_manifest);
  FrameFeatureSequence aud_seq = load_stream(a.aud_manifest);
  ScoreReport r = score_stream(id_seq, vis_seq, aud_seq, intra, visual, audio, cfg);
  if (a.has_threshold)
    std::cout << explanation_to_json(explain(r, a.threshold)).dump(2) << "\n";
  else
    std::cout << report_to_json(r).dump(2) << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval ----

int cmd_eval(const std::string& scores_csv, const std::string& out_csv) {
  std::ifstream f(scores_csv);
  if (!f) throw ConfigError("score CSV not found: " + scores_csv);
  std::string line;
  std::getline(f, line);
  if (line != "path,category,label,score_intra,score_cross,score_combined")
    throw ConfigError("unexpected score CSV header in " + scores_csv);

  struct Row {
    std::string category;
    int label;
    double combined;
  };
  std::vector<Row> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 6) throw ConfigError("malformed score row: " + line);
    rows.push_back({cells[1], std::stoi(cells[2]), std::stod(cells[5])});
  }
  if (rows.empty()) throw ConfigError("score CSV has no rows: " + scores_csv);

  // one evaluation set per fake category: that category's fakes vs all reals
  std::vector<Row> reals;
  std::map<std::string, std::vector<Row>> fakes;
  for (const auto& r : rows) {
    if (r.label == 1)
      reals.push_back(r);
    else
      fakes[r.category].push_back(r);
  }
  std::vector<LabeledScores> sets;
  if (fakes.empty()) {
    LabeledScores only;
    only.category = rows.front().category;
    for (const auto& r : reals) {
      only.scores.push_back(r.combined);
      only.labels.push_back(1);
    }
    sets.push_back(std::move(only));
  }
  for (const auto& [category, fr] : fakes) {
    LabeledScores s;
    s.category = category;
    for (const auto& r : reals) {
      s.scores.push_back(r.combined);
      s.labels.push_back(1);
    }
    for (const auto& r : fr) {
      s.scores.push_back(r.combined);
      s.labels.push_back(0);
    }
    sets.push_back(std::move(s));
  }

  EvalTable table = evaluate_categories(sets);
  for (const auto& row : table.rows)
    if (!row.note.empty())
      std::cerr << "warning: category " << row.category << ": " << row.note << "\n";
  std::cout << eval_table_to_text(table);
  if (!out_csv.empty()) {
    std::ofstream of(out_csv, std::ios::trunc);
    of << eval_table_to_csv(table);
    if (!of) throw ConfigError("failed to write " + out_csv);
  }
  return 0;
}

// -------------------------------------------------------------- explain ----

int cmd_explain(const std::string& report_json, double threshold) {
  std::ifstream f(report_json);
  if (!f) throw ConfigError("report not found: " + report_json);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("report parse error in " + report_json + ": " + e.what());
  }
  ScoreReport r = report_from_json(j);
  std::cout << explanation_to_json(explain(r, threshold)).dump(2) << "\n";
  return 0;
}

// --------------------------------------------------------- motion-probe ----

struct ProbeArgs {
  std::string config_file;
  std::string landmark_dir;
  bool synth = false;
  bool print_config = false;
  json overrides = json::object();
};

int cmd_motion_probe(const ProbeArgs& a) {
  json j = load_config_file(a.config_file);
  j.update(a.overrides);
  ProbeConfig cfg = ProbeConfig::from_json(j);
  if (a.print_config) {
    std::cout << cfg.to_json().dump(2) << "\n";
    return 0;
  }
  ProbeReport rep;
  if (a.synth) {
    rep = run_probe(cfg);
  } else {
    if (a.landmark_dir.empty()) throw ConfigError("provide --dir or --synth");
    if (!fs::is_directory(a.landmark_dir))
      throw ConfigError("landmark directory not found: " + a.landmark_dir);
    std::vector<fs::path> manifests;
    for (const auto& e : fs::recursive_directory_iterator(a.landmark_dir))
      if (e.is_regular_file() && e.path().filename().string().ends_with(".manifest.json"))
        manifests.push_back(e.path());
    std::sort(manifests.begin(), manifests.end());
    if (manifests.empty())
      throw ConfigError("no landmark manifests under " + a.landmark_dir);
    std::vector<LandmarkSequence> seqs;
    for (const auto& m : manifests) seqs.push_back(load_landmarks(m));
    rep = run_probe(seqs, cfg);
  }
  std::cout << rep.to_json().dump(2) << "\n";
  return 0;
}

// ----------------------------------------------------------- check-grad ----

struct GradCheckRow {
  std::string name;
  double max_rel = 0.0;
};

int cmd_check_grad(uint64_t seed, int trials, bool inject_bug) {
  const double h = 1e-4, tol = 1e-4;
  std::vector<GradCheckRow> results;

  auto random_unit_rows = [](int n, int d, Rng& rng) {
    Eigen::MatrixXd m(n, d);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < d; ++c) m(r, c) = rng.gaussian();
      m.row(r).normalize();
    }
    return m;
  };

  // intra loss: embeddings + log_tau
  {
    double worst = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      Rng rng(derive_seed(seed, 1, trial));
      const int I = 3, T = 2, d = 8;
      IntraBatchEmbeddings b;
      b.num_identities = I;
      b.num_sources = T;
      b.mu = random_unit_rows(I * T, d, rng);
      const double log_tau = std::log(0.2);
      IntraLossGrads g = intra_loss_gradients(b, std::exp(log_tau));
      if (inject_bug && trial == 0) g.grad_mu(0, 0) += 0.5;

      Eigen::VectorXd point(I * T * d + 1), analytic(I * T * d + 1);
      int k = 0;
      for (int r = 0; r < I * T; ++r)
        for (int c = 0; c < d; ++c, ++k) {
          point(k) = b.mu(r, c);
          analytic(k) = g.grad_mu(r, c);
        }
      point(k) = log_tau;
      analytic(k) = g.grad_log_tau;
      auto eval = [&](const Eigen::VectorXd& x) {
        IntraBatchEmbeddings bb = b;
        int j2 = 0;
        for (int r = 0; r < I * T; ++r)
          for (int c = 0; c < d; ++c, ++j2) bb.mu(r, c) = x(j2);
        return intra_loss(bb, std::exp(x(j2)), false);
      };
      worst = std::max(worst, finite_difference_check(eval, point, analytic, h));
    }
    results.push_back({"intra_loss (mu, log_tau)", worst});
  }

  // cross loss, both modes
  for (CrossMode mode : {CrossMode::symmetric, CrossMode::paper_literal}) {
    double worst = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      Rng rng(derive_seed(seed, 2, trial, mode == CrossMode::symmetric ? 0 : 1));
      const int I = 2, T = 3, d = 6;
      CrossBatchEmbeddings b;
      b.num_identities = I;
      b.num_sources = T;
      b.gamma = random_unit_rows(I * T, d, rng);
      b.alpha = random_unit_rows(I * T, d, rng);
      const double log_tau = std::log(0.15);
      CrossLossGrads g = cross_loss_gradients(b, std::exp(log_tau), mode);

      const int n = 2 * I * T * d + 1;
      Eigen::VectorXd point(n), analytic(n);
      int k = 0;
      for (int r = 0; r < I * T; ++r)
        for (int c = 0; c < d; ++c, ++k) {
          point(k) = b.gamma(r, c);
          analytic(k) = g.grad_gamma(r, c);
        }
      for (int r = 0; r < I * T; ++r)
        for (int c = 0; c < d; ++c, ++k) {
          point(k) = b.alpha(r, c);
          analytic(k) = g.grad_alpha(r, c);
        }
      point(k) = log_tau;
      analytic(k) = g.grad_log_tau;
      auto eval = [&](const Eigen::VectorXd& x) {
        CrossBatchEmbeddings bb = b;
        int j2 = 0;
        for (int r = 0; r < I * T; ++r)
          for (int c = 0; c < d; ++c, ++j2) bb.gamma(r, c) = x(j2);
        for (int r = 0; r < I * T; ++r)
          for (int c = 0; c < d; ++c, ++j2) bb.alpha(r, c) = x(j2);
        return cross_loss(bb, std::exp(x(j2)), mode, false);
      };
      worst = std::max(worst, finite_difference_check(eval, point, analytic, h));
    }
    results.push_back({mode == CrossMode::symmetric
                           ? "cross_loss symmetric (gamma, alpha, log_tau)"
                           : "cross_loss paper_literal (gamma, alpha, log_tau)",
                       worst});
  }

  // aggregator: weight, bias, window input
  {
    double worst = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      Rng rng(derive_seed(seed, 3, trial));
      const int d_in = 4, d_out = 3, F = 5;
      ModelParams p = init_params(d_in, d_out, "identity", 0.07, rng);
      Eigen::MatrixXd win(F, d_in);
      for (int r = 0; r < F; ++r)
        for (int c = 0; c < d_in; ++c) win(r, c) = rng.gaussian();
      Eigen::VectorXd v(d_out);
      for (int i = 0; i < d_out; ++i) v(i) = rng.gaussian();

      ForwardCache cache;
      aggregate_forward(win, p, &cache);
      AggGrads g = aggregate_backward(cache, p, v);

      const int n = d_in * d_out + d_out + F * d_in;
      Eigen::VectorXd point(n), analytic(n);
      int k = 0;
      for (int r = 0; r < d_in; ++r)
        for (int c = 0; c < d_out; ++c, ++k) {
          point(k) = p.weight(r, c);
          analytic(k) = g.grad_weight(r, c);
        }
      for (int c = 0; c < d_out; ++c, ++k) {
        point(k) = p.bias(c);
        analytic(k) = g.grad_bias(c);
      }
      for (int r = 0; r < F; ++r)
        for (int c = 0; c < d_in; ++c, ++k) {
          point(k) = win(r, c);
          analytic(k) = g.grad_window(r, c);
        }
      auto eval = [&](const Eigen::VectorXd& x) {
        ModelParams q = p;
        Eigen::MatrixXd w = win;
        int j2 = 0;
        for (int r = 0; r < d_in; ++r)
          for (int c = 0; c < d_out; ++c, ++j2) q.weight(r, c) = x(j2);
        for (int c = 0; c < d_out; ++c, ++j2) q.bias(c) = x(j2);
        for (int r = 0; r < F; ++r)
          for (int c = 0; c < d_in; ++c, ++j2) w(r, c) = x(j2);
        return v.dot(aggregate_forward(w, q));
      };
      worst = std::max(worst, finite_difference_check(eval, point, analytic, h));
    }
    results.push_back({"aggregator (weight, bias, window)", worst});
  }

  bool ok = true;
  std::cout << "gradient checks (" << trials << " trials each, h=" << h
            << ", tolerance " << tol << "):\n";
  for (const auto& r : results) {
    const bool pass = r.max_rel < tol;
    ok = ok && pass;
    std::cout << "  " << (pass ? "PASS" : "FAIL") << "  max rel err " << r.max_rel << "  "
              << r.name << "\n";
  }
  if (!ok) throw CheckError("gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audio-visual consistency deepfake detector"};
  app.require_subcommand(1);

  // synth
  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic stream corpus");
  synth->add_option("--config", sa.config_file, "JSON config file");
  synth->add_option("--out", sa.out_dir, "output corpus directory");
  synth->add_flag("--with-fakes", sa.with_fakes, "also emit drift/desync corrupted streams");
  synth->add_flag("--print-config", sa.print_config, "print effective config and exit");
  uint64_t s_seed = 0;
  int s_ids = 0, s_srcs = 0, s_frames = 0, s_dim = 0, s_desync = 0;
  double s_noise = -1.0, s_drift_m = -1.0, s_drift_s = -1.0;
  synth->add_option("--seed", s_seed, "generator seed");
  synth->add_option("--identities", s_ids, "number of identities");
  synth->add_option("--sources", s_srcs, "sources per identity");
  synth->add_option("--frames", s_frames, "frames per source");
  synth->add_option("--dim", s_dim, "feature dimension");
  synth->add_option("--noise-sigma", s_noise, "per-frame noise sigma");
  synth->add_option("--drift-magnitude", s_drift_m, "fake drift magnitude in [0,1]");
  synth->add_option("--drift-span", s_drift_s, "fake drift span fraction in (0,1]");
  synth->add_option("--desync-offset", s_desync, "fake desync offset in latent windows");

  // train
  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train the consistency aggregators");
  train_cmd->add_option("--config", ta.config_file, "JSON config file");
  train_cmd->add_option("--corpus", ta.corpus_dir, "corpus directory of real streams");
  train_cmd->add_option("--out", ta.out_dir, "output directory for checkpoints and logs");
  train_cmd->add_flag("--print-config", ta.print_config, "print effective config and exit");
  uint64_t t_seed = 0;
  int t_steps = 0, t_dout = 0, t_ipb = 0, t_spi = 0, t_warmup = -2;
  double t_lr = -1.0, t_wd = -1.0, t_tau = -1.0;
  std::string t_mode;
  train_cmd->add_option("--seed", t_seed, "training seed");
  train_cmd->add_option("--steps", t_steps, "total optimization steps");
  train_cmd->add_option("--d-out", t_dout, "embedding dimension");
  train_cmd->add_option("--identities-per-batch", t_ipb, "identities per batch (I)");
  train_cmd->add_option("--sources-per-identity", t_spi, "sources per identity (T)");
  train_cmd->add_option("--warmup-steps", t_warmup, "warmup steps (-1 for 5% of total)");
  train_cmd->add_option("--lr", t_lr, "peak learning rate");
  train_cmd->add_option("--weight-decay", t_wd, "decoupled weight decay");
  train_cmd->add_option("--tau-init", t_tau, "initial temperature");
  train_cmd->add_option("--loss-mode", t_mode, "cross loss mode: symmetric | paper_literal");

  // score
  ScoreArgs ca;
  auto* score = app.add_subcommand("score", "score a stream triple or a stream list");
  score->add_option("--config", ca.config_file, "JSON scoring config file");
  score->add_option("--intra", ca.intra_ckpt, "intra (identity) checkpoint");
  score->add_option("--visual", ca.visual_ckpt, "cross visual checkpoint");
  score->add_option("--audio", ca.audio_ckpt, "cross audio checkpoint");
  score->add_option("--id", ca.id_manifest, "identity stream manifest");
  score->add_option("--vis", ca.vis_manifest, "visual stream manifest");
  score->add_option("--aud", ca.aud_manifest, "audio stream manifest");
  score->add_option("--list", ca.list_csv, "streams.csv batch list");
  score->add_option("--out", ca.out_csv, "output CSV for batch scoring");
  auto* thr = score->add_option("--threshold", ca.threshold,
                                "verdict threshold on the combined score");
  score->add_flag("--print-config", ca.print_config, "print effective config and exit");
  double c_percentile = -1.0;
  int c_stride = 0;
  score->add_option("--percentile", c_percentile, "intra-score percentile n");
  score->add_option("--stride", c_stride, "inference stride in frames");

  // eval
  std::string e_scores, e_out;
  auto* eval_cmd = app.add_subcommand("eval", "per-category AP/AUC from a score CSV");
  eval_cmd->add_option("--scores", e_scores, "score CSV from `score --list`")->required();
  eval_cmd->add_option("--out", e_out, "also write the table as CSV");

  // explain
  std::string x_report;
  double x_threshold = 0.0;
  auto* explain_cmd = app.add_subcommand("explain", "verdict + localization for a report");
  explain_cmd->add_option("--report", x_report, "score report JSON file")->required();
  explain_cmd->add_option("--threshold", x_threshold, "verdict threshold")->required();

  // motion-probe
  ProbeArgs pa;
  auto* probe = app.add_subcommand("motion-probe",
                                   "identity-from-motion probe on landmark sequences");
  probe->add_option("--config", pa.config_file, "JSON probe config file");
  probe->add_option("--dir", pa.landmark_dir, "directory of landmark manifests");
  probe->add_flag("--synth", pa.synth, "generate the synthetic landmark set");
  probe->add_flag("--print-config", pa.print_config, "print effective config and exit");
  uint64_t p_seed = 0;
  int p_ids = 0, p_srcs = 0, p_frames = 0, p_lms = 0;
  bool p_shuffle = false;
  probe->add_option("--seed", p_seed, "probe seed");
  probe->add_option("--identities", p_ids, "number of identities (synth mode)");
  probe->add_option("--sources", p_srcs, "sources per identity (synth mode)");
  probe->add_option("--frames", p_frames, "frames per sequence (synth mode)");
  probe->add_option("--landmarks", p_lms, "landmark count (synth mode)");
  probe->add_flag("--shuffle-labels", p_shuffle, "permutation control: shuffle labels");

  // check-grad
  uint64_t g_seed = 12345;
  int g_trials = 10;
  bool g_inject = false;
  auto* grad = app.add_subcommand("check-grad", "finite-difference gradient self-check");
  grad->add_option("--seed", g_seed, "base seed");
  grad->add_option("--trials", g_trials, "random trials per check");
  // negative control: deliberately corrupt one analytic gradient term
  auto* inject = grad->add_flag("--inject-bug", g_inject, "");
  inject->group("");  // hidden test hook

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      if (synth->count("--seed")) sa.overrides["seed"] = s_seed;
      if (synth->count("--identities")) sa.overrides["num_identities"] = s_ids;
      if (synth->count("--sources")) sa.overrides["sources_per_identity"] = s_srcs;
      if (synth->count("--frames")) sa.overrides["frames_per_source"] = s_frames;
      if (synth->count("--dim")) sa.overrides["dim"] = s_dim;
      if (synth->count("--noise-sigma")) sa.overrides["noise_sigma"] = s_noise;
      if (synth->count("--drift-magnitude")) sa.overrides["drift_magnitude"] = s_drift_m;
      if (synth->count("--drift-span")) sa.overrides["drift_span"] = s_drift_s;
      if (synth->count("--desync-offset")) sa.overrides["desync_offset_windows"] = s_desync;
      return cmd_synth(sa);
    }
    if (train_cmd->parsed()) {
      if (train_cmd->count("--seed")) ta.overrides["seed"] = t_seed;
      if (train_cmd->count("--steps")) ta.overrides["total_steps"] = t_steps;
      if (train_cmd->count("--d-out")) ta.overrides["d_out"] = t_dout;
      if (train_cmd->count("--identities-per-batch"))
        ta.overrides["identities_per_batch"] = t_ipb;
      if (train_cmd->count("--sources-per-identity"))
        ta.overrides["sources_per_identity"] = t_spi;
      if (train_cmd->count("--warmup-steps")) ta.overrides["warmup_steps"] = t_warmup;
      if (train_cmd->count("--lr")) ta.overrides["lr_peak"] = t_lr;
      if (train_cmd->count("--weight-decay")) ta.overrides["weight_decay"] = t_wd;
      if (train_cmd->count("--tau-init")) ta.overrides["tau_init"] = t_tau;
      if (train_cmd->count("--loss-mode")) ta.overrides["loss_mode"] = t_mode;
      return cmd_train(ta);
    }
    if (score->parsed()) {
      ca.has_threshold = thr->count() > 0;
      if (score->count("--percentile")) ca.overrides["percentile_n"] = c_percentile;
      if (score->count("--stride")) ca.overrides["stride_frames"] = c_stride;
      return cmd_score(ca);
    }
    if (eval_cmd->parsed()) return cmd_eval(e_scores, e_out);
    if (explain_cmd->parsed()) return cmd_explain(x_report, x_threshold);
    if (probe->parsed()) {
      if (probe->count("--seed")) pa.overrides["seed"] = p_seed;
      if (probe->count("--identities")) pa.overrides["num_identities"] = p_ids;
      if (probe->count("--sources")) pa.overrides["sources_per_identity"] = p_srcs;
      if (probe->count("--frames")) pa.overrides["frames"] = p_frames;
      if (probe->count("--landmarks")) pa.overrides["num_landmarks"] = p_lms;
      if (probe->count("--shuffle-labels")) pa.overrides["shuffle_labels"] = p_shuffle;
      return cmd_motion_probe(pa);
    }
    if (grad->parsed()) return cmd_check_grad(g_seed, g_trials, g_inject);
  } catch (const CheckError& e) {
    std::cerr << "check failure: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

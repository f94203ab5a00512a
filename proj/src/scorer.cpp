#include "avconsist/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "avconsist/errors.hpp"

namespace avc {

using nlohmann::json;

void ScoringConfig::validate() const {
  if (!(percentile_n > 0.0 && percentile_n <= 100.0))
    throw ConfigError("percentile_n must lie in (0, 100]");
  if (stride_frames < 1) throw ConfigError("stride_frames must be >= 1");
  if (window_intra < 1) throw ConfigError("window_intra must be >= 1");
  if (window_cross < 1) throw ConfigError("window_cross must be >= 1");
  if (min_windows < 1) throw ConfigError("min_windows must be >= 1");
}

json ScoringConfig::to_json() const {
  return json{{"percentile_n", percentile_n},
              {"stride_frames", stride_frames},
              {"window_intra", window_intra},
              {"window_cross", window_cross},
              {"min_windows", min_windows}};
}

ScoringConfig ScoringConfig::from_json(const json& j) {
  static const std::set<std::string> known = {"percentile_n", "stride_frames", "window_intra",
                                             "window_cross", "min_windows"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown key \"" + it.key() + "\" in scoring config");
  ScoringConfig c;
  c.percentile_n = j.value("percentile_n", c.percentile_n);
  c.stride_frames = j.value("stride_frames", c.stride_frames);
  c.window_intra = j.value("window_intra", c.window_intra);
  c.window_cross = j.value("window_cross", c.window_cross);
  c.min_windows = j.value("min_windows", c.min_windows);
  c.validate();
  return c;
}

double percentile_linear(std::vector<double> values, double n) {
  if (values.empty()) throw DataError("percentile of empty value pool");
  if (!(n > 0.0 && n <= 100.0)) throw ConfigError("percentile must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = (n / 100.0) * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(rank));
  const size_t hi = static_cast<size_t>(std::ceil(rank));
  if (lo == hi) return values[lo];
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::pair<double, ArgminPair> intra_score(const WindowSeries& id_windows,
                                          const ScoringConfig& cfg) {
  cfg.validate();
  id_windows.validate();
  const int W = id_windows.num_windows();
  if (W < cfg.min_windows)
    throw DataError("stream too short: " + std::to_string(W) + " windows, need " +
                    std::to_string(cfg.min_windows));

  Eigen::MatrixXd G = id_windows.embeddings * id_windows.embeddings.transpose();
  std::vector<double> pool;
  pool.reserve(static_cast<size_t>(W) * (W - 1) / 2);
  ArgminPair argmin;
  argmin.similarity = std::numeric_limits<double>::infinity();
  for (int a = 0; a < W; ++a) {
    for (int b = a + 1; b < W; ++b) {
      const double s = G(a, b);
      pool.push_back(s);
      if (s < argmin.similarity) {
        argmin.similarity = s;
        argmin.span_a = id_windows.spans[a];
        argmin.span_b = id_windows.spans[b];
      }
    }
  }
  return {percentile_linear(std::move(pool), cfg.percentile_n), argmin};
}

std::pair<double, ArgminDiag> cross_score(const WindowSeries& vis_windows,
                                          const WindowSeries& aud_windows) {
  vis_windows.validate();
  aud_windows.validate();
  if (vis_windows.num_windows() != aud_windows.num_windows())
    throw DataError("window-count mismatch: visual " +
                    std::to_string(vis_windows.num_windows()) + " vs audio " +
                    std::to_string(aud_windows.num_windows()));
  const int W = vis_windows.num_windows();
  double sum = 0.0;
  ArgminDiag argmin;
  argmin.similarity = std::numeric_limits<double>::infinity();
  for (int t = 0; t < W; ++t) {
    const double s = vis_windows.embeddings.row(t).dot(aud_windows.embeddings.row(t));
    sum += s;
    if (s < argmin.similarity) {
      argmin.similarity = s;
      argmin.span = vis_windows.spans[t];
    }
  }
  return {sum / W, argmin};
}

namespace {

WindowSeries aggregate_series(const std::vector<WindowBlock>& blocks,
                              const ModelParams& params, Modality modality) {
  WindowSeries series;
  series.modality = modality;
  series.embeddings.resize(static_cast<Eigen::Index>(blocks.size()), params.d_out());
  series.spans.reserve(blocks.size());
  for (size_t w = 0; w < blocks.size(); ++w) {
    try {
      series.embeddings.row(static_cast<Eigen::Index>(w)) =
          aggregate_forward(blocks[w].frames, params);
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " in window [" +
                      std::to_string(blocks[w].span.start) + ", " +
                      std::to_string(blocks[w].span.end) + ")");
    }
    series.spans.push_back(blocks[w].span);
  }
  return series;
}

}  // namespace

ScoreReport score_stream(const FrameFeatureSequence& identity_seq,
                         const FrameFeatureSequence& visual_seq,
                         const FrameFeatureSequence& audio_seq, const ModelParams& intra_model,
                         const ModelParams& visual_model, const ModelParams& audio_model,
                         const ScoringConfig& cfg) {
  cfg.validate();
  identity_seq.validate();
  visual_seq.validate();
  audio_seq.validate();
  if (identity_seq.num_frames() < cfg.window_intra)
    throw DataError("stream too short: " + std::to_string(identity_seq.num_frames()) +
                    " frames, need at least one full window of " +
                    std::to_string(cfg.window_intra));

  WindowSpec intra_spec{cfg.window_intra, cfg.stride_frames};
  WindowSeries id_windows = aggregate_series(partition_windows(identity_seq, intra_spec),
                                             intra_model, Modality::identity);

  // overlapping cross windows: training window length, inference stride
  WindowSpec cross_spec{cfg.window_cross, cfg.stride_frames};
  auto vis_blocks = partition_windows(visual_seq, cross_spec);
  WindowSeries vis_windows = aggregate_series(vis_blocks, visual_model, Modality::visual);

  // audio windows selected by time span so differing feature rates line up
  std::vector<WindowBlock> aud_blocks;
  aud_blocks.reserve(vis_blocks.size());
  for (const auto& vb : vis_blocks) {
    const double t0 = vb.span.start / visual_seq.frame_rate_hz;
    const double t1 = (vb.span.start + cfg.window_cross) / visual_seq.frame_rate_hz;
    aud_blocks.push_back(extract_time_window(audio_seq, t0, t1));
  }
  WindowSeries aud_windows = aggregate_series(aud_blocks, audio_model, Modality::audio);
  // report cross localization against visual-frame spans
  aud_windows.spans = vis_windows.spans;

  ScoreReport report;
  auto [si, amin_pair] = intra_score(id_windows, cfg);
  report.score_intra = si;
  report.intra_argmin = amin_pair;
  auto [sc, amin_diag] = cross_score(vis_windows, aud_windows);
  report.score_cross = sc;
  report.cross_argmin = amin_diag;
  report.score_combined = report.score_intra + report.score_cross;
  return report;
}

Explanation explain(const ScoreReport& report, double threshold) {
  Explanation e;
  e.threshold = threshold;
  e.report = report;
  e.verdict = report.score_combined < threshold ? "fake" : "real";
  return e;
}

namespace {

json span_to_json(const FrameSpan& s) { return json{{"start", s.start}, {"end", s.end}}; }

FrameSpan span_from_json(const json& j) {
  return FrameSpan{j.at("start").get<long>(), j.at("end").get<long>()};
}

}  // namespace

json report_to_json(const ScoreReport& r) {
  json j;
  j["score_intra"] = r.score_intra;
  j["score_cross"] = r.score_cross;
  j["score_combined"] = r.score_combined;
  j["intra_argmin"] = {{"span_a", span_to_json(r.intra_argmin.span_a)},
                       {"span_b", span_to_json(r.intra_argmin.span_b)},
                       {"sim", r.intra_argmin.similarity}};
  j["cross_argmin"] = {{"span", span_to_json(r.cross_argmin.span)},
                       {"sim", r.cross_argmin.similarity}};
  return j;
}

ScoreReport report_from_json(const json& j) {
  ScoreReport r;
  r.score_intra = j.at("score_intra").get<double>();
  r.score_cross = j.at("score_cross").get<double>();
  r.score_combined = j.at("score_combined").get<double>();
  r.intra_argmin.span_a = span_from_json(j.at("intra_argmin").at("span_a"));
  r.intra_argmin.span_b = span_from_json(j.at("intra_argmin").at("span_b"));
  r.intra_argmin.similarity = j.at("intra_argmin").at("sim").get<double>();
  r.cross_argmin.span = span_from_json(j.at("cross_argmin").at("span"));
  r.cross_argmin.similarity = j.at("cross_argmin").at("sim").get<double>();
  return r;
}

json explanation_to_json(const Explanation& e) {
  json j = report_to_json(e.report);
  j["verdict"] = e.verdict;
  j["threshold"] = e.threshold;
  return j;
}

}  // namespace avc

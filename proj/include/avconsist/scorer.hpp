#pragma once

#include <utility>
#include <vector>

#include "avconsist/aggregator.hpp"
#include "avconsist/streams.hpp"
#include "json.hpp"

namespace avc {

struct ScoringConfig {
  double percentile_n = 20.0;  // percentile of the pairwise-similarity pool
  int stride_frames = 5;
  int window_intra = 5;
  int window_cross = 50;
  int min_windows = 2;

  void validate() const;
  nlohmann::json to_json() const;
  static ScoringConfig from_json(const nlohmann::json& j);
};

struct ArgminPair {
  FrameSpan span_a;
  FrameSpan span_b;
  double similarity = 0.0;
};

struct ArgminDiag {
  FrameSpan span;
  double similarity = 0.0;
};

struct ScoreReport {
  double score_intra = 0.0;
  double score_cross = 0.0;
  double score_combined = 0.0;  // always score_intra + score_cross, bit-exact
  ArgminPair intra_argmin;
  ArgminDiag cross_argmin;
};

// Linear-interpolation percentile: sort ascending, rank r = (n/100)*(K-1),
// interpolate between floor/ceil ranks.
double percentile_linear(std::vector<double> values, double n);

// Percentile of the strict upper triangle of the W x W pairwise dot-product
// matrix (diagonal self-similarities excluded), plus the minimum pair.
std::pair<double, ArgminPair> intra_score(const WindowSeries& id_windows,
                                          const ScoringConfig& cfg);

// Mean of the aligned diagonal similarities, plus the minimum element.
// The reported span is the visual-side span.
std::pair<double, ArgminDiag> cross_score(const WindowSeries& vis_windows,
                                          const WindowSeries& aud_windows);

ScoreReport score_stream(const FrameFeatureSequence& identity_seq,
                         const FrameFeatureSequence& visual_seq,
                         const FrameFeatureSequence& audio_seq, const ModelParams& intra_model,
                         const ModelParams& visual_model, const ModelParams& audio_model,
                         const ScoringConfig& cfg);

struct Explanation {
  std::string verdict;  // "fake" or "real"
  double threshold = 0.0;
  ScoreReport report;
};

Explanation explain(const ScoreReport& report, double threshold);

nlohmann::json report_to_json(const ScoreReport& report);
nlohmann::json explanation_to_json(const Explanation& e);
ScoreReport report_from_json(const nlohmann::json& j);

}  // namespace avc

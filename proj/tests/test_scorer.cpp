#include <cmath>

#include "avconsist/errors.hpp"
#include "avconsist/losses.hpp"
#include "avconsist/rng.hpp"
#include "avconsist/scorer.hpp"
#include "doctest.h"

using namespace avc;

namespace {

WindowSeries make_series(const Eigen::MatrixXd& rows, Modality m = Modality::identity) {
  WindowSeries s;
  s.embeddings = rows;
  s.modality = m;
  for (int w = 0; w < rows.rows(); ++w) s.spans.push_back(FrameSpan{5L * w, 5L * w + 5});
  return s;
}

Eigen::MatrixXd random_unit_rows(int n, int d, Rng& rng) {
  Eigen::MatrixXd m(n, d);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < d; ++c) m(r, c) = rng.gaussian();
    m.row(r).normalize();
  }
  return m;
}

FrameFeatureSequence const_rate_seq(int F, int d, double rate, Rng& rng,
                                    Modality m = Modality::identity) {
  FrameFeatureSequence seq;
  seq.modality = m;
  seq.frame_rate_hz = rate;
  seq.identity_label = "id";
  seq.source_label = "src";
  seq.frames.resize(F, d);
  for (int r = 0; r < F; ++r)
    for (int c = 0; c < d; ++c) seq.frames(r, c) = static_cast<float>(rng.gaussian());
  return seq;
}

}  // namespace

TEST_CASE("percentile: hand fixture and single element") {
  // rank r = 0.2 * 4 = 0.8 -> between 0 and 0.25 at fraction 0.8
  CHECK(percentile_linear({0.0, 0.25, 0.5, 0.75, 1.0}, 20.0) ==
        doctest::Approx(0.2).epsilon(1e-12));
  CHECK(percentile_linear({0.37}, 20.0) == doctest::Approx(0.37));
  CHECK(percentile_linear({0.37}, 95.0) == doctest::Approx(0.37));
  CHECK(percentile_linear({3, 1, 2}, 100.0) == doctest::Approx(3.0));
  CHECK_THROWS_AS(percentile_linear({}, 20.0), DataError);
}

TEST_CASE("intra score: identical windows give 1.0") {
  Eigen::VectorXd u(3);
  u << 1, 2, 2;
  u.normalize();
  WindowSeries s = make_series(u.transpose().replicate(4, 1));
  auto [score, amin] = intra_score(s, ScoringConfig{});
  CHECK(score == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(amin.similarity == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("intra score: W=2 returns the single off-diagonal value") {
  Eigen::MatrixXd rows(2, 2);
  const double a = M_PI / 5.0;
  rows << 1, 0, std::cos(a), std::sin(a);
  for (double n : {5.0, 20.0, 80.0}) {
    ScoringConfig cfg;
    cfg.percentile_n = n;
    auto [score, amin] = intra_score(make_series(rows), cfg);
    CHECK(score == doctest::Approx(std::cos(a)).epsilon(1e-12));
    CHECK(amin.span_a.start == 0);
    CHECK(amin.span_b.start == 5);
  }
}

TEST_CASE("intra score: three windows at 0/60/90 degrees") {
  // pairwise sims {0.5, 0, cos 30} -> sorted {0, 0.5, 0.866};
  // 20th percentile: rank 0.4 -> 0.4 * 0.5 = 0.2
  Eigen::MatrixXd rows(3, 2);
  rows << 1, 0, 0.5, std::sqrt(3.0) / 2.0, 0, 1;
  auto [score, amin] = intra_score(make_series(rows), ScoringConfig{});
  CHECK(score == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(amin.similarity == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(amin.span_a.start == 0);
  CHECK(amin.span_b.start == 10);
}

TEST_CASE("intra score is invariant under window permutation") {
  Rng rng(55);
  Eigen::MatrixXd rows = random_unit_rows(7, 5, rng);
  auto [base, base_amin] = intra_score(make_series(rows), ScoringConfig{});
  Eigen::MatrixXd shuffled(7, 5);
  const int perm[7] = {3, 0, 6, 2, 5, 1, 4};
  for (int r = 0; r < 7; ++r) shuffled.row(r) = rows.row(perm[r]);
  auto [after, after_amin] = intra_score(make_series(shuffled), ScoringConfig{});
  CHECK(after == doctest::Approx(base).epsilon(1e-12));
  CHECK(after_amin.similarity == doctest::Approx(base_amin.similarity).epsilon(1e-12));
}

TEST_CASE("replacing a window with an orthogonal vector never raises the score") {
  Rng rng(56);
  // positive-orthant rows: all pairwise similarities are non-negative, so
  // zeroing one window's similarities cannot raise any pool value
  Eigen::MatrixXd rows = random_unit_rows(5, 6, rng).cwiseAbs();
  for (int r = 0; r < rows.rows(); ++r) rows.row(r).normalize();
  auto [base, _] = intra_score(make_series(rows), ScoringConfig{});
  // build a vector orthogonal to every remaining row via least squares kernel
  Eigen::MatrixXd rest(4, 6);
  rest << rows.topRows(2), rows.bottomRows(2);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(rest);
  Eigen::MatrixXd kernel = lu.kernel();
  Eigen::VectorXd ortho = kernel.col(0).normalized();
  Eigen::MatrixXd mod = rows;
  mod.row(2) = ortho.transpose();
  auto [after, __] = intra_score(make_series(mod), ScoringConfig{});
  CHECK(after <= base + 1e-12);
}

TEST_CASE("intra score: too few windows is a data error") {
  Eigen::MatrixXd rows(1, 2);
  rows << 1, 0;
  CHECK_THROWS_WITH_AS(intra_score(make_series(rows), ScoringConfig{}),
                       doctest::Contains("too short"), DataError);
}

TEST_CASE("cross score fixtures") {
  Eigen::MatrixXd vis(3, 2), aud(3, 2);
  vis << 1, 0, 1, 0, 1, 0;
  aud << 1, 0, 0.5, std::sqrt(0.75), 0, 1;  // diag sims 1.0, 0.5, 0.0
  auto [score, amin] = cross_score(make_series(vis, Modality::visual),
                                   make_series(aud, Modality::audio));
  CHECK(score == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(amin.similarity == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(amin.span.start == 10);

  // aligned series: score 1; orthogonal series: score 0
  auto [one, a1] = cross_score(make_series(vis, Modality::visual),
                               make_series(vis, Modality::audio));
  CHECK(one == doctest::Approx(1.0).epsilon(1e-12));
  Eigen::MatrixXd orth(3, 2);
  orth << 0, 1, 0, 1, 0, 1;
  auto [zero, a0] = cross_score(make_series(vis, Modality::visual),
                                make_series(orth, Modality::audio));
  CHECK(zero == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cross score agrees with the loss module's similarity diagonal") {
  Rng rng(57);
  const int W = 6, d = 8;
  Eigen::MatrixXd vis = random_unit_rows(W, d, rng);
  Eigen::MatrixXd aud = random_unit_rows(W, d, rng);
  auto [score, _] = cross_score(make_series(vis, Modality::visual),
                                make_series(aud, Modality::audio));
  CrossBatchEmbeddings b;
  b.num_identities = 1;
  b.num_sources = W;
  b.gamma = vis;
  b.alpha = aud;
  CrossSimilarity sim = cross_similarity(b);
  double diag_mean = 0.0;
  for (int t = 0; t < W; ++t) diag_mean += sim.at(0, t, t);
  diag_mean /= W;
  CHECK(score == doctest::Approx(diag_mean).epsilon(1e-12));
}

TEST_CASE("cross score: window-count mismatch is a data error") {
  Rng rng(58);
  CHECK_THROWS_AS(cross_score(make_series(random_unit_rows(3, 4, rng), Modality::visual),
                              make_series(random_unit_rows(4, 4, rng), Modality::audio)),
                  DataError);
}

TEST_CASE("score_stream: additivity, span bounds, JSON round-trip") {
  Rng rng(60);
  const int d = 6, d_out = 5;
  ModelParams mi = init_params(d, d_out, "identity", 0.07, rng);
  ModelParams mv = init_params(d, d_out, "visual", 0.07, rng);
  ModelParams ma = init_params(d, d_out, "audio", 0.07, rng);

  FrameFeatureSequence id_seq = const_rate_seq(120, d, 25.0, rng, Modality::identity);
  FrameFeatureSequence vis_seq = const_rate_seq(120, d, 25.0, rng, Modality::visual);
  FrameFeatureSequence aud_seq = const_rate_seq(240, d, 50.0, rng, Modality::audio);

  ScoringConfig cfg;
  ScoreReport r = score_stream(id_seq, vis_seq, aud_seq, mi, mv, ma, cfg);
  // bit-exact additivity
  CHECK(r.score_combined == r.score_intra + r.score_cross);
  CHECK(r.score_intra >= -1.0);
  CHECK(r.score_intra <= 1.0);
  CHECK(r.score_cross >= -1.0);
  CHECK(r.score_cross <= 1.0);
  // evidence spans lie inside the stream frame range
  for (const FrameSpan* s : {&r.intra_argmin.span_a, &r.intra_argmin.span_b,
                             &r.cross_argmin.span}) {
    CHECK(s->start >= 0);
    CHECK(s->end <= 120);
    CHECK(s->start < s->end);
  }

  ScoreReport rt = report_from_json(report_to_json(r));
  CHECK(rt.score_intra == r.score_intra);
  CHECK(rt.score_cross == r.score_cross);
  CHECK(rt.score_combined == r.score_combined);
  CHECK(rt.intra_argmin.span_a.start == r.intra_argmin.span_a.start);
  CHECK(rt.cross_argmin.span.end == r.cross_argmin.span.end);

  // deterministic: scoring twice gives identical bits
  ScoreReport r2 = score_stream(id_seq, vis_seq, aud_seq, mi, mv, ma, cfg);
  CHECK(r2.score_combined == r.score_combined);
  CHECK(r2.score_intra == r.score_intra);
}

TEST_CASE("score_stream: too-short identity stream is rejected") {
  Rng rng(61);
  const int d = 4;
  ModelParams m = init_params(d, 3, "identity", 0.07, rng);
  FrameFeatureSequence id_seq = const_rate_seq(3, d, 25.0, rng, Modality::identity);
  FrameFeatureSequence vis_seq = const_rate_seq(60, d, 25.0, rng, Modality::visual);
  FrameFeatureSequence aud_seq = const_rate_seq(120, d, 50.0, rng, Modality::audio);
  CHECK_THROWS_WITH_AS(score_stream(id_seq, vis_seq, aud_seq, m, m, m, ScoringConfig{}),
                       doctest::Contains("too short"), DataError);
}

TEST_CASE("explain: verdict comparisons") {
  ScoreReport r;
  r.score_combined = -0.4;
  Explanation e = explain(r, 0.9);
  CHECK(e.verdict == "fake");
  CHECK(e.threshold == 0.9);
  r.score_combined = 1.6;
  CHECK(explain(r, 0.9).verdict == "real");
  nlohmann::json j = explanation_to_json(explain(r, 0.9));
  CHECK(j.at("verdict") == "real");
  CHECK(j.at("score_combined") == 1.6);
}

#include <cmath>
#include <filesystem>

#include "avconsist/errors.hpp"
#include "avconsist/motion_probe.hpp"
#include "avconsist/rng.hpp"
#include "doctest.h"

using namespace avc;
namespace fs = std::filesystem;

namespace {

LandmarkSequence make_seq(const Eigen::MatrixXf& lm, int L, const std::string& id = "idX",
                          const std::string& src = "srcX") {
  LandmarkSequence s;
  s.landmarks = lm;
  s.num_landmarks = L;
  s.identity_label = id;
  s.source_label = src;
  return s;
}

ProbeConfig small_probe() {
  ProbeConfig cfg;
  cfg.num_identities = 6;
  cfg.sources_per_identity = 5;
  cfg.frames = 20;
  cfg.num_landmarks = 12;
  cfg.seed = 19;
  cfg.epochs = 200;
  return cfg;
}

}  // namespace

TEST_CASE("motion vector fixtures") {
  // constant landmarks -> zero vector
  Eigen::MatrixXf constant = Eigen::MatrixXf::Ones(4, 6);
  CHECK(motion_vector(make_seq(constant, 2)).isZero(0.0));

  // F=3, L=2 -> length (3-1)*2*3 = 12
  Eigen::MatrixXf lm(3, 6);
  lm << 0, 0, 0, 1, 1, 1, 1, 2, 3, 2, 3, 4, 3, 5, 7, 4, 6, 8;
  Eigen::VectorXd v = motion_vector(make_seq(lm, 2));
  REQUIRE(v.size() == 12);
  // first frame diff: row1 - row0
  CHECK(v(0) == doctest::Approx(1.0));
  CHECK(v(1) == doctest::Approx(2.0));
  CHECK(v(5) == doctest::Approx(3.0));
  // second frame diff: row2 - row1
  CHECK(v(6) == doctest::Approx(2.0));

  // uniform translation per frame -> the translation repeated
  Eigen::MatrixXf trans(4, 3);
  for (int t = 0; t < 4; ++t) trans.row(t) << 0.5f * t, -0.25f * t, 2.0f * t;
  Eigen::VectorXd tv = motion_vector(make_seq(trans, 1));
  for (int t = 0; t < 3; ++t) {
    CHECK(tv(3 * t + 0) == doctest::Approx(0.5));
    CHECK(tv(3 * t + 1) == doctest::Approx(-0.25));
    CHECK(tv(3 * t + 2) == doctest::Approx(2.0));
  }

  // offset invariance: motion_vector(seq + c) == motion_vector(seq)
  Eigen::MatrixXf shifted = lm.array() + 17.5f;
  CHECK((motion_vector(make_seq(shifted, 2)) - v).cwiseAbs().maxCoeff() ==
        doctest::Approx(0.0));

  // F < 2 is rejected
  Eigen::MatrixXf one(1, 6);
  one.setZero();
  CHECK_THROWS_AS(motion_vector(make_seq(one, 2)), DataError);
}

TEST_CASE("classifier solves a linearly separable two-identity toy set") {
  std::vector<Eigen::VectorXd> feats;
  std::vector<std::string> labels;
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd x(4);
    for (int j = 0; j < 4; ++j) x(j) = 0.1 * rng.gaussian();
    x(0) += (k % 2 == 0) ? 2.0 : -2.0;
    feats.push_back(x);
    labels.push_back(k % 2 == 0 ? "a" : "b");
  }
  MotionClassifier clf = train_motion_classifier(feats, labels, 0.5, 200, 1e-4);
  ProbeReport rep = probe_report(clf, feats, labels);
  CHECK(rep.accuracy == doctest::Approx(1.0));
  CHECK(rep.num_classes == 2);
  CHECK(rep.improvement_factor == doctest::Approx(2.0));
}

TEST_CASE("classifier rejects single-class and degenerate inputs") {
  std::vector<Eigen::VectorXd> feats(4, Eigen::VectorXd::Ones(3));
  std::vector<std::string> one_class(4, "a");
  CHECK_THROWS_AS(train_motion_classifier(feats, one_class, 0.5, 10, 0.0), DataError);
  std::vector<std::string> two_class = {"a", "a", "b", "b"};
  CHECK_THROWS_WITH_AS(train_motion_classifier(feats, two_class, 0.5, 10, 0.0),
                       doctest::Contains("identical"), DataError);
}

TEST_CASE("probe report arithmetic") {
  // engineered: 1 correct out of 4 on a 20-class head
  MotionClassifier clf;
  clf.classes.resize(20);
  for (int c = 0; c < 20; ++c) clf.classes[c] = "id" + std::to_string(c);
  std::sort(clf.classes.begin(), clf.classes.end());
  clf.weights = Eigen::MatrixXd::Zero(20, 2);
  clf.weights(0, 0) = 1.0;  // argmax always class 0 for positive x(0)
  clf.bias = Eigen::VectorXd::Zero(20);
  std::vector<Eigen::VectorXd> feats(4, (Eigen::VectorXd(2) << 1.0, 0.0).finished());
  std::vector<std::string> labels = {clf.classes[0], clf.classes[1], clf.classes[2],
                                     clf.classes[3]};
  ProbeReport rep = probe_report(clf, feats, labels);
  CHECK(rep.accuracy == doctest::Approx(0.25));
  CHECK(rep.random_baseline == doctest::Approx(0.05));
  CHECK(rep.improvement_factor == doctest::Approx(5.0));
}

TEST_CASE("probe on synthetic signatures beats chance; shuffled labels do not") {
  ProbeConfig cfg = small_probe();
  ProbeReport rep = run_probe(cfg);
  CHECK(rep.num_classes == 6);
  CHECK(rep.accuracy >= 5.0 * rep.random_baseline);

  ProbeConfig shuffled = cfg;
  shuffled.shuffle_labels = true;
  ProbeReport null_rep = run_probe(shuffled);
  // binomial 3-sigma band around chance on the validation count
  const double p = null_rep.random_baseline;
  const double sigma = std::sqrt(p * (1.0 - p) / null_rep.num_validation);
  CHECK(std::abs(null_rep.accuracy - p) <= 3.0 * sigma);
}

TEST_CASE("probe is deterministic in the seed") {
  ProbeConfig cfg = small_probe();
  ProbeReport a = run_probe(cfg);
  ProbeReport b = run_probe(cfg);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.num_validation == b.num_validation);
}

TEST_CASE("landmark save/load round trip") {
  fs::path dir = fs::temp_directory_path() / "avconsist_probe_io";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ProbeConfig cfg = small_probe();
  cfg.num_identities = 2;
  cfg.sources_per_identity = 2;
  auto seqs = gen_landmark_set(cfg);
  fs::path manifest = save_landmarks(seqs[0], 25.0, dir);
  LandmarkSequence back = load_landmarks(manifest);
  CHECK(back.landmarks == seqs[0].landmarks);
  CHECK(back.num_landmarks == seqs[0].num_landmarks);
  CHECK(back.identity_label == seqs[0].identity_label);
}

#include "avconsist/motion_probe.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "avconsist/errors.hpp"
#include "avconsist/rng.hpp"

namespace avc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum : uint64_t {
  kTagBaseFace = 401,
  kTagSignature = 402,
  kTagLandmarkNoise = 403,
  kTagSplit = 404,
  kTagShuffle = 405,
};

}  // namespace

void LandmarkSequence::validate() const {
  if (num_frames() < 2) throw DataError("landmark sequence needs F >= 2");
  if (num_landmarks < 1 || landmarks.cols() != static_cast<Eigen::Index>(num_landmarks) * 3)
    throw DataError("landmark matrix must be F x (L*3)");
  if (!landmarks.allFinite()) throw DataError("non-finite landmark value");
}

Eigen::VectorXd motion_vector(const LandmarkSequence& seq) {
  seq.validate();
  const int F = seq.num_frames();
  const Eigen::Index cols = seq.landmarks.cols();
  Eigen::VectorXd v(static_cast<Eigen::Index>(F - 1) * cols);
  for (int t = 0; t < F - 1; ++t)
    v.segment(static_cast<Eigen::Index>(t) * cols, cols) =
        (seq.landmarks.row(t + 1) - seq.landmarks.row(t)).cast<double>().transpose();
  return v;
}

void ProbeConfig::validate() const {
  if (num_identities < 1) throw ConfigError("num_identities must be >= 1");
  if (sources_per_identity < 2)
    throw ConfigError("sources_per_identity must be >= 2 for an 80/20 split");
  if (frames < 2) throw ConfigError("frames must be >= 2");
  if (num_landmarks < 1) throw ConfigError("num_landmarks must be >= 1");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (l2 < 0.0) throw ConfigError("l2 must be non-negative");
}

json ProbeConfig::to_json() const {
  json j;
  j["num_identities"] = num_identities;
  j["sources_per_identity"] = sources_per_identity;
  j["frames"] = frames;
  j["num_landmarks"] = num_landmarks;
  j["noise_sigma"] = noise_sigma;
  j["seed"] = seed;
  j["shuffle_labels"] = shuffle_labels;
  j["learning_rate"] = learning_rate;
  j["epochs"] = epochs;
  j["l2"] = l2;
  return j;
}

ProbeConfig ProbeConfig::from_json(const json& j) {
  static const std::set<std::string> known = {
      "num_identities", "sources_per_identity", "frames", "num_landmarks", "noise_sigma",
      "seed", "shuffle_labels", "learning_rate", "epochs", "l2"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown key \"" + it.key() + "\" in probe config");
  ProbeConfig c;
  c.num_identities = j.value("num_identities", c.num_identities);
  c.sources_per_identity = j.value("sources_per_identity", c.sources_per_identity);
  c.frames = j.value("frames", c.frames);
  c.num_landmarks = j.value("num_landmarks", c.num_landmarks);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.seed = j.value("seed", c.seed);
  c.shuffle_labels = j.value("shuffle_labels", c.shuffle_labels);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.l2 = j.value("l2", c.l2);
  c.validate();
  return c;
}

std::vector<LandmarkSequence> gen_landmark_set(const ProbeConfig& cfg) {
  cfg.validate();
  const int L3 = cfg.num_landmarks * 3;

  Eigen::VectorXd base(L3);
  {
    Rng rng(derive_seed(cfg.seed, kTagBaseFace));
    for (int k = 0; k < L3; ++k) base(k) = rng.gaussian();
  }

  std::vector<LandmarkSequence> out;
  out.reserve(static_cast<size_t>(cfg.num_identities) * cfg.sources_per_identity);
  for (int i = 0; i < cfg.num_identities; ++i) {
    // identity-specific periodic motion signature, fixed across its sources
    Eigen::VectorXd amp(L3), freq(L3), phase(L3);
    {
      Rng rng(derive_seed(cfg.seed, kTagSignature, i));
      for (int k = 0; k < L3; ++k) amp(k) = 0.1 + 0.25 * std::abs(rng.gaussian());
      for (int k = 0; k < L3; ++k) freq(k) = 1.0 + 3.0 * rng.uniform();
      for (int k = 0; k < L3; ++k) phase(k) = 2.0 * M_PI * rng.uniform();
    }
    for (int s = 0; s < cfg.sources_per_identity; ++s) {
      Rng rng(derive_seed(cfg.seed, kTagLandmarkNoise, i, s));
      LandmarkSequence seq;
      seq.num_landmarks = cfg.num_landmarks;
      seq.identity_label = "id" + std::to_string(i);
      seq.source_label = "src" + std::to_string(s);
      seq.landmarks.resize(cfg.frames, L3);
      for (int t = 0; t < cfg.frames; ++t)
        for (int k = 0; k < L3; ++k)
          seq.landmarks(t, k) = static_cast<float>(
              base(k) + amp(k) * std::sin(2.0 * M_PI * freq(k) * t / cfg.frames + phase(k)) +
              cfg.noise_sigma * rng.gaussian());
      out.push_back(std::move(seq));
    }
  }
  return out;
}

MotionClassifier train_motion_classifier(const std::vector<Eigen::VectorXd>& features,
                                         const std::vector<std::string>& labels,
                                         double learning_rate, int epochs, double l2) {
  if (features.empty() || features.size() != labels.size())
    throw ConfigError("features/labels size mismatch or empty training set");

  MotionClassifier clf;
  {
    std::set<std::string> uniq(labels.begin(), labels.end());
    clf.classes.assign(uniq.begin(), uniq.end());
  }
  if (clf.classes.size() < 2) throw DataError("need at least two classes to train");

  const Eigen::Index N = static_cast<Eigen::Index>(features.size());
  const Eigen::Index D = features.front().size();
  const Eigen::Index C = static_cast<Eigen::Index>(clf.classes.size());

  Eigen::MatrixXd X(N, D);
  for (Eigen::Index r = 0; r < N; ++r) {
    if (features[r].size() != D) throw ConfigError("inconsistent feature dimensions");
    X.row(r) = features[r].transpose();
  }
  if ((X.rowwise() - X.row(0)).cwiseAbs().maxCoeff() == 0.0)
    throw DataError("degenerate features: all training vectors identical");

  std::map<std::string, Eigen::Index> class_index;
  for (Eigen::Index c = 0; c < C; ++c) class_index[clf.classes[c]] = c;
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(N, C);
  for (Eigen::Index r = 0; r < N; ++r) Y(r, class_index.at(labels[r])) = 1.0;

  // zero init keeps training deterministic; the objective is convex
  clf.weights = Eigen::MatrixXd::Zero(C, D);
  clf.bias = Eigen::VectorXd::Zero(C);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Eigen::MatrixXd logits = X * clf.weights.transpose();
    logits.rowwise() += clf.bias.transpose();
    Eigen::MatrixXd P(N, C);
    for (Eigen::Index r = 0; r < N; ++r) {
      const double m = logits.row(r).maxCoeff();
      Eigen::ArrayXd e = (logits.row(r).transpose().array() - m).exp();
      P.row(r) = (e / e.sum()).matrix().transpose();
    }
    Eigen::MatrixXd G = P - Y;
    Eigen::MatrixXd grad_w = (G.transpose() * X) / static_cast<double>(N) + l2 * clf.weights;
    Eigen::VectorXd grad_b = G.colwise().mean().transpose();
    clf.weights -= learning_rate * grad_w;
    clf.bias -= learning_rate * grad_b;
  }
  return clf;
}

ProbeReport probe_report(const MotionClassifier& clf,
                         const std::vector<Eigen::VectorXd>& features,
                         const std::vector<std::string>& labels) {
  if (features.empty() || features.size() != labels.size())
    throw ConfigError("empty or mismatched validation set");
  long correct = 0;
  for (size_t r = 0; r < features.size(); ++r) {
    Eigen::VectorXd logits = clf.weights * features[r] + clf.bias;
    Eigen::Index best;
    logits.maxCoeff(&best);
    if (clf.classes[static_cast<size_t>(best)] == labels[r]) ++correct;
  }
  ProbeReport rep;
  rep.num_classes = static_cast<int>(clf.classes.size());
  rep.num_validation = static_cast<int>(features.size());
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(features.size());
  rep.random_baseline = 1.0 / rep.num_classes;
  rep.improvement_factor = rep.accuracy / rep.random_baseline;
  return rep;
}

json ProbeReport::to_json() const {
  return json{{"accuracy", accuracy},
              {"random_baseline", random_baseline},
              {"improvement_factor", improvement_factor},
              {"num_classes", num_classes},
              {"num_validation", num_validation}};
}

ProbeReport run_probe(const std::vector<LandmarkSequence>& sequences, const ProbeConfig& cfg) {
  if (sequences.empty()) throw ConfigError("empty landmark set");

  std::vector<Eigen::VectorXd> vectors;
  std::vector<std::string> labels, sources;
  vectors.reserve(sequences.size());
  for (const auto& seq : sequences) {
    vectors.push_back(motion_vector(seq));
    labels.push_back(seq.identity_label);
    sources.push_back(seq.source_label);
  }

  if (cfg.shuffle_labels) {
    Rng rng(derive_seed(cfg.seed, kTagShuffle));
    for (size_t k = labels.size() - 1; k > 0; --k)
      std::swap(labels[k], labels[rng.index(k + 1)]);
  }

  // 80/20 split by source label, no source overlap between train and val
  std::vector<std::string> distinct_sources;
  {
    std::set<std::string> uniq(sources.begin(), sources.end());
    distinct_sources.assign(uniq.begin(), uniq.end());
  }
  if (distinct_sources.size() < 2)
    throw ConfigError("need at least two distinct sources for an 80/20 split");
  {
    Rng rng(derive_seed(cfg.seed, kTagSplit));
    for (size_t k = distinct_sources.size() - 1; k > 0; --k)
      std::swap(distinct_sources[k], distinct_sources[rng.index(k + 1)]);
  }
  const size_t n_val = std::max<size_t>(1, distinct_sources.size() / 5);
  std::set<std::string> val_sources(distinct_sources.end() - n_val, distinct_sources.end());

  std::vector<Eigen::VectorXd> train_x, val_x;
  std::vector<std::string> train_y, val_y;
  for (size_t k = 0; k < vectors.size(); ++k) {
    if (val_sources.count(sources[k])) {
      val_x.push_back(vectors[k]);
      val_y.push_back(labels[k]);
    } else {
      train_x.push_back(vectors[k]);
      train_y.push_back(labels[k]);
    }
  }
  if (val_x.empty() || train_x.empty())
    throw ConfigError("source split produced an empty train or validation set");

  MotionClassifier clf =
      train_motion_classifier(train_x, train_y, cfg.learning_rate, cfg.epochs, cfg.l2);
  return probe_report(clf, val_x, val_y);
}

ProbeReport run_probe(const ProbeConfig& cfg) { return run_probe(gen_landmark_set(cfg), cfg); }

fs::path save_landmarks(const LandmarkSequence& seq, double frame_rate_hz,
                        const fs::path& dir) {
  seq.validate();
  FrameFeatureSequence env;
  env.modality = Modality::landmarks3d;
  env.frame_rate_hz = frame_rate_hz;
  env.frames = seq.landmarks;
  env.identity_label = seq.identity_label;
  env.source_label = seq.source_label;
  return save_stream(env, dir);
}

LandmarkSequence load_landmarks(const fs::path& manifest_path) {
  FrameFeatureSequence env = load_stream(manifest_path);
  if (env.modality != Modality::landmarks3d)
    throw ConfigError("expected a landmarks3d stream: " + manifest_path.string());
  if (env.dim() % 3 != 0)
    throw ConfigError("landmark payload dim must be a multiple of 3: " +
                      manifest_path.string());
  LandmarkSequence seq;
  seq.landmarks = env.frames;
  seq.num_landmarks = env.dim() / 3;
  seq.identity_label = env.identity_label;
  seq.source_label = env.source_label;
  return seq;
}

}  // namespace avc

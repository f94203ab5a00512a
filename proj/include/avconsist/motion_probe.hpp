#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "avconsist/streams.hpp"
#include "json.hpp"

namespace avc {

// 3D landmark sequence; stored as F x (L*3) in (landmark, coordinate) order.
struct LandmarkSequence {
  Eigen::MatrixXf landmarks;  // F x (L*3)
  int num_landmarks = 0;      // L
  std::string identity_label;
  std::string source_label;

  int num_frames() const { return static_cast<int>(landmarks.rows()); }
  void validate() const;
};

// Consecutive-frame landmark differences flattened in
// (frame, landmark, coordinate) order; length exactly (F-1)*L*3.
Eigen::VectorXd motion_vector(const LandmarkSequence& seq);

struct ProbeConfig {
  int num_identities = 20;
  int sources_per_identity = 10;
  int frames = 50;
  int num_landmarks = 68;
  double noise_sigma = 0.02;
  uint64_t seed = 11;
  bool shuffle_labels = false;  // permutation control

  // classifier hyperparameters (multinomial logistic regression, full-batch GD)
  double learning_rate = 0.5;
  int epochs = 300;
  double l2 = 1e-4;

  void validate() const;
  nlohmann::json to_json() const;
  static ProbeConfig from_json(const nlohmann::json& j);
};

// Per-identity periodic motion signature (identity-specific frequency,
// amplitude and phase per landmark) plus noise.
std::vector<LandmarkSequence> gen_landmark_set(const ProbeConfig& cfg);

struct MotionClassifier {
  Eigen::MatrixXd weights;  // C x D
  Eigen::VectorXd bias;     // C
  std::vector<std::string> classes;
};

MotionClassifier train_motion_classifier(const std::vector<Eigen::VectorXd>& features,
                                         const std::vector<std::string>& labels,
                                         double learning_rate, int epochs, double l2);

struct ProbeReport {
  double accuracy = 0.0;
  double random_baseline = 0.0;
  double improvement_factor = 0.0;
  int num_classes = 0;
  int num_validation = 0;

  nlohmann::json to_json() const;
};

ProbeReport probe_report(const MotionClassifier& clf,
                         const std::vector<Eigen::VectorXd>& features,
                         const std::vector<std::string>& labels);

// Full probe: generate (or take) sequences, 80/20 split by source with no
// source overlap, train, report on the validation set.
ProbeReport run_probe(const std::vector<LandmarkSequence>& sequences, const ProbeConfig& cfg);
ProbeReport run_probe(const ProbeConfig& cfg);

// Landmark file I/O: streams-module envelope with modality "landmarks3d".
std::filesystem::path save_landmarks(const LandmarkSequence& seq, double frame_rate_hz,
                                     const std::filesystem::path& dir);
LandmarkSequence load_landmarks(const std::filesystem::path& manifest_path);

}  // namespace avc

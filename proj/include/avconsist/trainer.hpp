#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "avconsist/aggregator.hpp"
#include "avconsist/losses.hpp"
#include "avconsist/rng.hpp"
#include "avconsist/streams.hpp"
#include "json.hpp"

namespace avc {

struct TrainConfig {
  int identities_per_batch = 8;  // I
  int sources_per_identity = 4;  // T
  double lr_peak = 1e-4;
  double weight_decay = 0.2;
  double tau_init = 0.07;
  int warmup_steps = -1;  // -1 -> 5% of total_steps
  int total_steps = 1000;
  uint64_t seed = 1;
  CrossMode loss_mode = CrossMode::symmetric;
  double embed_noise_sigma = 0.01;
  WindowSpec window_spec_intra{5, 5};
  WindowSpec window_spec_cross{50, 50};
  int d_out = 256;

  int effective_warmup() const;
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);  // unknown keys rejected
};

// Index of stream manifests grouped by identity and source; sequences are
// loaded lazily and cached in memory.
class Corpus {
 public:
  static Corpus scan(const std::filesystem::path& dir);

  const std::vector<std::string>& identities() const { return identities_; }
  std::vector<std::string> sources_of(const std::string& identity) const;
  // throws ConfigError if the (identity, source, modality) stream is absent
  const FrameFeatureSequence& stream(const std::string& identity, const std::string& source,
                                     Modality m) const;
  size_t num_identities() const { return identities_.size(); }

 private:
  std::vector<std::string> identities_;
  std::map<std::string, std::map<std::string, std::map<Modality, std::filesystem::path>>>
      manifests_;
  mutable std::map<std::string, FrameFeatureSequence> cache_;
};

struct BatchSample {
  Eigen::MatrixXd id_window;   // window_spec_intra.window_len x d_id
  Eigen::MatrixXd vis_window;  // window_spec_cross.window_len x d_vis
  Eigen::MatrixXd aud_window;  // time-aligned audio frames x d_aud
  std::string identity;
  std::string source;
};

struct TrainingBatch {
  int num_identities = 0;
  int num_sources = 0;
  std::vector<BatchSample> samples;  // I*T, identity-major
};

// I identities without replacement, T distinct sources per identity when
// available (with replacement and a warning otherwise); one random window per
// sample; Gaussian noise sigma added to window frames when sigma > 0.
TrainingBatch sample_batch(const Corpus& corpus, const TrainConfig& cfg, Rng& rng);

// linear warmup to lr_peak, then cosine annealing to zero
double lr_at(int step, const TrainConfig& cfg);

// Decoupled weight-decay adaptive-moment optimizer state for one aggregator.
struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  Eigen::MatrixXd m_w, v_w;
  Eigen::VectorXd m_b, v_b;
  double m_lt = 0.0, v_lt = 0.0;

  void init(const ModelParams& p);
};

// One optimizer update of the intra aggregator and its log_tau. Weight decay
// is decoupled and applied to the weight matrix only, never to log_tau.
double train_step_intra(ModelParams& params, AdamState& state, const TrainingBatch& batch,
                        const TrainConfig& cfg, int step);

// Joint update of the visual and audio aggregators; tau is shared and lives in
// visual.log_tau (audio.log_tau mirrors it after each step).
double train_step_cross(ModelParams& visual, ModelParams& audio, AdamState& vis_state,
                        AdamState& aud_state, const TrainingBatch& batch,
                        const TrainConfig& cfg, int step);

struct TrainOutputs {
  ModelParams intra;
  ModelParams visual;
  ModelParams audio;
  std::filesystem::path intra_checkpoint;
  std::filesystem::path cross_visual_checkpoint;
  std::filesystem::path cross_audio_checkpoint;
};

// Runs the intra and cross trainings as two independent loops, writes
// checkpoints and per-step CSV logs (step, lr, loss, tau) into out_dir.
TrainOutputs train(const Corpus& corpus, const TrainConfig& cfg,
                   const std::filesystem::path& out_dir);

}  // namespace avc

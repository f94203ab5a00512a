#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "avconsist/streams.hpp"
#include "json.hpp"

namespace avc {

struct SynthConfig {
  int num_identities = 32;
  int sources_per_identity = 4;
  int frames_per_source = 250;  // at feature_rate_hz
  int dim = 64;
  double feature_rate_hz = 25.0;
  double audio_rate_hz = 50.0;
  double noise_sigma = 0.05;
  double drift_magnitude = 0.6;   // in [0, 1]
  double drift_span = 0.5;        // fraction of the stream, in (0, 1]
  int desync_offset_windows = 2;
  uint64_t seed = 7;

  // latent process shaping; visual and audio share one latent per window
  int latent_dim = 16;
  int latent_window_frames = 25;  // at feature_rate_hz
  double latent_ar_rho = 0.8;     // temporal correlation of consecutive latents

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct StreamTriple {
  FrameFeatureSequence identity;
  FrameFeatureSequence visual;
  FrameFeatureSequence audio;
  int identity_idx = 0;
  int source_idx = 0;
};

// Deterministic synthetic stream oracle. Identity streams are a fixed
// per-identity unit anchor pushed through a seeded linear map + tanh; visual
// and audio streams share per-window latents so aligned windows correlate.
class SynthGenerator {
 public:
  explicit SynthGenerator(SynthConfig cfg);

  const SynthConfig& config() const { return cfg_; }
  const Eigen::MatrixXd& anchors() const { return anchors_; }  // dim x num_identities
  int latent_windows_per_source() const;

  StreamTriple gen_triple(int identity_idx, int source_idx) const;
  std::vector<StreamTriple> gen_corpus() const;

  // Re-anchors a contiguous drift_span segment of the identity stream toward
  // the next identity's anchor: (1-m)*a_i + m*a_k, renormalized. Visual and
  // audio are untouched. m = 0 returns the input unchanged.
  StreamTriple corrupt_identity_drift(const StreamTriple& triple, double magnitude,
                                      double span) const;

  // Cyclically shifts the audio per-window latents by offset windows before
  // feature generation; identity/visual untouched.
  StreamTriple corrupt_av_desync(const StreamTriple& triple, int offset_windows) const;

 private:
  FrameFeatureSequence gen_identity_stream(int identity_idx, int source_idx,
                                           double drift_magnitude, double drift_span) const;
  FrameFeatureSequence gen_visual_stream(int identity_idx, int source_idx) const;
  FrameFeatureSequence gen_audio_stream(int identity_idx, int source_idx,
                                        int latent_shift) const;
  Eigen::MatrixXd latents(int identity_idx, int source_idx) const;  // latent_dim x W_lat

  SynthConfig cfg_;
  Eigen::MatrixXd anchors_;   // dim x num_identities, orthonormal when possible
  Eigen::MatrixXd map_id_;    // dim x dim
  Eigen::MatrixXd map_vis_;   // dim x latent_dim
  Eigen::MatrixXd map_aud_;   // dim x latent_dim
};

struct CorpusWriteOptions {
  bool with_fakes = false;
  double drift_magnitude = 0.6;
  double drift_span = 0.5;
  int desync_offset_windows = 2;
};

// Writes the corpus under out_dir: real streams into real/, corrupted ones
// into fake_drift/ and fake_desync/, plus truth.csv and streams.csv indexes.
void write_corpus(const SynthGenerator& gen, const std::filesystem::path& out_dir,
                  const CorpusWriteOptions& opts);

}  // namespace avc

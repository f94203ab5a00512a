#include "avconsist/synthgen.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "avconsist/errors.hpp"
#include "avconsist/rng.hpp"

namespace avc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum : uint64_t {
  kTagAnchors = 301,
  kTagMaps = 302,
  kTagLatent = 303,
  kTagNoiseId = 304,
  kTagOffId = 305,
  kTagNoiseVis = 306,
  kTagOffVis = 307,
  kTagNoiseAud = 308,
  kTagOffAud = 309,
};

Eigen::MatrixXd gaussian_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.gaussian();
  return m;
}

Eigen::VectorXd gaussian_vector(int n, Rng& rng, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (int k = 0; k < n; ++k) v(k) = scale * rng.gaussian();
  return v;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_identities < 1) throw ConfigError("num_identities must be >= 1");
  if (sources_per_identity < 1) throw ConfigError("sources_per_identity must be >= 1");
  if (frames_per_source < 1) throw ConfigError("frames_per_source must be >= 1");
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (!(feature_rate_hz > 0.0) || !(audio_rate_hz > 0.0))
    throw ConfigError("frame rates must be positive");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
  if (drift_magnitude < 0.0 || drift_magnitude > 1.0)
    throw ConfigError("drift_magnitude must lie in [0, 1]");
  if (!(drift_span > 0.0 && drift_span <= 1.0))
    throw ConfigError("drift_span must lie in (0, 1]");
  if (desync_offset_windows < 0) throw ConfigError("desync_offset_windows must be >= 0");
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (latent_window_frames < 1) throw ConfigError("latent_window_frames must be >= 1");
  if (!(latent_ar_rho >= 0.0 && latent_ar_rho < 1.0))
    throw ConfigError("latent_ar_rho must lie in [0, 1)");
}

json SynthConfig::to_json() const {
  json j;
  j["num_identities"] = num_identities;
  j["sources_per_identity"] = sources_per_identity;
  j["frames_per_source"] = frames_per_source;
  j["dim"] = dim;
  j["feature_rate_hz"] = feature_rate_hz;
  j["audio_rate_hz"] = audio_rate_hz;
  j["noise_sigma"] = noise_sigma;
  j["drift_magnitude"] = drift_magnitude;
  j["drift_span"] = drift_span;
  j["desync_offset_windows"] = desync_offset_windows;
  j["seed"] = seed;
  j["latent_dim"] = latent_dim;
  j["latent_window_frames"] = latent_window_frames;
  j["latent_ar_rho"] = latent_ar_rho;
  return j;
}

SynthConfig SynthConfig::from_json(const json& j) {
  static const std::set<std::string> known = {
      "num_identities", "sources_per_identity", "frames_per_source",
      "dim", "feature_rate_hz", "audio_rate_hz", "noise_sigma",
      "drift_magnitude", "drift_span", "desync_offset_windows",
      "seed", "latent_dim", "latent_window_frames", "latent_ar_rho"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown key \"" + it.key() + "\" in synth config");
  SynthConfig c;
  c.num_identities = j.value("num_identities", c.num_identities);
  c.sources_per_identity = j.value("sources_per_identity", c.sources_per_identity);
  c.frames_per_source = j.value("frames_per_source", c.frames_per_source);
  c.dim = j.value("dim", c.dim);
  c.feature_rate_hz = j.value("feature_rate_hz", c.feature_rate_hz);
  c.audio_rate_hz = j.value("audio_rate_hz", c.audio_rate_hz);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.drift_magnitude = j.value("drift_magnitude", c.drift_magnitude);
  c.drift_span = j.value("drift_span", c.drift_span);
  c.desync_offset_windows = j.value("desync_offset_windows", c.desync_offset_windows);
  c.seed = j.value("seed", c.seed);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.latent_window_frames = j.value("latent_window_frames", c.latent_window_frames);
  c.latent_ar_rho = j.value("latent_ar_rho", c.latent_ar_rho);
  c.validate();
  return c;
}

SynthGenerator::SynthGenerator(SynthConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();

  // anchors: seeded orthogonalization where the dimension allows it
  {
    Rng rng(derive_seed(cfg_.seed, kTagAnchors));
    anchors_ = gaussian_matrix(cfg_.dim, cfg_.num_identities, rng);
    for (int i = 0; i < cfg_.num_identities; ++i) {
      if (i < cfg_.dim)
        for (int j = 0; j < i; ++j)
          anchors_.col(i) -= anchors_.col(j).dot(anchors_.col(i)) * anchors_.col(j);
      anchors_.col(i).normalize();
    }
  }
  {
    Rng rng(derive_seed(cfg_.seed, kTagMaps));
    map_id_ = gaussian_matrix(cfg_.dim, cfg_.dim, rng);
    // latent maps scaled so tanh stays near its linear regime
    const double s = 1.0 / std::sqrt(static_cast<double>(cfg_.latent_dim));
    map_vis_ = gaussian_matrix(cfg_.dim, cfg_.latent_dim, rng, s);
    map_aud_ = gaussian_matrix(cfg_.dim, cfg_.latent_dim, rng, s);
  }
}

int SynthGenerator::latent_windows_per_source() const {
  return (cfg_.frames_per_source + cfg_.latent_window_frames - 1) / cfg_.latent_window_frames;
}

Eigen::MatrixXd SynthGenerator::latents(int identity_idx, int source_idx) const {
  Rng rng(derive_seed(cfg_.seed, kTagLatent, identity_idx, source_idx));
  const int W = latent_windows_per_source();
  Eigen::MatrixXd z(cfg_.latent_dim, W);
  z.col(0) = gaussian_vector(cfg_.latent_dim, rng).normalized();
  const double rho = cfg_.latent_ar_rho;
  const double nu = std::sqrt(1.0 - rho * rho);
  for (int w = 1; w < W; ++w)
    z.col(w) = (rho * z.col(w - 1) + nu * gaussian_vector(cfg_.latent_dim, rng)).normalized();
  return z;
}

FrameFeatureSequence SynthGenerator::gen_identity_stream(int identity_idx, int source_idx,
                                                         double drift_magnitude,
                                                         double drift_span) const {
  const int F = cfg_.frames_per_source;
  const Eigen::VectorXd base = (map_id_ * anchors_.col(identity_idx)).array().tanh();

  Eigen::VectorXd drift_base;
  long seg_start = 0, seg_end = 0;
  if (drift_magnitude > 0.0) {
    if (cfg_.num_identities < 2)
      throw DataError("identity drift needs a donor anchor: corpus has a single identity");
    const int donor = (identity_idx + 1) % cfg_.num_identities;
    Eigen::VectorXd blended = (1.0 - drift_magnitude) * anchors_.col(identity_idx) +
                              drift_magnitude * anchors_.col(donor);
    drift_base = (map_id_ * blended.normalized()).array().tanh();
    const long seg_len = std::max<long>(1, std::lround(drift_span * F));
    seg_start = (F - seg_len) / 2;
    seg_end = seg_start + seg_len;
  }

  // noise and offset keyed by source only, so a full-magnitude full-span drift
  // reproduces the donor identity's generation path exactly
  Rng off_rng(derive_seed(cfg_.seed, kTagOffId, source_idx));
  const Eigen::VectorXd offset = gaussian_vector(cfg_.dim, off_rng, cfg_.noise_sigma);
  Rng noise_rng(derive_seed(cfg_.seed, kTagNoiseId, source_idx));

  FrameFeatureSequence seq;
  seq.modality = Modality::identity;
  seq.frame_rate_hz = cfg_.feature_rate_hz;
  seq.identity_label = "id" + std::to_string(identity_idx);
  seq.source_label = "src" + std::to_string(source_idx);
  seq.frames.resize(F, cfg_.dim);
  for (long t = 0; t < F; ++t) {
    const bool in_segment = drift_magnitude > 0.0 && t >= seg_start && t < seg_end;
    const Eigen::VectorXd& b = in_segment ? drift_base : base;
    for (int c = 0; c < cfg_.dim; ++c)
      seq.frames(t, c) =
          static_cast<float>(b(c) + offset(c) + cfg_.noise_sigma * noise_rng.gaussian());
  }
  return seq;
}

FrameFeatureSequence SynthGenerator::gen_visual_stream(int identity_idx,
                                                       int source_idx) const {
  const int F = cfg_.frames_per_source;
  const Eigen::MatrixXd z = latents(identity_idx, source_idx);
  const int W = static_cast<int>(z.cols());

  Eigen::MatrixXd bases(cfg_.dim, W);
  for (int w = 0; w < W; ++w) bases.col(w) = (map_vis_ * z.col(w)).array().tanh();

  Rng off_rng(derive_seed(cfg_.seed, kTagOffVis, identity_idx, source_idx));
  const Eigen::VectorXd offset = gaussian_vector(cfg_.dim, off_rng, cfg_.noise_sigma);
  Rng noise_rng(derive_seed(cfg_.seed, kTagNoiseVis, identity_idx, source_idx));

  FrameFeatureSequence seq;
  seq.modality = Modality::visual;
  seq.frame_rate_hz = cfg_.feature_rate_hz;
  seq.identity_label = "id" + std::to_string(identity_idx);
  seq.source_label = "src" + std::to_string(source_idx);
  seq.frames.resize(F, cfg_.dim);
  for (long t = 0; t < F; ++t) {
    const int w = std::min<int>(static_cast<int>(t / cfg_.latent_window_frames), W - 1);
    for (int c = 0; c < cfg_.dim; ++c)
      seq.frames(t, c) = static_cast<float>(bases(c, w) + offset(c) +
                                            cfg_.noise_sigma * noise_rng.gaussian());
  }
  return seq;
}

FrameFeatureSequence SynthGenerator::gen_audio_stream(int identity_idx, int source_idx,
                                                      int latent_shift) const {
  const Eigen::MatrixXd z = latents(identity_idx, source_idx);
  const int W = static_cast<int>(z.cols());
  const int shift = ((latent_shift % W) + W) % W;

  Eigen::MatrixXd bases(cfg_.dim, W);
  for (int w = 0; w < W; ++w)
    bases.col(w) = (map_aud_ * z.col((w + shift) % W)).array().tanh();

  Rng off_rng(derive_seed(cfg_.seed, kTagOffAud, identity_idx, source_idx));
  const Eigen::VectorXd offset = gaussian_vector(cfg_.dim, off_rng, cfg_.noise_sigma);
  Rng noise_rng(derive_seed(cfg_.seed, kTagNoiseAud, identity_idx, source_idx));

  const long F_aud =
      std::lround(cfg_.frames_per_source * cfg_.audio_rate_hz / cfg_.feature_rate_hz);
  FrameFeatureSequence seq;
  seq.modality = Modality::audio;
  seq.frame_rate_hz = cfg_.audio_rate_hz;
  seq.identity_label = "id" + std::to_string(identity_idx);
  seq.source_label = "src" + std::to_string(source_idx);
  seq.frames.resize(F_aud, cfg_.dim);
  for (long t = 0; t < F_aud; ++t) {
    const double time_s = t / cfg_.audio_rate_hz;
    const int w = std::min<int>(
        static_cast<int>(time_s * cfg_.feature_rate_hz / cfg_.latent_window_frames), W - 1);
    for (int c = 0; c < cfg_.dim; ++c)
      seq.frames(t, c) = static_cast<float>(bases(c, w) + offset(c) +
                                            cfg_.noise_sigma * noise_rng.gaussian());
  }
  return seq;
}

StreamTriple SynthGenerator::gen_triple(int identity_idx, int source_idx) const {
  if (identity_idx < 0 || identity_idx >= cfg_.num_identities)
    throw ConfigError("identity index out of range");
  if (source_idx < 0 || source_idx >= cfg_.sources_per_identity)
    throw ConfigError("source index out of range");
  StreamTriple triple;
  triple.identity_idx = identity_idx;
  triple.source_idx = source_idx;
  triple.identity = gen_identity_stream(identity_idx, source_idx, 0.0, 1.0);
  triple.visual = gen_visual_stream(identity_idx, source_idx);
  triple.audio = gen_audio_stream(identity_idx, source_idx, 0);
  return triple;
}

std::vector<StreamTriple> SynthGenerator::gen_corpus() const {
  std::vector<StreamTriple> out;
  out.reserve(static_cast<size_t>(cfg_.num_identities) * cfg_.sources_per_identity);
  for (int i = 0; i < cfg_.num_identities; ++i)
    for (int s = 0; s < cfg_.sources_per_identity; ++s) out.push_back(gen_triple(i, s));
  return out;
}

StreamTriple SynthGenerator::corrupt_identity_drift(const StreamTriple& triple,
                                                    double magnitude, double span) const {
  if (magnitude < 0.0 || magnitude > 1.0)
    throw ConfigError("drift_magnitude must lie in [0, 1]");
  if (!(span > 0.0 && span <= 1.0)) throw ConfigError("drift_span must lie in (0, 1]");
  StreamTriple out = triple;
  if (magnitude == 0.0) return out;
  out.identity = gen_identity_stream(triple.identity_idx, triple.source_idx, magnitude, span);
  return out;
}

StreamTriple SynthGenerator::corrupt_av_desync(const StreamTriple& triple,
                                               int offset_windows) const {
  if (cfg_.frames_per_source < cfg_.latent_window_frames)
    throw DataError("stream shorter than one latent window, cannot desync");
  StreamTriple out = triple;
  out.audio = gen_audio_stream(triple.identity_idx, triple.source_idx, offset_windows);
  return out;
}

void write_corpus(const SynthGenerator& gen, const fs::path& out_dir,
                  const CorpusWriteOptions& opts) {
  const SynthConfig& cfg = gen.config();
  fs::create_directories(out_dir);

  std::ofstream truth(out_dir / "truth.csv", std::ios::trunc);
  truth << "path,label,corruption,parameter\n";
  std::ofstream streams(out_dir / "streams.csv", std::ios::trunc);
  streams << "id_manifest,vis_manifest,aud_manifest,category,label\n";

  auto emit = [&](const StreamTriple& triple, const std::string& subdir,
                  const std::string& category, int label, double parameter) {
    const fs::path dir = out_dir / subdir;
    const fs::path id_m = save_stream(triple.identity, dir);
    const fs::path vis_m = save_stream(triple.visual, dir);
    const fs::path aud_m = save_stream(triple.audio, dir);
    truth << fs::relative(id_m, out_dir).string() << "," << label << "," << category << ","
          << parameter << "\n";
    streams << fs::relative(id_m, out_dir).string() << ","
            << fs::relative(vis_m, out_dir).string() << ","
            << fs::relative(aud_m, out_dir).string() << "," << category << "," << label
            << "\n";
  };

  for (int i = 0; i < cfg.num_identities; ++i) {
    for (int s = 0; s < cfg.sources_per_identity; ++s) {
      StreamTriple triple = gen.gen_triple(i, s);
      emit(triple, "real", "real", 1, 0.0);
      if (opts.with_fakes) {
        emit(gen.corrupt_identity_drift(triple, opts.drift_magnitude, opts.drift_span),
             "fake_drift", "drift", 0, opts.drift_magnitude);
        emit(gen.corrupt_av_desync(triple, opts.desync_offset_windows), "fake_desync",
             "desync", 0, static_cast<double>(opts.desync_offset_windows));
      }
    }
  }
  if (!truth || !streams) throw ConfigError("failed to write corpus indexes");
}

}  // namespace avc

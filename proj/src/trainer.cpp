#include "avconsist/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "avconsist/errors.hpp"

namespace avc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// seed-derivation tags, one per independent stream
enum : uint64_t {
  kTagInitIntra = 101,
  kTagInitVisual = 102,
  kTagInitAudio = 103,
  kTagSampleIntra = 201,
  kTagSampleCross = 202,
};

constexpr double kLogTauMin = -4.605170185988091;  // log(0.01)
constexpr double kLogTauMax = 0.0;                 // log(1.0)

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
}

}  // namespace

int TrainConfig::effective_warmup() const {
  if (warmup_steps >= 0) return warmup_steps;
  return total_steps / 20;
}

void TrainConfig::validate() const {
  if (identities_per_batch < 1) throw ConfigError("identities_per_batch must be >= 1");
  if (sources_per_identity < 1) throw ConfigError("sources_per_identity must be >= 1");
  if (!(lr_peak > 0.0)) throw ConfigError("lr_peak must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (tau_init < 0.01 || tau_init > 1.0) throw ConfigError("tau_init must lie in [0.01, 1.0]");
  if (total_steps < 0) throw ConfigError("total_steps must be non-negative");
  if (total_steps < effective_warmup())
    throw ConfigError("total_steps must be >= warmup_steps");
  if (embed_noise_sigma < 0.0) throw ConfigError("embed_noise_sigma must be non-negative");
  if (d_out < 1) throw ConfigError("d_out must be >= 1");
  window_spec_intra.validate();
  window_spec_cross.validate();
}

json TrainConfig::to_json() const {
  json j;
  j["identities_per_batch"] = identities_per_batch;
  j["sources_per_identity"] = sources_per_identity;
  j["lr_peak"] = lr_peak;
  j["weight_decay"] = weight_decay;
  j["tau_init"] = tau_init;
  j["warmup_steps"] = warmup_steps;
  j["total_steps"] = total_steps;
  j["seed"] = seed;
  j["loss_mode"] = loss_mode == CrossMode::symmetric ? "symmetric" : "paper_literal";
  j["embed_noise_sigma"] = embed_noise_sigma;
  j["window_intra"] = window_spec_intra.window_len_frames;
  j["stride_intra"] = window_spec_intra.stride_frames;
  j["window_cross"] = window_spec_cross.window_len_frames;
  j["stride_cross"] = window_spec_cross.stride_frames;
  j["d_out"] = d_out;
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  reject_unknown_keys(j,
                      {"identities_per_batch", "sources_per_identity", "lr_peak",
                       "weight_decay", "tau_init", "warmup_steps", "total_steps", "seed",
                       "loss_mode", "embed_noise_sigma", "window_intra", "stride_intra",
                       "window_cross", "stride_cross", "d_out"},
                      "train config");
  TrainConfig c;
  c.identities_per_batch = j.value("identities_per_batch", c.identities_per_batch);
  c.sources_per_identity = j.value("sources_per_identity", c.sources_per_identity);
  c.lr_peak = j.value("lr_peak", c.lr_peak);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.tau_init = j.value("tau_init", c.tau_init);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.seed = j.value("seed", c.seed);
  if (j.contains("loss_mode")) {
    const std::string m = j["loss_mode"].get<std::string>();
    if (m == "symmetric")
      c.loss_mode = CrossMode::symmetric;
    else if (m == "paper_literal")
      c.loss_mode = CrossMode::paper_literal;
    else
      throw ConfigError("loss_mode must be \"symmetric\" or \"paper_literal\"");
  }
  c.embed_noise_sigma = j.value("embed_noise_sigma", c.embed_noise_sigma);
  c.window_spec_intra.window_len_frames = j.value("window_intra", 5);
  c.window_spec_intra.stride_frames = j.value("stride_intra", 5);
  c.window_spec_cross.window_len_frames = j.value("window_cross", 50);
  c.window_spec_cross.stride_frames = j.value("stride_cross", 50);
  c.d_out = j.value("d_out", c.d_out);
  c.validate();
  return c;
}

Corpus Corpus::scan(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("corpus directory not found: " + dir.string());
  Corpus corpus;
  std::vector<fs::path> manifests;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() > 14 && name.ends_with(".manifest.json")) manifests.push_back(entry.path());
  }
  std::sort(manifests.begin(), manifests.end());
  if (manifests.empty()) throw ConfigError("no stream manifests under " + dir.string());

  for (const auto& path : manifests) {
    std::ifstream f(path);
    json j;
    try {
      f >> j;
    } catch (const json::exception& e) {
      throw ConfigError("manifest parse error in " + path.string() + ": " + e.what());
    }
    const Modality m = modality_from_string(j.at("modality").get<std::string>());
    if (m == Modality::landmarks3d) continue;
    const std::string identity = j.at("identity").get<std::string>();
    const std::string source = j.at("source").get<std::string>();
    auto& slot = corpus.manifests_[identity][source];
    if (slot.count(m))
      throw ConfigError("duplicate stream for (" + identity + ", " + source + ", " +
                        to_string(m) + ")");
    slot[m] = path;
  }
  for (const auto& [identity, _] : corpus.manifests_) corpus.identities_.push_back(identity);
  return corpus;
}

std::vector<std::string> Corpus::sources_of(const std::string& identity) const {
  auto it = manifests_.find(identity);
  if (it == manifests_.end()) throw ConfigError("unknown identity: " + identity);
  std::vector<std::string> out;
  for (const auto& [source, _] : it->second) out.push_back(source);
  return out;
}

const FrameFeatureSequence& Corpus::stream(const std::string& identity,
                                           const std::string& source, Modality m) const {
  auto it = manifests_.find(identity);
  if (it == manifests_.end()) throw ConfigError("unknown identity: " + identity);
  auto jt = it->second.find(source);
  if (jt == it->second.end())
    throw ConfigError("unknown source " + source + " for identity " + identity);
  auto kt = jt->second.find(m);
  if (kt == jt->second.end())
    throw ConfigError("missing " + to_string(m) + " stream for (" + identity + ", " + source +
                      ")");
  const std::string key = identity + "\x1f" + source + "\x1f" + to_string(m);
  auto ct = cache_.find(key);
  if (ct == cache_.end()) ct = cache_.emplace(key, load_stream(kt->second)).first;
  return ct->second;
}

namespace {

void add_noise(Eigen::MatrixXd& m, double sigma, Rng& rng) {
  if (sigma <= 0.0) return;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) += sigma * rng.gaussian();
}

}  // namespace

TrainingBatch sample_batch(const Corpus& corpus, const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  const int I = cfg.identities_per_batch;
  const int T = cfg.sources_per_identity;
  const auto& ids = corpus.identities();
  if (static_cast<int>(ids.size()) < I)
    throw ConfigError("corpus has " + std::to_string(ids.size()) +
                      " identities, need at least " + std::to_string(I));

  // partial Fisher-Yates over identity indices
  std::vector<size_t> idx(ids.size());
  for (size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  for (int k = 0; k < I; ++k)
    std::swap(idx[k], idx[k + rng.index(idx.size() - k)]);

  TrainingBatch batch;
  batch.num_identities = I;
  batch.num_sources = T;
  batch.samples.reserve(static_cast<size_t>(I) * T);

  for (int i = 0; i < I; ++i) {
    const std::string& identity = ids[idx[i]];
    std::vector<std::string> sources = corpus.sources_of(identity);
    std::vector<std::string> chosen;
    if (static_cast<int>(sources.size()) >= T) {
      std::vector<size_t> sidx(sources.size());
      for (size_t k = 0; k < sidx.size(); ++k) sidx[k] = k;
      for (int k = 0; k < T; ++k) std::swap(sidx[k], sidx[k + rng.index(sidx.size() - k)]);
      for (int k = 0; k < T; ++k) chosen.push_back(sources[sidx[k]]);
    } else {
      std::cerr << "warning: identity " << identity << " has only " << sources.size()
                << " sources, sampling with replacement\n";
      for (int k = 0; k < T; ++k) chosen.push_back(sources[rng.index(sources.size())]);
    }

    for (int t = 0; t < T; ++t) {
      const std::string& source = chosen[t];
      const FrameFeatureSequence& id_seq = corpus.stream(identity, source, Modality::identity);
      const FrameFeatureSequence& vis_seq = corpus.stream(identity, source, Modality::visual);
      const FrameFeatureSequence& aud_seq = corpus.stream(identity, source, Modality::audio);

      BatchSample s;
      s.identity = identity;
      s.source = source;

      auto id_windows = partition_windows(id_seq, cfg.window_spec_intra);
      s.id_window = id_windows[rng.index(id_windows.size())].frames;

      auto vis_windows = partition_windows(vis_seq, cfg.window_spec_cross);
      const size_t w = rng.index(vis_windows.size());
      s.vis_window = vis_windows[w].frames;
      const double t0 = vis_windows[w].span.start / vis_seq.frame_rate_hz;
      const double t1 =
          (vis_windows[w].span.start + cfg.window_spec_cross.window_len_frames) /
          vis_seq.frame_rate_hz;
      s.aud_window = extract_time_window(aud_seq, t0, t1).frames;

      add_noise(s.id_window, cfg.embed_noise_sigma, rng);
      add_noise(s.vis_window, cfg.embed_noise_sigma, rng);
      add_noise(s.aud_window, cfg.embed_noise_sigma, rng);
      batch.samples.push_back(std::move(s));
    }
  }
  return batch;
}

double lr_at(int step, const TrainConfig& cfg) {
  if (step < 0 || step > cfg.total_steps)
    throw ConfigError("step " + std::to_string(step) + " outside [0, " +
                      std::to_string(cfg.total_steps) + "]");
  const int warmup = cfg.effective_warmup();
  if (warmup > 0 && step < warmup)
    return cfg.lr_peak * static_cast<double>(step) / warmup;
  if (cfg.total_steps == warmup) return cfg.lr_peak;
  const double progress = static_cast<double>(step - warmup) / (cfg.total_steps - warmup);
  return cfg.lr_peak * 0.5 * (1.0 + std::cos(M_PI * progress));
}

void AdamState::init(const ModelParams& p) {
  t = 0;
  m_w = Eigen::MatrixXd::Zero(p.weight.rows(), p.weight.cols());
  v_w = Eigen::MatrixXd::Zero(p.weight.rows(), p.weight.cols());
  m_b = Eigen::VectorXd::Zero(p.bias.size());
  v_b = Eigen::VectorXd::Zero(p.bias.size());
  m_lt = 0.0;
  v_lt = 0.0;
}

namespace {

template <typename Tensor>
void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, double lr,
                 double beta1, double beta2, double eps, long t) {
  m = beta1 * m + (1.0 - beta1) * grad;
  v = (beta2 * v).eval();
  v.array() += (1.0 - beta2) * grad.array().square();
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

void adam_update_scalar(double& param, double grad, double& m, double& v, double lr,
                        double beta1, double beta2, double eps, long t) {
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad * grad;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  param -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
}

std::string batch_identities(const TrainingBatch& batch) {
  std::ostringstream os;
  std::set<std::string> seen;
  for (const auto& s : batch.samples)
    if (seen.insert(s.identity).second) os << " " << s.identity;
  return os.str();
}

}  // namespace

double train_step_intra(ModelParams& params, AdamState& state, const TrainingBatch& batch,
                        const TrainConfig& cfg, int step) {
  const int I = batch.num_identities, T = batch.num_sources;
  const double tau = params.tau();
  const double lr = lr_at(step, cfg);

  std::vector<ForwardCache> caches(batch.samples.size());
  IntraBatchEmbeddings emb;
  emb.num_identities = I;
  emb.num_sources = T;
  emb.mu.resize(static_cast<Eigen::Index>(I) * T, params.d_out());
  for (size_t s = 0; s < batch.samples.size(); ++s)
    emb.mu.row(static_cast<Eigen::Index>(s)) =
        aggregate_forward(batch.samples[s].id_window, params, &caches[s]);

  const double loss = intra_loss(emb, tau, /*check_unit=*/false);
  IntraLossGrads lg = intra_loss_gradients(emb, tau);
  if (!std::isfinite(loss) || !lg.grad_mu.allFinite() || !std::isfinite(lg.grad_log_tau))
    throw DataError("non-finite intra loss/gradient at step " + std::to_string(step) +
                    ", identities:" + batch_identities(batch));

  Eigen::MatrixXd gw = Eigen::MatrixXd::Zero(params.weight.rows(), params.weight.cols());
  Eigen::VectorXd gb = Eigen::VectorXd::Zero(params.bias.size());
  for (size_t s = 0; s < batch.samples.size(); ++s) {
    AggGrads ag = aggregate_backward(caches[s], params,
                                     lg.grad_mu.row(static_cast<Eigen::Index>(s)).transpose());
    gw += ag.grad_weight;
    gb += ag.grad_bias;
  }

  state.t += 1;
  adam_update(params.weight, gw, state.m_w, state.v_w, lr, state.beta1, state.beta2,
              state.eps, state.t);
  adam_update(params.bias, gb, state.m_b, state.v_b, lr, state.beta1, state.beta2, state.eps,
              state.t);
  adam_update_scalar(params.log_tau, lg.grad_log_tau, state.m_lt, state.v_lt, lr, state.beta1,
                     state.beta2, state.eps, state.t);
  params.weight *= (1.0 - lr * cfg.weight_decay);  // decoupled decay, weight only
  params.log_tau = std::clamp(params.log_tau, kLogTauMin, kLogTauMax);
  return loss;
}

double train_step_cross(ModelParams& visual, ModelParams& audio, AdamState& vis_state,
                        AdamState& aud_state, const TrainingBatch& batch,
                        const TrainConfig& cfg, int step) {
  const int I = batch.num_identities, T = batch.num_sources;
  const double tau = visual.tau();
  const double lr = lr_at(step, cfg);

  std::vector<ForwardCache> vis_caches(batch.samples.size()), aud_caches(batch.samples.size());
  CrossBatchEmbeddings emb;
  emb.num_identities = I;
  emb.num_sources = T;
  emb.gamma.resize(static_cast<Eigen::Index>(I) * T, visual.d_out());
  emb.alpha.resize(static_cast<Eigen::Index>(I) * T, audio.d_out());
  for (size_t s = 0; s < batch.samples.size(); ++s) {
    emb.gamma.row(static_cast<Eigen::Index>(s)) =
        aggregate_forward(batch.samples[s].vis_window, visual, &vis_caches[s]);
    emb.alpha.row(static_cast<Eigen::Index>(s)) =
        aggregate_forward(batch.samples[s].aud_window, audio, &aud_caches[s]);
  }

  const double loss = cross_loss(emb, tau, cfg.loss_mode, /*check_unit=*/false);
  CrossLossGrads lg = cross_loss_gradients(emb, tau, cfg.loss_mode);
  if (!std::isfinite(loss) || !lg.grad_gamma.allFinite() || !lg.grad_alpha.allFinite() ||
      !std::isfinite(lg.grad_log_tau))
    throw DataError("non-finite cross loss/gradient at step " + std::to_string(step) +
                    ", identities:" + batch_identities(batch));

  Eigen::MatrixXd gw_v = Eigen::MatrixXd::Zero(visual.weight.rows(), visual.weight.cols());
  Eigen::VectorXd gb_v = Eigen::VectorXd::Zero(visual.bias.size());
  Eigen::MatrixXd gw_a = Eigen::MatrixXd::Zero(audio.weight.rows(), audio.weight.cols());
  Eigen::VectorXd gb_a = Eigen::VectorXd::Zero(audio.bias.size());
  for (size_t s = 0; s < batch.samples.size(); ++s) {
    AggGrads agv = aggregate_backward(
        vis_caches[s], visual, lg.grad_gamma.row(static_cast<Eigen::Index>(s)).transpose());
    AggGrads aga = aggregate_backward(
        aud_caches[s], audio, lg.grad_alpha.row(static_cast<Eigen::Index>(s)).transpose());
    gw_v += agv.grad_weight;
    gb_v += agv.grad_bias;
    gw_a += aga.grad_weight;
    gb_a += aga.grad_bias;
  }

  vis_state.t += 1;
  aud_state.t += 1;
  adam_update(visual.weight, gw_v, vis_state.m_w, vis_state.v_w, lr, vis_state.beta1,
              vis_state.beta2, vis_state.eps, vis_state.t);
  adam_update(visual.bias, gb_v, vis_state.m_b, vis_state.v_b, lr, vis_state.beta1,
              vis_state.beta2, vis_state.eps, vis_state.t);
  adam_update(audio.weight, gw_a, aud_state.m_w, aud_state.v_w, lr, aud_state.beta1,
              aud_state.beta2, aud_state.eps, aud_state.t);
  adam_update(audio.bias, gb_a, aud_state.m_b, aud_state.v_b, lr, aud_state.beta1,
              aud_state.beta2, aud_state.eps, aud_state.t);
  adam_update_scalar(visual.log_tau, lg.grad_log_tau, vis_state.m_lt, vis_state.v_lt, lr,
                     vis_state.beta1, vis_state.beta2, vis_state.eps, vis_state.t);
  visual.weight *= (1.0 - lr * cfg.weight_decay);
  audio.weight *= (1.0 - lr * cfg.weight_decay);
  visual.log_tau = std::clamp(visual.log_tau, kLogTauMin, kLogTauMax);
  audio.log_tau = visual.log_tau;  // shared temperature
  return loss;
}

namespace {

void write_log(const fs::path& path, const std::vector<std::array<double, 4>>& rows) {
  std::ofstream f(path, std::ios::trunc);
  f << "step,lr,loss,tau\n";
  f.precision(17);
  for (const auto& r : rows)
    f << static_cast<long>(r[0]) << "," << r[1] << "," << r[2] << "," << r[3] << "\n";
  if (!f) throw ConfigError("failed to write training log " + path.string());
}

}  // namespace

TrainOutputs train(const Corpus& corpus, const TrainConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  const std::string& id0 = corpus.identities().front();
  const std::string src0 = corpus.sources_of(id0).front();
  const int d_id = corpus.stream(id0, src0, Modality::identity).dim();
  const int d_vis = corpus.stream(id0, src0, Modality::visual).dim();
  const int d_aud = corpus.stream(id0, src0, Modality::audio).dim();

  TrainOutputs out;
  {
    Rng rng(derive_seed(cfg.seed, kTagInitIntra));
    out.intra = init_params(d_id, cfg.d_out, "identity", cfg.tau_init, rng);
  }
  {
    Rng rng(derive_seed(cfg.seed, kTagInitVisual));
    out.visual = init_params(d_vis, cfg.d_out, "visual", cfg.tau_init, rng);
  }
  {
    Rng rng(derive_seed(cfg.seed, kTagInitAudio));
    out.audio = init_params(d_aud, cfg.d_out, "audio", cfg.tau_init, rng);
  }

  // intra run
  {
    AdamState state;
    state.init(out.intra);
    Rng rng(derive_seed(cfg.seed, kTagSampleIntra));
    std::vector<std::array<double, 4>> log;
    log.reserve(cfg.total_steps);
    for (int step = 0; step < cfg.total_steps; ++step) {
      TrainingBatch batch = sample_batch(corpus, cfg, rng);
      const double loss = train_step_intra(out.intra, state, batch, cfg, step);
      log.push_back({static_cast<double>(step), lr_at(step, cfg), loss, out.intra.tau()});
    }
    write_log(out_dir / "train_intra_log.csv", log);
  }

  // cross run (independent of the intra run)
  {
    AdamState vis_state, aud_state;
    vis_state.init(out.visual);
    aud_state.init(out.audio);
    Rng rng(derive_seed(cfg.seed, kTagSampleCross));
    std::vector<std::array<double, 4>> log;
    log.reserve(cfg.total_steps);
    for (int step = 0; step < cfg.total_steps; ++step) {
      TrainingBatch batch = sample_batch(corpus, cfg, rng);
      const double loss =
          train_step_cross(out.visual, out.audio, vis_state, aud_state, batch, cfg, step);
      log.push_back({static_cast<double>(step), lr_at(step, cfg), loss, out.visual.tau()});
    }
    write_log(out_dir / "train_cross_log.csv", log);
  }

  json extras;
  extras["step"] = cfg.total_steps;
  extras["train_cfg"] = cfg.to_json();
  out.intra_checkpoint = out_dir / "intra.ckpt";
  out.cross_visual_checkpoint = out_dir / "cross_visual.ckpt";
  out.cross_audio_checkpoint = out_dir / "cross_audio.ckpt";
  save_checkpoint(out.intra, out.intra_checkpoint, extras);
  save_checkpoint(out.visual, out.cross_visual_checkpoint, extras);
  save_checkpoint(out.audio, out.cross_audio_checkpoint, extras);
  return out;
}

}  // namespace avc

#include "avconsist/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "avconsist/errors.hpp"

namespace avc {

namespace fs = std::filesystem;
using nlohmann::json;

double ModelParams::tau() const { return std::clamp(std::exp(log_tau), 0.01, 1.0); }

void ModelParams::validate() const {
  if (weight.rows() < 1 || weight.cols() < 1) throw DataError("empty weight matrix");
  if (bias.size() != weight.cols()) throw DataError("bias/weight dimension mismatch");
  if (!weight.allFinite() || !bias.allFinite() || !std::isfinite(log_tau))
    throw DataError("non-finite model parameters");
}

ModelParams init_params(int d_in, int d_out, const std::string& role, double tau_init,
                        Rng& rng) {
  if (d_in < 1 || d_out < 1) throw ConfigError("d_in and d_out must be positive");
  if (tau_init < 0.01 || tau_init > 1.0)
    throw ConfigError("tau_init must lie in [0.01, 1.0]");
  ModelParams p;
  p.role = role;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  p.weight.resize(d_in, d_out);
  for (int r = 0; r < d_in; ++r)
    for (int c = 0; c < d_out; ++c) p.weight(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
  p.bias = Eigen::VectorXd::Zero(d_out);
  p.log_tau = std::log(tau_init);
  return p;
}

Eigen::VectorXd aggregate_forward(const Eigen::MatrixXd& window, const ModelParams& params,
                                  ForwardCache* cache) {
  if (window.rows() < 1) throw DataError("window must contain at least one frame");
  if (window.cols() != params.weight.rows())
    throw DataError("window dim does not match aggregator d_in");
  if (!window.allFinite()) throw DataError("non-finite window input");

  Eigen::VectorXd mean = window.colwise().mean().transpose();
  Eigen::VectorXd z = params.weight.transpose() * mean + params.bias;
  const double norm = z.norm();
  if (norm < 1e-8)
    throw DataError("degenerate embedding: pre-normalization norm " + std::to_string(norm));
  Eigen::VectorXd y = z / norm;
  if (cache) {
    cache->mean_in = std::move(mean);
    cache->pre_norm = std::move(z);
    cache->out = y;
    cache->norm = norm;
    cache->num_frames = window.rows();
  }
  return y;
}

AggGrads aggregate_backward(const ForwardCache& cache, const ModelParams& params,
                            const Eigen::VectorXd& grad_out) {
  if (grad_out.size() != cache.out.size())
    throw DataError("grad_out size does not match cached output");
  if (cache.mean_in.size() != params.weight.rows())
    throw DataError("cache does not match params shape");

  // normalization Jacobian: (I - y y^T) / |z|
  Eigen::VectorXd grad_z =
      (grad_out - cache.out * cache.out.dot(grad_out)) / cache.norm;

  AggGrads g;
  g.grad_bias = grad_z;
  g.grad_weight = cache.mean_in * grad_z.transpose();
  Eigen::VectorXd grad_mean = params.weight * grad_z;
  g.grad_window.resize(cache.num_frames, params.weight.rows());
  g.grad_window = (grad_mean / static_cast<double>(cache.num_frames))
                      .transpose()
                      .replicate(cache.num_frames, 1);
  return g;
}

void save_checkpoint(const ModelParams& params, const fs::path& path, const json& extras) {
  params.validate();
  json header = extras;
  header["version"] = 1;
  header["d_in"] = params.d_in();
  header["d_out"] = params.d_out();
  header["role"] = params.role;
  header["log_tau"] = params.log_tau;
  const std::string htext = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  const uint64_t hlen = htext.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  std::vector<float> buf;
  buf.reserve(params.weight.size() + params.bias.size());
  for (int r = 0; r < params.d_in(); ++r)
    for (int c = 0; c < params.d_out(); ++c) buf.push_back(static_cast<float>(params.weight(r, c)));
  for (int c = 0; c < params.d_out(); ++c) buf.push_back(static_cast<float>(params.bias(c)));
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw ConfigError("failed to write checkpoint " + path.string());
}

ModelParams load_checkpoint(const fs::path& path, json* extras) {
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
  std::ifstream f(path, std::ios::binary);
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!f || hlen == 0 || hlen > (1u << 20))
    throw ConfigError("corrupt checkpoint header in " + path.string());
  std::string htext(hlen, '\0');
  f.read(htext.data(), static_cast<std::streamsize>(hlen));
  json header;
  try {
    header = json::parse(htext);
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint header parse error in " + path.string() + ": " + e.what());
  }
  if (header.value("version", 0) != 1)
    throw ConfigError("checkpoint version mismatch in " + path.string());

  ModelParams p;
  const int d_in = header.at("d_in").get<int>();
  const int d_out = header.at("d_out").get<int>();
  p.role = header.at("role").get<std::string>();
  p.log_tau = header.at("log_tau").get<double>();

  std::vector<float> buf(static_cast<size_t>(d_in) * d_out + d_out);
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw ConfigError("checkpoint tensor payload truncated in " + path.string());
  p.weight.resize(d_in, d_out);
  size_t k = 0;
  for (int r = 0; r < d_in; ++r)
    for (int c = 0; c < d_out; ++c) p.weight(r, c) = buf[k++];
  p.bias.resize(d_out);
  for (int c = 0; c < d_out; ++c) p.bias(c) = buf[k++];
  p.validate();
  if (extras) *extras = header;
  return p;
}

}  // namespace avc

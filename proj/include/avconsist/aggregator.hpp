#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>

#include "avconsist/rng.hpp"
#include "json.hpp"

namespace avc {

// Trainable window aggregator: mean-pool over frames, affine map, L2 normalize.
struct ModelParams {
  Eigen::MatrixXd weight;  // d_in x d_out
  Eigen::VectorXd bias;    // d_out
  double log_tau = 0.0;
  std::string role;  // "identity", "visual" or "audio"

  int d_in() const { return static_cast<int>(weight.rows()); }
  int d_out() const { return static_cast<int>(weight.cols()); }

  // temperature, clamped to [0.01, 1.0] at use sites
  double tau() const;
  void validate() const;
};

// fan-in uniform init for weight, zero bias, log_tau = log(tau_init)
ModelParams init_params(int d_in, int d_out, const std::string& role, double tau_init,
                        Rng& rng);

struct ForwardCache {
  Eigen::VectorXd mean_in;   // d_in, mean over window frames
  Eigen::VectorXd pre_norm;  // z = W^T mean + b
  Eigen::VectorXd out;       // y = z / |z|
  double norm = 0.0;
  long num_frames = 0;
};

// Returns the unit embedding; throws DataError when |z| < 1e-8 (degenerate).
Eigen::VectorXd aggregate_forward(const Eigen::MatrixXd& window, const ModelParams& params,
                                  ForwardCache* cache = nullptr);

struct AggGrads {
  Eigen::MatrixXd grad_window;  // F_w x d_in
  Eigen::MatrixXd grad_weight;  // d_in x d_out
  Eigen::VectorXd grad_bias;    // d_out
};

// Gradients of the normalized output contracted with grad_out, including the
// normalization Jacobian (I - y y^T)/|z|.
AggGrads aggregate_backward(const ForwardCache& cache, const ModelParams& params,
                            const Eigen::VectorXd& grad_out);

// Checkpoint file: u64-le header length, JSON header
// {version, d_in, d_out, role, log_tau, ...extras}, then little-endian
// float32 tensors (weight row-major, then bias).
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path,
                     const nlohmann::json& extras = nlohmann::json::object());
ModelParams load_checkpoint(const std::filesystem::path& path,
                            nlohmann::json* extras = nullptr);

}  // namespace avc

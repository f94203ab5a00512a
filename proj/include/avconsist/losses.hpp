#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace avc {

// Identity embeddings for one training batch; row index = i * T + t
// (i = identity, t = source).
struct IntraBatchEmbeddings {
  int num_identities = 0;  // I
  int num_sources = 0;     // T
  Eigen::MatrixXd mu;      // (I*T) x d

  void validate_shapes() const;
  void validate_unit_norm(double tol = 1e-6) const;
};

// Visual/audio embedding pair for one batch, same row layout as above.
struct CrossBatchEmbeddings {
  int num_identities = 0;
  int num_sources = 0;
  Eigen::MatrixXd gamma;  // visual, (I*T) x d
  Eigen::MatrixXd alpha;  // audio,  (I*T) x d

  void validate_shapes() const;
  void validate_unit_norm(double tol = 1e-6) const;
};

// Eq-style cross loss comes in two readings: `symmetric` sums the
// audio-to-video direction over video windows (the standard two-directional
// contrastive form); `paper_literal` reuses the video-to-audio denominator in
// both terms, which makes them identical.
enum class CrossMode { symmetric, paper_literal };

// 4D intra similarity tensor S[t][q][i][j] = <mu_i(t), mu_j(q)>.
struct IntraSimilarity {
  int I = 0, T = 0;
  std::vector<double> values;  // index ((t*T + q)*I + i)*I + j

  double at(int t, int q, int i, int j) const {
    return values[static_cast<size_t>(((t * T + q) * I + i)) * I + j];
  }
};

// Per-identity cross similarity C[i][t][q] = <gamma_i(t), alpha_i(q)>.
struct CrossSimilarity {
  int I = 0, T = 0;
  std::vector<double> values;  // index (i*T + t)*T + q

  double at(int i, int t, int q) const {
    return values[static_cast<size_t>(i * T + t) * T + q];
  }
};

IntraSimilarity intra_similarity(const IntraBatchEmbeddings& batch);
CrossSimilarity cross_similarity(const CrossBatchEmbeddings& batch);

// L = -(1/(I*T^2)) sum_{t,q,i} log softmax_j(<mu_i(t), mu_j(q)>/tau) at j=i.
// Softmaxes use max-subtraction; accumulation in double precision.
// check_unit=false admits off-manifold points (finite-difference probes).
double intra_loss(const IntraBatchEmbeddings& batch, double tau, bool check_unit = true);

double cross_loss(const CrossBatchEmbeddings& batch, double tau,
                  CrossMode mode = CrossMode::symmetric, bool check_unit = true);

struct IntraLossGrads {
  Eigen::MatrixXd grad_mu;  // (I*T) x d
  double grad_log_tau = 0.0;
};

struct CrossLossGrads {
  Eigen::MatrixXd grad_gamma;
  Eigen::MatrixXd grad_alpha;
  double grad_log_tau = 0.0;
};

IntraLossGrads intra_loss_gradients(const IntraBatchEmbeddings& batch, double tau);
CrossLossGrads cross_loss_gradients(const CrossBatchEmbeddings& batch, double tau,
                                    CrossMode mode = CrossMode::symmetric);

// Central-difference check: max over coordinates of
// |analytic - numeric| / max(1e-12, |numeric|).
double finite_difference_check(const std::function<double(const Eigen::VectorXd&)>& f,
                               const Eigen::VectorXd& point,
                               const Eigen::VectorXd& analytic_grad, double h);

}  // namespace avc

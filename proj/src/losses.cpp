#include "avconsist/losses.hpp"

#include <cmath>
#include <string>

#include "avconsist/errors.hpp"

namespace avc {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0)) throw DataError("tau must be positive, got " + std::to_string(tau));
}

void check_rows_unit(const Eigen::MatrixXd& m, double tol, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    if (std::abs(m.row(r).norm() - 1.0) > tol)
      throw DataError(std::string(what) + " row " + std::to_string(r) + " is not unit-norm");
}

}  // namespace

void IntraBatchEmbeddings::validate_shapes() const {
  if (num_identities < 1 || num_sources < 1)
    throw DataError("batch needs I >= 1 and T >= 1");
  if (mu.rows() != static_cast<Eigen::Index>(num_identities) * num_sources || mu.cols() < 1)
    throw DataError("mu must be (I*T) x d");
  if (!mu.allFinite()) throw DataError("non-finite embedding in mu");
}

void IntraBatchEmbeddings::validate_unit_norm(double tol) const {
  check_rows_unit(mu, tol, "mu");
}

void CrossBatchEmbeddings::validate_shapes() const {
  if (num_identities < 1 || num_sources < 1)
    throw DataError("batch needs I >= 1 and T >= 1");
  const Eigen::Index n = static_cast<Eigen::Index>(num_identities) * num_sources;
  if (gamma.rows() != n || alpha.rows() != n || gamma.cols() < 1)
    throw DataError("gamma/alpha must be (I*T) x d");
  if (gamma.cols() != alpha.cols())
    throw DataError("gamma/alpha dimension mismatch: " + std::to_string(gamma.cols()) +
                    " vs " + std::to_string(alpha.cols()));
  if (!gamma.allFinite() || !alpha.allFinite())
    throw DataError("non-finite embedding in gamma/alpha");
}

void CrossBatchEmbeddings::validate_unit_norm(double tol) const {
  check_rows_unit(gamma, tol, "gamma");
  check_rows_unit(alpha, tol, "alpha");
}

IntraSimilarity intra_similarity(const IntraBatchEmbeddings& batch) {
  batch.validate_shapes();
  const int I = batch.num_identities, T = batch.num_sources;
  Eigen::MatrixXd S = batch.mu * batch.mu.transpose();
  IntraSimilarity sim;
  sim.I = I;
  sim.T = T;
  sim.values.resize(static_cast<size_t>(I) * I * T * T);
  for (int t = 0; t < T; ++t)
    for (int q = 0; q < T; ++q)
      for (int i = 0; i < I; ++i)
        for (int j = 0; j < I; ++j)
          sim.values[static_cast<size_t>(((t * T + q) * I + i)) * I + j] =
              S(i * T + t, j * T + q);
  return sim;
}

CrossSimilarity cross_similarity(const CrossBatchEmbeddings& batch) {
  batch.validate_shapes();
  const int I = batch.num_identities, T = batch.num_sources;
  CrossSimilarity sim;
  sim.I = I;
  sim.T = T;
  sim.values.resize(static_cast<size_t>(I) * T * T);
  for (int i = 0; i < I; ++i) {
    for (int t = 0; t < T; ++t)
      for (int q = 0; q < T; ++q)
        sim.values[static_cast<size_t>(i * T + t) * T + q] =
            batch.gamma.row(i * T + t).dot(batch.alpha.row(i * T + q));
  }
  return sim;
}

double intra_loss(const IntraBatchEmbeddings& batch, double tau, bool check_unit) {
  batch.validate_shapes();
  check_tau(tau);
  if (check_unit) batch.validate_unit_norm();
  const int I = batch.num_identities, T = batch.num_sources;
  Eigen::MatrixXd S = batch.mu * batch.mu.transpose();

  double acc = 0.0;
  std::vector<double> z(I);
  for (int t = 0; t < T; ++t) {
    for (int q = 0; q < T; ++q) {
      for (int i = 0; i < I; ++i) {
        double zmax = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < I; ++j) {
          z[j] = S(i * T + t, j * T + q) / tau;
          zmax = std::max(zmax, z[j]);
        }
        double denom = 0.0;
        for (int j = 0; j < I; ++j) denom += std::exp(z[j] - zmax);
        acc += (z[i] - zmax) - std::log(denom);
      }
    }
  }
  return -acc / (static_cast<double>(I) * T * T);
}

double cross_loss(const CrossBatchEmbeddings& batch, double tau, CrossMode mode,
                  bool check_unit) {
  batch.validate_shapes();
  check_tau(tau);
  if (check_unit) batch.validate_unit_norm();
  const int I = batch.num_identities, T = batch.num_sources;

  double acc = 0.0;
  for (int i = 0; i < I; ++i) {
    Eigen::MatrixXd Z(T, T);  // Z(t,q) = <gamma_i(t), alpha_i(q)> / tau
    for (int t = 0; t < T; ++t)
      for (int q = 0; q < T; ++q)
        Z(t, q) = batch.gamma.row(i * T + t).dot(batch.alpha.row(i * T + q)) / tau;

    for (int t = 0; t < T; ++t) {
      const double row_max = Z.row(t).maxCoeff();
      double row_denom = 0.0;
      for (int q = 0; q < T; ++q) row_denom += std::exp(Z(t, q) - row_max);
      const double term_va = (Z(t, t) - row_max) - std::log(row_denom);
      acc += term_va;
      if (mode == CrossMode::paper_literal) {
        acc += term_va;  // printed form reuses the same denominator; terms coincide
      } else {
        const double col_max = Z.col(t).maxCoeff();
        double col_denom = 0.0;
        for (int q = 0; q < T; ++q) col_denom += std::exp(Z(q, t) - col_max);
        acc += (Z(t, t) - col_max) - std::log(col_denom);
      }
    }
  }
  return -acc / (static_cast<double>(I) * T);
}

IntraLossGrads intra_loss_gradients(const IntraBatchEmbeddings& batch, double tau) {
  batch.validate_shapes();
  check_tau(tau);
  const int I = batch.num_identities, T = batch.num_sources;
  Eigen::MatrixXd S = batch.mu * batch.mu.transpose();
  const double scale = 1.0 / (static_cast<double>(I) * T * T);

  IntraLossGrads g;
  g.grad_mu = Eigen::MatrixXd::Zero(batch.mu.rows(), batch.mu.cols());
  g.grad_log_tau = 0.0;

  std::vector<double> z(I), p(I);
  for (int t = 0; t < T; ++t) {
    for (int q = 0; q < T; ++q) {
      for (int i = 0; i < I; ++i) {
        double zmax = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < I; ++j) {
          z[j] = S(i * T + t, j * T + q) / tau;
          zmax = std::max(zmax, z[j]);
        }
        double denom = 0.0;
        for (int j = 0; j < I; ++j) {
          p[j] = std::exp(z[j] - zmax);
          denom += p[j];
        }
        for (int j = 0; j < I; ++j) p[j] /= denom;

        for (int j = 0; j < I; ++j) {
          const double dL_dz = -scale * ((i == j ? 1.0 : 0.0) - p[j]);
          const double dL_ds = dL_dz / tau;
          g.grad_mu.row(i * T + t) += dL_ds * batch.mu.row(j * T + q);
          g.grad_mu.row(j * T + q) += dL_ds * batch.mu.row(i * T + t);
          g.grad_log_tau += dL_dz * (-z[j]);  // z = s/tau, dz/dlog_tau = -z
        }
      }
    }
  }
  return g;
}

CrossLossGrads cross_loss_gradients(const CrossBatchEmbeddings& batch, double tau,
                                    CrossMode mode) {
  batch.validate_shapes();
  check_tau(tau);
  const int I = batch.num_identities, T = batch.num_sources;
  const double scale = 1.0 / (static_cast<double>(I) * T);

  CrossLossGrads g;
  g.grad_gamma = Eigen::MatrixXd::Zero(batch.gamma.rows(), batch.gamma.cols());
  g.grad_alpha = Eigen::MatrixXd::Zero(batch.alpha.rows(), batch.alpha.cols());
  g.grad_log_tau = 0.0;

  for (int i = 0; i < I; ++i) {
    Eigen::MatrixXd Z(T, T);
    for (int t = 0; t < T; ++t)
      for (int q = 0; q < T; ++q)
        Z(t, q) = batch.gamma.row(i * T + t).dot(batch.alpha.row(i * T + q)) / tau;

    // row softmaxes (video -> audio) and column softmaxes (audio -> video)
    Eigen::MatrixXd p_row(T, T), p_col(T, T);
    for (int t = 0; t < T; ++t) {
      const double m = Z.row(t).maxCoeff();
      Eigen::ArrayXd e = (Z.row(t).transpose().array() - m).exp();
      p_row.row(t) = (e / e.sum()).matrix().transpose();
    }
    for (int q = 0; q < T; ++q) {
      const double m = Z.col(q).maxCoeff();
      Eigen::ArrayXd e = (Z.col(q).array() - m).exp();
      p_col.col(q) = (e / e.sum()).matrix();
    }

    for (int t = 0; t < T; ++t) {
      for (int q = 0; q < T; ++q) {
        const double delta = (t == q) ? 1.0 : 0.0;
        double dacc_dZ;  // derivative of the summed log terms wrt Z(t,q)
        if (mode == CrossMode::paper_literal) {
          dacc_dZ = 2.0 * (delta - p_row(t, q));
        } else {
          dacc_dZ = (delta - p_row(t, q)) + (delta - p_col(t, q));
        }
        const double dL_dZ = -scale * dacc_dZ;
        g.grad_gamma.row(i * T + t) += (dL_dZ / tau) * batch.alpha.row(i * T + q);
        g.grad_alpha.row(i * T + q) += (dL_dZ / tau) * batch.gamma.row(i * T + t);
        g.grad_log_tau += dL_dZ * (-Z(t, q));
      }
    }
  }
  return g;
}

double finite_difference_check(const std::function<double(const Eigen::VectorXd&)>& f,
                               const Eigen::VectorXd& point,
                               const Eigen::VectorXd& analytic_grad, double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step h must be positive");
  if (analytic_grad.size() != point.size())
    throw DataError("analytic gradient size does not match point");

  double max_rel = 0.0;
  Eigen::VectorXd x = point;
  for (Eigen::Index k = 0; k < point.size(); ++k) {
    x(k) = point(k) + h;
    const double fp = f(x);
    x(k) = point(k) - h;
    const double fm = f(x);
    x(k) = point(k);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw DataError("non-finite loss at perturbed point, coordinate " + std::to_string(k));
    const double numeric = (fp - fm) / (2.0 * h);
    const double rel =
        std::abs(analytic_grad(k) - numeric) / std::max(1e-12, std::abs(numeric));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace avc

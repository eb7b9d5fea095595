#include "dualfilter/dual_control.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace dualfilter {

Matrix pseudo_inverse(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  const double top = sigma.size() > 0 ? sigma[0] : 0.0;
  const double cutoff = std::max(kControlSingularity * top, kControlSingularity);
  Vector inv = Vector::Zero(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma[i] > cutoff) inv[i] = 1.0 / sigma[i];
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

namespace {

void check_shapes(const Vector& y, const Matrix& v, const Vector& rho,
                  const MomentOperators& moments) {
  const int d = moments.num_states();
  if (y.size() != d || rho.size() != d || v.rows() != moments.m() ||
      v.cols() != d) {
    throw Error(ErrorCode::DimensionMismatch, "phi: shapes disagree with moments");
  }
}

// rho((c - rho(c)) y)
Vector centered_covariance(const Vector& y, const Vector& rho,
                           const MomentOperators& moments) {
  const Vector rho_c = moments.c * rho;
  return moments.c * rho.cwiseProduct(y) - rho_c * rho.dot(y);
}

}  // namespace

Vector phi_general(const Vector& pre_control, const Matrix& v, const Vector& rho,
                   const MomentOperators& moments) {
  check_shapes(pre_control, v, rho, moments);
  const int m = moments.m();
  const Vector rho_c = moments.c * rho;
  const double p0 = rho.dot(moments.c0);

  // Substituting y = g + c^T (u + v) turns the condition into M u = -b with
  // M = rho(R + c c^T) - rho(c) rho(c)^T.
  Matrix gram = p0 * (Matrix::Identity(m, m) + Matrix::Ones(m, m));
  gram.diagonal() += rho_c;
  gram.noalias() -= rho_c * rho_c.transpose();

  // rho((R + c c^T) v) - rho(c) rho(c^T v)
  Vector rv = Vector::Zero(m);
  double rho_cv = 0.0;
  for (int x = 0; x < moments.num_states(); ++x) {
    if (rho[x] == 0.0) continue;
    const auto vx = v.col(x);
    const auto cx = moments.c.col(x);
    rv += rho[x] * (cx.cwiseProduct(vx) +
                    moments.c0[x] * (vx.array() + vx.sum()).matrix());
    rho_cv += rho[x] * cx.dot(vx);
  }
  const Vector rhs = centered_covariance(pre_control, rho, moments) + rv -
                     rho_c * rho_cv;
  return -pseudo_inverse(gram) * rhs;
}

Vector phi_feedback(const Vector& y, const Matrix& v, const Vector& rho,
                    const MomentOperators& moments) {
  check_shapes(y, v, rho, moments);
  Vector rho_rv = Vector::Zero(moments.m());
  for (int x = 0; x < moments.num_states(); ++x) {
    if (rho[x] != 0.0) rho_rv += rho[x] * (moments.r[x] * v.col(x));
  }
  return -pseudo_inverse(moments.averaged_r(rho)) *
         (centered_covariance(y, rho, moments) + rho_rv);
}

double optimal_control_binary(const Vector& rho, const Vector& g,
                              const Vector& v, const Vector& c) {
  if (g.size() != rho.size() || v.size() != rho.size() ||
      c.size() != rho.size()) {
    throw Error(ErrorCode::DimensionMismatch, "binary control: lengths differ");
  }
  const double rho_c = rho.dot(c);
  const double denom = 1.0 - rho_c * rho_c;
  if (std::abs(denom) <= kControlSingularity) return 0.0;
  const double gc = rho.dot(g.cwiseProduct(c)) - rho.dot(g) * rho_c;
  const double vc = rho.dot(v) - rho.dot(v.cwiseProduct(c)) * rho_c;
  return -(gc + vc) / denom;
}

Vector binary_control_weights(const Vector& rho, const Vector& c) {
  if (c.size() != rho.size()) {
    throw Error(ErrorCode::DimensionMismatch, "binary control: lengths differ");
  }
  const double rho_c = rho.dot(c);
  const double denom = 1.0 - rho_c * rho_c;
  if (std::abs(denom) <= kControlSingularity) return Vector::Zero(rho.size());
  return -(rho.cwiseProduct(c) - rho_c * rho) / denom;
}

RowVector optimal_control_binary(const Vector& rho, const Matrix& g,
                                 const Vector& c) {
  if (g.rows() != rho.size()) {
    throw Error(ErrorCode::DimensionMismatch, "binary control: lengths differ");
  }
  return binary_control_weights(rho, c).transpose() * g;
}

double corollary5_closed_form(const HmmModel& model, const Vector& f_plus,
                              const Vector& f_minus) {
  if (model.m() != 1) {
    throw Error(ErrorCode::NotBinary, "closed form requires m = 1");
  }
  const int d = model.num_states();
  if (f_plus.size() != d || f_minus.size() != d) {
    throw Error(ErrorCode::DimensionMismatch, "terminal functions must have length d");
  }
  const Vector c = model.emission().col(1) - model.emission().col(0);
  const Vector mean_part = model.transition() * (0.5 * (f_plus + f_minus));
  const Vector v0 = model.transition() * (0.5 * (f_plus - f_minus));
  return optimal_control_binary(model.prior(), mean_part, v0, c);
}

}  // namespace dualfilter

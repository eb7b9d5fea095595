#include "dualfilter/token_geometry.hpp"

#include <algorithm>
#include <string>

namespace dualfilter {

Vector encode(Token z, int m) {
  if (m < 1 || z < 0 || z > m) {
    throw Error(ErrorCode::TokenOutOfRange,
                "token " + std::to_string(z) + " with m = " + std::to_string(m));
  }
  if (z == 0) return Vector::Constant(m, -1.0);
  Vector e = Vector::Zero(m);
  e[z - 1] = 1.0;
  return e;
}

double dot_encoded(const Vector& u, Token z) {
  return z == 0 ? -u.sum() : u[z - 1];
}

Decomposition decompose(const Vector& s) {
  if (s.size() < 2) {
    throw Error(ErrorCode::DimensionMismatch, "need at least two tokens");
  }
  const int m = static_cast<int>(s.size()) - 1;
  Decomposition out;
  out.mean = s.mean();
  out.tilde = s.tail(m).array() - out.mean;
  return out;
}

Matrix MomentOperators::averaged_r(const Vector& rho) const {
  Matrix out = Matrix::Zero(m(), m());
  for (int x = 0; x < num_states(); ++x) {
    if (rho[x] != 0.0) out += rho[x] * r[x];
  }
  return out;
}

MomentOperators build_moments(const HmmModel& model) {
  const int d = model.num_states();
  const int m = model.m();
  const Matrix& emission = model.emission();
  MomentOperators out;
  out.c.resize(m, d);
  out.c0 = emission.col(0);
  out.r.reserve(d);
  const Matrix ones = Matrix::Ones(m, m);
  for (int x = 0; x < d; ++x) {
    const Vector cx =
        emission.row(x).tail(m).transpose().array() - emission(x, 0);
    out.c.col(x) = cx;
    Matrix r = emission(x, 0) * (Matrix::Identity(m, m) + ones);
    r.diagonal() += cx;
    r.noalias() -= cx * cx.transpose();
    out.r.push_back(std::move(r));
  }
  return out;
}

Vector gamma_apply(const Matrix& a, const Vector& f) {
  if (a.cols() != f.size()) {
    throw Error(ErrorCode::DimensionMismatch, "A and f disagree");
  }
  const Vector af = a * f;
  return a * f.cwiseAbs2() - af.cwiseAbs2();
}

double variance_bracket(const Vector& u, const Vector& q) {
  if (q.size() != u.size() + 1) {
    throw Error(ErrorCode::DimensionMismatch, "q must have length m+1");
  }
  const int m = static_cast<int>(u.size());
  const double neg_sum = -u.sum();
  const double second =
      q[0] * neg_sum * neg_sum + q.tail(m).dot(u.cwiseAbs2());
  const double first = q[0] * neg_sum + q.tail(m).dot(u);
  return std::max(0.0, second - first * first);
}

Vector binary_reduce(const HmmModel& model, Token z) {
  model.check_token(z);
  return 2.0 * model.emission().col(z).array() - 1.0;
}

}  // namespace dualfilter

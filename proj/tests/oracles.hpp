#pragma once

// Reference solutions computed independently of the library code paths.

#include <Eigen/Dense>

namespace probekit::testing {

/// Plain gradient descent on sum (w.x + b - y)^2 + lambda |w|^2 with step 1/L.
inline void ridge_by_descent(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                             Eigen::VectorXd& w, double& b) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Eigen::MatrixXd a(n, d + 1);
  a << x, Eigen::VectorXd::Ones(n);
  Eigen::MatrixXd hessian = 2.0 * a.transpose() * a;
  hessian.topLeftCorner(d, d).diagonal().array() += 2.0 * lambda;
  const double lipschitz = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(hessian)
                               .eigenvalues()
                               .maxCoeff();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);
  for (int it = 0; it < 200000; ++it) {
    Eigen::VectorXd grad = 2.0 * a.transpose() * (a * theta - y);
    grad.head(d) += 2.0 * lambda * theta.head(d);
    theta -= grad / lipschitz;
    if (grad.norm() < 1e-13) break;
  }
  w = theta.head(d);
  b = theta[d];
}

}  // namespace probekit::testing

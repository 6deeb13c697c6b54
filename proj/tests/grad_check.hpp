#ifndef FAIRGO_TESTS_GRAD_CHECK_HPP
#define FAIRGO_TESTS_GRAD_CHECK_HPP

#include "fairgo/nn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace fairgo::testing {

/// Central finite-difference check of one parameter block. `loss` must
/// recompute the scalar objective from the current contents of `param`;
/// `analytic` holds the gradient claimed for `param` at its current value.
/// Returns the worst relative error over all entries.
inline double fd_max_rel_err(const std::function<double()>& loss,
                             Eigen::Ref<nn::Matrix> param,
                             const nn::Matrix& analytic, double eps = 1e-5) {
  double worst = 0.0;
  for (Eigen::Index c = 0; c < param.cols(); ++c) {
    for (Eigen::Index r = 0; r < param.rows(); ++r) {
      double saved = param(r, c);
      param(r, c) = saved + eps;
      double up = loss();
      param(r, c) = saved - eps;
      double down = loss();
      param(r, c) = saved;
      double fd = (up - down) / (2.0 * eps);
      double g = analytic(r, c);
      double denom = std::max({1.0, std::abs(fd), std::abs(g)});
      worst = std::max(worst, std::abs(fd - g) / denom);
    }
  }
  return worst;
}

/// Checks every weight and bias of an Mlp against `grads`.
inline double fd_check_mlp(const std::function<double()>& loss, nn::Mlp& net,
                           const nn::MlpGrads& grads, double eps = 1e-5) {
  double worst = 0.0;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    worst = std::max(worst,
                     fd_max_rel_err(loss, net.layers()[l].weight, grads[l].weight, eps));
    nn::Matrix bias_grad = grads[l].bias;
    worst = std::max(worst,
                     fd_max_rel_err(loss, net.layers()[l].bias, bias_grad, eps));
  }
  return worst;
}

} // namespace fairgo::testing

#endif

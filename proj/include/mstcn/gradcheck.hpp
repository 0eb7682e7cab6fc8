#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mstcn/tensor.hpp"

namespace mstcn {

// Central-difference verification of reverse-mode gradients. Runs in double
// precision; float is too noisy for the 1e-5 target. `f` must map the leaf
// tensors to a scalar, recording on the given tape when non-null.
using ScalarFn = std::function<Tensor<double>(Tape<double>*,
                                              std::vector<Tensor<double>>&)>;

inline double finite_difference_check(const ScalarFn& f,
                                      std::vector<Tensor<double>> inputs,
                                      double eps = 1e-5) {
  for (auto& in : inputs) in.set_requires_grad(true);

  Tape<double> tape;
  Tensor<double> loss = f(&tape, inputs);
  if (loss.size() != 1)
    throw std::invalid_argument("finite_difference_check requires scalar f");
  tape.backward(loss);

  double max_err = 0.0;
  for (auto& in : inputs) {
    for (std::int64_t i = 0; i < in.size(); ++i) {
      const double analytic = in.has_grad() ? in.grad()[i] : 0.0;
      const double orig = in.at(i);
      in.at(i) = orig + eps;
      const double fp = f(nullptr, inputs).at(0);
      in.at(i) = orig - eps;
      const double fm = f(nullptr, inputs).at(0);
      in.at(i) = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double err =
          std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      max_err = std::max(max_err, err);
    }
    in.clear_grad();
  }
  return max_err;
}

}  // namespace mstcn

#pragma once

#include <functional>
#include <vector>

#include "tokidx/backbone.hpp"
#include "tokidx/tensor.hpp"

namespace tokidx {

// Central-difference gradient verification. `eval` computes the scalar
// objective from the current contents of `params` (which are perturbed in
// place and restored). `analytic` holds the gradients under test, aligned
// with `params`; an empty tensor means an all-zero gradient. Returns the
// maximum over coordinates of
//   |analytic - central| / (|analytic| + |central| + 1e-12).
// Throws if the objective evaluates to a non-finite value.
double grad_check(const std::function<double()>& eval, const std::vector<Tensor*>& params,
                  const std::vector<Tensor>& analytic, double step);

// Convenience wrapper for a whole model: runs one forward/backward to get
// analytic gradients, then checks every parameter with routing selections
// frozen at the base point.
double model_grad_check(Model& model, std::span<const int> tokens, double step);

}  // namespace tokidx

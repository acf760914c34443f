#include "tokidx/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace tokidx {

double grad_check(const std::function<double()>& eval, const std::vector<Tensor*>& params,
                  const std::vector<Tensor>& analytic, double step) {
  if (params.size() != analytic.size())
    throw std::invalid_argument("grad_check: params/analytic size mismatch");
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& theta = *params[pi];
    const Tensor& grad = analytic[pi];
    if (grad.size() != 0 && !grad.same_shape(theta))
      throw std::invalid_argument("grad_check: gradient shape mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta[i];
      theta[i] = saved + step;
      const double f_plus = eval();
      theta[i] = saved - step;
      const double f_minus = eval();
      theta[i] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
        throw std::runtime_error("grad_check: objective is not finite");
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double a = grad.size() == 0 ? 0.0 : grad[i];
      const double rel =
          std::fabs(a - numeric) / (std::fabs(a) + std::fabs(numeric) + 1e-12);
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

double model_grad_check(Model& model, std::span<const int> tokens, double step) {
  // Base point: record routing and collect analytic gradients.
  RoutingTrace trace;
  Graph graph;
  ForwardOut out = model.forward(graph, tokens, &trace);
  graph.backward(out.objective);

  std::vector<Tensor*> params;
  std::vector<Tensor> analytic;
  params.reserve(model.params().size());
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    params.push_back(&model.params()[i].value);
    analytic.push_back(graph.grad(out.param_nodes[i]));
  }

  trace.recording = false;
  auto eval = [&]() {
    trace.cursor = 0;
    Graph g2;
    ForwardOut o = model.forward(g2, tokens, &trace);
    return g2.value(o.objective)[0];
  };
  return grad_check(eval, params, analytic, step);
}

}  // namespace tokidx

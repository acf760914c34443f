#include "tokidx/scaling.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace tokidx::scaling {

void ScalingParams::validate() const {
  if (!(A > 0.0) || !(B > 0.0) || !(alpha > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("ScalingParams: A, B, alpha, beta must be strictly positive");
}

void DiscountConfig::validate() const {
  if (eta < 0.0) throw std::invalid_argument("DiscountConfig: eta must be non-negative");
  if (!(rho > 0.0) || rho > 1.0)
    throw std::invalid_argument("DiscountConfig: rho must be in (0, 1]");
  if (gamma_hat < 0.0)
    throw std::invalid_argument("DiscountConfig: gamma_hat must be non-negative");
}

double kaplan_loss(const ScalingParams& p, double n_c, double d_tokens) {
  p.validate();
  if (!(n_c > 0.0) || !(d_tokens > 0.0))
    throw std::invalid_argument("kaplan_loss: N_c and D must be positive");
  const double capacity = std::pow(p.A / n_c, p.alpha / p.beta);
  return std::pow(capacity + p.B / d_tokens, p.beta);
}

double effective_params(double n_c, const DiscountConfig& cfg) {
  if (!(n_c > 0.0)) throw std::invalid_argument("effective_params: N_c must be positive");
  return n_c * (1.0 + cfg.eta * cfg.gamma_hat);
}

std::vector<std::pair<double, double>> isoflop_sweep(const ScalingParams& p, double budget,
                                                     std::span<const double> n_c_grid) {
  if (n_c_grid.empty()) throw std::invalid_argument("isoflop_sweep: empty grid");
  if (!(budget > 0.0)) throw std::invalid_argument("isoflop_sweep: budget must be positive");
  std::vector<std::pair<double, double>> out;
  out.reserve(n_c_grid.size());
  for (double n_c : n_c_grid) {
    if (!(n_c > 0.0)) throw std::invalid_argument("isoflop_sweep: grid values must be positive");
    const double d_tokens = budget / (6.0 * n_c);
    out.emplace_back(n_c, kaplan_loss(p, n_c, d_tokens));
  }
  return out;
}

double isoflop_optimal_nc(const ScalingParams& p, double budget) {
  // d/dN of (A/N)^r + 6 B N / C vanishes at
  //   N* = (r A^r C / (6B))^(1/(1+r)),   r = alpha/beta.
  const double r = p.alpha / p.beta;
  const double log_n = (std::log(r) + r * std::log(p.A) + std::log(budget / (6.0 * p.B))) /
                       (1.0 + r);
  return std::exp(log_n);
}

ValleyFit quadratic_valley_fit(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3)
    throw std::invalid_argument("quadratic_valley_fit: need at least 3 points");
  // Normal equations for y = a z^2 + b z + c, accumulated in long double and
  // centered on the mean abscissa for conditioning.
  long double zbar = 0.0L;
  for (const auto& [z, y] : points) zbar += z;
  zbar /= static_cast<long double>(points.size());

  long double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  long double t0 = 0, t1 = 0, t2 = 0;
  for (const auto& [z_raw, y] : points) {
    const long double z = z_raw - zbar;
    const long double z2 = z * z;
    s0 += 1;
    s1 += z;
    s2 += z2;
    s3 += z2 * z;
    s4 += z2 * z2;
    t0 += y;
    t1 += y * z;
    t2 += y * z2;
  }
  // Solve the 3x3 system [[s4,s3,s2],[s3,s2,s1],[s2,s1,s0]] (a,b,c) = (t2,t1,t0).
  std::array<std::array<long double, 4>, 3> m = {{{s4, s3, s2, t2},
                                                  {s3, s2, s1, t1},
                                                  {s2, s1, s0, t0}}};
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::fabs(static_cast<double>(m[r][col])) >
          std::fabs(static_cast<double>(m[pivot][col])))
        pivot = r;
    std::swap(m[col], m[pivot]);
    if (m[col][col] == 0.0L)
      throw std::domain_error("quadratic_valley_fit: degenerate point set");
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const long double factor = m[r][col] / m[col][col];
      for (int c = col; c < 4; ++c) m[r][c] -= factor * m[col][c];
    }
  }
  const double a = static_cast<double>(m[0][3] / m[0][0]);
  const double b = static_cast<double>(m[1][3] / m[1][1]);
  const double c = static_cast<double>(m[2][3] / m[2][2]);
  if (!(a > 0.0))
    throw std::domain_error("quadratic_valley_fit: fitted quadratic is not convex");
  const double z_vertex = -b / (2.0 * a);
  ValleyFit fit;
  fit.nc_star = z_vertex + static_cast<double>(zbar);
  fit.l_star = c - b * b / (4.0 * a);
  return fit;
}

LogFit loglog_frontier_fit(std::span<const FrontierPoint> points) {
  if (points.size() < 2)
    throw std::invalid_argument("loglog_frontier_fit: need at least 2 points");
  bool distinct = false;
  for (std::size_t i = 1; i < points.size(); ++i)
    distinct |= points[i].compute != points[0].compute;
  if (!distinct)
    throw std::invalid_argument("loglog_frontier_fit: need at least 2 distinct budgets");

  const std::size_t n = points.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(points[i].compute > 0.0) || !(points[i].loss > 0.0))
      throw std::invalid_argument("loglog_frontier_fit: budgets and losses must be positive");
    x[i] = std::log10(points[i].compute);
    y[i] = std::log2(points[i].loss);
  }
  double xbar = 0.0, ybar = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    xbar += x[i];
    ybar += y[i];
  }
  xbar /= static_cast<double>(n);
  ybar /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - xbar) * (y[i] - ybar);
    sxx += (x[i] - xbar) * (x[i] - xbar);
    syy += (y[i] - ybar) * (y[i] - ybar);
  }
  LogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = ybar - fit.slope * xbar;
  if (syy == 0.0) {
    fit.r_squared = 1.0;
  } else {
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double resid = y[i] - (fit.slope * x[i] + fit.intercept);
      ss_res += resid * resid;
    }
    fit.r_squared = 1.0 - ss_res / syy;
  }
  return fit;
}

SavingResult compute_saving(double alpha_slope, double delta_beta) {
  if (!(alpha_slope < 0.0))
    throw std::invalid_argument("compute_saving: slope must be negative");
  SavingResult out;
  out.ratio = std::pow(10.0, delta_beta / alpha_slope);
  out.saving = 1.0 - out.ratio;
  return out;
}

double frontier_shift_predict(const ScalingParams& p, const DiscountConfig& cfg) {
  p.validate();
  cfg.validate();
  const double exponent = -(p.alpha * p.beta) / (p.alpha + p.beta);
  return std::pow(1.0 + cfg.eta * cfg.gamma_hat, exponent);
}

double minimize_unimodal(const std::function<double(double)>& f, double lo, double hi,
                         double tol) {
  if (!(lo < hi)) throw std::invalid_argument("minimize_unimodal: empty interval");
  constexpr double kInvPhi = 0.6180339887498949;  // 1/phi
  double a = lo, b = hi;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

namespace {

struct BudgetMin {
  double nc_star;
  double loss;
};

// Minimizes [(A/N)^(alpha/beta) + 6BN/C]^beta over N in [A*1e-6, A*1e+6].
BudgetMin minimize_budget_loss(const ScalingParams& p, double budget) {
  const double lo = std::log(p.A * 1e-6);
  const double hi = std::log(p.A * 1e6);
  auto bracket = [&](double t) {
    const double n = std::exp(t);
    return std::pow(p.A / n, p.alpha / p.beta) + 6.0 * p.B * n / budget;
  };
  const double t_star = minimize_unimodal(bracket, lo, hi, 1e-10);
  // A minimizer pinned to either end means the true optimum escaped the
  // search interval.
  if (t_star - lo < 1e-6 || hi - t_star < 1e-6)
    throw std::domain_error("frontier_verify: search bracket does not contain the minimum");
  BudgetMin out;
  out.nc_star = std::exp(t_star);
  out.loss = std::pow(bracket(t_star), p.beta);
  return out;
}

}  // namespace

FrontierVerify frontier_verify(const ScalingParams& p, const DiscountConfig& cfg,
                               double budget) {
  p.validate();
  cfg.validate();
  if (!(budget > 0.0)) throw std::invalid_argument("frontier_verify: budget must be positive");
  const BudgetMin base = minimize_budget_loss(p, budget);
  ScalingParams discounted = p;
  discounted.A = p.A / (1.0 + cfg.eta * cfg.gamma_hat);
  const BudgetMin shifted = minimize_budget_loss(discounted, budget);
  FrontierVerify out;
  out.l_star_base = base.loss;
  out.l_star_discounted = shifted.loss;
  out.ratio = shifted.loss / base.loss;
  out.nc_star_base = base.nc_star;
  out.nc_star_discounted = shifted.nc_star;
  return out;
}

double compute_for_target_loss(const ScalingParams& p, const DiscountConfig& cfg, double target,
                               bool discounted) {
  ScalingParams eff = p;
  if (discounted) eff.A = p.A / (1.0 + cfg.eta * cfg.gamma_hat);
  auto frontier = [&](double log_c) { return minimize_budget_loss(eff, std::exp(log_c)).loss; };
  // The frontier is strictly decreasing in C. Grow the bisection range from a
  // mid-scale seed budget until it straddles the target; extreme budgets push
  // the inner minimization out of its bracket, so stop expanding before that.
  const double step = std::log(10.0);
  double lo = std::log(1e19), hi = lo;
  for (int iter = 0; frontier(lo) < target; ++iter) {
    if (iter >= 30)
      throw std::domain_error("compute_for_target_loss: target below the reachable range");
    lo -= step;
  }
  for (int iter = 0; frontier(hi) > target; ++iter) {
    if (iter >= 30)
      throw std::domain_error("compute_for_target_loss: target above the reachable range");
    hi += step;
  }
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (frontier(mid) > target)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-13) break;
  }
  return std::exp(0.5 * (lo + hi));
}

GammaFit gamma_fit(std::span<const FrontierRow> rows, double alpha, double beta, double eta) {
  if (rows.empty()) throw std::invalid_argument("gamma_fit: need at least one budget row");
  if (!(eta > 0.0)) throw std::invalid_argument("gamma_fit: eta must be positive");
  if (!(alpha > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("gamma_fit: alpha and beta must be positive");
  GammaFit out;
  const double exponent = (alpha + beta) / (alpha * beta);
  double acc = 0.0;
  for (const FrontierRow& row : rows) {
    const double g = (std::pow(row.loss_base / row.loss_variant, exponent) - 1.0) / eta;
    out.per_budget.push_back(g);
    acc += g;
  }
  out.gamma_hat = acc / static_cast<double>(rows.size());
  out.non_positive = out.gamma_hat <= 0.0;
  return out;
}

std::span<const FrontierRow> bundled_frontier() {
  static const FrontierRow kRows[] = {
      {3e18, 2.6537, 2.5981}, {1e19, 2.4569, 2.3999}, {3e19, 2.3065, 2.2521},
      {1e20, 2.1422, 2.0969}, {3e20, 2.0176, 1.9726},
  };
  return kRows;
}

}  // namespace tokidx::scaling

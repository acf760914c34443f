#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

// Scaling-law toolkit: the two-term power-law loss surface, isoFLOPs sweeps
// with quadratic valley fits, the effective-parameter discount for
// token-indexed capacity, frontier-shift prediction with a numeric
// cross-check, and log-log frontier regression.

namespace tokidx::scaling {

// L(N_c, D) = [(A/N_c)^(alpha/beta) + B/D]^beta
struct ScalingParams {
  double A = 0.0;
  double B = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  void validate() const;  // all strictly positive
};

// Token-indexed capacity discount: eta = N_n/N_c, rho = K/n_e, and the fitted
// scalar value gamma_hat of the discount function at this rho.
struct DiscountConfig {
  double eta = 0.0;
  double rho = 1.0;
  double gamma_hat = 0.0;
  void validate() const;
};

struct FrontierPoint {
  double compute = 0.0;  // FLOPs budget C
  double loss = 0.0;     // optimal loss L*
};

// log2(L) = slope * log10(C) + intercept
struct LogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

double kaplan_loss(const ScalingParams& p, double n_c, double d_tokens);

// N_eff = N_c * (1 + eta * gamma_hat)
double effective_params(double n_c, const DiscountConfig& cfg);

// Evaluates the loss along the constraint 6*N_c*D = C for each grid value.
std::vector<std::pair<double, double>> isoflop_sweep(const ScalingParams& p, double budget,
                                                     std::span<const double> n_c_grid);

// Closed-form argmin of the bracketed two-term trade-off at fixed budget.
double isoflop_optimal_nc(const ScalingParams& p, double budget);

struct ValleyFit {
  double nc_star = 0.0;  // vertex location (same log base as the input)
  double l_star = 0.0;   // vertex value
};

// Least-squares quadratic in z = ln(N_c) over (z, L) points; throws
// std::domain_error when the fitted parabola is not convex.
ValleyFit quadratic_valley_fit(std::span<const std::pair<double, double>> points);

// Ordinary least squares of log2(loss) on log10(compute).
LogFit loglog_frontier_fit(std::span<const FrontierPoint> points);

struct SavingResult {
  double ratio = 0.0;   // 10^(delta_beta / alpha_slope)
  double saving = 0.0;  // 1 - ratio
};
SavingResult compute_saving(double alpha_slope, double delta_beta);

// Predicted multiplicative frontier shift (1 + eta*gamma)^(-alpha*beta/(alpha+beta)).
double frontier_shift_predict(const ScalingParams& p, const DiscountConfig& cfg);

struct FrontierVerify {
  double l_star_base = 0.0;
  double l_star_discounted = 0.0;
  double ratio = 0.0;  // discounted / base
  double nc_star_base = 0.0;
  double nc_star_discounted = 0.0;
};

// Numeric minimization of L(N_c; C) over N_c for the base constant A and for
// A/(1+eta*gamma). Golden-section search in ln(N_c) over [A*1e-6, A*1e6] to
// relative tolerance 1e-10; throws if the bracket does not contain the
// minimum.
FrontierVerify frontier_verify(const ScalingParams& p, const DiscountConfig& cfg, double budget);

// Smallest budget whose compute-optimal loss reaches `target` (bisection over
// the numeric frontier). Uses the base constant A when `discounted` is false.
double compute_for_target_loss(const ScalingParams& p, const DiscountConfig& cfg, double target,
                               bool discounted);

struct GammaFit {
  double gamma_hat = 0.0;               // mean over budgets
  std::vector<double> per_budget;
  bool non_positive = false;            // flagged, not an error
};

struct FrontierRow {
  double compute = 0.0;
  double loss_base = 0.0;
  double loss_variant = 0.0;
};

// Inverts the frontier-shift relation per budget:
//   gamma = ((L_base/L_variant)^((alpha+beta)/(alpha*beta)) - 1) / eta
GammaFit gamma_fit(std::span<const FrontierRow> rows, double alpha, double beta, double eta);

// Measured efficient-frontier points for the MoE backbone and its
// token-indexed variant at five log-spaced budgets (the dataset shipped in
// data/moe_frontier.csv).
std::span<const FrontierRow> bundled_frontier();

// Golden-section minimizer for a unimodal function on [lo, hi]; tolerance is
// on the argument. Used by frontier_verify and available to tests.
double minimize_unimodal(const std::function<double(double)>& f, double lo, double hi,
                         double tol);

}  // namespace tokidx::scaling

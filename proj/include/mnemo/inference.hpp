#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mnemo/types.hpp"

namespace mnemo::inference {

using Vector = std::vector<double>;

/// Log density over an unconstrained parameter vector.
///
/// `logp_and_grad(x, grad)` returns the joint log density (priors, likelihood and
/// transform Jacobians) at `x` and writes its gradient into `grad`. Both spans have
/// length `dim`. The callable must be safe to invoke concurrently.
struct DensityModel {
  std::size_t dim = 0;
  std::function<double(std::span<const double>, std::span<double>)> logp_and_grad;
  std::vector<std::string> parameter_names;

  struct Evaluation {
    double logp;
    Vector grad;
  };
  Evaluation evaluate(std::span<const double> x) const;
};

/// Post-warmup output of one chain.
struct ChainResult {
  std::size_t dim = 0;
  std::vector<double> samples;  // row-major, iterations x dim
  std::vector<double> accept_stats;
  std::vector<int> tree_depths;
  std::size_t divergences = 0;
  double step_size = 0.0;
  Vector inverse_metric;

  std::size_t iterations() const { return dim == 0 ? 0 : samples.size() / dim; }
  double at(std::size_t iteration, std::size_t param) const {
    return samples[iteration * dim + param];
  }
  std::vector<double> column(std::size_t param) const;
};

/// Largest fraction of post-warmup divergent transitions a chain may have.
inline constexpr double kMaxDivergenceRate = 0.25;

/// Runs `hyper.chains` independent NUTS chains with windowed warmup (dual-averaging
/// step size plus diagonal metric) and returns only post-warmup draws.
///
/// Deterministic for a fixed seed. Chains run on separate threads when more than one
/// hardware thread is available; results do not depend on scheduling.
///
/// Throws InitializationError when dim is 0 or no finite starting point is found, and
/// SamplingError when a chain exceeds the divergence budget.
std::vector<ChainResult> nuts_sample(const DensityModel& model, const ModelHyperparams& hyper,
                                     std::uint64_t seed);

/// Logit of x together with log|dx/dy| = log x + log(1 - x). Throws DomainError
/// unless 0 < x < 1.
struct LogitResult {
  double value;
  double log_jacobian;
};
LogitResult logit_transform(double x);
double inverse_logit(double y);
/// log(inverse_logit(y)) and log(1 - inverse_logit(y)), stable for large |y|.
double log_inverse_logit(double y);
double log1m_inverse_logit(double y);

/// Worst relative discrepancy between the analytic gradient and central finite
/// differences over `points`. Step per coordinate is 1e-6 * max(1, |x_i|); the
/// error is |analytic - numeric| / max(1, |analytic|, |numeric|).
double check_gradient(const DensityModel& model, const std::vector<Vector>& points);

}  // namespace mnemo::inference

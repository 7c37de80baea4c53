#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <string>
#include <thread>

#include "mnemo/error.hpp"
#include "mnemo/inference.hpp"

namespace mnemo::inference {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxDeltaH = 1000.0;

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

double dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void add_into(Vector& acc, const Vector& v) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

Vector sum(const Vector& a, const Vector& b) {
  Vector out(a);
  add_into(out, b);
  return out;
}

bool no_u_turn(const Vector& p_sharp_minus, const Vector& p_sharp_plus, const Vector& rho) {
  return dot(p_sharp_plus, rho) > 0 && dot(p_sharp_minus, rho) > 0;
}

/// Position, gradient and log density of a phase-space point (momentum kept apart).
struct Point {
  Vector q;
  Vector grad;
  double logp = -kInf;
};

struct PhasePoint {
  Point x;
  Vector p;
};

struct DualAveraging {
  double mu = 0.0;
  double target = 0.8;
  double gamma = 0.05;
  double kappa = 0.75;
  double t0 = 10.0;
  double counter = 0.0;
  double s_bar = 0.0;
  double x_bar = 0.0;

  void restart(double step) {
    mu = std::log(10.0 * step);
    counter = 0.0;
    s_bar = 0.0;
    x_bar = 0.0;
  }

  double learn(double accept_stat) {
    counter += 1.0;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter + t0);
    s_bar = (1.0 - eta) * s_bar + eta * (target - accept_stat);
    const double x = mu - s_bar * std::sqrt(counter) / gamma;
    const double x_eta = std::pow(counter, -kappa);
    x_bar = (1.0 - x_eta) * x_bar + x_eta * x;
    return std::exp(x);
  }

  double final_step() const { return std::exp(x_bar); }
};

/// Running mean/variance for diagonal metric estimation.
struct Welford {
  std::size_t n = 0;
  Vector mean;
  Vector m2;

  explicit Welford(std::size_t dim) : mean(dim, 0.0), m2(dim, 0.0) {}
  void add(const Vector& x) {
    ++n;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / static_cast<double>(n);
      m2[i] += d * (x[i] - mean[i]);
    }
  }
  void reset() {
    n = 0;
    std::fill(mean.begin(), mean.end(), 0.0);
    std::fill(m2.begin(), m2.end(), 0.0);
  }
};

/// Warmup schedule: initial fast buffer, doubling slow windows, terminal fast buffer.
class WindowSchedule {
 public:
  explicit WindowSchedule(int warmup) : warmup_(warmup) {
    if (warmup < 20) {
      adapt_metric_ = false;
      return;
    }
    if (init_buffer_ + base_window_ + term_buffer_ > warmup) {
      init_buffer_ = static_cast<int>(0.15 * warmup);
      term_buffer_ = static_cast<int>(0.1 * warmup);
      base_window_ = warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_end_ = init_buffer_ + window_size_ - 1;
  }

  bool in_window(int counter) const {
    return adapt_metric_ && counter >= init_buffer_ && counter < warmup_ - term_buffer_;
  }
  bool end_of_window(int counter) const {
    return adapt_metric_ && counter == next_window_end_ && counter != warmup_;
  }
  void advance(int counter) {
    if (next_window_end_ == warmup_ - term_buffer_ - 1) return;
    window_size_ *= 2;
    next_window_end_ = counter + window_size_;
    if (next_window_end_ != warmup_ - term_buffer_ - 1) {
      const int boundary = next_window_end_ + 2 * window_size_;
      if (boundary >= warmup_ - term_buffer_) next_window_end_ = warmup_ - term_buffer_ - 1;
    }
  }

 private:
  int warmup_;
  bool adapt_metric_ = true;
  int init_buffer_ = 75;
  int term_buffer_ = 50;
  int base_window_ = 25;
  int window_size_ = 25;
  int next_window_end_ = 0;
};

class Chain {
 public:
  Chain(const DensityModel& model, const ModelHyperparams& hyper, std::uint64_t seed,
        int chain_index)
      : model_(model),
        hyper_(hyper),
        dim_(model.dim),
        inv_metric_(model.dim, 1.0),
        index_(chain_index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chain_index), 0x6e757473u};
    rng_.seed(seq);
  }

  ChainResult run() {
    initialize();
    init_step_size();
    adaptation_.target = hyper_.nuts_target_accept;
    adaptation_.restart(step_);

    WindowSchedule schedule(hyper_.warmup_iters);
    Welford estimator(dim_);
    for (int it = 0; it < hyper_.warmup_iters; ++it) {
      const Transition t = transition();
      step_ = adaptation_.learn(t.accept_stat);
      if (schedule.in_window(it)) estimator.add(current_.q);
      if (schedule.end_of_window(it)) {
        const double n = static_cast<double>(estimator.n);
        for (std::size_t i = 0; i < dim_; ++i) {
          const double var = estimator.n > 1 ? estimator.m2[i] / (n - 1.0) : 1.0;
          inv_metric_[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
        }
        estimator.reset();
        schedule.advance(it);
        init_step_size();
        adaptation_.restart(step_);
      }
    }
    step_ = adaptation_.final_step();

    ChainResult out;
    out.dim = dim_;
    out.samples.reserve(static_cast<std::size_t>(hyper_.sample_iters) * dim_);
    for (int it = 0; it < hyper_.sample_iters; ++it) {
      const Transition t = transition();
      out.samples.insert(out.samples.end(), current_.q.begin(), current_.q.end());
      out.accept_stats.push_back(t.accept_stat);
      out.tree_depths.push_back(t.depth);
      if (t.divergent) ++out.divergences;
    }
    out.step_size = step_;
    out.inverse_metric = inv_metric_;

    const double rate =
        static_cast<double>(out.divergences) / static_cast<double>(hyper_.sample_iters);
    if (rate > kMaxDivergenceRate) {
      throw SamplingError("chain " + std::to_string(index_) + " diverged on " +
                          std::to_string(out.divergences) + " of " +
                          std::to_string(hyper_.sample_iters) + " post-warmup iterations");
    }
    return out;
  }

 private:
  struct Transition {
    double accept_stat = 0.0;
    int depth = 0;
    bool divergent = false;
  };

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }

  void evaluate(Point& x) {
    x.grad.assign(dim_, 0.0);
    x.logp = model_.logp_and_grad(x.q, x.grad);
    if (!std::isfinite(x.logp)) x.logp = -kInf;
  }

  void initialize() {
    std::uniform_real_distribution<double> init(-1.0, 1.0);
    current_.q.assign(dim_, 0.0);
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (auto& v : current_.q) v = init(rng_);
      evaluate(current_);
      const bool grad_ok = std::all_of(current_.grad.begin(), current_.grad.end(),
                                       [](double g) { return std::isfinite(g); });
      if (std::isfinite(current_.logp) && grad_ok) return;
    }
    throw InitializationError("chain " + std::to_string(index_) +
                              ": no finite log density found at initialization");
  }

  Vector sample_momentum() {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector p(dim_);
    for (std::size_t i = 0; i < dim_; ++i) p[i] = normal(rng_) / std::sqrt(inv_metric_[i]);
    return p;
  }

  Vector sharp(const Vector& p) const {
    Vector out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) out[i] = inv_metric_[i] * p[i];
    return out;
  }

  double hamiltonian(const PhasePoint& z) const {
    if (z.x.logp == -kInf) return kInf;
    double kinetic = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) kinetic += inv_metric_[i] * z.p[i] * z.p[i];
    const double h = -z.x.logp + 0.5 * kinetic;
    return std::isnan(h) ? kInf : h;
  }

  void leapfrog(PhasePoint& z, double eps) {
    for (std::size_t i = 0; i < dim_; ++i) z.p[i] += 0.5 * eps * z.x.grad[i];
    for (std::size_t i = 0; i < dim_; ++i) z.x.q[i] += eps * inv_metric_[i] * z.p[i];
    evaluate(z.x);
    if (z.x.logp == -kInf) return;
    for (std::size_t i = 0; i < dim_; ++i) z.p[i] += 0.5 * eps * z.x.grad[i];
  }

  void init_step_size() {
    const Point start = current_;
    PhasePoint z{start, sample_momentum()};
    double h0 = hamiltonian(z);
    leapfrog(z, step_);
    double delta = h0 - hamiltonian(z);
    const int direction = delta > std::log(0.8) ? 1 : -1;
    for (int guard = 0; guard < 200; ++guard) {
      z = PhasePoint{start, sample_momentum()};
      h0 = hamiltonian(z);
      leapfrog(z, step_);
      delta = h0 - hamiltonian(z);
      if (direction == 1 && !(delta > std::log(0.8))) break;
      if (direction == -1 && !(delta < std::log(0.8))) break;
      step_ = direction == 1 ? 2.0 * step_ : 0.5 * step_;
      if (step_ > 1e7 || step_ == 0.0) {
        throw SamplingError("chain " + std::to_string(index_) +
                            ": step size heuristic failed; posterior may be improper");
      }
    }
  }

  struct TreeContext {
    double h0;
    double sign;
    int n_leapfrog = 0;
    double sum_metro_prob = 0.0;
    bool divergent = false;
  };

  bool build_tree(int depth, PhasePoint& z, Point& propose, Vector& p_sharp_beg,
                  Vector& p_sharp_end, Vector& rho, Vector& p_beg, Vector& p_end,
                  double& log_sum_weight, TreeContext& ctx) {
    if (depth == 0) {
      leapfrog(z, ctx.sign * step_);
      ++ctx.n_leapfrog;
      const double h = hamiltonian(z);
      if (h - ctx.h0 > kMaxDeltaH) {
        ctx.divergent = true;
        return false;
      }
      const double delta = ctx.h0 - h;
      log_sum_weight = log_sum_exp(log_sum_weight, delta);
      ctx.sum_metro_prob += delta > 0 ? 1.0 : std::exp(delta);
      propose = z.x;
      add_into(rho, z.p);
      p_sharp_beg = sharp(z.p);
      p_sharp_end = p_sharp_beg;
      p_beg = z.p;
      p_end = z.p;
      return true;
    }

    Vector p_init_end(dim_), p_sharp_init_end(dim_), rho_init(dim_, 0.0);
    double lsw_init = -kInf;
    if (!build_tree(depth - 1, z, propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
                    p_init_end, lsw_init, ctx))
      return false;

    Point propose_final;
    Vector p_final_beg(dim_), p_sharp_final_beg(dim_), rho_final(dim_, 0.0);
    double lsw_final = -kInf;
    if (!build_tree(depth - 1, z, propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                    p_final_beg, p_end, lsw_final, ctx))
      return false;

    const double lsw_subtree = log_sum_exp(lsw_init, lsw_final);
    log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
    if (lsw_final > lsw_subtree || uniform() < std::exp(lsw_final - lsw_subtree))
      propose = std::move(propose_final);

    const Vector rho_subtree = sum(rho_init, rho_final);
    bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
    persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, sum(rho_init, p_final_beg));
    persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, sum(rho_final, p_init_end));
    add_into(rho, rho_subtree);
    return persist;
  }

  Transition transition() {
    PhasePoint z{current_, sample_momentum()};
    TreeContext ctx{hamiltonian(z), 1.0};

    PhasePoint z_fwd = z;
    PhasePoint z_bck = z;
    const Vector p_sharp0 = sharp(z.p);
    Vector p_fwd_fwd = z.p, p_sharp_fwd_fwd = p_sharp0;
    Vector p_fwd_bck = z.p, p_sharp_fwd_bck = p_sharp0;
    Vector p_bck_fwd = z.p, p_sharp_bck_fwd = p_sharp0;
    Vector p_bck_bck = z.p, p_sharp_bck_bck = p_sharp0;
    Vector rho = z.p;
    double log_sum_weight = 0.0;
    Point sample = current_;

    int depth = 0;
    while (depth < hyper_.nuts_max_depth) {
      Vector rho_fwd(dim_, 0.0), rho_bck(dim_, 0.0);
      double lsw_subtree = -kInf;
      Point propose;
      bool valid;
      if (uniform() > 0.5) {
        rho_bck = rho;
        p_bck_fwd = p_fwd_fwd;
        p_sharp_bck_fwd = p_sharp_fwd_fwd;
        ctx.sign = 1.0;
        z = z_fwd;
        valid = build_tree(depth, z, propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd,
                           p_fwd_bck, p_fwd_fwd, lsw_subtree, ctx);
        z_fwd = z;
      } else {
        rho_fwd = rho;
        p_fwd_bck = p_bck_bck;
        p_sharp_fwd_bck = p_sharp_bck_bck;
        ctx.sign = -1.0;
        z = z_bck;
        valid = build_tree(depth, z, propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck,
                           p_bck_fwd, p_bck_bck, lsw_subtree, ctx);
        z_bck = z;
      }
      if (!valid) break;
      ++depth;

      if (lsw_subtree > log_sum_weight || uniform() < std::exp(lsw_subtree - log_sum_weight))
        sample = std::move(propose);
      log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

      rho = sum(rho_bck, rho_fwd);
      bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, sum(rho_bck, p_fwd_bck));
      persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, sum(rho_fwd, p_bck_fwd));
      if (!persist) break;
    }

    current_ = std::move(sample);
    Transition t;
    t.accept_stat = ctx.n_leapfrog > 0 ? ctx.sum_metro_prob / ctx.n_leapfrog : 0.0;
    t.depth = depth;
    t.divergent = ctx.divergent;
    return t;
  }

  const DensityModel& model_;
  const ModelHyperparams& hyper_;
  std::size_t dim_;
  Vector inv_metric_;
  int index_;
  std::mt19937_64 rng_;
  Point current_;
  double step_ = 1.0;
  DualAveraging adaptation_;
};

}  // namespace

DensityModel::Evaluation DensityModel::evaluate(std::span<const double> x) const {
  Evaluation e{0.0, Vector(dim, 0.0)};
  e.logp = logp_and_grad(x, e.grad);
  return e;
}

std::vector<double> ChainResult::column(std::size_t param) const {
  std::vector<double> out(iterations());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i, param);
  return out;
}

std::vector<ChainResult> nuts_sample(const DensityModel& model, const ModelHyperparams& hyper,
                                     std::uint64_t seed) {
  if (model.dim == 0) throw InitializationError("density model has zero dimensions");
  if (!model.logp_and_grad) throw InitializationError("density model has no log density");
  hyper.validate();

  const auto n_chains = static_cast<std::size_t>(hyper.chains);
  std::vector<ChainResult> results(n_chains);
  std::vector<std::exception_ptr> errors(n_chains);
  auto run_one = [&](std::size_t c) {
    try {
      results[c] = Chain(model, hyper, seed, static_cast<int>(c)).run();
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };

  if (std::thread::hardware_concurrency() > 1 && n_chains > 1) {
    std::vector<std::thread> workers;
    workers.reserve(n_chains);
    for (std::size_t c = 0; c < n_chains; ++c) workers.emplace_back(run_one, c);
    for (auto& w : workers) w.join();
  } else {
    for (std::size_t c = 0; c < n_chains; ++c) run_one(c);
  }

  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

LogitResult logit_transform(double x) {
  if (!(x > 0.0 && x < 1.0))
    throw DomainError("logit transform requires 0 < x < 1, got " + std::to_string(x));
  return {std::log(x) - std::log1p(-x), std::log(x) + std::log1p(-x)};
}

double inverse_logit(double y) {
  if (y >= 0) return 1.0 / (1.0 + std::exp(-y));
  const double e = std::exp(y);
  return e / (1.0 + e);
}

double log_inverse_logit(double y) {
  // -softplus(-y)
  return y >= 0 ? -std::log1p(std::exp(-y)) : y - std::log1p(std::exp(y));
}

double log1m_inverse_logit(double y) { return log_inverse_logit(-y); }

double check_gradient(const DensityModel& model, const std::vector<Vector>& points) {
  double worst = 0.0;
  Vector grad(model.dim), scratch(model.dim);
  for (const auto& point : points) {
    Vector x = point;
    model.logp_and_grad(x, grad);
    for (std::size_t i = 0; i < model.dim; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(point[i]));
      x[i] = point[i] + h;
      const double up = model.logp_and_grad(x, scratch);
      x[i] = point[i] - h;
      const double down = model.logp_and_grad(x, scratch);
      x[i] = point[i];
      const double numeric = (up - down) / (2.0 * h);
      const double scale = std::max({1.0, std::abs(grad[i]), std::abs(numeric)});
      worst = std::max(worst, std::abs(grad[i] - numeric) / scale);
    }
  }
  return worst;
}

}  // namespace mnemo::inference

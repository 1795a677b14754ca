#include "qlc/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "qlc/concentration.hpp"

namespace qlc {

namespace {

struct ScenarioView {
  const Eigen::MatrixXd* design = nullptr;  // Psi or X
  const Family* family = nullptr;
  double mu = 1.0;
  const Box* box = nullptr;
  Eigen::VectorXd theta0;
  // canonical value eta_i(theta); identity composition for glm
  std::function<double(double)> compose;

  Eigen::VectorXd eta(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd u = (*design) * theta;
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = compose(u[i]);
    return u;
  }
};

ScenarioView view_of(const SimConfig& config) {
  ScenarioView v;
  if (std::holds_alternative<GlmScenario>(config.scenario)) {
    const auto& sc = std::get<GlmScenario>(config.scenario);
    v.design = &sc.model.design;
    v.family = &sc.model.family;
    v.mu = sc.model.mu;
    v.box = &sc.model.theta_box;
    v.theta0 = sc.theta0;
    v.compose = [](double u) { return u; };
  } else {
    const auto& sc = std::get<SiScenario>(config.scenario);
    v.design = &sc.model.X;
    v.family = &sc.model.family;
    v.mu = sc.model.mu;
    v.box = &sc.model.theta_box;
    v.theta0 = sc.theta0;
    v.compose = [g = sc.model.link.g](double u) { return g(u); };
  }
  return v;
}

const TrueLaw& truth_of(const SimConfig& config, std::optional<TrueLaw>& si_storage) {
  if (std::holds_alternative<GlmScenario>(config.scenario))
    return std::get<GlmScenario>(config.scenario).truth;
  if (!si_storage) {
    const auto& sc = std::get<SiScenario>(config.scenario);
    si_storage = TrueLaw::efc(sc.model.family, sc.model.true_f);
  }
  return *si_storage;
}

double rate_at(const SimConfig& config, const TrueLaw& truth, const Eigen::VectorXd& theta) {
  if (std::holds_alternative<GlmScenario>(config.scenario)) {
    const auto& sc = std::get<GlmScenario>(config.scenario);
    return rate_function(sc.model, truth, theta, sc.theta0);
  }
  const auto& sc = std::get<SiScenario>(config.scenario);
  return si_rate_function(sc.model, theta, sc.theta0);
}

// Deterministic parts of the penalized field on a fixed theta grid.
struct GridTables {
  Eigen::MatrixXd delta_eta;  // G x n: eta(theta_j) - eta(theta0)
  Eigen::VectorXd det_part;   // G: sum_i { d(eta_j,i) - d(eta0,i) }
  Eigen::VectorXd rate;       // G: M(theta_j, theta0)
  Eigen::MatrixXd pen;        // G x #rho
  long G = 0;
};

double penalty_value(const SimConfig& config, double rho, const Eigen::VectorXd& theta) {
  switch (config.penalty.kind) {
    case PenaltyChoice::Kind::none:
      return 0.0;
    case PenaltyChoice::Kind::direct_quadratic: {
      const Eigen::VectorXd diff = theta - config.theta0();
      return config.penalty.a1 * config.penalty.a1 * diff.dot(config.vstar * diff);
    }
    case PenaltyChoice::Kind::kappa: {
      PenaltySpec spec = config.penalty.spec;
      spec.rho = rho;
      return penalty(spec, theta);
    }
  }
  throw config_error("penalty_value: bad penalty kind");
}

GridTables build_tables(const SimConfig& config, const ScenarioView& v, const TrueLaw& truth,
                        const GridDomain& grid) {
  GridTables t;
  t.G = grid.size();
  const Eigen::Index n = v.design->rows();
  const Eigen::VectorXd eta0 = v.eta(v.theta0);
  Eigen::VectorXd d0(n);
  for (Eigen::Index i = 0; i < n; ++i) d0[i] = v.family->log_partition(eta0[i]);

  t.delta_eta.resize(t.G, n);
  t.det_part.resize(t.G);
  t.rate.resize(t.G);
  t.pen.resize(t.G, static_cast<Eigen::Index>(config.rho_grid.size()));
  for (long j = 0; j < t.G; ++j) {
    const Eigen::VectorXd theta = grid.point(j);
    const Eigen::VectorXd eta = v.eta(theta);
    double dsum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      t.delta_eta(j, i) = eta[i] - eta0[i];
      dsum += v.family->log_partition(eta[i]) - d0[i];
    }
    t.det_part[j] = dsum;
    t.rate[j] = rate_at(config, truth, theta);
    for (std::size_t r = 0; r < config.rho_grid.size(); ++r)
      t.pen(j, static_cast<Eigen::Index>(r)) = penalty_value(config, config.rho_grid[r], theta);
  }
  return t;
}

struct RepOutcome {
  bool ok = false;
  Eigen::VectorXd theta_hat;
  double L_hat = 0.0;
  double M_hat = 0.0;
  std::vector<double> sup;       // per rho
  std::vector<double> sup_wide;  // per rho
};

}  // namespace

const Eigen::VectorXd& SimConfig::theta0() const {
  if (std::holds_alternative<GlmScenario>(scenario))
    return std::get<GlmScenario>(scenario).theta0;
  return std::get<SiScenario>(scenario).theta0;
}

int SimConfig::p() const { return static_cast<int>(theta0().size()); }

const Box& SimConfig::theta_box() const {
  if (std::holds_alternative<GlmScenario>(scenario))
    return std::get<GlmScenario>(scenario).model.theta_box;
  return std::get<SiScenario>(scenario).model.theta_box;
}

void SimConfig::validate() const {
  if (reps < 1) throw config_error("simulate: reps must be >= 1");
  if (rho_grid.empty()) throw config_error("simulate: rho_grid must be nonempty");
  for (double rho : rho_grid)
    if (!(rho > 0.0 && rho < 1.0)) throw config_error("simulate: every rho must lie in (0,1)");
  auto sorted = [](const std::vector<double>& g) {
    return std::is_sorted(g.begin(), g.end());
  };
  if (!sorted(rho_grid) || !sorted(r_grid) || !sorted(z_grid))
    throw config_error("simulate: grids must be sorted ascending");
  if (theta_grid_points < 2) throw config_error("simulate: theta_grid_points must be >= 2");
  if (std::holds_alternative<GlmScenario>(scenario)) {
    const auto& sc = std::get<GlmScenario>(scenario);
    sc.model.validate();
    if (sc.truth.size() != sc.model.n())
      throw config_error("simulate: truth size must match the sample size");
  } else {
    std::get<SiScenario>(scenario).model.validate();
  }
  if (penalty.kind == PenaltyChoice::Kind::direct_quadratic) {
    if (!(penalty.a1 > 0.0)) throw config_error("simulate: direct_quadratic penalty needs a1 > 0");
    if (vstar.rows() != p() || vstar.cols() != p())
      throw config_error("simulate: vstar must be p x p");
  }
  const double budget = static_cast<double>(reps) *
                        (static_cast<double>(rho_grid.size()) + r_grid.size() + z_grid.size());
  if (budget > 5e8) throw config_error("simulate: reps x grid budget exceeded");
}

SimResult simulate(const SimConfig& config, int workers) {
  config.validate();
  const ScenarioView v = view_of(config);
  std::optional<TrueLaw> si_truth;
  const TrueLaw& truth = truth_of(config, si_truth);
  const Eigen::Index n = v.design->rows();

  // Theta grid with the refinement-doubling acceptance rule, judged on the
  // deterministic part of the penalized field.
  GridDomain grid = GridDomain::uniform(*v.box, config.theta_grid_points);
  double refine_change = 0.0;
  {
    auto stat = [&](const GridDomain& g) {
      double worst = -std::numeric_limits<double>::infinity();
      for (long j = 0; j < g.size(); ++j) {
        const Eigen::VectorXd theta = g.point(j);
        const double m = rate_at(config, truth, theta);
        for (double rho : config.rho_grid)
          worst = std::max(worst, m - penalty_value(config, rho, theta));
      }
      return worst;
    };
    refine_until(stat, grid, config.grid_refine_tol, config.grid_max_refinements, &grid,
                 &refine_change);
  }

  GridTables tables = build_tables(config, v, truth, grid);

  // Widened grid for the divergence check; skipped when the widened box
  // leaves a natural domain.
  bool wide_ok = true;
  GridTables wide_tables;
  try {
    Box wide_box = v.box->widened(config.widen_factor);
    GridDomain wide_grid(wide_box, grid.points_per_axis());
    wide_tables = build_tables(config, v, truth, wide_grid);
  } catch (const error&) {
    wide_ok = false;
  }

  const std::size_t n_rho = config.rho_grid.size();
  std::vector<RepOutcome> outcomes(static_cast<std::size_t>(config.reps));

  auto run_rep = [&](long rep) {
    RngStream rng(config.master_seed, static_cast<std::uint64_t>(rep));
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = truth.sample(i, rng);

    RepOutcome out;
    Eigen::VectorXd theta_hat;
    double objective_gain = 0.0;  // L(theta_hat) - L(theta0) >= 0 by ascent from theta0
    if (std::holds_alternative<GlmScenario>(config.scenario)) {
      GlmModel model = std::get<GlmScenario>(config.scenario).model;
      model.responses = y;
      FitResult fit = fit_qmle(model, v.theta0, config.fit_tol, config.fit_max_iter);
      if (!fit.diag.converged) return out;
      theta_hat = fit.theta;
      objective_gain = loglik_diff(model, theta_hat, v.theta0);
    } else {
      SiModel model = std::get<SiScenario>(config.scenario).model;
      model.responses = y;
      SiFitResult fit = si_fit(model, config.fit_tol, config.fit_max_iter, {v.theta0});
      if (!fit.diag.converged) return out;
      theta_hat = fit.theta;
      objective_gain = si_loglik_diff(model, theta_hat, v.theta0);
    }

    out.ok = true;
    out.theta_hat = theta_hat;
    out.L_hat = objective_gain;
    out.M_hat = rate_at(config, truth, theta_hat);

    const Eigen::VectorXd lvals = v.mu * (tables.delta_eta * y - tables.det_part);
    out.sup.assign(n_rho, -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < n_rho; ++r) {
      for (long j = 0; j < tables.G; ++j)
        out.sup[r] = std::max(out.sup[r], lvals[j] + tables.rate[j] -
                                              tables.pen(j, static_cast<Eigen::Index>(r)));
    }
    if (wide_ok) {
      const Eigen::VectorXd lw = v.mu * (wide_tables.delta_eta * y - wide_tables.det_part);
      out.sup_wide.assign(n_rho, -std::numeric_limits<double>::infinity());
      for (std::size_t r = 0; r < n_rho; ++r) {
        for (long j = 0; j < wide_tables.G; ++j)
          out.sup_wide[r] = std::max(out.sup_wide[r], lw[j] + wide_tables.rate[j] -
                                                          wide_tables.pen(j, static_cast<Eigen::Index>(r)));
      }
    }
    return out;
  };

  workers = std::max(1, workers);
  if (workers == 1) {
    for (long rep = 0; rep < config.reps; ++rep) outcomes[rep] = run_rep(rep);
  } else {
    std::vector<std::thread> pool;
    std::atomic<long> next{0};
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const long rep = next.fetch_add(1);
          if (rep >= config.reps) return;
          outcomes[rep] = run_rep(rep);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  SimResult res;
  res.reps_requested = config.reps;
  res.rho_grid = config.rho_grid;
  res.r_grid = config.r_grid;
  res.z_grid = config.z_grid;
  res.grid_points_used = grid.points_per_axis().front();
  res.grid_refine_change = refine_change;
  res.widened_grid_available = wide_ok;
  res.sup_penalized.assign(n_rho, {});
  res.sup_penalized_wide.assign(n_rho, {});

  for (long rep = 0; rep < config.reps; ++rep) {
    const RepOutcome& out = outcomes[static_cast<std::size_t>(rep)];
    if (!out.ok) {
      ++res.fit_failures;
      continue;
    }
    res.theta_hat.push_back(out.theta_hat);
    res.L_hat.push_back(out.L_hat);
    res.M_hat.push_back(out.M_hat);
    for (std::size_t r = 0; r < n_rho; ++r) {
      res.sup_penalized[r].push_back(out.sup[r]);
      if (wide_ok) res.sup_penalized_wide[r].push_back(out.sup_wide[r]);
    }
  }
  res.reps_used = static_cast<long>(res.L_hat.size());
  if (res.reps_used == 0) throw numeric_error("simulate: every replication failed to fit");
  const double failure_rate =
      static_cast<double>(res.fit_failures) / static_cast<double>(config.reps);
  if (failure_rate > config.max_failure_rate) {
    std::ostringstream msg;
    msg << "simulate: fit failure rate " << failure_rate << " exceeds "
        << config.max_failure_rate;
    throw numeric_error(msg.str());
  }

  const double m = static_cast<double>(res.reps_used);
  auto binom_se = [m](double phat) { return std::sqrt(phat * (1.0 - phat) / m); };
  for (double r : config.r_grid) {
    long count = 0;
    for (double mh : res.M_hat)
      if (mh > r) ++count;
    const double phat = count / m;
    res.empirical_tail.push_back(phat);
    res.empirical_tail_se.push_back(binom_se(phat));
  }
  for (double z : config.z_grid) {
    long count = 0;
    for (double lh : res.L_hat)
      if (lh > z) ++count;
    const double phat = count / m;
    res.empirical_noncoverage.push_back(phat);
    res.empirical_noncoverage_se.push_back(binom_se(phat));
  }

  for (std::size_t r = 0; r < n_rho; ++r) {
    const double rho = config.rho_grid[r];
    ExpMomentEstimate em;
    em.rho = rho;

    // log-sum-exp guarded mean and jackknife stderr of exp(rho * sup)
    const std::vector<double>& sup = res.sup_penalized[r];
    double shift = -std::numeric_limits<double>::infinity();
    for (double s : sup) shift = std::max(shift, rho * s);
    double acc = 0.0, acc_sq = 0.0;
    for (double s : sup) {
      const double a = std::exp(rho * s - shift);
      acc += a;
      acc_sq += a * a;
    }
    const double mean_shifted = acc / m;
    em.log_estimate = shift + std::log(mean_shifted);
    em.estimate = std::exp(em.log_estimate);
    const double var_shifted = std::max(0.0, acc_sq / m - mean_shifted * mean_shifted);
    // jackknife variance of the mean reduces to sum (v_i - vbar)^2 / (m(m-1))
    em.stderr_jackknife = std::exp(shift) * std::sqrt(var_shifted / std::max(1.0, m - 1.0));

    if (wide_ok) {
      const std::vector<double>& supw = res.sup_penalized_wide[r];
      double shiftw = -std::numeric_limits<double>::infinity();
      for (double s : supw) shiftw = std::max(shiftw, rho * s);
      double accw = 0.0;
      for (double s : supw) accw += std::exp(rho * s - shiftw);
      em.widened_estimate = std::exp(shiftw + std::log(accw / m));
      em.diverged = std::abs(em.widened_estimate - em.estimate) >
                    config.divergence_tol * std::max(em.estimate, 1e-300);
    }
    res.exp_moments.push_back(em);
  }
  return res;
}

ExpMomentEstimate empirical_exp_moment(const SimResult& result, double rho) {
  for (const ExpMomentEstimate& em : result.exp_moments)
    if (std::abs(em.rho - rho) < 1e-12) return em;
  throw config_error("empirical_exp_moment: rho not in the simulated grid");
}

ExpMomentEstimate empirical_exp_moment(const SimConfig& config, double rho, int workers) {
  SimConfig cfg = config;
  cfg.rho_grid = {rho};
  return simulate(cfg, workers).exp_moments.front();
}

std::vector<CoverageRow> coverage_experiment(const SimResult& result) {
  std::vector<CoverageRow> rows;
  for (std::size_t i = 0; i < result.z_grid.size(); ++i)
    rows.push_back({result.z_grid[i], result.empirical_noncoverage[i],
                    result.empirical_noncoverage_se[i]});
  return rows;
}

std::vector<CoverageRow> coverage_experiment(const SimConfig& config, int workers) {
  return coverage_experiment(simulate(config, workers));
}

}  // namespace qlc

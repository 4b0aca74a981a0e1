#include "odcal/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "odcal/error.hpp"
#include "odcal/seed.hpp"
#include "odcal/sobol.hpp"

namespace odcal {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kRandom: return "random";
    case Method::kSpsa: return "spsa";
    case Method::kVanillaBo: return "vanilla-bo";
    case Method::kSaasBo: return "saasbo";
    case Method::kTurbo: return "turbo";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "random") return Method::kRandom;
  if (name == "spsa") return Method::kSpsa;
  if (name == "vanilla-bo" || name == "vanilla") return Method::kVanillaBo;
  if (name == "saasbo" || name == "saas") return Method::kSaasBo;
  if (name == "turbo") return Method::kTurbo;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

void OptimizerConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("optimizer config: ") + what);
  };
  need(init_points >= 1, "init_points must be >= 1");
  need(epochs >= 1, "epochs must be >= 1");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(num_restarts >= 1, "num_restarts must be >= 1");
  need(raw_samples >= 1, "raw_samples must be >= 1");
  need(sample_shape >= 1, "sample_shape must be >= 1");
  need(gp_restarts >= 1, "gp_restarts must be >= 1");
  need(gp_refit_every >= 1, "gp_refit_every must be >= 1");
  need(gp_max_iters >= 1, "gp_max_iters must be >= 1");
  need(saas_weight >= 0.0 && saas_tau > 0.0, "sparsity prior needs weight >= 0 and tau > 0");
  if (method == Method::kTurbo) need(raw_samples >= batch_size, "raw_samples must be >= batch_size");
}

AcquisitionOptions OptimizerConfig::acquisition() const {
  AcquisitionOptions a;
  a.raw_samples = raw_samples;
  a.num_restarts = num_restarts;
  a.sample_shape = sample_shape;
  a.monte_carlo = mc_batch;
  return a;
}

void EvaluationLog::add(EvalRecord r) {
  records_.push_back(std::move(r));
  if (records_.back().value < records_[best_].value) best_ = records_.size() - 1;
}

std::size_t EvaluationLog::incumbent_index() const {
  if (records_.empty()) throw StateError("evaluation log is empty");
  return best_;
}

double EvaluationLog::incumbent_value() const { return records_[incumbent_index()].value; }

PointMatrix EvaluationLog::points(std::size_t from) const {
  if (records_.empty()) return {};
  const auto n = static_cast<Eigen::Index>(records_.size() - std::min(from, records_.size()));
  PointMatrix out(n, records_.front().point.size());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = records_[from + static_cast<std::size_t>(i)].point.transpose();
  return out;
}

Eigen::VectorXd EvaluationLog::values(std::size_t from) const {
  const auto n = static_cast<Eigen::Index>(records_.size() - std::min(from, records_.size()));
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = records_[from + static_cast<std::size_t>(i)].value;
  return out;
}

std::vector<double> FunctionObjective::evaluate(const PointMatrix& points,
                                                const std::vector<std::uint64_t>& seeds) {
  std::vector<double> out(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = fn_(points.row(i).transpose(), seeds[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::uint64_t evaluation_seed(std::uint64_t run_seed, int epoch, int index) {
  return stream_seed(run_seed, Stream::kEvaluation, static_cast<std::uint64_t>(epoch),
                     static_cast<std::uint64_t>(index));
}

PointMatrix initial_design(std::size_t dim, int n, std::uint64_t run_seed) {
  if (n < 1) throw ConfigError("initial design needs n >= 1");
  if (dim < 1) throw ValidationError("initial design needs dimension >= 1");
  std::mt19937_64 rng(stream_seed(run_seed, Stream::kInitialDesign, dim,
                                  static_cast<std::uint64_t>(n)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointMatrix out(n, static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = u(rng);
  }
  return out;
}

PointMatrix initial_design(const ODBounds& bounds, int n, std::uint64_t run_seed) {
  PointMatrix out = initial_design(bounds.dimension(), n, run_seed);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      const auto jj = static_cast<std::size_t>(j);
      out(i, j) = bounds.lower[jj] + out(i, j) * (bounds.upper[jj] - bounds.lower[jj]);
    }
  }
  return out;
}

// SPSA --------------------------------------------------------------------

double SpsaConstants::a_k(int k) const { return a / std::pow(k + 1 + A, alpha); }
double SpsaConstants::c_k(int k) const { return c / std::pow(k + 1, gamma); }

SpsaConstants spsa_constants(int epochs) {
  if (epochs < 1) throw ConfigError("SPSA needs epochs >= 1");
  SpsaConstants s;
  s.A = std::ceil(0.1 * epochs);
  s.a = std::round(0.1 * std::pow(1.0 + s.A, s.alpha) * 100.0) / 100.0;
  return s;
}

Eigen::VectorXd spsa_delta(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  Eigen::VectorXd delta(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < delta.size(); ++i) delta[i] = coin(rng) ? 1.0 : -1.0;
  return delta;
}

Eigen::VectorXd spsa_gradient(double f_plus, double f_minus, double c_k,
                              const Eigen::VectorXd& delta) {
  // Delta entries are +-1, so multiplying equals dividing by them.
  return (f_plus - f_minus) / (2.0 * c_k) * delta;
}

SpsaState spsa_step(const SpsaState& state, const SpsaConstants& constants,
                    const PairOracle& oracle, std::uint64_t delta_seed,
                    Eigen::VectorXd* gradient) {
  const double ck = constants.c_k(state.k);
  if (!(ck > 0.0)) throw ConfigError("SPSA perturbation size must be positive");
  const Eigen::VectorXd delta = spsa_delta(static_cast<std::size_t>(state.d.size()), delta_seed);
  const Eigen::VectorXd plus = (state.d + ck * delta).cwiseMax(0.0).cwiseMin(1.0);
  const Eigen::VectorXd minus = (state.d - ck * delta).cwiseMax(0.0).cwiseMin(1.0);
  std::pair<double, double> f;
  try {
    f = oracle(plus, minus);
  } catch (const OracleError&) {
    throw;
  } catch (const std::exception& e) {
    throw OracleError(e.what(), std::vector<double>(plus.data(), plus.data() + plus.size()));
  }
  const Eigen::VectorXd g = spsa_gradient(f.first, f.second, ck, delta);
  if (gradient) *gradient = g;
  SpsaState next;
  next.d = (state.d - constants.a_k(state.k) * g).cwiseMax(0.0).cwiseMin(1.0);
  next.k = state.k + 1;
  return next;
}

// Trust region ------------------------------------------------------------

int turbo_failure_tolerance(std::size_t dim, int batch) {
  if (batch < 1) throw ConfigError("batch size must be at least 1");
  const double b = batch;
  return static_cast<int>(std::ceil(std::max(4.0 / b, static_cast<double>(dim) / b)));
}

TrustRegionState make_trust_region(std::size_t dim, int batch) {
  TrustRegionState s;
  s.failure_tolerance = turbo_failure_tolerance(dim, batch);
  return s;
}

TrustRegionState turbo_update(const TrustRegionState& state, const std::vector<double>& values) {
  if (values.empty()) throw ValidationError("trust-region update needs at least one outcome");
  TrustRegionState s = state;
  s.restart = false;
  const double batch_best = *std::min_element(values.begin(), values.end());
  if (batch_best < s.best_value) {
    ++s.success_count;
    s.failure_count = 0;
    s.best_value = batch_best;
  } else {
    ++s.failure_count;
    s.success_count = 0;
  }
  if (s.success_count >= s.success_tolerance) {
    s.length = std::min(2.0 * s.length, s.length_max);
    s.success_count = 0;
  } else if (s.failure_count >= s.failure_tolerance) {
    s.length /= 2.0;
    s.failure_count = 0;
  }
  if (s.length < s.length_min) {
    s.length = s.length_init;
    s.success_count = 0;
    s.failure_count = 0;
    s.best_value = std::numeric_limits<double>::infinity();
    s.restart = true;
  }
  return s;
}

Eigen::VectorXd turbo_weights(const Eigen::VectorXd& lengthscales) {
  if (lengthscales.size() == 0 || (lengthscales.array() <= 0.0).any()) {
    throw ValidationError("trust-region weights need positive lengthscales");
  }
  Eigen::VectorXd w = lengthscales / lengthscales.mean();
  const double geo = std::exp(w.array().log().mean());
  return w / geo;
}

double turbo_perturbation_probability(std::size_t dim) {
  return std::min(20.0 / static_cast<double>(dim), 1.0);
}

TurboRegion turbo_region(const Eigen::VectorXd& center, const Eigen::VectorXd& lengthscales,
                         double length) {
  if (center.size() != lengthscales.size()) throw ValidationError("trust-region dimension mismatch");
  const Eigen::VectorXd half = 0.5 * length * turbo_weights(lengthscales);
  TurboRegion r;
  r.lower = (center - half).cwiseMax(0.0);
  r.upper = (center + half).cwiseMin(1.0);
  return r;
}

PointMatrix turbo_candidates(const Eigen::VectorXd& center, const TurboRegion& region,
                             int count, std::uint64_t seed) {
  const auto dim = static_cast<std::size_t>(center.size());
  CandidateGenerator gen(dim, seed);
  PointMatrix pts = gen.generate(static_cast<std::size_t>(count));
  const double prob = turbo_perturbation_probability(dim);
  std::mt19937_64 rng(derive_seed({seed, 0x3a5cULL}));
  std::bernoulli_distribution mask(prob);
  std::uniform_int_distribution<std::size_t> pick(0, dim - 1);
  const Eigen::VectorXd width = region.upper - region.lower;
  std::vector<char> on(dim);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    bool any = false;
    for (std::size_t j = 0; j < dim; ++j) {
      on[j] = prob >= 1.0 ? 1 : mask(rng);
      any = any || on[j];
    }
    if (!any) on[pick(rng)] = 1;
    for (std::size_t j = 0; j < dim; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      pts(i, jj) = on[j] ? region.lower[jj] + width[jj] * pts(i, jj) : center[jj];
    }
  }
  return pts;
}

TurboProposal turbo_propose(const GpModel& model, const TrustRegionState& state,
                            const Eigen::VectorXd& center, int batch, int raw_samples,
                            std::uint64_t seed) {
  if (batch < 1 || raw_samples < batch) throw ConfigError("trust-region proposal needs raw_samples >= batch >= 1");
  TurboProposal out;
  const TurboRegion region = turbo_region(center, model.kernel().lengthscales, state.length);
  if (((region.upper - region.lower).array() < 1e-12).all()) {
    out.collapsed = true;
    return out;
  }
  const PointMatrix cands = turbo_candidates(center, region, raw_samples, seed);
  const Eigen::MatrixXd draws = model.sample_posterior(cands, batch, derive_seed({seed, 0x75ULL}));
  std::vector<char> taken(static_cast<std::size_t>(cands.rows()), 0);
  out.points.resize(batch, cands.cols());
  for (int j = 0; j < batch; ++j) {
    Eigen::Index arg = -1;
    for (Eigen::Index i = 0; i < cands.rows(); ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      if (arg < 0 || draws(i, j) < draws(arg, j)) arg = i;
    }
    taken[static_cast<std::size_t>(arg)] = 1;
    out.points.row(j) = cands.row(arg);
  }
  return out;
}

// Run loop ----------------------------------------------------------------

namespace {

class Runner {
 public:
  Runner(const OptimizerConfig& cfg, Objective& obj) : cfg_(cfg), obj_(obj), dim_(obj.dimension()) {
    res_.method = cfg.method;
  }

  RunResult run(const std::optional<PointMatrix>& initial) {
    try {
      const PointMatrix init = initial ? *initial : initial_design(dim_, cfg_.init_points, cfg_.seed);
      if (static_cast<std::size_t>(init.cols()) != dim_) {
        throw ValidationError("initial design dimension does not match the objective");
      }
      evaluate(init, 0);
      res_.trace.push_back(res_.log.incumbent_value());
      switch (cfg_.method) {
        case Method::kRandom: run_random(); break;
        case Method::kSpsa: run_spsa(); break;
        case Method::kVanillaBo:
        case Method::kSaasBo: run_bo(); break;
        case Method::kTurbo: run_turbo(); break;
      }
      res_.completed = true;
    } catch (const Error& e) {
      res_.error = e.what();
    }
    return std::move(res_);
  }

 private:
  std::vector<double> evaluate(const PointMatrix& raw, int epoch) {
    const PointMatrix pts = raw.cwiseMax(0.0).cwiseMin(1.0);
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(pts.rows()));
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      seeds[i] = evaluation_seed(cfg_.seed, epoch, static_cast<int>(i));
    }
    auto as_vec = [&](Eigen::Index i) {
      return std::vector<double>(pts.row(i).data(), pts.row(i).data() + pts.cols());
    };
    std::vector<double> vals;
    try {
      vals = obj_.evaluate(pts, seeds);
    } catch (const OracleError&) {
      throw;
    } catch (const std::exception& e) {
      throw OracleError(std::string("objective failed: ") + e.what(), as_vec(0));
    }
    if (vals.size() != seeds.size()) throw ValidationError("objective returned the wrong number of values");
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (!std::isfinite(vals[i])) throw OracleError("objective returned a non-finite value", as_vec(ii));
      res_.log.add(EvalRecord{pts.row(ii).transpose(), vals[i], epoch, seeds[i]});
    }
    return vals;
  }

  void end_epoch() { res_.trace.push_back(res_.log.incumbent_value()); }

  void run_random() {
    for (int e = 1; e <= cfg_.epochs; ++e) {
      std::mt19937_64 rng(stream_seed(cfg_.seed, Stream::kRandomSearch, static_cast<std::uint64_t>(e)));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      PointMatrix pts(cfg_.batch_size, static_cast<Eigen::Index>(dim_));
      for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = u(rng);
      evaluate(pts, e);
      end_epoch();
    }
  }

  void run_spsa() {
    const SpsaConstants consts = spsa_constants(cfg_.epochs);
    SpsaState state;
    state.d = res_.log[res_.log.incumbent_index()].point;
    for (int e = 1; e <= cfg_.epochs; ++e) {
      const PairOracle oracle = [&](const Eigen::VectorXd& plus, const Eigen::VectorXd& minus) {
        PointMatrix pts(2, static_cast<Eigen::Index>(dim_));
        pts.row(0) = plus.transpose();
        pts.row(1) = minus.transpose();
        const std::vector<double> v = evaluate(pts, e);
        return std::make_pair(v[0], v[1]);
      };
      state = spsa_step(state, consts, oracle,
                        stream_seed(cfg_.seed, Stream::kSpsaPerturbation, static_cast<std::uint64_t>(state.k)));
      end_epoch();
    }
  }

  GpModel fit(const PointMatrix& x, const Eigen::VectorXd& y, int epoch, const SparsityPrior& prior) {
    FitOptions fo;
    fo.kernel = cfg_.kernel;
    fo.max_iters = cfg_.gp_max_iters;
    fo.prior = prior;
    fo.seed = stream_seed(cfg_.seed, Stream::kGpFit, static_cast<std::uint64_t>(epoch));
    const bool full = !warm_ || (epoch - 1) % cfg_.gp_refit_every == 0;
    fo.restarts = full ? cfg_.gp_restarts : 1;
    fo.warm_start = warm_;
    GpModel m = GpModel::fit(x, y, fo);
    warm_ = m.hyper();
    HyperSnapshot snap;
    snap.epoch = epoch;
    const Eigen::VectorXd& l = m.kernel().lengthscales;
    snap.lengthscales.assign(l.data(), l.data() + l.size());
    snap.signal_var = m.kernel().signal_var;
    snap.noise_var = m.noise_var();
    res_.hypers.push_back(std::move(snap));
    return m;
  }

  void run_bo() {
    const bool saas = cfg_.method == Method::kSaasBo;
    SparsityPrior prior;
    if (saas) {
      prior.weight = cfg_.saas_weight;
      prior.tau = cfg_.saas_tau;
    }
    const AcquisitionOptions acq = cfg_.acquisition();
    for (int e = 1; e <= cfg_.epochs; ++e) {
      const GpModel model = fit(res_.log.points(), res_.log.values(), e, prior);
      BatchProposal p = propose_batch_ei(model, cfg_.batch_size, acq, saas || cfg_.mc_batch,
                                         stream_seed(cfg_.seed, Stream::kAcquisition, static_cast<std::uint64_t>(e)));
      for (auto& w : p.warnings) res_.warnings.push_back("epoch " + std::to_string(e) + ": " + w);
      evaluate(p.points, e);
      end_epoch();
    }
  }

  PointMatrix restart_design(int restart) {
    const int base = std::max(2, static_cast<int>(std::ceil(static_cast<double>(dim_) / 5.0)) + 1);
    const int b = cfg_.batch_size;
    const int n = (base + b - 1) / b * b;
    std::mt19937_64 rng(stream_seed(cfg_.seed, Stream::kTurbo, static_cast<std::uint64_t>(restart)));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PointMatrix pts(n, static_cast<Eigen::Index>(dim_));
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = u(rng);
    return pts;
  }

  void run_turbo() {
    const int b = cfg_.batch_size;
    TrustRegionState state = make_trust_region(dim_, b);
    std::size_t region_start = 0;
    state.best_value = res_.log.values().minCoeff();
    PointMatrix pending;
    Eigen::Index pending_next = 0;
    for (int e = 1; e <= cfg_.epochs; ++e) {
      if (pending_next < pending.rows()) {
        evaluate(pending.middleRows(pending_next, b), e);
        pending_next += b;
        if (pending_next >= pending.rows()) state.best_value = res_.log.values(region_start).minCoeff();
      } else {
        const PointMatrix x = res_.log.points(region_start);
        const Eigen::VectorXd y = res_.log.values(region_start);
        const GpModel model = fit(x, y, e, SparsityPrior{});
        Eigen::Index arg = 0;
        y.minCoeff(&arg);
        const TurboProposal p =
            turbo_propose(model, state, x.row(arg).transpose(), b, cfg_.raw_samples,
                          stream_seed(cfg_.seed, Stream::kTurbo, static_cast<std::uint64_t>(e), 1));
        if (p.collapsed) {
          state.restart = true;
        } else {
          state = turbo_update(state, evaluate(p.points, e));
        }
        if (state.restart) {
          ++res_.turbo_restarts;
          state = make_trust_region(dim_, b);
          region_start = res_.log.size();
          pending = restart_design(res_.turbo_restarts);
          pending_next = 0;
          if (p.collapsed) {
            evaluate(pending.middleRows(0, b), e);
            pending_next = b;
            if (pending_next >= pending.rows()) state.best_value = res_.log.values(region_start).minCoeff();
          }
        }
      }
      res_.tr_lengths.push_back(state.length);
      end_epoch();
    }
  }

  const OptimizerConfig& cfg_;
  Objective& obj_;
  std::size_t dim_;
  RunResult res_;
  std::optional<GpHyper> warm_;
};

}  // namespace

RunResult run_optimizer(const OptimizerConfig& config, Objective& objective,
                        const std::optional<PointMatrix>& initial) {
  config.validate();
  if (objective.dimension() < 1) throw ValidationError("objective dimension must be at least 1");
  Runner r(config, objective);
  return r.run(initial);
}

}  // namespace odcal

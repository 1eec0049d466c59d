// occlab: classify regimes, simulate occupation-time fluctuations, verify
// them against the limit covariances, and check the finite-time oracles.
//
// Exit codes: 0 ok, 1 runtime failure, 2 unsupported regime, 3 input inconsistency.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include <occlab/occlab.hpp>

namespace fs = std::filesystem;
using namespace occlab;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kRuntime = 1, kUnsupported = 2, kInput = 3 };

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InputError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(p.string() + ": " + e.what());
  }
}

unsigned resolve_threads(unsigned t) { return t ? t : std::max(1u, std::thread::hardware_concurrency()); }

std::function<void(std::size_t)> progress_printer(const char* what, std::size_t n) {
  const std::size_t every = std::max<std::size_t>(1, n / 20);
  return [=](std::size_t done) {
    if (done % every == 0 || done == n) std::fprintf(stderr, "%s: %zu/%zu\n", what, done, n);
  };
}

int unsupported(const Regime& r) {
  std::cerr << "error: regime " << to_string(r.label) << " (alpha=" << r.alpha
            << ", branching) has no limit theory and cannot be run\n";
  return kUnsupported;
}

/// Overrides from the command line become part of the effective config, so
/// they are covered by its fingerprint.
struct RunOptions {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  unsigned threads = 0;
};

RunConfig effective_config(const RunOptions& o) {
  RunConfig c = load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.replicas) c.replicas = *o.replicas;
  return c;
}

void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& x, std::size_t nphi) {
  os << "replica,t_index,phi_index,value\n";
  char buf[64];
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", x(r, c));
      os << r << ',' << static_cast<std::size_t>(c) / nphi << ',' << static_cast<std::size_t>(c) % nphi << ','
         << buf << '\n';
    }
}

// ---------------------------------------------------------------------------

struct ClassifyOptions {
  double alpha = 2.0;
  bool branching = false;
  double V = 1.0;
  std::string theta = "poisson";
  double theta_mean = 1.0;
  std::int64_t theta_k = 1;
  std::vector<double> theta_p;
};

int cmd_classify(const ClassifyOptions& o) {
  ThetaLaw th = ThetaLaw::poisson(1.0);
  try {
    if (o.theta == "poisson") th = ThetaLaw::poisson(o.theta_mean);
    else if (o.theta == "deterministic") th = ThetaLaw::deterministic(o.theta_k);
    else th = ThetaLaw::categorical(o.theta_p);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("theta: ") + e.what());
  }
  Regime r;
  try {
    r = classify_regime(o.alpha, o.branching, th, o.V);
  } catch (const RegimeError& e) {
    throw ConfigError(e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  std::cout << r.to_json().dump(2) << '\n';
  return r.label == RegimeLabel::B_unsupported ? kUnsupported : kOk;
}

int cmd_simulate(const RunOptions& o) {
  const RunConfig c = effective_config(o);
  const Regime reg = c.regime();
  if (reg.label == RegimeLabel::B_unsupported) return unsupported(reg);
  const RunPlan plan = c.plan();
  const unsigned threads = resolve_threads(o.threads);
  std::fprintf(stderr, "simulate: %s sampler, window [%lld, %lld), %zu steps, %zu replicas on %u threads\n",
               to_string(plan.sampler), static_cast<long long>(plan.window.lo), static_cast<long long>(plan.window.hi),
               plan.cuts.steps(), c.replicas, threads);
  const auto samples = run_replicas(plan, c.replicas, c.seed, threads, progress_printer("simulate", c.replicas));

  const fs::path out(o.out);
  fs::create_directories(out);
  write_text(out / "config.json", c.to_json().dump(2) + "\n");
  std::ostringstream csv;
  write_replicas_csv(csv, samples);
  write_text(out / "replicas.csv", csv.str());
  const json meta{{"source", "simulator"},   {"fingerprint", c.fingerprint()}, {"seed", c.seed},
                  {"replicas", c.replicas},  {"plan", plan.to_json()},         {"regime", reg.to_json()},
                  {"config", c.to_json()}};
  write_text(out / "meta.json", meta.dump(2) + "\n");
  std::fprintf(stderr, "simulate: wrote %s\n", (out / "replicas.csv").c_str());
  return kOk;
}

int cmd_sample_limit(const RunOptions& o) {
  const RunConfig c = effective_config(o);
  const Regime reg = c.regime();
  if (reg.label == RegimeLabel::B_unsupported) return unsupported(reg);
  RandomStream rng(c.seed);
  const Eigen::MatrixXd x = sample_limit(reg, c.test_functions, c.obs_times, c.replicas, rng);
  const fs::path out(o.out);
  fs::create_directories(out);
  write_text(out / "config.json", c.to_json().dump(2) + "\n");
  std::ostringstream csv;
  write_matrix_csv(csv, x, c.test_functions.size());
  write_text(out / "replicas.csv", csv.str());
  const json meta{{"source", "limit_field"}, {"fingerprint", c.fingerprint()}, {"seed", c.seed},
                  {"replicas", c.replicas},  {"regime", reg.to_json()},        {"config", c.to_json()}};
  write_text(out / "meta.json", meta.dump(2) + "\n");
  return kOk;
}

struct VerifyOptions {
  std::string config, run, out;
  double band = 3.0;
};

int cmd_verify(const VerifyOptions& o) {
  const fs::path run(o.run);
  const fs::path out = o.out.empty() ? run : fs::path(o.out);
  const RunConfig c = load_config(o.config.empty() ? (run / "config.json").string() : o.config);
  const json meta = read_json(run / "meta.json");
  const std::string fp = meta.value("fingerprint", "");
  if (fp != c.fingerprint())
    throw InputError("fingerprint mismatch: meta.json has '" + fp + "', config has '" + c.fingerprint() + "'");
  const Regime reg = c.regime();
  if (reg.label == RegimeLabel::B_unsupported) return unsupported(reg);

  std::ifstream in(run / "replicas.csv");
  if (!in) throw InputError("cannot open " + (run / "replicas.csv").string());
  Eigen::MatrixXd x;
  try {
    x = read_replicas_csv(in, c.obs_times.size(), c.test_functions.size());
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  if (static_cast<std::size_t>(x.rows()) != c.replicas)
    throw InputError("replicas.csv holds " + std::to_string(x.rows()) + " replicas, config says " +
                     std::to_string(c.replicas));

  McReport rep = compare_to_limit(estimate_cov(x), reg, c.test_functions, c.obs_times, c.theta, o.band);
  add_normality(rep, x, c.test_functions.size());
  rep.fingerprint = fp;

  fs::create_directories(out / "plots");
  write_text(out / "report.json", rep.to_json().dump(2) + "\n");
  std::ostringstream csv;
  rep.write_csv(csv);
  write_text(out / "report.csv", csv.str());

  std::ostringstream sc;
  sc << "theory,estimate\n";
  char buf[96];
  for (const auto& e : rep.entries) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", e.theory, e.estimate);
    sc << buf;
  }
  write_text(out / "plots" / "cov_scatter.csv", sc.str());

  // Increment-covariance decay of the limit time process, scaled as for phi_0.
  std::ostringstream lc;
  lc << "lag,cov\n";
  if (!reg.high()) {
    const double s = (*reg.K) * (*reg.K) * std::pow(c.test_functions[0].integral(), 2);
    const double H = *reg.H;
    CovarianceModel k = reg.critical()                              ? CovarianceModel::brownian(1.0)
                        : reg.label == RegimeLabel::NB_low ? CovarianceModel::xi(reg.Etheta, reg.Vartheta, H)
                                                           : CovarianceModel::subfbm(H);
    for (double lag = 1.0; lag <= 1024.0; lag *= 1.25) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", lag, s * lag_increment_cov(k, lag));
      lc << buf;
    }
  } else {
    // Wiener limits have independent increments.
    for (double lag = 1.0; lag <= 1024.0; lag *= 1.25) {
      std::snprintf(buf, sizeof buf, "%.17g,0\n", lag);
      lc << buf;
    }
  }
  write_text(out / "plots" / "lag_cov.csv", lc.str());

  std::fprintf(stderr, "verify: %zu/%zu entries within %.3g SE, verdict %s\n", rep.passed(), rep.entries.size(),
               o.band, rep.passed() == rep.entries.size() ? "pass" : "flag");
  return kOk;
}

int cmd_oracle_check(const RunOptions& o) {
  RunConfig c = load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.replicas) c.oracle.replicas = *o.replicas;
  const auto& s = c.system;
  const TestFunction& phi = c.test_functions[0];
  const TestFunction& psi = c.test_functions.size() > 1 ? c.test_functions[1] : c.test_functions[0];
  const unsigned threads = resolve_threads(o.threads);
  json rows = json::array();
  std::printf("%8s %8s %14s %14s %12s %8s %s\n", "r", "r'", "oracle", "monte_carlo", "se", "z", "pass");
  const auto& ts = c.oracle.times;
  std::uint64_t k = 0;
  for (std::size_t i = 0; i < ts.size(); ++i)
    for (std::size_t j = i; j < ts.size(); ++j, ++k) {
      const auto r = oracle_check(s.stable, s.branching, s.V(), c.oracle.x0, ts[i], ts[j], phi, psi,
                                  c.oracle.replicas, mix_seed(c.seed, k), threads);
      std::printf("%8.4g %8.4g %14.8g %14.8g %12.4g %8.3f %s\n", r.r, r.rp, r.oracle, r.mc, r.se, r.z,
                  r.pass ? "yes" : "NO");
      rows.push_back({{"r", r.r}, {"r_prime", r.rp}, {"oracle", r.oracle}, {"monte_carlo", r.mc}, {"se", r.se},
                      {"z", r.z}, {"pass", r.pass}});
    }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    const json j{{"fingerprint", c.fingerprint()}, {"x0", c.oracle.x0}, {"replicas", c.oracle.replicas}, {"rows", rows}};
    write_text(fs::path(o.out) / "oracle.json", j.dump(2) + "\n");
  }
  return kOk;
}

void add_run_flags(CLI::App* sub, RunOptions& o, bool out_required) {
  sub->add_option("--config", o.config, "Run config (JSON, schema v1)")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "Master seed override");
  sub->add_option("--replicas", o.replicas, "Replica count override");
  sub->add_option("--threads", o.threads, "Worker threads (default: logical cores)");
  auto* out = sub->add_option("--out", o.out, "Output directory");
  if (out_required) out->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Occupation-time fluctuations of stable particle systems"};
  app.require_subcommand(1);

  ClassifyOptions co;
  auto* classify = app.add_subcommand("classify", "Print the limit regime as JSON");
  classify->add_option("--alpha", co.alpha, "Stability index in (0, 2]")->required();
  classify->add_flag("--branching", co.branching, "Critical binary branching");
  classify->add_option("--V", co.V, "Branching rate (default 1)");
  classify->add_option("--theta", co.theta, "Count law")
      ->check(CLI::IsMember({"poisson", "deterministic", "categorical"}));
  classify->add_option("--theta-mean", co.theta_mean, "Poisson mean");
  classify->add_option("--theta-k", co.theta_k, "Deterministic count");
  classify->add_option("--theta-p", co.theta_p, "Categorical probabilities p_0 p_1 ...");

  RunOptions so, lo, oo;
  auto* simulate = app.add_subcommand("simulate", "Run replicas and write replicas.csv, meta.json, config.json");
  add_run_flags(simulate, so, true);
  auto* sample = app.add_subcommand("sample-limit", "Draw replicas from the Gaussian limit field instead");
  add_run_flags(sample, lo, true);
  auto* oracle = app.add_subcommand("oracle-check", "Compare finite-time second moments with Monte Carlo");
  add_run_flags(oracle, oo, false);
  oracle->get_option("--replicas")->description("Oracle replica count override");

  VerifyOptions vo;
  auto* verify = app.add_subcommand("verify", "Compare a run against the limit covariances");
  verify->add_option("--run", vo.run, "Directory holding replicas.csv and meta.json")->required()
      ->check(CLI::ExistingDirectory);
  verify->add_option("--config", vo.config, "Config to check against (default: <run>/config.json)");
  verify->add_option("--out", vo.out, "Output directory (default: the run directory)");
  verify->add_option("--band", vo.band, "Acceptance band in standard errors")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInput;
  }

  try {
    if (*classify) return cmd_classify(co);
    if (*simulate) return cmd_simulate(so);
    if (*sample) return cmd_sample_limit(lo);
    if (*oracle) return cmd_oracle_check(oo);
    if (*verify) return cmd_verify(vo);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kInput;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const RegimeError& e) {
    std::cerr << "regime error: " << e.what() << '\n';
    return kInput;
  } catch (const BudgetExceeded& e) {
    std::cerr << "budget exceeded: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}

#include "samcnn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "samcnn/error.hpp"

namespace fs = std::filesystem;

namespace samcnn {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

const Variant& find_variant(const GridSpec& spec, const std::string& name) {
  for (const auto& v : spec.variants)
    if (v.name == name) return v;
  throw ConfigError("variant", "unknown variant '" + name + "'");
}

std::uint64_t cell_seed(const Cell& c, const char* tag) {
  return derive_seed(c.seed, tag, static_cast<std::uint64_t>(c.d), double_bits(c.mu_norm));
}

void atomic_write(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

const char* kResultsHeader =
    "d,mu_norm,seed,algo,status,train_loss,test_error,test_stderr,converged_iteration,max_gamma,max_sum_zeta,"
    "structural_violations,digest,error";

std::string result_row(const TrialResult& r) {
  std::ostringstream o;
  o << r.cell.d << ',' << num(r.cell.mu_norm) << ',' << r.cell.seed << ',' << r.cell.variant << ','
    << (r.ok ? "ok" : "failed") << ',' << num(r.train_loss) << ',' << num(r.test_error) << ','
    << num(r.test_stderr) << ',' << r.converged_iteration << ',' << num(r.max_gamma) << ','
    << num(r.max_sum_zeta) << ',' << r.structural_violations << ',' << sanitize(r.digest) << ','
    << sanitize(r.error);
  return o.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

TrialResult parse_row(const std::string& line) {
  const auto f = split(line, ',');
  if (f.size() != 14) throw Error("malformed results row: " + line);
  TrialResult r;
  r.cell.d = std::stoull(f[0]);
  r.cell.mu_norm = std::strtod(f[1].c_str(), nullptr);
  r.cell.seed = std::stoull(f[2]);
  r.cell.variant = f[3];
  r.ok = f[4] == "ok";
  r.train_loss = std::strtod(f[5].c_str(), nullptr);
  r.test_error = std::strtod(f[6].c_str(), nullptr);
  r.test_stderr = std::strtod(f[7].c_str(), nullptr);
  r.converged_iteration = std::stoll(f[8]);
  r.max_gamma = std::strtod(f[9].c_str(), nullptr);
  r.max_sum_zeta = std::strtod(f[10].c_str(), nullptr);
  r.structural_violations = std::stoull(f[11]);
  r.digest = f[12];
  r.error = f[13];
  return r;
}

std::string trial_key(const Cell& c) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s_d%zu_mu%.17g_s%llu", c.variant.c_str(), c.d, c.mu_norm,
                static_cast<unsigned long long>(c.seed));
  return buf;
}

} // namespace

void GridSpec::validate() const {
  if (d_values.empty()) throw ConfigError("grid.d", "must list at least one dimension");
  if (mu_values.empty()) throw ConfigError("grid.mu", "must list at least one signal strength");
  if (seeds.empty()) throw ConfigError("grid.seeds", "must list at least one seed");
  if (variants.empty()) throw ConfigError("variant", "at least one training variant is required");
  if (n_test < 1) throw ConfigError("eval.n_test", "must be >= 1");
  if (n < 1) throw ConfigError("data.n", "must be >= 1");
  for (double mu : mu_values)
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw ConfigError("grid.mu", "signal strengths must be finite and >= 0");
  for (std::size_t d : d_values) {
    DataParams p = data;
    p.d = d;
    p.mu_norm = mu_values.front();
    p.validate();
    NetConfig nc = net;
    nc.d = d;
    nc.validate();
  }
  for (const auto& v : variants) {
    if (v.name.empty()) throw ConfigError("variant", "empty variant name");
    v.train.validate(n);
  }
}

std::uint64_t data_seed(const Cell& c) { return cell_seed(c, "data"); }
std::uint64_t train_seed(const Cell& c) { return cell_seed(c, "train"); }
std::uint64_t test_seed(const Cell& c) { return cell_seed(c, "test"); }

TestError estimate_test_error(const Weights& w, const DataParams& params, const Vector& mu, std::size_t n_test,
                              Stream& rng) {
  if (n_test < 1) throw ConfigError("eval.n_test", "must be >= 1");
  std::size_t wrong = 0;
  for (std::size_t k = 0; k < n_test; ++k) {
    const Sample s = gen_sample(params, mu, rng);
    const double f = forward(w, s, mu);
    if (static_cast<double>(s.y) * f <= 0.0) ++wrong;
  }
  TestError e;
  e.rate = static_cast<double>(wrong) / static_cast<double>(n_test);
  e.std_error = std::sqrt(e.rate * (1.0 - e.rate) / static_cast<double>(n_test));
  return e;
}

TrialResult run_trial(const Cell& cell, const GridSpec& spec) {
  TrialResult res;
  res.cell = cell;
  try {
    DataParams params = spec.data;
    params.d = cell.d;
    params.mu_norm = cell.mu_norm;
    const Dataset ds = gen_dataset(params, spec.n, data_seed(cell));

    NetConfig net = spec.net;
    net.d = cell.d;
    TrainConfig cfg = find_variant(spec, cell.variant).train;
    cfg.seed = train_seed(cell);
    const std::size_t H = cfg.batches_per_epoch(spec.n);
    // within-epoch logit ratios need every state of the epoch
    if (spec.hooks.checks && H > 1) cfg.record_every = 1;

    DecompositionTracker::Options topt;
    topt.oracle_every = spec.hooks.oracle_every;
    DecompositionTracker tracker(topt);
    ActivationRecorder acts;
    DeactivationRecorder deact;
    std::vector<TrainHook*> hooks{&tracker};
    if (spec.hooks.checks) hooks.push_back(&acts);
    if (spec.hooks.checks && cfg.algo == Algorithm::sam) hooks.push_back(&deact);

    const TrainResult tr = train(ds, net, cfg, hooks);
    const auto& pts = tr.trajectory.points;
    res.train_loss = pts.back().train_loss;
    for (const auto& p : pts)
      if (p.train_loss <= spec.converge_eps) {
        res.converged_iteration = static_cast<long long>(p.iteration);
        break;
      }

    Stream test_rng(test_seed(cell));
    const TestError te = estimate_test_error(tr.final, params, ds.mu, spec.n_test, test_rng);
    res.test_error = te.rate;
    res.test_stderr = te.std_error;

    const Coeffs& c = tracker.coeffs();
    res.max_gamma = c.gamma.size() ? c.gamma.maxCoeff() : 0.0;
    res.max_sum_zeta = c.zeta.size() ? c.zeta.rowwise().sum().maxCoeff() : 0.0;
    res.structural_violations = tracker.violations().sign + tracker.violations().pattern +
                                acts.history().inclusion_violations;

    std::ostringstream dg;
    dg << "struct=" << res.structural_violations;
    if (spec.hooks.checks) {
      const double T_star = spec.hooks.T_star.value_or(static_cast<double>(cfg.epochs * H));
      const TheoryConstants k = TheoryConstants::compute(ds, tr.initial, T_star, spec.hooks.delta);
      res.checks.push_back(check_set_monotonicity(acts.history()));
      res.checks.push_back(check_logit_ratio(pts, k.C2()));
      for (auto& r : check_coeff_bounds(tracker.series(), k, spec.n, cell.d)) res.checks.push_back(std::move(r));
      std::vector<int> y, y_hat;
      for (const auto& smp : ds.samples) {
        y.push_back(smp.y);
        y_hat.push_back(smp.y_hat);
      }
      res.checks.push_back(check_good_batches(tr.trajectory.schedules, y, y_hat).summary);
      if (cfg.algo == Algorithm::sam) {
        const double T1 = first_stage_epochs(net.m, cfg.B, spec.n, cfg.eta, cell.mu_norm);
        res.checks.push_back(check_sam_deactivation(deact.history(), T1));
      }
      for (const auto& r : res.checks) {
        if (r.check == "set_monotonicity") dg << ";mono=" << r.violations << '/' << r.total;
        if (r.check == "logit_ratio") dg << ";logit=" << short_num(r.worst_case_value);
        if (r.check == "zeta_upper") dg << ";zeta=" << short_num(r.worst_case_value);
        if (r.check == "sam_deactivation")
          dg << ";deact=" << r.violations << '/' << r.total << (r.vacuous ? "(vacuous)" : "");
      }
      dg << ";regime="
         << to_string(classify_regime(spec.n, cell.mu_norm, cell.d, params.P, params.sigma_p, spec.hooks.regime));
    }
    res.digest = dg.str();
  } catch (const Error& e) {
    res.ok = false;
    res.error = e.what();
  }
  return res;
}

std::vector<Cell> grid_cells(const GridSpec& spec) {
  std::vector<Cell> cells;
  for (const auto& v : spec.variants)
    for (std::size_t d : spec.d_values)
      for (double mu : spec.mu_values)
        for (std::uint64_t s : spec.seeds)
          cells.push_back({d, mu, s, v.name});
  return cells;
}

std::vector<TrialResult> run_grid(const GridSpec& spec, const GridRunOptions& opt) {
  spec.validate();
  const auto cells = grid_cells(spec);
  std::vector<TrialResult> results(cells.size());
  std::vector<bool> done(cells.size(), false);

  const bool persist = !opt.out_dir.empty();
  fs::path trials_dir, checks_dir;
  if (persist) {
    trials_dir = fs::path(opt.out_dir) / "trials";
    checks_dir = fs::path(opt.out_dir) / "checks";
    fs::create_directories(trials_dir);
    if (spec.hooks.checks) fs::create_directories(checks_dir);
    if (opt.resume) {
      for (std::size_t k = 0; k < cells.size(); ++k) {
        const fs::path p = trials_dir / (trial_key(cells[k]) + ".csv");
        if (!fs::exists(p)) continue;
        std::ifstream in(p);
        std::string header, row;
        if (std::getline(in, header) && std::getline(in, row)) {
          results[k] = parse_row(row);
          done[k] = true;
        }
      }
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::string io_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= cells.size()) return;
      if (done[k]) continue;
      TrialResult r;
      try {
        r = run_trial(cells[k], spec);
      } catch (const std::exception& e) {
        r.cell = cells[k];
        r.ok = false;
        r.error = e.what();
      }
      if (persist) {
        try {
          const std::string key = trial_key(cells[k]);
          if (!r.checks.empty()) {
            const fs::path cp = checks_dir / (key + ".csv");
            write_check_report_csv(cp.string() + ".part", r.checks);
            fs::rename(cp.string() + ".part", cp);
          }
          atomic_write(trials_dir / (key + ".csv"), std::string(kResultsHeader) + "\n" + result_row(r) + "\n");
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (io_error.empty()) io_error = e.what();
        }
      }
      results[k] = std::move(r);
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, cells.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (!io_error.empty()) throw Error("grid output: " + io_error);

  if (persist) {
    std::ostringstream all;
    all << kResultsHeader << '\n';
    for (const auto& r : results) all << result_row(r) << '\n';
    atomic_write(fs::path(opt.out_dir) / "results.csv", all.str());
  }
  return results;
}

void write_results_csv(const std::string& path, std::span<const TrialResult> rows) {
  std::ostringstream all;
  all << kResultsHeader << '\n';
  for (const auto& r : rows) all << result_row(r) << '\n';
  atomic_write(path, all.str());
}

std::vector<TrialResult> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::string line;
  std::getline(in, line);
  std::vector<TrialResult> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(parse_row(line));
  return rows;
}

std::vector<CellSummary> aggregate(std::span<const TrialResult> rows) {
  std::vector<CellSummary> cells;
  std::vector<double> var_sums;
  for (const auto& r : rows) {
    if (!r.ok) continue;
    auto it = std::find_if(cells.begin(), cells.end(), [&](const CellSummary& c) {
      return c.d == r.cell.d && c.mu_norm == r.cell.mu_norm && c.algo == r.cell.variant;
    });
    if (it == cells.end()) {
      cells.push_back({r.cell.d, r.cell.mu_norm, r.cell.variant});
      var_sums.push_back(0.0);
      it = cells.end() - 1;
    }
    const auto k = static_cast<std::size_t>(it - cells.begin());
    it->mean_test_error += r.test_error;
    it->mean_train_loss += r.train_loss;
    var_sums[k] += r.test_stderr * r.test_stderr;
    ++it->n_seeds;
  }
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const double s = static_cast<double>(cells[k].n_seeds);
    cells[k].mean_test_error /= s;
    cells[k].mean_train_loss /= s;
    cells[k].std_error = std::sqrt(var_sums[k]) / s;
  }
  return cells;
}

const CellSummary* find_cell(std::span<const CellSummary> cells, std::size_t d, double mu, const std::string& algo) {
  for (const auto& c : cells)
    if (c.d == d && c.mu_norm == mu && c.algo == algo) return &c;
  return nullptr;
}

std::vector<std::string> export_heatmap(std::span<const TrialResult> rows, const std::string& dir,
                                        std::size_t block) {
  fs::create_directories(dir);
  const auto cells = aggregate(rows);
  std::vector<std::string> algos;
  for (const auto& r : rows)
    if (std::find(algos.begin(), algos.end(), r.cell.variant) == algos.end()) algos.push_back(r.cell.variant);

  std::vector<std::string> written;
  if (algos.empty()) {
    const std::string p = (fs::path(dir) / "heatmap.csv").string();
    atomic_write(p, "d,mu_norm,algo,mean_test_error,stderr,n_seeds\n");
    written.push_back(p);
    return written;
  }
  block = std::max<std::size_t>(block, 1);
  for (const auto& algo : algos) {
    std::ostringstream csv;
    csv << "d,mu_norm,algo,mean_test_error,stderr,n_seeds\n";
    std::vector<std::size_t> ds;
    std::vector<double> mus;
    for (const auto& c : cells) {
      if (c.algo != algo) continue;
      csv << c.d << ',' << num(c.mu_norm) << ',' << c.algo << ',' << num(c.mean_test_error) << ','
          << num(c.std_error) << ',' << c.n_seeds << '\n';
      ds.push_back(c.d);
      mus.push_back(c.mu_norm);
    }
    const std::string csv_path = (fs::path(dir) / ("heatmap_" + algo + ".csv")).string();
    atomic_write(csv_path, csv.str());
    written.push_back(csv_path);
    if (ds.empty()) continue;

    std::sort(ds.begin(), ds.end());
    ds.erase(std::unique(ds.begin(), ds.end()), ds.end());
    std::sort(mus.begin(), mus.end());
    mus.erase(std::unique(mus.begin(), mus.end()), mus.end());
    const std::size_t W = ds.size() * block, Hpx = mus.size() * block;
    std::ostringstream pgm;
    pgm << "P2\n# test error heatmap for " << algo << ": x = d, y = ||mu|| (up), gray = 255 (1 - error)\n"
        << W << ' ' << Hpx << "\n255\n";
    for (std::size_t py = 0; py < Hpx; ++py) {
      const double mu = mus[mus.size() - 1 - py / block];
      for (std::size_t px = 0; px < W; ++px) {
        const CellSummary* c = find_cell(cells, ds[px / block], mu, algo);
        const int g = c ? static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(c->mean_test_error, 0.0, 1.0)))) : 0;
        pgm << g << (px + 1 == W ? '\n' : ' ');
      }
    }
    const std::string pgm_path = (fs::path(dir) / ("heatmap_" + algo + ".pgm")).string();
    atomic_write(pgm_path, pgm.str());
    written.push_back(pgm_path);
  }
  return written;
}

DeactivationStudy deactivation_study(const DeactivationSetup& setup, double c, std::span<const std::uint64_t> seeds) {
  DeactivationStudy out;
  out.tau = deactivation_tau(c, setup.m, setup.B, setup.P, setup.sigma_p, setup.d);
  out.T1 = first_stage_epochs(setup.m, setup.B, setup.n, setup.eta, setup.mu_norm);
  out.worst_post = -std::numeric_limits<double>::infinity();
  for (std::uint64_t s : seeds) {
    DataParams p;
    p.d = setup.d;
    p.P = setup.P;
    p.sigma_p = setup.sigma_p;
    p.mu_norm = setup.mu_norm;
    const Dataset ds = gen_dataset(p, setup.n, derive_seed(s, "deactivation", "data"));
    NetConfig net;
    net.m = setup.m;
    net.d = setup.d;
    net.init = InitScheme::gaussian;
    net.sigma_0 = 1.0 / (static_cast<double>(setup.P) * setup.sigma_p * std::sqrt(static_cast<double>(setup.d)));
    TrainConfig cfg;
    cfg.eta = setup.eta;
    cfg.B = setup.B;
    cfg.algo = Algorithm::sam;
    cfg.tau = out.tau;
    cfg.epochs = static_cast<std::size_t>(std::floor(out.T1)) + 1;
    cfg.seed = derive_seed(s, "deactivation", "train");
    DeactivationRecorder rec;
    TrainHook* hooks[] = {&rec};
    train(ds, net, cfg, hooks);
    const CheckReport r = check_sam_deactivation(rec.history(), out.T1);
    out.events += r.total;
    out.violations += r.violations;
    out.vacuous = out.vacuous || r.vacuous;
    if (r.total) out.worst_post = std::max(out.worst_post, r.worst_case_value);
  }
  return out;
}

double calibrate_tau_constant(const DeactivationSetup& setup, std::span<const std::uint64_t> seeds, double lo,
                              double hi, int iterations) {
  if (deactivation_study(setup, hi, seeds).violations != 0) return hi;
  for (int k = 0; k < iterations; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (deactivation_study(setup, mid, seeds).violations == 0)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

} // namespace samcnn

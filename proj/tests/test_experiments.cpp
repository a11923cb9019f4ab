#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "samcnn/error.hpp"
#include "samcnn/experiments.hpp"

using namespace samcnn;
namespace fs = std::filesystem;

namespace {

GridSpec tiny_spec() {
  GridSpec g;
  g.d_values = {200, 400};
  g.mu_values = {0.0, 4.0};
  g.seeds = {0, 1};
  g.n = 8;
  g.n_test = 200;
  TrainConfig t;
  t.B = 8;
  t.epochs = 10;
  t.eta = 0.05;
  TrainConfig s = t;
  s.algo = Algorithm::sam;
  s.tau = 0.03;
  g.variants = {{"sgd", t}, {"sam", s}};
  return g;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("samcnn_unit_" + name);
  fs::remove_all(p);
  return p;
}

TrialResult row(std::size_t d, double mu, const std::string& algo, double err, std::uint64_t seed = 0) {
  TrialResult r;
  r.cell = {d, mu, seed, algo};
  r.test_error = err;
  r.test_stderr = 0.01;
  return r;
}

} // namespace

TEST_SUITE("experiments") {

TEST_CASE("zero weights misclassify everything") {
  DataParams p;
  p.d = 20;
  Stream rng(1);
  const TestError e = estimate_test_error(Weights(2, 20), p, make_signal(20, 1.0), 500, rng);
  CHECK(e.rate == 1.0);
  CHECK(e.std_error == 0.0);
}

TEST_CASE("signal-aligned filters reach the Bayes risk") {
  // w_{+1,r} = mu, w_{-1,r} = -mu gives f = y_hat ||mu||^2 + <mu, xi>.
  for (double p : {0.0, 0.3}) {
    DataParams q;
    q.d = 50;
    q.p = p;
    q.mu_norm = 30.0;
    const Vector mu = make_signal(50, 30.0);
    Weights w(1, 50);
    w.matrix().row(0) = mu.transpose();
    w.matrix().row(1) = -mu.transpose();
    Stream rng(2);
    const TestError e = estimate_test_error(w, q, mu, 4000, rng);
    const double se = std::sqrt(std::max(p, 1e-3) * (1 - p) / 4000);
    CHECK(std::abs(e.rate - p) <= 3 * se);
    CHECK(e.std_error == doctest::Approx(std::sqrt(e.rate * (1 - e.rate) / 4000)));
  }
}

TEST_CASE("no signal means chance-level test error") {
  GridSpec g = tiny_spec();
  g.d_values = {300};
  g.mu_values = {0.0};
  g.seeds = {3};
  g.variants.resize(1);
  g.n_test = 2000;
  const TrialResult r = run_trial({300, 0.0, 3, "sgd"}, g);
  REQUIRE(r.ok);
  CHECK(std::abs(r.test_error - 0.5) < 4 * std::sqrt(0.25 / 2000));
}

TEST_CASE("variants of a cell share data and initialization") {
  const Cell a{400, 2.0, 5, "sgd"}, b{400, 2.0, 5, "sam"};
  CHECK(data_seed(a) == data_seed(b));
  CHECK(train_seed(a) == train_seed(b));
  CHECK(data_seed(a) != data_seed({400, 2.5, 5, "sgd"}));
  CHECK(data_seed(a) != train_seed(a));
}

TEST_CASE("1 x 1 grid gives one row") {
  GridSpec g = tiny_spec();
  g.d_values = {200};
  g.mu_values = {4.0};
  g.seeds = {0};
  g.variants.resize(1);
  const auto rows = run_grid(g);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].ok);
  CHECK(rows[0].train_loss >= 0.0);
  CHECK(rows[0].test_error >= 0.0);
  CHECK(rows[0].test_error <= 1.0);
  CHECK(rows[0].structural_violations == 0);
  CHECK(!rows[0].checks.empty());
}

TEST_CASE("grid output is deterministic across job counts and resumes") {
  const GridSpec g = tiny_spec();
  const fs::path a = fresh_dir("grid_a"), b = fresh_dir("grid_b");
  run_grid(g, {a.string(), 1, false});
  run_grid(g, {b.string(), 3, false});
  const std::string ra = slurp(a / "results.csv");
  CHECK(ra == slurp(b / "results.csv"));
  CHECK(fs::exists(a / "checks"));

  // drop some finished trials and the table, then resume
  std::size_t removed = 0;
  for (const auto& e : fs::directory_iterator(b / "trials"))
    if (removed < 5) {
      fs::remove(e.path());
      ++removed;
    }
  fs::remove(b / "results.csv");
  run_grid(g, {b.string(), 2, true});
  CHECK(slurp(b / "results.csv") == ra);

  const auto rows = read_results_csv((a / "results.csv").string());
  CHECK(rows.size() == 16);
  std::ostringstream again;
  write_results_csv((a / "copy.csv").string(), rows);
  CHECK(slurp(a / "copy.csv") == ra);
}

TEST_CASE("failed trials are recorded, not thrown") {
  GridSpec g = tiny_spec();
  g.d_values = {200};
  g.mu_values = {4.0};
  g.seeds = {0};
  g.variants.resize(1);
  g.variants[0].train.eta = 1e308;
  const auto rows = run_grid(g);
  REQUIRE(rows.size() == 1);
  CHECK(!rows[0].ok);
  CHECK(!rows[0].error.empty());
}

TEST_CASE("aggregation averages seeds") {
  std::vector<TrialResult> rows{row(1000, 1, "sgd", 0.2, 0), row(1000, 1, "sgd", 0.4, 1), row(1000, 2, "sgd", 0.1)};
  const auto cells = aggregate(rows);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].mean_test_error == doctest::Approx(0.3));
  CHECK(cells[0].n_seeds == 2);
  CHECK(cells[0].std_error == doctest::Approx(std::sqrt(2 * 1e-4) / 2));
  CHECK(find_cell(cells, 1000, 2, "sgd")->mean_test_error == doctest::Approx(0.1));
  CHECK(find_cell(cells, 1000, 2, "sam") == nullptr);
}

TEST_CASE("heatmap: empty table writes a header only") {
  const fs::path dir = fresh_dir("heat_empty");
  const auto files = export_heatmap({}, dir.string());
  REQUIRE(files.size() == 1);
  CHECK(slurp(files[0]) == "d,mu_norm,algo,mean_test_error,stderr,n_seeds\n");
  bool any_pgm = false;
  for (const auto& e : fs::directory_iterator(dir)) any_pgm = any_pgm || e.path().extension() == ".pgm";
  CHECK(!any_pgm);
}

namespace {

std::vector<std::vector<int>> read_pgm(const fs::path& p) {
  std::ifstream in(p);
  std::string magic, line;
  in >> magic;
  std::getline(in, line);
  while (in.peek() == '#') std::getline(in, line);
  int w = 0, h = 0, maxv = 0;
  in >> w >> h >> maxv;
  std::vector<std::vector<int>> img(static_cast<std::size_t>(h), std::vector<int>(static_cast<std::size_t>(w)));
  for (auto& r : img)
    for (auto& v : r) in >> v;
  return img;
}

} // namespace

TEST_CASE("heatmap: constant table gives a uniform image") {
  std::vector<TrialResult> rows;
  for (std::size_t d : {1000, 2000})
    for (double mu : {1.0, 2.0, 3.0}) rows.push_back(row(d, mu, "sgd", 0.25));
  const fs::path dir = fresh_dir("heat_const");
  export_heatmap(rows, dir.string(), 2);
  const auto img = read_pgm(dir / "heatmap_sgd.pgm");
  REQUIRE(img.size() == 6);
  REQUIRE(img[0].size() == 4);
  for (const auto& r : img)
    for (int v : r) CHECK(v == 191);
}

TEST_CASE("heatmap: monotone table gives monotone intensity") {
  std::vector<TrialResult> rows;
  const std::size_t ds[] = {1000, 5000, 20000};
  const double mus[] = {1.0, 3.0, 6.0, 10.0};
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 4; ++b) rows.push_back(row(ds[a], mus[b], "sgd", 0.1 * (a + 1) / (b + 1)));
  const fs::path dir = fresh_dir("heat_mono");
  export_heatmap(rows, dir.string(), 1);
  const auto img = read_pgm(dir / "heatmap_sgd.pgm");
  // columns: d increasing (error up, intensity down); rows: mu decreasing downwards
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 1; x < 3; ++x) CHECK(img[y][x] <= img[y][x - 1]);
  for (std::size_t x = 0; x < 3; ++x)
    for (std::size_t y = 1; y < 4; ++y) CHECK(img[y][x] <= img[y - 1][x]);
  const std::string csv = slurp(dir / "heatmap_sgd.csv");
  CHECK(csv.find("20000,10,sgd,") != std::string::npos);
}

TEST_CASE("grid validation") {
  GridSpec g = tiny_spec();
  g.d_values.clear();
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = tiny_spec();
  g.n_test = 0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = tiny_spec();
  g.variants[0].train.B = 3;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("minibatch and learning-rate ablations are plain grid specs") {
  GridSpec g = tiny_spec();
  g.d_values = {200};
  g.mu_values = {4.0};
  g.seeds = {0};
  g.variants.clear();
  for (double eta : {0.001, 0.01, 0.1, 1.0}) {
    TrainConfig t;
    t.B = 4;
    t.epochs = 5;
    t.eta = eta;
    g.variants.push_back({"lr" + std::to_string(eta), t});
  }
  const auto rows = run_grid(g);
  CHECK(rows.size() == 4);
  for (const auto& r : rows) CHECK(r.ok);
}

}

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "samcnn/error.hpp"
#include "samcnn/io.hpp"

using namespace samcnn;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "samcnn_unit_io";
  fs::create_directories(dir);
  return dir / name;
}

} // namespace

TEST_SUITE("io") {

TEST_CASE("dataset round trip") {
  DataParams p;
  p.d = 17;
  p.P = 3;
  p.p = 0.2;
  p.sigma_p = 0.7;
  p.mu_norm = 2.5;
  const Dataset ds = gen_dataset(p, 9, 42);
  const auto path = tmp("data.bin").string();
  write_dataset(path, ds);
  const Dataset back = read_dataset(path);
  CHECK(back.size() == 9);
  CHECK(back.seed == 42);
  CHECK(back.params.P == 3);
  CHECK(back.params.sigma_p == 0.7);
  CHECK(back.mu == ds.mu);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(back.samples[i].xi == ds.samples[i].xi);
    CHECK(back.samples[i].y == ds.samples[i].y);
    CHECK(back.samples[i].y_hat == ds.samples[i].y_hat);
    CHECK(back.samples[i].signal_pos == ds.samples[i].signal_pos);
  }
}

TEST_CASE("weights round trip") {
  NetConfig c;
  c.m = 3;
  c.d = 11;
  const Weights w = init_weights(c, 1);
  const auto path = tmp("w.bin").string();
  write_weights(path, w);
  CHECK(read_weights(path) == w);
}

TEST_CASE("corrupt files are rejected") {
  const auto path = tmp("junk.bin").string();
  std::ofstream(path) << "nonsense";
  CHECK_THROWS_AS(read_dataset(path), Error);
  CHECK_THROWS_AS(read_weights(path), Error);
  NetConfig c;
  c.m = 1;
  c.d = 4;
  write_weights(path, init_weights(c, 2));
  fs::resize_file(path, fs::file_size(path) - 8);
  CHECK_THROWS_AS(read_weights(path), Error);
}

TEST_CASE("metrics csv") {
  Trajectory t;
  TrajectoryPoint p;
  p.t = 1;
  p.b = 0;
  p.train_loss = 0.5;
  p.margins = Vector::LinSpaced(3, -1.0, 2.0);
  t.points.push_back(p);
  const auto path = tmp("m.csv").string();
  write_metrics_csv(path, t);
  std::ifstream in(path);
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  CHECK(header == "t,b,train_loss,min_margin,max_margin");
  CHECK(line == "1,0,0.5,-1,2");
}

TEST_CASE("manifest json round trip") {
  RunManifest m;
  m.command = "grid";
  m.config = "seed = 1\n";
  m.seed = 1;
  m.started = utc_timestamp();
  m.outputs = {"results.csv"};
  const RunManifest back = RunManifest::from_json(m.to_json());
  CHECK(back.command == "grid");
  CHECK(back.config == m.config);
  CHECK(back.outputs == m.outputs);
  CHECK(back.version == SAMCNN_VERSION);
  CHECK(m.started.size() == 20);
}

}

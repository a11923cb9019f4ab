#include "samcnn/io.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "samcnn/error.hpp"

namespace samcnn {

namespace {

constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& o, T v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error(path + ": truncated file");
  return v;
}

void put_doubles(std::ostream& o, const double* p, std::size_t count) {
  o.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
}

void get_doubles(std::istream& in, double* p, std::size_t count, const std::string& path) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw Error(path + ": truncated file");
}

void check_magic(std::istream& in, const char* magic, const std::string& path) {
  char buf[4];
  in.read(buf, 4);
  if (!in || std::memcmp(buf, magic, 4) != 0) throw Error(path + ": not a " + std::string(magic, 4) + " file");
  if (get<std::uint32_t>(in, path) != kVersion) throw Error(path + ": unsupported format version");
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << content;
    if (!out.flush()) throw Error("write failed: " + path);
  }
  std::filesystem::rename(tmp, path);
}

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write("SAMD", 4);
  put(out, kVersion);
  const auto& p = ds.params;
  put<std::uint64_t>(out, p.d);
  put<std::uint64_t>(out, p.P);
  put<std::uint64_t>(out, ds.size());
  put(out, p.sigma_p);
  put(out, p.p);
  put(out, p.mu_norm);
  put<std::uint64_t>(out, ds.seed);
  put_doubles(out, ds.mu.data(), p.d);
  for (const auto& s : ds.samples) {
    put<std::int32_t>(out, s.y);
    put<std::int32_t>(out, s.y_hat);
    put<std::uint64_t>(out, s.signal_pos);
    put_doubles(out, s.xi.data(), p.d);
  }
  if (!out.flush()) throw Error("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  check_magic(in, "SAMD", path);
  Dataset ds;
  auto& p = ds.params;
  p.d = get<std::uint64_t>(in, path);
  p.P = get<std::uint64_t>(in, path);
  const auto n = get<std::uint64_t>(in, path);
  p.sigma_p = get<double>(in, path);
  p.p = get<double>(in, path);
  p.mu_norm = get<double>(in, path);
  ds.seed = get<std::uint64_t>(in, path);
  p.validate();
  ds.mu = Vector(static_cast<Eigen::Index>(p.d));
  get_doubles(in, ds.mu.data(), p.d, path);
  ds.samples.resize(n);
  for (auto& s : ds.samples) {
    s.y = get<std::int32_t>(in, path);
    s.y_hat = get<std::int32_t>(in, path);
    s.signal_pos = get<std::uint64_t>(in, path);
    s.num_patches = p.P;
    if (std::abs(s.y) != 1 || std::abs(s.y_hat) != 1 || s.signal_pos >= p.P)
      throw Error(path + ": corrupt sample record");
    s.xi = Vector(static_cast<Eigen::Index>(p.d));
    get_doubles(in, s.xi.data(), p.d, path);
  }
  return ds;
}

void write_weights(const std::string& path, const Weights& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write("SAMW", 4);
  put(out, kVersion);
  put<std::uint64_t>(out, w.m());
  put<std::uint64_t>(out, w.d());
  put_doubles(out, w.matrix().data(), 2 * w.m() * w.d());
  if (!out.flush()) throw Error("write failed: " + path);
}

Weights read_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  check_magic(in, "SAMW", path);
  const auto m = get<std::uint64_t>(in, path);
  const auto d = get<std::uint64_t>(in, path);
  if (m == 0 || d == 0 || m > (1u << 20) || d > (1u << 28)) throw Error(path + ": implausible shape");
  Weights w(m, d);
  get_doubles(in, w.matrix().data(), 2 * m * d, path);
  return w;
}

void write_metrics_csv(const std::string& path, const Trajectory& traj) {
  std::string s = "t,b,train_loss,min_margin,max_margin\n";
  for (const auto& p : traj.points)
    s += std::to_string(p.t) + ',' + std::to_string(p.b) + ',' + num(p.train_loss) + ',' + num(p.min_margin()) +
         ',' + num(p.max_margin()) + '\n';
  write_text_atomic(path, s);
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["version"] = version;
  j["seed"] = seed;
  j["started"] = started;
  j["finished"] = finished;
  j["config"] = config;
  j["outputs"] = outputs;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  RunManifest m;
  m.command = j.value("command", "");
  m.version = j.value("version", "");
  m.seed = j.value("seed", std::uint64_t{0});
  m.started = j.value("started", "");
  m.finished = j.value("finished", "");
  m.config = j.value("config", "");
  m.outputs = j.value("outputs", std::vector<std::string>{});
  return m;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace samcnn

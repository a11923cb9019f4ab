#include "samcnn/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "samcnn/error.hpp"

namespace samcnn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

double to_double(const std::string& key, const std::string& v) {
  if (v.empty()) throw ConfigError(key, "expected a number");
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size()) throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key, "expected true/false, got '" + v + "'");
}

/// "a,b,c" and inclusive ranges "lo:hi:step", mixed freely.
std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(key, "empty list item");
    const auto c1 = item.find(':');
    if (c1 == std::string::npos) {
      out.push_back(to_double(key, item));
      continue;
    }
    const auto c2 = item.find(':', c1 + 1);
    if (c2 == std::string::npos) throw ConfigError(key, "range must be lo:hi:step, got '" + item + "'");
    const double lo = to_double(key, trim(item.substr(0, c1)));
    const double hi = to_double(key, trim(item.substr(c1 + 1, c2 - c1 - 1)));
    const double step = to_double(key, trim(item.substr(c2 + 1)));
    if (!(step > 0.0) || hi < lo) throw ConfigError(key, "range needs lo <= hi and step > 0");
    const auto count = static_cast<long long>(std::floor((hi - lo) / step + 1e-9));
    for (long long k = 0; k <= count; ++k) out.push_back(lo + static_cast<double>(k) * step);
  }
  if (out.empty()) throw ConfigError(key, "empty list");
  return out;
}

template <typename T>
std::vector<T> to_int_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  for (double x : to_list(key, v)) {
    if (x < 0 || x != std::floor(x)) throw ConfigError(key, "expected non-negative integers");
    out.push_back(static_cast<T>(x));
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) s += ',';
    if constexpr (std::is_floating_point_v<T>)
      s += num(xs[k]);
    else
      s += std::to_string(xs[k]);
  }
  return s;
}

const std::vector<std::string> kTrainFields = {"eta", "B", "epochs", "algo", "tau",
                                               "record_every", "snapshot_every", "sam_iterations"};

bool set_train_field(TrainConfig& t, const std::string& key, const std::string& field, const std::string& v) {
  if (field == "eta") t.eta = to_double(key, v);
  else if (field == "B") t.B = to_size(key, v);
  else if (field == "epochs") t.epochs = to_size(key, v);
  else if (field == "algo") {
    try {
      t.algo = parse_algorithm(v);
    } catch (const ConfigError& e) {
      throw ConfigError(key, e.what());
    }
  }
  else if (field == "tau") t.tau = to_double(key, v);
  else if (field == "record_every") t.record_every = to_size(key, v);
  else if (field == "snapshot_every") t.snapshot_every = to_size(key, v);
  else if (field == "sam_iterations") {
    if (v == "none" || v.empty()) t.sam_iterations.reset();
    else t.sam_iterations = to_size(key, v);
  }
  else return false;
  return true;
}

void dump_train(std::ostringstream& o, const std::string& prefix, const TrainConfig& t) {
  o << prefix << "eta = " << num(t.eta) << '\n'
    << prefix << "B = " << t.B << '\n'
    << prefix << "epochs = " << t.epochs << '\n'
    << prefix << "algo = " << to_string(t.algo) << '\n'
    << prefix << "tau = " << num(t.tau) << '\n'
    << prefix << "record_every = " << t.record_every << '\n'
    << prefix << "snapshot_every = " << t.snapshot_every << '\n'
    << prefix << "sam_iterations = " << (t.sam_iterations ? std::to_string(*t.sam_iterations) : "none") << '\n';
}

bool valid_variant_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '_' || c == '-'; });
}

} // namespace

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k = {"seed",          "data.n",        "data.d",          "data.P",
                                  "data.sigma_p",  "data.p",        "data.mu_norm",    "net.m",
                                  "net.init",      "net.sigma_0",   "hooks.checks",    "hooks.oracle_every",
                                  "hooks.delta",   "hooks.T_star",  "hooks.c_lo",      "hooks.c_hi",
                                  "eval.n_test",   "eval.converge_eps", "grid.d",      "grid.mu",
                                  "grid.seeds"};
    for (const auto& f : kTrainFields) k.push_back("train." + f);
    return k;
  }();
  return keys;
}

std::string env_name(const std::string& key) {
  std::string s = "SAMCNN_";
  for (char c : key) s += c == '.' || c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                  const std::string& source) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno), "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno), "missing key");
    kv.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return kv;
}

RunConfig config_from_pairs(const std::vector<std::pair<std::string, std::string>>& kv) {
  RunConfig c;
  // variant.<name>.<field>, applied after train.* so variants inherit it
  std::vector<std::string> variant_order;
  std::vector<std::tuple<std::string, std::string, std::string, std::string>> variant_kv;

  for (const auto& [key, v] : kv) {
    if (key.rfind("variant.", 0) == 0) {
      const auto dot = key.find('.', 8);
      if (dot == std::string::npos) throw ConfigError(key, "expected variant.<name>.<field>");
      const std::string name = key.substr(8, dot - 8);
      const std::string field = key.substr(dot + 1);
      if (!valid_variant_name(name)) throw ConfigError(key, "variant names use letters, digits, '_' or '-'");
      if (std::find(kTrainFields.begin(), kTrainFields.end(), field) == kTrainFields.end())
        throw ConfigError(key, "unknown variant field '" + field + "'");
      if (std::find(variant_order.begin(), variant_order.end(), name) == variant_order.end())
        variant_order.push_back(name);
      variant_kv.emplace_back(name, field, key, v);
      continue;
    }
    if (key == "seed") c.seed = to_u64(key, v);
    else if (key == "data.n") c.n = to_size(key, v);
    else if (key == "data.d") c.data.d = to_size(key, v);
    else if (key == "data.P") c.data.P = to_size(key, v);
    else if (key == "data.sigma_p") c.data.sigma_p = to_double(key, v);
    else if (key == "data.p") c.data.p = to_double(key, v);
    else if (key == "data.mu_norm") c.data.mu_norm = to_double(key, v);
    else if (key == "net.m") c.net.m = to_size(key, v);
    else if (key == "net.init") {
      try {
        c.net.init = parse_init_scheme(v);
      } catch (const ConfigError& e) {
        throw ConfigError(key, e.what());
      }
    }
    else if (key == "net.sigma_0") c.net.sigma_0 = to_double(key, v);
    else if (key == "hooks.checks") c.hooks.checks = to_bool(key, v);
    else if (key == "hooks.oracle_every") c.hooks.oracle_every = to_size(key, v);
    else if (key == "hooks.delta") c.hooks.delta = to_double(key, v);
    else if (key == "hooks.T_star") {
      if (v == "auto") c.hooks.T_star.reset();
      else c.hooks.T_star = to_double(key, v);
    }
    else if (key == "hooks.c_lo") c.hooks.regime.c_lo = to_double(key, v);
    else if (key == "hooks.c_hi") c.hooks.regime.c_hi = to_double(key, v);
    else if (key == "eval.n_test") c.n_test = to_size(key, v);
    else if (key == "eval.converge_eps") c.converge_eps = to_double(key, v);
    else if (key == "grid.d") c.grid_d = to_int_list<std::size_t>(key, v);
    else if (key == "grid.mu") c.grid_mu = to_list(key, v);
    else if (key == "grid.seeds") c.grid_seeds = to_int_list<std::uint64_t>(key, v);
    else if (key.rfind("train.", 0) == 0 && set_train_field(c.train, key, key.substr(6), v)) {}
    else throw ConfigError(key, "unknown key");
  }
  c.net.d = c.data.d;

  for (const auto& name : variant_order) {
    Variant var{name, c.train};
    for (const auto& [vn, field, key, v] : variant_kv)
      if (vn == name) set_train_field(var.train, key, field, v);
    c.variants.push_back(std::move(var));
  }
  if (c.hooks.delta <= 0.0 || c.hooks.delta >= 1.0) throw ConfigError("hooks.delta", "must lie in (0, 1)");
  if (c.hooks.regime.c_lo > c.hooks.regime.c_hi) throw ConfigError("hooks.c_lo", "must not exceed hooks.c_hi");
  return c;
}

RunConfig parse_config(const std::string& text, bool env, const std::string& source) {
  auto kv = parse_key_values(text, source);
  if (env) {
    std::vector<std::string> keys = known_keys();
    // variant keys can only be overridden for variants the file declares
    for (const auto& [k, v] : kv)
      if (k.rfind("variant.", 0) == 0) {
        const auto dot = k.find('.', 8);
        if (dot == std::string::npos) continue;
        for (const auto& f : kTrainFields) keys.push_back(k.substr(0, dot + 1) + f);
      }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    for (const auto& k : keys)
      if (const char* e = std::getenv(env_name(k).c_str())) kv.emplace_back(k, trim(e));
  }
  return config_from_pairs(kv);
}

RunConfig load_config(const std::string& path, bool env) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), env, path);
}

void RunConfig::validate() const {
  data.validate();
  NetConfig nc = net;
  nc.d = data.d;
  nc.validate();
  if (n < 1) throw ConfigError("data.n", "must be >= 1");
  train.validate(n);
  for (const auto& v : variants) v.train.validate(n);
  if (n_test < 1) throw ConfigError("eval.n_test", "must be >= 1");
}

GridSpec RunConfig::grid_spec() const {
  GridSpec g;
  g.d_values = grid_d.empty() ? std::vector<std::size_t>{data.d} : grid_d;
  g.mu_values = grid_mu.empty() ? std::vector<double>{data.mu_norm} : grid_mu;
  g.seeds = grid_seeds.empty() ? std::vector<std::uint64_t>{seed} : grid_seeds;
  g.n = n;
  g.data = data;
  g.net = net;
  g.variants = variants.empty() ? std::vector<Variant>{{to_string(train.algo), train}} : variants;
  g.n_test = n_test;
  g.converge_eps = converge_eps;
  g.hooks = hooks;
  return g;
}

std::string RunConfig::dump() const {
  std::ostringstream o;
  o << "seed = " << seed << '\n'
    << "data.n = " << n << '\n'
    << "data.d = " << data.d << '\n'
    << "data.P = " << data.P << '\n'
    << "data.sigma_p = " << num(data.sigma_p) << '\n'
    << "data.p = " << num(data.p) << '\n'
    << "data.mu_norm = " << num(data.mu_norm) << '\n'
    << "net.m = " << net.m << '\n'
    << "net.init = " << to_string(net.init) << '\n'
    << "net.sigma_0 = " << num(net.sigma_0) << '\n';
  dump_train(o, "train.", train);
  o << "hooks.checks = " << (hooks.checks ? "true" : "false") << '\n'
    << "hooks.oracle_every = " << hooks.oracle_every << '\n'
    << "hooks.delta = " << num(hooks.delta) << '\n'
    << "hooks.T_star = " << (hooks.T_star ? num(*hooks.T_star) : "auto") << '\n'
    << "hooks.c_lo = " << num(hooks.regime.c_lo) << '\n'
    << "hooks.c_hi = " << num(hooks.regime.c_hi) << '\n'
    << "eval.n_test = " << n_test << '\n'
    << "eval.converge_eps = " << num(converge_eps) << '\n';
  if (!grid_d.empty()) o << "grid.d = " << join(grid_d) << '\n';
  if (!grid_mu.empty()) o << "grid.mu = " << join(grid_mu) << '\n';
  if (!grid_seeds.empty()) o << "grid.seeds = " << join(grid_seeds) << '\n';
  for (const auto& v : variants) dump_train(o, "variant." + v.name + ".", v.train);
  return o.str();
}

std::uint64_t RunConfig::data_seed() const { return derive_seed(seed, "data"); }
std::uint64_t RunConfig::train_seed() const { return derive_seed(seed, "train"); }
std::uint64_t RunConfig::test_seed() const { return derive_seed(seed, "test"); }

} // namespace samcnn

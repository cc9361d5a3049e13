#include "fisherflow/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "fisherflow/errors.hpp"

namespace fisherflow {

namespace {

std::vector<std::string> words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

double to_double(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v)) {
    throw ValidationError(fmt::format("{}: '{}' is not a finite number", what, text));
  }
  return v;
}

std::vector<double> number_list(const std::string& text, const std::string& what) {
  std::string cleaned = text;
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  std::vector<double> out;
  for (const auto& w : words(cleaned)) out.push_back(to_double(w, what));
  if (out.empty()) throw ValidationError(fmt::format("{}: empty list", what));
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

RunConfig from_tree(const boost::property_tree::ptree& tree) {
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ValidationError(fmt::format("config: key '{}' outside a section", section));
    }
    for (const auto& [key, value] : body) {
      cfg.set(section, key, trim(value.get_value<std::string>()));
    }
  }
  return cfg;
}

}  // namespace

QuadraticSpec parse_quadratic(const std::string& text) {
  const auto w = words(text);
  if (w.empty() || w[0] != "quadratic" || w.size() < 2 || w.size() > 3) {
    throw ValidationError(
        fmt::format("quadratic spec must be 'quadratic a [center]' (got '{}')", text));
  }
  QuadraticSpec q;
  q.a = to_double(w[1], "quadratic a");
  q.center = w.size() == 3 ? to_double(w[2], "quadratic center") : 0.0;
  if (!(q.a > 0.0)) throw ValidationError(fmt::format("quadratic a > 0 required (got {})", q.a));
  return q;
}

PerturbationSpec parse_perturbation(const std::string& text) {
  const auto w = words(text);
  PerturbationSpec p;
  if (w.size() == 1 && w[0] == "none") return p;
  if (w.size() == 3 && w[0] == "cosine") {
    p.kind = PerturbationSpec::Kind::kCosine;
    p.amplitude = to_double(w[1], "cosine amplitude");
    p.scale = to_double(w[2], "cosine frequency");
    return p;
  }
  if (w.size() == 4 && w[0] == "bump") {
    p.kind = PerturbationSpec::Kind::kBump;
    p.amplitude = to_double(w[1], "bump amplitude");
    p.scale = to_double(w[2], "bump width");
    p.center = to_double(w[3], "bump center");
    if (!(p.scale > 0.0)) throw ValidationError("bump width > 0 required");
    return p;
  }
  throw ValidationError(fmt::format(
      "perturbation spec must be 'none', 'cosine A k' or 'bump A width center' (got '{}')", text));
}

KernelSpec parse_kernel(const std::string& text) {
  const auto w = words(text);
  KernelSpec k;
  if (w.size() == 1 && (w[0] == "none" || w[0] == "zero")) return k;
  if (w.size() == 3 && w[0] == "gaussian") {
    k.kind = KernelSpec::Kind::kGaussian;
    k.amplitude = to_double(w[1], "kernel amplitude");
    k.width = to_double(w[2], "kernel width");
    if (!(k.width > 0.0)) throw ValidationError("gaussian kernel width > 0 required");
    return k;
  }
  if (w.size() == 2 && w[0] == "quadratic") {
    k.kind = KernelSpec::Kind::kQuadratic;
    k.amplitude = to_double(w[1], "kernel amplitude");
    return k;
  }
  throw ValidationError(fmt::format(
      "kernel spec must be 'none', 'gaussian A s' or 'quadratic A' (got '{}')", text));
}

RunConfig::RunConfig()
    : values_{
          {"grid", {{"x_min", "-8"}, {"x_max", "8"}, {"n", "2048"}}},
          {"model",
           {{"variant", "linear"},
            {"confining", "quadratic 1 0"},
            {"perturbation", "none"},
            {"kernel", "none"},
            {"kappa_lower", "2"}}},
          {"params", {{"sigma", "1"}, {"gamma", "0"}}},
          {"initial", {{"v0", "quadratic 0.625 0.5"}, {"w0", "none"}}},
          {"dynamics",
           {{"dt", "0.001"},
            {"t_end", "10"},
            {"record_stride", "10"},
            {"stationary_tol", "1e-9"},
            {"max_steps", "10000000"},
            {"scheme", "implicit"}}},
          {"proximal",
           {{"h", "0.1"},
            {"T", "1"},
            {"inner_tol", "1e-8"},
            {"inner_max_steps", "1000000"},
            {"reference_dt", "0.0001"}}},
          {"particles",
           {{"N", "20000"},
            {"M", "20000"},
            {"dt", "0.01"},
            {"t_end", "1"},
            {"seed", "1"},
            {"barpsi_points", "161"},
            {"record_stride", "0"}}},
          {"output", {{"directory", "out"}, {"formats", "csv,dat"}}},
          {"sweep",
           {{"kind", "sigma"},
            {"sigmas", "1 0.5 0.25 0.125"},
            {"hs", "0.2 0.1 0.05 0.025 0.0125"}}},
      } {}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("config file '{}' cannot be opened", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

RunConfig RunConfig::from_string(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError(fmt::format("config parse error: {}", e.message()));
  }
  return from_tree(tree);
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  const auto s = values_.find(section);
  if (s == values_.end()) throw ValidationError(fmt::format("config: unknown section [{}]", section));
  const auto k = s->second.find(key);
  if (k == s->second.end()) {
    throw ValidationError(fmt::format("config: unknown key '{}' in [{}]", key, section));
  }
  k->second = value;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ValidationError(
        fmt::format("override must look like section.key=value (got '{}')", assignment));
  }
  set(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
      trim(assignment.substr(eq + 1)));
}

const std::string& RunConfig::raw(const std::string& section, const std::string& key) const {
  return values_.at(section).at(key);
}

std::string RunConfig::to_ini() const {
  std::string out;
  for (const auto& [section, keys] : values_) {
    out += fmt::format("[{}]\n", section);
    for (const auto& [key, value] : keys) out += fmt::format("{} = {}\n", key, value);
    out += "\n";
  }
  return out;
}

double RunConfig::number(const std::string& section, const std::string& key) const {
  return to_double(raw(section, key), section + "." + key);
}

std::uint64_t RunConfig::count(const std::string& section, const std::string& key) const {
  const std::string& text = raw(section, key);
  std::size_t used = 0;
  unsigned long long v = 0;
  const bool ok = !text.empty() && text[0] != '-' && [&] {
    try {
      v = std::stoull(text, &used, 10);
      return used == text.size();
    } catch (const std::exception&) {
      return false;
    }
  }();
  if (!ok) {
    throw ValidationError(
        fmt::format("{}.{}: '{}' is not a nonnegative integer", section, key, text));
  }
  return v;
}

Grid1D RunConfig::grid() const {
  return Grid1D(number("grid", "x_min"), number("grid", "x_max"), count("grid", "n"));
}

FreeEnergyModel RunConfig::model() const {
  const Grid1D g = grid();
  const QuadraticSpec q = parse_quadratic(raw("model", "confining"));
  const PerturbationSpec w = parse_perturbation(raw("model", "perturbation"));
  const KernelSpec k = parse_kernel(raw("model", "kernel"));
  const double kappa = number("model", "kappa_lower");
  const std::string& variant = raw("model", "variant");
  if (variant == "linear") {
    if (k.kind != KernelSpec::Kind::kZero) {
      throw ValidationError("model.kernel must be 'none' for variant = linear");
    }
    return FreeEnergyModel::linear(g, q, w, kappa);
  }
  if (variant == "interaction") return FreeEnergyModel::interaction(g, q, w, k, kappa);
  throw ValidationError(
      fmt::format("model.variant must be 'linear' or 'interaction' (got '{}')", variant));
}

Params RunConfig::params() const {
  return Params(number("params", "sigma"), number("params", "gamma"));
}

InitialCondition RunConfig::initial() const {
  return InitialCondition{parse_quadratic(raw("initial", "v0")),
                          parse_perturbation(raw("initial", "w0"))};
}

DynamicsConfig RunConfig::dynamics() const {
  DynamicsConfig c;
  c.dt = number("dynamics", "dt");
  c.t_end = number("dynamics", "t_end");
  c.record_stride = count("dynamics", "record_stride");
  c.stationary_tol = number("dynamics", "stationary_tol");
  c.max_steps = count("dynamics", "max_steps");
  const std::string& scheme = raw("dynamics", "scheme");
  if (scheme == "implicit") {
    c.scheme = TimeScheme::kImplicit;
  } else if (scheme == "strang") {
    c.scheme = TimeScheme::kStrangCrankNicolson;
  } else {
    throw ValidationError(
        fmt::format("dynamics.scheme must be 'implicit' or 'strang' (got '{}')", scheme));
  }
  if (!(c.stationary_tol > 0.0)) {
    throw ValidationError("dynamics.stationary_tol > 0 required");
  }
  c.validate();
  return c;
}

ProxConfig RunConfig::proximal() const {
  ProxConfig c;
  c.h = number("proximal", "h");
  c.T = number("proximal", "T");
  c.inner_tol = number("proximal", "inner_tol");
  c.inner_max_steps = count("proximal", "inner_max_steps");
  c.validate();
  return c;
}

double RunConfig::reference_dt() const {
  const double dt = number("proximal", "reference_dt");
  if (!(dt > 0.0)) throw ValidationError("proximal.reference_dt > 0 required");
  return dt;
}

ParticleConfig RunConfig::particles() const {
  ParticleConfig c;
  c.N = count("particles", "N");
  c.M = count("particles", "M");
  c.dt = number("particles", "dt");
  c.t_end = number("particles", "t_end");
  c.seed = count("particles", "seed");
  c.barpsi_points = count("particles", "barpsi_points");
  c.record_stride = count("particles", "record_stride");
  c.validate();
  return c;
}

std::string RunConfig::output_directory() const {
  const std::string& d = raw("output", "directory");
  if (d.empty()) throw ValidationError("output.directory must not be empty");
  return d;
}

std::vector<std::string> RunConfig::output_formats() const {
  std::string text = raw("output", "formats");
  std::replace(text.begin(), text.end(), ',', ' ');
  auto f = words(text);
  for (const auto& w : f) {
    if (w != "csv" && w != "dat") {
      throw ValidationError(fmt::format("output.formats entries must be csv or dat (got '{}')", w));
    }
  }
  if (std::find(f.begin(), f.end(), "csv") == f.end()) {
    throw ValidationError("output.formats must include csv");
  }
  return f;
}

std::vector<double> RunConfig::sweep_sigmas() const {
  auto s = number_list(raw("sweep", "sigmas"), "sweep.sigmas");
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!(s[k] > 0.0) || (k > 0 && !(s[k] < s[k - 1]))) {
      throw ValidationError("sweep.sigmas must be positive and strictly decreasing");
    }
  }
  return s;
}

std::vector<double> RunConfig::sweep_hs() const {
  auto h = number_list(raw("sweep", "hs"), "sweep.hs");
  for (double v : h) {
    if (!(v > 0.0)) throw ValidationError("sweep.hs entries must be > 0");
  }
  return h;
}

std::string RunConfig::sweep_kind() const {
  const std::string& k = raw("sweep", "kind");
  if (k != "sigma" && k != "h" && k != "both") {
    throw ValidationError(fmt::format("sweep.kind must be sigma, h or both (got '{}')", k));
  }
  return k;
}

void RunConfig::validate() const {
  const FreeEnergyModel m = model();
  (void)params();
  const GridDensity p0 = initial().materialize(m.grid());
  (void)p0;
  (void)dynamics();
  (void)proximal();
  (void)reference_dt();
  (void)particles();
  (void)output_directory();
  (void)output_formats();
  (void)sweep_sigmas();
  (void)sweep_hs();
  (void)sweep_kind();
}

}  // namespace fisherflow

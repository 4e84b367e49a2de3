#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bsvie/error.hpp"
#include "bsvie/format.hpp"

namespace bsvie::cli {

void config_fail(const std::string& message) { fail(ErrorKind::config_error, message); }

Section::Section(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
  if (!j.is_object()) config_fail(path_ + ": expected an object");
}

std::string Section::where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

bool Section::has(const std::string& key) const { return j_->contains(key); }

const json& Section::at(const std::string& key) {
  used_.insert(key);
  return j_->at(key);
}

const json& Section::raw(const std::string& key) {
  if (!has(key)) config_fail(where(key) + ": missing");
  return at(key);
}

double Section::number(const std::string& key, std::optional<double> fallback, Range range) {
  double v = 0.0;
  if (!has(key)) {
    if (!fallback) config_fail(where(key) + ": missing");
    v = *fallback;
  } else {
    const json& n = at(key);
    if (!n.is_number()) config_fail(where(key) + ": expected a number");
    v = n.get<double>();
  }
  const bool below = range.lo_open ? v <= range.lo : v < range.lo;
  if (!std::isfinite(v) || below || v > range.hi) {
    config_fail(where(key) + ": " + format_double(v) + " outside " + (range.lo_open ? "(" : "[") +
                format_double(range.lo) + ", " + format_double(range.hi) + "]");
  }
  return v;
}

std::size_t Section::count(const std::string& key, std::optional<std::size_t> fallback, std::size_t lo,
                           std::size_t hi) {
  std::size_t v = 0;
  if (!has(key)) {
    if (!fallback) config_fail(where(key) + ": missing");
    v = *fallback;
  } else {
    const json& n = at(key);
    if (!n.is_number_integer() || (n.is_number_integer() && n.get<long long>() < 0)) {
      config_fail(where(key) + ": expected a non-negative integer");
    }
    v = n.get<std::size_t>();
  }
  if (v < lo || v > hi) {
    config_fail(where(key) + ": " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                std::to_string(hi) + "]");
  }
  return v;
}

std::uint64_t Section::seed(const std::string& key, std::optional<std::uint64_t> fallback) {
  if (!has(key)) {
    if (!fallback) config_fail(where(key) + ": missing");
    return *fallback;
  }
  const json& n = at(key);
  if (!n.is_number_unsigned() && !(n.is_number_integer() && n.get<long long>() >= 0)) {
    config_fail(where(key) + ": expected a non-negative integer");
  }
  return n.get<std::uint64_t>();
}

bool Section::flag(const std::string& key, bool fallback) {
  if (!has(key)) return fallback;
  const json& b = at(key);
  if (!b.is_boolean()) config_fail(where(key) + ": expected true or false");
  return b.get<bool>();
}

std::string Section::choice(const std::string& key, std::optional<std::string> fallback,
                            const std::vector<std::string>& options) {
  std::string v;
  if (!has(key)) {
    if (!fallback) config_fail(where(key) + ": missing");
    v = *fallback;
  } else {
    const json& s = at(key);
    if (!s.is_string()) config_fail(where(key) + ": expected a string");
    v = s.get<std::string>();
  }
  if (std::find(options.begin(), options.end(), v) == options.end()) {
    std::string list;
    for (const auto& o : options) list += (list.empty() ? "" : "|") + o;
    config_fail(where(key) + ": '" + v + "' is not one of " + list);
  }
  return v;
}

std::vector<double> Section::numbers(const std::string& key, std::optional<std::vector<double>> fallback,
                                     Range range) {
  std::vector<double> out;
  if (!has(key)) {
    if (!fallback) config_fail(where(key) + ": missing");
    out = *fallback;
  } else {
    const json& a = at(key);
    if (!a.is_array()) config_fail(where(key) + ": expected an array of numbers");
    for (const auto& e : a) {
      if (!e.is_number()) config_fail(where(key) + ": expected an array of numbers");
      out.push_back(e.get<double>());
    }
  }
  for (double v : out) {
    const bool below = range.lo_open ? v <= range.lo : v < range.lo;
    if (!std::isfinite(v) || below || v > range.hi) {
      config_fail(where(key) + ": entry " + format_double(v) + " out of range");
    }
  }
  return out;
}

Section Section::child(const std::string& key) {
  if (!has(key)) config_fail(where(key) + ": missing");
  return Section(at(key), where(key));
}

std::optional<Section> Section::optional_child(const std::string& key) {
  if (!has(key) || j_->at(key).is_null()) {
    if (has(key)) used_.insert(key);
    return std::nullopt;
  }
  return Section(at(key), where(key));
}

void Section::finish() const {
  for (const auto& [key, value] : j_->items()) {
    if (!used_.count(key)) config_fail(where(key) + ": unknown key");
  }
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) config_fail("--set expects key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &config;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) config_fail("--set: empty path component in '" + path + "'");
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) config_fail("--set: '" + parts[i] + "' is not inside an object");
    json& next = (*node)[parts[i]];
    if (next.is_null()) next = json::object();
    node = &next;
  }
  if (!node->is_object()) config_fail("--set: cannot assign into a non-object at '" + path + "'");
  (*node)[parts.back()] = std::move(value);
}

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double Function1D::operator()(double s) const {
  if (type == "constant") return a;
  if (type == "exponential") return a * std::exp(-d * s);
  return 0.0;
}

double Function1D::antiderivative(double s) const {
  if (type == "constant") return a * s;
  if (type == "exponential") return d > 0.0 ? a * (1.0 - std::exp(-d * s)) / d : a * s;
  return 0.0;
}

double Function1D::bound() const { return type == "zero" ? 0.0 : std::abs(a); }
double Function1D::decay() const { return type == "exponential" ? d : 0.0; }

Function1D read_function(Section s) {
  Function1D f;
  f.type = s.choice("type", std::nullopt, {"zero", "constant", "exponential"});
  if (f.type == "constant") f.a = s.number("value", std::nullopt);
  if (f.type == "exponential") {
    f.a = s.number("amplitude", std::nullopt);
    f.d = s.number("decay", std::nullopt, Range::nonnegative());
  }
  s.finish();
  return f;
}

GridSpec read_grid(Section s, double lambda) {
  GridSpec g;
  g.t_max = s.number("t_max", 20.0, Range::between(1e-6, 1e4));
  g.n_panels = s.count("n_panels", 20, 1, 100000);
  g.pts_per_panel = s.count("pts_per_panel", 10, 1, 64);
  g.grading_rate = s.number("grading_rate", 1.0, Range::between(1.0, 10.0));
  g.lambda = lambda;
  s.finish();
  return g;
}

ResolventOptions read_resolvent_options(std::optional<Section> s, double* series_tol, std::string* method) {
  ResolventOptions o;
  *series_tol = 1e-22;
  *method = "nystrom";
  if (!s) return o;
  o.relaxed_contraction = s->flag("relaxed_contraction", false);
  o.max_terms = static_cast<int>(s->count("max_terms", 400, 1, 100000));
  o.weight_exponent = s->number("weight_exponent", 0.5, Range::positive());
  *series_tol = s->number("series_tol", 1e-22, Range::positive());
  *method = s->choice("method", "nystrom", {"nystrom", "series"});
  s->finish();
  return o;
}

namespace {

// Bilinear interpolation of a square table on points x (both axes).
TwoTimeKernel tabulated_kernel(std::vector<double> x, std::vector<std::vector<double>> v, double c_phi,
                               double alpha) {
  auto eval = [x, v](double t, double s) {
    auto locate = [&x](double u, std::size_t& k, double& w) {
      u = std::clamp(u, x.front(), x.back());
      k = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), u) - x.begin());
      k = std::clamp<std::size_t>(k, 1, x.size() - 1) - 1;
      w = (u - x[k]) / (x[k + 1] - x[k]);
    };
    std::size_t i = 0, j = 0;
    double wi = 0.0, wj = 0.0;
    locate(t, i, wi);
    locate(s, j, wj);
    return (1 - wi) * (1 - wj) * v[i][j] + wi * (1 - wj) * v[i + 1][j] + (1 - wi) * wj * v[i][j + 1] +
           wi * wj * v[i + 1][j + 1];
  };
  return make_kernel(eval, c_phi, alpha, "tabulated");
}

}  // namespace

KernelConfig read_kernel(Section s) {
  KernelConfig out;
  out.type = s.choice("type", std::nullopt, {"example1", "separable", "tabulated"});
  if (out.type == "example1") {
    const double alpha = s.number("alpha", std::nullopt, Range::positive());
    const double gamma = s.number("gamma", std::nullopt, Range::positive());
    out.example1 = make_example1_kernel(alpha, gamma);
    out.kernel = out.example1->kernel;
  } else if (out.type == "separable") {
    const Function1D phi = read_function(s.child("phi"));
    out.separable = make_separable_kernel(phi, phi.bound(), phi.decay(),
                                          [phi](double u) { return phi.antiderivative(u); }, "separable");
    out.kernel = out.separable->kernel;
  } else {
    const auto x = s.numbers("points", std::nullopt, Range::nonnegative());
    if (x.size() < 2) config_fail(s.path() + ".points: need at least two points");
    for (std::size_t i = 1; i < x.size(); ++i) {
      if (!(x[i] > x[i - 1])) config_fail(s.path() + ".points: must be strictly increasing");
    }
    const json& raw = s.raw("values");
    std::vector<std::vector<double>> v;
    double vmax = 0.0;
    if (!raw.is_array() || raw.size() != x.size()) config_fail(s.path() + ".values: need one row per point");
    for (const auto& row : raw) {
      if (!row.is_array() || row.size() != x.size()) config_fail(s.path() + ".values: rows must be square");
      std::vector<double> r;
      for (const auto& e : row) {
        if (!e.is_number()) config_fail(s.path() + ".values: expected numbers");
        r.push_back(e.get<double>());
        if (!std::isfinite(r.back())) config_fail(s.path() + ".values: non-finite entry");
        vmax = std::max(vmax, std::abs(r.back()));
      }
      v.push_back(std::move(r));
    }
    const double c_phi = s.number("c_phi", vmax, Range::nonnegative());
    const double alpha = s.number("alpha", 0.0, Range::nonnegative());
    out.kernel = tabulated_kernel(x, std::move(v), c_phi, alpha);
  }
  s.finish();
  return out;
}

Driver read_driver(Section s) {
  const std::string type = s.choice("type", std::nullopt, {"zero", "exponential", "discounted", "exp_cos"});
  Driver d;
  if (type == "zero") {
    d = zero_driver();
  } else if (type == "exponential") {
    const double c = s.number("prefactor", std::nullopt, Range::nonnegative());
    const double mu = s.number("rate", std::nullopt, Range::positive());
    d = make_deterministic_driver([c, mu](double, double u) { return c * std::exp(-mu * u); }, c, mu, false,
                                  "exponential");
  } else if (type == "discounted") {
    const double c = s.number("prefactor", std::nullopt, Range::nonnegative());
    const double mu = s.number("rate", std::nullopt, Range::positive());
    const double k = s.number("discount", std::nullopt, Range::nonnegative());
    d = make_deterministic_driver(
        [c, mu, k](double t, double u) { return c * std::exp(-mu * u - k * (u - t)); }, c, mu, true,
        "discounted");
  } else {
    const double c = s.number("prefactor", std::nullopt, Range::nonnegative());
    const double mu = s.number("rate", std::nullopt, Range::positive());
    const double w = s.number("jump_weight", 0.0);
    d = make_state_driver(
        [c, mu, w](double, double u, double b, double n) { return c * std::exp(-mu * u) * std::cos(b + w * n); },
        c, mu, false, "exp_cos");
  }
  s.finish();
  return d;
}

void read_measure(std::optional<Section> s, BSVIEProblem& problem) {
  if (!s) return;
  if (auto xi = s->optional_child("xi")) {
    const Function1D f = read_function(*xi);
    problem.xi = [f](double u) { return f(u); };
  }
  if (s->flag("random_xi", false)) {
    // Declares xi path-dependent; the derivative fields are placeholders.
    RandomCoefficientFields fields;
    fields.D_xi = [](double, double, const PathView&) { return 0.0; };
    fields.D_beta = [](double, double, double, double, const PathView&) { return 0.0; };
    problem.random_coefficients = fields;
  }
  if (auto j = s->optional_child("jumps")) {
    const auto marks = j->numbers("marks", std::nullopt);
    const auto rates = j->numbers("rates", std::nullopt, Range::nonnegative());
    const auto beta = j->numbers("beta", std::nullopt);
    if (marks.empty() || marks.size() != rates.size() || marks.size() != beta.size()) {
      config_fail(j->path() + ": marks, rates and beta need the same non-zero length");
    }
    j->finish();
    auto beta_fn = [marks, beta](double, double zeta) {
      for (std::size_t m = 0; m < marks.size(); ++m) {
        if (marks[m] == zeta) return beta[m];
      }
      return 0.0;
    };
    problem.jumps = make_jump_spec(marks, rates, beta_fn);
  }
  s->finish();
}

json grid_json(const GridSpec& g) {
  return json{{"t_max", g.t_max},
              {"n_panels", g.n_panels},
              {"pts_per_panel", g.pts_per_panel},
              {"grading_rate", g.grading_rate},
              {"lambda", g.lambda}};
}

}  // namespace bsvie::cli

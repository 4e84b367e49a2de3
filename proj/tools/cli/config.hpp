#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "bsvie/kernels.hpp"
#include "bsvie/solver.hpp"
#include "bsvie/stochastics.hpp"
#include "bsvie/timegrid.hpp"

namespace bsvie::cli {

using json = nlohmann::json;

struct Range {
  double lo = -1e300;
  double hi = 1e300;
  bool lo_open = false;

  static Range any() { return {}; }
  static Range positive() { return {0.0, 1e300, true}; }
  static Range nonnegative() { return {0.0, 1e300, false}; }
  static Range between(double lo, double hi) { return {lo, hi, false}; }
};

/// Strict view of one JSON object: every key must be read before finish(),
/// anything left over is an unknown key.
class Section {
 public:
  Section(const json& j, std::string path);

  bool has(const std::string& key) const;
  double number(const std::string& key, std::optional<double> fallback, Range range = Range::any());
  std::size_t count(const std::string& key, std::optional<std::size_t> fallback, std::size_t lo, std::size_t hi);
  std::uint64_t seed(const std::string& key, std::optional<std::uint64_t> fallback);
  bool flag(const std::string& key, bool fallback);
  std::string choice(const std::string& key, std::optional<std::string> fallback,
                     const std::vector<std::string>& options);
  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback,
                              Range range = Range::any());
  Section child(const std::string& key);
  std::optional<Section> optional_child(const std::string& key);
  const json& raw(const std::string& key);

  void finish() const;
  const std::string& path() const { return path_; }

 private:
  const json& at(const std::string& key);
  std::string where(const std::string& key) const;

  const json* j_;
  std::string path_;
  std::set<std::string> used_;
};

[[noreturn]] void config_fail(const std::string& message);

/// Applies "a.b.c=value"; the value is parsed as JSON when possible, else
/// taken as a string.
void apply_override(json& config, const std::string& assignment);

/// FNV-1a over the canonical (sorted-key) dump.
std::string config_hash(const json& config);

/// s -> real with a known antiderivative and envelope |f(s)| <= bound e^{-decay s}.
struct Function1D {
  std::string type = "zero";
  double a = 0.0;
  double d = 0.0;

  double operator()(double s) const;
  double antiderivative(double s) const;
  double bound() const;
  double decay() const;
};

Function1D read_function(Section s);
GridSpec read_grid(Section s, double lambda);
ResolventOptions read_resolvent_options(std::optional<Section> s, double* series_tol, std::string* method);

struct KernelConfig {
  TwoTimeKernel kernel;
  std::optional<Example1Kernel> example1;
  std::optional<SeparableKernel> separable;
  std::string type;
};

KernelConfig read_kernel(Section s);
Driver read_driver(Section s);
/// xi, optional jumps and the random-coefficient marker.
void read_measure(std::optional<Section> s, BSVIEProblem& problem);

json grid_json(const GridSpec& g);

}  // namespace bsvie::cli

#include "xflood/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <utility>

#include "xflood/rng.hpp"

namespace xflood {

namespace {

double projected(const Tensor& out, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
  return s;
}

double evaluate(ParamStore& params, const GradcheckForward& forward, const Tensor& r) {
  Graph g;
  Var out = forward(g, params);
  return projected(out.value(), r);
}

}  // namespace

GradcheckReport gradcheck(const std::string& name, ParamStore& params, const GradcheckForward& forward,
                          const GradcheckOptions& options) {
  GradcheckReport report;
  report.name = name;
  Rng rng(Rng::derive(options.seed, name));

  // Analytic pass.
  Graph g;
  Var out = forward(g, params);
  Tensor r(out.shape());
  for (double& v : r.data()) v = rng.normal();
  params.zero_grad();
  g.backward(out, r, &params);

  // Coordinate selection: one per tensor, then uniform fill.
  const std::vector<std::string> names = params.trainable_names();
  const std::size_t total = params.trainable_scalar_count();
  auto draw = [&]() -> std::pair<std::string, std::size_t> {
    std::size_t flat = rng.below(total);
    for (const std::string& n : names) {
      const std::size_t sz = params.value(n).size();
      if (flat < sz) return {n, flat};
      flat -= sz;
    }
    return {names.back(), 0};
  };
  std::set<std::pair<std::string, std::size_t>> used;
  for (const std::string& n : names) used.emplace(n, rng.below(params.value(n).size()));
  std::vector<std::pair<std::string, std::size_t>> queue(used.begin(), used.end());
  const std::size_t target = std::min(total, std::max(options.min_coordinates, used.size()));
  while (used.size() < target) {
    auto c = draw();
    if (used.insert(c).second) queue.push_back(c);
  }

  auto rel = [&](double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), options.relative_floor});
  };
  bool finite = true;
  std::size_t budget = 4 * target;
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const auto [pname, idx] = queue[q];
    const double analytic = params.grad(pname)[idx];
    Tensor& value = params.mutable_value(pname);
    const double orig = value[idx];
    value[idx] = orig + options.step;
    const double plus = evaluate(params, forward, r);
    value[idx] = orig - options.step;
    const double minus = evaluate(params, forward, r);
    value[idx] = orig;
    const double numeric = (plus - minus) / (2.0 * options.step);
    const double err = rel(analytic, numeric);

    // Probe at step / 10. When the two central differences disagree the
    // coordinate is not resolvable (a ReLU / max-pool switch inside the window,
    // or roundoff above the tolerance); draw a replacement instead.
    if (err > options.tolerance && budget > 0) {
      const double fine_step = options.step / 10.0;
      value[idx] = orig + fine_step;
      const double fine_plus = evaluate(params, forward, r);
      value[idx] = orig - fine_step;
      const double fine_minus = evaluate(params, forward, r);
      value[idx] = orig;
      const double fine = (fine_plus - fine_minus) / (2.0 * fine_step);
      if (rel(numeric, fine) > options.tolerance) {
        ++report.unresolved;
        --budget;
        for (std::size_t tries = 0; tries < 64 && used.size() < total; ++tries) {
          auto c = draw();
          if (used.insert(c).second) {
            queue.push_back(c);
            break;
          }
        }
        continue;
      }
    }

    if (!std::isfinite(err)) finite = false;
    if (!std::isfinite(err) || err > report.max_rel_error) {
      report.max_rel_error = std::isfinite(report.max_rel_error) ? err : report.max_rel_error;
      std::ostringstream os;
      os << std::setprecision(6) << std::scientific << pname << "[" << idx << "] analytic=" << analytic
         << " numeric=" << numeric;
      report.worst_coordinate = os.str();
    }
    ++report.coordinates;
  }
  params.zero_grad();
  report.passed = finite && report.max_rel_error <= options.tolerance && 2 * report.unresolved <= report.coordinates;
  return report;
}

}  // namespace xflood

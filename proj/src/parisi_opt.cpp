#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

#include "cspamp/parisi.h"
#include "parisi_internal.h"

namespace cspamp {

namespace {

// p_out(y) = exp(m phi1(y)) sum_x K(y - x) p_in(x) exp(-m phi0(x)): the law of
// the controlled diffusion pushed across one constant-mu interval. Mass is
// preserved exactly up to leakage through the grid ends.
void forward_step(std::span<const double> p_in, std::span<const double> phi0, std::span<const double> phi1,
                  const detail::Kernel& k, double m, std::span<double> p_out, std::vector<double>& q) {
  const std::size_t n = p_in.size();
  const auto h = static_cast<std::ptrdiff_t>(k.half);
  double base = 0.0;
  if (m != 0.0) {
    base = *std::min_element(phi0.begin(), phi0.end());
    q.resize(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = p_in[i] == 0.0 ? 0.0 : p_in[i] * std::exp(-m * (phi0[i] - base));
  } else {
    q.assign(p_in.begin(), p_in.end());
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::ptrdiff_t>(i);
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, c - h);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, c + h);
    double acc = 0.0;
    for (std::ptrdiff_t s = lo; s <= hi; ++s) acc += k.weights[static_cast<std::size_t>(s - c + h)] * q[static_cast<std::size_t>(s)];
    if (m == 0.0) {
      p_out[i] = acc;
    } else {
      p_out[i] = acc > 0.0 ? std::exp(std::log(acc) + m * (phi1[i] - base)) : 0.0;
    }
  }
}

double expected_phi_x_sq(std::span<const double> p, std::span<const double> phi_x) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += p[i] * phi_x[i] * phi_x[i];
  return total;
}

std::size_t piece_of(const StepFunction& mu, double t) {
  const auto& b = mu.breakpoints();
  const auto it = std::upper_bound(b.begin(), b.end(), t);
  return it == b.begin() ? 0 : static_cast<std::size_t>(it - b.begin()) - 1;
}

}  // namespace

ParisiGradient parisi_gradient(const MixturePolynomial& xi, const StepFunction& mu, const GridConfig& cfg) {
  const PdeGrid g = solve_pde(xi, mu, cfg);
  ParisiGradient out;
  out.value = functional_value(g, xi, mu);
  out.gradient.assign(mu.pieces(), 0.0);

  const std::size_t nx = g.nx;
  std::vector<double> p(nx, 0.0), p_next(nx), q, scratch;
  p[g.center()] = 1.0;
  std::vector<double> dx_tmp(nx), dxx_tmp(nx);

  auto integrand = [&](double t, double e) { return xi.d2(t) * (e - t); };
  double e_prev = expected_phi_x_sq(p, g.row(g.phi_x, 0));
  out.times.push_back(0.0);
  out.mean_phi_x_sq.push_back(e_prev);

  std::vector<std::vector<double>> phis;
  for (std::size_t j = 0; j < g.nt; ++j) {
    const double t0 = g.t(j);
    const double t1 = j + 1 == g.nt ? 1.0 : g.t(j + 1);
    auto segs = detail::segments(mu, t0, t1);  // latest first
    // Phi at each segment boundary, recomputed backward from row j + 1 so that
    // the forward step sees exactly the values the backward solve produced.
    phis.assign(segs.size() + 1, {});
    phis[0].assign(g.row(g.phi, j + 1).begin(), g.row(g.phi, j + 1).end());
    for (std::size_t s = 0; s + 1 < segs.size(); ++s) {
      const auto k = detail::gaussian_kernel(xi.d1(segs[s].t1) - xi.d1(segs[s].t0), g.dx, segs[s].m);
      phis[s + 1].resize(nx);
      detail::backward_convolve(phis[s], g.dx, k, segs[s].m, phis[s + 1], scratch);
    }
    phis[segs.size()].assign(g.row(g.phi, j).begin(), g.row(g.phi, j).end());

    for (std::size_t s = segs.size(); s-- > 0;) {
      const auto& seg = segs[s];
      const auto k = detail::gaussian_kernel(xi.d1(seg.t1) - xi.d1(seg.t0), g.dx, seg.m);
      forward_step(p, phis[s + 1], phis[s], k, seg.m, p_next, q);
      std::swap(p, p_next);
      double e_next;
      if (s == 0) {
        e_next = expected_phi_x_sq(p, g.row(g.phi_x, j + 1));
      } else {
        detail::derivatives(phis[s], g.dx, dx_tmp, dxx_tmp);
        e_next = expected_phi_x_sq(p, dx_tmp);
      }
      const double width = seg.t1 - seg.t0;
      out.gradient[piece_of(mu, seg.t0)] +=
          0.25 * width * (integrand(seg.t0, e_prev) + integrand(seg.t1, e_next));
      e_prev = e_next;
    }
    out.times.push_back(t1);
    out.mean_phi_x_sq.push_back(e_prev);
  }
  return out;
}

namespace {

GridConfig filled(const MixturePolynomial& xi, const GridConfig& cfg) {
  GridConfig def = GridConfig::defaults(xi);
  GridConfig out = cfg;
  if (out.x_max <= 0.0) out.x_max = def.x_max;
  if (out.dx <= 0.0) out.dx = out.x_max / 2000.0;
  if (out.dt <= 0.0) out.dt = def.dt;
  return out;
}

// Golden-section search for a convex function of one variable on [lo, hi].
template <typename F>
double golden(F&& f, double lo, double hi, double tol, double& best_value) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  if (fc <= fd) {
    best_value = fc;
    return c;
  }
  best_value = fd;
  return d;
}

MinimizeResult coordinate_search(const MixturePolynomial& xi, const MinimizeOptions& opts, const GridConfig& grid) {
  const double end = 1.0 - opts.eta;
  std::vector<double> v(opts.pieces, 1.0);
  MinimizeResult res;
  auto eval = [&](const std::vector<double>& values) {
    ++res.evaluations;
    return parisi_value(xi, StepFunction::equispaced(values, end), grid);
  };
  double current = eval(v);
  const int count = static_cast<int>(v.size());
  std::vector<double> width(v.size(), 0.5 * opts.mu_max);
  for (res.iterations = 1; res.iterations <= opts.max_iterations; ++res.iterations) {
    const double before = current;
    for (int j = 0; j < count; ++j) {
      auto f = [&](double value) {
        auto trial = v;
        trial[j] = value;
        return eval(trial);
      };
      const double old = v[j];
      for (;;) {
        const double lo = std::max(0.0, v[j] - width[j]);
        const double hi = std::min(opts.mu_max, v[j] + width[j]);
        const double tol = 1e-4 * std::max(1.0, v[j]);
        double fbest = 0.0;
        const double x = golden(f, lo, hi, tol, fbest);
        const bool at_edge = (x - lo < 2 * tol && lo > 0.0) || (hi - x < 2 * tol && hi < opts.mu_max);
        if (fbest < current) {
          v[j] = x;
          current = fbest;
        }
        if (!at_edge) break;
        width[j] *= 2.0;
      }
      width[j] = std::max(0.02, 3.0 * std::abs(v[j] - old));
    }
    if (before - current < opts.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.mu = StepFunction::equispaced(v, end);
  res.value = current;
  return res;
}

// Spectral projected gradient on the box [0, mu_max]^k with a non-monotone
// Armijo line search.
MinimizeResult projected_gradient(const MixturePolynomial& xi, const MinimizeOptions& opts, const GridConfig& grid,
                                  std::vector<double> x) {
  const double end = 1.0 - opts.eta;
  const std::size_t k = x.size();
  MinimizeResult res;
  auto eval = [&](const std::vector<double>& values) {
    ++res.evaluations;
    return parisi_gradient(xi, StepFunction::equispaced(values, end), grid);
  };
  auto project = [&](double v) { return std::clamp(v, 0.0, opts.mu_max); };
  auto pg = eval(x);
  std::deque<double> recent = {pg.value};
  double alpha = 1.0;
  {
    double gmax = 0.0;
    for (double gi : pg.gradient) gmax = std::max(gmax, std::abs(gi));
    if (gmax > 0.0) alpha = std::min(10.0, 0.5 / gmax);
  }
  for (res.iterations = 1; res.iterations <= opts.max_iterations; ++res.iterations) {
    double pg_norm = 0.0;
    for (std::size_t i = 0; i < k; ++i) pg_norm = std::max(pg_norm, std::abs(project(x[i] - pg.gradient[i]) - x[i]));
    if (pg_norm < opts.tolerance) {
      res.converged = true;
      break;
    }
    std::vector<double> dir(k);
    for (std::size_t i = 0; i < k; ++i) dir[i] = project(x[i] - alpha * pg.gradient[i]) - x[i];
    double slope = 0.0;
    for (std::size_t i = 0; i < k; ++i) slope += pg.gradient[i] * dir[i];
    const double ref = *std::max_element(recent.begin(), recent.end());
    double lambda = 1.0;
    std::vector<double> xn(k);
    ParisiGradient next;
    for (int tries = 0;; ++tries) {
      for (std::size_t i = 0; i < k; ++i) xn[i] = x[i] + lambda * dir[i];
      next = eval(xn);
      if (next.value <= ref + 1e-4 * lambda * slope || tries >= 20) break;
      lambda *= 0.5;
    }
    double ss = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double s = xn[i] - x[i], y = next.gradient[i] - pg.gradient[i];
      ss += s * s;
      sy += s * y;
    }
    alpha = sy > 0.0 ? std::clamp(ss / sy, 1e-6, 1e6) : 1e3;
    x = xn;
    pg = std::move(next);
    recent.push_back(pg.value);
    if (recent.size() > 5) recent.pop_front();
  }
  res.mu = StepFunction::equispaced(x, end);
  res.value = pg.value;
  return res;
}

}  // namespace

MinimizeResult minimize_alg(const MixturePolynomial& xi, const MinimizeOptions& opts) {
  if (opts.pieces < 0) throw std::invalid_argument("piece count must be >= 0");
  if (!(opts.eta > 0.0 && opts.eta < 1.0)) throw std::invalid_argument("eta must be in (0, 1)");
  if (xi.is_zero()) throw std::invalid_argument("mixture polynomial is identically zero");
  const GridConfig grid = filled(xi, opts.grid);
  if (opts.pieces == 0) {
    MinimizeResult res;
    res.mu = StepFunction::constant(0.0);
    res.value = parisi_value(xi, res.mu, grid);
    res.converged = true;
    res.evaluations = 1;
    return res;
  }
  if (!opts.use_gradient) return coordinate_search(xi, opts, grid);
  // Warm start from a coarse coordinate search, then refine with gradients.
  MinimizeOptions coarse = opts;
  coarse.pieces = std::min(opts.pieces, 3);
  coarse.use_gradient = false;
  coarse.tolerance = 1e-6;
  const auto start = coordinate_search(xi, coarse, grid);
  const double end = 1.0 - opts.eta;
  std::vector<double> x(opts.pieces);
  for (int j = 0; j < opts.pieces; ++j) x[j] = start.mu(end * (j + 0.5) / opts.pieces);
  auto res = projected_gradient(xi, opts, grid, std::move(x));
  res.evaluations += start.evaluations;
  return res;
}

ParisiSolution make_solution(const MixturePolynomial& xi, const StepFunction& mu, const GridConfig& cfg,
                             double eta) {
  ParisiSolution sol;
  sol.mu = mu;
  sol.xi = xi;
  sol.eta = eta;
  sol.grid = solve_pde(xi, mu, filled(xi, cfg));
  sol.functional_value = functional_value(sol.grid, xi, mu);
  return sol;
}

}  // namespace cspamp

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cspamp/parisi.h"
#include "parisi_internal.h"

namespace cspamp {

StepFunction::StepFunction(std::vector<double> breakpoints, std::vector<double> values)
    : breakpoints_(std::move(breakpoints)), values_(std::move(values)) {
  if (breakpoints_.empty() || breakpoints_.size() != values_.size()) {
    throw std::invalid_argument("step function needs one value per breakpoint");
  }
  if (breakpoints_[0] != 0.0) throw std::invalid_argument("first breakpoint must be 0");
  for (std::size_t j = 1; j < breakpoints_.size(); ++j) {
    if (!(breakpoints_[j] > breakpoints_[j - 1]) || !(breakpoints_[j] < 1.0)) {
      throw std::invalid_argument("breakpoints must increase strictly inside [0, 1)");
    }
  }
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("step values must be finite and >= 0");
  }
}

StepFunction StepFunction::equispaced(std::vector<double> values, double end) {
  if (values.empty()) throw std::invalid_argument("need at least one piece");
  if (!(end > 0.0 && end <= 1.0)) throw std::invalid_argument("end must be in (0, 1]");
  std::vector<double> breaks(values.size());
  for (std::size_t j = 0; j < values.size(); ++j) breaks[j] = end * static_cast<double>(j) / values.size();
  return StepFunction(std::move(breaks), std::move(values));
}

double StepFunction::operator()(double t) const {
  const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
  if (it == breakpoints_.begin()) return values_.front();
  return values_[static_cast<std::size_t>(it - breakpoints_.begin()) - 1];
}

StepFunction StepFunction::scaled(double factor) const {
  auto v = values_;
  for (auto& x : v) x *= factor;
  return StepFunction(breakpoints_, std::move(v));
}

GridConfig GridConfig::defaults(const MixturePolynomial& xi, double delta) {
  GridConfig cfg;
  cfg.x_max = 6.0 * std::sqrt(xi.d1(1.0));
  cfg.dx = cfg.x_max / 2000.0;
  cfg.dt = std::min(delta / 4.0, 1e-3);
  return cfg;
}

double interpolate_row(std::span<const double> row, double x_max, double dx, double x) {
  const double pos = (x + x_max) / dx;
  const double last = static_cast<double>(row.size() - 1);
  if (!(pos > 0.0)) return row.front();
  if (pos >= last) return row.back();
  const auto i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  return row[i] + frac * (row[i + 1] - row[i]);
}

double PdeGrid::bilinear(const std::vector<double>& a, double t, double x) const {
  if (a.empty()) throw std::logic_error("grid array not available");
  double pos = std::clamp(t / dt, 0.0, static_cast<double>(nt));
  auto j = static_cast<std::size_t>(pos);
  if (j >= nt) j = nt - 1;
  const double frac = pos - static_cast<double>(j);
  const double lo = interpolate_row(row(a, j), x_max, dx, x);
  if (frac == 0.0) return lo;
  const double hi = interpolate_row(row(a, j + 1), x_max, dx, x);
  return lo + frac * (hi - lo);
}

void PdeGrid::slice(double t, std::vector<double>& phi_x_out, std::vector<double>& phi_xx_out) const {
  double pos = std::clamp(t / dt, 0.0, static_cast<double>(nt));
  auto j = static_cast<std::size_t>(std::floor(pos + 1e-9));
  if (j >= nt) j = nt - 1;
  double frac = std::max(0.0, pos - static_cast<double>(j));
  if (frac < 1e-9) frac = 0.0;
  phi_x_out.resize(nx);
  phi_xx_out.resize(nx);
  const auto ax = row(phi_x, j), bx = row(phi_x, j + 1);
  const auto axx = row(phi_xx, j), bxx = row(phi_xx, j + 1);
  for (std::size_t i = 0; i < nx; ++i) {
    phi_x_out[i] = ax[i] + frac * (bx[i] - ax[i]);
    phi_xx_out[i] = axx[i] + frac * (bxx[i] - axx[i]);
  }
}

namespace detail {

XGrid make_xgrid(const MixturePolynomial& xi, const GridConfig& cfg) {
  if (xi.is_zero()) throw std::invalid_argument("mixture polynomial is identically zero");
  const GridConfig def = GridConfig::defaults(xi);
  const double x_max = cfg.x_max > 0.0 ? cfg.x_max : def.x_max;
  const double dx_req = cfg.dx > 0.0 ? cfg.dx : x_max / 2000.0;
  if (cfg.dt <= 0.0 || cfg.dx < 0.0) throw std::invalid_argument("grid steps must be positive");
  if (x_max < 4.0 * std::sqrt(xi.d1(1.0))) throw std::invalid_argument("x_max below 4 sqrt(xi'(1))");
  XGrid g;
  g.half = static_cast<std::size_t>(std::max(1.0, std::round(x_max / dx_req)));
  g.dx = x_max / static_cast<double>(g.half);
  g.x_max = x_max;
  g.nx = 2 * g.half + 1;
  return g;
}

Kernel gaussian_kernel(double variance, double dx, double tilt) {
  Kernel k;
  if (!(variance > 0.0)) {
    k.weights = {1.0};
    return k;
  }
  const double sigma = std::sqrt(variance);
  if (sigma >= 2.0 * dx) {
    k.half = static_cast<std::size_t>(std::ceil((7.0 * sigma + std::abs(tilt) * variance) / dx));
    k.weights.resize(2 * k.half + 1);
    double total = 0.0;
    for (std::size_t i = 0; i < k.weights.size(); ++i) {
      const double y = (static_cast<double>(i) - static_cast<double>(k.half)) * dx;
      k.weights[i] = std::exp(-y * y / (2.0 * variance));
      total += k.weights[i];
    }
    for (auto& w : k.weights) w /= total;
    return k;
  }
  // Narrow kernel: a composition of three-point steps [w, 1-2w, w], each of
  // variance 2 w dx^2 <= dx^2 / 2, reproduces the variance exactly.
  const auto steps = static_cast<std::size_t>(std::ceil(2.0 * variance / (dx * dx)));
  const double w = variance / static_cast<double>(steps) / (2.0 * dx * dx);
  std::vector<double> cur = {1.0};
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<double> next(cur.size() + 2, 0.0);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      next[i] += w * cur[i];
      next[i + 1] += (1.0 - 2.0 * w) * cur[i];
      next[i + 2] += w * cur[i];
    }
    cur = std::move(next);
  }
  k.half = steps;
  k.weights = std::move(cur);
  return k;
}

namespace {

// in extended by lines of slope -1 / +1 beyond the ends.
void pad(std::span<const double> in, double dx, std::size_t h, std::vector<double>& out) {
  const std::size_t n = in.size();
  out.resize(n + 2 * h);
  for (std::size_t p = 0; p < h; ++p) out[p] = in[0] + static_cast<double>(h - p) * dx;
  std::copy(in.begin(), in.end(), out.begin() + static_cast<std::ptrdiff_t>(h));
  for (std::size_t p = 0; p < h; ++p) out[n + h + p] = in[n - 1] + static_cast<double>(p + 1) * dx;
}

// Exponents above this are split into blocks with their own shift.
constexpr double kExpRange = 600.0;

}  // namespace

void backward_convolve(std::span<const double> in, double dx, const Kernel& k, double m,
                       std::span<double> out, std::vector<double>& scratch) {
  const std::size_t n = in.size();
  const std::size_t h = k.half;
  if (h == 0) {
    std::copy(in.begin(), in.end(), out.begin());
    return;
  }
  std::vector<double> padded;
  pad(in, dx, h, padded);
  const double* w = k.weights.data();
  const std::size_t taps = k.weights.size();
  if (m == 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* src = padded.data() + i;
      double acc = 0.0;
      for (std::size_t q = 0; q < taps; ++q) acc += w[q] * src[q];
      out[i] = acc;
    }
    return;
  }
  // out[i] = (1/m) log sum_q w[q] exp(m padded[i + q]), kernel symmetric.
  scratch.resize(padded.size());
  const double span_dx = m * dx;
  const std::size_t block = static_cast<std::size_t>(std::max(
      1.0, std::min(static_cast<double>(n), std::floor(kExpRange / span_dx) - 2.0 * static_cast<double>(h))));
  for (std::size_t b0 = 0; b0 < n; b0 += block) {
    const std::size_t b1 = std::min(n, b0 + block);
    const std::size_t p0 = b0, p1 = b1 + 2 * h;  // window in padded coordinates
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t p = p0; p < p1; ++p) top = std::max(top, padded[p]);
    const double shift = m * top;
    for (std::size_t p = p0; p < p1; ++p) scratch[p] = std::exp(m * padded[p] - shift);
    for (std::size_t i = b0; i < b1; ++i) {
      const double* src = scratch.data() + i;
      double acc = 0.0;
      for (std::size_t q = 0; q < taps; ++q) acc += w[q] * src[q];
      if (acc > 0.0 && std::isfinite(acc)) {
        out[i] = (shift + std::log(acc)) / m;
      } else {
        // Every term underflowed against the block maximum; redo this point
        // with its own shift.
        double local = -std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < taps; ++q) local = std::max(local, padded[i + q]);
        double s = 0.0;
        for (std::size_t q = 0; q < taps; ++q) s += w[q] * std::exp(m * (padded[i + q] - local));
        out[i] = local + std::log(s) / m;
      }
    }
  }
}

double backward_convolve_at(std::span<const double> in, double dx, const Kernel& k, double m,
                            std::size_t i) {
  const std::size_t n = in.size();
  const auto h = static_cast<std::ptrdiff_t>(k.half);
  auto value = [&](std::ptrdiff_t j) {
    if (j < 0) return in[0] + static_cast<double>(-j) * dx;
    if (j >= static_cast<std::ptrdiff_t>(n)) return in[n - 1] + static_cast<double>(j - static_cast<std::ptrdiff_t>(n) + 1) * dx;
    return in[static_cast<std::size_t>(j)];
  };
  const auto c = static_cast<std::ptrdiff_t>(i);
  if (m == 0.0) {
    double acc = 0.0;
    for (std::ptrdiff_t q = -h; q <= h; ++q) acc += k.weights[static_cast<std::size_t>(q + h)] * value(c + q);
    return acc;
  }
  double top = -std::numeric_limits<double>::infinity();
  for (std::ptrdiff_t q = -h; q <= h; ++q) top = std::max(top, value(c + q));
  double acc = 0.0;
  for (std::ptrdiff_t q = -h; q <= h; ++q) {
    acc += k.weights[static_cast<std::size_t>(q + h)] * std::exp(m * (value(c + q) - top));
  }
  return top + std::log(acc) / m;
}

void derivatives(std::span<const double> phi, double dx, std::span<double> phi_x, std::span<double> phi_xx) {
  const std::size_t n = phi.size();
  auto at = [&](std::ptrdiff_t j) {
    if (j < 0) return phi[0] + dx;
    if (j >= static_cast<std::ptrdiff_t>(n)) return phi[n - 1] + dx;
    return phi[static_cast<std::size_t>(j)];
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::ptrdiff_t>(i);
    const double lo = at(c - 1), mid = phi[i], hi = at(c + 1);
    phi_x[i] = (hi - lo) / (2.0 * dx);
    phi_xx[i] = (hi - 2.0 * mid + lo) / (dx * dx);
  }
}

std::vector<Segment> segments(const StepFunction& mu, double t0, double t1) {
  // Sub-intervals of [t0, t1] on which mu is constant, latest first.
  std::vector<Segment> out;
  double upper = t1;
  const auto& b = mu.breakpoints();
  for (std::size_t j = b.size(); j-- > 0;) {
    if (b[j] > t0 && b[j] < upper) {
      out.push_back({b[j], upper, mu.values()[j]});
      upper = b[j];
    }
  }
  out.push_back({t0, upper, mu(t0)});
  return out;
}

}  // namespace detail

PdeGrid solve_pde(const MixturePolynomial& xi, const StepFunction& mu, const GridConfig& cfg) {
  const auto xg = detail::make_xgrid(xi, cfg);
  PdeGrid g;
  g.nt = static_cast<std::size_t>(std::max(1.0, std::round(1.0 / cfg.dt)));
  g.dt = 1.0 / static_cast<double>(g.nt);
  g.dx = xg.dx;
  g.x_max = xg.x_max;
  g.nx = xg.nx;
  g.phi.resize((g.nt + 1) * g.nx);
  g.phi_x.resize(g.phi.size());
  g.phi_xx.resize(g.phi.size());

  auto row = [&](std::vector<double>& a, std::size_t j) { return std::span(a).subspan(j * g.nx, g.nx); };
  {
    auto last = row(g.phi, g.nt);
    for (std::size_t i = 0; i < g.nx; ++i) last[i] = std::abs(g.x(i));
    // Exact |x| at the terminal slice.
    last[g.center()] = 0.0;
  }
  std::vector<double> scratch, tmp(g.nx);
  for (std::size_t j = g.nt; j-- > 0;) {
    const double t0 = g.t(j);
    const double t1 = j + 1 == g.nt ? 1.0 : g.t(j + 1);
    std::copy_n(row(g.phi, j + 1).begin(), g.nx, tmp.begin());
    for (const auto& seg : detail::segments(mu, t0, t1)) {
      const auto k = detail::gaussian_kernel(xi.d1(seg.t1) - xi.d1(seg.t0), g.dx, seg.m);
      auto out = row(g.phi, j);
      detail::backward_convolve(tmp, g.dx, k, seg.m, out, scratch);
      std::copy(out.begin(), out.end(), tmp.begin());
    }
  }
  for (std::size_t j = 0; j <= g.nt; ++j) {
    detail::derivatives(row(g.phi, j), g.dx, row(g.phi_x, j), row(g.phi_xx, j));
  }
  return g;
}

double correction_integral(const MixturePolynomial& xi, const StepFunction& mu) {
  // int t xi''(t) dt = t xi'(t) - xi(t), exactly on each piece.
  auto antiderivative = [&](double t) { return t * xi.d1(t) - xi(t); };
  double total = 0.0;
  for (std::size_t j = 0; j < mu.pieces(); ++j) {
    const double a = mu.breakpoints()[j], b = mu.piece_end(j);
    total += mu.values()[j] * (antiderivative(b) - antiderivative(a));
  }
  return 0.5 * total;
}

double functional_value(const PdeGrid& grid, const MixturePolynomial& xi, const StepFunction& mu) {
  if (grid.phi.empty()) throw std::invalid_argument("grid has no Phi values");
  return grid.phi[grid.center()] - correction_integral(xi, mu);
}

double parisi_value(const MixturePolynomial& xi, const StepFunction& mu, const GridConfig& cfg) {
  const auto xg = detail::make_xgrid(xi, cfg);
  std::vector<double> cur(xg.nx), next(xg.nx), scratch;
  for (std::size_t i = 0; i < xg.nx; ++i) {
    cur[i] = std::abs(-xg.x_max + static_cast<double>(i) * xg.dx);
  }
  cur[xg.half] = 0.0;
  const auto segs = detail::segments(mu, 0.0, 1.0);
  double phi00 = 0.0;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const auto k = detail::gaussian_kernel(xi.d1(segs[s].t1) - xi.d1(segs[s].t0), xg.dx, segs[s].m);
    if (s + 1 == segs.size()) {
      phi00 = detail::backward_convolve_at(cur, xg.dx, k, segs[s].m, xg.half);
    } else {
      detail::backward_convolve(cur, xg.dx, k, segs[s].m, next, scratch);
      std::swap(cur, next);
    }
  }
  return phi00 - correction_integral(xi, mu);
}

namespace {

// Solves a tridiagonal system with constant off-diagonals except at the
// two boundary rows (Thomas algorithm).
void thomas(std::span<const double> lower, std::span<const double> diag, std::span<const double> upper,
            std::span<double> rhs, std::vector<double>& c) {
  const std::size_t n = diag.size();
  c.resize(n);
  double beta = diag[0];
  rhs[0] /= beta;
  c[0] = upper[0] / beta;
  for (std::size_t i = 1; i < n; ++i) {
    beta = diag[i] - lower[i] * c[i - 1];
    rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    c[i] = i + 1 < n ? upper[i] / beta : 0.0;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= c[i] * rhs[i + 1];
}

// Second difference with the slope-one ghost values of the asymptote.
void second_difference(std::span<const double> u, double dx, std::span<double> out) {
  const std::size_t n = u.size();
  const double inv = 1.0 / (dx * dx);
  out[0] = (u[1] - u[0] + dx) * inv;
  for (std::size_t i = 1; i + 1 < n; ++i) out[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv;
  out[n - 1] = (u[n - 2] - u[n - 1] + dx) * inv;
}

void gradient_sq(std::span<const double> u, double dx, std::span<double> out) {
  const std::size_t n = u.size();
  const double inv = 1.0 / (2.0 * dx);
  auto sq = [](double v) { return v * v; };
  out[0] = sq((u[1] - u[0] - dx) * inv);
  for (std::size_t i = 1; i + 1 < n; ++i) out[i] = sq((u[i + 1] - u[i - 1]) * inv);
  out[n - 1] = sq((u[n - 1] + dx - u[n - 2]) * inv);
}

struct FdStepper {
  std::size_t n;
  double dx;
  std::vector<double> lower, diag, upper, rhs, d2, n0, n1, pred, c;

  explicit FdStepper(std::size_t size, double step) : n(size), dx(step) {
    lower.resize(n);
    diag.resize(n);
    upper.resize(n);
    rhs.resize(n);
    d2.resize(n);
    n0.resize(n);
    n1.resize(n);
    pred.resize(n);
  }

  // (I - theta h a1 D2) u_new = (I + (1-theta) h a0 D2) u + h * source, with
  // the affine boundary terms of D2 moved to the right-hand side.
  void implicit(std::span<const double> u, double h, double a0, double a1, double theta,
                std::span<const double> source, std::span<double> out) {
    const double inv = 1.0 / (dx * dx);
    const double lam = theta * h * a1 * inv;
    second_difference(u, dx, d2);
    for (std::size_t i = 0; i < n; ++i) {
      lower[i] = -lam;
      upper[i] = -lam;
      diag[i] = 1.0 + 2.0 * lam;
      rhs[i] = u[i] + (1.0 - theta) * h * a0 * d2[i] + h * source[i];
    }
    diag[0] = 1.0 + lam;
    diag[n - 1] = 1.0 + lam;
    rhs[0] += lam * dx;
    rhs[n - 1] += lam * dx;
    lower[0] = 0.0;
    upper[n - 1] = 0.0;
    thomas(lower, diag, upper, rhs, c);
    std::copy(rhs.begin(), rhs.end(), out.begin());
  }

  // One step in reversed time s = 1 - t of u_s = a(s) (u_xx + m u_x^2).
  void step(std::span<double> u, double h, double a0, double a1, double m, double theta) {
    gradient_sq(u, dx, n0);
    for (std::size_t i = 0; i < n; ++i) n0[i] *= m * a0;
    implicit(u, h, a0, a1, theta, n0, pred);
    if (m == 0.0) {
      std::copy(pred.begin(), pred.end(), u.begin());
      return;
    }
    gradient_sq(pred, dx, n1);
    for (std::size_t i = 0; i < n; ++i) n1[i] = 0.5 * (n0[i] + m * a1 * n1[i]);
    implicit(u, h, a0, a1, theta, n1, u);
  }
};

}  // namespace

PdeGrid solve_pde_fd(const MixturePolynomial& xi, const StepFunction& mu, const GridConfig& cfg) {
  const auto xg = detail::make_xgrid(xi, cfg);
  PdeGrid g;
  g.nt = static_cast<std::size_t>(std::max(1.0, std::round(1.0 / cfg.dt)));
  g.dt = 1.0 / static_cast<double>(g.nt);
  g.dx = xg.dx;
  g.x_max = xg.x_max;
  g.nx = xg.nx;
  g.phi.resize((g.nt + 1) * g.nx);
  g.phi_x.resize(g.phi.size());
  g.phi_xx.resize(g.phi.size());
  auto row = [&](std::vector<double>& a, std::size_t j) { return std::span(a).subspan(j * g.nx, g.nx); };

  std::vector<double> u(g.nx);
  for (std::size_t i = 0; i < g.nx; ++i) u[i] = std::abs(g.x(i));
  u[g.center()] = 0.0;
  std::copy(u.begin(), u.end(), row(g.phi, g.nt).begin());

  FdStepper stepper(g.nx, g.dx);
  // The kink of |x| is smoothed by backward Euler half steps before
  // switching to Crank-Nicolson.
  constexpr std::size_t kDampedSteps = 4;
  std::size_t taken = 0;
  for (std::size_t j = g.nt; j-- > 0;) {
    const double t0 = g.t(j);
    const double t1 = j + 1 == g.nt ? 1.0 : g.t(j + 1);
    for (const auto& seg : detail::segments(mu, t0, t1)) {
      const double h = seg.t1 - seg.t0;
      if (h <= 0.0) continue;
      const double a_start = 0.5 * xi.d2(seg.t1), a_end = 0.5 * xi.d2(seg.t0);
      if (taken < kDampedSteps) {
        const double mid = 0.5 * (seg.t0 + seg.t1);
        stepper.step(u, 0.5 * h, a_start, 0.5 * xi.d2(mid), seg.m, 1.0);
        stepper.step(u, 0.5 * h, 0.5 * xi.d2(mid), a_end, seg.m, 1.0);
      } else {
        stepper.step(u, h, a_start, a_end, seg.m, 0.5);
      }
    }
    ++taken;
    std::copy(u.begin(), u.end(), row(g.phi, j).begin());
  }
  for (std::size_t j = 0; j <= g.nt; ++j) {
    detail::derivatives(row(g.phi, j), g.dx, row(g.phi_x, j), row(g.phi_xx, j));
  }
  return g;
}

}  // namespace cspamp

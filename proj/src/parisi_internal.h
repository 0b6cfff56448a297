#pragma once

#include <span>
#include <vector>

#include "cspamp/parisi.h"

namespace cspamp::detail {

struct XGrid {
  double dx = 0.0;
  double x_max = 0.0;
  std::size_t half = 0;  // center index
  std::size_t nx = 0;
};

XGrid make_xgrid(const MixturePolynomial& xi, const GridConfig& cfg);

// Symmetric discrete Gaussian of the given variance, weights summing to 1.
struct Kernel {
  std::vector<double> weights;
  std::size_t half = 0;
};
// tilt is the m of the log-domain convolution it will be used for; exp(m Phi)
// shifts the effective mass by up to m * variance.
Kernel gaussian_kernel(double variance, double dx, double tilt = 0.0);

// One backward step of the Cole-Hopf solution over a constant-mu interval:
// out = (1/m) log(K * exp(m in)), or K * in when m = 0. Values beyond the
// grid follow the slope-one asymptote.
void backward_convolve(std::span<const double> in, double dx, const Kernel& k, double m,
                       std::span<double> out, std::vector<double>& scratch);
double backward_convolve_at(std::span<const double> in, double dx, const Kernel& k, double m, std::size_t i);

void derivatives(std::span<const double> phi, double dx, std::span<double> phi_x, std::span<double> phi_xx);

struct Segment {
  double t0, t1, m;
};
std::vector<Segment> segments(const StepFunction& mu, double t0, double t1);

}  // namespace cspamp::detail

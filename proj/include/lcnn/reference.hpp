#pragma once

#include <array>

#include "lcnn/layers.hpp"

// Slow, independent reference implementations used to cross-check the fast
// paths: plain host loops and scans, no im2col and no autodiff. Shared by the
// unit tests, the selftest command, and the acceptance harness.
namespace lcnn::ref {

// Nested-loop Lorentz convolution: explicit receptive-field gather with
// origin fill, hcat time recomputation, and per-position fully connected
// arithmetic in the same accumulation order as the im2col path.
Tensor conv2d_loop(const Tensor& x, const nn::ConvSpec& sp, const Tensor& W, const Tensor& b,
                   const geo::Curvature& c);

// Origin-interleaves a map for stride s and adds explicit origin padding of
// k-1-p per side: the materialized input whose stride-1 convolution equals
// the transposed convolution.
Tensor transposed_materialized(const Tensor& x, const nn::ConvSpec& sp, const geo::Curvature& c);

// Minimum geodesic distance from x to the hyperplane {<w,p>_L = 0} in L^2 by
// dense sampling of the plane geodesic cosh(s) A + sinh(s) B, where w is
// built from (z, a) as [sinh(sqrt(-K) a)|z|, cosh(sqrt(-K) a) z]. Returns NaN
// when the scan minimizer lands on the parameter boundary (unreliable case).
double hyperplane_distance_scan(const std::array<double, 3>& x, const std::array<double, 2>& z,
                                double a, double K);

// Weighted squared-Lorentzian-distance objective sum_i nu_i |x - p_i|_L^2 and
// its projected-gradient minimizer: descent on the space coordinates with the
// time coordinate recomputed, adaptive step, started from the origin.
// points [m, n+1], weights [m], both f64.
double centroid_objective(const Tensor& x, const Tensor& points, const Tensor& weights,
                          const geo::Curvature& c);
Tensor centroid_pgd(const Tensor& points, const Tensor& weights, const geo::Curvature& c,
                    int iters = 400);

}  // namespace lcnn::ref

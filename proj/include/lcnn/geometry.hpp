#pragma once

#include "lcnn/ops.hpp"

// Closed-form Lorentz-model geometry. Points live on the last axis as
// [t, s_1..s_n] with <x,x>_L = 1/K and t > 0; tangent vectors share the
// layout. Every function broadcasts over arbitrary leading axes and is a
// pure composition of tensor ops, so gradients flow through all of it.
namespace lcnn::geo {

struct Curvature {
    explicit Curvature(double k) : K(k) {
        if (!(k < 0.0)) throw DomainError("curvature must be strictly negative");
        sqrt_neg_K = std::sqrt(-k);
        radius = 1.0 / sqrt_neg_K;
    }
    double K;
    double sqrt_neg_K;  // sqrt(-K)
    double radius;      // 1/sqrt(-K), the time coordinate of the origin
};

// [n+1] point at the bottom of the hyperboloid: [radius, 0, ..., 0].
Tensor origin(int n, const Curvature& c, DType dt = DType::F32);

Tensor time_component(const Tensor& x);   // [.., 1]
Tensor space_component(const Tensor& x);  // [.., n]

// -x_t y_t + <x_s, y_s>; [.., 1] when keepdim.
Tensor minkowski_inner(const Tensor& x, const Tensor& y, bool keepdim = true);

// Recomputes the time component from a space component: [sqrt(|s|^2 - 1/K), s].
Tensor project_to_manifold(const Tensor& space, const Curvature& c);

// Geodesic distance (1/sqrt(-K)) acosh(K <x,y>_L); inputs slightly past the
// acosh domain (coincident points under rounding) clamp to distance zero.
Tensor lorentz_distance(const Tensor& x, const Tensor& y, const Curvature& c);

// Squared Lorentzian distance |x-y|_L^2 = 2/K - 2<x,y>_L (not the square of
// the geodesic distance).
Tensor lorentz_sq_distance(const Tensor& x, const Tensor& y, const Curvature& c);

// |x - origin|_L^2 via the simplified form (2/K)(1 - sqrt(-K) x_t).
Tensor sq_distance_to_origin(const Tensor& x, const Curvature& c);

// Geodesic from x with initial velocity z (tangent at x, checked within
// tangency_tol): cosh(a) x + sinh(a) z / a, a = sqrt(-K)|z|_L. Switches to a
// second-order series when a < 1e-6 so gradients stay finite at z = 0.
Tensor exp_map(const Tensor& x, const Tensor& z, const Curvature& c);

// exp map at the origin of the tangent [0, z], taking just the space part z.
Tensor exp_map_origin(const Tensor& z_space, const Curvature& c);

// Inverse of exp_map: (acosh(b)/sqrt(b^2-1)) (y - b x), b = K <x,y>_L, with
// the same small-argument series guard (sqrt(b^2-1) < 1e-6).
Tensor log_map(const Tensor& x, const Tensor& y, const Curvature& c);

// Parallel transport of v from T_x to T_y along the connecting geodesic.
Tensor parallel_transport(const Tensor& x, const Tensor& y, const Tensor& v, const Curvature& c);

// Transport with one endpoint fixed at the origin, simplified symbolically.
Tensor pt_to_origin(const Tensor& x, const Tensor& v, const Curvature& c);
Tensor pt_from_origin(const Tensor& y, const Tensor& v, const Curvature& c);

// Weighted centroid (sum nu_i x_i) / (sqrt(-K) |sum nu_i x_i|_L) minimizing
// the weighted squared Lorentzian distance. points: [.., m, n+1]; weights:
// [m] or [.., m], nonnegative with positive row sums.
Tensor lorentz_centroid(const Tensor& points, const Tensor& weights, const Curvature& c);

enum class VarianceMetric { Geodesic, Lorentzian };

// Mean squared distance of points [.., m, n+1] about mu [.., n+1] -> [..].
Tensor frechet_variance(const Tensor& points, const Tensor& mu, const Curvature& c,
                        VarianceMetric metric = VarianceMetric::Geodesic);

// [[1,0],[0,R]] for an orthogonal, det-1 spatial rotation R [n,n].
Tensor lorentz_rotation(const Tensor& R);
// Boost by velocity v [n], |v| < 1: [[g, -g v^T], [-g v, I + g^2/(1+g) v v^T]].
Tensor lorentz_boost(const Tensor& velocity);
// Applies an (n+1)x(n+1) transform to points on the last axis.
Tensor apply_transform(const Tensor& M, const Tensor& x);

// Poincare-ball image x_s / (sqrt(-K)(x_t + 1/sqrt(-K))), inside the ball of
// radius 1/sqrt(-K).
Tensor lorentz_to_poincare(const Tensor& x, const Curvature& c);

// ---- validation helpers -------------------------------------------------------
// |<x,x>_L - 1/K| per point -> [..].
Tensor manifold_residual(const Tensor& x, const Curvature& c);
// sqrt(max(<v,v>_L, 0)): Lorentzian norm of a (spacelike) tangent vector.
Tensor tangent_norm(const Tensor& v);
double max_abs(const Tensor& t);
double tangency_tol(DType dt);

}  // namespace lcnn::geo

#include "lcnn/geometry.hpp"

#include <cmath>

namespace lcnn::geo {

namespace {

// Inserts a singleton axis before the last one: [.., n] -> [.., 1, n].
Tensor unsqueeze_m2(const Tensor& t) {
    Shape s = t.shape();
    s.insert(s.end() - 1, 1);
    return reshape(t, s);
}

void require_point_axis(const Tensor& x, const char* name) {
    if (x.ndim() < 1 || x.dim(-1) < 2)
        throw ShapeError(std::string(name) + ": last axis must hold [t, s..], got " +
                         shape_str(x.shape()));
}

}  // namespace

double tangency_tol(DType dt) { return dt == DType::F32 ? 1e-4 : 1e-8; }

Tensor origin(int n, const Curvature& c, DType dt) {
    if (n < 1) throw ShapeError("origin: n must be >= 1");
    Tensor o = Tensor::zeros({n + 1}, dt);
    o.set(0, c.radius);
    return o;
}

Tensor time_component(const Tensor& x) { return slice(x, -1, 0, 1); }

Tensor space_component(const Tensor& x) { return slice(x, -1, 1, x.dim(-1)); }

Tensor minkowski_inner(const Tensor& x, const Tensor& y, bool keepdim) {
    require_point_axis(x, "minkowski_inner");
    if (x.dim(-1) != y.dim(-1))
        throw ShapeError("minkowski_inner: " + shape_str(x.shape()) + " vs " +
                         shape_str(y.shape()));
    Tensor prod = mul(x, y);
    Tensor t = slice(prod, -1, 0, 1);
    Tensor s = sum(slice(prod, -1, 1, x.dim(-1)), {-1}, true);
    Tensor r = sub(s, t);
    return keepdim ? r : reshape(r, Shape(r.shape().begin(), r.shape().end() - 1));
}

Tensor project_to_manifold(const Tensor& space, const Curvature& c) {
    Tensor sq = sum(square(space), {-1}, true);
    Tensor t = sqrt(sq + (-1.0 / c.K));  // argument >= -1/K > 0: no sqrt kink
    return concat({t, space}, -1);
}

Tensor lorentz_distance(const Tensor& x, const Tensor& y, const Curvature& c) {
    Tensor beta = mul(minkowski_inner(x, y), c.K);
    return mul(acosh(clamp_min(beta, 1.0)), c.radius);
}

Tensor lorentz_sq_distance(const Tensor& x, const Tensor& y, const Curvature& c) {
    return sub(2.0 / c.K, mul(minkowski_inner(x, y), 2.0));
}

Tensor sq_distance_to_origin(const Tensor& x, const Curvature& c) {
    // (2/K)(1 - sqrt(-K) x_t): expand 2/K - 2<x, origin>_L with
    // <x, origin>_L = -x_t/sqrt(-K).
    Tensor t = time_component(x);
    return mul(sub(1.0, mul(t, c.sqrt_neg_K)), 2.0 / c.K);
}

Tensor exp_map(const Tensor& x, const Tensor& z, const Curvature& c) {
    require_point_axis(x, "exp_map");
    {
        Tensor res = minkowski_inner(z.detach(), x.detach());
        Tensor zn = tangent_norm(z.detach());
        Tensor xt = time_component(x.detach());
        Tensor scale = add(mul(zn, xt), 1.0);
        double worst = max_abs(div(res, scale));
        if (worst > tangency_tol(x.dtype()))
            throw DomainError("exp_map: z is not tangent at x (residual " +
                              std::to_string(worst) + ")");
    }
    Tensor a2 = mul(clamp_min(minkowski_inner(z, z), 0.0), -c.K);  // alpha^2
    Tensor mask = lt(a2, 1e-12);
    Tensor a = sqrt(clamp_min(a2, 1e-12));
    Tensor cosh_a = where(mask, add(mul(a2, 0.5), 1.0), cosh(a));
    Tensor sinhc_a = where(mask, add(mul(a2, 1.0 / 6.0), 1.0), div(sinh(a), a));
    return add(mul(x, cosh_a), mul(z, sinhc_a));
}

Tensor exp_map_origin(const Tensor& z_space, const Curvature& c) {
    Tensor a2 = mul(sum(square(z_space), {-1}, true), -c.K);
    Tensor mask = lt(a2, 1e-12);
    Tensor a = sqrt(clamp_min(a2, 1e-12));
    Tensor cosh_a = where(mask, add(mul(a2, 0.5), 1.0), cosh(a));
    Tensor sinhc_a = where(mask, add(mul(a2, 1.0 / 6.0), 1.0), div(sinh(a), a));
    return concat({mul(cosh_a, c.radius), mul(z_space, sinhc_a)}, -1);
}

Tensor log_map(const Tensor& x, const Tensor& y, const Curvature& c) {
    Tensor beta = mul(minkowski_inner(x, y), c.K);
    Tensor q = sub(square(beta), 1.0);  // beta^2 - 1
    Tensor mask = lt(q, 1e-12);
    Tensor factor_series = sub(1.0, div(sub(beta, 1.0), 3.0));
    Tensor factor_exact = div(acosh(clamp_min(beta, 1.0)), sqrt(clamp_min(q, 1e-12)));
    Tensor factor = where(mask, factor_series, factor_exact);
    return mul(sub(y, mul(x, beta)), factor);
}

Tensor parallel_transport(const Tensor& x, const Tensor& y, const Tensor& v,
                          const Curvature& c) {
    Tensor num = minkowski_inner(y, v);
    Tensor den = sub(-1.0 / c.K, minkowski_inner(x, y));  // >= 2/(-K) on-manifold
    return add(v, mul(add(x, y), div(num, den)));
}

Tensor pt_to_origin(const Tensor& x, const Tensor& v, const Curvature& c) {
    // y = origin: <y,v>_L = -v_t/sqrt(-K); coefficient reduces to
    // -v_t / (1/sqrt(-K) + x_t).
    Tensor vt = time_component(v);
    Tensor xt = time_component(x);
    Tensor coeff = neg(div(vt, add(xt, c.radius)));
    Tensor xs = space_component(x);
    Tensor shifted_t = add(xt, c.radius);  // (x + origin) time component
    return add(v, mul(concat({shifted_t, xs}, -1), coeff));
}

Tensor pt_from_origin(const Tensor& y, const Tensor& v, const Curvature& c) {
    // x = origin and v_t = 0 for tangents at the origin:
    // coefficient = <y_s, v_s> / ((1/sqrt(-K))(1/sqrt(-K) + y_t)).
    Tensor ys = space_component(y);
    Tensor vs = space_component(v);
    Tensor num = sum(mul(ys, vs), {-1}, true);
    Tensor yt = time_component(y);
    Tensor den = mul(add(yt, c.radius), c.radius);
    Tensor coeff = div(num, den);
    Tensor shifted_t = add(yt, c.radius);
    return add(v, mul(concat({shifted_t, ys}, -1), coeff));
}

Tensor lorentz_centroid(const Tensor& points, const Tensor& weights, const Curvature& c) {
    if (points.ndim() < 2) throw ShapeError("lorentz_centroid: points must be [.., m, n+1]");
    int64_t m = points.dim(-2);
    if (weights.dim(-1) != m)
        throw ShapeError("lorentz_centroid: " + std::to_string(m) + " points vs weights " +
                         shape_str(weights.shape()));
    {
        auto w = weights.to_vector();
        int64_t rows = weights.numel() / m;
        for (int64_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (int64_t i = 0; i < m; ++i) {
                double wi = w[static_cast<size_t>(r * m + i)];
                if (wi < 0.0) throw DomainError("lorentz_centroid: negative weight");
                s += wi;
            }
            if (!(s > 0.0)) throw DomainError("lorentz_centroid: weights sum to zero");
        }
    }
    Shape ws = weights.shape();
    ws.push_back(1);
    Tensor u = sum(mul(points, reshape(weights, ws)), {-2}, false);
    Tensor q = neg(minkowski_inner(u, u));  // timelike: -<u,u> > 0
    Tensor norm = sqrt(clamp_min(q, 1e-30));
    return div(u, mul(norm, c.sqrt_neg_K));
}

Tensor frechet_variance(const Tensor& points, const Tensor& mu, const Curvature& c,
                        VarianceMetric metric) {
    if (points.ndim() < 2 || points.dim(-2) < 1)
        throw ShapeError("frechet_variance: needs a non-empty [.., m, n+1] batch");
    Tensor mu_u = unsqueeze_m2(mu);
    Tensor per_point;  // [.., m, 1]
    if (metric == VarianceMetric::Geodesic) {
        per_point = square(lorentz_distance(points, mu_u, c));
    } else {
        per_point = lorentz_sq_distance(points, mu_u, c);
    }
    return mean(per_point, {-2, -1}, false);
}

Tensor lorentz_rotation(const Tensor& R) {
    if (R.ndim() != 2 || R.dim(0) != R.dim(1))
        throw ShapeError("lorentz_rotation: R must be square");
    int64_t n = R.dim(0);
    double tol = R.dtype() == DType::F32 ? 1e-4 : 1e-8;
    // Orthogonality residual max |R^T R - I|.
    Tensor resid = sub(matmul(transpose_last2(R.detach()), R.detach()), Tensor::eye(n, R.dtype()));
    if (max_abs(resid) > tol) throw DomainError("lorentz_rotation: R is not orthogonal");
    // Determinant via partial-pivot elimination (small n).
    std::vector<double> a = R.to_vector();
    double det = 1.0;
    for (int64_t col = 0; col < n; ++col) {
        int64_t piv = col;
        for (int64_t r = col + 1; r < n; ++r)
            if (std::abs(a[static_cast<size_t>(r * n + col)]) >
                std::abs(a[static_cast<size_t>(piv * n + col)]))
                piv = r;
        if (piv != col) {
            for (int64_t j = 0; j < n; ++j)
                std::swap(a[static_cast<size_t>(col * n + j)], a[static_cast<size_t>(piv * n + j)]);
            det = -det;
        }
        double p = a[static_cast<size_t>(col * n + col)];
        det *= p;
        if (p == 0.0) break;
        for (int64_t r = col + 1; r < n; ++r) {
            double f = a[static_cast<size_t>(r * n + col)] / p;
            for (int64_t j = col; j < n; ++j)
                a[static_cast<size_t>(r * n + j)] -= f * a[static_cast<size_t>(col * n + j)];
        }
    }
    if (std::abs(det - 1.0) > std::max(tol, 1e-6))
        throw DomainError("lorentz_rotation: det(R) must be +1");
    Tensor M = Tensor::zeros({n + 1, n + 1}, R.dtype());
    M.set(0, 1.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j)
            M.set((i + 1) * (n + 1) + (j + 1), R.at(i * n + j));
    return M;
}

Tensor lorentz_boost(const Tensor& velocity) {
    if (velocity.ndim() != 1) throw ShapeError("lorentz_boost: velocity must be [n]");
    int64_t n = velocity.dim(0);
    double v2 = 0.0;
    auto v = velocity.to_vector();
    for (double vi : v) v2 += vi * vi;
    if (!(v2 < 1.0)) throw DomainError("lorentz_boost: |velocity| must be < 1");
    double g = 1.0 / std::sqrt(1.0 - v2);
    Tensor M = Tensor::zeros({n + 1, n + 1}, velocity.dtype());
    M.set(0, g);
    for (int64_t i = 0; i < n; ++i) {
        M.set(i + 1, -g * v[static_cast<size_t>(i)]);
        M.set((i + 1) * (n + 1), -g * v[static_cast<size_t>(i)]);
        for (int64_t j = 0; j < n; ++j) {
            double e = (i == j ? 1.0 : 0.0) +
                       g * g / (1.0 + g) * v[static_cast<size_t>(i)] * v[static_cast<size_t>(j)];
            M.set((i + 1) * (n + 1) + (j + 1), e);
        }
    }
    return M;
}

Tensor apply_transform(const Tensor& M, const Tensor& x) {
    return matmul(x, transpose_last2(M));
}

Tensor lorentz_to_poincare(const Tensor& x, const Curvature& c) {
    // x_s / (sqrt(-K)(x_t + 1/sqrt(-K))): image lies in the ball of radius
    // 1/sqrt(-K), i.e. -K|p|^2 < 1. Reduces to x_s/(x_t + 1) at K = -1.
    Tensor t = time_component(x);
    return div(space_component(x), mul(add(t, c.radius), c.sqrt_neg_K));
}

Tensor manifold_residual(const Tensor& x, const Curvature& c) {
    return abs(sub(minkowski_inner(x, x, false), 1.0 / c.K));
}

Tensor tangent_norm(const Tensor& v) { return sqrt(clamp_min(minkowski_inner(v, v), 0.0)); }

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (int64_t i = 0; i < t.numel(); ++i) m = std::max(m, std::abs(t.at(i)));
    return m;
}

}  // namespace lcnn::geo

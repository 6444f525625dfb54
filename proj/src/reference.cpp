#include "lcnn/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace lcnn::ref {

Tensor conv2d_loop(const Tensor& x, const nn::ConvSpec& sp, const Tensor& W, const Tensor& b,
                   const geo::Curvature& c) {
    int64_t B = x.dim(0), H = x.dim(1), Wd = x.dim(2), ch = x.dim(3);
    int64_t n = ch - 1, N = static_cast<int64_t>(sp.kh) * sp.kw;
    int64_t ncat = N * n + 1, m = sp.out_channels;
    auto [OH, OW] = sp.out_hw(H, Wd);
    Tensor out = Tensor::zeros({B, OH, OW, m + 1}, DType::F64);
    std::vector<double> v(static_cast<size_t>(ncat));
    for (int64_t bi = 0; bi < B; ++bi)
        for (int64_t oh = 0; oh < OH; ++oh)
            for (int64_t ow = 0; ow < OW; ++ow) {
                double tsq = 0.0;
                int64_t j = 0;
                for (int ki = 0; ki < sp.kh; ++ki)
                    for (int kj = 0; kj < sp.kw; ++kj, ++j) {
                        int64_t hi = oh * sp.stride - sp.pad + ki;
                        int64_t wi = ow * sp.stride - sp.pad + kj;
                        bool in = hi >= 0 && hi < H && wi >= 0 && wi < Wd;
                        int64_t base = ((bi * H + hi) * Wd + wi) * ch;
                        double t = in ? x.at(base) : c.radius;
                        tsq += t * t;
                        for (int64_t q = 0; q < n; ++q)
                            v[static_cast<size_t>(1 + j * n + q)] = in ? x.at(base + 1 + q) : 0.0;
                    }
                v[0] = std::sqrt(tsq + static_cast<double>(N - 1) / c.K);
                double hsq = 0.0;
                int64_t obase = ((bi * OH + oh) * OW + ow) * (m + 1);
                for (int64_t o = 0; o < m; ++o) {
                    double acc = b.at(o);
                    for (int64_t k = 0; k < ncat; ++k)
                        acc += W.at(o * ncat + k) * v[static_cast<size_t>(k)];
                    out.set(obase + 1 + o, acc);
                    hsq += acc * acc;
                }
                out.set(obase, std::sqrt(hsq - 1.0 / c.K));
            }
    return out;
}

Tensor transposed_materialized(const Tensor& x, const nn::ConvSpec& sp, const geo::Curvature& c) {
    int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), ch = x.dim(3);
    int64_t pp = sp.kh - 1 - sp.pad;
    int64_t ppw = sp.kw - 1 - sp.pad;
    int64_t VH = (H - 1) * sp.stride + 1 + 2 * pp;
    int64_t VW = (W - 1) * sp.stride + 1 + 2 * ppw;
    Tensor M = Tensor::zeros({B, VH, VW, ch}, x.dtype());
    for (int64_t bi = 0; bi < B; ++bi)
        for (int64_t h = 0; h < VH; ++h)
            for (int64_t w = 0; w < VW; ++w) {
                int64_t base = ((bi * VH + h) * VW + w) * ch;
                int64_t sh = h - pp, sw = w - ppw;
                bool real = sh >= 0 && sw >= 0 && sh % sp.stride == 0 && sw % sp.stride == 0 &&
                            sh / sp.stride < H && sw / sp.stride < W;
                if (real) {
                    int64_t src = ((bi * H + sh / sp.stride) * W + sw / sp.stride) * ch;
                    for (int64_t q = 0; q < ch; ++q) M.set(base + q, x.at(src + q));
                } else {
                    M.set(base, c.radius);
                }
            }
    return M;
}

double hyperplane_distance_scan(const std::array<double, 3>& x, const std::array<double, 2>& z,
                                double a, double K) {
    double snk = std::sqrt(-K);
    double c1 = std::cosh(snk * a), s1 = std::sinh(snk * a);
    double zn = std::hypot(z[0], z[1]);
    std::array<double, 3> w{s1 * zn, c1 * z[0], c1 * z[1]};
    auto inner = [](const std::array<double, 3>& p, const std::array<double, 3>& q) {
        return -p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
    };
    double ww = inner(w, w);  // = zn^2 > 0
    // Timelike plane vector: project e0 onto the plane, normalize to <A,A>=1/K.
    std::array<double, 3> e0{1, 0, 0};
    double ce = inner(e0, w) / ww;
    std::array<double, 3> u0{e0[0] - ce * w[0], e0[1] - ce * w[1], e0[2] - ce * w[2]};
    double q0 = inner(u0, u0);  // < 0
    double lam = std::sqrt(1.0 / (K * q0));
    std::array<double, 3> A{lam * u0[0], lam * u0[1], lam * u0[2]};
    if (A[0] < 0)
        for (double& ai : A) ai = -ai;
    // Spacelike plane vector orthogonal to A, normalized to <B,B> = -1/K.
    std::array<double, 3> v0{0, -w[2], w[1]};
    double cb = K * inner(v0, A);  // <v0,A>/<A,A>
    std::array<double, 3> b0{v0[0] - cb * A[0], v0[1] - cb * A[1], v0[2] - cb * A[2]};
    double r0 = inner(b0, b0);  // > 0
    double mu = std::sqrt(1.0 / (-K * r0));
    std::array<double, 3> Bv{mu * b0[0], mu * b0[1], mu * b0[2]};
    auto dist_at = [&](double s) {
        double chs = std::cosh(s), shs = std::sinh(s);
        std::array<double, 3> p{chs * A[0] + shs * Bv[0], chs * A[1] + shs * Bv[1],
                                chs * A[2] + shs * Bv[2]};
        double arg = std::max(1.0, K * inner(x, p));
        return std::acosh(arg) / snk;
    };
    // Coarse scan then a fine scan around the best point.
    double best = std::numeric_limits<double>::infinity(), best_s = 0;
    for (int i = 0; i <= 8000; ++i) {
        double s = -10.0 + 20.0 * i / 8000.0;
        double d = dist_at(s);
        if (d < best) best = d, best_s = s;
    }
    if (std::abs(best_s) >= 9.9) return std::numeric_limits<double>::quiet_NaN();
    for (int i = 0; i <= 4000; ++i) {
        double s = best_s - 0.0025 + 0.005 * i / 4000.0;
        best = std::min(best, dist_at(s));
    }
    return best;
}

namespace {

double objective_host(const std::vector<double>& xs, const Tensor& points, const Tensor& weights,
                      const geo::Curvature& c) {
    int64_t m = points.dim(0), d = points.dim(1);
    int64_t n = d - 1;
    double ssq = 0.0;
    for (int64_t j = 0; j < n; ++j) ssq += xs[static_cast<size_t>(j)] * xs[static_cast<size_t>(j)];
    double xt = std::sqrt(ssq - 1.0 / c.K);
    double obj = 0.0;
    for (int64_t i = 0; i < m; ++i) {
        double ip = -xt * points.at(i * d);
        for (int64_t j = 0; j < n; ++j)
            ip += xs[static_cast<size_t>(j)] * points.at(i * d + 1 + j);
        obj += weights.at(i) * (2.0 / c.K - 2.0 * ip);
    }
    return obj;
}

}  // namespace

double centroid_objective(const Tensor& x, const Tensor& points, const Tensor& weights,
                          const geo::Curvature& c) {
    int64_t n = points.dim(1) - 1;
    std::vector<double> xs(static_cast<size_t>(n));
    for (int64_t j = 0; j < n; ++j) xs[static_cast<size_t>(j)] = x.at(1 + j);
    return objective_host(xs, points, weights, c);
}

Tensor centroid_pgd(const Tensor& points, const Tensor& weights, const geo::Curvature& c,
                    int iters) {
    int64_t m = points.dim(0), d = points.dim(1), n = d - 1;
    std::vector<double> xs(static_cast<size_t>(n), 0.0);  // start at the origin
    double wsum = 0.0;
    for (int64_t i = 0; i < m; ++i) wsum += weights.at(i);
    double step = 0.1 / wsum;
    double f = objective_host(xs, points, weights, c);
    std::vector<double> g(static_cast<size_t>(n)), trial(static_cast<size_t>(n));
    for (int it = 0; it < iters; ++it) {
        // d/ds_j sum_i w_i (2/K - 2<x(s), p_i>) with x(s) = [sqrt(|s|^2-1/K), s].
        double ssq = 0.0;
        for (double sj : xs) ssq += sj * sj;
        double xt = std::sqrt(ssq - 1.0 / c.K);
        std::fill(g.begin(), g.end(), 0.0);
        for (int64_t i = 0; i < m; ++i) {
            double pt = points.at(i * d);
            for (int64_t j = 0; j < n; ++j)
                g[static_cast<size_t>(j)] -=
                    2.0 * weights.at(i) *
                    (points.at(i * d + 1 + j) - pt * xs[static_cast<size_t>(j)] / xt);
        }
        for (int64_t j = 0; j < n; ++j)
            trial[static_cast<size_t>(j)] = xs[static_cast<size_t>(j)] - step * g[static_cast<size_t>(j)];
        double ft = objective_host(trial, points, weights, c);
        if (ft < f) {
            xs = trial;
            f = ft;
            step *= 1.2;
        } else {
            step *= 0.5;
        }
    }
    Tensor out = Tensor::zeros({n}, DType::F64);
    for (int64_t j = 0; j < n; ++j) out.set(j, xs[static_cast<size_t>(j)]);
    return geo::project_to_manifold(out, c);
}

}  // namespace lcnn::ref

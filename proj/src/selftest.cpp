#include "lcnn/selftest.hpp"

#include <cmath>
#include <functional>

#include "lcnn/geometry.hpp"
#include "lcnn/layers.hpp"
#include "lcnn/reference.hpp"

namespace lcnn::selftest {

namespace {

constexpr double kCurvs[] = {-0.2, -0.5, -1.0, -2.0};

struct Recorder {
    SuiteResult r;
    uint64_t cur = 0;
    void trial(uint64_t s) { cur = s; }
    void check(bool ok, const std::string& invariant) {
        ++r.checks;
        if (!ok && r.failures++ == 0) {
            r.detail = invariant;
            r.repro_seed = cur;
        }
    }
};

double softplus_inv(double y) { return std::log(std::exp(y) - 1.0); }

Tensor rand_point(const Shape& lead, int n, const geo::Curvature& c, Rng& rng, double scale) {
    Shape s = lead;
    s.push_back(n);
    return geo::exp_map_origin(rand_normal(s, 0.0, scale, rng, DType::F64), c);
}

// Random tangent at x: a time-zero tangent at the origin transported to x.
Tensor rand_tangent(const Tensor& x, int n, const geo::Curvature& c, Rng& rng, double scale) {
    Shape lead = x.shape();
    lead.pop_back();
    Shape ts = lead, ss = lead;
    ts.push_back(1);
    ss.push_back(n);
    Tensor v0 = concat({Tensor::zeros(ts, DType::F64), rand_normal(ss, 0.0, scale, rng, DType::F64)},
                       static_cast<int>(ts.size()) - 1);
    return geo::pt_from_origin(x, v0, c);
}

double loop_inner(const Tensor& x, const Tensor& y, bool flip_time_sign) {
    double acc = (flip_time_sign ? 1.0 : -1.0) * x.at(0) * y.at(0);
    for (int64_t i = 1; i < x.numel(); ++i) acc += x.at(i) * y.at(i);
    return acc;
}

double rel(double got, double want) {
    double den = std::max({std::abs(got), std::abs(want), 1e-300});
    return std::abs(got - want) / den;
}

SuiteResult suite_inner(const Options& opt) {
    Recorder rec;
    rec.r.name = "minkowski-inner";
    for (double k : kCurvs) {
        geo::Curvature c(k);
        for (int t = 0; t < 50; ++t) {
            uint64_t seed = opt.seed + 1000 * t + static_cast<uint64_t>(-10 * k);
            rec.trial(seed);
            Rng rng(seed);
            int n = static_cast<int>(rng.integer(2, 6));
            Tensor x = rand_normal({n + 1}, 0.0, 2.0, rng, DType::F64);
            Tensor y = rand_normal({n + 1}, 0.0, 2.0, rng, DType::F64);
            double got = geo::minkowski_inner(x, y).item();
            double want = loop_inner(x, y, opt.inject_inner_sign_error);
            rec.check(rel(got, want) < 1e-12,
                      "<x,y>_L must equal -x_t y_t + <x_s,y_s> (time term sign)");
            double sym = geo::minkowski_inner(y, x).item();
            rec.check(rel(got, sym) < 1e-12, "<x,y>_L must be symmetric");
            double a = rng.uniform(-2.0, 2.0);
            Tensor z = rand_normal({n + 1}, 0.0, 2.0, rng, DType::F64);
            double lhs = geo::minkowski_inner(add(mul(x, a), y), z).item();
            double rhs = a * geo::minkowski_inner(x, z).item() + geo::minkowski_inner(y, z).item();
            rec.check(rel(lhs, rhs) < 1e-10, "<ax+y,z>_L must be bilinear");
            Tensor p = rand_point({}, n, c, rng, 0.8);
            rec.check(std::abs(geo::minkowski_inner(p, p).item() - 1.0 / k) < 1e-10,
                      "on-manifold points must satisfy <x,x>_L = 1/K");
        }
    }
    return rec.r;
}

SuiteResult suite_exp_log(const Options& opt) {
    Recorder rec;
    rec.r.name = "exp-log";
    for (double k : kCurvs) {
        geo::Curvature c(k);
        for (int t = 0; t < 40; ++t) {
            uint64_t seed = opt.seed + 3000 + 1000 * t + static_cast<uint64_t>(-10 * k);
            rec.trial(seed);
            Rng rng(seed);
            int n = static_cast<int>(rng.integer(2, 5));
            Tensor x = rand_point({}, n, c, rng, 0.7);
            Tensor v = rand_tangent(x, n, c, rng, 0.8);
            Tensor y = geo::exp_map(x, v, c);
            rec.check(geo::max_abs(geo::manifold_residual(y, c)) < 1e-10,
                      "exp_map must land on the manifold");
            Tensor v2 = geo::log_map(x, y, c);
            rec.check(geo::max_abs(sub(v, v2)) < 1e-8, "log_map must invert exp_map");
            double d = geo::lorentz_distance(x, y, c).item();
            double vn = geo::tangent_norm(v).item();
            rec.check(rel(d, vn) < 1e-8,
                      "distance(x, exp_x(v)) must equal the tangent norm |v|_L");
            Tensor q = rand_point({}, n, c, rng, 0.7);
            Tensor back = geo::exp_map(x, geo::log_map(x, q, c), c);
            rec.check(geo::max_abs(sub(back, q)) < 1e-8, "exp_map must invert log_map");
        }
    }
    return rec.r;
}

SuiteResult suite_transport(const Options& opt) {
    Recorder rec;
    rec.r.name = "transport";
    for (double k : kCurvs) {
        geo::Curvature c(k);
        for (int t = 0; t < 40; ++t) {
            uint64_t seed = opt.seed + 7000 + 1000 * t + static_cast<uint64_t>(-10 * k);
            rec.trial(seed);
            Rng rng(seed);
            int n = static_cast<int>(rng.integer(2, 5));
            Tensor x = rand_point({}, n, c, rng, 0.6);
            Tensor y = rand_point({}, n, c, rng, 0.6);
            Tensor v = rand_tangent(x, n, c, rng, 1.0);
            Tensor w = rand_tangent(x, n, c, rng, 1.0);
            Tensor vy = geo::parallel_transport(x, y, v, c);
            Tensor wy = geo::parallel_transport(x, y, w, c);
            double before = geo::minkowski_inner(v, w).item();
            double after = geo::minkowski_inner(vy, wy).item();
            rec.check(rel(before, after) < 1e-9,
                      "parallel transport must preserve the Lorentz inner product");
            rec.check(std::abs(geo::minkowski_inner(vy, y).item()) < 1e-8,
                      "transported vectors must be tangent at the destination");
            Tensor vb = geo::parallel_transport(y, x, vy, c);
            rec.check(geo::max_abs(sub(vb, v)) < 1e-8,
                      "transport x->y->x must return the original tangent");
            Tensor v0 = geo::pt_to_origin(x, v, c);
            Tensor vr = geo::pt_from_origin(x, v0, c);
            rec.check(geo::max_abs(sub(vr, v)) < 1e-8,
                      "origin-specialized transports must invert each other");
        }
    }
    return rec.r;
}

SuiteResult suite_centroid(const Options& opt) {
    Recorder rec;
    rec.r.name = "centroid";
    for (double k : kCurvs) {
        geo::Curvature c(k);
        for (int t = 0; t < 10; ++t) {
            uint64_t seed = opt.seed + 11000 + 1000 * t + static_cast<uint64_t>(-10 * k);
            rec.trial(seed);
            Rng rng(seed);
            int m = static_cast<int>(rng.integer(2, 5));
            Tensor pts = rand_point({m}, 2, c, rng, 0.9);
            Tensor w = rand_uniform({m}, 0.2, 1.0, rng, DType::F64);
            Tensor mu = geo::lorentz_centroid(pts, w, c);
            rec.check(geo::max_abs(geo::manifold_residual(mu, c)) < 1e-10,
                      "centroid must lie on the manifold");

            Tensor onehot = Tensor::zeros({m}, DType::F64);
            int64_t pick = rng.integer(0, m - 1);
            onehot.set(pick, 1.0);
            Tensor solo = geo::lorentz_centroid(pts, onehot, c);
            Tensor target = reshape(slice(pts, 0, pick, pick + 1), {3});
            rec.check(geo::max_abs(sub(solo, target)) < 1e-10,
                      "one-hot weights must return the selected point");

            // Reversing the point order must not move the centroid.
            Tensor rpts = Tensor::zeros({m, 3}, DType::F64);
            Tensor rw = Tensor::zeros({m}, DType::F64);
            for (int64_t i = 0; i < m; ++i) {
                rw.set(i, w.at(m - 1 - i));
                for (int64_t j = 0; j < 3; ++j) rpts.set(i * 3 + j, pts.at((m - 1 - i) * 3 + j));
            }
            rec.check(geo::max_abs(sub(geo::lorentz_centroid(rpts, rw, c), mu)) < 1e-10,
                      "centroid must be order invariant");

            double obj = ref::centroid_objective(mu, pts, w, c);
            bool minimal = true;
            for (int p = 0; p < 6; ++p) {
                Tensor eps = rand_tangent(mu, 2, c, rng, 1e-2);
                double other = ref::centroid_objective(geo::exp_map(mu, eps, c), pts, w, c);
                minimal = minimal && obj <= other + 1e-12;
            }
            rec.check(minimal, "centroid must minimize the weighted squared-distance objective");

            if (m == 2) {
                Tensor even = Tensor::ones({2}, DType::F64);
                Tensor mid = geo::lorentz_centroid(pts, even, c);
                double d0 = geo::lorentz_distance(mid, reshape(slice(pts, 0, 0, 1), {3}), c).item();
                double d1 = geo::lorentz_distance(mid, reshape(slice(pts, 0, 1, 2), {3}), c).item();
                rec.check(rel(d0, d1) < 1e-8, "equal-weight two-point centroid must be equidistant");
            }
        }
    }
    // Closed form vs projected gradient descent on the same objective.
    for (int t = 0; t < 5; ++t) {
        uint64_t seed = opt.seed + 17000 + t;
        rec.trial(seed);
        Rng rng(seed);
        geo::Curvature c(-1.0);
        int m = static_cast<int>(rng.integer(2, 5));
        Tensor pts = rand_point({m}, 2, c, rng, 1.0);
        Tensor w = rand_uniform({m}, 0.2, 1.0, rng, DType::F64);
        double closed = ref::centroid_objective(geo::lorentz_centroid(pts, w, c), pts, w, c);
        double pgd = ref::centroid_objective(ref::centroid_pgd(pts, w, c, 600), pts, w, c);
        rec.check(pgd - closed < 1e-6 && pgd - closed > -1e-9,
                  "closed-form centroid must match gradient-descent minimization");
    }
    return rec.r;
}

SuiteResult suite_hyperplane(const Options& opt) {
    Recorder rec;
    rec.r.name = "hyperplane";
    for (double k : {-0.5, -1.0, -2.0}) {
        geo::Curvature c(k);
        for (int t = 0; t < 4; ++t) {
            uint64_t seed = opt.seed + 23000 + 1000 * t + static_cast<uint64_t>(-10 * k);
            rec.trial(seed);
            Rng rng(seed);
            std::array<double, 2> z{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
            if (std::hypot(z[0], z[1]) < 0.1) z[0] += 0.5;
            double a = rng.uniform(-0.8, 0.8);
            Tensor xt = rand_point({}, 2, c, rng, 0.6);
            std::array<double, 3> x{xt.at(0), xt.at(1), xt.at(2)};
            Tensor Z = Tensor::from({1, 2}, {z[0], z[1]}, DType::F64);
            Tensor av = Tensor::from({1}, {a}, DType::F64);
            double logit = nn::lorentz_mlr(xt, Z, av, c).at(0);
            double d_layer = std::abs(logit) / std::hypot(z[0], z[1]);
            double d_scan = ref::hyperplane_distance_scan(x, z, a, c.K);
            if (!std::isfinite(d_scan) || d_scan < 1e-2) continue;  // near-plane draw, no rel err
            rec.check(rel(d_layer, d_scan) < 1e-3,
                      "mlr logit magnitude must match the scanned hyperplane distance");
        }
    }
    // Logit signs against the explicit hyperplane normal.
    geo::Curvature c1(-1.0);
    for (int t = 0; t < 100; ++t) {
        uint64_t seed = opt.seed + 29000 + t;
        rec.trial(seed);
        Rng rng(seed);
        int C = static_cast<int>(rng.integer(2, 5));
        int n = static_cast<int>(rng.integer(2, 4));
        Tensor Z = rand_normal({C, n}, 0.0, 1.0, rng, DType::F64);
        Tensor a = rand_uniform({C}, -0.8, 0.8, rng, DType::F64);
        Tensor x = rand_point({}, n, c1, rng, 0.8);
        Tensor logits = nn::lorentz_mlr(x, Z, a, c1);
        bool all = true;
        for (int cc = 0; cc < C; ++cc) {
            double zn = 0.0;
            for (int j = 0; j < n; ++j) zn += Z.at(cc * n + j) * Z.at(cc * n + j);
            zn = std::sqrt(zn);
            double ip = -std::sinh(a.at(cc)) * zn * x.at(0);
            for (int j = 0; j < n; ++j) ip += std::cosh(a.at(cc)) * Z.at(cc * n + j) * x.at(1 + j);
            if (std::abs(ip) < 1e-9) continue;
            double lg = logits.at(cc);
            all = all && ((ip > 0) == (lg > 0));
        }
        rec.check(all, "sign(logit) must equal sign(<w,x>_L) for the explicit normal w");
    }
    return rec.r;
}

SuiteResult suite_conv(const Options& opt) {
    Recorder rec;
    rec.r.name = "conv-oracle";
    auto run_case = [&](double k, uint64_t seed, int cin, int cout, int ksz, int stride, int pad,
                        int H, int W) {
        geo::Curvature c(k);
        rec.trial(seed);
        Rng rng(seed);
        Tensor x = rand_point({1, H, W}, cin, c, rng, 0.8);
        int64_t ncat = static_cast<int64_t>(cin) * ksz * ksz + 1;
        Tensor Wt = rand_normal({cout, ncat}, 0.0, 0.4, rng, DType::F64);
        Tensor b = rand_normal({cout}, 0.0, 0.2, rng, DType::F64);
        nn::ConvSpec sp;
        sp.in_channels = cin;
        sp.out_channels = cout;
        sp.kh = sp.kw = ksz;
        sp.stride = stride;
        sp.pad = pad;
        Tensor fast = nn::lorentz_conv2d(x, sp, Wt, b, nn::Activation::Identity, c);
        Tensor want = ref::conv2d_loop(x, sp, Wt, b, c);
        rec.check(geo::max_abs(sub(fast, want)) < 1e-10,
                  "im2col convolution must match the nested-loop oracle");
        rec.check(geo::max_abs(geo::manifold_residual(fast, c)) < 1e-9,
                  "convolution outputs must stay on the manifold");
    };
    int t = 0;
    for (double k : {-1.0, -0.5}) {
        run_case(k, opt.seed + 31000 + t++, 2, 3, 3, 1, 1, 5, 5);
        run_case(k, opt.seed + 31000 + t++, 1, 2, 3, 2, 0, 6, 6);
        run_case(k, opt.seed + 31000 + t++, 2, 2, 5, 2, 2, 6, 6);
    }

    {  // 1x1 stride-1 convolution degenerates to a per-position fc.
        uint64_t seed = opt.seed + 37000;
        rec.trial(seed);
        Rng rng(seed);
        geo::Curvature c(-1.0);
        Tensor x = rand_point({2, 4, 4}, 3, c, rng, 0.8);
        Tensor Wt = rand_normal({4, 4}, 0.0, 0.5, rng, DType::F64);
        Tensor b = rand_normal({4}, 0.0, 0.2, rng, DType::F64);
        nn::ConvSpec sp;
        sp.in_channels = 3;
        sp.out_channels = 4;
        Tensor y1 = nn::lorentz_conv2d(x, sp, Wt, b, nn::Activation::Identity, c);
        Tensor y2 = nn::lorentz_fc(reshape(x, {2 * 4 * 4, 4}), Wt, b, nn::Activation::Identity, c);
        rec.check(geo::max_abs(sub(y1, reshape(y2, {2, 4, 4, 5}))) < 1e-12,
                  "1x1 stride-1 convolution must equal a per-position fc");
    }

    {  // Transposed conv vs the materialized origin-interleaved map.
        uint64_t seed = opt.seed + 41000;
        rec.trial(seed);
        Rng rng(seed);
        geo::Curvature c(-1.0);
        Tensor x = rand_point({1, 3, 4}, 2, c, rng, 0.8);
        nn::ConvSpec sp;
        sp.in_channels = 2;
        sp.out_channels = 2;
        sp.kh = sp.kw = 3;
        sp.stride = 2;
        sp.pad = 1;
        sp.transposed = true;
        Tensor Wt = rand_normal({2, 19}, 0.0, 0.4, rng, DType::F64);
        Tensor b = rand_normal({2}, 0.0, 0.2, rng, DType::F64);
        Tensor fused = nn::lorentz_conv_transpose2d(x, sp, Wt, b, nn::Activation::Identity, c);
        Tensor M = ref::transposed_materialized(x, sp, c);
        nn::ConvSpec unit;
        unit.in_channels = 2;
        unit.out_channels = 2;
        unit.kh = unit.kw = 3;
        Tensor direct = nn::lorentz_conv2d(M, unit, Wt, b, nn::Activation::Identity, c);
        rec.check(geo::max_abs(sub(fused, direct)) < 1e-12,
                  "transposed conv must equal origin-interleave plus stride-1 conv");
    }
    return rec.r;
}

SuiteResult suite_batchnorm(const Options& opt) {
    Recorder rec;
    rec.r.name = "batchnorm";
    for (double k : {-1.0, -0.5}) {
        geo::Curvature c(k);
        uint64_t seed = opt.seed + 43000 + static_cast<uint64_t>(-10 * k);
        rec.trial(seed);
        Rng rng(seed);
        int n = 3, B = 48;
        Tensor x = rand_point({B}, n, c, rng, 1.2);
        Tensor mu = geo::lorentz_centroid(x, Tensor::ones({B}, DType::F64), c);
        double var = geo::frechet_variance(x, mu, c).item();

        nn::LorentzBatchNorm bn(n, c, 0.1, 1e-5, DType::F64);
        bn.beta_space_.copy_from(geo::space_component(mu));
        bn.gamma_raw_.copy_from(Tensor::full({}, softplus_inv(std::sqrt(var + 1e-5)), DType::F64));
        bn.set_train(true);
        Tensor y = bn.forward(x);
        rec.check(geo::max_abs(sub(y, x)) < 1e-8,
                  "unit-scaling batch norm about the batch mean must reproduce its input");

        double g = 0.7;
        nn::LorentzBatchNorm bn2(n, c, 0.1, 1e-5, DType::F64);
        bn2.gamma_raw_.copy_from(Tensor::full({}, softplus_inv(g), DType::F64));
        bn2.set_train(true);
        Tensor y2 = bn2.forward(x);
        double outv = geo::frechet_variance(y2, bn2.beta(), c).item();
        rec.check(rel(outv, g * g * var / (var + 1e-5)) < 1e-6,
                  "output Frechet variance must equal gamma^2 var/(var+eps)");
        rec.check(rel(outv, g * g) < 1e-4, "output Frechet variance must match gamma^2");

        double worst = 0.0;
        for (int it = 0; it < 200; ++it) {
            Tensor xb = rand_point({8}, n, c, rng, 1.0);
            bn2.forward(xb);
            worst = std::max(worst, geo::max_abs(geo::manifold_residual(bn2.running_mean_, c)));
        }
        rec.check(worst < 1e-8, "running mean must stay on the manifold across updates");
        rec.check(bn2.running_var_.item() > 0.0, "running variance must stay positive");

        bn2.set_train(false);
        std::vector<double> before;
        for (auto& bref : bn2.buffers())
            for (int64_t i = 0; i < bref.value.numel(); ++i) before.push_back(bref.value.at(i));
        bn2.forward(rand_point({8}, n, c, rng, 1.0));
        size_t idx = 0;
        bool pure = true;
        for (auto& bref : bn2.buffers())
            for (int64_t i = 0; i < bref.value.numel(); ++i)
                pure = pure && bref.value.at(i) == before[idx++];
        rec.check(pure, "eval-mode forward must not touch the running estimates");
    }
    return rec.r;
}

using SuiteFn = SuiteResult (*)(const Options&);

const std::vector<std::pair<std::string, SuiteFn>>& registry() {
    static const std::vector<std::pair<std::string, SuiteFn>> reg = {
        {"minkowski-inner", suite_inner}, {"exp-log", suite_exp_log},
        {"transport", suite_transport},   {"centroid", suite_centroid},
        {"hyperplane", suite_hyperplane}, {"conv-oracle", suite_conv},
        {"batchnorm", suite_batchnorm},
    };
    return reg;
}

}  // namespace

std::vector<std::string> suite_names() {
    std::vector<std::string> names;
    for (auto& [name, fn] : registry()) names.push_back(name);
    return names;
}

SuiteResult run_suite(const std::string& name, const Options& opt) {
    for (auto& [n, fn] : registry())
        if (n == name) return fn(opt);
    throw ConfigError("selftest: unknown suite '" + name + "'");
}

std::vector<SuiteResult> run_all(const Options& opt) {
    std::vector<SuiteResult> out;
    for (auto& [name, fn] : registry()) out.push_back(fn(opt));
    return out;
}

}  // namespace lcnn::selftest

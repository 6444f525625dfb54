#include "lcnn/layers.hpp"

#include <cmath>
#include <cstdio>

namespace lcnn::nn {


namespace {

std::string fmt_num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

Tensor apply_act(const Tensor& h, Activation act) {
    return act == Activation::Relu ? relu(h) : h;
}

void require_point_axis(const Tensor& x, const char* name) {
    if (!x.defined() || x.ndim() < 1 || x.dim(-1) < 2)
        throw ShapeError(std::string(name) + ": needs points [.., n+1] with n >= 1, got " +
                         (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
}

// He-style init: W ~ N(0, sqrt(2/fan_in)) for relu, N(0, sqrt(1/fan_in)) otherwise.
Tensor init_weight(Shape shape, int64_t fan_in, Activation act, Rng& rng, DType dt) {
    double gain = act == Activation::Relu ? 2.0 : 1.0;
    double std = std::sqrt(gain / static_cast<double>(fan_in));
    return rand_normal(std::move(shape), 0.0, std, rng, dt, /*requires_grad=*/true);
}

}  // namespace

// ---- functional forms -------------------------------------------------------------

Tensor lorentz_fc(const Tensor& x, const Tensor& W, const Tensor& b, Activation act,
                  const geo::Curvature& c) {
    require_point_axis(x, "lorentz_fc");
    return geo::project_to_manifold(apply_act(linear(x, W, b), act), c);
}

Tensor hcat(const std::vector<Tensor>& xs, const geo::Curvature& c) {
    if (xs.empty()) throw ShapeError("hcat: empty input list");
    if (xs.size() == 1) return xs[0];
    Tensor time_sq;
    std::vector<Tensor> parts;
    parts.emplace_back();  // slot for the shared time component
    for (const Tensor& x : xs) {
        require_point_axis(x, "hcat");
        Tensor t = geo::time_component(x);
        time_sq = time_sq.defined() ? time_sq + square(t) : square(t);
        parts.push_back(geo::space_component(x));
    }
    double shift = static_cast<double>(xs.size() - 1) / c.K;
    parts[0] = sqrt(time_sq + shift);
    return concat(parts, -1);
}

Tensor hcat_packed(const Tensor& packed, int64_t N, const geo::Curvature& c) {
    if (N < 1) throw ShapeError("hcat_packed: N must be >= 1");
    if (N == 1) return packed;
    require_point_axis(packed, "hcat_packed");
    int64_t ch = packed.dim(-1);
    if (ch % N != 0)
        throw ShapeError("hcat_packed: last axis " + std::to_string(ch) +
                         " not divisible into " + std::to_string(N) + " points");
    Shape grouped = packed.shape();
    grouped.back() = N;
    grouped.push_back(ch / N);  // [.., N, n+1]
    Tensor g = reshape(packed, grouped);
    Tensor t_sq = sum(square(geo::time_component(g)), {-2}, false);  // [.., 1]
    Tensor time = sqrt(t_sq + static_cast<double>(N - 1) / c.K);
    Shape flat = packed.shape();
    flat.back() = ch - N;  // N*n
    Tensor space = reshape(geo::space_component(g), flat);
    return concat({time, space}, -1);
}

void ConvSpec::validate() const {
    if (in_channels < 1 || out_channels < 1)
        throw ConfigError("conv: channels must be >= 1");
    if (kh < 1 || kw < 1) throw ConfigError("conv: kernel dims must be >= 1");
    if (stride < 1) throw ConfigError("conv: stride must be >= 1");
    if (pad < 0) throw ConfigError("conv: padding must be >= 0");
    if (transposed && (pad > kh - 1 || pad > kw - 1))
        throw ConfigError("transposed conv: padding must be <= kernel-1");
}

std::pair<int64_t, int64_t> ConvSpec::out_hw(int64_t H, int64_t W) const {
    if (!transposed) {
        int64_t oh = (H + 2 * pad - kh) / stride + 1;
        int64_t ow = (W + 2 * pad - kw) / stride + 1;
        return {oh, ow};
    }
    return {(H - 1) * stride - 2 * pad + kh, (W - 1) * stride - 2 * pad + kw};
}

namespace {

Tensor conv2d_common(const Tensor& x, const ConvSpec& spec, const Tensor& W, const Tensor& b,
                     Activation act, const geo::Curvature* c) {
    spec.validate();
    bool hyper = c != nullptr;
    int64_t ch = spec.in_channels + (hyper ? 1 : 0);
    if (x.ndim() != 4 || x.dim(-1) != ch)
        throw ShapeError("conv2d: expected [B,H,W," + std::to_string(ch) + "], got " +
                         shape_str(x.shape()));
    PatchSpec ps;
    ps.kh = spec.kh;
    ps.kw = spec.kw;
    if (spec.transposed) {
        ps.stride_h = ps.stride_w = 1;
        ps.pad_h = spec.kh - 1 - spec.pad;
        ps.pad_w = spec.kw - 1 - spec.pad;
        ps.input_dilation = spec.stride;
    } else {
        ps.stride_h = ps.stride_w = spec.stride;
        ps.pad_h = ps.pad_w = spec.pad;
    }
    auto [oh, ow] = patch_output_hw(x.dim(1), x.dim(2), ps);
    if (oh < 1 || ow < 1)
        throw ShapeError("conv2d: kernel/stride/padding leave no output positions for " +
                         shape_str(x.shape()));
    std::vector<double> fill(static_cast<size_t>(ch), 0.0);
    if (hyper) fill[0] = c->radius;  // origin vector
    Tensor cols = im2col(x, ps, fill);
    if (hyper) {
        Tensor cat = hcat_packed(cols, static_cast<int64_t>(spec.kh) * spec.kw, *c);
        return lorentz_fc(cat, W, b, act, *c);
    }
    return apply_act(linear(cols, W, b), act);
}

}  // namespace

Tensor lorentz_conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& W, const Tensor& b,
                      Activation act, const geo::Curvature& c) {
    return conv2d_common(x, spec, W, b, act, &c);
}

Tensor lorentz_conv_transpose2d(const Tensor& x, const ConvSpec& spec, const Tensor& W,
                                const Tensor& b, Activation act, const geo::Curvature& c) {
    ConvSpec s = spec;
    s.transposed = true;
    return conv2d_common(x, s, W, b, act, &c);
}

Tensor lorentz_mlr(const Tensor& x, const Tensor& Z, const Tensor& r, const geo::Curvature& c) {
    require_point_axis(x, "lorentz_mlr");
    if (Z.ndim() != 2 || r.ndim() != 1 || Z.dim(0) != r.dim(0))
        throw ShapeError("lorentz_mlr: Z must be [C,n] and r [C], got " + shape_str(Z.shape()) +
                         " / " + shape_str(r.shape()));
    if (Z.dim(1) != x.dim(-1) - 1)
        throw ShapeError("lorentz_mlr: Z is [C," + std::to_string(Z.dim(1)) + "] but points have " +
                         std::to_string(x.dim(-1) - 1) + " space dims");
    Tensor xt = geo::time_component(x);   // [.., 1]
    Tensor xs = geo::space_component(x);  // [.., n]
    Tensor znorm = sqrt(sum(square(Z), {-1}, false));  // [C]
    Tensor ca = cosh(r * c.sqrt_neg_K);
    Tensor sa = sinh(r * c.sqrt_neg_K);
    Tensor alpha = ca * linear(xs, Z, Tensor()) - (sa * znorm) * xt;  // [.., C]
    // sign(alpha) beta |asinh(sqrt(-K) alpha/beta)| = beta asinh(sqrt(-K) alpha/beta).
    Tensor beta = clamp_min(znorm, 1e-9);
    Tensor logits = (beta / c.sqrt_neg_K) * asinh((alpha / beta) * c.sqrt_neg_K);
    // Degenerate hyperplanes (|z| below the guard) contribute logit 0.
    return where(gt(znorm, 1e-9), logits, Tensor::scalar(0.0, x.dtype()));
}

Tensor lorentz_residual(const Tensor& x, const Tensor& y, const geo::Curvature& c) {
    require_point_axis(x, "lorentz_residual");
    if (x.dim(-1) != y.dim(-1))
        throw ShapeError("lorentz_residual: dim mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(y.shape()));
    return geo::project_to_manifold(geo::space_component(x) + geo::space_component(y), c);
}

Tensor lorentz_relu(const Tensor& x, const geo::Curvature& c) {
    require_point_axis(x, "lorentz_relu");
    return geo::project_to_manifold(relu(geo::space_component(x)), c);
}

Tensor feature_clip(const Tensor& x_space, double r) {
    if (!(r > 0)) throw DomainError("feature_clip: radius must be > 0");
    Tensor nrm = sqrt(sum(square(x_space), {-1}, true));
    return x_space * (r / clamp_min(nrm, r));  // scale is exactly 1 inside the ball
}

// ---- module framework -------------------------------------------------------------

int64_t param_count(Module& m) {
    int64_t total = 0;
    for (const ParamRef& p : m.params()) total += p.value.numel();
    return total;
}

// ---- hyperbolic modules -----------------------------------------------------------

LorentzFC::LorentzFC(int in_n, int out_m, Activation act, const geo::Curvature& c, Rng& rng,
                     DType dt)
    : act_(act), c_(c) {
    if (in_n < 1 || out_m < 1) throw ConfigError("LorentzFC: dims must be >= 1");
    W_ = init_weight({out_m, in_n + 1}, in_n + 1, act, rng, dt);
    b_ = Tensor::zeros({out_m}, dt, /*requires_grad=*/true);
}

std::string LorentzFC::describe() const {
    return "LorentzFC(" + std::to_string(W_.dim(1) - 1) + "->" + std::to_string(W_.dim(0)) +
           (act_ == Activation::Relu ? ", relu" : "") + ", K=" + fmt_num(c_.K) + ")";
}

LorentzConv2d::LorentzConv2d(ConvSpec spec, Activation act, const geo::Curvature& c, Rng& rng,
                             DType dt)
    : spec_(spec), act_(act), c_(c) {
    spec_.validate();
    W_ = init_weight({spec_.out_channels, spec_.fan_in()}, spec_.fan_in(), act, rng, dt);
    b_ = Tensor::zeros({spec_.out_channels}, dt, /*requires_grad=*/true);
}

std::string LorentzConv2d::describe() const {
    return std::string(spec_.transposed ? "LorentzConvTranspose2d(" : "LorentzConv2d(") +
           std::to_string(spec_.in_channels) + "->" + std::to_string(spec_.out_channels) + ", " +
           std::to_string(spec_.kh) + "x" + std::to_string(spec_.kw) + ", stride " +
           std::to_string(spec_.stride) + ", pad " + std::to_string(spec_.pad) +
           ", K=" + fmt_num(c_.K) + ")";
}

LorentzBatchNorm::LorentzBatchNorm(int n, const geo::Curvature& c, double momentum, double eps,
                                   DType dt)
    : n_(n), c_(c), momentum_(momentum), eps_(eps) {
    if (n < 1) throw ConfigError("LorentzBatchNorm: n must be >= 1");
    if (!(momentum > 0.0 && momentum < 1.0))
        throw ConfigError("LorentzBatchNorm: momentum must be in (0,1)");
    beta_space_ = Tensor::zeros({n}, dt, /*requires_grad=*/true);
    // softplus(gamma_raw) = 1 at init.
    gamma_raw_ = Tensor::full({}, std::log(std::exp(1.0) - 1.0), dt);
    gamma_raw_.set_requires_grad(true);
    running_mean_ = geo::origin(n, c, dt);
    running_var_ = Tensor::full({}, 1.0, dt);
}

Tensor LorentzBatchNorm::forward(const Tensor& x) {
    if (x.ndim() < 2 || x.dim(-1) != n_ + 1)
        throw ShapeError("lorentz_batch_norm: expected [batch, .., " + std::to_string(n_ + 1) +
                         "], got " + shape_str(x.shape()));
    Tensor mu, var;
    if (train_) {
        int64_t B = x.dim(0);
        if (B < 2) throw ShapeError("lorentz_batch_norm: train mode needs batch size >= 2");
        Tensor inst;  // per-instance centroid [B, n+1]
        if (x.ndim() == 2) {
            inst = x;
        } else {
            Tensor pts = reshape(x, {B, -1, n_ + 1});
            inst = geo::lorentz_centroid(pts, Tensor::ones({pts.dim(1)}, x.dtype()), c_);
        }
        mu = geo::lorentz_centroid(inst, Tensor::ones({B}, x.dtype()), c_);  // [n+1]
        // Per-instance variance about the batch centroid, averaged over the
        // batch; for maps this equals the variance over all positions.
        if (x.ndim() == 2) {
            var = geo::frechet_variance(x, mu, c_);
        } else {
            var = mean(geo::frechet_variance(reshape(x, {B, -1, n_ + 1}), mu, c_));
        }
        Tensor mu_d = mu.detach();
        Tensor two = concat({reshape(running_mean_, {1, n_ + 1}), reshape(mu_d, {1, n_ + 1})}, 0);
        Tensor w = Tensor::from({2}, {1.0 - momentum_, momentum_}, x.dtype());
        running_mean_.copy_from(geo::lorentz_centroid(two, w, c_));
        running_var_.copy_from(running_var_ * (1.0 - momentum_) + var.detach() * momentum_);
    } else {
        mu = running_mean_;
        var = running_var_;
    }
    Tensor beta_pt = beta();
    Tensor scale = gamma() / sqrt(var + eps_);
    Tensor u = geo::pt_to_origin(mu, geo::log_map(mu, x, c_), c_);
    Tensor w = geo::pt_from_origin(beta_pt, u * scale, c_);
    return geo::exp_map(beta_pt, w, c_);
}

std::string LorentzBatchNorm::describe() const {
    return "LorentzBatchNorm(" + std::to_string(n_) + ", momentum " + fmt_num(momentum_) +
           ", K=" + fmt_num(c_.K) + ")";
}

LorentzMLR::LorentzMLR(int in_n, int classes, const geo::Curvature& c, Rng& rng, DType dt)
    : c_(c) {
    if (in_n < 1 || classes < 2) throw ConfigError("LorentzMLR: needs n >= 1, classes >= 2");
    Z_ = init_weight({classes, in_n}, in_n, Activation::Identity, rng, dt);
    a_ = Tensor::zeros({classes}, dt, /*requires_grad=*/true);
}

std::string LorentzMLR::describe() const {
    return "LorentzMLR(" + std::to_string(Z_.dim(1)) + "->" + std::to_string(Z_.dim(0)) +
           ", K=" + fmt_num(c_.K) + ")";
}

Tensor HCatFlatten::forward(const Tensor& x) {
    if (x.ndim() != 4) throw ShapeError("HCatFlatten: expected [B,H,W,n+1]");
    int64_t positions = x.dim(1) * x.dim(2);
    Tensor packed = reshape(x, {x.dim(0), -1});
    return hcat_packed(packed, positions, c_);
}

// ---- Euclidean twins ----------------------------------------------------------------

Dense::Dense(int in_k, int out_m, Activation act, Rng& rng, DType dt) : act_(act) {
    if (in_k < 1 || out_m < 1) throw ConfigError("Dense: dims must be >= 1");
    W_ = init_weight({out_m, in_k}, in_k, act, rng, dt);
    b_ = Tensor::zeros({out_m}, dt, /*requires_grad=*/true);
}

Tensor Dense::forward(const Tensor& x) { return apply_act(linear(x, W_, b_), act_); }

std::string Dense::describe() const {
    return "Dense(" + std::to_string(W_.dim(1)) + "->" + std::to_string(W_.dim(0)) +
           (act_ == Activation::Relu ? ", relu" : "") + ")";
}

Conv2d::Conv2d(ConvSpec spec, Activation act, Rng& rng, DType dt) : spec_(spec), act_(act) {
    spec_.validate();
    int64_t fan_in = static_cast<int64_t>(spec_.in_channels) * spec_.kh * spec_.kw;
    W_ = init_weight({spec_.out_channels, fan_in}, fan_in, act, rng, dt);
    b_ = Tensor::zeros({spec_.out_channels}, dt, /*requires_grad=*/true);
}

Tensor Conv2d::forward(const Tensor& x) {
    return conv2d_common(x, spec_, W_, b_, act_, nullptr);
}

std::string Conv2d::describe() const {
    return std::string(spec_.transposed ? "ConvTranspose2d(" : "Conv2d(") +
           std::to_string(spec_.in_channels) + "->" + std::to_string(spec_.out_channels) + ", " +
           std::to_string(spec_.kh) + "x" + std::to_string(spec_.kw) + ", stride " +
           std::to_string(spec_.stride) + ", pad " + std::to_string(spec_.pad) + ")";
}

BatchNorm::BatchNorm(int channels, double momentum, double eps, DType dt)
    : channels_(channels), momentum_(momentum), eps_(eps) {
    if (channels < 1) throw ConfigError("BatchNorm: channels must be >= 1");
    gamma_ = Tensor::ones({channels}, dt);
    gamma_.set_requires_grad(true);
    beta_ = Tensor::zeros({channels}, dt, /*requires_grad=*/true);
    running_mean_ = Tensor::zeros({channels}, dt);
    running_var_ = Tensor::ones({channels}, dt);
}

Tensor BatchNorm::forward(const Tensor& x) {
    if (x.ndim() < 2 || x.dim(-1) != channels_)
        throw ShapeError("batch_norm: expected [batch, .., " + std::to_string(channels_) +
                         "], got " + shape_str(x.shape()));
    std::vector<int> axes;
    for (int i = 0; i + 1 < x.ndim(); ++i) axes.push_back(i);
    Tensor m, v;
    if (train_) {
        if (x.dim(0) < 2) throw ShapeError("batch_norm: train mode needs batch size >= 2");
        m = mean(x, axes, false);                  // [C]
        v = mean(square(x - m), axes, false);      // [C], biased
        running_mean_.copy_from(running_mean_ * (1.0 - momentum_) + m.detach() * momentum_);
        running_var_.copy_from(running_var_ * (1.0 - momentum_) + v.detach() * momentum_);
    } else {
        m = running_mean_;
        v = running_var_;
    }
    return (x - m) / sqrt(v + eps_) * gamma_ + beta_;
}

std::string BatchNorm::describe() const {
    return "BatchNorm(" + std::to_string(channels_) + ", momentum " + fmt_num(momentum_) + ")";
}

Tensor Flatten::forward(const Tensor& x) {
    if (x.ndim() < 2) throw ShapeError("Flatten: expected [batch, ..]");
    return reshape(x, {x.dim(0), -1});
}

std::string FeatureClip::describe() const { return "FeatureClip(r=" + fmt_num(r_) + ")"; }

}  // namespace lcnn::nn

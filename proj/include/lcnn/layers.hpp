#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lcnn/geometry.hpp"
#include "lcnn/ops.hpp"

// Network layers on the Lorentz model plus their Euclidean twins. Hyperbolic
// activations are channel-last points [.., n+1] (time first); feature maps
// are [batch, H, W, n+1]. Every functional form below is a composition of
// differentiable tensor ops.
namespace lcnn::nn {

enum class Activation { Identity, Relu };

// ---- functional forms -------------------------------------------------------------

// y = [sqrt(|psi(W x + b)|^2 - 1/K), psi(W x + b)] with x the full (n+1)-dim
// point, W [m, n+1], optional b [m]. Output is on-manifold by construction.
Tensor lorentz_fc(const Tensor& x, const Tensor& W, const Tensor& b, Activation act,
                  const geo::Curvature& c);

// Direct concatenation: y = [sqrt(sum_i t_i^2 + (N-1)/K), s_1, .., s_N].
// A single input is returned unchanged.
Tensor hcat(const std::vector<Tensor>& xs, const geo::Curvature& c);

// hcat over packed points [.., N*(n+1)] laid out point-major (the im2col
// patch layout) -> [.., N*n+1].
Tensor hcat_packed(const Tensor& packed, int64_t N, const geo::Curvature& c);

struct ConvSpec {
    int in_channels = 1;   // n: space dims per feature-map point
    int out_channels = 1;  // m
    int kh = 1, kw = 1;
    int stride = 1;
    int pad = 0;  // per side
    bool transposed = false;

    void validate() const;
    int64_t fan_in() const { return static_cast<int64_t>(in_channels) * kh * kw + 1; }
    // Output spatial dims for input HxW.
    std::pair<int64_t, int64_t> out_hw(int64_t H, int64_t W) const;
};

// y_{h,w} = LFC(HCat(receptive field)), gathered via im2col with origin fill
// for padding. W [m, n*kh*kw+1]. With spec.transposed, stride-1 convolution
// over the origin-interleaved (stride-1 inserted origins) and implicitly
// (k-1-pad)-padded map.
Tensor lorentz_conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& W, const Tensor& b,
                      Activation act, const geo::Curvature& c);
Tensor lorentz_conv_transpose2d(const Tensor& x, const ConvSpec& spec, const Tensor& W,
                                const Tensor& b, Activation act, const geo::Curvature& c);

// Logits v_c = (1/sqrt(-K)) sign(a_c) |z_c| |asinh(sqrt(-K) a_c / |z_c|)| with
// a_c = cosh(sqrt(-K) r_c) <z_c, x_s> - sinh(sqrt(-K) r_c) |z_c| x_t, computed
// in the equivalent smooth form (|z_c|/sqrt(-K)) asinh(...). Z [C, n], r [C].
// Classes with |z_c| < 1e-9 emit logit 0.
Tensor lorentz_mlr(const Tensor& x, const Tensor& Z, const Tensor& r, const geo::Curvature& c);

// project_to_manifold(x_s + y_s): space components add, time recomputed.
Tensor lorentz_residual(const Tensor& x, const Tensor& y, const geo::Curvature& c);

// project_to_manifold(relu(x_s)).
Tensor lorentz_relu(const Tensor& x, const geo::Curvature& c);

// Max-norm clip on the last axis: x if |x| <= r else r x / |x|. r > 0.
Tensor feature_clip(const Tensor& x_space, double r);

// ---- module framework -------------------------------------------------------------

struct ParamRef {
    std::string name;
    Tensor value;  // shares storage with the owning module
};

class Module {
public:
    virtual ~Module() = default;
    virtual Tensor forward(const Tensor& x) = 0;
    virtual std::string describe() const = 0;
    virtual void set_train(bool) {}
    virtual std::vector<ParamRef> params() { return {}; }   // learnable
    virtual std::vector<ParamRef> buffers() { return {}; }  // persistent state
    Tensor operator()(const Tensor& x) { return forward(x); }
};

int64_t param_count(Module& m);

// ---- hyperbolic modules -----------------------------------------------------------

class LorentzFC : public Module {
public:
    LorentzFC(int in_n, int out_m, Activation act, const geo::Curvature& c, Rng& rng,
              DType dt = DType::F32);
    Tensor forward(const Tensor& x) override { return lorentz_fc(x, W_, b_, act_, c_); }
    std::string describe() const override;
    std::vector<ParamRef> params() override { return {{"W", W_}, {"b", b_}}; }

    Tensor W_, b_;
    Activation act_;
    geo::Curvature c_;
};

class LorentzConv2d : public Module {
public:
    LorentzConv2d(ConvSpec spec, Activation act, const geo::Curvature& c, Rng& rng,
                  DType dt = DType::F32);
    Tensor forward(const Tensor& x) override {
        return lorentz_conv2d(x, spec_, W_, b_, act_, c_);
    }
    std::string describe() const override;
    std::vector<ParamRef> params() override { return {{"W", W_}, {"b", b_}}; }

    ConvSpec spec_;
    Tensor W_, b_;
    Activation act_;
    geo::Curvature c_;
};

// LBN(x) = exp_beta(PT_{0->beta}(gamma * PT_{mu->0}(log_mu(x)) / sqrt(var + eps))).
// Train mode uses batch statistics (centroid of instance centroids for feature
// maps; per-instance variance about the batch centroid, averaged) and updates
// running estimates; eval mode applies the running estimates.
class LorentzBatchNorm : public Module {
public:
    LorentzBatchNorm(int n, const geo::Curvature& c, double momentum = 0.1, double eps = 1e-5,
                     DType dt = DType::F32);
    Tensor forward(const Tensor& x) override;
    std::string describe() const override;
    void set_train(bool t) override { train_ = t; }
    std::vector<ParamRef> params() override {
        return {{"beta_space", beta_space_}, {"gamma_raw", gamma_raw_}};
    }
    std::vector<ParamRef> buffers() override {
        return {{"running_mean", running_mean_}, {"running_var", running_var_}};
    }
    Tensor gamma() const { return softplus(gamma_raw_); }
    Tensor beta() const { return geo::project_to_manifold(beta_space_, c_); }

    int n_;
    geo::Curvature c_;
    double momentum_, eps_;
    bool train_ = true;
    Tensor beta_space_;  // [n]; beta = project_to_manifold(beta_space)
    Tensor gamma_raw_;   // scalar; gamma = softplus(gamma_raw) > 0
    Tensor running_mean_;  // [n+1] point
    Tensor running_var_;   // scalar
};

class LorentzReLU : public Module {
public:
    explicit LorentzReLU(const geo::Curvature& c) : c_(c) {}
    Tensor forward(const Tensor& x) override { return lorentz_relu(x, c_); }
    std::string describe() const override { return "LorentzReLU"; }

    geo::Curvature c_;
};

class LorentzMLR : public Module {
public:
    LorentzMLR(int in_n, int classes, const geo::Curvature& c, Rng& rng, DType dt = DType::F32);
    Tensor forward(const Tensor& x) override { return lorentz_mlr(x, Z_, a_, c_); }
    std::string describe() const override;
    std::vector<ParamRef> params() override { return {{"Z", Z_}, {"a", a_}}; }

    Tensor Z_, a_;
    geo::Curvature c_;
};

// Flattens a hyperbolic feature map [B,H,W,n+1] into one point [B, HWn+1] by
// hcat over all spatial positions.
class HCatFlatten : public Module {
public:
    explicit HCatFlatten(const geo::Curvature& c) : c_(c) {}
    Tensor forward(const Tensor& x) override;
    std::string describe() const override { return "HCatFlatten"; }

    geo::Curvature c_;
};

// Residual wrapper: project_to_manifold(x_s + body(x)_s).
class LorentzResidualBlock : public Module {
public:
    LorentzResidualBlock(std::shared_ptr<Module> body, const geo::Curvature& c)
        : body_(std::move(body)), c_(c) {}
    Tensor forward(const Tensor& x) override { return lorentz_residual(x, body_->forward(x), c_); }
    std::string describe() const override { return "LorentzResidual(" + body_->describe() + ")"; }
    void set_train(bool t) override { body_->set_train(t); }
    std::vector<ParamRef> params() override { return body_->params(); }
    std::vector<ParamRef> buffers() override { return body_->buffers(); }

    std::shared_ptr<Module> body_;
    geo::Curvature c_;
};

// ---- Euclidean twins ----------------------------------------------------------------

class Dense : public Module {
public:
    Dense(int in_k, int out_m, Activation act, Rng& rng, DType dt = DType::F32);
    Tensor forward(const Tensor& x) override;
    std::string describe() const override;
    std::vector<ParamRef> params() override { return {{"W", W_}, {"b", b_}}; }

    Tensor W_, b_;
    Activation act_;
};

class Conv2d : public Module {
public:
    Conv2d(ConvSpec spec, Activation act, Rng& rng, DType dt = DType::F32);
    Tensor forward(const Tensor& x) override;
    std::string describe() const override;
    std::vector<ParamRef> params() override { return {{"W", W_}, {"b", b_}}; }

    ConvSpec spec_;
    Tensor W_, b_;
    Activation act_;
};

// Standard per-channel batch norm over a channel-last tensor (statistics over
// every axis but the last).
class BatchNorm : public Module {
public:
    BatchNorm(int channels, double momentum = 0.1, double eps = 1e-5, DType dt = DType::F32);
    Tensor forward(const Tensor& x) override;
    std::string describe() const override;
    void set_train(bool t) override { train_ = t; }
    std::vector<ParamRef> params() override { return {{"gamma", gamma_}, {"beta", beta_}}; }
    std::vector<ParamRef> buffers() override {
        return {{"running_mean", running_mean_}, {"running_var", running_var_}};
    }

    int channels_;
    double momentum_, eps_;
    bool train_ = true;
    Tensor gamma_, beta_, running_mean_, running_var_;
};

class ReLU : public Module {
public:
    Tensor forward(const Tensor& x) override { return relu(x); }
    std::string describe() const override { return "ReLU"; }
};

class Flatten : public Module {
public:
    Tensor forward(const Tensor& x) override;
    std::string describe() const override { return "Flatten"; }
};

class FeatureClip : public Module {
public:
    explicit FeatureClip(double r) : r_(r) {}
    Tensor forward(const Tensor& x) override { return feature_clip(x, r_); }
    std::string describe() const override;

    double r_;
};

}  // namespace lcnn::nn

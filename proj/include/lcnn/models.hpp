#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lcnn/layers.hpp"

namespace lcnn::nn {

enum class ProjectionMode { SpaceLift, ExpLift };

// Lifts a channel-last Euclidean tensor [.., k] onto the manifold [.., k+1].
// SpaceLift uses the values as the space component and derives the time
// coordinate; ExpLift treats them as a tangent vector at the origin.
Tensor input_projection(const Tensor& image, ProjectionMode mode, const geo::Curvature& c);

class InputProjection : public Module {
public:
    InputProjection(ProjectionMode mode, const geo::Curvature& c) : mode_(mode), c_(c) {}
    Tensor forward(const Tensor& x) override { return input_projection(x, mode_, c_); }
    std::string describe() const override;

    ProjectionMode mode_;
    geo::Curvature c_;
};

// exp_map_origin as a layer; used by hybrid heads to enter the manifold.
class ExpLift : public Module {
public:
    explicit ExpLift(const geo::Curvature& c) : c_(c) {}
    Tensor forward(const Tensor& x) override { return geo::exp_map_origin(x, c_); }
    std::string describe() const override;

    geo::Curvature c_;
};

// Ordered layer container. Layer names must be unique; parameter and buffer
// names are exposed as "<layer>.<param>".
class Sequential : public Module {
public:
    struct Entry {
        std::string name;
        std::shared_ptr<Module> mod;
        bool hyper_out = false;  // output is a point set on the manifold
    };
    // Called after each layer in forward() when installed.
    using Hook = std::function<void(const Entry&, const Tensor&)>;

    void add(const std::string& name, std::shared_ptr<Module> m, bool hyper_out = false);
    Tensor forward(const Tensor& x) override;
    std::string describe() const override;
    void set_train(bool t) override;
    std::vector<ParamRef> params() override;
    std::vector<ParamRef> buffers() override;
    void set_hook(Hook h) { hook_ = std::move(h); }
    const std::vector<Entry>& entries() const { return entries_; }
    Module& at(const std::string& name);

private:
    std::vector<Entry> entries_;
    Hook hook_;
};

}  // namespace lcnn::nn

namespace lcnn::models {

// One layer in a custom architecture. `in` is an optional declared input
// width; when nonzero it is checked against the incoming activation.
struct LayerSpec {
    std::string kind;  // see kind_catalog() in models.cpp
    int out = 0;       // out channels / features / classes
    int in = 0;        // expected input width (0 = derive from predecessor)
    int kernel = 0;
    int stride = 1;
    int pad = 0;
    bool transposed = false;
    double r = 0.0;  // clip radius (kind == "clip")
};

struct ModelConfig {
    std::string arch = "lenet-hcnn";  // preset name or "custom"
    double K = -1.0;
    std::string projection = "space-lift";  // space-lift | exp-lift
    double clip_r = 1.0;                    // hybrid head clip radius
    uint64_t seed = 1;
    std::string input = "image";  // image | points | vector
    int height = 28, width = 28, channels = 1;
    int input_dim = 2;  // width of "points"/"vector" inputs
    int classes = 10;
    DType dtype = DType::F32;
    std::vector<LayerSpec> layers;  // consumed when arch == "custom"

    void validate() const;
};

class Model {
public:
    Model(ModelConfig cfg, geo::Curvature c, std::shared_ptr<nn::Sequential> net)
        : cfg_(std::move(cfg)), c_(c), net_(std::move(net)) {}

    Tensor forward(const Tensor& batch);
    std::vector<int> predict(const Tensor& batch);  // argmax over logits
    void set_train(bool t) { net_->set_train(t); }
    std::vector<nn::ParamRef> params() { return net_->params(); }
    std::vector<nn::ParamRef> buffers() { return net_->buffers(); }
    int64_t param_count() const { return nn::param_count(*net_); }
    std::string describe() const;
    const ModelConfig& config() const { return cfg_; }
    const geo::Curvature& curvature() const { return c_; }
    nn::Sequential& net() { return *net_; }

private:
    ModelConfig cfg_;
    geo::Curvature c_;
    std::shared_ptr<nn::Sequential> net_;
};

std::vector<std::string> preset_names();
std::unique_ptr<Model> build(const ModelConfig& cfg);

}  // namespace lcnn::models

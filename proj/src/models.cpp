#include "lcnn/models.hpp"

#include <cstdio>
#include <map>
#include <set>

namespace lcnn::nn {

namespace {

std::string fmt_num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace

Tensor input_projection(const Tensor& image, ProjectionMode mode, const geo::Curvature& c) {
    if (image.ndim() < 1) throw ShapeError("input_projection: need at least one axis");
    if (mode == ProjectionMode::SpaceLift) return geo::project_to_manifold(image, c);
    return geo::exp_map_origin(image, c);
}

std::string InputProjection::describe() const {
    return std::string("InputProjection(") +
           (mode_ == ProjectionMode::SpaceLift ? "space-lift" : "exp-lift") +
           ", K=" + fmt_num(c_.K) + ")";
}

std::string ExpLift::describe() const { return "ExpLift(K=" + fmt_num(c_.K) + ")"; }

void Sequential::add(const std::string& name, std::shared_ptr<Module> m, bool hyper_out) {
    if (!m) throw ConfigError("Sequential: null module '" + name + "'");
    for (const auto& e : entries_)
        if (e.name == name) throw ConfigError("Sequential: duplicate layer name '" + name + "'");
    entries_.push_back({name, std::move(m), hyper_out});
}

Tensor Sequential::forward(const Tensor& x) {
    Tensor h = x;
    for (auto& e : entries_) {
        h = e.mod->forward(h);
        if (hook_) hook_(e, h);
    }
    return h;
}

std::string Sequential::describe() const {
    std::string s;
    for (const auto& e : entries_) s += "  " + e.name + ": " + e.mod->describe() + "\n";
    return s;
}

void Sequential::set_train(bool t) {
    for (auto& e : entries_) e.mod->set_train(t);
}

std::vector<ParamRef> Sequential::params() {
    std::vector<ParamRef> out;
    for (auto& e : entries_)
        for (auto& p : e.mod->params()) out.push_back({e.name + "." + p.name, p.value});
    return out;
}

std::vector<ParamRef> Sequential::buffers() {
    std::vector<ParamRef> out;
    for (auto& e : entries_)
        for (auto& p : e.mod->buffers()) out.push_back({e.name + "." + p.name, p.value});
    return out;
}

Module& Sequential::at(const std::string& name) {
    for (auto& e : entries_)
        if (e.name == name) return *e.mod;
    throw ConfigError("Sequential: no layer named '" + name + "'");
}

}  // namespace lcnn::nn

namespace lcnn::models {

namespace {

using nn::Activation;

// Symbolic activation shape threaded through the build-time walk.
struct Probe {
    enum class Domain { Euclid, Hyper };
    enum class Form { Image, Map, Vec };
    Domain domain = Domain::Euclid;
    Form form = Form::Image;
    int64_t H = 0, W = 0;
    int n = 0;  // channels / feature width / manifold dimension

    std::string str() const {
        std::string d = domain == Domain::Hyper ? "hyperbolic " : "";
        if (form == Form::Vec) return std::to_string(n) + "-dim " + d + "vector";
        std::string f = form == Form::Image ? "image" : d + "feature map";
        return std::to_string(H) + "x" + std::to_string(W) + "x" + std::to_string(n) + " " + f;
    }
    bool hyper() const { return domain == Domain::Hyper; }
    bool spatial() const { return form != Form::Vec; }
};

const std::set<std::string>& kind_catalog() {
    static const std::set<std::string> kinds = {
        "input_projection", "lorentz_conv", "lorentz_bn",   "lorentz_relu",
        "hcat_flatten",     "lorentz_fc",   "lorentz_mlr",  "lorentz_residual",
        "clip",             "exp_lift",     "conv",         "bn",
        "relu",             "flatten",      "dense",
    };
    return kinds;
}

std::vector<LayerSpec> preset_layers(const std::string& arch, const ModelConfig& cfg) {
    auto conv = [](const char* kind, int out, int k, int s, int p) {
        LayerSpec l;
        l.kind = kind;
        l.out = out;
        l.kernel = k;
        l.stride = s;
        l.pad = p;
        return l;
    };
    auto plain = [](const char* kind, int out = 0) {
        LayerSpec l;
        l.kind = kind;
        l.out = out;
        return l;
    };
    if (arch == "lenet-hcnn")
        return {plain("input_projection"),
                conv("lorentz_conv", 8, 5, 2, 2),
                plain("lorentz_bn"),
                plain("lorentz_relu"),
                conv("lorentz_conv", 16, 5, 2, 2),
                plain("lorentz_bn"),
                plain("lorentz_relu"),
                plain("hcat_flatten"),
                plain("lorentz_fc", 64),
                plain("lorentz_relu"),
                plain("lorentz_mlr", cfg.classes)};
    if (arch == "lenet-euclid")
        return {conv("conv", 8, 5, 2, 2),
                plain("bn"),
                plain("relu"),
                conv("conv", 16, 5, 2, 2),
                plain("bn"),
                plain("relu"),
                plain("flatten"),
                plain("dense", 64),
                plain("relu"),
                plain("dense", cfg.classes)};
    if (arch == "hybrid-lenet") {
        LayerSpec clip = plain("clip");
        clip.r = cfg.clip_r;
        return {conv("conv", 8, 5, 2, 2),
                plain("bn"),
                plain("relu"),
                conv("conv", 16, 5, 2, 2),
                plain("bn"),
                plain("relu"),
                plain("flatten"),
                plain("dense", 64),
                plain("relu"),
                clip,
                plain("exp_lift"),
                plain("lorentz_mlr", cfg.classes)};
    }
    if (arch == "mlr-only") return {plain("lorentz_mlr", cfg.classes)};
    if (arch == "resnet-mini")
        return {plain("input_projection"),
                conv("lorentz_conv", 8, 3, 2, 1),
                plain("lorentz_bn"),
                plain("lorentz_relu"),
                conv("lorentz_residual", 0, 3, 1, 1),
                conv("lorentz_conv", 16, 3, 2, 1),
                plain("lorentz_bn"),
                plain("lorentz_relu"),
                conv("lorentz_residual", 0, 3, 1, 1),
                plain("hcat_flatten"),
                plain("lorentz_fc", 64),
                plain("lorentz_relu"),
                plain("lorentz_mlr", cfg.classes)};
    throw ConfigError("unknown architecture '" + arch + "'");
}

std::string base_name(const std::string& kind) {
    if (kind == "input_projection") return "proj";
    if (kind == "lorentz_conv" || kind == "conv") return "conv";
    if (kind == "lorentz_bn" || kind == "bn") return "bn";
    if (kind == "lorentz_relu" || kind == "relu") return "relu";
    if (kind == "hcat_flatten" || kind == "flatten") return "flatten";
    if (kind == "lorentz_fc" || kind == "dense") return "fc";
    if (kind == "lorentz_mlr") return "mlr";
    if (kind == "lorentz_residual") return "res";
    if (kind == "clip") return "clip";
    if (kind == "exp_lift") return "lift";
    return kind;
}

}  // namespace

void ModelConfig::validate() const {
    if (!(K < 0.0)) throw ConfigError("model config: K must be strictly negative");
    if (projection != "space-lift" && projection != "exp-lift")
        throw ConfigError("model config: unknown projection mode '" + projection + "'");
    if (input != "image" && input != "points" && input != "vector")
        throw ConfigError("model config: unknown input form '" + input + "'");
    if (classes < 2) throw ConfigError("model config: need at least 2 classes");
    if (input == "image") {
        if (height < 1 || width < 1 || channels < 1)
            throw ConfigError("model config: image dims must be positive");
    } else if (input_dim < 1) {
        throw ConfigError("model config: input_dim must be positive");
    }
    if (arch == "custom" && layers.empty())
        throw ConfigError("model config: custom architecture needs a layer list");
}

std::vector<std::string> preset_names() {
    return {"lenet-hcnn", "lenet-euclid", "hybrid-lenet", "mlr-only", "resnet-mini"};
}

std::unique_ptr<Model> build(const ModelConfig& config) {
    ModelConfig cfg = config;
    cfg.validate();
    if (cfg.arch == "mlr-only") cfg.input = "points";
    std::vector<LayerSpec> specs =
        cfg.arch == "custom" ? cfg.layers : preset_layers(cfg.arch, cfg);

    geo::Curvature c(cfg.K);
    Rng rng(cfg.seed);
    auto net = std::make_shared<nn::Sequential>();

    Probe st;
    if (cfg.input == "image") {
        st = {Probe::Domain::Euclid, Probe::Form::Image, cfg.height, cfg.width, cfg.channels};
    } else if (cfg.input == "points") {
        st = {Probe::Domain::Hyper, Probe::Form::Vec, 0, 0, cfg.input_dim};
    } else {
        st = {Probe::Domain::Euclid, Probe::Form::Vec, 0, 0, cfg.input_dim};
    }

    std::map<std::string, int> counts;
    nn::ProjectionMode pmode = cfg.projection == "exp-lift" ? nn::ProjectionMode::ExpLift
                                                            : nn::ProjectionMode::SpaceLift;

    for (size_t i = 0; i < specs.size(); ++i) {
        const LayerSpec& l = specs[i];
        std::string name = base_name(l.kind) + std::to_string(++counts[base_name(l.kind)]);
        auto fail = [&](const std::string& msg) -> ConfigError {
            return ConfigError(cfg.arch + ": layer " + std::to_string(i) + " '" + name + "' (" +
                               l.kind + "): " + msg);
        };
        if (!kind_catalog().count(l.kind)) throw fail("unknown layer kind");
        if (l.in != 0 && l.in != st.n)
            throw fail("declared input width " + std::to_string(l.in) +
                       " does not match incoming " + st.str());

        if (l.kind == "input_projection") {
            if (st.hyper()) throw fail("input is already hyperbolic: " + st.str());
            net->add(name, std::make_shared<nn::InputProjection>(pmode, c), true);
            st.domain = Probe::Domain::Hyper;
            if (st.form == Probe::Form::Image) st.form = Probe::Form::Map;
        } else if (l.kind == "lorentz_conv" || l.kind == "conv") {
            bool hyper = l.kind == "lorentz_conv";
            if (st.hyper() != hyper || !st.spatial())
                throw fail("needs a " + std::string(hyper ? "hyperbolic" : "euclidean") +
                           " feature map, got " + st.str());
            nn::ConvSpec cs;
            cs.in_channels = st.n;
            cs.out_channels = l.out;
            cs.kh = cs.kw = l.kernel;
            cs.stride = l.stride;
            cs.pad = l.pad;
            cs.transposed = l.transposed;
            cs.validate();
            auto [oh, ow] = cs.out_hw(st.H, st.W);
            if (oh < 1 || ow < 1)
                throw fail("kernel " + std::to_string(l.kernel) + " leaves no output on " +
                           st.str());
            if (hyper)
                net->add(name,
                         std::make_shared<nn::LorentzConv2d>(cs, Activation::Identity, c, rng,
                                                             cfg.dtype),
                         true);
            else
                net->add(name,
                         std::make_shared<nn::Conv2d>(cs, Activation::Identity, rng, cfg.dtype));
            st.form = Probe::Form::Map;
            st.H = oh;
            st.W = ow;
            st.n = l.out;
        } else if (l.kind == "lorentz_residual") {
            if (!st.hyper() || !st.spatial())
                throw fail("needs a hyperbolic feature map, got " + st.str());
            nn::ConvSpec cs;
            cs.in_channels = cs.out_channels = st.n;
            cs.kh = cs.kw = l.kernel;
            cs.stride = 1;
            cs.pad = l.pad;
            cs.validate();
            auto [oh, ow] = cs.out_hw(st.H, st.W);
            if (oh != st.H || ow != st.W)
                throw fail("branch must preserve the map size; kernel " +
                           std::to_string(l.kernel) + " pad " + std::to_string(l.pad) +
                           " maps " + st.str() + " to " + std::to_string(oh) + "x" +
                           std::to_string(ow));
            auto body = std::make_shared<nn::Sequential>();
            body->add("conv",
                      std::make_shared<nn::LorentzConv2d>(cs, Activation::Identity, c, rng,
                                                          cfg.dtype),
                      true);
            body->add("bn", std::make_shared<nn::LorentzBatchNorm>(st.n, c, 0.1, 1e-5, cfg.dtype),
                      true);
            body->add("relu", std::make_shared<nn::LorentzReLU>(c), true);
            net->add(name, std::make_shared<nn::LorentzResidualBlock>(body, c), true);
        } else if (l.kind == "lorentz_bn" || l.kind == "bn") {
            bool hyper = l.kind == "lorentz_bn";
            if (st.hyper() != hyper || st.form == Probe::Form::Image)
                throw fail("needs " + std::string(hyper ? "hyperbolic" : "euclidean") +
                           " features, got " + st.str());
            if (hyper)
                net->add(name,
                         std::make_shared<nn::LorentzBatchNorm>(st.n, c, 0.1, 1e-5, cfg.dtype),
                         true);
            else
                net->add(name, std::make_shared<nn::BatchNorm>(st.n, 0.1, 1e-5, cfg.dtype));
        } else if (l.kind == "lorentz_relu" || l.kind == "relu") {
            bool hyper = l.kind == "lorentz_relu";
            if (st.hyper() != hyper)
                throw fail("domain mismatch: incoming " + st.str());
            if (hyper)
                net->add(name, std::make_shared<nn::LorentzReLU>(c), true);
            else
                net->add(name, std::make_shared<nn::ReLU>());
        } else if (l.kind == "hcat_flatten") {
            if (!st.hyper() || !st.spatial())
                throw fail("needs a hyperbolic feature map, got " + st.str());
            net->add(name, std::make_shared<nn::HCatFlatten>(c), true);
            st.form = Probe::Form::Vec;
            st.n = static_cast<int>(st.H * st.W) * st.n;
            st.H = st.W = 0;
        } else if (l.kind == "flatten") {
            if (st.hyper() || st.form == Probe::Form::Vec)
                throw fail("needs euclidean spatial features, got " + st.str());
            net->add(name, std::make_shared<nn::Flatten>());
            st.form = Probe::Form::Vec;
            st.n = static_cast<int>(st.H * st.W) * st.n;
            st.H = st.W = 0;
        } else if (l.kind == "lorentz_fc") {
            if (!st.hyper() || st.spatial())
                throw fail("needs a flattened hyperbolic vector, got " + st.str());
            net->add(name,
                     std::make_shared<nn::LorentzFC>(st.n, l.out, Activation::Identity, c, rng,
                                                     cfg.dtype),
                     true);
            st.n = l.out;
        } else if (l.kind == "dense") {
            if (st.hyper() || st.spatial())
                throw fail("needs a flattened euclidean vector, got " + st.str());
            net->add(name, std::make_shared<nn::Dense>(st.n, l.out, Activation::Identity, rng,
                                                       cfg.dtype));
            st.n = l.out;
        } else if (l.kind == "lorentz_mlr") {
            if (!st.hyper() || st.spatial())
                throw fail("needs a flattened hyperbolic vector, got " + st.str());
            net->add(name, std::make_shared<nn::LorentzMLR>(st.n, l.out, c, rng, cfg.dtype));
            st = {Probe::Domain::Euclid, Probe::Form::Vec, 0, 0, l.out};
        } else if (l.kind == "clip") {
            if (st.hyper() || st.spatial())
                throw fail("needs euclidean feature vectors, got " + st.str());
            if (!(l.r > 0.0)) throw fail("clip radius must be positive");
            net->add(name, std::make_shared<nn::FeatureClip>(l.r));
        } else if (l.kind == "exp_lift") {
            if (st.hyper()) throw fail("input is already hyperbolic: " + st.str());
            if (st.spatial()) throw fail("needs a flattened vector, got " + st.str());
            net->add(name, std::make_shared<nn::ExpLift>(c), true);
            st.domain = Probe::Domain::Hyper;
        }
    }

    if (st.hyper() || st.form != Probe::Form::Vec || st.n != cfg.classes)
        throw ConfigError(cfg.arch + ": network must end in logits of width " +
                          std::to_string(cfg.classes) + ", got " + st.str());
    return std::make_unique<Model>(std::move(cfg), c, std::move(net));
}

Tensor Model::forward(const Tensor& batch) {
    Tensor x = batch.dtype() == cfg_.dtype ? batch : batch.astype(cfg_.dtype);
    if (cfg_.input == "image") {
        if (x.ndim() != 4 || x.dim(1) != cfg_.height || x.dim(2) != cfg_.width ||
            x.dim(3) != cfg_.channels)
            throw ShapeError("model forward: expected [B," + std::to_string(cfg_.height) + "," +
                             std::to_string(cfg_.width) + "," + std::to_string(cfg_.channels) +
                             "] image batch, got " + shape_str(x.shape()));
    } else {
        int64_t w = cfg_.input == "points" ? cfg_.input_dim + 1 : cfg_.input_dim;
        if (x.ndim() != 2 || x.dim(1) != w)
            throw ShapeError("model forward: expected [B," + std::to_string(w) +
                             "] batch, got " + shape_str(x.shape()));
    }
    return net_->forward(x);
}

std::vector<int> Model::predict(const Tensor& batch) {
    Tensor logits = forward(batch);
    int64_t b = logits.dim(0), cdim = logits.dim(1);
    std::vector<int> labels(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) {
        int best = 0;
        double bestv = logits.at(i * cdim);
        for (int64_t j = 1; j < cdim; ++j) {
            double v = logits.at(i * cdim + j);
            if (v > bestv) {
                bestv = v;
                best = static_cast<int>(j);
            }
        }
        labels[static_cast<size_t>(i)] = best;
    }
    return labels;
}

std::string Model::describe() const {
    std::string in;
    if (cfg_.input == "image")
        in = std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width) + "x" +
             std::to_string(cfg_.channels) + " image";
    else
        in = std::to_string(cfg_.input_dim) + "-dim " + cfg_.input;
    char head[160];
    std::snprintf(head, sizeof(head), "%s: K=%g, %s, input %s, %lld params\n", cfg_.arch.c_str(),
                  cfg_.K, dtype_name(cfg_.dtype), in.c_str(),
                  static_cast<long long>(nn::param_count(*net_)));
    return head + net_->describe();
}

}  // namespace lcnn::models

#include "lcnn/tape.hpp"

namespace lcnn {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = prev_; }

void Tape::backward(const Tensor& loss) {
    if (consumed_)
        throw TapeError("backward() called twice on the same tape; reset() first");
    if (!loss.defined() || loss.numel() != 1)
        throw TapeError("backward() needs a defined scalar loss");
    consumed_ = true;

    auto& impl = loss.impl();
    auto seed = Tensor::zeros(impl->shape, impl->dtype);
    for (int64_t i = 0; i < seed.numel(); ++i) seed.set(i, 1.0);
    accumulate_grad(impl, seed);

    // Backward lambdas are plain forward-op compositions; deactivate any tape
    // so replaying them records nothing.
    Tape* prev = g_active_tape;
    g_active_tape = nullptr;
    try {
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
    } catch (...) {
        g_active_tape = prev;
        throw;
    }
    g_active_tape = prev;
}

void accumulate_grad(const std::shared_ptr<TensorImpl>& impl, const Tensor& delta) {
    if (!impl) return;
    if (delta.shape() != impl->shape)
        throw TapeError("grad shape mismatch: " + shape_str(delta.shape()) + " into " +
                        shape_str(impl->shape));
    if (delta.dtype() != impl->dtype) throw TapeError("grad dtype mismatch");
    if (!impl->grad) {
        auto g = std::make_shared<TensorImpl>();
        g->shape = impl->shape;
        g->dtype = impl->dtype;
        if (impl->dtype == DType::F32)
            g->data = std::vector<float>(static_cast<size_t>(shape_numel(g->shape)), 0.0f);
        else
            g->data = std::vector<double>(static_cast<size_t>(shape_numel(g->shape)), 0.0);
        impl->grad = g;
    }
    if (impl->dtype == DType::F32) {
        auto& dst = impl->grad->vec<float>();
        auto src = delta.data<float>();
        for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    } else {
        auto& dst = impl->grad->vec<double>();
        auto src = delta.data<double>();
        for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
}

}  // namespace lcnn

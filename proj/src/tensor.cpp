#include "lcnn/tensor.hpp"

#include <cstring>

namespace lcnn {

namespace {

std::shared_ptr<TensorImpl> make_impl(Shape shape, DType dt) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->dtype = dt;
    int64_t n = impl->numel();
    if (dt == DType::F32)
        impl->data = std::vector<float>(static_cast<size_t>(n), 0.0f);
    else
        impl->data = std::vector<double>(static_cast<size_t>(n), 0.0);
    return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, DType dt, bool requires_grad) {
    auto impl = make_impl(std::move(shape), dt);
    impl->requires_grad = requires_grad;
    return Tensor(impl);
}

Tensor Tensor::full(Shape shape, double value, DType dt) {
    auto impl = make_impl(std::move(shape), dt);
    if (dt == DType::F32) {
        auto& v = impl->vec<float>();
        std::fill(v.begin(), v.end(), static_cast<float>(value));
    } else {
        auto& v = impl->vec<double>();
        std::fill(v.begin(), v.end(), value);
    }
    return Tensor(impl);
}

Tensor Tensor::from(Shape shape, const std::vector<double>& values, DType dt) {
    auto impl = make_impl(std::move(shape), dt);
    if (impl->numel() != static_cast<int64_t>(values.size()))
        throw ShapeError("from(): " + shape_str(impl->shape) + " needs " +
                         std::to_string(impl->numel()) + " values, got " +
                         std::to_string(values.size()));
    if (dt == DType::F32) {
        auto& v = impl->vec<float>();
        for (size_t i = 0; i < values.size(); ++i) v[i] = static_cast<float>(values[i]);
    } else {
        impl->vec<double>() = values;
    }
    return Tensor(impl);
}

Tensor Tensor::eye(int64_t n, DType dt) {
    Tensor t = zeros({n, n}, dt);
    for (int64_t i = 0; i < n; ++i) t.set(i * n + i, 1.0);
    return t;
}

int64_t Tensor::dim(int axis) const {
    int nd = ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd)
        throw ShapeError("dim(): axis out of range for " + shape_str(shape()));
    return impl_->shape[static_cast<size_t>(axis)];
}

double Tensor::at(int64_t i) const {
    if (impl_->dtype == DType::F32) return static_cast<double>(impl_->vec<float>()[static_cast<size_t>(i)]);
    return impl_->vec<double>()[static_cast<size_t>(i)];
}

void Tensor::set(int64_t i, double v) {
    if (impl_->dtype == DType::F32)
        impl_->vec<float>()[static_cast<size_t>(i)] = static_cast<float>(v);
    else
        impl_->vec<double>()[static_cast<size_t>(i)] = v;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item(): tensor has " + std::to_string(numel()) + " elements");
    return at(0);
}

std::vector<double> Tensor::to_vector() const {
    std::vector<double> out(static_cast<size_t>(numel()));
    for (int64_t i = 0; i < numel(); ++i) out[static_cast<size_t>(i)] = at(i);
    return out;
}

Tensor Tensor::clone() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->dtype = impl_->dtype;
    impl->data = impl_->data;
    return Tensor(impl);
}

Tensor Tensor::detach() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->dtype = impl_->dtype;
    impl->data = impl_->data;
    impl->requires_grad = false;
    return Tensor(impl);
}

Tensor Tensor::astype(DType dt) const {
    if (dt == impl_->dtype) return clone();
    Tensor out = zeros(impl_->shape, dt);
    for (int64_t i = 0; i < numel(); ++i) out.set(i, at(i));
    return out;
}

void Tensor::copy_from(const Tensor& src) {
    if (src.shape() != shape())
        throw ShapeError("copy_from(): shape mismatch " + shape_str(src.shape()) + " vs " +
                         shape_str(shape()));
    if (src.dtype() != dtype()) throw ShapeError("copy_from(): dtype mismatch");
    impl_->data = src.impl_->data;
}

Tensor rand_uniform(Shape shape, double lo, double hi, Rng& rng, DType dt, bool requires_grad) {
    Tensor t = Tensor::zeros(std::move(shape), dt, requires_grad);
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
    return t;
}

Tensor rand_normal(Shape shape, double mean, double stddev, Rng& rng, DType dt, bool requires_grad) {
    Tensor t = Tensor::zeros(std::move(shape), dt, requires_grad);
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal(mean, stddev));
    return t;
}

}  // namespace lcnn

#pragma once

#include <functional>
#include <memory>
#include <random>
#include <span>
#include <variant>

#include "lcnn/common.hpp"

namespace lcnn {

class Tape;

struct TensorImpl {
    Shape shape;
    DType dtype = DType::F32;
    std::variant<std::vector<float>, std::vector<double>> data;
    bool requires_grad = false;
    std::shared_ptr<TensorImpl> grad;  // allocated lazily during backward
    Tape* producer = nullptr;          // tape that recorded the producing op

    int64_t numel() const { return shape_numel(shape); }
    template <typename T>
    std::vector<T>& vec() { return std::get<std::vector<T>>(data); }
    template <typename T>
    const std::vector<T>& vec() const { return std::get<std::vector<T>>(data); }
};

// Dense multidimensional array, refcounted. Copies are shallow; use clone()
// for a deep copy. All math routes through the free functions in ops.hpp so
// that autodiff sees every operation.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, DType dt = DType::F32, bool requires_grad = false);
    static Tensor full(Shape shape, double value, DType dt = DType::F32);
    static Tensor ones(Shape shape, DType dt = DType::F32) { return full(std::move(shape), 1.0, dt); }
    static Tensor scalar(double value, DType dt = DType::F32) { return full({}, value, dt); }
    // Row-major values.
    static Tensor from(Shape shape, const std::vector<double>& values, DType dt = DType::F32);
    static Tensor eye(int64_t n, DType dt = DType::F32);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    int64_t numel() const { return impl_->numel(); }
    int64_t dim(int axis) const;  // supports negative axes
    DType dtype() const { return impl_->dtype; }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }
    Tensor grad() const { return impl_->grad ? Tensor(impl_->grad) : Tensor(); }
    void zero_grad() { impl_->grad = nullptr; }

    // Element access (converted through double). Row-major linear index.
    double at(int64_t i) const;
    void set(int64_t i, double v);
    double item() const;

    template <typename T>
    std::span<T> data() { return std::span<T>(impl_->vec<T>()); }
    template <typename T>
    std::span<const T> data() const { return std::span<const T>(impl_->vec<T>()); }
    std::vector<double> to_vector() const;

    Tensor clone() const;
    Tensor detach() const;  // shares storage, drops grad tracking
    Tensor astype(DType dt) const;

    // Overwrites storage in place (used by optimizers; never on taped values).
    void copy_from(const Tensor& src);

    std::shared_ptr<TensorImpl>& impl() { return impl_; }
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Deterministic RNG used everywhere randomness is needed.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}
    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(gen_);
    }
    double normal(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> d(mean, stddev);
        return d(gen_);
    }
    int64_t integer(int64_t lo, int64_t hi) {  // inclusive bounds
        std::uniform_int_distribution<int64_t> d(lo, hi);
        return d(gen_);
    }
    uint64_t raw() { return gen_(); }
    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

Tensor rand_uniform(Shape shape, double lo, double hi, Rng& rng, DType dt = DType::F32,
                    bool requires_grad = false);
Tensor rand_normal(Shape shape, double mean, double stddev, Rng& rng, DType dt = DType::F32,
                   bool requires_grad = false);

}  // namespace lcnn

#pragma once

#include <optional>

#include "lcnn/tape.hpp"
#include "lcnn/tensor.hpp"

namespace lcnn {

// ---- elementwise, unary ----------------------------------------------------
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor cosh(const Tensor& a);
Tensor sinh(const Tensor& a);
Tensor tanh(const Tensor& a);
// Inputs in [1 - guard, 1] clamp to exactly 1; inputs below 1 - guard throw
// DomainError. The derivative is floored at x = 1 + guard so gradients stay
// finite at the boundary. guard = domain_guard(dtype).
Tensor acosh(const Tensor& a);
Tensor asinh(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sign(const Tensor& a);  // gradient is zero everywhere
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);  // log(1 + exp(x)), overflow-safe
Tensor square(const Tensor& a);
// Gradient is identity inside [lo, hi], zero outside.
Tensor clamp(const Tensor& a, std::optional<double> lo, std::optional<double> hi);
Tensor clamp_min(const Tensor& a, double lo);
Tensor clamp_max(const Tensor& a, double hi);

// ---- elementwise, binary (numpy-style trailing-axis broadcasting) ----------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor div(const Tensor& a, double b);
Tensor div(double a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, b); }
inline Tensor operator+(double a, const Tensor& b) { return add(b, a); }
inline Tensor operator-(double a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return mul(b, a); }
inline Tensor operator/(double a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- comparisons / selection ------------------------------------------------
// Masks are {0,1} tensors of the promoted broadcast shape; never differentiable.
Tensor lt(const Tensor& a, double b);
Tensor gt(const Tensor& a, double b);
Tensor lt(const Tensor& a, const Tensor& b);
// cond ? a : b, elementwise with broadcasting. Gradient routes by the mask.
Tensor where(const Tensor& cond, const Tensor& a, const Tensor& b);

// ---- reductions --------------------------------------------------------------
Tensor sum(const Tensor& a, const std::vector<int>& axes = {}, bool keepdim = false);
Tensor mean(const Tensor& a, const std::vector<int>& axes = {}, bool keepdim = false);
// Gradient routes to the first argmax along the reduced axes.
Tensor reduce_max(const Tensor& a, const std::vector<int>& axes = {}, bool keepdim = false);
// Sum-reduces `a` until it matches `target` (broadcast adjoint helper).
Tensor reduce_to_shape(const Tensor& a, const Shape& target);

// ---- shape ops ----------------------------------------------------------------
Tensor reshape(const Tensor& a, Shape shape);  // shares storage; -1 wildcard allowed
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t stop);
Tensor transpose_last2(const Tensor& a);
Tensor broadcast_to(const Tensor& a, const Shape& shape);

// ---- matmul --------------------------------------------------------------------
// [.., m, k] x [.., k, n] -> [.., m, n]; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., k] * W[m, k]^T + b[m] -> [..., m]
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);

// ---- image patch gather ----------------------------------------------------------
// Gathers kernel patches from an NHWC map into [B, OH, OW, kh*kw*C], patch
// position major / channel minor. Out-of-bounds positions read `fill[c]`.
// input_dilation = d virtually inserts d-1 fill-valued pixels between
// neighbouring input positions before applying padding and stride, which is
// how the transposed convolution reuses this path.
struct PatchSpec {
    int kh = 1, kw = 1;
    int stride_h = 1, stride_w = 1;
    int pad_h = 0, pad_w = 0;
    int input_dilation = 1;
};
Tensor im2col(const Tensor& x, const PatchSpec& spec, const std::vector<double>& fill);
// Output spatial dims for the gather above.
std::pair<int64_t, int64_t> patch_output_hw(int64_t H, int64_t W, const PatchSpec& spec);

// ---- misc constructors ------------------------------------------------------------
Tensor one_hot(const std::vector<int>& labels, int classes, DType dt);

// Scans for NaN/Inf and throws NonFiniteError naming `op` (used internally by
// every op when Debug::check_finite() is on; exposed for harnesses).
void check_finite(const Tensor& t, const char* op);

}  // namespace lcnn

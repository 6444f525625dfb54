#include "lcnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <type_traits>

namespace lcnn {

namespace {

// ---- shared plumbing --------------------------------------------------------

bool should_tape(std::initializer_list<Tensor> inputs) {
    if (!Tape::active()) return false;
    for (const auto& t : inputs)
        if (t.defined() && t.requires_grad()) return true;
    return false;
}

void mark_output(Tensor& out) {
    out.impl()->requires_grad = true;
    out.impl()->producer = Tape::active();
}

void maybe_finite(const Tensor& out, const char* name) {
    if (Debug::check_finite()) check_finite(out, name);
}

template <typename T>
constexpr T dguard() {
    return sizeof(T) == 4 ? T(1e-7) : T(1e-12);
}

std::vector<int64_t> row_strides(const Shape& s) {
    std::vector<int64_t> st(s.size(), 0);
    int64_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        st[static_cast<size_t>(i)] = acc;
        acc *= s[static_cast<size_t>(i)];
    }
    return st;
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    size_t nd = std::max(a.size(), b.size());
    Shape out(nd, 1);
    for (size_t i = 0; i < nd; ++i) {
        int64_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
        int64_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Strides of `in` laid against broadcast shape `out` (right-aligned, zero on
// broadcast axes).
std::vector<int64_t> bcast_strides(const Shape& out, const Shape& in) {
    auto own = row_strides(in);
    std::vector<int64_t> st(out.size(), 0);
    size_t off = out.size() - in.size();
    for (size_t i = 0; i < in.size(); ++i) st[off + i] = in[i] == 1 ? 0 : own[i];
    return st;
}

// Odometer over `shape` driving several strided offsets in lockstep.
template <class Fn>
void strided_walk(const Shape& shape, const std::vector<std::vector<int64_t>>& strides, Fn fn) {
    int nd = static_cast<int>(shape.size());
    int64_t total = shape_numel(shape);
    size_t nin = strides.size();
    std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
    std::vector<int64_t> off(nin, 0);
    for (int64_t lin = 0; lin < total; ++lin) {
        fn(lin, off);
        for (int d = nd - 1; d >= 0; --d) {
            size_t du = static_cast<size_t>(d);
            ++idx[du];
            for (size_t j = 0; j < nin; ++j) off[j] += strides[j][du];
            if (idx[du] < shape[du]) break;
            for (size_t j = 0; j < nin; ++j) off[j] -= strides[j][du] * shape[du];
            idx[du] = 0;
        }
    }
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* name) {
    if (a.dtype() != b.dtype())
        throw ShapeError(std::string(name) + ": dtype mismatch (" + dtype_name(a.dtype()) +
                         " vs " + dtype_name(b.dtype()) + ")");
}

int normalize_axis(int axis, int ndim, const char* name) {
    if (axis < 0) axis += ndim;
    if (axis < 0 || axis >= ndim)
        throw ShapeError(std::string(name) + ": axis out of range");
    return axis;
}

// ---- elementwise frameworks ---------------------------------------------------

// kernel(T x) -> T value; dldx(T x, T y) -> T local derivative.
template <class K, class D>
Tensor unary_op(const char* name, const Tensor& a, K kernel, D dldx) {
    Tensor out = Tensor::zeros(a.shape(), a.dtype());
    if (a.dtype() == DType::F32) {
        auto src = a.data<float>();
        auto dst = out.data<float>();
        for (size_t i = 0; i < src.size(); ++i) dst[i] = kernel(src[i]);
    } else {
        auto src = a.data<double>();
        auto dst = out.data<double>();
        for (size_t i = 0; i < src.size(); ++i) dst[i] = kernel(src[i]);
    }
    maybe_finite(out, name);
    if (should_tape({a})) {
        mark_output(out);
        auto oi = out.impl();
        Tape::active()->record(name, [a, oi, dldx]() {
            if (!oi->grad) return;
            Tensor dx = Tensor::zeros(a.shape(), a.dtype());
            if (a.dtype() == DType::F32) {
                auto x = a.data<float>();
                auto y = Tensor(oi).data<float>();
                auto g = Tensor(oi->grad).data<float>();
                auto d = dx.data<float>();
                for (size_t i = 0; i < x.size(); ++i) d[i] = g[i] * dldx(x[i], y[i]);
            } else {
                auto x = a.data<double>();
                auto y = Tensor(oi).data<double>();
                auto g = Tensor(oi->grad).data<double>();
                auto d = dx.data<double>();
                for (size_t i = 0; i < x.size(); ++i) d[i] = g[i] * dldx(x[i], y[i]);
            }
            accumulate_grad(a.impl(), dx);
        });
    }
    return out;
}

template <typename T, class K>
void binary_loop(Tensor& out, const Tensor& a, const Tensor& b, K kernel) {
    auto dst = out.data<T>();
    auto xa = a.data<T>();
    auto xb = b.data<T>();
    if (a.shape() == b.shape()) {
        for (size_t i = 0; i < dst.size(); ++i) dst[i] = kernel(xa[i], xb[i]);
        return;
    }
    std::vector<std::vector<int64_t>> st{bcast_strides(out.shape(), a.shape()),
                                         bcast_strides(out.shape(), b.shape())};
    strided_walk(out.shape(), st, [&](int64_t lin, const std::vector<int64_t>& off) {
        dst[static_cast<size_t>(lin)] =
            kernel(xa[static_cast<size_t>(off[0])], xb[static_cast<size_t>(off[1])]);
    });
}

template <class K>
Tensor binary_forward(const char* name, const Tensor& a, const Tensor& b, K kernel) {
    require_same_dtype(a, b, name);
    Tensor out = Tensor::zeros(broadcast_shapes(a.shape(), b.shape()), a.dtype());
    if (a.dtype() == DType::F32)
        binary_loop<float>(out, a, b, kernel);
    else
        binary_loop<double>(out, a, b, kernel);
    maybe_finite(out, name);
    return out;
}

}  // namespace

// ---- finite check -----------------------------------------------------------------

void check_finite(const Tensor& t, const char* op) {
    bool bad = false;
    if (t.dtype() == DType::F32) {
        for (float v : t.data<float>())
            if (!std::isfinite(v)) {
                bad = true;
                break;
            }
    } else {
        for (double v : t.data<double>())
            if (!std::isfinite(v)) {
                bad = true;
                break;
            }
    }
    if (bad) {
        ++Debug::nonfinite_events();
        throw NonFiniteError(std::string(op) + " produced a non-finite value");
    }
}

// ---- unary ops ------------------------------------------------------------------

Tensor neg(const Tensor& a) {
    return unary_op(
        "neg", a, [](auto x) { return -x; }, [](auto x, auto) { return decltype(x)(-1); });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        "exp", a, [](auto x) { return std::exp(x); }, [](auto, auto y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary_op(
        "log", a, [](auto x) { return std::log(x); },
        [](auto x, auto) { return decltype(x)(1) / x; });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(
        "sqrt", a,
        [](auto x) {
            KinkMonitor::ping(static_cast<double>(x));
            using T = decltype(x);
            return x > T(0) ? std::sqrt(x) : T(0);
        },
        [](auto x, auto y) {
            using T = decltype(x);
            return y > T(0) ? T(0.5) / y : T(0);
        });
}

Tensor cosh(const Tensor& a) {
    return unary_op(
        "cosh", a, [](auto x) { return std::cosh(x); }, [](auto x, auto) { return std::sinh(x); });
}

Tensor sinh(const Tensor& a) {
    return unary_op(
        "sinh", a, [](auto x) { return std::sinh(x); }, [](auto x, auto) { return std::cosh(x); });
}

Tensor tanh(const Tensor& a) {
    return unary_op(
        "tanh", a, [](auto x) { return std::tanh(x); },
        [](auto, auto y) { return decltype(y)(1) - y * y; });
}

Tensor acosh(const Tensor& a) {
    return unary_op(
        "acosh", a,
        [](auto x) {
            using T = decltype(x);
            T g = dguard<T>();
            if (x < T(1) - g) throw DomainError("acosh: input below domain guard");
            KinkMonitor::ping(static_cast<double>(x - T(1)));
            return x <= T(1) ? T(0) : std::acosh(x);
        },
        [](auto x, auto) {
            using T = decltype(x);
            T xd = std::max(x, T(1) + dguard<T>());
            return T(1) / std::sqrt(xd * xd - T(1));
        });
}

Tensor asinh(const Tensor& a) {
    return unary_op(
        "asinh", a, [](auto x) { return std::asinh(x); },
        [](auto x, auto) { return decltype(x)(1) / std::sqrt(x * x + decltype(x)(1)); });
}

Tensor abs(const Tensor& a) {
    return unary_op(
        "abs", a,
        [](auto x) {
            KinkMonitor::ping(static_cast<double>(x));
            return std::abs(x);
        },
        [](auto x, auto) {
            using T = decltype(x);
            return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
        });
}

Tensor sign(const Tensor& a) {
    return unary_op(
        "sign", a,
        [](auto x) {
            using T = decltype(x);
            return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
        },
        [](auto x, auto) { return decltype(x)(0); });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        "relu", a,
        [](auto x) {
            KinkMonitor::ping(static_cast<double>(x));
            using T = decltype(x);
            return x > T(0) ? x : T(0);
        },
        [](auto x, auto) {
            using T = decltype(x);
            return x > T(0) ? T(1) : T(0);
        });
}

Tensor softplus(const Tensor& a) {
    return unary_op(
        "softplus", a,
        [](auto x) {
            using T = decltype(x);
            return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
        },
        [](auto x, auto) {
            using T = decltype(x);
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            T e = std::exp(x);
            return e / (T(1) + e);
        });
}

Tensor square(const Tensor& a) {
    return unary_op(
        "square", a, [](auto x) { return x * x; }, [](auto x, auto) { return decltype(x)(2) * x; });
}

Tensor clamp(const Tensor& a, std::optional<double> lo, std::optional<double> hi) {
    bool has_lo = lo.has_value(), has_hi = hi.has_value();
    double vlo = lo.value_or(0.0), vhi = hi.value_or(0.0);
    return unary_op(
        "clamp", a,
        [=](auto x) {
            using T = decltype(x);
            if (has_lo) KinkMonitor::ping(static_cast<double>(x) - vlo);
            if (has_hi) KinkMonitor::ping(static_cast<double>(x) - vhi);
            if (has_lo && x < T(vlo)) x = T(vlo);
            if (has_hi && x > T(vhi)) x = T(vhi);
            return x;
        },
        [=](auto x, auto) {
            using T = decltype(x);
            bool inside = (!has_lo || x >= T(vlo)) && (!has_hi || x <= T(vhi));
            return inside ? T(1) : T(0);
        });
}

Tensor clamp_min(const Tensor& a, double lo) { return clamp(a, lo, std::nullopt); }
Tensor clamp_max(const Tensor& a, double hi) { return clamp(a, std::nullopt, hi); }

// ---- binary ops ---------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = binary_forward("add", a, b, [](auto x, auto y) { return x + y; });
    if (should_tape({a, b})) {
        mark_output(out);
        auto oi = out.impl();
        Tape::active()->record("add", [a, b, oi]() {
            if (!oi->grad) return;
            Tensor g(oi->grad);
            if (a.requires_grad()) accumulate_grad(a.impl(), reduce_to_shape(g, a.shape()));
            if (b.requires_grad()) accumulate_grad(b.impl(), reduce_to_shape(g, b.shape()));
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    Tensor out = binary_forward("sub", a, b, [](auto x, auto y) { return x - y; });
    if (should_tape({a, b})) {
        mark_output(out);
        auto oi = out.impl();
        Tape::active()->record("sub", [a, b, oi]() {
            if (!oi->grad) return;
            Tensor g(oi->grad);
            if (a.requires_grad()) accumulate_grad(a.impl(), reduce_to_shape(g, a.shape()));
            if (b.requires_grad()) accumulate_grad(b.impl(), reduce_to_shape(neg(g), b.shape()));
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Tensor out = binary_forward("mul", a, b, [](auto x, auto y) { return x * y; });
    if (should_tape({a, b})) {
        mark_output(out);
        auto oi = out.impl();
        Tape::active()->record("mul", [a, b, oi]() {
            if (!oi->grad) return;
            Tensor g(oi->grad);
            if (a.requires_grad()) accumulate_grad(a.impl(), reduce_to_shape(mul(g, b), a.shape()));
            if (b.requires_grad()) accumulate_grad(b.impl(), reduce_to_shape(mul(g, a), b.shape()));
        });
    }
    return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
    Tensor out = binary_forward("div", a, b, [](auto x, auto y) { return x / y; });
    if (should_tape({a, b})) {
        mark_output(out);
        auto oi = out.impl();
        Tape::active()->record("div", [a, b, oi]() {
            if (!oi->grad) return;
            Tensor g(oi->grad);
            if (a.requires_grad()) accumulate_grad(a.impl(), reduce_to_shape(div(g, b), a.shape()));
            if (b.requires_grad()) {
                Tensor db = neg(div(mul(g, Tensor(oi)), b));  // -g * (a/b) / b
                accumulate_grad(b.impl(), reduce_to_shape(db, b.shape()));
            }
        });
    }
    return out;
}

Tensor maximum(const Tensor& a, const Tensor& b) {
    Tensor out = binary_forward("maximum", a, b, [](auto x, auto y) {
        KinkMonitor::ping(static_cast<double>(x - y));
        return x >= y ? x : y;  // ties take the left argument
    });
    if (should_tape({a, b})) {
        mark_output(out);
        auto oi = out.impl();
        Tape::active()->record("maximum", [a, b, oi]() {
            if (!oi->grad) return;
            Tensor g(oi->grad);
            Tensor took_b = lt(a, b);
            if (a.requires_grad())
                accumulate_grad(a.impl(),
                                reduce_to_shape(mul(g, sub(1.0, took_b)), a.shape()));
            if (b.requires_grad())
                accumulate_grad(b.impl(), reduce_to_shape(mul(g, took_b), b.shape()));
        });
    }
    return out;
}

// ---- scalar overloads ------------------------------------------------------------------

Tensor add(const Tensor& a, double b) {
    return unary_op(
        "adds", a, [b](auto x) { return x + decltype(x)(b); },
        [](auto x, auto) { return decltype(x)(1); });
}

Tensor sub(const Tensor& a, double b) { return add(a, -b); }

Tensor sub(double a, const Tensor& b) {
    return unary_op(
        "rsubs", b, [a](auto x) { return decltype(x)(a) - x; },
        [](auto x, auto) { return decltype(x)(-1); });
}

Tensor mul(const Tensor& a, double b) {
    return unary_op(
        "muls", a, [b](auto x) { return x * decltype(x)(b); },
        [b](auto x, auto) { return decltype(x)(b); });
}

Tensor div(const Tensor& a, double b) { return mul(a, 1.0 / b); }

Tensor div(double a, const Tensor& b) {
    return unary_op(
        "rdivs", b, [a](auto x) { return decltype(x)(a) / x; },
        [a](auto x, auto) { return decltype(x)(-a) / (x * x); });
}

// ---- comparisons / selection -------------------------------------------------------------

Tensor lt(const Tensor& a, double b) {
    Tensor out = unary_op(
        "lt", a, [b](auto x) { return x < decltype(x)(b) ? decltype(x)(1) : decltype(x)(0); },
        [](auto x, auto) { return decltype(x)(0); });
    return out.detach();
}

Tensor gt(const Tensor& a, double b) {
    Tensor out = unary_op(
        "gt", a, [b](auto x) { return x > decltype(x)(b) ? decltype(x)(1) : decltype(x)(0); },
        [](auto x, auto) { return decltype(x)(0); });
    return out.detach();
}

Tensor lt(const Tensor& a, const Tensor& b) {
    return binary_forward("lt", a, b,
                          [](auto x, auto y) { return x < y ? decltype(x)(1) : decltype(x)(0); });
}

Tensor where(const Tensor& cond, const Tensor& a, const Tensor& b) {
    require_same_dtype(a, b, "where");
    require_same_dtype(cond, a, "where");
    Shape out_shape = broadcast_shapes(broadcast_shapes(cond.shape(), a.shape()), b.shape());
    Tensor out = Tensor::zeros(out_shape, a.dtype());
    std::vector<std::vector<int64_t>> st{bcast_strides(out_shape, cond.shape()),
                                         bcast_strides(out_shape, a.shape()),
                                         bcast_strides(out_shape, b.shape())};
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto dst = out.data<T>();
        auto c = cond.data<T>();
        auto xa = a.data<T>();
        auto xb = b.data<T>();
        strided_walk(out_shape, st, [&](int64_t lin, const std::vector<int64_t>& off) {
            dst[static_cast<size_t>(lin)] = c[static_cast<size_t>(off[0])] != T(0)
                                                ? xa[static_cast<size_t>(off[1])]
                                                : xb[static_cast<size_t>(off[2])];
        });
    };
    if (a.dtype() == DType::F32)
        run(float{});
    else
        run(double{});
    maybe_finite(out, "where");
    if (should_tape({a, b})) {
        mark_output(out);
        auto oi = out.impl();
        Tensor mask = cond.detach();
        Tape::active()->record("where", [mask, a, b, oi]() {
            if (!oi->grad) return;
            Tensor g(oi->grad);
            if (a.requires_grad())
                accumulate_grad(a.impl(), reduce_to_shape(mul(g, mask), a.shape()));
            if (b.requires_grad())
                accumulate_grad(b.impl(), reduce_to_shape(mul(g, sub(1.0, mask)), b.shape()));
        });
    }
    return out;
}

// ---- reductions ------------------------------------------------------------------------------

namespace {

std::vector<char> reduced_mask(const Tensor& a, const std::vector<int>& axes, const char* name) {
    int nd = a.ndim();
    std::vector<char> red(static_cast<size_t>(std::max(nd, 1)), 0);
    if (axes.empty()) {
        std::fill(red.begin(), red.end(), 1);
    } else {
        for (int ax : axes) red[static_cast<size_t>(normalize_axis(ax, nd, name))] = 1;
    }
    return red;
}

Shape keep_shape_of(const Shape& s, const std::vector<char>& red) {
    Shape keep = s;
    for (size_t i = 0; i < s.size(); ++i)
        if (red[i]) keep[i] = 1;
    return keep;
}

Shape squeeze_shape(const Shape& s, const std::vector<char>& red) {
    Shape out;
    for (size_t i = 0; i < s.size(); ++i)
        if (!red[i]) out.push_back(s[i]);
    return out;
}

}  // namespace

Tensor sum(const Tensor& a, const std::vector<int>& axes, bool keepdim) {
    auto red = reduced_mask(a, axes, "sum");
    Shape keep = keep_shape_of(a.shape(), red);
    Shape final_shape = keepdim ? keep : squeeze_shape(a.shape(), red);
    Tensor out = Tensor::zeros(keep, a.dtype());

    auto ks = row_strides(keep);
    std::vector<int64_t> out_map(a.shape().size(), 0);
    for (size_t i = 0; i < a.shape().size(); ++i) out_map[i] = red[i] ? 0 : ks[i];
    std::vector<std::vector<int64_t>> st{row_strides(a.shape()), out_map};
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto src = a.data<T>();
        auto dst = out.data<T>();
        strided_walk(a.shape(), st, [&](int64_t, const std::vector<int64_t>& off) {
            dst[static_cast<size_t>(off[1])] += src[static_cast<size_t>(off[0])];
        });
    };
    if (a.dtype() == DType::F32)
        run(float{});
    else
        run(double{});
    out.impl()->shape = final_shape;
    maybe_finite(out, "sum");
    if (should_tape({a})) {
        mark_output(out);
        auto oi = out.impl();
        Tape::active()->record("sum", [a, oi, keep]() {
            if (!oi->grad) return;
            Tensor g(oi->grad);
            accumulate_grad(a.impl(), broadcast_to(reshape(g, keep), a.shape()));
        });
    }
    return out;
}

Tensor mean(const Tensor& a, const std::vector<int>& axes, bool keepdim) {
    auto red = reduced_mask(a, axes, "mean");
    int64_t cnt = 1;
    for (size_t i = 0; i < a.shape().size(); ++i)
        if (red[i]) cnt *= a.shape()[i];
    return mul(sum(a, axes, keepdim), 1.0 / static_cast<double>(cnt));
}

Tensor reduce_max(const Tensor& a, const std::vector<int>& axes, bool keepdim) {
    auto red = reduced_mask(a, axes, "reduce_max");
    Shape keep = keep_shape_of(a.shape(), red);
    Shape final_shape = keepdim ? keep : squeeze_shape(a.shape(), red);
    Tensor out = Tensor::zeros(keep, a.dtype());
    int64_t on = shape_numel(keep);
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(on), -1);
    std::vector<double> runner(static_cast<size_t>(on), -std::numeric_limits<double>::infinity());

    auto ks = row_strides(keep);
    std::vector<int64_t> out_map(a.shape().size(), 0);
    for (size_t i = 0; i < a.shape().size(); ++i) out_map[i] = red[i] ? 0 : ks[i];
    std::vector<std::vector<int64_t>> st{row_strides(a.shape()), out_map};
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto src = a.data<T>();
        auto dst = out.data<T>();
        std::vector<char> seen(static_cast<size_t>(on), 0);
        strided_walk(a.shape(), st, [&](int64_t, const std::vector<int64_t>& off) {
            size_t oidx = static_cast<size_t>(off[1]);
            T v = src[static_cast<size_t>(off[0])];
            if (!seen[oidx] || v > dst[oidx]) {
                if (seen[oidx]) runner[oidx] = static_cast<double>(dst[oidx]);
                dst[oidx] = v;
                (*argmax)[oidx] = off[0];
                seen[oidx] = 1;
            } else if (static_cast<double>(v) > runner[oidx]) {
                runner[oidx] = static_cast<double>(v);
            }
        });
    };
    if (a.dtype() == DType::F32)
        run(float{});
    else
        run(double{});
    if (KinkMonitor::armed())
        for (int64_t i = 0; i < on; ++i)
            if (std::isfinite(runner[static_cast<size_t>(i)]))
                KinkMonitor::ping(out.at(i) - runner[static_cast<size_t>(i)]);
    out.impl()->shape = final_shape;
    maybe_finite(out, "reduce_max");
    if (should_tape({a})) {
        mark_output(out);
        auto oi = out.impl();
        Tape::active()->record("reduce_max", [a, oi, argmax]() {
            if (!oi->grad) return;
            Tensor g(oi->grad);
            Tensor dx = Tensor::zeros(a.shape(), a.dtype());
            for (size_t i = 0; i < argmax->size(); ++i)
                dx.set((*argmax)[i], dx.at((*argmax)[i]) + g.at(static_cast<int64_t>(i)));
            accumulate_grad(a.impl(), dx);
        });
    }
    return out;
}

Tensor reduce_to_shape(const Tensor& a, const Shape& target) {
    if (a.shape() == target) return a;
    size_t extra = a.shape().size() - target.size();
    std::vector<int> axes;
    for (size_t i = 0; i < extra; ++i) axes.push_back(static_cast<int>(i));
    for (size_t i = 0; i < target.size(); ++i)
        if (target[i] == 1 && a.shape()[extra + i] != 1) axes.push_back(static_cast<int>(extra + i));
    Tensor r = axes.empty() ? a : sum(a, axes, /*keepdim=*/false);
    return reshape(r, target);
}

// ---- shape ops -------------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
    int64_t known = 1;
    int wild = -1;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            if (wild >= 0) throw ShapeError("reshape: more than one -1");
            wild = static_cast<int>(i);
        } else {
            known *= shape[i];
        }
    }
    if (wild >= 0) {
        if (known == 0 || a.numel() % known != 0)
            throw ShapeError("reshape: cannot infer -1 for " + shape_str(a.shape()));
        shape[static_cast<size_t>(wild)] = a.numel() / known;
    }
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = shape;
    impl->dtype = a.dtype();
    impl->data = a.impl()->data;  // dense row-major: same linear layout
    Tensor out(impl);
    if (should_tape({a})) {
        mark_output(out);
        auto oi = out.impl();
        Tape::active()->record("reshape", [a, oi]() {
            if (!oi->grad) return;
            accumulate_grad(a.impl(), reshape(Tensor(oi->grad), a.shape()));
        });
    }
    return out;
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
    if (a.shape() == shape) return a;
    if (broadcast_shapes(a.shape(), shape) != shape)
        throw ShapeError("broadcast_to: " + shape_str(a.shape()) + " to " + shape_str(shape));
    Tensor out = Tensor::zeros(shape, a.dtype());
    std::vector<std::vector<int64_t>> st{bcast_strides(shape, a.shape())};
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto src = a.data<T>();
        auto dst = out.data<T>();
        strided_walk(shape, st, [&](int64_t lin, const std::vector<int64_t>& off) {
            dst[static_cast<size_t>(lin)] = src[static_cast<size_t>(off[0])];
        });
    };
    if (a.dtype() == DType::F32)
        run(float{});
    else
        run(double{});
    if (should_tape({a})) {
        mark_output(out);
        auto oi = out.impl();
        Tape::active()->record("broadcast_to", [a, oi]() {
            if (!oi->grad) return;
            accumulate_grad(a.impl(), reduce_to_shape(Tensor(oi->grad), a.shape()));
        });
    }
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    int nd = parts[0].ndim();
    int ax = normalize_axis(axis, nd, "concat");
    Shape out_shape = parts[0].shape();
    int64_t total_axis = 0;
    for (const auto& p : parts) {
        if (p.ndim() != nd) throw ShapeError("concat: rank mismatch");
        require_same_dtype(parts[0], p, "concat");
        for (int d = 0; d < nd; ++d)
            if (d != ax && p.shape()[static_cast<size_t>(d)] != out_shape[static_cast<size_t>(d)])
                throw ShapeError("concat: shape mismatch " + shape_str(p.shape()));
        total_axis += p.dim(ax);
    }
    out_shape[static_cast<size_t>(ax)] = total_axis;
    Tensor out = Tensor::zeros(out_shape, parts[0].dtype());

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < ax; ++d) outer *= out_shape[static_cast<size_t>(d)];
    for (int d = ax + 1; d < nd; ++d) inner *= out_shape[static_cast<size_t>(d)];
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto dst = out.data<T>();
        int64_t axis_off = 0;
        for (const auto& p : parts) {
            auto src = p.data<T>();
            int64_t plen = p.dim(ax) * inner;
            for (int64_t o = 0; o < outer; ++o)
                std::memcpy(dst.data() + (o * total_axis + axis_off) * inner,
                            src.data() + o * plen, static_cast<size_t>(plen) * sizeof(T));
            axis_off += p.dim(ax);
        }
    };
    if (out.dtype() == DType::F32)
        run(float{});
    else
        run(double{});
    bool any_grad = false;
    for (const auto& p : parts)
        if (p.requires_grad()) any_grad = true;
    if (Tape::active() && any_grad) {
        mark_output(out);
        auto oi = out.impl();
        auto saved = parts;
        Tape::active()->record("concat", [saved, oi, ax]() {
            if (!oi->grad) return;
            Tensor g(oi->grad);
            int64_t start = 0;
            for (const auto& p : saved) {
                int64_t stop = start + p.dim(ax);
                if (p.requires_grad()) accumulate_grad(p.impl(), slice(g, ax, start, stop));
                start = stop;
            }
        });
    }
    return out;
}

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t stop) {
    int ax = normalize_axis(axis, a.ndim(), "slice");
    int64_t dim = a.dim(ax);
    if (start < 0 || stop > dim || start >= stop)
        throw ShapeError("slice: bad range [" + std::to_string(start) + ", " +
                         std::to_string(stop) + ") on " + shape_str(a.shape()));
    Shape out_shape = a.shape();
    out_shape[static_cast<size_t>(ax)] = stop - start;
    Tensor out = Tensor::zeros(out_shape, a.dtype());
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < ax; ++d) outer *= a.shape()[static_cast<size_t>(d)];
    for (int d = ax + 1; d < a.ndim(); ++d) inner *= a.shape()[static_cast<size_t>(d)];
    int64_t len = stop - start;
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto src = a.data<T>();
        auto dst = out.data<T>();
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(dst.data() + o * len * inner, src.data() + (o * dim + start) * inner,
                        static_cast<size_t>(len * inner) * sizeof(T));
    };
    if (a.dtype() == DType::F32)
        run(float{});
    else
        run(double{});
    if (should_tape({a})) {
        mark_output(out);
        auto oi = out.impl();
        Tape::active()->record("slice", [a, oi, ax, start, stop, outer, inner, dim, len]() {
            if (!oi->grad) return;
            Tensor dx = Tensor::zeros(a.shape(), a.dtype());
            auto run_b = [&](auto tag) {
                using T = decltype(tag);
                auto g = Tensor(oi->grad).data<T>();
                auto d = dx.data<T>();
                for (int64_t o = 0; o < outer; ++o)
                    std::memcpy(d.data() + (o * dim + start) * inner, g.data() + o * len * inner,
                                static_cast<size_t>(len * inner) * sizeof(T));
            };
            if (dx.dtype() == DType::F32)
                run_b(float{});
            else
                run_b(double{});
            accumulate_grad(a.impl(), dx);
        });
    }
    return out;
}

Tensor transpose_last2(const Tensor& a) {
    if (a.ndim() < 2) throw ShapeError("transpose_last2: needs >= 2 dims");
    Shape out_shape = a.shape();
    std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
    Tensor out = Tensor::zeros(out_shape, a.dtype());
    int64_t r = a.dim(-2), c = a.dim(-1);
    int64_t batch = a.numel() / (r * c);
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto src = a.data<T>();
        auto dst = out.data<T>();
        for (int64_t bI = 0; bI < batch; ++bI) {
            const T* s = src.data() + bI * r * c;
            T* d = dst.data() + bI * r * c;
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) d[j * r + i] = s[i * c + j];
        }
    };
    if (a.dtype() == DType::F32)
        run(float{});
    else
        run(double{});
    if (should_tape({a})) {
        mark_output(out);
        auto oi = out.impl();
        Tape::active()->record("transpose_last2", [a, oi]() {
            if (!oi->grad) return;
            accumulate_grad(a.impl(), transpose_last2(Tensor(oi->grad)));
        });
    }
    return out;
}

// ---- matmul ------------------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_same_dtype(a, b, "matmul");
    if (a.ndim() < 2 || b.ndim() < 2) throw ShapeError("matmul: needs >= 2 dims");
    int64_t m = a.dim(-2), k = a.dim(-1), k2 = b.dim(-2), n = b.dim(-1);
    if (k != k2)
        throw ShapeError("matmul: inner dims " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    Shape ba(a.shape().begin(), a.shape().end() - 2);
    Shape bb(b.shape().begin(), b.shape().end() - 2);
    Shape batch = broadcast_shapes(ba, bb);
    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor out = Tensor::zeros(out_shape, a.dtype());

    auto sta = bcast_strides(batch, ba);
    auto stb = bcast_strides(batch, bb);
    auto sto = row_strides(batch);
    for (auto& v : sta) v *= m * k;
    for (auto& v : stb) v *= k * n;
    for (auto& v : sto) v *= m * n;
    std::vector<std::vector<int64_t>> st{sta, stb, sto};
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>();
        auto pb = b.data<T>();
        auto po = out.data<T>();
        strided_walk(batch, st, [&](int64_t, const std::vector<int64_t>& off) {
            const T* A = pa.data() + off[0];
            const T* B = pb.data() + off[1];
            T* C = po.data() + off[2];
            for (int64_t i = 0; i < m; ++i)
                for (int64_t kk = 0; kk < k; ++kk) {
                    T aik = A[i * k + kk];
                    const T* Bk = B + kk * n;
                    T* Ci = C + i * n;
                    for (int64_t j = 0; j < n; ++j) Ci[j] += aik * Bk[j];
                }
        });
    };
    if (a.dtype() == DType::F32)
        run(float{});
    else
        run(double{});
    maybe_finite(out, "matmul");
    if (should_tape({a, b})) {
        mark_output(out);
        auto oi = out.impl();
        Tape::active()->record("matmul", [a, b, oi]() {
            if (!oi->grad) return;
            Tensor g(oi->grad);
            if (a.requires_grad())
                accumulate_grad(a.impl(),
                                reduce_to_shape(matmul(g, transpose_last2(b)), a.shape()));
            if (b.requires_grad())
                accumulate_grad(b.impl(),
                                reduce_to_shape(matmul(transpose_last2(a), g), b.shape()));
        });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
    require_same_dtype(x, W, "linear");
    if (b.defined()) require_same_dtype(x, b, "linear");
    if (W.ndim() != 2) throw ShapeError("linear: W must be 2-d, got " + shape_str(W.shape()));
    int64_t k = x.dim(-1), m = W.dim(0);
    if (W.dim(1) != k)
        throw ShapeError("linear: " + shape_str(x.shape()) + " x " + shape_str(W.shape()));
    if (b.defined() && (b.ndim() != 1 || b.dim(0) != m))
        throw ShapeError("linear: bias shape " + shape_str(b.shape()));
    Shape out_shape = x.shape();
    out_shape.back() = m;
    Tensor out = Tensor::zeros(out_shape, x.dtype());
    int64_t N = x.numel() / k;
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto px = x.data<T>();
        auto pw = W.data<T>();
        auto po = out.data<T>();
        const T* pbias = nullptr;
        if (b.defined()) pbias = b.data<T>().data();
        for (int64_t nI = 0; nI < N; ++nI) {
            const T* xr = px.data() + nI * k;
            T* orow = po.data() + nI * m;
            for (int64_t i = 0; i < m; ++i) {
                const T* wr = pw.data() + i * k;
                T acc = pbias ? pbias[i] : T(0);
                for (int64_t j = 0; j < k; ++j) acc += xr[j] * wr[j];
                orow[i] = acc;
            }
        }
    };
    if (x.dtype() == DType::F32)
        run(float{});
    else
        run(double{});
    maybe_finite(out, "linear");
    if (should_tape({x, W, b})) {
        mark_output(out);
        auto oi = out.impl();
        Tape::active()->record("linear", [x, W, b, oi, N, m, k]() {
            if (!oi->grad) return;
            Tensor g(oi->grad);
            Tensor dx = x.requires_grad() ? Tensor::zeros(x.shape(), x.dtype()) : Tensor();
            Tensor dW = W.requires_grad() ? Tensor::zeros(W.shape(), W.dtype()) : Tensor();
            Tensor db =
                (b.defined() && b.requires_grad()) ? Tensor::zeros(b.shape(), b.dtype()) : Tensor();
            auto run_b = [&](auto tag) {
                using T = decltype(tag);
                auto pg = g.data<T>();
                auto px = x.data<T>();
                auto pw = W.data<T>();
                for (int64_t nI = 0; nI < N; ++nI) {
                    const T* gr = pg.data() + nI * m;
                    const T* xr = px.data() + nI * k;
                    for (int64_t i = 0; i < m; ++i) {
                        T gi = gr[i];
                        if (gi == T(0)) continue;
                        if (dx.defined()) {
                            T* dxr = dx.data<T>().data() + nI * k;
                            const T* wr = pw.data() + i * k;
                            for (int64_t j = 0; j < k; ++j) dxr[j] += gi * wr[j];
                        }
                        if (dW.defined()) {
                            T* dwr = dW.data<T>().data() + i * k;
                            for (int64_t j = 0; j < k; ++j) dwr[j] += gi * xr[j];
                        }
                        if (db.defined()) db.data<T>()[static_cast<size_t>(i)] += gi;
                    }
                }
            };
            if (x.dtype() == DType::F32)
                run_b(float{});
            else
                run_b(double{});
            if (dx.defined()) accumulate_grad(x.impl(), dx);
            if (dW.defined()) accumulate_grad(W.impl(), dW);
            if (db.defined()) accumulate_grad(b.impl(), db);
        });
    }
    return out;
}

// ---- image patch gather ---------------------------------------------------------------------------

std::pair<int64_t, int64_t> patch_output_hw(int64_t H, int64_t W, const PatchSpec& spec) {
    int64_t vh = (H - 1) * spec.input_dilation + 1;
    int64_t vw = (W - 1) * spec.input_dilation + 1;
    int64_t oh = (vh + 2 * spec.pad_h - spec.kh) / spec.stride_h + 1;
    int64_t ow = (vw + 2 * spec.pad_w - spec.kw) / spec.stride_w + 1;
    if (oh < 1 || ow < 1) throw ShapeError("im2col: output would be empty");
    return {oh, ow};
}

Tensor im2col(const Tensor& x, const PatchSpec& spec, const std::vector<double>& fill) {
    if (x.ndim() != 4) throw ShapeError("im2col: expects [B,H,W,C], got " + shape_str(x.shape()));
    int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    if (static_cast<int64_t>(fill.size()) != C)
        throw ShapeError("im2col: fill has " + std::to_string(fill.size()) + " channels, input " +
                         std::to_string(C));
    auto [OH, OW] = patch_output_hw(H, W, spec);
    int64_t patch = static_cast<int64_t>(spec.kh) * spec.kw * C;
    Tensor out = Tensor::zeros({B, OH, OW, patch}, x.dtype());
    int64_t d = spec.input_dilation;
    int64_t vh = (H - 1) * d + 1, vw = (W - 1) * d + 1;
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto src = x.data<T>();
        auto dst = out.data<T>();
        std::vector<T> tf(fill.size());
        for (size_t i = 0; i < fill.size(); ++i) tf[i] = static_cast<T>(fill[i]);
        int64_t p = 0;
        for (int64_t bI = 0; bI < B; ++bI)
            for (int64_t oh = 0; oh < OH; ++oh)
                for (int64_t ow = 0; ow < OW; ++ow)
                    for (int64_t ki = 0; ki < spec.kh; ++ki) {
                        int64_t vi = oh * spec.stride_h - spec.pad_h + ki;
                        bool row_ok = vi >= 0 && vi < vh && vi % d == 0;
                        int64_t ii = vi / d;
                        for (int64_t kj = 0; kj < spec.kw; ++kj) {
                            int64_t vj = ow * spec.stride_w - spec.pad_w + kj;
                            bool ok = row_ok && vj >= 0 && vj < vw && vj % d == 0;
                            if (ok) {
                                int64_t jj = vj / d;
                                const T* s = src.data() + ((bI * H + ii) * W + jj) * C;
                                std::memcpy(dst.data() + p, s, static_cast<size_t>(C) * sizeof(T));
                            } else {
                                std::memcpy(dst.data() + p, tf.data(),
                                            static_cast<size_t>(C) * sizeof(T));
                            }
                            p += C;
                        }
                    }
    };
    if (x.dtype() == DType::F32)
        run(float{});
    else
        run(double{});
    if (should_tape({x})) {
        mark_output(out);
        auto oi = out.impl();
        PatchSpec sp = spec;
        Tape::active()->record("im2col", [x, oi, sp, B, H, W, C, OH, OW, vh, vw]() {
            if (!oi->grad) return;
            Tensor dx = Tensor::zeros(x.shape(), x.dtype());
            int64_t d = sp.input_dilation;
            auto run_b = [&](auto tag) {
                using T = decltype(tag);
                auto g = Tensor(oi->grad).data<T>();
                auto dst = dx.data<T>();
                int64_t p = 0;
                for (int64_t bI = 0; bI < B; ++bI)
                    for (int64_t oh = 0; oh < OH; ++oh)
                        for (int64_t ow = 0; ow < OW; ++ow)
                            for (int64_t ki = 0; ki < sp.kh; ++ki) {
                                int64_t vi = oh * sp.stride_h - sp.pad_h + ki;
                                bool row_ok = vi >= 0 && vi < vh && vi % d == 0;
                                int64_t ii = vi / d;
                                for (int64_t kj = 0; kj < sp.kw; ++kj) {
                                    int64_t vj = ow * sp.stride_w - sp.pad_w + kj;
                                    bool ok = row_ok && vj >= 0 && vj < vw && vj % d == 0;
                                    if (ok) {
                                        int64_t jj = vj / d;
                                        T* t = dst.data() + ((bI * H + ii) * W + jj) * C;
                                        for (int64_t c = 0; c < C; ++c) t[c] += g[p + c];
                                    }
                                    p += C;
                                }
                            }
            };
            if (dx.dtype() == DType::F32)
                run_b(float{});
            else
                run_b(double{});
            accumulate_grad(x.impl(), dx);
        });
    }
    return out;
}

Tensor one_hot(const std::vector<int>& labels, int classes, DType dt) {
    Tensor out = Tensor::zeros({static_cast<int64_t>(labels.size()), classes}, dt);
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes)
            throw ShapeError("one_hot: label " + std::to_string(labels[i]) + " out of range");
        out.set(static_cast<int64_t>(i) * classes + labels[i], 1.0);
    }
    return out;
}

}  // namespace lcnn

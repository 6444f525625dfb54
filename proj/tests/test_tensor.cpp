#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lcnn/ops.hpp"

using namespace lcnn;

TEST_CASE("factories and element access") {
    Tensor z = Tensor::zeros({2, 3});
    CHECK(z.shape() == Shape{2, 3});
    CHECK(z.numel() == 6);
    CHECK(z.dtype() == DType::F32);
    CHECK(z.at(4) == 0.0);

    Tensor f = Tensor::full({2, 2}, 2.5, DType::F64);
    CHECK(f.at(3) == 2.5);

    Tensor v = Tensor::from({3}, {1.0, 2.0, 3.0});
    CHECK(v.at(2) == doctest::Approx(3.0));
    CHECK_THROWS_AS(Tensor::from({2}, {1.0, 2.0, 3.0}), ShapeError);

    Tensor id = Tensor::eye(3);
    CHECK(id.at(0) == 1.0);
    CHECK(id.at(1) == 0.0);
    CHECK(id.at(4) == 1.0);

    CHECK(Tensor::scalar(7.0).item() == 7.0);
    CHECK_THROWS_AS(v.item(), ShapeError);
    CHECK(v.dim(-1) == 3);
}

TEST_CASE("clone is deep, copies are shallow") {
    Tensor a = Tensor::from({2}, {1.0, 2.0});
    Tensor b = a;          // shallow
    Tensor c = a.clone();  // deep
    a.set(0, 9.0);
    CHECK(b.at(0) == 9.0);
    CHECK(c.at(0) == 1.0);
}

TEST_CASE("astype roundtrip") {
    Tensor a = Tensor::from({3}, {1.25, -2.5, 0.125});
    Tensor d = a.astype(DType::F64);
    CHECK(d.dtype() == DType::F64);
    CHECK(d.at(1) == -2.5);
    Tensor f = d.astype(DType::F32);
    CHECK(f.at(2) == doctest::Approx(0.125));
}

TEST_CASE("elementwise math matches frozen references") {
    Tensor x = Tensor::from({3}, {1.0, 0.5, 2.0}, DType::F64);
    CHECK(cosh(x).at(0) == doctest::Approx(1.5430806348152437).epsilon(1e-14));
    CHECK(sinh(x).at(0) == doctest::Approx(1.1752011936438014).epsilon(1e-14));
    CHECK(tanh(x).at(1) == doctest::Approx(0.46211715726000974).epsilon(1e-14));
    CHECK(exp(x).at(2) == doctest::Approx(7.38905609893065).epsilon(1e-14));
    CHECK(log(exp(x)).at(1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(asinh(sinh(x)).at(2) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(sqrt(Tensor::scalar(2.0, DType::F64)).item() ==
          doctest::Approx(1.4142135623730951).epsilon(1e-14));
}

TEST_CASE("acosh guard behaviour") {
    // Slightly-below-one inputs clamp to exactly zero output.
    Tensor near = Tensor::from({2}, {1.0 - 1e-13, 1.0}, DType::F64);
    CHECK(acosh(near).at(0) == 0.0);
    CHECK(acosh(near).at(1) == 0.0);
    Tensor ok = Tensor::from({1}, {2.0}, DType::F64);
    CHECK(acosh(ok).item() == doctest::Approx(1.3169578969248166).epsilon(1e-14));
    // Below the guard band is a hard error.
    Tensor bad = Tensor::from({1}, {0.5}, DType::F64);
    CHECK_THROWS_AS(acosh(bad), DomainError);
    // f32 guard is wider.
    Tensor near32 = Tensor::from({1}, {1.0 - 5e-8});
    CHECK(acosh(near32).item() == 0.0);
}

TEST_CASE("binary broadcasting") {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor row = Tensor::from({3}, {10, 20, 30});
    Tensor col = Tensor::from({2, 1}, {100, 200});
    Tensor s = a + row;
    CHECK(s.shape() == Shape{2, 3});
    CHECK(s.at(0) == 11.0);
    CHECK(s.at(5) == 36.0);
    Tensor t = a * col;
    CHECK(t.at(2) == 300.0);
    CHECK(t.at(3) == 800.0);
    Tensor u = row + col;
    CHECK(u.shape() == Shape{2, 3});
    CHECK(u.at(4) == 220.0);
    CHECK_THROWS_AS(a + Tensor::zeros({2, 2}), ShapeError);
    CHECK_THROWS_AS(a + Tensor::zeros({2, 3}, DType::F64), ShapeError);
    CHECK((2.0 * a - 1.0).at(0) == 1.0);
    CHECK((1.0 / Tensor::from({1}, {4.0})).item() == 0.25);
    CHECK(maximum(a, row).at(0) == 10.0);
}

TEST_CASE("comparisons and where") {
    Tensor a = Tensor::from({4}, {-1, 0, 2, 5});
    Tensor m = gt(a, 0.5);
    CHECK(m.at(0) == 0.0);
    CHECK(m.at(2) == 1.0);
    Tensor w = where(m, a, Tensor::full({4}, -9.0));
    CHECK(w.at(0) == -9.0);
    CHECK(w.at(3) == 5.0);
    CHECK(lt(a, Tensor::zeros({4})).at(0) == 1.0);
}

TEST_CASE("reductions") {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, DType::F64);
    CHECK(sum(a).item() == 21.0);
    CHECK(sum(a, {0}).shape() == Shape{3});
    CHECK(sum(a, {0}).at(1) == 7.0);
    CHECK(sum(a, {1}, true).shape() == Shape{2, 1});
    CHECK(sum(a, {-1}, true).at(1) == 15.0);
    CHECK(mean(a, {1}).at(0) == doctest::Approx(2.0));
    CHECK(reduce_max(a, {0}).at(2) == 6.0);
    CHECK(reduce_max(a).item() == 6.0);
}

TEST_CASE("shape ops") {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor r = reshape(a, {3, -1});
    CHECK(r.shape() == Shape{3, 2});
    CHECK(r.at(5) == 6.0);
    CHECK_THROWS_AS(reshape(a, {4, 2}), ShapeError);

    Tensor b = broadcast_to(Tensor::from({1, 3}, {7, 8, 9}), {2, 3});
    CHECK(b.at(5) == 9.0);

    Tensor c = concat({a, Tensor::from({1, 3}, {7, 8, 9})}, 0);
    CHECK(c.shape() == Shape{3, 3});
    CHECK(c.at(8) == 9.0);
    Tensor c2 = concat({a, Tensor::from({2, 1}, {9, 9})}, 1);
    CHECK(c2.shape() == Shape{2, 4});
    CHECK(c2.at(3) == 9.0);
    CHECK(c2.at(4) == 4.0);

    Tensor s = slice(a, 1, 1, 3);
    CHECK(s.shape() == Shape{2, 2});
    CHECK(s.at(0) == 2.0);
    CHECK(s.at(3) == 6.0);
    CHECK_THROWS_AS(slice(a, 1, 2, 2), ShapeError);

    Tensor t = transpose_last2(a);
    CHECK(t.shape() == Shape{3, 2});
    CHECK(t.at(1) == 4.0);
}

TEST_CASE("matmul plain and batched") {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, DType::F64);
    Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12}, DType::F64);
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 2});
    CHECK(c.at(0) == 58.0);
    CHECK(c.at(1) == 64.0);
    CHECK(c.at(2) == 139.0);
    CHECK(c.at(3) == 154.0);

    Tensor ab = Tensor::from({2, 1, 2}, {1, 2, 3, 4}, DType::F64);
    Tensor bb = Tensor::from({2, 2, 1}, {5, 6, 7, 8}, DType::F64);
    Tensor cb = matmul(ab, bb);
    CHECK(cb.shape() == Shape{2, 1, 1});
    CHECK(cb.at(0) == 17.0);
    CHECK(cb.at(1) == 53.0);

    // Batch broadcast: shared rhs.
    Tensor shared = matmul(ab, Tensor::from({2, 1}, {1, 1}, DType::F64));
    CHECK(shared.at(0) == 3.0);
    CHECK(shared.at(1) == 7.0);
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("linear matches matmul") {
    Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, DType::F64);
    Tensor W = Tensor::from({2, 3}, {1, 0, -1, 2, 1, 0}, DType::F64);
    Tensor b = Tensor::from({2}, {0.5, -0.5}, DType::F64);
    Tensor y = linear(x, W, b);
    CHECK(y.shape() == Shape{2, 2});
    CHECK(y.at(0) == doctest::Approx(1.0 - 3.0 + 0.5));
    CHECK(y.at(1) == doctest::Approx(2.0 + 2.0 - 0.5));
    Tensor ref = matmul(x, transpose_last2(W)) + reshape(b, {1, 2});
    for (int i = 0; i < 4; ++i) CHECK(y.at(i) == doctest::Approx(ref.at(i)));
    // Leading dims fold.
    Tensor x3 = reshape(x, {2, 1, 3});
    CHECK(linear(x3, W, b).shape() == Shape{2, 1, 2});
    CHECK(linear(x3, W, Tensor()).at(0) == doctest::Approx(-2.0));
}

TEST_CASE("im2col gathers patches with fill") {
    Tensor x = Tensor::from({1, 2, 2, 1}, {1, 2, 3, 4}, DType::F64);
    PatchSpec spec;
    spec.kh = spec.kw = 2;
    spec.pad_h = spec.pad_w = 1;
    Tensor cols = im2col(x, spec, {9.0});
    CHECK(cols.shape() == Shape{1, 3, 3, 4});
    // top-left patch: three padded cells then pixel 1
    CHECK(cols.at(0) == 9.0);
    CHECK(cols.at(3) == 1.0);
    // centre patch sees the full image
    int64_t c0 = (0 * 3 + 1) * 3 * 4 + 1 * 4;  // [0,1,1,:]
    CHECK(cols.at(c0 + 0) == 1.0);
    CHECK(cols.at(c0 + 1) == 2.0);
    CHECK(cols.at(c0 + 2) == 3.0);
    CHECK(cols.at(c0 + 3) == 4.0);
    // bottom-right
    int64_t c1 = (0 * 3 + 2) * 3 * 4 + 2 * 4;
    CHECK(cols.at(c1 + 0) == 4.0);
    CHECK(cols.at(c1 + 1) == 9.0);
}

TEST_CASE("im2col input dilation inserts fill between pixels") {
    Tensor x = Tensor::from({1, 1, 2, 1}, {5, 7}, DType::F64);
    PatchSpec spec;
    spec.input_dilation = 2;
    Tensor cols = im2col(x, spec, {9.0});
    CHECK(cols.shape() == Shape{1, 1, 3, 1});
    CHECK(cols.at(0) == 5.0);
    CHECK(cols.at(1) == 9.0);
    CHECK(cols.at(2) == 7.0);
}

TEST_CASE("one_hot") {
    Tensor t = one_hot({2, 0}, 3, DType::F32);
    CHECK(t.shape() == Shape{2, 3});
    CHECK(t.at(2) == 1.0);
    CHECK(t.at(3) == 1.0);
    CHECK(t.at(1) == 0.0);
    CHECK_THROWS_AS(one_hot({3}, 3, DType::F32), ShapeError);
}

TEST_CASE("rng is deterministic under a fixed seed") {
    Rng r1(42), r2(42);
    Tensor a = rand_normal({4}, 0.0, 1.0, r1, DType::F64);
    Tensor b = rand_normal({4}, 0.0, 1.0, r2, DType::F64);
    for (int i = 0; i < 4; ++i) CHECK(a.at(i) == b.at(i));
    Rng r3(43);
    Tensor c = rand_normal({4}, 0.0, 1.0, r3, DType::F64);
    bool differs = false;
    for (int i = 0; i < 4; ++i) differs = differs || c.at(i) != a.at(i);
    CHECK(differs);
}

TEST_CASE("nan detector flags and counts") {
    Debug::check_finite() = true;
    int64_t before = Debug::nonfinite_events();
    Tensor neg1 = Tensor::from({1}, {-1.0}, DType::F64);
    CHECK_THROWS_AS(log(neg1), NonFiniteError);
    CHECK(Debug::nonfinite_events() == before + 1);
    CHECK_NOTHROW(log(Tensor::from({1}, {1.0}, DType::F64)));
    CHECK(Debug::nonfinite_events() == before + 1);
    Debug::check_finite() = false;
    CHECK_NOTHROW(log(neg1));  // detector off: value flows through
}

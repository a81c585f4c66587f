#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "triplenet/gradcheck.hpp"
#include "triplenet/tensor.hpp"

using namespace triplenet;
using DTensor = TensorT<double>;

TEST_CASE("matmul identity") {
  Tensor I({2, 2}, {1, 0, 0, 1});
  Tensor v({2, 1}, {3, 4});
  Tensor out = matmul(I, v);
  CHECK(out(0, 0) == doctest::Approx(3));
  CHECK(out(1, 0) == doctest::Approx(4));
}

TEST_CASE("tanh of zero tensor is zero") {
  Tensor z = Tensor::zeros({3, 2});
  Tensor out = tanh_t(z);
  for (float x : out.values()) CHECK(x == 0.0f);
}

TEST_CASE("concat shape arithmetic") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 5});
  Tensor c = concat(1, {a, b});
  CHECK(c.shape() == Shape{2, 8});
}

TEST_CASE("shape mismatch errors name both shapes and the op") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  CHECK_THROWS_WITH_AS(add(a, b), "add: shape mismatch (2,3) vs (4,5)", std::invalid_argument);
  CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(concat(0, {a, b}), std::invalid_argument);
}

TEST_CASE("broadcast_to expands and back-sums") {
  DTensor v = DTensor::param({3}, {1, 2, 3});
  DTensor b = broadcast_to(v, {2, 3});
  CHECK(b.shape() == Shape{2, 3});
  CHECK(b(1, 2) == doctest::Approx(3));
  DTensor loss = sum(b);
  loss.backward();
  for (double g : v.grad()) CHECK(g == doctest::Approx(2.0));
}

TEST_CASE("masked_softmax examples") {
  SUBCASE("uniform logits") {
    Tensor t({2}, {0, 0});
    Tensor s = masked_softmax(t, 0);
    CHECK(s(0) == doctest::Approx(0.5));
    CHECK(s(1) == doctest::Approx(0.5));
  }
  SUBCASE("masked uniform") {
    Tensor t({3}, {1, 1, 1});
    MaskVec m{1, 1, 0};
    Tensor s = masked_softmax(t, 0, m);
    CHECK(s(0) == doctest::Approx(0.5));
    CHECK(s(1) == doctest::Approx(0.5));
    CHECK(s(2) == 0.0f);  // masked position exactly 0
  }
  SUBCASE("closed form") {
    Tensor t({2}, {std::log(1.0f), std::log(3.0f)});
    Tensor s = masked_softmax(t, 0);
    CHECK(s(0) == doctest::Approx(0.25));
    CHECK(s(1) == doctest::Approx(0.75));
  }
  SUBCASE("fully masked slice is an error") {
    Tensor t({2}, {1, 2});
    MaskVec m{0, 0};
    CHECK_THROWS_AS(masked_softmax(t, 0, m), std::invalid_argument);
  }
}

TEST_CASE("masked_softmax rows are distributions") {
  std::mt19937_64 eng(7);
  std::uniform_real_distribution<float> dist(-3, 3);
  for (int rep = 0; rep < 20; ++rep) {
    size_t r = 2 + eng() % 4, c = 2 + eng() % 5;
    std::vector<float> v(r * c);
    for (auto& x : v) x = dist(eng);
    MaskVec m(c, 1);
    m[eng() % c] = 0;
    bool any = false;
    for (auto b : m) any |= (b != 0);
    if (!any) m[0] = 1;
    Tensor t({r, c}, v);
    Tensor s = masked_softmax(t, 1, m);
    for (size_t i = 0; i < r; ++i) {
      float total = 0;
      for (size_t j = 0; j < c; ++j) {
        CHECK(s(i, j) >= 0.0f);
        if (!m[j]) CHECK(s(i, j) == 0.0f);
        total += s(i, j);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("maxpool examples") {
  Tensor t({3}, {1, 5, 3});
  CHECK(maxpool(t, 0).item() == doctest::Approx(5));
  MaskVec m{1, 0, 1};
  CHECK(maxpool(t, 0, m).item() == doctest::Approx(3));
  CHECK_THROWS_AS(maxpool(t, 0, MaskVec{0, 0, 0}), std::invalid_argument);

  Tensor p = Tensor::param({3}, {1, 5, 3});
  Tensor out = maxpool(p, 0);
  out.backward();
  CHECK(p.grad() == std::vector<float>{0, 1, 0});
}

TEST_CASE("maxpool ties route to the lowest index") {
  Tensor p = Tensor::param({3}, {5, 5, 2});
  maxpool(p, 0).backward();
  CHECK(p.grad() == std::vector<float>{1, 0, 0});
}

TEST_CASE("cosine") {
  Tensor v({3}, {1, 2, 3});
  Tensor nv({3}, {-1, -2, -3});
  CHECK(cosine(v, v).item() == doctest::Approx(1.0));
  CHECK(cosine(v, nv).item() == doctest::Approx(-1.0));
  Tensor e1({2}, {1, 0}), e2({2}, {0, 1});
  CHECK(cosine(e1, e2).item() == doctest::Approx(0.0));
  Tensor z = Tensor::zeros({3});
  CHECK(cosine(v, z).item() == 0.0f);
  Tensor w({2}, {1, 2});
  CHECK_THROWS_AS(cosine(v, w), std::invalid_argument);
  // symmetry is exact
  Tensor u({3}, {0.3f, -1.2f, 2.5f});
  CHECK(cosine(u, v).item() == cosine(v, u).item());
}

TEST_CASE("cosine_matrix matches scalar cosine") {
  std::mt19937_64 eng(11);
  std::uniform_real_distribution<double> dist(-2, 2);
  size_t p = 3, q = 4, d = 5;
  std::vector<double> av(p * d), bv(q * d);
  for (auto& x : av) x = dist(eng);
  for (auto& x : bv) x = dist(eng);
  DTensor A({p, d}, av), B({q, d}, bv);
  DTensor M = cosine_matrix(A, B);
  for (size_t i = 0; i < p; ++i)
    for (size_t j = 0; j < q; ++j) {
      DTensor u = slice(A, 0, i, 1);
      DTensor v = slice(B, 0, j, 1);
      double ref = cosine(reshape(u, {d}), reshape(v, {d})).item();
      CHECK(M(i, j) == doctest::Approx(ref).epsilon(1e-12));
      CHECK(M(i, j) >= -1.0 - 1e-12);
      CHECK(M(i, j) <= 1.0 + 1e-12);
    }
}

TEST_CASE("backward examples") {
  SUBCASE("quadratic") {
    Tensor w = Tensor::param({2}, {1, 2});
    Tensor loss = sum(mul(w, w));
    loss.backward();
    CHECK(w.grad()[0] == doctest::Approx(2));
    CHECK(w.grad()[1] == doctest::Approx(4));
  }
  SUBCASE("unused parameter keeps zero grad") {
    Tensor w = Tensor::param({2}, {1, 2});
    Tensor unused = Tensor::param({2}, {5, 6});
    Tensor loss = sum(mul(w, w));
    loss.backward();
    unused.mutable_grad();
    CHECK(unused.grad() == std::vector<float>{0, 0});
  }
  SUBCASE("sigmoid at zero") {
    Tensor x = Tensor::param({}, {0});
    sigmoid(x).backward();
    CHECK(x.grad()[0] == doctest::Approx(0.25));
  }
  SUBCASE("non-scalar loss is an error") {
    Tensor w = Tensor::param({2}, {1, 2});
    CHECK_THROWS_AS(mul(w, w).backward(), std::invalid_argument);
  }
}

TEST_CASE("each tape node contributes exactly once") {
  // loss = 2 * sum(x), built by using x twice: grad must be exactly 2.
  Tensor x = Tensor::param({4}, {0.1f, -0.5f, 2.0f, 3.0f});
  Tensor loss = add(sum(x), sum(x));
  loss.backward();
  for (float g : x.grad()) CHECK(g == 2.0f);
}

TEST_CASE("grad accumulates additively across multiple uses") {
  Tensor x = Tensor::param({2}, {3, 4});
  Tensor loss = sum(mul(x, x));  // x used twice in one op
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(6));
  CHECK(x.grad()[1] == doctest::Approx(8));
}

TEST_CASE("grad_check: tanh of linear map") {
  std::mt19937_64 eng(3);
  std::uniform_real_distribution<double> dist(-1, 1);
  std::vector<double> wv(6), xv(2);
  for (auto& v : wv) v = dist(eng);
  for (auto& v : xv) v = dist(eng);
  DTensor W = DTensor::param({3, 2}, wv);
  DTensor x = DTensor::param({2, 1}, xv);
  auto f = [&]() { return sum(tanh_t(matmul(W, x))); };
  auto res = grad_check<double>(f, {W, x});
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("grad_check: linear function is near machine eps") {
  DTensor w = DTensor::param({4}, {0.5, -1.5, 2.0, 0.25});
  DTensor c({4}, {1.0, 2.0, 3.0, 4.0});
  auto f = [&]() { return sum(mul(w, c)); };
  auto res = grad_check<double>(f, {w});
  CHECK(res.max_rel_err < 1e-9);
}

TEST_CASE("grad_check: random composed graphs stay under 1e-4") {
  std::mt19937_64 eng(17);
  std::uniform_real_distribution<double> dist(-0.8, 0.8);
  for (int rep = 0; rep < 10; ++rep) {
    size_t p = 2 + eng() % 3, q = 2 + eng() % 3, r = 2 + eng() % 3;
    auto rand_vec = [&](size_t n) {
      std::vector<double> v(n);
      for (auto& x : v) x = dist(eng);
      return v;
    };
    DTensor A = DTensor::param({p, q}, rand_vec(p * q));
    DTensor B = DTensor::param({q, r}, rand_vec(q * r));
    DTensor C = DTensor::param({p, r}, rand_vec(p * r));
    auto f = [&]() {
      DTensor m = matmul(A, B);
      DTensor t = tanh_t(add(m, C));
      DTensor s = sigmoid(mul(t, C));
      DTensor cc = concat(1, {s, t});
      DTensor sm = masked_softmax(cc, 1);
      DTensor mp = maxpool(exp_t(scale(sm, 0.5)), 0);
      return sum(mul(mp, mp));
    };
    auto res = grad_check<double>(f, {A, B, C});
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("slice and transpose round trips") {
  DTensor a = DTensor::param({3, 4}, std::vector<double>{0, 1, 2,  3, 4,  5,
                                                         6, 7, 8, 9, 10, 11});
  DTensor t = transpose(transpose(a));
  CHECK(t.values() == a.values());
  DTensor s = slice(a, 1, 1, 2);
  CHECK(s.shape() == Shape{3, 2});
  CHECK(s(0, 0) == 1);
  CHECK(s(2, 1) == 10);
  auto f = [&]() { return sum(mul(slice(a, 0, 1, 2), slice(a, 0, 0, 2))); };
  auto res = grad_check<double>(f, {a});
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("bce values") {
  Tensor half = Tensor::scalar(0.5f);
  CHECK(bce(half, 1.0f).item() == doctest::Approx(std::log(2.0)));
  CHECK(bce(half, 0.0f).item() == doctest::Approx(std::log(2.0)));
  Tensor p9 = Tensor::scalar(0.9f);
  CHECK(bce(p9, 0.0f).item() == doctest::Approx(-std::log(0.1)).epsilon(1e-5));
  Tensor near = Tensor::scalar(0.999999f);
  CHECK(bce(near, 1.0f).item() == doctest::Approx(0.0).epsilon(1e-4));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "triplenet/attention.hpp"
#include "triplenet/gradcheck.hpp"
#include "triplenet/layers.hpp"

using namespace triplenet;
using D = TensorT<double>;

namespace {
D random_mat(std::mt19937_64& eng, size_t r, size_t c, bool param = false) {
  std::uniform_real_distribution<double> dist(-1, 1);
  std::vector<double> v(r * c);
  for (auto& x : v) x = dist(eng);
  return param ? D::param({r, c}, std::move(v)) : D({r, c}, std::move(v));
}
}  // namespace

TEST_CASE("mask_rows zeroes padded rows and nothing else") {
  D t({3, 2}, {1, 2, 3, 4, 5, 6});
  D out = mask_rows(t, MaskVec{1, 0, 1});
  CHECK(out(0, 1) == 2);
  CHECK(out(1, 0) == 0);
  CHECK(out(1, 1) == 0);
  CHECK(out(2, 0) == 5);
}

TEST_CASE("baf: singleton sequences give full attention and a residual") {
  D p({1, 3}, {1.0, 2.0, 3.0});
  D q({1, 3}, {0.5, -1.0, 2.0});
  D w = D::zeros({3, 3});
  auto out = baf(p, q, w, {1}, {1});
  CHECK(out.att_pq(0, 0) == doctest::Approx(1.0));
  CHECK(out.att_qp(0, 0) == doctest::Approx(1.0));
  for (size_t k = 0; k < 3; ++k) {
    CHECK(out.p_new(0, k) == doctest::Approx(p(0, k) - q(0, k)));
    CHECK(out.q_new(0, k) == doctest::Approx(q(0, k) - p(0, k)));
  }
}

TEST_CASE("baf: zero bilinear map attends uniformly over valid positions") {
  std::mt19937_64 eng(3);
  D p = random_mat(eng, 2, 4);
  D q = random_mat(eng, 3, 4);
  D w = D::zeros({4, 4});
  MaskVec qm{1, 1, 0};
  auto out = baf(p, q, w, {1, 1}, qm);
  // similarity all zero -> softmax uniform over the 2 valid q rows
  for (size_t i = 0; i < 2; ++i) {
    CHECK(out.att_pq(i, 0) == doctest::Approx(0.5));
    CHECK(out.att_pq(i, 1) == doctest::Approx(0.5));
    CHECK(out.att_pq(i, 2) == doctest::Approx(0.0));
    for (size_t k = 0; k < 4; ++k)
      CHECK(out.p_new(i, k) == doctest::Approx(p(i, k) - 0.5 * (q(0, k) + q(1, k))));
  }
}

TEST_CASE("baf: attention rows are distributions; masked columns get no mass") {
  std::mt19937_64 eng(7);
  for (int rep = 0; rep < 20; ++rep) {
    size_t lp = 1 + eng() % 5, lq = 1 + eng() % 5, d = 1 + eng() % 6;
    D p = random_mat(eng, lp, d);
    D q = random_mat(eng, lq, d);
    D w = random_mat(eng, d, d);
    MaskVec pm(lp, 1), qm(lq, 1);
    if (lp > 1) pm[eng() % lp] = 0;
    if (lq > 1) qm[eng() % lq] = 0;
    auto out = baf(p, q, w, pm, qm);
    for (size_t i = 0; i < lp; ++i) {
      double row = 0;
      for (size_t j = 0; j < lq; ++j) {
        row += out.att_pq(i, j);
        if (!qm[j]) CHECK(out.att_pq(i, j) == 0.0);
        CHECK(out.att_pq(i, j) >= 0.0);
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
    }
    for (size_t j = 0; j < lq; ++j) {
      double row = 0;
      for (size_t i = 0; i < lp; ++i) {
        row += out.att_qp(j, i);
        if (!pm[i]) CHECK(out.att_qp(j, i) == 0.0);
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
    }
    // padded output rows are zero
    for (size_t i = 0; i < lp; ++i)
      if (!pm[i])
        for (size_t k = 0; k < d; ++k) CHECK(out.p_new(i, k) == 0.0);
  }
}

TEST_CASE("baf: appending masked rows does not change the valid outputs") {
  std::mt19937_64 eng(11);
  D p = random_mat(eng, 2, 3);
  D q = random_mat(eng, 2, 3);
  D w = random_mat(eng, 3, 3);
  auto base = baf(p, q, w, {1, 1}, {1, 1});
  D q_ext = concat(0, {q, D::zeros({2, 3})});
  auto ext = baf(p, q_ext, w, {1, 1}, {1, 1, 0, 0});
  for (size_t i = 0; i < 2; ++i)
    for (size_t k = 0; k < 3; ++k) {
      CHECK(ext.p_new(i, k) == doctest::Approx(base.p_new(i, k)).epsilon(1e-12));
      CHECK(ext.q_new(i, k) == doctest::Approx(base.q_new(i, k)).epsilon(1e-12));
    }
}

TEST_CASE("baf: fully-masked side or dim mismatch is an error") {
  D p = D::zeros({2, 3});
  D q = D::zeros({2, 3});
  D w = D::zeros({3, 3});
  CHECK_THROWS_AS(baf(p, q, w, {0, 0}, {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(baf(p, q, w, {1, 1}, {0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(baf(p, D::zeros({2, 4}), w, {1, 1}, {1, 1}), std::invalid_argument);
}

TEST_CASE("baf: gradients match central differences") {
  std::mt19937_64 eng(13);
  D p = random_mat(eng, 3, 4, true);
  D q = random_mat(eng, 2, 4, true);
  D w = random_mat(eng, 4, 4, true);
  MaskVec pm{1, 0, 1}, qm{1, 1};
  auto f = [&]() {
    auto out = baf(p, q, w, pm, qm);
    return sum(mul(out.p_new, out.p_new));
  };
  auto res = grad_check<double>(f, {p, q, w});
  CHECK(res.max_rel_err < 1e-4);
  auto g = [&]() {
    auto out = baf(p, q, w, pm, qm);
    return add(sum(out.q_new), sum(mul(out.att_pq, out.att_pq)));
  };
  auto res2 = grad_check<double>(g, {p, q, w});
  CHECK(res2.max_rel_err < 1e-4);
}

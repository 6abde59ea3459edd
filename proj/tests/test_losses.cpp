#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hgrec/losses.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace hgrec;

namespace {

Matrix rowvec(std::initializer_list<double> xs) {
    Matrix m(1, static_cast<int>(xs.size()));
    int c = 0;
    for (double x : xs) m(0, c++) = x;
    return m;
}

double nce_value(const Matrix& anchor, const Matrix& positive,
                 const Matrix& negatives, double tau) {
    Tape t;
    ContrastivePair pair{t.leaf(anchor), t.leaf(positive), t.leaf(negatives),
                         tau};
    return t.value(info_nce(t, pair))(0, 0);
}

}  // namespace

TEST_CASE("one negative as similar as the positive gives ln 2 at any tau") {
    const Matrix anchor = rowvec({1.0, 0.0});
    const Matrix positive = rowvec({0.8, 0.6});
    Matrix negative = positive;  // same cosine to the anchor
    for (double tau : {0.05, 0.2, 1.0})
        CHECK(nce_value(anchor, positive, negative, tau) ==
              doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("very large tau flattens the softmax toward ln(1+N)") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> dist;
    Matrix anchor(1, 6), positive(1, 6), negatives(9, 6);
    for (Eigen::Index i = 0; i < 6; ++i) {
        anchor(0, i) = dist(rng);
        positive(0, i) = dist(rng);
    }
    for (Eigen::Index i = 0; i < negatives.size(); ++i) negatives(i) = dist(rng);
    CHECK(nce_value(anchor, positive, negatives, 1e7) ==
          doctest::Approx(std::log(10.0)).epsilon(1e-5));
}

TEST_CASE("cosine similarity makes the loss scale invariant") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> dist;
    Matrix anchor(1, 4), positive(1, 4), negatives(3, 4);
    for (Eigen::Index i = 0; i < 4; ++i) {
        anchor(0, i) = dist(rng);
        positive(0, i) = dist(rng);
    }
    for (Eigen::Index i = 0; i < negatives.size(); ++i) negatives(i) = dist(rng);
    const double base = nce_value(anchor, positive, negatives, 0.2);
    CHECK(nce_value(10.0 * anchor, positive, negatives, 0.2) ==
          doctest::Approx(base).epsilon(1e-12));
    CHECK(nce_value(anchor, 0.01 * positive, 100.0 * negatives, 0.2) ==
          doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("loss grows as a negative rotates toward the anchor") {
    const Matrix anchor = rowvec({1.0, 0.0});
    const Matrix positive = rowvec({0.6, 0.8});
    double prev = -1.0;
    for (double s : {-0.5, 0.0, 0.5, 0.9}) {
        Matrix neg(1, 2);
        neg << s, std::sqrt(1.0 - s * s);
        const double loss = nce_value(anchor, positive, neg, 0.2);
        CHECK(loss > prev);
        prev = loss;
    }
}

TEST_CASE("zero negatives contribute zero loss and zero gradient") {
    Tape t;
    Var anchor = t.leaf(rowvec({1.0, 2.0}));
    ContrastivePair pair{anchor, t.leaf(rowvec({0.5, -1.0})),
                         t.leaf(Matrix(0, 2)), 0.2};
    Var loss = info_nce(t, pair);
    CHECK(t.value(loss)(0, 0) == 0.0);
    t.backward(loss);
    CHECK(t.grad(anchor).norm() == 0.0);
}

TEST_CASE("non-positive temperature is rejected") {
    Tape t;
    ContrastivePair pair{t.leaf(rowvec({1.0, 0.0})), t.leaf(rowvec({0.0, 1.0})),
                         t.leaf(Matrix::Identity(2, 2)), 0.0};
    CHECK_THROWS_AS(info_nce(t, pair), std::invalid_argument);
    pair.temperature = -0.1;
    CHECK_THROWS_AS(info_nce(t, pair), std::invalid_argument);
}

TEST_CASE("info_nce gradient matches finite differences") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> dist;
    for (int rep = 0; rep < 4; ++rep) {
        const int d = 3 + rep;
        Matrix anchor(1, d), positive(1, d), negatives(4, d);
        for (Eigen::Index i = 0; i < d; ++i) {
            anchor(0, i) = dist(rng);
            positive(0, i) = dist(rng);
        }
        for (Eigen::Index i = 0; i < negatives.size(); ++i)
            negatives(i) = dist(rng);

        Tape t;
        Var va = t.leaf(anchor), vp = t.leaf(positive), vn = t.leaf(negatives);
        Var loss = info_nce(t, ContrastivePair{va, vp, vn, 0.3});
        t.backward(loss);
        CHECK(oracle::max_rel_error(
                  t.grad(va),
                  oracle::finite_difference(
                      [&](const Matrix& m) {
                          return nce_value(m, positive, negatives, 0.3);
                      },
                      anchor)) < 1e-4);
        CHECK(oracle::max_rel_error(
                  t.grad(vn),
                  oracle::finite_difference(
                      [&](const Matrix& m) {
                          return nce_value(anchor, positive, m, 0.3);
                      },
                      negatives)) < 1e-4);
    }
}

TEST_CASE("bpr hand value: margin 3 costs -ln sigmoid(3)") {
    Tape t;
    Var pos = t.leaf(Matrix::Constant(1, 1, 4.0));
    Var neg = t.leaf(Matrix::Constant(1, 1, 1.0));
    CHECK(t.value(bpr_loss(t, pos, neg))(0, 0) ==
          doctest::Approx(std::log(1.0 + std::exp(-3.0))).epsilon(1e-12));
}

TEST_CASE("bpr averages over the batch and matches finite differences") {
    Matrix ps(3, 1), ns(3, 1);
    ps << 1.0, -0.5, 2.0;
    ns << 0.0, 0.5, 2.0;
    Tape t;
    Var vp = t.leaf(ps), vn = t.leaf(ns);
    Var loss = bpr_loss(t, vp, vn);
    double manual = 0.0;
    for (int i = 0; i < 3; ++i)
        manual += std::log(1.0 + std::exp(-(ps(i, 0) - ns(i, 0))));
    CHECK(t.value(loss)(0, 0) == doctest::Approx(manual / 3.0).epsilon(1e-12));

    t.backward(loss);
    CHECK(oracle::max_rel_error(
              t.grad(vp),
              oracle::finite_difference(
                  [&](const Matrix& m) {
                      Tape t2;
                      return t2.value(
                          bpr_loss(t2, t2.leaf(m), t2.leaf(ns)))(0, 0);
                  },
                  ps)) < 1e-4);
}

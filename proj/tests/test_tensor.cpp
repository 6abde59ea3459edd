#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hgrec/tensor.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace hgrec;

namespace {

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng,
                     double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
    return m;
}

// FD check for d(loss)/d(x) where `build` maps the leaf to a 1x1 loss.
double fd_check(const Matrix& x,
                const std::function<Var(Tape&, Var)>& build) {
    Tape tape;
    Var leaf = tape.leaf(x);
    Var loss = build(tape, leaf);
    REQUIRE(tape.value(loss).size() == 1);
    tape.backward(loss);
    const Matrix analytic = tape.grad(leaf);
    const Matrix numeric = oracle::finite_difference(
        [&build](const Matrix& m) {
            Tape t;
            Var l = t.leaf(m);
            return t.value(build(t, l))(0, 0);
        },
        x);
    return oracle::max_rel_error(analytic, numeric);
}

}  // namespace

TEST_CASE("values of basic kernels") {
    Tape t;
    Matrix a(2, 2), b(2, 2);
    a << 1, 2, 3, 4;
    b << 5, 6, 7, 8;
    Var va = t.leaf(a), vb = t.leaf(b);
    CHECK(t.value(t.add(va, vb))(1, 1) == 12.0);
    CHECK(t.value(t.sub(va, vb))(0, 0) == -4.0);
    CHECK(t.value(t.scale(va, 2.5))(0, 1) == 5.0);
    CHECK(t.value(t.hadamard(va, vb))(1, 0) == 21.0);
    CHECK(t.value(t.matmul(va, vb))(0, 0) == doctest::Approx(19.0));
    CHECK(t.value(t.transpose(va))(0, 1) == 3.0);
    CHECK(t.value(t.sum(va))(0, 0) == 10.0);
    CHECK(t.value(t.mean(va))(0, 0) == 2.5);
    CHECK(t.value(t.dot(va, vb))(0, 0) == doctest::Approx(70.0));
    CHECK(t.value(t.hcat(va, vb)).cols() == 4);
    CHECK(t.value(t.vcat(va, vb)).rows() == 4);
}

TEST_CASE("shape mismatches throw with kernel name") {
    Tape t;
    Var a = t.leaf(Matrix::Zero(2, 3));
    Var b = t.leaf(Matrix::Zero(3, 2));
    CHECK_THROWS_WITH_AS(t.add(a, b),
                         doctest::Contains("add"), std::invalid_argument);
    CHECK_THROWS_AS(t.matmul(a, a), std::invalid_argument);
    CHECK_THROWS_AS(t.dot(a, b), std::invalid_argument);
}

TEST_CASE("finite differences across all differentiable kernels") {
    std::mt19937_64 rng(42);
    const double tol = 1e-4;

    for (int rep = 0; rep < 3; ++rep) {
        const int r = 2 + rep, c = 3 + rep;
        Matrix x = random_matrix(r, c, rng);
        Matrix w = random_matrix(r, c, rng);
        Matrix m2 = random_matrix(c, 2, rng);

        CHECK(fd_check(x, [&](Tape& t, Var v) {
                  return t.dot(t.add(v, t.leaf(w)), t.leaf(w));
              }) < tol);
        CHECK(fd_check(x, [&](Tape& t, Var v) {
                  return t.dot(t.sub(v, t.leaf(w)), t.leaf(w));
              }) < tol);
        CHECK(fd_check(x, [&](Tape& t, Var v) {
                  return t.sum(t.scale(v, -1.7));
              }) < tol);
        CHECK(fd_check(x, [&](Tape& t, Var v) {
                  return t.dot(t.hadamard(v, t.leaf(w)), t.leaf(w));
              }) < tol);
        CHECK(fd_check(x, [&](Tape& t, Var v) {
                  return t.sum(t.matmul(v, t.leaf(m2)));
              }) < tol);
        CHECK(fd_check(x, [&](Tape& t, Var v) {
                  return t.dot(t.transpose(v), t.leaf(w.transpose()));
              }) < tol);
        CHECK(fd_check(x, [&](Tape& t, Var v) {
                  return t.sum(t.hcat(v, t.leaf(w)));
              }) < tol);
        Matrix wv = random_matrix(2 * r, c, rng);
        CHECK(fd_check(x, [&](Tape& t, Var v) {
                  return t.dot(t.vcat(v, t.leaf(w)), t.leaf(wv));
              }) < tol);
        CHECK(fd_check(x, [&](Tape& t, Var v) {
                  return t.sum(t.gather_rows(v, {0, r - 1, 0}));
              }) < tol);
        CHECK(fd_check(x, [&](Tape& t, Var v) { return t.mean(t.exp(v)); }) <
              tol);
        CHECK(fd_check((x.array().abs() + 0.5).matrix(),
                       [&](Tape& t, Var v) { return t.mean(t.log(v)); }) <
              tol);
        CHECK(fd_check(x, [&](Tape& t, Var v) { return t.sum(t.tanh(v)); }) <
              tol);
        CHECK(fd_check(x, [&](Tape& t, Var v) {
                  return t.sum(t.softplus(v));
              }) < tol);
        CHECK(fd_check(x, [&](Tape& t, Var v) {
                  return t.dot(t.l2_normalize_rows(v), t.leaf(w));
              }) < tol);
        CHECK(fd_check(x, [&](Tape& t, Var v) {
                  return t.sum(t.rowwise_dot(v, t.leaf(w)));
              }) < tol);
        Matrix bias = random_matrix(1, c, rng);
        CHECK(fd_check(x, [&](Tape& t, Var v) {
                  return t.sum(t.add_rowvec(v, t.leaf(bias)));
              }) < tol);

        Matrix vec = random_matrix(c, 1, rng);
        Matrix wsm = random_matrix(c, 1, rng);
        Matrix wlsm = random_matrix(c, 1, rng);
        CHECK(fd_check(vec, [&](Tape& t, Var v) {
                  return t.dot(t.softmax(v), t.leaf(wsm));
              }) < tol);
        CHECK(fd_check(vec, [&](Tape& t, Var v) {
                  return t.dot(t.log_softmax(v), t.leaf(wlsm));
              }) < tol);
    }
}

TEST_CASE("clamp passes gradient inside and blocks outside") {
    Matrix x(1, 3);
    x << -2.0, 0.3, 5.0;
    Tape t;
    Var v = t.leaf(x);
    Var c = t.clamp(v, 0.0, 1.0);
    CHECK(t.value(c)(0, 0) == 0.0);
    CHECK(t.value(c)(0, 1) == 0.3);
    CHECK(t.value(c)(0, 2) == 1.0);
    t.backward(t.sum(c));
    CHECK(t.grad(v)(0, 0) == 0.0);
    CHECK(t.grad(v)(0, 1) == 1.0);
    CHECK(t.grad(v)(0, 2) == 0.0);
}

TEST_CASE("l2 row normalization maps zero rows to zero with zero grad") {
    Matrix x(2, 3);
    x << 0, 0, 0, 3, 0, 4;
    Tape t;
    Var v = t.leaf(x);
    Var n = t.l2_normalize_rows(v);
    CHECK(t.value(n).row(0).norm() == 0.0);
    CHECK(t.value(n)(1, 0) == doctest::Approx(0.6));
    CHECK(t.value(n)(1, 2) == doctest::Approx(0.8));
    t.backward(t.sum(n));
    CHECK(t.grad(v).row(0).norm() == 0.0);
}

TEST_CASE("softmax and log_softmax agree and are shift invariant") {
    std::mt19937_64 rng(7);
    Matrix x = random_matrix(6, 1, rng, 3.0);
    Tape t;
    Var p = t.softmax(t.leaf(x));
    Var lp = t.log_softmax(t.leaf(x));
    CHECK(t.value(p).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i < 6; ++i)
        CHECK(std::log(t.value(p)(i, 0)) ==
              doctest::Approx(t.value(lp)(i, 0)).epsilon(1e-10));
    Var shifted = t.softmax(t.leaf((x.array() + 500.0).matrix()));
    for (int i = 0; i < 6; ++i)
        CHECK(t.value(shifted)(i, 0) ==
              doctest::Approx(t.value(p)(i, 0)).epsilon(1e-12));
}

TEST_CASE("gaussian log density matches the closed form") {
    Tape t;
    Var mu = t.leaf(Matrix::Constant(1, 1, 0.4));
    Var ls = t.leaf(Matrix::Constant(1, 1, -0.3));
    const double x = 0.9;
    Var lp = t.gaussian_log_density(mu, ls, x);
    const double sigma = std::exp(-0.3);
    const double want = -0.5 * std::pow((x - 0.4) / sigma, 2) -
                        std::log(sigma) - 0.5 * std::log(2.0 * M_PI);
    CHECK(t.value(lp)(0, 0) == doctest::Approx(want).epsilon(1e-12));

    t.backward(lp);
    const double z = (x - 0.4) / (sigma * sigma);
    CHECK(t.grad(mu)(0, 0) == doctest::Approx(z).epsilon(1e-10));
}

TEST_CASE("gradients accumulate through shared subexpressions") {
    // loss = sum(y) + sum(y) with y = 2x must give d/dx = 4
    Tape t;
    Var x = t.leaf(Matrix::Constant(2, 2, 1.5));
    Var y = t.scale(x, 2.0);
    Var loss = t.add(t.sum(y), t.sum(y));
    t.backward(loss);
    CHECK(t.grad(x)(0, 0) == doctest::Approx(4.0));
}

TEST_CASE("backward requires a scalar root and zero_grad resets") {
    Tape t;
    Var x = t.leaf(Matrix::Ones(2, 2));
    CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
    Var s = t.sum(x);
    t.backward(s);
    CHECK(t.grad(x)(0, 0) == 1.0);
    t.zero_grad();
    t.backward(s);
    CHECK(t.grad(x)(0, 0) == 1.0);  // not 2.0: zero_grad cleared the buffer
}

TEST_CASE("bigger composite graph against finite differences") {
    std::mt19937_64 rng(123);
    Matrix x = random_matrix(4, 3, rng);
    Matrix w1 = random_matrix(3, 5, rng);
    Matrix w2 = random_matrix(5, 1, rng);
    const double err = fd_check(x, [&](Tape& t, Var v) {
        Var h = t.tanh(t.matmul(v, t.leaf(w1)));
        Var o = t.softplus(t.matmul(h, t.leaf(w2)));
        return t.mean(t.hadamard(o, o));
    });
    CHECK(err < 1e-4);
}

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "hbg/autodiff.hpp"
#include "hbg/rng.hpp"
#include "oracles.hpp"

using namespace hbg;
using ad::Var;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    Rng r(seed);
    std::vector<double> v(n);
    for (double& x : v) x = (r.uniform() * 2.0 - 1.0) * scale;
    return v;
}

using Builder = std::function<Var(ad::Tape&, Var x)>;

// Checks d/dx of sum(weights * build(x)) for an r x c input against finite differences.
double check_op(int rows, int cols, const Builder& build, std::uint64_t seed = 1) {
    const auto x0 = random_vec(static_cast<std::size_t>(rows * cols), seed);
    std::vector<double> w;
    auto f = [&](const std::vector<double>& x) {
        ad::Tape tape;
        Var out = build(tape, tape.variable(rows, cols, x));
        if (w.empty()) w = random_vec(out.value().size(), seed + 99);
        return ad::sum(ad::mul(out, tape.constant(out.rows(), out.cols(), w))).item();
    };
    f(x0);
    ad::Tape tape;
    Var x = tape.variable(rows, cols, x0);
    Var out = build(tape, x);
    Var loss = ad::sum(ad::mul(out, tape.constant(out.rows(), out.cols(), w)));
    tape.backward(loss);
    const std::vector<double> g(x.grad().begin(), x.grad().end());
    std::vector<std::size_t> coords(x0.size());
    std::iota(coords.begin(), coords.end(), 0);
    return oracle::finite_diff(f, x0, g, coords).max_rel;
}

}  // namespace

TEST_CASE("elementary gradients") {
    CHECK(check_op(3, 4, [](ad::Tape&, Var x) { return ad::sigmoid(x); }) < 1e-6);
    CHECK(check_op(3, 4, [](ad::Tape&, Var x) { return ad::silu(x); }) < 1e-6);
    CHECK(check_op(3, 4, [](ad::Tape&, Var x) { return ad::square(x); }) < 1e-6);
    CHECK(check_op(3, 4, [](ad::Tape&, Var x) { return ad::exp(x); }) < 1e-6);
    CHECK(check_op(3, 4, [](ad::Tape&, Var x) { return ad::scale(ad::shift(x, 2.0), -3.0); }) < 1e-6);
    CHECK(check_op(3, 4, [](ad::Tape&, Var x) { return ad::mean(ad::mul(x, x)); }) < 1e-6);
    CHECK(check_op(3, 4, [](ad::Tape& t, Var x) { return ad::add_row(x, t.constant(1, 4, {1, 2, 3, 4})); }) < 1e-6);
    CHECK(check_op(3, 4, [](ad::Tape& t, Var x) { return ad::matmul(x, t.constant(4, 2, random_vec(8, 5))); }) < 1e-6);
    CHECK(check_op(4, 2, [](ad::Tape& t, Var x) { return ad::matmul(t.constant(3, 4, random_vec(12, 6)), x); }) < 1e-6);
    CHECK(check_op(4, 3, [](ad::Tape&, Var x) { return ad::gather_rows(x, {3, 0, 0, 2, 3}); }) < 1e-6);
    CHECK(check_op(5, 2, [](ad::Tape&, Var x) { return ad::segment_mean(x, {0, 2, 2, 5}); }) < 1e-6);
    CHECK(check_op(5, 1, [](ad::Tape&, Var x) { return ad::prefix_mean(x, {0, 3, 3, 1, 4}); }) < 1e-6);
    CHECK(check_op(5, 2, [](ad::Tape&, Var x) { return ad::concat_rows(ad::slice_rows(x, 1, 3), x); }) < 1e-6);
}

TEST_CASE("normalization gradients") {
    const auto gamma = random_vec(3, 3, 1.0), beta = random_vec(3, 4);
    for (auto mode : {ad::NormMode::batch_train, ad::NormMode::layer, ad::NormMode::batch_eval}) {
        ad::NormStats running{{0.1, -0.2, 0.3}, {1.5, 0.7, 2.0}};
        CHECK(check_op(6, 3, [&](ad::Tape& t, Var x) {
                  ad::NormStats batch;
                  return ad::normalize(x, t.constant(1, 3, gamma), t.constant(1, 3, beta), mode, &running, &batch);
              }) < 1e-5);
    }
}

TEST_CASE("log_softmax_pick") {
    std::vector<ad::PickStep> steps{{{0, 2, -1}, 1, 1.0}, {{1, -2}, 0, 0.5}, {{3}, 0, 1.0}};
    CHECK(check_op(4, 1, [&](ad::Tape& t, Var x) { return ad::log_softmax_pick(x, t.constant(2, 1, {0.3, -0.7}), steps); }) <
          1e-6);

    ad::Tape tape;
    Var logits = tape.constant(3, 1, {1.0, 2.0, 3.0});
    Var out = ad::log_softmax_pick(logits, Var{}, {{{0, 1, 2}, 2, 1.0}});
    const double expected = 3.0 - std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    CHECK(out.item() == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("sum of squares gradient is 2w, constants give zero") {
    ad::Tape tape;
    const std::vector<double> w0{1.5, -2.0, 0.25};
    Var w = tape.param(1, 3, w0, 0);
    tape.backward(ad::sum(ad::square(w)));
    for (int i = 0; i < 3; ++i) CHECK(w.grad()[i] == 2 * w0[i]);

    ad::Tape t2;
    Var p = t2.param(1, 2, {1.0, 2.0}, 0);
    Var c = ad::shift(ad::scale(p, 0.0), 5.0);
    t2.backward(ad::sum(c));
    const auto g = t2.param_grads(1);
    CHECK(g[0] == std::vector<double>{0.0, 0.0});
}

TEST_CASE("repeated backward accumulates until zero_grad") {
    ad::Tape tape;
    Var w = tape.param(1, 1, {3.0}, 0);
    Var loss = ad::square(w);
    tape.backward(loss);
    tape.backward(loss);
    CHECK(w.grad()[0] == 12.0);
    tape.zero_grad();
    tape.backward(loss);
    CHECK(w.grad()[0] == 6.0);
}

TEST_CASE("two-layer MLP against finite differences") {
    const int n = 7, in = 5, hid = 6;
    const auto xs = random_vec(n * in, 10), ys = random_vec(n, 11);
    const std::size_t p1 = in * hid, p2 = hid, p3 = hid;
    auto loss_of = [&](ad::Tape& tape, const std::vector<double>& p, std::vector<Var>* leaves) {
        Var w1 = tape.param(in, hid, {p.begin(), p.begin() + p1}, 0);
        Var b1 = tape.param(1, hid, {p.begin() + p1, p.begin() + p1 + p2}, 1);
        Var w2 = tape.param(hid, 1, {p.begin() + p1 + p2, p.end()}, 2);
        if (leaves) *leaves = {w1, b1, w2};
        Var h = ad::silu(ad::add_row(ad::matmul(tape.constant(n, in, xs), w1), b1));
        return ad::mean(ad::square(ad::sub(ad::matmul(h, w2), tape.constant(n, 1, ys))));
    };
    const auto p0 = random_vec(p1 + p2 + p3, 12);
    ad::Tape tape;
    Var loss = loss_of(tape, p0, nullptr);
    tape.backward(loss);
    std::vector<double> g;
    for (const auto& t : tape.param_grads(3)) g.insert(g.end(), t.begin(), t.end());
    std::vector<std::size_t> coords(p0.size());
    std::iota(coords.begin(), coords.end(), 0);
    const auto r = oracle::finite_diff(
        [&](const std::vector<double>& p) {
            ad::Tape t;
            return loss_of(t, p, nullptr).item();
        },
        p0, g, coords);
    CHECK(r.max_rel < 1e-4);
}

#include <doctest.h>

#include <cmath>

#include "dislab/rng.hpp"
#include "dislab/tape.hpp"
#include "oracles.hpp"

using dislab::Rng;
using dislab::Shape;
using dislab::Tape;
using dislab::Tensor;
using dislab::Var;

TEST_CASE("matmul by identity is a no-op") {
    Tape tape;
    Tensor eye = Tensor::zeros({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    Var I = tape.constant(eye);
    Var v = tape.constant(Tensor::from({3, 1}, {1.5, -2.0, 0.25}));
    Var out = tape.matmul(I, v);
    CHECK(tape.val(out)[0] == 1.5);
    CHECK(tape.val(out)[1] == -2.0);
    CHECK(tape.val(out)[2] == 0.25);
}

TEST_CASE("leaky_relu at -1 with slope 0.2") {
    Tape tape;
    Var x = tape.constant(Tensor::scalar(-1.0));
    CHECK(tape.val(tape.leaky_relu(x, 0.2))[0] == -0.2);
}

TEST_CASE("sum of abs") {
    Tape tape;
    Var x = tape.constant(Tensor::from({2, 2}, {1.0, -2.0, 0.0, 3.0}));
    CHECK(tape.val(tape.sum(tape.abs(x)))[0] == 6.0);
}

TEST_CASE("shape mismatch names the primitive and both shapes") {
    Tape tape;
    Var a = tape.constant(Tensor::zeros({2, 3}));
    Var b = tape.constant(Tensor::zeros({4, 5}));
    try {
        tape.matmul(a, b);
        FAIL("expected a shape error");
    } catch (const dislab::Error& e) {
        std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,5]") != std::string::npos);
    }
    CHECK_THROWS_AS(tape.add(a, b), dislab::Error);
}

TEST_CASE("d/dx x^2 at x=3 is 6") {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(3.0), true);
    Var y = tape.mul(x, x);
    auto grads = tape.backward(y);
    CHECK(grads.at(x)[0] == 6.0);
}

TEST_CASE("non-scalar backward root is rejected") {
    Tape tape;
    Var x = tape.leaf(Tensor::zeros({2, 2}), true);
    CHECK_THROWS_AS(tape.backward(x), dislab::Error);
}

TEST_CASE("gradient of sum(sigmoid(Wx)) matches finite differences") {
    Rng rng(7);
    Tensor W = rng.normal_tensor({4, 3});
    Tensor x0 = rng.uniform_tensor({3, 1}, -2.0, 2.0);

    auto eval = [&](const std::vector<double>& wflat) {
        Tape tape;
        Var w = tape.constant(Tensor::from({4, 3}, wflat));
        Var x = tape.constant(x0);
        return tape.val(tape.sum(tape.sigmoid(tape.matmul(w, x))))[0];
    };
    auto fd = oracles::central_fd(eval, W.vec());

    Tape tape;
    Var w = tape.leaf(W, true);
    Var x = tape.constant(x0);
    auto grads = tape.backward(tape.sum(tape.sigmoid(tape.matmul(w, x))));
    CHECK(oracles::max_rel_err(grads.at(w).vec(), fd) < 1e-4);
}

namespace {

// Small dense LeakyReLU network used as a gradient test subject.
double mlp_scalar(Tape& tape, const std::vector<Var>& weights, Var x, double slope,
                  bool build_only, Var* out) {
    Var h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        h = tape.matmul(weights[l], h);
        if (l + 1 < weights.size()) h = tape.leaky_relu(h, slope);
    }
    Var y = tape.sum(h);
    if (out) *out = y;
    return build_only ? 0.0 : tape.val(y)[0];
}

} // namespace

TEST_CASE("5-layer leaky_relu MLP gradient matches finite differences") {
    const double slope = 0.2;
    Rng rng(11);
    std::vector<Tensor> weights;
    std::vector<std::size_t> dims = {3, 5, 5, 5, 5, 1};
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
        weights.push_back(rng.normal_tensor({dims[l + 1], dims[l]}, 0.0, 0.6));
    Tensor x0 = rng.uniform_tensor({3, 1}, -2.0, 2.0);

    for (std::size_t l = 0; l < weights.size(); ++l) {
        auto eval = [&](const std::vector<double>& wflat) {
            Tape tape;
            std::vector<Var> ws;
            for (std::size_t k = 0; k < weights.size(); ++k)
                ws.push_back(tape.constant(k == l ? Tensor::from(weights[k].shape(),
                                                                 std::vector<double>(wflat))
                                                  : weights[k]));
            return mlp_scalar(tape, ws, tape.constant(x0), slope, false, nullptr);
        };
        auto fd = oracles::central_fd(eval, weights[l].vec());

        Tape tape;
        std::vector<Var> ws;
        for (std::size_t k = 0; k < weights.size(); ++k) ws.push_back(tape.leaf(weights[k], k == l));
        Var y;
        mlp_scalar(tape, ws, tape.constant(x0), slope, true, &y);
        auto grads = tape.backward(y);
        CHECK(oracles::max_rel_err(grads.at(ws[l]).vec(), fd) < 1e-4);
    }
}

TEST_CASE("every differentiable primitive matches central finite differences") {
    // Random inputs in [-2, 2]; the leaky_relu kink is avoided by keeping
    // inputs away from 0, log by keeping them positive.
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = rng.uniform_tensor({2, 3}, -2.0, 2.0);
        Tensor b = rng.uniform_tensor({2, 3}, -2.0, 2.0);
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (std::fabs(a[i]) < 1e-3) a[i] = 0.5;
            if (std::fabs(b[i]) < 1e-3) b[i] = -0.5;
        }
        Tensor apos = a;
        for (std::size_t i = 0; i < apos.size(); ++i) apos[i] = std::fabs(apos[i]) + 0.1;

        struct Case {
            const char* name;
            Tensor input;
            std::function<Var(Tape&, Var)> build;
        };
        std::vector<Case> cases = {
            {"add", a, [&](Tape& t, Var x) { return t.add(x, t.constant(b)); }},
            {"sub", a, [&](Tape& t, Var x) { return t.sub(t.constant(b), x); }},
            {"mul", a, [&](Tape& t, Var x) { return t.mul(x, t.constant(b)); }},
            {"div", a, [&](Tape& t, Var x) { return t.div(t.constant(b), x); }},
            {"neg", a, [](Tape& t, Var x) { return t.neg(x); }},
            {"leaky_relu", a, [](Tape& t, Var x) { return t.leaky_relu(x, 0.2); }},
            {"leaky_relu_inv", a, [](Tape& t, Var x) { return t.leaky_relu_inv(x, 0.2); }},
            {"sigmoid", a, [](Tape& t, Var x) { return t.sigmoid(x); }},
            {"softplus", a, [](Tape& t, Var x) { return t.softplus(x); }},
            {"exp", a, [](Tape& t, Var x) { return t.exp(x); }},
            {"log", apos, [](Tape& t, Var x) { return t.log(x); }},
            {"abs", a, [](Tape& t, Var x) { return t.abs(x); }},
            {"matmul", a, [&](Tape& t, Var x) { return t.matmul(x, t.constant(b), false, true); }},
            {"sum_axis", a, [](Tape& t, Var x) { return t.sum_axis(x, 1); }},
            {"mean", a, [](Tape& t, Var x) { return t.mean(x); }},
            {"slice", a, [](Tape& t, Var x) { return t.slice(x, 1, 1, 2); }},
            {"concat", a, [&](Tape& t, Var x) { return t.concat({x, t.constant(b)}, 0); }},
            {"reshape", a, [](Tape& t, Var x) { return t.reshape(x, {3, 2}); }},
            {"mul_scalar", a, [](Tape& t, Var x) { return t.mul_scalar(x, -1.7); }},
            {"add_scalar", a, [](Tape& t, Var x) { return t.add_scalar(x, 0.3); }},
        };
        for (auto& c : cases) {
            CAPTURE(c.name);
            auto eval = [&](const std::vector<double>& xs) {
                Tape tape;
                Var x = tape.constant(Tensor::from(c.input.shape(), std::vector<double>(xs)));
                // Weigh elements unevenly so reductions do not mask errors.
                Var y = c.build(tape, x);
                Var w = tape.constant(
                    Tensor::from({tape.val(y).size()},
                                 [&] {
                                     std::vector<double> ws(tape.val(y).size());
                                     for (std::size_t i = 0; i < ws.size(); ++i)
                                         ws[i] = 0.3 + 0.1 * static_cast<double>(i);
                                     return ws;
                                 }()));
                return tape.val(tape.sum(tape.mul(tape.reshape(y, {tape.val(y).size()}), w)))[0];
            };
            auto fd = oracles::central_fd(eval, c.input.vec());

            Tape tape;
            Var x = tape.leaf(c.input, true);
            Var y = c.build(tape, x);
            Var w = tape.constant(Tensor::from({tape.val(y).size()}, [&] {
                std::vector<double> ws(tape.val(y).size());
                for (std::size_t i = 0; i < ws.size(); ++i)
                    ws[i] = 0.3 + 0.1 * static_cast<double>(i);
                return ws;
            }()));
            auto grads =
                tape.backward(tape.sum(tape.mul(tape.reshape(y, {tape.val(y).size()}), w)));
            CHECK(oracles::max_rel_err(grads.at(x).vec(), fd) < 1e-4);
        }
    }
}

TEST_CASE("backward of independent subgraphs equals independent backwards") {
    Rng rng(5);
    Tensor xa = rng.uniform_tensor({2, 2}, -1.5, 1.5);
    Tensor xb = rng.uniform_tensor({2, 2}, -1.5, 1.5);

    Tape joint;
    Var a = joint.leaf(xa, true);
    Var b = joint.leaf(xb, true);
    Var ya = joint.sum(joint.sigmoid(a));
    Var yb = joint.sum(joint.mul(b, b));
    auto g = joint.backward(joint.add(ya, yb));

    Tape ta;
    Var a2 = ta.leaf(xa, true);
    auto ga = ta.backward(ta.sum(ta.sigmoid(a2)));
    Tape tb;
    Var b2 = tb.leaf(xb, true);
    auto gb = tb.backward(tb.sum(tb.mul(b2, b2)));

    for (std::size_t i = 0; i < xa.size(); ++i) {
        CHECK(g.at(a)[i] == ga.at(a2)[i]);
        CHECK(g.at(b)[i] == gb.at(b2)[i]);
    }
}

TEST_CASE("broadcast add/mul reduce gradients over broadcast axes") {
    Tape tape;
    Var x = tape.leaf(Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}), true);
    Var bias = tape.leaf(Tensor::from({3}, {0.5, -0.5, 1.0}), true);
    auto g = tape.backward(tape.sum(tape.add(x, bias)));
    for (std::size_t i = 0; i < 3; ++i) CHECK(g.at(bias)[i] == 2.0);

    Tape tape2;
    Var y = tape2.leaf(Tensor::from({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}), true);
    Var s = tape2.leaf(Tensor::from({2, 2, 1}, {2, 3, 4, 5}), true);
    auto g2 = tape2.backward(tape2.sum(tape2.mul(y, s)));
    CHECK(g2.at(s)[0] == 1.0 + 2.0);
    CHECK(g2.at(s)[3] == 7.0 + 8.0);
}

TEST_CASE("gather_rows backward scatters into the table") {
    Tape tape;
    Var table = tape.leaf(Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6}), true);
    Var out = tape.gather_rows(table, {2, 0, 2});
    CHECK(tape.val(out)[0] == 5.0);
    auto g = tape.backward(tape.sum(out));
    CHECK(g.at(table)[0] == 1.0);
    CHECK(g.at(table)[2] == 0.0);
    CHECK(g.at(table)[4] == 2.0);

    CHECK_THROWS_AS(tape.gather_rows(table, {3}), dislab::Error);
}

TEST_CASE("clamp passes gradient only strictly inside the bounds") {
    Tape tape;
    Var x = tape.leaf(Tensor::from({4}, {-2.0, 0.5, 2.0, 0.9}), true);
    Var y = tape.clamp(x, -1.0, 1.0);
    CHECK(tape.val(y)[0] == -1.0);
    CHECK(tape.val(y)[1] == 0.5);
    auto g = tape.backward(tape.sum(y));
    CHECK(g.at(x)[0] == 0.0);
    CHECK(g.at(x)[1] == 1.0);
    CHECK(g.at(x)[2] == 0.0);
    CHECK(g.at(x)[3] == 1.0);
}

TEST_CASE("slice and concat round trip") {
    Tape tape;
    Var x = tape.leaf(Tensor::from({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8}), true);
    Var left = tape.slice(x, 1, 0, 2);
    Var right = tape.slice(x, 1, 2, 2);
    Var back = tape.concat({left, right}, 1);
    for (std::size_t i = 0; i < 8; ++i) CHECK(tape.val(back)[i] == tape.val(x)[i]);
    auto g = tape.backward(tape.sum(back));
    for (std::size_t i = 0; i < 8; ++i) CHECK(g.at(x)[i] == 1.0);
}

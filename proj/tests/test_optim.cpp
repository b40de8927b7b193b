#include <doctest.h>

#include <cmath>
#include <limits>

#include "dislab/optim.hpp"

using dislab::AdamW;
using dislab::AdamWConfig;
using dislab::Tensor;

TEST_CASE("zero gradient with zero weight decay leaves parameters unchanged") {
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    std::vector<Tensor> params = {Tensor::from({2}, {1.5, -0.5})};
    std::vector<Tensor> grads = {Tensor::zeros({2})};
    opt.step(params, grads);
    CHECK(params[0][0] == 1.5);
    CHECK(params[0][1] == -0.5);
    CHECK(opt.step_count() == 1);
}

TEST_CASE("one step on f(t)=t^2 from t=1 decreases t") {
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    std::vector<Tensor> params = {Tensor::scalar(1.0)};
    std::vector<Tensor> grads = {Tensor::scalar(2.0)};  // d/dt t^2 at 1
    opt.step(params, grads);
    CHECK(params[0][0] < 1.0);
}

TEST_CASE("200 steps reach the optimum of a convex quadratic") {
    // f(t) = (t - 3)^2, closed-form optimum t* = 3.
    AdamWConfig cfg;
    cfg.lr = 0.05;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    std::vector<Tensor> params = {Tensor::scalar(0.0)};
    for (int i = 0; i < 200; ++i) {
        std::vector<Tensor> grads = {Tensor::scalar(2.0 * (params[0][0] - 3.0))};
        opt.step(params, grads);
    }
    CHECK(std::fabs(params[0][0] - 3.0) < 1e-3);
}

TEST_CASE("NaN gradient aborts naming the parameter") {
    AdamW opt;
    std::vector<Tensor> params = {Tensor::scalar(1.0), Tensor::scalar(2.0)};
    std::vector<Tensor> grads = {Tensor::scalar(0.0),
                                 Tensor::scalar(std::numeric_limits<double>::quiet_NaN())};
    try {
        opt.step(params, grads, {"enc.w0", "dec.w1"});
        FAIL("expected an error");
    } catch (const dislab::Error& e) {
        CHECK(std::string(e.what()).find("dec.w1") != std::string::npos);
    }
}

TEST_CASE("decoupled weight decay shrinks parameters even at zero gradient") {
    AdamWConfig cfg;
    cfg.weight_decay = 0.1;
    cfg.lr = 0.01;
    AdamW opt(cfg);
    std::vector<Tensor> params = {Tensor::scalar(10.0)};
    std::vector<Tensor> grads = {Tensor::scalar(0.0)};
    opt.step(params, grads);
    CHECK(params[0][0] == doctest::Approx(10.0 * (1.0 - 0.001)));
}

TEST_CASE("update is deterministic given inputs") {
    auto run = [] {
        AdamW opt;
        std::vector<Tensor> params = {Tensor::from({3}, {0.1, 0.2, 0.3})};
        for (int i = 0; i < 10; ++i) {
            std::vector<Tensor> grads = {Tensor::from({3}, {0.5, -0.25, 1.0})};
            opt.step(params, grads);
        }
        return params[0];
    };
    Tensor a = run(), b = run();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

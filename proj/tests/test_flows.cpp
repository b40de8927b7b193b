#include <doctest.h>

#include <cmath>

#include "dislab/flows.hpp"
#include "oracles.hpp"

using namespace dislab;

namespace {

constexpr double LOG_2PI = 1.8378770664093454836;

struct FlowFixture {
    ParamStore store;
    DeepSigmoidFlow flow;

    FlowFixture(std::size_t D, std::size_t n, std::size_t K, std::uint64_t seed)
        : flow([&] {
              Rng rng(seed);
              return DeepSigmoidFlow::create(store, "flow", D, n, K, rng);
          }()) {}
};

// Density of one component under the flow prior, evaluated on a scalar grid
// through the public tape path.
std::vector<double> component_density(const FlowFixture& fx, std::size_t comp,
                                      std::uint32_t domain, const std::vector<double>& grid) {
    std::size_t n = fx.flow.n_latent();
    Tensor zs = Tensor::zeros({grid.size(), n});
    for (std::size_t p = 0; p < grid.size(); ++p)
        for (std::size_t i = 0; i < n; ++i) zs.at(p, i) = grid[p];
    Tape tape;
    auto params = bind_params(tape, fx.store, false);
    auto fwd = fx.flow.forward(tape, params, tape.constant(zs),
                               std::vector<std::uint32_t>(grid.size(), domain));
    std::vector<double> out(grid.size());
    for (std::size_t p = 0; p < grid.size(); ++p) {
        double e = tape.val(fwd.eps_hat).at(p, comp);
        double d = tape.val(fwd.deriv).at(p, comp);
        out[p] = std::exp(-0.5 * e * e - 0.5 * LOG_2PI) * d;
    }
    return out;
}

} // namespace

TEST_CASE("identity flow maps z to z with exactly zero logdet") {
    FlowFixture fx(3, 4, 1, 1);
    fx.flow.set_identity(fx.store);
    Rng rng(2);
    Tensor z = rng.uniform_tensor({8, 4}, -3.0, 3.0);
    Tape tape;
    auto params = bind_params(tape, fx.store, false);
    auto fwd = fx.flow.forward(tape, params, tape.constant(z), {0, 1, 2, 0, 1, 2, 0, 1});
    for (std::size_t i = 0; i < z.size(); ++i)
        CHECK(tape.val(fwd.eps_hat)[i] == doctest::Approx(z[i]).epsilon(1e-12));
    for (std::size_t r = 0; r < 8; ++r) CHECK(tape.val(fwd.logdet)[r] == 0.0);
}

TEST_CASE("forward is strictly increasing in each component") {
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        FlowFixture fx(2, 3, 8, seed);
        // spread the parameters away from the near-identity start
        Rng prng(seed + 100);
        for (auto& t : fx.store.values)
            for (std::size_t i = 0; i < t.size(); ++i) t[i] += prng.uniform(-1.5, 1.5);
        Rng rng(seed);
        for (int trial = 0; trial < 50; ++trial) {
            double z1 = rng.uniform(-6.0, 6.0);
            double z2 = z1 + rng.uniform(1e-3, 2.0);
            for (std::size_t comp = 0; comp < 3; ++comp)
                for (std::uint32_t d = 0; d < 2; ++d)
                    CHECK(fx.flow.forward_scalar(fx.store, d, comp, z1) <
                          fx.flow.forward_scalar(fx.store, d, comp, z2));
        }
    }
}

TEST_CASE("logdet matches finite differences of the forward map") {
    // 100 random (parameter, input, domain) triples
    int tested = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        FlowFixture fx(3, 2, 4, 40 + seed);
        Rng prng(seed * 7 + 1);
        for (auto& t : fx.store.values)
            for (std::size_t i = 0; i < t.size(); ++i) t[i] += prng.uniform(-0.8, 0.8);
        Rng rng(seed);
        for (int trial = 0; trial < 10; ++trial, ++tested) {
            std::uint32_t d = static_cast<std::uint32_t>(rng.index(3));
            Tensor z = rng.uniform_tensor({1, 2}, -3.0, 3.0);
            Tape tape;
            auto params = bind_params(tape, fx.store, false);
            auto fwd = fx.flow.forward(tape, params, tape.constant(z), {d});
            double logdet = tape.val(fwd.logdet)[0];
            const double h = 1e-6;
            double fd_sum = 0.0;
            for (std::size_t i = 0; i < 2; ++i) {
                double fp = fx.flow.forward_scalar(fx.store, d, i, z[i] + h);
                double fm = fx.flow.forward_scalar(fx.store, d, i, z[i] - h);
                fd_sum += std::log((fp - fm) / (2.0 * h));
            }
            CHECK(std::fabs(logdet - fd_sum) < 1e-4);
        }
    }
    CHECK(tested == 100);
}

TEST_CASE("identity flow log density at zero is the standard normal at zero") {
    FlowFixture fx(1, 4, 1, 6);
    fx.flow.set_identity(fx.store);
    Tape tape;
    auto params = bind_params(tape, fx.store, false);
    Var lp = fx.flow.log_prior(tape, params, tape.constant(Tensor::zeros({1, 4})), {0});
    CHECK(tape.val(lp)[0] == doctest::Approx(-2.0 * LOG_2PI).epsilon(1e-12));
}

TEST_CASE("per-component density integrates to one") {
    FlowFixture fx(2, 4, 6, 77);
    Rng prng(3);
    // moderate parameters keep the transition region inside the quadrature box
    for (auto& t : fx.store.values)
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += prng.uniform(-0.5, 0.5);
    std::size_t P = 20001;
    std::vector<double> grid(P);
    for (std::size_t p = 0; p < P; ++p)
        grid[p] = -10.0 + 20.0 * static_cast<double>(p) / static_cast<double>(P - 1);
    double h = 20.0 / static_cast<double>(P - 1);
    for (std::uint32_t d = 0; d < 2; ++d)
        for (std::size_t comp = 0; comp < 4; ++comp) {
            auto dens = component_density(fx, comp, d, grid);
            double integral = 0.5 * (dens.front() + dens.back());
            for (std::size_t p = 1; p + 1 < P; ++p) integral += dens[p];
            integral *= h;
            CHECK(std::fabs(integral - 1.0) < 1e-3);
        }
}

TEST_CASE("duplicated units with split weights give the same density") {
    FlowFixture one(2, 3, 1, 9);
    Rng prng(5);
    for (auto& t : one.store.values)
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += prng.uniform(-0.7, 0.7);

    // K = 2 with both units equal to the K = 1 unit and weights 0.5/0.5
    FlowFixture two(2, 3, 2, 9);
    for (std::size_t which = 0; which < 3; ++which) {
        const Tensor& src = one.store[which];
        Tensor dst = Tensor::zeros({2, 3, 2});
        for (std::size_t d = 0; d < 2; ++d)
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t k = 0; k < 2; ++k)
                    dst[(d * 3 + c) * 2 + k] = src[d * 3 + c];
        two.store[which] = dst;
    }

    Rng rng(11);
    Tensor z = rng.uniform_tensor({6, 3}, -4.0, 4.0);
    std::vector<std::uint32_t> u = {0, 1, 0, 1, 0, 1};
    Tape ta, tb;
    auto pa = bind_params(ta, one.store, false);
    auto pb = bind_params(tb, two.store, false);
    Var la = one.flow.log_prior(ta, pa, ta.constant(z), u);
    Var lb = two.flow.log_prior(tb, pb, tb.constant(z), u);
    for (std::size_t r = 0; r < 6; ++r)
        CHECK(ta.val(la)[r] == doctest::Approx(tb.val(lb)[r]).epsilon(1e-13));
}

TEST_CASE("forward/inverse round trips") {
    FlowFixture fx(3, 3, 8, 21);
    Rng prng(8);
    for (auto& t : fx.store.values)
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += prng.uniform(-1.0, 1.0);
    Rng rng(13);
    Tensor z = rng.uniform_tensor({40, 3}, -5.0, 5.0);
    std::vector<std::uint32_t> u(40);
    for (auto& d : u) d = static_cast<std::uint32_t>(rng.index(3));

    Tape tape;
    auto params = bind_params(tape, fx.store, false);
    auto fwd = fx.flow.forward(tape, params, tape.constant(z), u);
    Tensor back = fx.flow.inverse(fx.store, tape.val(fwd.eps_hat), u);
    for (std::size_t i = 0; i < z.size(); ++i)
        CHECK(std::fabs(back[i] - z[i]) < 1e-6);

    // inverse-then-forward
    Tensor eps = rng.uniform_tensor({40, 3}, -3.0, 3.0);
    Tensor zin = fx.flow.inverse(fx.store, eps, u);
    Tape tape2;
    auto params2 = bind_params(tape2, fx.store, false);
    auto fwd2 = fx.flow.forward(tape2, params2, tape2.constant(zin), u);
    for (std::size_t i = 0; i < eps.size(); ++i)
        CHECK(std::fabs(tape2.val(fwd2.eps_hat)[i] - eps[i]) < 1e-6);
}

TEST_CASE("identity flow inverse is the identity") {
    FlowFixture fx(1, 2, 1, 30);
    fx.flow.set_identity(fx.store);
    Tensor eps = Tensor::from({2, 2}, {0.5, -1.0, 2.0, 0.0});
    Tensor z = fx.flow.inverse(fx.store, eps, {0, 0});
    for (std::size_t i = 0; i < eps.size(); ++i) CHECK(std::fabs(z[i] - eps[i]) < 1e-7);
}

TEST_CASE("inverse reports bracket expansion failure for unreachable targets") {
    FlowFixture fx(1, 1, 2, 31);
    // logit clamps at about +-16.1, so 100 is unreachable
    CHECK_THROWS_AS(fx.flow.inverse(fx.store, Tensor::from({1, 1}, {100.0}), {0}), Error);
}

TEST_CASE("domain index out of range is rejected") {
    FlowFixture fx(2, 2, 2, 32);
    Tape tape;
    auto params = bind_params(tape, fx.store, false);
    CHECK_THROWS_AS(fx.flow.forward(tape, params, tape.constant(Tensor::zeros({1, 2})), {5}),
                    Error);
}

TEST_CASE("masked residual: zero mask passes eps through unchanged") {
    FlowFixture fx(2, 3, 4, 33);
    Rng prng(9);
    for (auto& t : fx.store.values)
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += prng.uniform(-0.6, 0.6);
    LatentMask mask = LatentMask::create(fx.store, "mask", 3);

    Rng rng(10);
    Tensor eps = rng.normal_tensor({5, 3});
    Tape tape;
    auto params = bind_params(tape, fx.store, false);
    Var zhat = mask.apply(tape, params, fx.flow, tape.constant(eps), {0, 1, 0, 1, 0});
    for (std::size_t i = 0; i < eps.size(); ++i) CHECK(tape.val(zhat)[i] == eps[i]);
    CHECK(tape.val(mask.l1(tape, params))[0] == 0.0);
}

TEST_CASE("masked residual: masked components vary with domain, others do not") {
    FlowFixture fx(2, 2, 4, 34);
    Rng prng(12);
    for (auto& t : fx.store.values)
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += prng.uniform(-1.0, 1.0);
    LatentMask mask = LatentMask::create(fx.store, "mask", 2);
    fx.store[mask.idx_m] = Tensor::from({2}, {0.0, 0.7});

    Tensor eps = Tensor::from({1, 2}, {0.4, -0.9});
    auto run = [&](std::uint32_t d) {
        Tape tape;
        auto params = bind_params(tape, fx.store, false);
        Var zhat = mask.apply(tape, params, fx.flow, tape.constant(eps), {d});
        return std::pair<double, double>(tape.val(zhat)[0], tape.val(zhat)[1]);
    };
    auto [c0, s0] = run(0);
    auto [c1, s1] = run(1);
    CHECK(c0 == eps[0]);  // content dimension is bitwise domain-invariant
    CHECK(c1 == eps[0]);
    CHECK(s0 != s1);

    Tape tape;
    auto params = bind_params(tape, fx.store, false);
    CHECK(tape.val(mask.l1(tape, params))[0] == doctest::Approx(0.7));
}

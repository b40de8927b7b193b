#include "dislab/flows.hpp"

#include <algorithm>
#include <cmath>

#include "dislab/params.hpp"

namespace dislab {

namespace {
constexpr double LOG_2PI = 1.8378770664093454836;

// The double whose softplus rounds to exactly 1.0, found once by bisection.
double softplus_inverse_of_one() {
    double lo = 0.5, hi = 0.6;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (std::log1p(std::exp(mid)) < 1.0) lo = mid;
        else hi = mid;
    }
    return hi;
}
} // namespace

std::size_t ParamStore::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    fail(ErrorCode::invalid_argument, "ParamStore: no parameter named '" + name + "'");
}

std::size_t ParamStore::total_scalars() const {
    std::size_t n = 0;
    for (const Tensor& t : values) n += t.size();
    return n;
}

std::vector<Var> bind_params(Tape& tape, const ParamStore& store, bool requires_grad) {
    std::vector<Var> vars;
    vars.reserve(store.size());
    for (const Tensor& t : store.values) vars.push_back(tape.leaf(t, requires_grad));
    return vars;
}

DeepSigmoidFlow DeepSigmoidFlow::create(ParamStore& store, const std::string& prefix,
                                        std::size_t n_domains, std::size_t n_latent,
                                        std::size_t K, Rng& rng) {
    if (n_domains == 0 || n_latent == 0 || K == 0)
        fail(ErrorCode::invalid_argument, "DeepSigmoidFlow: zero-sized configuration");
    DeepSigmoidFlow f;
    f.n_domains_ = n_domains;
    f.n_latent_ = n_latent;
    f.K_ = K;
    // Near-identity start: slopes around 1, small shifts, near-uniform weights.
    double a1 = softplus_inverse_of_one();
    Tensor raw_a = rng.normal_tensor({n_domains, n_latent, K}, a1, 0.05);
    Tensor b = rng.normal_tensor({n_domains, n_latent, K}, 0.0, 0.05);
    Tensor lw = rng.normal_tensor({n_domains, n_latent, K}, 0.0, 0.01);
    f.idx_raw_a_ = store.add(prefix + ".raw_a", std::move(raw_a));
    f.idx_b_ = store.add(prefix + ".b", std::move(b));
    f.idx_logit_w_ = store.add(prefix + ".logit_w", std::move(lw));
    return f;
}

void DeepSigmoidFlow::set_identity(ParamStore& store) const {
    double a1 = softplus_inverse_of_one();
    store[idx_raw_a_] = Tensor::full({n_domains_, n_latent_, K_}, a1);
    store[idx_b_] = Tensor::zeros({n_domains_, n_latent_, K_});
    store[idx_logit_w_] = Tensor::zeros({n_domains_, n_latent_, K_});
}

void DeepSigmoidFlow::check_domains(const std::vector<std::uint32_t>& u) const {
    for (std::uint32_t d : u)
        if (d >= n_domains_)
            fail(ErrorCode::invalid_argument,
                 "DeepSigmoidFlow: domain index " + std::to_string(d) + " out of range [0," +
                     std::to_string(n_domains_) + ")");
}

DeepSigmoidFlow::Fwd DeepSigmoidFlow::forward(Tape& tape, const std::vector<Var>& params,
                                              Var zhat, const std::vector<std::uint32_t>& u) const {
    check_domains(u);
    const Tensor& zv = tape.val(zhat);
    if (zv.rank() != 2 || zv.dim(1) != n_latent_ || zv.dim(0) != u.size())
        fail(ErrorCode::shape_mismatch,
             "DeepSigmoidFlow::forward: input " + shape_str(zv.shape()) + " with " +
                 std::to_string(u.size()) + " domain indices, flow has " +
                 std::to_string(n_latent_) + " components");
    std::size_t B = zv.dim(0);

    Var raw_a = tape.gather_rows(params[idx_raw_a_], u);  // [B, n, K]
    Var bb = tape.gather_rows(params[idx_b_], u);
    Var lw = tape.gather_rows(params[idx_logit_w_], u);

    Var a = tape.softplus(raw_a);
    Var e = tape.exp(tape.clamp(lw, -30.0, 30.0));
    Var w = tape.div(e, tape.reshape(tape.sum_axis(e, 2), {B, n_latent_, 1}));

    Var zc = tape.reshape(zhat, {B, n_latent_, 1});
    Var t = tape.add(tape.mul(a, zc), bb);
    Var su = tape.sigmoid(t);
    // Complement through sigmoid(-t): unlike 1 - su it never truncates to 0
    // under saturation, which keeps the log-derivative finite.
    Var su_neg = tape.sigmoid(tape.neg(t));

    Var s = tape.sum_axis(tape.mul(w, su), 2);                       // [B, n]
    Var s_neg = tape.sum_axis(tape.mul(w, su_neg), 2);               // = 1 - s
    Var sc = tape.clamp(s, sigma_eps, 1.0 - sigma_eps);
    Var sc_neg = tape.clamp(s_neg, sigma_eps, 1.0 - sigma_eps);
    Var eps = tape.sub(tape.log(sc), tape.log(sc_neg));              // logit

    // d eps / d z = (sum_k w_k a_k s_k sigmoid(-t_k)) / (s (1 - s))
    Var ds = tape.sum_axis(tape.mul(tape.mul(tape.mul(w, su), su_neg), a), 2);
    Var deriv = tape.clamp(tape.div(ds, tape.mul(sc, sc_neg)), 1e-280, 1e280);
    Var logdet = tape.sum_axis(tape.log(deriv), 1);                  // [B]
    return {eps, deriv, logdet};
}

Var DeepSigmoidFlow::log_prior(Tape& tape, const std::vector<Var>& params, Var zhat,
                               const std::vector<std::uint32_t>& u) const {
    Fwd f = forward(tape, params, zhat, u);
    Var sq = tape.sum_axis(tape.mul(f.eps_hat, f.eps_hat), 1);  // [B]
    Var base = tape.add_scalar(tape.mul_scalar(sq, -0.5),
                               -0.5 * LOG_2PI * static_cast<double>(n_latent_));
    return tape.add(base, f.logdet);
}

double DeepSigmoidFlow::forward_scalar(const ParamStore& store, std::size_t domain,
                                       std::size_t component, double z) const {
    if (domain >= n_domains_)
        fail(ErrorCode::invalid_argument, "DeepSigmoidFlow: domain index " +
                                              std::to_string(domain) + " out of range [0," +
                                              std::to_string(n_domains_) + ")");
    const Tensor& raw_a = store[idx_raw_a_];
    const Tensor& b = store[idx_b_];
    const Tensor& lw = store[idx_logit_w_];
    std::size_t base = (domain * n_latent_ + component) * K_;
    double wsum = 0.0, s = 0.0, s_neg = 0.0;
    for (std::size_t k = 0; k < K_; ++k)
        wsum += std::exp(std::clamp(lw[base + k], -30.0, 30.0));
    for (std::size_t k = 0; k < K_; ++k) {
        double w = std::exp(std::clamp(lw[base + k], -30.0, 30.0)) / wsum;
        double a = raw_a[base + k] > 35.0 ? raw_a[base + k] : std::log1p(std::exp(raw_a[base + k]));
        double t = a * z + b[base + k];
        s += w / (1.0 + std::exp(-t));
        s_neg += w / (1.0 + std::exp(t));
    }
    s = std::clamp(s, sigma_eps, 1.0 - sigma_eps);
    s_neg = std::clamp(s_neg, sigma_eps, 1.0 - sigma_eps);
    return std::log(s) - std::log(s_neg);
}

Tensor DeepSigmoidFlow::inverse(const ParamStore& store, const Tensor& eps_hat,
                                const std::vector<std::uint32_t>& u) const {
    check_domains(u);
    if (eps_hat.rank() != 2 || eps_hat.dim(1) != n_latent_ || eps_hat.dim(0) != u.size())
        fail(ErrorCode::shape_mismatch,
             "DeepSigmoidFlow::inverse: input " + shape_str(eps_hat.shape()));
    Tensor z = Tensor::zeros(eps_hat.shape());
    for (std::size_t r = 0; r < eps_hat.dim(0); ++r)
        for (std::size_t i = 0; i < n_latent_; ++i) {
            double target = eps_hat.at(r, i);
            double lo = -10.0, hi = 10.0;
            int doublings = 0;
            while (forward_scalar(store, u[r], i, lo) > target) {
                lo *= 2.0;
                if (++doublings > 60)
                    fail(ErrorCode::numeric,
                         "DeepSigmoidFlow::inverse: bracket expansion failed after 60 doublings "
                         "(target unreachable)");
            }
            while (forward_scalar(store, u[r], i, hi) < target) {
                hi *= 2.0;
                if (++doublings > 60)
                    fail(ErrorCode::numeric,
                         "DeepSigmoidFlow::inverse: bracket expansion failed after 60 doublings "
                         "(target unreachable)");
            }
            double mid = 0.5 * (lo + hi);
            for (int it = 0; it < 200; ++it) {
                mid = 0.5 * (lo + hi);
                double f = forward_scalar(store, u[r], i, mid);
                if (std::fabs(f - target) < 1e-8) break;
                if (f < target) lo = mid;
                else hi = mid;
            }
            z.at(r, i) = mid;
        }
    return z;
}

LatentMask LatentMask::create(ParamStore& store, const std::string& prefix, std::size_t n_latent) {
    LatentMask m;
    m.idx_m = store.add(prefix + ".m", Tensor::zeros({n_latent}));
    return m;
}

Var LatentMask::apply(Tape& tape, const std::vector<Var>& params, const DeepSigmoidFlow& flow,
                      Var eps, const std::vector<std::uint32_t>& u) const {
    const Tensor& ev = tape.val(eps);
    const Tensor& mv = tape.val(params[idx_m]);
    if (ev.rank() != 2 || ev.dim(1) != mv.size())
        fail(ErrorCode::shape_mismatch, "LatentMask::apply: eps " + shape_str(ev.shape()) +
                                            " vs mask " + shape_str(mv.shape()));
    auto fwd = flow.forward(tape, params, eps, u);
    return tape.add(eps, tape.mul(params[idx_m], fwd.eps_hat));
}

Var LatentMask::l1(Tape& tape, const std::vector<Var>& params) const {
    return tape.sum(tape.abs(params[idx_m]));
}

} // namespace dislab

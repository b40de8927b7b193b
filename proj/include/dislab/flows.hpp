#ifndef DISLAB_FLOWS_HPP
#define DISLAB_FLOWS_HPP

#include <cstdint>
#include <vector>

#include "dislab/params.hpp"
#include "dislab/rng.hpp"

namespace dislab {

/// Domain-conditioned deep sigmoid flow. Each (domain, latent component) has
/// its own K sigmoidal units; the transform is
///     eps = logit( sum_k w_k * sigmoid(a_k * z + b_k) )
/// with a_k positive through softplus and w_k on the simplex through a
/// normalized exponential, so it is strictly increasing for every parameter
/// value. Domains are parameter-table rows selected by index.
class DeepSigmoidFlow {
  public:
    static DeepSigmoidFlow create(ParamStore& store, const std::string& prefix,
                                  std::size_t n_domains, std::size_t n_latent, std::size_t K,
                                  Rng& rng);

    /// Overwrites parameters so every (domain, component) transform is the
    /// identity map (single active unit, unit slope, zero shift).
    void set_identity(ParamStore& store) const;

    struct Fwd {
        Var eps_hat;  // [B, n]
        Var deriv;    // [B, n], pointwise positive derivative d eps / d z
        Var logdet;   // [B]
    };

    /// Forward transform of a batch under per-row domain indices.
    Fwd forward(Tape& tape, const std::vector<Var>& params, Var zhat,
                const std::vector<std::uint32_t>& u) const;

    /// log p(zhat | u) = log N(eps; 0, I) + logdet, one value per row.
    Var log_prior(Tape& tape, const std::vector<Var>& params, Var zhat,
                  const std::vector<std::uint32_t>& u) const;

    /// Componentwise bisection on the increasing map; |forward(z) - eps| < 1e-8.
    Tensor inverse(const ParamStore& store, const Tensor& eps_hat,
                   const std::vector<std::uint32_t>& u) const;

    double forward_scalar(const ParamStore& store, std::size_t domain, std::size_t component,
                          double z) const;

    std::size_t n_domains() const { return n_domains_; }
    std::size_t n_latent() const { return n_latent_; }
    std::size_t units() const { return K_; }

    // Evaluation epsilon for the logit: inputs are clamped to
    // [sigma_eps, 1 - sigma_eps] before inversion so densities stay finite.
    static constexpr double sigma_eps = 1e-7;

  private:
    void check_domains(const std::vector<std::uint32_t>& u) const;

    std::size_t n_domains_ = 0, n_latent_ = 0, K_ = 0;
    std::size_t idx_raw_a_ = 0, idx_b_ = 0, idx_logit_w_ = 0;  // store indices
};

/// Learnable residual mask: zhat = eps + m ⊙ F_u(eps). Entries of m that are
/// exactly 0 make the component domain-invariant.
struct LatentMask {
    std::size_t idx_m = 0;  // store index of m, shape [n_latent]

    static LatentMask create(ParamStore& store, const std::string& prefix, std::size_t n_latent);

    Var apply(Tape& tape, const std::vector<Var>& params, const DeepSigmoidFlow& flow, Var eps,
              const std::vector<std::uint32_t>& u) const;

    /// L1 size of the mask, the mask sparsity penalty.
    Var l1(Tape& tape, const std::vector<Var>& params) const;
};

} // namespace dislab

#endif

#ifndef DISLAB_CGVAE_HPP
#define DISLAB_CGVAE_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dislab/flows.hpp"
#include "dislab/mlp.hpp"
#include "dislab/synthgen.hpp"

namespace dislab {

enum class PenaltyKind { l1, l2, finite_diff };
const char* penalty_kind_name(PenaltyKind k);
PenaltyKind penalty_kind_from_name(const std::string& s);

struct CgvaeArch {
    std::size_t n_obs = 4;
    std::size_t n_latent = 4;
    std::size_t n_domains = 1;
    std::size_t hidden = 64;
    std::size_t mlp_layers = 5;
    std::size_t flow_units = 8;
    double leaky_slope = 0.2;
    bool use_mask = false;
};

/// Encoder/decoder MLPs, the domain-conditioned flow prior, and an optional
/// residual mask, together with the input standardizer buffers fitted during
/// training.
struct CgvaeModel {
    CgvaeArch arch;
    ParamStore params;
    Mlp encoder, decoder;
    DeepSigmoidFlow flow;
    LatentMask mask;  // only meaningful when arch.use_mask
    Tensor x_mean, x_scale;
    std::uint64_t dataset_digest = 0;

    static CgvaeModel init(const CgvaeArch& arch, std::uint64_t seed);
};

struct TrainConfig {
    double lr = 3e-3;
    std::size_t batch = 64;
    double alpha = 5e-2;
    double beta = 1e-3;
    std::size_t epochs = 60;
    std::uint64_t seed = 0;
    PenaltyKind penalty_kind = PenaltyKind::l1;
    bool alpha_zero_ablation = false;  // drops the sparse penalty entirely
    double fd_step = 1e-2;
    double gamma_mask = 1e-2;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8, weight_decay = 1e-2;

    double effective_alpha() const { return alpha_zero_ablation ? 0.0 : alpha; }
    void validate() const;
};

struct LossBreakdown {
    double l_rec = 0.0;  // negative reconstruction error (higher is better)
    double l_kl = 0.0;
    double l_s = 0.0;
    double l_m = 0.0;
    double total = 0.0;  // the minimized objective: -l_rec + a*l_s + b*l_kl + g*l_m
};

struct TrainResult {
    std::vector<LossBreakdown> history;  // one entry per epoch
};

// ---- graph builders (tape-level; used by train and by the theory module) ----

struct EncodeVars {
    Var x_std, mu, logvar, sigma, zhat;
};

/// Standardizes x with the model buffers and runs the encoder; zhat is the
/// reparameterized sample mu + sigma ⊙ eta.
EncodeVars encode_graph(const CgvaeModel& model, Tape& tape, const std::vector<Var>& params,
                        Var x_raw, const Tensor& eta);

struct ElboVars {
    EncodeVars enc;
    Var z_dec;        // decoder input (zhat, or the masked residual of it)
    Mlp::Trace dec;   // decoder trace at z_dec
    Var l_rec;        // scalar
    Var l_kl;         // scalar
    Var logq_rows, logp_rows;
};

ElboVars elbo_graph(const CgvaeModel& model, Tape& tape, const std::vector<Var>& params,
                    const Tensor& x_raw, const std::vector<std::uint32_t>& u, const Tensor& eta);

/// Sparse mixing penalty from the exact decoder Jacobian at the traced batch:
/// sum of absolute (or squared) entries, averaged over the batch. Built from
/// one tangent sweep per latent dimension, so it stays differentiable in the
/// decoder weights.
Var sparse_penalty_exact_graph(const CgvaeModel& model, Tape& tape,
                               const std::vector<Var>& params, const Mlp::Trace& dec_trace,
                               bool squared);

/// Forward-finite-difference variant: the columnwise difference quotients are
/// summed before the outer L1, one extra decoder call per latent dimension.
Var sparse_penalty_fd_graph(const CgvaeModel& model, Tape& tape, const std::vector<Var>& params,
                            Var z_dec, Var base_out, double step);

// ---- value-level operations ----

Tensor encode_mean(const CgvaeModel& model, const Tensor& x_raw);
std::pair<Tensor, Tensor> encode_params(const CgvaeModel& model, const Tensor& x_raw);
Tensor decode(const CgvaeModel& model, const Tensor& z);

/// ELBO terms on a batch without any penalty; total = -l_rec + l_kl.
/// Deterministic given the noise seed.
LossBreakdown elbo_terms(const CgvaeModel& model, const Tensor& x_raw,
                         const std::vector<std::uint32_t>& u, std::uint64_t noise_seed);

/// Mean absolute decoder Jacobian over the given latent points, [n_obs, n_latent].
Tensor decoder_jacobian_mean_abs(const CgvaeModel& model, const Tensor& z_points);

TrainResult train(CgvaeModel& model, const DatasetBundle& data, const TrainConfig& cfg);

void checkpoint_save(const CgvaeModel& model, const std::filesystem::path& dir);
CgvaeModel checkpoint_load(const std::filesystem::path& dir);

void save_loss_history(const TrainResult& result, const std::filesystem::path& csv_path);

} // namespace dislab

#endif

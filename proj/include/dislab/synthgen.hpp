#ifndef DISLAB_SYNTHGEN_HPP
#define DISLAB_SYNTHGEN_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dislab/linalg.hpp"
#include "dislab/tape.hpp"
#include "dislab/tensor.hpp"

namespace dislab {

/// Bipartite structure of the ground-truth mixing: adjacency[i][j] says
/// whether latent i contributes to observation j.
struct MixingGraph {
    std::size_t n_latent = 0;
    std::size_t n_obs = 0;
    std::vector<std::uint8_t> adjacency;  // row-major [n_latent][n_obs]

    bool edge(std::size_t latent, std::size_t obs) const {
        return adjacency[latent * n_obs + obs] != 0;
    }
    void set_edge(std::size_t latent, std::size_t obs, bool on = true) {
        adjacency[latent * n_obs + obs] = on ? 1 : 0;
    }

    static MixingGraph empty(std::size_t n_latent, std::size_t n_obs);
    static MixingGraph full(std::size_t n);
    static MixingGraph identity(std::size_t n);

    /// Latent parents of a single observation.
    std::vector<std::size_t> parents_of(std::size_t obs) const;
    /// Union of parents over an observation index set (Pa(x_k)).
    std::vector<std::size_t> parents_of_set(const std::vector<std::size_t>& obs_set) const;
    std::vector<std::size_t> children_of(std::size_t latent) const;
    bool fully_connected() const;

    /// Every observation needs a parent and every latent a child.
    void validate() const;
};

/// Ground-truth mixer: a stack of masked square linear layers, each followed
/// by LeakyReLU, so the composed map is exactly invertible and its Jacobian
/// support equals the declared graph everywhere.
struct MixingSpec {
    MixingGraph graph;
    std::size_t depth = 0;
    double slope = 0.2;
    std::vector<Tensor> weights;  // each [n_obs, n_latent], masked
    std::vector<Tensor> biases;   // each [n_obs]
    std::vector<Tensor> masks;    // 0/1, same shapes as weights
    std::uint64_t seed = 0;

    std::size_t dim() const { return graph.n_latent; }
    std::uint64_t digest() const;

    /// Cached per-layer inverses (built lazily, derived from weights).
    const std::vector<Tensor>& layer_inverses() const;

  private:
    mutable std::vector<Tensor> inv_cache_;
};

struct DomainPrior {
    Tensor means;     // [n_domains, n_latent]
    Tensor log_vars;  // [n_domains, n_latent]

    std::size_t n_domains() const { return means.dim(0); }
    std::size_t n_latent() const { return means.rank() == 2 ? means.dim(1) : 0; }
    void validate() const;
};

struct DatasetBundle {
    Tensor x;  // [N, n_obs]
    Tensor z;  // [N, n_latent]
    std::vector<std::uint32_t> u;
    std::vector<std::uint32_t> train_idx, test_idx;
    std::uint64_t spec_digest = 0;

    // provenance, also serialized so a dataset directory is self-contained
    std::string preset_name;
    std::uint64_t seed = 0;
    std::size_t n_domains = 0;
    MixingSpec spec;
    DomainPrior prior;

    std::size_t n_rows() const { return x.rank() == 2 ? x.dim(0) : 0; }
    Tensor rows(const Tensor& m, const std::vector<std::uint32_t>& idx) const;
};

/// Draws masked invertible weights for `graph`; resamples any layer whose
/// determinant falls under 1e-6, giving up after 100 attempts per layer.
MixingSpec build_mixing_spec(const MixingGraph& graph, std::size_t depth, std::uint64_t seed);

Tensor mix(const MixingSpec& spec, const Tensor& z);
Tensor invert(const MixingSpec& spec, const Tensor& x);

/// Same forward pass recorded on a tape (used by Jacobian checks).
Var mix_on_tape(const MixingSpec& spec, Tape& tape, Var z);
/// Exact layerwise inverse recorded on a tape.
Var invert_on_tape(const MixingSpec& spec, Tape& tape, Var x);

DatasetBundle sample_dataset(const MixingSpec& spec, const DomainPrior& prior,
                             std::size_t n_per_domain, std::uint64_t seed);

/// Named default graphs; domain prior parameters are drawn per domain from
/// substreams of `seed`, so smaller domain counts are prefixes of larger ones.
std::pair<MixingSpec, DomainPrior> preset(const std::string& name, std::size_t n_domains,
                                          std::uint64_t seed);
MixingGraph preset_graph(const std::string& name);

/// Content digest over the payload arrays and split (integrity/idempotence key).
std::uint64_t dataset_digest(const DatasetBundle& ds);

void save_dataset(const DatasetBundle& ds, const std::filesystem::path& dir);
DatasetBundle load_dataset(const std::filesystem::path& dir);

} // namespace dislab

#endif

#ifndef DISLAB_MLP_HPP
#define DISLAB_MLP_HPP

#include <string>
#include <vector>

#include "dislab/params.hpp"
#include "dislab/rng.hpp"

namespace dislab {

enum class Activation { leaky_relu, sigmoid };

/// Fully connected network: n_layers weight layers, activations between them,
/// linear output. Weights live in a ParamStore; the struct itself only holds
/// indices, so it can be rebuilt cheaply from a checkpoint manifest.
struct Mlp {
    std::string name;
    std::size_t in_dim = 0, out_dim = 0, hidden = 0, n_layers = 0;
    double slope = 0.2;
    Activation act = Activation::leaky_relu;
    std::vector<std::size_t> w_idx, b_idx;

    static Mlp create(ParamStore& store, const std::string& name, std::size_t in_dim,
                      std::size_t out_dim, std::size_t hidden, std::size_t n_layers, Rng& rng,
                      double slope = 0.2, Activation act = Activation::leaky_relu);

    /// Forward pass plus the pointwise activation derivatives of each hidden
    /// layer, which is what tangent propagation needs.
    struct Trace {
        Var out;
        std::vector<Var> act_grads;  // one per hidden layer, shaped like that layer
    };

    Var forward(Tape& tape, const std::vector<Var>& params, Var x) const;
    Trace forward_trace(Tape& tape, const std::vector<Var>& params, Var x) const;

    /// Pushes a tangent t0 (same shape as the input batch) through the
    /// linearization recorded in `trace`; returns the output-space tangent.
    /// Everything stays on the tape, so the result is differentiable with
    /// respect to the weights.
    Var tangent(Tape& tape, const std::vector<Var>& params, const Trace& trace, Var t0) const;

    std::size_t layer_in(std::size_t l) const { return l == 0 ? in_dim : hidden; }
    std::size_t layer_out(std::size_t l) const { return l + 1 == n_layers ? out_dim : hidden; }
};

} // namespace dislab

#endif

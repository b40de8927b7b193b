#include "dislab/mlp.hpp"

#include <cmath>

namespace dislab {

Mlp Mlp::create(ParamStore& store, const std::string& name, std::size_t in_dim,
                std::size_t out_dim, std::size_t hidden, std::size_t n_layers, Rng& rng,
                double slope, Activation act) {
    if (n_layers < 1) fail(ErrorCode::invalid_argument, "Mlp: need at least one layer");
    Mlp m;
    m.name = name;
    m.in_dim = in_dim;
    m.out_dim = out_dim;
    m.hidden = hidden;
    m.n_layers = n_layers;
    m.slope = slope;
    m.act = act;
    for (std::size_t l = 0; l < n_layers; ++l) {
        std::size_t fan_in = m.layer_in(l), fan_out = m.layer_out(l);
        double std_w = std::sqrt(2.0 / (static_cast<double>(fan_in) * (1.0 + slope * slope)));
        m.w_idx.push_back(store.add(name + ".w" + std::to_string(l),
                                    rng.normal_tensor({fan_out, fan_in}, 0.0, std_w)));
        m.b_idx.push_back(store.add(name + ".b" + std::to_string(l), Tensor::zeros({fan_out})));
    }
    return m;
}

Mlp::Trace Mlp::forward_trace(Tape& tape, const std::vector<Var>& params, Var x) const {
    const Tensor& xv = tape.val(x);
    if (xv.rank() != 2 || xv.dim(1) != in_dim)
        fail(ErrorCode::shape_mismatch, name + ": input " + shape_str(xv.shape()) +
                                            ", expected [N," + std::to_string(in_dim) + "]");
    Trace trace;
    Var h = x;
    for (std::size_t l = 0; l < n_layers; ++l) {
        Var pre = tape.add(tape.matmul(h, params[w_idx[l]], false, true), params[b_idx[l]]);
        if (!tape.val(pre).all_finite())
            fail(ErrorCode::numeric,
                 name + " layer " + std::to_string(l) + " produced non-finite values");
        if (l + 1 == n_layers) {
            h = pre;
        } else if (act == Activation::leaky_relu) {
            trace.act_grads.push_back(tape.leaky_relu_grad(pre, slope));
            h = tape.leaky_relu(pre, slope);
        } else {
            Var s = tape.sigmoid(pre);
            trace.act_grads.push_back(tape.mul(s, tape.add_scalar(tape.neg(s), 1.0)));
            h = s;
        }
    }
    trace.out = h;
    return trace;
}

Var Mlp::forward(Tape& tape, const std::vector<Var>& params, Var x) const {
    return forward_trace(tape, params, x).out;
}

Var Mlp::tangent(Tape& tape, const std::vector<Var>& params, const Trace& trace, Var t0) const {
    Var t = t0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        t = tape.matmul(t, params[w_idx[l]], false, true);
        if (l + 1 < n_layers) t = tape.mul(t, trace.act_grads[l]);
    }
    return t;
}

} // namespace dislab

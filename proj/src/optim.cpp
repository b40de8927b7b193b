#include "dislab/optim.hpp"

#include <cmath>

namespace dislab {

void AdamW::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                 const std::vector<std::string>& names) {
    if (params.size() != grads.size())
        fail(ErrorCode::invalid_argument,
             "AdamW::step: " + std::to_string(params.size()) + " parameters but " +
                 std::to_string(grads.size()) + " gradients");
    if (m_.empty()) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Tensor& p : params) {
            m_.push_back(Tensor::zeros(p.shape()));
            v_.push_back(Tensor::zeros(p.shape()));
        }
    }
    if (m_.size() != params.size())
        fail(ErrorCode::invalid_argument, "AdamW::step: parameter list changed size");

    auto pname = [&](std::size_t i) {
        return i < names.size() ? names[i] : ("param#" + std::to_string(i));
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].same_shape(grads[i]))
            fail(ErrorCode::shape_mismatch,
                 "AdamW::step: gradient shape " + shape_str(grads[i].shape()) + " for " +
                     pname(i) + " of shape " + shape_str(params[i].shape()));
        if (!grads[i].all_finite())
            fail(ErrorCode::numeric, "AdamW::step: non-finite gradient for " + pname(i));
    }

    t_ += 1;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* p = params[i].data();
        const double* g = grads[i].data();
        double* m = m_[i].data();
        double* v = v_[i].data();
        std::size_t n = params[i].size();
        for (std::size_t j = 0; j < n; ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            p[j] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[j]);
        }
    }
}

} // namespace dislab

#ifndef DISLAB_OPTIM_HPP
#define DISLAB_OPTIM_HPP

#include <string>
#include <vector>

#include "dislab/tensor.hpp"

namespace dislab {

struct AdamWConfig {
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
};

/// AdamW with bias correction and decoupled weight decay. Moment buffers are
/// created lazily on the first step and stay shape-congruent with their
/// parameters afterwards.
class AdamW {
  public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    const AdamWConfig& config() const { return cfg_; }
    std::int64_t step_count() const { return t_; }

    /// One update over an aligned parameter/gradient list. `names` is used
    /// only for diagnostics and may be empty.
    void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
              const std::vector<std::string>& names = {});

  private:
    AdamWConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::int64_t t_ = 0;
};

} // namespace dislab

#endif

#ifndef DISLAB_PARAMS_HPP
#define DISLAB_PARAMS_HPP

#include <string>
#include <vector>

#include "dislab/tape.hpp"
#include "dislab/tensor.hpp"

namespace dislab {

/// Named, ordered collection of trainable tensors. Insertion order is the
/// serialization and optimizer order, so it must be deterministic.
struct ParamStore {
    std::vector<std::string> names;
    std::vector<Tensor> values;

    std::size_t add(std::string name, Tensor init) {
        names.push_back(std::move(name));
        values.push_back(std::move(init));
        return values.size() - 1;
    }

    std::size_t size() const { return values.size(); }
    Tensor& operator[](std::size_t i) { return values[i]; }
    const Tensor& operator[](std::size_t i) const { return values[i]; }

    std::size_t index_of(const std::string& name) const;
    std::size_t total_scalars() const;
};

/// One leaf per parameter, aligned with the store's order.
std::vector<Var> bind_params(Tape& tape, const ParamStore& store, bool requires_grad = true);

} // namespace dislab

#endif

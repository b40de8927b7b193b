#ifndef DISLAB_TAPE_HPP
#define DISLAB_TAPE_HPP

#include <cstdint>
#include <vector>

#include "dislab/tensor.hpp"

namespace dislab {

/// Handle to a node on a Tape. Only meaningful together with the tape that
/// created it.
struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

enum class Op : std::uint8_t {
    leaf,
    add,
    sub,
    mul,
    div,
    neg,
    add_scalar,
    mul_scalar,
    matmul,
    leaky_relu,
    leaky_relu_grad,
    leaky_relu_inv,
    sigmoid,
    softplus,
    exp,
    log,
    abs,
    sum,
    sum_axis,
    mean,
    slice,
    concat,
    gather_rows,
    reshape,
    clamp,
};

/// Result of a backward pass: one adjoint per node that received gradient.
class Grads {
  public:
    bool has(Var v) const {
        return v.id >= 0 && static_cast<std::size_t>(v.id) < has_.size() && has_[v.id];
    }
    const Tensor& at(Var v) const;

  private:
    friend class Tape;
    std::vector<Tensor> g_;
    std::vector<char> has_;
};

/// Reverse-mode differentiation tape. Records every primitive in execution
/// order (which is a topological order by construction) and replays it
/// backwards to accumulate adjoints. Single-owner: a tape must not be shared
/// across threads.
class Tape {
  public:
    Var leaf(const Tensor& value);  // requires_grad taken from the tensor
    Var leaf(const Tensor& value, bool requires_grad);
    Var constant(const Tensor& value) { return leaf(value, false); }
    Var constant_scalar(double v) { return leaf(Tensor::scalar(v), false); }

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var neg(Var a);
    Var add_scalar(Var a, double c);
    Var mul_scalar(Var a, double c);

    /// 2-D matrix product op(A)·op(B) with optional transposes.
    Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);

    Var leaky_relu(Var a, double slope);
    /// Pointwise derivative of leaky_relu as a value; its own gradient is zero
    /// (the derivative is piecewise constant).
    Var leaky_relu_grad(Var a, double slope);
    /// Inverse of leaky_relu (bijective for slope > 0).
    Var leaky_relu_inv(Var a, double slope);

    Var sigmoid(Var a);
    Var softplus(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var abs(Var a);

    Var sum(Var a);                    // -> [1]
    Var sum_axis(Var a, int axis);     // removes the axis
    Var mean(Var a);                   // -> [1]

    Var slice(Var a, int axis, std::size_t start, std::size_t len);
    Var concat(const std::vector<Var>& parts, int axis);
    /// out[r, ...] = table[indices[r], ...]; backward scatter-adds.
    Var gather_rows(Var table, const std::vector<std::uint32_t>& indices);
    Var reshape(Var a, Shape shape);
    Var clamp(Var a, double lo, double hi);

    const Tensor& val(Var v) const { return node(v.id).value; }
    bool requires_grad(Var v) const { return node(v.id).requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Adjoints of everything reachable from `root`, which must hold exactly
    /// one element. Gradients are exact for the recorded primitives.
    Grads backward(Var root) const;

  private:
    struct Node {
        Op op;
        std::int32_t a = -1, b = -1;
        Tensor value;
        bool requires_grad = false;
        double p0 = 0.0, p1 = 0.0;       // slope / clamp bounds / scalar
        bool ta = false, tb = false;     // matmul transposes
        int axis = 0;
        std::size_t start = 0;
        std::vector<std::int32_t> rest;  // concat inputs
        std::vector<std::uint32_t> indices;
    };

    const Node& node(std::int32_t id) const;
    Var push(Node&& n);
    Var unary(Op op, Var a, double p0 = 0.0, double p1 = 0.0);
    Var binary(Op op, Var a, Var b);
    void check(Var v, const char* who) const;

    std::vector<Node> nodes_;
};

/// C = op(A)·op(B) into a row-major buffer; A is [M,K] (or [K,M] when ta),
/// B is [K,N] (or [N,K] when tb). When `accumulate`, adds into C.
void matmul_kernel(double* c, const double* a, const double* b, std::size_t m,
                   std::size_t k, std::size_t n, bool ta, bool tb, bool accumulate);

} // namespace dislab

#endif

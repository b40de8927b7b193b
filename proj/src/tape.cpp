#include "dislab/tape.hpp"

#include <algorithm>
#include <cmath>

namespace dislab {

namespace {

const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::div: return "div";
        case Op::neg: return "neg";
        case Op::add_scalar: return "add_scalar";
        case Op::mul_scalar: return "mul_scalar";
        case Op::matmul: return "matmul";
        case Op::leaky_relu: return "leaky_relu";
        case Op::leaky_relu_grad: return "leaky_relu_grad";
        case Op::leaky_relu_inv: return "leaky_relu_inv";
        case Op::sigmoid: return "sigmoid";
        case Op::softplus: return "softplus";
        case Op::exp: return "exp";
        case Op::log: return "log";
        case Op::abs: return "abs";
        case Op::sum: return "sum";
        case Op::sum_axis: return "sum_axis";
        case Op::mean: return "mean";
        case Op::slice: return "slice";
        case Op::concat: return "concat";
        case Op::gather_rows: return "gather_rows";
        case Op::reshape: return "reshape";
        case Op::clamp: return "clamp";
    }
    return "?";
}

// Right-aligned numpy-style broadcasting plan for a binary elementwise op.
struct BcPlan {
    Shape out;
    std::vector<std::ptrdiff_t> astr, bstr;  // strides in the output walk; 0 on broadcast dims
    std::size_t n = 0;
    bool same = false;  // identical shapes: flat fast path
};

BcPlan broadcast_plan(const char* who, const Shape& a, const Shape& b) {
    BcPlan p;
    if (a == b) {
        p.out = a;
        p.n = shape_numel(a);
        p.same = true;
        return p;
    }
    std::size_t r = std::max(a.size(), b.size());
    p.out.resize(r);
    std::vector<std::size_t> ad(r, 1), bd(r, 1);
    for (std::size_t i = 0; i < a.size(); ++i) ad[r - a.size() + i] = a[i];
    for (std::size_t i = 0; i < b.size(); ++i) bd[r - b.size() + i] = b[i];
    for (std::size_t i = 0; i < r; ++i) {
        if (ad[i] == bd[i]) p.out[i] = ad[i];
        else if (ad[i] == 1) p.out[i] = bd[i];
        else if (bd[i] == 1) p.out[i] = ad[i];
        else
            fail(ErrorCode::shape_mismatch, std::string(who) + ": shapes " + shape_str(a) +
                                                " and " + shape_str(b) + " do not broadcast");
    }
    p.astr.assign(r, 0);
    p.bstr.assign(r, 0);
    std::ptrdiff_t sa = 1, sb = 1;
    for (std::size_t i = r; i-- > 0;) {
        p.astr[i] = (ad[i] == 1) ? 0 : sa;
        p.bstr[i] = (bd[i] == 1) ? 0 : sb;
        sa *= static_cast<std::ptrdiff_t>(ad[i]);
        sb *= static_cast<std::ptrdiff_t>(bd[i]);
    }
    p.n = shape_numel(p.out);
    return p;
}

// Walks the broadcast output space calling f(ai, bi, oi).
template <typename F>
void bc_walk(const BcPlan& p, F&& f) {
    if (p.same) {
        for (std::size_t i = 0; i < p.n; ++i) f(i, i, i);
        return;
    }
    std::size_t r = p.out.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t ai = 0, bi = 0;
    for (std::size_t oi = 0; oi < p.n; ++oi) {
        f(ai, bi, oi);
        for (std::size_t d = r; d-- > 0;) {
            idx[d]++;
            ai += p.astr[d];
            bi += p.bstr[d];
            if (idx[d] < p.out[d]) break;
            ai -= static_cast<std::size_t>(p.astr[d]) * p.out[d];
            bi -= static_cast<std::size_t>(p.bstr[d]) * p.out[d];
            idx[d] = 0;
        }
    }
}

double stable_softplus(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

} // namespace

void matmul_kernel(double* c, const double* a, const double* b, std::size_t m,
                   std::size_t k, std::size_t n, bool ta, bool tb, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    if (!ta && !tb) {
        for (std::size_t i = 0; i < m; ++i) {
            const double* arow = a + i * k;
            double* crow = c + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                double av = arow[p];
                if (av == 0.0) continue;
                const double* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else if (!ta && tb) {
        // C[i,j] = dot(A[i,:], B[j,:])
        for (std::size_t i = 0; i < m; ++i) {
            const double* arow = a + i * k;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const double* brow = b + j * k;
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
                crow[j] += acc;
            }
        }
    } else if (ta && !tb) {
        // C[i,j] += A[p,i] * B[p,j]
        for (std::size_t p = 0; p < k; ++p) {
            const double* arow = a + p * m;
            const double* brow = b + p * n;
            for (std::size_t i = 0; i < m; ++i) {
                double av = arow[i];
                if (av == 0.0) continue;
                double* crow = c + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else {
        // C[i,j] += A[p,i] * B[j,p]
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
                c[i * n + j] += acc;
            }
    }
}

const Tensor& Grads::at(Var v) const {
    if (!has(v))
        fail(ErrorCode::invalid_argument, "Grads::at: no gradient recorded for this node");
    return g_[v.id];
}

const Tape::Node& Tape::node(std::int32_t id) const { return nodes_[id]; }

void Tape::check(Var v, const char* who) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
        fail(ErrorCode::invalid_argument, std::string(who) + ": invalid tape handle");
}

Var Tape::push(Node&& n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(const Tensor& value) { return leaf(value, value.requires_grad); }

Var Tape::leaf(const Tensor& value, bool requires_grad) {
    Node n;
    n.op = Op::leaf;
    n.value = value;
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

Var Tape::unary(Op op, Var a, double p0, double p1) {
    check(a, op_name(op));
    const Node& na = node(a.id);
    Node n;
    n.op = op;
    n.a = a.id;
    n.p0 = p0;
    n.p1 = p1;
    n.requires_grad = na.requires_grad;
    const Tensor& x = na.value;
    Tensor y = Tensor::zeros(x.shape());
    const double* xv = x.data();
    double* yv = y.data();
    std::size_t m = x.size();
    switch (op) {
        case Op::neg:
            for (std::size_t i = 0; i < m; ++i) yv[i] = -xv[i];
            break;
        case Op::add_scalar:
            for (std::size_t i = 0; i < m; ++i) yv[i] = xv[i] + p0;
            break;
        case Op::mul_scalar:
            for (std::size_t i = 0; i < m; ++i) yv[i] = xv[i] * p0;
            break;
        case Op::leaky_relu:
            for (std::size_t i = 0; i < m; ++i) yv[i] = xv[i] > 0.0 ? xv[i] : p0 * xv[i];
            break;
        case Op::leaky_relu_grad:
            for (std::size_t i = 0; i < m; ++i) yv[i] = xv[i] > 0.0 ? 1.0 : p0;
            break;
        case Op::leaky_relu_inv:
            for (std::size_t i = 0; i < m; ++i) yv[i] = xv[i] > 0.0 ? xv[i] : xv[i] / p0;
            break;
        case Op::sigmoid:
            for (std::size_t i = 0; i < m; ++i) yv[i] = 1.0 / (1.0 + std::exp(-xv[i]));
            break;
        case Op::softplus:
            for (std::size_t i = 0; i < m; ++i) yv[i] = stable_softplus(xv[i]);
            break;
        case Op::exp:
            for (std::size_t i = 0; i < m; ++i) yv[i] = std::exp(xv[i]);
            break;
        case Op::log:
            for (std::size_t i = 0; i < m; ++i) yv[i] = std::log(xv[i]);
            break;
        case Op::abs:
            for (std::size_t i = 0; i < m; ++i) yv[i] = std::fabs(xv[i]);
            break;
        case Op::clamp:
            for (std::size_t i = 0; i < m; ++i) yv[i] = std::min(std::max(xv[i], p0), p1);
            break;
        default:
            fail(ErrorCode::internal, std::string("unary: bad op ") + op_name(op));
    }
    n.value = std::move(y);
    return push(std::move(n));
}

Var Tape::binary(Op op, Var a, Var b) {
    check(a, op_name(op));
    check(b, op_name(op));
    const Node& na = node(a.id);
    const Node& nb = node(b.id);
    BcPlan plan = broadcast_plan(op_name(op), na.value.shape(), nb.value.shape());
    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    Tensor y = Tensor::zeros(plan.out);
    const double* av = na.value.data();
    const double* bv = nb.value.data();
    double* yv = y.data();
    switch (op) {
        case Op::add:
            bc_walk(plan, [&](std::size_t ai, std::size_t bi, std::size_t oi) {
                yv[oi] = av[ai] + bv[bi];
            });
            break;
        case Op::sub:
            bc_walk(plan, [&](std::size_t ai, std::size_t bi, std::size_t oi) {
                yv[oi] = av[ai] - bv[bi];
            });
            break;
        case Op::mul:
            bc_walk(plan, [&](std::size_t ai, std::size_t bi, std::size_t oi) {
                yv[oi] = av[ai] * bv[bi];
            });
            break;
        case Op::div:
            bc_walk(plan, [&](std::size_t ai, std::size_t bi, std::size_t oi) {
                yv[oi] = av[ai] / bv[bi];
            });
            break;
        default:
            fail(ErrorCode::internal, std::string("binary: bad op ") + op_name(op));
    }
    n.value = std::move(y);
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) { return binary(Op::add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::mul, a, b); }
Var Tape::div(Var a, Var b) { return binary(Op::div, a, b); }
Var Tape::neg(Var a) { return unary(Op::neg, a); }
Var Tape::add_scalar(Var a, double c) { return unary(Op::add_scalar, a, c); }
Var Tape::mul_scalar(Var a, double c) { return unary(Op::mul_scalar, a, c); }
Var Tape::leaky_relu(Var a, double slope) { return unary(Op::leaky_relu, a, slope); }
Var Tape::leaky_relu_grad(Var a, double slope) { return unary(Op::leaky_relu_grad, a, slope); }
Var Tape::leaky_relu_inv(Var a, double slope) { return unary(Op::leaky_relu_inv, a, slope); }
Var Tape::sigmoid(Var a) { return unary(Op::sigmoid, a); }
Var Tape::softplus(Var a) { return unary(Op::softplus, a); }
Var Tape::exp(Var a) { return unary(Op::exp, a); }
Var Tape::log(Var a) { return unary(Op::log, a); }
Var Tape::abs(Var a) { return unary(Op::abs, a); }
Var Tape::clamp(Var a, double lo, double hi) { return unary(Op::clamp, a, lo, hi); }

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
    check(a, "matmul");
    check(b, "matmul");
    const Tensor& A = node(a.id).value;
    const Tensor& B = node(b.id).value;
    if (A.rank() != 2 || B.rank() != 2)
        fail(ErrorCode::shape_mismatch, "matmul: needs rank-2 operands, got " +
                                            shape_str(A.shape()) + " and " + shape_str(B.shape()));
    std::size_t m = trans_a ? A.dim(1) : A.dim(0);
    std::size_t k = trans_a ? A.dim(0) : A.dim(1);
    std::size_t kb = trans_b ? B.dim(1) : B.dim(0);
    std::size_t nn = trans_b ? B.dim(0) : B.dim(1);
    if (k != kb)
        fail(ErrorCode::shape_mismatch, std::string("matmul: inner dimensions disagree, ") +
                                            shape_str(A.shape()) + (trans_a ? "^T" : "") + " x " +
                                            shape_str(B.shape()) + (trans_b ? "^T" : ""));
    Node n;
    n.op = Op::matmul;
    n.a = a.id;
    n.b = b.id;
    n.ta = trans_a;
    n.tb = trans_b;
    n.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
    n.value = Tensor::zeros({m, nn});
    matmul_kernel(n.value.data(), A.data(), B.data(), m, k, nn, trans_a, trans_b, false);
    return push(std::move(n));
}

Var Tape::sum(Var a) {
    check(a, "sum");
    const Tensor& x = node(a.id).value;
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
    Node n;
    n.op = Op::sum;
    n.a = a.id;
    n.requires_grad = node(a.id).requires_grad;
    n.value = Tensor::scalar(acc);
    return push(std::move(n));
}

Var Tape::mean(Var a) {
    check(a, "mean");
    const Tensor& x = node(a.id).value;
    if (x.size() == 0) fail(ErrorCode::invalid_argument, "mean: empty tensor");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
    Node n;
    n.op = Op::mean;
    n.a = a.id;
    n.requires_grad = node(a.id).requires_grad;
    n.value = Tensor::scalar(acc / static_cast<double>(x.size()));
    return push(std::move(n));
}

Var Tape::sum_axis(Var a, int axis) {
    check(a, "sum_axis");
    const Tensor& x = node(a.id).value;
    if (axis < 0 || static_cast<std::size_t>(axis) >= x.rank())
        fail(ErrorCode::invalid_argument,
             "sum_axis: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
    Shape out;
    for (std::size_t d = 0; d < x.rank(); ++d)
        if (d != static_cast<std::size_t>(axis)) out.push_back(x.dim(d));
    if (out.empty()) out = {1};
    std::size_t outer = 1, inner = 1, ax = x.dim(axis);
    for (std::size_t d = 0; d < static_cast<std::size_t>(axis); ++d) outer *= x.dim(d);
    for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
    Node n;
    n.op = Op::sum_axis;
    n.a = a.id;
    n.axis = axis;
    n.requires_grad = node(a.id).requires_grad;
    Tensor y = Tensor::zeros(out);
    const double* xv = x.data();
    double* yv = y.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t s = 0; s < ax; ++s) {
            const double* src = xv + (o * ax + s) * inner;
            double* dst = yv + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    n.value = std::move(y);
    return push(std::move(n));
}

Var Tape::slice(Var a, int axis, std::size_t start, std::size_t len) {
    check(a, "slice");
    const Tensor& x = node(a.id).value;
    if (axis < 0 || static_cast<std::size_t>(axis) >= x.rank())
        fail(ErrorCode::invalid_argument,
             "slice: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
    if (start + len > x.dim(axis))
        fail(ErrorCode::invalid_argument,
             "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                 ") exceeds axis extent " + std::to_string(x.dim(axis)));
    Shape out = x.shape();
    out[axis] = len;
    std::size_t outer = 1, inner = 1, ax = x.dim(axis);
    for (std::size_t d = 0; d < static_cast<std::size_t>(axis); ++d) outer *= x.dim(d);
    for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
    Node n;
    n.op = Op::slice;
    n.a = a.id;
    n.axis = axis;
    n.start = start;
    n.requires_grad = node(a.id).requires_grad;
    Tensor y = Tensor::zeros(out);
    const double* xv = x.data();
    double* yv = y.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t s = 0; s < len; ++s)
            std::copy(xv + (o * ax + start + s) * inner, xv + (o * ax + start + s + 1) * inner,
                      yv + (o * len + s) * inner);
    n.value = std::move(y);
    return push(std::move(n));
}

Var Tape::concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) fail(ErrorCode::invalid_argument, "concat: no inputs");
    for (Var v : parts) check(v, "concat");
    const Tensor& first = node(parts[0].id).value;
    if (axis < 0 || static_cast<std::size_t>(axis) >= first.rank())
        fail(ErrorCode::invalid_argument, "concat: axis " + std::to_string(axis) +
                                              " out of range for " + shape_str(first.shape()));
    Shape out = first.shape();
    std::size_t total = 0;
    for (Var v : parts) {
        const Tensor& t = node(v.id).value;
        if (t.rank() != first.rank())
            fail(ErrorCode::shape_mismatch, "concat: rank mismatch between " +
                                                shape_str(first.shape()) + " and " +
                                                shape_str(t.shape()));
        for (std::size_t d = 0; d < t.rank(); ++d)
            if (d != static_cast<std::size_t>(axis) && t.dim(d) != first.dim(d))
                fail(ErrorCode::shape_mismatch, "concat: shapes " + shape_str(first.shape()) +
                                                    " and " + shape_str(t.shape()) +
                                                    " disagree off-axis");
        total += t.dim(axis);
    }
    out[axis] = total;
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < static_cast<std::size_t>(axis); ++d) outer *= first.dim(d);
    for (std::size_t d = axis + 1; d < first.rank(); ++d) inner *= first.dim(d);
    Node n;
    n.op = Op::concat;
    n.axis = axis;
    n.requires_grad = false;
    for (Var v : parts) {
        n.rest.push_back(v.id);
        n.requires_grad = n.requires_grad || node(v.id).requires_grad;
    }
    Tensor y = Tensor::zeros(out);
    double* yv = y.data();
    std::size_t offset = 0;
    for (Var v : parts) {
        const Tensor& t = node(v.id).value;
        std::size_t ax = t.dim(axis);
        const double* xv = t.data();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy(xv + o * ax * inner, xv + (o + 1) * ax * inner,
                      yv + (o * total + offset) * inner);
        offset += ax;
    }
    n.value = std::move(y);
    return push(std::move(n));
}

Var Tape::gather_rows(Var table, const std::vector<std::uint32_t>& indices) {
    check(table, "gather_rows");
    const Tensor& t = node(table.id).value;
    if (t.rank() < 1) fail(ErrorCode::shape_mismatch, "gather_rows: table must have rank >= 1");
    std::size_t rows = t.dim(0);
    std::size_t rowsz = t.size() / std::max<std::size_t>(rows, 1);
    for (std::uint32_t ix : indices)
        if (ix >= rows)
            fail(ErrorCode::invalid_argument,
                 "gather_rows: index " + std::to_string(ix) + " out of range [0," +
                     std::to_string(rows) + ")");
    Shape out = t.shape();
    out[0] = indices.size();
    Node n;
    n.op = Op::gather_rows;
    n.a = table.id;
    n.indices = indices;
    n.requires_grad = node(table.id).requires_grad;
    Tensor y = Tensor::zeros(out);
    for (std::size_t r = 0; r < indices.size(); ++r)
        std::copy(t.data() + indices[r] * rowsz, t.data() + (indices[r] + 1) * rowsz,
                  y.data() + r * rowsz);
    n.value = std::move(y);
    return push(std::move(n));
}

Var Tape::reshape(Var a, Shape shape) {
    check(a, "reshape");
    const Tensor& x = node(a.id).value;
    if (shape_numel(shape) != x.size())
        fail(ErrorCode::shape_mismatch, "reshape: cannot view " + shape_str(x.shape()) + " as " +
                                            shape_str(shape));
    Node n;
    n.op = Op::reshape;
    n.a = a.id;
    n.requires_grad = node(a.id).requires_grad;
    n.value = Tensor::from(std::move(shape), x.vec());
    return push(std::move(n));
}

Grads Tape::backward(Var root) const {
    check(root, "backward");
    const Node& rn = node(root.id);
    if (rn.value.size() != 1)
        fail(ErrorCode::invalid_argument,
             "backward: root must be a scalar, got shape " + shape_str(rn.value.shape()));
    Grads grads;
    grads.g_.resize(nodes_.size());
    grads.has_.assign(nodes_.size(), 0);
    auto ensure = [&](std::int32_t id) -> Tensor& {
        if (!grads.has_[id]) {
            grads.g_[id] = Tensor::zeros(nodes_[id].value.shape());
            grads.has_[id] = 1;
        }
        return grads.g_[id];
    };
    ensure(root.id)[0] = 1.0;

    for (std::int32_t id = root.id; id >= 0; --id) {
        const Node& n = nodes_[id];
        if (!grads.has_[id] || !n.requires_grad) continue;
        const Tensor& gy = grads.g_[id];
        auto want = [&](std::int32_t in) { return in >= 0 && nodes_[in].requires_grad; };

        switch (n.op) {
            case Op::leaf:
                break;
            case Op::add:
            case Op::sub:
            case Op::mul:
            case Op::div: {
                const Tensor& av = nodes_[n.a].value;
                const Tensor& bv = nodes_[n.b].value;
                BcPlan plan = broadcast_plan(op_name(n.op), av.shape(), bv.shape());
                bool wa = want(n.a), wb = want(n.b);
                double* ga = wa ? ensure(n.a).data() : nullptr;
                double* gb = wb ? ensure(n.b).data() : nullptr;
                const double* a = av.data();
                const double* b = bv.data();
                const double* g = gy.data();
                switch (n.op) {
                    case Op::add:
                        bc_walk(plan, [&](std::size_t ai, std::size_t bi, std::size_t oi) {
                            if (ga) ga[ai] += g[oi];
                            if (gb) gb[bi] += g[oi];
                        });
                        break;
                    case Op::sub:
                        bc_walk(plan, [&](std::size_t ai, std::size_t bi, std::size_t oi) {
                            if (ga) ga[ai] += g[oi];
                            if (gb) gb[bi] -= g[oi];
                        });
                        break;
                    case Op::mul:
                        bc_walk(plan, [&](std::size_t ai, std::size_t bi, std::size_t oi) {
                            if (ga) ga[ai] += g[oi] * b[bi];
                            if (gb) gb[bi] += g[oi] * a[ai];
                        });
                        break;
                    case Op::div:
                        bc_walk(plan, [&](std::size_t ai, std::size_t bi, std::size_t oi) {
                            if (ga) ga[ai] += g[oi] / b[bi];
                            if (gb) gb[bi] -= g[oi] * a[ai] / (b[bi] * b[bi]);
                        });
                        break;
                    default: break;
                }
                break;
            }
            case Op::neg:
                if (want(n.a)) {
                    double* ga = ensure(n.a).data();
                    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] -= gy[i];
                }
                break;
            case Op::add_scalar:
                if (want(n.a)) {
                    double* ga = ensure(n.a).data();
                    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
                }
                break;
            case Op::mul_scalar:
                if (want(n.a)) {
                    double* ga = ensure(n.a).data();
                    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += n.p0 * gy[i];
                }
                break;
            case Op::matmul: {
                const Tensor& A = nodes_[n.a].value;
                const Tensor& B = nodes_[n.b].value;
                std::size_t m = n.value.dim(0), nn = n.value.dim(1);
                std::size_t k = n.ta ? A.dim(0) : A.dim(1);
                // dA and dB for the four transpose cases of C = op(A)·op(B)
                if (want(n.a)) {
                    Tensor& ga = ensure(n.a);
                    if (!n.ta && !n.tb)
                        matmul_kernel(ga.data(), gy.data(), B.data(), m, nn, k, false, true, true);
                    else if (!n.ta && n.tb)
                        matmul_kernel(ga.data(), gy.data(), B.data(), m, nn, k, false, false, true);
                    else if (n.ta && !n.tb)
                        matmul_kernel(ga.data(), B.data(), gy.data(), k, nn, m, false, true, true);
                    else
                        matmul_kernel(ga.data(), B.data(), gy.data(), k, nn, m, true, true, true);
                }
                if (want(n.b)) {
                    Tensor& gb = ensure(n.b);
                    if (!n.ta && !n.tb)
                        matmul_kernel(gb.data(), A.data(), gy.data(), k, m, nn, true, false, true);
                    else if (!n.ta && n.tb)
                        matmul_kernel(gb.data(), gy.data(), A.data(), nn, m, k, true, false, true);
                    else if (n.ta && !n.tb)
                        matmul_kernel(gb.data(), A.data(), gy.data(), k, m, nn, false, false, true);
                    else
                        matmul_kernel(gb.data(), gy.data(), A.data(), nn, m, k, true, true, true);
                }
                break;
            }
            case Op::leaky_relu:
                if (want(n.a)) {
                    const Tensor& x = nodes_[n.a].value;
                    double* ga = ensure(n.a).data();
                    for (std::size_t i = 0; i < gy.size(); ++i)
                        ga[i] += gy[i] * (x[i] > 0.0 ? 1.0 : n.p0);
                }
                break;
            case Op::leaky_relu_grad:
                // Piecewise-constant value; zero gradient almost everywhere.
                break;
            case Op::leaky_relu_inv:
                if (want(n.a)) {
                    const Tensor& x = nodes_[n.a].value;
                    double* ga = ensure(n.a).data();
                    for (std::size_t i = 0; i < gy.size(); ++i)
                        ga[i] += gy[i] * (x[i] > 0.0 ? 1.0 : 1.0 / n.p0);
                }
                break;
            case Op::sigmoid:
                if (want(n.a)) {
                    double* ga = ensure(n.a).data();
                    const Tensor& y = n.value;
                    for (std::size_t i = 0; i < gy.size(); ++i)
                        ga[i] += gy[i] * y[i] * (1.0 - y[i]);
                }
                break;
            case Op::softplus:
                if (want(n.a)) {
                    const Tensor& x = nodes_[n.a].value;
                    double* ga = ensure(n.a).data();
                    for (std::size_t i = 0; i < gy.size(); ++i)
                        ga[i] += gy[i] / (1.0 + std::exp(-x[i]));
                }
                break;
            case Op::exp:
                if (want(n.a)) {
                    double* ga = ensure(n.a).data();
                    const Tensor& y = n.value;
                    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * y[i];
                }
                break;
            case Op::log:
                if (want(n.a)) {
                    const Tensor& x = nodes_[n.a].value;
                    double* ga = ensure(n.a).data();
                    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] / x[i];
                }
                break;
            case Op::abs:
                if (want(n.a)) {
                    const Tensor& x = nodes_[n.a].value;
                    double* ga = ensure(n.a).data();
                    for (std::size_t i = 0; i < gy.size(); ++i)
                        ga[i] += gy[i] * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
                }
                break;
            case Op::sum:
                if (want(n.a)) {
                    double* ga = ensure(n.a).data();
                    double g = gy[0];
                    for (std::size_t i = 0; i < nodes_[n.a].value.size(); ++i) ga[i] += g;
                }
                break;
            case Op::mean:
                if (want(n.a)) {
                    double* ga = ensure(n.a).data();
                    double g = gy[0] / static_cast<double>(nodes_[n.a].value.size());
                    for (std::size_t i = 0; i < nodes_[n.a].value.size(); ++i) ga[i] += g;
                }
                break;
            case Op::sum_axis: {
                if (!want(n.a)) break;
                const Tensor& x = nodes_[n.a].value;
                std::size_t outer = 1, inner = 1, ax = x.dim(n.axis);
                for (int d = 0; d < n.axis; ++d) outer *= x.dim(d);
                for (std::size_t d = n.axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
                double* ga = ensure(n.a).data();
                const double* g = gy.data();
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t s = 0; s < ax; ++s) {
                        double* dst = ga + (o * ax + s) * inner;
                        const double* src = g + o * inner;
                        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                    }
                break;
            }
            case Op::slice: {
                if (!want(n.a)) break;
                const Tensor& x = nodes_[n.a].value;
                std::size_t outer = 1, inner = 1, ax = x.dim(n.axis);
                std::size_t len = n.value.dim(n.axis);
                for (int d = 0; d < n.axis; ++d) outer *= x.dim(d);
                for (std::size_t d = n.axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
                double* ga = ensure(n.a).data();
                const double* g = gy.data();
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t s = 0; s < len; ++s) {
                        double* dst = ga + (o * ax + n.start + s) * inner;
                        const double* src = g + (o * len + s) * inner;
                        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                    }
                break;
            }
            case Op::concat: {
                std::size_t outer = 1, inner = 1;
                std::size_t total = n.value.dim(n.axis);
                for (int d = 0; d < n.axis; ++d) outer *= n.value.dim(d);
                for (std::size_t d = n.axis + 1; d < n.value.rank(); ++d) inner *= n.value.dim(d);
                const double* g = gy.data();
                std::size_t offset = 0;
                for (std::int32_t in : n.rest) {
                    const Tensor& t = nodes_[in].value;
                    std::size_t ax = t.dim(n.axis);
                    if (want(in)) {
                        double* ga = ensure(in).data();
                        for (std::size_t o = 0; o < outer; ++o) {
                            const double* src = g + (o * total + offset) * inner;
                            double* dst = ga + o * ax * inner;
                            for (std::size_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
                        }
                    }
                    offset += ax;
                }
                break;
            }
            case Op::gather_rows: {
                if (!want(n.a)) break;
                const Tensor& t = nodes_[n.a].value;
                std::size_t rowsz = t.size() / t.dim(0);
                double* ga = ensure(n.a).data();
                const double* g = gy.data();
                for (std::size_t r = 0; r < n.indices.size(); ++r) {
                    double* dst = ga + n.indices[r] * rowsz;
                    const double* src = g + r * rowsz;
                    for (std::size_t i = 0; i < rowsz; ++i) dst[i] += src[i];
                }
                break;
            }
            case Op::reshape:
                if (want(n.a)) {
                    double* ga = ensure(n.a).data();
                    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
                }
                break;
            case Op::clamp:
                if (want(n.a)) {
                    const Tensor& x = nodes_[n.a].value;
                    double* ga = ensure(n.a).data();
                    for (std::size_t i = 0; i < gy.size(); ++i)
                        if (x[i] > n.p0 && x[i] < n.p1) ga[i] += gy[i];
                }
                break;
        }
    }
    return grads;
}

} // namespace dislab

#include <algorithm>
#include <cmath>
#include <optional>

#include "mdl/autodiff.hpp"
#include "mdl/errors.hpp"
#include "mdl/kernels.hpp"

namespace mdl::ad {

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::MatMul: return "matmul";
        case Op::BiasAdd: return "bias_add";
        case Op::Add: return "add";
        case Op::Mul: return "mul";
        case Op::ScaleRows: return "scale_rows";
        case Op::Scale: return "scale";
        case Op::Relu: return "relu";
        case Op::Sigmoid: return "sigmoid";
        case Op::Softmax: return "softmax";
        case Op::Concat: return "concat";
        case Op::Slice: return "slice";
        case Op::Mean: return "mean";
        case Op::Sum: return "sum";
        case Op::SoftmaxCrossEntropy: return "softmax_cross_entropy";
        case Op::BinaryCrossEntropy: return "binary_cross_entropy";
        case Op::GradReverse: return "grad_reverse";
    }
    return "?";
}

namespace {

[[noreturn]] void shape_error(Op op, const Shape& a, const Shape& b) {
    throw DimensionError(std::string(op_name(op)) + ": incompatible shapes " + shape_string(a) +
                         " and " + shape_string(b));
}

void require_arity(Op op, std::size_t got, std::size_t want) {
    if (got != want)
        throw DimensionError(std::string(op_name(op)) + ": expected " + std::to_string(want) +
                             " inputs, got " + std::to_string(got));
}

void require_matrix(Op op, const Tensor& t) {
    if (t.rank() != 2)
        throw DimensionError(std::string(op_name(op)) + ": expected a [B,n] matrix, got " +
                             shape_string(t.shape));
}

double sigmoid_of(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

std::size_t class_index(double label, std::size_t classes) {
    if (!(label >= 0.0) || label != std::floor(label) || label >= static_cast<double>(classes))
        throw ContractError("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    return static_cast<std::size_t>(label);
}

// Per-row log-probability of the labelled class, or nullopt when the
// probability falls below epsilon and the loss is clamped.
struct CeRow {
    double loss;
    bool clamped;
};

CeRow softmax_ce_row(const double* z, std::size_t n, std::size_t label, double eps) {
    double mx = z[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, z[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(z[j] - mx);
    const double logp = z[label] - mx - std::log(s);
    if (logp < std::log(eps)) return {-std::log(eps), true};
    return {-logp, false};
}

CeRow bce_row(double z, double y, double eps) {
    // log p = -softplus(-z), log(1-p) = -softplus(z)
    const double log_eps = std::log(eps);
    const double logp = y > 0.5 ? -softplus(-z) : -softplus(z);
    if (logp < log_eps) return {-log_eps, true};
    return {-logp, false};
}

}  // namespace

Tensor compute_primitive(Op op, std::span<const Tensor* const> in, const OpAttrs& attrs) {
    switch (op) {
        case Op::Leaf:
            throw ContractError("leaves are not computed");
        case Op::MatMul: {
            require_arity(op, in.size(), 2);
            const Tensor& a = *in[0];
            const Tensor& b = *in[1];
            if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) shape_error(op, a.shape, b.shape);
            const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
            Tensor out = Tensor::zeros({m, n});
            kernels::matmul(a.data, b.data, out.data, m, k, n);
            return out;
        }
        case Op::BiasAdd: {
            require_arity(op, in.size(), 2);
            const Tensor& x = *in[0];
            const Tensor& b = *in[1];
            if (x.rank() != 2 || b.rank() != 1 || b.shape[0] != x.shape[1]) shape_error(op, x.shape, b.shape);
            Tensor out = Tensor::zeros(x.shape);
            kernels::bias_add(x.data, b.data, out.data, x.shape[0], x.shape[1]);
            return out;
        }
        case Op::Add:
        case Op::Mul: {
            require_arity(op, in.size(), 2);
            const Tensor& a = *in[0];
            const Tensor& b = *in[1];
            if (a.shape != b.shape) shape_error(op, a.shape, b.shape);
            Tensor out = Tensor::zeros(a.shape);
            if (op == Op::Add)
                for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
            else
                for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
            return out;
        }
        case Op::ScaleRows: {
            require_arity(op, in.size(), 2);
            const Tensor& x = *in[0];
            const Tensor& w = *in[1];
            if (x.rank() != 2 || w.rank() != 2 || w.shape[1] != 1 || w.shape[0] != x.shape[0])
                shape_error(op, x.shape, w.shape);
            Tensor out = Tensor::zeros(x.shape);
            const std::size_t n = x.shape[1];
            for (std::size_t i = 0; i < x.shape[0]; ++i)
                for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] * w[i];
            return out;
        }
        case Op::Scale:
        case Op::GradReverse: {
            require_arity(op, in.size(), 1);
            Tensor out = Tensor::zeros(in[0]->shape);
            if (op == Op::GradReverse) out.data = in[0]->data;
            else
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[0]->data[i] * attrs.scalar;
            return out;
        }
        case Op::Relu: {
            require_arity(op, in.size(), 1);
            Tensor out = Tensor::zeros(in[0]->shape);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[0]->data[i] > 0.0 ? in[0]->data[i] : 0.0;
            return out;
        }
        case Op::Sigmoid: {
            require_arity(op, in.size(), 1);
            Tensor out = Tensor::zeros(in[0]->shape);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_of(in[0]->data[i]);
            return out;
        }
        case Op::Softmax: {
            require_arity(op, in.size(), 1);
            require_matrix(op, *in[0]);
            Tensor out = Tensor::zeros(in[0]->shape);
            kernels::softmax_rows(in[0]->data, out.data, in[0]->shape[0], in[0]->shape[1]);
            return out;
        }
        case Op::Concat: {
            if (in.empty()) throw DimensionError("concat: no inputs");
            const std::size_t rows = in[0]->rank() == 2 ? in[0]->shape[0] : 0;
            std::size_t total = 0;
            for (const Tensor* t : in) {
                if (t->rank() != 2 || t->shape[0] != rows) shape_error(op, in[0]->shape, t->shape);
                total += t->shape[1];
            }
            Tensor out = Tensor::zeros({rows, total});
            std::size_t offset = 0;
            for (const Tensor* t : in) {
                const std::size_t w = t->shape[1];
                for (std::size_t i = 0; i < rows; ++i)
                    std::copy_n(t->data.data() + i * w, w, out.data.data() + i * total + offset);
                offset += w;
            }
            return out;
        }
        case Op::Slice: {
            require_arity(op, in.size(), 1);
            const Tensor& x = *in[0];
            require_matrix(op, x);
            if (attrs.begin >= attrs.end || attrs.end > x.shape[1])
                throw DimensionError("slice: column range [" + std::to_string(attrs.begin) + "," +
                                     std::to_string(attrs.end) + ") outside " + shape_string(x.shape));
            const std::size_t rows = x.shape[0], w = attrs.end - attrs.begin, n = x.shape[1];
            Tensor out = Tensor::zeros({rows, w});
            for (std::size_t i = 0; i < rows; ++i)
                std::copy_n(x.data.data() + i * n + attrs.begin, w, out.data.data() + i * w);
            return out;
        }
        case Op::Mean:
        case Op::Sum: {
            require_arity(op, in.size(), 1);
            double s = 0.0;
            for (double v : in[0]->data) s += v;
            if (op == Op::Mean) s /= static_cast<double>(in[0]->size());
            return Tensor::scalar(s);
        }
        case Op::SoftmaxCrossEntropy: {
            require_arity(op, in.size(), 2);
            const Tensor& z = *in[0];
            const Tensor& y = *in[1];
            require_matrix(op, z);
            if (y.size() != z.shape[0]) shape_error(op, z.shape, y.shape);
            const std::size_t b = z.shape[0], c = z.shape[1];
            double total = 0.0;
            for (std::size_t i = 0; i < b; ++i)
                total += softmax_ce_row(z.data.data() + i * c, c, class_index(y[i], c), attrs.epsilon).loss;
            return Tensor::scalar(total / static_cast<double>(b));
        }
        case Op::BinaryCrossEntropy: {
            require_arity(op, in.size(), 2);
            const Tensor& z = *in[0];
            const Tensor& y = *in[1];
            require_matrix(op, z);
            if (z.shape[1] != 1 || y.size() != z.shape[0]) shape_error(op, z.shape, y.shape);
            const std::size_t b = z.shape[0];
            double total = 0.0;
            for (std::size_t i = 0; i < b; ++i) total += bce_row(z[i], static_cast<double>(class_index(y[i], 2)), attrs.epsilon).loss;
            return Tensor::scalar(total / static_cast<double>(b));
        }
    }
    throw ContractError("unknown primitive");
}

const Tensor& Var::value() const {
    if (!tape_) throw ContractError("unbound variable");
    return tape_->node(id_).value;
}

bool Var::requires_grad() const { return tape_ && tape_->node(id_).requires_grad; }

const Tape::Node& Tape::node(std::size_t id) const {
    check_live();
    if (id >= nodes_.size()) throw ContractError("node id out of range");
    return nodes_[id];
}

void Tape::check_live() const {
    if (consumed_) throw ContractError("tape already consumed by backward()");
}

Var Tape::constant(Tensor value) {
    check_live();
    value.check_finite("constant");
    Node n;
    n.value = std::move(value);
    n.value.tape_id = nodes_.size();
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const std::string& name, Tensor value) {
    check_live();
    if (name.empty()) throw ContractError("parameter name must be non-empty");
    if (params_.count(name)) throw ContractError("parameter '" + name + "' registered twice");
    value.check_finite("parameter");
    Node n;
    n.value = std::move(value);
    n.value.tape_id = nodes_.size();
    n.requires_grad = true;
    n.param = name;
    params_[name] = nodes_.size();
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::apply(Op op, std::span<const Var> inputs, const OpAttrs& attrs) {
    check_live();
    if (op == Op::Leaf) throw ContractError("use constant() or parameter() for leaves");
    std::vector<const Tensor*> values;
    Node n;
    n.op = op;
    n.attrs = attrs;
    for (const Var& v : inputs) {
        if (v.tape() != this) throw ContractError(std::string(op_name(op)) + ": input from another tape");
        values.push_back(&nodes_[v.id()].value);
        n.inputs.push_back(v.id());
        n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
    }
    if ((op == Op::SoftmaxCrossEntropy || op == Op::BinaryCrossEntropy) && nodes_[n.inputs[1]].requires_grad)
        throw ContractError(std::string(op_name(op)) + ": labels must be constant");
    if (op == Op::GradReverse && !(attrs.scalar >= 0.0))
        throw ConfigError("grad_reverse: lambda must be nonnegative");
    if ((op == Op::SoftmaxCrossEntropy || op == Op::BinaryCrossEntropy) && !(attrs.epsilon > 0.0 && attrs.epsilon < 0.5))
        throw ConfigError("cross-entropy epsilon must lie in (0, 0.5)");
    n.value = compute_primitive(op, values, attrs);
    n.value.check_finite(op_name(op));
    n.value.tape_id = nodes_.size();
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

GradMap Tape::backward(Var loss) {
    check_live();
    if (loss.tape() != this) throw ContractError("backward: loss from another tape");
    const Node& root = nodes_[loss.id()];
    if (root.value.size() != 1)
        throw ContractError("backward: loss must be scalar, got shape " + shape_string(root.value.shape));

    std::vector<std::optional<std::vector<double>>> grads(nodes_.size());
    auto acc = [&](std::size_t id) -> std::vector<double>& {
        auto& g = grads[id];
        if (!g) g.emplace(nodes_[id].value.size(), 0.0);
        return *g;
    };
    if (root.requires_grad) acc(loss.id())[0] = 1.0;

    for (std::size_t idx = loss.id() + 1; idx-- > 0;) {
        Node& node = nodes_[idx];
        if (!node.requires_grad || node.op == Op::Leaf || !grads[idx]) continue;
        const std::vector<double>& g = *grads[idx];
        auto wants = [&](std::size_t k) { return nodes_[node.inputs[k]].requires_grad; };
        auto in = [&](std::size_t k) -> const Tensor& { return nodes_[node.inputs[k]].value; };

        switch (node.op) {
            case Op::Leaf:
                break;
            case Op::MatMul: {
                const Tensor& a = in(0);
                const Tensor& b = in(1);
                const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
                if (wants(0)) kernels::matmul_a_bt_acc(g, b.data, acc(node.inputs[0]), m, k, n);
                if (wants(1)) kernels::matmul_at_b_acc(a.data, g, acc(node.inputs[1]), m, k, n);
                break;
            }
            case Op::BiasAdd: {
                const std::size_t m = in(0).shape[0], n = in(0).shape[1];
                if (wants(0)) {
                    auto& gx = acc(node.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                }
                if (wants(1)) {
                    auto& gb = acc(node.inputs[1]);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                }
                break;
            }
            case Op::Add:
                for (std::size_t k = 0; k < 2; ++k)
                    if (wants(k)) {
                        auto& gx = acc(node.inputs[k]);
                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                    }
                break;
            case Op::Mul:
                for (std::size_t k = 0; k < 2; ++k)
                    if (wants(k)) {
                        const Tensor& other = in(1 - k);
                        auto& gx = acc(node.inputs[k]);
                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * other[i];
                    }
                break;
            case Op::ScaleRows: {
                const Tensor& x = in(0);
                const Tensor& w = in(1);
                const std::size_t m = x.shape[0], n = x.shape[1];
                if (wants(0)) {
                    auto& gx = acc(node.inputs[0]);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] * w[i];
                }
                if (wants(1)) {
                    auto& gw = acc(node.inputs[1]);
                    for (std::size_t i = 0; i < m; ++i) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * x[i * n + j];
                        gw[i] += s;
                    }
                }
                break;
            }
            case Op::Scale:
            case Op::GradReverse: {
                if (!wants(0)) break;
                const double f = node.op == Op::Scale ? node.attrs.scalar : -node.attrs.scalar;
                auto& gx = acc(node.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += f * g[i];
                break;
            }
            case Op::Relu: {
                if (!wants(0)) break;
                const Tensor& x = in(0);
                auto& gx = acc(node.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (x[i] > 0.0) gx[i] += g[i];
                break;
            }
            case Op::Sigmoid: {
                if (!wants(0)) break;
                const Tensor& y = node.value;
                auto& gx = acc(node.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
                break;
            }
            case Op::Softmax: {
                if (!wants(0)) break;
                const Tensor& y = node.value;
                const std::size_t m = y.shape[0], n = y.shape[1];
                auto& gx = acc(node.inputs[0]);
                for (std::size_t i = 0; i < m; ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
                    for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
                }
                break;
            }
            case Op::Concat: {
                const std::size_t rows = node.value.shape[0], total = node.value.shape[1];
                std::size_t offset = 0;
                for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                    const std::size_t w = in(k).shape[1];
                    if (wants(k)) {
                        auto& gx = acc(node.inputs[k]);
                        for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t j = 0; j < w; ++j) gx[i * w + j] += g[i * total + offset + j];
                    }
                    offset += w;
                }
                break;
            }
            case Op::Slice: {
                if (!wants(0)) break;
                const std::size_t rows = in(0).shape[0], n = in(0).shape[1];
                const std::size_t b = node.attrs.begin, w = node.attrs.end - node.attrs.begin;
                auto& gx = acc(node.inputs[0]);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < w; ++j) gx[i * n + b + j] += g[i * w + j];
                break;
            }
            case Op::Mean:
            case Op::Sum: {
                if (!wants(0)) break;
                auto& gx = acc(node.inputs[0]);
                const double f = node.op == Op::Mean ? g[0] / static_cast<double>(gx.size()) : g[0];
                for (double& v : gx) v += f;
                break;
            }
            case Op::SoftmaxCrossEntropy: {
                if (!wants(0)) break;
                const Tensor& z = in(0);
                const Tensor& y = in(1);
                const std::size_t b = z.shape[0], c = z.shape[1];
                const double f = g[0] / static_cast<double>(b);
                auto& gz = acc(node.inputs[0]);
                std::vector<double> p(c);
                for (std::size_t i = 0; i < b; ++i) {
                    const double* zi = z.data.data() + i * c;
                    const std::size_t label = class_index(y[i], c);
                    if (softmax_ce_row(zi, c, label, node.attrs.epsilon).clamped) continue;
                    kernels::serial::softmax_rows(std::span<const double>(zi, c), p, 1, c);
                    for (std::size_t j = 0; j < c; ++j)
                        gz[i * c + j] += f * (p[j] - (j == label ? 1.0 : 0.0));
                }
                break;
            }
            case Op::BinaryCrossEntropy: {
                if (!wants(0)) break;
                const Tensor& z = in(0);
                const Tensor& y = in(1);
                const std::size_t b = z.shape[0];
                const double f = g[0] / static_cast<double>(b);
                auto& gz = acc(node.inputs[0]);
                for (std::size_t i = 0; i < b; ++i) {
                    const double yi = static_cast<double>(class_index(y[i], 2));
                    if (bce_row(z[i], yi, node.attrs.epsilon).clamped) continue;
                    gz[i] += f * (sigmoid_of(z[i]) - yi);
                }
                break;
            }
        }
    }

    GradMap out;
    for (const auto& [name, id] : params_) {
        auto& g = grads[id];
        std::vector<double> v = g ? std::move(*g) : std::vector<double>(nodes_[id].value.size(), 0.0);
        for (double x : v)
            if (!std::isfinite(x)) throw NumericError("non-finite gradient for parameter '" + name + "'");
        out.emplace(name, std::move(v));
    }
    consumed_ = true;
    nodes_.clear();
    params_.clear();
    return out;
}

bool Tape::replay_matches() const {
    check_live();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.op == Op::Leaf) continue;
        std::vector<const Tensor*> values;
        for (auto id : n.inputs) {
            if (id >= i) return false;
            values.push_back(&nodes_[id].value);
        }
        Tensor again = compute_primitive(n.op, values, n.attrs);
        if (!bit_equal(again, n.value)) return false;
    }
    return true;
}

// ---- builders ---------------------------------------------------------------

namespace {
Tape& tape_of(Var v) {
    if (!v.tape()) throw ContractError("unbound variable");
    return *v.tape();
}
Var unary(Op op, Var x, const OpAttrs& attrs = {}) {
    const Var in[] = {x};
    return tape_of(x).apply(op, in, attrs);
}
Var binary(Op op, Var a, Var b, const OpAttrs& attrs = {}) {
    const Var in[] = {a, b};
    return tape_of(a).apply(op, in, attrs);
}
}  // namespace

Var matmul(Var a, Var b) { return binary(Op::MatMul, a, b); }
Var bias_add(Var x, Var bias) { return binary(Op::BiasAdd, x, bias); }
Var add(Var a, Var b) { return binary(Op::Add, a, b); }
Var mul(Var a, Var b) { return binary(Op::Mul, a, b); }
Var scale_rows(Var x, Var w) { return binary(Op::ScaleRows, x, w); }
Var scale(Var x, double factor) { return unary(Op::Scale, x, OpAttrs{.scalar = factor}); }
Var relu(Var x) { return unary(Op::Relu, x); }
Var sigmoid(Var x) { return unary(Op::Sigmoid, x); }
Var softmax(Var x) { return unary(Op::Softmax, x); }
Var concat(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    return tape_of(parts[0]).apply(Op::Concat, parts);
}
Var slice(Var x, std::size_t begin, std::size_t end) {
    return unary(Op::Slice, x, OpAttrs{.begin = begin, .end = end});
}
Var mean(Var x) { return unary(Op::Mean, x); }
Var sum(Var x) { return unary(Op::Sum, x); }
Var softmax_cross_entropy(Var logits, Var labels, double epsilon) {
    return binary(Op::SoftmaxCrossEntropy, logits, labels, OpAttrs{.epsilon = epsilon});
}
Var binary_cross_entropy(Var logits, Var labels, double epsilon) {
    return binary(Op::BinaryCrossEntropy, logits, labels, OpAttrs{.epsilon = epsilon});
}
Var grad_reverse(Var x, double lambda) {
    if (!(lambda >= 0.0)) throw ConfigError("grad_reverse: lambda must be nonnegative");
    return unary(Op::GradReverse, x, OpAttrs{.scalar = lambda});
}

}  // namespace mdl::ad

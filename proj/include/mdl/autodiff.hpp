#pragma once

// Define-by-run reverse-mode automatic differentiation.
//
// A Tape records primitive applications in insertion order. Parameters enter
// as named leaves; backward() returns the gradient of a scalar loss with
// respect to every parameter leaf on the tape (zero when unreachable) and
// consumes the tape. A fresh tape is built for every forward pass.
//
// Broadcasting is deliberately narrow:
//   bias_add    x[B,n] + b[n]            (leading-batch broadcast only)
//   scale_rows  x[B,n] * w[B,1]          (per-row weight, used for gate mixing)
//   add, mul    identical shapes only
// Every other primitive requires exact shapes as documented at its builder.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mdl/tensor.hpp"

namespace mdl::ad {

enum class Op {
    Leaf,
    MatMul,
    BiasAdd,
    Add,
    Mul,
    ScaleRows,
    Scale,
    Relu,
    Sigmoid,
    Softmax,
    Concat,
    Slice,
    Mean,
    Sum,
    SoftmaxCrossEntropy,
    BinaryCrossEntropy,
    GradReverse,
};

const char* op_name(Op op);

inline constexpr double kDefaultLogEpsilon = 1e-12;

struct OpAttrs {
    double scalar = 0.0;            // Scale factor, GradReverse lambda.
    std::size_t begin = 0;          // Slice column range.
    std::size_t end = 0;
    double epsilon = kDefaultLogEpsilon;  // Probability clamp for the losses.
};

class Tape;

// Handle to a node of one tape. Cheap to copy; only valid while the tape lives
// and has not been consumed by backward().
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape; }
    std::size_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool requires_grad() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

using GradMap = std::map<std::string, std::vector<double>>;

class Tape {
public:
    struct Node {
        Op op = Op::Leaf;
        std::vector<std::size_t> inputs;
        Tensor value;
        OpAttrs attrs;
        bool requires_grad = false;
        std::string param;  // non-empty for parameter leaves
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    Var constant(Tensor value);
    // Registers a differentiable leaf under `name`. Names must be unique.
    Var parameter(const std::string& name, Tensor value);

    // Generic entry point behind all the builders below.
    Var apply(Op op, std::span<const Var> inputs, const OpAttrs& attrs = {});

    // Reverse sweep from a scalar loss. Consumes the tape.
    GradMap backward(Var loss);

    // Recomputes every non-leaf node from its recorded inputs and reports
    // whether all outputs match bit for bit.
    bool replay_matches() const;

    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }
    const Node& node(std::size_t id) const;

private:
    void check_live() const;

    std::vector<Node> nodes_;
    std::map<std::string, std::size_t> params_;
    bool consumed_ = false;
};

// Forward value of a primitive without recording anything.
Tensor compute_primitive(Op op, std::span<const Tensor* const> inputs, const OpAttrs& attrs);

// ---- builders ---------------------------------------------------------------

Var matmul(Var a, Var b);                 // [m,k] x [k,n] -> [m,n]
Var bias_add(Var x, Var bias);            // [B,n] + [n]
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale_rows(Var x, Var w);             // [B,n] * [B,1]
Var scale(Var x, double factor);
Var relu(Var x);
Var sigmoid(Var x);
Var softmax(Var x);                       // row-wise over the last axis of [B,n]
Var concat(std::span<const Var> parts);   // along the last axis of [B,*] inputs
Var slice(Var x, std::size_t begin, std::size_t end);  // columns [begin,end)
Var mean(Var x);                          // -> scalar
Var sum(Var x);                           // -> scalar
// Mean over the batch of -log softmax(logits)[label]. `labels` is a [B]
// constant holding class indices.
Var softmax_cross_entropy(Var logits, Var labels, double epsilon = kDefaultLogEpsilon);
// Mean over the batch of the binary cross-entropy of sigmoid(logits[B,1])
// against 0/1 labels [B].
Var binary_cross_entropy(Var logits, Var labels, double epsilon = kDefaultLogEpsilon);
// Identity forward; backward multiplies the incoming gradient by -lambda.
Var grad_reverse(Var x, double lambda);

}  // namespace mdl::ad

#pragma once

#include <functional>
#include <span>
#include <vector>

// Minimal reverse-mode autodiff over dense row-major matrices. A Tape is a
// Wengert list: nodes are appended in evaluation order, so reverse iteration is
// a valid topological order and cycles cannot be expressed.
namespace hbg::ad {

class Tape;

struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    int rows() const;
    int cols() const;
    std::span<const double> value() const;
    std::span<const double> grad() const;
    double item() const;
};

/// Gradients keyed by parameter id (the index supplied to Tape::param).
using GradTable = std::vector<std::vector<double>>;

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    struct Node {
        int rows = 0;
        int cols = 0;
        std::vector<double> value;
        std::vector<double> grad;
        BackwardFn backward;
        bool requires_grad = false;
        bool leaf = false;
        int param_id = -1;
    };

    Var constant(int rows, int cols, std::vector<double> value);
    Var scalar(double v) { return constant(1, 1, {v}); }
    /// Trainable leaf; gradients for it are reported under `param_id`.
    Var param(int rows, int cols, std::vector<double> value, int param_id);
    /// Trainable leaf that is not a registered parameter (tests, probes).
    Var variable(int rows, int cols, std::vector<double> value);

    Var push(int rows, int cols, std::vector<double> value, std::initializer_list<Var> inputs, BackwardFn backward);

    /// Seeds d(loss)/d(loss) = 1 and propagates. Leaf gradients accumulate
    /// across calls until zero_grad(); intermediate gradients are reset first.
    void backward(Var loss);
    void zero_grad();

    GradTable param_grads(int param_count) const;

    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return nodes_.size(); }

    /// Gradient buffer of input `id`, allocated on first use; nullptr if it needs none.
    double* grad_of(int id);

private:
    std::vector<Node> nodes_;
};

// Shape-preserving arithmetic
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var shift(Var a, double c);
/// a + c for a constant tensor c of the same shape.
Var add_const(Var a, std::vector<double> c);
/// Adds row vector b (1 x cols) to every row of a.
Var add_row(Var a, Var b);
/// Adds scalar s (1 x 1) to every element of a.
Var add_scalar(Var a, Var s);

Var matmul(Var a, Var b);

Var sigmoid(Var a);
Var silu(Var a);
Var relu(Var a);
Var square(Var a);
Var exp(Var a);

Var sum(Var a);
Var mean(Var a);

Var gather_rows(Var a, std::vector<int> index);
Var slice_rows(Var a, int begin, int end);
Var concat_rows(Var a, Var b);
/// Row s of the result is the mean of rows [offsets[s], offsets[s+1]) of a.
Var segment_mean(Var a, std::vector<int> offsets);
/// Column vector: out[t] = mean(a[seq[0]], ..., a[seq[t]]) for an n x 1 input.
Var prefix_mean(Var a, std::vector<int> seq);

enum class NormMode { batch_train, batch_eval, layer };

struct NormStats {
    std::vector<double> mean;
    std::vector<double> var;
};

/// Per-column normalization with affine gamma/beta (1 x cols).
/// batch_train uses batch statistics and reports them in `batch_stats`;
/// batch_eval uses `running`; layer normalizes each row.
Var normalize(Var a, Var gamma, Var beta, NormMode mode, const NormStats* running, NormStats* batch_stats,
              double eps = 1e-5);

/// One categorical choice: candidate score references and the chosen position.
/// Reference r >= 0 indexes `logits`; r < 0 indexes `extra` at -(r + 1).
struct PickStep {
    std::vector<int> candidates;
    int chosen = 0;
    double inv_temperature = 1.0;
};

/// m x 1 column of log softmax(candidates)[chosen] per step; logits/extra are column vectors.
Var log_softmax_pick(Var logits, Var extra, std::vector<PickStep> steps);

}  // namespace hbg::ad

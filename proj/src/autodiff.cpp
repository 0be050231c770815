#include "hbg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hbg/errors.hpp"
#include "hbg/kernels.hpp"

namespace hbg::ad {

int Var::rows() const { return tape->node(id).rows; }
int Var::cols() const { return tape->node(id).cols; }
std::span<const double> Var::value() const { return tape->node(id).value; }
std::span<const double> Var::grad() const { return tape->node(id).grad; }

double Var::item() const {
    const auto& n = tape->node(id);
    if (n.value.size() != 1) throw ShapeError("item() on a non-scalar tensor");
    return n.value[0];
}

Var Tape::constant(int rows, int cols, std::vector<double> value) {
    if (static_cast<long>(value.size()) != static_cast<long>(rows) * cols) throw ShapeError("constant: size mismatch");
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.value = std::move(value);
    n.leaf = true;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(int rows, int cols, std::vector<double> value, int param_id) {
    Var v = constant(rows, cols, std::move(value));
    node(v.id).requires_grad = true;
    node(v.id).param_id = param_id;
    return v;
}

Var Tape::variable(int rows, int cols, std::vector<double> value) { return param(rows, cols, std::move(value), -1); }

Var Tape::push(int rows, int cols, std::vector<double> value, std::initializer_list<Var> inputs, BackwardFn backward) {
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.value = std::move(value);
    for (const Var& in : inputs) {
        if (!in.valid()) continue;
        if (in.tape != this) throw ShapeError("tape mismatch between operands");
        n.requires_grad = n.requires_grad || node(in.id).requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

double* Tape::grad_of(int id) {
    Node& n = node(id);
    if (!n.requires_grad) return nullptr;
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
    return n.grad.data();
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw ShapeError("backward: loss belongs to another tape");
    if (node(loss.id).value.size() != 1) throw ShapeError("backward: loss must be a scalar");
    for (auto& n : nodes_)
        if (!n.leaf) n.grad.clear();
    if (!node(loss.id).requires_grad) return;
    grad_of(loss.id)[0] += 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = node(id);
        if (n.leaf || !n.requires_grad || n.grad.empty()) continue;
        n.backward(*this, id);
    }
}

void Tape::zero_grad() {
    for (auto& n : nodes_) n.grad.clear();
}

GradTable Tape::param_grads(int param_count) const {
    GradTable out(static_cast<std::size_t>(param_count));
    for (const auto& n : nodes_) {
        if (n.param_id < 0) continue;
        if (n.param_id >= param_count) throw ShapeError("param_grads: parameter id out of range");
        auto& dst = out[static_cast<std::size_t>(n.param_id)];
        if (dst.empty()) dst.assign(n.value.size(), 0.0);
        for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i];
    }
    return out;
}

namespace {

void require_same_shape(Var a, Var b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

template <class F, class DF>
Var unary(Var a, F f, DF df) {
    const auto av = a.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    const int ia = a.id;
    return a.tape->push(a.rows(), a.cols(), std::move(out), {a}, [ia, df](Tape& t, int self) {
        double* ga = t.grad_of(ia);
        if (!ga) return;
        const auto& x = t.node(ia).value;
        const auto& y = t.node(self).value;
        const auto& g = t.node(self).grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
    });
}

}  // namespace

Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.value().begin(), a.value().end());
    const auto bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    const int ia = a.id, ib = b.id;
    return a.tape->push(a.rows(), a.cols(), std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
        const auto& g = t.node(self).grad;
        if (double* ga = t.grad_of(ia))
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        if (double* gb = t.grad_of(ib))
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.value().begin(), a.value().end());
    const auto bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    const int ia = a.id, ib = b.id;
    return a.tape->push(a.rows(), a.cols(), std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
        const auto& g = t.node(self).grad;
        if (double* ga = t.grad_of(ia))
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        if (double* gb = t.grad_of(ib))
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    });
}

Var mul(Var a, Var b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.value().begin(), a.value().end());
    const auto bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    const int ia = a.id, ib = b.id;
    return a.tape->push(a.rows(), a.cols(), std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
        const auto& g = t.node(self).grad;
        const auto& x = t.node(ia).value;
        const auto& y = t.node(ib).value;
        if (double* ga = t.grad_of(ia))
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        if (double* gb = t.grad_of(ib))
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    });
}

Var scale(Var a, double c) {
    return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var shift(Var a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var add_const(Var a, std::vector<double> c) {
    if (c.size() != a.value().size()) throw ShapeError("add_const: shape mismatch");
    const auto av = a.value();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += av[i];
    const int ia = a.id;
    return a.tape->push(a.rows(), a.cols(), std::move(c), {a}, [ia](Tape& t, int self) {
        const auto& g = t.node(self).grad;
        if (double* ga = t.grad_of(ia))
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var add_row(Var a, Var b) {
    if (b.rows() != 1 || b.cols() != a.cols()) throw ShapeError("add_row: bias must be 1 x cols");
    const int rows = a.rows(), cols = a.cols();
    std::vector<double> out(a.value().begin(), a.value().end());
    const auto bv = b.value();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(r) * cols + c] += bv[static_cast<std::size_t>(c)];
    const int ia = a.id, ib = b.id;
    return a.tape->push(rows, cols, std::move(out), {a, b}, [ia, ib, rows, cols](Tape& t, int self) {
        const auto& g = t.node(self).grad;
        if (double* ga = t.grad_of(ia))
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        if (double* gb = t.grad_of(ib))
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) gb[c] += g[static_cast<std::size_t>(r) * cols + c];
    });
}

Var add_scalar(Var a, Var s) {
    if (s.rows() != 1 || s.cols() != 1) throw ShapeError("add_scalar: expects a 1 x 1 scalar");
    std::vector<double> out(a.value().begin(), a.value().end());
    const double sv = s.item();
    for (double& v : out) v += sv;
    const int ia = a.id, is = s.id;
    return a.tape->push(a.rows(), a.cols(), std::move(out), {a, s}, [ia, is](Tape& t, int self) {
        const auto& g = t.node(self).grad;
        if (double* ga = t.grad_of(ia))
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        if (double* gs = t.grad_of(is))
            for (double gi : g) gs[0] += gi;
    });
}

Var matmul(Var a, Var b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
    const int n = a.rows(), k = a.cols(), m = b.cols();
    std::vector<double> out(static_cast<std::size_t>(n) * m);
    kernels::matmul(a.value(), b.value(), out, n, k, m);
    const int ia = a.id, ib = b.id;
    return a.tape->push(n, m, std::move(out), {a, b}, [ia, ib, n, k, m](Tape& t, int self) {
        const auto& g = t.node(self).grad;
        if (double* ga = t.grad_of(ia))
            kernels::matmul_a_bt_acc(g, t.node(ib).value, {ga, static_cast<std::size_t>(n) * k}, n, k, m);
        if (double* gb = t.grad_of(ib))
            kernels::matmul_at_b_acc(t.node(ia).value, g, {gb, static_cast<std::size_t>(k) * m}, n, k, m);
    });
}

Var sigmoid(Var a) {
    return unary(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var silu(Var a) {
    return unary(
        a, [](double x) { return x / (1.0 + std::exp(-x)); },
        [](double x, double) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

Var relu(Var a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var square(Var a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value()) s += v;
    const int ia = a.id;
    return a.tape->push(1, 1, {s}, {a}, [ia](Tape& t, int self) {
        const double g = t.node(self).grad[0];
        if (double* ga = t.grad_of(ia)) {
            const std::size_t n = t.node(ia).value.size();
            for (std::size_t i = 0; i < n; ++i) ga[i] += g;
        }
    });
}

Var mean(Var a) {
    const auto n = a.value().size();
    if (n == 0) throw ShapeError("mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var gather_rows(Var a, std::vector<int> index) {
    const int cols = a.cols(), rows_in = a.rows();
    const auto av = a.value();
    std::vector<double> out(index.size() * static_cast<std::size_t>(cols));
    for (std::size_t r = 0; r < index.size(); ++r) {
        const int src = index[r];
        if (src < 0 || src >= rows_in) throw IndexError("gather_rows: index out of range");
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(src) * cols, cols,
                    out.begin() + static_cast<std::ptrdiff_t>(r) * cols);
    }
    const int ia = a.id;
    const int rows = static_cast<int>(index.size());
    return a.tape->push(rows, cols, std::move(out), {a}, [ia, cols, idx = std::move(index)](Tape& t, int self) {
        double* ga = t.grad_of(ia);
        if (!ga) return;
        const auto& g = t.node(self).grad;
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (int c = 0; c < cols; ++c)
                ga[static_cast<std::size_t>(idx[r]) * cols + c] += g[r * static_cast<std::size_t>(cols) + c];
    });
}

Var slice_rows(Var a, int begin, int end) {
    if (begin < 0 || end > a.rows() || begin > end) throw IndexError("slice_rows: bad range");
    const int cols = a.cols();
    const auto av = a.value();
    std::vector<double> out(av.begin() + static_cast<std::ptrdiff_t>(begin) * cols,
                            av.begin() + static_cast<std::ptrdiff_t>(end) * cols);
    const int ia = a.id;
    return a.tape->push(end - begin, cols, std::move(out), {a}, [ia, begin, cols](Tape& t, int self) {
        double* ga = t.grad_of(ia);
        if (!ga) return;
        const auto& g = t.node(self).grad;
        double* dst = ga + static_cast<std::ptrdiff_t>(begin) * cols;
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    });
}

Var concat_rows(Var a, Var b) {
    if (a.cols() != b.cols()) throw ShapeError("concat_rows: column mismatch");
    std::vector<double> out(a.value().begin(), a.value().end());
    out.insert(out.end(), b.value().begin(), b.value().end());
    const int ia = a.id, ib = b.id;
    const std::size_t split = a.value().size();
    return a.tape->push(a.rows() + b.rows(), a.cols(), std::move(out), {a, b}, [ia, ib, split](Tape& t, int self) {
        const auto& g = t.node(self).grad;
        if (double* ga = t.grad_of(ia))
            for (std::size_t i = 0; i < split; ++i) ga[i] += g[i];
        if (double* gb = t.grad_of(ib))
            for (std::size_t i = split; i < g.size(); ++i) gb[i - split] += g[i];
    });
}

Var segment_mean(Var a, std::vector<int> offsets) {
    if (offsets.empty() || offsets.back() != a.rows() || offsets.front() != 0)
        throw ShapeError("segment_mean: offsets must span all rows");
    const int cols = a.cols();
    const int segments = static_cast<int>(offsets.size()) - 1;
    std::vector<double> out(static_cast<std::size_t>(segments) * cols);
    kernels::segment_mean(a.value(), offsets, out, cols);
    const int ia = a.id;
    return a.tape->push(segments, cols, std::move(out), {a}, [ia, cols, segments, off = std::move(offsets)](Tape& t, int self) {
        double* ga = t.grad_of(ia);
        if (!ga) return;
        const auto& g = t.node(self).grad;
#pragma omp parallel for schedule(static) if (static_cast<long>(off.back()) * cols > kernels::kParallelWork)
        for (int s = 0; s < segments; ++s) {
            const int lo = off[static_cast<std::size_t>(s)], hi = off[static_cast<std::size_t>(s) + 1];
            if (hi <= lo) continue;
            const double inv = 1.0 / static_cast<double>(hi - lo);
            for (int r = lo; r < hi; ++r)
                for (int c = 0; c < cols; ++c)
                    ga[static_cast<std::size_t>(r) * cols + c] += g[static_cast<std::size_t>(s) * cols + c] * inv;
        }
    });
}

Var prefix_mean(Var a, std::vector<int> seq) {
    if (a.cols() != 1) throw ShapeError("prefix_mean: expects a column vector");
    const auto av = a.value();
    std::vector<double> out(seq.size());
    double running = 0.0;
    for (std::size_t t = 0; t < seq.size(); ++t) {
        if (seq[t] < 0 || seq[t] >= a.rows()) throw IndexError("prefix_mean: index out of range");
        running += av[static_cast<std::size_t>(seq[t])];
        out[t] = running / static_cast<double>(t + 1);
    }
    const int ia = a.id;
    const int rows = static_cast<int>(seq.size());
    return a.tape->push(rows, 1, std::move(out), {a}, [ia, s = std::move(seq)](Tape& t, int self) {
        double* ga = t.grad_of(ia);
        if (!ga) return;
        const auto& g = t.node(self).grad;
        // d out[t] / d a[seq[u]] = 1/(t+1) for u <= t; accumulate suffix sums.
        double suffix = 0.0;
        for (std::size_t u = s.size(); u-- > 0;) {
            suffix += g[u] / static_cast<double>(u + 1);
            ga[static_cast<std::size_t>(s[u])] += suffix;
        }
    });
}

Var normalize(Var a, Var gamma, Var beta, NormMode mode, const NormStats* running, NormStats* batch_stats, double eps) {
    const int rows = a.rows(), cols = a.cols();
    if (gamma.rows() != 1 || gamma.cols() != cols || beta.rows() != 1 || beta.cols() != cols)
        throw ShapeError("normalize: gamma/beta must be 1 x cols");
    const auto x = a.value();
    const auto gv = gamma.value();
    const auto bv = beta.value();
    std::vector<double> xhat(x.size());
    std::vector<double> inv_std;  // per column (batch modes) or per row (layer)

    auto at = [cols](int r, int c) { return static_cast<std::size_t>(r) * cols + c; };

    if (mode == NormMode::layer) {
        inv_std.resize(static_cast<std::size_t>(rows));
        for (int r = 0; r < rows; ++r) {
            double mu = 0.0;
            for (int c = 0; c < cols; ++c) mu += x[at(r, c)];
            mu /= cols;
            double var = 0.0;
            for (int c = 0; c < cols; ++c) var += (x[at(r, c)] - mu) * (x[at(r, c)] - mu);
            var /= cols;
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[static_cast<std::size_t>(r)] = is;
            for (int c = 0; c < cols; ++c) xhat[at(r, c)] = (x[at(r, c)] - mu) * is;
        }
    } else {
        std::vector<double> mu(static_cast<std::size_t>(cols), 0.0), var(static_cast<std::size_t>(cols), 0.0);
        if (mode == NormMode::batch_train) {
            if (rows < 1) throw ShapeError("normalize: empty batch");
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) mu[static_cast<std::size_t>(c)] += x[at(r, c)];
            for (double& m : mu) m /= rows;
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) {
                    const double d = x[at(r, c)] - mu[static_cast<std::size_t>(c)];
                    var[static_cast<std::size_t>(c)] += d * d;
                }
            for (double& v : var) v /= rows;
            if (batch_stats) *batch_stats = {mu, var};
        } else {
            if (!running || static_cast<int>(running->mean.size()) != cols || static_cast<int>(running->var.size()) != cols)
                throw ShapeError("normalize: running statistics missing or mis-sized");
            mu = running->mean;
            var = running->var;
        }
        inv_std.resize(static_cast<std::size_t>(cols));
        for (int c = 0; c < cols; ++c) inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                xhat[at(r, c)] = (x[at(r, c)] - mu[static_cast<std::size_t>(c)]) * inv_std[static_cast<std::size_t>(c)];
    }

    std::vector<double> out(x.size());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[at(r, c)] = gv[static_cast<std::size_t>(c)] * xhat[at(r, c)] + bv[static_cast<std::size_t>(c)];

    const int ia = a.id, ig = gamma.id, ib = beta.id;
    return a.tape->push(
        rows, cols, std::move(out), {a, gamma, beta},
        [ia, ig, ib, rows, cols, mode, xh = std::move(xhat), is = std::move(inv_std)](Tape& t, int self) {
            const auto& g = t.node(self).grad;
            const auto& gam = t.node(ig).value;
            auto at = [cols](int r, int c) { return static_cast<std::size_t>(r) * cols + c; };
            if (double* gg = t.grad_of(ig))
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c) gg[c] += g[at(r, c)] * xh[at(r, c)];
            if (double* gb = t.grad_of(ib))
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c) gb[c] += g[at(r, c)];
            double* ga = t.grad_of(ia);
            if (!ga) return;
            if (mode == NormMode::batch_eval) {
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c)
                        ga[at(r, c)] += g[at(r, c)] * gam[static_cast<std::size_t>(c)] * is[static_cast<std::size_t>(c)];
            } else if (mode == NormMode::batch_train) {
                for (int c = 0; c < cols; ++c) {
                    double s1 = 0.0, s2 = 0.0;
                    for (int r = 0; r < rows; ++r) {
                        const double d = g[at(r, c)] * gam[static_cast<std::size_t>(c)];
                        s1 += d;
                        s2 += d * xh[at(r, c)];
                    }
                    const double k = is[static_cast<std::size_t>(c)] / rows;
                    for (int r = 0; r < rows; ++r) {
                        const double d = g[at(r, c)] * gam[static_cast<std::size_t>(c)];
                        ga[at(r, c)] += k * (rows * d - s1 - xh[at(r, c)] * s2);
                    }
                }
            } else {
                for (int r = 0; r < rows; ++r) {
                    double s1 = 0.0, s2 = 0.0;
                    for (int c = 0; c < cols; ++c) {
                        const double d = g[at(r, c)] * gam[static_cast<std::size_t>(c)];
                        s1 += d;
                        s2 += d * xh[at(r, c)];
                    }
                    const double k = is[static_cast<std::size_t>(r)] / cols;
                    for (int c = 0; c < cols; ++c) {
                        const double d = g[at(r, c)] * gam[static_cast<std::size_t>(c)];
                        ga[at(r, c)] += k * (cols * d - s1 - xh[at(r, c)] * s2);
                    }
                }
            }
        });
}

Var log_softmax_pick(Var logits, Var extra, std::vector<PickStep> steps) {
    if (logits.cols() != 1) throw ShapeError("log_softmax_pick: logits must be a column");
    if (extra.valid() && extra.cols() != 1) throw ShapeError("log_softmax_pick: extra must be a column");
    const auto lv = logits.value();
    const std::span<const double> ev = extra.valid() ? extra.value() : std::span<const double>{};

    auto score = [&](int ref) -> double {
        if (ref >= 0) {
            if (ref >= static_cast<int>(lv.size())) throw IndexError("log_softmax_pick: logit index out of range");
            return lv[static_cast<std::size_t>(ref)];
        }
        const auto k = static_cast<std::size_t>(-(ref + 1));
        if (k >= ev.size()) throw IndexError("log_softmax_pick: extra index out of range");
        return ev[k];
    };

    // Softmax probabilities are cached per step for the backward pass.
    std::vector<std::vector<double>> probs(steps.size());
    std::vector<double> out(steps.size());
    for (std::size_t s = 0; s < steps.size(); ++s) {
        const auto& st = steps[s];
        if (st.candidates.empty() || st.chosen < 0 || st.chosen >= static_cast<int>(st.candidates.size()))
            throw IndexError("log_softmax_pick: bad step");
        double mx = -std::numeric_limits<double>::infinity();
        std::vector<double> z(st.candidates.size());
        for (std::size_t c = 0; c < z.size(); ++c) {
            z[c] = score(st.candidates[c]) * st.inv_temperature;
            mx = std::max(mx, z[c]);
        }
        double total = 0.0;
        for (double& v : z) {
            v = std::exp(v - mx);
            total += v;
        }
        for (double& v : z) v /= total;
        out[s] = score(st.candidates[static_cast<std::size_t>(st.chosen)]) * st.inv_temperature - mx - std::log(total);
        probs[s] = std::move(z);
    }

    const int il = logits.id;
    const int ie = extra.valid() ? extra.id : -1;
    const int rows = static_cast<int>(steps.size());
    return logits.tape->push(rows, 1, std::move(out), {logits, extra},
                             [il, ie, st = std::move(steps), pr = std::move(probs)](Tape& t, int self) {
                                 const auto& g = t.node(self).grad;
                                 double* gl = t.grad_of(il);
                                 double* ge = ie >= 0 ? t.grad_of(ie) : nullptr;
                                 for (std::size_t s = 0; s < st.size(); ++s) {
                                     const auto& step = st[s];
                                     for (std::size_t c = 0; c < step.candidates.size(); ++c) {
                                         const double ind = static_cast<int>(c) == step.chosen ? 1.0 : 0.0;
                                         const double d = g[s] * step.inv_temperature * (ind - pr[s][c]);
                                         const int ref = step.candidates[c];
                                         if (ref >= 0) {
                                             if (gl) gl[ref] += d;
                                         } else if (ge) {
                                             ge[-(ref + 1)] += d;
                                         }
                                     }
                                 }
                             });
}

}  // namespace hbg::ad

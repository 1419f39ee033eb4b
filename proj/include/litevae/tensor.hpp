#pragma once

// Dense N-d tensor with reverse-mode automatic differentiation over the fixed
// operation set used by the rest of the library. Scalar type is a template
// parameter; float is used for training, double for finite-difference checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "litevae/errors.hpp"
#include "litevae/rng.hpp"

namespace litevae {

// Worker count for the parallel conv kernels; LITEVAE_THREADS overrides the
// hardware default. Results are bit-identical for any value.
int effective_threads();

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string r = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

// Thread-local switch for graph construction (mirrors the usual no-grad guard).
struct GradMode {
    static bool enabled() { return flag(); }
    static void set(bool on) { flag() = on; }

private:
    static bool& flag() {
        thread_local bool f = true;
        return f;
    }
};

struct NoGradGuard {
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(prev_); }

private:
    bool prev_;
};

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;  // empty until first accumulation
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

}  // namespace detail

template <typename T>
class Tensor {
public:
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    Tensor() = default;

    static Tensor from(std::vector<T> data, Shape shape, bool requires_grad = false) {
        if (static_cast<int64_t>(data.size()) != shape_numel(shape))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        Tensor t;
        t.node_ = std::make_shared<detail::Node<T>>();
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(data);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), T(0), requires_grad);
    }

    static Tensor ones(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), T(1), requires_grad);
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        std::vector<T> d(static_cast<size_t>(shape_numel(shape)), value);
        return from(std::move(d), std::move(shape), requires_grad);
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return from({value}, Shape{1}, requires_grad);
    }

    static Tensor randn(Shape shape, Rng& rng, T stddev = T(1), bool requires_grad = false) {
        std::vector<T> d(static_cast<size_t>(shape_numel(shape)));
        for (auto& v : d) v = static_cast<T>(rng.normal()) * stddev;
        return from(std::move(d), std::move(shape), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return node_->numel(); }

    std::vector<T>& data() { return node_->data; }
    const std::vector<T>& data() const { return node_->data; }

    T item() const {
        if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
        return node_->data[0];
    }

    bool requires_grad() const { return node_->requires_grad; }

    Tensor& set_requires_grad(bool rg) {
        node_->requires_grad = rg;
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }

    const std::vector<T>& grad() const {
        if (node_->grad.empty()) throw ContractError("tensor has no gradient");
        return node_->grad;
    }

    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    // New leaf with a copy of the data, cut from the graph.
    Tensor detach() const {
        return Tensor::from(node_->data, node_->shape, false);
    }

    // Reverse pass from a scalar. Frees the graph afterwards; parameters keep
    // their accumulated grads.
    void backward() const {
        if (numel() != 1) throw ContractError("backward() requires a scalar loss");
        auto* root = node_.get();
        // Deterministic iterative post-order over the parents DAG.
        std::vector<detail::Node<T>*> order;
        std::unordered_set<detail::Node<T>*> seen;
        std::vector<std::pair<detail::Node<T>*, size_t>> stack;
        stack.push_back({root, 0});
        seen.insert(root);
        while (!stack.empty()) {
            auto& [n, i] = stack.back();
            if (i < n->parents.size()) {
                auto* p = n->parents[i].get();
                ++i;
                if (seen.insert(p).second) stack.push_back({p, 0});
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        root->ensure_grad();
        root->grad[0] = T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            auto* n = *it;
            if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
        }
        for (auto* n : order) {
            n->parents.clear();
            n->backward_fn = nullptr;
        }
    }

    NodePtr node() const { return node_; }

private:
    NodePtr node_;
};

namespace detail {

// Builds an op result, attaching it to the graph only when grad mode is on
// and some input participates.
template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> data, std::vector<Tensor<T>> parents,
                  std::function<void(Node<T>&)> backward) {
    Tensor<T> out = Tensor<T>::from(std::move(data), std::move(shape), false);
    bool track = GradMode::enabled();
    if (track) {
        bool any = false;
        for (const auto& p : parents) any = any || p.node()->requires_grad;
        track = any;
    }
    if (track) {
        out.node()->requires_grad = true;
        for (const auto& p : parents) out.node()->parents.push_back(p.node());
        out.node()->backward_fn = std::move(backward);
    }
    return out;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node<T>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node<T>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node<T>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->data[i];
        }
    });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = -a.data()[i];
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an](detail::Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] -= self.grad[i];
    });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an](detail::Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an, c](detail::Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * c;
    });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& a) {
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) {
        T x = a.data()[i];
        out[i] = x / (T(1) + std::exp(-x));
    }
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an](detail::Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            T x = an->data[i];
            T s = T(1) / (T(1) + std::exp(-x));
            an->grad[i] += self.grad[i] * s * (T(1) + x * (T(1) - s));
        }
    });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an](detail::Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (an->data[i] > T(0)) an->grad[i] += self.grad[i];
    });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
    auto an = a.node();
    auto saved = out;
    return detail::make_op<T>(a.shape(), std::move(out), {a},
                              [an, saved = std::move(saved)](detail::Node<T>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  for (size_t i = 0; i < self.grad.size(); ++i)
                                      an->grad[i] += self.grad[i] * saved[i];
                              });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(a.data()[i]);
    auto an = a.node();
    auto saved = out;
    return detail::make_op<T>(a.shape(), std::move(out), {a},
                              [an, saved = std::move(saved)](detail::Node<T>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  for (size_t i = 0; i < self.grad.size(); ++i)
                                      an->grad[i] += self.grad[i] * T(0.5) / saved[i];
                              });
}

// Subgradient 0 at the kink.
template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::abs(a.data()[i]);
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an](detail::Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            T x = an->data[i];
            if (x > T(0))
                an->grad[i] += self.grad[i];
            else if (x < T(0))
                an->grad[i] -= self.grad[i];
        }
    });
}

// Gradient passes where lo <= x <= hi, zero outside.
template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, a.data()[i]));
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an, lo, hi](detail::Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            T x = an->data[i];
            if (x >= lo && x <= hi) an->grad[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) {
        T x = a.data()[i];
        out[i] = std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
    }
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an](detail::Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            T x = an->data[i];
            an->grad[i] += self.grad[i] / (T(1) + std::exp(-x));
        }
    });
}

// Multiplicative dropout; identity when p == 0 or not training.
template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double p, Rng& rng, bool training) {
    if (!training || p <= 0.0) return a;
    std::vector<T> mask(a.data().size());
    T scale = T(1.0 / (1.0 - p));
    for (auto& m : mask) m = rng.uniform() < p ? T(0) : scale;
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * mask[i];
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a},
                              [an, mask = std::move(mask)](detail::Node<T>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  for (size_t i = 0; i < self.grad.size(); ++i)
                                      an->grad[i] += self.grad[i] * mask[i];
                              });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    double acc = 0;
    for (T v : a.data()) acc += static_cast<double>(v);
    T s = static_cast<T>(acc);
    auto an = a.node();
    return detail::make_op<T>({1}, {s}, {a}, [an](detail::Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        T g = self.grad[0];
        for (auto& v : an->grad) v += g;
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    double acc = 0;
    for (T v : a.data()) acc += static_cast<double>(v);
    T inv = T(1) / static_cast<T>(a.numel());
    T m = static_cast<T>(acc / static_cast<double>(a.numel()));
    auto an = a.node();
    return detail::make_op<T>({1}, {m}, {a}, [an, inv](detail::Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        T g = self.grad[0] * inv;
        for (auto& v : an->grad) v += g;
    });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: numel mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
    auto an = a.node();
    return detail::make_op<T>(std::move(shape), a.data(), {a}, [an](detail::Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat: empty input list");
    const Shape& s0 = parts[0].shape();
    int nd = static_cast<int>(s0.size());
    if (axis < 0 || axis >= nd) throw ShapeError("concat: bad axis");
    int total_axis = 0;
    for (const auto& p : parts) {
        if (p.ndim() != nd) throw ShapeError("concat: rank mismatch");
        for (int d = 0; d < nd; ++d) {
            if (d != axis && p.shape()[static_cast<size_t>(d)] != s0[static_cast<size_t>(d)])
                throw ShapeError("concat: shape mismatch on non-concat axis " + std::to_string(d) +
                                 ": " + shape_str(p.shape()) + " vs " + shape_str(s0));
        }
        total_axis += p.dim(axis);
    }
    Shape out_shape = s0;
    out_shape[static_cast<size_t>(axis)] = total_axis;

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s0[static_cast<size_t>(d)];
    for (int d = axis + 1; d < nd; ++d) inner *= s0[static_cast<size_t>(d)];

    std::vector<T> out(static_cast<size_t>(shape_numel(out_shape)));
    std::vector<int> axis_sizes;
    axis_sizes.reserve(parts.size());
    for (const auto& p : parts) axis_sizes.push_back(p.dim(axis));

    int64_t row = inner * total_axis;
    int64_t off = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
        const auto& src = parts[pi].data();
        int64_t chunk = inner * axis_sizes[pi];
        for (int64_t o = 0; o < outer; ++o)
            std::copy(src.begin() + o * chunk, src.begin() + (o + 1) * chunk,
                      out.begin() + o * row + off);
        off += chunk;
    }

    std::vector<typename Tensor<T>::NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return detail::make_op<T>(
        std::move(out_shape), std::move(out), parts,
        [nodes, axis_sizes, outer, inner, row](detail::Node<T>& self) {
            int64_t off = 0;
            for (size_t pi = 0; pi < nodes.size(); ++pi) {
                int64_t chunk = inner * axis_sizes[pi];
                if (nodes[pi]->requires_grad) {
                    nodes[pi]->ensure_grad();
                    auto& g = nodes[pi]->grad;
                    for (int64_t o = 0; o < outer; ++o)
                        for (int64_t i = 0; i < chunk; ++i)
                            g[static_cast<size_t>(o * chunk + i)] +=
                                self.grad[static_cast<size_t>(o * row + off + i)];
                }
                off += chunk;
            }
        });
}

// Contiguous slab [c0, c1) along an axis; backward scatters into the source.
template <typename T>
Tensor<T> slice_axis(const Tensor<T>& a, int axis, int c0, int c1) {
    int nd = a.ndim();
    if (axis < 0 || axis >= nd) throw ShapeError("slice_axis: bad axis");
    int extent = a.dim(axis);
    if (c0 < 0 || c1 > extent || c0 >= c1) throw ShapeError("slice_axis: bad range");
    Shape out_shape = a.shape();
    out_shape[static_cast<size_t>(axis)] = c1 - c0;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= a.dim(d);
    for (int d = axis + 1; d < nd; ++d) inner *= a.dim(d);
    int64_t src_row = inner * extent;
    int64_t dst_row = inner * (c1 - c0);
    std::vector<T> out(static_cast<size_t>(outer * dst_row));
    const auto& src = a.data();
    for (int64_t o = 0; o < outer; ++o)
        std::copy(src.begin() + o * src_row + c0 * inner, src.begin() + o * src_row + c1 * inner,
                  out.begin() + o * dst_row);
    auto an = a.node();
    return detail::make_op<T>(std::move(out_shape), std::move(out), {a},
                              [an, outer, inner, src_row, dst_row, c0](detail::Node<T>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  for (int64_t o = 0; o < outer; ++o)
                                      for (int64_t i = 0; i < dst_row; ++i)
                                          an->grad[static_cast<size_t>(o * src_row + c0 * inner + i)] +=
                                              self.grad[static_cast<size_t>(o * dst_row + i)];
                              });
}

template <typename T>
std::vector<Tensor<T>> chunk(const Tensor<T>& a, int k, int axis) {
    int extent = a.dim(axis);
    if (extent % k != 0)
        throw ShapeError("chunk: axis extent " + std::to_string(extent) + " not divisible by " +
                         std::to_string(k));
    int step = extent / k;
    std::vector<Tensor<T>> out;
    out.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) out.push_back(slice_axis(a, axis, i * step, (i + 1) * step));
    return out;
}

// ---------------------------------------------------------------------------
// Convolution (NCHW, zero padding, cross-correlation)
// ---------------------------------------------------------------------------

namespace detail {

// out[n,co] += sum_{ci,kh,kw} x[n,ci,oh*s-p+kh,ow*s-p+kw] * w[co,ci,kh,kw]
// Each (n, co) plane is written by exactly one thread in a fixed order, so
// results are bit-identical for any thread count.
template <typename T>
void conv2d_forward_data(const T* x, const T* w, const T* bias, T* out, int N, int CI, int H, int W,
                         int CO, int KH, int KW, int stride, int pad, int OH, int OW);

template <typename T>
void conv2d_backward_input(const T* gy, const T* w, T* gx, int N, int CI, int H, int W, int CO,
                           int KH, int KW, int stride, int pad, int OH, int OW);

template <typename T>
void conv2d_backward_weight(const T* gy, const T* x, T* gw, int N, int CI, int H, int W, int CO,
                            int KH, int KW, int stride, int pad, int OH, int OW);

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride,
                 int padding) {
    if (x.ndim() != 4) throw ShapeError("conv2d: input must be 4-d, got " + shape_str(x.shape()));
    if (w.ndim() != 4) throw ShapeError("conv2d: weight must be 4-d, got " + shape_str(w.shape()));
    int N = x.dim(0), CI = x.dim(1), H = x.dim(2), W = x.dim(3);
    int CO = w.dim(0), WCI = w.dim(1), KH = w.dim(2), KW = w.dim(3);
    if (CI != WCI)
        throw ShapeError("conv2d: input channels " + std::to_string(CI) +
                         " != weight channels " + std::to_string(WCI));
    if (KH > H + 2 * padding || KW > W + 2 * padding)
        throw ShapeError("conv2d: kernel larger than padded input");
    if (stride < 1) throw ShapeError("conv2d: stride must be positive");
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != CO))
        throw ShapeError("conv2d: bias shape mismatch");
    int OH = (H + 2 * padding - KH) / stride + 1;
    int OW = (W + 2 * padding - KW) / stride + 1;

    std::vector<T> out(static_cast<size_t>(N) * CO * OH * OW);
    detail::conv2d_forward_data(x.data().data(), w.data().data(),
                                bias.defined() ? bias.data().data() : nullptr, out.data(), N, CI, H,
                                W, CO, KH, KW, stride, padding, OH, OW);

    auto xn = x.node();
    auto wn = w.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    std::vector<Tensor<T>> parents = {x, w};
    if (bias.defined()) parents.push_back(bias);

    return detail::make_op<T>(
        {N, CO, OH, OW}, std::move(out), std::move(parents),
        [=](detail::Node<T>& self) {
            const T* gy = self.grad.data();
            if (xn->requires_grad) {
                xn->ensure_grad();
                detail::conv2d_backward_input(gy, wn->data.data(), xn->grad.data(), N, CI, H, W, CO,
                                              KH, KW, stride, padding, OH, OW);
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                detail::conv2d_backward_weight(gy, xn->data.data(), wn->grad.data(), N, CI, H, W,
                                               CO, KH, KW, stride, padding, OH, OW);
            }
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                for (int n = 0; n < N; ++n)
                    for (int co = 0; co < CO; ++co) {
                        const T* p = gy + (static_cast<int64_t>(n) * CO + co) * OH * OW;
                        T s = T(0);
                        for (int i = 0; i < OH * OW; ++i) s += p[i];
                        bn->grad[static_cast<size_t>(co)] += s;
                    }
            }
        });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int padding) {
    return conv2d(x, w, Tensor<T>(), stride, padding);
}

// ---------------------------------------------------------------------------
// Group normalization
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int groups, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps) {
    if (x.ndim() != 4) throw ShapeError("group_norm: input must be 4-d");
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (groups <= 0 || C % groups != 0)
        throw ShapeError("group_norm: groups " + std::to_string(groups) +
                         " does not divide channels " + std::to_string(C));
    if (gamma.numel() != C || beta.numel() != C) throw ShapeError("group_norm: affine param size");
    int cpg = C / groups;
    int64_t gsz = static_cast<int64_t>(cpg) * H * W;
    int64_t plane = static_cast<int64_t>(H) * W;

    std::vector<T> out(x.data().size());
    std::vector<T> means(static_cast<size_t>(N) * groups);
    std::vector<T> invstds(static_cast<size_t>(N) * groups);

    const T* xd = x.data().data();
    const T* gd = gamma.data().data();
    const T* bd = beta.data().data();
    for (int n = 0; n < N; ++n) {
        for (int g = 0; g < groups; ++g) {
            const T* base = xd + (static_cast<int64_t>(n) * C + g * cpg) * plane;
            // double accumulation keeps the numerator exactly 0 on constants
            double macc = 0;
            for (int64_t i = 0; i < gsz; ++i) macc += static_cast<double>(base[i]);
            T m = static_cast<T>(macc / static_cast<double>(gsz));
            double vacc = 0;
            for (int64_t i = 0; i < gsz; ++i) {
                double d = static_cast<double>(base[i]) - static_cast<double>(m);
                vacc += d * d;
            }
            T v = static_cast<T>(vacc / static_cast<double>(gsz));
            T is = T(1) / std::sqrt(v + eps);
            means[static_cast<size_t>(n * groups + g)] = m;
            invstds[static_cast<size_t>(n * groups + g)] = is;
            T* ob = out.data() + (static_cast<int64_t>(n) * C + g * cpg) * plane;
            for (int c = 0; c < cpg; ++c) {
                T ga = gd[g * cpg + c], be = bd[g * cpg + c];
                for (int64_t i = 0; i < plane; ++i)
                    ob[c * plane + i] = (base[c * plane + i] - m) * is * ga + be;
            }
        }
    }

    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    return detail::make_op<T>(
        x.shape(), std::move(out), {x, gamma, beta},
        [=, means = std::move(means), invstds = std::move(invstds)](detail::Node<T>& self) {
            const T* gy = self.grad.data();
            const T* xd2 = xn->data.data();
            const T* gd2 = gn->data.data();
            if (gn->requires_grad) gn->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            if (xn->requires_grad) xn->ensure_grad();
            for (int n = 0; n < N; ++n) {
                for (int g = 0; g < groups; ++g) {
                    T m = means[static_cast<size_t>(n * groups + g)];
                    T is = invstds[static_cast<size_t>(n * groups + g)];
                    const T* xb = xd2 + (static_cast<int64_t>(n) * C + g * cpg) * plane;
                    const T* gyb = gy + (static_cast<int64_t>(n) * C + g * cpg) * plane;
                    if (gn->requires_grad || bn->requires_grad) {
                        for (int c = 0; c < cpg; ++c) {
                            T sg = T(0), sb = T(0);
                            for (int64_t i = 0; i < plane; ++i) {
                                T xh = (xb[c * plane + i] - m) * is;
                                sg += gyb[c * plane + i] * xh;
                                sb += gyb[c * plane + i];
                            }
                            if (gn->requires_grad) gn->grad[static_cast<size_t>(g * cpg + c)] += sg;
                            if (bn->requires_grad) bn->grad[static_cast<size_t>(g * cpg + c)] += sb;
                        }
                    }
                    if (xn->requires_grad) {
                        // dx = is * (dxh - mean(dxh) - xh * mean(dxh*xh))
                        T s1 = T(0), s2 = T(0);
                        for (int c = 0; c < cpg; ++c) {
                            T ga = gd2[g * cpg + c];
                            for (int64_t i = 0; i < plane; ++i) {
                                T dxh = gyb[c * plane + i] * ga;
                                T xh = (xb[c * plane + i] - m) * is;
                                s1 += dxh;
                                s2 += dxh * xh;
                            }
                        }
                        s1 /= static_cast<T>(gsz);
                        s2 /= static_cast<T>(gsz);
                        T* gxb = xn->grad.data() + (static_cast<int64_t>(n) * C + g * cpg) * plane;
                        for (int c = 0; c < cpg; ++c) {
                            T ga = gd2[g * cpg + c];
                            for (int64_t i = 0; i < plane; ++i) {
                                T dxh = gyb[c * plane + i] * ga;
                                T xh = (xb[c * plane + i] - m) * is;
                                gxb[c * plane + i] += is * (dxh - s1 - xh * s2);
                            }
                        }
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Upsampling
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor) {
    if (x.ndim() != 4) throw ShapeError("upsample_nearest: input must be 4-d");
    if (factor < 1) throw ShapeError("upsample_nearest: factor must be positive");
    if (factor == 1) return x;
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int OH = H * factor, OW = W * factor;
    std::vector<T> out(static_cast<size_t>(N) * C * OH * OW);
    const T* xd = x.data().data();
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const T* xp = xd + nc * H * W;
        T* op = out.data() + nc * OH * OW;
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                T v = xp[h * W + w];
                for (int fh = 0; fh < factor; ++fh)
                    for (int fw = 0; fw < factor; ++fw)
                        op[(h * factor + fh) * OW + (w * factor + fw)] = v;
            }
    }
    auto xn = x.node();
    return detail::make_op<T>({N, C, OH, OW}, std::move(out), {x},
                              [xn, N, C, H, W, factor, OH, OW](detail::Node<T>& self) {
                                  if (!xn->requires_grad) return;
                                  xn->ensure_grad();
                                  const T* gy = self.grad.data();
                                  for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
                                      const T* gp = gy + nc * OH * OW;
                                      T* gx = xn->grad.data() + nc * H * W;
                                      for (int h = 0; h < H; ++h)
                                          for (int w = 0; w < W; ++w) {
                                              T s = T(0);
                                              for (int fh = 0; fh < factor; ++fh)
                                                  for (int fw = 0; fw < factor; ++fw)
                                                      s += gp[(h * factor + fh) * OW +
                                                              (w * factor + fw)];
                                              gx[h * W + w] += s;
                                          }
                                  }
                              });
}

// ---------------------------------------------------------------------------
// Structured helpers used by the modulated convolution
// ---------------------------------------------------------------------------

// w[co,ci,kh,kw] * s[ci]
template <typename T>
Tensor<T> mul_cin(const Tensor<T>& w, const Tensor<T>& s) {
    if (w.ndim() != 4 || s.ndim() != 1 || s.dim(0) != w.dim(1))
        throw ShapeError("mul_cin: expected w[CO,CI,KH,KW], s[CI]");
    int CO = w.dim(0), CI = w.dim(1);
    int64_t K = static_cast<int64_t>(w.dim(2)) * w.dim(3);
    std::vector<T> out(w.data().size());
    const T* wd = w.data().data();
    const T* sd = s.data().data();
    for (int co = 0; co < CO; ++co)
        for (int ci = 0; ci < CI; ++ci) {
            T sv = sd[ci];
            const T* wp = wd + (static_cast<int64_t>(co) * CI + ci) * K;
            T* op = out.data() + (static_cast<int64_t>(co) * CI + ci) * K;
            for (int64_t k = 0; k < K; ++k) op[k] = wp[k] * sv;
        }
    auto wn = w.node();
    auto sn = s.node();
    return detail::make_op<T>(w.shape(), std::move(out), {w, s},
                              [wn, sn, CO, CI, K](detail::Node<T>& self) {
                                  const T* gy = self.grad.data();
                                  if (wn->requires_grad) {
                                      wn->ensure_grad();
                                      for (int co = 0; co < CO; ++co)
                                          for (int ci = 0; ci < CI; ++ci) {
                                              T sv = sn->data[static_cast<size_t>(ci)];
                                              int64_t base = (static_cast<int64_t>(co) * CI + ci) * K;
                                              for (int64_t k = 0; k < K; ++k)
                                                  wn->grad[static_cast<size_t>(base + k)] +=
                                                      gy[base + k] * sv;
                                          }
                                  }
                                  if (sn->requires_grad) {
                                      sn->ensure_grad();
                                      for (int co = 0; co < CO; ++co)
                                          for (int ci = 0; ci < CI; ++ci) {
                                              int64_t base = (static_cast<int64_t>(co) * CI + ci) * K;
                                              T acc = T(0);
                                              for (int64_t k = 0; k < K; ++k)
                                                  acc += gy[base + k] * wn->data[static_cast<size_t>(base + k)];
                                              sn->grad[static_cast<size_t>(ci)] += acc;
                                          }
                                  }
                              });
}

// x viewed as [rows, rest] -> per-row sums [rows]
template <typename T>
Tensor<T> row_sums(const Tensor<T>& x, int rows) {
    if (rows <= 0 || x.numel() % rows != 0) throw ShapeError("row_sums: rows does not divide numel");
    int64_t rest = x.numel() / rows;
    std::vector<T> out(static_cast<size_t>(rows));
    const T* xd = x.data().data();
    for (int r = 0; r < rows; ++r) {
        T s = T(0);
        for (int64_t i = 0; i < rest; ++i) s += xd[r * rest + i];
        out[static_cast<size_t>(r)] = s;
    }
    auto xn = x.node();
    return detail::make_op<T>({rows}, std::move(out), {x}, [xn, rows, rest](detail::Node<T>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int r = 0; r < rows; ++r) {
            T g = self.grad[static_cast<size_t>(r)];
            for (int64_t i = 0; i < rest; ++i) xn->grad[static_cast<size_t>(r * rest + i)] += g;
        }
    });
}

// x viewed as [rows, rest] -> x[r, :] / d[r]
template <typename T>
Tensor<T> div_per_row(const Tensor<T>& x, const Tensor<T>& d) {
    int rows = d.dim(0);
    if (d.ndim() != 1 || rows <= 0 || x.numel() % rows != 0)
        throw ShapeError("div_per_row: divisor shape mismatch");
    int64_t rest = x.numel() / rows;
    std::vector<T> out(x.data().size());
    const T* xd = x.data().data();
    const T* dd = d.data().data();
    for (int r = 0; r < rows; ++r) {
        T inv = T(1) / dd[r];
        for (int64_t i = 0; i < rest; ++i) out[static_cast<size_t>(r * rest + i)] = xd[r * rest + i] * inv;
    }
    auto xn = x.node();
    auto dn = d.node();
    return detail::make_op<T>(x.shape(), std::move(out), {x, d},
                              [xn, dn, rows, rest](detail::Node<T>& self) {
                                  const T* gy = self.grad.data();
                                  for (int r = 0; r < rows; ++r) {
                                      T dv = dn->data[static_cast<size_t>(r)];
                                      T inv = T(1) / dv;
                                      if (xn->requires_grad) {
                                          xn->ensure_grad();
                                          for (int64_t i = 0; i < rest; ++i)
                                              xn->grad[static_cast<size_t>(r * rest + i)] +=
                                                  gy[r * rest + i] * inv;
                                      }
                                      if (dn->requires_grad) {
                                          dn->ensure_grad();
                                          T acc = T(0);
                                          for (int64_t i = 0; i < rest; ++i)
                                              acc += gy[r * rest + i] *
                                                     xn->data[static_cast<size_t>(r * rest + i)];
                                          dn->grad[static_cast<size_t>(r)] -= acc * inv * inv;
                                      }
                                  }
                              });
}

// x * g where g is a 1-element tensor.
template <typename T>
Tensor<T> mul_all(const Tensor<T>& x, const Tensor<T>& g) {
    if (g.numel() != 1) throw ShapeError("mul_all: gain must be scalar");
    T gv = g.data()[0];
    std::vector<T> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * gv;
    auto xn = x.node();
    auto gn = g.node();
    return detail::make_op<T>(x.shape(), std::move(out), {x, g}, [xn, gn](detail::Node<T>& self) {
        T gv2 = gn->data[0];
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * gv2;
        }
        if (gn->requires_grad) {
            gn->ensure_grad();
            T acc = T(0);
            for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * xn->data[i];
            gn->grad[0] += acc;
        }
    });
}

// ---------------------------------------------------------------------------
// Batched matmul + softmax (attention support)
// ---------------------------------------------------------------------------

// a[B,M,K] x b[B,K,N] -> [B,M,N]
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw ShapeError("bmm: expected [B,M,K] x [B,K,N]");
    int B = a.dim(0), M = a.dim(1), K = a.dim(2), Nn = b.dim(2);
    std::vector<T> out(static_cast<size_t>(B) * M * Nn, T(0));
    const T* ad = a.data().data();
    const T* bd = b.data().data();
    for (int bi = 0; bi < B; ++bi) {
        const T* ap = ad + static_cast<int64_t>(bi) * M * K;
        const T* bp = bd + static_cast<int64_t>(bi) * K * Nn;
        T* op = out.data() + static_cast<int64_t>(bi) * M * Nn;
        for (int m = 0; m < M; ++m)
            for (int k = 0; k < K; ++k) {
                T av = ap[m * K + k];
                const T* br = bp + k * Nn;
                T* orow = op + m * Nn;
                for (int n = 0; n < Nn; ++n) orow[n] += av * br[n];
            }
    }
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op<T>({B, M, Nn}, std::move(out), {a, b},
                              [an, bn, B, M, K, Nn](detail::Node<T>& self) {
                                  const T* gy = self.grad.data();
                                  for (int bi = 0; bi < B; ++bi) {
                                      const T* gp = gy + static_cast<int64_t>(bi) * M * Nn;
                                      if (an->requires_grad) {
                                          an->ensure_grad();
                                          const T* bp = bn->data.data() + static_cast<int64_t>(bi) * K * Nn;
                                          T* ga = an->grad.data() + static_cast<int64_t>(bi) * M * K;
                                          for (int m = 0; m < M; ++m)
                                              for (int k = 0; k < K; ++k) {
                                                  T acc = T(0);
                                                  for (int n = 0; n < Nn; ++n)
                                                      acc += gp[m * Nn + n] * bp[k * Nn + n];
                                                  ga[m * K + k] += acc;
                                              }
                                      }
                                      if (bn->requires_grad) {
                                          bn->ensure_grad();
                                          const T* ap = an->data.data() + static_cast<int64_t>(bi) * M * K;
                                          T* gb = bn->grad.data() + static_cast<int64_t>(bi) * K * Nn;
                                          for (int m = 0; m < M; ++m)
                                              for (int k = 0; k < K; ++k) {
                                                  T av = ap[m * K + k];
                                                  for (int n = 0; n < Nn; ++n)
                                                      gb[k * Nn + n] += av * gp[m * Nn + n];
                                              }
                                      }
                                  }
                              });
}

// [B,M,N] -> [B,N,M]
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& a) {
    if (a.ndim() != 3) throw ShapeError("transpose_last2: input must be 3-d");
    int B = a.dim(0), M = a.dim(1), N = a.dim(2);
    std::vector<T> out(a.data().size());
    const T* ad = a.data().data();
    for (int bi = 0; bi < B; ++bi)
        for (int m = 0; m < M; ++m)
            for (int n = 0; n < N; ++n)
                out[static_cast<size_t>((static_cast<int64_t>(bi) * N + n) * M + m)] =
                    ad[(static_cast<int64_t>(bi) * M + m) * N + n];
    auto an = a.node();
    return detail::make_op<T>({B, N, M}, std::move(out), {a}, [an, B, M, N](detail::Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int bi = 0; bi < B; ++bi)
            for (int m = 0; m < M; ++m)
                for (int n = 0; n < N; ++n)
                    an->grad[static_cast<size_t>((static_cast<int64_t>(bi) * M + m) * N + n)] +=
                        self.grad[static_cast<size_t>((static_cast<int64_t>(bi) * N + n) * M + m)];
    });
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& a) {
    int nd = a.ndim();
    int L = a.dim(nd - 1);
    int64_t rows = a.numel() / L;
    std::vector<T> out(a.data().size());
    const T* ad = a.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = ad + r * L;
        T* orow = out.data() + r * L;
        T mx = xr[0];
        for (int i = 1; i < L; ++i) mx = std::max(mx, xr[i]);
        T s = T(0);
        for (int i = 0; i < L; ++i) {
            orow[i] = std::exp(xr[i] - mx);
            s += orow[i];
        }
        T inv = T(1) / s;
        for (int i = 0; i < L; ++i) orow[i] *= inv;
    }
    auto an = a.node();
    auto saved = out;
    return detail::make_op<T>(a.shape(), std::move(out), {a},
                              [an, rows, L, saved = std::move(saved)](detail::Node<T>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  const T* gy = self.grad.data();
                                  for (int64_t r = 0; r < rows; ++r) {
                                      const T* y = saved.data() + r * L;
                                      const T* g = gy + r * L;
                                      T dot = T(0);
                                      for (int i = 0; i < L; ++i) dot += g[i] * y[i];
                                      for (int i = 0; i < L; ++i)
                                          an->grad[static_cast<size_t>(r * L + i)] +=
                                              y[i] * (g[i] - dot);
                                  }
                              });
}

// ---------------------------------------------------------------------------
// Space-to-depth (invertible block packing)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> space_to_depth(const Tensor<T>& x, int r) {
    if (x.ndim() != 4) throw ShapeError("space_to_depth: input must be 4-d");
    if (r < 1) throw ShapeError("space_to_depth: factor must be positive");
    if (r == 1) return x;
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % r != 0 || W % r != 0) throw ShapeError("space_to_depth: extents not divisible by r");
    int OH = H / r, OW = W / r;
    // out[n, c*r*r + bh*r + bw, oh, ow] = x[n, c, oh*r+bh, ow*r+bw]
    std::vector<T> out(x.data().size());
    const T* xd = x.data().data();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int bh = 0; bh < r; ++bh)
                for (int bw = 0; bw < r; ++bw) {
                    int oc = c * r * r + bh * r + bw;
                    for (int oh = 0; oh < OH; ++oh)
                        for (int ow = 0; ow < OW; ++ow)
                            out[static_cast<size_t>(
                                ((static_cast<int64_t>(n) * C * r * r + oc) * OH + oh) * OW + ow)] =
                                xd[((static_cast<int64_t>(n) * C + c) * H + oh * r + bh) * W +
                                   ow * r + bw];
                }
    auto xn = x.node();
    return detail::make_op<T>(
        {N, C * r * r, OH, OW}, std::move(out), {x}, [xn, N, C, H, W, r, OH, OW](detail::Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c)
                    for (int bh = 0; bh < r; ++bh)
                        for (int bw = 0; bw < r; ++bw) {
                            int oc = c * r * r + bh * r + bw;
                            for (int oh = 0; oh < OH; ++oh)
                                for (int ow = 0; ow < OW; ++ow)
                                    xn->grad[static_cast<size_t>(
                                        ((static_cast<int64_t>(n) * C + c) * H + oh * r + bh) * W +
                                        ow * r + bw)] +=
                                        self.grad[static_cast<size_t>(
                                            ((static_cast<int64_t>(n) * C * r * r + oc) * OH + oh) *
                                                OW +
                                            ow)];
                        }
        });
}

template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& x, int r) {
    if (x.ndim() != 4) throw ShapeError("depth_to_space: input must be 4-d");
    if (r < 1) throw ShapeError("depth_to_space: factor must be positive");
    if (r == 1) return x;
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (C % (r * r) != 0) throw ShapeError("depth_to_space: channels not divisible by r^2");
    int OC = C / (r * r), OH = H * r, OW = W * r;
    std::vector<T> out(x.data().size());
    const T* xd = x.data().data();
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc)
            for (int bh = 0; bh < r; ++bh)
                for (int bw = 0; bw < r; ++bw) {
                    int c = oc * r * r + bh * r + bw;
                    for (int h = 0; h < H; ++h)
                        for (int w = 0; w < W; ++w)
                            out[static_cast<size_t>(
                                ((static_cast<int64_t>(n) * OC + oc) * OH + h * r + bh) * OW +
                                w * r + bw)] =
                                xd[((static_cast<int64_t>(n) * C + c) * H + h) * W + w];
                }
    auto xn = x.node();
    return detail::make_op<T>(
        {N, OC, OH, OW}, std::move(out), {x}, [xn, N, C, H, W, r, OC, OH, OW](detail::Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int oc = 0; oc < OC; ++oc)
                    for (int bh = 0; bh < r; ++bh)
                        for (int bw = 0; bw < r; ++bw) {
                            int c = oc * r * r + bh * r + bw;
                            for (int h = 0; h < H; ++h)
                                for (int w = 0; w < W; ++w)
                                    xn->grad[static_cast<size_t>(
                                        ((static_cast<int64_t>(n) * C + c) * H + h) * W + w)] +=
                                        self.grad[static_cast<size_t>(
                                            ((static_cast<int64_t>(n) * OC + oc) * OH + h * r + bh) *
                                                OW +
                                            w * r + bw)];
                        }
        });
}

}  // namespace litevae

#pragma once

// Exact multi-level 2D Haar analysis/synthesis with [L|H|V|D] channel packing,
// level normalization, space-to-depth packing, and Gaussian blurring. All
// transforms are differentiable: the block transform is orthonormal, so the
// backward pass of analysis is synthesis and vice versa.

#include <vector>

#include "litevae/tensor.hpp"

namespace litevae {

namespace detail {

// Per 2x2 block [[a,b],[c,d]]:
//   L=(a+b+c+d)/2  H=(a-b+c-d)/2  V=(a+b-c-d)/2  D=(a-b-c+d)/2
template <typename T>
void haar_analysis_data(const T* x, T* out, int64_t NC, int H, int W) {
    const int OH = H / 2, OW = W / 2;
    for (int64_t nc = 0; nc < NC; ++nc) {
        const T* xp = x + nc * H * W;
        // band planes for this channel live at offsets b*NC stride in the
        // caller's packed layout; caller passes a view where the four bands of
        // channel nc are at out + (band*NC + nc) * OH*OW
        for (int oh = 0; oh < OH; ++oh) {
            const T* r0 = xp + (2 * oh) * W;
            const T* r1 = xp + (2 * oh + 1) * W;
            for (int ow = 0; ow < OW; ++ow) {
                T a = r0[2 * ow], b = r0[2 * ow + 1];
                T c = r1[2 * ow], d = r1[2 * ow + 1];
                int64_t o = oh * OW + ow;
                out[(0 * NC + nc) * OH * OW + o] = (a + b + c + d) * T(0.5);
                out[(1 * NC + nc) * OH * OW + o] = (a - b + c - d) * T(0.5);
                out[(2 * NC + nc) * OH * OW + o] = (a + b - c - d) * T(0.5);
                out[(3 * NC + nc) * OH * OW + o] = (a - b - c + d) * T(0.5);
            }
        }
    }
}

template <typename T>
void haar_synthesis_data(const T* bands, T* x, int64_t NC, int H, int W) {
    const int OH = H / 2, OW = W / 2;
    for (int64_t nc = 0; nc < NC; ++nc) {
        T* xp = x + nc * H * W;
        for (int oh = 0; oh < OH; ++oh) {
            T* r0 = xp + (2 * oh) * W;
            T* r1 = xp + (2 * oh + 1) * W;
            for (int ow = 0; ow < OW; ++ow) {
                int64_t o = oh * OW + ow;
                T L = bands[(0 * NC + nc) * OH * OW + o];
                T Hb = bands[(1 * NC + nc) * OH * OW + o];
                T V = bands[(2 * NC + nc) * OH * OW + o];
                T D = bands[(3 * NC + nc) * OH * OW + o];
                r0[2 * ow] = (L + Hb + V + D) * T(0.5);
                r0[2 * ow + 1] = (L - Hb + V - D) * T(0.5);
                r1[2 * ow] = (L + Hb - V - D) * T(0.5);
                r1[2 * ow + 1] = (L - Hb - V + D) * T(0.5);
            }
        }
    }
}

}  // namespace detail

// Single-level analysis: [N,C,H,W] -> [N,4C,H/2,W/2] packed [L|H|V|D].
template <typename T>
Tensor<T> haar_dwt_level1(const Tensor<T>& x) {
    if (x.ndim() != 4) throw ShapeError("haar_dwt: input must be 4-d");
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw ShapeError("haar_dwt: spatial extents must be even, got " + shape_str(x.shape()));
    int OH = H / 2, OW = W / 2;
    std::vector<T> out(x.data().size());
    // process per sample so the packed band layout is per-image [L|H|V|D]
    for (int n = 0; n < N; ++n)
        detail::haar_analysis_data(x.data().data() + static_cast<int64_t>(n) * C * H * W,
                                   out.data() + static_cast<int64_t>(n) * 4 * C * OH * OW, C, H, W);
    auto xn = x.node();
    return detail::make_op<T>({N, 4 * C, OH, OW}, std::move(out), {x},
                              [xn, N, C, H, W, OH, OW](detail::Node<T>& self) {
                                  if (!xn->requires_grad) return;
                                  xn->ensure_grad();
                                  // orthonormal: adjoint == inverse
                                  std::vector<T> tmp(static_cast<size_t>(C) * H * W);
                                  for (int n = 0; n < N; ++n) {
                                      detail::haar_synthesis_data(
                                          self.grad.data() + static_cast<int64_t>(n) * 4 * C * OH * OW,
                                          tmp.data(), C, H, W);
                                      T* g = xn->grad.data() + static_cast<int64_t>(n) * C * H * W;
                                      for (size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i];
                                  }
                              });
}

// Single-level synthesis: [N,4C,H,W] packed [L|H|V|D] -> [N,C,2H,2W].
template <typename T>
Tensor<T> haar_idwt_level1(const Tensor<T>& bands) {
    if (bands.ndim() != 4) throw ShapeError("haar_idwt: input must be 4-d");
    int N = bands.dim(0), C4 = bands.dim(1), BH = bands.dim(2), BW = bands.dim(3);
    if (C4 % 4 != 0) throw ShapeError("haar_idwt: channel count must be a multiple of 4");
    int C = C4 / 4, H = BH * 2, W = BW * 2;
    std::vector<T> out(bands.data().size());
    for (int n = 0; n < N; ++n)
        detail::haar_synthesis_data(bands.data().data() + static_cast<int64_t>(n) * C4 * BH * BW,
                                    out.data() + static_cast<int64_t>(n) * C * H * W, C, H, W);
    auto bn = bands.node();
    return detail::make_op<T>({N, C, H, W}, std::move(out), {bands},
                              [bn, N, C, H, W, BH, BW](detail::Node<T>& self) {
                                  if (!bn->requires_grad) return;
                                  bn->ensure_grad();
                                  std::vector<T> tmp(static_cast<size_t>(4 * C) * BH * BW);
                                  for (int n = 0; n < N; ++n) {
                                      detail::haar_analysis_data(
                                          self.grad.data() + static_cast<int64_t>(n) * C * H * W,
                                          tmp.data(), C, H, W);
                                      T* g = bn->grad.data() + static_cast<int64_t>(n) * 4 * C * BH * BW;
                                      for (size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i];
                                  }
                              });
}

// Multi-level decomposition. `bands` holds the deepest level packed [L|H|V|D];
// `details` keeps the high bands of the shallower levels ([N,3C,...] each,
// level 1 first) so that the inverse is exact. The normalization divisor has
// been applied to `bands` only.
template <typename T>
struct WaveletPyramid {
    int level = 1;
    Tensor<T> bands;
    std::vector<Tensor<T>> details;
    T normalization = T(1);
};

template <typename T>
WaveletPyramid<T> dwt2(const Tensor<T>& x, int level) {
    if (level < 1 || level > 3) throw ShapeError("dwt2: level must be in {1,2,3}");
    int H = x.dim(2), W = x.dim(3);
    int div = 1 << level;
    if (H % div != 0 || W % div != 0)
        throw ShapeError("dwt2: extents " + shape_str(x.shape()) + " not divisible by 2^" +
                         std::to_string(level));
    WaveletPyramid<T> p;
    p.level = level;
    int C = x.dim(1);
    Tensor<T> cur = x;
    for (int l = 1; l <= level; ++l) {
        Tensor<T> b = haar_dwt_level1(cur);
        if (l == level) {
            p.bands = b;
        } else {
            p.details.push_back(slice_axis(b, 1, C, 4 * C));
            cur = slice_axis(b, 1, 0, C);
        }
    }
    return p;
}

template <typename T>
WaveletPyramid<T> normalized_dwt(const Tensor<T>& x, int level) {
    WaveletPyramid<T> p = dwt2(x, level);
    T norm = static_cast<T>(1 << level);
    p.bands = mul_scalar(p.bands, T(1) / norm);
    p.normalization = norm;
    return p;
}

template <typename T>
Tensor<T> idwt2(const WaveletPyramid<T>& p) {
    if (!p.bands.defined()) throw ContractError("idwt2: empty pyramid");
    if (static_cast<int>(p.details.size()) != p.level - 1)
        throw ShapeError("idwt2: detail stack does not match level");
    Tensor<T> b = p.bands;
    if (p.normalization != T(1)) b = mul_scalar(b, p.normalization);
    Tensor<T> cur = haar_idwt_level1(b);
    for (int l = p.level - 1; l >= 1; --l) {
        const Tensor<T>& det = p.details[static_cast<size_t>(l - 1)];
        if (det.dim(2) != cur.dim(2) || det.dim(3) != cur.dim(3))
            throw ShapeError("idwt2: inconsistent band shapes at level " + std::to_string(l));
        cur = haar_idwt_level1(concat<T>({cur, det}, 1));
    }
    return cur;
}

// ---------------------------------------------------------------------------
// Gaussian blur (separable, reflect padding, normalized kernel)
// ---------------------------------------------------------------------------

namespace detail {

inline int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

// One separable pass along H (horizontal=false) or W (horizontal=true).
template <typename T>
Tensor<T> blur_axis(const Tensor<T>& x, const std::vector<T>& kernel, bool horizontal) {
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int K = static_cast<int>(kernel.size());
    int c0 = K / 2;
    std::vector<T> out(x.data().size(), T(0));
    const T* xd = x.data().data();
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const T* xp = xd + nc * H * W;
        T* op = out.data() + nc * H * W;
        if (horizontal) {
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    T acc = T(0);
                    for (int k = 0; k < K; ++k)
                        acc += kernel[static_cast<size_t>(k)] * xp[h * W + reflect_index(w + k - c0, W)];
                    op[h * W + w] = acc;
                }
        } else {
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    T acc = T(0);
                    for (int k = 0; k < K; ++k)
                        acc += kernel[static_cast<size_t>(k)] * xp[reflect_index(h + k - c0, H) * W + w];
                    op[h * W + w] = acc;
                }
        }
    }
    auto xn = x.node();
    return make_op<T>(x.shape(), std::move(out), {x},
                      [xn, kernel, horizontal, N, C, H, W, K, c0](detail::Node<T>& self) {
                          if (!xn->requires_grad) return;
                          xn->ensure_grad();
                          const T* gy = self.grad.data();
                          // exact adjoint: scatter each tap through the same reflected index
                          for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
                              const T* gp = gy + nc * H * W;
                              T* gx = xn->grad.data() + nc * H * W;
                              if (horizontal) {
                                  for (int h = 0; h < H; ++h)
                                      for (int w = 0; w < W; ++w) {
                                          T g = gp[h * W + w];
                                          for (int k = 0; k < K; ++k)
                                              gx[h * W + reflect_index(w + k - c0, W)] +=
                                                  kernel[static_cast<size_t>(k)] * g;
                                      }
                              } else {
                                  for (int h = 0; h < H; ++h)
                                      for (int w = 0; w < W; ++w) {
                                          T g = gp[h * W + w];
                                          for (int k = 0; k < K; ++k)
                                              gx[reflect_index(h + k - c0, H) * W + w] +=
                                                  kernel[static_cast<size_t>(k)] * g;
                                      }
                              }
                          }
                      });
}

}  // namespace detail

template <typename T>
std::vector<T> gaussian_kernel_1d(int kernel_size, T sigma) {
    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw ShapeError("gaussian_kernel: size must be odd and positive");
    if (!(sigma > T(0))) throw ShapeError("gaussian_kernel: sigma must be positive");
    std::vector<T> k(static_cast<size_t>(kernel_size));
    int c = kernel_size / 2;
    T s = T(0);
    for (int i = 0; i < kernel_size; ++i) {
        T d = static_cast<T>(i - c);
        k[static_cast<size_t>(i)] = std::exp(-d * d / (T(2) * sigma * sigma));
        s += k[static_cast<size_t>(i)];
    }
    for (auto& v : k) v /= s;
    return k;
}

template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& x, int kernel_size, T sigma) {
    if (x.ndim() != 4) throw ShapeError("gaussian_blur: input must be 4-d");
    auto k = gaussian_kernel_1d(kernel_size, sigma);
    if (kernel_size == 1) return x;
    return detail::blur_axis(detail::blur_axis(x, k, true), k, false);
}

}  // namespace litevae

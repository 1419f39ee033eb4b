#pragma once

// Evaluation metrics: PSNR, SSIM, RBF-kernel MMD. Parameter and FLOP counts
// live on the modules themselves (ParamMap::total_params, *.flops).

#include <algorithm>
#include <cmath>
#include <vector>

#include "litevae/tensor.hpp"

namespace litevae {

// 10*log10(peak^2 / MSE) per image, averaged over the batch; 100 dB cap when
// MSE < 1e-10.
template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& x_hat, double peak = 1.0) {
    if (x.shape() != x_hat.shape()) throw ShapeError("psnr: shape mismatch");
    int n = x.ndim() == 4 ? x.dim(0) : 1;
    int64_t per = x.numel() / n;
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        double mse = 0;
        for (int64_t j = 0; j < per; ++j) {
            double d = static_cast<double>(x.data()[static_cast<size_t>(i * per + j)]) -
                       static_cast<double>(x_hat.data()[static_cast<size_t>(i * per + j)]);
            mse += d * d;
        }
        mse /= static_cast<double>(per);
        acc += mse < 1e-10 ? 100.0 : 10.0 * std::log10(peak * peak / mse);
    }
    return acc / n;
}

namespace detail {

// Valid-window SSIM for one channel plane with an 11x11 Gaussian window.
inline double ssim_plane(const float* a, const float* b, int h, int w, double c1, double c2,
                         const std::vector<double>& win, int k) {
    int half = k / 2;
    double acc = 0;
    int64_t count = 0;
    for (int y = half; y < h - half; ++y) {
        for (int x = half; x < w - half; ++x) {
            double ma = 0, mb = 0;
            for (int dy = -half; dy <= half; ++dy)
                for (int dx = -half; dx <= half; ++dx) {
                    double wgt = win[static_cast<size_t>((dy + half) * k + dx + half)];
                    ma += wgt * a[(y + dy) * w + x + dx];
                    mb += wgt * b[(y + dy) * w + x + dx];
                }
            double va = 0, vb = 0, cov = 0;
            for (int dy = -half; dy <= half; ++dy)
                for (int dx = -half; dx <= half; ++dx) {
                    double wgt = win[static_cast<size_t>((dy + half) * k + dx + half)];
                    double da = a[(y + dy) * w + x + dx] - ma;
                    double db = b[(y + dy) * w + x + dx] - mb;
                    va += wgt * da * da;
                    vb += wgt * db * db;
                    cov += wgt * da * db;
                }
            double num = (2 * ma * mb + c1) * (2 * cov + c2);
            double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            acc += num / den;
            ++count;
        }
    }
    return count ? acc / static_cast<double>(count) : 1.0;
}

}  // namespace detail

// Mean SSIM over channels and valid 11x11 windows (sigma 1.5), averaged over
// the batch. C1=(0.01*peak)^2, C2=(0.03*peak)^2.
template <typename T>
double ssim(const Tensor<T>& x, const Tensor<T>& x_hat, double peak = 1.0) {
    if (x.shape() != x_hat.shape()) throw ShapeError("ssim: shape mismatch");
    if (x.ndim() != 4) throw ShapeError("ssim: input must be 4-d");
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int k = 11;
    const double sigma = 1.5;
    std::vector<double> win(k * k);
    double s = 0;
    for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
            double ry = dy - k / 2, rx = dx - k / 2;
            win[static_cast<size_t>(dy * k + dx)] = std::exp(-(rx * rx + ry * ry) / (2 * sigma * sigma));
            s += win[static_cast<size_t>(dy * k + dx)];
        }
    for (auto& v : win) v /= s;
    double c1 = (0.01 * peak) * (0.01 * peak);
    double c2 = (0.03 * peak) * (0.03 * peak);

    std::vector<float> a(static_cast<size_t>(h) * w), b(static_cast<size_t>(h) * w);
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        double per_image = 0;
        for (int ch = 0; ch < c; ++ch) {
            const T* pa = x.data().data() + (static_cast<int64_t>(i) * c + ch) * h * w;
            const T* pb = x_hat.data().data() + (static_cast<int64_t>(i) * c + ch) * h * w;
            for (int64_t j = 0; j < static_cast<int64_t>(h) * w; ++j) {
                a[static_cast<size_t>(j)] = static_cast<float>(pa[j]);
                b[static_cast<size_t>(j)] = static_cast<float>(pb[j]);
            }
            per_image += detail::ssim_plane(a.data(), b.data(), h, w, c1, c2, win, k);
        }
        acc += per_image / c;
    }
    return acc / n;
}

// ---------------------------------------------------------------------------
// Maximum mean discrepancy (RBF kernel)
// ---------------------------------------------------------------------------

struct MmdResult {
    std::vector<double> bandwidths;
    std::vector<double> mmd2;  // one estimate per bandwidth
};

// {0.5, 1, 2, 4, 8} * sqrt(d/2)
inline std::vector<double> default_mmd_bandwidths(int64_t d) {
    double base = std::sqrt(static_cast<double>(d) / 2.0);
    return {0.5 * base, 1.0 * base, 2.0 * base, 4.0 * base, 8.0 * base};
}

// Unbiased U-statistic (or biased V-statistic) estimate of MMD^2 with kernel
// exp(-|a-b|^2 / (2 sigma^2)) per bandwidth. Inputs are flattened per-sample
// vectors.
inline MmdResult mmd_rbf(const std::vector<std::vector<double>>& A,
                         const std::vector<std::vector<double>>& B,
                         const std::vector<double>& bandwidths, bool unbiased = true) {
    if (A.empty() || B.empty()) throw ContractError("mmd: empty sample set");
    size_t m = A.size(), n = B.size();
    if (unbiased && (m < 2 || n < 2)) throw ContractError("mmd: unbiased estimate needs >= 2 samples");
    size_t d = A[0].size();
    for (const auto& v : A)
        if (v.size() != d) throw ShapeError("mmd: inconsistent vector lengths");
    for (const auto& v : B)
        if (v.size() != d) throw ShapeError("mmd: inconsistent vector lengths");

    auto sqdist = [d](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0;
        for (size_t i = 0; i < d; ++i) {
            double diff = a[i] - b[i];
            s += diff * diff;
        }
        return s;
    };

    // pairwise squared distances once, kernels per bandwidth
    std::vector<double> daa(m * m), dbb(n * n), dab(m * n);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < m; ++j) daa[i * m + j] = sqdist(A[i], A[j]);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) dbb[i * n + j] = sqdist(B[i], B[j]);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) dab[i * n + j] = sqdist(A[i], B[j]);

    MmdResult res;
    res.bandwidths = bandwidths;
    std::vector<double> cross(m * n);
    for (double sigma : bandwidths) {
        double inv = 1.0 / (2.0 * sigma * sigma);
        double saa = 0, sbb = 0, sab = 0;
        if (unbiased) {
            for (size_t i = 0; i < m; ++i)
                for (size_t j = 0; j < m; ++j)
                    if (i != j) saa += std::exp(-daa[i * m + j] * inv);
            for (size_t i = 0; i < n; ++i)
                for (size_t j = 0; j < n; ++j)
                    if (i != j) sbb += std::exp(-dbb[i * n + j] * inv);
            saa /= static_cast<double>(m) * (m - 1);
            sbb /= static_cast<double>(n) * (n - 1);
        } else {
            for (double v : daa) saa += std::exp(-v * inv);
            for (double v : dbb) sbb += std::exp(-v * inv);
            saa /= static_cast<double>(m) * m;
            sbb /= static_cast<double>(n) * n;
        }
        // sorted accumulation makes the cross term independent of argument
        // order, so mmd(A,B) == mmd(B,A) exactly
        for (size_t i = 0; i < cross.size(); ++i) cross[i] = std::exp(-dab[i] * inv);
        std::sort(cross.begin(), cross.end());
        for (double v : cross) sab += v;
        sab /= static_cast<double>(m) * n;
        res.mmd2.push_back(saa + sbb - 2.0 * sab);
    }
    return res;
}

// Latent tensors flattened per sample for the MMD estimator.
template <typename T>
std::vector<std::vector<double>> flatten_per_sample(const Tensor<T>& t) {
    int n = t.dim(0);
    int64_t per = t.numel() / n;
    std::vector<std::vector<double>> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        out[static_cast<size_t>(i)].resize(static_cast<size_t>(per));
        for (int64_t j = 0; j < per; ++j)
            out[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                static_cast<double>(t.data()[static_cast<size_t>(i * per + j)]);
    }
    return out;
}

}  // namespace litevae

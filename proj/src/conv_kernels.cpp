#include "litevae/tensor.hpp"

#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

// Direct convolution kernels. Parallel decomposition assigns whole output
// planes (or weight slices) to single threads, so accumulation order per
// element is fixed and results are bit-identical for any thread count.

namespace litevae {

int effective_threads() {
#ifdef _OPENMP
    if (const char* env = std::getenv("LITEVAE_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace detail {

template <typename T>
void conv2d_forward_data(const T* x, const T* w, const T* bias, T* out, int N, int CI, int H,
                         int W, int CO, int KH, int KW, int stride, int pad, int OH, int OW) {
    const int64_t planes = static_cast<int64_t>(N) * CO;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
#endif
    for (int64_t p = 0; p < planes; ++p) {
        const int n = static_cast<int>(p / CO);
        const int co = static_cast<int>(p % CO);
        T* op = out + p * OH * OW;
        const T b = bias ? bias[co] : T(0);
        for (int i = 0; i < OH * OW; ++i) op[i] = b;
        for (int ci = 0; ci < CI; ++ci) {
            const T* xp = x + (static_cast<int64_t>(n) * CI + ci) * H * W;
            const T* wp = w + (static_cast<int64_t>(co) * CI + ci) * KH * KW;
            for (int kh = 0; kh < KH; ++kh) {
                for (int kw = 0; kw < KW; ++kw) {
                    const T wv = wp[kh * KW + kw];
                    // valid output range for this tap
                    int oh0 = 0;
                    while (oh0 * stride - pad + kh < 0) ++oh0;
                    int oh1 = OH;
                    while (oh1 > oh0 && (oh1 - 1) * stride - pad + kh >= H) --oh1;
                    int ow0 = 0;
                    while (ow0 * stride - pad + kw < 0) ++ow0;
                    int ow1 = OW;
                    while (ow1 > ow0 && (ow1 - 1) * stride - pad + kw >= W) --ow1;
                    for (int oh = oh0; oh < oh1; ++oh) {
                        const int ih = oh * stride - pad + kh;
                        const T* xr = xp + ih * W - pad + kw;
                        T* orow = op + oh * OW;
                        if (stride == 1) {
                            for (int ow = ow0; ow < ow1; ++ow) orow[ow] += wv * xr[ow];
                        } else {
                            for (int ow = ow0; ow < ow1; ++ow) orow[ow] += wv * xr[ow * stride];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const T* gy, const T* w, T* gx, int N, int CI, int H, int W, int CO,
                           int KH, int KW, int stride, int pad, int OH, int OW) {
    const int64_t planes = static_cast<int64_t>(N) * CI;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
#endif
    for (int64_t p = 0; p < planes; ++p) {
        const int n = static_cast<int>(p / CI);
        const int ci = static_cast<int>(p % CI);
        T* gxp = gx + p * H * W;
        for (int co = 0; co < CO; ++co) {
            const T* gyp = gy + (static_cast<int64_t>(n) * CO + co) * OH * OW;
            const T* wp = w + (static_cast<int64_t>(co) * CI + ci) * KH * KW;
            for (int kh = 0; kh < KH; ++kh) {
                for (int kw = 0; kw < KW; ++kw) {
                    const T wv = wp[kh * KW + kw];
                    int oh0 = 0;
                    while (oh0 * stride - pad + kh < 0) ++oh0;
                    int oh1 = OH;
                    while (oh1 > oh0 && (oh1 - 1) * stride - pad + kh >= H) --oh1;
                    int ow0 = 0;
                    while (ow0 * stride - pad + kw < 0) ++ow0;
                    int ow1 = OW;
                    while (ow1 > ow0 && (ow1 - 1) * stride - pad + kw >= W) --ow1;
                    for (int oh = oh0; oh < oh1; ++oh) {
                        const int ih = oh * stride - pad + kh;
                        T* gxr = gxp + ih * W - pad + kw;
                        const T* gyr = gyp + oh * OW;
                        if (stride == 1) {
                            for (int ow = ow0; ow < ow1; ++ow) gxr[ow] += wv * gyr[ow];
                        } else {
                            for (int ow = ow0; ow < ow1; ++ow) gxr[ow * stride] += wv * gyr[ow];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_weight(const T* gy, const T* x, T* gw, int N, int CI, int H, int W, int CO,
                            int KH, int KW, int stride, int pad, int OH, int OW) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
#endif
    for (int co = 0; co < CO; ++co) {
        for (int ci = 0; ci < CI; ++ci) {
            T* gwp = gw + (static_cast<int64_t>(co) * CI + ci) * KH * KW;
            for (int kh = 0; kh < KH; ++kh) {
                for (int kw = 0; kw < KW; ++kw) {
                    int oh0 = 0;
                    while (oh0 * stride - pad + kh < 0) ++oh0;
                    int oh1 = OH;
                    while (oh1 > oh0 && (oh1 - 1) * stride - pad + kh >= H) --oh1;
                    int ow0 = 0;
                    while (ow0 * stride - pad + kw < 0) ++ow0;
                    int ow1 = OW;
                    while (ow1 > ow0 && (ow1 - 1) * stride - pad + kw >= W) --ow1;
                    T acc = T(0);
                    for (int n = 0; n < N; ++n) {
                        const T* gyp = gy + (static_cast<int64_t>(n) * CO + co) * OH * OW;
                        const T* xp = x + (static_cast<int64_t>(n) * CI + ci) * H * W;
                        for (int oh = oh0; oh < oh1; ++oh) {
                            const int ih = oh * stride - pad + kh;
                            const T* xr = xp + ih * W - pad + kw;
                            const T* gyr = gyp + oh * OW;
                            if (stride == 1) {
                                for (int ow = ow0; ow < ow1; ++ow) acc += gyr[ow] * xr[ow];
                            } else {
                                for (int ow = ow0; ow < ow1; ++ow) acc += gyr[ow] * xr[ow * stride];
                            }
                        }
                    }
                    gwp[kh * KW + kw] += acc;
                }
            }
        }
    }
}

template void conv2d_forward_data<float>(const float*, const float*, const float*, float*, int,
                                         int, int, int, int, int, int, int, int, int, int);
template void conv2d_forward_data<double>(const double*, const double*, const double*, double*,
                                          int, int, int, int, int, int, int, int, int, int, int);
template void conv2d_backward_input<float>(const float*, const float*, float*, int, int, int, int,
                                           int, int, int, int, int, int, int);
template void conv2d_backward_input<double>(const double*, const double*, double*, int, int, int,
                                            int, int, int, int, int, int, int, int);
template void conv2d_backward_weight<float>(const float*, const float*, float*, int, int, int, int,
                                            int, int, int, int, int, int, int);
template void conv2d_backward_weight<double>(const double*, const double*, double*, int, int, int,
                                             int, int, int, int, int, int, int, int);

}  // namespace detail
}  // namespace litevae

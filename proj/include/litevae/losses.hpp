#pragma once

// Training losses: L1 reconstruction, high-frequency wavelet (Charbonnier) and
// Gaussian losses, KL regularization weight bookkeeping, adversarial loss
// variants, and the adaptive adversarial weight.

#include <utility>

#include "litevae/tensor.hpp"
#include "litevae/wavelet.hpp"

namespace litevae {

struct LossWeights {
    double lambda_reg = 1e-6;
    double lambda_adv = 0.1;
    double lambda_wavelet = 0.1;
    double lambda_gaussian = 0.1;
    bool adaptive_adv = false;
    double delta = 1e-4;
    double charbonnier_eps = 1e-3;
    int blur_kernel = 5;
    double blur_sigma = 1.0;
};

enum class AdvLossKind { hinge, logistic };

inline AdvLossKind adv_loss_kind_from_string(const std::string& s) {
    if (s == "hinge") return AdvLossKind::hinge;
    if (s == "logistic") return AdvLossKind::logistic;
    throw ConfigError("unknown adversarial loss '" + s + "' (expected hinge/logistic)");
}

// Mean absolute error.
template <typename T>
Tensor<T> recon_loss(const Tensor<T>& x, const Tensor<T>& x_hat) {
    return mean(litevae::abs(sub(x_hat, x)));
}

// Charbonnier over the three high bands of packed level-1 pyramids [N,4C,h,w].
template <typename T>
Tensor<T> charbonnier_hf_from_bands(const Tensor<T>& bands_x, const Tensor<T>& bands_hat, T eps) {
    int c4 = bands_x.dim(1);
    int c = c4 / 4;
    Tensor<T> hx = slice_axis(bands_x, 1, c, c4);
    Tensor<T> hh = slice_axis(bands_hat, 1, c, c4);
    Tensor<T> d = sub(hx, hh);
    return mean(litevae::sqrt(add_scalar(mul(d, d), eps * eps)));
}

// Charbonnier loss between the normalized level-1 high sub-bands of x and x_hat.
template <typename T>
Tensor<T> wavelet_hf_loss(const Tensor<T>& x, const Tensor<T>& x_hat, T eps) {
    return charbonnier_hf_from_bands(normalized_dwt(x, 1).bands, normalized_dwt(x_hat, 1).bands,
                                     eps);
}

// L1 between the high-pass residuals x - h(x) and x_hat - h(x_hat).
template <typename T>
Tensor<T> gaussian_hf_loss(const Tensor<T>& x, const Tensor<T>& x_hat, int kernel_size, T sigma) {
    Tensor<T> rx = sub(x, gaussian_blur(x, kernel_size, sigma));
    Tensor<T> rh = sub(x_hat, gaussian_blur(x_hat, kernel_size, sigma));
    return mean(litevae::abs(sub(rx, rh)));
}

template <typename T>
Tensor<T> adv_d_loss(const Tensor<T>& real_logits, const Tensor<T>& fake_logits, AdvLossKind kind) {
    if (kind == AdvLossKind::hinge) {
        Tensor<T> lr = mean(relu(add_scalar(neg(real_logits), T(1))));
        Tensor<T> lf = mean(relu(add_scalar(fake_logits, T(1))));
        return add(lr, lf);
    }
    return add(mean(softplus(neg(real_logits))), mean(softplus(fake_logits)));
}

template <typename T>
Tensor<T> adv_g_loss(const Tensor<T>& fake_logits, AdvLossKind kind) {
    if (kind == AdvLossKind::hinge) return neg(mean(fake_logits));
    return mean(softplus(neg(fake_logits)));
}

// (d_loss, g_loss) evaluated on the same logits; the trainer detaches the
// reconstruction before the discriminator step.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> adversarial_losses(const Tensor<T>& real_logits,
                                                   const Tensor<T>& fake_logits, AdvLossKind kind) {
    return {adv_d_loss(real_logits, fake_logits, kind), adv_g_loss(fake_logits, kind)};
}

// lambda_adv = 1/2 * |grad L_recon| / (|grad L_adv| + delta), clamped to [0, 1e4].
template <typename T>
T adaptive_adv_weight(T grad_recon_norm, T grad_adv_norm, T delta) {
    T w = T(0.5) * grad_recon_norm / (grad_adv_norm + delta);
    return std::min(T(1e4), std::max(T(0), w));
}

}  // namespace litevae

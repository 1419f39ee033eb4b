#pragma once

#include <cmath>
#include <vector>

#include "litevae/rng.hpp"
#include "litevae/tensor.hpp"

namespace testutil {

template <typename T>
litevae::Tensor<T> rand_tensor(litevae::Shape shape, litevae::Rng& rng, T scale = T(1),
                               bool requires_grad = false) {
    auto t = litevae::Tensor<T>::randn(std::move(shape), rng, scale, requires_grad);
    return t;
}

template <typename T>
double max_abs_diff(const std::vector<T>& a, const std::vector<T>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

template <typename T>
bool all_finite(const std::vector<T>& v) {
    for (T x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

}  // namespace testutil

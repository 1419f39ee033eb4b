#pragma once

// Central finite-difference gradient verification. The numeric side never
// touches backward(): it re-evaluates the forward function at perturbed
// inputs, so it is an independent oracle for the analytic gradients.

#include <functional>
#include <string>
#include <vector>

#include "litevae/tensor.hpp"

namespace litevae {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_tensor;
    int64_t worst_coord = -1;
    int64_t coords_checked = 0;
};

// fn must rebuild the graph from `inputs` on every call and return a scalar.
// Relative error uses a unit floor: |a - n| / max(1, |n|).
template <typename T>
GradCheckReport gradcheck(const std::function<Tensor<T>()>& fn,
                          const std::vector<std::pair<std::string, Tensor<T>>>& inputs,
                          T step = T(1e-4), int max_coords_per_tensor = 0, uint64_t seed = 0) {
    for (auto& [name, t] : inputs) {
        if (!t.requires_grad())
            throw ContractError("gradcheck: input '" + name + "' does not require grad");
        const_cast<Tensor<T>&>(t).zero_grad();
    }
    Tensor<T> loss = fn();
    loss.backward();

    std::vector<std::vector<T>> analytic;
    analytic.reserve(inputs.size());
    for (auto& [name, t] : inputs)
        analytic.push_back(t.has_grad() ? t.grad() : std::vector<T>(t.data().size(), T(0)));

    GradCheckReport rep;
    Rng rng(seed ^ 0x5eedc0de);
    for (size_t ti = 0; ti < inputs.size(); ++ti) {
        auto& t = const_cast<Tensor<T>&>(inputs[ti].second);
        int64_t n = t.numel();
        std::vector<int64_t> coords;
        if (max_coords_per_tensor <= 0 || n <= max_coords_per_tensor) {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            for (int k = 0; k < max_coords_per_tensor; ++k)
                coords.push_back(static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(n)));
        }
        for (int64_t c : coords) {
            T orig = t.data()[static_cast<size_t>(c)];
            T fp, fm;
            {
                NoGradGuard ng;
                t.data()[static_cast<size_t>(c)] = orig + step;
                fp = fn().item();
                t.data()[static_cast<size_t>(c)] = orig - step;
                fm = fn().item();
                t.data()[static_cast<size_t>(c)] = orig;
            }
            double numeric = (static_cast<double>(fp) - static_cast<double>(fm)) /
                             (2.0 * static_cast<double>(step));
            double a = static_cast<double>(analytic[ti][static_cast<size_t>(c)]);
            double rel = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
            ++rep.coords_checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_tensor = inputs[ti].first;
                rep.worst_coord = c;
            }
        }
    }
    return rep;
}

}  // namespace litevae

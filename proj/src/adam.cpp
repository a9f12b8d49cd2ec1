#include "sf/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sf {

void adam_step(std::vector<Tensor>& params, AdamState& state) {
    if (state.first_moment.empty()) {
        state.first_moment.resize(params.size());
        state.second_moment.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.first_moment[i].assign(static_cast<size_t>(params[i].numel()), 0.0);
            state.second_moment[i].assign(static_cast<size_t>(params[i].numel()), 0.0);
        }
    }
    if (state.first_moment.size() != params.size())
        throw ShapeError("adam_step: state holds " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));

    state.step_count += 1;
    const auto& h = state.hyper;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step_count));

    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (m.size() != static_cast<size_t>(p.numel()))
            throw ShapeError("adam_step: parameter " + std::to_string(i) + " size changed (" +
                             std::to_string(m.size()) + " vs " + std::to_string(p.numel()) + ")");
        const bool has_grad = p.has_grad();
        auto data = p.data_mut();
        for (size_t j = 0; j < m.size(); ++j) {
            const double g = has_grad ? p.grad()[j] : 0.0;
            m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g;
            v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g * g;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            data[j] -= h.lr * m_hat / (std::sqrt(v_hat) + h.epsilon);
        }
        p.zero_grad();
    }
}

}  // namespace sf

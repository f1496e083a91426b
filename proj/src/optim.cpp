#include "fedprune/optim.hpp"

#include <cmath>

#include "fedprune/errors.hpp"

namespace fedprune {

AdamState make_adam_state(const Shape& shape) {
    AdamState st;
    st.m = TensorBuffer::zeros(shape);
    st.v = TensorBuffer::zeros(shape);
    st.t = 0;
    return st;
}

void adam_step(TensorBuffer& param, const TensorBuffer& grad, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
    require_same_shape(param, grad, "adam_step gradient");
    require_same_shape(param, state.m, "adam_step first moment");
    require_same_shape(param, state.v, "adam_step second moment");

    state.t += 1;
    const double c1 = 1.0 - std::pow(beta1, (double)state.t);
    const double c2 = 1.0 - std::pow(beta2, (double)state.t);
    double* p = param.ptr();
    double* m = state.m.ptr();
    double* v = state.v.ptr();
    const double* g = grad.ptr();
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    ensure_finite(param, "adam_step parameters");
}

}  // namespace fedprune

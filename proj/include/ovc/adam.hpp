#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ovc/linalg.hpp"

namespace ovc {

struct AdamOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 5.0;  ///< global gradient norm cap; <= 0 disables
};

/// Adam over any parameter bundle exposing visit(f(name, Mat<T>&)).
template <typename Params>
class Adam {
  public:
    Adam(const Params& shape, AdamOptions options) : options_(options), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

    /// Applies one update in place and returns the pre-clip gradient norm.
    double step(Params& params, Params& grad) {
        double sq = 0;
        grad.visit([&sq](const std::string&, const auto& g) { sq += static_cast<double>(g.squaredNorm()); });
        const double norm = std::sqrt(sq);
        double scale = 1.0;
        if (options_.clip_norm > 0 && norm > options_.clip_norm) scale = options_.clip_norm / norm;

        ++t_;
        const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
        const double step_size = options_.learning_rate * std::sqrt(c2) / c1;
        const double eps_hat = options_.eps * std::sqrt(c2);

        std::vector<void*> grads, ms, vs;
        grad.visit([&](const std::string&, auto& g) { grads.push_back(&g); });
        m_.visit([&](const std::string&, auto& g) { ms.push_back(&g); });
        v_.visit([&](const std::string&, auto& g) { vs.push_back(&g); });
        std::size_t i = 0;
        params.visit([&](const std::string&, auto& p) {
            using M = std::remove_reference_t<decltype(p)>;
            using S = typename M::Scalar;
            auto& g = *static_cast<M*>(grads[i]);
            auto& m = *static_cast<M*>(ms[i]);
            auto& v = *static_cast<M*>(vs[i]);
            ++i;
            const S b1 = static_cast<S>(options_.beta1), b2 = static_cast<S>(options_.beta2);
            const S sc = static_cast<S>(scale);
            m.array() = b1 * m.array() + (S(1) - b1) * sc * g.array();
            v.array() = b2 * v.array() + (S(1) - b2) * (sc * g.array()).square();
            p.array() -= static_cast<S>(step_size) * m.array() / (v.array().sqrt() + static_cast<S>(eps_hat));
        });
        return norm;
    }

    std::size_t steps() const { return t_; }

  private:
    AdamOptions options_;
    Params m_;
    Params v_;
    std::size_t t_ = 0;
};

}  // namespace ovc

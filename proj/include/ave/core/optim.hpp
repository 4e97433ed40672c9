#pragma once

#include <iosfwd>

#include "ave/core/nn.hpp"

namespace ave::optim {

struct AdamWOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

/// Adam with decoupled weight decay. Decay applies to matrices only;
/// biases, norms and token embeddings are not decayed.
class AdamW {
public:
    AdamW() = default;
    AdamW(nn::ParamList params, AdamWOptions options = {});

    void step(double lr);
    void zero_grad();
    long steps() const { return steps_; }
    const nn::ParamList& params() const { return params_; }

    void save(std::ostream& os) const;
    void load(std::istream& is);

private:
    nn::ParamList params_;
    AdamWOptions options_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    long steps_ = 0;
};

/// Rescales gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(const nn::ParamList& params, double max_norm);

/// Half-cycle cosine decay from base to floor over total steps.
double cosine_lr(long step, long total, double base, double floor);

} // namespace ave::optim

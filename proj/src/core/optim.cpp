#include "ave/core/optim.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "ave/core/serialize.hpp"

namespace ave::optim {

using ag::Var;

AdamW::AdamW(nn::ParamList params, AdamWOptions options) : params_(std::move(params)), options_(options)
{
    for (const auto& p : params_) {
        m_.push_back(Tensor::zeros(p.var.shape()));
        v_.push_back(Tensor::zeros(p.var.shape()));
    }
}

void AdamW::step(double lr)
{
    ++steps_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Var var = params_[i].var;
        if (!var.has_grad()) continue;
        Tensor& w = var.mutable_value();
        const Tensor& g = var.grad();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        const bool decay = w.ndim() >= 2 && options_.weight_decay > 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g[k];
            v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            if (decay) w[k] -= lr * options_.weight_decay * w[k];
            w[k] -= lr * mhat / (std::sqrt(vhat) + options_.eps);
        }
    }
}

void AdamW::zero_grad() { nn::zero_grads(params_); }

void AdamW::save(std::ostream& os) const
{
    io::write_u64(os, static_cast<std::uint64_t>(steps_));
    io::write_u64(os, m_.size());
    for (std::size_t i = 0; i < m_.size(); ++i) {
        io::write_tensor(os, m_[i]);
        io::write_tensor(os, v_[i]);
    }
}

void AdamW::load(std::istream& is)
{
    steps_ = static_cast<long>(io::read_u64(is));
    const std::size_t n = io::read_u64(is);
    if (n != m_.size()) throw std::runtime_error("AdamW::load: parameter count mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        Tensor m = io::read_tensor(is);
        Tensor v = io::read_tensor(is);
        if (m.shape() != m_[i].shape() || v.shape() != v_[i].shape())
            throw std::runtime_error("AdamW::load: moment shape mismatch for " + params_[i].name);
        m_[i] = std::move(m);
        v_[i] = std::move(v);
    }
}

double clip_grad_norm(const nn::ParamList& params, double max_norm)
{
    double total = 0.0;
    for (const auto& p : params) {
        if (!p.var.has_grad()) continue;
        for (double g : p.var.grad().values()) total += g * g;
    }
    total = std::sqrt(total);
    if (total > max_norm && total > 0.0) {
        const double s = max_norm / total;
        for (const auto& p : params) {
            Var v = p.var;
            if (!v.has_grad()) continue;
            for (double& g : v.mutable_grad().values()) g *= s;
        }
    }
    return total;
}

double cosine_lr(long step, long total, double base, double floor)
{
    if (total <= 0) return base;
    const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
    return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

} // namespace ave::optim

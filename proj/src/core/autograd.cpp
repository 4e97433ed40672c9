#include "ave/core/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

namespace ave::ag {

namespace {

thread_local bool g_grad_enabled = true;

void require_same_shape(const Var& a, const Var& b, const char* op)
{
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

bool wants_grad(const Node& parent) { return parent.requires_grad; }

void add_into(Tensor& dst, const Tensor& src)
{
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

Shape with_last(const Shape& shape, std::size_t last)
{
    Shape out = shape;
    out.back() = last;
    return out;
}

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv)
{
    Tensor out(a.shape());
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
    return make_op(std::move(out), {a}, [deriv](Node& self) {
        Node& p = *self.parents[0];
        Tensor& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
    });
}

} // namespace

Tensor& Node::ensure_grad()
{
    if (grad.empty()) grad = Tensor::zeros(value.shape());
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>())
{
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

void Var::zero_grad()
{
    if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

void Var::backward() const
{
    if (!node_) throw std::logic_error("backward on undefined Var");
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    Tensor& seed = node_->ensure_grad();
    for (std::size_t i = 0; i < seed.size(); ++i) seed[i] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
    for (Node* n : order) {
        if (!n->backward) continue;
        n->backward = nullptr;
        n->parents.clear();
        if (n != node_.get()) n->grad = Tensor();
    }
}

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward)
{
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (!g_grad_enabled) return Var(std::move(node));
    const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
    if (!any) return Var(std::move(node));
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const Var& v : inputs) node->parents.push_back(v.node() ? v.node() : std::make_shared<Node>());
    node->backward = std::move(backward);
    return Var(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var constant(Tensor value) { return Var(std::move(value), false); }
Var detach(const Var& x) { return Var(x.value(), false); }

// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b)
{
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    add_into(out, b.value());
    return make_op(std::move(out), {a, b}, [](Node& self) {
        for (auto& p : self.parents)
            if (wants_grad(*p)) add_into(p->ensure_grad(), self.grad);
    });
}

Var sub(const Var& a, const Var& b)
{
    require_same_shape(a, b, "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return make_op(std::move(out), {a, b}, [](Node& self) {
        if (wants_grad(*self.parents[0])) add_into(self.parents[0]->ensure_grad(), self.grad);
        if (wants_grad(*self.parents[1])) {
            Tensor& g = self.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b)
{
    require_same_shape(a, b, "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return make_op(std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (wants_grad(pa)) {
            Tensor& g = pa.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (wants_grad(pb)) {
            Tensor& g = pb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
    });
}

Var scale(const Var& a, double s)
{
    return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s)
{
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var square(const Var& a)
{
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var exp(const Var& a)
{
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a)
{
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(const Var& a)
{
    return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var gelu(const Var& a)
{
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return unary(
        a, [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [=](double x, double) {
            return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
        });
}

Var sigmoid(const Var& a)
{
    return unary(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a)
{
    return unary(
        a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](double x, double) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        });
}

Var clamp(const Var& a, double lo, double hi)
{
    return unary(
        a, [=](double x) { return std::clamp(x, lo, hi); },
        [=](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var minimum(const Var& a, const Var& b)
{
    require_same_shape(a, b, "minimum");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.value()[i], b.value()[i]);
    return make_op(std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const bool first = pa.value[i] <= pb.value[i];
            Node& dst = first ? pa : pb;
            if (wants_grad(dst)) dst.ensure_grad()[i] += self.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------

Var add_rowvec(const Var& x, const Var& v)
{
    const std::size_t n = x.cols();
    if (v.value().size() != n) throw std::invalid_argument("add_rowvec: width mismatch");
    Tensor out = x.value();
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) out.at(r, c) += v.value()[c];
    return make_op(std::move(out), {x, v}, [n](Node& self) {
        if (wants_grad(*self.parents[0])) add_into(self.parents[0]->ensure_grad(), self.grad);
        if (wants_grad(*self.parents[1])) {
            Tensor& g = self.parents[1]->ensure_grad();
            for (std::size_t r = 0; r < self.grad.rows(); ++r)
                for (std::size_t c = 0; c < n; ++c) g[c] += self.grad.at(r, c);
        }
    });
}

Var mul_rowvec(const Var& x, const Var& v)
{
    const std::size_t n = x.cols();
    if (v.value().size() != n) throw std::invalid_argument("mul_rowvec: width mismatch");
    Tensor out = x.value();
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) out.at(r, c) *= v.value()[c];
    return make_op(std::move(out), {x, v}, [n](Node& self) {
        Node& px = *self.parents[0];
        Node& pv = *self.parents[1];
        if (wants_grad(px)) {
            Tensor& g = px.ensure_grad();
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < n; ++c) g.at(r, c) += self.grad.at(r, c) * pv.value[c];
        }
        if (wants_grad(pv)) {
            Tensor& g = pv.ensure_grad();
            for (std::size_t r = 0; r < self.grad.rows(); ++r)
                for (std::size_t c = 0; c < n; ++c) g[c] += self.grad.at(r, c) * px.value.at(r, c);
        }
    });
}

Var mul_colvec(const Var& x, const Var& c)
{
    const std::size_t m = x.rows();
    if (c.value().size() != m) throw std::invalid_argument("mul_colvec: height mismatch");
    Tensor out = x.value();
    for (std::size_t r = 0; r < m; ++r)
        for (double& e : out.row(r)) e *= c.value()[r];
    return make_op(std::move(out), {x, c}, [m](Node& self) {
        Node& px = *self.parents[0];
        Node& pc = *self.parents[1];
        const std::size_t n = self.grad.cols();
        if (wants_grad(px)) {
            Tensor& g = px.ensure_grad();
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t k = 0; k < n; ++k) g.at(r, k) += self.grad.at(r, k) * pc.value[r];
        }
        if (wants_grad(pc)) {
            Tensor& g = pc.ensure_grad();
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t k = 0; k < n; ++k) g[r] += self.grad.at(r, k) * px.value.at(r, k);
        }
    });
}

Var repeat_rows(const Var& x, std::size_t m)
{
    const std::size_t n = x.value().size();
    Tensor out(Shape{m, n});
    for (std::size_t r = 0; r < m; ++r) std::copy(x.value().data(), x.value().data() + n, out.row(r).data());
    return make_op(std::move(out), {x}, [m, n](Node& self) {
        Tensor& g = self.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) g[c] += self.grad.at(r, c);
    });
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) { return linear(a, b, Var()); }

Var linear(const Var& x, const Var& w, const Var& b)
{
    const std::size_t m = x.rows();
    const std::size_t in = x.cols();
    if (w.value().ndim() != 2 || w.value().dim(0) != in)
        throw std::invalid_argument("linear: input width " + std::to_string(in) + " vs weight " +
                                    shape_str(w.shape()));
    const std::size_t out_w = w.value().dim(1);
    Tensor out(with_last(x.shape(), out_w));
    kernels::gemm(false, false, m, out_w, in, x.value().data(), w.value().data(), out.data(), false);
    const bool has_bias = b.defined();
    if (has_bias) {
        if (b.value().size() != out_w) throw std::invalid_argument("linear: bias width mismatch");
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < out_w; ++c) out.at(r, c) += b.value()[c];
    }
    std::vector<Var> inputs{x, w};
    if (has_bias) inputs.push_back(b);
    return make_op(std::move(out), std::move(inputs), [m, in, out_w, has_bias](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        if (wants_grad(px))
            kernels::gemm(false, true, m, in, out_w, self.grad.data(), pw.value.data(), px.ensure_grad().data(), true);
        if (wants_grad(pw))
            kernels::gemm(true, false, in, out_w, m, px.value.data(), self.grad.data(), pw.ensure_grad().data(), true);
        if (has_bias && wants_grad(*self.parents[2])) {
            Tensor& g = self.parents[2]->ensure_grad();
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < out_w; ++c) g[c] += self.grad.at(r, c);
        }
    });
}

// ---------------------------------------------------------------------------

Var sum(const Var& a)
{
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    return make_op(Tensor::scalar(s), {a}, [](Node& self) {
        Tensor& g = self.parents[0]->ensure_grad();
        const double gs = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gs;
    });
}

Var mean(const Var& a)
{
    const auto n = static_cast<double>(a.value().size());
    return scale(sum(a), 1.0 / n);
}

Var row_sum(const Var& a)
{
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Tensor out(Shape{m, 1});
    for (std::size_t r = 0; r < m; ++r) {
        double s = 0.0;
        for (double v : a.value().row(r)) s += v;
        out[r] = s;
    }
    return make_op(std::move(out), {a}, [m, n](Node& self) {
        Tensor& g = self.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) g.at(r, c) += self.grad[r];
    });
}

Var row_mean(const Var& a) { return scale(row_sum(a), 1.0 / static_cast<double>(a.cols())); }

// ---------------------------------------------------------------------------

Var reshape(const Var& a, Shape shape)
{
    Tensor out = a.value().reshaped(std::move(shape));
    return make_op(std::move(out), {a}, [](Node& self) { add_into(self.parents[0]->ensure_grad(), self.grad); });
}

Var concat_cols(const std::vector<Var>& parts)
{
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const std::size_t m = parts.front().rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (p.rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
        widths.push_back(p.cols());
        total += p.cols();
    }
    Tensor out(Shape{m, total});
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        for (std::size_t r = 0; r < m; ++r)
            std::copy_n(parts[k].value().row(r).data(), widths[k], out.row(r).data() + off);
        off += widths[k];
    }
    return make_op(std::move(out), parts, [m, widths](Node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            if (wants_grad(*self.parents[k])) {
                Tensor& g = self.parents[k]->ensure_grad();
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < widths[k]; ++c) g.at(r, c) += self.grad.at(r, off + c);
            }
            off += widths[k];
        }
    });
}

Var concat_rows(const std::vector<Var>& parts)
{
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    const std::size_t n = parts.front().cols();
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (p.cols() != n) throw std::invalid_argument("concat_rows: column mismatch");
        total += p.rows();
    }
    Tensor out(Shape{total, n});
    std::size_t off = 0;
    for (const Var& p : parts) {
        std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + off * n);
        off += p.rows();
    }
    return make_op(std::move(out), parts, [](Node& self) {
        std::size_t off = 0;
        for (auto& p : self.parents) {
            const std::size_t len = p->value.size();
            if (wants_grad(*p)) {
                Tensor& g = p->ensure_grad();
                for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[off + i];
            }
            off += len;
        }
    });
}

Var slice_rows(const Var& a, std::size_t start, std::size_t count)
{
    const std::size_t n = a.cols();
    if (start + count > a.rows()) throw std::out_of_range("slice_rows");
    Tensor out(Shape{count, n});
    std::copy_n(a.value().data() + start * n, count * n, out.data());
    return make_op(std::move(out), {a}, [start, n](Node& self) {
        Tensor& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * n + i] += self.grad[i];
    });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t count)
{
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (start + count > n) throw std::out_of_range("slice_cols");
    Tensor out(Shape{m, count});
    for (std::size_t r = 0; r < m; ++r) std::copy_n(a.value().row(r).data() + start, count, out.row(r).data());
    return make_op(std::move(out), {a}, [m, start, count](Node& self) {
        Tensor& g = self.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < count; ++c) g.at(r, start + c) += self.grad.at(r, c);
    });
}

Var gather_rows(const Var& a, std::span<const std::size_t> index)
{
    const std::size_t n = a.cols();
    std::vector<std::size_t> idx(index.begin(), index.end());
    Tensor out(Shape{idx.size(), n});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= a.rows()) throw std::out_of_range("gather_rows");
        std::copy_n(a.value().row(idx[r]).data(), n, out.row(r).data());
    }
    return make_op(std::move(out), {a}, [idx = std::move(idx), n](Node& self) {
        Tensor& g = self.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t c = 0; c < n; ++c) g.at(idx[r], c) += self.grad.at(r, c);
    });
}

Var concat_seq(const Var& a, const Var& b, std::size_t batch)
{
    const std::size_t n = a.cols();
    if (b.cols() != n || a.rows() % batch || b.rows() % batch) throw std::invalid_argument("concat_seq: shapes");
    const std::size_t na = a.rows() / batch;
    const std::size_t nb = b.rows() / batch;
    Tensor out(Shape{batch * (na + nb), n});
    for (std::size_t s = 0; s < batch; ++s) {
        std::copy_n(a.value().data() + s * na * n, na * n, out.data() + s * (na + nb) * n);
        std::copy_n(b.value().data() + s * nb * n, nb * n, out.data() + (s * (na + nb) + na) * n);
    }
    return make_op(std::move(out), {a, b}, [batch, na, nb, n](Node& self) {
        if (wants_grad(*self.parents[0])) {
            Tensor& g = self.parents[0]->ensure_grad();
            for (std::size_t s = 0; s < batch; ++s)
                for (std::size_t i = 0; i < na * n; ++i) g[s * na * n + i] += self.grad[s * (na + nb) * n + i];
        }
        if (wants_grad(*self.parents[1])) {
            Tensor& g = self.parents[1]->ensure_grad();
            for (std::size_t s = 0; s < batch; ++s)
                for (std::size_t i = 0; i < nb * n; ++i)
                    g[s * nb * n + i] += self.grad[(s * (na + nb) + na) * n + i];
        }
    });
}

// ---------------------------------------------------------------------------

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps)
{
    const std::size_t m = x.rows();
    const std::size_t n = x.cols();
    if (gamma.value().size() != n || beta.value().size() != n) throw std::invalid_argument("layer_norm: width");
    Tensor out(x.shape());
    auto stats = std::make_shared<std::pair<std::vector<double>, std::vector<double>>>(
        std::vector<double>(m), std::vector<double>(m));
    kernels::layer_norm_forward(m, n, x.value().data(), gamma.value().data(), beta.value().data(), eps, out.data(),
                                stats->first.data(), stats->second.data());
    return make_op(std::move(out), {x, gamma, beta}, [m, n, stats](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        Tensor dx_scratch;
        double* dx = nullptr;
        if (wants_grad(px)) {
            dx = px.ensure_grad().data();
        } else {
            dx_scratch = Tensor::zeros(px.value.shape());
            dx = dx_scratch.data();
        }
        Tensor dg_scratch;
        Tensor db_scratch;
        double* dg = wants_grad(pg) ? pg.ensure_grad().data() : (dg_scratch = Tensor::zeros({n})).data();
        double* db = wants_grad(pb) ? pb.ensure_grad().data() : (db_scratch = Tensor::zeros({n})).data();
        kernels::layer_norm_backward(m, n, px.value.data(), pg.value.data(), stats->first.data(),
                                     stats->second.data(), self.grad.data(), dx, dg, db);
    });
}

Var log_softmax_rows(const Var& x)
{
    const std::size_t m = x.rows();
    const std::size_t n = x.cols();
    Tensor out(x.shape());
    for (std::size_t r = 0; r < m; ++r) {
        const auto row = x.value().row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double v : row) s += std::exp(v - mx);
        const double lse = mx + std::log(s);
        for (std::size_t c = 0; c < n; ++c) out.at(r, c) = row[c] - lse;
    }
    return make_op(std::move(out), {x}, [m, n](Node& self) {
        Tensor& g = self.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < m; ++r) {
            double gs = 0.0;
            for (std::size_t c = 0; c < n; ++c) gs += self.grad.at(r, c);
            for (std::size_t c = 0; c < n; ++c)
                g.at(r, c) += self.grad.at(r, c) - std::exp(self.value.at(r, c)) * gs;
        }
    });
}

Var attention(const Var& q, const Var& k, const Var& v, const kernels::AttentionShape& shape,
              std::span<const unsigned char> key_mask, Tensor* probs)
{
    const std::size_t width = shape.width();
    if (q.cols() != width || k.cols() != width || v.cols() != width)
        throw std::invalid_argument("attention: width mismatch");
    if (q.rows() != shape.batch * shape.q_len || k.rows() != shape.batch * shape.k_len ||
        v.rows() != shape.batch * shape.k_len)
        throw std::invalid_argument("attention: row count mismatch");
    if (!key_mask.empty() && key_mask.size() != shape.batch * shape.k_len)
        throw std::invalid_argument("attention: key mask size");

    Tensor out(Shape{shape.batch * shape.q_len, width});
    auto p = std::make_shared<Tensor>(Shape{shape.batch, shape.heads, shape.q_len, shape.k_len});
    kernels::attention_forward(shape, q.value().data(), k.value().data(), v.value().data(),
                               key_mask.empty() ? nullptr : key_mask.data(), out.data(), p->data());
    if (probs) *probs = *p;
    return make_op(std::move(out), {q, k, v}, [shape, p](Node& self) {
        Node& pq = *self.parents[0];
        Node& pk = *self.parents[1];
        Node& pv = *self.parents[2];
        Tensor dq = Tensor::zeros(pq.value.shape());
        Tensor dk = Tensor::zeros(pk.value.shape());
        Tensor dv = Tensor::zeros(pv.value.shape());
        kernels::attention_backward(shape, pq.value.data(), pk.value.data(), pv.value.data(), p->data(),
                                    self.grad.data(), dq.data(), dk.data(), dv.data());
        if (wants_grad(pq)) add_into(pq.ensure_grad(), dq);
        if (wants_grad(pk)) add_into(pk.ensure_grad(), dk);
        if (wants_grad(pv)) add_into(pv.ensure_grad(), dv);
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, const kernels::ConvShape& shape)
{
    const std::size_t in_width = shape.height * shape.width * shape.channels;
    if (x.value().size() != shape.batch * in_width) throw std::invalid_argument("conv2d: input size");
    const std::size_t cw = shape.col_width();
    if (w.value().ndim() != 2 || w.value().dim(0) != cw) throw std::invalid_argument("conv2d: weight shape");
    const std::size_t c_out = w.value().dim(1);
    const std::size_t positions = shape.batch * shape.out_h() * shape.out_w();

    auto cols = std::make_shared<Tensor>(Shape{positions, cw});
    kernels::im2col(shape, x.value().data(), cols->data());
    Tensor out(Shape{shape.batch, shape.out_h() * shape.out_w() * c_out});
    kernels::gemm(false, false, positions, c_out, cw, cols->data(), w.value().data(), out.data(), false);
    for (std::size_t r = 0; r < positions; ++r)
        for (std::size_t c = 0; c < c_out; ++c) out[r * c_out + c] += b.value()[c];

    return make_op(std::move(out), {x, w, b}, [shape, cols, positions, cw, c_out](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        if (wants_grad(px)) {
            Tensor dcols(Shape{positions, cw});
            kernels::gemm(false, true, positions, cw, c_out, self.grad.data(), pw.value.data(), dcols.data(), false);
            kernels::col2im(shape, dcols.data(), px.ensure_grad().data());
        }
        if (wants_grad(pw))
            kernels::gemm(true, false, cw, c_out, positions, cols->data(), self.grad.data(), pw.ensure_grad().data(),
                          true);
        if (wants_grad(pb)) {
            Tensor& g = pb.ensure_grad();
            for (std::size_t r = 0; r < positions; ++r)
                for (std::size_t c = 0; c < c_out; ++c) g[c] += self.grad[r * c_out + c];
        }
    });
}

} // namespace ave::ag

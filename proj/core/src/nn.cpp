#include "byteflow/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "byteflow/error.hpp"

namespace byteflow::nn {

namespace {

void require_same_graph(Var a, Var b) {
    if (a.graph() != b.graph() || a.graph() == nullptr) {
        throw Error(ErrorKind::InvalidArgument, "operands belong to different graphs");
    }
}

std::string shape_str(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// --- Var / Graph -------------------------------------------------------------

const Tensor& Var::value() const { return graph_->value_of(id_); }
const Tensor& Var::grad() const { return graph_->grad_of(id_); }
bool Var::requires_grad() const { return graph_->requires_grad_of(id_); }

Var Graph::input(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && record_;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
    Node n;
    n.param = &p;
    n.requires_grad = record_;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Graph::push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Graph::push(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
#ifndef NDEBUG
    if (!value.allFinite()) throw Error(ErrorKind::NonFinite, "op produced a non-finite value");
#endif
    Node n;
    n.value = std::move(value);
    for (const Var& v : inputs) n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

const Tensor& Graph::value_of(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param != nullptr ? n.param->value : n.value;
}

const Tensor& Graph::grad_of(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param != nullptr ? n.param->grad : n.grad;
}

Tensor* Graph::grad_buffer(Var v) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return nullptr;
    if (n.param != nullptr) {
        auto& g = n.param->grad;
        if (g.rows() != n.param->value.rows() || g.cols() != n.param->value.cols()) {
            g.setZero(n.param->value.rows(), n.param->value.cols());
        }
        return &g;
    }
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return &n.grad;
}

void Graph::backward(Var out) {
    if (out.graph() != this) throw Error(ErrorKind::InvalidArgument, "backward on a foreign node");
    const Tensor& v = value_of(out.id());
    if (v.rows() != 1 || v.cols() != 1) throw Error(ErrorKind::BadShape, "backward needs a scalar, got " + shape_str(v));
    Tensor* seed = grad_buffer(out);
    if (seed == nullptr) return;
    (*seed)(0, 0) += 1.0;
    for (std::size_t i = out.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
        n.backward(*this, n.grad);
    }
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> Graph::shapes() const {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    out.reserve(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Tensor& v = value_of(i);
        out.emplace_back(v.rows(), v.cols());
    }
    return out;
}

// --- rotary ------------------------------------------------------------------

void apply_rope(Tensor& x, int heads, double theta, bool inverse) {
    const Eigen::Index d = x.cols();
    const Eigen::Index hd = d / heads;
    const Eigen::Index pairs = hd / 2;
    std::vector<double> freq(static_cast<std::size_t>(pairs));
    for (Eigen::Index m = 0; m < pairs; ++m) {
        freq[static_cast<std::size_t>(m)] = std::pow(theta, -2.0 * static_cast<double>(m) / static_cast<double>(hd));
    }
    const double sign = inverse ? -1.0 : 1.0;
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        double* row = x.row(t).data();
        for (Eigen::Index m = 0; m < pairs; ++m) {
            const double angle = sign * static_cast<double>(t) * freq[static_cast<std::size_t>(m)];
            const double c = std::cos(angle);
            const double s = std::sin(angle);
            for (int h = 0; h < heads; ++h) {
                double* p = row + h * hd + 2 * m;
                const double a = p[0];
                const double b = p[1];
                p[0] = a * c - b * s;
                p[1] = a * s + b * c;
            }
        }
    }
}

// --- ops ---------------------------------------------------------------------

Var matmul(Var a, Var b) {
    require_same_graph(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.rows()) throw Error(ErrorKind::BadShape, "matmul " + shape_str(av) + " * " + shape_str(bv));
    Tensor out;
    out.noalias() = av * bv;
    return a.graph()->push(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& grad) {
        if (Tensor* ga = g.grad_buffer(a)) ga->noalias() += grad * b.value().transpose();
        if (Tensor* gb = g.grad_buffer(b)) gb->noalias() += a.value().transpose() * grad;
    });
}

Var add(Var a, Var b) {
    require_same_graph(a, b);
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(ErrorKind::BadShape, "add " + shape_str(a.value()) + " + " + shape_str(b.value()));
    }
    Tensor out = a.value() + b.value();
    return a.graph()->push(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& grad) {
        if (Tensor* ga = g.grad_buffer(a)) *ga += grad;
        if (Tensor* gb = g.grad_buffer(b)) *gb += grad;
    });
}

Var embed(Var table, std::span<const Symbol> ids) {
    const Tensor& tv = table.value();
    Tensor out(static_cast<Eigen::Index>(ids.size()), tv.cols());
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] >= tv.rows()) throw Error(ErrorKind::OutOfVocab, "id " + std::to_string(ids[t]));
        out.row(static_cast<Eigen::Index>(t)) = tv.row(ids[t]);
    }
    std::vector<Symbol> idv(ids.begin(), ids.end());
    return table.graph()->push(std::move(out), {table}, [table, idv = std::move(idv)](Graph& g, const Tensor& grad) {
        Tensor* gt = g.grad_buffer(table);
        if (gt == nullptr) return;
        for (std::size_t t = 0; t < idv.size(); ++t) gt->row(idv[t]) += grad.row(static_cast<Eigen::Index>(t));
    });
}

Var layer_norm(Var x, Var scale) {
    require_same_graph(x, scale);
    const Tensor& xv = x.value();
    const Eigen::Index rows = xv.rows();
    const Eigen::Index d = xv.cols();
    if (d < 1) throw Error(ErrorKind::BadShape, "layer_norm needs d >= 1");
    if (scale.rows() != 1 || scale.cols() != d) throw Error(ErrorKind::BadShape, "layer_norm scale must be 1 x d");
    Tensor xhat(rows, d);
    Eigen::VectorXd rstd(rows);
    for (Eigen::Index t = 0; t < rows; ++t) {
        const double mean = xv.row(t).mean();
        const auto centered = xv.row(t).array() - mean;
        const double var = centered.square().mean();
        rstd(t) = 1.0 / std::sqrt(var + kNormStabilizer);
        xhat.row(t) = centered * rstd(t);
    }
    Tensor out = xhat.array().rowwise() * scale.value().row(0).array();
    return x.graph()->push(std::move(out), {x, scale},
                           [x, scale, xhat = std::move(xhat), rstd = std::move(rstd)](Graph& g, const Tensor& grad) {
                               if (Tensor* gs = g.grad_buffer(scale)) {
                                   gs->row(0) += (grad.array() * xhat.array()).colwise().sum().matrix();
                               }
                               Tensor* gx = g.grad_buffer(x);
                               if (gx == nullptr) return;
                               const auto& sv = scale.value();
                               const double inv_d = 1.0 / static_cast<double>(xhat.cols());
                               for (Eigen::Index t = 0; t < xhat.rows(); ++t) {
                                   const Eigen::RowVectorXd dxhat = grad.row(t).array() * sv.row(0).array();
                                   const double m1 = dxhat.sum() * inv_d;
                                   const double m2 = dxhat.dot(xhat.row(t)) * inv_d;
                                   gx->row(t).array() +=
                                       rstd(t) * (dxhat.array() - m1 - xhat.row(t).array() * m2);
                               }
                           });
}

Var attention_core(Var q, Var k, Var v, int heads, std::size_t window, double rope_theta) {
    require_same_graph(q, k);
    require_same_graph(q, v);
    const Eigen::Index t_len = q.rows();
    const Eigen::Index d = q.cols();
    if (heads < 1 || d % heads != 0) {
        throw Error(ErrorKind::BadShape, "width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
    }
    if (k.rows() != t_len || v.rows() != t_len || k.cols() != d || v.cols() != d) {
        throw Error(ErrorKind::BadShape, "q/k/v shapes differ");
    }
    if (window < 1) throw Error(ErrorKind::InvalidArgument, "attention window must be >= 1");
    const Eigen::Index hd = d / heads;
    const auto w = static_cast<Eigen::Index>(std::min<std::size_t>(window, static_cast<std::size_t>(std::max<Eigen::Index>(t_len, 1))));
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Tensor qr = q.value();
    Tensor kr = k.value();
    apply_rope(qr, heads, rope_theta);
    apply_rope(kr, heads, rope_theta);
    const Tensor& vv = v.value();

    // probs[(h * T + t) * w + (j − lo)]
    std::vector<double> probs(static_cast<std::size_t>(heads * t_len * w), 0.0);
    Tensor out = Tensor::Zero(t_len, d);
    for (int h = 0; h < heads; ++h) {
        const Eigen::Index off = h * hd;
        for (Eigen::Index t = 0; t < t_len; ++t) {
            const Eigen::Index lo = std::max<Eigen::Index>(0, t - w + 1);
            double* p = probs.data() + (h * t_len + t) * w;
            const double* qrow = qr.row(t).data() + off;
            double mx = -std::numeric_limits<double>::infinity();
            for (Eigen::Index j = lo; j <= t; ++j) {
                const double* krow = kr.row(j).data() + off;
                double s = 0.0;
                for (Eigen::Index c = 0; c < hd; ++c) s += qrow[c] * krow[c];
                s *= scale;
                p[j - lo] = s;
                mx = std::max(mx, s);
            }
            double z = 0.0;
            for (Eigen::Index j = lo; j <= t; ++j) {
                p[j - lo] = std::exp(p[j - lo] - mx);
                z += p[j - lo];
            }
            double* orow = out.row(t).data() + off;
            for (Eigen::Index j = lo; j <= t; ++j) {
                p[j - lo] /= z;
                const double* vrow = vv.row(j).data() + off;
                for (Eigen::Index c = 0; c < hd; ++c) orow[c] += p[j - lo] * vrow[c];
            }
        }
    }

    return q.graph()->push(
        std::move(out), {q, k, v},
        [q, k, v, heads, w, hd, scale, rope_theta, qr = std::move(qr), kr = std::move(kr), probs = std::move(probs)](
            Graph& g, const Tensor& grad) {
            const Eigen::Index t_len = qr.rows();
            const Eigen::Index d = qr.cols();
            const Tensor& vv = v.value();
            Tensor dqr = Tensor::Zero(t_len, d);
            Tensor dkr = Tensor::Zero(t_len, d);
            Tensor dv = Tensor::Zero(t_len, d);
            std::vector<double> dp(static_cast<std::size_t>(w));
            for (int h = 0; h < heads; ++h) {
                const Eigen::Index off = h * hd;
                for (Eigen::Index t = 0; t < t_len; ++t) {
                    const Eigen::Index lo = std::max<Eigen::Index>(0, t - w + 1);
                    const double* p = probs.data() + (h * t_len + t) * w;
                    const double* go = grad.row(t).data() + off;
                    double s = 0.0;
                    for (Eigen::Index j = lo; j <= t; ++j) {
                        const double* vrow = vv.row(j).data() + off;
                        double* dvrow = dv.row(j).data() + off;
                        double acc = 0.0;
                        for (Eigen::Index c = 0; c < hd; ++c) {
                            acc += go[c] * vrow[c];
                            dvrow[c] += p[j - lo] * go[c];
                        }
                        dp[static_cast<std::size_t>(j - lo)] = acc;
                        s += p[j - lo] * acc;
                    }
                    const double* qrow = qr.row(t).data() + off;
                    double* dqrow = dqr.row(t).data() + off;
                    for (Eigen::Index j = lo; j <= t; ++j) {
                        const double ds = p[j - lo] * (dp[static_cast<std::size_t>(j - lo)] - s) * scale;
                        if (ds == 0.0) continue;
                        const double* krow = kr.row(j).data() + off;
                        double* dkrow = dkr.row(j).data() + off;
                        for (Eigen::Index c = 0; c < hd; ++c) {
                            dqrow[c] += ds * krow[c];
                            dkrow[c] += ds * qrow[c];
                        }
                    }
                }
            }
            apply_rope(dqr, heads, rope_theta, /*inverse=*/true);
            apply_rope(dkr, heads, rope_theta, /*inverse=*/true);
            if (Tensor* gv = g.grad_buffer(v)) *gv += dv;
            if (Tensor* gq = g.grad_buffer(q)) *gq += dqr;
            if (Tensor* gk = g.grad_buffer(k)) *gk += dkr;
        });
}

Var swish_gate(Var a, Var b) {
    require_same_graph(a, b);
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(ErrorKind::BadShape, "swish_gate operand shapes differ");
    const Tensor& av = a.value();
    Tensor sig = av.unaryExpr([](double x) { return sigmoid(x); });
    Tensor out = av.array() * sig.array() * b.value().array();
    return a.graph()->push(std::move(out), {a, b}, [a, b, sig = std::move(sig)](Graph& g, const Tensor& grad) {
        const auto av = a.value().array();
        const auto s = sig.array();
        if (Tensor* ga = g.grad_buffer(a)) {
            ga->array() += grad.array() * b.value().array() * (s + av * s * (1.0 - s));
        }
        if (Tensor* gb = g.grad_buffer(b)) gb->array() += grad.array() * av * s;
    });
}

Var canon(Var x, Var w) {
    require_same_graph(x, w);
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (wv.rows() != 4 || wv.cols() != xv.cols()) throw Error(ErrorKind::BadShape, "canon weights must be 4 x d");
    const Eigen::Index t_len = xv.rows();
    Tensor out = Tensor::Zero(t_len, xv.cols());
    for (Eigen::Index t = 0; t < t_len; ++t) {
        for (Eigen::Index i = 0; i < 4 && i <= t; ++i) {
            out.row(t).array() += wv.row(i).array() * xv.row(t - i).array();
        }
    }
    return x.graph()->push(std::move(out), {x, w}, [x, w](Graph& g, const Tensor& grad) {
        const Tensor& xv = x.value();
        const Tensor& wv = w.value();
        const Eigen::Index t_len = xv.rows();
        Tensor* gx = g.grad_buffer(x);
        Tensor* gw = g.grad_buffer(w);
        for (Eigen::Index t = 0; t < t_len; ++t) {
            for (Eigen::Index i = 0; i < 4 && i <= t; ++i) {
                if (gx != nullptr) gx->row(t - i).array() += wv.row(i).array() * grad.row(t).array();
                if (gw != nullptr) gw->row(i).array() += grad.row(t).array() * xv.row(t - i).array();
            }
        }
    });
}

Var gather_rows(Var x, std::span<const std::size_t> indices) {
    const Tensor& xv = x.value();
    Tensor out(static_cast<Eigen::Index>(indices.size()), xv.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= static_cast<std::size_t>(xv.rows())) throw Error(ErrorKind::BadShape, "gather index out of range");
        out.row(static_cast<Eigen::Index>(i)) = xv.row(static_cast<Eigen::Index>(indices[i]));
    }
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    return x.graph()->push(std::move(out), {x}, [x, idx = std::move(idx)](Graph& g, const Tensor& grad) {
        Tensor* gx = g.grad_buffer(x);
        if (gx == nullptr) return;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            gx->row(static_cast<Eigen::Index>(idx[i])) += grad.row(static_cast<Eigen::Index>(i));
        }
    });
}

Var binned_upsample(Var g, std::span<const std::size_t> chunk, std::span<const std::size_t> bin,
                    std::span<const Var> banks) {
    if (chunk.size() != bin.size()) throw Error(ErrorKind::BadShape, "chunk and bin maps differ in length");
    if (banks.empty()) throw Error(ErrorKind::BadShape, "upsample needs at least one bank");
    const Tensor& gv = g.value();
    const Eigen::Index d_in = gv.cols();
    const Eigen::Index d_out = banks.front().cols();
    for (const Var& b : banks) {
        require_same_graph(g, b);
        if (b.rows() != d_in || b.cols() != d_out) throw Error(ErrorKind::BadShape, "upsample bank shape");
    }
    const auto t_len = static_cast<Eigen::Index>(chunk.size());
    // Row ranges per bank; bins are non-decreasing in t so each range is contiguous.
    std::vector<std::vector<Eigen::Index>> rows_of(banks.size());
    for (Eigen::Index t = 0; t < t_len; ++t) {
        const std::size_t b = bin[static_cast<std::size_t>(t)];
        if (b >= banks.size()) throw Error(ErrorKind::BadShape, "bin index out of range");
        if (chunk[static_cast<std::size_t>(t)] >= static_cast<std::size_t>(gv.rows())) {
            throw Error(ErrorKind::BadShape, "chunk index out of range");
        }
        rows_of[b].push_back(t);
    }
    Tensor out(t_len, d_out);
    std::vector<Tensor> gathered(banks.size());
    for (std::size_t b = 0; b < banks.size(); ++b) {
        const auto& rows = rows_of[b];
        if (rows.empty()) continue;
        Tensor sel(static_cast<Eigen::Index>(rows.size()), d_in);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            sel.row(static_cast<Eigen::Index>(i)) = gv.row(static_cast<Eigen::Index>(chunk[static_cast<std::size_t>(rows[i])]));
        }
        Tensor prod;
        prod.noalias() = sel * banks[b].value();
        for (std::size_t i = 0; i < rows.size(); ++i) out.row(rows[i]) = prod.row(static_cast<Eigen::Index>(i));
        gathered[b] = std::move(sel);
    }
    std::vector<Var> bank_vars(banks.begin(), banks.end());
    std::vector<Var> inputs = bank_vars;
    inputs.push_back(g);
    std::vector<std::size_t> chunk_v(chunk.begin(), chunk.end());
    return g.graph()->push(
        std::move(out), inputs,
        [g, bank_vars, chunk_v = std::move(chunk_v), rows_of = std::move(rows_of), gathered = std::move(gathered)](
            Graph& gr, const Tensor& grad) {
            Tensor* gg = gr.grad_buffer(g);
            for (std::size_t b = 0; b < bank_vars.size(); ++b) {
                const auto& rows = rows_of[b];
                if (rows.empty()) continue;
                Tensor gsel(static_cast<Eigen::Index>(rows.size()), grad.cols());
                for (std::size_t i = 0; i < rows.size(); ++i) gsel.row(static_cast<Eigen::Index>(i)) = grad.row(rows[i]);
                if (Tensor* gb = gr.grad_buffer(bank_vars[b])) gb->noalias() += gathered[b].transpose() * gsel;
                if (gg != nullptr) {
                    Tensor back;
                    back.noalias() = gsel * bank_vars[b].value().transpose();
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                        gg->row(static_cast<Eigen::Index>(chunk_v[static_cast<std::size_t>(rows[i])])) +=
                            back.row(static_cast<Eigen::Index>(i));
                    }
                }
            }
        });
}

Var cross_entropy(Var logits, std::span<const Symbol> targets, bool mean) {
    const Tensor& lv = logits.value();
    if (static_cast<std::size_t>(lv.rows()) != targets.size()) {
        throw Error(ErrorKind::BadShape, "cross_entropy: " + std::to_string(lv.rows()) + " rows for " +
                                             std::to_string(targets.size()) + " targets");
    }
    Tensor probs(lv.rows(), lv.cols());
    double total = 0.0;
    for (Eigen::Index t = 0; t < lv.rows(); ++t) {
        const Symbol y = targets[static_cast<std::size_t>(t)];
        if (y >= lv.cols()) throw Error(ErrorKind::OutOfVocab, "target " + std::to_string(y));
        const double mx = lv.row(t).maxCoeff();
        probs.row(t) = (lv.row(t).array() - mx).exp();
        const double z = probs.row(t).sum();
        probs.row(t) /= z;
        total += (std::log(z) + mx) - lv(t, y);
    }
    const double denom = mean && lv.rows() > 0 ? static_cast<double>(lv.rows()) : 1.0;
    Tensor out(1, 1);
    out(0, 0) = total / denom;
    std::vector<Symbol> tv(targets.begin(), targets.end());
    return logits.graph()->push(std::move(out), {logits},
                                [logits, probs = std::move(probs), tv = std::move(tv), denom](Graph& g, const Tensor& grad) {
                                    Tensor* gl = g.grad_buffer(logits);
                                    if (gl == nullptr) return;
                                    const double s = grad(0, 0) / denom;
                                    *gl += probs * s;
                                    for (std::size_t t = 0; t < tv.size(); ++t) (*gl)(static_cast<Eigen::Index>(t), tv[t]) -= s;
                                });
}

// --- blocks ------------------------------------------------------------------

Var swa_attention(Var x, const AttentionWeights& w, int heads, std::size_t window, double rope_theta) {
    Graph& g = *x.graph();
    Var q = matmul(x, g.param(*w.wq));
    Var k = matmul(x, g.param(*w.wk));
    Var v = matmul(x, g.param(*w.wv));
    Var o = attention_core(q, k, v, heads, window, rope_theta);
    return matmul(o, g.param(*w.wo));
}

Var swiglu(Var x, Parameter& w1, Parameter& w2, Parameter& w3) {
    Graph& g = *x.graph();
    Var a = matmul(x, g.param(w1));
    Var b = matmul(x, g.param(w2));
    return matmul(swish_gate(a, b), g.param(w3));
}

}  // namespace byteflow::nn

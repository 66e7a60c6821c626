#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "behrt/errors.hpp"
#include "behrt/numerics/tensor.hpp"

namespace behrt::numerics {

// Handle to a node of a Graph. Only meaningful for the graph that issued it.
struct Var {
    int id = -1;
    bool valid() const noexcept { return id >= 0; }
};

// Tape-based reverse-mode autodiff. Nodes are appended in evaluation order, so
// the node vector is already a topological order and backward() is a single
// reverse sweep. A graph is a value with no shared state; build one per
// example, use it on one thread, then drop it.
template <typename T>
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) noexcept = default;
    Graph& operator=(Graph&&) noexcept = default;

    // Leaf without gradient.
    Var constant(Tensor<T> value) {
        Node node;
        node.op = "constant";
        node.value = std::move(value);
        return push(std::move(node), false);
    }

    // Leaf that references caller-owned storage (no copy). The tensor must
    // outlive the graph. Gradients are collected with grad().
    Var parameter(const Tensor<T>& value) {
        Node node;
        node.op = "parameter";
        node.external = &value;
        node.requires_grad = true;
        nodes_.push_back(std::move(node));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor<T>& value(Var v) const {
        const Node& n = nodes_.at(v.id);
        return n.external ? *n.external : n.value;
    }

    bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

    const Tensor<T>& grad(Var v) const {
        const Node& n = nodes_.at(v.id);
        if (n.grad.empty()) throw Error("node " + std::to_string(v.id) + " has no gradient");
        return n.grad;
    }

    // Per-head attention probabilities [heads x M x M] recorded by attention().
    const Tensor<T>& attention_probs(Var v) const {
        const Node& n = nodes_.at(v.id);
        if (n.op != std::string_view("attention")) throw Error("node is not an attention node");
        return n.aux;
    }

    std::size_t size() const noexcept { return nodes_.size(); }

    // ---------------------------------------------------------------------
    // Operations

    Var matmul(Var a, Var b) {
        const auto& A = value(a);
        const auto& B = value(b);
        if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
            throw ShapeError("matmul: incompatible shapes " + to_string(A.shape()) + " and " +
                             to_string(B.shape()));
        }
        const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
        Tensor<T> out({m, n});
        gemm_accumulate(A.data(), B.data(), out.data(), m, k, n);
        return make("matmul", std::move(out), {a, b}, [m, k, n](Graph& g, int self) {
            const Node& node = g.nodes_[self];
            const int ia = node.parents[0], ib = node.parents[1];
            const auto& G = node.grad;
            if (g.nodes_[ia].requires_grad) {
                gemm_accumulate_bt(G.data(), g.value_of(ib).data(), g.grad_buffer(ia).data(), m, n, k);
            }
            if (g.nodes_[ib].requires_grad) {
                gemm_accumulate_at(g.value_of(ia).data(), G.data(), g.grad_buffer(ib).data(), m, k, n);
            }
        });
    }

    Var add(Var a, Var b) {
        const auto& A = value(a);
        const auto& B = value(b);
        if (A.shape() != B.shape()) {
            throw ShapeError("add: shapes " + to_string(A.shape()) + " and " + to_string(B.shape()) +
                             " differ");
        }
        Tensor<T> out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
        return make("add", std::move(out), {a, b}, [](Graph& g, int self) {
            for (int p : g.nodes_[self].parents) g.accumulate(p, g.nodes_[self].grad);
        });
    }

    // x[m x n] + bias[n] broadcast over rows.
    Var add_bias(Var x, Var bias) {
        const auto& X = value(x);
        const auto& B = value(bias);
        if (B.size() != X.cols()) {
            throw ShapeError("add_bias: bias " + to_string(B.shape()) + " does not match " + to_string(X.shape()));
        }
        Tensor<T> out = X;
        const std::size_t r = X.rows(), c = X.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[i * c + j] += B[j];
        return make("add_bias", std::move(out), {x, bias}, [r, c](Graph& g, int self) {
            const Node& node = g.nodes_[self];
            g.accumulate(node.parents[0], node.grad);
            if (g.nodes_[node.parents[1]].requires_grad) {
                auto& gb = g.grad_buffer(node.parents[1]);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gb[j] += node.grad[i * c + j];
            }
        });
    }

    Var linear(Var x, Var weight, Var bias) { return add_bias(matmul(x, weight), bias); }

    Var mul(Var a, Var b) {
        const auto& A = value(a);
        const auto& B = value(b);
        if (A.shape() != B.shape()) {
            throw ShapeError("mul: shapes " + to_string(A.shape()) + " and " + to_string(B.shape()) +
                             " differ");
        }
        Tensor<T> out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
        return make("mul", std::move(out), {a, b}, [](Graph& g, int self) {
            const Node& node = g.nodes_[self];
            const int ia = node.parents[0], ib = node.parents[1];
            if (g.nodes_[ia].requires_grad) {
                auto& ga = g.grad_buffer(ia);
                const auto& B = g.value_of(ib);
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += node.grad[i] * B[i];
            }
            if (g.nodes_[ib].requires_grad) {
                auto& gb = g.grad_buffer(ib);
                const auto& A = g.value_of(ia);
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += node.grad[i] * A[i];
            }
        });
    }

    Var scale(Var x, T factor) {
        Tensor<T> out = value(x);
        for (auto& v : out.values()) v *= factor;
        return make("scale", std::move(out), {x}, [factor](Graph& g, int self) {
            const Node& node = g.nodes_[self];
            if (!g.nodes_[node.parents[0]].requires_grad) return;
            auto& gx = g.grad_buffer(node.parents[0]);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * node.grad[i];
        });
    }

    Var sum(Var x) {
        T total{0};
        for (T v : value(x).values()) total += v;
        return make("sum", Tensor<T>({1}, std::vector<T>{total}), {x}, [](Graph& g, int self) {
            const Node& node = g.nodes_[self];
            if (!g.nodes_[node.parents[0]].requires_grad) return;
            auto& gx = g.grad_buffer(node.parents[0]);
            for (auto& v : gx.values()) v += node.grad[0];
        });
    }

    // Numerically stable softmax along `axis` (max subtracted per slice).
    Var softmax(Var x, std::size_t axis) {
        const auto& X = value(x);
        if (axis >= X.rank()) {
            throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " + to_string(X.shape()));
        }
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < axis; ++i) outer *= X.dim(i);
        for (std::size_t i = axis + 1; i < X.rank(); ++i) inner *= X.dim(i);
        const std::size_t len = X.dim(axis);
        Tensor<T> out(X.shape());
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, X[base + i * inner]);
                T z{0};
                for (std::size_t i = 0; i < len; ++i) {
                    const T e = std::exp(X[base + i * inner] - mx);
                    out[base + i * inner] = e;
                    z += e;
                }
                for (std::size_t i = 0; i < len; ++i) out[base + i * inner] /= z;
            }
        }
        return make("softmax", std::move(out), {x}, [outer, inner, len](Graph& g, int self) {
            const Node& node = g.nodes_[self];
            if (!g.nodes_[node.parents[0]].requires_grad) return;
            auto& gx = g.grad_buffer(node.parents[0]);
            const auto& Y = node.value;
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * len * inner + in;
                    T dot{0};
                    for (std::size_t i = 0; i < len; ++i) dot += Y[base + i * inner] * node.grad[base + i * inner];
                    for (std::size_t i = 0; i < len; ++i) {
                        const std::size_t at = base + i * inner;
                        gx[at] += Y[at] * (node.grad[at] - dot);
                    }
                }
            }
        });
    }

    // Row-wise layer normalisation over the last axis (biased variance).
    Var layer_norm(Var x, Var gain, Var bias, T eps) {
        const auto& X = value(x);
        const auto& Gn = value(gain);
        const auto& Bs = value(bias);
        const std::size_t r = X.rows(), c = X.cols();
        if (Gn.size() != c || Bs.size() != c) {
            throw ShapeError("layer_norm: gain/bias extent does not match last axis of " + to_string(X.shape()));
        }
        Tensor<T> out(X.shape());
        Tensor<T> stats({r, 2});  // (mean, inverse std) per row
        for (std::size_t i = 0; i < r; ++i) {
            const T* row = X.data() + i * c;
            T mean{0};
            for (std::size_t j = 0; j < c; ++j) mean += row[j];
            mean /= static_cast<T>(c);
            T var{0};
            for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
            var /= static_cast<T>(c);
            const T denom = std::sqrt(var + eps);
            const T inv = denom > T{0} ? T{1} / denom : T{0};
            stats(i, 0) = mean;
            stats(i, 1) = inv;
            for (std::size_t j = 0; j < c; ++j) out[i * c + j] = Gn[j] * (row[j] - mean) * inv + Bs[j];
        }
        Var result = make("layer_norm", std::move(out), {x, gain, bias}, [r, c](Graph& g, int self) {
            const Node& node = g.nodes_[self];
            const int ix = node.parents[0], ig = node.parents[1], ib = node.parents[2];
            const auto& X = g.value_of(ix);
            const auto& Gn = g.value_of(ig);
            const auto& stats = node.aux;
            const bool need_x = g.nodes_[ix].requires_grad;
            const bool need_g = g.nodes_[ig].requires_grad;
            const bool need_b = g.nodes_[ib].requires_grad;
            std::vector<T> xhat(c), dxhat(c);
            for (std::size_t i = 0; i < r; ++i) {
                const T mean = stats(i, 0), inv = stats(i, 1);
                const T* dy = node.grad.data() + i * c;
                T sum_d{0}, sum_dx{0};
                for (std::size_t j = 0; j < c; ++j) {
                    xhat[j] = (X[i * c + j] - mean) * inv;
                    dxhat[j] = dy[j] * Gn[j];
                    sum_d += dxhat[j];
                    sum_dx += dxhat[j] * xhat[j];
                }
                if (need_g) {
                    auto& gg = g.grad_buffer(ig);
                    for (std::size_t j = 0; j < c; ++j) gg[j] += dy[j] * xhat[j];
                }
                if (need_b) {
                    auto& gb = g.grad_buffer(ib);
                    for (std::size_t j = 0; j < c; ++j) gb[j] += dy[j];
                }
                if (need_x) {
                    auto& gx = g.grad_buffer(ix);
                    const T n = static_cast<T>(c);
                    for (std::size_t j = 0; j < c; ++j) {
                        gx[i * c + j] += inv * (dxhat[j] - sum_d / n - xhat[j] * sum_dx / n);
                    }
                }
            }
        });
        nodes_[result.id].aux = std::move(stats);
        return result;
    }

    // Exact GELU: x * Phi(x).
    Var gelu(Var x) {
        Tensor<T> out = value(x);
        for (auto& v : out.values()) v = T(0.5) * v * (T(1) + std::erf(v / std::sqrt(T(2))));
        return make("gelu", std::move(out), {x}, [](Graph& g, int self) {
            const Node& node = g.nodes_[self];
            if (!g.nodes_[node.parents[0]].requires_grad) return;
            const auto& X = g.value_of(node.parents[0]);
            auto& gx = g.grad_buffer(node.parents[0]);
            const T inv_sqrt_2pi = T(0.3989422804014327);
            for (std::size_t i = 0; i < gx.size(); ++i) {
                const T v = X[i];
                const T cdf = T(0.5) * (T(1) + std::erf(v / std::sqrt(T(2))));
                const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
                gx[i] += node.grad[i] * (cdf + v * pdf);
            }
        });
    }

    // Inverted dropout. rate == 0 is the identity and consumes no randomness.
    Var dropout(Var x, T rate, std::mt19937_64& rng) {
        if (rate <= T{0}) return x;
        if (rate >= T{1}) throw ConfigError("dropout rate must be < 1");
        Tensor<T> mask(value(x).shape());
        std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
        const T scale = T{1} / (T{1} - rate);
        for (auto& m : mask.values()) m = keep(rng) ? scale : T{0};
        Var mk = constant(std::move(mask));
        return mul(x, mk);
    }

    // Rows of a [V x H] table selected by ids -> [ids.size() x H].
    Var gather_rows(Var table, std::span<const int> ids) {
        const auto& Tb = value(table);
        const std::size_t rows = Tb.rows(), c = Tb.cols();
        Tensor<T> out({ids.size(), c});
        for (std::size_t t = 0; t < ids.size(); ++t) {
            if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= rows) {
                throw ShapeError("gather_rows: id " + std::to_string(ids[t]) + " outside table of " +
                                 std::to_string(rows) + " rows");
            }
            std::copy_n(Tb.data() + static_cast<std::size_t>(ids[t]) * c, c, out.data() + t * c);
        }
        std::vector<int> idx(ids.begin(), ids.end());
        return make("gather_rows", std::move(out), {table}, [idx = std::move(idx), c](Graph& g, int self) {
            const Node& node = g.nodes_[self];
            if (!g.nodes_[node.parents[0]].requires_grad) return;
            auto& gt = g.grad_buffer(node.parents[0]);
            for (std::size_t t = 0; t < idx.size(); ++t) {
                T* dst = gt.data() + static_cast<std::size_t>(idx[t]) * c;
                const T* src = node.grad.data() + t * c;
                for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
            }
        });
    }

    // Mean over rows where keep[i] != 0 -> [1 x cols].
    Var mean_rows(Var x, std::span<const std::uint8_t> keep) {
        const auto& X = value(x);
        const std::size_t r = X.rows(), c = X.cols();
        if (keep.size() != r) throw ShapeError("mean_rows: mask length does not match row count");
        std::size_t count = 0;
        for (auto k : keep) count += k != 0;
        if (count == 0) throw ShapeError("mean_rows: no rows selected");
        Tensor<T> out({1, c});
        for (std::size_t i = 0; i < r; ++i)
            if (keep[i])
                for (std::size_t j = 0; j < c; ++j) out[j] += X[i * c + j];
        const T inv = T{1} / static_cast<T>(count);
        for (auto& v : out.values()) v *= inv;
        std::vector<std::uint8_t> mask(keep.begin(), keep.end());
        return make("mean_rows", std::move(out), {x}, [mask = std::move(mask), c, inv](Graph& g, int self) {
            const Node& node = g.nodes_[self];
            if (!g.nodes_[node.parents[0]].requires_grad) return;
            auto& gx = g.grad_buffer(node.parents[0]);
            for (std::size_t i = 0; i < mask.size(); ++i)
                if (mask[i])
                    for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += node.grad[j] * inv;
        });
    }

    // Multi-head scaled dot-product self-attention over [M x H] projections.
    // Keys with key_valid[j] == 0 receive zero probability. No causal mask.
    // The per-head probabilities are kept on the node (see attention_probs).
    Var attention(Var q, Var k, Var v, std::span<const std::uint8_t> key_valid, std::size_t heads) {
        const auto& Q = value(q);
        const auto& K = value(k);
        const auto& V = value(v);
        if (Q.shape() != K.shape() || Q.shape() != V.shape() || Q.rank() != 2) {
            throw ShapeError("attention: q/k/v shapes must match and be 2-D");
        }
        const std::size_t m = Q.dim(0), hidden = Q.dim(1);
        if (heads == 0 || hidden % heads != 0) throw ShapeError("attention: hidden size not divisible by heads");
        if (key_valid.size() != m) throw ShapeError("attention: key mask length does not match sequence");
        const std::size_t dh = hidden / heads;
        const T scale = T{1} / std::sqrt(static_cast<T>(dh));
        Tensor<T> probs({heads, m, m});
        Tensor<T> out({m, hidden});
        std::vector<T> scores(m);
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dh;
            for (std::size_t i = 0; i < m; ++i) {
                const T* qi = Q.data() + i * hidden + off;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j < m; ++j) {
                    if (!key_valid[j]) continue;
                    const T* kj = K.data() + j * hidden + off;
                    T s{0};
                    for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
                    scores[j] = s * scale;
                    mx = std::max(mx, scores[j]);
                }
                if (!std::isfinite(mx)) throw ShapeError("attention: every key is masked");
                T* prow = probs.data() + (h * m + i) * m;
                T z{0};
                for (std::size_t j = 0; j < m; ++j) {
                    prow[j] = key_valid[j] ? std::exp(scores[j] - mx) : T{0};
                    z += prow[j];
                }
                T* oi = out.data() + i * hidden + off;
                for (std::size_t j = 0; j < m; ++j) {
                    prow[j] /= z;
                    if (prow[j] == T{0}) continue;
                    const T* vj = V.data() + j * hidden + off;
                    for (std::size_t d = 0; d < dh; ++d) oi[d] += prow[j] * vj[d];
                }
            }
        }
        Var result = make("attention", std::move(out), {q, k, v}, [m, hidden, heads, dh, scale](Graph& g, int self) {
            const Node& node = g.nodes_[self];
            const int iq = node.parents[0], ik = node.parents[1], iv = node.parents[2];
            const auto& Q = g.value_of(iq);
            const auto& K = g.value_of(ik);
            const auto& V = g.value_of(iv);
            const auto& P = node.aux;
            const auto& dO = node.grad;
            T* gq = g.nodes_[iq].requires_grad ? g.grad_buffer(iq).data() : nullptr;
            T* gk = g.nodes_[ik].requires_grad ? g.grad_buffer(ik).data() : nullptr;
            T* gv = g.nodes_[iv].requires_grad ? g.grad_buffer(iv).data() : nullptr;
            std::vector<T> dp(m);
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t off = h * dh;
                for (std::size_t i = 0; i < m; ++i) {
                    const T* prow = P.data() + (h * m + i) * m;
                    const T* doi = dO.data() + i * hidden + off;
                    T dot{0};
                    for (std::size_t j = 0; j < m; ++j) {
                        if (prow[j] == T{0}) {
                            dp[j] = T{0};
                            continue;
                        }
                        const T* vj = V.data() + j * hidden + off;
                        T s{0};
                        for (std::size_t d = 0; d < dh; ++d) s += doi[d] * vj[d];
                        dp[j] = s;
                        dot += prow[j] * s;
                        if (gv) {
                            T* gvj = gv + j * hidden + off;
                            for (std::size_t d = 0; d < dh; ++d) gvj[d] += prow[j] * doi[d];
                        }
                    }
                    const T* qi = Q.data() + i * hidden + off;
                    for (std::size_t j = 0; j < m; ++j) {
                        if (prow[j] == T{0}) continue;
                        const T ds = prow[j] * (dp[j] - dot) * scale;
                        const T* kj = K.data() + j * hidden + off;
                        if (gq) {
                            T* gqi = gq + i * hidden + off;
                            for (std::size_t d = 0; d < dh; ++d) gqi[d] += ds * kj[d];
                        }
                        if (gk) {
                            T* gkj = gk + j * hidden + off;
                            for (std::size_t d = 0; d < dh; ++d) gkj[d] += ds * qi[d];
                        }
                    }
                }
            }
        });
        nodes_[result.id].aux = std::move(probs);
        return result;
    }

    // scale * sum over rows t with target[t] >= 0 of -log softmax(logits[t])[target[t]].
    // Rows with a negative target are ignored.
    Var cross_entropy(Var logits, std::span<const int> targets, T scale) {
        const auto& L = value(logits);
        const std::size_t r = L.rows(), c = L.cols();
        if (targets.size() != r) throw ShapeError("cross_entropy: one target per logit row required");
        Tensor<T> probs({r, c});
        T total{0};
        for (std::size_t t = 0; t < r; ++t) {
            if (targets[t] < 0) continue;
            if (static_cast<std::size_t>(targets[t]) >= c) throw ShapeError("cross_entropy: target id out of range");
            const T* row = L.data() + t * c;
            T mx = *std::max_element(row, row + c);
            T z{0};
            for (std::size_t j = 0; j < c; ++j) {
                probs(t, j) = std::exp(row[j] - mx);
                z += probs(t, j);
            }
            for (std::size_t j = 0; j < c; ++j) probs(t, j) /= z;
            total += (std::log(z) + mx - row[targets[t]]);
        }
        std::vector<int> tg(targets.begin(), targets.end());
        Var result = make("cross_entropy", Tensor<T>({1}, std::vector<T>{total * scale}), {logits},
                          [tg = std::move(tg), c, scale](Graph& g, int self) {
                              const Node& node = g.nodes_[self];
                              if (!g.nodes_[node.parents[0]].requires_grad) return;
                              auto& gl = g.grad_buffer(node.parents[0]);
                              const T up = node.grad[0] * scale;
                              for (std::size_t t = 0; t < tg.size(); ++t) {
                                  if (tg[t] < 0) continue;
                                  for (std::size_t j = 0; j < c; ++j) gl[t * c + j] += up * node.aux(t, j);
                                  gl[t * c + static_cast<std::size_t>(tg[t])] -= up;
                              }
                          });
        nodes_[result.id].aux = std::move(probs);
        return result;
    }

    // scale * sum_i BCE(sigmoid(logits_i), labels_i), labels in {0,1}.
    Var bce_with_logits(Var logits, std::span<const T> labels, T scale) {
        const auto& L = value(logits);
        if (labels.size() != L.size()) throw ShapeError("bce_with_logits: label length does not match logits");
        T total{0};
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] != T{0} && labels[i] != T{1}) throw ConfigError("bce_with_logits: labels must be 0 or 1");
            total += labels[i] == T{1} ? softplus(-L[i]) : softplus(L[i]);
        }
        std::vector<T> y(labels.begin(), labels.end());
        return make("bce_with_logits", Tensor<T>({1}, std::vector<T>{total * scale}), {logits},
                    [y = std::move(y), scale](Graph& g, int self) {
                        const Node& node = g.nodes_[self];
                        if (!g.nodes_[node.parents[0]].requires_grad) return;
                        const auto& L = g.value_of(node.parents[0]);
                        auto& gl = g.grad_buffer(node.parents[0]);
                        const T up = node.grad[0] * scale;
                        for (std::size_t i = 0; i < y.size(); ++i) gl[i] += up * (sigmoid(L[i]) - y[i]);
                    });
    }

    // Reverse sweep from a scalar node, seeding d(loss)/d(loss) = seed.
    void backward(Var loss, T seed = T{1}) {
        Node& root = nodes_.at(loss.id);
        if (value(loss).size() != 1) {
            throw ShapeError("backward: loss must be scalar, got " + to_string(value(loss).shape()));
        }
        if (!root.requires_grad) return;
        grad_buffer(loss.id)[0] += seed;
        for (int id = loss.id; id >= 0; --id) {
            Node& node = nodes_[id];
            if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
            node.backward(*this, id);
        }
    }

    static T sigmoid(T x) {
        if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
        const T e = std::exp(x);
        return e / (T{1} + e);
    }

    static T softplus(T x) { return std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x))); }

private:
    struct Node {
        const char* op = "";
        Tensor<T> value;
        const Tensor<T>* external = nullptr;
        Tensor<T> grad;
        Tensor<T> aux;
        std::vector<int> parents;
        std::function<void(Graph&, int)> backward;
        bool requires_grad = false;
    };

    const Tensor<T>& value_of(int id) const {
        const Node& n = nodes_[id];
        return n.external ? *n.external : n.value;
    }

    Tensor<T>& grad_buffer(int id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) n.grad = Tensor<T>(value_of(id).shape());
        return n.grad;
    }

    void accumulate(int id, const Tensor<T>& g) {
        if (!nodes_[id].requires_grad) return;
        auto& buf = grad_buffer(id);
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
    }

    Var push(Node node, bool requires_grad) {
        node.requires_grad = requires_grad;
        nodes_.push_back(std::move(node));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    Var make(const char* op, Tensor<T> out, std::initializer_list<Var> parents,
             std::function<void(Graph&, int)> backward) {
        if (!out.all_finite()) throw NumericError(std::string(op) + ": produced a non-finite value");
        Node node;
        node.op = op;
        node.value = std::move(out);
        bool rg = false;
        for (Var p : parents) {
            node.parents.push_back(p.id);
            rg = rg || nodes_.at(p.id).requires_grad;
        }
        if (rg) node.backward = std::move(backward);
        return push(std::move(node), rg);
    }

    std::vector<Node> nodes_;
};

}  // namespace behrt::numerics

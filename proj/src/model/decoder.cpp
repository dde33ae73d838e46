// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/model/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dynalab/core/error.hpp"

namespace dynalab::model {

namespace {

bool wants(const std::vector<std::string>& capture_list, std::string_view sublayer) {
  return std::find(capture_list.begin(), capture_list.end(), sublayer) != capture_list.end();
}

Matrix linear(const Matrix& x, const Matrix& w) { return matmul_nt(x, w); }

double rms_inverse(std::span<const double> x, double eps) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  return 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + eps);
}

// Row-wise RMSNorm; records 1/rms per row for the backward pass.
Matrix rmsnorm_rows(const Matrix& x, const Matrix& gain, double eps, std::vector<double>& rinv) {
  Matrix y(x.rows(), x.cols());
  rinv.resize(x.rows());
  auto g = gain.row(0);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto in = x.row(t);
    auto out = y.row(t);
    const double r = rms_inverse(in, eps);
    rinv[t] = r;
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = g[j] * in[j] * r;
  }
  return y;
}

// dx for y = g ⊙ x · r, r = (mean(x²) + eps)^(-1/2). Accumulates dg.
Matrix rmsnorm_backward(const Matrix& x, const std::vector<double>& rinv, const Matrix& gain,
                        const Matrix& dy, Matrix& dgain) {
  const std::size_t d = x.cols();
  Matrix dx(x.rows(), d);
  auto g = gain.row(0);
  auto dg = dgain.row(0);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto xr = x.row(t);
    auto dyr = dy.row(t);
    auto dxr = dx.row(t);
    const double r = rinv[t];
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dg[j] += dyr[j] * xr[j] * r;
      dot += g[j] * dyr[j] * xr[j];
    }
    const double coef = r * r * r * dot / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) dxr[j] = r * g[j] * dyr[j] - coef * xr[j];
  }
  return dx;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<double> inverse_frequencies(std::size_t head_dim, double theta) {
  std::vector<double> f(head_dim / 2);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
  }
  return f;
}

// Rotates every head slice of row `row` by `position`. sign = -1 applies the
// inverse rotation (the transpose), which is what the backward pass needs.
void rotate_row(std::span<double> row, std::size_t n_heads, std::size_t head_dim,
                std::size_t position, const std::vector<double>& inv_freq, double sign) {
  for (std::size_t i = 0; i < inv_freq.size(); ++i) {
    const double angle = static_cast<double>(position) * inv_freq[i];
    const double c = std::cos(angle);
    const double s = sign * std::sin(angle);
    for (std::size_t h = 0; h < n_heads; ++h) {
      double& x0 = row[h * head_dim + 2 * i];
      double& x1 = row[h * head_dim + 2 * i + 1];
      const double a = x0;
      const double b = x1;
      x0 = a * c - b * s;
      x1 = a * s + b * c;
    }
  }
}

void rope_inplace(Matrix& x, std::size_t seq, std::size_t n_heads, std::size_t head_dim,
                  const std::vector<double>& inv_freq, double sign) {
  for (std::size_t t = 0; t < x.rows(); ++t) {
    rotate_row(x.row(t), n_heads, head_dim, t % seq, inv_freq, sign);
  }
}

// Causal softmax attention. q is T × (H·hd), k and v are T × (KV·hd).
// Returns the concatenated per-head context, T × (H·hd).
Matrix attention_core(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t batch,
                      std::size_t seq, const ModelConfig& c, std::vector<Matrix>* probs_out) {
  const std::size_t hd = c.head_dim();
  const std::size_t group = c.group_size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Matrix ctx(batch * seq, c.n_heads * hd);
  if (probs_out) probs_out->assign(batch * c.n_heads, Matrix(seq, seq));
  std::vector<double> p(seq);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < c.n_heads; ++h) {
      const std::size_t kvh = h / group;
      for (std::size_t i = 0; i < seq; ++i) {
        const double* qi = q.data() + (b * seq + i) * q.cols() + h * hd;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          const double* kj = k.data() + (b * seq + j) * k.cols() + kvh * hd;
          double s = 0.0;
          for (std::size_t e = 0; e < hd; ++e) s += qi[e] * kj[e];
          p[j] = s * scale;
          mx = std::max(mx, p[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          p[j] = std::exp(p[j] - mx);
          z += p[j];
        }
        double* out = ctx.data() + (b * seq + i) * ctx.cols() + h * hd;
        for (std::size_t j = 0; j <= i; ++j) {
          p[j] /= z;
          const double* vj = v.data() + (b * seq + j) * v.cols() + kvh * hd;
          for (std::size_t e = 0; e < hd; ++e) out[e] += p[j] * vj[e];
        }
        if (probs_out) {
          Matrix& pm = (*probs_out)[b * c.n_heads + h];
          for (std::size_t j = 0; j <= i; ++j) pm(i, j) = p[j];
        }
      }
    }
  }
  return ctx;
}

struct AttentionGrads {
  Matrix dq;
  Matrix dk;
  Matrix dv;
};

AttentionGrads attention_core_backward(const Matrix& dctx, const detail::LayerCache& lc,
                                       std::size_t batch, std::size_t seq, const ModelConfig& c) {
  const std::size_t hd = c.head_dim();
  const std::size_t group = c.group_size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  AttentionGrads g{Matrix(lc.q.rows(), lc.q.cols()), Matrix(lc.k.rows(), lc.k.cols()),
                   Matrix(lc.v.rows(), lc.v.cols())};
  std::vector<double> dp(seq);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < c.n_heads; ++h) {
      const std::size_t kvh = h / group;
      const Matrix& pm = lc.probs[b * c.n_heads + h];
      for (std::size_t i = 0; i < seq; ++i) {
        const std::size_t ti = b * seq + i;
        const double* dci = dctx.data() + ti * dctx.cols() + h * hd;
        double row_dot = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          const std::size_t tj = b * seq + j;
          const double* vj = lc.v.data() + tj * lc.v.cols() + kvh * hd;
          double* dvj = g.dv.data() + tj * g.dv.cols() + kvh * hd;
          double s = 0.0;
          const double pij = pm(i, j);
          for (std::size_t e = 0; e < hd; ++e) {
            s += dci[e] * vj[e];
            dvj[e] += pij * dci[e];
          }
          dp[j] = s;
          row_dot += pij * s;
        }
        const double* qi = lc.q.data() + ti * lc.q.cols() + h * hd;
        double* dqi = g.dq.data() + ti * g.dq.cols() + h * hd;
        for (std::size_t j = 0; j <= i; ++j) {
          const std::size_t tj = b * seq + j;
          const double ds = pm(i, j) * (dp[j] - row_dot) * scale;
          const double* kj = lc.k.data() + tj * lc.k.cols() + kvh * hd;
          double* dkj = g.dk.data() + tj * g.dk.cols() + kvh * hd;
          for (std::size_t e = 0; e < hd; ++e) {
            dqi[e] += ds * kj[e];
            dkj[e] += ds * qi[e];
          }
        }
      }
    }
  }
  return g;
}

Tensor capture_tensor(const Matrix& m, std::size_t batch, std::size_t seq) {
  return Tensor::from_matrix(m, Shape{batch, seq, m.cols()});
}

}  // namespace

std::vector<double> rmsnorm(std::span<const double> x, std::span<const double> gain, double eps) {
  if (x.empty()) throw DimensionError("rmsnorm: empty input");
  if (gain.size() != x.size()) throw DimensionError("rmsnorm: gain size mismatch");
  const double r = rms_inverse(x, eps);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gain[i] * x[i] * r;
  return y;
}

Matrix rope_rotate(const Matrix& x, std::span<const std::size_t> positions, double theta) {
  if (x.cols() % 2 != 0) {
    throw DimensionError("rope_rotate: head dim must be even, got " + std::to_string(x.cols()));
  }
  if (positions.size() != x.rows()) throw DimensionError("rope_rotate: one position per row");
  const auto inv_freq = inverse_frequencies(x.cols(), theta);
  Matrix y = x;
  for (std::size_t r = 0; r < y.rows(); ++r) rotate_row(y.row(r), 1, x.cols(), positions[r], inv_freq, 1.0);
  return y;
}

double silu(double z) { return z * sigmoid(z); }

std::vector<double> swiglu(std::span<const double> x, const Matrix& w0, const Matrix& w1,
                           const Matrix& w2) {
  if (w0.cols() != x.size() || w1.cols() != x.size() || w0.rows() != w1.rows() ||
      w2.cols() != w0.rows()) {
    throw DimensionError("swiglu: shape mismatch");
  }
  Matrix xm(1, x.size(), std::vector<double>(x.begin(), x.end()));
  Matrix gate = linear(xm, w0);
  Matrix up = linear(xm, w1);
  for (std::size_t j = 0; j < gate.cols(); ++j) gate(0, j) = silu(gate(0, j)) * up(0, j);
  Matrix y = linear(gate, w2);
  return {y.values().begin(), y.values().end()};
}

AttentionOutput gqa_attention(const Matrix& x, std::size_t batch, const AttentionWeights& w,
                              const ModelConfig& config) {
  config.validate();
  if (batch == 0 || x.rows() % batch != 0) throw DimensionError("gqa_attention: rows not divisible by batch");
  if (x.cols() != config.d_model) throw DimensionError("gqa_attention: width != d_model");
  const std::size_t seq = x.rows() / batch;
  const std::size_t hd = config.head_dim();
  AttentionOutput out;
  out.q = linear(x, w.q_proj);
  out.k = linear(x, w.k_proj);
  out.v = linear(x, w.v_proj);
  const auto inv_freq = inverse_frequencies(hd, config.rope_theta);
  Matrix q = out.q;
  Matrix k = out.k;
  rope_inplace(q, seq, config.n_heads, hd, inv_freq, 1.0);
  rope_inplace(k, seq, config.n_kv_heads, hd, inv_freq, 1.0);
  out.context = attention_core(q, k, out.v, batch, seq, config, nullptr);
  out.output = linear(out.context, w.o_proj);
  return out;
}

ForwardTrace forward(const TokenBatch& tokens, const Parameters& params, const ModelConfig& c,
                     const std::vector<std::string>& capture_list) {
  c.validate();
  validate_capture_list(capture_list);
  if (tokens.cols < 2 || tokens.rows == 0) {
    throw DimensionError("forward: token batch must be (batch >= 1, seq + 1 >= 2)");
  }
  const std::size_t batch = tokens.rows;
  const std::size_t seq = tokens.cols - 1;
  if (seq > c.seq_len) {
    throw DimensionError("forward: sequence length " + std::to_string(seq) + " exceeds seq_len " +
                         std::to_string(c.seq_len));
  }
  for (auto id : tokens.ids) {
    if (id >= c.vocab_size) {
      throw DataError("forward: token id " + std::to_string(id) + " out of range for vocab_size " +
                      std::to_string(c.vocab_size));
    }
  }
  const std::size_t n_tok = batch * seq;
  const std::size_t d = c.d_model;
  const std::size_t hd = c.head_dim();
  const auto inv_freq = inverse_frequencies(hd, c.rope_theta);

  ForwardTrace trace;
  trace.batch = batch;
  trace.seq = seq;
  trace.params_fingerprint = params.fingerprint();
  auto& cache = trace.cache;
  cache.inputs.resize(n_tok);
  cache.targets.resize(n_tok);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < seq; ++s) {
      cache.inputs[b * seq + s] = tokens(b, s);
      cache.targets[b * seq + s] = tokens(b, s + 1);
    }
  }

  const Matrix& embed = params.at("embed.tok");
  Matrix h(n_tok, d);
  for (std::size_t t = 0; t < n_tok; ++t) {
    auto src = embed.row(cache.inputs[t]);
    std::copy(src.begin(), src.end(), h.row(t).begin());
  }

  cache.layers.resize(c.n_layers);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    auto& lc = cache.layers[l];
    auto name = [&](std::string_view s) { return layer_name(l, s); };
    auto capture = [&](std::string_view sublayer, const Matrix& m) {
      if (wants(capture_list, sublayer)) trace.activations.emplace(name(sublayer), capture_tensor(m, batch, seq));
    };

    lc.h_in = h;
    lc.a = rmsnorm_rows(h, params.at(name("attn_norm.g")), c.norm_eps, lc.attn_rinv);
    lc.q = linear(lc.a, params.at(name("attention.q_proj")));
    lc.k = linear(lc.a, params.at(name("attention.k_proj")));
    lc.v = linear(lc.a, params.at(name("attention.v_proj")));
    capture("attention.q_proj", lc.q);
    capture("attention.k_proj", lc.k);
    capture("attention.v_proj", lc.v);
    rope_inplace(lc.q, seq, c.n_heads, hd, inv_freq, 1.0);
    rope_inplace(lc.k, seq, c.n_kv_heads, hd, inv_freq, 1.0);
    lc.ctx = attention_core(lc.q, lc.k, lc.v, batch, seq, c, &lc.probs);
    Matrix attn = linear(lc.ctx, params.at(name("attention.o_proj")));
    capture("attention.o_proj", attn);
    lc.h_mid = add(h, attn);

    lc.m = rmsnorm_rows(lc.h_mid, params.at(name("mlp_norm.g")), c.norm_eps, lc.mlp_rinv);
    lc.gate = linear(lc.m, params.at(name("swiglu.w_0")));
    lc.up = linear(lc.m, params.at(name("swiglu.w_1")));
    capture("swiglu.w_0", lc.gate);
    capture("swiglu.w_1", lc.up);
    lc.act = Matrix(n_tok, c.d_ff);
    for (std::size_t i = 0; i < lc.act.size(); ++i) {
      lc.act.values()[i] = silu(lc.gate.values()[i]) * lc.up.values()[i];
    }
    Matrix mlp = linear(lc.act, params.at(name("swiglu.w_2")));
    capture("swiglu.w_2", mlp);
    h = add(lc.h_mid, mlp);
  }

  cache.h_final = h;
  cache.normed = rmsnorm_rows(h, params.at("final_norm.g"), c.norm_eps, cache.final_rinv);
  trace.logits = linear(cache.normed, params.at("lm_head"));
  cache.probs = softmax_rows(trace.logits);

  double total = 0.0;
  for (std::size_t t = 0; t < n_tok; ++t) {
    auto row = trace.logits.row(t);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    total += (mx + std::log(z)) - row[cache.targets[t]];
  }
  trace.loss = total / static_cast<double>(n_tok);
  return trace;
}

Gradients backward(const ForwardTrace& trace, const Parameters& params, const ModelConfig& c,
                   const std::vector<std::string>& capture_list, double loss_scale) {
  validate_capture_list(capture_list);
  if (trace.cache.layers.size() != c.n_layers || trace.params_fingerprint != params.fingerprint()) {
    throw TrainingError("backward: stale trace (parameters changed since forward)");
  }
  const auto& cache = trace.cache;
  const std::size_t batch = trace.batch;
  const std::size_t seq = trace.seq;
  const std::size_t n_tok = batch * seq;
  const std::size_t hd = c.head_dim();
  const auto inv_freq = inverse_frequencies(hd, c.rope_theta);

  Gradients grads;
  grads.params = Parameters::zeros_like(params);
  auto& gp = grads.params;

  Matrix dlogits = cache.probs;
  for (std::size_t t = 0; t < n_tok; ++t) dlogits(t, cache.targets[t]) -= 1.0;
  const double coef = loss_scale / static_cast<double>(n_tok);
  for (double& v : dlogits.values()) v *= coef;

  gp.at("lm_head") = matmul_tn(dlogits, cache.normed);
  Matrix dnormed = matmul(dlogits, params.at("lm_head"));
  Matrix dh = rmsnorm_backward(cache.h_final, cache.final_rinv, params.at("final_norm.g"), dnormed,
                               gp.at("final_norm.g"));

  for (std::size_t l = c.n_layers; l-- > 0;) {
    const auto& lc = cache.layers[l];
    auto name = [&](std::string_view s) { return layer_name(l, s); };

    // h = h_mid + w_2 · (silu(gate) ⊙ up)
    const Matrix& w0 = params.at(name("swiglu.w_0"));
    const Matrix& w1 = params.at(name("swiglu.w_1"));
    const Matrix& w2 = params.at(name("swiglu.w_2"));
    gp.at(name("swiglu.w_2")) = matmul_tn(dh, lc.act);
    Matrix dact = matmul(dh, w2);
    Matrix dgate(dact.rows(), dact.cols());
    Matrix dup(dact.rows(), dact.cols());
    for (std::size_t i = 0; i < dact.size(); ++i) {
      const double z = lc.gate.values()[i];
      const double sg = sigmoid(z);
      dup.values()[i] = dact.values()[i] * z * sg;
      dgate.values()[i] = dact.values()[i] * lc.up.values()[i] * sg * (1.0 + z * (1.0 - sg));
    }
    gp.at(name("swiglu.w_0")) = matmul_tn(dgate, lc.m);
    gp.at(name("swiglu.w_1")) = matmul_tn(dup, lc.m);
    Matrix dm = matmul(dgate, w0);
    add_inplace(dm, matmul(dup, w1));
    Matrix dh_mid = add(dh, rmsnorm_backward(lc.h_mid, lc.mlp_rinv, params.at(name("mlp_norm.g")),
                                             dm, gp.at(name("mlp_norm.g"))));

    // h_mid = h_in + o_proj · attention(q, k, v)
    const Matrix& wo = params.at(name("attention.o_proj"));
    gp.at(name("attention.o_proj")) = matmul_tn(dh_mid, lc.ctx);
    Matrix dctx = matmul(dh_mid, wo);
    AttentionGrads ag = attention_core_backward(dctx, lc, batch, seq, c);
    rope_inplace(ag.dq, seq, c.n_heads, hd, inv_freq, -1.0);
    rope_inplace(ag.dk, seq, c.n_kv_heads, hd, inv_freq, -1.0);
    gp.at(name("attention.q_proj")) = matmul_tn(ag.dq, lc.a);
    gp.at(name("attention.k_proj")) = matmul_tn(ag.dk, lc.a);
    gp.at(name("attention.v_proj")) = matmul_tn(ag.dv, lc.a);
    Matrix da = matmul(ag.dq, params.at(name("attention.q_proj")));
    add_inplace(da, matmul(ag.dk, params.at(name("attention.k_proj"))));
    add_inplace(da, matmul(ag.dv, params.at(name("attention.v_proj"))));
    dh = add(dh_mid, rmsnorm_backward(lc.h_in, lc.attn_rinv, params.at(name("attn_norm.g")), da,
                                      gp.at(name("attn_norm.g"))));
  }

  Matrix& dembed = gp.at("embed.tok");
  for (std::size_t t = 0; t < n_tok; ++t) {
    auto src = dh.row(t);
    auto dst = dembed.row(cache.inputs[t]);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
  }

  for (std::size_t l = 0; l < c.n_layers; ++l) {
    for (const auto& sub : capture_list) {
      const std::string key = layer_name(l, sub);
      grads.captured.emplace(key, Tensor::from_matrix(gp.at(key)));
    }
  }
  return grads;
}

NllSum negative_log_likelihood(const TokenBatch& tokens, const Parameters& params,
                               const ModelConfig& config) {
  const ForwardTrace trace = forward(tokens, params, config);
  const std::size_t n = trace.batch * trace.seq;
  return {trace.loss * static_cast<double>(n), n};
}

}  // namespace dynalab::model

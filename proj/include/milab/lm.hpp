// Copyright 2026 The MILab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Next-word language model: a 2-layer LSTM trained with Adam and truncated
// BPTT, exposed to attackers only as a label-only top-1 oracle. Double
// precision throughout so the analytic gradients can be validated against
// central finite differences.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "milab/corpus.hpp"
#include "milab/error.hpp"
#include "milab/rng.hpp"

namespace milab::lm {

using corpus::Document;
using corpus::Token;
using corpus::UserDataset;
using corpus::Vocabulary;

struct LMParams {
  int layers = 2;
  int emb_dim = 64;      // paper-scale setting is 500
  int hidden_dim = 64;   // paper-scale setting is 500
  int vocab_top_k = 2000;  // paper-scale setting is 40000
  double lr = 1e-3;
  int batch = 64;
  int bptt_len = 64;
  int epochs = 5;
  double grad_clip = 5.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (layers < 1 || emb_dim < 1 || hidden_dim < 1 || vocab_top_k < 1 ||
        batch < 1 || bptt_len < 1 || epochs < 1)
      throw ConfigError("lm params out of range");
  }
};

// Gate order within the stacked 4H blocks: input, forget, candidate, output.
struct LstmLayer {
  std::vector<double> wx;  // 4H x in_dim, row-major
  std::vector<double> wh;  // 4H x H, row-major
  std::vector<double> b;   // 4H
};

struct LanguageModel {
  Vocabulary vocab;
  LMParams params;
  std::vector<double> embedding;  // V x E
  std::vector<LstmLayer> layers;
  std::vector<double> w_out;  // V x H
  std::vector<double> b_out;  // V

  int vocab_size() const { return vocab.size(); }

  template <typename Fn>
  void visit_tensors(Fn&& fn) {
    fn(embedding);
    for (auto& l : layers) {
      fn(l.wx);
      fn(l.wh);
      fn(l.b);
    }
    fn(w_out);
    fn(b_out);
  }
  template <typename Fn>
  void visit_tensors(Fn&& fn) const {
    fn(embedding);
    for (const auto& l : layers) {
      fn(l.wx);
      fn(l.wh);
      fn(l.b);
    }
    fn(w_out);
    fn(b_out);
  }
};

/// Mirrors the model's tensor structure; used for gradients and Adam state.
struct LmTensors {
  std::vector<double> embedding;
  std::vector<LstmLayer> layers;
  std::vector<double> w_out;
  std::vector<double> b_out;

  static LmTensors zeros_like(const LanguageModel& m) {
    LmTensors t;
    t.embedding.assign(m.embedding.size(), 0.0);
    t.layers.resize(m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      t.layers[l].wx.assign(m.layers[l].wx.size(), 0.0);
      t.layers[l].wh.assign(m.layers[l].wh.size(), 0.0);
      t.layers[l].b.assign(m.layers[l].b.size(), 0.0);
    }
    t.w_out.assign(m.w_out.size(), 0.0);
    t.b_out.assign(m.b_out.size(), 0.0);
    return t;
  }

  template <typename Fn>
  void visit(Fn&& fn) {
    fn(embedding);
    for (auto& l : layers) {
      fn(l.wx);
      fn(l.wh);
      fn(l.b);
    }
    fn(w_out);
    fn(b_out);
  }
};

/// Per-layer recurrent state for a batch of lanes: h then c, each B x H.
struct LmState {
  std::vector<std::vector<double>> h;  // [layer][B*H]
  std::vector<std::vector<double>> c;

  static LmState zeros(const LanguageModel& m, std::size_t lanes) {
    LmState s;
    std::size_t n = lanes * static_cast<std::size_t>(m.params.hidden_dim);
    s.h.assign(m.layers.size(), std::vector<double>(n, 0.0));
    s.c.assign(m.layers.size(), std::vector<double>(n, 0.0));
    return s;
  }
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y (rows) = W (rows x cols, row-major) * x (cols), accumulated into y.
inline void matvec_add(const double* w, const double* x, double* y,
                       std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += wr[c] * x[c];
    y[r] += s;
  }
}

// x_grad (cols) += W^T * dy
inline void matvec_t_add(const double* w, const double* dy, double* x_grad,
                         std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w + r * cols;
    double d = dy[r];
    if (d == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) x_grad[c] += wr[c] * d;
  }
}

// W_grad (rows x cols) += dy (rows) outer x (cols)
inline void outer_add(const double* dy, const double* x, double* w_grad,
                      std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double d = dy[r];
    if (d == 0.0) continue;
    double* wr = w_grad + r * cols;
    for (std::size_t c = 0; c < cols; ++c) wr[c] += d * x[c];
  }
}

// Activations of one LSTM layer over a window; everything the backward pass
// needs is kept.
struct LayerTrace {
  // [t * B * H + lane * H + j], gate values post-nonlinearity
  std::vector<double> gi, gf, gg, go;
  std::vector<double> c, h;
};

struct WindowTrace {
  std::size_t T = 0, B = 0;
  std::vector<double> x;  // embedded inputs, [t*B*E + lane*E + j]
  std::vector<LayerTrace> layers;
  LmState initial;  // state entering the window
};

// Forward through the LSTM stack only (no output layer). Updates `state` to
// the end-of-window state and fills the trace when given.
inline void forward_lstm(const LanguageModel& m,
                         const std::vector<std::vector<int>>& ids,
                         std::size_t t0, std::size_t T, LmState& state,
                         WindowTrace* trace) {
  const std::size_t B = ids.size();
  const std::size_t E = static_cast<std::size_t>(m.params.emb_dim);
  const std::size_t H = static_cast<std::size_t>(m.params.hidden_dim);
  const std::size_t L = m.layers.size();

  if (trace) {
    trace->T = T;
    trace->B = B;
    trace->x.assign(T * B * E, 0.0);
    trace->layers.assign(L, {});
    for (auto& lt : trace->layers) {
      lt.gi.assign(T * B * H, 0.0);
      lt.gf.assign(T * B * H, 0.0);
      lt.gg.assign(T * B * H, 0.0);
      lt.go.assign(T * B * H, 0.0);
      lt.c.assign(T * B * H, 0.0);
      lt.h.assign(T * B * H, 0.0);
    }
    trace->initial = state;
  }

  std::vector<double> a(4 * H);
  std::vector<double> xbuf(E);
  std::vector<double> hbuf(H);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t lane = 0; lane < B; ++lane) {
      int token = ids[lane][t0 + t];
      const double* emb = m.embedding.data() + static_cast<std::size_t>(token) * E;
      std::copy(emb, emb + E, xbuf.begin());
      if (trace)
        std::copy(xbuf.begin(), xbuf.end(),
                  trace->x.begin() + (t * B + lane) * E);

      const double* input = xbuf.data();
      std::size_t in_dim = E;
      for (std::size_t l = 0; l < L; ++l) {
        const LstmLayer& ly = m.layers[l];
        double* h_prev = state.h[l].data() + lane * H;
        double* c_prev = state.c[l].data() + lane * H;
        std::copy(ly.b.begin(), ly.b.end(), a.begin());
        matvec_add(ly.wx.data(), input, a.data(), 4 * H, in_dim);
        matvec_add(ly.wh.data(), h_prev, a.data(), 4 * H, H);
        for (std::size_t j = 0; j < H; ++j) {
          double i = sigmoid(a[j]);
          double f = sigmoid(a[H + j]);
          double g = std::tanh(a[2 * H + j]);
          double o = sigmoid(a[3 * H + j]);
          double cc = f * c_prev[j] + i * g;
          double hh = o * std::tanh(cc);
          if (trace) {
            LayerTrace& lt = trace->layers[l];
            std::size_t idx = (t * B + lane) * H + j;
            lt.gi[idx] = i;
            lt.gf[idx] = f;
            lt.gg[idx] = g;
            lt.go[idx] = o;
            lt.c[idx] = cc;
            lt.h[idx] = hh;
          }
          c_prev[j] = cc;
          hbuf[j] = hh;
        }
        std::copy(hbuf.begin(), hbuf.end(), state.h[l].data() + lane * H);
        input = state.h[l].data() + lane * H;
        in_dim = H;
      }
    }
  }
}

// Softmax cross-entropy over the final hidden states of a traced window.
// Accumulates the mean loss; when `grads` is given, also accumulates output
// layer gradients and writes d(top hidden) into dh_top.
inline double output_pass(const LanguageModel& m, const WindowTrace& trace,
                          const std::vector<std::vector<int>>& ids,
                          std::size_t t0, LmTensors* grads,
                          std::vector<double>* dh_top) {
  const std::size_t B = trace.B, T = trace.T;
  const std::size_t H = static_cast<std::size_t>(m.params.hidden_dim);
  const std::size_t V = static_cast<std::size_t>(m.vocab_size());
  const LayerTrace& top = trace.layers.back();
  const double inv_n = 1.0 / static_cast<double>(T * B);

  std::vector<double> logits(V);
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t lane = 0; lane < B; ++lane) {
      const double* h = top.h.data() + (t * B + lane) * H;
      std::copy(m.b_out.begin(), m.b_out.end(), logits.begin());
      matvec_add(m.w_out.data(), h, logits.data(), V, H);
      double mx = logits[0];
      for (double v : logits) mx = std::max(mx, v);
      double z = 0.0;
      for (double v : logits) z += std::exp(v - mx);
      int target = ids[lane][t0 + t + 1];
      double log_p =
          logits[static_cast<std::size_t>(target)] - mx - std::log(z);
      total -= log_p;
      if (grads) {
        double* dh = dh_top->data() + (t * B + lane) * H;
        for (std::size_t v = 0; v < V; ++v) {
          double p = std::exp(logits[v] - mx) / z;
          double dl = (p - (static_cast<int>(v) == target ? 1.0 : 0.0)) * inv_n;
          grads->b_out[v] += dl;
          if (dl != 0.0) {
            double* wr = grads->w_out.data() + v * H;
            const double* mw = m.w_out.data() + v * H;
            for (std::size_t j = 0; j < H; ++j) {
              wr[j] += dl * h[j];
              dh[j] += dl * mw[j];
            }
          }
        }
      }
    }
  }
  return total * inv_n;
}

// Backpropagation through the traced LSTM window; gradients of the recurrent
// state entering the window are dropped (truncated BPTT).
inline void backward_lstm(const LanguageModel& m, const WindowTrace& trace,
                          const std::vector<std::vector<int>>& ids,
                          std::size_t t0, const std::vector<double>& dh_top,
                          LmTensors& grads) {
  const std::size_t B = trace.B, T = trace.T;
  const std::size_t E = static_cast<std::size_t>(m.params.emb_dim);
  const std::size_t H = static_cast<std::size_t>(m.params.hidden_dim);
  const std::size_t L = m.layers.size();

  // dh/dc flowing backward through time, per layer per lane.
  std::vector<std::vector<double>> dh(L, std::vector<double>(B * H, 0.0));
  std::vector<std::vector<double>> dc(L, std::vector<double>(B * H, 0.0));
  std::vector<double> da(4 * H);
  std::vector<double> dx_lower(std::max(E, H));

  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t lane = 0; lane < B; ++lane) {
      // Inject the loss gradient at the top layer.
      {
        const double* src = dh_top.data() + (t * B + lane) * H;
        double* dst = dh[L - 1].data() + lane * H;
        for (std::size_t j = 0; j < H; ++j) dst[j] += src[j];
      }
      for (std::size_t l = L; l-- > 0;) {
        const LayerTrace& lt = trace.layers[l];
        const LstmLayer& ly = m.layers[l];
        const std::size_t idx = (t * B + lane) * H;
        double* dh_l = dh[l].data() + lane * H;
        double* dc_l = dc[l].data() + lane * H;

        const double* h_prev =
            t > 0 ? lt.h.data() + ((t - 1) * B + lane) * H
                  : trace.initial.h[l].data() + lane * H;
        const double* c_prev =
            t > 0 ? lt.c.data() + ((t - 1) * B + lane) * H
                  : trace.initial.c[l].data() + lane * H;
        const double* input = l > 0 ? trace.layers[l - 1].h.data() + idx
                                    : trace.x.data() + (t * B + lane) * E;
        const std::size_t in_dim = l > 0 ? H : E;

        for (std::size_t j = 0; j < H; ++j) {
          double i = lt.gi[idx + j], f = lt.gf[idx + j], g = lt.gg[idx + j],
                 o = lt.go[idx + j], cc = lt.c[idx + j];
          double tc = std::tanh(cc);
          double dcc = dc_l[j] + dh_l[j] * o * (1.0 - tc * tc);
          double d_o = dh_l[j] * tc;
          double d_i = dcc * g;
          double d_f = dcc * c_prev[j];
          double d_g = dcc * i;
          da[j] = d_i * i * (1.0 - i);
          da[H + j] = d_f * f * (1.0 - f);
          da[2 * H + j] = d_g * (1.0 - g * g);
          da[3 * H + j] = d_o * o * (1.0 - o);
          dc_l[j] = dcc * f;  // flows to t-1
          dh_l[j] = 0.0;      // replaced below via Wh^T
        }
        outer_add(da.data(), input, grads.layers[l].wx.data(), 4 * H, in_dim);
        outer_add(da.data(), h_prev, grads.layers[l].wh.data(), 4 * H, H);
        for (std::size_t j = 0; j < 4 * H; ++j) grads.layers[l].b[j] += da[j];
        matvec_t_add(ly.wh.data(), da.data(), dh_l, 4 * H, H);

        std::fill(dx_lower.begin(), dx_lower.begin() + in_dim, 0.0);
        matvec_t_add(ly.wx.data(), da.data(), dx_lower.data(), 4 * H, in_dim);
        if (l > 0) {
          double* dh_below = dh[l - 1].data() + lane * H;
          for (std::size_t j = 0; j < H; ++j) dh_below[j] += dx_lower[j];
        } else {
          int token = ids[lane][t0 + t];
          double* de = grads.embedding.data() + static_cast<std::size_t>(token) * E;
          for (std::size_t j = 0; j < E; ++j) de[j] += dx_lower[j];
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Construction & training

/// Allocates a model with seeded uniform(-0.05, 0.05) weights (biases
/// included) over the given vocabulary, untrained.
inline LanguageModel init_lm(Vocabulary vocab, const LMParams& params) {
  params.validate();
  LanguageModel m;
  m.vocab = std::move(vocab);
  m.params = params;
  const std::size_t V = static_cast<std::size_t>(m.vocab.size());
  const std::size_t E = static_cast<std::size_t>(params.emb_dim);
  const std::size_t H = static_cast<std::size_t>(params.hidden_dim);
  m.embedding.resize(V * E);
  m.layers.resize(static_cast<std::size_t>(params.layers));
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    std::size_t in_dim = l == 0 ? E : H;
    m.layers[l].wx.resize(4 * H * in_dim);
    m.layers[l].wh.resize(4 * H * H);
    m.layers[l].b.resize(4 * H);
  }
  m.w_out.resize(V * H);
  m.b_out.resize(V);
  Rng rng = derive_stream(params.seed, 0);
  m.visit_tensors([&](std::vector<double>& t) {
    for (double& v : t) v = rng.uniform(-0.05, 0.05);
  });
  return m;
}

/// Loss of one window (pure function of the model; used by the
/// finite-difference gradient check).
inline double window_loss(const LanguageModel& m,
                          const std::vector<std::vector<int>>& ids,
                          std::size_t t0, std::size_t T, const LmState& state0) {
  LmState state = state0;
  detail::WindowTrace trace;
  detail::forward_lstm(m, ids, t0, T, state, &trace);
  return detail::output_pass(m, trace, ids, t0, nullptr, nullptr);
}

/// Loss and analytic gradients of one window; `state0` enters detached.
/// Returns the end-of-window state through `state_out` when non-null.
inline std::pair<double, LmTensors> window_gradients(
    const LanguageModel& m, const std::vector<std::vector<int>>& ids,
    std::size_t t0, std::size_t T, const LmState& state0,
    LmState* state_out = nullptr) {
  LmState state = state0;
  detail::WindowTrace trace;
  detail::forward_lstm(m, ids, t0, T, state, &trace);
  LmTensors grads = LmTensors::zeros_like(m);
  std::vector<double> dh_top(
      T * ids.size() * static_cast<std::size_t>(m.params.hidden_dim), 0.0);
  double loss = detail::output_pass(m, trace, ids, t0, &grads, &dh_top);
  detail::backward_lstm(m, trace, ids, t0, dh_top, grads);
  if (state_out) *state_out = state;
  return {loss, std::move(grads)};
}

struct AdamState {
  LmTensors m1, m2;
  std::size_t step = 0;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
};

/// Clips the global gradient norm and applies one Adam update in place.
inline void adam_step(LanguageModel& model, LmTensors& grads, AdamState& adam,
                      double lr, double grad_clip) {
  double norm_sq = 0.0;
  grads.visit([&](std::vector<double>& g) {
    for (double v : g) norm_sq += v * v;
  });
  double norm = std::sqrt(norm_sq);
  if (grad_clip > 0.0 && norm > grad_clip) {
    double scale = grad_clip / norm;
    grads.visit([&](std::vector<double>& g) {
      for (double& v : g) v *= scale;
    });
  }
  ++adam.step;
  double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(adam.step));
  double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(adam.step));

  // Walk (weights, grad, m1, m2) in lockstep.
  std::vector<std::vector<double>*> ws, gs, m1s, m2s;
  model.visit_tensors([&](std::vector<double>& t) { ws.push_back(&t); });
  grads.visit([&](std::vector<double>& t) { gs.push_back(&t); });
  adam.m1.visit([&](std::vector<double>& t) { m1s.push_back(&t); });
  adam.m2.visit([&](std::vector<double>& t) { m2s.push_back(&t); });
  for (std::size_t i = 0; i < ws.size(); ++i) {
    auto& w = *ws[i];
    auto& g = *gs[i];
    auto& m1 = *m1s[i];
    auto& m2 = *m2s[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m1[j] = AdamState::kBeta1 * m1[j] + (1.0 - AdamState::kBeta1) * g[j];
      m2[j] = AdamState::kBeta2 * m2[j] + (1.0 - AdamState::kBeta2) * g[j] * g[j];
      w[j] -= lr * (m1[j] / bc1) / (std::sqrt(m2[j] / bc2) + AdamState::kEps);
    }
  }
}

namespace detail {

inline std::vector<int> token_stream(const LanguageModel& m,
                                     const std::vector<UserDataset>& datasets) {
  std::vector<int> stream;
  for (const auto& ds : datasets)
    for (const auto& doc : ds.documents)
      for (const auto& t : doc.tokens) {
        auto idx = m.vocab.index_of(t);
        stream.push_back(idx ? *idx : 0);  // <unk> is index 0
      }
  return stream;
}

inline std::atomic<std::uint64_t> g_training_runs{0};

}  // namespace detail

/// Number of train_lm invocations in this process; the curation phase of the
/// LM attack asserts this never moves (no shadow language models).
inline std::uint64_t training_runs() {
  return detail::g_training_runs.load();
}

struct TrainTrace {
  std::vector<double> epoch_train_ppl;
};

/// Trains the LSTM next-word model: corpus-frequency top-k vocabulary,
/// concatenated token stream reshaped into batch lanes, hidden state carried
/// across BPTT windows within an epoch, Adam with global-norm clipping.
/// Deterministic under params.seed.
inline LanguageModel train_lm(const std::vector<UserDataset>& datasets,
                              const LMParams& params,
                              TrainTrace* trace = nullptr) {
  params.validate();
  if (datasets.empty()) throw DegenerateDataError("train_lm: no datasets");
  detail::g_training_runs.fetch_add(1);

  auto vocab = corpus::build_vocab(
      datasets, corpus::VocabPolicy::top_k(params.vocab_top_k));
  LanguageModel model = init_lm(std::move(vocab), params);

  std::vector<int> stream = detail::token_stream(model, datasets);
  std::size_t lanes = static_cast<std::size_t>(params.batch);
  std::size_t lane_len = stream.size() / lanes;
  while (lanes > 1 && lane_len < 2) {
    lanes /= 2;
    lane_len = stream.size() / lanes;
  }
  if (lane_len < 2)
    throw DegenerateDataError("train_lm: token stream too small");
  std::vector<std::vector<int>> ids(lanes, std::vector<int>(lane_len));
  for (std::size_t lane = 0; lane < lanes; ++lane)
    for (std::size_t t = 0; t < lane_len; ++t)
      ids[lane][t] = stream[lane * lane_len + t];

  AdamState adam;
  adam.m1 = LmTensors::zeros_like(model);
  adam.m2 = LmTensors::zeros_like(model);

  const std::size_t bptt = static_cast<std::size_t>(params.bptt_len);
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    LmState state = LmState::zeros(model, lanes);
    double nll = 0.0;
    std::size_t tokens = 0;
    for (std::size_t t0 = 0; t0 + 1 < lane_len; t0 += bptt) {
      std::size_t T = std::min(bptt, lane_len - 1 - t0);
      LmState next;
      auto [loss, grads] = window_gradients(model, ids, t0, T, state, &next);
      adam_step(model, grads, adam, params.lr, params.grad_clip);
      state = std::move(next);
      nll += loss * static_cast<double>(T * lanes);
      tokens += T * lanes;
    }
    if (trace)
      trace->epoch_train_ppl.push_back(
          std::exp(nll / static_cast<double>(tokens)));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Label-only oracle & perplexity

namespace detail {

// Single-lane step; returns nothing, mutates state.
inline void step_one(const LanguageModel& m, int token, LmState& state) {
  std::vector<std::vector<int>> ids{{token}};
  forward_lstm(m, ids, 0, 1, state, nullptr);
}

inline int argmax_logits(const LanguageModel& m, const LmState& state) {
  const std::size_t H = static_cast<std::size_t>(m.params.hidden_dim);
  const std::size_t V = static_cast<std::size_t>(m.vocab_size());
  const double* h = state.h.back().data();
  int best = 0;
  double best_v = 0.0;
  for (std::size_t v = 0; v < V; ++v) {
    double s = m.b_out[v];
    const double* wr = m.w_out.data() + v * H;
    for (std::size_t j = 0; j < H; ++j) s += wr[j] * h[j];
    if (v == 0 || s > best_v) {  // ties keep the lowest vocab index
      best_v = s;
      best = static_cast<int>(v);
    }
  }
  return best;
}

}  // namespace detail

/// Top-1 next-word prediction from the last min(len, bptt_len) prefix tokens,
/// ties broken by lowest vocabulary index. Unknown tokens map to the dummy.
/// Label-only: no scores are exposed.
inline Token next_word_top1(const LanguageModel& model,
                            const std::vector<Token>& prefix) {
  if (prefix.empty()) throw ConfigError("next_word_top1: empty prefix");
  std::size_t bptt = static_cast<std::size_t>(model.params.bptt_len);
  std::size_t start = prefix.size() > bptt ? prefix.size() - bptt : 0;
  LmState state = LmState::zeros(model, 1);
  for (std::size_t i = start; i < prefix.size(); ++i) {
    auto idx = model.vocab.index_of(prefix[i]);
    detail::step_one(model, idx ? *idx : 0, state);
  }
  return model.vocab.word_at(detail::argmax_logits(model, state));
}

/// Stateful oracle that reuses LSTM states across queries whose prefixes
/// extend the cached one (exact for prefixes within bptt_len; longer prefixes
/// fall back to the truncated computation). Not thread-safe; create one per
/// attack task.
class CachingOracle {
 public:
  explicit CachingOracle(const LanguageModel& model)
      : model_(model), states_{LmState::zeros(model, 1)} {}

  Token operator()(const std::vector<Token>& prefix) {
    ++queries_;
    if (prefix.empty()) throw ConfigError("oracle: empty prefix");
    if (prefix.size() > static_cast<std::size_t>(model_.params.bptt_len))
      return next_word_top1(model_, prefix);
    std::vector<int> ids(prefix.size());
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      auto idx = model_.vocab.index_of(prefix[i]);
      ids[i] = idx ? *idx : 0;
    }
    std::size_t common = 0;
    while (common < ids.size() && common < cached_ids_.size() &&
           ids[common] == cached_ids_[common])
      ++common;
    cached_ids_.resize(common);
    states_.resize(common + 1);
    for (std::size_t i = common; i < ids.size(); ++i) {
      LmState next = states_.back();
      detail::step_one(model_, ids[i], next);
      states_.push_back(std::move(next));
      cached_ids_.push_back(ids[i]);
    }
    return model_.vocab.word_at(detail::argmax_logits(model_, states_.back()));
  }

  std::size_t queries() const { return queries_; }

 private:
  const LanguageModel& model_;
  std::vector<int> cached_ids_;
  std::vector<LmState> states_;  // states_[i] = state after i cached tokens
  std::size_t queries_ = 0;
};

/// exp(mean token negative log-likelihood) over the concatenated stream,
/// hidden state carried sequentially.
inline double perplexity(const LanguageModel& model,
                         const std::vector<UserDataset>& datasets) {
  if (datasets.empty()) throw DegenerateDataError("perplexity: no datasets");
  std::vector<int> stream = detail::token_stream(model, datasets);
  if (stream.size() < 2)
    throw DegenerateDataError("perplexity: token stream too small");

  const std::size_t H = static_cast<std::size_t>(model.params.hidden_dim);
  const std::size_t V = static_cast<std::size_t>(model.vocab_size());
  LmState state = LmState::zeros(model, 1);
  std::vector<double> logits(V);
  double nll = 0.0;
  for (std::size_t i = 0; i + 1 < stream.size(); ++i) {
    detail::step_one(model, stream[i], state);
    const double* h = state.h.back().data();
    std::copy(model.b_out.begin(), model.b_out.end(), logits.begin());
    detail::matvec_add(model.w_out.data(), h, logits.data(), V, H);
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
#ifndef NDEBUG
    {
      double sum = 0.0;
      for (double v : logits) sum += std::exp(v - mx) / z;
      milab::detail::check(std::abs(sum - 1.0) < 1e-6, "softmax not normalized");
    }
#endif
    nll -= logits[static_cast<std::size_t>(stream[i + 1])] - mx - std::log(z);
  }
  return std::exp(nll / static_cast<double>(stream.size() - 1));
}

// ---------------------------------------------------------------------------
// Sentences

struct Sentence {
  std::string doc_id;
  std::size_t index = 0;  // position of the sentence within its document
  std::vector<Token> tokens;
};

inline std::vector<Sentence> sentences_of(const Document& doc) {
  std::vector<Sentence> out;
  std::size_t start = 0, idx = 0;
  auto cut = [&](std::size_t end) {
    if (end > start)
      out.push_back({doc.doc_id, idx++,
                     std::vector<Token>(doc.tokens.begin() + static_cast<std::ptrdiff_t>(start),
                                        doc.tokens.begin() + static_cast<std::ptrdiff_t>(end))});
    start = end;
  };
  for (std::size_t b : doc.sentence_breaks) cut(b);
  cut(doc.tokens.size());
  return out;
}

inline std::vector<Sentence> sentences_of(const UserDataset& ds) {
  std::vector<Sentence> out;
  for (const auto& doc : ds.documents) {
    auto s = sentences_of(doc);
    out.insert(out.end(), std::make_move_iterator(s.begin()),
               std::make_move_iterator(s.end()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint: versioned binary, little-endian IEEE-754 doubles.

namespace detail {

inline void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint64_t read_u64(std::ifstream& in, const char* what) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw FormatError(std::string("checkpoint truncated at ") + what);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const LanguageModel& m,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write("MILABLM1", 8);
  detail::write_u64(out, static_cast<std::uint64_t>(m.vocab.size()));
  detail::write_u64(out, static_cast<std::uint64_t>(m.params.layers));
  detail::write_u64(out, static_cast<std::uint64_t>(m.params.emb_dim));
  detail::write_u64(out, static_cast<std::uint64_t>(m.params.hidden_dim));
  detail::write_u64(out, static_cast<std::uint64_t>(m.params.bptt_len));
  for (int i = 0; i < m.vocab.size(); ++i) {
    const Token& w = m.vocab.word_at(i);
    detail::write_u64(out, w.size());
    out.write(w.data(), static_cast<std::streamsize>(w.size()));
    detail::write_u64(out, m.vocab.freq_at(i));
  }
  m.visit_tensors([&](const std::vector<double>& t) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  });
}

inline LanguageModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, "MILABLM1", 8) != 0)
    throw FormatError("bad checkpoint magic");
  std::uint64_t v = detail::read_u64(in, "vocab size");
  LMParams params;
  params.layers = static_cast<int>(detail::read_u64(in, "layers"));
  params.emb_dim = static_cast<int>(detail::read_u64(in, "emb_dim"));
  params.hidden_dim = static_cast<int>(detail::read_u64(in, "hidden_dim"));
  params.bptt_len = static_cast<int>(detail::read_u64(in, "bptt_len"));
  params.vocab_top_k = static_cast<int>(v) > 0 ? static_cast<int>(v) : 1;

  std::vector<std::pair<Token, std::uint64_t>> entries;
  for (std::uint64_t i = 0; i < v; ++i) {
    std::uint64_t len = detail::read_u64(in, "word length");
    std::string w(len, '\0');
    if (!in.read(w.data(), static_cast<std::streamsize>(len)))
      throw FormatError("checkpoint truncated in vocab");
    std::uint64_t f = detail::read_u64(in, "word frequency");
    entries.emplace_back(std::move(w), f);
  }
  LanguageModel m = init_lm(
      Vocabulary::from_entries(std::move(entries), corpus::VocabPolicy::top_k(params.vocab_top_k)),
      params);
  m.visit_tensors([&](std::vector<double>& t) {
    if (!in.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw FormatError("checkpoint truncated in weights");
  });
  return m;
}

}  // namespace milab::lm

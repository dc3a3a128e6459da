// src/network.cc
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "scriptine/network.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scriptine/error.h"

namespace scriptine {

namespace {

template <typename Real>
using MapC = Eigen::Map<const Mat<Real>>;
template <typename Real>
using MapM = Eigen::Map<Mat<Real>>;

template <typename Real>
MapC<Real> view(const TensorSet<Real>& set, const std::string& name, int rows, int cols) {
  return MapC<Real>(set.at(name).data.data(), rows, cols);
}

template <typename Real>
MapM<Real> view_mut(TensorSet<Real>& set, const std::string& name, int rows, int cols) {
  return MapM<Real>(set.at(name).data.data(), rows, cols);
}

template <typename Real>
Real sigmoid(Real x) {
  return Real(1) / (Real(1) + std::exp(-x));
}

template <typename Real>
void im2col(const Mat<Real>& x, int channels, int h, int w, int kh, int kw, Mat<Real>& cols) {
  const int pad_t = (kh - 1) / 2, pad_l = (kw - 1) / 2;
  cols.setZero(static_cast<Eigen::Index>(channels) * kh * kw, static_cast<Eigen::Index>(h) * w);
  for (int c = 0; c < channels; ++c) {
    const Real* src = x.data() + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        Real* row = cols.data() + static_cast<std::size_t>((c * kh + ky) * kw + kx) * h * w;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad_t;
          if (sy < 0 || sy >= h) continue;
          const int x0 = std::max(0, pad_l - kx), x1 = std::min(w, w + pad_l - kx);
          for (int xx = x0; xx < x1; ++xx) row[y * w + xx] = src[sy * w + xx + kx - pad_l];
        }
      }
    }
  }
}

template <typename Real>
void col2im(const Mat<Real>& cols, int channels, int h, int w, int kh, int kw, Mat<Real>& x) {
  const int pad_t = (kh - 1) / 2, pad_l = (kw - 1) / 2;
  x.setZero(channels, static_cast<Eigen::Index>(h) * w);
  for (int c = 0; c < channels; ++c) {
    Real* dst = x.data() + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const Real* row = cols.data() + static_cast<std::size_t>((c * kh + ky) * kw + kx) * h * w;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad_t;
          if (sy < 0 || sy >= h) continue;
          const int x0 = std::max(0, pad_l - kx), x1 = std::min(w, w + pad_l - kx);
          for (int xx = x0; xx < x1; ++xx) dst[sy * w + xx + kx - pad_l] += row[y * w + xx];
        }
      }
    }
  }
}

template <typename Real>
Mat<Real> dropout_mask(int rows, int cols, double rate, RngStream& rng) {
  Mat<Real> mask(rows, cols);
  const Real scale = Real(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? Real(0) : scale;
  return mask;
}

template <typename Real>
void lstm_direction_forward(const Mat<Real>& x, const TensorSet<Real>& params, const std::string& prefix, int units,
                            bool forward, typename ForwardTrace<Real>::LstmDirection& out) {
  const int frames = static_cast<int>(x.rows());
  const int in = static_cast<int>(x.cols());
  const auto wx = view(params, prefix + ".wx", 4 * units, in);
  const auto wh = view(params, prefix + ".wh", 4 * units, units);
  const auto b = view(params, prefix + ".b", 1, 4 * units);

  Mat<Real> z = x * wx.transpose();
  z.rowwise() += b.row(0);
  out.gates.resize(frames, 4 * units);
  out.cell.resize(frames, units);
  out.cell_tanh.resize(frames, units);
  out.hidden.resize(frames, units);

  for (int s = 0; s < frames; ++s) {
    const int t = forward ? s : frames - 1 - s;
    const int p = forward ? t - 1 : t + 1;
    const bool has_prev = s > 0;
    Eigen::Matrix<Real, 1, Eigen::Dynamic> zt = z.row(t);
    if (has_prev) zt.noalias() += out.hidden.row(p) * wh.transpose();
    for (int u = 0; u < units; ++u) {
      const Real ig = sigmoid(zt[u]);
      const Real fg = sigmoid(zt[units + u]);
      const Real gg = std::tanh(zt[2 * units + u]);
      const Real og = sigmoid(zt[3 * units + u]);
      const Real c_prev = has_prev ? out.cell(p, u) : Real(0);
      const Real c = fg * c_prev + ig * gg;
      const Real ct = std::tanh(c);
      out.gates(t, u) = ig;
      out.gates(t, units + u) = fg;
      out.gates(t, 2 * units + u) = gg;
      out.gates(t, 3 * units + u) = og;
      out.cell(t, u) = c;
      out.cell_tanh(t, u) = ct;
      out.hidden(t, u) = og * ct;
    }
  }
}

// Returns d(loss)/d(input) for one direction.
template <typename Real>
Mat<Real> lstm_direction_backward(const Mat<Real>& x, const typename ForwardTrace<Real>::LstmDirection& tr,
                                  const Mat<Real>& dh_out, const TensorSet<Real>& params, TensorSet<Real>& grads,
                                  const std::string& prefix, int units, bool forward) {
  const int frames = static_cast<int>(x.rows());
  const int in = static_cast<int>(x.cols());
  const auto wx = view(params, prefix + ".wx", 4 * units, in);
  const auto wh = view(params, prefix + ".wh", 4 * units, units);

  Mat<Real> dz(frames, 4 * units);
  Mat<Real> h_prev = Mat<Real>::Zero(frames, units);
  Eigen::Matrix<Real, 1, Eigen::Dynamic> dh_next = Eigen::Matrix<Real, 1, Eigen::Dynamic>::Zero(units);
  Eigen::Matrix<Real, 1, Eigen::Dynamic> dc_next = Eigen::Matrix<Real, 1, Eigen::Dynamic>::Zero(units);

  for (int s = frames - 1; s >= 0; --s) {
    const int t = forward ? s : frames - 1 - s;
    const int p = forward ? t - 1 : t + 1;
    const bool has_prev = s > 0;
    for (int u = 0; u < units; ++u) {
      const Real ig = tr.gates(t, u), fg = tr.gates(t, units + u);
      const Real gg = tr.gates(t, 2 * units + u), og = tr.gates(t, 3 * units + u);
      const Real ct = tr.cell_tanh(t, u);
      const Real c_prev = has_prev ? tr.cell(p, u) : Real(0);
      const Real dh = dh_out(t, u) + dh_next[u];
      const Real dc = dh * og * (Real(1) - ct * ct) + dc_next[u];
      dz(t, u) = dc * gg * ig * (Real(1) - ig);
      dz(t, units + u) = dc * c_prev * fg * (Real(1) - fg);
      dz(t, 2 * units + u) = dc * ig * (Real(1) - gg * gg);
      dz(t, 3 * units + u) = dh * ct * og * (Real(1) - og);
      dc_next[u] = dc * fg;
    }
    dh_next.noalias() = dz.row(t) * wh;
    if (has_prev) h_prev.row(t) = tr.hidden.row(p);
  }

  view_mut(grads, prefix + ".wx", 4 * units, in).noalias() += dz.transpose() * x;
  view_mut(grads, prefix + ".wh", 4 * units, units).noalias() += dz.transpose() * h_prev;
  view_mut(grads, prefix + ".b", 1, 4 * units) += dz.colwise().sum();
  return dz * wx;
}

}  // namespace

template <typename Real>
Mat<Real> network_forward(const Architecture& arch, const TensorSet<Real>& params, const GrayImage& image, bool train,
                          RngStream* rng, ForwardTrace<Real>* trace_out) {
  if (image.height != arch.input_height) {
    throw ShapeError("line height " + std::to_string(image.height) + " does not match the model input height " +
                     std::to_string(arch.input_height));
  }
  if (image.width < arch.width_divisor) {
    throw ShapeError("line width " + std::to_string(image.width) + " is below the pool width product " +
                     std::to_string(arch.width_divisor));
  }
  ForwardTrace<Real> local;
  ForwardTrace<Real>& trace = trace_out ? *trace_out : local;
  trace = ForwardTrace<Real>();
  const bool dropout = train && rng != nullptr;

  int h = image.height, w = image.width, channels = 1;
  Mat<Real> act(1, static_cast<Eigen::Index>(h) * w);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) act.data()[i] = Real(1) - Real(image.pixels[i]);

  for (const auto& stage : arch.conv_stack) {
    if (const auto* c = std::get_if<ConvStage>(&stage)) {
      typename ForwardTrace<Real>::Conv tr;
      tr.width = w;
      im2col(act, channels, h, w, c->kernel_h, c->kernel_w, tr.cols);
      const auto weights = view(params, c->name + ".w", c->filters, channels * c->kernel_h * c->kernel_w);
      const auto bias = view(params, c->name + ".b", c->filters, 1);
      tr.out.noalias() = weights * tr.cols;
      tr.out.colwise() += bias.col(0);
      tr.out = tr.out.cwiseMax(Real(0));
      act = tr.out;
      channels = c->filters;
      trace.stack.emplace_back(std::move(tr));
    } else {
      const auto& p = std::get<PoolStage>(stage);
      typename ForwardTrace<Real>::Pool tr;
      tr.in_h = h, tr.in_w = w, tr.out_h = h / p.pool_h, tr.out_w = w / p.pool_w;
      Mat<Real> out(channels, static_cast<Eigen::Index>(tr.out_h) * tr.out_w);
      tr.argmax.resize(static_cast<std::size_t>(out.size()));
      for (int c = 0; c < channels; ++c) {
        const Real* src = act.data() + static_cast<std::size_t>(c) * h * w;
        for (int oy = 0; oy < tr.out_h; ++oy) {
          for (int ox = 0; ox < tr.out_w; ++ox) {
            int best = (oy * p.pool_h) * w + ox * p.pool_w;
            for (int dy = 0; dy < p.pool_h; ++dy) {
              for (int dx = 0; dx < p.pool_w; ++dx) {
                const int idx = (oy * p.pool_h + dy) * w + ox * p.pool_w + dx;
                if (src[idx] > src[best]) best = idx;
              }
            }
            const std::size_t o = static_cast<std::size_t>(c) * tr.out_h * tr.out_w + oy * tr.out_w + ox;
            out.data()[o] = src[best];
            tr.argmax[o] = best;
          }
        }
      }
      act = std::move(out);
      h = tr.out_h, w = tr.out_w;
      trace.stack.emplace_back(std::move(tr));
    }
  }

  const int frames = w;
  trace.frames = frames;
  Mat<Real> seq(frames, static_cast<Eigen::Index>(channels) * h);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int t = 0; t < frames; ++t) seq(t, c * h + y) = act(c, y * frames + t);
    }
  }

  for (const auto& stage : arch.lstms) {
    typename ForwardTrace<Real>::Lstm tr;
    tr.input = std::move(seq);
    lstm_direction_forward(tr.input, params, stage.name + ".fw", stage.units, true, tr.fw);
    lstm_direction_forward(tr.input, params, stage.name + ".bw", stage.units, false, tr.bw);
    seq.resize(frames, 2 * stage.units);
    seq << tr.fw.hidden, tr.bw.hidden;
    if (dropout && stage.dropout > 0.0) {
      tr.mask = dropout_mask<Real>(frames, 2 * stage.units, stage.dropout, *rng);
      seq = seq.cwiseProduct(tr.mask);
    }
    trace.lstms.push_back(std::move(tr));
  }
  if (arch.lstms.empty() && dropout && arch.head_dropout > 0.0) {
    trace.head_mask = dropout_mask<Real>(frames, static_cast<int>(seq.cols()), arch.head_dropout, *rng);
    seq = seq.cwiseProduct(trace.head_mask);
  }
  trace.head_input = std::move(seq);

  const auto wp = view(params, "proj.w", arch.classes, arch.projection_input);
  const auto bp = view(params, "proj.b", 1, arch.classes);
  Mat<Real> logits = trace.head_input * wp.transpose();
  logits.rowwise() += bp.row(0);
  return logits;
}

template <typename Real>
void network_backward(const Architecture& arch, const TensorSet<Real>& params, const ForwardTrace<Real>& trace,
                      const Mat<Real>& dlogits, TensorSet<Real>& grads) {
  const int frames = trace.frames;
  const auto wp = view(params, "proj.w", arch.classes, arch.projection_input);
  view_mut(grads, "proj.w", arch.classes, arch.projection_input).noalias() += dlogits.transpose() * trace.head_input;
  view_mut(grads, "proj.b", 1, arch.classes) += dlogits.colwise().sum();
  Mat<Real> dseq = dlogits * wp;
  if (trace.head_mask.size() > 0) dseq = dseq.cwiseProduct(trace.head_mask);

  for (int l = static_cast<int>(arch.lstms.size()) - 1; l >= 0; --l) {
    const auto& stage = arch.lstms[static_cast<std::size_t>(l)];
    const auto& tr = trace.lstms[static_cast<std::size_t>(l)];
    if (tr.mask.size() > 0) dseq = dseq.cwiseProduct(tr.mask);
    const Mat<Real> dfw = dseq.leftCols(stage.units);
    const Mat<Real> dbw = dseq.rightCols(stage.units);
    Mat<Real> dx = lstm_direction_backward<Real>(tr.input, tr.fw, dfw, params, grads, stage.name + ".fw",
                                                 stage.units, true);
    dx += lstm_direction_backward<Real>(tr.input, tr.bw, dbw, params, grads, stage.name + ".bw", stage.units, false);
    dseq = std::move(dx);
  }

  if (arch.conv_stack.empty()) return;
  const int channels = arch.feature_channels, h = arch.feature_height;
  Mat<Real> dact(channels, static_cast<Eigen::Index>(h) * frames);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int t = 0; t < frames; ++t) dact(c, y * frames + t) = dseq(t, c * h + y);
    }
  }

  for (int i = static_cast<int>(arch.conv_stack.size()) - 1; i >= 0; --i) {
    const auto& stage = arch.conv_stack[static_cast<std::size_t>(i)];
    const auto& st = trace.stack[static_cast<std::size_t>(i)];
    if (const auto* c = std::get_if<ConvStage>(&stage)) {
      const auto& tr = std::get<typename ForwardTrace<Real>::Conv>(st);
      const int k = c->in_channels * c->kernel_h * c->kernel_w;
      Mat<Real> dout = dact.cwiseProduct((tr.out.array() > Real(0)).template cast<Real>().matrix());
      view_mut(grads, c->name + ".w", c->filters, k).noalias() += dout * tr.cols.transpose();
      view_mut(grads, c->name + ".b", c->filters, 1) += dout.rowwise().sum();
      if (i == 0) break;
      const auto weights = view(params, c->name + ".w", c->filters, k);
      Mat<Real> dcols = weights.transpose() * dout;
      col2im(dcols, c->in_channels, c->height, tr.width, c->kernel_h, c->kernel_w, dact);
    } else {
      const auto& p = std::get<PoolStage>(stage);
      const auto& tr = std::get<typename ForwardTrace<Real>::Pool>(st);
      Mat<Real> din = Mat<Real>::Zero(p.in_channels, static_cast<Eigen::Index>(tr.in_h) * tr.in_w);
      const std::size_t per_channel = static_cast<std::size_t>(tr.out_h) * tr.out_w;
      for (int c = 0; c < p.in_channels; ++c) {
        for (std::size_t o = 0; o < per_channel; ++o) {
          din(c, tr.argmax[c * per_channel + o]) += dact.data()[c * per_channel + o];
        }
      }
      dact = std::move(din);
    }
  }
}

template Mat<float> network_forward(const Architecture&, const TensorSet<float>&, const GrayImage&, bool, RngStream*,
                                    ForwardTrace<float>*);
template Mat<double> network_forward(const Architecture&, const TensorSet<double>&, const GrayImage&, bool,
                                     RngStream*, ForwardTrace<double>*);
template void network_backward(const Architecture&, const TensorSet<float>&, const ForwardTrace<float>&,
                               const Mat<float>&, TensorSet<float>&);
template void network_backward(const Architecture&, const TensorSet<double>&, const ForwardTrace<double>&,
                               const Mat<double>&, TensorSet<double>&);

}  // namespace scriptine

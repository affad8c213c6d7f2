#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "swp/tensor.hpp"

namespace swp {

// Layer-granular reverse-mode autodiff. A forward op optionally records one
// closure on the tape; running the tape backward visits every recorded op
// exactly once, in reverse order of recording. Accumulation order inside a
// single tape is therefore fixed, which is what makes training bitwise
// reproducible.

template <typename T>
struct Var {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first use
  bool requires_grad = true;

  void ensure_grad() {
    if (grad.shape != value.shape) grad = Tensor<T>(value.shape);
  }
};

template <typename T>
using VarPtr = std::shared_ptr<Var<T>>;

template <typename T>
VarPtr<T> make_var(Tensor<T> value, bool requires_grad = true) {
  auto v = std::make_shared<Var<T>>();
  v->value = std::move(value);
  v->requires_grad = requires_grad;
  return v;
}

// Named trainable tensor with a persistent gradient buffer. Parameters are
// owned by the network (they outlive any tape recorded against them).
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  bool present() const { return !value.data.empty(); }
  void zero_grad() {
    if (grad.shape != value.shape) grad = Tensor<T>(value.shape);
    std::fill(grad.data.begin(), grad.data.end(), T(0));
  }
};

template <typename T>
class Tape {
public:
  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

  bool consumed() const { return consumed_; }
  std::size_t size() const { return steps_.size(); }

  void run_backward() {
    require(!consumed_, ErrorKind::Shape, "tape already consumed");
    consumed_ = true;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

private:
  std::vector<std::function<void()>> steps_;
  bool consumed_ = false;
};

// Seeds the output gradient and replays the tape. Gradients land in the
// Param::grad buffers; parameters the forward never touched keep whatever
// zero_grad left there.
template <typename T>
void backward(Tape<T>& tape, Var<T>& output, const Tensor<T>& seed) {
  require(seed.shape == output.value.shape, ErrorKind::Shape,
          "seed gradient shape " + seed.shape_str() + " != output shape " +
              output.value.shape_str());
  output.ensure_grad();
  for (std::size_t i = 0; i < seed.data.size(); ++i) output.grad.data[i] += seed.data[i];
  tape.run_backward();
}

template <typename T>
void backward_scalar(Tape<T>& tape, Var<T>& output) {
  Tensor<T> seed(output.value.shape);
  require(seed.numel() == 1, ErrorKind::Shape, "backward_scalar needs a scalar output");
  seed.data[0] = T(1);
  backward(tape, output, seed);
}

inline int conv_out_extent(int in, int pad, int kernel, int stride, const char* what) {
  int span = in + 2 * pad - kernel;
  require(span >= 0, ErrorKind::Shape, std::string(what) + ": kernel larger than padded input");
  require(span % stride == 0, ErrorKind::Shape,
          std::string(what) + ": output extent not exact (in=" + std::to_string(in) +
              " pad=" + std::to_string(pad) + " k=" + std::to_string(kernel) +
              " stride=" + std::to_string(stride) + ")");
  return span / stride + 1;
}

// 2-d cross-correlation over a channel-sliced view of a full-width kernel.
// `out_channels` selects the lowest-index filters; the input's channel count
// selects the lowest-index input channels of each filter. Reads and gradient
// writes go straight to the full tensors, so updates flow back to shared
// storage without any copying.
template <typename T>
VarPtr<T> conv2d(Tape<T>* tape, const VarPtr<T>& x, Param<T>& w, Param<T>& b, int stride, int pad,
                 int out_channels) {
  require(x->value.rank() == 4, ErrorKind::Shape, "conv2d input must be [b,c,h,w]");
  require(w.value.rank() == 4, ErrorKind::Shape, "conv2d weight must be [co,ci,kh,kw]");
  const int B = static_cast<int>(x->value.dim(0));
  const int Cin = static_cast<int>(x->value.dim(1));
  const int H = static_cast<int>(x->value.dim(2));
  const int W = static_cast<int>(x->value.dim(3));
  const int CoFull = static_cast<int>(w.value.dim(0));
  const int CiFull = static_cast<int>(w.value.dim(1));
  const int KH = static_cast<int>(w.value.dim(2));
  const int KW = static_cast<int>(w.value.dim(3));
  const int Co = out_channels;
  require(Co >= 1 && Co <= CoFull, ErrorKind::Shape,
          "conv2d: sliced out-channels " + std::to_string(Co) + " outside [1," +
              std::to_string(CoFull) + "]");
  require(Cin <= CiFull, ErrorKind::Shape,
          "conv2d: input channels " + std::to_string(Cin) + " exceed kernel in-channels " +
              std::to_string(CiFull));
  require(static_cast<int>(b.value.numel()) == CoFull, ErrorKind::Shape,
          "conv2d: bias length != out-channels");
  const int OH = conv_out_extent(H, pad, KH, stride, "conv2d h");
  const int OW = conv_out_extent(W, pad, KW, stride, "conv2d w");

  auto y = make_var(Tensor<T>({(std::size_t)B, (std::size_t)Co, (std::size_t)OH, (std::size_t)OW}));
  const T* xd = x->value.ptr();
  const T* wd = w.value.ptr();
  const T* bd = b.value.ptr();
  T* yd = y->value.ptr();
  const std::size_t xCS = (std::size_t)H * W;           // channel stride in x
  const std::size_t wFS = (std::size_t)CiFull * KH * KW;  // filter stride in w
  for (int bi = 0; bi < B; ++bi) {
    const T* xb = xd + (std::size_t)bi * Cin * xCS;
    T* yb = yd + (std::size_t)bi * Co * OH * OW;
    for (int oc = 0; oc < Co; ++oc) {
      const T* wf = wd + (std::size_t)oc * wFS;
      T* yc = yb + (std::size_t)oc * OH * OW;
      for (int oh = 0; oh < OH; ++oh) {
        for (int ow = 0; ow < OW; ++ow) {
          T acc = bd[oc];
          const int ih0 = oh * stride - pad;
          const int iw0 = ow * stride - pad;
          for (int ic = 0; ic < Cin; ++ic) {
            const T* xc = xb + (std::size_t)ic * xCS;
            const T* wk = wf + (std::size_t)ic * KH * KW;
            for (int r = 0; r < KH; ++r) {
              const int ih = ih0 + r;
              if (ih < 0 || ih >= H) continue;
              const T* xrow = xc + (std::size_t)ih * W;
              const T* wrow = wk + (std::size_t)r * KW;
              for (int c = 0; c < KW; ++c) {
                const int iw = iw0 + c;
                if (iw < 0 || iw >= W) continue;
                acc += xrow[iw] * wrow[c];
              }
            }
          }
          yc[(std::size_t)oh * OW + ow] = acc;
        }
      }
    }
  }

  if (tape) {
    VarPtr<T> xin = x;
    Param<T>* wp = &w;
    Param<T>* bp = &b;
    VarPtr<T> yout = y;
    tape->record([xin, wp, bp, yout, stride, pad, B, Cin, H, W, Co, KH, KW, OH, OW, xCS, wFS]() {
      const T* gy = yout->grad.ptr();
      const T* xd2 = xin->value.ptr();
      const T* wd2 = wp->value.ptr();
      T* gw = wp->grad.ptr();
      T* gb = bp->grad.ptr();
      const bool need_gx = xin->requires_grad;
      if (need_gx) xin->ensure_grad();
      T* gx = need_gx ? xin->grad.ptr() : nullptr;
      for (int bi = 0; bi < B; ++bi) {
        const T* xb = xd2 + (std::size_t)bi * Cin * xCS;
        T* gxb = need_gx ? gx + (std::size_t)bi * Cin * xCS : nullptr;
        const T* gyb = gy + (std::size_t)bi * Co * OH * OW;
        for (int oc = 0; oc < Co; ++oc) {
          const T* wf = wd2 + (std::size_t)oc * wFS;
          T* gwf = gw + (std::size_t)oc * wFS;
          const T* gyc = gyb + (std::size_t)oc * OH * OW;
          for (int oh = 0; oh < OH; ++oh) {
            for (int ow = 0; ow < OW; ++ow) {
              const T g = gyc[(std::size_t)oh * OW + ow];
              if (g == T(0)) continue;
              gb[oc] += g;
              const int ih0 = oh * stride - pad;
              const int iw0 = ow * stride - pad;
              for (int ic = 0; ic < Cin; ++ic) {
                const T* xc = xb + (std::size_t)ic * xCS;
                T* gxc = need_gx ? gxb + (std::size_t)ic * xCS : nullptr;
                const T* wk = wf + (std::size_t)ic * KH * KW;
                T* gwk = gwf + (std::size_t)ic * KH * KW;
                for (int r = 0; r < KH; ++r) {
                  const int ih = ih0 + r;
                  if (ih < 0 || ih >= H) continue;
                  for (int c = 0; c < KW; ++c) {
                    const int iw = iw0 + c;
                    if (iw < 0 || iw >= W) continue;
                    gwk[(std::size_t)r * KW + c] += g * xc[(std::size_t)ih * W + iw];
                    if (need_gx) gxc[(std::size_t)ih * W + iw] += g * wk[(std::size_t)r * KW + c];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return y;
}

// Fully connected layer over the flattened trailing dims of x. Slicing works
// the same way as conv2d: prefix rows (out) and prefix columns (in) of the
// full weight matrix.
template <typename T>
VarPtr<T> dense(Tape<T>* tape, const VarPtr<T>& x, Param<T>& w, Param<T>& b, int out_features) {
  const int B = static_cast<int>(x->value.dim(0));
  const int In = static_cast<int>(x->value.numel() / x->value.dim(0));
  const int OutFull = static_cast<int>(w.value.dim(0));
  const int InFull = static_cast<int>(w.value.dim(1));
  require(In <= InFull, ErrorKind::Shape,
          "dense: input features " + std::to_string(In) + " exceed weight columns " +
              std::to_string(InFull));
  require(out_features >= 1 && out_features <= OutFull, ErrorKind::Shape,
          "dense: sliced out-features outside weight rows");
  const int Out = out_features;

  auto y = make_var(Tensor<T>({(std::size_t)B, (std::size_t)Out}));
  const T* xd = x->value.ptr();
  const T* wd = w.value.ptr();
  const T* bd = b.value.ptr();
  T* yd = y->value.ptr();
  for (int bi = 0; bi < B; ++bi) {
    const T* xr = xd + (std::size_t)bi * In;
    T* yr = yd + (std::size_t)bi * Out;
    for (int o = 0; o < Out; ++o) {
      const T* wr = wd + (std::size_t)o * InFull;
      T acc = bd[o];
      for (int i = 0; i < In; ++i) acc += xr[i] * wr[i];
      yr[o] = acc;
    }
  }

  if (tape) {
    VarPtr<T> xin = x;
    Param<T>* wp = &w;
    Param<T>* bp = &b;
    VarPtr<T> yout = y;
    tape->record([xin, wp, bp, yout, B, In, InFull, Out]() {
      const T* gy = yout->grad.ptr();
      const T* xd2 = xin->value.ptr();
      const T* wd2 = wp->value.ptr();
      T* gw = wp->grad.ptr();
      T* gb = bp->grad.ptr();
      const bool need_gx = xin->requires_grad;
      if (need_gx) xin->ensure_grad();
      T* gx = need_gx ? xin->grad.ptr() : nullptr;
      for (int bi = 0; bi < B; ++bi) {
        const T* xr = xd2 + (std::size_t)bi * In;
        T* gxr = need_gx ? gx + (std::size_t)bi * In : nullptr;
        const T* gyr = gy + (std::size_t)bi * Out;
        for (int o = 0; o < Out; ++o) {
          const T g = gyr[o];
          if (g == T(0)) continue;
          gb[o] += g;
          const T* wr = wd2 + (std::size_t)o * InFull;
          T* gwr = gw + (std::size_t)o * InFull;
          for (int i = 0; i < In; ++i) {
            gwr[i] += g * xr[i];
            if (need_gx) gxr[i] += g * wr[i];
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
VarPtr<T> relu(Tape<T>* tape, const VarPtr<T>& x) {
  auto y = make_var(Tensor<T>(x->value.shape));
  const std::size_t n = x->value.numel();
  for (std::size_t i = 0; i < n; ++i) {
    T v = x->value.data[i];
    y->value.data[i] = v > T(0) ? v : T(0);
  }
  if (tape) {
    VarPtr<T> xin = x;
    VarPtr<T> yout = y;
    tape->record([xin, yout, n]() {
      if (!xin->requires_grad) return;
      xin->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        if (xin->value.data[i] > T(0)) xin->grad.data[i] += yout->grad.data[i];
      }
    });
  }
  return y;
}

// Max pooling; first maximum in scan order wins on ties. Every window must
// cover at least one valid input cell.
template <typename T>
VarPtr<T> maxpool2d(Tape<T>* tape, const VarPtr<T>& x, int kh, int kw, int stride, int pad) {
  require(x->value.rank() == 4, ErrorKind::Shape, "maxpool input must be [b,c,h,w]");
  const int B = static_cast<int>(x->value.dim(0));
  const int C = static_cast<int>(x->value.dim(1));
  const int H = static_cast<int>(x->value.dim(2));
  const int W = static_cast<int>(x->value.dim(3));
  const int OH = conv_out_extent(H, pad, kh, stride, "maxpool h");
  const int OW = conv_out_extent(W, pad, kw, stride, "maxpool w");

  auto y = make_var(Tensor<T>({(std::size_t)B, (std::size_t)C, (std::size_t)OH, (std::size_t)OW}));
  auto argmax = std::make_shared<std::vector<std::size_t>>(y->value.numel());
  const T* xd = x->value.ptr();
  T* yd = y->value.ptr();
  std::size_t oi = 0;
  for (int bi = 0; bi < B; ++bi) {
    for (int c = 0; c < C; ++c) {
      const T* xc = xd + ((std::size_t)bi * C + c) * H * W;
      const std::size_t base = ((std::size_t)bi * C + c) * H * W;
      for (int oh = 0; oh < OH; ++oh) {
        for (int ow = 0; ow < OW; ++ow, ++oi) {
          bool found = false;
          T best = T(0);
          std::size_t best_idx = 0;
          for (int r = 0; r < kh; ++r) {
            const int ih = oh * stride - pad + r;
            if (ih < 0 || ih >= H) continue;
            for (int cc = 0; cc < kw; ++cc) {
              const int iw = ow * stride - pad + cc;
              if (iw < 0 || iw >= W) continue;
              T v = xc[(std::size_t)ih * W + iw];
              if (!found || v > best) {
                found = true;
                best = v;
                best_idx = base + (std::size_t)ih * W + iw;
              }
            }
          }
          require(found, ErrorKind::Shape, "maxpool window has no valid input cell");
          yd[oi] = best;
          (*argmax)[oi] = best_idx;
        }
      }
    }
  }

  if (tape) {
    VarPtr<T> xin = x;
    VarPtr<T> yout = y;
    tape->record([xin, yout, argmax]() {
      if (!xin->requires_grad) return;
      xin->ensure_grad();
      for (std::size_t i = 0; i < yout->grad.numel(); ++i)
        xin->grad.data[(*argmax)[i]] += yout->grad.data[i];
    });
  }
  return y;
}

// Mean over the batch of -log softmax(logits)[label]. Returns a scalar var;
// the numeric value is also exposed through loss_value().
template <typename T>
VarPtr<T> cross_entropy(Tape<T>* tape, const VarPtr<T>& logits, const std::vector<int>& labels) {
  require(logits->value.rank() == 2, ErrorKind::Shape, "cross_entropy logits must be [b,k]");
  const int B = static_cast<int>(logits->value.dim(0));
  const int K = static_cast<int>(logits->value.dim(1));
  require(K >= 2, ErrorKind::Shape, "cross_entropy needs at least 2 classes");
  require(static_cast<int>(labels.size()) == B, ErrorKind::Shape,
          "cross_entropy: one label per row required");
  for (int y : labels)
    require(y >= 0 && y < K, ErrorKind::Shape,
            "cross_entropy: label " + std::to_string(y) + " out of range [0," +
                std::to_string(K) + ")");

  auto probs = std::make_shared<Tensor<T>>(logits->value.shape);
  double total = 0.0;
  const T* xd = logits->value.ptr();
  for (int bi = 0; bi < B; ++bi) {
    const T* row = xd + (std::size_t)bi * K;
    double mx = static_cast<double>(row[0]);
    for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(row[k]));
    double denom = 0.0;
    for (int k = 0; k < K; ++k) denom += std::exp(static_cast<double>(row[k]) - mx);
    const double log_denom = std::log(denom);
    for (int k = 0; k < K; ++k) {
      double lp = static_cast<double>(row[k]) - mx - log_denom;
      probs->data[(std::size_t)bi * K + k] = static_cast<T>(std::exp(lp));
      if (k == labels[bi]) total -= lp;
    }
  }
  auto loss = make_var(Tensor<T>({1}));
  loss->value.data[0] = static_cast<T>(total / B);

  if (tape) {
    VarPtr<T> xin = logits;
    VarPtr<T> lout = loss;
    auto labs = std::make_shared<std::vector<int>>(labels);
    tape->record([xin, lout, probs, labs, B, K]() {
      if (!xin->requires_grad) return;
      xin->ensure_grad();
      const T g = lout->grad.data[0];
      const T inv_b = static_cast<T>(1.0 / B);
      for (int bi = 0; bi < B; ++bi) {
        for (int k = 0; k < K; ++k) {
          T p = probs->data[(std::size_t)bi * K + k];
          T delta = (k == (*labs)[bi]) ? T(1) : T(0);
          xin->grad.data[(std::size_t)bi * K + k] += g * (p - delta) * inv_b;
        }
      }
    });
  }
  return loss;
}

// Distillation loss: sum of squared differences over every element, divided
// by the channel count of Y only. The target is a plain tensor, so no
// gradient can ever flow into it.
template <typename T>
VarPtr<T> mse_stage_loss(Tape<T>* tape, const VarPtr<T>& y, const Tensor<T>& target) {
  require(y->value.shape == target.shape, ErrorKind::Shape,
          "mse_stage_loss: shape mismatch " + y->value.shape_str() + " vs " + target.shape_str());
  require(y->value.rank() >= 2, ErrorKind::Shape, "mse_stage_loss needs [b,F,...]");
  const double F = static_cast<double>(y->value.dim(1));
  double total = 0.0;
  for (std::size_t i = 0; i < y->value.numel(); ++i) {
    double d = static_cast<double>(y->value.data[i]) - static_cast<double>(target.data[i]);
    total += d * d;
  }
  auto loss = make_var(Tensor<T>({1}));
  loss->value.data[0] = static_cast<T>(total / F);

  if (tape) {
    VarPtr<T> yin = y;
    VarPtr<T> lout = loss;
    auto tgt = std::make_shared<Tensor<T>>(target);
    tape->record([yin, lout, tgt, F]() {
      if (!yin->requires_grad) return;
      yin->ensure_grad();
      const T g = lout->grad.data[0];
      const T scale = static_cast<T>(2.0 / F);
      for (std::size_t i = 0; i < yin->value.numel(); ++i)
        yin->grad.data[i] += g * scale * (yin->value.data[i] - tgt->data[i]);
    });
  }
  return loss;
}

template <typename T>
double loss_value(const VarPtr<T>& loss) {
  return static_cast<double>(loss->value.data[0]);
}

}  // namespace swp

#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "specmon/errors.hpp"
#include "specmon/neural/params.hpp"

namespace specmon::nn {

template <typename Real>
inline Real sigmoid(Real x) {
  return Real{1} / (Real{1} + std::exp(-x));
}

// Fully connected layer y = act(W x + b), W stored [out][in].
template <typename Real>
struct Dense {
  int in = 0;
  int out = 0;
  bool relu = true;
  std::size_t w = 0;
  std::size_t b = 0;

  Dense() = default;
  Dense(Params<Real>& params, const std::string& name, int in_features, int out_features, bool use_relu)
      : in(in_features), out(out_features), relu(use_relu) {
    w = params.add(name + ".weight", static_cast<std::size_t>(in) * out);
    b = params.add(name + ".bias", static_cast<std::size_t>(out));
  }

  void init(Params<Real>& params, std::mt19937_64& rng) const {
    params.init_uniform(w, static_cast<std::size_t>(in) * out, in, rng);
    params.init_uniform(b, static_cast<std::size_t>(out), in, rng);
  }

  void forward(const Params<Real>& params, std::span<const Real> x, std::span<Real> y) const {
    if (static_cast<int>(x.size()) != in || static_cast<int>(y.size()) != out) {
      throw UsageError("dense: shape mismatch");
    }
    const Real* W = params.value(w);
    const Real* B = params.value(b);
    for (int o = 0; o < out; ++o) {
      Real acc = B[o];
      const Real* row = W + static_cast<std::size_t>(o) * in;
#pragma omp simd reduction(+ : acc)
      for (int i = 0; i < in; ++i) acc += row[i] * x[i];
      y[o] = relu && acc < Real{0} ? Real{0} : acc;
    }
  }

  // `y` is the forward output; gx (optional) is accumulated into.
  void backward(Params<Real>& params, std::span<const Real> x, std::span<const Real> y, std::span<const Real> gy,
                std::span<Real> gx) const {
    const Real* W = params.value(w);
    Real* gW = params.grad(w);
    Real* gB = params.grad(b);
    for (int o = 0; o < out; ++o) {
      const Real g = relu && y[o] <= Real{0} ? Real{0} : gy[o];
      if (g == Real{0}) continue;
      gB[o] += g;
      Real* grow = gW + static_cast<std::size_t>(o) * in;
      const Real* row = W + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) grow[i] += g * x[i];
      if (!gx.empty()) {
        for (int i = 0; i < in; ++i) gx[i] += g * row[i];
      }
    }
  }

  std::size_t parameter_count() const { return static_cast<std::size_t>(in) * out + out; }
};

// Cross-correlation along the band axis with zero padding. Input and output
// are width x channels, row-major; weights are [out][k][in].
template <typename Real>
struct Conv1d {
  int in = 0;
  int out = 0;
  int kernel = 1;
  bool relu = false;
  std::size_t w = 0;
  std::size_t b = 0;

  Conv1d() = default;
  Conv1d(Params<Real>& params, const std::string& name, int in_ch, int out_ch, int k, bool use_relu)
      : in(in_ch), out(out_ch), kernel(k), relu(use_relu) {
    if (k % 2 == 0) throw UsageError("conv1d: kernel width must be odd");
    w = params.add(name + ".weight", static_cast<std::size_t>(out) * kernel * in);
    b = params.add(name + ".bias", static_cast<std::size_t>(out));
  }

  void init(Params<Real>& params, std::mt19937_64& rng) const {
    params.init_uniform(w, static_cast<std::size_t>(out) * kernel * in, in * kernel, rng);
    params.init_uniform(b, static_cast<std::size_t>(out), in * kernel, rng);
  }

  using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatMap = Eigen::Map<RowMat>;
  using ConstMatMap = Eigen::Map<const RowMat>;

  // (count * width) x (kernel * in) patch matrix; padding never crosses
  // between the `count` stacked inputs.
  void im2col(const Real* x, int width, int count, Buffer<Real>& cols) const {
    const int r = kernel / 2;
    const std::size_t row = static_cast<std::size_t>(kernel) * in;
    cols.assign(static_cast<std::size_t>(width) * count * row, Real{0});
    for (int seg = 0; seg < count; ++seg) {
      const Real* xs = x + static_cast<std::size_t>(seg) * width * in;
      Real* cs = cols.data() + static_cast<std::size_t>(seg) * width * row;
      for (int pos = 0; pos < width; ++pos) {
        for (int j = 0; j < kernel; ++j) {
          const int src = pos + j - r;
          if (src < 0 || src >= width) continue;
          std::copy_n(xs + static_cast<std::size_t>(src) * in, in, cs + pos * row + static_cast<std::size_t>(j) * in);
        }
      }
    }
  }

  // x holds `count` independent width x in inputs back to back.
  void forward(const Params<Real>& params, const Real* x, int width, Real* y, int count = 1) const {
    const int kin = kernel * in;
    const int rows = width * count;
    MatMap Y(y, rows, out);
    ConstMatMap W(params.value(w), out, kin);
    Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>> B(params.value(b), out);
    if (kernel == 1) {
      Y.noalias() = ConstMatMap(x, rows, in) * W.transpose();
    } else {
      thread_local Buffer<Real> cols;
      im2col(x, width, count, cols);
      Y.noalias() = ConstMatMap(cols.data(), rows, kin) * W.transpose();
    }
    Y.rowwise() += B;
    if (relu) Y = Y.cwiseMax(Real{0});
  }

  // gy is the gradient w.r.t. the (post-activation) output y. gx may be null.
  void backward(Params<Real>& params, const Real* x, const Real* y, const Real* gy, int width, Real* gx,
                int count = 1) const {
    const int kin = kernel * in;
    const int rows = width * count;
    thread_local Buffer<Real> gbuf, cols, gcols;
    gbuf.resize(static_cast<std::size_t>(rows) * out);
    MatMap G(gbuf.data(), rows, out);
    if (relu) {
      G = (ConstMatMap(y, rows, out).array() > Real{0}).select(ConstMatMap(gy, rows, out), Real{0});
    } else {
      G = ConstMatMap(gy, rows, out);
    }
    MatMap gW(params.grad(w), out, kin);
    Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>> gB(params.grad(b), out);
    gB += G.colwise().sum();
    ConstMatMap W(params.value(w), out, kin);
    if (kernel == 1) {
      gW.noalias() += G.transpose() * ConstMatMap(x, rows, in);
      if (gx) MatMap(gx, rows, in).noalias() += G * W;
      return;
    }
    im2col(x, width, count, cols);
    gW.noalias() += G.transpose() * ConstMatMap(cols.data(), rows, kin);
    if (!gx) return;
    gcols.resize(static_cast<std::size_t>(rows) * kin);
    MatMap GC(gcols.data(), rows, kin);
    GC.noalias() = G * W;
    const int r = kernel / 2;
    for (int seg = 0; seg < count; ++seg) {
      for (int pos = 0; pos < width; ++pos) {
        const Real* gc = gcols.data() + (static_cast<std::size_t>(seg) * width + pos) * kin;
        for (int j = 0; j < kernel; ++j) {
          const int src = pos + j - r;
          if (src < 0 || src >= width) continue;
          Real* gxr = gx + (static_cast<std::size_t>(seg) * width + src) * in;
          const Real* gcj = gc + static_cast<std::size_t>(j) * in;
          for (int i = 0; i < in; ++i) gxr[i] += gcj[i];
        }
      }
    }
  }

  std::size_t parameter_count() const { return static_cast<std::size_t>(out) * kernel * in + out; }
};

// Values cached by one ConvLSTM step for backpropagation.
template <typename Real>
struct LstmCache {
  Buffer<Real> z;       // width x (in + hidden): concatenated input and previous h
  Buffer<Real> gates;   // width x 4*hidden: i, f, o (sigmoid), g (tanh)
  Buffer<Real> c_prev;  // width x hidden
  Buffer<Real> tanh_c;  // width x hidden
};

// LSTM cell whose input and recurrent projections are convolutions along the
// band axis. With width 1 and kernel 1 it is a plain dense LSTM.
template <typename Real>
struct ConvLstm {
  int in = 0;
  int hidden = 0;
  int kernel = 1;
  Conv1d<Real> gates;

  ConvLstm() = default;
  ConvLstm(Params<Real>& params, const std::string& name, int in_ch, int hidden_ch, int k)
      : in(in_ch), hidden(hidden_ch), kernel(k), gates(params, name + ".gates", in_ch + hidden_ch, 4 * hidden_ch, k, false) {}

  void init(Params<Real>& params, std::mt19937_64& rng) const {
    gates.init(params, rng);
    Real* bias = params.value(gates.b);
    for (int h = 0; h < hidden; ++h) bias[hidden + h] = Real{1};  // forget gate
  }

  // Advances (h, c) in place by one step. `cache` may be null for inference.
  // With count > 1, x/h/c hold that many independent states back to back.
  void step(const Params<Real>& params, const Real* x, int width, Real* h, Real* c, LstmCache<Real>* cache,
            int count = 1) const {
    const int zc = in + hidden;
    const int rows = width * count;
    const std::size_t nz = static_cast<std::size_t>(rows) * zc;
    const std::size_t ng = static_cast<std::size_t>(rows) * 4 * hidden;
    const std::size_t nh = static_cast<std::size_t>(rows) * hidden;
    thread_local Buffer<Real> z_buf, g_buf;
    Buffer<Real>& z = cache ? cache->z : z_buf;
    Buffer<Real>& g = cache ? cache->gates : g_buf;
    z.resize(nz);
    g.resize(ng);
    for (int pos = 0; pos < rows; ++pos) {
      std::copy_n(x + static_cast<std::size_t>(pos) * in, in, z.data() + static_cast<std::size_t>(pos) * zc);
      std::copy_n(h + static_cast<std::size_t>(pos) * hidden, hidden, z.data() + static_cast<std::size_t>(pos) * zc + in);
    }
    gates.forward(params, z.data(), width, g.data(), count);
    if (cache) {
      cache->c_prev.assign(c, c + nh);
      cache->tanh_c.resize(nh);
    }
    using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<Mat> G(g.data(), rows, 4 * hidden);
    Eigen::Map<Mat> C(c, rows, hidden);
    Eigen::Map<Mat> H(h, rows, hidden);
    G.leftCols(3 * hidden) = G.leftCols(3 * hidden).array().logistic();
    G.rightCols(hidden) = G.rightCols(hidden).array().tanh();
    C.array() = G.middleCols(hidden, hidden).array() * C.array() +
                G.leftCols(hidden).array() * G.rightCols(hidden).array();
    thread_local Buffer<Real> tc_buf;
    Buffer<Real>& tcv = cache ? cache->tanh_c : tc_buf;
    tcv.resize(nh);
    Eigen::Map<Mat> TC(tcv.data(), rows, hidden);
    TC.array() = C.array().tanh();
    H.array() = G.middleCols(2 * hidden, hidden).array() * TC.array();
  }

  // gh: dL/dh_t (total), gc: dL/dc_t from the future step (in/out: replaced by
  // dL/dc_{t-1}). Writes dL/dx into gx (accumulate, may be null) and dL/dh_{t-1}
  // into gh_prev (overwritten).
  void backward_step(Params<Real>& params, const LstmCache<Real>& cache, const Real* gh, Real* gc, int width, Real* gx,
                     Real* gh_prev, int count = 1) const {
    const int zc = in + hidden;
    const int rows = width * count;
    const std::size_t ng = static_cast<std::size_t>(rows) * 4 * hidden;
    thread_local Buffer<Real> gpre, gz;
    gpre.assign(ng, Real{0});
    gz.assign(static_cast<std::size_t>(rows) * zc, Real{0});
    using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using CMap = Eigen::Map<const Mat>;
    CMap G(cache.gates.data(), rows, 4 * hidden);
    CMap TC(cache.tanh_c.data(), rows, hidden);
    CMap CP(cache.c_prev.data(), rows, hidden);
    CMap GH(gh, rows, hidden);
    Eigen::Map<Mat> GC(gc, rows, hidden);
    Eigen::Map<Mat> GP(gpre.data(), rows, 4 * hidden);
    const auto i = G.leftCols(hidden).array();
    const auto f = G.middleCols(hidden, hidden).array();
    const auto o = G.middleCols(2 * hidden, hidden).array();
    const auto gg = G.rightCols(hidden).array();
    thread_local Buffer<Real> dc_buf;
    dc_buf.resize(static_cast<std::size_t>(rows) * hidden);
    Eigen::Map<Mat> DC(dc_buf.data(), rows, hidden);
    DC.array() = GC.array() + GH.array() * o * (Real{1} - TC.array().square());
    GP.leftCols(hidden).array() = DC.array() * gg * i * (Real{1} - i);
    GP.middleCols(hidden, hidden).array() = DC.array() * CP.array() * f * (Real{1} - f);
    GP.middleCols(2 * hidden, hidden).array() = GH.array() * TC.array() * o * (Real{1} - o);
    GP.rightCols(hidden).array() = DC.array() * i * (Real{1} - gg.square());
    GC.array() = DC.array() * f;
    gates.backward(params, cache.z.data(), cache.gates.data(), gpre.data(), width, gz.data(), count);
    for (int pos = 0; pos < rows; ++pos) {
      const Real* gzr = gz.data() + static_cast<std::size_t>(pos) * zc;
      if (gx) {
        Real* gxr = gx + static_cast<std::size_t>(pos) * in;
        for (int i = 0; i < in; ++i) gxr[i] += gzr[i];
      }
      std::copy_n(gzr + in, hidden, gh_prev + static_cast<std::size_t>(pos) * hidden);
    }
  }

  std::size_t parameter_count() const { return gates.parameter_count(); }
};

// Q(b) = V + A(b) - mean_b A(b).
template <typename Real>
void dueling_combine(Real value, std::span<const Real> advantage, std::span<Real> q) {
  Real mean = Real{0};
  for (Real a : advantage) mean += a;
  mean /= static_cast<Real>(advantage.size());
  for (std::size_t b = 0; b < advantage.size(); ++b) q[b] = value + advantage[b] - mean;
}

// Gradients of dueling_combine: dV = sum gQ, dA(b) = gQ(b) - mean gQ.
template <typename Real>
Real dueling_backward(std::span<const Real> gq, std::span<Real> gadv) {
  Real sum = Real{0};
  for (Real g : gq) sum += g;
  const Real mean = sum / static_cast<Real>(gq.size());
  for (std::size_t b = 0; b < gq.size(); ++b) gadv[b] = gq[b] - mean;
  return sum;
}

}  // namespace specmon::nn

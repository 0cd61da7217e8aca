// Naive reference implementations used as independent oracles in tests.
// Everything here is deliberately written the slow, obvious way and kept
// free of any dependency on the library's computation paths.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "t2i/tensor.hpp"

namespace oracle {

using t2i::real;
using t2i::Tensor;

// Plain triple loop.
inline std::vector<real> matmul(const std::vector<real>& a, const std::vector<real>& b, int m,
                                int k, int n) {
  std::vector<real> c(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p)
        c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// Direct six-loop cross-correlation.
inline std::vector<real> conv2d(const std::vector<real>& x, const std::vector<real>& k,
                                const std::vector<real>& bias, int n, int c, int h, int w, int o,
                                int kh, int kw, int stride, int pad) {
  int oh = (h + 2 * pad - kh) / stride + 1;
  int ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<real> out(static_cast<std::size_t>(n) * o * oh * ow, 0.0);
  for (int ni = 0; ni < n; ++ni)
    for (int oi = 0; oi < o; ++oi)
      for (int yo = 0; yo < oh; ++yo)
        for (int xo = 0; xo < ow; ++xo) {
          real acc = bias[oi];
          for (int ci = 0; ci < c; ++ci)
            for (int ki = 0; ki < kh; ++ki)
              for (int kj = 0; kj < kw; ++kj) {
                int yi = yo * stride - pad + ki;
                int xi = xo * stride - pad + kj;
                if (yi < 0 || yi >= h || xi < 0 || xi >= w) continue;
                acc += x[((ni * c + ci) * h + yi) * w + xi] * k[((oi * c + ci) * kh + ki) * kw + kj];
              }
          out[((ni * o + oi) * oh + yo) * ow + xo] = acc;
        }
  return out;
}

// Two-pass per-channel mean and biased variance over (N, H, W).
inline void channel_stats(const std::vector<real>& x, int n, int c, int h, int w,
                          std::vector<real>* mu, std::vector<real>* var) {
  mu->assign(c, 0.0);
  var->assign(c, 0.0);
  std::int64_t m = static_cast<std::int64_t>(n) * h * w;
  for (int ci = 0; ci < c; ++ci) {
    real s = 0;
    for (int ni = 0; ni < n; ++ni)
      for (int i = 0; i < h * w; ++i) s += x[(ni * c + ci) * h * w + i];
    (*mu)[ci] = s / static_cast<real>(m);
    real sq = 0;
    for (int ni = 0; ni < n; ++ni)
      for (int i = 0; i < h * w; ++i) {
        real d = x[(ni * c + ci) * h * w + i] - (*mu)[ci];
        sq += d * d;
      }
    (*var)[ci] = sq / static_cast<real>(m);
  }
}

// exp/sum softmax in extended precision, no max subtraction.
inline std::vector<real> softmax(const std::vector<real>& x) {
  long double z = 0;
  for (real v : x) z += expl(static_cast<long double>(v));
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = static_cast<real>(expl(static_cast<long double>(x[i])) / z);
  return out;
}

inline real l2_distance(const std::vector<real>& a, const std::vector<real>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
    s += d * d;
  }
  return static_cast<real>(sqrtl(s));
}

// Explicit index map for nearest-neighbor 2x upsampling.
inline std::vector<real> upsample2x(const std::vector<real>& x, int n, int c, int h, int w) {
  std::vector<real> out(static_cast<std::size_t>(n) * c * 4 * h * w);
  for (int p = 0; p < n * c; ++p)
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j)
        out[p * 4 * h * w + i * 2 * w + j] = x[p * h * w + (i / 2) * w + (j / 2)];
  return out;
}

// Per-sub-region attention over word columns, in extended precision.
// x: [C x L], fw: [C x T] (already projected words); returns [C x L].
inline std::vector<real> vse(const std::vector<real>& x, const std::vector<real>& fw, int c, int l,
                             int t) {
  std::vector<real> out(static_cast<std::size_t>(c) * l, 0.0);
  for (int j = 0; j < l; ++j) {
    std::vector<long double> scores(t, 0.0);
    for (int ti = 0; ti < t; ++ti) {
      long double s = 0;
      for (int ci = 0; ci < c; ++ci)
        s += static_cast<long double>(x[ci * l + j]) * static_cast<long double>(fw[ci * t + ti]);
      scores[ti] = s;
    }
    long double z = 0;
    for (int ti = 0; ti < t; ++ti) z += expl(scores[ti]);
    for (int ti = 0; ti < t; ++ti) {
      long double wgt = expl(scores[ti]) / z;
      for (int ci = 0; ci < c; ++ci)
        out[ci * l + j] += static_cast<real>(wgt * static_cast<long double>(fw[ci * t + ti]));
    }
  }
  return out;
}

// Contrastive pair loss, direct formula in extended precision.
inline real contrastive(const std::vector<real>& v1, const std::vector<real>& v2, int y,
                        real alpha, real epsilon) {
  long double d = 0;
  for (std::size_t i = 0; i < v1.size(); ++i) {
    long double diff = static_cast<long double>(v1[i]) - static_cast<long double>(v2[i]);
    d += diff * diff;
  }
  d = sqrtl(d);
  if (y == 1) {
    long double m = d > alpha ? d : static_cast<long double>(alpha);
    return static_cast<real>(0.5L * m * m);
  }
  long double m = static_cast<long double>(epsilon) - d;
  if (m < 0) m = 0;
  return static_cast<real>(0.5L * m * m);
}

// Batch-mean binary cross entropy on probabilities.
inline real bce(const std::vector<real>& probs, const std::vector<real>& targets) {
  long double s = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    long double p = probs[i];
    s += -(static_cast<long double>(targets[i]) * logl(p) +
           (1.0L - static_cast<long double>(targets[i])) * logl(1.0L - p));
  }
  return static_cast<real>(s / static_cast<long double>(probs.size()));
}

}  // namespace oracle

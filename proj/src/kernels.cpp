#include "smil/kernels.hpp"

#include <algorithm>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace smil::kernels {
namespace {

// Shared bodies. `Par` toggles the OpenMP worksharing; the loop nest and
// summation order are identical in both instantiations.

template <bool Par>
void matmul_impl(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (Par)
  for (std::ptrdiff_t si = 0; si < rows; ++si) {
    const auto i = static_cast<std::size_t>(si);
    double* crow = c.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    const double* arow = a.data() + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b.data() + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <bool Par>
void matmul_tn_acc_impl(std::span<const double> a, std::span<const double> b, std::span<double> c,
                        std::size_t m, std::size_t k, std::size_t n) {
  const auto cols = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) if (Par)
  for (std::ptrdiff_t sk = 0; sk < cols; ++sk) {
    const auto kk = static_cast<std::size_t>(sk);
    double* crow = c.data() + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + kk];
      const double* brow = b.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <bool Par>
void matmul_nt_acc_impl(std::span<const double> a, std::span<const double> b, std::span<double> c,
                        std::size_t m, std::size_t n, std::size_t k) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (Par)
  for (std::ptrdiff_t si = 0; si < rows; ++si) {
    const auto i = static_cast<std::size_t>(si);
    const double* arow = a.data() + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* brow = b.data() + kk * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + kk] += acc;
    }
  }
}

template <bool Par>
void im2col_impl(std::span<const double> x, std::span<double> cols, const ConvGeometry& g) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t plane = g.height * g.width;
  const std::size_t per_sample = g.patch() * g.out_pixels();
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
#pragma omp parallel for schedule(static) if (Par)
  for (std::ptrdiff_t sn = 0; sn < batch; ++sn) {
    const auto n = static_cast<std::size_t>(sn);
    const double* xs = x.data() + n * g.in_channels * plane;
    double* dst = cols.data() + n * per_sample;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      for (std::size_t ki = 0; ki < g.kernel; ++ki) {
        for (std::size_t kj = 0; kj < g.kernel; ++kj) {
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const double* src = xs + c * plane + (oy + ki) * g.width + kj;
            std::copy(src, src + ow, dst);
            dst += ow;
          }
        }
      }
    }
  }
}

template <bool Par>
void conv2d_forward_impl(std::span<const double> cols, std::span<const double> w,
                         std::span<const double> bias, std::span<double> y, const ConvGeometry& g) {
  const std::size_t patch = g.patch(), pixels = g.out_pixels();
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
#pragma omp parallel for schedule(static) if (Par)
  for (std::ptrdiff_t sn = 0; sn < batch; ++sn) {
    const auto n = static_cast<std::size_t>(sn);
    const double* col = cols.data() + n * patch * pixels;
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      double* yo = y.data() + (n * g.out_channels + o) * pixels;
      std::fill(yo, yo + pixels, bias.empty() ? 0.0 : bias[o]);
      const double* wo = w.data() + o * patch;
      for (std::size_t r = 0; r < patch; ++r) {
        const double wv = wo[r];
        const double* cr = col + r * pixels;
        for (std::size_t p = 0; p < pixels; ++p) yo[p] += wv * cr[p];
      }
    }
  }
}

template <bool Par>
void conv2d_backward_impl(std::span<const double> cols, std::span<const double> w,
                          std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                          std::span<double> dbias, const ConvGeometry& g) {
  const std::size_t patch = g.patch(), pixels = g.out_pixels();
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t plane = g.height * g.width;

  // Parameter gradients: one output channel per task, batch summed in order.
  if (!dw.empty() || !dbias.empty()) {
    const auto outs = static_cast<std::ptrdiff_t>(g.out_channels);
#pragma omp parallel for schedule(static) if (Par)
    for (std::ptrdiff_t so = 0; so < outs; ++so) {
      const auto o = static_cast<std::size_t>(so);
      for (std::size_t n = 0; n < g.batch; ++n) {
        const double* dyo = dy.data() + (n * g.out_channels + o) * pixels;
        const double* col = cols.data() + n * patch * pixels;
        if (!dw.empty()) {
          double* dwo = dw.data() + o * patch;
          for (std::size_t r = 0; r < patch; ++r) {
            const double* cr = col + r * pixels;
            double acc = 0.0;
            for (std::size_t p = 0; p < pixels; ++p) acc += dyo[p] * cr[p];
            dwo[r] += acc;
          }
        }
        if (!dbias.empty()) {
          double acc = 0.0;
          for (std::size_t p = 0; p < pixels; ++p) acc += dyo[p];
          dbias[o] += acc;
        }
      }
    }
  }

  if (dx.empty()) return;
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
#pragma omp parallel if (Par)
  {
    std::vector<double> dcol(patch * pixels);
#pragma omp for schedule(static)
    for (std::ptrdiff_t sn = 0; sn < batch; ++sn) {
      const auto n = static_cast<std::size_t>(sn);
      std::fill(dcol.begin(), dcol.end(), 0.0);
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        const double* dyo = dy.data() + (n * g.out_channels + o) * pixels;
        const double* wo = w.data() + o * patch;
        for (std::size_t r = 0; r < patch; ++r) {
          const double wv = wo[r];
          double* dr = dcol.data() + r * pixels;
          for (std::size_t p = 0; p < pixels; ++p) dr[p] += wv * dyo[p];
        }
      }
      double* dxs = dx.data() + n * g.in_channels * plane;
      const double* src = dcol.data();
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
          for (std::size_t kj = 0; kj < g.kernel; ++kj) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
              double* dst = dxs + c * plane + (oy + ki) * g.width + kj;
              for (std::size_t ox = 0; ox < ow; ++ox) dst[ox] += src[ox];
              src += ow;
            }
          }
        }
      }
    }
  }
}

template <bool Par>
void maxpool_impl(std::span<const double> x, std::span<double> y, std::span<std::size_t> argmax,
                  const PoolGeometry& g) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t plane = g.height * g.width;
  const auto planes = static_cast<std::ptrdiff_t>(g.planes);
#pragma omp parallel for schedule(static) if (Par)
  for (std::ptrdiff_t sp = 0; sp < planes; ++sp) {
    const auto pl = static_cast<std::size_t>(sp);
    const std::size_t base = pl * plane;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + (2 * oy) * g.width + 2 * ox;
        double best_v = x[best];
        // Window scanned in increasing flat index; strict > keeps the first max.
        const std::size_t cand[3] = {best + 1, best + g.width, best + g.width + 1};
        for (std::size_t idx : cand) {
          if (x[idx] > best_v) {
            best_v = x[idx];
            best = idx;
          }
        }
        const std::size_t out = (pl * oh + oy) * ow + ox;
        y[out] = best_v;
        argmax[out] = best;
      }
    }
  }
}

}  // namespace

#define SMIL_DEFINE_KERNELS(NS, PAR)                                                            \
  namespace NS {                                                                                \
  void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,       \
              std::size_t m, std::size_t k, std::size_t n) {                                    \
    matmul_impl<PAR>(a, b, c, m, k, n);                                                         \
  }                                                                                             \
  void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, \
                     std::size_t m, std::size_t k, std::size_t n) {                             \
    matmul_tn_acc_impl<PAR>(a, b, c, m, k, n);                                                  \
  }                                                                                             \
  void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, \
                     std::size_t m, std::size_t n, std::size_t k) {                             \
    matmul_nt_acc_impl<PAR>(a, b, c, m, n, k);                                                  \
  }                                                                                             \
  void im2col(std::span<const double> x, std::span<double> cols, const ConvGeometry& g) {       \
    im2col_impl<PAR>(x, cols, g);                                                               \
  }                                                                                             \
  void conv2d_forward(std::span<const double> cols, std::span<const double> w,                  \
                      std::span<const double> bias, std::span<double> y,                        \
                      const ConvGeometry& g) {                                                  \
    conv2d_forward_impl<PAR>(cols, w, bias, y, g);                                              \
  }                                                                                             \
  void conv2d_backward(std::span<const double> cols, std::span<const double> w,                 \
                       std::span<const double> dy, std::span<double> dx, std::span<double> dw,  \
                       std::span<double> dbias, const ConvGeometry& g) {                        \
    conv2d_backward_impl<PAR>(cols, w, dy, dx, dw, dbias, g);                                   \
  }                                                                                             \
  void maxpool2x2_forward(std::span<const double> x, std::span<double> y,                       \
                          std::span<std::size_t> argmax, const PoolGeometry& g) {               \
    maxpool_impl<PAR>(x, y, argmax, g);                                                         \
  }                                                                                             \
  }

SMIL_DEFINE_KERNELS(serial, false)
SMIL_DEFINE_KERNELS(parallel, true)

#undef SMIL_DEFINE_KERNELS

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace smil::kernels

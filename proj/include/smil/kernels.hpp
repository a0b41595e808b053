#pragma once

// Dense numeric kernels behind the autodiff ops.
//
// Every kernel exists twice: `serial::` is the straightforward reference kept
// for testing, `parallel::` splits the outermost independent loop across
// OpenMP threads. Each output element is produced by exactly one thread with
// the same summation order as the serial version, so both are bit-identical.

#include <cstddef>
#include <span>

namespace smil::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;

  std::size_t out_height() const { return height - kernel + 1; }
  std::size_t out_width() const { return width - kernel + 1; }
  std::size_t patch() const { return in_channels * kernel * kernel; }
  std::size_t out_pixels() const { return out_height() * out_width(); }
};

struct PoolGeometry {
  std::size_t planes = 1;  // batch * channels
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t out_height() const { return height / 2; }
  std::size_t out_width() const { return width / 2; }
};

namespace serial {
// c[m x n] = a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
// c[k x n] += a[m x k]^T * b[m x n]
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
// c[m x k] += a[m x n] * b[k x n]^T
void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t n, std::size_t k);
// cols laid out as [batch][patch][out_pixels]
void im2col(std::span<const double> x, std::span<double> cols, const ConvGeometry& g);
void conv2d_forward(std::span<const double> cols, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y, const ConvGeometry& g);
// dx may be empty when the input needs no gradient.
void conv2d_backward(std::span<const double> cols, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> dbias, const ConvGeometry& g);
// Ties go to the lowest flat index inside each window.
void maxpool2x2_forward(std::span<const double> x, std::span<double> y,
                        std::span<std::size_t> argmax, const PoolGeometry& g);
}  // namespace serial

namespace parallel {
// c[m x n] = a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
// c[k x n] += a[m x k]^T * b[m x n]
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
// c[m x k] += a[m x n] * b[k x n]^T
void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t n, std::size_t k);
// cols laid out as [batch][patch][out_pixels]
void im2col(std::span<const double> x, std::span<double> cols, const ConvGeometry& g);
void conv2d_forward(std::span<const double> cols, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y, const ConvGeometry& g);
// dx may be empty when the input needs no gradient.
void conv2d_backward(std::span<const double> cols, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> dbias, const ConvGeometry& g);
// Ties go to the lowest flat index inside each window.
void maxpool2x2_forward(std::span<const double> x, std::span<double> y,
                        std::span<std::size_t> argmax, const PoolGeometry& g);
}  // namespace parallel

/// Number of worker threads the parallel kernels will use.
int thread_count();

}  // namespace smil::kernels

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include <random>
#include <vector>

#include "smil/kernels.hpp"

using namespace smil::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

struct Threads {
  int saved = omp_get_max_threads();
  explicit Threads(int n) { omp_set_num_threads(n); }
  ~Threads() { omp_set_num_threads(saved); }
};

}  // namespace

TEST_CASE("matmul variants are bit-identical across serial and parallel") {
  Threads t(4);
  for (auto [m, k, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1}, {7, 13, 5}, {64, 400, 120}}) {
    const auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
    std::vector<double> c1(m * n), c2(m * n);
    serial::matmul(a, b, c1, m, k, n);
    parallel::matmul(a, b, c2, m, k, n);
    CHECK(c1 == c2);

    const auto dy = random_vec(m * n, 3);
    std::vector<double> g1 = random_vec(k * n, 4), g2 = g1;
    serial::matmul_tn_acc(a, dy, g1, m, k, n);
    parallel::matmul_tn_acc(a, dy, g2, m, k, n);
    CHECK(g1 == g2);

    std::vector<double> h1 = random_vec(m * k, 5), h2 = h1;
    serial::matmul_nt_acc(dy, b, h1, m, n, k);
    parallel::matmul_nt_acc(dy, b, h2, m, n, k);
    CHECK(h1 == h2);
  }
}

TEST_CASE("convolution and pooling are bit-identical across serial and parallel") {
  Threads t(3);
  const ConvGeometry g{.batch = 5, .in_channels = 2, .height = 12, .width = 10, .out_channels = 4, .kernel = 3};
  const auto x = random_vec(g.batch * g.in_channels * g.height * g.width, 6);
  const auto w = random_vec(g.out_channels * g.patch(), 7);
  const auto bias = random_vec(g.out_channels, 8);
  const std::size_t cols_n = g.batch * g.patch() * g.out_pixels();
  std::vector<double> cols1(cols_n), cols2(cols_n);
  serial::im2col(x, cols1, g);
  parallel::im2col(x, cols2, g);
  REQUIRE(cols1 == cols2);

  const std::size_t y_n = g.batch * g.out_channels * g.out_pixels();
  std::vector<double> y1(y_n), y2(y_n);
  serial::conv2d_forward(cols1, w, bias, y1, g);
  parallel::conv2d_forward(cols1, w, bias, y2, g);
  CHECK(y1 == y2);

  const auto dy = random_vec(y_n, 9);
  std::vector<double> dx1(x.size()), dx2(x.size()), dw1(w.size()), dw2(w.size()), db1(bias.size()), db2(bias.size());
  serial::conv2d_backward(cols1, w, dy, dx1, dw1, db1, g);
  parallel::conv2d_backward(cols1, w, dy, dx2, dw2, db2, g);
  CHECK(dx1 == dx2);
  CHECK(dw1 == dw2);
  CHECK(db1 == db2);

  const PoolGeometry p{.planes = g.batch * g.out_channels, .height = g.out_height(), .width = g.out_width()};
  std::vector<double> o1(p.planes * p.out_height() * p.out_width()), o2(o1.size());
  std::vector<std::size_t> a1(o1.size()), a2(o1.size());
  serial::maxpool2x2_forward(y1, o1, a1, p);
  parallel::maxpool2x2_forward(y1, o2, a2, p);
  CHECK(o1 == o2);
  CHECK(a1 == a2);
}

TEST_CASE("pooling ties route to the lowest index") {
  const PoolGeometry p{.planes = 1, .height = 2, .width = 2};
  const std::vector<double> x = {1.0, 1.0, 1.0, 1.0};
  std::vector<double> y(1);
  std::vector<std::size_t> arg(1);
  parallel::maxpool2x2_forward(x, y, arg, p);
  CHECK(arg[0] == 0);
}

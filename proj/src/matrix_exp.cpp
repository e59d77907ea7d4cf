#include <cmath>

#include <Eigen/Core>

#include "grimp/error.hpp"
#include "grimp/tensor.hpp"

namespace grimp {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Scaled argument norm and truncation degree. With ||A / 2^s||_1 <= 1/2 the
// Taylor remainder after degree 20 is below 0.5^21 / 21! ~ 2e-26, far under
// double rounding.
constexpr double kScaledNorm = 0.5;
constexpr int kTaylorDegree = 20;

RowMat expm(const RowMat& a) {
  const Eigen::Index n = a.rows();
  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > kScaledNorm) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / kScaledNorm)));
  }
  const RowMat b = a * std::ldexp(1.0, -squarings);

  // Horner evaluation of sum_k b^k / k!.
  RowMat result = RowMat::Identity(n, n);
  for (int k = kTaylorDegree; k >= 1; --k) {
    result = RowMat::Identity(n, n) + (b * result) / static_cast<double>(k);
  }
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

}  // namespace

Tensor matrix_exp(const Tensor& a) {
  if (a.dim() != 2 || a.rows() != a.cols() || a.rows() == 0) {
    throw DimensionError("matrix_exp: expected a non-empty square matrix, got " +
                         shape_str(a.shape()));
  }
  const std::size_t n = a.rows();
  const auto ni = static_cast<Eigen::Index>(n);
  const RowMat in = Eigen::Map<const RowMat>(a.data().data(), ni, ni);
  const RowMat e = expm(in);
  std::vector<double> out(e.data(), e.data() + n * n);

  return Tensor::make_result({n, n}, std::move(out), "matrix_exp", {a}, [n, ni](detail::Node& r) {
    auto& p = *r.parents[0];
    // d<G, e^A> / dA = L(A^T, G), the Frechet derivative, read off the upper
    // right block of exp([[A^T, G], [0, A^T]]).
    const RowMat at = Eigen::Map<const RowMat>(p.data.data(), ni, ni).transpose();
    RowMat block = RowMat::Zero(2 * ni, 2 * ni);
    block.topLeftCorner(ni, ni) = at;
    block.bottomRightCorner(ni, ni) = at;
    block.topRightCorner(ni, ni) = Eigen::Map<const RowMat>(r.grad.data(), ni, ni);
    const RowMat eb = expm(block);
    Eigen::Map<RowMat>(p.grad.data(), ni, ni) += eb.topRightCorner(ni, ni);
    (void)n;
  });
}

}  // namespace grimp

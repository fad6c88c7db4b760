#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "metasci/dual.hpp"

namespace metasci::linalg {

/// C[m x n] (+)= op(A) * op(B), all row-major.
///
/// `A` is m x k (or k x m when `trans_a`), `B` is k x n (or n x k when `trans_b`).
template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, bool trans_a, const T* b,
          bool trans_b, T* c, bool accumulate) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  Eigen::Map<Mat> cm(c, M, N);
  if (!accumulate) cm.setZero();
  if (m == 0 || n == 0 || k == 0) return;
  const CMap am(a, trans_a ? K : M, trans_a ? M : K);
  const CMap bm(b, trans_b ? N : K, trans_b ? K : N);
  if (!trans_a && !trans_b) {
    cm.noalias() += am * bm;
  } else if (trans_a && !trans_b) {
    cm.noalias() += am.transpose() * bm;
  } else if (!trans_a && trans_b) {
    cm.noalias() += am * bm.transpose();
  } else {
    cm.noalias() += am.transpose() * bm.transpose();
  }
}

/// Dual GEMM as three real GEMMs: (Av + Ae e)(Bv + Be e) = AvBv + (AvBe + AeBv) e.
template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const Dual<T>* a, bool trans_a,
          const Dual<T>* b, bool trans_b, Dual<T>* c, bool accumulate) {
  const std::size_t na = m * k;
  const std::size_t nb = k * n;
  std::vector<T> av(na), at(na), bv(nb), bt(nb), cv(m * n), ct(m * n);
  for (std::size_t i = 0; i < na; ++i) {
    av[i] = a[i].value;
    at[i] = a[i].tangent;
  }
  for (std::size_t i = 0; i < nb; ++i) {
    bv[i] = b[i].value;
    bt[i] = b[i].tangent;
  }
  gemm<T>(m, n, k, av.data(), trans_a, bv.data(), trans_b, cv.data(), false);
  gemm<T>(m, n, k, av.data(), trans_a, bt.data(), trans_b, ct.data(), false);
  gemm<T>(m, n, k, at.data(), trans_a, bv.data(), trans_b, ct.data(), true);
  for (std::size_t i = 0; i < m * n; ++i) {
    if (accumulate) {
      c[i].value += cv[i];
      c[i].tangent += ct[i];
    } else {
      c[i] = Dual<T>(cv[i], ct[i]);
    }
  }
}

}  // namespace metasci::linalg

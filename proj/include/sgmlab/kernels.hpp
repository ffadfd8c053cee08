#pragma once

// Matrix kernels used by the network. Each product exists in two forms:
//   serial::   straightforward loops, the reference implementation
//   parallel:: OpenMP over output rows
// Both accumulate every output element in the same order, so the parallel
// kernels are bit-identical to the serial ones for any thread count.

#include "sgmlab/tensor.hpp"

namespace sgmlab::kernels {

namespace serial {
// out = a * b^T      a: (n x k), b: (m x k) -> (n x m)
template <class T> void matmul_nt(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out);
// out = a^T * b      a: (k x n), b: (k x m) -> (n x m)
template <class T> void matmul_tn(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out);
// out = a * b        a: (n x k), b: (k x m) -> (n x m)
template <class T> void matmul_nn(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out);
}  // namespace serial

namespace parallel {
template <class T> void matmul_nt(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out);
template <class T> void matmul_tn(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out);
template <class T> void matmul_nn(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out);
}  // namespace parallel

// Thread cap for the dispatching kernels. 1 selects the serial reference path.
// Initialized from SGM_LAB_THREADS when set, otherwise 1.
int max_threads();
void set_max_threads(int n);

// Dispatch: serial when max_threads() == 1 or the problem is tiny.
template <class T> Tensor2<T> matmul_nt(const Tensor2<T>& a, const Tensor2<T>& b);
template <class T> Tensor2<T> matmul_tn(const Tensor2<T>& a, const Tensor2<T>& b);
template <class T> Tensor2<T> matmul_nn(const Tensor2<T>& a, const Tensor2<T>& b);

}  // namespace sgmlab::kernels

#include "sgmlab/kernels.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sgmlab::kernels {

namespace {

int threads_from_env() {
  const char* env = std::getenv("SGM_LAB_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  try {
    const int n = std::stoi(env);
    return n >= 1 ? n : 1;
  } catch (const std::exception&) {
    return 1;
  }
}

int& thread_cap() {
  static int cap = threads_from_env();
  return cap;
}

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;

template <class T>
void check_nt(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: inner dims " + shape_str(a.rows(), a.cols()) + " * " +
                     shape_str(b.rows(), b.cols()) + "^T");
  }
  if (out.rows() != a.rows() || out.cols() != b.rows()) out = Tensor2<T>(a.rows(), b.rows());
}

template <class T>
void check_tn(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: inner dims " + shape_str(a.rows(), a.cols()) + "^T * " +
                     shape_str(b.rows(), b.cols()));
  }
  if (out.rows() != a.cols() || out.cols() != b.cols()) out = Tensor2<T>(a.cols(), b.cols());
}

template <class T>
void check_nn(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul_nn: inner dims " + shape_str(a.rows(), a.cols()) + " * " +
                     shape_str(b.rows(), b.cols()));
  }
  if (out.rows() != a.rows() || out.cols() != b.cols()) out = Tensor2<T>(a.rows(), b.cols());
}

// Row kernels shared by both variants so the accumulation order is identical.
template <class T>
inline void row_nt(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out, std::size_t i) {
  const std::size_t k = a.cols();
  const T* ar = a.data() + i * k;
  T* o = out.data() + i * out.cols();
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const T* br = b.data() + j * k;
    T acc = T(0);
    for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
    o[j] = acc;
  }
}

template <class T>
inline void row_tn(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out, std::size_t i) {
  const std::size_t m = b.cols();
  T* o = out.data() + i * m;
  for (std::size_t j = 0; j < m; ++j) o[j] = T(0);
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const T s = a(p, i);
    if (s == T(0)) continue;
    const T* br = b.data() + p * m;
    for (std::size_t j = 0; j < m; ++j) o[j] += s * br[j];
  }
}

template <class T>
inline void row_nn(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out, std::size_t i) {
  const std::size_t m = b.cols();
  T* o = out.data() + i * m;
  for (std::size_t j = 0; j < m; ++j) o[j] = T(0);
  const T* ar = a.data() + i * a.cols();
  for (std::size_t p = 0; p < a.cols(); ++p) {
    const T s = ar[p];
    if (s == T(0)) continue;
    const T* br = b.data() + p * m;
    for (std::size_t j = 0; j < m; ++j) o[j] += s * br[j];
  }
}

}  // namespace

int max_threads() { return thread_cap(); }
void set_max_threads(int n) { thread_cap() = n >= 1 ? n : 1; }

namespace serial {

template <class T>
void matmul_nt(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out) {
  check_nt(a, b, out);
  for (std::size_t i = 0; i < a.rows(); ++i) row_nt(a, b, out, i);
}

template <class T>
void matmul_tn(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out) {
  check_tn(a, b, out);
  for (std::size_t i = 0; i < a.cols(); ++i) row_tn(a, b, out, i);
}

template <class T>
void matmul_nn(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out) {
  check_nn(a, b, out);
  for (std::size_t i = 0; i < a.rows(); ++i) row_nn(a, b, out, i);
}

}  // namespace serial

namespace parallel {

template <class T>
void matmul_nt(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out) {
  check_nt(a, b, out);
  const auto n = static_cast<long>(a.rows());
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (long i = 0; i < n; ++i) row_nt(a, b, out, static_cast<std::size_t>(i));
}

template <class T>
void matmul_tn(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out) {
  check_tn(a, b, out);
  const auto n = static_cast<long>(a.cols());
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (long i = 0; i < n; ++i) row_tn(a, b, out, static_cast<std::size_t>(i));
}

template <class T>
void matmul_nn(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& out) {
  check_nn(a, b, out);
  const auto n = static_cast<long>(a.rows());
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (long i = 0; i < n; ++i) row_nn(a, b, out, static_cast<std::size_t>(i));
}

}  // namespace parallel

template <class T>
Tensor2<T> matmul_nt(const Tensor2<T>& a, const Tensor2<T>& b) {
  Tensor2<T> out;
  if (max_threads() > 1 && a.rows() * b.rows() * a.cols() >= kParallelWork) {
    parallel::matmul_nt(a, b, out);
  } else {
    serial::matmul_nt(a, b, out);
  }
  return out;
}

template <class T>
Tensor2<T> matmul_tn(const Tensor2<T>& a, const Tensor2<T>& b) {
  Tensor2<T> out;
  if (max_threads() > 1 && a.rows() * a.cols() * b.cols() >= kParallelWork) {
    parallel::matmul_tn(a, b, out);
  } else {
    serial::matmul_tn(a, b, out);
  }
  return out;
}

template <class T>
Tensor2<T> matmul_nn(const Tensor2<T>& a, const Tensor2<T>& b) {
  Tensor2<T> out;
  if (max_threads() > 1 && a.rows() * a.cols() * b.cols() >= kParallelWork) {
    parallel::matmul_nn(a, b, out);
  } else {
    serial::matmul_nn(a, b, out);
  }
  return out;
}

#define SGMLAB_INSTANTIATE(T)                                                        \
  template void serial::matmul_nt<T>(const Tensor2<T>&, const Tensor2<T>&, Tensor2<T>&);   \
  template void serial::matmul_tn<T>(const Tensor2<T>&, const Tensor2<T>&, Tensor2<T>&);   \
  template void serial::matmul_nn<T>(const Tensor2<T>&, const Tensor2<T>&, Tensor2<T>&);   \
  template void parallel::matmul_nt<T>(const Tensor2<T>&, const Tensor2<T>&, Tensor2<T>&); \
  template void parallel::matmul_tn<T>(const Tensor2<T>&, const Tensor2<T>&, Tensor2<T>&); \
  template void parallel::matmul_nn<T>(const Tensor2<T>&, const Tensor2<T>&, Tensor2<T>&); \
  template Tensor2<T> matmul_nt<T>(const Tensor2<T>&, const Tensor2<T>&);                 \
  template Tensor2<T> matmul_tn<T>(const Tensor2<T>&, const Tensor2<T>&);                 \
  template Tensor2<T> matmul_nn<T>(const Tensor2<T>&, const Tensor2<T>&);

SGMLAB_INSTANTIATE(float)
SGMLAB_INSTANTIATE(double)

#undef SGMLAB_INSTANTIATE

}  // namespace sgmlab::kernels

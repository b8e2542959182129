#pragma once

// Dense double-precision inner loops used by the neural core and the road
// projection. Each kernel has a scalar reference in `kernels::scalar` and
// vector variants (AVX2+FMA on x86-64, NEON on AArch64). The public entry
// points dispatch through a table chosen once per process.
//
// All matrices are row-major and contiguous. The gemm kernels accumulate
// into C (C += ...), callers zero it first when they want a plain product.
//
// Every kernel computes each output row from that row's inputs only, with
// a summation order that depends on the inner dimension alone, so permuting
// rows of A permutes rows of C bit-for-bit under any ISA.

#include <cstddef>
#include <string_view>

namespace trajaware::kernels {

enum class Isa { Scalar, Avx2, Neon };

struct NearestSegment {
  std::size_t index;
  double dist_sq;
  double t;  // clamped parameter along the segment, in [0, 1]
};

// Structure-of-arrays view over line segments a -> b.
struct SegmentSoA {
  const double* ax;
  const double* ay;
  const double* bx;
  const double* by;
  std::size_t count;
};

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  NearestSegment (*nearest_segment)(double px, double py, const SegmentSoA& segs);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
NearestSegment nearest_segment(double px, double py, const SegmentSoA& segs);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define TRAJAWARE_HAVE_AVX2_KERNELS 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
NearestSegment nearest_segment(double px, double py, const SegmentSoA& segs);
}  // namespace avx2
#endif

#if defined(__aarch64__)
#define TRAJAWARE_HAVE_NEON_KERNELS 1
namespace neon {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
NearestSegment nearest_segment(double px, double py, const SegmentSoA& segs);
}  // namespace neon
#endif

bool isa_supported(Isa isa);
std::string_view isa_name(Isa isa);

// The table for a given ISA; throws if the CPU cannot run it.
const KernelTable& table_for(Isa isa);

// The process-wide table. Picks the widest supported ISA on first use unless
// TRAJAWARE_SIMD=scalar is set in the environment.
const KernelTable& active();

inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  active().gemm_nn(a, b, c, m, k, n);
}
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  active().gemm_nt(a, b, c, m, k, n);
}
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  active().gemm_tn(a, b, c, m, k, n);
}
inline NearestSegment nearest_segment(double px, double py, const SegmentSoA& segs) {
  return active().nearest_segment(px, py, segs);
}

}  // namespace trajaware::kernels

#include "trajaware/kernels.hpp"

#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>

#if defined(TRAJAWARE_HAVE_AVX2_KERNELS)
#include <immintrin.h>
#define TRAJAWARE_TARGET_AVX2 __attribute__((target("avx2,fma")))
#endif

#if defined(TRAJAWARE_HAVE_NEON_KERNELS)
#include <arm_neon.h>
#endif

namespace trajaware::kernels {

// ---------------------------------------------------------------------------
// Scalar reference
// ---------------------------------------------------------------------------
namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) axpy(a[i * k + p], b + p * n, crow, n);
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(a + i * k, b + j * k, k);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) axpy(a[p * m + i], b + p * n, c + i * n, n);
}

NearestSegment nearest_segment(double px, double py, const SegmentSoA& s) {
  NearestSegment best{0, std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t i = 0; i < s.count; ++i) {
    const double dx = s.bx[i] - s.ax[i];
    const double dy = s.by[i] - s.ay[i];
    const double len2 = dx * dx + dy * dy;
    double t = ((px - s.ax[i]) * dx + (py - s.ay[i]) * dy) / len2;
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    const double ex = px - (s.ax[i] + t * dx);
    const double ey = py - (s.ay[i] + t * dy);
    const double d2 = ex * ex + ey * ey;
    if (d2 < best.dist_sq) best = {i, d2, t};
  }
  return best;
}

}  // namespace scalar

// ---------------------------------------------------------------------------
// AVX2 + FMA
// ---------------------------------------------------------------------------
#if defined(TRAJAWARE_HAVE_AVX2_KERNELS)
namespace avx2 {

namespace {
TRAJAWARE_TARGET_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}
}  // namespace

TRAJAWARE_TARGET_AVX2 double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

TRAJAWARE_TARGET_AVX2 void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

TRAJAWARE_TARGET_AVX2 void gemm_nn(const double* a, const double* b, double* c,
                                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = a[i * k + p];
      if (s == 0.0) continue;  // ReLU outputs are mostly zero
      axpy(s, b + p * n, crow, n);
    }
  }
}

TRAJAWARE_TARGET_AVX2 void gemm_nt(const double* a, const double* b, double* c,
                                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(a + i * k, b + j * k, k);
}

TRAJAWARE_TARGET_AVX2 void gemm_tn(const double* a, const double* b, double* c,
                                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) {
      const double s = a[p * m + i];
      if (s == 0.0) continue;
      axpy(s, b + p * n, c + i * n, n);
    }
}

// Mirrors the scalar arithmetic op-for-op (no FMA) so the result is
// bit-identical to scalar::nearest_segment.
TRAJAWARE_TARGET_AVX2 NearestSegment nearest_segment(double px, double py,
                                                     const SegmentSoA& s) {
  const __m256d vpx = _mm256_set1_pd(px);
  const __m256d vpy = _mm256_set1_pd(py);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  __m256d best_d2 = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  __m256d best_t = zero;
  __m256d best_idx = _mm256_setzero_pd();
  __m256d idx = _mm256_setr_pd(0.0, 1.0, 2.0, 3.0);
  const __m256d four = _mm256_set1_pd(4.0);

  std::size_t i = 0;
  for (; i + 4 <= s.count; i += 4) {
    const __m256d ax = _mm256_loadu_pd(s.ax + i);
    const __m256d ay = _mm256_loadu_pd(s.ay + i);
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(s.bx + i), ax);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(s.by + i), ay);
    const __m256d len2 = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
    const __m256d num = _mm256_add_pd(_mm256_mul_pd(_mm256_sub_pd(vpx, ax), dx),
                                      _mm256_mul_pd(_mm256_sub_pd(vpy, ay), dy));
    __m256d t = _mm256_div_pd(num, len2);
    t = _mm256_min_pd(_mm256_max_pd(t, zero), one);
    const __m256d ex = _mm256_sub_pd(vpx, _mm256_add_pd(ax, _mm256_mul_pd(t, dx)));
    const __m256d ey = _mm256_sub_pd(vpy, _mm256_add_pd(ay, _mm256_mul_pd(t, dy)));
    const __m256d d2 = _mm256_add_pd(_mm256_mul_pd(ex, ex), _mm256_mul_pd(ey, ey));
    const __m256d better = _mm256_cmp_pd(d2, best_d2, _CMP_LT_OQ);
    best_d2 = _mm256_blendv_pd(best_d2, d2, better);
    best_t = _mm256_blendv_pd(best_t, t, better);
    best_idx = _mm256_blendv_pd(best_idx, idx, better);
    idx = _mm256_add_pd(idx, four);
  }

  alignas(32) double d2s[4], ts[4], ids[4];
  _mm256_store_pd(d2s, best_d2);
  _mm256_store_pd(ts, best_t);
  _mm256_store_pd(ids, best_idx);
  NearestSegment best{0, std::numeric_limits<double>::infinity(), 0.0};
  for (int lane = 0; lane < 4; ++lane) {
    const auto lane_idx = static_cast<std::size_t>(ids[lane]);
    if (d2s[lane] < best.dist_sq || (d2s[lane] == best.dist_sq && lane_idx < best.index))
      best = {lane_idx, d2s[lane], ts[lane]};
  }
  for (; i < s.count; ++i) {
    const double dx = s.bx[i] - s.ax[i];
    const double dy = s.by[i] - s.ay[i];
    const double len2 = dx * dx + dy * dy;
    double t = ((px - s.ax[i]) * dx + (py - s.ay[i]) * dy) / len2;
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    const double ex = px - (s.ax[i] + t * dx);
    const double ey = py - (s.ay[i] + t * dy);
    const double d2 = ex * ex + ey * ey;
    if (d2 < best.dist_sq) best = {i, d2, t};
  }
  return best;
}

}  // namespace avx2
#endif

// ---------------------------------------------------------------------------
// NEON (AArch64)
// ---------------------------------------------------------------------------
#if defined(TRAJAWARE_HAVE_NEON_KERNELS)
namespace neon {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double s = a[i * k + p];
      if (s == 0.0) continue;
      axpy(s, b + p * n, c + i * n, n);
    }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(a + i * k, b + j * k, k);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) {
      const double s = a[p * m + i];
      if (s == 0.0) continue;
      axpy(s, b + p * n, c + i * n, n);
    }
}

NearestSegment nearest_segment(double px, double py, const SegmentSoA& s) {
  // The scan is branchy and short; the scalar form is already bit-exact.
  return scalar::nearest_segment(px, py, s);
}

}  // namespace neon
#endif

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------
namespace {

constexpr KernelTable kScalarTable{Isa::Scalar,     scalar::dot,     scalar::axpy,
                                   scalar::gemm_nn, scalar::gemm_nt, scalar::gemm_tn,
                                   scalar::nearest_segment};
#if defined(TRAJAWARE_HAVE_AVX2_KERNELS)
constexpr KernelTable kAvx2Table{Isa::Avx2,     avx2::dot,     avx2::axpy,
                                 avx2::gemm_nn, avx2::gemm_nt, avx2::gemm_tn,
                                 avx2::nearest_segment};
#endif
#if defined(TRAJAWARE_HAVE_NEON_KERNELS)
constexpr KernelTable kNeonTable{Isa::Neon,     neon::dot,     neon::axpy,
                                 neon::gemm_nn, neon::gemm_nt, neon::gemm_tn,
                                 neon::nearest_segment};
#endif

const KernelTable& pick_default() {
  if (const char* env = std::getenv("TRAJAWARE_SIMD"); env && std::string(env) == "scalar")
    return kScalarTable;
#if defined(TRAJAWARE_HAVE_AVX2_KERNELS)
  if (isa_supported(Isa::Avx2)) return kAvx2Table;
#endif
#if defined(TRAJAWARE_HAVE_NEON_KERNELS)
  return kNeonTable;
#endif
  return kScalarTable;
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(TRAJAWARE_HAVE_AVX2_KERNELS)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(TRAJAWARE_HAVE_NEON_KERNELS)
      return true;
#else
      return false;
#endif
  }
  return false;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
    case Isa::Neon:
      return "neon";
  }
  return "unknown";
}

const KernelTable& table_for(Isa isa) {
  if (!isa_supported(isa))
    throw std::runtime_error("kernel ISA not supported on this CPU: " + std::string(isa_name(isa)));
  switch (isa) {
    case Isa::Scalar:
      return kScalarTable;
#if defined(TRAJAWARE_HAVE_AVX2_KERNELS)
    case Isa::Avx2:
      return kAvx2Table;
#endif
#if defined(TRAJAWARE_HAVE_NEON_KERNELS)
    case Isa::Neon:
      return kNeonTable;
#endif
    default:
      break;
  }
  return kScalarTable;
}

const KernelTable& active() {
  static const KernelTable& table = pick_default();
  return table;
}

}  // namespace trajaware::kernels

#pragma once

#include <complex>
#include <cstddef>
#include <new>
#include <vector>

namespace sprisk::detail {

void* fft_alloc(std::size_t bytes);
void fft_free(void* p);

// Keeps every transform buffer at FFTW's SIMD alignment so cached plans can
// be reused through the new-array execute interface.
template <class T>
struct FftwAllocator {
  using value_type = T;
  FftwAllocator() = default;
  template <class U>
  FftwAllocator(const FftwAllocator<U>&) {}
  T* allocate(std::size_t n) {
    void* p = fft_alloc(n * sizeof(T));
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { fft_free(p); }
  template <class U>
  bool operator==(const FftwAllocator<U>&) const { return true; }
};

using cplx = std::complex<double>;
using RealBuf = std::vector<double, FftwAllocator<double>>;
using CplxBuf = std::vector<cplx, FftwAllocator<cplx>>;

// A transform length >= n with only small prime factors, chosen for speed.
std::size_t fast_size(std::size_t n);

// Unnormalized transforms. Layouts are row-major with the last index fastest.
// c2r calls overwrite their complex input.
void r2c_2d(int py, int px, double* in, cplx* out);        // out: py x (px/2+1)
void c2r_2d(int py, int px, cplx* in, double* out);
void r2c_3d(int pz, int py, int px, double* in, cplx* out);  // out: pz x py x (px/2+1)
void c2r_3d(int pz, int py, int px, cplx* in, double* out);
// Transforms along the first axis of a py x ncol array, one per column.
void r2c_cols(int py, int ncol, double* in, cplx* out);     // out: (py/2+1) x ncol
void c2r_cols(int py, int ncol, cplx* in, double* out);

// Full-length DFT of a real sequence.
std::vector<cplx> dft_real(const std::vector<double>& a);

// Array of length p holding f(o) at circular offset o (o = k for k <= p/2,
// o = k - p otherwise).
template <class F>
std::vector<double> circular(std::size_t p, F f) {
  std::vector<double> a(p);
  for (std::size_t k = 0; k < p; ++k) {
    long o = k <= p / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(p);
    a[k] = f(o);
  }
  return a;
}

}  // namespace sprisk::detail

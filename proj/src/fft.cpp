#include "sprisk/detail/fft.hpp"

#include <fftw3.h>

#include <array>
#include <map>
#include <mutex>

namespace sprisk::detail {

namespace {

enum class Kind { r2c2, c2r2, r2c3, c2r3, r2ccols, c2rcols, r2c1 };

using Key = std::pair<Kind, std::array<int, 3>>;

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::map<Key, fftw_plan>& plans() {
  static std::map<Key, fftw_plan> p;
  return p;
}

// Planning is not thread-safe in FFTW; execution with fresh arrays is.
fftw_plan get_plan(Kind kind, std::array<int, 3> d) {
  std::lock_guard<std::mutex> lock(planner_mutex());
  auto& cache = plans();
  Key key{kind, d};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const unsigned flags = FFTW_ESTIMATE;
  std::size_t nreal = 1, ncplx = 1;
  fftw_plan p = nullptr;
  switch (kind) {
    case Kind::r2c2:
    case Kind::c2r2:
      nreal = static_cast<std::size_t>(d[0]) * d[1];
      ncplx = static_cast<std::size_t>(d[0]) * (d[1] / 2 + 1);
      break;
    case Kind::r2c3:
    case Kind::c2r3:
      nreal = static_cast<std::size_t>(d[0]) * d[1] * d[2];
      ncplx = static_cast<std::size_t>(d[0]) * d[1] * (d[2] / 2 + 1);
      break;
    case Kind::r2ccols:
    case Kind::c2rcols:
      nreal = static_cast<std::size_t>(d[0]) * d[1];
      ncplx = static_cast<std::size_t>(d[0] / 2 + 1) * d[1];
      break;
    case Kind::r2c1:
      nreal = d[0];
      ncplx = d[0] / 2 + 1;
      break;
  }
  double* r = fftw_alloc_real(nreal);
  fftw_complex* c = fftw_alloc_complex(ncplx);
  switch (kind) {
    case Kind::r2c2: p = fftw_plan_dft_r2c_2d(d[0], d[1], r, c, flags); break;
    case Kind::c2r2: p = fftw_plan_dft_c2r_2d(d[0], d[1], c, r, flags); break;
    case Kind::r2c3: p = fftw_plan_dft_r2c_3d(d[0], d[1], d[2], r, c, flags); break;
    case Kind::c2r3: p = fftw_plan_dft_c2r_3d(d[0], d[1], d[2], c, r, flags); break;
    case Kind::r2ccols: {
      int n = d[0];
      p = fftw_plan_many_dft_r2c(1, &n, d[1], r, nullptr, d[1], 1, c, nullptr, d[1], 1, flags);
      break;
    }
    case Kind::c2rcols: {
      int n = d[0];
      p = fftw_plan_many_dft_c2r(1, &n, d[1], c, nullptr, d[1], 1, r, nullptr, d[1], 1, flags);
      break;
    }
    case Kind::r2c1: p = fftw_plan_dft_r2c_1d(d[0], r, c, flags); break;
  }
  fftw_free(r);
  fftw_free(c);
  cache.emplace(key, p);
  return p;
}

fftw_complex* fc(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

void* fft_alloc(std::size_t bytes) { return fftw_malloc(bytes); }
void fft_free(void* p) { fftw_free(p); }

std::size_t fast_size(std::size_t n) {
  if (n <= 1) return 1;
  // Among 7-smooth sizes up to the next power of two, take the lowest
  // estimated cost; odd factors run slower per element than factors of 2.
  std::size_t p2 = 1;
  while (p2 < n) p2 *= 2;
  std::size_t best = p2;
  double best_cost = static_cast<double>(p2);
  for (std::size_t m = n; m < p2; ++m) {
    std::size_t r = m;
    double cost = static_cast<double>(m);
    for (auto [f, w] : {std::pair<std::size_t, double>{2, 1.0}, {3, 1.1}, {5, 1.2}, {7, 1.35}})
      while (r % f == 0) {
        r /= f;
        cost *= w;
      }
    if (r == 1 && cost < best_cost) {
      best = m;
      best_cost = cost;
    }
  }
  return best;
}

void r2c_2d(int py, int px, double* in, cplx* out) {
  fftw_execute_dft_r2c(get_plan(Kind::r2c2, {py, px, 0}), in, fc(out));
}
void c2r_2d(int py, int px, cplx* in, double* out) {
  fftw_execute_dft_c2r(get_plan(Kind::c2r2, {py, px, 0}), fc(in), out);
}
void r2c_3d(int pz, int py, int px, double* in, cplx* out) {
  fftw_execute_dft_r2c(get_plan(Kind::r2c3, {pz, py, px}), in, fc(out));
}
void c2r_3d(int pz, int py, int px, cplx* in, double* out) {
  fftw_execute_dft_c2r(get_plan(Kind::c2r3, {pz, py, px}), fc(in), out);
}
void r2c_cols(int py, int ncol, double* in, cplx* out) {
  fftw_execute_dft_r2c(get_plan(Kind::r2ccols, {py, ncol, 0}), in, fc(out));
}
void c2r_cols(int py, int ncol, cplx* in, double* out) {
  fftw_execute_dft_c2r(get_plan(Kind::c2rcols, {py, ncol, 0}), fc(in), out);
}

std::vector<cplx> dft_real(const std::vector<double>& a) {
  const int n = static_cast<int>(a.size());
  RealBuf in(a.begin(), a.end());
  CplxBuf half(n / 2 + 1);
  fftw_execute_dft_r2c(get_plan(Kind::r2c1, {n, 0, 0}), in.data(), fc(half.data()));
  std::vector<cplx> full(n);
  for (int k = 0; k <= n / 2; ++k) full[k] = half[k];
  for (int k = n / 2 + 1; k < n; ++k) full[k] = std::conj(half[n - k]);
  return full;
}

}  // namespace sprisk::detail

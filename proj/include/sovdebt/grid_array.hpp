#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace sovdebt {

// Dense 2d array, row-major. Solvers index (iy, ib) so debt runs contiguous.
template <class T>
struct Grid2 {
  int n0 = 0, n1 = 0;
  std::vector<T> v;

  Grid2() = default;
  Grid2(int a, int b, T fill = T{}) : n0(a), n1(b), v(static_cast<std::size_t>(a) * b, fill) {}

  T& operator()(int i0, int i1) { return v[static_cast<std::size_t>(i0) * n1 + i1]; }
  const T& operator()(int i0, int i1) const { return v[static_cast<std::size_t>(i0) * n1 + i1]; }

  T* row(int i0) { return v.data() + static_cast<std::size_t>(i0) * n1; }
  const T* row(int i0) const { return v.data() + static_cast<std::size_t>(i0) * n1; }

  std::size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }
};

// Dense 3d array, (i0, i1, i2) with i2 fastest.
template <class T>
struct Grid3 {
  int n0 = 0, n1 = 0, n2 = 0;
  std::vector<T> v;

  Grid3() = default;
  Grid3(int a, int b, int c, T fill = T{})
      : n0(a), n1(b), n2(c), v(static_cast<std::size_t>(a) * b * c, fill) {}

  T& operator()(int i0, int i1, int i2) {
    return v[(static_cast<std::size_t>(i0) * n1 + i1) * n2 + i2];
  }
  const T& operator()(int i0, int i1, int i2) const {
    return v[(static_cast<std::size_t>(i0) * n1 + i1) * n2 + i2];
  }

  T* row(int i0, int i1) { return v.data() + (static_cast<std::size_t>(i0) * n1 + i1) * n2; }
  const T* row(int i0, int i1) const {
    return v.data() + (static_cast<std::size_t>(i0) * n1 + i1) * n2;
  }

  std::size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }
};

}  // namespace sovdebt

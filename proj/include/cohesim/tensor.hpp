#pragma once

#include <array>
#include <cmath>

#include "cohesim/errors.hpp"

namespace cohesim {

struct Vec3 {
  std::array<double, 3> v{0.0, 0.0, 0.0};

  Vec3() = default;
  Vec3(double x, double y, double z) : v{x, y, z} {}

  double& operator[](int i) { return v[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return v[static_cast<std::size_t>(i)]; }

  Vec3 operator+(const Vec3& o) const { return {v[0] + o.v[0], v[1] + o.v[1], v[2] + o.v[2]}; }
  Vec3 operator-(const Vec3& o) const { return {v[0] - o.v[0], v[1] - o.v[1], v[2] - o.v[2]}; }
  Vec3 operator*(double s) const { return {v[0] * s, v[1] * s, v[2] * s}; }
  Vec3 operator-() const { return {-v[0], -v[1], -v[2]}; }
  Vec3& operator+=(const Vec3& o) {
    v[0] += o.v[0];
    v[1] += o.v[1];
    v[2] += o.v[2];
    return *this;
  }

  double dot(const Vec3& o) const { return v[0] * o.v[0] + v[1] * o.v[1] + v[2] * o.v[2]; }
  Vec3 cross(const Vec3& o) const {
    return {v[1] * o.v[2] - v[2] * o.v[1], v[2] * o.v[0] - v[0] * o.v[2],
            v[0] * o.v[1] - v[1] * o.v[0]};
  }
  double norm() const { return std::sqrt(dot(*this)); }

  /// Throws DomainError on a zero vector.
  Vec3 normalized() const {
    const double n = norm();
    if (n == 0.0) throw DomainError("cannot normalize a zero vector");
    return {v[0] / n, v[1] / n, v[2] / n};
  }
};

inline Vec3 operator*(double s, const Vec3& a) { return a * s; }

/// Dense 3x3 second-order tensor, row-major, value semantics.
class Tensor3 {
 public:
  Tensor3() = default;

  static Tensor3 identity() {
    Tensor3 t;
    t(0, 0) = t(1, 1) = t(2, 2) = 1.0;
    return t;
  }

  static Tensor3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
    Tensor3 t;
    for (int j = 0; j < 3; ++j) {
      t(0, j) = r0[j];
      t(1, j) = r1[j];
      t(2, j) = r2[j];
    }
    return t;
  }

  /// Dyadic product a (x) b.
  static Tensor3 outer(const Vec3& a, const Vec3& b) {
    Tensor3 t;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) t(i, j) = a[i] * b[j];
    return t;
  }

  double& operator()(int i, int j) { return m_[static_cast<std::size_t>(3 * i + j)]; }
  double operator()(int i, int j) const { return m_[static_cast<std::size_t>(3 * i + j)]; }

  Tensor3 operator+(const Tensor3& o) const {
    Tensor3 t;
    for (int k = 0; k < 9; ++k) t.m_[k] = m_[k] + o.m_[k];
    return t;
  }
  Tensor3 operator-(const Tensor3& o) const {
    Tensor3 t;
    for (int k = 0; k < 9; ++k) t.m_[k] = m_[k] - o.m_[k];
    return t;
  }
  Tensor3 operator*(double s) const {
    Tensor3 t;
    for (int k = 0; k < 9; ++k) t.m_[k] = m_[k] * s;
    return t;
  }
  Tensor3& operator+=(const Tensor3& o) {
    for (int k = 0; k < 9; ++k) m_[k] += o.m_[k];
    return *this;
  }

  Tensor3 operator*(const Tensor3& o) const {
    Tensor3 t;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        t(i, j) = s;
      }
    return t;
  }

  Vec3 operator*(const Vec3& x) const {
    Vec3 y;
    for (int i = 0; i < 3; ++i)
      y[i] = (*this)(i, 0) * x[0] + (*this)(i, 1) * x[1] + (*this)(i, 2) * x[2];
    return y;
  }

  Tensor3 transpose() const {
    Tensor3 t;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) t(i, j) = (*this)(j, i);
    return t;
  }

  double trace() const { return m_[0] + m_[4] + m_[8]; }

  double det() const {
    const auto& a = *this;
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
           a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
  }

  /// Throws DomainError when |det| is zero.
  Tensor3 inverse() const {
    const double d = det();
    if (d == 0.0) throw DomainError("singular tensor has no inverse");
    const auto& a = *this;
    Tensor3 t;
    t(0, 0) = (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) / d;
    t(0, 1) = (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) / d;
    t(0, 2) = (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) / d;
    t(1, 0) = (a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2)) / d;
    t(1, 1) = (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) / d;
    t(1, 2) = (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) / d;
    t(2, 0) = (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0)) / d;
    t(2, 1) = (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) / d;
    t(2, 2) = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) / d;
    return t;
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : m_) m = std::max(m, std::abs(x));
    return m;
  }

  double frobenius() const {
    double s = 0.0;
    for (double x : m_) s += x * x;
    return std::sqrt(s);
  }

  bool is_symmetric(double tol = 1e-12) const {
    const double scale = std::max(1.0, max_abs());
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j)
        if (std::abs((*this)(i, j) - (*this)(j, i)) > tol * scale) return false;
    return true;
  }

  /// Sylvester criterion on the symmetric part; requires symmetry first.
  bool is_spd(double tol = 1e-12) const {
    if (!is_symmetric(tol)) return false;
    const auto& a = *this;
    const double m1 = a(0, 0);
    const double m2 = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    const double m3 = det();
    return m1 > 0.0 && m2 > 0.0 && m3 > 0.0;
  }

 private:
  std::array<double, 9> m_{};
};

inline Tensor3 operator*(double s, const Tensor3& a) { return a * s; }

}  // namespace cohesim

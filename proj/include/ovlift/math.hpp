#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ovlift/common.hpp"

namespace ovlift {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double squared_norm(const Vec3& a) { return dot(a, a); }
inline Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  if (n == 0.0) throw argument_error("cannot normalize zero vector");
  return a / n;
}
inline bool is_finite(const Vec3& a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

/// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return Mat3{}; }

  double& operator()(int r, int c) { return m[r * 3 + c]; }
  double operator()(int r, int c) const { return m[r * 3 + c]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
  Vec3 row(int r) const { return {m[r * 3], m[r * 3 + 1], m[r * 3 + 2]}; }
  Vec3 col(int c) const { return {m[c], m[3 + c], m[6 + c]}; }
};

/// |R R^T - I|_max and det(R)-1 both within tol.
inline bool is_rotation(const Mat3& r, double tol = 1e-6) {
  Mat3 rrt = r * r.transposed();
  double max_dev = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double target = (i == j) ? 1.0 : 0.0;
      max_dev = std::max(max_dev, std::abs(rrt(i, j) - target));
    }
  return max_dev <= tol && std::abs(r.det() - 1.0) <= tol;
}

/// Rigid transform p -> R p + t.
struct RigidTransform {
  Mat3 rotation;
  Vec3 translation;

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const {
    Mat3 rt = rotation.transposed();
    return {rt, (rt * translation) * -1.0};
  }
  RigidTransform operator*(const RigidTransform& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }
};

inline Mat3 axis_angle(const Vec3& axis_unit, double angle) {
  const Vec3& u = axis_unit;
  double c = std::cos(angle), s = std::sin(angle), ic = 1.0 - c;
  Mat3 r;
  r(0, 0) = c + u.x * u.x * ic;
  r(0, 1) = u.x * u.y * ic - u.z * s;
  r(0, 2) = u.x * u.z * ic + u.y * s;
  r(1, 0) = u.y * u.x * ic + u.z * s;
  r(1, 1) = c + u.y * u.y * ic;
  r(1, 2) = u.y * u.z * ic - u.x * s;
  r(2, 0) = u.z * u.x * ic - u.y * s;
  r(2, 1) = u.z * u.y * ic + u.x * s;
  r(2, 2) = c + u.z * u.z * ic;
  return r;
}

/// Dense row-major matrix of doubles (embeddings, score tables in float form).
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  const double* row_ptr(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
  double* row_ptr(int r) { return v.data() + static_cast<size_t>(r) * cols; }
};

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi sweeps.
/// Returns eigenvalues ascending; eigenvectors[i] pairs with eigenvalues[i].
struct Eigen33 {
  std::array<double, 3> values;
  std::array<Vec3, 3> vectors;
};

inline Eigen33 eigen_symmetric33(const Mat3& a_in) {
  Mat3 a = a_in;
  Mat3 v = Mat3::identity();
  for (int sweep = 0; sweep < 50; ++sweep) {
    double off = std::abs(a(0, 1)) + std::abs(a(0, 2)) + std::abs(a(1, 2));
    if (off == 0.0) break;
    const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (const auto& pq : pairs) {
      int p = pq[0], q = pq[1];
      if (std::abs(a(p, q)) < 1e-300) continue;
      double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
      double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
      double c = 1.0 / std::sqrt(t * t + 1.0);
      double s = t * c;
      Mat3 j = Mat3::identity();
      j(p, p) = c;
      j(q, q) = c;
      j(p, q) = s;
      j(q, p) = -s;
      a = j.transposed() * a * j;
      v = v * j;
    }
  }
  std::array<int, 3> order = {0, 1, 2};
  // insertion sort by eigenvalue, stable
  for (int i = 1; i < 3; ++i)
    for (int j = i; j > 0 && a(order[j], order[j]) < a(order[j - 1], order[j - 1]); --j)
      std::swap(order[j], order[j - 1]);
  Eigen33 out;
  for (int i = 0; i < 3; ++i) {
    out.values[i] = a(order[i], order[i]);
    out.vectors[i] = v.col(order[i]);
  }
  return out;
}

/// Deterministic RNG: mt19937_64 core with hand-rolled uniform/gaussian so the
/// stream does not depend on the standard library's distribution internals.
class Rng {
public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0); }

  double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Box-Muller, one cached deviate.
  double gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 1.0 - uniform(); // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  /// Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_below(uint64_t n) { return gen_() % n; }

private:
  std::mt19937_64 gen_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

/// splitmix64; used to derive per-request seeds from composite keys.
inline uint64_t mix_seed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t combine_seed(uint64_t a, uint64_t b) { return mix_seed(a ^ mix_seed(b)); }

} // namespace ovlift

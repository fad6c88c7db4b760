#pragma once

#include <cmath>
#include <type_traits>

namespace metasci {

/// Forward-mode dual number: `value + tangent * eps` with eps^2 = 0.
///
/// Running the reverse-mode tape over Dual scalars yields the gradient in the
/// value part and a Hessian-vector product in the tangent part
/// (forward-over-reverse).
template <class T>
struct Dual {
  T value{};
  T tangent{};

  constexpr Dual() = default;
  constexpr Dual(T v) : value(v) {}  // NOLINT: implicit lift of constants
  constexpr Dual(T v, T t) : value(v), tangent(t) {}
  template <class U>
  constexpr explicit Dual(const Dual<U>& o) : value(static_cast<T>(o.value)), tangent(static_cast<T>(o.tangent)) {}

  constexpr Dual& operator+=(const Dual& o) {
    value += o.value;
    tangent += o.tangent;
    return *this;
  }
  constexpr Dual& operator-=(const Dual& o) {
    value -= o.value;
    tangent -= o.tangent;
    return *this;
  }
  constexpr Dual& operator*=(const Dual& o) {
    tangent = tangent * o.value + value * o.tangent;
    value *= o.value;
    return *this;
  }
  constexpr Dual& operator/=(const Dual& o) {
    tangent = (tangent * o.value - value * o.tangent) / (o.value * o.value);
    value /= o.value;
    return *this;
  }
};

template <class T>
constexpr Dual<T> operator+(Dual<T> a, const Dual<T>& b) { return a += b; }
template <class T>
constexpr Dual<T> operator-(Dual<T> a, const Dual<T>& b) { return a -= b; }
template <class T>
constexpr Dual<T> operator*(Dual<T> a, const Dual<T>& b) { return a *= b; }
template <class T>
constexpr Dual<T> operator/(Dual<T> a, const Dual<T>& b) { return a /= b; }
template <class T>
constexpr Dual<T> operator-(const Dual<T>& a) { return {-a.value, -a.tangent}; }

template <class T>
constexpr bool operator<(const Dual<T>& a, const Dual<T>& b) { return a.value < b.value; }
template <class T>
constexpr bool operator>(const Dual<T>& a, const Dual<T>& b) { return a.value > b.value; }
template <class T>
constexpr bool operator<=(const Dual<T>& a, const Dual<T>& b) { return a.value <= b.value; }
template <class T>
constexpr bool operator>=(const Dual<T>& a, const Dual<T>& b) { return a.value >= b.value; }
template <class T>
constexpr bool operator==(const Dual<T>& a, const Dual<T>& b) {
  return a.value == b.value && a.tangent == b.tangent;
}

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};
template <class T>
inline constexpr bool is_dual_v = is_dual<T>::value;

/// Underlying real type: `float` for `Dual<float>`, identity otherwise.
template <class T>
struct real_of {
  using type = T;
};
template <class T>
struct real_of<Dual<T>> {
  using type = T;
};
template <class T>
using real_of_t = typename real_of<T>::type;

template <class T>
inline bool is_finite(T x) {
  if constexpr (is_dual_v<T>) {
    return std::isfinite(x.value) && std::isfinite(x.tangent);
  } else {
    return std::isfinite(x);
  }
}

/// Primal value as double, for logging and metrics.
template <class T>
inline double primal(T x) {
  if constexpr (is_dual_v<T>) {
    return static_cast<double>(x.value);
  } else {
    return static_cast<double>(x);
  }
}

}  // namespace metasci

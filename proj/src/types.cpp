#include "gridsync/types.hpp"

#include <cmath>
#include <numbers>

namespace gridsync {

double Phasor::magnitude() const { return std::hypot(re, im); }

double Phasor::angle() const {
    double a = std::atan2(im, re);
    // atan2 returns [-pi, pi]; fold the -pi endpoint onto +pi so the result
    // lies in (-pi, pi].
    if (a <= -std::numbers::pi) a = std::numbers::pi;
    return a;
}

Phasor Phasor::from_polar(double mag, double ang) {
    return {mag * std::cos(ang), mag * std::sin(ang)};
}

Phasor phasor_div(const Phasor& num, const Phasor& den) {
    const double d2 = den.re * den.re + den.im * den.im;
    if (std::sqrt(d2) < 1e-12) {
        throw DivisionBySingularPhasor("phasor division by a near-zero denominator");
    }
    return {(num.re * den.re + num.im * den.im) / d2,
            (num.im * den.re - num.re * den.im) / d2};
}

double PerUnitBase::omega0() const { return 2.0 * std::numbers::pi * f_nom; }

void PerUnitBase::validate() const {
    if (!(s_base > 0.0) || !(v_base > 0.0) || !(f_nom > 0.0)) {
        throw ConfigError("per-unit base fields must all be strictly positive");
    }
}

double reactance_pu(double l_henries, const PerUnitBase& base) {
    base.validate();
    if (l_henries < 0.0) throw ConfigError("inductance must be non-negative");
    return 2.0 * std::numbers::pi * base.f_nom * l_henries / base.z_base();
}

double inductance_from_pu(double x_pu, const PerUnitBase& base) {
    base.validate();
    return x_pu * base.z_base() / (2.0 * std::numbers::pi * base.f_nom);
}

double Matrix2::spectral_norm() const {
    const double f2 = m00 * m00 + m01 * m01 + m10 * m10 + m11 * m11;
    const double d = det();
    double disc = f2 * f2 - 4.0 * d * d;
    if (disc < 0.0) disc = 0.0;  // guard tiny negative round-off
    return std::sqrt((f2 + std::sqrt(disc)) / 2.0);
}

Matrix2 Matrix2::inverse() const {
    const double d = det();
    if (d == 0.0) throw SingularMatrix("2x2 matrix is singular");
    return {m11 / d, -m01 / d, -m10 / d, m00 / d};
}

Matrix2 Matrix2::operator*(const Matrix2& o) const {
    return {m00 * o.m00 + m01 * o.m10, m00 * o.m01 + m01 * o.m11,
            m10 * o.m00 + m11 * o.m10, m10 * o.m01 + m11 * o.m11};
}

}  // namespace gridsync

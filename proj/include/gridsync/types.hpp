#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace gridsync {

// ---------------------------------------------------------------------------
// Error hierarchy. Every failure the library can signal derives from Error,
// so callers may catch the whole family or individual conditions.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

// Raised by phasor_div when the denominator magnitude is below 1e-12.
struct DivisionBySingularPhasor : Error {
    using Error::Error;
};

// Raised by diff() when two samples are not exactly one sampling interval apart.
struct NonAdjacentSamples : Error {
    using Error::Error;
};

// Raised by solve_pair() when the current difference is too small to divide by.
struct SingularDiff : Error {
    using Error::Error;
};

// Raised by the windowed least-squares solve when the normal equations are
// ill-conditioned beyond recovery.
struct RankDeficient : Error {
    using Error::Error;
};

// Raised by the power-angle acceleration evaluation when the algebraic
// denominator vanishes (invalid gain/operating-point combination).
struct SingularDenominator : Error {
    using Error::Error;
};

// Raised by a 2x2 inversion attempt on a singular matrix.
struct SingularMatrix : Error {
    using Error::Error;
};

// Raised by relative_error_bound when the voltage change does not exceed the
// potential drift, so no finite bound exists.
struct BoundUndefined : Error {
    using Error::Error;
};

// Raised by the current-limit search when zero current already loses sync.
struct NoStableCurrent : Error {
    using Error::Error;
};

// Raised by the current-limit search when a bracket endpoint classifies
// Undecided; the caller should extend the simulated horizon.
struct UndecidedBoundary : Error {
    using Error::Error;
};

// Raised by network reduction when the measurement bus is isolated from every
// source and ground tie.
struct DisconnectedPcc : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Phasor: complex per-unit quantity in the synchronous reference frame.
// ---------------------------------------------------------------------------

struct Phasor {
    double re = 0.0;
    double im = 0.0;

    double magnitude() const;
    // Principal angle in (-pi, pi].
    double angle() const;

    std::complex<double> to_complex() const { return {re, im}; }
    static Phasor from_complex(std::complex<double> c) { return {c.real(), c.imag()}; }
    static Phasor from_polar(double mag, double ang);

    Phasor operator+(const Phasor& o) const { return {re + o.re, im + o.im}; }
    Phasor operator-(const Phasor& o) const { return {re - o.re, im - o.im}; }
    Phasor operator-() const { return {-re, -im}; }
    Phasor operator*(const Phasor& o) const {
        return {re * o.re - im * o.im, re * o.im + im * o.re};
    }
    Phasor operator*(double s) const { return {re * s, im * s}; }
};

inline Phasor operator*(double s, const Phasor& p) { return p * s; }

// Complex quotient num/den; throws DivisionBySingularPhasor when
// |den| < 1e-12.
Phasor phasor_div(const Phasor& num, const Phasor& den);

// ---------------------------------------------------------------------------
// Per-unit base and conversions.
// ---------------------------------------------------------------------------

struct PerUnitBase {
    double s_base = 750.0;  // MVA
    double v_base = 230.0;  // kV (line)
    double f_nom = 50.0;    // Hz

    double z_base() const { return v_base * v_base / s_base; }
    double omega0() const;  // 2*pi*f_nom, rad/s

    // Throws ConfigError unless every field is strictly positive.
    void validate() const;
};

// 2*pi*f_nom*L / z_base; requires l_henries >= 0.
double reactance_pu(double l_henries, const PerUnitBase& base);

// Inverse of reactance_pu.
double inductance_from_pu(double x_pu, const PerUnitBase& base);

// ---------------------------------------------------------------------------
// Grid-equivalent parameters and measurement sample.
// ---------------------------------------------------------------------------

struct TheveninParams {
    Phasor e;        // equivalent potential, pu
    double r = 0.0;  // series resistance, pu
    double x = 0.0;  // series reactance, pu
};

// One synchronized measurement at the point of common connection.
//
// Sign convention (used everywhere in this library): `i` is the converter
// output current measured at the PCC, positive flowing from the converter
// into the grid. With that orientation the network law reads
//     v = e + (r + jx) * i
// so an impedance solved from differences is +dv/di, and the potential
// back-solve is e = v - (r + jx) * i.
struct PmuSample {
    double t = 0.0;  // s
    Phasor v;        // PCC voltage, pu
    Phasor i;        // converter output current, pu (converter -> grid positive)
};

// Converter current command/state expressed in the PLL dq frame.
struct DqCurrent {
    double i_d = 0.0;  // active-axis current, pu
    double i_q = 0.0;  // reactive-axis current, pu
};

// ---------------------------------------------------------------------------
// Matrix2: real 2x2 matrix with closed-form spectral norm and inverse.
// The measurement-difference matrix [[di_re, -di_im], [di_im, di_re]] is the
// canonical instance, but all operations are valid for any entries.
// ---------------------------------------------------------------------------

struct Matrix2 {
    double m00 = 0.0, m01 = 0.0;
    double m10 = 0.0, m11 = 0.0;

    // The complex-multiplication embedding of (re + j*im).
    static Matrix2 from_complex_embedding(double re, double im) {
        return {re, -im, im, re};
    }

    double det() const { return m00 * m11 - m01 * m10; }

    // Largest singular value, from the closed-form 2x2 SVD:
    // sigma^2 = (|M|_F^2 + sqrt(|M|_F^4 - 4 det^2)) / 2.
    double spectral_norm() const;

    // Adjugate over determinant; throws SingularMatrix when |det| is zero.
    Matrix2 inverse() const;

    Matrix2 operator*(const Matrix2& o) const;
};

}  // namespace gridsync

#include "gridsync/estimator.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <deque>

namespace gridsync {

namespace {

constexpr double kConstraintSlack = 1e-9;

// Constraint set shared by the gate and the post-solve re-check. Tiny
// negative r or x from round-off is tolerated here and clamped to zero by the
// caller before an estimate is published.
bool within_constraints(const Impedance& z, double e_mag, const GateConfig& cfg) {
    if (z.r < -kConstraintSlack || z.x < -kConstraintSlack) return false;
    if (z.x > cfg.x_max + kConstraintSlack) return false;
    if (z.r > z.x + kConstraintSlack) return false;
    if (e_mag > cfg.e_max + kConstraintSlack) return false;
    return true;
}

Impedance clamp_nonnegative(Impedance z) {
    if (z.r < 0.0) z.r = 0.0;
    if (z.x < 0.0) z.x = 0.0;
    return z;
}

}  // namespace

void GateConfig::validate() const {
    if (!(dv_threshold > 0.0) || !(x_max > 0.0) || !(e_max > 0.0) || window_m < 2) {
        throw ConfigError("gate thresholds must be positive and window length >= 2");
    }
}

void BoundInputs::validate() const {
    if (!(t_d0p > 0.0) || !(d_efd_max > 0.0) || !(dT >= 0.0)) {
        throw ConfigError("bound inputs must be positive (interval may be zero)");
    }
}

DiffSample diff(const PmuSample& prev, const PmuSample& next, double expected_dt) {
    if (std::abs((next.t - prev.t) - expected_dt) > 1e-9) {
        throw NonAdjacentSamples("samples are not one sampling interval apart");
    }
    return {next.t, next.v - prev.v, next.i - prev.i, next};
}

Impedance solve_pair(const DiffSample& d) {
    if (d.di.magnitude() <= 1e-9) {
        throw SingularDiff("current change too small for a pair solve");
    }
    const Phasor z = phasor_div(d.dv, d.di);
    return {z.re, z.im};
}

Phasor estimate_potential(const PmuSample& s, const Impedance& z) {
    const Phasor zi{z.r * s.i.re - z.x * s.i.im, z.r * s.i.im + z.x * s.i.re};
    return s.v - zi;
}

bool gate(const DiffSample& d, const GateConfig& cfg) {
    cfg.validate();
    if (d.dv.magnitude() < cfg.dv_threshold) return false;
    Impedance z;
    try {
        z = solve_pair(d);
    } catch (const Error&) {
        return false;
    }
    const double e_mag = estimate_potential(d.endpoint, clamp_nonnegative(z)).magnitude();
    return within_constraints(z, e_mag, cfg);
}

Impedance estimate(std::span<const DiffSample> window, const GateConfig& cfg) {
    cfg.validate();
    if (window.size() < 2) {
        throw ConfigError("least squares needs at least two differences");
    }
    // Each difference contributes rows [di_re, -di_im; di_im, di_re] against
    // [dv_re, dv_im]; accumulate the 2x2 normal equations directly.
    double a00 = 0.0, a01 = 0.0, a11 = 0.0;
    double b0 = 0.0, b1 = 0.0;
    for (const auto& d : window) {
        const double cre = d.di.re, cim = d.di.im;
        a00 += cre * cre + cim * cim;
        a01 += 0.0;  // the embedding's cross terms cancel exactly
        a11 += cim * cim + cre * cre;
        b0 += cre * d.dv.re + cim * d.dv.im;
        b1 += -cim * d.dv.re + cre * d.dv.im;
    }
    const double tr = a00 + a11;
    const double det = a00 * a11 - a01 * a01;
    double disc = tr * tr - 4.0 * det;
    if (disc < 0.0) disc = 0.0;
    const double lam_max = (tr + std::sqrt(disc)) / 2.0;
    const double lam_min = (tr - std::sqrt(disc)) / 2.0;
    if (!(lam_min > 0.0) || lam_max / lam_min > 1e12) {
        throw RankDeficient("normal equations are numerically singular");
    }
    const double inv_det = 1.0 / det;
    return {(a11 * b0 - a01 * b1) * inv_det, (a00 * b1 - a01 * b0) * inv_det};
}

StreamEstimator::StreamEstimator(const GateConfig& cfg, double expected_dt)
    : cfg_(cfg), dt_(expected_dt) {
    cfg_.validate();
    if (!(expected_dt > 0.0)) throw ConfigError("sampling interval must be positive");
}

std::optional<EstimateRecord> StreamEstimator::push(const PmuSample& s) {
    if (!prev_) {
        prev_ = s;
        return std::nullopt;
    }
    const DiffSample d = diff(*prev_, s, dt_);
    prev_ = s;

    const bool kept = gate(d, cfg_);
    if (kept) {
        window_.push_back(d);
        while (window_.size() > static_cast<std::size_t>(cfg_.window_m)) {
            window_.erase(window_.begin());
        }
    }

    EstimateRecord rec;
    rec.t = s.t;
    rec.n_selected = static_cast<int>(window_.size());
    rec.status = RecordStatus::Held;

    if (kept && window_.size() >= 2) {
        try {
            const Impedance z = clamp_nonnegative(estimate(window_, cfg_));
            const Phasor e = estimate_potential(s, z);
            if (within_constraints(z, e.magnitude(), cfg_)) {
                last_z_ = z;
                last_e_ = e;
                rec.status = RecordStatus::Updated;
            }
        } catch (const Error&) {
            // degenerate window: hold the previous estimate
        }
    }
    rec.z = last_z_;
    rec.e = last_e_;
    return rec;
}

std::vector<EstimateRecord> run_stream(std::span<const PmuSample> samples,
                                       const GateConfig& cfg, double expected_dt) {
    StreamEstimator est(cfg, expected_dt);
    std::vector<EstimateRecord> out;
    if (samples.size() >= 2) out.reserve(samples.size() - 1);
    for (const auto& s : samples) {
        if (auto rec = est.push(s)) out.push_back(*rec);
    }
    return out;
}

double de_max(const BoundInputs& b) {
    b.validate();
    return b.d_efd_max * b.dT / b.t_d0p;
}

double required_dv(double k_percent, double de) {
    if (!(k_percent > 0.0)) throw ConfigError("error percentage must be positive");
    return (100.0 / k_percent + 1.0) * de;
}

double relative_error_bound(double dv_norm, double de_norm) {
    if (de_norm < 0.0) throw ConfigError("drift norm must be non-negative");
    if (dv_norm <= de_norm) {
        throw BoundUndefined("voltage change does not dominate the potential drift");
    }
    return de_norm / (dv_norm - de_norm);
}

std::vector<EstimateRecord> baseline_window_ls(std::span<const PmuSample> samples,
                                               const GateConfig& cfg,
                                               double expected_dt) {
    cfg.validate();
    std::vector<EstimateRecord> out;
    if (samples.size() < 2) return out;
    out.reserve(samples.size() - 1);

    std::deque<DiffSample> window;
    std::optional<Impedance> last_z;
    std::optional<Phasor> last_e;

    for (std::size_t k = 1; k < samples.size(); ++k) {
        window.push_back(diff(samples[k - 1], samples[k], expected_dt));
        while (window.size() > static_cast<std::size_t>(cfg.window_m)) {
            window.pop_front();
        }
        EstimateRecord rec;
        rec.t = samples[k].t;
        rec.n_selected = static_cast<int>(window.size());
        rec.status = RecordStatus::Held;
        if (window.size() >= 2) {
            const std::vector<DiffSample> view(window.begin(), window.end());
            try {
                last_z = estimate(view, cfg);
                last_e = estimate_potential(samples[k], *last_z);
                rec.status = RecordStatus::Updated;
            } catch (const Error&) {
                // ill-conditioned window: hold
            }
        }
        rec.z = last_z;
        rec.e = last_e;
        out.push_back(rec);
    }
    return out;
}

std::vector<EstimateRecord> baseline_rls(std::span<const PmuSample> samples,
                                         const RlsConfig& cfg, double expected_dt) {
    if (!(cfg.forgetting > 0.0) || cfg.forgetting > 1.0 || !(cfg.p0 > 0.0)) {
        throw ConfigError("forgetting factor must lie in (0, 1] and p0 be positive");
    }
    std::vector<EstimateRecord> out;
    if (samples.size() < 2) return out;
    out.reserve(samples.size() - 1);

    Eigen::Vector2d theta = Eigen::Vector2d::Zero();
    Eigen::Matrix2d P = cfg.p0 * Eigen::Matrix2d::Identity();
    int seen = 0;

    for (std::size_t k = 1; k < samples.size(); ++k) {
        const DiffSample d = diff(samples[k - 1], samples[k], expected_dt);
        Eigen::Matrix2d H;
        H << d.di.re, -d.di.im, d.di.im, d.di.re;
        Eigen::Vector2d y(d.dv.re, d.dv.im);

        const Eigen::Matrix2d S =
            cfg.forgetting * Eigen::Matrix2d::Identity() + H * P * H.transpose();
        const Eigen::Matrix2d K = P * H.transpose() * S.inverse();
        theta += K * (y - H * theta);
        P = (P - K * H * P) / cfg.forgetting;
        ++seen;

        EstimateRecord rec;
        rec.t = samples[k].t;
        rec.n_selected = seen;
        rec.status = RecordStatus::Updated;
        rec.z = Impedance{theta(0), theta(1)};
        rec.e = estimate_potential(samples[k], *rec.z);
        out.push_back(rec);
    }
    return out;
}

std::vector<EstimateRecord> baseline_dv_di(std::span<const PmuSample> samples,
                                           double expected_dt) {
    std::vector<EstimateRecord> out;
    if (samples.size() < 2) return out;
    out.reserve(samples.size() - 1);

    std::optional<Impedance> last_z;
    std::optional<Phasor> last_e;

    for (std::size_t k = 1; k < samples.size(); ++k) {
        const DiffSample d = diff(samples[k - 1], samples[k], expected_dt);
        EstimateRecord rec;
        rec.t = samples[k].t;
        rec.status = RecordStatus::Held;
        try {
            last_z = solve_pair(d);
            last_e = estimate_potential(samples[k], *last_z);
            rec.status = RecordStatus::Updated;
            rec.n_selected = 1;
        } catch (const Error&) {
            rec.n_selected = 0;
        }
        rec.z = last_z;
        rec.e = last_e;
        out.push_back(rec);
    }
    return out;
}

}  // namespace gridsync

#include "gridsync/sim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

namespace gridsync {

namespace {

using Cx = std::complex<double>;

// Deterministic Gaussian draws: top-53-bit uniforms through the Box-Muller
// transform, so noisy streams are reproducible across platforms.
class GaussianSource {
public:
    explicit GaussianSource(std::uint64_t seed) : eng_(seed) {}

    double next() {
        if (have_) {
            have_ = false;
            return cached_;
        }
        const double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1p-53;  // (0,1]
        const double u2 = static_cast<double>(eng_() >> 11) * 0x1p-53;          // [0,1)
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(a);
        have_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 eng_;
    bool have_ = false;
    double cached_ = 0.0;
};

struct LoopOut {
    double u = 0.0;
    double rate = 0.0;   // clamped, rad/s
    double i_dot = 0.0;  // accumulator rate
};

// Same closed algebraic loop as the standalone power-angle model, evaluated
// against the live grid equivalent (e_oc, z).
LoopOut closed_loop(double delta, double integ, double i_d, double i_q,
                    const Cx& e_oc, double r_te, double x_te, const PllParams& pll) {
    const double emag = std::abs(e_oc);
    const double eang = std::arg(e_oc);
    const double xid = x_te * i_d;
    const double den = 1.0 - pll.kp * xid / pll.omega0;
    if (std::abs(den) < 1e-9) {
        throw SingularDenominator("loop gain cancels the inductive feedthrough");
    }
    const double core = -emag * std::sin(delta - eang) + xid + r_te * i_q;

    LoopOut out;
    out.u = (core + integ * xid / pll.omega0) / den;
    out.rate = pll.kp * out.u + integ;
    bool hi = false, lo = false;
    if (out.rate > pll.freq_limit) {
        hi = true;
        out.rate = pll.freq_limit;
        out.u = core + out.rate * xid / pll.omega0;
    } else if (out.rate < -pll.freq_limit) {
        lo = true;
        out.rate = -pll.freq_limit;
        out.u = core + out.rate * xid / pll.omega0;
    }
    out.i_dot = pll.ki * out.u;
    if ((hi && out.u > 0.0) || (lo && out.u < 0.0)) out.i_dot = 0.0;
    return out;
}

}  // namespace

void Scenario::validate() const {
    base.validate();
    net.validate();
    gate.validate();
    if (!(t_end > 0.0) || !(dt > 0.0) || !(pmu_dt > 0.0)) {
        throw ConfigError("horizon, step and sampling interval must be positive");
    }
    const long long stride = std::llround(pmu_dt / dt);
    if (stride < 1 || std::abs(static_cast<double>(stride) * dt - pmu_dt) > 1e-12) {
        throw ConfigError("sampling interval must be an integer multiple of the step");
    }
    if (dt > 1e-4) throw ConfigError("integration step must not exceed 100 us");
    if (!(conv.tracking_tau > 0.0)) throw ConfigError("tracking time constant must be positive");
    if (conv.command_delay < 0.0) throw ConfigError("command delay must be non-negative");
    if (!(conv.i_ceiling > 0.0)) throw ConfigError("current ceiling must be positive");
    for (double i_d : {conv.i_d_prefault, conv.fault_i_d, conv.postclear_i_d}) {
        if (std::hypot(i_d, conv.i_q) > conv.i_ceiling + 1e-12) {
            throw ConfigError("a commanded current exceeds the converter ceiling");
        }
    }
    if (noise.sigma < 0.0) throw ConfigError("noise level must be non-negative");
    if (controller.enabled) {
        if (!(controller.margin > 0.0) || controller.margin > 1.0) {
            throw ConfigError("controller margin must lie in (0, 1]");
        }
    }
}

struct Simulator::Impl {
    Scenario scn;
    PllParams pll;

    // Topology epochs: boundary start times and the solved coefficients.
    std::vector<double> boundaries;
    std::vector<NetworkSolution> epochs;

    // Source bookkeeping: fixed EMFs for ideal sources, state slots for gens.
    std::vector<Cx> ideal_emf;           // per source; gens hold 0 here
    std::vector<bool> is_gen;            // per source
    std::vector<FluxDecayGenParams> gen_params;  // in source order
    std::vector<double> v_ref;           // per gen, trimmed at initialization

    SimState st;
    int epoch_used = 0;
    double delta0 = 0.0;

    bool cmd_override = false;
    DqCurrent cmd_now;

    // Scratch buffers for the fixed-step integrator.
    std::vector<double> y, k1, k2, k3, k4, tmp;

    int epoch_for(double t) const {
        int e = 0;
        for (std::size_t i = 1; i < boundaries.size(); ++i) {
            if (t >= boundaries[i] - 1e-12) e = static_cast<int>(i);
        }
        return e;
    }

    DqCurrent scheduled_command(double t) const {
        if (cmd_override) return cmd_now;
        double i_d = scn.conv.i_d_prefault;
        if (!scn.net.faults.empty()) {
            const FaultEvent& f = scn.net.faults.front();
            if (t >= f.t_clear + scn.conv.command_delay) {
                i_d = scn.conv.postclear_i_d;
            } else if (t >= f.t_apply + scn.conv.command_delay) {
                i_d = scn.conv.fault_i_d;
            }
        }
        return {i_d, scn.conv.i_q};
    }

    void emfs_from(const std::vector<double>& yv, std::vector<Cx>& out) const {
        out.resize(ideal_emf.size());
        std::size_t g = 0;
        for (std::size_t k = 0; k < ideal_emf.size(); ++k) {
            if (is_gen[k]) {
                out[k] = Cx{yv[4 + 2 * g], 0.0};
                ++g;
            } else {
                out[k] = ideal_emf[k];
            }
        }
    }

    std::vector<Cx> emf_scratch;

    void deriv(const std::vector<double>& yv, std::vector<double>& dy,
               const NetworkSolution& sol, const DqCurrent& cmd) {
        const double i_d = yv[0], i_q = yv[1], delta = yv[2], integ = yv[3];
        emfs_from(yv, emf_scratch);

        Cx e_oc{0.0, 0.0};
        for (std::size_t k = 0; k < emf_scratch.size(); ++k) {
            e_oc += sol.e_coeff[k] * emf_scratch[k];
        }
        const double r_te = std::max(sol.z.real(), 0.0);
        const double x_te = sol.z.imag();

        const LoopOut lp = closed_loop(delta, integ, i_d, i_q, e_oc, r_te, x_te, pll);

        dy.assign(yv.size(), 0.0);
        dy[0] = (cmd.i_d - i_d) / scn.conv.tracking_tau;
        dy[1] = (cmd.i_q - i_q) / scn.conv.tracking_tau;
        dy[2] = lp.rate;
        dy[3] = lp.i_dot;

        if (!gen_params.empty()) {
            const Cx imc = Cx{i_d, i_q} * std::exp(Cx{0.0, delta});
            for (std::size_t g = 0; g < gen_params.size(); ++g) {
                const auto& gp = gen_params[g];
                const auto& row = sol.gens[g];
                Cx ig = row.i_inj * imc;
                Cx vb = row.v_inj * imc;
                for (std::size_t k = 0; k < emf_scratch.size(); ++k) {
                    ig += row.i_coeff[k] * emf_scratch[k];
                    vb += row.v_coeff[k] * emf_scratch[k];
                }
                const double i_dg = -ig.imag();
                const double vt = std::abs(vb);
                const double e_qp = yv[4 + 2 * g];
                const double e_fd = yv[5 + 2 * g];
                dy[4 + 2 * g] = (e_fd - e_qp - (gp.x_d - gp.x_dp) * i_dg) / gp.t_d0p;
                double defd = (gp.avr_gain * (v_ref[g] - vt) - e_fd) / gp.avr_tau;
                if (e_fd >= gp.e_fd_max && defd > 0.0) defd = 0.0;
                if (e_fd <= 0.0 && defd < 0.0) defd = 0.0;
                dy[5 + 2 * g] = defd;
            }
        }
    }

    void pack(std::vector<double>& yv) const {
        yv.resize(4 + 2 * gen_params.size());
        yv[0] = st.i_d;
        yv[1] = st.i_q;
        yv[2] = st.delta;
        yv[3] = st.integ;
        for (std::size_t g = 0; g < st.gens.size(); ++g) {
            yv[4 + 2 * g] = st.gens[g].e_qp;
            yv[5 + 2 * g] = st.gens[g].e_fd;
        }
    }

    void unpack(const std::vector<double>& yv) {
        st.i_d = yv[0];
        st.i_q = yv[1];
        st.delta = yv[2];
        st.integ = yv[3];
        for (std::size_t g = 0; g < st.gens.size(); ++g) {
            st.gens[g].e_qp = yv[4 + 2 * g];
            st.gens[g].e_fd =
                std::clamp(yv[5 + 2 * g], 0.0, gen_params[g].e_fd_max);
        }
    }

    struct Measurement {
        Cx v;
        Cx i;
        double omega1;
        Cx e_oc;
        double r_te;
        double x_te;
    };

    Measurement measure_at(const NetworkSolution& sol) {
        std::vector<double> yv;
        pack(yv);
        emfs_from(yv, emf_scratch);
        Cx e_oc{0.0, 0.0};
        for (std::size_t k = 0; k < emf_scratch.size(); ++k) {
            e_oc += sol.e_coeff[k] * emf_scratch[k];
        }
        const double r_te = std::max(sol.z.real(), 0.0);
        const double x_te = sol.z.imag();
        const LoopOut lp =
            closed_loop(st.delta, st.integ, st.i_d, st.i_q, e_oc, r_te, x_te, pll);
        const double omega1 = pll.omega0 + lp.rate;
        const Cx imc = Cx{st.i_d, st.i_q} * std::exp(Cx{0.0, st.delta});
        const Cx v = e_oc + Cx{r_te, (omega1 / pll.omega0) * x_te} * imc;
        return {v, imc, omega1, e_oc, r_te, x_te};
    }

    TheveninParams truth_at(const NetworkSolution& sol) {
        std::vector<double> yv;
        pack(yv);
        emfs_from(yv, emf_scratch);
        Cx e_oc{0.0, 0.0};
        for (std::size_t k = 0; k < emf_scratch.size(); ++k) {
            e_oc += sol.e_coeff[k] * emf_scratch[k];
        }
        TheveninParams te;
        te.e = Phasor::from_complex(e_oc);
        te.r = std::max(sol.z.real(), 0.0);
        te.x = sol.z.imag();
        return te;
    }
};

Simulator::Simulator(const Scenario& scn) : impl_(std::make_unique<Impl>()) {
    scn.validate();
    Impl& im = *impl_;
    im.scn = scn;

    const double omega0 = scn.base.omega0();
    im.pll = PllParams::from_damping(
        scn.pll.damping, scn.pll.omega_n > 0.0 ? scn.pll.omega_n : -1.0, omega0,
        scn.pll.freq_limit > 0.0 ? scn.pll.freq_limit : -1.0);

    // Epoch boundaries: start of run plus every fault application/clearing.
    im.boundaries.push_back(0.0);
    for (const auto& f : scn.net.faults) {
        if (f.t_apply > 0.0) im.boundaries.push_back(f.t_apply);
        im.boundaries.push_back(f.t_clear);
    }
    std::sort(im.boundaries.begin(), im.boundaries.end());
    im.boundaries.erase(std::unique(im.boundaries.begin(), im.boundaries.end()),
                        im.boundaries.end());
    for (double b : im.boundaries) {
        im.epochs.push_back(solve_topology(scn.net, scn.base, b));
    }

    for (const auto& s : scn.net.sources) {
        if (const auto* ideal = std::get_if<IdealSource>(&s.kind)) {
            im.ideal_emf.push_back(ideal->e.to_complex());
            im.is_gen.push_back(false);
        } else {
            im.ideal_emf.push_back(Cx{0.0, 0.0});
            im.is_gen.push_back(true);
            im.gen_params.push_back(std::get<FluxDecayGenParams>(s.kind));
        }
    }

    // Steady-state initialization at the pre-event command.
    im.st.t = 0.0;
    im.st.i_d = scn.conv.i_d_prefault;
    im.st.i_q = scn.conv.i_q;
    im.st.integ = 0.0;
    im.st.gens.resize(im.gen_params.size());
    for (std::size_t g = 0; g < im.gen_params.size(); ++g) {
        im.st.gens[g].e_qp = im.gen_params[g].e_q0;
    }

    const NetworkSolution& sol0 = im.epochs.front();
    std::vector<double> yv;
    im.st.delta = 0.0;  // placeholder for pack()
    im.pack(yv);
    im.emfs_from(yv, im.emf_scratch);
    Cx e_oc{0.0, 0.0};
    for (std::size_t k = 0; k < im.emf_scratch.size(); ++k) {
        e_oc += sol0.e_coeff[k] * im.emf_scratch[k];
    }
    const double emag = std::abs(e_oc);
    const double r_te = std::max(sol0.z.real(), 0.0);
    const double x_te = sol0.z.imag();
    if (!(emag > 0.0)) throw ConfigError("pre-event open-circuit potential is zero");
    const double s = (x_te * im.st.i_d + r_te * im.st.i_q) / emag;
    if (s > 1.0 || s < -1.0) {
        throw ConfigError("pre-event command admits no operating point");
    }
    im.delta0 = std::arg(e_oc) + std::asin(s);
    im.st.delta = im.delta0;

    // Trim each regulator so every state derivative vanishes at t = 0.
    if (!im.gen_params.empty()) {
        const Cx imc = Cx{im.st.i_d, im.st.i_q} * std::exp(Cx{0.0, im.st.delta});
        im.pack(yv);
        im.emfs_from(yv, im.emf_scratch);
        im.v_ref.resize(im.gen_params.size());
        for (std::size_t g = 0; g < im.gen_params.size(); ++g) {
            const auto& gp = im.gen_params[g];
            const auto& row = sol0.gens[g];
            Cx ig = row.i_inj * imc;
            Cx vb = row.v_inj * imc;
            for (std::size_t k = 0; k < im.emf_scratch.size(); ++k) {
                ig += row.i_coeff[k] * im.emf_scratch[k];
                vb += row.v_coeff[k] * im.emf_scratch[k];
            }
            const double i_dg = -ig.imag();
            double e_fd0 = gp.e_q0 + (gp.x_d - gp.x_dp) * i_dg;
            e_fd0 = std::clamp(e_fd0, 0.0, gp.e_fd_max);
            im.st.gens[g].e_fd = e_fd0;
            im.v_ref[g] = std::abs(vb) + e_fd0 / gp.avr_gain;
        }
    }
    im.epoch_used = 0;
}

Simulator::~Simulator() = default;
Simulator::Simulator(Simulator&&) noexcept = default;
Simulator& Simulator::operator=(Simulator&&) noexcept = default;

void Simulator::step() {
    Impl& im = *impl_;
    const double t = im.st.t;
    const double dt = im.scn.dt;
    const int e = im.epoch_for(t);
    const NetworkSolution& sol = im.epochs[e];
    const DqCurrent cmd = im.scheduled_command(t);

    im.pack(im.y);
    const std::size_t n = im.y.size();
    im.deriv(im.y, im.k1, sol, cmd);
    im.tmp.resize(n);
    for (std::size_t i = 0; i < n; ++i) im.tmp[i] = im.y[i] + 0.5 * dt * im.k1[i];
    im.deriv(im.tmp, im.k2, sol, cmd);
    for (std::size_t i = 0; i < n; ++i) im.tmp[i] = im.y[i] + 0.5 * dt * im.k2[i];
    im.deriv(im.tmp, im.k3, sol, cmd);
    for (std::size_t i = 0; i < n; ++i) im.tmp[i] = im.y[i] + dt * im.k3[i];
    im.deriv(im.tmp, im.k4, sol, cmd);
    for (std::size_t i = 0; i < n; ++i) {
        im.y[i] += dt / 6.0 * (im.k1[i] + 2.0 * im.k2[i] + 2.0 * im.k3[i] + im.k4[i]);
    }
    im.unpack(im.y);
    im.st.t = t + dt;
    im.epoch_used = e;
}

double Simulator::time() const { return impl_->st.t; }
const SimState& Simulator::state() const { return impl_->st; }
const PllParams& Simulator::pll() const { return impl_->pll; }
double Simulator::prefault_delta() const { return impl_->delta0; }

PmuSample Simulator::measure() const {
    Impl& im = *impl_;
    const auto m = im.measure_at(im.epochs[im.epoch_used]);
    return {im.st.t, Phasor::from_complex(m.v), Phasor::from_complex(m.i)};
}

StatePoint Simulator::state_point() const {
    Impl& im = *impl_;
    const auto m = im.measure_at(im.epochs[im.epoch_used]);
    StatePoint p;
    p.t = im.st.t;
    p.v = Phasor::from_complex(m.v);
    p.i_d = im.st.i_d;
    p.i_q = im.st.i_q;
    p.delta = im.st.delta;
    p.omega1 = m.omega1;
    const Cx s = m.v * std::conj(m.i);
    p.p = s.real();
    p.q = s.imag();
    p.truth_x = m.x_te;
    p.truth_e = std::abs(m.e_oc);
    p.truth_r = m.r_te;
    p.truth_e_ang = std::arg(m.e_oc);
    return p;
}

TheveninParams Simulator::truth() const {
    Impl& im = *impl_;
    return im.truth_at(im.epochs[im.epoch_used]);
}

TheveninParams Simulator::truth_ahead() const {
    Impl& im = *impl_;
    return im.truth_at(im.epochs[im.epoch_for(im.st.t)]);
}

bool Simulator::topology_changes_next() const {
    Impl& im = *impl_;
    return im.epoch_for(im.st.t) != im.epoch_used;
}

void Simulator::set_command(const DqCurrent& cmd) {
    Impl& im = *impl_;
    if (std::hypot(cmd.i_d, cmd.i_q) > im.scn.conv.i_ceiling + 1e-12) {
        throw ConfigError("commanded current exceeds the converter ceiling");
    }
    im.cmd_override = true;
    im.cmd_now = cmd;
}

DqCurrent Simulator::active_command() const {
    return impl_->scheduled_command(impl_->st.t);
}

namespace {

SyncClass classify_run(const std::vector<StatePoint>& log,
                       const std::vector<double>& event_times,
                       const PllParams& pll, double delta0) {
    if (log.empty()) return SyncClass::Undecided;

    // Angle-slip latch against the drifting unstable angle; when no
    // equilibrium exists the reference freezes at the angle held when the
    // topology last changed.
    bool slipped = false;
    double ref_no_eq = delta0;
    std::size_t next_event = 0;
    for (const auto& p : log) {
        while (next_event < event_times.size() && p.t >= event_times[next_event] - 1e-12) {
            ref_no_eq = p.delta;
            ++next_event;
        }
        TheveninParams te;
        te.e = Phasor::from_polar(p.truth_e, p.truth_e_ang);
        te.r = p.truth_r;
        te.x = p.truth_x;
        const auto eq = equilibrium_points(te, {p.i_d, p.i_q});
        const double ref = (eq ? eq->delta_unstable : ref_no_eq) + 2.0 * std::numbers::pi;
        if (p.delta > ref) {
            slipped = true;
            break;
        }
    }
    if (slipped) return SyncClass::LossOfSync;

    const double t_last = log.back().t;
    bool pinned = true;
    for (const auto& p : log) {
        if (p.t < t_last - 0.2) continue;
        if (std::abs(p.omega1 - pll.omega0) < pll.freq_limit - 1e-9) {
            pinned = false;
            break;
        }
    }
    if (pinned) return SyncClass::LossOfSync;

    const double t_first = log.front().t;
    const double t_tail = t_last - 0.1 * (t_last - t_first);
    bool settled = true;
    for (const auto& p : log) {
        if (p.t < t_tail) continue;
        TheveninParams te;
        te.e = Phasor::from_polar(p.truth_e, p.truth_e_ang);
        te.r = p.truth_r;
        te.x = p.truth_x;
        const auto eq = equilibrium_points(te, {p.i_d, p.i_q});
        if (!eq || std::abs(p.delta - eq->delta_stable) >= 0.05 ||
            std::abs(p.omega1 - pll.omega0) >= 0.5) {
            settled = false;
            break;
        }
    }
    return settled ? SyncClass::Synchronous : SyncClass::Undecided;
}

}  // namespace

SimResult run_scenario(const Scenario& scn) {
    scn.validate();
    Simulator sim(scn);

    SimResult res;
    res.pll = sim.pll();
    res.prefault_delta0 = sim.prefault_delta();

    const long long n_steps = std::llround(scn.t_end / scn.dt);
    const long long stride = std::llround(scn.pmu_dt / scn.dt);

    GaussianSource rng(scn.noise.seed);
    const bool noisy = scn.noise.sigma > 0.0;

    StreamEstimator online(scn.gate, scn.pmu_dt);
    CurrentCommand prefault_cmd;
    prefault_cmd.i_d_ref = scn.conv.i_d_prefault;
    prefault_cmd.i_q_ref = scn.conv.i_q;
    prefault_cmd.issued_at = 0.0;
    prefault_cmd.basis = sim.truth();

    ImaxConfig imax_cfg;
    imax_cfg.tol = scn.controller.imax_tol;
    imax_cfg.t_end = scn.controller.imax_t_end;
    imax_cfg.dt = scn.controller.imax_dt;
    imax_cfg.i_ceiling = scn.controller.imax_ceiling;
    imax_cfg.delta0 = sim.prefault_delta();

    auto emit_sample = [&]() {
        PmuSample s = sim.measure();
        if (noisy) {
            s.v.re += scn.noise.sigma * rng.next();
            s.v.im += scn.noise.sigma * rng.next();
            s.i.re += scn.noise.sigma * rng.next();
            s.i.im += scn.noise.sigma * rng.next();
        }
        res.pmu.push_back(s);
        res.truth.push_back({s.t, sim.truth()});
        res.log.push_back(sim.state_point());

        if (scn.controller.enabled) {
            if (auto rec = online.push(s)) {
                res.estimates.push_back(*rec);
                if (rec->status == RecordStatus::Updated) {
                    const CurrentCommand cmd = command_from_estimate(
                        *rec, prefault_cmd, sim.pll(), scn.controller.margin, imax_cfg);
                    res.commands.push_back(cmd);
                    sim.set_command({cmd.i_d_ref, cmd.i_q_ref});
                }
            }
        }
    };

    emit_sample();
    for (long long k = 1; k <= n_steps; ++k) {
        if (sim.topology_changes_next()) {
            res.truth.push_back({sim.time(), sim.truth_ahead()});
        }
        sim.step();
        if (k % stride == 0) emit_sample();
    }

    std::vector<double> event_times;
    for (const auto& f : scn.net.faults) {
        event_times.push_back(f.t_apply);
        event_times.push_back(f.t_clear);
    }
    std::sort(event_times.begin(), event_times.end());
    res.classification =
        classify_run(res.log, event_times, sim.pll(), sim.prefault_delta());
    return res;
}

}  // namespace gridsync

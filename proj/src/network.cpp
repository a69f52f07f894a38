#include "gridsync/network.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>

namespace gridsync {

void FluxDecayGenParams::validate() const {
    if (!(x_d > x_dp) || !(x_dp > 0.0) || !(t_d0p > 0.0)) {
        throw ConfigError("generator reactances must satisfy x_d > x_dp > 0 and t_d0p > 0");
    }
    if (!(e_fd_max > 0.0) || !(avr_gain > 0.0) || !(avr_tau > 0.0)) {
        throw ConfigError("regulator parameters must be positive");
    }
}

void Network::validate() const {
    std::set<std::string> bus_set(buses.begin(), buses.end());
    if (bus_set.size() != buses.size()) throw ConfigError("duplicate bus names");
    if (!bus_set.count(pcc_bus)) throw ConfigError("pcc bus is not in the bus list");
    std::set<std::string> branch_ids;
    for (const auto& b : branches) {
        if (!(b.l_henries > 0.0)) {
            throw ConfigError("branch " + b.id + " must have positive inductance");
        }
        if (!bus_set.count(b.from) || !bus_set.count(b.to)) {
            throw ConfigError("branch " + b.id + " references an unknown bus");
        }
        if (!branch_ids.insert(b.id).second) {
            throw ConfigError("duplicate branch id " + b.id);
        }
    }
    for (const auto& s : sources) {
        if (!bus_set.count(s.bus)) throw ConfigError("source references an unknown bus");
        if (const auto* g = std::get_if<FluxDecayGenParams>(&s.kind)) g->validate();
    }
    for (const auto& f : faults) {
        if (!(f.t_clear > f.t_apply)) {
            throw ConfigError("fault clear time must follow apply time");
        }
        if (f.position < 0.0 || f.position > 1.0) {
            throw ConfigError("fault position must lie in [0, 1]");
        }
        if (!branch_ids.count(f.branch)) {
            throw ConfigError("fault references unknown branch " + f.branch);
        }
    }
}

std::vector<std::complex<double>> source_potentials(
    const Network& net, const std::vector<double>& gen_potentials) {
    std::vector<std::complex<double>> out;
    out.reserve(net.sources.size());
    std::size_t gen_idx = 0;
    for (const auto& s : net.sources) {
        if (const auto* ideal = std::get_if<IdealSource>(&s.kind)) {
            out.push_back(ideal->e.to_complex());
        } else {
            const auto& g = std::get<FluxDecayGenParams>(s.kind);
            const double e = gen_idx < gen_potentials.size() ? gen_potentials[gen_idx]
                                                             : g.e_q0;
            out.emplace_back(e, 0.0);
            ++gen_idx;
        }
    }
    return out;
}

namespace {

constexpr double kPosEps = 1e-9;

struct SubBranch {
    std::string a;
    std::string b;
    double x_pu = 0.0;
};

// The topology in force at a given time: sub-branches after fault splitting,
// plus the sets of nodes held at a known voltage.
struct Topology {
    std::vector<SubBranch> sub;
    std::map<std::string, std::complex<double>> known;  // node -> fixed voltage
    // Known nodes whose voltage tracks a source EMF: node -> source index.
    std::map<std::string, std::size_t> source_node;
    // Per regulated generator: (emf node, terminal bus, x_dp).
    struct GenRef {
        std::string emf_node;
        std::string bus;
        double x_dp;
    };
    std::vector<GenRef> gens;
};

Topology build_topology(const Network& net, const PerUnitBase& base, double at_time) {
    Topology topo;

    // Active faults and cleared branches.
    std::map<std::string, const FaultEvent*> active_fault;
    std::set<std::string> opened;
    for (const auto& f : net.faults) {
        if (at_time >= f.t_apply && at_time < f.t_clear) active_fault[f.branch] = &f;
        if (at_time >= f.t_clear && f.clearing_action == ClearingAction::OpenBranch) {
            opened.insert(f.branch);
        }
    }

    for (const auto& b : net.branches) {
        if (!b.in_service || opened.count(b.id)) continue;
        const double x = reactance_pu(b.l_henries, base);
        const auto it = active_fault.find(b.id);
        if (it == active_fault.end()) {
            topo.sub.push_back({b.from, b.to, x});
            continue;
        }
        const double p = it->second->position;
        if (p < kPosEps) {
            // Bolted fault at the sending bus: the bus itself is grounded.
            topo.known[b.from] = 0.0;
            topo.sub.push_back({b.from, b.to, x});
        } else if (p > 1.0 - kPosEps) {
            topo.known[b.to] = 0.0;
            topo.sub.push_back({b.from, b.to, x});
        } else {
            const std::string fault_node = b.id + "::fault";
            topo.known[fault_node] = 0.0;
            topo.sub.push_back({b.from, fault_node, p * x});
            topo.sub.push_back({fault_node, b.to, (1.0 - p) * x});
        }
    }

    std::size_t src_idx = 0;
    for (const auto& s : net.sources) {
        if (std::holds_alternative<IdealSource>(s.kind)) {
            topo.known[s.bus] = 0.0;  // value filled per solve
            topo.source_node[s.bus] = src_idx;
        } else {
            const auto& g = std::get<FluxDecayGenParams>(s.kind);
            const std::string emf = s.bus + "::emf";
            topo.known[emf] = 0.0;
            topo.source_node[emf] = src_idx;
            topo.sub.push_back({emf, s.bus, g.x_dp});
            topo.gens.push_back({emf, s.bus, g.x_dp});
        }
        ++src_idx;
    }
    return topo;
}

}  // namespace

NetworkSolution solve_topology(const Network& net, const PerUnitBase& base,
                               double at_time) {
    net.validate();
    base.validate();
    const Topology topo = build_topology(net, base, at_time);

    // Collect every node touched by an active sub-branch plus the buses.
    std::set<std::string> nodes(net.buses.begin(), net.buses.end());
    for (const auto& sb : topo.sub) {
        nodes.insert(sb.a);
        nodes.insert(sb.b);
    }
    for (const auto& [n, v] : topo.known) nodes.insert(n);

    // Connectivity from the measurement bus to any fixed-voltage node.
    {
        std::map<std::string, std::vector<std::string>> adj;
        for (const auto& sb : topo.sub) {
            adj[sb.a].push_back(sb.b);
            adj[sb.b].push_back(sb.a);
        }
        std::set<std::string> seen{net.pcc_bus};
        std::queue<std::string> q;
        q.push(net.pcc_bus);
        bool tied = topo.known.count(net.pcc_bus) > 0;
        while (!q.empty() && !tied) {
            const std::string cur = q.front();
            q.pop();
            for (const auto& nb : adj[cur]) {
                if (!seen.insert(nb).second) continue;
                if (topo.known.count(nb)) {
                    tied = true;
                    break;
                }
                q.push(nb);
            }
        }
        if (!tied) {
            throw DisconnectedPcc("measurement bus has no path to a source or ground");
        }
    }

    // Index the unknown nodes.
    std::map<std::string, int> unknown_index;
    for (const auto& n : nodes) {
        if (!topo.known.count(n)) {
            const int idx = static_cast<int>(unknown_index.size());
            unknown_index[n] = idx;
        }
    }
    const int n_unknown = static_cast<int>(unknown_index.size());
    const std::size_t n_src = net.sources.size();

    using Cx = std::complex<double>;
    using MatC = Eigen::MatrixXcd;
    using VecC = Eigen::VectorXcd;

    // Nodal admittance blocks: unknown-unknown and unknown-known.
    MatC yuu = MatC::Zero(n_unknown, n_unknown);
    std::map<std::string, VecC> yuk;  // known node -> column over unknowns
    auto yuk_col = [&](const std::string& k) -> VecC& {
        auto it = yuk.find(k);
        if (it == yuk.end()) it = yuk.emplace(k, VecC::Zero(n_unknown)).first;
        return it->second;
    };

    for (const auto& sb : topo.sub) {
        if (!(sb.x_pu > 0.0)) throw ConfigError("zero-reactance sub-branch");
        const Cx y = Cx{0.0, -1.0 / sb.x_pu};  // 1/(jx)
        const bool a_known = topo.known.count(sb.a) > 0;
        const bool b_known = topo.known.count(sb.b) > 0;
        if (!a_known) yuu(unknown_index[sb.a], unknown_index[sb.a]) += y;
        if (!b_known) yuu(unknown_index[sb.b], unknown_index[sb.b]) += y;
        if (!a_known && !b_known) {
            yuu(unknown_index[sb.a], unknown_index[sb.b]) -= y;
            yuu(unknown_index[sb.b], unknown_index[sb.a]) -= y;
        } else if (!a_known && b_known) {
            yuk_col(sb.b)(unknown_index[sb.a]) -= y;
        } else if (a_known && !b_known) {
            yuk_col(sb.a)(unknown_index[sb.b]) -= y;
        }
    }

    Eigen::PartialPivLU<MatC> lu;
    if (n_unknown > 0) lu.compute(yuu);

    // One solve per right-hand side: each source alone at unit EMF, then the
    // unit current injection at the measurement bus with all sources dead.
    // Node equations read Yuu * Vu = I_inj - Yuk * Vk.
    const bool pcc_known = topo.known.count(net.pcc_bus) > 0;
    const int pcc_idx = pcc_known ? -1 : unknown_index.at(net.pcc_bus);

    NetworkSolution sol;
    sol.e_coeff.assign(n_src, Cx{0.0, 0.0});
    sol.gens.resize(topo.gens.size());
    for (auto& g : sol.gens) {
        g.i_coeff.assign(n_src, Cx{0.0, 0.0});
        g.v_coeff.assign(n_src, Cx{0.0, 0.0});
    }

    auto solve_case = [&](std::size_t unit_source, bool inject) {
        VecC rhs = VecC::Zero(n_unknown);
        std::map<std::string, Cx> kv;  // known node voltages for this case
        for (const auto& [node, v] : topo.known) {
            Cx val{0.0, 0.0};
            const auto sn = topo.source_node.find(node);
            if (sn != topo.source_node.end() && sn->second == unit_source && !inject) {
                val = Cx{1.0, 0.0};
            }
            kv[node] = val;
            if (val != Cx{0.0, 0.0}) {
                const auto col = yuk.find(node);
                if (col != yuk.end()) rhs -= col->second * val;
            }
        }
        if (inject && !pcc_known) rhs(pcc_idx) += Cx{1.0, 0.0};

        VecC vu = n_unknown > 0 ? VecC(lu.solve(rhs)) : VecC();
        auto node_v = [&](const std::string& n) -> Cx {
            const auto k = kv.find(n);
            if (k != kv.end()) return k->second;
            return vu(unknown_index.at(n));
        };

        const Cx vpcc = node_v(net.pcc_bus);
        if (inject) {
            sol.z = vpcc;
        } else {
            sol.e_coeff[unit_source] = vpcc;
        }
        for (std::size_t g = 0; g < topo.gens.size(); ++g) {
            const auto& gr = topo.gens[g];
            const Cx v_emf = node_v(gr.emf_node);
            const Cx v_bus = node_v(gr.bus);
            const Cx i_out = (v_emf - v_bus) / Cx{0.0, gr.x_dp};
            if (inject) {
                sol.gens[g].i_inj = i_out;
                sol.gens[g].v_inj = v_bus;
            } else {
                sol.gens[g].i_coeff[unit_source] = i_out;
                sol.gens[g].v_coeff[unit_source] = v_bus;
            }
        }
    };

    for (std::size_t k = 0; k < n_src; ++k) solve_case(k, false);
    solve_case(0, true);
    return sol;
}

TheveninParams thevenin_reduce(const Network& net, const PerUnitBase& base,
                               double at_time,
                               const std::vector<double>& gen_potentials) {
    const NetworkSolution sol = solve_topology(net, base, at_time);
    const auto emfs = source_potentials(net, gen_potentials);
    std::complex<double> e_oc{0.0, 0.0};
    for (std::size_t k = 0; k < emfs.size(); ++k) e_oc += sol.e_coeff[k] * emfs[k];

    TheveninParams te;
    te.e = Phasor::from_complex(e_oc);
    te.r = std::max(sol.z.real(), 0.0);  // pure-reactance networks round to ~0
    te.x = sol.z.imag();
    return te;
}

}  // namespace gridsync

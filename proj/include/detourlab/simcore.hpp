// Discrete-time traffic dynamics on the cell grid. Per one-second step, each
// cell boundary moves min(sending, receiving) vehicles; route commodities move
// in proportion to their share of the sending cell. Diverge boundaries push
// the commanded fraction of through traffic onto the off-ramp (overflow stays
// on the mainline); merges give the mainline priority and charge the weaving
// penalty against the merge cell's capacity. Queue discharge drops below
// nominal capacity once a cell or its feeder is above critical density.
//
// Everything is double-valued; fractional vehicles are fine inside cells.
// Detector loops accumulate crossing flow and flow-weighted speed until read.
#pragma once

#include <array>
#include <cstring>
#include <ostream>
#include <vector>

#include "detourlab/netmodel.hpp"

namespace detourlab {

struct IncidentEvent {
    int cell = 0;
    double start_s = 0.0;
    double duration_s = 0.0;
    int lanes_closed = 1;

    void validate(const RoadNetwork& net) const {
        const Cell& c = net.cell(cell);
        if (c.kind != CellKind::Mainline)
            throw ConfigError("incident must target a mainline cell");
        if (lanes_closed <= 0 || lanes_closed >= c.lanes)
            throw ConfigError("incident must close between 1 and lanes-1 lanes");
        if (!(duration_s > 0.0)) throw ConfigError("incident duration must be > 0");
    }
};

struct EffectiveCellParams {
    double lane_factor = 1.0;    // (lanes - closed) / lanes while active
    double lanes = 0.0;          // effective lane count
    double capacity_vph = 0.0;   // effective capacity
    double jam_storage_veh = 0.0;
};

// Effective parameters of the incident's target cell at a given clock.
// Active on the half-open interval [start, start + duration).
inline EffectiveCellParams apply_incident(const RoadNetwork& net, double clock_s,
                                          const IncidentEvent& ev) {
    ev.validate(net);
    const Cell& c = net.cell(ev.cell);
    EffectiveCellParams p;
    const bool active = clock_s >= ev.start_s && clock_s < ev.start_s + ev.duration_s;
    p.lane_factor = active ? static_cast<double>(c.lanes - ev.lanes_closed) / c.lanes : 1.0;
    p.lanes = c.lanes * p.lane_factor;
    p.capacity_vph = c.capacity_vph() * p.lane_factor;
    p.jam_storage_veh = c.jam_storage_veh() * p.lane_factor;
    return p;
}

struct DetectorReading {
    double count = 0.0;       // vehicles past the loop during the window, per lane
    double mean_speed = 0.0;  // flow-weighted mean speed, mi/h
};

// Commanded off-ramp splits, one per exit: the fraction of through-route flow
// at each diverge directed onto the ramp this step.
struct StepSplits {
    std::array<double, 2> exit_fraction{0.05, 0.05};

    void validate() const {
        for (double f : exit_fraction)
            if (f < 0.0 || f > 1.0)
                throw ContractViolation("diverge split outside [0,1]");
    }
};

struct SimState {
    std::vector<std::array<double, kRouteCount>> occupancy;  // veh per cell per route
    double clock = 0.0;  // seconds since the window start
    std::array<double, kRouteCount> source_buffer{};  // demand queued outside the entrance
    std::array<double, kRouteCount> injected{};
    std::array<double, kRouteCount> departed{};
    std::array<double, kRouteCount> converted_in{};   // commodity gained at diverges
    std::array<double, kRouteCount> converted_out{};  // commodity lost at diverges
    std::array<double, 2> merge_inflow_ema{};         // smoothed merging flow, veh/s
    Rng rng_stream{1};

    // Detector accumulators since the last read.
    std::vector<double> det_flow;       // total vehicles across the station boundary
    std::vector<double> det_speedflow;  // sum of flow * host speed
    std::vector<double> last_outflow;   // veh leaving each cell in the last step
    int window_steps = 0;
    std::array<double, kRouteCount> final_station_flow{};  // per-route, since last read

    // Boundary -> detector index lookups, built once per network.
    std::vector<std::vector<int>> main_boundary_dets;
    std::array<std::vector<std::vector<int>>, 2> chain_boundary_dets;

    double total_vehicles() const {
        double s = 0.0;
        for (const auto& o : occupancy)
            for (double v : o) s += v;
        for (double v : source_buffer) s += v;
        return s;
    }

    static SimState make(const RoadNetwork& net, std::uint64_t seed = 1) {
        SimState st;
        st.occupancy.assign(net.cells.size(), {});
        st.rng_stream = Rng(seed);
        st.det_flow.assign(net.detectors.size(), 0.0);
        st.det_speedflow.assign(net.detectors.size(), 0.0);
        st.main_boundary_dets.assign(net.mainline.size() + 1, {});
        for (int e = 0; e < 2; ++e)
            st.chain_boundary_dets[e].assign(net.chains[e].cells.size() + 1, {});
        for (std::size_t i = 0; i < net.detectors.size(); ++i) {
            const DetectorSite& d = net.detectors[i];
            if (d.chain < 0)
                st.main_boundary_dets[static_cast<std::size_t>(d.boundary)].push_back(
                    static_cast<int>(i));
            else
                st.chain_boundary_dets[d.chain][static_cast<std::size_t>(d.boundary)].push_back(
                    static_cast<int>(i));
        }
        return st;
    }
};

namespace detail {

struct CellDyn {
    double send = 0.0;     // veh able to leave this step
    double recv = 0.0;     // veh able to enter this step
    double speed = 0.0;    // mi/h at the current density
    double density = 0.0;  // veh/mi/lane
};

inline double cell_total(const SimState& st, int cell) {
    const auto& o = st.occupancy[static_cast<std::size_t>(cell)];
    double s = 0.0;
    for (double v : o) s += v;
    return s;
}

// Move `amount` vehicles out of `cell` in proportion to route shares,
// delivering them via `deliver(route, moved)`.
template <typename Deliver>
inline void move_proportional(SimState& st, int cell, double amount, Deliver&& deliver) {
    if (amount <= 0.0) return;
    auto& occ = st.occupancy[static_cast<std::size_t>(cell)];
    double total = occ[0] + occ[1] + occ[2];
    if (total <= 1e-300) return;
    for (int r = 0; r < kRouteCount; ++r) {
        double m = amount * (occ[static_cast<std::size_t>(r)] / total);
        m = std::min(m, occ[static_cast<std::size_t>(r)]);
        occ[static_cast<std::size_t>(r)] -= m;
        if (occ[static_cast<std::size_t>(r)] < 0.0) occ[static_cast<std::size_t>(r)] = 0.0;
        deliver(r, m);
    }
}

}  // namespace detail

// Add demand at the entrance: the waiting buffer drains into entrance storage
// first, then the new arrivals; whatever does not fit stays buffered.
inline void inject(SimState& st, const RoadNetwork& net, double rate_vph,
                   const std::array<double, kRouteCount>& route_mix = {1.0, 0.0, 0.0},
                   double dt = 1.0) {
    if (rate_vph < 0.0) throw ContractViolation("inject: negative rate");
    const int entrance = net.entrance_cell();
    const Cell& c = net.cell(entrance);
    auto& occ = st.occupancy[static_cast<std::size_t>(entrance)];
    double space = c.jam_storage_veh() - (occ[0] + occ[1] + occ[2]);
    // Buffered vehicles go first.
    for (int r = 0; r < kRouteCount && space > 0.0; ++r) {
        double m = std::min(st.source_buffer[static_cast<std::size_t>(r)], space);
        st.source_buffer[static_cast<std::size_t>(r)] -= m;
        occ[static_cast<std::size_t>(r)] += m;
        space -= m;
    }
    const double fresh = rate_vph * dt / kSecondsPerHour;
    for (int r = 0; r < kRouteCount; ++r) {
        double want = fresh * route_mix[static_cast<std::size_t>(r)];
        if (want <= 0.0) continue;
        st.injected[static_cast<std::size_t>(r)] += want;
        double m = std::min(want, std::max(space, 0.0));
        occ[static_cast<std::size_t>(r)] += m;
        space -= m;
        st.source_buffer[static_cast<std::size_t>(r)] += want - m;
    }
}

// Advance the network one step of dt seconds.
inline void step(SimState& st, const RoadNetwork& net, const StepSplits& splits,
                 double dt = 1.0, const IncidentEvent* incident = nullptr,
                 std::ostream* trajectory = nullptr) {
    splits.validate();
    const std::size_t n_cells = net.cells.size();
    const int n_main = static_cast<int>(net.mainline.size());

    // Incident scaling for this step.
    double inc_factor = 1.0;
    int inc_cell = -1;
    if (incident) {
        const EffectiveCellParams p = apply_incident(net, st.clock, *incident);
        inc_factor = p.lane_factor;
        inc_cell = incident->cell;
    }

    // Queue-discharge factor: capacity eases toward `capacity_drop` as the
    // governing density climbs past critical.
    const double drop = net.capacity_drop;
    auto discharge_scale = [&](double density, const FundamentalDiagram& fd) {
        if (density <= fd.critical_density) return 1.0;
        const double over = (density - fd.critical_density) / (0.1 * fd.critical_density);
        return 1.0 - (1.0 - drop) * std::min(over, 1.0);
    };

    static thread_local std::vector<detail::CellDyn> dyn;
    dyn.assign(n_cells, {});

    // Upstream feeder of each cell (for the discharge rule): previous cell in
    // its own chain; off-ramp throats look at the diverge cell.
    static thread_local std::vector<int> feeder;
    feeder.assign(n_cells, -1);
    for (int i = 1; i < n_main; ++i) feeder[static_cast<std::size_t>(net.mainline[i])] = net.mainline[i - 1];
    for (const DetourChain& ch : net.chains) {
        if (ch.cells.empty()) continue;
        feeder[static_cast<std::size_t>(ch.cells[0])] = net.mainline[static_cast<std::size_t>(ch.diverge_boundary - 1)];
        for (std::size_t j = 1; j < ch.cells.size(); ++j)
            feeder[static_cast<std::size_t>(ch.cells[j])] = ch.cells[j - 1];
    }

    // Pass 1: densities.
    for (std::size_t i = 0; i < n_cells; ++i) {
        const Cell& c = net.cells[i];
        const double lf = (static_cast<int>(i) == inc_cell) ? inc_factor : 1.0;
        const double lanes_eff = c.lanes * lf;
        const double n = detail::cell_total(st, static_cast<int>(i));
        dyn[i].density = n / (lanes_eff * c.length_mi());
        dyn[i].speed = speed_from_density(std::max(dyn[i].density, 0.0), c.fd);
    }

    // Pass 2: sending / receiving.
    for (std::size_t i = 0; i < n_cells; ++i) {
        const Cell& c = net.cells[i];
        const double lf = (static_cast<int>(i) == inc_cell) ? inc_factor : 1.0;
        const double n = detail::cell_total(st, static_cast<int>(i));
        double cap_vph = c.capacity_vph() * lf;
        // Weaving friction: recent merging flow eats into merge capacity.
        for (int e = 0; e < 2; ++e) {
            const DetourChain& ch = net.chains[static_cast<std::size_t>(e)];
            if (!ch.cells.empty() && ch.merge_cell == static_cast<int>(i) && ch.weave_penalty > 0.0)
                cap_vph -= ch.weave_penalty * st.merge_inflow_ema[static_cast<std::size_t>(e)] *
                           kSecondsPerHour;
        }
        cap_vph = std::max(cap_vph, 0.05 * c.capacity_vph());
        const double gov_density =
            feeder[i] >= 0 ? std::max(dyn[i].density, dyn[static_cast<std::size_t>(feeder[i])].density)
                           : dyn[i].density;
        cap_vph *= discharge_scale(gov_density, c.fd);

        const double cap_step = cap_vph * dt / kSecondsPerHour;
        const double v_step = mph_to_mps(c.fd.free_flow_speed) * dt / c.length_m;
        dyn[i].send = std::min(n * v_step, cap_step);
        const double w_step = mph_to_mps(c.fd.wave_speed()) * dt / c.length_m;
        const double storage = c.jam_storage_veh() * lf;
        dyn[i].recv = std::min(cap_step, std::max(0.0, w_step * (storage - n)));
    }

    // Pass 3: boundary flows. Inflow/outflow gathered per cell per route and
    // applied afterwards so the update stays synchronous.
    static thread_local std::vector<std::array<double, kRouteCount>> inflow;
    inflow.assign(n_cells, {});
    static thread_local std::vector<double> outflow_total;
    outflow_total.assign(n_cells, 0.0);

    auto add_detector_flow = [&](const std::vector<int>& dets, double moved, double host_speed) {
        for (int di : dets) {
            st.det_flow[static_cast<std::size_t>(di)] += moved;
            st.det_speedflow[static_cast<std::size_t>(di)] += moved * host_speed;
        }
    };

    // Diverge handling: boundary b belongs to at most one chain.
    std::array<int, 2> diverge_at{-1, -1};
    std::array<int, 2> merge_into{-1, -1};
    for (int e = 0; e < 2; ++e) {
        const DetourChain& ch = net.chains[static_cast<std::size_t>(e)];
        if (ch.cells.empty()) continue;
        diverge_at[static_cast<std::size_t>(e)] = ch.diverge_boundary;
        merge_into[static_cast<std::size_t>(e)] = ch.merge_cell;
    }

    std::array<double, 2> merge_inflow_now{};

    // Mainline boundaries 1..n_main-1 plus the endpoint boundary n_main.
    for (int b = 1; b <= n_main; ++b) {
        const int up = net.mainline[static_cast<std::size_t>(b - 1)];
        const bool wraps = net.ring && b == n_main;
        const bool at_end = b == n_main && !net.ring;
        const int down = at_end ? -1 : net.mainline[static_cast<std::size_t>(wraps ? 0 : b)];

        double send = dyn[static_cast<std::size_t>(up)].send;
        double ramp_move = 0.0;
        int chain_for_ramp = -1;

        // Off-ramp split first: the commanded share of through traffic heads
        // for the ramp; what the ramp cannot take continues downstream.
        for (int e = 0; e < 2; ++e) {
            if (diverge_at[static_cast<std::size_t>(e)] != b) continue;
            const DetourChain& ch = net.chains[static_cast<std::size_t>(e)];
            const auto& occ = st.occupancy[static_cast<std::size_t>(up)];
            const double total = occ[0] + occ[1] + occ[2];
            if (total <= 1e-300) break;
            const double through_share = occ[kRouteMain] / total;
            const double ramp_demand =
                splits.exit_fraction[static_cast<std::size_t>(e)] * send * through_share;
            const double ramp_recv = dyn[static_cast<std::size_t>(ch.cells[0])].recv;
            ramp_move = std::min(ramp_demand, ramp_recv);
            chain_for_ramp = e;
            break;
        }

        double main_move = 0.0;
        double recv_left = 0.0;
        if (at_end) {
            double sink = send;
            if (net.endpoint_capacity_vph > 0.0)
                sink = std::min(sink, net.endpoint_capacity_vph * dt / kSecondsPerHour);
            main_move = std::max(0.0, std::min(send - ramp_move, sink));
        } else {
            recv_left = dyn[static_cast<std::size_t>(down)].recv;
            // A demanding on-ramp keeps a minimum share of the receiving room.
            double reserved = 0.0;
            for (int e = 0; e < 2; ++e) {
                if (merge_into[static_cast<std::size_t>(e)] != down) continue;
                const DetourChain& ch = net.chains[static_cast<std::size_t>(e)];
                reserved += std::min(dyn[static_cast<std::size_t>(ch.cells.back())].send,
                                     net.merge_arterial_share * recv_left);
            }
            main_move = std::max(0.0, std::min(send - ramp_move, recv_left - reserved));
            recv_left -= main_move;
        }

        // Take the ramp movement out of the through commodity.
        if (ramp_move > 0.0 && chain_for_ramp >= 0) {
            const DetourChain& ch = net.chains[static_cast<std::size_t>(chain_for_ramp)];
            auto& occ = st.occupancy[static_cast<std::size_t>(up)];
            const double m = std::min(ramp_move, occ[kRouteMain]);
            occ[kRouteMain] -= m;
            const int route = chain_for_ramp == 0 ? kRouteDetour1 : kRouteDetour2;
            inflow[static_cast<std::size_t>(ch.cells[0])][static_cast<std::size_t>(route)] += m;
            st.converted_out[kRouteMain] += m;
            st.converted_in[static_cast<std::size_t>(route)] += m;
            outflow_total[static_cast<std::size_t>(up)] += m;
        }

        // Through movement, all commodities in proportion.
        const double host_speed = dyn[static_cast<std::size_t>(up)].speed;
        detail::move_proportional(st, up, main_move, [&](int r, double m) {
            if (at_end)
                st.departed[static_cast<std::size_t>(r)] += m;
            else
                inflow[static_cast<std::size_t>(down)][static_cast<std::size_t>(r)] += m;
            outflow_total[static_cast<std::size_t>(up)] += m;
            if (b == net.final_station_boundary())
                st.final_station_flow[static_cast<std::size_t>(r)] += m;
        });
        add_detector_flow(st.main_boundary_dets[static_cast<std::size_t>(b)],
                          main_move + ramp_move, host_speed);

        // Merging detour traffic takes whatever receiving room the mainline
        // left behind.
        if (!at_end) {
            for (int e = 0; e < 2; ++e) {
                if (merge_into[static_cast<std::size_t>(e)] != down) continue;
                const DetourChain& ch = net.chains[static_cast<std::size_t>(e)];
                const int last = ch.cells.back();
                const double m_total =
                    std::min(dyn[static_cast<std::size_t>(last)].send, recv_left);
                detail::move_proportional(st, last, m_total, [&](int r, double m) {
                    inflow[static_cast<std::size_t>(down)][static_cast<std::size_t>(r)] += m;
                    outflow_total[static_cast<std::size_t>(last)] += m;
                });
                merge_inflow_now[static_cast<std::size_t>(e)] += m_total;
                recv_left -= m_total;
            }
        }
    }

    // Chain-internal boundaries.
    for (int e = 0; e < 2; ++e) {
        const DetourChain& ch = net.chains[static_cast<std::size_t>(e)];
        for (std::size_t j = 0; j + 1 < ch.cells.size(); ++j) {
            const int up = ch.cells[j];
            const int down = ch.cells[j + 1];
            const double m_total = std::min(dyn[static_cast<std::size_t>(up)].send,
                                            dyn[static_cast<std::size_t>(down)].recv);
            const double host_speed = dyn[static_cast<std::size_t>(up)].speed;
            detail::move_proportional(st, up, m_total, [&](int r, double m) {
                inflow[static_cast<std::size_t>(down)][static_cast<std::size_t>(r)] += m;
                outflow_total[static_cast<std::size_t>(up)] += m;
            });
            add_detector_flow(st.chain_boundary_dets[static_cast<std::size_t>(e)][j + 1],
                              m_total, host_speed);
        }
    }

    // Apply gathered inflows.
    for (std::size_t i = 0; i < n_cells; ++i)
        for (int r = 0; r < kRouteCount; ++r)
            st.occupancy[i][static_cast<std::size_t>(r)] += inflow[i][static_cast<std::size_t>(r)];

    st.last_outflow = outflow_total;
    // 30 s smoothing keeps the weave feedback from flip-flopping step to step.
    const double k = std::min(1.0, dt / 30.0);
    for (int e = 0; e < 2; ++e)
        st.merge_inflow_ema[static_cast<std::size_t>(e)] =
            (1.0 - k) * st.merge_inflow_ema[static_cast<std::size_t>(e)] +
            k * merge_inflow_now[static_cast<std::size_t>(e)] / dt;
    st.clock += dt;
    st.window_steps += 1;

    if (trajectory) {
        for (std::size_t i = 0; i < n_cells; ++i) {
            const auto& o = st.occupancy[i];
            *trajectory << st.clock << ',' << i << ',' << o[0] << ',' << o[1] << ',' << o[2]
                        << ',' << outflow_total[i] << '\n';
        }
    }
}

// Read and reset the 22 loops. Counts are per lane; zero-flow windows report
// the host cell's free-flow speed.
inline std::vector<DetectorReading> read_detectors(SimState& st, const RoadNetwork& net,
                                                   double window_s) {
    if (!(window_s > 0.0)) throw ContractViolation("read_detectors: window must be > 0");
    const double accumulated = st.window_steps * net.sim_dt_s;
    if (std::abs(accumulated - window_s) > 1e-9)
        throw ContractViolation("read_detectors: window does not match accumulated steps");

    std::vector<DetectorReading> out(net.detectors.size());
    for (std::size_t i = 0; i < net.detectors.size(); ++i) {
        const DetectorSite& d = net.detectors[i];
        const double flow = st.det_flow[i];
        DetectorReading r;
        r.count = flow / d.lanes;
        r.mean_speed = flow > 1e-12 ? st.det_speedflow[i] / flow
                                    : net.cell(d.host_cell).fd.free_flow_speed;
        out[i] = r;
        st.det_flow[i] = 0.0;
        st.det_speedflow[i] = 0.0;
    }
    st.window_steps = 0;
    return out;
}

// Per-route flow across the final mainline station since the last call.
inline std::array<double, kRouteCount> take_final_station_flow(SimState& st) {
    auto out = st.final_station_flow;
    st.final_station_flow = {};
    return out;
}

}  // namespace detourlab

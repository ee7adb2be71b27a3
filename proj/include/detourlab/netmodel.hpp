// Road network model: triangular fundamental diagram, cell discretization of
// the freeway + arterial detour corridor, and the 22-detector layout.
//
// The default network is a 2.6 mi, 4-lane freeway with two exits. Each exit
// feeds a single-lane arterial detour chain that rejoins the freeway further
// downstream. Detour 1 leaves at exit-1 and reenters past the downstream
// weaving section; detour 2 is a short hop that reenters right at the weave.
// The weaving cell where detour 2 merges carries a capacity penalty per unit
// of merging flow, which is what makes the two detours behave differently
// under load.
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "detourlab/common.hpp"

namespace detourlab {

// Triangular flow-density relation. Parameters are per lane.
struct FundamentalDiagram {
    double free_flow_speed = 60.0;   // mi/h
    double critical_density = 40.0;  // veh/mi/lane
    double jam_density = 200.0;      // veh/mi/lane

    double capacity() const { return free_flow_speed * critical_density; }  // veh/h/lane
    double wave_speed() const { return capacity() / (jam_density - critical_density); }  // mi/h

    void validate() const {
        if (!(free_flow_speed > 0.0))
            throw ConfigError("fundamental diagram: free_flow_speed must be > 0");
        if (!(critical_density > 0.0 && critical_density < jam_density))
            throw ConfigError("fundamental diagram: need 0 < critical_density < jam_density");
    }
};

// Flow on the triangular diagram, veh/h/lane.
inline double triangular_flow(double density, const FundamentalDiagram& fd) {
    if (density < 0.0) throw std::domain_error("triangular_flow: negative density");
    if (density <= fd.critical_density) return fd.free_flow_speed * density;
    return std::max(0.0, fd.wave_speed() * (fd.jam_density - density));
}

// Speed implied by the diagram; free-flow speed at zero density by convention.
inline double speed_from_density(double density, const FundamentalDiagram& fd) {
    if (density < 0.0) throw std::domain_error("speed_from_density: negative density");
    if (density <= fd.critical_density) return fd.free_flow_speed;
    return triangular_flow(density, fd) / density;
}

// A point on (or off) the diagram.
struct OperatingPoint {
    double density = 0.0;  // veh/mi/lane
    double flow = 0.0;     // veh/h/lane
    double speed = 0.0;    // mi/h

    static OperatingPoint at_density(double density, const FundamentalDiagram& fd) {
        return {density, triangular_flow(density, fd), speed_from_density(density, fd)};
    }
};

enum class CellKind { Mainline, Offramp, Arterial, Onramp };

struct Cell {
    double length_m = 100.0;
    int lanes = 1;
    FundamentalDiagram fd;
    CellKind kind = CellKind::Mainline;
    // Local capacity derating (weaving sections, ramp throats). 1 = none.
    double capacity_scale = 1.0;

    double length_mi() const { return length_m / kMetersPerMile; }
    double capacity_vph() const { return fd.capacity() * lanes * capacity_scale; }
    double jam_storage_veh() const { return fd.jam_density * lanes * length_mi(); }
};

// Identifies one induction loop. Mainline loops carry (segment, station, lane)
// following the usual segment/station/lane suffix convention; ramp loops carry
// the exit number.
struct DetectorId {
    bool ramp = false;
    int segment = 0;  // 1-based mainline segment
    int station = 0;  // 1-based station within the segment
    int lane = 0;     // 1-based, 1 = rightmost
    int exit_no = 0;  // 1-based, ramp detectors only

    std::string label() const {
        if (ramp) return "e" + std::to_string(exit_no);
        return "s" + std::to_string(segment) + "d" + std::to_string(station) + "l" +
               std::to_string(lane);
    }
};

// Where a detector lives in the cell grid. chain < 0 means mainline;
// otherwise it sits on detour chain `chain` at that chain's boundary index.
// `boundary` is the index of the cell boundary; the host cell (whose traffic
// state the loop reports) is the cell immediately upstream of the boundary.
struct DetectorSite {
    DetectorId id;
    int chain = -1;
    int boundary = 0;
    int host_cell = 0;  // global cell id
    int lanes = 1;      // lanes sharing the station (readings are per lane)
};

// One detour route: off-ramp throat, arterial run, on-ramp back to the
// mainline. `cells` are global cell ids in travel order.
struct DetourChain {
    int exit_no = 1;
    int diverge_boundary = 0;   // mainline boundary where the off-ramp leaves
    int merge_cell = 0;         // global id of the mainline cell the chain enters
    std::vector<int> cells;
    // Capacity lost on the merge cell per unit of merging flow (weaving
    // friction). 0 for a reentry with its own acceleration lane.
    double weave_penalty = 0.0;
};

// Route commodities: through traffic and the two detour movements.
enum Route : int { kRouteMain = 0, kRouteDetour1 = 1, kRouteDetour2 = 2 };
inline constexpr int kRouteCount = 3;

struct NetworkConfig {
    double cell_length_m = 100.0;
    double mainline_length_mi = 2.6;
    int mainline_lanes = 4;
    FundamentalDiagram fd_mainline{60.0, 40.0, 200.0};
    FundamentalDiagram fd_arterial{30.0, 48.0, 200.0};

    double exit1_pos_m = 1300.0;     // off-ramp 1 boundary
    double exit2_pos_m = 3100.0;     // off-ramp 2 boundary
    double reentry1_pos_m = 4100.0;  // detour 1 reenters into the cell at this position
    double reentry2_pos_m = 3900.0;  // detour 2 reenters at the weaving cell
    double detour_length_factor = 1.2;  // arterial length vs bypassed distance
    double offramp_capacity_vph = 1800.0;

    // Weaving section where detour 2 reenters.
    double weave_pos_m = 3900.0;
    double weave_capacity_scale = 0.95;
    double weave_penalty = 1.0;  // veh/h of merge capacity lost per veh/h merging
    double merge_arterial_share = 0.10;  // receiving share reserved for a demanding on-ramp

    // Queue discharge falls to this fraction of capacity once a cell (or its
    // feeder) is above critical density.
    double capacity_drop = 0.86;

    double accident_pos_m = 1600.0;  // default incident cell
    double endpoint_capacity_vph = 0.0;  // 0 = unconstrained exit
    double sim_dt_s = 1.0;

    double station_offset_m = 200.0;      // station setback from segment ends
    double ramp_detector_offset_m = 300.0;  // ramp loop distance past the exit
};

struct RoadNetwork {
    NetworkConfig config;
    std::vector<Cell> cells;          // mainline first, then chain 1, then chain 2
    std::vector<int> mainline;        // global ids, entrance to endpoint
    std::array<DetourChain, 2> chains;
    std::vector<DetectorSite> detectors;  // canonical order, 22 entries
    int accident_cell = 0;
    double capacity_drop = 0.86;
    double merge_arterial_share = 0.10;
    double endpoint_capacity_vph = 0.0;
    double sim_dt_s = 1.0;
    // Endpoint feeds the entrance instead of departing; for closed-loop tests.
    bool ring = false;

    int entrance_cell() const { return mainline.front(); }
    int final_station_boundary() const { return final_station_boundary_; }

    // Mainline station boundaries in travel order (5 stations).
    std::vector<int> station_boundaries;
    int final_station_boundary_ = 0;

    const Cell& cell(int id) const { return cells[static_cast<std::size_t>(id)]; }

    void validate() const;
};

namespace detail {

inline int boundary_at(double pos_m, double cell_len) {
    return static_cast<int>(pos_m / cell_len + 0.5);
}

}  // namespace detail

inline void RoadNetwork::validate() const {
    for (const Cell& c : cells) {
        c.fd.validate();
        if (c.lanes < 1) throw ConfigError("cell with lanes < 1");
        // CFL: a vehicle must not cross a whole cell in one step.
        const double step_travel = mph_to_mps(c.fd.free_flow_speed) * sim_dt_s;
        if (c.length_m < step_travel)
            throw ConfigError("CFL violation: cell length " + std::to_string(c.length_m) +
                              " m < free-flow travel per step " + std::to_string(step_travel) + " m");
    }
    if (detectors.size() != 22) throw ConfigError("detector layout must have 22 loops");
    for (const DetectorSite& d : detectors) {
        if (d.host_cell < 0 || d.host_cell >= static_cast<int>(cells.size()))
            throw ConfigError("detector references a missing cell");
        if (d.lanes < 1) throw ConfigError("detector with lanes < 1");
    }
    for (const DetourChain& ch : chains) {
        if (ch.cells.empty()) throw ConfigError("empty detour chain");
        if (ch.merge_cell < 0 || ch.merge_cell >= static_cast<int>(cells.size()))
            throw ConfigError("detour chain merges into a missing cell");
    }
}

// Build the default freeway + detour corridor. See the header comment for the
// layout; every dimension comes from `cfg`.
inline RoadNetwork build_default_network(const NetworkConfig& cfg) {
    cfg.fd_mainline.validate();
    cfg.fd_arterial.validate();
    if (cfg.cell_length_m <= 0.0) throw ConfigError("cell_length_m must be > 0");

    RoadNetwork net;
    net.config = cfg;
    net.capacity_drop = cfg.capacity_drop;
    net.merge_arterial_share = cfg.merge_arterial_share;
    net.endpoint_capacity_vph = cfg.endpoint_capacity_vph;
    net.sim_dt_s = cfg.sim_dt_s;

    const double total_m = cfg.mainline_length_mi * kMetersPerMile;
    const int n_main = static_cast<int>(std::ceil(total_m / cfg.cell_length_m));
    const int weave_cell = detail::boundary_at(cfg.weave_pos_m, cfg.cell_length_m);

    for (int i = 0; i < n_main; ++i) {
        Cell c;
        c.length_m = std::min(cfg.cell_length_m, total_m - i * cfg.cell_length_m);
        c.lanes = cfg.mainline_lanes;
        c.fd = cfg.fd_mainline;
        c.kind = CellKind::Mainline;
        if (i == weave_cell) c.capacity_scale = cfg.weave_capacity_scale;
        net.cells.push_back(c);
        net.mainline.push_back(i);
    }
    net.accident_cell = detail::boundary_at(cfg.accident_pos_m, cfg.cell_length_m);

    // One detour chain: off-ramp throat, arterial cells, on-ramp.
    auto build_chain = [&](int exit_no, double exit_pos, double reentry_pos,
                           double weave_penalty) {
        DetourChain ch;
        ch.exit_no = exit_no;
        ch.diverge_boundary = detail::boundary_at(exit_pos, cfg.cell_length_m);
        ch.merge_cell = detail::boundary_at(reentry_pos, cfg.cell_length_m);
        ch.weave_penalty = weave_penalty;
        const double bypass_m = reentry_pos - exit_pos;
        if (bypass_m <= 0.0) throw ConfigError("detour reentry must be downstream of its exit");
        const double chain_m = cfg.detour_length_factor * bypass_m;
        const int n = std::max(3, static_cast<int>(std::ceil(chain_m / cfg.cell_length_m)));
        const double len = chain_m / n;
        for (int i = 0; i < n; ++i) {
            Cell c;
            c.length_m = len;
            c.lanes = 1;
            c.fd = cfg.fd_arterial;
            c.kind = i == 0 ? CellKind::Offramp : (i == n - 1 ? CellKind::Onramp : CellKind::Arterial);
            if (i == 0)
                c.capacity_scale = cfg.offramp_capacity_vph / cfg.fd_arterial.capacity();
            ch.cells.push_back(static_cast<int>(net.cells.size()));
            net.cells.push_back(c);
        }
        return ch;
    };
    net.chains[0] = build_chain(1, cfg.exit1_pos_m, cfg.reentry1_pos_m, 0.0);
    net.chains[1] = build_chain(2, cfg.exit2_pos_m, cfg.reentry2_pos_m, cfg.weave_penalty);

    // Detector layout: one station on the entrance segment, three on the
    // mid-segment, one on the last segment, one loop on each exit ramp.
    const double cl = cfg.cell_length_m;
    const int b_s1 = detail::boundary_at(cfg.station_offset_m, cl);
    const int b_s2 = detail::boundary_at(cfg.exit1_pos_m + cfg.station_offset_m, cl);
    const int b_s3 = detail::boundary_at((cfg.exit1_pos_m + cfg.exit2_pos_m) / 2.0, cl);
    const int b_s4 = detail::boundary_at(cfg.exit2_pos_m - cfg.station_offset_m, cl);
    const int b_s5 = detail::boundary_at(total_m - cfg.station_offset_m, cl);
    net.station_boundaries = {b_s1, b_s2, b_s3, b_s4, b_s5};
    net.final_station_boundary_ = b_s5;

    struct StationDef { int segment, station, boundary; };
    const StationDef stations[5] = {
        {1, 1, b_s1}, {2, 1, b_s2}, {2, 2, b_s3}, {2, 3, b_s4}, {3, 1, b_s5}};
    for (const StationDef& st : stations) {
        for (int lane = 1; lane <= cfg.mainline_lanes; ++lane) {
            DetectorSite d;
            d.id = DetectorId{false, st.segment, st.station, lane, 0};
            d.chain = -1;
            d.boundary = st.boundary;
            d.host_cell = st.boundary - 1;
            d.lanes = cfg.mainline_lanes;
            net.detectors.push_back(d);
        }
    }
    for (int e = 0; e < 2; ++e) {
        const DetourChain& ch = net.chains[static_cast<std::size_t>(e)];
        const double chain_cell_len = net.cell(ch.cells.front()).length_m;
        int b = std::max(1, static_cast<int>(cfg.ramp_detector_offset_m / chain_cell_len + 0.5));
        b = std::min(b, static_cast<int>(ch.cells.size()) - 1);
        DetectorSite d;
        d.id = DetectorId{true, 0, 0, 1, e + 1};
        d.chain = e;
        d.boundary = b;
        d.host_cell = ch.cells[static_cast<std::size_t>(b - 1)];
        d.lanes = 1;
        net.detectors.push_back(d);
    }

    net.validate();
    return net;
}

}  // namespace detourlab

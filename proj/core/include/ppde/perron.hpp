#pragma once

#include "ppde/domains.hpp"
#include "ppde/frozen_pde.hpp"
#include "ppde/generators.hpp"
#include "ppde/lattice.hpp"
#include "ppde/paths.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ppde {

/// Node of the skeleton recursion tree: the relative skeleton (signed
/// eps-steps at unit times), its localized interval, and the boundary
/// classification of the interval endpoints. Children exist exactly at
/// OuterSphere endpoints.
struct SkeletonNode {
    std::vector<int> steps;  // +1 / -1 per skeleton step
    int level = 0;
    double end_offset = 0.0;  // skeleton end relative to the history end
    double lo_rel = 0.0, hi_rel = 0.0;
    BoundaryClass lo_class = BoundaryClass::DomainBoundary;
    BoundaryClass hi_class = BoundaryClass::DomainBoundary;
    int child_lo = -1, child_hi = -1;

    PiecewisePath skeleton_path(double eps) const;
};

struct PerronTree {
    std::vector<SkeletonNode> nodes;          // nodes[0] is the root
    std::vector<std::vector<int>> levels;     // node ids per depth
};

/// Builds the binary recursion tree of depth <= m (children at relative
/// +-eps while strictly inside Q).
PerronTree build_tree(const PiecewisePath& history, double eps, const ConvexDomain& Q, int depth);

/// How truncation leaves are closed:
///   Canonical - upper/lower bounding-generator representations from the
///               generator's constants (running reward +-C0, drift and
///               volatility bands of the L0 family, discount control on
///               [0, L0]);
///   Exact     - the generator's own control representation (requires an
///               HJB form; collapses the closure gap to discretization).
enum class ClosureMode { Canonical, Exact };

struct PerronParams {
    double h = 1e-2;                      // shared grid step; eps must be a multiple
    std::vector<int> m_list{1, 2, 3};
    ClosureMode closure_mode = ClosureMode::Canonical;
    int jobs = 1;
    double capacity_h = 0.02;             // grid for the capacity diagnostic (snapped to eps)
    bool with_capacity = true;
};

struct PerronResult {
    PerronTree tree;
    std::vector<int> m_list;
    std::vector<double> upper_root;       // theta-upper at the root point, per m
    std::vector<double> lower_root;
    std::vector<double> gap;              // sup over the root ball of upper - lower
    std::vector<double> capacity;         // cascade capacity diagnostic per m
    std::vector<std::vector<double>> upper_node;  // [m index][node id], NaN above depth m
    std::vector<std::vector<double>> lower_node;
    double u_estimate = 0.0;              // bracket midpoint at the deepest m
    double bracket_lo = 0.0, bracket_hi = 0.0;
    double max_abs_theta = 0.0;           // over all node values and sweeps
    double solver_tol = 1e-9;

    std::string report_json() const;
    std::string nodes_csv() const;
};

/// The squeeze: for each m, truncation closures at depth m and backward
/// path-frozen solves with the generator frozen at the concatenated
/// skeleton, coupled through OuterSphere endpoints. All solves share one
/// absolute grid and one-step operator so the discrete tower property
/// holds exactly.
PerronResult sweep(const PiecewisePath& history, double eps, const ConvexDomain& Q,
                   const GeneratorSpec& G, const ReducedPayoff& xi, const PerronParams& params);

/// Truncation closure of a single node (exposed for direct inspection).
double terminal_closure(const PiecewisePath& history, const SkeletonNode& node, double eps,
                        const ConvexDomain& Q, const GeneratorSpec& G, const ReducedPayoff& xi,
                        bool upper, const PerronParams& params);

struct ModulusProbe {
    double value_gap = 0.0;
    double de = 0.0;
};

/// Runs the sweep at two histories and returns (|u1 - u2|, d^e distance).
ModulusProbe modulus_probe(const PiecewisePath& history1, const PiecewisePath& history2,
                           double eps, const ConvexDomain& Q, const GeneratorSpec& G,
                           const ReducedPayoff& xi, int m, const PerronParams& params);

}  // namespace ppde

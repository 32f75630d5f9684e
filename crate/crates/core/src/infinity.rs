//! Lattice scheme for the infinity-Laplace problem on the punctured domain.
//!
//! Nodes sit on a square lattice of spacing `h` anchored at the pole, so the
//! pole is itself a node. Every free node links to all lattice offsets within
//! Chebyshev radius 2. A link whose segment leaves the domain is cut at its
//! first boundary crossing, which becomes a Dirichlet point at its true
//! distance. The node update is the value at which the steepest ascending and
//! the steepest descending link slopes balance.

use std::collections::HashMap;

use serde::Serialize;

use crate::capacity::{PoleProblem, SolveResult};
use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::mesh::MeshLocator;
use crate::properties::{CheckMode, CheckReport, Tally};
use crate::tolerances as tol;

/// Lattice offsets within this Chebyshev radius are linked.
pub const STENCIL_RADIUS: i64 = 2;

pub const DEFAULT_TOL: f64 = 1e-10;

pub const DEFAULT_MAX_ITERS: usize = 1_000_000;

const MAX_NODES: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Free,
    Pole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeNode {
    pub i: i64,
    pub j: i64,
    pub pos: Point,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy)]
enum Target {
    Node(usize),
    Boundary(usize),
}

#[derive(Debug, Clone, Copy)]
struct Link {
    target: Target,
    dist: f64,
}

/// Lattice, links and Dirichlet points for one domain and pole.
#[derive(Debug, Clone)]
pub struct InfinityProblem {
    domain: Domain,
    pole: Point,
    h: f64,
    nodes: Vec<LatticeNode>,
    pole_node: usize,
    links: Vec<Vec<Link>>,
    boundary_points: Vec<Point>,
    order: Vec<usize>,
}

impl InfinityProblem {
    pub fn new(domain: Domain, pole: Point, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Precondition(format!(
                "lattice spacing must be positive, got {h}"
            )));
        }
        let dim = domain.dimension();
        let pole = if dim == 1 {
            Point::on_line(pole.x)
        } else {
            pole
        };
        if !pole.is_finite() || !domain.contains(&pole) {
            return Err(Error::PolePlacement(format!(
                "pole ({}, {}) is not inside the domain",
                pole.x, pole.y
            )));
        }
        let estimate = domain.measure() / h.powi(dim as i32);
        if estimate > MAX_NODES as f64 {
            return Err(Error::Budget(format!(
                "h = {h} would need about {estimate:.0} lattice nodes (limit {MAX_NODES})"
            )));
        }

        let (lo, hi) = domain.bounding_box();
        let i0 = ((lo.x - pole.x) / h).floor() as i64;
        let i1 = ((hi.x - pole.x) / h).ceil() as i64;
        let (j0, j1) = if dim == 1 {
            (0, 0)
        } else {
            (
                ((lo.y - pole.y) / h).floor() as i64,
                ((hi.y - pole.y) / h).ceil() as i64,
            )
        };
        let clearance = 1e-12 * h;
        let mut nodes = Vec::new();
        let mut index = HashMap::new();
        let mut pole_node = usize::MAX;
        for j in j0..=j1 {
            for i in i0..=i1 {
                let pos = Point::new(pole.x + i as f64 * h, pole.y + j as f64 * h);
                let kind = if i == 0 && j == 0 {
                    NodeKind::Pole
                } else if domain.contains(&pos) && domain.distance_to_boundary(&pos) > clearance {
                    NodeKind::Free
                } else {
                    continue;
                };
                if kind == NodeKind::Pole {
                    pole_node = nodes.len();
                }
                index.insert((i, j), nodes.len());
                nodes.push(LatticeNode { i, j, pos, kind });
            }
        }

        let offsets: Vec<(i64, i64)> = if dim == 1 {
            (-STENCIL_RADIUS..=STENCIL_RADIUS)
                .filter(|&di| di != 0)
                .map(|di| (di, 0))
                .collect()
        } else {
            let mut v = Vec::new();
            for dj in -STENCIL_RADIUS..=STENCIL_RADIUS {
                for di in -STENCIL_RADIUS..=STENCIL_RADIUS {
                    if (di, dj) != (0, 0) {
                        v.push((di, dj));
                    }
                }
            }
            v
        };

        let mut boundary_points = Vec::new();
        let mut links = Vec::with_capacity(nodes.len());
        for node in &nodes {
            if node.kind == NodeKind::Pole {
                links.push(Vec::new());
                continue;
            }
            let mut row = Vec::with_capacity(offsets.len());
            for &(di, dj) in &offsets {
                let q = Point::new(node.pos.x + di as f64 * h, node.pos.y + dj as f64 * h);
                let len = h * ((di * di + dj * dj) as f64).sqrt();
                let crossing = domain.first_boundary_crossing(&node.pos, &q);
                let link = match (crossing, index.get(&(node.i + di, node.j + dj))) {
                    (None, Some(&k)) => Link {
                        target: Target::Node(k),
                        dist: len,
                    },
                    (Some(t), _) => {
                        boundary_points.push(node.pos.add(&q.sub(&node.pos).scale(t)));
                        Link {
                            target: Target::Boundary(boundary_points.len() - 1),
                            dist: t * len,
                        }
                    }
                    // Round-off can leave an endpoint just outside without a crossing.
                    (None, None) => {
                        boundary_points.push(q);
                        Link {
                            target: Target::Boundary(boundary_points.len() - 1),
                            dist: len,
                        }
                    }
                };
                row.push(link);
            }
            links.push(row);
        }

        let mut order: Vec<usize> = (0..nodes.len())
            .filter(|&k| nodes[k].kind == NodeKind::Free)
            .collect();
        order.sort_by(|&a, &b| {
            nodes[a]
                .pos
                .dist(&pole)
                .total_cmp(&nodes[b].pos.dist(&pole))
                .then(a.cmp(&b))
        });

        Ok(InfinityProblem {
            domain,
            pole,
            h,
            nodes,
            pole_node,
            links,
            boundary_points,
            order,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn pole(&self) -> Point {
        self.pole
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[LatticeNode] {
        &self.nodes
    }

    pub fn pole_node(&self) -> usize {
        self.pole_node
    }

    pub fn num_free(&self) -> usize {
        self.order.len()
    }

    /// Dirichlet points where links meet the boundary.
    pub fn boundary_points(&self) -> &[Point] {
        &self.boundary_points
    }
}

/// Lattice values with the iteration record.
#[derive(Debug, Clone, Serialize)]
pub struct InfinityField {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub final_update: f64,
    /// Sup-norm change per outward plus inward sweep.
    pub update_history: Vec<f64>,
}

/// Root of `max_j (v_j - t)/d_j = max_k (t - v_k)/d_k`.
fn balance(links: &[(f64, f64)], guess: f64) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &(v, _) in links {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi <= lo {
        return lo;
    }
    let mut t = guess.clamp(lo, hi);
    let mut pair: Option<(usize, usize)> = None;
    for _ in 0..200 {
        let (mut up, mut ju) = (f64::NEG_INFINITY, 0);
        let (mut down, mut kd) = (f64::NEG_INFINITY, 0);
        for (n, &(v, d)) in links.iter().enumerate() {
            let a = (v - t) / d;
            if a > up {
                up = a;
                ju = n;
            }
            let b = (t - v) / d;
            if b > down {
                down = b;
                kd = n;
            }
        }
        let g = up - down;
        if g == 0.0 || pair == Some((ju, kd)) {
            return t;
        }
        if g > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let (vj, dj) = links[ju];
        let (vk, dk) = links[kd];
        let cand = (dk * vj + dj * vk) / (dj + dk);
        let next = if cand > lo && cand < hi {
            pair = Some((ju, kd));
            cand
        } else {
            pair = None;
            0.5 * (lo + hi)
        };
        if next == t || hi - lo <= f64::EPSILON * lo.abs().max(hi.abs()).max(1.0) {
            return next;
        }
        t = next;
    }
    t
}

/// Solves with value 1 at the pole and 0 on the boundary.
pub fn solve_infinity_harmonic(
    problem: &InfinityProblem,
    tol: f64,
    max_iters: usize,
) -> Result<InfinityField> {
    let field = solve_infinity_with_data(problem, 1.0, &|_| 0.0, tol, max_iters)?;
    for (k, &v) in field.values.iter().enumerate() {
        let bad = if k == problem.pole_node {
            v != 1.0
        } else {
            !(0.0..1.0).contains(&v)
        };
        if bad {
            let node = problem.nodes[k];
            return Err(Error::Numeric(format!(
                "lattice value {v} at node ({}, {}) outside the admissible range",
                node.i, node.j
            )));
        }
    }
    Ok(field)
}

/// Solves with arbitrary pole and boundary data.
pub fn solve_infinity_with_data(
    problem: &InfinityProblem,
    pole_value: f64,
    boundary: &dyn Fn(&Point) -> f64,
    tol: f64,
    max_iters: usize,
) -> Result<InfinityField> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let bvals: Vec<f64> = problem.boundary_points.iter().map(boundary).collect();
    let floor = bvals.iter().copied().fold(pole_value, f64::min);
    let mut values = vec![0.0; problem.nodes.len()];
    for (k, node) in problem.nodes.iter().enumerate() {
        values[k] = if node.kind == NodeKind::Pole {
            pole_value
        } else {
            let d = problem.domain.distance_to_boundary(&node.pos);
            let w = d / (d + node.pos.dist(&problem.pole));
            floor + (pole_value - floor) * w
        };
    }
    if problem.order.is_empty() {
        return Ok(InfinityField {
            values,
            iterations: 0,
            final_update: 0.0,
            update_history: Vec::new(),
        });
    }

    let mut scratch: Vec<(f64, f64)> = Vec::new();
    let mut update_node = |k: usize, values: &mut Vec<f64>| {
        scratch.clear();
        for link in &problem.links[k] {
            let v = match link.target {
                Target::Node(n) => values[n],
                Target::Boundary(b) => bvals[b],
            };
            scratch.push((v, link.dist));
        }
        values[k] = balance(&scratch, values[k]);
    };

    let mut history = Vec::new();
    let mut previous = values.clone();
    for iter in 1..=max_iters {
        previous.copy_from_slice(&values);
        for &k in &problem.order {
            update_node(k, &mut values);
        }
        for &k in problem.order.iter().rev() {
            update_node(k, &mut values);
        }
        let update = values
            .iter()
            .zip(&previous)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        history.push(update);
        if update < tol {
            return Ok(InfinityField {
                values,
                iterations: iter,
                final_update: update,
                update_history: history,
            });
        }
    }
    let last = history.last().copied().unwrap_or(f64::NAN);
    Err(Error::Convergence {
        reason: format!("sup-update {last:.3e} still above {tol:.1e}"),
        iterations: max_iters,
        energy_history: history,
    })
}

fn cone_at(problem: &InfinityProblem, m: f64, y: &Point) -> f64 {
    1.0 - y.dist(&problem.pole) / m
}

/// Largest `|u - (1 - |y - x| / m)|` over lattice nodes, `m` the farthest boundary distance.
pub fn cone_sup_error(field: &InfinityField, problem: &InfinityProblem) -> f64 {
    let m = problem.domain.farthest_boundary_distance(&problem.pole);
    problem
        .nodes
        .iter()
        .zip(&field.values)
        .map(|(n, u)| (u - cone_at(problem, m, &n.pos)).abs())
        .fold(0.0, f64::max)
}

/// The solution lies below the cone through the pole and the farthest boundary point.
pub fn check_cone_comparison(field: &InfinityField, problem: &InfinityProblem) -> CheckReport {
    let m = problem.domain.farthest_boundary_distance(&problem.pole);
    let eta = tol::CONE_SLACK_H * problem.h;
    let strict = 1.0 - problem.h / (2.0 * m);
    let mut t = Tally::new("cone-comparison");
    t.tolerance("eta", eta);
    t.tolerance("m", m);
    t.tolerance("uniqueness_level", strict);
    for (node, &u) in problem.nodes.iter().zip(&field.values) {
        let cone = cone_at(problem, m, &node.pos);
        let at = || {
            format!(
                "node ({}, {}) at ({:.6}, {:.6})",
                node.i, node.j, node.pos.x, node.pos.y
            )
        };
        if node.kind == NodeKind::Pole {
            t.record(u, 1.0, tol::MAX_PRINCIPLE_SLACK, at);
            continue;
        }
        t.record(u, cone, eta, at);
        t.record(u, strict, tol::MAX_PRINCIPLE_SLACK, at);
    }
    t.finish(CheckMode::Enforced)
}

/// Gap tolerance `UP_GAP_BASE * (UP_GAP_REFERENCE_P / p) + 2 h`.
pub fn up_gap_tolerance(p: f64, h: f64) -> f64 {
    tol::UP_GAP_BASE * (tol::UP_GAP_REFERENCE_P / p) + 2.0 * h
}

/// How far the lattice solution can sit below the true one near the pole.
///
/// Graph paths through radius-`k` stencil links overestimate Euclidean length
/// by up to `1/cos(a/2)` with `a = atan(1/k)`, the widest angle between
/// neighbouring link directions. The pole cone has slope `1/d` and reaches
/// out to `m`, so its discrete version lags by at most that excess times `m/d`.
/// Zero in 1D, where links are collinear.
pub fn lattice_resolution(problem: &InfinityProblem) -> f64 {
    if problem.domain.dimension() == 1 {
        return 0.0;
    }
    let a = (1.0 / STENCIL_RADIUS as f64).atan();
    let d = problem.domain.distance_to_boundary(&problem.pole);
    let m = problem.domain.farthest_boundary_distance(&problem.pole);
    (1.0 / (a / 2.0).cos() - 1.0) * m / d
}

/// `u_p` interpolated at the lattice nodes; `None` where the mesh does not reach.
fn transfer(
    problem: &PoleProblem,
    result: &SolveResult,
    lattice: &InfinityProblem,
) -> Vec<Option<f64>> {
    let locator = MeshLocator::new(problem.mesh());
    let field = result.field();
    lattice
        .nodes
        .iter()
        .map(|n| locator.interpolate(&field, &n.pos))
        .collect()
}

/// Sup-norm gap between each `u_p` and the lattice solution, in the given order.
pub fn up_gaps(
    up_fields: &[(&PoleProblem, &SolveResult)],
    field: &InfinityField,
    lattice: &InfinityProblem,
) -> Result<Vec<(f64, f64)>> {
    validate_family(up_fields, lattice)?;
    Ok(up_fields
        .iter()
        .map(|(pb, r)| {
            let gap = transfer(pb, r, lattice)
                .iter()
                .zip(&field.values)
                .filter_map(|(a, b)| a.map(|a| (a - b).abs()))
                .fold(0.0, f64::max);
            (r.p, gap)
        })
        .collect())
}

fn validate_family(
    up_fields: &[(&PoleProblem, &SolveResult)],
    lattice: &InfinityProblem,
) -> Result<()> {
    if up_fields.is_empty() {
        return Err(Error::Config("no u_p fields to compare".into()));
    }
    for (pb, r) in up_fields {
        if pb.domain() != lattice.domain() {
            return Err(Error::Config(
                "u_p field solved on a different domain".into(),
            ));
        }
        if pb.mesh().pole().dist(&lattice.pole()) > tol::POLE_MATCH {
            return Err(Error::Config(
                "u_p field solved for a different pole".into(),
            ));
        }
        if r.u.len() != pb.mesh().num_vertices() {
            return Err(Error::Config("u_p field does not match its mesh".into()));
        }
    }
    if up_fields.windows(2).any(|w| !(w[0].1.p < w[1].1.p)) {
        return Err(Error::Config(
            "exponents must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// The gaps `||u_p - u_inf||` decrease along the list and the last one is small.
pub fn check_up_convergence(
    up_fields: &[(&PoleProblem, &SolveResult)],
    field: &InfinityField,
    lattice: &InfinityProblem,
) -> Result<CheckReport> {
    validate_family(up_fields, lattice)?;
    let transferred: Vec<Vec<Option<f64>>> = up_fields
        .iter()
        .map(|(pb, r)| transfer(pb, r, lattice))
        .collect();
    let h = lattice.h;
    let p_max = up_fields.last().map(|f| f.1.p).unwrap_or(f64::NAN);
    let gap_tol = up_gap_tolerance(p_max, h);
    // Gaps closer than the lattice can resolve are not ordered by it.
    let monotone_slack = tol::UP_GAP_MONOTONE_SLACK + lattice_resolution(lattice);
    let mut t = Tally::new("up-convergence");
    t.tolerance("gap", gap_tol);
    t.tolerance("monotone_slack", monotone_slack);
    t.tolerance("h", h);

    let mut gaps = Vec::with_capacity(up_fields.len());
    for (values, (_, r)) in transferred.iter().zip(up_fields) {
        let mut gap: f64 = 0.0;
        let mut missing = 0;
        for (a, b) in values.iter().zip(&field.values) {
            match a {
                Some(a) => gap = gap.max((a - b).abs()),
                None => missing += 1,
            }
        }
        if missing > 0 {
            t.exclusions.push(format!(
                "p = {}: {missing} lattice nodes outside the solver mesh",
                r.p
            ));
        }
        t.notes.push(format!("p = {}: sup gap {gap:.6e}", r.p));
        gaps.push((r.p, gap));
    }
    for w in gaps.windows(2) {
        t.record(w[1].1, w[0].1, monotone_slack, || {
            format!("gap at p = {} against p = {}", w[1].0, w[0].0)
        });
    }
    if let Some(&(p, gap)) = gaps.last() {
        t.record(gap, 0.0, gap_tol, || format!("final gap at p = {p}"));
    }
    if up_fields.len() == 1 {
        t.notes.push("single exponent; monotonicity vacuous".into());
    }

    if lattice.domain.is_convex() && transferred.len() > 1 {
        let mut defect = f64::INFINITY;
        for w in transferred.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                if let (Some(a), Some(b)) = (a, b) {
                    defect = defect.min(b - a);
                }
            }
        }
        t.tolerance("up_monotone_defect", tol::UP_MONOTONE_DEFECT);
        t.notes
            .push(format!("monotonicity defect min(u_q - u_p) = {defect:.6e}"));
        if defect < -tol::UP_MONOTONE_DEFECT {
            t.notes
                .push("monotonicity defect beyond floor; observational only".into());
        }
    }
    Ok(t.finish(CheckMode::Enforced))
}

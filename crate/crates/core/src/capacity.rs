//! Point-constrained p-energy minimization.
//!
//! The unknowns are the values at free vertices (neither boundary nor pole).
//! The pole value is pinned to one and boundary values to zero, so the
//! minimizer is the discrete extremal field and its energy the discrete
//! capacity `mu`. The integrand `(eps^2 + |grad v|^2)^(p/2)` is driven to
//! `eps -> 0` through a geometric continuation with damped Newton steps.

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::linalg::{reverse_cuthill_mckee, SkylineCholesky, SparseSymmetric};
use crate::mesh::{pairwise_sum, Mesh, ScalarField};
use crate::tolerances::{MAX_PRINCIPLE_SLACK, PLANAR_P_MARGIN};

/// A capacity problem: domain, mesh with pole vertex, exponent `p > N`.
#[derive(Debug, Clone)]
pub struct PoleProblem {
    domain: Domain,
    mesh: Mesh,
    p: f64,
}

impl PoleProblem {
    pub fn new(domain: Domain, mesh: Mesh, p: f64) -> Result<Self> {
        let n = domain.dimension() as f64;
        if mesh.dim() != domain.dimension() {
            return Err(Error::Precondition(
                "mesh and domain dimensions differ".into(),
            ));
        }
        if !p.is_finite() || p <= n {
            return Err(Error::Precondition(format!(
                "p must exceed N = {n}, got p = {p}"
            )));
        }
        if domain.dimension() == 2 && p < n + PLANAR_P_MARGIN {
            return Err(Error::Precondition(format!(
                "p = {p} is too close to N = {n}; planar solves need p >= N + {PLANAR_P_MARGIN}"
            )));
        }
        if !domain.contains(&mesh.pole()) {
            return Err(Error::PolePlacement("pole is not inside the domain".into()));
        }
        Ok(PoleProblem { domain, mesh, p })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.domain.dimension()
    }

    /// Whether vertex `i` carries a prescribed value.
    pub fn is_constrained(&self, i: usize) -> bool {
        i == self.mesh.pole_index() || self.mesh.is_boundary(i)
    }

    /// Overwrites constrained entries with the admissible values (pole 1, boundary 0).
    pub fn impose_constraints(&self, field: &mut ScalarField) {
        for i in 0..self.mesh.num_vertices() {
            if self.mesh.is_boundary(i) {
                field[i] = 0.0;
            }
        }
        field[self.mesh.pole_index()] = 1.0;
    }

    /// The clipped distance interpolant `d / d(pole)`.
    pub fn initial_guess(&self) -> ScalarField {
        // d / (d + r): a cone of slope 1/d(x) at the pole, and never flat. A
        // clamped d/d(x) plateaus at 1 wherever d > d(x), and the degenerate
        // p-energy cannot lower a plateau.
        let pole = self.mesh.pole();
        let mut u = ScalarField::new(
            self.mesh
                .vertices()
                .iter()
                .map(|y| {
                    let d = self.domain.distance_to_boundary(y).max(0.0);
                    let r = y.dist(&pole);
                    if d + r > 0.0 {
                        d / (d + r)
                    } else {
                        0.0
                    }
                })
                .collect(),
        );
        self.impose_constraints(&mut u);
        u
    }

    fn check_field(&self, field: &ScalarField) -> Result<()> {
        if field.len() != self.mesh.num_vertices() {
            return Err(Error::Precondition(format!(
                "field has {} values for {} vertices",
                field.len(),
                self.mesh.num_vertices()
            )));
        }
        if !field.is_finite() {
            return Err(Error::Numeric("field has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Tolerances and continuation schedule for [`solve_capacity`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_factor: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    pub max_iters: usize,
    pub rel_energy_tol: f64,
    pub grad_tol: f64,
    /// Sup norm of the Newton step below which the field counts as settled.
    pub step_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            eps_start: 1e-2,
            eps_end: 1e-8,
            eps_factor: 10.0,
            armijo: 1e-4,
            max_backtracks: 60,
            max_iters: 2000,
            rel_energy_tol: 1e-12,
            grad_tol: 1e-10,
            step_tol: 1e-9,
        }
    }
}

impl SolverOptions {
    fn schedule(&self) -> Result<Vec<f64>> {
        if !(self.eps_start >= self.eps_end && self.eps_end > 0.0 && self.eps_factor > 1.0) {
            return Err(Error::Config(
                "continuation needs eps_start >= eps_end > 0 and eps_factor > 1".into(),
            ));
        }
        let mut eps = vec![self.eps_start];
        while *eps.last().unwrap() > self.eps_end * (1.0 + 1e-9) {
            let next = (eps.last().unwrap() / self.eps_factor).max(self.eps_end);
            eps.push(next);
        }
        Ok(eps)
    }
}

/// Discrete extremal field with its capacity and diagnostics.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SolveResult {
    pub u: Vec<f64>,
    pub mu: f64,
    pub s: f64,
    pub p: f64,
    pub energy_history: Vec<f64>,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub eps_final: f64,
    /// Sup over hat functions of the eps = 0 weak-form defect.
    pub residual_norm: f64,
    /// Pole component of the unconstrained energy gradient.
    pub multiplier: f64,
    /// `max(0, -min u, max_{i != pole} u_i - 1)`.
    pub max_principle_defect: f64,
    pub energy_final: f64,
}

impl SolveResult {
    pub fn field(&self) -> ScalarField {
        ScalarField::new(self.u.clone())
    }
}

#[inline]
fn safe_pow(w: f64, e: f64) -> f64 {
    if w == 0.0 {
        if e > 0.0 {
            0.0
        } else if e == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        w.powf(e)
    }
}

/// `sum_e vol_e (eps^2 + |grad v|^2)^(p/2)`.
pub fn regularized_energy(problem: &PoleProblem, field: &ScalarField, eps: f64) -> Result<f64> {
    problem.check_field(field)?;
    if !(eps >= 0.0) {
        return Err(Error::Precondition("eps must be nonnegative".into()));
    }
    Ok(energy_unchecked(problem, field, eps))
}

fn energy_unchecked(problem: &PoleProblem, field: &ScalarField, eps: f64) -> f64 {
    let mesh = problem.mesh();
    let half_p = 0.5 * problem.p();
    let terms: Vec<f64> = (0..mesh.num_elements())
        .map(|e| {
            let g = mesh.element_gradient(field, e);
            let w = eps * eps + g[0] * g[0] + g[1] * g[1];
            mesh.element_volumes()[e] * safe_pow(w, half_p)
        })
        .collect();
    pairwise_sum(&terms)
}

/// Energy derivative in every vertex hat function, constrained or not.
fn full_gradient(problem: &PoleProblem, field: &ScalarField, eps: f64) -> Vec<f64> {
    let mesh = problem.mesh();
    let p = problem.p();
    let mut grad = vec![0.0; mesh.num_vertices()];
    for e in 0..mesh.num_elements() {
        let g = mesh.element_gradient(field, e);
        let w = eps * eps + g[0] * g[0] + g[1] * g[1];
        let flux = if w == 0.0 {
            0.0
        } else {
            p * w.powf(0.5 * p - 1.0)
        };
        let scale = mesh.element_volumes()[e] * flux;
        for (&i, dphi) in mesh.element(e).iter().zip(mesh.basis_gradients(e)) {
            grad[i] += scale * (g[0] * dphi[0] + g[1] * dphi[1]);
        }
    }
    grad
}

/// Energy gradient with respect to free vertex values; constrained entries are zero.
pub fn energy_gradient(
    problem: &PoleProblem,
    field: &ScalarField,
    eps: f64,
) -> Result<ScalarField> {
    problem.check_field(field)?;
    let mut grad = full_gradient(problem, field, eps);
    for (i, g) in grad.iter_mut().enumerate() {
        if problem.is_constrained(i) {
            *g = 0.0;
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("energy gradient is not finite".into()));
    }
    Ok(ScalarField::new(grad))
}

/// `int |grad u|^(p-2) grad u . grad phi - mu phi(pole)` at eps = 0.
pub fn weak_residual(
    problem: &PoleProblem,
    result: &SolveResult,
    test: &ScalarField,
) -> Result<f64> {
    problem.check_field(test)?;
    let mesh = problem.mesh();
    if (0..mesh.num_vertices()).any(|i| mesh.is_boundary(i) && test[i] != 0.0) {
        return Err(Error::Precondition(
            "test field must vanish on the boundary".into(),
        ));
    }
    let u = result.field();
    let p = problem.p();
    let terms: Vec<f64> = (0..mesh.num_elements())
        .map(|e| {
            let g = mesh.element_gradient(&u, e);
            let t = mesh.element_gradient(test, e);
            let w = g[0] * g[0] + g[1] * g[1];
            let flux = if w == 0.0 { 0.0 } else { w.powf(0.5 * p - 1.0) };
            mesh.element_volumes()[e] * flux * (g[0] * t[0] + g[1] * t[1])
        })
        .collect();
    Ok(pairwise_sum(&terms) - result.mu * test[mesh.pole_index()])
}

/// `||grad v||_p` of a piecewise-linear field, scaled to avoid overflow at large `p`.
pub fn gradient_p_norm(mesh: &Mesh, field: &ScalarField, p: f64) -> f64 {
    let mags: Vec<f64> = (0..mesh.num_elements())
        .map(|e| {
            let g = mesh.element_gradient(field, e);
            g[0].hypot(g[1])
        })
        .collect();
    let top = mags.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    let terms: Vec<f64> = mags
        .iter()
        .zip(mesh.element_volumes())
        .map(|(m, v)| v * (m / top).powf(p))
        .collect();
    top * pairwise_sum(&terms).powf(1.0 / p)
}

/// Diagonal value of the p-Green function, `G(x;x) = s^(p/(p-1))`.
pub fn green_diagonal(result: &SolveResult, p: f64) -> f64 {
    result.s.powf(p / (p - 1.0))
}

struct FreeSpace {
    index: Vec<usize>,
    vertices: Vec<usize>,
    pattern: SparseSymmetric,
    perm: Vec<usize>,
}

impl FreeSpace {
    fn new(problem: &PoleProblem) -> Self {
        let mesh = problem.mesh();
        let mut index = vec![usize::MAX; mesh.num_vertices()];
        let mut vertices = Vec::new();
        for i in 0..mesh.num_vertices() {
            if !problem.is_constrained(i) {
                index[i] = vertices.len();
                vertices.push(i);
            }
        }
        let mut adj = vec![Vec::new(); vertices.len()];
        for e in 0..mesh.num_elements() {
            let el = mesh.element(e);
            for &a in el {
                for &b in el {
                    let (ia, ib) = (index[a], index[b]);
                    if ia != usize::MAX && ib != usize::MAX && ia != ib {
                        adj[ia].push(ib);
                    }
                }
            }
        }
        let pattern = SparseSymmetric::from_adjacency(&adj);
        let perm = reverse_cuthill_mckee(&pattern);
        FreeSpace {
            index,
            vertices,
            pattern,
            perm,
        }
    }

    fn assemble_hessian(&mut self, problem: &PoleProblem, field: &ScalarField, eps: f64) {
        let mesh = problem.mesh();
        let p = problem.p();
        self.pattern.clear();
        for e in 0..mesh.num_elements() {
            let g = mesh.element_gradient(field, e);
            let w = eps * eps + g[0] * g[0] + g[1] * g[1];
            let vol = mesh.element_volumes()[e];
            let c1 = vol * p * safe_pow(w, 0.5 * p - 1.0);
            let c2 = if g == [0.0, 0.0] {
                0.0
            } else {
                vol * p * (p - 2.0) * safe_pow(w, 0.5 * p - 2.0)
            };
            let el = mesh.element(e);
            let grads = mesh.basis_gradients(e);
            for (a, &va) in el.iter().enumerate() {
                let ia = self.index[va];
                if ia == usize::MAX {
                    continue;
                }
                let ga = grads[a];
                let gda = g[0] * ga[0] + g[1] * ga[1];
                for (b, &vb) in el.iter().enumerate() {
                    let ib = self.index[vb];
                    if ib == usize::MAX {
                        continue;
                    }
                    let gb = grads[b];
                    let gdb = g[0] * gb[0] + g[1] * gb[1];
                    let v = c1 * (ga[0] * gb[0] + ga[1] * gb[1]) + c2 * gda * gdb;
                    self.pattern.add(ia, ib, v);
                }
            }
        }
    }
}

/// Relative energy decrease below which the Armijo test is dominated by round-off.
const ROUNDOFF_DECREASE: f64 = 1e-10;

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes the p-energy over admissible fields starting from the distance guess.
pub fn solve_capacity(problem: &PoleProblem, opts: &SolverOptions) -> Result<SolveResult> {
    solve_capacity_from(problem, opts, None)
}

/// As [`solve_capacity`], optionally warm-started from `guess` (constraints are re-imposed).
pub fn solve_capacity_from(
    problem: &PoleProblem,
    opts: &SolverOptions,
    guess: Option<&ScalarField>,
) -> Result<SolveResult> {
    let schedule = opts.schedule()?;
    let mut u = match guess {
        Some(g) => {
            problem.check_field(g)?;
            let mut u = g.clone();
            problem.impose_constraints(&mut u);
            u
        }
        None => problem.initial_guess(),
    };
    let mut space = FreeSpace::new(problem);
    let nfree = space.vertices.len();
    let mut history = Vec::new();
    let mut iterations = 0usize;
    let mut grad_norm = 0.0;

    for (stage, &eps) in schedule.iter().enumerate() {
        let last_stage = stage + 1 == schedule.len();
        let mut energy = energy_unchecked(problem, &u, eps);
        history.push(energy);
        loop {
            let full = full_gradient(problem, &u, eps);
            let grad: Vec<f64> = space.vertices.iter().map(|&v| full[v]).collect();
            grad_norm = sup_norm(&grad);
            if !grad_norm.is_finite() || !energy.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite energy or gradient at eps = {eps:e}"
                )));
            }
            // Scale reference for stationarity: the multiplier is p * mu.
            let mu_scale = energy;
            let grad_ok = grad_norm < opts.grad_tol * (1.0 + mu_scale);
            if nfree == 0 {
                break;
            }
            space.assemble_hessian(problem, &u, eps);
            let direction = newton_direction(&space, &grad);
            // The gradient test is relative to mu, which at large p is
            // dominated by the pole; far from it the step size is the gauge.
            if grad_ok && history_flat(&history, opts.rel_energy_tol) {
                let settled = !last_stage
                    || direction
                        .as_ref()
                        .is_none_or(|d| sup_norm(d) <= opts.step_tol);
                if settled {
                    break;
                }
            }
            if iterations >= opts.max_iters {
                return Err(Error::Convergence {
                    reason: format!(
                        "iteration budget exhausted at eps = {eps:e}, gradient {grad_norm:e}"
                    ),
                    iterations,
                    energy_history: history,
                });
            }
            iterations += 1;
            let (dir, slope) = match direction {
                Some(d) => {
                    let slope: f64 = d.iter().zip(&grad).map(|(a, b)| a * b).sum();
                    if slope < 0.0 {
                        (d, slope)
                    } else {
                        jacobi_direction(&space, &grad)
                    }
                }
                None => jacobi_direction(&space, &grad),
            };

            // Once the predicted decrease is below what the energy can resolve
            // in floating point, steps are judged by the gradient norm instead.
            let resolvable = -slope > ROUNDOFF_DECREASE * energy.abs();
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..=opts.max_backtracks {
                let mut trial = u.clone();
                for (k, &v) in space.vertices.iter().enumerate() {
                    trial[v] += alpha * dir[k];
                }
                let e_trial = energy_unchecked(problem, &trial, eps);
                let ok = e_trial.is_finite()
                    && if resolvable {
                        e_trial <= energy + opts.armijo * alpha * slope
                    } else {
                        let g_trial = full_gradient(problem, &trial, eps);
                        let g_sup = space
                            .vertices
                            .iter()
                            .fold(0.0f64, |m, &v| m.max(g_trial[v].abs()));
                        g_sup < grad_norm
                    };
                if ok {
                    accepted = Some((trial, e_trial));
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((trial, e_trial)) => {
                    u = trial;
                    energy = e_trial;
                    history.push(energy);
                }
                None => {
                    if grad_ok || (!last_stage && grad_norm < 1e-6 * (1.0 + mu_scale)) {
                        break;
                    }
                    return Err(Error::Convergence {
                        reason: format!(
                            "line search failed at eps = {eps:e}, gradient {grad_norm:e}"
                        ),
                        iterations,
                        energy_history: history,
                    });
                }
            }
        }
    }

    let mu = energy_unchecked(problem, &u, 0.0);
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Numeric(format!(
            "capacity {mu} is not positive and finite"
        )));
    }
    let p = problem.p();
    let s = mu.powf(-1.0 / p);
    let full0 = full_gradient(problem, &u, 0.0);
    let pole = problem.mesh().pole_index();
    let multiplier = full0[pole];
    let mut residual_norm: f64 = (multiplier / p - mu).abs();
    for &v in &space.vertices {
        residual_norm = residual_norm.max((full0[v] / p).abs());
    }
    let mut defect: f64 = 0.0;
    for (i, &x) in u.values().iter().enumerate() {
        defect = defect.max(-x);
        if i != pole {
            defect = defect.max(x - 1.0);
        }
    }
    let eps_final = *schedule.last().unwrap();
    Ok(SolveResult {
        u: u.into_values(),
        mu,
        s,
        p,
        energy_final: *history.last().unwrap(),
        energy_history: history,
        iterations,
        final_grad_norm: grad_norm,
        eps_final,
        residual_norm,
        multiplier,
        max_principle_defect: defect,
    })
}

fn history_flat(history: &[f64], tol: f64) -> bool {
    match history {
        [.., prev, last] => (prev - last).abs() <= tol * last.abs().max(f64::MIN_POSITIVE),
        _ => false,
    }
}

fn newton_direction(space: &FreeSpace, grad: &[f64]) -> Option<Vec<f64>> {
    // Solve with unit diagonal: near-pole rows can outweigh far rows by many
    // orders of magnitude at large p, and an absolute shift would swamp the latter.
    let diag = space.pattern.diagonal();
    if !diag.iter().all(|&d| d > 0.0 && d.is_finite()) {
        return None;
    }
    let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let scaled = space.pattern.scaled(&scale);
    let rhs: Vec<f64> = grad.iter().zip(&scale).map(|(g, s)| -g * s).collect();
    let mut shift = 1e-12;
    for _ in 0..8 {
        if let Ok(f) = SkylineCholesky::factor(&scaled, &space.perm, shift) {
            let d: Vec<f64> = f
                .solve(&rhs)
                .iter()
                .zip(&scale)
                .map(|(y, s)| y * s)
                .collect();
            if d.iter().all(|x| x.is_finite()) {
                return Some(d);
            }
        }
        shift *= 100.0;
    }
    None
}

fn jacobi_direction(space: &FreeSpace, grad: &[f64]) -> (Vec<f64>, f64) {
    let diag = space.pattern.diagonal();
    let floor = diag.iter().cloned().fold(0.0, f64::max).max(1.0) * 1e-12;
    let d: Vec<f64> = grad
        .iter()
        .zip(&diag)
        .map(|(g, &h)| -g / h.max(floor))
        .collect();
    let slope = d.iter().zip(grad).map(|(a, b)| a * b).sum();
    (d, slope)
}

/// Whether the result satisfies the discrete maximum principle up to round-off.
pub fn satisfies_max_principle(result: &SolveResult) -> bool {
    result.max_principle_defect <= MAX_PRINCIPLE_SLACK
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::mesh::{build_interval_mesh, build_planar_mesh};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interval_problem(pole: f64, n: usize, p: f64) -> PoleProblem {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let m = build_interval_mesh(&d, pole, n, 1.0).unwrap();
        PoleProblem::new(d, m, p).unwrap()
    }

    #[test]
    fn hat_energy_by_hand() {
        // Slopes +-2 on halves of (0,1): 4 * 0.5 + 4 * 0.5 = 4.
        let prob = interval_problem(0.5, 2, 2.0);
        let hat = ScalarField::new(vec![0.0, 1.0, 0.0]);
        assert_relative_eq!(
            regularized_energy(&prob, &hat, 0.0).unwrap(),
            4.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn constant_field_energy() {
        let prob = interval_problem(0.5, 4, 3.0);
        let c = ScalarField::new(vec![0.7; 5]);
        assert_eq!(regularized_energy(&prob, &c, 0.0).unwrap(), 0.0);
        let eps: f64 = 0.1;
        assert_relative_eq!(
            regularized_energy(&prob, &c, eps).unwrap(),
            eps.powf(3.0),
            max_relative = 1e-14
        );
    }

    #[test]
    fn quadratic_gradient_matches_hand_assembly() {
        // Three interior nodes at 0.25, 0.5, 0.75 with h = 0.25; stiffness
        // (1/h) tridiag(-1, 2, -1). For p = 2 the gradient is 2 K u.
        let d = Domain::interval(0.0, 1.0).unwrap();
        let m = build_interval_mesh(&d, 0.25, 4, 1.0).unwrap();
        let prob = PoleProblem::new(d, m, 2.0).unwrap();
        let u = ScalarField::new(vec![0.0, 1.0, 0.3, 0.8, 0.0]);
        let g = energy_gradient(&prob, &u, 0.0).unwrap();
        let k = |l: f64, c: f64, r: f64| 2.0 * (2.0 * c - l - r) / 0.25;
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 0.0);
        assert_relative_eq!(g[2], k(1.0, 0.3, 0.8), max_relative = 1e-14);
        assert_relative_eq!(g[3], k(0.3, 0.8, 0.0), max_relative = 1e-14);
        assert_eq!(g[4], 0.0);
    }

    #[test]
    fn midpoint_p2_exact_solution() {
        let prob = interval_problem(0.5, 4, 2.0);
        let r = solve_capacity(&prob, &SolverOptions::default()).unwrap();
        for (a, b) in r.u.iter().zip([0.0, 0.5, 1.0, 0.5, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_relative_eq!(r.mu, 4.0, max_relative = 1e-12);
        assert_relative_eq!(r.s, 0.5, max_relative = 1e-12);
        assert_relative_eq!(green_diagonal(&r, 2.0), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn off_center_p3_matches_hand_value() {
        let prob = interval_problem(0.25, 64, 3.0);
        let r = solve_capacity(&prob, &SolverOptions::default()).unwrap();
        let expect = (16.0f64 + 16.0 / 9.0).powf(-1.0 / 3.0);
        assert_relative_eq!(r.s, expect, max_relative = 1e-9);
        assert!((r.s - 0.383155).abs() < 1e-6);
        assert_eq!(r.s, r.mu.powf(-1.0 / 3.0));
    }

    #[test]
    fn p_at_or_below_dimension_is_refused() {
        let d = Domain::unit_disk();
        let m = build_planar_mesh(&d, Point::new(0.0, 0.0), 0.2, 1.5, 2).unwrap();
        assert!(matches!(
            PoleProblem::new(d.clone(), m.clone(), 2.0),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            PoleProblem::new(d.clone(), m.clone(), 2.05),
            Err(Error::Precondition(_))
        ));
        assert!(PoleProblem::new(d, m, 2.1).is_ok());
    }

    #[test]
    fn disk_solve_diagnostics() {
        let d = Domain::unit_disk();
        let m = build_planar_mesh(&d, Point::new(0.0, 0.0), 0.1, 1.5, 3).unwrap();
        let prob = PoleProblem::new(d, m, 4.0).unwrap();
        let r = solve_capacity(&prob, &SolverOptions::default()).unwrap();
        assert!(satisfies_max_principle(&r));
        assert_relative_eq!(r.multiplier, 4.0 * r.mu, max_relative = 1e-8);
        assert!(r.residual_norm <= 1e-8 * (1.0 + r.mu));
        // Steps below the round-off floor are judged by the gradient, so the
        // energy may move by a few ulps there.
        for w in r.energy_history.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-13),
                "energy increased: {} -> {}",
                w[0],
                w[1]
            );
        }
        let u = r.field();
        assert_relative_eq!(weak_residual(&prob, &r, &u).unwrap(), 0.0, epsilon = 1e-10);
        let g = energy_gradient(&prob, &u, r.eps_final).unwrap();
        assert!(g.sup_norm() <= 1e-10 * (1.0 + r.mu));
    }

    #[test]
    fn initial_guess_peaks_only_at_the_pole() {
        // Pole close to the re-entrant corner: d exceeds d(pole) over most of
        // the arms, where a clamped d / d(pole) would sit flat at 1.
        let l = Domain::polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
        ])
        .unwrap();
        let pole = Point::new(0.85, 0.85);
        let m = build_planar_mesh(&l, pole, 0.1, 1.5, 3).unwrap();
        let prob = PoleProblem::new(l, m, 10.0).unwrap();
        let g = prob.initial_guess();
        let mesh = prob.mesh();
        for (i, &v) in g.values().iter().enumerate() {
            if i == mesh.pole_index() {
                assert_eq!(v, 1.0);
            } else if mesh.is_boundary(i) {
                assert_eq!(v, 0.0);
            } else {
                assert!(v > 0.0 && v < 1.0, "vertex {i}: {v}");
            }
        }
    }

    #[test]
    fn scaled_norm_matches_energy() {
        let prob = interval_problem(0.5, 4, 3.0);
        let v = ScalarField::new(vec![0.0, 0.2, 1.0, -0.4, 0.0]);
        let direct = regularized_energy(&prob, &v, 0.0).unwrap().powf(1.0 / 3.0);
        assert_relative_eq!(
            gradient_p_norm(prob.mesh(), &v, 3.0),
            direct,
            max_relative = 1e-14
        );
        // Slopes 40 on (0, 0.5) and -40 on (0.5, 1): the norm is 40 for every p.
        let big = ScalarField::new(vec![0.0, 10.0, 20.0, 10.0, 0.0]);
        assert_relative_eq!(
            gradient_p_norm(prob.mesh(), &big, 400.0),
            40.0,
            max_relative = 1e-13
        );
    }

    #[test]
    fn weak_residual_rejects_boundary_values() {
        let prob = interval_problem(0.5, 4, 2.0);
        let r = solve_capacity(&prob, &SolverOptions::default()).unwrap();
        let bad = ScalarField::new(vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(weak_residual(&prob, &r, &bad).is_err());
    }

    #[test]
    fn warm_start_reaches_same_minimizer() {
        let d = Domain::unit_square();
        let m = build_planar_mesh(&d, Point::new(0.5, 0.5), 0.1, 1.5, 3).unwrap();
        let p4 = PoleProblem::new(d.clone(), m.clone(), 4.0).unwrap();
        let p6 = PoleProblem::new(d, m, 6.0).unwrap();
        let r4 = solve_capacity(&p4, &SolverOptions::default()).unwrap();
        let cold = solve_capacity(&p6, &SolverOptions::default()).unwrap();
        let warm = solve_capacity_from(&p6, &SolverOptions::default(), Some(&r4.field())).unwrap();
        assert_relative_eq!(cold.mu, warm.mu, max_relative = 1e-10);
    }

    #[test]
    fn perturbations_raise_energy() {
        let d = Domain::unit_square();
        let m = build_planar_mesh(&d, Point::new(0.4, 0.6), 0.1, 1.5, 3).unwrap();
        let prob = PoleProblem::new(d, m, 3.0).unwrap();
        let r = solve_capacity(&prob, &SolverOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut v = r.field();
            for i in 0..v.len() {
                if !prob.is_constrained(i) {
                    v[i] += rng.gen_range(-0.05..0.05);
                }
            }
            let dist = v.axpy(-1.0, &r.field()).sup_norm();
            assert!(dist >= 1e-3);
            let e = regularized_energy(&prob, &v, 0.0).unwrap();
            assert!(e > r.mu, "perturbed energy {e} <= mu {}", r.mu);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gradient_matches_central_differences(
            vals in proptest::collection::vec(-1.0f64..1.0, 9),
            dir in proptest::collection::vec(-1.0f64..1.0, 9),
            p in 2.0f64..8.0,
            eps in 1e-3f64..1e-1,
        ) {
            let prob = interval_problem(0.375, 8, p);
            let mut u = ScalarField::new(vals);
            prob.impose_constraints(&mut u);
            let mut phi = ScalarField::new(dir);
            for i in 0..phi.len() {
                if prob.is_constrained(i) {
                    phi[i] = 0.0;
                }
            }
            let g = energy_gradient(&prob, &u, eps).unwrap();
            let analytic: f64 = g.values().iter().zip(phi.values()).map(|(a, b)| a * b).sum();
            let t = 1e-5;
            let jp = regularized_energy(&prob, &u.axpy(t, &phi), eps).unwrap();
            let jm = regularized_energy(&prob, &u.axpy(-t, &phi), eps).unwrap();
            let fd = (jp - jm) / (2.0 * t);
            prop_assert!((fd - analytic).abs() <= 1e-6 * (1.0 + analytic.abs()),
                "fd {fd} vs analytic {analytic}");
        }

        #[test]
        fn dilated_interval_scaling(t in prop::sample::select(vec![0.5, 2.0]),
                                    x in prop::sample::select(vec![0.25, 0.5]),
                                    p in prop::sample::select(vec![2.0, 4.0])) {
            let unit = interval_problem(x, 32, p);
            let d = Domain::interval(0.0, t).unwrap();
            let m = build_interval_mesh(&d, t * x, 32, 1.0).unwrap();
            let scaled = PoleProblem::new(d, m, p).unwrap();
            let opts = SolverOptions::default();
            let s1 = solve_capacity(&unit, &opts).unwrap().s;
            let st = solve_capacity(&scaled, &opts).unwrap().s;
            prop_assert!((st - t.powf(1.0 - 1.0 / p) * s1).abs() <= 1e-9 * st);
        }
    }
}

//! Sampling of `s_p` over pole sets and exponent lists, and the quantitative
//! checks run against those samples.
//!
//! Every check compares `lhs <= rhs` up to an allowed slack. The reported
//! `worst_violation` is the largest excess measured in units of its slack, so
//! a report passes when it is at most 1.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::{gradient_p_norm, solve_capacity, PoleProblem, SolveResult, SolverOptions};
use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::mesh::{MeshParams, ScalarField};
use crate::oracles::{
    closed_form_sp, morrey_constant, pointwise_lower_bound, pointwise_upper_bound, pole_exponent,
    pole_prefactor, up_ball_center,
};
use crate::tolerances as tol;

/// Per-run overrides of the default slacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub oracle: f64,
    pub holder: f64,
    pub bounds: f64,
    pub lower_slack: f64,
    pub monotone: f64,
    pub concavity: f64,
    pub pointwise: f64,
    pub slope_rel: f64,
    pub prefactor_rel: f64,
    pub limit_rel: f64,
    pub limit_constant: f64,
    pub up_monotone: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            oracle: tol::ORACLE_ETA,
            holder: tol::HOLDER_ETA,
            bounds: tol::BOUNDS_ETA,
            lower_slack: tol::LOWER_BOUND_SLACK,
            monotone: tol::MONOTONE_ETA,
            concavity: tol::CONCAVITY_ETA,
            pointwise: tol::POINTWISE_ETA,
            slope_rel: tol::ASYMPTOTIC_SLOPE_REL,
            prefactor_rel: tol::ASYMPTOTIC_PREFACTOR_REL,
            limit_rel: tol::LIMIT_REL,
            limit_constant: tol::LIMIT_CONSTANT,
            up_monotone: tol::UP_MONOTONE_DEFECT,
        }
    }
}

impl Tolerances {
    /// Large-p tolerance `max(limit_rel * d, limit_constant / p)`.
    pub fn limit(&self, p: f64, d: f64) -> f64 {
        (self.limit_rel * d).max(self.limit_constant / p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Numeric,
    Oracle,
    Failed,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::Numeric => "numeric",
            Provenance::Oracle => "oracle",
            Provenance::Failed => "failed",
        })
    }
}

/// Where sampled values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleSource {
    /// Closed forms where they exist, mesh solves elsewhere.
    #[default]
    Auto,
    Numeric,
    /// Closed forms only; poles without one are a configuration error.
    Oracle,
}

impl std::str::FromStr for SampleSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SampleSource::Auto),
            "numeric" => Ok(SampleSource::Numeric),
            "oracle" => Ok(SampleSource::Oracle),
            _ => Err(Error::Config(format!("unknown sample source `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleOptions {
    pub source: SampleSource,
    pub solver: SolverOptions,
    /// Keep meshes and fields of numeric entries for later checks.
    pub keep_solves: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            source: SampleSource::Auto,
            solver: SolverOptions::default(),
            keep_solves: true,
        }
    }
}

/// A completed mesh solve.
#[derive(Debug, Clone)]
pub struct NumericSolve {
    pub problem: PoleProblem,
    pub result: SolveResult,
}

#[derive(Debug, Clone)]
pub struct SpEntry {
    pub s: Option<f64>,
    pub mu: Option<f64>,
    pub provenance: Provenance,
    pub error: Option<String>,
    pub solve: Option<Arc<NumericSolve>>,
}

impl SpEntry {
    fn oracle(s: f64, p: f64) -> Self {
        SpEntry {
            s: Some(s),
            mu: Some(s.powf(-p)),
            provenance: Provenance::Oracle,
            error: None,
            solve: None,
        }
    }
}

/// `s_p` tabulated over poles and exponents; `entries[ip][ix]`.
#[derive(Debug, Clone)]
pub struct SpSample {
    pub domain: Domain,
    pub p_values: Vec<f64>,
    pub poles: Vec<Point>,
    pub entries: Vec<Vec<SpEntry>>,
    pub d: Vec<f64>,
    pub vol: f64,
    pub mesh_params: MeshParams,
}

impl SpSample {
    pub fn s(&self, ip: usize, ix: usize) -> Option<f64> {
        self.entries[ip][ix].s
    }

    pub fn mu(&self, ip: usize, ix: usize) -> Option<f64> {
        self.entries[ip][ix].mu
    }

    pub fn provenance(&self, ip: usize, ix: usize) -> Provenance {
        self.entries[ip][ix].provenance
    }

    pub fn dim(&self) -> usize {
        self.domain.dimension()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty() || self.p_values.is_empty()
    }

    fn is_oracle(&self, ip: usize, ix: usize) -> bool {
        self.provenance(ip, ix) == Provenance::Oracle
    }

    fn location(&self, ip: usize, ix: usize) -> String {
        format!(
            "p={} {}",
            self.p_values[ip],
            fmt_point(&self.poles[ix], self.dim())
        )
    }

    /// Entries that failed, as report exclusions.
    fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for ip in 0..self.p_values.len() {
            for ix in 0..self.poles.len() {
                let e = &self.entries[ip][ix];
                if e.provenance == Provenance::Failed {
                    out.push(format!(
                        "{}: {}",
                        self.location(ip, ix),
                        e.error.as_deref().unwrap_or("failed")
                    ));
                }
            }
        }
        out
    }
}

fn fmt_point(p: &Point, dim: usize) -> String {
    if dim == 1 {
        format!("x={}", p.x)
    } else {
        format!("x=({}, {})", p.x, p.y)
    }
}

/// Tabulates `s_p` for every `(p, pole)` pair.
pub fn sample_sp(
    domain: &Domain,
    poles: &[Point],
    p_values: &[f64],
    mesh_params: &MeshParams,
    opts: &SampleOptions,
) -> Result<SpSample> {
    if p_values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("p values must be strictly increasing".into()));
    }
    let n = domain.dimension();
    for &p in p_values {
        if !(p > n as f64) {
            return Err(Error::Precondition(format!(
                "p must exceed N = {n}, got p = {p}"
            )));
        }
    }
    for pole in poles {
        if !domain.contains(pole) {
            return Err(Error::PolePlacement(format!(
                "pole {} is not inside the domain",
                fmt_point(pole, n)
            )));
        }
    }
    let d: Vec<f64> = poles
        .iter()
        .map(|x| domain.distance_to_boundary(x))
        .collect();
    let vol = domain.measure();

    // One column per pole; a pole's mesh is shared across its exponents.
    let columns: Vec<Result<Vec<SpEntry>>> = poles
        .par_iter()
        .map(|pole| sample_column(domain, pole, p_values, mesh_params, opts))
        .collect();
    let mut by_pole = Vec::with_capacity(poles.len());
    for c in columns {
        by_pole.push(c?);
    }
    let entries = (0..p_values.len())
        .map(|ip| by_pole.iter().map(|col| col[ip].clone()).collect())
        .collect();
    Ok(SpSample {
        domain: domain.clone(),
        p_values: p_values.to_vec(),
        poles: poles.to_vec(),
        entries,
        d,
        vol,
        mesh_params: *mesh_params,
    })
}

fn sample_column(
    domain: &Domain,
    pole: &Point,
    p_values: &[f64],
    mesh_params: &MeshParams,
    opts: &SampleOptions,
) -> Result<Vec<SpEntry>> {
    let oracles: Vec<Option<f64>> = p_values
        .iter()
        .map(|&p| closed_form_sp(domain, pole, p))
        .collect();
    let use_oracle = match opts.source {
        SampleSource::Numeric => false,
        SampleSource::Auto => oracles.iter().all(|o| o.is_some()),
        SampleSource::Oracle => {
            if oracles.iter().any(|o| o.is_none()) {
                return Err(Error::Config(format!(
                    "no closed form at pole {}",
                    fmt_point(pole, domain.dimension())
                )));
            }
            true
        }
    };
    if use_oracle {
        return Ok(oracles
            .iter()
            .zip(p_values)
            .map(|(o, &p)| SpEntry::oracle(o.unwrap(), p))
            .collect());
    }
    let mesh = mesh_params.build(domain, *pole)?;
    let mut out = Vec::with_capacity(p_values.len());
    for &p in p_values {
        let problem = PoleProblem::new(domain.clone(), mesh.clone(), p)?;
        match solve_capacity(&problem, &opts.solver) {
            Ok(result) => out.push(SpEntry {
                s: Some(result.s),
                mu: Some(result.mu),
                provenance: Provenance::Numeric,
                error: None,
                solve: opts
                    .keep_solves
                    .then(|| Arc::new(NumericSolve { problem, result })),
            }),
            Err(e) if !e.is_configuration() => out.push(SpEntry {
                s: None,
                mu: None,
                provenance: Provenance::Failed,
                error: Some(e.to_string()),
                solve: None,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckMode {
    Enforced,
    /// Reported but never failed.
    Observational,
}

/// Outcome of one check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub mode: CheckMode,
    /// Largest excess over the allowed slack, in units of that slack.
    pub worst_violation: f64,
    pub worst_location: String,
    /// `worst_violation` passes when at most this value.
    pub tolerance: f64,
    /// Largest `lhs - rhs` before slack (negative when every comparison has margin).
    pub worst_raw_violation: Option<f64>,
    pub comparisons: usize,
    pub tolerances_used: BTreeMap<String, f64>,
    pub exclusions: Vec<String>,
    pub notes: Vec<String>,
}

impl CheckReport {
    fn vacuous(name: &str, note: &str) -> Self {
        CheckReport {
            name: name.into(),
            pass: true,
            mode: CheckMode::Enforced,
            worst_violation: 0.0,
            worst_location: String::new(),
            tolerance: 1.0,
            worst_raw_violation: None,
            comparisons: 0,
            tolerances_used: BTreeMap::new(),
            exclusions: Vec::new(),
            notes: vec![note.into()],
        }
    }
}

/// Accumulates `lhs <= rhs + slack` comparisons.
pub(crate) struct Tally {
    name: String,
    worst: f64,
    worst_raw: Option<f64>,
    location: String,
    count: usize,
    tolerances: BTreeMap<String, f64>,
    pub(crate) exclusions: Vec<String>,
    pub(crate) notes: Vec<String>,
}

impl Tally {
    pub(crate) fn new(name: &str) -> Self {
        Tally {
            name: name.into(),
            worst: 0.0,
            worst_raw: None,
            location: String::new(),
            count: 0,
            tolerances: BTreeMap::new(),
            exclusions: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub(crate) fn tolerance(&mut self, key: &str, value: f64) {
        self.tolerances.insert(key.into(), value);
    }

    pub(crate) fn record(
        &mut self,
        lhs: f64,
        rhs: f64,
        slack: f64,
        location: impl FnOnce() -> String,
    ) {
        let excess = lhs - rhs;
        let ratio = if !excess.is_finite() {
            f64::MAX
        } else if excess <= 0.0 {
            0.0
        } else if slack > 0.0 {
            excess / slack
        } else {
            f64::MAX
        };
        self.count += 1;
        let closer = match self.worst_raw {
            None => true,
            Some(r) => ratio > self.worst || (ratio == self.worst && excess > r),
        };
        if closer {
            self.location = location();
        }
        self.worst = self.worst.max(ratio);
        self.worst_raw = Some(self.worst_raw.map_or(excess, |r| r.max(excess)));
    }

    pub(crate) fn finish(self, mode: CheckMode) -> CheckReport {
        let mut notes = self.notes;
        if self.count == 0 {
            notes.push("no comparisons; vacuous pass".into());
        }
        let within = self.worst <= 1.0;
        if mode == CheckMode::Observational && !within {
            notes.push("tolerance exceeded; observational only".into());
        }
        CheckReport {
            name: self.name,
            pass: mode == CheckMode::Observational || within,
            mode,
            worst_violation: self.worst,
            worst_location: self.location,
            tolerance: 1.0,
            worst_raw_violation: self.worst_raw,
            comparisons: self.count,
            tolerances_used: self.tolerances,
            exclusions: self.exclusions,
            notes,
        }
    }
}

/// `|v(x)| <= s ||grad v||_p` for random fields on each stored mesh.
pub fn check_pointwise_inequality(
    sample: &SpSample,
    trials: usize,
    seed: u64,
    tols: &Tolerances,
) -> CheckReport {
    let mut t = Tally::new("pointwise");
    t.tolerance("eta", tols.pointwise);
    t.exclusions = sample.failures();
    let mut stored = 0;
    for ip in 0..sample.p_values.len() {
        for ix in 0..sample.poles.len() {
            let Some(solve) = sample.entries[ip][ix].solve.as_ref() else {
                continue;
            };
            stored += 1;
            let mesh = solve.problem.mesh();
            let p = solve.problem.p();
            let s = solve.result.s;
            let pole = mesh.pole_index();
            let entry_seed =
                seed ^ ((ip as u64) << 32 | ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(entry_seed);
            let u = solve.result.field();
            let mut fields: Vec<(String, ScalarField)> =
                vec![("u".into(), u.clone()), ("7u".into(), u.scaled(7.0))];
            for k in 0..trials {
                let mut v = ScalarField::zeros(mesh.num_vertices());
                for i in 0..mesh.num_vertices() {
                    if !mesh.is_boundary(i) {
                        v[i] = rng.gen_range(-1.0..1.0);
                    }
                }
                if k % 2 == 1 {
                    // Perturbations of the extremal probe the near-equality regime.
                    let amp = 10f64.powi(-(1 + (k as i32 % 6)));
                    v = u.axpy(amp, &v);
                }
                fields.push((format!("trial {k}"), v));
            }
            for (label, v) in fields {
                let lhs = v[pole].abs();
                let rhs = s * gradient_p_norm(mesh, &v, p);
                t.record(lhs, rhs, tols.pointwise * rhs, || {
                    format!("{} field {label}", sample.location(ip, ix))
                });
            }
        }
    }
    if stored == 0 {
        t.notes.push("no stored numeric solves in sample".into());
    }
    t.finish(CheckMode::Enforced)
}

/// `|s(x) - s(y)| <= C_{p,N} |x - y|^(1 - N/p)` over all pole pairs.
pub fn check_holder(sample: &SpSample, tols: &Tolerances) -> CheckReport {
    let mut t = Tally::new("holder");
    t.tolerance("eta_numeric", tols.holder);
    t.tolerance("eta_oracle", tols.oracle);
    t.exclusions = sample.failures();
    let n = sample.dim();
    if sample.poles.len() < 2 {
        t.notes.push("fewer than two poles".into());
    }
    for (ip, &p) in sample.p_values.iter().enumerate() {
        let c = morrey_constant(p, n).expect("sample exponents exceed N");
        for i in 0..sample.poles.len() {
            for j in i + 1..sample.poles.len() {
                let (Some(si), Some(sj)) = (sample.s(ip, i), sample.s(ip, j)) else {
                    continue;
                };
                let eta = if sample.is_oracle(ip, i) && sample.is_oracle(ip, j) {
                    tols.oracle
                } else {
                    tols.holder
                };
                let dist = sample.poles[i].dist(&sample.poles[j]);
                let rhs = c * dist.powf(1.0 - n as f64 / p);
                t.record((si - sj).abs(), rhs, eta * rhs, || {
                    format!(
                        "p={p} pair {} / {}",
                        fmt_point(&sample.poles[i], n),
                        fmt_point(&sample.poles[j], n)
                    )
                });
            }
        }
    }
    t.finish(CheckMode::Enforced)
}

/// `d |Omega|^(-1/p) <= s <= C_{p,N} d^(1-N/p)`, plus `s_numeric <= s_oracle` where a closed form exists.
pub fn check_bounds(sample: &SpSample, tols: &Tolerances) -> CheckReport {
    let mut t = Tally::new("bounds");
    t.tolerance("eta_upper_numeric", tols.bounds);
    t.tolerance("lower_slack_numeric", tols.lower_slack);
    t.tolerance("eta_oracle", tols.oracle);
    t.tolerance("oracle_dominance", tol::ORACLE_DOMINANCE);
    t.exclusions = sample.failures();
    let n = sample.dim();
    let mut lower_failed = false;
    for (ip, &p) in sample.p_values.iter().enumerate() {
        for ix in 0..sample.poles.len() {
            let Some(s) = sample.s(ip, ix) else { continue };
            let d = sample.d[ix];
            let oracle = sample.is_oracle(ip, ix);
            let lower = pointwise_lower_bound(p, d, sample.vol).expect("positive measure");
            let upper = pointwise_upper_bound(p, n, d).expect("sample exponents exceed N");
            let lower_slack = if oracle {
                tols.oracle * lower
            } else {
                tols.lower_slack
            };
            let before = t.worst;
            t.record(lower, s, lower_slack, || {
                format!("{} lower", sample.location(ip, ix))
            });
            if !oracle && t.worst > 1.0 && before <= 1.0 {
                lower_failed = true;
            }
            let eta = if oracle { tols.oracle } else { tols.bounds };
            t.record(s, upper, eta * upper, || {
                format!("{} upper", sample.location(ip, ix))
            });
            if !oracle {
                if let Some(exact) = closed_form_sp(&sample.domain, &sample.poles[ix], p) {
                    t.record(s, exact, tol::ORACLE_DOMINANCE * exact, || {
                        format!("{} numeric above closed form", sample.location(ip, ix))
                    });
                }
            }
        }
    }
    if lower_failed {
        t.notes.push(
            "a numeric entry fell below the volume lower bound; refine the mesh near that pole"
                .into(),
        );
    }
    t.finish(CheckMode::Enforced)
}

/// `p -> s_p(x) |Omega|^(1/p)` is nonincreasing.
pub fn check_p_monotonicity(sample: &SpSample, tols: &Tolerances) -> CheckReport {
    let mut t = Tally::new("monotone");
    t.tolerance("eta_numeric", tols.monotone);
    t.tolerance("eta_oracle", tols.oracle);
    t.exclusions = sample.failures();
    if sample.p_values.len() < 2 {
        t.notes.push("single exponent".into());
    }
    let n = sample.dim();
    for ix in 0..sample.poles.len() {
        for i in 0..sample.p_values.len() {
            for j in i + 1..sample.p_values.len() {
                let (Some(si), Some(sj)) = (sample.s(i, ix), sample.s(j, ix)) else {
                    continue;
                };
                let (pi, pj) = (sample.p_values[i], sample.p_values[j]);
                let wi = si * sample.vol.powf(1.0 / pi);
                let wj = sj * sample.vol.powf(1.0 / pj);
                let eta = if sample.is_oracle(i, ix) && sample.is_oracle(j, ix) {
                    tols.oracle
                } else {
                    tols.monotone
                };
                t.record(wj, wi, eta * wj, || {
                    format!("{} p={pi} -> p={pj}", fmt_point(&sample.poles[ix], n))
                });
            }
        }
    }
    t.finish(CheckMode::Enforced)
}

/// Value of one family at a pole index, if present.
type Lookup<'a> = Box<dyn Fn(usize) -> Option<f64> + 'a>;

/// Index triples `(x0, mid, x1)` present in the pole list.
pub fn midpoint_triples(poles: &[Point]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for i in 0..poles.len() {
        for j in i + 1..poles.len() {
            let m = poles[i].midpoint(&poles[j]);
            if let Some(k) = poles.iter().position(|q| q.dist(&m) <= tol::POLE_MATCH) {
                out.push((i, k, j));
            }
        }
    }
    out
}

/// Midpoint concavity of `s_p` and of `mu_p^(-1/(p-N))`.
pub fn check_midpoint_concavity(sample: &SpSample, tols: &Tolerances) -> Result<CheckReport> {
    let triples = midpoint_triples(&sample.poles);
    if triples.is_empty() && !sample.poles.is_empty() {
        return Err(Error::Config(
            "concavity needs poles containing midpoint triples".into(),
        ));
    }
    let mut t = Tally::new("concavity");
    t.tolerance("eta_numeric", tols.concavity);
    t.tolerance("eta_oracle", tols.oracle);
    t.exclusions = sample.failures();
    let mode = if sample.domain.is_convex() {
        CheckMode::Enforced
    } else {
        t.notes
            .push("non-convex domain; concavity is not implied".into());
        CheckMode::Observational
    };
    let n = sample.dim() as f64;
    for (ip, &p) in sample.p_values.iter().enumerate() {
        let families: [(&str, Lookup<'_>); 2] = [
            ("s", Box::new(move |ix| sample.s(ip, ix))),
            (
                "mu^(-1/(p-N))",
                Box::new(move |ix| sample.mu(ip, ix).map(|m| m.powf(-1.0 / (p - n)))),
            ),
        ];
        for (label, value) in families.iter() {
            let row: Vec<Option<f64>> = (0..sample.poles.len()).map(value).collect();
            let top = row.iter().flatten().cloned().fold(0.0, f64::max);
            for &(i, k, j) in &triples {
                let (Some(a), Some(m), Some(b)) = (row[i], row[k], row[j]) else {
                    continue;
                };
                let all_oracle =
                    sample.is_oracle(ip, i) && sample.is_oracle(ip, k) && sample.is_oracle(ip, j);
                let eta = if all_oracle {
                    tols.oracle
                } else {
                    tols.concavity
                };
                t.record(0.5 * (a + b), m, eta * top, || {
                    format!(
                        "p={p} {label} triple {} | {} | {}",
                        fmt_point(&sample.poles[i], sample.dim()),
                        fmt_point(&sample.poles[k], sample.dim()),
                        fmt_point(&sample.poles[j], sample.dim())
                    )
                });
            }
        }
    }
    Ok(t.finish(mode))
}

/// `s_p(x) -> d(x)` as `p` grows, approached from above in the weighted sense.
pub fn check_infinity_limit(sample: &SpSample, tols: &Tolerances) -> Result<CheckReport> {
    let Some(&p_max) = sample.p_values.last() else {
        return Ok(CheckReport::vacuous("limit", "no exponents"));
    };
    if p_max < 50.0 {
        return Err(Error::Config(format!(
            "limit check needs a largest exponent of at least 50, got {p_max}"
        )));
    }
    let mut t = Tally::new("limit");
    t.tolerance("limit_rel", tols.limit_rel);
    t.tolerance("limit_constant", tols.limit_constant);
    t.tolerance("eta_monotone_numeric", tols.monotone);
    t.tolerance("eta_oracle", tols.oracle);
    t.exclusions = sample.failures();
    let last = sample.p_values.len() - 1;
    let n = sample.dim();
    for ix in 0..sample.poles.len() {
        let d = sample.d[ix];
        if let Some(s) = sample.s(last, ix) {
            t.record((s - d).abs(), 0.0, tols.limit(p_max, d), || {
                format!("{} gap to d={d}", sample.location(last, ix))
            });
        }
        let mut prev: Option<(f64, f64, bool)> = None;
        for (ip, &p) in sample.p_values.iter().enumerate() {
            let Some(s) = sample.s(ip, ix) else { continue };
            let oracle = sample.is_oracle(ip, ix);
            let w = s * sample.vol.powf(1.0 / p);
            let slack = if oracle {
                tols.oracle * d
            } else {
                tols.limit(p, d)
            };
            t.record(d, w, slack, || {
                format!("{} weighted value below d={d}", sample.location(ip, ix))
            });
            if let Some((pp, wp, op)) = prev {
                let eta = if oracle && op {
                    tols.oracle
                } else {
                    tols.monotone
                };
                t.record(w, wp, eta * w, || {
                    format!(
                        "{} weighted increase p={pp} -> p={p}",
                        fmt_point(&sample.poles[ix], n)
                    )
                });
            }
            prev = Some((p, w, oracle));
        }
    }
    Ok(t.finish(CheckMode::Enforced))
}

/// Least-squares line through `(x_i, y_i)`: returns `(slope, intercept)`.
fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fitted near-pole exponent and prefactor of `1 - u_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoleFit {
    pub slope: f64,
    pub prefactor: f64,
    pub expected_slope: f64,
    pub expected_prefactor: f64,
    pub points: usize,
    pub r_min: f64,
    pub r_max: f64,
}

/// Fits `log(1 - u)` against `log r` on vertices with `r` in `[2 h_min, 10 h_min]`.
pub fn fit_pole_asymptotics(problem: &PoleProblem, result: &SolveResult) -> Result<PoleFit> {
    if problem.dim() != 2 {
        return Err(Error::Precondition(
            "near-pole fit needs a planar solve".into(),
        ));
    }
    let mesh = problem.mesh();
    let pole = mesh.pole();
    let h_min = mesh.min_incident_edge(mesh.pole_index());
    let (r_min, r_max) = (2.0 * h_min, 10.0 * h_min);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, y) in mesh.vertices().iter().enumerate() {
        let r = y.dist(&pole);
        let gap = 1.0 - result.u[i];
        if r >= r_min * (1.0 - 1e-9)
            && r <= r_max * (1.0 + 1e-9)
            && gap > 0.0
            && !mesh.is_boundary(i)
        {
            xs.push(r.ln());
            ys.push(gap.ln());
        }
    }
    if xs.len() < tol::ASYMPTOTIC_MIN_VERTICES {
        return Err(Error::InsufficientResolution(format!(
            "annulus [{r_min:.3e}, {r_max:.3e}] holds {} vertices, need {}",
            xs.len(),
            tol::ASYMPTOTIC_MIN_VERTICES
        )));
    }
    let (slope, intercept) = fit_line(&xs, &ys);
    let p = problem.p();
    Ok(PoleFit {
        slope,
        prefactor: intercept.exp(),
        expected_slope: pole_exponent(p, 2),
        expected_prefactor: pole_prefactor(p, 2, result.mu)?,
        points: xs.len(),
        r_min,
        r_max,
    })
}

fn asymptotics_report(
    fit: &PoleFit,
    slope_rel: f64,
    prefactor_rel: f64,
    location: &str,
) -> CheckReport {
    let mut t = Tally::new("asymptotics");
    t.tolerance("slope_rel", slope_rel);
    t.tolerance("prefactor_rel", prefactor_rel);
    t.record(
        (fit.slope - fit.expected_slope).abs(),
        0.0,
        slope_rel * fit.expected_slope,
        || format!("{location} slope {} vs {}", fit.slope, fit.expected_slope),
    );
    t.record(
        (fit.prefactor - fit.expected_prefactor).abs(),
        0.0,
        prefactor_rel * fit.expected_prefactor,
        || {
            format!(
                "{location} prefactor {} vs {}",
                fit.prefactor, fit.expected_prefactor
            )
        },
    );
    t.notes.push(format!(
        "fit over r in [{:.3e}, {:.3e}] with {} points: slope {:.6}, prefactor {:.6}",
        fit.r_min, fit.r_max, fit.points, fit.slope, fit.prefactor
    ));
    t.finish(CheckMode::Enforced)
}

/// Near-pole exponent and prefactor of a planar numeric solve.
pub fn check_pole_asymptotics(
    problem: &PoleProblem,
    result: &SolveResult,
    tols: &Tolerances,
) -> Result<CheckReport> {
    let fit = fit_pole_asymptotics(problem, result)?;
    let loc = format!("p={} {}", problem.p(), fmt_point(&problem.mesh().pole(), 2));
    Ok(asymptotics_report(
        &fit,
        tols.slope_rel,
        tols.prefactor_rel,
        &loc,
    ))
}

/// The same fit on the ball-center closed form, at oracle tolerance.
pub fn check_ball_asymptotics(
    n: usize,
    radius: f64,
    p: f64,
    tols: &Tolerances,
) -> Result<CheckReport> {
    let s = crate::oracles::sp_ball_center(n, radius, p)?;
    let mu = s.powf(-p);
    let (r_min, r_max) = (1e-3 * radius, 1e-1 * radius);
    let count = 16;
    let mut xs = Vec::with_capacity(count);
    let mut ys = Vec::with_capacity(count);
    for k in 0..count {
        let r = r_min * (r_max / r_min).powf(k as f64 / (count - 1) as f64);
        xs.push(r.ln());
        ys.push((1.0 - up_ball_center(n, radius, p, r)?).ln());
    }
    let (slope, intercept) = fit_line(&xs, &ys);
    let fit = PoleFit {
        slope,
        prefactor: intercept.exp(),
        expected_slope: pole_exponent(p, n),
        expected_prefactor: pole_prefactor(p, n, mu)?,
        points: count,
        r_min,
        r_max,
    };
    let mut report = asymptotics_report(
        &fit,
        tols.oracle,
        tols.oracle,
        &format!("ball N={n} R={radius} p={p}"),
    );
    report.name = "asymptotics-oracle".into();
    Ok(report)
}

/// `min (u_q - u_p)` over vertices for increasing exponents on a shared mesh.
pub fn check_up_monotonicity(
    domain: &Domain,
    results: &[&SolveResult],
    tols: &Tolerances,
) -> Result<CheckReport> {
    let mut t = Tally::new("up-monotone");
    t.tolerance("defect", tols.up_monotone);
    for w in results.windows(2) {
        if w[0].u.len() != w[1].u.len() {
            return Err(Error::Config("fields live on different meshes".into()));
        }
        if !(w[0].p < w[1].p) {
            return Err(Error::Config("exponents must increase".into()));
        }
        let defect = w[0]
            .u
            .iter()
            .zip(&w[1].u)
            .map(|(a, b)| b - a)
            .fold(f64::INFINITY, f64::min);
        t.record(-defect, 0.0, tols.up_monotone, || {
            format!(
                "p={} -> p={}: min(u_q - u_p) = {defect:.3e}",
                w[0].p, w[1].p
            )
        });
    }
    if !domain.is_convex() {
        t.notes
            .push("non-convex domain; monotonicity is not implied".into());
    }
    Ok(t.finish(CheckMode::Observational))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    Oracle,
    /// The finest mesh in the sequence.
    FinestMesh,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementRow {
    pub h: f64,
    pub vertices: usize,
    pub s: f64,
    pub error: f64,
    /// `log(e_prev / e) / log(h_prev / h)`; absent on the first row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementTable {
    pub reference: f64,
    pub reference_kind: Reference,
    pub rows: Vec<RefinementRow>,
    pub monotone: bool,
}

/// Solves on a sequence of mesh sizes and tabulates the error in `s_p(pole)`.
///
/// For intervals `h` maps to `n = round((b - a) / h)` segments.
pub fn refinement_study(
    domain: &Domain,
    pole: Point,
    p: f64,
    hs: &[f64],
    template: &MeshParams,
    solver: &SolverOptions,
) -> Result<RefinementTable> {
    if hs.is_empty() {
        return Err(Error::Config(
            "refinement study needs at least one h".into(),
        ));
    }
    let solves: Vec<Result<(f64, usize, f64)>> = hs
        .par_iter()
        .map(|&h| {
            let mut params = *template;
            params.h = h;
            if let Domain::Interval { a, b } = domain {
                params.n = (((b - a) / h).round() as usize).max(2);
            }
            let mesh = params.build(domain, pole)?;
            let nv = mesh.num_vertices();
            let problem = PoleProblem::new(domain.clone(), mesh, p)?;
            let r = solve_capacity(&problem, solver)?;
            Ok((h, nv, r.s))
        })
        .collect();
    let solves = solves.into_iter().collect::<Result<Vec<_>>>()?;
    let (reference, kind) = match closed_form_sp(domain, &pole, p) {
        Some(s) => (s, Reference::Oracle),
        None => {
            let finest = solves
                .iter()
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .expect("non-empty");
            (finest.2, Reference::FinestMesh)
        }
    };
    let mut rows: Vec<RefinementRow> = Vec::with_capacity(solves.len());
    for &(h, vertices, s) in &solves {
        let error = (s - reference).abs();
        let order = rows.last().and_then(|prev| {
            (prev.error > 0.0 && error > 0.0 && prev.h != h)
                .then(|| (prev.error / error).ln() / (prev.h / h).ln())
        });
        rows.push(RefinementRow {
            h,
            vertices,
            s,
            error,
            order,
        });
    }
    let considered = match kind {
        Reference::Oracle => &rows[..],
        Reference::FinestMesh => &rows[..rows.len().saturating_sub(1)],
    };
    let monotone = considered
        .windows(2)
        .all(|w| w[1].error < w[0].error || w[1].error == 0.0);
    Ok(RefinementTable {
        reference,
        reference_kind: kind,
        rows,
        monotone,
    })
}

/// The five sample-level checks the `verify` suites select from.
pub fn run_sample_checks(
    sample: &SpSample,
    tols: &Tolerances,
    which: &[&str],
) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for &name in which {
        out.push(match name {
            "holder" => check_holder(sample, tols),
            "bounds" => check_bounds(sample, tols),
            "monotone" => check_p_monotonicity(sample, tols),
            "concavity" => check_midpoint_concavity(sample, tols)?,
            "limit" => check_infinity_limit(sample, tols)?,
            other => return Err(Error::Config(format!("unknown check `{other}`"))),
        });
    }
    Ok(out)
}

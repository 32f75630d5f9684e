//! The five subcommands. Each returns its artifacts and exit status; main
//! writes them and the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pcap_core::capacity::{solve_capacity, PoleProblem, SolveResult};
use pcap_core::infinity::{
    check_cone_comparison, check_up_convergence, solve_infinity_harmonic, InfinityProblem,
    NodeKind, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use pcap_core::oracles::{
    morrey_constant, pointwise_lower_bound, pointwise_upper_bound, sp_ball_center, sp_interval,
    unit_ball_volume, up_ball_center, up_interval,
};
use pcap_core::properties::{
    check_ball_asymptotics, check_pointwise_inequality, check_pole_asymptotics,
    check_up_monotonicity, run_sample_checks, sample_sp, CheckReport, Provenance, SampleOptions,
    SampleSource, SpSample, Tolerances,
};
use pcap_core::{Domain, Mesh, MeshParams, Point};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::{num, Artifacts};
use crate::settings::{parse_poles, Settings};

pub struct Outcome {
    pub artifacts: Artifacts,
    pub exit: u8,
}

const U_FIELD: &str = "u_field.csv";

pub const SUITES: &[&str] = &[
    "all",
    "oracle",
    "holder",
    "bounds",
    "monotone",
    "concavity",
    "limit",
    "asymptotics",
    "infinity",
];

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn pole_coords(p: &Point, dim: usize) -> Vec<f64> {
    if dim == 1 {
        vec![p.x]
    } else {
        vec![p.x, p.y]
    }
}

fn mesh_dump(mesh: &Mesh) -> Vec<u8> {
    let mut buf = Vec::new();
    mesh.write_dump(&mut buf).expect("writing to memory");
    buf
}

/// Contents of `result.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ResultFile {
    pub domain: String,
    pub p: f64,
    pub pole: Vec<f64>,
    pub h: f64,
    pub grading: f64,
    pub levels: u32,
    pub n: usize,
    pub s_p: f64,
    pub mu_p: f64,
    pub iterations: usize,
    pub residual_norm: f64,
    pub eps_final: f64,
    pub energy_final: f64,
    pub multiplier: f64,
    pub final_grad_norm: f64,
    pub max_principle_defect: f64,
    pub vertices: usize,
    pub u_field: String,
}

fn u_field_csv(mesh: &Mesh, u: &[f64]) -> String {
    let planar = mesh.dim() == 2;
    let mut out = String::from(if planar {
        "vertex,x,y,u\n"
    } else {
        "vertex,x,u\n"
    });
    for (i, (v, val)) in mesh.vertices().iter().zip(u).enumerate() {
        if planar {
            let _ = writeln!(out, "{i},{},{},{}", num(v.x), num(v.y), num(*val));
        } else {
            let _ = writeln!(out, "{i},{},{}", num(v.x), num(*val));
        }
    }
    out
}

pub fn solve(s: &Settings) -> Result<Outcome, CliError> {
    let domain = s.domain()?;
    let p = s.single_p()?;
    let pole = s.pole(&domain)?.ok_or_else(|| config("missing --pole"))?;
    let params = s.mesh_params(&domain)?;
    let solver = s.solver()?;
    let mesh = params.build(&domain, pole)?;
    let problem = PoleProblem::new(domain.clone(), mesh, p)?;
    let r = solve_capacity(&problem, &solver)?;
    let mesh = problem.mesh();

    let file = ResultFile {
        domain: domain.to_string(),
        p,
        pole: pole_coords(&mesh.pole(), domain.dimension()),
        h: s.mesh_size(&domain, &params),
        grading: params.grading,
        levels: params.levels,
        n: params.n,
        s_p: r.s,
        mu_p: r.mu,
        iterations: r.iterations,
        residual_norm: r.residual_norm,
        eps_final: r.eps_final,
        energy_final: r.energy_final,
        multiplier: r.multiplier,
        final_grad_norm: r.final_grad_norm,
        max_principle_defect: r.max_principle_defect,
        vertices: mesh.num_vertices(),
        u_field: U_FIELD.into(),
    };
    let mut artifacts = Artifacts::default();
    artifacts.add_json("result.json", &file);
    artifacts.add_text(U_FIELD, u_field_csv(mesh, &r.u));
    if s.flag("dump_mesh")? {
        artifacts.add("mesh.txt", mesh_dump(mesh));
    }
    println!("s_p={} mu_p={} iters={}", r.s, r.mu, r.iterations);
    Ok(Outcome { artifacts, exit: 0 })
}

fn default_poles(domain: &Domain) -> &'static str {
    if domain.dimension() == 1 {
        "grid:9"
    } else {
        "grid:5,5"
    }
}

fn sample_options(s: &Settings, keep: bool) -> Result<SampleOptions, CliError> {
    Ok(SampleOptions {
        source: s.source()?,
        solver: s.solver()?,
        keep_solves: keep,
    })
}

fn has_failures(sample: &SpSample) -> bool {
    sample
        .entries
        .iter()
        .flatten()
        .any(|e| e.provenance == Provenance::Failed)
}

fn sp_field_csv(sample: &SpSample) -> Result<String, CliError> {
    let n = sample.dim();
    let mut out =
        String::from("p,pole_x,pole_y,s_p,mu_p,d_omega,lower_bound,upper_bound,provenance\n");
    for (ip, &p) in sample.p_values.iter().enumerate() {
        for (ix, pole) in sample.poles.iter().enumerate() {
            let d = sample.d[ix];
            let e = &sample.entries[ip][ix];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                num(p),
                num(pole.x),
                num(pole.y),
                num(e.s.unwrap_or(f64::NAN)),
                num(e.mu.unwrap_or(f64::NAN)),
                num(d),
                num(pointwise_lower_bound(p, d, sample.vol)?),
                num(pointwise_upper_bound(p, n, d)?),
                e.provenance
            );
        }
    }
    Ok(out)
}

pub fn field(s: &Settings) -> Result<Outcome, CliError> {
    let domain = s.domain()?;
    let ps = s.p_values("p")?.ok_or_else(|| config("missing --p"))?;
    let params = s.mesh_params(&domain)?;
    let margin = 2.0 * s.mesh_size(&domain, &params);
    let poles = parse_poles(
        s.raw("poles").unwrap_or(default_poles(&domain)),
        &domain,
        margin,
    )?;
    let sample = sample_sp(&domain, &poles, &ps, &params, &sample_options(s, false)?)?;

    let mut artifacts = Artifacts::default();
    artifacts.add_text("sp_field.csv", sp_field_csv(&sample)?);
    if s.flag("emit_plot")? {
        artifacts.add_text(
            "sp_field.gp",
            "set datafile separator \",\"\n\
             set key top left\n\
             set xlabel \"d_omega\"\n\
             set ylabel \"s_p\"\n\
             plot \"sp_field.csv\" using 6:4 skip 1 with points pt 7 title \"s_p\", \\\n\
             \x20    \"\" using 6:7 skip 1 with points pt 1 title \"lower bound\", \\\n\
             \x20    \"\" using 6:8 skip 1 with points pt 2 title \"upper bound\"\n"
                .into(),
        );
    }
    let failed = has_failures(&sample);
    println!(
        "rows={} poles={} exponents={}{}",
        sample.poles.len() * sample.p_values.len(),
        sample.poles.len(),
        sample.p_values.len(),
        if failed {
            " (failed entries present)"
        } else {
            ""
        }
    );
    Ok(Outcome {
        artifacts,
        exit: if failed { 1 } else { 0 },
    })
}

#[derive(Debug, Serialize)]
struct SweepRow {
    p: f64,
    s_p: Option<f64>,
    mu_p: Option<f64>,
    provenance: Provenance,
    iterations: Option<usize>,
    residual_norm: Option<f64>,
    error: Option<String>,
}

pub fn sweep(s: &Settings) -> Result<Outcome, CliError> {
    let domain = s.domain()?;
    let ps = s
        .p_values("p_list")?
        .or(s.p_values("p")?)
        .ok_or_else(|| config("missing --p-list"))?;
    if ps.len() < 2 {
        return Err(config("a sweep needs at least two exponents"));
    }
    let pole = s.pole_or_centroid(&domain)?;
    let params = s.mesh_params(&domain)?;
    let sample = sample_sp(&domain, &[pole], &ps, &params, &sample_options(s, true)?)?;
    let d = sample.d[0];

    let mut table = String::from("p,s_p,s_p_weighted,d_omega,gap\n");
    let mut rows = Vec::with_capacity(ps.len());
    println!(
        "{:>10} {:>22} {:>22} {:>12} {:>22}",
        "p", "s_p", "s_p*vol^(1/p)", "d_omega", "gap"
    );
    for (ip, &p) in ps.iter().enumerate() {
        let e = &sample.entries[ip][0];
        let sp = e.s.unwrap_or(f64::NAN);
        let weighted = sp * sample.vol.powf(1.0 / p);
        let gap = (sp - d).abs();
        let _ = writeln!(
            table,
            "{},{},{},{},{}",
            num(p),
            num(sp),
            num(weighted),
            num(d),
            num(gap)
        );
        println!("{p:>10} {sp:>22} {weighted:>22} {d:>12} {gap:>22}");
        rows.push(SweepRow {
            p,
            s_p: e.s,
            mu_p: e.mu,
            provenance: e.provenance,
            iterations: e.solve.as_ref().map(|x| x.result.iterations),
            residual_norm: e.solve.as_ref().map(|x| x.result.residual_norm),
            error: e.error.clone(),
        });
    }
    let mut artifacts = Artifacts::default();
    artifacts.add_text("sweep.csv", table);
    artifacts.add_json("sweep_results.json", &rows);
    if s.flag("emit_plot")? {
        artifacts.add_text(
            "sweep.gp",
            "set datafile separator \",\"\n\
             set logscale xy\n\
             set xlabel \"p\"\n\
             set ylabel \"|s_p - d_omega|\"\n\
             plot \"sweep.csv\" using 1:5 skip 1 with linespoints title \"gap\"\n"
                .into(),
        );
    }
    if s.flag("dump_mesh")? {
        if let Some(solve) = sample
            .entries
            .iter()
            .flatten()
            .find_map(|e| e.solve.as_ref())
        {
            artifacts.add("mesh.txt", mesh_dump(solve.problem.mesh()));
        }
    }
    let failed = has_failures(&sample);
    Ok(Outcome {
        artifacts,
        exit: if failed { 1 } else { 0 },
    })
}

fn renamed(mut reports: Vec<CheckReport>, prefix: &str) -> Vec<CheckReport> {
    for r in &mut reports {
        r.name = format!("{prefix}/{}", r.name);
    }
    reports
}

/// Closed-form samples only: interval grid and ball center.
fn oracle_suite(tols: &Tolerances) -> Result<Vec<CheckReport>, CliError> {
    let opts = SampleOptions {
        source: SampleSource::Oracle,
        keep_solves: false,
        ..Default::default()
    };
    let interval = Domain::interval(0.0, 1.0)?;
    let poles: Vec<Point> = (1..=9).map(|k| Point::on_line(k as f64 / 10.0)).collect();
    let sample = sample_sp(
        &interval,
        &poles,
        &[2.0, 3.0, 5.0, 10.0, 50.0, 200.0],
        &MeshParams::default(),
        &opts,
    )?;
    let mut out = renamed(
        run_sample_checks(
            &sample,
            tols,
            &["holder", "bounds", "monotone", "concavity", "limit"],
        )?,
        "oracle-interval",
    );
    let ball_ps = [3.0, 4.0, 6.0, 10.0, 50.0];
    let disk = Domain::unit_disk();
    let sample = sample_sp(
        &disk,
        &[Point::new(0.0, 0.0)],
        &ball_ps,
        &MeshParams::default(),
        &opts,
    )?;
    out.extend(renamed(
        run_sample_checks(&sample, tols, &["holder", "bounds", "monotone", "limit"])?,
        "oracle-ball",
    ));
    for p in ball_ps {
        let mut r = check_ball_asymptotics(2, 1.0, p, tols)?;
        r.name = format!("oracle-ball/{}/p={p}", r.name);
        out.push(r);
    }
    Ok(out)
}

fn load_compare(path: &Path) -> Result<(PoleProblem, SolveResult), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
    let file: ResultFile = serde_json::from_str(&text)
        .map_err(|e| config(format!("{} is not a result file: {e}", path.display())))?;
    let domain: Domain = file.domain.parse()?;
    let pole = match file.pole.as_slice() {
        [x] => Point::on_line(*x),
        [x, y] => Point::new(*x, *y),
        _ => return Err(config("result file pole has the wrong dimension")),
    };
    let params = MeshParams {
        h: file.h,
        grading: file.grading,
        levels: file.levels,
        n: file.n,
    };
    let mesh = params.build(&domain, pole)?;
    let csv_path: PathBuf = path.parent().unwrap_or(Path::new(".")).join(&file.u_field);
    let csv = std::fs::read_to_string(&csv_path)
        .map_err(|e| config(format!("cannot read {}: {e}", csv_path.display())))?;
    let planar = domain.dimension() == 2;
    let mut u = Vec::with_capacity(mesh.num_vertices());
    for (k, line) in csv.lines().skip(1).enumerate() {
        let cols: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| config(format!("{}: bad line {}", csv_path.display(), k + 2)))?;
        let (x, y, val) = match (planar, cols.as_slice()) {
            (true, [_, x, y, v]) => (*x, *y, *v),
            (false, [_, x, v]) => (*x, 0.0, *v),
            _ => {
                return Err(config(format!(
                    "{}: bad line {}",
                    csv_path.display(),
                    k + 2
                )))
            }
        };
        if k >= mesh.num_vertices() || mesh.vertex(k).dist(&Point::new(x, y)) > 1e-12 {
            return Err(config("u field does not match the rebuilt mesh"));
        }
        u.push(val);
    }
    if u.len() != mesh.num_vertices() {
        return Err(config("u field does not match the rebuilt mesh"));
    }
    let problem = PoleProblem::new(domain, mesh, file.p)?;
    let result = SolveResult {
        u,
        mu: file.mu_p,
        s: file.s_p,
        p: file.p,
        energy_history: Vec::new(),
        iterations: file.iterations,
        final_grad_norm: file.final_grad_norm,
        eps_final: file.eps_final,
        residual_norm: file.residual_norm,
        multiplier: file.multiplier,
        max_principle_defect: file.max_principle_defect,
        energy_final: file.energy_final,
    };
    Ok((problem, result))
}

fn lattice_csv(lattice: &InfinityProblem, values: &[f64]) -> String {
    let mut out = String::from("i,j,x,y,u\n");
    for (node, u) in lattice.nodes().iter().zip(values) {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            node.i,
            node.j,
            num(node.pos.x),
            num(node.pos.y),
            num(*u)
        );
    }
    out
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    suite: &'a str,
    exit_code: u8,
    tolerances: &'a Tolerances,
    reports: &'a [CheckReport],
}

pub fn verify(s: &Settings) -> Result<Outcome, CliError> {
    let suite = s.raw("suite").unwrap_or("all");
    if !SUITES.contains(&suite) {
        return Err(config(format!(
            "unknown suite `{suite}`; expected one of {}",
            SUITES.join(", ")
        )));
    }
    let want = |name: &str| suite == "all" || suite == name;
    let tols = s.tolerances()?;
    let seed = s.seed()?;
    let mut reports = Vec::new();
    let mut artifacts = Artifacts::default();

    if want("oracle") {
        reports.extend(oracle_suite(&tols)?);
    }

    if suite != "oracle" {
        let compare = s.raw("compare_with").map(PathBuf::from);
        let compared = match &compare {
            Some(path) if want("infinity") => Some(load_compare(path)?),
            _ => None,
        };
        let fallback = compared
            .as_ref()
            .map(|(pb, _)| pb.domain().clone())
            .unwrap_or_else(Domain::unit_square);
        let domain = s.domain_or(fallback)?;
        let params = s.mesh_params(&domain)?;
        let size = s.mesh_size(&domain, &params);
        let pole = match (s.pole(&domain)?, &compared) {
            (Some(p), _) => p,
            (None, Some((pb, _))) => pb.mesh().pole(),
            (None, None) => domain.centroid(),
        };
        let p_grid = s.p_values("p")?.unwrap_or_else(|| vec![4.0]);
        let p_list = s
            .p_values("p_list")?
            .unwrap_or_else(|| vec![4.0, 10.0, 30.0, 50.0]);

        let grid_checks: Vec<&str> = ["holder", "bounds", "concavity"]
            .into_iter()
            .filter(|c| want(c))
            .collect();
        if !grid_checks.is_empty() {
            let poles = parse_poles(
                s.raw("poles").unwrap_or(default_poles(&domain)),
                &domain,
                2.0 * size,
            )?;
            let sample = sample_sp(&domain, &poles, &p_grid, &params, &sample_options(s, true)?)?;
            reports.extend(run_sample_checks(&sample, &tols, &grid_checks)?);
            if suite == "all" {
                let trials = s.usize("trials")?.unwrap_or(20);
                reports.push(check_pointwise_inequality(&sample, trials, seed, &tols));
            }
        }

        let mut family = None;
        if want("monotone") || want("limit") {
            let sample = sample_sp(
                &domain,
                &[pole],
                &p_list,
                &params,
                &sample_options(s, true)?,
            )?;
            let checks: Vec<&str> = ["monotone", "limit"]
                .into_iter()
                .filter(|c| want(c))
                .collect();
            reports.extend(run_sample_checks(&sample, &tols, &checks)?);
            let solves: Vec<_> = sample
                .entries
                .iter()
                .filter_map(|row| row[0].solve.clone())
                .collect();
            if solves.len() == p_list.len() {
                if want("monotone") {
                    let results: Vec<&SolveResult> = solves.iter().map(|x| &x.result).collect();
                    reports.push(check_up_monotonicity(&domain, &results, &tols)?);
                }
                family = Some(solves);
            }
        }

        if want("asymptotics") {
            if domain.dimension() == 2 {
                let p = p_grid[0];
                let mesh = params.build(&domain, pole)?;
                let problem = PoleProblem::new(domain.clone(), mesh, p)?;
                let r = solve_capacity(&problem, &s.solver()?)?;
                reports.push(check_pole_asymptotics(&problem, &r, &tols)?);
                reports.push(check_ball_asymptotics(2, 1.0, p, &tols)?);
            } else if suite == "asymptotics" {
                return Err(config("the near-pole fit needs a planar domain"));
            }
        }

        if want("infinity") {
            let default_h = match &domain {
                Domain::Interval { a, b } => 0.01 * (b - a),
                _ => {
                    let (lo, hi) = domain.bounding_box();
                    0.02 * (hi.x - lo.x).max(hi.y - lo.y)
                }
            };
            let h = s.f64("lattice_h")?.unwrap_or(default_h);
            let lattice = InfinityProblem::new(domain.clone(), pole, h)?;
            let field = solve_infinity_harmonic(&lattice, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
            artifacts.add_text("lattice_field.csv", lattice_csv(&lattice, &field.values));
            reports.push(check_cone_comparison(&field, &lattice));

            let owned;
            let pairs: Vec<(&PoleProblem, &SolveResult)> = match (&compared, &family) {
                (Some((pb, r)), _) => vec![(pb, r)],
                (None, Some(solves)) => solves.iter().map(|x| (&x.problem, &x.result)).collect(),
                (None, None) => {
                    let opts = SampleOptions {
                        source: SampleSource::Numeric,
                        solver: s.solver()?,
                        keep_solves: true,
                    };
                    let sample = sample_sp(&domain, &[pole], &p_list, &params, &opts)?;
                    owned = sample
                        .entries
                        .iter()
                        .map(|row| {
                            row[0].solve.clone().ok_or_else(|| {
                                CliError::Failure(format!(
                                    "u_p solve failed: {}",
                                    row[0].error.as_deref().unwrap_or("unknown")
                                ))
                            })
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    owned.iter().map(|x| (&x.problem, &x.result)).collect()
                }
            };
            reports.push(check_up_convergence(&pairs, &field, &lattice)?);
            let free = lattice
                .nodes()
                .iter()
                .filter(|n| n.kind == NodeKind::Free)
                .count();
            println!(
                "lattice h={h} nodes={} free={free} iterations={} final_update={:e}",
                lattice.nodes().len(),
                field.iterations,
                field.final_update
            );
        }
    }

    let exit = if reports.iter().all(|r| r.pass) { 0 } else { 1 };
    for r in &reports {
        println!(
            "{} {} worst={:.3e} comparisons={}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.worst_violation,
            r.comparisons
        );
    }
    artifacts.add_json(
        "verify_report.json",
        &VerifyReport {
            suite,
            exit_code: exit,
            tolerances: &tols,
            reports: &reports,
        },
    );
    Ok(Outcome { artifacts, exit })
}

pub fn oracle(s: &Settings) -> Result<Outcome, CliError> {
    let case = s.raw("case").ok_or_else(|| config("missing --case"))?;
    let p = s.single_p()?;
    let mut text = String::new();
    match case {
        "interval" => {
            let a = s.f64("a")?.unwrap_or(0.0);
            let b = s.f64("b")?.unwrap_or(1.0);
            let x = s.f64("x")?.unwrap_or(0.5 * (a + b));
            let sp = sp_interval(a, b, x, p)?;
            let d = (x - a).min(b - x);
            let _ = writeln!(text, "case=interval a={a} b={b} x={x} p={p}");
            let _ = writeln!(text, "s_p={sp}");
            let _ = writeln!(text, "mu_p={}", sp.powf(-p));
            let _ = writeln!(text, "d_omega={d}");
            let _ = writeln!(text, "lower_bound={}", pointwise_lower_bound(p, d, b - a)?);
            let _ = writeln!(text, "upper_bound={}", pointwise_upper_bound(p, 1, d)?);
            let _ = writeln!(text, "morrey_constant={}", morrey_constant(p, 1)?);
            let _ = writeln!(text, "y,u_p");
            for k in 0..=10 {
                let y = a + (b - a) * k as f64 / 10.0;
                let _ = writeln!(text, "{y},{}", up_interval(a, b, x, p, y)?);
            }
        }
        "ball" => {
            let n = s.usize("N")?.unwrap_or(2);
            let r = s.f64("R")?.unwrap_or(1.0);
            let sp = sp_ball_center(n, r, p)?;
            let vol = unit_ball_volume(n)? * r.powi(n as i32);
            let _ = writeln!(text, "case=ball N={n} R={r} p={p}");
            let _ = writeln!(text, "s_p={sp}");
            let _ = writeln!(text, "mu_p={}", sp.powf(-p));
            let _ = writeln!(text, "d_omega={r}");
            let _ = writeln!(text, "lower_bound={}", pointwise_lower_bound(p, r, vol)?);
            let _ = writeln!(text, "upper_bound={}", pointwise_upper_bound(p, n, r)?);
            let _ = writeln!(text, "morrey_constant={}", morrey_constant(p, n)?);
            let _ = writeln!(text, "r,u_p");
            for k in 0..=10 {
                let rad = r * k as f64 / 10.0;
                let _ = writeln!(text, "{rad},{}", up_ball_center(n, r, p, rad)?);
            }
        }
        other => {
            return Err(config(format!(
                "unknown oracle case `{other}`; expected interval or ball"
            )))
        }
    }
    print!("{text}");
    let mut artifacts = Artifacts::default();
    artifacts.add_text("oracle.txt", text);
    Ok(Outcome { artifacts, exit: 0 })
}

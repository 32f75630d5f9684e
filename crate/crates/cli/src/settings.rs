//! Run settings: a flat TOML file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pcap_core::mesh::default_levels;
use pcap_core::properties::{SampleSource, Tolerances};
use pcap_core::{Domain, MeshParams, Point, SolverOptions};

use crate::error::CliError;

/// Keys accepted in config files; flags use the same names with dashes.
pub const KNOWN_KEYS: &[&str] = &[
    "domain",
    "p",
    "p_list",
    "pole",
    "poles",
    "h",
    "grading",
    "levels",
    "n",
    "source",
    "suite",
    "trials",
    "lattice_h",
    "compare_with",
    "eps_start",
    "eps_end",
    "eps_factor",
    "max_iters",
    "rel_energy_tol",
    "grad_tol",
    "step_tol",
    "out",
    "seed",
    "threads",
    "emit_plot",
    "dump_mesh",
    "case",
    "a",
    "b",
    "x",
    "N",
    "R",
];

const TOLERANCE_PREFIX: &str = "tol_";

/// Merged key/value settings, echoed verbatim into the manifest.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn toml_to_string(key: &str, v: &toml::Value) -> Result<String, CliError> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items
            .iter()
            .map(|item| toml_to_string(key, item))
            .collect::<Result<Vec<_>, _>>()?
            .join(","),
        _ => {
            return Err(config_err(format!(
                "config key `{key}` must be a scalar or a list"
            )))
        }
    })
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| config_err(format!("config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (key, v) in &table {
            if !KNOWN_KEYS.contains(&key.as_str()) && !key.starts_with(TOLERANCE_PREFIX) {
                return Err(config_err(format!("unknown config key `{key}`")));
            }
            values.insert(key.clone(), toml_to_string(key, v)?);
        }
        Ok(Settings { values })
    }

    /// Flags win over file values.
    pub fn set(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), v);
        }
    }

    pub fn set_flag(&mut self, key: &str, on: bool) {
        if on {
            self.values.insert(key.to_string(), "true".into());
        }
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| config_err(format!("cannot parse `{key}` value `{s}`"))),
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.parse(key)
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        self.parse(key)
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        self.parse(key)
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        Ok(self.parse::<bool>(key)?.unwrap_or(false))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        Ok(self.u64("seed")?.unwrap_or(0))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.raw("out")
            .map(PathBuf::from)
            .or_else(|| std::env::var_os("PCAP_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("pcap-out"))
    }

    pub fn domain(&self) -> Result<Domain, CliError> {
        let s = self
            .raw("domain")
            .ok_or_else(|| config_err("missing --domain"))?;
        s.parse::<Domain>().map_err(CliError::from)
    }

    pub fn domain_or(&self, fallback: Domain) -> Result<Domain, CliError> {
        if self.has("domain") {
            self.domain()
        } else {
            Ok(fallback)
        }
    }

    /// Comma-separated exponents, strictly increasing.
    pub fn p_values(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(s) = self.raw(key) else {
            return Ok(None);
        };
        let ps = parse_numbers(s)
            .map_err(|_| config_err(format!("cannot parse `{key}` value `{s}`")))?;
        if ps.is_empty() {
            return Err(config_err(format!("`{key}` is empty")));
        }
        if ps.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(config_err(format!("`{key}` must be strictly increasing")));
        }
        Ok(Some(ps))
    }

    pub fn single_p(&self) -> Result<f64, CliError> {
        let ps = self
            .p_values("p")?
            .ok_or_else(|| config_err("missing --p"))?;
        if ps.len() != 1 {
            return Err(config_err("expected a single exponent in --p"));
        }
        Ok(ps[0])
    }

    pub fn pole(&self, domain: &Domain) -> Result<Option<Point>, CliError> {
        match self.raw("pole") {
            None => Ok(None),
            Some(s) => parse_point(s, domain.dimension()).map(Some),
        }
    }

    /// The configured pole, or the centroid of the domain.
    pub fn pole_or_centroid(&self, domain: &Domain) -> Result<Point, CliError> {
        Ok(self.pole(domain)?.unwrap_or_else(|| domain.centroid()))
    }

    pub fn mesh_params(&self, domain: &Domain) -> Result<MeshParams, CliError> {
        let mut m = MeshParams::default();
        if let Some(h) = self.f64("h")? {
            m.h = h;
        }
        if let Some(g) = self.f64("grading")? {
            if !(g >= 1.0) {
                return Err(config_err(format!("grading must be at least 1, got {g}")));
            }
            m.grading = g;
            m.levels = if g > 1.0 { default_levels(g) } else { 0 };
        }
        if let Some(l) = self.parse::<u32>("levels")? {
            m.levels = l;
        }
        if let Some(n) = self.usize("n")? {
            m.n = n;
        }
        if !(m.h > 0.0) || !m.h.is_finite() {
            return Err(config_err(format!("h must be positive, got {}", m.h)));
        }
        if domain.dimension() == 1 && m.n < 2 {
            return Err(config_err(format!("n must be at least 2, got {}", m.n)));
        }
        Ok(m)
    }

    /// Characteristic mesh size: `h` in the plane, `(b - a) / n` on an interval.
    pub fn mesh_size(&self, domain: &Domain, params: &MeshParams) -> f64 {
        match domain {
            Domain::Interval { a, b } => (b - a) / params.n as f64,
            _ => params.h,
        }
    }

    pub fn solver(&self) -> Result<SolverOptions, CliError> {
        let mut o = SolverOptions::default();
        if let Some(v) = self.f64("eps_start")? {
            o.eps_start = v;
        }
        if let Some(v) = self.f64("eps_end")? {
            o.eps_end = v;
        }
        if let Some(v) = self.f64("eps_factor")? {
            o.eps_factor = v;
        }
        if let Some(v) = self.usize("max_iters")? {
            o.max_iters = v;
        }
        if let Some(v) = self.f64("rel_energy_tol")? {
            o.rel_energy_tol = v;
        }
        if let Some(v) = self.f64("grad_tol")? {
            o.grad_tol = v;
        }
        if let Some(v) = self.f64("step_tol")? {
            o.step_tol = v;
        }
        Ok(o)
    }

    pub fn source(&self) -> Result<SampleSource, CliError> {
        match self.raw("source") {
            None => Ok(SampleSource::Auto),
            Some(s) => s.parse().map_err(CliError::from),
        }
    }

    /// Defaults with `tol_<name>` overrides applied.
    pub fn tolerances(&self) -> Result<Tolerances, CliError> {
        let defaults = serde_json::to_value(Tolerances::default()).expect("tolerances serialize");
        let mut map = defaults
            .as_object()
            .cloned()
            .expect("tolerances are an object");
        for (key, raw) in &self.values {
            let Some(name) = key.strip_prefix(TOLERANCE_PREFIX) else {
                continue;
            };
            if !map.contains_key(name) {
                return Err(config_err(format!("unknown tolerance `{name}`")));
            }
            let v: f64 = raw.trim().parse().map_err(|_| {
                config_err(format!("cannot parse tolerance `{name}` value `{raw}`"))
            })?;
            if !(v >= 0.0) || !v.is_finite() {
                return Err(config_err(format!(
                    "tolerance `{name}` must be nonnegative"
                )));
            }
            map.insert(name.to_string(), serde_json::json!(v));
        }
        serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| config_err(format!("tolerances: {e}")))
    }
}

pub fn parse_numbers(s: &str) -> Result<Vec<f64>, std::num::ParseFloatError> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>())
        .collect()
}

pub fn parse_point(s: &str, dim: usize) -> Result<Point, CliError> {
    let v = parse_numbers(s).map_err(|_| config_err(format!("cannot parse point `{s}`")))?;
    match (dim, v.as_slice()) {
        (1, [x]) => Ok(Point::on_line(*x)),
        (2, [x, y]) => Ok(Point::new(*x, *y)),
        _ => Err(config_err(format!("point `{s}` needs {dim} coordinate(s)"))),
    }
}

/// `grid:nx[,ny][,margin]` (planar) or `grid:nx[,margin]` (interval), or
/// explicit points separated by `;`.
pub fn parse_poles(
    spec: &str,
    domain: &Domain,
    default_margin: f64,
) -> Result<Vec<Point>, CliError> {
    let dim = domain.dimension();
    let Some(rest) = spec.strip_prefix("grid:") else {
        return spec
            .split(';')
            .filter(|t| !t.trim().is_empty())
            .map(|t| parse_point(t, dim))
            .collect();
    };
    let fields: Vec<&str> = rest.split(',').map(|t| t.trim()).collect();
    let count = |t: &str| -> Result<usize, CliError> {
        match t.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(config_err(format!(
                "grid count `{t}` must be a positive integer"
            ))),
        }
    };
    let margin = |t: &str| -> Result<f64, CliError> {
        match t.parse::<f64>() {
            Ok(m) if m >= 0.0 && m.is_finite() => Ok(m),
            _ => Err(config_err(format!("grid margin `{t}` must be nonnegative"))),
        }
    };
    let (nx, ny, margin) = match (dim, fields.as_slice()) {
        (1, [nx]) => (count(nx)?, 1, default_margin),
        (1, [nx, m]) => (count(nx)?, 1, margin(m)?),
        (2, [nx]) => (count(nx)?, count(nx)?, default_margin),
        (2, [nx, ny]) => (count(nx)?, count(ny)?, default_margin),
        (2, [nx, ny, m]) => (count(nx)?, count(ny)?, margin(m)?),
        _ => return Err(config_err(format!("cannot parse pole grid `{spec}`"))),
    };
    let (lo, hi) = domain.bounding_box();
    let mut poles = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = lo.x + (hi.x - lo.x) * (i + 1) as f64 / (nx + 1) as f64;
            let p = if dim == 1 {
                Point::on_line(x)
            } else {
                Point::new(x, lo.y + (hi.y - lo.y) * (j + 1) as f64 / (ny + 1) as f64)
            };
            if domain.contains(&p) && domain.distance_to_boundary(&p) >= margin {
                poles.push(p);
            }
        }
    }
    if poles.is_empty() {
        return Err(config_err(format!(
            "pole grid `{spec}` is empty after a boundary clearance of {margin}"
        )));
    }
    Ok(poles)
}

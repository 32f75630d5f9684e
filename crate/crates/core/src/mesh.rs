//! Piecewise-linear simplicial meshes with the pole as an exact vertex.
//!
//! One-dimensional meshes are graded geometrically toward the pole on each
//! side. Planar meshes combine a pole-centred rosette of `levels` rings (edge
//! length growing by `grading` per ring), a square lattice of spacing `h`
//! anchored at the pole, and boundary samples following the same size field.
//! The point set is triangulated with a constrained Delaunay triangulation so
//! polygon edges are respected; disks are approximated by an inscribed
//! polygon whose edges are no longer than `h`.

use std::io::{self, Write};

use spade::{ConstrainedDelaunayTriangulation, HasPosition, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::geometry::{winding_contains, Domain, Point};

/// Hard ceiling on vertex count for generated meshes.
pub const MAX_VERTICES: usize = 4_000_000;

/// Points per ring relative to an isotropic ring; the pole fan is otherwise too stiff.
const RING_TANGENTIAL_REFINEMENT: f64 = 2.0;

/// One value per mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        ScalarField(values)
    }

    pub fn zeros(n: usize) -> Self {
        ScalarField(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, t: f64) -> ScalarField {
        ScalarField(self.0.iter().map(|v| v * t).collect())
    }

    /// `self + t * other`
    pub fn axpy(&self, t: f64, other: &ScalarField) -> ScalarField {
        ScalarField(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + t * b)
                .collect(),
        )
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for ScalarField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// A conforming simplicial mesh (segments in 1D, triangles in 2D).
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<Point>,
    /// Element connectivity; only the first `dim + 1` entries are used.
    elements: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    pole: usize,
    volumes: Vec<f64>,
    /// Gradients of the element's barycentric basis functions.
    basis_gradients: Vec<[[f64; 2]; 3]>,
    h_min: f64,
}

impl Mesh {
    /// Assembles a mesh from raw parts, computing volumes and gradient maps.
    pub fn from_parts(
        dim: usize,
        vertices: Vec<Point>,
        elements: Vec<[usize; 3]>,
        boundary: Vec<bool>,
        pole: usize,
    ) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Precondition(format!(
                "mesh dimension {dim} unsupported"
            )));
        }
        if boundary.len() != vertices.len() {
            return Err(Error::Precondition("boundary mask length mismatch".into()));
        }
        if pole >= vertices.len() || boundary[pole] {
            return Err(Error::PolePlacement(
                "pole must be an interior vertex".into(),
            ));
        }
        let mut volumes = Vec::with_capacity(elements.len());
        let mut basis_gradients = Vec::with_capacity(elements.len());
        let mut h_min = f64::INFINITY;
        for (e, el) in elements.iter().enumerate() {
            if el[..=dim].iter().any(|&i| i >= vertices.len()) {
                return Err(Error::Precondition(format!(
                    "element {e} has a bad vertex index"
                )));
            }
            let (vol, grads) = if dim == 1 {
                let (x0, x1) = (vertices[el[0]].x, vertices[el[1]].x);
                let len = x1 - x0;
                if len <= 0.0 {
                    return Err(Error::Numeric(format!(
                        "segment {e} is degenerate or inverted"
                    )));
                }
                h_min = h_min.min(len);
                (len, [[-1.0 / len, 0.0], [1.0 / len, 0.0], [0.0, 0.0]])
            } else {
                let (p0, p1, p2) = (vertices[el[0]], vertices[el[1]], vertices[el[2]]);
                let twice = p1.sub(&p0).cross(&p2.sub(&p0));
                if twice <= 0.0 {
                    return Err(Error::Numeric(format!(
                        "triangle {e} is degenerate or inverted"
                    )));
                }
                h_min = h_min.min(p0.dist(&p1)).min(p1.dist(&p2)).min(p2.dist(&p0));
                let inv = 1.0 / twice;
                (
                    0.5 * twice,
                    [
                        [(p1.y - p2.y) * inv, (p2.x - p1.x) * inv],
                        [(p2.y - p0.y) * inv, (p0.x - p2.x) * inv],
                        [(p0.y - p1.y) * inv, (p1.x - p0.x) * inv],
                    ],
                )
            };
            volumes.push(vol);
            basis_gradients.push(grads);
        }
        Ok(Mesh {
            dim,
            vertices,
            elements,
            boundary,
            pole,
            volumes,
            basis_gradients,
            h_min,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes_per_element(&self) -> usize {
        self.dim + 1
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Point {
        self.vertices[i]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e][..=self.dim]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn pole_index(&self) -> usize {
        self.pole
    }

    pub fn pole(&self) -> Point {
        self.vertices[self.pole]
    }

    pub fn element_volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn total_volume(&self) -> f64 {
        pairwise_sum(&self.volumes)
    }

    /// Shortest edge in the mesh.
    pub fn min_edge(&self) -> f64 {
        self.h_min
    }

    /// Gradients of the basis functions of element `e`, one per local node.
    pub fn basis_gradients(&self, e: usize) -> &[[f64; 2]] {
        &self.basis_gradients[e][..=self.dim]
    }

    /// Constant gradient of the piecewise-linear interpolant of `field` on element `e`.
    pub fn element_gradient(&self, field: &ScalarField, e: usize) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (&node, grad) in self.element(e).iter().zip(self.basis_gradients(e)) {
            let v = field[node];
            g[0] += v * grad[0];
            g[1] += v * grad[1];
        }
        g
    }

    /// Shortest edge among those incident to vertex `v`.
    pub fn min_incident_edge(&self, v: usize) -> f64 {
        let mut best = f64::INFINITY;
        for e in 0..self.num_elements() {
            let el = self.element(e);
            if el.contains(&v) {
                for &w in el {
                    if w != v {
                        best = best.min(self.vertices[v].dist(&self.vertices[w]));
                    }
                }
            }
        }
        best
    }

    /// Plain-text dump: `v x y`, `e i j [k]`, `pole i`, `bnd i` lines.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {:.16e} {:.16e}", v.x, v.y)?;
        }
        for e in 0..self.num_elements() {
            let el = self.element(e);
            write!(w, "e")?;
            for i in el {
                write!(w, " {i}")?;
            }
            writeln!(w)?;
        }
        writeln!(w, "pole {}", self.pole)?;
        for (i, &b) in self.boundary.iter().enumerate() {
            if b {
                writeln!(w, "bnd {i}")?;
            }
        }
        Ok(())
    }
}

/// Fixed-order pairwise summation.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        values.iter().sum()
    } else {
        let (lo, hi) = values.split_at(values.len() / 2);
        pairwise_sum(lo) + pairwise_sum(hi)
    }
}

/// Sizes of a graded one-dimensional layout: `count` cells filling `length`,
/// shrinking by `grading` toward the pole. Returned pole-outward.
fn graded_cells(length: f64, count: usize, grading: f64) -> Vec<f64> {
    let weights: Vec<f64> = (0..count).map(|k| grading.powi(k as i32)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| length * w / total).collect()
}

/// Meshes `(a, b)` with `n` segments, the pole being an exact vertex.
pub fn build_interval_mesh(domain: &Domain, pole: f64, n: usize, grading: f64) -> Result<Mesh> {
    let Domain::Interval { a, b } = *domain else {
        return Err(Error::Precondition(
            "interval mesh needs an interval domain".into(),
        ));
    };
    if !(pole > a && pole < b) || !domain.contains(&Point::on_line(pole)) {
        return Err(Error::PolePlacement(format!(
            "pole {pole} is not strictly inside ({a}, {b})"
        )));
    }
    if n < 2 {
        return Err(Error::Precondition("interval mesh needs n >= 2".into()));
    }
    if !(grading >= 1.0) || !grading.is_finite() {
        return Err(Error::Precondition("grading must be >= 1".into()));
    }
    let left_len = pole - a;
    let right_len = b - pole;
    let n_left = ((n as f64 * left_len / (b - a)).round() as usize).clamp(1, n - 1);
    let n_right = n - n_left;

    let mut xs = Vec::with_capacity(n + 1);
    let left = graded_cells(left_len, n_left, grading);
    // Walk from `a` toward the pole: largest cells first.
    let mut x = a;
    xs.push(a);
    for (k, w) in left.iter().rev().enumerate() {
        x += w;
        xs.push(if k + 1 == n_left { pole } else { x });
    }
    let right = graded_cells(right_len, n_right, grading);
    let mut x = pole;
    for (k, w) in right.iter().enumerate() {
        x += w;
        xs.push(if k + 1 == n_right { b } else { x });
    }
    let pole_index = n_left;
    let vertices: Vec<Point> = xs.iter().map(|&x| Point::on_line(x)).collect();
    let nv = vertices.len();
    let elements = (0..nv - 1).map(|i| [i, i + 1, usize::MAX]).collect();
    let mut boundary = vec![false; nv];
    boundary[0] = true;
    boundary[nv - 1] = true;
    Mesh::from_parts(1, vertices, elements, boundary, pole_index)
}

/// Default number of grading rings: `ceil(log(h / h_min) / log(grading))`
/// with `h_min = h / 16`.
pub fn default_levels(grading: f64) -> u32 {
    if grading <= 1.0 {
        return 0;
    }
    (16f64.ln() / grading.ln()).ceil() as u32
}

/// Discretization parameters shared by the 1D and 2D mesh builders.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeshParams {
    /// Target edge length away from the pole (2D).
    pub h: f64,
    /// Edge-length ratio between consecutive rings (2D) or cells (1D).
    pub grading: f64,
    /// Number of refinement rings around the pole (2D).
    pub levels: u32,
    /// Segment count (1D).
    pub n: usize,
}

impl Default for MeshParams {
    fn default() -> Self {
        MeshParams {
            h: 0.05,
            grading: 1.5,
            levels: default_levels(1.5),
            n: 64,
        }
    }
}

impl MeshParams {
    pub fn planar(h: f64, grading: f64, levels: u32) -> Self {
        MeshParams {
            h,
            grading,
            levels,
            ..Default::default()
        }
    }

    pub fn interval(n: usize, grading: f64) -> Self {
        MeshParams {
            n,
            grading,
            ..Default::default()
        }
    }

    /// Smallest element size next to the pole.
    pub fn h_min(&self) -> f64 {
        self.h * self.grading.powi(-(self.levels as i32))
    }

    /// Builds the mesh appropriate for the domain's dimension.
    pub fn build(&self, domain: &Domain, pole: Point) -> Result<Mesh> {
        match domain {
            Domain::Interval { .. } => build_interval_mesh(domain, pole.x, self.n, self.grading),
            _ => build_planar_mesh(domain, pole, self.h, self.grading, self.levels),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Pole,
    Interior,
    Boundary,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    pos: Point2<f64>,
    tag: Tag,
}

impl HasPosition for Sample {
    type Scalar = f64;
    fn position(&self) -> Point2<f64> {
        self.pos
    }
}

struct SizeField {
    pole: Point,
    h: f64,
    h_min: f64,
    grading: f64,
    graded: bool,
}

impl SizeField {
    fn at(&self, y: &Point) -> f64 {
        if !self.graded {
            return self.h;
        }
        (self.h_min + (self.grading - 1.0) * y.dist(&self.pole)).min(self.h)
    }
}

/// Samples a closed boundary curve given by its arc-length parametrization.
fn march_curve(length: f64, size: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut s = vec![0.0];
    let mut cur = 0.0;
    loop {
        let step = size(cur).max(length * 1e-9);
        cur += step;
        s.push(cur);
        if cur >= length {
            break;
        }
    }
    // Stretch so the last step lands exactly on `length`; when the overshoot is
    // large, drop the last sample and stretch the rest instead.
    let m = s.len() - 1;
    let overshoot = s[m] - length;
    let last_step = s[m] - s[m - 1];
    let end = if m > 1 && overshoot > 0.5 * last_step {
        s[m - 1]
    } else {
        s[m]
    };
    let keep = if end == s[m] { m } else { m - 1 };
    s.truncate(keep + 1);
    let scale = length / end;
    s.iter_mut().for_each(|v| *v *= scale);
    s.pop();
    s
}

/// Conforming triangulation of a polygon or disk with the pole as a vertex.
pub fn build_planar_mesh(
    domain: &Domain,
    pole: Point,
    h: f64,
    grading: f64,
    levels: u32,
) -> Result<Mesh> {
    if domain.dimension() != 2 {
        return Err(Error::Precondition(
            "planar mesh needs a polygon or disk".into(),
        ));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Precondition(format!(
            "target edge length must be positive, got {h}"
        )));
    }
    if !(grading >= 1.0) || !grading.is_finite() {
        return Err(Error::Precondition("grading must be >= 1".into()));
    }
    let h_min = h * grading.powi(-(levels as i32));
    let clearance = domain.distance_to_boundary(&pole);
    if !domain.contains(&pole) || clearance <= 2.0 * h_min {
        return Err(Error::PolePlacement(format!(
            "pole ({}, {}) needs boundary clearance > 2 h_min = {:.3e}, has {:.3e}",
            pole.x,
            pole.y,
            2.0 * h_min,
            clearance
        )));
    }
    let estimate = 1.3 * domain.measure() / (h * h) + 24.0 * levels as f64;
    if estimate > MAX_VERTICES as f64 {
        return Err(Error::Budget(format!(
            "h = {h} would need about {estimate:.0} vertices (limit {MAX_VERTICES})"
        )));
    }
    let size = SizeField {
        pole,
        h,
        h_min,
        grading,
        graded: levels > 0,
    };

    let mut samples = vec![Sample {
        pos: Point2::new(pole.x, pole.y),
        tag: Tag::Pole,
    }];
    let push = |p: Point, tag: Tag, samples: &mut Vec<Sample>| {
        samples.push(Sample {
            pos: Point2::new(p.x, p.y),
            tag,
        })
    };

    // Rosette rings: ring k carries radial size h_min * grading^k.
    let mut ring_radius = 0.0;
    let mut ring_size = h_min;
    for k in 0..levels {
        ring_radius += ring_size;
        let count = ((RING_TANGENTIAL_REFINEMENT * 2.0 * std::f64::consts::PI * ring_radius
            / ring_size)
            .round() as usize)
            .max(6);
        let offset = if k % 2 == 1 { 0.5 } else { 0.0 };
        for j in 0..count {
            let theta = 2.0 * std::f64::consts::PI * (j as f64 + offset) / count as f64;
            let p = Point::new(
                pole.x + ring_radius * theta.cos(),
                pole.y + ring_radius * theta.sin(),
            );
            if domain.distance_to_boundary(&p) >= 0.5 * ring_size {
                push(p, Tag::Interior, &mut samples);
            }
        }
        ring_size *= grading;
    }

    // Lattice anchored at the pole.
    let cutoff = if levels > 0 {
        ring_radius + 0.8 * h
    } else {
        0.5 * h
    };
    let (lo, hi) = domain.bounding_box();
    let i0 = ((lo.x - pole.x) / h).floor() as i64;
    let i1 = ((hi.x - pole.x) / h).ceil() as i64;
    let j0 = ((lo.y - pole.y) / h).floor() as i64;
    let j1 = ((hi.y - pole.y) / h).ceil() as i64;
    for j in j0..=j1 {
        for i in i0..=i1 {
            let p = Point::new(pole.x + i as f64 * h, pole.y + j as f64 * h);
            if p.dist(&pole) < cutoff {
                continue;
            }
            if domain.distance_to_boundary(&p) >= 0.5 * size.at(&p) {
                push(p, Tag::Interior, &mut samples);
            }
        }
    }

    // Boundary loop.
    let first_boundary = samples.len();
    match domain {
        Domain::Polygon { vertices } => {
            let n = vertices.len();
            for i in 0..n {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                let len = a.dist(&b);
                let dir = b.sub(&a).scale(1.0 / len);
                for s in march_curve(len, |s| size.at(&a.add(&dir.scale(s)))) {
                    push(a.add(&dir.scale(s)), Tag::Boundary, &mut samples);
                }
            }
        }
        Domain::Disk { center, radius } => {
            let circumference = 2.0 * std::f64::consts::PI * radius;
            let at = |s: f64| {
                let t = s / radius;
                Point::new(center.x + radius * t.cos(), center.y + radius * t.sin())
            };
            for s in march_curve(circumference, |s| size.at(&at(s))) {
                push(at(s), Tag::Boundary, &mut samples);
            }
        }
        Domain::Interval { .. } => unreachable!(),
    }
    let n_boundary = samples.len() - first_boundary;
    if samples.len() > MAX_VERTICES {
        return Err(Error::Budget(format!(
            "{} vertices exceed the limit",
            samples.len()
        )));
    }
    let edges: Vec<[usize; 2]> = (0..n_boundary)
        .map(|k| [first_boundary + k, first_boundary + (k + 1) % n_boundary])
        .collect();

    let cdt = ConstrainedDelaunayTriangulation::<Sample>::bulk_load_cdt(samples, edges)
        .map_err(|e| Error::Numeric(format!("triangulation failed: {e:?}")))?;

    let mut vertices = Vec::with_capacity(cdt.num_vertices());
    let mut boundary = Vec::with_capacity(cdt.num_vertices());
    let mut pole_index = None;
    for v in cdt.vertices() {
        let d = v.data();
        if d.tag == Tag::Pole {
            pole_index = Some(vertices.len());
        }
        vertices.push(Point::new(d.pos.x, d.pos.y));
        boundary.push(d.tag == Tag::Boundary);
    }
    let pole_index =
        pole_index.ok_or_else(|| Error::Numeric("pole vertex lost in triangulation".into()))?;

    let polygon = match domain {
        Domain::Polygon { vertices } => Some(vertices.as_slice()),
        _ => None,
    };
    let mut elements = Vec::with_capacity(cdt.num_inner_faces());
    for face in cdt.inner_faces() {
        let [a, b, c] = face.vertices().map(|v| v.fix().index());
        let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
        if let Some(poly) = polygon {
            let centroid = Point::new((pa.x + pb.x + pc.x) / 3.0, (pa.y + pb.y + pc.y) / 3.0);
            if !winding_contains(poly, &centroid) {
                continue;
            }
        }
        let orient = pb.sub(&pa).cross(&pc.sub(&pa));
        elements.push(if orient > 0.0 { [a, b, c] } else { [a, c, b] });
    }
    compact(vertices, elements, boundary, pole_index)
}

/// Drops vertices not referenced by any element.
fn compact(
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    pole: usize,
) -> Result<Mesh> {
    let mut used = vec![false; vertices.len()];
    for el in &elements {
        for &i in el {
            used[i] = true;
        }
    }
    if !used[pole] {
        return Err(Error::Numeric(
            "pole vertex is not part of any triangle".into(),
        ));
    }
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut new_vertices = Vec::new();
    let mut new_boundary = Vec::new();
    for (i, v) in vertices.iter().enumerate() {
        if used[i] {
            remap[i] = new_vertices.len();
            new_vertices.push(*v);
            new_boundary.push(boundary[i]);
        }
    }
    let new_elements = elements
        .iter()
        .map(|el| [remap[el[0]], remap[el[1]], remap[el[2]]])
        .collect();
    Mesh::from_parts(2, new_vertices, new_elements, new_boundary, remap[pole])
}

/// Point location on a mesh through a uniform bucket grid.
pub struct MeshLocator<'a> {
    mesh: &'a Mesh,
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> MeshLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in mesh.vertices() {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        let extent = (hi.x - lo.x).max(hi.y - lo.y).max(1e-300);
        let target = (mesh.num_elements() as f64).sqrt().max(1.0);
        let cell = extent / target;
        let nx = (((hi.x - lo.x) / cell).floor() as usize + 1).max(1);
        let ny = (((hi.y - lo.y) / cell).floor() as usize + 1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for e in 0..mesh.num_elements() {
            let (mut bx0, mut by0, mut bx1, mut by1) = (usize::MAX, usize::MAX, 0, 0);
            for &i in mesh.element(e) {
                let v = mesh.vertex(i);
                let cx = (((v.x - lo.x) / cell).floor() as usize).min(nx - 1);
                let cy = (((v.y - lo.y) / cell).floor() as usize).min(ny - 1);
                bx0 = bx0.min(cx);
                by0 = by0.min(cy);
                bx1 = bx1.max(cx);
                by1 = by1.max(cy);
            }
            for cy in by0..=by1 {
                for cx in bx0..=bx1 {
                    buckets[cy * nx + cx].push(e);
                }
            }
        }
        MeshLocator {
            mesh,
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn barycentric(&self, e: usize, p: &Point) -> [f64; 3] {
        let el = self.mesh.element(e);
        if self.mesh.dim() == 1 {
            let (x0, x1) = (self.mesh.vertex(el[0]).x, self.mesh.vertex(el[1]).x);
            let t = (p.x - x0) / (x1 - x0);
            return [1.0 - t, t, 0.0];
        }
        let (a, b, c) = (
            self.mesh.vertex(el[0]),
            self.mesh.vertex(el[1]),
            self.mesh.vertex(el[2]),
        );
        let det = b.sub(&a).cross(&c.sub(&a));
        let l1 = p.sub(&a).cross(&c.sub(&a)) / det;
        let l2 = b.sub(&a).cross(&p.sub(&a)) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Element containing `p` (up to round-off) and its barycentric coordinates.
    pub fn locate(&self, p: &Point) -> Option<(usize, [f64; 3])> {
        let fx = ((p.x - self.origin.x) / self.cell).floor();
        let fy = ((p.y - self.origin.y) / self.cell).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return None;
        }
        let bucket = &self.buckets[fy as usize * self.nx + fx as usize];
        let npe = self.mesh.nodes_per_element();
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &e in bucket {
            let bary = self.barycentric(e, p);
            let worst = bary[..npe].iter().cloned().fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((e, bary, worst));
            }
        }
        best.filter(|b| b.2 >= -1e-10).map(|b| (b.0, b.1))
    }

    /// Piecewise-linear interpolation of `field` at `p`.
    pub fn interpolate(&self, field: &ScalarField, p: &Point) -> Option<f64> {
        self.locate(p).map(|(e, bary)| {
            self.mesh
                .element(e)
                .iter()
                .zip(bary.iter())
                .map(|(&i, w)| w * field[i])
                .sum()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit() -> Domain {
        Domain::interval(0.0, 1.0).unwrap()
    }

    fn edges_conforming(mesh: &Mesh) -> bool {
        use std::collections::HashMap;
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for e in 0..mesh.num_elements() {
            let el = mesh.element(e);
            for k in 0..3 {
                let (a, b) = (el[k], el[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        // Interior edges are shared by two triangles, boundary edges by one.
        count
            .iter()
            .all(|(&(a, b), &c)| c == 2 || (c == 1 && mesh.is_boundary(a) && mesh.is_boundary(b)))
    }

    #[test]
    fn uniform_interval_through_midpoint() {
        let m = build_interval_mesh(&unit(), 0.5, 4, 1.0).unwrap();
        let xs: Vec<f64> = m.vertices().iter().map(|v| v.x).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(m.pole_index(), 2);
        assert!(m.is_boundary(0) && m.is_boundary(4));
    }

    #[test]
    fn off_center_pole_is_exact_vertex() {
        let m = build_interval_mesh(&unit(), 0.25, 4, 1.0).unwrap();
        assert_eq!(m.pole().x, 0.25);
        let m = build_interval_mesh(&unit(), 0.1, 64, 1.0).unwrap();
        assert_eq!(m.pole().x, 0.1);
        assert_eq!(m.num_elements(), 64);
    }

    #[test]
    fn graded_interval_is_finest_at_pole() {
        let m = build_interval_mesh(&unit(), 0.5, 8, 2.0).unwrap();
        let vols = m.element_volumes();
        let p = m.pole_index();
        let smallest = vols.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(vols[p - 1], smallest);
        assert_eq!(vols[p], smallest);
        assert_abs_diff_eq!(vols[p + 1] / vols[p], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.total_volume(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn interval_pole_outside_is_rejected() {
        assert!(matches!(
            build_interval_mesh(&unit(), 1.0, 4, 1.0),
            Err(Error::PolePlacement(_))
        ));
    }

    #[test]
    fn one_d_gradient_is_slope() {
        let vertices = vec![
            Point::on_line(0.0),
            Point::on_line(0.25),
            Point::on_line(0.5),
        ];
        let m = Mesh::from_parts(
            1,
            vertices,
            vec![[0, 1, usize::MAX], [1, 2, usize::MAX]],
            vec![true, false, true],
            1,
        )
        .unwrap();
        let f = ScalarField::new(vec![0.0, 0.4, 1.0]);
        assert_abs_diff_eq!(m.element_gradient(&f, 1)[0], 2.4, epsilon = 1e-14);
    }

    #[test]
    fn right_triangle_gradient() {
        let m = Mesh::from_parts(
            2,
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(0.0, 1.0),
            ],
            vec![[0, 1, 2]],
            vec![false, true, true],
            0,
        )
        .unwrap();
        let g = m.element_gradient(&ScalarField::new(vec![0.0, 1.0, 0.0]), 0);
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-15);
        let g = m.element_gradient(&ScalarField::new(vec![3.0, 3.0, 3.0]), 0);
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn inverted_triangle_is_rejected() {
        let r = Mesh::from_parts(
            2,
            vec![
                Point::new(0.0, 0.0),
                Point::new(0.0, 1.0),
                Point::new(1.0, 0.0),
            ],
            vec![[0, 1, 2]],
            vec![false, true, true],
            0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn square_mesh_is_conforming_and_exact_in_area() {
        let sq = Domain::unit_square();
        let m = build_planar_mesh(&sq, Point::new(0.5, 0.5), 0.1, 1.5, 0).unwrap();
        assert!(m.element_volumes().iter().all(|&v| v > 0.0));
        assert!(edges_conforming(&m));
        assert_abs_diff_eq!(m.total_volume(), 1.0, epsilon = 1e-10);
        assert_eq!(m.pole(), Point::new(0.5, 0.5));
    }

    #[test]
    fn graded_disk_has_small_edges_at_pole() {
        let d = Domain::unit_disk();
        let m = build_planar_mesh(&d, Point::new(0.0, 0.0), 0.05, 1.5, 3).unwrap();
        let h_min = 0.05 / 1.5f64.powi(3);
        let near = m.min_incident_edge(m.pole_index());
        assert!(
            (near / h_min - 1.0).abs() < 0.05,
            "edge at pole {near} vs {h_min}"
        );
        assert!(edges_conforming(&m));
        let area = m.total_volume();
        assert!(area < std::f64::consts::PI);
        assert!(std::f64::consts::PI - area < 0.05 * 0.05 * 2.0);
        for i in 0..m.num_vertices() {
            if m.is_boundary(i) {
                assert_abs_diff_eq!(m.vertex(i).norm(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn l_shape_mesh_respects_reflex_corner() {
        let l: Domain = "polygon:0,0;2,0;2,1;1,1;1,2;0,2".parse().unwrap();
        let m = build_planar_mesh(&l, Point::new(0.5, 0.5), 0.1, 1.5, 4).unwrap();
        assert_abs_diff_eq!(m.total_volume(), 3.0, epsilon = 1e-10);
        assert!(edges_conforming(&m));
    }

    #[test]
    fn off_lattice_pole_is_inserted_exactly() {
        let sq = Domain::unit_square();
        let pole = Point::new(0.3137, 0.7093);
        let m = build_planar_mesh(&sq, pole, 0.1, 1.5, 5).unwrap();
        assert_eq!(m.pole(), pole);
        assert_abs_diff_eq!(m.total_volume(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn pole_near_boundary_is_rejected() {
        let sq = Domain::unit_square();
        let r = build_planar_mesh(&sq, Point::new(0.999, 0.5), 0.1, 1.5, default_levels(1.5));
        assert!(matches!(r, Err(Error::PolePlacement(_))));
    }

    #[test]
    fn absurd_resolution_hits_budget() {
        let sq = Domain::unit_square();
        let r = build_planar_mesh(&sq, Point::new(0.5, 0.5), 1e-5, 1.5, 0);
        assert!(matches!(r, Err(Error::Budget(_))));
    }

    #[test]
    fn locator_interpolates_linear_fields_exactly() {
        let d = Domain::unit_disk();
        let m = build_planar_mesh(&d, Point::new(0.1, 0.2), 0.1, 1.5, 3).unwrap();
        let f = ScalarField::new(m.vertices().iter().map(|v| 2.0 * v.x - v.y + 0.5).collect());
        let loc = MeshLocator::new(&m);
        for p in [
            Point::new(0.0, 0.0),
            Point::new(0.5, -0.3),
            Point::new(-0.7, 0.1),
        ] {
            let v = loc.interpolate(&f, &p).unwrap();
            assert_abs_diff_eq!(v, 2.0 * p.x - p.y + 0.5, epsilon = 1e-12);
        }
        assert!(loc.interpolate(&f, &Point::new(2.0, 0.0)).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gradient_is_linear_and_exact_on_affine_fields(
            seed in proptest::collection::vec(-1.0f64..1.0, 2000),
            alpha in -3.0f64..3.0, beta in -3.0f64..3.0,
            cx in -2.0f64..2.0, cy in -2.0f64..2.0,
        ) {
            let sq = Domain::unit_square();
            let m = build_planar_mesh(&sq, Point::new(0.4, 0.55), 0.2, 1.5, 2).unwrap();
            let n = m.num_vertices();
            prop_assume!(n * 2 <= seed.len());
            let u = ScalarField::new(seed[..n].to_vec());
            let v = ScalarField::new(seed[n..2 * n].to_vec());
            let w = u.scaled(alpha).axpy(beta, &v);
            let lin = ScalarField::new(m.vertices().iter().map(|p| cx * p.x + cy * p.y).collect());
            for e in 0..m.num_elements() {
                let gu = m.element_gradient(&u, e);
                let gv = m.element_gradient(&v, e);
                let gw = m.element_gradient(&w, e);
                for k in 0..2 {
                    let expect = alpha * gu[k] + beta * gv[k];
                    prop_assert!((gw[k] - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
                }
                let gl = m.element_gradient(&lin, e);
                prop_assert!((gl[0] - cx).abs() < 1e-9 && (gl[1] - cy).abs() < 1e-9);
            }
        }
    }
}

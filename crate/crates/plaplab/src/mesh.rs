//! Simplicial meshes of intervals and axis-aligned polygons, with exact
//! distance-to-boundary and power weights `w = δ^t`.

use crate::error::{Error, Result};
use std::io::{BufRead, Write};
use std::sync::Arc;

/// Shared handle to an immutable mesh.
pub type MeshRef = Arc<Mesh>;

/// Relative tolerance used for geometric predicates (grid snapping, boundary
/// detection, volume bookkeeping).
const GEOM_EPS: f64 = 1e-12;

/// Floor applied to weight values at quadrature points; only reachable on
/// pathological meshes since barycenters are interior.
const W_FLOOR: f64 = 1e-14;

/// How a mesh was generated; kept so the mesh can be refined and so distances
/// to the boundary can be evaluated exactly at arbitrary points.
#[derive(Clone, Debug, PartialEq)]
pub enum DomainSpec {
    Interval { a: f64, b: f64, n_cells: usize },
    Polygon { vertices: Vec<[f64; 2]>, h: f64 },
}

/// A simplicial mesh of a bounded interval or axis-aligned polygon.
///
/// Nodes carry their exact distance `δ` to the boundary; simplices carry
/// precomputed volumes, barycenters and P1 basis gradients.
#[derive(Clone, Debug)]
pub struct Mesh {
    dimension: usize,
    coords: Vec<f64>,     // node coordinates, `dimension`-strided
    simplices: Vec<usize>, // node indices, `dimension + 1`-strided
    boundary: Vec<bool>,
    delta: Vec<f64>,
    volumes: Vec<f64>,
    grads: Vec<f64>,       // per simplex: (dim+1) basis gradients, dim-strided
    barycenters: Vec<f64>, // per simplex, dim-strided
    bary_delta: Vec<f64>,
    hat_mass: Vec<f64>, // lumped Lebesgue mass of each nodal hat function
    spec: Option<DomainSpec>,
}

impl Mesh {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_nodes(&self) -> usize {
        self.boundary.len()
    }

    pub fn n_simplices(&self) -> usize {
        self.volumes.len()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn simplex(&self, t: usize) -> &[usize] {
        let k = self.dimension + 1;
        &self.simplices[t * k..(t + 1) * k]
    }

    /// Gradient of the local basis function `local` on simplex `t`.
    pub fn basis_gradient(&self, t: usize, local: usize) -> &[f64] {
        let k = self.dimension + 1;
        let base = (t * k + local) * self.dimension;
        &self.grads[base..base + self.dimension]
    }

    pub fn volume(&self, t: usize) -> f64 {
        self.volumes[t]
    }

    pub fn barycenter(&self, t: usize) -> &[f64] {
        &self.barycenters[t * self.dimension..(t + 1) * self.dimension]
    }

    /// Distance from the simplex barycenter to the boundary.
    pub fn barycenter_delta(&self, t: usize) -> f64 {
        self.bary_delta[t]
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    /// Exact distance from node `i` to the boundary.
    pub fn delta(&self, i: usize) -> f64 {
        self.delta[i]
    }

    pub fn deltas(&self) -> &[f64] {
        &self.delta
    }

    /// Lumped Lebesgue mass `∫ φ_i dx` of the hat function at node `i`.
    pub fn hat_mass(&self, i: usize) -> f64 {
        self.hat_mass[i]
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes()).filter(|&i| !self.boundary[i])
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    pub fn domain_spec(&self) -> Option<&DomainSpec> {
        self.spec.as_ref()
    }

    /// Largest simplex diameter of the mesh.
    pub fn mesh_size(&self) -> f64 {
        (0..self.n_simplices())
            .map(|t| self.simplex_diameter(t))
            .fold(0.0, f64::max)
    }

    pub fn simplex_diameter(&self, t: usize) -> f64 {
        let nodes = self.simplex(t);
        let mut d = 0.0f64;
        for a in 0..nodes.len() {
            for b in (a + 1)..nodes.len() {
                d = d.max(dist(self.node(nodes[a]), self.node(nodes[b])));
            }
        }
        d
    }

    /// Euclidean distance between two points of the mesh's dimension.
    pub fn squared_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    /// Exact distance from an arbitrary point to the boundary when the domain
    /// spec is known, nodal interpolation otherwise.
    pub fn delta_at(&self, point: &[f64]) -> f64 {
        match &self.spec {
            Some(DomainSpec::Interval { a, b, .. }) => (point[0] - a).min(b - point[0]).max(0.0),
            Some(DomainSpec::Polygon { vertices, .. }) => polygon_boundary_distance(vertices, point),
            None => match self.locate(point) {
                Some((t, lambda)) => self
                    .simplex(t)
                    .iter()
                    .zip(&lambda)
                    .map(|(&n, &l)| l * self.delta[n])
                    .sum(),
                None => 0.0,
            },
        }
    }

    /// Find the simplex containing `point`, returning barycentric coordinates.
    pub fn locate(&self, point: &[f64]) -> Option<(usize, Vec<f64>)> {
        let tol = 1e-10 * (1.0 + self.mesh_scale());
        for t in 0..self.n_simplices() {
            if let Some(lambda) = self.barycentric(t, point, tol) {
                return Some((t, lambda));
            }
        }
        None
    }

    fn mesh_scale(&self) -> f64 {
        self.coords.iter().fold(0.0f64, |m, &c| m.max(c.abs()))
    }

    fn barycentric(&self, t: usize, point: &[f64], tol: f64) -> Option<Vec<f64>> {
        let nodes = self.simplex(t);
        let lambda: Vec<f64> = match self.dimension {
            1 => {
                let x0 = self.node(nodes[0])[0];
                let x1 = self.node(nodes[1])[0];
                let l1 = (point[0] - x0) / (x1 - x0);
                vec![1.0 - l1, l1]
            }
            2 => {
                let a = self.node(nodes[0]);
                let b = self.node(nodes[1]);
                let c = self.node(nodes[2]);
                let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                let l1 = ((point[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (point[1] - a[1])) / det;
                let l2 = ((b[0] - a[0]) * (point[1] - a[1]) - (point[0] - a[0]) * (b[1] - a[1])) / det;
                vec![1.0 - l1 - l2, l1, l2]
            }
            _ => unreachable!(),
        };
        if lambda.iter().all(|&l| l >= -tol) {
            // clamp tiny negatives so downstream interpolation stays convex
            let mut lambda = lambda;
            let mut sum = 0.0;
            for l in lambda.iter_mut() {
                *l = l.max(0.0);
                sum += *l;
            }
            for l in lambda.iter_mut() {
                *l /= sum;
            }
            Some(lambda)
        } else {
            None
        }
    }

    /// Local resolution near `point`: the diameter of the containing simplex.
    pub fn local_spacing(&self, point: &[f64]) -> f64 {
        match self.locate(point) {
            Some((t, _)) => self.simplex_diameter(t),
            None => self.mesh_size(),
        }
    }

    /// Lump a density into nodal masses: `m_i = Σ_T f(bary_T) · |T|/(d+1)`.
    pub fn lump_density<F: Fn(&[f64], f64) -> f64>(&self, density: &F) -> Vec<f64> {
        let mut m = vec![0.0; self.n_nodes()];
        let share = 1.0 / (self.dimension as f64 + 1.0);
        for t in 0..self.n_simplices() {
            let rho = density(self.barycenter(t), self.bary_delta[t]);
            let contrib = rho * self.volumes[t] * share;
            for &n in self.simplex(t) {
                m[n] += contrib;
            }
        }
        m
    }

    /// Build the mesh with every cell split in two (h ↦ h/2).
    pub fn refined(&self) -> Result<Mesh> {
        match &self.spec {
            Some(DomainSpec::Interval { a, b, n_cells }) => build_interval_mesh(*a, *b, n_cells * 2),
            Some(DomainSpec::Polygon { vertices, h }) => build_polygon_mesh(vertices, h / 2.0),
            None => Err(Error::InvalidGeometry(
                "mesh has no generating spec; cannot refine an imported mesh".into(),
            )),
        }
    }

    fn validate(&self) -> Result<()> {
        for t in 0..self.n_simplices() {
            let nodes = self.simplex(t);
            for a in 0..nodes.len() {
                for b in (a + 1)..nodes.len() {
                    if nodes[a] == nodes[b] {
                        return Err(Error::InvalidGeometry(format!(
                            "simplex {t} has repeated node {}",
                            nodes[a]
                        )));
                    }
                }
            }
            if self.volumes[t] <= 0.0 {
                return Err(Error::InvalidGeometry(format!(
                    "simplex {t} has non-positive volume {}",
                    self.volumes[t]
                )));
            }
        }
        for i in 0..self.n_nodes() {
            let d = self.delta[i];
            if self.boundary[i] && d != 0.0 {
                return Err(Error::InvalidGeometry(format!(
                    "boundary node {i} has δ = {d} ≠ 0"
                )));
            }
            if !self.boundary[i] && d <= 0.0 {
                return Err(Error::InvalidGeometry(format!(
                    "interior node {i} has δ = {d} ≤ 0"
                )));
            }
        }
        Ok(())
    }

    /// Write the mesh as plain text: one node per line (coordinates, boundary
    /// flag, δ), then one simplex per line (node indices).
    pub fn write_text<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "dim {}", self.dimension)?;
        writeln!(out, "nodes {}", self.n_nodes())?;
        for i in 0..self.n_nodes() {
            for d in 0..self.dimension {
                write!(out, "{:.17e} ", self.node(i)[d])?;
            }
            writeln!(out, "{} {:.17e}", u8::from(self.boundary[i]), self.delta[i])?;
        }
        writeln!(out, "simplices {}", self.n_simplices())?;
        for t in 0..self.n_simplices() {
            let nodes = self.simplex(t);
            let line: Vec<String> = nodes.iter().map(|n| n.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Read a mesh written by [`Mesh::write_text`]. The imported mesh has no
    /// generating spec, so it cannot be refined.
    pub fn read_text<R: BufRead>(input: R) -> Result<Mesh> {
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::InvalidGeometry("unexpected end of mesh file".into()))?
                .map_err(Error::from)
        };
        let header = next()?;
        let dimension: usize = parse_header(&header, "dim")?;
        if dimension != 1 && dimension != 2 {
            return Err(Error::InvalidGeometry(format!("unsupported dimension {dimension}")));
        }
        let n_nodes: usize = parse_header(&next()?, "nodes")?;
        let mut coords = Vec::with_capacity(n_nodes * dimension);
        let mut boundary = Vec::with_capacity(n_nodes);
        let mut delta = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let line = next()?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != dimension + 2 {
                return Err(Error::InvalidGeometry(format!("bad node line: {line}")));
            }
            for f in &fields[..dimension] {
                coords.push(parse_f64(f)?);
            }
            boundary.push(fields[dimension] == "1");
            delta.push(parse_f64(fields[dimension + 1])?);
        }
        let n_simplices: usize = parse_header(&next()?, "simplices")?;
        let mut simplices = Vec::with_capacity(n_simplices * (dimension + 1));
        for _ in 0..n_simplices {
            let line = next()?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != dimension + 1 {
                return Err(Error::InvalidGeometry(format!("bad simplex line: {line}")));
            }
            for f in fields {
                let idx: usize = f
                    .parse()
                    .map_err(|_| Error::InvalidGeometry(format!("bad node index: {f}")))?;
                if idx >= n_nodes {
                    return Err(Error::InvalidGeometry(format!("node index out of range: {idx}")));
                }
                simplices.push(idx);
            }
        }
        Mesh::assemble(dimension, coords, simplices, boundary, delta, None)
    }

    /// Finish construction: derive volumes, gradients, barycenters and lumped
    /// masses, then check the mesh invariants.
    fn assemble(
        dimension: usize,
        coords: Vec<f64>,
        simplices: Vec<usize>,
        boundary: Vec<bool>,
        delta: Vec<f64>,
        spec: Option<DomainSpec>,
    ) -> Result<Mesh> {
        let k = dimension + 1;
        let n_simplices = simplices.len() / k;
        let mut volumes = Vec::with_capacity(n_simplices);
        let mut grads = vec![0.0; n_simplices * k * dimension];
        let mut barycenters = vec![0.0; n_simplices * dimension];
        let bary_delta = vec![0.0; n_simplices];
        let node = |i: usize| &coords[i * dimension..(i + 1) * dimension];

        for t in 0..n_simplices {
            let nodes = &simplices[t * k..(t + 1) * k];
            match dimension {
                1 => {
                    let x0 = node(nodes[0])[0];
                    let x1 = node(nodes[1])[0];
                    let len = x1 - x0;
                    volumes.push(len);
                    grads[(t * k) * dimension] = -1.0 / len;
                    grads[(t * k + 1) * dimension] = 1.0 / len;
                    barycenters[t] = 0.5 * (x0 + x1);
                }
                2 => {
                    let a = node(nodes[0]);
                    let b = node(nodes[1]);
                    let c = node(nodes[2]);
                    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                    volumes.push(det / 2.0);
                    let g = &mut grads[(t * k) * dimension..(t * k + 3) * dimension];
                    g[0] = (b[1] - c[1]) / det;
                    g[1] = (c[0] - b[0]) / det;
                    g[2] = (c[1] - a[1]) / det;
                    g[3] = (a[0] - c[0]) / det;
                    g[4] = (a[1] - b[1]) / det;
                    g[5] = (b[0] - a[0]) / det;
                    barycenters[t * 2] = (a[0] + b[0] + c[0]) / 3.0;
                    barycenters[t * 2 + 1] = (a[1] + b[1] + c[1]) / 3.0;
                }
                _ => return Err(Error::InvalidGeometry("only 1D and 2D supported".into())),
            }
        }

        let mut mesh = Mesh {
            dimension,
            coords,
            simplices,
            boundary,
            delta,
            volumes,
            grads,
            barycenters,
            bary_delta,
            hat_mass: Vec::new(),
            spec,
        };
        for t in 0..n_simplices {
            mesh.bary_delta[t] = match &mesh.spec {
                Some(DomainSpec::Interval { a, b, .. }) => {
                    let x = mesh.barycenter(t)[0];
                    (x - a).min(b - x).max(0.0)
                }
                Some(DomainSpec::Polygon { vertices, .. }) => {
                    polygon_boundary_distance(vertices, mesh.barycenter(t))
                }
                // Imported mesh: vertex average, exact where δ is linear.
                None => {
                    mesh.simplex(t).iter().map(|&n| mesh.delta[n]).sum::<f64>()
                        / (mesh.dimension as f64 + 1.0)
                }
            };
        }
        mesh.hat_mass = mesh.lump_density(&|_, _| 1.0);
        mesh.validate()?;
        Ok(mesh)
    }
}

fn parse_header(line: &str, key: &str) -> Result<usize> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(Error::InvalidGeometry(format!("expected `{key} <n>`, got `{line}`")));
    }
    parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::InvalidGeometry(format!("bad `{key}` header: {line}")))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::InvalidGeometry(format!("bad float: {s}")))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Uniform mesh of the interval `(a, b)` with `n_cells` cells.
pub fn build_interval_mesh(a: f64, b: f64, n_cells: usize) -> Result<Mesh> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidGeometry(format!("invalid interval ({a}, {b})")));
    }
    if n_cells < 2 {
        return Err(Error::InvalidGeometry(format!(
            "n_cells must be at least 2, got {n_cells}"
        )));
    }
    let n_nodes = n_cells + 1;
    let h = (b - a) / n_cells as f64;
    let mut coords = Vec::with_capacity(n_nodes);
    let mut boundary = Vec::with_capacity(n_nodes);
    let mut delta = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let x = if i == n_cells { b } else { a + i as f64 * h };
        coords.push(x);
        boundary.push(i == 0 || i == n_cells);
        delta.push((x - a).min(b - x).max(0.0));
    }
    let mut simplices = Vec::with_capacity(n_cells * 2);
    for i in 0..n_cells {
        simplices.push(i);
        simplices.push(i + 1);
    }
    Mesh::assemble(
        1,
        coords,
        simplices,
        boundary,
        delta,
        Some(DomainSpec::Interval { a, b, n_cells }),
    )
}

/// Structured triangulation of an axis-aligned rectangle or L-shaped polygon.
///
/// The polygon must be simple, counterclockwise, with axis-aligned edges; `h`
/// is the target edge length of the grid cells, each split into two triangles.
pub fn build_polygon_mesh(vertices: &[[f64; 2]], h: f64) -> Result<Mesh> {
    validate_polygon(vertices)?;
    let shortest = polygon_edges(vertices)
        .map(|(a, b)| dist(&a, &b))
        .fold(f64::INFINITY, f64::min);
    if !(h > 0.0) {
        return Err(Error::InvalidGeometry(format!("h must be positive, got {h}")));
    }
    if h > shortest * (1.0 + GEOM_EPS) {
        return Err(Error::InvalidGeometry(format!(
            "h = {h} exceeds the shortest polygon edge {shortest}"
        )));
    }

    let (x0, x1) = bbox(vertices, 0);
    let (y0, y1) = bbox(vertices, 1);
    let nx = grid_divisions(vertices, 0, x0, x1, h)?;
    let ny = grid_divisions(vertices, 1, y0, y1, h)?;
    let dx = (x1 - x0) / nx as f64;
    let dy = (y1 - y0) / ny as f64;

    // Keep cells whose center lies inside the polygon; grid lines pass through
    // every vertex, so kept cells tile the polygon exactly.
    let mut keep = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let cx = x0 + (i as f64 + 0.5) * dx;
            let cy = y0 + (j as f64 + 0.5) * dy;
            keep[j * nx + i] = point_in_polygon(vertices, &[cx, cy]);
        }
    }
    if !keep.iter().any(|&k| k) {
        return Err(Error::InvalidGeometry("no grid cell lies inside the polygon".into()));
    }

    // Number the used grid nodes row-major (keeps the stiffness bandwidth small).
    let grid_node = |i: usize, j: usize| j * (nx + 1) + i;
    let mut node_id = vec![usize::MAX; (nx + 1) * (ny + 1)];
    let mut coords = Vec::new();
    let mut boundary = Vec::new();
    let mut delta = Vec::new();
    let mut n_used = 0usize;
    for j in 0..=ny {
        for i in 0..=nx {
            let used = touches_kept_cell(&keep, nx, ny, i, j);
            if !used {
                continue;
            }
            node_id[grid_node(i, j)] = n_used;
            n_used += 1;
            let x = if i == nx { x1 } else { x0 + i as f64 * dx };
            let y = if j == ny { y1 } else { y0 + j as f64 * dy };
            let d = polygon_boundary_distance(vertices, &[x, y]);
            let scale = (x1 - x0).max(y1 - y0);
            let on_boundary = d <= GEOM_EPS * scale;
            coords.push(x);
            coords.push(y);
            boundary.push(on_boundary);
            delta.push(if on_boundary { 0.0 } else { d });
        }
    }

    let mut simplices = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if !keep[j * nx + i] {
                continue;
            }
            let v00 = node_id[grid_node(i, j)];
            let v10 = node_id[grid_node(i + 1, j)];
            let v01 = node_id[grid_node(i, j + 1)];
            let v11 = node_id[grid_node(i + 1, j + 1)];
            simplices.extend_from_slice(&[v00, v10, v11]);
            simplices.extend_from_slice(&[v00, v11, v01]);
        }
    }

    let mesh = Mesh::assemble(
        2,
        coords,
        simplices,
        boundary,
        delta,
        Some(DomainSpec::Polygon {
            vertices: vertices.to_vec(),
            h,
        }),
    )?;
    let area = polygon_area(vertices);
    let vol = mesh.total_volume();
    if ((vol - area) / area).abs() > 1e-10 {
        return Err(Error::InvalidGeometry(format!(
            "triangulated area {vol} does not match polygon area {area}"
        )));
    }
    Ok(mesh)
}

/// Choose the number of grid divisions along `axis` so that the pitch is at
/// most `h` and every polygon vertex lands on a grid line.
fn grid_divisions(vertices: &[[f64; 2]], axis: usize, lo: f64, hi: f64, h: f64) -> Result<usize> {
    let width = hi - lo;
    let n0 = (width / h - GEOM_EPS).ceil().max(1.0) as usize;
    'outer: for n in n0..=(4 * n0 + 4) {
        let pitch = width / n as f64;
        for v in vertices {
            let f = (v[axis] - lo) / pitch;
            if (f - f.round()).abs() > 1e-9 * n as f64 {
                continue 'outer;
            }
        }
        return Ok(n);
    }
    Err(Error::InvalidGeometry(format!(
        "no grid with pitch ≤ {h} aligns with the polygon vertices along axis {axis}"
    )))
}

fn touches_kept_cell(keep: &[bool], nx: usize, ny: usize, i: usize, j: usize) -> bool {
    for dj in 0..2usize {
        for di in 0..2usize {
            if j + dj >= 1 && i + di >= 1 {
                let cj = j + dj - 1;
                let ci = i + di - 1;
                if cj < ny && ci < nx && keep[cj * nx + ci] {
                    return true;
                }
            }
        }
    }
    false
}

fn bbox(vertices: &[[f64; 2]], axis: usize) -> (f64, f64) {
    let lo = vertices.iter().map(|v| v[axis]).fold(f64::INFINITY, f64::min);
    let hi = vertices.iter().map(|v| v[axis]).fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn polygon_edges(vertices: &[[f64; 2]]) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
    (0..vertices.len()).map(move |i| (vertices[i], vertices[(i + 1) % vertices.len()]))
}

pub(crate) fn polygon_area(vertices: &[[f64; 2]]) -> f64 {
    let mut a = 0.0;
    for (p, q) in polygon_edges(vertices) {
        a += p[0] * q[1] - q[0] * p[1];
    }
    a / 2.0
}

fn validate_polygon(vertices: &[[f64; 2]]) -> Result<()> {
    if vertices.len() != 4 && vertices.len() != 6 {
        return Err(Error::InvalidGeometry(format!(
            "unsupported polygon with {} vertices; only axis-aligned rectangles (4) and L-shapes (6) are supported",
            vertices.len()
        )));
    }
    for (p, q) in polygon_edges(vertices) {
        let axis_aligned = (p[0] - q[0]).abs() < GEOM_EPS || (p[1] - q[1]).abs() < GEOM_EPS;
        let degenerate = dist(&p, &q) < GEOM_EPS;
        if !axis_aligned || degenerate {
            return Err(Error::InvalidGeometry(
                "polygon edges must be axis-aligned and non-degenerate".into(),
            ));
        }
    }
    if polygon_area(vertices) <= 0.0 {
        return Err(Error::InvalidGeometry(
            "polygon must be counterclockwise with positive area".into(),
        ));
    }
    Ok(())
}

fn point_in_polygon(vertices: &[[f64; 2]], p: &[f64; 2]) -> bool {
    // Ray casting along +x; cell centers never lie on an edge of the
    // axis-aligned polygons handled here.
    let mut inside = false;
    for (a, b) in polygon_edges(vertices) {
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if x_cross > p[0] {
                inside = !inside;
            }
        }
    }
    inside
}

pub(crate) fn polygon_boundary_distance(vertices: &[[f64; 2]], p: &[f64]) -> f64 {
    polygon_edges(vertices)
        .map(|(a, b)| point_segment_distance(p, &a, &b))
        .fold(f64::INFINITY, f64::min)
}

fn point_segment_distance(p: &[f64], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    let proj = [a[0] + t * ab[0], a[1] + t * ab[1]];
    dist(p, &proj)
}

/// A weight `w = δ^t` (or `w ≡ 1`), evaluated at simplex barycenters.
///
/// Barycenters are interior points, so `δ^t` stays positive and finite for
/// every exponent `t`; the boundary values `0^t` never enter a quadrature.
#[derive(Clone, Debug)]
pub struct Weight {
    mesh: MeshRef,
    exponent: f64,
    constant: bool,
    simplex_values: Vec<f64>,
    node_lumped: Vec<f64>,
}

impl Weight {
    /// The constant weight `w ≡ 1`.
    pub fn constant(mesh: &MeshRef) -> Weight {
        let simplex_values = vec![1.0; mesh.n_simplices()];
        let node_lumped = mesh.hat_mass.clone();
        Weight {
            mesh: mesh.clone(),
            exponent: 0.0,
            constant: true,
            simplex_values,
            node_lumped,
        }
    }

    pub fn mesh(&self) -> &MeshRef {
        &self.mesh
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// Weight value at the barycenter of simplex `t`.
    pub fn simplex_value(&self, t: usize) -> f64 {
        self.simplex_values[t]
    }

    /// Nodal value `δ(x_i)^t`; boundary nodes use the clamped distance.
    pub fn node_value(&self, i: usize) -> f64 {
        if self.constant {
            1.0
        } else {
            self.mesh.delta(i).max(W_FLOOR).powf(self.exponent).max(W_FLOOR)
        }
    }

    /// Lumped weight mass `∫ φ_i w dx` of the hat at node `i`.
    pub fn node_lumped(&self, i: usize) -> f64 {
        self.node_lumped[i]
    }

    /// `w(B(x, r))`: analytic for constant weights (the weight lives on all of
    /// ℝⁿ), lumped nodal summation otherwise.
    pub fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        if self.constant {
            match self.mesh.dimension() {
                1 => 2.0 * r,
                _ => std::f64::consts::PI * r * r,
            }
        } else {
            let r2 = r * r;
            (0..self.mesh.n_nodes())
                .filter(|&i| self.mesh.squared_distance(self.mesh.node(i), x) <= r2)
                .map(|i| self.node_lumped[i])
                .sum()
        }
    }
}

/// The model weight `w = δ^t` of the admissible power family.
pub fn power_weight(mesh: &MeshRef, t: f64) -> Weight {
    if t == 0.0 {
        return Weight::constant(mesh);
    }
    let simplex_values: Vec<f64> = (0..mesh.n_simplices())
        .map(|s| mesh.barycenter_delta(s).max(W_FLOOR).powf(t).max(W_FLOOR))
        .collect();
    let mut w = Weight {
        mesh: mesh.clone(),
        exponent: t,
        constant: false,
        simplex_values,
        node_lumped: Vec::new(),
    };
    let share = 1.0 / (mesh.dimension() as f64 + 1.0);
    let mut lumped = vec![0.0; mesh.n_nodes()];
    for t_idx in 0..mesh.n_simplices() {
        let contrib = w.simplex_values[t_idx] * mesh.volume(t_idx) * share;
        for &n in mesh.simplex(t_idx) {
            lumped[n] += contrib;
        }
    }
    w.node_lumped = lumped;
    w
}

/// `true` when both handles refer to the same mesh object.
pub fn same_mesh(a: &MeshRef, b: &MeshRef) -> bool {
    Arc::ptr_eq(a, b)
}

/// The L-shaped model domain: the unit square with its upper-right quarter
/// removed.
pub fn lshape_vertices() -> Vec<[f64; 2]> {
    vec![
        [0.0, 0.0],
        [1.0, 0.0],
        [1.0, 0.5],
        [0.5, 0.5],
        [0.5, 1.0],
        [0.0, 1.0],
    ]
}

/// Axis-aligned rectangle vertices, counterclockwise.
pub fn rectangle_vertices(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<[f64; 2]> {
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_mesh_basic() {
        let mesh = build_interval_mesh(0.0, 1.0, 4).unwrap();
        assert_eq!(mesh.n_nodes(), 5);
        assert_eq!(mesh.n_simplices(), 4);
        let expected = [0.0, 0.25, 0.5, 0.25, 0.0];
        for (i, &d) in expected.iter().enumerate() {
            assert!((mesh.delta(i) - d).abs() < 1e-15, "δ at node {i}");
        }
        assert!((mesh.total_volume() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn interval_midpoint_delta() {
        let mesh = build_interval_mesh(0.0, 1.0, 2).unwrap();
        assert!((mesh.delta(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interval_symmetric_delta() {
        let mesh = build_interval_mesh(-1.0, 1.0, 4).unwrap();
        // node at x = 0
        assert!((mesh.delta(2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn interval_rejects_bad_input() {
        assert!(build_interval_mesh(1.0, 0.0, 4).is_err());
        assert!(build_interval_mesh(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn unit_square_structured() {
        let mesh = build_polygon_mesh(&rectangle_vertices(0.0, 0.0, 1.0, 1.0), 0.5).unwrap();
        assert_eq!(mesh.n_nodes(), 9);
        assert_eq!(mesh.n_simplices(), 8);
        assert!((mesh.total_volume() - 1.0).abs() < 1e-14);
        let center = (0..mesh.n_nodes())
            .find(|&i| mesh.squared_distance(mesh.node(i), &[0.5, 0.5]) < 1e-20)
            .unwrap();
        assert!((mesh.delta(center) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn lshape_area() {
        let mesh = build_polygon_mesh(&lshape_vertices(), 0.25).unwrap();
        assert!((mesh.total_volume() - 0.75).abs() < 1e-12);
        // the reentrant corner lies on the boundary
        let corner = (0..mesh.n_nodes())
            .find(|&i| mesh.squared_distance(mesh.node(i), &[0.5, 0.5]) < 1e-20)
            .unwrap();
        assert!(mesh.is_boundary(corner));
    }

    #[test]
    fn polygon_rejects_bad_input() {
        // clockwise
        let mut cw = rectangle_vertices(0.0, 0.0, 1.0, 1.0);
        cw.reverse();
        assert!(build_polygon_mesh(&cw, 0.5).is_err());
        // h larger than shortest edge
        assert!(build_polygon_mesh(&lshape_vertices(), 0.75).is_err());
        // pentagon
        let penta = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.5, 1.5], [0.0, 1.0]];
        assert!(build_polygon_mesh(&penta, 0.25).is_err());
    }

    #[test]
    fn refinement_preserves_geometry() {
        let mesh = Arc::new(build_interval_mesh(0.0, 1.0, 8).unwrap());
        let fine = Arc::new(mesh.refined().unwrap());
        assert_eq!(fine.n_nodes(), 17);
        // δ at persistent nodes is unchanged
        for i in 0..mesh.n_nodes() {
            let x = mesh.node(i)[0];
            let j = (0..fine.n_nodes())
                .find(|&j| (fine.node(j)[0] - x).abs() < 1e-15)
                .unwrap();
            assert_eq!(mesh.delta(i), fine.delta(j));
        }
        let sq = Arc::new(build_polygon_mesh(&rectangle_vertices(0.0, 0.0, 2.0, 1.0), 0.5).unwrap());
        let sq_fine = sq.refined().unwrap();
        assert!((sq_fine.total_volume() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn power_weight_values() {
        let mesh = Arc::new(build_interval_mesh(0.0, 1.0, 4).unwrap());
        let w0 = power_weight(&mesh, 0.0);
        assert!(w0.is_constant());
        assert_eq!(w0.node_value(2), 1.0);

        let w1 = power_weight(&mesh, 1.0);
        assert!((w1.node_value(2) - 0.5).abs() < 1e-15);

        let wneg = power_weight(&mesh, -0.5);
        assert!((wneg.node_value(1) - 2.0).abs() < 1e-12); // 0.25^{-1/2}
        // barycenter values positive on every simplex
        for t in 0..mesh.n_simplices() {
            assert!(wneg.simplex_value(t) > 0.0);
        }
    }

    #[test]
    fn mesh_text_roundtrip() {
        let mesh = build_polygon_mesh(&lshape_vertices(), 0.25).unwrap();
        let mut buf = Vec::new();
        mesh.write_text(&mut buf).unwrap();
        let back = Mesh::read_text(std::io::BufReader::new(buf.as_slice())).unwrap();
        assert_eq!(back.n_nodes(), mesh.n_nodes());
        assert_eq!(back.n_simplices(), mesh.n_simplices());
        assert!((back.total_volume() - mesh.total_volume()).abs() < 1e-14);
        for i in 0..mesh.n_nodes() {
            assert_eq!(back.is_boundary(i), mesh.is_boundary(i));
            assert!((back.delta(i) - mesh.delta(i)).abs() < 1e-15);
        }
    }

    #[test]
    fn locate_and_interpolation() {
        let mesh = build_polygon_mesh(&rectangle_vertices(0.0, 0.0, 1.0, 1.0), 0.25).unwrap();
        let (t, lambda) = mesh.locate(&[0.3, 0.4]).unwrap();
        let nodes = mesh.simplex(t);
        let x: f64 = nodes.iter().zip(&lambda).map(|(&n, &l)| l * mesh.node(n)[0]).sum();
        let y: f64 = nodes.iter().zip(&lambda).map(|(&n, &l)| l * mesh.node(n)[1]).sum();
        assert!((x - 0.3).abs() < 1e-12 && (y - 0.4).abs() < 1e-12);
        assert!(mesh.locate(&[1.5, 0.5]).is_none());
    }
}

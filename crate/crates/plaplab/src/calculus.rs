//! Piecewise-linear functions and node-lumped measures over a mesh, with
//! weighted p-energies, measure pairings and (weak) L^q norms.

use crate::error::{Error, Result};
use crate::mesh::{same_mesh, MeshRef, Weight};
use std::io::Write;

/// A piecewise-linear function given by its nodal values.
#[derive(Clone, Debug)]
pub struct DiscreteFunction {
    mesh: MeshRef,
    values: Vec<f64>,
    zero_trace: bool,
}

impl DiscreteFunction {
    /// The zero function with homogeneous Dirichlet trace.
    pub fn zeros(mesh: &MeshRef) -> DiscreteFunction {
        DiscreteFunction {
            mesh: mesh.clone(),
            values: vec![0.0; mesh.n_nodes()],
            zero_trace: true,
        }
    }

    /// Wrap nodal values. All values must be finite; with `zero_trace` the
    /// boundary values must vanish exactly.
    pub fn from_values(mesh: &MeshRef, values: Vec<f64>, zero_trace: bool) -> Result<DiscreteFunction> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::MeshMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("values", "nodal values must be finite"));
        }
        if zero_trace {
            for i in 0..mesh.n_nodes() {
                if mesh.is_boundary(i) && values[i] != 0.0 {
                    return Err(Error::param(
                        "values",
                        format!("zero-trace function has value {} at boundary node {i}", values[i]),
                    ));
                }
            }
        }
        Ok(DiscreteFunction {
            mesh: mesh.clone(),
            values,
            zero_trace,
        })
    }

    /// Interpolate a coordinate function; boundary values are zeroed when
    /// `zero_trace` is requested.
    pub fn interpolate<F: Fn(&[f64]) -> f64>(mesh: &MeshRef, f: F, zero_trace: bool) -> DiscreteFunction {
        let values = (0..mesh.n_nodes())
            .map(|i| {
                if zero_trace && mesh.is_boundary(i) {
                    0.0
                } else {
                    f(mesh.node(i))
                }
            })
            .collect();
        DiscreteFunction {
            mesh: mesh.clone(),
            values,
            zero_trace,
        }
    }

    pub fn mesh(&self) -> &MeshRef {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn zero_trace(&self) -> bool {
        self.zero_trace
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// Value at an arbitrary point by barycentric interpolation.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        let (t, lambda) = self
            .mesh
            .locate(point)
            .ok_or_else(|| Error::PointOutsideDomain(point.to_vec()))?;
        Ok(self
            .mesh
            .simplex(t)
            .iter()
            .zip(&lambda)
            .map(|(&n, &l)| l * self.values[n])
            .sum())
    }

    pub fn scale(&self, c: f64) -> DiscreteFunction {
        DiscreteFunction {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            zero_trace: self.zero_trace,
        }
    }

    /// Nodal power `u ↦ u^e` for nonnegative functions.
    pub fn powf(&self, e: f64) -> DiscreteFunction {
        DiscreteFunction {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| v.max(0.0).powf(e)).collect(),
            zero_trace: self.zero_trace,
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F, zero_trace: bool) -> DiscreteFunction {
        let values = (0..self.values.len())
            .map(|i| {
                if zero_trace && self.mesh.is_boundary(i) {
                    0.0
                } else {
                    f(self.values[i])
                }
            })
            .collect();
        DiscreteFunction {
            mesh: self.mesh.clone(),
            values,
            zero_trace,
        }
    }

    /// Re-sample onto another mesh of the same domain by interpolation
    /// (nodes outside the source mesh get 0).
    pub fn transfer_to(&self, mesh: &MeshRef, zero_trace: bool) -> DiscreteFunction {
        DiscreteFunction::interpolate(
            mesh,
            |x| self.eval(x).unwrap_or(0.0),
            zero_trace,
        )
    }

    /// Export as CSV: `node,x[,y],value`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let dim = self.mesh.dimension();
        if dim == 1 {
            writeln!(out, "node,x,value")?;
        } else {
            writeln!(out, "node,x,y,value")?;
        }
        for i in 0..self.mesh.n_nodes() {
            let p = self.mesh.node(i);
            if dim == 1 {
                writeln!(out, "{},{:.12e},{:.12e}", i, p[0], self.values[i])?;
            } else {
                writeln!(out, "{},{:.12e},{:.12e},{:.12e}", i, p[0], p[1], self.values[i])?;
            }
        }
        Ok(())
    }
}

/// A point mass anchored to the nodes of its containing simplex.
#[derive(Clone, Debug)]
pub struct Atom {
    pub position: Vec<f64>,
    pub mass: f64,
    carriers: Vec<(usize, f64)>, // (node, barycentric hat weight)
}

impl Atom {
    /// Interpolated value of `f` at the atom.
    pub fn eval(&self, f: &DiscreteFunction) -> f64 {
        self.carriers.iter().map(|&(n, l)| l * f.value(n)).sum()
    }

    /// Barycentric hat-function weights `φ_i(x_atom)` of the carrier nodes.
    pub fn hat_weights(&self) -> &[(usize, f64)] {
        &self.carriers
    }
}

/// A nonnegative Radon measure in node-lumped form: per-node masses from a
/// density plus optional point atoms.
///
/// Densities `δ^{-s}` with `s ≥ 1` have infinite continuum mass; their
/// discrete masses are finite on any fixed mesh (barycenters are interior)
/// and diverge under refinement, which is what the exhaustion machinery
/// consumes. Such measures carry the `infinite` flag.
#[derive(Clone, Debug)]
pub struct MeasureData {
    mesh: MeshRef,
    node_masses: Vec<f64>,
    atoms: Vec<Atom>,
    infinite: bool,
}

impl MeasureData {
    pub fn zero(mesh: &MeshRef) -> MeasureData {
        MeasureData {
            mesh: mesh.clone(),
            node_masses: vec![0.0; mesh.n_nodes()],
            atoms: Vec::new(),
            infinite: false,
        }
    }

    /// Lebesgue measure `dx` restricted to the domain.
    pub fn lebesgue(mesh: &MeshRef) -> MeasureData {
        MeasureData {
            mesh: mesh.clone(),
            node_masses: mesh.lump_density(&|_, _| 1.0),
            atoms: Vec::new(),
            infinite: false,
        }
    }

    /// Measure with density evaluated at simplex barycenters,
    /// `m_i = Σ_T ρ(bary_T, δ(bary_T)) |T|/(d+1)`.
    pub fn from_density<F: Fn(&[f64], f64) -> f64>(mesh: &MeshRef, density: F) -> Result<MeasureData> {
        let node_masses = mesh.lump_density(&density);
        if node_masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::param("density", "lumped masses must be finite and nonnegative"));
        }
        Ok(MeasureData {
            mesh: mesh.clone(),
            node_masses,
            atoms: Vec::new(),
            infinite: false,
        })
    }

    /// The model measure `dσ = δ^{-s} dx`. For `s ≥ 1` the continuum mass is
    /// infinite and the measure is flagged accordingly.
    pub fn power_density(mesh: &MeshRef, s: f64) -> Result<MeasureData> {
        let mut m = MeasureData::from_density(mesh, |_, delta| delta.max(1e-300).powf(-s))?;
        m.infinite = s >= 1.0;
        Ok(m)
    }

    /// A single point mass. The position must lie in the closed domain.
    pub fn point_atom(mesh: &MeshRef, position: &[f64], mass: f64) -> Result<MeasureData> {
        let mut m = MeasureData::zero(mesh);
        m.add_atom(position, mass)?;
        Ok(m)
    }

    pub fn add_atom(&mut self, position: &[f64], mass: f64) -> Result<()> {
        if mass < 0.0 || !mass.is_finite() {
            return Err(Error::param("mass", "atom mass must be finite and nonnegative"));
        }
        let (simplex, lambda) = self
            .mesh
            .locate(position)
            .ok_or_else(|| Error::PointOutsideDomain(position.to_vec()))?;
        let carriers = self
            .mesh
            .simplex(simplex)
            .iter()
            .zip(lambda)
            .map(|(&n, l)| (n, l))
            .collect();
        self.atoms.push(Atom {
            position: position.to_vec(),
            mass,
            carriers,
        });
        Ok(())
    }

    pub fn mesh(&self) -> &MeshRef {
        &self.mesh
    }

    pub fn node_masses(&self) -> &[f64] {
        &self.node_masses
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Whether the represented continuum measure has infinite total mass.
    pub fn is_symbolically_infinite(&self) -> bool {
        self.infinite
    }

    /// Total discrete mass (nodes plus atoms); always finite on a fixed mesh.
    pub fn total_mass(&self) -> f64 {
        self.node_masses.iter().sum::<f64>() + self.atoms.iter().map(|a| a.mass).sum::<f64>()
    }

    /// Mass paired against interior hat functions only; this is what a
    /// zero-trace solve sees.
    pub fn interior_mass(&self) -> f64 {
        let load = self.load_vector();
        self.mesh
            .interior_nodes()
            .map(|i| load[i])
            .sum()
    }

    /// The measure as a functional on hat functions:
    /// `load_i = m_i + Σ_atoms mass · φ_i(x_atom)`.
    pub fn load_vector(&self) -> Vec<f64> {
        let mut load = self.node_masses.clone();
        for a in &self.atoms {
            for &(n, l) in a.hat_weights() {
                load[n] += a.mass * l;
            }
        }
        load
    }

    pub fn scale(&self, c: f64) -> MeasureData {
        MeasureData {
            mesh: self.mesh.clone(),
            node_masses: self.node_masses.iter().map(|m| c * m).collect(),
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    mass: c * a.mass,
                    ..a.clone()
                })
                .collect(),
            infinite: self.infinite,
        }
    }

    pub fn add(&self, other: &MeasureData) -> Result<MeasureData> {
        if !same_mesh(&self.mesh, &other.mesh) {
            return Err(Error::MeshMismatch);
        }
        let node_masses = self
            .node_masses
            .iter()
            .zip(&other.node_masses)
            .map(|(a, b)| a + b)
            .collect();
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        Ok(MeasureData {
            mesh: self.mesh.clone(),
            node_masses,
            atoms,
            infinite: self.infinite || other.infinite,
        })
    }

    /// Truncation `1_{F} σ` to the compact set `F = {δ ≥ r}`, with node masses
    /// optionally capped at `cap`.
    pub fn restrict(&self, r: f64, cap: Option<f64>) -> MeasureData {
        let cap = cap.unwrap_or(f64::INFINITY);
        let node_masses = (0..self.node_masses.len())
            .map(|i| {
                if self.mesh.delta(i) >= r {
                    self.node_masses[i].min(cap)
                } else {
                    0.0
                }
            })
            .collect();
        let atoms = self
            .atoms
            .iter()
            .filter(|a| self.mesh.delta_at(&a.position) >= r)
            .map(|a| Atom {
                mass: a.mass.min(cap),
                ..a.clone()
            })
            .collect();
        MeasureData {
            mesh: self.mesh.clone(),
            node_masses,
            atoms,
            infinite: false,
        }
    }

    /// Reweight by a state-dependent factor: node masses scale by
    /// `factor(f(x_i))`, atom masses by `factor(f(x_atom))`.
    pub fn reweight<F: Fn(f64) -> f64>(&self, f: &DiscreteFunction, factor: F) -> Result<MeasureData> {
        if !same_mesh(&self.mesh, f.mesh()) {
            return Err(Error::MeshMismatch);
        }
        let node_masses: Vec<f64> = self
            .node_masses
            .iter()
            .zip(f.values())
            .map(|(m, v)| m * factor(*v))
            .collect();
        let atoms: Vec<Atom> = self
            .atoms
            .iter()
            .map(|a| Atom {
                mass: a.mass * factor(a.eval(f)),
                ..a.clone()
            })
            .collect();
        if node_masses.iter().any(|m| !m.is_finite() || *m < 0.0)
            || atoms.iter().any(|a| !a.mass.is_finite() || a.mass < 0.0)
        {
            return Err(Error::param("factor", "reweighted masses must be finite and nonnegative"));
        }
        Ok(MeasureData {
            mesh: self.mesh.clone(),
            node_masses,
            atoms,
            infinite: false,
        })
    }

    /// Nodal comparison `self ≤ other` as functionals on hat functions.
    /// Requires atoms at identical positions.
    pub fn leq(&self, other: &MeasureData) -> bool {
        if !same_mesh(&self.mesh, &other.mesh) {
            return false;
        }
        let a = self.load_vector();
        let b = other.load_vector();
        a.iter().zip(&b).all(|(x, y)| x <= y)
    }

    /// Export as CSV: node masses, then an `# atoms` section.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "node,mass")?;
        for (i, m) in self.node_masses.iter().enumerate() {
            writeln!(out, "{},{:.12e}", i, m)?;
        }
        writeln!(out, "# atoms")?;
        let dim = self.mesh.dimension();
        if dim == 1 {
            writeln!(out, "x,mass")?;
        } else {
            writeln!(out, "x,y,mass")?;
        }
        for a in &self.atoms {
            if dim == 1 {
                writeln!(out, "{:.12e},{:.12e}", a.position[0], a.mass)?;
            } else {
                writeln!(out, "{:.12e},{:.12e},{:.12e}", a.position[0], a.position[1], a.mass)?;
            }
        }
        Ok(())
    }
}

/// Symbolic measure description, instantiable on any mesh of the same domain.
#[derive(Clone, Debug, PartialEq)]
pub enum MeasureSpec {
    Zero,
    Lebesgue,
    /// `dσ = δ^{-s} dx`
    PowerDensity { s: f64 },
    /// point masses (position, mass)
    Atoms(Vec<(Vec<f64>, f64)>),
    Scaled(Box<MeasureSpec>, f64),
    Sum(Box<MeasureSpec>, Box<MeasureSpec>),
}

impl MeasureSpec {
    pub fn instantiate(&self, mesh: &MeshRef) -> Result<MeasureData> {
        match self {
            MeasureSpec::Zero => Ok(MeasureData::zero(mesh)),
            MeasureSpec::Lebesgue => Ok(MeasureData::lebesgue(mesh)),
            MeasureSpec::PowerDensity { s } => MeasureData::power_density(mesh, *s),
            MeasureSpec::Atoms(list) => {
                let mut m = MeasureData::zero(mesh);
                for (pos, mass) in list {
                    m.add_atom(pos, *mass)?;
                }
                Ok(m)
            }
            MeasureSpec::Scaled(inner, c) => Ok(inner.instantiate(mesh)?.scale(*c)),
            MeasureSpec::Sum(a, b) => a.instantiate(mesh)?.add(&b.instantiate(mesh)?),
        }
    }
}

/// `∫_Ω |∇f|^p w dx`, exact per simplex (`∇f` constant, `w` at barycenters).
pub fn weighted_p_energy(f: &DiscreteFunction, w: &Weight, p: f64) -> Result<f64> {
    if !same_mesh(f.mesh(), w.mesh()) {
        return Err(Error::MeshMismatch);
    }
    if !(p > 1.0) {
        return Err(Error::param("p", "exponent must satisfy p > 1"));
    }
    let mesh = f.mesh();
    let dim = mesh.dimension();
    let mut acc = 0.0;
    let mut g = [0.0f64; 2];
    for t in 0..mesh.n_simplices() {
        g[..dim].fill(0.0);
        for (local, &n) in mesh.simplex(t).iter().enumerate() {
            let gn = mesh.basis_gradient(t, local);
            let v = f.value(n);
            for d in 0..dim {
                g[d] += v * gn[d];
            }
        }
        let norm2: f64 = g[..dim].iter().map(|x| x * x).sum();
        acc += mesh.volume(t) * w.simplex_value(t) * norm2.powf(p / 2.0);
    }
    Ok(acc)
}

/// `⟨σ, f⟩ = Σ_i m_i f(x_i) + Σ_atoms mass · f(x_atom)`.
pub fn measure_pairing(f: &DiscreteFunction, sigma: &MeasureData) -> Result<f64> {
    if !same_mesh(f.mesh(), sigma.mesh()) {
        return Err(Error::MeshMismatch);
    }
    let nodes: f64 = sigma
        .node_masses()
        .iter()
        .zip(f.values())
        .map(|(m, v)| m * v)
        .sum();
    let atoms: f64 = sigma.atoms().iter().map(|a| a.mass * a.eval(f)).sum();
    Ok(nodes + atoms)
}

/// `∫ φ(f) dσ` with `φ(v) = |v|^e`; shared by norms and energy functionals.
pub fn measure_power_integral(f: &DiscreteFunction, sigma: &MeasureData, e: f64) -> Result<f64> {
    if !same_mesh(f.mesh(), sigma.mesh()) {
        return Err(Error::MeshMismatch);
    }
    let nodes: f64 = sigma
        .node_masses()
        .iter()
        .zip(f.values())
        .map(|(m, v)| m * v.abs().powf(e))
        .sum();
    let atoms: f64 = sigma
        .atoms()
        .iter()
        .map(|a| a.mass * a.eval(f).abs().powf(e))
        .sum();
    Ok(nodes + atoms)
}

/// `‖f‖_{L^q(σ)} = (Σ m_i |f(x_i)|^q + Σ atoms)^{1/q}`.
pub fn lq_norm(f: &DiscreteFunction, sigma: &MeasureData, q: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::param("q", "exponent must satisfy q > 0"));
    }
    Ok(measure_power_integral(f, sigma, q)?.powf(1.0 / q))
}

/// Weak (Lorentz) quasinorm `‖f‖_{L^{q,∞}(σ)} = sup_t t σ(|f| > t)^{1/q}`.
///
/// On a discrete distribution the sup is attained at the jump levels, so it
/// equals `max_v v · σ({|f| ≥ v})^{1/q}` over attained values `v`.
pub fn weak_lq_norm(f: &DiscreteFunction, sigma: &MeasureData, q: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::param("q", "exponent must satisfy q > 0"));
    }
    if !same_mesh(f.mesh(), sigma.mesh()) {
        return Err(Error::MeshMismatch);
    }
    // (|f|, mass) pairs sorted by decreasing value; tail sums give σ(|f| ≥ v).
    let mut pairs: Vec<(f64, f64)> = sigma
        .node_masses()
        .iter()
        .zip(f.values())
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, v)| (v.abs(), *m))
        .chain(
            sigma
                .atoms()
                .iter()
                .filter(|a| a.mass > 0.0)
                .map(|a| (a.eval(f).abs(), a.mass)),
        )
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut tail = 0.0;
    let mut best = 0.0f64;
    for (v, m) in pairs {
        tail += m;
        if v > 0.0 {
            best = best.max(v * tail.powf(1.0 / q));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, power_weight, Weight};
    use std::sync::Arc;

    fn unit_interval(n: usize) -> MeshRef {
        Arc::new(build_interval_mesh(0.0, 1.0, n).unwrap())
    }

    #[test]
    fn energy_of_linear_function() {
        let mesh = unit_interval(16);
        let w = Weight::constant(&mesh);
        let f = DiscreteFunction::interpolate(&mesh, |x| x[0], false);
        let e = weighted_p_energy(&f, &w, 2.0).unwrap();
        assert!((e - 1.0).abs() < 1e-14);
        let zero = DiscreteFunction::zeros(&mesh);
        assert_eq!(weighted_p_energy(&zero, &w, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn energy_of_parabola_converges() {
        // ∫ (1 - 2x)^2 dx = 1/3
        let mesh = unit_interval(256);
        let w = Weight::constant(&mesh);
        let f = DiscreteFunction::interpolate(&mesh, |x| x[0] * (1.0 - x[0]), true);
        let e = weighted_p_energy(&f, &w, 2.0).unwrap();
        assert!((e - 1.0 / 3.0).abs() < 1e-4, "e = {e}");
    }

    #[test]
    fn energy_homogeneity_exact() {
        let mesh = unit_interval(32);
        let w = power_weight(&mesh, 0.5);
        let f = DiscreteFunction::interpolate(&mesh, |x| (3.0 * x[0]).sin(), false);
        for p in [1.5, 2.0, 3.0] {
            let e1 = weighted_p_energy(&f, &w, p).unwrap();
            let e2 = weighted_p_energy(&f.scale(-2.0), &w, p).unwrap();
            assert!((e2 - 2.0f64.powf(p) * e1).abs() <= 1e-12 * e2.abs());
        }
    }

    #[test]
    fn pairing_examples() {
        let mesh = unit_interval(128);
        let sigma = MeasureData::lebesgue(&mesh);
        let one = DiscreteFunction::interpolate(&mesh, |_| 1.0, false);
        assert!((measure_pairing(&one, &sigma).unwrap() - 1.0).abs() < 1e-12);

        let atom = MeasureData::point_atom(&mesh, &[0.5], 1.0).unwrap();
        let id = DiscreteFunction::interpolate(&mesh, |x| x[0], false);
        assert!((measure_pairing(&id, &atom).unwrap() - 0.5).abs() < 1e-12);

        // ∫ x(1-x)/2 dx = 1/12
        let f = DiscreteFunction::interpolate(&mesh, |x| x[0] * (1.0 - x[0]) / 2.0, true);
        let v = measure_pairing(&f, &sigma).unwrap();
        assert!((v - 1.0 / 12.0).abs() < 1e-4, "v = {v}");
    }

    #[test]
    fn atom_outside_domain_rejected() {
        let mesh = unit_interval(8);
        assert!(MeasureData::point_atom(&mesh, &[1.5], 1.0).is_err());
    }

    #[test]
    fn lq_norm_examples() {
        let mesh = unit_interval(256);
        let sigma = MeasureData::lebesgue(&mesh);
        let c = DiscreteFunction::interpolate(&mesh, |_| 3.0, false);
        for q in [0.5, 1.0, 2.0] {
            let n = lq_norm(&c, &sigma, q).unwrap();
            let total = sigma.total_mass();
            assert!((n - 3.0 * total.powf(1.0 / q)).abs() < 1e-10);
        }
        let id = DiscreteFunction::interpolate(&mesh, |x| x[0], false);
        assert!((lq_norm(&id, &sigma, 1.0).unwrap() - 0.5).abs() < 1e-4);
        assert!((lq_norm(&id, &sigma, 2.0).unwrap() - 1.0 / 3.0f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn weak_norm_examples() {
        let mesh = unit_interval(512);
        let sigma = MeasureData::lebesgue(&mesh);
        let id = DiscreteFunction::interpolate(&mesh, |x| x[0], false);
        // sup_t t (1 - t) = 1/4
        let wn = weak_lq_norm(&id, &sigma, 1.0).unwrap();
        assert!((wn - 0.25).abs() < 5e-3, "wn = {wn}");

        let c = DiscreteFunction::interpolate(&mesh, |_| 2.0, false);
        for q in [0.5, 1.0, 1.5, 2.0] {
            let wn = weak_lq_norm(&c, &sigma, q).unwrap();
            assert!((wn - 2.0 * sigma.total_mass().powf(1.0 / q)).abs() < 1e-10);
        }
    }

    #[test]
    fn chebyshev_weak_le_strong() {
        let mesh = unit_interval(64);
        let mut sigma = MeasureData::lebesgue(&mesh);
        sigma.add_atom(&[0.3], 0.7).unwrap();
        let fns = [
            DiscreteFunction::interpolate(&mesh, |x| x[0], false),
            DiscreteFunction::interpolate(&mesh, |x| (10.0 * x[0]).sin(), false),
            DiscreteFunction::interpolate(&mesh, |x| x[0] * (1.0 - x[0]), true),
        ];
        for f in &fns {
            for q in [0.5, 1.0, 1.5, 2.0] {
                let weak = weak_lq_norm(f, &sigma, q).unwrap();
                let strong = lq_norm(f, &sigma, q).unwrap();
                assert!(weak <= strong + 1e-12, "q = {q}: {weak} > {strong}");
            }
        }
    }

    #[test]
    fn monotone_pairing() {
        let mesh = unit_interval(32);
        let sigma = MeasureData::power_density(&mesh, 0.5).unwrap();
        let f = DiscreteFunction::interpolate(&mesh, |x| x[0], false);
        let g = DiscreteFunction::interpolate(&mesh, |x| x[0] + 0.1, false);
        assert!(measure_pairing(&f, &sigma).unwrap() <= measure_pairing(&g, &sigma).unwrap());
    }

    #[test]
    fn restriction_and_infinite_flag() {
        let mesh = unit_interval(64);
        let sigma = MeasureData::power_density(&mesh, 1.0).unwrap();
        assert!(sigma.is_symbolically_infinite());
        let trunc = sigma.restrict(0.25, None);
        assert!(!trunc.is_symbolically_infinite());
        assert!(trunc.total_mass() < sigma.total_mass());
        for i in 0..mesh.n_nodes() {
            if mesh.delta(i) < 0.25 {
                assert_eq!(trunc.node_masses()[i], 0.0);
            } else {
                assert_eq!(trunc.node_masses()[i], sigma.node_masses()[i]);
            }
        }
        assert!(trunc.leq(&sigma));
        // refinement drives the discrete mass of δ^{-1} up (log divergence)
        let fine = Arc::new(mesh.refined().unwrap());
        let sigma_fine = MeasureData::power_density(&fine, 1.0).unwrap();
        assert!(sigma_fine.total_mass() > sigma.total_mass());
    }

    #[test]
    fn lq_refinement_consistency() {
        // smooth f: lumped L^1 norm converges at least O(h)
        let exact = 2.0 / std::f64::consts::PI;
        let mut errs = Vec::new();
        for n in [32, 64, 128] {
            let mesh = unit_interval(n);
            let sigma = MeasureData::lebesgue(&mesh);
            let f =
                DiscreteFunction::interpolate(&mesh, |x| (std::f64::consts::PI * x[0]).sin(), true);
            errs.push((lq_norm(&f, &sigma, 1.0).unwrap() - exact).abs());
        }
        assert!(errs[2] < errs[1] && errs[1] < errs[0]);
        assert!(errs[2] < errs[0] / 2.0);
    }
}

//! Best-constant estimation for the strong and weak trace inequalities
//! `‖f‖_{L^q(σ)} ≤ C ‖∇f‖_{L^p(w)}`, variational (p,w)-capacities, Hardy
//! quotients, capacitary conditions, and the two-sided energy sandwiches.

use crate::calculus::{
    lq_norm, measure_power_integral, weak_lq_norm, weighted_p_energy, DiscreteFunction,
    MeasureData,
};
use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::mesh::{power_weight, same_mesh, MeshRef, Weight};
use crate::potential::{wa_potential, ExhaustionSchedule, PotentialVerdict};
use crate::solver::{
    solve_pinned, solve_warm, validate_weight_exponent, OperatorA, SolveReport, SolverOptions,
};
use nalgebra::{DMatrix, SymmetricEigen};

/// Result of a Rayleigh-quotient maximization.
///
/// `value` is the quotient of the stored maximizer evaluated exactly, hence a
/// certified lower bound on the discrete best constant.
#[derive(Clone, Debug)]
pub struct TraceEstimate {
    pub p: f64,
    pub q: f64,
    pub value: f64,
    pub maximizer: DiscreteFunction,
    pub restarts: usize,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NormKind {
    Strong,
    Weak,
}

/// Certified lower-bound estimate of the best constant in
/// `‖f‖_{L^q(σ)} ≤ C ‖∇f‖_{L^p(w)}` over nonnegative zero-trace functions.
pub fn estimate_trace_constant(
    mesh: &MeshRef,
    w: &Weight,
    sigma: &MeasureData,
    p: f64,
    q: f64,
    restarts: usize,
) -> Result<TraceEstimate> {
    estimate_trace_constant_seeded(mesh, w, sigma, p, q, restarts, &[])
}

/// [`estimate_trace_constant`] with extra deterministic starts (previous-run
/// maximizers, capacitary potentials).
pub fn estimate_trace_constant_seeded(
    mesh: &MeshRef,
    w: &Weight,
    sigma: &MeasureData,
    p: f64,
    q: f64,
    restarts: usize,
    extra_starts: &[DiscreteFunction],
) -> Result<TraceEstimate> {
    validate_upper_triangle(p, q)?;
    rayleigh_ascent(mesh, w, sigma, p, q, NormKind::Strong, restarts, extra_starts, 600)
}

/// Weak-type counterpart with the Lorentz quasinorm in the numerator.
pub fn estimate_weak_trace_constant(
    mesh: &MeshRef,
    w: &Weight,
    sigma: &MeasureData,
    p: f64,
    q: f64,
    restarts: usize,
) -> Result<TraceEstimate> {
    estimate_weak_trace_constant_seeded(mesh, w, sigma, p, q, restarts, &[])
}

pub fn estimate_weak_trace_constant_seeded(
    mesh: &MeshRef,
    w: &Weight,
    sigma: &MeasureData,
    p: f64,
    q: f64,
    restarts: usize,
    extra_starts: &[DiscreteFunction],
) -> Result<TraceEstimate> {
    validate_upper_triangle(p, q)?;
    rayleigh_ascent(mesh, w, sigma, p, q, NormKind::Weak, restarts, extra_starts, 600)
}

fn validate_upper_triangle(p: f64, q: f64) -> Result<()> {
    if !(p > 1.0) {
        return Err(Error::param("p", "exponent must satisfy p > 1"));
    }
    if !(0.0 < q && q < p) {
        return Err(Error::param("q", format!("exponent must satisfy 0 < q < p = {p}, got {q}")));
    }
    Ok(())
}

/// Numerator norm for the chosen kind.
fn numerator(f: &DiscreteFunction, sigma: &MeasureData, q: f64, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::Strong => lq_norm(f, sigma, q),
        NormKind::Weak => weak_lq_norm(f, sigma, q),
    }
}

/// Projected normalized ascent of `R(f) = N(f) / ‖∇f‖_{L^p(w)}` over the cone
/// of nonnegative zero-trace functions, multi-start and deterministic.
#[allow(clippy::too_many_arguments)]
fn rayleigh_ascent(
    mesh: &MeshRef,
    w: &Weight,
    sigma: &MeasureData,
    p: f64,
    q: f64,
    kind: NormKind,
    restarts: usize,
    extra_starts: &[DiscreteFunction],
    max_iter: usize,
) -> Result<TraceEstimate> {
    if !same_mesh(mesh, sigma.mesh()) || !same_mesh(mesh, w.mesh()) {
        return Err(Error::MeshMismatch);
    }
    if sigma.total_mass() == 0.0 {
        return Ok(TraceEstimate {
            p,
            q,
            value: 0.0,
            maximizer: DiscreteFunction::zeros(mesh),
            restarts: 0,
            iterations: 0,
        });
    }

    let starts = build_starts(mesh, w, sigma, p, restarts.max(1), extra_starts);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut total_iters = 0usize;
    let mut used = 0usize;

    for start in &starts {
        let mut f = normalize_sup(start.clone());
        if f.iter().all(|&v| v == 0.0) {
            continue;
        }
        used += 1;
        let mut phi = match quotient_ln(mesh, w, sigma, p, q, kind, &f)? {
            Some(v) => v,
            None => continue,
        };
        let mut step = 0.05;
        for _ in 0..max_iter {
            total_iters += 1;
            let grad = quotient_gradient(mesh, w, sigma, p, q, kind, &f)?;
            let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if gmax == 0.0 || !gmax.is_finite() {
                break;
            }
            let mut advanced = false;
            for _ in 0..30 {
                let mut trial = f.clone();
                for i in 0..trial.len() {
                    if !mesh.is_boundary(i) {
                        trial[i] = (trial[i] + step * grad[i] / gmax).max(0.0);
                    }
                }
                let trial = normalize_sup(trial);
                match quotient_ln(mesh, w, sigma, p, q, kind, &trial)? {
                    Some(v) if v > phi + 1e-15 => {
                        f = trial;
                        phi = v;
                        step = (step * 1.5).min(0.5);
                        advanced = true;
                        break;
                    }
                    _ => step *= 0.5,
                }
            }
            if !advanced || step < 1e-14 {
                break;
            }
        }
        let func = DiscreteFunction::from_values(mesh, f, true)?;
        let value = match exact_quotient(&func, w, sigma, p, q, kind)? {
            Some(v) => v,
            None => continue,
        };
        if best.as_ref().map_or(true, |(b, _)| value > *b) {
            best = Some((value, func.values().to_vec()));
        }
    }

    match best {
        Some((value, values)) => Ok(TraceEstimate {
            p,
            q,
            value,
            maximizer: DiscreteFunction::from_values(mesh, values, true)?,
            restarts: used,
            iterations: total_iters,
        }),
        None => Err(Error::Degenerate(
            "all restarts degenerate: σ gives no mass to the interior".into(),
        )),
    }
}

/// Deterministic start family: the measure-data potential (exact maximizer at
/// q = 1), an interior plateau, and boundary-layer bumps `δ^a`.
fn build_starts(
    mesh: &MeshRef,
    w: &Weight,
    sigma: &MeasureData,
    p: f64,
    restarts: usize,
    extra: &[DiscreteFunction],
) -> Vec<Vec<f64>> {
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Ok(a) = OperatorA::isotropic(p) {
        // restrict(0, ..) keeps every mass but clears the infinite-mass flag
        let finite = sigma.restrict(0.0, None);
        if let Ok((u, rep)) = solve_warm(mesh, w, &a, &finite, &SolverOptions::default(), None) {
            if rep.converged && u.sup_norm() > 0.0 {
                starts.push(u.values().to_vec());
            }
        }
    }
    let plateau: Vec<f64> = (0..mesh.n_nodes())
        .map(|i| if mesh.is_boundary(i) { 0.0 } else { 1.0 })
        .collect();
    starts.push(plateau);
    let mut exponent = 0.25;
    while starts.len() < restarts.max(5) {
        let bump: Vec<f64> = (0..mesh.n_nodes()).map(|i| mesh.delta(i).powf(exponent)).collect();
        starts.push(bump);
        exponent = if exponent < 1.0 { exponent * 2.0 } else { exponent + 0.5 };
    }
    starts.truncate(restarts.max(2));
    for f in extra {
        starts.push(f.values().iter().map(|v| v.max(0.0)).collect());
    }
    starts
}

fn normalize_sup(mut f: Vec<f64>) -> Vec<f64> {
    let sup = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sup > 0.0 {
        for v in f.iter_mut() {
            *v /= sup;
        }
    }
    f
}

/// `ln R(f)`; `None` when the quotient is degenerate (zero numerator/energy).
fn quotient_ln(
    mesh: &MeshRef,
    w: &Weight,
    sigma: &MeasureData,
    p: f64,
    q: f64,
    kind: NormKind,
    f: &[f64],
) -> Result<Option<f64>> {
    let func = DiscreteFunction::from_values(mesh, f.to_vec(), true)?;
    let n = numerator(&func, sigma, q, kind)?;
    let e = weighted_p_energy(&func, w, p)?;
    if n <= 0.0 || e <= 0.0 {
        return Ok(None);
    }
    Ok(Some(n.ln() - e.ln() / p))
}

fn exact_quotient(
    f: &DiscreteFunction,
    w: &Weight,
    sigma: &MeasureData,
    p: f64,
    q: f64,
    kind: NormKind,
) -> Result<Option<f64>> {
    let n = numerator(f, sigma, q, kind)?;
    let e = weighted_p_energy(f, w, p)?;
    if n <= 0.0 || e <= 0.0 {
        return Ok(None);
    }
    Ok(Some(n / e.powf(1.0 / p)))
}

/// Gradient of `ln R`: `∇ln N − S/E` where `S_i = ∫|∇f|^{p-2}∇f·∇φ_i w dx`.
fn quotient_gradient(
    mesh: &MeshRef,
    w: &Weight,
    sigma: &MeasureData,
    p: f64,
    q: f64,
    kind: NormKind,
    f: &[f64],
) -> Result<Vec<f64>> {
    let func = DiscreteFunction::from_values(mesh, f.to_vec(), true)?;
    let n = mesh.n_nodes();
    let mut grad = vec![0.0; n];

    // numerator part
    match kind {
        NormKind::Strong => {
            let nq = measure_power_integral(&func, sigma, q)?;
            if nq > 0.0 {
                let floor = 1e-12;
                for i in 0..n {
                    let m = sigma.node_masses()[i];
                    if m > 0.0 {
                        grad[i] += m * f[i].max(floor).powf(q - 1.0) / nq;
                    }
                }
                for atom in sigma.atoms() {
                    if atom.mass > 0.0 {
                        let v = atom.eval(&func).max(1e-12);
                        let c = atom.mass * v.powf(q - 1.0) / nq;
                        for &(node, lam) in atom.hat_weights() {
                            grad[node] += c * lam;
                        }
                    }
                }
            }
        }
        NormKind::Weak => {
            // subgradient at the active level: the node (or atom) attaining
            // the sup of v · σ({f ≥ v})^{1/q}
            let mut pairs: Vec<(f64, f64, Option<usize>)> = (0..n)
                .filter(|&i| sigma.node_masses()[i] > 0.0)
                .map(|i| (f[i], sigma.node_masses()[i], Some(i)))
                .collect();
            for atom in sigma.atoms() {
                if atom.mass > 0.0 {
                    pairs.push((atom.eval(&func), atom.mass, None));
                }
            }
            pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let mut tail = 0.0;
            let mut best = 0.0f64;
            let mut active: Option<usize> = None;
            let mut active_atom: Option<usize> = None;
            for (idx, (v, m, node)) in pairs.iter().enumerate() {
                tail += m;
                let score = v * tail.powf(1.0 / q);
                if *v > 0.0 && score > best {
                    best = score;
                    active = *node;
                    active_atom = if node.is_none() { Some(idx) } else { None };
                }
            }
            if best > 0.0 {
                if let Some(i) = active {
                    grad[i] += 1.0 / f[i].max(1e-12);
                } else if active_atom.is_some() {
                    // attained at an atom: push its carrier nodes
                    let mut sorted_atoms: Vec<_> =
                        sigma.atoms().iter().filter(|a| a.mass > 0.0).collect();
                    sorted_atoms.sort_by(|a, b| {
                        b.eval(&func).partial_cmp(&a.eval(&func)).unwrap()
                    });
                    if let Some(atom) = sorted_atoms.first() {
                        let v = atom.eval(&func).max(1e-12);
                        for &(node, lam) in atom.hat_weights() {
                            grad[node] += lam / v;
                        }
                    }
                }
            }
        }
    }

    // energy part: subtract S/E
    let e = weighted_p_energy(&func, w, p)?;
    if e > 0.0 {
        let dim = mesh.dimension();
        let mut g = [0.0f64; 2];
        for t in 0..mesh.n_simplices() {
            let nodes = mesh.simplex(t);
            g[..dim].fill(0.0);
            for (local, &node) in nodes.iter().enumerate() {
                let gn = mesh.basis_gradient(t, local);
                for d in 0..dim {
                    g[d] += f[node] * gn[d];
                }
            }
            let m: f64 = g[..dim].iter().map(|x| x * x).sum();
            if m == 0.0 {
                continue;
            }
            let fac = mesh.volume(t) * w.simplex_value(t) * m.powf((p - 2.0) / 2.0);
            for (local, &node) in nodes.iter().enumerate() {
                let gn = mesh.basis_gradient(t, local);
                let mut s = 0.0;
                for d in 0..dim {
                    s += g[d] * gn[d];
                }
                grad[node] -= fac * s / e;
            }
        }
    }

    for i in 0..n {
        if mesh.is_boundary(i) {
            grad[i] = 0.0;
        }
    }
    Ok(grad)
}

/// Trace-constant estimates across uniform refinements.
#[derive(Clone, Debug)]
pub struct RefinementScan {
    /// Estimate per level, coarsest first.
    pub values: Vec<f64>,
    pub node_counts: Vec<usize>,
    /// Largest relative change between consecutive levels.
    pub max_drift: f64,
}

impl RefinementScan {
    pub fn stable(&self, drift_tol: f64) -> bool {
        self.max_drift <= drift_tol
    }
}

/// Estimate the trace constant on `levels` successive refinements of `mesh`,
/// warm-starting each level with the previous maximizer. The symbolic weight
/// (`w = δ^t`) and measure are re-instantiated per level.
pub fn trace_refinement_scan(
    mesh: &MeshRef,
    weight_t: f64,
    sigma: &crate::calculus::MeasureSpec,
    p: f64,
    q: f64,
    levels: usize,
    restarts: usize,
) -> Result<RefinementScan> {
    if levels == 0 {
        return Err(Error::param("levels", "need at least one level"));
    }
    let mut current = mesh.clone();
    let mut values = Vec::new();
    let mut node_counts = Vec::new();
    let mut warm: Option<DiscreteFunction> = None;
    for level in 0..levels {
        if level > 0 {
            current = std::sync::Arc::new(current.refined()?);
        }
        let w = power_weight(&current, weight_t);
        let sig = sigma.instantiate(&current)?;
        let extra: Vec<DiscreteFunction> = warm
            .as_ref()
            .map(|f| vec![f.transfer_to(&current, true)])
            .unwrap_or_default();
        let est = estimate_trace_constant_seeded(&current, &w, &sig, p, q, restarts, &extra)?;
        values.push(est.value);
        node_counts.push(current.n_nodes());
        warm = Some(est.maximizer);
    }
    let max_drift = values
        .windows(2)
        .map(|pair| (pair[1] - pair[0]).abs() / pair[0].abs().max(f64::MIN_POSITIVE))
        .fold(0.0f64, f64::max);
    Ok(RefinementScan {
        values,
        node_counts,
        max_drift,
    })
}

/// Condenser capacity result.
#[derive(Clone, Debug)]
pub struct CapacityResult {
    pub mask: Vec<bool>,
    pub value: f64,
    pub minimizer: DiscreteFunction,
    pub report: SolveReport,
}

/// Variational `(p, w)`-capacity of the condenser `(K, Ω)`: minimize
/// `∫|∇u|^p w dx` over zero-trace `u` pinned to 1 on `K`.
pub fn capacity(mesh: &MeshRef, w: &Weight, p: f64, mask: &[bool]) -> Result<CapacityResult> {
    if mask.len() != mesh.n_nodes() {
        return Err(Error::MeshMismatch);
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::param("K", "condenser set is empty"));
    }
    for i in 0..mesh.n_nodes() {
        if mask[i] && mesh.is_boundary(i) {
            return Err(Error::param("K", format!("node {i} of K touches the boundary")));
        }
    }
    validate_weight_exponent(w, p)?;
    let a = OperatorA::isotropic(p)?;
    let pins: Vec<(usize, f64)> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| (i, 1.0))
        .collect();
    let load = vec![0.0; mesh.n_nodes()];
    let opts = SolverOptions::default();
    let (values, report) = solve_pinned(mesh, w, &a, &load, &pins, &opts)?;
    if !report.converged {
        return Err(Error::Solver(format!(
            "condenser solve did not converge ({:?})",
            report.status
        )));
    }
    let minimizer = DiscreteFunction::from_values(mesh, values, true)?;
    let value = weighted_p_energy(&minimizer, w, p)?;
    Ok(CapacityResult {
        mask: mask.to_vec(),
        value,
        minimizer,
        report,
    })
}

/// One dyadic superlevel set in a capacitary-condition table.
#[derive(Clone, Debug)]
pub struct CapacitaryRow {
    pub j: i32,
    pub level: f64,
    pub sigma_mass: f64,
    pub capacity: f64,
    /// Smallest `C` with `σ(K)^{1/q} ≤ C · cap^{1/p}` for this set.
    pub required_c2: f64,
    /// Smallest `C` with `σ(K) ≤ C (cap^{q/p} + 1)` for this set.
    pub required_c3: f64,
}

#[derive(Clone, Debug)]
pub struct CapacitaryReport {
    pub rows: Vec<CapacitaryRow>,
    pub c2_min: f64,
    pub c3_min: f64,
    /// Whether the supplied constant dominates every row.
    pub c2_admissible: bool,
    /// Condenser potentials of the level sets, usable as ascent starts.
    pub potentials: Vec<DiscreteFunction>,
}

/// Tabulate `σ(E_j)` vs `cap_{p,w}(E_j, Ω)` over the dyadic superlevel sets
/// `E_j = {u > 2^j}` and report the smallest admissible constants in the
/// capacitary condition and its relaxed form.
pub fn capacitary_condition_check(
    mesh: &MeshRef,
    w: &Weight,
    sigma: &MeasureData,
    p: f64,
    q: f64,
    c2: f64,
    u: &DiscreteFunction,
) -> Result<CapacitaryReport> {
    validate_upper_triangle(p, q)?;
    if !same_mesh(mesh, u.mesh()) {
        return Err(Error::MeshMismatch);
    }
    let positive: Vec<f64> = u
        .values()
        .iter()
        .cloned()
        .filter(|&v| v > 0.0)
        .collect();
    if positive.is_empty() {
        return Err(Error::Degenerate("u has no positive values: empty level-set family".into()));
    }
    let vmax = positive.iter().cloned().fold(0.0f64, f64::max);
    let vmin = positive.iter().cloned().fold(f64::INFINITY, f64::min);
    let j_hi = vmax.log2().floor() as i32;
    let j_lo = vmin.log2().ceil() as i32;

    let mut rows = Vec::new();
    let mut potentials = Vec::new();
    for j in j_lo..=j_hi {
        let level = 2.0f64.powi(j);
        let mask: Vec<bool> = u.values().iter().map(|&v| v > level).collect();
        if !mask.iter().any(|&m| m) {
            continue;
        }
        let sigma_mass: f64 = sigma
            .node_masses()
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(s, _)| s)
            .sum::<f64>()
            + sigma
                .atoms()
                .iter()
                .filter(|a| a.eval(u) > level)
                .map(|a| a.mass)
                .sum::<f64>();
        let cap = capacity(mesh, w, p, &mask)?;
        let required_c2 = if cap.value > 0.0 {
            sigma_mass.powf(1.0 / q) / cap.value.powf(1.0 / p)
        } else if sigma_mass > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        let required_c3 = sigma_mass / (cap.value.powf(q / p) + 1.0);
        rows.push(CapacitaryRow {
            j,
            level,
            sigma_mass,
            capacity: cap.value,
            required_c2,
            required_c3,
        });
        potentials.push(cap.minimizer);
    }
    if rows.is_empty() {
        return Err(Error::Degenerate("no nonempty dyadic level set".into()));
    }
    let c2_min = rows.iter().map(|r| r.required_c2).fold(0.0f64, f64::max);
    let c3_min = rows.iter().map(|r| r.required_c3).fold(0.0f64, f64::max);
    Ok(CapacitaryReport {
        rows,
        c2_min,
        c3_min,
        c2_admissible: c2_min <= c2 * (1.0 + 1e-9),
        potentials,
    })
}

/// Hardy-quotient estimate: `sup ∫|f|^p δ^{t-p} dx / ∫|∇f|^p δ^t dx`.
#[derive(Clone, Debug)]
pub struct HardyEstimate {
    /// Ascent-based estimate (a certified lower bound).
    pub constant: f64,
    /// Dense generalized-eigensolve value, available for p = 2.
    pub oracle_constant: Option<f64>,
    pub maximizer: DiscreteFunction,
}

/// Estimate the best constant of the Hardy inequality
/// `∫|f|^p δ^{t-p} dx ≤ C ∫|∇f|^p δ^t dx` for `-1 < t < p - 1`.
///
/// For `p = 2` the lumped quotient is a generalized symmetric eigenproblem;
/// the dense brute-force eigensolve is returned as an oracle next to the
/// ascent value.
pub fn hardy_check(mesh: &MeshRef, p: f64, t: f64, restarts: usize) -> Result<HardyEstimate> {
    if !(p > 1.0) {
        return Err(Error::param("p", "exponent must satisfy p > 1"));
    }
    if !(-1.0 < t && t < p - 1.0) {
        return Err(Error::param(
            "t",
            format!("Hardy inequality requires -1 < t < p - 1 = {}, got {t}", p - 1.0),
        ));
    }
    let w = power_weight(mesh, t);
    let nu = MeasureData::power_density(mesh, p - t)?;
    // the quotient is the p-th power of the trace quotient at q = p
    let est = rayleigh_ascent(mesh, &w, &nu, p, p, NormKind::Strong, restarts.max(5), &[], 2000)?;
    let constant = est.value.powf(p);
    let oracle_constant = if p == 2.0 {
        Some(hardy_dense_oracle(mesh, &w, &nu)?)
    } else {
        None
    };
    Ok(HardyEstimate {
        constant,
        oracle_constant,
        maximizer: est.maximizer,
    })
}

/// Dense brute-force solve of `M f = λ K f` over the interior nodes, where
/// `M = diag(ν)` lumps the numerator measure and `K` is the weighted
/// stiffness matrix; returns the largest eigenvalue of `M^{1/2} K^{-1} M^{1/2}`.
fn hardy_dense_oracle(mesh: &MeshRef, w: &Weight, nu: &MeasureData) -> Result<f64> {
    let free: Vec<usize> = mesh.interior_nodes().collect();
    let free_pos: Vec<Option<usize>> = {
        let mut pos = vec![None; mesh.n_nodes()];
        for (k, &i) in free.iter().enumerate() {
            pos[i] = Some(k);
        }
        pos
    };
    let n = free.len();
    let mut bw = 0usize;
    for t in 0..mesh.n_simplices() {
        let nodes = mesh.simplex(t);
        for &i in nodes {
            for &j in nodes {
                if let (Some(pi), Some(pj)) = (free_pos[i], free_pos[j]) {
                    bw = bw.max(pi.abs_diff(pj));
                }
            }
        }
    }
    let mut k = BandMatrix::zeros(n, bw);
    let dim = mesh.dimension();
    for t in 0..mesh.n_simplices() {
        let nodes = mesh.simplex(t);
        let scale = mesh.volume(t) * w.simplex_value(t);
        for (li, &ni) in nodes.iter().enumerate() {
            let Some(pi) = free_pos[ni] else { continue };
            let gi = mesh.basis_gradient(t, li);
            for (lj, &nj) in nodes.iter().enumerate() {
                let Some(pj) = free_pos[nj] else { continue };
                if pj > pi {
                    continue;
                }
                let gj = mesh.basis_gradient(t, lj);
                let mut v = 0.0;
                for d in 0..dim {
                    v += gi[d] * gj[d];
                }
                k.add(pi, pj, scale * v);
            }
        }
    }
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::Solver("stiffness matrix not positive definite".into()))?;

    let sqrt_m: Vec<f64> = free.iter().map(|&i| nu.node_masses()[i].max(0.0).sqrt()).collect();
    // C = M^{1/2} K^{-1} M^{1/2}, built column by column from banded solves
    let mut c = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = sqrt_m[j];
        let col = chol.solve(&e);
        e[j] = 0.0;
        for i in 0..n {
            c[(i, j)] = sqrt_m[i] * col[i];
        }
    }
    // symmetrize roundoff before the eigensolve
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    Ok(eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Quantities and bound checks of the strong-trace energy sandwich.
#[derive(Clone, Debug)]
pub struct Thm11Report {
    pub p: f64,
    pub q: f64,
    pub c1_hat: f64,
    /// `‖∇ u^{(p-1)/(p-q)}‖_{L^p(w)}^{p-q}`
    pub energy_term: f64,
    /// `(∫ u^{q(p-1)/(p-q)} dσ)^{(p-q)/(qp)}`
    pub measure_term: f64,
    /// Constructive upper proxy for the best constant.
    pub c1_plus: f64,
    pub lower_energy_ok: bool,
    pub upper_energy_ok: bool,
    pub lower_measure_ok: bool,
    pub upper_measure_ok: bool,
    pub pass: bool,
}

/// Verify the two-sided energy bounds linking the best trace constant with
/// the potential `u = W_A σ`:
/// `(α/β)^p α^{-1} C^q ≤ ‖∇u^{(p-1)/(p-q)}‖^{p-q} ≤ (1/q)((p-1)/(p-q))^{p-1} α^{-1} C^q`
/// and the companion bounds on `(∫ u^{q(p-1)/(p-q)} dσ)^{(p-q)/(qp)}`.
pub fn verify_thm11_sandwich(
    mesh: &MeshRef,
    w: &Weight,
    a: &OperatorA,
    sigma: &MeasureData,
    p: f64,
    q: f64,
    rel_tol: f64,
) -> Result<Thm11Report> {
    validate_upper_triangle(p, q)?;
    let sched = ExhaustionSchedule::for_mesh(mesh);
    let pot = wa_potential(mesh, w, a, sigma, &sched, &SolverOptions::default())?;
    if pot.verdict == PotentialVerdict::Diverging {
        return Err(Error::Solver("potential diverges; the sandwich does not apply".into()));
    }
    let u = &pot.function;
    let s = (p - 1.0) / (p - q);
    let us = u.powf(s);
    let energy_term = weighted_p_energy(&us, w, p)?.powf((p - q) / p);
    let integral = measure_power_integral(u, sigma, q * s)?;
    let measure_term = integral.powf((p - q) / (q * p));

    let sigma_trace = sigma.restrict(0.0, None);
    let est = estimate_trace_constant(mesh, w, &sigma_trace, p, q, 5)?;
    let c1 = est.value;
    let (alpha, beta) = (a.alpha(), a.beta());
    let c1_plus = beta.powf(p / q) * alpha.powf((1.0 - p) / q) * energy_term.powf(1.0 / q);

    let lower_energy = (alpha / beta).powf(p) / alpha * c1.powf(q);
    let upper_energy = (1.0 / q) * s.powf(p - 1.0) / alpha * c1_plus.powf(q);
    let lower_measure = (alpha / beta) * alpha.powf(-1.0 / p) * c1;
    let upper_measure = q.powf(-1.0 / p) * s.powf((p - 1.0) / p) * alpha.powf(-1.0 / p) * c1_plus;

    let lower_energy_ok = lower_energy <= energy_term * (1.0 + rel_tol);
    let upper_energy_ok = energy_term <= upper_energy * (1.0 + rel_tol);
    let lower_measure_ok = lower_measure <= measure_term * (1.0 + rel_tol);
    let upper_measure_ok = measure_term <= upper_measure * (1.0 + rel_tol);
    Ok(Thm11Report {
        p,
        q,
        c1_hat: c1,
        energy_term,
        measure_term,
        c1_plus,
        lower_energy_ok,
        upper_energy_ok,
        lower_measure_ok,
        upper_measure_ok,
        pass: lower_energy_ok && upper_energy_ok && lower_measure_ok && upper_measure_ok,
    })
}

/// Weak-type sandwich quantities.
#[derive(Clone, Debug)]
pub struct Thm51Report {
    pub p: f64,
    pub q: f64,
    pub c2_hat: f64,
    /// `‖W_A σ‖_{L^{q(p-1)/(p-q),∞}(σ)}^{(p-1)/p}`
    pub weak_norm_term: f64,
    pub c2_plus: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub pass: bool,
}

/// Verify the weak-type sandwich
/// `(α/β) α^{-1/p} C₂ ≤ ‖W_A σ‖_{L^{q(p-1)/(p-q),∞}(σ)}^{(p-1)/p} ≤ 4^{(p-1)/(p-q)} α^{-1/p} C₂`.
pub fn verify_thm51_weak(
    mesh: &MeshRef,
    w: &Weight,
    a: &OperatorA,
    sigma: &MeasureData,
    p: f64,
    q: f64,
    rel_tol: f64,
) -> Result<Thm51Report> {
    validate_upper_triangle(p, q)?;
    let sched = ExhaustionSchedule::for_mesh(mesh);
    let pot = wa_potential(mesh, w, a, sigma, &sched, &SolverOptions::default())?;
    if pot.verdict == PotentialVerdict::Diverging {
        return Err(Error::Solver("potential diverges; the weak sandwich does not apply".into()));
    }
    let exponent = q * (p - 1.0) / (p - q);
    let weak_norm = weak_lq_norm(&pot.function, sigma, exponent)?;
    let weak_norm_term = weak_norm.powf((p - 1.0) / p);

    let sigma_trace = sigma.restrict(0.0, None);
    let est = estimate_weak_trace_constant(mesh, w, &sigma_trace, p, q, 5)?;
    let c2 = est.value;
    let (alpha, beta) = (a.alpha(), a.beta());
    let c2_plus = (beta / alpha) * alpha.powf(1.0 / p) * weak_norm_term;

    let lower = (alpha / beta) * alpha.powf(-1.0 / p) * c2;
    let upper = 4.0f64.powf((p - 1.0) / (p - q)) * alpha.powf(-1.0 / p) * c2_plus;
    let lower_ok = lower <= weak_norm_term * (1.0 + rel_tol);
    let upper_ok = weak_norm_term <= upper * (1.0 + rel_tol);
    Ok(Thm51Report {
        p,
        q,
        c2_hat: c2,
        weak_norm_term,
        c2_plus,
        lower_ok,
        upper_ok,
        pass: lower_ok && upper_ok,
    })
}

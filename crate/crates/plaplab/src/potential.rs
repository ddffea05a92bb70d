//! Potentials of possibly infinite measures via compact exhaustion, truncated
//! Wolff potentials, and the two-sided pointwise estimate.

use crate::calculus::{DiscreteFunction, MeasureData};
use crate::error::{Error, Result};
use crate::mesh::{same_mesh, MeshRef, Weight};
use crate::solver::{solve_warm, OperatorA, SolverOptions};

/// Relative stage-increment threshold of the Cauchy test.
const CAUCHY_RTOL: f64 = 1e-6;
/// Number of consecutive Cauchy stages required to declare convergence.
const CAUCHY_STAGES: usize = 2;
/// Relative growth marking a "still rising" stage.
const GROWTH_FACTOR: f64 = 1.10;
/// Consecutive growth stages (after `k_min`) that trigger a divergence verdict.
const GROWTH_STAGES: usize = 5;

/// Compact exhaustion `F_k = {δ ≥ r_k}` with `r_k = r0 · ratio^{-k}` and an
/// optional cap `M_k = m0 · growth^k` on the lumped node masses.
#[derive(Clone, Debug)]
pub struct ExhaustionSchedule {
    pub r0: f64,
    pub ratio: f64,
    pub k_max: usize,
    /// `(m0, growth)`
    pub mass_cap: Option<(f64, f64)>,
    /// Earliest stage at which the divergence heuristic may fire.
    pub k_min: usize,
}

impl ExhaustionSchedule {
    /// Default schedule: `r0` = half the inradius, ratio 2, 12 stages.
    pub fn for_mesh(mesh: &MeshRef) -> ExhaustionSchedule {
        let inradius = mesh.deltas().iter().cloned().fold(0.0f64, f64::max);
        ExhaustionSchedule {
            r0: inradius / 2.0,
            ratio: 2.0,
            k_max: 12,
            mass_cap: None,
            k_min: 2,
        }
    }

    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.ratio = ratio;
        self
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn with_mass_cap(mut self, m0: f64, growth: f64) -> Self {
        self.mass_cap = Some((m0, growth));
        self
    }

    pub fn radius(&self, k: usize) -> f64 {
        self.r0 * self.ratio.powi(-(k as i32))
    }

    pub fn cap(&self, k: usize) -> Option<f64> {
        self.mass_cap.map(|(m0, g)| m0 * g.powi(k as i32))
    }

    /// Truncation of stage `k`; nondecreasing in `k` by construction.
    pub fn stage_measure(&self, sigma: &MeasureData, k: usize) -> MeasureData {
        sigma.restrict(self.radius(k), self.cap(k))
    }

    fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0) || !(self.ratio > 1.0) || self.k_max == 0 {
            return Err(Error::param(
                "schedule",
                "need r0 > 0, ratio > 1 and at least one stage",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialVerdict {
    Converged,
    Diverging,
}

/// One exhaustion stage in the log.
#[derive(Clone, Debug)]
pub struct StageLog {
    pub k: usize,
    pub radius: f64,
    pub sigma_mass: f64,
    pub sup: f64,
    pub energy: f64,
    pub residual: f64,
    pub sup_diff: f64,
    pub inner_iterations: usize,
}

impl StageLog {
    pub fn csv_header() -> &'static str {
        "k,r_k,sigma_mass,sup_u,energy,residual,sup_diff,inner_iterations"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            self.k,
            self.radius,
            self.sigma_mass,
            self.sup,
            self.energy,
            self.residual,
            self.sup_diff,
            self.inner_iterations
        )
    }
}

/// Outcome of an exhaustion run.
#[derive(Clone, Debug)]
pub struct PotentialResult {
    /// Last-stage solution (the limit candidate when converged).
    pub function: DiscreteFunction,
    pub stages: Vec<StageLog>,
    pub verdict: PotentialVerdict,
    pub monotonicity_violations: usize,
}

/// Shared stage-sequence dichotomy: Cauchy stabilization vs. sustained growth.
pub(crate) struct StageTracker {
    prev_sup: Option<f64>,
    cauchy_streak: usize,
    growth_streak: usize,
    k_min: usize,
    blow_up_threshold: f64,
}

pub(crate) enum StageDecision {
    Continue,
    Converged,
    Diverging,
}

impl StageTracker {
    pub fn new(k_min: usize, blow_up_threshold: f64) -> StageTracker {
        StageTracker {
            prev_sup: None,
            cauchy_streak: 0,
            growth_streak: 0,
            k_min,
            blow_up_threshold,
        }
    }

    pub fn observe(&mut self, k: usize, sup: f64, sup_diff: f64) -> StageDecision {
        if sup > self.blow_up_threshold {
            return StageDecision::Diverging;
        }
        if sup_diff <= CAUCHY_RTOL * (1.0 + sup) {
            self.cauchy_streak += 1;
        } else {
            self.cauchy_streak = 0;
        }
        if let Some(prev) = self.prev_sup {
            if sup >= GROWTH_FACTOR * prev && prev > 0.0 {
                self.growth_streak += 1;
            } else {
                self.growth_streak = 0;
            }
        }
        self.prev_sup = Some(sup);
        if self.cauchy_streak >= CAUCHY_STAGES {
            StageDecision::Converged
        } else if k > self.k_min && self.growth_streak >= GROWTH_STAGES {
            StageDecision::Diverging
        } else {
            StageDecision::Continue
        }
    }
}

/// Realize `W_A σ` as the monotone limit of the truncated solves
/// `u_k = W^0_A σ_k`, or diagnose `W_A σ ≡ ∞` numerically.
pub fn wa_potential(
    mesh: &MeshRef,
    w: &Weight,
    a: &OperatorA,
    sigma: &MeasureData,
    sched: &ExhaustionSchedule,
    opts: &SolverOptions,
) -> Result<PotentialResult> {
    if !same_mesh(mesh, sigma.mesh()) || !same_mesh(mesh, w.mesh()) {
        return Err(Error::MeshMismatch);
    }
    sched.validate()?;

    let mut prev = DiscreteFunction::zeros(mesh);
    let mut stages = Vec::new();
    let mut verdict = None;
    let mut monotonicity_violations = 0usize;
    let mut tracker = StageTracker::new(sched.k_min, opts.blow_up_threshold);

    for k in 1..=sched.k_max {
        let sigma_k = sched.stage_measure(sigma, k);
        let (u_k, report) = solve_warm(mesh, w, a, &sigma_k, opts, Some(&prev))
            .map_err(|e| Error::Stage { stage: k, reason: e.to_string() })?;
        if report.blow_up {
            stages.push(StageLog {
                k,
                radius: sched.radius(k),
                sigma_mass: sigma_k.total_mass(),
                sup: report.sup_norm,
                energy: report.energy,
                residual: report.residual,
                sup_diff: f64::INFINITY,
                inner_iterations: report.iterations,
            });
            verdict = Some(PotentialVerdict::Diverging);
            prev = u_k;
            break;
        }
        if !report.converged {
            return Err(Error::Stage {
                stage: k,
                reason: format!("inner solver did not converge ({:?})", report.status),
            });
        }

        let mono_tol = 10.0 * opts.tol * (1.0 + u_k.sup_norm());
        monotonicity_violations += prev
            .values()
            .iter()
            .zip(u_k.values())
            .filter(|(old, new)| **new < **old - mono_tol)
            .count();
        let sup_diff: f64 = prev
            .values()
            .iter()
            .zip(u_k.values())
            .map(|(old, new)| (new - old).abs())
            .fold(0.0, f64::max);
        let sup = u_k.sup_norm();

        stages.push(StageLog {
            k,
            radius: sched.radius(k),
            sigma_mass: sigma_k.total_mass(),
            sup,
            energy: report.energy,
            residual: report.residual,
            sup_diff,
            inner_iterations: report.iterations,
        });
        prev = u_k;

        match tracker.observe(k, sup, sup_diff) {
            StageDecision::Continue => {}
            StageDecision::Converged => {
                verdict = Some(PotentialVerdict::Converged);
                break;
            }
            StageDecision::Diverging => {
                verdict = Some(PotentialVerdict::Diverging);
                break;
            }
        }
    }

    // Ran out of stages without stabilizing: the dichotomy reports divergence.
    let verdict = verdict.unwrap_or(PotentialVerdict::Diverging);
    Ok(PotentialResult {
        function: prev,
        stages,
        verdict,
        monotonicity_violations,
    })
}

/// Truncated Wolff potential
/// `W^R_{1,p,w} μ(x) = ∫_0^R (r^p μ(B(x,r)) / w(B(x,r)))^{1/(p-1)} dr/r`,
/// integrated by the trapezoid rule in log r on a lattice refined at every
/// radius where the discrete ball gains mass. The lower limit is tied to the
/// local mesh size, below which `μ(B)/w(B)` is lumping noise.
pub fn wolff_potential(
    sigma: &MeasureData,
    x: &[f64],
    radius: f64,
    p: f64,
    w: &Weight,
    n_quad: usize,
) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::param("R", "radius must be positive"));
    }
    if n_quad < 16 {
        return Err(Error::param("n_quad", "need at least 16 quadrature nodes"));
    }
    if !(p > 1.0) {
        return Err(Error::param("p", "exponent must satisfy p > 1"));
    }
    if !same_mesh(sigma.mesh(), w.mesh()) {
        return Err(Error::MeshMismatch);
    }
    let mesh = sigma.mesh();

    // Sorted (distance, μ-mass, w-mass) events; prefix sums give ball masses.
    let mut events: Vec<(f64, f64, f64)> = (0..mesh.n_nodes())
        .map(|i| {
            let d = mesh.squared_distance(mesh.node(i), x).sqrt();
            (d, sigma.node_masses()[i], w.node_lumped(i))
        })
        .collect();
    for atom in sigma.atoms() {
        let d = mesh.squared_distance(&atom.position, x).sqrt();
        events.push((d, atom.mass, 0.0));
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let dists: Vec<f64> = events.iter().map(|e| e.0).collect();
    let mut mu_prefix = Vec::with_capacity(events.len());
    let mut w_prefix = Vec::with_capacity(events.len());
    let (mut mu_acc, mut w_acc) = (0.0, 0.0);
    for &(_, m, wm) in &events {
        mu_acc += m;
        w_acc += wm;
        mu_prefix.push(mu_acc);
        w_prefix.push(w_acc);
    }
    // closed-ball mass at radius r
    let ball = |r: f64, prefix: &[f64]| -> f64 {
        let idx = dists.partition_point(|&d| d <= r);
        if idx == 0 {
            0.0
        } else {
            prefix[idx - 1]
        }
    };

    let r_min = mesh.local_spacing(x).min(radius / 2.0);
    if !(r_min > 0.0) {
        return Err(Error::UnderResolved("vanishing local mesh size".into()));
    }
    if ball(radius, &mu_prefix) == 0.0 {
        return Ok(0.0); // empty balls up to R
    }

    // Fixed-ratio log lattice anchored at r_min (n_quad/8 points per octave)
    // plus straddle pairs at each mass-gaining radius. Anchoring makes grids
    // for different R nested, so W^R is monotone in R without quadrature
    // noise: the integrand is piecewise `c·r^κ`, convex in log r.
    let per_octave = (n_quad as f64 / 8.0).max(2.0);
    let ratio_step = 2.0f64.powf(1.0 / per_octave);
    let mut grid: Vec<f64> = Vec::new();
    let mut r = r_min;
    while r < radius {
        grid.push(r);
        r *= ratio_step;
    }
    for &d in &dists {
        if d > r_min && d < radius {
            grid.push(d * (1.0 - 1e-9));
            grid.push(d * (1.0 + 1e-9));
        }
    }
    grid.push(radius);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    grid.retain(|&r| r >= r_min && r <= radius);

    let integrand = |r: f64| -> Result<f64> {
        let mu_b = ball(r, &mu_prefix);
        if mu_b == 0.0 {
            return Ok(0.0);
        }
        let w_b = if w.is_constant() {
            w.ball_mass(x, r)
        } else {
            ball(r, &w_prefix)
        };
        if w_b <= 0.0 {
            return Err(Error::UnderResolved(format!(
                "w(B(x, {r})) vanishes; refine the mesh near {x:?}"
            )));
        }
        Ok((r.powf(p) * mu_b / w_b).powf(1.0 / (p - 1.0)))
    };

    let mut total = 0.0;
    let mut prev_r = grid[0];
    let mut prev_f = integrand(prev_r)?;
    for &r in &grid[1..] {
        let f = integrand(r)?;
        total += (r / prev_r).ln() * 0.5 * (prev_f + f);
        prev_r = r;
        prev_f = f;
    }
    Ok(total)
}

/// Per-sample ratios of the two-sided Wolff estimate
/// `(1/C) W^R μ ≤ u ≤ C (inf_{B(x,R)} u + W^{2R} μ)`.
#[derive(Clone, Debug)]
pub struct WolffSampleRow {
    pub point: Vec<f64>,
    pub u_value: f64,
    pub wolff_r: f64,
    pub wolff_2r: f64,
    pub inf_ball: f64,
    /// `W^R μ / u`: the constant needed on the lower side.
    pub ratio_lower: f64,
    /// `u / (inf u + W^{2R} μ)`: the constant needed on the upper side.
    pub ratio_upper: f64,
}

#[derive(Clone, Debug)]
pub struct WolffSandwichReport {
    pub rows: Vec<WolffSampleRow>,
    /// Smallest single constant making every sample satisfy both bounds.
    pub required_c: f64,
    pub pass: bool,
}

/// Check the two-sided estimate at interior samples with `B(x, 2R) ⊂ Ω`.
pub fn wolff_sandwich_check(
    u: &DiscreteFunction,
    mu: &MeasureData,
    samples: &[Vec<f64>],
    radius: f64,
    c_cap: f64,
    p: f64,
    w: &Weight,
) -> Result<WolffSandwichReport> {
    let mesh = u.mesh();
    let mut rows = Vec::new();
    for x in samples {
        if mesh.delta_at(x) <= 2.0 * radius {
            continue;
        }
        let u_value = u.eval(x)?;
        let wolff_r = wolff_potential(mu, x, radius, p, w, 64)?;
        let wolff_2r = wolff_potential(mu, x, 2.0 * radius, p, w, 64)?;
        let r2 = radius * radius;
        let inf_ball = (0..mesh.n_nodes())
            .filter(|&i| mesh.squared_distance(mesh.node(i), x) <= r2)
            .map(|i| u.value(i))
            .fold(u_value, f64::min);
        let ratio_lower = safe_ratio(wolff_r, u_value);
        let ratio_upper = safe_ratio(u_value, inf_ball + wolff_2r);
        rows.push(WolffSampleRow {
            point: x.clone(),
            u_value,
            wolff_r,
            wolff_2r,
            inf_ball,
            ratio_lower,
            ratio_upper,
        });
    }
    if rows.is_empty() {
        return Err(Error::Degenerate(format!(
            "no sample has B(x, 2R) inside the domain for R = {radius}"
        )));
    }
    let required_c = rows
        .iter()
        .map(|r| r.ratio_lower.max(r.ratio_upper))
        .fold(0.0f64, f64::max);
    Ok(WolffSandwichReport {
        rows,
        required_c,
        pass: required_c.is_finite() && required_c <= c_cap,
    })
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

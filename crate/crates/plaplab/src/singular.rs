//! Singular semilinear problems `-div A(x, ∇u) = σ h(u)` with `h` positive and
//! nonincreasing, solved through smoothed approximating problems
//! `-div A(x, ∇u_k) = σ_k h(u_k + ε_k)` with `ε_k = 2^{-k}`, plus the
//! g-transform barrier and the equivalence verifications.

use crate::calculus::{
    measure_power_integral, weighted_p_energy, DiscreteFunction, MeasureData, MeasureSpec,
};
use crate::error::{Error, Result};
use crate::mesh::{power_weight, same_mesh, MeshRef, Weight};
use crate::potential::{
    wa_potential, ExhaustionSchedule, PotentialVerdict, StageDecision, StageTracker,
};
use crate::solver::{solve_warm, OperatorA, SolverOptions};
use crate::trace::trace_refinement_scan;

/// Picard under-relaxation weight.
const RELAXATION: f64 = 0.7;
/// Inner fixed-point tolerance factor: stop at `sup|Δu| ≤ 1e-8 (1 + sup u)`.
const INNER_RTOL: f64 = 1e-8;
const INNER_MAX: usize = 400;
/// A run that ends with stage increments above this fraction of `1 + sup u`
/// has not settled and is reported as diverging.
const SETTLED_RTOL: f64 = 1e-2;

/// Power-type singular nonlinearities with a closed-form g-transform.
///
/// Both families are `h(u) = u^{-γ}`: the decreasing family uses `γ > 0`
/// directly, the sublinear family `h(u) = u^{q-1}` has `γ = 1 - q ∈ (0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SingularKind {
    PowerDecreasing { gamma: f64 },
    PowerSublinear { q: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct SingularNonlinearity {
    pub kind: SingularKind,
    gamma: f64,
}

impl SingularNonlinearity {
    pub fn power_decreasing(gamma: f64) -> Result<SingularNonlinearity> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::param("gamma", "need γ > 0"));
        }
        Ok(SingularNonlinearity {
            kind: SingularKind::PowerDecreasing { gamma },
            gamma,
        })
    }

    pub fn power_sublinear(q: f64) -> Result<SingularNonlinearity> {
        if !(0.0 < q && q < 1.0) {
            return Err(Error::param("q", "sublinear nonlinearity needs 0 < q < 1"));
        }
        Ok(SingularNonlinearity {
            kind: SingularKind::PowerSublinear { q },
            gamma: 1.0 - q,
        })
    }

    /// Effective exponent: `h(u) = u^{-γ}`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn h(&self, u: f64) -> f64 {
        u.powf(-self.gamma)
    }

    /// `g(u) = ∫_0^u h(t)^{-1/(p-1)} dt = ((p-1)/(p-1+γ)) u^{(p-1+γ)/(p-1)}`,
    /// convex, increasing, `g(0) = 0`.
    pub fn g_scalar(&self, u: f64, p: f64) -> f64 {
        let e = (p - 1.0 + self.gamma) / (p - 1.0);
        (p - 1.0) / (p - 1.0 + self.gamma) * u.powf(e)
    }
}

/// Nodal application of the g-transform to a nonnegative function.
pub fn g_transform(u: &DiscreteFunction, nl: &SingularNonlinearity, p: f64) -> Result<DiscreteFunction> {
    if !(p > 1.0) {
        return Err(Error::param("p", "exponent must satisfy p > 1"));
    }
    let tol = -1e-12 * (1.0 + u.sup_norm());
    if u.values().iter().any(|&v| v < tol) {
        return Err(Error::param("u", "g-transform requires u ≥ 0"));
    }
    Ok(u.map(|v| nl.g_scalar(v.max(0.0), p), u.zero_trace()))
}

/// Per-stage record of the approximating problems.
#[derive(Clone, Debug)]
pub struct SingularStageLog {
    pub k: usize,
    pub smoothing: f64,
    pub inner_iterations: usize,
    pub sup_u: f64,
    /// `∫ |∇u_k|^p w dx`
    pub energy: f64,
    /// `min (W^0_A σ_k − g(u_k))`
    pub barrier_margin: f64,
    pub sup_diff: f64,
    pub sigma_mass: f64,
    /// Inner Picard increments, for envelope diagnostics.
    pub inner_diffs: Vec<f64>,
}

impl SingularStageLog {
    pub fn csv_header() -> &'static str {
        "k,smoothing,inner_iterations,sup_u,energy,barrier_margin,sup_diff,sigma_mass"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            self.k,
            self.smoothing,
            self.inner_iterations,
            self.sup_u,
            self.energy,
            self.barrier_margin,
            self.sup_diff,
            self.sigma_mass
        )
    }
}

#[derive(Clone, Debug)]
pub struct SingularRunReport {
    pub stages: Vec<SingularStageLog>,
    pub monotonicity_violations: usize,
    pub verdict: PotentialVerdict,
}

impl SingularRunReport {
    pub fn min_barrier_margin(&self) -> f64 {
        self.stages
            .iter()
            .map(|s| s.barrier_margin)
            .fold(f64::INFINITY, f64::min)
    }

    /// Smoothing parameter of the last stage actually run.
    pub fn final_smoothing(&self) -> f64 {
        self.stages.last().map(|s| s.smoothing).unwrap_or(1.0)
    }
}

/// Solve `-div A(x, ∇u) = σ h(u)`, `u = 0` on `∂Ω`, by stagewise smoothing
/// with an inner under-relaxed Picard iteration on the frozen right-hand side.
pub fn solve_singular(
    mesh: &MeshRef,
    w: &Weight,
    a: &OperatorA,
    sigma: &MeasureData,
    nl: &SingularNonlinearity,
    sched: &ExhaustionSchedule,
    opts: &SolverOptions,
) -> Result<(DiscreteFunction, SingularRunReport)> {
    solve_singular_from(mesh, w, a, sigma, nl, sched, opts, None)
}

/// [`solve_singular`] from a caller-chosen first-stage starting point
/// (starting-point independence is a uniqueness diagnostic).
#[allow(clippy::too_many_arguments)]
pub fn solve_singular_from(
    mesh: &MeshRef,
    w: &Weight,
    a: &OperatorA,
    sigma: &MeasureData,
    nl: &SingularNonlinearity,
    sched: &ExhaustionSchedule,
    opts: &SolverOptions,
    initial: Option<&DiscreteFunction>,
) -> Result<(DiscreteFunction, SingularRunReport)> {
    if !same_mesh(mesh, sigma.mesh()) || !same_mesh(mesh, w.mesh()) {
        return Err(Error::MeshMismatch);
    }
    let interior_mass = sigma.interior_mass();
    if interior_mass <= 0.0 {
        return Err(Error::param("sigma", "singular problem requires σ ≠ 0"));
    }

    let mut u = match initial {
        Some(f) => f.clone(),
        None => DiscreteFunction::zeros(mesh),
    };
    let mut barrier_warm: Option<DiscreteFunction> = None;
    let mut stages: Vec<SingularStageLog> = Vec::new();
    let mut tracker = StageTracker::new(sched.k_min, opts.blow_up_threshold);
    let mut verdict: Option<PotentialVerdict> = None;
    let mut monotonicity_violations = 0usize;

    for k in 1..=sched.k_max {
        let sigma_k = sched.stage_measure(sigma, k);
        let eps_k = 2.0f64.powi(-(k as i32));

        let mut inner_diffs: Vec<f64> = Vec::new();
        let mut inner_iterations = 0usize;
        let mut blew_up = false;
        let u_prev_stage = u.clone();
        // Under-relaxed Picard; the map stiffens with γ, so the relaxation
        // weight is halved whenever the increments stop contracting.
        let mut omega = RELAXATION;
        let mut non_contracting = 0usize;
        for _ in 0..INNER_MAX {
            inner_iterations += 1;
            let rhs = sigma_k.reweight(&u, |v| nl.h(v.max(0.0) + eps_k))?;
            let (candidate, rep) = solve_warm(mesh, w, a, &rhs, opts, Some(&u))
                .map_err(|e| Error::Stage { stage: k, reason: e.to_string() })?;
            if rep.blow_up {
                blew_up = true;
                u = candidate;
                break;
            }
            if !rep.converged {
                return Err(Error::Stage {
                    stage: k,
                    reason: format!("inner solve failed ({:?})", rep.status),
                });
            }
            let relaxed: Vec<f64> = u
                .values()
                .iter()
                .zip(candidate.values())
                .map(|(old, new)| (1.0 - omega) * old + omega * new)
                .collect();
            let next = DiscreteFunction::from_values(mesh, relaxed, true)?;
            let diff: f64 = u
                .values()
                .iter()
                .zip(next.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            u = next;
            if let Some(&prev) = inner_diffs.last() {
                if diff > 0.98 * prev {
                    non_contracting += 1;
                } else {
                    non_contracting = 0;
                }
                if non_contracting >= 2 && omega > 0.05 {
                    omega *= 0.5;
                    non_contracting = 0;
                }
            }
            inner_diffs.push(diff);
            if diff <= INNER_RTOL * (1.0 + u.sup_norm()) {
                break;
            }
            if inner_iterations == INNER_MAX {
                return Err(Error::Stage {
                    stage: k,
                    reason: "inner Picard iteration did not converge".into(),
                });
            }
        }

        // barrier: g(u_k) ≤ W^0_A σ_k
        let (v_k, v_rep) = solve_warm(mesh, w, a, &sigma_k, opts, barrier_warm.as_ref())
            .map_err(|e| Error::Stage { stage: k, reason: e.to_string() })?;
        let barrier_margin = if v_rep.converged {
            let g_u = g_transform(&u, nl, a.p())?;
            v_k.values()
                .iter()
                .zip(g_u.values())
                .map(|(v, g)| v - g)
                .fold(f64::INFINITY, f64::min)
        } else {
            f64::NAN
        };
        barrier_warm = Some(v_k);

        let sup_u = u.sup_norm();
        let mono_tol = 10.0 * opts.tol * (1.0 + sup_u);
        monotonicity_violations += u_prev_stage
            .values()
            .iter()
            .zip(u.values())
            .filter(|(old, new)| **new < **old - mono_tol)
            .count();
        let sup_diff: f64 = u_prev_stage
            .values()
            .iter()
            .zip(u.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);

        stages.push(SingularStageLog {
            k,
            smoothing: eps_k,
            inner_iterations,
            sup_u,
            energy: weighted_p_energy(&u, w, a.p())?,
            barrier_margin,
            sup_diff,
            sigma_mass: sigma_k.total_mass(),
            inner_diffs,
        });

        if blew_up {
            verdict = Some(PotentialVerdict::Diverging);
            break;
        }
        match tracker.observe(k, sup_u, sup_diff) {
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

    // Schedule exhausted without a strict Cauchy pair: settled if the last
    // increment is small on the scale of the solution.
    let verdict = verdict.unwrap_or_else(|| {
        let last = stages.last().unwrap();
        if last.sup_diff <= SETTLED_RTOL * (1.0 + last.sup_u) {
            PotentialVerdict::Converged
        } else {
            PotentialVerdict::Diverging
        }
    });

    Ok((
        u,
        SingularRunReport {
            stages,
            monotonicity_violations,
            verdict,
        },
    ))
}

/// Barrier margin `min (W^0_A σ_k − g(u_k))` of a stage solution.
pub fn barrier_check(
    u_k: &DiscreteFunction,
    sigma_k: &MeasureData,
    mesh: &MeshRef,
    w: &Weight,
    a: &OperatorA,
    nl: &SingularNonlinearity,
) -> Result<f64> {
    let opts = SolverOptions::default();
    let (v_k, rep) = solve_warm(mesh, w, a, &sigma_k.restrict(0.0, None), &opts, None)?;
    if !rep.converged {
        return Err(Error::Solver(format!("barrier solve failed ({:?})", rep.status)));
    }
    let g_u = g_transform(u_k, nl, a.p())?;
    Ok(v_k
        .values()
        .iter()
        .zip(g_u.values())
        .map(|(v, g)| v - g)
        .fold(f64::INFINITY, f64::min))
}

/// Options for the equivalence verifications.
#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub solver: SolverOptions,
    /// Refinement levels for stability scans.
    pub levels: usize,
    pub restarts: usize,
    /// Maximum relative drift for "refinement-stable".
    pub drift_tol: f64,
    /// Relative slack on bound checks.
    pub rel_tol: f64,
    /// Stage budget for singular runs (the smoothing `2^{-k}` needs more
    /// stages than the default truncation schedule).
    pub k_max: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            solver: SolverOptions::default(),
            levels: 3,
            restarts: 5,
            drift_tol: 0.05,
            rel_tol: 0.05,
            k_max: 26,
        }
    }
}

/// Outcome of the two-sided finite-energy equivalence check.
#[derive(Clone, Debug)]
pub struct Thm12Report {
    pub p: f64,
    pub q: f64,
    /// Trace-constant estimates per refinement level.
    pub c1_values: Vec<f64>,
    pub c1_drift: f64,
    pub c1_stable: bool,
    /// `‖∇u‖_{L^p(w)}` of the singular solution per level.
    pub energy_values: Vec<f64>,
    pub energy_drift: f64,
    pub singular_converged: bool,
    /// Constructive bound `C₁ ≤ β^{1/q} ‖∇u‖^{(p-q)/q}` from the finest level.
    pub c1_upper: f64,
    /// Proof-side energy bound `‖∇u‖ ≤ α^{-1/(p-q)} (C₁⁺)^{q/(p-q)}`.
    pub forward_ok: bool,
    /// `Ĉ₁ ≤ C₁⁺` within tolerance.
    pub reverse_ok: bool,
    /// Both sides answered the same way.
    pub consistent: bool,
    pub equivalence_violation: bool,
}

/// Verify both directions of the finite-energy equivalence for
/// `-div A(∇u) = σ u^{q-1}` with `0 < q < 1`: the trace inequality holds
/// (refinement-stable constant) iff the finite-energy solution exists.
pub fn verify_thm12_equivalence(
    mesh: &MeshRef,
    weight_t: f64,
    a: &OperatorA,
    sigma: &MeasureSpec,
    p: f64,
    q: f64,
    opts: &VerifyOptions,
) -> Result<Thm12Report> {
    if !(0.0 < q && q < 1.0) {
        return Err(Error::param("q", "the finite-energy equivalence needs 0 < q < 1"));
    }
    let nl = SingularNonlinearity::power_sublinear(q)?;
    let scan = trace_refinement_scan(mesh, weight_t, sigma, p, q, opts.levels, opts.restarts)?;
    let c1_stable = scan.stable(opts.drift_tol);

    // singular solves across the same levels
    let mut current = mesh.clone();
    let mut energy_values = Vec::new();
    let mut all_converged = true;
    let mut grad_norm_finest = 0.0;
    for level in 0..opts.levels {
        if level > 0 {
            current = std::sync::Arc::new(current.refined()?);
        }
        let w = power_weight(&current, weight_t);
        let sig = sigma.instantiate(&current)?;
        let sched = ExhaustionSchedule::for_mesh(&current).with_k_max(opts.k_max);
        match solve_singular(&current, &w, a, &sig, &nl, &sched, &opts.solver) {
            Ok((u, report)) => {
                let grad_norm = weighted_p_energy(&u, &w, p)?.powf(1.0 / p);
                energy_values.push(grad_norm);
                grad_norm_finest = grad_norm;
                if report.verdict != PotentialVerdict::Converged {
                    all_converged = false;
                }
            }
            Err(_) => {
                all_converged = false;
                energy_values.push(f64::NAN);
            }
        }
    }
    let energy_drift = energy_values
        .windows(2)
        .map(|pair| {
            if pair[0].is_finite() && pair[1].is_finite() {
                (pair[1] - pair[0]).abs() / pair[0].abs().max(f64::MIN_POSITIVE)
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0f64, f64::max);
    let singular_side = all_converged && energy_drift <= opts.drift_tol;

    let (alpha, beta) = (a.alpha(), a.beta());
    let c1_upper = beta.powf(1.0 / q) * grad_norm_finest.powf((p - q) / q);
    let c1_finest = *scan.values.last().unwrap();
    let forward_ok = if c1_stable && singular_side {
        let bound = alpha.powf(-1.0 / (p - q)) * c1_upper.powf(q / (p - q));
        grad_norm_finest <= bound * (1.0 + opts.rel_tol)
    } else {
        false
    };
    let reverse_ok = if singular_side {
        c1_finest <= c1_upper * (1.0 + opts.rel_tol)
    } else {
        false
    };
    let consistent = c1_stable == singular_side;
    Ok(Thm12Report {
        p,
        q,
        c1_values: scan.values,
        c1_drift: scan.max_drift,
        c1_stable,
        energy_values,
        energy_drift,
        singular_converged: all_converged,
        c1_upper,
        forward_ok,
        reverse_ok,
        consistent,
        equivalence_violation: !consistent,
    })
}

/// Outcome of the finite-measure characterization for `h(u) = u^{-γ}`.
#[derive(Clone, Debug)]
pub struct Cor65Report {
    pub gamma: f64,
    /// Back-solved exponent `q = γ p / (p - 1 + γ)`.
    pub q: f64,
    /// Interior-visible `σ(Ω)`.
    pub sigma_mass: f64,
    /// `∫ |∇ u^{(p-1+γ)/p}|^p w dx`
    pub transformed_energy: f64,
    pub ratio: f64,
    pub window: (f64, f64),
    pub pass: bool,
}

/// Solve the singular problem for finite `σ` and check that
/// `σ(Ω) / ∫|∇u^{(p-1+γ)/p}|^p dw` lies in the explicit two-sided window
/// implied by the energy sandwiches at `q = γp/(p-1+γ)`.
pub fn verify_cor65(
    mesh: &MeshRef,
    w: &Weight,
    a: &OperatorA,
    sigma: &MeasureData,
    p: f64,
    gamma: f64,
    opts: &VerifyOptions,
) -> Result<Cor65Report> {
    if sigma.is_symbolically_infinite() {
        return Err(Error::param("sigma", "the finite-measure characterization needs σ(Ω) < ∞"));
    }
    let nl = SingularNonlinearity::power_decreasing(gamma)?;
    let sched = ExhaustionSchedule::for_mesh(mesh).with_k_max(opts.k_max);
    let (u, report) = solve_singular(mesh, w, a, sigma, &nl, &sched, &opts.solver)?;
    if report.verdict != PotentialVerdict::Converged {
        return Err(Error::Solver("singular solve did not settle".into()));
    }
    let s = (p - 1.0 + gamma) / p;
    let transformed_energy = weighted_p_energy(&u.powf(s), w, p)?;
    let sigma_mass = sigma.interior_mass();
    let ratio = sigma_mass / transformed_energy;

    let q = gamma * p / (p - 1.0 + gamma);
    let window = cor65_window(p, q, a.alpha(), a.beta());
    let pass = ratio >= window.0 * (1.0 - opts.rel_tol) && ratio <= window.1 * (1.0 + opts.rel_tol);
    Ok(Cor65Report {
        gamma,
        q,
        sigma_mass,
        transformed_energy,
        ratio,
        window,
        pass,
    })
}

/// Two-sided window for `σ(Ω)/E_γ` obtained by eliminating the best constant
/// between the energy-side and measure-side sandwiches: with
/// `s = (p-1)/(p-q)` and `e = (p-q)/p`,
/// `(X/Y)^e ∈ [q (α/β)^q s^{1-p} α^{1-q/p}, q^{-q/p} s^{q(p-1)/p} (β/α)^p α^{1-q/p}]`.
fn cor65_window(p: f64, q: f64, alpha: f64, beta: f64) -> (f64, f64) {
    let s = (p - 1.0) / (p - q);
    let e = (p - q) / p;
    let lo = q * (alpha / beta).powf(q) * s.powf(1.0 - p) * alpha.powf(1.0 - q / p);
    let hi = q.powf(-q / p)
        * s.powf(q * (p - 1.0) / p)
        * (beta / alpha).powf(p)
        * alpha.powf(1.0 - q / p);
    (lo.powf(1.0 / e), hi.powf(1.0 / e))
}

/// Two-sided pointwise bounds linking the singular solution to the pure
/// measure-data potential.
#[derive(Clone, Debug)]
pub struct Thm13Report {
    /// `min (v − g(u))` where `v = W_A σ`.
    pub g_bound_margin: f64,
    /// `min (u − v · h(sup u)^{1/(p-1)})`.
    pub v_bound_margin: f64,
    /// Same margin with the final smoothing folded into `h`.
    pub v_bound_margin_smoothed: f64,
    pub sup_u: f64,
    pub pass: bool,
}

/// Check `g(u) ≤ v` and `v ≤ u / h(sup u)^{1/(p-1)}` nodal-wise, where `u`
/// solves the singular problem and `v = W_A σ` is the supersolution.
pub fn verify_thm13_bounds(
    mesh: &MeshRef,
    w: &Weight,
    a: &OperatorA,
    sigma: &MeasureData,
    nl: &SingularNonlinearity,
    opts: &VerifyOptions,
) -> Result<Thm13Report> {
    let sched_pot = ExhaustionSchedule::for_mesh(mesh);
    let pot = wa_potential(mesh, w, a, sigma, &sched_pot, &opts.solver)?;
    if pot.verdict == PotentialVerdict::Diverging {
        return Err(Error::Solver("W_A σ diverges; no bounded supersolution".into()));
    }
    let v = &pot.function;
    let sched = ExhaustionSchedule::for_mesh(mesh).with_k_max(opts.k_max);
    let (u, report) = solve_singular(mesh, w, a, sigma, &nl, &sched, &opts.solver)?;
    if report.verdict != PotentialVerdict::Converged {
        return Err(Error::Solver("singular solve did not settle".into()));
    }

    let g_u = g_transform(&u, nl, a.p())?;
    let g_bound_margin = v
        .values()
        .iter()
        .zip(g_u.values())
        .map(|(v, g)| v - g)
        .fold(f64::INFINITY, f64::min);

    let sup_u = u.max_value();
    let pm1 = a.p() - 1.0;
    let factor = nl.h(sup_u).powf(1.0 / pm1);
    let eps_last = report.final_smoothing();
    let factor_smoothed = nl.h(sup_u + eps_last).powf(1.0 / pm1);
    let margin_with = |fac: f64| {
        u.values()
            .iter()
            .zip(v.values())
            .map(|(u_i, v_i)| u_i - v_i * fac)
            .fold(f64::INFINITY, f64::min)
    };
    let v_bound_margin = margin_with(factor);
    let v_bound_margin_smoothed = margin_with(factor_smoothed);

    let scale = 1.0 + v.sup_norm();
    // the raw margin inherits O(ε_last) slack from the smoothed nonlinearity
    let raw_slack = (nl.gamma() * eps_last / pm1 * (1.0 + sup_u)).max(1e-6 * scale);
    let pass = g_bound_margin >= -1e-6 * scale
        && v_bound_margin_smoothed >= -1e-5 * scale
        && v_bound_margin >= -10.0 * raw_slack;
    Ok(Thm13Report {
        g_bound_margin,
        v_bound_margin,
        v_bound_margin_smoothed,
        sup_u,
        pass,
    })
}

/// Energy identity at the settled singular solution:
/// `∫ A(∇u)·∇u dx = ⟨σ_k h(u + ε_k), u⟩` with the final stage data.
pub fn singular_energy_identity(
    mesh: &MeshRef,
    w: &Weight,
    a: &OperatorA,
    sigma: &MeasureData,
    nl: &SingularNonlinearity,
    u: &DiscreteFunction,
    report: &SingularRunReport,
    sched: &ExhaustionSchedule,
) -> Result<crate::solver::EnergyIdentity> {
    if !same_mesh(mesh, sigma.mesh()) || !same_mesh(mesh, u.mesh()) {
        return Err(Error::MeshMismatch);
    }
    let last_k = report.stages.last().map(|s| s.k).unwrap_or(1);
    let sigma_k = sched.stage_measure(sigma, last_k);
    let eps_k = report.final_smoothing();
    let rhs = sigma_k.reweight(u, |v| nl.h(v.max(0.0) + eps_k))?;
    crate::solver::energy_identity_check(u, w, a, &rhs)
}

/// `∫ u^q dσ`-type integral used in the equivalence checks.
pub fn singular_measure_energy(
    u: &DiscreteFunction,
    sigma: &MeasureData,
    exponent: f64,
) -> Result<f64> {
    measure_power_integral(u, sigma, exponent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, Weight};
    use std::sync::Arc;

    fn unit_interval(n: usize) -> MeshRef {
        Arc::new(build_interval_mesh(0.0, 1.0, n).unwrap())
    }

    fn default_setup(n: usize) -> (MeshRef, Weight, OperatorA, MeasureData) {
        let mesh = unit_interval(n);
        let w = Weight::constant(&mesh);
        let a = OperatorA::isotropic(2.0).unwrap();
        let sigma = MeasureData::lebesgue(&mesh);
        (mesh, w, a, sigma)
    }

    #[test]
    fn g_transform_closed_forms() {
        let mesh = unit_interval(8);
        let nl = SingularNonlinearity::power_decreasing(1.0).unwrap();
        // γ = 1, p = 2: g(u) = u²/2
        assert!((nl.g_scalar(2.0, 2.0) - 2.0).abs() < 1e-15);
        // γ = 1, p = 3: g(u) = (2/3) u^{3/2}
        assert!((nl.g_scalar(1.0, 3.0) - 2.0 / 3.0).abs() < 1e-15);
        let zero = DiscreteFunction::zeros(&mesh);
        let g = g_transform(&zero, &nl, 2.0).unwrap();
        assert_eq!(g.sup_norm(), 0.0);
        // negative input rejected
        let neg = DiscreteFunction::interpolate(&mesh, |_| -1.0, false);
        assert!(g_transform(&neg, &nl, 2.0).is_err());
    }

    #[test]
    fn integration_by_parts_identity() {
        // p = 2, γ = 1, σ = Lebesgue: ∫|u'|² → σ(Ω) = 1 as ε and h shrink
        let mesh = unit_interval(4096);
        let w = Weight::constant(&mesh);
        let a = OperatorA::isotropic(2.0).unwrap();
        let sigma = MeasureData::lebesgue(&mesh);
        let nl = SingularNonlinearity::power_decreasing(1.0).unwrap();
        let sched = ExhaustionSchedule::for_mesh(&mesh).with_k_max(28);
        let (u, report) =
            solve_singular(&mesh, &w, &a, &sigma, &nl, &sched, &SolverOptions::default()).unwrap();
        assert_eq!(report.verdict, PotentialVerdict::Converged);
        assert_eq!(report.monotonicity_violations, 0);
        let energy = weighted_p_energy(&u, &w, 2.0).unwrap();
        assert!((energy - 1.0).abs() < 1e-3, "∫|u'|² = {energy}");
        assert!(report.min_barrier_margin() >= -1e-6, "margin {}", report.min_barrier_margin());
    }

    #[test]
    fn sublinear_finite_energy() {
        // h(u) = u^{-1/2} (q = 1/2): converges with finite energy
        let (mesh, w, a, sigma) = default_setup(256);
        let nl = SingularNonlinearity::power_sublinear(0.5).unwrap();
        let sched = ExhaustionSchedule::for_mesh(&mesh).with_k_max(26);
        let (u, report) =
            solve_singular(&mesh, &w, &a, &sigma, &nl, &sched, &SolverOptions::default()).unwrap();
        assert_eq!(report.verdict, PotentialVerdict::Converged);
        let energy = weighted_p_energy(&u, &w, 2.0).unwrap();
        assert!(energy.is_finite() && energy > 0.0);
        // positivity at interior nodes
        for i in mesh.interior_nodes() {
            assert!(u.value(i) > 1e-300, "node {i}");
        }
    }

    #[test]
    fn rejects_zero_measure() {
        let (mesh, w, a, _) = default_setup(32);
        let sigma = MeasureData::zero(&mesh);
        let nl = SingularNonlinearity::power_decreasing(1.0).unwrap();
        let sched = ExhaustionSchedule::for_mesh(&mesh);
        assert!(solve_singular(&mesh, &w, &a, &sigma, &nl, &sched, &SolverOptions::default()).is_err());
    }

    #[test]
    fn barrier_scaling_consistency() {
        // scaling σ by 4 keeps the barrier margin nonnegative
        let (mesh, w, a, sigma) = default_setup(128);
        let nl = SingularNonlinearity::power_decreasing(1.0).unwrap();
        let sched = ExhaustionSchedule::for_mesh(&mesh).with_k_max(20);
        let scaled = sigma.scale(4.0);
        let (u, report) =
            solve_singular(&mesh, &w, &a, &scaled, &nl, &sched, &SolverOptions::default()).unwrap();
        assert!(report.min_barrier_margin() >= -1e-6);
        // explicit barrier_check on the final stage measure
        let sigma_k = sched.stage_measure(&scaled, report.stages.last().unwrap().k);
        let margin = barrier_check(&u, &sigma_k, &mesh, &w, &a, &nl).unwrap();
        assert!(margin >= -1e-6, "margin = {margin}");
        // u ≡ 0 pre-iteration: margin is min v_k ≥ 0
        let zero = DiscreteFunction::zeros(&mesh);
        let m0 = barrier_check(&zero, &sigma_k, &mesh, &w, &a, &nl).unwrap();
        assert!(m0 >= 0.0);
    }

    #[test]
    fn inner_picard_envelope() {
        let (mesh, w, a, sigma) = default_setup(64);
        let nl = SingularNonlinearity::power_decreasing(1.0).unwrap();
        let sched = ExhaustionSchedule::for_mesh(&mesh).with_k_max(6);
        let (_, report) =
            solve_singular(&mesh, &w, &a, &sigma, &nl, &sched, &SolverOptions::default()).unwrap();
        // eventual decrease of the inner increments on the first stage
        let diffs = &report.stages[0].inner_diffs;
        assert!(diffs.len() >= 3);
        let tail = &diffs[diffs.len().min(3) - 1..];
        for pair in tail.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-9), "{diffs:?}");
        }
    }

    #[test]
    fn uniqueness_starting_point_independence() {
        let (mesh, w, a, sigma) = default_setup(128);
        let nl = SingularNonlinearity::power_decreasing(1.0).unwrap();
        let sched = ExhaustionSchedule::for_mesh(&mesh).with_k_max(18);
        let opts = SolverOptions::default();
        let (u0, _) = solve_singular(&mesh, &w, &a, &sigma, &nl, &sched, &opts).unwrap();
        // alternative start: a small multiple of the measure-data potential
        let (v, _) = solve_warm(&mesh, &w, &a, &sigma, &opts, None).unwrap();
        let alt = v.scale(0.1);
        let (u1, _) =
            solve_singular_from(&mesh, &w, &a, &sigma, &nl, &sched, &opts, Some(&alt)).unwrap();
        let diff: f64 = u0
            .values()
            .iter()
            .zip(u1.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 10.0 * INNER_RTOL * (1.0 + u0.sup_norm()) * 10.0, "diff = {diff}");
    }

    #[test]
    fn singular_energy_identity_holds() {
        let (mesh, w, a, sigma) = default_setup(256);
        let nl = SingularNonlinearity::power_sublinear(0.5).unwrap();
        let sched = ExhaustionSchedule::for_mesh(&mesh).with_k_max(22);
        let (u, report) =
            solve_singular(&mesh, &w, &a, &sigma, &nl, &sched, &SolverOptions::default()).unwrap();
        let id =
            singular_energy_identity(&mesh, &w, &a, &sigma, &nl, &u, &report, &sched).unwrap();
        assert!(id.identity_defect() < 1e-6, "defect = {}", id.identity_defect());
        assert!(id.lhs <= id.mid + 1e-12);
    }

    #[test]
    fn thm12_both_directions_lebesgue() {
        let mesh = unit_interval(64);
        let a = OperatorA::isotropic(2.0).unwrap();
        let rep = verify_thm12_equivalence(
            &mesh,
            0.0,
            &a,
            &MeasureSpec::Lebesgue,
            2.0,
            0.5,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!(rep.c1_stable, "{rep:?}");
        assert!(rep.forward_ok && rep.reverse_ok, "{rep:?}");
        assert!(rep.consistent);
    }

    #[test]
    fn thm12_consistent_no_for_delta_minus_two() {
        let mesh = unit_interval(64);
        let a = OperatorA::isotropic(2.0).unwrap();
        let rep = verify_thm12_equivalence(
            &mesh,
            0.0,
            &a,
            &MeasureSpec::PowerDensity { s: 2.0 },
            2.0,
            0.5,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!(!rep.c1_stable, "Ĉ₁ drift = {}", rep.c1_drift);
        assert!(rep.consistent, "{rep:?}");
        assert!(!rep.equivalence_violation);
    }

    #[test]
    fn thm12_atom_measure() {
        let mesh = unit_interval(64);
        let a = OperatorA::isotropic(2.0).unwrap();
        let rep = verify_thm12_equivalence(
            &mesh,
            0.0,
            &a,
            &MeasureSpec::Atoms(vec![(vec![0.5], 1.0)]),
            2.0,
            0.5,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!(rep.c1_stable && rep.consistent, "{rep:?}");
    }

    #[test]
    fn cor65_degenerate_window_gamma_one() {
        let (mesh, w, a, sigma) = default_setup(512);
        let opts = VerifyOptions {
            k_max: 28,
            ..VerifyOptions::default()
        };
        let rep = verify_cor65(&mesh, &w, &a, &sigma, 2.0, 1.0, &opts).unwrap();
        // q = 1 collapses the window to a point; ratio = 1
        assert!((rep.q - 1.0).abs() < 1e-12);
        assert!((rep.window.0 - 1.0).abs() < 1e-12 && (rep.window.1 - 1.0).abs() < 1e-12);
        assert!((rep.ratio - 1.0).abs() < 1e-3, "ratio = {}", rep.ratio);
        assert!(rep.pass);
    }

    #[test]
    fn cor65_gamma_three_window() {
        let (mesh, w, a, sigma) = default_setup(256);
        let rep = verify_cor65(&mesh, &w, &a, &sigma, 2.0, 3.0, &VerifyOptions::default()).unwrap();
        assert!((rep.q - 1.5).abs() < 1e-12);
        assert!(rep.window.0 < rep.window.1);
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn thm13_bounds_hold() {
        let (mesh, w, a, sigma) = default_setup(256);
        let nl = SingularNonlinearity::power_decreasing(1.0).unwrap();
        let rep = verify_thm13_bounds(&mesh, &w, &a, &sigma, &nl, &VerifyOptions::default()).unwrap();
        assert!(rep.pass, "{rep:?}");
        // atom measure in 1D
        let atom = MeasureData::point_atom(&mesh, &[0.5], 1.0).unwrap();
        let rep2 = verify_thm13_bounds(&mesh, &w, &a, &atom, &nl, &VerifyOptions::default()).unwrap();
        assert!(rep2.pass, "{rep2:?}");
    }
}

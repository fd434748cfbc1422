//! Mild solutions of
//!
//! ```text
//! dX = AX dt + f(t, X) dt + g(t, X₋) dW + ∫ k(t, ξ, X₋) Ñ(dt, dξ)
//! ```
//!
//! by Picard iteration. The model is first conjugated to a contraction
//! semigroup; then each iterate solves the deterministic mild equation
//! `Xⁿ = S·X₀ + ∫ S f(Xⁿ) ds + Vⁿ` with the stochastic convolution `Vⁿ`
//! built from the previous iterate on one frozen noise realisation.
//! [`direct_solve`] is an explicit exponential Euler scheme for
//! cross-validation.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{
    check_continuity, check_lipschitz_growth, check_semimonotone, CheckOptions, CoefficientSet,
    ContinuityReport, Drift, DriftSpec, LipschitzGrowthReport, SemimonotoneReport,
};
use crate::convolution::{CadlagPath, SemimartingaleIncrements};
use crate::error::{check_dim, Error, Result};
use crate::noise::{Channel, MarkSpaceSpec, NoiseRealization, StreamSeeder, TimeGrid, WienerSpec};
use crate::semigroup::{ContractionReport, Propagator, Semigroup};
use crate::state_space::{Basis, SpectralVector, WeightedInnerProduct};
use crate::stats::Estimate;

/// Seed of the RNG driving the construction-time hypothesis checks.
const CHECK_SEED: u64 = 0xC0FF_EE00;

/// Law of `X₀`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Fixed(SpectralVector),
    /// Independent Gaussian coordinates.
    Gaussian {
        mean: SpectralVector,
        std_dev: Vec<f64>,
    },
}

impl InitialCondition {
    pub fn dim(&self) -> usize {
        match self {
            InitialCondition::Fixed(x) => x.dim(),
            InitialCondition::Gaussian { mean, .. } => mean.dim(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SpectralVector {
        match self {
            InitialCondition::Fixed(x) => x.clone(),
            InitialCondition::Gaussian { mean, std_dev } => SpectralVector::from_vec(
                mean.as_slice()
                    .iter()
                    .zip(std_dev)
                    .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            ),
        }
    }

    /// `E‖X₀‖²`
    pub fn second_moment(&self, metric: &WeightedInnerProduct) -> f64 {
        match self {
            InitialCondition::Fixed(x) => metric.norm_sq(x.as_slice()),
            InitialCondition::Gaussian { mean, std_dev } => {
                let var: Vec<f64> = std_dev.iter().map(|s| s * s).collect();
                metric.norm_sq(mean.as_slice()) + metric.dot(&var, &vec![1.0; var.len()])
            }
        }
    }
}

/// Everything needed to assemble a [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub name: String,
    pub basis: Arc<Basis>,
    pub metric: WeightedInnerProduct,
    pub semigroup: Semigroup,
    pub coefficients: CoefficientSet,
    pub wiener: WienerSpec,
    pub marks: MarkSpaceSpec,
    pub initial: InitialCondition,
    pub horizon: f64,
    /// `c` in the Itô-inequality tolerance `c·√Δt`.
    pub ito_constant: f64,
}

/// Results of the structural checks run on a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub samples: usize,
    pub semimonotone: SemimonotoneReport,
    pub lipschitz_growth: LipschitzGrowthReport,
    pub continuity: ContinuityReport,
    pub contraction: ContractionReport,
}

impl HypothesisReport {
    pub fn pass(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        let s = &self.semimonotone;
        if !s.pass {
            out.push(format!(
                "semimonotone: observed ratio {:.12e} exceeds M = {}",
                s.max_ratio, s.declared
            ));
        }
        let l = &self.lipschitz_growth;
        if !l.pass_lipschitz {
            out.push(format!(
                "lipschitz: observed g {:.6e}, k {:.6e}, sum {:.6e} against C = {}",
                l.lipschitz_g, l.lipschitz_k, l.lipschitz, l.declared_c
            ));
        }
        if !l.pass_growth {
            out.push(format!(
                "growth: observed f {:.6e}, g {:.6e}, k {:.6e}, sum {:.6e} against D = {}",
                l.growth_f, l.growth_g, l.growth_k, l.growth, l.declared_d
            ));
        }
        if !self.continuity.pass {
            out.push(format!("continuity: probes {:?}", self.continuity.probes));
        }
        if self.contraction.violation {
            out.push(format!(
                "semigroup exceeds its growth bound by a factor {:.6e}",
                self.contraction.max_excess
            ));
        }
        out
    }
}

/// A fully specified equation with verified structural constants.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    parts: ModelParts,
    report: Option<HypothesisReport>,
}

impl ModelSpec {
    /// Validates dimensions and runs every hypothesis check at 10⁴ samples;
    /// any failure is a construction error.
    pub fn new(parts: ModelParts) -> Result<Self> {
        let mut model = Self::unchecked(parts)?;
        let report = model.check_hypotheses(10_000, CHECK_SEED)?;
        if !report.pass() {
            return Err(Error::Hypothesis {
                model: model.parts.name.clone(),
                detail: report.failures().join("; "),
            });
        }
        model.report = Some(report);
        Ok(model)
    }

    /// Validates dimensions only.
    pub fn unchecked(parts: ModelParts) -> Result<Self> {
        let n = parts.basis.dim();
        check_dim(n, parts.metric.dim())?;
        check_dim(n, parts.semigroup.dim())?;
        check_dim(n, parts.coefficients.dim())?;
        check_dim(n, parts.initial.dim())?;
        check_dim(
            parts.wiener.modes,
            parts.coefficients.diffusion.evaluator.modes(),
        )?;
        if !(parts.horizon > 0.0) || !parts.horizon.is_finite() {
            return Err(Error::Domain(format!("horizon must be positive, got {}", parts.horizon)));
        }
        if !(parts.ito_constant >= 0.0) {
            return Err(Error::Domain("Itô tolerance constant must be ≥ 0".into()));
        }
        Ok(Self { parts, report: None })
    }

    pub fn check_hypotheses(&self, samples: usize, seed: u64) -> Result<HypothesisReport> {
        let p = &self.parts;
        let opts = CheckOptions {
            samples,
            horizon: p.horizon,
            ..Default::default()
        };
        let seeder = StreamSeeder::new(seed);
        let mut rng = seeder.stream(0, Channel::Auxiliary);
        let semimonotone = check_semimonotone(&p.coefficients.drift, &p.metric, &opts, &mut rng)?;
        let mut rng = seeder.stream(1, Channel::Auxiliary);
        let lipschitz_growth =
            check_lipschitz_growth(&p.coefficients, &p.metric, &p.marks, &opts, &mut rng)?;
        let mut rng = seeder.stream(2, Channel::Auxiliary);
        let continuity = check_continuity(&p.coefficients.drift, &p.metric, &opts, &mut rng)?;
        let mut rng = seeder.stream(3, Channel::Auxiliary);
        let contraction =
            p.semigroup
                .check_contraction(&p.metric, samples.min(2_000), p.horizon, &mut rng)?;
        Ok(HypothesisReport {
            samples,
            semimonotone,
            lipschitz_growth,
            continuity,
            contraction,
        })
    }

    pub fn name(&self) -> &str {
        &self.parts.name
    }

    pub fn parts(&self) -> &ModelParts {
        &self.parts
    }

    pub fn basis(&self) -> &Basis {
        &self.parts.basis
    }

    pub fn metric(&self) -> &WeightedInnerProduct {
        &self.parts.metric
    }

    pub fn semigroup(&self) -> &Semigroup {
        &self.parts.semigroup
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        &self.parts.coefficients
    }

    pub fn wiener(&self) -> &WienerSpec {
        &self.parts.wiener
    }

    pub fn marks(&self) -> &MarkSpaceSpec {
        &self.parts.marks
    }

    pub fn initial(&self) -> &InitialCondition {
        &self.parts.initial
    }

    pub fn horizon(&self) -> f64 {
        self.parts.horizon
    }

    pub fn ito_constant(&self) -> f64 {
        self.parts.ito_constant
    }

    pub fn alpha(&self) -> f64 {
        self.parts.semigroup.alpha()
    }

    pub fn dim(&self) -> usize {
        self.parts.basis.dim()
    }

    pub fn hypothesis_report(&self) -> Option<&HypothesisReport> {
        self.report.as_ref()
    }

    pub fn with_initial(mut self, initial: InitialCondition) -> Result<Self> {
        check_dim(self.dim(), initial.dim())?;
        self.parts.initial = initial;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        self.parts.horizon = horizon;
        Ok(self)
    }

    pub fn with_ito_constant(mut self, c: f64) -> Self {
        self.parts.ito_constant = c;
        self
    }

    pub fn grid(&self, dt: f64) -> Result<TimeGrid> {
        TimeGrid::with_step(dt, self.parts.horizon)
    }

    pub fn sample_initial(&self, seeder: &StreamSeeder, path: u64) -> SpectralVector {
        self.parts
            .initial
            .sample(&mut seeder.stream(path, Channel::Initial))
    }

    pub fn sample_noise(
        &self,
        grid: &TimeGrid,
        seeder: &StreamSeeder,
        path: u64,
    ) -> Result<NoiseRealization> {
        NoiseRealization::sample(&self.parts.wiener, &self.parts.marks, grid, seeder, path)
    }
}

/// The equivalent model with a contraction semigroup:
/// `S̃ₜ = e^{−αt}Sₜ` and every coefficient conjugated,
/// `f̃(t, x) = e^{−αt} f(t, e^{αt}x)` (likewise `g`, `k`). A solution `X̃`
/// of the new model gives `Xₜ = e^{αt}X̃ₜ`.
pub fn rescale_to_contraction(model: &ModelSpec) -> ModelSpec {
    let alpha = model.alpha();
    if alpha == 0.0 {
        return model.clone();
    }
    let mut parts = model.parts.clone();
    parts.semigroup = parts.semigroup.rescaled(alpha);
    parts.coefficients = parts.coefficients.rescaled(alpha, parts.horizon);
    ModelSpec {
        parts,
        report: model.report.clone(),
    }
}

/// `t ↦ e^{αt} X̃ₜ`
pub fn unscale_path(path: &CadlagPath, alpha: f64) -> CadlagPath {
    if alpha == 0.0 {
        return path.clone();
    }
    path.scaled_by(|t| (alpha * t).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerMethod {
    /// Newton direction for `Y − Δt f(Y) − r`.
    Newton,
    /// Damped fixed-point map `Y ← Y − θ(Y − Δt f(Y) − r)`.
    FixedPoint,
}

/// Per-step nonlinear solve of `Y − Δt f(t, Y) = r`.
///
/// Each iteration moves along the method's direction with step `θ`,
/// halving the step until the residual decreases. The solve fails when the
/// halvings run out or the iteration budget is spent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerSolver {
    pub method: InnerMethod,
    /// Initial step `θ ∈ (0, 1]`.
    pub damping: f64,
    /// Converged when `‖Y − Δt f(Y) − r‖ ≤ tolerance·(1 + ‖r‖)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for InnerSolver {
    fn default() -> Self {
        Self {
            method: InnerMethod::Newton,
            damping: 1.0,
            tolerance: 1e-12,
            max_iterations: 200,
            max_halvings: 40,
        }
    }
}

impl InnerSolver {
    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Domain(format!(
                "inner damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Domain("inner tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// A stalled solve is accepted when the residual is within this factor of
/// the target. Non-Lipschitz drifts such as `−∛u` have a residual floor of
/// order `Δt (ε‖y‖)^{1/3}` in floating point, well above `1e-12`.
const STALL_FACTOR: f64 = 1e4;

/// Consecutive iterations with less than halving of the residual that
/// count as a stall.
const STALL_ITERATIONS: usize = 2;

/// Failed halvings after which a line search near the target gives up.
const STALL_HALVINGS: usize = 4;

struct StepSolver<'a> {
    drift: &'a dyn Drift,
    metric: &'a WeightedInnerProduct,
    opts: InnerSolver,
    jac: DMatrix<f64>,
    fy: Vec<f64>,
    g: Vec<f64>,
    trial: Vec<f64>,
    trial_g: Vec<f64>,
    dir: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct StepStats {
    iterations: usize,
    halvings: usize,
    residual: f64,
}

impl<'a> StepSolver<'a> {
    fn new(drift: &'a dyn Drift, metric: &'a WeightedInnerProduct, opts: InnerSolver) -> Self {
        let n = drift.dim();
        Self {
            drift,
            metric,
            opts,
            jac: DMatrix::zeros(n, n),
            fy: vec![0.0; n],
            g: vec![0.0; n],
            trial: vec![0.0; n],
            trial_g: vec![0.0; n],
            dir: vec![0.0; n],
        }
    }

    fn residual(
        drift: &dyn Drift,
        metric: &WeightedInnerProduct,
        fy: &mut [f64],
        t: f64,
        dt: f64,
        r: &[f64],
        y: &[f64],
        g: &mut [f64],
    ) -> f64 {
        drift.apply(t, y, fy);
        for i in 0..y.len() {
            g[i] = y[i] - dt * fy[i] - r[i];
        }
        metric.norm_sq(g).sqrt()
    }

    fn residual_at(&mut self, t: f64, dt: f64, r: &[f64], y: &[f64]) -> f64 {
        Self::residual(self.drift, self.metric, &mut self.fy, t, dt, r, y, &mut self.trial_g)
    }

    /// Solves in place, starting from the content of `y`.
    fn solve(&mut self, t: f64, dt: f64, r: &[f64], y: &mut [f64]) -> Result<StepStats> {
        let target = self.opts.tolerance * (1.0 + self.metric.norm_sq(r).sqrt());
        let mut res = Self::residual(self.drift, self.metric, &mut self.fy, t, dt, r, y, &mut self.g);
        let mut stats = StepStats::default();
        let n = y.len();
        let mut slow = 0;
        let mut moved = f64::INFINITY;
        while res > target {
            if slow >= STALL_ITERATIONS && res <= STALL_FACTOR * target {
                break;
            }
            // Newton increments below the target: the remaining residual is
            // amplified roundoff of a steep drift, not distance to the root.
            if self.opts.method == InnerMethod::Newton && moved <= target && res <= STALL_FACTOR * target {
                break;
            }
            if stats.iterations == self.opts.max_iterations {
                return Err(Error::NonConvergence {
                    time: t,
                    iterations: stats.iterations,
                    residual: res,
                    detail: "iteration budget exhausted".into(),
                });
            }
            stats.iterations += 1;
            match self.opts.method {
                InnerMethod::Newton => {
                    self.drift.jacobian(t, y, &mut self.jac);
                    let mut m = -dt * &self.jac;
                    for i in 0..n {
                        m[(i, i)] += 1.0;
                    }
                    let rhs = DVector::from_iterator(n, self.g.iter().map(|v| -v));
                    match m.lu().solve(&rhs) {
                        Some(d) => self.dir.copy_from_slice(d.as_slice()),
                        None => {
                            for (d, g) in self.dir.iter_mut().zip(&self.g) {
                                *d = -g;
                            }
                        }
                    }
                }
                InnerMethod::FixedPoint => {
                    for (d, g) in self.dir.iter_mut().zip(&self.g) {
                        *d = -g;
                    }
                }
            }
            let mut step = self.opts.damping;
            let mut halvings = 0;
            loop {
                for i in 0..n {
                    self.trial[i] = y[i] + step * self.dir[i];
                }
                let trial_res = Self::residual(
                    self.drift,
                    self.metric,
                    &mut self.fy,
                    t,
                    dt,
                    r,
                    &self.trial,
                    &mut self.trial_g,
                );
                if trial_res < res || trial_res <= target {
                    slow = if trial_res > 0.5 * res { slow + 1 } else { 0 };
                    y.copy_from_slice(&self.trial);
                    std::mem::swap(&mut self.g, &mut self.trial_g);
                    res = trial_res;
                    moved = step * self.metric.norm_sq(&self.dir).sqrt();
                    break;
                }
                halvings += 1;
                stats.halvings += 1;
                if halvings >= STALL_HALVINGS && res <= STALL_FACTOR * target {
                    stats.residual = res;
                    return Ok(stats);
                }
                if halvings > self.opts.max_halvings {
                    // Stagnation at roundoff level, e.g. where the Jacobian
                    // of a cube root blows up near zero.
                    if res <= STALL_FACTOR * target {
                        stats.residual = res;
                        return Ok(stats);
                    }
                    return Err(Error::NonConvergence {
                        time: t,
                        iterations: stats.iterations,
                        residual: res,
                        detail: format!("no decrease after {halvings} step halvings"),
                    });
                }
                step *= 0.5;
            }
        }
        stats.residual = res;
        Ok(stats)
    }
}

/// Diagnostics of one deterministic mild solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MildDiagnostics {
    pub max_residual: f64,
    pub inner_iterations: usize,
    pub halvings: usize,
    /// Grid points where `‖X(t)‖` exceeded the a-priori bound.
    pub apriori_violations: usize,
    /// Largest `‖X(t)‖ / bound(t)`.
    pub apriori_max_ratio: f64,
}

/// Solves `X(t) = S_t X₀ + ∫₀ᵗ S_{t−s} f(s, X(s)) ds + V(t)` on the grid of
/// `v` by the semi-implicit rule
///
/// ```text
/// Uⱼ₊₁ = S_Δt Uⱼ + Δt f(tⱼ₊₁, Xⱼ₊₁),   Xⱼ = Uⱼ + Vⱼ,   U₀ = X₀,
/// ```
///
/// i.e. `Y − Δt f(tⱼ₊₁, Y) = S_Δt Uⱼ + Vⱼ₊₁` per step. `guess`, when given,
/// seeds each step's inner solve. Every run also checks the a-priori bound
///
/// ```text
/// ‖X(tⱼ)‖ ≤ e^{αtⱼ}‖X₀‖ + ‖V(tⱼ)‖ + Bⱼ,
/// Bⱼ₊₁ = (e^{αΔt} Bⱼ + Δt ‖f(tⱼ₊₁, S_{tⱼ₊₁}X₀ + Vⱼ₊₁)‖) / (1 − Δt M),
/// ```
///
/// the discrete form of `∫₀ᵗ e^{(α+M)(t−s)} ‖f(s, SₛX₀ + V(s))‖ ds`.
pub fn solve_deterministic_mild(
    semigroup: &Semigroup,
    drift: &DriftSpec,
    metric: &WeightedInnerProduct,
    x0: &SpectralVector,
    v: &CadlagPath,
    inner: &InnerSolver,
    guess: Option<&CadlagPath>,
) -> Result<(CadlagPath, MildDiagnostics)> {
    inner.validate()?;
    let n = semigroup.dim();
    check_dim(n, x0.dim())?;
    check_dim(n, v.dim())?;
    check_dim(n, drift.evaluator.dim())?;
    check_dim(n, metric.dim())?;
    if !v.is_complete() {
        return Err(Error::Domain("forcing path is incomplete".into()));
    }
    let grid = *v.grid();
    let dt = grid.dt();
    let m = drift.monotonicity;
    if dt * m >= 1.0 {
        return Err(Error::Domain(format!(
            "Δt·M = {} must be below 1 for the implicit step",
            dt * m
        )));
    }
    let prop = semigroup.propagator(dt)?;
    let alpha = semigroup.alpha();
    let f = drift.evaluator.as_ref();
    let zero_drift = f.is_zero();
    let mut solver = StepSolver::new(f, metric, *inner);
    let mut diag = MildDiagnostics::default();

    let mut x = x0.as_slice().to_vec();
    for (a, b) in x.iter_mut().zip(v.value(0)) {
        *a += b;
    }
    let mut path = CadlagPath::starting_at(grid, &x);
    let mut u = x0.as_slice().to_vec();
    let mut su = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut pre = vec![0.0; n];
    let mut orbit = x0.as_slice().to_vec();
    let mut orbit_next = vec![0.0; n];
    let mut phi = vec![0.0; n];
    let mut f_phi = vec![0.0; n];
    let x0_norm = metric.norm_sq(x0.as_slice()).sqrt();
    let mut b = 0.0;
    let growth = (alpha * dt).exp();
    let check = |x: &[f64], bound: f64, diag: &mut MildDiagnostics| {
        let norm = metric.norm_sq(x).sqrt();
        if bound > 0.0 {
            diag.apriori_max_ratio = diag.apriori_max_ratio.max(norm / bound);
        }
        if norm > bound * (1.0 + 1e-9) + 1e-9 {
            diag.apriori_violations += 1;
        }
    };
    check(&x, x0_norm + metric.norm_sq(v.value(0)).sqrt(), &mut diag);

    for j in 0..grid.steps() {
        let t1 = grid.time(j + 1);
        prop.apply(&u, &mut su);
        let vj = v.value(j + 1);
        for i in 0..n {
            r[i] = su[i] + vj[i];
        }
        if zero_drift {
            y.copy_from_slice(&r);
        } else {
            // Start from whichever of the guess and `r` has the smaller
            // residual; near the root of a steep drift the difference is
            // many iterations.
            y.copy_from_slice(&r);
            if let Some(g) = guess {
                let g = g.value(j + 1);
                if solver.residual_at(t1, dt, &r, g) < solver.residual_at(t1, dt, &r, &r) {
                    y.copy_from_slice(g);
                }
            }
            let stats = solver.solve(t1, dt, &r, &mut y)?;
            diag.inner_iterations += stats.iterations;
            diag.halvings += stats.halvings;
            diag.max_residual = diag.max_residual.max(stats.residual);
        }
        for i in 0..n {
            u[i] = y[i] - vj[i];
        }
        match v.pre_jump(j + 1) {
            Some(vp) => {
                for i in 0..n {
                    pre[i] = u[i] + vp[i];
                }
                path.push(&y, Some(&pre));
            }
            None => path.push(&y, None),
        }

        prop.apply(&orbit, &mut orbit_next);
        std::mem::swap(&mut orbit, &mut orbit_next);
        for i in 0..n {
            phi[i] = orbit[i] + vj[i];
        }
        let f_norm = if zero_drift {
            0.0
        } else {
            f.apply(t1, &phi, &mut f_phi);
            metric.norm_sq(&f_phi).sqrt()
        };
        b = (growth * b + dt * f_norm) / (1.0 - dt * m);
        let bound = (alpha * t1).exp() * x0_norm + metric.norm_sq(vj).sqrt() + b;
        check(&y, bound, &mut diag);
    }
    Ok((path, diag))
}

/// `Vⱼ₊₁ = S_Δt(Vⱼ + g(tⱼ, Xⱼ)ΔWⱼ − Δt ∫k(tⱼ, ξ, Xⱼ)ν(dξ) + Σ k(tⱼ, ξᵢ, Xⱼ))`
/// with the sum over jumps in `(tⱼ, tⱼ₊₁]`, `V₀ = 0`.
fn stochastic_forcing(
    coeffs: &CoefficientSet,
    marks: &MarkSpaceSpec,
    prop: &Propagator,
    x: &CadlagPath,
    noise: &NoiseRealization,
) -> CadlagPath {
    let grid = *x.grid();
    let n = x.dim();
    let dt = grid.dt();
    let g = coeffs.diffusion.evaluator.as_ref();
    let k = coeffs.jump.evaluator.as_ref();
    let mut v = vec![0.0; n];
    let mut path = CadlagPath::starting_at(grid, &v);
    let mut buf = vec![0.0; n];
    let mut comp = vec![0.0; n];
    let mut kv = vec![0.0; n];
    let mut jump = vec![0.0; n];
    let mut sjump = vec![0.0; n];
    let mut pre = vec![0.0; n];
    let (g_zero, k_zero) = (g.is_zero(), k.is_zero());
    for j in 0..grid.steps() {
        let t = grid.time(j);
        let xj = x.value(j);
        buf.copy_from_slice(&v);
        if !g_zero {
            g.apply_add(t, xj, noise.wiener.step(j), &mut buf);
        }
        let events = noise.jumps.cell(j);
        if !k_zero {
            k.compensator(t, xj, marks, &mut comp);
            for (b, c) in buf.iter_mut().zip(&comp) {
                *b -= dt * c;
            }
        }
        prop.apply(&buf, &mut pre);
        if k_zero || events.is_empty() {
            v.copy_from_slice(&pre);
            path.push(&v, None);
        } else {
            jump.iter_mut().for_each(|a| *a = 0.0);
            for e in events {
                k.apply(t, e.mark, xj, &mut kv);
                for (a, b) in jump.iter_mut().zip(&kv) {
                    *a += b;
                }
            }
            prop.apply(&jump, &mut sjump);
            for i in 0..n {
                v[i] = pre[i] + sjump[i];
            }
            path.push(&v, Some(&pre));
        }
    }
    path
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PicardOptions {
    /// Highest `n` with a recorded `eₙ`; the iteration computes up to
    /// `X^{n_max+1}`.
    pub n_max: usize,
    /// Pathwise stop: `sup‖Xⁿ⁺¹ − Xⁿ‖² < tolerance`, raised to the inner
    /// solver's resolution when that is coarser.
    pub tolerance: f64,
    pub inner: InnerSolver,
    /// The Burkholder–Davis–Gundy constant `𝒞₁` entering `C₁`.
    pub bdg_constant: f64,
    /// Iterate on the model conjugated to a contraction semigroup.
    pub rescale: bool,
    /// Stop each path as soon as it meets `tolerance`.
    pub early_stop: bool,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            n_max: 9,
            tolerance: 1e-20,
            inner: InnerSolver::default(),
            bdg_constant: 3.0,
            rescale: true,
            early_stop: true,
        }
    }
}

impl PicardOptions {
    /// Smallest meaningful `sup‖Xⁿ⁺¹ − Xⁿ‖²` for paths of size `sup_x`:
    /// `tolerance`, or the square of what the inner solver resolves when
    /// that is larger.
    pub fn resolution_floor(&self, sup_x: f64) -> f64 {
        let inner = 10.0 * STALL_FACTOR * self.inner.tolerance;
        self.tolerance.max(inner * inner * (1.0 + sup_x))
    }
}

/// Per-path record of one Picard run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardPathRecord {
    /// `dₙ = sup_t ‖Xⁿ⁺¹ₜ − Xⁿₜ‖²`, `n = 0, 1, …`
    pub distances: Vec<f64>,
    /// `sup_t ‖Xⁿₜ‖²`, `n = 0, 1, …`
    pub sup_x: Vec<f64>,
    /// `sup_t ‖Vⁿₜ‖²`, `n = 0, 1, …` (`V⁰ = 0`).
    pub sup_v: Vec<f64>,
    pub x0_sq: f64,
    pub apriori_violations: usize,
    pub inner_iterations: usize,
    pub converged_at: Option<usize>,
}

/// Runs the Picard iteration for one path on a frozen noise realisation.
/// `model` is used as given; the returned path is in its frame.
pub fn picard_path(
    model: &ModelSpec,
    x0: &SpectralVector,
    grid: &TimeGrid,
    noise: &NoiseRealization,
    opts: &PicardOptions,
) -> Result<(CadlagPath, PicardPathRecord)> {
    let metric = model.metric();
    let semigroup = model.semigroup();
    let coeffs = model.coefficients();
    let prop = semigroup.propagator(grid.dt())?;
    let zero_v = CadlagPath::from_values(*grid, model.dim(), vec![0.0; (grid.steps() + 1) * model.dim()])?;
    let mut current = {
        // X⁰ₜ = Sₜ X₀
        let mut p = CadlagPath::starting_at(*grid, x0.as_slice());
        let mut x = x0.as_slice().to_vec();
        let mut y = vec![0.0; x.len()];
        for _ in 0..grid.steps() {
            prop.apply(&x, &mut y);
            std::mem::swap(&mut x, &mut y);
            p.push(&x, None);
        }
        p
    };
    let mut record = PicardPathRecord {
        distances: Vec::new(),
        sup_x: vec![current.sup_norm_sq(metric)],
        sup_v: vec![zero_v.sup_norm_sq(metric)],
        x0_sq: metric.norm_sq(x0.as_slice()),
        apriori_violations: 0,
        inner_iterations: 0,
        converged_at: None,
    };
    let mut rising = 0;
    for n in 1..=opts.n_max + 1 {
        let v = stochastic_forcing(coeffs, model.marks(), &prop, &current, noise);
        let (next, diag) = solve_deterministic_mild(
            semigroup,
            &coeffs.drift,
            metric,
            x0,
            &v,
            &opts.inner,
            Some(&current),
        )?;
        record.apriori_violations += diag.apriori_violations;
        record.inner_iterations += diag.inner_iterations;
        let d = next.sup_dist_sq(&current, metric)?;
        record.sup_v.push(v.sup_norm_sq(metric));
        record.sup_x.push(next.sup_norm_sq(metric));
        let floor = opts.resolution_floor(record.sup_x[0]);
        if let Some(&prev) = record.distances.last() {
            if d >= prev && d > floor {
                rising += 1;
            } else {
                rising = 0;
            }
        }
        record.distances.push(d);
        current = next;
        if opts.early_stop {
            if d < floor {
                record.converged_at = Some(n - 1);
                break;
            }
            if rising >= 3 {
                return Err(Error::Divergence {
                    iteration: n - 1,
                    trace: format_distances(&record.distances),
                });
            }
        }
    }
    Ok((current, record))
}

fn format_distances(d: &[f64]) -> String {
    let mut s = String::from("n,distance\n");
    for (n, v) in d.iter().enumerate() {
        let _ = writeln!(s, "{n},{v:.6e}");
    }
    s
}

/// Aggregated Picard statistics with the predicted bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardTrace {
    pub paths: usize,
    pub horizon: f64,
    /// `eₙ ≈ E sup_t ‖Xⁿ⁺¹ₜ − Xⁿₜ‖²`, `n = 0..=n_max`.
    pub e: Vec<Estimate>,
    /// `C₀ C₁ⁿ Tⁿ / n!`
    pub predicted: Vec<f64>,
    /// `E sup_t ‖Xⁿₜ‖²`, `n = 0..=n_max+1`.
    pub moment_lhs: Vec<Estimate>,
    /// `3DT²e^{2MT} + (3 + 6DT²e^{2MT})(E‖X₀‖² + E sup‖Vⁿ‖²)`.
    pub moment_rhs: Vec<Estimate>,
    pub c0: f64,
    pub c1: f64,
    pub bdg_constant: f64,
    pub lipschitz: f64,
    pub growth: f64,
    pub monotonicity: f64,
    pub apriori_violations: usize,
    pub converged_at: Option<usize>,
}

impl PicardTrace {
    pub fn from_records(
        records: &[PicardPathRecord],
        model: &ModelSpec,
        bdg_constant: f64,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Domain("Picard trace needs at least one path".into()));
        }
        let t = model.horizon();
        let coeffs = model.coefficients();
        let (c, d, m) = (coeffs.lipschitz(), coeffs.growth(), coeffs.monotonicity());
        let levels = records.iter().map(|r| r.distances.len()).min().unwrap_or(0);
        let column = |f: &dyn Fn(&PicardPathRecord) -> f64| {
            Estimate::from_samples(&records.iter().map(f).collect::<Vec<_>>())
        };
        let e: Vec<Estimate> = (0..levels).map(|n| column(&|r| r.distances[n])).collect();
        let k = 3.0 * d * t * t * (2.0 * m * t).exp();
        let moment_lhs = (0..=levels).map(|n| column(&|r| r.sup_x[n])).collect();
        let moment_rhs = (0..=levels)
            .map(|n| column(&|r| k + (3.0 + 2.0 * k) * (r.x0_sq + r.sup_v[n])))
            .collect();
        let c0 = e.first().map_or(0.0, |e| e.mean);
        let c1 = 2.0 * c * (1.0 + 2.0 * bdg_constant * bdg_constant) * (4.0 * m * t).exp();
        let mut predicted = Vec::with_capacity(levels);
        let mut term = c0;
        for n in 0..levels {
            if n > 0 {
                term *= c1 * t / n as f64;
            }
            predicted.push(term);
        }
        let converged_at = records
            .iter()
            .map(|r| r.converged_at)
            .try_fold(0usize, |acc, c| c.map(|c| acc.max(c)));
        Ok(Self {
            paths: records.len(),
            horizon: t,
            e,
            predicted,
            moment_lhs,
            moment_rhs,
            c0,
            c1,
            bdg_constant,
            lipschitz: c,
            growth: d,
            monotonicity: m,
            apriori_violations: records.iter().map(|r| r.apriori_violations).sum(),
            converged_at,
        })
    }

    /// `eₙ₊₁ / eₙ`
    pub fn ratio(&self, n: usize) -> Option<f64> {
        let (a, b) = (self.e.get(n)?, self.e.get(n + 1)?);
        (a.mean > 0.0).then(|| b.mean / a.mean)
    }

    /// `C₁T/(n+1)`, the ratio of consecutive predicted bounds.
    pub fn ratio_bound(&self, n: usize) -> f64 {
        self.c1 * self.horizon / (n + 1) as f64
    }

    /// Iterates whose moment estimate exceeds the bound by more than `k`
    /// combined standard errors.
    pub fn moment_violations(&self, k: f64) -> Vec<usize> {
        self.moment_lhs
            .iter()
            .zip(&self.moment_rhs)
            .enumerate()
            .filter(|(_, (l, r))| {
                let se = (l.std_error.powi(2) + r.std_error.powi(2)).sqrt();
                l.mean > r.mean + k * se
            })
            .map(|(n, _)| n)
            .collect()
    }

    /// First `n` where `eₙ` failed to decrease for three consecutive
    /// iterations while above `floor`.
    pub fn divergence(&self, floor: f64) -> Option<usize> {
        let mut rising = 0;
        for n in 1..self.e.len() {
            if self.e[n].mean >= self.e[n - 1].mean && self.e[n].mean > floor {
                rising += 1;
                if rising >= 3 {
                    return Some(n);
                }
            } else {
                rising = 0;
            }
        }
        None
    }

    /// Plain-text table of the iteration statistics.
    pub fn render(&self) -> String {
        let mut s = String::from("n,e_n,std_error,predicted,ratio\n");
        for (n, e) in self.e.iter().enumerate() {
            let ratio = self.ratio(n).map_or(String::from("nan"), |r| format!("{r:.6e}"));
            let _ = writeln!(
                s,
                "{n},{:.6e},{:.6e},{:.6e},{ratio}",
                e.mean, e.std_error, self.predicted[n]
            );
        }
        s
    }
}

/// Single-path Picard solve; returns the final iterate in the original
/// frame and the path's trace.
pub fn picard_solve(
    model: &ModelSpec,
    seeder: &StreamSeeder,
    path: u64,
    grid: &TimeGrid,
    opts: &PicardOptions,
) -> Result<(CadlagPath, PicardTrace)> {
    let work = if opts.rescale {
        rescale_to_contraction(model)
    } else {
        model.clone()
    };
    let x0 = model.sample_initial(seeder, path);
    let noise = model.sample_noise(grid, seeder, path)?;
    let (x, record) = picard_path(&work, &x0, grid, &noise, opts)?;
    let alpha = model.alpha() - work.alpha();
    let trace = PicardTrace::from_records(std::slice::from_ref(&record), &work, opts.bdg_constant)?;
    Ok((unscale_path(&x, alpha), trace))
}

/// Picard campaign over `paths` independent paths run in parallel. Every
/// path runs all `n_max + 1` iterations. Fails with a divergence error when
/// the mean distances stop decreasing.
pub fn picard_campaign(
    model: &ModelSpec,
    grid: &TimeGrid,
    paths: usize,
    seeder: &StreamSeeder,
    opts: &PicardOptions,
) -> Result<(PicardTrace, Vec<PicardPathRecord>)> {
    let work = if opts.rescale {
        rescale_to_contraction(model)
    } else {
        model.clone()
    };
    let run = PicardOptions {
        early_stop: false,
        ..*opts
    };
    let records: Vec<PicardPathRecord> = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let x0 = model.sample_initial(seeder, p);
            let noise = model.sample_noise(grid, seeder, p)?;
            picard_path(&work, &x0, grid, &noise, &run).map(|(_, r)| r)
        })
        .collect::<Result<_>>()?;
    let trace = PicardTrace::from_records(&records, &work, opts.bdg_constant)?;
    let floor = opts.resolution_floor(trace.moment_lhs[0].mean);
    if let Some(n) = trace.divergence(floor) {
        return Err(Error::Divergence {
            iteration: n,
            trace: trace.render(),
        });
    }
    Ok((trace, records))
}

/// Path of the explicit scheme together with the forcing increments it
/// used, so the Itô-type inequality can be checked along it.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectSolution {
    pub path: CadlagPath,
    pub increments: SemimartingaleIncrements,
}

/// Exponential Euler on a given noise realisation:
///
/// ```text
/// Xⱼ₊₁ = S_Δt (Xⱼ + f(tⱼ, Xⱼ)Δt + g(tⱼ, Xⱼ)ΔWⱼ − Δt∫k(tⱼ, ξ, Xⱼ)ν(dξ) + Σ k(tⱼ, ξᵢ, Xⱼ))
/// ```
///
/// The increments record `ΔZⱼ` with
/// `Δ[Z]ⱼ = ‖(f − ∫k dν)Δt‖² + ‖g‖²_HS Δt + Σ ‖k(ξᵢ)‖²`.
pub fn direct_path(
    model: &ModelSpec,
    x0: &SpectralVector,
    grid: &TimeGrid,
    noise: &NoiseRealization,
) -> Result<DirectSolution> {
    let n = model.dim();
    check_dim(n, x0.dim())?;
    let metric = model.metric();
    let coeffs = model.coefficients();
    let prop = model.semigroup().propagator(grid.dt())?;
    let dt = grid.dt();
    let f = coeffs.drift.evaluator.as_ref();
    let g = coeffs.diffusion.evaluator.as_ref();
    let k = coeffs.jump.evaluator.as_ref();
    let mut z = SemimartingaleIncrements::zeros(*grid, n);
    let mut x = x0.as_slice().to_vec();
    let mut path = CadlagPath::starting_at(*grid, &x);
    let mut cont = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut jump = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let mut pre = vec![0.0; n];
    let mut sj = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..grid.steps() {
        let t = grid.time(j);
        f.apply(t, &x, &mut tmp);
        for (c, v) in cont.iter_mut().zip(&tmp) {
            *c = dt * v;
        }
        if !k.is_zero() {
            k.compensator(t, &x, model.marks(), &mut tmp);
            for (c, v) in cont.iter_mut().zip(&tmp) {
                *c -= dt * v;
            }
        }
        // Finite-variation part first: its discrete variation enters Δ[Z].
        let mut qv = metric.norm_sq(&cont);
        if !g.is_zero() {
            let dw = noise.wiener.step(j);
            for (m, d) in dw.iter().enumerate() {
                g.column(t, &x, m, &mut col);
                qv += metric.norm_sq(&col) * dt;
                for (c, v) in cont.iter_mut().zip(&col) {
                    *c += d * v;
                }
            }
        }
        let events = noise.jumps.cell(j);
        let mut jumped = false;
        if !k.is_zero() {
            if !events.is_empty() {
                jumped = true;
                jump.iter_mut().for_each(|a| *a = 0.0);
                for e in events {
                    k.apply(t, e.mark, &x, &mut tmp);
                    qv += metric.norm_sq(&tmp);
                    for (a, b) in jump.iter_mut().zip(&tmp) {
                        *a += b;
                    }
                }
            }
        }
        for i in 0..n {
            buf[i] = x[i] + cont[i];
        }
        prop.apply(&buf, &mut pre);
        if jumped {
            prop.apply(&jump, &mut sj);
            for i in 0..n {
                x[i] = pre[i] + sj[i];
            }
            path.push(&x, Some(&pre));
            z.set_cell(j, &cont, Some(&jump), qv);
        } else {
            x.copy_from_slice(&pre);
            path.push(&x, None);
            z.set_cell(j, &cont, None, qv);
        }
    }
    Ok(DirectSolution {
        path,
        increments: z,
    })
}

/// [`direct_path`] with the path's initial value and noise drawn from the
/// seeder, exactly as [`picard_solve`] draws them.
pub fn direct_solve(
    model: &ModelSpec,
    seeder: &StreamSeeder,
    path: u64,
    grid: &TimeGrid,
) -> Result<DirectSolution> {
    let x0 = model.sample_initial(seeder, path);
    let noise = model.sample_noise(grid, seeder, path)?;
    direct_path(model, &x0, grid, &noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{
        nemitsky, AffineDrift, DiffusionSpec, JumpCoeffSpec, LinearMap, LinearMarkJump, Pointwise,
        Reaction,
    };
    use crate::noise::MarkLaw;

    fn scalar_model(a: f64, sigma: f64, jumps: Option<MarkSpaceSpec>, x0: f64) -> ModelSpec {
        let marks = jumps.unwrap_or_else(MarkSpaceSpec::none);
        let drift = DriftSpec {
            evaluator: Arc::new(AffineDrift {
                map: LinearMap::Scaled { dim: 1, factor: a },
                offset: None,
            }),
            monotonicity: a,
            growth: a * a,
        };
        let (wiener, diffusion) = if sigma == 0.0 {
            (WienerSpec { modes: 0 }, DiffusionSpec::zero(1, 0))
        } else {
            (
                WienerSpec { modes: 1 },
                DiffusionSpec {
                    evaluator: Arc::new(crate::coefficients::LinearDiffusion {
                        columns: vec![(LinearMap::Scaled { dim: 1, factor: sigma }, None)],
                    }),
                    lipschitz: sigma * sigma,
                    growth: sigma * sigma,
                },
            )
        };
        let jump = if marks.is_trivial() {
            JumpCoeffSpec::zero(1)
        } else {
            let m2 = marks.second_moment();
            JumpCoeffSpec {
                evaluator: Arc::new(LinearMarkJump {
                    map: LinearMap::Scaled { dim: 1, factor: 1.0 },
                }),
                lipschitz: m2,
                growth: m2,
            }
        };
        ModelSpec::new(ModelParts {
            name: "scalar".into(),
            basis: Arc::new(Basis::new(vec!["x".into()]).unwrap()),
            metric: WeightedInnerProduct::unit(1),
            semigroup: Semigroup::diagonal(vec![0.0], 0.0).unwrap(),
            coefficients: CoefficientSet::new(drift, diffusion, jump).unwrap(),
            wiener,
            marks,
            initial: InitialCondition::Fixed(SpectralVector::from_vec(vec![x0])),
            horizon: 1.0,
            ito_constant: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn zero_drift_mild_solve_is_orbit_plus_forcing() {
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let s = Semigroup::dirichlet_heat(2).unwrap();
        let m = WeightedInnerProduct::unit(2);
        let vals: Vec<f64> = (0..21).flat_map(|i| [0.1 * i as f64, -0.05 * i as f64]).collect();
        let v = CadlagPath::from_values(grid, 2, vals).unwrap();
        let x0 = SpectralVector::from_vec(vec![1.0, 2.0]);
        let (x, diag) =
            solve_deterministic_mild(&s, &DriftSpec::zero(2), &m, &x0, &v, &InnerSolver::default(), None)
                .unwrap();
        for i in [0, 7, 20] {
            let orbit = s.act(grid.time(i), &x0).unwrap();
            for c in 0..2 {
                assert!((x.value(i)[c] - orbit[c] - v.value(i)[c]).abs() < 1e-14);
            }
        }
        assert_eq!(diag.apriori_violations, 0);
    }

    #[test]
    fn linear_ode_is_first_order() {
        // X' = −X, X(0) = 1: implicit Euler gives (1 + Δt)^{−j}.
        let s = Semigroup::diagonal(vec![0.0], 0.0).unwrap();
        let f = DriftSpec {
            evaluator: Arc::new(AffineDrift {
                map: LinearMap::Scaled { dim: 1, factor: -1.0 },
                offset: None,
            }),
            monotonicity: -1.0,
            growth: 1.0,
        };
        let m = WeightedInnerProduct::unit(1);
        let err = |steps: usize| {
            let grid = TimeGrid::new(1.0, steps).unwrap();
            let v = CadlagPath::from_values(grid, 1, vec![0.0; steps + 1]).unwrap();
            let (x, d) = solve_deterministic_mild(
                &s,
                &f,
                &m,
                &SpectralVector::from_vec(vec![1.0]),
                &v,
                &InnerSolver::default(),
                None,
            )
            .unwrap();
            assert_eq!(d.apriori_violations, 0);
            (x.terminal()[0] - (-1f64).exp()).abs()
        };
        let (a, b) = (err(100), err(200));
        assert!(a < 2e-3 && (a / b - 2.0).abs() < 0.05, "{a} {b}");
    }

    #[test]
    fn cube_root_heat_inner_solves_converge() {
        let f = nemitsky(Reaction::NegCubeRoot, 6, 24).unwrap();
        let s = Semigroup::dirichlet_heat(6).unwrap();
        let m = WeightedInnerProduct::unit(6);
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let v = CadlagPath::from_values(grid, 6, vec![0.0; 201 * 6]).unwrap();
        let x0 = SpectralVector::from_vec(vec![1.0, -0.5, 0.3, 0.0, 0.2, -0.1]);
        for inner in [InnerSolver::default(), InnerSolver::default().with_damping(0.5)] {
            let (x, d) = solve_deterministic_mild(&s, &f, &m, &x0, &v, &inner, None).unwrap();
            assert_eq!(d.apriori_violations, 0);
            assert!(d.apriori_max_ratio <= 1.0);
            // Monotone drift and contraction: the norm never grows.
            let norms: Vec<f64> = (0..=200).map(|i| m.norm_sq(x.value(i))).collect();
            assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
    }

    #[test]
    fn nonconvergence_reported() {
        let f = nemitsky(Reaction::NegCubeRoot, 4, 16).unwrap();
        let s = Semigroup::dirichlet_heat(4).unwrap();
        let m = WeightedInnerProduct::unit(4);
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let v = CadlagPath::from_values(grid, 4, vec![0.0; 44]).unwrap();
        let x0 = SpectralVector::from_vec(vec![1.0, 0.5, 0.0, 0.0]);
        let inner = InnerSolver {
            max_iterations: 1,
            tolerance: 1e-15,
            ..Default::default()
        };
        let e = solve_deterministic_mild(&s, &f, &m, &x0, &v, &inner, None).unwrap_err();
        assert!(matches!(e, Error::NonConvergence { .. }), "{e}");
    }

    #[test]
    fn deterministic_model_converges_at_first_iteration() {
        let model = scalar_model(-1.0, 0.0, None, 1.0);
        let grid = model.grid(0.01).unwrap();
        let (x, trace) =
            picard_solve(&model, &StreamSeeder::new(1), 0, &grid, &PicardOptions::default()).unwrap();
        assert_eq!(trace.converged_at, Some(1));
        assert!(trace.e[1].mean < 1e-20);
        assert!((x.terminal()[0] - 1.01f64.powi(-100)).abs() < 1e-12);
    }

    #[test]
    fn picard_distances_fall_factorially_for_linear_noise() {
        let marks = MarkSpaceSpec::new(2.0, MarkLaw::Normal { mean: 0.0, sd: 0.5 }).unwrap();
        let model = scalar_model(-0.5, 0.5, Some(marks), 1.0);
        let grid = model.grid(0.01).unwrap();
        let opts = PicardOptions {
            n_max: 6,
            ..Default::default()
        };
        let (trace, _) = picard_campaign(&model, &grid, 200, &StreamSeeder::new(3), &opts).unwrap();
        for n in 1..6 {
            assert!(trace.e[n + 1].mean < trace.e[n].mean, "{}", trace.render());
            assert!(trace.ratio(n).unwrap() <= trace.ratio_bound(n));
        }
        assert!(trace.moment_violations(2.0).is_empty());
        assert_eq!(trace.apriori_violations, 0);
    }

    #[test]
    fn picard_limit_matches_direct_scheme_on_shared_noise() {
        let marks = MarkSpaceSpec::new(2.0, MarkLaw::Uniform { low: -0.3, high: 0.5 }).unwrap();
        let model = scalar_model(-1.0, 0.5, Some(marks), 1.0);
        let seeder = StreamSeeder::new(8);
        let dist = |dt: f64| {
            let grid = model.grid(dt).unwrap();
            let mut acc = 0.0;
            for p in 0..100 {
                let (x, _) = picard_solve(&model, &seeder, p, &grid, &PicardOptions::default()).unwrap();
                let y = direct_solve(&model, &seeder, p, &grid).unwrap();
                acc += x.sup_dist_sq(&y.path, model.metric()).unwrap();
            }
            acc / 100.0
        };
        let (coarse, fine) = (dist(0.01), dist(0.0025));
        assert!(fine < coarse, "{coarse} {fine}");
        assert!(coarse < 1e-2);
    }

    #[test]
    fn rescaling_maps_solutions_exactly() {
        let x0 = SpectralVector::from_vec(vec![0.4, 0.2, -0.1, 0.3]);
        let parts = ModelParts {
            name: "delay".into(),
            basis: Arc::new(Basis::product(&[("head", 1), ("hist", 3)]).unwrap()),
            metric: WeightedInnerProduct::new(vec![1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap(),
            semigroup: Semigroup::delay_shift(3).unwrap(),
            coefficients: CoefficientSet::new(
                DriftSpec {
                    evaluator: Arc::new(crate::coefficients::BlockDrift {
                        dim: 4,
                        block: 0..1,
                        inner: Arc::new(Pointwise {
                            map: Arc::new(Reaction::NegCubeRoot),
                            dim: 1,
                        }),
                    }),
                    monotonicity: 0.0,
                    growth: 1.0,
                },
                DiffusionSpec::zero(4, 0),
                JumpCoeffSpec {
                    evaluator: Arc::new(LinearMarkJump {
                        map: LinearMap::Transfer {
                            dim: 4,
                            from: 0..1,
                            to: 0,
                            factor: 1.0,
                        },
                    }),
                    lipschitz: 0.5,
                    growth: 0.5,
                },
            )
            .unwrap(),
            wiener: WienerSpec { modes: 0 },
            marks: MarkSpaceSpec::new(2.0, MarkLaw::Normal { mean: 0.0, sd: 0.5 }).unwrap(),
            initial: InitialCondition::Fixed(x0),
            horizon: 1.0,
            ito_constant: 1.0,
        };
        let model = ModelSpec::new(parts).unwrap();
        assert_eq!(model.alpha(), 1.0);
        let r = rescale_to_contraction(&model);
        assert_eq!(r.alpha(), 0.0);
        let grid = model.grid(0.01).unwrap();
        let seeder = StreamSeeder::new(21);
        let plain = PicardOptions {
            rescale: false,
            ..Default::default()
        };
        for p in 0..5 {
            let (a, _) = picard_solve(&model, &seeder, p, &grid, &PicardOptions::default()).unwrap();
            let (b, _) = picard_solve(&model, &seeder, p, &grid, &plain).unwrap();
            let scale = a.sup_norm_sq(model.metric()).max(1e-300);
            assert!(a.sup_dist_sq(&b, model.metric()).unwrap() / scale < 1e-20);
            let da = direct_solve(&model, &seeder, p, &grid).unwrap();
            let db = direct_solve(&r, &seeder, p, &grid).unwrap();
            let db = unscale_path(&db.path, 1.0);
            assert!(da.path.sup_dist_sq(&db, model.metric()).unwrap() / scale < 1e-20);
        }
    }

    #[test]
    fn direct_scheme_with_zero_coefficients_is_orbit() {
        let parts = ModelParts {
            name: "heat".into(),
            basis: Arc::new(Basis::sine(3).unwrap()),
            metric: WeightedInnerProduct::unit(3),
            semigroup: Semigroup::dirichlet_heat(3).unwrap(),
            coefficients: CoefficientSet::new(
                DriftSpec::zero(3),
                DiffusionSpec::zero(3, 0),
                JumpCoeffSpec::zero(3),
            )
            .unwrap(),
            wiener: WienerSpec { modes: 0 },
            marks: MarkSpaceSpec::none(),
            initial: InitialCondition::Fixed(SpectralVector::unit(3, 0)),
            horizon: 1.0,
            ito_constant: 1.0,
        };
        let model = ModelSpec::new(parts).unwrap();
        let grid = model.grid(0.01).unwrap();
        let d = direct_solve(&model, &StreamSeeder::new(0), 0, &grid).unwrap();
        let exact = (-std::f64::consts::PI.powi(2)).exp();
        assert!((d.path.terminal()[0] - exact).abs() < 1e-14);
    }

    #[test]
    fn hypothesis_failure_blocks_construction() {
        let mut f = nemitsky(Reaction::Cubic { coefficient: 1.0 }, 2, 8).unwrap();
        f.monotonicity = 0.0;
        f.growth = 1.0;
        let parts = ModelParts {
            name: "cubic".into(),
            basis: Arc::new(Basis::sine(2).unwrap()),
            metric: WeightedInnerProduct::unit(2),
            semigroup: Semigroup::dirichlet_heat(2).unwrap(),
            coefficients: CoefficientSet::new(f, DiffusionSpec::zero(2, 0), JumpCoeffSpec::zero(2))
                .unwrap(),
            wiener: WienerSpec { modes: 0 },
            marks: MarkSpaceSpec::none(),
            initial: InitialCondition::Fixed(SpectralVector::zeros(2)),
            horizon: 1.0,
            ito_constant: 1.0,
        };
        assert!(matches!(ModelSpec::new(parts), Err(Error::Hypothesis { .. })));
    }
}

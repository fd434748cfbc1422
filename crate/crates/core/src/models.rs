//! Builders for the shipped equations:
//!
//! * a stochastic reaction-diffusion equation on `(0, 1)` with a monotone
//!   reaction term and multiplicative jump noise;
//! * a damped wave equation driven by a real Lévy process;
//! * a delay equation with distributed delay on `(−1, 0]`;
//! * the linear scalar equation `dX = aX dt + σX dW + ∫ξX Ñ(dt, dξ)`,
//!   whose solution is a stochastic exponential in closed form.
//!
//! Every builder declares the structural constants analytically and hands
//! the model to [`ModelSpec::new`], which verifies them.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coefficients::{
    AffineDrift, BlockDrift, CoefficientSet, DiffusionSpec, Drift, DriftSpec, JumpCoeffSpec,
    LinearDiffusion, LinearMap, LinearMarkJump, Nemitsky, Pointwise, Reaction, ScalarMap, SumDrift,
};
use crate::error::{Error, Result};
use crate::noise::{LevyPathSpec, MarkLaw, MarkSpaceSpec, WienerSpec};
use crate::semigroup::Semigroup;
use crate::solver::{InitialCondition, ModelParts, ModelSpec};
use crate::state_space::{Basis, SpectralVector, WeightedInnerProduct};

/// Number of standard deviations of the Itô-inequality slack allowed by the
/// default tolerance constant.
const ITO_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleId {
    ReactionDiffusion,
    HyperbolicWave,
    DelayEquation,
    LinearScalar,
}

impl ExampleId {
    pub const ALL: [ExampleId; 4] = [
        ExampleId::ReactionDiffusion,
        ExampleId::HyperbolicWave,
        ExampleId::DelayEquation,
        ExampleId::LinearScalar,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExampleId::ReactionDiffusion => "reaction-diffusion",
            ExampleId::HyperbolicWave => "hyperbolic-wave",
            ExampleId::DelayEquation => "delay-equation",
            ExampleId::LinearScalar => "linear-scalar",
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExampleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExampleId::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown example `{s}`")))
    }
}

/// `c = κ √(2T) q e^{2α⁺T}` where `q = (D_g + D_k)(1 + ‖X₀‖²)` bounds the
/// quadratic-variation rate of the noise: the slack of the discretised
/// inequality is a sum of martingale increments of that size.
pub fn default_ito_constant(coeffs: &CoefficientSet, x0_sq: f64, alpha: f64, horizon: f64) -> f64 {
    let rate = (coeffs.diffusion.growth + coeffs.jump.growth) * (1.0 + x0_sq);
    ITO_SIGMAS * (2.0 * horizon).sqrt() * rate * (2.0 * alpha.max(0.0) * horizon).exp()
}

fn drift_sum(parts: Vec<Arc<dyn Drift>>) -> Arc<dyn Drift> {
    if parts.len() == 1 {
        parts.into_iter().next().expect("one part")
    } else {
        Arc::new(SumDrift { parts })
    }
}

fn finish(
    name: &str,
    basis: Basis,
    metric: WeightedInnerProduct,
    semigroup: Semigroup,
    coefficients: CoefficientSet,
    wiener: WienerSpec,
    marks: MarkSpaceSpec,
    x0: SpectralVector,
    horizon: f64,
    ito_constant: Option<f64>,
) -> Result<ModelSpec> {
    let x0_sq = metric.norm_sq(x0.as_slice());
    let c = ito_constant.unwrap_or_else(|| {
        default_ito_constant(&coefficients, x0_sq, semigroup.alpha(), horizon)
    });
    ModelSpec::new(ModelParts {
        name: name.into(),
        basis: Arc::new(basis),
        metric,
        semigroup,
        coefficients,
        wiener,
        marks,
        initial: InitialCondition::Fixed(x0),
        horizon,
        ito_constant: c,
    })
}

fn pad(coeffs: &[f64], dim: usize) -> Result<Vec<f64>> {
    if coeffs.len() > dim {
        return Err(Error::Config(format!(
            "{} initial coefficients given for dimension {dim}",
            coeffs.len()
        )));
    }
    let mut v = coeffs.to_vec();
    v.resize(dim, 0.0);
    Ok(v)
}

/// `du = Δu dt + f(u) dt + ηu dt + ∫ ξ u Ñ(dt, dξ)` on `(0, 1)` with
/// Dirichlet conditions, in `modes` sine modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReactionDiffusionConfig {
    pub modes: usize,
    /// Grid points of the Nemitsky quadrature; at least `2·modes`.
    pub points: usize,
    pub reaction: Reaction,
    pub eta: f64,
    pub marks: MarkSpaceSpec,
    /// Leading sine coefficients of `u₀`.
    pub initial: Vec<f64>,
    pub horizon: f64,
    pub ito_constant: Option<f64>,
}

impl Default for ReactionDiffusionConfig {
    fn default() -> Self {
        Self {
            modes: 8,
            points: 32,
            reaction: Reaction::NegCubeRoot,
            eta: 0.0,
            marks: MarkSpaceSpec::new(2.0, MarkLaw::Normal { mean: 0.0, sd: 0.5 }).expect("valid"),
            initial: vec![1.0, 0.5],
            horizon: 1.0,
            ito_constant: None,
        }
    }
}

pub fn build_reaction_diffusion(cfg: &ReactionDiffusionConfig) -> Result<ModelSpec> {
    let n = cfg.modes;
    if !cfg.reaction.is_decreasing() {
        return Err(Error::Config(format!(
            "reaction {:?} is not decreasing",
            cfg.reaction
        )));
    }
    let mut parts: Vec<Arc<dyn Drift>> = Vec::new();
    if !cfg.reaction.is_zero() {
        parts.push(Arc::new(Nemitsky::new(Arc::new(cfg.reaction), n, cfg.points)?));
    }
    if cfg.eta != 0.0 {
        parts.push(Arc::new(AffineDrift {
            map: LinearMap::Scaled {
                dim: n,
                factor: cfg.eta,
            },
            offset: None,
        }));
    }
    let d_s = cfg.reaction.growth_constant();
    let drift = match parts.len() {
        0 => DriftSpec::zero(n),
        1 => DriftSpec {
            evaluator: drift_sum(parts),
            monotonicity: cfg.eta.max(0.0),
            growth: if cfg.eta == 0.0 { d_s } else { cfg.eta * cfg.eta },
        },
        _ => DriftSpec {
            evaluator: drift_sum(parts),
            monotonicity: cfg.eta.max(0.0),
            growth: 2.0 * d_s + 2.0 * cfg.eta * cfg.eta,
        },
    };
    let m2 = cfg.marks.second_moment();
    let jump = if cfg.marks.is_trivial() {
        JumpCoeffSpec::zero(n)
    } else {
        JumpCoeffSpec {
            evaluator: Arc::new(LinearMarkJump {
                map: LinearMap::Scaled { dim: n, factor: 1.0 },
            }),
            lipschitz: m2,
            growth: m2,
        }
    };
    finish(
        "reaction-diffusion",
        Basis::sine(n)?,
        WeightedInnerProduct::unit(n),
        Semigroup::dirichlet_heat(n)?,
        CoefficientSet::new(drift, DiffusionSpec::zero(n, 0), jump)?,
        WienerSpec { modes: 0 },
        cfg.marks.clone(),
        SpectralVector::from_vec(pad(&cfg.initial, n)?),
        cfg.horizon,
        cfg.ito_constant,
    )
}

/// The reaction-diffusion model in a single retained mode with no reaction
/// term: `dX = (η − π²)X dt + ∫ ξ X Ñ(dt, dξ)`, a linear scalar equation
/// solved by [`doleans_dade`].
pub fn reaction_diffusion_single_mode(eta: f64, marks: MarkSpaceSpec, x0: f64) -> Result<ModelSpec> {
    build_reaction_diffusion(&ReactionDiffusionConfig {
        modes: 1,
        points: 2,
        reaction: Reaction::Zero,
        eta,
        marks,
        initial: vec![x0],
        ..Default::default()
    })
}

/// `u_tt = Δu − f(u_t) + u(t−) Ż` on `(0, 1)` with Dirichlet conditions,
/// written as a first-order system in `H¹₀ × L²` with state
/// `[u₁..uₙ, v₁..vₙ]` and energy metric `Σ λₖuₖ² + vₖ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperbolicConfig {
    pub modes: usize,
    pub points: usize,
    /// Damping nonlinearity acting on the velocity.
    pub damping: Reaction,
    pub levy: LevyPathSpec,
    /// Leading sine coefficients of the initial displacement; the initial
    /// velocity is zero.
    pub initial: Vec<f64>,
    pub horizon: f64,
    pub ito_constant: Option<f64>,
}

impl Default for HyperbolicConfig {
    fn default() -> Self {
        Self {
            modes: 16,
            points: 64,
            damping: Reaction::NegCubeRoot,
            levy: LevyPathSpec::new(
                0.0,
                0.04,
                MarkSpaceSpec::new(2.0, MarkLaw::Normal { mean: 0.0, sd: 0.5 }).expect("valid"),
            )
            .expect("valid"),
            initial: vec![0.1],
            horizon: 1.0,
            ito_constant: None,
        }
    }
}

/// Laplacian eigenvalues `k²π²`.
pub fn dirichlet_eigenvalues(modes: usize) -> Vec<f64> {
    (1..=modes).map(|k| (k as f64 * PI).powi(2)).collect()
}

pub fn build_hyperbolic(cfg: &HyperbolicConfig) -> Result<ModelSpec> {
    let n = cfg.modes;
    let dim = 2 * n;
    let lambda = dirichlet_eigenvalues(n);
    let mut weights = lambda.clone();
    weights.extend(std::iter::repeat_n(1.0, n));
    let metric = WeightedInnerProduct::new(weights)?;
    // ‖u‖_{L²}² ≤ ‖u‖²_{H¹}/π² on the displacement block.
    let poincare = 1.0 / (PI * PI);
    let b = cfg.levy.drift;

    let mut parts: Vec<Arc<dyn Drift>> = Vec::new();
    if !cfg.damping.is_zero() {
        if !cfg.damping.is_decreasing() {
            return Err(Error::Config(format!("damping {:?} is not decreasing", cfg.damping)));
        }
        parts.push(Arc::new(BlockDrift {
            dim,
            block: n..dim,
            inner: Arc::new(Nemitsky::new(Arc::new(cfg.damping), n, cfg.points)?),
        }));
    }
    if b != 0.0 {
        parts.push(Arc::new(AffineDrift {
            map: LinearMap::Transfer {
                dim,
                from: 0..n,
                to: n,
                factor: b,
            },
            offset: None,
        }));
    }
    let d_s = cfg.damping.growth_constant();
    let drift = match parts.len() {
        0 => DriftSpec::zero(dim),
        k => DriftSpec {
            evaluator: drift_sum(parts),
            // b⟨u, v⟩_{L²} ≤ |b|/π ‖u‖_{H¹}‖v‖ ≤ |b|/(2π)(‖u‖²_{H¹} + ‖v‖²)
            monotonicity: b.abs() / (2.0 * PI),
            growth: if k == 1 {
                if b == 0.0 { d_s } else { b * b * poincare }
            } else {
                2.0 * d_s + 2.0 * b * b * poincare
            },
        },
    };

    let sigma2 = cfg.levy.gaussian_variance;
    let (wiener, diffusion) = if sigma2 > 0.0 {
        (
            WienerSpec { modes: 1 },
            DiffusionSpec {
                evaluator: Arc::new(LinearDiffusion {
                    columns: vec![(
                        LinearMap::Transfer {
                            dim,
                            from: 0..n,
                            to: n,
                            factor: sigma2.sqrt(),
                        },
                        None,
                    )],
                }),
                lipschitz: sigma2 * poincare,
                growth: sigma2 * poincare,
            },
        )
    } else {
        (WienerSpec { modes: 0 }, DiffusionSpec::zero(dim, 0))
    };
    let marks = cfg.levy.jumps.clone();
    let jump = if marks.is_trivial() {
        JumpCoeffSpec::zero(dim)
    } else {
        let c = marks.second_moment() * poincare;
        JumpCoeffSpec {
            evaluator: Arc::new(LinearMarkJump {
                map: LinearMap::Transfer {
                    dim,
                    from: 0..n,
                    to: n,
                    factor: 1.0,
                },
            }),
            lipschitz: c,
            growth: c,
        }
    };
    let mut x0 = pad(&cfg.initial, n)?;
    x0.resize(dim, 0.0);
    finish(
        "hyperbolic-wave",
        Basis::product(&[("u", n), ("v", n)])?,
        metric,
        Semigroup::block_wave(lambda)?,
        CoefficientSet::new(drift, diffusion, jump)?,
        wiener,
        marks,
        SpectralVector::from_vec(x0),
        cfg.horizon,
        cfg.ito_constant,
    )
}

/// `dx = (∫₋₁⁰ x(t+θ) dθ) dt + f(x(t)) dt + x(t−) dZ` on
/// `ℝ × L²((−1, 0])` with the history held as `cells` cell averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayConfig {
    pub cells: usize,
    pub reaction: Reaction,
    pub levy: LevyPathSpec,
    /// Cell averages of the initial history, oldest first; `None` means
    /// `ψ(θ) = sin(πθ)`.
    pub history: Option<Vec<f64>>,
    /// Initial head value; `None` means `ψ(0)`.
    pub head: Option<f64>,
    pub horizon: f64,
    pub ito_constant: Option<f64>,
}

impl Default for DelayConfig {
    fn default() -> Self {
        Self {
            cells: 16,
            reaction: Reaction::NegCubeRoot,
            levy: LevyPathSpec::new(
                0.0,
                0.0,
                MarkSpaceSpec::new(2.0, MarkLaw::Normal { mean: 0.0, sd: 0.5 }).expect("valid"),
            )
            .expect("valid"),
            history: None,
            head: None,
            horizon: 1.0,
            ito_constant: None,
        }
    }
}

/// Cell averages of `sin(πθ)` on `cells` equal cells of `(−1, 0]`.
pub fn sine_history(cells: usize) -> Vec<f64> {
    let d = 1.0 / cells as f64;
    (0..cells)
        .map(|i| {
            let a = -1.0 + i as f64 * d;
            let b = a + d;
            ((PI * a).cos() - (PI * b).cos()) / (PI * d)
        })
        .collect()
}

pub fn build_delay(cfg: &DelayConfig) -> Result<ModelSpec> {
    let m = cfg.cells;
    let dim = m + 1;
    let semigroup = Semigroup::delay_shift(m)?;
    let mut weights = vec![1.0];
    weights.extend(std::iter::repeat_n(1.0 / m as f64, m));
    let metric = WeightedInnerProduct::new(weights)?;
    let head_only = |factor: f64| LinearMap::Transfer {
        dim,
        from: 0..1,
        to: 0,
        factor,
    };
    let b = cfg.levy.drift;

    let mut parts: Vec<Arc<dyn Drift>> = Vec::new();
    if !cfg.reaction.is_zero() {
        if !cfg.reaction.is_decreasing() {
            return Err(Error::Config(format!("reaction {:?} is not decreasing", cfg.reaction)));
        }
        parts.push(Arc::new(BlockDrift {
            dim,
            block: 0..1,
            inner: Arc::new(Pointwise {
                map: Arc::new(cfg.reaction),
                dim: 1,
            }),
        }));
    }
    if b != 0.0 {
        parts.push(Arc::new(AffineDrift {
            map: head_only(b),
            offset: None,
        }));
    }
    let d_s = cfg.reaction.growth_constant();
    let drift = match parts.len() {
        0 => DriftSpec::zero(dim),
        k => DriftSpec {
            evaluator: drift_sum(parts),
            monotonicity: b.max(0.0),
            growth: if k == 1 {
                if b == 0.0 { d_s } else { b * b }
            } else {
                2.0 * d_s + 2.0 * b * b
            },
        },
    };
    let sigma2 = cfg.levy.gaussian_variance;
    let (wiener, diffusion) = if sigma2 > 0.0 {
        (
            WienerSpec { modes: 1 },
            DiffusionSpec {
                evaluator: Arc::new(LinearDiffusion {
                    columns: vec![(head_only(sigma2.sqrt()), None)],
                }),
                lipschitz: sigma2,
                growth: sigma2,
            },
        )
    } else {
        (WienerSpec { modes: 0 }, DiffusionSpec::zero(dim, 0))
    };
    let marks = cfg.levy.jumps.clone();
    let jump = if marks.is_trivial() {
        JumpCoeffSpec::zero(dim)
    } else {
        let c = marks.second_moment();
        JumpCoeffSpec {
            evaluator: Arc::new(LinearMarkJump { map: head_only(1.0) }),
            lipschitz: c,
            growth: c,
        }
    };
    let history = match &cfg.history {
        Some(h) if h.len() == m => h.clone(),
        Some(h) => {
            return Err(Error::Config(format!(
                "history has {} cells, expected {m}",
                h.len()
            )))
        }
        None => sine_history(m),
    };
    let head = cfg.head.unwrap_or(0.0);
    let mut x0 = vec![head];
    x0.extend(history);
    finish(
        "delay-equation",
        Basis::product(&[("head", 1), ("history", m)])?,
        metric,
        semigroup,
        CoefficientSet::new(drift, diffusion, jump)?,
        wiener,
        marks,
        SpectralVector::from_vec(x0),
        cfg.horizon,
        cfg.ito_constant,
    )
}

/// `dX = aX dt + σX dW + ∫ ξ X Ñ(dt, dξ)` on `ℝ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearScalarConfig {
    pub a: f64,
    pub sigma: f64,
    pub marks: MarkSpaceSpec,
    pub x0: f64,
    pub horizon: f64,
    pub ito_constant: Option<f64>,
}

impl Default for LinearScalarConfig {
    fn default() -> Self {
        Self {
            a: -1.0,
            sigma: 0.5,
            marks: MarkSpaceSpec::new(2.0, MarkLaw::Uniform { low: -0.3, high: 0.5 }).expect("valid"),
            x0: 1.0,
            horizon: 1.0,
            ito_constant: None,
        }
    }
}

pub fn build_linear_scalar(cfg: &LinearScalarConfig) -> Result<ModelSpec> {
    let drift = if cfg.a == 0.0 {
        DriftSpec::zero(1)
    } else {
        DriftSpec {
            evaluator: Arc::new(AffineDrift {
                map: LinearMap::Scaled { dim: 1, factor: cfg.a },
                offset: None,
            }),
            monotonicity: cfg.a,
            growth: cfg.a * cfg.a,
        }
    };
    let (wiener, diffusion) = if cfg.sigma == 0.0 {
        (WienerSpec { modes: 0 }, DiffusionSpec::zero(1, 0))
    } else {
        let s2 = cfg.sigma * cfg.sigma;
        (
            WienerSpec { modes: 1 },
            DiffusionSpec {
                evaluator: Arc::new(LinearDiffusion {
                    columns: vec![(LinearMap::Scaled { dim: 1, factor: cfg.sigma }, None)],
                }),
                lipschitz: s2,
                growth: s2,
            },
        )
    };
    let jump = if cfg.marks.is_trivial() {
        JumpCoeffSpec::zero(1)
    } else {
        let c = cfg.marks.second_moment();
        JumpCoeffSpec {
            evaluator: Arc::new(LinearMarkJump {
                map: LinearMap::Scaled { dim: 1, factor: 1.0 },
            }),
            lipschitz: c,
            growth: c,
        }
    };
    finish(
        "linear-scalar",
        Basis::new(vec!["x".into()])?,
        WeightedInnerProduct::unit(1),
        Semigroup::diagonal(vec![0.0], 0.0)?,
        CoefficientSet::new(drift, diffusion, jump)?,
        wiener,
        cfg.marks.clone(),
        SpectralVector::from_vec(vec![cfg.x0]),
        cfg.horizon,
        cfg.ito_constant,
    )
}

/// Stochastic exponential solving the linear scalar equation:
/// `X_t = X₀ exp((a − σ²/2 − ∫ξν(dξ)) t + σW_t) Πᵢ (1 + ξᵢ)` over the marks
/// of the jumps up to `t`.
pub fn doleans_dade(
    x0: f64,
    a: f64,
    sigma: f64,
    marks: &MarkSpaceSpec,
    t: f64,
    w_t: f64,
    jump_marks: impl IntoIterator<Item = f64>,
) -> f64 {
    let product: f64 = jump_marks.into_iter().map(|xi| 1.0 + xi).product();
    x0 * ((a - 0.5 * sigma * sigma - marks.first_moment()) * t + sigma * w_t).exp() * product
}

/// Any shipped model with its default parameters; `dim` overrides the
/// mode or cell count where the example has one.
pub fn build_default(id: ExampleId, dim: Option<usize>) -> Result<ModelSpec> {
    match id {
        ExampleId::ReactionDiffusion => {
            let mut cfg = ReactionDiffusionConfig::default();
            if let Some(d) = dim {
                cfg.modes = d;
                cfg.points = cfg.points.max(4 * d);
            }
            build_reaction_diffusion(&cfg)
        }
        ExampleId::HyperbolicWave => {
            let mut cfg = HyperbolicConfig::default();
            if let Some(d) = dim {
                cfg.modes = d;
                cfg.points = cfg.points.max(4 * d);
            }
            build_hyperbolic(&cfg)
        }
        ExampleId::DelayEquation => {
            let mut cfg = DelayConfig::default();
            if let Some(d) = dim {
                cfg.cells = d;
            }
            build_delay(&cfg)
        }
        ExampleId::LinearScalar => build_linear_scalar(&LinearScalarConfig::default()),
    }
}

/// Values of the scalar map at sample points; used by reports.
pub fn sample_reaction(r: &Reaction, points: &[f64]) -> Vec<f64> {
    points.iter().map(|u| r.value(*u)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{StreamSeeder, TimeGrid};
    use crate::solver::{direct_path, direct_solve, picard_solve, PicardOptions};
    use crate::stats::Estimate;

    #[test]
    fn example_ids_round_trip() {
        for id in ExampleId::ALL {
            assert_eq!(id.as_str().parse::<ExampleId>().unwrap(), id);
        }
        assert!("heat".parse::<ExampleId>().is_err());
    }

    #[test]
    fn reaction_diffusion_default_passes_checks() {
        let m = build_default(ExampleId::ReactionDiffusion, None).unwrap();
        let r = m.hypothesis_report().unwrap();
        assert!(r.pass());
        assert_eq!(m.coefficients().monotonicity(), 0.0);
        assert!(r.semimonotone.max_ratio <= 0.0);
        assert!((r.lipschitz_growth.lipschitz_k - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pure_heat_mode_decays_exactly() {
        let m = build_reaction_diffusion(&ReactionDiffusionConfig {
            modes: 3,
            points: 6,
            reaction: Reaction::Zero,
            marks: MarkSpaceSpec::none(),
            initial: vec![1.0],
            ..Default::default()
        })
        .unwrap();
        let grid = m.grid(0.01).unwrap();
        let (x, _) = picard_solve(&m, &StreamSeeder::new(0), 0, &grid, &PicardOptions::default()).unwrap();
        let exact = (-PI * PI).exp();
        assert!((x.terminal()[0] - exact).abs() < 1e-14);
        assert_eq!(&x.terminal()[1..], &[0.0, 0.0]);
    }

    #[test]
    fn positive_eta_declares_and_verifies_m() {
        let m = build_reaction_diffusion(&ReactionDiffusionConfig {
            eta: 0.5,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(m.coefficients().monotonicity(), 0.5);
        let r = m.hypothesis_report().unwrap();
        assert!(r.semimonotone.max_ratio <= 0.5 + 1e-9 && r.semimonotone.max_ratio > 0.0);
    }

    #[test]
    fn increasing_reaction_rejected() {
        let e = build_reaction_diffusion(&ReactionDiffusionConfig {
            reaction: Reaction::Linear { slope: 1.0 },
            ..Default::default()
        });
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn single_mode_matches_stochastic_exponential() {
        let marks = MarkSpaceSpec::new(2.0, MarkLaw::Uniform { low: -0.3, high: 0.5 }).unwrap();
        let m = reaction_diffusion_single_mode(0.3, marks.clone(), 1.0).unwrap();
        let seeder = StreamSeeder::new(4);
        let grid = m.grid(1e-3).unwrap();
        let mut sq = 0.0;
        for p in 0..200 {
            let d = direct_solve(&m, &seeder, p, &grid).unwrap();
            let noise = m.sample_noise(&grid, &seeder, p).unwrap();
            let exact = doleans_dade(
                1.0,
                0.3 - PI * PI,
                0.0,
                &marks,
                1.0,
                0.0,
                noise.jumps.events().iter().map(|e| e.mark),
            );
            sq += (d.path.terminal()[0] - exact).powi(2);
        }
        assert!((sq / 200.0).sqrt() < 5e-3);
    }

    #[test]
    fn wave_without_forcing_conserves_energy() {
        let m = build_hyperbolic(&HyperbolicConfig {
            modes: 1,
            points: 2,
            damping: Reaction::Zero,
            levy: LevyPathSpec::zero(),
            initial: vec![0.3],
            ..Default::default()
        })
        .unwrap();
        let grid = m.grid(1e-3).unwrap();
        let d = direct_solve(&m, &StreamSeeder::new(0), 0, &grid).unwrap();
        let e0 = m.metric().norm_sq(d.path.value(0));
        for i in 0..=grid.steps() {
            assert!((m.metric().norm_sq(d.path.value(i)) - e0).abs() < 1e-10);
        }
    }

    #[test]
    fn cube_root_damping_dissipates_energy() {
        let damped = build_hyperbolic(&HyperbolicConfig {
            modes: 4,
            points: 16,
            ..Default::default()
        })
        .unwrap();
        let free = build_hyperbolic(&HyperbolicConfig {
            modes: 4,
            points: 16,
            damping: Reaction::Zero,
            ..Default::default()
        })
        .unwrap();
        let r = damped.hypothesis_report().unwrap();
        assert!(r.pass() && damped.coefficients().monotonicity() == 0.0);
        let grid = damped.grid(1e-2).unwrap();
        let seeder = StreamSeeder::new(9);
        let (mut ed, mut ef) = (Vec::new(), Vec::new());
        for p in 0..500 {
            let a = direct_solve(&damped, &seeder, p, &grid).unwrap();
            let b = direct_solve(&free, &seeder, p, &grid).unwrap();
            ed.push(damped.metric().norm_sq(a.path.terminal()));
            ef.push(free.metric().norm_sq(b.path.terminal()));
        }
        let diff: Vec<f64> = ed.iter().zip(&ef).map(|(a, b)| b - a).collect();
        let est = Estimate::from_samples(&diff);
        assert!(est.mean > 4.0 * est.std_error, "{est:?}");
        // Without noise the damped energy is non-increasing along the path.
        let quiet = build_hyperbolic(&HyperbolicConfig {
            modes: 4,
            points: 16,
            levy: LevyPathSpec::zero(),
            ..Default::default()
        })
        .unwrap();
        let (x, _) = picard_solve(&quiet, &seeder, 0, &grid, &PicardOptions::default()).unwrap();
        let energies: Vec<f64> = (0..=grid.steps()).map(|i| quiet.metric().norm_sq(x.value(i))).collect();
        assert!(energies.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(energies[grid.steps()] < energies[0]);
    }

    #[test]
    fn wave_jump_constant_carries_poincare_factor() {
        let m = build_default(ExampleId::HyperbolicWave, Some(4)).unwrap();
        let r = m.hypothesis_report().unwrap();
        let expected = 2.0 * 0.25 / (PI * PI);
        assert!((m.coefficients().jump.lipschitz - expected).abs() < 1e-15);
        assert!(r.lipschitz_growth.lipschitz_k <= expected * (1.0 + 1e-9));
        assert!(r.lipschitz_growth.lipschitz_k > 0.5 * expected);
    }

    #[test]
    fn delay_initial_head_is_history_at_zero() {
        let m = build_default(ExampleId::DelayEquation, None).unwrap();
        let x0 = m.sample_initial(&StreamSeeder::new(0), 0);
        assert_eq!(x0[0], 0.0);
        assert!(x0.as_slice()[1..].iter().all(|v| *v < 0.0));
        assert!(m.hypothesis_report().unwrap().pass());
        assert_eq!(m.alpha(), 1.0);
    }

    /// Method-of-steps oracle for `x' = ∫₋₁⁰ x(t+θ) dθ`, history
    /// `sin(πθ)`, `x(0) = 0`: explicit Euler on a fine grid with the
    /// trapezoid rule over the stored past.
    fn delay_oracle(per_unit: usize, horizon: f64) -> f64 {
        let h = 1.0 / per_unit as f64;
        let mut xs: Vec<f64> = (0..=per_unit)
            .map(|i| (PI * (-1.0 + i as f64 * h)).sin())
            .collect();
        let steps = (horizon * per_unit as f64).round() as usize;
        for _ in 0..steps {
            let n = xs.len();
            let window = &xs[n - 1 - per_unit..];
            let integral = h * (window.iter().sum::<f64>() - 0.5 * (window[0] + window[per_unit]));
            xs.push(xs[n - 1] + h * integral);
        }
        *xs.last().unwrap()
    }

    #[test]
    fn delay_head_matches_method_of_steps() {
        let oracle = delay_oracle(4 * 4096, 1.0);
        let err = |cells: usize| {
            let m = build_delay(&DelayConfig {
                cells,
                reaction: Reaction::Zero,
                levy: LevyPathSpec::zero(),
                ..Default::default()
            })
            .unwrap();
            let grid = TimeGrid::new(1.0, 100).unwrap();
            let noise = m.sample_noise(&grid, &StreamSeeder::new(0), 0).unwrap();
            let x0 = m.sample_initial(&StreamSeeder::new(0), 0);
            (direct_path(&m, &x0, &grid, &noise).unwrap().path.terminal()[0] - oracle).abs()
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        assert!(e1 < 0.05, "{e1}");
        assert!(e2 < e1 && e3 < e2, "{e1} {e2} {e3}");
        assert!(e2 / e3 > 1.6, "{e1} {e2} {e3}");
    }

    #[test]
    fn linear_scalar_matches_stochastic_exponential() {
        let cfg = LinearScalarConfig::default();
        let m = build_linear_scalar(&cfg).unwrap();
        let seeder = StreamSeeder::new(12);
        let grid = m.grid(1.0 / 1024.0).unwrap();
        let mut sq = 0.0;
        for p in 0..200 {
            let noise = m.sample_noise(&grid, &seeder, p).unwrap();
            let d = direct_path(&m, &m.sample_initial(&seeder, p), &grid, &noise).unwrap();
            let exact = doleans_dade(
                cfg.x0,
                cfg.a,
                cfg.sigma,
                &cfg.marks,
                1.0,
                noise.wiener.terminal()[0],
                noise.jumps.events().iter().map(|e| e.mark),
            );
            sq += (d.path.terminal()[0] - exact).powi(2);
        }
        assert!((sq / 200.0).sqrt() < 1e-2);
    }
}

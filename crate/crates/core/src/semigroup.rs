//! Closed-form `C₀` semigroups on the truncated state space.
//!
//! Three structural families are supported:
//!
//! * [`SemigroupKind::Diagonal`]: `S_t = diag(e^{μₖ t})`, e.g. the Dirichlet
//!   heat semigroup in the sine basis.
//! * [`SemigroupKind::BlockWave`]: the wave group on `H¹₀ × L²`, one 2×2
//!   rotation block per sine mode. Coefficients are laid out as
//!   `[u₁..uₙ, v₁..vₙ]`.
//! * [`SemigroupKind::DelayShift`]: the delay semigroup on `ℝ × L²((−1,0])`
//!   with piecewise-constant histories on `m` cells, laid out as
//!   `[head, v₁..vₘ]` where `vₘ` is the cell adjacent to `θ = 0`. The
//!   history is transported by a first-order upwind generator fed by the
//!   head value, and the head is driven by `∫₋₁⁰ x(t+θ) dθ`. The propagator
//!   is the exact exponential of that discrete generator, so the semigroup
//!   law holds to rounding.
//!
//! Every semigroup also carries a scalar exponential factor `e^{shift·t}`,
//! used to rescale a semigroup with growth bound `α` into a contraction.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::state_space::{SpectralVector, WeightedInnerProduct};

#[derive(Debug, Clone, PartialEq)]
pub enum SemigroupKind {
    Diagonal { eigenvalues: Vec<f64> },
    BlockWave { laplacian: Vec<f64> },
    DelayShift { cells: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Semigroup {
    kind: SemigroupKind,
    alpha: f64,
    shift: f64,
}

impl Semigroup {
    pub fn diagonal(eigenvalues: Vec<f64>, alpha: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Domain("diagonal semigroup needs eigenvalues".into()));
        }
        Ok(Self {
            kind: SemigroupKind::Diagonal { eigenvalues },
            alpha,
            shift: 0.0,
        })
    }

    /// Dirichlet Laplacian on `(0, 1)` in the first `modes` sine modes:
    /// eigenvalues `−k²π²`, contraction.
    pub fn dirichlet_heat(modes: usize) -> Result<Self> {
        let pi2 = std::f64::consts::PI.powi(2);
        Self::diagonal((1..=modes).map(|k| -((k * k) as f64) * pi2).collect(), 0.0)
    }

    /// Wave group for `u'' = Δu`; `laplacian` holds the positive
    /// eigenvalues `λₖ` of `−Δ`. Unitary in the energy metric
    /// `Σ λₖ uₖ² + vₖ²`, hence `α = 0`.
    pub fn block_wave(laplacian: Vec<f64>) -> Result<Self> {
        if laplacian.is_empty() || laplacian.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Domain(
                "wave semigroup needs positive Laplacian eigenvalues".into(),
            ));
        }
        Ok(Self {
            kind: SemigroupKind::BlockWave { laplacian },
            alpha: 0.0,
            shift: 0.0,
        })
    }

    /// Delay semigroup on `cells` history cells. In the metric with weight
    /// one on the head and `1/cells` on each history cell the discrete
    /// generator satisfies `⟨Ax, x⟩ ≤ ‖x‖²`, so `α = 1`.
    pub fn delay_shift(cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::Domain("delay semigroup needs at least one cell".into()));
        }
        Ok(Self {
            kind: SemigroupKind::DelayShift { cells },
            alpha: 1.0,
            shift: 0.0,
        })
    }

    /// Overrides the declared growth bound.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn kind(&self) -> &SemigroupKind {
        &self.kind
    }

    /// Declared growth bound: `‖S_t‖ ≤ e^{αt}`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SemigroupKind::Diagonal { eigenvalues } => eigenvalues.len(),
            SemigroupKind::BlockWave { laplacian } => 2 * laplacian.len(),
            SemigroupKind::DelayShift { cells } => cells + 1,
        }
    }

    /// `e^{−αt} S_t` with declared bound `α_declared − α`.
    pub fn rescaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        match &mut out.kind {
            SemigroupKind::Diagonal { eigenvalues } => {
                for mu in eigenvalues.iter_mut() {
                    *mu -= alpha;
                }
            }
            _ => out.shift -= alpha,
        }
        out.alpha -= alpha;
        out
    }

    pub fn act(&self, t: f64, x: &SpectralVector) -> Result<SpectralVector> {
        check_dim(self.dim(), x.dim())?;
        let prop = self.propagator(t)?;
        let mut out = SpectralVector::zeros(x.dim());
        prop.apply(x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Precomputed linear map `S_t` for a fixed `t`.
    pub fn propagator(&self, t: f64) -> Result<Propagator> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!(
                "semigroup time must be finite and non-negative, got {t}"
            )));
        }
        let scale = (self.shift * t).exp();
        Ok(match &self.kind {
            SemigroupKind::Diagonal { eigenvalues } => {
                Propagator::Diagonal(eigenvalues.iter().map(|mu| (mu * t).exp() * scale).collect())
            }
            SemigroupKind::BlockWave { laplacian } => {
                let mut cos = Vec::with_capacity(laplacian.len());
                let mut sin_over = Vec::with_capacity(laplacian.len());
                let mut sin_times = Vec::with_capacity(laplacian.len());
                for lambda in laplacian {
                    let omega = lambda.sqrt();
                    let (s, c) = (omega * t).sin_cos();
                    cos.push(c * scale);
                    sin_over.push(s / omega * scale);
                    sin_times.push(-omega * s * scale);
                }
                Propagator::Wave {
                    cos,
                    sin_over,
                    sin_times,
                }
            }
            SemigroupKind::DelayShift { cells } => {
                let gen = delay_generator(*cells) * t;
                Propagator::Dense(gen.exp() * scale)
            }
        })
    }

    /// Applies the generator `A` (including the rescaling shift).
    pub fn apply_generator(&self, x: &SpectralVector) -> Result<SpectralVector> {
        check_dim(self.dim(), x.dim())?;
        let x = x.as_slice();
        let mut out = match &self.kind {
            SemigroupKind::Diagonal { eigenvalues } => {
                eigenvalues.iter().zip(x).map(|(mu, v)| mu * v).collect()
            }
            SemigroupKind::BlockWave { laplacian } => {
                let n = laplacian.len();
                let mut out = vec![0.0; 2 * n];
                for k in 0..n {
                    out[k] = x[n + k];
                    out[n + k] = -laplacian[k] * x[k];
                }
                out
            }
            SemigroupKind::DelayShift { cells } => {
                let gen = delay_generator(*cells);
                (gen * nalgebra::DVector::from_column_slice(x))
                    .iter()
                    .copied()
                    .collect()
            }
        };
        for (o, v) in out.iter_mut().zip(x) {
            *o += self.shift * v;
        }
        Ok(SpectralVector::from_vec(out))
    }

    /// Samples `‖S_t x‖ / ‖x‖` over random `t ∈ [0, t_max]` and Gaussian
    /// `x`, flagging any ratio above `e^{αt}(1 + 1e-9)`.
    pub fn check_contraction<R: Rng + ?Sized>(
        &self,
        metric: &WeightedInnerProduct,
        samples: usize,
        t_max: f64,
        rng: &mut R,
    ) -> Result<ContractionReport> {
        check_dim(self.dim(), metric.dim())?;
        if samples == 0 {
            return Err(Error::Domain("contraction check needs samples ≥ 1".into()));
        }
        let dim = self.dim();
        let mut max_ratio = 0.0f64;
        let mut max_excess = 0.0f64;
        let mut y = vec![0.0; dim];
        for _ in 0..samples {
            let t = rng.random::<f64>() * t_max;
            let x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let nx = metric.norm_sq(&x).sqrt();
            if nx == 0.0 {
                continue;
            }
            self.propagator(t)?.apply(&x, &mut y);
            let ratio = metric.norm_sq(&y).sqrt() / nx;
            max_ratio = max_ratio.max(ratio);
            max_excess = max_excess.max(ratio / (self.alpha * t).exp());
        }
        Ok(ContractionReport {
            max_ratio,
            max_excess,
            violation: max_excess > 1.0 + 1e-9,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContractionReport {
    /// Largest observed `‖S_t x‖ / ‖x‖`.
    pub max_ratio: f64,
    /// Largest observed `‖S_t x‖ / (e^{αt} ‖x‖)`.
    pub max_excess: f64,
    pub violation: bool,
}

/// `S_t` frozen at one time.
#[derive(Debug, Clone)]
pub enum Propagator {
    Diagonal(Vec<f64>),
    Wave {
        cos: Vec<f64>,
        sin_over: Vec<f64>,
        sin_times: Vec<f64>,
    },
    Dense(DMatrix<f64>),
}

impl Propagator {
    /// `out = S_t x`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Propagator::Diagonal(f) => {
                for ((o, v), g) in out.iter_mut().zip(x).zip(f) {
                    *o = g * v;
                }
            }
            Propagator::Wave {
                cos,
                sin_over,
                sin_times,
            } => {
                let n = cos.len();
                let (u, v) = x.split_at(n);
                let (ou, ov) = out.split_at_mut(n);
                for k in 0..n {
                    ou[k] = cos[k] * u[k] + sin_over[k] * v[k];
                    ov[k] = sin_times[k] * u[k] + cos[k] * v[k];
                }
            }
            Propagator::Dense(m) => {
                let n = m.nrows();
                for (i, o) in out.iter_mut().enumerate().take(n) {
                    let mut acc = 0.0;
                    for (j, v) in x.iter().enumerate() {
                        acc += m[(i, j)] * v;
                    }
                    *o = acc;
                }
            }
        }
    }

    /// `x ← S_t x`
    pub fn apply_in_place(&self, x: &mut [f64], scratch: &mut Vec<f64>) {
        scratch.clear();
        scratch.extend_from_slice(x);
        self.apply(scratch, x);
    }
}

/// Upwind generator of the delay semigroup on `cells` history cells.
fn delay_generator(cells: usize) -> DMatrix<f64> {
    let n = cells + 1;
    let width = 1.0 / cells as f64;
    let mut a = DMatrix::zeros(n, n);
    for j in 1..n {
        a[(0, j)] = width;
        a[(j, j)] = -1.0 / width;
        let upstream = if j == cells { 0 } else { j + 1 };
        a[(j, upstream)] = 1.0 / width;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_vec(rng: &mut ChaCha8Rng, dim: usize) -> SpectralVector {
        SpectralVector::from_vec((0..dim).map(|_| rng.sample(StandardNormal)).collect())
    }

    fn all_families() -> Vec<Semigroup> {
        vec![
            Semigroup::dirichlet_heat(6).unwrap(),
            Semigroup::block_wave((1..=4).map(|k| (k * k) as f64 * PI * PI).collect()).unwrap(),
            Semigroup::delay_shift(8).unwrap(),
            Semigroup::delay_shift(8).unwrap().rescaled(1.0),
        ]
    }

    #[test]
    fn identity_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in all_families() {
            let x = random_vec(&mut rng, s.dim());
            let y = s.act(0.0, &x).unwrap();
            for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn scalar_exponential() {
        let s = Semigroup::diagonal(vec![-1.0], 0.0).unwrap();
        let y = s.act(1.0, &SpectralVector::unit(1, 0)).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn harmonic_oscillator_quarter_period() {
        let s = Semigroup::block_wave(vec![1.0]).unwrap();
        let y = s
            .act(PI / 2.0, &SpectralVector::from_vec(vec![1.0, 0.0]))
            .unwrap();
        assert!(y[0].abs() < 1e-15);
        assert!((y[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_time_is_domain_error() {
        let s = Semigroup::dirichlet_heat(2).unwrap();
        assert!(matches!(
            s.act(-0.1, &SpectralVector::zeros(2)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn semigroup_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for s in all_families() {
            for _ in 0..250 {
                let t = rng.random::<f64>();
                let r = rng.random::<f64>();
                let x = random_vec(&mut rng, s.dim());
                let joint = s.act(t + r, &x).unwrap();
                let split = s.act(t, &s.act(r, &x).unwrap()).unwrap();
                for (a, b) in joint.as_slice().iter().zip(split.as_slice()) {
                    assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn generator_is_first_order_derivative_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in all_families() {
            let x = random_vec(&mut rng, s.dim());
            let ax = s.apply_generator(&x).unwrap();
            let err = |h: f64| {
                let sx = s.act(h, &x).unwrap();
                sx.as_slice()
                    .iter()
                    .zip(x.as_slice())
                    .zip(ax.as_slice())
                    .map(|((a, b), c)| ((a - b) / h - c).abs())
                    .fold(0.0, f64::max)
            };
            let (e1, e2) = (err(1e-4), err(5e-5));
            assert!(e1 < 1e-1 * (1.0 + ax.as_slice().iter().map(|v| v.abs()).fold(0.0, f64::max)));
            // first order: halving h roughly halves the error
            assert!(e2 < 0.6 * e1, "{e1} -> {e2}");
        }
    }

    #[test]
    fn heat_is_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = Semigroup::dirichlet_heat(8).unwrap();
        let r = s
            .check_contraction(&WeightedInnerProduct::unit(8), 500, 2.0, &mut rng)
            .unwrap();
        assert!(!r.violation);
        assert!(r.max_ratio <= 1.0);
    }

    #[test]
    fn wave_conserves_energy_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lambdas: Vec<f64> = (1..=5).map(|k| (k * k) as f64 * PI * PI).collect();
        let mut w = lambdas.clone();
        w.extend(std::iter::repeat_n(1.0, 5));
        let metric = WeightedInnerProduct::new(w).unwrap();
        let s = Semigroup::block_wave(lambdas).unwrap();
        let r = s.check_contraction(&metric, 500, 3.0, &mut rng).unwrap();
        assert!(!r.violation);
        // per-mode energy identity λ(u cos + v sin/ω)² + (−ωu sin + v cos)² = λu² + v²
        assert!((r.max_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn growth_beyond_declared_bound_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = Semigroup::diagonal(vec![0.5], 0.0).unwrap();
        let r = s
            .check_contraction(&WeightedInnerProduct::unit(1), 10, 1.0, &mut rng)
            .unwrap();
        assert!(r.violation);
    }

    #[test]
    fn delay_growth_bound_and_rescaled_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cells = 10;
        let mut w = vec![1.0];
        w.extend(std::iter::repeat_n(1.0 / cells as f64, cells));
        let metric = WeightedInnerProduct::new(w).unwrap();
        let s = Semigroup::delay_shift(cells).unwrap();
        assert!(!s.check_contraction(&metric, 300, 2.0, &mut rng).unwrap().violation);
        let r = s.rescaled(1.0);
        assert_eq!(r.alpha(), 0.0);
        let rep = r.check_contraction(&metric, 300, 2.0, &mut rng).unwrap();
        assert!(!rep.violation && rep.max_ratio <= 1.0 + 1e-9);
    }

    #[test]
    fn rescaling_diagonal_shifts_eigenvalue() {
        let s = Semigroup::diagonal(vec![1.0], 1.0).unwrap().rescaled(1.0);
        assert_eq!(
            s.kind(),
            &SemigroupKind::Diagonal {
                eigenvalues: vec![0.0]
            }
        );
        assert_eq!(s.alpha(), 0.0);
    }
}

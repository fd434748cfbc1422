//! Left-point quadrature of `∫₀ᵗ S_{t−s} dZ_s`, quadratic variation of the
//! forcing, and the pathwise Itô-type inequality
//!
//! ```text
//! ‖X_t‖² ≤ e^{2αt}‖X₀‖² + 2∫₀ᵗ e^{2α(t−s)}⟨X_{s−}, dZ_s⟩ + ∫₀ᵗ e^{2α(t−s)} d[Z]_s
//! ```
//!
//! for `X_t = S_t X₀ + ∫₀ᵗ S_{t−s} dZ_s` with `‖S_t‖ ≤ e^{αt}`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::noise::{MarkSpaceSpec, NoiseRealization, TimeGrid};
use crate::semigroup::Semigroup;
use crate::state_space::{SpectralVector, WeightedInnerProduct};

/// Grid path of right-continuous values with optional pre-jump values.
#[derive(Debug, Clone, PartialEq)]
pub struct CadlagPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
    pre_jump: Vec<Option<Vec<f64>>>,
}

impl CadlagPath {
    /// Path holding only its initial value; extend with [`CadlagPath::push`].
    pub fn starting_at(grid: TimeGrid, x0: &[f64]) -> Self {
        let mut values = Vec::with_capacity((grid.steps() + 1) * x0.len());
        values.extend_from_slice(x0);
        let mut pre_jump = Vec::with_capacity(grid.steps() + 1);
        pre_jump.push(None);
        Self {
            grid,
            dim: x0.len(),
            values,
            pre_jump,
        }
    }

    /// Path from `steps + 1` stacked values without jump marks.
    pub fn from_values(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        check_dim((grid.steps() + 1) * dim, values.len())?;
        Ok(Self {
            grid,
            dim,
            values,
            pre_jump: vec![None; grid.steps() + 1],
        })
    }

    pub fn push(&mut self, value: &[f64], pre_jump: Option<&[f64]>) {
        debug_assert!(self.len() <= self.grid.steps());
        self.values.extend_from_slice(value);
        self.pre_jump.push(pre_jump.map(<[f64]>::to_vec));
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored grid points.
    pub fn len(&self) -> usize {
        self.pre_jump.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pre_jump.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.len() == self.grid.steps() + 1
    }

    /// `X_{tᵢ}`
    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn pre_jump(&self, i: usize) -> Option<&[f64]> {
        self.pre_jump[i].as_deref()
    }

    /// `X_{tᵢ−}`: the pre-jump value when a jump happened at `tᵢ`, else the
    /// value at `tᵢ₋₁` held constant across the cell.
    pub fn left_limit(&self, i: usize) -> &[f64] {
        match &self.pre_jump[i] {
            Some(v) => v,
            None => self.value(i.saturating_sub(1)),
        }
    }

    pub fn terminal(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vector(&self, i: usize) -> SpectralVector {
        SpectralVector::from_vec(self.value(i).to_vec())
    }

    /// `sup_t ‖X_t‖²` over grid values and pre-jump values.
    pub fn sup_norm_sq(&self, metric: &WeightedInnerProduct) -> f64 {
        let mut sup = 0.0f64;
        for i in 0..self.len() {
            sup = sup.max(metric.norm_sq(self.value(i)));
            if let Some(p) = self.pre_jump(i) {
                sup = sup.max(metric.norm_sq(p));
            }
        }
        sup
    }

    /// `sup_t ‖X_t − Y_t‖²` over grid values.
    pub fn sup_dist_sq(&self, other: &CadlagPath, metric: &WeightedInnerProduct) -> Result<f64> {
        check_dim(self.values.len(), other.values.len())?;
        Ok((0..self.len())
            .map(|i| metric.dist_sq(self.value(i), other.value(i)))
            .fold(0.0, f64::max))
    }

    /// Pointwise `x ↦ factor(t) · x`, jump marks included.
    pub fn scaled_by(&self, factor: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.len() {
            let c = factor(self.grid.time(i));
            out.values[i * self.dim..(i + 1) * self.dim]
                .iter_mut()
                .for_each(|v| *v *= c);
            if let Some(p) = out.pre_jump[i].as_mut() {
                p.iter_mut().for_each(|v| *v *= c);
            }
        }
        out
    }

    /// Pointwise sum of two paths on the same grid; jump marks are kept
    /// where either path has one.
    pub fn add(&self, other: &CadlagPath) -> Result<Self> {
        check_dim(self.values.len(), other.values.len())?;
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        for i in 0..self.len() {
            out.pre_jump[i] = match (self.pre_jump(i), other.pre_jump(i)) {
                (None, None) => None,
                (a, b) => {
                    let a = a.unwrap_or(self.value(i));
                    let b = b.unwrap_or(other.value(i));
                    Some(a.iter().zip(b).map(|(x, y)| x + y).collect())
                }
            };
        }
        Ok(out)
    }
}

/// Per-cell increments `ΔZⱼ = ∫_{(tⱼ, tⱼ₊₁]} dZ` split into a continuous
/// part (drift, compensator, Wiener terms) and the realised jumps, with the
/// quadratic variation increment of each cell.
///
/// The constructors here use the mixed estimator
/// `Δ[Z]ⱼ = ‖ΔAⱼ‖² + Σₘ‖Gₘ‖²Δt + Σᵢ‖hᵢ‖²`: the discrete variation of the
/// finite-variation part `A` (which vanishes as `Δt → 0`), the Wiener part
/// in expectation form and the realised jumps exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SemimartingaleIncrements {
    grid: TimeGrid,
    dim: usize,
    continuous: Vec<f64>,
    jumps: Vec<f64>,
    has_jump: Vec<bool>,
    qv: Vec<f64>,
}

impl SemimartingaleIncrements {
    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        let n = grid.steps();
        Self {
            grid,
            dim,
            continuous: vec![0.0; n * dim],
            jumps: vec![0.0; n * dim],
            has_jump: vec![false; n],
            qv: vec![0.0; n],
        }
    }

    /// Records cell `j`. `qv` is the cell's `Δ[Z]`; `jump` is the sum of the
    /// jumps realised in the cell, if any.
    pub fn set_cell(&mut self, j: usize, continuous: &[f64], jump: Option<&[f64]>, qv: f64) {
        let d = self.dim;
        self.continuous[j * d..(j + 1) * d].copy_from_slice(continuous);
        match jump {
            Some(h) => {
                self.jumps[j * d..(j + 1) * d].copy_from_slice(h);
                self.has_jump[j] = true;
            }
            None => {
                self.jumps[j * d..(j + 1) * d].iter_mut().for_each(|v| *v = 0.0);
                self.has_jump[j] = false;
            }
        }
        self.qv[j] = qv;
    }

    /// State-independent forcing `dZ = a dt + Σₘ Gₘ dWₘ + ∫ ξ h Ñ(dt, dξ)`
    /// driven by a noise realisation.
    pub fn additive(
        grid: TimeGrid,
        drift: &[f64],
        columns: &[Vec<f64>],
        jump_direction: Option<&[f64]>,
        noise: &NoiseRealization,
        marks: &MarkSpaceSpec,
        metric: &WeightedInnerProduct,
    ) -> Result<Self> {
        let dim = drift.len();
        check_dim(dim, metric.dim())?;
        if columns.len() > noise.wiener.modes() {
            return Err(Error::Dimension {
                expected: noise.wiener.modes(),
                found: columns.len(),
            });
        }
        for c in columns {
            check_dim(dim, c.len())?;
        }
        let dt = grid.dt();
        let g_sq: f64 = columns.iter().map(|c| metric.norm_sq(c)).sum();
        let h_sq = jump_direction.map_or(0.0, |h| metric.norm_sq(h));
        let comp = if jump_direction.is_some() { marks.first_moment() } else { 0.0 };
        let mut z = Self::zeros(grid, dim);
        let mut cont = vec![0.0; dim];
        let mut fv = vec![0.0; dim];
        let mut jump = vec![0.0; dim];
        for j in 0..grid.steps() {
            let dw = noise.wiener.step(j);
            for i in 0..dim {
                let mut v = drift[i] * dt;
                if let Some(h) = jump_direction {
                    v -= comp * dt * h[i];
                }
                fv[i] = v;
                for (m, c) in columns.iter().enumerate() {
                    v += c[i] * dw[m];
                }
                cont[i] = v;
            }
            let events = noise.jumps.cell(j);
            let mut qv = g_sq * dt + metric.norm_sq(&fv);
            let jump_part = match jump_direction {
                Some(h) if !events.is_empty() => {
                    let s: f64 = events.iter().map(|e| e.mark).sum();
                    for (o, v) in jump.iter_mut().zip(h) {
                        *o = s * v;
                    }
                    qv += h_sq * events.iter().map(|e| e.mark * e.mark).sum::<f64>();
                    Some(jump.as_slice())
                }
                _ => None,
            };
            z.set_cell(j, &cont, jump_part, qv);
        }
        Ok(z)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn continuous(&self, j: usize) -> &[f64] {
        &self.continuous[j * self.dim..(j + 1) * self.dim]
    }

    pub fn jump(&self, j: usize) -> Option<&[f64]> {
        self.has_jump[j].then(|| &self.jumps[j * self.dim..(j + 1) * self.dim])
    }

    /// `ΔZⱼ` in full.
    pub fn total(&self, j: usize) -> Vec<f64> {
        let mut v = self.continuous(j).to_vec();
        if let Some(h) = self.jump(j) {
            for (a, b) in v.iter_mut().zip(h) {
                *a += b;
            }
        }
        v
    }

    pub fn qv_increment(&self, j: usize) -> f64 {
        self.qv[j]
    }
}

/// `[Z]` at the grid points, `[Z]₀ = 0`. The Wiener part enters in its
/// expectation form `Σₘ ‖gₘ‖² Δt`, jumps as the exact `Σ ‖Δ‖²`.
pub fn quadratic_variation(z: &SemimartingaleIncrements) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.qv.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for q in &z.qv {
        acc += q;
        out.push(acc);
    }
    out
}

/// `X(tⱼ₊₁) = S_Δt (X(tⱼ) + ΔZⱼ)`: the left-point rule
/// `X(tⱼ) = S_{tⱼ}X₀ + Σ_{i<j} S_{tⱼ−tᵢ}ΔZᵢ`. When cell `j` carries jumps
/// the value without them, `S_Δt(X(tⱼ) + continuous part)`, is recorded as
/// the pre-jump value at `tⱼ₊₁`.
pub fn stochastic_convolution(
    semigroup: &Semigroup,
    z: &SemimartingaleIncrements,
    x0: &SpectralVector,
) -> Result<CadlagPath> {
    check_dim(semigroup.dim(), z.dim())?;
    check_dim(semigroup.dim(), x0.dim())?;
    let grid = *z.grid();
    let prop = semigroup.propagator(grid.dt())?;
    let n = z.dim();
    let mut path = CadlagPath::starting_at(grid, x0.as_slice());
    let mut x = x0.as_slice().to_vec();
    let mut buf = vec![0.0; n];
    let mut pre = vec![0.0; n];
    let mut sj = vec![0.0; n];
    for j in 0..grid.steps() {
        for ((b, a), c) in buf.iter_mut().zip(&x).zip(z.continuous(j)) {
            *b = a + c;
        }
        prop.apply(&buf, &mut pre);
        match z.jump(j) {
            Some(h) => {
                prop.apply(h, &mut sj);
                for ((o, p), s) in x.iter_mut().zip(&pre).zip(&sj) {
                    *o = p + s;
                }
                path.push(&x, Some(&pre));
            }
            None => {
                x.copy_from_slice(&pre);
                path.push(&x, None);
            }
        }
    }
    Ok(path)
}

/// Relative floor below which negative slack is rounding, not violation.
const ROUNDOFF: f64 = 1e-12;

/// Outcome of the pathwise Itô-type inequality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItoReport {
    /// `RHS − LHS` at every grid point.
    pub slack: Vec<f64>,
    pub min_slack: f64,
    pub tolerance: f64,
    pub violation: bool,
}

/// Evaluates both sides of the inequality along `path` with the recursion
/// `Rⱼ₊₁ = e^{2αΔt}(Rⱼ + 2⟨Xⱼ, ΔZⱼ⟩ + Δ[Z]ⱼ)`, `R₀ = ‖X₀‖²`, which is the
/// left-point quadrature of the right-hand side. A violation is
/// `LHS > RHS + tolerance` anywhere, up to a relative rounding floor.
pub fn ito_slack_along(
    path: &CadlagPath,
    alpha: f64,
    z: &SemimartingaleIncrements,
    metric: &WeightedInnerProduct,
    tolerance: f64,
) -> Result<ItoReport> {
    check_dim(path.dim(), z.dim())?;
    check_dim(path.dim(), metric.dim())?;
    if !path.is_complete() || path.grid() != z.grid() {
        return Err(Error::Domain("path and forcing live on different grids".into()));
    }
    let growth = (2.0 * alpha * z.grid().dt()).exp();
    let mut rhs = metric.norm_sq(path.value(0));
    let mut scale = rhs;
    let mut slack = Vec::with_capacity(path.len());
    slack.push(0.0);
    for j in 0..z.grid().steps() {
        let x = path.value(j);
        let mut cross = metric.dot(x, z.continuous(j));
        if let Some(h) = z.jump(j) {
            cross += metric.dot(x, h);
        }
        rhs = growth * (rhs + 2.0 * cross + z.qv_increment(j));
        scale = scale.max(rhs.abs());
        slack.push(rhs - metric.norm_sq(path.value(j + 1)));
    }
    let min_slack = slack.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ItoReport {
        violation: min_slack < -(tolerance + ROUNDOFF * scale),
        slack,
        min_slack,
        tolerance,
    })
}

/// Convolves `z` against `semigroup` from `x0` and checks the inequality on
/// the result.
pub fn ito_inequality_check(
    semigroup: &Semigroup,
    alpha: f64,
    x0: &SpectralVector,
    z: &SemimartingaleIncrements,
    metric: &WeightedInnerProduct,
    tolerance: f64,
) -> Result<ItoReport> {
    let path = stochastic_convolution(semigroup, z, x0)?;
    ito_slack_along(&path, alpha, z, metric, tolerance)
}

/// `c · √Δt`
pub fn ito_tolerance(constant: f64, dt: f64) -> f64 {
    constant * dt.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{MarkLaw, StreamSeeder, WienerSpec};
    use crate::stats::Estimate;

    fn noise(grid: &TimeGrid, modes: usize, marks: &MarkSpaceSpec, path: u64) -> NoiseRealization {
        NoiseRealization::sample(&WienerSpec { modes }, marks, grid, &StreamSeeder::new(11), path)
            .unwrap()
    }

    #[test]
    fn zero_forcing_gives_semigroup_orbit() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let s = Semigroup::dirichlet_heat(3).unwrap();
        let x0 = SpectralVector::from_vec(vec![1.0, -0.5, 0.25]);
        let z = SemimartingaleIncrements::zeros(grid, 3);
        let path = stochastic_convolution(&s, &z, &x0).unwrap();
        for i in [0, 37, 100] {
            let exact = s.act(grid.time(i), &x0).unwrap();
            for (a, b) in path.value(i).iter().zip(exact.as_slice()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identity_semigroup_reproduces_wiener_path() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let s = Semigroup::diagonal(vec![0.0], 0.0).unwrap();
        let m = WeightedInnerProduct::unit(1);
        let w = noise(&grid, 1, &MarkSpaceSpec::none(), 3);
        let z = SemimartingaleIncrements::additive(grid, &[0.0], &[vec![1.0]], None, &w, &MarkSpaceSpec::none(), &m)
            .unwrap();
        let x0 = SpectralVector::from_vec(vec![0.3]);
        let path = stochastic_convolution(&s, &z, &x0).unwrap();
        let wt: f64 = w.wiener.terminal()[0];
        assert!((path.terminal()[0] - (0.3 + wt)).abs() < 1e-12);
    }

    #[test]
    fn deterministic_convolution_is_first_order() {
        // X' = −X + 1, X(0) = 2: X(1) = 1 + e^{−1}.
        let s = Semigroup::diagonal(vec![-1.0], 0.0).unwrap();
        let exact = 1.0 + (-1f64).exp();
        let err = |steps: usize| {
            let grid = TimeGrid::new(1.0, steps).unwrap();
            let mut z = SemimartingaleIncrements::zeros(grid, 1);
            for j in 0..steps {
                z.set_cell(j, &[grid.dt()], None, 0.0);
            }
            let p = stochastic_convolution(&s, &z, &SpectralVector::from_vec(vec![2.0])).unwrap();
            (p.terminal()[0] - exact).abs()
        };
        let (e1, e2, e3) = (err(100), err(200), err(400));
        assert!(e1 < 1e-2);
        assert!((e1 / e2 - 2.0).abs() < 0.05 && (e2 / e3 - 2.0).abs() < 0.05, "{e1} {e2} {e3}");
    }

    #[test]
    fn left_limits_follow_jump_marks() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let s = Semigroup::diagonal(vec![0.0], 0.0).unwrap();
        let mut z = SemimartingaleIncrements::zeros(grid, 1);
        z.set_cell(1, &[0.5], Some(&[2.0]), 4.0);
        let p = stochastic_convolution(&s, &z, &SpectralVector::from_vec(vec![1.0])).unwrap();
        assert_eq!(p.value(2), &[3.5]);
        assert_eq!(p.left_limit(2), &[1.5]);
        assert_eq!(p.left_limit(3), &[3.5]);
        assert_eq!(p.left_limit(0), &[1.0]);
        assert_eq!(p.pre_jump(1), None);
    }

    #[test]
    fn pure_jump_quadratic_variation() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let mut z = SemimartingaleIncrements::zeros(grid, 2);
        let m = WeightedInnerProduct::unit(2);
        let (h1, h2) = ([1.0, 2.0], [-0.5, 0.0]);
        z.set_cell(2, &[0.0, 0.0], Some(&h1), m.norm_sq(&h1));
        z.set_cell(7, &[0.0, 0.0], Some(&h2), m.norm_sq(&h2));
        let qv = quadratic_variation(&z);
        assert_eq!(qv[0], 0.0);
        assert!(qv.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(qv[10], 5.25);
        assert!(quadratic_variation(&SemimartingaleIncrements::zeros(grid, 2))
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn zero_forcing_slack_is_contraction_loss() {
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let s = Semigroup::dirichlet_heat(2).unwrap();
        let m = WeightedInnerProduct::unit(2);
        let x0 = SpectralVector::from_vec(vec![1.0, 1.0]);
        let z = SemimartingaleIncrements::zeros(grid, 2);
        let r = ito_inequality_check(&s, 0.0, &x0, &z, &m, 0.0).unwrap();
        assert!(!r.violation);
        let st = s.act(1.0, &x0).unwrap();
        assert!((r.slack[50] - (2.0 - m.norm_sq(st.as_slice()))).abs() < 1e-12);
    }

    #[test]
    fn identity_semigroup_slack_is_quadrature_error() {
        // Scalar Itô formula: ‖X‖² = X₀² + 2∫X dW + t; the slack is
        // Σ(Δt − ΔW²), of size √(2T·Δt).
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let s = Semigroup::diagonal(vec![0.0], 0.0).unwrap();
        let m = WeightedInnerProduct::unit(1);
        let w = noise(&grid, 1, &MarkSpaceSpec::none(), 5);
        let z = SemimartingaleIncrements::additive(grid, &[0.0], &[vec![1.0]], None, &w, &MarkSpaceSpec::none(), &m)
            .unwrap();
        let r = ito_inequality_check(&s, 0.0, &SpectralVector::from_vec(vec![1.0]), &z, &m, 0.0).unwrap();
        let expected: f64 = (0..1000).map(|j| grid.dt() - w.wiener.step(j)[0].powi(2)).sum();
        assert!((r.slack[1000] - expected).abs() < 1e-10);
        assert!(r.min_slack.abs() < 8.0 * (2.0 * grid.dt()).sqrt());
    }

    #[test]
    fn wave_group_random_forcing_rarely_violates() {
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let lap: Vec<f64> = (1..=3).map(|k| (k as f64 * std::f64::consts::PI).powi(2)).collect();
        let s = Semigroup::block_wave(lap.clone()).unwrap();
        let mut w = lap.clone();
        w.extend([1.0; 3]);
        let m = WeightedInnerProduct::new(w).unwrap();
        let marks = MarkSpaceSpec::new(2.0, MarkLaw::Normal { mean: 0.0, sd: 0.3 }).unwrap();
        let cols = vec![vec![0.0, 0.0, 0.0, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.0, 0.0, 0.3, 0.0]];
        let dir = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        // Slack fluctuates like √(2TΔt) times the quadratic-variation rate
        // ‖G‖²_HS + λE[ξ²]‖h‖²; allow four of those.
        let rate = 0.25 + 0.09 + marks.second_moment() * m.norm_sq(&dir);
        let tol = ito_tolerance(4.0 * rate * 2f64.sqrt(), grid.dt());
        let x0 = SpectralVector::from_vec(vec![0.1, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut violations = 0;
        for p in 0..200 {
            let nz = noise(&grid, 2, &marks, p);
            let z = SemimartingaleIncrements::additive(grid, &[0.0; 6], &cols, Some(&dir), &nz, &marks, &m)
                .unwrap();
            violations += ito_inequality_check(&s, 0.0, &x0, &z, &m, tol).unwrap().violation as usize;
        }
        assert!(violations <= 2, "{violations} violations");
    }

    #[test]
    fn ito_isometry_for_diagonal_convolution() {
        // E|∫₀¹ e^{μ(1−s)} σ dW|² = σ²(1 − e^{2μ})/(−2μ), per mode.
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let mu = [-1.0, -4.0];
        let s = Semigroup::diagonal(mu.to_vec(), 0.0).unwrap();
        let m = WeightedInnerProduct::unit(2);
        let cols = vec![vec![0.7, 0.0], vec![0.0, 1.2]];
        let zero = SpectralVector::zeros(2);
        let mut sq = Vec::new();
        let mut first = Vec::new();
        for p in 0..4000 {
            let nz = noise(&grid, 2, &MarkSpaceSpec::none(), p);
            let z = SemimartingaleIncrements::additive(grid, &[0.0; 2], &cols, None, &nz, &MarkSpaceSpec::none(), &m)
                .unwrap();
            let x = stochastic_convolution(&s, &z, &zero).unwrap();
            sq.push(m.norm_sq(x.terminal()));
            first.push(x.terminal()[0]);
        }
        // The left-point rule integrates S exactly at the left endpoint of
        // each cell, so the discrete oracle is a geometric sum.
        let dt = grid.dt();
        let oracle: f64 = mu
            .iter()
            .zip([0.49, 1.44])
            .map(|(mu, s2)| s2 * dt * (1..=200).map(|i| (2.0 * mu * i as f64 * dt).exp()).sum::<f64>())
            .sum();
        let est = Estimate::from_samples(&sq);
        assert!((est.mean - oracle).abs() <= 4.0 * est.std_error, "{est:?} vs {oracle}");
        let mean = Estimate::from_samples(&first);
        assert!(mean.mean.abs() <= 4.0 * mean.std_error);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let g1 = TimeGrid::new(1.0, 10).unwrap();
        let g2 = TimeGrid::new(1.0, 20).unwrap();
        let path = CadlagPath::from_values(g1, 1, vec![0.0; 11]).unwrap();
        let z = SemimartingaleIncrements::zeros(g2, 1);
        assert!(ito_slack_along(&path, 0.0, &z, &WeightedInnerProduct::unit(1), 0.0).is_err());
        assert!(CadlagPath::from_values(g1, 1, vec![0.0; 10]).is_err());
    }
}

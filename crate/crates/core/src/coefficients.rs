//! Coefficient triples `(f, g, k)` with declared structural constants.
//!
//! Each coefficient is a trait object evaluated on raw coefficient slices
//! (the solvers call them millions of times). The `*Spec` wrappers attach
//! the constants the existence theory is stated in terms of:
//!
//! * `M`: semimonotonicity, `⟨f(x) − f(y), x − y⟩ ≤ M ‖x − y‖²`;
//! * `C = C_g + C_k`: Lipschitz bound on `‖Δg‖²_HS + ∫ ‖Δk‖² dν`;
//! * `D = D_f + D_g + D_k`: linear growth bound on
//!   `‖f‖² + ‖g‖²_HS + ∫ ‖k‖² dν ≤ D (1 + ‖x‖²)`.
//!
//! The constants are declared by whoever builds the model and checked
//! empirically by the `check_*` functions; they are never estimated.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::noise::MarkSpaceSpec;
use crate::state_space::{SpectralVector, WeightedInnerProduct};

/// Largest slope magnitude reported by [`ScalarMap::derivative`] for maps
/// with an infinite derivative somewhere (the cube root at zero).
const SLOPE_CAP: f64 = 1e8;

/// Real function lifted pointwise by Nemitsky operators.
pub trait ScalarMap: Send + Sync + fmt::Debug {
    fn value(&self, u: f64) -> f64;

    fn derivative(&self, u: f64) -> f64 {
        let h = 1e-6 * (1.0 + u.abs());
        (self.value(u + h) - self.value(u - h)) / (2.0 * h)
    }

    /// Smallest `D` with `|f(u)|² ≤ D (1 + u²)`; infinite without linear
    /// growth.
    fn growth_constant(&self) -> f64;
}

/// The scalar reaction terms used by the shipped models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reaction {
    Zero,
    /// `u ↦ −∛u`
    NegCubeRoot,
    Linear { slope: f64 },
    Constant { value: f64 },
    /// `u ↦ c u³`; no linear growth, used to exercise failing checks.
    Cubic { coefficient: f64 },
}

impl Reaction {
    pub fn is_decreasing(&self) -> bool {
        match *self {
            Reaction::Zero | Reaction::Constant { .. } | Reaction::NegCubeRoot => true,
            Reaction::Linear { slope } => slope <= 0.0,
            Reaction::Cubic { coefficient } => coefficient <= 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(
            *self,
            Reaction::Zero | Reaction::Constant { value: 0.0 } | Reaction::Linear { slope: 0.0 }
        )
    }
}

impl ScalarMap for Reaction {
    fn value(&self, u: f64) -> f64 {
        match *self {
            Reaction::Zero => 0.0,
            Reaction::NegCubeRoot => -u.cbrt(),
            Reaction::Linear { slope } => slope * u,
            Reaction::Constant { value } => value,
            Reaction::Cubic { coefficient } => coefficient * u * u * u,
        }
    }

    fn derivative(&self, u: f64) -> f64 {
        match *self {
            Reaction::Zero | Reaction::Constant { .. } => 0.0,
            Reaction::NegCubeRoot => {
                let a = u.abs();
                if a == 0.0 {
                    -SLOPE_CAP
                } else {
                    (-1.0 / (3.0 * a.cbrt() * a.cbrt())).max(-SLOPE_CAP)
                }
            }
            Reaction::Linear { slope } => slope,
            Reaction::Cubic { coefficient } => 3.0 * coefficient * u * u,
        }
    }

    fn growth_constant(&self) -> f64 {
        match *self {
            Reaction::Zero => 0.0,
            Reaction::NegCubeRoot => 1.0,
            Reaction::Linear { slope } => slope * slope,
            Reaction::Constant { value } => value * value,
            Reaction::Cubic { coefficient } => {
                if coefficient == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Drift `f(t, x)`.
pub trait Drift: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// `out = f(t, x)`
    fn apply(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// `jac = ∂f/∂x (t, x)`; central differences unless overridden.
    fn jacobian(&self, t: f64, x: &[f64], jac: &mut DMatrix<f64>) {
        let n = self.dim();
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for j in 0..n {
            let h = 1e-7 * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            self.apply(t, &xp, &mut fp);
            xp[j] = x[j] - h;
            self.apply(t, &xp, &mut fm);
            xp[j] = x[j];
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
    }

    fn is_zero(&self) -> bool {
        false
    }
}

/// Linear maps used to assemble affine drifts and multiplicative noise.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearMap {
    /// `factor · I`
    Scaled { dim: usize, factor: f64 },
    Diagonal(Vec<f64>),
    /// Copies `x[from]` scaled by `factor` into `out[to..to + from.len()]`;
    /// everything else maps to zero.
    Transfer {
        dim: usize,
        from: Range<usize>,
        to: usize,
        factor: f64,
    },
    Dense(DMatrix<f64>),
}

impl LinearMap {
    pub fn dim(&self) -> usize {
        match self {
            LinearMap::Scaled { dim, .. } | LinearMap::Transfer { dim, .. } => *dim,
            LinearMap::Diagonal(d) => d.len(),
            LinearMap::Dense(m) => m.nrows(),
        }
    }

    /// `out += a · L x`
    pub fn apply_add(&self, a: f64, x: &[f64], out: &mut [f64]) {
        match self {
            LinearMap::Scaled { factor, .. } => {
                let s = a * factor;
                for (o, v) in out.iter_mut().zip(x) {
                    *o += s * v;
                }
            }
            LinearMap::Diagonal(d) => {
                for ((o, v), w) in out.iter_mut().zip(x).zip(d) {
                    *o += a * w * v;
                }
            }
            LinearMap::Transfer {
                from, to, factor, ..
            } => {
                let s = a * factor;
                for (i, src) in from.clone().enumerate() {
                    out[to + i] += s * x[src];
                }
            }
            LinearMap::Dense(m) => {
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, v) in x.iter().enumerate() {
                        acc += m[(i, j)] * v;
                    }
                    *o += a * acc;
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            col.iter_mut().for_each(|c| *c = 0.0);
            self.apply_add(1.0, &e, &mut col);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        m
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroDrift {
    pub dim: usize,
}

impl Drift for ZeroDrift {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
    fn jacobian(&self, _t: f64, _x: &[f64], jac: &mut DMatrix<f64>) {
        jac.fill(0.0);
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// `f(x) = L x + b`
#[derive(Debug, Clone)]
pub struct AffineDrift {
    pub map: LinearMap,
    pub offset: Option<Vec<f64>>,
}

impl Drift for AffineDrift {
    fn dim(&self) -> usize {
        self.map.dim()
    }
    fn apply(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        match &self.offset {
            Some(b) => out.copy_from_slice(b),
            None => out.iter_mut().for_each(|o| *o = 0.0),
        }
        self.map.apply_add(1.0, x, out);
    }
    fn jacobian(&self, _t: f64, _x: &[f64], jac: &mut DMatrix<f64>) {
        jac.copy_from(&self.map.to_dense());
    }
}

/// Applies a scalar map to every coordinate: the Nemitsky operator on a
/// space whose coordinates are point values (the delay head, a scalar SDE).
#[derive(Debug, Clone)]
pub struct Pointwise {
    pub map: Arc<dyn ScalarMap>,
    pub dim: usize,
}

impl Drift for Pointwise {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = self.map.value(*v);
        }
    }
    fn jacobian(&self, _t: f64, x: &[f64], jac: &mut DMatrix<f64>) {
        jac.fill(0.0);
        for (i, v) in x.iter().enumerate() {
            jac[(i, i)] = self.map.derivative(*v);
        }
    }
}

/// Nemitsky operator `u ↦ f∘u` on the sine basis of `L²(0, 1)`.
///
/// States are synthesised on the interior grid `xⱼ = j/(N+1)`, the scalar
/// map is applied pointwise, and the result is projected back with the
/// discrete sine transform. For `N ≥ modes` the synthesis/projection pair is
/// exactly orthogonal, so the discrete operator inherits monotonicity from a
/// decreasing scalar map with no quadrature defect. Grids with fewer than
/// `2 · modes` points are rejected to avoid aliasing the products.
#[derive(Debug, Clone)]
pub struct Nemitsky {
    map: Arc<dyn ScalarMap>,
    modes: usize,
    points: usize,
    spacing: f64,
    /// `φₖ(xⱼ)`, points × modes.
    table: Vec<f64>,
}

impl Nemitsky {
    pub fn new(map: Arc<dyn ScalarMap>, modes: usize, points: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::Domain("Nemitsky operator needs at least one mode".into()));
        }
        if points < 2 * modes {
            return Err(Error::Aliasing {
                modes,
                points,
                required: 2 * modes,
            });
        }
        let spacing = 1.0 / (points + 1) as f64;
        let mut table = Vec::with_capacity(points * modes);
        for j in 1..=points {
            let x = j as f64 * spacing;
            for k in 1..=modes {
                table.push(2f64.sqrt() * (k as f64 * PI * x).sin());
            }
        }
        Ok(Self {
            map,
            modes,
            points,
            spacing,
            table,
        })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn grid(&self) -> Vec<f64> {
        (1..=self.points).map(|j| j as f64 * self.spacing).collect()
    }

    /// Grid values `u(xⱼ)` of the state with sine coefficients `coeffs`.
    pub fn synthesize(&self, coeffs: &[f64], values: &mut [f64]) {
        for (j, v) in values.iter_mut().enumerate() {
            let row = &self.table[j * self.modes..(j + 1) * self.modes];
            *v = row.iter().zip(coeffs).map(|(p, c)| p * c).sum();
        }
    }

    /// Sine coefficients `h Σⱼ u(xⱼ) φₖ(xⱼ)` of grid values.
    pub fn project(&self, values: &[f64], coeffs: &mut [f64]) {
        coeffs.iter_mut().for_each(|c| *c = 0.0);
        for (j, v) in values.iter().enumerate() {
            let row = &self.table[j * self.modes..(j + 1) * self.modes];
            for (c, p) in coeffs.iter_mut().zip(row) {
                *c += v * p;
            }
        }
        coeffs.iter_mut().for_each(|c| *c *= self.spacing);
    }
}

impl Drift for Nemitsky {
    fn dim(&self) -> usize {
        self.modes
    }

    fn apply(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let mut values = vec![0.0; self.points];
        self.synthesize(x, &mut values);
        for v in values.iter_mut() {
            *v = self.map.value(*v);
        }
        self.project(&values, out);
    }

    fn jacobian(&self, _t: f64, x: &[f64], jac: &mut DMatrix<f64>) {
        let mut values = vec![0.0; self.points];
        self.synthesize(x, &mut values);
        jac.fill(0.0);
        let m = self.modes;
        for (j, u) in values.iter().enumerate() {
            let w = self.spacing * self.map.derivative(*u);
            if w == 0.0 {
                continue;
            }
            let row = &self.table[j * m..(j + 1) * m];
            for k in 0..m {
                let a = w * row[k];
                for l in 0..m {
                    jac[(k, l)] += a * row[l];
                }
            }
        }
    }
}

/// Embeds a drift acting on one block of a product space.
#[derive(Debug, Clone)]
pub struct BlockDrift {
    pub dim: usize,
    pub block: Range<usize>,
    pub inner: Arc<dyn Drift>,
}

impl Drift for BlockDrift {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        self.inner
            .apply(t, &x[self.block.clone()], &mut out[self.block.clone()]);
    }
    fn jacobian(&self, t: f64, x: &[f64], jac: &mut DMatrix<f64>) {
        let n = self.block.len();
        let mut sub = DMatrix::zeros(n, n);
        self.inner.jacobian(t, &x[self.block.clone()], &mut sub);
        jac.fill(0.0);
        jac.view_mut((self.block.start, self.block.start), (n, n))
            .copy_from(&sub);
    }
    fn is_zero(&self) -> bool {
        self.inner.is_zero()
    }
}

#[derive(Debug, Clone)]
pub struct SumDrift {
    pub parts: Vec<Arc<dyn Drift>>,
}

impl Drift for SumDrift {
    fn dim(&self) -> usize {
        self.parts[0].dim()
    }
    fn apply(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut part = vec![0.0; out.len()];
        for p in &self.parts {
            p.apply(t, x, &mut part);
            for (o, v) in out.iter_mut().zip(&part) {
                *o += v;
            }
        }
    }
    fn jacobian(&self, t: f64, x: &[f64], jac: &mut DMatrix<f64>) {
        let n = self.dim();
        jac.fill(0.0);
        let mut part = DMatrix::zeros(n, n);
        for p in &self.parts {
            p.jacobian(t, x, &mut part);
            *jac += &part;
        }
    }
    fn is_zero(&self) -> bool {
        self.parts.iter().all(|p| p.is_zero())
    }
}

/// `f̃(t, x) = e^{−αt} f(t, e^{αt} x)`
#[derive(Debug, Clone)]
pub struct RescaledDrift {
    pub inner: Arc<dyn Drift>,
    pub alpha: f64,
}

impl Drift for RescaledDrift {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn apply(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let g = (self.alpha * t).exp();
        let y: Vec<f64> = x.iter().map(|v| g * v).collect();
        self.inner.apply(t, &y, out);
        out.iter_mut().for_each(|o| *o /= g);
    }
    fn jacobian(&self, t: f64, x: &[f64], jac: &mut DMatrix<f64>) {
        let g = (self.alpha * t).exp();
        let y: Vec<f64> = x.iter().map(|v| g * v).collect();
        self.inner.jacobian(t, &y, jac);
    }
    fn is_zero(&self) -> bool {
        self.inner.is_zero()
    }
}

/// Diffusion `g(t, x) ∈ L_HS(K, H)` on the first `modes` Wiener modes.
pub trait Diffusion: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn modes(&self) -> usize;

    /// `out = g(t, x) e_mode`
    fn column(&self, t: f64, x: &[f64], mode: usize, out: &mut [f64]);

    /// `out += g(t, x) dw`
    fn apply_add(&self, t: f64, x: &[f64], dw: &[f64], out: &mut [f64]) {
        let mut col = vec![0.0; out.len()];
        for (m, d) in dw.iter().enumerate() {
            self.column(t, x, m, &mut col);
            for (o, c) in out.iter_mut().zip(&col) {
                *o += d * c;
            }
        }
    }

    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroDiffusion {
    pub dim: usize,
    pub modes: usize,
}

impl Diffusion for ZeroDiffusion {
    fn dim(&self) -> usize {
        self.dim
    }
    fn modes(&self) -> usize {
        self.modes
    }
    fn column(&self, _t: f64, _x: &[f64], _mode: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
    fn apply_add(&self, _t: f64, _x: &[f64], _dw: &[f64], _out: &mut [f64]) {}
    fn is_zero(&self) -> bool {
        true
    }
}

/// `g(x) e_m = L_m x + c_m`
#[derive(Debug, Clone)]
pub struct LinearDiffusion {
    pub columns: Vec<(LinearMap, Option<Vec<f64>>)>,
}

impl Diffusion for LinearDiffusion {
    fn dim(&self) -> usize {
        self.columns[0].0.dim()
    }
    fn modes(&self) -> usize {
        self.columns.len()
    }
    fn column(&self, _t: f64, x: &[f64], mode: usize, out: &mut [f64]) {
        let (map, offset) = &self.columns[mode];
        match offset {
            Some(c) => out.copy_from_slice(c),
            None => out.iter_mut().for_each(|o| *o = 0.0),
        }
        map.apply_add(1.0, x, out);
    }
    fn apply_add(&self, _t: f64, x: &[f64], dw: &[f64], out: &mut [f64]) {
        for ((map, offset), d) in self.columns.iter().zip(dw) {
            map.apply_add(*d, x, out);
            if let Some(c) = offset {
                for (o, v) in out.iter_mut().zip(c) {
                    *o += d * v;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RescaledDiffusion {
    pub inner: Arc<dyn Diffusion>,
    pub alpha: f64,
}

impl Diffusion for RescaledDiffusion {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn modes(&self) -> usize {
        self.inner.modes()
    }
    fn column(&self, t: f64, x: &[f64], mode: usize, out: &mut [f64]) {
        let g = (self.alpha * t).exp();
        let y: Vec<f64> = x.iter().map(|v| g * v).collect();
        self.inner.column(t, &y, mode, out);
        out.iter_mut().for_each(|o| *o /= g);
    }
    fn is_zero(&self) -> bool {
        self.inner.is_zero()
    }
}

/// `‖g(t, x)‖²_HS` as the sum of squared column norms.
pub fn hilbert_schmidt_sq(
    g: &dyn Diffusion,
    t: f64,
    x: &[f64],
    metric: &WeightedInnerProduct,
) -> f64 {
    let mut col = vec![0.0; g.dim()];
    (0..g.modes())
        .map(|m| {
            g.column(t, x, m, &mut col);
            metric.norm_sq(&col)
        })
        .sum()
}

/// `‖g(t, x)‖²_HS` from the assembled matrix, row by row:
/// `Σᵢ wᵢ Σₘ gᵢₘ²`.
pub fn hilbert_schmidt_sq_by_rows(
    g: &dyn Diffusion,
    t: f64,
    x: &[f64],
    metric: &WeightedInnerProduct,
) -> f64 {
    let (n, modes) = (g.dim(), g.modes());
    let mut mat = DMatrix::zeros(n, modes);
    let mut col = vec![0.0; n];
    for m in 0..modes {
        g.column(t, x, m, &mut col);
        mat.set_column(m, &nalgebra::DVector::from_column_slice(&col));
    }
    mat.row_iter()
        .zip(metric.weights())
        .map(|(row, w)| w * row.iter().map(|v| v * v).sum::<f64>())
        .sum()
}

/// Jump coefficient `k(t, ξ, x)` with real marks.
pub trait JumpCoefficient: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// `out = k(t, ξ, x)`
    fn apply(&self, t: f64, mark: f64, x: &[f64], out: &mut [f64]);

    /// `out = ∫ k(t, ξ, x) ν(dξ)` by the mark space's quadrature rule.
    fn compensator(&self, t: f64, x: &[f64], marks: &MarkSpaceSpec, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if marks.is_trivial() {
            return;
        }
        let w = marks.quadrature_weight();
        let mut v = vec![0.0; out.len()];
        for xi in marks.quadrature_nodes().iter() {
            self.apply(t, *xi, x, &mut v);
            for (o, a) in out.iter_mut().zip(&v) {
                *o += w * a;
            }
        }
    }

    /// `∫ ‖k(t, ξ, x) − k(t, ξ, y)‖² ν(dξ)` by quadrature.
    fn nu_sq_distance(
        &self,
        t: f64,
        x: &[f64],
        y: &[f64],
        marks: &MarkSpaceSpec,
        metric: &WeightedInnerProduct,
    ) -> f64 {
        if marks.is_trivial() {
            return 0.0;
        }
        let (mut a, mut b) = (vec![0.0; x.len()], vec![0.0; x.len()]);
        let vals: Vec<f64> = marks
            .quadrature_nodes()
            .iter()
            .map(|xi| {
                self.apply(t, *xi, x, &mut a);
                self.apply(t, *xi, y, &mut b);
                metric.dist_sq(&a, &b)
            })
            .collect();
        crate::stats::pairwise_sum(&vals) * marks.quadrature_weight()
    }

    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroJump {
    pub dim: usize,
}

impl JumpCoefficient for ZeroJump {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, _t: f64, _mark: f64, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
    fn compensator(&self, _t: f64, _x: &[f64], _marks: &MarkSpaceSpec, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
    fn nu_sq_distance(
        &self,
        _t: f64,
        _x: &[f64],
        _y: &[f64],
        _marks: &MarkSpaceSpec,
        _metric: &WeightedInnerProduct,
    ) -> f64 {
        0.0
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// `k(ξ, x) = ξ · L x`. Moments of `ν` are used in closed form.
#[derive(Debug, Clone)]
pub struct LinearMarkJump {
    pub map: LinearMap,
}

impl JumpCoefficient for LinearMarkJump {
    fn dim(&self) -> usize {
        self.map.dim()
    }
    fn apply(&self, _t: f64, mark: f64, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        self.map.apply_add(mark, x, out);
    }
    fn compensator(&self, _t: f64, x: &[f64], marks: &MarkSpaceSpec, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        self.map.apply_add(marks.first_moment(), x, out);
    }
    fn nu_sq_distance(
        &self,
        _t: f64,
        x: &[f64],
        y: &[f64],
        marks: &MarkSpaceSpec,
        metric: &WeightedInnerProduct,
    ) -> f64 {
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let mut ld = vec![0.0; d.len()];
        self.map.apply_add(1.0, &d, &mut ld);
        marks.second_moment() * metric.norm_sq(&ld)
    }
}

#[derive(Debug, Clone)]
pub struct RescaledJump {
    pub inner: Arc<dyn JumpCoefficient>,
    pub alpha: f64,
}

impl RescaledJump {
    fn lift(&self, t: f64, x: &[f64]) -> (f64, Vec<f64>) {
        let g = (self.alpha * t).exp();
        (g, x.iter().map(|v| g * v).collect())
    }
}

impl JumpCoefficient for RescaledJump {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn apply(&self, t: f64, mark: f64, x: &[f64], out: &mut [f64]) {
        let (g, y) = self.lift(t, x);
        self.inner.apply(t, mark, &y, out);
        out.iter_mut().for_each(|o| *o /= g);
    }
    fn compensator(&self, t: f64, x: &[f64], marks: &MarkSpaceSpec, out: &mut [f64]) {
        let (g, y) = self.lift(t, x);
        self.inner.compensator(t, &y, marks, out);
        out.iter_mut().for_each(|o| *o /= g);
    }
    fn nu_sq_distance(
        &self,
        t: f64,
        x: &[f64],
        y: &[f64],
        marks: &MarkSpaceSpec,
        metric: &WeightedInnerProduct,
    ) -> f64 {
        let (g, xs) = self.lift(t, x);
        let (_, ys) = self.lift(t, y);
        self.inner.nu_sq_distance(t, &xs, &ys, marks, metric) / (g * g)
    }
    fn is_zero(&self) -> bool {
        self.inner.is_zero()
    }
}

/// Drift with its semimonotonicity constant `M` and growth constant `D_f`.
#[derive(Debug, Clone)]
pub struct DriftSpec {
    pub evaluator: Arc<dyn Drift>,
    pub monotonicity: f64,
    pub growth: f64,
}

impl DriftSpec {
    pub fn zero(dim: usize) -> Self {
        Self {
            evaluator: Arc::new(ZeroDrift { dim }),
            monotonicity: 0.0,
            growth: 0.0,
        }
    }

    pub fn eval(&self, t: f64, x: &SpectralVector) -> Result<SpectralVector> {
        check_dim(self.evaluator.dim(), x.dim())?;
        let mut out = SpectralVector::zeros(x.dim());
        self.evaluator.apply(t, x.as_slice(), out.as_mut_slice());
        Ok(out)
    }
}

/// Nemitsky drift for `scalar` on `modes` sine modes sampled at `points`
/// grid points. `M = 0` when the scalar map is decreasing; `D_f` is the
/// scalar growth constant (the domain has unit length).
pub fn nemitsky(scalar: Reaction, modes: usize, points: usize) -> Result<DriftSpec> {
    let op = Nemitsky::new(Arc::new(scalar), modes, points)?;
    Ok(DriftSpec {
        evaluator: Arc::new(op),
        monotonicity: if scalar.is_decreasing() { 0.0 } else { f64::INFINITY },
        growth: scalar.growth_constant(),
    })
}

#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    pub evaluator: Arc<dyn Diffusion>,
    pub lipschitz: f64,
    pub growth: f64,
}

impl DiffusionSpec {
    pub fn zero(dim: usize, modes: usize) -> Self {
        Self {
            evaluator: Arc::new(ZeroDiffusion { dim, modes }),
            lipschitz: 0.0,
            growth: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JumpCoeffSpec {
    pub evaluator: Arc<dyn JumpCoefficient>,
    pub lipschitz: f64,
    pub growth: f64,
}

impl JumpCoeffSpec {
    pub fn zero(dim: usize) -> Self {
        Self {
            evaluator: Arc::new(ZeroJump { dim }),
            lipschitz: 0.0,
            growth: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub drift: DriftSpec,
    pub diffusion: DiffusionSpec,
    pub jump: JumpCoeffSpec,
}

impl CoefficientSet {
    pub fn new(drift: DriftSpec, diffusion: DiffusionSpec, jump: JumpCoeffSpec) -> Result<Self> {
        let dim = drift.evaluator.dim();
        check_dim(dim, diffusion.evaluator.dim())?;
        check_dim(dim, jump.evaluator.dim())?;
        Ok(Self {
            drift,
            diffusion,
            jump,
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.evaluator.dim()
    }

    /// `M`
    pub fn monotonicity(&self) -> f64 {
        self.drift.monotonicity
    }

    /// `C = C_g + C_k`
    pub fn lipschitz(&self) -> f64 {
        self.diffusion.lipschitz + self.jump.lipschitz
    }

    /// `D = D_f + D_g + D_k`
    pub fn growth(&self) -> f64 {
        self.drift.growth + self.diffusion.growth + self.jump.growth
    }

    /// Coefficients conjugated by `e^{±αt}`. `M` and `C` are unchanged;
    /// for `α < 0` the growth constants pick up `e^{−2αT}`.
    pub fn rescaled(&self, alpha: f64, horizon: f64) -> Self {
        if alpha == 0.0 {
            return self.clone();
        }
        let growth_factor = (-2.0 * alpha * horizon).exp().max(1.0);
        Self {
            drift: DriftSpec {
                evaluator: Arc::new(RescaledDrift {
                    inner: self.drift.evaluator.clone(),
                    alpha,
                }),
                monotonicity: self.drift.monotonicity,
                growth: self.drift.growth * growth_factor,
            },
            diffusion: DiffusionSpec {
                evaluator: Arc::new(RescaledDiffusion {
                    inner: self.diffusion.evaluator.clone(),
                    alpha,
                }),
                lipschitz: self.diffusion.lipschitz,
                growth: self.diffusion.growth * growth_factor,
            },
            jump: JumpCoeffSpec {
                evaluator: Arc::new(RescaledJump {
                    inner: self.jump.evaluator.clone(),
                    alpha,
                }),
                lipschitz: self.jump.lipschitz,
                growth: self.jump.growth * growth_factor,
            },
        }
    }
}

/// Sampling parameters shared by the hypothesis checkers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub samples: usize,
    /// Coordinates are drawn uniformly from `[−radius, radius]`.
    pub radius: f64,
    /// Times are drawn uniformly from `[0, horizon]`.
    pub horizon: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            radius: 2.0,
            horizon: 1.0,
        }
    }
}

impl CheckOptions {
    fn validate(&self) -> Result<()> {
        if self.samples == 0 || !(self.radius > 0.0) {
            return Err(Error::Domain("checks need samples ≥ 1 and radius > 0".into()));
        }
        Ok(())
    }
}

fn random_point<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| radius * (2.0 * rng.random::<f64>() - 1.0))
        .collect()
}

/// Second point of a pair: independent half the time, otherwise a
/// perturbation of `x` at a random scale down to `1e-6 · radius`.
fn partner<R: Rng + ?Sized>(rng: &mut R, x: &[f64], radius: f64) -> Vec<f64> {
    if rng.random::<bool>() {
        return random_point(rng, x.len(), radius);
    }
    // Fixed-length perturbation: a near-zero offset would make the ratios
    // pure roundoff.
    let scale = radius * 10f64.powf(-6.0 * rng.random::<f64>());
    let dir = loop {
        let d: Vec<f64> = (0..x.len()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-3 {
            break d.into_iter().map(|v| v / n).collect::<Vec<_>>();
        }
    };
    x.iter().zip(dir).map(|(v, d)| v + scale * d).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemimonotoneReport {
    /// Largest observed `⟨f(x) − f(y), x − y⟩ / ‖x − y‖²`.
    pub max_ratio: f64,
    pub declared: f64,
    pub pass: bool,
}

pub fn check_semimonotone<R: Rng + ?Sized>(
    f: &DriftSpec,
    metric: &WeightedInnerProduct,
    opts: &CheckOptions,
    rng: &mut R,
) -> Result<SemimonotoneReport> {
    opts.validate()?;
    let n = f.evaluator.dim();
    check_dim(n, metric.dim())?;
    let (mut fx, mut fy) = (vec![0.0; n], vec![0.0; n]);
    let mut max_ratio = f64::NEG_INFINITY;
    for _ in 0..opts.samples {
        let t = opts.horizon * rng.random::<f64>();
        let x = random_point(rng, n, opts.radius);
        let y = partner(rng, &x, opts.radius);
        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let d2 = metric.norm_sq(&dx);
        if d2 == 0.0 {
            continue;
        }
        f.evaluator.apply(t, &x, &mut fx);
        f.evaluator.apply(t, &y, &mut fy);
        let df: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
        max_ratio = max_ratio.max(metric.dot(&df, &dx) / d2);
    }
    Ok(SemimonotoneReport {
        max_ratio,
        declared: f.monotonicity,
        pass: max_ratio <= f.monotonicity + 1e-9,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzGrowthReport {
    /// `max ‖g(x) − g(y)‖²_HS / ‖x − y‖²`
    pub lipschitz_g: f64,
    /// `max ∫ ‖k(x) − k(y)‖² dν / ‖x − y‖²`
    pub lipschitz_k: f64,
    /// Maximum of the summed ratio, checked against `C`.
    pub lipschitz: f64,
    pub growth_f: f64,
    pub growth_g: f64,
    pub growth_k: f64,
    /// Maximum of the summed growth ratio, checked against `D`.
    pub growth: f64,
    pub declared_c: f64,
    pub declared_d: f64,
    pub pass_lipschitz: bool,
    pub pass_growth: bool,
}

impl LipschitzGrowthReport {
    pub fn pass(&self) -> bool {
        self.pass_lipschitz && self.pass_growth
    }
}

fn within(observed: f64, declared: f64) -> bool {
    observed <= declared * (1.0 + 1e-9) + 1e-12
}

pub fn check_lipschitz_growth<R: Rng + ?Sized>(
    set: &CoefficientSet,
    metric: &WeightedInnerProduct,
    marks: &MarkSpaceSpec,
    opts: &CheckOptions,
    rng: &mut R,
) -> Result<LipschitzGrowthReport> {
    opts.validate()?;
    let n = set.dim();
    check_dim(n, metric.dim())?;
    let g = set.diffusion.evaluator.as_ref();
    let k = set.jump.evaluator.as_ref();
    let f = set.drift.evaluator.as_ref();
    let zero = vec![0.0; n];
    let mut fx = vec![0.0; n];
    let (mut cg, mut ck, mut cs) = (0.0f64, 0.0f64, 0.0f64);
    let (mut df, mut dg, mut dk, mut ds) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    for _ in 0..opts.samples {
        let t = opts.horizon * rng.random::<f64>();
        let x = random_point(rng, n, opts.radius);
        let y = partner(rng, &x, opts.radius);
        let d2 = metric.dist_sq(&x, &y);

        let mut g_diff = 0.0;
        if !g.is_zero() {
            for m in 0..g.modes() {
                g.column(t, &x, m, &mut gx);
                g.column(t, &y, m, &mut gy);
                g_diff += metric.dist_sq(&gx, &gy);
            }
        }
        let k_diff = if k.is_zero() {
            0.0
        } else {
            k.nu_sq_distance(t, &x, &y, marks, metric)
        };
        if d2 > 0.0 {
            cg = cg.max(g_diff / d2);
            ck = ck.max(k_diff / d2);
            cs = cs.max((g_diff + k_diff) / d2);
        }

        let denom = 1.0 + metric.norm_sq(&x);
        f.apply(t, &x, &mut fx);
        let f_sq = metric.norm_sq(&fx);
        let g_sq = if g.is_zero() {
            0.0
        } else {
            hilbert_schmidt_sq(g, t, &x, metric)
        };
        let k_sq = if k.is_zero() {
            0.0
        } else {
            k.nu_sq_distance(t, &x, &zero, marks, metric)
        };
        df = df.max(f_sq / denom);
        dg = dg.max(g_sq / denom);
        dk = dk.max(k_sq / denom);
        ds = ds.max((f_sq + g_sq + k_sq) / denom);
    }
    let pass_lipschitz = within(cg, set.diffusion.lipschitz)
        && within(ck, set.jump.lipschitz)
        && within(cs, set.lipschitz());
    let pass_growth = within(df, set.drift.growth)
        && within(dg, set.diffusion.growth)
        && within(dk, set.jump.growth)
        && within(ds, set.growth());
    Ok(LipschitzGrowthReport {
        lipschitz_g: cg,
        lipschitz_k: ck,
        lipschitz: cs,
        growth_f: df,
        growth_g: dg,
        growth_k: dk,
        growth: ds,
        declared_c: set.lipschitz(),
        declared_d: set.growth(),
        pass_lipschitz,
        pass_growth,
    })
}

/// Continuity probe standing in for demicontinuity: for random `x`, unit
/// direction `d` and test vector `y`, tracks `max |⟨y, f(x + εd) − f(x)⟩|`
/// as `ε` shrinks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    /// `(ε, max |⟨y, Δf⟩|)` for decreasing `ε`.
    pub probes: Vec<(f64, f64)>,
    pub pass: bool,
}

pub fn check_continuity<R: Rng + ?Sized>(
    f: &DriftSpec,
    metric: &WeightedInnerProduct,
    opts: &CheckOptions,
    rng: &mut R,
) -> Result<ContinuityReport> {
    opts.validate()?;
    let n = f.evaluator.dim();
    check_dim(n, metric.dim())?;
    let scales = [1e-2, 1e-4, 1e-6, 1e-8];
    let mut worst = [0.0f64; 4];
    let (mut f0, mut f1) = (vec![0.0; n], vec![0.0; n]);
    let samples = opts.samples.min(2_000);
    for _ in 0..samples {
        let t = opts.horizon * rng.random::<f64>();
        let x = random_point(rng, n, opts.radius);
        let mut d = random_point(rng, n, 1.0);
        let nd = metric.norm_sq(&d).sqrt().max(f64::MIN_POSITIVE);
        d.iter_mut().for_each(|v| *v /= nd);
        let mut y = random_point(rng, n, 1.0);
        let ny = metric.norm_sq(&y).sqrt().max(f64::MIN_POSITIVE);
        y.iter_mut().for_each(|v| *v /= ny);
        f.evaluator.apply(t, &x, &mut f0);
        for (w, eps) in worst.iter_mut().zip(scales) {
            let xp: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + eps * b).collect();
            f.evaluator.apply(t, &xp, &mut f1);
            let df: Vec<f64> = f1.iter().zip(&f0).map(|(a, b)| a - b).collect();
            *w = w.max(metric.dot(&y, &df).abs());
        }
    }
    let shrinking = worst.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15);
    Ok(ContinuityReport {
        probes: scales.iter().copied().zip(worst).collect(),
        pass: shrinking && worst[3] < 1e-2,
    })
}

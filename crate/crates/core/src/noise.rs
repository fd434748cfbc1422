//! Noise samplers: truncated cylindrical Wiener increments, Poisson random
//! measures with finite intensity, compensated jump integrals and real Lévy
//! drivers.
//!
//! Every sampler is a pure function of its spec and an RNG. Per-path
//! streams come from [`StreamSeeder`], which keys a ChaCha generator with
//! the master seed and selects the stream by `(path index, channel)`, so a
//! path's noise does not depend on which worker produced it or in which
//! order.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state_space::{SpectralVector, WeightedInnerProduct};

/// Uniform time grid `tⱼ = j·dt`, `j = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Domain("time grid needs at least one step".into()));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            dt: horizon / steps as f64,
            steps,
        })
    }

    /// Grid with step `dt` covering `[0, horizon]`; `horizon/dt` must be an
    /// integer up to rounding.
    pub fn with_step(dt: f64, horizon: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        let steps = (horizon / dt).round();
        if steps < 1.0 || ((steps * dt - horizon) / horizon).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "horizon {horizon} is not a whole number of steps of {dt}"
            )));
        }
        Self::new(horizon, steps as usize)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// Index `j` of the cell `(tⱼ, tⱼ₊₁]` containing `t`.
    pub fn cell_of(&self, t: f64) -> usize {
        let j = (t / self.dt).ceil() as isize - 1;
        j.clamp(0, self.steps as isize - 1) as usize
    }

    /// Grid with each cell split into `factor` sub-cells.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            dt: self.dt / factor as f64,
            steps: self.steps * factor,
        }
    }
}

/// Independent RNG streams for parallel path generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSeeder {
    master: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Wiener = 0,
    Jumps = 1,
    Initial = 2,
    Auxiliary = 3,
}

impl StreamSeeder {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, path: u64, channel: Channel) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(path.wrapping_mul(4).wrapping_add(channel as u64));
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WienerSpec {
    /// Number of retained modes of the cylindrical Wiener process.
    pub modes: usize,
}

/// Increments `ΔWⱼ,ₘ ~ N(0, dt)`, stored step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerTable {
    dt: f64,
    steps: usize,
    modes: usize,
    increments: Vec<f64>,
}

impl WienerTable {
    pub fn zeros(grid: &TimeGrid, modes: usize) -> Self {
        Self {
            dt: grid.dt(),
            steps: grid.steps(),
            modes,
            increments: vec![0.0; grid.steps() * modes],
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Increments over cell `step`, one per mode.
    pub fn step(&self, step: usize) -> &[f64] {
        &self.increments[step * self.modes..(step + 1) * self.modes]
    }

    pub fn values(&self) -> &[f64] {
        &self.increments
    }

    /// `W_T` per mode.
    pub fn terminal(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.modes];
        for j in 0..self.steps {
            for (acc, d) in w.iter_mut().zip(self.step(j)) {
                *acc += d;
            }
        }
        w
    }

    /// Sums consecutive blocks of `factor` increments.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(Error::Domain(format!(
                "cannot coarsen {} steps by {factor}",
                self.steps
            )));
        }
        let steps = self.steps / factor;
        let mut increments = vec![0.0; steps * self.modes];
        for j in 0..self.steps {
            let target = &mut increments[(j / factor) * self.modes..][..self.modes];
            for (acc, d) in target.iter_mut().zip(self.step(j)) {
                *acc += d;
            }
        }
        Ok(Self {
            dt: self.dt * factor as f64,
            steps,
            modes: self.modes,
            increments,
        })
    }
}

pub fn sample_wiener_increments<R: Rng + ?Sized>(
    spec: &WienerSpec,
    grid: &TimeGrid,
    rng: &mut R,
) -> WienerTable {
    let sd = grid.dt().sqrt();
    let increments = (0..grid.steps() * spec.modes)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    WienerTable {
        dt: grid.dt(),
        steps: grid.steps(),
        modes: spec.modes,
        increments,
    }
}

/// Normalised law `ν/λ_ν` of the real-valued marks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MarkLaw {
    Dirac { value: f64 },
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    /// Symmetric law with density `∝ |ξ|^{−1−index}` on
    /// `epsilon ≤ |ξ| ≤ cutoff`: the finite-activity part of a stable-like
    /// Lévy measure after discarding jumps smaller than `epsilon`.
    TruncatedPowerLaw { index: f64, epsilon: f64, cutoff: f64 },
}

impl MarkLaw {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            MarkLaw::Dirac { value } => value.is_finite(),
            MarkLaw::Normal { mean, sd } => mean.is_finite() && sd >= 0.0,
            MarkLaw::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            MarkLaw::TruncatedPowerLaw {
                index,
                epsilon,
                cutoff,
            } => index > 0.0 && index < 2.0 && epsilon > 0.0 && cutoff > epsilon,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid mark law {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            MarkLaw::Dirac { value } => value,
            MarkLaw::Normal { mean, .. } => mean,
            MarkLaw::Uniform { low, high } => 0.5 * (low + high),
            MarkLaw::TruncatedPowerLaw { .. } => 0.0,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            MarkLaw::Dirac { value } => value * value,
            MarkLaw::Normal { mean, sd } => mean * mean + sd * sd,
            MarkLaw::Uniform { low, high } => (low * low + low * high + high * high) / 3.0,
            MarkLaw::TruncatedPowerLaw {
                index,
                epsilon,
                cutoff,
            } => {
                let norm = epsilon.powf(-index) - cutoff.powf(-index);
                index / norm * (cutoff.powf(2.0 - index) - epsilon.powf(2.0 - index))
                    / (2.0 - index)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MarkLaw::Dirac { value } => value,
            MarkLaw::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            MarkLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            MarkLaw::TruncatedPowerLaw {
                index,
                epsilon,
                cutoff,
            } => {
                let u: f64 = rng.random();
                let lo = epsilon.powf(-index);
                let hi = cutoff.powf(-index);
                let r = (lo - u * (lo - hi)).powf(-1.0 / index);
                if rng.random::<bool>() {
                    r
                } else {
                    -r
                }
            }
        }
    }
}

fn default_quadrature_samples() -> usize {
    10_000
}

/// Seed of the fixed Monte Carlo quadrature rule for `∫ h dν`.
const QUADRATURE_SEED: u64 = 0x5EED_0FA1_1000;

/// Mark space `E = ℝ` with finite intensity measure `ν = λ_ν · law`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkSpaceSpec {
    /// Total mass `λ_ν = ν(E)`.
    pub intensity: f64,
    pub law: MarkLaw,
    /// Node count of the Monte Carlo rule used for `∫ h dν`.
    #[serde(default = "default_quadrature_samples")]
    pub quadrature_samples: usize,
    /// Second moment `∫ ξ² ν(dξ)` of jumps removed by small-jump
    /// truncation; zero when nothing was discarded.
    #[serde(default)]
    pub discarded_variance: f64,
    #[serde(skip)]
    nodes: OnceLock<Arc<Vec<f64>>>,
}

impl MarkSpaceSpec {
    pub fn new(intensity: f64, law: MarkLaw) -> Result<Self> {
        if !(intensity >= 0.0) || !intensity.is_finite() {
            return Err(Error::Domain(format!(
                "jump intensity must be finite and non-negative, got {intensity}"
            )));
        }
        law.validate()?;
        Ok(Self {
            intensity,
            law,
            quadrature_samples: default_quadrature_samples(),
            discarded_variance: 0.0,
            nodes: OnceLock::new(),
        })
    }

    /// No jumps at all.
    pub fn none() -> Self {
        Self::new(0.0, MarkLaw::Dirac { value: 0.0 }).expect("valid")
    }

    /// Symmetric Lévy measure `c |ξ|^{−1−index} dξ` restricted to
    /// `epsilon ≤ |ξ| ≤ cutoff`. The second moment of the removed small
    /// jumps, `2c ε^{2−index}/(2−index)`, is kept in `discarded_variance`.
    pub fn truncated_power_law(c: f64, index: f64, epsilon: f64, cutoff: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Domain("power-law scale must be positive".into()));
        }
        let law = MarkLaw::TruncatedPowerLaw {
            index,
            epsilon,
            cutoff,
        };
        law.validate()?;
        let intensity = 2.0 * c * (epsilon.powf(-index) - cutoff.powf(-index)) / index;
        let mut spec = Self::new(intensity, law)?;
        spec.discarded_variance = 2.0 * c * epsilon.powf(2.0 - index) / (2.0 - index);
        Ok(spec)
    }

    pub fn with_quadrature_samples(mut self, samples: usize) -> Self {
        self.quadrature_samples = samples.max(1);
        self.nodes = OnceLock::new();
        self
    }

    pub fn is_trivial(&self) -> bool {
        self.intensity == 0.0
    }

    /// `∫ ξ ν(dξ)`
    pub fn first_moment(&self) -> f64 {
        self.intensity * self.law.mean()
    }

    /// `∫ ξ² ν(dξ)`
    pub fn second_moment(&self) -> f64 {
        self.intensity * self.law.second_moment()
    }

    /// Nodes of the cached quadrature rule; each carries weight
    /// `λ_ν / nodes.len()`.
    pub fn quadrature_nodes(&self) -> Arc<Vec<f64>> {
        self.nodes
            .get_or_init(|| {
                let nodes = match self.law {
                    MarkLaw::Dirac { value } => vec![value],
                    law => {
                        let mut rng = ChaCha8Rng::seed_from_u64(QUADRATURE_SEED);
                        (0..self.quadrature_samples)
                            .map(|_| law.sample(&mut rng))
                            .collect()
                    }
                };
                Arc::new(nodes)
            })
            .clone()
    }

    pub fn quadrature_weight(&self) -> f64 {
        self.intensity / self.quadrature_nodes().len() as f64
    }

    /// `∫ h dν` by the cached quadrature rule.
    pub fn integrate(&self, h: impl Fn(f64) -> f64) -> f64 {
        if self.is_trivial() {
            return 0.0;
        }
        let nodes = self.quadrature_nodes();
        let vals: Vec<f64> = nodes.iter().map(|xi| h(*xi)).collect();
        crate::stats::pairwise_sum(&vals) * self.quadrature_weight()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: f64,
}

/// Samples the Poisson random measure on `[0, horizon] × E`: a
/// Poisson(`λ_ν T`) count, uniform sorted times, i.i.d. marks.
pub fn sample_prm<R: Rng + ?Sized>(
    spec: &MarkSpaceSpec,
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<JumpEvent>> {
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if spec.is_trivial() {
        return Ok(Vec::new());
    }
    let mean = spec.intensity * horizon;
    let count = Poisson::new(mean)
        .map_err(|e| Error::Domain(format!("Poisson mean {mean}: {e}")))?
        .sample(rng) as usize;
    let mut times: Vec<f64> = (0..count).map(|_| horizon * rng.random::<f64>()).collect();
    times.sort_by(f64::total_cmp);
    Ok(times
        .into_iter()
        .map(|time| JumpEvent {
            time,
            mark: spec.law.sample(rng),
        })
        .collect())
}

/// Jump events binned into the cells `(tⱼ, tⱼ₊₁]` of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpSchedule {
    events: Vec<JumpEvent>,
    offsets: Vec<usize>,
}

impl JumpSchedule {
    pub fn new(events: Vec<JumpEvent>, grid: &TimeGrid) -> Self {
        let mut offsets = vec![0usize; grid.steps() + 1];
        for e in &events {
            offsets[grid.cell_of(e.time) + 1] += 1;
        }
        for j in 0..grid.steps() {
            offsets[j + 1] += offsets[j];
        }
        Self { events, offsets }
    }

    pub fn empty(grid: &TimeGrid) -> Self {
        Self::new(Vec::new(), grid)
    }

    pub fn cell(&self, j: usize) -> &[JumpEvent] {
        &self.events[self.offsets[j]..self.offsets[j + 1]]
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    pub fn rebinned(&self, grid: &TimeGrid) -> Self {
        Self::new(self.events.clone(), grid)
    }
}

/// Per-cell increments of `∫∫ h(ξ) Ñ(ds, dξ)`:
/// `Σ_{jumps in cell} h(ξ) − dt·∫ h dν`.
pub fn compensate(
    schedule: &JumpSchedule,
    h: impl Fn(f64) -> SpectralVector,
    dim: usize,
    spec: &MarkSpaceSpec,
    grid: &TimeGrid,
) -> Result<Vec<SpectralVector>> {
    let mut mean = SpectralVector::zeros(dim);
    if !spec.is_trivial() {
        let nodes = spec.quadrature_nodes();
        let w = spec.quadrature_weight();
        for xi in nodes.iter() {
            let v = h(*xi);
            crate::error::check_dim(dim, v.dim())?;
            mean.axpy(w, &v);
        }
    }
    let mut cells = Vec::with_capacity(grid.steps());
    for j in 0..grid.steps() {
        let mut inc = mean.scaled(-grid.dt());
        for e in schedule.cell(j) {
            let v = h(e.mark);
            crate::error::check_dim(dim, v.dim())?;
            inc += &v;
        }
        cells.push(inc);
    }
    Ok(cells)
}

/// Per-cell `Σ ‖h(ξᵢ)‖²` over realised jumps: the jump part of the
/// quadratic variation of `∫∫ h dÑ`.
pub fn jump_quadratic_variation(
    schedule: &JumpSchedule,
    h: impl Fn(f64) -> SpectralVector,
    metric: &WeightedInnerProduct,
    grid: &TimeGrid,
) -> Vec<f64> {
    (0..grid.steps())
        .map(|j| {
            schedule
                .cell(j)
                .iter()
                .map(|e| metric.norm_sq(h(e.mark).as_slice()))
                .sum()
        })
        .collect()
}

/// Real Lévy driver `Z_t = b t + σ W_t + ∫₀ᵗ∫ ξ Ñ(ds, dξ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyPathSpec {
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub gaussian_variance: f64,
    pub jumps: MarkSpaceSpec,
}

impl LevyPathSpec {
    pub fn new(drift: f64, gaussian_variance: f64, jumps: MarkSpaceSpec) -> Result<Self> {
        if !(gaussian_variance >= 0.0) || !drift.is_finite() {
            return Err(Error::Domain("Lévy spec needs finite drift and σ² ≥ 0".into()));
        }
        Ok(Self {
            drift,
            gaussian_variance,
            jumps,
        })
    }

    pub fn zero() -> Self {
        Self {
            drift: 0.0,
            gaussian_variance: 0.0,
            jumps: MarkSpaceSpec::none(),
        }
    }

    /// `E[Z₁²] = b² + σ² + ∫ ξ² ν(dξ)`
    pub fn second_moment(&self) -> f64 {
        self.drift * self.drift + self.gaussian_variance + self.jumps.second_moment()
    }

    /// Grid increments of `Z` driven by the given noise realisation (first
    /// Wiener mode carries the Gaussian part).
    pub fn increments(&self, noise: &NoiseRealization, grid: &TimeGrid) -> Vec<f64> {
        let sigma = self.gaussian_variance.sqrt();
        let comp = self.jumps.first_moment();
        (0..grid.steps())
            .map(|j| {
                let dw = noise.wiener.step(j).first().copied().unwrap_or(0.0);
                let jumps: f64 = noise.jumps.cell(j).iter().map(|e| e.mark).sum();
                (self.drift - comp) * grid.dt() + sigma * dw + jumps
            })
            .collect()
    }
}

/// One frozen noise realisation: everything a path needs.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub wiener: WienerTable,
    pub jumps: JumpSchedule,
}

impl NoiseRealization {
    pub fn sample(
        wiener: &WienerSpec,
        marks: &MarkSpaceSpec,
        grid: &TimeGrid,
        seeder: &StreamSeeder,
        path: u64,
    ) -> Result<Self> {
        let table = if wiener.modes == 0 {
            WienerTable::zeros(grid, 0)
        } else {
            sample_wiener_increments(wiener, grid, &mut seeder.stream(path, Channel::Wiener))
        };
        let events = sample_prm(marks, grid.horizon(), &mut seeder.stream(path, Channel::Jumps))?;
        Ok(Self {
            wiener: table,
            jumps: JumpSchedule::new(events, grid),
        })
    }

    /// The same realisation viewed on a grid coarser by `factor`.
    pub fn coarsen(&self, factor: usize, coarse: &TimeGrid) -> Result<Self> {
        Ok(Self {
            wiener: self.wiener.coarsen(factor)?,
            jumps: self.jumps.rebinned(coarse),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Estimate;

    #[test]
    fn wiener_is_deterministic_per_seed() {
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let spec = WienerSpec { modes: 3 };
        let s = StreamSeeder::new(9);
        let a = sample_wiener_increments(&spec, &grid, &mut s.stream(4, Channel::Wiener));
        let b = sample_wiener_increments(&spec, &grid, &mut s.stream(4, Channel::Wiener));
        let c = sample_wiener_increments(&spec, &grid, &mut s.stream(5, Channel::Wiener));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn wiener_moments() {
        // 10⁵ increments at dt = 0.01
        let grid = TimeGrid::with_step(0.01, 1000.0).unwrap();
        let t = sample_wiener_increments(
            &WienerSpec { modes: 1 },
            &grid,
            &mut StreamSeeder::new(1).stream(0, Channel::Wiener),
        );
        let e = Estimate::from_samples(t.values());
        assert_eq!(e.samples, 100_000);
        assert!(e.mean.abs() < 4.0 * e.std_error, "{e:?}");
        assert!((e.variance() / 0.01 - 1.0).abs() < 0.05, "{}", e.variance());
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::with_step(0.3, 1.0).is_err());
    }

    #[test]
    fn cell_binning_is_left_open() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(g.cell_of(0.25), 0);
        assert_eq!(g.cell_of(0.2500001), 1);
        assert_eq!(g.cell_of(1.0), 3);
        assert_eq!(g.cell_of(0.0), 0);
    }

    #[test]
    fn zero_intensity_has_no_events() {
        let ev = sample_prm(&MarkSpaceSpec::none(), 1.0, &mut StreamSeeder::new(0).stream(0, Channel::Jumps))
            .unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn prm_count_mean_and_determinism() {
        let spec = MarkSpaceSpec::new(2.0, MarkLaw::Normal { mean: 0.0, sd: 1.0 }).unwrap();
        let s = StreamSeeder::new(3);
        let a = sample_prm(&spec, 1.0, &mut s.stream(0, Channel::Jumps)).unwrap();
        let b = sample_prm(&spec, 1.0, &mut s.stream(0, Channel::Jumps)).unwrap();
        assert_eq!(a, b);
        let counts: Vec<f64> = (0..10_000)
            .map(|p| sample_prm(&spec, 1.0, &mut s.stream(p, Channel::Jumps)).unwrap().len() as f64)
            .collect();
        let e = Estimate::from_samples(&counts);
        assert!((e.mean - 2.0).abs() <= 3.0 * (2.0f64 / 1e4).sqrt(), "{}", e.mean);
        for w in a.windows(2) {
            assert!(w[0].time < w[1].time);
        }
    }

    #[test]
    fn compensator_only_cells_and_zero_integrand() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let spec = MarkSpaceSpec::new(3.0, MarkLaw::Dirac { value: 0.5 }).unwrap();
        let schedule = JumpSchedule::empty(&grid);
        let inc = compensate(&schedule, |xi| SpectralVector::from_vec(vec![xi]), 1, &spec, &grid).unwrap();
        for c in &inc {
            assert!((c[0] + 0.1 * 1.5).abs() < 1e-15);
        }
        let zero = compensate(&schedule, |_| SpectralVector::zeros(2), 2, &spec, &grid).unwrap();
        assert!(zero.iter().all(|c| c.is_zero()));
    }

    #[test]
    fn compensated_sum_has_zero_mean() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let spec = MarkSpaceSpec::new(2.0, MarkLaw::Uniform { low: 0.0, high: 1.0 }).unwrap();
        let s = StreamSeeder::new(11);
        let sums: Vec<f64> = (0..10_000)
            .map(|p| {
                let ev = sample_prm(&spec, 1.0, &mut s.stream(p, Channel::Jumps)).unwrap();
                let sched = JumpSchedule::new(ev, &grid);
                compensate(&sched, |xi| SpectralVector::from_vec(vec![xi * xi]), 1, &spec, &grid)
                    .unwrap()
                    .iter()
                    .map(|c| c[0])
                    .sum()
            })
            .collect();
        let e = Estimate::from_samples(&sums);
        assert!(e.mean.abs() < 4.0 * e.std_error, "{e:?}");
    }

    #[test]
    fn jump_quadratic_variation_is_pathwise_sum() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let events = vec![
            JumpEvent { time: 0.1, mark: 2.0 },
            JumpEvent { time: 0.2, mark: -1.0 },
            JumpEvent { time: 0.9, mark: 3.0 },
        ];
        let sched = JumpSchedule::new(events, &grid);
        let qv = jump_quadratic_variation(
            &sched,
            |xi| SpectralVector::from_vec(vec![xi, 1.0]),
            &WeightedInnerProduct::unit(2),
            &grid,
        );
        assert_eq!(qv, vec![4.0 + 1.0 + 1.0 + 1.0, 9.0 + 1.0]);
    }

    #[test]
    fn power_law_truncation_moments() {
        let spec = MarkSpaceSpec::truncated_power_law(0.5, 1.2, 0.05, 2.0).unwrap();
        assert!(spec.intensity.is_finite() && spec.intensity > 0.0);
        let expected = 2.0 * 0.5 * 0.05f64.powf(0.8) / 0.8;
        assert!((spec.discarded_variance - expected).abs() < 1e-15);
        // closed-form ∫ξ²ν against the quadrature rule
        let q = spec.integrate(|x| x * x);
        assert!((q / spec.second_moment() - 1.0).abs() < 0.05, "{q} vs {}", spec.second_moment());
        // direct: ∫_{ε}^{C} 2c r^{1−β} dr
        let direct = 2.0 * 0.5 * (2.0f64.powf(0.8) - 0.05f64.powf(0.8)) / 0.8;
        assert!((spec.second_moment() - direct).abs() < 1e-12);
    }

    #[test]
    fn coarsening_preserves_terminal_value() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let s = StreamSeeder::new(5);
        let marks = MarkSpaceSpec::new(4.0, MarkLaw::Dirac { value: 1.0 }).unwrap();
        let noise = NoiseRealization::sample(&WienerSpec { modes: 2 }, &marks, &grid, &s, 0).unwrap();
        let coarse_grid = TimeGrid::new(1.0, 8).unwrap();
        let coarse = noise.coarsen(8, &coarse_grid).unwrap();
        let (a, b) = (noise.wiener.terminal(), coarse.wiener.terminal());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let fine_total: usize = (0..64).map(|j| noise.jumps.cell(j).len()).sum();
        let coarse_total: usize = (0..8).map(|j| coarse.jumps.cell(j).len()).sum();
        assert_eq!(fine_total, coarse_total);
    }

    #[test]
    fn levy_second_moment() {
        let l = LevyPathSpec::new(
            0.5,
            0.25,
            MarkSpaceSpec::new(2.0, MarkLaw::Normal { mean: 0.0, sd: 0.5 }).unwrap(),
        )
        .unwrap();
        assert!((l.second_moment() - (0.25 + 0.25 + 0.5)).abs() < 1e-15);
    }
}

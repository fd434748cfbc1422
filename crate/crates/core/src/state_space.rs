//! Finite truncations of the state space.
//!
//! A [`Basis`] names the retained modes; a [`SpectralVector`] holds the
//! coefficients of a state in that basis; a [`WeightedInnerProduct`] carries
//! the per-mode metric, so that plain `L²` and energy-type norms such as
//! `H¹ × L²` live side by side on the same coefficient layout.

use std::collections::HashSet;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Range, Sub, SubAssign};

use crate::error::{check_dim, Error, Result};

/// Named contiguous group of modes inside a product basis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisBlock {
    pub name: String,
    pub range: Range<usize>,
}

/// Ordered, uniquely labelled set of retained modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    labels: Vec<String>,
    blocks: Vec<BasisBlock>,
}

impl Basis {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        let dim = labels.len();
        Self::with_blocks(
            labels,
            vec![BasisBlock {
                name: "all".into(),
                range: 0..dim,
            }],
        )
    }

    fn with_blocks(labels: Vec<String>, blocks: Vec<BasisBlock>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Basis("a basis needs at least one mode".into()));
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::Basis(format!("duplicate mode label `{label}`")));
            }
        }
        Ok(Self { labels, blocks })
    }

    /// Dirichlet sine modes `√2 sin(kπx)`, `k = 1..=modes`, on `(0, 1)`.
    pub fn sine(modes: usize) -> Result<Self> {
        let labels = (1..=modes).map(|k| format!("sin{k}")).collect();
        let mut basis = Self::new(labels)?;
        basis.blocks[0].name = "sin".into();
        Ok(basis)
    }

    /// Flattened product of named blocks; labels are `"{block}{i}"` with
    /// `i` counting from one inside each block.
    pub fn product(blocks: &[(&str, usize)]) -> Result<Self> {
        let mut labels = Vec::new();
        let mut out = Vec::with_capacity(blocks.len());
        for (name, size) in blocks {
            if *size == 0 {
                return Err(Error::Basis(format!("block `{name}` is empty")));
            }
            let start = labels.len();
            labels.extend((1..=*size).map(|i| format!("{name}{i}")));
            out.push(BasisBlock {
                name: (*name).to_string(),
                range: start..labels.len(),
            });
        }
        Self::with_blocks(labels, out)
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn blocks(&self) -> &[BasisBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<Range<usize>> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .map(|b| b.range.clone())
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Coefficients of a state in a fixed basis.
///
/// Vectors do not carry a handle to their basis; the model that owns them
/// does, and mismatches surface as dimension errors at API boundaries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectralVector(Vec<f64>);

impl SpectralVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// The `k`-th unit vector (zero-based).
    pub fn unit(dim: usize, k: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[k] = 1.0;
        v
    }

    pub fn from_vec(coeffs: Vec<f64>) -> Self {
        Self(coeffs)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &SpectralVector) {
        debug_assert_eq!(self.dim(), other.dim());
        for (s, o) in self.0.iter_mut().zip(&other.0) {
            *s += a * o;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self(self.0.iter().map(|v| a * v).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

impl From<Vec<f64>> for SpectralVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Index<usize> for SpectralVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for SpectralVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add<&SpectralVector> for &SpectralVector {
    type Output = SpectralVector;
    fn add(self, rhs: &SpectralVector) -> SpectralVector {
        debug_assert_eq!(self.dim(), rhs.dim());
        SpectralVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub<&SpectralVector> for &SpectralVector {
    type Output = SpectralVector;
    fn sub(self, rhs: &SpectralVector) -> SpectralVector {
        debug_assert_eq!(self.dim(), rhs.dim());
        SpectralVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl AddAssign<&SpectralVector> for SpectralVector {
    fn add_assign(&mut self, rhs: &SpectralVector) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&SpectralVector> for SpectralVector {
    fn sub_assign(&mut self, rhs: &SpectralVector) {
        self.axpy(-1.0, rhs);
    }
}

impl Mul<&SpectralVector> for f64 {
    type Output = SpectralVector;
    fn mul(self, rhs: &SpectralVector) -> SpectralVector {
        rhs.scaled(self)
    }
}

/// Diagonal metric `⟨x, y⟩ = Σ wₖ xₖ yₖ` on the coefficient space.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedInnerProduct {
    weights: Vec<f64>,
}

impl WeightedInnerProduct {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("metric needs at least one weight".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::Domain(format!(
                "metric weights must be positive and finite, got {w}"
            )));
        }
        Ok(Self { weights })
    }

    /// The Euclidean metric on `dim` coefficients.
    pub fn unit(dim: usize) -> Self {
        Self {
            weights: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn inner(&self, x: &SpectralVector, y: &SpectralVector) -> Result<f64> {
        check_dim(self.dim(), x.dim())?;
        check_dim(self.dim(), y.dim())?;
        Ok(self.dot(x.as_slice(), y.as_slice()))
    }

    pub fn norm(&self, x: &SpectralVector) -> Result<f64> {
        check_dim(self.dim(), x.dim())?;
        Ok(self.norm_sq(x.as_slice()).sqrt())
    }

    /// Unchecked inner product on raw coefficient slices.
    #[inline]
    pub fn dot(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        debug_assert_eq!(y.len(), self.weights.len());
        self.weights
            .iter()
            .zip(x.iter().zip(y))
            .map(|(w, (a, b))| w * (a * b))
            .sum()
    }

    #[inline]
    pub fn norm_sq(&self, x: &[f64]) -> f64 {
        self.dot(x, x)
    }

    /// `‖x − y‖²` without allocating.
    #[inline]
    pub fn dist_sq(&self, x: &[f64], y: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(x.iter().zip(y))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum()
    }
}

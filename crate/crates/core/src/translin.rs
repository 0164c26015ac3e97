//! Transformed-linear algebra on the positive orthant.
//!
//! Vectors in `[0, ∞)^p` form a vector space under
//! `x ⊕ y = t(t⁻¹(x) + t⁻¹(y))` and `a ∘ x = t(a · t⁻¹(x))`, where
//! `t(y) = log(1 + eʸ)` is the softplus map. Large values pass through `t`
//! essentially unchanged, so the operations act linearly in the upper tail.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Beyond this magnitude the linear (resp. exponential) asymptote of the
/// softplus pair is exact in double precision.
pub const BRANCH_CUTOFF: f64 = 30.0;

/// `t(y) = log(1 + eʸ)` without argument validation.
#[inline]
pub fn softplus_unchecked(y: f64) -> f64 {
    if y > BRANCH_CUTOFF {
        y + (-y).exp()
    } else if y > 0.0 {
        y + (-y).exp().ln_1p()
    } else {
        y.exp().ln_1p()
    }
}

/// `t⁻¹(x) = log(eˣ − 1)` without argument validation; `x <= 0` yields
/// `-inf` or NaN.
#[inline]
pub fn softplus_inv_unchecked(x: f64) -> f64 {
    if x > BRANCH_CUTOFF {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

pub fn softplus(y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::InvalidArgument(format!("softplus argument must be finite, got {y}")));
    }
    Ok(softplus_unchecked(y))
}

pub fn softplus_inv(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("softplus inverse requires a finite positive argument, got {x}")));
    }
    Ok(softplus_inv_unchecked(x))
}

/// A point of the positive orthant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NonNegVector(Vec<f64>);

impl NonNegVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("entry {i} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    fn preimage(&self) -> Result<Vec<f64>> {
        self.0
            .iter()
            .enumerate()
            .map(
                |(index, &value)| {
                    if value > 0.0 {
                        Ok(softplus_inv_unchecked(value))
                    } else {
                        Err(Error::NonPositive { index, value })
                    }
                },
            )
            .collect()
    }

    fn from_preimage(y: impl IntoIterator<Item = f64>) -> Self {
        Self(y.into_iter().map(softplus_unchecked).collect())
    }
}

impl TryFrom<Vec<f64>> for NonNegVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<NonNegVector> for Vec<f64> {
    fn from(v: NonNegVector) -> Self {
        v.0
    }
}

/// Real coefficient vector; negative entries are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CoeffVector(Vec<f64>);

impl CoeffVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("coefficient {i} is not finite ({v})")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Tail ratio `Σ (aⱼ⁽⁰⁾)²` of `aᵀ ∘ Z` relative to a single `Zⱼ`.
    pub fn tail_ratio(&self) -> f64 {
        self.0.iter().map(|a| a.max(0.0).powi(2)).sum()
    }
}

impl TryFrom<Vec<f64>> for CoeffVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CoeffVector> for Vec<f64> {
    fn from(v: CoeffVector) -> Self {
        v.0
    }
}

/// The `p × q` matrix `A` of a construction `X = A ∘ Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    entries: DMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("generator matrix has non-finite entries".into()));
        }
        Ok(Self { entries })
    }

    /// Generator restricted to the nonnegative modeling subset.
    pub fn new_nonneg(entries: DMatrix<f64>) -> Result<Self> {
        let g = Self::new(entries)?;
        if !g.is_nonneg() {
            return Err(Error::InvalidArgument("generator matrix flagged nonnegative has negative entries".into()));
        }
        Ok(g)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        let q = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != q) {
            return Err(Error::shape(format!("rows of length {q}"), "ragged rows"));
        }
        Self::new(DMatrix::from_fn(p, q, |i, j| rows[i][j]))
    }

    pub fn is_nonneg(&self) -> bool {
        self.entries.iter().all(|&v| v >= 0.0)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

/// Componentwise `max(·, 0)`.
pub trait ZeroClip {
    fn zero_clip(&self) -> Self;
}

impl ZeroClip for CoeffVector {
    fn zero_clip(&self) -> Self {
        Self(self.0.iter().map(|v| v.max(0.0)).collect())
    }
}

impl ZeroClip for GeneratorMatrix {
    fn zero_clip(&self) -> Self {
        Self { entries: self.entries.map(|v| v.max(0.0)) }
    }
}

pub fn zero_clip<T: ZeroClip>(a: &T) -> T {
    a.zero_clip()
}

/// `x₁ ⊕ x₂`.
pub fn tadd(x1: &NonNegVector, x2: &NonNegVector) -> Result<NonNegVector> {
    if x1.len() != x2.len() {
        return Err(Error::shape(x1.len(), x2.len()));
    }
    let (y1, y2) = (x1.preimage()?, x2.preimage()?);
    Ok(NonNegVector::from_preimage(y1.iter().zip(&y2).map(|(a, b)| a + b)))
}

/// `a ∘ x`.
///
/// Negative scalars are evaluated literally; their image stays strictly
/// positive but carries no upper-tail mass.
pub fn tscale(a: f64, x: &NonNegVector) -> Result<NonNegVector> {
    if !a.is_finite() {
        return Err(Error::InvalidArgument(format!("scalar must be finite, got {a}")));
    }
    let y = x.preimage()?;
    Ok(NonNegVector::from_preimage(y.into_iter().map(|v| a * v)))
}

/// `A ∘ z = t(A t⁻¹(z))`.
pub fn tmat_apply(a: &GeneratorMatrix, z: &NonNegVector) -> Result<NonNegVector> {
    if a.ncols() != z.len() {
        return Err(Error::shape(format!("vector of length {}", a.ncols()), format!("length {}", z.len())));
    }
    let y = DVector::from_vec(z.preimage()?);
    let out = a.matrix() * y;
    Ok(NonNegVector::from_preimage(out.iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn softplus_reference_values() {
        assert_relative_eq!(softplus(0.0).unwrap(), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_relative_eq!(softplus(100.0).unwrap(), 100.0, max_relative = 1e-12);
        assert_relative_eq!(softplus(-50.0).unwrap(), (-50.0f64).exp(), max_relative = 1e-12);
        assert!(softplus(f64::NAN).is_err());
        assert!(softplus(f64::INFINITY).is_err());
    }

    #[test]
    fn softplus_inv_reference_values() {
        assert!(softplus_inv(std::f64::consts::LN_2).unwrap().abs() < 1e-15);
        assert_relative_eq!(softplus_inv(100.0).unwrap(), 100.0, max_relative = 1e-12);
        // log(expm1(1e-8)) to 20 digits
        assert_relative_eq!(softplus_inv(1e-8).unwrap(), -18.420_680_738_952_365, max_relative = 1e-14);
        assert!(matches!(softplus_inv(0.0), Err(Error::Domain(_))));
        assert!(softplus_inv(-1.0).is_err());
    }

    #[test]
    fn branches_agree_at_cutoff() {
        let below = (BRANCH_CUTOFF - 1e-9).exp().ln_1p();
        assert_relative_eq!(softplus_unchecked(BRANCH_CUTOFF - 1e-9), below, max_relative = 1e-15);
        let x = BRANCH_CUTOFF + 1e-9;
        assert_relative_eq!(softplus_inv_unchecked(x), x.exp_m1().ln(), max_relative = 1e-15);
    }

    #[test]
    fn tadd_examples() {
        let l2 = NonNegVector::new(vec![std::f64::consts::LN_2; 3]).unwrap();
        let s = tadd(&l2, &l2).unwrap();
        for v in s.as_slice() {
            assert_relative_eq!(*v, std::f64::consts::LN_2, epsilon = 1e-15);
        }
        let ten = NonNegVector::new(vec![10.0]).unwrap();
        // t(2 t⁻¹(10)) evaluated at 40 digits
        assert_relative_eq!(tadd(&ten, &ten).unwrap().as_slice()[0], 19.999_909_200_140_6, max_relative = 1e-13);
        assert!(tadd(&ten, &l2).is_err());
        let zero = NonNegVector::new(vec![0.0]).unwrap();
        assert!(matches!(tadd(&zero, &ten), Err(Error::NonPositive { index: 0, .. })));
    }

    #[test]
    fn tscale_examples() {
        let x = NonNegVector::new(vec![0.3, 5.0, 77.0]).unwrap();
        let one = tscale(1.0, &x).unwrap();
        for (a, b) in one.as_slice().iter().zip(x.as_slice()) {
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
        for v in tscale(0.0, &x).unwrap().as_slice() {
            assert_relative_eq!(*v, std::f64::consts::LN_2, epsilon = 1e-15);
        }
        let five = NonNegVector::new(vec![5.0]).unwrap();
        assert_relative_eq!(tscale(2.0, &five).unwrap().as_slice()[0], 9.986_524_518_016_116, max_relative = 1e-13);
        assert!(tscale(f64::NAN, &five).is_err());
    }

    #[test]
    fn tmat_apply_examples() {
        let z = NonNegVector::new(vec![0.2, 3.0, 45.0]).unwrap();
        let id = GeneratorMatrix::new(DMatrix::identity(3, 3)).unwrap();
        for (a, b) in tmat_apply(&id, &z).unwrap().as_slice().iter().zip(z.as_slice()) {
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
        let row = GeneratorMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let l2 = NonNegVector::new(vec![std::f64::consts::LN_2; 2]).unwrap();
        assert_relative_eq!(tmat_apply(&row, &l2).unwrap().as_slice()[0], std::f64::consts::LN_2, epsilon = 1e-15);
        let big = NonNegVector::new(vec![20.0, 30.0]).unwrap();
        assert_relative_eq!(tmat_apply(&row, &big).unwrap().as_slice()[0], 50.0, max_relative = 1e-6);
        assert!(tmat_apply(&row, &z).is_err());
    }

    #[test]
    fn zero_clip_examples() {
        let a = CoeffVector::new(vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(a.zero_clip().as_slice(), &[0.0, 0.0, 2.0]);
        let b = CoeffVector::new(vec![0.5, 1.0]).unwrap();
        assert_eq!(zero_clip(&b), b);
        let g = GeneratorMatrix::from_rows(&[vec![-1.0, 2.0], vec![3.0, -4.0]]).unwrap();
        let c = g.zero_clip();
        assert!(c.is_nonneg());
        assert_eq!(c.zero_clip(), c);
        assert!(CoeffVector::new(vec![f64::NAN]).is_err());
        assert!(GeneratorMatrix::new_nonneg(g.matrix().clone()).is_err());
    }

    #[test]
    fn tail_ratio_ignores_negative_coefficients() {
        let a = CoeffVector::new(vec![-3.0, 1.0, 2.0]).unwrap();
        assert_relative_eq!(a.tail_ratio(), 5.0);
    }
}

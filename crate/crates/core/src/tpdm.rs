//! Tail pairwise dependence matrices: closed form for a generator, the
//! pairwise radial-threshold estimator, and a positive semi-definite check.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile_sorted;
use crate::translin::{GeneratorMatrix, ZeroClip};

pub const PSD_TOLERANCE: f64 = -1e-8;
pub const MIN_PAIR_EXCEEDANCES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TpdmDoc", into = "TpdmDoc")]
pub struct Tpdm {
    matrix: DMatrix<f64>,
    quantile: Option<f64>,
    exceedances: Option<DMatrix<usize>>,
    repaired: bool,
}

#[derive(Serialize, Deserialize)]
struct TpdmDoc {
    entries: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quantile: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exceedances: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    repaired: bool,
}

fn to_rows<T: Clone + nalgebra::Scalar>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn from_rows<T: Clone + nalgebra::Scalar>(rows: &[Vec<T>]) -> Result<DMatrix<T>> {
    let p = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != p) {
        return Err(Error::shape(format!("{p} columns"), format!("{} columns", bad.len())));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j].clone()))
}

impl From<Tpdm> for TpdmDoc {
    fn from(t: Tpdm) -> Self {
        TpdmDoc {
            entries: to_rows(&t.matrix),
            quantile: t.quantile,
            exceedances: t.exceedances.as_ref().map(to_rows),
            repaired: t.repaired,
        }
    }
}

impl TryFrom<TpdmDoc> for Tpdm {
    type Error = Error;

    fn try_from(doc: TpdmDoc) -> Result<Self> {
        let mut t = Tpdm::new(from_rows(&doc.entries)?)?;
        t.quantile = doc.quantile;
        t.exceedances = doc.exceedances.as_deref().map(from_rows).transpose()?;
        t.repaired = doc.repaired;
        Ok(t)
    }
}

impl Tpdm {
    /// Validates a square, symmetric, nonnegative matrix.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::shape("non-empty square matrix", format!("{}×{}", matrix.nrows(), matrix.ncols())));
        }
        if matrix.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("TPDM entries must be finite and nonnegative".into()));
        }
        let scale = matrix.amax().max(1.0);
        let p = matrix.nrows();
        for i in 0..p {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!("TPDM is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { matrix, quantile: None, exceedances: None, repaired: false })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn quantile(&self) -> Option<f64> {
        self.quantile
    }

    /// Per-pair exceedance counts of the estimator, if estimated from data.
    pub fn exceedances(&self) -> Option<&DMatrix<usize>> {
        self.exceedances.as_ref()
    }

    /// Whether negative eigenvalues were clipped after estimation.
    pub fn was_repaired(&self) -> bool {
        self.repaired
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        to_rows(&self.matrix)
    }

    /// Rescales to unit diagonal, `σᵢⱼ / √(σᵢᵢσⱼⱼ)`.
    pub fn normalized(&self) -> DMatrix<f64> {
        let d: Vec<f64> = self.matrix.diagonal().iter().map(|v| v.sqrt()).collect();
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.matrix[(i, j)] / (d[i] * d[j]))
    }
}

/// `A⁽⁰⁾A⁽⁰⁾ᵀ`.
pub fn tpdm_of_generator(a: &GeneratorMatrix) -> Tpdm {
    let clipped = a.zero_clip();
    let m = clipped.matrix();
    let mut gram = m * m.transpose();
    // exact symmetry regardless of summation order
    let p = gram.nrows();
    for i in 0..p {
        for j in 0..i {
            gram[(j, i)] = gram[(i, j)];
        }
    }
    Tpdm { matrix: gram, quantile: None, exceedances: None, repaired: false }
}

/// Smallest eigenvalue and whether it clears [`PSD_TOLERANCE`].
pub fn psd_check(m: &DMatrix<f64>) -> (f64, bool) {
    let min = SymmetricEigen::new(m.clone()).eigenvalues.min();
    (min, min >= PSD_TOLERANCE)
}

/// Clips negative eigenvalues and restores the diagonal until the matrix
/// passes [`psd_check`].
fn repair_psd(m: &DMatrix<f64>, diagonal: &[f64]) -> DMatrix<f64> {
    let mut current = m.clone();
    for _ in 0..100 {
        if psd_check(&current).1 {
            break;
        }
        let eig = SymmetricEigen::new(current.clone());
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        let mut next = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        let p = next.nrows();
        for i in 0..p {
            for j in 0..i {
                let v = 0.5 * (next[(i, j)] + next[(j, i)]);
                next[(i, j)] = v.max(0.0);
                next[(j, i)] = v.max(0.0);
            }
            next[(i, i)] = diagonal[i];
        }
        current = next;
    }
    current
}

struct PairEstimate {
    sigma: f64,
    count: usize,
}

fn estimate_pair(xi: &[f64], xj: &[f64], quantile: f64, mass: f64) -> std::result::Result<PairEstimate, String> {
    let r: Vec<f64> = xi.iter().zip(xj).map(|(a, b)| a.hypot(*b)).collect();
    let mut sorted = r.clone();
    sorted.sort_by(f64::total_cmp);
    let r_star = quantile_sorted(&sorted, quantile);
    let mut count = 0usize;
    let mut sum = 0.0;
    for ((&a, &b), &rt) in xi.iter().zip(xj).zip(&r) {
        if rt > r_star {
            count += 1;
            sum += (a / rt) * (b / rt);
        }
    }
    if count < MIN_PAIR_EXCEEDANCES {
        return Err(format!(
            "only {count} exceedances above the {quantile} radial quantile, need {MIN_PAIR_EXCEEDANCES}"
        ));
    }
    Ok(PairEstimate { sigma: mass * sum / count as f64, count })
}

/// Pairwise TPDM estimate from an `n × p` sample on a common tail scale.
///
/// Each pair uses its own radial threshold at `quantile`; the diagonal is
/// set to `tail_ratios`, and the result is projected to the PSD cone if
/// sampling noise pushed it outside.
pub fn estimate_pairwise(data: &DMatrix<f64>, quantile: f64, tail_ratios: &[f64]) -> Result<Tpdm> {
    let (n, p) = data.shape();
    if n < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 rows, got {n}")));
    }
    if tail_ratios.len() != p {
        return Err(Error::shape(format!("{p} tail ratios"), tail_ratios.len()));
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile must lie in (0, 1), got {quantile}")));
    }
    if let Some(&tr) = tail_ratios.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("tail ratios must be positive, got {tr}")));
    }
    if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::NonPositive { index, value });
    }

    let columns: Vec<Vec<f64>> = (0..p).map(|j| data.column(j).iter().cloned().collect()).collect();
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
    let estimates: Vec<_> = pairs
        .par_iter()
        .map(|&(i, j)| {
            estimate_pair(&columns[i], &columns[j], quantile, tail_ratios[i] + tail_ratios[j])
                .map_err(|reason| Error::PairEstimation { i, j, reason })
        })
        .collect::<Result<_>>()?;

    let mut matrix = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(tail_ratios));
    let mut counts = DMatrix::from_element(p, p, n);
    for (&(i, j), est) in pairs.iter().zip(&estimates) {
        matrix[(i, j)] = est.sigma;
        matrix[(j, i)] = est.sigma;
        counts[(i, j)] = est.count;
        counts[(j, i)] = est.count;
    }
    let repaired = !psd_check(&matrix).1;
    if repaired {
        matrix = repair_psd(&matrix, tail_ratios);
    }
    Ok(Tpdm { matrix, quantile: Some(quantile), exceedances: Some(counts), repaired })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn generator_identity_and_rotation() {
        let id = GeneratorMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(tpdm_of_generator(&id).matrix(), &DMatrix::<f64>::identity(3, 3));
        let a = GeneratorMatrix::from_rows(&[vec![0.6, 0.8], vec![0.8, 0.6]]).unwrap();
        let t = tpdm_of_generator(&a);
        assert_relative_eq!(t.matrix()[(0, 1)], 24.0 / 25.0, epsilon = 1e-15);
        assert_relative_eq!(t.matrix()[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn generator_negative_entries_are_clipped() {
        let a = GeneratorMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let b = GeneratorMatrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 3.0]]).unwrap();
        assert_eq!(tpdm_of_generator(&a), tpdm_of_generator(&b));
    }

    #[test]
    fn psd_check_examples() {
        assert_eq!(psd_check(&DMatrix::identity(4, 4)), (1.0, true));
        let (min, ok) = psd_check(&DMatrix::from_row_slice(2, 2, &[1.0, 1.2, 1.2, 1.0]));
        assert_relative_eq!(min, -0.2, epsilon = 1e-12);
        assert!(!ok);
    }

    #[test]
    fn comonotone_pair_gives_one() {
        let x: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        let data = DMatrix::from_fn(1000, 2, |r, _| x[r]);
        let t = estimate_pairwise(&data, 0.9, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(t.matrix()[(0, 1)], 1.0, epsilon = 1e-12);
        assert_eq!(t.exceedances().unwrap()[(0, 1)], 100);
    }

    #[test]
    fn exceedances_on_axes_give_zero() {
        let data = DMatrix::from_fn(1000, 2, |r, c| {
            if r >= 900 && r % 2 == c {
                1e3 + r as f64
            } else {
                1.0 + (r % 7) as f64 * 0.01
            }
        });
        let t = estimate_pairwise(&data, 0.9, &[1.0, 1.0]).unwrap();
        assert!(t.matrix()[(0, 1)] < 2e-3);
    }

    #[test]
    fn too_few_exceedances_names_pair() {
        let data = DMatrix::from_fn(200, 3, |r, c| 1.0 + (r * (c + 1)) as f64);
        match estimate_pairwise(&data, 0.9, &[1.0; 3]) {
            Err(Error::PairEstimation { i: 0, j: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_nonpositive_and_small_samples() {
        let mut data = DMatrix::from_element(200, 2, 1.0);
        data[(3, 1)] = 0.0;
        assert!(matches!(estimate_pairwise(&data, 0.5, &[1.0; 2]), Err(Error::NonPositive { .. })));
        let small = DMatrix::from_element(99, 2, 1.0);
        assert!(estimate_pairwise(&small, 0.5, &[1.0; 2]).is_err());
    }

    #[test]
    fn repair_restores_psd_and_diagonal() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.1, 0.9, 1.0, 0.9, 0.1, 0.9, 1.0]);
        assert!(!psd_check(&m).1);
        let fixed = repair_psd(&m, &[1.0; 3]);
        assert!(psd_check(&fixed).1);
        for i in 0..3 {
            assert_eq!(fixed[(i, i)], 1.0);
        }
    }

    #[test]
    fn serde_round_trip() {
        let a = GeneratorMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, 3.0]]).unwrap();
        let t = tpdm_of_generator(&a);
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("entries"));
        let back: Tpdm = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<Tpdm>(r#"{"entries":[[1,2],[3,1]]}"#).is_err());
    }
}

//! Gram-matrix extraction from folded-Gaussian synthetic data.
//!
//! Each pixel of the dataset is one i.i.d. draw of `|g|` with
//! `g ~ N(0, W W^T)`, where the rows of `W` are the (unit-norm) selection
//! vectors. The covariance of the folded draw relates to the Gaussian one
//! through the scalar map
//!
//! `Psi(z) = (2/pi) * (z * asin(z) + sqrt(1 - z^2) - 1)`,
//!
//! so inverting `Psi` entrywise on the empirical folded covariance and
//! rounding to the parameter grid recovers `grid * W W^T` exactly once
//! the pixel count is large enough.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::SyntheticDataset;

/// Integer-scaled Gram matrix of selection vectors: entry `(i, j)` equals
/// `grid * <w_i, w_j>`, an exact overlap count under the model's scaling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapMatrix {
    entries: Vec<i64>,
    m: usize,
    grid: usize,
}

impl OverlapMatrix {
    /// Validates symmetry, the `diagonal == grid` normalization and the
    /// `[0, grid]` entry range.
    pub fn new(entries: Vec<i64>, m: usize, grid: usize) -> Result<Self> {
        if entries.len() != m * m {
            return Err(Error::DimensionMismatch(format!(
                "overlap matrix of order {m} needs {} entries, got {}",
                m * m,
                entries.len()
            )));
        }
        if grid == 0 {
            return Err(Error::Parameter("overlap grid must be positive".into()));
        }
        for i in 0..m {
            if entries[i * m + i] != grid as i64 {
                return Err(Error::Consistency(format!(
                    "overlap diagonal at {i} is {} instead of grid {grid}",
                    entries[i * m + i]
                )));
            }
            for j in (i + 1)..m {
                let e = entries[i * m + j];
                if e != entries[j * m + i] {
                    return Err(Error::Matrix(format!(
                        "overlap matrix is asymmetric at ({i}, {j})"
                    )));
                }
                if e < 0 || e > grid as i64 {
                    return Err(Error::Consistency(format!(
                        "overlap entry ({i}, {j}) = {e} outside [0, {grid}]; d is likely too small"
                    )));
                }
            }
        }
        Ok(Self { entries, m, grid })
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.m + j]
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    /// Restricts to the principal submatrix indexed by `idx`.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Vec<i64> {
        let l = idx.len();
        let mut out = vec![0i64; l * l];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out[a * l + b] = self.get(i, j);
            }
        }
        out
    }
}

/// Empirical mean and covariance of the per-pixel folded draws.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedCovariance {
    /// Per-image mean response.
    pub mean: DVector<f64>,
    /// `m x m` covariance with the population (`1/d`) normalization.
    pub cov: DMatrix<f64>,
}

/// Covariance of a folded standard bivariate pair with correlation `z`.
/// Strictly increasing on [0, 1]; inputs outside are clamped.
pub fn psi(z: f64) -> f64 {
    let z = if (0.0..=1.0).contains(&z) {
        z
    } else {
        log::warn!("psi input {z} outside [0, 1]; clamping");
        z.clamp(0.0, 1.0)
    };
    std::f64::consts::FRAC_2_PI * (z * z.asin() + (1.0 - z * z).sqrt() - 1.0)
}

/// Upper end of `psi`'s range: `psi(1) = 1 - 2/pi`.
pub const PSI_MAX: f64 = 1.0 - std::f64::consts::FRAC_2_PI;

/// Inverse of [`psi`] on its monotone branch, by bisection: returns `z`
/// with `|psi(z) - v| <= tol`. Inputs outside `[0, 1 - 2/pi]` clamp to
/// the endpoints.
pub fn psi_inv(v: f64, tol: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    if v >= PSI_MAX {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = psi(mid);
        if (f - v).abs() <= tol {
            return mid;
        }
        if f < v {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < f64::EPSILON {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four-lane accumulation; the compiler vectorizes this well
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// Empirical folded mean and covariance over the `d` pixel draws, with
/// the `1/d` (population-style) normalization.
pub fn empirical_folded_covariance(data: &SyntheticDataset) -> Result<FoldedCovariance> {
    folded_covariance_from_images(&data.images)
}

/// [`empirical_folded_covariance`] on a bare `d x m` image matrix
/// (column `i` = synthetic image `i`).
pub fn folded_covariance_from_images(images: &DMatrix<f64>) -> Result<FoldedCovariance> {
    let d = images.nrows();
    let m = images.ncols();
    if d < 2 {
        return Err(Error::Sizing(format!(
            "need at least 2 pixels to estimate a covariance, got {d}"
        )));
    }
    if (m as u64 * m as u64) > crate::model::MAX_MATRIX_ELEMENTS {
        return Err(Error::Sizing(format!(
            "m*m = {} exceeds the memory budget",
            m as u64 * m as u64
        )));
    }
    let cols = images.as_slice();
    let col = |i: usize| &cols[i * d..(i + 1) * d];
    let inv_d = 1.0 / d as f64;
    let mean: Vec<f64> = (0..m).map(|i| col(i).iter().sum::<f64>() * inv_d).collect();

    // (1/d) sum_j (z_j - mu)(z_j - mu)^T == (1/d) Y Y^T - mu mu^T, computed
    // per entry as a contiguous column dot; each entry is owned by one task.
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let ci = col(i);
            (i..m)
                .map(|j| dot(ci, col(j)) * inv_d - mean[i] * mean[j])
                .collect()
        })
        .collect();
    let mut cov = DMatrix::zeros(m, m);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(FoldedCovariance {
        mean: DVector::from_vec(mean),
        cov,
    })
}

/// Clips the folded covariance into `Psi`'s invertible window and applies
/// `Psi^{-1}` entrywise. The floor `eta* = eta^2 / 4` keeps the inverse
/// inside its Lipschitz region while still rounding to 0 (the floor maps
/// to `sqrt(pi) * eta / 2 < 1/(2 grid)` whenever `eta <= 1/(2 grid)`).
pub fn folded_to_gram(cov: &DMatrix<f64>, eta: f64) -> DMatrix<f64> {
    let eta_star = eta * eta / 4.0;
    let floor_z = psi_inv(eta_star, 1e-14);
    let mut out = cov.clone();
    let entries: Vec<f64> = out
        .as_slice()
        .par_iter()
        .map(|&v| {
            if v <= eta_star {
                floor_z
            } else if v >= PSI_MAX {
                1.0
            } else {
                psi_inv(v, 1e-14)
            }
        })
        .collect();
    out.copy_from_slice(&entries);
    out
}

/// Recovers the exact integer-scaled Gram matrix from a synthetic
/// dataset: estimate the folded covariance, invert `Psi` entrywise, round
/// to the nearest multiple of `1/grid`, and rescale to integers. The
/// diagonal is forced to `grid` (unit rows).
///
/// With `eta <= 1/(2 grid)` and `d` above the calibrated threshold this
/// equals the ground-truth overlap matrix with high probability.
pub fn gram_extract(data: &SyntheticDataset, eta: f64, grid: usize) -> Result<OverlapMatrix> {
    gram_extract_from_images(&data.images, eta, grid)
}

/// [`gram_extract`] on a bare `d x m` image matrix.
pub fn gram_extract_from_images(
    images: &DMatrix<f64>,
    eta: f64,
    grid: usize,
) -> Result<OverlapMatrix> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Parameter(format!("eta = {eta} outside (0, 1]")));
    }
    if grid == 0 {
        return Err(Error::Parameter("grid must be positive".into()));
    }
    let folded = folded_covariance_from_images(images)?;
    let asym = (&folded.cov - folded.cov.transpose()).abs().max();
    if asym > 1e-8 {
        return Err(Error::Matrix(format!(
            "internal error: folded covariance asymmetric by {asym}"
        )));
    }
    let gram = folded_to_gram(&folded.cov, eta);
    let m = gram.nrows();
    let mut entries = vec![0i64; m * m];
    for i in 0..m {
        entries[i * m + i] = grid as i64;
        for j in (i + 1)..m {
            let scaled = gram[(i, j)] * grid as f64;
            let rounded = scaled.round();
            if rounded < 0.0 || rounded > grid as f64 {
                return Err(Error::Consistency(format!(
                    "entry ({i}, {j}) rounded to {rounded} outside [0, {grid}]; d is likely too small"
                )));
            }
            entries[i * m + j] = rounded as i64;
            entries[j * m + i] = rounded as i64;
        }
    }
    OverlapMatrix::new(entries, m, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_instance, overlap_oracle, ModelParams};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn psi_endpoint_identities() {
        assert_eq!(psi(0.0), 0.0);
        assert_abs_diff_eq!(psi(1.0), 1.0 - std::f64::consts::FRAC_2_PI, epsilon = 1e-15);
        // numeric evaluation, cross-checked by the Monte-Carlo folded-pair
        // test in the model module
        assert_abs_diff_eq!(psi(0.5), 0.0813758, epsilon = 1e-6);
    }

    #[test]
    fn psi_is_strictly_increasing() {
        let mut prev = psi(0.0);
        for i in 1..=10_000 {
            let z = i as f64 / 10_000.0;
            let v = psi(z);
            assert!(v > prev, "psi not increasing at z = {z}");
            prev = v;
        }
    }

    #[test]
    fn psi_inv_endpoints_and_known_value() {
        assert_eq!(psi_inv(0.0, 1e-12), 0.0);
        assert_eq!(psi_inv(PSI_MAX, 1e-12), 1.0);
        assert_abs_diff_eq!(psi_inv(psi(0.5), 1e-14), 0.5, epsilon = 1e-9);
        // inverse of the frozen psi(0.5) value, at that value's precision
        assert_abs_diff_eq!(psi_inv(0.0813758, 1e-14), 0.5, epsilon = 1e-6);
    }

    #[test]
    fn psi_round_trip_on_grid() {
        for i in 1..=1000 {
            let z = i as f64 / 1000.0;
            assert!(
                (psi_inv(psi(z), 1e-14) - z).abs() <= 1e-9,
                "round trip failed at z = {z}"
            );
        }
    }

    proptest! {
        #[test]
        fn psi_round_trip_prop(z in 1e-6f64..=1.0) {
            prop_assert!((psi_inv(psi(z), 1e-14) - z).abs() <= 1e-9);
        }

        #[test]
        fn psi_inv_is_clamped(v in -1.0f64..=2.0) {
            let z = psi_inv(v, 1e-12);
            prop_assert!((0.0..=1.0).contains(&z));
        }
    }

    fn dataset_with_supports(
        d: usize,
        n_priv: usize,
        supports: &[&[usize]],
        seed: u64,
    ) -> (SyntheticDataset, Vec<crate::model::SelectionVector>) {
        use crate::model::{sample_image_matrix, synthesize, SelectionVector};
        use rand::SeedableRng;
        let params = ModelParams {
            d,
            n_pub: 0,
            n_priv,
            k_pub: 0,
            k_priv: supports[0].len(),
            m: supports.len(),
            seed,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = sample_image_matrix(&params, &mut rng).unwrap();
        let weight = 1.0 / (supports[0].len() as f64).sqrt();
        let ws: Vec<SelectionVector> = supports
            .iter()
            .map(|s| SelectionVector {
                support_pub: vec![],
                support_priv: s.to_vec(),
                weight_pub: 0.0,
                weight_priv: weight,
            })
            .collect();
        let mut images = DMatrix::zeros(d, ws.len());
        for (i, w) in ws.iter().enumerate() {
            images.set_column(i, &synthesize(&x, w).unwrap());
        }
        (
            SyntheticDataset {
                images,
                public_view: DMatrix::zeros(d, 0),
                params,
            },
            ws,
        )
    }

    #[test]
    fn covariance_of_identical_rows_is_exactly_variance() {
        let (mut data, _) = dataset_with_supports(500, 4, &[&[0, 1], &[2, 3]], 3);
        let col0 = data.images.column(0).into_owned();
        data.images.set_column(1, &col0);
        let folded = empirical_folded_covariance(&data).unwrap();
        assert_eq!(folded.cov[(0, 1)], folded.cov[(0, 0)]);
    }

    #[test]
    fn covariance_needs_two_pixels() {
        let (data, _) = dataset_with_supports(1, 4, &[&[0, 1]], 3);
        assert!(matches!(
            empirical_folded_covariance(&data),
            Err(Error::Sizing(_))
        ));
    }

    #[test]
    fn covariance_of_disjoint_pair_is_near_zero() {
        let (data, _) = dataset_with_supports(1_000_000, 4, &[&[0, 1], &[2, 3]], 17);
        let folded = empirical_folded_covariance(&data).unwrap();
        assert!(folded.cov[(0, 1)].abs() < 0.005, "got {}", folded.cov[(0, 1)]);
    }

    #[test]
    fn covariance_of_overlap_one_matches_psi_half() {
        // k = 2 with one shared support index: rho = 1/2.
        let (data, _) = dataset_with_supports(1_000_000, 3, &[&[0, 1], &[1, 2]], 23);
        let folded = empirical_folded_covariance(&data).unwrap();
        assert!(
            (folded.cov[(0, 1)] - psi(0.5)).abs() < 0.005,
            "got {}",
            folded.cov[(0, 1)]
        );
    }

    #[test]
    fn gram_extract_recovers_hand_instance() {
        let (data, ws) = dataset_with_supports(
            20_000,
            6,
            &[&[1, 2], &[2, 3], &[4, 5]],
            2024,
        );
        let got = gram_extract(&data, 0.25, 2).unwrap();
        let want = overlap_oracle(&ws, 2).unwrap();
        assert_eq!(got, want);
        assert_eq!(got.entries(), &[2, 1, 0, 1, 2, 0, 0, 0, 2]);
    }

    #[test]
    fn gram_extract_identical_vectors_hit_the_grid() {
        let (data, _) = dataset_with_supports(20_000, 4, &[&[0, 1], &[0, 1]], 5);
        let got = gram_extract(&data, 0.25, 2).unwrap();
        assert_eq!(got.get(0, 1), 2);
    }

    #[test]
    fn gram_extract_rejects_bad_eta() {
        let (data, _) = dataset_with_supports(100, 4, &[&[0, 1]], 5);
        assert!(gram_extract(&data, 0.0, 2).is_err());
        assert!(gram_extract(&data, 1.5, 2).is_err());
    }

    #[test]
    fn doubling_d_does_not_worsen_gram_error_in_median() {
        // Regression: the pre-rounding entrywise error should shrink with
        // d in distributional median over seeds.
        let mut errs = [Vec::new(), Vec::new()];
        for (slot, d) in [(0, 2000usize), (1, 4000usize)] {
            for seed in 0..9u64 {
                let params = ModelParams {
                    d,
                    n_pub: 0,
                    n_priv: 10,
                    k_pub: 0,
                    k_priv: 2,
                    m: 40,
                    seed: 1000 + seed,
                };
                let (_, data, ws) = generate_instance(&params).unwrap();
                let folded = empirical_folded_covariance(&data).unwrap();
                let gram = folded_to_gram(&folded.cov, 0.25);
                let oracle = overlap_oracle(&ws, 2).unwrap();
                let mut worst = 0.0f64;
                for i in 0..40 {
                    for j in (i + 1)..40 {
                        let truth = oracle.get(i, j) as f64 / 2.0;
                        worst = worst.max((gram[(i, j)] - truth).abs());
                    }
                }
                errs[slot].push(worst);
            }
        }
        for e in errs.iter_mut() {
            e.sort_by(|a, b| a.total_cmp(b));
        }
        let median = |v: &[f64]| v[v.len() / 2];
        assert!(
            median(&errs[1]) <= median(&errs[0]),
            "median error grew from {} to {}",
            median(&errs[0]),
            median(&errs[1])
        );
    }

    #[test]
    fn overlap_matrix_validates_structure() {
        assert!(OverlapMatrix::new(vec![2, 1, 1, 2], 2, 2).is_ok());
        // asymmetric
        assert!(matches!(
            OverlapMatrix::new(vec![2, 1, 0, 2], 2, 2),
            Err(Error::Matrix(_))
        ));
        // bad diagonal
        assert!(matches!(
            OverlapMatrix::new(vec![1, 0, 0, 2], 2, 2),
            Err(Error::Consistency(_))
        ));
        // entry above grid
        assert!(matches!(
            OverlapMatrix::new(vec![2, 3, 3, 2], 2, 2),
            Err(Error::Consistency(_))
        ));
    }
}

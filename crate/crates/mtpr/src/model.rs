//! Generative model: Gaussian image matrices, sparse selection vectors,
//! synthetic datasets, and ground-truth oracles used by tests and the
//! evaluation harness.
//!
//! Conventions fixed here and relied on everywhere else:
//!
//! * An image matrix is `d x n` with one column per image; the public
//!   images are the first `n_pub` columns.
//! * A selection vector has `k_pub` public and `k_priv` private support
//!   coordinates. Its nonzero entries are `1/sqrt(2 k_pub)` on the public
//!   part and `1/sqrt(2 k_priv)` on the private part when both parts are
//!   nonempty, and `1/sqrt(k)` when only one part is, so that every
//!   selection vector has unit Euclidean norm.
//! * Sampling is deterministic given `(seed)`: the image matrix is drawn
//!   from stream 0 of a ChaCha8 generator seeded with `seed` (entries in
//!   column-major order, Box-Muller-free via `rand_distr::StandardNormal`),
//!   and the selection vectors from stream 1.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gram::OverlapMatrix;

/// Hard cap on the number of f64 elements in any single generated matrix.
/// `d*n`, `d*m` and `m*m` must all stay below this (about 2 GiB each).
pub const MAX_MATRIX_ELEMENTS: u64 = 1 << 28;

const IMAGE_STREAM: u64 = 0;
const SELECTION_STREAM: u64 = 1;

/// Model parameters for one synthetic-dataset instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelParams {
    /// Pixel count (rows of the image matrix).
    pub d: usize,
    /// Number of public images.
    pub n_pub: usize,
    /// Number of private images.
    pub n_priv: usize,
    /// Public sparsity of every selection vector.
    pub k_pub: usize,
    /// Private sparsity of every selection vector.
    pub k_priv: usize,
    /// Number of synthetic images.
    pub m: usize,
    /// Reproducibility seed.
    pub seed: u64,
}

impl ModelParams {
    /// Total number of images.
    pub fn n(&self) -> usize {
        self.n_pub + self.n_priv
    }

    /// Combined sparsity `k_pub + k_priv`.
    pub fn k_total(&self) -> usize {
        self.k_pub + self.k_priv
    }

    /// Nonzero entry values `(weight_pub, weight_priv)` under the
    /// unit-norm convention. A weight is 0 when its part is empty.
    pub fn weights(&self) -> (f64, f64) {
        match (self.k_pub, self.k_priv) {
            (0, 0) => (0.0, 0.0),
            (kp, 0) => (1.0 / (kp as f64).sqrt(), 0.0),
            (0, kv) => (0.0, 1.0 / (kv as f64).sqrt()),
            (kp, kv) => (
                1.0 / (2.0 * kp as f64).sqrt(),
                1.0 / (2.0 * kv as f64).sqrt(),
            ),
        }
    }

    /// The integer grid on which selection-vector inner products live:
    /// `grid * <w_i, w_j>` is an exact integer. Equal to `k_priv` in
    /// all-private mode, `k_pub` in all-public mode, and
    /// `2 * lcm(k_pub, k_priv)` in mixed mode.
    pub fn grid(&self) -> usize {
        match (self.k_pub, self.k_priv) {
            (0, kv) => kv,
            (kp, 0) => kp,
            (kp, kv) => 2 * lcm(kp, kv),
        }
    }

    /// Checks all structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Sizing("pixel count d must be positive".into()));
        }
        if self.n() == 0 {
            return Err(Error::Sizing("need at least one image".into()));
        }
        for (label, elems) in [
            ("d*n", self.d as u128 * self.n() as u128),
            ("d*m", self.d as u128 * self.m as u128),
        ] {
            if elems > MAX_MATRIX_ELEMENTS as u128 {
                return Err(Error::Sizing(format!(
                    "{label} = {elems} exceeds the memory budget of {MAX_MATRIX_ELEMENTS} elements"
                )));
            }
        }
        if self.k_pub > self.n_pub {
            return Err(Error::Parameter(format!(
                "k_pub = {} exceeds n_pub = {}",
                self.k_pub, self.n_pub
            )));
        }
        if self.k_priv > self.n_priv {
            return Err(Error::Parameter(format!(
                "k_priv = {} exceeds n_priv = {}",
                self.k_priv, self.n_priv
            )));
        }
        if self.n_priv > 0 && self.k_priv == 1 {
            return Err(Error::Parameter(
                "k_priv must be 0 or at least 2 (private recovery assumes k > 1)".into(),
            ));
        }
        if self.k_total() == 0 {
            return Err(Error::Parameter(
                "at least one of k_pub, k_priv must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A `d x n` matrix of images (one per column), with the public columns
/// first.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMatrix {
    /// Pixel values; column `j` is image `j`.
    pub entries: DMatrix<f64>,
    /// Number of public columns; the public index set is `0..n_pub`.
    pub n_pub: usize,
}

impl ImageMatrix {
    /// The public column index set `S`.
    pub fn public_columns(&self) -> std::ops::Range<usize> {
        0..self.n_pub
    }

    /// Copies the public columns into a `d x n_pub` matrix.
    pub fn public_view(&self) -> DMatrix<f64> {
        self.entries.columns(0, self.n_pub).into_owned()
    }
}

/// A sparse nonnegative unit vector selecting `k_pub` public and `k_priv`
/// private images. Support indices are global column indices, sorted
/// ascending within each part.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionVector {
    pub support_pub: Vec<usize>,
    pub support_priv: Vec<usize>,
    pub weight_pub: f64,
    pub weight_priv: f64,
}

impl SelectionVector {
    /// Squared Euclidean norm (1 up to rounding for sampled vectors).
    pub fn squared_norm(&self) -> f64 {
        self.support_pub.len() as f64 * self.weight_pub * self.weight_pub
            + self.support_priv.len() as f64 * self.weight_priv * self.weight_priv
    }

    /// Number of shared public support indices with `other`.
    pub fn public_overlap(&self, other: &Self) -> usize {
        sorted_intersection_count(&self.support_pub, &other.support_pub)
    }

    /// Number of shared private support indices with `other`.
    pub fn private_overlap(&self, other: &Self) -> usize {
        sorted_intersection_count(&self.support_priv, &other.support_priv)
    }
}

fn sorted_intersection_count(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// The attack's entire input: synthetic images, the public view of the
/// image matrix, and the public parameters. Ground truth is deliberately
/// not part of this type.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    /// `d x m`; column `i` is the synthetic image `|X w_i|`.
    pub images: DMatrix<f64>,
    /// `d x n_pub`; column `s` is public image `s`.
    pub public_view: DMatrix<f64>,
    pub params: ModelParams,
}

impl SyntheticDataset {
    /// Number of synthetic images.
    pub fn len(&self) -> usize {
        self.images.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws a `d x n` image matrix with i.i.d. standard normal entries.
/// Entries are consumed from `rng` in column-major order.
pub fn sample_image_matrix(params: &ModelParams, rng: &mut impl Rng) -> Result<ImageMatrix> {
    params.validate()?;
    let (d, n) = (params.d, params.n());
    let entries = DMatrix::from_iterator(d, n, (0..d * n).map(|_| rng.sample(StandardNormal)));
    Ok(ImageMatrix {
        entries,
        n_pub: params.n_pub,
    })
}

/// Draws `m` independent selection vectors: each support is a uniform
/// `k_pub`-subset of the public columns and a uniform `k_priv`-subset of
/// the private columns, with the unit-norm weights of
/// [`ModelParams::weights`].
pub fn sample_selection_vectors(
    params: &ModelParams,
    rng: &mut impl Rng,
) -> Result<Vec<SelectionVector>> {
    params.validate()?;
    let (weight_pub, weight_priv) = params.weights();
    let mut out = Vec::with_capacity(params.m);
    for _ in 0..params.m {
        let mut support_pub = sample_subset(rng, params.n_pub, params.k_pub);
        let mut support_priv = sample_subset(rng, params.n_priv, params.k_priv);
        support_pub.sort_unstable();
        support_priv.sort_unstable();
        // private indices are global: offset past the public block
        for s in &mut support_priv {
            *s += params.n_pub;
        }
        out.push(SelectionVector {
            support_pub,
            support_priv,
            weight_pub,
            weight_priv,
        });
    }
    Ok(out)
}

fn sample_subset(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k).into_vec()
}

/// Computes the synthetic image `|X w|` for one selection vector,
/// exploiting the sparsity of `w`.
pub fn synthesize(x: &ImageMatrix, w: &SelectionVector) -> Result<DVector<f64>> {
    let n = x.entries.ncols();
    let in_range = |s: &usize| *s < n;
    if !(w.support_pub.iter().all(in_range) && w.support_priv.iter().all(in_range)) {
        return Err(Error::DimensionMismatch(format!(
            "selection support exceeds column count {n}"
        )));
    }
    let d = x.entries.nrows();
    let mut acc = DVector::zeros(d);
    for (&s, weight) in w
        .support_pub
        .iter()
        .map(|s| (s, w.weight_pub))
        .chain(w.support_priv.iter().map(|s| (s, w.weight_priv)))
    {
        let col = x.entries.column(s);
        acc.axpy(weight, &col, 1.0);
    }
    acc.apply(|v| *v = v.abs());
    Ok(acc)
}

/// Generates one reproducible instance: the hidden image matrix, the
/// attack-visible dataset, and the hidden selection vectors.
///
/// Callers on the attack path must only ever see the middle element.
pub fn generate_instance(
    params: &ModelParams,
) -> Result<(ImageMatrix, SyntheticDataset, Vec<SelectionVector>)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(IMAGE_STREAM);
    let x = sample_image_matrix(params, &mut rng)?;
    rng.set_stream(SELECTION_STREAM);
    rng.set_word_pos(0);
    let ws = sample_selection_vectors(params, &mut rng)?;

    let mut images = DMatrix::zeros(params.d, params.m);
    for (i, w) in ws.iter().enumerate() {
        images.set_column(i, &synthesize(&x, w)?);
    }
    let dataset = SyntheticDataset {
        images,
        public_view: x.public_view(),
        params: *params,
    };
    Ok((x, dataset, ws))
}

/// Ground-truth overlap matrix: entry `(i, j)` is `scale * <w_i, w_j>`,
/// which is an exact integer whenever `scale` is a multiple of the
/// params' canonical [`ModelParams::grid`]. This is the oracle the Gram
/// extraction stage is tested against; it reads hidden selection vectors
/// and must never be called on the attack path.
pub fn overlap_oracle(ws: &[SelectionVector], scale: usize) -> Result<OverlapMatrix> {
    let m = ws.len();
    if scale == 0 {
        return Err(Error::Parameter("overlap scale must be positive".into()));
    }
    let mut entries = vec![0i64; m * m];
    for i in 0..m {
        for j in i..m {
            let a = ws[i].public_overlap(&ws[j]) as u64;
            let b = ws[i].private_overlap(&ws[j]) as u64;
            let kp = ws[i].support_pub.len() as u64;
            let kv = ws[i].support_priv.len() as u64;
            // scale * (a/(2 k_pub) + b/(2 k_priv)) over the common
            // denominator, degenerating to one term when a part is empty.
            let (num, den) = match (kp, kv) {
                (0, 0) => (0, 1),
                (kp, 0) => (scale as u64 * a, kp),
                (0, kv) => (scale as u64 * b, kv),
                (kp, kv) => (scale as u64 * (a * kv + b * kp), 2 * kp * kv),
            };
            if num % den != 0 {
                return Err(Error::Parameter(format!(
                    "scale {scale} does not make overlap ({i}, {j}) integral"
                )));
            }
            let val = (num / den) as i64;
            entries[i * m + j] = val;
            entries[j * m + i] = val;
        }
    }
    OverlapMatrix::new(entries, m, scale)
}

/// Draws one sample of `|g|` for `g ~ N(0, cov)`.
///
/// `cov` must be symmetric PSD up to an eigenvalue floor of `-1e-8`;
/// slightly negative eigenvalues are clipped to zero.
pub fn sample_folded(cov: &DMatrix<f64>, rng: &mut impl Rng) -> Result<DVector<f64>> {
    if cov.nrows() != cov.ncols() {
        return Err(Error::DimensionMismatch("covariance must be square".into()));
    }
    let m = cov.nrows();
    if m == 0 {
        return Ok(DVector::zeros(0));
    }
    let sym = 0.5 * (cov + cov.transpose());
    if (&sym - cov).abs().max() > 1e-10 {
        return Err(Error::Matrix("covariance is not symmetric".into()));
    }
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.min() < -1e-8 {
        return Err(Error::Matrix(format!(
            "covariance has eigenvalue {} below the PSD floor",
            eig.eigenvalues.min()
        )));
    }
    let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let scaled = DVector::from_iterator(
        m,
        eig.eigenvalues.iter().zip(z.iter()).map(|(&l, &zi)| l.max(0.0).sqrt() * zi),
    );
    let mut g = &eig.eigenvectors * scaled;
    g.apply(|v| *v = v.abs());
    Ok(g)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn all_private_params(n_priv: usize, k_priv: usize, m: usize, seed: u64) -> ModelParams {
        ModelParams {
            d: 4,
            n_pub: 0,
            n_priv,
            k_pub: 0,
            k_priv,
            m,
            seed,
        }
    }

    #[test]
    fn image_matrix_is_deterministic() {
        let params = ModelParams {
            d: 2,
            n_pub: 1,
            n_priv: 1,
            k_pub: 1,
            k_priv: 0,
            m: 1,
            seed: 99,
        };
        let mut rng1 = ChaCha8Rng::seed_from_u64(7);
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let x1 = sample_image_matrix(&params, &mut rng1).unwrap();
        let x2 = sample_image_matrix(&params, &mut rng2).unwrap();
        assert_eq!(x1.entries.shape(), (2, 2));
        assert_eq!(x1, x2);
    }

    #[test]
    fn image_matrix_moments_match_standard_normal() {
        // Law-of-large-numbers check at d = 1e5, n = 10.
        let params = ModelParams {
            d: 100_000,
            n_pub: 10,
            n_priv: 0,
            k_pub: 2,
            k_priv: 0,
            m: 1,
            seed: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = sample_image_matrix(&params, &mut rng).unwrap();
        let count = (params.d * params.n()) as f64;
        let mean = x.entries.iter().sum::<f64>() / count;
        let var = x.entries.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
        assert!(mean.abs() < 0.02, "sample mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "sample variance {var}");
    }

    #[test]
    fn zero_pixels_is_a_sizing_error() {
        let params = ModelParams {
            d: 0,
            n_pub: 1,
            n_priv: 0,
            k_pub: 1,
            k_priv: 0,
            m: 1,
            seed: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_image_matrix(&params, &mut rng),
            Err(Error::Sizing(_))
        ));
    }

    #[test]
    fn selection_supports_cover_all_pairs() {
        // n_priv = 4, k_priv = 2: the support is one of the six pairs and
        // the weights are 1/sqrt(2).
        let params = all_private_params(4, 2, 1, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ws = sample_selection_vectors(&params, &mut rng).unwrap();
        assert_eq!(ws.len(), 1);
        let w = &ws[0];
        assert_eq!(w.support_priv.len(), 2);
        assert!(w.support_priv[0] < w.support_priv[1]);
        assert!(w.support_priv[1] < 4);
        assert_abs_diff_eq!(w.weight_priv, 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(w.weight_pub, 0.0);
    }

    #[test]
    fn selection_supports_are_uniform() {
        // Multinomial concentration: each of the 6 pairs of [4] appears
        // 10^4 +- 500 times out of 6*10^4 draws.
        let params = all_private_params(4, 2, 60_000, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ws = sample_selection_vectors(&params, &mut rng).unwrap();
        let mut counts = std::collections::HashMap::new();
        for w in &ws {
            *counts.entry((w.support_priv[0], w.support_priv[1])).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        for (&pair, &c) in &counts {
            assert!(
                (c as i64 - 10_000).abs() <= 500,
                "support {pair:?} appeared {c} times"
            );
        }
    }

    #[test]
    fn mixed_selection_vectors_have_unit_norm() {
        let params = ModelParams {
            d: 4,
            n_pub: 10,
            n_priv: 10,
            k_pub: 2,
            k_priv: 2,
            m: 64,
            seed: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for w in sample_selection_vectors(&params, &mut rng).unwrap() {
            assert_abs_diff_eq!(w.squared_norm(), 1.0, epsilon = 1e-12);
            assert!(w.support_pub.iter().all(|&s| s < 10));
            assert!(w.support_priv.iter().all(|&s| (10..20).contains(&s)));
        }
    }

    #[test]
    fn oversparse_selection_is_a_parameter_error() {
        let params = all_private_params(3, 4, 1, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_selection_vectors(&params, &mut rng),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn synthesize_single_support_is_column_abs() {
        let entries = DMatrix::from_column_slice(3, 2, &[1.0, -2.0, 0.5, -4.0, 3.0, -0.25]);
        let x = ImageMatrix { entries, n_pub: 0 };
        let w = SelectionVector {
            support_pub: vec![],
            support_priv: vec![1],
            weight_pub: 0.0,
            weight_priv: 1.0,
        };
        let y = synthesize(&x, &w).unwrap();
        assert_eq!(y.as_slice(), &[4.0, 3.0, 0.25]);
    }

    #[test]
    fn synthesize_hand_computed_two_by_two() {
        // Columns (3, -4) and (-1, 2); w = (1/sqrt2, 1/sqrt2) gives
        // y = (|3-1|, |-4+2|)/sqrt2 = (sqrt2, sqrt2).
        let entries = DMatrix::from_column_slice(2, 2, &[3.0, -4.0, -1.0, 2.0]);
        let x = ImageMatrix { entries, n_pub: 0 };
        let w = SelectionVector {
            support_pub: vec![],
            support_priv: vec![0, 1],
            weight_pub: 0.0,
            weight_priv: 1.0 / 2f64.sqrt(),
        };
        let y = synthesize(&x, &w).unwrap();
        assert_abs_diff_eq!(y[0], 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn synthesize_is_invariant_to_private_sign_flip() {
        let params = all_private_params(5, 2, 1, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut full = params;
        full.d = 50;
        let x = sample_image_matrix(&full, &mut rng).unwrap();
        let mut flipped = x.clone();
        flipped.entries.neg_mut();
        let w = SelectionVector {
            support_pub: vec![],
            support_priv: vec![1, 3],
            weight_pub: 0.0,
            weight_priv: 1.0 / 2f64.sqrt(),
        };
        let y1 = synthesize(&x, &w).unwrap();
        let y2 = synthesize(&flipped, &w).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn synthesize_rejects_out_of_range_support() {
        let x = ImageMatrix {
            entries: DMatrix::zeros(2, 2),
            n_pub: 0,
        };
        let w = SelectionVector {
            support_pub: vec![],
            support_priv: vec![5],
            weight_pub: 0.0,
            weight_priv: 1.0,
        };
        assert!(matches!(
            synthesize(&x, &w),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn generate_instance_is_deterministic_and_consistent() {
        let params = ModelParams {
            d: 100,
            n_pub: 0,
            n_priv: 5,
            k_pub: 0,
            k_priv: 2,
            m: 10,
            seed: 42,
        };
        let (x1, data1, ws1) = generate_instance(&params).unwrap();
        let (_, data2, _) = generate_instance(&params).unwrap();
        assert_eq!(data1, data2);
        for (i, w) in ws1.iter().enumerate() {
            let y = synthesize(&x1, w).unwrap();
            let col = data1.images.column(i);
            assert!(y.iter().all(|&v| v >= 0.0));
            assert!((&y - &col).abs().max() < 1e-12);
        }
    }

    #[test]
    fn empty_dataset_is_valid() {
        let params = all_private_params(4, 2, 0, 1);
        let (_, data, ws) = generate_instance(&params).unwrap();
        assert!(data.is_empty());
        assert!(ws.is_empty());
    }

    #[test]
    fn overlap_oracle_counts_private_overlaps() {
        let w = |support: &[usize]| SelectionVector {
            support_pub: vec![],
            support_priv: support.to_vec(),
            weight_pub: 0.0,
            weight_priv: 1.0 / 2f64.sqrt(),
        };
        let ws = [w(&[1, 2]), w(&[2, 3]), w(&[1, 2]), w(&[4, 5])];
        let m = overlap_oracle(&ws, 2).unwrap();
        assert_eq!(m.get(0, 1), 1);
        assert_eq!(m.get(0, 2), 2);
        assert_eq!(m.get(0, 3), 0);
        assert_eq!(m.get(0, 0), 2);
    }

    #[test]
    fn folded_moments_match_half_normal() {
        // E|g| = sqrt(2/pi) for the univariate standard case.
        let cov = DMatrix::identity(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_folded(&cov, &mut rng).unwrap()[0];
        }
        let mean = sum / n as f64;
        assert!((mean - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.01);
    }

    #[test]
    fn folded_zero_covariance_is_zero() {
        let cov = DMatrix::zeros(3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = sample_folded(&cov, &mut rng).unwrap();
        assert_eq!(s.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn folded_rejects_indefinite_covariance() {
        let cov = DMatrix::from_column_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        assert!(matches!(
            sample_folded(&cov, &mut rng),
            Err(Error::Matrix(_))
        ));
    }

    #[test]
    fn folded_pair_covariance_matches_psi_half() {
        // rho = 0.5: empirical covariance of |g| pairs should approach
        // Psi(0.5) = 0.0813758...
        let cov = DMatrix::from_column_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 400_000;
        let (mut s1, mut s2, mut s12) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let g = sample_folded(&cov, &mut rng).unwrap();
            s1 += g[0];
            s2 += g[1];
            s12 += g[0] * g[1];
        }
        let nf = n as f64;
        let cov_emp = s12 / nf - (s1 / nf) * (s2 / nf);
        assert!(
            (cov_emp - crate::gram::psi(0.5)).abs() < 0.005,
            "empirical folded covariance {cov_emp}"
        );
    }

    #[test]
    fn grid_conventions() {
        let p = |k_pub, k_priv| ModelParams {
            d: 1,
            n_pub: 10,
            n_priv: 10,
            k_pub,
            k_priv,
            m: 0,
            seed: 0,
        };
        assert_eq!(p(0, 2).grid(), 2);
        assert_eq!(p(3, 0).grid(), 3);
        assert_eq!(p(2, 2).grid(), 4);
        assert_eq!(p(4, 6).grid(), 24);
    }
}

//! Recovery of the public support of a selection vector from one
//! synthetic image plus the public view of the image matrix.
//!
//! This is sparse phase retrieval with missing coordinates: from pairs
//! `([p_j]_S, y_j)` the spectral matrix
//!
//! `M~ = (1/d) sum_j (y_j^2 - 1) ([p_j]_S [p_j]_S^T - Id)`
//!
//! concentrates (up to scale) around `[w]_S [w]_S^T`, whose support is
//! what we are after. Two post-processing routes are provided: diagonal
//! thresholding (default, matches large `n_pub`) and the sparse-PCA
//! semidefinite relaxation solved by a first-order splitting scheme.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Empirical spectral matrix over the public coordinates. Symmetric by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMatrix {
    pub entries: DMatrix<f64>,
}

/// Diagonal-thresholding output: the spectral matrix restricted to the
/// highest-scoring coordinate window, plus the window itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdedSpectral {
    /// `window x window` principal submatrix of the spectral matrix;
    /// entries outside the window are (implicitly) zero.
    pub restricted: DMatrix<f64>,
    /// Kept coordinates, sorted ascending; `restricted[(a, b)]` is the
    /// spectral entry at `(coords[a], coords[b])`.
    pub coords: Vec<usize>,
}

/// A recovered public support.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportEstimate {
    /// The `k_pub` selected public coordinates, sorted ascending.
    pub indices: Vec<usize>,
    /// Top eigenvalue of the matrix the support was read from.
    pub confidence: f64,
    /// Set when `confidence < 0.1 / k_pub`, the calibrated threshold for
    /// "this image may have no public contribution".
    pub low_confidence: bool,
}

/// Which post-processing route [`learn_public`] uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PublicMethod {
    /// Sparse-PCA SDP with the given feasibility/objective tolerance.
    Sdp { tol: f64 },
    /// Diagonal thresholding with the given window (`None` for the
    /// default `max(25, 4 k_pub)`).
    Threshold { window: Option<usize> },
}

impl Default for PublicMethod {
    fn default() -> Self {
        PublicMethod::Threshold { window: None }
    }
}

/// Default thresholding window.
pub fn default_window(k_pub: usize) -> usize {
    25.max(4 * k_pub)
}

fn weighted_dot(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += c[i] * a[i] * b[i];
    }
    acc
}

fn check_pairs(public_view: &DMatrix<f64>, responses: &[f64]) -> Result<()> {
    if responses.is_empty() {
        return Err(Error::DimensionMismatch("need at least one pixel pair".into()));
    }
    if public_view.nrows() != responses.len() {
        return Err(Error::DimensionMismatch(format!(
            "public view has {} pixel rows but got {} responses",
            public_view.nrows(),
            responses.len()
        )));
    }
    Ok(())
}

/// Forms the empirical spectral matrix from the pairs
/// `([p_j]_S, y_j)`, `j = 1..d`, given as the `d x n_pub` public view
/// (row `j` is `[p_j]_S`) and the per-pixel responses.
///
/// Over fresh Gaussian rows its expectation is `2 [w]_S [w]_S^T` for a
/// unit selection vector `w`.
pub fn spectral_matrix(public_view: &DMatrix<f64>, responses: &[f64]) -> Result<SpectralMatrix> {
    check_pairs(public_view, responses)?;
    let d = public_view.nrows();
    let n_pub = public_view.ncols();
    let inv_d = 1.0 / d as f64;
    let weights: Vec<f64> = responses.iter().map(|y| y * y - 1.0).collect();
    let mean_weight = weights.iter().sum::<f64>() * inv_d;
    let cols = public_view.as_slice();
    let col = |i: usize| &cols[i * d..(i + 1) * d];
    let mut entries = DMatrix::zeros(n_pub, n_pub);
    for a in 0..n_pub {
        for b in a..n_pub {
            let mut v = weighted_dot(col(a), col(b), &weights) * inv_d;
            if a == b {
                v -= mean_weight;
            }
            entries[(a, b)] = v;
            entries[(b, a)] = v;
        }
    }
    Ok(SpectralMatrix { entries })
}

/// Per-coordinate diagonal scores `(1/d) sum_j y_j^2 ([p_j]_S)_i^2`,
/// the thresholding statistic.
pub fn diagonal_scores(public_view: &DMatrix<f64>, responses: &[f64]) -> Result<Vec<f64>> {
    check_pairs(public_view, responses)?;
    let d = public_view.nrows();
    let inv_d = 1.0 / d as f64;
    let y2: Vec<f64> = responses.iter().map(|y| y * y).collect();
    let cols = public_view.as_slice();
    Ok((0..public_view.ncols())
        .map(|i| {
            let c = &cols[i * d..(i + 1) * d];
            weighted_dot(c, c, &y2) * inv_d
        })
        .collect())
}

/// Diagonal thresholding: keeps the `window` highest-scoring coordinates
/// (ties broken toward the lowest index) and materializes the spectral
/// matrix only on that principal submatrix. A window above `n_pub` is
/// clamped.
pub fn diagonal_threshold_support(
    public_view: &DMatrix<f64>,
    responses: &[f64],
    k_pub: usize,
    window: usize,
) -> Result<ThresholdedSpectral> {
    if window < k_pub {
        return Err(Error::Parameter(format!(
            "window {window} below sparsity k_pub = {k_pub}"
        )));
    }
    let scores = diagonal_scores(public_view, responses)?;
    let n_pub = scores.len();
    let window = window.min(n_pub);
    let mut order: Vec<usize> = (0..n_pub).collect();
    // descending score, lowest index wins ties
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut coords: Vec<usize> = order[..window].to_vec();
    coords.sort_unstable();

    let d = public_view.nrows();
    let inv_d = 1.0 / d as f64;
    let weights: Vec<f64> = responses.iter().map(|y| y * y - 1.0).collect();
    let mean_weight = weights.iter().sum::<f64>() * inv_d;
    let cols = public_view.as_slice();
    let col = |i: usize| &cols[i * d..(i + 1) * d];
    let mut restricted = DMatrix::zeros(window, window);
    for a in 0..window {
        for b in a..window {
            let mut v = weighted_dot(col(coords[a]), col(coords[b]), &weights) * inv_d;
            if a == b {
                v -= mean_weight;
            }
            restricted[(a, b)] = v;
            restricted[(b, a)] = v;
        }
    }
    Ok(ThresholdedSpectral { restricted, coords })
}

/// Solution of the sparse-PCA semidefinite relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    /// Feasible PSD matrix with `trace = 1` and entrywise L1 norm at most
    /// `k_pub` (up to the tolerance).
    pub z: DMatrix<f64>,
    /// Objective `<Z, M~>` at `z`.
    pub objective: f64,
    /// Outer iterations spent.
    pub iterations: usize,
    /// First-order stationarity certificate: projected-gradient residual
    /// `|P(Z + a M~) - Z|_F / a` at the returned iterate.
    pub stationarity: f64,
}

/// Projects the spectrum onto the probability simplex, i.e. onto
/// `{Z PSD, trace(Z) = 1}` in Frobenius norm.
fn project_psd_trace1(z: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = 0.5 * (z + z.transpose());
    let eig = sym.symmetric_eigen();
    let projected = project_simplex(eig.eigenvalues.as_slice());
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (c, &l) in projected.iter().enumerate() {
        scaled.column_mut(c).scale_mut(l);
    }
    &scaled * q.transpose()
}

fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projects entrywise onto the L1 ball of radius `r` (soft threshold).
fn project_l1(z: &DMatrix<f64>, r: f64) -> DMatrix<f64> {
    let total: f64 = z.iter().map(|v| v.abs()).sum();
    if total <= r {
        return z.clone();
    }
    let mut mags: Vec<f64> = z.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in mags.iter().enumerate() {
        cum += x;
        let t = (cum - r) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    z.map(|v| v.signum() * (v.abs() - theta).max(0.0))
}

fn l1_norm(z: &DMatrix<f64>) -> f64 {
    z.iter().map(|v| v.abs()).sum()
}

fn min_eigenvalue(z: &DMatrix<f64>) -> f64 {
    (0.5 * (z + z.transpose())).symmetric_eigen().eigenvalues.min()
}

const SDP_MAX_ITER: usize = 400;
const SDP_POLISH_ITER: usize = 300;

/// Dykstra's alternating projections onto
/// `{PSD, trace 1} cap {|Z|_1 <= r}`: converges to the projection of the
/// start point, unlike plain alternation. Returns the first PSD/trace-1
/// iterate whose L1 norm is within `tol` of feasible.
fn dykstra_polish(start: &DMatrix<f64>, r: f64, tol: f64) -> Option<DMatrix<f64>> {
    let n = start.nrows();
    let mut z = start.clone();
    let mut p = DMatrix::zeros(n, n);
    let mut q = DMatrix::zeros(n, n);
    for _ in 0..SDP_POLISH_ITER {
        let y = project_psd_trace1(&(&z + &p));
        p = &z + &p - &y;
        if l1_norm(&y) <= r + tol {
            return Some(y);
        }
        let z2 = project_l1(&(&y + &q), r);
        q = &y + &q - &z2;
        z = z2;
    }
    None
}

/// Solves `max <Z, M~> s.t. Z PSD, trace(Z) = 1, sum |Z_ij| <= k_pub` by
/// projected gradient ascent with alternating projections onto the two
/// constraint sets and an averaged (diminishing) step.
///
/// The returned `z` is PSD with `trace(z) = 1` up to rounding and
/// `|z|_1 <= k_pub + tol`; its objective is the best among all feasible
/// iterates encountered.
pub fn sparse_pca_sdp(m_tilde: &SpectralMatrix, k_pub: usize, tol: f64) -> Result<SdpSolution> {
    if k_pub < 1 {
        return Err(Error::Parameter("k_pub must be at least 1".into()));
    }
    if tol <= 0.0 {
        return Err(Error::Parameter("tolerance must be positive".into()));
    }
    let m = &m_tilde.entries;
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::DimensionMismatch(
            "spectral matrix must be square and nonempty".into(),
        ));
    }
    let r = k_pub as f64;
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-12);
    let alpha0 = 1.0 / scale;

    let mut z = DMatrix::identity(n, n) / n as f64;
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    let mut iterations = 0;
    for t in 0..SDP_MAX_ITER {
        iterations = t + 1;
        let alpha = alpha0 / ((t + 1) as f64).sqrt();
        z = project_l1(&project_psd_trace1(&(&z + alpha * m)), r);
        // the L1 projection can leave PSD/trace slightly off; cheaply
        // check a re-projected copy and track the incumbent
        let candidate = project_psd_trace1(&z);
        if l1_norm(&candidate) <= r + tol {
            let obj = candidate.dot(m);
            if best.as_ref().is_none_or(|(b, _)| obj > *b) {
                best = Some((obj, candidate));
            }
        }
    }
    // a full Dykstra polish of the final iterate reaches feasibility even
    // when the cheap per-iteration check never did
    if let Some(polished) = dykstra_polish(&z, r, tol) {
        let obj = polished.dot(m);
        if best.as_ref().is_none_or(|(b, _)| obj > *b) {
            best = Some((obj, polished));
        }
    }
    let Some((objective, zbest)) = best else {
        return Err(Error::Optimization {
            best_objective: project_psd_trace1(&z).dot(m),
        });
    };
    // first-order stationarity certificate at the incumbent
    let probe = alpha0 * 1e-3;
    let moved = project_l1(&project_psd_trace1(&(&zbest + probe * m)), r);
    let stationarity = (&moved - &zbest).norm() / probe;
    log::debug!(
        "sparse-PCA SDP: objective {objective:.6}, stationarity {stationarity:.3e}, \
         l1 {:.6}, min eig {:.3e}",
        l1_norm(&zbest),
        min_eigenvalue(&zbest)
    );
    Ok(SdpSolution {
        z: zbest,
        objective,
        iterations,
        stationarity,
    })
}

/// Top eigenpair of a symmetric matrix.
fn top_eigenpair(sym: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = 0.5 * (sym + sym.transpose());
    let decomp = eig.symmetric_eigen();
    let mut best = 0;
    for i in 1..decomp.eigenvalues.len() {
        if decomp.eigenvalues[i] > decomp.eigenvalues[best] {
            best = i;
        }
    }
    (
        decomp.eigenvalues[best],
        decomp.eigenvectors.column(best).into_owned(),
    )
}

/// Picks the `k` largest-magnitude coordinates, lowest index first on
/// ties; returns them sorted ascending.
fn top_k_coordinates(v: &DVector<f64>, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    let mut out: Vec<usize> = order[..k.min(v.len())].to_vec();
    out.sort_unstable();
    out
}

/// Recovers the public support of the selection vector behind one
/// synthetic image: builds the spectral matrix, post-processes it with
/// the chosen method, and reads off the `k_pub` largest-magnitude
/// coordinates of the top eigenvector.
pub fn learn_public(
    public_view: &DMatrix<f64>,
    responses: &[f64],
    k_pub: usize,
    method: PublicMethod,
) -> Result<SupportEstimate> {
    if k_pub < 1 {
        return Err(Error::Parameter(
            "k_pub must be at least 1 (skip this stage for all-private vectors)".into(),
        ));
    }
    let (confidence, indices) = match method {
        PublicMethod::Threshold { window } => {
            let window = window.unwrap_or_else(|| default_window(k_pub));
            let thresholded = diagonal_threshold_support(public_view, responses, k_pub, window)?;
            let (top, vec) = top_eigenpair(&thresholded.restricted);
            let local = top_k_coordinates(&vec, k_pub);
            let mut indices: Vec<usize> = local.iter().map(|&a| thresholded.coords[a]).collect();
            indices.sort_unstable();
            (top, indices)
        }
        PublicMethod::Sdp { tol } => {
            let m_tilde = spectral_matrix(public_view, responses)?;
            let sol = sparse_pca_sdp(&m_tilde, k_pub, tol)?;
            let (_, vec) = top_eigenpair(&sol.z);
            let (spectral_top, _) = top_eigenpair(&m_tilde.entries);
            (spectral_top, top_k_coordinates(&vec, k_pub))
        }
    };
    let low_confidence = confidence < 0.1 / k_pub as f64;
    Ok(SupportEstimate {
        indices,
        confidence,
        low_confidence,
    })
}

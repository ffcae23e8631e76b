//! Solving the piecewise-linear systems `|sum_{i in S} a_i| = v_S` over
//! all `k`-subsets `S` of a `(k+2)`-set.
//!
//! For Gaussian data these systems are generic: they admit exactly one
//! solution up to a global sign flip. The solver picks `k+2` subsets with
//! linearly independent indicators, enumerates the `2^{k+1}` sign
//! patterns on them (the global sign is fixed by convention), solves each
//! small linear system against a single pre-factored basis, and keeps the
//! candidates that satisfy every constraint. A brute-force enumerator
//! over all `2^t` constraint signs doubles as the independent test
//! oracle.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::floral::family_size;

/// One per-pixel system: the label subsets of a floral assignment, their
/// nonnegative measured values, and the acceptance tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedSystem {
    /// The `C(k+2, k)` subsets of `0..k+2`, each sorted; must form the
    /// full family.
    pub subsets: Vec<Vec<u8>>,
    /// One nonnegative value per subset.
    pub values: Vec<f64>,
    /// Residual tolerance.
    pub tolerance: f64,
}

impl SignedSystem {
    /// Builds a system with the default tolerance
    /// `1e-6 * max(1, max_j v_j)`.
    pub fn new(subsets: Vec<Vec<u8>>, values: Vec<f64>) -> Result<Self> {
        let tolerance = default_tolerance(&values);
        Self::with_tolerance(subsets, values, tolerance)
    }

    pub fn with_tolerance(subsets: Vec<Vec<u8>>, values: Vec<f64>, tolerance: f64) -> Result<Self> {
        if subsets.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} subsets but {} values",
                subsets.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Parameter("values must be finite and nonnegative".into()));
        }
        if tolerance <= 0.0 {
            return Err(Error::Parameter("tolerance must be positive".into()));
        }
        Ok(Self {
            subsets,
            values,
            tolerance,
        })
    }

    fn sparsity(&self) -> Result<usize> {
        let k = self
            .subsets
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Parameter("system needs at least one subset".into()))?;
        if k < 1 || self.subsets.len() != family_size(k) {
            return Err(Error::Parameter(format!(
                "expected the full family of {} subsets for k = {k}, got {}",
                family_size(k),
                self.subsets.len()
            )));
        }
        let n = (k + 2) as u8;
        let mut seen = self.subsets.clone();
        for s in &mut seen {
            s.sort_unstable();
        }
        seen.sort();
        seen.dedup();
        if seen.len() != family_size(k)
            || seen.iter().any(|s| s.len() != k || s.iter().any(|&e| e >= n))
        {
            return Err(Error::Parameter(
                "subsets must be exactly the k-subsets of 0..k+2".into(),
            ));
        }
        Ok(k)
    }
}

/// Default residual tolerance for a value vector.
pub fn default_tolerance(values: &[f64]) -> f64 {
    1e-6 * values.iter().copied().fold(1.0f64, f64::max)
}

/// The recovered pixel values, up to one global sign.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedSolution {
    /// The `k+2` values, canonicalized so the first entry larger than the
    /// tolerance in magnitude is positive.
    pub values: Vec<f64>,
    /// Maximum constraint violation of the returned values.
    pub residual: f64,
    /// Set when at least two non-sign-equivalent candidates satisfy every
    /// constraint within tolerance.
    pub ambiguous: bool,
}

/// Pre-factored solver for one subset family, reusable across pixels.
pub struct SystemSolver {
    subsets: Vec<Vec<u8>>,
    nvars: usize,
    basis: Vec<usize>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

fn indicator(subset: &[u8], nvars: usize) -> DVector<f64> {
    let mut v = DVector::zeros(nvars);
    for &e in subset {
        v[e as usize] = 1.0;
    }
    v
}

/// Greedy pivoted elimination: returns the first `nvars` subset indices
/// (in the given order) whose indicators are linearly independent.
fn independent_rows(subsets: &[Vec<u8>], nvars: usize, order: &[usize]) -> Option<Vec<usize>> {
    let mut pivots: Vec<DVector<f64>> = Vec::new();
    let mut chosen = Vec::new();
    for &idx in order {
        let mut v = indicator(&subsets[idx], nvars);
        for p in &pivots {
            let c = v.dot(p);
            v.axpy(-c, p, 1.0);
        }
        let norm = v.norm();
        if norm > 1e-9 {
            pivots.push(v / norm);
            chosen.push(idx);
            if chosen.len() == nvars {
                return Some(chosen);
            }
        }
    }
    None
}

impl SystemSolver {
    pub fn new(subsets: &[Vec<u8>]) -> Result<Self> {
        let k = subsets.first().map(Vec::len).unwrap_or(0);
        let nvars = k + 2;
        let forward: Vec<usize> = (0..subsets.len()).collect();
        let basis = independent_rows(subsets, nvars, &forward).or_else(|| {
            // singular in forward order (cannot happen for the full
            // family): retry from the tail before giving up
            let backward: Vec<usize> = (0..subsets.len()).rev().collect();
            independent_rows(subsets, nvars, &backward)
        });
        let Some(basis) = basis else {
            return Err(Error::Parameter(
                "subset indicators do not span the variable space".into(),
            ));
        };
        let rows: Vec<DVector<f64>> =
            basis.iter().map(|&i| indicator(&subsets[i], nvars)).collect();
        let b = DMatrix::from_fn(nvars, nvars, |r, c| rows[r][c]);
        let lu = b.lu();
        Ok(Self {
            subsets: subsets.to_vec(),
            nvars,
            basis,
            lu,
        })
    }

    /// Solves one value vector. `tolerance` of `None` uses the default.
    pub fn solve(&self, values: &[f64], tolerance: Option<f64>) -> Result<SignedSolution> {
        self.solve_with_offsets(values, None, tolerance)
    }

    /// Solves the affine variant `|offset_S + sum_{i in S} a_i| = v_S`.
    ///
    /// Without offsets the solution set is closed under global negation,
    /// the first basis sign is pinned by convention and candidates are
    /// compared up to sign. With offsets every `2^{k+2}` basis sign
    /// pattern is tried and candidates compare by plain equality (global
    /// negation is no longer a symmetry).
    pub fn solve_with_offsets(
        &self,
        values: &[f64],
        offsets: Option<&[f64]>,
        tolerance: Option<f64>,
    ) -> Result<SignedSolution> {
        if values.len() != self.subsets.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} subsets",
                values.len(),
                self.subsets.len()
            )));
        }
        if let Some(off) = offsets {
            if off.len() != self.subsets.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} offsets for {} subsets",
                    off.len(),
                    self.subsets.len()
                )));
            }
        }
        let tol = tolerance.unwrap_or_else(|| default_tolerance(values));
        let shifted = offsets.is_some_and(|off| off.iter().any(|c| c.abs() > tol));
        let offset_at = |j: usize| offsets.map_or(0.0, |off| off[j]);

        // without offsets, fix the sign of the first nonzero basis value
        // (global sign convention) and enumerate the remaining k+1
        let pinned = if shifted {
            None
        } else {
            (0..self.nvars).find(|&slot| values[self.basis[slot]] > tol)
        };
        let free: Vec<usize> = (0..self.nvars).filter(|&slot| Some(slot) != pinned).collect();

        let mut classes: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut rhs = DVector::zeros(self.nvars);
        for mask in 0u32..(1 << free.len()) {
            for (bit, &slot) in free.iter().enumerate() {
                let sign = if mask >> bit & 1 == 1 { -1.0 } else { 1.0 };
                rhs[slot] = sign * values[self.basis[slot]] - offset_at(self.basis[slot]);
            }
            if let Some(p) = pinned {
                rhs[p] = values[self.basis[p]];
            }
            let Some(a) = self.lu.solve(&rhs) else {
                continue;
            };
            let mut worst = 0.0f64;
            for (j, (s, &v)) in self.subsets.iter().zip(values.iter()).enumerate() {
                let sum: f64 = offset_at(j) + s.iter().map(|&e| a[e as usize]).sum::<f64>();
                worst = worst.max((sum.abs() - v).abs());
                if worst > tol {
                    break;
                }
            }
            if worst <= tol {
                let cand = if shifted {
                    a.as_slice().to_vec()
                } else {
                    canonicalize(a.as_slice(), tol)
                };
                let same = |c: &[f64]| {
                    if shifted {
                        c.iter().zip(&cand).all(|(x, y)| (x - y).abs() <= tol)
                    } else {
                        sign_equivalent(c, &cand, tol)
                    }
                };
                if let Some(entry) = classes.iter_mut().find(|(c, _)| same(c)) {
                    if worst < entry.1 {
                        entry.1 = worst;
                    }
                } else {
                    classes.push((cand, worst));
                }
            }
        }
        match classes.len() {
            0 => Err(Error::InconsistentSystem { tol }),
            n => Ok(SignedSolution {
                values: classes[0].0.clone(),
                residual: classes[0].1,
                ambiguous: n > 1,
            }),
        }
    }
}

fn canonicalize(a: &[f64], tol: f64) -> Vec<f64> {
    let flip = a
        .iter()
        .find(|x| x.abs() > tol)
        .map(|x| *x < 0.0)
        .unwrap_or(false);
    if flip {
        a.iter().map(|x| -x).collect()
    } else {
        a.to_vec()
    }
}

fn sign_equivalent(a: &[f64], b: &[f64], tol: f64) -> bool {
    let direct = a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol);
    let flipped = a.iter().zip(b).all(|(x, y)| (x + y).abs() <= tol);
    direct || flipped
}

/// Solves one signed system; see [`SystemSolver`].
pub fn solve_signed_system(sys: &SignedSystem) -> Result<SignedSolution> {
    sys.sparsity()?;
    SystemSolver::new(&sys.subsets)?.solve(&sys.values, Some(sys.tolerance))
}

/// Brute-force oracle: enumerates all `2^t` constraint sign patterns,
/// solves each in least squares against the full constraint matrix, and
/// returns every solution class (up to global sign) whose residual is
/// within tolerance. Restricted to `t = C(k+2, k) <= 16`.
pub fn enumerate_all_solutions(sys: &SignedSystem) -> Result<Vec<Vec<f64>>> {
    let k = sys.sparsity()?;
    let t = sys.subsets.len();
    if t > 16 {
        return Err(Error::Parameter(format!(
            "oracle restricted to families of at most 16 subsets, got {t}"
        )));
    }
    let nvars = k + 2;
    let b = DMatrix::from_fn(t, nvars, |r, c| {
        if sys.subsets[r].contains(&(c as u8)) {
            1.0
        } else {
            0.0
        }
    });
    let pinv = b
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Matrix(format!("pseudo-inverse failed: {e}")))?;
    let tol = sys.tolerance;
    let mut classes: Vec<Vec<f64>> = Vec::new();
    for mask in 0u64..(1 << t) {
        let rhs = DVector::from_fn(t, |r, _| {
            let sign = if mask >> r & 1 == 1 { -1.0 } else { 1.0 };
            sign * sys.values[r]
        });
        let a = &pinv * &rhs;
        let mut worst = 0.0f64;
        for (s, &v) in sys.subsets.iter().zip(sys.values.iter()) {
            let sum: f64 = s.iter().map(|&e| a[e as usize]).sum();
            worst = worst.max((sum.abs() - v).abs());
            if worst > tol {
                break;
            }
        }
        if worst <= tol {
            let cand = canonicalize(a.as_slice(), tol);
            if !classes.iter().any(|c| sign_equivalent(c, &cand, tol)) {
                classes.push(cand);
            }
        }
    }
    Ok(classes)
}

/// Per-pixel batched solve: `values` has one row per pixel and one column
/// per subset (aligned with `subsets`); `offsets`, when given, has the
/// same shape and adds a known constant inside each absolute value (the
/// public contribution, in mixed mode). Image identities are consistent
/// across pixels because the subset family is shared; the per-pixel
/// global sign stays arbitrary. Returns the `d x (k+2)` recovered pixel
/// values and the number of ambiguous pixels.
///
/// Fails when more than 0.1% of pixels are ambiguous.
pub fn solve_pixel_batch(
    subsets: &[Vec<u8>],
    values: &DMatrix<f64>,
    offsets: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, usize)> {
    let k = subsets.first().map(Vec::len).unwrap_or(0);
    if k < 1 || subsets.len() != family_size(k) {
        return Err(Error::Parameter(
            "subsets must be a full floral label family".into(),
        ));
    }
    if values.ncols() != subsets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} value columns for {} subsets",
            values.ncols(),
            subsets.len()
        )));
    }
    if let Some(off) = offsets {
        if off.shape() != values.shape() {
            return Err(Error::DimensionMismatch(
                "offsets must have the same shape as values".into(),
            ));
        }
    }
    let solver = SystemSolver::new(subsets)?;
    let d = values.nrows();
    let nvars = k + 2;
    let rows: Vec<Result<(Vec<f64>, bool)>> = (0..d)
        .into_par_iter()
        .map(|px| {
            let v: Vec<f64> = (0..subsets.len()).map(|c| values[(px, c)]).collect();
            let sol = match offsets {
                Some(off) => {
                    let o: Vec<f64> = (0..subsets.len()).map(|c| off[(px, c)]).collect();
                    solver.solve_with_offsets(&v, Some(&o), None)?
                }
                None => solver.solve(&v, None)?,
            };
            Ok((sol.values, sol.ambiguous))
        })
        .collect();
    let mut out = DMatrix::zeros(d, nvars);
    let mut ambiguous = 0usize;
    for (px, row) in rows.into_iter().enumerate() {
        let (vals, amb) = row?;
        if amb {
            ambiguous += 1;
        }
        for (c, v) in vals.into_iter().enumerate() {
            out[(px, c)] = v;
        }
    }
    if (ambiguous as f64) > 0.001 * d as f64 {
        return Err(Error::RecoveryQuality(format!(
            "{ambiguous} of {d} pixels ambiguous (above the 0.1% budget)"
        )));
    }
    Ok((out, ambiguous))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn full_family(k: usize) -> Vec<Vec<u8>> {
        let n = (k + 2) as u8;
        let mut out = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                out.push((0..n).filter(|&e| e != u && e != v).collect());
            }
        }
        out.sort();
        out
    }

    fn values_for(a: &[f64], subsets: &[Vec<u8>]) -> Vec<f64> {
        subsets
            .iter()
            .map(|s| s.iter().map(|&e| a[e as usize]).sum::<f64>().abs())
            .collect()
    }

    #[test]
    fn solves_the_reference_instance() {
        // a = (1, -2, 3, 0.5) over the lexicographic pair family gives
        // values (1, 4, 1.5, 1, 1.5, 3.5)
        let subsets: Vec<Vec<u8>> = vec![
            vec![0, 1],
            vec![0, 2],
            vec![0, 3],
            vec![1, 2],
            vec![1, 3],
            vec![2, 3],
        ];
        let a = [1.0, -2.0, 3.0, 0.5];
        let values = values_for(&a, &subsets);
        assert_eq!(values, vec![1.0, 4.0, 1.5, 1.0, 1.5, 3.5]);
        let sys = SignedSystem::new(subsets, values).unwrap();
        let sol = solve_signed_system(&sys).unwrap();
        assert!(!sol.ambiguous);
        for (got, want) in sol.values.iter().zip(a.iter()) {
            assert!((got - want).abs() < 1e-9, "got {:?}", sol.values);
        }
        // brute force confirms a single class
        assert_eq!(enumerate_all_solutions(&sys).unwrap().len(), 1);
    }

    #[test]
    fn zero_values_force_zero_solution() {
        let subsets = full_family(2);
        let sys = SignedSystem::new(subsets, vec![0.0; 6]).unwrap();
        let sol = solve_signed_system(&sys).unwrap();
        assert!(!sol.ambiguous);
        assert!(sol.values.iter().all(|v| v.abs() < 1e-9));
        assert_eq!(enumerate_all_solutions(&sys).unwrap().len(), 1);
    }

    #[test]
    fn all_equal_values_are_ambiguous() {
        // |a_i + a_j| = 2 for all pairs admits (1,1,1,1) and
        // (3,-1,-1,-1), plus the permuted placements of the 3: five
        // classes up to global sign in total
        let subsets = full_family(2);
        let sys = SignedSystem::new(subsets, vec![2.0; 6]).unwrap();
        let sol = solve_signed_system(&sys).unwrap();
        assert!(sol.ambiguous);
        let classes = enumerate_all_solutions(&sys).unwrap();
        assert_eq!(classes.len(), 5);
        for witness in [[1.0, 1.0, 1.0, 1.0], [3.0, -1.0, -1.0, -1.0]] {
            assert!(
                classes
                    .iter()
                    .any(|c| sign_equivalent(c, &witness, sys.tolerance)),
                "missing witness {witness:?}"
            );
        }
    }

    #[test]
    fn oracle_and_solver_agree_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4096);
        for k in [2usize, 3, 4] {
            let subsets = full_family(k);
            for _ in 0..200 {
                let a: Vec<f64> = (0..k + 2).map(|_| rng.sample(StandardNormal)).collect();
                let values = values_for(&a, &subsets);
                let sys = SignedSystem::new(subsets.clone(), values).unwrap();
                let sol = solve_signed_system(&sys).unwrap();
                let classes = enumerate_all_solutions(&sys).unwrap();
                assert_eq!(
                    classes.len() > 1,
                    sol.ambiguous,
                    "ambiguity disagreement at k = {k}"
                );
                assert!(
                    classes
                        .iter()
                        .any(|c| sign_equivalent(c, &sol.values, sys.tolerance)),
                    "solution class disagreement at k = {k}"
                );
            }
        }
    }

    #[test]
    fn gaussian_systems_are_generic() {
        // statistical witness at k = 2; the full 1e4-instance run lives
        // in the acceptance suite
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let subsets = full_family(2);
        for _ in 0..2000 {
            let a: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let sys = SignedSystem::new(subsets.clone(), values_for(&a, &subsets)).unwrap();
            let sol = solve_signed_system(&sys).unwrap();
            assert!(!sol.ambiguous, "ambiguous Gaussian instance {a:?}");
            assert!(sol.residual <= sys.tolerance);
        }
    }

    #[test]
    fn canonical_representative_ignores_generation_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let subsets = full_family(3);
        for _ in 0..100 {
            let a: Vec<f64> = (0..5).map(|_| rng.sample(StandardNormal)).collect();
            let neg: Vec<f64> = a.iter().map(|x| -x).collect();
            let va = values_for(&a, &subsets);
            let vb = values_for(&neg, &subsets);
            assert_eq!(va, vb);
            let sa = solve_signed_system(&SignedSystem::new(subsets.clone(), va).unwrap()).unwrap();
            let sb = solve_signed_system(&SignedSystem::new(subsets.clone(), vb).unwrap()).unwrap();
            assert_eq!(sa.values, sb.values);
        }
    }

    #[test]
    fn residuals_are_sound() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let subsets = full_family(2);
        for _ in 0..200 {
            let a: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let sys = SignedSystem::new(subsets.clone(), values_for(&a, &subsets)).unwrap();
            let sol = solve_signed_system(&sys).unwrap();
            // recheck every constraint against the returned values
            for (s, &v) in sys.subsets.iter().zip(sys.values.iter()) {
                let sum: f64 = s.iter().map(|&e| sol.values[e as usize]).sum();
                assert!((sum.abs() - v).abs() <= sys.tolerance);
            }
        }
    }

    #[test]
    fn rejects_malformed_families() {
        // missing one subset
        let mut subsets = full_family(2);
        subsets.pop();
        let r = SignedSystem::new(subsets, vec![1.0; 5]).and_then(|s| solve_signed_system(&s));
        assert!(r.is_err());
        // negative value
        assert!(SignedSystem::new(full_family(2), vec![-1.0; 6]).is_err());
    }

    #[test]
    fn oracle_is_size_guarded() {
        // k = 5 has 21 subsets, past the 2^t enumeration cap
        let subsets = full_family(5);
        let values = vec![1.0; subsets.len()];
        let sys = SignedSystem::new(subsets, values).unwrap();
        assert!(matches!(
            enumerate_all_solutions(&sys),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn inconsistent_values_error_out() {
        // values violating the subset-sum structure: no sign pattern works
        let subsets = full_family(2);
        let values = vec![1.0, 0.0, 0.0, 0.0, 0.0, 100.0];
        let sys = SignedSystem::new(subsets, values).unwrap();
        assert!(matches!(
            solve_signed_system(&sys),
            Err(Error::InconsistentSystem { .. })
        ));
    }

    #[test]
    fn pixel_batch_of_one_reduces_to_single_solve() {
        let subsets = full_family(2);
        let a = [0.3, -1.2, 2.2, 0.9];
        let values = values_for(&a, &subsets);
        let m = DMatrix::from_fn(1, 6, |_, c| values[c]);
        let (out, ambiguous) = solve_pixel_batch(&subsets, &m, None).unwrap();
        assert_eq!(ambiguous, 0);
        let single =
            solve_signed_system(&SignedSystem::new(subsets.clone(), values).unwrap()).unwrap();
        for c in 0..4 {
            assert_eq!(out[(0, c)], single.values[c]);
        }
    }

    #[test]
    fn pixel_batch_recovers_gaussian_images_in_absolute_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let subsets = full_family(2);
        let d = 1000;
        let truth = DMatrix::from_fn(d, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let values = DMatrix::from_fn(d, 6, |px, c| {
            subsets[c]
                .iter()
                .map(|&e| truth[(px, e as usize)])
                .sum::<f64>()
                .abs()
        });
        let (out, ambiguous) = solve_pixel_batch(&subsets, &values, None).unwrap();
        assert_eq!(ambiguous, 0);
        for px in 0..d {
            for c in 0..4 {
                let (got, want) = (out[(px, c)].abs(), truth[(px, c)].abs());
                assert!(
                    (got - want).abs() <= 1e-6 * want.max(1.0),
                    "pixel {px} image {c}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn pixel_batch_tolerates_rare_ambiguous_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let subsets = full_family(2);
        let d = 2000;
        let truth = DMatrix::from_fn(d, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut values = DMatrix::from_fn(d, 6, |px, c| {
            subsets[c]
                .iter()
                .map(|&e| truth[(px, e as usize)])
                .sum::<f64>()
                .abs()
        });
        // inject one adversarial all-equal pixel: counted, not fatal
        for c in 0..6 {
            values[(0, c)] = 2.0;
        }
        let (_, ambiguous) = solve_pixel_batch(&subsets, &values, None).unwrap();
        assert_eq!(ambiguous, 1);
    }

    #[test]
    fn pixel_batch_rejects_excess_ambiguity() {
        let subsets = full_family(2);
        // every pixel ambiguous
        let values = DMatrix::from_element(10, 6, 2.0);
        assert!(matches!(
            solve_pixel_batch(&subsets, &values, None),
            Err(Error::RecoveryQuality(_))
        ));
    }

    /// brute force for the affine variant: all 2^t constraint signs in
    /// least squares
    fn offset_oracle(subsets: &[Vec<u8>], values: &[f64], offsets: &[f64], tol: f64) -> Vec<Vec<f64>> {
        let t = subsets.len();
        let nvars = subsets[0].len() + 2;
        let b = DMatrix::from_fn(t, nvars, |r, c| {
            if subsets[r].contains(&(c as u8)) {
                1.0
            } else {
                0.0
            }
        });
        let pinv = b.pseudo_inverse(1e-12).unwrap();
        let mut classes: Vec<Vec<f64>> = Vec::new();
        for mask in 0u64..(1 << t) {
            let rhs = DVector::from_fn(t, |r, _| {
                let sign = if mask >> r & 1 == 1 { -1.0 } else { 1.0 };
                sign * values[r] - offsets[r]
            });
            let a = &pinv * &rhs;
            let ok = subsets.iter().enumerate().all(|(j, s)| {
                let sum: f64 = offsets[j] + s.iter().map(|&e| a[e as usize]).sum::<f64>();
                (sum.abs() - values[j]).abs() <= tol
            });
            if ok {
                let cand: Vec<f64> = a.as_slice().to_vec();
                if !classes
                    .iter()
                    .any(|c| c.iter().zip(&cand).all(|(x, y)| (x - y).abs() <= tol))
                {
                    classes.push(cand);
                }
            }
        }
        classes
    }

    #[test]
    fn offset_systems_recover_the_shifted_truth() {
        // affine variant used by the mixed-mode pipeline: known public
        // contribution inside every absolute value
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let subsets = full_family(2);
        let solver = SystemSolver::new(&subsets).unwrap();
        for _ in 0..200 {
            let a: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let offsets: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
            let values: Vec<f64> = subsets
                .iter()
                .zip(&offsets)
                .map(|(s, c)| (c + s.iter().map(|&e| a[e as usize]).sum::<f64>()).abs())
                .collect();
            let sol = solver.solve_with_offsets(&values, Some(&offsets), None).unwrap();
            let tol = default_tolerance(&values);
            let classes = offset_oracle(&subsets, &values, &offsets, tol);
            assert_eq!(sol.ambiguous, classes.len() > 1);
            if !sol.ambiguous {
                // unique solutions pin the actual signs, not just |a|
                for (got, want) in sol.values.iter().zip(&a) {
                    assert!((got - want).abs() <= tol, "{:?} vs {a:?}", sol.values);
                }
            }
            assert!(classes.iter().any(|c| c
                .iter()
                .zip(&sol.values)
                .all(|(x, y)| (x - y).abs() <= tol)));
        }
    }
}

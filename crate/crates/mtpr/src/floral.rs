//! Locating and labeling floral principal submatrices of an overlap
//! matrix.
//!
//! A principal submatrix of the (all-private, grid-`k`) overlap matrix is
//! *floral* when its rows realize, up to permutation, the family of all
//! `k`-subsets of a `(k+2)`-set, with entries equal to pairwise
//! intersection sizes. Such a family is identified by its pairwise
//! intersections alone, which is what makes the attack's final solve
//! well-posed.
//!
//! The search walks *houses* — an apex row plus a 4-cycle of
//! `(k-1)`-overlap rows with `(k-2)` diagonals — and grows each house
//! into a full candidate family by the same counting rules the
//! constructive identification uses. Every candidate is re-verified
//! before being returned.
//!
//! Desk-scale instances have many duplicate selection supports (rows with
//! overlap exactly `k`), so the search first collapses duplicate rows
//! into classes and works on the quotient; results are mapped back to the
//! lowest original index of each class and verified against the original
//! matrix.

use crate::error::{Error, Result};
use crate::gram::OverlapMatrix;

/// Per-row neighbor lists at overlap levels `k-1` and `k-2`.
///
/// The level-0 list is never materialized: for `k = 2` the level `k-2`
/// set is the complement of the nonzero pattern (cofinite), and every
/// place the algorithm needs a level-0 relation it can test the matrix
/// entry directly.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    k: usize,
    n1: Vec<Vec<u32>>,
    n2: Vec<Vec<u32>>,
}

impl NeighborIndex {
    /// Rows with overlap exactly `k-1` against `i`, sorted ascending.
    pub fn level1(&self, i: usize) -> &[u32] {
        &self.n1[i]
    }

    /// Rows with overlap exactly `k-2` against `i`, sorted ascending.
    /// Empty (and unused) when `k = 2`.
    pub fn level2(&self, i: usize) -> &[u32] {
        &self.n2[i]
    }

    pub fn sparsity(&self) -> usize {
        self.k
    }

    /// Largest level-`(k-1)` list size, a sparsity diagnostic.
    pub fn max_level1_degree(&self) -> usize {
        self.n1.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Builds the neighbor index in one pass over the matrix entries.
/// Requires the matrix to be on the all-private grid (`grid == k`).
pub fn build_neighbor_index(m: &OverlapMatrix, k: usize) -> Result<NeighborIndex> {
    if m.grid() != k {
        return Err(Error::Parameter(format!(
            "neighbor index needs an all-private matrix: grid {} != k {}",
            m.grid(),
            k
        )));
    }
    if k < 2 {
        return Err(Error::Parameter("sparsity k must be at least 2".into()));
    }
    let order = m.order();
    let mut n1 = vec![Vec::new(); order];
    let mut n2 = vec![Vec::new(); order];
    let t1 = (k - 1) as i64;
    let t2 = (k - 2) as i64;
    for i in 0..order {
        for j in (i + 1)..order {
            let e = m.get(i, j);
            if e == t1 {
                n1[i].push(j as u32);
                n1[j].push(i as u32);
            } else if k >= 3 && e == t2 {
                n2[i].push(j as u32);
                n2[j].push(i as u32);
            }
        }
    }
    Ok(NeighborIndex { k, n1, n2 })
}

/// A house witness: apex `i0` plus a 4-cycle `(j1, j2, j3, j4)` with
/// `j1 < j4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HouseWitness {
    pub apex: usize,
    pub cycle: [usize; 4],
}

impl HouseWitness {
    /// Builds a witness only when the tuple actually matches the house
    /// pattern in `m`.
    pub fn new(m: &OverlapMatrix, apex: usize, cycle: [usize; 4]) -> Option<Self> {
        is_house(m, apex, cycle).then_some(Self { apex, cycle })
    }
}

/// Exact house pattern check: cycle edges `(1,2), (2,3), (3,4), (1,4)`
/// at overlap `k-1`, diagonals `(1,3), (2,4)` at `k-2`, and the apex at
/// `k-1` against all four cycle rows. Tuples with repeated indices or
/// `j1 >= j4` are not houses.
pub fn is_house(m: &OverlapMatrix, apex: usize, cycle: [usize; 4]) -> bool {
    let k = m.grid() as i64;
    let [j1, j2, j3, j4] = cycle;
    let mut all = [apex, j1, j2, j3, j4];
    all.sort_unstable();
    if all.windows(2).any(|w| w[0] == w[1]) || j1 >= j4 {
        return false;
    }
    m.get(j1, j2) == k - 1
        && m.get(j2, j3) == k - 1
        && m.get(j3, j4) == k - 1
        && m.get(j1, j4) == k - 1
        && m.get(j1, j3) == k - 2
        && m.get(j2, j4) == k - 2
        && cycle.iter().all(|&j| m.get(apex, j) == k - 1)
}

/// An identified floral principal submatrix: row indices into the parent
/// matrix plus the `k`-subset of `0..k+2` each row realizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FloralAssignment {
    pub indices: Vec<usize>,
    pub labels: Vec<Vec<u8>>,
}

impl FloralAssignment {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `C(k+2, k) = (k+1)(k+2)/2`, the floral family size.
pub fn family_size(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

fn label_sorted(mut v: Vec<u8>) -> Vec<u8> {
    v.sort_unstable();
    v
}

fn intersection_size(a: &[u8], b: &[u8]) -> usize {
    a.iter().filter(|x| b.contains(x)).count()
}

/// Labels the rows of an `L x L` pairwise-intersection matrix by
/// `k`-subsets of `0..k+2`, following the constructive identification of
/// the family `C^k_{[k+2]}`: fix an anchor pair at overlap `k-2`, the
/// four rows at overlap `k-1` against both anchors, then the `4k-8`
/// side-group rows and the inner block, each forced by counting.
///
/// Fails with a structure error naming the first violated counting step.
/// The labeling is unique up to a permutation of `0..k+2` (and, for
/// `k = 2`, the matrix automorphisms the family admits); any consistent
/// labeling is returned.
pub fn identify_family(entries: &[i64], k: usize) -> Result<Vec<Vec<u8>>> {
    identify_family_all(entries, k).map(|mut all| all.swap_remove(0))
}

/// All labelings of a floral matrix that are consistent with its entries,
/// modulo permutations of `0..k+2`. For `k >= 3` there is exactly one;
/// for `k = 2` the intersection matrix admits one extra automorphism not
/// induced by element relabeling, so up to two genuinely different
/// labelings can match. Downstream consumers that care about which
/// private image is which must disambiguate against data outside the
/// submatrix (see [`find_floral_submatrix`]).
pub fn identify_family_all(entries: &[i64], k: usize) -> Result<Vec<Vec<Vec<u8>>>> {
    if k < 2 {
        return Err(Error::Parameter("sparsity k must be at least 2".into()));
    }
    let l = family_size(k);
    if entries.len() != l * l {
        return Err(Error::DimensionMismatch(format!(
            "expected a {l}x{l} matrix for k = {k}, got {} entries",
            entries.len()
        )));
    }
    let p = |i: usize, j: usize| entries[i * l + j];
    for i in 0..l {
        if p(i, i) != k as i64 {
            return Err(Error::Structure(format!(
                "diagonal entry {i} is {} instead of k = {k}",
                p(i, i)
            )));
        }
        for j in (i + 1)..l {
            if p(i, j) != p(j, i) {
                return Err(Error::Structure(format!("matrix asymmetric at ({i}, {j})")));
            }
            // distinct k-subsets of a (k+2)-set intersect in k-2 or k-1
            if p(i, j) < k as i64 - 2 || p(i, j) > k as i64 - 1 {
                return Err(Error::Structure(format!(
                    "entry ({i}, {j}) = {} outside the feasible range [{} , {}]",
                    p(i, j),
                    k - 2,
                    k - 1
                )));
            }
        }
    }
    let lo = k as i64 - 2;
    let hi = k as i64 - 1;

    // anchors: first pair at overlap k-2
    let mut anchors = None;
    'outer: for r0 in 0..l {
        for r1 in (r0 + 1)..l {
            if p(r0, r1) == lo {
                anchors = Some((r0, r1));
                break 'outer;
            }
        }
    }
    let Some((r0, r1)) = anchors else {
        return Err(Error::Structure(
            "no anchor pair at overlap k-2".into(),
        ));
    };

    // the four rows at overlap k-1 against both anchors
    let cycle: Vec<usize> = (0..l)
        .filter(|&r| r != r0 && r != r1 && p(r, r0) == hi && p(r, r1) == hi)
        .collect();
    if cycle.len() != 4 {
        return Err(Error::Structure(format!(
            "expected exactly 4 rows at level (k-1, k-1) against the anchors, found {}",
            cycle.len()
        )));
    }
    let c_a = cycle[0];
    let partners: Vec<usize> = cycle[1..].iter().copied().filter(|&c| p(c_a, c) == hi).collect();
    let diag: Vec<usize> = cycle[1..].iter().copied().filter(|&c| p(c_a, c) == lo).collect();
    if partners.len() != 2 || diag.len() != 1 {
        return Err(Error::Structure(
            "the four (k-1, k-1) rows do not form a 4-cycle".into(),
        ));
    }

    // element labels: {0,1} and {k, k+1} are the anchor differences,
    // star = 2..k is their intersection
    let star: Vec<u8> = (2..k as u8).collect();
    let with_star = |extra: &[u8]| {
        let mut v = star.clone();
        v.extend_from_slice(extra);
        label_sorted(v)
    };

    let mut labelings = Vec::new();
    let mut first_err: Option<Error> = None;
    for branch in 0..2 {
        let (c_b, c_d) = if branch == 0 {
            (partners[0], partners[1])
        } else {
            (partners[1], partners[0])
        };
        match identify_with_cycle(entries, k, l, (r0, r1), (c_a, c_b, c_d, diag[0]), &with_star) {
            Ok(labels) => {
                if !labelings.contains(&labels) {
                    labelings.push(labels);
                }
            }
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    if labelings.is_empty() {
        Err(first_err.expect("both branches must produce errors"))
    } else {
        Ok(labelings)
    }
}

/// One orientation of the 4-cycle labeling; everything past the cycle is
/// forced by counting and pairing, then checked in full.
fn identify_with_cycle(
    entries: &[i64],
    k: usize,
    l: usize,
    (r0, r1): (usize, usize),
    (c_a, c_b, c_d, c_diag): (usize, usize, usize, usize),
    with_star: &dyn Fn(&[u8]) -> Vec<u8>,
) -> Result<Vec<Vec<u8>>> {
    let p = |i: usize, j: usize| entries[i * l + j];
    let lo = k as i64 - 2;
    let hi = k as i64 - 1;
    let kb = k as u8;

    let mut labels: Vec<Option<Vec<u8>>> = vec![None; l];
    labels[r0] = Some(with_star(&[0, 1]));
    labels[r1] = Some(with_star(&[kb, kb + 1]));
    // S_{a,b} = {a} + star + {b}; c_a := S_{0,k}, then c_b shares b and
    // c_d shares a with it
    labels[c_a] = Some(with_star(&[0, kb]));
    labels[c_b] = Some(with_star(&[1, kb]));
    labels[c_d] = Some(with_star(&[0, kb + 1]));
    labels[c_diag] = Some(with_star(&[1, kb + 1]));

    if k >= 3 {
        // side groups: for each (z, side), the k-2 rows at overlap k-1
        // against anchor_z and the two matching cycle rows, k-2 against
        // the rest. Their complements are {x, partner(side)} for x in
        // star, so the first group is assigned freely and the others are
        // forced by (k-1)-pairing with it.
        let cyc = |a: u8, b: u8| match (a, b) {
            (0, _) if b == kb => c_a,
            (1, _) if b == kb => c_b,
            (0, _) => c_d,
            _ => c_diag,
        };
        // (z, near pair, far pair, complement partner element)
        let combos: [(usize, [usize; 2], [usize; 2], u8); 4] = [
            (r0, [cyc(0, kb), cyc(1, kb)], [cyc(0, kb + 1), cyc(1, kb + 1)], kb + 1),
            (r0, [cyc(0, kb + 1), cyc(1, kb + 1)], [cyc(0, kb), cyc(1, kb)], kb),
            (r1, [cyc(0, kb), cyc(0, kb + 1)], [cyc(1, kb), cyc(1, kb + 1)], 1),
            (r1, [cyc(1, kb), cyc(1, kb + 1)], [cyc(0, kb), cyc(0, kb + 1)], 0),
        ];
        let star: Vec<u8> = (2..kb).collect();
        let mut first_group: Vec<(usize, u8)> = Vec::new(); // (row, excluded x)
        for (slot, &(near_anchor, near, far, partner)) in combos.iter().enumerate() {
            let far_anchor = if near_anchor == r0 { r1 } else { r0 };
            let pool: Vec<usize> = (0..l)
                .filter(|&r| {
                    labels[r].is_none()
                        && p(r, near_anchor) == hi
                        && p(r, near[0]) == hi
                        && p(r, near[1]) == hi
                        && p(r, far_anchor) == lo
                        && p(r, far[0]) == lo
                        && p(r, far[1]) == lo
                })
                .collect();
            if pool.len() != k - 2 {
                return Err(Error::Structure(format!(
                    "expected exactly {} rows in side group {slot}, found {}",
                    k - 2,
                    pool.len()
                )));
            }
            if slot == 0 {
                // free choice: pair rows with excluded star elements in order
                for (r, &x) in pool.iter().zip(star.iter()) {
                    first_group.push((*r, x));
                }
            }
            let mut seen = Vec::new();
            for &r in &pool {
                let x = if slot == 0 {
                    first_group
                        .iter()
                        .find(|(rr, _)| *rr == r)
                        .map(|&(_, x)| x)
                        .expect("row was just assigned")
                } else {
                    // forced: the unique first-group row sharing a
                    // complement element
                    let mates: Vec<u8> = first_group
                        .iter()
                        .filter(|&&(rr, _)| p(r, rr) == hi)
                        .map(|&(_, x)| x)
                        .collect();
                    if mates.len() != 1 {
                        return Err(Error::Structure(format!(
                            "side-group row {r} pairs with {} rows of the first group instead of 1",
                            mates.len()
                        )));
                    }
                    mates[0]
                };
                if seen.contains(&x) {
                    return Err(Error::Structure(format!(
                        "two rows of side group {slot} map to the same star element"
                    )));
                }
                seen.push(x);
                // complement {x, partner}
                let label: Vec<u8> = (0..kb + 2).filter(|&e| e != x && e != partner).collect();
                labels[r] = Some(label);
            }
        }

        // inner block: rows at overlap k-2 against the anchors and the
        // whole cycle; complements are star pairs read off the first group
        let remaining: Vec<usize> = (0..l).filter(|&r| labels[r].is_none()).collect();
        let expected_inner = if k >= 4 { (k - 2) * (k - 3) / 2 } else { 0 };
        if remaining.len() != expected_inner {
            return Err(Error::Structure(format!(
                "expected {expected_inner} inner rows, found {}",
                remaining.len()
            )));
        }
        for r in remaining {
            for &s in [r0, r1, c_a, c_b, c_d, c_diag].iter() {
                if p(r, s) != lo {
                    return Err(Error::Structure(format!(
                        "inner row {r} has overlap {} against a seed row instead of {}",
                        p(r, s),
                        lo
                    )));
                }
            }
            let comp: Vec<u8> = first_group
                .iter()
                .filter(|&&(rr, _)| p(r, rr) == hi)
                .map(|&(_, x)| x)
                .collect();
            if comp.len() != 2 {
                return Err(Error::Structure(format!(
                    "inner row {r} pairs with {} first-group rows instead of 2",
                    comp.len()
                )));
            }
            let label: Vec<u8> = (0..kb + 2).filter(|&e| !comp.contains(&e)).collect();
            labels[r] = Some(label);
        }
    } else if labels.iter().any(Option::is_none) {
        return Err(Error::Structure(
            "matrix has more rows than the k = 2 family".into(),
        ));
    }

    // full verification of the candidate labeling
    let labels: Vec<Vec<u8>> = labels.into_iter().map(|o| o.expect("all rows labeled")).collect();
    for a in 0..l {
        if labels[a].len() != k {
            return Err(Error::Structure(format!("label of row {a} is not a k-subset")));
        }
        for b in (a + 1)..l {
            if labels[a] == labels[b] {
                return Err(Error::Structure(format!("rows {a} and {b} received equal labels")));
            }
            if intersection_size(&labels[a], &labels[b]) as i64 != p(a, b) {
                return Err(Error::Structure(format!(
                    "labeling inconsistent with entry ({a}, {b})"
                )));
            }
        }
    }
    Ok(labels)
}

/// Checks whether the principal submatrix of `m` on `indices` is floral;
/// returns its labeling if so. Runs the constructive identification, not
/// a permutation search.
pub fn verify_floral(m: &OverlapMatrix, indices: &[usize]) -> Option<Vec<Vec<u8>>> {
    verify_floral_all(m, indices).map(|mut all| all.swap_remove(0))
}

fn verify_floral_all(m: &OverlapMatrix, indices: &[usize]) -> Option<Vec<Vec<Vec<u8>>>> {
    let k = m.grid();
    if indices.len() != family_size(k) {
        return None;
    }
    if indices.iter().any(|&i| i >= m.order()) {
        return None;
    }
    let sub = m.principal_submatrix(indices);
    identify_family_all(&sub, k).ok()
}

/// Tests whether a labeling of the rows `indices` explains the whole
/// matrix: for every outside row `r`, the overlap vector
/// `o_t = M[r, indices[t]]` must decompose as
/// `o_t = sum_{e in labels[t]} c_e` with every `c_e` in `{0, 1}` (the
/// indicator of the family element in `r`'s support). The true labeling
/// always passes; a labeling twisted by a non-element automorphism
/// (possible only for `k = 2`) decomposes straddling rows with
/// half-integer coefficients and fails.
pub fn labeling_explains_matrix(m: &OverlapMatrix, indices: &[usize], labels: &[Vec<u8>]) -> bool {
    labeling_deficit(m, indices, labels) == 0
}

/// Number of outside rows a labeling fails to explain. The true labeling
/// scores 0 on exact data and stays near 0 under isolated entry errors,
/// while a twisted labeling fails every straddling row.
fn labeling_deficit(m: &OverlapMatrix, indices: &[usize], labels: &[Vec<u8>]) -> usize {
    let k = m.grid();
    let l = indices.len();
    let nvars = k + 2;
    let b = nalgebra::DMatrix::<f64>::from_fn(l, nvars, |r, c| {
        if labels[r].contains(&(c as u8)) {
            1.0
        } else {
            0.0
        }
    });
    let Ok(pinv) = b.clone().pseudo_inverse(1e-12) else {
        return usize::MAX;
    };
    let inside: Vec<bool> = {
        let mut v = vec![false; m.order()];
        for &i in indices {
            v[i] = true;
        }
        v
    };
    let mut deficit = 0;
    for r in 0..m.order() {
        if inside[r] {
            continue;
        }
        let o = nalgebra::DVector::<f64>::from_fn(l, |t, _| m.get(r, indices[t]) as f64);
        let c = &pinv * &o;
        let linear_fail = ((&b * &c) - &o).abs().max() > 1e-6;
        let fractional = c
            .iter()
            .any(|&x| (x - 0.0).abs() > 1e-6 && (x - 1.0).abs() > 1e-6);
        if linear_fail || fractional {
            deficit += 1;
        }
    }
    deficit
}

fn sorted_intersect(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Duplicate-support quotient: groups rows connected by overlap exactly
/// `k` (identical supports) and keeps the lowest index of each class.
fn duplicate_classes(m: &OverlapMatrix) -> Vec<usize> {
    let order = m.order();
    let k = m.grid() as i64;
    let mut parent: Vec<usize> = (0..order).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..order {
        for j in (i + 1)..order {
            if m.get(i, j) == k {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    // lower index becomes the representative
                    let (lo, hi) = (a.min(b), a.max(b));
                    parent[hi] = lo;
                }
            }
        }
    }
    let mut reps: Vec<usize> = (0..order)
        .filter(|&i| find(&mut parent, i) == i)
        .collect();
    reps.sort_unstable();
    reps
}

/// The house-count bound `100 * k^{5k} * m^5 / n^{4k-2}` used as an
/// optional abort budget, saturating at `u64::MAX`.
pub fn formula_house_budget(k: usize, m: usize, n: usize) -> u64 {
    let v = 100.0 * (k as f64).powi(5 * k as i32) * (m as f64).powi(5)
        / (n as f64).powi(4 * k as i32 - 2);
    if v >= u64::MAX as f64 {
        u64::MAX
    } else {
        v.max(1.0) as u64
    }
}

/// Finds a floral principal submatrix of `m` (on the all-private grid)
/// and labels it, or returns `None` when no verified candidate exists or
/// the optional house budget is exhausted.
///
/// The search is apex-first with deterministic lowest-index-first order;
/// every returned assignment has passed [`verify_floral`] against the
/// original matrix.
pub fn find_floral_submatrix(
    m: &OverlapMatrix,
    k: usize,
    house_budget: Option<u64>,
) -> Result<Option<FloralAssignment>> {
    if m.grid() != k {
        return Err(Error::Parameter(format!(
            "floral search needs an all-private matrix: grid {} != k {}",
            m.grid(),
            k
        )));
    }
    if k < 2 {
        return Err(Error::Parameter("sparsity k must be at least 2".into()));
    }
    let reps = duplicate_classes(m);
    let q = reps.len();
    if q < family_size(k) {
        return Ok(None);
    }
    let sub = m.principal_submatrix(&reps);
    let quotient = OverlapMatrix::new(sub, q, k)?;
    let idx = build_neighbor_index(&quotient, k)?;

    let mut houses_seen: u64 = 0;
    for i0 in 0..q {
        let n1_i0 = idx.level1(i0);
        for &j1 in n1_i0 {
            let j1 = j1 as usize;
            let adj_j1 = sorted_intersect(n1_i0, idx.level1(j1));
            for &j2 in &adj_j1 {
                let j2 = j2 as usize;
                if j2 == j1 {
                    continue;
                }
                for &j3 in &sorted_intersect(n1_i0, idx.level1(j2)) {
                    let j3 = j3 as usize;
                    if j3 == j1 || j3 == j2 || quotient.get(j1, j3) != k as i64 - 2 {
                        continue;
                    }
                    let j4_pool =
                        sorted_intersect(&sorted_intersect(n1_i0, idx.level1(j3)), idx.level1(j1));
                    for &j4 in &j4_pool {
                        let j4 = j4 as usize;
                        if j4 <= j1
                            || j4 == j2
                            || j4 == j3
                            || quotient.get(j2, j4) != k as i64 - 2
                        {
                            continue;
                        }
                        houses_seen += 1;
                        if let Some(budget) = house_budget {
                            if houses_seen >= budget {
                                log::warn!(
                                    "floral search aborted: house budget {budget} exhausted"
                                );
                                return Ok(None);
                            }
                        }
                        let cycle = [j1, j2, j3, j4];
                        let mut i1_pool = sorted_intersect(
                            &sorted_intersect(idx.level1(j1), idx.level1(j2)),
                            &sorted_intersect(idx.level1(j3), idx.level1(j4)),
                        );
                        i1_pool.retain(|&c| c as usize != i0);
                        for &i1 in &i1_pool {
                            if let Some(indices) =
                                grow_house(&quotient, &idx, k, i0, i1 as usize, cycle)
                            {
                                // map back to original rows and re-verify
                                let original: Vec<usize> =
                                    indices.iter().map(|&r| reps[r]).collect();
                                if let Some(labelings) = verify_floral_all(m, &original) {
                                    // prefer the labeling the rest of the
                                    // matrix agrees with (k = 2 admits a
                                    // twisted double); counting tolerates
                                    // isolated entry errors elsewhere
                                    let labels = labelings
                                        .iter()
                                        .min_by_key(|lab| labeling_deficit(m, &original, lab))
                                        .expect("at least one labeling")
                                        .clone();
                                    return Ok(Some(FloralAssignment {
                                        indices: original,
                                        labels,
                                    }));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(None)
}

/// Grows a house plus its opposite row `i1` into a full candidate index
/// set of size `C(k+2, k)`, by the side-group and inner-block counting
/// rules. Returns the candidate only; labeling and final validation are
/// the verifier's job.
fn grow_house(
    m: &OverlapMatrix,
    idx: &NeighborIndex,
    k: usize,
    i0: usize,
    i1: usize,
    cycle: [usize; 4],
) -> Option<Vec<usize>> {
    let lo = k as i64 - 2;
    let hi = k as i64 - 1;
    let [j1, j2, j3, j4] = cycle;
    let mut family = vec![i0, i1, j1, j2, j3, j4];
    family.sort_unstable();
    family.dedup();
    if family.len() != 6 {
        return None;
    }

    if k >= 3 {
        // side groups: iterate (z, alpha < beta) with gamma adjacent to
        // alpha and delta adjacent to beta in the cycle; each valid combo
        // must contribute exactly k-2 fresh rows and the union must
        // reach 4k-8
        let mut side: Vec<usize> = Vec::new();
        let pos = [j1, j2, j3, j4];
        let cycle_adjacent = |a: usize, b: usize| m.get(pos[a], pos[b]) == hi;
        for z in 0..2 {
            let (near_anchor, far_anchor) = if z == 0 { (i0, i1) } else { (i1, i0) };
            for alpha in 0..4 {
                for beta in (alpha + 1)..4 {
                    if !cycle_adjacent(alpha, beta) {
                        continue;
                    }
                    let rest: Vec<usize> = (0..4).filter(|&x| x != alpha && x != beta).collect();
                    // gamma pairs with alpha, delta with beta
                    let (gamma, delta) = if cycle_adjacent(rest[0], alpha) {
                        (rest[0], rest[1])
                    } else {
                        (rest[1], rest[0])
                    };
                    if !cycle_adjacent(gamma, alpha) || !cycle_adjacent(delta, beta) {
                        continue;
                    }
                    let (a, b, g, dd) = (pos[alpha], pos[beta], pos[gamma], pos[delta]);
                    let pool: Vec<usize> = idx
                        .level1(a)
                        .iter()
                        .map(|&r| r as usize)
                        .filter(|&r| {
                            !family.contains(&r)
                                && !side.contains(&r)
                                && m.get(r, near_anchor) == hi
                                && m.get(r, b) == hi
                                && m.get(r, far_anchor) == lo
                                && m.get(r, g) == lo
                                && m.get(r, dd) == lo
                        })
                        .collect();
                    if pool.len() == k - 2 {
                        side.extend_from_slice(&pool);
                    }
                }
            }
        }
        side.sort_unstable();
        side.dedup();
        if side.len() != 4 * k - 8 {
            return None;
        }

        // inner block: overlap k-2 against all six seed rows, overlap
        // k-1 against at least one side row
        let expected_inner = if k >= 4 { (k - 2) * (k - 3) / 2 } else { 0 };
        let mut inner: Vec<usize> = Vec::new();
        if expected_inner > 0 {
            inner = idx
                .level2(i0)
                .iter()
                .map(|&r| r as usize)
                .filter(|&r| {
                    !family.contains(&r)
                        && !side.contains(&r)
                        && m.get(r, i1) == lo
                        && cycle.iter().all(|&j| m.get(r, j) == lo)
                        && side.iter().any(|&s| m.get(r, s) == hi)
                })
                .collect();
            inner.sort_unstable();
            inner.dedup();
        }
        if inner.len() != expected_inner {
            return None;
        }
        family.extend_from_slice(&side);
        family.extend_from_slice(&inner);
        family.sort_unstable();
    }

    if family.len() == family_size(k) {
        Some(family)
    } else {
        None
    }
}

/// Exact count of house tuples `(i0; j1..j4)` with `j1 < j4`, enumerated
/// apex-first over the `(k-1)`-neighbor lists. A diagnostic; quadratic
/// memory in the matrix order but no quotienting, so counts match the
/// plain tuple definition.
pub fn count_houses(m: &OverlapMatrix, k: usize) -> Result<u64> {
    let idx = build_neighbor_index(m, k)?;
    let mut count = 0u64;
    for i0 in 0..m.order() {
        let n1_i0 = idx.level1(i0);
        for &j1 in n1_i0 {
            let j1 = j1 as usize;
            for &j2 in &sorted_intersect(n1_i0, idx.level1(j1)) {
                let j2 = j2 as usize;
                if j2 == j1 {
                    continue;
                }
                for &j3 in &sorted_intersect(n1_i0, idx.level1(j2)) {
                    let j3 = j3 as usize;
                    if j3 == j1 || j3 == j2 || m.get(j1, j3) != k as i64 - 2 {
                        continue;
                    }
                    for &j4 in &sorted_intersect(n1_i0, idx.level1(j3)) {
                        let j4 = j4 as usize;
                        if j4 <= j1 || j4 == j2 || j4 == j3 {
                            continue;
                        }
                        if m.get(j1, j4) == k as i64 - 1 && m.get(j2, j4) == k as i64 - 2 {
                            count += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(count)
}

//! Kernels restricted to the observed index set Ω.
//!
//! Nothing here forms an m×n dense matrix. Entrywise products cost
//! `O(|Ω| r)` and the scaling solves cost `O((m + n) r²)`; one full SASD
//! sweep is a handful of passes over Ω plus two r×r Cholesky solves.
//!
//! Sign convention: `gU = R Vᵀ` and `gV = Uᵀ R` are the *negative*
//! gradients of `h(U, V) = ½‖H − (UV)_Ω‖²_F` (with `R = H − (UV)_Ω`), so a
//! descent step moves `U ← U + μ·dU`.
//!
//! Every reduction runs sequentially in the canonical row-major Ω order, so
//! results are bit-reproducible.

use nalgebra::{Cholesky, DMatrix};
use std::sync::Arc;

use crate::error::LinalgError;

/// Reciprocal condition estimates below this abort the solve.
pub const RCOND_FLOOR: f64 = 1e-12;

/// A canonical (row-major sorted, duplicate-free) set of observed cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    m: usize,
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Mask {
    /// Builds a mask from arbitrary-order cells.
    pub fn new(m: usize, n: usize, mut cells: Vec<(usize, usize)>) -> Result<Self, LinalgError> {
        if m == 0 || n == 0 {
            return Err(LinalgError::Dimension(format!("empty {m}x{n} matrix")));
        }
        if cells.is_empty() {
            return Err(LinalgError::Empty);
        }
        for &(row, col) in &cells {
            if row >= m || col >= n {
                return Err(LinalgError::OutOfBounds { row, col, m, n });
            }
        }
        cells.sort_unstable();
        if let Some(w) = cells.windows(2).find(|w| w[0] == w[1]) {
            return Err(LinalgError::Duplicate { row: w[0].0, col: w[0].1 });
        }
        let (rows, cols) = cells.into_iter().unzip();
        Ok(Mask { m, n, rows, cols })
    }

    /// Every cell of an m×n matrix.
    pub fn full(m: usize, n: usize) -> Result<Self, LinalgError> {
        Mask::new(m, n, (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect())
    }

    pub fn nrows(&self) -> usize {
        self.m
    }

    pub fn ncols(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().copied().zip(self.cols.iter().copied())
    }
}

fn same_mask(a: &Arc<Mask>, b: &Arc<Mask>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// The observed data `X_Ω` in coordinate form.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix {
    mask: Arc<Mask>,
    values: Vec<f64>,
}

impl ObservedMatrix {
    /// Builds from `(row, col, value)` triples in any order, 0-based.
    pub fn from_entries(m: usize, n: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self, LinalgError> {
        let mut entries = entries;
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        if let Some(&(row, col, _)) = entries.iter().find(|e| !e.2.is_finite()) {
            return Err(LinalgError::NonFinite { row, col });
        }
        let values = entries.iter().map(|e| e.2).collect();
        let mask = Mask::new(m, n, entries.into_iter().map(|e| (e.0, e.1)).collect())?;
        Ok(ObservedMatrix { mask: Arc::new(mask), values })
    }

    /// Pairs an existing mask with values in its canonical order.
    pub fn with_values(mask: Arc<Mask>, values: Vec<f64>) -> Result<Self, LinalgError> {
        if values.len() != mask.len() {
            return Err(LinalgError::Dimension(format!("{} values for {} observed cells", values.len(), mask.len())));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { row: mask.rows[k], col: mask.cols[k] });
        }
        Ok(ObservedMatrix { mask, values })
    }

    /// Samples a dense matrix on `mask`.
    pub fn sample(dense: &DMatrix<f64>, mask: Arc<Mask>) -> Result<Self, LinalgError> {
        if dense.shape() != (mask.m, mask.n) {
            return Err(LinalgError::Dimension(format!("dense {:?} vs mask {}x{}", dense.shape(), mask.m, mask.n)));
        }
        let values = mask.iter().map(|(i, j)| dense[(i, j)]).collect();
        ObservedMatrix::with_values(mask, values)
    }

    pub fn mask(&self) -> &Arc<Mask> {
        &self.mask
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.mask.m
    }

    pub fn ncols(&self) -> usize {
        self.mask.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.mask.iter().zip(self.values.iter()).map(|((i, j), &v)| (i, j, v))
    }

    /// Mean squared observed value `Σ_Ω X² / |Ω|`.
    pub fn mean_energy(&self) -> f64 {
        frob_norm_sq_omega(&self.values) / self.values.len() as f64
    }
}

/// Values on Ω that are not observations: residuals, the outlier estimate
/// `S`, or the shrinkage target `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseResidual {
    mask: Arc<Mask>,
    values: Vec<f64>,
}

impl SparseResidual {
    pub fn zeros(mask: Arc<Mask>) -> Self {
        let values = vec![0.0; mask.len()];
        SparseResidual { mask, values }
    }

    pub fn from_values(mask: Arc<Mask>, values: Vec<f64>) -> Result<Self, LinalgError> {
        if values.len() != mask.len() {
            return Err(LinalgError::Dimension(format!("{} values for {} observed cells", values.len(), mask.len())));
        }
        Ok(SparseResidual { mask, values })
    }

    pub fn mask(&self) -> &Arc<Mask> {
        &self.mask
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Embeds into a dense m×n matrix, zero off Ω. For tests and small outputs.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.mask.m, self.mask.n);
        for ((i, j), &v) in self.mask.iter().zip(&self.values) {
            out[(i, j)] = v;
        }
        out
    }
}

/// Low-rank factors `U` (m×r) and `V` (r×n) of the iterate `M = UV`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl FactorPair {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self, LinalgError> {
        let r = u.ncols();
        if v.nrows() != r {
            return Err(LinalgError::Dimension(format!(
                "U is {}x{} but V is {}x{}",
                u.nrows(),
                r,
                v.nrows(),
                v.ncols()
            )));
        }
        if r == 0 || r > u.nrows().min(v.ncols()) {
            return Err(LinalgError::Dimension(format!("rank {r} invalid for a {}x{} matrix", u.nrows(), v.ncols())));
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(LinalgError::Dimension("factors contain non-finite entries".into()));
        }
        Ok(FactorPair { u, v })
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.ncols()
    }

    /// The dense product `UV`.
    pub fn product(&self) -> DMatrix<f64> {
        &self.u * &self.v
    }

    fn check_mask(&self, mask: &Mask) -> Result<(), LinalgError> {
        if (self.nrows(), self.ncols()) != (mask.m, mask.n) {
            return Err(LinalgError::Dimension(format!(
                "factors give {}x{} but mask is {}x{}",
                self.nrows(),
                self.ncols(),
                mask.m,
                mask.n
            )));
        }
        Ok(())
    }
}

/// `(A B)_{ij}` for every `(i, j)` in Ω, with `A` m×r and `B` r×n.
fn masked_product(a: &DMatrix<f64>, b: &DMatrix<f64>, mask: &Mask) -> Vec<f64> {
    // column i of Aᵀ is row i of A, contiguous in column-major storage
    let at = a.transpose();
    let r = a.ncols();
    mask.iter()
        .map(|(i, j)| {
            let ar = &at.as_slice()[i * r..(i + 1) * r];
            let bc = &b.as_slice()[j * r..(j + 1) * r];
            ar.iter().zip(bc).map(|(x, y)| x * y).sum()
        })
        .collect()
}

/// `(UV)_Ω` without forming `UV`.
pub fn product_on_omega(f: &FactorPair, mask: &Mask) -> Result<Vec<f64>, LinalgError> {
    f.check_mask(mask)?;
    Ok(masked_product(&f.u, &f.v, mask))
}

/// `X_Ω − (UV)_Ω − S_Ω`, with `S = 0` when `s` is `None`.
pub fn residual(x: &ObservedMatrix, f: &FactorPair, s: Option<&SparseResidual>) -> Result<SparseResidual, LinalgError> {
    if let Some(s) = s {
        if !same_mask(&x.mask, &s.mask) {
            return Err(LinalgError::MaskMismatch);
        }
    }
    let mut values = product_on_omega(f, &x.mask)?;
    for (r, &xv) in values.iter_mut().zip(&x.values) {
        *r = xv - *r;
    }
    if let Some(s) = s {
        for (r, &sv) in values.iter_mut().zip(&s.values) {
            *r -= sv;
        }
    }
    Ok(SparseResidual { mask: Arc::clone(&x.mask), values })
}

/// `Σ v²` in storage order.
pub fn frob_norm_sq_omega(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum()
}

fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `R Vᵀ` (m×r), accumulated over Ω.
fn residual_times_vt(res: &SparseResidual, v: &DMatrix<f64>) -> DMatrix<f64> {
    let mask = &res.mask;
    let r = v.nrows();
    // accumulate into Gᵀ (r×m) so each row update is contiguous
    let mut gt = DMatrix::zeros(r, mask.m);
    {
        let g = gt.as_mut_slice();
        let vs = v.as_slice();
        for ((i, j), &val) in mask.iter().zip(&res.values) {
            let row = &mut g[i * r..(i + 1) * r];
            for (acc, &vk) in row.iter_mut().zip(&vs[j * r..(j + 1) * r]) {
                *acc += val * vk;
            }
        }
    }
    gt.transpose()
}

/// `Uᵀ R` (r×n), accumulated over Ω.
fn ut_times_residual(u: &DMatrix<f64>, res: &SparseResidual) -> DMatrix<f64> {
    let mask = &res.mask;
    let r = u.ncols();
    let ut = u.transpose();
    let mut g = DMatrix::zeros(r, mask.n);
    {
        let gs = g.as_mut_slice();
        let us = ut.as_slice();
        for ((i, j), &val) in mask.iter().zip(&res.values) {
            let col = &mut gs[j * r..(j + 1) * r];
            for (acc, &uk) in col.iter_mut().zip(&us[i * r..(i + 1) * r]) {
                *acc += val * uk;
            }
        }
    }
    g
}

/// Cholesky of an r×r Gram matrix with a conditioning check.
fn gram_cholesky(gram: DMatrix<f64>, factor: &'static str) -> Result<Cholesky<f64, nalgebra::Dyn>, LinalgError> {
    let chol = Cholesky::new(gram).ok_or(LinalgError::RankDeficient { factor, rcond: 0.0 })?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    // cond₂(LLᵀ) ≥ (max lᵢᵢ / min lᵢᵢ)²
    let rcond = if hi > 0.0 { (lo / hi).powi(2) } else { 0.0 };
    if !(rcond >= RCOND_FLOOR) {
        return Err(LinalgError::RankDeficient { factor, rcond });
    }
    Ok(chol)
}

/// Scaled direction for U: `dU = gU (VVᵀ)⁻¹`.
fn scale_u(g_u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let chol = gram_cholesky(v * v.transpose(), "V")?;
    Ok(chol.solve(&g_u.transpose()).transpose())
}

/// Scaled direction for V: `dV = (UᵀU)⁻¹ gV`.
fn scale_v(g_v: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let chol = gram_cholesky(u.transpose() * u, "U")?;
    Ok(chol.solve(g_v))
}

/// Scaled and unscaled descent directions for both factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Directions {
    pub d_u: DMatrix<f64>,
    pub d_v: DMatrix<f64>,
    pub g_u: DMatrix<f64>,
    pub g_v: DMatrix<f64>,
}

/// Directions at a fixed point `(U, V)` given the residual `R = H − (UV)_Ω`.
pub fn grad_directions(h: &SparseResidual, f: &FactorPair) -> Result<Directions, LinalgError> {
    f.check_mask(&h.mask)?;
    let g_u = residual_times_vt(h, &f.v);
    let g_v = ut_times_residual(&f.u, h);
    let d_u = scale_u(&g_u, &f.v)?;
    let d_v = scale_v(&g_v, &f.u)?;
    Ok(Directions { d_u, d_v, g_u, g_v })
}

fn line_search(
    g: &DMatrix<f64>,
    d: &DMatrix<f64>,
    image_on_omega: &[f64],
    factor: &'static str,
) -> Result<f64, LinalgError> {
    if d.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let den = frob_norm_sq_omega(image_on_omega);
    if den == 0.0 || !den.is_finite() {
        return Err(LinalgError::DegenerateDirection { factor });
    }
    Ok(frob_inner(g, d) / den)
}

/// Exact line-search step sizes along `dU` and `dV` at the same `(U, V)`.
pub fn sasd_step_sizes(dirs: &Directions, f: &FactorPair, mask: &Mask) -> Result<(f64, f64), LinalgError> {
    f.check_mask(mask)?;
    let mu_u = line_search(&dirs.g_u, &dirs.d_u, &masked_product(&dirs.d_u, &f.v, mask), "U")?;
    let mu_v = line_search(&dirs.g_v, &dirs.d_v, &masked_product(&f.u, &dirs.d_v, mask), "V")?;
    Ok((mu_u, mu_v))
}

/// Diagnostics from one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepInfo {
    pub mu_u: f64,
    pub mu_v: f64,
    /// `H − (UV)_Ω` after both updates.
    pub residual: SparseResidual,
}

/// One SASD sweep on `h(U, V) = ½‖H − (UV)_Ω‖²`: update U, then V using
/// the updated U.
pub fn sasd_sweep(target: &SparseResidual, f: &mut FactorPair) -> Result<SweepInfo, LinalgError> {
    f.check_mask(&target.mask)?;
    let mask = Arc::clone(&target.mask);

    let mut res = target.clone();
    for (r, p) in res.values.iter_mut().zip(masked_product(&f.u, &f.v, &mask)) {
        *r -= p;
    }

    let g_u = residual_times_vt(&res, &f.v);
    let d_u = scale_u(&g_u, &f.v)?;
    let image = masked_product(&d_u, &f.v, &mask);
    let mu_u = line_search(&g_u, &d_u, &image, "U")?;
    if mu_u != 0.0 {
        f.u += &d_u * mu_u;
        for (r, p) in res.values.iter_mut().zip(&image) {
            *r -= mu_u * p;
        }
    }

    let g_v = ut_times_residual(&f.u, &res);
    let d_v = scale_v(&g_v, &f.u)?;
    let image = masked_product(&f.u, &d_v, &mask);
    let mu_v = line_search(&g_v, &d_v, &image, "V")?;
    if mu_v != 0.0 {
        f.v += &d_v * mu_v;
        for (r, p) in res.values.iter_mut().zip(&image) {
            *r -= mu_v * p;
        }
    }

    Ok(SweepInfo { mu_u, mu_v, residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_mask(rng: &mut ChaCha8Rng, m: usize, n: usize, k: usize) -> Arc<Mask> {
        let idx = rand::seq::index::sample(rng, m * n, k);
        Arc::new(Mask::new(m, n, idx.iter().map(|t| (t / n, t % n)).collect()).unwrap())
    }

    #[test]
    fn mask_rejects_bad_input() {
        assert_eq!(Mask::new(2, 2, vec![]), Err(LinalgError::Empty));
        assert!(matches!(Mask::new(2, 2, vec![(2, 0)]), Err(LinalgError::OutOfBounds { .. })));
        assert_eq!(Mask::new(2, 2, vec![(1, 1), (0, 0), (1, 1)]), Err(LinalgError::Duplicate { row: 1, col: 1 }));
        let m = Mask::new(3, 3, vec![(2, 0), (0, 1), (0, 0)]).unwrap();
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![(0, 0), (0, 1), (2, 0)]);
    }

    #[test]
    fn observed_values_follow_canonical_order() {
        let x = ObservedMatrix::from_entries(2, 2, vec![(1, 0, 3.0), (0, 1, 2.0)]).unwrap();
        assert_eq!(x.entries().collect::<Vec<_>>(), vec![(0, 1, 2.0), (1, 0, 3.0)]);
        assert!(matches!(
            ObservedMatrix::from_entries(2, 2, vec![(0, 0, f64::NAN)]),
            Err(LinalgError::NonFinite { .. })
        ));
    }

    #[test]
    fn product_identity_factor() {
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let f = FactorPair::new(DMatrix::identity(3, 3), v.clone()).unwrap_err();
        // r = 3 > min(3, 2): invalid
        assert!(matches!(f, LinalgError::Dimension(_)));

        let v = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let f = FactorPair::new(DMatrix::identity(2, 2), v.clone()).unwrap();
        let mask = Mask::full(2, 3).unwrap();
        assert_eq!(product_on_omega(&f, &mask).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn product_rank_one_ones() {
        let f = FactorPair::new(DMatrix::from_element(4, 1, 1.0), DMatrix::from_element(1, 5, 1.0)).unwrap();
        let mask = Mask::new(4, 5, vec![(0, 4), (3, 2), (1, 1)]).unwrap();
        assert_eq!(product_on_omega(&f, &mask).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn product_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = FactorPair::new(random_matrix(&mut rng, 5, 2), random_matrix(&mut rng, 2, 4)).unwrap();
        let mask = random_mask(&mut rng, 5, 4, 10);
        let dense = &f.u * &f.v;
        let got = product_on_omega(&f, &mask).unwrap();
        for ((i, j), g) in mask.iter().zip(got) {
            assert!((dense[(i, j)] - g).abs() < 1e-15);
        }
    }

    #[test]
    fn product_dimension_mismatch() {
        let f = FactorPair::new(DMatrix::zeros(3, 1), DMatrix::zeros(1, 3)).unwrap();
        let mask = Mask::full(2, 3).unwrap();
        assert!(matches!(product_on_omega(&f, &mask), Err(LinalgError::Dimension(_))));
    }

    #[test]
    fn residual_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = FactorPair::new(random_matrix(&mut rng, 4, 2), random_matrix(&mut rng, 2, 3)).unwrap();
        let mask = random_mask(&mut rng, 4, 3, 6);
        let fitted = ObservedMatrix::sample(&f.product(), Arc::clone(&mask)).unwrap();
        let r = residual(&fitted, &f, None).unwrap();
        assert!(r.values().iter().all(|v| v.abs() < 1e-15));

        let zero = ObservedMatrix::with_values(Arc::clone(&mask), vec![0.0; 6]).unwrap();
        let r = residual(&zero, &f, None).unwrap();
        let p = product_on_omega(&f, &mask).unwrap();
        assert_eq!(r.values(), p.iter().map(|v| -v).collect::<Vec<_>>().as_slice());

        let x = ObservedMatrix::with_values(Arc::clone(&mask), (0..6).map(|k| k as f64).collect()).unwrap();
        let s = SparseResidual::from_values(Arc::clone(&mask), vec![0.5; 6]).unwrap();
        let r = residual(&x, &f, Some(&s)).unwrap();
        let dense = f.product();
        for (k, (i, j)) in mask.iter().enumerate() {
            assert!((r.values()[k] - (k as f64 - dense[(i, j)] - 0.5)).abs() < 1e-14);
        }

        let other = SparseResidual::zeros(Arc::new(Mask::full(4, 3).unwrap()));
        assert_eq!(residual(&x, &f, Some(&other)), Err(LinalgError::MaskMismatch));
    }

    #[test]
    fn zero_residual_gives_zero_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = FactorPair::new(random_matrix(&mut rng, 6, 2), random_matrix(&mut rng, 2, 5)).unwrap();
        let mask = random_mask(&mut rng, 6, 5, 20);
        let dirs = grad_directions(&SparseResidual::zeros(Arc::clone(&mask)), &f).unwrap();
        for m in [&dirs.d_u, &dirs.d_v, &dirs.g_u, &dirs.g_v] {
            assert!(m.iter().all(|&x| x == 0.0));
        }
        assert_eq!(sasd_step_sizes(&dirs, &f, &mask).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn rank_one_direction_is_scalar_division() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = FactorPair::new(random_matrix(&mut rng, 4, 1), random_matrix(&mut rng, 1, 3)).unwrap();
        let mask = Arc::new(Mask::full(4, 3).unwrap());
        let res = SparseResidual::from_values(Arc::clone(&mask), (0..12).map(|k| k as f64 - 5.0).collect()).unwrap();
        let dirs = grad_directions(&res, &f).unwrap();
        let vvt: f64 = f.v.iter().map(|x| x * x).sum();
        for (d, g) in dirs.d_u.iter().zip(dirs.g_u.iter()) {
            assert!((d - g / vvt).abs() < 1e-13);
        }
    }

    #[test]
    fn directions_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let f = FactorPair::new(random_matrix(&mut rng, 6, 2), random_matrix(&mut rng, 2, 5)).unwrap();
        let mask = random_mask(&mut rng, 6, 5, 18);
        let res =
            SparseResidual::from_values(Arc::clone(&mask), (0..18).map(|_| rng.random_range(-2.0..2.0)).collect())
                .unwrap();
        let dirs = grad_directions(&res, &f).unwrap();

        let rd = res.to_dense();
        let g_u = &rd * f.v.transpose();
        let g_v = f.u.transpose() * &rd;
        let d_u = &g_u * (&f.v * f.v.transpose()).try_inverse().unwrap();
        let d_v = (f.u.transpose() * &f.u).try_inverse().unwrap() * &g_v;
        assert!((dirs.g_u - g_u).amax() < 1e-12);
        assert!((dirs.g_v - g_v).amax() < 1e-12);
        assert!((dirs.d_u - d_u).amax() < 1e-10);
        assert!((dirs.d_v - d_v).amax() < 1e-10);
    }

    #[test]
    fn single_entry_step_size_by_hand() {
        // 2x2, r = 1, Ω = {(0, 0)}; U = [1, 2]ᵀ, V = [3, 1], H₀₀ = 10.
        // R₀₀ = 10 − 3 = 7, gU = [21, 0]ᵀ, VVᵀ = 10, dU = [2.1, 0]ᵀ,
        // (dU V)_Ω = 6.3, μ_U = ⟨gU, dU⟩ / 6.3² = 44.1 / 39.69.
        let f =
            FactorPair::new(DMatrix::from_column_slice(2, 1, &[1.0, 2.0]), DMatrix::from_row_slice(1, 2, &[3.0, 1.0]))
                .unwrap();
        let mask = Arc::new(Mask::new(2, 2, vec![(0, 0)]).unwrap());
        let res = SparseResidual::from_values(Arc::clone(&mask), vec![7.0]).unwrap();
        let dirs = grad_directions(&res, &f).unwrap();
        let (mu_u, mu_v) = sasd_step_sizes(&dirs, &f, &mask).unwrap();
        assert!((mu_u - 44.1 / 39.69).abs() < 1e-14);
        // gV = [7, 0], UᵀU = 5, dV = [1.4, 0], (U dV)_Ω = 1.4, μ_V = 9.8 / 1.96
        assert!((mu_v - 9.8 / 1.96).abs() < 1e-14);
    }

    #[test]
    fn sweep_never_increases_h() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (m, n, r) = (12, 9, 3);
            let mut f = FactorPair::new(random_matrix(&mut rng, m, r), random_matrix(&mut rng, r, n)).unwrap();
            let mask = random_mask(&mut rng, m, n, 60);
            let target =
                SparseResidual::from_values(Arc::clone(&mask), (0..60).map(|_| rng.random_range(-3.0..3.0)).collect())
                    .unwrap();
            let before = {
                let x = ObservedMatrix::with_values(Arc::clone(&mask), target.values().to_vec()).unwrap();
                frob_norm_sq_omega(residual(&x, &f, None).unwrap().values())
            };
            let info = sasd_sweep(&target, &mut f).unwrap();
            let x = ObservedMatrix::with_values(Arc::clone(&mask), target.values().to_vec()).unwrap();
            let fresh = residual(&x, &f, None).unwrap();
            let after = frob_norm_sq_omega(fresh.values());
            assert!(after <= before * (1.0 + 1e-12), "seed {seed}: {before} -> {after}");
            for (a, b) in fresh.values().iter().zip(info.residual.values()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rank_deficient_gram_is_reported() {
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let v = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, 1.0]);
        let f = FactorPair::new(u, v).unwrap();
        let mask = Arc::new(Mask::full(3, 3).unwrap());
        let res = SparseResidual::from_values(Arc::clone(&mask), vec![1.0; 9]).unwrap();
        assert!(matches!(grad_directions(&res, &f), Err(LinalgError::RankDeficient { factor: "U", .. })));
    }

    #[test]
    fn frob_norm_cases() {
        assert_eq!(frob_norm_sq_omega(&[]), 0.0);
        assert_eq!(frob_norm_sq_omega(&[0.0, 0.0]), 0.0);
        assert_eq!(frob_norm_sq_omega(&[3.0]), 9.0);
        let v = [1.5, -2.0, 0.25, 4.0];
        let mut naive = 0.0;
        for x in v {
            naive += x * x;
        }
        assert_eq!(frob_norm_sq_omega(&v), naive);
    }
}

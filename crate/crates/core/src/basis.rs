//! Truncated Fourier-Bessel basis on a Cartesian grid.
//!
//! The basis keeps every `psi^{kq}(r, theta) = N_kq J_k(R_kq r) e^{i k theta}`
//! with `R_kq <= pi L` and `|k| <= 2L`. Only `k >= 0` is materialized. For real images the
//! `-k` terms follow from `a_{-k,q} = (-1)^k conj(a_{k,q})`, so the design
//! matrix is stored in an equivalent real form with unit-norm columns
//!
//! ```text
//! k = 0 :  psi^{0q}
//! k > 0 :  sqrt(2) Re psi^{kq},  sqrt(2) Im psi^{kq}
//! ```
//!
//! The real form is related to the full complex `Psi` (columns for `+k` and
//! `-k`) by a unitary change of columns, so both share singular values and
//! Gram spectrum.
//!
//! On the D4-symmetric grid the Gram matrix of the real form splits exactly
//! into six classes (cosine/sine columns, `k mod 4` in {0}, {2}, {1, 3}), so
//! the pseudoinverse is assembled from one thin SVD per class.

use std::f64::consts::{PI, SQRT_2};

use faer::{Mat, MatRef};
use num_complex::Complex64;

use crate::bessel::{jn, RootTable};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Relative singular-value floor below which the design matrix is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-8;

const CACHE_MAGIC: &[u8; 4] = b"FBB1";

/// Admissible `(k, q)` pairs with `R_kq <= pi L` and `k <= 2L`, ordered by
/// `k` then `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisIndexSet {
    bandlimit: usize,
    roots: Vec<Vec<f64>>,
    norms: Vec<Vec<f64>>,
    pairs: Vec<(u32, u32)>,
    real_offsets: Vec<usize>,
    real_dim: usize,
}

impl BasisIndexSet {
    pub fn truncate(bandlimit: usize) -> Result<Self> {
        if bandlimit < 2 {
            return Err(Error::InvalidArgument(format!("bandlimit must be >= 2, got {bandlimit}")));
        }
        if bandlimit > crate::bessel::MAX_BANDLIMIT {
            return Err(Error::InvalidArgument(format!(
                "bandlimit {bandlimit} above supported ceiling {}",
                crate::bessel::MAX_BANDLIMIT
            )));
        }
        let table = RootTable::build(PI * bandlimit as f64);
        Self::from_root_table(bandlimit, &table)
    }

    /// Selects the admissible pairs from a table tabulated at least up to `pi L`.
    pub fn from_root_table(bandlimit: usize, table: &RootTable) -> Result<Self> {
        let cutoff = PI * bandlimit as f64;
        if table.x_max() < cutoff * (1.0 - 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "root table cutoff {} below pi L = {cutoff}",
                table.x_max()
            )));
        }
        let mut roots = Vec::new();
        let k_cap = (2 * bandlimit).min(table.order_count().saturating_sub(1)) as u32;
        for k in 0..=k_cap {
            let admissible: Vec<f64> = table.roots(k).iter().copied().filter(|&r| r <= cutoff).collect();
            if admissible.is_empty() {
                break;
            }
            roots.push(admissible);
        }
        let norms = roots
            .iter()
            .enumerate()
            .map(|(k, rs)| rs.iter().map(|&r| normalization(k as u32, r)).collect())
            .collect();
        Ok(Self::assemble(bandlimit, roots, norms))
    }

    fn assemble(bandlimit: usize, roots: Vec<Vec<f64>>, norms: Vec<Vec<f64>>) -> Self {
        let mut pairs = Vec::new();
        let mut real_offsets = Vec::with_capacity(roots.len());
        let mut real_dim = 0;
        for (k, rs) in roots.iter().enumerate() {
            real_offsets.push(real_dim);
            real_dim += if k == 0 { rs.len() } else { 2 * rs.len() };
            pairs.extend((1..=rs.len() as u32).map(|q| (k as u32, q)));
        }
        BasisIndexSet {
            bandlimit,
            roots,
            norms,
            pairs,
            real_offsets,
            real_dim,
        }
    }

    pub fn bandlimit(&self) -> usize {
        self.bandlimit
    }

    /// `(k, q)` pairs with `k >= 0`.
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    /// Number of stored `k >= 0` pairs.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of basis functions counting `+k` and `-k` separately.
    pub fn signed_count(&self) -> usize {
        self.real_dim
    }

    /// Number of angular frequencies `0..=k_max`.
    pub fn order_count(&self) -> usize {
        self.roots.len()
    }

    pub fn max_k(&self) -> Option<u32> {
        self.roots.len().checked_sub(1).map(|k| k as u32)
    }

    /// Block size `p_k` (zero beyond `k_max`).
    pub fn p(&self, k: u32) -> usize {
        self.roots.get(k as usize).map_or(0, Vec::len)
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.roots.iter().map(Vec::len).collect()
    }

    pub fn root(&self, k: u32, q: u32) -> Option<f64> {
        self.roots.get(k as usize)?.get((q as usize).checked_sub(1)?).copied()
    }

    pub fn roots(&self, k: u32) -> &[f64] {
        self.roots.get(k as usize).map_or(&[], Vec::as_slice)
    }

    pub fn normalization(&self, k: u32, q: u32) -> Option<f64> {
        self.norms.get(k as usize)?.get((q as usize).checked_sub(1)?).copied()
    }

    /// Length of the real coefficient vector (`p_0 + 2 * sum_{k>0} p_k`).
    pub fn real_dim(&self) -> usize {
        self.real_dim
    }

    /// First real-form index of block `k`. For `k > 0` the block holds
    /// `p_k` real parts followed by `p_k` imaginary parts.
    pub fn real_offset(&self, k: u32) -> usize {
        self.real_offsets[k as usize]
    }

    /// Position of `(k, q)` in [`pairs`](Self::pairs).
    pub fn pair_index(&self, k: u32, q: u32) -> Option<usize> {
        self.pairs.binary_search(&(k, q)).ok()
    }

    /// Continuous Fourier transform of `psi^{kq}` at polar frequency `(k0, phi0)`.
    pub fn analytic_ft(&self, k: u32, q: u32, k0: f64, phi0: f64) -> Option<Complex64> {
        self.root(k, q).map(|r| analytic_ft(k, q, r, k0, phi0))
    }

    /// Serializes `(k, q, R_kq, N_kq)` records in the `FBB1` cache layout.
    pub fn to_cache_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 24 * self.len());
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&(self.bandlimit as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for &(k, q) in &self.pairs {
            out.extend_from_slice(&k.to_le_bytes());
            out.extend_from_slice(&q.to_le_bytes());
            out.extend_from_slice(&self.root(k, q).unwrap_or_default().to_le_bytes());
            out.extend_from_slice(&self.normalization(k, q).unwrap_or_default().to_le_bytes());
        }
        out
    }

    /// Parses an `FBB1` cache. Records must be ordered by `k` then `q` with
    /// contiguous indices, increasing positive roots, and positive norms.
    pub fn from_cache_bytes(bytes: &[u8]) -> Result<Self> {
        const KIND: &str = "FBB1 basis cache";
        let mut r = crate::binio::Reader::new(bytes, KIND);
        r.magic(CACHE_MAGIC)?;
        let bandlimit = r.u32()? as usize;
        let count = r.u32()? as usize;
        if !(2..=crate::bessel::MAX_BANDLIMIT).contains(&bandlimit) {
            return Err(Error::format(KIND, format!("bandlimit {bandlimit} out of range")));
        }
        r.expect_remaining(count, 24)?;
        let cutoff = PI * bandlimit as f64;
        let mut roots: Vec<Vec<f64>> = Vec::new();
        let mut norms: Vec<Vec<f64>> = Vec::new();
        for i in 0..count {
            let k = r.u32()? as usize;
            let q = r.u32()? as usize;
            let root = r.f64()?;
            let norm = r.f64()?;
            if k > 2 * bandlimit {
                return Err(Error::format(KIND, format!("record {i}: order {k} above 2L")));
            }
            if k == roots.len() {
                roots.push(Vec::new());
                norms.push(Vec::new());
            } else if k + 1 != roots.len() {
                return Err(Error::format(KIND, format!("record {i}: orders not contiguous")));
            }
            let rs = roots.last_mut().expect("pushed above");
            if q != rs.len() + 1 {
                return Err(Error::format(KIND, format!("record {i}: radial index not contiguous")));
            }
            let increasing = rs.last().map_or(root > 0.0, |&prev| root > prev);
            if !root.is_finite() || !increasing || root > cutoff * (1.0 + 1e-12) {
                return Err(Error::format(KIND, format!("record {i}: invalid root {root}")));
            }
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::format(KIND, format!("record {i}: invalid normalization {norm}")));
            }
            rs.push(root);
            norms.last_mut().expect("pushed above").push(norm);
        }
        r.finish()?;
        Ok(Self::assemble(bandlimit, roots, norms))
    }
}

/// `N_kq = 1 / (sqrt(pi) |J_{k+1}(R_kq)|)`.
pub fn normalization(k: u32, root: f64) -> f64 {
    1.0 / (PI.sqrt() * jn(k + 1, root).abs())
}

/// Fourier transform of `psi^{kq}` with root `R_kq`:
/// `2 sqrt(pi) (-1)^q (-i)^k R J_k(2 pi k0) / ((2 pi k0)^2 - R^2) e^{i k phi0}`.
///
/// At `2 pi k0 = R` the removable singularity is replaced by its limit
/// `J_k(s) / (s^2 - R^2) -> J_k'(R) / (2R)`.
pub fn analytic_ft(k: u32, q: u32, root: f64, k0: f64, phi0: f64) -> Complex64 {
    let s = 2.0 * PI * k0.abs();
    let sign = if q.is_multiple_of(2) { 1.0 } else { -1.0 };
    let radial = if (s - root).abs() <= 1e-7 * root {
        root * crate::bessel::jn_derivative(k, root) / (2.0 * root)
    } else {
        root * jn(k, s) / (s * s - root * root)
    };
    let minus_i_pow = match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    };
    let phase = Complex64::from_polar(1.0, k as f64 * phi0);
    minus_i_pow * phase * (2.0 * PI.sqrt() * sign * radial)
}

/// Samples of the truncated basis on the masked grid points, in real form.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    grid: GridSpec,
    basis: BasisIndexSet,
    values: Mat<f64>,
}

impl DesignMatrix {
    pub fn build(grid: &GridSpec, basis: &BasisIndexSet) -> Result<Self> {
        if grid.bandlimit() != basis.bandlimit() {
            return Err(Error::InvalidArgument(format!(
                "grid built for L={} but basis for L={}",
                grid.bandlimit(),
                basis.bandlimit()
            )));
        }
        let radii = grid.distinct_radii();
        let points = grid.points();
        let radius_index: Vec<usize> = points
            .iter()
            .map(|p| radii.binary_search_by_key(&p.radius_key, |&(key, _)| key).expect("radius present"))
            .collect();
        let m = points.len();
        let mut values = Mat::<f64>::zeros(m, basis.real_dim());
        let mut radial = vec![0.0; radii.len()];
        let mut cos_k = vec![0.0; m];
        let mut sin_k = vec![0.0; m];
        for k in 0..basis.order_count() as u32 {
            for (i, p) in points.iter().enumerate() {
                let (s, c) = (k as f64 * p.theta).sin_cos();
                cos_k[i] = c;
                sin_k[i] = s;
            }
            let p_k = basis.p(k);
            let offset = basis.real_offset(k);
            for q in 1..=p_k as u32 {
                let root = basis.root(k, q).expect("q within p_k");
                let norm = basis.normalization(k, q).expect("q within p_k");
                for (slot, &(_, r)) in radial.iter_mut().zip(&radii) {
                    *slot = norm * jn(k, root * r);
                }
                let j = (q - 1) as usize;
                if k == 0 {
                    let col = values.col_as_slice_mut(offset + j);
                    for (v, &ri) in col.iter_mut().zip(&radius_index) {
                        *v = radial[ri];
                    }
                } else {
                    {
                        let col = values.col_as_slice_mut(offset + j);
                        for ((v, &ri), &c) in col.iter_mut().zip(&radius_index).zip(&cos_k) {
                            *v = SQRT_2 * radial[ri] * c;
                        }
                    }
                    let col = values.col_as_slice_mut(offset + p_k + j);
                    for ((v, &ri), &s) in col.iter_mut().zip(&radius_index).zip(&sin_k) {
                        *v = SQRT_2 * radial[ri] * s;
                    }
                }
            }
        }
        Ok(DesignMatrix {
            grid: grid.clone(),
            basis: basis.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn basis(&self) -> &BasisIndexSet {
        &self.basis
    }

    /// Real-form matrix, masked points by real coefficients.
    pub fn real_form(&self) -> MatRef<'_, f64> {
        self.values.as_ref()
    }

    /// Samples of `psi^{kq}` on the masked points (zero outside the disk by construction).
    pub fn column(&self, k: u32, q: u32) -> Option<Vec<Complex64>> {
        let p_k = self.basis.p(k);
        if q == 0 || q as usize > p_k {
            return None;
        }
        let j = self.basis.real_offset(k) + q as usize - 1;
        let re = self.values.col_as_slice(j);
        if k == 0 {
            return Some(re.iter().map(|&v| Complex64::new(v, 0.0)).collect());
        }
        let im = self.values.col_as_slice(j + p_k);
        Some(
            re.iter()
                .zip(im)
                .map(|(&a, &b)| Complex64::new(a / SQRT_2, b / SQRT_2))
                .collect(),
        )
    }

    /// Real-form indices grouped by grid-symmetry class. Columns in different
    /// classes are exactly orthogonal on a D4-symmetric grid.
    pub fn symmetry_classes(&self) -> Vec<Vec<usize>> {
        let mut classes = vec![Vec::new(); 6];
        for k in 0..self.basis.order_count() as u32 {
            let family = match k % 4 {
                0 => 0,
                2 => 1,
                _ => 2,
            };
            let p_k = self.basis.p(k);
            let offset = self.basis.real_offset(k);
            classes[family].extend(offset..offset + p_k);
            if k > 0 {
                classes[3 + family].extend(offset + p_k..offset + 2 * p_k);
            }
        }
        classes.retain(|c| !c.is_empty());
        classes
    }

    fn class_matrix(&self, idx: &[usize]) -> Mat<f64> {
        let m = self.values.nrows();
        let mut sub = Mat::<f64>::zeros(m, idx.len());
        for (j, &src) in idx.iter().enumerate() {
            sub.col_as_slice_mut(j).copy_from_slice(self.values.col_as_slice(src));
        }
        sub
    }

    /// Singular values of the design matrix, descending.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        let mut all = Vec::with_capacity(self.basis.real_dim());
        for idx in self.symmetry_classes() {
            let sub = self.class_matrix(&idx);
            let s = sub
                .singular_values()
                .map_err(|_| Error::Convergence { block: 0 })?;
            all.extend(s);
        }
        all.sort_by(|a, b| b.total_cmp(a));
        check_rank(&all)?;
        Ok(all)
    }
}

fn check_rank(singular: &[f64]) -> Result<()> {
    let largest = singular.first().copied().unwrap_or(0.0);
    let smallest = singular.last().copied().unwrap_or(0.0);
    if largest <= 0.0 {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let ratio = smallest / largest;
    if !(ratio > RANK_TOLERANCE) {
        return Err(Error::RankDeficient { ratio });
    }
    Ok(())
}

/// Eigenvalues of `((1/L^2) Psi^dagger Psi)^{-1}`, descending.
///
/// The `1/L^2` pixel-area weight turns the Gram matrix into a Riemann sum of
/// the unit-normalized continuous inner products, so a unitary transform
/// gives eigenvalues of exactly 1.
pub fn gram_spectrum(design: &DesignMatrix) -> Result<Vec<f64>> {
    let area = design.grid().area_element();
    let mut eig: Vec<f64> = design
        .singular_values()?
        .into_iter()
        .map(|s| 1.0 / (area * s * s))
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

/// How `(Psi^dagger Psi)^{-1}` is realized when mapping images to coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PinvMode {
    /// Moore-Penrose pseudoinverse from the SVD.
    #[default]
    Exact,
    /// Replace the area-weighted inverse Gram matrix by the identity,
    /// giving `a = (1/L^2) Psi^dagger I`.
    Identity,
}

/// Linear map from masked pixel vectors to real-form coefficients.
#[derive(Debug, Clone)]
pub struct Pseudoinverse {
    mode: PinvMode,
    matrix: Mat<f64>,
    singular_values: Vec<f64>,
}

impl Pseudoinverse {
    pub fn new(design: &DesignMatrix, mode: PinvMode) -> Result<Self> {
        match mode {
            PinvMode::Exact => Self::exact(design),
            PinvMode::Identity => {
                let area = design.grid().area_element();
                let a = design.real_form();
                let matrix = Mat::from_fn(a.ncols(), a.nrows(), |i, j| area * a[(j, i)]);
                Ok(Pseudoinverse {
                    mode,
                    matrix,
                    singular_values: Vec::new(),
                })
            }
        }
    }

    fn exact(design: &DesignMatrix) -> Result<Self> {
        let m = design.real_form().nrows();
        let n = design.real_form().ncols();
        let mut matrix = Mat::<f64>::zeros(n, m);
        let mut singular = Vec::with_capacity(n);
        for idx in design.symmetry_classes() {
            let sub = design.class_matrix(&idx);
            let svd = sub.thin_svd().map_err(|_| Error::Convergence { block: 0 })?;
            let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
            let largest = s.first().copied().unwrap_or(0.0);
            if s.iter().any(|&v| !(v > RANK_TOLERANCE * largest)) {
                let smallest = s.iter().copied().fold(f64::INFINITY, f64::min);
                return Err(Error::RankDeficient {
                    ratio: smallest / largest,
                });
            }
            singular.extend_from_slice(&s);
            // pinv = V S^{-1} U^T
            let v = svd.V();
            let scaled_v = Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] / s[j]);
            let block = &scaled_v * svd.U().transpose();
            for (r, &dst) in idx.iter().enumerate() {
                for c in 0..m {
                    matrix[(dst, c)] = block[(r, c)];
                }
            }
        }
        singular.sort_by(|a, b| b.total_cmp(a));
        check_rank(&singular)?;
        Ok(Pseudoinverse {
            mode: PinvMode::Exact,
            matrix,
            singular_values: singular,
        })
    }

    pub fn mode(&self) -> PinvMode {
        self.mode
    }

    /// Real-form coefficients by masked pixels.
    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    /// Singular values of the design matrix (empty in identity mode).
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn apply(&self, masked: &[f64]) -> Result<Vec<f64>> {
        if masked.len() != self.matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.ncols(),
                found: masked.len(),
            });
        }
        let x = MatRef::from_column_major_slice(masked, masked.len(), 1);
        let y = &self.matrix * x;
        Ok(y.col_as_slice(0).to_vec())
    }
}

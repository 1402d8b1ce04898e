//! Images to truncated Fourier-Bessel coefficients and back.
//!
//! Coefficients are stored for `k >= 0` only, dense per `k`. For real images
//! the negative frequencies are implied by `a_{-k,q} = (-1)^k conj(a_{k,q})`.

use std::f64::consts::SQRT_2;

use faer::{Mat, MatRef};
use num_complex::Complex64;

use crate::basis::{BasisIndexSet, DesignMatrix, PinvMode, Pseudoinverse};
use crate::binio::{put_f64, put_u32, Reader};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

const COEFF_MAGIC: &[u8; 4] = b"FBC1";

/// Images per matrix product in the batch paths.
const BATCH: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSet {
    bandlimit: usize,
    blocks: Vec<Vec<Complex64>>,
}

impl CoeffSet {
    pub fn zeros(basis: &BasisIndexSet) -> Self {
        CoeffSet {
            bandlimit: basis.bandlimit(),
            blocks: basis
                .block_sizes()
                .into_iter()
                .map(|p| vec![Complex64::new(0.0, 0.0); p])
                .collect(),
        }
    }

    /// Builds a set from per-`k` blocks, checking the sizes against `basis`.
    pub fn from_blocks(basis: &BasisIndexSet, blocks: Vec<Vec<Complex64>>) -> Result<Self> {
        let sizes = basis.block_sizes();
        if blocks.len() != sizes.len() {
            return Err(Error::DimensionMismatch {
                expected: sizes.len(),
                found: blocks.len(),
            });
        }
        for (b, &p) in blocks.iter().zip(&sizes) {
            if b.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: b.len(),
                });
            }
        }
        Ok(CoeffSet {
            bandlimit: basis.bandlimit(),
            blocks,
        })
    }

    /// Inverse of [`to_real`](Self::to_real).
    pub fn from_real(basis: &BasisIndexSet, y: &[f64]) -> Result<Self> {
        if y.len() != basis.real_dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.real_dim(),
                found: y.len(),
            });
        }
        let blocks = (0..basis.order_count() as u32)
            .map(|k| {
                let p = basis.p(k);
                let off = basis.real_offset(k);
                if k == 0 {
                    y[off..off + p].iter().map(|&v| Complex64::new(v, 0.0)).collect()
                } else {
                    (0..p)
                        .map(|j| Complex64::new(y[off + j], -y[off + p + j]) / SQRT_2)
                        .collect()
                }
            })
            .collect();
        Ok(CoeffSet {
            bandlimit: basis.bandlimit(),
            blocks,
        })
    }

    /// Coordinates in the real-form design matrix: `a_{0q}` for `k = 0`, then
    /// `sqrt(2) Re a` and `-sqrt(2) Im a` for each `k > 0`. The imaginary part
    /// of `a_{0q}` is dropped.
    pub fn to_real(&self) -> Vec<f64> {
        let dim: usize = self
            .blocks
            .iter()
            .enumerate()
            .map(|(k, b)| if k == 0 { b.len() } else { 2 * b.len() })
            .sum();
        let mut y = Vec::with_capacity(dim);
        for (k, b) in self.blocks.iter().enumerate() {
            if k == 0 {
                y.extend(b.iter().map(|a| a.re));
            } else {
                y.extend(b.iter().map(|a| SQRT_2 * a.re));
                y.extend(b.iter().map(|a| -SQRT_2 * a.im));
            }
        }
        y
    }

    pub fn bandlimit(&self) -> usize {
        self.bandlimit
    }

    pub fn order_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<Complex64>] {
        &self.blocks
    }

    pub fn block(&self, k: u32) -> &[Complex64] {
        self.blocks.get(k as usize).map_or(&[], |b| b.as_slice())
    }

    pub fn block_mut(&mut self, k: u32) -> &mut [Complex64] {
        self.blocks.get_mut(k as usize).map_or(&mut [], |b| b.as_mut_slice())
    }

    /// `a_{k,q}` with `q` starting at 1.
    pub fn get(&self, k: u32, q: u32) -> Option<Complex64> {
        let j = (q as usize).checked_sub(1)?;
        self.blocks.get(k as usize)?.get(j).copied()
    }

    pub fn set(&mut self, k: u32, q: u32, value: Complex64) -> Result<()> {
        let slot = (q as usize)
            .checked_sub(1)
            .and_then(|j| self.blocks.get_mut(k as usize)?.get_mut(j))
            .ok_or_else(|| Error::InvalidArgument(format!("no basis function ({k}, {q})")))?;
        *slot = value;
        Ok(())
    }

    /// Number of stored complex coefficients.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, Complex64)> + '_ {
        self.blocks.iter().enumerate().flat_map(|(k, b)| {
            b.iter()
                .enumerate()
                .map(move |(j, &a)| (k as u32, j as u32 + 1, a))
        })
    }

    fn check_same_shape(&self, other: &CoeffSet) -> Result<()> {
        if self.bandlimit != other.bandlimit || self.blocks.len() != other.blocks.len() {
            return Err(Error::InvalidArgument(format!(
                "coefficient sets for L={} and L={} cannot be combined",
                self.bandlimit, other.bandlimit
            )));
        }
        Ok(())
    }

    /// Counterclockwise rotation of the underlying image by `alpha` radians.
    pub fn steer(&self, alpha: f64) -> CoeffSet {
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let phase = Complex64::from_polar(1.0, -(k as f64) * alpha);
                b.iter().map(|&a| a * phase).collect()
            })
            .collect();
        CoeffSet {
            bandlimit: self.bandlimit,
            blocks,
        }
    }

    /// Reflection `theta -> pi - theta`, i.e. `x -> -x`.
    pub fn reflect(&self) -> CoeffSet {
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                b.iter().map(|a| a.conj() * sign).collect()
            })
            .collect();
        CoeffSet {
            bandlimit: self.bandlimit,
            blocks,
        }
    }

    /// `sum_{k,q} w_k |a_{k,q}|^2` with `w_0 = 1`, `w_k = 2` otherwise: the
    /// squared L2 norm of the image over the disk.
    pub fn weighted_norm_sqr(&self) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let w = if k == 0 { 1.0 } else { 2.0 };
                w * b.iter().map(|a| a.norm_sqr()).sum::<f64>()
            })
            .sum()
    }

    /// Largest `|Im a_{0q}|` relative to the largest coefficient magnitude.
    pub fn k0_imaginary_ratio(&self) -> f64 {
        let scale = self.iter().map(|(_, _, a)| a.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        self.block(0).iter().map(|a| a.im.abs()).fold(0.0, f64::max) / scale
    }

    pub fn scale(&self, factor: f64) -> CoeffSet {
        CoeffSet {
            bandlimit: self.bandlimit,
            blocks: self
                .blocks
                .iter()
                .map(|b| b.iter().map(|&a| a * factor).collect())
                .collect(),
        }
    }

    pub fn add(&self, other: &CoeffSet) -> Result<CoeffSet> {
        self.check_same_shape(other)?;
        Ok(CoeffSet {
            bandlimit: self.bandlimit,
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| x + y).collect())
                .collect(),
        })
    }

    pub fn sub(&self, other: &CoeffSet) -> Result<CoeffSet> {
        self.add(&other.scale(-1.0))
    }
}

/// Mean over all rotations and reflections of the images: the average of the
/// `k = 0` coefficients, zero elsewhere.
pub fn rotational_mean(sets: &[CoeffSet]) -> Result<CoeffSet> {
    let first = sets.first().ok_or(Error::Empty("coefficient list"))?;
    let mut mean = CoeffSet {
        bandlimit: first.bandlimit,
        blocks: first
            .blocks
            .iter()
            .map(|b| vec![Complex64::new(0.0, 0.0); b.len()])
            .collect(),
    };
    for s in sets {
        first.check_same_shape(s)?;
        for (m, a) in mean.blocks[0].iter_mut().zip(&s.blocks[0]) {
            *m += *a;
        }
    }
    let n = sets.len() as f64;
    for m in &mut mean.blocks[0] {
        *m /= n;
    }
    Ok(mean)
}

/// Subtracts the rotational mean; only `k = 0` coefficients change.
pub fn subtract_mean(sets: &[CoeffSet]) -> Result<Vec<CoeffSet>> {
    let mean = rotational_mean(sets)?;
    Ok(sets
        .iter()
        .map(|s| {
            let mut out = s.clone();
            for (a, m) in out.blocks[0].iter_mut().zip(&mean.blocks[0]) {
                *a -= *m;
            }
            out
        })
        .collect())
}

/// Design matrix and pseudoinverse for one grid.
#[derive(Debug, Clone)]
pub struct Expander {
    design: DesignMatrix,
    pinv: Pseudoinverse,
}

impl Expander {
    pub fn new(grid: &GridSpec, basis: &BasisIndexSet, mode: PinvMode) -> Result<Self> {
        let design = DesignMatrix::build(grid, basis)?;
        let pinv = Pseudoinverse::new(&design, mode)?;
        Ok(Expander { design, pinv })
    }

    /// Square `2L x 2L` grid with the exact pseudoinverse.
    pub fn square(bandlimit: usize) -> Result<Self> {
        let grid = GridSpec::square(bandlimit)?;
        let basis = BasisIndexSet::truncate(bandlimit)?;
        Self::new(&grid, &basis, PinvMode::Exact)
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn pinv(&self) -> &Pseudoinverse {
        &self.pinv
    }

    pub fn grid(&self) -> &GridSpec {
        self.design.grid()
    }

    pub fn basis(&self) -> &BasisIndexSet {
        self.design.basis()
    }

    fn masked_checked<T: Copy + Into<f64>>(&self, image: &[T]) -> Result<Vec<f64>> {
        let masked = self.grid().gather(image)?;
        if let Some(i) = masked.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(self.grid().points()[i].pixel));
        }
        Ok(masked)
    }

    /// Least-squares coefficients of one full image.
    pub fn expand<T: Copy + Into<f64>>(&self, image: &[T]) -> Result<CoeffSet> {
        let masked = self.masked_checked(image)?;
        let y = self.pinv.apply(&masked)?;
        CoeffSet::from_real(self.basis(), &y)
    }

    /// Expands many images with blocked matrix products.
    pub fn expand_all<T, S>(&self, images: &[S]) -> Result<Vec<CoeffSet>>
    where
        T: Copy + Into<f64>,
        S: AsRef<[T]>,
    {
        let m = self.grid().masked_count();
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(BATCH) {
            let mut x = Mat::<f64>::zeros(m, chunk.len());
            for (j, img) in chunk.iter().enumerate() {
                let masked = self.masked_checked(img.as_ref())?;
                x.col_as_slice_mut(j).copy_from_slice(&masked);
            }
            let y = self.pinv.matrix() * &x;
            for j in 0..chunk.len() {
                out.push(CoeffSet::from_real(self.basis(), y.col_as_slice(j))?);
            }
        }
        Ok(out)
    }

    fn check_coeffs(&self, c: &CoeffSet) -> Result<()> {
        let sizes = self.basis().block_sizes();
        if c.bandlimit != self.basis().bandlimit()
            || c.blocks.len() != sizes.len()
            || c.blocks.iter().zip(&sizes).any(|(b, &p)| b.len() != p)
        {
            return Err(Error::InvalidArgument(format!(
                "coefficients for L={} do not match basis for L={}",
                c.bandlimit,
                self.basis().bandlimit()
            )));
        }
        Ok(())
    }

    /// Values of `sum a_{kq} psi^{kq}` (both signs of `k`) at the masked points.
    pub fn reconstruct_masked(&self, c: &CoeffSet) -> Result<Vec<f64>> {
        self.check_coeffs(c)?;
        let y = c.to_real();
        let yv = MatRef::from_column_major_slice(&y, y.len(), 1);
        let v = self.design.real_form() * yv;
        Ok(v.col_as_slice(0).to_vec())
    }

    /// Full image; pixels outside the disk are zero.
    pub fn reconstruct(&self, c: &CoeffSet) -> Result<Vec<f64>> {
        self.grid().scatter(&self.reconstruct_masked(c)?)
    }

    pub fn reconstruct_all(&self, sets: &[CoeffSet]) -> Result<Vec<Vec<f64>>> {
        let dim = self.basis().real_dim();
        let mut out = Vec::with_capacity(sets.len());
        for chunk in sets.chunks(BATCH) {
            let mut y = Mat::<f64>::zeros(dim, chunk.len());
            for (j, c) in chunk.iter().enumerate() {
                self.check_coeffs(c)?;
                y.col_as_slice_mut(j).copy_from_slice(&c.to_real());
            }
            let v = self.design.real_form() * &y;
            for j in 0..chunk.len() {
                out.push(self.grid().scatter(v.col_as_slice(j))?);
            }
        }
        Ok(out)
    }
}

/// Serializes coefficient sets in the `FBC1` layout.
pub fn encode_coefficients(sets: &[CoeffSet], basis: &BasisIndexSet) -> Result<Vec<u8>> {
    let pairs = basis.len();
    let mut out = Vec::with_capacity(16 + sets.len() * pairs * 16);
    out.extend_from_slice(COEFF_MAGIC);
    put_u32(&mut out, to_u32(sets.len())?);
    put_u32(&mut out, to_u32(basis.bandlimit())?);
    put_u32(&mut out, to_u32(pairs)?);
    for s in sets {
        if s.bandlimit != basis.bandlimit() || s.len() != pairs {
            return Err(Error::InvalidArgument("coefficient set does not match basis".into()));
        }
        for (_, _, a) in s.iter() {
            put_f64(&mut out, a.re);
            put_f64(&mut out, a.im);
        }
    }
    Ok(out)
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} does not fit the file header")))
}

/// Header fields of an `FBC1` file: `(n, L, pair count)`.
pub fn coefficient_header(bytes: &[u8]) -> Result<(usize, usize, usize)> {
    let mut r = Reader::new(bytes, "coefficient file");
    r.magic(COEFF_MAGIC)?;
    Ok((r.u32()? as usize, r.u32()? as usize, r.u32()? as usize))
}

/// Parses an `FBC1` file whose header must agree with `basis`.
pub fn decode_coefficients(bytes: &[u8], basis: &BasisIndexSet) -> Result<Vec<CoeffSet>> {
    const KIND: &str = "coefficient file";
    let mut r = Reader::new(bytes, KIND);
    r.magic(COEFF_MAGIC)?;
    let n = r.u32()? as usize;
    let l = r.u32()? as usize;
    let pairs = r.u32()? as usize;
    if l != basis.bandlimit() || pairs != basis.len() {
        return Err(Error::format(
            KIND,
            format!(
                "header says L={l} with {pairs} pairs, expected L={} with {}",
                basis.bandlimit(),
                basis.len()
            ),
        ));
    }
    r.expect_remaining(n, pairs.saturating_mul(16))?;
    let mut sets = Vec::with_capacity(n);
    for _ in 0..n {
        let mut s = CoeffSet::zeros(basis);
        for b in &mut s.blocks {
            for a in b.iter_mut() {
                let re = r.f64()?;
                let im = r.f64()?;
                if !(re.is_finite() && im.is_finite()) {
                    return Err(Error::format(KIND, "non-finite coefficient"));
                }
                *a = Complex64::new(re, im);
            }
        }
        sets.push(s);
    }
    r.finish()?;
    Ok(sets)
}

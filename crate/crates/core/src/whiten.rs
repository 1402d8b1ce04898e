//! Per-block noise whitening of coefficients.
//!
//! White pixel noise of variance `sigma^2` maps to coefficient noise
//! `sigma^2 P P^T`, where `P` is the pseudoinverse. Its same-frequency part
//! `S_k` (times `L^2`) is close to the identity but not equal to it, mostly
//! because of basis functions near the Nyquist ring. Multiplying block `k` by
//! `L S_k^{-1/2}` makes the noise exactly white with variance `sigma^2` per
//! real degree of freedom, in pixel units. The same real matrix acts on real
//! and imaginary parts, so steering and reflection commute with it.

use faer::{Mat, MatRef};
use num_complex::Complex64;

use crate::basis::BasisIndexSet;
use crate::error::{Error, Result};
use crate::expansion::{CoeffSet, Expander};
use crate::spectrum::symmetric_eigen;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Whitening {
    /// `L S_k^{-1/2}` per block.
    #[default]
    Block,
    /// Plain scaling by `L`; assumes the transform is unitary.
    None,
}

impl Whitening {
    pub(crate) fn code(self) -> u32 {
        match self {
            Whitening::Block => 0,
            Whitening::None => 1,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Whitening::Block),
            1 => Some(Whitening::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NoiseWhitener {
    mode: Whitening,
    bandlimit: usize,
    forward: Vec<Mat<f64>>,
    inverse: Vec<Mat<f64>>,
    noise_blocks: Vec<Mat<f64>>,
}

impl NoiseWhitener {
    pub fn new(expander: &Expander, mode: Whitening) -> Result<Self> {
        let basis = expander.basis();
        let l = basis.bandlimit() as f64;
        let pinv = expander.pinv().matrix();
        let mut forward = Vec::with_capacity(basis.order_count());
        let mut inverse = Vec::with_capacity(basis.order_count());
        let mut noise_blocks = Vec::with_capacity(basis.order_count());
        for k in 0..basis.order_count() as u32 {
            let p = basis.p(k);
            let off = basis.real_offset(k);
            let mut s = same_frequency_noise(pinv, off, p, k > 0);
            for j in 0..p {
                for i in 0..p {
                    s[(i, j)] *= l * l;
                }
            }
            let (fwd, inv) = match mode {
                Whitening::None => (
                    Mat::from_fn(p, p, |i, j| if i == j { l } else { 0.0 }),
                    Mat::from_fn(p, p, |i, j| if i == j { 1.0 / l } else { 0.0 }),
                ),
                Whitening::Block => {
                    let (vals, vecs) = symmetric_eigen(s.as_ref(), k as usize)?;
                    if vals.iter().any(|&v| !(v > 0.0)) {
                        return Err(Error::RankDeficient {
                            ratio: vals.last().copied().unwrap_or(0.0) / vals[0],
                        });
                    }
                    let fwd = spectral_function(&vals, vecs.as_ref(), |v| l / v.sqrt());
                    let inv = spectral_function(&vals, vecs.as_ref(), |v| v.sqrt() / l);
                    (fwd, inv)
                }
            };
            forward.push(fwd);
            inverse.push(inv);
            noise_blocks.push(s);
        }
        Ok(NoiseWhitener {
            mode,
            bandlimit: basis.bandlimit(),
            forward,
            inverse,
            noise_blocks,
        })
    }

    /// `factor` times the identity on every block, for coefficients whose
    /// noise is already white.
    pub fn scaled(basis: &BasisIndexSet, factor: f64) -> Self {
        let eye = |p: usize, v: f64| Mat::from_fn(p, p, |i, j| if i == j { v } else { 0.0 });
        let sizes = basis.block_sizes();
        NoiseWhitener {
            mode: Whitening::None,
            bandlimit: basis.bandlimit(),
            forward: sizes.iter().map(|&p| eye(p, factor)).collect(),
            inverse: sizes.iter().map(|&p| eye(p, 1.0 / factor)).collect(),
            noise_blocks: sizes.iter().map(|&p| eye(p, factor.powi(-2))).collect(),
        }
    }

    pub fn mode(&self) -> Whitening {
        self.mode
    }

    /// `L^2 S_k`: covariance of block `k` for unit pixel noise, in pixel units.
    pub fn noise_block(&self, k: usize) -> MatRef<'_, f64> {
        self.noise_blocks[k].as_ref()
    }

    pub fn forward(&self, k: usize) -> MatRef<'_, f64> {
        self.forward[k].as_ref()
    }

    pub fn inverse(&self, k: usize) -> MatRef<'_, f64> {
        self.inverse[k].as_ref()
    }

    fn apply(&self, c: &CoeffSet, mats: &[Mat<f64>]) -> Result<CoeffSet> {
        if c.bandlimit() != self.bandlimit || c.order_count() != mats.len() {
            return Err(Error::InvalidArgument(format!(
                "coefficients for L={} do not match whitener for L={}",
                c.bandlimit(),
                self.bandlimit
            )));
        }
        let mut out = c.clone();
        for (k, w) in mats.iter().enumerate() {
            let src = c.block(k as u32);
            let dst = out.block_mut(k as u32);
            for (i, d) in dst.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, a) in src.iter().enumerate() {
                    acc += a * w[(i, j)];
                }
                *d = acc;
            }
        }
        Ok(out)
    }

    pub fn whiten(&self, c: &CoeffSet) -> Result<CoeffSet> {
        self.apply(c, &self.forward)
    }

    pub fn unwhiten(&self, z: &CoeffSet) -> Result<CoeffSet> {
        self.apply(z, &self.inverse)
    }
}

/// Same-frequency block of `P P^T` for complex coefficients. For `k > 0` the
/// real and imaginary parts see the cosine and sine rows; the block is their average.
fn same_frequency_noise(pinv: MatRef<'_, f64>, off: usize, p: usize, paired: bool) -> Mat<f64> {
    let rows = pinv.subrows(off, p);
    let mut s = rows * rows.transpose();
    if paired {
        let sin_rows = pinv.subrows(off + p, p);
        let s2 = sin_rows * sin_rows.transpose();
        for j in 0..p {
            for i in 0..p {
                s[(i, j)] = 0.5 * (s[(i, j)] + s2[(i, j)]);
            }
        }
    }
    for j in 0..p {
        for i in j + 1..p {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

fn spectral_function(vals: &[f64], vecs: MatRef<'_, f64>, f: impl Fn(f64) -> f64) -> Mat<f64> {
    let p = vals.len();
    let scaled = Mat::from_fn(p, p, |i, j| vecs[(i, j)] * f(vals[j]));
    scaled * vecs.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitening_round_trips_and_commutes_with_steering() {
        let e = Expander::square(8).unwrap();
        let w = NoiseWhitener::new(&e, Whitening::Block).unwrap();
        let mut c = CoeffSet::zeros(e.basis());
        for k in 0..e.basis().order_count() as u32 {
            for (j, a) in c.block_mut(k).iter_mut().enumerate() {
                *a = Complex64::new((k as f64 + 1.0).sin() + j as f64, if k == 0 { 0.0 } else { 0.3 * j as f64 - 1.0 });
            }
        }
        let back = w.unwhiten(&w.whiten(&c).unwrap()).unwrap();
        assert!(c.sub(&back).unwrap().weighted_norm_sqr().sqrt() < 1e-12 * c.weighted_norm_sqr().sqrt());
        let a = w.whiten(&c.steer(0.7)).unwrap();
        let b = w.whiten(&c).unwrap().steer(0.7);
        assert!(a.sub(&b).unwrap().weighted_norm_sqr().sqrt() < 1e-12 * a.weighted_norm_sqr().sqrt());
        let a = w.whiten(&c.reflect()).unwrap();
        let b = w.whiten(&c).unwrap().reflect();
        assert!(a.sub(&b).unwrap().weighted_norm_sqr().sqrt() < 1e-12 * a.weighted_norm_sqr().sqrt());
    }

    #[test]
    fn whitened_noise_block_is_identity() {
        let e = Expander::square(8).unwrap();
        let w = NoiseWhitener::new(&e, Whitening::Block).unwrap();
        for k in 0..e.basis().order_count() {
            let s = w.noise_block(k);
            let f = w.forward(k);
            // W S W^T = L^2 I
            let l2 = 64.0;
            let t = f * s * f.transpose();
            let p = s.nrows();
            let diff = Mat::from_fn(p, p, |i, j| t[(i, j)] / l2 - if i == j { 1.0 } else { 0.0 });
            assert!(diff.norm_max() < 1e-10, "k={k}");
        }
        let plain = NoiseWhitener::new(&e, Whitening::None).unwrap();
        assert_eq!(plain.forward(0)[(0, 0)], 8.0);
    }
}

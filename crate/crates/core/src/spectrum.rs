//! Rotation-invariant covariance, per-block eigenanalysis, noise level and
//! rank selection.
//!
//! Averaging the sample covariance over all rotations and reflections leaves
//! only same-frequency couplings, `C^(k)_{qq'} = (1/n) sum_i Re{a_{kq} conj(a_{kq'})}`.
//! Each block is a real `p_k x p_k` symmetric matrix; the `k > 0` blocks stand
//! for both `+k` and `-k`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use faer::{Mat, MatRef, Side};

use crate::binio::{put_f64, put_u32, put_u64, Reader};
use crate::error::{Error, Result};
use crate::basis::PinvMode;
use crate::expansion::{rotational_mean, subtract_mean, CoeffSet};
use crate::whiten::{NoiseWhitener, Whitening};

const MODEL_MAGIC: &[u8; 4] = b"FBS1";

/// Iteration cap for [`estimate_noise_variance`].
pub const NOISE_MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCovariance {
    n: usize,
    blocks: Vec<Mat<f64>>,
}

impl BlockCovariance {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, k: usize) -> MatRef<'_, f64> {
        self.blocks[k].as_ref()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }
}

/// Per-block covariance of already centered coefficients.
pub fn build_blocks(sets: &[CoeffSet]) -> Result<BlockCovariance> {
    let first = sets.first().ok_or(Error::Empty("coefficient list"))?;
    let n = sets.len();
    for s in sets {
        if s.bandlimit() != first.bandlimit() || s.order_count() != first.order_count() {
            return Err(Error::InvalidArgument("coefficient sets with different bandlimits".into()));
        }
    }
    let mut blocks = Vec::with_capacity(first.order_count());
    for k in 0..first.order_count() as u32 {
        let p = first.block(k).len();
        // columns hold the real and imaginary parts of every image
        let cols = if k == 0 { n } else { 2 * n };
        let mut x = Mat::<f64>::zeros(p, cols);
        for (i, s) in sets.iter().enumerate() {
            let b = s.block(k);
            if b.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: b.len(),
                });
            }
            for (q, a) in b.iter().enumerate() {
                if k == 0 {
                    x[(q, i)] = a.re;
                } else {
                    x[(q, 2 * i)] = a.re;
                    x[(q, 2 * i + 1)] = a.im;
                }
            }
        }
        let mut c = &x * x.transpose();
        let inv_n = 1.0 / n as f64;
        for j in 0..p {
            for i in 0..p {
                c[(i, j)] *= inv_n;
            }
        }
        // exact symmetry regardless of the product's summation order
        for j in 0..p {
            for i in j + 1..p {
                let v = 0.5 * (c[(i, j)] + c[(j, i)]);
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        blocks.push(c);
    }
    Ok(BlockCovariance { n, blocks })
}

/// Symmetric eigendecomposition with descending eigenvalues and each
/// eigenvector's largest-magnitude entry made positive.
pub(crate) fn symmetric_eigen(m: MatRef<'_, f64>, block: usize) -> Result<(Vec<f64>, Mat<f64>)> {
    let p = m.nrows();
    if p == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::Convergence { block })?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values: Vec<f64> = (0..p).rev().map(|i| s[i]).collect();
    let mut vectors = Mat::<f64>::zeros(p, p);
    for (dst, src) in (0..p).rev().enumerate() {
        let col = u.col(src);
        let mut best = 0;
        for i in 1..p {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        let sign = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..p {
            vectors[(i, dst)] = sign * col[i];
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Convergence { block });
    }
    Ok((values, vectors))
}

/// Eigenvalues (descending) and orthonormal eigenvectors (columns) of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

pub fn eig_blocks(c: &BlockCovariance) -> Result<Vec<BlockEigen>> {
    c.blocks
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let (values, vectors) = symmetric_eigen(b.as_ref(), k)?;
            Ok(BlockEigen { values, vectors })
        })
        .collect()
}

/// `gamma_0 = p_0/n`, `gamma_k = p_k/(2n)` for `k > 0`.
pub fn gammas(block_sizes: &[usize], n: usize) -> Vec<f64> {
    block_sizes
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let dof = if k == 0 { n } else { 2 * n };
            p as f64 / dof as f64
        })
        .collect()
}

/// Threshold applied to eigenvalues before they count as signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdRule {
    /// Upper edge of the Marchenko-Pastur bulk, `sigma^2 (1 + sqrt(gamma))^2`.
    #[default]
    Mp,
    /// `sigma^2 (1 + sqrt(1 + gamma^2))^2`, close to `4 sigma^2` for small `gamma`.
    Paper,
}

impl ThresholdRule {
    pub fn factor(self, gamma: f64) -> f64 {
        match self {
            ThresholdRule::Mp => (1.0 + gamma.sqrt()).powi(2),
            ThresholdRule::Paper => (1.0 + (1.0 + gamma * gamma).sqrt()).powi(2),
        }
    }

    fn code(self) -> u32 {
        match self {
            ThresholdRule::Mp => 0,
            ThresholdRule::Paper => 1,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(ThresholdRule::Mp),
            1 => Some(ThresholdRule::Paper),
            _ => None,
        }
    }
}

/// Support `[a, b]` of the Marchenko-Pastur law.
pub fn mp_edges(gamma: f64, sigma2: f64) -> (f64, f64) {
    let s = gamma.sqrt();
    (sigma2 * (1.0 - s).powi(2), sigma2 * (1.0 + s).powi(2))
}

/// Density of the continuous part of the Marchenko-Pastur law. For
/// `gamma > 1` it integrates to `1/gamma`; the rest is an atom at zero.
pub fn mp_pdf(x: f64, gamma: f64, sigma2: f64) -> f64 {
    if !(gamma > 0.0 && sigma2 > 0.0) {
        return f64::NAN;
    }
    let (a, b) = mp_edges(gamma, sigma2);
    if x <= a || x >= b || x <= 0.0 {
        return 0.0;
    }
    ((b - x) * (x - a)).sqrt() / (2.0 * PI * sigma2 * gamma * x)
}

/// Distribution function including the atom at zero for `gamma > 1`.
pub fn mp_cdf(x: f64, gamma: f64, sigma2: f64) -> f64 {
    if !(gamma > 0.0 && sigma2 > 0.0) {
        return f64::NAN;
    }
    let atom = if gamma > 1.0 { 1.0 - 1.0 / gamma } else { 0.0 };
    let (a, b) = mp_edges(gamma, sigma2);
    if x < 0.0 {
        return 0.0;
    }
    if x <= a {
        return atom;
    }
    if x >= b {
        return 1.0;
    }
    // x = m + h sin t removes the square-root endpoints
    let m = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let t_end = ((x - m) / h).clamp(-1.0, 1.0).asin();
    let t_start = -PI / 2.0;
    let f = |t: f64| {
        let s = t.sin();
        let den = m + h * s;
        if den <= 0.0 {
            h * (1.0 - s)
        } else {
            h * h * (1.0 - s) * (1.0 + s) / den
        }
    };
    let panels = 512;
    let step = (t_end - t_start) / panels as f64;
    let mut sum = f(t_start) + f(t_end);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(t_start + i as f64 * step);
    }
    let integral = sum * step / 3.0 / (2.0 * PI * sigma2 * gamma);
    (atom + integral).min(1.0)
}

/// Median of the unit-variance law for `gamma < 1`.
pub fn mp_median(gamma: f64) -> f64 {
    let (mut lo, mut hi) = mp_edges(gamma, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mp_cdf(mid, gamma, 1.0) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Kolmogorov-Smirnov distance between a sample and the Marchenko-Pastur law.
pub fn ks_distance(samples: &[f64], gamma: f64, sigma2: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let zero_tol = 1e-9 * xs.last().copied().unwrap_or(0.0).abs();
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = mp_cdf(if x.abs() <= zero_tol { 0.0 } else { x }, gamma, sigma2);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Iterative bulk-mean noise estimate.
///
/// Starts from the median of the pooled `k > 0` eigenvalues divided by the
/// Marchenko-Pastur median (the plain mean when the pooled aspect ratio is at
/// least 1), then repeatedly drops eigenvalues above `sigma^2 (1 + sqrt(gamma_k))^2`
/// and takes the mean of the rest until the dropped set stops changing.
pub fn estimate_noise_variance(eigenvalues: &[Vec<f64>], gammas: &[f64]) -> Result<f64> {
    if eigenvalues.len() != gammas.len() {
        return Err(Error::DimensionMismatch {
            expected: gammas.len(),
            found: eigenvalues.len(),
        });
    }
    let mut pool: Vec<(f64, f64)> = Vec::new();
    for (vals, &g) in eigenvalues.iter().zip(gammas).skip(1) {
        pool.extend(vals.iter().map(|&v| (v, g)));
    }
    if pool.is_empty() {
        pool = eigenvalues
            .iter()
            .zip(gammas)
            .flat_map(|(vals, &g)| vals.iter().map(move |&v| (v, g)))
            .collect();
    }
    if pool.is_empty() {
        return Err(Error::Empty("eigenvalue pool"));
    }
    if let Some(i) = pool.iter().position(|(v, _)| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mean = pool.iter().map(|p| p.0).sum::<f64>() / pool.len() as f64;
    let gamma_bar = pool.iter().map(|p| p.1).sum::<f64>() / pool.len() as f64;
    let mut sigma2 = if gamma_bar < 1.0 {
        let mut sorted: Vec<f64> = pool.iter().map(|p| p.0).collect();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            0.5 * (sorted[mid - 1] + sorted[mid])
        };
        median / mp_median(gamma_bar)
    } else {
        mean
    };
    if !(sigma2 > 0.0) {
        return Ok(sigma2.max(0.0));
    }
    let mut excluded: Option<Vec<bool>> = None;
    for _ in 0..NOISE_MAX_ITERATIONS {
        let now: Vec<bool> = pool
            .iter()
            .map(|&(v, g)| v > sigma2 * ThresholdRule::Mp.factor(g))
            .collect();
        if excluded.as_ref() == Some(&now) {
            return Ok(sigma2);
        }
        let (sum, count) = pool
            .iter()
            .zip(&now)
            .filter(|(_, &out)| !out)
            .fold((0.0, 0usize), |(s, c), (p, _)| (s + p.0, c + 1));
        if count == 0 {
            return Err(Error::NoiseEstimate { last: sigma2 });
        }
        sigma2 = sum / count as f64;
        excluded = Some(now);
    }
    Err(Error::NoiseEstimate { last: sigma2 })
}

/// Number of leading eigenvalues per block above the rule's threshold.
pub fn select_components(eigenvalues: &[Vec<f64>], gammas: &[f64], sigma2: f64, rule: ThresholdRule) -> Vec<usize> {
    eigenvalues
        .iter()
        .zip(gammas)
        .map(|(vals, &g)| {
            let t = sigma2 * rule.factor(g);
            vals.iter().take_while(|&&v| v > t && v > 0.0).count()
        })
        .collect()
}

/// Fitted steerable PCA model.
///
/// Eigenvalues, eigenvectors and the noise variance refer to whitened
/// coefficients (see [`NoiseWhitener`]), so they are in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    pub bandlimit: usize,
    pub n: usize,
    pub blocks: Vec<BlockEigen>,
    pub gammas: Vec<f64>,
    pub noise_variance: f64,
    pub selected: Vec<usize>,
    pub rule: ThresholdRule,
    pub pinv_mode: PinvMode,
    pub whitening: Whitening,
    /// `k = 0` coefficients of the rotational mean image (not whitened).
    pub mean: Vec<f64>,
}

impl SpectralModel {
    /// Centers, whitens, builds blocks, decomposes, estimates the noise level
    /// and selects ranks.
    pub fn fit(sets: &[CoeffSet], whitener: &NoiseWhitener, pinv_mode: PinvMode, rule: ThresholdRule) -> Result<Self> {
        let mean = rotational_mean(sets)?;
        let centered = subtract_mean(sets)?
            .iter()
            .map(|c| whitener.whiten(c))
            .collect::<Result<Vec<_>>>()?;
        let cov = build_blocks(&centered)?;
        let blocks = eig_blocks(&cov)?;
        let gammas = gammas(&cov.block_sizes(), cov.n());
        let eigs: Vec<Vec<f64>> = blocks.iter().map(|b| b.values.clone()).collect();
        let noise_variance = estimate_noise_variance(&eigs, &gammas)?;
        let selected = select_components(&eigs, &gammas, noise_variance, rule);
        Ok(SpectralModel {
            bandlimit: sets[0].bandlimit(),
            n: sets.len(),
            blocks,
            gammas,
            noise_variance,
            selected,
            rule,
            pinv_mode,
            whitening: whitener.mode(),
            mean: mean.block(0).iter().map(|a| a.re).collect(),
        })
    }

    pub fn order_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.values.len()).collect()
    }

    pub fn eigenvalues(&self) -> Vec<Vec<f64>> {
        self.blocks.iter().map(|b| b.values.clone()).collect()
    }

    /// Selected components counting `+k` and `-k` separately.
    pub fn signed_selected(&self) -> usize {
        self.selected
            .iter()
            .enumerate()
            .map(|(k, &s)| if k == 0 { s } else { 2 * s })
            .sum()
    }

    /// Re-applies selection with a different rule or noise level.
    pub fn reselect(&mut self, sigma2: f64, rule: ThresholdRule) {
        self.noise_variance = sigma2;
        self.rule = rule;
        self.selected = select_components(&self.eigenvalues(), &self.gammas, sigma2, rule);
    }

    /// `k,l,lambda` rows, `l` starting at 1.
    pub fn eigenvalue_csv(&self) -> String {
        let mut out = String::from("k,l,lambda\n");
        for (k, b) in self.blocks.iter().enumerate() {
            for (l, v) in b.values.iter().enumerate() {
                let _ = writeln!(out, "{k},{},{v:.17e}", l + 1);
            }
        }
        out
    }

    /// `FBS1` layout: header, per-block eigen records, noise level, selected
    /// counts, then the threshold rule, pseudoinverse mode, whitening mode and
    /// the mean `k = 0` coefficients.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        put_u32(&mut out, self.bandlimit as u32);
        put_u64(&mut out, self.n as u64);
        put_u32(&mut out, self.blocks.len() as u32);
        for (k, b) in self.blocks.iter().enumerate() {
            let p = b.values.len();
            put_u32(&mut out, k as u32);
            put_u32(&mut out, p as u32);
            for &v in &b.values {
                put_f64(&mut out, v);
            }
            for i in 0..p {
                for j in 0..p {
                    put_f64(&mut out, b.vectors[(i, j)]);
                }
            }
        }
        put_f64(&mut out, self.noise_variance);
        for &s in &self.selected {
            put_u32(&mut out, s as u32);
        }
        put_u32(&mut out, self.rule.code());
        put_u32(&mut out, pinv_code(self.pinv_mode));
        put_u32(&mut out, self.whitening.code());
        for &m in &self.mean {
            put_f64(&mut out, m);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const KIND: &str = "spectral model";
        let mut r = Reader::new(bytes, KIND);
        r.magic(MODEL_MAGIC)?;
        let bandlimit = r.u32()? as usize;
        let n = usize::try_from(r.u64()?).map_err(|_| Error::format(KIND, "sample count overflows"))?;
        let orders = r.u32()? as usize;
        if n == 0 {
            return Err(Error::format(KIND, "zero samples"));
        }
        if orders == 0 || orders > 2 * bandlimit + 1 {
            return Err(Error::format(KIND, format!("{orders} blocks for L={bandlimit}")));
        }
        let mut blocks = Vec::with_capacity(orders);
        let mut prev_p = usize::MAX;
        for k in 0..orders {
            if r.u32()? as usize != k {
                return Err(Error::format(KIND, format!("block {k} out of order")));
            }
            let p = r.u32()? as usize;
            if p == 0 || p > prev_p {
                return Err(Error::format(KIND, format!("block {k} has invalid size {p}")));
            }
            prev_p = p;
            r.expect_remaining(p.saturating_add(p.saturating_mul(p)), 8)?;
            let values = (0..p).map(|_| r.f64()).collect::<Result<Vec<f64>>>()?;
            let mut vectors = Mat::<f64>::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    vectors[(i, j)] = r.f64()?;
                }
            }
            let finite = values.iter().all(|v| v.is_finite())
                && (0..p).all(|j| vectors.col_as_slice(j).iter().all(|v| v.is_finite()));
            if !finite {
                return Err(Error::format(KIND, format!("block {k} has non-finite entries")));
            }
            blocks.push(BlockEigen { values, vectors });
        }
        let noise_variance = r.f64()?;
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::format(KIND, "invalid noise variance"));
        }
        let mut selected = Vec::with_capacity(orders);
        for (k, b) in blocks.iter().enumerate() {
            let s = r.u32()? as usize;
            if s > b.values.len() {
                return Err(Error::format(KIND, format!("block {k} selects {s} of {}", b.values.len())));
            }
            selected.push(s);
        }
        let rule = ThresholdRule::from_code(r.u32()?).ok_or_else(|| Error::format(KIND, "unknown threshold rule"))?;
        let pinv_mode = match r.u32()? {
            0 => PinvMode::Exact,
            1 => PinvMode::Identity,
            _ => return Err(Error::format(KIND, "unknown pseudoinverse mode")),
        };
        let whitening = Whitening::from_code(r.u32()?).ok_or_else(|| Error::format(KIND, "unknown whitening mode"))?;
        let p0 = blocks[0].values.len();
        let mean = (0..p0).map(|_| r.f64()).collect::<Result<Vec<f64>>>()?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(KIND, "non-finite mean"));
        }
        r.finish()?;
        let sizes: Vec<usize> = blocks.iter().map(|b| b.values.len()).collect();
        Ok(SpectralModel {
            bandlimit,
            n,
            gammas: gammas(&sizes, n),
            blocks,
            noise_variance,
            selected,
            rule,
            pinv_mode,
            whitening,
            mean,
        })
    }
}

fn pinv_code(mode: PinvMode) -> u32 {
    match mode {
        PinvMode::Exact => 0,
        PinvMode::Identity => 1,
    }
}

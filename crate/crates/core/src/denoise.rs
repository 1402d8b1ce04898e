//! Steerable eigenimages, Wiener shrinkage and the pixel-space PCA baseline.

use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::expansion::{CoeffSet, Expander};
use crate::grid::GridSpec;
use crate::spectrum::{estimate_noise_variance, select_components, symmetric_eigen, SpectralModel, ThresholdRule};
use crate::whiten::NoiseWhitener;

/// How sample eigenvalues are mapped to signal eigenvalues before shrinkage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Debias {
    /// `max(lambda - sigma^2 (1 + gamma), 0)`.
    #[default]
    Linear,
    /// Inverts the spiked-model bias `lambda = (l + s)(1 + gamma s / l)`.
    Spiked,
}

impl Debias {
    pub fn signal_eigenvalue(self, lambda: f64, sigma2: f64, gamma: f64) -> f64 {
        match self {
            Debias::Linear => (lambda - sigma2 * (1.0 + gamma)).max(0.0),
            Debias::Spiked => {
                let b = lambda + sigma2 * (1.0 - gamma);
                let disc = b * b - 4.0 * lambda * sigma2;
                if disc < 0.0 {
                    return 0.0;
                }
                ((b + disc.sqrt()) / 2.0 - sigma2).max(0.0)
            }
        }
    }
}

/// `l / (l + sigma^2)`, zero when the debiased eigenvalue is zero.
pub fn wiener_weight(signal: f64, sigma2: f64) -> f64 {
    if signal <= 0.0 {
        0.0
    } else {
        signal / (signal + sigma2)
    }
}

/// One eigenimage `V^{kl}` as complex pixel values on the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenimage {
    pub k: u32,
    /// Rank within the block, starting at 1.
    pub l: u32,
    pub eigenvalue: f64,
    pub pixels: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenimageSet {
    pub bandlimit: usize,
    pub n: usize,
    pub noise_variance: f64,
    pub side: usize,
    pub images: Vec<Eigenimage>,
}

impl EigenimageSet {
    /// Real and imaginary parts as separate images, in the order of `images`.
    pub fn as_real_images(&self) -> Vec<Vec<f64>> {
        self.images
            .iter()
            .flat_map(|e| {
                [
                    e.pixels.iter().map(|z| z.re).collect::<Vec<f64>>(),
                    e.pixels.iter().map(|z| z.im).collect::<Vec<f64>>(),
                ]
            })
            .collect()
    }
}

fn check_model(model: &SpectralModel, expander: &Expander) -> Result<()> {
    let sizes = expander.basis().block_sizes();
    if model.bandlimit != expander.basis().bandlimit() || model.block_sizes() != sizes {
        return Err(Error::InvalidArgument(format!(
            "model for L={} does not match basis for L={}",
            model.bandlimit,
            expander.basis().bandlimit()
        )));
    }
    Ok(())
}

/// Eigenimages of all selected components. The coefficient direction of
/// component `(k, l)` is the whitened eigenvector mapped back by the
/// whitener's inverse, scaled so it has unit norm when the whitener is the identity.
pub fn synthesize_eigenimages(model: &SpectralModel, expander: &Expander, whitener: &NoiseWhitener) -> Result<EigenimageSet> {
    check_model(model, expander)?;
    let grid = expander.grid();
    let l = expander.basis().bandlimit() as f64;
    let mut images = Vec::new();
    for (k, block) in model.blocks.iter().enumerate() {
        let count = model.selected[k];
        if count == 0 {
            continue;
        }
        let p = block.values.len();
        let columns: Vec<Vec<Complex64>> = (1..=p as u32)
            .map(|q| expander.design().column(k as u32, q).expect("q within block"))
            .collect();
        let inv = whitener.inverse(k);
        for li in 0..count {
            let h = block.vectors.col(li);
            let dir: Vec<f64> = (0..p).map(|i| l * (0..p).map(|j| inv[(i, j)] * h[j]).sum::<f64>()).collect();
            let mut masked = vec![Complex64::new(0.0, 0.0); grid.masked_count()];
            for (d, col) in dir.iter().zip(&columns) {
                for (m, c) in masked.iter_mut().zip(col) {
                    *m += c * *d;
                }
            }
            let mut pixels = vec![Complex64::new(0.0, 0.0); grid.pixel_count()];
            for (pt, v) in grid.points().iter().zip(masked) {
                pixels[pt.pixel] = v;
            }
            images.push(Eigenimage {
                k: k as u32,
                l: li as u32 + 1,
                eigenvalue: block.values[li],
                pixels,
            });
        }
    }
    Ok(EigenimageSet {
        bandlimit: model.bandlimit,
        n: model.n,
        noise_variance: model.noise_variance,
        side: grid.side(),
        images,
    })
}

/// Per-block linear shrinkage `a -> mean + W^{-1} H diag(w) H^T W (a - mean)`.
#[derive(Debug, Clone)]
pub struct WienerFilter {
    bandlimit: usize,
    maps: Vec<Mat<f64>>,
    mean: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

impl WienerFilter {
    pub fn new(model: &SpectralModel, whitener: &NoiseWhitener, debias: Debias) -> Result<Self> {
        let mut maps = Vec::with_capacity(model.order_count());
        let mut weights = Vec::with_capacity(model.order_count());
        for (k, block) in model.blocks.iter().enumerate() {
            let p = block.values.len();
            if whitener.forward(k).nrows() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: whitener.forward(k).nrows(),
                });
            }
            let w: Vec<f64> = block
                .values
                .iter()
                .take(model.selected[k])
                .map(|&lambda| {
                    let signal = debias.signal_eigenvalue(lambda, model.noise_variance, model.gammas[k]);
                    wiener_weight(signal, model.noise_variance)
                })
                .collect();
            let h = &block.vectors;
            let shrink = Mat::from_fn(p, p, |i, j| (0..w.len()).map(|li| h[(i, li)] * w[li] * h[(j, li)]).sum::<f64>());
            maps.push(whitener.inverse(k) * &shrink * whitener.forward(k));
            weights.push(w);
        }
        Ok(WienerFilter {
            bandlimit: model.bandlimit,
            maps,
            mean: model.mean.clone(),
            weights,
        })
    }

    /// Shrinkage weights of the selected components, per block.
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn apply(&self, c: &CoeffSet) -> Result<CoeffSet> {
        if c.bandlimit() != self.bandlimit || c.order_count() != self.maps.len() {
            return Err(Error::InvalidArgument("coefficients do not match the filter".into()));
        }
        let mut out = c.clone();
        for (k, map) in self.maps.iter().enumerate() {
            let mut src: Vec<Complex64> = c.block(k as u32).to_vec();
            if k == 0 {
                for (a, m) in src.iter_mut().zip(&self.mean) {
                    *a -= *m;
                }
            }
            let dst = out.block_mut(k as u32);
            for (i, d) in dst.iter_mut().enumerate() {
                *d = src.iter().enumerate().map(|(j, a)| a * map[(i, j)]).sum();
                if k == 0 {
                    *d += self.mean[i];
                }
            }
        }
        Ok(out)
    }
}

/// Wiener-filters one coefficient set with the model's noise level.
pub fn wiener_denoise(c: &CoeffSet, model: &SpectralModel, whitener: &NoiseWhitener, debias: Debias) -> Result<CoeffSet> {
    WienerFilter::new(model, whitener, debias)?.apply(c)
}

/// Classical PCA on disk-masked pixels.
#[derive(Debug, Clone)]
pub struct TraditionalPca {
    grid: GridSpec,
    n: usize,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// Leading eigenvectors as columns, masked pixels by `rank`.
    eigenvectors: Mat<f64>,
    noise_variance: f64,
    rank: usize,
}

impl TraditionalPca {
    /// Sample covariance of the masked pixels and its full eigendecomposition.
    /// With `rank = None` the rank and noise level come from the same
    /// Marchenko-Pastur rule as the steerable model with `gamma = m/n`.
    pub fn fit<T, S>(grid: &GridSpec, images: &[S], rank: Option<usize>, rule: ThresholdRule) -> Result<Self>
    where
        T: Copy + Into<f64>,
        S: AsRef<[T]>,
    {
        let n = images.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("traditional PCA needs at least 2 images, got {n}")));
        }
        let m = grid.masked_count();
        if let Some(r) = rank {
            if r > m {
                return Err(Error::InvalidArgument(format!("rank {r} exceeds {m} masked pixels")));
            }
        }
        let mut x = Mat::<f64>::zeros(m, n);
        for (j, img) in images.iter().enumerate() {
            let masked = grid.gather(img.as_ref())?;
            if let Some(i) = masked.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(grid.points()[i].pixel));
            }
            x.col_as_slice_mut(j).copy_from_slice(&masked);
        }
        let mut mean = vec![0.0; m];
        for j in 0..n {
            for (mu, v) in mean.iter_mut().zip(x.col_as_slice(j)) {
                *mu += v;
            }
        }
        for mu in &mut mean {
            *mu /= n as f64;
        }
        for j in 0..n {
            for (v, mu) in x.col_as_slice_mut(j).iter_mut().zip(&mean) {
                *v -= mu;
            }
        }
        let mut cov = &x * x.transpose();
        drop(x);
        let inv_n = 1.0 / n as f64;
        for j in 0..m {
            for i in 0..m {
                cov[(i, j)] *= inv_n;
            }
        }
        for j in 0..m {
            for i in j + 1..m {
                let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let (eigenvalues, vectors) = symmetric_eigen(cov.as_ref(), 0)?;
        drop(cov);
        let gamma = m as f64 / n as f64;
        let noise_variance = estimate_noise_variance(std::slice::from_ref(&eigenvalues), &[gamma])?;
        let rank = rank.unwrap_or_else(|| select_components(std::slice::from_ref(&eigenvalues), &[gamma], noise_variance, rule)[0]);
        let eigenvectors = Mat::from_fn(m, rank, |i, j| vectors[(i, j)]);
        Ok(TraditionalPca {
            grid: grid.clone(),
            n,
            mean,
            eigenvalues,
            eigenvectors,
            noise_variance,
            rank,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn gamma(&self) -> f64 {
        self.grid.masked_count() as f64 / self.n as f64
    }

    /// Leading eigenimages on the full grid.
    pub fn eigenimages(&self) -> Vec<Vec<f64>> {
        (0..self.rank)
            .map(|j| self.grid.scatter(self.eigenvectors.col_as_slice(j)).expect("masked length"))
            .collect()
    }

    /// Wiener shrinkage onto the leading components; full images out.
    pub fn denoise<T, S>(&self, images: &[S], debias: Debias) -> Result<Vec<Vec<f64>>>
    where
        T: Copy + Into<f64>,
        S: AsRef<[T]>,
    {
        let m = self.grid.masked_count();
        let gamma = self.gamma();
        let w: Vec<f64> = self.eigenvalues[..self.rank]
            .iter()
            .map(|&lambda| wiener_weight(debias.signal_eigenvalue(lambda, self.noise_variance, gamma), self.noise_variance))
            .collect();
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(512) {
            let mut x = Mat::<f64>::zeros(m, chunk.len());
            for (j, img) in chunk.iter().enumerate() {
                let masked = self.grid.gather(img.as_ref())?;
                for ((v, s), mu) in x.col_as_slice_mut(j).iter_mut().zip(&masked).zip(&self.mean) {
                    *v = s - mu;
                }
            }
            let mut proj = self.eigenvectors.transpose() * &x;
            for (r, &wr) in w.iter().enumerate() {
                for j in 0..chunk.len() {
                    proj[(r, j)] *= wr;
                }
            }
            let back = &self.eigenvectors * &proj;
            for j in 0..chunk.len() {
                let masked: Vec<f64> = back.col_as_slice(j).iter().zip(&self.mean).map(|(v, mu)| v + mu).collect();
                out.push(self.grid.scatter(&masked)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::PinvMode;
    use crate::whiten::Whitening;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sets(e: &Expander, n: usize, seed: u64) -> Vec<CoeffSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut c = CoeffSet::zeros(e.basis());
                for k in 0..e.basis().order_count() as u32 {
                    let scale = 1.0 / (1.0 + k as f64);
                    for a in c.block_mut(k) {
                        let im = if k == 0 { 0.0 } else { rng.random_range(-1.0..1.0) };
                        *a = Complex64::new(rng.random_range(-1.0..1.0), im) * scale;
                    }
                }
                c
            })
            .collect()
    }

    #[test]
    fn debias_limits() {
        assert_eq!(Debias::Linear.signal_eigenvalue(1.0, 1.0, 0.01), 0.0);
        assert!((Debias::Linear.signal_eigenvalue(5.0, 1.0, 0.5) - 3.5).abs() < 1e-15);
        // spiked model forward map, then inversion
        let (l, s, g) = (4.0, 1.0, 0.2);
        let lambda = (l + s) * (1.0 + g * s / l);
        assert!((Debias::Spiked.signal_eigenvalue(lambda, s, g) - l).abs() < 1e-12);
        assert_eq!(Debias::Spiked.signal_eigenvalue(0.5, 1.0, 0.2), 0.0);
        assert_eq!(wiener_weight(0.0, 1.0), 0.0);
        assert_eq!(wiener_weight(2.0, 0.0), 1.0);
    }

    #[test]
    fn zero_noise_all_selected_is_identity() {
        let e = Expander::square(6).unwrap();
        let w = NoiseWhitener::new(&e, Whitening::Block).unwrap();
        let sets = random_sets(&e, 300, 1);
        let mut model = SpectralModel::fit(&sets, &w, PinvMode::Exact, ThresholdRule::Mp).unwrap();
        model.reselect(0.0, ThresholdRule::Mp);
        assert_eq!(model.selected, model.block_sizes());
        let c = &sets[7];
        let out = wiener_denoise(c, &model, &w, Debias::Linear).unwrap();
        let rel = c.sub(&out).unwrap().weighted_norm_sqr().sqrt() / c.weighted_norm_sqr().sqrt();
        assert!(rel < 1e-10, "{rel}");
    }

    #[test]
    fn steering_commutes_with_filter() {
        let e = Expander::square(6).unwrap();
        let w = NoiseWhitener::new(&e, Whitening::Block).unwrap();
        let sets = random_sets(&e, 200, 2);
        let model = SpectralModel::fit(&sets, &w, PinvMode::Exact, ThresholdRule::Mp).unwrap();
        let f = WienerFilter::new(&model, &w, Debias::Linear).unwrap();
        let c = &sets[3];
        let a = f.apply(&c.steer(1.1)).unwrap();
        let b = f.apply(c).unwrap().steer(1.1);
        let rel = a.sub(&b).unwrap().weighted_norm_sqr().sqrt() / a.weighted_norm_sqr().sqrt();
        assert!(rel < 1e-10);
        assert!(f.weights().iter().flatten().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn eigenimage_for_unit_vector_is_basis_column() {
        let e = Expander::square(6).unwrap();
        let w = NoiseWhitener::new(&e, Whitening::None).unwrap();
        let mut c = CoeffSet::zeros(e.basis());
        c.set(2, 1, Complex64::new(1.0, 0.0)).unwrap();
        let mut other = c.clone();
        other.set(2, 1, Complex64::new(-1.0, 0.0)).unwrap();
        let mut model = SpectralModel::fit(&[c, other], &w, PinvMode::Exact, ThresholdRule::Mp).unwrap();
        model.reselect(0.0, ThresholdRule::Mp);
        let set = synthesize_eigenimages(&model, &e, &w).unwrap();
        let img = set.images.iter().find(|v| v.k == 2 && v.l == 1).unwrap();
        let col = e.design().column(2, 1).unwrap();
        for (pt, z) in e.grid().points().iter().zip(&col) {
            assert!((img.pixels[pt.pixel] - z).norm() < 1e-12);
        }
    }

    #[test]
    fn traditional_pca_trivial_cases() {
        let g = GridSpec::square(4).unwrap();
        let same = vec![vec![1.0f64; 64]; 5];
        let pca = TraditionalPca::fit(&g, &same, Some(3), ThresholdRule::Mp).unwrap();
        assert!(pca.eigenvalues().iter().all(|v| v.abs() < 1e-12));
        // two orthogonal patterns, each used twice, centered to +-u and +-v
        let mut u = vec![0.0f64; 64];
        let mut v = vec![0.0f64; 64];
        u[g.points()[0].pixel] = 1.0;
        v[g.points()[5].pixel] = 1.0;
        let neg = |x: &Vec<f64>| x.iter().map(|a| -a).collect::<Vec<f64>>();
        let imgs = vec![u.clone(), neg(&u), v.clone(), neg(&v)];
        let pca = TraditionalPca::fit(&g, &imgs, Some(2), ThresholdRule::Mp).unwrap();
        let ev = pca.eigenvalues();
        assert!((ev[0] - 0.5).abs() < 1e-12 && (ev[1] - 0.5).abs() < 1e-12);
        assert!(ev[2..].iter().all(|x| x.abs() < 1e-12));
        assert!(TraditionalPca::fit(&g, &imgs, Some(10_000), ThresholdRule::Mp).is_err());
        assert!(TraditionalPca::fit(&g, &imgs[..1], None, ThresholdRule::Mp).is_err());
    }
}

//! Image quality over the disk mask: MSE, PSNR and SSIM.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_pair<A, B>(grid: &GridSpec, clean: &[A], test: &[B]) -> Result<()>
where
    A: AsRef<[f64]>,
    B: AsRef<[f64]>,
{
    if clean.len() != test.len() {
        return Err(Error::DimensionMismatch {
            expected: clean.len(),
            found: test.len(),
        });
    }
    if clean.is_empty() {
        return Err(Error::Empty("image list"));
    }
    for (a, b) in clean.iter().zip(test) {
        grid.check_image_len(a.as_ref().len())?;
        grid.check_image_len(b.as_ref().len())?;
    }
    Ok(())
}

/// Mean squared difference of each image pair over the masked pixels.
pub fn mse_per_image<A, B>(grid: &GridSpec, clean: &[A], test: &[B]) -> Result<Vec<f64>>
where
    A: AsRef<[f64]>,
    B: AsRef<[f64]>,
{
    check_pair(grid, clean, test)?;
    let m = grid.masked_count() as f64;
    Ok(clean
        .iter()
        .zip(test)
        .map(|(a, b)| {
            let (a, b) = (a.as_ref(), b.as_ref());
            grid.points().iter().map(|p| (a[p.pixel] - b[p.pixel]).powi(2)).sum::<f64>() / m
        })
        .collect())
}

/// Mean over images and masked pixels of the squared difference.
pub fn mse<A, B>(grid: &GridSpec, clean: &[A], test: &[B]) -> Result<f64>
where
    A: AsRef<[f64]>,
    B: AsRef<[f64]>,
{
    let per = mse_per_image(grid, clean, test)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Largest absolute masked pixel of the stack.
pub fn peak<A: AsRef<[f64]>>(grid: &GridSpec, images: &[A]) -> f64 {
    images
        .iter()
        .flat_map(|img| grid.points().iter().map(move |p| img.as_ref()[p.pixel].abs()))
        .fold(0.0, f64::max)
}

/// `10 log10(peak^2 / mse)`; infinite when the stacks agree.
pub fn psnr_from_mse(peak: f64, mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr<A, B>(grid: &GridSpec, clean: &[A], test: &[B]) -> Result<f64>
where
    A: AsRef<[f64]>,
    B: AsRef<[f64]>,
{
    let e = mse(grid, clean, test)?;
    Ok(psnr_from_mse(peak(grid, clean), e))
}

/// Range `max - min` of the masked pixels.
pub fn dynamic_range<A: AsRef<[f64]>>(grid: &GridSpec, images: &[A]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for img in images {
        for p in grid.points() {
            let v = img.as_ref()[p.pixel];
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi > lo {
        hi - lo
    } else {
        0.0
    }
}

/// SSIM of one image pair with a given dynamic range. Every `8 x 8` window
/// (stride 1) that contains masked pixels contributes, with its statistics
/// taken over those pixels only.
pub fn ssim_image(grid: &GridSpec, x: &[f64], y: &[f64], range: f64) -> Result<f64> {
    grid.check_image_len(x.len())?;
    grid.check_image_len(y.len())?;
    let s = grid.side();
    let w = SSIM_WINDOW.min(s);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let mask = grid.mask();
    let mut total = 0.0;
    let mut windows = 0usize;
    let mut xs = Vec::with_capacity(w * w);
    let mut ys = Vec::with_capacity(w * w);
    for r0 in 0..=s - w {
        for c0 in 0..=s - w {
            xs.clear();
            ys.clear();
            for r in r0..r0 + w {
                for c in c0..c0 + w {
                    let i = r * s + c;
                    if mask[i] {
                        xs.push(x[i]);
                        ys.push(y[i]);
                    }
                }
            }
            if xs.is_empty() {
                continue;
            }
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for (a, b) in xs.iter().zip(&ys) {
                let (da, db) = (a - mx, b - my);
                vx += da * da;
                vy += db * db;
                cxy += da * db;
            }
            vx /= n;
            vy /= n;
            cxy /= n;
            let num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
            let den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += if den == 0.0 { 1.0 } else { num / den };
            windows += 1;
        }
    }
    if windows == 0 {
        return Err(Error::Empty("SSIM windows"));
    }
    Ok(total / windows as f64)
}

pub fn ssim_per_image<A, B>(grid: &GridSpec, clean: &[A], test: &[B]) -> Result<Vec<f64>>
where
    A: AsRef<[f64]>,
    B: AsRef<[f64]>,
{
    check_pair(grid, clean, test)?;
    let range = dynamic_range(grid, clean);
    clean
        .iter()
        .zip(test)
        .map(|(a, b)| ssim_image(grid, a.as_ref(), b.as_ref(), range))
        .collect()
}

/// Mean SSIM with the dynamic range of the clean stack.
pub fn ssim<A, B>(grid: &GridSpec, clean: &[A], test: &[B]) -> Result<f64>
where
    A: AsRef<[f64]>,
    B: AsRef<[f64]>,
{
    let per = ssim_per_image(grid, clean, test)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub method: String,
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub per_image_mse: Vec<f64>,
    pub per_image_ssim: Vec<f64>,
}

impl QualityReport {
    pub fn evaluate<A, B>(method: &str, grid: &GridSpec, clean: &[A], test: &[B]) -> Result<Self>
    where
        A: AsRef<[f64]>,
        B: AsRef<[f64]>,
    {
        let per_image_mse = mse_per_image(grid, clean, test)?;
        let per_image_ssim = ssim_per_image(grid, clean, test)?;
        let mse = per_image_mse.iter().sum::<f64>() / per_image_mse.len() as f64;
        let ssim = per_image_ssim.iter().sum::<f64>() / per_image_ssim.len() as f64;
        Ok(QualityReport {
            method: method.to_string(),
            mse,
            psnr_db: psnr_from_mse(peak(grid, clean), mse),
            ssim,
            per_image_mse,
            per_image_ssim,
        })
    }

    pub const CSV_HEADER: &'static str = "method,mse,psnr_db,one_minus_ssim";

    pub fn csv_row(&self) -> String {
        format!("{},{:.9e},{:.6},{:.9e}", self.method, self.mse, self.psnr_db, 1.0 - self.ssim)
    }
}

pub fn reports_csv(reports: &[QualityReport]) -> String {
    let mut out = String::from(QualityReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

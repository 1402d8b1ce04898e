//! Image stacks, their file format, and synthetic test data.
//!
//! `FBI1` layout (little-endian): magic, `n`, `side`, `L` as `u32`, then
//! `n * side * side` `f32` pixels, row-major per image. Metadata lives in a
//! sidecar text file of `key=value` lines.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bessel::MAX_BANDLIMIT;
use crate::binio::{put_u32, Reader};
use crate::error::{Error, Result};
use crate::expansion::Expander;
use crate::grid::GridSpec;

const STACK_MAGIC: &[u8; 4] = b"FBI1";

/// Largest image side accepted from a file.
pub const MAX_SIDE: usize = 4 * MAX_BANDLIMIT;

/// Flat `key=value` metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata(pub BTreeMap<String, String>);

impl Metadata {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn get_u64(&self, key: &str) -> Option<u64> {
        self.get(key)?.parse().ok()
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format("metadata sidecar", format!("line {}: missing '='", i + 1)))?;
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::format("metadata sidecar", format!("line {}: bad key {k:?}", i + 1)));
            }
            map.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Metadata(map))
    }
}

/// Sidecar path next to a stack file: `<path>.meta`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    n: usize,
    side: usize,
    bandlimit: usize,
    pixels: Vec<f32>,
    pub metadata: Metadata,
}

impl ImageStack {
    pub fn new(bandlimit: usize, side: usize, pixels: Vec<f32>) -> Result<Self> {
        GridSpec::new(bandlimit, side)?;
        let per = side * side;
        if per == 0 || !pixels.len().is_multiple_of(per) {
            return Err(Error::DimensionMismatch {
                expected: per,
                found: pixels.len(),
            });
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let mut metadata = Metadata::default();
        metadata.set("L", bandlimit);
        Ok(ImageStack {
            n: pixels.len() / per,
            side,
            bandlimit,
            pixels,
            metadata,
        })
    }

    /// Rounds `f64` images to `f32` storage.
    pub fn from_images(bandlimit: usize, side: usize, images: &[Vec<f64>]) -> Result<Self> {
        let per = side * side;
        let mut pixels = Vec::with_capacity(images.len() * per);
        for img in images {
            if img.len() != per {
                return Err(Error::DimensionMismatch {
                    expected: per,
                    found: img.len(),
                });
            }
            pixels.extend(img.iter().map(|&v| v as f32));
        }
        Self::new(bandlimit, side, pixels)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn bandlimit(&self) -> usize {
        self.bandlimit
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.bandlimit, self.side).expect("validated at construction")
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let per = self.side * self.side;
        &self.pixels[i * per..(i + 1) * per]
    }

    pub fn images(&self) -> Vec<&[f32]> {
        self.pixels.chunks_exact(self.side * self.side).collect()
    }

    pub fn to_f64_images(&self) -> Vec<Vec<f64>> {
        self.images()
            .iter()
            .map(|img| img.iter().map(|&v| v as f64).collect())
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.pixels.len());
        out.extend_from_slice(STACK_MAGIC);
        put_u32(&mut out, self.n as u32);
        put_u32(&mut out, self.side as u32);
        put_u32(&mut out, self.bandlimit as u32);
        for &v in &self.pixels {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const KIND: &str = "image stack";
        let mut r = Reader::new(bytes, KIND);
        r.magic(STACK_MAGIC)?;
        let n = r.u32()? as usize;
        let side = r.u32()? as usize;
        let bandlimit = r.u32()? as usize;
        if bandlimit == 0 || bandlimit > MAX_BANDLIMIT || side + 1 < 2 * bandlimit || side > MAX_SIDE {
            return Err(Error::format(KIND, format!("side {side} incompatible with L={bandlimit}")));
        }
        let count = n
            .checked_mul(side)
            .and_then(|v| v.checked_mul(side))
            .ok_or_else(|| Error::format(KIND, "declared size overflows"))?;
        r.expect_remaining(count, 4)?;
        let mut pixels = Vec::with_capacity(count);
        for i in 0..count {
            let v = r.f32()?;
            if !v.is_finite() {
                return Err(Error::format(KIND, format!("non-finite pixel {i}")));
            }
            pixels.push(v);
        }
        r.finish()?;
        ImageStack::new(bandlimit, side, pixels).map_err(|e| Error::format(KIND, e.to_string()))
    }

    /// Writes the stack and its sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        fs::write(sidecar_path(path), self.metadata.to_text())?;
        Ok(())
    }

    /// Reads a stack; the sidecar is optional.
    pub fn read(path: &Path) -> Result<Self> {
        let mut stack = Self::from_bytes(&fs::read(path)?)?;
        let side = sidecar_path(path);
        if side.exists() {
            let meta = Metadata::parse(&fs::read_to_string(side)?)?;
            stack.metadata.0.extend(meta.0);
        }
        stack.metadata.set("L", stack.bandlimit);
        Ok(stack)
    }
}

/// Options for [`generate_phantoms`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomOptions {
    pub rotate: bool,
    pub reflect: bool,
}

impl Default for PhantomOptions {
    fn default() -> Self {
        PhantomOptions {
            rotate: true,
            reflect: true,
        }
    }
}

/// Anisotropic Gaussian blob.
#[derive(Debug, Clone, Copy)]
struct Blob {
    cx: f64,
    cy: f64,
    sa: f64,
    sb: f64,
    angle: f64,
    amp: f64,
}

impl Blob {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let sa: f64 = rng.random_range(0.04..0.15);
        let sb: f64 = rng.random_range(0.04..0.15);
        // keep three widths inside radius 0.9
        let reach = 0.9 - 3.0 * sa.max(sb);
        let rho = reach * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..2.0 * PI);
        Blob {
            cx: rho * phi.cos(),
            cy: rho * phi.sin(),
            sa,
            sb,
            angle: rng.random_range(0.0..PI),
            amp: rng.random_range(0.5..1.5),
        }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        self.amp * (-0.5 * ((u / self.sa).powi(2) + (v / self.sb).powi(2))).exp()
    }
}

/// Synthetic particle images: `class_count` blob phantoms projected onto the
/// truncated basis, each output a random class under a random rotation and
/// optional reflection, applied in coefficient space so they are exact.
pub fn generate_phantoms(
    n: usize,
    bandlimit: usize,
    seed: u64,
    class_count: usize,
    options: PhantomOptions,
) -> Result<ImageStack> {
    let expander = Expander::square(bandlimit)?;
    generate_phantoms_with(&expander, n, seed, class_count, options)
}

/// [`generate_phantoms`] with a prebuilt expander.
pub fn generate_phantoms_with(
    expander: &Expander,
    n: usize,
    seed: u64,
    class_count: usize,
    options: PhantomOptions,
) -> Result<ImageStack> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if class_count == 0 {
        return Err(Error::InvalidArgument("class_count must be at least 1".into()));
    }
    let grid = expander.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bases = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        let blobs: Vec<Blob> = (0..rng.random_range(5..=15)).map(|_| Blob::draw(&mut rng)).collect();
        let mut image = vec![0.0; grid.pixel_count()];
        for p in grid.points() {
            image[p.pixel] = blobs.iter().map(|b| b.eval(p.x, p.y)).sum();
        }
        bases.push(expander.expand(&image)?);
    }
    let mut sets = Vec::with_capacity(n);
    for _ in 0..n {
        let class = rng.random_range(0..class_count);
        let alpha = rng.random_range(0.0..2.0 * PI);
        let flip = rng.random_bool(0.5);
        let mut c = bases[class].clone();
        if options.reflect && flip {
            c = c.reflect();
        }
        if options.rotate {
            c = c.steer(alpha);
        }
        sets.push(c);
    }
    let images = expander.reconstruct_all(&sets)?;
    let mut stack = ImageStack::from_images(grid.bandlimit(), grid.side(), &images)?;
    stack.metadata.set("seed", seed);
    stack.metadata.set("classes", class_count);
    stack.metadata.set("kind", "phantom");
    Ok(stack)
}

/// Mean over images of the masked-pixel variance.
pub fn mean_signal_variance(stack: &ImageStack) -> f64 {
    let grid = stack.grid();
    let total: f64 = stack
        .images()
        .iter()
        .map(|img| {
            let v = grid.gather(img).expect("stack grid");
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        })
        .sum();
    total / stack.len().max(1) as f64
}

/// Adds white Gaussian noise of variance `mean_signal_variance / snr` to every pixel.
pub fn add_noise(stack: &ImageStack, snr: f64, seed: u64) -> Result<ImageStack> {
    if !(snr > 0.0) {
        return Err(Error::InvalidArgument(format!("snr must be positive, got {snr}")));
    }
    let sigma2 = if snr.is_infinite() { 0.0 } else { mean_signal_variance(stack) / snr };
    let mut out = stack.clone();
    if sigma2 > 0.0 {
        let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut out.pixels {
            *v = (*v as f64 + normal.sample(&mut rng)) as f32;
        }
    }
    out.metadata.set("snr", snr);
    out.metadata.set("noise_variance", sigma2);
    out.metadata.set("noise_seed", seed);
    Ok(out)
}

/// Stack of pure white Gaussian noise of variance `sigma2` on every pixel.
pub fn noise_stack(n: usize, bandlimit: usize, sigma2: f64, seed: u64) -> Result<ImageStack> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidArgument(format!("noise variance must be finite and nonnegative, got {sigma2}")));
    }
    let side = 2 * bandlimit;
    let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels: Vec<f32> = (0..n * side * side).map(|_| normal.sample(&mut rng) as f32).collect();
    let mut stack = ImageStack::new(bandlimit, side, pixels)?;
    stack.metadata.set("kind", "noise");
    stack.metadata.set("noise_variance", sigma2);
    stack.metadata.set("noise_seed", seed);
    Ok(stack)
}

/// 16-bit binary PGM with the image's range mapped to `0..=65535`.
pub fn write_pgm16<W: Write>(mut w: W, image: &[f64], side: usize) -> Result<()> {
    if image.len() != side * side {
        return Err(Error::DimensionMismatch {
            expected: side * side,
            found: image.len(),
        });
    }
    let lo = image.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = image.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    write!(w, "P5\n{side} {side}\n65535\n")?;
    let mut buf = Vec::with_capacity(2 * image.len());
    for &v in image {
        let level = (((v - lo) / span) * 65535.0).round().clamp(0.0, 65535.0) as u16;
        buf.extend_from_slice(&level.to_be_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_round_trip_and_errors() {
        let mut m = Metadata::default();
        m.set("snr", 0.05);
        m.set("seed", 7);
        let back = Metadata::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get_f64("snr"), Some(0.05));
        assert!(Metadata::parse("# comment\n\nk = v\n").unwrap().get("k") == Some("v"));
        assert!(Metadata::parse("novalue\n").is_err());
        assert!(Metadata::parse("two words=1\n").is_err());
    }

    #[test]
    fn stack_bytes_round_trip_bit_exact() {
        let pixels: Vec<f32> = (0..3 * 64).map(|i| (i as f32).sin() * 1e-3).collect();
        let s = ImageStack::new(4, 8, pixels).unwrap();
        let back = ImageStack::from_bytes(&s.to_bytes()).unwrap();
        assert_eq!(back.pixels(), s.pixels());
        assert_eq!((back.len(), back.side(), back.bandlimit()), (3, 8, 4));
        let bytes = s.to_bytes();
        assert!(ImageStack::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(ImageStack::from_bytes(&bad).is_err());
        let mut huge = bytes;
        huge[4..8].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(ImageStack::from_bytes(&huge).is_err());
    }

    #[test]
    fn phantoms_deterministic_and_masked() {
        let opts = PhantomOptions::default();
        let a = generate_phantoms(6, 8, 42, 3, opts).unwrap();
        let b = generate_phantoms(6, 8, 42, 3, opts).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let g = a.grid();
        for img in a.images() {
            for (v, &inside) in img.iter().zip(g.mask()) {
                if !inside {
                    assert!(v.abs() < 1e-12);
                }
            }
        }
        let c = generate_phantoms(6, 8, 43, 3, opts).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn single_class_without_rotation_is_constant() {
        let opts = PhantomOptions {
            rotate: false,
            reflect: false,
        };
        let s = generate_phantoms(4, 6, 1, 1, opts).unwrap();
        for i in 1..4 {
            assert_eq!(s.image(i), s.image(0));
        }
    }

    #[test]
    fn noise_level_and_snr_metadata() {
        let s = generate_phantoms(20, 8, 3, 2, PhantomOptions::default()).unwrap();
        let noisy = add_noise(&s, 0.5, 9).unwrap();
        let sigma2 = noisy.metadata.get_f64("noise_variance").unwrap();
        assert!((sigma2 - mean_signal_variance(&s) / 0.5).abs() < 1e-12);
        let same = add_noise(&s, f64::INFINITY, 9).unwrap();
        assert_eq!(same.pixels(), s.pixels());
        assert!(add_noise(&s, 0.0, 1).is_err());
    }

    #[test]
    fn pgm_header_and_size() {
        let mut out = Vec::new();
        write_pgm16(&mut out, &[0.0, 1.0, 2.0, 3.0], 2).unwrap();
        assert!(out.starts_with(b"P5\n2 2\n65535\n"));
        assert_eq!(out.len(), 13 + 8);
        assert_eq!(&out[out.len() - 2..], &[0xff, 0xff]);
    }
}

//! Cartesian sampling geometry.
//!
//! Pixel `(row, col)` of a `side x side` image has center
//! `x = (2 col + 1 - side) / (2L)`, `y = (side - 1 - 2 row) / (2L)`, so the
//! spacing is `1/L`, rows run top to bottom, and angles are measured
//! counterclockwise from `+x`. For even `side = 2L` the centers sit at
//! half-integer offsets; for odd sides the center pixel is the origin. The
//! disk mask keeps pixels whose center radius is at most 1; membership is an
//! integer test, so the mask is exactly symmetric under 90 degree rotations
//! and both axis reflections.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    /// Row-major pixel index `row * side + col`.
    pub pixel: usize,
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub theta: f64,
    /// `(2L r)^2` as an exact integer; equal keys mean equal radii.
    pub radius_key: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    bandlimit: usize,
    side: usize,
    points: Vec<GridPoint>,
    mask: Vec<bool>,
}

impl GridSpec {
    /// The `2L x 2L` grid.
    pub fn square(bandlimit: usize) -> Result<Self> {
        Self::new(bandlimit, 2 * bandlimit)
    }

    pub fn new(bandlimit: usize, side: usize) -> Result<Self> {
        if bandlimit < 1 {
            return Err(Error::InvalidArgument("bandlimit must be at least 1".into()));
        }
        if side < 2 * bandlimit - 1 {
            return Err(Error::InvalidArgument(format!(
                "side {side} too small to hold the unit disk at L={bandlimit}"
            )));
        }
        let two_l = 2 * bandlimit as i64;
        let limit = two_l * two_l;
        let s = side as i64;
        let mut points = Vec::new();
        let mut mask = vec![false; side * side];
        for row in 0..s {
            let v = s - 1 - 2 * row;
            for col in 0..s {
                let u = 2 * col + 1 - s;
                let key = u * u + v * v;
                if key > limit {
                    continue;
                }
                let x = u as f64 / two_l as f64;
                let y = v as f64 / two_l as f64;
                let pixel = (row * s + col) as usize;
                mask[pixel] = true;
                points.push(GridPoint {
                    pixel,
                    x,
                    y,
                    r: (key as f64).sqrt() / two_l as f64,
                    theta: y.atan2(x),
                    radius_key: key,
                });
            }
        }
        Ok(GridSpec {
            bandlimit,
            side,
            points,
            mask,
        })
    }

    pub fn bandlimit(&self) -> usize {
        self.bandlimit
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixel_count(&self) -> usize {
        self.side * self.side
    }

    /// Pixel spacing `1/L`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.bandlimit as f64
    }

    /// Quadrature weight of one pixel, `1/L^2`.
    pub fn area_element(&self) -> f64 {
        let h = self.spacing();
        h * h
    }

    /// Pixels inside the unit disk, in row-major order.
    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn masked_count(&self) -> usize {
        self.points.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn check_image_len(&self, len: usize) -> Result<()> {
        if len != self.pixel_count() {
            return Err(Error::DimensionMismatch {
                expected: self.pixel_count(),
                found: len,
            });
        }
        Ok(())
    }

    /// Masked pixel values of a full image, in [`points`](Self::points) order.
    pub fn gather<T: Copy + Into<f64>>(&self, image: &[T]) -> Result<Vec<f64>> {
        self.check_image_len(image.len())?;
        Ok(self.points.iter().map(|p| image[p.pixel].into()).collect())
    }

    /// Full image from masked values; pixels outside the disk are zero.
    pub fn scatter(&self, masked: &[f64]) -> Result<Vec<f64>> {
        if masked.len() != self.masked_count() {
            return Err(Error::DimensionMismatch {
                expected: self.masked_count(),
                found: masked.len(),
            });
        }
        let mut image = vec![0.0; self.pixel_count()];
        for (p, &v) in self.points.iter().zip(masked) {
            image[p.pixel] = v;
        }
        Ok(image)
    }

    /// Counterclockwise rotation by 90 degrees: `out[i][j] = img[j][side-1-i]`.
    pub fn rotate90<T: Copy>(&self, image: &[T]) -> Result<Vec<T>> {
        self.check_image_len(image.len())?;
        let s = self.side;
        Ok((0..s * s)
            .map(|idx| {
                let (i, j) = (idx / s, idx % s);
                image[j * s + (s - 1 - i)]
            })
            .collect())
    }

    /// Reflection across the vertical axis (`x -> -x`, i.e. `theta -> pi - theta`).
    pub fn flip_vertical_axis<T: Copy>(&self, image: &[T]) -> Result<Vec<T>> {
        self.check_image_len(image.len())?;
        let s = self.side;
        Ok((0..s * s)
            .map(|idx| {
                let (i, j) = (idx / s, idx % s);
                image[i * s + (s - 1 - j)]
            })
            .collect())
    }

    /// Distinct radius keys with one representative radius each, ascending.
    pub fn distinct_radii(&self) -> Vec<(i64, f64)> {
        let mut radii: Vec<(i64, f64)> = self.points.iter().map(|p| (p.radius_key, p.r)).collect();
        radii.sort_by_key(|&(k, _)| k);
        radii.dedup_by_key(|&mut (k, _)| k);
        radii
    }
}

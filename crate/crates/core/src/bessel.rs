//! Integer-order Bessel functions of the first kind and their positive zeros.
//!
//! `J_k(x)` is evaluated with the ascending power series where the series is
//! well conditioned (`(x/2)^2 <= k + 1`) and with Miller's backward recurrence,
//! normalized by `J_0 + 2 * sum J_{2m} = 1`, everywhere else. Zeros are
//! bracketed either from McMahon's asymptotic estimate or by a sign-change
//! sweep, bisected, and polished with a few Newton steps.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Largest bandlimit the library is validated for.
pub const MAX_BANDLIMIT: usize = 256;

/// Highest Bessel order accepted by [`bessel_j`].
pub const MAX_ORDER: u32 = 4 * MAX_BANDLIMIT as u32;

/// Largest argument accepted by [`bessel_j`].
pub const MAX_ARGUMENT: f64 = 8.0 * PI * MAX_BANDLIMIT as f64;

/// Lower bound on the gap between consecutive positive zeros of any `J_k`.
/// The smallest gap is `j_{0,2} - j_{0,1} = 3.1153...`.
const MIN_ROOT_GAP: f64 = 3.0;

const RESCALE: f64 = 1e-250;
const RESCALE_TRIGGER: f64 = 1e250;

/// Evaluates `J_k(x)`.
///
/// Returns a domain error for negative or non-finite `x`, for `x` above
/// [`MAX_ARGUMENT`], and for orders above [`MAX_ORDER`].
pub fn bessel_j(k: u32, x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!("bessel_j argument must be finite and >= 0, got {x}")));
    }
    if x > MAX_ARGUMENT {
        return Err(Error::Domain(format!("bessel_j argument {x} exceeds ceiling {MAX_ARGUMENT}")));
    }
    if k > MAX_ORDER {
        return Err(Error::Domain(format!("bessel_j order {k} exceeds ceiling {MAX_ORDER}")));
    }
    Ok(jn(k, x))
}

/// `J_k(x)` without argument validation. Callers guarantee `x >= 0`.
pub(crate) fn jn(k: u32, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * x;
    if half * half <= (k + 1) as f64 {
        series(k, x)
    } else {
        miller(k, x)
    }
}

/// `J_k'(x) = (J_{k-1}(x) - J_{k+1}(x)) / 2`, with `J_0' = -J_1`.
pub(crate) fn jn_derivative(k: u32, x: f64) -> f64 {
    if k == 0 {
        -jn(1, x)
    } else {
        0.5 * (jn(k - 1, x) - jn(k + 1, x))
    }
}

fn series(k: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for j in 1..=k {
        term *= half / j as f64;
    }
    if term == 0.0 {
        return 0.0;
    }
    let q = -half * half;
    let mut sum = term;
    let mut m = 0.0;
    loop {
        m += 1.0;
        term *= q / (m * (m + k as f64));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn miller(k: u32, x: f64) -> f64 {
    let top = (k as f64).max(x);
    let mut start = (top + 20.0 + (40.0 * top).sqrt()) as usize;
    start += start % 2;

    let two_over_x = 2.0 / x;
    let mut upper = 0.0; // J_{m+1}
    let mut current = 1.0; // J_m
    let mut even_sum = 0.0;
    let mut result = 0.0;
    let mut stored = false;
    let mut pending_rescales = 0u32;

    for m in (1..=start).rev() {
        let lower = m as f64 * two_over_x * current - upper;
        upper = current;
        current = lower;
        let order = m - 1;
        if order == k as usize {
            result = current;
            stored = true;
        }
        if order > 0 && order % 2 == 0 {
            even_sum += current;
        }
        if current.abs() > RESCALE_TRIGGER {
            current *= RESCALE;
            upper *= RESCALE;
            even_sum *= RESCALE;
            if stored {
                pending_rescales += 1;
            }
        }
    }
    let norm = current + 2.0 * even_sum;
    let mut value = result / norm;
    for _ in 0..pending_rescales {
        value *= RESCALE;
    }
    value
}

/// McMahon's leading-order estimate `(pi/2)(k + 2q - 1/2)` of the `q`-th zero of `J_k`.
///
/// Only ever used to seed a bracket.
pub fn mcmahon_guess(k: u32, q: u32) -> f64 {
    0.5 * PI * (k as f64 + 2.0 * q as f64 - 0.5)
}

/// All positive zeros of `J_k` in `(0, x_max]`, ascending, to absolute tolerance 1e-12.
pub fn bessel_roots(k: u32, x_max: f64) -> Vec<f64> {
    let mut roots: Vec<f64> = Vec::new();
    if !(x_max > 0.0) || k > MAX_ORDER {
        return roots;
    }
    let x_max = x_max.min(MAX_ARGUMENT);
    // J_k has no zeros in (0, k] for k >= 1
    let floor = if k == 0 { 0.0 } else { k as f64 };
    let f = |x: f64| jn(k, x);

    loop {
        let q = roots.len() as u32 + 1;
        let bracket = match roots.last() {
            Some(&prev) => asymptotic_bracket(k, q, prev, &f)
                .or_else(|| sweep_bracket(prev + 0.5, x_max, &f)),
            None => sweep_bracket(floor, x_max, &f),
        };
        let Some((a, b)) = bracket else { break };
        if a > x_max {
            break;
        }
        let root = refine_root(k, a, b);
        if root > x_max {
            break;
        }
        roots.push(root);
    }
    roots
}

/// Bracket around McMahon's guess, accepted only when it cannot skip a zero:
/// its left end lies within one minimal root gap of the previous zero and its
/// width is below that gap, so a sign change isolates exactly the next zero.
fn asymptotic_bracket(k: u32, q: u32, prev: f64, f: &impl Fn(f64) -> f64) -> Option<(f64, f64)> {
    let guess = mcmahon_guess(k, q);
    let a = guess - FRAC_PI_4;
    let b = guess + FRAC_PI_4;
    if a < prev + 0.5 || a > prev + MIN_ROOT_GAP {
        return None;
    }
    (f(a) * f(b) < 0.0).then_some((a, b))
}

fn sweep_bracket(start: f64, x_max: f64, f: &impl Fn(f64) -> f64) -> Option<(f64, f64)> {
    let step = FRAC_PI_4;
    let mut a = start;
    let mut fa = f(a);
    while a <= x_max {
        let b = a + step;
        let fb = f(b);
        if fa == 0.0 {
            return Some((a, a));
        }
        if fa * fb <= 0.0 {
            return Some((a, b));
        }
        a = b;
        fa = fb;
    }
    None
}

fn refine_root(k: u32, mut a: f64, mut b: f64) -> f64 {
    if a == b {
        return a;
    }
    let mut fa = jn(k, a);
    while b - a > 1e-8 {
        let mid = 0.5 * (a + b);
        let fm = jn(k, mid);
        if fm == 0.0 {
            return mid;
        }
        if fa * fm < 0.0 {
            b = mid;
        } else {
            a = mid;
            fa = fm;
        }
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..5 {
        let d = jn_derivative(k, x);
        if d == 0.0 {
            break;
        }
        let step = jn(k, x) / d;
        let next = (x - step).clamp(a, b);
        let moved = (next - x).abs();
        x = next;
        if moved <= 1e-15 * x {
            break;
        }
    }
    x
}

/// Positive zeros `R_kq` of `J_k` below a cutoff, indexed by order `k` then `q - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RootTable {
    x_max: f64,
    by_order: Vec<Vec<f64>>,
}

impl RootTable {
    /// Tabulates every zero of every `J_k` in `(0, x_max]`.
    ///
    /// Orders are scanned upward until the first order with no zero below the
    /// cutoff; since `j_{k,1}` increases with `k`, no later order contributes.
    pub fn build(x_max: f64) -> Self {
        let mut by_order = Vec::new();
        for k in 0..=MAX_ORDER {
            let roots = bessel_roots(k, x_max);
            if roots.is_empty() {
                break;
            }
            by_order.push(roots);
        }
        RootTable { x_max, by_order }
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Number of orders with at least one tabulated zero.
    pub fn order_count(&self) -> usize {
        self.by_order.len()
    }

    pub fn roots(&self, k: u32) -> &[f64] {
        self.by_order.get(k as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `R_kq` with `q` starting at 1.
    pub fn get(&self, k: u32, q: u32) -> Option<f64> {
        if q == 0 {
            return None;
        }
        self.roots(k).get(q as usize - 1).copied()
    }

    /// Iterates `(k, q, R_kq)` in ascending `k`, then ascending `q`.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.by_order.iter().enumerate().flat_map(|(k, roots)| {
            roots
                .iter()
                .enumerate()
                .map(move |(q, &r)| (k as u32, q as u32 + 1, r))
        })
    }

    pub fn len(&self) -> usize {
        self.by_order.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_order.is_empty()
    }

    /// Cache text: a `# x_max` comment followed by `k q R_kq` lines with 15 significant digits.
    pub fn to_cache_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# x_max {:.14e}", self.x_max);
        for (k, q, r) in self.iter() {
            let _ = writeln!(out, "{k} {q} {r:.14e}");
        }
        out
    }

    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_cache_string().as_bytes())?;
        Ok(())
    }

    /// Parses cache text. Lines must list contiguous `q = 1, 2, ...` per order with
    /// strictly increasing roots; orders must be contiguous from 0.
    pub fn parse_cache<R: BufRead>(reader: R) -> Result<Self> {
        const KIND: &str = "root table cache";
        let mut x_max = None;
        let mut by_order: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut it = rest.split_whitespace();
                if it.next() == Some("x_max") {
                    let v: f64 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::format(KIND, format!("line {}: bad x_max", lineno + 1)))?;
                    x_max = Some(v);
                }
                continue;
            }
            let mut fields = line.split_whitespace();
            let bad = || Error::format(KIND, format!("line {}: expected `k q R_kq`", lineno + 1));
            let k: usize = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let q: usize = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let r: f64 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if fields.next().is_some() || !r.is_finite() || r <= 0.0 {
                return Err(bad());
            }
            if k > MAX_ORDER as usize {
                return Err(Error::format(KIND, format!("line {}: order {k} above ceiling", lineno + 1)));
            }
            if k == by_order.len() {
                by_order.push(Vec::new());
            } else if k + 1 != by_order.len() {
                return Err(Error::format(KIND, format!("line {}: orders not contiguous", lineno + 1)));
            }
            let roots = by_order.last_mut().expect("pushed above");
            if q != roots.len() + 1 {
                return Err(Error::format(KIND, format!("line {}: radial index not contiguous", lineno + 1)));
            }
            if roots.last().is_some_and(|&prev| r <= prev) {
                return Err(Error::format(KIND, format!("line {}: roots not increasing", lineno + 1)));
            }
            roots.push(r);
        }
        let x_max = x_max.ok_or_else(|| Error::format(KIND, "missing `# x_max` header"))?;
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(Error::format(KIND, "x_max must be positive"));
        }
        if by_order.iter().flatten().any(|&r| r > x_max * (1.0 + 1e-12)) {
            return Err(Error::format(KIND, "root above x_max"));
        }
        Ok(RootTable { x_max, by_order })
    }

    /// Loads the table from `path` when it exists and was built for the same
    /// cutoff; otherwise tabulates and rewrites the cache.
    pub fn load_or_build(path: &Path, x_max: f64) -> Result<Self> {
        if let Ok(file) = std::fs::File::open(path) {
            if let Ok(table) = Self::parse_cache(std::io::BufReader::new(file)) {
                if (table.x_max - x_max).abs() <= 1e-12 * x_max {
                    return Ok(table);
                }
            }
        }
        let table = Self::build(x_max);
        table.write_cache(std::fs::File::create(path)?)?;
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_values() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(1, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_j(7, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn domain_errors() {
        assert!(bessel_j(0, -1.0).is_err());
        assert!(bessel_j(0, f64::NAN).is_err());
        assert!(bessel_j(MAX_ORDER + 1, 1.0).is_err());
        assert!(bessel_j(0, MAX_ARGUMENT * 1.01).is_err());
    }

    #[test]
    fn series_and_recurrence_agree_at_switch() {
        // both branches are valid just past the switch point
        for k in [0u32, 1, 5, 20, 60] {
            let x = 2.0 * ((k + 1) as f64).sqrt() * 1.05;
            let s = series(k, x);
            let m = miller(k, x);
            assert!((s - m).abs() <= 1e-12 * s.abs().max(1e-3), "k={k} series {s} miller {m}");
        }
    }

    #[test]
    fn mcmahon_values() {
        assert!((mcmahon_guess(0, 1) - 3.0 * PI / 4.0).abs() < 1e-15);
        assert!((mcmahon_guess(0, 2) - 7.0 * PI / 4.0).abs() < 1e-15);
        assert!((mcmahon_guess(5, 3) - 16.493361431346415).abs() < 1e-12);
    }

    #[test]
    fn no_roots_below_one() {
        assert!(bessel_roots(0, 1.0).is_empty());
        assert!(bessel_roots(3, 0.0).is_empty());
    }

    #[test]
    fn cache_round_trip() {
        let table = RootTable::build(4.0 * PI);
        let text = table.to_cache_string();
        let parsed = RootTable::parse_cache(text.as_bytes()).unwrap();
        assert_eq!(parsed.len(), table.len());
        for ((k1, q1, r1), (k2, q2, r2)) in parsed.iter().zip(table.iter()) {
            assert_eq!((k1, q1), (k2, q2));
            assert!((r1 - r2).abs() <= 1e-13 * r2);
        }
    }

    #[test]
    fn cache_rejects_gaps() {
        let text = "# x_max 10\n0 1 2.404825557695773\n0 3 8.653727912911013\n";
        assert!(RootTable::parse_cache(text.as_bytes()).is_err());
        let text = "0 1 2.404825557695773\n";
        assert!(RootTable::parse_cache(text.as_bytes()).is_err());
        let text = "# x_max 10\n1 1 3.8317059702075125\n";
        assert!(RootTable::parse_cache(text.as_bytes()).is_err());
    }

    #[test]
    fn load_or_build_writes_cache() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roots.txt");
        let built = RootTable::load_or_build(&path, 3.0 * PI).unwrap();
        assert!(path.exists());
        let loaded = RootTable::load_or_build(&path, 3.0 * PI).unwrap();
        assert_eq!(built.len(), loaded.len());
    }
}

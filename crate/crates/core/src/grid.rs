//! Indexing math for multiresolution grids: level resolutions, enclosing
//! corners with d-linear weights, spatial hashes and probed index composition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Largest supported input dimension.
pub const MAX_DIM: usize = 3;

/// Largest number of enclosing corners (`2^MAX_DIM`).
pub const MAX_CORNERS: usize = 1 << MAX_DIM;

/// Integer grid vertex. Axes beyond the input dimension stay zero, which
/// leaves both the hash and the dense index unchanged.
pub type Vertex = [u32; MAX_DIM];

/// Multipliers for the primary spatial hash.
pub const PRIMARY_PRIMES: [u32; MAX_DIM] = [1, 2_654_435_761, 805_459_861];

/// Multipliers for the auxiliary hash that addresses the index codebook.
pub const AUXILIARY_PRIMES: [u32; MAX_DIM] = [1, 3_674_653_429, 2_097_192_037];

/// The prime pair used by every probed level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashPrimes {
    pub primary: [u32; MAX_DIM],
    pub auxiliary: [u32; MAX_DIM],
}

impl Default for HashPrimes {
    fn default() -> Self {
        Self {
            primary: PRIMARY_PRIMES,
            auxiliary: AUXILIARY_PRIMES,
        }
    }
}

/// How a level maps vertices to feature rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexMode {
    /// One row per vertex; collision free.
    Dense,
    /// Spatial hash into a table smaller than the vertex count.
    Hashed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub level: u32,
    pub resolution: u32,
    pub mode: IndexMode,
}

impl LevelSpec {
    /// Builds the full resolution ladder for `n_levels` levels.
    pub fn ladder(
        dims: usize,
        n_levels: u32,
        n_min: u32,
        n_max: u32,
        n_f: u32,
    ) -> Result<Vec<LevelSpec>> {
        if dims == 0 || dims > MAX_DIM {
            return Err(Error::InvalidHyperparameter(format!(
                "input dimension {dims} not in 1..={MAX_DIM}"
            )));
        }
        (0..n_levels)
            .map(|level| {
                let resolution = level_resolution(level, n_min, n_max, n_levels)?;
                let vertices = (resolution as u64 + 1).checked_pow(dims as u32);
                let mode = match vertices {
                    Some(v) if v <= n_f as u64 => IndexMode::Dense,
                    _ => IndexMode::Hashed,
                };
                Ok(LevelSpec {
                    level,
                    resolution,
                    mode,
                })
            })
            .collect()
    }
}

/// Resolution of `level` on the geometric ladder from `n_min` to `n_max`.
pub fn level_resolution(level: u32, n_min: u32, n_max: u32, n_levels: u32) -> Result<u32> {
    if n_levels == 0 {
        return Err(Error::InvalidHyperparameter("level count must be at least 1".into()));
    }
    if n_min == 0 || n_max < n_min {
        return Err(Error::InvalidHyperparameter(format!(
            "resolutions must satisfy 1 <= n_min <= n_max, got n_min={n_min}, n_max={n_max}"
        )));
    }
    if level >= n_levels {
        return Err(Error::InvalidHyperparameter(format!(
            "level {level} out of range for {n_levels} levels"
        )));
    }
    if n_levels == 1 || level == 0 {
        return Ok(n_min);
    }
    if level == n_levels - 1 {
        return Ok(n_max);
    }
    let growth = ((n_max as f64).ln() - (n_min as f64).ln()) / (n_levels - 1) as f64;
    // Nudge before flooring so exact powers (e.g. 16 * 2^(3/3)) don't land one below.
    let scaled = n_min as f64 * (growth * level as f64).exp();
    Ok(((scaled + 1e-9).floor() as u32).clamp(n_min, n_max))
}

/// The `2^d` vertices enclosing a point and their d-linear weights.
#[derive(Debug, Clone, Copy)]
pub struct CornerSet<T> {
    pub corners: [Vertex; MAX_CORNERS],
    pub weights: [T; MAX_CORNERS],
    pub count: usize,
}

impl<T: Real> CornerSet<T> {
    pub fn iter(&self) -> impl Iterator<Item = (&Vertex, T)> + '_ {
        self.corners[..self.count]
            .iter()
            .zip(self.weights[..self.count].iter().copied())
    }
}

/// Enclosing corners of `x` on a grid with `resolution` cells per axis.
///
/// Corners are enumerated with the first axis as the most significant bit.
/// Points on the upper boundary are attributed to the last cell, so every
/// corner stays within `0..=resolution`.
pub fn enclosing_corners<T: Real>(x: &[T], resolution: u32) -> Result<CornerSet<T>> {
    if x.is_empty() || x.len() > MAX_DIM {
        return Err(Error::InvalidHyperparameter(format!(
            "input dimension {} not in 1..={MAX_DIM}",
            x.len()
        )));
    }
    check_unit_domain(x)?;
    if resolution == 0 {
        return Err(Error::InvalidHyperparameter("resolution must be positive".into()));
    }
    Ok(corners_unchecked(x, resolution))
}

pub(crate) fn check_unit_domain<T: Real>(x: &[T]) -> Result<()> {
    for (axis, &v) in x.iter().enumerate() {
        if !(v >= T::zero() && v <= T::one()) {
            return Err(Error::DomainViolation {
                axis,
                value: v.to_f64_lossy(),
            });
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn corners_unchecked<T: Real>(x: &[T], resolution: u32) -> CornerSet<T> {
    let dims = x.len();
    let res = T::of(resolution as f64);
    let mut cell = [0u32; MAX_DIM];
    let mut frac = [T::zero(); MAX_DIM];
    for i in 0..dims {
        let pos = x[i] * res;
        // Inputs are non-negative, so truncation is floor.
        let mut c = pos.to_u32().unwrap_or(0);
        let mut t = pos - T::of(c as f64);
        if c >= resolution {
            c = resolution - 1;
            t = T::one();
        }
        cell[i] = c;
        frac[i] = t;
    }

    let count = 1usize << dims;
    let mut set = CornerSet {
        corners: [[0; MAX_DIM]; MAX_CORNERS],
        weights: [T::zero(); MAX_CORNERS],
        count,
    };
    for k in 0..count {
        let mut w = T::one();
        let mut v = [0u32; MAX_DIM];
        for i in 0..dims {
            let bit = (k >> (dims - 1 - i)) & 1;
            v[i] = cell[i] + bit as u32;
            w *= if bit == 1 { frac[i] } else { T::one() - frac[i] };
        }
        set.corners[k] = v;
        set.weights[k] = w;
    }
    set
}

/// XOR of per-axis products with 32-bit wrapping multiplication.
#[inline]
pub fn spatial_hash(v: &[u32], primes: &[u32]) -> u32 {
    v.iter()
        .zip(primes)
        .fold(0u32, |acc, (&c, &p)| acc ^ c.wrapping_mul(p))
}

/// Row-major index of a vertex on a grid with `resolution + 1` vertices per axis.
pub fn dense_index(v: &[u32], resolution: u32, dims: usize) -> Result<u32> {
    for (axis, &coord) in v.iter().enumerate().take(dims) {
        if coord > resolution {
            return Err(Error::VertexOutOfRange {
                axis,
                coord,
                resolution,
            });
        }
    }
    Ok(dense_index_unchecked(v, resolution, dims))
}

#[inline]
pub(crate) fn dense_index_unchecked(v: &[u32], resolution: u32, dims: usize) -> u32 {
    let stride = resolution + 1;
    let mut index = 0u32;
    for i in (0..dims).rev() {
        index = index * stride + v[i];
    }
    index
}

fn check_pow2(name: &str, value: u32) -> Result<()> {
    if value == 0 || !value.is_power_of_two() {
        return Err(Error::InvalidHyperparameter(format!(
            "{name} must be a power of two, got {value}"
        )));
    }
    Ok(())
}

/// Feature row for hash `h` and probe offset `probe`: `((n_p * h) mod n_f) + probe`.
pub fn compose_probed_index(h: u32, probe: u32, n_p: u32, n_f: u32) -> Result<u32> {
    check_pow2("n_f", n_f)?;
    check_pow2("n_p", n_p)?;
    if n_p > n_f {
        return Err(Error::InvalidHyperparameter(format!(
            "probing range {n_p} does not divide feature codebook size {n_f}"
        )));
    }
    if probe >= n_p {
        return Err(Error::ProbeOutOfRange { probe, n_p });
    }
    Ok(probe_base(h, n_p, n_f) + probe)
}

/// `(n_p * h) mod n_f` for power-of-two sizes; wrapping is exact since `n_f` divides 2^32.
#[inline]
pub(crate) fn probe_base(h: u32, n_p: u32, n_f: u32) -> u32 {
    n_p.wrapping_mul(h) & (n_f - 1)
}

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use half::f16;
use num_traits::Float;

/// Scalar type used for trainable parameters.
///
/// Training runs in `f32`; `f64` exists for gradient checks.
pub trait Real:
    Float + Default + Debug + Display + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    fn of(v: f64) -> Self;
    fn to_f64_lossy(self) -> f64;
    /// Round to the nearest half-precision value (ties to even).
    fn to_half(self) -> f16;
    /// `exp` for softmax arguments (`<= 0`). The `f32` version is a branch-free
    /// polynomial that vectorizes; `f64` defers to the standard library.
    fn exp_softmax(self) -> Self;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
    #[inline]
    fn to_half(self) -> f16 {
        f16::from_f32(self)
    }
    #[inline]
    fn exp_softmax(self) -> Self {
        exp_f32(self)
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
    #[inline]
    fn to_half(self) -> f16 {
        f16::from_f64(self)
    }
    #[inline]
    fn exp_softmax(self) -> Self {
        self.exp()
    }
}

/// Cephes-style single-precision exponential, accurate to a few ulp on
/// `[-87, 88]`. Smaller inputs are clamped, so the result never underflows
/// to zero (about `1.6e-38` at the floor).
#[inline(always)]
fn exp_f32(x: f32) -> f32 {
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_359_4;
    const LN2_LO: f32 = -2.121_944_4e-4;
    // Adding and subtracting 1.5 * 2^23 rounds to the nearest integer.
    const ROUND: f32 = 12_582_912.0;
    let x = x.clamp(-87.0, 88.0);
    let n = (x * LOG2E + ROUND) - ROUND;
    let r = x - n * LN2_HI - n * LN2_LO;
    let mut p = 1.987_569_1e-4f32;
    p = p * r + 1.398_2e-3;
    p = p * r + 8.333_452e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_5e-1;
    p = p * r + 5e-1;
    let y = p * r * r + r + 1.0;
    y * f32::from_bits(((n as i32 + 127) as u32) << 23)
}

//! Scalar abstraction over the floating-point type used by a tree.
//!
//! Everything numeric in this crate is generic over [`Scalar`], which extends
//! `num_traits::Float` with lossless text encoding. Model files must survive a
//! serialize/deserialize round trip bit-for-bit, so scalars are written as
//! exact base-2 literals (`sign 0x<mantissa>p<exponent>`, the value being
//! `mantissa * 2^exponent`) rather than decimal.

use num_traits::Float;
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

pub trait Scalar:
    Float
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Nearest representable value; used for constants and data ingestion.
    fn from_f64(v: f64) -> Self;

    fn to_f64(self) -> f64;

    /// Exact base-2 text encoding of a finite value.
    fn encode_exact(self) -> String;

    /// Inverse of [`Scalar::encode_exact`].
    fn decode_exact(s: &str) -> Option<Self>;
}

fn encode_parts(sign: i8, mantissa: u64, exponent: i16) -> String {
    let neg = if sign < 0 { "-" } else { "" };
    format!("{neg}0x{mantissa:x}p{exponent}")
}

fn decode_parts(s: &str) -> Option<(i8, u64, i16)> {
    let (sign, rest) = match s.strip_prefix('-') {
        Some(rest) => (-1i8, rest),
        None => (1i8, s),
    };
    let rest = rest.strip_prefix("0x")?;
    let p = rest.find(['p', 'P'])?;
    let mantissa = u64::from_str_radix(&rest[..p], 16).ok()?;
    let exponent: i16 = rest[p + 1..].parse().ok()?;
    Some((sign, mantissa, exponent))
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            fn to_f64(self) -> f64 {
                self as f64
            }

            fn encode_exact(self) -> String {
                let (mantissa, exponent, sign) = Float::integer_decode(self);
                encode_parts(sign, mantissa, exponent)
            }

            fn decode_exact(s: &str) -> Option<Self> {
                let (sign, mantissa, exponent) = decode_parts(s)?;
                // mantissa * 2^exponent reconstructs the value exactly. The
                // exponent is split in two so neither power overflows on the
                // way to a subnormal result (powi(-1074) alone returns
                // 1/inf = 0).
                let e1 = (exponent as i32) / 2;
                let e2 = exponent as i32 - e1;
                let v = (mantissa as f64) * 2.0f64.powi(e1) * 2.0f64.powi(e2);
                let v = if sign < 0 { -v } else { v };
                let v = v as $t;
                v.is_finite().then_some(v)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

//! Scalar arithmetic: exact prime fields and a double-precision real mode.
//!
//! Every matrix and code in this crate is generic over [`Field`]. The trait
//! carries the runtime context (the modulus for `F_q`) so elements can stay
//! plain `u64`/`f64` values.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Selects the arithmetic used by an experiment.
///
/// Serialized as the prime itself or the string `"real"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarMode {
    /// Exact arithmetic modulo a prime `q`.
    Finite(u64),
    /// IEEE double precision.
    Real,
}

impl ScalarMode {
    pub fn validate(self) -> Result<Self, Error> {
        if let ScalarMode::Finite(q) = self {
            PrimeField::new(q)?;
        }
        Ok(self)
    }

    /// Field size for finite modes, `None` for reals.
    pub fn modulus(self) -> Option<u64> {
        match self {
            ScalarMode::Finite(q) => Some(q),
            ScalarMode::Real => None,
        }
    }
}

impl fmt::Display for ScalarMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarMode::Finite(q) => write!(f, "{q}"),
            ScalarMode::Real => f.write_str("real"),
        }
    }
}

impl FromStr for ScalarMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("real") {
            return Ok(ScalarMode::Real);
        }
        let q: u64 = s
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("field must be a prime or `real`, got `{s}`")))?;
        ScalarMode::Finite(q).validate()
    }
}

impl Serialize for ScalarMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ScalarMode::Finite(q) => s.serialize_u64(*q),
            ScalarMode::Real => s.serialize_str("real"),
        }
    }
}

impl<'de> Deserialize<'de> for ScalarMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Prime(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Prime(q) => ScalarMode::Finite(q).validate(),
            Raw::Text(t) => t.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Arithmetic context shared by matrices and codes.
///
/// `magnitude` and `negligible` drive pivot selection: exact fields only
/// distinguish zero from nonzero, the reals use absolute values with a
/// relative tolerance.
pub trait Field: Copy + fmt::Debug + PartialEq + Send + Sync + 'static {
    type Elem: Copy + fmt::Debug + PartialEq + Send + Sync + 'static;

    fn mode(&self) -> ScalarMode;
    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    fn from_i64(&self, v: i64) -> Self::Elem;
    fn add(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn sub(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn mul(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn neg(&self, a: Self::Elem) -> Self::Elem;
    /// Multiplicative inverse; `None` for zero.
    fn inv(&self, a: Self::Elem) -> Option<Self::Elem>;
    fn is_zero(&self, a: Self::Elem) -> bool;
    fn magnitude(&self, a: Self::Elem) -> f64;
    /// Whether `a` counts as zero next to a reference scale.
    fn negligible(&self, a: Self::Elem, scale: f64) -> bool;
    fn to_f64(&self, a: Self::Elem) -> f64;
    /// Uniform element in `F_q`, standard normal in real mode.
    fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Elem;

    /// `dst[i] += factor * src[i]`.
    fn axpy(&self, dst: &mut [Self::Elem], factor: Self::Elem, src: &[Self::Elem]) {
        debug_assert_eq!(dst.len(), src.len());
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = self.add(*d, self.mul(factor, s));
        }
    }

    fn scale_slice(&self, dst: &mut [Self::Elem], factor: Self::Elem) {
        for d in dst {
            *d = self.mul(*d, factor);
        }
    }
}

/// `F_q` for a prime `q < 2^32`. Elements are canonical residues in `[0, q)`.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PrimeField {
    q: u64,
    // floor(2^64 / q), for Barrett reduction of products below q^2.
    barrett: u64,
}

impl fmt::Debug for PrimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}", self.q)
    }
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

impl PrimeField {
    pub const MAX_MODULUS: u64 = u32::MAX as u64;

    pub fn new(q: u64) -> Result<Self, Error> {
        if q > Self::MAX_MODULUS {
            return Err(Error::InvalidParameter(format!(
                "modulus {q} exceeds {}",
                Self::MAX_MODULUS
            )));
        }
        if !is_prime(q) {
            return Err(Error::NotPrime(q));
        }
        let barrett = (u128::from(u64::MAX) + 1) / u128::from(q);
        Ok(Self { q, barrett: barrett.min(u128::from(u64::MAX)) as u64 })
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    #[inline]
    fn reduce(&self, x: u64) -> u64 {
        let t = ((u128::from(x) * u128::from(self.barrett)) >> 64) as u64;
        let mut r = x - t * self.q;
        while r >= self.q {
            r -= self.q;
        }
        r
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.q;
        base %= self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.reduce(acc * base);
            }
            base = self.reduce(base * base);
            exp >>= 1;
        }
        acc
    }
}

impl Field for PrimeField {
    type Elem = u64;

    fn mode(&self) -> ScalarMode {
        ScalarMode::Finite(self.q)
    }
    fn zero(&self) -> u64 {
        0
    }
    fn one(&self) -> u64 {
        1 % self.q
    }
    fn from_i64(&self, v: i64) -> u64 {
        v.rem_euclid(self.q as i64) as u64
    }
    #[inline]
    fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }
    #[inline]
    fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }
    #[inline]
    fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce(a * b)
    }
    fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }
    fn inv(&self, a: u64) -> Option<u64> {
        // Fermat: a^(q-2).
        (a != 0).then(|| self.pow(a, self.q - 2))
    }
    fn is_zero(&self, a: u64) -> bool {
        a == 0
    }
    fn magnitude(&self, a: u64) -> f64 {
        if a == 0 {
            0.0
        } else {
            1.0
        }
    }
    fn negligible(&self, a: u64, _scale: f64) -> bool {
        a == 0
    }
    fn to_f64(&self, a: u64) -> f64 {
        a as f64
    }
    fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.random_range(0..self.q)
    }

    fn axpy(&self, dst: &mut [u64], factor: u64, src: &[u64]) {
        if factor == 0 {
            return;
        }
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = self.reduce(*d + factor * s);
        }
    }
}

/// Double-precision reals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Reals;

impl Reals {
    /// Pivots at or below this fraction of the reference scale count as zero.
    pub const PIVOT_TOLERANCE: f64 = 1e-10;
}

impl Field for Reals {
    type Elem = f64;

    fn mode(&self) -> ScalarMode {
        ScalarMode::Real
    }
    fn zero(&self) -> f64 {
        0.0
    }
    fn one(&self) -> f64 {
        1.0
    }
    fn from_i64(&self, v: i64) -> f64 {
        v as f64
    }
    fn add(&self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn neg(&self, a: f64) -> f64 {
        -a
    }
    fn inv(&self, a: f64) -> Option<f64> {
        (a != 0.0).then(|| 1.0 / a)
    }
    fn is_zero(&self, a: f64) -> bool {
        a == 0.0
    }
    fn magnitude(&self, a: f64) -> f64 {
        a.abs()
    }
    fn negligible(&self, a: f64, scale: f64) -> bool {
        a.abs() <= Self::PIVOT_TOLERANCE * scale
    }
    fn to_f64(&self, a: f64) -> f64 {
        a
    }
    fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.sample(StandardNormal)
    }

    fn axpy(&self, dst: &mut [f64], factor: f64, src: &[f64]) {
        for (d, &s) in dst.iter_mut().zip(src) {
            *d += factor * s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primality() {
        let primes: Vec<u64> = (0..30).filter(|&n| is_prime(n)).collect();
        assert_eq!(primes, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
        assert!(PrimeField::new(4).is_err());
        assert!(PrimeField::new(1).is_err());
        assert!(PrimeField::new(4_294_967_291).is_ok());
    }

    #[test]
    fn field_axioms_exhaustive_small_primes() {
        for q in [2u64, 3, 5, 7, 11, 13] {
            let f = PrimeField::new(q).unwrap();
            for a in 0..q {
                assert_eq!(f.add(a, f.neg(a)), 0);
                if a != 0 {
                    assert_eq!(f.mul(a, f.inv(a).unwrap()), 1, "q={q} a={a}");
                } else {
                    assert!(f.inv(a).is_none());
                }
                for b in 0..q {
                    assert_eq!(f.add(a, b), f.add(b, a));
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    assert_eq!(f.sub(f.add(a, b), b), a);
                    for c in 0..q {
                        assert_eq!(f.add(f.add(a, b), c), f.add(a, f.add(b, c)));
                        assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
                        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
                    }
                }
            }
        }
    }

    #[test]
    fn barrett_matches_remainder_for_large_modulus() {
        let f = PrimeField::new(4_294_967_291).unwrap();
        let q = f.modulus();
        for (a, b) in [(q - 1, q - 1), (123_456_789, 987_654_321), (q - 2, 2), (0, q - 1)] {
            assert_eq!(f.mul(a, b), ((u128::from(a) * u128::from(b)) % u128::from(q)) as u64);
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("101".parse::<ScalarMode>().unwrap(), ScalarMode::Finite(101));
        assert_eq!("Real".parse::<ScalarMode>().unwrap(), ScalarMode::Real);
        assert!("100".parse::<ScalarMode>().is_err());
        assert!("abc".parse::<ScalarMode>().is_err());
    }
}

//! Exact rational helpers and rigorous brackets for rational powers.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational used throughout the public API.
pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn qu(n: u64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn q128(n: i128, d: i128) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Parses `"a/b"`, `"a"` or a finite decimal such as `"0.25"`.
pub fn parse_q(s: &str) -> Result<Q> {
    let t = s.trim();
    let bad = || Error::Format(format!("not a rational: {s:?}"));
    if let Some((a, b)) = t.split_once('/') {
        let n: BigInt = a.trim().parse().map_err(|_| bad())?;
        let d: BigInt = b.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::Format(format!("zero denominator in {s:?}")));
        }
        return Ok(Q::new(n, d));
    }
    if let Some((ip, fp)) = t.split_once('.') {
        if fp.is_empty() || !fp.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = ip.starts_with('-');
        let ip_digits = ip.trim_start_matches(['-', '+']);
        let whole: BigInt = if ip_digits.is_empty() {
            BigInt::zero()
        } else {
            ip_digits.parse().map_err(|_| bad())?
        };
        let frac: BigInt = fp.parse().map_err(|_| bad())?;
        let scale = num_traits::pow(BigInt::from(10), fp.len());
        let mag = Q::new(whole * &scale + frac, scale);
        return Ok(if neg { -mag } else { mag });
    }
    let n: BigInt = t.parse().map_err(|_| bad())?;
    Ok(Q::from_integer(n))
}

/// Formats as `"num/den"`, always with an explicit denominator.
pub fn fmt_q(x: &Q) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        if x.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Exact rational value of a finite float.
pub fn from_f64(x: f64) -> Q {
    Q::from_float(x).expect("finite float")
}

pub fn big_to_i128(x: &BigInt, what: &str) -> Result<i128> {
    x.to_i128()
        .ok_or_else(|| Error::Overflow(format!("{what} does not fit in 128 bits")))
}

pub fn checked_lcm(a: i128, b: i128) -> Result<i128> {
    let g = a.gcd(&b);
    (a / g)
        .checked_mul(b)
        .map(i128::abs)
        .ok_or_else(|| Error::Overflow("common denominator exceeds 128 bits".into()))
}

pub fn mul128(a: i128, b: i128) -> Result<i128> {
    a.checked_mul(b)
        .ok_or_else(|| Error::Overflow("lattice coordinate exceeds 128 bits".into()))
}

pub fn add128(a: i128, b: i128) -> Result<i128> {
    a.checked_add(b)
        .ok_or_else(|| Error::Overflow("lattice coordinate exceeds 128 bits".into()))
}

/// Numerator of `x` over the denominator `den`; `den` must be a multiple of `x.denom()`.
pub fn numer_over(x: &Q, den: i128) -> Result<i128> {
    let d = BigInt::from(den);
    let (quot, rem) = d.div_rem(x.denom());
    if !rem.is_zero() {
        return Err(Error::Grid(format!(
            "{} is not on the lattice 1/{den}",
            fmt_q(x)
        )));
    }
    big_to_i128(&(x.numer() * quot), "lattice numerator")
}

pub fn floor_q(x: &Q) -> BigInt {
    x.floor().to_integer()
}

pub fn abs_q(x: &Q) -> Q {
    x.abs()
}

pub fn max_q(a: Q, b: Q) -> Q {
    if a >= b {
        a
    } else {
        b
    }
}

pub fn min_q(a: Q, b: Q) -> Q {
    if a <= b {
        a
    } else {
        b
    }
}

pub fn pow_q(x: &Q, e: u32) -> Q {
    num_traits::pow(x.clone(), e as usize)
}

/// Largest float not above `x`, shrunk by a relative margin covering libm error.
pub fn round_down(x: f64) -> f64 {
    if x > 0.0 {
        x * (1.0 - 1e-12)
    } else {
        x * (1.0 + 1e-12)
    }
}

pub fn round_up(x: f64) -> f64 {
    if x > 0.0 {
        x * (1.0 + 1e-12)
    } else {
        x * (1.0 - 1e-12)
    }
}

/// A positive real of the form `coef · (num/den)^(1/root)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Radical {
    pub coef: Q,
    pub num: BigUint,
    pub den: BigUint,
    pub root: u32,
}

impl Radical {
    pub fn rational(x: Q) -> Self {
        Radical {
            coef: x,
            num: BigUint::one(),
            den: BigUint::one(),
            root: 1,
        }
    }

    /// `base^e` for a rational exponent `e`.
    pub fn power(base: u64, e: &Q) -> Self {
        let root = e.denom().to_u32().expect("exponent denominator fits u32");
        let k = e
            .numer()
            .abs()
            .to_u32()
            .expect("exponent numerator fits u32");
        let p = num_traits::pow(BigUint::from(base), k as usize);
        let (num, den) = if e.is_negative() {
            (BigUint::one(), p)
        } else {
            (p, BigUint::one())
        };
        Radical {
            coef: Q::one(),
            num,
            den,
            root,
        }
    }

    pub fn scale(mut self, c: &Q) -> Self {
        self.coef *= c;
        self
    }

    pub fn mul(&self, other: &Radical) -> Radical {
        let root = self.root.lcm(&other.root);
        let a = root / self.root;
        let b = root / other.root;
        Radical {
            coef: &self.coef * &other.coef,
            num: num_traits::pow(self.num.clone(), a as usize)
                * num_traits::pow(other.num.clone(), b as usize),
            den: num_traits::pow(self.den.clone(), a as usize)
                * num_traits::pow(other.den.clone(), b as usize),
            root,
        }
    }

    pub fn to_f64(&self) -> f64 {
        let inner =
            (self.num.to_f64().unwrap().ln() - self.den.to_f64().unwrap().ln()) / self.root as f64;
        to_f64(&self.coef) * inner.exp()
    }

    /// Rational `lo ≤ value ≤ hi`, with `hi - lo ≤ coef·2^-bits`; `lo == hi` when exact.
    pub fn bracket(&self, bits: u32) -> (Q, Q) {
        let v = self.root;
        let shifted = &self.num << (bits as usize * v as usize);
        let (t, rem) = shifted.div_rem(&self.den);
        let r = t.nth_root(v);
        let scale = BigInt::one() << bits as usize;
        let exact = rem.is_zero() && num_traits::pow(r.clone(), v as usize) == t;
        let lo = Q::new(BigInt::from_biguint(Sign::Plus, r.clone()), scale.clone());
        let hi = if exact {
            lo.clone()
        } else {
            Q::new(BigInt::from_biguint(Sign::Plus, r + 1u32), scale)
        };
        let (lo, hi) = (&lo * &self.coef, &hi * &self.coef);
        if lo <= hi {
            (lo, hi)
        } else {
            (hi, lo)
        }
    }

    /// Exact comparison with a rational.
    pub fn cmp_q(&self, x: &Q) -> Ordering {
        // value^root vs x^root, both scaled by coef; signs handled by coef.
        if self.coef.is_zero() {
            return Q::zero().cmp(x);
        }
        let c = x / &self.coef;
        let flip = self.coef.is_negative();
        let ord = if c.is_negative() {
            Ordering::Greater
        } else {
            let lhs = Q::new(
                BigInt::from_biguint(Sign::Plus, self.num.clone()),
                BigInt::from_biguint(Sign::Plus, self.den.clone()),
            );
            lhs.cmp(&pow_q(&c, self.root))
        };
        if flip {
            ord.reverse()
        } else {
            ord
        }
    }
}

/// Decides a predicate on an irrational quantity through shrinking brackets.
/// `test(lo, hi)` returns `Some(answer)` once the answer is the same across the bracket.
/// Undecided after the last refinement returns `false`.
pub fn decide<F>(x: &Radical, mut test: F) -> bool
where
    F: FnMut(&Q, &Q) -> Option<bool>,
{
    let mut bits = 64;
    while bits <= 8192 {
        let (lo, hi) = x.bracket(bits);
        if let Some(ans) = test(&lo, &hi) {
            return ans;
        }
        bits *= 2;
    }
    false
}

pub mod serde_q {
    use super::{fmt_q, parse_q, Q};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_q(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        let s = String::deserialize(d)?;
        parse_q(&s).map_err(serde::de::Error::custom)
    }
}

pub mod serde_q_vec {
    use super::{fmt_q, parse_q, Q};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(xs: &[Q], s: S) -> Result<S::Ok, S::Error> {
        xs.iter().map(fmt_q).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Q>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| parse_q(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_q("3/4").unwrap(), q(3, 4));
        assert_eq!(parse_q("-2").unwrap(), qi(-2));
        assert_eq!(parse_q("0.25").unwrap(), q(1, 4));
        assert_eq!(parse_q("-1.5").unwrap(), q(-3, 2));
        assert!(parse_q("1/0").is_err());
        assert!(parse_q("x").is_err());
        assert_eq!(fmt_q(&qi(2)), "2/1");
    }

    #[test]
    fn radical_brackets() {
        // 16^(1/2) = 4 exactly
        let r = Radical::power(16, &q(1, 2));
        let (lo, hi) = r.bracket(64);
        assert_eq!(lo, qi(4));
        assert_eq!(hi, qi(4));
        assert_eq!(r.cmp_q(&qi(4)), Ordering::Equal);
        // 2^(1/2) bracket contains sqrt 2
        let s = Radical::power(2, &q(1, 2));
        let (lo, hi) = s.bracket(40);
        assert!(to_f64(&lo) <= std::f64::consts::SQRT_2);
        assert!(to_f64(&hi) >= std::f64::consts::SQRT_2);
        assert!(to_f64(&(hi - lo)) < 1e-11);
        assert_eq!(s.cmp_q(&q(7, 5)), Ordering::Greater);
        assert_eq!(s.cmp_q(&q(3, 2)), Ordering::Less);
        // 16^(-1/4) = 1/2
        let t = Radical::power(16, &q(-1, 4));
        assert_eq!(t.cmp_q(&q(1, 2)), Ordering::Equal);
        let prod = r.mul(&t);
        assert_eq!(prod.cmp_q(&qi(2)), Ordering::Equal);
    }

    #[test]
    fn lattice_numerators() {
        assert_eq!(numer_over(&q(3, 4), 16).unwrap(), 12);
        assert!(numer_over(&q(1, 3), 16).is_err());
    }
}

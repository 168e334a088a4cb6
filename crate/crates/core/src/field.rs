// SPDX-License-Identifier: Apache-2.0

//! Prime-field arithmetic with a modulus chosen at runtime.
//!
//! Elements are kept in Montgomery form over four 64-bit limbs, so any odd
//! modulus below 2^256 is supported. The field context ([`PrimeField`]) owns
//! the modulus and the Montgomery constants; elements ([`Fe`]) are plain
//! `Copy` values that only make sense together with the context that made
//! them.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

const LIMBS: usize = 4;

/// A field element in Montgomery form. Equality is equality in the field.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Fe([u64; LIMBS]);

impl fmt::Debug for Fe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fe(mont:{:016x}{:016x}{:016x}{:016x})", self.0[3], self.0[2], self.0[1], self.0[0])
    }
}

impl Fe {
    pub const ZERO: Fe = Fe([0; LIMBS]);

    pub fn is_zero(&self) -> bool {
        self.0 == [0; LIMBS]
    }
}

#[inline(always)]
fn adc(a: u64, b: u64, carry: u64) -> (u64, u64) {
    let t = a as u128 + b as u128 + carry as u128;
    (t as u64, (t >> 64) as u64)
}

#[inline(always)]
fn sbb(a: u64, b: u64, borrow: u64) -> (u64, u64) {
    let t = (a as u128).wrapping_sub(b as u128 + (borrow >> 63) as u128);
    (t as u64, (t >> 64) as u64)
}

#[inline(always)]
fn mac(a: u64, b: u64, c: u64, carry: u64) -> (u64, u64) {
    let t = a as u128 + (b as u128) * (c as u128) + carry as u128;
    (t as u64, (t >> 64) as u64)
}

fn limbs_from_biguint(v: &BigUint) -> [u64; LIMBS] {
    let mut out = [0u64; LIMBS];
    for (i, d) in v.iter_u64_digits().take(LIMBS).enumerate() {
        out[i] = d;
    }
    out
}

fn biguint_from_limbs(l: &[u64; LIMBS]) -> BigUint {
    let mut bytes = Vec::with_capacity(32);
    for limb in l {
        bytes.extend_from_slice(&limb.to_le_bytes());
    }
    BigUint::from_bytes_le(&bytes)
}

fn geq(a: &[u64; LIMBS], b: &[u64; LIMBS]) -> bool {
    for i in (0..LIMBS).rev() {
        if a[i] != b[i] {
            return a[i] > b[i];
        }
    }
    true
}

fn sub_limbs(a: &[u64; LIMBS], b: &[u64; LIMBS]) -> [u64; LIMBS] {
    let mut out = [0u64; LIMBS];
    let mut borrow = 0;
    for i in 0..LIMBS {
        let (d, br) = sbb(a[i], b[i], borrow);
        out[i] = d;
        borrow = br;
    }
    out
}

/// Field context: modulus plus precomputed Montgomery constants.
#[derive(Clone, PartialEq, Eq)]
pub struct PrimeField {
    modulus: [u64; LIMBS],
    modulus_big: Arc<BigUint>,
    /// -p^{-1} mod 2^64
    inv: u64,
    /// R^2 mod p, R = 2^256
    r2: [u64; LIMBS],
    one: Fe,
    bits: u32,
}

impl fmt::Debug for PrimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PrimeField({})", self.modulus_big)
    }
}

impl PrimeField {
    /// Builds a context for an odd modulus `p` with `2 < p < 2^256`.
    /// Primality is not checked here (see [`crate::params::is_probable_prime`]).
    pub fn new(p: &BigUint) -> Result<Self> {
        if p.bits() > 256 || *p <= BigUint::from(2u32) || (p % 2u32).is_zero() {
            return Err(Error::Param(format!("modulus {p} must be odd, > 2 and below 2^256")));
        }
        let modulus = limbs_from_biguint(p);
        // Newton iteration for p^{-1} mod 2^64.
        let mut inv = 1u64;
        for _ in 0..63 {
            inv = inv.wrapping_mul(inv);
            inv = inv.wrapping_mul(modulus[0]);
        }
        let inv = inv.wrapping_neg();
        let r2_big = (BigUint::one() << 512u32) % p;
        let r_big = (BigUint::one() << 256u32) % p;
        Ok(PrimeField {
            modulus,
            modulus_big: Arc::new(p.clone()),
            inv,
            r2: limbs_from_biguint(&r2_big),
            one: Fe(limbs_from_biguint(&r_big)),
            bits: p.bits() as u32,
        })
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus_big
    }

    /// Number of bits in the modulus, i.e. ⌈log2(p+1)⌉.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn zero(&self) -> Fe {
        Fe::ZERO
    }

    pub fn one(&self) -> Fe {
        self.one
    }

    #[inline]
    pub fn add(&self, a: Fe, b: Fe) -> Fe {
        let mut out = [0u64; LIMBS];
        let mut carry = 0;
        for i in 0..LIMBS {
            let (s, c) = adc(a.0[i], b.0[i], carry);
            out[i] = s;
            carry = c;
        }
        if carry != 0 || geq(&out, &self.modulus) {
            out = sub_limbs(&out, &self.modulus);
        }
        Fe(out)
    }

    #[inline]
    pub fn sub(&self, a: Fe, b: Fe) -> Fe {
        let mut out = [0u64; LIMBS];
        let mut borrow = 0;
        for i in 0..LIMBS {
            let (d, br) = sbb(a.0[i], b.0[i], borrow);
            out[i] = d;
            borrow = br;
        }
        if borrow != 0 {
            let mut carry = 0;
            for i in 0..LIMBS {
                let (s, c) = adc(out[i], self.modulus[i], carry);
                out[i] = s;
                carry = c;
            }
        }
        Fe(out)
    }

    #[inline]
    pub fn neg(&self, a: Fe) -> Fe {
        self.sub(Fe::ZERO, a)
    }

    /// Montgomery multiplication (CIOS).
    #[inline]
    pub fn mul(&self, a: Fe, b: Fe) -> Fe {
        let p = &self.modulus;
        let mut t = [0u64; LIMBS + 2];
        for i in 0..LIMBS {
            let mut c = 0;
            for j in 0..LIMBS {
                let (v, cc) = mac(t[j], a.0[j], b.0[i], c);
                t[j] = v;
                c = cc;
            }
            let (v, c2) = adc(t[LIMBS], c, 0);
            t[LIMBS] = v;
            t[LIMBS + 1] = c2;

            let m = t[0].wrapping_mul(self.inv);
            let (_, mut c) = mac(t[0], m, p[0], 0);
            for j in 1..LIMBS {
                let (v, cc) = mac(t[j], m, p[j], c);
                t[j - 1] = v;
                c = cc;
            }
            let (v, cc) = adc(t[LIMBS], c, 0);
            t[LIMBS - 1] = v;
            t[LIMBS] = t[LIMBS + 1] + cc;
        }
        let mut out = [t[0], t[1], t[2], t[3]];
        if t[LIMBS] != 0 || geq(&out, p) {
            out = sub_limbs(&out, p);
        }
        Fe(out)
    }

    #[inline]
    pub fn square(&self, a: Fe) -> Fe {
        self.mul(a, a)
    }

    pub fn pow(&self, base: Fe, exp: &BigUint) -> Fe {
        let mut acc = self.one;
        for i in (0..exp.bits()).rev() {
            acc = self.square(acc);
            if exp.bit(i) {
                acc = self.mul(acc, base);
            }
        }
        acc
    }

    pub fn pow_u64(&self, base: Fe, exp: u64) -> Fe {
        self.pow(base, &BigUint::from(exp))
    }

    /// Multiplicative inverse via Fermat; `None` for zero. Assumes p prime.
    pub fn inv(&self, a: Fe) -> Option<Fe> {
        if a.is_zero() {
            return None;
        }
        let e = self.modulus_big.as_ref() - 2u32;
        Some(self.pow(a, &e))
    }

    pub fn from_u64(&self, v: u64) -> Fe {
        self.from_biguint(&BigUint::from(v))
    }

    pub fn from_u128(&self, v: u128) -> Fe {
        self.from_biguint(&BigUint::from(v))
    }

    pub fn from_i64(&self, v: i64) -> Fe {
        if v < 0 {
            self.neg(self.from_u64(v.unsigned_abs()))
        } else {
            self.from_u64(v as u64)
        }
    }

    /// Reduces an arbitrary integer into the field.
    pub fn from_biguint(&self, v: &BigUint) -> Fe {
        let reduced = v % self.modulus_big.as_ref();
        self.mul(Fe(limbs_from_biguint(&reduced)), Fe(self.r2))
    }

    /// Accepts only canonical representatives (`v < p`).
    pub fn from_canonical(&self, v: &BigUint) -> Result<Fe> {
        if v >= self.modulus_big.as_ref() {
            return Err(Error::Field(format!("{v} is not reduced modulo {}", self.modulus_big)));
        }
        Ok(self.from_biguint(v))
    }

    /// Canonical integer in `[0, p)`.
    pub fn to_biguint(&self, a: Fe) -> BigUint {
        biguint_from_limbs(&self.mul(a, Fe([1, 0, 0, 0])).0)
    }

    /// Canonical value if it fits in 128 bits.
    pub fn to_u128(&self, a: Fe) -> Option<u128> {
        let l = self.mul(a, Fe([1, 0, 0, 0])).0;
        if l[2] != 0 || l[3] != 0 {
            return None;
        }
        Some(l[0] as u128 | (l[1] as u128) << 64)
    }

    pub fn to_u64(&self, a: Fe) -> Option<u64> {
        self.to_u128(a).and_then(|v| u64::try_from(v).ok())
    }

    pub fn to_decimal(&self, a: Fe) -> String {
        self.to_biguint(a).to_str_radix(10)
    }

    pub fn parse_decimal(&self, s: &str) -> Result<Fe> {
        let v = BigUint::parse_bytes(s.trim().as_bytes(), 10)
            .ok_or_else(|| Error::Field(format!("not a decimal integer: {s:?}")))?;
        self.from_canonical(&v)
    }

    /// 32-byte little-endian canonical encoding.
    pub fn to_le_bytes(&self, a: Fe) -> [u8; 32] {
        let l = self.mul(a, Fe([1, 0, 0, 0])).0;
        let mut out = [0u8; 32];
        for (i, limb) in l.iter().enumerate() {
            out[i * 8..(i + 1) * 8].copy_from_slice(&limb.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(&self, bytes: &[u8; 32]) -> Result<Fe> {
        self.from_canonical(&BigUint::from_bytes_le(bytes))
    }

    /// Little-endian limbs of the canonical representative.
    pub fn to_limbs(&self, a: Fe) -> [u64; LIMBS] {
        self.mul(a, Fe([1, 0, 0, 0])).0
    }

    /// Bit `i` of the canonical representative.
    pub fn bit(&self, a: Fe, i: u32) -> bool {
        let l = self.mul(a, Fe([1, 0, 0, 0])).0;
        let (limb, off) = ((i / 64) as usize, i % 64);
        limb < LIMBS && (l[limb] >> off) & 1 == 1
    }

    pub fn sum<I: IntoIterator<Item = Fe>>(&self, it: I) -> Fe {
        it.into_iter().fold(Fe::ZERO, |acc, x| self.add(acc, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bn254() -> BigUint {
        crate::params::default_prime()
    }

    #[test]
    fn small_field_matches_integer_arithmetic() {
        let f = PrimeField::new(&BigUint::from(97u32)).unwrap();
        for a in 0u64..97 {
            for b in [0u64, 1, 2, 50, 96] {
                let (x, y) = (f.from_u64(a), f.from_u64(b));
                assert_eq!(f.to_u64(f.add(x, y)), Some((a + b) % 97));
                assert_eq!(f.to_u64(f.sub(x, y)), Some((a + 97 - b) % 97));
                assert_eq!(f.to_u64(f.mul(x, y)), Some((a * b) % 97));
            }
            if a != 0 {
                let i = f.inv(f.from_u64(a)).unwrap();
                assert_eq!(f.to_u64(f.mul(i, f.from_u64(a))), Some(1));
            }
        }
    }

    #[test]
    fn rejects_even_and_oversized_moduli() {
        assert!(PrimeField::new(&BigUint::from(96u32)).is_err());
        assert!(PrimeField::new(&BigUint::from(2u32)).is_err());
        assert!(PrimeField::new(&(BigUint::one() << 257u32)).is_err());
    }

    #[test]
    fn non_canonical_rejected() {
        let f = PrimeField::new(&bn254()).unwrap();
        assert!(f.from_canonical(&bn254()).is_err());
        assert!(f.parse_decimal("abc").is_err());
    }

    #[test]
    fn bits_and_bytes() {
        let f = PrimeField::new(&bn254()).unwrap();
        assert_eq!(f.bits(), 254);
        let x = f.from_u64(0b1011);
        assert!(f.bit(x, 0) && f.bit(x, 1) && !f.bit(x, 2) && f.bit(x, 3));
        assert_eq!(f.from_le_bytes(&f.to_le_bytes(x)).unwrap(), x);
    }

    proptest! {
        #[test]
        fn mul_add_agree_with_biguint(a in proptest::collection::vec(any::<u8>(), 40),
                                      b in proptest::collection::vec(any::<u8>(), 40)) {
            let p = bn254();
            let f = PrimeField::new(&p).unwrap();
            let (ai, bi) = (BigUint::from_bytes_le(&a), BigUint::from_bytes_le(&b));
            let (x, y) = (f.from_biguint(&ai), f.from_biguint(&bi));
            prop_assert_eq!(f.to_biguint(f.mul(x, y)), (&ai * &bi) % &p);
            prop_assert_eq!(f.to_biguint(f.add(x, y)), (&ai + &bi) % &p);
            prop_assert_eq!(f.to_biguint(f.sub(x, y)), (&ai % &p + &p - &bi % &p) % &p);
            prop_assert_eq!(f.parse_decimal(&f.to_decimal(x)).unwrap(), x);
        }

        #[test]
        fn full_width_modulus(a in any::<u64>(), b in any::<u64>()) {
            // 2^256 - 189 is prime and exercises the top-limb carry path.
            let p = (BigUint::one() << 256u32) - 189u32;
            let f = PrimeField::new(&p).unwrap();
            let big = (BigUint::one() << 255u32) + a;
            let (x, y) = (f.from_biguint(&big), f.from_biguint(&(&big + b)));
            prop_assert_eq!(f.to_biguint(f.mul(x, y)), (&big * (&big + b)) % &p);
            prop_assert_eq!(f.to_biguint(f.add(x, y)), (&big + &big + b) % &p);
        }
    }
}

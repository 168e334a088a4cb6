// SPDX-License-Identifier: Apache-2.0

//! Gadgets used by the main circuit.
//!
//! Comparator soundness assumes both operands are already known to be below
//! 2^width; the main circuit range-checks every value it feeds in.

use num_bigint::BigUint;
use num_traits::Zero;

use super::{CircuitBuilder, Num};
use crate::error::{Error, Result};
use crate::field::Fe;
use crate::hash::HashInstance;
use crate::params::LookupTable;

fn int_value(b: &CircuitBuilder, x: &Num) -> BigUint {
    b.field().to_biguint(x.value)
}

fn pow2(b: &CircuitBuilder, i: u64) -> Fe {
    b.pow2(i as u32)
}

fn bit_len(limbs: &[u64]) -> u64 {
    limbs.iter().rposition(|&l| l != 0).map_or(0, |i| 64 * i as u64 + 64 - limbs[i].leading_zeros() as u64)
}

/// Constrains `x` to {0, 1}.
pub fn boolean(b: &mut CircuitBuilder, x: &Num) {
    b.enforce(x, x, x);
}

pub fn alloc_bit(b: &mut CircuitBuilder, bit: bool) -> Num {
    let x = b.alloc_num(if bit { b.field().one() } else { b.field().zero() });
    boolean(b, &x);
    x
}

/// Little-endian bits of `x`, constrained to recompose to `x`. Fails during
/// witness generation when the value needs more than `nbits` bits.
pub fn decompose(b: &mut CircuitBuilder, x: &Num, nbits: u32) -> Result<Vec<Num>> {
    let limbs = b.field().to_limbs(x.value);
    if bit_len(&limbs) > nbits as u64 {
        return Err(Error::Witness(format!("value {} does not fit in {nbits} bits", int_value(b, x))));
    }
    let bits: Vec<Num> = (0..nbits as usize).map(|i| alloc_bit(b, (limbs[i / 64] >> (i % 64)) & 1 == 1)).collect();
    let recomposed = recompose(b, &bits);
    b.enforce_equal(&recomposed, x);
    Ok(bits)
}

/// Σ 2^i·bits[i].
pub fn recompose(b: &CircuitBuilder, bits: &[Num]) -> Num {
    let f = b.field();
    let mut terms = Vec::with_capacity(bits.len());
    let mut value = f.zero();
    for (i, bit) in bits.iter().enumerate() {
        let k = pow2(b, i as u64);
        terms.extend(bit.lc.terms().iter().map(|&(v, c)| (v, f.mul(c, k))));
        value = f.add(value, f.mul(bit.value, k));
    }
    Num::from_parts(f, terms, value)
}

pub fn range_check(b: &mut CircuitBuilder, x: &Num, nbits: u32) -> Result<()> {
    decompose(b, x, nbits).map(|_| ())
}

/// Bit [x < y] for x, y < 2^width, via the top bit of x − y + 2^width.
pub fn lt(b: &mut CircuitBuilder, x: &Num, y: &Num, width: u32) -> Result<Num> {
    let f = b.field();
    if bit_len(&f.to_limbs(x.value)) > width as u64 || bit_len(&f.to_limbs(y.value)) > width as u64 {
        let (xv, yv) = (int_value(b, x), int_value(b, y));
        return Err(Error::Witness(format!("comparator operand exceeds {width} bits ({xv} vs {yv})")));
    }
    let shifted = b.add(&b.sub(x, y), &b.constant(pow2(b, width as u64)));
    let bits = decompose(b, &shifted, width + 1)?;
    Ok(b.sub(&b.one(), &bits[width as usize]))
}

/// cond ? if_true : if_false, for boolean `cond`.
pub fn select(b: &mut CircuitBuilder, cond: &Num, if_true: &Num, if_false: &Num) -> Num {
    let diff = b.sub(if_true, if_false);
    let picked = b.mul(cond, &diff);
    b.add(if_false, &picked)
}

/// |count − center| selected by the comparator bit [count < center].
pub fn abs_center(b: &mut CircuitBuilder, count: &Num, center: u64, width: u32) -> Result<Num> {
    let c = b.constant_u64(center);
    let below = lt(b, count, &c, width)?;
    let up = b.sub(count, &c);
    let down = b.sub(&c, count);
    Ok(select(b, &below, &down, &up))
}

/// Running minimum by comparator/mux, then each input minus the minimum.
pub fn submin_chain(b: &mut CircuitBuilder, values: &[Num], width: u32) -> Result<Vec<Num>> {
    let first = values.first().ok_or_else(|| Error::InputShape("submin of an empty list".into()))?;
    let mut min = first.clone();
    for v in &values[1..] {
        let smaller = lt(b, v, &min, width)?;
        let picked = select(b, &smaller, v, &min);
        min = b.materialize(&picked);
    }
    Ok(values.iter().map(|v| b.sub(v, &min)).collect())
}

/// Bit [x = 0] with a witnessed inverse.
pub fn is_zero(b: &mut CircuitBuilder, x: &Num) -> Num {
    let f = b.field().clone();
    let inv = f.inv(x.value).unwrap_or(f.zero());
    is_zero_with_inverse(b, x, inv)
}

fn is_zero_with_inverse(b: &mut CircuitBuilder, x: &Num, inv: Fe) -> Num {
    let f = b.field().clone();
    let inv = b.alloc_num(inv);
    let z = b.alloc_num(if x.value.is_zero() { f.one() } else { f.zero() });
    let one_minus_z = b.sub(&b.one(), &z);
    b.enforce(x, &inv, &one_minus_z);
    let zero = b.constant(f.zero());
    b.enforce(x, &z, &zero);
    z
}

/// Inverses of every non-zero entry (zeros map to zero), one field inversion.
fn batch_inverse(b: &CircuitBuilder, xs: &[Fe]) -> Vec<Fe> {
    let f = b.field();
    let mut prefix = Vec::with_capacity(xs.len());
    let mut acc = f.one();
    for x in xs {
        prefix.push(acc);
        if !x.is_zero() {
            acc = f.mul(acc, *x);
        }
    }
    let mut inv = f.inv(acc).expect("product of non-zero elements");
    let mut out = vec![f.zero(); xs.len()];
    for i in (0..xs.len()).rev() {
        if !xs[i].is_zero() {
            out[i] = f.mul(inv, prefix[i]);
            inv = f.mul(inv, xs[i]);
        }
    }
    out
}

/// T[u] from the conceptual table: Σ_j [u = j]·T[j] + [l−1 < u]·tail.
pub fn exp_lookup(b: &mut CircuitBuilder, u: &Num, table: &LookupTable, width: u32) -> Result<Num> {
    let f = b.field().clone();
    let l = table.len();
    let diffs: Vec<Num> = (0..l).map(|j| b.sub(u, &b.constant_u64(j as u64))).collect();
    let invs = batch_inverse(b, &diffs.iter().map(|d| d.value).collect::<Vec<_>>());
    let mut terms = Vec::with_capacity(l + 1);
    for (j, (d, inv)) in diffs.iter().zip(invs).enumerate() {
        let eq = is_zero_with_inverse(b, d, inv);
        terms.push(b.scale(&eq, f.from_biguint(&table.entries()[j])));
    }
    let last = b.constant_u64(l as u64 - 1);
    let clamp = lt(b, &last, u, width)?;
    terms.push(b.scale(&clamp, f.from_biguint(table.tail())));
    Ok(b.sum(&terms))
}

/// Bit [Σ 2^i·bits[i] < c] for a constant c, scanning from the top bit.
pub fn lt_constant_bits(b: &mut CircuitBuilder, bits: &[Num], c: &BigUint) -> Num {
    let mut eq: Option<Num> = None; // None means the constant 1
    let mut less = b.constant(b.field().zero());
    for i in (0..bits.len()).rev() {
        let x = &bits[i];
        let taken = match &eq {
            None => x.clone(),
            Some(e) => b.mul(e, x),
        };
        let eq_now = eq.clone().unwrap_or_else(|| b.one());
        if c.bit(i as u64) {
            // prefix equal and x_i = 0 < 1: strictly less from here on
            less = b.add(&less, &b.sub(&eq_now, &taken));
            eq = Some(taken);
        } else {
            eq = Some(b.sub(&eq_now, &taken));
        }
    }
    less
}

/// ρ = S mod d with S read as its canonical integer in [0, p).
///
/// S is decomposed into ⌈log2 p⌉ bits and checked against p bitwise. The
/// quotient is decomposed too, and q·d + ρ = S is checked over the integers
/// limb by limb (limbs of width − 2 bits, carries of width + 1 bits) so that
/// no limb equation can wrap the field. Finally ρ < d.
pub fn mod_reduce(b: &mut CircuitBuilder, sum: &Num, d: &Num, width: u32) -> Result<(Num, Num)> {
    if width < 3 {
        return Err(Error::Param("modular reduction needs a bit width of at least 3".into()));
    }
    let f = b.field().clone();
    let nb = f.bits();
    let s_bits = decompose(b, sum, nb)?;
    let canonical = lt_constant_bits(b, &s_bits, f.modulus());
    b.enforce_equal(&canonical, &b.one());

    let s_int = int_value(b, sum);
    let d_int = int_value(b, d);
    if d_int.is_zero() {
        return Err(Error::Witness("modulus s[n-1] is zero".into()));
    }
    let (q_int, rho_int) = (&s_int / &d_int, &s_int % &d_int);

    range_check(b, d, width)?;
    let rho = b.alloc_num(f.from_biguint(&rho_int));
    range_check(b, &rho, width)?;
    let below = lt(b, &rho, d, width)?;
    b.enforce_equal(&below, &b.one());

    let q = b.alloc_num(f.from_biguint(&q_int));
    let q_bits = decompose(b, &q, nb)?;

    let limb = (width - 2) as usize;
    let limbs = (nb as usize).div_ceil(limb);
    let mut carry = b.constant(f.zero());
    for j in 0..limbs {
        let lo = j * limb;
        let hi = ((j + 1) * limb).min(nb as usize);
        let q_j = recompose(b, &q_bits[lo..hi]);
        let s_j = recompose(b, &s_bits[lo..hi]);
        let prod = b.mul(&q_j, d);
        let mut lhs = b.add(&prod, &carry);
        if j == 0 {
            lhs = b.add(&lhs, &rho);
        }
        if j + 1 == limbs {
            b.enforce_equal(&lhs, &s_j);
        } else {
            let excess = int_value(b, &lhs) - int_value(b, &s_j);
            let next = &excess >> limb;
            let next = b.alloc_num(f.from_biguint(&next));
            range_check(b, &next, width + 1)?;
            let rhs = b.add(&s_j, &b.scale(&next, pow2(b, limb as u64)));
            b.enforce_equal(&lhs, &rhs);
            carry = next;
        }
    }
    Ok((q, rho))
}

/// Intermediate bits of the inverse-CDF selection.
pub struct InverseCdf {
    pub med: Num,
    /// sig_i = [s_i > ρ]
    pub sig: Vec<Num>,
    /// sig'_i = sig_{i−1} ⊕ sig_i (sig_{−1} = 0)
    pub flips: Vec<Num>,
}

/// med = Σ range_i·(sig_{i−1} ⊕ sig_i) with sig_i = [ρ < s_i].
pub fn inverse_cdf(b: &mut CircuitBuilder, s: &[Num], range: &[Num], rho: &Num, width: u32) -> Result<InverseCdf> {
    if s.len() != range.len() || s.is_empty() {
        return Err(Error::InputShape(format!("{} sums for {} range values", s.len(), range.len())));
    }
    let f = b.field().clone();
    let two = f.from_u64(2);
    let mut sig = Vec::with_capacity(s.len());
    let mut flips = Vec::with_capacity(s.len());
    for (i, s_i) in s.iter().enumerate() {
        let bit = lt(b, rho, s_i, width)?;
        let flip = if i == 0 {
            bit.clone()
        } else {
            let prev: &Num = &sig[i - 1];
            let both = b.mul(prev, &bit);
            b.sub(&b.add(prev, &bit), &b.scale(&both, two))
        };
        sig.push(bit);
        flips.push(flip);
    }
    let total = b.sum(&flips);
    b.enforce_equal(&total, &b.one());
    let picked: Vec<Num> = range.iter().zip(&flips).map(|(r, fl)| b.mul(r, fl)).collect();
    let med = b.sum(&picked);
    Ok(InverseCdf { med, sig, flips })
}

/// In-circuit sponge hash, mirroring [`HashInstance::hash`].
pub fn sponge_hash(b: &mut CircuitBuilder, h: &HashInstance, inputs: &[Num]) -> Result<Num> {
    if inputs.is_empty() {
        return Err(Error::InputShape("sponge input must be non-empty".into()));
    }
    let f = b.field().clone();
    let t = h.shape().width;
    let mut state: Vec<Num> = (0..t).map(|_| b.constant(f.zero())).collect();
    state[0] = b.constant_u64(inputs.len() as u64);
    for chunk in inputs.chunks(h.rate()) {
        for (j, x) in chunk.iter().enumerate() {
            state[1 + j] = b.add(&state[1 + j], x);
        }
        permute(b, h, &mut state);
    }
    Ok(state.swap_remove(1))
}

fn sbox(b: &mut CircuitBuilder, x: &Num, alpha: u64) -> Num {
    let mut acc: Option<Num> = None;
    for i in (0..64 - alpha.leading_zeros()).rev() {
        if let Some(a) = &acc {
            acc = Some(b.mul(a, a));
        }
        if (alpha >> i) & 1 == 1 {
            acc = Some(match &acc {
                None => x.clone(),
                Some(a) => b.mul(a, x),
            });
        }
    }
    acc.expect("alpha >= 1")
}

fn permute(b: &mut CircuitBuilder, h: &HashInstance, state: &mut [Num]) {
    let t = state.len();
    let alpha = h.shape().alpha;
    for round in 0..h.rounds() {
        for (i, s) in state.iter_mut().enumerate() {
            *s = b.add(s, &b.constant(h.round_constant(round, i)));
        }
        if h.is_full_round(round) {
            for s in state.iter_mut() {
                *s = sbox(b, s, alpha);
            }
        } else {
            state[0] = sbox(b, &state[0], alpha);
        }
        let prev = state.to_vec();
        for (i, row) in h.mds().iter().enumerate().take(t) {
            let terms: Vec<Num> = row.iter().zip(&prev).map(|(c, x)| b.scale(x, *c)).collect();
            let mixed = b.sum(&terms);
            state[i] = if mixed.lc.len() > 8 { b.materialize(&mixed) } else { mixed };
        }
    }
}

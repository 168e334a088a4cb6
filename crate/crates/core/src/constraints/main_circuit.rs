// SPDX-License-Identifier: Apache-2.0

//! The main circuit: Bind → Util → SubMin → ExpLookup → Mod → InverseCDF.
//!
//! Wire layout: wire 0 is the constant 1, then the public wires
//! `range_0..range_{n-1}, med, com_0..com_{m-1}`, then everything private.

use num_bigint::BigUint;

use super::gadgets::{abs_center, exp_lookup, inverse_cdf, lt, mod_reduce, range_check, sponge_hash, submin_chain};
use super::{CircuitBuilder, ConstraintSystem, Num, Var, Witness};
use crate::error::{Error, Result};
use crate::field::{Fe, PrimeField};
use crate::hash::{Commitment, HashInstance};
use crate::params::{LookupTable, ProtocolParams};

/// Values of the public output wires.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicOutputs {
    pub med: u64,
    pub commitments: Vec<Commitment>,
}

impl PublicOutputs {
    /// All public wire values in layout order, given the range inputs.
    pub fn public_values(&self, f: &PrimeField, range: &[u64]) -> Vec<Fe> {
        let mut out: Vec<Fe> = range.iter().map(|&r| f.from_u64(r)).collect();
        out.push(f.from_u64(self.med));
        out.extend(self.commitments.iter().map(|c| c.value()));
        out
    }

    /// Splits public wire values back into (range, outputs).
    pub fn from_public_values(f: &PrimeField, n: usize, values: &[Fe]) -> Result<(Vec<u64>, PublicOutputs)> {
        if values.len() < n + 1 {
            return Err(Error::InputShape(format!("{} public values for n = {n}", values.len())));
        }
        let small = |v: Fe| f.to_u64(v).ok_or_else(|| Error::InputShape("public value does not fit in 64 bits".into()));
        let range = values[..n].iter().map(|&v| small(v)).collect::<Result<Vec<_>>>()?;
        let med = small(values[n])?;
        let commitments = values[n + 1..].iter().map(|&v| Commitment(v)).collect();
        Ok((range, PublicOutputs { med, commitments }))
    }
}

struct Context {
    field: PrimeField,
    table: LookupTable,
    hash: HashInstance,
    digest: String,
}

impl Context {
    fn new(params: &ProtocolParams) -> Result<Self> {
        params.ensure_valid()?;
        let field = PrimeField::new(&params.p)?;
        let hash = HashInstance::new(&params.hash_id, &field)?;
        Ok(Context { table: params.table()?, digest: params.digest()?, field, hash })
    }
}

fn build(
    params: &ProtocolParams,
    ctx: &Context,
    b: &mut CircuitBuilder,
    inputs: &[u64],
    rands: &[Fe],
) -> Result<(Vec<Var>, PublicOutputs)> {
    let m = params.m;
    if inputs.len() != m || rands.len() != m {
        return Err(Error::InputShape(format!(
            "{} inputs and {} randomness values for m = {m}",
            inputs.len(),
            rands.len()
        )));
    }
    let f = ctx.field.clone();
    let width = params.bit_width;
    let in_width = params.input_width();

    let range_vars: Vec<Var> = params.range.iter().map(|&r| b.alloc(f.from_u64(r))).collect();
    let med_var = b.alloc(f.zero());
    let com_vars: Vec<Var> = (0..m).map(|_| b.alloc(f.zero())).collect();
    let mut public = range_vars.clone();
    public.push(med_var);
    public.extend(&com_vars);

    let range: Vec<Num> = range_vars.iter().map(|&v| b.var(v)).collect();
    for r in &range {
        range_check(b, r, in_width)?;
    }

    // Bind
    let mut xs = Vec::with_capacity(m);
    let mut rs = Vec::with_capacity(m);
    let mut commitments = Vec::with_capacity(m);
    for j in 0..m {
        let x = b.alloc_num(f.from_u64(inputs[j]));
        range_check(b, &x, in_width)?;
        let r = b.alloc_num(rands[j]);
        let com = sponge_hash(b, &ctx.hash, &[x.clone(), r.clone()])?;
        b.set_value(com_vars[j], com.value);
        let public_com = b.var(com_vars[j]);
        b.enforce_equal(&com, &public_com);
        commitments.push(Commitment(com.value));
        xs.push(x);
        rs.push(r);
    }

    // Util
    let center = params.center();
    let mut utils = Vec::with_capacity(range.len());
    for r in &range {
        let mut below = Vec::with_capacity(m);
        for x in &xs {
            below.push(lt(b, x, r, in_width)?);
        }
        let count = b.sum(&below);
        let count = b.materialize(&count);
        let util = abs_center(b, &count, center, width)?;
        utils.push(b.materialize(&util));
    }

    // SubMin
    let cal = submin_chain(b, &utils, width)?;

    // ExpLookup and cumulative sums
    let mut s: Vec<Num> = Vec::with_capacity(range.len());
    for u in &cal {
        let e = exp_lookup(b, u, &ctx.table, width)?;
        let acc = match s.last() {
            None => e,
            Some(prev) => b.add(prev, &e),
        };
        s.push(b.materialize(&acc));
    }

    // Mod
    let total = b.sum(&rs);
    let total = b.materialize(&total);
    let (_, rho) = mod_reduce(b, &total, s.last().expect("n >= 2"), width)?;

    // InverseCDF
    let icdf = inverse_cdf(b, &s, &range, &rho, width)?;
    b.set_value(med_var, icdf.med.value);
    let public_med = b.var(med_var);
    b.enforce_equal(&icdf.med, &public_med);

    let med = f
        .to_u64(icdf.med.value)
        .ok_or_else(|| Error::Witness("selected median does not fit in 64 bits".into()))?;
    Ok((public, PublicOutputs { med, commitments }))
}

/// The constraint system for `params`, built from placeholder inputs.
pub fn synthesize_main(params: &ProtocolParams) -> Result<ConstraintSystem> {
    let ctx = Context::new(params)?;
    let inputs = vec![params.range[0]; params.m];
    let rands = vec![ctx.field.zero(); params.m];
    let mut b = CircuitBuilder::new(&ctx.field);
    let (public, _) = build(params, &ctx, &mut b, &inputs, &rands)?;
    let (cs, _) = b.finish(public, ctx.digest.clone())?;
    Ok(cs)
}

/// Witness for `synthesize_main(params)` on the given provider data.
pub fn gen_witness(params: &ProtocolParams, inputs: &[u64], rands: &[Fe]) -> Result<(Witness, PublicOutputs)> {
    let ctx = Context::new(params)?;
    let mut b = CircuitBuilder::values_only(&ctx.field);
    let (_, outputs) = build(params, &ctx, &mut b, inputs, rands)?;
    Ok((b.witness(), outputs))
}

/// System and witness from one pass over real inputs.
pub fn synthesize_with_witness(
    params: &ProtocolParams,
    inputs: &[u64],
    rands: &[Fe],
) -> Result<(ConstraintSystem, Witness, PublicOutputs)> {
    let ctx = Context::new(params)?;
    let mut b = CircuitBuilder::new(&ctx.field);
    let (public, outputs) = build(params, &ctx, &mut b, inputs, rands)?;
    let (cs, w) = b.finish(public, ctx.digest.clone())?;
    Ok((cs, w, outputs))
}

/// Field elements as the integers the reference mechanism consumes.
pub fn rands_to_biguint(f: &PrimeField, rands: &[Fe]) -> Vec<BigUint> {
    rands.iter().map(|&r| f.to_biguint(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Epsilon, Method};
    use crate::reference::run_reference;

    fn params(range: Vec<u64>, m: usize, method: Method, l: usize, width: u32) -> ProtocolParams {
        let mut p = ProtocolParams::with_table_len(range, m, Epsilon::parse("2*ln(2)").unwrap(), method, l).unwrap();
        p.bit_width = width;
        p
    }

    fn field(p: &ProtocolParams) -> PrimeField {
        PrimeField::new(&p.p).unwrap()
    }

    #[test]
    fn public_layout() {
        let p = params(vec![0, 1, 2], 2, Method::Setk, 3, 16);
        let cs = synthesize_main(&p).unwrap();
        let idx: Vec<u32> = cs.public_indices().iter().map(|v| v.0).collect();
        assert_eq!(idx, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(cs.params_digest(), p.digest().unwrap());
    }

    #[test]
    fn synthesis_is_deterministic_and_grows_with_m() {
        let p2 = params(vec![0, 1, 2], 2, Method::Setk, 3, 16);
        let p4 = params(vec![0, 1, 2], 4, Method::Setk, 3, 16);
        assert_eq!(synthesize_main(&p2).unwrap(), synthesize_main(&p2).unwrap());
        assert!(synthesize_main(&p2).unwrap().num_constraints() < synthesize_main(&p4).unwrap().num_constraints());
    }

    #[test]
    fn fixed_shape_matches_witnessed_shape() {
        let p = params(vec![0, 1, 2, 3, 4, 5, 6], 5, Method::Set0, 3, 16);
        let f = field(&p);
        let rands: Vec<Fe> = [10u64, 20, 10, 5, 7].iter().map(|&r| f.from_u64(r)).collect();
        let (cs, w, out) = synthesize_with_witness(&p, &[3, 1, 4, 1, 5], &rands).unwrap();
        assert_eq!(cs, synthesize_main(&p).unwrap());
        let (w2, out2) = gen_witness(&p, &[3, 1, 4, 1, 5], &rands).unwrap();
        assert_eq!((w.clone(), out.clone()), (w2, out2));
        assert!(cs.is_satisfied(&w).unwrap());
        assert_eq!(out.med, 0);
    }

    #[test]
    fn small_examples_match_reference() {
        let p = params(vec![0, 1, 2], 2, Method::Setk, 3, 16);
        let f = field(&p);
        let (cs, w, out) = synthesize_with_witness(&p, &[1, 1], &[f.zero(), f.zero()]).unwrap();
        assert_eq!(out.med, 0);
        assert!(cs.is_satisfied(&w).unwrap());
        let h = HashInstance::default_for(&f).unwrap();
        assert_eq!(out.commitments[1], h.commit(f.from_u64(1), f.zero()));
        assert_eq!(cs.public_values(&w), out.public_values(&f, &p.range));

        for sum in 0..40u64 {
            let rands = vec![f.from_u64(sum / 2), f.from_u64(sum - sum / 2)];
            let (_, out) = gen_witness(&p, &[0, 2], &rands).unwrap();
            let want = run_reference(&[0, 2], &rands_to_biguint(&f, &rands), &p).unwrap();
            assert_eq!(out.med, want.med, "sum {sum}");
        }
    }

    #[test]
    fn wrapping_randomness_sum() {
        let p = params(vec![0, 1, 2], 2, Method::Set0, 3, 16);
        let f = field(&p);
        let minus_one = f.neg(f.one());
        let rands = vec![minus_one, f.from_u64(5)];
        let (cs, w, out) = synthesize_with_witness(&p, &[1, 2], &rands).unwrap();
        assert!(cs.is_satisfied(&w).unwrap());
        let want = run_reference(&[1, 2], &rands_to_biguint(&f, &rands), &p).unwrap();
        assert_eq!(out.med, want.med);
    }

    #[test]
    fn tampered_public_wires_rejected() {
        let p = params(vec![0, 1, 2], 2, Method::Setk, 3, 16);
        let f = field(&p);
        let (cs, w, _) = synthesize_with_witness(&p, &[1, 1], &[f.from_u64(3), f.from_u64(9)]).unwrap();
        for &v in cs.public_indices() {
            let mut bad = w.clone();
            bad.set(v, f.add(w.get(v), f.one()));
            assert!(!cs.is_satisfied(&bad).unwrap(), "wire {}", v.0);
        }
    }

    #[test]
    fn oversized_input_is_a_witness_error() {
        let p = params(vec![0, 1, 2], 2, Method::Setk, 3, 16);
        let f = field(&p);
        let err = gen_witness(&p, &[1 << 20, 1], &[f.zero(), f.zero()]).unwrap_err();
        assert!(matches!(err, Error::Witness(_)), "{err}");
        assert!(matches!(gen_witness(&p, &[1], &[f.zero()]), Err(Error::InputShape(_))));
    }
}

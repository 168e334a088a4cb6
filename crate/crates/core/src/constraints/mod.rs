// SPDX-License-Identifier: Apache-2.0

//! Rank-1 constraint systems over the protocol field.
//!
//! A system is a list of triples (A, B, C) of sparse linear combinations
//! over the wire vector `w`, each meaning ⟨A,w⟩·⟨B,w⟩ = ⟨C,w⟩. Wire 0 is the
//! constant 1. Circuits are written once against [`CircuitBuilder`], which
//! records constraints and computes wire values side by side; synthesizing
//! the shape alone runs the same code on placeholder inputs.

mod encoding;
pub mod gadgets;
mod main_circuit;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Fe, PrimeField};

pub use encoding::FORMAT_VERSION;
pub use main_circuit::{gen_witness, rands_to_biguint, synthesize_main, synthesize_with_witness, PublicOutputs};

/// Index into the wire vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u32);

impl Var {
    pub const ONE: Var = Var(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Sparse linear combination Σ coeff·w[var], kept sorted by var with no
/// zero coefficients once normalized.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct LinearCombination {
    terms: Vec<(Var, Fe)>,
}

impl LinearCombination {
    pub fn zero() -> Self {
        LinearCombination { terms: Vec::new() }
    }

    pub fn from_terms(terms: Vec<(Var, Fe)>) -> Self {
        LinearCombination { terms }
    }

    pub fn terms(&self) -> &[(Var, Fe)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn normalize(&mut self, f: &PrimeField) {
        if self.terms.windows(2).all(|w| w[0].0 < w[1].0) && self.terms.iter().all(|t| !t.1.is_zero()) {
            return;
        }
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(Var, Fe)> = Vec::with_capacity(self.terms.len());
        for &(v, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = f.add(last.1, c),
                _ => out.push((v, c)),
            }
        }
        out.retain(|t| !t.1.is_zero());
        self.terms = out;
    }

    pub fn evaluate(&self, f: &PrimeField, w: &[Fe]) -> Fe {
        self.terms.iter().fold(f.zero(), |acc, &(v, c)| f.add(acc, f.mul(c, w[v.index()])))
    }

    fn max_var(&self) -> Option<u32> {
        self.terms.iter().map(|t| t.0 .0).max()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub a: LinearCombination,
    pub b: LinearCombination,
    pub c: LinearCombination,
}

impl Constraint {
    pub fn is_satisfied(&self, f: &PrimeField, w: &[Fe]) -> bool {
        f.mul(self.a.evaluate(f, w), self.b.evaluate(f, w)) == self.c.evaluate(f, w)
    }
}

/// The main circuit (or any sub-circuit) as a fixed list of constraints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintSystem {
    field: PrimeField,
    num_vars: usize,
    constraints: Vec<Constraint>,
    public_indices: Vec<Var>,
    params_digest: String,
}

impl ConstraintSystem {
    pub fn new(
        field: PrimeField,
        num_vars: usize,
        constraints: Vec<Constraint>,
        public_indices: Vec<Var>,
        params_digest: String,
    ) -> Result<Self> {
        let cs = ConstraintSystem { field, num_vars, constraints, public_indices, params_digest };
        cs.check_well_formed()?;
        Ok(cs)
    }

    pub fn check_well_formed(&self) -> Result<()> {
        if self.num_vars == 0 {
            return Err(Error::Setup("system has no constant wire".into()));
        }
        let bound = self.num_vars as u32;
        for (i, c) in self.constraints.iter().enumerate() {
            for lc in [&c.a, &c.b, &c.c] {
                if lc.max_var().is_some_and(|v| v >= bound) {
                    return Err(Error::Setup(format!("constraint {i} references a wire beyond {bound}")));
                }
            }
        }
        if self.public_indices.iter().any(|v| v.0 == 0 || v.0 >= bound) {
            return Err(Error::Setup("public wire index out of bounds".into()));
        }
        Ok(())
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Public wires in order: range values, med, commitments.
    pub fn public_indices(&self) -> &[Var] {
        &self.public_indices
    }

    pub fn params_digest(&self) -> &str {
        &self.params_digest
    }

    /// Indices of unsatisfied constraints.
    pub fn unsatisfied(&self, witness: &Witness) -> Result<Vec<usize>> {
        if witness.assignment.len() != self.num_vars {
            return Err(Error::InputShape(format!(
                "witness has {} wires, system expects {}",
                witness.assignment.len(),
                self.num_vars
            )));
        }
        let w = &witness.assignment;
        let f = &self.field;
        let mut bad: Vec<usize> = self
            .constraints
            .par_iter()
            .enumerate()
            .filter(|(_, c)| !c.is_satisfied(f, w))
            .map(|(i, _)| i)
            .collect();
        if w[0] != f.one() {
            bad.insert(0, usize::MAX);
        }
        Ok(bad)
    }

    /// True iff wire 0 is 1 and every constraint holds.
    pub fn is_satisfied(&self, witness: &Witness) -> Result<bool> {
        Ok(self.unsatisfied(witness)?.is_empty())
    }

    /// Values of the public wires in `witness`.
    pub fn public_values(&self, witness: &Witness) -> Vec<Fe> {
        self.public_indices.iter().map(|v| witness.assignment[v.index()]).collect()
    }
}

pub fn check_satisfied(cs: &ConstraintSystem, witness: &Witness) -> Result<bool> {
    cs.is_satisfied(witness)
}

/// A full wire assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub assignment: Vec<Fe>,
}

impl Witness {
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn get(&self, v: Var) -> Fe {
        self.assignment[v.index()]
    }

    pub fn set(&mut self, v: Var, value: Fe) {
        self.assignment[v.index()] = value;
    }
}

/// A linear combination paired with its value under the current assignment.
#[derive(Clone, Debug)]
pub struct Num {
    pub lc: LinearCombination,
    pub value: Fe,
}

impl Num {
    /// Normalizes the terms (sorts, merges, drops zeros).
    pub fn from_parts(f: &PrimeField, terms: Vec<(Var, Fe)>, value: Fe) -> Num {
        let mut lc = LinearCombination { terms };
        lc.normalize(f);
        Num { lc, value }
    }

    /// The single wire this number is, if it is exactly one wire.
    pub fn as_var(&self) -> Option<Var> {
        match self.lc.terms() {
            [(v, _)] if *v != Var::ONE => Some(*v),
            _ => None,
        }
    }
}

/// Records constraints and wire values for one circuit instance.
pub struct CircuitBuilder {
    field: PrimeField,
    pow2: Vec<Fe>,
    values: Vec<Fe>,
    constraints: Vec<Constraint>,
    record: bool,
}

impl CircuitBuilder {
    pub fn new(field: &PrimeField) -> Self {
        let mut pow2 = Vec::with_capacity(512);
        let mut acc = field.one();
        for _ in 0..512 {
            pow2.push(acc);
            acc = field.add(acc, acc);
        }
        CircuitBuilder { field: field.clone(), pow2, values: vec![field.one()], constraints: Vec::new(), record: true }
    }

    /// 2^i in the field.
    pub fn pow2(&self, i: u32) -> Fe {
        match self.pow2.get(i as usize) {
            Some(&v) => v,
            None => self.field.pow_u64(self.field.from_u64(2), i as u64),
        }
    }

    /// A builder that only computes values (for proving with a fixed system).
    pub fn values_only(field: &PrimeField) -> Self {
        CircuitBuilder { record: false, ..Self::new(field) }
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn num_vars(&self) -> usize {
        self.values.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn alloc(&mut self, value: Fe) -> Var {
        self.values.push(value);
        Var(self.values.len() as u32 - 1)
    }

    pub fn set_value(&mut self, v: Var, value: Fe) {
        self.values[v.index()] = value;
    }

    pub fn value(&self, v: Var) -> Fe {
        self.values[v.index()]
    }

    /// The wire `v` as a number.
    pub fn var(&self, v: Var) -> Num {
        Num { lc: LinearCombination { terms: vec![(v, self.field.one())] }, value: self.values[v.index()] }
    }

    pub fn alloc_num(&mut self, value: Fe) -> Num {
        let v = self.alloc(value);
        self.var(v)
    }

    pub fn constant(&self, c: Fe) -> Num {
        let lc = if c.is_zero() { vec![] } else { vec![(Var::ONE, c)] };
        Num { lc: LinearCombination { terms: lc }, value: c }
    }

    pub fn constant_u64(&self, c: u64) -> Num {
        self.constant(self.field.from_u64(c))
    }

    pub fn one(&self) -> Num {
        self.constant(self.field.one())
    }

    pub fn add(&self, x: &Num, y: &Num) -> Num {
        let mut terms = x.lc.terms.clone();
        terms.extend_from_slice(&y.lc.terms);
        let mut lc = LinearCombination { terms };
        lc.normalize(&self.field);
        Num { lc, value: self.field.add(x.value, y.value) }
    }

    pub fn scale(&self, x: &Num, c: Fe) -> Num {
        let f = &self.field;
        let mut lc = LinearCombination { terms: x.lc.terms.iter().map(|&(v, k)| (v, f.mul(k, c))).collect() };
        lc.normalize(f);
        Num { lc, value: f.mul(x.value, c) }
    }

    pub fn sub(&self, x: &Num, y: &Num) -> Num {
        let neg = self.scale(y, self.field.neg(self.field.one()));
        self.add(x, &neg)
    }

    pub fn sum<'a, I: IntoIterator<Item = &'a Num>>(&self, it: I) -> Num {
        let f = &self.field;
        let mut terms = Vec::new();
        let mut value = f.zero();
        for n in it {
            terms.extend_from_slice(&n.lc.terms);
            value = f.add(value, n.value);
        }
        let mut lc = LinearCombination { terms };
        lc.normalize(f);
        Num { lc, value }
    }

    pub fn enforce(&mut self, a: &Num, b: &Num, c: &Num) {
        if self.record {
            self.constraints.push(Constraint { a: a.lc.clone(), b: b.lc.clone(), c: c.lc.clone() });
        }
    }

    /// Enforces x = y.
    pub fn enforce_equal(&mut self, x: &Num, y: &Num) {
        let one = self.one();
        self.enforce(x, &one, y);
    }

    /// Allocates a wire equal to `x` (bounds linear-combination growth).
    pub fn materialize(&mut self, x: &Num) -> Num {
        let v = self.alloc_num(x.value);
        self.enforce_equal(x, &v);
        v
    }

    pub fn mul(&mut self, x: &Num, y: &Num) -> Num {
        let prod = self.alloc_num(self.field.mul(x.value, y.value));
        self.enforce(x, y, &prod);
        prod
    }

    pub fn into_parts(self) -> (PrimeField, Vec<Fe>, Vec<Constraint>) {
        (self.field, self.values, self.constraints)
    }

    pub fn witness(&self) -> Witness {
        Witness { assignment: self.values.clone() }
    }

    /// Finishes into a system plus the matching witness.
    pub fn finish(self, public: Vec<Var>, params_digest: String) -> Result<(ConstraintSystem, Witness)> {
        let num_vars = self.values.len();
        let witness = Witness { assignment: self.values };
        let cs = ConstraintSystem::new(self.field, num_vars, self.constraints, public, params_digest)?;
        Ok((cs, witness))
    }
}

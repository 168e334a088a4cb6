// SPDX-License-Identifier: Apache-2.0

//! Plaintext exponential mechanism for the median.
//!
//! This is the oracle the constraint system is checked against: the same
//! integer pipeline (rank utilities, shift to a zero minimum, table lookup,
//! cumulative sums, modular randomness, inverse-CDF selection) without any
//! field encoding, plus the exact output distribution under uniform ρ.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{center_for, LookupTable, ProtocolParams};

/// rank_DB(r) = |{x ∈ DB : x < r}|.
pub fn rank<T: Ord>(db: &[T], r: &T) -> u64 {
    db.iter().filter(|x| *x < r).count() as u64
}

/// |rank(db, range[i]) − ⌊(m−1)/2⌋| for every range element.
pub fn utilities(db: &[u64], range: &[u64], m: usize) -> Result<Vec<u64>> {
    if db.len() != m {
        return Err(Error::InputShape(format!("database has {} records, expected m = {m}", db.len())));
    }
    let c = center_for(m);
    Ok(range.iter().map(|r| rank(db, r).abs_diff(c)).collect())
}

/// Shifts scores so the minimum becomes 0.
pub fn submin(utils: &[u64]) -> Result<Vec<u64>> {
    let min = *utils.iter().min().ok_or_else(|| Error::InputShape("submin of an empty list".into()))?;
    Ok(utils.iter().map(|u| u - min).collect())
}

/// Table lookups and their prefix sums.
pub fn weights(utils_cal: &[u64], table: &LookupTable) -> Result<(Vec<BigUint>, Vec<BigUint>)> {
    let expvals: Vec<BigUint> = utils_cal.iter().map(|&u| table.get(u).clone()).collect();
    let mut s = Vec::with_capacity(expvals.len());
    let mut acc = BigUint::zero();
    for e in &expvals {
        acc += e;
        s.push(acc.clone());
    }
    if s.last().is_none_or(|v| v.is_zero()) {
        return Err(Error::Degenerate("total weight is zero".into()));
    }
    Ok((expvals, s))
}

/// ρ = (Σ r_i mod p) mod s_last.
pub fn rho(rands: &[BigUint], p: &BigUint, s_last: &BigUint) -> Result<BigUint> {
    if s_last.is_zero() {
        return Err(Error::Degenerate("modulus s_last is zero".into()));
    }
    let sum = rands.iter().fold(BigUint::zero(), |acc, r| (acc + r) % p);
    Ok(sum % s_last)
}

/// Inverse-CDF selection: the first index j with s[j] > ρ.
pub fn select(s: &[BigUint], range: &[u64], rho: &BigUint) -> Result<(u64, usize)> {
    if s.len() != range.len() || s.is_empty() {
        return Err(Error::InputShape(format!("{} cumulative sums for {} range elements", s.len(), range.len())));
    }
    if rho >= s.last().expect("non-empty") {
        return Err(Error::Precondition(format!("rho = {rho} is not below s[n-1] = {}", s[s.len() - 1])));
    }
    let j = s.partition_point(|v| v <= rho);
    Ok((range[j], j))
}

/// Full transcript of one plaintext run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MechanismTrace {
    pub utils: Vec<u64>,
    pub utils_cal: Vec<u64>,
    #[serde(with = "dec_vec")]
    pub expvals: Vec<BigUint>,
    #[serde(with = "dec_vec")]
    pub s: Vec<BigUint>,
    #[serde(with = "crate::params::biguint_dec")]
    pub rho: BigUint,
    pub med: u64,
    pub med_index: usize,
}

mod dec_vec {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};
    use std::str::FromStr;

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| BigUint::from_str(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Output distribution under uniform ρ; masses[i] = expvals[i] / s[n−1].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactDistribution {
    pub masses: Vec<BigRational>,
    pub denominator: BigUint,
    /// Unnormalized masses (the table values U_DB).
    pub weights: Vec<BigUint>,
}

impl ExactDistribution {
    pub fn mass(&self, i: usize) -> &BigRational {
        &self.masses[i]
    }
}

/// Parameters plus their built table; the unit the audits iterate with.
#[derive(Clone, Debug)]
pub struct Mechanism {
    params: ProtocolParams,
    table: LookupTable,
}

impl Mechanism {
    pub fn new(params: &ProtocolParams) -> Result<Self> {
        Ok(Mechanism { params: params.clone(), table: params.table()? })
    }

    pub fn with_table(params: &ProtocolParams, table: LookupTable) -> Self {
        Mechanism { params: params.clone(), table }
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn table(&self) -> &LookupTable {
        &self.table
    }

    /// Calibrated utilities, table weights and cumulative sums for `db`.
    pub fn weigh(&self, db: &[u64]) -> Result<(Vec<u64>, Vec<u64>, Vec<BigUint>, Vec<BigUint>)> {
        let utils = utilities(db, &self.params.range, self.params.m)?;
        let utils_cal = submin(&utils)?;
        let (expvals, s) = weights(&utils_cal, &self.table)?;
        Ok((utils, utils_cal, expvals, s))
    }

    pub fn run(&self, db: &[u64], rands: &[BigUint]) -> Result<MechanismTrace> {
        if rands.len() != self.params.m {
            return Err(Error::InputShape(format!("{} randomness values, expected m = {}", rands.len(), self.params.m)));
        }
        let (utils, utils_cal, expvals, s) = self.weigh(db)?;
        let rho = rho(rands, &self.params.p, s.last().expect("n >= 1"))?;
        let (med, med_index) = select(&s, &self.params.range, &rho)?;
        Ok(MechanismTrace { utils, utils_cal, expvals, s, rho, med, med_index })
    }

    pub fn distribution(&self, db: &[u64]) -> Result<ExactDistribution> {
        let (_, _, expvals, s) = self.weigh(db)?;
        let total = s.last().expect("n >= 1").clone();
        let den = BigInt::from(total.clone());
        let masses = expvals.iter().map(|e| BigRational::new(BigInt::from(e.clone()), den.clone())).collect();
        Ok(ExactDistribution { masses, denominator: total, weights: expvals })
    }
}

pub fn run_reference(db: &[u64], rands: &[BigUint], params: &ProtocolParams) -> Result<MechanismTrace> {
    Mechanism::new(params)?.run(db, rands)
}

pub fn exact_distribution(db: &[u64], params: &ProtocolParams) -> Result<ExactDistribution> {
    Mechanism::new(params)?.distribution(db)
}

/// Σ masses, for sanity checks.
pub fn total_mass(d: &ExactDistribution) -> BigRational {
    d.masses.iter().fold(BigRational::zero(), |acc, m| acc + m)
}

pub fn is_probability_vector(d: &ExactDistribution) -> bool {
    total_mass(d) == BigRational::one() && d.masses.iter().all(|m| *m >= BigRational::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rat;
    use crate::params::{Epsilon, Method};
    use proptest::prelude::*;

    fn big(v: &[u64]) -> Vec<BigUint> {
        v.iter().map(|&x| BigUint::from(x)).collect()
    }

    fn params(range: Vec<u64>, m: usize, eps: &str, method: Method, l: usize) -> ProtocolParams {
        ProtocolParams::with_table_len(range, m, Epsilon::parse(eps).unwrap(), method, l).unwrap()
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&[3, 1, 4, 1, 5], &4), 3);
        assert_eq!(rank::<i64>(&[], &0), 0);
        assert_eq!(rank(&[3, 1, 4, 1, 5], &0), 0);
    }

    #[test]
    fn utility_examples() {
        assert_eq!(utilities(&[3, 1, 4, 1, 5], &(0..7).collect::<Vec<_>>(), 5).unwrap(), vec![2, 2, 0, 0, 1, 2, 3]);
        assert_eq!(utilities(&[1, 1], &[0, 1, 2], 2).unwrap(), vec![0, 0, 2]);
        assert_eq!(utilities(&[0], &[0], 1).unwrap(), vec![0]);
        assert!(matches!(utilities(&[0, 1], &[0], 3), Err(Error::InputShape(_))));
    }

    #[test]
    fn submin_examples() {
        assert_eq!(submin(&[3, 1, 2]).unwrap(), vec![2, 0, 1]);
        assert_eq!(submin(&[0, 0, 2]).unwrap(), vec![0, 0, 2]);
        assert_eq!(submin(&[5, 5, 5]).unwrap(), vec![0, 0, 0]);
        assert!(submin(&[]).is_err());
    }

    #[test]
    fn weight_examples() {
        let p = params((0..7).collect(), 5, "2*ln(2)", Method::Set0, 3);
        let (e, s) = weights(&[2, 2, 0, 0, 1, 2, 3], &p.table().unwrap()).unwrap();
        assert_eq!(e, big(&[1, 1, 4, 4, 2, 1, 0]));
        assert_eq!(s, big(&[1, 2, 6, 10, 12, 13, 13]));
        let p = params((0..7).collect(), 5, "2*ln(2)", Method::Setk, 3);
        let (e, s) = weights(&[2, 2, 0, 0, 1, 2, 3], &p.table().unwrap()).unwrap();
        assert_eq!(e, big(&[1, 1, 4, 4, 2, 1, 1]));
        assert_eq!(s.last().unwrap(), &BigUint::from(14u32));
        let (e, s) = weights(&[0], &p.table().unwrap()).unwrap();
        assert_eq!((e, s), (big(&[4]), big(&[4])));
        let p0 = params((0..7).collect(), 5, "2*ln(2)", Method::Set0, 3);
        assert!(matches!(weights(&[5, 9], &p0.table().unwrap()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rho_examples() {
        let p = BigUint::from(97u32);
        let s = BigUint::from(13u32);
        assert_eq!(rho(&big(&[10, 20, 30]), &p, &s).unwrap(), BigUint::from(8u32));
        assert_eq!(rho(&big(&[0, 0, 0]), &p, &s).unwrap(), BigUint::zero());
        assert_eq!(rho(&big(&[96, 2]), &p, &s).unwrap(), BigUint::one());
        assert!(matches!(rho(&big(&[1]), &p, &BigUint::zero()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn select_examples() {
        let range: Vec<u64> = (0..7).collect();
        assert_eq!(select(&big(&[1, 2, 6, 10, 12, 13, 13]), &range, &BigUint::from(9u32)).unwrap(), (3, 3));
        assert_eq!(select(&big(&[2, 6, 7]), &[0, 1, 2], &BigUint::zero()).unwrap(), (0, 0));
        assert_eq!(select(&big(&[2, 6, 7]), &[0, 1, 2], &BigUint::from(6u32)).unwrap(), (2, 2));
        assert!(matches!(select(&big(&[2, 6, 7]), &[0, 1, 2], &BigUint::from(7u32)), Err(Error::Precondition(_))));
    }

    #[test]
    fn run_examples() {
        let p = params((0..7).collect(), 5, "2*ln(2)", Method::Set0, 3);
        let t = run_reference(&[3, 1, 4, 1, 5], &big(&[10, 20, 10, 5, 7]), &p).unwrap();
        assert_eq!(t.s, big(&[1, 2, 6, 10, 12, 13, 13]));
        assert_eq!(t.rho, BigUint::zero());
        assert_eq!((t.med, t.med_index), (0, 0));
        // 10+20+30+5+7 = 72 and 72 mod 13 = 7
        let t = run_reference(&[3, 1, 4, 1, 5], &big(&[10, 20, 30, 5, 7]), &p).unwrap();
        assert_eq!((t.rho, t.med), (BigUint::from(7u32), 3));

        let p = params(vec![0, 1, 2], 2, "2*ln(2)", Method::Setk, 3);
        let t = run_reference(&[1, 1], &big(&[0, 0]), &p).unwrap();
        assert_eq!(t.s, big(&[4, 8, 9]));
        assert_eq!(t.med, 0);

        let p = params(vec![0, 1], 1, "2*ln(2)", Method::Setk, 3);
        let t = run_reference(&[0], &big(&[0]), &p).unwrap();
        assert_eq!(t.utils, vec![0, 1]);
        assert_eq!(t.expvals, big(&[4, 2]));
        assert_eq!(t.s, big(&[4, 6]));
        assert_eq!(t.med, 0);

        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"s\":[\"4\",\"6\"]"));
        assert_eq!(serde_json::from_str::<MechanismTrace>(&json).unwrap(), t);
    }

    #[test]
    fn distribution_examples() {
        let p = params(vec![0, 1, 2], 2, "2*ln(2)", Method::Setk, 3);
        let d = exact_distribution(&[1, 1], &p).unwrap();
        assert_eq!(d.masses, vec![rat(4, 9), rat(4, 9), rat(1, 9)]);
        let d = exact_distribution(&[1, 2], &p).unwrap();
        assert_eq!(d.masses, vec![rat(4, 10), rat(4, 10), rat(2, 10)]);
        let p = params((0..7).collect(), 5, "2*ln(2)", Method::Set0, 3);
        let d = exact_distribution(&[3, 1, 4, 1, 5], &p).unwrap();
        let expect: Vec<_> = [1, 1, 4, 4, 2, 1, 0].iter().map(|&w| rat(w, 13)).collect();
        assert_eq!(d.masses, expect);
        assert!(is_probability_vector(&d));
    }

    #[test]
    fn sweeping_rho_reproduces_distribution() {
        let p = params((0..6).collect(), 4, "0.5", Method::Set0, 4);
        let mech = Mechanism::new(&p).unwrap();
        for db in [[0u64, 0, 0, 0], [1, 3, 5, 2], [5, 5, 0, 1]] {
            let d = mech.distribution(&db).unwrap();
            let (_, _, _, s) = mech.weigh(&db).unwrap();
            let total: u64 = s.last().unwrap().try_into().unwrap();
            let mut counts = vec![0i64; p.n()];
            for r in 0..total {
                counts[select(&s, &p.range, &BigUint::from(r)).unwrap().1] += 1;
            }
            let got: Vec<_> = counts.iter().map(|&c| rat(c, total as i64)).collect();
            assert_eq!(got, d.masses);
        }
    }

    #[test]
    fn utility_sensitivity_is_one() {
        // every single-record substitution over range^3, range = 0..5
        let range: Vec<u64> = (0..5).collect();
        for a in 0..5u64 {
            for b in 0..5u64 {
                for c in 0..5u64 {
                    let db = [a, b, c];
                    let u = utilities(&db, &range, 3).unwrap();
                    for pos in 0..3 {
                        for v in 0..5u64 {
                            let mut db2 = db;
                            db2[pos] = v;
                            let u2 = utilities(&db2, &range, 3).unwrap();
                            assert!(u.iter().zip(&u2).all(|(x, y)| x.abs_diff(*y) <= 1));
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn calibrated_minimum_hits_head(db in proptest::collection::vec(0u64..10, 1..8)) {
            let m = db.len();
            let p = params((0..10).collect(), m, "0.5", Method::Setk, 8);
            let mech = Mechanism::new(&p).unwrap();
            let (_, cal, e, _) = mech.weigh(&db).unwrap();
            let idx = cal.iter().position(|&c| c == 0).unwrap();
            prop_assert_eq!(&e[idx], mech.table().head());
        }

        #[test]
        fn rho_is_permutation_invariant(mut rands in proptest::collection::vec(any::<u64>(), 1..10), s in 1u64..1000) {
            let p = crate::params::default_prime();
            let rb: Vec<BigUint> = rands.iter().map(|&r| BigUint::from(r)).collect();
            let a = rho(&rb, &p, &BigUint::from(s)).unwrap();
            rands.reverse();
            let rb: Vec<BigUint> = rands.iter().map(|&r| BigUint::from(r)).collect();
            prop_assert_eq!(a, rho(&rb, &p, &BigUint::from(s)).unwrap());
        }
    }
}

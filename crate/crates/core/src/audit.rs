// SPDX-License-Identifier: Apache-2.0

//! Executable checks of the privacy, utility and approximation bounds.
//!
//! Probabilities are exact rationals taken from the reference mechanism's
//! output distribution under uniform ρ. Comparisons against irrational
//! bounds use certified intervals; a comparison the interval cannot decide
//! counts as a failure.
//!
//! Audits work in the ideal model where ρ is exactly uniform, so they only
//! require mechanism-level parameter validity; the field and comparator
//! width play no part.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::numeric::{format_rational, rat_from_biguint, rat_int, Interval, DEFAULT_PRECISION};
use crate::params::{is_probable_prime, LookupTable, Method, ProtocolParams};
use crate::reference::{rho, select, Mechanism};

/// Serialized enclosure of a real bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertifiedBound {
    pub lo: String,
    pub hi: String,
    pub approx: f64,
}

impl From<&Interval> for CertifiedBound {
    fn from(i: &Interval) -> Self {
        CertifiedBound { lo: format_rational(i.lo()), hi: format_rational(i.hi()), approx: i.mid_f64() }
    }
}

fn rational_le(q: &BigRational, bound: &Interval) -> Option<bool> {
    match bound.cmp_rational(q) {
        Some(Ordering::Greater) | Some(Ordering::Equal) => Some(true),
        Some(Ordering::Less) => Some(false),
        None => None,
    }
}

/// A database and one neighbour, with the element where they differ most.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorstPair {
    pub db: Vec<u64>,
    pub db_prime: Vec<u64>,
    pub element: u64,
    pub value: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct DpReport {
    pub epsilon: String,
    pub method: Method,
    pub l: usize,
    pub m: usize,
    pub range: Vec<u64>,
    pub databases: u64,
    pub adjacent_pairs: u64,
    /// Largest P/P' over elements with positive mass under both databases.
    pub max_ratio: Option<String>,
    pub max_ratio_approx: Option<f64>,
    pub worst_pair: Option<WorstPair>,
    pub e_epsilon: CertifiedBound,
    /// Largest mass at an element that has zero mass under the neighbour.
    pub additive_gap: String,
    pub gap_pair: Option<WorstPair>,
    /// e^{ε/2}·k/N with N = T[0].
    pub delta_bound: CertifiedBound,
    pub one_sided_zero_elements: u64,
    pub both_zero_elements: u64,
    /// set0 only: positive-mass elements whose ratio exceeds e^ε but whose
    /// additive gap stays within the δ bound.
    pub ratio_exceedances: u64,
    pub max_exceedance_gap: Option<String>,
    pub exceedance_pair: Option<WorstPair>,
    pub failures: Vec<String>,
    pub pass: bool,
}

#[derive(Clone, Default)]
struct PairStats {
    max_ratio: Option<(BigRational, usize, usize, usize, usize)>,
    max_gap: Option<(BigRational, usize, usize, usize, usize)>,
    max_excess: Extreme,
    excess: u64,
    broken: Extreme,
    one_sided: u64,
    both_zero: u64,
}

type Extreme = Option<(BigRational, usize, usize, usize, usize)>;

fn keep_max(a: Extreme, b: Extreme) -> Extreme {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.0 > x.0 { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

impl PairStats {
    fn merge(self, o: PairStats) -> PairStats {
        PairStats {
            max_ratio: keep_max(self.max_ratio, o.max_ratio),
            max_gap: keep_max(self.max_gap, o.max_gap),
            max_excess: keep_max(self.max_excess, o.max_excess),
            excess: self.excess + o.excess,
            broken: keep_max(self.broken, o.broken),
            one_sided: self.one_sided + o.one_sided,
            both_zero: self.both_zero + o.both_zero,
        }
    }
}

fn decode_db(mut idx: usize, n: usize, m: usize) -> Vec<usize> {
    let mut out = vec![0; m];
    for slot in out.iter_mut() {
        *slot = idx % n;
        idx /= n;
    }
    out
}

/// Enumerates every database in range^m and every single-record
/// replacement, comparing exact output distributions element by element.
pub fn dp_ratio_audit(params: &ProtocolParams, max_pairs: u64) -> Result<DpReport> {
    params.ensure_mechanism_valid()?;
    let mech = Mechanism::new(params)?;
    let (n, m) = (params.n(), params.m);
    let databases = (n as u64).checked_pow(m as u32).ok_or_else(|| Error::AuditScope("database count overflows".into()))?;
    let pairs = databases * m as u64 * (n as u64 - 1) / 2;
    if pairs > max_pairs {
        return Err(Error::AuditScope(format!("{pairs} adjacent pairs exceed the budget of {max_pairs}")));
    }

    let dists: Vec<Vec<BigRational>> = (0..databases as usize)
        .into_par_iter()
        .map(|idx| {
            let db: Vec<u64> = decode_db(idx, n, m).iter().map(|&i| params.range[i]).collect();
            mech.distribution(&db).map(|d| d.masses)
        })
        .collect::<Result<_>>()?;

    let table = mech.table();
    let e_eps = params.epsilon.exp(DEFAULT_PRECISION)?;
    let a = params.epsilon.half_exp(DEFAULT_PRECISION)?;
    let delta = a.scale(&(rat_from_biguint(table.k()) / rat_from_biguint(table.head())));
    let set0 = params.method == Method::Set0;

    let stats = (0..databases as usize)
        .into_par_iter()
        .map(|idx| {
            let digits = decode_db(idx, n, m);
            let mut st = PairStats::default();
            let mut stride = 1usize;
            for &d in digits.iter() {
                for v in d + 1..n {
                    let other = idx + (v - d) * stride;
                    for (e, (p, q)) in dists[idx].iter().zip(&dists[other]).enumerate() {
                        match (p.is_zero(), q.is_zero()) {
                            (true, true) => st.both_zero += 1,
                            (false, false) => {
                                let r = if p > q { p / q } else { q / p };
                                if set0 && rational_le(&r, &e_eps) != Some(true) {
                                    let gap = (p - q).abs();
                                    let entry = Some((gap.clone(), idx, other, e, 0));
                                    if rational_le(&gap, &delta) == Some(true) {
                                        st.excess += 1;
                                        st.max_excess = keep_max(st.max_excess.take(), entry);
                                    } else {
                                        st.broken = keep_max(st.broken.take(), Some((r.clone(), idx, other, e, 0)));
                                    }
                                }
                                st.max_ratio = keep_max(st.max_ratio.take(), Some((r, idx, other, e, 0)));
                            }
                            _ => {
                                st.one_sided += 1;
                                let gap = if p.is_zero() { q.clone() } else { p.clone() };
                                st.max_gap = keep_max(st.max_gap.take(), Some((gap, idx, other, e, 0)));
                            }
                        }
                    }
                }
                stride *= n;
            }
            st
        })
        .reduce(PairStats::default, PairStats::merge);

    let pair_of = |x: &(BigRational, usize, usize, usize, usize)| WorstPair {
        db: decode_db(x.1, n, m).iter().map(|&i| params.range[i]).collect(),
        db_prime: decode_db(x.2, n, m).iter().map(|&i| params.range[i]).collect(),
        element: params.range[x.3],
        value: format_rational(&x.0),
    };

    let mut failures = Vec::new();
    if let Some(b) = &stats.broken {
        let w = pair_of(b);
        failures.push(format!(
            "ratio {} exceeds e^eps and the gap exceeds e^(eps/2)*k/N ({:?} vs {:?} at {})",
            w.value, w.db, w.db_prime, w.element
        ));
    }
    if let (false, Some(r)) = (set0, &stats.max_ratio) {
        match rational_le(&r.0, &e_eps) {
            Some(true) => {}
            Some(false) => failures.push(format!("ratio {} exceeds e^eps", format_rational(&r.0))),
            None => failures.push(format!("ratio {} undecided against e^eps", format_rational(&r.0))),
        }
    }
    if let Some(g) = &stats.max_gap {
        if params.method == Method::Setk {
            failures.push("setk produced a zero-mass element".to_string());
        }
        match rational_le(&g.0, &delta) {
            Some(true) => {}
            Some(false) => failures.push(format!("additive gap {} exceeds e^(eps/2)*k/N", format_rational(&g.0))),
            None => failures.push(format!("additive gap {} undecided against the bound", format_rational(&g.0))),
        }
    }
    Ok(DpReport {
        epsilon: params.epsilon.to_string(),
        method: params.method,
        l: params.l,
        m,
        range: params.range.clone(),
        databases,
        adjacent_pairs: pairs,
        max_ratio: stats.max_ratio.as_ref().map(|r| format_rational(&r.0)),
        max_ratio_approx: stats.max_ratio.as_ref().and_then(|r| r.0.to_f64()),
        worst_pair: stats.max_ratio.as_ref().map(pair_of),
        e_epsilon: (&e_eps).into(),
        additive_gap: format_rational(&stats.max_gap.as_ref().map(|g| g.0.clone()).unwrap_or_else(BigRational::zero)),
        gap_pair: stats.max_gap.as_ref().map(pair_of),
        delta_bound: (&delta).into(),
        one_sided_zero_elements: stats.one_sided,
        both_zero_elements: stats.both_zero,
        ratio_exceedances: stats.excess,
        max_exceedance_gap: stats.max_excess.as_ref().map(|g| format_rational(&g.0)),
        exceedance_pair: stats.max_excess.as_ref().map(pair_of),
        pass: failures.is_empty(),
        failures,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct UtilityRow {
    pub c: i64,
    pub probability: String,
    pub bound: CertifiedBound,
    pub pass: bool,
}

/// Pr[u − OPT ≤ c] = 0 for c ≤ −l under set0.
#[derive(Clone, Debug, Serialize)]
pub struct ZeroClaim {
    pub c_calibrated: i64,
    pub probability: String,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct UtilityReport {
    pub db: Vec<u64>,
    pub opt: i64,
    pub range_size: usize,
    pub optimal_count: usize,
    pub head: String,
    pub rows: Vec<UtilityRow>,
    pub zero_claims: Vec<ZeroClaim>,
    pub pass: bool,
}

/// Exact Pr[u(DB, x) ≤ c] against
/// (|R|/|R_OPT|)·(e^{ε(c−OPT)/2} + e^{ε/2}/(N(e^{ε/2}−1))), with
/// u = −|rank − center|. Without explicit thresholds every c from
/// min u − 1 to OPT is checked (outside that span both sides are trivial).
pub fn utility_bound_audit(params: &ProtocolParams, db: &[u64], thresholds: Option<&[i64]>) -> Result<UtilityReport> {
    params.ensure_mechanism_valid()?;
    let mech = Mechanism::new(params)?;
    let (utils, cal, _, _) = mech.weigh(db)?;
    let dist = mech.distribution(db)?;
    let u: Vec<i64> = utils.iter().map(|&x| -(x as i64)).collect();
    let opt = *u.iter().max().expect("n >= 2");
    let worst = *u.iter().min().expect("n >= 2");
    let r_opt = u.iter().filter(|&&x| x == opt).count();
    let table = mech.table();

    let a = params.epsilon.half_exp(DEFAULT_PRECISION)?;
    let head = Interval::point(rat_from_biguint(table.head()));
    let slack = a.div(&head.mul(&a.sub(&Interval::from_int(1))))?;
    let lead = BigRational::new(BigInt::from(params.n()), BigInt::from(r_opt));

    let cs: Vec<i64> = match thresholds {
        Some(t) => t.to_vec(),
        None => (worst - 1..=opt).collect(),
    };
    let prob_le = |limit: &dyn Fn(usize) -> bool| -> BigRational {
        dist.masses.iter().enumerate().filter(|(i, _)| limit(*i)).fold(BigRational::zero(), |acc, (_, p)| acc + p)
    };
    let mut rows = Vec::with_capacity(cs.len());
    for &c in &cs {
        let pr = prob_le(&|i| u[i] <= c);
        let bound = a.powi(c - opt)?.add(&slack).scale(&lead);
        let pass = rational_le(&pr, &bound) == Some(true);
        rows.push(UtilityRow { c, probability: format_rational(&pr), bound: (&bound).into(), pass });
    }

    let mut zero_claims = Vec::new();
    if params.method == Method::Set0 {
        let l = params.l as i64;
        let deepest = cal.iter().copied().max().unwrap_or(0) as i64 + 1;
        for c in (-deepest.max(l)..=-l).rev() {
            let pr = prob_le(&|i| -(cal[i] as i64) <= c);
            zero_claims.push(ZeroClaim { c_calibrated: c, pass: pr.is_zero(), probability: format_rational(&pr) });
        }
    }
    let pass = rows.iter().all(|r| r.pass) && zero_claims.iter().all(|z| z.pass);
    Ok(UtilityReport {
        db: db.to_vec(),
        opt,
        range_size: params.n(),
        optimal_count: r_opt,
        head: table.head().to_string(),
        rows,
        zero_claims,
        pass,
    })
}

/// Every multiset in range^m, as a sorted database. The mechanism only sees
/// rank counts, so orderings of the same multiset are redundant.
pub fn sorted_databases(params: &ProtocolParams, max_dbs: u64) -> Result<Vec<Vec<u64>>> {
    let (n, m) = (params.n(), params.m);
    let mut out = Vec::new();
    let mut idx = vec![0usize; m];
    loop {
        if out.len() as u64 >= max_dbs {
            return Err(Error::AuditScope(format!("more than {max_dbs} databases")));
        }
        out.push(idx.iter().map(|&i| params.range[i]).collect());
        let Some(pos) = (0..m).rev().find(|&j| idx[j] + 1 < n) else { break };
        let v = idx[pos] + 1;
        for slot in idx[pos..].iter_mut() {
            *slot = v;
        }
    }
    Ok(out)
}

/// [`utility_bound_audit`] over every database from [`sorted_databases`].
pub fn utility_bound_sweep(params: &ProtocolParams, max_dbs: u64) -> Result<Vec<UtilityReport>> {
    sorted_databases(params, max_dbs)?.par_iter().map(|db| utility_bound_audit(params, db, None)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct TableErrorReport {
    pub epsilon: String,
    pub l: usize,
    pub method: Method,
    pub max_error: CertifiedBound,
    pub worst_index: usize,
    pub bound: CertifiedBound,
    /// Non-increasing, T[l−1] = k, and T[i] ≤ e^{ε/2}·T[i+1] everywhere.
    pub shape_ok: bool,
    pub pass: bool,
}

/// max_i |T[i] − T[0]·e^{−εi/2}| against e^{ε/2}/(e^{ε/2}−1), plus the
/// adjacent-ratio and shape invariants.
pub fn table_error_audit(table: &LookupTable) -> Result<TableErrorReport> {
    let entries = table.entries();
    let prec = DEFAULT_PRECISION + table.head().bits() as u32;
    // Everything below is an integer enclosure of a real scaled by 2^P,
    // rounded outward, so the loop never touches a rational.
    let a = table.epsilon().half_exp(prec)?;
    let unit = BigInt::one() << prec as usize;
    let scaled = |q: &BigRational, up: bool| {
        let v = q * rat_int(unit.clone());
        if up { crate::numeric::ceil(&v) } else { crate::numeric::floor(&v) }
    };
    let (a_lo, a_hi) = (scaled(a.lo(), false), scaled(a.hi(), true));
    if a_lo <= unit {
        return Err(Error::Precision("e^(eps/2) not separated from 1".into()));
    }
    let div_floor = |n: BigInt, d: &BigInt| n / d;
    let div_ceil = |n: BigInt, d: &BigInt| (n + d - BigInt::one()) / d;
    let bound = (div_floor(&a_lo << prec as usize, &(&a_hi - &unit)), div_ceil(&a_hi << prec as usize, &(&a_lo - &unit)));
    let inv = (div_floor(&unit << prec as usize, &a_hi), div_ceil(&unit << prec as usize, &a_lo));
    let head = BigInt::from(table.head().clone());

    let mut shape_ok = entries.last() == Some(table.k());
    let mut pass = true;
    let mut worst: Option<((BigInt, BigInt), usize)> = None;
    let mut decay = (unit.clone(), unit.clone());
    for (i, t) in entries.iter().enumerate() {
        let x = BigInt::from(t.clone()) << prec as usize;
        let (y_lo, y_hi) = (&head * &decay.0, &head * &decay.1);
        let err_hi = (&x - &y_lo).max(&y_hi - &x);
        let err_lo = (&x - &y_hi).max(&y_lo - &x).max(BigInt::zero());
        if err_hi >= bound.0 {
            pass = false;
        }
        if worst.as_ref().is_none_or(|(w, _)| err_hi > w.1) {
            worst = Some(((err_lo, err_hi), i));
        }
        if let Some(next) = entries.get(i + 1) {
            if t < next || x > &a_lo * BigInt::from(next.clone()) {
                shape_ok = false;
            }
        }
        decay = ((&decay.0 * &inv.0) >> prec as usize, div_ceil(&decay.1 * &inv.1, &unit));
    }
    let ((e_lo, e_hi), worst_index) = worst.expect("l >= 2");
    let enclose = |lo: BigInt, hi: BigInt| {
        let lo = BigRational::new(lo, unit.clone());
        let hi = BigRational::new(hi, unit.clone());
        let approx = ((&lo + &hi) / rat_int(2)).to_f64().unwrap_or(f64::NAN);
        CertifiedBound { lo: format_rational(&lo), hi: format_rational(&hi), approx }
    };
    Ok(TableErrorReport {
        epsilon: table.epsilon().to_string(),
        l: entries.len(),
        method: table.method(),
        max_error: enclose(e_lo, e_hi),
        worst_index,
        bound: enclose(bound.0, bound.1),
        shape_ok,
        pass: pass && shape_ok,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RhoReport {
    pub p: String,
    pub s: String,
    pub z: String,
    pub closed_form: String,
    /// Total-variation distance by direct summation (small p only).
    pub brute_force: Option<String>,
    pub bound: String,
    pub pass: bool,
}

/// Largest p for which the residue sum is carried out directly.
pub const RHO_BRUTE_FORCE_LIMIT: u64 = 10_000_000;

/// Statistical distance between (U mod s), U uniform on [0, p), and the
/// uniform distribution on [0, s): z(s−z)/(p·s) with z = p mod s.
pub fn rho_distance(p: &BigUint, s: &BigUint) -> Result<RhoReport> {
    if s.is_zero() {
        return Err(Error::Domain("s must be at least 1".into()));
    }
    if !is_probable_prime(p) {
        return Err(Error::Domain(format!("p = {p} is not prime")));
    }
    let z = p % s;
    let (pr, sr, zr) = (rat_from_biguint(p), rat_from_biguint(s), rat_from_biguint(&z));
    let closed = &zr * (&sr - &zr) / (&pr * &sr);
    let bound = &sr / (rat_int(4) * &pr);

    let brute = match (p.to_u64(), s.to_u64()) {
        (Some(pv), Some(sv)) if pv <= RHO_BRUTE_FORCE_LIMIT => {
            let mut counts = vec![0u64; sv.min(pv + 1) as usize];
            let width = counts.len() as u64;
            for u in 0..pv {
                counts[(u % sv) as usize] += 1;
            }
            // residues at or beyond p (s > p) have zero count
            let missing = sv.saturating_sub(width);
            let uniform = BigRational::new(BigInt::one(), BigInt::from(sv));
            let mut tv = BigRational::zero();
            for &c in &counts {
                tv += (BigRational::new(BigInt::from(c), BigInt::from(pv)) - &uniform).abs();
            }
            tv += &uniform * rat_int(missing as i64);
            Some(tv / rat_int(2))
        }
        _ => None,
    };
    let pass = closed <= bound && brute.as_ref().is_none_or(|b| *b == closed);
    Ok(RhoReport {
        p: p.to_string(),
        s: s.to_string(),
        z: z.to_string(),
        closed_form: format_rational(&closed),
        brute_force: brute.as_ref().map(format_rational),
        bound: format_rational(&bound),
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ChiSquareReport {
    pub trials: u64,
    pub counts: Vec<u64>,
    pub expected: Vec<f64>,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub significance: f64,
    /// Indices of zero-mass elements that were sampled (impossible events).
    pub zero_mass_hits: Vec<usize>,
    pub pass: bool,
}

/// Pearson chi-square of observed counts against exact masses.
pub fn chisquare_from_counts(masses: &[BigRational], counts: &[u64], significance: f64) -> ChiSquareReport {
    let trials: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    let mut expected = Vec::with_capacity(masses.len());
    let mut zero_hits = Vec::new();
    for (i, (p, &o)) in masses.iter().zip(counts).enumerate() {
        let e = p.to_f64().unwrap_or(0.0) * trials as f64;
        expected.push(e);
        if p.is_zero() {
            if o > 0 {
                zero_hits.push(i);
            }
            continue;
        }
        cells += 1;
        stat += (o as f64 - e).powi(2) / e;
    }
    let df = cells.saturating_sub(1);
    let p_value = if df == 0 { 1.0 } else { 1.0 - ChiSquared::new(df as f64).expect("df > 0").cdf(stat) };
    ChiSquareReport {
        trials,
        counts: counts.to_vec(),
        expected,
        statistic: stat,
        df,
        p_value,
        significance,
        pass: zero_hits.is_empty() && p_value > significance,
        zero_mass_hits: zero_hits,
    }
}

pub const MIN_CHISQUARE_TRIALS: u64 = 10_000;

/// Samples the mechanism with fresh provider randomness per trial (m
/// uniform field elements summed, then reduced) and tests the empirical
/// frequencies against the exact distribution.
pub fn sampling_chisquare(
    params: &ProtocolParams,
    db: &[u64],
    trials: u64,
    significance: f64,
    seed: u64,
) -> Result<ChiSquareReport> {
    if trials < MIN_CHISQUARE_TRIALS {
        return Err(Error::Precondition(format!("at least {MIN_CHISQUARE_TRIALS} trials required, got {trials}")));
    }
    params.ensure_mechanism_valid()?;
    let mech = Mechanism::new(params)?;
    let (_, _, _, s) = mech.weigh(db)?;
    let dist = mech.distribution(db)?;
    let total = s.last().expect("n >= 2").clone();
    let workers = rayon::current_num_threads().max(1) as u64;
    let chunk = trials.div_ceil(workers);
    let counts = (0..workers)
        .into_par_iter()
        .map(|w| -> Result<Vec<u64>> {
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ w.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let mut counts = vec![0u64; params.n()];
            let todo = chunk.min(trials.saturating_sub(w * chunk));
            for _ in 0..todo {
                let rands: Vec<BigUint> = (0..params.m).map(|_| rng.gen_biguint_below(&params.p)).collect();
                let r = rho(&rands, &params.p, &total)?;
                counts[select(&s, &params.range, &r)?.1] += 1;
            }
            Ok(counts)
        })
        .try_reduce(|| vec![0u64; params.n()], |a, b| Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect()))?;
    Ok(chisquare_from_counts(&dist.masses, &counts, significance))
}

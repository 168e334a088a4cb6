// SPDX-License-Identifier: Apache-2.0

//! Protocol parameters and the discretized exponential lookup table.
//!
//! The privacy budget is carried as the exact string the operator supplied
//! and evaluated once, with certified interval arithmetic, when the table is
//! built. Parties then agree on integers only.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numeric::{self, Interval, DEFAULT_PRECISION};

/// BN254 scalar field modulus, the default protocol prime.
pub const DEFAULT_PRIME: &str =
    "21888242871839275222246405745257275088548364400416034343698204186575808495617";
pub const DEFAULT_TABLE_LEN: usize = 128;
pub const DEFAULT_BIT_WIDTH: u32 = 64;
pub const DEFAULT_HASH_ID: &str = "poseidon-x5-t3-f8-p57";

/// log2 of the slack demanded between the largest cumulative weight and p.
pub const WRAP_MARGIN_BITS: u64 = 40;

pub fn default_prime() -> BigUint {
    BigUint::from_str(DEFAULT_PRIME).expect("constant")
}

/// How the conceptual table continues past the physical entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Set0,
    Setk,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Set0 => "set0",
            Method::Setk => "setk",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "set0" => Ok(Method::Set0),
            "setk" => Ok(Method::Setk),
            other => Err(Error::Param(format!("unknown method {other:?} (expected set0 or setk)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum EpsilonForm {
    Decimal(BigRational),
    /// coef · ln(arg)
    LnMultiple { coef: BigRational, arg: BigRational },
}

/// Privacy budget, kept as its exact textual form.
///
/// Accepted syntax: a decimal literal (`0.5`, `1.3863`), `ln(R)`, or
/// `Q*ln(R)` with decimal `Q`, `R`. The logarithmic form lets budgets such as
/// `2*ln(2)` be represented exactly, so e^{ε/2} = 2 with no rounding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Epsilon {
    source: String,
    form: EpsilonForm,
}

impl Epsilon {
    pub fn parse(s: &str) -> Result<Self> {
        let source = s.trim().to_string();
        let compact: String = source.chars().filter(|c| !c.is_whitespace()).collect();
        let form = if let Some(idx) = compact.find("ln(") {
            let coef = match &compact[..idx] {
                "" => BigRational::one(),
                c => numeric::parse_decimal(c.strip_suffix('*').unwrap_or(c))?,
            };
            let arg = compact[idx + 3..]
                .strip_suffix(')')
                .ok_or_else(|| Error::Param(format!("unbalanced ln(...) in epsilon {source:?}")))?;
            let arg = numeric::parse_decimal(arg)?;
            if !arg.is_positive() {
                return Err(Error::Param(format!("ln of non-positive value in epsilon {source:?}")));
            }
            EpsilonForm::LnMultiple { coef, arg }
        } else {
            EpsilonForm::Decimal(numeric::parse_decimal(&compact)?)
        };
        let eps = Epsilon { source, form };
        let positive = match &eps.form {
            EpsilonForm::Decimal(q) => q.is_positive(),
            EpsilonForm::LnMultiple { coef, arg } => {
                let one = BigRational::one();
                (coef.is_positive() && *arg > one) || (coef.is_negative() && *arg < one)
            }
        };
        if !positive {
            return Err(Error::Param(format!("epsilon must be positive, got {:?}", eps.source)));
        }
        Ok(eps)
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    /// Certified enclosure of e^{ε/2}; a point when it is rational.
    pub fn half_exp(&self, prec: u32) -> Result<Interval> {
        let half = numeric::rat(1, 2);
        Ok(match &self.form {
            EpsilonForm::Decimal(q) => numeric::exp_rational(&(q * &half), prec),
            EpsilonForm::LnMultiple { coef, arg } => {
                let e = coef * &half;
                match exact_rational_power(arg, &e)? {
                    Some(v) => Interval::point(v).with_precision(prec),
                    None => numeric::ln_rational(arg, prec + 32)?.scale(&e).exp().with_precision(prec),
                }
            }
        })
    }

    /// Certified enclosure of e^ε.
    pub fn exp(&self, prec: u32) -> Result<Interval> {
        let a = self.half_exp(prec)?;
        Ok(a.mul(&a))
    }

    /// Certified enclosure of ε itself.
    pub fn value(&self, prec: u32) -> Result<Interval> {
        Ok(match &self.form {
            EpsilonForm::Decimal(q) => Interval::point(q.clone()),
            EpsilonForm::LnMultiple { coef, arg } => numeric::ln_rational(arg, prec)?.scale(coef),
        })
    }

    pub fn approx_f64(&self) -> f64 {
        self.value(64).map(|v| v.mid_f64()).unwrap_or(f64::NAN)
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Epsilon::parse(s)
    }
}

impl Serialize for Epsilon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Epsilon::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// base^e when it is rational, i.e. when the numerator and denominator of
/// `base` are perfect powers of e's denominator.
fn exact_rational_power(base: &BigRational, e: &BigRational) -> Result<Option<BigRational>> {
    let (Some(num), Some(den)) = (e.numer().to_i64(), e.denom().to_u32()) else {
        return Err(Error::Param("epsilon exponent too large".into()));
    };
    let root = |v: &num_bigint::BigInt| {
        let r = v.nth_root(den);
        (num_traits::pow(r.clone(), den as usize) == *v).then_some(r)
    };
    match (root(base.numer()), root(base.denom())) {
        (Some(a), Some(b)) => Ok(Some(Interval::point(BigRational::new(a, b)).powi(num)?.lo().clone())),
        _ => Ok(None),
    }
}

/// Runs `f` at increasing precisions until it decides.
fn with_precision<T>(what: &str, mut f: impl FnMut(u32) -> Result<Option<T>>) -> Result<T> {
    for prec in [DEFAULT_PRECISION, 2 * DEFAULT_PRECISION, 8 * DEFAULT_PRECISION] {
        if let Some(v) = f(prec)? {
            return Ok(v);
        }
    }
    Err(Error::Precision(format!("{what} could not be decided at {} bits", 8 * DEFAULT_PRECISION)))
}

/// k = ⌈1/(e^{ε/2} − 1)⌉.
pub fn k_of_epsilon(eps: &Epsilon) -> Result<BigUint> {
    with_precision("k", |prec| {
        let a = eps.half_exp(prec)?;
        let inv = Interval::point(BigRational::one()).div(&a.sub(&Interval::from_int(1)))?;
        Ok(inv.ceil().map(|c| c.to_biguint().expect("positive")))
    })
}

/// The physical table T[0..l) plus the constant tail of the conceptual table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LookupTable {
    entries: Vec<BigUint>,
    tail: BigUint,
    k: BigUint,
    method: Method,
    epsilon: Epsilon,
}

/// Builds T backward: T[l−1] = k and T[i] = ⌊e^{ε/2}·T[i+1]⌋.
///
/// e^{ε/2} is enclosed in [A_lo, A_hi]/2^P with P a little above the bit
/// length of T[0], so each floor is decided by two integer products; an
/// undecided floor retries at twice the precision.
pub fn build_table(eps: &Epsilon, l: usize, method: Method) -> Result<LookupTable> {
    if l < 2 {
        return Err(Error::Param(format!("table length l must be at least 2, got {l}")));
    }
    let key = (eps.as_str().to_string(), l, method);
    if let Some(t) = table_cache().lock().expect("table cache").get(&key) {
        return Ok(t.clone());
    }
    let k = k_of_epsilon(eps)?;
    let head_bits = k.bits() + ((l as f64 - 1.0) * eps.approx_f64() / 2.0 * std::f64::consts::LOG2_E).ceil() as u64;
    let mut prec = (DEFAULT_PRECISION as u64 + head_bits) as u32;
    let entries = loop {
        let a = eps.half_exp(prec)?;
        let scale = numeric::rat_int(BigInt::one() << prec as usize);
        let a_lo = numeric::floor(&(a.lo() * &scale)).to_biguint().expect("positive");
        let a_hi = numeric::ceil(&(a.hi() * &scale)).to_biguint().expect("positive");
        let mut entries = vec![BigUint::zero(); l];
        entries[l - 1] = k.clone();
        let mut decided = true;
        for i in (0..l - 1).rev() {
            let lo = (&a_lo * &entries[i + 1]) >> prec as usize;
            let hi = (&a_hi * &entries[i + 1]) >> prec as usize;
            if lo != hi {
                decided = false;
                break;
            }
            entries[i] = lo;
        }
        if decided {
            break entries;
        }
        if prec > 1 << 16 {
            return Err(Error::Precision(format!("table entry could not be decided at {prec} bits")));
        }
        prec *= 2;
    };
    let tail = match method {
        Method::Set0 => BigUint::zero(),
        Method::Setk => k.clone(),
    };
    let table = LookupTable { entries, tail, k, method, epsilon: eps.clone() };
    let mut cache = table_cache().lock().expect("table cache");
    if cache.len() >= TABLE_CACHE_LIMIT {
        cache.clear();
    }
    cache.insert(key, table.clone());
    Ok(table)
}

const TABLE_CACHE_LIMIT: usize = 4096;

type TableKey = (String, usize, Method);

/// Tables are pure functions of (ε, l, method) and are rebuilt by every
/// params check, digest and synthesis; memoize them process-wide.
fn table_cache() -> &'static Mutex<HashMap<TableKey, LookupTable>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, LookupTable>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl LookupTable {
    pub fn entries(&self) -> &[BigUint] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tail(&self) -> &BigUint {
        &self.tail
    }

    pub fn k(&self) -> &BigUint {
        &self.k
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn epsilon(&self) -> &Epsilon {
        &self.epsilon
    }

    /// T[0], the unnormalized mass of an optimal element.
    pub fn head(&self) -> &BigUint {
        &self.entries[0]
    }

    /// Conceptual table lookup T[i].
    pub fn get(&self, i: u64) -> &BigUint {
        match usize::try_from(i) {
            Ok(i) if i < self.entries.len() => &self.entries[i],
            _ => &self.tail,
        }
    }

    fn digest_body(&self) -> Value {
        json!({
            "entries": self.entries.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
            "epsilon": self.epsilon.as_str(),
            "method": self.method.to_string(),
            "tail": self.tail.to_string(),
        })
    }

    /// Hex SHA-256 over the canonical (key-sorted) form of entries, tail,
    /// method and the ε string.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(canonical_json(&self.digest_body()).as_bytes()))
    }

    pub fn to_json(&self) -> Value {
        let mut v = self.digest_body();
        let obj = v.as_object_mut().expect("object");
        obj.insert("digest".into(), Value::String(self.digest()));
        obj.insert("k".into(), Value::String(self.k.to_string()));
        obj.insert("l".into(), Value::from(self.entries.len()));
        v
    }

    /// Parses a table document, rebuilding it from ε and checking that the
    /// stored entries and digest match the rebuilt table.
    pub fn from_json(v: &Value) -> Result<LookupTable> {
        let get = |k: &str| v.get(k).ok_or_else(|| Error::Decode(format!("table document lacks {k:?}")));
        let eps = Epsilon::parse(get("epsilon")?.as_str().ok_or_else(|| Error::Decode("epsilon".into()))?)?;
        let method: Method = serde_json::from_value(get("method")?.clone())?;
        let entries = get("entries")?.as_array().ok_or_else(|| Error::Decode("entries".into()))?;
        let table = build_table(&eps, entries.len(), method)?;
        if table.to_json() != *v {
            return Err(Error::Decode(format!(
                "table document does not match the table rebuilt from epsilon {} (expected digest {})",
                eps,
                table.digest()
            )));
        }
        Ok(table)
    }
}

/// Key-sorted JSON with no insignificant whitespace.
pub fn canonical_json(v: &Value) -> String {
    // serde_json's map is a BTreeMap unless preserve_order is enabled, so
    // serialization is already key-sorted.
    serde_json::to_string(v).expect("json")
}

/// Every protocol-wide parameter, shared verbatim by all parties.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolParams {
    #[serde(with = "biguint_dec")]
    pub p: BigUint,
    pub epsilon: Epsilon,
    pub method: Method,
    pub l: usize,
    pub range: Vec<u64>,
    pub m: usize,
    pub bit_width: u32,
    pub hash_id: String,
}

pub(crate) mod biguint_dec {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};
    use std::str::FromStr;

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        BigUint::from_str(&s).map_err(serde::de::Error::custom)
    }
}

impl ProtocolParams {
    /// Defaults: BN254 prime, l = 128, default hash, and the narrowest
    /// comparator width (at least 64 bits, in whole bytes) that holds every
    /// cumulative weight.
    pub fn new(range: Vec<u64>, m: usize, epsilon: Epsilon, method: Method) -> Result<Self> {
        Self::with_table_len(range, m, epsilon, method, DEFAULT_TABLE_LEN)
    }

    pub fn with_table_len(range: Vec<u64>, m: usize, epsilon: Epsilon, method: Method, l: usize) -> Result<Self> {
        let table = build_table(&epsilon, l, method)?;
        let bit_width = default_bit_width(&table, range.len(), &range);
        Ok(ProtocolParams {
            p: default_prime(),
            epsilon,
            method,
            l,
            range,
            m,
            bit_width,
            hash_id: DEFAULT_HASH_ID.to_string(),
        })
    }

    pub fn n(&self) -> usize {
        self.range.len()
    }

    /// Bits of the largest range value. Inputs and range wires are
    /// range-checked to this width, and rank comparisons run at it.
    pub fn input_width(&self) -> u32 {
        let max = self.range.iter().copied().max().unwrap_or(0);
        (64 - max.leading_zeros()).clamp(1, self.bit_width.max(1))
    }

    pub fn table(&self) -> Result<LookupTable> {
        build_table(&self.epsilon, self.l, self.method)
    }

    /// Center of the rank utility, ⌊(m−1)/2⌋.
    pub fn center(&self) -> u64 {
        center_for(self.m)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("params serialize")
    }

    pub fn to_canonical_string(&self) -> String {
        canonical_json(&self.to_json())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Hex SHA-256 binding the parameters, the table digest and the
    /// public-wire layout (range, med, commitments).
    pub fn digest(&self) -> Result<String> {
        let table = self.table()?;
        let body = json!({
            "params": self.to_json(),
            "public_layout": "range,med,commitments",
            "table_digest": table.digest(),
        });
        Ok(hex::encode(Sha256::digest(canonical_json(&body).as_bytes())))
    }

    /// Returns the violated invariants; an empty list means valid.
    pub fn validate(&self) -> Vec<String> {
        validate_params(self)
    }

    pub fn ensure_mechanism_valid(&self) -> Result<()> {
        let report = validate_mechanism(self);
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::Param(report.join("; ")))
        }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::Param(report.join("; ")))
        }
    }
}

pub fn center_for(m: usize) -> u64 {
    (m.saturating_sub(1) / 2) as u64
}

fn default_bit_width(table: &LookupTable, n: usize, range: &[u64]) -> u32 {
    let max_sum = table.head() * BigUint::from(n.max(1));
    let max_range = range.iter().copied().max().unwrap_or(0);
    let need = (max_sum.bits() as u32).max(64 - max_range.leading_zeros());
    if need <= DEFAULT_BIT_WIDTH {
        DEFAULT_BIT_WIDTH
    } else {
        need.div_ceil(8) * 8
    }
}

/// Checks the mechanism needs on its own, with uniform randomness and no
/// circuit: range shape, m, l.
pub fn validate_mechanism(params: &ProtocolParams) -> Vec<String> {
    let mut report = Vec::new();
    let n = params.n();
    if n < 2 {
        report.push(format!("range must have at least 2 elements, has {n}"));
    }
    if params.m < 1 {
        report.push("m must be at least 1".to_string());
    }
    if params.l < 2 {
        report.push(format!("table length l must be at least 2, got {}", params.l));
    }
    if params.range.windows(2).any(|w| w[0] >= w[1]) {
        report.push("range not strictly increasing".to_string());
    }
    report
}

pub fn validate_params(params: &ProtocolParams) -> Vec<String> {
    let mut report = validate_mechanism(params);
    let n = params.n();
    let b = params.bit_width;

    if !is_cached_prime(&params.p) {
        report.push(format!("p = {} is not prime", params.p));
    }
    if params.p.bits() > 256 {
        report.push("p exceeds 256 bits".to_string());
    }
    if b < 3 {
        report.push(format!("bit width {b} is below the minimum of 3"));
    }
    if params.p <= BigUint::one() << (2 * b as u64) {
        report.push(format!("p must exceed 2^(2B) = 2^{}", 2 * b));
    }
    if b < 64 {
        if let Some(v) = params.range.iter().find(|&&v| v >> b != 0) {
            report.push(format!("range value {v} does not fit in {b} bits"));
        }
    }
    if (params.m as u128) >> b.min(127) != 0 {
        report.push(format!("m = {} does not fit in {b} bits", params.m));
    }
    if (params.l as u128).saturating_sub(1) >> b.min(127) != 0 {
        report.push(format!("table length l = {} does not fit in {b} bits", params.l));
    }
    if crate::hash::HashInstance::parse_id(&params.hash_id).is_err() {
        report.push(format!("unknown hash_id {:?}", params.hash_id));
    }
    if params.l >= 2 {
        match params.table() {
            Err(e) => report.push(format!("table cannot be built: {e}")),
            Ok(table) => {
                let max_sum = table.head() * BigUint::from(n.max(1));
                if max_sum >= params.p {
                    report.push(format!("n*T[0] = {max_sum} wraps the field (>= p)"));
                }
                if (&max_sum << WRAP_MARGIN_BITS) > params.p {
                    report.push(format!("n*T[0]/p exceeds 2^-{WRAP_MARGIN_BITS} (cumulative weight not << p)"));
                }
                if max_sum.bits() > b as u64 {
                    report.push(format!("n*T[0] = {max_sum} does not fit in {b} bits"));
                }
            }
        }
    }
    report
}

/// Miller–Rabin with the first 24 prime bases.
/// Every params check re-tests the same modulus; remember the answers.
fn is_cached_prime(n: &BigUint) -> bool {
    static CACHE: OnceLock<Mutex<HashMap<BigUint, bool>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&v) = cache.lock().expect("prime cache").get(n) {
        return v;
    }
    let v = is_probable_prime(n);
    let mut cache = cache.lock().expect("prime cache");
    if cache.len() >= 64 {
        cache.clear();
    }
    cache.insert(n.clone(), v);
    v
}

pub fn is_probable_prime(n: &BigUint) -> bool {
    const BASES: [u32; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for &b in &BASES {
        let b = BigUint::from(b);
        if *n == b {
            return true;
        }
        if (n % &b).is_zero() {
            return false;
        }
    }
    let n1 = n - 1u32;
    let s = n1.trailing_zeros().unwrap_or(0);
    let d = &n1 >> s;
    'outer: for &b in &BASES {
        let mut x = BigUint::from(b).modpow(&d, n);
        if x.is_one() || x == n1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eps(s: &str) -> Epsilon {
        Epsilon::parse(s).unwrap()
    }

    fn entries(t: &LookupTable) -> Vec<u64> {
        t.entries().iter().map(|e| e.to_u64().unwrap()).collect()
    }

    #[test]
    fn k_examples() {
        assert_eq!(k_of_epsilon(&eps("0.5")).unwrap(), BigUint::from(4u32));
        assert_eq!(k_of_epsilon(&eps("1.0")).unwrap(), BigUint::from(2u32));
        assert_eq!(k_of_epsilon(&eps("2*ln(2)")).unwrap(), BigUint::from(1u32));
        assert_eq!(k_of_epsilon(&eps("ln(4)")).unwrap(), BigUint::from(1u32));
    }

    #[test]
    fn epsilon_parse_errors() {
        for bad in ["0", "-1", "abc", "ln(1)", "ln(0.5)", "2*ln(2", ""] {
            assert!(Epsilon::parse(bad).is_err(), "{bad}");
        }
        assert_eq!(eps(" 2 * ln( 2 ) ").as_str(), "2 * ln( 2 )");
    }

    #[test]
    fn decimal_close_to_two_ln_two() {
        // 1.3863 > 2 ln 2, so e^{ε/2} is just above 2 and k stays 1.
        assert_eq!(k_of_epsilon(&eps("1.3863")).unwrap(), BigUint::from(1u32));
        let t = build_table(&eps("1.3863"), 3, Method::Setk).unwrap();
        assert_eq!(entries(&t), vec![4, 2, 1]);
        // 1.3862 < 2 ln 2, so k jumps to 2.
        assert_eq!(k_of_epsilon(&eps("1.3862")).unwrap(), BigUint::from(2u32));
    }

    #[test]
    fn table_examples() {
        let t = build_table(&eps("2*ln(2)"), 3, Method::Set0).unwrap();
        assert_eq!(entries(&t), vec![4, 2, 1]);
        assert!(t.tail().is_zero());
        let t = build_table(&eps("1"), 4, Method::Setk).unwrap();
        assert_eq!(entries(&t), vec![6, 4, 3, 2]);
        assert_eq!(t.tail(), &BigUint::from(2u32));
        let t = build_table(&eps("2*ln(2)"), 3, Method::Setk).unwrap();
        assert_eq!(entries(&t), vec![4, 2, 1]);
        assert_eq!(t.tail(), &BigUint::one());
        assert_eq!(t.get(2), &BigUint::one());
        assert_eq!(t.get(7), &BigUint::one());
        assert!(matches!(build_table(&eps("1"), 1, Method::Setk), Err(Error::Param(_))));
    }

    #[test]
    fn table_digest_detects_tampering() {
        let t = build_table(&eps("0.5"), 16, Method::Setk).unwrap();
        let doc = t.to_json();
        assert_eq!(LookupTable::from_json(&doc).unwrap(), t);
        let mut bad = doc.clone();
        bad["entries"][3] = Value::String("1".into());
        assert!(LookupTable::from_json(&bad).is_err());
        let other = build_table(&eps("0.50"), 16, Method::Setk).unwrap();
        assert_eq!(entries(&other), entries(&t));
        assert_ne!(other.digest(), t.digest(), "the epsilon string is part of the digest");
    }

    #[test]
    fn default_params_validate() {
        let p = ProtocolParams::new((0..100).collect(), 100, eps("0.5"), Method::Set0).unwrap();
        assert_eq!(p.bit_width, 64);
        assert_eq!(p.l, 128);
        assert!(p.validate().is_empty(), "{:?}", p.validate());
        let q = ProtocolParams::new((0..100).collect(), 100, eps("1"), Method::Setk).unwrap();
        assert!(q.bit_width > 64);
        assert!(q.validate().is_empty(), "{:?}", q.validate());
    }

    #[test]
    fn unsorted_range_reported() {
        let mut p = ProtocolParams::new(vec![1, 2, 3], 3, eps("0.5"), Method::Set0).unwrap();
        p.range = vec![3, 1, 2];
        assert!(p.validate().iter().any(|v| v == "range not strictly increasing"));
    }

    #[test]
    fn small_prime_violates_margin() {
        // ε = 1, l = 4 gives T[0] = 6; n = 7 so n·T[0] = 42 < 97 but not << 97.
        let p = ProtocolParams {
            p: BigUint::from(97u32),
            epsilon: eps("1"),
            method: Method::Setk,
            l: 4,
            range: (0..7).collect(),
            m: 3,
            bit_width: 3,
            hash_id: DEFAULT_HASH_ID.into(),
        };
        let report = p.validate();
        assert!(report.iter().any(|v| v.contains("not << p")), "{report:?}");
        assert!(!report.iter().any(|v| v.contains("wraps")), "{report:?}");
    }

    #[test]
    fn params_json_is_key_sorted_and_roundtrips() {
        let p = ProtocolParams::new(vec![0, 1, 2], 2, eps("2*ln(2)"), Method::Setk).unwrap();
        let s = p.to_canonical_string();
        let keys = ["bit_width", "epsilon", "hash_id", "l", "m", "method", "p", "range"];
        let pos: Vec<_> = keys.iter().map(|k| s.find(&format!("\"{k}\"")).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{s}");
        assert_eq!(ProtocolParams::from_json_str(&s).unwrap(), p);
        let mut q = p.clone();
        q.range = vec![0, 1, 3];
        assert_ne!(p.digest().unwrap(), q.digest().unwrap());
    }

    #[test]
    fn primality() {
        assert!(is_probable_prime(&default_prime()));
        assert!(is_probable_prime(&BigUint::from(97u32)));
        assert!(!is_probable_prime(&BigUint::from(91u32)));
        assert!(!is_probable_prime(&BigUint::from(561u32)));
        assert!(!is_probable_prime(&(default_prime() + 2u32)));
    }

    #[test]
    fn recurrence_and_ratio_hold_on_grid() {
        for e in ["0.25", "0.5", "1", "2"] {
            let eps = eps(e);
            let a = eps.half_exp(160).unwrap();
            let t = build_table(&eps, 64, Method::Setk).unwrap();
            for i in 0..63 {
                let next = numeric::rat_from_biguint(&t.entries()[i + 1]);
                let cur = numeric::rat_from_biguint(&t.entries()[i]);
                assert!(cur >= next);
                // T[i] <= a·T[i+1] < T[i] + 1
                let prod = a.scale(&next);
                assert!(prod.lo() >= &cur && prod.hi() < &(cur + BigRational::one()));
            }
        }
    }

    #[test]
    fn k_is_non_increasing_in_epsilon() {
        let mut last = None;
        for e in ["0.01", "0.1", "0.25", "0.5", "1", "1.5", "2", "3", "5"] {
            let k = k_of_epsilon(&eps(e)).unwrap();
            if let Some(prev) = last {
                assert!(k <= prev);
            }
            last = Some(k);
        }
    }
}

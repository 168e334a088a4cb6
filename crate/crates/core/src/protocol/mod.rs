// SPDX-License-Identifier: Apache-2.0

//! The four-party pipeline: data providers commit on the board and hand
//! their openings to the analyst, the analyst proves and posts the result,
//! the verifier checks the proof and matches commitments from public data
//! only.
//!
//! Providers are matched to circuit positions by the board order of their
//! commitment entries. The provider-to-analyst channel is a plain message
//! (an [`Opening`] value or file); no transport encryption is implemented.

pub mod board;

use std::time::{Duration, Instant};

use num_bigint::{BigUint, RandBigInt};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use board::{open_board, serve, Board, BoardEntry, EntryKind, FileBoard, MemoryBoard, ServerHandle, TcpBoard};

use crate::backend::{Backend, KeyMaterial, Proof, ProvingKey, VerifyingKey};
use crate::constraints::{gen_witness, synthesize_main, ConstraintSystem, PublicOutputs};
use crate::error::{Error, Result};
use crate::field::{Fe, PrimeField};
use crate::hash::{Commitment, HashInstance};
use crate::params::ProtocolParams;

pub const ANALYST: &str = "analyst";

pub fn provider_name(i: usize) -> String {
    format!("provider-{i}")
}

/// What a provider sends the analyst.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opening {
    pub owner: String,
    pub board_index: u64,
    pub x: u64,
    #[serde(with = "crate::params::biguint_dec")]
    pub r: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProviderRecord {
    pub owner: String,
    pub x: u64,
    pub r: Fe,
    pub c: Commitment,
    pub board_index: u64,
}

impl ProviderRecord {
    pub fn opening(&self, f: &PrimeField) -> Opening {
        Opening { owner: self.owner.clone(), board_index: self.board_index, x: self.x, r: f.to_biguint(self.r) }
    }
}

/// Draws r uniformly from [0, p), posts Com(x, r) and returns the record.
pub fn provider_commit<R: RngCore>(
    owner: &str,
    x: u64,
    params: &ProtocolParams,
    rng: &mut R,
    board: &dyn Board,
) -> Result<ProviderRecord> {
    if params.range.binary_search(&x).is_err() {
        return Err(Error::Domain(format!("input {x} is not in the query range")));
    }
    let f = PrimeField::new(&params.p)?;
    let hash = HashInstance::new(&params.hash_id, &f)?;
    let r = f.from_biguint(&rng.gen_biguint_below(&params.p));
    let c = hash.commit(f.from_u64(x), r);
    let board_index = board.append(owner, EntryKind::Commitment, &c.to_decimal(&f))?;
    Ok(ProviderRecord { owner: owner.to_string(), x, r, c, board_index })
}

/// The analyst's posted result.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultPayload {
    pub params_digest: String,
    pub range: Vec<u64>,
    pub med: u64,
    pub commitments: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ProveOutcome {
    pub range: Vec<u64>,
    pub outputs: PublicOutputs,
    pub proof: Proof,
    pub witness_time: Duration,
    pub prove_time: Duration,
}

fn check_key_digest(key_digest: &str, params: &ProtocolParams) -> Result<()> {
    if key_digest != params.digest()? {
        return Err(Error::Key("key material was generated for different parameters".into()));
    }
    Ok(())
}

/// Builds the witness from the openings (ordered by board index) and proves.
pub fn verexp_prove(
    backend: &dyn Backend,
    pk: &ProvingKey,
    cs: &ConstraintSystem,
    params: &ProtocolParams,
    openings: &[Opening],
) -> Result<ProveOutcome> {
    check_key_digest(&pk.header.params_digest, params)?;
    if openings.len() != params.m {
        return Err(Error::InputShape(format!("{} provider openings, expected m = {}", openings.len(), params.m)));
    }
    let mut ordered: Vec<&Opening> = openings.iter().collect();
    ordered.sort_by_key(|o| o.board_index);
    let f = PrimeField::new(&params.p)?;
    let xs: Vec<u64> = ordered.iter().map(|o| o.x).collect();
    let rs: Vec<Fe> = ordered.iter().map(|o| f.from_canonical(&o.r)).collect::<Result<_>>()?;

    let t = Instant::now();
    let (witness, _) = gen_witness(params, &xs, &rs)?;
    let witness_time = t.elapsed();
    let t = Instant::now();
    let (outputs, proof) = backend.prove(pk, cs, &params.range, &witness)?;
    let prove_time = t.elapsed();
    Ok(ProveOutcome { range: params.range.clone(), outputs, proof, witness_time, prove_time })
}

/// Posts the result and the proof; returns their board indices.
pub fn post_result(
    board: &dyn Board,
    owner: &str,
    params_digest: &str,
    f: &PrimeField,
    range: &[u64],
    outputs: &PublicOutputs,
    proof: &Proof,
) -> Result<(u64, u64)> {
    let payload = ResultPayload {
        params_digest: params_digest.to_string(),
        range: range.to_vec(),
        med: outputs.med,
        commitments: outputs.commitments.iter().map(|c| c.to_decimal(f)).collect(),
    };
    let ri = board.append(owner, EntryKind::Result, &serde_json::to_string(&payload)?)?;
    let pi = board.append(owner, EntryKind::Proof, &hex::encode(proof.to_bytes()))?;
    Ok((ri, pi))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub accept: bool,
    pub med: Option<u64>,
    pub reasons: Vec<String>,
}

impl Verdict {
    fn reject(reason: impl Into<String>) -> Verdict {
        Verdict { accept: false, med: None, reasons: vec![reason.into()] }
    }
}

/// Checks the board against the verifying key and parameters. Reads only
/// public data. Missing entries are an [`Error::IncompleteBoard`], not a
/// reject.
pub fn verexp_verify(backend: &dyn Backend, vk: &VerifyingKey, params: &ProtocolParams, board: &dyn Board) -> Result<Verdict> {
    let entries = board.list()?;
    let commitments: Vec<&BoardEntry> = entries.iter().filter(|e| e.kind == EntryKind::Commitment).collect();
    let results: Vec<&BoardEntry> = entries.iter().filter(|e| e.kind == EntryKind::Result).collect();
    let proofs: Vec<&BoardEntry> = entries.iter().filter(|e| e.kind == EntryKind::Proof).collect();
    if commitments.len() < params.m {
        return Err(Error::IncompleteBoard(format!("{} of {} provider commitments posted", commitments.len(), params.m)));
    }
    if results.is_empty() || proofs.is_empty() {
        return Err(Error::IncompleteBoard("no result or proof posted yet".into()));
    }
    if commitments.len() > params.m {
        return Ok(Verdict::reject(format!("board holds {} commitments, expected {}", commitments.len(), params.m)));
    }
    if results.len() > 1 || proofs.len() > 1 {
        return Ok(Verdict::reject("board holds more than one result or proof"));
    }

    let f = PrimeField::new(&params.p)?;
    let digest = params.digest()?;
    let Ok(result) = serde_json::from_str::<ResultPayload>(&results[0].payload) else {
        return Ok(Verdict::reject("malformed result entry"));
    };
    let Some(proof) = hex::decode(&proofs[0].payload).ok().and_then(|b| Proof::from_bytes(&b).ok()) else {
        return Ok(Verdict::reject("malformed proof entry"));
    };
    let parsed: std::result::Result<Vec<Commitment>, _> =
        result.commitments.iter().map(|c| Commitment::parse(&f, c)).collect();
    let Ok(outputs_coms) = parsed else {
        return Ok(Verdict::reject("malformed commitment in result"));
    };

    let mut reasons = Vec::new();
    if vk.header.params_digest != digest {
        reasons.push("verifying key is for different parameters".to_string());
    }
    if result.params_digest != digest {
        reasons.push("result was produced under different parameters".to_string());
    }
    if result.range != params.range {
        reasons.push("result range differs from the query range".to_string());
    }
    if outputs_coms.len() != params.m {
        reasons.push(format!("result carries {} commitments, expected {}", outputs_coms.len(), params.m));
    }
    let outputs = PublicOutputs { med: result.med, commitments: outputs_coms };
    if !backend.verify(vk, &params.range, &outputs, &proof) {
        reasons.push("proof does not verify".to_string());
    }
    for (i, entry) in commitments.iter().enumerate() {
        let matches = Commitment::parse(&f, &entry.payload).ok().is_some_and(|c| outputs.commitments.get(i) == Some(&c));
        if !matches {
            reasons.push(format!("board commitment {i} (entry {}) differs from circuit output", entry.index));
        }
    }
    let accept = reasons.is_empty();
    Ok(Verdict { accept, med: accept.then_some(result.med), reasons })
}

/// Fault injected by a dishonest analyst.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tamper {
    /// Replace provider 0's input before witness generation.
    ProviderInput,
    /// Replace provider 0's randomness before witness generation.
    ProviderRandomness,
    /// Post a different med than the one proved.
    Med,
    /// Post a different commitment than the one proved.
    Commitment,
    /// Prove and post under a modified range list.
    Range,
}

impl Tamper {
    pub const ALL: [Tamper; 5] =
        [Tamper::ProviderInput, Tamper::ProviderRandomness, Tamper::Med, Tamper::Commitment, Tamper::Range];

    pub fn parse(s: &str) -> Result<Tamper> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| Error::Param(format!("unknown tamper class {s:?}")))
    }
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub params: ProtocolParams,
    pub seed: u64,
    /// Provider inputs; drawn from the range with the seed when absent.
    pub inputs: Option<Vec<u64>>,
    pub lambda: u32,
    pub tamper: Option<Tamper>,
}

impl PipelineConfig {
    pub fn new(params: ProtocolParams, seed: u64) -> Self {
        PipelineConfig { params, seed, inputs: None, lambda: crate::backend::DEFAULT_LAMBDA, tamper: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Timings {
    pub setup: Duration,
    pub commit: Duration,
    pub witness: Duration,
    pub prove: Duration,
    pub verify: Duration,
}

/// Everything public about one run. Timings are kept out of the JSON so
/// that equal seeds give byte-identical documents.
#[derive(Clone, Debug, Serialize)]
pub struct Transcript {
    pub params: ProtocolParams,
    pub params_digest: String,
    pub seed: u64,
    pub tamper: Option<Tamper>,
    pub backend_id: String,
    pub board: Vec<BoardEntry>,
    pub verdict: Verdict,
    #[serde(skip)]
    pub timings: Timings,
}

impl Transcript {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }
}

fn phase<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Phase { phase: name, source: Box::new(e) })
}

fn sub_rng(seed: u64, label: &str, i: u64) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"verexp/pipeline/v1/");
    h.update(label.as_bytes());
    h.update(seed.to_le_bytes());
    h.update(i.to_le_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// Setup, provider commitments, proof, verification, in that order.
pub fn run_pipeline(config: &PipelineConfig, backend: &dyn Backend, board: &dyn Board) -> Result<Transcript> {
    let params = &config.params;
    phase("params", params.ensure_valid())?;
    let f = PrimeField::new(&params.p)?;
    let digest = params.digest()?;
    let mut timings = Timings::default();

    let t = Instant::now();
    let cs = phase("setup", synthesize_main(params))?;
    let keys: KeyMaterial = phase("setup", backend.setup(&cs, config.lambda))?;
    timings.setup = t.elapsed();

    let inputs = match &config.inputs {
        Some(v) => v.clone(),
        None => {
            let mut rng = sub_rng(config.seed, "inputs", 0);
            (0..params.m).map(|_| params.range[rng.gen_range(0..params.n())]).collect()
        }
    };
    if inputs.len() != params.m {
        return phase("commit", Err(Error::InputShape(format!("{} inputs for m = {}", inputs.len(), params.m))));
    }
    let t = Instant::now();
    let mut openings = Vec::with_capacity(params.m);
    for (i, &x) in inputs.iter().enumerate() {
        let mut rng = sub_rng(config.seed, "provider", i as u64);
        let rec = phase("commit", provider_commit(&provider_name(i), x, params, &mut rng, board))?;
        openings.push(rec.opening(&f));
    }
    timings.commit = t.elapsed();

    let n = params.n();
    match config.tamper {
        Some(Tamper::ProviderInput) => {
            let pos = params.range.binary_search(&openings[0].x).expect("committed input is in range");
            openings[0].x = params.range[(pos + 1) % n];
        }
        Some(Tamper::ProviderRandomness) => {
            openings[0].r = (&openings[0].r + 1u32) % &params.p;
        }
        _ => {}
    }

    let outcome = if config.tamper == Some(Tamper::Range) {
        let mut forged = params.clone();
        let last = forged.range.len() - 1;
        forged.range[last] += 1;
        let forged_cs = phase("prove", synthesize_main(&forged))?;
        let forged_keys = phase("prove", backend.setup(&forged_cs, config.lambda))?;
        phase("prove", verexp_prove(backend, &forged_keys.pk, &forged_cs, &forged, &openings))?
    } else {
        phase("prove", verexp_prove(backend, &keys.pk, &cs, params, &openings))?
    };
    timings.witness = outcome.witness_time;
    timings.prove = outcome.prove_time;

    let mut outputs = outcome.outputs.clone();
    match config.tamper {
        Some(Tamper::Med) => {
            let pos = params.range.binary_search(&outputs.med).unwrap_or(0);
            outputs.med = params.range[(pos + 1) % n];
        }
        Some(Tamper::Commitment) => {
            let mut rng = sub_rng(config.seed, "tamper", 0);
            outputs.commitments[0] = Commitment(f.from_biguint(&rng.gen_biguint_below(&params.p)));
        }
        _ => {}
    }
    let result_digest = if config.tamper == Some(Tamper::Range) { outcome.proof.header.params_digest.clone() } else { digest.clone() };
    phase("prove", post_result(board, ANALYST, &result_digest, &f, &outcome.range, &outputs, &outcome.proof))?;

    let t = Instant::now();
    let verdict = phase("verify", verexp_verify(backend, &keys.vk, params, board))?;
    timings.verify = t.elapsed();

    Ok(Transcript {
        params: params.clone(),
        params_digest: digest,
        seed: config.seed,
        tamper: config.tamper,
        backend_id: backend.id().to_string(),
        board: phase("verify", board.list())?,
        verdict,
        timings,
    })
}

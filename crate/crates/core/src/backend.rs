// SPDX-License-Identifier: Apache-2.0

//! Proof backends behind a setup/prove/verify interface.
//!
//! [`MockBackend`] is transparent: it checks the constraint system directly
//! and authenticates the public inputs and outputs with a keyed digest. It
//! gives completeness and tamper detection for testing. It is NOT
//! zero-knowledge and NOT cryptographically sound: the verifying key holds
//! the same secret the prover uses, so anyone holding a verifying key can
//! forge proofs.
//!
//! [`ExternalBackend`] hands the serialized system, witness and keys to an
//! external command, for plugging in a real proof system.

use std::path::{Path, PathBuf};
use std::process::Command;

use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256, Sha512};

use crate::constraints::{ConstraintSystem, PublicOutputs, Witness};
use crate::error::{Error, Result};
use crate::field::{Fe, PrimeField};

pub const MOCK_BACKEND_ID: &str = "mock-hmac-sha512";
pub const DEFAULT_LAMBDA: u32 = 128;

/// Header fields shared by every key and proof container.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub kind: String,
    pub backend_id: String,
    pub params_digest: String,
    pub lambda: u32,
    /// Protocol modulus, decimal.
    pub modulus: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub public_io_digest: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProvingKey {
    pub header: ArtifactHeader,
    pub blob: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyingKey {
    pub header: ArtifactHeader,
    pub blob: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyMaterial {
    pub pp: Vec<u8>,
    pub pk: ProvingKey,
    pub vk: VerifyingKey,
}

impl KeyMaterial {
    pub fn backend_id(&self) -> &str {
        &self.vk.header.backend_id
    }

    pub fn params_digest(&self) -> &str {
        &self.vk.header.params_digest
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    pub header: ArtifactHeader,
    pub payload: Vec<u8>,
}

impl Proof {
    pub fn backend_id(&self) -> &str {
        &self.header.backend_id
    }
}

const KEY_MAGIC: &[u8; 4] = b"VXKY";
const PROOF_MAGIC: &[u8; 4] = b"VXPF";
const CONTAINER_VERSION: u32 = 1;

fn encode(magic: &[u8; 4], header: &ArtifactHeader, body: &[u8]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + body.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(body);
    out
}

fn decode(magic: &[u8; 4], bytes: &[u8]) -> Result<(ArtifactHeader, Vec<u8>)> {
    let short = || Error::Decode("truncated container".into());
    if bytes.len() < 12 || &bytes[..4] != magic {
        return Err(Error::Decode("wrong container magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CONTAINER_VERSION {
        return Err(Error::Decode(format!("unsupported container version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let hend = 12usize.checked_add(hlen).filter(|&e| e + 8 <= bytes.len()).ok_or_else(short)?;
    let header: ArtifactHeader =
        serde_json::from_slice(&bytes[12..hend]).map_err(|e| Error::Decode(format!("bad header: {e}")))?;
    let blen = u64::from_le_bytes(bytes[hend..hend + 8].try_into().expect("8 bytes"));
    let body = &bytes[hend + 8..];
    if body.len() as u64 != blen {
        return Err(short());
    }
    Ok((header, body.to_vec()))
}

impl ProvingKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode(KEY_MAGIC, &self.header, &self.blob)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, blob) = decode(KEY_MAGIC, bytes)?;
        if header.kind != "proving_key" {
            return Err(Error::Decode(format!("expected a proving key, found {:?}", header.kind)));
        }
        Ok(ProvingKey { header, blob })
    }
}

impl VerifyingKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode(KEY_MAGIC, &self.header, &self.blob)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, blob) = decode(KEY_MAGIC, bytes)?;
        if header.kind != "verifying_key" {
            return Err(Error::Decode(format!("expected a verifying key, found {:?}", header.kind)));
        }
        Ok(VerifyingKey { header, blob })
    }
}

impl Proof {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode(PROOF_MAGIC, &self.header, &self.payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = decode(PROOF_MAGIC, bytes)?;
        if header.kind != "proof" || payload.is_empty() {
            return Err(Error::Decode("not a proof or empty payload".into()));
        }
        Ok(Proof { header, payload })
    }
}

/// The public statement: range inputs and claimed outputs, as wire values.
pub fn public_io(f: &PrimeField, range: &[u64], outputs: &PublicOutputs) -> Vec<Fe> {
    outputs.public_values(f, range)
}

/// Hex SHA-256 over the params digest and the public wire values.
pub fn public_io_digest(f: &PrimeField, params_digest: &str, values: &[Fe]) -> String {
    let mut h = Sha256::new();
    h.update(b"verexp/public-io/v1");
    h.update((params_digest.len() as u64).to_le_bytes());
    h.update(params_digest.as_bytes());
    h.update((values.len() as u64).to_le_bytes());
    for &v in values {
        h.update(f.to_le_bytes(v));
    }
    hex::encode(h.finalize())
}

/// SHA-256 of the serialized system.
pub fn cs_digest(cs: &ConstraintSystem) -> [u8; 32] {
    let mut h = Sha256::new();
    cs.encode(&mut |b: &[u8]| h.update(b));
    h.finalize().into()
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    fn setup(&self, cs: &ConstraintSystem, lambda: u32) -> Result<KeyMaterial>;

    /// Proves that `witness` satisfies `cs` with the given range inputs,
    /// returning the outputs read off the public wires.
    fn prove(
        &self,
        pk: &ProvingKey,
        cs: &ConstraintSystem,
        range: &[u64],
        witness: &Witness,
    ) -> Result<(PublicOutputs, Proof)>;

    /// Never errors: any mismatch or malformed input is a reject.
    fn verify(&self, vk: &VerifyingKey, range: &[u64], outputs: &PublicOutputs, proof: &Proof) -> bool;
}

fn field_of(header: &ArtifactHeader) -> Result<PrimeField> {
    let p = header.modulus.parse().map_err(|_| Error::Key("bad modulus in key header".into()))?;
    PrimeField::new(&p)
}

/// Reads outputs off the public wires after checking the range wires match.
fn read_outputs(cs: &ConstraintSystem, range: &[u64], witness: &Witness) -> Result<PublicOutputs> {
    let f = cs.field();
    let values = cs.public_values(witness);
    let (wired_range, outputs) = PublicOutputs::from_public_values(f, range.len(), &values)?;
    if wired_range != range {
        return Err(Error::Refusal("range inputs differ from the witness's range wires".into()));
    }
    Ok(outputs)
}

/// Transparent keyed-digest backend (see module docs).
#[derive(Clone, Debug)]
pub struct MockBackend {
    seed: u64,
}

type MacImpl = Hmac<Sha512>;

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        MockBackend { seed }
    }

    fn tag_len(lambda: u32) -> Result<usize> {
        if lambda == 0 || lambda > 256 {
            return Err(Error::Setup(format!("mock backend supports 1 <= lambda <= 256, got {lambda}")));
        }
        Ok((2 * lambda as usize).div_ceil(8).max(32))
    }

    fn mac(secret: &[u8], io_digest: &str) -> MacImpl {
        let mut mac = MacImpl::new_from_slice(secret).expect("hmac accepts any key length");
        mac.update(b"verexp/mock-proof/v1");
        mac.update(io_digest.as_bytes());
        mac
    }
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend::new(0)
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        MOCK_BACKEND_ID
    }

    fn setup(&self, cs: &ConstraintSystem, lambda: u32) -> Result<KeyMaterial> {
        Self::tag_len(lambda)?;
        cs.check_well_formed()?;
        let digest = cs_digest(cs);
        let mut h = Sha256::new();
        h.update(b"verexp/mock-setup/v1");
        h.update(self.seed.to_le_bytes());
        h.update(digest);
        let secret: [u8; 32] = h.finalize().into();
        let mut blob = secret.to_vec();
        blob.extend_from_slice(&digest);
        let header = |kind: &str| ArtifactHeader {
            kind: kind.into(),
            backend_id: self.id().into(),
            params_digest: cs.params_digest().into(),
            lambda,
            modulus: cs.field().modulus().to_string(),
            public_io_digest: None,
        };
        Ok(KeyMaterial {
            pp: digest.to_vec(),
            pk: ProvingKey { header: header("proving_key"), blob: blob.clone() },
            vk: VerifyingKey { header: header("verifying_key"), blob },
        })
    }

    fn prove(
        &self,
        pk: &ProvingKey,
        cs: &ConstraintSystem,
        range: &[u64],
        witness: &Witness,
    ) -> Result<(PublicOutputs, Proof)> {
        if pk.header.backend_id != self.id() {
            return Err(Error::Key(format!("proving key is for backend {:?}", pk.header.backend_id)));
        }
        if pk.header.params_digest != cs.params_digest() {
            return Err(Error::Key("proving key and constraint system disagree on params digest".into()));
        }
        if pk.blob.len() != 64 || pk.blob[32..] != cs_digest(cs) {
            return Err(Error::Key("proving key was not set up for this constraint system".into()));
        }
        let tag_len = Self::tag_len(pk.header.lambda).map_err(|e| Error::Key(e.to_string()))?;
        let bad = cs.unsatisfied(witness)?;
        if !bad.is_empty() {
            return Err(Error::Refusal(format!("witness violates {} constraint(s), first {:?}", bad.len(), bad[0])));
        }
        let outputs = read_outputs(cs, range, witness)?;
        let f = cs.field();
        let io = public_io_digest(f, cs.params_digest(), &cs.public_values(witness));
        let tag = Self::mac(&pk.blob[..32], &io).finalize().into_bytes();
        let header = ArtifactHeader { kind: "proof".into(), public_io_digest: Some(io), ..pk.header.clone() };
        Ok((outputs, Proof { header, payload: tag[..tag_len].to_vec() }))
    }

    fn verify(&self, vk: &VerifyingKey, range: &[u64], outputs: &PublicOutputs, proof: &Proof) -> bool {
        let h = &vk.header;
        let Ok(tag_len) = Self::tag_len(h.lambda) else { return false };
        if h.backend_id != self.id()
            || proof.header.backend_id != h.backend_id
            || proof.header.params_digest != h.params_digest
            || proof.header.lambda != h.lambda
            || proof.payload.len() != tag_len
            || vk.blob.len() != 64
        {
            return false;
        }
        let Ok(f) = field_of(h) else { return false };
        let io = public_io_digest(&f, &h.params_digest, &public_io(&f, range, outputs));
        if proof.header.public_io_digest.as_deref() != Some(io.as_str()) {
            return false;
        }
        Self::mac(&vk.blob[..32], &io).verify_truncated_left(&proof.payload).is_ok()
    }
}

/// Delegates to an external program:
///
/// ```text
/// CMD setup  <cs.bin> <lambda> <out-dir>          -> out-dir/{pp,pk,vk}.bin
/// CMD prove  <pk.bin> <cs.bin> <witness.bin> <out> -> out (proof payload)
/// CMD verify <vk.bin> <public.json> <proof.bin>   -> exit 0 iff accept
/// ```
///
/// `public.json` is `{"params_digest": .., "public": [decimal wire values]}`.
#[derive(Clone, Debug)]
pub struct ExternalBackend {
    command: PathBuf,
    id: String,
}

impl ExternalBackend {
    pub fn new(command: impl Into<PathBuf>) -> Self {
        let command = command.into();
        let id = format!("external:{}", command.display());
        ExternalBackend { command, id }
    }

    fn run(&self, args: &[&dyn AsRef<std::ffi::OsStr>]) -> Result<std::process::Output> {
        let mut cmd = Command::new(&self.command);
        for a in args {
            cmd.arg(a);
        }
        cmd.output().map_err(|e| Error::Backend(format!("cannot run {}: {e}", self.command.display())))
    }

    fn scratch() -> Result<tempdir::Scratch> {
        tempdir::Scratch::new()
    }
}

mod tempdir {
    use std::path::{Path, PathBuf};
    use std::sync::atomic::{AtomicU64, Ordering};

    static COUNTER: AtomicU64 = AtomicU64::new(0);

    /// A scratch directory removed on drop.
    pub struct Scratch(PathBuf);

    impl Scratch {
        pub fn new() -> crate::error::Result<Self> {
            let n = COUNTER.fetch_add(1, Ordering::Relaxed);
            let dir = std::env::temp_dir().join(format!("verexp-ext-{}-{n}", std::process::id()));
            std::fs::create_dir_all(&dir)?;
            Ok(Scratch(dir))
        }

        pub fn path(&self) -> &Path {
            &self.0
        }
    }

    impl Drop for Scratch {
        fn drop(&mut self) {
            let _ = std::fs::remove_dir_all(&self.0);
        }
    }
}

fn failed(out: &std::process::Output, what: &str) -> Error {
    Error::Backend(format!("external {what} failed ({}): {}", out.status, String::from_utf8_lossy(&out.stderr).trim()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    Ok(std::fs::write(path, bytes)?)
}

impl Backend for ExternalBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn setup(&self, cs: &ConstraintSystem, lambda: u32) -> Result<KeyMaterial> {
        let dir = Self::scratch()?;
        let cs_path = dir.path().join("cs.bin");
        write(&cs_path, &cs.to_bytes())?;
        let out = self.run(&[&"setup", &cs_path, &lambda.to_string(), &dir.path()])?;
        if !out.status.success() {
            return Err(failed(&out, "setup"));
        }
        let read = |name: &str| std::fs::read(dir.path().join(name)).map_err(|e| Error::Setup(format!("{name}: {e}")));
        let header = |kind: &str| ArtifactHeader {
            kind: kind.into(),
            backend_id: self.id.clone(),
            params_digest: cs.params_digest().into(),
            lambda,
            modulus: cs.field().modulus().to_string(),
            public_io_digest: None,
        };
        Ok(KeyMaterial {
            pp: read("pp.bin")?,
            pk: ProvingKey { header: header("proving_key"), blob: read("pk.bin")? },
            vk: VerifyingKey { header: header("verifying_key"), blob: read("vk.bin")? },
        })
    }

    fn prove(
        &self,
        pk: &ProvingKey,
        cs: &ConstraintSystem,
        range: &[u64],
        witness: &Witness,
    ) -> Result<(PublicOutputs, Proof)> {
        if pk.header.params_digest != cs.params_digest() || pk.header.backend_id != self.id {
            return Err(Error::Key("proving key does not match this system and backend".into()));
        }
        let outputs = read_outputs(cs, range, witness)?;
        let dir = Self::scratch()?;
        let (pk_path, cs_path, w_path, out_path) =
            (dir.path().join("pk.bin"), dir.path().join("cs.bin"), dir.path().join("w.bin"), dir.path().join("proof.bin"));
        write(&pk_path, &pk.blob)?;
        write(&cs_path, &cs.to_bytes())?;
        write(&w_path, &witness.to_bytes(cs.field(), cs.params_digest()))?;
        let out = self.run(&[&"prove", &pk_path, &cs_path, &w_path, &out_path])?;
        if !out.status.success() {
            return Err(failed(&out, "prove"));
        }
        let payload = std::fs::read(&out_path)?;
        if payload.is_empty() {
            return Err(Error::Backend("external prover produced an empty proof".into()));
        }
        let io = public_io_digest(cs.field(), cs.params_digest(), &cs.public_values(witness));
        let header = ArtifactHeader { kind: "proof".into(), public_io_digest: Some(io), ..pk.header.clone() };
        Ok((outputs, Proof { header, payload }))
    }

    fn verify(&self, vk: &VerifyingKey, range: &[u64], outputs: &PublicOutputs, proof: &Proof) -> bool {
        let h = &vk.header;
        if proof.header.backend_id != self.id || h.backend_id != self.id || proof.header.params_digest != h.params_digest {
            return false;
        }
        let Ok(f) = field_of(h) else { return false };
        let values = public_io(&f, range, outputs);
        if proof.header.public_io_digest.as_deref() != Some(public_io_digest(&f, &h.params_digest, &values).as_str()) {
            return false;
        }
        let Ok(dir) = Self::scratch() else { return false };
        let (vk_path, pub_path, proof_path) =
            (dir.path().join("vk.bin"), dir.path().join("public.json"), dir.path().join("proof.bin"));
        let public: Value = json!({
            "params_digest": h.params_digest,
            "public": values.iter().map(|&v| f.to_decimal(v)).collect::<Vec<_>>(),
        });
        let written = write(&vk_path, &vk.blob)
            .and_then(|_| write(&pub_path, public.to_string().as_bytes()))
            .and_then(|_| write(&proof_path, &proof.payload));
        if written.is_err() {
            return false;
        }
        matches!(self.run(&[&"verify", &vk_path, &pub_path, &proof_path]), Ok(out) if out.status.success())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::synthesize_with_witness;
    use crate::params::{Epsilon, Method, ProtocolParams};

    fn instance(range: Vec<u64>) -> (ProtocolParams, ConstraintSystem, Witness, PublicOutputs) {
        let eps = Epsilon::parse("2*ln(2)").unwrap();
        let mut p = ProtocolParams::with_table_len(range, 2, eps, Method::Setk, 3).unwrap();
        p.bit_width = 16;
        let f = PrimeField::new(&p.p).unwrap();
        let (cs, w, out) = synthesize_with_witness(&p, &[1, 1], &[f.from_u64(3), f.from_u64(4)]).unwrap();
        (p, cs, w, out)
    }

    #[test]
    fn round_trip_and_determinism() {
        let (p, cs, w, out) = instance(vec![0, 1, 2]);
        let backend = MockBackend::new(7);
        let keys = backend.setup(&cs, 128).unwrap();
        assert_eq!(keys, backend.setup(&cs, 128).unwrap());
        assert_ne!(keys.vk, MockBackend::new(8).setup(&cs, 128).unwrap().vk);
        let (outputs, proof) = backend.prove(&keys.pk, &cs, &p.range, &w).unwrap();
        assert_eq!(outputs, out);
        assert_eq!(proof.payload.len(), 32);
        assert!(backend.verify(&keys.vk, &p.range, &outputs, &proof));

        let bytes = proof.to_bytes();
        assert_eq!(Proof::from_bytes(&bytes).unwrap(), proof);
        assert!(Proof::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert_eq!(VerifyingKey::from_bytes(&keys.vk.to_bytes()).unwrap(), keys.vk);
        assert_eq!(ProvingKey::from_bytes(&keys.pk.to_bytes()).unwrap(), keys.pk);
        assert!(VerifyingKey::from_bytes(&keys.pk.to_bytes()).is_err());
    }

    #[test]
    fn different_params_bind_different_digests() {
        let (_, cs_a, _, _) = instance(vec![0, 1, 2]);
        let (_, cs_b, _, _) = instance(vec![0, 1, 3]);
        let b = MockBackend::default();
        assert_ne!(b.setup(&cs_a, 128).unwrap().params_digest(), b.setup(&cs_b, 128).unwrap().params_digest());
    }

    #[test]
    fn refuses_unsatisfied_witness() {
        let (p, cs, mut w, _) = instance(vec![0, 1, 2]);
        let b = MockBackend::default();
        let keys = b.setup(&cs, 128).unwrap();
        let med = cs.public_indices()[3];
        let f = cs.field().clone();
        w.set(med, f.add(w.get(med), f.one()));
        assert!(matches!(b.prove(&keys.pk, &cs, &p.range, &w), Err(Error::Refusal(_))));
    }

    #[test]
    fn tampering_rejects() {
        let (p, cs, w, _) = instance(vec![0, 1, 2]);
        let b = MockBackend::default();
        let keys = b.setup(&cs, 128).unwrap();
        let (out, proof) = b.prove(&keys.pk, &cs, &p.range, &w).unwrap();

        let mut other = out.clone();
        other.med = if out.med == 0 { 1 } else { 0 };
        assert!(!b.verify(&keys.vk, &p.range, &other, &proof));

        let mut other = out.clone();
        other.commitments[0] = other.commitments[1];
        assert!(!b.verify(&keys.vk, &p.range, &other, &proof));

        assert!(!b.verify(&keys.vk, &[0, 1, 3], &out, &proof));

        let mut bad = proof.clone();
        bad.payload[5] ^= 1;
        assert!(!b.verify(&keys.vk, &p.range, &out, &bad));
        let mut bad = proof.clone();
        bad.payload.pop();
        assert!(!b.verify(&keys.vk, &p.range, &out, &bad));
        let mut bad = proof.clone();
        bad.header.backend_id = "other".into();
        assert!(!b.verify(&keys.vk, &p.range, &out, &bad));

        let (_, cs2, _, _) = instance(vec![0, 1, 3]);
        let keys2 = b.setup(&cs2, 128).unwrap();
        assert!(!b.verify(&keys2.vk, &p.range, &out, &proof));
        assert!(matches!(b.prove(&keys2.pk, &cs, &p.range, &w), Err(Error::Key(_))));
        assert!(matches!(b.prove(&keys.pk, &cs, &[0, 1, 3], &w), Err(Error::Refusal(_))));
    }

    #[test]
    fn lambda_sets_digest_width() {
        let (p, cs, w, _) = instance(vec![0, 1, 2]);
        let b = MockBackend::default();
        let keys = b.setup(&cs, 256).unwrap();
        let (out, proof) = b.prove(&keys.pk, &cs, &p.range, &w).unwrap();
        assert_eq!(proof.payload.len(), 64);
        assert!(b.verify(&keys.vk, &p.range, &out, &proof));
        assert!(matches!(b.setup(&cs, 512), Err(Error::Setup(_))));
    }

    #[cfg(unix)]
    #[test]
    fn external_backend_plumbing() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("backend.sh");
        std::fs::write(
            &script,
            "#!/bin/sh\ncase \"$1\" in\n  setup) printf pp > \"$4/pp.bin\"; printf pk > \"$4/pk.bin\"; printf vk > \"$4/vk.bin\";;\n  prove) printf proof > \"$5\";;\n  verify) grep -q params_digest \"$3\" && [ \"$(cat \"$4\")\" = proof ];;\n  *) exit 2;;\nesac\n",
        )
        .unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let (p, cs, w, _) = instance(vec![0, 1, 2]);
        let b = ExternalBackend::new(&script);
        let keys = b.setup(&cs, 128).unwrap();
        assert_eq!(keys.pk.blob, b"pk");
        let (out, proof) = b.prove(&keys.pk, &cs, &p.range, &w).unwrap();
        assert!(b.verify(&keys.vk, &p.range, &out, &proof));
        let mut other = out.clone();
        other.med += 1;
        assert!(!b.verify(&keys.vk, &p.range, &other, &proof));

        let missing = ExternalBackend::new(dir.path().join("nope"));
        assert!(matches!(missing.setup(&cs, 128), Err(Error::Backend(_))));
    }
}

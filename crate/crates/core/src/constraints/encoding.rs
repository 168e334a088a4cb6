// SPDX-License-Identifier: Apache-2.0

//! Binary container for systems and witnesses.
//!
//! Layout: 4-byte magic, u32 version, u32 header length, JSON header, body.
//! Integers are little-endian; field elements are 32-byte little-endian
//! canonical integers. A system body is the public wire indices (u32 count,
//! u32 each) then the constraints (u64 count, each row three sparse
//! combinations of u32 term count and (u32 wire, element) pairs). A witness
//! body is a u64 count and the elements.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::{Constraint, ConstraintSystem, LinearCombination, Var, Witness};
use crate::error::{Error, Result};
use crate::field::{Fe, PrimeField};

const CS_MAGIC: &[u8; 4] = b"VXCS";
const WITNESS_MAGIC: &[u8; 4] = b"VXWT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    params_digest: String,
    modulus: String,
    num_vars: u64,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Decode("unexpected end of data".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn fe(&mut self, f: &PrimeField) -> Result<Fe> {
        f.from_le_bytes(self.take(32)?.try_into().expect("32 bytes"))
            .map_err(|e| Error::Decode(e.to_string()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Decode(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn write_header(out: &mut impl FnMut(&[u8]), magic: &[u8; 4], header: &Header) {
    let json = serde_json::to_vec(header).expect("header serializes");
    out(magic);
    out(&FORMAT_VERSION.to_le_bytes());
    out(&(json.len() as u32).to_le_bytes());
    out(&json);
}

fn read_header<'a>(bytes: &'a [u8], magic: &[u8; 4], kind: &str) -> Result<(Reader<'a>, Header, PrimeField)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != magic {
        return Err(Error::Decode(format!("not a {kind} container")));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Decode(format!("unsupported {kind} format version {version}")));
    }
    let len = r.u32()? as usize;
    let header: Header =
        serde_json::from_slice(r.take(len)?).map_err(|e| Error::Decode(format!("bad {kind} header: {e}")))?;
    if header.kind != kind {
        return Err(Error::Decode(format!("header kind {:?}, expected {kind:?}", header.kind)));
    }
    let p: BigUint = header.modulus.parse().map_err(|_| Error::Decode("bad modulus in header".into()))?;
    let field = PrimeField::new(&p)?;
    Ok((r, header, field))
}

fn write_lc(out: &mut impl FnMut(&[u8]), f: &PrimeField, lc: &LinearCombination) {
    out(&(lc.terms.len() as u32).to_le_bytes());
    for &(v, c) in &lc.terms {
        let mut term = [0u8; 36];
        term[..4].copy_from_slice(&v.0.to_le_bytes());
        term[4..].copy_from_slice(&f.to_le_bytes(c));
        out(&term);
    }
}

fn read_lc(r: &mut Reader, f: &PrimeField) -> Result<LinearCombination> {
    let len = r.u32()? as usize;
    let mut terms = Vec::with_capacity(len.min(1 << 16));
    for _ in 0..len {
        let v = Var(r.u32()?);
        terms.push((v, r.fe(f)?));
    }
    Ok(LinearCombination { terms })
}

impl ConstraintSystem {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode(&mut |b: &[u8]| out.extend_from_slice(b));
        out
    }

    /// Streams the encoding of [`Self::to_bytes`] into `out`.
    pub fn encode(&self, out: &mut impl FnMut(&[u8])) {
        let f = &self.field;
        let header = Header {
            kind: "constraint_system".into(),
            params_digest: self.params_digest.clone(),
            modulus: f.modulus().to_string(),
            num_vars: self.num_vars as u64,
        };
        write_header(out, CS_MAGIC, &header);
        out(&(self.public_indices.len() as u32).to_le_bytes());
        for v in &self.public_indices {
            out(&v.0.to_le_bytes());
        }
        out(&(self.constraints.len() as u64).to_le_bytes());
        for c in &self.constraints {
            write_lc(out, f, &c.a);
            write_lc(out, f, &c.b);
            write_lc(out, f, &c.c);
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, header, field) = read_header(bytes, CS_MAGIC, "constraint_system")?;
        let npub = r.u32()? as usize;
        let public = (0..npub).map(|_| r.u32().map(Var)).collect::<Result<Vec<_>>>()?;
        let count = r.u64()? as usize;
        let mut constraints = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let a = read_lc(&mut r, &field)?;
            let b = read_lc(&mut r, &field)?;
            let c = read_lc(&mut r, &field)?;
            constraints.push(Constraint { a, b, c });
        }
        r.finish()?;
        let num_vars = usize::try_from(header.num_vars).map_err(|_| Error::Decode("num_vars overflow".into()))?;
        ConstraintSystem::new(field, num_vars, constraints, public, header.params_digest)
            .map_err(|e| Error::Decode(e.to_string()))
    }
}

impl Witness {
    pub fn to_bytes(&self, f: &PrimeField, params_digest: &str) -> Vec<u8> {
        let mut out = Vec::new();
        let mut put = |b: &[u8]| out.extend_from_slice(b);
        let header = Header {
            kind: "witness".into(),
            params_digest: params_digest.to_string(),
            modulus: f.modulus().to_string(),
            num_vars: self.assignment.len() as u64,
        };
        write_header(&mut put, WITNESS_MAGIC, &header);
        put(&(self.assignment.len() as u64).to_le_bytes());
        for &v in &self.assignment {
            put(&f.to_le_bytes(v));
        }
        out
    }

    /// Decodes a witness, returning it with its field and params digest.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Witness, PrimeField, String)> {
        let (mut r, header, field) = read_header(bytes, WITNESS_MAGIC, "witness")?;
        let count = r.u64()?;
        if count != header.num_vars {
            return Err(Error::Decode("witness length disagrees with header".into()));
        }
        let assignment = (0..count).map(|_| r.fe(&field)).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok((Witness { assignment }, field, header.params_digest))
    }
}

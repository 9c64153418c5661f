//! Binary envelope for fitted pipelines.
//!
//! Layout (integers little-endian):
//!
//! | field            | size              |
//! |------------------|-------------------|
//! | magic `MLBZ`     | 4                 |
//! | format version   | u16               |
//! | pipeline length  | u32               |
//! | pipeline JSON    | pipeline length   |
//! | state count      | u32               |
//! | per state: len   | u32               |
//! | per state: bytes | len               |
//!
//! The pipeline JSON is `{"description", "lambda", "fit_fingerprint"}`.
//! States are each primitive's own encoding and are stored verbatim.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ExecError, FittedPipeline};
use crate::annotations::Catalog;
use crate::graph::{bind, make_template, PipelineDescription};
use crate::primitives::NativeRegistry;
use crate::tuning::space::Assignment;

pub const MAGIC: &[u8; 4] = b"MLBZ";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    description: PipelineDescription,
    lambda: Assignment,
    fit_fingerprint: String,
}

fn put_block(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

pub fn save(f: &FittedPipeline) -> Vec<u8> {
    let header = Header {
        description: f.pipeline.template.description().clone(),
        lambda: f.pipeline.lambda.clone(),
        fit_fingerprint: f.fit_fingerprint.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(json.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_block(&mut out, &json);
    out.extend_from_slice(&(f.step_states.len() as u32).to_le_bytes());
    for s in &f.step_states {
        put_block(&mut out, s);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ExecError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            ExecError::Decode(format!("truncated at byte {} (needed {n} more)", self.at))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ExecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    fn u32(&mut self) -> Result<u32, ExecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn block(&mut self) -> Result<&'a [u8], ExecError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

/// Decodes an envelope and rebuilds its pipeline against `catalog`.
pub fn load(bytes: &[u8], catalog: &Catalog, registry: &NativeRegistry) -> Result<FittedPipeline, ExecError> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4).map_err(|_| ExecError::Decode("not a fitted pipeline".into()))? != MAGIC {
        return Err(ExecError::Decode("not a fitted pipeline (bad magic)".into()));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(ExecError::FormatVersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let header: Header =
        serde_json::from_slice(r.block()?).map_err(|e| ExecError::Decode(format!("pipeline header: {e}")))?;
    let count = r.u32()? as usize;
    let mut step_states = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        step_states.push(r.block()?.to_vec());
    }
    if r.at != bytes.len() {
        return Err(ExecError::Decode(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    let template = Arc::new(make_template(&header.description, catalog)?);
    let pipeline = bind(&template, &header.lambda)?;
    if step_states.len() != pipeline.n_steps() {
        return Err(ExecError::NotFitted { expected: pipeline.n_steps(), actual: step_states.len() });
    }
    for step in &template.graph.steps {
        super::implementation(step, registry)?;
    }
    Ok(FittedPipeline { pipeline, step_states, fit_fingerprint: header.fit_fingerprint })
}

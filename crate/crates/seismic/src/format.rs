//! `FBGATHER1` single-file gather container.
//!
//! ```text
//! magic       9 bytes   "FBGATHER1"
//! header_len  u32 LE
//! header      header_len bytes of UTF-8 JSON:
//!             {"survey_id": str, "n_traces": int, "n_samples": int, "dt": float}
//! amplitudes  n_traces * n_samples f32 LE, trace-major
//! offsets     n_traces f32 LE
//! picks       n_traces i32 LE, -1 = unpicked
//! ```
//! Nothing may follow the picks.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gather::Gather;

pub const MAGIC: &[u8; 9] = b"FBGATHER1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    survey_id: String,
    n_traces: u64,
    n_samples: u64,
    dt: f64,
}

pub fn to_bytes(g: &Gather) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        survey_id: g.survey_id.clone(),
        n_traces: g.n_traces() as u64,
        n_samples: g.n_samples() as u64,
        dt: g.dt,
    })
    .expect("header serializes");
    let n = g.n_traces();
    let mut out = Vec::with_capacity(13 + header.len() + 4 * (g.amplitudes.len() + 2 * n));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in &g.amplitudes {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &g.offsets {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &g.picks {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            offset: self.pos as u64,
            message: message.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        match self.pos.checked_add(n) {
            Some(end) if end <= self.bytes.len() => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            _ => self.fail(format!(
                "truncated {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            )),
        }
    }

    fn words<const W: usize, V>(&mut self, count: usize, what: &str, f: impl Fn([u8; W]) -> V) -> Result<Vec<V>> {
        let len = count
            .checked_mul(W)
            .ok_or_else(|| Error::Format {
                offset: self.pos as u64,
                message: format!("{what} size overflows"),
            })?;
        let raw = self.take(len, what)?;
        Ok(raw
            .chunks_exact(W)
            .map(|c| f(c.try_into().expect("chunk width")))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Gather> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(MAGIC.len(), "magic")?;
    if magic != MAGIC {
        r.pos = 0;
        return r.fail("bad magic, expected FBGATHER1");
    }
    let header_len = u32::from_le_bytes(r.take(4, "header length")?.try_into().unwrap()) as usize;
    let header_at = r.pos;
    let header: Header = serde_json::from_slice(r.take(header_len, "header")?).map_err(|e| Error::Format {
        offset: header_at as u64,
        message: format!("bad header: {e}"),
    })?;
    let (n, ns) = match (usize::try_from(header.n_traces), usize::try_from(header.n_samples)) {
        (Ok(n), Ok(ns)) if n > 0 && ns > 0 => (n, ns),
        _ => {
            r.pos = header_at;
            return r.fail(format!(
                "header dimensions {} x {} are not positive",
                header.n_traces, header.n_samples
            ));
        }
    };
    let total = n.checked_mul(ns).ok_or_else(|| Error::Format {
        offset: header_at as u64,
        message: "header dimensions overflow".into(),
    })?;
    let amplitudes = r.words(total, "amplitudes", f32::from_le_bytes)?;
    let offsets = r.words(n, "offsets", f32::from_le_bytes)?;
    let picks_at = r.pos;
    let picks = r.words(n, "picks", i32::from_le_bytes)?;
    if r.pos != bytes.len() {
        return r.fail(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Gather::new(header.survey_id, header.dt, ns, offsets, picks, amplitudes).map_err(|e| Error::Format {
        offset: picks_at as u64,
        message: e.to_string(),
    })
}

pub fn write_gather(g: &Gather, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(g))?;
    Ok(())
}

pub fn read_gather(path: impl AsRef<Path>) -> Result<Gather> {
    from_bytes(&fs::read(path)?)
}

//! On-disk corpus formats.
//!
//! Episodes: UTF-8 JSON lines, one episode per line, each line carrying a
//! top-level `"schema": "phmr-1"` field. Visual features: a binary sidecar
//! of little-endian 32-bit floats keyed by episode id, one record per clip
//! with header `{episode_id, n_V, d_raw}` followed by the frame timestamps
//! and the `n_V x d_raw` feature block. Timestamps are stored at full f64
//! precision so trisection boundaries survive a round trip bit-exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ClipEpisode, RawVisualRecord};

pub const CORPUS_SCHEMA: &str = "phmr-1";

const SIDECAR_MAGIC: &[u8; 8] = b"PHMRVIS1";

#[derive(Serialize)]
struct EpisodeLineOut<'a> {
    schema: &'static str,
    #[serde(flatten)]
    episode: &'a ClipEpisode,
}

#[derive(Deserialize)]
struct EpisodeLineIn {
    schema: String,
    #[serde(flatten)]
    episode: ClipEpisode,
}

/// Write episodes as JSON lines. Order is preserved.
pub fn write_corpus(path: &Path, episodes: &[ClipEpisode]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in episodes {
        let line = serde_json::to_string(&EpisodeLineOut {
            schema: CORPUS_SCHEMA,
            episode: e,
        })?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Read and validate a JSON-lines corpus. Blank lines are skipped; an
/// unknown schema tag or any invariant violation is an error.
pub fn read_corpus(path: &Path) -> Result<Vec<ClipEpisode>> {
    let r = BufReader::new(File::open(path)?);
    let mut episodes = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EpisodeLineIn = serde_json::from_str(&line).map_err(|e| {
            Error::Corpus(format!("line {}: {e}", lineno + 1))
        })?;
        if parsed.schema != CORPUS_SCHEMA {
            return Err(Error::Corpus(format!(
                "line {}: unsupported schema {:?}, expected {:?}",
                lineno + 1,
                parsed.schema,
                CORPUS_SCHEMA
            )));
        }
        parsed.episode.validate()?;
        episodes.push(parsed.episode);
    }
    Ok(episodes)
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Write the visual-feature sidecar. Records are keyed and sorted by id.
pub fn write_sidecar(path: &Path, records: &BTreeMap<String, RawVisualRecord>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SIDECAR_MAGIC)?;
    write_u32(&mut w, records.len() as u32)?;
    for (key, rec) in records {
        rec.validate()?;
        write_u32(&mut w, key.len() as u32)?;
        w.write_all(key.as_bytes())?;
        write_u32(&mut w, rec.n_frames() as u32)?;
        write_u32(&mut w, rec.d_raw as u32)?;
        for &t in &rec.timestamps {
            w.write_all(&t.to_le_bytes())?;
        }
        for &x in &rec.features {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a sidecar written by [`write_sidecar`].
pub fn read_sidecar(path: &Path) -> Result<BTreeMap<String, RawVisualRecord>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SIDECAR_MAGIC {
        return Err(Error::Corpus("not a visual-feature sidecar".into()));
    }
    let n_records = read_u32(&mut r)?;
    let mut out = BTreeMap::new();
    for _ in 0..n_records {
        let key_len = read_u32(&mut r)? as usize;
        let mut key_bytes = vec![0u8; key_len];
        r.read_exact(&mut key_bytes)?;
        let key = String::from_utf8(key_bytes)
            .map_err(|_| Error::Corpus("sidecar key is not UTF-8".into()))?;
        let n_frames = read_u32(&mut r)? as usize;
        let d_raw = read_u32(&mut r)? as usize;
        let mut timestamps = Vec::with_capacity(n_frames);
        for _ in 0..n_frames {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            timestamps.push(f64::from_le_bytes(buf));
        }
        let mut features = Vec::with_capacity(n_frames * d_raw);
        for _ in 0..n_frames * d_raw {
            let mut buf = [0u8; 4];
            r.read_exact(&mut buf)?;
            features.push(f32::from_le_bytes(buf));
        }
        let rec = RawVisualRecord {
            features,
            d_raw,
            timestamps,
        };
        rec.validate()?;
        if out.insert(key.clone(), rec).is_some() {
            return Err(Error::Corpus(format!("duplicate sidecar key {key}")));
        }
    }
    Ok(out)
}

//! Environment files and ladder tables.
//!
//! Text environments start with the line `rwre-env v1`, then `left_index <i>`,
//! `length <n>` and one `omega` per line. Binary environments are the magic
//! `RWREENV1`, then `left_index` (i64), `length` (u64) and the omegas (f64),
//! all little-endian. Paths ending in `.bin` use the binary form.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::{Environment, LadderDecomposition};
use crate::error::{Error, Result};
use crate::quenched::csv_err;

const TEXT_HEADER: &str = "rwre-env v1";
const MAGIC: &[u8; 8] = b"RWREENV1";

pub fn write_env_text<W: Write>(mut out: W, env: &Environment) -> Result<()> {
    writeln!(out, "{TEXT_HEADER}")?;
    writeln!(out, "left_index {}", env.left_index())?;
    writeln!(out, "length {}", env.len())?;
    for w in env.omegas() {
        writeln!(out, "{w}")?;
    }
    Ok(())
}

pub fn read_env_text<R: Read>(input: R) -> Result<Environment> {
    let mut lines = BufReader::new(input).lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Parse(format!("environment file ends before {what}")))
    };
    if next("header")?.trim() != TEXT_HEADER {
        return Err(Error::Parse(format!("missing `{TEXT_HEADER}` header")));
    }
    let field = |line: String, key: &str| -> Result<String> {
        line.strip_prefix(key)
            .map(|v| v.trim().to_string())
            .ok_or_else(|| Error::Parse(format!("expected `{key} <value>`, got `{line}`")))
    };
    let parse_err = |e: &dyn std::fmt::Display| Error::Parse(e.to_string());
    let left: i64 = field(next("left_index")?, "left_index")?
        .parse()
        .map_err(|e| parse_err(&e))?;
    let len: usize = field(next("length")?, "length")?.parse().map_err(|e| parse_err(&e))?;
    let mut omegas = Vec::with_capacity(len);
    for i in 0..len {
        let line = next("all omegas")?;
        omegas.push(
            line.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("omega #{i}: {e}")))?,
        );
    }
    Environment::new(left, omegas)
}

pub fn write_env_binary<W: Write>(mut out: W, env: &Environment) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&env.left_index().to_le_bytes())?;
    out.write_all(&(env.len() as u64).to_le_bytes())?;
    for w in env.omegas() {
        out.write_all(&w.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_env_binary<R: Read>(mut input: R) -> Result<Environment> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    if &buf != MAGIC {
        return Err(Error::Parse("not a binary environment file".into()));
    }
    input.read_exact(&mut buf)?;
    let left = i64::from_le_bytes(buf);
    input.read_exact(&mut buf)?;
    let len = u64::from_le_bytes(buf) as usize;
    let mut omegas = Vec::with_capacity(len);
    for _ in 0..len {
        input.read_exact(&mut buf)?;
        omegas.push(f64::from_le_bytes(buf));
    }
    Environment::new(left, omegas)
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

pub fn save_env(path: &Path, env: &Environment) -> Result<()> {
    let mut buf = Vec::new();
    if is_binary(path) {
        write_env_binary(&mut buf, env)?;
    } else {
        write_env_text(&mut buf, env)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_env(path: &Path) -> Result<Environment> {
    let bytes = fs::read(path)?;
    if is_binary(path) {
        read_env_binary(&bytes[..])
    } else {
        read_env_text(&bytes[..])
    }
}

/// One row of a ladder table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub block_index: i64,
    pub start: i64,
    pub end: i64,
    pub len: usize,
    #[serde(rename = "M")]
    pub m: f64,
}

/// Every block of `ladders`, context blocks included, in site order.
pub fn write_ladders<W: Write>(out: W, ladders: &LadderDecomposition) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let first = ladders.first_location() + 1;
    for k in first..=ladders.len() as i64 {
        let b = ladders.block(k).expect("in range");
        w.serialize(LadderRow {
            block_index: k,
            start: b.start,
            end: b.end,
            len: b.len(),
            m: b.max(),
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ladders<R: Read>(input: R) -> Result<Vec<LadderRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

//! `CMX1` binary container and CSV export for [`CoMatrix`].
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   b"CMX1"
//! u32     N
//! u32     T
//! N x     u32 byte length + UTF-8 ticker
//! P x u32 counts       (P = N(N-1)/2, lower triangle, row order)
//! P x u32 co_assigned
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::comovement::CoMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CMX1";

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn write_cmx<W: Write>(matrix: &CoMatrix, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(matrix.n_stocks() as u32).to_le_bytes())?;
    out.write_all(&matrix.n_windows().to_le_bytes())?;
    for t in matrix.tickers() {
        out.write_all(&(t.len() as u32).to_le_bytes())?;
        out.write_all(t.as_bytes())?;
    }
    let mut buf = Vec::with_capacity(matrix.lower_counts().len() * 4);
    for v in matrix.lower_counts().iter().chain(matrix.lower_co_assigned()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_cmx<R: Read>(mut input: R) -> Result<CoMatrix> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::Format("missing header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let n = read_u32(&mut input)? as usize;
    let t = read_u32(&mut input)?;
    let mut tickers = Vec::with_capacity(n);
    for _ in 0..n {
        let len = read_u32(&mut input)? as usize;
        let mut bytes = vec![0u8; len];
        input
            .read_exact(&mut bytes)
            .map_err(|e| Error::Format(format!("truncated ticker table: {e}")))?;
        tickers.push(String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))?);
    }
    let pairs = n * n.saturating_sub(1) / 2;
    let mut raw = vec![0u8; pairs * 8];
    input
        .read_exact(&mut raw)
        .map_err(|e| Error::Format(format!("truncated body: {e}")))?;
    let mut values = raw
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let counts: Vec<u32> = values.by_ref().take(pairs).collect();
    let co: Vec<u32> = values.collect();
    if input.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes".into()));
    }
    CoMatrix::from_parts(tickers, t, counts, co).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_cmx(matrix: &CoMatrix, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_cmx(matrix, std::io::BufWriter::new(file))
}

pub fn load_cmx(path: impl AsRef<Path>) -> Result<CoMatrix> {
    let file = std::fs::File::open(path)?;
    read_cmx(std::io::BufReader::new(file))
}

/// `ticker_i,ticker_j,count,co_assigned` for every pair with `i > j`.
pub fn write_pairs_csv<W: Write>(matrix: &CoMatrix, mut out: W) -> Result<()> {
    writeln!(out, "ticker_i,ticker_j,count,co_assigned")?;
    let tickers = matrix.tickers();
    for (i, j, c) in matrix.pairs() {
        writeln!(out, "{},{},{},{}", tickers[i], tickers[j], c, matrix.co_assigned(i, j))?;
    }
    out.flush()?;
    Ok(())
}

//! `HF1` heightfield files.
//!
//! Text: header line `HF1 <m> <n> <l> <w> <origin_x> <origin_y>` then `m`
//! lines of `n` space-separated heights. Binary: the same header line, then
//! `m * n` little-endian `f32` heights in row-major order.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::{Heightfield, TerrainError};

pub const MAGIC: &str = "HF1";

#[derive(Debug, Error)]
pub enum HeightfieldIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed heightfield file: {0}")]
    Format(String),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
}

fn header(field: &Heightfield) -> String {
    let [ox, oy] = field.origin();
    format!(
        "{MAGIC} {} {} {} {} {} {}\n",
        field.rows(),
        field.cols(),
        field.cell_length(),
        field.cell_width(),
        ox,
        oy
    )
}

pub fn write_text(field: &Heightfield, mut out: impl Write) -> io::Result<()> {
    out.write_all(header(field).as_bytes())?;
    for i in 0..field.rows() {
        let line: Vec<String> = field.row(i).iter().map(|h| h.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn write_binary(field: &Heightfield, mut out: impl Write) -> io::Result<()> {
    out.write_all(header(field).as_bytes())?;
    for &h in field.heights() {
        out.write_all(&(h as f32).to_le_bytes())?;
    }
    Ok(())
}

struct Header {
    rows: usize,
    cols: usize,
    cell_length: f64,
    cell_width: f64,
    origin: [f64; 2],
}

fn parse_header(line: &str) -> Result<Header, HeightfieldIoError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 7 || fields[0] != MAGIC {
        return Err(HeightfieldIoError::Format(format!("bad header `{}`", line.trim_end())));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|e| HeightfieldIoError::Format(format!("`{s}`: {e}")));
    let real = |s: &str| s.parse::<f64>().map_err(|e| HeightfieldIoError::Format(format!("`{s}`: {e}")));
    Ok(Header {
        rows: int(fields[1])?,
        cols: int(fields[2])?,
        cell_length: real(fields[3])?,
        cell_width: real(fields[4])?,
        origin: [real(fields[5])?, real(fields[6])?],
    })
}

fn read_header_line(input: &mut impl BufRead) -> Result<Header, HeightfieldIoError> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    parse_header(&line)
}

pub fn read_text(mut input: impl BufRead) -> Result<Heightfield, HeightfieldIoError> {
    let h = read_header_line(&mut input)?;
    let mut heights = Vec::with_capacity(h.rows * h.cols);
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| HeightfieldIoError::Format(format!("line {}: {e}", i + 2)))?;
        if row.len() != h.cols {
            return Err(HeightfieldIoError::Format(format!(
                "line {}: expected {} values, got {}",
                i + 2,
                h.cols,
                row.len()
            )));
        }
        heights.extend(row);
    }
    Ok(Heightfield::new(h.rows, h.cols, h.cell_length, h.cell_width, heights, h.origin)?)
}

pub fn read_binary(mut input: impl BufRead) -> Result<Heightfield, HeightfieldIoError> {
    let h = read_header_line(&mut input)?;
    let mut bytes = vec![0u8; h.rows * h.cols * 4];
    input.read_exact(&mut bytes)?;
    let heights = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(Heightfield::new(h.rows, h.cols, h.cell_length, h.cell_width, heights, h.origin)?)
}

//! Sparse block standard form (SDPA-style) writer and reader.
//!
//! ```text
//! * var P symmetric 3 0        (optional comment lines carrying the var map)
//! <num_vars>
//! <num_blocks>
//! <block sizes>
//! <objective vector>
//! <matrix_index> <block> <row> <col> <value>   (1-based block/row/col, row ≤ col)
//! ```
//!
//! The SDPA sign convention is `Σ Fᵢxᵢ - F₀ ⪰ 0`, so matrix 0 holds the
//! negated constant of our `F₀ + Σ xᵢFᵢ ⪰ 0` blocks.

use std::fmt::Write as _;
use std::path::Path;

use super::{LmiBlock, SdpProblem, VarKind, VarSlice};
use crate::error::{Error, Result};
use crate::linalg::Mat;

fn fmt_value(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn to_string(p: &SdpProblem) -> Result<String> {
    p.validate()?;
    let mut s = String::new();
    for v in &p.var_map {
        let kind = match v.kind {
            VarKind::Symmetric { dim } => format!("symmetric {dim}"),
            VarKind::Matrix { rows, cols } => format!("matrix {rows} {cols}"),
            VarKind::Scalar => "scalar".to_string(),
        };
        writeln!(s, "* var {} {} {}", v.name, kind, v.start).unwrap();
    }
    if p.objective.is_none() {
        writeln!(s, "* feasibility").unwrap();
    }
    writeln!(s, "{}", p.num_vars).unwrap();
    writeln!(s, "{}", p.blocks.len()).unwrap();
    let sizes: Vec<String> = p.blocks.iter().map(|b| b.size.to_string()).collect();
    writeln!(s, "{}", sizes.join(" ")).unwrap();
    let c = p.objective.clone().unwrap_or_else(|| vec![0.0; p.num_vars]);
    let c: Vec<String> = c.iter().map(|v| fmt_value(*v)).collect();
    writeln!(s, "{}", c.join(" ")).unwrap();
    for (b, block) in p.blocks.iter().enumerate() {
        write_entries(&mut s, 0, b, &(-&block.constant));
        for (i, f) in &block.coeffs {
            write_entries(&mut s, i + 1, b, f);
        }
    }
    Ok(s)
}

fn write_entries(s: &mut String, matno: usize, block: usize, m: &Mat) {
    for j in 0..m.ncols() {
        for i in 0..=j {
            let v = m[(i, j)];
            if v != 0.0 {
                writeln!(s, "{} {} {} {} {}", matno, block + 1, i + 1, j + 1, fmt_value(v)).unwrap();
            }
        }
    }
}

pub fn export_standard_form(p: &SdpProblem, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_string(p)?)?;
    Ok(())
}

pub fn import_standard_form(path: impl AsRef<Path>) -> Result<SdpProblem> {
    from_str(&std::fs::read_to_string(path)?)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Malformed(msg.into())
}

pub fn from_str(text: &str) -> Result<SdpProblem> {
    let mut var_map = Vec::new();
    let mut feasibility = false;
    let mut lines = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('*') {
            let tok: Vec<&str> = rest.split_whitespace().collect();
            match tok.as_slice() {
                ["var", name, "symmetric", dim, start] => var_map.push(VarSlice {
                    name: name.to_string(),
                    start: parse(start)?,
                    kind: VarKind::Symmetric { dim: parse(dim)? },
                }),
                ["var", name, "matrix", r, c, start] => var_map.push(VarSlice {
                    name: name.to_string(),
                    start: parse(start)?,
                    kind: VarKind::Matrix { rows: parse(r)?, cols: parse(c)? },
                }),
                ["var", name, "scalar", start] => var_map.push(VarSlice {
                    name: name.to_string(),
                    start: parse(start)?,
                    kind: VarKind::Scalar,
                }),
                ["feasibility"] => feasibility = true,
                _ => {}
            }
            continue;
        }
        lines.push(line);
    }
    if lines.len() < 4 {
        return Err(bad("standard-form file is missing header lines"));
    }
    let num_vars: usize = parse(lines[0])?;
    let num_blocks: usize = parse(lines[1])?;
    let sizes: Vec<usize> = lines[2].split_whitespace().map(parse).collect::<Result<_>>()?;
    if sizes.len() != num_blocks {
        return Err(bad("block size count differs from num_blocks"));
    }
    let c: Vec<f64> = if num_vars == 0 {
        Vec::new()
    } else {
        lines[3].split_whitespace().map(parse).collect::<Result<_>>()?
    };
    if c.len() != num_vars {
        return Err(bad("objective length differs from num_vars"));
    }
    let mut constants: Vec<Mat> = sizes.iter().map(|&n| Mat::zeros(n, n)).collect();
    let mut coeffs: Vec<std::collections::BTreeMap<usize, Mat>> = vec![Default::default(); num_blocks];
    let body = if num_vars == 0 { &lines[3..] } else { &lines[4..] };
    for line in body {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 5 {
            return Err(bad(format!("bad entry line `{line}`")));
        }
        let matno: usize = parse(tok[0])?;
        let blk: usize = parse(tok[1])?;
        let i: usize = parse(tok[2])?;
        let j: usize = parse(tok[3])?;
        let v: f64 = parse(tok[4])?;
        if blk == 0 || blk > num_blocks || i == 0 || j == 0 || i > j || j > sizes[blk - 1] || matno > num_vars {
            return Err(bad(format!("entry out of range `{line}`")));
        }
        let n = sizes[blk - 1];
        let target = if matno == 0 {
            &mut constants[blk - 1]
        } else {
            coeffs[blk - 1].entry(matno - 1).or_insert_with(|| Mat::zeros(n, n))
        };
        let v = if matno == 0 { -v } else { v };
        target[(i - 1, j - 1)] = v;
        target[(j - 1, i - 1)] = v;
    }
    let blocks = sizes
        .iter()
        .zip(constants)
        .zip(coeffs)
        .map(|((&size, constant), co)| LmiBlock { size, constant, coeffs: co.into_iter().collect() })
        .collect();
    let p = SdpProblem { num_vars, blocks, objective: (!feasibility).then_some(c), var_map };
    p.validate()?;
    Ok(p)
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| bad(format!("cannot parse `{s}`")))
}

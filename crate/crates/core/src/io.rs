//! CSV serialization of sample paths.
//!
//! Format: header `s,x1,...,xd`, one row per node, 16 significant digits.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::grid::{SamplePath, TimeGrid};

pub fn write_path<W: Write>(w: &mut W, path: &SamplePath) -> Result<()> {
    let header: Vec<String> = (1..=path.dim()).map(|i| format!("x{i}")).collect();
    writeln!(w, "s,{}", header.join(","))?;
    for (j, &s) in path.grid().nodes().iter().enumerate() {
        write!(w, "{s:.17e}")?;
        for c in 0..path.dim() {
            write!(w, ",{:.17e}", path.at(j, c))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_path_file<P: AsRef<Path>>(p: P, path: &SamplePath) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(p)?);
    write_path(&mut f, path)
}

pub fn read_path<R: Read>(r: R) -> Result<SamplePath> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| CoreError::Parse("empty CSV".into()))?
        .map_err(CoreError::Io)?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.is_empty() || cols[0] != "s" {
        return Err(CoreError::Parse(format!("bad header: {header}")));
    }
    let dim = cols.len() - 1;
    if dim == 0 {
        return Err(CoreError::Parse("no value columns".into()));
    }
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line.map_err(CoreError::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != dim + 1 {
            return Err(CoreError::Parse(format!("row {}: wrong field count", ln + 2)));
        }
        let parse = |f: &str| {
            f.parse::<f64>()
                .map_err(|e| CoreError::Parse(format!("row {}: {e}", ln + 2)))
        };
        nodes.push(parse(fields[0])?);
        for f in &fields[1..] {
            values.push(parse(f)?);
        }
    }
    let grid = TimeGrid::from_nodes(nodes)?;
    SamplePath::new(grid, dim, values)
}

pub fn read_path_file<P: AsRef<Path>>(p: P) -> Result<SamplePath> {
    read_path(std::fs::File::open(p)?)
}

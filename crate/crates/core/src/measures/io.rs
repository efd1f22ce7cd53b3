//! Columnar text format: a header `x1,…,xd,weight,alive`, then one row per
//! atom. Floats are written with 17 significant digits so a read-back is
//! bit-exact.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::{MeasureFlow, SubProbMeasure, TimeGrid};
use crate::error::{invalid, Error, Result};
use crate::geometry::Domain;

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidArgument(format!("i/o error: {e}"))
}

pub fn write_measure<W: Write>(mu: &SubProbMeasure, mut w: W) -> Result<()> {
    let d = mu.dim();
    let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    writeln!(w, "{},weight,alive", header.join(",")).map_err(io_err)?;
    let mut line = String::new();
    for i in 0..mu.len() {
        line.clear();
        for v in mu.location(i) {
            line.push_str(&format!("{v:.16e},"));
        }
        line.push_str(&format!("{:.16e},{}", mu.weight(i), u8::from(mu.is_alive(i))));
        writeln!(w, "{line}").map_err(io_err)?;
    }
    Ok(())
}

pub fn read_measure<R: Read>(domain: Arc<Domain>, r: R) -> Result<SubProbMeasure> {
    let d = domain.dim();
    let mut lines = BufReader::new(r).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty measure file".into()))?
        .map_err(io_err)?;
    if header.split(',').count() != d + 2 {
        return invalid(format!("header `{header}` does not match dimension {d}"));
    }
    let mut locations = Vec::new();
    let mut weights = Vec::new();
    let mut alive = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != d + 2 {
            return invalid(format!("line {}: expected {} columns", n + 2, d + 2));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("line {}: bad number `{s}`", n + 2)))
        };
        for c in &cols[..d] {
            locations.push(num(c)?);
        }
        weights.push(num(cols[d])?);
        alive.push(match cols[d + 1] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return invalid(format!("line {}: bad alive flag `{other}`", n + 2)),
        });
    }
    SubProbMeasure::from_parts(domain, locations, weights, alive)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowManifestEntry {
    pub index: usize,
    pub time: f64,
    pub file: String,
    pub mass: f64,
}

/// One file per grid node plus `manifest.csv` (index, t, file, mass).
/// Returns the paths written, manifest last.
pub fn write_flow(flow: &MeasureFlow, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut written = Vec::new();
    let mut manifest = String::from("index,t,file,mass\n");
    for (k, snap) in flow.snapshots().iter().enumerate() {
        let name = format!("node_{k:05}.csv");
        let path = dir.join(&name);
        let mut buf = Vec::new();
        write_measure(snap, &mut buf)?;
        fs::write(&path, buf).map_err(io_err)?;
        manifest.push_str(&format!(
            "{k},{:.16e},{name},{:.16e}\n",
            flow.grid().time(k),
            snap.mass()
        ));
        written.push(path);
    }
    let mpath = dir.join("manifest.csv");
    fs::write(&mpath, manifest).map_err(io_err)?;
    written.push(mpath);
    Ok(written)
}

pub fn read_flow(domain: Arc<Domain>, dir: &Path) -> Result<MeasureFlow> {
    let text = fs::read_to_string(dir.join("manifest.csv")).map_err(io_err)?;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return invalid(format!("manifest line {}: expected 4 columns", n + 1));
        }
        let time: f64 = cols[1]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("manifest line {}: bad time", n + 1)))?;
        entries.push((time, cols[2].to_string()));
    }
    if entries.is_empty() {
        return invalid("flow manifest lists no nodes");
    }
    let grid = if entries.len() == 1 {
        TimeGrid::single_node()
    } else {
        TimeGrid::new(entries.last().unwrap().0, entries.len() - 1)?
    };
    let mut snaps = Vec::with_capacity(entries.len());
    for (_, file) in &entries {
        let f = fs::File::open(dir.join(file)).map_err(io_err)?;
        snaps.push(read_measure(domain.clone(), f)?);
    }
    MeasureFlow::new(grid, snaps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_round_trip_is_bit_exact() {
        let dom = Arc::new(Domain::interval(0.0, 1.0).unwrap());
        let mu = SubProbMeasure::from_parts(
            dom.clone(),
            vec![0.1 + 1e-17, 1.0 / 3.0, 0.0],
            vec![0.25, 0.5, 0.25],
            vec![true, true, false],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_measure(&mu, &mut buf).unwrap();
        let back = read_measure(dom, buf.as_slice()).unwrap();
        assert!(back.shares_atoms_with(&mu));
        assert_eq!(back.weights(), mu.weights());
        assert_eq!(back.alive_flags(), mu.alive_flags());
    }

    #[test]
    fn flow_round_trip() {
        let dom = Arc::new(Domain::interval(0.0, 1.0).unwrap());
        let mu = SubProbMeasure::from_atoms(dom.clone(), &[(vec![0.5], 1.0)]).unwrap();
        let flow = MeasureFlow::constant(TimeGrid::new(0.5, 2).unwrap(), &mu);
        let dir = std::env::temp_dir().join(format!("kmv-flow-{}", std::process::id()));
        let files = write_flow(&flow, &dir).unwrap();
        assert_eq!(files.len(), 4);
        let back = read_flow(dom, &dir).unwrap();
        assert_eq!(back.grid(), flow.grid());
        assert_eq!(back.masses(), flow.masses());
        fs::remove_dir_all(dir).ok();
    }
}

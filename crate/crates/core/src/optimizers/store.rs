//! Columnar trajectory files: a header of metadata columns followed by the
//! stored budget checkpoints, one run per row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{OptimizerId, Trajectory};
use crate::error::{Error, Result};

const META: [&str; 5] = ["optimizer", "instance_id", "rep", "seed", "length"];

/// Writes `trajectories` downsampled to `budgets` (all budgets when `None`).
pub fn write_trajectories(path: &Path, trajectories: &[Trajectory], budgets: Option<&[usize]>) -> Result<()> {
    let first = trajectories.first().ok_or(Error::EmptyInput("trajectories"))?;
    let budgets: Vec<usize> = match budgets {
        Some(b) => {
            let mut b = b.to_vec();
            b.sort_unstable();
            b.dedup();
            b
        }
        None => first.stored_budgets(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut header: Vec<String> = META.iter().map(|s| s.to_string()).collect();
    header.extend(budgets.iter().map(|b| b.to_string()));
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for t in trajectories {
        write!(w, "{},{},{},{},{}", t.optimizer, t.instance, t.repetition, t.seed, t.len()).map_err(io)?;
        for &b in &budgets {
            write!(w, ",{:.16e}", t.value_at(b)?).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or(Error::EmptyInput("trajectory file"))?
        .map_err(|e| Error::io(path, e))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < META.len() || cols[..META.len()] != META {
        return Err(Error::invalid(format!("{}: unexpected header", path.display())));
    }
    let budgets = cols[META.len()..]
        .iter()
        .map(|c| c.parse::<usize>().map_err(|_| Error::invalid(format!("bad budget column {c:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let bad = |what: &str, v: &str| Error::invalid(format!("{}: bad {what} {v:?}", path.display()));
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols.len() {
            return Err(Error::invalid(format!("{}: ragged row", path.display())));
        }
        let optimizer: OptimizerId = cells[0].parse()?;
        let instance = cells[1].parse().map_err(|_| bad("instance", cells[1]))?;
        let rep = cells[2].parse().map_err(|_| bad("rep", cells[2]))?;
        let seed = cells[3].parse().map_err(|_| bad("seed", cells[3]))?;
        let length = cells[4].parse().map_err(|_| bad("length", cells[4]))?;
        let values = cells[META.len()..]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| bad("value", c)))
            .collect::<Result<Vec<_>>>()?;
        out.push(Trajectory::sparse(optimizer, instance, rep, seed, length, budgets.clone(), values));
    }
    Ok(out)
}

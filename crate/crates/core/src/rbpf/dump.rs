//! Filter state dumps as delimited text with a header row.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a dump
//! parses back to the exact in-memory values.

use std::io::{self, BufRead, Write};

use super::coordinator::ResampleEvent;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::Pose;

pub const TRAJECTORY_HEADER: &str = "particle,t,x,y,z,yaw";

/// Pose sequences, one block per trajectory, keyed by the first column.
pub fn write_trajectories<T: Real, W: Write>(
    mut w: W,
    trajectories: &[(String, Vec<Pose<T>>)],
) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for (key, poses) in trajectories {
        for p in poses {
            writeln!(
                w,
                "{key},{},{},{},{},{}",
                p.t, p.position[0], p.position[1], p.position[2], p.heading
            )?;
        }
    }
    Ok(())
}

/// `t, w_1..w_J` after every weighting pass.
pub fn write_weights<W: Write>(mut w: W, j: usize, history: &[(f64, Vec<f64>)]) -> io::Result<()> {
    write!(w, "t")?;
    for k in 1..=j {
        write!(w, ",w_{k}")?;
    }
    writeln!(w)?;
    for (t, ws) in history {
        write!(w, "{t}")?;
        for v in ws {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub const RESAMPLE_HEADER: &str =
    "t,ess,offspring_counts,mean_before_x,mean_before_y,mean_after_x,mean_after_y";

/// `t, ESS, offspring_counts` with the counts joined by `;`, followed by the
/// particle-cloud mean position just before and after resampling.
pub fn write_resample_events<W: Write>(mut w: W, events: &[ResampleEvent]) -> io::Result<()> {
    writeln!(w, "{RESAMPLE_HEADER}")?;
    for e in events {
        let counts: Vec<String> = e.offspring.iter().map(|n| n.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            e.t,
            e.ess,
            counts.join(";"),
            e.mean_before[0],
            e.mean_before[1],
            e.mean_after[0],
            e.mean_after[1]
        )?;
    }
    Ok(())
}

fn parse_error(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("line {line}: {msg}"))
}

/// Data rows with their 1-based line numbers after checking the header.
fn rows<R: BufRead>(r: R, header: &str) -> Result<Vec<(usize, String)>> {
    let mut lines = r.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == header => {}
        Some((_, Ok(h))) => return Err(parse_error(1, format!("expected header {header:?}, found {h:?}"))),
        Some((_, Err(e))) => return Err(parse_error(1, e)),
        None => return Err(parse_error(1, "missing header")),
    }
    let mut out = Vec::new();
    for (i, l) in lines {
        let l = l.map_err(|e| parse_error(i + 1, e))?;
        if !l.trim().is_empty() {
            out.push((i + 1, l));
        }
    }
    Ok(out)
}

fn field<F: std::str::FromStr>(line: usize, s: &str, name: &str) -> Result<F> {
    s.trim()
        .parse()
        .map_err(|_| parse_error(line, format!("bad {name} {s:?}")))
}

fn split(line: usize, l: &str, n: usize) -> Result<Vec<&str>> {
    let cols: Vec<&str> = l.split(',').collect();
    if cols.len() != n {
        return Err(parse_error(line, format!("expected {n} columns, found {}", cols.len())));
    }
    Ok(cols)
}

/// Inverse of [`write_trajectories`]; blocks keep their order of appearance.
pub fn read_trajectories<T: Real, R: BufRead>(r: R) -> Result<Vec<(String, Vec<Pose<T>>)>> {
    let mut out: Vec<(String, Vec<Pose<T>>)> = Vec::new();
    for (line, l) in rows(r, TRAJECTORY_HEADER)? {
        let c = split(line, &l, 6)?;
        let t: f64 = field(line, c[1], "t")?;
        let v = |k: usize, name: &str| field::<f64>(line, c[k], name).map(T::lit);
        let pose = Pose {
            t,
            position: [v(2, "x")?, v(3, "y")?, v(4, "z")?],
            heading: v(5, "yaw")?,
        };
        match out.last_mut() {
            Some((key, poses)) if key == c[0] => poses.push(pose),
            _ => out.push((c[0].to_string(), vec![pose])),
        }
    }
    Ok(out)
}

/// Inverse of [`write_weights`].
pub fn read_weights<R: BufRead>(r: R, j: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let header = std::iter::once("t".to_string())
        .chain((1..=j).map(|k| format!("w_{k}")))
        .collect::<Vec<_>>()
        .join(",");
    rows(r, &header)?
        .into_iter()
        .map(|(line, l)| {
            let c = split(line, &l, j + 1)?;
            let ws = c[1..]
                .iter()
                .map(|s| field(line, s, "weight"))
                .collect::<Result<Vec<f64>>>()?;
            Ok((field(line, c[0], "t")?, ws))
        })
        .collect()
}

/// Inverse of [`write_resample_events`].
pub fn read_resample_events<R: BufRead>(r: R) -> Result<Vec<ResampleEvent>> {
    rows(r, RESAMPLE_HEADER)?
        .into_iter()
        .map(|(line, l)| {
            let c = split(line, &l, 7)?;
            let offspring = c[2]
                .split(';')
                .map(|s| field(line, s, "offspring count"))
                .collect::<Result<Vec<usize>>>()?;
            let f = |k: usize| field::<f64>(line, c[k], "mean");
            Ok(ResampleEvent {
                t: field(line, c[0], "t")?,
                ess: field(line, c[1], "ess")?,
                offspring,
                mean_before: [f(3)?, f(4)?],
                mean_after: [f(5)?, f(6)?],
            })
        })
        .collect()
}

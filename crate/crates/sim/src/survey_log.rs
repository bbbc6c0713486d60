//! Survey-log files: one beam per row, grouped by ping.
//!
//! Columns: `ping_id,t,beam_x,beam_y,beam_z,dr_x,dr_y,dr_z,dr_yaw` followed
//! optionally by `gt_x,gt_y,gt_z,gt_yaw`. Floats are written in their
//! shortest round-trip form, so reading a written log is bit exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rbpf_svgp::rbpf::Pacing;
use rbpf_svgp::types::{Beam, BeamLog, Ping, Pose};

use crate::error::{Error, Result};

pub const BASE_COLUMNS: [&str; 9] = [
    "ping_id", "t", "beam_x", "beam_y", "beam_z", "dr_x", "dr_y", "dr_z", "dr_yaw",
];
pub const TRUTH_COLUMNS: [&str; 4] = ["gt_x", "gt_y", "gt_z", "gt_yaw"];

/// A recorded survey: pings with the dead-reckoned pose at each ping and,
/// for simulated data, the true pose.
#[derive(Clone, Debug, PartialEq)]
pub struct SurveyLog {
    pub ping_ids: Vec<u64>,
    pub pings: Vec<Ping<f64>>,
    pub dead_reckoning: Vec<Pose<f64>>,
    pub truth: Option<Vec<Pose<f64>>>,
}

/// One replayed ping.
#[derive(Clone, Debug, PartialEq)]
pub struct SurveyEntry<'a> {
    pub ping_id: u64,
    pub ping: &'a Ping<f64>,
    pub dead_reckoning: Pose<f64>,
    pub truth: Option<Pose<f64>>,
}

impl SurveyLog {
    pub fn new(with_truth: bool) -> Self {
        Self {
            ping_ids: Vec::new(),
            pings: Vec::new(),
            dead_reckoning: Vec::new(),
            truth: with_truth.then(Vec::new),
        }
    }

    pub fn len(&self) -> usize {
        self.pings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pings.is_empty()
    }

    pub fn num_beams(&self) -> usize {
        self.pings.iter().map(|p| p.beams.len()).sum()
    }

    pub fn max_beams_per_ping(&self) -> usize {
        self.pings.iter().map(|p| p.beams.len()).max().unwrap_or(0)
    }

    pub fn has_truth(&self) -> bool {
        self.truth.is_some()
    }

    /// Appends a ping; timestamps must strictly increase.
    pub fn push(
        &mut self,
        ping_id: u64,
        ping: Ping<f64>,
        dead_reckoning: Pose<f64>,
        truth: Option<Pose<f64>>,
    ) -> Result<()> {
        if let Some(last) = self.pings.last() {
            if !(ping.t > last.t) {
                return Err(rbpf_svgp::Error::OutOfOrder {
                    last: last.t,
                    got: ping.t,
                }
                .into());
            }
        }
        match (&mut self.truth, truth) {
            (Some(v), Some(gt)) => v.push(gt),
            (None, None) => {}
            _ => {
                return Err(Error::Config(
                    "ground truth must be given for every ping or for none".into(),
                ))
            }
        }
        self.ping_ids.push(ping_id);
        self.pings.push(ping);
        self.dead_reckoning.push(dead_reckoning);
        Ok(())
    }

    pub fn get(&self, k: usize) -> SurveyEntry<'_> {
        SurveyEntry {
            ping_id: self.ping_ids[k],
            ping: &self.pings[k],
            dead_reckoning: self.dead_reckoning[k],
            truth: self.truth.as_ref().map(|v| v[k]),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = SurveyEntry<'_>> + '_ {
        (0..self.len()).map(|k| self.get(k))
    }

    /// All pings appended to a fresh beam log.
    pub fn beam_log(&self) -> Result<BeamLog<f64>> {
        let mut log = BeamLog::new(self.max_beams_per_ping().max(1));
        for p in &self.pings {
            log.append_ping(p)?;
        }
        Ok(log)
    }

    /// Map-frame beam positions under the given per-ping poses.
    pub fn project(&self, poses: &[Pose<f64>]) -> Vec<[f64; 3]> {
        assert_eq!(poses.len(), self.len());
        self.pings
            .iter()
            .zip(poses)
            .flat_map(|(p, pose)| p.beams.iter().map(move |b| rbpf_svgp::types::transform_beam(pose, b)))
            .collect()
    }

    /// Paced iteration in timestamp order. With wall-clock pacing each ping is
    /// released no earlier than `(t - t0) / speedup` after the first.
    pub fn replay(&self, pacing: Pacing) -> Replay<'_> {
        Replay {
            log: self,
            next: 0,
            pacing,
            started: None,
        }
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
        if self.has_truth() {
            header.extend_from_slice(&TRUTH_COLUMNS);
        }
        out.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for e in self.iter() {
            for b in &e.ping.beams {
                row.clear();
                row.push(e.ping_id.to_string());
                row.push(e.ping.t.to_string());
                row.extend(b.position.iter().map(|v| v.to_string()));
                push_pose(&mut row, &e.dead_reckoning);
                if let Some(gt) = &e.truth {
                    push_pose(&mut row, gt);
                }
                out.write_record(&row)?;
            }
        }
        out.flush().map_err(|e| Error::io("<survey log>", e))?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut records = reader.records();
        let header = match records.next() {
            Some(h) => h?,
            None => return Err(Error::Parse { line: 1, message: "missing header row".into() }),
        };
        let names: Vec<&str> = header.iter().collect();
        let with_truth = if names == BASE_COLUMNS {
            false
        } else if names.len() == BASE_COLUMNS.len() + TRUTH_COLUMNS.len()
            && names[..9] == BASE_COLUMNS
            && names[9..] == TRUTH_COLUMNS
        {
            true
        } else {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected header {names:?}"),
            });
        };
        let width = names.len();
        let mut log = Self::new(with_truth);
        let mut current: Option<(u64, Ping<f64>, Pose<f64>, Option<Pose<f64>>, u64)> = None;
        for rec in records {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let perr = |message: String| Error::Parse { line, message };
            if rec.len() != width {
                return Err(perr(format!("expected {width} columns, found {}", rec.len())));
            }
            let num = |k: usize| -> Result<f64> {
                let v: f64 = rec[k]
                    .parse()
                    .map_err(|_| perr(format!("column {} is not a number: {:?}", names[k], &rec[k])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(perr(format!("column {} is not finite", names[k])))
                }
            };
            let id: u64 = rec[0]
                .parse()
                .map_err(|_| perr(format!("ping_id is not an unsigned integer: {:?}", &rec[0])))?;
            let t = num(1)?;
            let beam = Beam::new(num(2)?, num(3)?, num(4)?);
            let dr = Pose::new(t, [num(5)?, num(6)?, num(7)?], num(8)?);
            let gt = if with_truth {
                Some(Pose::new(t, [num(9)?, num(10)?, num(11)?], num(12)?))
            } else {
                None
            };
            match &mut current {
                Some((cid, ping, cdr, cgt, _)) if *cid == id => {
                    if ping.t != t || *cdr != dr || *cgt != gt {
                        return Err(perr(format!("ping {id} changes time or pose between rows")));
                    }
                    ping.beams.push(beam);
                }
                _ => {
                    if let Some((cid, ping, cdr, cgt, start)) = current.take() {
                        if !(t > ping.t) {
                            return Err(perr(format!(
                                "timestamp {t} does not increase (previous ping at {}, line {start})",
                                ping.t
                            )));
                        }
                        log.push(cid, ping, cdr, cgt)?;
                    }
                    current = Some((id, Ping { t, beams: vec![beam] }, dr, gt, line));
                }
            }
        }
        if let Some((cid, ping, cdr, cgt, _)) = current {
            log.push(cid, ping, cdr, cgt)?;
        }
        Ok(log)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(f)).map_err(|e| with_path(e, path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f))
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

fn push_pose(row: &mut Vec<String>, p: &Pose<f64>) {
    row.extend(p.position.iter().map(|v| v.to_string()));
    row.push(p.heading.to_string());
}

/// Reads a survey log from disk.
pub fn ingest_log(path: &Path) -> Result<SurveyLog> {
    SurveyLog::load(path)
}

pub struct Replay<'a> {
    log: &'a SurveyLog,
    next: usize,
    pacing: Pacing,
    started: Option<(Instant, f64)>,
}

impl<'a> Iterator for Replay<'a> {
    type Item = SurveyEntry<'a>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.log.len() {
            return None;
        }
        let e = self.log.get(self.next);
        self.next += 1;
        if let Pacing::WallClock { speedup } = self.pacing {
            let (start, t0) = *self.started.get_or_insert((Instant::now(), e.ping.t));
            let due = Duration::from_secs_f64(((e.ping.t - t0) / speedup).max(0.0));
            let elapsed = start.elapsed();
            if due > elapsed {
                std::thread::sleep(due - elapsed);
            }
        }
        Some(e)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.log.len() - self.next;
        (n, Some(n))
    }
}

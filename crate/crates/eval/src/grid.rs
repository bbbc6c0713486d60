//! Raster maps with ESRI ASCII grid I/O.

use std::io::{BufRead, Write};
use std::path::Path;

use rbpf_svgp::types::Rect;

use crate::error::{Error, Result};

pub const NODATA: f64 = -9999.0;

/// Regular grid over `bounds`; cell `(col, row)` has its lower-left corner at
/// `bounds.min + (col, row) * cell_size`, so row 0 is the southernmost.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMap {
    pub bounds: Rect<f64>,
    pub cell_size: f64,
    pub ncols: usize,
    pub nrows: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl GridMap {
    /// All-invalid grid with `ncols` by `nrows` cells from `origin`.
    pub fn new(origin: [f64; 2], cell_size: f64, ncols: usize, nrows: usize) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::InvalidInput(format!("cell size {cell_size}")));
        }
        if ncols == 0 || nrows == 0 {
            return Err(Error::InvalidInput("grid needs at least one cell".into()));
        }
        let max = [
            origin[0] + ncols as f64 * cell_size,
            origin[1] + nrows as f64 * cell_size,
        ];
        Ok(Self {
            bounds: Rect::new(origin, max),
            cell_size,
            ncols,
            nrows,
            values: vec![0.0; ncols * nrows],
            valid: vec![false; ncols * nrows],
        })
    }

    /// Smallest grid anchored at `area.min` covering `area` (at least one cell).
    pub fn covering(area: &Rect<f64>, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0) {
            return Err(Error::InvalidInput(format!("cell size {cell_size}")));
        }
        let n = |extent: f64| ((extent / cell_size).ceil() as usize).max(1);
        Self::new(area.min, cell_size, n(area.width()), n(area.height()))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn idx(&self, col: usize, row: usize) -> usize {
        row * self.ncols + col
    }

    pub fn center(&self, col: usize, row: usize) -> [f64; 2] {
        [
            self.bounds.min[0] + (col as f64 + 0.5) * self.cell_size,
            self.bounds.min[1] + (row as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Cell containing `p`; the max edges belong to the last cell.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let locate = |v: f64, min: f64, n: usize| {
            let k = ((v - min) / self.cell_size).floor();
            if k < 0.0 || !k.is_finite() {
                None
            } else if (k as usize) < n {
                Some(k as usize)
            } else if k as usize == n && v <= min + n as f64 * self.cell_size {
                Some(n - 1)
            } else {
                None
            }
        };
        Some((
            locate(p[0], self.bounds.min[0], self.ncols)?,
            locate(p[1], self.bounds.min[1], self.nrows)?,
        ))
    }

    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        let i = self.idx(col, row);
        self.valid[i].then_some(self.values[i])
    }

    pub fn set(&mut self, col: usize, row: usize, value: f64) {
        let i = self.idx(col, row);
        self.values[i] = value;
        self.valid[i] = true;
    }

    pub fn clear(&mut self, col: usize, row: usize) {
        let i = self.idx(col, row);
        self.values[i] = 0.0;
        self.valid[i] = false;
    }

    /// `(col, row, value)` of every valid cell, row-major from the south.
    pub fn valid_cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.values.len())
            .filter(|&i| self.valid[i])
            .map(|i| (i % self.ncols, i / self.ncols, self.values[i]))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Root mean square of the valid values.
    pub fn rms(&self) -> Option<f64> {
        let n = self.valid_count();
        (n > 0).then(|| (self.valid_cells().map(|(_, _, v)| v * v).sum::<f64>() / n as f64).sqrt())
    }

    pub fn mean(&self) -> Option<f64> {
        let n = self.valid_count();
        (n > 0).then(|| self.valid_cells().map(|(_, _, v)| v).sum::<f64>() / n as f64)
    }

    /// ESRI ASCII grid; the first data row is the northernmost.
    pub fn write_ascii<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "ncols {}", self.ncols)?;
        writeln!(w, "nrows {}", self.nrows)?;
        writeln!(w, "xllcorner {}", self.bounds.min[0])?;
        writeln!(w, "yllcorner {}", self.bounds.min[1])?;
        writeln!(w, "cellsize {}", self.cell_size)?;
        writeln!(w, "nodata_value {NODATA}")?;
        let mut line = String::new();
        for row in (0..self.nrows).rev() {
            line.clear();
            for col in 0..self.ncols {
                if col > 0 {
                    line.push(' ');
                }
                match self.get(col, row) {
                    Some(v) => line.push_str(&v.to_string()),
                    None => line.push_str(&NODATA.to_string()),
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_ascii<R: BufRead>(r: R) -> std::result::Result<Self, (usize, String)> {
        let mut lines = r.lines().enumerate();
        let mut header = |key: &str| -> std::result::Result<String, (usize, String)> {
            let (i, l) = lines.next().ok_or((0, format!("missing {key}")))?;
            let l = l.map_err(|e| (i + 1, e.to_string()))?;
            let mut parts = l.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some(k), Some(v)) if k.eq_ignore_ascii_case(key) => Ok(v.to_string()),
                _ => Err((i + 1, format!("expected {key}, found {l:?}"))),
            }
        };
        fn bad<E>(line: usize, what: &str) -> impl Fn(E) -> (usize, String) + '_ {
            move |_| (line, format!("bad {what}"))
        }
        let ncols: usize = header("ncols")?.parse().map_err(bad(1, "ncols"))?;
        let nrows: usize = header("nrows")?.parse().map_err(bad(2, "nrows"))?;
        let x0: f64 = header("xllcorner")?.parse().map_err(bad(3, "xllcorner"))?;
        let y0: f64 = header("yllcorner")?.parse().map_err(bad(4, "yllcorner"))?;
        let cell: f64 = header("cellsize")?.parse().map_err(bad(5, "cellsize"))?;
        let nodata: f64 = header("nodata_value")?.parse().map_err(bad(6, "nodata_value"))?;
        let mut grid = Self::new([x0, y0], cell, ncols, nrows).map_err(|e| (5, e.to_string()))?;
        for k in 0..nrows {
            let line = 7 + k;
            let (_, l) = lines.next().ok_or((line, "missing grid row".to_string()))?;
            let l = l.map_err(|e| (line, e.to_string()))?;
            let row = nrows - 1 - k;
            let vals: Vec<&str> = l.split_whitespace().collect();
            if vals.len() != ncols {
                return Err((line, format!("expected {ncols} values, found {}", vals.len())));
            }
            for (col, s) in vals.iter().enumerate() {
                let v: f64 = s.parse().map_err(bad(line, "value"))?;
                if v != nodata {
                    grid.set(col, row, v);
                }
            }
        }
        Ok(grid)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_ascii(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_ascii(std::io::BufReader::new(f)).map_err(|(line, message)| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })
    }
}

//! Analytic ground-truth seabed: a plane, Gaussian bumps and seeded value
//! noise. Heights are negative (z up) and exact at every point, so mapping
//! errors can be measured without a reference DEM.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use rbpf_svgp::types::Rect;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: [f64; 2],
    /// Height added at the center (m); negative values make a depression.
    pub amplitude: f64,
    /// Standard deviation of the Gaussian profile (m).
    pub width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseOctave {
    /// Peak amplitude (m).
    pub amplitude: f64,
    /// Lattice spacing (m).
    pub wavelength: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainField {
    pub bounds: Rect<f64>,
    /// Height of the plane at the map origin (m).
    pub depth_offset: f64,
    /// Plane slope `[dh/dx, dh/dy]`.
    #[serde(default)]
    pub gradient: [f64; 2],
    #[serde(default)]
    pub bumps: Vec<Bump>,
    #[serde(default)]
    pub noise: Vec<NoiseOctave>,
    #[serde(default)]
    pub seed: u64,
}

impl TerrainField {
    pub fn flat(bounds: Rect<f64>, depth: f64) -> Self {
        Self {
            bounds,
            depth_offset: depth,
            gradient: [0.0; 2],
            bumps: Vec::new(),
            noise: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.bounds.is_proper() {
            return Err(Error::Config("terrain bounds must have positive extent".into()));
        }
        if !self.depth_offset.is_finite() || !self.gradient.iter().all(|g| g.is_finite()) {
            return Err(Error::Config("terrain plane must be finite".into()));
        }
        for b in &self.bumps {
            if !(b.width > 0.0) || !b.amplitude.is_finite() || !b.center.iter().all(|c| c.is_finite()) {
                return Err(Error::Config(format!("invalid bump {b:?}")));
            }
        }
        for o in &self.noise {
            if !(o.wavelength > 0.0) || !o.amplitude.is_finite() {
                return Err(Error::Config(format!("invalid noise octave {o:?}")));
            }
        }
        Ok(())
    }

    /// True when the field is a plane, so rays can be intersected in closed form.
    pub fn is_planar(&self) -> bool {
        self.bumps.iter().all(|b| b.amplitude == 0.0) && self.noise.iter().all(|o| o.amplitude == 0.0)
    }

    /// Height of the seabed at `p`. Points outside the bounds are clamped onto
    /// them (a warning is logged once per process).
    pub fn height(&self, p: [f64; 2]) -> f64 {
        let q = if self.bounds.contains(p) {
            p
        } else {
            if !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
                log::warn!(
                    "terrain queried outside its bounds at ({:.1}, {:.1}); clamping",
                    p[0],
                    p[1]
                );
            }
            self.bounds.clamp(p)
        };
        self.height_unclamped(q)
    }

    fn height_unclamped(&self, [x, y]: [f64; 2]) -> f64 {
        let mut h = self.depth_offset + self.gradient[0] * x + self.gradient[1] * y;
        for b in &self.bumps {
            let dx = x - b.center[0];
            let dy = y - b.center[1];
            h += b.amplitude * (-(dx * dx + dy * dy) / (2.0 * b.width * b.width)).exp();
        }
        for (k, o) in self.noise.iter().enumerate() {
            h += o.amplitude * value_noise(self.seed, k as u64, x / o.wavelength, y / o.wavelength);
        }
        h
    }

    pub fn from_toml_str(s: &str) -> std::result::Result<Self, String> {
        let field: Self = toml::from_str(s).map_err(|e| e.to_string())?;
        field.validate().map_err(|e| e.to_string())?;
        Ok(field)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("terrain serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|message| Error::Terrain {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }
}

/// Free-function form of [`TerrainField::height`].
pub fn terrain_height(field: &TerrainField, p: [f64; 2]) -> f64 {
    field.height(p)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Lattice value in [-1, 1].
fn lattice(seed: u64, octave: u64, i: i64, j: i64) -> f64 {
    let h = splitmix(seed ^ splitmix(octave ^ splitmix((i as u64) ^ splitmix(j as u64))));
    (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// Smoothstep-interpolated value noise; continuous with continuous gradient.
fn value_noise(seed: u64, octave: u64, u: f64, v: f64) -> f64 {
    let (i0, j0) = (u.floor(), v.floor());
    let (fu, fv) = (u - i0, v - j0);
    let (i, j) = (i0 as i64, j0 as i64);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (su, sv) = (s(fu), s(fv));
    let a = lattice(seed, octave, i, j);
    let b = lattice(seed, octave, i + 1, j);
    let c = lattice(seed, octave, i, j + 1);
    let d = lattice(seed, octave, i + 1, j + 1);
    let lo = a + (b - a) * su;
    let hi = c + (d - c) * su;
    lo + (hi - lo) * sv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn area() -> Rect<f64> {
        Rect::new([-100.0, -100.0], [100.0, 100.0])
    }

    #[test]
    fn noise_is_bounded_and_continuous() {
        let mut f = TerrainField::flat(area(), 0.0);
        f.noise.push(NoiseOctave {
            amplitude: 1.0,
            wavelength: 10.0,
        });
        let mut prev = f.height([-50.0, 3.0]);
        for k in 1..10_000 {
            let x = -50.0 + k as f64 * 0.01;
            let h = f.height([x, 3.0]);
            assert!(h.abs() <= 1.0);
            assert!((h - prev).abs() < 0.01);
            prev = h;
        }
    }

    #[test]
    fn toml_round_trip() {
        let mut f = TerrainField::flat(area(), -30.0);
        f.gradient = [0.01, -0.02];
        f.bumps.push(Bump {
            center: [1.0, 2.0],
            amplitude: 4.0,
            width: 12.5,
        });
        f.seed = 7;
        let back = TerrainField::from_toml_str(&f.to_toml_string()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_bad_bump() {
        let s = "depth_offset = -10.0\nbounds = { min = [0.0, 0.0], max = [1.0, 1.0] }\n\
                 [[bumps]]\ncenter = [0.0, 0.0]\namplitude = 1.0\nwidth = 0.0\n";
        assert!(TerrainField::from_toml_str(s).is_err());
    }
}

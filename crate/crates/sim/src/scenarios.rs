//! Built-in desk-scale scenarios.

use rbpf_svgp::types::Rect;

use crate::survey::SurveyConfig;
use crate::terrain::{Bump, NoiseOctave, TerrainField};

/// 200 x 200 m survey area shared by the scenarios.
pub fn survey_area() -> Rect<f64> {
    Rect::new([0.0, 0.0], [200.0, 200.0])
}

/// Sloped seabed around 30 m depth with two mounds and a depression,
/// about 8 m of relief over the survey area. The terrain extends 60 m past
/// the area so that outer beams never leave it.
pub fn scenario_a_terrain() -> TerrainField {
    TerrainField {
        bounds: Rect::new([-60.0, -60.0], [260.0, 260.0]),
        depth_offset: -32.0,
        gradient: [0.012, 0.006],
        bumps: vec![
            Bump { center: [60.0, 130.0], amplitude: 4.5, width: 18.0 },
            Bump { center: [135.0, 65.0], amplitude: -3.5, width: 22.0 },
            Bump { center: [150.0, 150.0], amplitude: 3.0, width: 14.0 },
        ],
        noise: Vec::new(),
        seed: 0,
    }
}

/// Noiseless-navigation lawnmower over [`scenario_a_terrain`]: five lines
/// 40 m apart at 1 m/s, 2 Hz pings of 240 beams over a 120 degree fan,
/// roughly half a million beams.
pub fn scenario_a_survey() -> SurveyConfig {
    SurveyConfig {
        area: survey_area(),
        line_spacing: 40.0,
        speed: 1.0,
        ping_rate: 2.0,
        beams_per_ping: 240,
        swath_half_angle: 60f64.to_radians(),
        max_range: 150.0,
        vehicle_depth: -10.0,
        mbes_noise: 0.0,
        dr_noise: [0.0; 4],
        dr_bias: [0.0; 2],
        tie_line: false,
        seed: 0,
        duration_cap: None,
    }
}

/// [`scenario_a_terrain`] with added short-wavelength relief, which gives
/// loop closures something to lock onto away from the mounds.
pub fn scenario_b_terrain() -> TerrainField {
    TerrainField {
        noise: vec![NoiseOctave { amplitude: 1.5, wavelength: 60.0 }],
        seed: 7,
        ..scenario_a_terrain()
    }
}

/// Drifting-navigation survey over [`scenario_b_terrain`]: five lines 25 m
/// apart across a 200 m by 125 m strip plus a tie line, about 1 km at
/// 1 m/s. Adjacent swaths overlap by about two thirds. An unmodelled current
/// of about 1.4 cm/s pulls dead reckoning more than 10 m off by the end.
pub fn scenario_b_survey(seed: u64) -> SurveyConfig {
    SurveyConfig {
        area: Rect::new([0.0, 0.0], [200.0, 125.0]),
        line_spacing: 25.0,
        speed: 1.0,
        ping_rate: 1.0,
        beams_per_ping: 64,
        swath_half_angle: 60f64.to_radians(),
        max_range: 150.0,
        vehicle_depth: -10.0,
        mbes_noise: 0.05,
        dr_noise: [1e-3, 1e-3, 0.0, 1e-8],
        dr_bias: [0.012, -0.008],
        tie_line: true,
        seed,
        duration_cap: None,
    }
}

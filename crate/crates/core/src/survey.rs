//! Deterministic generator for crowdsourced-style WiFi fingerprint surveys.
//!
//! Produces the long-format CSV read by [`crate::ingest`]: a multi-floor
//! building with corridor-bound measurement points and access points whose
//! received power follows log-distance path loss, spatially correlated
//! log-normal shadowing and per-location small-scale fading. Values are
//! quantized to integer dBm and unheard access points (below the receiver
//! sensitivity) are omitted, as in real scan logs.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{SeedTree, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyConfig {
    pub seed: u64,
    /// Measurement locations per floor; floors are numbered from 1.
    pub locations_per_floor: Vec<usize>,
    pub aps_per_floor: usize,
    /// High-power access points per floor, heard across the whole floor.
    pub backbone_aps_per_floor: usize,
    pub width_m: f64,
    pub depth_m: f64,
    pub floor_height_m: f64,
    pub floor_loss_db: f64,
    pub sensitivity_dbm: f64,
    pub shadowing_sigma_db: f64,
    pub shadowing_length_m: f64,
    /// Gamma shape of the per-location fading power (1 = Rayleigh).
    pub fading_shape: f64,
}

impl Default for SurveyConfig {
    /// 4846 locations over four floors (648 on the first) and 992 access points.
    fn default() -> Self {
        SurveyConfig {
            seed: 2017,
            locations_per_floor: vec![648, 1400, 1400, 1398],
            aps_per_floor: 248,
            backbone_aps_per_floor: 8,
            width_m: 120.0,
            depth_m: 60.0,
            floor_height_m: 4.0,
            floor_loss_db: 15.0,
            sensitivity_dbm: -100.0,
            shadowing_sigma_db: 6.0,
            shadowing_length_m: 5.0,
            fading_shape: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurveyRow {
    pub location_id: u64,
    pub x: f64,
    pub y: f64,
    pub floor: i64,
    pub ap_id: u64,
    pub rss_dbm: i32,
}

struct AccessPoint {
    x: f64,
    y: f64,
    floor: i64,
    ref_dbm: f64,
    exponent: f64,
    // random Fourier features of the shadowing field
    waves: Vec<([f64; 2], f64)>,
}

const SHADOW_WAVES: usize = 16;

impl AccessPoint {
    fn shadowing(&self, x: f64, y: f64, sigma: f64) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|(k, phase)| (k[0] * x + k[1] * y + phase).cos())
            .sum();
        sigma * (2.0 / SHADOW_WAVES as f64).sqrt() * s
    }
}

/// Corridor network of one floor: outer ring, two cross corridors and a spine.
fn corridors(w: f64, d: f64) -> Vec<([f64; 2], [f64; 2])> {
    let m = 5.0;
    vec![
        ([m, m], [w - m, m]),
        ([m, d - m], [w - m, d - m]),
        ([m, m], [m, d - m]),
        ([w - m, m], [w - m, d - m]),
        ([w / 3.0, m], [w / 3.0, d - m]),
        ([2.0 * w / 3.0, m], [2.0 * w / 3.0, d - m]),
        ([m, d / 2.0], [w - m, d / 2.0]),
    ]
}

fn sample_points(cfg: &SurveyConfig, n: usize, rng: &mut Stream) -> Vec<[f64; 2]> {
    let segs = corridors(cfg.width_m, cfg.depth_m);
    let lens: Vec<f64> = segs
        .iter()
        .map(|(a, b)| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt())
        .collect();
    let total: f64 = lens.iter().sum();
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(n);
    let mut seen = std::collections::HashSet::new();
    while pts.len() < n {
        let mut t = rng.gen::<f64>() * total;
        let mut seg = 0;
        while seg + 1 < segs.len() && t > lens[seg] {
            t -= lens[seg];
            seg += 1;
        }
        let (a, b) = segs[seg];
        let f = (t / lens[seg]).clamp(0.0, 1.0);
        let jitter = (rng.gen::<f64>() - 0.5) * 2.0;
        // corridors are axis aligned, so the jitter is across the corridor
        let (jx, jy) = if a[0] == b[0] { (jitter, 0.0) } else { (0.0, jitter) };
        let x = ((a[0] + f * (b[0] - a[0]) + jx) * 100.0).round() / 100.0;
        let y = ((a[1] + f * (b[1] - a[1]) + jy) * 100.0).round() / 100.0;
        if seen.insert(((x * 100.0) as i64, (y * 100.0) as i64)) {
            pts.push([x, y]);
        }
    }
    pts
}

/// Generates all survey rows, ordered by location id then access point id.
pub fn generate_survey(cfg: &SurveyConfig) -> Result<Vec<SurveyRow>> {
    if cfg.locations_per_floor.is_empty() || cfg.aps_per_floor == 0 || cfg.backbone_aps_per_floor > cfg.aps_per_floor {
        return Err(Error::Config("survey needs floors, access points, and backbone <= aps".into()));
    }
    if !(cfg.fading_shape > 0.0 && cfg.shadowing_length_m > 0.0 && cfg.width_m > 10.0 && cfg.depth_m > 10.0) {
        return Err(Error::Config("invalid survey geometry or fading parameters".into()));
    }
    let seeds = SeedTree::new(cfg.seed);
    let floors = cfg.locations_per_floor.len() as i64;

    let mut aps = Vec::new();
    let mut rng = seeds.stream("survey/aps", 0);
    for floor in 1..=floors {
        for j in 0..cfg.aps_per_floor {
            let backbone = j < cfg.backbone_aps_per_floor;
            let (x, y) = if backbone {
                // spread along the central spine
                let f = (j as f64 + 0.5) / cfg.backbone_aps_per_floor as f64;
                (f * cfg.width_m, cfg.depth_m / 2.0 + (rng.gen::<f64>() - 0.5) * 10.0)
            } else {
                (rng.gen::<f64>() * cfg.width_m, rng.gen::<f64>() * cfg.depth_m)
            };
            let waves = (0..SHADOW_WAVES)
                .map(|_| {
                    let kx: f64 = rng.sample(StandardNormal);
                    let ky: f64 = rng.sample(StandardNormal);
                    let phase = rng.gen::<f64>() * std::f64::consts::TAU;
                    ([kx / cfg.shadowing_length_m, ky / cfg.shadowing_length_m], phase)
                })
                .collect();
            aps.push(AccessPoint {
                x,
                y,
                floor,
                ref_dbm: if backbone { -25.0 } else { -40.0 + (rng.gen::<f64>() - 0.5) * 10.0 },
                exponent: if backbone { 2.2 } else { 3.0 },
                waves,
            });
        }
    }
    // Shuffle ids so the backbone does not sit at the lowest ids.
    let mut ap_ids: Vec<u64> = (1..=aps.len() as u64).collect();
    {
        use rand::seq::SliceRandom;
        ap_ids.shuffle(&mut rng);
    }

    let fading = Gamma::new(cfg.fading_shape, 1.0 / cfg.fading_shape).map_err(|e| Error::Config(e.to_string()))?;
    let mut rows = Vec::new();
    let mut next_id = 1u64;
    for (fi, &count) in cfg.locations_per_floor.iter().enumerate() {
        let floor = fi as i64 + 1;
        let mut prng = seeds.stream("survey/points", floor as u64);
        let pts = sample_points(cfg, count, &mut prng);
        let mut frng = seeds.stream("survey/fading", floor as u64);
        for p in pts {
            let id = next_id;
            next_id += 1;
            let mut loc_rows = Vec::new();
            for (ap, &ap_id) in aps.iter().zip(&ap_ids) {
                let dz = (ap.floor - floor) as f64 * cfg.floor_height_m;
                let dist = ((ap.x - p[0]).powi(2) + (ap.y - p[1]).powi(2) + dz * dz).sqrt().max(1.0);
                let fade: f64 = fading.sample(&mut frng);
                let rss = ap.ref_dbm - 10.0 * ap.exponent * dist.log10()
                    - cfg.floor_loss_db * (ap.floor - floor).abs() as f64
                    + ap.shadowing(p[0], p[1], cfg.shadowing_sigma_db)
                    + 10.0 * fade.log10();
                let q = rss.round();
                if q >= cfg.sensitivity_dbm {
                    loc_rows.push(SurveyRow {
                        location_id: id,
                        x: p[0],
                        y: p[1],
                        floor,
                        ap_id,
                        rss_dbm: q as i32,
                    });
                }
            }
            loc_rows.sort_by_key(|r| r.ap_id);
            rows.extend(loc_rows);
        }
    }
    Ok(rows)
}

pub fn write_survey_csv<W: Write>(rows: &[SurveyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(crate::ingest::CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.location_id.to_string(),
            format!("{:.2}", r.x),
            format!("{:.2}", r.y),
            r.floor.to_string(),
            r.ap_id.to_string(),
            r.rss_dbm.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<survey csv>", e))?;
    Ok(())
}

//! Scenario time series: PV output, demand, grid tariff and battery
//! operating cost over a one-day horizon.
//!
//! Units are fixed across the crate: power in kW, energy in kWh, prices in
//! $/kWh. Series are stored per step; `dt_hours` converts power to energy.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column order of the scenario CSV schema.
pub const CSV_HEADER: [&str; 5] = ["t_index", "p_pv_kw", "p_d_kw", "c_g_per_kwh", "c_b_per_kwh"];

/// Length of the scheduling horizon in hours.
pub const HORIZON_HOURS: f64 = 24.0;

const HORIZON_TOL: f64 = 1e-9;

/// Battery operating cost used by synthetic scenarios, $/kWh.
pub const DEFAULT_BATTERY_COST: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("non-numeric cell at row {row}, column `{column}`")]
    NonNumericCell { row: usize, column: &'static str },
    #[error("negative value at row {row}, column `{column}`")]
    NegativeValue { row: usize, column: &'static str },
    #[error("non-finite value at row {row}, column `{column}`")]
    NonFinite { row: usize, column: &'static str },
    #[error("t_index at row {row} is {found}, expected {row}")]
    BadIndex { row: usize, found: String },
    #[error("{n_steps} steps of {dt_hours} h do not cover a {HORIZON_HOURS} h horizon")]
    HorizonMismatch { n_steps: usize, dt_hours: f64 },
    #[error("series lengths differ: expected {expected}, `{column}` has {found}")]
    LengthMismatch { column: &'static str, expected: usize, found: usize },
    #[error("scenario must have at least one step and dt_hours > 0")]
    EmptyHorizon,
    #[error("scale factors must be positive (power {power}, price {price})")]
    NonPositiveFactor { power: f64, price: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Aligned per-step inputs of one scheduling day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioData {
    label: String,
    dt_hours: f64,
    p_pv: Vec<f64>,
    p_d: Vec<f64>,
    c_g: Vec<f64>,
    c_b: Vec<f64>,
}

impl ScenarioData {
    /// Builds a scenario covering exactly one 24 h day.
    pub fn new(
        label: impl Into<String>,
        dt_hours: f64,
        p_pv: Vec<f64>,
        p_d: Vec<f64>,
        c_g: Vec<f64>,
        c_b: Vec<f64>,
    ) -> Result<Self, ProfileError> {
        let s = Self::new_partial(label, dt_hours, p_pv, p_d, c_g, c_b)?;
        check_horizon(s.n_steps(), dt_hours)?;
        Ok(s)
    }

    /// Like [`ScenarioData::new`] but without the 24 h horizon requirement.
    ///
    /// Used for short hand-built fixtures (brute-force oracle instances).
    pub fn new_partial(
        label: impl Into<String>,
        dt_hours: f64,
        p_pv: Vec<f64>,
        p_d: Vec<f64>,
        c_g: Vec<f64>,
        c_b: Vec<f64>,
    ) -> Result<Self, ProfileError> {
        let n = p_pv.len();
        if n == 0 || !(dt_hours > 0.0) || !dt_hours.is_finite() {
            return Err(ProfileError::EmptyHorizon);
        }
        for (column, series) in [
            (CSV_HEADER[1], &p_pv),
            (CSV_HEADER[2], &p_d),
            (CSV_HEADER[3], &c_g),
            (CSV_HEADER[4], &c_b),
        ] {
            if series.len() != n {
                return Err(ProfileError::LengthMismatch { column, expected: n, found: series.len() });
            }
            for (row, v) in series.iter().enumerate() {
                if !v.is_finite() {
                    return Err(ProfileError::NonFinite { row, column });
                }
                if *v < 0.0 {
                    return Err(ProfileError::NegativeValue { row, column });
                }
            }
        }
        Ok(Self { label: label.into(), dt_hours, p_pv, p_d, c_g, c_b })
    }

    pub fn n_steps(&self) -> usize {
        self.p_pv.len()
    }

    pub fn dt_hours(&self) -> f64 {
        self.dt_hours
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// PV generation, kW.
    pub fn p_pv(&self) -> &[f64] {
        &self.p_pv
    }

    /// Demand, kW.
    pub fn p_d(&self) -> &[f64] {
        &self.p_d
    }

    /// Grid tariff, $/kWh.
    pub fn c_g(&self) -> &[f64] {
        &self.c_g
    }

    /// Battery operating cost, $/kWh.
    pub fn c_b(&self) -> &[f64] {
        &self.c_b
    }

    /// Copy of this scenario with the two price series replaced.
    ///
    /// Prices must already be non-negative and finite; callers in this crate
    /// floor perturbed tariffs before calling.
    pub fn with_prices(&self, c_g: Vec<f64>, c_b: Vec<f64>) -> Result<Self, ProfileError> {
        Self::new_partial(self.label.clone(), self.dt_hours, self.p_pv.clone(), self.p_d.clone(), c_g, c_b)
    }

    /// SHA-256 over the little-endian bytes of every series, hex encoded.
    pub fn content_hash(&self) -> String {
        crate::hash_series(&[&[self.dt_hours], &self.p_pv, &self.p_d, &self.c_g, &self.c_b])
    }
}

fn check_horizon(n_steps: usize, dt_hours: f64) -> Result<(), ProfileError> {
    if (n_steps as f64 * dt_hours - HORIZON_HOURS).abs() > HORIZON_TOL {
        return Err(ProfileError::HorizonMismatch { n_steps, dt_hours });
    }
    Ok(())
}

/// Reads a scenario CSV from disk; the label is the file stem.
pub fn load_scenario_csv(path: impl AsRef<Path>, dt_hours: f64) -> Result<ScenarioData, ProfileError> {
    let path = path.as_ref();
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_scenario_csv(File::open(path)?, dt_hours, label)
}

/// Parses the `t_index,p_pv_kw,p_d_kw,c_g_per_kwh,c_b_per_kwh` schema.
///
/// Rows in error variants are zero-based data rows, i.e. equal to the
/// expected `t_index`.
pub fn read_scenario_csv<R: Read>(
    reader: R,
    dt_hours: f64,
    label: impl Into<String>,
) -> Result<ScenarioData, ProfileError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(CSV_HEADER) {
        *slot = headers.iter().position(|h| h == name).ok_or(ProfileError::MissingColumn(name))?;
    }

    let mut cols: [Vec<f64>; 4] = Default::default();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let t_raw = record.get(idx[0]).unwrap_or("");
        if t_raw.parse::<usize>().ok() != Some(row) {
            return Err(ProfileError::BadIndex { row, found: t_raw.to_string() });
        }
        for (k, col) in cols.iter_mut().enumerate() {
            let column = CSV_HEADER[k + 1];
            let cell = record.get(idx[k + 1]).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| ProfileError::NonNumericCell { row, column })?;
            if !v.is_finite() {
                return Err(ProfileError::NonFinite { row, column });
            }
            if v < 0.0 {
                return Err(ProfileError::NegativeValue { row, column });
            }
            col.push(v);
        }
    }
    let [p_pv, p_d, c_g, c_b] = cols;
    check_horizon(p_pv.len(), dt_hours)?;
    ScenarioData::new(label, dt_hours, p_pv, p_d, c_g, c_b)
}

/// Writes the scenario with six decimal places per value.
pub fn write_scenario_csv<W: Write>(s: &ScenarioData, writer: W) -> Result<(), ProfileError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for t in 0..s.n_steps() {
        w.write_record([
            t.to_string(),
            format!("{:.6}", s.p_pv[t]),
            format!("{:.6}", s.p_d[t]),
            format!("{:.6}", s.c_g[t]),
            format!("{:.6}", s.c_b[t]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_scenario_csv(s: &ScenarioData, path: impl AsRef<Path>) -> Result<(), ProfileError> {
    write_scenario_csv(s, File::create(path)?)
}

/// Multiplies powers by `power_factor` and prices by `price_factor`.
pub fn scale_profile(s: &ScenarioData, power_factor: f64, price_factor: f64) -> Result<ScenarioData, ProfileError> {
    if !(power_factor > 0.0 && price_factor > 0.0) || !power_factor.is_finite() || !price_factor.is_finite() {
        return Err(ProfileError::NonPositiveFactor { power: power_factor, price: price_factor });
    }
    let scale = |v: &[f64], k: f64| v.iter().map(|x| x * k).collect::<Vec<_>>();
    ScenarioData::new_partial(
        s.label.clone(),
        s.dt_hours,
        scale(&s.p_pv, power_factor),
        scale(&s.p_d, power_factor),
        scale(&s.c_g, price_factor),
        scale(&s.c_b, price_factor),
    )
}

/// Deterministic synthetic district day.
///
/// Shapes, with `h` the hour at the start of each step:
/// * PV: half-sine over 06:00-18:00 with a seeded peak in [1500, 2000] kW and
///   light per-step cloud attenuation; zero outside that window.
/// * Demand: base load plus a morning (08:00) and a larger evening (19:00)
///   bump, clamped to [500, 3000] kW.
/// * Tariff: off-peak, morning shoulder, midday trough and an elevated
///   17:00-21:00 evening block, jittered per step and clamped to
///   [0.05, 0.50] $/kWh.
/// * Battery cost: constant [`DEFAULT_BATTERY_COST`].
pub fn synth_scenario(seed: u64, n_steps: usize, dt_hours: f64) -> Result<ScenarioData, ProfileError> {
    if n_steps == 0 || !(dt_hours > 0.0) {
        return Err(ProfileError::EmptyHorizon);
    }
    check_horizon(n_steps, dt_hours)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let pv_peak = rng.random_range(1500.0..2000.0);
    let base_load = rng.random_range(800.0..1000.0);
    let morning_amp = rng.random_range(500.0..800.0);
    let evening_amp = rng.random_range(1200.0..1600.0);
    let price_level = rng.random_range(0.9..1.1);

    let mut p_pv = Vec::with_capacity(n_steps);
    let mut p_d = Vec::with_capacity(n_steps);
    let mut c_g = Vec::with_capacity(n_steps);
    for t in 0..n_steps {
        let h = t as f64 * dt_hours;

        let pv = if (6.0..18.0).contains(&h) {
            let cloud = rng.random_range(0.85..1.0);
            pv_peak * (PI * (h - 6.0) / 12.0).sin() * cloud
        } else {
            0.0
        };
        p_pv.push(pv.max(0.0));

        let bump = |centre: f64, width: f64| (-0.5 * ((h - centre) / width).powi(2)).exp();
        let noise = rng.random_range(0.95..1.05);
        let demand = (base_load + morning_amp * bump(8.0, 1.5) + evening_amp * bump(19.0, 2.0)) * noise;
        p_d.push(demand.clamp(500.0, 3000.0));

        let block: f64 = match h {
            h if h < 7.0 => 0.08,
            h if h < 10.0 => 0.18,
            h if h < 16.0 => 0.10,
            h if h < 17.0 => 0.16,
            h if h < 21.0 => 0.38,
            _ => 0.12,
        };
        let jitter = rng.random_range(0.95..1.05);
        c_g.push((block * price_level * jitter).clamp(0.05, 0.50));
    }
    let c_b = vec![DEFAULT_BATTERY_COST; n_steps];
    ScenarioData::new(format!("synth-{seed}"), dt_hours, p_pv, p_d, c_g, c_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_text(rows: usize, patch: Option<(usize, &str)>) -> String {
        let mut s = String::from("t_index,p_pv_kw,p_d_kw,c_g_per_kwh,c_b_per_kwh\n");
        for t in 0..rows {
            let pd = match patch {
                Some((r, v)) if r == t => v.to_string(),
                _ => format!("{}", 1000 + t),
            };
            s.push_str(&format!("{t},{},{pd},0.2,0.05\n", t * 10));
        }
        s
    }

    #[test]
    fn loads_48_half_hour_rows() {
        let s = read_scenario_csv(csv_text(48, None).as_bytes(), 0.5, "x").unwrap();
        assert_eq!(s.n_steps(), 48);
        assert_eq!(s.p_d()[5], 1005.0);
        assert_eq!(s.p_pv()[47], 470.0);
    }

    #[test]
    fn negative_demand_is_rejected_with_position() {
        let err = read_scenario_csv(csv_text(48, Some((3, "-5"))).as_bytes(), 0.5, "x").unwrap_err();
        assert!(matches!(err, ProfileError::NegativeValue { row: 3, column: "p_d_kw" }), "{err}");
    }

    #[test]
    fn non_numeric_cell() {
        let err = read_scenario_csv(csv_text(48, Some((7, "abc"))).as_bytes(), 0.5, "x").unwrap_err();
        assert!(matches!(err, ProfileError::NonNumericCell { row: 7, column: "p_d_kw" }));
    }

    #[test]
    fn short_file_is_horizon_mismatch() {
        let err = read_scenario_csv(csv_text(24, None).as_bytes(), 0.5, "x").unwrap_err();
        assert!(matches!(err, ProfileError::HorizonMismatch { n_steps: 24, .. }));
    }

    #[test]
    fn missing_column() {
        let text = "t_index,p_pv_kw,p_d_kw,c_g_per_kwh\n0,0,1,0.1\n";
        let err = read_scenario_csv(text.as_bytes(), 24.0, "x").unwrap_err();
        assert!(matches!(err, ProfileError::MissingColumn("c_b_per_kwh")));
    }

    #[test]
    fn out_of_order_index() {
        let text = "t_index,p_pv_kw,p_d_kw,c_g_per_kwh,c_b_per_kwh\n1,0,1,0.1,0.05\n";
        let err = read_scenario_csv(text.as_bytes(), 24.0, "x").unwrap_err();
        assert!(matches!(err, ProfileError::BadIndex { row: 0, .. }));
    }

    #[test]
    fn scale_identity_and_factor() {
        let s = synth_scenario(3, 48, 0.5).unwrap();
        assert_eq!(scale_profile(&s, 1.0, 1.0).unwrap(), s);

        let s = ScenarioData::new_partial("k", 24.0, vec![0.0], vec![5000.0], vec![0.1], vec![0.05]).unwrap();
        let scaled = scale_profile(&s, 0.001, 1.0).unwrap();
        assert_eq!(scaled.p_d()[0], 5.0);
        assert!(matches!(scale_profile(&s, 0.0, 1.0), Err(ProfileError::NonPositiveFactor { .. })));
        assert!(scale_profile(&s, 1.0, -2.0).is_err());
    }

    #[test]
    fn synth_is_deterministic_and_shaped() {
        let a = synth_scenario(7, 48, 0.5).unwrap();
        let b = synth_scenario(7, 48, 0.5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.p_pv()[0], 0.0);
        // first and last quarter are dark
        assert!(a.p_pv()[..12].iter().chain(&a.p_pv()[36..]).all(|&v| v == 0.0));
        let min_d = a.p_d().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min_d >= 500.0, "min demand {min_d}");
        // evening block is the most expensive period
        let evening = a.c_g()[34..42].iter().cloned().fold(f64::INFINITY, f64::min);
        let night = a.c_g()[..14].iter().cloned().fold(0.0, f64::max);
        assert!(evening > night);
    }

    #[test]
    fn synth_rejects_bad_horizon() {
        assert!(matches!(synth_scenario(1, 24, 0.5), Err(ProfileError::HorizonMismatch { .. })));
    }
}

//! Scenario configuration: TOML schema, unit conversion at the boundary,
//! and device parameter overrides on top of the measured defaults.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use qlink_core::device::{cable_derived_params, fit_l_t, DeviceParams};

use crate::error::{CliError, CliResult};

/// Environment variable providing the default output directory.
pub const OUTPUT_ENV: &str = "QLINK_OUTPUT_DIR";

/// Default cap on the number of sweep grid points.
pub const DEFAULT_SWEEP_CAP: usize = 10_000;

/// A parsed scenario file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    /// Experiment kind; see [`crate::experiments::Experiment`].
    pub experiment: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub max_sweep_points: Option<usize>,
    #[serde(default)]
    pub device: DeviceOverrides,
    #[serde(default)]
    pub params: toml::Table,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let scn: ScenarioFile = toml::from_str(text)
            .map_err(|e| CliError::Validation(format!("scenario config: {e}")))?;
        if scn.name.is_empty() {
            return Err(CliError::validation("scenario name must be non-empty"));
        }
        if !scn
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(CliError::validation(
                "scenario name must be alphanumeric with '-' or '_'",
            ));
        }
        Ok(scn)
    }
}

/// Optional overrides of the measured device defaults. All values use the
/// human-facing units of the device tables (MHz, µs, m, nH/m, pF/m, dB) and
/// are converted to SI/angular units at this boundary.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceOverrides {
    pub cable_length_m: Option<f64>,
    pub cable_capacitance_pf_per_m: Option<f64>,
    pub cable_inductance_nh_per_m: Option<f64>,
    pub cable_t1_mode_us: Option<f64>,
    pub cable_t2_mode_us: Option<f64>,
    pub cable_thermal_population: Option<f64>,
    pub joint_transmission_db: Option<f64>,
    pub n_joints: Option<u32>,
    pub q1_t1_us: Option<f64>,
    pub q1_tphi_us: Option<f64>,
    pub q2_t1_us: Option<f64>,
    pub q2_tphi_us: Option<f64>,
    pub q3_t1_us: Option<f64>,
    pub q3_tphi_us: Option<f64>,
    pub q4_t1_us: Option<f64>,
    pub q4_tphi_us: Option<f64>,
    /// Maximum emission rate of coupler A, 1/µs (re-anchors the coupler).
    pub kappa_max_a_per_us: Option<f64>,
    /// Maximum emission rate of coupler B, 1/µs (re-anchors the coupler).
    pub kappa_max_b_per_us: Option<f64>,
}

impl DeviceOverrides {
    /// Apply the overrides to the measured default device.
    pub fn resolve(&self) -> CliResult<DeviceParams> {
        let mut dev = DeviceParams::measured_default();
        let us = 1e-6;
        if let Some(v) = self.cable_length_m {
            dev.cable.length = v;
        }
        if let Some(v) = self.cable_capacitance_pf_per_m {
            dev.cable.specific_capacitance = v * 1e-12;
        }
        if let Some(v) = self.cable_inductance_nh_per_m {
            dev.cable.specific_inductance = v * 1e-9;
        }
        if let Some(v) = self.cable_t1_mode_us {
            dev.cable.t1_mode = v * us;
        }
        if let Some(v) = self.cable_t2_mode_us {
            dev.cable.t2_mode = v * us;
        }
        if let Some(v) = self.cable_thermal_population {
            dev.cable.thermal_population = v;
        }
        if let Some(v) = self.joint_transmission_db {
            dev.cable.joint_transmission_db = v;
        }
        if let Some(v) = self.n_joints {
            dev.cable.n_joints = v;
        }
        for (q, t1, tphi) in [
            (0, self.q1_t1_us, self.q1_tphi_us),
            (1, self.q2_t1_us, self.q2_tphi_us),
            (2, self.q3_t1_us, self.q3_tphi_us),
            (3, self.q4_t1_us, self.q4_tphi_us),
        ] {
            let qubit = match q {
                0 => &mut dev.q1,
                1 => &mut dev.q2,
                2 => &mut dev.q3,
                _ => &mut dev.q4,
            };
            if let Some(v) = t1 {
                qubit.t1 = v * us;
            }
            if let Some(v) = tphi {
                qubit.tphi = v * us;
            }
        }
        if let Some(v) = self.kappa_max_a_per_us {
            dev.coupler_a.kappa_max = v * 1e6;
        }
        if let Some(v) = self.kappa_max_b_per_us {
            dev.coupler_b.kappa_max = v * 1e6;
        }
        dev.cable
            .validate()
            .map_err(|e| CliError::Validation(format!("device overrides: {e}")))?;
        for q in [&dev.q1, &dev.q2, &dev.q3, &dev.q4] {
            q.validate()
                .map_err(|e| CliError::Validation(format!("device overrides: {e}")))?;
        }
        // re-anchor the couplers against the (possibly new) cable impedance
        // and maximum emission rates
        let derived = cable_derived_params(&dev.cable)
            .map_err(|e| CliError::Validation(format!("device overrides: {e}")))?;
        dev.coupler_a.l_t = fit_l_t(
            dev.coupler_a.kappa_max,
            &dev.q2,
            dev.coupler_a.l_g,
            dev.coupler_a.l_w,
            derived.z0,
        )
        .map_err(|e| CliError::Validation(format!("device overrides: {e}")))?;
        dev.coupler_b.l_t = fit_l_t(
            dev.coupler_b.kappa_max,
            &dev.q3,
            dev.coupler_b.l_g,
            dev.coupler_b.l_w,
            derived.z0,
        )
        .map_err(|e| CliError::Validation(format!("device overrides: {e}")))?;
        Ok(dev)
    }
}

/// Typed access to the `[params]` table with unit conversion and tracking of
/// which keys were consumed, so unknown keys can be rejected.
pub struct Params {
    table: toml::Table,
    used: RefCell<BTreeSet<String>>,
}

/// Angular frequency (rad/s) from an ordinary frequency in MHz.
pub fn mhz(f: f64) -> f64 {
    TAU * f * 1e6
}

impl Params {
    pub fn new(table: toml::Table) -> Self {
        Params {
            table,
            used: RefCell::new(BTreeSet::new()),
        }
    }

    fn raw(&self, key: &str) -> Option<&toml::Value> {
        let v = self.table.get(key);
        if v.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        v
    }

    pub fn f64_opt(&self, key: &str) -> CliResult<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(*f)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(CliError::Validation(format!(
                "parameter '{key}' must be a number, got {v}"
            ))),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> CliResult<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    pub fn req_f64(&self, key: &str) -> CliResult<f64> {
        self.f64_opt(key)?
            .ok_or_else(|| CliError::Validation(format!("missing required parameter '{key}'")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> CliResult<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(v) => Err(CliError::Validation(format!(
                "parameter '{key}' must be a non-negative integer, got {v}"
            ))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> CliResult<u64> {
        match self.raw(key) {
            None => Ok(default),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(v) => Err(CliError::Validation(format!(
                "parameter '{key}' must be a non-negative integer, got {v}"
            ))),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> CliResult<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some(toml::Value::Boolean(b)) => Ok(*b),
            Some(v) => Err(CliError::Validation(format!(
                "parameter '{key}' must be a boolean, got {v}"
            ))),
        }
    }

    pub fn str_or(&self, key: &str, default: &str) -> CliResult<String> {
        match self.raw(key) {
            None => Ok(default.to_string()),
            Some(toml::Value::String(s)) => Ok(s.clone()),
            Some(v) => Err(CliError::Validation(format!(
                "parameter '{key}' must be a string, got {v}"
            ))),
        }
    }

    pub fn f64_list_opt(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::Float(f) => Ok(*f),
                    toml::Value::Integer(i) => Ok(*i as f64),
                    other => Err(CliError::Validation(format!(
                        "parameter '{key}' must be a list of numbers, got element {other}"
                    ))),
                })
                .collect::<CliResult<Vec<f64>>>()
                .map(Some),
            Some(v) => Err(CliError::Validation(format!(
                "parameter '{key}' must be a list of numbers, got {v}"
            ))),
        }
    }

    /// Reject keys that no getter consumed.
    pub fn check_unused(&self) -> CliResult<()> {
        let used = self.used.borrow();
        let unknown: Vec<&String> = self.table.keys().filter(|k| !used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(format!(
                "unknown parameter(s) for this experiment: {}",
                unknown
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_top_level_key_rejected() {
        let err = ScenarioFile::parse("name = \"x\"\nexperiment = \"cooling\"\nbogus = 1\n")
            .unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn unknown_param_reported() {
        let p = Params::new(toml::toml! { alpha = 0.5 bogus = 1 });
        let _ = p.f64_or("alpha", 0.0).unwrap();
        let err = p.check_unused().unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn device_overrides_change_cable() {
        let ov = DeviceOverrides {
            cable_length_m: Some(32.0),
            ..Default::default()
        };
        let dev = ov.resolve().unwrap();
        assert_eq!(dev.cable.length, 32.0);
        // halving the length doubles the free spectral range
        let fsr = dev.derived_cable().omega_fsr / TAU / 1e6;
        assert!((fsr - 3.75).abs() < 0.1, "fsr {fsr}");
    }

    #[test]
    fn invalid_override_is_validation_error() {
        let ov = DeviceOverrides {
            cable_thermal_population: Some(0.5),
            ..Default::default()
        };
        assert_eq!(ov.resolve().unwrap_err().exit_code(), 1);
    }
}

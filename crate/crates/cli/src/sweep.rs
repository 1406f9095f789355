//! Parameter sweep driver: cartesian grids over scenario parameters, run
//! concurrently with per-point seeds derived from the master seed, results
//! merged in canonical (index) order.

use rayon::prelude::*;

use qlink_core::device::DeviceParams;

use crate::config::{Params, ScenarioFile, DEFAULT_SWEEP_CAP};
use crate::error::{CliError, CliResult};
use crate::experiments::{run_experiment, Experiment};

/// One sweep axis: a parameter key and its grid values.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSpec {
    pub key: String,
    pub values: Vec<f64>,
}

/// Parse an axis spec of the form `key=v1..v2:n` (inclusive linear grid) or
/// `key=v` (single value).
pub fn parse_axis(s: &str) -> CliResult<AxisSpec> {
    let (key, rest) = s
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("axis '{s}' must look like key=v1..v2:n")))?;
    if key.is_empty() {
        return Err(CliError::Validation(format!("axis '{s}' has an empty key")));
    }
    let parse_f = |t: &str| -> CliResult<f64> {
        let v: f64 = t
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("axis '{s}': '{t}' is not a number")))?;
        if !v.is_finite() {
            return Err(CliError::Validation(format!("axis '{s}' must be finite")));
        }
        Ok(v)
    };
    let values = if let Some((range, n_str)) = rest.rsplit_once(':') {
        let n: usize = n_str
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("axis '{s}': point count must be an integer")))?;
        if n == 0 {
            return Err(CliError::Validation(format!("axis '{s}' needs at least one point")));
        }
        match range.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (parse_f(a)?, parse_f(b)?);
                if n == 1 {
                    vec![a]
                } else {
                    (0..n)
                        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                        .collect()
                }
            }
            None if n == 1 => vec![parse_f(range)?],
            None => {
                return Err(CliError::Validation(format!(
                    "axis '{s}' must look like key=v1..v2:n"
                )))
            }
        }
    } else {
        vec![parse_f(rest)?]
    };
    Ok(AxisSpec {
        key: key.to_string(),
        values,
    })
}

/// Derived per-point seed: point 0 reuses the master seed so a 1-point sweep
/// is identical to a plain run.
pub fn point_seed(master: u64, index: u64) -> u64 {
    master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Run the sweep and return the aggregated CSV (sorted by point index).
pub fn run_sweep(
    scenario: &ScenarioFile,
    device: &DeviceParams,
    axes: &[AxisSpec],
    workers: usize,
    master_seed: u64,
) -> CliResult<String> {
    if axes.is_empty() {
        return Err(CliError::validation("sweep needs at least one --axis"));
    }
    let exp: Experiment = scenario.experiment.parse()?;
    let cap = scenario.max_sweep_points.unwrap_or(DEFAULT_SWEEP_CAP);
    let total: usize = axes.iter().map(|a| a.values.len()).product();
    if total > cap {
        return Err(CliError::Validation(format!(
            "sweep grid has {total} points, exceeding the cap of {cap} \
             (raise max_sweep_points in the scenario to allow this)"
        )));
    }

    // enumerate the cartesian grid in row-major order over the axes
    let mut points: Vec<(usize, Vec<f64>)> = Vec::with_capacity(total);
    for index in 0..total {
        let mut rem = index;
        let mut coords = Vec::with_capacity(axes.len());
        for axis in axes.iter().rev() {
            coords.push(axis.values[rem % axis.values.len()]);
            rem /= axis.values.len();
        }
        coords.reverse();
        points.push((index, coords));
    }

    let run_point = |(index, coords): &(usize, Vec<f64>)| -> CliResult<(usize, Vec<String>, Vec<f64>)> {
        let mut table = scenario.params.clone();
        for (axis, v) in axes.iter().zip(coords) {
            table.insert(axis.key.clone(), toml::Value::Float(*v));
        }
        let params = Params::new(table);
        let out = run_experiment(exp, device, &params, point_seed(master_seed, *index as u64))?;
        let keys: Vec<String> = out.metrics.keys().cloned().collect();
        let vals: Vec<f64> = out.metrics.values().cloned().collect();
        Ok((*index, keys, vals))
    };

    let results: Vec<CliResult<(usize, Vec<String>, Vec<f64>)>> = if workers <= 1 {
        points.iter().map(run_point).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        pool.install(|| points.par_iter().map(run_point).collect())
    };
    let mut rows: Vec<(usize, Vec<String>, Vec<f64>)> =
        results.into_iter().collect::<CliResult<Vec<_>>>()?;
    rows.sort_by_key(|r| r.0);

    let metric_keys = rows[0].1.clone();
    for r in &rows {
        if r.1 != metric_keys {
            return Err(CliError::runtime(
                "sweep points produced inconsistent metric sets",
            ));
        }
    }

    let mut csv = String::from("index");
    for axis in axes {
        csv.push(',');
        csv.push_str(&axis.key);
    }
    for k in &metric_keys {
        csv.push(',');
        csv.push_str(k);
    }
    csv.push('\n');
    for (index, coords) in &points {
        let (_, _, vals) = &rows[*index];
        csv.push_str(&index.to_string());
        for v in coords {
            csv.push_str(&format!(",{v:.12e}"));
        }
        for v in vals {
            csv.push_str(&format!(",{v:.12e}"));
        }
        csv.push('\n');
    }
    Ok(csv)
}

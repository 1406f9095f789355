//! Experiment dispatch: every scenario kind maps to a pure function from
//! (device, parameters, seed) to a set of metrics and output files.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde_json::json;

use qlink_core::device::{self, DeviceParams};
use qlink_core::iosim::{
    mismatch_scan, simulate_pitch_catch, static_emission_scan, transfer_efficiency, ChannelParams,
    PitchCatchSpec,
};
use qlink_core::multimode::{self, MultimodeSpec, ParitySide};
use qlink_core::protocol::{
    active_cooling_sim, entangle_remote, grid_window, inefficiency_budget, teleport_cnot,
    teleport_state, tomography_input_state, BudgetOptions, CoolingParams, NoiseConfig,
    TeleportMode,
};
use qlink_core::pulse::{calibration_scan, shaped_schedules, CalibrationVerdict};
use qlink_core::quantum::{DensityMatrix, Gate, QuantumChannel};
use qlink_core::tomography::{
    chi_ideal, process_fidelity, qpt, qpt_input_set, qpt_of_map, qst_exact, qst_sampled,
    repeat_statistics, state_fidelity,
};

use crate::config::{mhz, Params};
use crate::error::{CliError, CliResult};

/// Recognized experiment kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Chevron,
    Transfer,
    MismatchScan,
    EmissionScan,
    Calibrate,
    Entangle,
    Teleport,
    TeleportCnot,
    Cooling,
    Budget,
    Tomography,
}

impl FromStr for Experiment {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        Ok(match s {
            "chevron" => Experiment::Chevron,
            "transfer" => Experiment::Transfer,
            "mismatch-scan" => Experiment::MismatchScan,
            "emission-scan" => Experiment::EmissionScan,
            "calibrate" => Experiment::Calibrate,
            "entangle" => Experiment::Entangle,
            "teleport" => Experiment::Teleport,
            "teleport-cnot" => Experiment::TeleportCnot,
            "cooling" => Experiment::Cooling,
            "budget" => Experiment::Budget,
            "tomography" => Experiment::Tomography,
            other => {
                return Err(CliError::Validation(format!(
                    "unknown experiment kind '{other}' (expected one of: chevron, transfer, \
                     mismatch-scan, emission-scan, calibrate, entangle, teleport, teleport-cnot, \
                     cooling, budget, tomography)"
                )))
            }
        })
    }
}

/// Result of one experiment run: scalar metrics plus named output files.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub metrics: BTreeMap<String, f64>,
    pub files: Vec<(String, String)>,
}

impl RunOutput {
    fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }
    fn file(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }
}

pub fn run_experiment(
    exp: Experiment,
    device: &DeviceParams,
    params: &Params,
    seed: u64,
) -> CliResult<RunOutput> {
    let out = match exp {
        Experiment::Chevron => chevron(device, params)?,
        Experiment::Transfer => transfer(device, params)?,
        Experiment::MismatchScan => mismatch(device, params)?,
        Experiment::EmissionScan => emission(device, params)?,
        Experiment::Calibrate => calibrate(device, params)?,
        Experiment::Entangle => entangle(params)?,
        Experiment::Teleport => teleport(params, seed)?,
        Experiment::TeleportCnot => teleport_cnot_exp(params)?,
        Experiment::Cooling => cooling(params)?,
        Experiment::Budget => budget(device, params)?,
        Experiment::Tomography => tomography_exp(params, seed)?,
    };
    params.check_unused()?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Deterministic float formatting for CSV output.
fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

/// Snap a duration onto the integration grid.
fn snap(t: f64, dt: f64) -> f64 {
    dt * (t / dt).round()
}

/// Linear interpolation on a sorted grid; NaN outside the range.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    for w in xs.windows(2).zip(ys.windows(2)) {
        let (xw, yw) = w;
        if (xw[0]..=xw[1]).contains(&x) && xw[1] > xw[0] {
            let u = (x - xw[0]) / (xw[1] - xw[0]);
            return yw[0] + u * (yw[1] - yw[0]);
        }
    }
    f64::NAN
}

fn basis_labels(n_qubits: usize) -> Vec<String> {
    (0..1usize << n_qubits)
        .map(|i| format!("{i:0width$b}", width = n_qubits))
        .collect()
}

/// Bar-chart-ready CSV of a complex matrix: basis labels, real, imag.
fn matrix_csv(m: &DMatrix<Complex64>, n_qubits: usize) -> String {
    let labels = basis_labels(n_qubits);
    let mut s = String::from("bra,ket,real,imag\n");
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                labels[i],
                labels[j],
                fmt(m[(i, j)].re),
                fmt(m[(i, j)].im)
            ));
        }
    }
    s
}

/// Row-major interleaved [re, im, ...] serialization of a complex matrix.
fn matrix_interleaved(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)].re);
            v.push(m[(i, j)].im);
        }
    }
    v
}

fn noise_config(params: &Params) -> CliResult<NoiseConfig> {
    let noiseless = params.bool_or("noiseless", false)?;
    let mut noise = if noiseless {
        NoiseConfig::noiseless()
    } else {
        NoiseConfig::measured_default()
    };
    if let Some(l) = params.f64_opt("feedforward_latency_us")? {
        if l < 0.0 {
            return Err(CliError::validation("feedforward_latency_us must be >= 0"));
        }
        noise.feedforward_latency = l * 1e-6;
    }
    noise.validate()?;
    Ok(noise)
}

// ---------------------------------------------------------------------------
// chevron
// ---------------------------------------------------------------------------

fn chevron(device: &DeviceParams, p: &Params) -> CliResult<RunOutput> {
    let g = mhz(p.req_f64("g_mhz")?);
    let side = match p.str_or("side", "near")?.as_str() {
        "near" => ParitySide::Near,
        "far" => ParitySide::Far,
        other => {
            return Err(CliError::Validation(format!(
                "side must be 'near' or 'far', got '{other}'"
            )))
        }
    };
    let half_window = p.usize_or("mode_half_window", 100)?;
    let n_det = p.usize_or("n_detunings", 100)?;
    let span = mhz(p.f64_or("detuning_span_mhz", 5.0)?);
    let n_times = p.usize_or("n_times", 300)?;
    let t_span = p.f64_or("time_span_ns", 1000.0)? * 1e-9;
    if n_det < 2 || n_times < 2 {
        return Err(CliError::validation(
            "n_detunings and n_times must be at least 2",
        ));
    }

    let derived = device.derived_cable();
    let spec = MultimodeSpec::single_qubit_window(
        g,
        0.0,
        derived.omega_fsr,
        device.q2.omega_idle,
        half_window,
        side,
    );
    let detunings = linspace(-span / 2.0, span / 2.0, n_det);
    let times = linspace(0.0, t_span, n_times);
    let map = multimode::chevron_scan(&spec, &detunings, &times)?;

    let mut csv = String::from("detuning_mhz,time_ns,population\n");
    for (j, dw) in map.axis2.iter().enumerate() {
        for (k, t) in map.axis1.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{}\n",
                fmt(dw / TAU / 1e6),
                fmt(t * 1e9),
                fmt(map.values[j][k])
            ));
        }
    }

    // resonance spacing: detunings where the time-minimum of the qubit
    // population dips are one free spectral range apart in the weak-coupling
    // regime
    let pmin: Vec<f64> = map
        .values
        .iter()
        .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
        .collect();
    let mut dips = Vec::new();
    for j in 1..pmin.len().saturating_sub(1) {
        if pmin[j] <= pmin[j - 1] && pmin[j] <= pmin[j + 1] && pmin[j] < 0.8 {
            dips.push(map.axis2[j]);
        }
    }
    let spacing = if dips.len() >= 2 {
        (dips.last().unwrap() - dips.first().unwrap()) / (dips.len() - 1) as f64
    } else {
        f64::NAN
    };

    // first population revival at zero detuning (strong-coupling stripe)
    let j0 = map
        .axis2
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(j, _)| j)
        .unwrap_or(0);
    // stripe onset: the first time after 1.5 tau_st at which the population
    // starts rising again, i.e. the returning wavepacket reaches the qubit
    let row = &map.values[j0];
    let mut revival = f64::NAN;
    for k in 0..row.len().saturating_sub(1) {
        if map.axis1[k] > 1.5 * derived.tau_st && row[k + 1] > row[k] + 1e-4 {
            revival = map.axis1[k] * 1e9;
            break;
        }
    }

    let mut out = RunOutput::default();
    out.file("chevron.csv", csv);
    out.metric("omega_fsr_mhz", derived.omega_fsr / TAU / 1e6);
    out.metric("mode_spacing_mhz", spacing / TAU / 1e6);
    out.metric("n_resonances", dips.len() as f64);
    out.metric(
        "min_population",
        pmin.iter().cloned().fold(f64::INFINITY, f64::min),
    );
    out.metric("revival_time_ns", revival);
    Ok(out)
}

// ---------------------------------------------------------------------------
// transfer (shaped or constant coupling, optional multimode cross-check)
// ---------------------------------------------------------------------------

fn transfer(device: &DeviceParams, p: &Params) -> CliResult<RunOutput> {
    let dt = p.f64_or("dt_ns", 0.1)? * 1e-9;
    if dt <= 0.0 {
        return Err(CliError::validation("dt_ns must be positive"));
    }
    let derived = device.derived_cable();
    let tau_st = snap(derived.tau_st, dt);
    let kappa_c = p.f64_or("kappa_c_per_us", device.coupler_a.kappa_max / 1e6)? * 1e6;
    let eta = p.f64_or("eta", derived.transit_transmission(&device.cable))?;
    let include_decay = p.bool_or("include_decay", false)?;
    let constant_kappa = p.bool_or("constant_kappa", false)?;
    let compare = p.bool_or("compare_multimode", false)?;

    let channel = ChannelParams {
        tau_st,
        eta,
        thermal_population: device.cable.thermal_population,
    };
    let (ka, kb) = if constant_kappa {
        let duration = p.f64_or("duration_transits", 3.0)?;
        let n = (duration * tau_st / dt).round() as usize;
        (vec![kappa_c; n + 1], vec![0.0; n + 1])
    } else {
        let window = grid_window(kappa_c, tau_st, dt);
        let (sa, sb) = shaped_schedules(
            kappa_c,
            tau_st,
            window,
            dt,
            device.coupler_a.kappa_max.max(kappa_c),
        )?;
        (sa.kappa, sb.kappa)
    };
    let mut spec = PitchCatchSpec::new(channel, dt, ka, kb);
    if include_decay {
        spec.t1_a = Some(device.q2.t1);
        spec.t1_b = Some(device.q3.t1);
    }
    let traj = simulate_pitch_catch(&spec)?;
    let eff = transfer_efficiency(&traj)?;

    let mut csv = String::from("t_ns,kappa_a_per_us,kappa_b_per_us,p_sender,p_receiver\n");
    for i in 0..traj.t.len() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt(traj.t[i] * 1e9),
            fmt(traj.kappa_a[i] / 1e6),
            fmt(traj.kappa_b[i] / 1e6),
            fmt(traj.sigma2[i].norm_sqr()),
            fmt(traj.sigma3[i].norm_sqr())
        ));
    }

    let mut out = RunOutput::default();
    out.file("transfer.csv", csv);
    out.metric("efficiency", eff);
    out.metric("inefficiency", 1.0 - eff);
    out.metric("final_sender_population", traj.final_sender_population());
    out.metric("tau_st_ns", tau_st * 1e9);

    if compare {
        let half_window = p.usize_or("mode_half_window", 100)?;
        let n_cmp = p.usize_or("n_compare_times", 300)?;
        // golden-rule equivalent coupling for the retained mode comb
        let g = (kappa_c * derived.omega_fsr / TAU).sqrt();
        let mspec = MultimodeSpec::single_qubit_window(
            g,
            0.0,
            derived.omega_fsr,
            device.q2.omega_idle,
            half_window,
            ParitySide::Near,
        );
        let h = multimode::build_hamiltonian(&mspec)?;
        let mut psi0 = vec![Complex64::ZERO; mspec.dim()];
        psi0[0] = Complex64::new(1.0, 0.0);
        let t_max = *traj.t.last().unwrap_or(&0.0);
        let times = linspace(0.0, t_max, n_cmp);
        let res = multimode::evolve(&h, &psi0, &times)?;
        let mut csv = String::from("t_ns,p_io,p_multimode\n");
        let mut sq_sum = 0.0;
        for (k, t) in times.iter().enumerate() {
            let idx = ((t / dt).round() as usize).min(traj.t.len() - 1);
            let p_io = traj.sigma2[idx].norm_sqr();
            let p_mm = res.populations[k][0];
            sq_sum += (p_io - p_mm).powi(2);
            csv.push_str(&format!("{},{},{}\n", fmt(t * 1e9), fmt(p_io), fmt(p_mm)));
        }
        out.file("crosscheck.csv", csv);
        out.metric("rms_difference", (sq_sum / times.len() as f64).sqrt());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// mismatch-scan
// ---------------------------------------------------------------------------

fn mismatch(device: &DeviceParams, p: &Params) -> CliResult<RunOutput> {
    let dt = p.f64_or("dt_ns", 0.1)? * 1e-9;
    let derived = device.derived_cable();
    let tau_st = snap(derived.tau_st, dt);
    let kappa_c = p.f64_or("kappa_c_per_us", device.coupler_a.kappa_max / 1e6)? * 1e6;
    let eta = p.f64_or("eta", 1.0)?;
    let span = p.f64_or("span_mhz", 3.0)? * 1e6;
    let n = p.usize_or("n_points", 25)?;
    if n < 2 {
        return Err(CliError::validation("n_points must be at least 2"));
    }

    let channel = ChannelParams {
        tau_st,
        eta,
        thermal_population: 0.0,
    };
    let window = grid_window(kappa_c, tau_st, dt);
    let (sa, sb) = shaped_schedules(
        kappa_c,
        tau_st,
        window,
        dt,
        device.coupler_a.kappa_max.max(kappa_c),
    )?;
    let spec = PitchCatchSpec::new(channel, dt, sa.kappa, sb.kappa);
    let grid = linspace(-span, span, n);
    let points = mismatch_scan(&spec, &grid)?;

    let mut csv = String::from("mismatch_mhz,inefficiency\n");
    for pt in &points {
        csv.push_str(&format!(
            "{},{}\n",
            fmt(pt.mismatch_hz / 1e6),
            fmt(pt.inefficiency)
        ));
    }
    let xs: Vec<f64> = points.iter().map(|pt| pt.mismatch_hz).collect();
    let ys: Vec<f64> = points.iter().map(|pt| pt.inefficiency).collect();

    let mut out = RunOutput::default();
    out.file("mismatch.csv", csv);
    out.metric("inefficiency_at_2mhz", interp(&xs, &ys, 2e6));
    out.metric(
        "min_inefficiency",
        ys.iter().cloned().fold(f64::INFINITY, f64::min),
    );
    Ok(out)
}

// ---------------------------------------------------------------------------
// emission-scan
// ---------------------------------------------------------------------------

fn emission(device: &DeviceParams, p: &Params) -> CliResult<RunOutput> {
    let dt = p.f64_or("dt_ns", 0.1)? * 1e-9;
    let (coupler, qubit) = match p.str_or("coupler", "a")?.as_str() {
        "a" => (&device.coupler_a, &device.q2),
        "b" => (&device.coupler_b, &device.q3),
        other => {
            return Err(CliError::Validation(format!(
                "coupler must be 'a' or 'b', got '{other}'"
            )))
        }
    };
    let n = p.usize_or("n_points", 21)?;
    if n < 2 {
        return Err(CliError::validation("n_points must be at least 2"));
    }
    let derived = device.derived_cable();
    // default scan: from the full-coupling bias (junction phase pi) toward
    // the off bias, staying clear of the divergence at pi/2
    let flux_lo = p.f64_or("flux_min", device::phase_to_flux(coupler, PI))?;
    let flux_hi = p.f64_or("flux_max", device::phase_to_flux(coupler, 0.55 * PI))?;
    let grid = linspace(flux_lo, flux_hi, n);
    let channel = ChannelParams {
        tau_st: snap(derived.tau_st, dt),
        eta: 1.0,
        thermal_population: 0.0,
    };
    let points = static_emission_scan(coupler, qubit, &channel, derived.z0, &grid, dt)?;

    let mut csv = String::from("flux,kappa_model_per_us,kappa_fit_per_us\n");
    let mut worst_rel = 0.0f64;
    let mut kappa_max = 0.0f64;
    for pt in &points {
        kappa_max = kappa_max.max(pt.kappa_model);
        let fit = pt.kappa_fit.unwrap_or(f64::NAN);
        if let Some(f) = pt.kappa_fit {
            if pt.kappa_model > 0.0 {
                worst_rel = worst_rel.max((f - pt.kappa_model).abs() / pt.kappa_model);
            }
        }
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt(pt.flux),
            fmt(pt.kappa_model / 1e6),
            fmt(fit / 1e6)
        ));
    }

    let mut out = RunOutput::default();
    out.file("emission.csv", csv);
    out.metric("kappa_max_per_us", kappa_max / 1e6);
    out.metric("fit_rel_error_max", worst_rel);
    Ok(out)
}

// ---------------------------------------------------------------------------
// calibrate (fractional emission law + distortion classifier)
// ---------------------------------------------------------------------------

fn calibrate(device: &DeviceParams, p: &Params) -> CliResult<RunOutput> {
    let dt = p.f64_or("dt_ns", 0.1)? * 1e-9;
    let derived = device.derived_cable();
    let tau_st = snap(derived.tau_st, dt);
    let kappa_c = p.f64_or("kappa_c_per_us", device.coupler_a.kappa_max / 1e6)? * 1e6;
    let eta = p.f64_or("eta", 1.0)?;
    let alphas = p
        .f64_list_opt("alphas")?
        .unwrap_or_else(|| (1..=9).map(|i| i as f64 / 10.0).collect());
    let scales = p
        .f64_list_opt("kappa_scales")?
        .unwrap_or_else(|| vec![1.0, 0.8, 1.2]);
    let channel = ChannelParams {
        tau_st,
        eta,
        thermal_population: 0.0,
    };
    let window = grid_window(kappa_c, tau_st, dt);

    let mut csv = String::from("kappa_scale,alpha,residual_population,deviation\n");
    let mut entries = Vec::new();
    let mut out = RunOutput::default();
    for (i, &scale) in scales.iter().enumerate() {
        let res = calibration_scan(&alphas, kappa_c, &channel, window, dt, scale)?;
        for k in 0..res.alpha.len() {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                fmt(scale),
                fmt(res.alpha[k]),
                fmt(res.residual_population[k]),
                fmt(res.deviation[k])
            ));
        }
        let max_dev = res.deviation.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let verdict = match res.verdict {
            CalibrationVerdict::UnderCoupling => -1.0,
            CalibrationVerdict::Calibrated => 0.0,
            CalibrationVerdict::OverCoupling => 1.0,
        };
        out.metric(format!("max_abs_deviation_{i}"), max_dev);
        out.metric(format!("curvature_{i}"), res.curvature);
        out.metric(format!("verdict_{i}"), verdict);
        entries.push(json!({ "kappa_scale": scale, "result": res }));
    }
    out.file("calibration.csv", csv);
    out.file(
        "calibration.json",
        serde_json::to_string_pretty(&entries).map_err(CliError::from)?,
    );
    Ok(out)
}

// ---------------------------------------------------------------------------
// entangle
// ---------------------------------------------------------------------------

fn entangle(p: &Params) -> CliResult<RunOutput> {
    let alpha = p.f64_or("alpha", 0.5)?;
    let noise = noise_config(p)?;
    let rho = entangle_remote(&noise, alpha)?;
    let target = entangle_remote(&NoiseConfig::noiseless(), alpha)?;
    let f = state_fidelity(&rho, &target)?;
    let purity = (&rho.m * &rho.m).trace().re;

    let mut out = RunOutput::default();
    out.file("bell_state.csv", matrix_csv(&rho.m, 2));
    out.file(
        "bell_state.json",
        serde_json::to_string_pretty(&json!({
            "basis": basis_labels(2),
            "layout": "row-major interleaved [re, im]",
            "matrix": matrix_interleaved(&rho.m),
            "fidelity": f,
        }))
        .map_err(CliError::from)?,
    );
    out.metric("bell_fidelity", f);
    out.metric("purity", purity);
    Ok(out)
}

// ---------------------------------------------------------------------------
// teleport
// ---------------------------------------------------------------------------

fn teleport(p: &Params, seed: u64) -> CliResult<RunOutput> {
    let noise = noise_config(p)?;
    let modes: Vec<(TeleportMode, &str)> = match p.str_or("mode", "both")?.as_str() {
        "feedforward" => vec![(TeleportMode::Feedforward, "ff")],
        "postselect" => vec![(TeleportMode::Postselect, "ps")],
        "both" => vec![
            (TeleportMode::Feedforward, "ff"),
            (TeleportMode::Postselect, "ps"),
        ],
        other => {
            return Err(CliError::Validation(format!(
                "mode must be 'feedforward', 'postselect' or 'both', got '{other}'"
            )))
        }
    };
    let sampled = p.bool_or("sampled", false)?;
    let shots = p.u64_or("shots", 4096)?;
    let repeats = p.usize_or("repeats", 40)?;

    let inputs_dm = qpt_input_set(1)?;
    let ident = chi_ideal(&DMatrix::identity(2, 2), 1);
    let mut out = RunOutput::default();
    let mut state_csv = String::from("mode,input,branch,probability,state_fidelity\n");
    let mut summary = serde_json::Map::new();

    for (mode, tag) in &modes {
        let mut branch_outputs: Vec<Vec<DensityMatrix>> = vec![Vec::new(); 4];
        let mut avg_state_sum = 0.0;
        for idx in 0..4 {
            let input = tomography_input_state(idx);
            let res = teleport_state(&input, *mode, &noise)?;
            let avg = res.average_state();
            let avg_f = avg.fidelity_pure(&input)?;
            avg_state_sum += avg_f;
            for b in &res.branches {
                let f = b.rho_out.fidelity_pure(&input)?;
                state_csv.push_str(&format!(
                    "{},{},{:02b},{},{}\n",
                    tag,
                    idx,
                    b.outcome,
                    fmt(b.probability),
                    fmt(f)
                ));
                branch_outputs[b.outcome].push(b.rho_out.clone());
            }
            state_csv.push_str(&format!("{tag},{idx},avg,{},{}\n", fmt(1.0), fmt(avg_f)));
        }
        let mut branch_fs = Vec::new();
        for outcome in 0..4 {
            if branch_outputs[outcome].len() != 4 {
                return Err(CliError::runtime(format!(
                    "branch {outcome:02b} missing for some inputs"
                )));
            }
            let chi = qpt(&inputs_dm, &branch_outputs[outcome])?;
            let f = process_fidelity(&chi, &ident)?;
            out.metric(format!("process_fidelity_{tag}_{outcome:02b}"), f);
            out.file(format!("chi_{tag}_{outcome:02b}.csv"), chi.to_csv());
            branch_fs.push(f);
        }
        let avg_proc = branch_fs.iter().sum::<f64>() / 4.0;
        out.metric(format!("avg_process_fidelity_{tag}"), avg_proc);
        out.metric(format!("avg_state_fidelity_{tag}"), avg_state_sum / 4.0);
        summary.insert(
            tag.to_string(),
            json!({
                "branch_process_fidelities": branch_fs,
                "avg_process_fidelity": avg_proc,
                "avg_state_fidelity": avg_state_sum / 4.0,
            }),
        );
    }

    if sampled {
        // sampled tomography statistics of the averaged output for the
        // superposition input, under the first selected mode
        let input = tomography_input_state(2);
        let res = teleport_state(&input, modes[0].0, &noise)?;
        let avg = res.average_state();
        let target = DensityMatrix::pure(&input)?;
        let stats = repeat_statistics(
            |shots, s| {
                let rec = qst_sampled(&avg, shots, s)?;
                state_fidelity(&rec, &target)
            },
            shots,
            repeats,
            seed,
        )?;
        out.metric("sampled_mean_state_fidelity", stats.mean);
        out.metric("sampled_std_state_fidelity", stats.std);
        summary.insert("sampled".to_string(), json!(stats));
    }

    out.file("state_fidelities.csv", state_csv);
    out.file(
        "teleport.json",
        serde_json::to_string_pretty(&serde_json::Value::Object(summary))
            .map_err(CliError::from)?,
    );
    Ok(out)
}

// ---------------------------------------------------------------------------
// teleport-cnot
// ---------------------------------------------------------------------------

fn teleport_cnot_exp(p: &Params) -> CliResult<RunOutput> {
    let noise = noise_config(p)?;
    let with_reference = p.bool_or("noiseless_reference", true)?;

    let inputs = qpt_input_set(2)?;
    let ideal = chi_ideal(&Gate::Cnot.matrix(), 2);
    let chi_of = |noise: &NoiseConfig| -> CliResult<_> {
        let points = teleport_cnot(noise)?;
        let outputs: Vec<DensityMatrix> = points.into_iter().map(|pt| pt.rho_out).collect();
        Ok(qpt(&inputs, &outputs)?)
    };
    let max_imag =
        |chi: &qlink_core::tomography::ProcessMatrix| chi.chi.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));

    let chi = chi_of(&noise)?;
    let f = process_fidelity(&chi, &ideal)?;

    let mut out = RunOutput::default();
    out.file("chi_cnot.csv", chi.to_csv());
    out.file("chi_cnot_ideal.csv", ideal.to_csv());
    out.metric("process_fidelity", f);
    out.metric("max_imag", max_imag(&chi));

    if with_reference {
        let chi0 = chi_of(&NoiseConfig::noiseless())?;
        out.metric("process_fidelity_noiseless", process_fidelity(&chi0, &ideal)?);
        out.metric("max_imag_noiseless", max_imag(&chi0));
        out.file("chi_cnot_noiseless.csv", chi0.to_csv());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// cooling
// ---------------------------------------------------------------------------

fn cooling(p: &Params) -> CliResult<RunOutput> {
    let mut cp = CoolingParams::measured_default();
    cp.n_cycles = p.usize_or("n_cycles", cp.n_cycles)?;
    cp.qubit_thermal = p.f64_or("qubit_thermal", cp.qubit_thermal)?;
    cp.cable_thermal = p.f64_or("cable_thermal", cp.cable_thermal)?;
    cp.swap_fraction = p.f64_or("swap_fraction", cp.swap_fraction)?;
    cp.reset_residual = p.f64_or("reset_residual", cp.reset_residual)?;
    cp.retherm_per_cycle = p.f64_or("retherm_per_cycle", cp.retherm_per_cycle)?;
    let trace = active_cooling_sim(&cp)?;

    let mut csv = String::from("cycle,cable_population,qubit_population\n");
    for i in 0..trace.cycle.len() {
        csv.push_str(&format!(
            "{},{},{}\n",
            trace.cycle[i],
            fmt(trace.cable_population[i]),
            fmt(trace.qubit_population[i])
        ));
    }
    let first = trace.cable_population[0];
    let last = *trace.cable_population.last().unwrap();
    let settle = trace
        .cable_population
        .iter()
        .position(|&v| (v - last).abs() <= 0.05 * (first - last).abs())
        .unwrap_or(0);

    let mut out = RunOutput::default();
    out.file("cooling.csv", csv);
    out.metric("initial_cable_population", first);
    out.metric("final_cable_population", last);
    out.metric("settle_cycle", settle as f64);
    Ok(out)
}

// ---------------------------------------------------------------------------
// budget
// ---------------------------------------------------------------------------

fn budget(device: &DeviceParams, p: &Params) -> CliResult<RunOutput> {
    let mut opts = BudgetOptions::measured_default();
    opts.measured_efficiency = p.f64_or("measured_efficiency", opts.measured_efficiency)?;
    opts.thermal_inefficiency = p.f64_or("thermal_inefficiency", opts.thermal_inefficiency)?;
    opts.kappa_c = p.f64_or("kappa_c_per_us", opts.kappa_c / 1e6)? * 1e6;
    opts.dt = p.f64_or("dt_ns", opts.dt * 1e9)? * 1e-9;
    let table = inefficiency_budget(device, &opts)?;

    let mut csv = String::from("item,inefficiency\n");
    let mut out = RunOutput::default();
    for item in &table.items {
        csv.push_str(&format!("{},{}\n", item.label, fmt(item.inefficiency)));
        out.metric(item.label.replace(' ', "_"), item.inefficiency);
    }
    csv.push_str(&format!("residual,{}\n", fmt(table.residual)));
    csv.push_str(&format!("total,{}\n", fmt(table.total)));
    out.metric("residual", table.residual);
    out.metric("total", table.total);
    out.file("budget.csv", csv);
    out.file(
        "budget.json",
        serde_json::to_string_pretty(&table).map_err(CliError::from)?,
    );
    Ok(out)
}

// ---------------------------------------------------------------------------
// tomography
// ---------------------------------------------------------------------------

fn tomography_exp(p: &Params, seed: u64) -> CliResult<RunOutput> {
    match p.str_or("target", "bell")?.as_str() {
        "bell" => {
            let alpha = p.f64_or("alpha", 0.5)?;
            let shots = p.u64_or("shots", 4096)?;
            let repeats = p.usize_or("repeats", 40)?;
            let noise = noise_config(p)?;
            let rho = entangle_remote(&noise, alpha)?;
            let target = entangle_remote(&NoiseConfig::noiseless(), alpha)?;
            let exact_f = state_fidelity(&rho, &target)?;
            let recon = qst_exact(&rho)?;
            let roundtrip = (&recon.m - &rho.m)
                .iter()
                .fold(0.0f64, |m, c| m.max(c.norm()));
            let stats = repeat_statistics(
                |shots, s| {
                    let rec = qst_sampled(&rho, shots, s)?;
                    state_fidelity(&rec, &target)
                },
                shots,
                repeats,
                seed,
            )?;
            let mut out = RunOutput::default();
            out.file("rho_reconstructed.csv", matrix_csv(&recon.m, 2));
            out.file(
                "tomography.json",
                serde_json::to_string_pretty(&json!({
                    "target": "bell",
                    "exact_fidelity": exact_f,
                    "stats": stats,
                }))
                .map_err(CliError::from)?,
            );
            out.metric("exact_fidelity", exact_f);
            out.metric("mean_fidelity", stats.mean);
            out.metric("std_fidelity", stats.std);
            out.metric("qst_roundtrip_error", roundtrip);
            Ok(out)
        }
        "transfer" => {
            // effective single-qubit channel of the photon transfer:
            // amplitude damping at the measured efficiency plus dephasing of
            // both qubits over their halves of the window
            let noise = NoiseConfig::measured_default();
            let ad = QuantumChannel::amplitude_damping(1.0 - noise.transfer_efficiency)?;
            let gamma_phi = noise.transfer_duration
                * (1.0 / noise.qubits[1].t_phi + 1.0 / noise.qubits[2].t_phi);
            let pd = QuantumChannel::phase_damping(1.0 - (-gamma_phi).exp())?;
            let ch = pd.compose(&ad);
            let chi = qpt_of_map(1, |rho| ch.apply(rho))?;
            let ident = chi_ideal(&DMatrix::identity(2, 2), 1);
            let f = process_fidelity(&chi, &ident)?;
            let max_imag = chi.chi.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
            let mut out = RunOutput::default();
            out.file("chi_transfer.csv", chi.to_csv());
            out.metric("process_fidelity", f);
            out.metric("max_imag", max_imag);
            Ok(out)
        }
        other => Err(CliError::Validation(format!(
            "tomography target must be 'bell' or 'transfer', got '{other}'"
        ))),
    }
}
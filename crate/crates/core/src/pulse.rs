//! Emission-rate schedule generation, flux/compensation waveform conversion,
//! and the fractional-emission calibration diagnostic.
//!
//! The sender rate follows the logistic profile
//!   kappa_A(t) = kappa_c e^{kappa_c t} / (1 + e^{kappa_c t}),
//! which emits a photon with a symmetric sech envelope; the receiver rate is
//! its exact time mirror, delayed by one transit. Fractional emission scales
//! the released energy to a fraction alpha while the receiver keeps the
//! mirrored full-emission profile.
//!
//! Schedules are sampled on the shared io-sim grid. The logistic is placed
//! so that kappa_A equals 1e-3 kappa_c at the window start; the truncated
//! tail carries < 0.1% of the envelope energy.

use serde::Serialize;

use crate::device::{
    coupler_off_bias, mutual_for_kappa, phase_to_flux, qubit_freq_shift, CouplerParams,
    QubitParams,
};
use crate::error::{Error, Result};
use crate::iosim::{simulate_pitch_catch, ChannelParams, PitchCatchSpec};
use crate::parallel;

/// Fraction of kappa_c at which the logistic tail is truncated.
pub const TAIL_TRUNCATION: f64 = 1e-3;

/// Time from the window start to the logistic midpoint.
pub fn rise_offset(kappa_c: f64) -> f64 {
    ((1.0 - TAIL_TRUNCATION) / TAIL_TRUNCATION).ln() / kappa_c
}

/// A sampled emission-rate schedule with its companion waveforms.
#[derive(Debug, Clone, Serialize)]
pub struct PulseSchedule {
    pub dt: f64,
    pub t: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Frequency-compensation waveform (rad/s), empty until computed.
    pub delta_omega_comp: Vec<f64>,
    /// Flux waveform (Phi/Phi_0), empty until computed.
    pub flux: Vec<f64>,
    pub kappa_c: f64,
    pub alpha: f64,
}

impl PulseSchedule {
    fn from_samples(dt: f64, kappa: Vec<f64>, kappa_c: f64, alpha: f64) -> Self {
        let t = (0..kappa.len()).map(|i| i as f64 * dt).collect();
        PulseSchedule {
            dt,
            t,
            kappa,
            delta_omega_comp: Vec::new(),
            flux: Vec::new(),
            kappa_c,
            alpha,
        }
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// kappa_A(t) in the shifted frame where the logistic midpoint sits at
/// `rise_offset(kappa_c)` after the window start.
pub fn shaped_kappa(kappa_c: f64, t: f64) -> f64 {
    kappa_c * logistic(kappa_c * (t - rise_offset(kappa_c)))
}

/// Fractional-emission rate profile; reduces to [`shaped_kappa`] at alpha = 1.
pub fn fractional_kappa(kappa_c: f64, alpha: f64, t: f64) -> f64 {
    let x = kappa_c * (t - rise_offset(kappa_c));
    // alpha / (1 + (1-alpha) e^x), written to avoid overflow at large x
    let frac = if x >= 0.0 {
        let em = (-x).exp();
        alpha * em / (em + (1.0 - alpha))
    } else {
        alpha / (1.0 + (1.0 - alpha) * x.exp())
    };
    kappa_c * logistic(x) * frac
}

/// Generate the matched sender/receiver schedule pair on a shared grid of
/// length `window` (which must cover the mirrored receiver pulse,
/// 2 * rise_offset + tau_st at minimum).
pub fn shaped_schedules(
    kappa_c: f64,
    tau_st: f64,
    window: f64,
    dt: f64,
    kappa_max: f64,
) -> Result<(PulseSchedule, PulseSchedule)> {
    if kappa_c > kappa_max {
        return Err(Error::Config(format!(
            "kappa_c = {kappa_c} exceeds the coupler maximum {kappa_max}; refusing to clamp"
        )));
    }
    if kappa_c <= 0.0 || dt <= 0.0 {
        return Err(Error::InvalidParameter("kappa_c and dt must be positive".into()));
    }
    // snap the mirror point to the grid so sender and receiver samples are
    // exact mirrors of each other
    let mirror = dt * ((2.0 * rise_offset(kappa_c) + tau_st) / dt).ceil();
    if window < mirror {
        return Err(Error::Config(format!(
            "window {window} too short for the mirrored receiver pulse ({mirror})"
        )));
    }
    let n = (window / dt).round() as usize;
    let kappa_a: Vec<f64> = (0..=n).map(|i| shaped_kappa(kappa_c, i as f64 * dt)).collect();
    // receiver: time mirror of the sender about the photon-arrival center
    let kappa_b: Vec<f64> = (0..=n)
        .map(|i| shaped_kappa(kappa_c, mirror - i as f64 * dt))
        .collect();
    Ok((
        PulseSchedule::from_samples(dt, kappa_a, kappa_c, 1.0),
        PulseSchedule::from_samples(dt, kappa_b, kappa_c, 1.0),
    ))
}

/// Generate the sender schedule that emits a fraction `alpha` of a photon.
/// The receiver schedule stays the mirror of the full-emission profile.
pub fn fractional_schedule(
    kappa_c: f64,
    alpha: f64,
    window: f64,
    dt: f64,
) -> Result<PulseSchedule> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} outside (0, 1]"
        )));
    }
    if kappa_c <= 0.0 || dt <= 0.0 || window <= 0.0 {
        return Err(Error::InvalidParameter(
            "kappa_c, window and dt must be positive".into(),
        ));
    }
    let n = (window / dt).round() as usize;
    let kappa = (0..=n)
        .map(|i| fractional_kappa(kappa_c, alpha, i as f64 * dt))
        .collect();
    Ok(PulseSchedule::from_samples(dt, kappa, kappa_c, alpha))
}

/// Convert an emission-rate schedule to the flux waveform through the
/// inverted circuit chain kappa -> M -> delta -> Phi on the operating branch
/// delta in [pi/2, pi].
pub fn kappa_to_flux(
    sched: &mut PulseSchedule,
    coupler: &CouplerParams,
    qubit: &QubitParams,
    z0: f64,
) -> Result<()> {
    coupler.validate()?;
    let off = coupler_off_bias(coupler);
    let mut flux = Vec::with_capacity(sched.kappa.len());
    for (i, &kappa) in sched.kappa.iter().enumerate() {
        if kappa > coupler.kappa_max * (1.0 + 1e-9) {
            return Err(Error::Config(format!(
                "kappa[{i}] = {kappa} exceeds kappa_max = {}",
                coupler.kappa_max
            )));
        }
        if kappa <= 0.0 {
            flux.push(off);
            continue;
        }
        let m_mag = mutual_for_kappa(kappa, qubit.omega_idle, qubit.l_j, coupler.l_g, z0);
        // on [pi/2, pi] the mutual inductance is negative
        let cos_delta =
            (-coupler.l_t / (coupler.l_g * coupler.l_g / m_mag + 2.0 * coupler.l_g + coupler.l_w))
                .clamp(-1.0, 1.0);
        let delta = cos_delta.acos();
        flux.push(phase_to_flux(coupler, delta));
    }
    sched.flux = flux;
    Ok(())
}

/// Fill in the detuning waveform that cancels the coupler-induced qubit
/// frequency shift (equal and opposite, so the net detuning is zero).
pub fn compensation_schedule(
    sched: &mut PulseSchedule,
    qubit: &QubitParams,
    coupler: &CouplerParams,
    z0: f64,
) {
    sched.delta_omega_comp = sched
        .kappa
        .iter()
        .map(|&k| -qubit_freq_shift(k, z0, qubit.l_j, coupler.l_g))
        .collect();
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CalibrationVerdict {
    Calibrated,
    /// Residual populations bulge above the 1 - alpha line: the actual
    /// coupling is smaller than the target.
    UnderCoupling,
    /// Residual populations dip below the 1 - alpha line.
    OverCoupling,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    pub alpha: Vec<f64>,
    pub residual_population: Vec<f64>,
    /// residual - (1 - alpha) per point.
    pub deviation: Vec<f64>,
    /// Quadratic coefficient of a least-squares parabola through the
    /// deviations; describes the bow of the curve.
    pub curvature: f64,
    pub verdict: CalibrationVerdict,
}

/// Deviation threshold below which the calibration is declared flat.
pub const CALIBRATION_FLAT_THRESHOLD: f64 = 0.01;

/// Sweep alpha, emit with the (possibly distorted) fractional schedule, and
/// classify the deviation of the sender residual from the 1 - alpha law.
pub fn calibration_scan(
    alpha_grid: &[f64],
    kappa_c: f64,
    channel: &ChannelParams,
    window: f64,
    dt: f64,
    kappa_scale_error: f64,
) -> Result<CalibrationResult> {
    if alpha_grid.is_empty() {
        return Err(Error::InvalidParameter("empty alpha grid".into()));
    }
    let residuals = parallel::map_collect(alpha_grid, |&alpha| {
        let mut sched = fractional_schedule(kappa_c, alpha, window, dt)?;
        for k in &mut sched.kappa {
            *k *= kappa_scale_error;
        }
        let n = sched.kappa.len();
        let spec = PitchCatchSpec::new(*channel, dt, sched.kappa, vec![0.0; n]);
        let traj = simulate_pitch_catch(&spec)?;
        Ok(traj.final_sender_population())
    });
    let residual_population = residuals.into_iter().collect::<Result<Vec<f64>>>()?;
    let deviation: Vec<f64> = alpha_grid
        .iter()
        .zip(&residual_population)
        .map(|(a, p)| p - (1.0 - a))
        .collect();
    let curvature = quadratic_coefficient(alpha_grid, &deviation);
    let max_dev = deviation.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mean_dev = deviation.iter().sum::<f64>() / deviation.len() as f64;
    let verdict = if max_dev < CALIBRATION_FLAT_THRESHOLD {
        CalibrationVerdict::Calibrated
    } else if mean_dev > 0.0 {
        CalibrationVerdict::UnderCoupling
    } else {
        CalibrationVerdict::OverCoupling
    };
    Ok(CalibrationResult {
        alpha: alpha_grid.to_vec(),
        residual_population,
        deviation,
        curvature,
        verdict,
    })
}

/// Least-squares quadratic coefficient of y(x).
fn quadratic_coefficient(x: &[f64], y: &[f64]) -> f64 {
    // normal equations for y = c0 + c1 x + c2 x^2
    let n = x.len() as f64;
    let s: Vec<f64> = (1..=4)
        .map(|p| x.iter().map(|v| v.powi(p)).sum::<f64>())
        .collect();
    let b0: f64 = y.iter().sum();
    let b1: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let b2: f64 = x.iter().zip(y).map(|(a, b)| a * a * b).sum();
    let m = [
        [n, s[0], s[1]],
        [s[0], s[1], s[2]],
        [s[1], s[2], s[3]],
    ];
    solve3(m, [b0, b1, b2])[2]
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for i in 0..3 {
        let p = (i..3)
            .max_by(|&r, &s| a[r][i].abs().partial_cmp(&a[s][i].abs()).unwrap())
            .unwrap();
        a.swap(i, p);
        b.swap(i, p);
        for r in i + 1..3 {
            let f = a[r][i] / a[i][i];
            for c in i..3 {
                a[r][c] -= f * a[i][c];
            }
            b[r] -= f * b[i];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let mut v = b[i];
        for c in i + 1..3 {
            v -= a[i][c] * x[c];
        }
        x[i] = v / a[i][i];
    }
    x
}

//! Physical constants of the two-node network and the closed-form circuit
//! chain: flux bias -> junction phase -> mutual inductance -> Jaynes-Cummings
//! coupling -> emission rate and qubit frequency shift.
//!
//! All frequencies are stored as angular frequencies (rad/s). Configuration
//! files accept Hz and convert at the boundary.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TAU: f64 = 2.0 * PI;

/// One neper expressed in dB; used for the linear-loss conversion.
pub const NEPER_DB: f64 = 8.686;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    /// Minimum sweet-spot frequency (rad/s).
    pub omega_min: f64,
    /// Maximum sweet-spot frequency (rad/s).
    pub omega_max: f64,
    /// Idling / operating frequency (rad/s).
    pub omega_idle: f64,
    /// Anharmonicity (rad/s, negative). Stored but unused by the
    /// single-excitation dynamics.
    pub anharmonicity: f64,
    /// Energy relaxation time (s).
    pub t1: f64,
    /// Pure dephasing time (s).
    pub tphi: f64,
    /// Junction inductance at the operating point (H).
    pub l_j: f64,
    /// Junction asymmetry ratio E_J1/E_J2.
    pub junction_asymmetry: f64,
}

impl QubitParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_min <= self.omega_idle && self.omega_idle <= self.omega_max) {
            return Err(Error::InvalidParameter(
                "qubit frequencies must satisfy omega_min <= omega_idle <= omega_max".into(),
            ));
        }
        if self.t1 <= 0.0 || self.tphi <= 0.0 || self.l_j <= 0.0 {
            return Err(Error::InvalidParameter(
                "qubit T1, Tphi and L_J must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplerParams {
    /// Linear coupler inductor (H).
    pub l_g: f64,
    /// Stray wiring inductance (H).
    pub l_w: f64,
    /// Coupler junction inductance at delta = 0 (H).
    pub l_t: f64,
    /// Measured maximum emission rate (1/s).
    pub kappa_max: f64,
}

impl CouplerParams {
    pub fn validate(&self) -> Result<()> {
        if self.l_g <= 0.0 || self.l_w < 0.0 || self.l_t <= 0.0 {
            return Err(Error::InvalidParameter(
                "coupler inductances must be positive (L_w may be zero)".into(),
            ));
        }
        Ok(())
    }

    /// Ratio (2L_g + L_w)/L_T appearing in the flux-phase relation.
    pub fn phase_slope(&self) -> f64 {
        (2.0 * self.l_g + self.l_w) / self.l_t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CableParams {
    /// Physical length (m).
    pub length: f64,
    /// Specific capacitance (F/m).
    pub specific_capacitance: f64,
    /// Specific inductance (H/m).
    pub specific_inductance: f64,
    /// Standing-wave mode lifetime (s).
    pub t1_mode: f64,
    /// Standing-wave mode dephasing time (s).
    pub t2_mode: f64,
    /// Residual thermal photon population.
    pub thermal_population: f64,
    /// Transmission per cable joint (dB, negative).
    pub joint_transmission_db: f64,
    /// Number of cable joints.
    pub n_joints: u32,
}

impl CableParams {
    pub fn validate(&self) -> Result<()> {
        if self.length <= 0.0 || self.specific_capacitance <= 0.0 || self.specific_inductance <= 0.0
        {
            return Err(Error::InvalidParameter(
                "cable length and line constants must be positive".into(),
            ));
        }
        if self.t1_mode <= 0.0 || self.t2_mode <= 0.0 {
            return Err(Error::InvalidParameter(
                "cable mode T1 and T2 must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.thermal_population) || self.thermal_population >= 0.1 {
            return Err(Error::InvalidParameter(
                "cable thermal population must be in [0, 0.1)".into(),
            ));
        }
        Ok(())
    }
}

/// Lumped-element quantities derived from the cable line constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedCable {
    /// Free spectral range (rad/s).
    pub omega_fsr: f64,
    /// Single transit time tau_st = pi/omega_fsr (s).
    pub tau_st: f64,
    /// Characteristic impedance (ohm).
    pub z0: f64,
    /// Series inductance of each standing-wave mode, L_m = (1/2) L' l (H).
    pub l_m: f64,
    /// Speed of light in the cable (m/s).
    pub v_c: f64,
    /// Energy fraction lost per transit, 1 - exp(-tau_st/T1^m).
    pub per_transit_loss: f64,
}

impl DerivedCable {
    /// Angular frequency of the m-th standing-wave mode.
    pub fn omega_mode(&self, m: u32) -> f64 {
        m as f64 * self.omega_fsr
    }

    /// Series capacitance of the m-th standing-wave mode.
    pub fn c_mode(&self, m: u32) -> f64 {
        let w = self.omega_mode(m);
        1.0 / (w * w * self.l_m)
    }

    /// Linear loss in dB/km implied by the mode lifetime.
    pub fn linear_loss_db_per_km(&self, t1_mode: f64) -> f64 {
        NEPER_DB / (2.0 * self.v_c * t1_mode) * 1000.0
    }

    /// Amplitude-squared transmission of one transit, combining the T1 loss
    /// of the line with the joint transmissions.
    pub fn transit_transmission(&self, cable: &CableParams) -> f64 {
        let joints_db = cable.joint_transmission_db * cable.n_joints as f64;
        (1.0 - self.per_transit_loss) * 10f64.powf(joints_db / 10.0)
    }
}

pub fn cable_derived_params(cable: &CableParams) -> Result<DerivedCable> {
    cable.validate()?;
    let v_c = 1.0 / (cable.specific_inductance * cable.specific_capacitance).sqrt();
    let tau_st = cable.length / v_c;
    let omega_fsr = PI / tau_st;
    let z0 = (cable.specific_inductance / cable.specific_capacitance).sqrt();
    let l_m = 0.5 * cable.specific_inductance * cable.length;
    let per_transit_loss = 1.0 - (-tau_st / cable.t1_mode).exp();
    Ok(DerivedCable {
        omega_fsr,
        tau_st,
        z0,
        l_m,
        v_c,
        per_transit_loss,
    })
}

/// Forward flux-phase relation: 2 pi Phi/Phi0 = delta + ((2L_g+L_w)/L_T) sin(delta).
pub fn phase_to_flux(coupler: &CouplerParams, delta: f64) -> f64 {
    (delta + coupler.phase_slope() * delta.sin()) / TAU
}

/// Invert the flux-phase relation on the monotonic branch delta in [-pi, pi].
///
/// Bisection bracketing followed by Newton refinement; tolerance 1e-12 on the
/// flux residual.
pub fn flux_to_phase(coupler: &CouplerParams, flux: f64) -> Result<f64> {
    coupler.validate()?;
    if !(-0.5..=0.5).contains(&flux) {
        return Err(Error::InvalidParameter(format!(
            "flux {flux} outside [-0.5, 0.5]"
        )));
    }
    let slope = coupler.phase_slope();
    let target = TAU * flux;
    let f = |d: f64| d + slope * d.sin() - target;
    let (mut lo, mut hi) = (-PI, PI);
    // monotone on [-pi, pi] for L_T > 0, so the bracket is guaranteed
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut d = 0.5 * (lo + hi);
    for _ in 0..8 {
        let deriv = 1.0 + slope * d.cos();
        if deriv.abs() < 1e-14 {
            break;
        }
        d -= f(d) / deriv;
        d = d.clamp(-PI, PI);
    }
    if f(d).abs() > 1e-12 * TAU.max(1.0) {
        return Err(Error::Numerical(format!(
            "flux inversion did not converge at flux {flux}"
        )));
    }
    Ok(d)
}

/// Flux bias (in units of Phi_0) that turns the coupling off (delta = pi/2).
pub fn coupler_off_bias(coupler: &CouplerParams) -> f64 {
    (PI / 2.0 + coupler.phase_slope()) / TAU
}

/// Tunable mutual inductance at junction phase `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mutual {
    pub henries: f64,
    /// True at the off bias delta = pi/2 where M -> 0 through a divergent
    /// junction inductance.
    pub off_state: bool,
}

pub fn mutual_inductance(coupler: &CouplerParams, delta: f64) -> Mutual {
    let c = delta.cos();
    if c.abs() < 1e-12 {
        return Mutual {
            henries: 0.0,
            off_state: true,
        };
    }
    let denom = 2.0 * coupler.l_g + coupler.l_w + coupler.l_t / c;
    Mutual {
        henries: coupler.l_g * coupler.l_g / denom,
        off_state: false,
    }
}

/// Jaynes-Cummings coupling strength between a qubit and the m-th mode,
/// in the L_g << L_m approximation.
pub fn jc_coupling(m: f64, omega_m: f64, omega_q: f64, l_j: f64, l_g: f64, l_m: f64) -> f64 {
    -0.5 * m * (omega_m * omega_q / ((l_g + l_j) * l_m)).sqrt()
}

/// Emission rate from the golden-rule route: kappa = 2 pi g^2 / omega_FSR.
pub fn emission_rate_from_g(g: f64, omega_fsr: f64) -> f64 {
    TAU * g * g / omega_fsr
}

/// Emission rate from the impedance route: kappa = (M w_q)^2 / ((L_J + L_g) Z_0).
///
/// Agrees exactly with [`emission_rate_from_g`] when g comes from the same
/// mutual inductance on resonance.
pub fn emission_rate_from_m(m: f64, omega_q: f64, l_j: f64, l_g: f64, z0: f64) -> f64 {
    let mw = m * omega_q;
    mw * mw / ((l_j + l_g) * z0)
}

/// Coupler-induced qubit frequency shift; always <= 0.
pub fn qubit_freq_shift(kappa: f64, z0: f64, l_j: f64, l_g: f64) -> f64 {
    -0.5 * (kappa * z0 / (l_g + l_j)).sqrt()
}

/// Mutual inductance magnitude needed for a given emission rate.
pub fn mutual_for_kappa(kappa: f64, omega_q: f64, l_j: f64, l_g: f64, z0: f64) -> f64 {
    (kappa * (l_j + l_g) * z0).sqrt() / omega_q
}

/// Anchor the coupler junction inductance so that the circuit chain
/// reproduces the measured maximum emission rate at delta = pi.
///
/// No measured value of L_T is quoted; at delta = pi the mutual
/// inductance is |M| = L_g^2 / (L_T - 2L_g - L_w), which inverts in closed
/// form once |M| is fixed by kappa_max.
pub fn fit_l_t(kappa_max: f64, qubit: &QubitParams, l_g: f64, l_w: f64, z0: f64) -> Result<f64> {
    if kappa_max <= 0.0 {
        return Err(Error::InvalidParameter("kappa_max must be positive".into()));
    }
    let m_needed = mutual_for_kappa(kappa_max, qubit.omega_idle, qubit.l_j, l_g, z0);
    let l_t = 2.0 * l_g + l_w + l_g * l_g / m_needed;
    if l_t <= 2.0 * l_g + l_w {
        return Err(Error::FitFailure(
            "anchoring produced an unphysical L_T".into(),
        ));
    }
    Ok(l_t)
}

/// Full emission rate at a given flux bias via the circuit chain
/// flux -> delta -> M -> kappa.
pub fn kappa_at_flux(
    coupler: &CouplerParams,
    qubit: &QubitParams,
    z0: f64,
    flux: f64,
) -> Result<f64> {
    let delta = flux_to_phase(coupler, flux)?;
    let m = mutual_inductance(coupler, delta);
    Ok(emission_rate_from_m(
        m.henries,
        qubit.omega_idle,
        qubit.l_j,
        coupler.l_g,
        z0,
    ))
}

/// Device-wide parameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceParams {
    pub q1: QubitParams,
    pub q2: QubitParams,
    pub q3: QubitParams,
    pub q4: QubitParams,
    pub coupler_a: CouplerParams,
    pub coupler_b: CouplerParams,
    pub cable: CableParams,
}

impl DeviceParams {
    /// Default parameter set from the measured device table.
    ///
    /// The qubit junction inductances are representative values (they only
    /// enter through the kappa anchoring chain, which is re-fit against the
    /// measured maximum emission rates). The coupler L_T values are
    /// initialized by [`fit_l_t`] in `measured_default`.
    pub fn measured_default() -> Self {
        let ghz = |f: f64| TAU * f * 1e9;
        let mhz = |f: f64| TAU * f * 1e6;
        let us = 1e-6;
        let q = |min, max, idle, anh, t1, tphi| QubitParams {
            omega_min: ghz(min),
            omega_max: ghz(max),
            omega_idle: ghz(idle),
            anharmonicity: mhz(anh),
            t1: t1 * us,
            tphi: tphi * us,
            l_j: 10.0e-9,
            junction_asymmetry: 4.7,
        };
        let q1 = q(3.778, 4.716, 3.7894, -207.0, 37.1, 22.8);
        let q2 = q(3.926, 4.771, 3.9331, -191.0, 34.7, 26.3);
        let q3 = q(3.935, 4.898, 3.9356, -194.0, 33.6, 62.6);
        let q4 = q(3.643, 4.636, 3.6430, -212.0, 20.1, 33.6);
        let cable = CableParams {
            length: 64.0,
            specific_capacitance: 86.5e-12,
            specific_inductance: 200.0e-9,
            t1_mode: 56.2e-6,
            t2_mode: 106.8e-6,
            thermal_population: 0.015,
            joint_transmission_db: -0.015,
            n_joints: 3,
        };
        let derived = cable_derived_params(&cable).expect("measured cable constants are valid");
        let (l_g, l_w) = (0.2e-9, 0.06e-9);
        let kappa_a_max = 1.0 / 22.0e-9;
        let kappa_b_max = 1.0 / 18.0e-9;
        let coupler_a = CouplerParams {
            l_g,
            l_w,
            l_t: fit_l_t(kappa_a_max, &q2, l_g, l_w, derived.z0).expect("anchoring fit"),
            kappa_max: kappa_a_max,
        };
        let coupler_b = CouplerParams {
            l_g,
            l_w,
            l_t: fit_l_t(kappa_b_max, &q3, l_g, l_w, derived.z0).expect("anchoring fit"),
            kappa_max: kappa_b_max,
        };
        DeviceParams {
            q1,
            q2,
            q3,
            q4,
            coupler_a,
            coupler_b,
            cable,
        }
    }

    pub fn derived_cable(&self) -> DerivedCable {
        cable_derived_params(&self.cable).expect("validated cable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn measured_cable() -> CableParams {
        DeviceParams::measured_default().cable
    }

    #[test]
    fn cable_mode_inductance_matches_lumped_model() {
        let d = cable_derived_params(&measured_cable()).unwrap();
        assert_relative_eq!(d.l_m, 6400.0e-9, max_relative = 1e-12);
    }

    #[test]
    fn cable_fsr_and_transit_time() {
        let d = cable_derived_params(&measured_cable()).unwrap();
        let fsr_mhz = d.omega_fsr / TAU / 1e6;
        assert!(
            (1.86..=1.91).contains(&fsr_mhz),
            "omega_FSR/2pi = {fsr_mhz} MHz"
        );
        assert_abs_diff_eq!(d.tau_st, 265e-9, epsilon = 3e-9);
        assert_relative_eq!(d.tau_st, PI / d.omega_fsr, max_relative = 1e-12);
    }

    #[test]
    fn cable_impedance() {
        let d = cable_derived_params(&measured_cable()).unwrap();
        // direct arithmetic from the two line constants
        assert_relative_eq!(d.z0, (200.0e-9f64 / 86.5e-12).sqrt(), max_relative = 1e-12);
        assert_abs_diff_eq!(d.z0, 48.1, epsilon = 0.1);
    }

    #[test]
    fn per_transit_loss_matches_budget() {
        let d = cable_derived_params(&measured_cable()).unwrap();
        assert_abs_diff_eq!(d.per_transit_loss, 0.0047, epsilon = 0.0003);
    }

    #[test]
    fn linear_loss_in_db_per_km() {
        let cable = measured_cable();
        let d = cable_derived_params(&cable).unwrap();
        assert_abs_diff_eq!(d.linear_loss_db_per_km(cable.t1_mode), 0.32, epsilon = 0.02);
    }

    #[test]
    fn invalid_cable_rejected() {
        let mut cable = measured_cable();
        cable.length = -1.0;
        assert!(cable_derived_params(&cable).is_err());
    }

    fn test_coupler() -> CouplerParams {
        CouplerParams {
            l_g: 0.2e-9,
            l_w: 0.06e-9,
            l_t: 0.5e-9,
            kappa_max: 1.0 / 22.0e-9,
        }
    }

    #[test]
    fn half_flux_quantum_gives_pi_phase() {
        let d = flux_to_phase(&test_coupler(), 0.5).unwrap();
        assert_abs_diff_eq!(d, PI, epsilon = 1e-10);
    }

    #[test]
    fn zero_flux_gives_zero_phase() {
        let d = flux_to_phase(&test_coupler(), 0.0).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn inversion_agrees_with_bisection_oracle() {
        // independent bisection on the forward map
        let c = test_coupler();
        let target = 0.3;
        let (mut lo, mut hi) = (-PI, PI);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phase_to_flux(&c, mid) > target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let d = flux_to_phase(&c, target).unwrap();
        assert_abs_diff_eq!(d, oracle, epsilon = 1e-10);
        assert_abs_diff_eq!(phase_to_flux(&c, d), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn round_trip_identity_over_branch() {
        let c = test_coupler();
        for i in 0..=100 {
            let delta = -PI + TAU * i as f64 / 100.0;
            let flux = phase_to_flux(&c, delta);
            let back = flux_to_phase(&c, flux).unwrap();
            assert_abs_diff_eq!(back, delta, epsilon = 1e-10);
        }
    }

    #[test]
    fn off_bias_formula() {
        let c = test_coupler();
        let expected = (PI / 2.0 + 0.46 / 0.5) / TAU;
        assert_relative_eq!(coupler_off_bias(&c), expected, max_relative = 1e-12);
        // round trip: the off bias maps back to delta = pi/2
        let d = flux_to_phase(&c, coupler_off_bias(&c)).unwrap();
        assert_abs_diff_eq!(d, PI / 2.0, epsilon = 1e-10);
        // L_T -> infinity limit
        let c_inf = CouplerParams {
            l_t: 1.0,
            ..test_coupler()
        };
        assert_abs_diff_eq!(coupler_off_bias(&c_inf), 0.25, epsilon = 1e-8);
    }

    #[test]
    fn mutual_inductance_limits() {
        let c = test_coupler();
        let m0 = mutual_inductance(&c, 0.0);
        assert_relative_eq!(
            m0.henries,
            c.l_g * c.l_g / (2.0 * c.l_g + c.l_w + c.l_t),
            max_relative = 1e-12
        );
        let mpi = mutual_inductance(&c, PI);
        assert_relative_eq!(
            mpi.henries,
            c.l_g * c.l_g / (2.0 * c.l_g + c.l_w - c.l_t),
            max_relative = 1e-12
        );
        // maximum-coupling point: |M| largest at delta = pi
        assert!(mpi.henries.abs() > m0.henries.abs());
        let moff = mutual_inductance(&c, PI / 2.0);
        assert_eq!(moff.henries, 0.0);
        assert!(moff.off_state);
    }

    #[test]
    fn mutual_inductance_monotone_on_upper_branch() {
        // |M| (and hence kappa) grows monotonically on delta in [pi/2, pi]
        // for L_T > 2L_g + L_w; M itself decreases continuously through the
        // off point.
        let c = test_coupler();
        assert!(c.l_t > 2.0 * c.l_g + c.l_w);
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let delta = PI * i as f64 / 1000.0;
            let m = mutual_inductance(&c, delta).henries;
            assert!(m <= prev + 1e-18, "M not decreasing at delta={delta}");
            prev = m;
        }
    }

    #[test]
    fn jc_coupling_scaling() {
        let g = jc_coupling(0.2e-9, 1.0e10, 1.0e10, 10e-9, 0.2e-9, 6400e-9);
        assert!(g < 0.0);
        assert_eq!(jc_coupling(0.0, 1.0e10, 1.0e10, 10e-9, 0.2e-9, 6400e-9), 0.0);
        let g2 = jc_coupling(0.4e-9, 1.0e10, 1.0e10, 10e-9, 0.2e-9, 6400e-9);
        assert_relative_eq!(g2, 2.0 * g, max_relative = 1e-12);
    }

    #[test]
    fn chevron_coupling_sets_rabi_period() {
        // g/2pi = 0.08 MHz gives a vacuum Rabi period of 1/(2 * 0.08 MHz)
        let g = TAU * 0.08e6;
        let period = TAU / (2.0 * g);
        assert_relative_eq!(period, 1.0 / (2.0 * 0.08e6), max_relative = 1e-12);
    }

    #[test]
    fn emission_rate_routes_agree() {
        let device = DeviceParams::measured_default();
        let d = device.derived_cable();
        let q = &device.q2;
        let m = 0.19e-9;
        let g = jc_coupling(m, q.omega_idle, q.omega_idle, q.l_j, 0.2e-9, d.l_m);
        let ka = emission_rate_from_g(g, d.omega_fsr);
        let kb = emission_rate_from_m(m, q.omega_idle, q.l_j, 0.2e-9, d.z0);
        assert_relative_eq!(ka, kb, max_relative = 1e-12);
    }

    #[test]
    fn emission_rate_arithmetic() {
        let g = TAU * 1.63e6;
        let omega_fsr = TAU * 1.89e6;
        let kappa = emission_rate_from_g(g, omega_fsr);
        let expected = TAU * (TAU * 1.63e6) * (TAU * 1.63e6) / (TAU * 1.89e6);
        assert_relative_eq!(kappa, expected, max_relative = 1e-12);
        // same order of magnitude as the measured maximum 1/22 ns^-1
        let kappa_max = 1.0 / 22.0e-9;
        assert!(kappa > 0.1 * kappa_max && kappa < 10.0 * kappa_max);
        assert_eq!(emission_rate_from_g(0.0, omega_fsr), 0.0);
    }

    #[test]
    fn freq_shift_scaling_and_sign() {
        let z0 = 48.1;
        let (l_j, l_g) = (10e-9, 0.2e-9);
        assert_eq!(qubit_freq_shift(0.0, z0, l_j, l_g), 0.0);
        let s1 = qubit_freq_shift(1e7, z0, l_j, l_g);
        let s4 = qubit_freq_shift(4e7, z0, l_j, l_g);
        assert!(s1 < 0.0);
        assert_relative_eq!(s4, 2.0 * s1, max_relative = 1e-12);
    }

    #[test]
    fn freq_shift_routes_agree() {
        // via coupling strength vs via emission rate, on resonance
        let device = DeviceParams::measured_default();
        let d = device.derived_cable();
        let q = &device.q2;
        let l_g = 0.2e-9;
        let m = 0.15e-9;
        let g = jc_coupling(m, q.omega_idle, q.omega_idle, q.l_j, l_g, d.l_m);
        let kappa = emission_rate_from_g(g, d.omega_fsr);
        let via_g = -(g * g * d.l_m / (l_g + q.l_j)).sqrt();
        let via_kappa = qubit_freq_shift(kappa, d.z0, q.l_j, l_g);
        assert_relative_eq!(via_g, via_kappa, max_relative = 1e-12);
    }

    #[test]
    fn anchoring_reproduces_kappa_max() {
        let device = DeviceParams::measured_default();
        let d = device.derived_cable();
        let k = kappa_at_flux(&device.coupler_a, &device.q2, d.z0, 0.5).unwrap();
        assert_relative_eq!(k, 1.0 / 22.0e-9, max_relative = 1e-9);
        let kb = kappa_at_flux(&device.coupler_b, &device.q3, d.z0, 0.5).unwrap();
        assert_relative_eq!(kb, 1.0 / 18.0e-9, max_relative = 1e-9);
    }

    #[test]
    fn kappa_off_at_off_bias() {
        let device = DeviceParams::measured_default();
        let d = device.derived_cable();
        let off = coupler_off_bias(&device.coupler_a);
        let k = kappa_at_flux(&device.coupler_a, &device.q2, d.z0, off).unwrap();
        assert!(k < 1e-6 * device.coupler_a.kappa_max);
    }
}

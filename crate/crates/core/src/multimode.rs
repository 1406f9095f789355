//! Single-excitation multimode Jaynes-Cummings engine.
//!
//! The cable hosts a ladder of standing-wave modes spaced by the free
//! spectral range; a qubit coupled at the far end sees the mode parity, so
//! its coupling to mode m carries a (-1)^m sign. In the single-excitation
//! manifold the Hamiltonian is a real symmetric matrix of dimension
//! n_qubits + n_modes, and evolution is exact eigendecomposition
//! propagation. Decoherence is applied analytically to mode amplitudes in
//! the coherence experiments; the unitary engine itself is lossless.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::parallel;

/// Which end of the cable a qubit couples to. The far end picks up the
/// standing-wave parity sign (-1)^m.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ParitySide {
    Near,
    Far,
}

#[derive(Debug, Clone)]
pub struct QubitSpec {
    /// Rotating-frame detuning (rad/s).
    pub detuning: f64,
    /// Coupling to each mode in the spec's range (rad/s), before the parity
    /// sign is applied.
    pub couplings: Vec<f64>,
    pub parity_side: ParitySide,
}

#[derive(Debug, Clone)]
pub struct MultimodeSpec {
    pub qubits: Vec<QubitSpec>,
    /// Absolute index of the lowest retained mode; parity is taken from the
    /// absolute index.
    pub m_lo: i64,
    /// Rotating-frame detuning of each retained mode (rad/s).
    pub mode_detunings: Vec<f64>,
}

impl MultimodeSpec {
    /// One qubit with uniform coupling `g` to `2*half_window + 1` modes
    /// centred on the mode nearest the rotating frame, mode spacing
    /// `omega_fsr`.
    pub fn single_qubit_window(
        g: f64,
        qubit_detuning: f64,
        omega_fsr: f64,
        frame_freq: f64,
        half_window: usize,
        parity_side: ParitySide,
    ) -> Self {
        let m_res = (frame_freq / omega_fsr).round() as i64;
        let m_lo = m_res - half_window as i64;
        let n_modes = 2 * half_window + 1;
        let mode_detunings = (0..n_modes)
            .map(|i| (m_lo + i as i64) as f64 * omega_fsr - frame_freq)
            .collect();
        MultimodeSpec {
            qubits: vec![QubitSpec {
                detuning: qubit_detuning,
                couplings: vec![g; n_modes],
                parity_side,
            }],
            m_lo,
            mode_detunings,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.mode_detunings.len()
    }

    pub fn dim(&self) -> usize {
        self.qubits.len() + self.n_modes()
    }

    pub fn validate(&self) -> Result<()> {
        if self.qubits.is_empty() {
            return Err(Error::InvalidParameter("at least one qubit required".into()));
        }
        if self.mode_detunings.is_empty() {
            return Err(Error::InvalidParameter("mode range must be non-empty".into()));
        }
        for (i, q) in self.qubits.iter().enumerate() {
            if q.couplings.len() != self.n_modes() {
                return Err(Error::DimensionMismatch {
                    expected: self.n_modes(),
                    got: q.couplings.len(),
                });
            }
            if q.couplings.iter().any(|g| !g.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "qubit {i} has a non-finite coupling"
                )));
            }
        }
        Ok(())
    }
}

/// Single-excitation Hamiltonian: basis ordered qubits first, then modes.
/// Real symmetric since all couplings are real.
pub fn build_hamiltonian(spec: &MultimodeSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let nq = spec.qubits.len();
    let nm = spec.n_modes();
    let mut h = DMatrix::<f64>::zeros(nq + nm, nq + nm);
    for (i, q) in spec.qubits.iter().enumerate() {
        h[(i, i)] = q.detuning;
        for (j, g) in q.couplings.iter().enumerate() {
            let sign = match q.parity_side {
                ParitySide::Near => 1.0,
                ParitySide::Far => {
                    if (spec.m_lo + j as i64).rem_euclid(2) == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            h[(i, nq + j)] = sign * g;
            h[(nq + j, i)] = sign * g;
        }
    }
    for (j, dw) in spec.mode_detunings.iter().enumerate() {
        h[(nq + j, nq + j)] = *dw;
    }
    Ok(h)
}

/// Populations of every basis state at each requested time.
#[derive(Debug, Clone, Serialize)]
pub struct EvolveResult {
    pub t: Vec<f64>,
    /// populations[k][i] = |<i|psi(t_k)>|^2
    pub populations: Vec<Vec<f64>>,
    pub final_state: Vec<Complex64>,
}

/// Exact propagation of a time-independent Hamiltonian via its spectral
/// decomposition: psi(t) = V exp(-i Lambda t) V^T psi0.
pub fn evolve(h: &DMatrix<f64>, psi0: &[Complex64], t_grid: &[f64]) -> Result<EvolveResult> {
    let dim = h.nrows();
    if h.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: h.ncols(),
        });
    }
    if psi0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: psi0.len(),
        });
    }
    if t_grid.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    let eig = SymmetricEigen::new(h.clone());
    // eigenbasis coefficients of psi0, complex on a real basis
    let re = DVector::from_iterator(dim, psi0.iter().map(|z| z.re));
    let im = DVector::from_iterator(dim, psi0.iter().map(|z| z.im));
    let c_re = eig.eigenvectors.transpose() * re;
    let c_im = eig.eigenvectors.transpose() * im;

    let mut populations = Vec::with_capacity(t_grid.len());
    let mut final_state = vec![Complex64::ZERO; dim];
    for &t in t_grid {
        let mut psi = vec![Complex64::ZERO; dim];
        for k in 0..dim {
            let phase = Complex64::from_polar(1.0, -eig.eigenvalues[k] * t);
            let ck = Complex64::new(c_re[k], c_im[k]) * phase;
            for i in 0..dim {
                psi[i] += ck * eig.eigenvectors[(i, k)];
            }
        }
        populations.push(psi.iter().map(|z| z.norm_sqr()).collect());
        final_state = psi;
    }
    Ok(EvolveResult {
        t: t_grid.to_vec(),
        populations,
        final_state,
    })
}

/// Piecewise-constant propagation of a time-dependent Hamiltonian, exact
/// matrix-exponential stepping with internal substeps of at most `max_step`.
pub fn evolve_time_dependent<F>(
    h_of_t: F,
    psi0: &[Complex64],
    t_grid: &[f64],
    max_step: f64,
) -> Result<EvolveResult>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    if max_step <= 0.0 {
        return Err(Error::Config("max_step must be positive".into()));
    }
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "time grid must be strictly increasing with at least two points".into(),
        ));
    }
    let dim = psi0.len();
    let mut psi: Vec<Complex64> = psi0.to_vec();
    let mut populations = vec![psi.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>()];
    for w in t_grid.windows(2) {
        let span = w[1] - w[0];
        let n_sub = (span / max_step).ceil().max(1.0) as usize;
        let dt = span / n_sub as f64;
        for s in 0..n_sub {
            let t_mid = w[0] + (s as f64 + 0.5) * dt;
            let h = h_of_t(t_mid);
            if h.nrows() != dim || h.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: h.nrows(),
                });
            }
            let eig = SymmetricEigen::new(h);
            let re = DVector::from_iterator(dim, psi.iter().map(|z| z.re));
            let im = DVector::from_iterator(dim, psi.iter().map(|z| z.im));
            let c_re = eig.eigenvectors.transpose() * re;
            let c_im = eig.eigenvectors.transpose() * im;
            for i in 0..dim {
                psi[i] = Complex64::ZERO;
            }
            for k in 0..dim {
                let phase = Complex64::from_polar(1.0, -eig.eigenvalues[k] * dt);
                let ck = Complex64::new(c_re[k], c_im[k]) * phase;
                for i in 0..dim {
                    psi[i] += ck * eig.eigenvectors[(i, k)];
                }
            }
        }
        populations.push(psi.iter().map(|z| z.norm_sqr()).collect());
    }
    Ok(EvolveResult {
        t: t_grid.to_vec(),
        populations,
        final_state: psi,
    })
}

/// 2-D population scan result.
#[derive(Debug, Clone, Serialize)]
pub struct PopulationMap {
    /// Interaction times (s).
    pub axis1: Vec<f64>,
    /// Qubit detunings (rad/s).
    pub axis2: Vec<f64>,
    /// values[j][k] = P1(axis2[j], axis1[k])
    pub values: Vec<Vec<f64>>,
}

/// Qubit excited-state population versus interaction time and qubit
/// detuning. Weak coupling resolves isolated chevrons one free spectral
/// range apart; strong coupling shows round-trip revival stripes.
pub fn chevron_scan(
    base: &MultimodeSpec,
    detuning_range: &[f64],
    time_range: &[f64],
) -> Result<PopulationMap> {
    base.validate()?;
    if detuning_range.is_empty() || time_range.is_empty() {
        return Err(Error::InvalidParameter("empty scan range".into()));
    }
    let rows = parallel::map_collect(detuning_range, |&dw| {
        let mut spec = base.clone();
        spec.qubits[0].detuning = dw;
        let h = build_hamiltonian(&spec)?;
        let mut psi0 = vec![Complex64::ZERO; spec.dim()];
        psi0[0] = Complex64::new(1.0, 0.0);
        let res = evolve(&h, &psi0, time_range)?;
        Ok(res.populations.iter().map(|p| p[0]).collect::<Vec<f64>>())
    });
    Ok(PopulationMap {
        axis1: time_range.to_vec(),
        axis2: detuning_range.to_vec(),
        values: rows.into_iter().collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CoherenceKind {
    T1,
    Ramsey,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoherenceResult {
    pub kind: CoherenceKind,
    pub wait: Vec<f64>,
    /// Recovered qubit population (T1) or fringe envelope (Ramsey).
    pub signal: Vec<f64>,
    /// Fitted time constant (s); `None` when no decay is detectable over the
    /// scanned window.
    pub fitted_time: Option<f64>,
    /// One-sigma fit uncertainty on the time constant (s).
    pub fit_uncertainty: f64,
}

/// Mode lifetime / coherence experiment: swap the excitation (T1) or one
/// superposition branch (Ramsey) into a cable mode, wait, swap back, read
/// out. Amplitude damping and pure dephasing during the wait are exact for
/// one excitation, so they are applied analytically to the mode amplitude.
///
/// `t1_mode` is the mode energy lifetime; `t_phi` an optional pure-dephasing
/// time (both seconds, `f64::INFINITY` allowed).
pub fn mode_coherence_experiment(
    kind: CoherenceKind,
    t1_mode: f64,
    t_phi: Option<f64>,
    wait_grid: &[f64],
) -> Result<CoherenceResult> {
    if wait_grid.len() < 4 {
        return Err(Error::InvalidParameter(
            "need at least four wait points for a fit".into(),
        ));
    }
    if t1_mode <= 0.0 {
        return Err(Error::InvalidParameter("t1_mode must be positive".into()));
    }
    // amplitude decay rate of the stored coherence
    let gamma = match kind {
        CoherenceKind::T1 => 1.0 / t1_mode,
        // 1/T2 = 1/(2 T1) + 1/T_phi
        CoherenceKind::Ramsey => 0.5 / t1_mode + t_phi.map(|t| 1.0 / t).unwrap_or(0.0),
    };
    // Ramsey fringe frequency: a deliberate detuning so the fringe is
    // resolved on the wait grid; envelope taken from the two quadratures.
    let span = wait_grid.last().unwrap() - wait_grid.first().unwrap();
    let fringe = 8.0 * std::f64::consts::PI / span.max(f64::MIN_POSITIVE);
    let signal: Vec<f64> = wait_grid
        .iter()
        .map(|&tw| match kind {
            CoherenceKind::T1 => (-gamma * tw).exp(),
            CoherenceKind::Ramsey => {
                let c = Complex64::from_polar((-gamma * tw).exp(), fringe * tw);
                // envelope of P = (1 + Re c)/2 from both quadratures
                c.norm()
            }
        })
        .collect();
    let (rate, rate_err) = fit_log_linear(wait_grid, &signal)?;
    // total decay over the scanned window below detection -> non-decaying
    if rate * span < 1e-6 {
        return Ok(CoherenceResult {
            kind,
            wait: wait_grid.to_vec(),
            signal,
            fitted_time: None,
            fit_uncertainty: f64::INFINITY,
        });
    }
    Ok(CoherenceResult {
        kind,
        wait: wait_grid.to_vec(),
        signal,
        fitted_time: Some(1.0 / rate),
        fit_uncertainty: rate_err / (rate * rate),
    })
}

/// Log-linear least squares for y = A exp(-r t); returns (r, sigma_r).
fn fit_log_linear(t: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&a, &b)| (a, b.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::FitFailure(
            "too few positive samples for a log-linear fit".into(),
        ));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < f64::MIN_POSITIVE {
        return Err(Error::FitFailure("degenerate wait grid".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let var = ss_res / (n - 2.0).max(1.0);
    let sigma_slope = (var * n / denom).sqrt();
    Ok((-slope, sigma_slope))
}

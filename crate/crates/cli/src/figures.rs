//! Bundled figure-reproduction scenarios: each supported figure id maps to a
//! scenario shipped with the binary plus a short README describing the
//! dataset it produces.

use crate::error::{CliError, CliResult};

#[derive(Debug)]
pub struct Figure {
    pub id: &'static str,
    pub scenario: &'static str,
    pub readme: &'static str,
}

macro_rules! fig {
    ($id:literal, $file:literal, $readme:literal) => {
        Figure {
            id: $id,
            scenario: include_str!(concat!("../scenarios/", $file)),
            readme: $readme,
        }
    };
}

pub const FIGURES: &[Figure] = &[
    fig!(
        "2a",
        "fig2a.toml",
        "Figure 2a: qubit population versus detuning and interaction time at weak \
         coupling (g/2pi = 0.08 MHz), even-mode side. Isolated chevrons appear one \
         free spectral range (~1.89 MHz) apart. Dataset: chevron.csv."
    ),
    fig!(
        "2b",
        "fig2b.toml",
        "Figure 2b: chevron scan at intermediate coupling (g/2pi = 0.4 MHz), even-mode \
         side; neighboring chevrons begin to overlap. Dataset: chevron.csv."
    ),
    fig!(
        "2c",
        "fig2c.toml",
        "Figure 2c: strong coupling (g/2pi = 1.63 MHz), even-mode side; the chevrons \
         merge into round-trip revival stripes at multiples of 2 tau_st (~530 ns). \
         Dataset: chevron.csv."
    ),
    fig!(
        "2d",
        "fig2d.toml",
        "Figure 2d: weak-coupling chevron scan on the odd-mode side. Dataset: \
         chevron.csv."
    ),
    fig!(
        "2e",
        "fig2e.toml",
        "Figure 2e: intermediate-coupling chevron scan on the odd-mode side. Dataset: \
         chevron.csv."
    ),
    fig!(
        "2f",
        "fig2f.toml",
        "Figure 2f: strong-coupling revival stripes on the odd-mode side. Dataset: \
         chevron.csv."
    ),
    fig!(
        "3a",
        "fig3a.toml",
        "Figure 3a: emission rate of coupler A versus flux bias, from the circuit \
         model and from an exponential ringdown fit of the simulated free emission. \
         Dataset: emission.csv."
    ),
    fig!(
        "3c",
        "fig3c.toml",
        "Figure 3c: time-reversal-symmetric photon transfer with the shaped emission \
         pulses, including qubit decay; sender/receiver populations and the kappa \
         waveforms. Dataset: transfer.csv."
    ),
    fig!(
        "3d",
        "fig3d.toml",
        "Figure 3d: process matrix (chi, Pauli basis) of the effective single-qubit \
         transfer channel. Dataset: chi_transfer.csv."
    ),
    fig!(
        "3e",
        "fig3e.toml",
        "Figure 3e: fractional photon emission; residual sender population follows \
         the 1 - alpha law for a calibrated coupler. Datasets: calibration.csv, \
         calibration.json."
    ),
    fig!(
        "3f",
        "fig3f.toml",
        "Figure 3f: density matrix of the deterministically generated remote Bell \
         pair (alpha = 1/2) under the measured noise model. Datasets: \
         bell_state.csv, bell_state.json."
    ),
    fig!(
        "4b",
        "fig4b.toml",
        "Figure 4b: process matrices of quantum state teleportation, per measurement \
         outcome, for feed-forward (chi_ff_*.csv) and post-selection (chi_ps_*.csv), \
         with state and process fidelities in state_fidelities.csv and teleport.json."
    ),
    fig!(
        "4d",
        "fig4d.toml",
        "Figure 4d: process matrix of the teleported CNOT gate (chi_cnot.csv) with \
         the ideal reference (chi_cnot_ideal.csv) and the noiseless simulation \
         (chi_cnot_noiseless.csv), whose imaginary part should vanish."
    ),
    fig!(
        "S3",
        "figS3.toml",
        "Figure S3: active cooling of the long cable; thermal population of the \
         cable and the ancilla qubit versus swap-and-reset cycle. Dataset: \
         cooling.csv."
    ),
    fig!(
        "S7",
        "figS7.toml",
        "Figure S7: cross-check of the two simulation engines; sender qubit \
         population under constant strong coupling from the multimode Hamiltonian \
         and from input-output theory over three cable transits. Datasets: \
         transfer.csv, crosscheck.csv."
    ),
    fig!(
        "S8",
        "figS8.toml",
        "Figure S8: transfer inefficiency versus sender/receiver frequency mismatch \
         with the shaped pulses; ~22% inefficiency at 2 MHz. Dataset: mismatch.csv."
    ),
    fig!(
        "S9",
        "figS9.toml",
        "Figure S9: fractional-emission calibration curves for a calibrated coupler \
         and for -20% / +20% kappa-scale distortions, with the under/over-coupling \
         classification. Datasets: calibration.csv, calibration.json."
    ),
    fig!(
        "S11",
        "figS11.toml",
        "Figure S11: supplementary teleportation data; per-input, per-outcome state \
         fidelities for feed-forward and post-selection, plus sampled tomography \
         statistics. Datasets: state_fidelities.csv, teleport.json, chi_*.csv."
    ),
    fig!(
        "S12",
        "figS12.toml",
        "Figure S12: real and imaginary parts of the teleported-CNOT process matrix, \
         noisy and noiseless variants. Datasets: chi_cnot.csv, chi_cnot_noiseless.csv, \
         chi_cnot_ideal.csv."
    ),
];

pub fn lookup(id: &str) -> CliResult<&'static Figure> {
    FIGURES.iter().find(|f| f.id == id).ok_or_else(|| {
        let known: Vec<&str> = FIGURES.iter().map(|f| f.id).collect();
        CliError::Validation(format!(
            "unknown figure id '{id}' (supported: {})",
            known.join(", ")
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioFile;

    #[test]
    fn all_bundled_scenarios_parse() {
        for f in FIGURES {
            let scn = ScenarioFile::parse(f.scenario)
                .unwrap_or_else(|e| panic!("figure {}: {e}", f.id));
            let _: crate::experiments::Experiment = scn.experiment.parse().unwrap();
            assert_eq!(scn.name, format!("fig{}", f.id));
        }
    }

    #[test]
    fn unknown_id_is_validation_error() {
        assert_eq!(lookup("9z").unwrap_err().exit_code(), 1);
    }
}

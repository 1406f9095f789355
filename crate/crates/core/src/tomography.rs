//! Quantum state and process tomography: linear-inversion reconstruction
//! from {I, X/2, Y/2} measurement settings, process matrices in the Pauli
//! basis, readout-error mitigation, physical (nearest-PSD) projection,
//! fidelity metrics, and the repeated-measurement statistics procedure.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::parallel;
use crate::quantum::{kron, pauli_string, DensityMatrix, Gate, QuantumChannel};

type CMatrix = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

// ---------------------------------------------------------------------------
// Hermitian linear algebra via the real symmetric embedding
// ---------------------------------------------------------------------------

/// Real symmetric embedding [[Re, -Im], [Im, Re]] of a Hermitian matrix.
fn embed(m: &CMatrix) -> DMatrix<f64> {
    let d = m.nrows();
    let mut e = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            e[(i, j)] = m[(i, j)].re;
            e[(i + d, j + d)] = m[(i, j)].re;
            e[(i, j + d)] = -m[(i, j)].im;
            e[(i + d, j)] = m[(i, j)].im;
        }
    }
    e
}

fn unembed(e: &DMatrix<f64>) -> CMatrix {
    let d = e.nrows() / 2;
    CMatrix::from_fn(d, d, |i, j| c(e[(i, j)], e[(i + d, j)]))
}

fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Eigenvalues of a Hermitian matrix (each appears once).
fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let se = SymmetricEigen::new(embed(&hermitize(m)));
    let mut vals: Vec<f64> = se.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // the embedding doubles every eigenvalue; keep one of each pair
    vals.into_iter().step_by(2).collect()
}

/// Principal square root of a Hermitian PSD matrix (negative eigenvalues are
/// clamped to zero first).
fn sqrtm_psd(m: &CMatrix) -> CMatrix {
    let se = SymmetricEigen::new(embed(&hermitize(m)));
    let d2 = se.eigenvalues.len();
    let mut rebuilt = DMatrix::zeros(d2, d2);
    for k in 0..d2 {
        let lam = se.eigenvalues[k].max(0.0).sqrt();
        let v = se.eigenvectors.column(k);
        rebuilt += v * v.transpose() * lam;
    }
    unembed(&rebuilt)
}

// ---------------------------------------------------------------------------
// Measurement settings
// ---------------------------------------------------------------------------

/// Pre-measurement tomography rotation applied before a Z-basis readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Rotation {
    I,
    XHalf,
    YHalf,
}

impl Rotation {
    pub fn matrix(&self) -> CMatrix {
        match self {
            Rotation::I => CMatrix::identity(2, 2),
            Rotation::XHalf => Gate::XHalf.matrix(),
            Rotation::YHalf => Gate::YHalf.matrix(),
        }
    }

    /// The Pauli this rotation maps onto the Z axis, with its sign:
    /// measuring Z after the rotation measures `sign * pauli`.
    fn measured_pauli(&self) -> (usize, f64) {
        match self {
            Rotation::I => (3, 1.0),     // Z
            Rotation::XHalf => (2, 1.0), // Y
            Rotation::YHalf => (1, -1.0), // -X
        }
    }
}

const ROTATIONS: [Rotation; 3] = [Rotation::I, Rotation::XHalf, Rotation::YHalf];

/// Full tomographically complete setting set: {I, X/2, Y/2} per qubit.
pub fn qst_settings(n_qubits: usize) -> Vec<Vec<Rotation>> {
    let mut out = vec![vec![]];
    for _ in 0..n_qubits {
        out = out
            .into_iter()
            .flat_map(|s| {
                ROTATIONS.iter().map(move |r| {
                    let mut s2 = s.clone();
                    s2.push(*r);
                    s2
                })
            })
            .collect();
    }
    out
}

/// Exact Z-basis outcome probabilities after applying one setting's
/// rotations.
pub fn setting_probabilities(rho: &DensityMatrix, setting: &[Rotation]) -> Result<Vec<f64>> {
    if setting.len() != rho.n_qubits {
        return Err(Error::DimensionMismatch {
            expected: rho.n_qubits,
            got: setting.len(),
        });
    }
    let mut rotated = rho.clone();
    for (q, r) in setting.iter().enumerate() {
        rotated.apply_unitary_on(&r.matrix(), &[q])?;
    }
    let qubits: Vec<usize> = (0..rho.n_qubits).collect();
    rotated.born_probabilities(&qubits)
}

/// Convert shot records to outcome frequencies.
pub fn counts_to_probabilities(counts: &[Vec<u64>]) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|cs| {
            let total: u64 = cs.iter().sum();
            cs.iter().map(|&x| x as f64 / total.max(1) as f64).collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// State tomography
// ---------------------------------------------------------------------------

/// Reconstruct a density matrix from per-setting outcome probabilities by
/// linear inversion to Pauli expectation values, followed by physical
/// projection. Exact probabilities of a physical state round-trip exactly.
pub fn qst(
    probabilities: &[Vec<f64>],
    settings: &[Vec<Rotation>],
    n_qubits: usize,
) -> Result<DensityMatrix> {
    if probabilities.len() != settings.len() {
        return Err(Error::DimensionMismatch {
            expected: settings.len(),
            got: probabilities.len(),
        });
    }
    let d = 1usize << n_qubits;
    for (p, s) in probabilities.iter().zip(settings) {
        if s.len() != n_qubits || p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
    }
    let mut estimate = CMatrix::zeros(d, d);
    for pauli_idx in 0..(d * d) {
        let expectation = pauli_expectation(probabilities, settings, n_qubits, pauli_idx)?;
        estimate += pauli_string(pauli_idx, n_qubits) * c(expectation / d as f64, 0.0);
    }
    let projected = project_physical(&estimate)?;
    DensityMatrix::from_matrix(projected)
}

/// Expectation value of one Pauli string, taken from the first setting that
/// measures it. Errors if no setting covers the string (incomplete set).
fn pauli_expectation(
    probabilities: &[Vec<f64>],
    settings: &[Vec<Rotation>],
    n_qubits: usize,
    pauli_idx: usize,
) -> Result<f64> {
    // per-qubit Pauli components, most significant digit = qubit 0
    let components: Vec<usize> = (0..n_qubits)
        .map(|q| (pauli_idx >> (2 * (n_qubits - 1 - q))) & 3)
        .collect();
    'setting: for (p, setting) in probabilities.iter().zip(settings) {
        let mut sign = 1.0;
        for (q, &comp) in components.iter().enumerate() {
            if comp == 0 {
                continue; // identity component: marginalized, any rotation works
            }
            let (measured, s) = setting[q].measured_pauli();
            if measured != comp {
                continue 'setting;
            }
            sign *= s;
        }
        let mut e = 0.0;
        for (outcome, &prob) in p.iter().enumerate() {
            let mut parity = 1.0;
            for (q, &comp) in components.iter().enumerate() {
                if comp != 0 && (outcome >> (n_qubits - 1 - q)) & 1 == 1 {
                    parity = -parity;
                }
            }
            e += parity * prob;
        }
        return Ok(sign * e);
    }
    Err(Error::InvalidParameter(format!(
        "setting set is tomographically incomplete: no setting measures Pauli string {pauli_idx}"
    )))
}

/// Infinite-shot state tomography round trip: generate exact probabilities
/// for the full setting set and invert them.
pub fn qst_exact(rho: &DensityMatrix) -> Result<DensityMatrix> {
    let settings = qst_settings(rho.n_qubits);
    let probs: Result<Vec<Vec<f64>>> = settings
        .iter()
        .map(|s| setting_probabilities(rho, s))
        .collect();
    qst(&probs?, &settings, rho.n_qubits)
}

/// Finite-shot state tomography: sample each setting's outcomes and invert
/// the observed frequencies. Deterministic given the seed.
pub fn qst_sampled(rho: &DensityMatrix, shots: u64, seed: u64) -> Result<DensityMatrix> {
    let settings = qst_settings(rho.n_qubits);
    let d = rho.dim();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut freqs = Vec::with_capacity(settings.len());
    for s in &settings {
        let p = setting_probabilities(rho, s)?;
        let mut counts = vec![0u64; d];
        for _ in 0..shots {
            counts[sample_index(&mut rng, &p)] += 1;
        }
        freqs.push(counts.iter().map(|&x| x as f64 / shots as f64).collect());
    }
    qst(&freqs, &settings, rho.n_qubits)
}

fn sample_index(rng: &mut ChaCha12Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x: f64 = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        x -= w;
        if x <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

// ---------------------------------------------------------------------------
// Process tomography
// ---------------------------------------------------------------------------

/// Process matrix chi in the Pauli basis {I, X, Y, Z}^⊗n (lexicographic
/// tensor ordering), trace-normalized to 1.
#[derive(Debug, Clone)]
pub struct ProcessMatrix {
    pub n_qubits: usize,
    pub chi: CMatrix,
}

impl ProcessMatrix {
    /// Basis labels, e.g. ["I", "X", "Y", "Z"] or ["II", "IX", ...].
    pub fn labels(&self) -> Vec<String> {
        pauli_labels(self.n_qubits)
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.chi.nrows()).map(|i| self.chi[(i, i)]).sum()
    }

    /// Bar-chart-ready CSV: row label, column label, real, imag.
    pub fn to_csv(&self) -> String {
        let labels = self.labels();
        let mut out = String::from("row,col,real,imag\n");
        for i in 0..self.chi.nrows() {
            for j in 0..self.chi.ncols() {
                let v = self.chi[(i, j)];
                out.push_str(&format!("{},{},{:.10e},{:.10e}\n", labels[i], labels[j], v.re, v.im));
            }
        }
        out
    }
}

pub fn pauli_labels(n_qubits: usize) -> Vec<String> {
    let chars = ['I', 'X', 'Y', 'Z'];
    (0..(1usize << (2 * n_qubits)))
        .map(|idx| {
            (0..n_qubits)
                .map(|q| chars[(idx >> (2 * (n_qubits - 1 - q))) & 3])
                .collect()
        })
        .collect()
}

/// The single-qubit tomography input states |0>, |0>-i|1>, |0>+|1>, |1>.
pub fn qpt_input_state(idx: usize) -> Result<DensityMatrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let amps = match idx {
        0 => vec![c(1.0, 0.0), c(0.0, 0.0)],
        1 => vec![c(s, 0.0), c(0.0, -s)],
        2 => vec![c(s, 0.0), c(s, 0.0)],
        3 => vec![c(0.0, 0.0), c(1.0, 0.0)],
        _ => {
            return Err(Error::InvalidParameter(
                "input state index out of range".into(),
            ))
        }
    };
    DensityMatrix::pure(&amps)
}

/// Full product input set for an n-qubit process (4^n states, index digits
/// base 4, most significant digit on qubit 0).
pub fn qpt_input_set(n_qubits: usize) -> Result<Vec<DensityMatrix>> {
    let mut out = Vec::new();
    for idx in 0..(1usize << (2 * n_qubits)) {
        let mut m = CMatrix::identity(1, 1);
        for q in 0..n_qubits {
            let digit = (idx >> (2 * (n_qubits - 1 - q))) & 3;
            m = kron(&m, &qpt_input_state(digit)?.m);
        }
        out.push(DensityMatrix {
            n_qubits,
            m,
        });
    }
    Ok(out)
}

/// Reconstruct the process matrix from an input state set and the measured
/// output states: linear inversion of the superoperator, change to the Pauli
/// basis, physical projection, trace normalization.
pub fn qpt(inputs: &[DensityMatrix], outputs: &[DensityMatrix]) -> Result<ProcessMatrix> {
    if inputs.is_empty() || inputs.len() != outputs.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            got: outputs.len(),
        });
    }
    let n_qubits = inputs[0].n_qubits;
    let d = 1usize << n_qubits;
    let d2 = d * d;
    if inputs.len() != d2 {
        return Err(Error::InvalidParameter(format!(
            "process tomography needs {d2} input states, got {}",
            inputs.len()
        )));
    }
    let mut m_in = CMatrix::zeros(d2, d2);
    let mut m_out = CMatrix::zeros(d2, d2);
    for (k, (rin, rout)) in inputs.iter().zip(outputs).enumerate() {
        if rin.n_qubits != n_qubits || rout.n_qubits != n_qubits {
            return Err(Error::DimensionMismatch {
                expected: n_qubits,
                got: rout.n_qubits,
            });
        }
        for col in 0..d {
            for row in 0..d {
                m_in[(col * d + row, k)] = rin.m[(row, col)];
                m_out[(col * d + row, k)] = rout.m[(row, col)];
            }
        }
    }
    let inv = m_in.lu().try_inverse().ok_or_else(|| {
        Error::InvalidParameter("input state set is tomographically incomplete (rank-deficient)".into())
    })?;
    let superop = m_out * inv;
    // chi_{mn} = tr(B_{mn}^† S) / d^2 with B_{mn} = P_n^T ⊗ P_m
    let mut chi = CMatrix::zeros(d2, d2);
    let paulis: Vec<CMatrix> = (0..d2).map(|i| pauli_string(i, n_qubits)).collect();
    for m in 0..d2 {
        for n in 0..d2 {
            let b = kron(&paulis[n].transpose(), &paulis[m]);
            let mut t = Complex64::default();
            for i in 0..d2 {
                for j in 0..d2 {
                    t += b[(j, i)].conj() * superop[(j, i)];
                }
            }
            chi[(m, n)] = t / c(d2 as f64, 0.0);
        }
    }
    let mut chi = project_physical(&chi)?;
    let tr: Complex64 = (0..d2).map(|i| chi[(i, i)]).sum();
    chi /= tr;
    Ok(ProcessMatrix { n_qubits, chi })
}

/// Brute-force process matrix of a channel with known Kraus operators:
/// chi = Σ_k a_k a_k^† with a_{k,m} = tr(P_m^† K_k) / d.
pub fn chi_from_kraus(channel: &QuantumChannel, n_qubits: usize) -> ProcessMatrix {
    let d = 1usize << n_qubits;
    let d2 = d * d;
    let paulis: Vec<CMatrix> = (0..d2).map(|i| pauli_string(i, n_qubits)).collect();
    let mut chi = CMatrix::zeros(d2, d2);
    for k in &channel.kraus {
        let a: Vec<Complex64> = paulis
            .iter()
            .map(|p| {
                let mut t = Complex64::default();
                for i in 0..d {
                    for j in 0..d {
                        t += p[(j, i)].conj() * k[(j, i)];
                    }
                }
                t / c(d as f64, 0.0)
            })
            .collect();
        for m in 0..d2 {
            for n in 0..d2 {
                chi[(m, n)] += a[m] * a[n].conj();
            }
        }
    }
    ProcessMatrix { n_qubits, chi }
}

/// Process matrix of an ideal unitary.
pub fn chi_ideal(u: &CMatrix, n_qubits: usize) -> ProcessMatrix {
    chi_from_kraus(&QuantumChannel::from_unitary(u.clone()), n_qubits)
}

/// Run a channel map over the full input set and reconstruct its chi.
pub fn qpt_of_map<F>(n_qubits: usize, mut apply: F) -> Result<ProcessMatrix>
where
    F: FnMut(&DensityMatrix) -> Result<DensityMatrix>,
{
    let inputs = qpt_input_set(n_qubits)?;
    let outputs: Result<Vec<DensityMatrix>> = inputs.iter().map(|r| apply(r)).collect();
    qpt(&inputs, &outputs?)
}

// ---------------------------------------------------------------------------
// Fidelities
// ---------------------------------------------------------------------------

/// Fidelity of a state against a (possibly mixed) target: ⟨ψ|ρ|ψ⟩ for a
/// rank-1 target, Uhlmann fidelity (tr sqrt(sqrt(ρ) σ sqrt(ρ)))² in general.
pub fn state_fidelity(rho: &DensityMatrix, target: &DensityMatrix) -> Result<f64> {
    if rho.n_qubits != target.n_qubits {
        return Err(Error::DimensionMismatch {
            expected: rho.n_qubits,
            got: target.n_qubits,
        });
    }
    let sr = sqrtm_psd(&rho.m);
    let inner = &sr * &target.m * &sr;
    let f: f64 = hermitian_eigenvalues(&inner)
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .sum();
    Ok(f * f)
}

/// Process fidelity Tr(chi · chi_ideal) of two trace-normalized process
/// matrices.
pub fn process_fidelity(chi: &ProcessMatrix, chi_ideal: &ProcessMatrix) -> Result<f64> {
    if chi.n_qubits != chi_ideal.n_qubits {
        return Err(Error::DimensionMismatch {
            expected: chi_ideal.n_qubits,
            got: chi.n_qubits,
        });
    }
    let mut t = Complex64::default();
    for i in 0..chi.chi.nrows() {
        for j in 0..chi.chi.ncols() {
            t += chi.chi[(i, j)] * chi_ideal.chi[(j, i)];
        }
    }
    Ok(t.re)
}

// ---------------------------------------------------------------------------
// Readout correction and physical projection
// ---------------------------------------------------------------------------

/// How negative a corrected probability may go before it is treated as a
/// real inconsistency rather than statistical noise.
pub const READOUT_CLIP_TOL: f64 = 0.01;

/// Invert the readout confusion matrix on a probability vector. Tiny
/// negatives (> -0.01) are clipped to zero and the vector renormalized;
/// larger negatives are an error.
pub fn readout_correct(measured: &[f64], confusion: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = measured.len();
    if confusion.len() != n || confusion.iter().any(|row| row.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: confusion.len(),
        });
    }
    let m = DMatrix::from_fn(n, n, |i, j| confusion[i][j]);
    let rhs = DMatrix::from_column_slice(n, 1, measured);
    let solved = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("confusion matrix is singular".into()))?;
    let mut out: Vec<f64> = solved.iter().copied().collect();
    for v in &out {
        if *v < -READOUT_CLIP_TOL {
            return Err(Error::InvalidParameter(format!(
                "corrected probability {v} is negative beyond tolerance"
            )));
        }
    }
    for v in out.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        for v in out.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

/// Nearest (Frobenius) PSD matrix with trace 1: symmetrize, normalize the
/// trace, then clip negative eigenvalues and redistribute the deficit over
/// the remaining ones. Already-physical inputs are returned unchanged within
/// numerical precision; the operation is idempotent.
pub fn project_physical(m: &CMatrix) -> Result<CMatrix> {
    let h = hermitize(m);
    let tr: f64 = (0..h.nrows()).map(|i| h[(i, i)].re).sum();
    if tr.abs() < 1e-12 {
        return Err(Error::InvalidParameter(
            "cannot project a traceless matrix onto the state space".into(),
        ));
    }
    let h = h / c(tr, 0.0);
    let se = SymmetricEigen::new(embed(&h));
    let n = se.eigenvalues.len();
    // sort eigen-indices by eigenvalue, descending
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[b].partial_cmp(&se.eigenvalues[a]).unwrap());
    let mut lam: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    // clip from the smallest up, spreading the accumulated deficit uniformly
    let mut deficit = 0.0;
    let mut cut = lam.len();
    while cut > 0 {
        let candidate = lam[cut - 1] + deficit / cut as f64;
        if candidate < 0.0 {
            deficit += lam[cut - 1];
            lam[cut - 1] = 0.0;
            cut -= 1;
        } else {
            break;
        }
    }
    if cut > 0 {
        let shift = deficit / cut as f64;
        for l in lam.iter_mut().take(cut) {
            *l += shift;
        }
    }
    let mut rebuilt = DMatrix::zeros(n, n);
    for (slot, &idx) in order.iter().enumerate() {
        if lam[slot] == 0.0 {
            continue;
        }
        let v = se.eigenvectors.column(idx);
        rebuilt += v * v.transpose() * lam[slot];
    }
    Ok(unembed(&rebuilt))
}

// ---------------------------------------------------------------------------
// Repeat statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct RepeatStats {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

/// Run a sampled-tomography experiment `repeats` times with independent
/// derived seeds (parallelized over repeats) and report the mean and
/// standard deviation of the resulting fidelity.
pub fn repeat_statistics<F>(experiment: F, shots: u64, repeats: usize, seed: u64) -> Result<RepeatStats>
where
    F: Fn(u64, u64) -> Result<f64> + Sync + Send,
{
    if shots == 0 || repeats == 0 {
        return Err(Error::InvalidParameter(
            "shots and repeats must be positive".into(),
        ));
    }
    let seeds: Vec<u64> = (0..repeats as u64)
        .map(|i| seed.wrapping_add((i + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
        .collect();
    let results = parallel::map_collect(&seeds, |&s| experiment(shots, s));
    let values: Result<Vec<f64>> = results.into_iter().collect();
    let values = values?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    Ok(RepeatStats {
        mean,
        std: var.sqrt(),
        values,
    })
}

//! Dense density-matrix machinery for up to five qubits: states, the device
//! gate set, and Kraus channels.
//!
//! Qubit 0 is the most significant bit of a basis index, i.e. basis state
//! |q0 q1 ... q_{n-1}>. Everything is dense nalgebra matrices; at dim <= 32
//! there is nothing to be gained from sparsity.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

type CMatrix = DMatrix<Complex64>;

const HERMITICITY_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub n_qubits: usize,
    pub m: CMatrix,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// All qubits in |0>.
    pub fn ground(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        let mut m = CMatrix::zeros(dim, dim);
        m[(0, 0)] = c(1.0, 0.0);
        DensityMatrix { n_qubits, m }
    }

    /// |psi><psi| from an amplitude vector (normalized internally).
    pub fn pure(amplitudes: &[Complex64]) -> Result<Self> {
        let dim = amplitudes.len();
        if !dim.is_power_of_two() || dim < 2 {
            return Err(Error::InvalidParameter(
                "state dimension must be a power of two >= 2".into(),
            ));
        }
        let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if norm <= 0.0 {
            return Err(Error::InvalidParameter("zero state vector".into()));
        }
        let n_qubits = dim.trailing_zeros() as usize;
        let mut m = CMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = amplitudes[i] * amplitudes[j].conj() / norm;
            }
        }
        Ok(DensityMatrix { n_qubits, m })
    }

    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        let dim = m.nrows();
        if m.ncols() != dim || !dim.is_power_of_two() || dim < 2 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: m.ncols(),
            });
        }
        let rho = DensityMatrix {
            n_qubits: dim.trailing_zeros() as usize,
            m,
        };
        rho.check_invariants()?;
        Ok(rho)
    }

    /// Hermiticity, unit trace, and positive semidefiniteness within the
    /// module tolerances.
    pub fn check_invariants(&self) -> Result<()> {
        let dim = self.dim();
        for i in 0..dim {
            for j in 0..dim {
                if (self.m[(i, j)] - self.m[(j, i)].conj()).norm() > HERMITICITY_TOL {
                    return Err(Error::Numerical(format!(
                        "density matrix not Hermitian at ({i},{j})"
                    )));
                }
            }
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::Numerical(format!("trace {tr} != 1")));
        }
        let min = min_eigenvalue(&self.m);
        if min < -PSD_TOL {
            return Err(Error::Numerical(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|i| self.m[(i, i)]).sum()
    }

    /// rho -> U rho U^dagger with a full-dimension unitary.
    pub fn apply_unitary(&mut self, u: &CMatrix) -> Result<()> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.nrows(),
            });
        }
        self.m = u * &self.m * u.adjoint();
        Ok(())
    }

    /// Apply a small unitary on the listed qubits (identity elsewhere).
    pub fn apply_unitary_on(&mut self, u: &CMatrix, targets: &[usize]) -> Result<()> {
        let full = embed_operator(u, targets, self.n_qubits)?;
        self.m = &full * &self.m * full.adjoint();
        Ok(())
    }

    /// Apply a channel given on the listed qubits.
    pub fn apply_channel_on(&mut self, ch: &QuantumChannel, targets: &[usize]) -> Result<()> {
        let mut out = CMatrix::zeros(self.dim(), self.dim());
        for k in &ch.kraus {
            let full = embed_operator(k, targets, self.n_qubits)?;
            out += &full * &self.m * full.adjoint();
        }
        self.m = out;
        Ok(())
    }

    /// Trace out every qubit not in `keep`; `keep` order defines the output
    /// qubit order.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        for &q in keep {
            if q >= self.n_qubits {
                return Err(Error::InvalidParameter(format!("qubit {q} out of range")));
            }
        }
        let nk = keep.len();
        if nk == 0 || nk > self.n_qubits {
            return Err(Error::InvalidParameter("keep list empty or too large".into()));
        }
        let traced: Vec<usize> = (0..self.n_qubits).filter(|q| !keep.contains(q)).collect();
        let kd = 1 << nk;
        let td = 1 << traced.len();
        let mut out = CMatrix::zeros(kd, kd);
        let full_bit = |q: usize| self.n_qubits - 1 - q;
        for a in 0..kd {
            for b in 0..kd {
                let mut acc = Complex64::ZERO;
                for t in 0..td {
                    let mut i = 0usize;
                    let mut j = 0usize;
                    for (pos, &q) in keep.iter().enumerate() {
                        let bit = (a >> (nk - 1 - pos)) & 1;
                        i |= bit << full_bit(q);
                        let bit = (b >> (nk - 1 - pos)) & 1;
                        j |= bit << full_bit(q);
                    }
                    for (pos, &q) in traced.iter().enumerate() {
                        let bit = (t >> pos) & 1;
                        i |= bit << full_bit(q);
                        j |= bit << full_bit(q);
                    }
                    acc += self.m[(i, j)];
                }
                out[(a, b)] = acc;
            }
        }
        Ok(DensityMatrix { n_qubits: nk, m: out })
    }

    /// Joint Born probabilities of measuring `qubits` in the computational
    /// basis, ordered by the bitstring of `qubits` (first listed qubit is
    /// the most significant bit).
    pub fn born_probabilities(&self, qubits: &[usize]) -> Result<Vec<f64>> {
        let reduced = self.partial_trace(qubits)?;
        Ok((0..reduced.dim()).map(|i| reduced.m[(i, i)].re).collect())
    }

    /// Project `qubits` onto the computational-basis `outcome` (bitstring,
    /// first listed qubit most significant). Returns the outcome probability
    /// and the normalized post-measurement state; probability ~ 0 gives an
    /// error.
    pub fn project(&self, qubits: &[usize], outcome: usize) -> Result<(f64, DensityMatrix)> {
        let nq = qubits.len();
        if outcome >= 1 << nq {
            return Err(Error::InvalidParameter("outcome out of range".into()));
        }
        let full_bit = |q: usize| self.n_qubits - 1 - q;
        let keep = |i: usize| {
            qubits.iter().enumerate().all(|(pos, &q)| {
                ((i >> full_bit(q)) & 1) == ((outcome >> (nq - 1 - pos)) & 1)
            })
        };
        let dim = self.dim();
        let mut m = CMatrix::zeros(dim, dim);
        let mut p = 0.0;
        for i in 0..dim {
            if !keep(i) {
                continue;
            }
            p += self.m[(i, i)].re;
            for j in 0..dim {
                if keep(j) {
                    m[(i, j)] = self.m[(i, j)];
                }
            }
        }
        if p < 1e-15 {
            return Err(Error::Numerical(format!(
                "projection onto outcome {outcome:b} has vanishing probability"
            )));
        }
        m /= c(p, 0.0);
        Ok((p, DensityMatrix { n_qubits: self.n_qubits, m }))
    }

    /// <psi| rho |psi> for a normalized pure target.
    pub fn fidelity_pure(&self, psi: &[Complex64]) -> Result<f64> {
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: psi.len(),
            });
        }
        let mut acc = Complex64::ZERO;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += psi[i].conj() * self.m[(i, j)] * psi[j];
            }
        }
        Ok(acc.re)
    }
}

fn min_eigenvalue(m: &CMatrix) -> f64 {
    // Hermitian part, then complex eigenvalues via the real symmetric
    // embedding [[Re, -Im], [Im, Re]] whose spectrum doubles the Hermitian
    // spectrum.
    let dim = m.nrows();
    let herm = (m + m.adjoint()) * c(0.5, 0.0);
    let mut real = DMatrix::<f64>::zeros(2 * dim, 2 * dim);
    for i in 0..dim {
        for j in 0..dim {
            real[(i, j)] = herm[(i, j)].re;
            real[(i + dim, j + dim)] = herm[(i, j)].re;
            real[(i, j + dim)] = -herm[(i, j)].im;
            real[(i + dim, j)] = herm[(i, j)].im;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(real);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Embed an operator acting on `targets` into the full register.
pub fn embed_operator(op: &CMatrix, targets: &[usize], n_qubits: usize) -> Result<CMatrix> {
    let nt = targets.len();
    if op.nrows() != 1 << nt || op.ncols() != 1 << nt {
        return Err(Error::DimensionMismatch {
            expected: 1 << nt,
            got: op.nrows(),
        });
    }
    let mut seen = [false; 8];
    for &q in targets {
        if q >= n_qubits || q >= 8 || seen[q] {
            return Err(Error::InvalidParameter(format!(
                "invalid or repeated target qubit {q}"
            )));
        }
        seen[q] = true;
    }
    let dim = 1 << n_qubits;
    let full_bit = |q: usize| n_qubits - 1 - q;
    let sub_index = |i: usize| {
        let mut s = 0usize;
        for (pos, &q) in targets.iter().enumerate() {
            s |= ((i >> full_bit(q)) & 1) << (nt - 1 - pos);
        }
        s
    };
    let rest_mask: usize = {
        let mut mask = dim - 1;
        for &q in targets {
            mask &= !(1 << full_bit(q));
        }
        mask
    };
    let mut out = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        let si = sub_index(i);
        for j in 0..dim {
            if (i & rest_mask) != (j & rest_mask) {
                continue;
            }
            out[(i, j)] = op[(si, sub_index(j))];
        }
    }
    Ok(out)
}

/// The device gate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    X,
    Y,
    Z,
    XHalf,
    XHalfNeg,
    YHalf,
    YHalfNeg,
    Cz,
    Cnot,
}

impl Gate {
    pub fn n_qubits(&self) -> usize {
        match self {
            Gate::Cz | Gate::Cnot => 2,
            _ => 1,
        }
    }

    /// Unitary matrix; rotations use R_axis(theta) = exp(-i theta axis/2).
    pub fn matrix(&self) -> CMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Gate::X => CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
            Gate::Y => CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
            Gate::Z => CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
            Gate::XHalf => {
                CMatrix::from_row_slice(2, 2, &[c(s, 0.), c(0., -s), c(0., -s), c(s, 0.)])
            }
            Gate::XHalfNeg => {
                CMatrix::from_row_slice(2, 2, &[c(s, 0.), c(0., s), c(0., s), c(s, 0.)])
            }
            Gate::YHalf => {
                CMatrix::from_row_slice(2, 2, &[c(s, 0.), c(-s, 0.), c(s, 0.), c(s, 0.)])
            }
            Gate::YHalfNeg => {
                CMatrix::from_row_slice(2, 2, &[c(s, 0.), c(s, 0.), c(-s, 0.), c(s, 0.)])
            }
            Gate::Cz => {
                let mut m = CMatrix::identity(4, 4);
                m[(3, 3)] = c(-1.0, 0.0);
                m
            }
            Gate::Cnot => {
                let mut m = CMatrix::zeros(4, 4);
                m[(0, 0)] = c(1.0, 0.0);
                m[(1, 1)] = c(1.0, 0.0);
                m[(2, 3)] = c(1.0, 0.0);
                m[(3, 2)] = c(1.0, 0.0);
                m
            }
        }
    }
}

/// Completely positive trace-preserving map as a Kraus list.
#[derive(Debug, Clone)]
pub struct QuantumChannel {
    pub kraus: Vec<CMatrix>,
}

impl QuantumChannel {
    pub fn n_qubits(&self) -> usize {
        self.kraus[0].nrows().trailing_zeros() as usize
    }

    pub fn identity(n_qubits: usize) -> Self {
        QuantumChannel {
            kraus: vec![CMatrix::identity(1 << n_qubits, 1 << n_qubits)],
        }
    }

    pub fn from_unitary(u: CMatrix) -> Self {
        QuantumChannel { kraus: vec![u] }
    }

    /// Amplitude damping with excited-state decay probability gamma.
    pub fn amplitude_damping(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidParameter("gamma must be in [0, 1]".into()));
        }
        Ok(QuantumChannel {
            kraus: vec![
                CMatrix::from_row_slice(
                    2,
                    2,
                    &[c(1., 0.), c(0., 0.), c(0., 0.), c((1.0 - gamma).sqrt(), 0.)],
                ),
                CMatrix::from_row_slice(
                    2,
                    2,
                    &[c(0., 0.), c(gamma.sqrt(), 0.), c(0., 0.), c(0., 0.)],
                ),
            ],
        })
    }

    /// Phase damping shrinking coherences by sqrt(1 - lambda).
    pub fn phase_damping(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter("lambda must be in [0, 1]".into()));
        }
        Ok(QuantumChannel {
            kraus: vec![
                CMatrix::from_row_slice(
                    2,
                    2,
                    &[c(1., 0.), c(0., 0.), c(0., 0.), c((1.0 - lambda).sqrt(), 0.)],
                ),
                CMatrix::from_row_slice(
                    2,
                    2,
                    &[c(0., 0.), c(0., 0.), c(0., 0.), c(lambda.sqrt(), 0.)],
                ),
            ],
        })
    }

    /// Idle decoherence of one qubit for `duration`: amplitude damping from
    /// T1 and pure dephasing from T_phi (either may be infinite).
    pub fn idle(duration: f64, t1: f64, t_phi: f64) -> Result<Self> {
        if duration < 0.0 {
            return Err(Error::InvalidParameter("duration must be >= 0".into()));
        }
        let gamma = if t1.is_finite() {
            1.0 - (-duration / t1).exp()
        } else {
            0.0
        };
        // coherence factor e^{-t/T_phi} on top of the damping's sqrt(1-gamma)
        let lambda = if t_phi.is_finite() {
            1.0 - (-2.0 * duration / t_phi).exp()
        } else {
            0.0
        };
        let ad = Self::amplitude_damping(gamma)?;
        let pd = Self::phase_damping(lambda)?;
        Ok(ad.compose(&pd))
    }

    /// rho -> (1 - p) rho + p I/d on `n_qubits`.
    pub fn depolarizing(p: f64, n_qubits: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter("p must be in [0, 1]".into()));
        }
        let d2 = 1usize << (2 * n_qubits);
        let w_id = 1.0 - p + p / d2 as f64;
        let w_other = p / d2 as f64;
        let mut kraus = Vec::with_capacity(d2);
        for string in 0..d2 {
            let mut op = CMatrix::identity(1, 1);
            let mut s = string;
            for _ in 0..n_qubits {
                op = kron(&op, &pauli(s & 3));
                s >>= 2;
            }
            let w = if string == 0 { w_id } else { w_other };
            kraus.push(op * c(w.sqrt(), 0.0));
        }
        Ok(QuantumChannel { kraus })
    }

    /// Sequential application: self after `first`.
    pub fn compose(&self, first: &Self) -> Self {
        let mut kraus = Vec::with_capacity(self.kraus.len() * first.kraus.len());
        for a in &self.kraus {
            for b in &first.kraus {
                kraus.push(a * b);
            }
        }
        QuantumChannel { kraus }
    }

    /// Sum K^dagger K = I within `tol`.
    pub fn check_complete(&self, tol: f64) -> Result<()> {
        let dim = self.kraus[0].nrows();
        let mut acc = CMatrix::zeros(dim, dim);
        for k in &self.kraus {
            acc += k.adjoint() * k;
        }
        let id = CMatrix::identity(dim, dim);
        let err = (&acc - &id).norm();
        if err > tol {
            return Err(Error::Numerical(format!(
                "Kraus completeness violated: |sum - I| = {err:e}"
            )));
        }
        Ok(())
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let dim = self.kraus[0].nrows();
        if dim != rho.dim() {
            return Err(Error::DimensionMismatch {
                expected: rho.dim(),
                got: dim,
            });
        }
        let mut m = CMatrix::zeros(dim, dim);
        for k in &self.kraus {
            m += k * &rho.m * k.adjoint();
        }
        Ok(DensityMatrix {
            n_qubits: rho.n_qubits,
            m,
        })
    }
}

/// Depolarizing probability giving a target average gate fidelity on
/// `n_qubits`: F_avg = (d F_p + 1)/(d + 1), F_p = 1 - p (1 - 1/d^2).
pub fn depolarizing_from_avg_fidelity(f_avg: f64, n_qubits: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&f_avg) {
        return Err(Error::InvalidParameter("fidelity must be in [0, 1]".into()));
    }
    let d = (1usize << n_qubits) as f64;
    let f_p = (f_avg * (d + 1.0) - 1.0) / d;
    let p = (1.0 - f_p) / (1.0 - 1.0 / (d * d));
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "fidelity {f_avg} maps outside the depolarizing range (p = {p})"
        )));
    }
    Ok(p)
}

/// Single-qubit Pauli matrix by index 0..3 = I, X, Y, Z.
pub fn pauli(idx: usize) -> CMatrix {
    match idx {
        0 => CMatrix::identity(2, 2),
        1 => Gate::X.matrix(),
        2 => Gate::Y.matrix(),
        3 => Gate::Z.matrix(),
        _ => panic!("pauli index out of range"),
    }
}

/// Tensor (Kronecker) product.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Pauli string over n qubits by base-4 digits, most significant digit on
/// qubit 0: index = sum_k digit_k * 4^(n-1-k).
pub fn pauli_string(index: usize, n_qubits: usize) -> CMatrix {
    let mut out = CMatrix::identity(1, 1);
    for k in 0..n_qubits {
        let digit = (index >> (2 * (n_qubits - 1 - k))) & 3;
        out = kron(&out, &pauli(digit));
    }
    out
}

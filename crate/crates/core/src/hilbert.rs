//! Computational-basis linear algebra shared by every other module.
//!
//! Qubit `q` is bit `q` of a basis index (qubit 0 is the least-significant
//! bit). Gate matrices use the same convention locally: bit `t` of a local
//! index refers to `targets[t]`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Numerical tolerances used for validation throughout the crate.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub unitarity: f64,
    pub hermiticity: f64,
    pub trace: f64,
    pub norm: f64,
    pub leakage: f64,
}

pub const TOL: Tolerances = Tolerances {
    unitarity: 1e-10,
    hermiticity: 1e-12,
    trace: 1e-12,
    norm: 1e-12,
    leakage: 1e-10,
};

#[inline]
pub fn bit(index: u64, q: usize) -> bool {
    (index >> q) & 1 == 1
}

/// Dense state vector on `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(n_qubits: usize, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != 1usize << n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for {} qubits",
                amps.len(),
                n_qubits
            )));
        }
        Ok(Self { n_qubits, amps })
    }

    pub fn basis(n_qubits: usize, index: u64) -> Self {
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[index as usize] = ONE;
        Self { n_qubits, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.amps.iter_mut().for_each(|a| *a /= n);
        }
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// State stored as its nonzero computational-basis amplitudes.
///
/// Ground states of constrained models live on a small physical subspace of
/// an otherwise large register, so they are kept in this form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseState {
    pub n_qubits: usize,
    pub entries: Vec<(u64, C64)>,
}

impl SparseState {
    pub fn norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|(_, a)| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_dense(&self) -> StateVector {
        let mut amps = vec![ZERO; 1 << self.n_qubits];
        for &(i, a) in &self.entries {
            amps[i as usize] += a;
        }
        StateVector {
            n_qubits: self.n_qubits,
            amps,
        }
    }
}

impl From<&StateVector> for SparseState {
    fn from(v: &StateVector) -> Self {
        SparseState {
            n_qubits: v.n_qubits,
            entries: v
                .amps
                .iter()
                .enumerate()
                .filter(|(_, a)| a.norm_sqr() > 0.0)
                .map(|(i, &a)| (i as u64, a))
                .collect(),
        }
    }
}

/// A dense operator acting on an ordered list of qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub matrix: CMatrix,
    pub targets: Vec<usize>,
}

impl DenseOperator {
    pub fn new(matrix: CMatrix, targets: Vec<usize>) -> Result<Self> {
        let dim = 1usize << targets.len();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for {} targets",
                matrix.nrows(),
                matrix.ncols(),
                targets.len()
            )));
        }
        for (i, t) in targets.iter().enumerate() {
            if targets[..i].contains(t) {
                return Err(Error::DuplicateTarget(*t));
            }
        }
        Ok(Self { matrix, targets })
    }

    pub fn unitarity_error(&self) -> f64 {
        unitarity_error(&self.matrix)
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_error() < TOL.unitarity
    }

    /// Embed into the full `2^n × 2^n` space.
    pub fn embed(&self, n_qubits: usize) -> Result<CMatrix> {
        let dim = 1usize << n_qubits;
        let mut full = CMatrix::zeros(dim, dim);
        for col in 0..dim {
            let mut basis = vec![ZERO; dim];
            basis[col] = ONE;
            let v = StateVector {
                n_qubits,
                amps: basis,
            };
            let out = apply_gate_unchecked(&v, self)?;
            for (row, a) in out.amps.into_iter().enumerate() {
                full[(row, col)] = a;
            }
        }
        Ok(full)
    }
}

pub fn unitarity_error(m: &CMatrix) -> f64 {
    let prod = m.adjoint() * m;
    let mut err: f64 = 0.0;
    for i in 0..prod.nrows() {
        for j in 0..prod.ncols() {
            let target = if i == j { ONE } else { ZERO };
            err = err.max((prod[(i, j)] - target).norm());
        }
    }
    err
}

pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let mut err: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..=i {
            err = err.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    err
}

pub fn trace(m: &CMatrix) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn commutator_norm(a: &CMatrix, b: &CMatrix) -> f64 {
    max_abs(&(a * b - b * a))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (c, &k) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

pub fn eigvalsh(m: &CMatrix) -> Vec<f64> {
    eigh(m).0
}

/// Apply `f` to the spectrum of a Hermitian matrix.
pub fn hermitian_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = eigh(m);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (c, v) in vals.iter().enumerate() {
        let fv = f(*v);
        for r in 0..n {
            scaled[(r, c)] *= fv;
        }
    }
    scaled * vecs.adjoint()
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// Kronecker product with `b` on the low bits: `kron(a, b)[(ia<<nb)|ib, ...]`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

fn check_targets(gate: &DenseOperator, n_qubits: usize) -> Result<()> {
    for &t in &gate.targets {
        if t >= n_qubits {
            return Err(Error::TargetOutOfRange {
                target: t,
                n_qubits,
            });
        }
    }
    Ok(())
}

/// `U|ψ⟩` for a gate acting on `gate.targets`; rejects non-unitary gates.
pub fn apply_gate(state: &StateVector, gate: &DenseOperator) -> Result<StateVector> {
    check_targets(gate, state.n_qubits)?;
    let err = gate.unitarity_error();
    if err > TOL.unitarity {
        return Err(Error::NotUnitary(err));
    }
    apply_gate_unchecked(state, gate)
}

/// Same as [`apply_gate`] without the unitarity check.
pub fn apply_gate_unchecked(state: &StateVector, gate: &DenseOperator) -> Result<StateVector> {
    check_targets(gate, state.n_qubits)?;
    let k = gate.targets.len();
    let local_dim = 1usize << k;
    let target_mask: u64 = gate.targets.iter().map(|&t| 1u64 << t).sum();
    // Offsets of each local basis state relative to the base index.
    let offsets: Vec<u64> = (0..local_dim as u64)
        .map(|l| {
            gate.targets
                .iter()
                .enumerate()
                .filter(|(t, _)| bit(l, *t))
                .map(|(_, &q)| 1u64 << q)
                .sum()
        })
        .collect();
    let mut out = vec![ZERO; state.amps.len()];
    let mut local = vec![ZERO; local_dim];
    for base in 0..state.amps.len() as u64 {
        if base & target_mask != 0 {
            continue;
        }
        for (l, off) in offsets.iter().enumerate() {
            local[l] = state.amps[(base | off) as usize];
        }
        for (r, off) in offsets.iter().enumerate() {
            let mut acc = ZERO;
            for (c, a) in local.iter().enumerate() {
                acc += gate.matrix[(r, c)] * a;
            }
            out[(base | off) as usize] = acc;
        }
    }
    Ok(StateVector {
        n_qubits: state.n_qubits,
        amps: out,
    })
}

/// Qubits kept in subsystem A; local index `t` of A is global qubit `keep[t]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemMap {
    keep: Vec<usize>,
    total: usize,
}

impl SubsystemMap {
    pub fn new(keep: Vec<usize>, total: usize) -> Result<Self> {
        if keep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "subsystem qubits must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = keep.last() {
            if last >= total {
                return Err(Error::TargetOutOfRange {
                    target: last,
                    n_qubits: total,
                });
            }
        }
        Ok(Self { keep, total })
    }

    pub fn keep(&self) -> &[usize] {
        &self.keep
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn complement(&self) -> SubsystemMap {
        let keep = (0..self.total).filter(|q| !self.keep.contains(q)).collect();
        SubsystemMap {
            keep,
            total: self.total,
        }
    }

    /// Split a global index into (subsystem index, environment index).
    pub fn split(&self, index: u64) -> (u64, u64) {
        let mut sub = 0u64;
        let mut env = 0u64;
        let mut env_pos = 0;
        let mut k = 0;
        for q in 0..self.total {
            if k < self.keep.len() && self.keep[k] == q {
                sub |= ((index >> q) & 1) << k;
                k += 1;
            } else {
                env |= ((index >> q) & 1) << env_pos;
                env_pos += 1;
            }
        }
        (sub, env)
    }
}

/// Reduced density matrix `Tr_Ā |ψ⟩⟨ψ|` from a list of basis amplitudes.
pub fn partial_trace_entries(
    entries: &[(u64, C64)],
    n_qubits: usize,
    map: &SubsystemMap,
) -> Result<CMatrix> {
    if map.total != n_qubits {
        return Err(Error::DimensionMismatch(format!(
            "map over {} qubits applied to a {}-qubit state",
            map.total, n_qubits
        )));
    }
    let dim_a = 1usize << map.keep.len();
    let mut by_env: std::collections::BTreeMap<u64, Vec<(usize, C64)>> = Default::default();
    for &(idx, amp) in entries {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let (sub, env) = map.split(idx);
        by_env.entry(env).or_default().push((sub as usize, amp));
    }
    let mut rho = CMatrix::zeros(dim_a, dim_a);
    for group in by_env.values() {
        for &(a, x) in group {
            for &(b, y) in group {
                rho[(a, b)] += x * y.conj();
            }
        }
    }
    Ok(rho)
}

pub fn partial_trace(state: &StateVector, map: &SubsystemMap) -> Result<CMatrix> {
    let entries: Vec<(u64, C64)> = state
        .amps
        .iter()
        .enumerate()
        .map(|(i, &a)| (i as u64, a))
        .collect();
    partial_trace_entries(&entries, state.n_qubits, map)
}

pub fn partial_trace_sparse(state: &SparseState, map: &SubsystemMap) -> Result<CMatrix> {
    partial_trace_entries(&state.entries, state.n_qubits, map)
}

//! Symmetry-preserving random circuits.
//!
//! Every gate used here either multiplies a basis state by a phase or mixes
//! it with exactly one partner state through a 2×2 unitary. That keeps the
//! simulation cheap: block unitaries are built by row operations inside each
//! sector, and a gate that would pair states from different sectors is
//! detected as a symmetry violation.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{bit, CMatrix, DenseOperator, StateVector, C64, ONE, ZERO};
use crate::sectors::{ModelKind, SectorPartition, SubsystemGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub phi: f64,
    pub delta: f64,
}

impl GateParams {
    pub const IDENTITY: GateParams = GateParams {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
        theta: 0.0,
        phi: 0.0,
        delta: 0.0,
    };

    /// The mixing matrix `[[e^{i(α+γ)}c, e^{-i(α-γ)}s], [-e^{i(α-γ)}s, e^{-i(α+γ)}c]]`.
    pub fn u1(&self) -> [[C64; 2]; 2] {
        let (s, c) = self.beta.sin_cos();
        [
            [
                C64::from_polar(c, self.alpha + self.gamma),
                C64::from_polar(s, -(self.alpha - self.gamma)),
            ],
            [
                -C64::from_polar(s, self.alpha - self.gamma),
                C64::from_polar(c, -(self.alpha + self.gamma)),
            ],
        ]
    }

    /// ZXZ form `[[e^{i(α+γ)}c, i e^{-i(α-γ)}s], [i e^{i(α-γ)}s, e^{-i(α+γ)}c]]`.
    pub fn zxz(&self) -> [[C64; 2]; 2] {
        let (s, c) = self.beta.sin_cos();
        [
            [
                C64::from_polar(c, self.alpha + self.gamma),
                C64::from_polar(s, -(self.alpha - self.gamma) + PI / 2.0),
            ],
            [
                C64::from_polar(s, self.alpha - self.gamma + PI / 2.0),
                C64::from_polar(c, -(self.alpha + self.gamma)),
            ],
        ]
    }
}

/// Angles of a Haar-random 2×2 unitary: `|u₁₁|² = cos²β` is uniform on
/// `[0, 1]`, all phases uniform.
pub fn sample_cue2(rng: &mut impl Rng) -> GateParams {
    let v: f64 = rng.random();
    let mut phase = || rng.random::<f64>() * 2.0 * PI;
    GateParams {
        beta: v.sqrt().acos(),
        alpha: phase(),
        gamma: phase(),
        theta: phase(),
        phi: phase(),
        delta: phase(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gate {
    /// Number-conserving two-qubit gate on `(j1, j2)`.
    Pn { targets: [usize; 2], params: GateParams },
    /// Gauge-invariant hop between matter qubits `j1` and `j2`, flipping
    /// the intermediate `links`.
    Gauge {
        j1: usize,
        j2: usize,
        links: Vec<usize>,
        params: GateParams,
    },
    /// Plaquette rotation: `R_z(γ)_leg · exp(iβ XXXX) · R_z(α)_leg`.
    Plaquette {
        targets: [usize; 4],
        leg: usize,
        params: GateParams,
    },
}

/// Effect of a gate on one computational basis state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Phase(C64),
    /// Mixed with `partner`; `first` marks the state holding the first row
    /// of the 2×2 matrix.
    Pair { partner: u64, first: bool },
}

impl Gate {
    pub fn targets(&self) -> Vec<usize> {
        match self {
            Gate::Pn { targets, .. } => targets.to_vec(),
            Gate::Gauge { j1, j2, links, .. } => {
                let mut t = vec![*j1];
                t.extend(links);
                t.push(*j2);
                t
            }
            Gate::Plaquette { targets, .. } => targets.to_vec(),
        }
    }

    pub fn params(&self) -> &GateParams {
        match self {
            Gate::Pn { params, .. } | Gate::Gauge { params, .. } | Gate::Plaquette { params, .. } => params,
        }
    }

    #[inline]
    pub fn action(&self, b: u64) -> Action {
        match self {
            Gate::Pn { targets: [j1, j2], params } => hop_action(b, *j1, *j2, 0, params),
            Gate::Gauge { j1, j2, links, params } => {
                let mask = links.iter().fold(0u64, |m, &l| m | 1 << l);
                hop_action(b, *j1, *j2, mask, params)
            }
            Gate::Plaquette { targets, leg, .. } => {
                let mask = targets.iter().fold(0u64, |m, &l| m | 1 << l);
                Action::Pair {
                    partner: b ^ mask,
                    first: !bit(b, targets[*leg]),
                }
            }
        }
    }

    /// The 2×2 matrix applied to `(first, second)` pair amplitudes.
    pub fn pair_matrix(&self) -> [[C64; 2]; 2] {
        match self {
            Gate::Pn { params, .. } | Gate::Gauge { params, .. } => params.u1(),
            Gate::Plaquette { params, .. } => {
                let g = C64::from_polar(1.0, params.delta);
                let m = params.zxz();
                [[g * m[0][0], g * m[0][1]], [g * m[1][0], g * m[1][1]]]
            }
        }
    }

    /// Dense matrix on the gate's own targets (local bit t ↔ `targets()[t]`).
    pub fn to_dense(&self) -> Result<DenseOperator> {
        let targets = self.targets();
        let k = targets.len();
        let dim = 1usize << k;
        let m2 = self.pair_matrix();
        let to_global = |local: usize| -> u64 {
            (0..k).fold(0u64, |g, t| g | (((local >> t) & 1) as u64) << targets[t])
        };
        let to_local = |global: u64| -> usize {
            (0..k).fold(0usize, |l, t| l | (bit(global, targets[t]) as usize) << t)
        };
        let mut m = CMatrix::zeros(dim, dim);
        for col in 0..dim {
            let b = to_global(col);
            match self.action(b) {
                Action::Phase(c) => m[(col, col)] = c,
                Action::Pair { partner, first } => {
                    let p = to_local(partner);
                    let (own, other) = if first { (0, 1) } else { (1, 0) };
                    m[(col, col)] = m2[own][own];
                    m[(p, col)] = m2[other][own];
                }
            }
        }
        DenseOperator::new(m, targets)
    }
}

#[inline]
fn hop_action(b: u64, j1: usize, j2: usize, links: u64, p: &GateParams) -> Action {
    match (bit(b, j1), bit(b, j2)) {
        (false, false) => Action::Phase(C64::from_polar(1.0, p.theta)),
        (true, true) => Action::Phase(C64::from_polar(1.0, p.phi)),
        (first, _) => Action::Pair {
            partner: b ^ (1 << j1) ^ (1 << j2) ^ links,
            first,
        },
    }
}

/// Number-conserving gate in the basis `bit(j1) + 2·bit(j2)`:
/// `diag(e^{iθ}, [u₁], e^{iφ})`.
pub fn build_pn_gate(j1: usize, j2: usize, params: GateParams) -> Result<DenseOperator> {
    if j1 == j2 {
        return Err(Error::DuplicateTarget(j1));
    }
    Gate::Pn {
        targets: [j1, j2],
        params,
    }
    .to_dense()
}

/// Wilson-line gate between matter qubits `j1`, `j2` over `links`.
pub fn build_gauge_gate(j1: usize, j2: usize, links: &[usize], params: GateParams) -> Result<DenseOperator> {
    if j1 == j2 {
        return Err(Error::InvalidParameter("gauge gate needs two distinct sites".into()));
    }
    Gate::Gauge {
        j1,
        j2,
        links: links.to_vec(),
        params,
    }
    .to_dense()
}

pub fn build_plaquette_gate(targets: [usize; 4], leg: usize, params: GateParams) -> Result<DenseOperator> {
    if leg > 3 {
        return Err(Error::InvalidParameter(format!("plaquette leg {leg}")));
    }
    Gate::Plaquette { targets, leg, params }.to_dense()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Pn2q,
    GaugeWilson,
    Gauge3q,
    Plaquette2d,
}

impl Scheme {
    /// Depth at which blocks are Haar-random to good approximation.
    pub fn default_layers(self) -> usize {
        match self {
            Scheme::Pn2q => 128,
            Scheme::GaugeWilson | Scheme::Gauge3q => 32,
            Scheme::Plaquette2d => 64,
        }
    }

    pub fn model(self) -> ModelKind {
        match self {
            Scheme::Pn2q => ModelKind::Pn,
            Scheme::GaugeWilson | Scheme::Gauge3q => ModelKind::Z2OneD,
            Scheme::Plaquette2d => ModelKind::Z2TwoD,
        }
    }
}

/// How two-qubit gates are placed within a pn layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Every pair once per layer, in random order.
    #[default]
    AllPairs,
    /// One random perfect matching per layer.
    Matching,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub scheme: Scheme,
    pub layers: usize,
    pub n_e: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub pairing: Pairing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n_qubits: usize,
    pub layers: usize,
    pub gates: Vec<Gate>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent stream for `(master_seed, index)` within a named domain.
pub fn stream_rng(master_seed: u64, index: u64, domain: &str) -> ChaCha8Rng {
    let tag = domain
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, c| (h ^ c as u64).wrapping_mul(0x100_0000_01b3));
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(master_seed ^ tag) ^ index))
}

fn sample_pn_layers(
    qubits: &[usize],
    layers: usize,
    pairing: Pairing,
    rng: &mut impl Rng,
    gates: &mut Vec<Gate>,
) {
    let n = qubits.len();
    for _ in 0..layers {
        let mut active = qubits.to_vec();
        match pairing {
            Pairing::AllPairs => {
                if n % 2 == 1 {
                    let drop = rng.random_range(0..n);
                    active.remove(drop);
                }
                let mut pairs: Vec<[usize; 2]> = Vec::new();
                for a in 0..active.len() {
                    for b in a + 1..active.len() {
                        pairs.push([active[a], active[b]]);
                    }
                }
                pairs.shuffle(rng);
                for targets in pairs {
                    gates.push(Gate::Pn {
                        targets,
                        params: sample_cue2(rng),
                    });
                }
            }
            Pairing::Matching => {
                active.shuffle(rng);
                for pair in active.chunks_exact(2) {
                    gates.push(Gate::Pn {
                        targets: [pair[0], pair[1]],
                        params: sample_cue2(rng),
                    });
                }
            }
        }
    }
}

/// Sample circuit number `index` of the ensemble acting on subsystem `A`.
pub fn sample_circuit(geom: &SubsystemGeometry, config: &EnsembleConfig, index: u64) -> Result<Circuit> {
    if config.scheme.model() != geom.kind {
        return Err(Error::InvalidParameter(format!(
            "scheme {:?} does not act on a {:?} subsystem",
            config.scheme, geom.kind
        )));
    }
    let mut rng = stream_rng(config.master_seed, index, "circuit");
    let mut gates = Vec::new();
    match config.scheme {
        Scheme::Pn2q => {
            let qubits = geom.matter_qubits();
            if qubits.len() < 2 {
                return Err(Error::InvalidParameter("pn circuits need n >= 2".into()));
            }
            sample_pn_layers(&qubits, config.layers, config.pairing, &mut rng, &mut gates);
        }
        Scheme::Gauge3q => {
            let mut triples = geom.gauge_triples();
            for _ in 0..config.layers {
                triples.shuffle(&mut rng);
                for &[j1, link, j2] in &triples {
                    gates.push(Gate::Gauge {
                        j1,
                        j2,
                        links: vec![link],
                        params: sample_cue2(&mut rng),
                    });
                }
            }
        }
        Scheme::GaugeWilson => {
            let matter = geom.matter_qubits();
            let mut pairs: Vec<(usize, usize)> = Vec::new();
            for a in 0..matter.len() {
                for b in a + 1..matter.len() {
                    pairs.push((a, b));
                }
            }
            for _ in 0..config.layers {
                pairs.shuffle(&mut rng);
                for &(a, b) in &pairs {
                    // Links sit between consecutive matter qubits.
                    let links = (matter[a] + 1..matter[b]).filter(|q| (geom.matter >> q) & 1 == 0).collect();
                    gates.push(Gate::Gauge {
                        j1: matter[a],
                        j2: matter[b],
                        links,
                        params: sample_cue2(&mut rng),
                    });
                }
            }
        }
        Scheme::Plaquette2d => {
            let plaquettes = geom.plaquettes();
            for _ in 0..config.layers {
                for parity in [0, 1] {
                    for p in plaquettes.iter().filter(|p| (p.jx + p.jy) % 2 == parity) {
                        let leg = rng.random_range(0..4);
                        gates.push(Gate::Plaquette {
                            targets: p.qubits,
                            leg,
                            params: sample_cue2(&mut rng),
                        });
                    }
                }
            }
        }
    }
    Ok(Circuit {
        n_qubits: geom.n_qubits(),
        layers: config.layers,
        gates,
    })
}

impl Circuit {
    /// Apply to a state on the circuit's register.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if state.n_qubits() != self.n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "circuit on {} qubits, state on {}",
                self.n_qubits,
                state.n_qubits()
            )));
        }
        let mut amps = state.amplitudes().to_vec();
        for gate in &self.gates {
            let m = gate.pair_matrix();
            for b in 0..amps.len() as u64 {
                match gate.action(b) {
                    Action::Phase(c) => amps[b as usize] *= c,
                    Action::Pair { partner, first: true } => {
                        let (x, y) = (amps[b as usize], amps[partner as usize]);
                        amps[b as usize] = m[0][0] * x + m[0][1] * y;
                        amps[partner as usize] = m[1][0] * x + m[1][1] * y;
                    }
                    Action::Pair { .. } => {}
                }
            }
        }
        StateVector::new(self.n_qubits, amps)
    }

    /// Full `2^n × 2^n` unitary; for tests and small registers.
    pub fn unitary(&self) -> Result<CMatrix> {
        let dim = 1usize << self.n_qubits;
        let mut u = CMatrix::zeros(dim, dim);
        for col in 0..dim {
            let out = self.apply(&StateVector::basis(self.n_qubits, col as u64))?;
            u.set_column(col, &nalgebra::DVector::from_column_slice(out.amplitudes()));
        }
        Ok(u)
    }

    /// Per-sector unitaries `U_s`, built by row operations inside each block.
    ///
    /// Fails if any gate pairs states from different sectors or leaves the
    /// physical support.
    pub fn block_unitaries(&self, partition: &SectorPartition) -> Result<Vec<CMatrix>> {
        if partition.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "circuit on {} qubits, partition on {}",
                self.n_qubits, partition.n_qubits
            )));
        }
        (0..partition.sectors.len())
            .map(|s| self.block_unitary(partition, s))
            .collect()
    }

    /// The unitary of sector `s` alone.
    pub fn block_unitary(&self, partition: &SectorPartition, s: usize) -> Result<CMatrix> {
        let sector = &partition.sectors[s];
        let d = sector.dim();
        // Row-major so row operations touch contiguous memory.
        let mut u = vec![ZERO; d * d];
        for k in 0..d {
            u[k * d + k] = ONE;
        }
        for gate in &self.gates {
            let m = gate.pair_matrix();
            for (k, &b) in sector.basis.iter().enumerate() {
                match gate.action(b) {
                    Action::Phase(c) => u[k * d..(k + 1) * d].iter_mut().for_each(|x| *x *= c),
                    Action::Pair { partner, first: true } => {
                        let k2 = match partition.locate(partner) {
                            Some((s2, k2)) if s2 == s => k2,
                            _ => return Err(Error::BlockLeakage(1.0)),
                        };
                        let (lo, hi, m) = if k < k2 {
                            (k, k2, m)
                        } else {
                            (k2, k, [[m[1][1], m[1][0]], [m[0][1], m[0][0]]])
                        };
                        let (head, tail) = u.split_at_mut(hi * d);
                        let r0 = &mut head[lo * d..(lo + 1) * d];
                        let r1 = &mut tail[..d];
                        for (x, y) in r0.iter_mut().zip(r1.iter_mut()) {
                            let (a, b) = (*x, *y);
                            *x = m[0][0] * a + m[0][1] * b;
                            *y = m[1][0] * a + m[1][1] * b;
                        }
                    }
                    Action::Pair { partner, first: false } => {
                        if partition.locate(partner).map(|x| x.0) != Some(s) {
                            return Err(Error::BlockLeakage(1.0));
                        }
                    }
                }
            }
        }
        Ok(DMatrix::from_row_slice(d, d, &u))
    }
}

/// Haar-random `d × d` unitary: QR of a complex Ginibre matrix with the
/// phases of `R`'s diagonal moved into `Q`.
pub fn haar_unitary(d: usize, rng: &mut impl Rng) -> CMatrix {
    let z = CMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { ONE };
        q.column_mut(j).iter_mut().for_each(|x| *x *= phase);
    }
    q
}

/// Source of per-sector unitaries indexed by circuit number.
#[derive(Debug, Clone, PartialEq)]
pub enum UnitarySource {
    Circuits(EnsembleConfig),
    /// Independent Haar unitary in every block (the deep-circuit limit).
    Haar { master_seed: u64 },
    /// The identity on every block; the non-random reference.
    Identity,
}

impl UnitarySource {
    pub fn blocks(&self, geom: &SubsystemGeometry, partition: &SectorPartition, index: u64) -> Result<Vec<CMatrix>> {
        match self {
            UnitarySource::Circuits(cfg) => sample_circuit(geom, cfg, index)?.block_unitaries(partition),
            UnitarySource::Haar { .. } => (0..partition.sectors.len())
                .map(|s| self.block(geom, partition, index, s))
                .collect(),
            UnitarySource::Identity => Ok(partition
                .sectors
                .iter()
                .map(|s| CMatrix::identity(s.dim(), s.dim()))
                .collect()),
        }
    }

    /// The unitary of one sector; equal to `blocks(..)[s]`.
    pub fn block(&self, geom: &SubsystemGeometry, partition: &SectorPartition, index: u64, s: usize) -> Result<CMatrix> {
        let d = partition.sectors[s].dim();
        match self {
            UnitarySource::Circuits(cfg) => sample_circuit(geom, cfg, index)?.block_unitary(partition, s),
            UnitarySource::Haar { master_seed } => {
                let mut rng = stream_rng(*master_seed, index, &format!("haar/{s}"));
                Ok(haar_unitary(d, &mut rng))
            }
            UnitarySource::Identity => Ok(CMatrix::identity(d, d)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{apply_gate, commutator_norm, kron, max_abs, pauli_x, pauli_y, pauli_z, unitarity_error};
    use crate::models::{BoundaryCondition, Z2Lattice};
    use crate::sectors::enumerate_sectors;

    fn expi(h: &CMatrix, t: f64) -> CMatrix {
        // exp(i t H) for Hermitian H.
        let (vals, vecs) = crate::hilbert::eigh(h);
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            vals.len(),
            vals.iter().map(|&v| C64::from_polar(1.0, t * v)),
        ));
        &vecs * d * vecs.adjoint()
    }

    // Physical Paulis in the (bit 0 = down, bit 1 = up) convention.
    fn sz() -> CMatrix {
        -pauli_z()
    }
    fn sy() -> CMatrix {
        -pauli_y()
    }
    fn eye(n: usize) -> CMatrix {
        CMatrix::identity(n, n)
    }
    fn cphase(x: f64) -> CMatrix {
        // Control on local qubit 0, phase on qubit 1: only |11> picks e^{ix}.
        let mut m = eye(4);
        m[(3, 3)] = C64::from_polar(1.0, x);
        m
    }

    /// Gate sequence: Z rotations, the β mixer, Z rotations, then the
    /// controlled phases (the second conjugated by X on both qubits).
    fn pn_sequence(p: &GateParams) -> CMatrix {
        // Local qubit 0 = j1 (low bit), so operators are kron(op_j2, op_j1).
        let za = kron(&expi(&sz(), -p.alpha / 2.0), &expi(&sz(), p.alpha / 2.0));
        let zg = kron(&expi(&sz(), -p.gamma / 2.0), &expi(&sz(), p.gamma / 2.0));
        let gen = kron(&pauli_x(), &sy()) - kron(&sy(), &pauli_x());
        let mixer = expi(&gen, p.beta / 2.0);
        let xx = kron(&pauli_x(), &pauli_x());
        let phases = &xx * cphase(p.theta) * &xx * cphase(p.phi);
        phases * zg * mixer * za
    }

    fn random_params(rng: &mut impl Rng) -> GateParams {
        sample_cue2(rng)
    }

    #[test]
    fn cue2_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut cos2 = 0.0;
        let mut u11 = C64::new(0.0, 0.0);
        let mut samples: Vec<f64> = Vec::with_capacity(n);
        for _ in 0..n {
            let p = sample_cue2(&mut rng);
            let m = p.u1();
            cos2 += p.beta.cos().powi(2);
            u11 += m[0][0];
            samples.push(m[0][0].norm_sqr());
        }
        assert!((cos2 / n as f64 - 0.5).abs() < 0.01);
        assert!((u11 / n as f64).norm() < 0.01);
        samples.sort_by(f64::total_cmp);
        let ks = samples
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).abs().max((x - i as f64 / n as f64).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn pn_gate_identity_and_block_structure() {
        let g = build_pn_gate(0, 1, GateParams::IDENTITY).unwrap();
        assert!(max_abs(&(g.matrix.clone() - eye(4))) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let number = kron(&eye(2), &sz()) + kron(&sz(), &eye(2));
        for _ in 0..100 {
            let g = build_pn_gate(0, 1, random_params(&mut rng)).unwrap();
            assert_eq!(g.matrix[(1, 0)], ZERO);
            assert_eq!(g.matrix[(2, 0)], ZERO);
            assert_eq!(g.matrix[(0, 1)], ZERO);
            assert_eq!(g.matrix[(0, 2)], ZERO);
            assert!(commutator_norm(&g.matrix, &number) < 1e-14);
            assert!(g.unitarity_error() < 1e-12);
        }
    }

    #[test]
    fn pn_gate_matches_gate_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = random_params(&mut rng);
            let g = build_pn_gate(0, 1, p).unwrap();
            assert!(max_abs(&(g.matrix - pn_sequence(&p))) < 1e-12);
        }
    }

    #[test]
    fn gauge_gate_matches_wilson_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Qubits: j1 = 0, links 1 and 2, j2 = 3.
        for _ in 0..20 {
            let p = random_params(&mut rng);
            let g = build_gauge_gate(0, 3, &[1, 2], p).unwrap();
            let w = kron(&pauli_x(), &pauli_x());
            let sx = pauli_x();
            // Local order (low to high): j1, link, link, j2.
            let a = kron(&kron(&sx, &w), &sy());
            let b = kron(&kron(&sy(), &w), &sx);
            let mixer = expi(&(a - b), p.beta / 2.0);
            let z = |t: f64| kron(&kron(&expi(&sz(), -t / 2.0), &eye(4)), &expi(&sz(), t / 2.0));
            // Phases act on the matter pair only.
            let x2 = kron(&kron(&pauli_x(), &eye(4)), &pauli_x());
            let cp = |x: f64| {
                let mut m = eye(16);
                for i in 0..16 {
                    if i & 1 == 1 && i & 8 == 8 {
                        m[(i, i)] = C64::from_polar(1.0, x);
                    }
                }
                m
            };
            let want = &x2 * cp(p.theta) * &x2 * cp(p.phi) * z(p.gamma) * mixer * z(p.alpha);
            assert!(max_abs(&(g.matrix - want)) < 1e-12);
        }
        let id = build_gauge_gate(0, 2, &[1], GateParams::IDENTITY).unwrap();
        assert!(max_abs(&(id.matrix - eye(8))) < 1e-15);
        assert!(build_gauge_gate(1, 1, &[], GateParams::IDENTITY).is_err());
    }

    #[test]
    fn gauge_gate_commutes_with_gauss_laws() {
        // Chain of 3 sites, periodic: qubits m0 l01 m1 l12 m2 l20.
        let (_, gauss) = crate::models::build_z2_1d(&crate::models::Z2MatterParams { n_sites: 4, a: 1.0, m: 1.0, e: 1.0 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let g = build_gauge_gate(2, 6, &[3, 5], random_params(&mut rng)).unwrap();
            let full = g.embed(8).unwrap();
            for op in &gauss {
                assert!(commutator_norm(&full, &op.to_dense(8)) < 1e-12);
            }
        }
    }

    #[test]
    fn plaquette_gate_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xxxx = kron(&kron(&pauli_x(), &pauli_x()), &kron(&pauli_x(), &pauli_x()));
        for leg in 0..4 {
            let p = random_params(&mut rng);
            let g = build_plaquette_gate([0, 1, 2, 3], leg, p).unwrap();
            let zleg = (0..4).rev().fold(eye(1), |acc, q| kron(&acc, &if q == leg { pauli_z() } else { eye(2) }));
            let want = expi(&zleg, p.gamma) * expi(&xxxx, p.beta) * expi(&zleg, p.alpha) * C64::from_polar(1.0, p.delta);
            assert!(max_abs(&(g.matrix - want)) < 1e-12);
        }
        let p = GateParams { beta: 0.0, ..random_params(&mut rng) };
        let g = build_plaquette_gate([0, 1, 2, 3], 2, p).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                if r != c {
                    assert!(g.matrix[(r, c)].norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn pair_action_agrees_with_dense_gates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let geom = SubsystemGeometry::pn(5, 5).unwrap();
        let cfg = EnsembleConfig { scheme: Scheme::Pn2q, layers: 2, n_e: 1, master_seed: 9, pairing: Pairing::AllPairs };
        let c = sample_circuit(&geom, &cfg, 0).unwrap();
        let amps: Vec<C64> = (0..32).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let mut psi = StateVector::new(5, amps).unwrap();
        psi.normalize();
        let fast = c.apply(&psi).unwrap();
        let mut slow = psi.clone();
        for g in &c.gates {
            slow = apply_gate(&slow, &g.to_dense().unwrap()).unwrap();
        }
        let diff = fast.amplitudes().iter().zip(slow.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
        assert!((fast.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_layers_is_identity() {
        let geom = SubsystemGeometry::pn(4, 4).unwrap();
        let cfg = EnsembleConfig { scheme: Scheme::Pn2q, layers: 0, n_e: 1, master_seed: 1, pairing: Pairing::AllPairs };
        let u = sample_circuit(&geom, &cfg, 0).unwrap().unitary().unwrap();
        assert!(max_abs(&(u - eye(16))) < 1e-15);
        let g1 = SubsystemGeometry::z2_1d(6, 3).unwrap();
        let cfg = EnsembleConfig { scheme: Scheme::Gauge3q, ..cfg };
        assert!(sample_circuit(&g1, &cfg, 0).unwrap().gates.is_empty());
    }

    fn check_symmetric(geom: &SubsystemGeometry, cfg: &EnsembleConfig, count: u64) {
        let partition = enumerate_sectors(geom).unwrap();
        let n = geom.n_qubits();
        // Diagonal symmetry operators as eigenvalue lists: [U, D]_rc = U_rc (d_c - d_r).
        let mut ops: Vec<Vec<f64>> = geom
            .symmetry_ops()
            .iter()
            .map(|z| (0..1u64 << n).map(|b| z.eigenvalue(b) as f64).collect())
            .collect();
        if geom.matter != 0 {
            ops.push((0..1u64 << n).map(|b| (b & geom.matter).count_ones() as f64).collect());
        }
        for i in 0..count {
            let c = sample_circuit(geom, cfg, i).unwrap();
            let u = c.unitary().unwrap();
            for d in &ops {
                let mut comm: f64 = 0.0;
                for col in 0..u.ncols() {
                    for row in 0..u.nrows() {
                        comm = comm.max((u[(row, col)] * (d[col] - d[row])).norm());
                    }
                }
                assert!(comm < 1e-10);
            }
            let blocks = c.block_unitaries(&partition).unwrap();
            for (s, sector) in partition.sectors.iter().enumerate() {
                assert!(unitarity_error(&blocks[s]) < 1e-10);
                for (r, &br) in sector.basis.iter().enumerate() {
                    for (k, &bc) in sector.basis.iter().enumerate() {
                        assert!((u[(br as usize, bc as usize)] - blocks[s][(r, k)]).norm() < 1e-12);
                    }
                }
            }
            // Nothing leaks between blocks or out of the support.
            for c in 0..1u64 << n {
                for r in 0..1u64 << n {
                    let same = match (partition.locate(r), partition.locate(c)) {
                        (Some(a), Some(b)) => a.0 == b.0,
                        _ => false,
                    };
                    if !same && geom.is_physical(c) {
                        assert!(u[(r as usize, c as usize)].norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn pn_circuits_preserve_particle_number() {
        let geom = SubsystemGeometry::pn(6, 6).unwrap();
        for pairing in [Pairing::AllPairs, Pairing::Matching] {
            let cfg = EnsembleConfig { scheme: Scheme::Pn2q, layers: 8, n_e: 50, master_seed: 11, pairing };
            check_symmetric(&geom, &cfg, 50);
        }
        let odd = SubsystemGeometry::pn(5, 5).unwrap();
        let cfg = EnsembleConfig { scheme: Scheme::Pn2q, layers: 3, n_e: 5, master_seed: 2, pairing: Pairing::AllPairs };
        let c = sample_circuit(&odd, &cfg, 0).unwrap();
        assert_eq!(c.gates.len(), 3 * 6);
        check_symmetric(&odd, &cfg, 5);
    }

    #[test]
    fn gauge_circuits_preserve_sectors() {
        let geom = SubsystemGeometry::z2_1d(10, 5).unwrap();
        for scheme in [Scheme::Gauge3q, Scheme::GaugeWilson] {
            let cfg = EnsembleConfig { scheme, layers: 4, n_e: 50, master_seed: 3, pairing: Pairing::AllPairs };
            check_symmetric(&geom, &cfg, 50);
        }
        // Every gate is (matter, link, matter): no gate touches two links.
        let cfg = EnsembleConfig { scheme: Scheme::Gauge3q, layers: 4, n_e: 1, master_seed: 3, pairing: Pairing::AllPairs };
        for g in sample_circuit(&geom, &cfg, 0).unwrap().gates {
            let t = g.targets();
            assert_eq!(t.len(), 3);
            assert_eq!(t.iter().filter(|&&q| (geom.matter >> q) & 1 == 0).count(), 1);
        }
    }

    #[test]
    fn plaquette_circuits_preserve_sectors() {
        for ybc in [BoundaryCondition::Fixed, BoundaryCondition::Periodic] {
            let lat = Z2Lattice::new(5, 2, ybc).unwrap();
            let geom = SubsystemGeometry::z2_2d(&lat, 3).unwrap();
            let cfg = EnsembleConfig { scheme: Scheme::Plaquette2d, layers: 4, n_e: 50, master_seed: 5, pairing: Pairing::AllPairs };
            check_symmetric(&geom, &cfg, 50);
        }
    }

    #[test]
    fn circuits_are_deterministic_and_serializable() {
        let geom = SubsystemGeometry::pn(6, 6).unwrap();
        let cfg = EnsembleConfig { scheme: Scheme::Pn2q, layers: 3, n_e: 5, master_seed: 42, pairing: Pairing::AllPairs };
        let a = serde_json::to_string(&sample_circuit(&geom, &cfg, 3).unwrap()).unwrap();
        let b = serde_json::to_string(&sample_circuit(&geom, &cfg, 3).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&sample_circuit(&geom, &cfg, 4).unwrap()).unwrap();
        assert_ne!(a, c);
        let back: Circuit = serde_json::from_str(&a).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), a);
    }

    #[test]
    fn haar_unitaries_are_unitary_and_trace_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut tr2 = 0.0;
        let n = 4000;
        for _ in 0..n {
            let u = haar_unitary(5, &mut rng);
            assert!(unitarity_error(&u) < 1e-12);
            tr2 += u.trace().norm_sqr();
        }
        // E|Tr U|² = 1 for Haar; the variance of |Tr U|² is 1 as well.
        assert!((tr2 / n as f64 - 1.0).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn deep_pn_blocks_have_haar_trace_statistics() {
        let geom = SubsystemGeometry::pn(4, 4).unwrap();
        let partition = enumerate_sectors(&geom).unwrap();
        let cfg = EnsembleConfig { scheme: Scheme::Pn2q, layers: 32, n_e: 2000, master_seed: 1, pairing: Pairing::AllPairs };
        let n = 2000;
        let mut tr2 = vec![0.0; partition.sectors.len()];
        for i in 0..n {
            let blocks = sample_circuit(&geom, &cfg, i).unwrap().block_unitaries(&partition).unwrap();
            for (t, b) in tr2.iter_mut().zip(&blocks) {
                *t += b.trace().norm_sqr();
            }
        }
        for (s, t) in partition.sectors.iter().zip(&tr2) {
            if s.dim() > 1 {
                assert!((t / n as f64 - 1.0).abs() < 5.0 / (n as f64).sqrt(), "{} {}", s.label, t / n as f64);
            }
        }
    }
}

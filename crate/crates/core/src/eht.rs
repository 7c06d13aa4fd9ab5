//! Entanglement-Hamiltonian tomography with a Bisognano–Wichmann ansatz.
//!
//! Inside each sector the reduced state is modeled as
//! `ρ̄_s(β) = exp(−Σ_c β_c H_{c,s}) / Z_s`, where `H_c` sums the physical
//! Hamiltonian terms supported in `A` that share a class `c` (term kind and
//! distance to the entanglement cut). The weights `β` are fit sector by
//! sector to normalized randomized-measurement probabilities.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{stream_rng, UnitarySource};
use crate::error::{Error, Result};
use crate::hilbert::CMatrix;
use crate::measurement::{born_probabilities, sample_shots, Shots};
use crate::models::{z2_1d_link_qubit, z2_1d_matter_qubit, Direction, Hamiltonian, Term, ZString};
use crate::optimize::{nelder_mead, polish, NelderMeadConfig};
use crate::sectors::{BlockDensityMatrix, Layout, SectorPartition, SubsystemGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Plaquette,
    Link,
    Hopping,
    Mass,
    Electric,
}

/// Parameter class of the ansatz. Positions are in half lattice spacings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OpClass {
    pub kind: OpKind,
    /// Distance to the nearest cut (2+1d) or position (1+1d).
    pub key: usize,
    /// Row index when translation invariance in y is broken.
    pub jy: Option<usize>,
    /// Distance to the nearest cut, used for the ramp initialization.
    pub dist: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Couplings {
    Z2Chain { a: f64, m: f64, e: f64 },
    Z2Plane { k: f64, g: f64 },
}

#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub n_qubits: usize,
    pub classes: Vec<OpClass>,
    /// `(class index, term on local qubits)`.
    pub terms: Vec<(usize, Term)>,
}

impl OperatorSet {
    fn from_map(n_qubits: usize, map: BTreeMap<OpClass, Vec<Term>>) -> Self {
        let mut classes = Vec::new();
        let mut terms = Vec::new();
        for (c, ts) in map {
            let idx = classes.len();
            classes.push(c);
            terms.extend(ts.into_iter().map(|t| (idx, t)));
        }
        Self { n_qubits, classes, terms }
    }

    /// `H_{c,s}` for every class in every sector.
    pub fn sector_matrices(&self, partition: &SectorPartition) -> Vec<Vec<DMatrix<f64>>> {
        partition
            .sectors
            .iter()
            .map(|sector| {
                (0..self.classes.len())
                    .map(|c| {
                        Hamiltonian {
                            n_qubits: self.n_qubits,
                            terms: self.terms.iter().filter(|t| t.0 == c).map(|t| t.1.clone()).collect(),
                        }
                        .restricted(&sector.basis)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Hamiltonian terms supported in `A`, grouped into ansatz classes.
pub fn bw_operator_set(geom: &SubsystemGeometry, couplings: &Couplings) -> Result<OperatorSet> {
    let mut map: BTreeMap<OpClass, Vec<Term>> = BTreeMap::new();
    match (&geom.layout, *couplings) {
        (Layout::Z2Plane { lattice, nxa }, Couplings::Z2Plane { k, g }) => {
            let span = 2 * (nxa - 1);
            let fixed = lattice.ybc == crate::models::BoundaryCondition::Fixed;
            for (local, &global) in geom.map.keep().iter().enumerate() {
                let (jx, jy, dir) = lattice.links()[global];
                let x2 = match dir {
                    Direction::Y => 2 * jx,
                    Direction::X => 2 * jx + 1,
                };
                let dist = x2.min(span - x2);
                let class = OpClass { kind: OpKind::Link, key: dist, jy: fixed.then_some(jy), dist };
                map.entry(class).or_default().push(Term::Z { coeff: -g, op: ZString::new(&[local], 1) });
            }
            for p in geom.plaquettes() {
                let x2 = 2 * p.jx + 1;
                let dist = x2.min(span - x2);
                let class = OpClass { kind: OpKind::Plaquette, key: dist, jy: fixed.then_some(p.jy), dist };
                let mask = p.qubits.iter().fold(0u64, |m, &q| m | 1 << q);
                map.entry(class).or_default().push(Term::Flip { coeff: -k, mask });
            }
        }
        (&Layout::Z2Chain { n_a, .. }, Couplings::Z2Chain { a, m, e }) => {
            let span = 2 * (n_a - 1);
            let mut add = |kind, x2: usize, t| {
                let class = OpClass { kind, key: x2, jy: None, dist: x2.min(span - x2) };
                map.entry(class).or_default().push(t);
            };
            for j in 0..n_a {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                add(OpKind::Mass, 2 * j, Term::Number { coeff: sign * m, qubit: z2_1d_matter_qubit(j) });
                if j + 1 < n_a {
                    add(OpKind::Electric, 2 * j + 1, Term::Z { coeff: e, op: ZString::new(&[z2_1d_link_qubit(j)], 1) });
                    add(
                        OpKind::Hopping,
                        2 * j + 1,
                        Term::Hop {
                            coeff: 1.0 / (2.0 * a),
                            a: z2_1d_matter_qubit(j),
                            b: z2_1d_matter_qubit(j + 1),
                            links: 1 << z2_1d_link_qubit(j),
                        },
                    );
                }
            }
        }
        _ => {
            return Err(Error::InvalidParameter("couplings do not match the subsystem geometry".into()));
        }
    }
    Ok(OperatorSet::from_map(geom.n_qubits(), map))
}

/// Randomized-measurement data of one sector.
#[derive(Debug, Clone)]
pub struct SectorData {
    pub weight: f64,
    pub unitaries: Vec<CMatrix>,
    /// `P̄_U(b,s) = P_U(b,s)/p_s` per circuit.
    pub pbar: Vec<Vec<f64>>,
}

/// `None` marks sectors without data.
#[derive(Debug, Clone)]
pub struct EhtData {
    pub sectors: Vec<Option<SectorData>>,
}

/// Measure `n_e` circuits, each with `shots` outcomes (or exact
/// probabilities).
pub fn collect_eht_data(
    rho: &BlockDensityMatrix,
    source: &UnitarySource,
    geom: &SubsystemGeometry,
    partition: &SectorPartition,
    n_e: usize,
    shots: Shots,
    shot_seed: u64,
) -> Result<EhtData> {
    let n_sec = partition.sectors.len();
    let per_circuit: Vec<Result<(Vec<CMatrix>, Vec<Vec<f64>>, Vec<f64>)>> = (0..n_e)
        .into_par_iter()
        .map(|i| {
            let blocks = source.blocks(geom, partition, i as u64)?;
            let table = born_probabilities(rho, &blocks)?;
            match shots {
                None => {
                    let w: Vec<f64> = (0..n_sec).map(|s| table.weight(s)).collect();
                    Ok((blocks, table.probs, w))
                }
                Some(n_m) => {
                    let mut rng = stream_rng(shot_seed, i as u64, "eht-shots");
                    let rec = sample_shots(&table, n_m, &mut rng)?;
                    let probs = rec.counts.iter().map(|c| c.iter().map(|&n| n as f64 / n_m as f64).collect()).collect();
                    let w = rec.counts.iter().map(|c| c.iter().sum::<u64>() as f64 / n_m as f64).collect();
                    Ok((blocks, probs, w))
                }
            }
        })
        .collect();
    let mut sectors: Vec<SectorData> = (0..n_sec).map(|_| SectorData { weight: 0.0, unitaries: vec![], pbar: vec![] }).collect();
    for item in per_circuit {
        let (blocks, probs, w) = item?;
        for (s, (u, p)) in blocks.into_iter().zip(probs).enumerate() {
            sectors[s].weight += w[s] / n_e as f64;
            if w[s] > 0.0 {
                sectors[s].pbar.push(p.iter().map(|x| x / w[s]).collect());
                sectors[s].unitaries.push(u);
            }
        }
    }
    Ok(EhtData {
        sectors: sectors
            .into_iter()
            .map(|d| (d.weight > crate::sectors::POPULATED && !d.pbar.is_empty()).then_some(d))
            .collect(),
    })
}

/// χ² of one sector as a function of a real symmetric `ρ̄`.
///
/// The model probabilities are linear in the upper triangle of `ρ̄`, so the
/// least-squares problem is reduced once by a QR factorization and each
/// evaluation costs one triangular product.
#[derive(Debug, Clone)]
pub struct Chi2 {
    pub d: usize,
    pub n_e: usize,
    r: DMatrix<f64>,
    z: DVector<f64>,
    base: f64,
}

impl Chi2 {
    pub fn new(data: &SectorData) -> Result<Self> {
        let n_e = data.unitaries.len();
        if n_e == 0 {
            return Err(Error::InsufficientData("sector without measurements".into()));
        }
        let d = data.unitaries[0].nrows();
        let cols = d * (d + 1) / 2;
        let rows = n_e * d;
        let mut a = DMatrix::<f64>::zeros(rows, cols);
        let mut p = DVector::<f64>::zeros(rows);
        for (e, (u, pb)) in data.unitaries.iter().zip(&data.pbar).enumerate() {
            for b in 0..d {
                let row = e * d + b;
                p[row] = pb[b];
                let mut col = 0;
                for r in 0..d {
                    for c in r..d {
                        let v = u[(b, r)] * u[(b, c)].conj();
                        a[(row, col)] = if r == c { v.re } else { 2.0 * v.re };
                        col += 1;
                    }
                }
            }
        }
        let qr = a.qr();
        let q = qr.q();
        let r = qr.r();
        let z = q.transpose() * &p;
        let base = (&p - &q * &z).norm_squared();
        Ok(Self { d, n_e, r, z, base })
    }

    pub fn eval(&self, rho_bar: &DMatrix<f64>) -> f64 {
        let d = self.d;
        let mut x = DVector::<f64>::zeros(d * (d + 1) / 2);
        let mut col = 0;
        for r in 0..d {
            for c in r..d {
                x[col] = rho_bar[(r, c)];
                col += 1;
            }
        }
        ((&self.r * x - &self.z).norm_squared() + self.base) / self.n_e as f64
    }
}

/// `exp(−H)/Z` for real symmetric `H`, and its eigenvalues (ascending in
/// `H`, so descending in `ρ̄`).
pub fn gibbs(h: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let d = h.nrows();
    let eig = SymmetricEigen::new(h.clone());
    let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = eig.eigenvalues.iter().map(|l| (-(l - lmin)).exp()).collect();
    let z: f64 = w.iter().sum();
    let mut rho = DMatrix::<f64>::zeros(d, d);
    for k in 0..d {
        let v = eig.eigenvectors.column(k);
        rho += (w[k] / z) * v * v.transpose();
    }
    let mut p: Vec<f64> = w.iter().map(|x| x / z).collect();
    p.sort_by(|a, b| b.total_cmp(a));
    (rho, p)
}

fn combine(mats: &[DMatrix<f64>], beta: &[f64]) -> DMatrix<f64> {
    let d = mats.first().map_or(0, |m| m.nrows());
    let mut h = DMatrix::<f64>::zeros(d, d);
    for (m, b) in mats.iter().zip(beta) {
        h += m * *b;
    }
    h
}

/// `ρ̄_s(β)`.
pub fn ansatz_state(mats: &[DMatrix<f64>], beta: &[f64]) -> DMatrix<f64> {
    gibbs(&combine(mats, beta)).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub starts: usize,
    pub simplex: NelderMeadConfig,
    pub polish_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            simplex: NelderMeadConfig { max_evals: 3000, ..Default::default() },
            polish_iterations: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorFit {
    pub beta: Vec<f64>,
    pub chi2: f64,
    pub evals: usize,
    pub converged: bool,
    /// Eigenvalues of `ρ̄_s(β)`, descending.
    pub spectrum: Vec<f64>,
}

/// Initial points: BW ramps of several slopes, two uniform starts and zero.
fn starting_points(classes: &[OpClass], n: usize) -> Vec<Vec<f64>> {
    let ramp = |b0: f64| classes.iter().map(|c| b0 * (c.dist as f64 / 2.0 + 0.5)).collect::<Vec<_>>();
    let mut out = vec![ramp(1.0), vec![1.0; classes.len()], ramp(3.0), vec![0.0; classes.len()], ramp(0.3), vec![4.0; classes.len()], ramp(8.0), ramp(-1.0)];
    out.truncate(n.max(1));
    out
}

/// Minimize χ² of one sector over `β`.
pub fn fit_sector(chi2: &Chi2, mats: &[DMatrix<f64>], classes: &[OpClass], cfg: &FitConfig) -> SectorFit {
    let f = |beta: &[f64]| chi2.eval(&ansatz_state(mats, beta));
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut evals = 0;
    for x0 in starting_points(classes, cfg.starts) {
        let m = nelder_mead(f, &x0, &cfg.simplex);
        evals += m.evals;
        if best.as_ref().is_none_or(|b| m.f < b.1) {
            best = Some((m.x, m.f, m.converged));
        }
    }
    let (x, fx, converged) = best.unwrap_or((vec![], f(&[]), true));
    let p = polish(f, &x, cfg.polish_iterations, 1e-6);
    evals += p.evals;
    let (beta, value) = if p.f <= fx { (p.x, p.f) } else { (x, fx) };
    let spectrum = gibbs(&combine(mats, &beta)).1;
    SectorFit { beta, chi2: value, evals, converged, spectrum }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhResult {
    pub classes: Vec<OpClass>,
    /// `None` for sectors without data.
    pub fits: Vec<Option<SectorFit>>,
    pub weights: Vec<f64>,
    pub max_block_dim: usize,
}

impl EhResult {
    pub fn total_chi2(&self) -> f64 {
        self.fits.iter().flatten().map(|f| f.chi2).sum()
    }

    /// Schmidt values `P_{s,λ} = p_s · eig(ρ̄_s)` with sector tags.
    pub fn schmidt_values(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for (s, fit) in self.fits.iter().enumerate() {
            if let Some(fit) = fit {
                out.extend(fit.spectrum.iter().map(|&p| (s, p * self.weights[s])));
            }
        }
        out
    }
}

/// Fit every populated sector independently.
pub fn fit_eh(data: &EhtData, ops: &OperatorSet, partition: &SectorPartition, cfg: &FitConfig) -> Result<EhResult> {
    if data.sectors.iter().all(Option::is_none) {
        return Err(Error::InsufficientData("no populated sector".into()));
    }
    let mats = ops.sector_matrices(partition);
    let fits: Vec<Result<Option<SectorFit>>> = data
        .sectors
        .par_iter()
        .enumerate()
        .map(|(s, d)| match d {
            None => Ok(None),
            Some(d) => {
                let chi2 = Chi2::new(d)?;
                Ok(Some(fit_sector(&chi2, &mats[s], &ops.classes, cfg)))
            }
        })
        .collect();
    let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EhResult {
        classes: ops.classes.clone(),
        max_block_dim: partition.max_dim(),
        weights: data.sectors.iter().map(|d| d.as_ref().map_or(0.0, |d| d.weight)).collect(),
        fits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "m", rename_all = "snake_case")]
pub enum GapMode {
    /// Low band of fixed size `m`.
    Fixed(usize),
    /// Largest consecutive gap within the first half of the spectrum.
    Largest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub value: f64,
    pub m: usize,
    pub mode: GapMode,
}

/// `ξ = −log P`, with `P ≤ 0` mapped to `+∞`, sorted ascending.
pub fn entanglement_spectrum(schmidt: &[f64]) -> Vec<f64> {
    let mut xi: Vec<f64> = schmidt.iter().map(|&p| if p > 0.0 { -p.ln() } else { f64::INFINITY }).collect();
    xi.sort_by(f64::total_cmp);
    xi
}

/// Gap between the low band and the rest of the merged spectrum. When the
/// level above the band is missing (zero Schmidt value), the gap is measured
/// up to the largest finite level present.
pub fn entanglement_gap(xi_sorted: &[f64], mode: GapMode) -> Result<Gap> {
    let finite: Vec<f64> = xi_sorted.iter().copied().filter(|x| x.is_finite()).collect();
    let m = match mode {
        GapMode::Fixed(m) => m,
        GapMode::Largest => {
            let half = (finite.len() / 2).max(1);
            (0..half.min(finite.len().saturating_sub(1)))
                .max_by(|&a, &b| (finite[a + 1] - finite[a]).total_cmp(&(finite[b + 1] - finite[b])))
                .map(|i| i + 1)
                .ok_or_else(|| Error::InsufficientData("fewer than two finite levels".into()))?
        }
    };
    if m == 0 || xi_sorted.len() < m + 1 || finite.len() < m {
        return Err(Error::InsufficientData(format!("{} levels for a low band of {m}", xi_sorted.len())));
    }
    let low = finite[m - 1];
    let value = match finite.get(m) {
        Some(&next) => next - low,
        None => finite.last().copied().unwrap_or(low) - low,
    };
    Ok(Gap { value, m, mode })
}

/// Exact Schmidt values of block data, all sectors merged.
pub fn exact_schmidt(rho: &BlockDensityMatrix) -> Vec<f64> {
    crate::shadows::exact_schmidt_spectrum(rho).into_iter().map(|v| v.value).collect()
}

/// Number of equal nonzero Schmidt values of a stabilizer-limit state.
pub fn low_band_size(rho: &BlockDensityMatrix) -> usize {
    let p = exact_schmidt(rho);
    let pmax = p.iter().copied().fold(0.0, f64::max);
    p.iter().filter(|&&x| x > pmax * (1.0 - 1e-8)).count()
}

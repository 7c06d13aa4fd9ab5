//! Sector-wise classical shadows.
//!
//! Each snapshot applies a fresh block-random unitary and records one
//! outcome. Since `U` preserves sectors, the sector of the outcome is drawn
//! with probability `p_s` regardless of `U`, and only `U_s` is needed to
//! draw the bitstring inside it.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{stream_rng, UnitarySource};
use crate::error::{Error, Result};
use crate::hilbert::{eigh, hermiticity_error, trace, CMatrix, C64, ZERO};
use crate::sectors::{BlockDensityMatrix, SectorPartition, SubsystemGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadowRecord {
    pub circuit_index: u64,
    pub sector: usize,
    pub bitstring: u64,
}

/// Running sums of `U_s†|b⟩⟨b|U_s` per sector.
#[derive(Debug, Clone)]
pub struct ShadowAccumulator {
    pub sums: Vec<CMatrix>,
    pub counts: Vec<u64>,
}

impl ShadowAccumulator {
    pub fn new(partition: &SectorPartition) -> Self {
        Self {
            sums: partition.sectors.iter().map(|s| CMatrix::zeros(s.dim(), s.dim())).collect(),
            counts: vec![0; partition.sectors.len()],
        }
    }

    /// Add the snapshot of outcome `pos` under block unitary `u`.
    pub fn push(&mut self, s: usize, pos: usize, u: &CMatrix) {
        let d = u.nrows();
        let sum = &mut self.sums[s];
        for c in 0..d {
            let vc = u[(pos, c)];
            for r in 0..d {
                sum[(r, c)] += u[(pos, r)].conj() * vc;
            }
        }
        self.counts[s] += 1;
    }

    pub fn merge(&mut self, other: &ShadowAccumulator) {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Invert the block channel and average.
    pub fn estimate(&self) -> ShadowEstimate {
        let n = self.total();
        let blocks = self
            .sums
            .iter()
            .zip(&self.counts)
            .map(|(sum, &c)| {
                (c > 0).then(|| {
                    let d = sum.nrows();
                    let mut m = sum * C64::new((d + 1) as f64 / c as f64, 0.0);
                    for i in 0..d {
                        m[(i, i)] -= 1.0;
                    }
                    // Remove rounding asymmetry.
                    (&m + m.adjoint()) * C64::new(0.5, 0.0)
                })
            })
            .collect();
        ShadowEstimate {
            blocks,
            weights: self.counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect(),
            n_s: n,
        }
    }
}

/// `M_s^{-1}(X) = (d+1) X − Tr X · 𝕀`.
pub fn invert_channel(x: &CMatrix) -> CMatrix {
    let d = x.nrows();
    let tr = trace(x);
    let mut m = x * C64::new((d + 1) as f64, 0.0);
    for i in 0..d {
        m[(i, i)] -= tr;
    }
    m
}

/// Normalized block estimates `σ̄_s` (`None` where no shadow landed) and
/// empirical weights.
#[derive(Debug, Clone)]
pub struct ShadowEstimate {
    pub blocks: Vec<Option<CMatrix>>,
    pub weights: Vec<f64>,
    pub n_s: u64,
}

#[derive(Debug, Clone)]
pub struct ShadowJob<'a> {
    pub rho: &'a BlockDensityMatrix,
    pub source: &'a UnitarySource,
    pub geom: &'a SubsystemGeometry,
    pub partition: &'a SectorPartition,
    pub seed: u64,
}

fn draw(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if x < w {
            return i;
        }
        x -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn one_shadow(job: &ShadowJob, idx: u64) -> Result<(ShadowRecord, usize, CMatrix)> {
    let mut rng = stream_rng(job.seed, idx, "shadow");
    let s = draw(&job.rho.weights(), &mut rng);
    let u = job.source.block(job.geom, job.partition, idx, s)?;
    let rho = &job.rho.blocks[s].rho;
    let m = &u * rho;
    let probs: Vec<f64> = (0..u.nrows())
        .map(|r| (0..u.nrows()).map(|c| (m[(r, c)] * u[(r, c)].conj()).re).sum::<f64>().max(0.0))
        .collect();
    let pos = draw(&probs, &mut rng);
    let rec = ShadowRecord {
        circuit_index: idx,
        sector: s,
        bitstring: job.partition.sectors[s].basis[pos],
    };
    Ok((rec, pos, u))
}

const CHUNK: usize = 256;

/// Snapshots `start..end`, one fresh unitary each. Records are returned only
/// when `keep_records` is set.
pub fn collect_shadows(job: &ShadowJob, start: u64, end: u64, keep_records: bool) -> Result<(ShadowAccumulator, Vec<ShadowRecord>)> {
    if job.rho.weights().iter().sum::<f64>() <= 0.0 {
        return Err(Error::EmptyPhysicalSector);
    }
    let starts: Vec<u64> = (start..end).step_by(CHUNK).collect();
    let parts: Vec<Result<(ShadowAccumulator, Vec<ShadowRecord>)>> = starts
        .par_iter()
        .map(|&c0| {
            let mut acc = ShadowAccumulator::new(job.partition);
            let mut recs = Vec::new();
            for idx in c0..(c0 + CHUNK as u64).min(end) {
                let (rec, pos, u) = one_shadow(job, idx)?;
                acc.push(rec.sector, pos, &u);
                if keep_records {
                    recs.push(rec);
                }
            }
            Ok((acc, recs))
        })
        .collect();
    let mut acc = ShadowAccumulator::new(job.partition);
    let mut recs = Vec::new();
    for p in parts {
        let (a, r) = p?;
        acc.merge(&a);
        recs.extend(r);
    }
    Ok((acc, recs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchmidtValue {
    pub sector: usize,
    pub rank: usize,
    pub value: f64,
    pub negative: bool,
}

/// Eigenvalues of `p_s σ̄_s` per sector, descending within each sector.
pub fn schmidt_spectrum(blocks: &[Option<CMatrix>], weights: &[f64]) -> Vec<SchmidtValue> {
    let mut out = Vec::new();
    for (s, (b, &w)) in blocks.iter().zip(weights).enumerate() {
        let Some(b) = b else { continue };
        let mut ev: Vec<f64> = eigh(b).0.into_iter().map(|l| l * w).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (rank, value) in ev.into_iter().enumerate() {
            out.push(SchmidtValue { sector: s, rank, value, negative: value < 0.0 });
        }
    }
    out
}

/// Schmidt values of exact block data.
pub fn exact_schmidt_spectrum(rho: &BlockDensityMatrix) -> Vec<SchmidtValue> {
    let blocks: Vec<Option<CMatrix>> = rho.blocks.iter().map(|b| b.normalized()).collect();
    schmidt_spectrum(&blocks, &rho.weights())
}

pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeEntropy {
    pub value: f64,
    /// Eigenvalues of `σ̄` raised to the floor.
    pub clamped: usize,
}

/// `S(ρ̄‖σ̄) = Tr ρ̄ log ρ̄ − Tr ρ̄ log σ̄`, with eigenvalues of `σ̄` below
/// [`EIGEN_FLOOR`] raised to it.
pub fn relative_entropy(rho_bar: &CMatrix, sigma_bar: &CMatrix) -> Result<RelativeEntropy> {
    if rho_bar.shape() != sigma_bar.shape() {
        return Err(Error::DimensionMismatch("ρ̄ and σ̄ differ in shape".into()));
    }
    for m in [rho_bar, sigma_bar] {
        let h = hermiticity_error(m);
        if h > 1e-10 {
            return Err(Error::Numerical(format!("non-Hermitian input, error {h}")));
        }
    }
    let (lr, _) = eigh(rho_bar);
    let s_rho: f64 = lr.iter().filter(|&&l| l > 0.0).map(|l| l * l.ln()).sum();
    let (ls, vs) = eigh(sigma_bar);
    let clamped = ls.iter().filter(|&&l| l < EIGEN_FLOOR).count();
    // Tr ρ̄ log σ̄ = Σ_λ log σ_λ ⟨v_λ|ρ̄|v_λ⟩.
    let rv = rho_bar * &vs;
    let mut cross = 0.0;
    for (k, &l) in ls.iter().enumerate() {
        let w: C64 = (0..vs.nrows()).fold(ZERO, |acc, r| acc + vs[(r, k)].conj() * rv[(r, k)]);
        cross += w.re * l.max(EIGEN_FLOOR).ln();
    }
    let value = s_rho - cross;
    if !value.is_finite() {
        return Err(Error::Numerical("relative entropy is not finite".into()));
    }
    Ok(RelativeEntropy { value, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::haar_unitary;
    use crate::hilbert::max_abs;
    use crate::sectors::{enumerate_sectors, Block};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(v.len(), v.iter().map(|&x| C64::new(x, 0.0))))
    }

    fn random_state(partition: &SectorPartition, rng: &mut ChaCha8Rng) -> BlockDensityMatrix {
        let mut blocks: Vec<Block> = partition
            .sectors
            .iter()
            .map(|s| {
                let d = s.dim();
                let g = CMatrix::from_fn(d, d, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
                let rho = &g * g.adjoint();
                let w = trace(&rho).re;
                Block { rho, weight: w }
            })
            .collect();
        let total: f64 = blocks.iter().map(|b| b.weight).sum();
        for b in &mut blocks {
            b.rho /= C64::new(total, 0.0);
            b.weight /= total;
        }
        BlockDensityMatrix { blocks }
    }

    #[test]
    fn channel_fixed_point_and_unit_trace() {
        let id = diag(&[0.25; 4]);
        assert!(max_abs(&(invert_channel(&id) - &id)) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = haar_unitary(5, &mut rng);
        let v = u.row(2).adjoint();
        let snap = invert_channel(&(&v * v.adjoint()));
        assert!((trace(&snap).re - 1.0).abs() < 1e-14);
    }

    /// Exact Haar integration at d = 2: average the inverted snapshot over a
    /// quadrature of the Bloch sphere, weighted by Born probabilities.
    #[test]
    fn channel_inversion_is_exact_at_d2() {
        let rho = CMatrix::from_row_slice(2, 2, &[C64::new(0.7, 0.0), C64::new(0.1, -0.2), C64::new(0.1, 0.2), C64::new(0.3, 0.0)]);
        let (nt, np) = (200, 64);
        let mut acc = CMatrix::zeros(2, 2);
        let mut wsum = 0.0;
        for i in 0..nt {
            let t = (i as f64 + 0.5) / nt as f64 * std::f64::consts::PI;
            for j in 0..np {
                let p = j as f64 / np as f64 * 2.0 * std::f64::consts::PI;
                // Measured basis vector U†|0⟩ uniform on the sphere.
                let v = nalgebra::DVector::from_vec(vec![C64::new((t / 2.0).cos(), 0.0), C64::from_polar((t / 2.0).sin(), p)]);
                let proj = &v * v.adjoint();
                let prob = (v.adjoint() * &rho * &v)[(0, 0)].re;
                let w = t.sin();
                acc += invert_channel(&proj) * C64::new(w * prob * 2.0, 0.0);
                wsum += w;
            }
        }
        let avg = acc / C64::new(wsum, 0.0);
        assert!(max_abs(&(avg - &rho)) < 1e-3, "quadrature mismatch");
    }

    #[test]
    fn snapshots_are_unbiased() {
        let geom = SubsystemGeometry::pn(2, 2).unwrap();
        let partition = enumerate_sectors(&geom).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_state(&partition, &mut rng);
        let src = UnitarySource::Haar { master_seed: 5 };
        let job = ShadowJob { rho: &rho, source: &src, geom: &geom, partition: &partition, seed: 3 };
        let (acc, _) = collect_shadows(&job, 0, 1_000_000, false).unwrap();
        let est = acc.estimate();
        for (s, b) in rho.blocks.iter().enumerate() {
            let p = b.weight;
            let n = acc.total() as f64;
            assert!((est.weights[s] - p).abs() < 3.0 * (p / n).sqrt());
            let bar = b.normalized().unwrap();
            let sig = est.blocks[s].as_ref().unwrap();
            assert!(max_abs(&(sig - &bar)) < 5e-3, "sector {s}");
            assert!((trace(sig).re - 1.0).abs() < 1e-12);
            assert!(hermiticity_error(sig) < 1e-12);
        }
    }

    #[test]
    fn identity_ensemble_on_basis_state() {
        let geom = SubsystemGeometry::pn(3, 3).unwrap();
        let partition = enumerate_sectors(&geom).unwrap();
        let (s, pos) = partition.locate(0b011).unwrap();
        let blocks = partition
            .sectors
            .iter()
            .enumerate()
            .map(|(i, sec)| {
                let mut rho = CMatrix::zeros(sec.dim(), sec.dim());
                if i == s {
                    rho[(pos, pos)] = C64::new(1.0, 0.0);
                }
                Block { weight: if i == s { 1.0 } else { 0.0 }, rho }
            })
            .collect();
        let rho = BlockDensityMatrix { blocks };
        let job = ShadowJob { rho: &rho, source: &UnitarySource::Identity, geom: &geom, partition: &partition, seed: 1 };
        let (_, recs) = collect_shadows(&job, 0, 50, true).unwrap();
        assert!(recs.iter().all(|r| r.bitstring == 0b011 && r.sector == s));
    }

    #[test]
    fn spectra_union_matches_full_spectrum() {
        let geom = SubsystemGeometry::pn(4, 4).unwrap();
        let partition = enumerate_sectors(&geom).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random_state(&partition, &mut rng);
        let mut ours: Vec<f64> = exact_schmidt_spectrum(&rho).iter().map(|v| v.value).collect();
        let mut full = eigh(&rho.to_dense(&partition)).0;
        ours.sort_by(f64::total_cmp);
        full.sort_by(f64::total_cmp);
        for (a, b) in ours.iter().zip(&full) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn relative_entropy_cases() {
        let r = diag(&[0.6, 0.4]);
        assert!(relative_entropy(&r, &r).unwrap().value.abs() < 1e-14);
        let re = relative_entropy(&diag(&[1.0, 0.0]), &diag(&[0.5, 0.5])).unwrap();
        assert!((re.value - 2f64.ln()).abs() < 1e-14);
        let neg = relative_entropy(&diag(&[1.0, 0.0]), &diag(&[1.1, -0.1])).unwrap();
        assert_eq!(neg.clamped, 1);
        assert!(neg.value.is_finite());
    }
}

//! Randomized measurements on block-diagonal states: Born probabilities,
//! finite-shot sampling and unbiased power moments of the outcome
//! distribution.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{stream_rng, UnitarySource};
use crate::error::{Error, Result};
use crate::hilbert::CMatrix;
use crate::sectors::{sector_of_bitstring, BlockDensityMatrix, SectorPartition, SubsystemGeometry, POPULATED};

/// `P_U(b, s)` indexed as `probs[s][position of b in sector s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    pub probs: Vec<Vec<f64>>,
}

impl ProbabilityTable {
    pub fn weight(&self, s: usize) -> f64 {
        self.probs[s].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().flatten().sum()
    }
}

/// Per-sector outcome counts of one circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord {
    pub n_m: u64,
    pub counts: Vec<Vec<u64>>,
}

/// `P_U(b,s) = ⟨b| U_s ρ_{A,s} U_s† |b⟩`, one block at a time.
pub fn born_probabilities(rho: &BlockDensityMatrix, blocks: &[CMatrix]) -> Result<ProbabilityTable> {
    if blocks.len() != rho.blocks.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} unitary blocks for {} density blocks",
            blocks.len(),
            rho.blocks.len()
        )));
    }
    let probs = rho
        .blocks
        .iter()
        .zip(blocks)
        .map(|(b, u)| {
            let d = b.rho.nrows();
            if u.nrows() != d || u.ncols() != d {
                return Err(Error::DimensionMismatch(format!("unitary block {}x{} vs {d}", u.nrows(), u.ncols())));
            }
            if b.weight <= POPULATED {
                return Ok(vec![0.0; d]);
            }
            let m = u * &b.rho;
            Ok((0..d)
                .map(|r| (0..d).map(|c| (m[(r, c)] * u[(r, c)].conj()).re).sum::<f64>().max(0.0))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbabilityTable { probs })
}

/// Multinomial draw of `n_m` shots over all `(b, s)`.
pub fn sample_shots(table: &ProbabilityTable, n_m: u64, rng: &mut impl Rng) -> Result<ShotRecord> {
    if n_m == 0 {
        return Err(Error::InvalidParameter("N_M must be at least 1".into()));
    }
    let mut remaining = n_m;
    let mut mass = table.total();
    let counts = table
        .probs
        .iter()
        .map(|sector| {
            sector
                .iter()
                .map(|&p| {
                    if remaining == 0 || p <= 0.0 {
                        return 0;
                    }
                    let q = (p / mass).clamp(0.0, 1.0);
                    mass -= p;
                    let k = if q >= 1.0 {
                        remaining
                    } else {
                        Binomial::new(remaining, q).map(|b| b.sample(rng)).unwrap_or(0)
                    };
                    remaining -= k;
                    k
                })
                .collect()
        })
        .collect();
    Ok(ShotRecord { n_m, counts })
}

fn falling(n: u64, k: usize) -> f64 {
    (0..k as u64).map(|i| n.saturating_sub(i) as f64).product()
}

/// Exact `Σ_{b∈s} P_U(b,s)^k` for every sector.
pub fn moment_exact(table: &ProbabilityTable, k: usize) -> Vec<f64> {
    table.probs.iter().map(|s| s.iter().map(|p| p.powi(k as i32)).sum()).collect()
}

/// Unbiased estimate of `Σ_{b∈s} P_U(b,s)^k` from shot counts.
pub fn moment_shots(record: &ShotRecord, k: usize) -> Result<Vec<f64>> {
    if record.n_m < k as u64 {
        return Err(Error::InsufficientData(format!("N_M = {} < k = {k}", record.n_m)));
    }
    let denom = falling(record.n_m, k);
    Ok(record
        .counts
        .iter()
        .map(|s| s.iter().map(|&n| falling(n, k)).sum::<f64>() / denom)
        .collect())
}

/// Classify every observed bitstring from its bits and compare with the
/// block it was drawn from.
pub fn check_outcome_sectors(record: &ShotRecord, geom: &SubsystemGeometry, partition: &SectorPartition) -> Result<()> {
    for (s, counts) in record.counts.iter().enumerate() {
        let expected = &partition.sectors[s].label;
        for (pos, &n) in counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let b = partition.sectors[s].basis[pos];
            let found = sector_of_bitstring(b, geom)?;
            if &found != expected {
                return Err(Error::SectorMismatch {
                    bitstring: b,
                    expected: expected.to_string(),
                    found: found.to_string(),
                });
            }
        }
    }
    Ok(())
}

/// One line of the measurement JSON-lines stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub circuit_index: u64,
    pub sector: String,
    pub bitstring: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

pub fn table_records(table: &ProbabilityTable, partition: &SectorPartition, circuit_index: u64) -> Vec<MeasurementRecord> {
    let mut out = Vec::new();
    for (s, probs) in table.probs.iter().enumerate() {
        let sector = &partition.sectors[s];
        for (pos, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                out.push(MeasurementRecord {
                    circuit_index,
                    sector: sector.label.to_string(),
                    bitstring: sector.basis[pos],
                    count: None,
                    probability: Some(p),
                });
            }
        }
    }
    out
}

pub fn shot_records(record: &ShotRecord, partition: &SectorPartition, circuit_index: u64) -> Vec<MeasurementRecord> {
    let mut out = Vec::new();
    for (s, counts) in record.counts.iter().enumerate() {
        let sector = &partition.sectors[s];
        for (pos, &n) in counts.iter().enumerate() {
            if n > 0 {
                out.push(MeasurementRecord {
                    circuit_index,
                    sector: sector.label.to_string(),
                    bitstring: sector.basis[pos],
                    count: Some(n),
                    probability: None,
                });
            }
        }
    }
    out
}

/// Shots per circuit; `None` is the infinite-shot limit.
pub type Shots = Option<u64>;

/// Running sums over circuits of `Σ_b P^k`, `sums[s][k-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSums {
    pub sums: Vec<Vec<f64>>,
    pub count: usize,
}

impl MomentSums {
    pub fn new(n_sectors: usize, k_max: usize) -> Self {
        Self {
            sums: vec![vec![0.0; k_max]; n_sectors],
            count: 0,
        }
    }

    pub fn merge(&mut self, other: &MomentSums) {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.count += other.count;
    }

    /// Ensemble averages `⟨Σ_b P^k⟩` for sector `s`.
    pub fn means(&self, s: usize) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.sums[s].iter().map(|x| x / n).collect()
    }
}

#[derive(Debug, Clone)]
pub struct MomentJob<'a> {
    pub rho: &'a BlockDensityMatrix,
    pub source: &'a UnitarySource,
    pub geom: &'a SubsystemGeometry,
    pub partition: &'a SectorPartition,
    pub shots: Shots,
    pub k_max: usize,
    /// Seeds the shot sampling; unitaries come from `source`.
    pub shot_seed: u64,
}

const CHUNK: usize = 64;

/// Moment sums over circuits `start..end`, reduced in fixed chunks.
pub fn accumulate_moments(job: &MomentJob, start: usize, end: usize) -> Result<MomentSums> {
    if let Some(n_m) = job.shots {
        if n_m < job.k_max as u64 {
            return Err(Error::InvalidParameter(format!("N_M = {n_m} below K_max = {}", job.k_max)));
        }
    }
    let n_sec = job.partition.sectors.len();
    let starts: Vec<usize> = (start..end).step_by(CHUNK).collect();
    let parts: Vec<Result<MomentSums>> = starts
        .par_iter()
        .map(|&c0| {
            let mut acc = MomentSums::new(n_sec, job.k_max);
            for idx in c0..(c0 + CHUNK).min(end) {
                let blocks = job.source.blocks(job.geom, job.partition, idx as u64)?;
                let table = born_probabilities(job.rho, &blocks)?;
                match job.shots {
                    None => {
                        for k in 1..=job.k_max {
                            for (s, m) in moment_exact(&table, k).into_iter().enumerate() {
                                acc.sums[s][k - 1] += m;
                            }
                        }
                    }
                    Some(n_m) => {
                        let mut rng = stream_rng(job.shot_seed, idx as u64, "shots");
                        let rec = sample_shots(&table, n_m, &mut rng)?;
                        for k in 1..=job.k_max {
                            for (s, m) in moment_shots(&rec, k)?.into_iter().enumerate() {
                                acc.sums[s][k - 1] += m;
                            }
                        }
                    }
                }
                acc.count += 1;
            }
            Ok(acc)
        })
        .collect();
    let mut total = MomentSums::new(n_sec, job.k_max);
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

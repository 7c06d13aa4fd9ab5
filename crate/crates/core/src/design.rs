//! Unitary design diagnostics per symmetry block.
//!
//! For a block of dimension `d` the second moment is compared with the Haar
//! value on sampled index tuples `(i,j,k,l; i',j',k',l')`:
//!
//! `B = ⟨U_ij U*_i'j' U_kl U*_k'l'⟩ − d²/(d²−1) (A^{i'j'}_{ij} A^{k'l'}_{kl} + A^{k'l'}_{ij} A^{i'j'}_{kl})`
//!
//! with `A^{kl}_{ij} = ⟨U_ij U*_kl⟩`. The reported error is the mean modulus
//! of `B − B_Haar` times `d(d²−1)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{stream_rng, UnitarySource};
use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, C64, ZERO};
use crate::sectors::{SectorPartition, SubsystemGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexTuple {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub l: usize,
    pub ip: usize,
    pub jp: usize,
    pub kp: usize,
    pub lp: usize,
}

fn delta(a: usize, b: usize) -> f64 {
    (a == b) as u8 as f64
}

/// Haar value of `B` on an index tuple.
pub fn two_design_target(t: &IndexTuple, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::TrivialSector(d));
    }
    let a = delta(t.i, t.ip) * delta(t.k, t.kp) * delta(t.j, t.lp) * delta(t.l, t.jp);
    let b = delta(t.i, t.kp) * delta(t.k, t.ip) * delta(t.j, t.jp) * delta(t.l, t.lp);
    let d = d as f64;
    Ok(-(a + b) / (d * (d * d - 1.0)))
}

/// Random index tuples. With `nonzero_only`, each tuple realizes one of the
/// two delta patterns of the Haar value, chosen with equal probability.
pub fn sample_tuples(d: usize, n: usize, nonzero_only: bool, rng: &mut impl Rng) -> Vec<IndexTuple> {
    (0..n)
        .map(|_| {
            let mut r = || rng.random_range(0..d);
            let (i, j, k, l) = (r(), r(), r(), r());
            if !nonzero_only {
                let (ip, jp, kp, lp) = (r(), r(), r(), r());
                return IndexTuple { i, j, k, l, ip, jp, kp, lp };
            }
            if rng.random::<bool>() {
                IndexTuple { i, j, k, l, ip: i, jp: l, kp: k, lp: j }
            } else {
                IndexTuple { i, j, k, l, ip: k, jp: j, kp: i, lp: l }
            }
        })
        .collect()
}

/// Streaming estimator of the second-moment deviation on fixed tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    pub d: usize,
    pub tuples: Vec<IndexTuple>,
    // Per tuple: U_ij U*_i'j' U_kl U*_k'l', U_ij U*_i'j', U_kl U*_k'l',
    // U_ij U*_k'l', U_kl U*_i'j'.
    sums: Vec<[C64; 5]>,
    pub count: usize,
}

impl MomentAccumulator {
    pub fn new(d: usize, tuples: Vec<IndexTuple>) -> Result<Self> {
        if d < 2 {
            return Err(Error::TrivialSector(d));
        }
        if tuples.is_empty() {
            return Err(Error::InvalidParameter("no index tuples".into()));
        }
        Ok(Self {
            d,
            sums: vec![[ZERO; 5]; tuples.len()],
            tuples,
            count: 0,
        })
    }

    pub fn push(&mut self, u: &CMatrix) {
        for (t, s) in self.tuples.iter().zip(self.sums.iter_mut()) {
            let a = u[(t.i, t.j)];
            let b = u[(t.k, t.l)];
            let ap = u[(t.ip, t.jp)].conj();
            let bp = u[(t.kp, t.lp)].conj();
            s[0] += a * ap * b * bp;
            s[1] += a * ap;
            s[2] += b * bp;
            s[3] += a * bp;
            s[4] += b * ap;
        }
        self.count += 1;
    }

    /// Combine with an accumulator over other unitaries on the same tuples.
    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if other.d != self.d || other.tuples != self.tuples {
            return Err(Error::DimensionMismatch("accumulators use different tuples".into()));
        }
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            for q in 0..5 {
                a[q] += b[q];
            }
        }
        self.count += other.count;
        Ok(())
    }

    /// Estimated `B` on every tuple.
    pub fn b_estimates(&self) -> Result<Vec<C64>> {
        if self.count == 0 {
            return Err(Error::InsufficientData("no unitaries accumulated".into()));
        }
        let n = self.count as f64;
        let d2 = (self.d * self.d) as f64;
        let pref = d2 / (d2 - 1.0);
        Ok(self
            .sums
            .iter()
            .map(|s| s[0] / n - (s[1] * s[2] + s[3] * s[4]) / (n * n) * pref)
            .collect())
    }

    /// Dimension-normalized mean deviation from the Haar second moment.
    pub fn epsilon(&self) -> Result<f64> {
        let b = self.b_estimates()?;
        let d = self.d as f64;
        let mut acc = 0.0;
        for (t, bt) in self.tuples.iter().zip(&b) {
            acc += (bt - two_design_target(t, self.d)?).norm();
        }
        Ok(acc / b.len() as f64 * d * (d * d - 1.0))
    }
}

/// First-moment check on sampled `(i, j, k, l)`: `⟨U_ij U*_kl⟩` against the
/// Haar value `δ_ik δ_jl / d`.
#[derive(Debug, Clone)]
pub struct FirstMomentAccumulator {
    pub d: usize,
    pub quads: Vec<[usize; 4]>,
    sums: Vec<C64>,
    pub count: usize,
}

impl FirstMomentAccumulator {
    /// Always includes the fully diagonal quad `(0,0,0,0)`.
    pub fn new(d: usize, n: usize, rng: &mut impl Rng) -> Self {
        let mut quads = vec![[0; 4]];
        for _ in 1..n {
            let i = rng.random_range(0..d);
            let j = rng.random_range(0..d);
            if rng.random::<bool>() {
                quads.push([i, j, i, j]);
            } else {
                quads.push([i, j, rng.random_range(0..d), rng.random_range(0..d)]);
            }
        }
        Self {
            d,
            sums: vec![ZERO; quads.len()],
            quads,
            count: 0,
        }
    }

    pub fn push(&mut self, u: &CMatrix) {
        for (q, s) in self.quads.iter().zip(self.sums.iter_mut()) {
            *s += u[(q[0], q[1])] * u[(q[2], q[3])].conj();
        }
        self.count += 1;
    }

    pub fn max_deviation(&self) -> f64 {
        let n = self.count.max(1) as f64;
        self.quads
            .iter()
            .zip(&self.sums)
            .map(|(q, s)| {
                let target = delta(q[0], q[2]) * delta(q[1], q[3]) / self.d as f64;
                (s / n - target).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Number of tuples sampled per sector: 600/900/1200/2000 for 4/6/8/10
/// qubits, 900 otherwise.
pub fn default_index_count(n_qubits: usize) -> usize {
    match n_qubits {
        0..=4 => 600,
        5..=6 => 900,
        7..=8 => 1200,
        10 => 2000,
        _ => 900,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub sector: String,
    pub d_s: usize,
    pub n_e: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct DesignOptions {
    pub checkpoints: Vec<usize>,
    pub n_indices: usize,
    pub nonzero_only: bool,
    pub tuple_seed: u64,
}

/// Powers of two from `start` up to and including `n_e`.
pub fn geometric_checkpoints(start: usize, n_e: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut c = start.max(1);
    while c < n_e {
        out.push(c);
        c *= 2;
    }
    out.push(n_e);
    out
}

const CHUNK: usize = 32;

/// Design error of every nontrivial sector at each checkpoint.
///
/// Unitaries are processed in fixed-size chunks merged in index order, so
/// the output does not depend on the thread count.
pub fn design_curve(
    source: &UnitarySource,
    geom: &SubsystemGeometry,
    partition: &SectorPartition,
    opts: &DesignOptions,
) -> Result<Vec<DesignPoint>> {
    let nontrivial: Vec<usize> = (0..partition.sectors.len())
        .filter(|&s| partition.sectors[s].dim() >= 2)
        .collect();
    let fresh = || -> Result<Vec<MomentAccumulator>> {
        nontrivial
            .iter()
            .map(|&s| {
                let d = partition.sectors[s].dim();
                let mut rng = stream_rng(opts.tuple_seed, s as u64, "tuples");
                MomentAccumulator::new(d, sample_tuples(d, opts.n_indices, opts.nonzero_only, &mut rng))
            })
            .collect()
    };
    let mut total = fresh()?;
    let mut out = Vec::new();
    let mut done = 0usize;
    let mut checkpoints = opts.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    for &cp in &checkpoints {
        let starts: Vec<usize> = (done..cp).step_by(CHUNK).collect();
        let parts: Vec<Result<Vec<MomentAccumulator>>> = starts
            .par_iter()
            .map(|&start| {
                let mut acc = fresh()?;
                for idx in start..(start + CHUNK).min(cp) {
                    let blocks = source.blocks(geom, partition, idx as u64)?;
                    for (a, &s) in acc.iter_mut().zip(&nontrivial) {
                        a.push(&blocks[s]);
                    }
                }
                Ok(acc)
            })
            .collect();
        for part in parts {
            for (t, p) in total.iter_mut().zip(part?) {
                t.merge(&p)?;
            }
        }
        done = cp;
        for (a, &s) in total.iter().zip(&nontrivial) {
            out.push(DesignPoint {
                sector: partition.sectors[s].label.to_string(),
                d_s: a.d,
                n_e: cp,
                epsilon: a.epsilon()?,
            });
        }
    }
    Ok(out)
}

/// Least-squares line `y = a + b x`; returns `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientData(format!("{n} points for a line fit")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("degenerate abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    Ok((my - b * mx, b))
}

/// Fit `ε = c · N_E^b` in log-log space; returns `(log c, b)`.
pub fn power_law_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let pts: Vec<_> = points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
    let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    linear_fit(&x, &y)
}

/// Smallest ensemble size reaching `ε ≤ eps0`.
///
/// An observed crossing is located by log-linear interpolation. Otherwise,
/// with `extrapolate`, the power-law fit over the curve is solved for
/// `eps0`, provided the curve decays at least as `N^{-0.3}`.
pub fn crossing(points: &[(f64, f64)], eps0: f64, extrapolate: bool, sector: &str) -> Result<f64> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in pts.windows(2) {
        let ((n0, e0), (n1, e1)) = (w[0], w[1]);
        if e0 > eps0 && e1 <= eps0 {
            let t = (eps0.ln() - e0.ln()) / (e1.ln() - e0.ln());
            return Ok((n0.ln() + t * (n1.ln() - n0.ln())).exp());
        }
    }
    if let Some(&(n0, e0)) = pts.first() {
        if e0 <= eps0 {
            return Ok(n0);
        }
    }
    if extrapolate {
        let (a, b) = power_law_fit(&pts)?;
        if b < -0.3 {
            return Ok(((eps0.ln() - a) / b).exp());
        }
    }
    Err(Error::NoCrossing {
        sector: sector.to_string(),
        threshold: eps0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingFit {
    pub xi: f64,
    /// Range of `ξ` over the fit-window variations.
    pub xi_min: f64,
    pub xi_max: f64,
    /// `(sector, d_s, N_E(ε₀))` per sector.
    pub per_sector: Vec<(String, usize, f64)>,
}

fn xi_of(points: &[(String, usize, f64)]) -> Result<f64> {
    let x: Vec<f64> = points.iter().map(|p| (p.1 as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.2.ln()).collect();
    Ok(linear_fit(&x, &y)?.1)
}

fn crossings(curve: &[DesignPoint], eps0: f64, extrapolate: bool) -> Result<Vec<(String, usize, f64)>> {
    let mut sectors: Vec<(String, usize)> = Vec::new();
    for p in curve {
        if !sectors.iter().any(|s| s.0 == p.sector) {
            sectors.push((p.sector.clone(), p.d_s));
        }
    }
    sectors
        .into_iter()
        .map(|(name, d)| {
            let pts: Vec<(f64, f64)> = curve
                .iter()
                .filter(|p| p.sector == name)
                .map(|p| (p.n_e as f64, p.epsilon))
                .collect();
            Ok((name.clone(), d, crossing(&pts, eps0, extrapolate, &name)?))
        })
        .collect()
}

/// Exponent `ξ` of `N_E(ε₀) ∼ d_s^ξ`, with the spread obtained by dropping
/// the largest block and by moving `ε₀` up by one decade.
pub fn fit_ensemble_scaling(curve: &[DesignPoint], eps0: f64, extrapolate: bool) -> Result<ScalingFit> {
    let per_sector = crossings(curve, eps0, extrapolate)?;
    let distinct: std::collections::BTreeSet<usize> = per_sector.iter().map(|p| p.1).collect();
    if per_sector.len() < 3 || distinct.len() < 2 {
        return Err(Error::InsufficientData("need at least 3 sectors of 2 sizes".into()));
    }
    let xi = xi_of(&per_sector)?;
    let mut variants = vec![xi];
    let dmax = *distinct.iter().last().unwrap();
    let trimmed: Vec<_> = per_sector.iter().filter(|p| p.1 < dmax).cloned().collect();
    let trimmed_sizes: std::collections::BTreeSet<usize> = trimmed.iter().map(|p| p.1).collect();
    if trimmed_sizes.len() >= 2 {
        variants.push(xi_of(&trimmed)?);
    }
    if let Ok(loose) = crossings(curve, eps0 * 10.0, extrapolate) {
        variants.push(xi_of(&loose)?);
    }
    Ok(ScalingFit {
        xi,
        xi_min: variants.iter().copied().fold(f64::INFINITY, f64::min),
        xi_max: variants.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        per_sector,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Sampling-cost ratio `(d_s / 2^n)^ξ` for the particle-number sector `s`.
pub fn relative_cost_exact(n: usize, s: usize, xi: f64) -> f64 {
    (binomial(n, s) / 2f64.powi(n as i32)).powf(xi)
}

/// Stirling approximation of [`relative_cost_exact`], valid for `0 < s < n`.
pub fn relative_cost_stirling(n: usize, s: usize, xi: f64) -> f64 {
    let x = s as f64 / n as f64;
    let n = n as f64;
    let base = 2.0 * x.powf(x) * (1.0 - x).powf(1.0 - x);
    base.powf(-n * xi) / (2.0 * std::f64::consts::PI * n * x * (1.0 - x)).powf(xi / 2.0)
}

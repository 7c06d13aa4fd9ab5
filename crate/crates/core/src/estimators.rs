//! From outcome moments to purities and entropies.
//!
//! For a Haar-random block unitary the moments of a single outcome
//! probability are
//!
//! `⟨P^k⟩ = (1/D_k) Σ_{a} C_a Π_j (Tr ρ^j)^{a_j}`, `D_k = d(d+1)…(d+k−1)`,
//!
//! summed over integer partitions `Σ j a_j = k` with `C_a = k!/Π(j^{a_j} a_j!)`.
//! The only partition containing `Tr ρ^k` is `a_k = 1`, so the relation can be
//! inverted order by order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{eigvalsh, CMatrix};
use crate::measurement::MomentSums;
use crate::sectors::SectorPartition;

/// Integer partitions of `k` as multiplicity vectors `a[j-1] = a_j`.
pub fn partitions(k: usize) -> Vec<Vec<u32>> {
    fn rec(rest: usize, max_part: usize, a: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if rest == 0 {
            out.push(a.clone());
            return;
        }
        for j in (1..=max_part.min(rest)).rev() {
            a[j - 1] += 1;
            rec(rest - j, j, a, out);
            a[j - 1] -= 1;
        }
    }
    let mut out = Vec::new();
    rec(k, k, &mut vec![0; k], &mut out);
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// `C_a = k! / Π_j (j^{a_j} a_j!)`.
pub fn partition_coefficient(a: &[u32]) -> f64 {
    let k: u32 = a.iter().enumerate().map(|(j, &n)| (j as u32 + 1) * n).sum();
    let denom: f64 = a
        .iter()
        .enumerate()
        .map(|(j, &n)| ((j + 1) as f64).powi(n as i32) * factorial(n))
        .product();
    factorial(k) / denom
}

/// `D_k = d(d+1)…(d+k−1)`.
pub fn rising(d: usize, k: usize) -> f64 {
    (0..k).map(|j| (d + j) as f64).product()
}

/// Haar average of `Σ_b P(b)^k` for a block with `Tr ρ^j = purities[j-1]`.
pub fn haar_moment_sum(purities: &[f64], d: usize, k: usize) -> f64 {
    let s: f64 = partitions(k)
        .iter()
        .map(|a| {
            partition_coefficient(a)
                * a.iter()
                    .enumerate()
                    .map(|(j, &n)| purities[j].powi(n as i32))
                    .product::<f64>()
        })
        .sum();
    d as f64 * s / rising(d, k)
}

/// Invert `⟨Σ_b P^k⟩`, `k = 1..K`, into `Tr ρ_s^k` (unnormalized block).
pub fn invert_moments(moment_sums: &[f64], d: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::TrivialSector(0));
    }
    if moment_sums.is_empty() {
        return Err(Error::InsufficientData("no moments".into()));
    }
    let mut f: Vec<f64> = Vec::with_capacity(moment_sums.len());
    for (idx, &m) in moment_sums.iter().enumerate() {
        let k = idx + 1;
        let rest: f64 = partitions(k)
            .iter()
            .filter(|a| a[k - 1] == 0)
            .map(|a| {
                partition_coefficient(a)
                    * a.iter()
                        .enumerate()
                        .map(|(j, &n)| f.get(j).copied().unwrap_or(0.0).powi(n as i32))
                        .product::<f64>()
            })
            .sum();
        let fk = (rising(d, k) * m / d as f64 - rest) / factorial(k as u32 - 1);
        f.push(fk);
    }
    Ok(f)
}

/// Purity estimates of every sector from accumulated moments.
pub fn estimate_purities(sums: &MomentSums, partition: &SectorPartition) -> Result<Vec<PuritySet>> {
    partition
        .sectors
        .iter()
        .enumerate()
        .map(|(s, sector)| {
            let d = sector.dim();
            Ok(PuritySet { purities: invert_moments(&sums.means(s), d)?, d })
        })
        .collect()
}

/// Purities of one sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuritySet {
    /// `Tr ρ_s^k` for `k = 1..=K`.
    pub purities: Vec<f64>,
    pub d: usize,
}

impl PuritySet {
    pub fn weight(&self) -> f64 {
        self.purities[0]
    }

    /// `Tr ρ̄_s^k = Tr ρ_s^k / p_s^k`.
    pub fn normalized(&self) -> Vec<f64> {
        let p = self.weight();
        self.purities
            .iter()
            .enumerate()
            .map(|(i, f)| f / p.powi(i as i32 + 1))
            .collect()
    }

    /// Orders `k` at which the estimate is non-positive or larger than the
    /// previous order.
    pub fn flags(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, &f) in self.purities.iter().enumerate() {
            if f <= 0.0 || (i > 0 && f > self.purities[i - 1] + 1e-12) {
                out.push(i + 1);
            }
        }
        out
    }
}

/// `Tr ρ^k` for `k = 1..=k_max` of a Hermitian block.
pub fn exact_purities(rho: &CMatrix, k_max: usize) -> Vec<f64> {
    let ev = eigvalsh(rho);
    (1..=k_max)
        .map(|k| ev.iter().map(|l| l.max(0.0).powi(k as i32)).sum())
        .collect()
}

/// Rényi entropy `log(Tr ρ̄^k)/(1−k)` from a normalized purity.
pub fn renyi_entropy(normalized_purity: f64, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("Rényi order {k}")));
    }
    if normalized_purity <= 0.0 {
        return Err(Error::Numerical(format!("non-positive purity {normalized_purity} at k = {k}")));
    }
    Ok(normalized_purity.ln() / (1.0 - k as f64))
}

/// Von Neumann entropy as `−∂_k Tr ρ̄^k` at `k = 1`, from a forward stencil
/// on `k = 1..5`. The error bar is the change from the third-order stencil.
pub fn von_neumann_fd(normalized: &[f64]) -> Result<(f64, f64)> {
    if normalized.len() < 5 {
        return Err(Error::InsufficientData(format!("{} purity orders, need 5", normalized.len())));
    }
    let f = normalized;
    let fourth = -25.0 / 12.0 * f[0] + 4.0 * f[1] - 3.0 * f[2] + 4.0 / 3.0 * f[3] - 0.25 * f[4];
    let third = -11.0 / 6.0 * f[0] + 3.0 * f[1] - 1.5 * f[2] + f[3] / 3.0;
    Ok((-fourth, (fourth - third).abs()))
}

/// `−Tr ρ̄ log ρ̄` from the spectrum.
pub fn von_neumann_exact(rho_bar: &CMatrix) -> f64 {
    eigvalsh(rho_bar)
        .into_iter()
        .filter(|&l| l > 1e-300)
        .map(|l| -l * l.ln())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub symm: f64,
    pub dist: f64,
    pub total: f64,
}

/// `S_symm = −Σ p_s log p_s`, `S_dist = Σ p_s S_s`.
pub fn entanglement_decomposition(weights: &[f64], entropies: &[f64]) -> Result<Decomposition> {
    if weights.len() != entropies.len() {
        return Err(Error::DimensionMismatch("weights and entropies differ in length".into()));
    }
    let symm = weights.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum::<f64>();
    let dist = weights.iter().zip(entropies).filter(|(&p, _)| p > 0.0).map(|(p, s)| p * s).sum::<f64>();
    Ok(Decomposition { symm, dist, total: symm + dist })
}

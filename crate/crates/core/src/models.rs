//! Lattice Hamiltonians, Gauss-law operators and exact diagonalization on the
//! constraint-satisfying subspace.
//!
//! Qubit conventions:
//! * matter qubits: bit 1 is an occupied site (spin up), so the occupation
//!   `σ⁺σ⁻ = (1+σᶻ)/2` is the bit value;
//! * link qubits: the electric field `σ̃ᶻ` is the standard `Z`, i.e. bit 0
//!   carries field `+1`.
//!
//! The ℤ₂ matter chain interleaves sites and links: qubit `2j` is matter site
//! `j`, qubit `2j+1` is the link `(j, j+1)`.
//!
//! 2+1d links are enumerated row-major by `(j_y, j_x, direction)` with the x
//! link of a site before its y link. With fixed y boundaries the top row has
//! no y links:
//!
//! ```text
//!   j_y=1   o--x--o--x--o--x--     (x links, periodic in x)
//!           |     |     |
//!           y     y     y
//!           |     |     |
//!   j_y=0   o--x--o--x--o--x--
//! ```

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{bit, CMatrix, SparseState, C64, ZERO};

/// Diagonal operator `sign · Π_{q ∈ mask} Z_q` with eigenvalues ±1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ZString {
    pub mask: u64,
    pub sign: i8,
}

impl ZString {
    pub fn new(qubits: &[usize], sign: i8) -> Self {
        let mask = qubits.iter().fold(0u64, |m, &q| m ^ (1u64 << q));
        Self { mask, sign }
    }

    #[inline]
    pub fn eigenvalue(&self, index: u64) -> i8 {
        if (index & self.mask).count_ones() % 2 == 0 {
            self.sign
        } else {
            -self.sign
        }
    }

    pub fn to_dense(&self, n_qubits: usize) -> CMatrix {
        let dim = 1usize << n_qubits;
        CMatrix::from_diagonal(&DVector::from_iterator(
            dim,
            (0..dim as u64).map(|b| C64::new(self.eigenvalue(b) as f64, 0.0)),
        ))
    }

    pub fn qubits(&self) -> Vec<usize> {
        (0..64).filter(|&q| (self.mask >> q) & 1 == 1).collect()
    }
}

/// A conserved diagonal quantity used to split the diagonalization.
#[derive(Debug, Clone, PartialEq)]
pub enum Symmetry {
    Z(ZString),
    /// Number of set bits within `mask`.
    Number { mask: u64 },
}

impl Symmetry {
    fn value(&self, index: u64) -> i64 {
        match self {
            Symmetry::Z(z) => z.eigenvalue(index) as i64,
            Symmetry::Number { mask } => (index & mask).count_ones() as i64,
        }
    }
}

/// One term of a real Hamiltonian in the computational basis.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// `coeff · sign · Π Z`.
    Z { coeff: f64, op: ZString },
    /// `coeff · n_q`.
    Number { coeff: f64, qubit: usize },
    /// `coeff · (σ⁺_a X_links σ⁻_b + h.c.)`: moves a particle between `a` and
    /// `b` while flipping `links`.
    Hop {
        coeff: f64,
        a: usize,
        b: usize,
        links: u64,
    },
    /// `coeff · Π_{q ∈ mask} X_q`.
    Flip { coeff: f64, mask: u64 },
}

impl Term {
    fn diagonal(&self, index: u64) -> f64 {
        match self {
            Term::Z { coeff, op } => coeff * op.eigenvalue(index) as f64,
            Term::Number { coeff, qubit } => {
                if bit(index, *qubit) {
                    *coeff
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }

    fn off_diagonal(&self, index: u64) -> Option<(u64, f64)> {
        match *self {
            Term::Hop { coeff, a, b, links } => {
                if bit(index, a) != bit(index, b) {
                    Some((index ^ (1 << a) ^ (1 << b) ^ links, coeff))
                } else {
                    None
                }
            }
            Term::Flip { coeff, mask } => Some((index ^ mask, coeff)),
            _ => None,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Term::Z { .. } | Term::Number { .. })
    }
}

/// Real Hamiltonian stored as a list of local terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    pub n_qubits: usize,
    pub terms: Vec<Term>,
}

impl Hamiltonian {
    pub fn diagonal(&self, index: u64) -> f64 {
        self.terms.iter().map(|t| t.diagonal(index)).sum()
    }

    pub fn off_diagonal(&self, index: u64) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.terms.iter().filter_map(move |t| t.off_diagonal(index))
    }

    /// Dense matrix on the full register; only sensible for small systems.
    pub fn to_dense(&self) -> CMatrix {
        let dim = 1usize << self.n_qubits;
        let mut m = CMatrix::zeros(dim, dim);
        for col in 0..dim as u64 {
            m[(col as usize, col as usize)] += C64::new(self.diagonal(col), 0.0);
            for (row, amp) in self.off_diagonal(col) {
                m[(row as usize, col as usize)] += C64::new(amp, 0.0);
            }
        }
        m
    }

    /// Matrix restricted to the span of `basis` (sorted ascending).
    ///
    /// Off-diagonal moves leaving the span are dropped; callers pass spans
    /// that are closed under the Hamiltonian.
    pub fn restricted(&self, basis: &[u64]) -> DMatrix<f64> {
        let d = basis.len();
        let mut m = DMatrix::zeros(d, d);
        for (c, &b) in basis.iter().enumerate() {
            m[(c, c)] += self.diagonal(b);
            for (target, amp) in self.off_diagonal(b) {
                if let Ok(r) = basis.binary_search(&target) {
                    m[(r, c)] += amp;
                }
            }
        }
        m
    }

    /// Whether every off-diagonal move from `basis` stays inside it.
    pub fn closed_on(&self, basis: &[u64]) -> bool {
        basis.iter().all(|&b| {
            self.off_diagonal(b)
                .all(|(t, a)| a == 0.0 || basis.binary_search(&t).is_ok())
        })
    }

    fn apply_restricted(&self, basis: &[u64], v: &[f64], out: &mut [f64]) {
        for (c, &b) in basis.iter().enumerate() {
            out[c] = self.diagonal(b) * v[c];
        }
        for (c, &b) in basis.iter().enumerate() {
            if v[c] == 0.0 {
                continue;
            }
            for (target, amp) in self.off_diagonal(b) {
                if let Ok(r) = basis.binary_search(&target) {
                    out[r] += amp * v[c];
                }
            }
        }
    }

    pub fn expectation(&self, state: &SparseState) -> f64 {
        let mut map = BTreeMap::new();
        for &(i, a) in &state.entries {
            map.insert(i, a);
        }
        let mut acc = ZERO;
        for &(i, a) in &state.entries {
            acc += a.conj() * a * self.diagonal(i);
            for (t, amp) in self.off_diagonal(i) {
                if let Some(&bt) = map.get(&t) {
                    acc += bt.conj() * a * amp;
                }
            }
        }
        acc.re
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinChainParams {
    pub n_sites: usize,
    pub a: f64,
    pub m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Z2MatterParams {
    pub n_sites: usize,
    pub a: f64,
    pub m: f64,
    pub e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Fixed,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Z2PureParams {
    pub nx: usize,
    pub ny: usize,
    pub k: f64,
    pub g: f64,
    pub ybc: BoundaryCondition,
}

fn check_staggered(n: usize) -> Result<()> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "staggered chain needs an even site count >= 4, got {n}"
        )));
    }
    Ok(())
}

/// Particle-number conserving spin chain with staggered mass, periodic.
pub fn build_spin_chain(p: &SpinChainParams) -> Result<Hamiltonian> {
    check_staggered(p.n_sites)?;
    let n = p.n_sites;
    let mut terms = Vec::new();
    for j in 0..n {
        terms.push(Term::Hop {
            coeff: 1.0 / (2.0 * p.a),
            a: j,
            b: (j + 1) % n,
            links: 0,
        });
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        terms.push(Term::Number {
            coeff: sign * p.m,
            qubit: j,
        });
    }
    Ok(Hamiltonian { n_qubits: n, terms })
}

pub fn z2_1d_matter_qubit(j: usize) -> usize {
    2 * j
}

pub fn z2_1d_link_qubit(j: usize) -> usize {
    2 * j + 1
}

/// `e^{iπQ_j}` on matter site `j` as a Z string: `(-1)^j Z_j`.
pub fn charge_parity(j: usize, qubit: usize) -> ZString {
    ZString::new(&[qubit], if j % 2 == 0 { 1 } else { -1 })
}

/// ℤ₂ gauge field coupled to staggered matter on a periodic chain.
pub fn build_z2_1d(p: &Z2MatterParams) -> Result<(Hamiltonian, Vec<ZString>)> {
    check_staggered(p.n_sites)?;
    let n = p.n_sites;
    let mut terms = Vec::new();
    for j in 0..n {
        let next = (j + 1) % n;
        terms.push(Term::Hop {
            coeff: 1.0 / (2.0 * p.a),
            a: z2_1d_matter_qubit(j),
            b: z2_1d_matter_qubit(next),
            links: 1 << z2_1d_link_qubit(j),
        });
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        terms.push(Term::Number {
            coeff: sign * p.m,
            qubit: z2_1d_matter_qubit(j),
        });
        terms.push(Term::Z {
            coeff: p.e,
            op: ZString::new(&[z2_1d_link_qubit(j)], 1),
        });
    }
    let gauss = (0..n)
        .map(|j| {
            let left = z2_1d_link_qubit((j + n - 1) % n);
            let right = z2_1d_link_qubit(j);
            let parity = charge_parity(j, z2_1d_matter_qubit(j));
            ZString::new(&[z2_1d_matter_qubit(j), left, right], parity.sign)
        })
        .collect();
    Ok((
        Hamiltonian {
            n_qubits: 2 * n,
            terms,
        },
        gauss,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    X,
    Y,
}

/// Link layout of a rectangular ℤ₂ lattice, periodic in x.
#[derive(Debug, Clone, PartialEq)]
pub struct Z2Lattice {
    pub nx: usize,
    pub ny: usize,
    pub ybc: BoundaryCondition,
    links: Vec<(usize, usize, Direction)>,
    index: BTreeMap<(usize, usize, Direction), usize>,
}

impl Z2Lattice {
    pub fn new(nx: usize, ny: usize, ybc: BoundaryCondition) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidParameter(format!(
                "lattice needs nx, ny >= 2, got {nx}x{ny}"
            )));
        }
        let mut links = Vec::new();
        for jy in 0..ny {
            for jx in 0..nx {
                links.push((jx, jy, Direction::X));
                if ybc == BoundaryCondition::Periodic || jy + 1 < ny {
                    links.push((jx, jy, Direction::Y));
                }
            }
        }
        if links.len() > 62 {
            return Err(Error::InvalidParameter(format!(
                "{} link qubits exceed the 62-qubit register",
                links.len()
            )));
        }
        let index = links.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        Ok(Self {
            nx,
            ny,
            ybc,
            links,
            index,
        })
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[(usize, usize, Direction)] {
        &self.links
    }

    /// Qubit index of the link leaving site `(jx, jy)` in direction `dir`.
    pub fn link(&self, jx: usize, jy: usize, dir: Direction) -> Option<usize> {
        self.index.get(&(jx % self.nx, jy, dir)).copied()
    }

    fn wrap_y(&self, jy: isize) -> Option<usize> {
        let ny = self.ny as isize;
        match self.ybc {
            BoundaryCondition::Periodic => Some(jy.rem_euclid(ny) as usize),
            BoundaryCondition::Fixed => (0..ny).contains(&jy).then_some(jy as usize),
        }
    }

    /// Links touching site `(jx, jy)`: three at a fixed y boundary, else four.
    pub fn star(&self, jx: usize, jy: usize) -> Vec<usize> {
        let nx = self.nx;
        let mut out = vec![
            self.link(jx, jy, Direction::X).unwrap(),
            self.link((jx + nx - 1) % nx, jy, Direction::X).unwrap(),
        ];
        if let Some(l) = self.link(jx, jy, Direction::Y) {
            out.push(l);
        }
        if let Some(below) = self.wrap_y(jy as isize - 1) {
            if let Some(l) = self.link(jx, below, Direction::Y) {
                out.push(l);
            }
        }
        out
    }

    /// Plaquettes indexed by their lower-left site.
    pub fn plaquette_sites(&self) -> Vec<(usize, usize)> {
        let rows = match self.ybc {
            BoundaryCondition::Periodic => self.ny,
            BoundaryCondition::Fixed => self.ny - 1,
        };
        (0..rows)
            .flat_map(|jy| (0..self.nx).map(move |jx| (jx, jy)))
            .collect()
    }

    /// The four links `[bottom, right, top, left]` of plaquette `(jx, jy)`.
    pub fn plaquette(&self, jx: usize, jy: usize) -> [usize; 4] {
        let up = self.wrap_y(jy as isize + 1).expect("plaquette outside lattice");
        [
            self.link(jx, jy, Direction::X).unwrap(),
            self.link(jx + 1, jy, Direction::Y).unwrap(),
            self.link(jx, up, Direction::X).unwrap(),
            self.link(jx, jy, Direction::Y).unwrap(),
        ]
    }

    pub fn gauss_ops(&self) -> Vec<ZString> {
        (0..self.ny)
            .flat_map(|jy| (0..self.nx).map(move |jx| (jx, jy)))
            .map(|(jx, jy)| ZString::new(&self.star(jx, jy), 1))
            .collect()
    }

    /// Electric flux through non-contractible cuts; commute with `H` and all
    /// Gauss laws. The horizontal flux is only independent for periodic y.
    pub fn flux_ops(&self) -> Vec<ZString> {
        let mut out = vec![ZString::new(
            &(0..self.ny)
                .map(|jy| self.link(0, jy, Direction::X).unwrap())
                .collect::<Vec<_>>(),
            1,
        )];
        if self.ybc == BoundaryCondition::Periodic {
            out.push(ZString::new(
                &(0..self.nx)
                    .map(|jx| self.link(jx, 0, Direction::Y).unwrap())
                    .collect::<Vec<_>>(),
                1,
            ));
        }
        out
    }
}

/// Pure ℤ₂ gauge theory in 2+1d: `H = -K Σ_□ XXXX - g Σ_l Z`.
pub fn build_z2_2d(p: &Z2PureParams) -> Result<(Hamiltonian, Vec<ZString>)> {
    let lattice = Z2Lattice::new(p.nx, p.ny, p.ybc)?;
    Ok(z2_2d_on(&lattice, p.k, p.g))
}

pub fn z2_2d_on(lattice: &Z2Lattice, k: f64, g: f64) -> (Hamiltonian, Vec<ZString>) {
    let mut terms = Vec::new();
    for (jx, jy) in lattice.plaquette_sites() {
        let mask = lattice
            .plaquette(jx, jy)
            .iter()
            .fold(0u64, |m, &l| m | 1 << l);
        terms.push(Term::Flip { coeff: -k, mask });
    }
    for l in 0..lattice.n_links() {
        terms.push(Term::Z {
            coeff: -g,
            op: ZString::new(&[l], 1),
        });
    }
    (
        Hamiltonian {
            n_qubits: lattice.n_links(),
            terms,
        },
        lattice.gauss_ops(),
    )
}

/// Basis states with eigenvalue +1 under every operator in `constraints`.
pub fn physical_basis(n_qubits: usize, constraints: &[ZString]) -> Vec<u64> {
    (0..1u64 << n_qubits)
        .filter(|&b| constraints.iter().all(|g| g.eigenvalue(b) == 1))
        .collect()
}

#[derive(Debug, Clone)]
pub struct GroundStateResult {
    pub state: SparseState,
    pub energy: f64,
    pub physical_dim: usize,
    /// Orthonormal basis of the ground space; `state` is its first element.
    pub multiplet: Vec<SparseState>,
}

impl GroundStateResult {
    pub fn is_degenerate(&self) -> bool {
        self.multiplet.len() > 1
    }
}

/// Restricted blocks up to this size use the dense symmetric solver.
pub const DENSE_LIMIT: usize = 1536;

const DEGENERACY_TOL: f64 = 1e-8;

struct BlockSolution {
    energies: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

fn canonical_sign(v: &mut [f64]) {
    // Largest-magnitude amplitude (lowest index on ties) is made positive.
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn solve_block(h: &Hamiltonian, basis: &[u64]) -> Result<BlockSolution> {
    if basis.len() <= DENSE_LIMIT {
        let m = h.restricted(basis);
        let eig = m.symmetric_eigen();
        let mut order: Vec<usize> = (0..basis.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let e0 = eig.eigenvalues[order[0]];
        let tol = DEGENERACY_TOL * e0.abs().max(1.0);
        let mut energies = Vec::new();
        let mut vectors = Vec::new();
        for &k in order.iter().take_while(|&&k| eig.eigenvalues[k] - e0 < tol) {
            energies.push(eig.eigenvalues[k]);
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            canonical_sign(&mut v);
            vectors.push(v);
        }
        Ok(BlockSolution { energies, vectors })
    } else {
        let (e, mut v) = lanczos_ground(h, basis)?;
        canonical_sign(&mut v);
        Ok(BlockSolution {
            energies: vec![e],
            vectors: vec![v],
        })
    }
}

/// Lowest eigenpair of `h` restricted to `basis` by Lanczos iteration with
/// full reorthogonalization.
pub fn lanczos_ground(h: &Hamiltonian, basis: &[u64]) -> Result<(f64, Vec<f64>)> {
    let d = basis.len();
    let max_iter = d.min(400);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c);
    let mut q: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
    let n0 = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    q.iter_mut().for_each(|x| *x /= n0);

    let mut qs: Vec<Vec<f64>> = vec![q];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; d];
    let mut last_e = f64::INFINITY;
    let mut ritz: Option<(f64, Vec<f64>)> = None;
    for it in 0..max_iter {
        h.apply_restricted(basis, &qs[it], &mut w);
        let alpha: f64 = w.iter().zip(&qs[it]).map(|(a, b)| a * b).sum();
        alphas.push(alpha);
        // Full reorthogonalization, twice for stability.
        for _ in 0..2 {
            for qk in &qs {
                let c: f64 = w.iter().zip(qk).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(qk).for_each(|(a, b)| *a -= c * b);
            }
        }
        let beta = w.iter().map(|x| x * x).sum::<f64>().sqrt();

        let m = alphas.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let eig = t.symmetric_eigen();
        let (kmin, &e) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let resid = (beta * eig.eigenvectors[(m - 1, kmin)]).abs();
        let converged = resid < 1e-11 * e.abs().max(1.0) || beta < 1e-12 || m == d;
        if converged || it + 1 == max_iter {
            let coeffs = eig.eigenvectors.column(kmin);
            let mut v = vec![0.0; d];
            for (c, qk) in coeffs.iter().zip(&qs) {
                v.iter_mut().zip(qk).for_each(|(a, b)| *a += c * b);
            }
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= nv);
            ritz = Some((e, v));
            if converged || (last_e - e).abs() < 1e-13 {
                break;
            }
            return Err(Error::Numerical(format!(
                "Lanczos did not converge in {max_iter} iterations (residual {resid:.2e})"
            )));
        }
        last_e = e;
        betas.push(beta);
        w.iter_mut().for_each(|x| *x /= beta);
        qs.push(std::mem::replace(&mut w, vec![0.0; d]));
    }
    ritz.ok_or_else(|| Error::Numerical("empty Krylov space".into()))
}

/// Lowest-energy state in the simultaneous +1 eigenspace of `gauss`.
///
/// `symmetries` are further conserved diagonal quantities; the physical
/// basis is split into their joint eigenspaces and each is diagonalized
/// separately. Degenerate minima across or within blocks are returned in
/// `multiplet`; `state` is the first one in block-key order.
pub fn ground_state(
    h: &Hamiltonian,
    gauss: &[ZString],
    symmetries: &[Symmetry],
) -> Result<GroundStateResult> {
    let physical = physical_basis(h.n_qubits, gauss);
    if physical.is_empty() {
        return Err(Error::EmptyPhysicalSector);
    }
    let mut blocks: BTreeMap<Vec<i64>, Vec<u64>> = BTreeMap::new();
    for &b in &physical {
        let key = symmetries.iter().map(|s| s.value(b)).collect();
        blocks.entry(key).or_default().push(b);
    }
    let mut candidates: Vec<(f64, &Vec<u64>, Vec<f64>)> = Vec::new();
    for basis in blocks.values() {
        let sol = solve_block(h, basis)?;
        for (e, v) in sol.energies.into_iter().zip(sol.vectors) {
            candidates.push((e, basis, v));
        }
    }
    let e0 = candidates
        .iter()
        .map(|c| c.0)
        .fold(f64::INFINITY, f64::min);
    let tol = DEGENERACY_TOL * e0.abs().max(1.0);
    let multiplet: Vec<SparseState> = candidates
        .iter()
        .filter(|c| c.0 - e0 < tol)
        .map(|(_, basis, v)| SparseState {
            n_qubits: h.n_qubits,
            entries: basis
                .iter()
                .zip(v)
                .map(|(&b, &x)| (b, C64::new(x, 0.0)))
                .collect(),
        })
        .collect();
    Ok(GroundStateResult {
        state: multiplet[0].clone(),
        energy: e0,
        physical_dim: physical.len(),
        multiplet,
    })
}

/// Ground state of the spin chain, split by total particle number.
pub fn spin_chain_ground_state(p: &SpinChainParams) -> Result<GroundStateResult> {
    let h = build_spin_chain(p)?;
    let mask = (1u64 << p.n_sites) - 1;
    ground_state(&h, &[], &[Symmetry::Number { mask }])
}

pub fn z2_1d_ground_state(p: &Z2MatterParams) -> Result<GroundStateResult> {
    let (h, gauss) = build_z2_1d(p)?;
    let mask = (0..p.n_sites).fold(0u64, |m, j| m | 1 << z2_1d_matter_qubit(j));
    ground_state(&h, &gauss, &[Symmetry::Number { mask }])
}

pub fn z2_2d_ground_state(p: &Z2PureParams) -> Result<GroundStateResult> {
    let lattice = Z2Lattice::new(p.nx, p.ny, p.ybc)?;
    let (h, gauss) = z2_2d_on(&lattice, p.k, p.g);
    let sym: Vec<Symmetry> = lattice.flux_ops().into_iter().map(Symmetry::Z).collect();
    ground_state(&h, &gauss, &sym)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{commutator_norm, eigvalsh, hermiticity_error};

    fn occupation(state: &SparseState, mask: u64) -> BTreeMap<u32, f64> {
        let mut out = BTreeMap::new();
        for &(b, a) in &state.entries {
            *out.entry((b & mask).count_ones()).or_insert(0.0) += a.norm_sqr();
        }
        out
    }

    #[test]
    fn spin_chain_conserves_particle_number() {
        let h = build_spin_chain(&SpinChainParams {
            n_sites: 4,
            a: 0.7,
            m: 0.3,
        })
        .unwrap()
        .to_dense();
        assert!(hermiticity_error(&h) < 1e-12);
        let number = CMatrix::from_diagonal(&DVector::from_iterator(
            16,
            (0..16u64).map(|b| C64::new(b.count_ones() as f64, 0.0)),
        ));
        assert!(commutator_norm(&h, &number) < 1e-12);
    }

    #[test]
    fn odd_chain_rejected() {
        let p = SpinChainParams {
            n_sites: 5,
            a: 1.0,
            m: 0.1,
        };
        assert!(build_spin_chain(&p).is_err());
        let q = Z2MatterParams {
            n_sites: 6 + 1,
            a: 1.0,
            m: 1.0,
            e: 1.0,
        };
        assert!(build_z2_1d(&q).is_err());
    }

    #[test]
    fn single_particle_sector_is_tight_binding_ring() {
        let a = 0.5;
        let h = build_spin_chain(&SpinChainParams { n_sites: 4, a, m: 0.0 }).unwrap();
        let basis: Vec<u64> = (0..4).map(|j| 1u64 << j).collect();
        let mut got: Vec<f64> = h.restricted(&basis).symmetric_eigen().eigenvalues.iter().copied().collect();
        got.sort_by(f64::total_cmp);
        // Tight-binding oracle: t (|j><j+1| + h.c.) on a 4-ring.
        let t = 1.0 / (2.0 * a);
        let ring = DMatrix::from_fn(4, 4, |i, j| {
            if (i + 1) % 4 == j || (j + 1) % 4 == i {
                t
            } else {
                0.0
            }
        });
        let mut want: Vec<f64> = ring.symmetric_eigen().eigenvalues.iter().copied().collect();
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn weak_hopping_ground_state_is_a_product_state() {
        let gs = spin_chain_ground_state(&SpinChainParams {
            n_sites: 6,
            a: 1e6,
            m: 1.0,
        })
        .unwrap();
        let max = gs
            .state
            .entries
            .iter()
            .map(|(_, a)| a.norm_sqr())
            .fold(0.0, f64::max);
        assert!(max > 1.0 - 1e-9);
    }

    #[test]
    fn spin_chain_ground_state_is_half_filled() {
        let gs = spin_chain_ground_state(&SpinChainParams {
            n_sites: 8,
            a: 1.0,
            m: 0.05,
        })
        .unwrap();
        let occ = occupation(&gs.state, 0xff);
        assert!((occ.get(&4).copied().unwrap_or(0.0) - 1.0).abs() < 1e-12, "{occ:?}");
    }

    #[test]
    fn z2_1d_gauss_laws_commute_and_square_to_identity() {
        let (h, gauss) = build_z2_1d(&Z2MatterParams {
            n_sites: 4,
            a: 1.0,
            m: 0.5,
            e: 0.8,
        })
        .unwrap();
        let hd = h.to_dense();
        assert!(hermiticity_error(&hd) < 1e-12);
        let dense: Vec<CMatrix> = gauss.iter().map(|g| g.to_dense(8)).collect();
        for g in &dense {
            assert!(commutator_norm(&hd, g) < 1e-12);
            let sq = g * g;
            assert!(crate::hilbert::max_abs(&(sq - CMatrix::identity(256, 256))) < 1e-15);
            for g2 in &dense {
                assert!(commutator_norm(g, g2) < 1e-12);
            }
        }
    }

    #[test]
    fn z2_1d_strong_coupling_vacuum() {
        let p = Z2MatterParams {
            n_sites: 6,
            a: 1.0,
            m: 1.0,
            e: 1e3,
        };
        let gs = z2_1d_ground_state(&p).unwrap();
        let (b, a) = gs
            .state
            .entries
            .iter()
            .max_by(|x, y| x.1.norm_sqr().total_cmp(&y.1.norm_sqr()))
            .unwrap();
        assert!(a.norm_sqr() > 1.0 - 1e-6);
        for j in 0..6 {
            // Odd sites filled, even sites empty: zero charge everywhere.
            assert_eq!(bit(*b, z2_1d_matter_qubit(j)), j % 2 == 1);
            // Positive e favours σ̃ᶻ = -1, i.e. set link bits.
            assert!(bit(*b, z2_1d_link_qubit(j)));
        }
    }

    #[test]
    fn z2_2d_gauss_laws_commute() {
        for ybc in [BoundaryCondition::Fixed, BoundaryCondition::Periodic] {
            let (h, gauss) = build_z2_2d(&Z2PureParams {
                nx: 2,
                ny: 2,
                k: 1.0,
                g: 0.4,
                ybc,
            })
            .unwrap();
            let n = h.n_qubits;
            let hd = h.to_dense();
            let dense: Vec<CMatrix> = gauss.iter().map(|g| g.to_dense(n)).collect();
            for g in &dense {
                assert!(commutator_norm(&hd, g) < 1e-12);
                for g2 in &dense {
                    assert!(commutator_norm(g, g2) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fixed_boundary_gauss_law_uses_three_links() {
        let lat = Z2Lattice::new(3, 3, BoundaryCondition::Fixed).unwrap();
        assert_eq!(lat.star(1, 0).len(), 3);
        assert_eq!(lat.star(1, 2).len(), 3);
        assert_eq!(lat.star(1, 1).len(), 4);
        assert_eq!(lat.n_links(), 3 * 3 + 3 * 2);
    }

    #[test]
    fn electric_limit_is_trivial_product_state() {
        let gs = z2_2d_ground_state(&Z2PureParams {
            nx: 3,
            ny: 2,
            k: 1.0,
            g: 1e3,
            ybc: BoundaryCondition::Periodic,
        })
        .unwrap();
        let a0 = gs
            .state
            .entries
            .iter()
            .find(|(b, _)| *b == 0)
            .map(|(_, a)| a.norm_sqr())
            .unwrap();
        assert!(a0 > 1.0 - 1e-5);
        assert!(!gs.is_degenerate());
    }

    #[test]
    fn toric_code_limit() {
        let p = Z2PureParams {
            nx: 3,
            ny: 2,
            k: 1.0,
            g: 0.0,
            ybc: BoundaryCondition::Periodic,
        };
        let gs = z2_2d_ground_state(&p).unwrap();
        let lat = Z2Lattice::new(3, 2, BoundaryCondition::Periodic).unwrap();
        let n_plaq = lat.plaquette_sites().len() as f64;
        assert!((gs.energy + n_plaq).abs() < 1e-10);
        // Stabilizer counting: 4 logical sectors on the torus.
        assert_eq!(gs.multiplet.len(), 4);
        assert!(gs.is_degenerate());

        let fixed = z2_2d_ground_state(&Z2PureParams {
            ybc: BoundaryCondition::Fixed,
            ..p
        })
        .unwrap();
        let lat = Z2Lattice::new(3, 2, BoundaryCondition::Fixed).unwrap();
        assert!((fixed.energy + lat.plaquette_sites().len() as f64).abs() < 1e-10);
    }

    #[test]
    fn energy_matches_full_diagonalization_intersected_with_constraints() {
        let p = Z2MatterParams {
            n_sites: 4,
            a: 1.0,
            m: 0.3,
            e: 0.7,
        };
        let (h, gauss) = build_z2_1d(&p).unwrap();
        let gs = ground_state(&h, &gauss, &[]).unwrap();
        let hd = h.to_dense();
        let (vals, vecs) = crate::hilbert::eigh(&hd);
        // Lowest full-space eigenvector lying in the physical subspace.
        let physical = physical_basis(8, &gauss);
        let best = (0..vals.len())
            .find(|&k| {
                let w: f64 = physical.iter().map(|&b| vecs[(b as usize, k)].norm_sqr()).sum();
                w > 1.0 - 1e-8
            })
            .unwrap();
        assert!((vals[best] - gs.energy).abs() < 1e-10);
        assert!((gs.state.norm() - 1.0).abs() < 1e-12);
        for g in &gauss {
            for &(b, a) in &gs.state.entries {
                if a.norm() > 1e-12 {
                    assert_eq!(g.eigenvalue(b), 1);
                }
            }
        }
    }

    #[test]
    fn physical_dimension_matches_exhaustive_count() {
        for ybc in [BoundaryCondition::Fixed, BoundaryCondition::Periodic] {
            let lat = Z2Lattice::new(3, 2, ybc).unwrap();
            let gauss = lat.gauss_ops();
            let count = (0..1u64 << lat.n_links())
                .filter(|&b| gauss.iter().all(|g| g.eigenvalue(b) == 1))
                .count();
            let (h, _) = z2_2d_on(&lat, 1.0, 0.3);
            let gs = ground_state(&h, &gauss, &[]).unwrap();
            assert_eq!(gs.physical_dim, count);
            // Independent constraints: sites - 1.
            assert_eq!(count, 1 << (lat.n_links() - (3 * 2 - 1)));
        }
    }

    #[test]
    fn ground_state_is_variational() {
        let p = Z2MatterParams {
            n_sites: 4,
            a: 1.0,
            m: 0.5,
            e: 1.0,
        };
        let (h, gauss) = build_z2_1d(&p).unwrap();
        let gs = ground_state(&h, &gauss, &[]).unwrap();
        let e_gs = h.expectation(&gs.state);
        assert!((e_gs - gs.energy).abs() < 1e-10);
        let physical = physical_basis(8, &gauss);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let mut entries: Vec<(u64, C64)> = physical
                .iter()
                .map(|&b| (b, C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)))
                .collect();
            let n = entries.iter().map(|(_, a)| a.norm_sqr()).sum::<f64>().sqrt();
            entries.iter_mut().for_each(|(_, a)| *a /= n);
            let phi = SparseState { n_qubits: 8, entries };
            assert!(e_gs <= h.expectation(&phi) + 1e-12);
        }
    }

    #[test]
    fn restriction_commutes_with_projection() {
        // Eigenvalues of H restricted to the physical span equal the full-space
        // eigenvalues whose eigenvectors live in that span.
        let lat = Z2Lattice::new(2, 2, BoundaryCondition::Fixed).unwrap();
        let (h, gauss) = z2_2d_on(&lat, 1.0, 0.37);
        let physical = physical_basis(h.n_qubits, &gauss);
        assert!(h.closed_on(&physical));
        let mut restricted: Vec<f64> = h.restricted(&physical).symmetric_eigen().eigenvalues.iter().copied().collect();
        restricted.sort_by(f64::total_cmp);
        let n = h.n_qubits;
        let proj = CMatrix::from_diagonal(&DVector::from_iterator(
            1 << n,
            (0..1u64 << n).map(|b| if physical.binary_search(&b).is_ok() { C64::new(1.0, 0.0) } else { ZERO }),
        ));
        // Push the unphysical complement far up; the lowest levels are then the
        // physical spectrum.
        let shift = CMatrix::identity(1 << n, 1 << n) - &proj;
        let hp = &proj * h.to_dense() * &proj + shift * C64::new(1e3, 0.0);
        let mut full: Vec<f64> = eigvalsh(&hp);
        full.truncate(physical.len());
        full.sort_by(f64::total_cmp);
        for (a, b) in restricted.iter().zip(&full) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn lanczos_agrees_with_dense_solver() {
        let lat = Z2Lattice::new(3, 2, BoundaryCondition::Periodic).unwrap();
        let (h, gauss) = z2_2d_on(&lat, 1.0, 0.3);
        let physical = physical_basis(h.n_qubits, &gauss);
        let (e, v) = lanczos_ground(&h, &physical).unwrap();
        let dense = h.restricted(&physical).symmetric_eigen();
        let e0 = dense.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((e - e0).abs() < 1e-9);
        assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

//! Symmetry sectors of reduced density matrices.
//!
//! A subsystem geometry fixes which qubits form `A`, which Gauss laws are
//! fully contained in `A` (these define the physical support), and which
//! diagonal operators label the blocks of `ρ_A`.
//!
//! 2+1d cut, shown for `N_x^A = 3` (qubits in `A` marked with `*`):
//!
//! ```text
//!          j_x=0    1     2 | 3 ...
//!   j_y=1   o--*--o--*--o   |--x--
//!           *     *     *   |
//!   j_y=0   o--*--o--*--o   |--x--
//!           bL          bR
//! ```
//!
//! The boundary labels are the Gauss laws of the edge columns with the
//! x link that leaves `A` dropped, i.e. the electric field on that link. The
//! ribbon is the product of `Z` on the y links at `j_y = 0` across `A`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, SubsystemMap, C64, TOL};
use crate::models::{z2_1d_link_qubit, z2_1d_matter_qubit, Direction, Z2Lattice, ZString, BoundaryCondition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pn,
    Z2OneD,
    Z2TwoD,
}

/// Quantum numbers of a block. Fields not used by a model are empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SectorLabel {
    pub kind: ModelKind,
    pub n_a: Option<u32>,
    pub s_l: Option<i8>,
    pub s_r: Option<i8>,
    pub boundary: Vec<i8>,
    pub ribbon: Option<i8>,
}

fn sign_char(s: i8) -> char {
    if s > 0 {
        '+'
    } else {
        '-'
    }
}

impl fmt::Display for SectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(n) = self.n_a {
            parts.push(format!("nA={n}"));
        }
        if let Some(s) = self.s_l {
            parts.push(format!("sL={}", sign_char(s)));
        }
        if let Some(s) = self.s_r {
            parts.push(format!("sR={}", sign_char(s)));
        }
        if !self.boundary.is_empty() {
            parts.push(format!(
                "b={}",
                self.boundary.iter().map(|&s| sign_char(s)).collect::<String>()
            ));
        }
        if let Some(r) = self.ribbon {
            parts.push(format!("r={}", sign_char(r)));
        }
        write!(f, "{}", parts.join(","))
    }
}

/// A plaquette fully inside `A`, with its links as local qubit indices
/// ordered `[bottom, right, top, left]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalPlaquette {
    pub jx: usize,
    pub jy: usize,
    pub qubits: [usize; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    /// Number-conserving chain; `A` is sites `0..n_a`.
    Pn { n_sites: usize, n_a: usize },
    /// ℤ₂ chain; `A` is matter sites `0..n_a` with the links between them.
    Z2Chain { n_sites: usize, n_a: usize },
    /// ℤ₂ plane; `A` is columns `0..nxa`.
    Z2Plane { lattice: Z2Lattice, nxa: usize },
}

#[derive(Debug, Clone)]
pub struct SubsystemGeometry {
    pub kind: ModelKind,
    pub layout: Layout,
    pub map: SubsystemMap,
    /// Local mask of matter qubits.
    pub matter: u64,
    /// Gauss laws contained in `A`, in local indices; physical outcomes have
    /// eigenvalue +1 under all of them.
    pub support: Vec<ZString>,
    /// Boundary label operators in local indices.
    pub boundary: Vec<ZString>,
    /// Ribbon operator in local indices (present for every 2+1d geometry).
    pub ribbon_op: Option<ZString>,
    /// Whether the ribbon is an independent label.
    pub ribbon_label: bool,
}

fn local_zstring(z: &ZString, keep: &[usize]) -> ZString {
    let qubits: Vec<usize> = z
        .qubits()
        .iter()
        .map(|q| keep.binary_search(q).expect("operator leaves subsystem"))
        .collect();
    ZString::new(&qubits, z.sign)
}

impl SubsystemGeometry {
    /// Number-conserving chain of `n_sites`, keeping the first `n_a` sites.
    pub fn pn(n_sites: usize, n_a: usize) -> Result<Self> {
        if n_a == 0 || n_a > n_sites || n_sites > 62 {
            return Err(Error::InvalidParameter(format!(
                "subsystem of {n_a} sites in a chain of {n_sites}"
            )));
        }
        Ok(Self {
            kind: ModelKind::Pn,
            layout: Layout::Pn { n_sites, n_a },
            map: SubsystemMap::new((0..n_a).collect(), n_sites)?,
            matter: (1u64 << n_a) - 1,
            support: vec![],
            boundary: vec![],
            ribbon_op: None,
            ribbon_label: false,
        })
    }

    /// ℤ₂ chain of `n_sites` with `A` = sites `0..n_a` and the `n_a - 1`
    /// links between them.
    pub fn z2_1d(n_sites: usize, n_a: usize) -> Result<Self> {
        if n_a < 2 || n_a >= n_sites {
            return Err(Error::InvalidParameter(format!(
                "subsystem of {n_a} sites in a ℤ₂ chain of {n_sites}"
            )));
        }
        let keep: Vec<usize> = (0..2 * n_a - 1).collect();
        let matter = (0..n_a).fold(0u64, |m, j| m | 1 << z2_1d_matter_qubit(j));
        let support = (1..n_a - 1)
            .map(|j| {
                let sign = if j % 2 == 0 { 1 } else { -1 };
                ZString::new(
                    &[
                        z2_1d_matter_qubit(j),
                        z2_1d_link_qubit(j - 1),
                        z2_1d_link_qubit(j),
                    ],
                    sign,
                )
            })
            .collect();
        let r = n_a - 1;
        let boundary = vec![
            ZString::new(&[z2_1d_matter_qubit(0), z2_1d_link_qubit(0)], 1),
            ZString::new(
                &[z2_1d_matter_qubit(r), z2_1d_link_qubit(r - 1)],
                if r % 2 == 0 { 1 } else { -1 },
            ),
        ];
        Ok(Self {
            kind: ModelKind::Z2OneD,
            layout: Layout::Z2Chain { n_sites, n_a },
            map: SubsystemMap::new(keep, 2 * n_sites)?,
            matter,
            support,
            boundary,
            ribbon_op: None,
            ribbon_label: false,
        })
    }

    /// ℤ₂ plane with `A` = columns `0..nxa`.
    pub fn z2_2d(lattice: &Z2Lattice, nxa: usize) -> Result<Self> {
        if nxa < 2 || nxa >= lattice.nx {
            return Err(Error::InvalidParameter(format!(
                "subsystem of {nxa} columns in a lattice of width {}",
                lattice.nx
            )));
        }
        let mut keep: Vec<usize> = lattice
            .links()
            .iter()
            .enumerate()
            .filter(|(_, &(jx, _, dir))| match dir {
                Direction::Y => jx < nxa,
                Direction::X => jx + 1 < nxa,
            })
            .map(|(i, _)| i)
            .collect();
        keep.sort_unstable();
        let in_a = |l: &usize| keep.binary_search(l).is_ok();

        let mut support = Vec::new();
        for jy in 0..lattice.ny {
            for jx in 1..nxa - 1 {
                support.push(local_zstring(&ZString::new(&lattice.star(jx, jy), 1), &keep));
            }
        }
        let mut boundary = Vec::new();
        for jx in [0, nxa - 1] {
            for jy in 0..lattice.ny {
                let links: Vec<usize> = lattice.star(jx, jy).into_iter().filter(in_a).collect();
                boundary.push(local_zstring(&ZString::new(&links, 1), &keep));
            }
        }
        let ribbon = ZString::new(
            &(0..nxa)
                .map(|jx| lattice.link(jx, 0, Direction::Y).unwrap())
                .collect::<Vec<_>>(),
            1,
        );
        Ok(Self {
            kind: ModelKind::Z2TwoD,
            layout: Layout::Z2Plane {
                lattice: lattice.clone(),
                nxa,
            },
            map: SubsystemMap::new(keep.clone(), lattice.n_links())?,
            matter: 0,
            support,
            boundary,
            ribbon_op: Some(local_zstring(&ribbon, &keep)),
            ribbon_label: lattice.ybc == BoundaryCondition::Periodic,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.map.keep().len()
    }

    /// Local index of a full-register qubit inside `A`.
    pub fn local(&self, qubit: usize) -> Option<usize> {
        self.map.keep().binary_search(&qubit).ok()
    }

    pub fn is_physical(&self, b: u64) -> bool {
        self.support.iter().all(|g| g.eigenvalue(b) == 1)
    }

    /// Plaquettes whose four links all lie in `A` (2+1d only).
    pub fn plaquettes(&self) -> Vec<LocalPlaquette> {
        let Layout::Z2Plane { lattice, .. } = &self.layout else {
            return vec![];
        };
        lattice
            .plaquette_sites()
            .into_iter()
            .filter_map(|(jx, jy)| {
                let links = lattice.plaquette(jx, jy);
                let mut qubits = [0; 4];
                for (slot, l) in qubits.iter_mut().zip(links) {
                    *slot = self.local(l)?;
                }
                Some(LocalPlaquette { jx, jy, qubits })
            })
            .collect()
    }

    /// Local `(matter j, link (j,j+1), matter j+1)` triples (ℤ₂ chain only).
    pub fn gauge_triples(&self) -> Vec<[usize; 3]> {
        let Layout::Z2Chain { n_a, .. } = self.layout else {
            return vec![];
        };
        (0..n_a - 1)
            .map(|j| {
                [
                    z2_1d_matter_qubit(j),
                    z2_1d_link_qubit(j),
                    z2_1d_matter_qubit(j + 1),
                ]
            })
            .collect()
    }

    /// Local matter qubits in site order.
    pub fn matter_qubits(&self) -> Vec<usize> {
        (0..self.n_qubits())
            .filter(|q| (self.matter >> q) & 1 == 1)
            .collect()
    }

    /// Every diagonal operator a symmetric circuit must commute with.
    pub fn symmetry_ops(&self) -> Vec<ZString> {
        let mut out = self.support.clone();
        out.extend(self.boundary.iter().copied());
        out.extend(self.ribbon_op);
        out
    }
}

/// Sector of a subsystem bitstring, computed from the bitstring alone.
pub fn sector_of_bitstring(b: u64, geom: &SubsystemGeometry) -> Result<SectorLabel> {
    let n = geom.n_qubits();
    if n < 64 && b >> n != 0 {
        return Err(Error::DimensionMismatch(format!(
            "bitstring {b:#b} has more than {n} bits"
        )));
    }
    if !geom.is_physical(b) {
        return Err(Error::UnphysicalBitstring(b));
    }
    let n_a = (geom.kind != ModelKind::Z2TwoD).then(|| (b & geom.matter).count_ones());
    let (s_l, s_r, boundary) = match geom.kind {
        ModelKind::Pn => (None, None, vec![]),
        ModelKind::Z2OneD => (
            Some(geom.boundary[0].eigenvalue(b)),
            Some(geom.boundary[1].eigenvalue(b)),
            vec![],
        ),
        ModelKind::Z2TwoD => (
            None,
            None,
            geom.boundary.iter().map(|z| z.eigenvalue(b)).collect(),
        ),
    };
    let ribbon = if geom.ribbon_label {
        geom.ribbon_op.map(|z| z.eigenvalue(b))
    } else {
        None
    };
    Ok(SectorLabel {
        kind: geom.kind,
        n_a,
        s_l,
        s_r,
        boundary,
        ribbon,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    pub label: SectorLabel,
    /// Subsystem basis states of the block, ascending.
    pub basis: Vec<u64>,
}

impl Sector {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

/// All populated sectors of a geometry with a reverse lookup table.
#[derive(Debug, Clone)]
pub struct SectorPartition {
    pub n_qubits: usize,
    pub sectors: Vec<Sector>,
    lookup: Vec<u32>,
    position: Vec<u32>,
}

const UNPHYSICAL: u32 = u32::MAX;

impl SectorPartition {
    /// Sector index and in-block position of a subsystem bitstring.
    pub fn locate(&self, b: u64) -> Option<(usize, usize)> {
        let s = *self.lookup.get(b as usize)?;
        (s != UNPHYSICAL).then(|| (s as usize, self.position[b as usize] as usize))
    }

    pub fn sector_index(&self, label: &SectorLabel) -> Option<usize> {
        self.sectors.iter().position(|s| &s.label == label)
    }

    pub fn support_dim(&self) -> usize {
        self.sectors.iter().map(Sector::dim).sum()
    }

    pub fn max_dim(&self) -> usize {
        self.sectors.iter().map(Sector::dim).max().unwrap_or(0)
    }
}

/// Enumerate all sectors by classifying every subsystem bitstring.
pub fn enumerate_sectors(geom: &SubsystemGeometry) -> Result<SectorPartition> {
    let n = geom.n_qubits();
    if n > 24 {
        return Err(Error::InvalidParameter(format!(
            "subsystem of {n} qubits is too large to enumerate"
        )));
    }
    let mut groups: BTreeMap<SectorLabel, Vec<u64>> = BTreeMap::new();
    for b in 0..1u64 << n {
        if geom.is_physical(b) {
            groups.entry(sector_of_bitstring(b, geom)?).or_default().push(b);
        }
    }
    let mut lookup = vec![UNPHYSICAL; 1 << n];
    let mut position = vec![0u32; 1 << n];
    let sectors: Vec<Sector> = groups
        .into_iter()
        .map(|(label, basis)| Sector { label, basis })
        .collect();
    for (s, sector) in sectors.iter().enumerate() {
        for (k, &b) in sector.basis.iter().enumerate() {
            lookup[b as usize] = s as u32;
            position[b as usize] = k as u32;
        }
    }
    Ok(SectorPartition {
        n_qubits: n,
        sectors,
        lookup,
        position,
    })
}

/// One block of a block-diagonal density matrix.
#[derive(Debug, Clone)]
pub struct Block {
    /// Unnormalized block `ρ_{A,s}`.
    pub rho: CMatrix,
    pub weight: f64,
}

impl Block {
    /// `ρ̄ = ρ / p_s`; `None` for an unpopulated block.
    pub fn normalized(&self) -> Option<CMatrix> {
        (self.weight > POPULATED).then(|| &self.rho / C64::new(self.weight, 0.0))
    }
}

/// Weight below which a sector counts as unpopulated.
pub const POPULATED: f64 = 1e-12;

/// Block-diagonal `ρ_A`; `blocks[s]` belongs to `partition.sectors[s]`.
#[derive(Debug, Clone)]
pub struct BlockDensityMatrix {
    pub blocks: Vec<Block>,
}

impl BlockDensityMatrix {
    pub fn weights(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.weight).collect()
    }

    pub fn populated(&self) -> impl Iterator<Item = (usize, &Block)> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.weight > POPULATED)
    }

    /// Reassemble the full `2^n × 2^n` matrix.
    pub fn to_dense(&self, partition: &SectorPartition) -> CMatrix {
        let dim = 1usize << partition.n_qubits;
        let mut out = CMatrix::zeros(dim, dim);
        for (block, sector) in self.blocks.iter().zip(&partition.sectors) {
            for (r, &br) in sector.basis.iter().enumerate() {
                for (c, &bc) in sector.basis.iter().enumerate() {
                    out[(br as usize, bc as usize)] = block.rho[(r, c)];
                }
            }
        }
        out
    }
}

/// Split `ρ_A` into sector blocks, rejecting states with weight outside the
/// blocks.
pub fn block_decompose(rho: &CMatrix, partition: &SectorPartition) -> Result<BlockDensityMatrix> {
    let dim = 1usize << partition.n_qubits;
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "ρ_A is {}x{}, partition expects {dim}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let mut leakage: f64 = 0.0;
    for c in 0..dim {
        let sc = partition.locate(c as u64).map(|x| x.0);
        for r in 0..dim {
            let sr = partition.locate(r as u64).map(|x| x.0);
            if sr.is_none() || sr != sc {
                leakage = leakage.max(rho[(r, c)].norm());
            }
        }
    }
    if leakage > TOL.leakage {
        return Err(Error::BlockLeakage(leakage));
    }
    let blocks = partition
        .sectors
        .iter()
        .map(|s| {
            let d = s.dim();
            let m = CMatrix::from_fn(d, d, |r, c| rho[(s.basis[r] as usize, s.basis[c] as usize)]);
            let weight = (0..d).map(|k| m[(k, k)].re).sum();
            Block { rho: m, weight }
        })
        .collect();
    Ok(BlockDensityMatrix { blocks })
}

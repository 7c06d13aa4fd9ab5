//! Exact reduced states of model ground states, split into sector blocks.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hilbert::partial_trace_sparse;
use crate::models::{
    spin_chain_ground_state, z2_1d_ground_state, z2_2d_ground_state, GroundStateResult, SpinChainParams,
    Z2Lattice, Z2MatterParams, Z2PureParams,
};
use crate::sectors::{block_decompose, enumerate_sectors, BlockDensityMatrix, SectorPartition, SubsystemGeometry};

/// A model and the subsystem `A` to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    SpinChain { params: SpinChainParams, n_a: usize },
    Z2Chain { params: Z2MatterParams, n_a: usize },
    Z2Plane { params: Z2PureParams, nxa: usize },
}

impl ModelSpec {
    pub fn geometry(&self) -> Result<SubsystemGeometry> {
        match self {
            ModelSpec::SpinChain { params, n_a } => SubsystemGeometry::pn(params.n_sites, *n_a),
            ModelSpec::Z2Chain { params, n_a } => SubsystemGeometry::z2_1d(params.n_sites, *n_a),
            ModelSpec::Z2Plane { params, nxa } => {
                SubsystemGeometry::z2_2d(&Z2Lattice::new(params.nx, params.ny, params.ybc)?, *nxa)
            }
        }
    }

    pub fn ground_state(&self) -> Result<GroundStateResult> {
        match self {
            ModelSpec::SpinChain { params, .. } => spin_chain_ground_state(params),
            ModelSpec::Z2Chain { params, .. } => z2_1d_ground_state(params),
            ModelSpec::Z2Plane { params, .. } => z2_2d_ground_state(params),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReducedState {
    pub geom: SubsystemGeometry,
    pub partition: SectorPartition,
    pub rho: BlockDensityMatrix,
    pub energy: f64,
}

/// Ground state of `spec`, traced down to `A` and split into blocks.
pub fn reduced_ground_state(spec: &ModelSpec) -> Result<ReducedState> {
    let geom = spec.geometry()?;
    let partition = enumerate_sectors(&geom)?;
    let gs = spec.ground_state()?;
    let rho_a = partial_trace_sparse(&gs.state, &geom.map)?;
    let rho = block_decompose(&rho_a, &partition)?;
    Ok(ReducedState {
        geom,
        partition,
        rho,
        energy: gs.energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BoundaryCondition;

    #[test]
    fn weights_sum_to_one() {
        let spec = ModelSpec::Z2Chain {
            params: Z2MatterParams { n_sites: 6, a: 1.0, m: 0.5, e: 1.0 },
            n_a: 3,
        };
        let r = reduced_ground_state(&spec).unwrap();
        assert!((r.rho.weights().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let plane = ModelSpec::Z2Plane {
            params: Z2PureParams { nx: 5, ny: 2, k: 1.0, g: 0.3, ybc: BoundaryCondition::Fixed },
            nxa: 3,
        };
        let r = reduced_ground_state(&plane).unwrap();
        assert!((r.rho.weights().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn spec_roundtrips() {
        let spec = ModelSpec::SpinChain { params: SpinChainParams { n_sites: 4, a: 1.0, m: 0.1 }, n_a: 2 };
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains("\"model\":\"spin_chain\""));
        assert_eq!(serde_json::from_str::<ModelSpec>(&s).unwrap(), spec);
    }
}

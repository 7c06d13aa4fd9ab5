//! Run configuration. One TOML document describes one run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use symrm_core::circuits::{EnsembleConfig, Pairing, Scheme, UnitarySource};
use symrm_core::models::{BoundaryCondition, SpinChainParams, Z2MatterParams, Z2PureParams};
use symrm_core::states::ModelSpec;

use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    DesignCheck,
    Purity,
    Shadows,
    Eht,
    GapScan,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::DesignCheck => "design-check",
            Pipeline::Purity => "purity",
            Pipeline::Shadows => "shadows",
            Pipeline::Eht => "eht",
            Pipeline::GapScan => "gap-scan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[default]
    Circuits,
    /// Exact Haar unitaries per block.
    Haar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    #[serde(default)]
    pub source: SourceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    /// Defaults to the scheme's saturation depth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[serde(default)]
    pub pairing: Pairing,
    /// Circuits per run (N_E).
    pub n_e: usize,
    /// Shots per circuit (N_M); absent means exact probabilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    /// Snapshots for the shadow pipeline (N_S).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_s: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    /// Largest admissible sector dimension.
    pub max_block_dim: usize,
    /// Largest admissible total qubit count of the model.
    pub max_qubits: usize,
    /// Largest admissible number of sampled unitaries per run.
    pub max_samples: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_block_dim: 1024, max_qubits: 32, max_samples: 1 << 22 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSpec {
    pub eps0: f64,
    /// Index tuples per sector; defaults by subsystem size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_indices: Option<usize>,
    pub checkpoint_start: usize,
    pub nonzero_only: bool,
    /// Also run the exact-Haar oracle on the same blocks.
    pub oracle: bool,
    /// Extrapolate crossings beyond the last checkpoint.
    pub extrapolate: bool,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self { eps0: 1e-2, n_indices: None, checkpoint_start: 16, nonzero_only: true, oracle: true, extrapolate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PuritySpec {
    pub k_max: usize,
    /// Write per-outcome records to JSON lines.
    pub records: bool,
}

impl Default for PuritySpec {
    fn default() -> Self {
        Self { k_max: 5, records: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShadowSpec {
    /// First checkpoint of the convergence table; doubles up to N_S.
    pub checkpoint_start: u64,
    pub records: bool,
}

impl Default for ShadowSpec {
    fn default() -> Self {
        Self { checkpoint_start: 256, records: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GapSpec {
    /// Low band size from the stabilizer state (`g = 0`) at the same geometry.
    Toric,
    Largest,
    Fixed { m: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EhtSpec {
    pub gap: GapSpec,
    /// Values of `g` (with `k` fixed) scanned by the gap pipeline.
    pub epsilons: Vec<f64>,
    pub starts: usize,
    pub max_evals: usize,
    pub polish_iterations: usize,
}

impl Default for EhtSpec {
    fn default() -> Self {
        Self {
            gap: GapSpec::Toric,
            epsilons: vec![0.075, 0.15, 0.3, 0.4, 0.5],
            starts: 8,
            max_evals: 3000,
            polish_iterations: 60,
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    pub master_seed: u64,
    /// Relative paths resolve against the output root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Worker threads; defaults to the available cores. Results do not
    /// depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub model: ModelSpec,
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub design: DesignSpec,
    #[serde(default)]
    pub purity: PuritySpec,
    #[serde(default)]
    pub shadows: ShadowSpec,
    #[serde(default)]
    pub eht: EhtSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }

    /// Desk-scale defaults for each pipeline.
    pub fn preset(pipeline: Pipeline) -> Self {
        let z2_chain = ModelSpec::Z2Chain { params: Z2MatterParams { n_sites: 10, a: 1.0, m: 0.1, e: 0.8 }, n_a: 5 };
        let (model, ensemble, repetitions) = match pipeline {
            Pipeline::DesignCheck => (
                ModelSpec::SpinChain { params: SpinChainParams { n_sites: 16, a: 1.0, m: 0.1 }, n_a: 6 },
                EnsembleSpec { scheme: Some(Scheme::Pn2q), n_e: 4096, ..EnsembleSpec::bare() },
                1,
            ),
            Pipeline::Purity => (
                z2_chain,
                EnsembleSpec { scheme: Some(Scheme::Gauge3q), n_e: 1024, ..EnsembleSpec::bare() },
                1,
            ),
            Pipeline::Shadows => (
                z2_chain,
                EnsembleSpec { scheme: Some(Scheme::Gauge3q), n_e: 0, n_s: Some(1 << 14), ..EnsembleSpec::bare() },
                1,
            ),
            Pipeline::Eht => (
                ModelSpec::Z2Plane {
                    params: Z2PureParams { nx: 8, ny: 2, k: 1.0, g: 0.2, ybc: BoundaryCondition::Fixed },
                    nxa: 3,
                },
                EnsembleSpec { scheme: Some(Scheme::Plaquette2d), n_e: 50, shots: Some(1024), ..EnsembleSpec::bare() },
                1,
            ),
            Pipeline::GapScan => (
                ModelSpec::Z2Plane {
                    params: Z2PureParams { nx: 6, ny: 2, k: 1.0, g: 0.0, ybc: BoundaryCondition::Periodic },
                    nxa: 3,
                },
                EnsembleSpec { scheme: Some(Scheme::Plaquette2d), n_e: 50, shots: Some(1024), ..EnsembleSpec::bare() },
                5,
            ),
        };
        Self {
            pipeline,
            master_seed: 1,
            output_dir: None,
            repetitions,
            threads: None,
            model,
            ensemble,
            limits: Limits::default(),
            design: DesignSpec::default(),
            purity: PuritySpec::default(),
            shadows: ShadowSpec::default(),
            eht: EhtSpec::default(),
        }
    }

    /// Circuit depth after applying the scheme default.
    pub fn layers(&self) -> Option<usize> {
        self.ensemble.layers.or(self.ensemble.scheme.map(Scheme::default_layers))
    }

    /// Unitary source for repetition `rep`.
    pub fn source(&self, rep: usize) -> Result<UnitarySource, HarnessError> {
        let seed = derive_seed(self.master_seed, rep, "unitaries");
        match self.ensemble.source {
            SourceKind::Haar => Ok(UnitarySource::Haar { master_seed: seed }),
            SourceKind::Circuits => {
                let scheme = self
                    .ensemble
                    .scheme
                    .ok_or_else(|| HarnessError::Config("ensemble.scheme: required for circuit sources".into()))?;
                Ok(UnitarySource::Circuits(EnsembleConfig {
                    scheme,
                    layers: self.layers().unwrap_or(scheme.default_layers()),
                    n_e: self.ensemble.n_e,
                    master_seed: seed,
                    pairing: self.ensemble.pairing,
                }))
            }
        }
    }
}

impl EnsembleSpec {
    fn bare() -> Self {
        Self { source: SourceKind::Circuits, scheme: None, layers: None, pairing: Pairing::AllPairs, n_e: 0, shots: None, n_s: None }
    }
}

/// Seed for one repetition and purpose, derived from the master seed.
pub fn derive_seed(master_seed: u64, rep: usize, purpose: &str) -> u64 {
    use rand::RngCore;
    symrm_core::circuits::stream_rng(master_seed, rep as u64, purpose).next_u64()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

//! Static checks on a configuration. Nothing here runs a simulation.

use serde::{Deserialize, Serialize};
use symrm_core::sectors::ModelKind;
use symrm_core::states::ModelSpec;

use crate::config::{ExperimentConfig, GapSpec, Pipeline, SourceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub level: Level,
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        self.level == Level::Error
    }
}

fn model_kind(m: &ModelSpec) -> ModelKind {
    match m {
        ModelSpec::SpinChain { .. } => ModelKind::Pn,
        ModelSpec::Z2Chain { .. } => ModelKind::Z2OneD,
        ModelSpec::Z2Plane { .. } => ModelKind::Z2TwoD,
    }
}

#[derive(Default)]
struct Report(Vec<Diagnostic>);

impl Report {
    fn error(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(Diagnostic { level: Level::Error, field: field.into(), message: message.into() });
    }
    fn warn(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(Diagnostic { level: Level::Warning, field: field.into(), message: message.into() });
    }
}

fn check_model(c: &ExperimentConfig, r: &mut Report) {
    let chain = |r: &mut Report, n_sites: usize, n_a: usize| {
        if n_sites % 2 == 1 {
            r.error("model.params.n_sites", format!("staggered models need an even site count, got {n_sites}"));
        } else if n_sites < 4 {
            r.error("model.params.n_sites", format!("need at least 4 sites, got {n_sites}"));
        }
        if n_a == 0 || n_a >= n_sites {
            r.error("model.n_a", format!("subsystem size {n_a} outside 1..{n_sites}"));
        }
    };
    match &c.model {
        ModelSpec::SpinChain { params, n_a } => {
            chain(r, params.n_sites, *n_a);
            if params.a <= 0.0 {
                r.error("model.params.a", "lattice spacing must be positive");
            }
        }
        ModelSpec::Z2Chain { params, n_a } => {
            chain(r, params.n_sites, *n_a);
            if params.a <= 0.0 {
                r.error("model.params.a", "lattice spacing must be positive");
            }
        }
        ModelSpec::Z2Plane { params, nxa } => {
            if params.nx < 2 || params.ny < 2 {
                r.error("model.params", format!("lattice needs nx, ny >= 2, got {}x{}", params.nx, params.ny));
            }
            if *nxa < 2 || *nxa >= params.nx {
                r.error("model.nxa", format!("subsystem width {nxa} outside 2..{}", params.nx));
            }
        }
    }
}

fn check_ensemble(c: &ExperimentConfig, r: &mut Report) {
    let e = &c.ensemble;
    match (e.source, e.scheme) {
        (SourceKind::Circuits, None) => r.error("ensemble.scheme", "required for circuit sources"),
        (SourceKind::Circuits, Some(s)) => {
            if s.model() != model_kind(&c.model) {
                r.error("ensemble.scheme", format!("scheme {s:?} does not act on a {:?} model", model_kind(&c.model)));
            }
            if let Some(l) = e.layers {
                if l == 0 {
                    r.error("ensemble.layers", "need at least one layer");
                } else if l < s.default_layers() {
                    r.warn(
                        "ensemble.layers",
                        format!(
                            "{l} layers is below the {} at which this scheme saturates; the design error may plateau above 1e-2",
                            s.default_layers()
                        ),
                    );
                }
            }
        }
        (SourceKind::Haar, Some(_)) => r.warn("ensemble.scheme", "ignored for Haar sources"),
        (SourceKind::Haar, None) => {}
    }
    if e.shots == Some(0) {
        r.error("ensemble.shots", "shots must be positive; omit the key for exact probabilities");
    }
    if c.repetitions == 0 {
        r.error("repetitions", "need at least one repetition");
    }
    if c.threads == Some(0) {
        r.error("threads", "need at least one thread");
    }
    let samples = match c.pipeline {
        Pipeline::Shadows => e.n_s.unwrap_or(0),
        _ => e.n_e as u64,
    } * c.repetitions.max(1) as u64;
    if samples > c.limits.max_samples {
        r.error("limits.max_samples", format!("{samples} sampled unitaries exceed the cap {}", c.limits.max_samples));
    }
}

fn check_pipeline(c: &ExperimentConfig, r: &mut Report) {
    let e = &c.ensemble;
    match c.pipeline {
        Pipeline::DesignCheck => {
            if e.n_e < 2 {
                r.error("ensemble.n_e", "need at least two unitaries");
            }
            if !(c.design.eps0 > 0.0) {
                r.error("design.eps0", "threshold must be positive");
            }
            if c.design.checkpoint_start == 0 {
                r.error("design.checkpoint_start", "must be positive");
            }
        }
        Pipeline::Purity => {
            if e.n_e == 0 {
                r.error("ensemble.n_e", "need at least one circuit");
            }
            let k = c.purity.k_max;
            if k == 0 {
                r.error("purity.k_max", "need k_max >= 1");
            } else if k < 5 {
                r.warn("purity.k_max", "the von Neumann stencil needs k_max = 5; entropies will be omitted");
            }
            if let Some(n_m) = e.shots {
                if n_m < k as u64 {
                    r.error("ensemble.shots", format!("N_M = {n_m} below K_max = {k}: the k-th moment has no unbiased estimator"));
                }
            }
        }
        Pipeline::Shadows => match e.n_s {
            None | Some(0) => r.error("ensemble.n_s", "shadow pipeline needs n_s > 0"),
            Some(_) if c.shadows.checkpoint_start == 0 => r.error("shadows.checkpoint_start", "must be positive"),
            _ => {}
        },
        Pipeline::Eht | Pipeline::GapScan => {
            let kind = model_kind(&c.model);
            if c.pipeline == Pipeline::GapScan && kind != ModelKind::Z2TwoD {
                r.error("model.model", "gap scans need the z2_plane model");
            }
            if kind == ModelKind::Pn {
                r.error("model.model", "no ansatz for the spin chain");
            }
            if e.n_e == 0 {
                r.error("ensemble.n_e", "need at least one circuit");
            }
            if c.eht.starts == 0 {
                r.error("eht.starts", "need at least one start");
            }
            if c.pipeline == Pipeline::GapScan {
                if c.eht.epsilons.is_empty() {
                    r.error("eht.epsilons", "empty scan");
                }
                if c.eht.epsilons.iter().any(|x| !x.is_finite()) {
                    r.error("eht.epsilons", "non-finite value");
                }
                if c.repetitions < 2 {
                    r.warn("repetitions", "a single repetition gives no error bars");
                }
            }
            if let GapSpec::Fixed { m: 0 } = c.eht.gap {
                r.error("eht.gap.m", "low band must be non-empty");
            }
        }
    }
}

/// All diagnostics for `c`, errors first.
pub fn validate(c: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut r = Report::default();
    check_model(c, &mut r);
    check_ensemble(c, &mut r);
    check_pipeline(c, &mut r);
    let mut out = r.0;
    out.sort_by_key(|d| d.level != Level::Error);
    out
}

//! Pipeline drivers. Each writes its tables through [`Outputs`]; all
//! randomness is derived from the master seed.

use std::path::Path;

use serde::Serialize;
use serde_json::json;
use symrm_core::circuits::UnitarySource;
use symrm_core::design::{
    crossing, default_index_count, design_curve, fit_ensemble_scaling, geometric_checkpoints, linear_fit, DesignOptions,
    DesignPoint,
};
use symrm_core::eht::{
    bw_operator_set, collect_eht_data, entanglement_gap, entanglement_spectrum, exact_schmidt, fit_eh, low_band_size,
    Couplings, EhResult, FitConfig, Gap, GapMode,
};
use symrm_core::estimators::{entanglement_decomposition, estimate_purities, exact_purities, von_neumann_exact, von_neumann_fd};
use symrm_core::measurement::{accumulate_moments, born_probabilities, sample_shots, shot_records, table_records, MomentJob};
use symrm_core::models::Z2PureParams;
use symrm_core::optimize::NelderMeadConfig;
use symrm_core::sectors::{enumerate_sectors, SectorPartition, POPULATED};
use symrm_core::shadows::{collect_shadows, exact_schmidt_spectrum, relative_entropy, schmidt_spectrum, ShadowAccumulator, ShadowJob};
use symrm_core::states::{reduced_ground_state, ModelSpec, ReducedState};

use crate::config::{derive_seed, ExperimentConfig, GapSpec, Pipeline, SourceKind};
use crate::error::{HarnessError, StageExt};
use crate::output::{resolve_output_dir, Outputs, RunManifest};
use crate::row;
use crate::validate::validate;

/// Validate, check resource caps, run the pipeline and write the manifest.
pub fn run(config: &ExperimentConfig, output_root: &Path) -> Result<RunManifest, HarnessError> {
    let errors: Vec<String> = validate(config)
        .into_iter()
        .filter(|d| d.is_error())
        .map(|d| format!("{}: {}", d.field, d.message))
        .collect();
    if !errors.is_empty() {
        return Err(HarnessError::Config(errors.join("; ")));
    }
    let threads = config.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("threads: {e}")))?;
    pool.install(|| {
        check_resources(config)?;
        let mut out = Outputs::create(resolve_output_dir(config, output_root))?;
        out.json("config.json", config)?;
        match config.pipeline {
            Pipeline::DesignCheck => design_check(config, &mut out)?,
            Pipeline::Purity => purity(config, &mut out)?,
            Pipeline::Shadows => shadows(config, &mut out)?,
            Pipeline::Eht => eht(config, &mut out)?,
            Pipeline::GapScan => gap_scan(config, &mut out)?,
        }
        out.finish(config)
    })
}

fn model_qubits(m: &ModelSpec) -> usize {
    match m {
        ModelSpec::SpinChain { params, .. } => params.n_sites,
        ModelSpec::Z2Chain { params, .. } => 2 * params.n_sites,
        ModelSpec::Z2Plane { params, .. } => {
            params.nx * params.ny * 2 - if params.ybc == symrm_core::models::BoundaryCondition::Fixed { params.nx } else { 0 }
        }
    }
}

fn check_resources(c: &ExperimentConfig) -> Result<(), HarnessError> {
    if c.pipeline != Pipeline::DesignCheck && model_qubits(&c.model) > c.limits.max_qubits {
        return Err(HarnessError::ResourceCap(format!(
            "model has {} qubits, cap is {} (limits.max_qubits)",
            model_qubits(&c.model),
            c.limits.max_qubits
        )));
    }
    let geom = c.model.geometry().stage("geometry")?;
    if geom.n_qubits() > 24 {
        return Err(HarnessError::ResourceCap(format!("subsystem has {} qubits, cap is 24", geom.n_qubits())));
    }
    let partition = enumerate_sectors(&geom).stage("sectors")?;
    if partition.max_dim() > c.limits.max_block_dim {
        return Err(HarnessError::ResourceCap(format!(
            "largest block has dimension {}, cap is {} (limits.max_block_dim)",
            partition.max_dim(),
            c.limits.max_block_dim
        )));
    }
    Ok(())
}

fn label(p: &SectorPartition, s: usize) -> String {
    p.sectors[s].label.to_string()
}

fn ground_state(spec: &ModelSpec, out: &mut Outputs) -> Result<ReducedState, HarnessError> {
    let name = match spec {
        ModelSpec::Z2Plane { params, .. } => format!("ground-state:g={}", params.g),
        _ => "ground-state".to_string(),
    };
    out.stage(&name, |_| reduced_ground_state(spec).stage("ground-state"))
}

// design-check

fn design_check(c: &ExperimentConfig, out: &mut Outputs) -> Result<(), HarnessError> {
    let geom = c.model.geometry().stage("geometry")?;
    let partition = enumerate_sectors(&geom).stage("sectors")?;
    let opts = DesignOptions {
        checkpoints: geometric_checkpoints(c.design.checkpoint_start, c.ensemble.n_e),
        n_indices: c.design.n_indices.unwrap_or(default_index_count(geom.n_qubits())),
        nonzero_only: c.design.nonzero_only,
        tuple_seed: derive_seed(c.master_seed, 0, "tuples"),
    };
    let mut sources = vec![(
        match c.ensemble.source {
            SourceKind::Circuits => "circuits",
            SourceKind::Haar => "haar",
        },
        c.source(0)?,
    )];
    if c.design.oracle && c.ensemble.source == SourceKind::Circuits {
        sources.push(("haar", UnitarySource::Haar { master_seed: derive_seed(c.master_seed, 0, "oracle") }));
    }
    let mut curves: Vec<(&str, Vec<DesignPoint>)> = Vec::new();
    for (name, src) in &sources {
        let curve = out.stage(&format!("design:{name}"), |_| design_curve(src, &geom, &partition, &opts).stage("design"))?;
        curves.push((name, curve));
    }
    let mut t = out.csv("design_curve.csv", &["source", "sector", "d_s", "n_e", "epsilon"])?;
    for (name, curve) in &curves {
        for p in curve {
            t.row(row![*name, p.sector.clone(), p.d_s, p.n_e, p.epsilon])?;
        }
    }
    t.close()?;
    let mut t = out.csv("design_crossings.csv", &["source", "sector", "d_s", "n_e_cross"])?;
    let mut fits = serde_json::Map::new();
    for (name, curve) in &curves {
        let mut seen: Vec<&str> = Vec::new();
        for p in curve {
            if seen.contains(&p.sector.as_str()) {
                continue;
            }
            seen.push(&p.sector);
            let pts: Vec<(f64, f64)> =
                curve.iter().filter(|q| q.sector == p.sector).map(|q| (q.n_e as f64, q.epsilon)).collect();
            let n = crossing(&pts, c.design.eps0, c.design.extrapolate, &p.sector).unwrap_or(f64::INFINITY);
            t.row(row![*name, p.sector.clone(), p.d_s, n])?;
        }
        let fit = match fit_ensemble_scaling(curve, c.design.eps0, c.design.extrapolate) {
            Ok(f) => json!({ "xi": f.xi, "xi_min": f.xi_min, "xi_max": f.xi_max }),
            Err(e) => json!({ "error": e.to_string() }),
        };
        fits.insert(name.to_string(), fit);
    }
    t.close()?;
    out.json(
        "design_fit.json",
        &json!({ "eps0": c.design.eps0, "n_indices": opts.n_indices, "checkpoints": opts.checkpoints, "fits": fits }),
    )
}

// purity

fn purity(c: &ExperimentConfig, out: &mut Outputs) -> Result<(), HarnessError> {
    let rs = ground_state(&c.model, out)?;
    let k_max = c.purity.k_max;
    let exact: Vec<Vec<f64>> = rs.rho.blocks.iter().map(|b| exact_purities(&b.rho, k_max)).collect();
    let exact_weights = rs.rho.weights();
    let exact_entropies: Vec<f64> =
        rs.rho.blocks.iter().map(|b| b.normalized().map_or(0.0, |r| von_neumann_exact(&r))).collect();
    let exact_dec = entanglement_decomposition(&exact_weights, &exact_entropies).stage("decomposition")?;

    let mut pt = out.csv("purities.csv", &["repetition", "sector", "d_s", "k", "estimate", "exact"])?;
    let mut et = out.csv(
        "entropy.csv",
        &["repetition", "sector", "p_s", "p_s_exact", "s_vn", "s_vn_err", "s_vn_exact"],
    )?;
    let mut decs = Vec::new();
    for rep in 0..c.repetitions {
        let src = c.source(rep)?;
        let job = MomentJob {
            rho: &rs.rho,
            source: &src,
            geom: &rs.geom,
            partition: &rs.partition,
            shots: c.ensemble.shots,
            k_max,
            shot_seed: derive_seed(c.master_seed, rep, "shots"),
        };
        let sums = out.stage(&format!("moments:{rep}"), |_| accumulate_moments(&job, 0, c.ensemble.n_e).stage("moments"))?;
        let est = estimate_purities(&sums, &rs.partition).stage("inversion")?;
        let mut weights = Vec::new();
        let mut entropies = Vec::new();
        let mut errors = Vec::new();
        for (s, ps) in est.iter().enumerate() {
            for k in 1..=k_max {
                pt.row(row![rep, label(&rs.partition, s), ps.d, k, ps.purities[k - 1], exact[s][k - 1]])?;
            }
            let (sv, err) = if k_max >= 5 && ps.weight() > POPULATED {
                von_neumann_fd(&ps.normalized()).unwrap_or((f64::NAN, f64::NAN))
            } else {
                (f64::NAN, f64::NAN)
            };
            et.row(row![rep, label(&rs.partition, s), ps.weight(), exact_weights[s], sv, err, exact_entropies[s]])?;
            weights.push(ps.weight().max(0.0));
            entropies.push(if sv.is_finite() { sv } else { 0.0 });
            errors.push(if err.is_finite() { err } else { 0.0 });
        }
        let dec = entanglement_decomposition(&weights, &entropies).stage("decomposition")?;
        let dist_err: f64 = weights.iter().zip(&errors).map(|(p, e)| p * e).sum();
        decs.push(json!({ "repetition": rep, "symm": dec.symm, "dist": dec.dist, "total": dec.total, "dist_err": dist_err }));
    }
    pt.close()?;
    et.close()?;
    out.json("decomposition.json", &json!({ "exact": exact_dec, "measured": decs }))?;
    if c.purity.records {
        let src = c.source(0)?;
        let mut jl = out.jsonl("measurements.jsonl")?;
        for i in 0..c.ensemble.n_e as u64 {
            let blocks = src.blocks(&rs.geom, &rs.partition, i).stage("records")?;
            let table = born_probabilities(&rs.rho, &blocks).stage("records")?;
            let recs = match c.ensemble.shots {
                None => table_records(&table, &rs.partition, i),
                Some(n_m) => {
                    let mut rng = symrm_core::circuits::stream_rng(derive_seed(c.master_seed, 0, "shots"), i, "shots");
                    shot_records(&sample_shots(&table, n_m, &mut rng).stage("records")?, &rs.partition, i)
                }
            };
            for r in recs {
                jl.push(&r)?;
            }
        }
        jl.close()?;
    }
    Ok(())
}

// shadows

fn shadows(c: &ExperimentConfig, out: &mut Outputs) -> Result<(), HarnessError> {
    let rs = ground_state(&c.model, out)?;
    let n_s = c.ensemble.n_s.unwrap_or(0);
    let src = c.source(0)?;
    let job = ShadowJob {
        rho: &rs.rho,
        source: &src,
        geom: &rs.geom,
        partition: &rs.partition,
        seed: derive_seed(c.master_seed, 0, "shadows"),
    };
    let mut cps = Vec::new();
    let mut cp = c.shadows.checkpoint_start.max(1);
    while cp < n_s {
        cps.push(cp);
        cp *= 2;
    }
    cps.push(n_s);
    let exact_bars: Vec<_> = rs.rho.blocks.iter().map(|b| b.normalized()).collect();
    let weights = rs.rho.weights();
    let mut acc = ShadowAccumulator::new(&rs.partition);
    let mut t = out.csv("shadow_convergence.csv", &["n_s", "sector", "p_s", "p_s_n_s", "relative_entropy", "clamped"])?;
    let mut jl = if c.shadows.records { Some(out.jsonl("shadows.jsonl")?) } else { None };
    let mut fit_x = Vec::new();
    let mut fit_y = Vec::new();
    let mut start = 0;
    for &cp in &cps {
        let (part, recs) =
            out.stage(&format!("shadows:{cp}"), |_| collect_shadows(&job, start, cp, jl.is_some()).stage("shadows"))?;
        acc.merge(&part);
        if let Some(jl) = jl.as_mut() {
            for r in &recs {
                jl.push(r)?;
            }
        }
        start = cp;
        let est = acc.estimate();
        for (s, (rb, sb)) in exact_bars.iter().zip(&est.blocks).enumerate() {
            let (Some(rb), Some(sb)) = (rb, sb) else { continue };
            if weights[s] <= POPULATED {
                continue;
            }
            let re = relative_entropy(rb, sb).stage("relative-entropy")?;
            let x = weights[s] * cp as f64;
            t.row(row![cp, label(&rs.partition, s), weights[s], x, re.value, re.clamped])?;
            // The floored estimate is signed; fit its magnitude.
            if re.value != 0.0 {
                fit_x.push(x.ln());
                fit_y.push(re.value.abs().ln());
            }
        }
    }
    t.close()?;
    if let Some(jl) = jl {
        jl.close()?;
    }
    let est = acc.estimate();
    let shadow = schmidt_spectrum(&est.blocks, &est.weights);
    let mut t = out.csv("schmidt.csv", &["sector", "rank", "exact", "shadow"])?;
    for e in exact_schmidt_spectrum(&rs.rho) {
        let v = shadow.iter().find(|x| x.sector == e.sector && x.rank == e.rank).map_or(f64::NAN, |x| x.value);
        t.row(row![label(&rs.partition, e.sector), e.rank, e.value, v])?;
    }
    t.close()?;
    let slope = linear_fit(&fit_x, &fit_y).map(|f| f.1).ok();
    out.json("shadow_fit.json", &json!({ "n_s": n_s, "slope": slope, "points": fit_x.len() }))
}

// eht and gap scan

fn couplings(m: &ModelSpec) -> Result<Couplings, HarnessError> {
    match m {
        ModelSpec::Z2Chain { params, .. } => Ok(Couplings::Z2Chain { a: params.a, m: params.m, e: params.e }),
        ModelSpec::Z2Plane { params, .. } => Ok(Couplings::Z2Plane { k: params.k, g: params.g }),
        ModelSpec::SpinChain { .. } => Err(HarnessError::Config("model.model: no ansatz for the spin chain".into())),
    }
}

fn fit_config(c: &ExperimentConfig) -> FitConfig {
    FitConfig {
        starts: c.eht.starts,
        simplex: NelderMeadConfig { max_evals: c.eht.max_evals, ..Default::default() },
        polish_iterations: c.eht.polish_iterations,
    }
}

fn gap_mode(c: &ExperimentConfig, out: &mut Outputs) -> Result<GapMode, HarnessError> {
    match (c.eht.gap, &c.model) {
        (GapSpec::Largest, _) => Ok(GapMode::Largest),
        (GapSpec::Fixed { m }, _) => Ok(GapMode::Fixed(m)),
        (GapSpec::Toric, ModelSpec::Z2Plane { params, nxa }) => {
            let spec = ModelSpec::Z2Plane { params: Z2PureParams { g: 0.0, ..*params }, nxa: *nxa };
            let rs = out.stage("toric-limit", |_| reduced_ground_state(&spec).stage("toric-limit"))?;
            Ok(GapMode::Fixed(low_band_size(&rs.rho)))
        }
        (GapSpec::Toric, _) => Ok(GapMode::Largest),
    }
}

fn bw_schmidt(res: &EhResult) -> Vec<f64> {
    res.schmidt_values().into_iter().map(|x| x.1).collect()
}

#[derive(Serialize)]
struct SectorFitRecord<'a> {
    sector: String,
    weight: f64,
    beta: &'a [f64],
    chi2: f64,
    evals: usize,
    converged: bool,
}

fn fit_records<'a>(res: &'a EhResult, p: &SectorPartition) -> Vec<SectorFitRecord<'a>> {
    res.fits
        .iter()
        .enumerate()
        .filter_map(|(s, f)| {
            f.as_ref().map(|f| SectorFitRecord {
                sector: label(p, s),
                weight: res.weights[s],
                beta: &f.beta,
                chi2: f.chi2,
                evals: f.evals,
                converged: f.converged,
            })
        })
        .collect()
}

fn run_eht(c: &ExperimentConfig, rs: &ReducedState, model: &ModelSpec, rep: usize) -> Result<EhResult, HarnessError> {
    let ops = bw_operator_set(&rs.geom, &couplings(model)?).stage("operators")?;
    let src = c.source(rep)?;
    let data = collect_eht_data(
        &rs.rho,
        &src,
        &rs.geom,
        &rs.partition,
        c.ensemble.n_e,
        c.ensemble.shots,
        derive_seed(c.master_seed, rep, "shots"),
    )
    .stage("measurements")?;
    let res = fit_eh(&data, &ops, &rs.partition, &fit_config(c)).stage("fit")?;
    if res.max_block_dim > c.limits.max_block_dim {
        return Err(HarnessError::ResourceCap(format!("fit used blocks of dimension {}", res.max_block_dim)));
    }
    Ok(res)
}

fn gap_or_nan(xi: &[f64], mode: GapMode) -> Gap {
    entanglement_gap(xi, mode).unwrap_or(Gap { value: f64::NAN, m: 0, mode })
}

fn eht(c: &ExperimentConfig, out: &mut Outputs) -> Result<(), HarnessError> {
    let rs = ground_state(&c.model, out)?;
    let mode = gap_mode(c, out)?;
    let res = out.stage("fit", |_| run_eht(c, &rs, &c.model, 0))?;
    let exact = exact_schmidt_spectrum(&rs.rho);
    let mut t = out.csv("eht_spectrum.csv", &["sector", "rank", "p_exact", "p_bw", "xi_exact", "xi_bw"])?;
    for e in &exact {
        let bw = res.fits[e.sector].as_ref().map_or(f64::NAN, |f| f.spectrum[e.rank] * res.weights[e.sector]);
        let xi = |p: f64| if p > 0.0 { -p.ln() } else { f64::INFINITY };
        t.row(row![label(&rs.partition, e.sector), e.rank, e.value, bw, xi(e.value), xi(bw)])?;
    }
    t.close()?;
    let gap_bw = gap_or_nan(&entanglement_spectrum(&bw_schmidt(&res)), mode);
    let gap_exact = gap_or_nan(&entanglement_spectrum(&exact_schmidt(&rs.rho)), mode);
    out.json(
        "eht_fit.json",
        &json!({
            "classes": res.classes,
            "sectors": fit_records(&res, &rs.partition),
            "chi2": res.total_chi2(),
            "max_block_dim": res.max_block_dim,
            "gap_bw": gap_bw,
            "gap_exact": gap_exact,
        }),
    )
}

fn gap_scan(c: &ExperimentConfig, out: &mut Outputs) -> Result<(), HarnessError> {
    let ModelSpec::Z2Plane { params, nxa } = c.model else {
        return Err(HarnessError::Config("model.model: gap scans need the z2_plane model".into()));
    };
    let mode = gap_mode(c, out)?;
    let mut spec_t = out.csv("gap_spectrum.csv", &["epsilon", "repetition", "sector", "rank", "xi"])?;
    let mut gap_t = out.csv("gap.csv", &["epsilon", "delta_xi", "err", "delta_xi_exact", "mode", "m"])?;
    let mut fits = out.jsonl("gap_fits.jsonl")?;
    let mode_name = match mode {
        GapMode::Fixed(_) => "fixed",
        GapMode::Largest => "largest",
    };
    for &eps in &c.eht.epsilons {
        let model = ModelSpec::Z2Plane { params: Z2PureParams { g: eps, ..params }, nxa };
        let rs = ground_state(&model, out)?;
        let exact = gap_or_nan(&entanglement_spectrum(&exact_schmidt(&rs.rho)), mode);
        let mut gaps = Vec::new();
        for rep in 0..c.repetitions {
            let res = out.stage(&format!("fit:{eps}:{rep}"), |_| run_eht(c, &rs, &model, rep))?;
            for (s, f) in res.fits.iter().enumerate() {
                let Some(f) = f else { continue };
                for (rank, p) in f.spectrum.iter().enumerate() {
                    let v = p * res.weights[s];
                    let xi = if v > 0.0 { -v.ln() } else { f64::INFINITY };
                    spec_t.row(row![eps, rep, label(&rs.partition, s), rank, xi])?;
                }
            }
            let g = gap_or_nan(&entanglement_spectrum(&bw_schmidt(&res)), mode);
            gaps.push(g.value);
            fits.push(&json!({
                "epsilon": eps,
                "repetition": rep,
                "chi2": res.total_chi2(),
                "gap": g,
                "sectors": fit_records(&res, &rs.partition),
            }))?;
        }
        let (mean, err) = mean_and_standard_error(&gaps);
        gap_t.row(row![eps, mean, err, exact.value, mode_name, exact.m])?;
    }
    spec_t.close()?;
    gap_t.close()?;
    fits.close()
}

/// Mean and standard error of the mean; the error is NaN for one value.
pub fn mean_and_standard_error(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

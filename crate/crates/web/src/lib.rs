//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string so the page needs no generated type
//! glue beyond `wasm-bindgen`'s.

use serde_json::{json, Value};
use symrm_core::circuits::{EnsembleConfig, Pairing, Scheme, UnitarySource};
use symrm_core::design::{design_curve, geometric_checkpoints, DesignOptions};
use symrm_core::eht::{
    bw_operator_set, collect_eht_data, entanglement_gap, entanglement_spectrum, exact_schmidt, fit_eh, low_band_size,
    Couplings, FitConfig, GapMode,
};
use symrm_core::estimators::{entanglement_decomposition, estimate_purities, exact_purities, von_neumann_exact};
use symrm_core::measurement::{accumulate_moments, MomentJob};
use symrm_core::models::{BoundaryCondition, Z2MatterParams, Z2PureParams};
use symrm_core::sectors::{enumerate_sectors, SubsystemGeometry};
use symrm_core::shadows::exact_schmidt_spectrum;
use symrm_core::states::{reduced_ground_state, ModelSpec};
use wasm_bindgen::prelude::*;

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn guard(ok: bool, msg: &str) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

pub fn design_error_json(n_qubits: usize, layers: usize, n_e: usize, seed: u64) -> Result<Value, String> {
    guard((2..=8).contains(&n_qubits), "n_qubits must lie in 2..=8")?;
    guard((1..=512).contains(&layers), "layers must lie in 1..=512")?;
    guard((8..=8192).contains(&n_e), "n_e must lie in 8..=8192")?;
    let geom = SubsystemGeometry::pn(2 * n_qubits.max(2), n_qubits).map_err(fail)?;
    let partition = enumerate_sectors(&geom).map_err(fail)?;
    let opts = DesignOptions {
        checkpoints: geometric_checkpoints(8, n_e),
        n_indices: 300,
        nonzero_only: true,
        tuple_seed: seed ^ 0x5eed,
    };
    let circuits = UnitarySource::Circuits(EnsembleConfig {
        scheme: Scheme::Pn2q,
        layers,
        n_e,
        master_seed: seed,
        pairing: Pairing::AllPairs,
    });
    let haar = UnitarySource::Haar { master_seed: seed.wrapping_add(1) };
    let mut out = Vec::new();
    for (name, src) in [("circuits", &circuits), ("haar", &haar)] {
        for p in design_curve(src, &geom, &partition, &opts).map_err(fail)? {
            out.push(json!({ "source": name, "sector": p.sector, "d_s": p.d_s, "n_e": p.n_e, "epsilon": p.epsilon }));
        }
    }
    Ok(json!({ "points": out }))
}

pub fn purity_json(e_over_m: f64, n_e: usize, shots: u64, seed: u64) -> Result<Value, String> {
    guard(e_over_m.is_finite() && e_over_m > 0.0, "e/m must be positive")?;
    guard((1..=4096).contains(&n_e), "n_e must lie in 1..=4096")?;
    let m = 0.1;
    let spec = ModelSpec::Z2Chain { params: Z2MatterParams { n_sites: 6, a: 1.0, m, e: e_over_m * m }, n_a: 3 };
    let rs = reduced_ground_state(&spec).map_err(fail)?;
    let source = UnitarySource::Circuits(EnsembleConfig {
        scheme: Scheme::Gauge3q,
        layers: Scheme::Gauge3q.default_layers(),
        n_e,
        master_seed: seed,
        pairing: Pairing::AllPairs,
    });
    let job = MomentJob {
        rho: &rs.rho,
        source: &source,
        geom: &rs.geom,
        partition: &rs.partition,
        shots: (shots > 0).then_some(shots),
        k_max: 2,
        shot_seed: seed ^ 0x5407,
    };
    let sums = accumulate_moments(&job, 0, n_e).map_err(fail)?;
    let est = estimate_purities(&sums, &rs.partition).map_err(fail)?;
    let weights = rs.rho.weights();
    let entropies: Vec<f64> = rs.rho.blocks.iter().map(|b| b.normalized().map_or(0.0, |r| von_neumann_exact(&r))).collect();
    let dec = entanglement_decomposition(&weights, &entropies).map_err(fail)?;
    let sectors: Vec<Value> = est
        .iter()
        .enumerate()
        .map(|(s, ps)| {
            let exact = exact_purities(&rs.rho.blocks[s].rho, 2);
            json!({
                "sector": rs.partition.sectors[s].label.to_string(),
                "d_s": ps.d,
                "p_s": ps.purities[0],
                "p_s_exact": exact[0],
                "purity2": ps.purities[1],
                "purity2_exact": exact[1],
            })
        })
        .collect();
    Ok(json!({ "sectors": sectors, "exact_decomposition": dec }))
}

pub fn spectrum_json(epsilon: f64, n_e: usize, seed: u64) -> Result<Value, String> {
    guard(epsilon.is_finite() && (0.0..=2.0).contains(&epsilon), "epsilon must lie in [0, 2]")?;
    guard(n_e <= 200, "n_e must be at most 200")?;
    let plane = |g| ModelSpec::Z2Plane {
        params: Z2PureParams { nx: 6, ny: 2, k: 1.0, g, ybc: BoundaryCondition::Periodic },
        nxa: 3,
    };
    let toric = reduced_ground_state(&plane(0.0)).map_err(fail)?;
    let mode = GapMode::Fixed(low_band_size(&toric.rho));
    let rs = reduced_ground_state(&plane(epsilon)).map_err(fail)?;
    let exact: Vec<Value> = exact_schmidt_spectrum(&rs.rho)
        .into_iter()
        .filter(|v| v.value > 0.0)
        .map(|v| json!({ "sector": v.sector, "xi": -v.value.ln() }))
        .collect();
    let gap = entanglement_gap(&entanglement_spectrum(&exact_schmidt(&rs.rho)), mode).ok().map(|g| g.value);
    let mut out = json!({ "exact": exact, "gap_exact": gap });
    if n_e > 0 {
        let ops = bw_operator_set(&rs.geom, &Couplings::Z2Plane { k: 1.0, g: epsilon }).map_err(fail)?;
        let data = collect_eht_data(&rs.rho, &UnitarySource::Haar { master_seed: seed }, &rs.geom, &rs.partition, n_e, None, 0)
            .map_err(fail)?;
        let res = fit_eh(&data, &ops, &rs.partition, &FitConfig { starts: 3, ..Default::default() }).map_err(fail)?;
        let bw: Vec<Value> = res
            .schmidt_values()
            .into_iter()
            .filter(|v| v.1 > 0.0)
            .map(|(s, p)| json!({ "sector": s, "xi": -p.ln() }))
            .collect();
        let sv: Vec<f64> = res.schmidt_values().into_iter().map(|v| v.1).collect();
        out["bw"] = json!(bw);
        out["gap_bw"] = json!(entanglement_gap(&entanglement_spectrum(&sv), mode).ok().map(|g| g.value));
    }
    Ok(out)
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

/// Design error per particle-number sector for circuits and Haar blocks.
#[wasm_bindgen]
pub fn design_error(n_qubits: u32, layers: u32, n_e: u32, seed: u32) -> Result<String, JsError> {
    to_js(design_error_json(n_qubits as usize, layers as usize, n_e as usize, seed as u64))
}

/// Sector weights and second purities of a small gauge chain; `shots = 0`
/// uses exact probabilities.
#[wasm_bindgen]
pub fn purity(e_over_m: f64, n_e: u32, shots: u32, seed: u32) -> Result<String, JsError> {
    to_js(purity_json(e_over_m, n_e as usize, shots as u64, seed as u64))
}

/// Exact and (for `n_e > 0`) reconstructed entanglement spectrum of the
/// 2+1d gauge model at electric coupling `epsilon`.
#[wasm_bindgen]
pub fn spectrum(epsilon: f64, n_e: u32, seed: u32) -> Result<String, JsError> {
    to_js(spectrum_json(epsilon, n_e as usize, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_error_returns_both_sources() {
        let v = design_error_json(4, 32, 64, 1).unwrap();
        let pts = v["points"].as_array().unwrap();
        assert!(pts.iter().any(|p| p["source"] == "haar"));
        assert!(pts.iter().any(|p| p["source"] == "circuits"));
        assert!(pts.iter().all(|p| p["epsilon"].as_f64().unwrap() >= 0.0));
        assert!(design_error_json(12, 32, 64, 1).is_err());
    }

    #[test]
    fn exact_purity_weights_match() {
        let v = purity_json(8.0, 8, 0, 3).unwrap();
        for s in v["sectors"].as_array().unwrap() {
            let (a, b) = (s["p_s"].as_f64().unwrap(), s["p_s_exact"].as_f64().unwrap());
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn spectrum_has_gap() {
        let v = spectrum_json(0.1, 0, 0).unwrap();
        assert!(v["gap_exact"].as_f64().unwrap() > 5.0);
        assert!(v.get("bw").is_none());
        let v = spectrum_json(0.3, 6, 2).unwrap();
        assert!(v["bw"].as_array().unwrap().len() > 10);
    }
}

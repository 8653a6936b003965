//! Homotopy-class enumeration: sweep all candidate D-signatures, pick the
//! best forest structure per class by Fisher distance, optimize weights,
//! and admit only paths whose realized sign vector matches the target.

use crate::flow::{self, IntegrationConfig, PathPolyline};
use crate::geometry::{self, ForestWorld, GeometryError, Squircle};
use crate::optimizer::{self, OptimizerConfig};
use crate::potential::WeightVector;
use crate::topology::{self, DSignature};
use crate::transform::{self, DiffeoChain, TransformError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("class not realizable: {reason}")]
    NotRealizable { reason: String },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub optimizer: OptimizerConfig,
    pub integration: IntegrationConfig,
    pub switch_sharpness: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            integration: IntegrationConfig::default(),
            switch_sharpness: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Restricted,
    Bonus,
}

/// A user preference region: paths must avoid restricted regions and visit
/// every bonus region.
#[derive(Debug, Clone)]
pub struct RegionPreference {
    pub region: Squircle,
    pub kind: RegionKind,
}

/// One realized homotopy class.
#[derive(Debug, Clone)]
pub struct Solution {
    pub forest: ForestWorld,
    pub weights: WeightVector,
    pub forest_path: PathPolyline,
    pub point_path: PathPolyline,
    pub signature: DSignature,
    pub fisher: f64,
}

#[derive(Debug, Clone)]
pub struct ClassFailure {
    pub target: DSignature,
    pub reason: String,
}

/// Outcome of a full class sweep.
#[derive(Debug, Clone)]
pub struct EnumerationReport {
    pub solutions: Vec<Solution>,
    pub failures: Vec<ClassFailure>,
    /// Total path integrations across the sweep (complexity accounting).
    pub integrations: usize,
}

struct Candidate {
    forest: ForestWorld,
    chain: DiffeoChain,
    fisher: f64,
}

/// Fisher argmax over precomputed chains; ties keep enumeration order.
fn pick_structure_index(
    chains: &[(ForestWorld, DiffeoChain)],
    target: &DSignature,
    cfg: &OptimizerConfig,
) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, (_, chain)) in chains.iter().enumerate() {
        let j = optimizer::fisher_distance(&chain.point_world(), target, cfg);
        if best.map_or(true, |(_, bj)| j > bj) {
            best = Some((i, j));
        }
    }
    best.unwrap().0
}

/// Fresh-path verification of one class: re-integrate the point path with
/// the chosen weights, require the realized sign vector to match, then
/// require the forest path to converge.
fn validate_class(
    cand: &Candidate,
    w: &WeightVector,
    target: &DSignature,
    cfg: &PlannerConfig,
    integrations: &mut usize,
) -> Result<Solution, String> {
    let pw = cand.chain.point_world();
    let point_path = flow::integrate_point_path(&pw, w, pw.start, &cfg.integration)
        .map_err(|e| e.to_string())?;
    *integrations += 1;
    if !point_path.converged {
        return Err("point path did not converge".into());
    }
    let signature = topology::d_signature(&pw, &point_path).map_err(|e| e.to_string())?;
    if signature.signs != target.signs {
        return Err(format!(
            "realized signs {:?} differ from target {:?}",
            signature.signs, target.signs
        ));
    }

    let forest_path = flow::integrate_forest_path(
        &cand.chain,
        w,
        cand.forest.start(),
        &cfg.integration,
    )
    .map_err(|e| e.to_string())?;
    *integrations += 1;
    if !forest_path.converged {
        return Err("forest path did not converge".into());
    }

    Ok(Solution {
        forest: cand.forest.clone(),
        weights: w.clone(),
        forest_path,
        point_path,
        signature,
        fisher: cand.fisher,
    })
}

fn attempt_class(
    cand: &Candidate,
    target: &DSignature,
    cfg: &PlannerConfig,
    integrations: &mut usize,
) -> Result<Solution, String> {
    let pw = cand.chain.point_world();
    let w0 = WeightVector::default_for(pw.points.len(), cfg.optimizer.margin);
    let (w, trace) = optimizer::optimize_weights(&pw, &w0, target, &cfg.optimizer, &cfg.integration)
        .map_err(|e| e.to_string())?;
    *integrations += trace.integrations;

    // Descent on the signed distances can step across a discontinuity right
    // before termination; if the final iterate left the target class, fall
    // back to the best-objective iterate that was inside it. Integration is
    // deterministic, so the fresh validation path below reproduces it.
    let w = if trace.iterates.last().map_or(false, |(_, d, _)| d.signs == target.signs) {
        w
    } else {
        trace
            .iterates
            .iter()
            .filter(|(_, d, _)| d.signs == target.signs)
            .min_by(|a, b| a.2.total_cmp(&b.2))
            .map(|(w, _, _)| w.clone())
            .unwrap_or(w)
    };

    validate_class(cand, &w, target, cfg, integrations)
}

/// Enumerate all realizable homotopy classes of the workspace.
///
/// Candidate signatures come from the default structure's point world; the
/// per-class structure re-selection is authoritative, and the final set is
/// deduplicated by sign vector.
pub fn enumerate_classes(
    world: &ForestWorld,
    cfg: &PlannerConfig,
) -> Result<EnumerationReport, PlannerError> {
    let forests = geometry::enumerate_forests(world);
    let mut chains = Vec::with_capacity(forests.len());
    for f in &forests {
        let chain = transform::build_chain(f, cfg.switch_sharpness)?;
        chains.push((f.clone(), chain));
    }
    let default_chain = transform::build_chain(world, cfg.switch_sharpness)?;
    let candidates = topology::candidate_signatures(&default_chain.point_world());

    let mut integrations = 0usize;
    // Descent toward one target routinely crosses other classes on the way;
    // pool every visited iterate so each class can be admitted from the run
    // that reached it, keyed by sign vector. Per class, keep the best
    // iterate (by path clearance) for each structure that visited it, so
    // validation has alternates when one structure's forest flow stalls.
    let mut pool: HashMap<Vec<i8>, Vec<(usize, WeightVector, f64)>> = HashMap::new();
    for target in &candidates {
        let ci = pick_structure_index(&chains, target, &cfg.optimizer);
        let pw = chains[ci].1.point_world();
        let w0 = WeightVector::default_for(pw.points.len(), cfg.optimizer.margin);
        let Ok((_, trace)) =
            optimizer::optimize_weights(&pw, &w0, target, &cfg.optimizer, &cfg.integration)
        else {
            continue;
        };
        integrations += trace.integrations;
        for (w, d, _) in &trace.iterates {
            let clearance = d.distances.iter().copied().fold(f64::INFINITY, f64::min);
            let entries = pool.entry(d.signs.clone()).or_default();
            match entries.iter_mut().find(|(pci, _, _)| *pci == ci) {
                Some(e) if clearance > e.2 => *e = (ci, w.clone(), clearance),
                Some(_) => {}
                None => entries.push((ci, w.clone(), clearance)),
            }
        }
    }

    let mut solutions: Vec<Solution> = Vec::new();
    let mut failures = Vec::new();
    for target in &candidates {
        let Some(entries) = pool.get_mut(&target.signs) else {
            failures.push(ClassFailure {
                target: target.clone(),
                reason: "no optimization run reached this class".into(),
            });
            continue;
        };
        entries.sort_by(|a, b| b.2.total_cmp(&a.2));
        let mut last_err = String::new();
        let mut admitted = false;
        for (ci, w, _) in entries.iter().take(4) {
            let fisher =
                optimizer::fisher_distance(&chains[*ci].1.point_world(), target, &cfg.optimizer);
            let cand = Candidate {
                forest: chains[*ci].0.clone(),
                chain: chains[*ci].1.clone(),
                fisher,
            };
            match validate_class(&cand, w, target, cfg, &mut integrations) {
                Ok(sol) => {
                    solutions.push(sol);
                    admitted = true;
                    break;
                }
                Err(reason) => last_err = reason,
            }
        }
        if !admitted {
            failures.push(ClassFailure {
                target: target.clone(),
                reason: last_err,
            });
        }
    }
    Ok(EnumerationReport {
        solutions,
        failures,
        integrations,
    })
}

/// Plan a single user-supplied class.
pub fn plan_for_class(
    world: &ForestWorld,
    target: &DSignature,
    cfg: &PlannerConfig,
) -> Result<Solution, PlannerError> {
    let forests = geometry::enumerate_forests(world);
    let (forest, fisher) =
        optimizer::select_structure(&forests, target, &cfg.optimizer, cfg.switch_sharpness)
            .map_err(|e| PlannerError::NotRealizable {
                reason: e.to_string(),
            })?;
    let chain = transform::build_chain(&forest, cfg.switch_sharpness)?;
    let cand = Candidate {
        forest,
        chain,
        fisher,
    };
    let mut integrations = 0usize;
    attempt_class(&cand, target, cfg, &mut integrations)
        .map_err(|reason| PlannerError::NotRealizable { reason })
}

/// Keep solutions whose forest path avoids every restricted region and
/// visits every bonus region; input order is preserved.
pub fn filter_by_regions(solutions: &[Solution], prefs: &[RegionPreference]) -> Vec<Solution> {
    solutions
        .iter()
        .filter(|sol| {
            prefs.iter().all(|pref| {
                let inside = sol
                    .forest_path
                    .samples
                    .iter()
                    .any(|&p| pref.region.beta(p) <= 0.0);
                match pref.kind {
                    RegionKind::Restricted => !inside,
                    RegionKind::Bonus => inside,
                }
            })
        })
        .cloned()
        .collect()
}

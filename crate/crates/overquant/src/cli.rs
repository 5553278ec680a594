//! Reproducible experiment drivers behind the `overquant` binary: gain
//! design and resilience verification, cascade simulation, alphabet and
//! entropy reports, partition learning, reproduction of the published
//! two-dimensional example, channel-dropout relearning, and SVG plots.
//!
//! Every run produces exactly one [`RunReport`]; reruns with the same
//! config and seed produce byte-identical payloads.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::alphabet::{
    activation_entropy, alphabet_entropy, build_alphabet, drop_channel, enumerate_patterns,
    AlphabetEntry,
};
use crate::design::{DropoutSchedule, GainDesign, ScheduleInterval};
use crate::dqn::{dqn_select, DqnHyper};
use crate::emulation::{
    brute_force_select, hebb_select, partition_circle, used_pattern_census, CellRegion,
    ConvergenceSpec, EmulationConfig, LossKind, PartitionCell, TargetKind,
};
use crate::linalg::{all_n_minors_nonzero, IndexSet, MatrixJson};
use crate::{table1, Error, Result};

/// A matrix in a config file: either inline or a reference to a JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Inline(MatrixJson),
    File { file: PathBuf },
}

impl MatrixSpec {
    fn load(&self, base: Option<&Path>) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Inline(m) => m.to_matrix(),
            MatrixSpec::File { file } => {
                let path = match base {
                    Some(dir) if file.is_relative() => dir.join(file),
                    _ => file.clone(),
                };
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    Error::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                let m: MatrixJson = serde_json::from_str(&text)?;
                m.to_matrix()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub t_start: f64,
    pub t_end: f64,
    pub l1: Vec<usize>,
    pub l2: Vec<usize>,
}

fn default_alpha() -> f64 {
    1.0
}
fn default_h() -> f64 {
    0.1
}
fn default_wt() -> f64 {
    1.0
}
fn default_resolution() -> usize {
    4096
}
fn default_step() -> f64 {
    0.01
}
fn default_horizon() -> f64 {
    20.0
}

/// The single JSON config document every subcommand reads.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub a: Option<MatrixSpec>,
    pub b: Option<MatrixSpec>,
    pub c: Option<MatrixSpec>,
    /// Target field matrix of the emulation problem.
    pub target: Option<MatrixSpec>,
    #[serde(default = "default_alpha")]
    pub alpha1: f64,
    #[serde(default = "default_alpha")]
    pub alpha2: f64,
    /// Sampling interval of the quantized system.
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_wt")]
    pub wt: f64,
    pub i1: Option<Vec<usize>>,
    pub i2: Option<Vec<usize>>,
    /// `oracle`, `hebb`, or `dqn`.
    pub learner: Option<String>,
    pub loss_kind: Option<LossKind>,
    pub target_kind: Option<TargetKind>,
    #[serde(default)]
    pub unscaled_input: bool,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub binary_only: bool,
    /// Channel to remove before building the alphabet.
    pub drop: Option<usize>,
    /// Use the non-redundant alternative modulation matrix.
    #[serde(default)]
    pub alternate_b: bool,
    pub hebb_alpha: Option<f64>,
    pub dqn: Option<DqnHyper>,
    pub x0: Option<Vec<f64>>,
    pub z0: Option<Vec<f64>>,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub schedule: Option<Vec<ScheduleSpec>>,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config deserializes with defaults")
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<(Self, Option<PathBuf>)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        Ok((cfg, path.parent().map(Path::to_path_buf)))
    }

    /// Digest of the canonical serialized config (plus the effective seed).
    pub fn digest(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canon.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Result envelope of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config_digest: String,
    pub wall_time_s: f64,
    pub payload: Value,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn payload_digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_string(&self.payload).unwrap().as_bytes());
        hex_string(&hasher.finalize())
    }
}

struct RunContext<'a> {
    cfg: &'a ExperimentConfig,
    out_dir: Option<PathBuf>,
    artifacts: Vec<String>,
}

impl<'a> RunContext<'a> {
    fn new(cfg: &'a ExperimentConfig, _base: Option<&Path>, out: Option<&Path>) -> Self {
        let out_dir = out.map(Path::to_path_buf).or_else(|| cfg.out_dir.clone());
        RunContext { cfg, out_dir, artifacts: Vec::new() }
    }

    fn write_artifact(&mut self, name: &str, contents: &str) -> Result<()> {
        let Some(dir) = &self.out_dir else {
            return Ok(());
        };
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        self.artifacts.push(path.display().to_string());
        Ok(())
    }

    fn finish(self, command: &str, payload: Value, started: std::time::Instant) -> RunReport {
        RunReport {
            command: command.to_string(),
            config_digest: self.cfg.digest(),
            wall_time_s: started.elapsed().as_secs_f64(),
            payload,
            artifacts: self.artifacts,
        }
    }
}

fn require(m: &Option<MatrixSpec>, name: &str, base: Option<&Path>) -> Result<DMatrix<f64>> {
    m.as_ref()
        .ok_or_else(|| Error::Config(format!("matrix '{name}' is required")))?
        .load(base)
}

fn index_set(v: &Option<Vec<usize>>, name: &str, universe: usize) -> Result<IndexSet> {
    let members = v
        .as_ref()
        .ok_or_else(|| Error::Config(format!("index set '{name}' is required")))?
        .clone();
    IndexSet::new(universe, members).map_err(|e| Error::Config(format!("{name}: {e}")))
}

fn build_design(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<(GainDesign, Value)> {
    let a = require(&cfg.a, "a", base)?;
    let b = require(&cfg.b, "b", base)?;
    let c = require(&cfg.c, "c", base)?;
    let i1 = index_set(&cfg.i1, "i1", b.ncols())?;
    let i2 = index_set(&cfg.i2, "i2", c.nrows())?;
    let minors_b = all_n_minors_nonzero(&b, 1e-9)?;
    let minors_c = all_n_minors_nonzero(&c, 1e-9)?;
    let warnings = json!({
        "b_all_minors_nonzero": minors_b.all_nonzero,
        "b_worst_minor": minors_b.worst_abs_det,
        "c_all_minors_nonzero": minors_c.all_nonzero,
        "c_worst_minor": minors_c.worst_abs_det,
    });
    let design = GainDesign::new(a, b, c, i1, i2, cfg.alpha1, cfg.alpha2)?;
    Ok((design, warnings))
}

fn resilience_payload(design: &GainDesign, seed: u64) -> Result<Value> {
    let report = design.verify_resilience(seed)?;
    Ok(json!({
        "pairs_checked": report.pairs_checked,
        "exhaustive": report.exhaustive,
        "worst_abscissa": report.worst_abscissa,
        "worst_pair": {
            "l1": report.worst_pair.0.members(),
            "l2": report.worst_pair.1.members(),
        },
        "failures": report.failures.len(),
        "all_stable": report.all_stable(),
    }))
}

/// `design`: construct the gains, write them out, verify the lattice.
pub fn cmd_design(
    cfg: &ExperimentConfig,
    base: Option<&Path>,
    out: Option<&Path>,
) -> Result<RunReport> {
    let started = std::time::Instant::now();
    let mut ctx = RunContext::new(cfg, base, out);
    let (design, warnings) = build_design(cfg, base)?;
    let resilience = resilience_payload(&design, cfg.seed)?;
    for (name, m) in [
        ("K", &design.k),
        ("E", &design.e),
        ("hatA1", &design.hat_a1.hat_a),
        ("hatA2", &design.hat_a2.hat_a),
    ] {
        let j = serde_json::to_string_pretty(&MatrixJson::from_matrix(m))?;
        ctx.write_artifact(&format!("{name}.json"), &j)?;
    }
    let stable = resilience["all_stable"].as_bool().unwrap_or(false);
    let payload = json!({
        "k": MatrixJson::from_matrix(&design.k),
        "e": MatrixJson::from_matrix(&design.e),
        "hat_a1": MatrixJson::from_matrix(&design.hat_a1.hat_a),
        "hat_a2": MatrixJson::from_matrix(&design.hat_a2.hat_a),
        "minor_check": warnings,
        "resilience": resilience,
    });
    let report = ctx.finish("design", payload, started);
    if !stable {
        return Err(Error::Tolerance("resilience verification found unstable lattice pairs".into()));
    }
    Ok(report)
}

/// `verify`: lattice check only.
pub fn cmd_verify(
    cfg: &ExperimentConfig,
    base: Option<&Path>,
    out: Option<&Path>,
) -> Result<RunReport> {
    let started = std::time::Instant::now();
    let ctx = RunContext::new(cfg, base, out);
    let (design, warnings) = build_design(cfg, base)?;
    let resilience = resilience_payload(&design, cfg.seed)?;
    let stable = resilience["all_stable"].as_bool().unwrap_or(false);
    let payload = json!({ "minor_check": warnings, "resilience": resilience });
    let report = ctx.finish("verify", payload, started);
    if !stable {
        return Err(Error::Tolerance("resilience verification found unstable lattice pairs".into()));
    }
    Ok(report)
}

/// `simulate`: integrate the observer cascade under a dropout schedule.
pub fn cmd_simulate(
    cfg: &ExperimentConfig,
    base: Option<&Path>,
    out: Option<&Path>,
) -> Result<RunReport> {
    let started = std::time::Instant::now();
    let mut ctx = RunContext::new(cfg, base, out);
    let (design, _) = build_design(cfg, base)?;
    let n = design.state_dim();
    let m = design.b.ncols();
    let q = design.c.nrows();
    let schedule = match &cfg.schedule {
        Some(intervals) => DropoutSchedule {
            intervals: intervals
                .iter()
                .map(|s| {
                    Ok(ScheduleInterval {
                        t_start: s.t_start,
                        t_end: s.t_end,
                        l1: IndexSet::new(m, s.l1.clone())?,
                        l2: IndexSet::new(q, s.l2.clone())?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        },
        None => DropoutSchedule::constant(cfg.horizon, IndexSet::full(m), IndexSet::full(q)),
    };
    let x0 = cfg
        .x0
        .clone()
        .map(DVector::from_vec)
        .unwrap_or_else(|| DVector::from_element(n, 1.0));
    let z0 = cfg.z0.clone().map(DVector::from_vec).unwrap_or_else(|| DVector::zeros(n));
    let traj = crate::design::simulate_cascade(&design, &schedule, &x0, &z0, cfg.step, cfg.horizon)?;
    ctx.write_artifact("trajectory.csv", &traj.to_csv())?;
    let norms = traj.error_norms();
    let payload = json!({
        "samples": traj.times.len(),
        "e0_norm": norms.first(),
        "eT_norm": norms.last(),
        "decay_ratio": norms.last().unwrap() / norms.first().unwrap().max(1e-300),
    });
    Ok(ctx.finish("simulate", payload, started))
}

fn emulation_b(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<DMatrix<f64>> {
    if cfg.alternate_b {
        return Ok(table1::alternate_b());
    }
    match &cfg.b {
        Some(spec) => spec.load(base),
        None => Ok(table1::example_b()),
    }
}

fn emulation_config(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<EmulationConfig> {
    let target = match &cfg.target {
        Some(spec) => spec.load(base)?,
        None => table1::example_target(),
    };
    let b = emulation_b(cfg, base)?;
    let mut ec = EmulationConfig::new(target, b, cfg.h, cfg.wt)?;
    if let Some(kind) = cfg.loss_kind {
        ec.loss_kind = kind;
    }
    if let Some(kind) = cfg.target_kind {
        ec.target_kind = kind;
    }
    ec.unscaled_input = cfg.unscaled_input;
    Ok(ec)
}

fn load_alphabet(cfg: &ExperimentConfig, b: &DMatrix<f64>) -> Result<Vec<AlphabetEntry>> {
    let m = b.ncols();
    let patterns = enumerate_patterns(m, cfg.binary_only)?;
    match cfg.drop {
        Some(c) => {
            let kept = drop_channel(patterns, c, m)?;
            build_alphabet(b, kept.into_iter())
        }
        None => build_alphabet(b, patterns),
    }
}

fn alphabet_json(alphabet: &[AlphabetEntry]) -> Value {
    Value::Array(
        alphabet
            .iter()
            .map(|e| {
                json!({
                    "d": e.direction.as_slice(),
                    "alpha": e.multiplicity(),
                    "preimages": e.preimages.iter().map(|p| p.0.clone()).collect::<Vec<_>>(),
                })
            })
            .collect(),
    )
}

/// `alphabet`: enumerate the quantization output alphabet.
pub fn cmd_alphabet(
    cfg: &ExperimentConfig,
    base: Option<&Path>,
    out: Option<&Path>,
) -> Result<RunReport> {
    let started = std::time::Instant::now();
    let mut ctx = RunContext::new(cfg, base, out);
    let b = emulation_b(cfg, base)?;
    let alphabet = load_alphabet(cfg, &b)?;
    let entries = alphabet_json(&alphabet);
    ctx.write_artifact("alphabet.json", &serde_json::to_string_pretty(&entries)?)?;
    let payload = json!({
        "channels": b.ncols(),
        "patterns": alphabet.iter().map(|e| e.multiplicity()).sum::<usize>(),
        "distinct_directions": alphabet.len(),
        "nonzero_directions": alphabet.iter().filter(|e| !e.is_zero).count(),
        "entries": entries,
    });
    Ok(ctx.finish("alphabet", payload, started))
}

fn partition_csv(cells: &[PartitionCell]) -> String {
    let mut out = String::from("theta_lo,theta_hi,d_x,d_y,alpha,p\n");
    for c in cells {
        if let CellRegion::Arc { lo, hi } = c.region {
            out.push_str(&format!(
                "{:.9},{:.9},{},{},{},{:.9}\n",
                lo,
                hi,
                c.direction[0],
                c.direction[1],
                c.pattern.len(),
                c.measure
            ));
        }
    }
    out
}

fn cells_payload(cells: &[PartitionCell], alphabet: &[AlphabetEntry]) -> Value {
    Value::Array(
        cells
            .iter()
            .map(|c| {
                let mut v = json!({
                    "direction": c.direction.as_slice(),
                    "alpha": alphabet[c.entry_index].multiplicity(),
                    "pattern": c.pattern.0,
                    "p": c.measure,
                });
                if let CellRegion::Arc { lo, hi } = c.region {
                    v["theta_lo"] = json!(lo);
                    v["theta_hi"] = json!(hi);
                }
                v
            })
            .collect(),
    )
}

fn stats_from_cells(cells: &[PartitionCell], alphabet: &[AlphabetEntry]) -> Result<(f64, f64)> {
    let p: Vec<f64> = cells.iter().map(|c| c.measure).collect();
    let a: Vec<usize> = cells.iter().map(|c| alphabet[c.entry_index].multiplicity()).collect();
    Ok((alphabet_entropy(&p)?, activation_entropy(&p, &a)?))
}

/// `entropy`: entropies of the learned partition's cell distribution.
pub fn cmd_entropy(
    cfg: &ExperimentConfig,
    base: Option<&Path>,
    out: Option<&Path>,
) -> Result<RunReport> {
    let started = std::time::Instant::now();
    let ctx = RunContext::new(cfg, base, out);
    let ec = emulation_config(cfg, base)?;
    let alphabet = load_alphabet(cfg, &ec.b)?;
    let cells = partition_circle(&ec, &alphabet, cfg.resolution)?;
    let (h_alpha, h_act) = stats_from_cells(&cells, &alphabet)?;
    let payload = json!({
        "cells": cells.len(),
        "h_alphabet_bits": h_alpha,
        "h_activation_bits": h_act,
        "p": cells.iter().map(|c| c.measure).collect::<Vec<_>>(),
    });
    Ok(ctx.finish("entropy", payload, started))
}

/// `partition`: learn the circle partition with the chosen learner and
/// cross-check it against the exhaustive oracle gridwise.
pub fn cmd_partition(
    cfg: &ExperimentConfig,
    base: Option<&Path>,
    out: Option<&Path>,
) -> Result<RunReport> {
    let started = std::time::Instant::now();
    let mut ctx = RunContext::new(cfg, base, out);
    let ec = emulation_config(cfg, base)?;
    let alphabet = load_alphabet(cfg, &ec.b)?;
    let cells = partition_circle(&ec, &alphabet, cfg.resolution)?;

    let learner = cfg.learner.as_deref().unwrap_or("oracle");
    let mut mismatches = 0usize;
    if learner == "hebb" {
        let spec = ConvergenceSpec::default();
        let alpha = cfg.hebb_alpha.unwrap_or(0.0);
        let check_points = 360.min(cfg.resolution);
        for k in 0..check_points {
            let theta = k as f64 * std::f64::consts::TAU / check_points as f64;
            let x0 = DVector::from_vec(vec![theta.cos(), theta.sin()]);
            let oracle = brute_force_select(&ec, &x0, &alphabet)?;
            let (hebb, _) = hebb_select(&ec, &x0, &alphabet, alpha, 2000, &spec)?;
            if hebb.winners != oracle.winners {
                mismatches += 1;
            }
        }
    } else if learner != "oracle" {
        return Err(Error::Config(format!("unknown learner '{learner}' for partition")));
    }

    ctx.write_artifact("partition.csv", &partition_csv(&cells))?;
    ctx.write_artifact(
        "partition.svg",
        &crate::svg::render_partition(&cells, Some(&ec.target)),
    )?;
    let census = used_pattern_census(&cells, &alphabet);
    let payload = json!({
        "learner": learner,
        "cells": cells_payload(&cells, &alphabet),
        "census": census,
        "learner_oracle_mismatches": mismatches,
    });
    Ok(ctx.finish("partition", payload, started))
}

/// `learn`: run one learner at a single anchor point.
pub fn cmd_learn(
    cfg: &ExperimentConfig,
    base: Option<&Path>,
    out: Option<&Path>,
) -> Result<RunReport> {
    let started = std::time::Instant::now();
    let mut ctx = RunContext::new(cfg, base, out);
    let ec = emulation_config(cfg, base)?;
    let alphabet = load_alphabet(cfg, &ec.b)?;
    let x0 = DVector::from_vec(
        cfg.x0.clone().ok_or_else(|| Error::Config("x0 is required for learn".into()))?,
    );
    let algorithm = cfg.learner.as_deref().unwrap_or("hebb");
    let payload = match algorithm {
        "oracle" => {
            let sel = brute_force_select(&ec, &x0, &alphabet)?;
            json!({
                "algorithm": "oracle",
                "winners": sel.winners.iter()
                    .map(|&i| alphabet[i].direction.as_slice().to_vec()).collect::<Vec<_>>(),
                "best_loss": sel.best_loss,
            })
        }
        "hebb" => {
            let spec = ConvergenceSpec { record_history: true, ..Default::default() };
            let alpha = cfg.hebb_alpha.unwrap_or(0.0);
            let (sel, outcome) = hebb_select(&ec, &x0, &alphabet, alpha, 2000, &spec)?;
            if let Some(history) = &outcome.history {
                let series: Vec<(String, Vec<f64>)> = outcome
                    .winners
                    .iter()
                    .map(|&k| (format!("w{k}"), history.iter().map(|w| w[k]).collect()))
                    .collect();
                ctx.write_artifact("weights.svg", &crate::svg::render_curves(&series))?;
                ctx.write_artifact(
                    "weights.json",
                    &serde_json::to_string(&history)?,
                )?;
            }
            json!({
                "algorithm": "hebb",
                "winners": sel.winners.iter()
                    .map(|&i| alphabet[i].direction.as_slice().to_vec()).collect::<Vec<_>>(),
                "iterations": outcome.iterations,
                "stopped": format!("{:?}", outcome.stopped),
                "best_loss": sel.best_loss,
            })
        }
        "dqn" => {
            let mut hyper = cfg.dqn.clone().unwrap_or_default();
            hyper.seed = hyper.seed.wrapping_add(cfg.seed);
            let outcome = dqn_select(&ec, &x0, &alphabet, &hyper)?;
            ctx.write_artifact(
                "dqn_diagnostics.json",
                &serde_json::to_string(&outcome.diagnostics)?,
            )?;
            json!({
                "algorithm": "dqn",
                "direction": outcome.direction.as_slice(),
                "pattern": outcome.pattern.0,
                "tie_set": outcome.tie_set.iter()
                    .map(|&i| alphabet[i].direction.as_slice().to_vec()).collect::<Vec<_>>(),
                "episodes": outcome.diagnostics.episodes,
                "kappa_trace": outcome.diagnostics.kappa_trace,
            })
        }
        other => return Err(Error::Config(format!("unknown algorithm '{other}'"))),
    };
    Ok(ctx.finish("learn", payload, started))
}

/// Compare one learned partition against the golden table. Returns
/// (rows, offending cells).
fn diff_against_golden(
    cells: &[PartitionCell],
    alphabet: &[AlphabetEntry],
    tol_theta: f64,
    tol_p: f64,
) -> Result<(Vec<Value>, Vec<String>)> {
    let golden = table1::golden_cells();
    if cells.len() != golden.len() {
        return Err(Error::Tolerance(format!(
            "{} learned cells vs {} golden",
            cells.len(),
            golden.len()
        )));
    }
    // match each golden row to the learned cell with the nearest lower
    // boundary on the circle
    let two_pi = std::f64::consts::TAU;
    let wrap_dist = |a: f64, b: f64| {
        let d = (a - b).rem_euclid(two_pi);
        d.min(two_pi - d)
    };
    let mut rows = Vec::new();
    let mut offending = Vec::new();
    for (g_idx, g) in golden.iter().enumerate() {
        let c = cells
            .iter()
            .min_by(|a, b| {
                let la = match a.region {
                    CellRegion::Arc { lo, .. } => wrap_dist(lo, g.theta_lo),
                    _ => f64::INFINITY,
                };
                let lb = match b.region {
                    CellRegion::Arc { lo, .. } => wrap_dist(lo, g.theta_lo),
                    _ => f64::INFINITY,
                };
                la.partial_cmp(&lb).unwrap()
            })
            .ok_or_else(|| Error::Tolerance("no learned cells".into()))?;
        let CellRegion::Arc { lo, .. } = c.region else { unreachable!() };
        let lo_w = lo;
        let alpha = alphabet[c.entry_index].multiplicity();
        let theta_err = wrap_dist(lo_w, g.theta_lo);
        let p_err = (c.measure - g.p).abs();
        let dir_ok = (c.direction[0] - g.direction[0]).abs() < 1e-9
            && (c.direction[1] - g.direction[1]).abs() < 1e-9;
        if theta_err > tol_theta {
            offending.push(format!("cell {}: boundary off by {theta_err:.2e}", g_idx + 1));
        }
        if !dir_ok {
            offending.push(format!("cell {}: wrong direction", g_idx + 1));
        }
        if alpha != g.alpha {
            offending.push(format!("cell {}: alpha {alpha} vs {}", g_idx + 1, g.alpha));
        }
        if p_err > tol_p {
            offending.push(format!(
                "cell {}: p {:.6} vs published {} (off by {p_err:.2e})",
                g_idx + 1,
                c.measure,
                g.p
            ));
        }
        rows.push(json!({
            "cell": g_idx + 1,
            "theta_lo": lo_w,
            "golden_theta_lo": g.theta_lo,
            "direction": c.direction.as_slice(),
            "alpha": alpha,
            "p": c.measure,
            "golden_p": g.p,
            "theta_err": theta_err,
            "p_err": p_err,
        }));
    }
    Ok((rows, offending))
}

/// `reproduce-table1`: rebuild the published example end to end and diff
/// it against the embedded golden values.
pub fn cmd_reproduce_table1(
    cfg: &ExperimentConfig,
    base: Option<&Path>,
    out: Option<&Path>,
) -> Result<RunReport> {
    let started = std::time::Instant::now();
    let mut ctx = RunContext::new(cfg, base, out);
    let ec = emulation_config(cfg, base)?;
    let alphabet = load_alphabet(cfg, &ec.b)?;
    let cells = partition_circle(&ec, &alphabet, cfg.resolution)?;
    let (h_alpha, h_act) = stats_from_cells(&cells, &alphabet)?;
    let census = used_pattern_census(&cells, &alphabet);

    ctx.write_artifact("table1.csv", &partition_csv(&cells))?;

    if cfg.alternate_b {
        // the golden table describes the redundant modulation matrix only
        let payload = json!({
            "alternate_b": true,
            "cells": cells_payload(&cells, &alphabet),
            "h_alphabet_bits": h_alpha,
            "h_activation_bits": h_act,
            "census": census,
        });
        return Ok(ctx.finish("reproduce-table1", payload, started));
    }

    let (rows, mut offending) = diff_against_golden(&cells, &alphabet, 1e-3, 1e-3)?;
    if (h_alpha - table1::H_ALPHABET).abs() > 5e-3 {
        offending.push(format!("alphabet entropy {h_alpha:.4} vs {}", table1::H_ALPHABET));
    }
    if (h_act - table1::H_ACTIVATION).abs() > 5e-3 {
        offending.push(format!("activation entropy {h_act:.4} vs {}", table1::H_ACTIVATION));
    }
    if census.used_patterns != table1::USED_PATTERNS
        || census.never_used != table1::NEVER_USED_PATTERNS
        || census.zero_mapped != table1::ZERO_MAPPED_PATTERNS
    {
        offending.push(format!("census {census:?}"));
    }

    let mut diff_csv = String::from("cell,theta_err,p_err\n");
    for r in &rows {
        diff_csv.push_str(&format!(
            "{},{:.3e},{:.3e}\n",
            r["cell"], r["theta_err"].as_f64().unwrap(), r["p_err"].as_f64().unwrap()
        ));
    }
    ctx.write_artifact("table1_diff.csv", &diff_csv)?;

    let payload = json!({
        "rows": rows,
        "h_alphabet_bits": h_alpha,
        "h_activation_bits": h_act,
        "census": census,
        "offending": offending,
    });
    let report = ctx.finish("reproduce-table1", payload, started);
    if !report.payload["offending"].as_array().unwrap().is_empty() {
        eprintln!("{}", serde_json::to_string_pretty(&report.payload["offending"])?);
        return Err(Error::Tolerance(format!(
            "{} cells off the published values",
            report.payload["offending"].as_array().unwrap().len()
        )));
    }
    Ok(report)
}

/// The oracle's direction label sequence on a uniform grid; the object
/// compared across channel-dropout scenarios.
pub fn direction_field(
    ec: &EmulationConfig,
    alphabet: &[AlphabetEntry],
    grid: usize,
) -> Result<Vec<Vec<i64>>> {
    let mut field = Vec::with_capacity(grid);
    for k in 0..grid {
        let theta = k as f64 * std::f64::consts::TAU / grid as f64;
        let x0 = DVector::from_vec(vec![theta.cos(), theta.sin()]);
        let sel = brute_force_select(ec, &x0, alphabet)?;
        field.push(crate::alphabet::direction_key(&alphabet[sel.primary()].direction));
    }
    Ok(field)
}

/// `dropout-relearn`: relearn the partition with one channel removed and
/// compare the learned direction field against the all-channels field.
pub fn cmd_dropout_relearn(
    cfg: &ExperimentConfig,
    base: Option<&Path>,
    out: Option<&Path>,
) -> Result<RunReport> {
    let started = std::time::Instant::now();
    let ctx = RunContext::new(cfg, base, out);
    let ec = emulation_config(cfg, base)?;
    let m = ec.b.ncols();
    let channels: Vec<usize> = match cfg.drop {
        Some(c) => {
            if c == 0 || c > m {
                return Err(Error::Config(format!("channel {c} outside 1..={m}")));
            }
            vec![c]
        }
        None => (1..=m).collect(),
    };
    let grid = cfg.resolution.min(2048);
    let full_alphabet = build_alphabet(&ec.b, enumerate_patterns(m, cfg.binary_only)?)?;
    let full_field = direction_field(&ec, &full_alphabet, grid)?;

    let mut per_channel = Vec::new();
    for c in &channels {
        let kept = drop_channel(enumerate_patterns(m, cfg.binary_only)?, *c, m)?;
        let alphabet = build_alphabet(&ec.b, kept.into_iter())?;
        let field = direction_field(&ec, &alphabet, grid)?;
        let identical = field == full_field;
        let changed_points = field
            .iter()
            .zip(&full_field)
            .filter(|(a, b)| a != b)
            .count();
        per_channel.push(json!({
            "channel": c,
            "identical_to_full": identical,
            "changed_grid_points": changed_points,
        }));
    }
    let payload = json!({ "grid": grid, "channels": per_channel });
    Ok(ctx.finish("dropout-relearn", payload, started))
}

/// `plot`: render a previously exported artifact as SVG.
pub fn cmd_plot(
    cfg: &ExperimentConfig,
    input: &Path,
    kind: &str,
    out: Option<&Path>,
) -> Result<RunReport> {
    let started = std::time::Instant::now();
    let mut ctx = RunContext::new(cfg, None, out);
    let text = std::fs::read_to_string(input)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", input.display())))?;
    let svg = match kind {
        "partition" => {
            let mut cells = Vec::new();
            for (i, line) in text.lines().skip(1).enumerate() {
                let parts: Vec<&str> = line.split(',').collect();
                if parts.len() < 6 {
                    return Err(Error::InvalidInput(format!("bad partition row {i}")));
                }
                let parse =
                    |s: &str| s.trim().parse::<f64>().map_err(|e| Error::InvalidInput(e.to_string()));
                let lo = parse(parts[0])?;
                let hi = parse(parts[1])?;
                let d = DVector::from_vec(vec![parse(parts[2])?, parse(parts[3])?]);
                cells.push(PartitionCell {
                    id: i,
                    entry_index: i,
                    direction: d,
                    pattern: crate::alphabet::ActivationPattern(vec![]),
                    region: CellRegion::Arc { lo, hi },
                    measure: parse(parts[5])?,
                    std_err: None,
                });
            }
            crate::svg::render_partition(&cells, None)
        }
        "trajectory" => {
            let mut e_norms = Vec::new();
            for line in text.lines().skip(1) {
                if let Some(last) = line.rsplit(',').next() {
                    e_norms.push(
                        last.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::InvalidInput(e.to_string()))?,
                    );
                }
            }
            crate::svg::render_curves(&[("e_norm".to_string(), e_norms)])
        }
        "weights" => {
            let history: Vec<Vec<f64>> =
                serde_json::from_str(&text).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let k = history.first().map_or(0, |w| w.len());
            let series: Vec<(String, Vec<f64>)> = (0..k)
                .map(|j| (format!("w{j}"), history.iter().map(|w| w[j]).collect()))
                .collect();
            crate::svg::render_curves(&series)
        }
        "quiver" => {
            let entries: Vec<Value> =
                serde_json::from_str(&text).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let dirs: Vec<(DVector<f64>, usize)> = entries
                .iter()
                .map(|e| {
                    let d: Vec<f64> = e["d"]
                        .as_array()
                        .ok_or_else(|| Error::InvalidInput("missing d".into()))?
                        .iter()
                        .map(|v| v.as_f64().unwrap_or(0.0))
                        .collect();
                    let alpha = e["alpha"].as_u64().unwrap_or(1) as usize;
                    Ok((DVector::from_vec(d), alpha))
                })
                .collect::<Result<Vec<_>>>()?;
            crate::svg::render_quiver(&dirs)
        }
        other => return Err(Error::Config(format!("unknown plot kind '{other}'"))),
    };
    let name = format!("{kind}.svg");
    ctx.write_artifact(&name, &svg)?;
    let payload = json!({ "kind": kind, "bytes": svg.len() });
    Ok(ctx.finish("plot", payload, started))
}

/// Maps an error to the process exit code contract: 2 for config and
/// input problems, 3 for tolerance or invariant failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Tolerance(_)
        | Error::Divergence(_)
        | Error::NoConvergence(_)
        | Error::DegenerateScores
        | Error::EigenFailure
        | Error::OutsideLattice(_) => 3,
        _ => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_config() -> ExperimentConfig {
        ExperimentConfig { resolution: 1024, ..Default::default() }
    }

    #[test]
    fn entropy_command_runs() {
        let cfg = example_config();
        let report = cmd_entropy(&cfg, None, None).unwrap();
        let h = report.payload["h_alphabet_bits"].as_f64().unwrap();
        assert!((h - 3.052).abs() < 5e-3);
    }

    #[test]
    fn payload_reproducible() {
        let cfg = example_config();
        let a = cmd_entropy(&cfg, None, None).unwrap();
        let b = cmd_entropy(&cfg, None, None).unwrap();
        assert_eq!(a.payload_digest(), b.payload_digest());
        assert_eq!(a.config_digest, b.config_digest);
    }

    #[test]
    fn missing_matrix_is_config_error() {
        let cfg = example_config();
        let err = cmd_design(&cfg, None, None).unwrap_err();
        assert_eq!(exit_code(&err), 2);
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn dropout_relearn_channels() {
        let mut cfg = example_config();
        cfg.resolution = 720;
        let report = cmd_dropout_relearn(&cfg, None, None).unwrap();
        let channels = report.payload["channels"].as_array().unwrap();
        assert_eq!(channels.len(), 4);
        assert_eq!(channels[0]["identical_to_full"], json!(true));
        assert_eq!(channels[1]["identical_to_full"], json!(false));
        assert_eq!(channels[2]["identical_to_full"], json!(true));
        assert_eq!(channels[3]["identical_to_full"], json!(false));
    }

    #[test]
    fn dropout_relearn_bad_channel() {
        let mut cfg = example_config();
        cfg.drop = Some(5);
        let err = cmd_dropout_relearn(&cfg, None, None).unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }
}

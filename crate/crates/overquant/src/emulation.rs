//! The restricted emulation problem on the unit sphere: pick quantized
//! inputs so the one-step motion of the quantized system tracks a target
//! linear flow. Contains the exhaustive selection oracle, the
//! multiplicative-weight iterative learner, and partition extraction with
//! boundary refinement and cell measures.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::alphabet::{ActivationPattern, AlphabetEntry};
use crate::{Error, Result};

/// Absolute tolerance within which optima are treated as tied.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Inner-product score with a magnitude penalty, maximized.
    Composite,
    /// Norm of the one-step difference, minimized.
    NormDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// `exp(Hh)·x0`
    Exact,
    /// `(I + Hh)·x0`
    FirstOrder,
}

/// Target field, modulation matrix, and metric parameters.
#[derive(Debug, Clone)]
pub struct EmulationConfig {
    /// The n×n matrix of the flow being emulated.
    pub target: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Sampling interval h.
    pub dt: f64,
    /// Magnitude-penalty weight of the composite metric.
    pub wt: f64,
    pub loss_kind: LossKind,
    pub target_kind: TargetKind,
    /// Compare against `x0 + Bu` instead of `x0 + h·Bu`.
    pub unscaled_input: bool,
}

impl EmulationConfig {
    pub fn new(target: DMatrix<f64>, b: DMatrix<f64>, dt: f64, wt: f64) -> Result<Self> {
        if target.nrows() != target.ncols() || target.nrows() != b.nrows() {
            return Err(Error::Dimension("target must be n×n matching B".into()));
        }
        if dt <= 0.0 || wt < 0.0 {
            return Err(Error::InvalidInput("need h > 0 and wt >= 0".into()));
        }
        Ok(EmulationConfig {
            target,
            b,
            dt,
            wt,
            loss_kind: LossKind::NormDiff,
            target_kind: TargetKind::FirstOrder,
            unscaled_input: false,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.target.nrows()
    }

    fn check_unit(&self, x0: &DVector<f64>) -> Result<()> {
        if (x0.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "x0 must be a unit vector, |x0| = {}",
                x0.norm()
            )));
        }
        Ok(())
    }

    /// `exp(Hh)x0` or `(I + Hh)x0` depending on `target_kind`.
    pub fn target_field(&self, x0: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_unit(x0)?;
        let hh = &self.target * self.dt;
        Ok(match self.target_kind {
            TargetKind::Exact => hh.exp() * x0,
            TargetKind::FirstOrder => x0 + hh * x0,
        })
    }

    /// `⟨Hh·x0, hBu⟩ − wt·|‖Hh·x0‖ − ‖hBu‖|`, a score to maximize.
    pub fn composite_score(&self, x0: &DVector<f64>, direction: &DVector<f64>) -> Result<f64> {
        self.check_unit(x0)?;
        let hhx = &self.target * x0 * self.dt;
        let step = if self.unscaled_input { 1.0 } else { self.dt };
        let hbu = direction * step;
        Ok(hhx.dot(&hbu) - self.wt * (hhx.norm() - hbu.norm()).abs())
    }

    /// `‖target_field(x0) − (x0 + h·Bu)‖`, a loss to minimize.
    pub fn norm_loss(&self, x0: &DVector<f64>, direction: &DVector<f64>) -> Result<f64> {
        let target = self.target_field(x0)?;
        let step = if self.unscaled_input { 1.0 } else { self.dt };
        Ok((target - (x0 + direction * step)).norm())
    }

    /// Uniform "smaller is better" objective over either metric.
    pub fn loss(&self, x0: &DVector<f64>, direction: &DVector<f64>) -> Result<f64> {
        match self.loss_kind {
            LossKind::NormDiff => self.norm_loss(x0, direction),
            LossKind::Composite => Ok(-self.composite_score(x0, direction)?),
        }
    }

    pub fn composite_score_pattern(&self, x0: &DVector<f64>, u: &ActivationPattern) -> Result<f64> {
        self.composite_score(x0, &u.apply(&self.b))
    }

    pub fn norm_loss_pattern(&self, x0: &DVector<f64>, u: &ActivationPattern) -> Result<f64> {
        self.norm_loss(x0, &u.apply(&self.b))
    }
}

/// Result of exhaustive optimization over the alphabet: every entry tied
/// with the optimum within [`TIE_TOL`].
#[derive(Debug, Clone)]
pub struct Selection {
    /// Indices into the alphabet slice, ascending.
    pub winners: Vec<usize>,
    pub best_loss: f64,
}

impl Selection {
    /// Lowest-index winner, the deterministic cell label.
    pub fn primary(&self) -> usize {
        self.winners[0]
    }
}

/// Exhaustive argmin of the loss over all non-zero alphabet entries. The
/// independent oracle both learners are compared against.
pub fn brute_force_select(
    cfg: &EmulationConfig,
    x0: &DVector<f64>,
    alphabet: &[AlphabetEntry],
) -> Result<Selection> {
    let mut best = f64::INFINITY;
    let mut losses = Vec::with_capacity(alphabet.len());
    for entry in alphabet {
        let l = if entry.is_zero {
            f64::INFINITY
        } else {
            cfg.loss(x0, &entry.direction)?
        };
        best = best.min(l);
        losses.push(l);
    }
    if !best.is_finite() {
        return Err(Error::InvalidInput("alphabet has no usable entries".into()));
    }
    let winners: Vec<usize> = losses
        .iter()
        .enumerate()
        .filter(|(_, &l)| l <= best + TIE_TOL)
        .map(|(i, _)| i)
        .collect();
    Ok(Selection { winners, best_loss: best })
}

/// Maps losses to the nonnegative scores the iterative learner needs:
/// reciprocal for norm losses, affine rescale to [0,1] for composite
/// scores (which may be negative). Scores are normalized to a maximum of
/// one: the α=0 trajectory is scale-invariant, while for α > 0 the scale
/// sets how much the additive term damps each update, and an O(1) scale
/// keeps that damping (and its convergence-rate cost) visible.
pub fn nonnegative_scores(losses: &[f64], kind: LossKind) -> Vec<f64> {
    match kind {
        LossKind::NormDiff => {
            let raw: Vec<f64> = losses.iter().map(|&l| 1.0 / (1e-9 + l)).collect();
            let max = raw.iter().cloned().fold(0.0_f64, f64::max);
            if max <= 0.0 {
                return raw;
            }
            raw.iter().map(|&g| g / max).collect()
        }
        LossKind::Composite => {
            // losses are negated scores
            let max = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = losses.iter().cloned().fold(f64::INFINITY, f64::min);
            let range = max - min;
            if range <= 0.0 {
                return vec![1.0; losses.len()];
            }
            losses.iter().map(|&l| (max - l) / range).collect()
        }
    }
}

/// How an iterative run terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stopped {
    /// A single weight reached the winner threshold.
    Winner,
    /// The top two weights locked above the tie threshold.
    Tie,
    /// Ran to the iteration cap.
    Cap,
}

#[derive(Debug, Clone)]
pub struct ConvergenceSpec {
    pub winner_threshold: f64,
    pub tie_threshold: f64,
    pub tie_ratio: f64,
    pub tie_patience: usize,
    pub record_history: bool,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec {
            winner_threshold: 0.99,
            tie_threshold: 0.45,
            tie_ratio: 1.2,
            tie_patience: 50,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HebbOutcome {
    pub weights: Vec<f64>,
    /// Indices in the top weight group, ascending.
    pub winners: Vec<usize>,
    pub iterations: usize,
    pub stopped: Stopped,
    pub history: Option<Vec<Vec<f64>>>,
}

fn top_group(weights: &[f64], ratio: f64) -> Vec<usize> {
    let max = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w >= max / ratio)
        .map(|(i, _)| i)
        .collect()
}

/// Multiplicative-weight iteration
/// `m_k ← m_k(α + G_k) / Σ_l m_l(α + G_l)`
/// over nonnegative scores `G`; the weights concentrate on the argmax.
/// Weights start uniform, stay on the probability simplex at every step,
/// and preserve the ordering of the scores.
pub fn hebb_learn(
    scores: &[f64],
    alpha: f64,
    max_iterations: usize,
    spec: &ConvergenceSpec,
) -> Result<HebbOutcome> {
    let k = scores.len();
    if k == 0 {
        return Err(Error::InvalidInput("no candidates".into()));
    }
    if alpha < 0.0 || scores.iter().any(|&g| g < 0.0 || !g.is_finite()) {
        return Err(Error::InvalidInput(
            "scores and alpha must be nonnegative finite".into(),
        ));
    }
    if alpha == 0.0 && scores.iter().all(|&g| g == 0.0) {
        return Err(Error::DegenerateScores);
    }

    let mut weights = vec![1.0 / k as f64; k];
    let mut history = spec.record_history.then(|| vec![weights.clone()]);
    let mut tie_streak = 0usize;
    let mut iterations = 0usize;
    let mut stopped = Stopped::Cap;

    for _ in 0..max_iterations {
        let mut total = 0.0;
        for (w, &g) in weights.iter_mut().zip(scores) {
            *w *= alpha + g;
            total += *w;
        }
        if total <= 0.0 {
            return Err(Error::DegenerateScores);
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        iterations += 1;
        if let Some(h) = history.as_mut() {
            h.push(weights.clone());
        }

        debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);

        let mut sorted: Vec<f64> = weights.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if sorted[0] >= spec.winner_threshold {
            stopped = Stopped::Winner;
            break;
        }
        if k >= 2
            && sorted[1] > spec.tie_threshold
            && sorted[0] <= sorted[1] * spec.tie_ratio
        {
            tie_streak += 1;
            if tie_streak >= spec.tie_patience {
                stopped = Stopped::Tie;
                break;
            }
        } else {
            tie_streak = 0;
        }
    }

    let winners = top_group(&weights, spec.tie_ratio);
    Ok(HebbOutcome { weights, winners, iterations, stopped, history })
}

/// Iterations until the optimal group's total weight reaches the winner
/// threshold, per value of α. Slower for larger α.
pub fn convergence_compare(
    scores: &[f64],
    alphas: &[f64],
    max_iterations: usize,
    threshold: f64,
) -> Result<Vec<Option<usize>>> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let optimal: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, &g)| g >= max - TIE_TOL)
        .map(|(i, _)| i)
        .collect();
    let k = scores.len();
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        if alpha < 0.0 {
            return Err(Error::InvalidInput("alpha must be nonnegative".into()));
        }
        let mut weights = vec![1.0 / k as f64; k];
        let mut reached = None;
        for j in 1..=max_iterations {
            let mut total = 0.0;
            for (w, &g) in weights.iter_mut().zip(scores) {
                *w *= alpha + g;
                total += *w;
            }
            for w in weights.iter_mut() {
                *w /= total;
            }
            let mass: f64 = optimal.iter().map(|&i| weights[i]).sum();
            if mass >= threshold {
                reached = Some(j);
                break;
            }
        }
        out.push(reached);
    }
    Ok(out)
}

/// Region of the sphere covered by one partition cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CellRegion {
    /// Angular interval `[lo, hi)` in radians (n = 2); may wrap past 2π.
    Arc { lo: f64, hi: f64 },
    /// Indices of the Monte Carlo sample points in the cell (n ≥ 3).
    Samples(Vec<usize>),
}

/// One cell of the learned quantization partition.
#[derive(Debug, Clone)]
pub struct PartitionCell {
    pub id: usize,
    /// Alphabet index of the selected direction.
    pub entry_index: usize,
    pub direction: DVector<f64>,
    pub pattern: ActivationPattern,
    pub region: CellRegion,
    /// Normalized sphere measure of the cell.
    pub measure: f64,
    /// Binomial standard error of the measure (Monte Carlo cells only).
    pub std_err: Option<f64>,
}

fn unit_circle(theta: f64) -> DVector<f64> {
    DVector::from_vec(vec![theta.cos(), theta.sin()])
}

/// Sweeps the unit circle, assigns each grid angle to its oracle winner,
/// bisects every sign-change interval to localize boundaries to 1e-6 rad,
/// and reports the cells with their arc measures.
pub fn partition_circle(
    cfg: &EmulationConfig,
    alphabet: &[AlphabetEntry],
    resolution: usize,
) -> Result<Vec<PartitionCell>> {
    if cfg.state_dim() != 2 {
        return Err(Error::Dimension("circle partition needs n = 2".into()));
    }
    if resolution < 8 {
        return Err(Error::InvalidInput("resolution too small".into()));
    }
    let two_pi = std::f64::consts::TAU;
    let winner_at = |theta: f64| -> Result<usize> {
        Ok(brute_force_select(cfg, &unit_circle(theta), alphabet)?.primary())
    };

    let grid: Vec<f64> = (0..resolution).map(|k| k as f64 * two_pi / resolution as f64).collect();
    let labels: Vec<usize> = grid
        .iter()
        .map(|&t| winner_at(t))
        .collect::<Result<Vec<_>>>()?;

    // boundary angles between consecutive differing labels
    let mut boundaries: Vec<(f64, usize)> = Vec::new(); // (angle, label after)
    for k in 0..resolution {
        let next = (k + 1) % resolution;
        if labels[k] != labels[next] {
            let mut lo = grid[k];
            let mut hi = grid[k] + two_pi / resolution as f64;
            let left = labels[k];
            while hi - lo > 1e-9 {
                let mid = 0.5 * (lo + hi);
                if winner_at(mid % two_pi)? == left {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            boundaries.push((0.5 * (lo + hi) % two_pi, labels[next]));
        }
    }

    if boundaries.is_empty() {
        // single cell covering the sphere
        let entry = &alphabet[labels[0]];
        return Ok(vec![PartitionCell {
            id: 0,
            entry_index: labels[0],
            direction: entry.direction.clone(),
            pattern: entry.canonical_pattern().clone(),
            region: CellRegion::Arc { lo: 0.0, hi: two_pi },
            measure: 1.0,
            std_err: None,
        }]);
    }

    boundaries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let m = boundaries.len();
    let mut cells = Vec::with_capacity(m);
    for j in 0..m {
        let lo = boundaries[j].0;
        let hi = if j + 1 < m { boundaries[j + 1].0 } else { boundaries[0].0 + two_pi };
        let label = boundaries[j].1;
        let entry = &alphabet[label];
        cells.push(PartitionCell {
            id: j,
            entry_index: label,
            direction: entry.direction.clone(),
            pattern: entry.canonical_pattern().clone(),
            region: CellRegion::Arc { lo, hi },
            measure: (hi - lo) / two_pi,
            std_err: None,
        });
    }
    Ok(cells)
}

/// Seeded Monte Carlo partition of `S^{n-1}`: uniform sphere samples
/// (normalized Gaussians), cell measure = winning fraction.
pub fn partition_sphere_mc(
    cfg: &EmulationConfig,
    alphabet: &[AlphabetEntry],
    samples: usize,
    seed: u64,
) -> Result<Vec<PartitionCell>> {
    let n = cfg.state_dim();
    if n < 2 {
        return Err(Error::Dimension("sphere partition needs n >= 2".into()));
    }
    if samples < 10_000 {
        return Err(Error::InvalidInput("need at least 10^4 samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for s in 0..samples {
        let mut x = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        while x.norm() < 1e-12 {
            x = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        }
        x /= x.norm();
        let sel = brute_force_select(cfg, &x, alphabet)?;
        cells.entry(sel.primary()).or_default().push(s);
    }
    Ok(cells
        .into_iter()
        .enumerate()
        .map(|(id, (entry_index, members))| {
            let p = members.len() as f64 / samples as f64;
            let entry = &alphabet[entry_index];
            PartitionCell {
                id,
                entry_index,
                direction: entry.direction.clone(),
                pattern: entry.canonical_pattern().clone(),
                region: CellRegion::Samples(members),
                measure: p,
                std_err: Some((p * (1.0 - p) / samples as f64).sqrt()),
            }
        })
        .collect())
}

/// Pattern usage counts of a converged partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternCensus {
    pub used_directions: usize,
    pub used_patterns: usize,
    pub zero_mapped: usize,
    pub never_used: usize,
}

pub fn used_pattern_census(cells: &[PartitionCell], alphabet: &[AlphabetEntry]) -> PatternCensus {
    let used: std::collections::BTreeSet<usize> = cells.iter().map(|c| c.entry_index).collect();
    let used_patterns: usize = used.iter().map(|&i| alphabet[i].multiplicity()).sum();
    let zero_mapped: usize = alphabet
        .iter()
        .filter(|e| e.is_zero)
        .map(|e| e.multiplicity())
        .sum();
    let total: usize = alphabet.iter().map(|e| e.multiplicity()).sum();
    PatternCensus {
        used_directions: used.len(),
        used_patterns,
        zero_mapped,
        never_used: total - zero_mapped - used_patterns,
    }
}

/// Per-pattern losses at a point, in alphabet-then-preimage order, with
/// the owning entry index for each candidate. This is the candidate list
/// the pattern-level learners run over (zero-mapped entries excluded).
pub fn pattern_candidates(
    cfg: &EmulationConfig,
    x0: &DVector<f64>,
    alphabet: &[AlphabetEntry],
) -> Result<(Vec<f64>, Vec<(usize, ActivationPattern)>)> {
    let mut losses = Vec::new();
    let mut owners = Vec::new();
    for (i, entry) in alphabet.iter().enumerate() {
        if entry.is_zero {
            continue;
        }
        let loss = cfg.loss(x0, &entry.direction)?;
        for u in &entry.preimages {
            losses.push(loss);
            owners.push((i, u.clone()));
        }
    }
    Ok((losses, owners))
}

/// Runs the iterative learner over all nonzero patterns at `x0` and maps
/// the winning patterns back to their directions.
pub fn hebb_select(
    cfg: &EmulationConfig,
    x0: &DVector<f64>,
    alphabet: &[AlphabetEntry],
    alpha: f64,
    max_iterations: usize,
    spec: &ConvergenceSpec,
) -> Result<(Selection, HebbOutcome)> {
    let (losses, owners) = pattern_candidates(cfg, x0, alphabet)?;
    let scores = nonnegative_scores(&losses, cfg.loss_kind);
    let outcome = hebb_learn(&scores, alpha, max_iterations, spec)?;
    let mut winners: Vec<usize> = outcome.winners.iter().map(|&k| owners[k].0).collect();
    winners.sort_unstable();
    winners.dedup();
    let best_loss = outcome.winners.iter().map(|&k| losses[k]).fold(f64::INFINITY, f64::min);
    Ok((Selection { winners, best_loss }, outcome))
}

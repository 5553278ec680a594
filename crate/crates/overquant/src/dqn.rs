//! Deep Q-learning over alphabet directions: ε-greedy action selection,
//! a replay ring, a small from-scratch feedforward Q-approximator with
//! periodic target sync, and the outer threshold-refinement loop that
//! tightens the acceptance level κ each time a strictly better direction
//! is found.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::AlphabetEntry;
use crate::emulation::EmulationConfig;
use crate::{Error, Result};

/// One stored transition.
#[derive(Debug, Clone)]
pub struct ReplayCue {
    pub state: DVector<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: DVector<f64>,
    pub terminal: bool,
}

/// Fixed-capacity ring of cues; the oldest is overwritten when full.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    cues: Vec<ReplayCue>,
    next: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayMemory { capacity, cues: Vec::with_capacity(capacity), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.cues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cues.is_empty()
    }

    pub fn push(&mut self, cue: ReplayCue) {
        if self.cues.len() < self.capacity {
            self.cues.push(cue);
        } else {
            self.cues[self.next] = cue;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform sample with replacement over current contents.
    pub fn sample<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<&ReplayCue> {
        (0..count).map(|_| &self.cues[rng.gen_range(0..self.cues.len())]).collect()
    }
}

/// Dense feedforward net `n → 32 → 32 → K` with rectifier hidden units and
/// a linear head, trained by plain SGD on the squared Bellman error.
#[derive(Debug, Clone)]
pub struct QApproximator {
    pub sizes: Vec<usize>,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    target_weights: Vec<DMatrix<f64>>,
    target_biases: Vec<DVector<f64>>,
}

pub const HIDDEN_WIDTH: usize = 32;

impl QApproximator {
    pub fn new(input: usize, actions: usize, rng: &mut impl Rng) -> Self {
        let sizes = vec![input, HIDDEN_WIDTH, HIDDEN_WIDTH, actions];
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| {
                rng.gen_range(-scale..scale)
            }));
            biases.push(DVector::zeros(fan_out));
        }
        QApproximator {
            sizes,
            target_weights: weights.clone(),
            target_biases: biases.clone(),
            weights,
            biases,
        }
    }

    pub fn zeroed(input: usize, actions: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Self::new(input, actions, &mut rng);
        for w in net.weights.iter_mut().chain(net.target_weights.iter_mut()) {
            w.fill(0.0);
        }
        for b in net.biases.iter_mut().chain(net.target_biases.iter_mut()) {
            b.fill(0.0);
        }
        net
    }

    pub fn sync_target(&mut self) {
        self.target_weights = self.weights.clone();
        self.target_biases = self.biases.clone();
    }

    pub fn target_equals_online(&self) -> bool {
        self.weights == self.target_weights && self.biases == self.target_biases
    }

    /// Deterministic forward pass; errors on non-finite activations.
    pub fn forward(&self, x: &DVector<f64>, use_target: bool) -> Result<DVector<f64>> {
        let (ws, bs) = if use_target {
            (&self.target_weights, &self.target_biases)
        } else {
            (&self.weights, &self.biases)
        };
        let mut a = x.clone();
        for (layer, (w, b)) in ws.iter().zip(bs).enumerate() {
            a = w * a + b;
            if layer + 1 < ws.len() {
                a.apply(|v| *v = v.max(0.0));
            }
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite Q output".into()));
        }
        Ok(a)
    }

    /// One SGD step on the mean squared error between `Q(x_j, d_j)` and the
    /// per-cue targets `y_j`. Returns the pre-step loss.
    pub fn train_on(
        &mut self,
        batch: &[(&DVector<f64>, usize, f64)],
        learn_rate: f64,
    ) -> Result<f64> {
        let layers = self.weights.len();
        let mut grad_w: Vec<DMatrix<f64>> =
            self.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect();
        let mut grad_b: Vec<DVector<f64>> =
            self.biases.iter().map(|b| DVector::zeros(b.len())).collect();
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;

        for &(x, action, y) in batch {
            // forward, keeping activations
            let mut acts = vec![x.clone()];
            for (layer, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
                let mut a = w * acts.last().unwrap() + b;
                if layer + 1 < layers {
                    a.apply(|v| *v = v.max(0.0));
                }
                acts.push(a);
            }
            let out = acts.last().unwrap();
            let err = out[action] - y;
            loss += scale * err * err;

            // backward: d(err²)/d(out_a) = 2·err on the taken action only
            let mut delta = DVector::zeros(out.len());
            delta[action] = 2.0 * err * scale;
            for layer in (0..layers).rev() {
                grad_w[layer] += &delta * acts[layer].transpose();
                grad_b[layer] += &delta;
                if layer > 0 {
                    let mut back = self.weights[layer].transpose() * delta;
                    // rectifier gate of the pre-activation sign, recovered
                    // from the stored post-activation
                    for (v, &a) in back.iter_mut().zip(acts[layer].iter()) {
                        if a <= 0.0 {
                            *v = 0.0;
                        }
                    }
                    delta = back;
                }
            }
        }

        if !loss.is_finite() || loss > 1e12 {
            return Err(Error::Divergence(format!("loss = {loss}")));
        }
        for layer in 0..layers {
            self.weights[layer] -= learn_rate * &grad_w[layer];
            self.biases[layer] -= learn_rate * &grad_b[layer];
        }
        Ok(loss)
    }

    /// Flattened parameter access, used by the finite-difference check.
    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn param(&self, idx: usize) -> f64 {
        let mut i = idx;
        for w in &self.weights {
            if i < w.len() {
                return w.as_slice()[i];
            }
            i -= w.len();
        }
        for b in &self.biases {
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut f64 {
        let mut i = idx;
        for w in self.weights.iter_mut() {
            if i < w.len() {
                return &mut w.as_mut_slice()[i];
            }
            i -= w.len();
        }
        for b in self.biases.iter_mut() {
            if i < b.len() {
                return &mut b[i];
            }
            i -= b.len();
        }
        panic!("parameter index out of range");
    }
}

/// Bellman target: `r` for terminal cues, else `r + γ·max_d' Q_target`.
pub fn bellman_targets(
    net: &QApproximator,
    batch: &[&ReplayCue],
    gamma: f64,
) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|cue| {
            if cue.terminal {
                Ok(cue.reward)
            } else {
                let q = net.forward(&cue.next_state, true)?;
                Ok(cue.reward + gamma * q.max())
            }
        })
        .collect()
}

/// One training step on a sampled minibatch. Returns the pre-step loss.
pub fn train_step(
    net: &mut QApproximator,
    batch: &[&ReplayCue],
    gamma: f64,
    learn_rate: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty minibatch".into()));
    }
    let targets = bellman_targets(net, batch, gamma)?;
    let rows: Vec<(&DVector<f64>, usize, f64)> = batch
        .iter()
        .zip(&targets)
        .map(|(cue, &y)| (&cue.state, cue.action, y))
        .collect();
    net.train_on(&rows, learn_rate)
}

/// Hyperparameters of the learner. None of these come from the problem
/// statement; they are fixed here for desk-scale determinism.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DqnHyper {
    pub capacity: usize,
    pub minibatch: usize,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub learn_rate: f64,
    pub target_period: usize,
    pub max_steps_per_episode: usize,
    pub episode_cap: usize,
    /// Episodes without improvement before the level κ is declared final.
    pub patience: usize,
    /// Train every this many environment steps.
    pub train_every: usize,
    pub seed: u64,
}

impl Default for DqnHyper {
    fn default() -> Self {
        DqnHyper {
            capacity: 10_000,
            minibatch: 32,
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 2000,
            learn_rate: 1e-3,
            target_period: 100,
            max_steps_per_episode: 40,
            episode_cap: 400,
            patience: 12,
            train_every: 1,
            seed: 0,
        }
    }
}

impl DqnHyper {
    fn epsilon(&self, step: usize) -> f64 {
        let t = (step as f64 / self.epsilon_decay_steps as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }
}

/// One quantized step followed by radial retraction to the sphere. A zero
/// vector before normalization is treated as a self-transition.
pub fn state_transition(x: &DVector<f64>, direction: &DVector<f64>, dt: f64) -> DVector<f64> {
    let y = x + direction * dt;
    let norm = y.norm();
    if norm < 1e-12 {
        x.clone()
    } else {
        y / norm
    }
}

/// Run diagnostics exported as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DqnDiagnostics {
    pub episode_rewards: Vec<f64>,
    pub losses: Vec<f64>,
    pub kappa_trace: Vec<f64>,
    pub episodes: usize,
    pub steps: usize,
}

/// Outcome of a learner run at one anchor point.
#[derive(Debug, Clone)]
pub struct DqnOutcome {
    /// Alphabet index of the learned optimal direction.
    pub winner: usize,
    /// All alphabet indices whose loss ties the winner.
    pub tie_set: Vec<usize>,
    pub direction: DVector<f64>,
    pub pattern: crate::alphabet::ActivationPattern,
    pub diagnostics: DqnDiagnostics,
}

/// Learns the optimal quantization direction at `x0`. The action space is
/// the nonzero alphabet; the reward of action `u` is `−G(u, x0)`. Episodes
/// terminate when an action strictly beats the current level κ, which is
/// then tightened to that action's loss; the run converges once no episode
/// improves on κ for `patience` consecutive episodes.
pub fn dqn_select(
    cfg: &EmulationConfig,
    x0: &DVector<f64>,
    alphabet: &[AlphabetEntry],
    hyper: &DqnHyper,
) -> Result<DqnOutcome> {
    let actions: Vec<(usize, &AlphabetEntry)> = alphabet
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.is_zero)
        .collect();
    if actions.is_empty() {
        return Err(Error::InvalidInput("alphabet has no usable entries".into()));
    }
    let losses: Vec<f64> = actions
        .iter()
        .map(|(_, e)| cfg.loss(x0, &e.direction))
        .collect::<Result<Vec<_>>>()?;
    let k = actions.len();
    let n = x0.len();

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut net = QApproximator::new(n, k, &mut rng);
    let mut memory = ReplayMemory::new(hyper.capacity);

    // κ starts at the loss of an arbitrary action (the first one)
    let mut kappa = losses[0];
    let mut best_action = 0usize;
    let mut diagnostics = DqnDiagnostics {
        episode_rewards: Vec::new(),
        losses: Vec::new(),
        kappa_trace: vec![kappa],
        episodes: 0,
        steps: 0,
    };

    let mut stale = 0usize;
    let mut converged = false;
    let mut global_step = 0usize;

    for _episode in 0..hyper.episode_cap {
        let mut x = x0.clone();
        let mut episode_reward = 0.0;
        let mut improved: Option<usize> = None;

        for _ in 0..hyper.max_steps_per_episode {
            let eps = hyper.epsilon(global_step);
            let action = if rng.gen_bool(eps) {
                rng.gen_range(0..k)
            } else {
                let q = net.forward(&x, false)?;
                q.argmax().0
            };
            let reward = -losses[action];
            episode_reward += reward;
            let terminal = losses[action] < kappa - 1e-12;
            let next = state_transition(&x, &actions[action].1.direction, cfg.dt);
            memory.push(ReplayCue {
                state: x.clone(),
                action,
                reward,
                next_state: next.clone(),
                terminal,
            });

            if memory.len() >= hyper.minibatch && global_step % hyper.train_every == 0 {
                let batch = memory.sample(&mut rng, hyper.minibatch);
                let loss = train_step(&mut net, &batch, hyper.gamma, hyper.learn_rate)?;
                diagnostics.losses.push(loss);
            }
            global_step += 1;
            if global_step % hyper.target_period == 0 {
                net.sync_target();
            }
            if terminal {
                improved = Some(action);
                break;
            }
            x = next;
        }

        diagnostics.episode_rewards.push(episode_reward);
        diagnostics.episodes += 1;
        match improved {
            Some(action) => {
                kappa = losses[action];
                best_action = action;
                diagnostics.kappa_trace.push(kappa);
                stale = 0;
            }
            None => {
                stale += 1;
                if stale >= hyper.patience {
                    converged = true;
                    break;
                }
            }
        }
    }
    diagnostics.steps = global_step;

    if !converged {
        return Err(Error::NoConvergence(format!(
            "episode cap {} reached with kappa = {kappa:.6}",
            hyper.episode_cap
        )));
    }

    let tie_set: Vec<usize> = losses
        .iter()
        .enumerate()
        .filter(|(_, &l)| l <= kappa + crate::emulation::TIE_TOL)
        .map(|(i, _)| actions[i].0)
        .collect();
    let entry = actions[best_action].1;
    Ok(DqnOutcome {
        winner: actions[best_action].0,
        tie_set,
        direction: entry.direction.clone(),
        pattern: entry.canonical_pattern().clone(),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{build_alphabet, enumerate_patterns};
    use approx::assert_abs_diff_eq;

    fn example_cfg() -> EmulationConfig {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0]);
        let b = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        EmulationConfig::new(h, b, 0.1, 1.0).unwrap()
    }

    #[test]
    fn replay_ring_bounds() {
        let mut mem = ReplayMemory::new(3);
        let cue = |r: f64| ReplayCue {
            state: DVector::zeros(2),
            action: 0,
            reward: r,
            next_state: DVector::zeros(2),
            terminal: false,
        };
        for i in 0..5 {
            mem.push(cue(i as f64));
        }
        assert_eq!(mem.len(), 3);
        // oldest overwritten: rewards {2,3,4} remain
        let rewards: Vec<f64> = mem.cues.iter().map(|c| c.reward).collect();
        assert!(rewards.contains(&2.0) && rewards.contains(&4.0) && !rewards.contains(&1.0));
    }

    #[test]
    fn replay_sampling_uniform() {
        // chi-square over 10^5 draws from 8 cells
        let mut mem = ReplayMemory::new(8);
        for i in 0..8 {
            mem.push(ReplayCue {
                state: DVector::zeros(1),
                action: i,
                reward: 0.0,
                next_state: DVector::zeros(1),
                terminal: false,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = [0usize; 8];
        for cue in mem.sample(&mut rng, 100_000) {
            counts[cue.action] += 1;
        }
        let expect = 100_000.0 / 8.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        // 7 dof, p = 0.01 critical value 18.48
        assert!(chi2 < 18.48, "chi2 = {chi2}");
    }

    #[test]
    fn zero_net_zero_output() {
        let net = QApproximator::zeroed(2, 5);
        let q = net.forward(&DVector::from_vec(vec![0.3, -0.7]), false).unwrap();
        assert!(q.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn target_sync_matches_online() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = QApproximator::new(2, 4, &mut rng);
        // drift online weights away from target
        let x = DVector::from_vec(vec![0.5, 0.5]);
        net.train_on(&[(&x, 1, 3.0)], 0.01).unwrap();
        assert!(!net.target_equals_online());
        net.sync_target();
        assert!(net.target_equals_online());
        for probe in 0..5 {
            let p = DVector::from_vec(vec![probe as f64 * 0.2 - 0.4, 0.1]);
            assert_eq!(net.forward(&p, false).unwrap(), net.forward(&p, true).unwrap());
        }
    }

    #[test]
    fn gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = QApproximator::new(2, 4, &mut rng);
        let x = DVector::from_vec(vec![0.4, -0.9]);
        let action = 2;
        let y = 0.7;

        // analytic gradient from a full-batch step with lr = 1
        let before = net.clone();
        net.train_on(&[(&x, action, y)], 1.0).unwrap();
        let step = 1e-5;
        let mut checked = 0;
        let total = net.param_count();
        for idx in (0..total).step_by(total / 10) {
            let analytic = before.param(idx) - net.param(idx); // lr * grad
            let mut plus = before.clone();
            *plus.param_mut(idx) += step;
            let mut minus = before.clone();
            *minus.param_mut(idx) -= step;
            let f = |m: &QApproximator| {
                let out = m.forward(&x, false).unwrap();
                (out[action] - y).powi(2)
            };
            let numeric = (f(&plus) - f(&minus)) / (2.0 * step);
            let denom = numeric.abs().max(analytic.abs()).max(1e-8);
            assert!(
                (analytic - numeric).abs() / denom < 1e-4,
                "param {idx}: analytic {analytic} vs numeric {numeric}"
            );
            checked += 1;
        }
        assert!(checked >= 10);
    }

    #[test]
    fn regression_to_reward_when_gamma_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = QApproximator::new(2, 3, &mut rng);
        let cue = ReplayCue {
            state: DVector::from_vec(vec![0.6, -0.8]),
            action: 1,
            reward: -0.25,
            next_state: DVector::from_vec(vec![0.0, 1.0]),
            terminal: false,
        };
        let batch = vec![&cue];
        for _ in 0..4000 {
            train_step(&mut net, &batch, 0.0, 1e-2).unwrap();
        }
        let q = net.forward(&cue.state, false).unwrap();
        assert_abs_diff_eq!(q[1], -0.25, epsilon = 1e-3);
    }

    #[test]
    fn terminal_cue_ignores_target_net() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = QApproximator::new(2, 3, &mut rng);
        let cue = ReplayCue {
            state: DVector::from_vec(vec![1.0, 0.0]),
            action: 0,
            reward: 1.5,
            next_state: DVector::from_vec(vec![0.0, 1.0]),
            terminal: true,
        };
        let y = bellman_targets(&net, &[&cue], 0.99).unwrap();
        assert_eq!(y, vec![1.5]);
    }

    #[test]
    fn frozen_batch_loss_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = QApproximator::new(2, 4, &mut rng);
        let cues: Vec<ReplayCue> = (0..8)
            .map(|i| ReplayCue {
                state: DVector::from_vec(vec![(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()]),
                action: i % 4,
                reward: (i as f64 * 0.11).sin(),
                next_state: DVector::from_vec(vec![0.0, 1.0]),
                terminal: true,
            })
            .collect();
        let batch: Vec<&ReplayCue> = cues.iter().collect();
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            let loss = train_step(&mut net, &batch, 0.9, 1e-3).unwrap();
            assert!(loss <= last + 1e-12);
            last = loss;
        }
    }

    #[test]
    fn transition_cases() {
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let zero = DVector::from_vec(vec![0.0, 0.0]);
        assert_eq!(state_transition(&x, &zero, 0.1), x);

        let d = DVector::from_vec(vec![0.0, -1.0]);
        let next = state_transition(&x, &d, 0.1);
        assert_abs_diff_eq!(next[0], 0.995, epsilon = 1e-3);
        assert_abs_diff_eq!(next[1], -0.0995, epsilon = 1e-3);

        // antipodal cancellation: x + h·d = 0
        let opp = DVector::from_vec(vec![-10.0, 0.0]);
        assert_eq!(state_transition(&x, &opp, 0.1), x);

        // continuity as h → 0
        let tiny = state_transition(&x, &d, 1e-9);
        assert!((tiny - &x).norm() < 1e-8);
    }

    #[test]
    fn dqn_learns_fig2_point() {
        let cfg = example_cfg();
        let alphabet = build_alphabet(&cfg.b, enumerate_patterns(4, false).unwrap()).unwrap();
        let x0 = DVector::from_vec(vec![0.0, 1.0]);
        let out = dqn_select(&cfg, &x0, &alphabet, &DqnHyper::default()).unwrap();
        assert_abs_diff_eq!(out.direction[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.direction[1], -2.0, epsilon = 1e-12);
        assert!(!out.diagnostics.kappa_trace.is_empty());
    }

    #[test]
    fn dqn_single_action() {
        let cfg = example_cfg();
        let alphabet = build_alphabet(&cfg.b, enumerate_patterns(4, false).unwrap()).unwrap();
        let only = vec![alphabet
            .iter()
            .find(|e| (e.direction[0] - 1.0).abs() < 1e-9 && (e.direction[1] + 2.0).abs() < 1e-9)
            .unwrap()
            .clone()];
        let x0 = DVector::from_vec(vec![0.0, 1.0]);
        let hyper = DqnHyper { patience: 2, ..Default::default() };
        let out = dqn_select(&cfg, &x0, &only, &hyper).unwrap();
        assert_eq!(out.winner, 0);
    }

    #[test]
    fn dqn_deterministic_given_seed() {
        let cfg = example_cfg();
        let alphabet = build_alphabet(&cfg.b, enumerate_patterns(4, false).unwrap()).unwrap();
        let x0 = DVector::from_vec(vec![0.6, -0.8]);
        let hyper = DqnHyper { seed: 77, ..Default::default() };
        let a = dqn_select(&cfg, &x0, &alphabet, &hyper).unwrap();
        let b = dqn_select(&cfg, &x0, &alphabet, &hyper).unwrap();
        assert_eq!(a.winner, b.winner);
        assert_eq!(a.diagnostics.steps, b.diagnostics.steps);
        assert_eq!(a.diagnostics.episode_rewards, b.diagnostics.episode_rewards);
        assert_eq!(a.diagnostics.losses, b.diagnostics.losses);
    }
}

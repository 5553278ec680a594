//! Ternary activation patterns and the quantization output alphabet: the
//! distinct vectors `Bu` with their preimage pattern sets and
//! multiplicities, channel removal, and the two entropies.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Hard cap on the pattern-space exponent (3^16 ≈ 43M).
const MAX_CHANNELS: usize = 16;

/// Direction keys are grouped on a 1e-9 grid, exact for integer-valued B.
const DIRECTION_KEY_SCALE: f64 = 1e9;

/// A vector in {−1,0,1}^m selecting how each input channel fires.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActivationPattern(pub Vec<i8>);

impl ActivationPattern {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().map(|&v| v as f64))
    }

    /// `B·u`.
    pub fn apply(&self, b: &DMatrix<f64>) -> DVector<f64> {
        b * self.as_vector()
    }

    pub fn negated(&self) -> ActivationPattern {
        ActivationPattern(self.0.iter().map(|v| -v).collect())
    }
}

/// Iterator over all patterns in odometer order (first channel most
/// significant), ternary by default or restricted to {0,1}.
pub struct PatternIter {
    m: usize,
    binary_only: bool,
    state: Option<Vec<i8>>,
}

impl Iterator for PatternIter {
    type Item = ActivationPattern;

    fn next(&mut self) -> Option<Self::Item> {
        let state = self.state.as_mut()?;
        let out = ActivationPattern(state.clone());
        let lo: i8 = if self.binary_only { 0 } else { -1 };
        let mut pos = self.m;
        loop {
            if pos == 0 {
                self.state = None;
                break;
            }
            pos -= 1;
            if state[pos] < 1 {
                state[pos] += 1;
                for v in state[pos + 1..].iter_mut() {
                    *v = lo;
                }
                break;
            }
        }
        Some(out)
    }
}

/// All 3^m (or 2^m when `binary_only`) activation patterns.
pub fn enumerate_patterns(m: usize, binary_only: bool) -> Result<PatternIter> {
    if m == 0 || m > MAX_CHANNELS {
        return Err(Error::InvalidInput(format!(
            "channel count {m} outside 1..={MAX_CHANNELS}"
        )));
    }
    let lo: i8 = if binary_only { 0 } else { -1 };
    Ok(PatternIter { m, binary_only, state: Some(vec![lo; m]) })
}

/// The subset of patterns usable when channel `c` (1-based) is unavailable:
/// those with `u_c = 0`.
pub fn drop_channel(
    patterns: impl Iterator<Item = ActivationPattern>,
    c: usize,
    m: usize,
) -> Result<Vec<ActivationPattern>> {
    if c == 0 || c > m {
        return Err(Error::InvalidInput(format!("channel {c} outside 1..={m}")));
    }
    Ok(patterns.filter(|p| p.0[c - 1] == 0).collect())
}

/// One distinct output direction `d = Bu` with its preimage patterns.
#[derive(Debug, Clone)]
pub struct AlphabetEntry {
    pub direction: DVector<f64>,
    pub preimages: Vec<ActivationPattern>,
    pub is_zero: bool,
}

impl AlphabetEntry {
    pub fn multiplicity(&self) -> usize {
        self.preimages.len()
    }

    /// Lexicographically smallest preimage; the consistent selection.
    pub fn canonical_pattern(&self) -> &ActivationPattern {
        self.preimages.iter().min().unwrap()
    }
}

/// Deduplication key: the direction on a fixed 1e-9 grid. Also the label
/// used when direction fields are compared across channel-dropout runs.
pub fn direction_key(d: &DVector<f64>) -> Vec<i64> {
    d.iter().map(|&v| (v * DIRECTION_KEY_SCALE).round() as i64).collect()
}

/// Groups patterns by their output vector `Bu`. Entries come back sorted by
/// direction key so construction is deterministic; preimages keep
/// enumeration order. `Σα` over entries equals the number of patterns.
pub fn build_alphabet(
    b: &DMatrix<f64>,
    patterns: impl Iterator<Item = ActivationPattern>,
) -> Result<Vec<AlphabetEntry>> {
    let mut by_key: std::collections::BTreeMap<Vec<i64>, AlphabetEntry> =
        std::collections::BTreeMap::new();
    for u in patterns {
        if u.len() != b.ncols() {
            return Err(Error::Dimension(format!(
                "pattern length {} vs {} channels",
                u.len(),
                b.ncols()
            )));
        }
        let d = u.apply(b);
        let key = direction_key(&d);
        by_key
            .entry(key)
            .or_insert_with(|| AlphabetEntry {
                is_zero: d.iter().all(|&v| v.abs() < 1.0 / DIRECTION_KEY_SCALE),
                direction: d,
                preimages: Vec::new(),
            })
            .preimages
            .push(u);
    }
    Ok(by_key.into_values().collect())
}

/// Count of distinct vectors `Bu` for `B = (e₁..e_n, −e₁..−e_n)`; equals 5^n.
pub fn distinct_direction_count(n: usize) -> Result<usize> {
    if n == 0 || n > 8 {
        return Err(Error::CombinatorialLimit(format!(
            "n = {n} outside 1..=8 (3^{} patterns)",
            2 * n
        )));
    }
    let b = plus_minus_basis(n);
    let alphabet = build_alphabet(&b, enumerate_patterns(2 * n, false)?)?;
    Ok(alphabet.len())
}

/// The n×2n matrix whose columns are the standard basis vectors and their
/// negatives.
pub fn plus_minus_basis(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, 2 * n, |i, j| {
        if j < n {
            if i == j { 1.0 } else { 0.0 }
        } else if i == j - n {
            -1.0
        } else {
            0.0
        }
    })
}

/// Mean multiplicity 3^{2n}/5^n of the plus/minus-basis alphabet,
/// cross-checked against the enumerated mean.
pub fn average_multiplicity(n: usize) -> Result<f64> {
    let formula = 9f64.powi(n as i32) / 5f64.powi(n as i32);
    let b = plus_minus_basis(n);
    let alphabet = build_alphabet(&b, enumerate_patterns(2 * n, false)?)?;
    let total: usize = alphabet.iter().map(|e| e.multiplicity()).sum();
    let mean = total as f64 / alphabet.len() as f64;
    if (mean - formula).abs() > 1e-9 * formula {
        return Err(Error::Tolerance(format!(
            "enumerated mean multiplicity {mean} vs formula {formula}"
        )));
    }
    Ok(formula)
}

fn validate_probs(p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidInput("negative probability".into()));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("probabilities sum to {sum}")));
    }
    Ok(())
}

/// Shannon entropy `−Σ p_i log₂ p_i` of the output-alphabet distribution.
pub fn alphabet_entropy(p: &[f64]) -> Result<f64> {
    validate_probs(p)?;
    Ok(-p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.log2()).sum::<f64>())
}

/// Activation-pattern entropy `−Σ p_i log₂(p_i/α_i)`, cross-computed as
/// `−Σ α_i q_i log₂ q_i` with `q_i = p_i/α_i`; the two routes must agree
/// to 1e-12.
pub fn activation_entropy(p: &[f64], alpha: &[usize]) -> Result<f64> {
    validate_probs(p)?;
    if p.len() != alpha.len() {
        return Err(Error::Dimension("p and alpha length mismatch".into()));
    }
    if alpha.iter().any(|&a| a == 0) {
        return Err(Error::InvalidInput("multiplicities must be >= 1".into()));
    }
    let direct: f64 = -p
        .iter()
        .zip(alpha)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &ai)| pi * (pi / ai as f64).log2())
        .sum::<f64>();
    let split: f64 = -p
        .iter()
        .zip(alpha)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &ai)| {
            let qi = pi / ai as f64;
            ai as f64 * qi * qi.log2()
        })
        .sum::<f64>();
    if (direct - split).abs() > 1e-12 {
        return Err(Error::Tolerance(format!(
            "entropy formulas disagree: {direct} vs {split}"
        )));
    }
    Ok(direct)
}

/// Summary statistics of a learned alphabet distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphabetStats {
    pub probabilities: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub h_alphabet: f64,
    pub h_activation: f64,
}

impl AlphabetStats {
    pub fn new(probabilities: Vec<f64>, multiplicities: Vec<usize>) -> Result<Self> {
        let h_alphabet = alphabet_entropy(&probabilities)?;
        let h_activation = activation_entropy(&probabilities, &multiplicities)?;
        if h_activation < h_alphabet - 1e-12 {
            return Err(Error::Tolerance(
                "activation entropy below alphabet entropy".into(),
            ));
        }
        Ok(AlphabetStats { probabilities, multiplicities, h_alphabet, h_activation })
    }
}

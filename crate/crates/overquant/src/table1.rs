//! Embedded golden values for the published two-dimensional emulation
//! example: cell boundaries, selected directions, activation-pattern
//! multiplicities, cell measures, and the two entropies. Stored once and
//! shared by the reproduction command and the acceptance tests.

use std::f64::consts::PI;

/// One golden cell: `[theta_lo, theta_hi)` selects `direction`.
#[derive(Debug, Clone, Copy)]
pub struct GoldenCell {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub direction: [f64; 2],
    pub alpha: usize,
    /// Cell measure as published (rounded to at most three decimals).
    pub p: f64,
}

/// The ten published cells, starting from the cell that contains θ = 0.
pub fn golden_cells() -> [GoldenCell; 10] {
    [
        GoldenCell { theta_lo: -0.321755, theta_hi: 0.27167, direction: [0.0, -1.0], alpha: 6, p: 0.094 },
        GoldenCell { theta_lo: 0.27167, theta_hi: PI / 6.0, direction: [0.0, -2.0], alpha: 3, p: 0.04 },
        GoldenCell { theta_lo: PI / 6.0, theta_hi: 1.94263, direction: [1.0, -2.0], alpha: 2, p: 0.226 },
        GoldenCell { theta_lo: 1.94263, theta_hi: 2.45243, direction: [1.0, -1.0], alpha: 4, p: 0.08 },
        GoldenCell { theta_lo: 2.45243, theta_hi: 2.81984, direction: [1.0, 0.0], alpha: 6, p: 0.06 },
        GoldenCell { theta_lo: 2.81984, theta_hi: 3.41326, direction: [0.0, 1.0], alpha: 6, p: 0.094 },
        GoldenCell { theta_lo: 3.41326, theta_hi: 7.0 * PI / 6.0, direction: [0.0, 2.0], alpha: 3, p: 0.04 },
        GoldenCell { theta_lo: 7.0 * PI / 6.0, theta_hi: 5.08422, direction: [-1.0, 2.0], alpha: 2, p: 0.226 },
        GoldenCell { theta_lo: 5.08422, theta_hi: 5.59402, direction: [-1.0, 1.0], alpha: 4, p: 0.08 },
        GoldenCell { theta_lo: 5.59402, theta_hi: 5.96143, direction: [-1.0, 0.0], alpha: 6, p: 0.06 },
    ]
}

/// Published quantization-output-alphabet entropy, bits.
pub const H_ALPHABET: f64 = 3.052;
/// Published activation-pattern entropy, bits.
pub const H_ACTIVATION: f64 = 4.746;

/// Published pattern census: used / never used / mapped to zero.
pub const USED_PATTERNS: usize = 42;
pub const NEVER_USED_PATTERNS: usize = 30;
pub const ZERO_MAPPED_PATTERNS: usize = 9;

/// The example's target field.
pub fn example_target() -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0])
}

/// The example's 2×4 modulation matrix (basis vectors and their negatives).
pub fn example_b() -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(2, 4, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0])
}

/// The non-redundant alternative modulation matrix from the same example.
pub fn alternate_b() -> nalgebra::DMatrix<f64> {
    let s = 1.0 / 2f64.sqrt();
    nalgebra::DMatrix::from_row_slice(2, 4, &[1.0, 0.0, s, s, 0.0, 1.0, s, -s])
}

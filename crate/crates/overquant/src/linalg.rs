//! Dense linear algebra for the lifted operators associated with an
//! overcomplete system: nullspace dimensions of `X ↦ B·X` and `X ↦ X·C`,
//! particular and channel-invariant solutions of the corresponding matrix
//! equations, 0/1 dropout projections, and superset-lattice enumeration.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Relative residual bound asserted after every lifted solve.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Supersets beyond 2^20 are refused; callers must sample instead.
const LATTICE_CAP_BITS: usize = 20;

/// JSON wire form of a dense matrix: `{"rows":n,"cols":m,"data":[row-major]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixJson {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.rows * self.cols != self.data.len() {
            return Err(Error::Dimension(format!(
                "{}x{} matrix needs {} entries, got {}",
                self.rows,
                self.cols,
                self.rows * self.cols,
                self.data.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        MatrixJson { rows: m.nrows(), cols: m.ncols(), data }
    }
}

/// A subset of channel indices of `[universe]`, 1-based as in the `[q]`
/// convention. Members are kept strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "IndexSetRepr", into = "IndexSetRepr")]
pub struct IndexSet {
    universe: usize,
    members: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct IndexSetRepr {
    universe: usize,
    members: Vec<usize>,
}

impl TryFrom<IndexSetRepr> for IndexSet {
    type Error = Error;
    fn try_from(r: IndexSetRepr) -> Result<Self> {
        IndexSet::new(r.universe, r.members)
    }
}

impl From<IndexSet> for IndexSetRepr {
    fn from(s: IndexSet) -> Self {
        IndexSetRepr { universe: s.universe, members: s.members }
    }
}

impl IndexSet {
    pub fn new(universe: usize, mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if let Some(&bad) = members.iter().find(|&&i| i == 0 || i > universe) {
            return Err(Error::InvalidInput(format!(
                "index {bad} outside 1..={universe}"
            )));
        }
        Ok(IndexSet { universe, members })
    }

    pub fn full(universe: usize) -> Self {
        IndexSet { universe, members: (1..=universe).collect() }
    }

    pub fn empty(universe: usize) -> Self {
        IndexSet { universe, members: Vec::new() }
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    pub fn is_superset_of(&self, other: &IndexSet) -> bool {
        self.universe == other.universe && other.members.iter().all(|&i| self.contains(i))
    }

    pub fn complement(&self) -> IndexSet {
        let members = (1..=self.universe).filter(|&i| !self.contains(i)).collect();
        IndexSet { universe: self.universe, members }
    }

    /// Diagonal 0/1 projection `P_I` (idempotent, symmetric).
    pub fn projection_matrix(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.universe, self.universe);
        for &i in &self.members {
            p[(i - 1, i - 1)] = 1.0;
        }
        p
    }

    /// The lattice `Λ_I` of all supersets `L ⊇ I` within the universe,
    /// enumerated in size-then-lex order. Refused above 2^20 members.
    pub fn lattice_supersets(&self) -> Result<Vec<IndexSet>> {
        let free = self.complement().members;
        if free.len() > LATTICE_CAP_BITS {
            return Err(Error::CombinatorialLimit(format!(
                "2^{} supersets; sample instead",
                free.len()
            )));
        }
        let mut out = Vec::with_capacity(1usize << free.len());
        for k in 0..=free.len() {
            for extra in free.iter().combinations(k) {
                let mut members = self.members.clone();
                members.extend(extra.into_iter().copied());
                members.sort_unstable();
                out.push(IndexSet { universe: self.universe, members });
            }
        }
        Ok(out)
    }

    /// A uniformly random superset of `self`, for sampled lattice checks.
    pub fn random_superset<R: rand::Rng>(&self, rng: &mut R) -> IndexSet {
        let mut members = self.members.clone();
        for i in self.complement().members {
            if rng.gen_bool(0.5) {
                members.push(i);
            }
        }
        members.sort_unstable();
        IndexSet { universe: self.universe, members }
    }
}

/// All k-element subsets of `[universe]` in lex order, as in `([q] choose k)`.
pub fn k_subsets(universe: usize, k: usize) -> Vec<IndexSet> {
    (1..=universe)
        .combinations(k)
        .map(|members| IndexSet { universe, members })
        .collect()
}

/// Which side of the state matrix the lifted solution multiplies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// Solution of `B·X = A` (X is m×n; support indexes rows).
    Left,
    /// Solution of `X·C = A` (X is n×q; support indexes columns).
    Right,
}

/// A solution of one of the lifted matrix equations, with its support set
/// and the reconstruction residual checked at build time.
#[derive(Debug, Clone)]
pub struct LiftedSolution {
    pub hat_a: DMatrix<f64>,
    pub side: Side,
    pub support: IndexSet,
    pub residual: f64,
}

/// Numerical rank via SVD at [`RANK_TOL`] relative tolerance.
pub fn rank_of(m: &DMatrix<f64>) -> usize {
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > RANK_TOL * max).count()
}

fn require_full_rank(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let n = m.nrows().min(m.ncols());
    if rank_of(m) < n {
        return Err(Error::NotFullRank(what.into()));
    }
    Ok(())
}

/// Nullspace dimension of the lifted operator, computed by assembling the
/// operator as an explicit matrix (via Kronecker products acting on vec(X))
/// and rank-counting, so the closed-form count n(m−n) / (q−n)n is testable
/// against it.
pub fn nullspace_dimension(m: &DMatrix<f64>, side: Side) -> Result<usize> {
    require_full_rank(m, "lifted operator base matrix")?;
    let n = match side {
        Side::Left => m.nrows(),  // B is n×m
        Side::Right => m.ncols(), // C is q×n
    };
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(B·X) = (I ⊗ B) vec(X); vec(X·C) = (Cᵀ ⊗ I) vec(X).
    let lifted = match side {
        Side::Left => eye.kronecker(m),
        Side::Right => m.transpose().kronecker(&eye),
    };
    Ok(lifted.ncols() - rank_of(&lifted))
}

fn check_residual(recon: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<f64> {
    let residual = (recon - a).norm();
    if residual > RESIDUAL_TOL * a.norm().max(1.0) {
        return Err(Error::Tolerance(format!(
            "lifted-solution residual {residual:.3e}"
        )));
    }
    Ok(residual)
}

/// Particular solution `Â = A(CᵀC)⁻¹Cᵀ` of `X·C = A`.
pub fn solve_right(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<LiftedSolution> {
    solve_right_invariant(a, c, &IndexSet::full(c.nrows()))
}

/// Particular solution `Â = Bᵀ(BBᵀ)⁻¹A` of `B·X = A`.
pub fn solve_left(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<LiftedSolution> {
    solve_left_invariant(a, b, &IndexSet::full(b.ncols()))
}

/// Solution of `X·C = A` whose columns outside `I` are exactly zero, so
/// that `Â·P_I = Â`. On columns `I` it is `A(C_IᵀC_I)⁻¹C_Iᵀ` where `C_I`
/// is the row-submatrix of `C` selected by `I`.
pub fn solve_right_invariant(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    support: &IndexSet,
) -> Result<LiftedSolution> {
    let (q, n) = (c.nrows(), c.ncols());
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::Dimension(format!(
            "A must be {n}x{n} for a {q}x{n} C"
        )));
    }
    if support.universe() != q {
        return Err(Error::Dimension("support universe must be q".into()));
    }
    if support.len() < n {
        return Err(Error::InvarianceInfeasible(format!(
            "|I| = {} < n = {n}",
            support.len()
        )));
    }
    let c_sub = DMatrix::from_fn(support.len(), n, |i, j| c[(support.members()[i] - 1, j)]);
    if rank_of(&c_sub) < n {
        return Err(Error::InvarianceInfeasible("C_I rank-deficient".into()));
    }
    let gram = c_sub.transpose() * &c_sub;
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Singular("CᵀC".into()))?;
    let on_support = a * inv * c_sub.transpose();
    let mut hat_a = DMatrix::zeros(n, q);
    for (k, &col) in support.members().iter().enumerate() {
        for i in 0..n {
            hat_a[(i, col - 1)] = on_support[(i, k)];
        }
    }
    let residual = check_residual(&(&hat_a * c), a)?;
    Ok(LiftedSolution { hat_a, side: Side::Right, support: support.clone(), residual })
}

/// Solution of `B·X = A` whose rows outside `I` are exactly zero, so that
/// `P_I·Â = Â`. On rows `I` it is `B_Iᵀ(B_I B_Iᵀ)⁻¹A` for the column-
/// submatrix `B_I`.
pub fn solve_left_invariant(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    support: &IndexSet,
) -> Result<LiftedSolution> {
    let (n, m) = (b.nrows(), b.ncols());
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::Dimension(format!(
            "A must be {n}x{n} for an {n}x{m} B"
        )));
    }
    if support.universe() != m {
        return Err(Error::Dimension("support universe must be m".into()));
    }
    if support.len() < n {
        return Err(Error::InvarianceInfeasible(format!(
            "|I| = {} < n = {n}",
            support.len()
        )));
    }
    let b_sub = DMatrix::from_fn(n, support.len(), |i, j| b[(i, support.members()[j] - 1)]);
    if rank_of(&b_sub) < n {
        return Err(Error::InvarianceInfeasible("B_I rank-deficient".into()));
    }
    let gram = &b_sub * b_sub.transpose();
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Singular("BBᵀ".into()))?;
    let on_support = b_sub.transpose() * inv * a;
    let mut hat_a = DMatrix::zeros(m, n);
    for (k, &row) in support.members().iter().enumerate() {
        for j in 0..n {
            hat_a[(row - 1, j)] = on_support[(k, j)];
        }
    }
    let residual = check_residual(&(b * &hat_a), a)?;
    Ok(LiftedSolution { hat_a, side: Side::Left, support: support.clone(), residual })
}

/// Outcome of the maximal-minor check.
#[derive(Debug, Clone)]
pub struct MinorCheck {
    pub all_nonzero: bool,
    pub worst_abs_det: f64,
    pub worst_selection: IndexSet,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Checks that every maximal n×n minor (n rows of a tall matrix, or n
/// columns of a wide one) has |det| > tol. This is the condition under
/// which `CᵀP_LC` (resp. `BP_LBᵀ`) stays positive definite for every
/// selection of at least n channels.
pub fn all_n_minors_nonzero(m: &DMatrix<f64>, tol: f64) -> Result<MinorCheck> {
    let tall = m.nrows() >= m.ncols();
    let n = if tall { m.ncols() } else { m.nrows() };
    let long = if tall { m.nrows() } else { m.ncols() };
    if binomial(long, n) > 1_000_000 {
        return Err(Error::CombinatorialLimit(format!(
            "({long} choose {n}) minors"
        )));
    }
    let mut worst = f64::INFINITY;
    let mut worst_sel = IndexSet::full(long);
    for sel in (1..=long).combinations(n) {
        let sub = if tall {
            DMatrix::from_fn(n, n, |i, j| m[(sel[i] - 1, j)])
        } else {
            DMatrix::from_fn(n, n, |i, j| m[(i, sel[j] - 1)])
        };
        let det = sub.determinant().abs();
        if det < worst {
            worst = det;
            worst_sel = IndexSet { universe: long, members: sel.clone() };
        }
    }
    Ok(MinorCheck { all_nonzero: worst > tol, worst_abs_det: worst, worst_selection: worst_sel })
}

/// Maximum real part over the eigenvalues of a square matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension("spectral abscissa needs a square matrix".into()));
    }
    if m.nrows() == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let eigs = complex_eigs(m)?;
    Ok(eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

fn complex_eigs(m: &DMatrix<f64>) -> Result<Vec<nalgebra::Complex<f64>>> {
    // triangular matrices carry their eigenvalues on the diagonal, and
    // nalgebra's QR iteration can fail to converge on them (e.g. the zero
    // matrix), so read them off directly
    let lower_mass: f64 = (0..m.ncols())
        .flat_map(|j| (j + 1..m.nrows()).map(move |i| (i, j)))
        .map(|(i, j)| m[(i, j)].abs())
        .sum();
    if lower_mass == 0.0 {
        return Ok(m.diagonal().iter().map(|&d| nalgebra::Complex::new(d, 0.0)).collect());
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or(Error::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().cloned().collect())
}

/// Sorted complex eigenvalues (by real part then imaginary part).
pub fn eigenvalues_sorted(m: &DMatrix<f64>) -> Result<Vec<nalgebra::Complex<f64>>> {
    let mut eigs = complex_eigs(m)?;
    eigs.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    Ok(eigs)
}

/// Euclidean norm of a state vector.
pub fn vec_norm(v: &DVector<f64>) -> f64 {
    v.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn simple_b() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 4, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0])
    }

    fn fig2_h() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0])
    }

    #[test]
    fn projection_matrix_cases() {
        let i = IndexSet::new(3, vec![1, 2]).unwrap();
        let p = i.projection_matrix();
        assert_eq!(p, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0])));
        assert_eq!(IndexSet::full(3).projection_matrix(), DMatrix::identity(3, 3));
        assert_eq!(IndexSet::empty(3).projection_matrix(), DMatrix::zeros(3, 3));
        // idempotent and symmetric
        assert_eq!(&p * &p, p.clone());
        assert_eq!(p.transpose(), p);
    }

    #[test]
    fn lattice_enumeration() {
        let i = IndexSet::new(3, vec![1, 2]).unwrap();
        let lat = i.lattice_supersets().unwrap();
        assert_eq!(lat.len(), 2);
        assert_eq!(lat[0].members(), &[1, 2]);
        assert_eq!(lat[1].members(), &[1, 2, 3]);

        let all = IndexSet::empty(2).lattice_supersets().unwrap();
        assert_eq!(all.len(), 4);

        let choose = k_subsets(3, 2);
        let got: Vec<_> = choose.iter().map(|s| s.members().to_vec()).collect();
        assert_eq!(got, vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
    }

    #[test]
    fn lattice_cardinality() {
        let i = IndexSet::new(10, vec![2, 5]).unwrap();
        assert_eq!(i.lattice_supersets().unwrap().len(), 1 << 8);
    }

    #[test]
    fn lattice_refuses_blowup() {
        let i = IndexSet::empty(25);
        assert!(matches!(i.lattice_supersets(), Err(Error::CombinatorialLimit(_))));
    }

    #[test]
    fn nullspace_dims_named_cases() {
        assert_eq!(nullspace_dimension(&simple_b(), Side::Left).unwrap(), 4);
        let sq = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        assert_eq!(nullspace_dimension(&sq, Side::Left).unwrap(), 0);
    }

    #[test]
    fn nullspace_dims_random_lemma() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut done = 0;
        while done < 50 {
            let n = rng.gen_range(1..=3usize);
            let extra = rng.gen_range(1..=3usize);
            let b = DMatrix::from_fn(n, n + extra, |_, _| rng.gen_range(-1.0..1.0));
            let c = DMatrix::from_fn(n + extra, n, |_, _| rng.gen_range(-1.0..1.0));
            if rank_of(&b) < n || rank_of(&c) < n {
                continue;
            }
            let m = n + extra;
            assert_eq!(nullspace_dimension(&b, Side::Left).unwrap(), n * (m - n));
            assert_eq!(nullspace_dimension(&c, Side::Right).unwrap(), (m - n) * n);
            done += 1;
        }
    }

    #[test]
    fn nullspace_rejects_rank_deficient() {
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(nullspace_dimension(&b, Side::Left), Err(Error::NotFullRank(_))));
    }

    #[test]
    fn solve_right_stacked_identities() {
        let c = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        let a = fig2_h();
        let sol = solve_right(&a, &c).unwrap();
        // (CᵀC)⁻¹ = I/2 so Â = [A/2, A/2]
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(sol.hat_a[(i, j)], a[(i, j)] / 2.0, epsilon = 1e-12);
                assert_abs_diff_eq!(sol.hat_a[(i, j + 2)], a[(i, j)] / 2.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn solve_right_square_is_inverse() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let a = fig2_h();
        let sol = solve_right(&a, &c).unwrap();
        let expect = &a * c.try_inverse().unwrap();
        assert!((sol.hat_a - expect).norm() < 1e-12);
    }

    #[test]
    fn solve_right_random_residual() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let c = DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0));
        let sol = solve_right(&fig2_h(), &c).unwrap();
        assert!(sol.residual <= 1e-9);
    }

    #[test]
    fn solve_left_cases() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let a = fig2_h();
        let sol = solve_left(&a, &b).unwrap();
        let expect = b.clone().try_inverse().unwrap() * &a;
        assert!((sol.hat_a - expect).norm() < 1e-12);

        let zero = DMatrix::zeros(2, 2);
        let sol = solve_left(&zero, &simple_b()).unwrap();
        assert_eq!(sol.hat_a, DMatrix::zeros(4, 2));

        let sol = solve_left(&a, &simple_b()).unwrap();
        assert!(sol.residual <= 1e-9);
    }

    #[test]
    fn solution_families_differ_by_nullspace() {
        // Two right solutions with different supports differ by N with N·C = 0.
        let c = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, -1.0]);
        let a = fig2_h();
        let s1 = solve_right(&a, &c).unwrap();
        let s2 = solve_right_invariant(&a, &c, &IndexSet::new(4, vec![1, 2, 3]).unwrap()).unwrap();
        let n = s1.hat_a - s2.hat_a;
        assert!((n * &c).norm() < 1e-9);
    }

    #[test]
    fn invariant_solutions() {
        let c = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, -1.0]);
        let a = fig2_h();
        let i = IndexSet::new(4, vec![1, 2]).unwrap();
        let sol = solve_right_invariant(&a, &c, &i).unwrap();
        // columns {3,4} exactly zero, Â restricted to I equals A·C_I⁻¹ (C_I = I here)
        for row in 0..2 {
            assert_eq!(sol.hat_a[(row, 2)], 0.0);
            assert_eq!(sol.hat_a[(row, 3)], 0.0);
            assert_abs_diff_eq!(sol.hat_a[(row, 0)], a[(row, 0)], epsilon = 1e-12);
            assert_abs_diff_eq!(sol.hat_a[(row, 1)], a[(row, 1)], epsilon = 1e-12);
        }
        // Â·P_I = Â
        let p = i.projection_matrix();
        assert_eq!(&sol.hat_a * p, sol.hat_a);

        let too_small = IndexSet::new(4, vec![1]).unwrap();
        assert!(matches!(
            solve_right_invariant(&a, &c, &too_small),
            Err(Error::InvarianceInfeasible(_))
        ));
    }

    #[test]
    fn invariant_left_solutions() {
        let b = DMatrix::from_row_slice(2, 4, &[1.0, 0.5, -1.0, 0.3, 0.2, 1.0, 0.4, -1.0]);
        let a = fig2_h();
        let i = IndexSet::new(4, vec![1, 2]).unwrap();
        let sol = solve_left_invariant(&a, &b, &i).unwrap();
        for col in 0..2 {
            assert_eq!(sol.hat_a[(2, col)], 0.0);
            assert_eq!(sol.hat_a[(3, col)], 0.0);
        }
        let p = i.projection_matrix();
        assert_eq!(p * &sol.hat_a, sol.hat_a);
        assert!((&b * &sol.hat_a - &a).norm() < 1e-9);

        let too_small = IndexSet::new(4, vec![2]).unwrap();
        assert!(matches!(
            solve_left_invariant(&a, &b, &too_small),
            Err(Error::InvarianceInfeasible(_))
        ));
    }

    #[test]
    fn minor_checks() {
        // columns {1,3} of simpleB give det [[1,-1],[0,0]] = 0
        let chk = all_n_minors_nonzero(&simple_b(), 1e-12).unwrap();
        assert!(!chk.all_nonzero);
        assert_eq!(chk.worst_abs_det, 0.0);

        let c = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, -1.0]);
        let chk = all_n_minors_nonzero(&c, 1e-12).unwrap();
        assert!(chk.all_nonzero);

        let with_zero_row = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 0.0, 3.0, 4.0]);
        assert!(!all_n_minors_nonzero(&with_zero_row, 1e-12).unwrap().all_nonzero);
    }

    #[test]
    fn spectral_abscissa_cases() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        assert_abs_diff_eq!(spectral_abscissa(&d).unwrap(), -1.0, epsilon = 1e-12);
        // λ² + 2λ + 1 = 0 → double eigenvalue at −1
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0]);
        assert_abs_diff_eq!(spectral_abscissa(&m).unwrap(), -1.0, epsilon = 1e-7);
        assert_eq!(spectral_abscissa(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn matrix_json_round_trip() {
        let m = simple_b();
        let j = MatrixJson::from_matrix(&m);
        let s = serde_json::to_string(&j).unwrap();
        let back: MatrixJson = serde_json::from_str(&s).unwrap();
        assert_eq!(back.to_matrix().unwrap(), m);
    }
}

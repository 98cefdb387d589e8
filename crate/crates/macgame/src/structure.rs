//! Degeneracy of the potential and audits of the sufficient uniqueness
//! conditions from the interference-channel literature.
//!
//! The potential is convex but in general not strictly so: tangent
//! directions `z` with `sum_a z_ka = 0` per user and
//! `sum_k g_ka z_ka = 0` per node leave it constant. The number of such
//! independent flat directions is the degeneracy index; for generic gains
//! it equals `max(0, KA - K - A)`, and it only exceeds that on
//! measure-zero channel draws (for instance collinear gain rows).
//!
//! The classical sufficient conditions for equilibrium uniqueness bound the
//! spectral radii of gain-ratio matrices. On this channel model they never
//! hold for `K >= 2` users: the ratio matrices satisfy
//! `S_kl * S_lk >= 1` off the diagonal, which forces
//! `trace(S^2) >= K(K-1)` and, through the trace lower bound on the
//! spectral radius, `rho(S) >= 1`. [`check_conditions`] evaluates all of
//! this numerically per instance, so the failure is observable rather than
//! assumed.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::game::Game;

/// Default relative cutoff on singular values when counting the rank of the
/// degeneracy constraint matrix. Generic draws sit many orders of magnitude
/// above it; exact collinearity sits at rounding level below it. Exposed as
/// a parameter so near-degenerate channels can be studied.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Guard band around the unit circle when turning spectral radii into
/// condition verdicts. Two-user ratio matrices have radius exactly 1 (their
/// off-diagonal entries are reciprocals), which an eigensolver returns as
/// 1 +/- a few ulp; a radius this close to 1 must not count as strictly
/// below it.
pub const UNIT_CIRCLE_TOL: f64 = 1e-9;

/// Verdicts and values for the uniqueness-condition audit of one game.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    /// Spectral radius of the max-ratio matrix.
    pub rho_smax: f64,
    /// Spectral radius of the per-node ratio matrix, one entry per node.
    pub rho_s_alpha: Vec<f64>,
    /// `rho(S_max) < 1`, with [`UNIT_CIRCLE_TOL`] guarding the boundary.
    pub cmax_holds: bool,
    /// `rho(S(a)) < 1` for every node, same guard.
    pub c1_holds: bool,
    /// `I + S(a)` positive-definite for every node, tested through the
    /// symmetrized quadratic form.
    pub c2_holds: bool,
    /// Trace-based lower bound on `rho(S_max)`.
    pub spectral_lower_bound: f64,
    pub degeneracy_index: usize,
    pub constraint_rank: usize,
}

/// Degeneracy index and the rank of the stacked constraint matrix behind it.
#[derive(Debug, Clone, Copy)]
pub struct DegeneracyReport {
    /// `K*A - constraint_rank`: independent tangent directions along which
    /// the potential is constant.
    pub index: usize,
    pub constraint_rank: usize,
}

/// Result of [`spectral_lower_bound`]. The bound needs rank at least 2;
/// below that `value` is 0 and `applicable` is false.
#[derive(Debug, Clone, Copy)]
pub struct SpectralBound {
    pub value: f64,
    pub rank: usize,
    pub applicable: bool,
}

/// `S^max_kl = max_a g_la / g_ka` off the diagonal, zero on it.
pub fn s_max_matrix(game: &Game) -> Array2<f64> {
    let k_users = game.num_users();
    let mut s = Array2::zeros((k_users, k_users));
    for k in 0..k_users {
        for l in 0..k_users {
            if k == l {
                continue;
            }
            s[[k, l]] = (0..game.num_nodes())
                .map(|a| game.gain(l, a) / game.gain(k, a))
                .fold(f64::MIN, f64::max);
        }
    }
    s
}

/// `S_kl(a) = g_la / g_ka` off the diagonal, zero on it.
pub fn s_alpha_matrix(game: &Game, node: usize) -> Result<Array2<f64>> {
    if node >= game.num_nodes() {
        return Err(Error::NodeIndex {
            index: node,
            num_nodes: game.num_nodes(),
        });
    }
    let k_users = game.num_users();
    let mut s = Array2::zeros((k_users, k_users));
    for k in 0..k_users {
        for l in 0..k_users {
            if k != l {
                s[[k, l]] = game.gain(l, node) / game.gain(k, node);
            }
        }
    }
    Ok(s)
}

/// The literature's rank-reduced variant of `S(a)`: rows and columns of
/// users for whom the node is excluded ("too bad" a channel) are zeroed.
/// `excluded[k] = true` removes user `k` from the matrix.
pub fn s_alpha_matrix_masked(game: &Game, node: usize, excluded: &[bool]) -> Result<Array2<f64>> {
    if excluded.len() != game.num_users() {
        return Err(Error::Shape(format!(
            "mask has length {} but the game has {} users",
            excluded.len(),
            game.num_users()
        )));
    }
    let mut s = s_alpha_matrix(game, node)?;
    for (k, &out) in excluded.iter().enumerate() {
        if out {
            s.row_mut(k).fill(0.0);
            s.column_mut(k).fill(0.0);
        }
    }
    Ok(s)
}

/// Spectral radius of a square non-negative matrix.
///
/// Power iteration with a random positive start vector (the matrices here
/// are entrywise non-negative, so the dominant eigenvalue is real and
/// non-negative); when the growth-rate estimate fails to settle, which
/// happens for instance on `2 x 2` zero-diagonal matrices whose extremal
/// eigenvalues are a `+/- rho` pair, falls back to a dense
/// eigendecomposition of the (small) matrix.
pub fn spectral_radius(matrix: &Array2<f64>, tol: f64) -> f64 {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "spectral radius needs a square matrix");
    debug_assert!(matrix.iter().all(|&x| x >= 0.0));
    if n == 0 {
        return 0.0;
    }
    if n == 1 {
        return matrix[[0, 0]].abs();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut estimate = f64::NAN;
    let mut stable = 0;
    for _ in 0..500 {
        let mut y = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                y[i] += matrix[[i, j]] * x[j];
            }
        }
        let norm_x = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm_y = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_y == 0.0 {
            // A non-negative matrix annihilating a positive vector is zero.
            return 0.0;
        }
        let next = norm_y / norm_x;
        if estimate.is_finite() && (next - estimate).abs() <= tol * next.max(1.0) {
            stable += 1;
            if stable >= 3 {
                return next;
            }
        } else {
            stable = 0;
        }
        estimate = next;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm_y;
        }
    }

    // Power iteration stalled; the matrices are small, so just decompose.
    dense_spectral_radius(matrix)
}

fn dense_spectral_radius(matrix: &Array2<f64>) -> f64 {
    let n = matrix.nrows();
    let m = DMatrix::from_row_iterator(n, n, matrix.iter().copied());
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Trace-based lower bound on the spectral radius:
/// `|tr M| / S + sqrt((tr(M^2) - tr(M)^2 / S) / (S (S - 1)))` with
/// `S = rank(M)`. For the zero-trace ratio matrices of this crate the bound
/// evaluates to at least 1, which is what rules the sufficient conditions
/// out. Requires rank at least 2.
pub fn spectral_lower_bound(matrix: &Array2<f64>) -> SpectralBound {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "spectral bound needs a square matrix");
    let m = DMatrix::from_row_iterator(n, n, matrix.iter().copied());
    let rank = numerical_rank(&m, DEFAULT_RANK_TOL);
    if rank < 2 {
        return SpectralBound {
            value: 0.0,
            rank,
            applicable: false,
        };
    }
    let s = rank as f64;
    let trace: f64 = (0..n).map(|i| matrix[[i, i]]).sum();
    let trace_sq: f64 = (0..n)
        .map(|i| (0..n).map(|j| matrix[[i, j]] * matrix[[j, i]]).sum::<f64>())
        .sum();
    let radicand = ((trace_sq - trace * trace / s) / (s * (s - 1.0))).max(0.0);
    SpectralBound {
        value: trace.abs() / s + radicand.sqrt(),
        rank,
        applicable: true,
    }
}

fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let svd = m.clone().svd(false, false);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > rel_tol * sigma_max)
        .count()
}

/// Evaluates Cmax, C1, and C2 on a game and fills in the degeneracy fields.
///
/// C2 reads "positive-definite" for the non-symmetric `I + S(a)` as
/// positivity of the quadratic form, i.e. all eigenvalues of the
/// symmetrized `I + (S + S^T) / 2` strictly positive.
pub fn check_conditions(game: &Game) -> ConditionReport {
    let tol = 1e-12;
    let smax = s_max_matrix(game);
    let rho_smax = spectral_radius(&smax, tol);
    let bound = spectral_lower_bound(&smax);

    let mut rho_s_alpha = Vec::with_capacity(game.num_nodes());
    let mut c1_holds = true;
    let mut c2_holds = true;
    for a in 0..game.num_nodes() {
        let s = s_alpha_matrix(game, a).expect("node index in range");
        let rho = spectral_radius(&s, tol);
        c1_holds &= rho < 1.0 - UNIT_CIRCLE_TOL;
        rho_s_alpha.push(rho);
        c2_holds &= symmetrized_min_eigenvalue(&s) > 0.0;
    }

    let degeneracy = degeneracy_index(game, DEFAULT_RANK_TOL);

    ConditionReport {
        rho_smax,
        rho_s_alpha,
        cmax_holds: rho_smax < 1.0 - UNIT_CIRCLE_TOL,
        c1_holds,
        c2_holds,
        spectral_lower_bound: bound.value,
        degeneracy_index: degeneracy.index,
        constraint_rank: degeneracy.constraint_rank,
    }
}

/// Smallest eigenvalue of `I + (S + S^T) / 2`.
fn symmetrized_min_eigenvalue(s: &Array2<f64>) -> f64 {
    let n = s.nrows();
    let mut sym = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] = 0.5 * (s[[i, j]] + s[[j, i]]);
        }
        sym[(i, i)] += 1.0;
    }
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Degeneracy index of the game: `K*A` minus the numerical rank of the
/// stacked constraint matrix whose first `K` rows are the per-user budget
/// patterns (`sum_a z_ka = 0`) and whose last `A` rows are the gain-weighted
/// per-node patterns (`sum_k g_ka z_ka = 0`). Singular values above
/// `rank_tol * sigma_max` count toward the rank.
pub fn degeneracy_index(game: &Game, rank_tol: f64) -> DegeneracyReport {
    assert!(rank_tol > 0.0, "rank tolerance must be positive");
    let (k_users, a_nodes) = (game.num_users(), game.num_nodes());
    let cols = k_users * a_nodes;
    let mut m = DMatrix::zeros(k_users + a_nodes, cols);
    for k in 0..k_users {
        for a in 0..a_nodes {
            m[(k, k * a_nodes + a)] = 1.0;
        }
    }
    for a in 0..a_nodes {
        for k in 0..k_users {
            m[(k_users + a, k * a_nodes + a)] = game.gain(k, a);
        }
    }
    let rank = numerical_rank(&m, rank_tol);
    DegeneracyReport {
        index: cols - rank,
        constraint_rank: rank,
    }
}

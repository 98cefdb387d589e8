//! Game instances, payoffs, and the exact potential.
//!
//! A [`Game`] couples `K` transmitters (users) to `A` orthogonal receiver
//! nodes. User `k` splits a power budget `P_k` across the nodes, so their
//! strategy space is the scaled simplex `{p_k >= 0, sum_a p_ka = P_k}`.
//! Under single-user decoding the payoff of user `k` is the spectral
//! efficiency
//!
//! ```text
//! u_k(p) = sum_a b_a ln(1 + g_ka p_ka / (s2_a + sum_{l != k} g_la p_la))
//! ```
//!
//! and the game admits the exact potential
//!
//! ```text
//! Phi(p) = -sum_a b_a ln(s2_a + sum_k g_ka p_ka),
//! ```
//!
//! meaning every unilateral payoff difference is the opposite of the
//! corresponding potential difference. Nash equilibria are exactly the
//! minimizers of `Phi` over the product of simplices. Natural logarithms
//! throughout the crate; a change of base rescales `u` and `Phi` by the same
//! constant and leaves the equilibrium set untouched.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Relative tolerance on the per-user budget equality when validating a
/// profile. Inputs outside it are rejected, not renormalized.
pub const PROFILE_BUDGET_RTOL: f64 = 1e-9;

/// Law of the random channel gains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainDistribution {
    /// Unit-mean exponential: `g = |h|^2` with `h` complex Gaussian
    /// (Rayleigh fading).
    #[default]
    Exponential,
    /// Log-uniform on `[0.1, 10]`, for conditioning studies.
    LogUniform,
}

impl GainDistribution {
    fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            GainDistribution::Exponential => loop {
                let u: f64 = rng.random();
                let x = -(1.0 - u).ln();
                if x > 0.0 {
                    return x;
                }
            },
            GainDistribution::LogUniform => {
                let lo = 0.1_f64.ln();
                let hi = 10.0_f64.ln();
                rng.random_range(lo..hi).exp()
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GainDistribution::Exponential => "exponential",
            GainDistribution::LogUniform => "log_uniform",
        }
    }
}

impl std::str::FromStr for GainDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" | "exp" => Ok(GainDistribution::Exponential),
            "log_uniform" | "log-uniform" | "loguniform" => Ok(GainDistribution::LogUniform),
            other => Err(Error::Domain(format!(
                "unknown gain distribution `{other}` (expected `exponential` or `log_uniform`)"
            ))),
        }
    }
}

/// An immutable problem instance: channel gains, noise levels, node
/// bandwidths, and per-user power budgets.
///
/// All entries are strictly positive and finite. `Game` is cheap to clone
/// and safe to share across threads; every operation on it is a pure
/// function of its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    gains: Array2<f64>,      // K x A
    noise: Array1<f64>,      // A
    bandwidths: Array1<f64>, // A
    budgets: Array1<f64>,    // K
    bandwidths_normalized: bool,
}

fn check_positive(field: &'static str, index: String, value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::NonPositive {
            field,
            index,
            value,
        });
    }
    Ok(())
}

impl Game {
    /// Validates and freezes a game instance.
    ///
    /// `gains` is `K x A` with entry `(k, a)` the channel gain of user `k`
    /// at node `a`; `noise` and `bandwidths` have length `A`; `budgets` has
    /// length `K`. Every entry must be strictly positive and finite.
    pub fn new(
        gains: Array2<f64>,
        noise: Array1<f64>,
        bandwidths: Array1<f64>,
        budgets: Array1<f64>,
    ) -> Result<Self> {
        let (num_users, num_nodes) = gains.dim();
        if num_users == 0 || num_nodes == 0 {
            return Err(Error::Domain(format!(
                "game needs at least one user and one node, got {num_users} x {num_nodes}"
            )));
        }
        if noise.len() != num_nodes {
            return Err(Error::Shape(format!(
                "noise has length {} but the game has {} nodes",
                noise.len(),
                num_nodes
            )));
        }
        if bandwidths.len() != num_nodes {
            return Err(Error::Shape(format!(
                "bandwidths has length {} but the game has {} nodes",
                bandwidths.len(),
                num_nodes
            )));
        }
        if budgets.len() != num_users {
            return Err(Error::Shape(format!(
                "budgets has length {} but the game has {} users",
                budgets.len(),
                num_users
            )));
        }
        for ((k, a), &g) in gains.indexed_iter() {
            check_positive("gains", format!("{k},{a}"), g)?;
        }
        for (a, &s) in noise.iter().enumerate() {
            check_positive("noise", a.to_string(), s)?;
        }
        for (a, &b) in bandwidths.iter().enumerate() {
            check_positive("bandwidths", a.to_string(), b)?;
        }
        for (k, &p) in budgets.iter().enumerate() {
            check_positive("budgets", k.to_string(), p)?;
        }
        let bandwidths_normalized = (bandwidths.sum() - 1.0).abs() <= 1e-9;
        Ok(Game {
            gains,
            noise,
            bandwidths,
            budgets,
            bandwidths_normalized,
        })
    }

    /// Draws a random game: gains i.i.d. from `distribution`, unit noise,
    /// bandwidths `1/A`, unit budgets. Deterministic in `seed`.
    pub fn random(
        num_users: usize,
        num_nodes: usize,
        seed: u64,
        distribution: GainDistribution,
    ) -> Result<Self> {
        let gains = Self::random_gains(num_users, num_nodes, seed, distribution)?;
        Self::with_default_parameters(gains)
    }

    /// Draws just the gain matrix, for callers that override noise,
    /// bandwidths, or budgets through [`Game::new`].
    pub fn random_gains(
        num_users: usize,
        num_nodes: usize,
        seed: u64,
        distribution: GainDistribution,
    ) -> Result<Array2<f64>> {
        if num_users == 0 || num_nodes == 0 {
            return Err(Error::Domain(format!(
                "random game needs at least one user and one node, got {num_users} x {num_nodes}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..num_users * num_nodes)
            .map(|_| distribution.sample(&mut rng))
            .collect();
        Array2::from_shape_vec((num_users, num_nodes), data)
            .map_err(|e| Error::Shape(e.to_string()))
    }

    /// A degenerate test construction: the first user's gains are drawn from
    /// `distribution` and every following row is `factor` times the previous
    /// one, so all rows are collinear and the potential has flat directions.
    pub fn random_collinear(
        num_users: usize,
        num_nodes: usize,
        seed: u64,
        factor: f64,
        distribution: GainDistribution,
    ) -> Result<Self> {
        if !factor.is_finite() || factor <= 0.0 {
            return Err(Error::Domain(format!(
                "collinearity factor must be strictly positive, got {factor}"
            )));
        }
        let base = Self::random_gains(1, num_nodes, seed, distribution)?;
        let mut gains = Array2::zeros((num_users.max(1), num_nodes));
        for k in 0..num_users.max(1) {
            let scale = factor.powi(k as i32);
            for a in 0..num_nodes {
                gains[[k, a]] = scale * base[[0, a]];
            }
        }
        if num_users == 0 {
            return Err(Error::Domain(
                "collinear game needs at least one user".into(),
            ));
        }
        Self::with_default_parameters(gains)
    }

    fn with_default_parameters(gains: Array2<f64>) -> Result<Self> {
        let (num_users, num_nodes) = gains.dim();
        let noise = Array1::ones(num_nodes);
        let bandwidths = Array1::from_elem(num_nodes, 1.0 / num_nodes as f64);
        let budgets = Array1::ones(num_users);
        Self::new(gains, noise, bandwidths, budgets)
    }

    pub fn num_users(&self) -> usize {
        self.gains.nrows()
    }

    pub fn num_nodes(&self) -> usize {
        self.gains.ncols()
    }

    pub fn gains(&self) -> &Array2<f64> {
        &self.gains
    }

    pub fn noise(&self) -> &Array1<f64> {
        &self.noise
    }

    pub fn bandwidths(&self) -> &Array1<f64> {
        &self.bandwidths
    }

    pub fn budgets(&self) -> &Array1<f64> {
        &self.budgets
    }

    pub fn gain(&self, user: usize, node: usize) -> f64 {
        self.gains[[user, node]]
    }

    pub fn budget(&self, user: usize) -> f64 {
        self.budgets[user]
    }

    /// Whether the bandwidths summed to 1 at construction. Unnormalized
    /// bandwidths are accepted (the potential is well defined for any
    /// positive values) but the flag is recorded.
    pub fn bandwidths_normalized(&self) -> bool {
        self.bandwidths_normalized
    }

    /// SHA-256 over a canonical byte encoding of the game data, so reports
    /// and trajectories can be joined to the instance that produced them.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"macgame-game-v1");
        hasher.update((self.num_users() as u64).to_le_bytes());
        hasher.update((self.num_nodes() as u64).to_le_bytes());
        for &g in self.gains.iter() {
            hasher.update(g.to_bits().to_le_bytes());
        }
        for &s in self.noise.iter() {
            hasher.update(s.to_bits().to_le_bytes());
        }
        for &b in self.bandwidths.iter() {
            hasher.update(b.to_bits().to_le_bytes());
        }
        for &p in self.budgets.iter() {
            hasher.update(p.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            let _ = write!(out, "{byte:02x}");
        }
        out
    }

    // ---- profiles ----------------------------------------------------------

    /// Validates an allocation matrix against this game: shape `K x A`,
    /// entries non-negative and finite, and each row summing to the user's
    /// budget within `1e-9 * P_k`.
    pub fn profile(&self, allocation: Array2<f64>) -> Result<PowerProfile> {
        if allocation.dim() != self.gains.dim() {
            return Err(Error::Shape(format!(
                "allocation is {:?} but the game is {} x {}",
                allocation.dim(),
                self.num_users(),
                self.num_nodes()
            )));
        }
        for ((k, a), &p) in allocation.indexed_iter() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Profile(format!(
                    "allocation[{k},{a}] must be non-negative and finite, got {p}"
                )));
            }
        }
        for k in 0..self.num_users() {
            let sum = allocation.row(k).sum();
            let budget = self.budgets[k];
            if (sum - budget).abs() > PROFILE_BUDGET_RTOL * budget {
                return Err(Error::Profile(format!(
                    "user {k} allocates {sum:.17e} but has budget {budget:.17e}"
                )));
            }
        }
        Ok(PowerProfile { allocation })
    }

    /// The uniform split `P_k / A` on every node.
    pub fn uniform_profile(&self) -> PowerProfile {
        let a = self.num_nodes() as f64;
        let mut allocation = Array2::zeros(self.gains.dim());
        for k in 0..self.num_users() {
            allocation.row_mut(k).fill(self.budgets[k] / a);
        }
        PowerProfile { allocation }
    }

    /// The vertex of the strategy space where user `k` puts the whole budget
    /// on `assignment[k]`.
    pub fn vertex_profile(&self, assignment: &[usize]) -> Result<PowerProfile> {
        if assignment.len() != self.num_users() {
            return Err(Error::Shape(format!(
                "assignment has length {} but the game has {} users",
                assignment.len(),
                self.num_users()
            )));
        }
        let mut allocation = Array2::zeros(self.gains.dim());
        for (k, &a) in assignment.iter().enumerate() {
            if a >= self.num_nodes() {
                return Err(Error::NodeIndex {
                    index: a,
                    num_nodes: self.num_nodes(),
                });
            }
            allocation[[k, a]] = self.budgets[k];
        }
        Ok(PowerProfile { allocation })
    }

    /// A random interior profile, each row uniform on its scaled simplex.
    /// Deterministic in `seed`.
    pub fn random_interior_profile(&self, seed: u64) -> PowerProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut allocation = Array2::zeros(self.gains.dim());
        for k in 0..self.num_users() {
            let row = sample_simplex(&mut rng, self.num_nodes(), self.budgets[k]);
            for (a, value) in row.into_iter().enumerate() {
                allocation[[k, a]] = value;
            }
        }
        PowerProfile { allocation }
    }

    /// A random profile supported exactly on the given per-user node subsets
    /// (uniform on each restricted simplex, zero elsewhere).
    pub fn random_profile_on(&self, supports: &[Vec<usize>], seed: u64) -> Result<PowerProfile> {
        if supports.len() != self.num_users() {
            return Err(Error::Shape(format!(
                "supports has length {} but the game has {} users",
                supports.len(),
                self.num_users()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut allocation = Array2::zeros(self.gains.dim());
        for (k, nodes) in supports.iter().enumerate() {
            if nodes.is_empty() {
                return Err(Error::EmptySupport { user: k });
            }
            for &a in nodes {
                if a >= self.num_nodes() {
                    return Err(Error::NodeIndex {
                        index: a,
                        num_nodes: self.num_nodes(),
                    });
                }
            }
            let row = sample_simplex(&mut rng, nodes.len(), self.budgets[k]);
            for (&a, value) in nodes.iter().zip(row) {
                allocation[[k, a]] = value;
            }
        }
        Ok(PowerProfile { allocation })
    }

    // ---- payoffs and the potential ----------------------------------------

    /// Spectral efficiency of user `k` at the profile (Shannon rate under
    /// single-user decoding, natural log).
    pub fn utility(&self, profile: &PowerProfile, k: usize) -> f64 {
        self.utility_raw(&profile.allocation, k)
    }

    /// The single-node summand of [`Game::utility`].
    pub fn utility_per_node(&self, profile: &PowerProfile, k: usize, node: usize) -> f64 {
        self.utility_per_node_raw(&profile.allocation, k, node)
    }

    /// The exact potential `Phi(p) = -sum_a b_a ln(s2_a + sum_k g_ka p_ka)`.
    /// Nash equilibria of the game are exactly its minimizers over the
    /// product of simplices.
    pub fn potential(&self, profile: &PowerProfile) -> f64 {
        self.potential_raw(&profile.allocation)
    }

    /// Marginal payoffs `v_ka = -dPhi/dp_ka = b_a g_ka / (s2_a + load_a)`,
    /// the downhill gradient field of the potential. All entries are
    /// strictly positive.
    pub fn marginal_payoffs(&self, profile: &PowerProfile) -> Array2<f64> {
        self.marginal_payoffs_raw(&profile.allocation)
    }

    /// Reconstructs the marginal payoffs from the observable per-node rates
    /// instead of the channel model: inverting `u_ka = b_a ln(1 + g p / N)`
    /// gives `v_ka = b_a (1 - exp(-u_ka / b_a)) / p_ka` wherever `p_ka > 0`.
    /// Entries with `p_ka = 0` fall back to the direct formula. Agrees with
    /// [`Game::marginal_payoffs`] up to rounding; exposed as a consistency
    /// check on the distributed-measurement route.
    pub fn marginal_payoffs_from_rates(&self, profile: &PowerProfile) -> Array2<f64> {
        let direct = self.marginal_payoffs_raw(&profile.allocation);
        let mut out = direct.clone();
        for ((k, a), v) in out.indexed_iter_mut() {
            let p = profile.allocation[[k, a]];
            if p > 0.0 {
                let u = self.utility_per_node_raw(&profile.allocation, k, a);
                let b = self.bandwidths[a];
                *v = b * (1.0 - (-u / b).exp()) / p;
            }
        }
        out
    }

    pub(crate) fn utility_raw(&self, allocation: &Array2<f64>, k: usize) -> f64 {
        (0..self.num_nodes())
            .map(|a| self.utility_per_node_raw(allocation, k, a))
            .sum()
    }

    pub(crate) fn utility_per_node_raw(
        &self,
        allocation: &Array2<f64>,
        k: usize,
        node: usize,
    ) -> f64 {
        let mut interference = self.noise[node];
        for l in 0..self.num_users() {
            if l != k {
                interference += self.gains[[l, node]] * allocation[[l, node]];
            }
        }
        let signal = self.gains[[k, node]] * allocation[[k, node]];
        self.bandwidths[node] * (1.0 + signal / interference).ln()
    }

    /// `s2_a + sum_k g_ka p_ka` per node.
    pub(crate) fn node_loads(&self, allocation: &Array2<f64>) -> Array1<f64> {
        let mut loads = self.noise.clone();
        for k in 0..self.num_users() {
            for a in 0..self.num_nodes() {
                loads[a] += self.gains[[k, a]] * allocation[[k, a]];
            }
        }
        loads
    }

    pub(crate) fn potential_raw(&self, allocation: &Array2<f64>) -> f64 {
        let loads = self.node_loads(allocation);
        -self
            .bandwidths
            .iter()
            .zip(loads.iter())
            .map(|(&b, &load)| b * load.ln())
            .sum::<f64>()
    }

    pub(crate) fn marginal_payoffs_raw(&self, allocation: &Array2<f64>) -> Array2<f64> {
        let loads = self.node_loads(allocation);
        let mut v = Array2::zeros(self.gains.dim());
        for k in 0..self.num_users() {
            for a in 0..self.num_nodes() {
                v[[k, a]] = self.bandwidths[a] * self.gains[[k, a]] / loads[a];
            }
        }
        v
    }

    /// Samples random unilateral deviations and checks the exact-potential
    /// identity `u_k(p_-k; p'_k) - u_k(p) = Phi(p) - Phi(p_-k; p'_k)`.
    /// Returns the worst absolute deviation observed.
    pub fn verify_exact_potential(&self, num_samples: usize, seed: u64, tol: f64) -> PotentialCheck {
        let max_deviation =
            self.exact_potential_deviation(|game, alloc| game.potential_raw(alloc), num_samples, seed);
        PotentialCheck {
            holds: max_deviation <= tol,
            max_deviation,
            samples: num_samples,
        }
    }

    /// Same sampling loop with an injectable potential, so tests can confirm
    /// the check rejects a corrupted potential.
    pub(crate) fn exact_potential_deviation<F>(
        &self,
        potential_fn: F,
        num_samples: usize,
        seed: u64,
    ) -> f64
    where
        F: Fn(&Game, &Array2<f64>) -> f64,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0_f64;
        for _ in 0..num_samples {
            let mut alloc = Array2::zeros(self.gains.dim());
            for k in 0..self.num_users() {
                let row = sample_simplex(&mut rng, self.num_nodes(), self.budgets[k]);
                for (a, value) in row.into_iter().enumerate() {
                    alloc[[k, a]] = value;
                }
            }
            let k = rng.random_range(0..self.num_users());
            let u_before = self.utility_raw(&alloc, k);
            let phi_before = potential_fn(self, &alloc);

            let mut deviated = alloc.clone();
            let new_row = sample_simplex(&mut rng, self.num_nodes(), self.budgets[k]);
            for (a, value) in new_row.into_iter().enumerate() {
                deviated[[k, a]] = value;
            }
            let u_after = self.utility_raw(&deviated, k);
            let phi_after = potential_fn(self, &deviated);

            let deviation = ((u_after - u_before) - (phi_before - phi_after)).abs();
            worst = worst.max(deviation);
        }
        worst
    }
}

/// Result of [`Game::verify_exact_potential`].
#[derive(Debug, Clone, Copy)]
pub struct PotentialCheck {
    pub holds: bool,
    pub max_deviation: f64,
    pub samples: usize,
}

/// One point of the product-of-simplices strategy space: a `K x A` matrix of
/// non-negative powers whose rows sum to the users' budgets.
///
/// Profiles are only built through [`Game`] constructors or validators, so a
/// value of this type always satisfies the simplex constraints (to the
/// documented tolerance) of the game that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    allocation: Array2<f64>,
}

impl PowerProfile {
    pub fn allocation(&self) -> &Array2<f64> {
        &self.allocation
    }

    pub fn num_users(&self) -> usize {
        self.allocation.nrows()
    }

    pub fn num_nodes(&self) -> usize {
        self.allocation.ncols()
    }

    pub fn row(&self, k: usize) -> ArrayView1<'_, f64> {
        self.allocation.row(k)
    }

    pub fn value(&self, user: usize, node: usize) -> f64 {
        self.allocation[[user, node]]
    }

    /// Per-user budgets read off the rows themselves.
    pub fn row_budgets(&self) -> Array1<f64> {
        Array1::from_iter((0..self.num_users()).map(|k| self.allocation.row(k).sum()))
    }

    /// Indices with `p_ka > support_tol * P_k`, per user. `support_tol` is
    /// relative; numerical equilibria carry dust mass, so callers pick the
    /// threshold (default `1e-6`).
    pub fn support(&self, support_tol: f64) -> Vec<Vec<usize>> {
        (0..self.num_users())
            .map(|k| {
                let budget = self.allocation.row(k).sum();
                (0..self.num_nodes())
                    .filter(|&a| self.allocation[[k, a]] > support_tol * budget)
                    .collect()
            })
            .collect()
    }

    /// Largest entry-wise absolute difference.
    pub fn max_norm_distance(&self, other: &PowerProfile) -> f64 {
        self.allocation
            .iter()
            .zip(other.allocation.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn from_allocation_unchecked(allocation: Array2<f64>) -> Self {
        PowerProfile { allocation }
    }
}

/// Uniform sample from the scaled simplex `{x >= 0, sum x = total}` via
/// normalized exponentials.
pub(crate) fn sample_simplex<R: Rng>(rng: &mut R, n: usize, total: f64) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                -(1.0 - u).ln()
            })
            .collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 {
            return draws.into_iter().map(|x| x * total / sum).collect();
        }
    }
}

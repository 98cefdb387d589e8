//! Nash equilibrium computation and the graph analysis of power profiles.
//!
//! Because the game admits a convex exact potential, its Nash set is the
//! minimum set of the potential over the product of scaled simplices. Two
//! solvers are provided and cross-check each other:
//!
//! - [`solve_potential_min`]: projected gradient descent on the potential
//!   with exact Euclidean simplex projection and Armijo backtracking;
//! - [`solve_sequential_waterfilling`]: round-robin best responses, each one
//!   an exact single-user water-filling step.
//!
//! A profile is at equilibrium iff for every user the marginal payoffs
//! `v_ka` are equal on the user's support and no larger off it (the KKT
//! conditions); [`kkt_residual`] turns that into a single scale-free
//! non-negative scalar that vanishes exactly at equilibria.
//!
//! Equilibria have sparse structure: representing a profile as a multigraph
//! on the receiver nodes (one star per user over its support) yields a
//! forest at equilibrium for almost every draw of the gains, which caps the
//! total amount of water-filling at `A - 1` and pins equilibria to faces of
//! dimension at most `A - 1`. See [`profile_graph`], [`ProfileGraph::is_forest`],
//! and [`equilibrium_face_dim`].

use ndarray::{Array1, Array2, ArrayView1};

use crate::game::{Game, PowerProfile};

/// Default relative support threshold: entries above `1e-6 * P_k` count as
/// used. Complementary slackness is exact only analytically; numerical
/// equilibria carry dust mass below this level.
pub const DEFAULT_SUPPORT_TOL: f64 = 1e-6;

/// Relative budget accuracy of the water-filling bisection.
pub const WATERFILL_BUDGET_RTOL: f64 = 1e-12;

const ARMIJO_C: f64 = 1e-4;

/// Which algorithm produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Projected gradient descent on the potential (`pgd`).
    ProjectedGradient,
    /// Iterative sequential water-filling (`swf`).
    SequentialWaterfilling,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::ProjectedGradient => "pgd",
            SolverKind::SequentialWaterfilling => "swf",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "pgd" => Ok(SolverKind::ProjectedGradient),
            "swf" => Ok(SolverKind::SequentialWaterfilling),
            other => Err(crate::Error::Domain(format!(
                "unknown solver `{other}` (expected `pgd` or `swf`)"
            ))),
        }
    }
}

/// Solver settings shared by both algorithms.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Target KKT residual.
    pub tol: f64,
    /// Iteration cap: gradient steps for `pgd`, full rounds for `swf`.
    pub max_iters: usize,
    /// Relative support threshold recorded in the report.
    pub support_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            // Profile error scales roughly linearly with the residual
            // (through the smallest marginal-payoff gap), so 1e-10 keeps
            // solutions well inside 1e-6 agreement.
            tol: 1e-10,
            max_iters: 100_000,
            support_tol: DEFAULT_SUPPORT_TOL,
        }
    }
}

/// Solver output. Non-convergence is data, not an error: `converged` is
/// false and the report still carries the last iterate.
#[derive(Debug, Clone)]
pub struct EquilibriumReport {
    pub profile: PowerProfile,
    /// Scale-free stationarity measure; zero exactly at Nash equilibria.
    pub kkt_residual: f64,
    pub iterations: usize,
    /// True iff `kkt_residual <= tolerance` was reached.
    pub converged: bool,
    pub potential_value: f64,
    /// Per-user multipliers `lambda_k = max_a v_ka` at the final profile.
    pub multipliers: Vec<f64>,
    /// `p_ka > support_tol * P_k` bitmap at the final profile.
    pub support: Array2<bool>,
    /// Per-user residual breakdown; `kkt_residual` is its maximum.
    pub per_user_residuals: Vec<f64>,
    pub solver: SolverKind,
    pub tolerance: f64,
    pub support_tol: f64,
}

// ---- simplex projection -----------------------------------------------------

/// Euclidean projection onto the scaled simplex `{x >= 0, sum x = budget}`
/// by sort-and-threshold. The result meets the budget within
/// `1e-12 * budget`.
pub fn simplex_project(point: ArrayView1<'_, f64>, budget: f64) -> Array1<f64> {
    assert!(budget > 0.0, "budget must be positive");
    let mut sorted: Vec<f64> = point.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());

    // The largest j with u_j above the running threshold; j = 0 always
    // qualifies (u_0 - (u_0 - budget) = budget > 0).
    let mut cumulative = 0.0;
    let mut threshold = sorted[0] - budget;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - budget) / (j + 1) as f64;
        if u - t > 0.0 {
            threshold = t;
        }
    }
    Array1::from_iter(point.iter().map(|&x| (x - threshold).max(0.0)))
}

// ---- best response ------------------------------------------------------------

/// The unique maximizer of user `k`'s payoff with opponents held fixed:
/// water-filling `p_ka = max(0, b_a / lambda - N_ka / g_ka)` with the level
/// `lambda` found by bisection on the (monotone decreasing) budget function
/// until the budget matches within `1e-12 * P_k`.
pub fn best_response(game: &Game, profile: &PowerProfile, k: usize) -> Array1<f64> {
    best_response_on(game, profile.allocation(), k, None)
}

pub(crate) fn best_response_on(
    game: &Game,
    allocation: &Array2<f64>,
    k: usize,
    allowed: Option<&[usize]>,
) -> Array1<f64> {
    let num_nodes = game.num_nodes();
    let all: Vec<usize>;
    let nodes: &[usize] = match allowed {
        Some(nodes) => nodes,
        None => {
            all = (0..num_nodes).collect();
            &all
        }
    };
    let budget = game.budget(k);

    // Interference-plus-noise seen by user k at each allowed node.
    let mut base = Vec::with_capacity(nodes.len());
    for &a in nodes {
        let mut n = game.noise()[a];
        for l in 0..game.num_users() {
            if l != k {
                n += game.gain(l, a) * allocation[[l, a]];
            }
        }
        base.push(n);
    }

    let fill = |lambda: f64| -> f64 {
        nodes
            .iter()
            .zip(&base)
            .map(|(&a, &n)| (game.bandwidths()[a] / lambda - n / game.gain(k, a)).max(0.0))
            .sum()
    };

    // At lambda_hi every term is clamped to zero; shrink lambda_lo until the
    // budget is overshot.
    let mut hi = nodes
        .iter()
        .zip(&base)
        .map(|(&a, &n)| game.bandwidths()[a] * game.gain(k, a) / n)
        .fold(f64::MIN, f64::max);
    let mut lo = hi;
    while fill(lo) < budget {
        lo *= 0.5;
    }

    let budget_tol = WATERFILL_BUDGET_RTOL * budget;
    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..600 {
        let total = fill(lambda);
        if (total - budget).abs() <= budget_tol {
            break;
        }
        if total > budget {
            lo = lambda;
        } else {
            hi = lambda;
        }
        lambda = 0.5 * (lo + hi);
    }

    let mut out = Array1::zeros(num_nodes);
    for (&a, &n) in nodes.iter().zip(&base) {
        out[a] = (game.bandwidths()[a] / lambda - n / game.gain(k, a)).max(0.0);
    }
    out
}

// ---- KKT residual -------------------------------------------------------------

/// Stationarity measure: with `lambda_k = max_a v_ka`, returns
/// `max_k [lambda_k - (1/P_k) sum_a p_ka v_ka]`. Each bracket is
/// non-negative and vanishes iff user `k`'s marginal payoffs are equal on
/// the support and dominated off it, so the residual is zero exactly at
/// Nash equilibria.
pub fn kkt_residual(game: &Game, profile: &PowerProfile) -> f64 {
    per_user_kkt_residuals(game, profile)
        .into_iter()
        .fold(0.0, f64::max)
}

/// The per-user breakdown behind [`kkt_residual`].
pub fn per_user_kkt_residuals(game: &Game, profile: &PowerProfile) -> Vec<f64> {
    let v = game.marginal_payoffs_raw(profile.allocation());
    per_user_residuals_from(game, profile.allocation(), &v, None)
}

fn per_user_residuals_from(
    game: &Game,
    allocation: &Array2<f64>,
    v: &Array2<f64>,
    supports: Option<&[Vec<usize>]>,
) -> Vec<f64> {
    (0..game.num_users())
        .map(|k| {
            let nodes: Box<dyn Iterator<Item = usize>> = match supports {
                Some(s) => Box::new(s[k].iter().copied()),
                None => Box::new(0..game.num_nodes()),
            };
            let mut lambda = f64::MIN;
            let mut weighted = 0.0;
            for a in nodes {
                lambda = lambda.max(v[[k, a]]);
                weighted += allocation[[k, a]] * v[[k, a]];
            }
            lambda - weighted / game.budget(k)
        })
        .collect()
}

pub(crate) fn kkt_residual_on(
    game: &Game,
    allocation: &Array2<f64>,
    supports: Option<&[Vec<usize>]>,
) -> f64 {
    let v = game.marginal_payoffs_raw(allocation);
    per_user_residuals_from(game, allocation, &v, supports)
        .into_iter()
        .fold(0.0, f64::max)
}

/// Worst violation of the water-filling ratio condition over all users and
/// supported node pairs: at equilibrium `g_ka / g_kb` must equal
/// `r_a / r_b`, where `r_a = (s2_a + load_a) / b_a` is user-independent.
pub fn waterfill_ratio_deviation(game: &Game, profile: &PowerProfile, support_tol: f64) -> f64 {
    let loads = game.node_loads(profile.allocation());
    let r: Vec<f64> = (0..game.num_nodes())
        .map(|a| loads[a] / game.bandwidths()[a])
        .collect();
    let supports = profile.support(support_tol);
    let mut worst = 0.0_f64;
    for (k, nodes) in supports.iter().enumerate() {
        for (i, &a) in nodes.iter().enumerate() {
            for &b in &nodes[i + 1..] {
                let gain_ratio = game.gain(k, a) / game.gain(k, b);
                let r_ratio = r[a] / r[b];
                worst = worst.max((gain_ratio - r_ratio).abs());
            }
        }
    }
    worst
}

// ---- solvers -------------------------------------------------------------------

/// Projected gradient descent on the potential over the product of scaled
/// simplices. The step direction is the marginal-payoff field (the downhill
/// gradient of the potential); each candidate is projected back per user and
/// accepted under an Armijo decrease test with halving backtracking from 1.
///
/// Defaults to the uniform profile when `init` is absent. Non-convergence
/// within `max_iters` yields `converged = false`, not an error.
pub fn solve_potential_min(
    game: &Game,
    init: Option<&PowerProfile>,
    opts: &SolveOptions,
) -> EquilibriumReport {
    solve_pgd_on(game, init, None, opts)
}

pub(crate) fn solve_pgd_on(
    game: &Game,
    init: Option<&PowerProfile>,
    supports: Option<&[Vec<usize>]>,
    opts: &SolveOptions,
) -> EquilibriumReport {
    let mut alloc = initial_allocation(game, init, supports);
    let mut phi = game.potential_raw(&alloc);
    let mut iterations = 0;
    let mut converged = false;

    // Projected gradient with step at most 1/L descends without any line
    // search, where L bounds the potential's gradient Lipschitz constant:
    // the Hessian is block diagonal over nodes with blocks
    // (b_a / load_a^2) g_a g_a^T and load_a >= s2_a, so
    // L <= max_a b_a |g_a|^2 / s2_a^2. Near the optimum the measurable
    // potential decrease drops below f64 resolution and the Armijo test
    // goes blind; steps at or below 1/L are then accepted outright.
    let safe_step = 1.0
        / (0..game.num_nodes())
            .map(|a| {
                let g_norm_sq: f64 = (0..game.num_users()).map(|k| game.gain(k, a).powi(2)).sum();
                let s2 = game.noise()[a];
                game.bandwidths()[a] * g_norm_sq / (s2 * s2)
            })
            .fold(f64::MIN, f64::max);

    for _ in 0..opts.max_iters {
        let v = game.marginal_payoffs_raw(&alloc);
        let residual = per_user_residuals_from(game, &alloc, &v, supports)
            .into_iter()
            .fold(0.0, f64::max);
        if residual <= opts.tol {
            converged = true;
            break;
        }
        iterations += 1;

        // Backtracking on the projection arc: candidate(s) = proj(p + s v).
        let mut step = 1.0;
        let accepted = loop {
            let candidate = project_step(game, &alloc, &v, step, supports);
            if step <= safe_step {
                break candidate;
            }
            let phi_new = game.potential_raw(&candidate);
            // <grad Phi, candidate - p> = -<v, candidate - p>
            let gdot: f64 = candidate
                .iter()
                .zip(alloc.iter())
                .zip(v.iter())
                .map(|((c, p), vv)| -vv * (c - p))
                .sum();
            if phi_new <= phi + ARMIJO_C * gdot {
                break candidate;
            }
            step *= 0.5;
        };
        if accepted == alloc {
            // A fixed point of the projection step is stationary; further
            // iterations cannot move.
            break;
        }
        phi = game.potential_raw(&accepted);
        alloc = accepted;
    }

    finish_report(
        game,
        alloc,
        iterations,
        converged,
        SolverKind::ProjectedGradient,
        supports,
        opts,
    )
}

/// Iterative sequential water-filling: users best-respond in round-robin
/// order (1..K each round). Terminates when the profile moves less than
/// `tol` in max-norm over a full round or the KKT residual reaches `tol`.
pub fn solve_sequential_waterfilling(
    game: &Game,
    init: Option<&PowerProfile>,
    opts: &SolveOptions,
) -> EquilibriumReport {
    solve_swf_on(game, init, None, opts)
}

pub(crate) fn solve_swf_on(
    game: &Game,
    init: Option<&PowerProfile>,
    supports: Option<&[Vec<usize>]>,
    opts: &SolveOptions,
) -> EquilibriumReport {
    let mut alloc = initial_allocation(game, init, supports);
    let mut rounds = 0;
    let mut converged = false;

    for _ in 0..opts.max_iters {
        rounds += 1;
        let mut movement = 0.0_f64;
        for k in 0..game.num_users() {
            let allowed = supports.map(|s| s[k].as_slice());
            let new_row = best_response_on(game, &alloc, k, allowed);
            for a in 0..game.num_nodes() {
                movement = movement.max((new_row[a] - alloc[[k, a]]).abs());
                alloc[[k, a]] = new_row[a];
            }
        }
        let residual = kkt_residual_on(game, &alloc, supports);
        if residual <= opts.tol {
            converged = true;
            break;
        }
        if movement < opts.tol {
            break;
        }
    }

    finish_report(
        game,
        alloc,
        rounds,
        converged,
        SolverKind::SequentialWaterfilling,
        supports,
        opts,
    )
}

fn initial_allocation(
    game: &Game,
    init: Option<&PowerProfile>,
    supports: Option<&[Vec<usize>]>,
) -> Array2<f64> {
    match (init, supports) {
        (Some(p), _) => p.allocation().clone(),
        (None, None) => game.uniform_profile().allocation().clone(),
        (None, Some(s)) => {
            let mut alloc = Array2::zeros((game.num_users(), game.num_nodes()));
            for (k, nodes) in s.iter().enumerate() {
                let share = game.budget(k) / nodes.len() as f64;
                for &a in nodes {
                    alloc[[k, a]] = share;
                }
            }
            alloc
        }
    }
}

fn project_step(
    game: &Game,
    alloc: &Array2<f64>,
    v: &Array2<f64>,
    step: f64,
    supports: Option<&[Vec<usize>]>,
) -> Array2<f64> {
    let mut out = Array2::zeros(alloc.dim());
    for k in 0..game.num_users() {
        match supports {
            None => {
                let target = Array1::from_iter(
                    (0..game.num_nodes()).map(|a| alloc[[k, a]] + step * v[[k, a]]),
                );
                let projected = simplex_project(target.view(), game.budget(k));
                for a in 0..game.num_nodes() {
                    out[[k, a]] = projected[a];
                }
            }
            Some(s) => {
                let nodes = &s[k];
                let target =
                    Array1::from_iter(nodes.iter().map(|&a| alloc[[k, a]] + step * v[[k, a]]));
                let projected = simplex_project(target.view(), game.budget(k));
                for (i, &a) in nodes.iter().enumerate() {
                    out[[k, a]] = projected[i];
                }
            }
        }
    }
    out
}

fn finish_report(
    game: &Game,
    alloc: Array2<f64>,
    iterations: usize,
    converged: bool,
    solver: SolverKind,
    supports: Option<&[Vec<usize>]>,
    opts: &SolveOptions,
) -> EquilibriumReport {
    let v = game.marginal_payoffs_raw(&alloc);
    let per_user = per_user_residuals_from(game, &alloc, &v, supports);
    let kkt = per_user.iter().copied().fold(0.0, f64::max);
    let multipliers: Vec<f64> = (0..game.num_users())
        .map(|k| {
            let nodes: Box<dyn Iterator<Item = usize>> = match supports {
                Some(s) => Box::new(s[k].iter().copied()),
                None => Box::new(0..game.num_nodes()),
            };
            nodes.map(|a| v[[k, a]]).fold(f64::MIN, f64::max)
        })
        .collect();
    let mut support = Array2::from_elem(alloc.dim(), false);
    for k in 0..game.num_users() {
        let threshold = opts.support_tol * game.budget(k);
        for a in 0..game.num_nodes() {
            support[[k, a]] = alloc[[k, a]] > threshold;
        }
    }
    let potential_value = game.potential_raw(&alloc);
    EquilibriumReport {
        profile: PowerProfile::from_allocation_unchecked(alloc),
        kkt_residual: kkt,
        iterations,
        converged,
        potential_value,
        multipliers,
        support,
        per_user_residuals: per_user,
        solver,
        tolerance: opts.tol,
        support_tol: opts.support_tol,
    }
}

// ---- profile graphs -------------------------------------------------------------

/// An edge of the graph representing a power profile, labeled by the user
/// whose support it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphEdge {
    pub from: usize,
    pub to: usize,
    pub owner: usize,
}

/// Multigraph representation of a power profile: vertices are the receiver
/// nodes; each user contributes a star from their hub to every other
/// supported node. Built by [`profile_graph`].
#[derive(Debug, Clone)]
pub struct ProfileGraph {
    pub num_nodes: usize,
    pub edges: Vec<GraphEdge>,
    /// Hub node per user; `None` for users with empty support.
    pub hubs: Vec<Option<usize>>,
}

impl ProfileGraph {
    /// True iff the multigraph is acyclic. Union-find over the edges; an
    /// edge joining two already-connected vertices closes a cycle, so
    /// parallel edges count as 2-cycles.
    pub fn is_forest(&self) -> bool {
        let mut dsu = UnionFind::new(self.num_nodes);
        for edge in &self.edges {
            if !dsu.union(edge.from, edge.to) {
                return false;
            }
        }
        true
    }

    /// Number of connected components among vertices touched by at least
    /// one edge plus isolated vertices.
    pub fn connected_components(&self) -> usize {
        let mut dsu = UnionFind::new(self.num_nodes);
        for edge in &self.edges {
            dsu.union(edge.from, edge.to);
        }
        (0..self.num_nodes)
            .filter(|&v| dsu.find(v) == v)
            .count()
    }
}

/// Builds the representing graph with the deterministic hub rule: the hub of
/// each user is the lowest-index supported node. The forest verdict does not
/// depend on the hub choice (the star on a fixed support set connects the
/// same vertex set with the same edge count).
pub fn profile_graph(profile: &PowerProfile, support_tol: f64) -> ProfileGraph {
    profile_graph_with_hubs(profile, support_tol, |_, nodes| nodes[0])
}

/// Hub rule injectable for the hub-invariance property tests.
pub(crate) fn profile_graph_with_hubs<F>(
    profile: &PowerProfile,
    support_tol: f64,
    choose_hub: F,
) -> ProfileGraph
where
    F: Fn(usize, &[usize]) -> usize,
{
    let supports = profile.support(support_tol);
    let mut edges = Vec::new();
    let mut hubs = Vec::with_capacity(profile.num_users());
    for (k, nodes) in supports.iter().enumerate() {
        if nodes.is_empty() {
            hubs.push(None);
            continue;
        }
        let hub = choose_hub(k, nodes);
        debug_assert!(nodes.contains(&hub));
        hubs.push(Some(hub));
        for &a in nodes {
            if a != hub {
                edges.push(GraphEdge {
                    from: hub,
                    to: a,
                    owner: k,
                });
            }
        }
    }
    ProfileGraph {
        num_nodes: profile.num_nodes(),
        edges,
        hubs,
    }
}

/// Dimension of the smallest face of the strategy space containing the
/// profile in its relative interior: `sum_k (|supp(p_k)| - 1)`.
pub fn equilibrium_face_dim(profile: &PowerProfile, support_tol: f64) -> usize {
    profile
        .support(support_tol)
        .iter()
        .map(|nodes| nodes.len().saturating_sub(1))
        .sum()
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(len: usize) -> Self {
        UnionFind {
            parent: (0..len).collect(),
            rank: vec![0; len],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GainDistribution;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn game_2x2() -> Game {
        Game::new(
            array![[2.0, 1.0], [1.0, 2.0]],
            array![1.0, 1.0],
            array![1.0, 1.0],
            array![1.0, 1.0],
        )
        .unwrap()
    }

    // ---- simplex projection ----

    #[test]
    fn projection_is_identity_on_feasible_points() {
        let x = array![0.2, 0.5, 0.3];
        let p = simplex_project(x.view(), 1.0);
        for (a, b) in x.iter().zip(p.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn projection_thresholds_dominant_coordinate() {
        let p = simplex_project(array![2.0, 0.0].view(), 1.0);
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn projection_splits_symmetric_input() {
        let p = simplex_project(array![1.0, 1.0].view(), 1.0);
        assert_relative_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.5, epsilon = 1e-15);
    }

    // ---- best response ----

    #[test]
    fn waterfilling_closed_form_oracle() {
        // K=1, A=2, g=(1,3), s2=(1,1), b=(1,1), P=1. Equalizing marginals
        // 1/(1+p1) = 3/(1+3p2) with p1+p2 = 1 gives p = (1/6, 5/6).
        let g = Game::new(
            array![[1.0, 3.0]],
            array![1.0, 1.0],
            array![1.0, 1.0],
            array![1.0],
        )
        .unwrap();
        let br = best_response(&g, &g.uniform_profile(), 0);
        assert_relative_eq!(br[0], 1.0 / 6.0, epsilon = 1e-9);
        assert_relative_eq!(br[1], 5.0 / 6.0, epsilon = 1e-9);
    }

    #[test]
    fn single_node_gets_everything() {
        let g = Game::new(array![[2.0], [1.0]], array![1.0], array![1.0], array![1.0, 3.0]).unwrap();
        let p = g.uniform_profile();
        let br = best_response(&g, &p, 1);
        assert_relative_eq!(br[0], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn symmetric_nodes_split_uniformly() {
        let g = Game::new(
            array![[2.0, 2.0, 2.0]],
            array![1.0, 1.0, 1.0],
            array![1.0, 1.0, 1.0],
            array![1.0],
        )
        .unwrap();
        let br = best_response(&g, &g.uniform_profile(), 0);
        for a in 0..3 {
            assert_relative_eq!(br[a], 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn best_response_meets_budget_and_single_user_kkt() {
        for seed in 0..20 {
            let g = Game::random(4, 5, seed, GainDistribution::Exponential).unwrap();
            let p = g.random_interior_profile(seed ^ 0x9e37);
            for k in 0..4 {
                let br = best_response(&g, &p, k);
                let total: f64 = br.sum();
                assert!(
                    (total - g.budget(k)).abs() <= 1e-12 * g.budget(k),
                    "budget error {}",
                    (total - g.budget(k)).abs()
                );
                // The reduced single-user game must be stationary at the
                // best response.
                let mut alloc = p.allocation().clone();
                for a in 0..5 {
                    alloc[[k, a]] = br[a];
                }
                let v = g.marginal_payoffs_raw(&alloc);
                let lambda = (0..5).map(|a| v[[k, a]]).fold(f64::MIN, f64::max);
                let weighted: f64 = (0..5).map(|a| alloc[[k, a]] * v[[k, a]]).sum::<f64>()
                    / g.budget(k);
                assert!(lambda - weighted <= 1e-10, "residual {}", lambda - weighted);
            }
        }
    }

    // ---- KKT residual ----

    #[test]
    fn residual_vanishes_at_the_derived_equilibrium() {
        let g = game_2x2();
        let q = g.vertex_profile(&[0, 1]).unwrap();
        assert!(kkt_residual(&g, &q) <= 1e-12);
    }

    #[test]
    fn residual_positive_at_uniform_profile() {
        let g = game_2x2();
        let p = g.uniform_profile();
        // v is not equalized there: v_1 = (.8, .4), average .6.
        let r = kkt_residual(&g, &p);
        assert_relative_eq!(r, 0.2, max_relative = 1e-12);
    }

    #[test]
    fn residual_zero_for_single_node_games() {
        let g = Game::new(array![[1.5], [0.5]], array![2.0], array![1.0], array![1.0, 1.0]).unwrap();
        let p = g.uniform_profile();
        assert!(kkt_residual(&g, &p) <= 1e-15);
    }

    // ---- solvers ----

    #[test]
    fn trivial_1x1_solves_immediately() {
        let g = Game::new(array![[1.0]], array![1.0], array![1.0], array![1.0]).unwrap();
        let report = solve_potential_min(&g, None, &SolveOptions::default());
        assert!(report.converged);
        assert!(report.kkt_residual <= 1e-12);
        assert_relative_eq!(report.profile.value(0, 0), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn pgd_finds_the_derived_2x2_boundary_equilibrium() {
        let g = game_2x2();
        let report = solve_potential_min(&g, None, &SolveOptions::default());
        assert!(report.converged);
        assert_relative_eq!(
            report.potential_value,
            -2.0 * 3.0_f64.ln(),
            epsilon = 1e-8
        );
        assert!(report.support[[0, 0]] && !report.support[[0, 1]]);
        assert!(!report.support[[1, 0]] && report.support[[1, 1]]);
        assert_relative_eq!(report.multipliers[0], 2.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn swf_agrees_with_pgd_on_random_instances() {
        let opts = SolveOptions::default();
        for seed in 0..10 {
            let g = Game::random(3, 4, seed + 100, GainDistribution::Exponential).unwrap();
            let a = solve_potential_min(&g, None, &opts);
            let b = solve_sequential_waterfilling(&g, None, &opts);
            assert!(a.converged && b.converged, "seed {seed}");
            assert!(
                a.profile.max_norm_distance(&b.profile) <= 1e-6,
                "seed {seed}: distance {}",
                a.profile.max_norm_distance(&b.profile)
            );
        }
    }

    #[test]
    fn swf_single_user_converges_in_one_round() {
        let g = Game::random(1, 5, 3, GainDistribution::Exponential).unwrap();
        let report = solve_sequential_waterfilling(&g, None, &SolveOptions::default());
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
    }

    #[test]
    fn swf_single_node_converges_in_one_round() {
        let g = Game::new(
            array![[1.0], [2.0], [3.0]],
            array![1.0],
            array![1.0],
            array![1.0, 1.0, 1.0],
        )
        .unwrap();
        let report = solve_sequential_waterfilling(&g, None, &SolveOptions::default());
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        for k in 0..3 {
            assert_relative_eq!(report.profile.value(k, 0), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn multistart_reaches_the_same_profile() {
        let g = Game::random(3, 4, 77, GainDistribution::Exponential).unwrap();
        let opts = SolveOptions::default();
        let baseline = solve_potential_min(&g, None, &opts);
        for seed in 0..5 {
            let init = g.random_interior_profile(seed);
            let report = solve_potential_min(&g, Some(&init), &opts);
            assert!(report.converged);
            assert!(
                report.profile.max_norm_distance(&baseline.profile) <= 1e-6,
                "distance {}",
                report.profile.max_norm_distance(&baseline.profile)
            );
        }
    }

    #[test]
    fn waterfilling_ratios_hold_at_equilibrium() {
        let g = Game::random(4, 4, 5, GainDistribution::Exponential).unwrap();
        let report = solve_potential_min(&g, None, &SolveOptions::default());
        assert!(report.converged);
        let dev = waterfill_ratio_deviation(&g, &report.profile, DEFAULT_SUPPORT_TOL);
        assert!(dev <= 1e-6, "ratio deviation {dev}");
    }

    #[test]
    fn nonconvergence_is_reported_not_thrown() {
        let g = Game::random(3, 3, 2, GainDistribution::Exponential).unwrap();
        let opts = SolveOptions {
            tol: 1e-14,
            max_iters: 1,
            ..SolveOptions::default()
        };
        let report = solve_potential_min(&g, None, &opts);
        assert!(!report.converged);
        assert!(report.kkt_residual > 0.0);
    }

    // ---- graphs ----

    #[test]
    fn single_node_support_has_no_edges() {
        let g = game_2x2();
        let q = g.vertex_profile(&[0, 1]).unwrap();
        let graph = profile_graph(&q, DEFAULT_SUPPORT_TOL);
        assert!(graph.edges.is_empty());
        assert_eq!(graph.hubs, vec![Some(0), Some(1)]);
        assert!(graph.is_forest());
    }

    #[test]
    fn star_construction_from_three_supported_nodes() {
        let g = Game::random(1, 3, 1, GainDistribution::Exponential).unwrap();
        let p = g.uniform_profile();
        let graph = profile_graph(&p, DEFAULT_SUPPORT_TOL);
        assert_eq!(graph.hubs[0], Some(0));
        assert_eq!(
            graph.edges,
            vec![
                GraphEdge { from: 0, to: 1, owner: 0 },
                GraphEdge { from: 0, to: 2, owner: 0 },
            ]
        );
        assert!(graph.is_forest());
    }

    #[test]
    fn three_users_on_three_of_four_nodes_give_six_edges() {
        let g = Game::random(3, 4, 1, GainDistribution::Exponential).unwrap();
        let p = g
            .random_profile_on(&[vec![0, 1, 3], vec![0, 1, 2], vec![1, 2, 3]], 2)
            .unwrap();
        let graph = profile_graph(&p, DEFAULT_SUPPORT_TOL);
        assert_eq!(graph.edges.len(), 6);
        // 6 edges on 4 vertices cannot be a forest.
        assert!(!graph.is_forest());
    }

    #[test]
    fn parallel_edges_count_as_a_cycle() {
        let graph = ProfileGraph {
            num_nodes: 2,
            edges: vec![
                GraphEdge { from: 0, to: 1, owner: 0 },
                GraphEdge { from: 0, to: 1, owner: 1 },
            ],
            hubs: vec![Some(0), Some(0)],
        };
        assert!(!graph.is_forest());
    }

    #[test]
    fn equilibrium_graphs_of_random_games_are_forests() {
        for seed in 0..15 {
            let g = Game::random(3, 3, seed + 500, GainDistribution::Exponential).unwrap();
            let report = solve_potential_min(&g, None, &SolveOptions::default());
            assert!(report.converged);
            let graph = profile_graph(&report.profile, DEFAULT_SUPPORT_TOL);
            assert!(graph.is_forest(), "seed {seed}");
        }
    }

    #[test]
    fn face_dimension_counts_support_surplus() {
        let g = Game::random(3, 4, 8, GainDistribution::Exponential).unwrap();
        let vertex = g.vertex_profile(&[0, 1, 2]).unwrap();
        assert_eq!(equilibrium_face_dim(&vertex, DEFAULT_SUPPORT_TOL), 0);
        let p = g
            .random_profile_on(&[vec![0, 1], vec![2], vec![3]], 3)
            .unwrap();
        assert_eq!(equilibrium_face_dim(&p, DEFAULT_SUPPORT_TOL), 1);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(128))]

        /// The forest verdict must not depend on which supported node each
        /// user's star is centered on.
        #[test]
        fn forest_verdict_is_hub_invariant(
            k in 1usize..5,
            a in 2usize..6,
            seed in 0u64..10_000,
            hub_picks in proptest::collection::vec(0usize..8, 5),
        ) {
            use rand::{Rng, SeedableRng};
            let g = Game::random(k, a, seed, GainDistribution::Exponential).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xf00d);
            let supports: Vec<Vec<usize>> = (0..k)
                .map(|_| {
                    let size = rng.random_range(1..=a);
                    let mut nodes: Vec<usize> = (0..a).collect();
                    for i in (1..nodes.len()).rev() {
                        let j = rng.random_range(0..=i);
                        nodes.swap(i, j);
                    }
                    let mut s: Vec<usize> = nodes.into_iter().take(size).collect();
                    s.sort_unstable();
                    s
                })
                .collect();
            let p = g.random_profile_on(&supports, seed ^ 0xbeef).unwrap();

            let lowest = profile_graph(&p, DEFAULT_SUPPORT_TOL);
            let other = profile_graph_with_hubs(&p, DEFAULT_SUPPORT_TOL, |user, nodes| {
                nodes[hub_picks[user % hub_picks.len()] % nodes.len()]
            });
            proptest::prop_assert_eq!(lowest.is_forest(), other.is_forest());
            // Independent acyclicity oracle: a multigraph is a forest iff
            // every component spans exactly one more vertex than it has
            // edges, i.e. edges = vertices - components.
            let vertices = lowest.num_nodes;
            let components = lowest.connected_components();
            let is_forest_by_count = lowest.edges.len() == vertices - components;
            proptest::prop_assert_eq!(lowest.is_forest(), is_forest_by_count);
        }
    }
}

//! Replicator-dynamics learning and its Lyapunov monitors.
//!
//! Users update their allocations along the growth-rate field
//!
//! ```text
//! dp_ka/dt = p_ka (v_ka(p) - v_k(p)),    v_k(p) = (1/P_k) sum_b p_kb v_kb(p)
//! ```
//!
//! which only needs locally observable quantities. The field is tangent to
//! each scaled simplex and leaves faces invariant: coordinates that start at
//! zero stay at exactly zero. Along solutions the potential never increases
//! (the derivative is minus a sum of per-user variances of the marginal
//! payoffs), and the Kullback-Leibler divergence to the equilibrium is a
//! second Lyapunov function whose dissipation rate [`lyapunov_l`] dominates
//! the potential gap. Interior trajectories converge to a Nash equilibrium,
//! one of the Nash set even when the game is degenerate and the equilibrium
//! is not unique.
//!
//! [`integrate`] discretizes the flow with classical fixed-step fourth-order
//! steps, halving the step whenever a step would increase the potential or
//! clamp off more than a sliver of mass; the continuous flow does neither,
//! so the monitors double as integration-quality checks. Trajectories whose
//! initial support excludes some nodes play, by face invariance, the game
//! reduced to those supports ([`ReducedGame`]); their stopping rule uses the
//! reduced game's stationarity residual, which coincides with the full one
//! for interior starts.

use ndarray::{Array1, Array2};

use crate::equilibrium::{self, EquilibriumReport, SolveOptions};
use crate::error::{Error, Result};
use crate::game::{Game, PowerProfile};

/// Settings for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    /// Initial step size.
    pub step: f64,
    /// Integration stops once `t` reaches this horizon.
    pub horizon: f64,
    /// Stationarity residual at which the trajectory counts as converged.
    pub residual_tol: f64,
    /// Store every `stride`-th accepted step (the initial and final states
    /// are always stored).
    pub stride: usize,
    /// Per-step clamped mass above `clamp_tol * P_k` forces a step halving.
    pub clamp_tol: f64,
    /// Give up once step halving drives the step below this floor.
    pub min_step: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            step: 0.1,
            horizon: 1e3,
            residual_tol: 1e-6,
            stride: 10,
            clamp_tol: 1e-8,
            min_step: 1e-12,
        }
    }
}

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The stationarity residual reached `residual_tol`.
    Converged,
    /// Time reached the horizon first.
    Horizon,
    /// Step halving hit the floor (the step kept violating the potential
    /// descent or clamp budget).
    StepFloor,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::Horizon => "horizon",
            StopReason::StepFloor => "step_floor",
        }
    }
}

/// Kullback-Leibler divergence value. The divergence is infinite when the
/// reference puts mass where the profile has none; that case is a tagged
/// variant rather than a floating-point infinity so reports can tell
/// "unsupported target" apart from overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    Finite(f64),
    Infinite,
}

impl Divergence {
    pub fn is_finite(self) -> bool {
        matches!(self, Divergence::Finite(_))
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Divergence::Finite(v) => Some(v),
            Divergence::Infinite => None,
        }
    }
}

/// A coordinate that started positive and was clamped to exact zero by the
/// discretization (the continuous flow only reaches the boundary
/// asymptotically, so these are recorded rather than silently accepted).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportUnderflow {
    pub time: f64,
    pub user: usize,
    pub node: usize,
}

/// Time-stamped samples of one replicator orbit with its monitor values.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub profiles: Vec<PowerProfile>,
    pub potential_values: Vec<f64>,
    /// Present when a reference profile was supplied (or recomputed via
    /// [`Trajectory::recompute_kl`]).
    pub kl_values: Option<Vec<Divergence>>,
    /// Stationarity residual per sample, restricted to the faces spanned by
    /// the initial support.
    pub kkt_residuals: Vec<f64>,
    /// Relative mass clamped at the sampled step.
    pub clamped_mass: Vec<f64>,
    /// Step size in effect when the run stopped.
    pub step_size: f64,
    pub reason: StopReason,
    pub support_underflows: Vec<SupportUnderflow>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_profile(&self) -> &PowerProfile {
        self.profiles.last().expect("trajectory has samples")
    }

    /// Recomputes the KL monitor against a new reference, e.g. the
    /// trajectory's own limit candidate in degenerate games where no a
    /// priori equilibrium target exists.
    pub fn recompute_kl(&mut self, reference: &PowerProfile) {
        self.kl_values = Some(
            self.profiles
                .iter()
                .map(|p| kl_divergence(reference, p))
                .collect(),
        );
    }
}

/// The replicator vector field `p_ka (v_ka - v_k)`. Rows sum to zero (the
/// field is tangent to each scaled simplex) and vanish at every vertex and
/// at every Nash equilibrium.
pub fn replicator_field(game: &Game, profile: &PowerProfile) -> Array2<f64> {
    replicator_field_raw(game, profile.allocation())
}

fn replicator_field_raw(game: &Game, allocation: &Array2<f64>) -> Array2<f64> {
    let v = game.marginal_payoffs_raw(allocation);
    let mut field = Array2::zeros(allocation.dim());
    for k in 0..game.num_users() {
        let average: f64 = (0..game.num_nodes())
            .map(|a| allocation[[k, a]] * v[[k, a]])
            .sum::<f64>()
            / game.budget(k);
        for a in 0..game.num_nodes() {
            field[[k, a]] = allocation[[k, a]] * (v[[k, a]] - average);
        }
    }
    field
}

/// Relative entropy `H_q(p) = sum_{k,a} q_ka ln(q_ka / p_ka)` with the
/// convention `0 ln(0/x) = 0`. Infinite iff `p` lacks mass somewhere on the
/// support of `q`.
pub fn kl_divergence(q: &PowerProfile, p: &PowerProfile) -> Divergence {
    debug_assert_eq!(q.allocation().dim(), p.allocation().dim());
    let mut total = 0.0;
    for (qv, pv) in q.allocation().iter().zip(p.allocation().iter()) {
        if *qv > 0.0 {
            if *pv <= 0.0 {
                return Divergence::Infinite;
            }
            total += qv * (qv / pv).ln();
        }
    }
    Divergence::Finite(total)
}

/// Dissipation rate of the relative entropy along the flow:
/// `L_q(p) = -sum_{k,a} (p_ka - q_ka) v_ka(p)`, which satisfies
/// `dH_q/dt = -L_q(p(t))` and the growth estimate
/// `L_q(p) >= Phi(p) - Phi(q)`.
pub fn lyapunov_l(game: &Game, q: &PowerProfile, p: &PowerProfile) -> f64 {
    let v = game.marginal_payoffs_raw(p.allocation());
    -p.allocation()
        .iter()
        .zip(q.allocation().iter())
        .zip(v.iter())
        .map(|((pv, qv), vv)| (pv - qv) * vv)
        .sum::<f64>()
}

/// Integrates the replicator dynamics from `init` with classical
/// fourth-order fixed steps.
///
/// After every step, negative entries produced by the discretization are
/// clamped to zero and each row is renormalized to its budget; the clamped
/// mass is recorded. A step is rejected and the step size halved whenever it
/// would increase the potential (the continuous flow never does) or clamp
/// more than `clamp_tol * P_k` of mass. Halved steps stay halved.
///
/// Termination: the stationarity residual of the game reduced to the
/// initial support reaches `residual_tol` (for interior starts this is the
/// plain KKT residual), the horizon is reached, or the step underflows.
/// The reference profile, when given, enables the KL monitor.
pub fn integrate(
    game: &Game,
    init: &PowerProfile,
    opts: &IntegrateOptions,
    reference: Option<&PowerProfile>,
) -> Result<Trajectory> {
    if init.allocation().dim() != (game.num_users(), game.num_nodes()) {
        return Err(Error::Shape(format!(
            "init profile is {:?} but the game is {} x {}",
            init.allocation().dim(),
            game.num_users(),
            game.num_nodes()
        )));
    }
    if !(opts.step > 0.0) || !(opts.horizon > 0.0) {
        return Err(Error::Domain(
            "step and horizon must be positive".to_string(),
        ));
    }

    // Faces are invariant, so the game actually being played is the one
    // reduced to the initial support; stationarity is measured there.
    let supports: Vec<Vec<usize>> = (0..game.num_users())
        .map(|k| {
            (0..game.num_nodes())
                .filter(|&a| init.value(k, a) > 0.0)
                .collect()
        })
        .collect();
    let interior = supports.iter().all(|s| s.len() == game.num_nodes());
    let support_arg = if interior {
        None
    } else {
        Some(supports.as_slice())
    };

    let mut alloc = init.allocation().clone();
    let mut t = 0.0;
    let mut h = opts.step;
    let mut phi = game.potential_raw(&alloc);
    let mut residual = equilibrium::kkt_residual_on(game, &alloc, support_arg);

    let mut trajectory = Trajectory {
        times: Vec::new(),
        profiles: Vec::new(),
        potential_values: Vec::new(),
        kl_values: reference.map(|_| Vec::new()),
        kkt_residuals: Vec::new(),
        clamped_mass: Vec::new(),
        step_size: h,
        reason: StopReason::Horizon,
        support_underflows: Vec::new(),
    };

    let store = |t: f64, alloc: &Array2<f64>, phi: f64, residual: f64, clamped: f64,
                 trajectory: &mut Trajectory| {
        trajectory.times.push(t);
        let profile = PowerProfile::from_allocation_unchecked(alloc.clone());
        if let (Some(kls), Some(q)) = (trajectory.kl_values.as_mut(), reference) {
            kls.push(kl_divergence(q, &profile));
        }
        trajectory.profiles.push(profile);
        trajectory.potential_values.push(phi);
        trajectory.kkt_residuals.push(residual);
        trajectory.clamped_mass.push(clamped);
    };

    store(t, &alloc, phi, residual, 0.0, &mut trajectory);

    let reason;
    let mut steps_accepted: usize = 0;
    let mut last_stored = true;
    let mut last_clamped = 0.0;
    loop {
        if residual <= opts.residual_tol {
            reason = StopReason::Converged;
            break;
        }
        if t >= opts.horizon {
            reason = StopReason::Horizon;
            break;
        }

        // One RK4 attempt at the current step size.
        let step = h.min(opts.horizon - t).max(opts.min_step);
        let k1 = replicator_field_raw(game, &alloc);
        let half = 0.5 * step;
        let k2 = replicator_field_raw(game, &(&alloc + &(&k1 * half)));
        let k3 = replicator_field_raw(game, &(&alloc + &(&k2 * half)));
        let k4 = replicator_field_raw(game, &(&alloc + &(&k3 * step)));
        let mut candidate =
            &alloc + &((&k1 + &(&k2 * 2.0) + &(&k3 * 2.0) + &k4) * (step / 6.0));

        // Clamp and renormalize each row back onto its simplex.
        let mut clamped_rel = 0.0_f64;
        let mut underflows = Vec::new();
        for k in 0..game.num_users() {
            let budget = game.budget(k);
            let mut clamped = 0.0;
            for a in 0..game.num_nodes() {
                let value = candidate[[k, a]];
                if value < 0.0 {
                    clamped += -value;
                    candidate[[k, a]] = 0.0;
                    if alloc[[k, a]] > 0.0 {
                        underflows.push(SupportUnderflow {
                            time: t + step,
                            user: k,
                            node: a,
                        });
                    }
                }
            }
            clamped_rel = clamped_rel.max(clamped / budget);
            let sum = candidate.row(k).sum();
            if sum > 0.0 {
                let scale = budget / sum;
                for a in 0..game.num_nodes() {
                    candidate[[k, a]] *= scale;
                }
            }
        }

        let phi_new = game.potential_raw(&candidate);
        // Reject on potential increase beyond rounding or excessive clamping.
        let phi_slack = 1e-14 * (1.0 + phi.abs());
        if clamped_rel > opts.clamp_tol || phi_new > phi + phi_slack {
            h *= 0.5;
            if h < opts.min_step {
                reason = StopReason::StepFloor;
                break;
            }
            continue;
        }

        alloc = candidate;
        t += step;
        phi = phi_new;
        residual = equilibrium::kkt_residual_on(game, &alloc, support_arg);
        trajectory.support_underflows.extend(underflows);
        steps_accepted += 1;
        last_clamped = clamped_rel;

        if steps_accepted % opts.stride == 0 {
            store(t, &alloc, phi, residual, clamped_rel, &mut trajectory);
            last_stored = true;
        } else {
            last_stored = false;
        }
    }

    if !last_stored {
        store(t, &alloc, phi, residual, last_clamped, &mut trajectory);
    }
    trajectory.step_size = h;
    trajectory.reason = reason;
    Ok(trajectory)
}

// ---- reduced games -----------------------------------------------------------

/// A game restricted to per-user node subsets.
///
/// Face invariance makes these the right description of replicator orbits
/// whose initial allocation skips some nodes: the orbit plays the reduced
/// game and converges to one of its equilibria. Payoffs are the original
/// spectral efficiencies summed over each user's subset, which on the
/// restricted faces coincide with the full payoffs.
///
/// Solving goes through the same machinery as the full game with the
/// strategy simplices replaced by the restricted faces; reports come back
/// embedded in the full coordinates (zeros off the supports).
#[derive(Debug, Clone)]
pub struct ReducedGame {
    game: Game,
    supports: Vec<Vec<usize>>,
}

/// Restricts a game to per-user node subsets. Each subset must be non-empty
/// with in-range, deduplicated indices.
pub fn reduced_game(game: &Game, supports: &[Vec<usize>]) -> Result<ReducedGame> {
    if supports.len() != game.num_users() {
        return Err(Error::Shape(format!(
            "supports has length {} but the game has {} users",
            supports.len(),
            game.num_users()
        )));
    }
    let mut cleaned = Vec::with_capacity(supports.len());
    for (k, nodes) in supports.iter().enumerate() {
        if nodes.is_empty() {
            return Err(Error::EmptySupport { user: k });
        }
        let mut sorted = nodes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if let Some(&bad) = sorted.iter().find(|&&a| a >= game.num_nodes()) {
            return Err(Error::NodeIndex {
                index: bad,
                num_nodes: game.num_nodes(),
            });
        }
        cleaned.push(sorted);
    }
    Ok(ReducedGame {
        game: game.clone(),
        supports: cleaned,
    })
}

impl ReducedGame {
    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn supports(&self) -> &[Vec<usize>] {
        &self.supports
    }

    /// Payoff of user `k` in the reduced game: the spectral efficiency
    /// summed over the user's subset only.
    pub fn utility(&self, profile: &PowerProfile, k: usize) -> f64 {
        self.supports[k]
            .iter()
            .map(|&a| self.game.utility_per_node_raw(profile.allocation(), k, a))
            .sum()
    }

    /// Embeds per-user reduced allocations into the full strategy space with
    /// zeros off the supports.
    pub fn embed(&self, rows: &[Vec<f64>]) -> Result<PowerProfile> {
        if rows.len() != self.game.num_users() {
            return Err(Error::Shape(format!(
                "expected {} rows, got {}",
                self.game.num_users(),
                rows.len()
            )));
        }
        let mut alloc = Array2::zeros((self.game.num_users(), self.game.num_nodes()));
        for (k, (nodes, row)) in self.supports.iter().zip(rows).enumerate() {
            if row.len() != nodes.len() {
                return Err(Error::Shape(format!(
                    "user {k}: {} values for a subset of {} nodes",
                    row.len(),
                    nodes.len()
                )));
            }
            for (&a, &value) in nodes.iter().zip(row) {
                alloc[[k, a]] = value;
            }
        }
        self.game.profile(alloc)
    }

    /// Extracts the per-user reduced coordinates of a full profile.
    pub fn restrict(&self, profile: &PowerProfile) -> Vec<Vec<f64>> {
        self.supports
            .iter()
            .enumerate()
            .map(|(k, nodes)| nodes.iter().map(|&a| profile.value(k, a)).collect())
            .collect()
    }

    /// When every user keeps the same node subset, the restriction is a
    /// plain game over those nodes: returns it together with the map from
    /// reduced node index to the original one.
    pub fn as_common_game(&self) -> Option<(Game, Vec<usize>)> {
        let first = &self.supports[0];
        if self.supports.iter().any(|s| s != first) {
            return None;
        }
        let nodes = first.clone();
        let mut gains = Array2::zeros((self.game.num_users(), nodes.len()));
        let mut noise = Array1::zeros(nodes.len());
        let mut bandwidths = Array1::zeros(nodes.len());
        for (i, &a) in nodes.iter().enumerate() {
            for k in 0..self.game.num_users() {
                gains[[k, i]] = self.game.gain(k, a);
            }
            noise[i] = self.game.noise()[a];
            bandwidths[i] = self.game.bandwidths()[a];
        }
        let game = Game::new(gains, noise, bandwidths, self.game.budgets().clone())
            .expect("restriction of a valid game is valid");
        Some((game, nodes))
    }

    /// Uniform profile on the restricted faces.
    pub fn uniform_profile(&self) -> PowerProfile {
        let mut alloc = Array2::zeros((self.game.num_users(), self.game.num_nodes()));
        for (k, nodes) in self.supports.iter().enumerate() {
            let share = self.game.budget(k) / nodes.len() as f64;
            for &a in nodes {
                alloc[[k, a]] = share;
            }
        }
        PowerProfile::from_allocation_unchecked(alloc)
    }

    /// Random profile in the relative interior of the restricted faces.
    pub fn random_interior_profile(&self, seed: u64) -> PowerProfile {
        self.game
            .random_profile_on(&self.supports, seed)
            .expect("supports validated at construction")
    }

    /// Stationarity residual of the reduced game.
    pub fn kkt_residual(&self, profile: &PowerProfile) -> f64 {
        equilibrium::kkt_residual_on(&self.game, profile.allocation(), Some(&self.supports))
    }

    /// Potential minimization over the restricted faces. The report is in
    /// full coordinates.
    pub fn solve_potential_min(
        &self,
        init: Option<&PowerProfile>,
        opts: &SolveOptions,
    ) -> EquilibriumReport {
        equilibrium::solve_pgd_on(&self.game, init, Some(&self.supports), opts)
    }

    /// Sequential water-filling over the restricted faces.
    pub fn solve_sequential_waterfilling(
        &self,
        init: Option<&PowerProfile>,
        opts: &SolveOptions,
    ) -> EquilibriumReport {
        equilibrium::solve_swf_on(&self.game, init, Some(&self.supports), opts)
    }
}

//! Plain-text document formats: game and report documents (TOML) and
//! trajectory CSV.
//!
//! Floats in documents round-trip bit-faithfully (the writer emits the
//! shortest decimal that parses back to the same bits; 17 significant
//! digits always suffice). CSV cells are written with 17 significant
//! digits explicitly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Divergence, Trajectory};
use crate::equilibrium::EquilibriumReport;
use crate::error::{Error, Result};
use crate::game::{GainDistribution, Game};
use crate::structure::ConditionReport;

fn toml_error(e: impl std::fmt::Display) -> Error {
    Error::Document(e.to_string())
}

/// On-disk form of a [`Game`]: key-value fields with row-major arrays,
/// plus optional generation provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameDocument {
    pub num_users: usize,
    pub num_nodes: usize,
    /// Row-major `K x A`.
    pub gains: Vec<f64>,
    pub noise: Vec<f64>,
    pub bandwidths: Vec<f64>,
    pub budgets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_distribution: Option<GainDistribution>,
}

impl GameDocument {
    pub fn from_game(game: &Game, seed: Option<u64>, dist: Option<GainDistribution>) -> Self {
        GameDocument {
            num_users: game.num_users(),
            num_nodes: game.num_nodes(),
            gains: game.gains().iter().copied().collect(),
            noise: game.noise().to_vec(),
            bandwidths: game.bandwidths().to_vec(),
            budgets: game.budgets().to_vec(),
            seed,
            gain_distribution: dist,
        }
    }

    pub fn to_game(&self) -> Result<Game> {
        if self.gains.len() != self.num_users * self.num_nodes {
            return Err(Error::Shape(format!(
                "gains has {} entries but the document declares {} x {}",
                self.gains.len(),
                self.num_users,
                self.num_nodes
            )));
        }
        let gains = ndarray::Array2::from_shape_vec(
            (self.num_users, self.num_nodes),
            self.gains.clone(),
        )
        .map_err(|e| Error::Shape(e.to_string()))?;
        Game::new(
            gains,
            ndarray::Array1::from_vec(self.noise.clone()),
            ndarray::Array1::from_vec(self.bandwidths.clone()),
            ndarray::Array1::from_vec(self.budgets.clone()),
        )
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(toml_error)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(toml_error)
    }
}

pub fn write_game(
    game: &Game,
    seed: Option<u64>,
    dist: Option<GainDistribution>,
    path: &Path,
) -> Result<()> {
    let doc = GameDocument::from_game(game, seed, dist);
    std::fs::write(path, doc.to_toml_string()?)?;
    Ok(())
}

pub fn read_game(path: &Path) -> Result<(Game, GameDocument)> {
    let text = std::fs::read_to_string(path)?;
    let doc = GameDocument::from_toml_str(&text)?;
    let game = doc.to_game()?;
    Ok((game, doc))
}

/// On-disk form of a power profile (explicit initial conditions, reference
/// targets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDocument {
    pub num_users: usize,
    pub num_nodes: usize,
    /// Row-major `K x A`.
    pub allocation: Vec<f64>,
}

impl ProfileDocument {
    pub fn from_profile(profile: &crate::game::PowerProfile) -> Self {
        ProfileDocument {
            num_users: profile.num_users(),
            num_nodes: profile.num_nodes(),
            allocation: profile.allocation().iter().copied().collect(),
        }
    }

    /// Validates the stored allocation against `game`.
    pub fn to_profile(&self, game: &Game) -> Result<crate::game::PowerProfile> {
        if self.allocation.len() != self.num_users * self.num_nodes {
            return Err(Error::Shape(format!(
                "allocation has {} entries but the document declares {} x {}",
                self.allocation.len(),
                self.num_users,
                self.num_nodes
            )));
        }
        let alloc = ndarray::Array2::from_shape_vec(
            (self.num_users, self.num_nodes),
            self.allocation.clone(),
        )
        .map_err(|e| Error::Shape(e.to_string()))?;
        game.profile(alloc)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(toml_error)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(toml_error)
    }
}

pub fn write_profile(profile: &crate::game::PowerProfile, path: &Path) -> Result<()> {
    std::fs::write(path, ProfileDocument::from_profile(profile).to_toml_string()?)?;
    Ok(())
}

pub fn read_profile(path: &Path, game: &Game) -> Result<crate::game::PowerProfile> {
    let text = std::fs::read_to_string(path)?;
    ProfileDocument::from_toml_str(&text)?.to_profile(game)
}

/// On-disk form of an [`EquilibriumReport`], joined to its game by content
/// hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumDocument {
    pub solver: String,
    pub converged: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub potential_value: f64,
    pub tolerance: f64,
    pub support_tol: f64,
    pub num_users: usize,
    pub num_nodes: usize,
    /// Row-major `K x A`.
    pub profile: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// Row-major support bitmap.
    pub support: Vec<bool>,
    pub per_user_residuals: Vec<f64>,
    pub game_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl EquilibriumDocument {
    pub fn from_report(report: &EquilibriumReport, game_hash: String, seed: Option<u64>) -> Self {
        EquilibriumDocument {
            solver: report.solver.name().to_string(),
            converged: report.converged,
            iterations: report.iterations,
            kkt_residual: report.kkt_residual,
            potential_value: report.potential_value,
            tolerance: report.tolerance,
            support_tol: report.support_tol,
            num_users: report.profile.num_users(),
            num_nodes: report.profile.num_nodes(),
            profile: report.profile.allocation().iter().copied().collect(),
            multipliers: report.multipliers.clone(),
            support: report.support.iter().copied().collect(),
            per_user_residuals: report.per_user_residuals.clone(),
            game_hash,
            seed,
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(toml_error)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(toml_error)
    }
}

pub fn write_equilibrium_report(
    report: &EquilibriumReport,
    game: &Game,
    seed: Option<u64>,
    path: &Path,
) -> Result<()> {
    let doc = EquilibriumDocument::from_report(report, game.content_hash(), seed);
    std::fs::write(path, doc.to_toml_string()?)?;
    Ok(())
}

/// On-disk form of a [`ConditionReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionDocument {
    pub rho_smax: f64,
    pub rho_s_alpha: Vec<f64>,
    pub cmax_holds: bool,
    pub c1_holds: bool,
    pub c2_holds: bool,
    pub spectral_lower_bound: f64,
    pub degeneracy_index: usize,
    pub constraint_rank: usize,
    pub game_hash: String,
}

impl ConditionDocument {
    pub fn from_report(report: &ConditionReport, game_hash: String) -> Self {
        ConditionDocument {
            rho_smax: report.rho_smax,
            rho_s_alpha: report.rho_s_alpha.clone(),
            cmax_holds: report.cmax_holds,
            c1_holds: report.c1_holds,
            c2_holds: report.c2_holds,
            spectral_lower_bound: report.spectral_lower_bound,
            degeneracy_index: report.degeneracy_index,
            constraint_rank: report.constraint_rank,
            game_hash,
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(toml_error)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(toml_error)
    }
}

pub fn write_condition_report(report: &ConditionReport, game: &Game, path: &Path) -> Result<()> {
    let doc = ConditionDocument::from_report(report, game.content_hash());
    std::fs::write(path, doc.to_toml_string()?)?;
    Ok(())
}

/// Sidecar metadata written next to a trajectory CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryMetadata {
    pub game_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub step: f64,
    pub final_step: f64,
    pub horizon: f64,
    pub residual_tol: f64,
    pub stride: usize,
    pub reason: String,
    /// The stopping residual is measured on the game reduced to the initial
    /// support ("init-support"); for interior starts this equals the full
    /// KKT residual.
    pub residual_scope: String,
    pub samples: usize,
    pub support_underflows: usize,
}

impl TrajectoryMetadata {
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(toml_error)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(toml_error)
    }
}

/// 17 significant digits: enough to reproduce any f64 exactly.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders a trajectory as CSV with header
/// `t,p_1_1,...,p_K_A,potential,kl,kkt_residual,clamped_mass`
/// (profiles row-major). The `kl` column is empty when no reference was
/// given and `inf` for samples off the reference's support.
pub fn trajectory_csv_string(trajectory: &Trajectory) -> String {
    let mut out = String::new();
    let (users, nodes) = match trajectory.profiles.first() {
        Some(p) => (p.num_users(), p.num_nodes()),
        None => (0, 0),
    };
    out.push('t');
    for k in 1..=users {
        for a in 1..=nodes {
            out.push_str(&format!(",p_{k}_{a}"));
        }
    }
    out.push_str(",potential,kl,kkt_residual,clamped_mass\n");

    for i in 0..trajectory.len() {
        out.push_str(&fmt_f64(trajectory.times[i]));
        for value in trajectory.profiles[i].allocation().iter() {
            out.push(',');
            out.push_str(&fmt_f64(*value));
        }
        out.push(',');
        out.push_str(&fmt_f64(trajectory.potential_values[i]));
        out.push(',');
        match trajectory.kl_values.as_ref().map(|kls| kls[i]) {
            Some(Divergence::Finite(v)) => out.push_str(&fmt_f64(v)),
            Some(Divergence::Infinite) => out.push_str("inf"),
            None => {}
        }
        out.push(',');
        out.push_str(&fmt_f64(trajectory.kkt_residuals[i]));
        out.push(',');
        out.push_str(&fmt_f64(trajectory.clamped_mass[i]));
        out.push('\n');
    }
    out
}

pub fn write_trajectory_csv(trajectory: &Trajectory, path: &Path) -> Result<()> {
    std::fs::write(path, trajectory_csv_string(trajectory))?;
    Ok(())
}

/// Writes the CSV plus a `<path>.meta.toml` sidecar.
pub fn write_trajectory_with_metadata(
    trajectory: &Trajectory,
    game: &Game,
    seed: Option<u64>,
    opts: &crate::dynamics::IntegrateOptions,
    path: &Path,
) -> Result<()> {
    write_trajectory_csv(trajectory, path)?;
    let meta = TrajectoryMetadata {
        game_hash: game.content_hash(),
        seed,
        step: opts.step,
        final_step: trajectory.step_size,
        horizon: opts.horizon,
        residual_tol: opts.residual_tol,
        stride: opts.stride,
        reason: trajectory.reason.name().to_string(),
        residual_scope: "init-support".to_string(),
        samples: trajectory.len(),
        support_underflows: trajectory.support_underflows.len(),
    };
    let mut meta_path = path.as_os_str().to_owned();
    meta_path.push(".meta.toml");
    std::fs::write(meta_path, meta.to_toml_string()?)?;
    Ok(())
}

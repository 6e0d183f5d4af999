use std::f64::consts::FRAC_PI_2;

use clap::Args;
use modsensor_core::fisher::ProbGrid;
use modsensor_core::rng::trial_stream;
use modsensor_core::states::VisibilitySet;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{emit, visibilities, DEFAULT_DELTA};
use crate::config::{Params, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{self, sig12};
use crate::values::{FamilyArg, Format, NpState, Sweep};
use crate::Io;

#[derive(Args, Debug, Default, Serialize)]
pub struct ProbgridArgs {
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub np_spec: Option<NpState>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Override the state's a-visibility.
    #[arg(long)]
    pub eta_a: Option<f64>,
    #[arg(long)]
    pub eta_b: Option<f64>,
    /// ε_a sweep lo:hi:n [default: one period, 41 points].
    #[arg(long)]
    pub eps_a: Option<Sweep>,
    #[arg(long)]
    pub eps_b: Option<Sweep>,
    /// Ancilla rotation of the a-round [default: π/2].
    #[arg(long)]
    pub theta_a: Option<f64>,
    #[arg(long)]
    pub theta_b: Option<f64>,
    /// Shots per cell; 0 writes exact probabilities.
    #[arg(long)]
    pub shots: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbgridParams {
    pub family: FamilyArg,
    pub delta: f64,
    pub np_spec: NpState,
    pub cutoff: Option<usize>,
    pub eta_a: Option<f64>,
    pub eta_b: Option<f64>,
    pub eps_a: Option<Sweep>,
    pub eps_b: Option<Sweep>,
    pub theta_a: f64,
    pub theta_b: f64,
    pub shots: u64,
}

impl Default for ProbgridParams {
    fn default() -> Self {
        Self {
            family: FamilyArg::Grid,
            delta: DEFAULT_DELTA,
            np_spec: NpState::default(),
            cutoff: None,
            eta_a: None,
            eta_b: None,
            eps_a: None,
            eps_b: None,
            theta_a: FRAC_PI_2,
            theta_b: FRAC_PI_2,
            shots: 0,
        }
    }
}

impl Params for ProbgridParams {
    fn validate(&self) -> Result<()> {
        for eta in [self.eta_a, self.eta_b].into_iter().flatten() {
            if !(0.0..=1.0).contains(&eta) {
                return Err(CliError::input(format!(
                    "visibility overrides must lie in [0, 1], got {eta}"
                )));
            }
        }
        Ok(())
    }
}

pub fn run(cfg: &RunConfig, p: &ProbgridParams, io: &Io) -> Result<()> {
    let (family, state_vis) = match (p.eta_a, p.eta_b, p.family) {
        (Some(_), Some(_), FamilyArg::Grid) => (modsensor_core::circuit::Family::Grid, VisibilitySet::IDEAL),
        (Some(_), Some(_), FamilyArg::Np) => (p.np_spec.family(), VisibilitySet::IDEAL),
        _ => visibilities(p.family, p.delta, &p.np_spec, p.cutoff)?,
    };
    let eta_a = p.eta_a.unwrap_or(state_vis.eta_a);
    let eta_b = p.eta_b.unwrap_or(state_vis.eta_b);
    let vis = VisibilitySet {
        eta_a,
        eta_b,
        eta_joint: eta_a * eta_b,
    };
    let (la, lb) = family.lengths();
    let eps_a = p.eps_a.unwrap_or_else(|| Sweep::period(la)).points();
    let eps_b = p.eps_b.unwrap_or_else(|| Sweep::period(lb)).points();
    let mut grid = ProbGrid::analytic(family, &vis, (p.theta_a, p.theta_b), eps_a, eps_b);
    if p.shots > 0 {
        grid = grid.sampled(p.shots, &mut trial_stream(cfg.seed, 0))?;
    }
    let mode = if p.shots > 0 { "mc" } else { "analytic" };

    let nb = grid.eps_b.len();
    let rows = grid.eps_a.iter().enumerate().flat_map(|(i, a)| {
        let grid = &grid;
        grid.eps_b.iter().enumerate().map(move |(j, b)| {
            let k = i * nb + j;
            vec![
                sig12(*a),
                sig12(*b),
                sig12(grid.p_a0[k]),
                sig12(grid.p_b0[k]),
                grid.n_shots.to_string(),
                mode.to_string(),
            ]
        })
    });
    let header = ["eps_a", "eps_b", "P_a0", "P_b0", "n_shots", "mode"];
    output::write_table(
        output::open(io.output.as_deref())?,
        cfg.format_or(Format::Csv),
        &header,
        rows,
    )?;

    if io.summary.is_some() {
        let fields = json!({
            "rows": grid.p_a0.len(),
            "eta_a": eta_a,
            "eta_b": eta_b,
            "mode": mode,
        });
        emit(io, &output::record(cfg, fields))?;
    }
    Ok(())
}

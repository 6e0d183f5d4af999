use clap::Args;
use modsensor_core::fisher::{force_chain, ForceContext};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::emit;
use crate::config::{Params, RunConfig};
use crate::error::Result;
use crate::output;
use crate::Io;

#[derive(Args, Debug, Default, Serialize)]
pub struct ForceArgs {
    /// Displacement-amplitude uncertainty Δγ per experiment block.
    #[arg(long)]
    pub delta_gamma: Option<f64>,
    /// Force duration (s).
    #[arg(long)]
    pub tf: Option<f64>,
    /// Duration of one experiment (s).
    #[arg(long)]
    pub texp: Option<f64>,
    /// Repetitions per block.
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<usize>,
    /// Ground-state extent (m).
    #[arg(long)]
    pub z0: Option<f64>,
    /// Charge (C).
    #[arg(long)]
    pub charge: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForceParams {
    pub delta_gamma: f64,
    pub tf: f64,
    pub texp: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub z0: f64,
    pub charge: f64,
}

impl Default for ForceParams {
    fn default() -> Self {
        let ctx = ForceContext::default();
        Self {
            delta_gamma: 0.1,
            tf: ctx.t_f,
            texp: ctx.t_exp,
            m: ctx.repetitions,
            z0: ctx.z0,
            charge: ctx.charge,
        }
    }
}

impl Params for ForceParams {}

pub fn run(cfg: &RunConfig, p: &ForceParams, io: &Io) -> Result<()> {
    let ctx = ForceContext {
        z0: p.z0,
        t_f: p.tf,
        t_exp: p.texp,
        repetitions: p.m,
        charge: p.charge,
    };
    let s = force_chain(&ctx, p.delta_gamma)?;
    let fields = json!({
        "sigma_gamma": s.sigma_gamma,
        "delta_z": s.delta_z,
        "sigma_z": s.sigma_z,
        "sigma_f": s.sigma_f,
        "sigma_e": s.sigma_e,
    });
    emit(io, &output::record(cfg, fields))
}

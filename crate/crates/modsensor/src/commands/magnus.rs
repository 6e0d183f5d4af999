use std::f64::consts::FRAC_PI_2;

use clap::Args;
use modsensor_core::pulses::{
    magnus_distance, propagate_bsb, propagate_bsb_with_steps, tune_zeta2, verify_conditional_number, PulseSpec,
    MAX_STEPS_PER_PERIOD,
};
use modsensor_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::emit;
use crate::config::{Params, RunConfig};
use crate::error::Result;
use crate::output::{self, sig12};
use crate::values::Format;
use crate::Io;

#[derive(Args, Debug, Default, Serialize)]
pub struct MagnusArgs {
    /// Sideband periods in the pulse.
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub k: Option<usize>,
    /// Target conditional phase.
    #[arg(long)]
    pub phi_target: Option<f64>,
    /// Sideband Rabi rate.
    #[arg(long)]
    pub omega_b: Option<f64>,
    /// Second-order sideband amplitude ratio.
    #[arg(long)]
    pub zeta2: Option<f64>,
    /// Scan ζ₂ over [0, 0.3] and keep the best.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub tune_zeta2: Option<bool>,
    /// Points in the ζ₂ scan.
    #[arg(long)]
    pub tune_points: Option<usize>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Highest Fock level compared.
    #[arg(long)]
    pub nmax: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagnusParams {
    #[serde(rename = "K")]
    pub k: usize,
    pub phi_target: f64,
    pub omega_b: f64,
    pub zeta2: f64,
    pub tune_zeta2: bool,
    pub tune_points: usize,
    pub cutoff: usize,
    pub nmax: usize,
}

impl Default for MagnusParams {
    fn default() -> Self {
        Self {
            k: 40,
            phi_target: FRAC_PI_2,
            omega_b: 1.0,
            zeta2: 0.0,
            tune_zeta2: false,
            tune_points: 16,
            cutoff: 18,
            nmax: 10,
        }
    }
}

impl Params for MagnusParams {}

pub fn run(cfg: &RunConfig, p: &MagnusParams, io: &Io) -> Result<()> {
    let mut spec = PulseSpec::new(p.omega_b, p.k, p.phi_target, p.cutoff).with_zeta2(p.zeta2);
    spec.validate()?;
    if p.tune_zeta2 {
        let (best, _) = tune_zeta2(&spec, p.nmax, p.tune_points)?;
        spec = spec.with_zeta2(best);
    }
    let (propagator, converged) = match propagate_bsb(&spec, true) {
        Ok(u) => (u.matrix, true),
        Err(CoreError::NotConverged(msg)) => {
            log::warn!("{msg}; using {MAX_STEPS_PER_PERIOD} steps per period");
            (propagate_bsb_with_steps(&spec, true, MAX_STEPS_PER_PERIOD)?, false)
        }
        Err(e) => return Err(e.into()),
    };
    let table = verify_conditional_number(&spec, &propagator, p.nmax)?;
    if let Some(path) = io.output.as_deref() {
        let rows = table.rows.iter().map(|r| {
            std::iter::once(r.n.to_string())
                .chain(r.ideal.iter().chain(&r.numeric).map(|&x| sig12(x)))
                .collect()
        });
        let header = [
            "n",
            "ideal_x",
            "ideal_y",
            "ideal_z",
            "numeric_x",
            "numeric_y",
            "numeric_z",
        ];
        output::write_table(output::open(Some(path))?, cfg.format_or(Format::Csv), &header, rows)?;
    }
    let fields = json!({
        "mse": table.mse,
        "distance": magnus_distance(&spec, &propagator, p.nmax),
        "converged": converged,
        "zeta2": spec.zeta2,
    });
    emit(io, &output::record(cfg, fields))
}

use clap::Args;
use modsensor_core::fisher::sql_baselines;
use modsensor_core::fock::char_function_numeric;
use modsensor_core::states::{effective_squeezing, modular_phase_variance};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{emit, prepare, DEFAULT_DELTA};
use crate::config::{Params, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{self, sig12};
use crate::values::{FamilyArg, Format, NpState, Sweep};
use crate::Io;

#[derive(Args, Debug, Default, Serialize)]
pub struct StateArgs {
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Grid squeezing Δ.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number-phase state: sine:N:λ:F, airy:N:λ:μ or flat:N:λ:kmax.
    #[arg(long)]
    pub np_spec: Option<NpState>,
    /// Fock cutoff (grid states grow it until the tail fits).
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Re β sweep lo:hi:n for a χ(β) table written to --output.
    #[arg(long)]
    pub chi_re: Option<Sweep>,
    /// Im β sweep lo:hi:n.
    #[arg(long)]
    pub chi_im: Option<Sweep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateParams {
    pub family: FamilyArg,
    pub delta: f64,
    pub np_spec: NpState,
    pub cutoff: Option<usize>,
    pub chi_re: Option<Sweep>,
    pub chi_im: Option<Sweep>,
}

impl Default for StateParams {
    fn default() -> Self {
        Self {
            family: FamilyArg::Grid,
            delta: DEFAULT_DELTA,
            np_spec: NpState::default(),
            cutoff: None,
            chi_re: None,
            chi_im: None,
        }
    }
}

impl Params for StateParams {}

const ORIGIN: Sweep = Sweep { lo: 0.0, hi: 0.0, n: 1 };

pub fn run(cfg: &RunConfig, p: &StateParams, io: &Io) -> Result<()> {
    let prepared = prepare(p.family, p.delta, &p.np_spec, p.cutoff)?;
    let psi = &prepared.state;
    let vis = prepared.vis;
    let mean_n = psi.mean_n();
    let fields = match p.family {
        FamilyArg::Grid => {
            let (dx, dp) = effective_squeezing(psi)?;
            json!({
                "family": p.family,
                "delta": p.delta,
                "cutoff": psi.cutoff(),
                "mean_n": mean_n,
                "delta_x": dx,
                "delta_p": dp,
                "eta_x": vis.eta_a,
                "eta_p": vis.eta_b,
                "eta_joint": vis.eta_joint,
            })
        }
        FamilyArg::Np => json!({
            "family": p.family,
            "np_spec": p.np_spec,
            "cutoff": psi.cutoff(),
            "mean_n": mean_n,
            "eta_phi": vis.eta_a,
            "eta_n": vis.eta_b,
            "phase_variance": modular_phase_variance(psi, p.np_spec.spacing),
            "sql_star": sql_baselines(prepared.family, mean_n)?.sql_star,
        }),
    };

    if p.chi_re.is_some() || p.chi_im.is_some() {
        let path = io
            .output
            .as_deref()
            .ok_or_else(|| CliError::input("--chi-re/--chi-im need --output for the χ table"))?;
        let mut rows = Vec::new();
        for re in p.chi_re.unwrap_or(ORIGIN).points() {
            for im in p.chi_im.unwrap_or(ORIGIN).points() {
                let chi = char_function_numeric(psi, Complex64::new(re, im))?;
                rows.push(vec![sig12(re), sig12(im), sig12(chi.re), sig12(chi.im)]);
            }
        }
        output::write_table(
            output::open(Some(path))?,
            cfg.format_or(Format::Csv),
            &["re_beta", "im_beta", "re_chi", "im_chi"],
            rows,
        )?;
    }
    emit(io, &output::record(cfg, fields))
}

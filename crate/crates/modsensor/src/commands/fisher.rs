use std::path::Path;

use clap::Args;
use modsensor_core::circuit::Family;
use modsensor_core::fisher::{fim_from_grid, gain_db, rescaled_np_trace, sql_baselines, ProbGrid};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::emit;
use crate::config::{Params, RunConfig};
use crate::error::{CliError, Result};
use crate::output;
use crate::values::FamilyArg;
use crate::Io;

#[derive(Args, Debug, Default, Serialize)]
pub struct FisherArgs {
    /// probgrid CSV with eps_a, eps_b, P_a0, P_b0 and n_shots columns.
    #[arg(long)]
    pub input: Option<String>,
    /// Family the grid was computed for; sets the SQL baseline.
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Mean phonon number of the probe (required for np).
    #[arg(long)]
    pub mean_n: Option<f64>,
    /// Report the dimensionless number-phase trace diag(2⟨n⟩, 1/(2⟨n⟩)) Σ.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub rescale_np: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FisherParams {
    pub input: String,
    pub family: FamilyArg,
    pub mean_n: Option<f64>,
    pub rescale_np: bool,
}

impl Params for FisherParams {
    fn validate(&self) -> Result<()> {
        if self.input.is_empty() {
            return Err(CliError::input("fisher needs --input"));
        }
        if self.family == FamilyArg::Np && self.mean_n.is_none() {
            return Err(CliError::input("the np family needs --mean-n"));
        }
        if self.rescale_np && self.family != FamilyArg::Np {
            return Err(CliError::input("--rescale-np applies to the np family only"));
        }
        Ok(())
    }
}

const COLUMNS: [&str; 5] = ["eps_a", "eps_b", "P_a0", "P_b0", "n_shots"];

/// Load a probgrid CSV; rows may come in any order but must fill the lattice.
pub fn read_grid(path: &Path) -> Result<ProbGrid> {
    let name = path.display();
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::input(format!("cannot read {name}: {e}")))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::input(format!("{name}: {e}")))?
        .clone();
    let mut index = [0; 5];
    for (slot, col) in index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == col)
            .ok_or_else(|| CliError::input(format!("{name}: missing column `{col}`")))?;
    }
    let mut rows: Vec<[f64; 5]> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::input(format!("{name}: {e}")))?;
        let mut row = [0.0; 5];
        for ((v, &i), col) in row.iter_mut().zip(&index).zip(COLUMNS) {
            *v = rec
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| CliError::input(format!("{name}: line {}: bad `{col}` value", k + 2)))?;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::input(format!("{name}: no data rows")));
    }
    let axis = |c: usize| {
        let mut v: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let (eps_a, eps_b) = (axis(0), axis(1));
    let nb = eps_b.len();
    if eps_a.len() * nb != rows.len() {
        return Err(CliError::input(format!(
            "{name}: {} rows do not fill a {}×{} lattice",
            rows.len(),
            eps_a.len(),
            nb
        )));
    }
    let shots = rows[0][4];
    if shots < 0.0 || shots.fract() != 0.0 || rows.iter().any(|r| r[4] != shots) {
        return Err(CliError::input(format!(
            "{name}: n_shots must be one non-negative integer for all rows"
        )));
    }
    let mut p_a0 = vec![f64::NAN; rows.len()];
    let mut p_b0 = vec![f64::NAN; rows.len()];
    for r in &rows {
        let find = |axis: &[f64], x: f64| {
            axis.binary_search_by(|v| v.total_cmp(&x))
                .expect("value is on its axis")
        };
        let k = find(&eps_a, r[0]) * nb + find(&eps_b, r[1]);
        if !p_a0[k].is_nan() {
            return Err(CliError::input(format!("{name}: duplicate cell ({}, {})", r[0], r[1])));
        }
        p_a0[k] = r[2];
        p_b0[k] = r[3];
    }
    let grid = ProbGrid {
        eps_a,
        eps_b,
        p_a0,
        p_b0,
        n_shots: shots as u64,
    };
    grid.validate()?;
    Ok(grid)
}

pub fn run(cfg: &RunConfig, p: &FisherParams, io: &Io) -> Result<()> {
    let grid = read_grid(Path::new(&p.input))?;
    let fim = fim_from_grid(&grid)?;
    // Only the family kind matters for the baselines.
    let family = match p.family {
        FamilyArg::Grid => Family::Grid,
        FamilyArg::Np => Family::Np { spacing: 2, offset: 0 },
    };
    let baselines = p.mean_n.map(|n| sql_baselines(family, n)).transpose()?;
    let sql_star = baselines.map_or(2.0, |b| b.sql_star);

    let (trace_min, argmin) = if p.rescale_np {
        let mean_n = p.mean_n.expect("validated");
        let nb = grid.eps_b.len();
        fim.cells
            .iter()
            .enumerate()
            .filter_map(|(k, c)| {
                c.sigma
                    .map(|s| (rescaled_np_trace(&s, mean_n), (grid.eps_a[k / nb], grid.eps_b[k % nb])))
            })
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .ok_or_else(|| CliError::input("no invertible cell to rescale"))?
    } else {
        (fim.trace_min, fim.argmin)
    };
    let fields = json!({
        "trace_min": trace_min,
        "argmin": [argmin.0, argmin.1],
        "uncertainty": fim.uncertainty,
        "gain_db": gain_db(trace_min, sql_star),
        "sql_star": sql_star,
        "lower_bound": baselines.map(|b| b.lower_bound),
        "excluded_cells": fim.excluded,
        "rescaled": p.rescale_np,
    });
    emit(io, &output::record(cfg, fields))
}

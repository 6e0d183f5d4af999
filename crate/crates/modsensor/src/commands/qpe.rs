use std::f64::consts::PI;

use clap::Args;
use modsensor_core::circuit::{conditional_stabilizer, Family, RoundOp, SignalPair, StabilizerKind};
use modsensor_core::estimation::{
    holevo_variance_paired, run_estimation, BitSource, ControlMode, DecayModel, EstimationConfig, EstimationRun,
};
use modsensor_core::fisher::gain_db;
use modsensor_core::rng::trial_stream;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{emit, prepare, visibilities, DEFAULT_DELTA};
use crate::config::{Params, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{self, sig12};
use crate::values::{FamilyArg, Format, ModeArg, NpState, Signals, SourceArg};
use crate::Io;

#[derive(Args, Debug, Default, Serialize)]
pub struct QpeArgs {
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub np_spec: Option<NpState>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Repetitions per trial.
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<usize>,
    /// Sequential rounds per repetition.
    #[arg(long = "NS")]
    #[serde(rename = "NS")]
    pub ns: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// `random` (uniform over one period) or `fixed:a,b`.
    #[arg(long)]
    pub signals: Option<Signals>,
    /// First-round visibility [default: the state's visibilities].
    #[arg(long)]
    pub eta0: Option<f64>,
    /// Visibility decay per half-round.
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QpeParams {
    pub family: FamilyArg,
    pub delta: f64,
    pub np_spec: NpState,
    pub cutoff: Option<usize>,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "NS")]
    pub ns: usize,
    pub mode: ModeArg,
    pub trials: usize,
    pub signals: Signals,
    pub eta0: Option<f64>,
    pub zeta: f64,
    pub source: SourceArg,
}

impl Default for QpeParams {
    fn default() -> Self {
        Self {
            family: FamilyArg::Grid,
            delta: DEFAULT_DELTA,
            np_spec: NpState::default(),
            cutoff: None,
            m: 128,
            ns: 1,
            mode: ModeArg::Nonadaptive,
            trials: 200,
            signals: Signals::Random,
            eta0: None,
            zeta: 0.0,
            source: SourceArg::Model,
        }
    }
}

impl Params for QpeParams {
    fn validate(&self) -> Result<()> {
        if self.trials < 2 {
            return Err(CliError::input("qpe needs at least 2 trials"));
        }
        if let (FamilyArg::Np, Signals::Fixed(_, n)) = (self.family, self.signals) {
            if n < 0.0 || n.fract() != 0.0 {
                return Err(CliError::input(format!(
                    "number-phase eps_n must be a non-negative integer, got {n}"
                )));
            }
        }
        Ok(())
    }
}

fn draw_signal<R: Rng + ?Sized>(family: Family, signals: Signals, rng: &mut R) -> SignalPair {
    match (family, signals) {
        (Family::Grid, Signals::Fixed(a, b)) => SignalPair::Grid { eps_x: a, eps_p: b },
        (Family::Np { .. }, Signals::Fixed(a, b)) => SignalPair::Np {
            eps_phi: a,
            eps_n: b as usize,
        },
        (Family::Grid, Signals::Random) => {
            let half = modsensor_core::GRID_LENGTH / 2.0;
            SignalPair::Grid {
                eps_x: rng.gen_range(-half..half),
                eps_p: rng.gen_range(-half..half),
            }
        }
        (Family::Np { spacing, .. }, Signals::Random) => {
            let half = PI / spacing as f64;
            SignalPair::Np {
                eps_phi: rng.gen_range(-half..half),
                eps_n: rng.gen_range(0..spacing),
            }
        }
    }
}

fn bit_source(p: &QpeParams) -> Result<(BitSource, DecayModel)> {
    let decay = |vis| match p.eta0 {
        Some(eta0) => DecayModel::new(eta0, p.zeta),
        None => DecayModel::from_visibilities(&vis, p.zeta),
    };
    match p.source {
        SourceArg::Model => {
            let (family, vis) = match (p.eta0, p.family) {
                (Some(_), FamilyArg::Grid) => (Family::Grid, modsensor_core::states::VisibilitySet::IDEAL),
                (Some(_), FamilyArg::Np) => (p.np_spec.family(), modsensor_core::states::VisibilitySet::IDEAL),
                (None, f) => visibilities(f, p.delta, &p.np_spec, p.cutoff)?,
            };
            Ok((BitSource::Model { family }, decay(vis)))
        }
        SourceArg::Circuit => {
            let prepared = prepare(p.family, p.delta, &p.np_spec, p.cutoff)?;
            let c = prepared.state.cutoff();
            let (ka, kb) = match prepared.family {
                Family::Grid => (StabilizerKind::Sx, StabilizerKind::Sp),
                Family::Np { spacing, .. } => (
                    StabilizerKind::Sphi { l_phi: spacing },
                    StabilizerKind::Sn {
                        l_n: 2.0 * PI / spacing as f64,
                    },
                ),
            };
            let ops = (
                RoundOp::from(conditional_stabilizer(ka, c)?),
                RoundOp::from(conditional_stabilizer(kb, c)?),
            );
            let source = BitSource::Circuit {
                family: prepared.family,
                state: prepared.state,
                ops,
            };
            Ok((source, decay(prepared.vis)))
        }
    }
}

pub fn run(cfg: &RunConfig, p: &QpeParams, io: &Io) -> Result<()> {
    let (source, decay) = bit_source(p)?;
    let family = source.family();
    let config = EstimationConfig {
        repetitions: p.m,
        n_rounds: p.ns,
        mode: match p.mode {
            ModeArg::Adaptive => ControlMode::Adaptive,
            ModeArg::Nonadaptive => ControlMode::NonAdaptive,
        },
        decay,
    };
    config.validate()?;

    let trial = |i: usize| -> Result<(SignalPair, EstimationRun)> {
        let mut rng = trial_stream(cfg.seed, i as u64);
        let signal = draw_signal(family, p.signals, &mut rng);
        Ok((signal, run_estimation(&source, &signal, &config, &mut rng)?))
    };
    let runs: Vec<(SignalPair, EstimationRun)> =
        crate::thread_pool()?.install(|| (0..p.trials).into_par_iter().map(trial).collect::<Result<_>>())?;

    let rows = runs.iter().enumerate().map(|(i, (signal, run))| {
        vec![
            i.to_string(),
            sig12(signal.a()),
            sig12(signal.b()),
            sig12(run.est_a),
            sig12(run.est_b),
            run.record.bits.len().to_string(),
        ]
    });
    let header = ["trial", "signal_a", "signal_b", "estimate_a", "estimate_b", "bits_used"];
    output::write_table(
        output::open(io.output.as_deref())?,
        cfg.format_or(Format::Json),
        &header,
        rows,
    )?;

    let (la, lb) = family.lengths();
    let column = |f: fn(&(SignalPair, EstimationRun)) -> f64| runs.iter().map(f).collect::<Vec<f64>>();
    let v_a = holevo_variance_paired(&column(|r| r.1.est_a), &column(|r| r.0.a()), la)?;
    let v_b = holevo_variance_paired(&column(|r| r.1.est_b), &column(|r| r.0.b()), lb)?;
    let total = v_a + v_b;
    let sql_star = 2.0 / p.m as f64;
    let fields = json!({
        "V_H_a": v_a,
        "V_H_b": v_b,
        "V_H_total": total,
        "sql_star": sql_star,
        "gain_db": gain_db(total, sql_star),
    });
    emit(io, &output::record(cfg, fields))
}

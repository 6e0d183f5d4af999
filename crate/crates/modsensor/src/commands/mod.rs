//! One module per subcommand: clap flags, the resolved parameter record and
//! the run itself.

use std::io::Write as _;

use modsensor_core::circuit::Family;
use modsensor_core::fock::StateVector;
use modsensor_core::states::{self, GridSpec, VisibilitySet};
use serde_json::Value;

use crate::error::Result;
use crate::output;
use crate::values::{FamilyArg, NpState};
use crate::Io;

pub mod fisher;
pub mod force;
pub mod magnus;
pub mod probgrid;
pub mod qpe;
pub mod replay;
pub mod state;

pub const DEFAULT_DELTA: f64 = 0.37;

/// Write the run record to `--summary`, or stdout.
pub(crate) fn emit(io: &Io, record: &Value) -> Result<()> {
    let mut w = output::open(io.summary.as_deref())?;
    output::write_json_line(&mut *w, record)?;
    w.flush().map_err(output::io_error)
}

pub(crate) fn grid_spec(delta: f64, cutoff: Option<usize>) -> Result<GridSpec> {
    let spec = match cutoff {
        Some(c) => GridSpec::new(delta).with_cutoff(c),
        None => GridSpec::new(delta),
    };
    spec.validate()?;
    Ok(spec)
}

/// A built sensing state with its family and visibilities.
pub(crate) struct Prepared {
    pub family: Family,
    pub state: StateVector,
    pub vis: VisibilitySet,
}

pub(crate) fn prepare(family: FamilyArg, delta: f64, np: &NpState, cutoff: Option<usize>) -> Result<Prepared> {
    match family {
        FamilyArg::Grid => {
            let state = states::make_grid_state(&grid_spec(delta, cutoff)?)?;
            let vis = states::grid_visibility(&state)?;
            Ok(Prepared {
                family: Family::Grid,
                state,
                vis,
            })
        }
        FamilyArg::Np => {
            let spec = np.spec(cutoff);
            let state = states::make_np_state(&spec)?;
            let vis = states::np_visibility(&state, &spec);
            Ok(Prepared {
                family: np.family(),
                state,
                vis,
            })
        }
    }
}

/// Visibilities without building a grid state (closed form); NP states are
/// cheap to build.
pub(crate) fn visibilities(
    family: FamilyArg,
    delta: f64,
    np: &NpState,
    cutoff: Option<usize>,
) -> Result<(Family, VisibilitySet)> {
    match family {
        FamilyArg::Grid => Ok((
            Family::Grid,
            states::grid_visibility_analytic(&grid_spec(delta, cutoff)?)?,
        )),
        FamilyArg::Np => {
            let p = prepare(family, delta, np, cutoff)?;
            Ok((p.family, p.vis))
        }
    }
}

//! Flag and config value types that round-trip through strings, so a
//! config echo reproduces the exact run.

use std::fmt;
use std::str::FromStr;

use clap::ValueEnum;
use modsensor_core::circuit::Family;
use modsensor_core::fisher::linspace;
use modsensor_core::states::{Envelope, NpSpec};
use serde::{Deserialize, Serialize};

macro_rules! string_serde {
    ($t:ty) => {
        impl TryFrom<String> for $t {
            type Error = String;
            fn try_from(s: String) -> Result<Self, String> {
                s.parse()
            }
        }

        impl From<$t> for String {
            fn from(v: $t) -> String {
                v.to_string()
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    #[default]
    Grid,
    Np,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Adaptive,
    #[default]
    Nonadaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceArg {
    /// Sample the closed-form outcome model.
    #[default]
    Model,
    /// Simulate the state-vector circuit.
    Circuit,
}

/// Layout of tabular `--output` data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    /// One JSON object per row.
    Json,
}

/// Inclusive sweep `lo:hi:n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Sweep {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Sweep {
    /// 41 points over one period of a modular length `l`.
    pub fn period(l: f64) -> Self {
        let half = std::f64::consts::PI / l;
        Sweep {
            lo: -half,
            hi: half,
            n: 41,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.n)
    }
}

impl FromStr for Sweep {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts[..] else {
            return Err(format!("sweep `{s}` must look like lo:hi:n"));
        };
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number `{x}` in sweep `{s}`"))
        };
        let (lo, hi) = (num(lo)?, num(hi)?);
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| format!("bad point count `{n}` in sweep `{s}`"))?;
        if n == 0 || lo.is_nan() || hi.is_nan() || lo > hi || (n > 1 && lo == hi) {
            return Err(format!("sweep `{s}` needs lo < hi and n >= 1"));
        }
        Ok(Sweep { lo, hi, n })
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.n)
    }
}

string_serde!(Sweep);

/// Number-phase state `sine:N:λ:F`, `airy:N:λ:μ` or `flat:N:λ:kmax`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NpState {
    pub spacing: usize,
    pub offset: usize,
    pub envelope: Envelope,
}

impl NpState {
    pub fn family(&self) -> Family {
        Family::Np {
            spacing: self.spacing,
            offset: self.offset,
        }
    }

    /// Cutoff covering the envelope's support plus a margin.
    pub fn default_cutoff(&self) -> usize {
        match self.envelope {
            Envelope::Sine { fock_cutoff } => fock_cutoff + 2 * self.spacing + 8,
            Envelope::IdealFlat { kmax } => kmax * self.spacing + self.offset + 8,
            Envelope::Airy { .. } => 400,
        }
    }

    pub fn spec(&self, cutoff: Option<usize>) -> NpSpec {
        NpSpec {
            spacing: self.spacing,
            offset: self.offset,
            envelope: self.envelope,
            cutoff: cutoff.unwrap_or_else(|| self.default_cutoff()),
        }
    }
}

impl Default for NpState {
    fn default() -> Self {
        NpState {
            spacing: 4,
            offset: 2,
            envelope: Envelope::Sine { fock_cutoff: 18 },
        }
    }
}

impl FromStr for NpState {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [kind, n, lambda, shape] = parts[..] else {
            return Err(format!(
                "np spec `{s}` must look like sine:N:lambda:F, airy:N:lambda:mu or flat:N:lambda:kmax"
            ));
        };
        let int = |x: &str| {
            x.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad integer `{x}` in np spec `{s}`"))
        };
        let envelope = match kind {
            "sine" => Envelope::Sine {
                fock_cutoff: int(shape)?,
            },
            "flat" => Envelope::IdealFlat { kmax: int(shape)? },
            "airy" => Envelope::Airy {
                mu: shape
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad mu `{shape}` in np spec `{s}`"))?,
            },
            other => return Err(format!("unknown envelope `{other}` (use sine, airy or flat)")),
        };
        Ok(NpState {
            spacing: int(n)?,
            offset: int(lambda)?,
            envelope,
        })
    }
}

impl fmt::Display for NpState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (n, l) = (self.spacing, self.offset);
        match self.envelope {
            Envelope::Sine { fock_cutoff } => write!(f, "sine:{n}:{l}:{fock_cutoff}"),
            Envelope::IdealFlat { kmax } => write!(f, "flat:{n}:{l}:{kmax}"),
            Envelope::Airy { mu } => write!(f, "airy:{n}:{l}:{mu}"),
        }
    }
}

string_serde!(NpState);

/// `random` or `fixed:a,b`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Signals {
    #[default]
    Random,
    Fixed(f64, f64),
}

impl FromStr for Signals {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "random" {
            return Ok(Signals::Random);
        }
        let pair = s
            .strip_prefix("fixed:")
            .ok_or_else(|| format!("signals `{s}` must be `random` or `fixed:a,b`"))?;
        let (a, b) = pair
            .split_once(',')
            .ok_or_else(|| format!("signals `{s}` must be `fixed:a,b`"))?;
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number `{x}` in signals `{s}`"))
        };
        Ok(Signals::Fixed(num(a)?, num(b)?))
    }
}

impl fmt::Display for Signals {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Signals::Random => write!(f, "random"),
            Signals::Fixed(a, b) => write!(f, "fixed:{a},{b}"),
        }
    }
}

string_serde!(Signals);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_round_trip() {
        for s in ["-1.25:1.25:41", "0:0.5:3"] {
            assert_eq!(s.parse::<Sweep>().unwrap().to_string(), s);
        }
        for s in ["sine:4:2:18", "airy:3:0:0.25", "flat:5:1:7"] {
            assert_eq!(s.parse::<NpState>().unwrap().to_string(), s);
        }
        for s in ["random", "fixed:0.1,-0.2"] {
            assert_eq!(s.parse::<Signals>().unwrap().to_string(), s);
        }
        let third = Sweep {
            lo: 1.0 / 3.0,
            hi: 1.0,
            n: 2,
        };
        assert_eq!(third.to_string().parse::<Sweep>().unwrap(), third);
    }

    #[test]
    fn rejects_malformed_values() {
        assert!("1:0:5".parse::<Sweep>().is_err());
        assert!("0:1".parse::<Sweep>().is_err());
        assert!("0:1:0".parse::<Sweep>().is_err());
        assert!("cosine:4:2:18".parse::<NpState>().is_err());
        assert!("fixed:0.1".parse::<Signals>().is_err());
    }
}

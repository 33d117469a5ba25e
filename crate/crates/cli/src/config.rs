use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use ppls_core::fixedpoint::ScalePlan;
use ppls_core::protocol::{Bounds, ExactRational, PartyConfig, Theta0, DEFAULT_KAPPA};
use ppls_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Role {
    Bob,
    Alice,
    Local,
    Oracle,
    Bench,
}

#[derive(Debug, Parser)]
#[command(name = "ppls", version, about = "Two-party private linear least squares by encrypted gradient descent")]
pub struct Args {
    #[arg(long, value_enum)]
    pub role: Role,
    /// Headerless CSV, label in the last column. For bob and alice this is
    /// the party's own partition; otherwise the full dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Rows of the full dataset that go to Bob (local, oracle, bench).
    /// Defaults to half, rounded up.
    #[arg(long)]
    pub split: Option<usize>,
    #[arg(long, conflicts_with = "connect")]
    pub listen: Option<String>,
    #[arg(long)]
    pub connect: Option<String>,
    #[arg(long, default_value = "0.1")]
    pub alpha: String,
    #[arg(long, default_value_t = 100)]
    pub iters: u32,
    #[arg(long, default_value_t = 6)]
    pub s1: u32,
    #[arg(long, default_value_t = 6)]
    pub s2: u32,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    pub kappa: u32,
    #[arg(long, default_value_t = 2048)]
    pub keybits: u32,
    /// `zero` or comma-separated decimals, one per feature.
    #[arg(long, default_value = "zero")]
    pub theta0: String,
    #[arg(long, default_value = "1")]
    pub bound_x: String,
    #[arg(long, default_value = "10")]
    pub bound_y: String,
    #[arg(long, default_value = "100")]
    pub bound_theta: String,
    /// Where to write θ, one coefficient per line. Standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the key=value run report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Oracle only: per-iteration θ and relative error as CSV.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Oracle only: comma-separated scales; runs with s1=s2=s for each and
    /// prints `scale,relative_error` rows.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Bench only: repetitions per microbenchmarked operation.
    #[arg(long, default_value_t = 20)]
    pub bench_reps: u32,
    /// Receive timeout in seconds.
    #[arg(long, default_value_t = 300)]
    pub timeout: u64,
    /// Fixes every random choice. Debug builds only.
    #[cfg(debug_assertions)]
    #[arg(long)]
    pub seed: Option<u64>,
}

fn decimal(what: &str, text: &str) -> Result<ExactRational> {
    ExactRational::parse_decimal(text.trim())
        .map_err(|e| Error::InvalidParameter(format!("--{what} {text:?}: {e}")))
}

impl Args {
    pub fn party_config(&self) -> Result<PartyConfig> {
        self.party_config_at(self.s1, self.s2)
    }

    pub fn party_config_at(&self, s1: u32, s2: u32) -> Result<PartyConfig> {
        let theta0 = match self.theta0.trim() {
            "zero" | "0" => Theta0::Zero,
            list => Theta0::Values(list.split(',').map(|v| decimal("theta0", v)).collect::<Result<_>>()?),
        };
        Ok(PartyConfig {
            alpha: decimal("alpha", &self.alpha)?,
            iterations: self.iters,
            scale_plan: ScalePlan::new(s1, s2),
            kappa: self.kappa,
            keybits: self.keybits,
            theta0,
            bounds: Bounds {
                x: decimal("bound-x", &self.bound_x)?,
                y: decimal("bound-y", &self.bound_y)?,
                theta: decimal("bound-theta", &self.bound_theta)?,
            },
        })
    }

    /// Seed for one party. The two parties get distinct streams from one
    /// operator seed so that TCP and local runs with the same seed match.
    pub fn party_seed(&self, bob: bool) -> Option<u64> {
        #[cfg(debug_assertions)]
        {
            self.seed.map(|s| if bob { s } else { s ^ 0xa11c_e000_0000_0001 })
        }
        #[cfg(not(debug_assertions))]
        {
            let _ = bob;
            None
        }
    }

    pub fn sweep_scales(&self) -> Result<Option<Vec<u32>>> {
        self.sweep
            .as_ref()
            .map(|list| {
                list.split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| Error::InvalidParameter(format!("--sweep entry {s:?} is not a scale")))
                    })
                    .collect()
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(extra: &[&str]) -> Args {
        let mut argv = vec!["ppls", "--role", "local", "--data", "x.csv"];
        argv.extend(extra);
        Args::parse_from(argv)
    }

    #[test]
    fn defaults_and_exact_decimals() {
        let cfg = args(&[]).party_config().unwrap();
        assert_eq!(cfg.alpha, ExactRational::new(1.into(), 10.into()).unwrap());
        assert_eq!((cfg.scale_plan.s1(), cfg.scale_plan.s2(), cfg.kappa, cfg.keybits), (6, 6, 40, 2048));
        assert_eq!(cfg.theta0, Theta0::Zero);
    }

    #[test]
    fn theta0_list_and_errors() {
        let cfg = args(&["--theta0", "0.5,-1.25"]).party_config().unwrap();
        let Theta0::Values(v) = cfg.theta0 else { panic!("expected values") };
        assert_eq!(v[1], ExactRational::parse_decimal("-1.25").unwrap());
        assert!(matches!(args(&["--theta0", "1,x"]).party_config(), Err(Error::InvalidParameter(_))));
        assert!(matches!(args(&["--sweep", "4,z"]).sweep_scales(), Err(Error::InvalidParameter(_))));
        assert_eq!(args(&["--sweep", "4, 6"]).sweep_scales().unwrap(), Some(vec![4, 6]));
    }
}

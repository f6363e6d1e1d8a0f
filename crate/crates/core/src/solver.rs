//! Uniform dispatch over the rotation solvers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::{gn_solve, GnConfig};
use crate::error::{invalid, Error, Result};
use crate::model::{Estimate, Precomputed};
use crate::scalar::Real;
use crate::scf::{scf_solve, ScfConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Scf,
    Gn,
    Lm,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Scf => "scf",
            Solver::Gn => "gn",
            Solver::Lm => "lm",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scf" => Ok(Solver::Scf),
            "gn" | "gauss-newton" => Ok(Solver::Gn),
            "lm" | "levenberg-marquardt" => Ok(Solver::Lm),
            other => Err(invalid(format!("unknown solver '{other}' (expected scf, gn, lm)"))),
        }
    }
}

/// Settings for every solver. The SCF initial guess is also the starting
/// rotation of the local baselines, so all solvers see the same start.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig<T: Real> {
    pub scf: ScfConfig<T>,
    pub gn: GnConfig<T>,
    pub lm: GnConfig<T>,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            scf: ScfConfig::default(),
            gn: GnConfig::gauss_newton(),
            lm: GnConfig::levenberg_marquardt(),
        }
    }
}

pub fn solve<T: Real>(pre: &Precomputed<T>, solver: Solver, cfg: &SolverConfig<T>) -> Result<Estimate<T>> {
    match solver {
        Solver::Scf => scf_solve(pre, &cfg.scf).map(|(est, _)| est),
        Solver::Gn | Solver::Lm => {
            cfg.scf.validate()?;
            let gn = if solver == Solver::Gn { &cfg.gn } else { &cfg.lm };
            let r0 = cfg.scf.starts()[0].to_rotation_matrix();
            gn_solve(pre, &r0, gn)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_problem, rotation_angle_deg, Lcg};

    #[test]
    fn parses_names() {
        assert_eq!("SCF".parse::<Solver>().unwrap(), Solver::Scf);
        assert_eq!("lm".parse::<Solver>().unwrap(), Solver::Lm);
        assert!("newton".parse::<Solver>().is_err());
        for s in [Solver::Scf, Solver::Gn, Solver::Lm] {
            assert_eq!(s.to_string().parse::<Solver>().unwrap(), s);
        }
    }

    #[test]
    fn all_solvers_reach_noiseless_truth() {
        let mut rng = Lcg::new(81);
        let (problem, gt) = random_problem(&mut rng, 10, 4, 0.0, 0.0);
        let pre = Precomputed::new(&problem).unwrap();
        for s in [Solver::Scf, Solver::Gn, Solver::Lm] {
            let est = solve(&pre, s, &SolverConfig::default()).unwrap();
            if est.converged {
                assert!(rotation_angle_deg(est.r.matrix(), &gt.r) < 1e-5, "{s}");
            }
        }
    }
}

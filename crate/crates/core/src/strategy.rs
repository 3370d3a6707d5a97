//! Registry of interchangeable unit-modulus PS solvers.
//!
//! Both PS subproblems (transmit precoder, per-user combiner) accept any
//! solver implementing [`AnalogStrategy`]. Solvers register under a stable
//! name so experiment specs and the CLI can select them at runtime:
//! `"coordinate_descent"` for the element-wise closed-form sweeps and
//! `"rcg"` for the Riemannian conjugate gradient. Robust (phase-error
//! averaged) behavior is orthogonal and driven by the moments argument.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analog::{
    cd_sweep_rx, cd_sweep_tx, AnalogOpts, AnalogRunInfo, PhaseErrorMoments, RxCombinerWorkspace,
    TxPhaseWorkspace,
};
use crate::error::Error;
use crate::linalg::{CMat, CVec};
use crate::manifold::{rcg_optimize, RcgOptions, RxRcgObjective, TxRcgObjective};

pub trait AnalogStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Optimize the transmit PS vector in place.
    fn optimize_tx(
        &self,
        ws: &TxPhaseWorkspace,
        v_ps: &mut CVec,
        moments: Option<PhaseErrorMoments>,
        opts: &AnalogOpts,
    ) -> AnalogRunInfo;

    /// Optimize one user's RF combiner in place.
    fn optimize_rx(
        &self,
        ws: &RxCombinerWorkspace,
        u_rf: &mut CMat,
        moments: Option<PhaseErrorMoments>,
        opts: &AnalogOpts,
    ) -> AnalogRunInfo;
}

pub struct CoordinateDescentStrategy;

impl AnalogStrategy for CoordinateDescentStrategy {
    fn name(&self) -> &'static str {
        "coordinate_descent"
    }

    fn optimize_tx(
        &self,
        ws: &TxPhaseWorkspace,
        v_ps: &mut CVec,
        moments: Option<PhaseErrorMoments>,
        opts: &AnalogOpts,
    ) -> AnalogRunInfo {
        cd_sweep_tx(ws, v_ps, moments, opts)
    }

    fn optimize_rx(
        &self,
        ws: &RxCombinerWorkspace,
        u_rf: &mut CMat,
        moments: Option<PhaseErrorMoments>,
        opts: &AnalogOpts,
    ) -> AnalogRunInfo {
        cd_sweep_rx(ws, u_rf, moments, opts)
    }
}

pub struct RcgStrategy;

impl RcgStrategy {
    fn rcg_opts(opts: &AnalogOpts) -> RcgOptions {
        RcgOptions { tol: opts.rcg_tol, max_iters: opts.rcg_max_iters, ..Default::default() }
    }
}

impl AnalogStrategy for RcgStrategy {
    fn name(&self) -> &'static str {
        "rcg"
    }

    fn optimize_tx(
        &self,
        ws: &TxPhaseWorkspace,
        v_ps: &mut CVec,
        moments: Option<PhaseErrorMoments>,
        opts: &AnalogOpts,
    ) -> AnalogRunInfo {
        let obj = TxRcgObjective::new(ws, moments);
        let out = rcg_optimize(&obj, v_ps, &Self::rcg_opts(opts));
        *v_ps = out.point;
        AnalogRunInfo {
            objective: *out.f_trace.last().expect("trace starts nonempty"),
            iterations: out.iterations,
            converged: out.converged,
        }
    }

    fn optimize_rx(
        &self,
        ws: &RxCombinerWorkspace,
        u_rf: &mut CMat,
        moments: Option<PhaseErrorMoments>,
        opts: &AnalogOpts,
    ) -> AnalogRunInfo {
        let obj = RxRcgObjective::new(ws, (u_rf.nrows(), u_rf.ncols()), moments);
        let x0 = obj.pack(u_rf);
        let out = rcg_optimize(&obj, &x0, &Self::rcg_opts(opts));
        *u_rf = obj.unpack(&out.point);
        AnalogRunInfo {
            objective: *out.f_trace.last().expect("trace starts nonempty"),
            iterations: out.iterations,
            converged: out.converged,
        }
    }
}

/// All registered solvers.
pub fn registry() -> Vec<Box<dyn AnalogStrategy>> {
    vec![Box::new(CoordinateDescentStrategy), Box::new(RcgStrategy)]
}

/// Look a solver up by its registered name.
pub fn strategy_by_name(name: &str) -> Option<Box<dyn AnalogStrategy>> {
    registry().into_iter().find(|s| s.name() == name)
}

pub fn strategy_names() -> Vec<&'static str> {
    registry().iter().map(|s| s.name()).collect()
}

/// Serializable selector used in options and experiment specs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AnalogMethod {
    #[default]
    CoordinateDescent,
    Rcg,
}

impl AnalogMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnalogMethod::CoordinateDescent => "coordinate_descent",
            AnalogMethod::Rcg => "rcg",
        }
    }

    pub fn build(&self) -> Box<dyn AnalogStrategy> {
        strategy_by_name(self.as_str()).expect("every method variant is registered")
    }
}

impl FromStr for AnalogMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "coordinate_descent" => Ok(AnalogMethod::CoordinateDescent),
            "rcg" => Ok(AnalogMethod::Rcg),
            other => Err(Error::InvalidConfig(format!(
                "unknown analog method '{other}'; registered: {:?}",
                strategy_names()
            ))),
        }
    }
}

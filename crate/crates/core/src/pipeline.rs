//! Config-driven analyses shared by the command-line tool and the
//! validation suite.

use serde::Serialize;

use crate::config::{Config, RateSource};
use crate::error::{Error, Result};
use crate::model::{LtiWncs, NetworkTopology, ProtocolKind, TransmissionModel};
use crate::power::{
    c_tau, solve_problem2, stability_region, topology_from_powers, two_link_feasibility, ExpOutage,
    PowerSolution, StabilityConstant, StabilityRegion, TwoLinkReport,
};
use crate::protocols::{rr_constants, rr_eta};
use crate::sim::{default_dt, LtiDynamics, SimConfig};
use crate::stability::{analyze_lti_rates, norm_abs_a22, x_subsystem_gain, GainMode, LtiRateReport};

pub const DEFAULT_DELTA: f64 = 1e-6;
pub const DEFAULT_POWER_GRID: usize = 200;

/// Rate analysis of the configured loop and network.
pub fn rate_report(cfg: &Config, tol: f64) -> Result<LtiRateReport> {
    let wncs = cfg.wncs()?;
    let topology = cfg.topology()?;
    let constants = rr_constants(&topology)?;
    let l1 = cfg
        .analysis
        .l1
        .unwrap_or_else(|| (topology.node_count() as f64).sqrt());
    analyze_lti_rates(&wncs, &topology.cumulative_successes(), &constants, l1, tol)
}

/// Minimum stabilising rate for the configured protocol.
pub fn omega_star(report: &LtiRateReport, protocol: ProtocolKind) -> f64 {
    match protocol {
        ProtocolKind::RoundRobin => report.deterministic.omega_star,
        ProtocolKind::StochasticUniform => report.stochastic.omega_star,
    }
}

/// Ingredients of the stability constant and the constant itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantReport {
    pub gamma: Option<f64>,
    pub l: Option<f64>,
    pub gamma_plus_l: f64,
    pub eta: f64,
    pub tau_bar: f64,
    pub delta: f64,
    /// Set when the config overrides the constant.
    pub overridden: bool,
    pub constant: StabilityConstant,
}

/// `(γ, L)` of the deterministic condition for a loop split into `nodes`
/// round-robin nodes with `a1 = 1`.
pub fn gamma_and_l(wncs: &LtiWncs, nodes: usize, l1: Option<f64>, tol: f64) -> Result<(f64, f64)> {
    let l1 = l1.unwrap_or_else(|| (nodes as f64).sqrt());
    let gamma = x_subsystem_gain(wncs, GainMode::Deterministic { a1: 1.0, l1 }, tol)?;
    Ok((gamma, l1 * norm_abs_a22(wncs)?))
}

pub fn stability_constant(cfg: &Config, delta: Option<f64>, tol: f64) -> Result<ConstantReport> {
    let power = cfg.power.clone().unwrap_or_default();
    let channel = cfg.channel()?;
    let delta = delta.or(power.delta).unwrap_or(DEFAULT_DELTA);
    let eta = power.eta.unwrap_or_else(|| rr_eta(channel.nodes.len()));
    let tau_bar = match power.tau_bar {
        Some(t) => t,
        None => cfg.transmission()?.mean_interval(),
    };
    let (gamma, l, gamma_plus_l) = match power.gamma_plus_l {
        Some(v) => (None, None, v),
        None => {
            let (g, l) = gamma_and_l(&cfg.wncs()?, channel.nodes.len(), cfg.analysis.l1, tol)?;
            (Some(g), Some(l), g + l)
        }
    };
    let (constant, overridden) = match power.c_tau {
        Some(v) => (StabilityConstant::from_value(v, channel.a)?, true),
        None => (c_tau(tau_bar, gamma_plus_l, eta, delta, channel.a)?, false),
    };
    Ok(ConstantReport {
        gamma,
        l,
        gamma_plus_l,
        eta,
        tau_bar,
        delta,
        overridden,
        constant,
    })
}

/// Minimum-power design for every channel node.
pub fn power_lp(cfg: &Config, grid: Option<usize>, delta: Option<f64>, tol: f64) -> Result<(ConstantReport, Vec<PowerSolution>)> {
    let c = stability_constant(cfg, delta, tol)?;
    let channel = cfg.channel()?;
    let grid = grid
        .or(cfg.power.as_ref().and_then(|p| p.grid))
        .unwrap_or(DEFAULT_POWER_GRID);
    let sols = channel
        .nodes
        .iter()
        .map(|node| solve_problem2(node, &c.constant, channel.p_max, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok((c, sols))
}

fn single_node_channel(cfg: &Config) -> Result<crate::model::NodeChannel> {
    let channel = cfg.channel()?;
    if channel.nodes.len() != 1 || channel.nodes[0].links() != 2 {
        return Err(Error::Config("two-link analysis needs one channel node with two links".into()));
    }
    Ok(channel.nodes[0].clone())
}

pub fn two_link(cfg: &Config, delta: Option<f64>, tol: f64) -> Result<(ConstantReport, TwoLinkReport)> {
    let c = stability_constant(cfg, delta, tol)?;
    let channel = cfg.channel()?;
    let node = single_node_channel(cfg)?;
    let report = two_link_feasibility(
        &node,
        c.tau_bar,
        c.gamma_plus_l,
        c.eta,
        c.delta,
        channel.a,
        channel.p_max,
        c.overridden.then_some(c.constant.c_tau),
    )?;
    Ok((c, report))
}

pub fn region(cfg: &Config, grid: Option<usize>, delta: Option<f64>, tol: f64) -> Result<StabilityRegion> {
    let c = stability_constant(cfg, delta, tol)?;
    let node = single_node_channel(cfg)?;
    let spec = cfg
        .power
        .as_ref()
        .and_then(|p| p.region.clone())
        .ok_or_else(|| Error::Config("missing `power.region` section".into()))?;
    stability_region(&node, &c.constant, spec.p1, spec.p2, grid.unwrap_or(spec.resolution))
}

/// Configured network, or the one induced by the designed powers when the
/// config has a channel but no network.
pub fn resolve_topology(cfg: &Config, tol: f64) -> Result<NetworkTopology> {
    if cfg.has_network() {
        return cfg.topology();
    }
    let channel = cfg.channel()?;
    let (_, sols) = power_lp(cfg, None, None, tol)?;
    let powers: Vec<Vec<f64>> = sols.into_iter().map(|s| s.powers).collect();
    topology_from_powers(&channel, &powers, &ExpOutage { a: channel.a })
}

/// Everything a Monte Carlo run needs.
pub struct SimSetup {
    pub wncs: LtiWncs,
    pub dynamics: LtiDynamics,
    pub topology: NetworkTopology,
    pub sim: SimConfig,
    pub x0: Vec<f64>,
    pub e0: Vec<f64>,
    pub trials: usize,
    pub fixed_dt: bool,
}

impl SimSetup {
    /// Same setup at another arrival rate; the step is re-derived unless the
    /// config fixed it.
    pub fn with_rate(&self, rate: f64) -> Result<Self> {
        let transmission = TransmissionModel::new(rate)?;
        let dt = if self.fixed_dt {
            self.sim.dt
        } else {
            default_dt(&self.wncs, &transmission)?
        };
        Ok(Self {
            wncs: self.wncs.clone(),
            dynamics: LtiDynamics::new(&self.wncs),
            topology: self.topology.clone(),
            sim: SimConfig {
                transmission,
                dt,
                ..self.sim.clone()
            },
            x0: self.x0.clone(),
            e0: self.e0.clone(),
            trials: self.trials,
            fixed_dt: self.fixed_dt,
        })
    }
}

pub const DEFAULT_TRIALS: usize = 500;
pub const DEFAULT_GRID_POINTS: usize = 101;

pub fn sim_setup(cfg: &Config, tol: f64) -> Result<SimSetup> {
    let s = cfg
        .simulation
        .as_ref()
        .ok_or_else(|| Error::Config("missing `simulation` section".into()))?;
    let wncs = cfg.wncs()?;
    let topology = resolve_topology(cfg, tol)?;
    let base = match s.rate_source {
        RateSource::Transmission => cfg.transmission()?.rate(),
        RateSource::OmegaStar => omega_star(&rate_report(cfg, tol)?, cfg.protocol()),
    };
    let transmission = TransmissionModel::new(base * s.rate_scale.unwrap_or(1.0))?;
    let dt = match s.dt {
        Some(dt) => dt,
        None => default_dt(&wncs, &transmission)?,
    };
    let e0 = s.e0.clone().unwrap_or_else(|| vec![0.0; wncs.n_e()]);
    Ok(SimSetup {
        dynamics: LtiDynamics::new(&wncs),
        sim: SimConfig {
            protocol: cfg.protocol(),
            transmission,
            horizon: s.horizon,
            dt,
            grid_points: s.grid_points.unwrap_or(DEFAULT_GRID_POINTS),
            record_jumps: false,
        },
        wncs,
        topology,
        x0: s.x0.clone(),
        e0,
        trials: s.trials.unwrap_or(DEFAULT_TRIALS),
        fixed_dt: s.dt.is_some(),
    })
}

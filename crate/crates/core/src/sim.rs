//! Monte Carlo simulation of the networked loop as a stochastic hybrid
//! system: RK4 flow between Poisson arrivals, protocol-scheduled resets of
//! the error at each arrival.

use nalgebra::DVector;
use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{LtiWncs, Matrix, NetworkTopology, ProtocolKind, TransmissionModel};
use crate::numerics::{sample_exponential, spectral_norm, stream_rng, Rk4};
use crate::protocols::sample_jump_matrix;

/// Flow of the stacked state `(x, e)`. Implementations must be pure so
/// trials can run in parallel.
pub trait Dynamics: Sync {
    fn n_x(&self) -> usize;
    fn n_e(&self) -> usize;
    fn flow(&self, t: f64, state: &DVector<f64>, out: &mut DVector<f64>);
}

pub type Disturbance = Box<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Linear flows `ẋ = A11 x + A12 e + E1 w`, `ė = A21 x + A22 e + E2 w`.
pub struct LtiDynamics {
    flow: Matrix,
    dist: Matrix,
    n_x: usize,
    n_e: usize,
    disturbance: Option<Disturbance>,
}

impl LtiDynamics {
    pub fn new(wncs: &LtiWncs) -> Self {
        Self {
            flow: wncs.flow_matrix(),
            dist: wncs.disturbance_matrix(),
            n_x: wncs.n_x(),
            n_e: wncs.n_e(),
            disturbance: None,
        }
    }

    /// Adds a disturbance signal `w(t)` (zero by default).
    pub fn with_disturbance(mut self, w: Disturbance) -> Self {
        self.disturbance = Some(w);
        self
    }
}

impl Dynamics for LtiDynamics {
    fn n_x(&self) -> usize {
        self.n_x
    }
    fn n_e(&self) -> usize {
        self.n_e
    }
    fn flow(&self, t: f64, state: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, &self.flow, state, 0.0);
        if let Some(w) = &self.disturbance {
            out.gemv(1.0, &self.dist, &w(t), 1.0);
        }
    }
}

/// User-supplied flow, for nonlinear plants.
pub struct FnDynamics<F> {
    pub n_x: usize,
    pub n_e: usize,
    pub f: F,
}

impl<F> Dynamics for FnDynamics<F>
where
    F: Fn(f64, &DVector<f64>, &mut DVector<f64>) + Sync,
{
    fn n_x(&self) -> usize {
        self.n_x
    }
    fn n_e(&self) -> usize {
        self.n_e
    }
    fn flow(&self, t: f64, state: &DVector<f64>, out: &mut DVector<f64>) {
        (self.f)(t, state, out)
    }
}

/// Default integration step `min(τ̄/20, 0.05/‖A11‖)`.
pub fn default_dt(wncs: &LtiWncs, transmission: &TransmissionModel) -> Result<f64> {
    let norm = spectral_norm(&wncs.a11)?;
    let tau = transmission.mean_interval() / 20.0;
    Ok(if norm > 0.0 { tau.min(0.05 / norm) } else { tau })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub protocol: ProtocolKind,
    pub transmission: TransmissionModel,
    pub horizon: f64,
    pub dt: f64,
    /// Number of equally spaced output samples over `[0, horizon]`.
    pub grid_points: usize,
    pub record_jumps: bool,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param(format!("horizon {} must be positive", self.horizon)));
        }
        let limit = self.transmission.mean_interval() / 20.0;
        if !(self.dt > 0.0 && self.dt <= limit * (1.0 + 1e-12)) {
            return Err(Error::param(format!(
                "dt = {} must lie in (0, tau_bar/20 = {limit}]",
                self.dt
            )));
        }
        if self.grid_points < 2 {
            return Err(Error::param("need at least two output samples"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_points - 1;
        (0..=n).map(|k| self.horizon * k as f64 / n as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpRecord {
    pub t: f64,
    /// 1-based transmission index.
    pub k: usize,
    pub node: usize,
    pub link_success: Vec<bool>,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub jumps: Vec<JumpRecord>,
    pub arrival_times: Vec<f64>,
    pub n_x: usize,
    /// Set when the state blew up; `times`/`states` stop at the last finite
    /// sample.
    pub divergent: bool,
}

const BLOWUP: f64 = 1e100;

/// Simulates one trajectory from `(x0, e0)` using RNG stream `(seed, stream)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate<D: Dynamics + ?Sized>(
    dynamics: &D,
    topology: &NetworkTopology,
    cfg: &SimConfig,
    x0: &[f64],
    e0: &[f64],
    seed: u64,
    stream: u64,
) -> Result<Trajectory> {
    cfg.validate()?;
    let (nx, ne) = (dynamics.n_x(), dynamics.n_e());
    if x0.len() != nx || e0.len() != ne || topology.n_e() != ne {
        return Err(Error::dim(format!(
            "initial state ({}, {}) and topology n_e {} for a system with n_x = {nx}, n_e = {ne}",
            x0.len(),
            e0.len(),
            topology.n_e()
        )));
    }
    let mut rng = stream_rng(seed, stream);
    let mut state = DVector::from_iterator(nx + ne, x0.iter().chain(e0).copied());
    let mut rk4 = Rk4::new(nx + ne);
    let rate = cfg.transmission.rate();

    let grid = cfg.grid();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![state.clone()],
        jumps: Vec::new(),
        arrival_times: Vec::new(),
        n_x: nx,
        divergent: false,
    };
    let mut next_grid = 1;
    let mut next_arrival = sample_exponential(&mut rng, rate)?;
    let mut k = 1usize;
    let mut t = 0.0;

    while next_grid < grid.len() {
        let target = grid[next_grid].min(next_arrival);
        let span = target - t;
        if span > 0.0 {
            let steps = (span / cfg.dt).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for s in 0..steps {
                let ok = rk4.step(|tt, y, dy| dynamics.flow(tt, y, dy), t + s as f64 * h, &mut state, h);
                if ok.is_err() || state.amax() > BLOWUP {
                    traj.divergent = true;
                    return Ok(traj);
                }
            }
        }
        t = target;
        if next_grid < grid.len() && t == grid[next_grid] {
            traj.times.push(t);
            traj.states.push(state.clone());
            next_grid += 1;
        }
        if t == next_arrival {
            let jump = sample_jump_matrix(&mut rng, cfg.protocol, topology, k)?;
            let pre = cfg.record_jumps.then(|| state.as_slice().to_vec());
            for (i, &d) in jump.diag.iter().enumerate() {
                if d == 0.0 {
                    state[nx + i] = 0.0;
                }
            }
            traj.arrival_times.push(t);
            if let Some(pre) = pre {
                traj.jumps.push(JumpRecord {
                    t,
                    k,
                    node: jump.node,
                    link_success: jump.link_success,
                    pre,
                    post: state.as_slice().to_vec(),
                });
            }
            k += 1;
            next_arrival = t + sample_exponential(&mut rng, rate)?;
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayEstimate {
    pub times: Vec<f64>,
    /// Mean of `|(x, e)(t)|` over non-divergent trials.
    pub mean_norm: Vec<f64>,
    pub q90: Vec<f64>,
    pub q99: Vec<f64>,
    /// Slope of `ln E|(x, e)(t)|` over the tail half of the horizon; negative
    /// values mean decay.
    pub c: f64,
    /// `exp(intercept) / |(x0, e0)|`, so that `E|(x,e)(t)| ≈ K e^{ct} |(x0,e0)|`.
    pub k: f64,
    pub fit_rms_residual: f64,
    /// 95% percentile-bootstrap interval for `c`, resampling trials.
    pub c_ci: (f64, f64),
    pub initial_norm: f64,
    pub final_ratio: f64,
    pub trials: usize,
    pub divergent: usize,
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Runs `trials` independent trajectories (trial `i` uses stream `i`) and
/// fits the exponential decay of the mean norm.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_decay<D: Dynamics + ?Sized>(
    dynamics: &D,
    topology: &NetworkTopology,
    cfg: &SimConfig,
    x0: &[f64],
    e0: &[f64],
    trials: usize,
    seed: u64,
) -> Result<DecayEstimate> {
    if trials < 2 {
        return Err(Error::param("need at least two trials"));
    }
    let cfg = SimConfig {
        record_jumps: false,
        ..cfg.clone()
    };
    let times = cfg.grid();
    let runs = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let tr = simulate(dynamics, topology, &cfg, x0, e0, seed, i)?;
            Ok((!tr.divergent).then(|| tr.states.iter().map(|s| s.norm()).collect::<Vec<f64>>()))
        })
        .collect::<Result<Vec<_>>>()?;
    let divergent = runs.iter().filter(|r| r.is_none()).count();
    let norms: Vec<Vec<f64>> = runs.into_iter().flatten().collect();
    let initial_norm = x0.iter().chain(e0).map(|v| v * v).sum::<f64>().sqrt();
    let g = times.len();
    if norms.is_empty() {
        return Ok(DecayEstimate {
            times,
            mean_norm: vec![f64::INFINITY; g],
            q90: vec![f64::INFINITY; g],
            q99: vec![f64::INFINITY; g],
            c: f64::INFINITY,
            k: f64::INFINITY,
            fit_rms_residual: f64::NAN,
            c_ci: (f64::INFINITY, f64::INFINITY),
            initial_norm,
            final_ratio: f64::INFINITY,
            trials,
            divergent,
        });
    }

    let mean_of = |idx: &mut dyn Iterator<Item = usize>, len: usize| -> Vec<f64> {
        let mut acc = vec![0.0; g];
        for i in idx {
            for (a, v) in acc.iter_mut().zip(&norms[i]) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / len as f64).collect()
    };
    let m = norms.len();
    let mean_norm = mean_of(&mut (0..m), m);
    let (q90, q99): (Vec<f64>, Vec<f64>) = (0..g)
        .map(|j| {
            let mut col: Vec<f64> = norms.iter().map(|n| n[j]).collect();
            col.sort_by(f64::total_cmp);
            (quantile(&col, 0.9), quantile(&col, 0.99))
        })
        .unzip();

    let tail: Vec<usize> = (0..g).filter(|&j| times[j] >= 0.5 * times[g - 1]).collect();
    let tx: Vec<f64> = tail.iter().map(|&j| times[j]).collect();
    let fit = |mean: &[f64]| {
        let ly: Vec<f64> = tail.iter().map(|&j| mean[j].max(f64::MIN_POSITIVE).ln()).collect();
        linear_fit(&tx, &ly)
    };
    let (c, intercept, rms) = fit(&mean_norm);

    let mut rng = stream_rng(seed ^ 0xB007_5712_u64, u64::MAX);
    let indices: Vec<usize> = (0..m).collect();
    let mut slopes: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let mut pick = (0..m).map(|_| *indices.choose(&mut rng).expect("nonempty"));
            fit(&mean_of(&mut pick, m)).0
        })
        .collect();
    slopes.sort_by(f64::total_cmp);

    Ok(DecayEstimate {
        final_ratio: mean_norm[g - 1] / initial_norm,
        times,
        q90,
        q99,
        c,
        k: intercept.exp() / initial_norm,
        fit_rms_residual: rms,
        c_ci: (quantile(&slopes, 0.025), quantile(&slopes, 0.975)),
        mean_norm,
        initial_norm,
        trials,
        divergent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolStats {
    pub jumps: usize,
    /// Fraction of transmissions granted to each node.
    pub grant_freq: Vec<f64>,
    /// Fraction of transmissions granted to each node with every link
    /// succeeding.
    pub success_freq: Vec<f64>,
    pub cover_times: Vec<u64>,
}

impl ProtocolStats {
    pub fn cover_mean(&self) -> f64 {
        self.cover_times.iter().sum::<u64>() as f64 / self.cover_times.len() as f64
    }

    pub fn cover_standard_error(&self) -> f64 {
        let n = self.cover_times.len() as f64;
        let m = self.cover_mean();
        let var = self
            .cover_times
            .iter()
            .map(|&t| (t as f64 - m).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    }

    /// Sample mean of `s^T` and its standard error.
    pub fn pgf_estimate(&self, s: f64) -> (f64, f64) {
        let vals: Vec<f64> = self.cover_times.iter().map(|&t| s.powi(t as i32)).collect();
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    /// `(T, count)` pairs in increasing `T`.
    pub fn histogram(&self) -> Vec<(u64, usize)> {
        let mut map = std::collections::BTreeMap::new();
        for &t in &self.cover_times {
            *map.entry(t).or_insert(0usize) += 1;
        }
        map.into_iter().collect()
    }
}

/// Draws transmissions until `cover_samples` cover times have completed (and
/// at least `min_jumps` transmissions were made). A cover time is the number
/// of transmissions until every node has delivered at least once; counting
/// restarts after each cover.
pub fn empirical_protocol_stats(
    topology: &NetworkTopology,
    protocol: ProtocolKind,
    cover_samples: usize,
    min_jumps: usize,
    seed: u64,
) -> Result<ProtocolStats> {
    let n = topology.node_count();
    let mut rng = stream_rng(seed, 0);
    let mut grants = vec![0usize; n];
    let mut successes = vec![0usize; n];
    let mut covered = vec![false; n];
    let mut n_covered = 0;
    let mut current = 0u64;
    let mut cover_times = Vec::with_capacity(cover_samples);
    let mut k = 0usize;
    while cover_times.len() < cover_samples || k < min_jumps {
        k += 1;
        let jump = sample_jump_matrix(&mut rng, protocol, topology, k)?;
        grants[jump.node] += 1;
        current += 1;
        if jump.node_succeeded() {
            successes[jump.node] += 1;
            if !covered[jump.node] {
                covered[jump.node] = true;
                n_covered += 1;
            }
        }
        if n_covered == n {
            if cover_times.len() < cover_samples {
                cover_times.push(current);
            }
            current = 0;
            n_covered = 0;
            covered.iter_mut().for_each(|c| *c = false);
        }
    }
    Ok(ProtocolStats {
        jumps: k,
        grant_freq: grants.iter().map(|&g| g as f64 / k as f64).collect(),
        success_freq: successes.iter().map(|&s| s as f64 / k as f64).collect(),
        cover_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_closed_loop, LtiController, LtiPlant};
    use nalgebra::dmatrix;

    fn scalar_loop() -> LtiWncs {
        let plant = LtiPlant::undisturbed(dmatrix![0.0], dmatrix![1.0], dmatrix![1.0]).unwrap();
        let ctrl = LtiController::new(dmatrix![-1.0], dmatrix![-1.0], dmatrix![1.0]).unwrap();
        build_closed_loop(&plant, &ctrl).unwrap()
    }

    fn cfg(rate: f64, horizon: f64) -> SimConfig {
        let transmission = TransmissionModel::new(rate).unwrap();
        SimConfig {
            protocol: ProtocolKind::RoundRobin,
            transmission,
            horizon,
            dt: transmission.mean_interval() / 20.0,
            grid_points: 11,
            record_jumps: true,
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let w = scalar_loop();
        let dynamics = LtiDynamics::new(&w);
        let topo = NetworkTopology::sequential(&[vec![0.7], vec![0.4]]).unwrap();
        let c = cfg(50.0, 2.0);
        let a = simulate(&dynamics, &topo, &c, &[1.0, 0.5], &[0.0, 0.0], 9, 3).unwrap();
        let b = simulate(&dynamics, &topo, &c, &[1.0, 0.5], &[0.0, 0.0], 9, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jumps_keep_x_and_reset_delivered_links() {
        let w = scalar_loop();
        let dynamics = LtiDynamics::new(&w);
        let topo = NetworkTopology::sequential(&[vec![0.7], vec![0.4]]).unwrap();
        let tr = simulate(&dynamics, &topo, &cfg(50.0, 2.0), &[1.0, 0.5], &[0.3, -0.2], 1, 0).unwrap();
        assert!(!tr.jumps.is_empty());
        for j in &tr.jumps {
            assert_eq!(j.pre[..2], j.post[..2]);
            let coord = 2 + j.node;
            let other = 2 + (1 - j.node);
            assert_eq!(j.post[other], j.pre[other]);
            if j.link_success[0] {
                assert_eq!(j.post[coord], 0.0);
            } else {
                assert_eq!(j.post[coord], j.pre[coord]);
            }
            assert_eq!(j.node, (j.k - 1) % 2);
        }
    }

    #[test]
    fn dt_precondition() {
        let w = scalar_loop();
        let topo = NetworkTopology::sequential(&[vec![1.0], vec![1.0]]).unwrap();
        let mut c = cfg(10.0, 1.0);
        c.dt = 0.1;
        assert!(simulate(&LtiDynamics::new(&w), &topo, &c, &[1.0, 0.0], &[0.0, 0.0], 0, 0).is_err());
    }

    #[test]
    fn decoupled_decay_rate() {
        // A12 = 0: the error never feeds back, so x decays at the eigenvalue.
        let w = LtiWncs {
            a11: dmatrix![-2.0],
            a12: dmatrix![0.0],
            a21: dmatrix![2.0],
            a22: dmatrix![0.0],
            e1: dmatrix![0.0],
            e2: dmatrix![0.0],
            output_map: dmatrix![-1.0],
            n_plant: 1,
            wiring: crate::model::LoopWiring::Full,
        };
        let topo = NetworkTopology::sequential(&[vec![1.0]]).unwrap();
        let mut c = cfg(200.0, 3.0);
        c.grid_points = 61;
        let est = monte_carlo_decay(&LtiDynamics::new(&w), &topo, &c, &[1.0], &[0.0], 100, 4).unwrap();
        assert!((est.c + 2.0).abs() < 0.2, "{}", est.c);
        assert!(est.c_ci.1 < 0.0);
        assert_eq!(est.divergent, 0);
    }

    #[test]
    fn grant_frequencies() {
        let topo = NetworkTopology::sequential(&[vec![0.3, 0.8], vec![0.75, 0.8]]).unwrap();
        let stats = empirical_protocol_stats(&topo, ProtocolKind::StochasticUniform, 10, 1_000_000, 2).unwrap();
        let sigma = (0.12f64 * 0.88 / stats.jumps as f64).sqrt();
        assert!((stats.success_freq[0] - 0.12).abs() < 3.0 * sigma, "{:?} {}", stats.success_freq, stats.jumps);
        let rr = empirical_protocol_stats(&topo, ProtocolKind::RoundRobin, 10, 1000, 2).unwrap();
        assert!((rr.grant_freq[0] - 0.5).abs() < 1e-3);
    }
}

//! Scheduling-protocol analytics: cover time of the stochastic protocol,
//! round-robin contraction constants, and the jump map shared with the
//! simulator.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{NetworkTopology, ProtocolKind};
use crate::numerics::{sample_bernoulli, sample_uniform_node};

fn check_probabilities(f: &[f64]) -> Result<()> {
    if f.is_empty() {
        return Err(Error::param("need at least one node probability"));
    }
    if f.contains(&0.0) {
        return Err(Error::InfiniteCover);
    }
    if let Some(bad) = f.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::param(format!("node probability {bad} outside (0, 1]")));
    }
    Ok(())
}

fn is_uniform(f: &[f64]) -> bool {
    f.iter().all(|&p| (p - f[0]).abs() <= 1e-12)
}

/// Closed-form mean cover time `Σ_n N / ((N - n + 1) f_n)`, in the node order
/// given.
///
/// The closed form ties the n-th probability to the n-th newly covered node,
/// so it is exact only for equal probabilities; otherwise it depends on the
/// labelling and a warning is logged.
pub fn expected_cover_time(f: &[f64]) -> Result<f64> {
    check_probabilities(f)?;
    static WARNED: std::sync::Once = std::sync::Once::new();
    if !is_uniform(f) {
        WARNED.call_once(|| {
            log::warn!(
            "cover-time closed form evaluated with unequal node probabilities {f:?}; \
             the value depends on node order"
            )
        });
    }
    let n = f.len() as f64;
    Ok(f
        .iter()
        .enumerate()
        .map(|(i, &fi)| n / ((n - i as f64) * fi))
        .sum())
}

/// Radius of the disc on which the cover-time pgf product converges.
pub fn pgf_domain_bound(f: &[f64]) -> Result<f64> {
    check_probabilities(f)?;
    let n = f.len() as f64;
    let m = f
        .iter()
        .enumerate()
        .map(|(i, &fi)| fi * (n - i as f64))
        .fold(f64::INFINITY, f64::min);
    let denom = 1.0 - m / n;
    Ok(if denom <= 0.0 { f64::INFINITY } else { 1.0 / denom })
}

/// Probability generating function `E{s^T}` of the cover time, as a product
/// of geometric pgfs.
pub fn cover_time_pgf(f: &[f64], s: f64) -> Result<f64> {
    let bound = pgf_domain_bound(f)?;
    if !(s.abs() < bound) {
        return Err(Error::Domain {
            what: "pgf argument |s|",
            value: s.abs(),
            bound,
        });
    }
    let n = f.len() as f64;
    Ok(f.iter()
        .enumerate()
        .map(|(i, &fi)| {
            let k = i as f64;
            s * (n - k) * fi / (n * (1.0 - (1.0 - fi) * s) - s * k * fi)
        })
        .product())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverStats {
    pub f: Vec<f64>,
    pub expected_cover: f64,
    pub pgf_domain: f64,
}

impl CoverStats {
    pub fn new(f: &[f64]) -> Result<Self> {
        Ok(Self {
            f: f.to_vec(),
            expected_cover: expected_cover_time(f)?,
            pgf_domain: pgf_domain_bound(f)?,
        })
    }

    pub fn pgf(&self, s: f64) -> Result<f64> {
        cover_time_pgf(&self.f, s)
    }
}

/// Contraction factor of one round-robin jump, `sqrt((N - 1) / N)`.
pub fn rr_eta(n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    ((n as f64 - 1.0) / n as f64).sqrt()
}

/// Lyapunov constants of a protocol that is UGES in expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct AsUgesConstants {
    pub a1: f64,
    pub a2: f64,
    pub eta: f64,
    pub kappa_bar: f64,
    /// `E{κ}` over one period; entry `i` belongs to the `(i + 1)`-th
    /// transmission of every period.
    pub period_kappas: Vec<f64>,
}

impl AsUgesConstants {
    /// `E{κ_k}` for the 1-based schedule index `k`.
    pub fn expected_kappa(&self, k: usize) -> f64 {
        let p = self.period_kappas.len();
        self.period_kappas[(k.max(1) - 1) % p]
    }

    pub fn period(&self) -> usize {
        self.period_kappas.len()
    }
}

/// Round-robin constants for cumulative node probabilities `f` in schedule
/// order.
pub fn rr_constants_from_probabilities(f: &[f64]) -> Result<AsUgesConstants> {
    check_probabilities(f)?;
    let eta = rr_eta(f.len());
    let period_kappas: Vec<f64> = f.iter().map(|&fi| fi * (eta - 1.0) + 1.0).collect();
    let f_min = f.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(AsUgesConstants {
        a1: 1.0,
        a2: (f.len() as f64).sqrt(),
        eta,
        kappa_bar: 1.0 - f_min * (1.0 - eta),
        period_kappas,
    })
}

pub fn rr_constants(topology: &NetworkTopology) -> Result<AsUgesConstants> {
    rr_constants_from_probabilities(&topology.cumulative_successes())
}

/// Smallest uniform `κ̄` with `P(k) η + 1 - P(k) ≤ κ̄` over the sequence.
pub fn lift_uges_to_as_uges(eta: f64, p_eta: &[f64]) -> Result<f64> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::param(format!("eta = {eta} outside [0, 1)")));
    }
    if p_eta.is_empty() {
        return Err(Error::param("empty success-probability sequence"));
    }
    if let Some(bad) = p_eta.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::param(format!("probability {bad} outside [0, 1]")));
    }
    let kappa_bar = p_eta
        .iter()
        .map(|&p| p * eta + 1.0 - p)
        .fold(f64::NEG_INFINITY, f64::max);
    if kappa_bar >= 1.0 {
        return Err(Error::NotAsUges { kappa_bar });
    }
    Ok(kappa_bar)
}

/// Realisation of one jump: the scheduled node, each of its links' outcome,
/// and the diagonal of the reset matrix over the error coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOutcome {
    pub node: usize,
    pub link_success: Vec<bool>,
    pub diag: Vec<f64>,
}

impl JumpOutcome {
    pub fn node_succeeded(&self) -> bool {
        self.link_success.iter().all(|&s| s)
    }

    pub fn matrix(&self) -> crate::model::Matrix {
        crate::model::Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag))
    }
}

/// Node scheduled at the 1-based transmission index `k` (round robin) or a
/// uniform draw (stochastic).
pub fn scheduled_node<R: Rng + ?Sized>(
    rng: &mut R,
    protocol: ProtocolKind,
    n_nodes: usize,
    k: usize,
) -> Result<usize> {
    match protocol {
        ProtocolKind::RoundRobin => {
            if k == 0 {
                return Err(Error::param("schedule index starts at 1"));
            }
            Ok((k - 1) % n_nodes)
        }
        ProtocolKind::StochasticUniform => sample_uniform_node(rng, n_nodes),
    }
}

/// Draws the reset matrix `Q(k)`: the scheduled node's successful links zero
/// their coordinates, everything else is kept.
pub fn sample_jump_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    protocol: ProtocolKind,
    topology: &NetworkTopology,
    k: usize,
) -> Result<JumpOutcome> {
    let node = scheduled_node(rng, protocol, topology.node_count(), k)?;
    let mut diag = vec![1.0; topology.n_e()];
    let links = &topology.nodes()[node].links;
    let mut link_success = Vec::with_capacity(links.len());
    for link in links {
        let ok = sample_bernoulli(rng, link.success)?;
        if ok {
            for &c in &link.coords {
                diag[c] = 0.0;
            }
        }
        link_success.push(ok);
    }
    Ok(JumpOutcome {
        node,
        link_success,
        diag,
    })
}

//! Transmit-power design: SINR and outage evaluation, the stability
//! constraints on powers, the LP family over the weight simplex, and the
//! closed forms for two links.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{BindingBound, Error, Result};
use crate::lpsolve::{solve, LpProblem, LpStatus};
use crate::model::{ChannelModel, Link, Matrix, NetworkTopology, Node, NodeChannel};
use crate::stability::periodic_series_sum;

/// Signal-to-interference-and-noise ratio at the receiver of link `i`.
pub fn sinr(i: usize, p: &[f64], ch: &NodeChannel) -> Result<f64> {
    let l = ch.links();
    if i >= l || p.len() != l {
        return Err(Error::dim(format!(
            "link {i} with {} powers on a {l}-link node",
            p.len()
        )));
    }
    let interference: f64 = (0..l)
        .filter(|&j| j != i)
        .map(|j| ch.gains[(j, i)] * p[j])
        .sum();
    Ok(ch.gains[(i, i)] * p[i] / (ch.noise[i] + interference))
}

pub fn sinr_all(p: &[f64], ch: &NodeChannel) -> Result<Vec<f64>> {
    (0..ch.links()).map(|i| sinr(i, p, ch)).collect()
}

/// Success probability of a link as a function of its SINR.
pub trait OutageModel {
    fn success(&self, sinr: f64) -> f64;
}

/// `Φ(s) = exp(-a / s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpOutage {
    pub a: f64,
}

impl OutageModel for ExpOutage {
    fn success(&self, sinr: f64) -> f64 {
        phi_outage(sinr, self.a)
    }
}

pub fn phi_outage(sinr: f64, a: f64) -> f64 {
    if sinr <= 0.0 {
        0.0
    } else {
        (-a / sinr).exp()
    }
}

/// Probability that every link of the node succeeds at powers `p`.
pub fn node_success<M: OutageModel>(p: &[f64], ch: &NodeChannel, model: &M) -> Result<f64> {
    Ok(sinr_all(p, ch)?.into_iter().map(|s| model.success(s)).product())
}

/// Deterministic-protocol stability LHS for powers of every node, with the
/// node probabilities induced by the outage model:
/// `γ τ̄ Σ_j (1/(1-Lτ̄))^j Π_{ι<j} E{κ_ι} / (1 - Lτ̄)`.
pub fn multi_node_stability_lhs<M: OutageModel>(
    powers: &[Vec<f64>],
    channel: &ChannelModel,
    model: &M,
    tau_bar: f64,
    gamma: f64,
    l: f64,
    eta: f64,
) -> Result<f64> {
    if powers.len() != channel.nodes.len() {
        return Err(Error::dim("one power vector per node is required"));
    }
    let shrink = 1.0 - l * tau_bar;
    if !(shrink > 0.0) {
        return Err(Error::Domain {
            what: "L * tau_bar must stay below 1",
            value: l * tau_bar,
            bound: 1.0,
        });
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let kappas = powers
        .iter()
        .zip(&channel.nodes)
        .map(|(p, ch)| Ok(node_success(p, ch, model)? * (eta - 1.0) + 1.0))
        .collect::<Result<Vec<_>>>()?;
    let (sum, _) = periodic_series_sum(1.0 / shrink, &kappas)?;
    Ok(gamma * tau_bar * sum / shrink)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleNodeCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// One-node condition `Π Φ(SINR_i) > τ̄(γ + L)/(1 - η)`.
pub fn single_node_constraint<M: OutageModel>(
    p: &[f64],
    tau_bar: f64,
    gamma: f64,
    l: f64,
    eta: f64,
    ch: &NodeChannel,
    model: &M,
) -> Result<SingleNodeCheck> {
    let rhs = tau_bar * (gamma + l) / (1.0 - eta);
    if rhs >= 1.0 {
        return Err(Error::Infeasible {
            bound: BindingBound::TransmissionInterval,
            detail: format!("required success probability {rhs} is not below 1"),
        });
    }
    let lhs = node_success(p, ch, model)?;
    Ok(SingleNodeCheck {
        lhs,
        rhs,
        satisfied: lhs > rhs,
    })
}

/// Where a stability constant came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantProvenance {
    pub tau_bar: f64,
    pub gamma_plus_l: f64,
    pub eta: f64,
    pub delta: f64,
}

/// `𝒞 = -ln(τ̄(γ+L)/(1-η) - δ) / a`; the power constraint is `Σ 1/SINR_i ≤ 𝒞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityConstant {
    pub c_tau: f64,
    pub a: f64,
    pub provenance: Option<ConstantProvenance>,
}

impl StabilityConstant {
    pub fn from_value(c_tau: f64, a: f64) -> Result<Self> {
        if !(c_tau > 0.0 && c_tau.is_finite()) || !(a > 0.0 && a.is_finite()) {
            return Err(Error::param(format!("need positive C = {c_tau} and a = {a}")));
        }
        Ok(Self {
            c_tau,
            a,
            provenance: None,
        })
    }

    /// Required node success probability `exp(-a 𝒞)`.
    pub fn bracket(&self) -> f64 {
        (-self.a * self.c_tau).exp()
    }

    /// `𝒞 - Σ 1/SINR_i`; nonnegative iff the powers meet the constraint.
    pub fn margin(&self, p: &[f64], ch: &NodeChannel) -> Result<f64> {
        let inv: f64 = sinr_all(p, ch)?.iter().map(|s| 1.0 / s).sum();
        Ok(self.c_tau - inv)
    }
}

pub fn c_tau(tau_bar: f64, gamma_plus_l: f64, eta: f64, delta: f64, a: f64) -> Result<StabilityConstant> {
    if !(tau_bar > 0.0) || !(gamma_plus_l >= 0.0) || !(0.0..1.0).contains(&eta) || !(a > 0.0) || !(delta >= 0.0) {
        return Err(Error::param(format!(
            "invalid constant inputs tau_bar = {tau_bar}, gamma + L = {gamma_plus_l}, eta = {eta}, delta = {delta}, a = {a}"
        )));
    }
    let required = tau_bar * gamma_plus_l / (1.0 - eta);
    let bracket = required - delta;
    if bracket >= 1.0 {
        return Err(Error::Infeasible {
            bound: BindingBound::TransmissionInterval,
            detail: format!("tau_bar = {tau_bar} demands success probability {bracket} >= 1"),
        });
    }
    if bracket <= 0.0 {
        return Err(Error::Infeasible {
            bound: BindingBound::Delta,
            detail: format!("delta = {delta} exceeds the required probability {required}"),
        });
    }
    Ok(StabilityConstant {
        c_tau: -bracket.ln() / a,
        a,
        provenance: Some(ConstantProvenance {
            tau_bar,
            gamma_plus_l,
            eta,
            delta,
        }),
    })
}

/// LP data for weights `q`: rows `g_ii q_i 𝒞 p_i - Σ_{j≠i} g_ji p_j ≥ σ²_i`,
/// then `-p_i ≥ -P_max`.
pub fn build_lp(q: &[f64], ch: &NodeChannel, c: &StabilityConstant, p_max: f64) -> Result<LpProblem> {
    let l = ch.links();
    if q.len() != l {
        return Err(Error::dim(format!("{} weights for {l} links", q.len())));
    }
    let sum: f64 = q.iter().sum();
    if q.iter().any(|&v| !(v > 0.0 && v < 1.0) && l > 1) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::param(format!("weights {q:?} are not in the open simplex")));
    }
    let mut a = Matrix::zeros(2 * l, l);
    let mut b = vec![0.0; 2 * l];
    for i in 0..l {
        for j in 0..l {
            a[(i, j)] = if i == j {
                ch.gains[(i, i)] * q[i] * c.c_tau
            } else {
                -ch.gains[(j, i)]
            };
        }
        b[i] = ch.noise[i];
        a[(l + i, i)] = -1.0;
        b[l + i] = -p_max;
    }
    LpProblem::new(vec![1.0; l], a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerSolution {
    pub powers: Vec<f64>,
    pub objective: f64,
    pub q_star: Option<Vec<f64>>,
    pub sinr: Vec<f64>,
    pub success_probability: f64,
    /// `𝒞 - Σ 1/SINR_i` at the solution.
    pub constraint_margin: f64,
    pub feasible: bool,
}

impl PowerSolution {
    fn evaluate(powers: Vec<f64>, q_star: Option<Vec<f64>>, ch: &NodeChannel, c: &StabilityConstant, p_max: f64) -> Result<Self> {
        let sinr = sinr_all(&powers, ch)?;
        let success_probability = sinr.iter().map(|&s| phi_outage(s, c.a)).product();
        let constraint_margin = c.margin(&powers, ch)?;
        let tol = 1e-9 * c.c_tau;
        let feasible = constraint_margin >= -tol && powers.iter().all(|&p| p > 0.0 && p <= p_max * (1.0 + 1e-12));
        Ok(Self {
            objective: powers.iter().sum(),
            powers,
            q_star,
            sinr,
            success_probability,
            constraint_margin,
            feasible,
        })
    }
}

/// All weight vectors `k / r` with positive integer `k` summing to `r`, in
/// lexicographic order.
pub fn simplex_lattice(links: usize, resolution: usize) -> Vec<Vec<f64>> {
    fn rec(left: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 1..=left.saturating_sub(slots - 1) {
            prefix.push(k);
            rec(left - k, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    if links == 0 || resolution < links {
        return Vec::new();
    }
    let mut out = Vec::new();
    rec(resolution, links, &mut Vec::new(), &mut out);
    out.into_iter()
        .map(|ks| ks.into_iter().map(|k| k as f64 / resolution as f64).collect())
        .collect()
}

/// Objective, weights and powers of the best lattice point.
type GridBest = (f64, Vec<f64>, Vec<f64>);

fn best_over_grid(
    grid: &[Vec<f64>],
    ch: &NodeChannel,
    c: &StabilityConstant,
    p_max: f64,
) -> Result<Option<GridBest>> {
    let results = grid
        .par_iter()
        .map(|q| {
            let out = solve(&build_lp(q, ch, c, p_max)?)?;
            Ok(match out.status {
                LpStatus::Optimal => Some((out.objective.unwrap_or(f64::INFINITY), q.clone(), out.solution.unwrap_or_default())),
                _ => None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // Sequential reduction keeps the tie-break independent of scheduling.
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for cand in results.into_iter().flatten() {
        let better = match &best {
            None => true,
            Some((obj, q, _)) => {
                let tie = (cand.0 - obj).abs() <= 1e-12 * obj.abs().max(1.0);
                (!tie && cand.0 < *obj) || (tie && cand.1 < *q)
            }
        };
        if better {
            best = Some(cand);
        }
    }
    Ok(best)
}

/// Minimum total power over the simplex lattice of the given resolution.
pub fn solve_problem2(ch: &NodeChannel, c: &StabilityConstant, p_max: f64, resolution: usize) -> Result<PowerSolution> {
    let l = ch.links();
    let grid = if l == 1 { vec![vec![1.0]] } else { simplex_lattice(l, resolution) };
    if grid.is_empty() {
        return Err(Error::param(format!("resolution {resolution} too coarse for {l} links")));
    }
    match best_over_grid(&grid, ch, c, p_max)? {
        Some((_, q, p)) => PowerSolution::evaluate(p, Some(q), ch, c, p_max),
        None => {
            let uncapped = best_over_grid(&grid, ch, c, f64::MAX / 4.0)?;
            let (bound, detail) = match uncapped {
                Some((obj, _, p)) => (
                    BindingBound::PowerCap,
                    format!(
                        "stabilising powers exist (total {obj:.6}, largest {:.6}) but exceed P_max = {p_max}",
                        p.iter().copied().fold(0.0, f64::max)
                    ),
                ),
                None => (
                    BindingBound::TransmissionInterval,
                    format!("no power vector meets C = {} on the lattice of resolution {resolution}", c.c_tau),
                ),
            };
            Err(Error::Infeasible { bound, detail })
        }
    }
}

fn two_link_gains(ch: &NodeChannel) -> Result<(f64, f64, f64, f64, f64, f64)> {
    if ch.links() != 2 {
        return Err(Error::dim(format!("two-link formula on a {}-link node", ch.links())));
    }
    let g = &ch.gains;
    Ok((g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)], ch.noise[0], ch.noise[1]))
}

/// Open interval of `ε = q_1` on which the two constraint lines meet in the
/// positive orthant.
pub fn two_link_interval(c: &StabilityConstant, ch: &NodeChannel) -> Result<(f64, f64)> {
    let (g11, g12, g21, g22, _, _) = two_link_gains(ch)?;
    let disc = 0.25 - g12 * g21 / (g11 * g22 * c.c_tau * c.c_tau);
    if disc <= 0.0 {
        return Err(Error::Infeasible {
            bound: BindingBound::TransmissionInterval,
            detail: format!("C = {} is too small for the cross-gains (discriminant {disc})", c.c_tau),
        });
    }
    let r = disc.sqrt();
    Ok((0.5 - r, 0.5 + r))
}

/// Vertex of the two-link LP at `q = (ε, 1 - ε)`.
pub fn two_link_powers(eps: f64, ch: &NodeChannel, c: &StabilityConstant) -> Result<(f64, f64)> {
    let (g11, g12, g21, g22, s1, s2) = two_link_gains(ch)?;
    let (lo, hi) = two_link_interval(c, ch)?;
    if !(eps > lo && eps < hi) {
        return Err(Error::Domain {
            what: "epsilon outside the interval where the denominator is positive",
            value: eps,
            bound: if eps <= lo { lo } else { hi },
        });
    }
    let cc = c.c_tau;
    let den = -eps * eps * g11 * g22 * cc * cc + eps * g11 * g22 * cc * cc - g12 * g21;
    let p1 = (-eps * g22 * cc * s1 + g21 * s2 + g22 * cc * s1) / den;
    let p2 = (eps * g11 * cc * s2 + g12 * s1) / den;
    Ok((p1, p2))
}

/// Coefficients `(𝔞, 𝔟, 𝔠)` of the stationarity quadratic in ε.
pub fn epsilon_quadratic(ch: &NodeChannel, c: &StabilityConstant) -> Result<(f64, f64, f64)> {
    let (g11, g12, g21, g22, s1, s2) = two_link_gains(ch)?;
    let cc = c.c_tau;
    let (c2, c3) = (cc * cc, cc * cc * cc);
    let qa = g11 * g11 * g22 * c3 * s2 - g11 * g22 * g22 * c3 * s1;
    let qb = 2.0 * g11 * g22 * g22 * c3 * s1 + 2.0 * g11 * g12 * g22 * c2 * s1 + 2.0 * g11 * g21 * g22 * c2 * s2;
    let qc = g12 * g21 * g22 * cc * s1
        - g11 * g22 * g22 * c3 * s1
        - g11 * g12 * g22 * c2 * s1
        - g11 * g21 * g22 * c2 * s2
        - g11 * g12 * g21 * cc * s2;
    Ok((qa, qb, qc))
}

fn total_power(eps: f64, ch: &NodeChannel, c: &StabilityConstant) -> f64 {
    two_link_powers(eps, ch, c).map_or(f64::INFINITY, |(a, b)| a + b)
}

/// Optimal weight ε* from the quadratic; falls back to a dense scan of
/// `p1 + p2` when no root lies inside the feasible interval.
pub fn two_link_epsilon_star(ch: &NodeChannel, c: &StabilityConstant) -> Result<f64> {
    let (lo, hi) = two_link_interval(c, ch)?;
    let (qa, qb, qc) = epsilon_quadratic(ch, c)?;
    let scale = qa.abs().max(qb.abs()).max(qc.abs());
    let roots: Vec<f64> = if qa.abs() <= 1e-12 * scale {
        vec![-qc / qb]
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            Vec::new()
        } else {
            // Numerically stable pair of roots.
            let t = -0.5 * (qb + qb.signum() * disc.sqrt());
            vec![t / qa, qc / t]
        }
    };
    let inside: Vec<f64> = roots.into_iter().filter(|r| *r > lo && *r < hi).collect();
    if let Some(best) = inside
        .iter()
        .copied()
        .min_by(|a, b| total_power(*a, ch, c).total_cmp(&total_power(*b, ch, c)))
    {
        return Ok(best);
    }
    log::warn!("no root of the epsilon quadratic inside ({lo}, {hi}); scanning p1 + p2 instead");
    Ok(scan_epsilon(ch, c, lo, hi, 100_000))
}

/// Dense-scan minimiser of `p1(ε) + p2(ε)` over the open interval.
pub fn scan_epsilon(ch: &NodeChannel, c: &StabilityConstant, lo: f64, hi: f64, points: usize) -> f64 {
    let mut best = (f64::INFINITY, 0.5 * (lo + hi));
    for k in 1..points {
        let eps = lo + (hi - lo) * k as f64 / points as f64;
        let v = total_power(eps, ch, c);
        if v < best.0 {
            best = (v, eps);
        }
    }
    best.1
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoLinkReport {
    pub tau_bar: f64,
    pub tau_bound: f64,
    pub tau_ok: bool,
    pub interval: Option<(f64, f64)>,
    pub eps_star: Option<f64>,
    pub powers: Option<(f64, f64)>,
    pub p_max: f64,
    pub p_max_ok: bool,
    pub c_tau: Option<f64>,
}

/// Upper bound on τ̄ below which the two-link LP has a solution.
pub fn two_link_tau_bound(ch: &NodeChannel, gamma_plus_l: f64, eta: f64, delta: f64, a: f64) -> Result<f64> {
    let (g11, g12, g21, g22, _, _) = two_link_gains(ch)?;
    Ok((1.0 - eta) / gamma_plus_l * (delta + (-a * (4.0 * g12 * g21 / (g11 * g22)).sqrt()).exp()))
}

/// Both feasibility conditions of the two-link design, with the optimum when
/// they hold. `c_override` replaces the constant computed from τ̄.
#[allow(clippy::too_many_arguments)]
pub fn two_link_feasibility(
    ch: &NodeChannel,
    tau_bar: f64,
    gamma_plus_l: f64,
    eta: f64,
    delta: f64,
    a: f64,
    p_max: f64,
    c_override: Option<f64>,
) -> Result<TwoLinkReport> {
    let tau_bound = two_link_tau_bound(ch, gamma_plus_l, eta, delta, a)?;
    let mut report = TwoLinkReport {
        tau_bar,
        tau_bound,
        tau_ok: tau_bar < tau_bound,
        interval: None,
        eps_star: None,
        powers: None,
        p_max,
        p_max_ok: false,
        c_tau: None,
    };
    let c = match c_override {
        Some(v) => StabilityConstant::from_value(v, a),
        None => c_tau(tau_bar, gamma_plus_l, eta, delta, a),
    };
    let Ok(c) = c else {
        return Ok(report);
    };
    report.c_tau = Some(c.c_tau);
    if let Ok(interval) = two_link_interval(&c, ch) {
        let eps = two_link_epsilon_star(ch, &c)?;
        let (p1, p2) = two_link_powers(eps, ch, &c)?;
        report.interval = Some(interval);
        report.eps_star = Some(eps);
        report.powers = Some((p1, p2));
        report.p_max_ok = p_max >= p1.max(p2);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRegion {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    /// `feasible[i][j]` for `(p1[i], p2[j])`.
    pub feasible: Vec<Vec<bool>>,
    pub boundary: Vec<(f64, f64)>,
}

impl StabilityRegion {
    /// Whether the grid cell containing `(p1, p2)` touches both sides of the
    /// boundary.
    pub fn cell_straddles(&self, p1: f64, p2: f64) -> bool {
        let find = |axis: &[f64], v: f64| axis.windows(2).position(|w| w[0] <= v && v <= w[1]);
        let (Some(i), Some(j)) = (find(&self.p1, p1), find(&self.p2, p2)) else {
            return false;
        };
        let corners = [
            self.feasible[i][j],
            self.feasible[i + 1][j],
            self.feasible[i][j + 1],
            self.feasible[i + 1][j + 1],
        ];
        corners.iter().any(|&b| b) && corners.iter().any(|&b| !b)
    }
}

/// Evaluates the power constraint on a `resolution × resolution` grid and
/// traces its boundary by refining every sign change along each axis.
pub fn stability_region(
    ch: &NodeChannel,
    c: &StabilityConstant,
    p1_range: (f64, f64),
    p2_range: (f64, f64),
    resolution: usize,
) -> Result<StabilityRegion> {
    two_link_gains(ch)?;
    if resolution < 2 || !(p1_range.1 > p1_range.0) || !(p2_range.1 > p2_range.0) {
        return Err(Error::param("region needs increasing ranges and resolution >= 2"));
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..resolution)
            .map(|k| lo + (hi - lo) * k as f64 / (resolution - 1) as f64)
            .collect()
    };
    let (p1, p2) = (axis(p1_range), axis(p2_range));
    let margin = |x: f64, y: f64| -> f64 {
        if x <= 0.0 || y <= 0.0 {
            return f64::NEG_INFINITY;
        }
        c.margin(&[x, y], ch).unwrap_or(f64::NEG_INFINITY)
    };
    let feasible: Vec<Vec<bool>> = p1
        .iter()
        .map(|&x| p2.iter().map(|&y| margin(x, y) >= 0.0).collect())
        .collect();

    let refine = |f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64| -> f64 {
        let fa_pos = f(a) >= 0.0;
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if (f(m) >= 0.0) == fa_pos {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let mut boundary = Vec::new();
    for (i, &x) in p1.iter().enumerate() {
        for j in 0..resolution - 1 {
            if feasible[i][j] != feasible[i][j + 1] {
                let y = refine(&|y| margin(x, y), p2[j], p2[j + 1]);
                boundary.push((x, y));
            }
        }
    }
    for (j, &y) in p2.iter().enumerate() {
        for i in 0..resolution - 1 {
            if feasible[i][j] != feasible[i + 1][j] {
                let x = refine(&|x| margin(x, y), p1[i], p1[i + 1]);
                boundary.push((x, y));
            }
        }
    }
    boundary.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    boundary.dedup();
    Ok(StabilityRegion {
        p1,
        p2,
        feasible,
        boundary,
    })
}

/// Topology whose link probabilities are the outage successes at the given
/// powers, one error coordinate per link in node order.
pub fn topology_from_powers<M: OutageModel>(channel: &ChannelModel, powers: &[Vec<f64>], model: &M) -> Result<NetworkTopology> {
    if powers.len() != channel.nodes.len() {
        return Err(Error::dim("one power vector per node is required"));
    }
    let mut next = 0;
    let mut nodes = Vec::new();
    for (p, ch) in powers.iter().zip(&channel.nodes) {
        let links = sinr_all(p, ch)?
            .into_iter()
            .map(|s| {
                next += 1;
                Link {
                    success: model.success(s),
                    coords: vec![next - 1],
                }
            })
            .collect();
        nodes.push(Node { links });
    }
    NetworkTopology::new(nodes, next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn paper_two_link() -> NodeChannel {
        NodeChannel::new(dmatrix![0.2, 0.012; 0.012, 0.063], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn sinr_cases() {
        let one = NodeChannel::new(dmatrix![1.0], vec![1.0]).unwrap();
        assert_eq!(sinr(0, &[3.0], &one).unwrap(), 3.0);
        let sym = NodeChannel::new(dmatrix![1.0, 1.0; 1.0, 1.0], vec![1e-12, 1e-12]).unwrap();
        assert!((sinr(0, &[5.0, 5.0], &sym).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn phi_cases() {
        assert!((phi_outage(1.0, 1.0) - (-1f64).exp()).abs() < 1e-15);
        assert!((phi_outage(1e12, 1.0) - 1.0).abs() < 1e-11);
        assert_eq!(phi_outage(0.0, 1.0), 0.0);
    }

    #[test]
    fn c_tau_cases() {
        let c = c_tau(0.005, 11.59, 0.5f64.sqrt(), 1e-6, 1.0).unwrap();
        assert!((c.c_tau - 1.620_233).abs() < 1e-5, "{}", c.c_tau);
        // bracket = e^-1 gives C = 1/a
        let tau = (-1f64).exp() * (1.0 - 0.5) / 10.0;
        let c = c_tau(tau, 10.0, 0.5, 0.0, 1.0).unwrap();
        assert!((c.c_tau - 1.0).abs() < 1e-12);
        let c2 = c_tau(tau, 10.0, 0.5, 0.0, 2.0).unwrap();
        assert!((c2.c_tau - 0.5).abs() < 1e-12);
        assert!(matches!(
            c_tau(1.0, 11.59, 0.5, 1e-6, 1.0),
            Err(Error::Infeasible { bound: BindingBound::TransmissionInterval, .. })
        ));
        assert!(matches!(
            c_tau(1e-9, 11.59, 0.5, 1e-6, 1.0),
            Err(Error::Infeasible { bound: BindingBound::Delta, .. })
        ));
    }

    #[test]
    fn paper_two_link_closed_form() {
        let ch = paper_two_link();
        let c = StabilityConstant::from_value(1.62, 1.0).unwrap();
        let (lo, hi) = two_link_interval(&c, &ch).unwrap();
        assert!((lo - 0.004_373_9).abs() < 1e-6 && (hi - 0.995_626_1).abs() < 1e-6);
        let (p1, p2) = two_link_powers(0.38, &ch, &c).unwrap();
        assert!((p1 - 9.844_418).abs() < 1e-5 && (p2 - 17.670_393).abs() < 1e-5);
        let eps = two_link_epsilon_star(&ch, &c).unwrap();
        assert!((eps - 0.378_032).abs() < 1e-6, "{eps}");
        let scan = scan_epsilon(&ch, &c, lo, hi, 100_000);
        assert!((eps - scan).abs() < 1e-4);
    }

    #[test]
    fn two_link_powers_solve_the_vertex() {
        let ch = paper_two_link();
        let c = StabilityConstant::from_value(1.62, 1.0).unwrap();
        let eps = 0.6;
        let (p1, p2) = two_link_powers(eps, &ch, &c).unwrap();
        let m = dmatrix![0.2 * eps * 1.62, -0.012; -0.012, 0.063 * (1.0 - eps) * 1.62];
        let x = m.lu().solve(&nalgebra::dvector![1.0, 1.0]).unwrap();
        assert!((x[0] - p1).abs() < 1e-10 && (x[1] - p2).abs() < 1e-10);
        assert!(two_link_powers(0.001, &ch, &c).is_err());
    }

    #[test]
    fn symmetric_case() {
        let (g, s, cc) = (0.1, 1.0, 5.0);
        let ch = NodeChannel::new(dmatrix![g, g; g, g], vec![s, s]).unwrap();
        let c = StabilityConstant::from_value(cc, 1.0).unwrap();
        let want = 2.0 * s / ((cc - 2.0) * g);
        assert!((two_link_epsilon_star(&ch, &c).unwrap() - 0.5).abs() < 1e-12);
        let (p1, p2) = two_link_powers(0.5, &ch, &c).unwrap();
        assert!((p1 - want).abs() < 1e-12 * want && (p2 - want).abs() < 1e-12 * want);
    }

    #[test]
    fn no_interference_interval() {
        let ch = NodeChannel::new(dmatrix![0.2, 1e-300; 1e-300, 0.1], vec![1.0, 1.0]).unwrap();
        let c = StabilityConstant::from_value(1.0, 1.0).unwrap();
        let (lo, hi) = two_link_interval(&c, &ch).unwrap();
        assert!(lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lp_matches_closed_form() {
        let ch = paper_two_link();
        let c = StabilityConstant::from_value(1.62, 1.0).unwrap();
        for eps in [0.2, 0.38, 0.7] {
            let out = solve(&build_lp(&[eps, 1.0 - eps], &ch, &c, 70.0).unwrap()).unwrap();
            let p = out.solution.unwrap();
            let (p1, p2) = two_link_powers(eps, &ch, &c).unwrap();
            assert!((p[0] - p1).abs() < 1e-8 * p1 && (p[1] - p2).abs() < 1e-8 * p2);
        }
    }

    #[test]
    fn lattice_points() {
        let g = simplex_lattice(3, 4);
        assert_eq!(g.len(), 3);
        assert_eq!(g[0], vec![0.25, 0.25, 0.5]);
        assert_eq!(simplex_lattice(4, 12).len(), 165);
        assert!(simplex_lattice(3, 2).is_empty());
    }

    #[test]
    fn problem2_two_link() {
        let ch = paper_two_link();
        let c = StabilityConstant::from_value(1.62, 1.0).unwrap();
        let sol = solve_problem2(&ch, &c, 70.0, 200).unwrap();
        assert_eq!(sol.q_star.as_deref(), Some(&[0.38, 0.62][..]));
        assert!((sol.objective - 27.514_81).abs() < 1e-4, "{}", sol.objective);
        assert!(sol.feasible && sol.constraint_margin >= -1e-9);
    }

    #[test]
    fn power_cap_infeasibility() {
        let ch = paper_two_link();
        let c = StabilityConstant::from_value(1.62, 1.0).unwrap();
        let err = solve_problem2(&ch, &c, 5.0, 50).unwrap_err();
        assert!(matches!(err, Error::Infeasible { bound: BindingBound::PowerCap, .. }), "{err}");
    }

    #[test]
    fn region_boundary_passes_near_optimum() {
        let ch = paper_two_link();
        let c = StabilityConstant::from_value(1.62, 1.0).unwrap();
        let region = stability_region(&ch, &c, (0.0, 40.0), (0.0, 40.0), 161).unwrap();
        assert!(!region.feasible[0][0]);
        let (p1, p2) = two_link_powers(two_link_epsilon_star(&ch, &c).unwrap(), &ch, &c).unwrap();
        assert!(region.cell_straddles(p1, p2));
        assert!(!region.boundary.is_empty());
    }

    #[test]
    fn multi_node_limits() {
        let ch = NodeChannel::new(dmatrix![1.0], vec![1.0]).unwrap();
        let model = ChannelModel::new(vec![ch.clone(), ch], 1.0, 1e12).unwrap();
        let exp = ExpOutage { a: 1.0 };
        let zero = multi_node_stability_lhs(&[vec![1.0], vec![1.0]], &model, &exp, 0.01, 0.0, 5.0, 0.5).unwrap();
        assert_eq!(zero, 0.0);
        // Near-lossless links: E{κ} → η.
        let big = multi_node_stability_lhs(&[vec![1e12], vec![1e12]], &model, &exp, 0.01, 3.0, 5.0, 0.5).unwrap();
        let r = 1.0 / (1.0 - 0.05);
        let lossless = 3.0 * 0.01 / (1.0 - 0.05) / (1.0 - r * 0.5);
        assert!((big - lossless).abs() < 1e-9);
    }
}

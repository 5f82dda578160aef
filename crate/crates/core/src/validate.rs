//! Acceptance suite: ten end-to-end checks against the shipped configs with
//! pinned tolerances. Each check reports pass/fail with the numbers behind
//! it; a failing check is reported, never softened.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::lpsolve::{solve, LpProblem, LpStatus};
use crate::model::{Matrix, NetworkTopology, NodeChannel, ProtocolKind};
use crate::numerics::{eigenvalues, frequency_sweep_peak, l2_gain, stream_rng, GainQuery};
use crate::pipeline::{power_lp, rate_report, sim_setup, SimSetup};
use crate::power::{
    solve_problem2, two_link_epsilon_star, two_link_powers, two_link_tau_bound, StabilityConstant,
};
use crate::protocols::{cover_time_pgf, expected_cover_time, rr_constants};
use crate::sim::{empirical_protocol_stats, monte_carlo_decay, simulate, SimConfig};
use crate::stability::{
    smallgain_lhs_deterministic, smallgain_lhs_stochastic, DeterministicGainInputs, StochasticGainInputs,
};

pub const BATCH_REACTOR_RR: &str = include_str!("../../../configs/batch_reactor_rr.json");
pub const BATCH_REACTOR_STOCHASTIC: &str = include_str!("../../../configs/batch_reactor_stochastic.json");
pub const TWO_LINK_POWER: &str = include_str!("../../../configs/two_link_power.json");
pub const FOUR_LINK_POWER: &str = include_str!("../../../configs/four_link_power.json");

pub const SHIPPED_CONFIGS: [(&str, &str); 4] = [
    ("batch_reactor_rr.json", BATCH_REACTOR_RR),
    ("batch_reactor_stochastic.json", BATCH_REACTOR_STOCHASTIC),
    ("two_link_power.json", TWO_LINK_POWER),
    ("four_link_power.json", FOUR_LINK_POWER),
];

/// Rates quoted by the original study for the batch reactor. The printed
/// constants do not reproduce them, so they are reported next to the
/// computed values without being checked.
pub const REFERENCE_RATES: [(&str, f64); 4] = [
    ("stochastic protocol, heterogeneous probabilities", 187.29),
    ("round robin, heterogeneous probabilities", 275.31),
    ("stochastic protocol, min-probability bound", 305.11),
    ("round robin, min-probability bound", 613.34),
];

const GAIN_TOL: f64 = 1e-9;
const SEED: u64 = 20_240_611;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_s: f64,
    pub limit_s: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {} ({:.2} s of {:.0} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed_s,
            self.limit_s,
            self.detail
        )
    }
}

struct Check {
    notes: Vec<String>,
    ok: bool,
}

impl Check {
    fn new() -> Self {
        Self { notes: Vec::new(), ok: true }
    }

    fn expect(&mut self, ok: bool, note: String) {
        self.ok &= ok;
        self.notes.push(if ok { note } else { format!("FAILED {note}") });
    }

    fn info(&mut self, note: String) {
        self.notes.push(note);
    }

    fn finish(self) -> (bool, String) {
        (self.ok, self.notes.join("; "))
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub const CRITERIA: [(&str, f64); 10] = [
    ("protocol constants", 1.0),
    ("cover time", 10.0),
    ("two-link power design", 30.0),
    ("symmetric two-link case", 1.0),
    ("LP solver vs vertex enumeration", 30.0),
    ("L2 gain vs frequency sweep", 60.0),
    ("rate-bound properties", 30.0),
    ("closed-loop decay", 300.0),
    ("simulator invariants", 60.0),
    ("four-link LP", 30.0),
];

/// Runs one criterion (1-based id).
pub fn run_criterion(id: usize) -> CriterionOutcome {
    let (title, limit_s) = CRITERIA[id - 1];
    let start = Instant::now();
    let result = match id {
        1 => protocol_constants(),
        2 => cover_time(),
        3 => two_link_design(),
        4 => symmetric_two_link(),
        5 => lp_vs_vertices(),
        6 => gain_vs_sweep(),
        7 => rate_properties(),
        8 => closed_loop_decay(),
        9 => simulator_invariants_all(),
        10 => four_link(),
        _ => unreachable!("criteria are numbered 1 to 10"),
    };
    let elapsed_s = start.elapsed().as_secs_f64();
    let (mut passed, mut detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    if elapsed_s > limit_s {
        passed = false;
        detail = format!("{detail}; FAILED runtime {elapsed_s:.1} s over {limit_s} s");
    }
    CriterionOutcome {
        id,
        title,
        passed,
        detail,
        elapsed_s,
        limit_s,
    }
}

pub fn run_all() -> Vec<CriterionOutcome> {
    (1..=CRITERIA.len()).map(run_criterion).collect()
}

fn config(text: &str) -> Result<Config> {
    Config::from_json(text)
}

fn protocol_constants() -> Result<(bool, String)> {
    let topo = config(BATCH_REACTOR_RR)?.topology()?;
    let k = rr_constants(&topo)?;
    let l1 = (topo.node_count() as f64).sqrt();
    let tol = 5e-3;
    let mut c = Check::new();
    c.expect((k.kappa_bar - 0.93).abs() <= tol, format!("kappa_bar {:.4} vs 0.93", k.kappa_bar));
    for (got, want) in k.period_kappas.iter().zip([0.93, 0.82]) {
        c.expect((got - want).abs() <= tol, format!("E kappa {got:.4} vs {want}"));
    }
    c.expect(
        (k.eta - 0.5f64.sqrt()).abs() <= tol,
        format!("eta {:.6} vs sqrt(1/2)", k.eta),
    );
    c.expect((l1 - 2f64.sqrt()).abs() <= tol, format!("L1 {l1:.6} vs sqrt(2)"));
    Ok(c.finish())
}

fn cover_time() -> Result<(bool, String)> {
    let f = [0.24, 0.6];
    let mut c = Check::new();
    let et = expected_cover_time(&f)?;
    c.expect((et - 7.5).abs() <= 1e-12, format!("formula E T = {et}"));

    let topo = NetworkTopology::sequential(&[vec![0.24], vec![0.6]])?;
    let stats = empirical_protocol_stats(&topo, ProtocolKind::StochasticUniform, 100_000, 0, SEED)?;
    let (m, se) = (stats.cover_mean(), stats.cover_standard_error());
    c.expect(
        (m - et).abs() <= 3.0 * se,
        format!("Monte Carlo mean {m:.4} +- {se:.4} vs formula {et} ({:.1} SE)", (m - et) / se),
    );

    let g1 = cover_time_pgf(&f, 1.0)?;
    let h = 1e-6;
    let d = (cover_time_pgf(&f, 1.0 + h)? - cover_time_pgf(&f, 1.0 - h)?) / (2.0 * h);
    c.expect((g1 - 1.0).abs() <= 1e-4, format!("G(1) = {g1}"));
    c.expect((d - et).abs() <= 1e-4, format!("G'(1) = {d:.7}"));
    Ok(c.finish())
}

fn two_link_design() -> Result<(bool, String)> {
    let cfg = config(TWO_LINK_POWER)?;
    let channel = cfg.channel()?;
    let node = &channel.nodes[0];
    let p = cfg.power.clone().unwrap_or_default();
    let cst = StabilityConstant::from_value(p.c_tau.unwrap_or(f64::NAN), channel.a)?;
    let mut c = Check::new();

    let eps = two_link_epsilon_star(node, &cst)?;
    c.expect((eps - 0.38).abs() <= 0.01, format!("eps* {eps:.6} vs 0.38"));
    let (p1, p2) = two_link_powers(eps, node, &cst)?;
    c.expect(rel(p1, 9.9) <= 0.02, format!("p1* {p1:.4} vs 9.9"));
    c.expect(rel(p2, 17.6) <= 0.02, format!("p2* {p2:.4} vs 17.6"));

    let bound = two_link_tau_bound(
        node,
        p.gamma_plus_l.unwrap_or(f64::NAN),
        p.eta.unwrap_or(f64::NAN),
        p.delta.unwrap_or(f64::NAN),
        channel.a,
    )?;
    c.expect(rel(bound, 0.0205) <= 0.01, format!("tau_bar bound {bound:.6} vs 0.0205"));

    let lp = solve_problem2(node, &cst, channel.p_max, 200)?;
    let closed = p1 + p2;
    c.expect(
        rel(lp.objective, closed) <= 0.01,
        format!("LP grid total {:.6} vs closed form {closed:.6}", lp.objective),
    );
    Ok(c.finish())
}

fn symmetric_two_link() -> Result<(bool, String)> {
    let (g, sigma2, cv) = (0.1, 1.0, 5.0);
    let node = NodeChannel::new(Matrix::from_element(2, 2, g), vec![sigma2; 2])?;
    let cst = StabilityConstant::from_value(cv, 1.0)?;
    let formula = 2.0 * sigma2 / ((cv - 2.0) * g);
    let eps = two_link_epsilon_star(&node, &cst)?;
    let (p1, p2) = two_link_powers(eps, &node, &cst)?;
    let lp = solve_problem2(&node, &cst, 1e3, 200)?;
    let mut c = Check::new();
    for (what, v) in [("closed form p1", p1), ("closed form p2", p2), ("LP p1", lp.powers[0]), ("LP p2", lp.powers[1])] {
        c.expect(rel(v, formula) <= 1e-6, format!("{what} {v:.9} vs {formula:.9}"));
    }
    Ok(c.finish())
}

/// Minimum of `c·x` over `Ax ≥ b, x ≥ 0` by enumerating every basic point.
/// `None` when no vertex is feasible.
fn vertex_enumeration(p: &LpProblem) -> Option<f64> {
    let (m, n) = (p.rows(), p.vars());
    let mut rows: Vec<(Vec<f64>, f64)> = (0..m)
        .map(|i| ((0..n).map(|j| p.a[(i, j)]).collect(), p.b[i]))
        .collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e, 0.0));
    }
    let mut best: Option<f64> = None;
    let total = rows.len();
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let a = Matrix::from_fn(n, n, |i, j| rows[pick[i]].0[j]);
        let b = DVector::from_iterator(n, pick.iter().map(|&k| rows[k].1));
        if let Some(x) = a.clone().lu().solve(&b) {
            let residual = (&a * &x - &b).amax();
            if residual <= 1e-9 * (1.0 + b.amax()) && p.max_violation(x.as_slice()) <= 1e-9 {
                let obj: f64 = p.c.iter().zip(x.iter()).map(|(c, x)| c * x).sum();
                best = Some(best.map_or(obj, |v: f64| v.min(obj)));
            }
        }
        // Next n-combination of `total` in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < total - n + i {
                break;
            }
        }
        pick[i] += 1;
        for k in i + 1..n {
            pick[k] = pick[k - 1] + 1;
        }
    }
}

fn random_feasible_lp<R: Rng>(rng: &mut R) -> Result<LpProblem> {
    let m = rng.random_range(1..=6);
    let n = rng.random_range(1..=3);
    let a = Matrix::from_fn(m, n, |_, _| rng.random_range(-5.0..5.0));
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
    let ax = &a * DVector::from_column_slice(&x0);
    let b = (0..m).map(|i| ax[i] - rng.random_range(0.0..2.0)).collect();
    let c = (0..n).map(|_| rng.random_range(0.1..4.0)).collect();
    LpProblem::new(c, a, b)
}

fn lp_vs_vertices() -> Result<(bool, String)> {
    let mut rng = stream_rng(SEED, 5);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..500 {
        let p = random_feasible_lp(&mut rng)?;
        let out = solve(&p)?;
        let oracle = vertex_enumeration(&p);
        match (out.status, out.objective, oracle) {
            (LpStatus::Optimal, Some(v), Some(o)) => {
                let err = (v - o).abs() / o.abs().max(1.0);
                worst = worst.max(err);
                if err > 1e-8 {
                    failures += 1;
                }
            }
            _ => failures += 1,
        }
    }
    let mut c = Check::new();
    c.expect(
        failures == 0,
        format!("500 instances, {failures} mismatches, worst objective error {worst:.2e}"),
    );
    Ok(c.finish())
}

fn random_stable_query<R: Rng>(rng: &mut R) -> Result<GainQuery> {
    let n = rng.random_range(2..=6);
    let ni = rng.random_range(1..=3);
    let no = rng.random_range(1..=3);
    let mut a = Matrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
    let max_re = eigenvalues(&a)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let shift = max_re + rng.random_range(0.1..1.5);
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let b = Matrix::from_fn(n, ni, |_, _| rng.random_range(-1.0..1.0));
    let c = Matrix::from_fn(no, n, |_, _| rng.random_range(-1.0..1.0));
    let d = if rng.random_bool(0.5) {
        Matrix::from_fn(no, ni, |_, _| rng.random_range(-0.5..0.5))
    } else {
        Matrix::zeros(no, ni)
    };
    GainQuery::new(a, b, c, d)
}

fn gain_vs_sweep() -> Result<(bool, String)> {
    let mut rng = stream_rng(SEED, 6);
    let (mut worst_bracket, mut worst_sim) = (0.0f64, 0.0f64);
    let mut below = 0;
    for _ in 0..50 {
        let q = random_stable_query(&mut rng)?;
        let gamma = l2_gain(&q, GAIN_TOL)?;
        let sweep = frequency_sweep_peak(&q, 1e-3, 1e3, 4000)?.value;
        if gamma < sweep * (1.0 - 1e-12) {
            below += 1;
        }
        worst_bracket = worst_bracket.max(rel(gamma, sweep));
        let n = q.a.nrows();
        let t = Matrix::identity(n, n) + Matrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3));
        let g2 = l2_gain(&q.similarity(&t)?, GAIN_TOL)?;
        worst_sim = worst_sim.max(rel(g2, gamma));
    }
    let mut c = Check::new();
    c.expect(below == 0, format!("{below} of 50 gains below the sweep peak"));
    c.expect(worst_bracket <= 1e-4, format!("worst gap to sweep {worst_bracket:.2e}"));
    c.expect(worst_sim <= 1e-6, format!("worst similarity change {worst_sim:.2e}"));
    Ok(c.finish())
}

fn rate_properties() -> Result<(bool, String)> {
    let mut c = Check::new();
    for (name, text) in [("round robin", BATCH_REACTOR_RR), ("stochastic", BATCH_REACTOR_STOCHASTIC)] {
        let cfg = config(text)?;
        let report = rate_report(&cfg, GAIN_TOL)?;
        let (res, lhs): (_, Box<dyn Fn(f64) -> f64>) = match cfg.protocol() {
            ProtocolKind::RoundRobin => {
                let k = rr_constants(&cfg.topology()?)?;
                let inputs = DeterministicGainInputs::new(report.gamma_deterministic, report.l, &k)?;
                (
                    report.deterministic.clone(),
                    Box::new(move |w| smallgain_lhs_deterministic(w, &inputs).unwrap_or(f64::INFINITY)),
                )
            }
            ProtocolKind::StochasticUniform => {
                let inputs = StochasticGainInputs::new(
                    report.gamma_stochastic,
                    report.norm_abs_a22,
                    report.node_probabilities.clone(),
                )?;
                (
                    report.stochastic.clone(),
                    Box::new(move |w| smallgain_lhs_stochastic(w, &inputs).unwrap_or(f64::INFINITY)),
                )
            }
        };
        let w = res.omega_star;
        let (at, below) = (lhs(w), lhs(0.99 * w));
        c.expect(
            at < 1.0 && below >= 1.0,
            format!("{name}: omega* {w:.4}, LHS {at:.6} there and {below:.6} at 0.99 omega*"),
        );
        c.expect(
            w <= res.tabbara_omega && res.tabbara_ratio > 1.2,
            format!(
                "{name}: min-probability bound {:.4}, ratio {:.4}",
                res.tabbara_omega, res.tabbara_ratio
            ),
        );
    }
    let refs: Vec<String> = REFERENCE_RATES.iter().map(|(k, v)| format!("{k} {v}")).collect();
    c.info(format!("reference rates (not checked): {}", refs.join(", ")));
    Ok(c.finish())
}

fn closed_loop_decay() -> Result<(bool, String)> {
    let cfg = config(BATCH_REACTOR_RR)?;
    let setup = sim_setup(&cfg, GAIN_TOL)?;
    let report = rate_report(&cfg, GAIN_TOL)?;
    let mut c = Check::new();
    let est = monte_carlo_decay(&setup.dynamics, &setup.topology, &setup.sim, &setup.x0, &setup.e0, setup.trials, SEED)?;
    let w = setup.sim.transmission.rate();
    c.expect(
        est.c_ci.1 < 0.0,
        format!("omega {w:.3}: c = {:.4}, 95% CI ({:.4}, {:.4})", est.c, est.c_ci.0, est.c_ci.1),
    );
    c.expect(
        est.final_ratio < 0.01,
        format!("mean norm at horizon / initial = {:.4}", est.final_ratio),
    );

    let slow = 0.2 * report.deterministic.validity_floor;
    let contrast = setup.with_rate(slow)?;
    let est2 = monte_carlo_decay(
        &contrast.dynamics,
        &contrast.topology,
        &contrast.sim,
        &contrast.x0,
        &contrast.e0,
        contrast.trials,
        SEED,
    )?;
    let div_frac = est2.divergent as f64 / est2.trials as f64;
    c.expect(
        est2.c >= 0.0 || div_frac > 0.1,
        format!("contrast omega {slow:.3}: c = {:.4}, divergent fraction {div_frac:.3}", est2.c),
    );
    Ok(c.finish())
}

/// Checks the jump map and arrival process of a configured simulation on a
/// few recorded trajectories.
pub fn simulator_invariants(cfg: &Config, seed: u64) -> Result<(bool, String)> {
    let setup: SimSetup = sim_setup(cfg, GAIN_TOL)?;
    let sim = SimConfig {
        horizon: setup.sim.horizon.min(1.0),
        record_jumps: true,
        ..setup.sim.clone()
    };
    let nx = setup.wncs.n_x();
    let topo = &setup.topology;
    let (mut jumps, mut bad_x, mut bad_zero, mut bad_keep) = (0usize, 0usize, 0usize, 0usize);
    let mut intervals = Vec::new();
    for stream in 0..8 {
        let tr = simulate(&setup.dynamics, topo, &sim, &setup.x0, &setup.e0, seed, stream)?;
        if tr.divergent {
            return Err(Error::Divergent(format!("trajectory {stream} blew up")));
        }
        let mut prev = 0.0;
        for &t in &tr.arrival_times {
            intervals.push(t - prev);
            prev = t;
        }
        for j in &tr.jumps {
            jumps += 1;
            if j.pre[..nx] != j.post[..nx] {
                bad_x += 1;
            }
            let mut zeroed = vec![false; topo.n_e()];
            for (link, &ok) in topo.nodes()[j.node].links.iter().zip(&j.link_success) {
                if ok {
                    for &i in &link.coords {
                        zeroed[i] = true;
                    }
                }
            }
            for (i, &z) in zeroed.iter().enumerate() {
                let (pre, post) = (j.pre[nx + i], j.post[nx + i]);
                if z && post != 0.0 {
                    bad_zero += 1;
                }
                if !z && post != pre {
                    bad_keep += 1;
                }
            }
        }
    }
    let n = intervals.len() as f64;
    let mean = intervals.iter().sum::<f64>() / n;
    let tau = sim.transmission.mean_interval();
    let z = (mean - tau) / (tau / n.sqrt());
    let mut c = Check::new();
    c.expect(jumps > 0 && bad_x == 0, format!("{jumps} jumps, {bad_x} with x discontinuous"));
    c.expect(bad_zero == 0, format!("{bad_zero} delivered coordinates not reset"));
    c.expect(bad_keep == 0, format!("{bad_keep} other coordinates changed"));
    c.expect(
        z.abs() <= 3.0,
        format!("mean interarrival {mean:.6e} vs {tau:.6e} ({z:.2} sigma)"),
    );
    Ok(c.finish())
}

fn simulator_invariants_all() -> Result<(bool, String)> {
    let mut ok = true;
    let mut notes = Vec::new();
    for (i, (name, text)) in SHIPPED_CONFIGS.iter().enumerate() {
        let (pass, detail) = simulator_invariants(&config(text)?, SEED + i as u64)
            .unwrap_or_else(|e| (false, format!("error: {e}")));
        ok &= pass;
        notes.push(format!("{name}: {detail}"));
    }
    Ok((ok, notes.join(" | ")))
}

fn four_link() -> Result<(bool, String)> {
    let cfg = config(FOUR_LINK_POWER)?;
    let (cr, sols) = power_lp(&cfg, None, None, GAIN_TOL)?;
    let s = &sols[0];
    let node = &cfg.channel()?.nodes[0];
    let margin = cr.constant.margin(&s.powers, node)?;
    let mut c = Check::new();
    c.expect(s.feasible, format!("C = {:.6}, powers {:?}", cr.constant.c_tau, s.powers));
    c.expect(margin >= -1e-6, format!("constraint margin {margin:.3e}"));
    let reference = [15.0, 10.0, 14.0, 11.0];
    let dist: Vec<String> = s
        .powers
        .iter()
        .zip(reference)
        .map(|(p, r)| format!("{:+.1}%", 100.0 * (p - r) / r))
        .collect();
    c.info(format!(
        "offset from reference (15, 10, 14, 11), informational: {}",
        dist.join(", ")
    ));
    c.expect(!cr.overridden, format!("gamma + L = {:.4}", cr.gamma_plus_l));
    Ok(c.finish())
}

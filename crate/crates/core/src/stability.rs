//! Small-gain conditions for the stochastic and deterministic protocols, and
//! their inversion into minimum stabilising arrival rates.
//!
//! Both left-hand sides are strictly decreasing in ω on their domains, so the
//! minimum rate is found by plain bisection.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{LtiWncs, Matrix};
use crate::numerics::{abs_matrix, is_hurwitz, l2_gain, spectral_norm, GainQuery};
use crate::protocols::{expected_cover_time, AsUgesConstants};

const OMEGA_MAX: f64 = 1e12;
const BISECTION_ITERS: usize = 200;
const BISECTION_RTOL: f64 = 1e-6;
const CURVE_POINTS: usize = 200;

fn check_node_probabilities(f: &[f64]) -> Result<()> {
    if f.is_empty() {
        return Err(Error::param("need at least one node probability"));
    }
    if let Some(bad) = f.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::param(format!("node probability {bad} outside (0, 1]")));
    }
    Ok(())
}

/// Lower limit `N|A| / min_n f_n (N - n + 1)` on ω for the stochastic
/// protocol.
pub fn stochastic_theorem_floor(norm_a: f64, f: &[f64]) -> Result<f64> {
    check_node_probabilities(f)?;
    let n = f.len() as f64;
    let m = f
        .iter()
        .enumerate()
        .map(|(i, &fi)| fi * (n - i as f64))
        .fold(f64::INFINITY, f64::min);
    Ok(n * norm_a / m)
}

/// `ρ_ω = Π_n f_n(N-n+1) / (f_n(N-n+1) - N|A|/ω) - 1`.
pub fn rho_omega(omega: f64, norm_a: f64, f: &[f64]) -> Result<f64> {
    let floor = stochastic_theorem_floor(norm_a, f)?;
    if !(omega > floor && omega.is_finite()) {
        return Err(Error::Domain {
            what: "arrival rate below the stochastic floor",
            value: omega,
            bound: floor,
        });
    }
    let n = f.len() as f64;
    let shift = n * norm_a / omega;
    let prod: f64 = f
        .iter()
        .enumerate()
        .map(|(i, &fi)| {
            let w = fi * (n - i as f64);
            w / (w - shift)
        })
        .product();
    Ok(prod - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StochasticGainInputs {
    pub gamma: f64,
    pub norm_a: f64,
    /// Cumulative node probabilities.
    pub f: Vec<f64>,
}

impl StochasticGainInputs {
    pub fn new(gamma: f64, norm_a: f64, f: Vec<f64>) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) || !(norm_a >= 0.0 && norm_a.is_finite()) {
            return Err(Error::param(format!(
                "gain constants must be finite and nonnegative (gamma = {gamma}, |A| = {norm_a})"
            )));
        }
        check_node_probabilities(&f)?;
        Ok(Self { gamma, norm_a, f })
    }

    fn with_min_probability(&self) -> Self {
        let m = self.f.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            f: vec![m; self.f.len()],
            ..self.clone()
        }
    }
}

/// `E{T} γ (1 + ρ) / ((ω - |A|)(1 - ρ))`; stability is certified when below 1.
pub fn smallgain_lhs_stochastic(omega: f64, inputs: &StochasticGainInputs) -> Result<f64> {
    let rho = rho_omega(omega, inputs.norm_a, &inputs.f)?;
    if rho >= 1.0 {
        return Err(Error::Domain {
            what: "rho_omega must stay below 1",
            value: rho,
            bound: 1.0,
        });
    }
    if inputs.gamma == 0.0 {
        return Ok(0.0);
    }
    let cover = expected_cover_time(&inputs.f)?;
    Ok(cover * inputs.gamma * (1.0 + rho) / ((omega - inputs.norm_a) * (1.0 - rho)))
}

/// Rate at which `ρ_ω = 1`; the stochastic condition is only meaningful
/// above it.
pub fn stochastic_validity_floor(norm_a: f64, f: &[f64]) -> Result<f64> {
    let floor = stochastic_theorem_floor(norm_a, f)?;
    if norm_a == 0.0 {
        return Ok(0.0);
    }
    // ρ decreases from +∞ at the theorem floor to 0 as ω → ∞.
    let mut lo = floor;
    let mut hi = floor * 2.0;
    while rho_omega(hi, norm_a, f)? >= 1.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..BISECTION_ITERS {
        if hi - lo <= 1e-14 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= floor || rho_omega(mid, norm_a, f)? >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub omega: f64,
    pub lhs: f64,
    /// Stochastic mode: `ρ_ω`. Deterministic mode: the per-period ratio of
    /// the series in `s_∞`.
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBoundResult {
    pub omega_star: f64,
    pub validity_floor: f64,
    pub lhs_curve: Vec<CurvePoint>,
    /// Same pipeline with every node probability replaced by the smallest.
    pub tabbara_omega: f64,
    pub tabbara_ratio: f64,
}

/// Smallest ω above `floor` with `lhs(ω) < 1`, to relative tolerance.
fn bisect_rate<F: Fn(f64) -> Result<f64>>(lhs: F, floor: f64) -> Result<f64> {
    let mut lo = if floor > 0.0 { floor * (1.0 + 1e-9) } else { f64::MIN_POSITIVE };
    if lhs(lo)? < 1.0 {
        return Ok(lo);
    }
    let mut hi = OMEGA_MAX;
    if lhs(hi)? >= 1.0 {
        return Err(Error::UnboundedRate { limit: OMEGA_MAX });
    }
    // Bisect in log scale first so the bracket shrinks quickly from 1e12.
    for _ in 0..BISECTION_ITERS {
        if hi - lo <= BISECTION_RTOL * hi {
            return Ok(hi);
        }
        let mid = if hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if lhs(mid)? < 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn sample_curve<F: Fn(f64) -> Result<(f64, f64)>>(f: F, from: f64, to: f64) -> Result<Vec<CurvePoint>> {
    let (a, b) = (from.ln(), to.ln());
    (0..CURVE_POINTS)
        .map(|k| {
            let omega = (a + (b - a) * k as f64 / (CURVE_POINTS - 1) as f64).exp();
            let (lhs, rho) = f(omega)?;
            Ok(CurvePoint { omega, lhs, rho })
        })
        .collect()
}

fn curve_start(floor: f64, omega_star: f64) -> f64 {
    if floor > 0.0 {
        floor * (1.0 + 1e-3)
    } else {
        omega_star / 100.0
    }
}

fn stochastic_omega(inputs: &StochasticGainInputs) -> Result<(f64, f64)> {
    let floor = stochastic_validity_floor(inputs.norm_a, &inputs.f)?;
    if inputs.gamma == 0.0 {
        return Ok((floor, floor));
    }
    let omega = bisect_rate(|w| {
        match smallgain_lhs_stochastic(w, inputs) {
            Ok(v) => Ok(v),
            // At or below the validity floor the condition cannot hold.
            Err(Error::Domain { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }, floor)?;
    Ok((omega, floor))
}

pub fn min_rate_stochastic(inputs: &StochasticGainInputs) -> Result<RateBoundResult> {
    let (omega_star, validity_floor) = stochastic_omega(inputs)?;
    let (tabbara_omega, _) = stochastic_omega(&inputs.with_min_probability())?;
    let start = curve_start(validity_floor, omega_star);
    let end = (4.0 * tabbara_omega.max(omega_star)).max(start * 10.0);
    let lhs_curve = sample_curve(
        |w| {
            Ok((
                smallgain_lhs_stochastic(w, inputs)?,
                rho_omega(w, inputs.norm_a, &inputs.f)?,
            ))
        },
        start,
        end,
    )?;
    Ok(RateBoundResult {
        omega_star,
        validity_floor,
        lhs_curve,
        tabbara_omega,
        tabbara_ratio: tabbara_omega / omega_star,
    })
}

/// Sum of `Σ_j r^j Π_{ι<j} κ_ι` for a periodic `κ`, in closed form over one
/// period. Returns the sum and the per-period ratio `Π_ι r κ_ι`.
pub fn periodic_series_sum(r: f64, kappas: &[f64]) -> Result<(f64, f64)> {
    if kappas.is_empty() {
        return Err(Error::param("empty kappa period"));
    }
    let mut partial = 0.0;
    let mut prod = 1.0;
    for &k in kappas {
        partial += prod;
        prod *= r * k;
    }
    if !(prod < 1.0) {
        return Err(Error::Divergent(format!("per-period ratio {prod} >= 1")));
    }
    Ok((partial / (1.0 - prod), prod))
}

/// `s_∞(ω) = Σ_j (ω/(ω-L))^j Π_{ι<j} E{κ_ι}` for the periodic `E{κ}`.
pub fn s_infinity(omega: f64, l: f64, kappas: &[f64], kappa_bar: f64) -> Result<f64> {
    let floor = l / (1.0 - kappa_bar);
    if !(kappa_bar < 1.0) || !(omega > floor) || !omega.is_finite() {
        return Err(Error::Divergent(format!(
            "omega = {omega} not above L/(1 - kappa_bar) = {floor}"
        )));
    }
    Ok(periodic_series_sum(omega / (omega - l), kappas)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeterministicGainInputs {
    pub gamma: f64,
    pub l: f64,
    pub kappa_bar: f64,
    pub period_kappas: Vec<f64>,
}

impl DeterministicGainInputs {
    pub fn new(gamma: f64, l: f64, constants: &AsUgesConstants) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) || !(l >= 0.0 && l.is_finite()) {
            return Err(Error::param(format!(
                "gain constants must be finite and nonnegative (gamma = {gamma}, L = {l})"
            )));
        }
        if !(constants.kappa_bar < 1.0) {
            return Err(Error::NotAsUges {
                kappa_bar: constants.kappa_bar,
            });
        }
        Ok(Self {
            gamma,
            l,
            kappa_bar: constants.kappa_bar,
            period_kappas: constants.period_kappas.clone(),
        })
    }

    pub fn floor(&self) -> f64 {
        self.l / (1.0 - self.kappa_bar)
    }

    fn with_min_probability(&self) -> Self {
        Self {
            period_kappas: vec![self.kappa_bar; self.period_kappas.len()],
            ..self.clone()
        }
    }
}

/// `γ s_∞(ω) / (ω - L)`.
pub fn smallgain_lhs_deterministic(omega: f64, inputs: &DeterministicGainInputs) -> Result<f64> {
    let s = s_infinity(omega, inputs.l, &inputs.period_kappas, inputs.kappa_bar)?;
    Ok(inputs.gamma * s / (omega - inputs.l))
}

fn deterministic_omega(inputs: &DeterministicGainInputs) -> Result<f64> {
    let floor = inputs.floor();
    if inputs.gamma == 0.0 {
        return Ok(floor);
    }
    bisect_rate(|w| match smallgain_lhs_deterministic(w, inputs) {
        Ok(v) => Ok(v),
        Err(Error::Divergent(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }, floor)
}

pub fn min_rate_deterministic(inputs: &DeterministicGainInputs) -> Result<RateBoundResult> {
    let omega_star = deterministic_omega(inputs)?;
    let tabbara_omega = deterministic_omega(&inputs.with_min_probability())?;
    let validity_floor = inputs.floor();
    let start = curve_start(validity_floor, omega_star);
    let end = (4.0 * tabbara_omega.max(omega_star)).max(start * 10.0);
    let lhs_curve = sample_curve(
        |w| {
            let lhs = smallgain_lhs_deterministic(w, inputs)?;
            let (_, ratio) = periodic_series_sum(w / (w - inputs.l), &inputs.period_kappas)?;
            Ok((lhs, ratio))
        },
        start,
        end,
    )?;
    Ok(RateBoundResult {
        omega_star,
        validity_floor,
        lhs_curve,
        tabbara_omega,
        tabbara_ratio: tabbara_omega / omega_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    Stochastic,
    Deterministic,
}

/// Rate bound when every node probability is replaced by the smallest one,
/// together with the ratio to the heterogeneous bound.
pub enum TabbaraInputs<'a> {
    Stochastic(&'a StochasticGainInputs),
    Deterministic(&'a DeterministicGainInputs),
}

pub fn tabbara_bound(inputs: TabbaraInputs<'_>) -> Result<(f64, f64)> {
    match inputs {
        TabbaraInputs::Stochastic(i) => {
            let (w, _) = stochastic_omega(i)?;
            let (t, _) = stochastic_omega(&i.with_min_probability())?;
            Ok((t, t / w))
        }
        TabbaraInputs::Deterministic(i) => {
            let w = deterministic_omega(i)?;
            let t = deterministic_omega(&i.with_min_probability())?;
            Ok((t, t / w))
        }
    }
}

/// Which gain query realises the x-subsystem condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainMode {
    /// `(e, w) ↦ A21 x`.
    Stochastic,
    /// `(e, w') ↦ L1 (A21 x + a1 E2 w')` with `w = a1 w'`.
    Deterministic { a1: f64, l1: f64 },
}

pub fn x_subsystem_query(wncs: &LtiWncs, mode: GainMode) -> Result<GainQuery> {
    let (nx, ne, nw) = (wncs.n_x(), wncs.n_e(), wncs.n_w());
    let (a1, l1) = match mode {
        GainMode::Stochastic => (1.0, 1.0),
        GainMode::Deterministic { a1, l1 } => (a1, l1),
    };
    let mut b = Matrix::zeros(nx, ne + nw);
    b.view_mut((0, 0), (nx, ne)).copy_from(&wncs.a12);
    b.view_mut((0, ne), (nx, nw)).copy_from(&(&wncs.e1 * a1));
    let c = &wncs.a21 * l1;
    let mut d = Matrix::zeros(ne, ne + nw);
    if matches!(mode, GainMode::Deterministic { .. }) {
        d.view_mut((0, ne), (ne, nw)).copy_from(&(&wncs.e2 * (l1 * a1)));
    }
    GainQuery::new(wncs.a11.clone(), b, c, d)
}

/// L2 gain of the x-subsystem. A non-Hurwitz `A11` means the emulated
/// controller does not stabilise the plant.
pub fn x_subsystem_gain(wncs: &LtiWncs, mode: GainMode, tol: f64) -> Result<f64> {
    let (stable, max_real) = is_hurwitz(&wncs.a11)?;
    if !stable {
        return Err(Error::NotHurwitz { max_real });
    }
    l2_gain(&x_subsystem_query(wncs, mode)?, tol)
}

/// `|Ā22|`: 2-norm of the entrywise absolute value of `A22`.
pub fn norm_abs_a22(wncs: &LtiWncs) -> Result<f64> {
    spectral_norm(&abs_matrix(&wncs.a22))
}

/// Rate analysis of an LTI loop under both protocol models.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LtiRateReport {
    pub node_probabilities: Vec<f64>,
    pub expected_cover: f64,
    pub norm_abs_a22: f64,
    pub gamma_stochastic: f64,
    pub gamma_deterministic: f64,
    pub l1: f64,
    pub l: f64,
    pub eta: f64,
    pub kappa_bar: f64,
    pub period_kappas: Vec<f64>,
    pub stochastic: RateBoundResult,
    pub deterministic: RateBoundResult,
}

pub fn analyze_lti_rates(
    wncs: &LtiWncs,
    f: &[f64],
    constants: &AsUgesConstants,
    l1: f64,
    tol: f64,
) -> Result<LtiRateReport> {
    let norm_a = norm_abs_a22(wncs)?;
    let gamma_s = x_subsystem_gain(wncs, GainMode::Stochastic, tol)?;
    let gamma_d = x_subsystem_gain(
        wncs,
        GainMode::Deterministic {
            a1: constants.a1,
            l1,
        },
        tol,
    )?;
    let l = l1 * norm_a / constants.a1;
    let stoch_in = StochasticGainInputs::new(gamma_s, norm_a, f.to_vec())?;
    let det_in = DeterministicGainInputs::new(gamma_d, l, constants)?;
    Ok(LtiRateReport {
        node_probabilities: f.to_vec(),
        expected_cover: expected_cover_time(f)?,
        norm_abs_a22: norm_a,
        gamma_stochastic: gamma_s,
        gamma_deterministic: gamma_d,
        l1,
        l,
        eta: constants.eta,
        kappa_bar: constants.kappa_bar,
        period_kappas: constants.period_kappas.clone(),
        stochastic: min_rate_stochastic(&stoch_in)?,
        deterministic: min_rate_deterministic(&det_in)?,
    })
}

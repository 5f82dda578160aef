//! Independent oracles: each result is checked against a separately
//! implemented computation or a value frozen from an offline reference
//! computation.

use approx::assert_relative_eq;
use nalgebra::{dmatrix, DVector};
use rand::Rng;
use wncs_core::config::Config;
use wncs_core::model::{Matrix, NetworkTopology, ProtocolKind, TransmissionModel};
use wncs_core::numerics::{eigenvalues, frequency_sweep_peak, l2_gain, stream_rng, GainQuery, Rk4};
use wncs_core::pipeline::{power_lp, rate_report};
use wncs_core::power::{solve_problem2, StabilityConstant};
use wncs_core::protocols::expected_cover_time;
use wncs_core::sim::{empirical_protocol_stats, simulate, LtiDynamics, SimConfig};
use wncs_core::validate::{BATCH_REACTOR_RR, BATCH_REACTOR_STOCHASTIC, FOUR_LINK_POWER};

/// `exp(A)` by scaling and squaring of a truncated Taylor series.
fn expm(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let norm = a.abs().row_sum().max();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(s);
    let mut term = Matrix::identity(n, n);
    let mut sum = Matrix::identity(n, n);
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Expected cover time of uniform random scheduling by first-step analysis
/// over covered subsets.
fn exact_cover_time(f: &[f64]) -> f64 {
    let n = f.len();
    let full = (1usize << n) - 1;
    let mut e = vec![0.0; full + 1];
    for s in (0..full).rev() {
        let mut rate = 0.0;
        let mut acc = 1.0;
        for (k, &fk) in f.iter().enumerate() {
            if s >> k & 1 == 0 {
                let p = fk / n as f64;
                rate += p;
                acc += p * e[s | 1 << k];
            }
        }
        e[s] = acc / rate;
    }
    e[0]
}

#[test]
fn exact_cover_time_matches_reference_fractions() {
    assert_relative_eq!(exact_cover_time(&[0.24, 0.6]), 65.0 / 7.0, max_relative = 1e-14);
    assert_relative_eq!(exact_cover_time(&[0.5, 0.2, 0.9]), 17.05248917748918, max_relative = 1e-13);
}

#[test]
fn closed_form_cover_time_is_exact_for_equal_probabilities() {
    for (n, f) in [(1, 0.3), (2, 0.5), (4, 0.9), (6, 1.0)] {
        let probs = vec![f; n];
        assert_relative_eq!(expected_cover_time(&probs).unwrap(), exact_cover_time(&probs), max_relative = 1e-12);
    }
}

#[test]
fn empirical_cover_time_matches_exact_chain() {
    let f = [0.24, 0.6];
    let topo = NetworkTopology::sequential(&[vec![0.24], vec![0.6]]).unwrap();
    let stats = empirical_protocol_stats(&topo, ProtocolKind::StochasticUniform, 200_000, 0, 11).unwrap();
    let exact = exact_cover_time(&f);
    let z = (stats.cover_mean() - exact) / stats.cover_standard_error();
    assert!(z.abs() < 4.0, "mean {} vs {exact} ({z:.2} SE)", stats.cover_mean());
}

#[test]
fn expm_oracle_sanity() {
    let rot = expm(&dmatrix![0.0, 1.0; -1.0, 0.0]);
    assert_relative_eq!(rot[(0, 0)], 1f64.cos(), epsilon = 1e-14);
    assert_relative_eq!(rot[(0, 1)], 1f64.sin(), epsilon = 1e-14);
    let d = expm(&dmatrix![-3.0, 0.0; 0.0, 2.0]);
    assert_relative_eq!(d[(0, 0)], (-3f64).exp(), max_relative = 1e-13);
    assert_relative_eq!(d[(1, 1)], 2f64.exp(), max_relative = 1e-13);
}

#[test]
fn rk4_matches_matrix_exponential() {
    let w = Config::from_json(BATCH_REACTOR_RR).unwrap().wncs().unwrap();
    let a = w.flow_matrix();
    let n = a.nrows();
    let y0 = DVector::from_fn(n, |i, _| 1.0 / (1.0 + i as f64));
    let horizon = 0.5;
    let exact = expm(&(&a * horizon)) * &y0;
    let mut y = y0.clone();
    let mut rk = Rk4::new(n);
    let steps = 5000;
    let h = horizon / steps as f64;
    for k in 0..steps {
        rk.step(|_, x, dx| dx.gemv(1.0, &a, x, 0.0), k as f64 * h, &mut y, h).unwrap();
    }
    let err = (&y - &exact).norm() / exact.norm();
    assert!(err < 1e-9, "relative error {err:e}");
}

#[test]
fn simulator_without_deliveries_follows_the_flow() {
    // Link probabilities cannot be zero, so use ones small enough that no
    // delivery happens in practice; every jump then leaves the state alone.
    let w = Config::from_json(BATCH_REACTOR_RR).unwrap().wncs().unwrap();
    let topo = NetworkTopology::sequential(&[vec![1e-15, 1e-15], vec![1e-15, 1e-15]]).unwrap();
    let transmission = TransmissionModel::new(200.0).unwrap();
    let cfg = SimConfig {
        protocol: ProtocolKind::RoundRobin,
        transmission,
        horizon: 0.5,
        dt: 1e-4,
        grid_points: 6,
        record_jumps: false,
    };
    let x0 = vec![1.0; 8];
    let e0 = vec![0.5, -0.5, 0.25, -0.25];
    let tr = simulate(&LtiDynamics::new(&w), &topo, &cfg, &x0, &e0, 3, 0).unwrap();
    assert!(tr.arrival_times.len() > 50);
    let y0 = DVector::from_iterator(12, x0.iter().chain(&e0).copied());
    let a = w.flow_matrix();
    for (t, s) in tr.times.iter().zip(&tr.states) {
        let exact = expm(&(&a * *t)) * &y0;
        let err = (s - &exact).norm() / exact.norm();
        assert!(err < 1e-8, "t = {t}: relative error {err:e}");
    }
}

fn random_query<R: Rng>(rng: &mut R) -> GainQuery {
    let n = rng.random_range(1..=7);
    let (ni, no) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let mut a = Matrix::from_fn(n, n, |_, _| rng.random_range(-3.0..3.0));
    let max_re = eigenvalues(&a).unwrap().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let shift = max_re + rng.random_range(0.05..2.0);
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let b = Matrix::from_fn(n, ni, |_, _| rng.random_range(-1.0..1.0));
    let c = Matrix::from_fn(no, n, |_, _| rng.random_range(-1.0..1.0));
    let d = Matrix::from_fn(no, ni, |_, _| if rng.random_bool(0.5) { rng.random_range(-1.0..1.0) } else { 0.0 });
    GainQuery::new(a, b, c, d).unwrap()
}

#[test]
fn hamiltonian_gain_agrees_with_dense_sweep() {
    let mut rng = stream_rng(404, 0);
    for k in 0..200 {
        let q = random_query(&mut rng);
        let gamma = l2_gain(&q, 1e-10).unwrap();
        let sweep = frequency_sweep_peak(&q, 1e-4, 1e4, 6000).unwrap().value;
        assert!(gamma >= sweep * (1.0 - 1e-12), "system {k}: {gamma} below sweep {sweep}");
        assert!((gamma - sweep) / gamma < 1e-6, "system {k}: {gamma} vs sweep {sweep}");
    }
}

#[test]
fn batch_reactor_rates_match_reference_computation() {
    // Frozen from an independent dense-grid computation of the same bounds.
    let rr = rate_report(&Config::from_json(BATCH_REACTOR_RR).unwrap(), 1e-10).unwrap();
    assert_relative_eq!(rr.norm_abs_a22, 8.963, max_relative = 1e-3);
    assert_relative_eq!(rr.gamma_stochastic, 22.17911, max_relative = 1e-5);
    assert_relative_eq!(rr.expected_cover, 7.5, max_relative = 1e-12);
    assert_relative_eq!(rr.stochastic.omega_star, 298.46, max_relative = 1e-4);
    assert_relative_eq!(rr.stochastic.validity_floor, 115.05, max_relative = 1e-4);
    assert_relative_eq!(rr.stochastic.tabbara_omega, 495.16, max_relative = 1e-4);
    assert_relative_eq!(rr.deterministic.omega_star, 360.89, max_relative = 1e-4);
    assert_relative_eq!(rr.deterministic.validity_floor, 180.32, max_relative = 1e-4);
    assert_relative_eq!(rr.deterministic.tabbara_omega, 626.53, max_relative = 1e-4);
    let st = rate_report(&Config::from_json(BATCH_REACTOR_STOCHASTIC).unwrap(), 1e-10).unwrap();
    assert_eq!(st.stochastic.omega_star, rr.stochastic.omega_star);
}

#[test]
fn four_link_design_matches_reference_lp() {
    let cfg = Config::from_json(FOUR_LINK_POWER).unwrap();
    let (c, _) = power_lp(&cfg, Some(4), None, 1e-10).unwrap();
    assert_relative_eq!(c.gamma_plus_l, 31.14215, max_relative = 1e-5);
    assert_relative_eq!(c.constant.c_tau, 3.469225, max_relative = 1e-6);

    // Reference: lattice of resolution 12 solved with an independent LP
    // code at the same constant.
    let channel = cfg.channel().unwrap();
    let k = StabilityConstant::from_value(3.469225077750781, 1.0).unwrap();
    let sol = solve_problem2(&channel.nodes[0], &k, channel.p_max, 12).unwrap();
    let want = [7.898160851297722, 6.399434500050384, 7.220203041554353, 6.737860724538827];
    for (p, w) in sol.powers.iter().zip(want) {
        assert_relative_eq!(*p, w, max_relative = 1e-8);
    }
    assert_relative_eq!(sol.objective, 28.255659117441283, max_relative = 1e-9);
    assert_eq!(sol.q_star.unwrap(), vec![4.0 / 12.0, 3.0 / 12.0, 3.0 / 12.0, 2.0 / 12.0]);
}

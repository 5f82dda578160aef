use nalgebra::DVector;
use proptest::prelude::*;
use wncs_core::config::Config;
use wncs_core::lpsolve::{solve, LpProblem, LpStatus};
use wncs_core::model::{build_closed_loop, LtiController, LtiPlant, Matrix, NetworkTopology, NodeChannel, ProtocolKind, TransmissionModel};
use wncs_core::numerics::{abs_matrix, sample_exponential, spectral_norm, stream_rng};
use wncs_core::power::{phi_outage, sinr_all, solve_problem2, two_link_epsilon_star, two_link_powers, StabilityConstant};
use wncs_core::protocols::{cover_time_pgf, expected_cover_time, rr_constants_from_probabilities};
use wncs_core::sim::{simulate, LtiDynamics, SimConfig};
use wncs_core::stability::{min_rate_stochastic, smallgain_lhs_stochastic, stochastic_validity_floor, tabbara_bound, StochasticGainInputs, TabbaraInputs};
use wncs_core::validate::BATCH_REACTOR_RR;

fn matrix(r: usize, c: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, r * c).prop_map(move |v| Matrix::from_row_slice(r, c, &v))
}

fn probs(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..=1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn closed_loop_blocks_satisfy_output_relations(
        ap in matrix(3, 3), bp in matrix(3, 2), cp in matrix(2, 3),
        ac in matrix(2, 2), bc in matrix(2, 2), cc in matrix(2, 2),
    ) {
        let plant = LtiPlant::undisturbed(ap, bp, cp.clone()).unwrap();
        let ctrl = LtiController::new(ac, bc, cc.clone()).unwrap();
        let w = build_closed_loop(&plant, &ctrl).unwrap();
        let mut m = Matrix::zeros(4, 5);
        m.view_mut((0, 0), (2, 3)).copy_from(&cp);
        m.view_mut((2, 3), (2, 2)).copy_from(&cc);
        prop_assert!((&w.a21 + &m * &w.a11).amax() < 1e-12);
        prop_assert!((&w.a22 + &m * &w.a12).amax() < 1e-12);
        prop_assert_eq!(w.n_x(), 5);
        prop_assert_eq!(w.n_e(), 4);
    }

    #[test]
    fn cumulative_success_is_product_of_links(p in prop::collection::vec(probs(1..=3), 1..=4)) {
        let topo = NetworkTopology::sequential(&p).unwrap();
        for (node, links) in p.iter().enumerate() {
            let want: f64 = links.iter().product();
            prop_assert!((topo.cumulative_success(node).unwrap() - want).abs() < 1e-15);
        }
        prop_assert_eq!(topo.n_e(), p.iter().map(Vec::len).sum::<usize>());
    }

    #[test]
    fn spectral_norm_bounds(m in matrix(4, 3)) {
        let s = spectral_norm(&m).unwrap();
        prop_assert!(s + 1e-12 >= m.amax());
        prop_assert!(s <= m.norm() + 1e-12);
        prop_assert!(spectral_norm(&abs_matrix(&m)).unwrap() + 1e-12 >= s);
    }

    #[test]
    fn exponential_samples_are_positive_and_reproducible(seed in any::<u64>(), stream in 0u64..1000, rate in 1e-3f64..1e4) {
        let mut a = stream_rng(seed, stream);
        let mut b = stream_rng(seed, stream);
        for _ in 0..16 {
            let x = sample_exponential(&mut a, rate).unwrap();
            prop_assert!(x > 0.0 && x.is_finite());
            prop_assert_eq!(x, sample_exponential(&mut b, rate).unwrap());
        }
    }

    #[test]
    fn round_robin_constants_are_ordered(f in probs(1..=6)) {
        let k = rr_constants_from_probabilities(&f).unwrap();
        prop_assert!(k.eta <= k.kappa_bar && k.kappa_bar < 1.0);
        for &kap in &k.period_kappas {
            prop_assert!(kap <= k.kappa_bar + 1e-15 && kap >= k.eta - 1e-15);
        }
        prop_assert_eq!(k.period(), f.len());
    }

    #[test]
    fn uniform_cover_time_is_coupon_collector(n in 1usize..8, f in 0.05f64..=1.0) {
        let h: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
        let et = expected_cover_time(&vec![f; n]).unwrap();
        prop_assert!((et - n as f64 * h / f).abs() < 1e-10 * et);
    }

    #[test]
    fn pgf_is_one_at_one_and_increasing(f in probs(1..=5), s in 0.0f64..1.0) {
        prop_assert!((cover_time_pgf(&f, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let g = cover_time_pgf(&f, s).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&g));
        prop_assert!(cover_time_pgf(&f, 0.5 * s).unwrap() <= g + 1e-15);
    }

    #[test]
    fn stochastic_rate_bound_properties(gamma in 0.1f64..50.0, norm_a in 0.5f64..20.0, f in probs(1..=4)) {
        let inputs = StochasticGainInputs::new(gamma, norm_a, f.clone()).unwrap();
        let res = min_rate_stochastic(&inputs).unwrap();
        let floor = stochastic_validity_floor(norm_a, &f).unwrap();
        prop_assert!(res.omega_star >= floor);
        prop_assert!(smallgain_lhs_stochastic(res.omega_star * (1.0 + 1e-6), &inputs).unwrap() < 1.0);
        let mut last = f64::INFINITY;
        for p in &res.lhs_curve {
            if p.lhs.is_finite() {
                prop_assert!(p.lhs <= last * (1.0 + 1e-12));
                last = p.lhs;
            }
        }
        let (omega_min, ratio) = tabbara_bound(TabbaraInputs::Stochastic(&inputs)).unwrap();
        prop_assert!(ratio >= 1.0 - 1e-9 && omega_min >= res.omega_star * (1.0 - 1e-9));
    }

    #[test]
    fn raising_one_power_helps_it_and_hurts_the_rest(p in prop::collection::vec(0.1f64..50.0, 3), i in 0usize..3, k in 1.01f64..10.0) {
        let g = Matrix::from_row_slice(3, 3, &[0.3, 0.02, 0.05, 0.01, 0.4, 0.03, 0.04, 0.02, 0.2]);
        let ch = NodeChannel::new(g, vec![1.0; 3]).unwrap();
        let mut q = p.clone();
        q[i] *= k;
        let (before, after) = (sinr_all(&p, &ch).unwrap(), sinr_all(&q, &ch).unwrap());
        for j in 0..3 {
            if j == i {
                prop_assert!(after[j] > before[j]);
            } else {
                prop_assert!(after[j] < before[j]);
            }
            prop_assert!(phi_outage(after[j], 1.0) > 0.0 && phi_outage(after[j], 1.0) < 1.0);
        }
    }

    #[test]
    fn two_link_lp_meets_constraint_and_matches_closed_form(
        g11 in 0.1f64..1.0, g22 in 0.1f64..1.0, g12 in 0.001f64..0.05, g21 in 0.001f64..0.05, c in 1.0f64..4.0,
    ) {
        let ch = NodeChannel::new(Matrix::from_row_slice(2, 2, &[g11, g12, g21, g22]), vec![1.0, 1.0]).unwrap();
        let k = StabilityConstant::from_value(c, 1.0).unwrap();
        let sol = solve_problem2(&ch, &k, 1e9, 100).unwrap();
        prop_assert!(sol.feasible);
        prop_assert!(sol.constraint_margin >= -1e-9 * c);
        let eps = two_link_epsilon_star(&ch, &k).unwrap();
        let (p1, p2) = two_link_powers(eps, &ch, &k).unwrap();
        // The lattice optimum cannot beat the continuous optimum.
        prop_assert!(sol.objective >= (p1 + p2) * (1.0 - 1e-9));
    }

    #[test]
    fn lp_optimum_is_feasible_with_matching_dual(
        m in 1usize..=6, n in 1usize..=4, seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = stream_rng(seed, 0);
        let a = Matrix::from_fn(m, n, |_, _| rng.random_range(-5.0..5.0));
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let ax = &a * DVector::from_column_slice(&x0);
        let b: Vec<f64> = (0..m).map(|i| ax[i] - rng.random_range(0.0..2.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..4.0)).collect();
        let p = LpProblem::new(c.clone(), a.clone(), b.clone()).unwrap();
        let out = solve(&p).unwrap();
        prop_assert_eq!(out.status, LpStatus::Optimal);
        let x = out.solution.unwrap();
        let y = out.duals.unwrap();
        let scale = 1.0 + b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        prop_assert!(p.max_violation(&x) <= 1e-9 * scale);
        prop_assert!(y.iter().all(|&v| v >= -1e-9));
        let aty = a.transpose() * DVector::from_column_slice(&y);
        for j in 0..n {
            prop_assert!(aty[j] <= c[j] + 1e-9 * scale);
        }
        let dual_obj: f64 = b.iter().zip(&y).map(|(b, y)| b * y).sum();
        prop_assert!((dual_obj - out.objective.unwrap()).abs() <= 1e-8 * scale * (1.0 + dual_obj.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn jumps_reset_only_delivered_coordinates(
        f in prop::collection::vec(prop::collection::vec(0.05f64..=1.0, 2), 2),
        seed in any::<u64>(),
        rr in any::<bool>(),
    ) {
        let w = Config::from_json(BATCH_REACTOR_RR).unwrap().wncs().unwrap();
        let topo = NetworkTopology::sequential(&f).unwrap();
        let cfg = SimConfig {
            protocol: if rr { ProtocolKind::RoundRobin } else { ProtocolKind::StochasticUniform },
            transmission: TransmissionModel::new(300.0).unwrap(),
            horizon: 0.2,
            dt: 1.0 / 300.0 / 20.0,
            grid_points: 5,
            record_jumps: true,
        };
        let dynamics = LtiDynamics::new(&w);
        let tr = simulate(&dynamics, &topo, &cfg, &[1.0; 8], &[0.0; 4], seed, 0).unwrap();
        let again = simulate(&dynamics, &topo, &cfg, &[1.0; 8], &[0.0; 4], seed, 0).unwrap();
        prop_assert_eq!(&tr.states, &again.states);
        for j in &tr.jumps {
            prop_assert_eq!(&j.pre[..8], &j.post[..8]);
            if rr {
                prop_assert_eq!(j.node, (j.k - 1) % 2);
            }
            for (node, links) in topo.nodes().iter().enumerate() {
                for (l, link) in links.links.iter().enumerate() {
                    for &i in &link.coords {
                        let delivered = node == j.node && j.link_success[l];
                        let want = if delivered { 0.0 } else { j.pre[8 + i] };
                        prop_assert_eq!(j.post[8 + i], want);
                    }
                }
            }
        }
    }
}

use iwgt_core::channelsim::{generate_snapshot, generate_snapshots, snapshot_seed, ChannelSnapshot};
use iwgt_core::eval::{evaluate_snapshot, EvalReport, Method, PowerPolicy};
use iwgt_core::netgraph::{build_graph, compute_norm_stats, mask_count, mask_edges, InterferenceGraph, MaskView};
use iwgt_core::objectives::{rates, utility, GainMatrix, Objective};
use iwgt_core::scenarios::{scenario, strong_interference, STRONG_SIGMA2};
use iwgt_core::solvers::{full_reuse, wmmse_best, WmmseConfig};
use iwgt_core::Result;
use proptest::prelude::*;

/// Shannon rates computed directly from the definition.
fn rates_oracle(g: &[f64], k: usize, p: &[f64], sigma2: f64) -> Vec<f64> {
    (0..k)
        .map(|r| {
            let interference: f64 = (0..k).filter(|&t| t != r).map(|t| g[r * k + t] * p[t]).sum();
            (1.0 + g[r * k + r] * p[r] / (interference + sigma2)).log2()
        })
        .collect()
}

fn strong_set(k: usize, n: usize, seed: u64) -> (Vec<ChannelSnapshot>, Vec<InterferenceGraph>) {
    let snaps = strong_interference(k, n, seed).unwrap();
    let stats = compute_norm_stats(snaps.iter()).unwrap();
    let graphs = snaps.iter().map(|s| build_graph(s, &stats, STRONG_SIGMA2).unwrap()).collect();
    (snaps, graphs)
}

fn wmmse_cfg(n_starts: usize) -> WmmseConfig {
    WmmseConfig { n_starts, p_max: 1.0, ..Default::default() }
}

/// Replays WMMSE-Best itself, so its ratio must be exactly one.
struct WmmseDouble {
    cfg: WmmseConfig,
    objective: Objective,
    seed: u64,
}

impl PowerPolicy for WmmseDouble {
    fn powers(&self, graph: &InterferenceGraph, _: &MaskView) -> Result<Vec<f64>> {
        let g = GainMatrix::new(graph.k, graph.power_gains())?;
        Ok(wmmse_best(&g, graph.sigma2, &self.cfg, &self.objective, self.seed)?.into_vec())
    }
}

struct FullPower(f64);

impl PowerPolicy for FullPower {
    fn powers(&self, graph: &InterferenceGraph, _: &MaskView) -> Result<Vec<f64>> {
        Ok(vec![self.0; graph.k])
    }
}

fn evaluate(graphs: &[InterferenceGraph], objective: Objective, policy: &dyn PowerPolicy, seed: u64) -> EvalReport {
    let cfg = wmmse_cfg(8);
    let records = graphs
        .iter()
        .enumerate()
        .map(|(i, g)| evaluate_snapshot(i, g, &MaskView::none(g.k), &objective, &cfg, seed, policy).unwrap())
        .collect();
    EvalReport::from_records(objective, records).unwrap()
}

#[test]
fn snapshots_follow_the_seed_schedule() {
    let sc = scenario("D4-toy").unwrap();
    let batch = generate_snapshots(&sc, 5, 100).unwrap();
    for (i, s) in batch.iter().enumerate() {
        assert_eq!(s, &generate_snapshot(&sc, snapshot_seed(100, i)).unwrap());
        assert!(s.topology.is_valid_for(&sc));
        assert!(s.topology.satisfies_nearest_neighbor());
    }
    assert_ne!(batch[0].gains, batch[1].gains);
}

#[test]
fn rates_match_the_definition_on_simulated_channels() {
    let sc = scenario("D7-toy").unwrap();
    let s = generate_snapshot(&sc, 3).unwrap();
    let k = s.k();
    let g = s.power_gains();
    let sigma2 = sc.noise_watts().unwrap();
    let p: Vec<f64> = (0..k).map(|i| sc.p_max_watts() * (i + 1) as f64 / k as f64).collect();
    let got = rates(&GainMatrix::new(k, g.clone()).unwrap(), &p, sigma2).unwrap();
    for (a, b) in got.iter().zip(rates_oracle(&g, k, &p, sigma2)) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn replaying_the_reference_gives_unit_ratio() {
    let (_, graphs) = strong_set(3, 6, 11);
    for objective in [Objective::SumRate, Objective::proportional_fairness(), Objective::qos()] {
        let double = WmmseDouble { cfg: wmmse_cfg(8), objective, seed: 4 };
        let rep = evaluate(&graphs, objective, &double, 4);
        assert_eq!(rep.summary(Method::Model).ratio_vs_wmmse_best, Some(1.0));
        for r in &rep.records {
            assert_eq!(r.ratio(Method::Model), Some(1.0));
        }
    }
}

#[test]
fn evaluation_is_repeatable() {
    let (_, graphs) = strong_set(4, 5, 2);
    let a = evaluate(&graphs, Objective::qos(), &FullPower(0.5), 9);
    let b = evaluate(&graphs, Objective::qos(), &FullPower(0.5), 9);
    assert_eq!(a, b);
}

#[test]
fn full_reuse_trails_the_reference_under_strong_interference() {
    let (snaps, graphs) = strong_set(4, 20, 5);
    let rep = evaluate(&graphs, Objective::SumRate, &FullPower(1.0), 1);
    let ratio = rep.summary(Method::FullReuse).ratio_vs_wmmse_best.unwrap();
    assert!(ratio < 1.0, "{ratio}");
    assert_eq!(rep.summary(Method::Model).mean_utility, rep.summary(Method::FullReuse).mean_utility);
    let oracle: f64 = snaps
        .iter()
        .map(|s| rates_oracle(&s.power_gains(), 4, &[1.0; 4], STRONG_SIGMA2).iter().sum::<f64>())
        .sum::<f64>()
        / snaps.len() as f64;
    assert!((rep.summary(Method::FullReuse).mean_utility - oracle).abs() < 1e-12);
}

#[test]
fn infeasible_policy_output_is_rejected() {
    let (_, graphs) = strong_set(2, 1, 0);
    let cfg = wmmse_cfg(2);
    let r = evaluate_snapshot(0, &graphs[0], &MaskView::none(2), &Objective::SumRate, &cfg, 0, &FullPower(1.5));
    assert!(r.is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mask_has_exact_count_and_stays_off_diagonal(k in 1usize..9, rho in 0.0f64..=1.0, seed in any::<u64>()) {
        let m = mask_edges(k, rho, seed).unwrap();
        let n = (k * (k - 1)) as f64;
        prop_assert_eq!(m.count(), (rho * n + 0.5).floor() as usize);
        prop_assert_eq!(m.count(), mask_count(k, rho));
        prop_assert!((0..k).all(|i| !m.is_masked(i, i)));
        prop_assert_eq!(m, mask_edges(k, rho, seed).unwrap());
    }

    /// WMMSE ascends the sum rate from the full-power start, so the
    /// multi-start winner can only improve on it under that objective.
    #[test]
    fn reference_never_loses_to_full_power(seed in 0u64..10_000) {
        let snaps = strong_interference(4, 1, seed).unwrap();
        let g = GainMatrix::new(4, snaps[0].power_gains()).unwrap();
        let best = wmmse_best(&g, STRONG_SIGMA2, &wmmse_cfg(4), &Objective::SumRate, seed).unwrap();
        let u_best = utility(&rates(&g, best.as_slice(), STRONG_SIGMA2).unwrap(), &Objective::SumRate);
        let u_full = utility(&rates(&g, full_reuse(4, 1.0).as_slice(), STRONG_SIGMA2).unwrap(), &Objective::SumRate);
        prop_assert!(u_best >= u_full, "{} < {}", u_best, u_full);
    }

    #[test]
    fn graph_relabelling_commutes_with_features(seed in 0u64..1000, shift in 1usize..6) {
        let (_, graphs) = strong_set(6, 1, seed);
        let g = &graphs[0];
        let perm: Vec<usize> = (0..6).map(|i| (i + shift) % 6).collect();
        let pg = g.permuted(&perm).unwrap();
        for a in 0..6 {
            prop_assert_eq!(pg.node_feat[a], g.node_feat[perm[a]]);
            for b in (0..6).filter(|&b| b != a) {
                prop_assert_eq!(pg.edge(a, b), g.edge(perm[a], perm[b]));
            }
        }
    }
}

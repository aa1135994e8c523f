use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spheredec::audit::{scratch_pd_indices, verify_trace, AuditTrace};
use spheredec::linalg::qr_decompose;
use spheredec::sd::{branch, evaluate_incremental, sd_decode_traced, sd_decode_with, Evaluation, SdConfig};
use spheredec::{
    generate_instance, kbest_decode, ml_bruteforce, preprocess, psd_decode, sd_decode, Balancing, CMatrix,
    Constellation, ConstellationKind, MimoInstance, PreprocessedProblem, PsdConfig, RadiusPolicy, SearchNode,
    SharedRadius, Strategy as Search,
};

fn kind() -> impl Strategy<Value = ConstellationKind> {
    prop_oneof![
        Just(ConstellationKind::Bpsk),
        Just(ConstellationKind::Qpsk),
        Just(ConstellationKind::Qam16),
    ]
}

fn strategy() -> impl Strategy<Value = Search> {
    prop_oneof![Just(Search::Bfs), Just(Search::Dfs), Just(Search::BestFs)]
}

fn instance(m: usize, extra: usize, kind: ConstellationKind, snr: f64, seed: u64) -> MimoInstance {
    let c = Constellation::new(kind);
    generate_instance(m, m + extra, &c, snr, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn small(m: usize, kind: ConstellationKind, snr: f64, seed: u64, policy: RadiusPolicy) -> PreprocessedProblem {
    preprocess(&instance(m, 0, kind, snr, seed), policy).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_strategy_and_group_is_optimal(
        m in 1usize..=4, kind in kind(), snr in -5.0f64..25.0, seed in any::<u64>(),
        strat in strategy(), group in 1usize..=3,
    ) {
        let p = small(m, kind, snr, seed, RadiusPolicy::Infinite);
        let ml = ml_bruteforce(&p).unwrap();
        let rep = sd_decode(&p, strat, group);
        prop_assert!((rep.dist - ml.dist).abs() <= 1e-9);
        let decoded = rep.decoded.unwrap();
        prop_assert!((p.metric(&decoded) - rep.dist).abs() <= 1e-9);
    }

    #[test]
    fn tree_metric_plus_offset_is_the_channel_metric(
        m in 1usize..=5, extra in 0usize..=3, kind in kind(), snr in 0.0f64..20.0, seed in any::<u64>(),
        picks in prop::collection::vec(0usize..16, 5),
    ) {
        let inst = instance(m, extra, kind, snr, seed);
        let p = preprocess(&inst, RadiusPolicy::Infinite).unwrap();
        let s: Vec<usize> = picks[..m].iter().map(|&i| i % inst.constellation.len()).collect();
        let lhs = p.metric(&s) + p.metric_offset();
        prop_assert!((lhs - inst.ml_metric(&s)).abs() <= 1e-9 * inst.ml_metric(&s).max(1.0));
    }

    #[test]
    fn qr_factors_are_valid(n in 1usize..=8, extra in 0usize..=3, seed in any::<u64>()) {
        let inst = instance(n, extra, ConstellationKind::Qpsk, 10.0, seed);
        let f = qr_decompose(&inst.h).unwrap();
        let rows = n + extra;
        prop_assert!(f.q.mul(&f.r).unwrap().max_abs_diff(&inst.h) < 1e-10);
        prop_assert!(f.q.adjoint().mul(&f.q).unwrap().max_abs_diff(&CMatrix::identity(rows)) < 1e-10);
        for i in 0..rows {
            for j in 0..n {
                if i > j {
                    prop_assert!(f.r[(i, j)].norm() < 1e-12);
                }
            }
        }
        for i in 0..n {
            prop_assert!(f.r[(i, i)].im == 0.0 && f.r[(i, i)].re >= 0.0);
        }
    }

    #[test]
    fn partial_distances_grow_along_paths_and_match_scratch(
        m in 1usize..=8, kind in kind(), snr in 0.0f64..30.0, seed in any::<u64>(),
        path in prop::collection::vec((1usize..=3, any::<u32>()), 1..8),
    ) {
        let p = small(m, kind, snr, seed, RadiusPolicy::Infinite);
        let q = p.constellation().len();
        let mut node = SearchNode::root(m);
        for (width, bits) in path {
            if node.level() == m {
                break;
            }
            let width = width.min(m - node.level());
            let ext: Vec<usize> = (0..width).map(|k| (bits as usize >> (4 * k)) % q).collect();
            let child = evaluate_incremental(&node, &ext, &p);
            prop_assert!(child.pd() >= node.pd());
            let scratch = scratch_pd_indices(child.fixed_symbols(), &p);
            prop_assert!((child.pd() - scratch).abs() <= 1e-9 * scratch.max(1e-12));
            node = child;
        }
    }

    #[test]
    fn branching_enumerates_lexicographically(m in 2usize..=5, group in 1usize..=2, seed in any::<u64>()) {
        let p = small(m, ConstellationKind::Qpsk, 10.0, seed, RadiusPolicy::Infinite);
        let kids = branch(&SearchNode::root(m), &p, group);
        prop_assert_eq!(kids.len(), 4usize.pow(group as u32));
        let tuples: Vec<Vec<u8>> = kids.iter().map(|k| k.fixed_symbols().to_vec()).collect();
        let mut sorted = tuples.clone();
        sorted.sort();
        prop_assert_eq!(tuples, sorted);
    }

    #[test]
    fn batch_and_incremental_searches_coincide(
        m in 1usize..=6, kind in kind(), snr in 0.0f64..25.0, seed in any::<u64>(),
        strat in strategy(), group in 1usize..=3,
    ) {
        let p = small(m, kind, snr, seed, RadiusPolicy::Formula);
        let run = |evaluation| sd_decode_with(&p, &SdConfig { strategy: strat, group, evaluation });
        let (a, b) = (run(Evaluation::Incremental), run(Evaluation::Batch));
        prop_assert_eq!(&a.decoded, &b.decoded);
        prop_assert_eq!((a.visited_nodes, a.pd_calcs), (b.visited_nodes, b.pd_calcs));
    }

    #[test]
    fn erasure_exactly_when_the_sphere_is_empty(
        m in 1usize..=4, kind in kind(), snr in 0.0f64..20.0, seed in any::<u64>(), scale in 0.2f64..3.0,
    ) {
        let base = small(m, kind, snr, seed, RadiusPolicy::Infinite);
        let ml = ml_bruteforce(&base).unwrap().dist;
        let radius = (ml * scale).max(1e-6);
        let p = base.with_radius_sq(radius);
        for strat in [Search::Bfs, Search::Dfs, Search::BestFs] {
            let rep = sd_decode(&p, strat, 1);
            prop_assert_eq!(rep.is_erasure(), ml >= radius);
        }
    }

    #[test]
    fn shared_radius_keeps_the_minimum(offers in prop::collection::vec(0.0f64..1e6, 1..50)) {
        let r = SharedRadius::new(f64::INFINITY);
        for &o in &offers {
            let before = r.get();
            prop_assert_eq!(r.offer(o), before);
        }
        prop_assert_eq!(r.get(), offers.iter().cloned().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn parallel_decoders_are_optimal(
        m in 1usize..=4, kind in kind(), snr in 0.0f64..20.0, seed in any::<u64>(),
        workers in 1usize..=5, dynamic in any::<bool>(),
    ) {
        let p = small(m, kind, snr, seed, RadiusPolicy::Infinite);
        let ml = ml_bruteforce(&p).unwrap().dist;
        let balancing = if dynamic { Balancing::Dynamic } else { Balancing::Static };
        let psd = psd_decode(&p, &PsdConfig::new(workers, balancing));
        prop_assert!((psd.dist - ml).abs() <= 1e-9);
        let pl = spheredec::pl_sd_decode(&p, workers, 1 + seed as usize % 5);
        prop_assert!((pl.dist - ml).abs() <= 1e-9);
    }

    #[test]
    fn kbest_is_exhaustive_once_k_covers_the_tree(m in 1usize..=4, seed in any::<u64>(), snr in 0.0f64..20.0) {
        let p = small(m, ConstellationKind::Qpsk, snr, seed, RadiusPolicy::Infinite);
        let ml = ml_bruteforce(&p).unwrap().dist;
        let rep = kbest_decode(&p, 4usize.pow(m as u32 - 1));
        prop_assert!((rep.dist - ml).abs() <= 1e-9);
        prop_assert!(kbest_decode(&p, 1).dist >= ml - 1e-12);
    }

    #[test]
    fn traces_survive_a_dump_round_trip(m in 1usize..=4, kind in kind(), seed in any::<u64>(), strat in strategy()) {
        let p = small(m, kind, 5.0, seed, RadiusPolicy::Formula);
        let (_, trace) = sd_decode_traced(&p, &SdConfig { strategy: strat, ..SdConfig::default() });
        prop_assert!(verify_trace(&trace, &p).is_clean());
        let parsed = AuditTrace::parse(&trace.dump()).unwrap();
        prop_assert_eq!(parsed, trace);
    }
}

use std::collections::BTreeSet;
use std::sync::Arc;

use mcdl::codec::{decode_conditional, encode_conditional, information_bits};
use mcdl::graph::SubsetSpec;
use mcdl::graph::{build_grid, subset_geometry, Graph, Tractability};
use mcdl::inference::{brute_force_conditional, fold_boundary};
use mcdl::model::{restricted_statistic, spins_from_bits, PairwiseModel, ParameterTying, Spin};
use mcdl::oracle::{check_instance, random_tree_instance, OracleInstance, ORACLE_TOLERANCE};
use mcdl::sampler::{sample_sequence, SampleSequence};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, max_subset: usize) -> OracleInstance {
    random_tree_instance(&mut ChaCha8Rng::seed_from_u64(seed), max_subset).unwrap()
}

fn random_model(rng: &mut ChaCha8Rng, graph: Arc<Graph>, scale: f64) -> PairwiseModel {
    let nodes = (0..graph.node_count())
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    let edges = (0..graph.edge_count())
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    PairwiseModel::new(graph, nodes, edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_counts(h in 1usize..12, w in 1usize..12, toroidal in any::<bool>()) {
        let toroidal = toroidal && h >= 3 && w >= 3;
        let g = build_grid(h, w, toroidal).unwrap();
        prop_assert_eq!(g.node_count(), h * w);
        let expected = if toroidal {
            2 * h * w
        } else {
            h * (w - 1) + (h - 1) * w
        };
        prop_assert_eq!(g.edge_count(), expected);
        let degree_sum: usize = (0..g.node_count()).map(|n| g.degree(n)).sum();
        prop_assert_eq!(degree_sum, 2 * g.edge_count());
    }

    #[test]
    fn geometry_partitions_edges(seed in any::<u64>(), size in 1usize..14) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (rng.gen_range(1..7), rng.gen_range(1..7));
        let g = build_grid(h, w, h >= 3 && w >= 3 && rng.gen_bool(0.3)).unwrap();
        let mut nodes: Vec<usize> = (0..g.node_count()).collect();
        use rand::seq::SliceRandom;
        nodes.shuffle(&mut rng);
        nodes.truncate(size.min(g.node_count()));
        let geom = subset_geometry(&g, &nodes, 16).unwrap();

        let u: BTreeSet<usize> = geom.subset().iter().copied().collect();
        let bd: BTreeSet<usize> = geom.boundary().iter().copied().collect();
        prop_assert!(u.is_disjoint(&bd));
        let closure: BTreeSet<usize> = u.union(&bd).copied().collect();
        prop_assert_eq!(closure.into_iter().collect::<Vec<_>>(), geom.closure().to_vec());
        for &b in &bd {
            prop_assert!(g.neighbors(b).iter().any(|&(m, _)| u.contains(&m)));
        }
        let touching = g.edges().iter().filter(|(a, b)| u.contains(a) || u.contains(b)).count();
        prop_assert_eq!(geom.interior_edges().len() + geom.crossing_edges().len(), touching);
        for e in geom.crossing_edges() {
            let (a, b) = g.edge(e.edge);
            let inner = geom.subset()[e.inner];
            let outer = geom.boundary()[e.outer];
            prop_assert!((a, b) == (inner, outer) || (b, a) == (inner, outer));
        }
        let acyclic = geom.interior_edges().len() + components(&g, &u) == u.len();
        match geom.tractability() {
            Tractability::Tree => prop_assert!(acyclic),
            Tractability::SmallBruteForce => prop_assert!(!acyclic && u.len() <= 16),
            Tractability::Intractable => prop_assert!(!acyclic && u.len() > 16),
        }
    }

    #[test]
    fn conditional_normalizes(seed in any::<u64>()) {
        let inst = instance(seed, 10);
        let cond = fold_boundary(&inst.model, &inst.geometry, &inst.boundary).unwrap();
        let n = inst.geometry.subset().len();
        let total: f64 = (0..1usize << n)
            .map(|b| cond.log_prob(&spins_from_bits(b, n)).unwrap().exp())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tree_inference_matches_enumeration(seed in any::<u64>()) {
        let errs = check_instance(&instance(seed, 12)).unwrap();
        prop_assert!(errs.within(ORACLE_TOLERANCE), "{:?}", errs);
    }

    /// Conditioning on a boundary agrees with conditioning the full joint.
    #[test]
    fn conditional_matches_joint(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Arc::new(build_grid(3, 4, false).unwrap());
        let model = random_model(&mut rng, g.clone(), 1.0);
        let row = g.grid().unwrap().row_nodes(rng.gen_range(0..3));
        let geom = subset_geometry(&g, &row, 16).unwrap();
        let x: Vec<Spin> = (0..12).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
        let (xu, xbd) = geom.restrict(&x);
        let ours = fold_boundary(&model, &geom, &xbd).unwrap().log_prob(&xu).unwrap();

        // Everything outside the closure is irrelevant by the Markov property;
        // enumerating U with the rest of x fixed must give the same answer.
        let mut y = x.clone();
        let log_joint = |y: &[Spin]| model.energy(y);
        let mut terms = Vec::new();
        for b in 0..1usize << row.len() {
            for (k, &node) in row.iter().enumerate() {
                y[node] = spins_from_bits(b, row.len())[k];
            }
            terms.push(log_joint(&y));
        }
        let norm = mcdl::numeric::log_sum_exp(&terms);
        prop_assert!((ours - (log_joint(&x) - norm)).abs() < 1e-10);
    }

    #[test]
    fn site_conditional_matches_joint(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Arc::new(if rng.gen_bool(0.5) {
            build_grid(3, 3, true).unwrap()
        } else {
            build_grid(rng.gen_range(1..4), rng.gen_range(2..4), false).unwrap()
        });
        let model = random_model(&mut rng, g.clone(), 1.0);
        let n = g.node_count();
        let mut x: Vec<Spin> = (0..n).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
        let i = rng.gen_range(0..n);
        x[i] = 1;
        let lp_plus = model.joint_log_prob_bruteforce(&x).unwrap();
        x[i] = -1;
        let lp_minus = model.joint_log_prob_bruteforce(&x).unwrap();
        let expected = 1.0 / (1.0 + (lp_minus - lp_plus).exp());
        prop_assert!((model.site_conditional(&x, i).unwrap() - expected).abs() < 1e-12);
    }

    /// The conditional moments are the gradient of the conditional log-partition.
    #[test]
    fn moments_are_log_partition_gradient(seed in any::<u64>()) {
        let inst = instance(seed, 8);
        let graph = inst.model.shared_graph().clone();
        let full = inst.model.full_params();
        let moments = fold_boundary(&inst.model, &inst.geometry, &inst.boundary)
            .unwrap()
            .moments()
            .unwrap();
        let h = 1e-5;
        let phi = |full: Vec<f64>| {
            let m = PairwiseModel::from_full(graph.clone(), full).unwrap();
            fold_boundary(&m, &inst.geometry, &inst.boundary).unwrap().log_partition().unwrap()
        };
        for (c, mu) in inst.geometry.components().zip(&moments.values) {
            let k = c.full_index(&graph);
            let mut up = full.clone();
            let mut down = full.clone();
            up[k] += h;
            down[k] -= h;
            let fd = (phi(up) - phi(down)) / (2.0 * h);
            prop_assert!((fd - mu).abs() < 1e-7, "component {:?}: fd {} vs {}", c, fd, mu);
        }
    }

    /// `log p = <t, theta> - Phi` with the restricted statistic.
    #[test]
    fn log_prob_is_exponential_family(seed in any::<u64>()) {
        let inst = instance(seed, 12);
        let graph = inst.model.graph();
        let full = inst.model.full_params();
        let t = restricted_statistic(&inst.geometry, &inst.subset_values, &inst.boundary).unwrap();
        let inner: f64 = inst
            .geometry
            .components()
            .zip(&t.values)
            .map(|(c, v)| full[c.full_index(graph)] * v)
            .sum();
        let cond = fold_boundary(&inst.model, &inst.geometry, &inst.boundary).unwrap();
        let lp = cond.log_prob(&inst.subset_values).unwrap();
        prop_assert!((lp - (inner - cond.log_partition().unwrap())).abs() < 1e-10);
    }

    #[test]
    fn log_partition_is_convex_along_lines(seed in any::<u64>()) {
        let inst = instance(seed, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let graph = inst.model.shared_graph().clone();
        let base = inst.model.full_params();
        let dir: Vec<f64> = base.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let phi = |t: f64| {
            let full = base.iter().zip(&dir).map(|(b, d)| b + t * d).collect();
            let m = PairwiseModel::from_full(graph.clone(), full).unwrap();
            fold_boundary(&m, &inst.geometry, &inst.boundary).unwrap().log_partition().unwrap()
        };
        let values: Vec<f64> = (0..=10).map(|i| phi(i as f64 * 0.2)).collect();
        for w in values.windows(3) {
            prop_assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-9);
        }
    }

    #[test]
    fn sequential_conditionals_chain_to_joint(seed in any::<u64>()) {
        let inst = instance(seed, 12);
        let cond = fold_boundary(&inst.model, &inst.geometry, &inst.boundary).unwrap();
        let seq = cond.sequential_conditionals(&inst.subset_values).unwrap();
        let chained: f64 = seq
            .iter()
            .zip(&inst.subset_values)
            .map(|(d, &s)| d.prob(s).ln())
            .sum();
        prop_assert!((chained - cond.log_prob(&inst.subset_values).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn codec_roundtrip_and_length(seed in any::<u64>()) {
        let inst = instance(seed, 16);
        let stream = encode_conditional(&inst.model, &inst.geometry, &inst.subset_values, &inst.boundary).unwrap();
        let back = decode_conditional(&inst.model, &inst.geometry, &inst.boundary, &stream).unwrap();
        prop_assert_eq!(&back, &inst.subset_values);
        let ideal = information_bits(&inst.model, &inst.geometry, &inst.subset_values, &inst.boundary).unwrap();
        prop_assert!(f64::from(stream.bit_len) <= ideal + 16.0);
        prop_assert!(f64::from(stream.bit_len) >= ideal.floor());
        let bytes = stream.to_bytes();
        prop_assert_eq!(mcdl::codec::Bitstream::from_bytes(&bytes).unwrap(), stream);
    }

    #[test]
    fn tying_pullback_is_adjoint_of_expand(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Arc::new(build_grid(3, 3, false).unwrap());
        let model = random_model(&mut rng, g.clone(), 1.0);
        let node_groups: Vec<Option<usize>> = (0..9).map(|_| rng.gen_bool(0.7).then(|| rng.gen_range(0..3))).collect();
        let edge_groups: Vec<Option<usize>> = (0..12).map(|_| rng.gen_bool(0.7).then(|| rng.gen_range(0..4))).collect();
        let Ok(tying) = ParameterTying::from_groups(&model, &node_groups, &edge_groups) else {
            // Unused group ids make the partition invalid; nothing to check.
            return Ok(());
        };
        let v: Vec<f64> = (0..tying.free_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gfull: Vec<f64> = (0..tying.full_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let zero = tying.expand(&vec![0.0; tying.free_count()]).unwrap();
        let lin: Vec<f64> = tying.expand(&v).unwrap().iter().zip(&zero).map(|(a, b)| a - b).collect();
        let lhs: f64 = tying.pullback(&gfull).unwrap().iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = gfull.iter().zip(&lin).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn sample_text_roundtrip(seed in any::<u64>(), n in 1usize..6) {
        let g = Arc::new(build_grid(5, 4, false).unwrap());
        let model = PairwiseModel::homogeneous(g.clone(), 0.1, 0.3).unwrap();
        let spec = [SubsetSpec::MiddleRow, SubsetSpec::Row(0), SubsetSpec::Site(2, 1), SubsetSpec::All][(seed % 4) as usize].clone();
        let s = sample_sequence(&model, &spec, n, 3, 2, seed).unwrap();
        let text = s.to_text(&g).unwrap();
        let back = SampleSequence::parse(&text, &g).unwrap();
        prop_assert_eq!(back.to_text(&g).unwrap(), text);
        prop_assert_eq!(back.configs(), s.configs());
    }
}

fn components(g: &Graph, u: &BTreeSet<usize>) -> usize {
    let mut seen = BTreeSet::new();
    let mut count = 0;
    for &start in u {
        if !seen.insert(start) {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(m, _) in g.neighbors(v) {
                if u.contains(&m) && seen.insert(m) {
                    stack.push(m);
                }
            }
        }
    }
    count
}

#[test]
fn brute_force_path_handles_cycles() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let g = Arc::new(build_grid(4, 4, false).unwrap());
    let model = random_model(&mut rng, g.clone(), 0.8);
    let block = [5, 6, 9, 10];
    let geom = subset_geometry(&g, &block, 16).unwrap();
    assert_eq!(geom.tractability(), Tractability::SmallBruteForce);
    let bd: Vec<Spin> = (0..geom.boundary().len())
        .map(|i| if i % 3 == 0 { 1 } else { -1 })
        .collect();
    let cond = fold_boundary(&model, &geom, &bd).unwrap();
    let table = brute_force_conditional(&model, &geom, &bd, 16).unwrap();
    assert!((cond.log_partition().unwrap() - table.log_partition()).abs() < 1e-12);
    let ours = cond.moments().unwrap().values;
    for (a, b) in ours.iter().zip(table.moments(&geom, &bd)) {
        assert!((a - b).abs() < 1e-12);
    }
}

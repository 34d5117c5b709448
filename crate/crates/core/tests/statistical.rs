//! Sampler correctness and estimator behaviour on sampled data.

use std::sync::Arc;

use mcdl::estimator::{
    empirical_moment, minimize_mcdl, McdlObjective, MinimizeOptions, ObservationSet,
};
use mcdl::graph::{build_grid, Graph, SubsetSpec};
use mcdl::model::{spins_from_bits, PairwiseModel, ParameterTying, Spin};
use mcdl::sampler::{gibbs_sweep, sample_sequence, GibbsChain};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn index_of(x: &[Spin]) -> usize {
    x.iter()
        .enumerate()
        .filter(|(_, &s)| s > 0)
        .map(|(k, _)| 1 << k)
        .sum()
}

fn joint(model: &PairwiseModel) -> Vec<f64> {
    let n = model.graph().node_count();
    (0..1usize << n)
        .map(|b| {
            model
                .joint_log_prob_bruteforce(&spins_from_bits(b, n))
                .unwrap()
                .exp()
        })
        .collect()
}

/// Heat-bath kernel for updating one site.
fn site_kernel(model: &PairwiseModel, site: usize) -> Vec<Vec<f64>> {
    let n = model.graph().node_count();
    let states = 1usize << n;
    let mut k = vec![vec![0.0; states]; states];
    for (from, row) in k.iter_mut().enumerate() {
        let x = spins_from_bits(from, n);
        let p_plus = model.site_conditional(&x, site).unwrap();
        let mut y = x.clone();
        y[site] = 1;
        row[index_of(&y)] += p_plus;
        y[site] = -1;
        row[index_of(&y)] += 1.0 - p_plus;
    }
    k
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

fn small_models() -> Vec<PairwiseModel> {
    let pair = Arc::new(Graph::from_edges(2, &[(0, 1)]).unwrap());
    let path = Arc::new(Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap());
    let triangle = Arc::new(Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap());
    vec![
        PairwiseModel::new(pair, vec![0.3, -0.2], vec![0.7]).unwrap(),
        PairwiseModel::new(path, vec![0.1, 0.0, -0.5], vec![-0.4, 0.9]).unwrap(),
        PairwiseModel::new(triangle, vec![0.2, -0.3, 0.4], vec![0.5, -0.6, 0.8]).unwrap(),
    ]
}

#[test]
fn site_updates_satisfy_detailed_balance() {
    for model in small_models() {
        let pi = joint(&model);
        for site in 0..model.graph().node_count() {
            let k = site_kernel(&model, site);
            for x in 0..pi.len() {
                for y in 0..pi.len() {
                    assert!((pi[x] * k[x][y] - pi[y] * k[y][x]).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn raster_sweep_preserves_the_joint() {
    for model in small_models() {
        let pi = joint(&model);
        let n = model.graph().node_count();
        let sweep = (1..n).fold(site_kernel(&model, 0), |acc, s| {
            matmul(&acc, &site_kernel(&model, s))
        });
        for (y, &target) in pi.iter().enumerate() {
            let pushed: f64 = (0..pi.len()).map(|x| pi[x] * sweep[x][y]).sum();
            assert!((pushed - target).abs() < 1e-10);
        }
    }
}

/// Empirical state frequencies of the implemented sweep match the joint.
#[test]
fn chain_visits_states_in_proportion() {
    let model = &small_models()[2];
    let pi = joint(model);
    let mut x = vec![1; 3];
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut counts = vec![0usize; pi.len()];
    let draws = 200_000;
    for _ in 0..draws {
        gibbs_sweep(model, &mut x, &mut rng);
        counts[index_of(&x)] += 1;
    }
    for (c, p) in counts.iter().zip(&pi) {
        let freq = *c as f64 / draws as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        // Successive sweeps are correlated; allow a generous multiple.
        assert!((freq - p).abs() < 10.0 * se, "freq {freq} vs {p}");
    }
}

#[test]
fn zero_parameters_give_unbiased_spins() {
    let g = Arc::new(build_grid(10, 10, false).unwrap());
    let model = PairwiseModel::homogeneous(g, 0.0, 0.0).unwrap();
    let mut chain = GibbsChain::new(&model, 5);
    let sweeps = 2000;
    let mut total = 0.0;
    for _ in 0..sweeps {
        chain.sweep();
        total += chain.state().iter().map(|&s| f64::from(s)).sum::<f64>();
    }
    let mean = total / (sweeps * 100) as f64;
    // Independent spins: standard error 1/sqrt(200000).
    assert!(mean.abs() < 5.0 / (200_000f64).sqrt(), "mean {mean}");
}

#[test]
fn two_site_agreement_probability() {
    let g = Arc::new(Graph::from_edges(2, &[(0, 1)]).unwrap());
    let model = PairwiseModel::homogeneous(g, 0.0, 0.4).unwrap();
    let expected = 0.8f64.exp() / (1.0 + 0.8f64.exp());
    let mut chain = GibbsChain::new(&model, 17);
    let draws = 200_000;
    let mut agree = 0usize;
    for _ in 0..draws {
        chain.sweep();
        agree += usize::from(chain.state()[0] == chain.state()[1]);
    }
    let freq = agree as f64 / draws as f64;
    let se = (expected * (1.0 - expected) / draws as f64).sqrt();
    assert!(
        (freq - expected).abs() < 6.0 * se,
        "freq {freq} vs {expected}"
    );
}

#[test]
fn moments_agree_between_halves_of_a_run() {
    let g = Arc::new(build_grid(16, 16, false).unwrap());
    let model = PairwiseModel::homogeneous(g, 0.0, 0.3).unwrap();
    let s = sample_sequence(&model, &SubsetSpec::MiddleRow, 400, 500, 10, 3).unwrap();
    let half = |range: std::ops::Range<usize>| {
        let seq = mcdl::sampler::SampleSequence::new(
            s.geometry().clone(),
            s.configs()[range].to_vec(),
            s.provenance().clone(),
        )
        .unwrap();
        empirical_moment(&seq).unwrap().values
    };
    let (a, b) = (half(0..200), half(200..400));
    let mean_edge = |v: &[f64]| {
        let n = s.geometry().subset().len();
        v[n..].iter().sum::<f64>() / (v.len() - n) as f64
    };
    assert!((mean_edge(&a) - mean_edge(&b)).abs() < 0.05);
    let mean_node = |v: &[f64]| v[..16].iter().sum::<f64>() / 16.0;
    assert!(mean_node(&a).abs() < 0.2 && mean_node(&b).abs() < 0.2);
}

/// Mean absolute error over seeds is non-increasing in n, up to one
/// inversion from noise.
#[test]
fn temporal_estimate_concentrates() {
    let g = Arc::new(build_grid(16, 16, false).unwrap());
    let truth = 0.4;
    let model = PairwiseModel::homogeneous(g, 0.0, truth).unwrap();
    let tying = ParameterTying::homogeneous(&model).unwrap();
    let mae = |n: usize| {
        let total: f64 = (0..10u64)
            .map(|seed| {
                let s = sample_sequence(&model, &SubsetSpec::MiddleRow, n, 300, 10, 100 + seed)
                    .unwrap();
                let obs = ObservationSet::temporal(model.shared_graph().clone(), &s).unwrap();
                let obj = McdlObjective::new(obs, tying.clone()).unwrap();
                let r = minimize_mcdl(&obj, &MinimizeOptions::default()).unwrap();
                assert!(r.converged);
                (r.theta[0] - truth).abs()
            })
            .sum();
        total / 10.0
    };
    let errors = [mae(25), mae(100), mae(400)];
    let inversions = errors.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(inversions <= 1, "mae {errors:?}");
    assert!(errors[2] < errors[0], "mae {errors:?}");
    assert!(errors[2] < 0.03, "mae at n=400: {}", errors[2]);
}

#[test]
fn independent_spins_estimate_near_zero() {
    let g = Arc::new(build_grid(16, 16, false).unwrap());
    let model = PairwiseModel::homogeneous(g, 0.0, 0.0).unwrap();
    let tying = ParameterTying::homogeneous(&model).unwrap();
    let s = sample_sequence(&model, &SubsetSpec::MiddleRow, 200, 10, 2, 9).unwrap();
    let obs = ObservationSet::temporal(model.shared_graph().clone(), &s).unwrap();
    let obj = McdlObjective::new(obs, tying).unwrap();
    for start in [-0.5, 0.0, 0.7] {
        let opts = MinimizeOptions {
            initial: Some(vec![start]),
            ..MinimizeOptions::default()
        };
        let r = minimize_mcdl(&obj, &opts).unwrap();
        assert!(r.converged);
        assert!(r.theta[0].abs() < 0.02, "theta {}", r.theta[0]);
    }
}

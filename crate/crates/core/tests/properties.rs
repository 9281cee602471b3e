use mdgcl::contrastive::{build_domain_token, build_training_set, merge_pair, sample_subgraph, PairPlan};
use mdgcl::graph::normalize_adjacency;
use mdgcl::io::{Checkpoint, Tensor};
use mdgcl::neural::{attention_enhance, gcn_forward, softmax};
use mdgcl::pipeline::{evaluate_metrics, few_shot_split};
use mdgcl::rng::stream;
use mdgcl::{AttentionParams, FeatureGraph, GcnParams, Matrix};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeSet;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = stream(seed, "prop.matrix");
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_graph(n: usize, d: usize, p: f64, seed: u64) -> FeatureGraph {
    let mut rng = stream(seed, "prop.graph");
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    FeatureGraph::new(n, &edges, random_matrix(n, d, seed)).unwrap()
}

fn labels_strategy() -> impl Strategy<Value = (Vec<Option<usize>>, usize)> {
    (1usize..4, 1usize..5).prop_flat_map(|(m, classes)| {
        let per_class = prop::collection::vec(m..m + 25, classes);
        (per_class, 0usize..10, any::<u64>()).prop_map(move |(counts, unlabelled, seed)| {
            let mut labels: Vec<Option<usize>> = counts
                .iter()
                .enumerate()
                .flat_map(|(c, &k)| std::iter::repeat_n(Some(c), k))
                .collect();
            labels.extend(std::iter::repeat_n(None, unlabelled));
            labels.shuffle(&mut stream(seed, "prop.labels"));
            (labels, m)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_labelled_nodes((labels, m) in labels_strategy(), seed in any::<u64>()) {
        let split = few_shot_split(&labels, m, &mut stream(seed, "split")).unwrap();
        let train: BTreeSet<usize> = split.train_ids.iter().copied().collect();
        let val: BTreeSet<usize> = split.val_ids.iter().copied().collect();
        let test: BTreeSet<usize> = split.test_ids.iter().copied().collect();
        prop_assert!(train.is_disjoint(&val) && train.is_disjoint(&test) && val.is_disjoint(&test));
        let union: BTreeSet<usize> = train.iter().chain(&val).chain(&test).copied().collect();
        let labelled: BTreeSet<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
        prop_assert_eq!(union, labelled);
        let classes: BTreeSet<usize> = labels.iter().flatten().copied().collect();
        for c in classes {
            prop_assert_eq!(split.train_ids.iter().filter(|&&i| labels[i] == Some(c)).count(), m);
        }
        let rest = val.len() + test.len();
        if rest > 0 {
            let want = ((rest as f64 / 10.0).round() as usize).max(1).min(rest);
            prop_assert_eq!(val.len(), want);
        }
    }

    #[test]
    fn metrics_ignore_class_relabelling(
        k in 1usize..6,
        pairs in prop::collection::vec((0usize..6, 0usize..6), 1..60),
        seed in any::<u64>(),
    ) {
        let preds: Vec<usize> = pairs.iter().map(|p| p.0 % k).collect();
        let truth: Vec<usize> = pairs.iter().map(|p| p.1 % k).collect();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut stream(seed, "prop.perm"));
        let a = evaluate_metrics(&preds, &truth, k).unwrap();
        let relabel = |v: &[usize]| v.iter().map(|&c| perm[c]).collect::<Vec<_>>();
        let b = evaluate_metrics(&relabel(&preds), &relabel(&truth), k).unwrap();
        prop_assert_eq!(a.accuracy, b.accuracy);
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a.macro_f1));
    }

    #[test]
    fn attention_keeps_shape_and_normalizes(
        n in 1usize..20,
        head_dim in 1usize..5,
        heads in 1usize..4,
        tokens in 1usize..6,
        seed in any::<u64>(),
    ) {
        let d = head_dim * heads;
        let x = random_matrix(n, d, seed);
        let t = random_matrix(tokens, d, seed ^ 1);
        let theta = AttentionParams::init(d, heads, &mut stream(seed, "prop.theta")).unwrap();
        let (out, cache) = attention_enhance(&x, &t, &theta).unwrap();
        prop_assert_eq!(out.shape(), (n, d));
        for k in 0..heads {
            for i in 0..n {
                let s: f64 = cache.alpha(k).row(i).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_ignores_a_common_shift(
        scores in prop::collection::vec(-30.0f64..30.0, 1..10),
        shift in -100.0f64..100.0,
    ) {
        let a = softmax(&scores);
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let b = softmax(&shifted);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gcn_is_permutation_equivariant(n in 1usize..14, p in 0.0f64..0.6, seed in any::<u64>()) {
        let g = random_graph(n, 3, p, seed);
        let params = GcnParams::init(3, 5, &mut stream(seed, "prop.gcn"));
        let (h, _) = gcn_forward(&normalize_adjacency(&g), g.features(), &params).unwrap();
        let (h2, _) = gcn_forward(&normalize_adjacency(&g), g.features(), &params).unwrap();
        prop_assert_eq!(&h, &h2);

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut stream(seed, "prop.perm"));
        let edges: Vec<(usize, usize)> = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let mut x = Matrix::zeros(n, 3);
        for u in 0..n {
            x.row_mut(perm[u]).copy_from_slice(g.features().row(u));
        }
        let pg = FeatureGraph::new(n, &edges, x).unwrap();
        let (hp, _) = gcn_forward(&normalize_adjacency(&pg), pg.features(), &params).unwrap();
        for u in 0..n {
            for j in 0..5 {
                prop_assert!((hp[(perm[u], j)] - h[(u, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_adjacency_is_symmetric(n in 1usize..15, p in 0.0f64..0.8, seed in any::<u64>()) {
        let adj = normalize_adjacency(&random_graph(n, 1, p, seed));
        for u in 0..n {
            for v in 0..n {
                prop_assert_eq!(adj.get(u, v), adj.get(v, u));
            }
        }
    }

    #[test]
    fn checkpoint_round_trips(
        tensors in prop::collection::btree_map(
            "[a-z][a-z0-9_.]{0,12}",
            prop::collection::vec(-1e6f64..1e6, 0..20),
            0..6,
        ),
    ) {
        let mut ck = Checkpoint::new();
        for (name, data) in &tensors {
            ck.insert(name.clone(), Tensor::new(vec![data.len()], data.clone()).unwrap());
        }
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn merge_topology_holds(
        na in 2usize..15,
        nb in 2usize..15,
        walk in 1usize..20,
        same in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let ga = random_graph(na, 4, 0.3, seed).with_domain(Some(0));
        let db = u32::from(!same);
        let gb = random_graph(nb, 4, 0.3, seed ^ 7).with_domain(Some(db));
        let ta = build_domain_token(ga.features(), 0).unwrap();
        let tb = build_domain_token(gb.features(), db).unwrap();
        let mut rng = stream(seed, "prop.walk");
        let a = sample_subgraph(&ga, walk, &mut rng).unwrap();
        let b = sample_subgraph(&gb, walk, &mut rng).unwrap();
        let s = merge_pair(&a, &b, &ta, &tb).unwrap();
        let (va, vb) = (a.graph.num_nodes(), b.graph.num_nodes());
        prop_assert_eq!(s.graph.num_nodes(), va + vb + 2);
        prop_assert_eq!(s.graph.num_edges(), a.graph.num_edges() + b.graph.num_edges() + va + vb + 1);
        prop_assert_eq!(s.label, usize::from(same));
        prop_assert_eq!(s.graph.features().row(va + vb), &ta.vector[..]);
    }

    #[test]
    fn pair_set_sizes(m in 2usize..5, k in 2usize..7, n_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let n = 1 + (n_frac * (k * k - 1) as f64) as usize;
        let domains: Vec<FeatureGraph> = (0..m as u64).map(|i| random_graph(10, 3, 0.3, seed ^ i)).collect();
        let plan = PairPlan::new(k, n, 4).unwrap();
        let set = build_training_set(&domains, &plan, &mut stream(seed, "sampling")).unwrap();
        prop_assert_eq!(set.len(), m * k * (k - 1) / 2 + m * (m - 1) / 2 * n);
        prop_assert_eq!(set.len(), plan.total_pairs(m));
        let negatives: BTreeSet<_> = set.pairs.iter().filter(|p| p.label() == 0).map(|p| (p.a, p.b)).collect();
        prop_assert_eq!(negatives.len(), m * (m - 1) / 2 * n);
    }
}

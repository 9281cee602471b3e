use mdgcl::dimred::{apply_map, fit_map};
use mdgcl::io::synth::{generate_synthetic_domain, SynthDomainConfig};
use mdgcl::io::{write_embeddings, Checkpoint};
use mdgcl::neural::attention_enhance;
use mdgcl::pipeline::{
    domain_separation, enhance_target, few_shot_split, finetune, pretrain, scratch_baseline, FewShotSplit,
};
use mdgcl::rng::{glorot_uniform, stream};
use mdgcl::{AttentionParams, Error, FeatureGraph, FineTunedModel, FinetuneConfig, Matrix, PretrainConfig, Task};
use rand::Rng;
use rand_distr::StandardNormal;

fn small_domain(rotation: u64, seed: u64) -> FeatureGraph {
    let cfg = SynthDomainConfig {
        num_nodes: 120,
        p_in: 0.1,
        p_out: 0.01,
        feature_dim: 24,
        basis_rotation_seed: rotation,
        ..Default::default()
    };
    generate_synthetic_domain(&cfg, seed).unwrap()
}

/// Encoder and tokens of a hand-built checkpoint of width `dim`.
fn random_checkpoint(dim: usize, hidden: usize, tokens: &[Vec<f64>], seed: u64) -> Checkpoint {
    let mut rng = stream(seed, "test.ckpt");
    let mut ck = Checkpoint::new();
    ck.insert_matrix("gcn.W1", &glorot_uniform::<f64, _>(dim, hidden, &mut rng));
    ck.insert_matrix("gcn.W2", &glorot_uniform::<f64, _>(hidden, hidden, &mut rng));
    for (i, t) in tokens.iter().enumerate() {
        ck.insert_vector(format!("token.{i}"), t);
    }
    ck
}

/// Two classes on alternating nodes, each class a ring, features on
/// separate axes.
fn separable_target() -> FeatureGraph {
    let n = 200;
    let mut rng = stream(11, "test.separable");
    let features = Matrix::from_fn(n, 6, |i, j| {
        let mean = if j == i % 2 { 2.0 } else { 0.0 };
        mean + 0.01 * rng.sample::<f64, _>(StandardNormal)
    });
    let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 2) % n)).collect();
    FeatureGraph::new(n, &edges, features)
        .unwrap()
        .with_labels((0..n).map(|i| Some(i % 2)).collect())
        .unwrap()
}

#[test]
fn separable_target_is_learned_perfectly() {
    let g = separable_target();
    let ck = random_checkpoint(4, 16, &[vec![0.0; 4], vec![0.0; 4]], 0);
    let split = few_shot_split(g.labels().unwrap(), 3, &mut stream(0, "split")).unwrap();
    let out = finetune(&ck, &g, Task::Node, &split, &FinetuneConfig::default()).unwrap();
    assert_eq!(
        out.metrics.accuracy, 1.0,
        "{:?} best epoch {} val {}",
        out.metrics, out.best_epoch, out.best_val_accuracy
    );
    assert_eq!(out.metrics.macro_f1, 1.0);
    assert_eq!(out.train_losses.len(), 200);
}

fn pretrained_checkpoint() -> Checkpoint {
    let domains = vec![small_domain(1, 1), small_domain(2, 2)];
    let cfg = PretrainConfig {
        epochs: 2,
        dim_target: 8,
        hidden: 16,
        subgraphs_per_domain: 6,
        walk_length: 15,
        ..Default::default()
    };
    pretrain(&domains, &cfg).unwrap().checkpoint()
}

fn quick_finetune() -> FinetuneConfig {
    FinetuneConfig {
        epochs: 20,
        dim_target: 8,
        hidden: 16,
        ..Default::default()
    }
}

#[test]
fn node_and_graph_tasks_run_and_are_deterministic() {
    let ck = pretrained_checkpoint();
    let g = small_domain(3, 3);
    let split = few_shot_split(g.labels().unwrap(), 1, &mut stream(5, "split")).unwrap();
    for task in [Task::Node, Task::Graph] {
        let a = finetune(&ck, &g, task, &split, &quick_finetune()).unwrap();
        let b = finetune(&ck, &g, task, &split, &quick_finetune()).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.model, b.model);
        for m in [a.metrics.accuracy, a.metrics.macro_f1] {
            assert!((0.0..=1.0).contains(&m));
        }
        let s1 = scratch_baseline(&g, task, &split, &quick_finetune()).unwrap();
        let s2 = scratch_baseline(&g, task, &split, &quick_finetune()).unwrap();
        assert_eq!(s1.metrics, s2.metrics);
        assert!(s1.model.model.attention.is_none());
        assert!((0.0..=1.0).contains(&s1.metrics.accuracy));
    }
}

#[test]
fn checkpoint_round_trip_gives_identical_finetuning() {
    let ck = pretrained_checkpoint();
    let reloaded = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
    let g = small_domain(4, 4);
    let split = few_shot_split(g.labels().unwrap(), 2, &mut stream(1, "split")).unwrap();
    let a = finetune(&ck, &g, Task::Node, &split, &quick_finetune()).unwrap();
    let b = finetune(&reloaded, &g, Task::Node, &split, &quick_finetune()).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.train_losses, b.train_losses);
    assert_eq!(
        a.model.to_checkpoint().to_bytes().unwrap(),
        b.model.to_checkpoint().to_bytes().unwrap()
    );
}

#[test]
fn fine_tuned_model_survives_save_and_load() {
    let ck = pretrained_checkpoint();
    let g = small_domain(5, 5);
    let split = few_shot_split(g.labels().unwrap(), 1, &mut stream(2, "split")).unwrap();
    for task in [Task::Node, Task::Graph] {
        let out = finetune(&ck, &g, task, &split, &quick_finetune()).unwrap();
        let bytes = out.model.to_checkpoint().to_bytes().unwrap();
        let loaded = FineTunedModel::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(loaded, out.model);
        let predicted = loaded.predict(&g, &split.test_ids).unwrap();
        assert_eq!(predicted, out.model.predict(&g, &split.test_ids).unwrap());
        let all = loaded.evaluate(&g).unwrap();
        assert!((0.0..=1.0).contains(&all.accuracy));
        assert_eq!(loaded.embeddings(&g).unwrap().shape(), (g.num_nodes(), 16));
    }
}

#[test]
fn graph_task_without_labels_is_rejected() {
    let ck = pretrained_checkpoint();
    let g = small_domain(6, 6);
    let unlabelled = g.clone().with_labels(vec![None; g.num_nodes()]).unwrap();
    let split = few_shot_split(g.labels().unwrap(), 1, &mut stream(3, "split")).unwrap();
    assert!(finetune(&ck, &unlabelled, Task::Graph, &split, &quick_finetune()).is_err());
    let empty = FewShotSplit {
        shots: 1,
        train_ids: vec![],
        val_ids: vec![],
        test_ids: vec![],
    };
    assert!(finetune(&ck, &g, Task::Node, &empty, &quick_finetune()).is_err());
}

#[test]
fn enhance_target_composes_map_and_attention() {
    let g = small_domain(7, 7);
    let mut rng = stream(7, "test.tokens");
    let tokens: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let ck = random_checkpoint(8, 16, &tokens, 1);
    let theta = AttentionParams::init(8, 2, &mut stream(7, "test.theta")).unwrap();

    let got = enhance_target(&g, &ck, &theta).unwrap();
    let x = apply_map(g.features(), &fit_map(g.features(), 8).unwrap()).unwrap();
    let t = Matrix::from_rows(&tokens).unwrap();
    let (want, _) = attention_enhance(&x, &t, &theta).unwrap();
    assert_eq!(got, want);
    assert_eq!(got.shape(), (g.num_nodes(), 8));
}

#[test]
fn one_token_adds_a_constant_row() {
    let g = small_domain(8, 8);
    let token = vec![0.5, -1.0, 0.25, 2.0, 0.0, 1.0, -0.5, 0.75];
    let ck = random_checkpoint(8, 16, std::slice::from_ref(&token), 2);
    let theta = AttentionParams::init(8, 4, &mut stream(8, "test.theta")).unwrap();
    let got = enhance_target(&g, &ck, &theta).unwrap();
    let x = apply_map(g.features(), &fit_map(g.features(), 8).unwrap()).unwrap();
    let offset: Vec<f64> = (0..8).map(|j| got[(0, j)] - x[(0, j)]).collect();
    for i in 0..g.num_nodes() {
        for j in 0..8 {
            assert!((got[(i, j)] - x[(i, j)] - offset[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_tokens_with_zero_values_leave_features() {
    let g = small_domain(9, 9);
    let ck = random_checkpoint(8, 16, &[vec![0.0; 8], vec![0.0; 8]], 3);
    let mut theta = AttentionParams::init(8, 2, &mut stream(9, "test.theta")).unwrap();
    for h in &mut theta.heads {
        h.wv = Matrix::zeros(8, 4);
    }
    let x = apply_map(g.features(), &fit_map(g.features(), 8).unwrap()).unwrap();
    assert_eq!(enhance_target(&g, &ck, &theta).unwrap(), x);
}

#[test]
fn missing_tokens_are_an_error() {
    let g = small_domain(10, 10);
    let ck = random_checkpoint(8, 16, &[], 4);
    let theta = AttentionParams::init(8, 2, &mut stream(10, "test.theta")).unwrap();
    assert!(matches!(enhance_target(&g, &ck, &theta), Err(Error::MissingTensor(_))));
    let split = few_shot_split(g.labels().unwrap(), 1, &mut stream(0, "split")).unwrap();
    assert!(finetune(&ck, &g, Task::Node, &split, &quick_finetune()).is_err());
}

#[test]
fn two_rotated_domains_become_distinguishable() {
    let domains = vec![small_domain(20, 20), small_domain(21, 21)];
    let cfg = PretrainConfig {
        epochs: 50,
        lr: 1e-3,
        dim_target: 16,
        hidden: 32,
        subgraphs_per_domain: 12,
        walk_length: 20,
        holdout_fraction: 0.2,
        seed: 3,
        ..Default::default()
    };
    let out = pretrain(&domains, &cfg).unwrap();
    let first = out.history.first().unwrap().mean_loss;
    let last = out.history.last().unwrap().mean_loss;
    assert!(last < first, "{first} -> {last}");
    assert!(out.final_holdout_accuracy().unwrap() >= 0.9, "{:?}", out.history.last());
}

#[test]
fn monte_carlo_centroids_are_accurate() {
    let mut rng = stream(12, "test.clouds");
    let means = [(0.0, 0.0), (10.0, 0.0)];
    let n = 1000;
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for (d, &(mx, my)) in means.iter().enumerate() {
        for _ in 0..n {
            rows.push(mx + rng.sample::<f64, _>(StandardNormal));
            rows.push(my + rng.sample::<f64, _>(StandardNormal));
            ids.push(d);
        }
    }
    let h = Matrix::from_vec(2 * n, 2, rows).unwrap();
    let sep = domain_separation(&h, &ids, 2).unwrap();
    let bound = 3.0 / (n as f64).sqrt();
    for (d, &(mx, my)) in means.iter().enumerate() {
        assert!((sep.centroids[d][0] - mx).abs() < bound);
        assert!((sep.centroids[d][1] - my).abs() < bound);
    }
    assert!((sep.inter_distance(0, 1).unwrap() - 10.0).abs() < 2.0 * bound * 2f64.sqrt());
}

#[test]
fn synthetic_edge_density_matches_p_in() {
    let cfg = SynthDomainConfig {
        num_nodes: 2000,
        num_communities: 2,
        p_in: 0.1,
        p_out: 0.0,
        feature_dim: 2,
        ..Default::default()
    };
    let g = generate_synthetic_domain(&cfg, 13).unwrap();
    let intra_pairs = 2 * (1000 * 999 / 2);
    let density = g.num_edges() as f64 / intra_pairs as f64;
    assert!((density - 0.1).abs() < 0.01, "{density}");
}

#[test]
fn embedding_csv_parses_back() {
    let mut rng = stream(14, "test.csv");
    let h = Matrix::from_fn(25, 3, |_, _| {
        rng.sample::<f64, _>(StandardNormal) * 10f64.powi(rng.random_range(-8..8))
    });
    let text = write_embeddings(&h, &vec![Some(1); 25], &vec![Some(0); 25]).unwrap();
    for (i, line) in text.lines().skip(1).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], i.to_string());
        for (j, f) in fields[3..].iter().enumerate() {
            let v: f64 = f.parse().unwrap();
            assert!((v - h[(i, j)]).abs() <= 1e-15 * h[(i, j)].abs());
        }
    }
}

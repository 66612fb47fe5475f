use super::*;
use crate::autodiff::gradcheck::{numerical_gradients, relative_error};
use crate::dataset::{assemble, Claim, EngagementKind, EngagementNode, Label, Source};
use crate::embedding::HashingEmbedder;
use std::sync::Arc;

// Plain nested-Vec linear algebra used as an oracle.
type Mat = Vec<Vec<f64>>;

fn mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

fn mm(a: &Mat, b: &Mat) -> Mat {
    let n = b[0].len();
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().enumerate().map(|(k, v)| v * b[k][j]).sum())
                .collect()
        })
        .collect()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = v.iter().map(|x| x.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn small_config(dim: usize, gcn: Vec<usize>) -> ModelConfig {
    ModelConfig {
        dim,
        gcn_dims: gcn,
        head_hidden: vec![],
        platforms: Platform::ALL.to_vec(),
    }
}

fn set(model: &mut ApslModel, name: &str, t: Tensor) {
    *model.param_mut(name).unwrap_or_else(|| panic!("no param {name}")) = t;
}

#[test]
fn adapter_symmetric_input() {
    let mut m = ApslModel::new(small_config(3, vec![3]), 1).unwrap();
    set(&mut m, "adapter.x.w", Tensor::identity(3));
    let mut tape = Tape::new();
    let vars = m.bind(&mut tape, false);
    let s = tape.constant(Tensor::zeros(1, 3));
    let out = m.platform_adapt(&mut tape, &vars, Platform::X, s).unwrap();
    for &v in tape.value(out).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn adapter_output_on_simplex() {
    let m = ApslModel::new(small_config(16, vec![4]), 5).unwrap();
    let emb = HashingEmbedder::new(16, 3);
    for text in ["a", "the quick brown fox", "", "x y z w v u"] {
        let mut tape = Tape::new();
        let vars = m.bind(&mut tape, false);
        let s = tape.constant(Tensor::row(emb.embed(text)));
        let out = m.platform_adapt(&mut tape, &vars, Platform::Reddit, s).unwrap();
        let v = tape.value(out);
        assert!((v.sum() - 1.0).abs() < 1e-12);
        assert!(v.data().iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn adapter_unregistered_platform() {
    let mut cfg = small_config(3, vec![3]);
    cfg.platforms = vec![Platform::Youtube];
    let m = ApslModel::new(cfg, 1).unwrap();
    let mut tape = Tape::new();
    let vars = m.bind(&mut tape, false);
    let s = tape.constant(Tensor::zeros(1, 3));
    assert!(matches!(
        m.platform_adapt(&mut tape, &vars, Platform::X, s),
        Err(ModelError::Config(_))
    ));
}

#[test]
fn adapter_gradients_match_finite_differences() {
    let m = ApslModel::new(small_config(5, vec![2]), 9).unwrap();
    let names = ["adapter.youtube.p", "adapter.youtube.w", "adapter.youtube.b"];
    let mut inputs: Vec<Tensor> = names.iter().map(|n| m.param(n).unwrap().clone()).collect();
    // move p and b off their symmetric init
    inputs[0] = Tensor::row(vec![0.7, 1.3, -0.4, 1.1, 0.2]);
    inputs[2] = Tensor::row(vec![0.05, -0.1, 0.2, 0.0, 0.3]);
    inputs.push(Tensor::new(2, 5, vec![0.3, -0.2, 0.9, 0.1, -0.5, 0.4, 0.4, -0.3, 0.8, 0.2]).unwrap());
    let weights = Tensor::new(2, 5, (0..10).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();

    let run = |ins: &[Tensor], grads: bool| {
        let mut model = m.clone();
        for (n, t) in names.iter().zip(ins) {
            set(&mut model, n, t.clone());
        }
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape, true);
        let s = tape.param(ins[3].clone());
        let out = model.platform_adapt(&mut tape, &vars, Platform::Youtube, s).unwrap();
        let w = tape.constant(weights.clone());
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum(prod);
        let value = tape.value(loss).item();
        let g = grads.then(|| {
            let g = tape.backward(loss).unwrap();
            let idx: Vec<usize> = names
                .iter()
                .map(|n| model.params().iter().position(|p| &p.name == n).unwrap())
                .collect();
            let mut out: Vec<Tensor> = idx.iter().map(|&i| g.wrt(vars[i])).collect();
            out.push(g.wrt(s));
            out
        });
        (value, g)
    };
    let analytic = run(&inputs, true).1.unwrap();
    let numeric = numerical_gradients(&inputs, 1e-5, |ins| run(ins, false).0);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = relative_error(a, n, 1e-10);
        assert!(err < 1e-4, "tensor {i}: {err:e}");
    }
}

#[test]
fn single_node_identity_gcn_returns_claim() {
    let mut m = ApslModel::new(small_config(2, vec![2]), 1).unwrap();
    set(&mut m, "gcn.x.0", Tensor::identity(2));
    let mut tape = Tape::new();
    let vars = m.bind(&mut tape, false);
    let c = tape.constant(Tensor::row(vec![0.3, -1.2]));
    let adj = tape.constant(Tensor::scalar(1.0));
    let h = m.encode_platform(&mut tape, &vars, Platform::X, adj, c).unwrap();
    assert_eq!(tape.value(h).data(), &[0.3, -1.2]);
}

fn path_tree(n: usize) -> crate::graph::PropagationTree {
    let mut es = Vec::new();
    for i in 0..n - 1 {
        es.push(EngagementNode {
            id: format!("e{i}"),
            claim_id: "c".into(),
            platform: Platform::X,
            parent_id: if i == 0 { "root".into() } else { format!("e{}", i - 1) },
            text: String::new(),
            kind: EngagementKind::Comment,
            like_count: None,
            timestamp: Some(i as i64),
        });
    }
    crate::graph::build_tree("c", Platform::X, &es).unwrap()
}

#[test]
fn three_node_path_matches_direct_products() {
    let mut m = ApslModel::new(small_config(2, vec![3, 2]), 1).unwrap();
    let w0 = Tensor::new(2, 3, vec![0.5, -0.2, 0.1, 0.3, 0.4, -0.6]).unwrap();
    let w1 = Tensor::new(3, 2, vec![0.2, 0.1, -0.3, 0.7, 0.5, -0.4]).unwrap();
    set(&mut m, "gcn.x.0", w0.clone());
    set(&mut m, "gcn.x.1", w1.clone());
    let tree = path_tree(3);
    let nodes = Tensor::new(3, 2, vec![1.0, 0.0, 0.2, 0.9, -0.4, 0.3]).unwrap();
    let mut tape = Tape::new();
    let vars = m.bind(&mut tape, false);
    let a = tape.constant(tree.normalized_adjacency());
    let x = tape.constant(nodes.clone());
    let h = m.encode_platform(&mut tape, &vars, Platform::X, a, x).unwrap();

    let s6 = 6f64.sqrt();
    let a_hat: Mat = vec![
        vec![0.5, 1.0 / s6, 0.0],
        vec![1.0 / s6, 1.0 / 3.0, 1.0 / s6],
        vec![0.0, 1.0 / s6, 0.5],
    ];
    let h1: Mat = mm(&mm(&a_hat, &mat(&nodes)), &mat(&w0))
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
        .collect();
    let h2 = mm(&mm(&a_hat, &h1), &mat(&w1));
    let pooled: Vec<f64> = (0..2).map(|j| h2.iter().map(|r| r[j]).sum()).collect();
    for (x, y) in tape.value(h).data().iter().zip(&pooled) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

#[test]
fn pooling_invariant_to_node_relabeling() {
    let m = ApslModel::new(small_config(4, vec![5, 3]), 2).unwrap();
    let es: Vec<EngagementNode> = ["a", "b", "c", "d", "e"]
        .iter()
        .zip(["root", "root", "a", "a", "c"])
        .map(|(id, parent)| EngagementNode {
            id: id.to_string(),
            claim_id: "claim".into(),
            platform: Platform::Reddit,
            parent_id: parent.into(),
            text: String::new(),
            kind: EngagementKind::Comment,
            like_count: None,
            timestamp: None,
        })
        .collect();
    let tree = crate::graph::build_tree("claim", Platform::Reddit, &es).unwrap();
    let feats: Vec<Vec<f64>> = (0..6).map(|i| (0..4).map(|j| ((i * 4 + j) as f64 * 0.71).cos()).collect()).collect();
    let order = [3usize, 0, 4, 2, 1];
    let permuted = tree.permuted(&order);
    let mut pfeats = vec![feats[0].clone()];
    pfeats.extend(order.iter().map(|&o| feats[o + 1].clone()));

    let pool = |t: &crate::graph::PropagationTree, f: &[Vec<f64>]| {
        let mut tape = Tape::new();
        let vars = m.bind(&mut tape, false);
        let a = tape.constant(t.normalized_adjacency());
        let x = tape.constant(Tensor::from_rows(f).unwrap());
        let h = m.encode_platform(&mut tape, &vars, Platform::Reddit, a, x).unwrap();
        tape.value(h).clone()
    };
    let a = pool(&tree, &feats);
    let b = pool(&permuted, &pfeats);
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-12);
    }
    assert_eq!(tree.stats(), permuted.stats());
}

fn fuse_values(
    m: &ApslModel,
    claim: Vec<f64>,
    pooled: &[(Platform, Vec<f64>)],
    uniform: bool,
) -> (Vec<f64>, BTreeMap<Platform, Vec<f64>>, Vec<f64>) {
    let mut tape = Tape::new();
    let vars = m.bind(&mut tape, false);
    let c = tape.constant(Tensor::row(claim));
    let map: BTreeMap<Platform, Var> = pooled
        .iter()
        .map(|(k, v)| (*k, tape.constant(Tensor::row(v.clone()))))
        .collect();
    let f = m.fuse(&mut tape, &vars, c, &map, uniform).unwrap();
    let alpha = f.alpha.map(|a| tape.value(a).data().to_vec()).unwrap_or_default();
    let att = f
        .attended
        .iter()
        .map(|(&k, &v)| (k, tape.value(v).data().to_vec()))
        .collect();
    (alpha, att, tape.value(f.fused).data().to_vec())
}

#[test]
fn fuse_single_platform() {
    let m = ApslModel::new(small_config(2, vec![2]), 1).unwrap();
    let (alpha, att, fused) = fuse_values(&m, vec![0.3, 0.4], &[(Platform::X, vec![1.5, -2.0])], false);
    assert_eq!(alpha, vec![1.0]);
    assert_eq!(att[&Platform::X], vec![1.5, -2.0]);
    assert_eq!(fused, vec![0.0, 0.0, 1.5, -2.0, 0.0, 0.0]);
}

#[test]
fn fuse_identical_vectors_uniform() {
    let m = ApslModel::new(small_config(2, vec![2]), 1).unwrap();
    let h = vec![0.2, 0.9];
    let (alpha, _, _) = fuse_values(
        &m,
        vec![5.0, -3.0],
        &[(Platform::Youtube, h.clone()), (Platform::X, h.clone()), (Platform::Reddit, h)],
        false,
    );
    for a in alpha {
        assert!((a - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn fuse_closed_form() {
    let m = ApslModel::new(small_config(2, vec![2]), 1).unwrap();
    let (alpha, att, fused) = fuse_values(
        &m,
        vec![1.0, 0.0],
        &[(Platform::Youtube, vec![1.0, 0.0]), (Platform::X, vec![0.0, 1.0])],
        false,
    );
    let e = (1.0 / 2f64.sqrt()).exp();
    let a0 = e / (e + 1.0);
    let a1 = 1.0 / (e + 1.0);
    assert!((alpha[0] - a0).abs() < 1e-15 && (alpha[1] - a1).abs() < 1e-15);
    assert!((att[&Platform::Youtube][0] - a0).abs() < 1e-15);
    let expected = [a0, 0.0, 0.0, a1, 0.0, 0.0];
    for (x, y) in fused.iter().zip(expected) {
        assert!((x - y).abs() < 1e-15);
    }
}

#[test]
fn fuse_uniform_weights_flag() {
    let m = ApslModel::new(small_config(2, vec![2]), 1).unwrap();
    let (_, att, _) = fuse_values(
        &m,
        vec![1.0, 0.0],
        &[(Platform::Youtube, vec![4.0, 2.0]), (Platform::Reddit, vec![-2.0, 1.0])],
        true,
    );
    assert_eq!(att[&Platform::Youtube], vec![2.0, 1.0]);
    assert_eq!(att[&Platform::Reddit], vec![-1.0, 0.5]);
}

#[test]
fn fuse_empty_is_error() {
    let m = ApslModel::new(small_config(2, vec![2]), 1).unwrap();
    let mut tape = Tape::new();
    let vars = m.bind(&mut tape, false);
    let c = tape.constant(Tensor::row(vec![1.0, 0.0]));
    assert!(m.fuse(&mut tape, &vars, c, &BTreeMap::new(), false).is_err());
}

fn classify_value(m: &ApslModel, c: &[f64], hs: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let vars = m.bind(&mut tape, false);
    let cv = tape.constant(Tensor::row(c.to_vec()));
    let hv = tape.constant(Tensor::row(hs.to_vec()));
    let y = m.classify(&mut tape, &vars, cv, hv).unwrap();
    tape.value(y).item()
}

#[test]
fn classify_zero_head_is_half() {
    let mut m = ApslModel::new(small_config(2, vec![2]), 1).unwrap();
    set(&mut m, "head.0.w", Tensor::zeros(8, 1));
    assert_eq!(classify_value(&m, &[1.0, 2.0], &[0.5; 6]), 0.5);
}

#[test]
fn classify_monotone_in_bias_and_matches_direct() {
    let mut m = ApslModel::new(small_config(2, vec![2]), 4).unwrap();
    let c = [0.3, -0.7];
    let hs = [0.1, 0.2, -0.3, 0.4, 0.5, -0.6];
    let mut prev = 0.0;
    for b in [-3.0, -1.0, 0.0, 0.5, 2.0] {
        set(&mut m, "head.0.b", Tensor::scalar(b));
        let y = classify_value(&m, &c, &hs);
        assert!(y > prev);
        prev = y;
        let w = m.param("head.0.w").unwrap();
        let z: f64 = c.iter().chain(&hs).zip(w.data()).map(|(a, b)| a * b).sum::<f64>() + b;
        assert!((y - 1.0 / (1.0 + (-z).exp())).abs() < 1e-12);
    }
}

fn fixture_sample() -> EncodedSample {
    // claim + a 3-node path on youtube, a 2-node tree on x
    let yt = path_tree(3);
    let mut platforms = BTreeMap::new();
    platforms.insert(
        Platform::Youtube,
        EncodedTree {
            adjacency: yt.normalized_adjacency(),
            comments: Some(Tensor::new(2, 2, vec![0.6, 0.8, -0.28, 0.96]).unwrap()),
        },
    );
    platforms.insert(
        Platform::X,
        EncodedTree {
            adjacency: path_tree(2).normalized_adjacency(),
            comments: Some(Tensor::row(vec![0.0, 1.0])),
        },
    );
    EncodedSample {
        id: "fx".into(),
        label: Label::Fake,
        claim: Tensor::row(vec![1.0, 0.0]),
        platforms,
    }
}

#[test]
fn content_only_equals_classify_on_zeros() {
    let m = ApslModel::new(small_config(2, vec![2]), 3).unwrap();
    let s = fixture_sample();
    let flags = AblationFlags {
        content_only: true,
        ..Default::default()
    };
    let out = m.forward(&s, flags).unwrap();
    assert!(out.content_only);
    assert_eq!(out.yhat, classify_value(&m, &[1.0, 0.0], &[0.0; 6]));
    // no trees at all takes the same path
    let mut bare = s.clone();
    bare.platforms.clear();
    assert_eq!(m.forward(&bare, AblationFlags::default()).unwrap().yhat, out.yhat);
}

#[test]
fn no_attention_halves_two_platforms() {
    let m = ApslModel::new(small_config(2, vec![2]), 3).unwrap();
    let flags = AblationFlags {
        no_attention: true,
        ..Default::default()
    };
    let out = m.forward(&fixture_sample(), flags).unwrap();
    for (k, h) in &out.pooled {
        let att = &out.attended[k];
        for (a, b) in att.iter().zip(h) {
            assert_eq!(*a, 0.5 * b);
        }
        assert_eq!(out.alpha[k], 0.5);
    }
}

#[test]
fn full_forward_matches_hand_computation() {
    let mut m = ApslModel::new(small_config(2, vec![2]), 11).unwrap();
    set(&mut m, "adapter.youtube.p", Tensor::row(vec![1.2, 0.8]));
    set(&mut m, "adapter.youtube.b", Tensor::row(vec![0.1, -0.1]));
    let s = fixture_sample();
    let out = m.forward(&s, AblationFlags::default()).unwrap();

    let claim = vec![1.0, 0.0];
    let mut pooled = BTreeMap::new();
    for (&k, tree) in &s.platforms {
        let p = mat(m.param(&format!("adapter.{k}.p")).unwrap())[0].clone();
        let w = mat(m.param(&format!("adapter.{k}.w")).unwrap());
        let b = mat(m.param(&format!("adapter.{k}.b")).unwrap())[0].clone();
        let mut nodes = vec![claim.clone()];
        for row in mat(tree.comments.as_ref().unwrap()) {
            let gated: Mat = vec![row.iter().zip(&p).map(|(a, b)| a * b).collect()];
            let lin = mm(&gated, &w)[0].iter().zip(&b).map(|(a, b)| a + b).collect::<Vec<_>>();
            nodes.push(softmax(&lin));
        }
        let g = mm(&mm(&mat(&tree.adjacency), &nodes), &mat(m.param(&format!("gcn.{k}.0")).unwrap()));
        pooled.insert(k, (0..2).map(|j| g.iter().map(|r| r[j]).sum::<f64>()).collect::<Vec<f64>>());
    }
    let scores: Vec<f64> = pooled
        .values()
        .map(|h| (claim[0] * h[0] + claim[1] * h[1]) / 2f64.sqrt())
        .collect();
    let alpha = softmax(&scores);
    let mut fused = vec![0.0; 6];
    for (i, (k, h)) in pooled.iter().enumerate() {
        for j in 0..2 {
            fused[k.index() * 2 + j] = alpha[i] * h[j];
        }
    }
    let w = m.param("head.0.w").unwrap();
    let bias = m.param("head.0.b").unwrap().item();
    let z: f64 = claim.iter().chain(&fused).zip(w.data()).map(|(a, b)| a * b).sum::<f64>() + bias;
    let yhat = 1.0 / (1.0 + (-z).exp());

    assert!((out.yhat - yhat).abs() < 1e-10);
    for (x, y) in out.fused.iter().zip(&fused) {
        assert!((x - y).abs() < 1e-10);
    }
    assert!((out.alpha.values().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn forward_deterministic() {
    let m = ApslModel::new(small_config(2, vec![3, 2]), 8).unwrap();
    let s = fixture_sample();
    let a = m.forward(&s, AblationFlags::default()).unwrap();
    let b = m.forward(&s, AblationFlags::default()).unwrap();
    assert_eq!(a.yhat.to_bits(), b.yhat.to_bits());
    assert_eq!(a, b);
}

#[test]
fn claim_projection_when_dims_differ() {
    let m = ApslModel::new(small_config(6, vec![4]), 1).unwrap();
    assert_eq!(m.param("fusion.claim_proj").unwrap().shape(), (6, 4));
    let same = ApslModel::new(small_config(4, vec![4]), 1).unwrap();
    assert!(same.param("fusion.claim_proj").is_none());
}

#[test]
fn config_validation() {
    assert!(ApslModel::new(small_config(0, vec![2]), 0).is_err());
    assert!(ApslModel::new(small_config(2, vec![]), 0).is_err());
    let mut cfg = small_config(2, vec![2]);
    cfg.platforms = vec![Platform::Reddit, Platform::X];
    assert!(ApslModel::new(cfg, 0).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = ApslModel::new(small_config(5, vec![3]), 21).unwrap();
    let flags = AblationFlags {
        no_attention: true,
        ..Default::default()
    };
    save_checkpoint(dir.path(), &m, flags, 21, serde_json::json!({"note": 1})).unwrap();
    let (back, manifest) = load_checkpoint(dir.path()).unwrap();
    assert_eq!(back, m);
    assert_eq!(manifest.flags, flags);
    assert_eq!(manifest.platform_order, Platform::ALL.to_vec());
    let blob = std::fs::read(dir.path().join(CHECKPOINT_BIN)).unwrap();
    assert_eq!(blob.len(), m.num_parameters() * 8);
    assert!(load_checkpoint(&dir.path().join("missing")).is_err());
}

#[test]
fn encodes_loaded_samples() {
    let claims = vec![Claim::new("c1", "moon cheese", Source::Snopes, "false").unwrap()];
    let es = vec![EngagementNode {
        id: "e1".into(),
        claim_id: "c1".into(),
        platform: Platform::Reddit,
        parent_id: "root".into(),
        text: "no it is rock".into(),
        kind: EngagementKind::Comment,
        like_count: None,
        timestamp: None,
    }];
    let samples = assemble(claims, es).unwrap();
    let enc = Encoders::shared(Arc::new(HashingEmbedder::new(8, 0)));
    let e = encode_sample(&samples[0], &enc).unwrap();
    assert_eq!(e.claim.shape(), (1, 8));
    let t = &e.platforms[&Platform::Reddit];
    assert_eq!(t.adjacency.shape(), (2, 2));
    assert_eq!(t.comments.as_ref().unwrap().shape(), (1, 8));
}

mod common;

use std::collections::HashSet;
use std::fs;

use common::{random_adjacency, rng};
use mtmv_core::data::{self, generate, load, parse_edges, parse_meta, save, SyntheticConfig};
use mtmv_core::graph::{jaccard_agreement, task_correlation, MultiViewGraph};
use mtmv_core::Error;
use rand::seq::SliceRandom;
use rand::Rng;
use tempfile::TempDir;

fn write_dataset(dir: &std::path::Path, files: &[(&str, &str)]) {
    fs::create_dir_all(dir).unwrap();
    for (name, text) in files {
        fs::write(dir.join(name), text).unwrap();
    }
}

fn read(dir: &std::path::Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn four_node_fixture() {
    let tmp = TempDir::new().unwrap();
    let src = tmp.path().join("src");
    write_dataset(
        &src,
        &[
            ("meta", "view_names social text\nnodes 4\nclasses 2\nviews 2\n"),
            ("view_0.edges", "2 3 0.5\n\n0 1 2\n1 0 3\n"),
            ("view_1.edges", "3 0 1.25\n"),
            ("labels", "3 1\n0 0\n"),
        ],
    );
    let g = load(&src).unwrap();
    assert_eq!(g.num_nodes(), 4);
    assert_eq!(g.view_names(), ["social", "text"]);
    assert_eq!(g.labels().unwrap(), [Some(0), None, None, Some(1)]);
    let v0 = g.view(0).unwrap();
    assert_eq!(v0.get(0, 1), Some(3.0));
    assert_eq!(v0.get(1, 0), Some(3.0));
    assert_eq!(v0.get(2, 3), Some(0.5));
    assert_eq!(v0.nnz(), 4);
    assert_eq!(g.view(1).unwrap().get(0, 3), Some(1.25));

    let out = tmp.path().join("out");
    save(&g, &out).unwrap();
    assert_eq!(read(&out, "meta"), "nodes 4\nviews 2\nclasses 2\nview_names social text\n");
    assert_eq!(read(&out, "view_0.edges"), "0 1 3\n2 3 0.5\n");
    assert_eq!(read(&out, "view_1.edges"), "0 3 1.25\n");
    assert_eq!(read(&out, "labels"), "0 0\n3 1\n");
}

#[test]
fn save_load_round_trip_is_a_fixpoint() {
    let tmp = TempDir::new().unwrap();
    for seed in 0..5 {
        let g = generate(&SyntheticConfig {
            n: 60,
            seed,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let (a, b) = (tmp.path().join(format!("a{seed}")), tmp.path().join(format!("b{seed}")));
        save(&g, &a).unwrap();
        let back = load(&a).unwrap();
        assert_eq!(back, g);
        save(&back, &b).unwrap();
        for f in ["meta", "view_0.edges", "view_1.edges", "view_2.edges", "labels"] {
            assert_eq!(read(&a, f), read(&b, f), "{f}");
        }
    }
}

#[test]
fn permuted_and_reoriented_edges_load_identically() {
    let mut r = rng(7);
    let n = 15;
    let view = random_adjacency(&mut r, n, 0.3);
    let mut lines: Vec<String> = view
        .triplets()
        .filter(|&(u, v, _)| u < v)
        .map(|(u, v, w)| if r.gen_bool(0.5) { format!("{v} {u} {w}") } else { format!("{u} {v} {w}") })
        .collect();
    let tmp = TempDir::new().unwrap();
    let meta = format!("nodes {n}\nviews 1\nclasses 1\nview_names a\n");
    let sorted = tmp.path().join("sorted");
    write_dataset(&sorted, &[("meta", &meta), ("view_0.edges", &(lines.join("\n") + "\n"))]);
    lines.shuffle(&mut r);
    let shuffled = tmp.path().join("shuffled");
    write_dataset(&shuffled, &[("meta", &meta), ("view_0.edges", &lines.join("\n"))]);
    let (a, b) = (load(&sorted).unwrap(), load(&shuffled).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.view(0).unwrap(), &view);
}

#[test]
fn single_edge_and_no_labels() {
    let tmp = TempDir::new().unwrap();
    let src = tmp.path().join("src");
    write_dataset(&src, &[("meta", "nodes 2\nviews 1\nclasses 1\nview_names only\n"), ("view_0.edges", "0 1 1")]);
    let g = load(&src).unwrap();
    assert!(g.labels().is_none());
    let out = tmp.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("labels"), "0 0\n").unwrap();
    save(&g, &out).unwrap();
    assert_eq!(read(&out, "view_0.edges"), "0 1 1\n");
    assert!(!out.join("labels").exists(), "stale labels file kept");

    let unlabeled = MultiViewGraph::new(2, g.views().to_vec(), vec!["only".into()], Some(vec![None, None]), 1).unwrap();
    let out2 = tmp.path().join("out2");
    save(&unlabeled, &out2).unwrap();
    assert!(!out2.join("labels").exists());
}

#[test]
fn missing_directory_names_path() {
    let err = load("/definitely/not/here").unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("/definitely/not/here"));
}

#[test]
fn parse_errors_point_at_lines() {
    let err = parse_edges("0 1 1\n1 2 -3\n", "view_0.edges", 3).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    let err = parse_edges("0 1 1\n\n0 1 2\n", "view_0.edges", 3).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    assert!(parse_edges("0 0 1\n", "e", 3).is_err());
    assert!(parse_edges("0 3 1\n", "e", 3).is_err());
    assert!(parse_edges("0 1 nan\n", "e", 3).is_err());
    assert!(parse_meta("nodes 3\nviews 1\nclasses 1\n").is_err());
    assert!(parse_meta("nodes 3\nviews 2\nclasses 1\nview_names a\n").is_err());
    assert!(data::parse_labels("0 1\n0 1\n", 2, 2).is_err());
}

#[test]
fn generator_rho_one_gives_identical_views() {
    let g = generate(&SyntheticConfig {
        n: 120,
        rho: 1.0,
        seed: 3,
        ..SyntheticConfig::default()
    })
    .unwrap();
    for i in 1..g.num_views() {
        assert_eq!(g.view(i).unwrap(), g.view(0).unwrap());
        let a = jaccard_agreement(&g, 0, i, 0.5).unwrap();
        assert_eq!((a.agree, a.disagree), (1.0, 0.0));
    }
}

#[test]
fn generator_without_community_signal_has_chance_correlation() {
    let c = 5;
    let g = generate(&SyntheticConfig {
        n: 500,
        communities: c,
        p_in: 0.05,
        p_out: 0.05,
        seed: 9,
        ..SyntheticConfig::default()
    })
    .unwrap();
    for v in 0..g.num_views() {
        let corr = task_correlation(&g, v).unwrap();
        assert!((corr - 1.0 / c as f64).abs() < 0.05, "view {v}: {corr}");
    }
}

#[test]
fn generator_strong_communities_correlate_with_labels() {
    let g = generate(&SyntheticConfig {
        n: 300,
        communities: 4,
        p_in: 0.3,
        p_out: 0.005,
        seed: 2,
        ..SyntheticConfig::default()
    })
    .unwrap();
    for v in 0..g.num_views() {
        assert!(task_correlation(&g, v).unwrap() > 0.8);
    }
}

#[test]
fn generator_independent_views_rarely_agree() {
    let mut total = 0.0;
    let seeds = 10;
    for seed in 0..seeds {
        let g = generate(&SyntheticConfig {
            n: 500,
            p_in: 0.1,
            p_out: 0.01,
            rho: 0.0,
            seed,
            ..SyntheticConfig::default()
        })
        .unwrap();
        total += jaccard_agreement(&g, 0, 1, 0.5).unwrap().agree;
    }
    let mean = total / seeds as f64;
    assert!(mean < 0.05, "mean agreement {mean}");
}

fn neighbours(g: &MultiViewGraph, view: usize, u: usize) -> HashSet<usize> {
    let a = g.view(view).unwrap().to_dense();
    (0..g.num_nodes()).filter(|&v| a.get(u, v) != 0.0).collect()
}

#[test]
fn jaccard_and_correlation_match_brute_force() {
    for seed in 0..20 {
        let mut r = rng(50 + seed);
        let n = r.gen_range(3..20);
        let views = vec![random_adjacency(&mut r, n, 0.3), random_adjacency(&mut r, n, 0.3)];
        let labels: Vec<Option<usize>> = (0..n).map(|_| r.gen_bool(0.8).then(|| r.gen_range(0..3))).collect();
        let g = MultiViewGraph::new(n, views, vec!["a".into(), "b".into()], Some(labels.clone()), 3).unwrap();

        let threshold = 0.5;
        let (mut agree, mut counted) = (0, 0);
        for u in 0..n {
            let (na, nb) = (neighbours(&g, 0, u), neighbours(&g, 1, u));
            let union = na.union(&nb).count();
            if union == 0 {
                continue;
            }
            counted += 1;
            if na.intersection(&nb).count() as f64 / union as f64 > threshold {
                agree += 1;
            }
        }
        let got = jaccard_agreement(&g, 0, 1, threshold).unwrap();
        assert_eq!(got.counted, counted);
        if counted > 0 {
            assert!((got.agree - agree as f64 / counted as f64).abs() < 1e-12);
            assert!((got.agree + got.disagree - 1.0).abs() < 1e-12);
        }

        for view in 0..2 {
            let a = g.view(view).unwrap().to_dense();
            let (mut same, mut total) = (0, 0);
            for u in 0..n {
                for v in u + 1..n {
                    if a.get(u, v) != 0.0 {
                        if let (Some(x), Some(y)) = (labels[u], labels[v]) {
                            total += 1;
                            same += usize::from(x == y);
                        }
                    }
                }
            }
            match task_correlation(&g, view) {
                Ok(c) => assert!((c - same as f64 / total as f64).abs() < 1e-12),
                Err(_) => assert_eq!(total, 0),
            }
        }
    }
}

#[test]
fn self_agreement_is_total() {
    let g = generate(&SyntheticConfig {
        n: 80,
        p_in: 0.4,
        p_out: 0.1,
        seed: 1,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let a = jaccard_agreement(&g, 1, 1, 0.5).unwrap();
    assert_eq!((a.agree, a.disagree), (1.0, 0.0));
}

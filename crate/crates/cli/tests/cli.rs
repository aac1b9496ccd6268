use std::fs;
use std::path::Path;
use std::process::Command;

use scfm_cli::{
    cmd_evaluate, cmd_fit, cmd_ppc, cmd_select_genes, cmd_simulate, exit_code, EvaluateArgs,
    FitArgs, InputArgs, PpcArgs, SelectArgs, SimulateArgs,
};
use scfm_core::ingest::{read_csv, read_labeled_table, write_labeled_table};
use scfm_core::model::standardized_loadings;
use scfm_core::ScfmError;
use tempfile::TempDir;

fn simulate(dir: &Path, n: usize, p: usize, seed: u64) {
    let args = SimulateArgs {
        n: Some(n),
        p: Some(p),
        k: Some(2),
        seed: Some(seed),
        ..SimulateArgs::new(dir)
    };
    cmd_simulate(&args).unwrap();
}

fn quick_fit(input: &Path, out: &Path) -> FitArgs {
    FitArgs {
        k_max: Some(4),
        iterations: Some(120),
        burn_in: Some(60),
        seed: Some(5),
        progress_every: Some(0),
        ..FitArgs::new(input, out)
    }
}

/// A fit directory holding the true scores and loadings.
fn oracle_fit(truth: &Path, out: &Path) {
    fs::create_dir_all(out).unwrap();
    fs::copy(truth.join("U_true.csv"), out.join("scores.csv")).unwrap();
    let (genes, header, lambda) = read_labeled_table(truth.join("Lambda_true.csv")).unwrap();
    let sigma2 = read_labeled_table(truth.join("sigma2_true.csv")).unwrap().2;
    let std = standardized_loadings(&lambda, &sigma2.column(0).into_owned());
    let file = fs::File::create(out.join("loadings_std.csv")).unwrap();
    write_labeled_table(file, "gene", &genes, &header, &std).unwrap();
    let k = header.len();
    let khat = serde_json::json!({ "k_hat": k, "significant_factors": (1..=k).collect::<Vec<_>>() });
    fs::write(out.join("khat.json"), khat.to_string()).unwrap();
}

fn select(input: &Path, out: &Path, top: Option<usize>) -> SelectArgs {
    SelectArgs {
        input: InputArgs::csv(input),
        out: out.to_path_buf(),
        max_zero_frac: Some(0.9),
        top_genes: top,
        variance: scfm_cli::Variance::Raw,
    }
}

#[test]
fn select_genes_keeps_the_most_variable_and_repeats_exactly() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, 80, 12, 3);
    let x = sim.join("X.csv");
    cmd_select_genes(&select(&x, &tmp.path().join("a"), Some(5))).unwrap();
    cmd_select_genes(&select(&x, &tmp.path().join("b"), Some(5))).unwrap();
    let kept = read_csv(tmp.path().join("a/matrix.csv"), true).unwrap();
    assert_eq!(kept.n_genes(), 5);
    assert_eq!(kept.n_cells(), 80);
    for f in ["matrix.csv", "kept_genes.csv", "select_meta.json"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    // kept columns point back at identical data
    let all = read_csv(&x, true).unwrap();
    let (names, _, cols) = read_labeled_table(tmp.path().join("a/kept_genes.csv")).unwrap();
    for (i, (name, col)) in names.iter().zip(cols.column(0).iter()).enumerate() {
        let j = *col as usize - 1;
        assert_eq!(&all.gene_names()[j], name);
        assert_eq!(all.values().column(j), kept.values().column(i));
    }

    let err = cmd_select_genes(&select(&x, &tmp.path().join("c"), Some(13))).unwrap_err();
    assert_eq!(exit_code(&err), 2);
}

#[test]
fn fit_rejects_burn_in_past_the_end() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), 40, 5, 1);
    let args = FitArgs {
        burn_in: Some(120),
        ..quick_fit(&tmp.path().join("X.csv"), &tmp.path().join("fit"))
    };
    let err = cmd_fit(&args).unwrap_err();
    assert!(matches!(err, ScfmError::Argument(_)), "{err}");
    assert!(!tmp.path().join("fit").exists());
}

#[test]
fn fit_with_m_zero_keeps_one_threshold() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), 60, 6, 2);
    let out = tmp.path().join("fit");
    let args = FitArgs {
        m: Some(0),
        ..quick_fit(&tmp.path().join("X.csv"), &out)
    };
    let fit = cmd_fit(&args).unwrap();
    assert_eq!(fit.delta_mean.ncols(), 1);
    let (_, header, noise) = read_labeled_table(out.join("noise.csv")).unwrap();
    assert_eq!(header, ["sigma2", "psi", "delta_1"]);
    assert_eq!(noise.nrows(), 6);
    for f in ["loadings.csv", "scores.csv", "khat.json", "summary.json", "chain_0/meta.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn evaluate_scores_the_truth_as_perfect_and_aggregates() {
    let tmp = TempDir::new().unwrap();
    let (t1, t2) = (tmp.path().join("t1"), tmp.path().join("t2"));
    simulate(&t1, 50, 6, 1);
    simulate(&t2, 50, 6, 2);
    oracle_fit(&t1, &tmp.path().join("f1"));
    oracle_fit(&t2, &tmp.path().join("f2"));
    let out = tmp.path().join("metrics.json");
    let m = cmd_evaluate(&EvaluateArgs {
        truth: vec![t1.clone(), t2.clone()],
        fit: vec![tmp.path().join("f1"), tmp.path().join("f2")],
        out: Some(out.clone()),
    })
    .unwrap();
    assert_eq!(m.runs.len(), 2);
    for r in &m.runs {
        assert!((r.scores_spearman - 1.0).abs() < 1e-12);
        assert!((r.loadings_spearman - 1.0).abs() < 1e-12);
    }
    assert!((m.scores.mean - 1.0).abs() < 1e-12);
    assert!(m.scores.se.unwrap() < 1e-12);
    assert!(out.exists());

    // the second fit paired with the first truth scores worse
    let crossed = cmd_evaluate(&EvaluateArgs {
        truth: vec![t1.clone()],
        fit: vec![tmp.path().join("f2")],
        out: Some(tmp.path().join("crossed.json")),
    })
    .unwrap();
    assert!(crossed.scores.mean < 0.9);
    assert_eq!(crossed.scores.se, None);
}

#[test]
fn evaluate_rejects_mismatched_inputs() {
    let tmp = TempDir::new().unwrap();
    let (t1, t2) = (tmp.path().join("t1"), tmp.path().join("t2"));
    simulate(&t1, 50, 6, 1);
    simulate(&t2, 40, 6, 2);
    oracle_fit(&t2, &tmp.path().join("f2"));
    let args = |truth: Vec<_>, fit: Vec<_>| EvaluateArgs {
        truth,
        fit,
        out: Some(tmp.path().join("m.json")),
    };
    let err = cmd_evaluate(&args(vec![t1.clone()], vec![tmp.path().join("f2")])).unwrap_err();
    assert_eq!(exit_code(&err), 2, "{err}");
    let err = cmd_evaluate(&args(vec![t1.clone(), t2], vec![tmp.path().join("f2")])).unwrap_err();
    assert_eq!(exit_code(&err), 2, "{err}");
    let err = cmd_evaluate(&args(vec![t1], vec![tmp.path().join("missing")])).unwrap_err();
    assert_eq!(exit_code(&err), 3, "{err}");
}

#[test]
fn ppc_writes_one_table_per_gene() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), 60, 5, 4);
    let x = tmp.path().join("X.csv");
    let fit = tmp.path().join("fit");
    cmd_fit(&quick_fit(&x, &fit)).unwrap();
    let out = tmp.path().join("ppc");
    let s = cmd_ppc(&PpcArgs {
        quantiles: 19,
        ..PpcArgs::new(fit.join("chain_0"), &x, &out)
    })
    .unwrap();
    assert_eq!(s.genes.len(), 5);
    assert_eq!(s.replicates, s.draws);
    for g in &s.genes {
        let (_, header, qq) = read_labeled_table(out.join(&g.file)).unwrap();
        assert_eq!(header, ["predictive"]);
        assert_eq!(qq.nrows(), 19);
        assert!((0.0..=1.0).contains(&g.ks));
    }
    assert!(out.join("ppc_summary.json").exists());

    let err = cmd_ppc(&PpcArgs::new(tmp.path().join("nowhere"), &x, tmp.path().join("p2"))).unwrap_err();
    assert_eq!(exit_code(&err), 3, "{err}");

    let other = tmp.path().join("other");
    simulate(&other, 60, 4, 5);
    let err = cmd_ppc(&PpcArgs::new(fit.join("chain_0"), other.join("X.csv"), tmp.path().join("p3")))
        .unwrap_err();
    assert!(matches!(err, ScfmError::Data(_)), "{err}");
}

fn scfm(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_scfm"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn binary_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = format!("{dir}/out");
    assert_eq!(scfm(&["fit"]), 2);
    assert_eq!(scfm(&["fit", "--input", &format!("{dir}/none.csv"), "--out", &out]), 3);
    let sim = format!("{dir}/sim");
    assert_eq!(scfm(&["simulate", "--out", &sim, "--n", "30", "--p", "4", "--k", "1"]), 0);
    let x = format!("{sim}/X.csv");
    assert_eq!(scfm(&["fit", "--input", &x, "--out", &out, "--iterations", "10", "--burn-in", "10"]), 2);
    assert_eq!(
        scfm(&["fit", "--input", &x, "--out", &out, "--iterations", "20", "--burn-in", "10", "--k-max", "2"]),
        0
    );
    fs::write(format!("{dir}/bad.csv"), "g1,g2\n1,x\n").unwrap();
    assert_eq!(scfm(&["fit", "--input", &format!("{dir}/bad.csv"), "--out", &out]), 3);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use repsim::analysis::{self, shared_subspace_spectrum};
use repsim::index::{IndexParams, INDEX_NAMES};
use repsim::reprdata::{load_matrix, write_csv, write_rsm, MatrixFormat};
use repsim::{center_columns, ActivationMatrix, SimilarityIndex};
use serde_json::Value;
use tempfile::TempDir;

fn repsim(args: &[&str]) -> Output {
    repsim_env(args, &[])
}

fn repsim_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_repsim"));
    cmd.args(args).env_remove("REPSIM_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid json")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn load(path: &Path) -> ActivationMatrix {
    load_matrix(path, MatrixFormat::from_path(path).unwrap()).unwrap()
}

fn column_file(dir: &Path, name: &str, values: &[f64]) -> std::path::PathBuf {
    let path = dir.join(name);
    write_csv(&path, &ActivationMatrix::column(values).unwrap()).unwrap();
    path
}

fn gen_pair(dir: &Path, relation: &str, n: &str, dim: &str, seed: &str) -> Value {
    ok_json(&repsim(&[
        "gen", "--kind", "pair", "--relation", relation, "--n", n, "--p", dim, "--seed", seed, "--out",
        p(dir),
    ]))
}

fn gen_stacks(dir: &Path, networks: &str) -> Vec<String> {
    ok_json(&repsim(&[
        "gen", "--kind", "stack", "--n", "32", "--p", "32", "--networks", networks, "--seed", "3", "--out",
        p(dir),
    ]));
    let k: usize = networks.parse().unwrap();
    (0..k).map(|i| p(&dir.join(format!("net{i:02}"))).to_string()).collect()
}

#[test]
fn compare_identical_files_is_one() {
    let t = TempDir::new().unwrap();
    gen_pair(t.path(), "independent", "12", "3", "1");
    let x = t.path().join("x.rsm");
    let v = ok_json(&repsim(&["compare", p(&x), p(&x)]));
    assert!((v["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["index"], "cka-linear");
    assert_eq!(v["params"]["name"], "cka-linear");
}

#[test]
fn compare_fixture_files() {
    let t = TempDir::new().unwrap();
    let a = column_file(t.path(), "a.csv", &[1., -1., 0.]);
    let b = column_file(t.path(), "b.csv", &[0., 1., -1.]);
    // <a,b>^2 / (|a|^2 |b|^2) = 1 / 4
    let v = ok_json(&repsim(&["compare", p(&a), p(&b)]));
    assert!((v["value"].as_f64().unwrap() - 0.25).abs() < 1e-15);

    let csv = repsim(&["compare", "--format", "csv", p(&a), p(&b)]);
    assert_eq!(String::from_utf8(csv.stdout).unwrap(), "index,value\ncka-linear,2.5000000000000000e-1\n");
}

#[test]
fn compare_mismatched_n_exits_2() {
    let t = TempDir::new().unwrap();
    let a = column_file(t.path(), "a.csv", &[1., -1., 0.]);
    let b = column_file(t.path(), "b.csv", &[0., 1., -1., 2.]);
    let out = repsim(&["compare", p(&a), p(&b)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("example-count mismatch"));
}

#[test]
fn exit_codes_by_error_class() {
    let t = TempDir::new().unwrap();
    let a = column_file(t.path(), "a.csv", &[1., -1., 0.]);
    let flat = column_file(t.path(), "flat.csv", &[2., 2., 2.]);

    let missing = repsim(&["compare", p(&t.path().join("missing.csv")), p(&a)]);
    assert_eq!(missing.status.code(), Some(3));

    let degenerate = repsim(&["compare", p(&flat), p(&a)]);
    assert_eq!(degenerate.status.code(), Some(4), "{}", stderr(&degenerate));

    let unknown = repsim(&["compare", "--index", "nope", p(&a), p(&a)]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("cka-linear"));

    let missing_param = repsim(&["compare", "--index", "svcca-r2", p(&a), p(&a)]);
    assert_eq!(missing_param.status.code(), Some(2));
    assert!(stderr(&missing_param).contains("--variance-threshold"));

    let stray = repsim(&["compare", "--bandwidth-fraction", "0.4", p(&a), p(&a)]);
    assert_eq!(stray.status.code(), Some(2));

    let bad_flag = repsim(&["compare", "--no-such-flag", p(&a), p(&a)]);
    assert_eq!(bad_flag.status.code(), Some(2));

    let bad_tol = repsim(&["compare", "--rank-tol", "0", p(&a), p(&a)]);
    assert_eq!(bad_tol.status.code(), Some(2));

    let garbage = t.path().join("garbage.rsm");
    fs::write(&garbage, b"RSM1\x01").unwrap();
    assert_eq!(repsim(&["compare", p(&garbage), p(&a)]).status.code(), Some(2));
}

#[test]
fn compare_matches_library_for_every_index() {
    let t = TempDir::new().unwrap();
    gen_pair(t.path(), "invertible-transform", "20", "6", "9");
    let xp = t.path().join("x.rsm");
    let other = TempDir::new().unwrap();
    gen_pair(other.path(), "independent", "20", "4", "10");
    let zp = other.path().join("y.rsm");
    let (x, z) = (load(&xp), load(&zp));

    for name in INDEX_NAMES {
        let mut args = vec!["compare", "--index", name];
        let mut params = IndexParams::default();
        match name {
            "cka-rbf" | "hsic-rbf" => {
                args.extend(["--bandwidth-fraction", "0.4"]);
                params.bandwidth_fraction = Some(0.4);
            }
            "svcca-r2" | "svcca-rho" => {
                args.extend(["--variance-threshold", "0.9"]);
                params.variance_threshold = Some(0.9);
            }
            "ridge" => {
                args.extend(["--kappa-x", "0.5", "--kappa-y", "2", "--normalization", "separable"]);
                params.kappa_x = Some(0.5);
                params.kappa_y = Some(2.0);
                params.normalization = Some("separable".parse().unwrap());
            }
            "linreg" => {
                args.extend(["--direction", "second-on-first"]);
                params.direction = Some(repsim::index::RegressionDirection::SecondOnFirst);
            }
            _ => {}
        }
        args.extend([p(&xp), p(&zp)]);
        let v = ok_json(&repsim(&args));
        let lib = SimilarityIndex::from_parts(name, &params).unwrap().evaluate(&x, &z).unwrap();
        assert_eq!(v["value"].as_f64().unwrap().to_bits(), lib.value.to_bits(), "{name}");
        assert_eq!(v["raw_value"].as_f64().unwrap().to_bits(), lib.raw_value.to_bits(), "{name}");
        assert_eq!(v["index"], name);
    }
}

#[test]
fn matrix_self_grid_has_unit_diagonal() {
    let t = TempDir::new().unwrap();
    let nets = gen_stacks(t.path(), "1");
    let v = ok_json(&repsim(&["matrix", &nets[0], &nets[0]]));
    let (rows, cols) = (v["rows"].as_u64().unwrap() as usize, v["cols"].as_u64().unwrap() as usize);
    assert_eq!((rows, cols), (8, 8));
    let scores = v["scores"].as_array().unwrap();
    for i in 0..rows {
        assert!((scores[i * cols + i].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
    assert_eq!(v["labels_a"][0], "layer00");
    assert_eq!(v["symmetrized"], false);
}

#[test]
fn matrix_cells_match_compare() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    gen_pair(a.path(), "invertible-transform", "15", "4", "2");
    gen_pair(b.path(), "independent", "15", "5", "3");
    let v = ok_json(&repsim(&["matrix", "--index", "pwcca", p(a.path()), p(b.path())]));
    let names = ["x.rsm", "y.rsm"];
    for (i, fa) in names.iter().enumerate() {
        for (j, fb) in names.iter().enumerate() {
            let c = ok_json(&repsim(&[
                "compare",
                "--index",
                "pwcca",
                p(&a.path().join(fa)),
                p(&b.path().join(fb)),
            ]));
            assert_eq!(v["scores"][i * 2 + j].as_f64().unwrap().to_bits(), c["value"].as_f64().unwrap().to_bits());
        }
    }
}

#[test]
fn matrix_symmetrize_linreg() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    gen_pair(a.path(), "independent", "15", "3", "4");
    gen_pair(b.path(), "independent", "15", "6", "5");
    let plain = ok_json(&repsim(&["matrix", "--index", "linreg", p(a.path()), p(b.path())]));
    let v = ok_json(&repsim(&["matrix", "--index", "linreg", "--symmetrize", p(a.path()), p(b.path())]));
    let s = |k: usize| v["scores"][k].as_f64().unwrap();
    let raw = |k: usize| plain["scores"][k].as_f64().unwrap();
    assert_eq!(s(1), s(2));
    assert_eq!(s(1), raw(1) + raw(2));
    assert_eq!(v["symmetrized"], true);
    assert_eq!(v["normalized"], false);
}

#[test]
fn matrix_csv_and_errors() {
    let t = TempDir::new().unwrap();
    gen_pair(t.path(), "orthogonal-transform", "10", "3", "6");
    let out = repsim(&["matrix", "--format", "csv", p(t.path()), p(t.path())]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "layer,x,y");
    assert!(lines[1].starts_with("x,"));
    assert_eq!(lines.len(), 3);

    let empty = TempDir::new().unwrap();
    let out = repsim(&["matrix", p(empty.path()), p(t.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no layer files"));
}

#[test]
fn manifest_overrides_lexicographic_order() {
    let t = TempDir::new().unwrap();
    column_file(t.path(), "a.csv", &[1., 2., 4., 0.]);
    column_file(t.path(), "b.csv", &[0., 1., 0., 3.]);
    let lex = ok_json(&repsim(&["matrix", p(t.path()), p(t.path())]));
    assert_eq!(lex["labels_a"], serde_json::json!(["a", "b"]));
    fs::write(t.path().join("manifest.json"), r#"{"layers": ["b.csv", "a.csv"]}"#).unwrap();
    let man = ok_json(&repsim(&["matrix", p(t.path()), p(t.path())]));
    assert_eq!(man["labels_a"], serde_json::json!(["b", "a"]));
    assert_eq!(man["scores"][1], lex["scores"][2]);
}

#[test]
fn sanity_check_on_generated_stacks() {
    let t = TempDir::new().unwrap();
    let nets = gen_stacks(t.path(), "3");
    let mut args = vec!["sanity-check"];
    args.extend(nets.iter().map(String::as_str));
    let cka = ok_json(&repsim(&args));
    assert_eq!(cka["accuracy"].as_f64(), Some(1.0));
    assert_eq!(cka["jackknife_se"].as_f64(), Some(0.0));
    assert_eq!(cka["pairs"].as_array().unwrap().len(), 3);

    let mut cca_args = vec!["sanity-check", "--index", "cca-r2"];
    cca_args.extend(nets.iter().map(String::as_str));
    let cca = ok_json(&repsim(&cca_args));
    assert_eq!(cca["accuracy"].as_f64(), Some(0.125));
    for pair in cca["pairs"].as_array().unwrap() {
        assert_eq!(pair["per_layer_argmax"], serde_json::json!([0, 0, 0, 0, 0, 0, 0, 0]));
    }

    let mut ex = vec!["sanity-check", "--exclude", "layer07,layer06"];
    ex.extend(nets.iter().map(String::as_str));
    let v = ok_json(&repsim(&ex));
    assert_eq!(v["excluded_layers"], serde_json::json!(["layer06", "layer07"]));
    assert_eq!(v["pairs"][0]["per_layer_argmax"].as_array().unwrap().len(), 6);

    let lr = {
        let mut a = vec!["sanity-check", "--index", "linreg"];
        a.extend(nets.iter().map(String::as_str));
        ok_json(&repsim(&a))
    };
    assert_eq!(lr["symmetrized"], true);
}

#[test]
fn sanity_check_usage_errors() {
    let t = TempDir::new().unwrap();
    let nets = gen_stacks(t.path(), "2");
    let single = repsim(&["sanity-check", &nets[0]]);
    assert_eq!(single.status.code(), Some(2));

    let short = TempDir::new().unwrap();
    gen_pair(short.path(), "independent", "32", "32", "1");
    let mismatch = repsim(&["sanity-check", &nets[0], p(short.path())]);
    assert_eq!(mismatch.status.code(), Some(2));
    assert!(stderr(&mismatch).contains("layer-count mismatch"));
}

#[test]
fn spectrum_outputs() {
    let t = TempDir::new().unwrap();
    gen_pair(t.path(), "orthogonal-transform", "16", "5", "8");
    let (xp, yp) = (t.path().join("x.rsm"), t.path().join("y.rsm"));
    let v = ok_json(&repsim(&["spectrum", "--components", "4", p(&xp), p(&xp)]));
    let own = v["own_scaling"].as_array().unwrap();
    assert_eq!(own.len(), 4);
    for i in 0..4 {
        assert!((v["cross_scaling"][i].as_f64().unwrap() - own[i].as_f64().unwrap()).abs() < 1e-10);
        assert!((v["cosine"][i].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }

    let lib = shared_subspace_spectrum(&center_columns(&load(&xp)), &center_columns(&load(&yp)), 3).unwrap();
    let cli = ok_json(&repsim(&["spectrum", "--components", "3", p(&xp), p(&yp)]));
    for i in 0..3 {
        assert_eq!(cli["own_scaling"][i].as_f64().unwrap().to_bits(), lib.own_scaling[i].to_bits());
        assert_eq!(cli["cross_scaling"][i].as_f64().unwrap().to_bits(), lib.cross_scaling[i].to_bits());
        assert_eq!(cli["cosine"][i].as_f64().unwrap().to_bits(), lib.cosine[i].to_bits());
    }

    let a = column_file(t.path(), "a.csv", &[1., -1., 0., 0.]);
    let b = column_file(t.path(), "b.csv", &[0., 0., 1., -1.]);
    let orth = ok_json(&repsim(&["spectrum", "--components", "1", p(&a), p(&b)]));
    assert!(orth["cross_scaling"][0].as_f64().unwrap() <= 1e-8);
}

#[test]
fn gen_is_reproducible_and_echoes_defaults() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let ma = gen_pair(a.path(), "isotropic-scale", "10", "4", "42");
    let mb = gen_pair(b.path(), "isotropic-scale", "10", "4", "42");
    assert_eq!(ma, mb);
    for f in ["x.rsm", "y.rsm", "manifest.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(ma["relation"]["alpha"].as_f64(), Some(2.0));
    assert_eq!(ma["seed"].as_u64(), Some(42));

    let s = TempDir::new().unwrap();
    let m = ok_json(&repsim(&["gen", "--kind", "stack", "--n", "32", "--p", "40", "--out", p(s.path())]));
    assert_eq!(m["layers_per_network"].as_u64(), Some(8));
    assert_eq!(m["signal_rank"].as_u64(), Some(4));
    assert_eq!(m["noise_level"].as_f64(), Some(0.1));
    assert_eq!(m["networks"].as_array().unwrap().len(), 1);
    assert_eq!(m["seed"].as_u64(), Some(0));
    let on_disk: Value = serde_json::from_slice(&fs::read(s.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, m);

    let sh = TempDir::new().unwrap();
    let m = ok_json(&repsim(&[
        "gen", "--kind", "pair", "--relation", "shared-subspace", "--shared-indices", "0,1", "--n", "20", "--p",
        "4", "--out", p(sh.path()),
    ]));
    assert_eq!(m["relation"]["spectrum_decay"].as_f64(), Some(0.5));
    assert_eq!(m["relation"]["noise_level"].as_f64(), Some(0.0));
    assert_eq!(m["spectrum"].as_array().unwrap().len(), 4);
}

#[test]
fn gen_orthogonal_pair_has_unit_cka() {
    let t = TempDir::new().unwrap();
    gen_pair(t.path(), "orthogonal-transform", "25", "7", "11");
    let v = ok_json(&repsim(&["compare", p(&t.path().join("x.rsm")), p(&t.path().join("y.rsm"))]));
    assert!((v["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn gen_rejects_invalid_specs() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("o");
    let base = ["gen", "--out", p(&out), "--n", "10", "--p", "4"];
    let run = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend_from_slice(extra);
        repsim(&a).status.code()
    };
    assert_eq!(run(&["--kind", "pair"]), Some(2));
    assert_eq!(run(&["--kind", "pair", "--relation", "independent", "--alpha", "3"]), Some(2));
    assert_eq!(run(&["--kind", "pair", "--relation", "isotropic-scale", "--alpha", "0"]), Some(2));
    assert_eq!(run(&["--kind", "random", "--layers", "3"]), Some(2));
    assert_eq!(run(&["--kind", "stack"]), Some(2));
    assert_eq!(
        run(&["--kind", "pair", "--relation", "shared-subspace", "--shared-indices", "0,9"]),
        Some(2)
    );
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let t = TempDir::new().unwrap();
    let nets = gen_stacks(t.path(), "3");
    let mut args = vec!["sanity-check", "--index", "pwcca"];
    args.extend(nets.iter().map(String::as_str));
    let one = repsim_env(&args, &[("REPSIM_THREADS", "1")]);
    let many = repsim_env(&args, &[("REPSIM_THREADS", "16")]);
    let default = repsim(&args);
    assert!(one.status.success());
    assert_eq!(one.stdout, many.stdout);
    assert_eq!(one.stdout, default.stdout);

    let bad = repsim_env(&["matrix", &nets[0], &nets[1]], &[("REPSIM_THREADS", "zero")]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn grid_json_matches_library_report() {
    let t = TempDir::new().unwrap();
    let nets = gen_stacks(t.path(), "2");
    let v = ok_json(&repsim(&["matrix", "--index", "cca-rho", &nets[0], &nets[1]]));
    let load_dir = |d: &str| -> Vec<ActivationMatrix> {
        (0..8).map(|l| load(&Path::new(d).join(format!("layer{l:02}.rsm")))).collect()
    };
    let lib = analysis::similarity_matrix(&load_dir(&nets[0]), &load_dir(&nets[1]), &SimilarityIndex::CcaRho).unwrap();
    for (k, s) in lib.scores.iter().enumerate() {
        assert_eq!(v["scores"][k].as_f64().unwrap().to_bits(), s.to_bits());
    }
}

#[test]
fn csv_and_rsm_inputs_agree() {
    let t = TempDir::new().unwrap();
    gen_pair(t.path(), "invertible-transform", "12", "3", "5");
    let x = load(&t.path().join("x.rsm"));
    let csv = t.path().join("x_copy.csv");
    write_csv(&csv, &x).unwrap();
    let rsm = t.path().join("x_copy.rsm");
    write_rsm(&rsm, &x).unwrap();
    let y = t.path().join("y.rsm");
    let a = ok_json(&repsim(&["compare", "--index", "cca-r2", p(&csv), p(&y)]));
    let b = ok_json(&repsim(&["compare", "--index", "cca-r2", p(&rsm), p(&y)]));
    assert_eq!(a["value"], b["value"]);
}

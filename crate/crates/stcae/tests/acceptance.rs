//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so the criteria execute in order and
//! the timed end-to-end run has the machine to itself.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stcae_core::arch::{build_model, shape_table, Variant};
use stcae_core::eval::auc;
use stcae_core::gradcheck::{layer_checks, model_check, LAYER_TOLERANCE, MODEL_TOLERANCE};
use stcae_core::score::{cross_context_scores, label_windows, within_context_scores, ReconErrorMatrix};
use stcae_core::window::{make_windows, window_count, WindowConfig};
use stcae_core::Tensor;

struct Outcome {
    pass: bool,
    gating: bool,
    detail: String,
}

impl Outcome {
    fn gate(pass: bool, detail: String) -> Self {
        Outcome {
            pass,
            gating: true,
            detail,
        }
    }
}

fn within(elapsed: Duration, limit_secs: f64, detail: &mut String) -> bool {
    let secs = elapsed.as_secs_f64();
    let _ = write!(detail, "; {secs:.2}s (limit {limit_secs}s)");
    secs < limit_secs
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut detail = String::new();
    let mut pass = true;
    let layers = layer_checks(2024).expect("layer checks run");
    let worst = layers.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    pass &= layers.iter().all(|c| c.passes(LAYER_TOLERANCE));
    let probes: usize = layers.iter().map(|c| c.checked).sum();
    let _ = write!(detail, "{} kernels, {probes} probes, worst rel err {worst:.2e}", layers.len());
    for c in layers.iter().filter(|c| !c.passes(LAYER_TOLERANCE)) {
        let _ = write!(detail, "; FAILED {c:?}");
    }
    for v in [Variant::DstcaeUpSampling, Variant::DstcaeDeconv, Variant::DstcaeC3d] {
        let c = model_check(v, 99, 500).expect("model check runs");
        pass &= c.passes(MODEL_TOLERANCE) && c.checked == 500 && c.nonzero * 4 >= c.checked;
        let _ = write!(
            detail,
            "; {} {} params ({} nonzero), rel err {:.2e}",
            v.name(),
            c.checked,
            c.nonzero,
            c.max_rel_error
        );
    }
    pass &= within(start.elapsed(), 60.0, &mut detail);
    Outcome::gate(pass, detail)
}

fn rows(spec: &[&str]) -> Vec<String> {
    spec.iter().map(|s| s.to_string()).collect()
}

fn shapes() -> Outcome {
    let start = Instant::now();
    // Reference rows, with the 16-map decode convolution ahead of the last
    // upsampling, the flatten reading of the DAE's first row, and the
    // mirrored decoders of the frame models appended.
    let expected: [(Variant, Vec<String>); 6] = [
        (
            Variant::DstcaeUpSampling,
            rows(&[
                "Input - (8, 64, 64, 1)",
                "3D Convolution - (8, 64, 64, 16)",
                "3D Max-pooling - (4, 32, 32, 16)",
                "3D Convolution - (4, 32, 32, 8)",
                "3D Max-pooling - (2, 16, 16, 8)",
                "3D Convolution - (2, 16, 16, 8)",
                "3D UpSampling - (4, 32, 32, 8)",
                "3D Convolution - (4, 32, 32, 16)",
                "3D UpSampling - (8, 64, 64, 16)",
                "3D Convolution - (8, 64, 64, 1)",
            ]),
        ),
        (
            Variant::DstcaeDeconv,
            rows(&[
                "Input - (8, 64, 64, 1)",
                "3D Convolution - (8, 64, 64, 16)",
                "3D Max-pooling - (4, 32, 32, 16)",
                "3D Convolution - (4, 32, 32, 8)",
                "3D Max-pooling - (2, 16, 16, 8)",
                "3D Deconvolution - (4, 32, 32, 8)",
                "3D Deconvolution - (8, 64, 64, 16)",
                "3D Deconvolution - (8, 64, 64, 1)",
            ]),
        ),
        (
            Variant::DstcaeC3d,
            rows(&[
                "Input - (8, 64, 64, 1)",
                "3D Convolution - (8, 64, 64, 16)",
                "3D Max-pooling - (8, 32, 32, 16)",
                "3D Convolution - (8, 32, 32, 8)",
                "3D Max-pooling - (4, 16, 16, 8)",
                "3D Convolution - (4, 16, 16, 8)",
                "3D Max-pooling - (2, 8, 8, 8)",
                "3D Convolution - (2, 8, 8, 8)",
                "3D UpSampling - (4, 16, 16, 8)",
                "3D Convolution - (4, 16, 16, 8)",
                "3D UpSampling - (8, 32, 32, 8)",
                "3D Convolution - (8, 32, 32, 16)",
                "3D UpSampling - (8, 64, 64, 16)",
                "3D Convolution - (8, 64, 64, 1)",
            ]),
        ),
        (
            Variant::CaeUpSampling,
            rows(&[
                "Input - (64, 64, 1)",
                "2D Convolution - (64, 64, 16)",
                "2D Max-pooling - (32, 32, 16)",
                "2D Convolution - (32, 32, 8)",
                "2D Max-pooling - (16, 16, 8)",
                "2D Convolution - (16, 16, 8)",
                "2D Max-pooling - (8, 8, 8)",
                "2D Convolution - (8, 8, 8)",
                "2D UpSampling - (16, 16, 8)",
                "2D Convolution - (16, 16, 8)",
                "2D UpSampling - (32, 32, 8)",
                "2D Convolution - (32, 32, 16)",
                "2D UpSampling - (64, 64, 16)",
                "2D Convolution - (64, 64, 1)",
            ]),
        ),
        (
            Variant::CaeDeconv,
            rows(&[
                "Input - (64, 64, 1)",
                "2D Convolution - (64, 64, 16)",
                "2D Max-pooling - (32, 32, 16)",
                "2D Convolution - (32, 32, 8)",
                "2D Max-pooling - (16, 16, 8)",
                "2D Convolution - (16, 16, 8)",
                "2D Max-pooling - (8, 8, 8)",
                "2D Deconvolution - (16, 16, 8)",
                "2D Deconvolution - (32, 32, 8)",
                "2D Deconvolution - (64, 64, 16)",
                "2D Deconvolution - (64, 64, 1)",
            ]),
        ),
        (
            Variant::Dae,
            rows(&[
                "Input - (64, 64, 1)",
                "Flatten - (4096)",
                "Fully Connected - (150)",
                "Fully Connected - (100)",
                "Fully Connected - (50)",
                "Fully Connected - (100)",
                "Fully Connected - (150)",
                "Fully Connected - (4096)",
                "Reshape - (64, 64, 1)",
            ]),
        ),
    ];
    let mut detail = String::new();
    let mut pass = true;
    let mut total = 0;
    for (variant, want) in &expected {
        let got: Vec<String> = shape_table(&build_model(*variant)).iter().map(|r| r.to_string()).collect();
        total += want.len();
        if &got != want {
            pass = false;
            let _ = write!(detail, "{} differs: {got:?}; ", variant.name());
        }
    }
    let _ = write!(detail, "6 variants, {total} rows compared");
    pass &= within(start.elapsed(), 1.0, &mut detail);
    Outcome::gate(pass, detail)
}

fn brute_window_starts(v: usize, t: usize, b: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut s = 1;
    while s + t - 1 <= v {
        starts.push(s);
        s += b;
    }
    starts
}

fn windowing() -> Outcome {
    let start = Instant::now();
    let rng = &mut ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let v = rng.random_range(0..400);
        let t = rng.random_range(1..=16);
        let b = rng.random_range(1..=12);
        let cfg = WindowConfig { length: t, stride: b };
        let brute = brute_window_starts(v, t, b);
        match window_count(v, &cfg) {
            Ok(d) if v >= t && d == brute.len() => {}
            Err(_) if v < t => {}
            _ => mismatches += 1,
        }
    }

    // Materialised windows against a slice oracle.
    let mut slice_mismatches = 0;
    for _ in 0..300 {
        let v = rng.random_range(1..40);
        let t = rng.random_range(1..=v);
        let b = rng.random_range(1..=4);
        let frames = Tensor::from_fn(&[v, 2, 2, 1], |_| rng.random_range(-1.0..1.0));
        let set = make_windows("v", &frames, &WindowConfig { length: t, stride: b }).unwrap();
        let brute = brute_window_starts(v, t, b);
        let ok = set.windows.len() == brute.len()
            && set.windows.iter().zip(&brute).all(|(w, &s)| {
                w.first_frame == s && w.data.data() == &frames.data()[(s - 1) * 4..(s - 1 + t) * 4]
            });
        slice_mismatches += usize::from(!ok);
    }

    // 22,116 frames over nine videos yield 22,053 windows however split.
    let mut split_failures = 0;
    let cfg = WindowConfig::default();
    for _ in 0..1_000 {
        let mut cuts: Vec<usize> = (0..8).map(|_| rng.random_range(0..=22_116 - 9 * 8)).collect();
        cuts.sort_unstable();
        let mut lengths = Vec::with_capacity(9);
        let mut prev = 0;
        for &c in cuts.iter().chain(std::iter::once(&(22_116 - 9 * 8))) {
            lengths.push(c - prev + 8);
            prev = c;
        }
        assert_eq!(lengths.iter().sum::<usize>(), 22_116);
        let windows: usize = lengths.iter().map(|&v| window_count(v, &cfg).unwrap()).sum();
        let identity: usize = lengths.iter().map(|&v| v - 7).sum();
        split_failures += usize::from(windows != 22_053 || identity != 22_053);
    }

    let mut detail = format!(
        "10000 (V,T,B) cases, {mismatches} mismatches; 300 slice cases, {slice_mismatches} mismatches; \
         1000 nine-way splits of 22116 frames, {split_failures} not giving 22053 windows"
    );
    let pass = mismatches == 0 && slice_mismatches == 0 && split_failures == 0;
    let pass = within(start.elapsed(), 5.0, &mut detail) && pass;
    Outcome::gate(pass, detail)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
}

fn scoring() -> Outcome {
    let start = Instant::now();
    let rng = &mut ChaCha8Rng::seed_from_u64(4);
    let mut failures = Vec::new();
    for case in 0..1_000 {
        let t = rng.random_range(1..=10);
        // Every tenth case is a single-window video.
        let v = if case % 10 == 0 { t } else { rng.random_range(t..t + 30) };
        let d = v - t + 1;
        let values: Vec<f64> = (0..d * t).map(|_| rng.random_range(0.0..100.0)).collect();
        let r = ReconErrorMatrix::new("v", t, values.clone()).unwrap();
        let cross = cross_context_scores(&r);
        let inner = within_context_scores(&r);

        for j in 0..v {
            // Windows containing frame j, found by scanning every window.
            let column: Vec<f64> = (0..d).filter(|&i| i <= j && j < i + t).map(|i| values[i * t + j - i]).collect();
            let (mu, sigma) = mean_std(&column);
            if !close(cross.c_mu[j], mu) || !close(cross.c_sigma[j], sigma) {
                failures.push(format!("case {case} frame {j}"));
            }
            if column.len() == 1 && cross.c_sigma[j] != 0.0 {
                failures.push(format!("case {case} frame {j}: single-context sigma"));
            }
        }
        for i in 0..d {
            let (mu, sigma) = mean_std(&values[i * t..(i + 1) * t]);
            if !close(inner.w_mu[i], mu) || !close(inner.w_sigma[i], sigma) {
                failures.push(format!("case {case} window {i}"));
            }
        }
        if d == 1 {
            let ok = (0..v).all(|j| cross.c_sigma[j] == 0.0 && cross.c_mu[j] == values[j]);
            if !ok {
                failures.push(format!("case {case}: single window"));
            }
        }

        let c = rng.random_range(0.0..50.0);
        let shifted = ReconErrorMatrix::new("v", t, values.iter().map(|x| x + c).collect()).unwrap();
        let cs = cross_context_scores(&shifted);
        let ws = within_context_scores(&shifted);
        let shift_ok = (0..v).all(|j| close(cs.c_mu[j], cross.c_mu[j] + c) && close(cs.c_sigma[j], cross.c_sigma[j]))
            && (0..d).all(|i| close(ws.w_mu[i], inner.w_mu[i] + c) && close(ws.w_sigma[i], inner.w_sigma[i]));
        if !shift_ok {
            failures.push(format!("case {case}: shift by {c}"));
        }

        let labels: Vec<bool> = (0..v).map(|_| rng.random_bool(0.4)).collect();
        for alpha in 1..=t {
            let got = label_windows(&labels, t, alpha).unwrap();
            let want: Vec<bool> = (0..d).map(|i| labels[i..i + t].iter().filter(|&&l| l).count() >= alpha).collect();
            if got != want {
                failures.push(format!("case {case}: alpha {alpha} labels"));
            }
        }
    }
    let mut detail = format!(
        "1000 random matrices (100 single-window) with shift and alpha-label checks, {} failures",
        failures.len()
    );
    if let Some(f) = failures.first() {
        let _ = write!(detail, " (first: {f})");
    }
    let pass = failures.is_empty();
    let pass = within(start.elapsed(), 5.0, &mut detail) && pass;
    Outcome::gate(pass, detail)
}

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut twice_wins, mut pairs) = (0u64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1;
                twice_wins += match si.partial_cmp(&sj).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice_wins as f64 / (2 * pairs) as f64
}

fn auc_oracle() -> Outcome {
    let start = Instant::now();
    let rng = &mut ChaCha8Rng::seed_from_u64(5);
    let (mut mismatches, mut transform_failures) = (0, 0);
    for _ in 0..1_000 {
        let n = rng.random_range(2..200);
        let levels = rng.random_range(1..=20);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.37).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        let a = auc(&scores, &labels).unwrap();
        mismatches += usize::from(a != brute_auc(&scores, &labels));
        let warped: Vec<f64> = scores.iter().map(|s| (s * 0.5).exp() * 3.0 + s.powi(3) - 7.0).collect();
        transform_failures += usize::from(auc(&warped, &labels).unwrap() != a);
    }
    let mut detail = format!(
        "1000 tied score sets, {mismatches} differ from all-pairs count; {transform_failures} change under an increasing transform"
    );
    let pass = mismatches == 0 && transform_failures == 0;
    let pass = within(start.elapsed(), 5.0, &mut detail) && pass;
    Outcome::gate(pass, detail)
}

fn stcae(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stcae"))
        .args(args)
        .env_remove("STCAE_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!(
            "`stcae {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn mean_auc(summary: &Path) -> Result<f64, String> {
    let text = fs::read_to_string(summary).map_err(|e| format!("{}: {e}", summary.display()))?;
    let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    json["mean_auc"].as_f64().ok_or_else(|| "summary without mean_auc".into())
}

/// Trains on `data` and writes cross-context C_sigma and the within-context
/// W_mu sweep under `out`.
fn train_and_evaluate(data: &Path, out: &Path, epochs: usize, threads: usize) -> Result<(), String> {
    let run = out.join("run");
    let eval = out.join("eval");
    let (epochs, threads) = (epochs.to_string(), threads.to_string());
    let common = ["--threads", threads.as_str()];
    let train = [
        "train",
        "--data",
        p(data),
        "--variant",
        "dstcae-upsampling",
        "--epochs",
        epochs.as_str(),
        "--out",
        p(&run),
    ];
    stcae(&[&common[..], &train[..]].concat())?;
    let ckpt = run.join("model.ckpt");
    for score in [
        &["--score", "cross", "--stat", "sigma"][..],
        &["--score", "within", "--stat", "mu", "--alpha-sweep"][..],
    ] {
        let eval_args = ["evaluate", "--data", p(data), "--checkpoint", p(&ckpt), "--out", p(&eval)];
        stcae(&[&common[..], &eval_args[..], score].concat())?;
    }
    Ok(())
}

fn end_to_end(work: &Path) -> Outcome {
    let start = Instant::now();
    let data = work.join("synth");
    let out = work.join("e2e");
    let result = stcae(&["synth", "--out", p(&data)])
        .and_then(|_| train_and_evaluate(&data, &out, 30, 1))
        .and_then(|_| {
            let eval = out.join("eval");
            Ok((
                mean_auc(&eval.join("cross_C_sigma.json"))?,
                mean_auc(&eval.join("within_W_mu_alpha1.json"))?,
                mean_auc(&eval.join("within_W_mu_alpha8.json"))?,
            ))
        });
    match result {
        Ok((c_sigma, w1, w8)) => {
            let mut detail = format!(
                "DSTCAE-UpSampling, 30 epochs: C_sigma mean AUC {c_sigma:.4} (need >= 0.80); \
                 W_mu AUC alpha=8 {w8:.4} vs alpha=1 {w1:.4} (need >= {:.4})",
                w1 - 0.05
            );
            let pass = c_sigma >= 0.80 && w8 >= w1 - 0.05;
            let pass = within(start.elapsed(), 600.0, &mut detail) && pass;
            Outcome::gate(pass, detail)
        }
        Err(e) => Outcome::gate(false, e),
    }
}

/// Non-gating: runs the default protocol on a user-supplied thermal dataset.
fn thermal_reproduction() -> Outcome {
    let Some(root) = std::env::var_os("STCAE_THERMAL_ROOT").map(PathBuf::from) else {
        return Outcome {
            pass: false,
            gating: false,
            detail: "not run: set STCAE_THERMAL_ROOT to a dataset in the documented layout \
                     (reference C_sigma AUC 0.97 +/- 0.05 for DSTCAE-C3D)"
                .into(),
        };
    };
    let work = tempfile::tempdir().expect("temp dir");
    let run = work.path().join("run");
    let eval = work.path().join("eval");
    let result = stcae(&["train", "--data", p(&root), "--variant", "dstcae-c3d", "--out", p(&run)])
        .and_then(|_| {
            stcae(&[
                "evaluate",
                "--data",
                p(&root),
                "--checkpoint",
                p(&run.join("model.ckpt")),
                "--out",
                p(&eval),
                "--score",
                "cross",
                "--stat",
                "sigma",
            ])
        })
        .and_then(|_| mean_auc(&eval.join("cross_C_sigma.json")));
    let (pass, detail) = match result {
        Ok(a) => ((a - 0.97).abs() <= 0.05, format!("DSTCAE-C3D C_sigma mean AUC {a:.4}, band 0.92..1.00")),
        Err(e) => (false, e),
    };
    Outcome {
        pass,
        gating: false,
        detail,
    }
}

fn artifacts(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for dir in ["run", "eval"] {
        let mut entries: Vec<PathBuf> = fs::read_dir(out.join(dir))
            .map(|d| d.map(|e| e.unwrap().path()).collect())
            .unwrap_or_default();
        entries.sort();
        for path in entries {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            if name.ends_with(".csv") || name.ends_with(".json") || name.ends_with(".ckpt") {
                files.push((format!("{dir}/{name}"), fs::read(&path).unwrap()));
            }
        }
    }
    files
}

fn determinism(work: &Path) -> Outcome {
    let start = Instant::now();
    let data = work.join("synth");
    let epochs = 3;
    let mut runs = Vec::new();
    for (name, threads) in [("det_a", 1), ("det_b", 1), ("det_c", 2)] {
        let out = work.join(name);
        if let Err(e) = train_and_evaluate(&data, &out, epochs, threads) {
            return Outcome::gate(false, e);
        }
        runs.push(artifacts(&out));
    }
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    let has_core = ["run/loss.csv", "eval/cross_C_sigma.json", "eval/within_W_mu_alpha8.json"]
        .iter()
        .all(|n| names.contains(n));
    let rerun_identical = runs[0] == runs[1];
    let threads_identical = runs[0] == runs[2];
    let mut detail = format!(
        "{epochs}-epoch reruns of the end-to-end configuration, {} files compared: \
         same settings {}, --threads 1 vs 2 {}",
        names.len(),
        if rerun_identical { "byte-identical" } else { "DIFFER" },
        if threads_identical { "byte-identical" } else { "DIFFER" },
    );
    let pass = has_core && rerun_identical && threads_identical;
    let pass = within(start.elapsed(), 600.0, &mut detail) && pass;
    Outcome::gate(pass, detail)
}

fn main() -> ExitCode {
    // Respect libtest's filtering convention loosely: `--list` prints nothing.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let work = tempfile::tempdir().expect("temp dir");
    let criteria: [(&str, Box<dyn Fn() -> Outcome>); 8] = [
        ("gradient correctness", Box::new(gradients)),
        ("architecture shape oracle", Box::new(shapes)),
        ("windowing arithmetic", Box::new(windowing)),
        ("scoring oracles", Box::new(scoring)),
        ("AUC oracle", Box::new(auc_oracle)),
        ("desk-scale end-to-end detection", Box::new(|| end_to_end(work.path()))),
        ("thermal-dataset reproduction (non-gating)", Box::new(thermal_reproduction)),
        ("determinism and thread independence", Box::new(|| determinism(work.path()))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let status = match (o.pass, o.gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "SKIP",
        };
        println!("criterion {} [{status}] {name}: {}", i + 1, o.detail);
        if o.gating && !o.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("acceptance: all gating criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} gating criteria failed");
        ExitCode::FAILURE
    }
}

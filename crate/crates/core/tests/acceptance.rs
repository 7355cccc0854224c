//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 3 4`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tvhsd::dataio::{
    self, gen_out_of_distribution, gen_synthetic, split_kfold, Dataset, SyntheticSpec,
};
use tvhsd::detector::{
    discretize_diag, forward, forward_graph, load_model, save_model, ssm_conv, ssm_scan,
    DetectorConfig, DetectorParams, ParamVars, PARAM_NAMES,
};
use tvhsd::harness::{
    evaluate, length_bins_from_predictions, train, xval, LossMode, ModalityMode, Prediction,
    TrainConfig,
};
use tvhsd::ndgrad::{digamma, exprel, grad_check, lgamma, Tensor};
use tvhsd::trust::{
    annealing, kl_uniform_dirichlet, loss_digamma, loss_trust_graph, one_hot, to_opinion,
};
use tvhsd::Execution;

type Check = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    run: fn() -> Check,
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64, detail: String) -> Check {
    let s = elapsed.as_secs_f64();
    let detail = format!("{detail}; time limit {limit_s} s");
    ensure(s < limit_s, detail)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn detector(text_dim: usize, image_dim: usize, k: usize) -> DetectorConfig {
    let mut d = DetectorConfig::new(text_dim, image_dim, k);
    d.align_dim = 16;
    d.state_size = 8;
    d.se_reduction = 4;
    d
}

fn config(det: DetectorConfig, epochs: usize, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::new(det);
    c.epochs = epochs;
    c.seed = seed;
    c.detector.seed = seed;
    c
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn mean_u(preds: &[Prediction]) -> f64 {
    mean(&preds.iter().map(|p| p.uncertainty).collect::<Vec<_>>())
}

fn fmt(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn c1_duality() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let len = rng.random_range(1..=16);
        let a: Vec<f64> = (0..n).map(|_| -rng.random_range(0.05..3.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let dt = 10f64.powf(rng.random_range(-3.0..0.0));
        let x: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let (ab, bb) = discretize_diag(&a, &b, dt);
        worst = worst.max(max_abs_diff(&ssm_scan(&x, &ab, &bb, &c), &ssm_conv(&x, &ab, &bb, &c)));
    }
    let detail = format!("max |scan - conv| = {worst:.2e} over 100 configs");
    if worst >= 1e-9 {
        return Err(detail);
    }
    within(t0.elapsed(), 5.0, detail)
}

fn c2_zoh() -> Check {
    let (ab, bb) = discretize_diag(&[-1.0], &[2.0], std::f64::consts::LN_2);
    let closed = (ab[0] - 0.5).abs().max((bb[0] - 1.0).abs());
    let mut jump = 0.0f64;
    for side in [-1.0, 1.0] {
        let z = side * 1e-8;
        jump = jump.max((exprel(z * (1.0 - 1e-9)) - exprel(z * (1.0 + 1e-9))).abs());
        // the same switch seen through the discretization, a = -1
        let (_, lo) = discretize_diag(&[-1.0], &[1.0], z.abs() * (1.0 - 1e-9));
        let (_, hi) = discretize_diag(&[-1.0], &[1.0], z.abs() * (1.0 + 1e-9));
        jump = jump.max((lo[0] / (z.abs() * (1.0 - 1e-9)) - hi[0] / (z.abs() * (1.0 + 1e-9))).abs());
    }
    ensure(
        closed < 1e-12 && jump < 1e-10,
        format!("(a_bar, b_bar) = ({}, {}), closed-form err {closed:.1e}; jump at switch {jump:.1e}", ab[0], bb[0]),
    )
}

fn c3_opinion_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let k = 2 + i % 9;
        let e: Vec<f64> = (0..k)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                if rng.random_bool(0.2) {
                    0.0
                } else {
                    (3.0 * z).exp()
                }
            })
            .collect();
        let op = to_opinion(&e).map_err(|e| e.to_string())?;
        let total = op.uncertainty + op.belief.iter().sum::<f64>();
        worst = worst.max((total - 1.0).abs());
    }
    ensure(worst < 1e-12, format!("max |u + sum(b) - 1| = {worst:.1e} over 1000 vectors, K in 2..=10"))
}

fn c4_loss_values() -> Check {
    let ld = loss_digamma(&[5.0, 1.0], &[1.0, 0.0]).map_err(|e| e.to_string())?;
    let kl = kl_uniform_dirichlet(&[2.0, 1.0]).map_err(|e| e.to_string())?;
    let kl1 = kl_uniform_dirichlet(&[1.0; 5]).map_err(|e| e.to_string())?;
    let lams = [annealing(0, 800), annealing(200, 800), annealing(400, 800)];
    let ok = (ld - 0.2).abs() < 1e-9
        && (kl - (std::f64::consts::LN_2 - 0.5)).abs() < 1e-9
        && kl1 == 0.0
        && lams == [0.0, 0.5, 1.0];
    ensure(
        ok,
        format!("loss_digamma = {ld:.12}, KL(2,1) = {kl:.12}, KL(1..) = {kl1}, lambda = {lams:?}"),
    )
}

fn c5_gradients() -> Check {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        let cfg = DetectorConfig {
            text_dim: 5,
            image_dim: 4,
            align_dim: 8,
            state_size: 4,
            se_reduction: 2,
            num_classes: 3,
            seed,
        };
        let mut params = DetectorParams::init(&cfg).map_err(|e| e.to_string())?;
        // move B, C and Δ away from their symmetric init so every path matters
        for t in [&mut params.b, &mut params.c_out] {
            t.data_mut().iter_mut().for_each(|v| *v += 0.5 * rng.sample::<f64, _>(StandardNormal));
        }
        params.dt_log = Tensor::scalar(rng.random_range(-3.0..0.0));
        let xt: Vec<f64> = (0..5).map(|_| rng.sample(StandardNormal)).collect();
        let xi: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        let y = one_hot(rng.random_range(0..3), 3);
        let lambda = rng.random_range(0.1..1.0);
        let tensors: Vec<Tensor> = params.tensors().iter().map(|t| (*t).clone()).collect();
        let report = grad_check(
            |g, vars| {
                let pv = ParamVars::from_vars(vars)?;
                let out = forward_graph(g, &pv, Tensor::row(xt.clone()), Tensor::row(xi.clone()))?;
                Ok(loss_trust_graph(g, out.evidence, &y, lambda)?.total)
            },
            &tensors,
            1e-5,
        )
        .map_err(|e| e.to_string())?;
        if report.max_rel_error > worst {
            worst = report.max_rel_error;
        }
    }
    let detail = format!("max relative error {worst:.2e} over 5 models ({} groups each)", PARAM_NAMES.len());
    if worst >= 1e-4 {
        return Err(detail);
    }
    within(t0.elapsed(), 30.0, detail)
}

fn c6_special() -> Check {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/special_grid.csv");
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| e.to_string())?;
    let (mut dg, mut lg, mut n) = (0.0f64, 0.0f64, 0);
    for row in rdr.records() {
        let row = row.map_err(|e| e.to_string())?;
        let x: f64 = row[0].parse().unwrap();
        let d: f64 = row[1].parse().unwrap();
        let l: f64 = row[2].parse().unwrap();
        dg = dg.max((digamma(x).unwrap() - d).abs());
        lg = lg.max((lgamma(x).unwrap() - l).abs());
        n += 1;
    }
    ensure(
        n == 200 && dg < 1e-8 && lg < 1e-8,
        format!("{n} points in [1e-3, 1e6]: max abs err digamma {dg:.1e}, lgamma {lg:.1e}"),
    )
}

fn c7_end_to_end() -> Check {
    let t0 = Instant::now();
    let spec = SyntheticSpec {
        num_samples: 1000,
        text_dim: 16,
        image_dim: 16,
        num_classes: 2,
        separation: 3.0,
        length_noise: 0.0,
        seed: 7,
    };
    let data = gen_synthetic(&spec).map_err(|e| e.to_string())?;
    let mut c = config(detector(16, 16, 2), 100, 7);
    c.execution = Execution::Sequential;
    let out = xval(&data, &c, 10).map_err(|e| e.to_string())?;
    let f1 = out.report.macro_f1;
    let detail = format!("10-fold macro-F1 {:.4} ± {:.4} (100 epochs, one thread)", f1.mean, f1.std);
    if f1.mean < 0.95 {
        return Err(detail);
    }
    within(t0.elapsed(), 300.0, detail)
}

fn c8_ood() -> Check {
    let k = 4;
    let runs = Execution::Parallel.try_map(&[0u64, 1, 2, 3, 4], |&seed| {
        let spec = SyntheticSpec {
            num_samples: 1000,
            text_dim: 16,
            image_dim: 16,
            num_classes: k,
            separation: 3.0,
            length_noise: 0.0,
            seed,
        };
        let data = gen_synthetic(&spec)?;
        let split = &split_kfold(&data, 5, seed)?[0];
        let c = config(detector(16, 16, k), 100, seed);
        let trained = train(&data.subset(&split.train)?, &c)?;
        let (_, inside) = evaluate(&data.subset(&split.test)?, &trained.params, ModalityMode::Both, Execution::Sequential)?;
        let ood = gen_out_of_distribution(&spec, 200, 6.0, 1000 + seed)?;
        let (_, outside) = evaluate(&ood, &trained.params, ModalityMode::Both, Execution::Sequential)?;
        Ok::<_, tvhsd::Error>((mean_u(&inside), mean_u(&outside)))
    })
    .map_err(|e| e.to_string())?;
    let u_in: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let u_out: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let gap = mean(&u_out) - mean(&u_in);
    ensure(
        gap >= 0.1,
        format!("mean u OOD {:.3} vs in-dist {:.3}, gap {gap:.3} (per seed in {} out {}; K = {k})", mean(&u_out), mean(&u_in), fmt(&u_in), fmt(&u_out)),
    )
}

fn length_drop(data: &Dataset, loss: LossMode, seed: u64) -> Result<f64, tvhsd::Error> {
    let mut c = config(detector(16, 16, 2), 100, seed);
    c.loss_mode = loss;
    let out = xval(data, &c, 5)?;
    let bins = length_bins_from_predictions(&out.predictions_by_fold(), &[10, 20, 35])?;
    let first = bins.first_nonempty().and_then(|b| b.accuracy_mean).unwrap_or(f64::NAN);
    let last = bins.last_nonempty().and_then(|b| b.accuracy_mean).unwrap_or(f64::NAN);
    Ok(first - last)
}

fn c9_length_robustness() -> Check {
    let mut trust = Vec::new();
    let mut ce = Vec::new();
    for seed in 0..5u64 {
        let data = gen_synthetic(&SyntheticSpec {
            num_samples: 1000,
            text_dim: 16,
            image_dim: 16,
            num_classes: 2,
            separation: 3.0,
            length_noise: 2.0,
            seed,
        })
        .map_err(|e| e.to_string())?;
        trust.push(length_drop(&data, LossMode::Trust, seed).map_err(|e| e.to_string())?);
        ce.push(length_drop(&data, LossMode::Ce, seed).map_err(|e| e.to_string())?);
    }
    let (t, c) = (mean(&trust), mean(&ce));
    ensure(
        t < c,
        format!("mean shortest-to-longest accuracy drop: trust {t:.4} {} vs ce {c:.4} {}", fmt(&trust), fmt(&ce)),
    )
}

fn c10_ablation() -> Check {
    let mut both = Vec::new();
    let mut text = Vec::new();
    for seed in 0..5u64 {
        let data = gen_synthetic(&SyntheticSpec {
            num_samples: 600,
            text_dim: 16,
            image_dim: 16,
            num_classes: 2,
            separation: 2.0,
            length_noise: 0.0,
            seed,
        })
        .map_err(|e| e.to_string())?;
        for (mode, sink) in [(ModalityMode::Both, &mut both), (ModalityMode::TextOnly, &mut text)] {
            let mut c = config(detector(16, 16, 2), 40, seed);
            c.modality_mode = mode;
            sink.push(xval(&data, &c, 5).map_err(|e| e.to_string())?.report.macro_f1.mean);
        }
    }
    ensure(
        mean(&both) >= mean(&text),
        format!("mean macro-F1 both {:.4} {} vs text_only {:.4} {}", mean(&both), fmt(&both), mean(&text), fmt(&text)),
    )
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tvhsd"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("tvhsd {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn c11_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name);
    let s = |name: &str| p(name).to_string_lossy().into_owned();
    std::fs::write(
        p("config.json"),
        r#"{"epochs": 4, "batch_size": 16, "detector": {"align_dim": 8, "state_size": 4, "se_reduction": 2}}"#,
    )
    .map_err(|e| e.to_string())?;

    let mut notes = Vec::new();
    for run in ["a", "b"] {
        cli(&["gen-synth", "--out", &s(&format!("data_{run}")), "--samples", "120", "--classes", "3",
              "--text-dim", "6", "--image-dim", "5", "--separation", "3", "--length-noise", "1", "--seed", "11"])?;
        cli(&["xval", "--data", &s("data_a"), "--config", &s("config.json"), "--folds", "3", "--seed", "2",
              "--out", &s(&format!("xval_{run}.json")), "--length-bins", "10,20,35,60"])?;
        cli(&["train", "--data", &s("data_a"), "--config", &s("config.json"), "--out", &s(&format!("model_{run}.json")), "--seed", "4"])?;
        cli(&["eval", "--data", &s("data_a"), "--model", &s(&format!("model_{run}.json")), "--length-bins", "10,20,35,60",
              "--out", &s(&format!("eval_{run}.json"))])?;
        cli(&["predict", "--data", &s("data_a"), "--model", &s("model_a.json"), "--out", &s(&format!("pred_{run}.csv"))])?;
    }
    for f in [dataio::MANIFEST_FILE, dataio::EMBEDDINGS_FILE, dataio::LABELS_FILE] {
        if read(&p("data_a").join(f))? != read(&p("data_b").join(f))? {
            return Err(format!("gen-synth output {f} differs between runs"));
        }
    }
    for (a, b) in [("xval_a.json", "xval_b.json"), ("model_a.json", "model_b.json"), ("eval_a.json", "eval_b.json"), ("pred_a.csv", "pred_b.csv")] {
        if read(&p(a))? != read(&p(b))? {
            return Err(format!("{a} and {b} differ"));
        }
    }
    notes.push("CLI gen-synth/xval/train/eval/predict byte-identical".to_string());

    // model round trip: forward outputs bit-for-bit
    let data = dataio::load(&p("data_a")).map_err(|e| e.to_string())?;
    let (params, mode) = load_model(&p("model_a.json")).map_err(|e| e.to_string())?;
    save_model(&p("model_c.json"), &params, mode).map_err(|e| e.to_string())?;
    let (again, _) = load_model(&p("model_c.json")).map_err(|e| e.to_string())?;
    if again != params {
        return Err("model save/load changed parameters".into());
    }
    for r in data.records() {
        let xt: Vec<f64> = r.text_emb.iter().map(|&v| v as f64).collect();
        let xi: Vec<f64> = r.image_emb.iter().map(|&v| v as f64).collect();
        let f1 = forward(&xt, &xi, &params).map_err(|e| e.to_string())?;
        let f2 = forward(&xt, &xi, &again).map_err(|e| e.to_string())?;
        let same = f1.evidence.iter().zip(&f2.evidence).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(format!("forward output differs after reload for {}", r.id));
        }
    }
    notes.push(format!("model round trip bit-exact on {} samples", data.len()));

    // container round trip
    dataio::save(&data, &p("data_c")).map_err(|e| e.to_string())?;
    let back = dataio::load(&p("data_c")).map_err(|e| e.to_string())?;
    if back != data {
        return Err("dataset container round trip is lossy".into());
    }
    notes.push("container round trip lossless".into());
    Ok(notes.join("; "))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "scan/convolution duality", run: c1_duality },
        Criterion { id: 2, name: "ZOH closed form", run: c2_zoh },
        Criterion { id: 3, name: "subjective-logic identity", run: c3_opinion_identity },
        Criterion { id: 4, name: "loss closed values", run: c4_loss_values },
        Criterion { id: 5, name: "gradient correctness", run: c5_gradients },
        Criterion { id: 6, name: "special functions", run: c6_special },
        Criterion { id: 7, name: "end-to-end learning", run: c7_end_to_end },
        Criterion { id: 8, name: "uncertainty on OOD", run: c8_ood },
        Criterion { id: 9, name: "length robustness direction", run: c9_length_robustness },
        Criterion { id: 10, name: "modality ablation direction", run: c10_ablation },
        Criterion { id: 11, name: "determinism and round trips", run: c11_determinism },
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let t0 = Instant::now();
        let result = (c.run)();
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  [{:>2}] {}: {detail} ({secs:.1} s)", c.id, c.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL  [{:>2}] {}: {detail} ({secs:.1} s)", c.id, c.name);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

//! End-to-end acceptance suite. Prints one `criterion N: PASS|FAIL` line per
//! criterion and exits nonzero if any fails.
//!
//! Run with `cargo test -p langgrid --test acceptance`. Criteria 1 and 2
//! train full-size models and take most of the runtime.

use std::process::ExitCode;
use std::time::Instant;

use langgrid::grid::{baseline_random, compute_mse, compute_ta, encode_grid, ObjectInstance, Scene, WorldPoint};
use langgrid::harness::{cmd_generate, cmd_train, evaluate, load_dataset, load_model, train_model, ModelChoice, RunConfig};
use langgrid::model::{Architecture, Head, Model, ModelConfig, ModelInput, ModelKind};
use langgrid::rng::rng_from_seed;
use langgrid::synth::{generate_split, oracle_gold, DataConfig, Region, Split};
use langgrid::tensor::layers::{lstm_cell, LstmWeights};
use langgrid::tensor::{grad_check, GradCheckOptions, Graph, Padding, Tensor, Var};
use langgrid::Result;
use rand::seq::SliceRandom;
use rand::Rng;

const TYPES: usize = 12;
const TOL: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = rng_from_seed(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let w = g.input(random(&g.shape(y).to_vec(), seed ^ 0xABCD));
    let p = g.mul(y, w)?;
    g.sum(p)
}

fn random_scene(n: usize, grid: usize, seed: u64) -> Scene {
    let mut rng = rng_from_seed(seed);
    let mut cells: Vec<(usize, usize)> = (0..grid).flat_map(|i| (0..grid).map(move |j| (i, j))).collect();
    cells.shuffle(&mut rng);
    let cw = 2.0 / grid as f64;
    let objects = cells[..n]
        .iter()
        .map(|&(i, j)| ObjectInstance {
            type_id: rng.gen_range(0..TYPES),
            position: WorldPoint::new(
                -1.0 + (i as f64 + rng.gen_range(0.1..0.9)) * cw,
                -1.0 + (j as f64 + rng.gen_range(0.1..0.9)) * cw,
            ),
            size: rng.gen_range(1.0..3.0),
        })
        .collect();
    Scene::new(TYPES, objects).unwrap()
}

fn random_input(cfg: &ModelConfig, n_objects: usize, n_tokens: usize, seed: u64) -> ModelInput {
    let mut rng = rng_from_seed(seed + 1);
    let ids = (0..n_tokens).map(|_| rng.gen_range(0..cfg.vocab_size)).collect();
    ModelInput::new(ids, &random_scene(n_objects, cfg.grid_w, seed), cfg).unwrap()
}

fn reduced_config() -> ModelConfig {
    ModelConfig {
        grid_w: 16,
        grid_h: 16,
        embed_dim: 4,
        hidden: 3,
        width: 3,
        depth: 2,
        kernel: 3,
        fc_width: 6,
        max_objects: 10,
        vocab_size: 9,
        ..ModelConfig::default()
    }
}

fn criterion_1() -> Result<Outcome> {
    let t = Instant::now();
    let cfg = RunConfig::default();
    let data = langgrid::synth::generate_dataset(&cfg.data_config())?;
    let out = train_model(&cfg, &data.train, &data.dev, &mut |l| eprintln!("  [1] {}", l.line()))?;
    let r = evaluate(&out.model, &data.test, TOL)?;
    let minutes = t.elapsed().as_secs_f64() / 60.0;
    Ok(outcome(
        r.ta_start >= 85.0 && r.mse_start <= 0.01 && minutes <= 30.0,
        format!(
            "train={} test={} TA(start)={:.2}% (need >= 85) MSE={:.5} (need <= 0.01) runtime={minutes:.1} min (need <= 30)",
            data.train.len(),
            r.n,
            r.ta_start,
            r.mse_start
        ),
    ))
}

fn criterion_2() -> Result<Outcome> {
    let mut base = RunConfig::default();
    base.region = Region {
        x_min: -0.9,
        x_max: -0.1,
        y_min: -0.9,
        y_max: 0.9,
    };
    base.test_shift = WorldPoint::new(1.0, 0.0);
    // Same object density as the default full-width region.
    base.max_objects = 11;
    let data = langgrid::synth::generate_dataset(&base.data_config())?;
    let mut ta = Vec::new();
    for model in [ModelChoice::Langunet, ModelChoice::Langfcnet] {
        let cfg = RunConfig { model, ..base.clone() };
        let out = train_model(&cfg, &data.train, &data.dev, &mut |l| eprintln!("  [2 {}] {}", model.as_str(), l.line()))?;
        ta.push(evaluate(&out.model, &data.test, TOL)?.ta_start);
    }
    let gap = ta[0] - ta[1];
    Ok(outcome(
        gap >= 15.0,
        format!(
            "shifted test TA: langunet={:.2}% langfcnet={:.2}% gap={gap:.2}pp (need >= 15)",
            ta[0], ta[1]
        ),
    ))
}

fn criterion_3() -> Result<Outcome> {
    let mut rng = rng_from_seed(20_231);
    let n = 100_000;
    let preds: Vec<WorldPoint> = (0..n).map(|_| baseline_random(&mut rng)).collect();
    let golds: Vec<WorldPoint> = (0..n).map(|_| baseline_random(&mut rng)).collect();
    let mse = compute_mse(&preds, &golds)?;
    // E|p - q|² over independent uniform points on [-1, 1]²: 2 axes × 2/3.
    let expected = 2.0 * (2.0 / 3.0);
    Ok(outcome(
        (mse - expected).abs() <= 0.02,
        format!("MSE={mse:.5} over {n} samples, expected {expected:.5} ± 0.02"),
    ))
}

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

fn op_cases() -> Vec<(&'static str, Vec<Vec<usize>>, Build)> {
    let lstm: Build = Box::new(|g, v| {
        let w = LstmWeights {
            w_input: v[0],
            w_hidden: v[1],
            bias: v[2],
        };
        let (mut h, mut c) = (v[4], v[5]);
        let mut outs = Vec::new();
        for t in 0..3 {
            let x_t = g.slice(v[3], 0, t, 1)?;
            (h, c) = lstm_cell(g, x_t, h, c, &w)?;
            outs.push(h);
        }
        outs.push(c);
        g.concat(&outs, 0)
    });
    vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], Box::new(|g, v| g.matmul(v[0], v[1]))),
        ("add", vec![vec![3, 4], vec![3, 4]], Box::new(|g, v| g.add(v[0], v[1]))),
        ("sub", vec![vec![3, 4], vec![3, 4]], Box::new(|g, v| g.sub(v[0], v[1]))),
        ("mul", vec![vec![3, 4], vec![3, 4]], Box::new(|g, v| g.mul(v[0], v[1]))),
        ("add_bias", vec![vec![3, 4], vec![4]], Box::new(|g, v| g.add_bias(v[0], v[1]))),
        ("scale", vec![vec![3, 4]], Box::new(|g, v| g.scale(v[0], -2.5))),
        ("sum", vec![vec![3, 4]], Box::new(|g, v| g.sum(v[0]))),
        ("mean", vec![vec![3, 4]], Box::new(|g, v| g.mean(v[0]))),
        ("sigmoid", vec![vec![3, 4]], Box::new(|g, v| g.sigmoid(v[0]))),
        ("tanh", vec![vec![3, 4]], Box::new(|g, v| g.tanh(v[0]))),
        ("elu", vec![vec![3, 4]], Box::new(|g, v| g.elu(v[0]))),
        ("softmax", vec![vec![2, 3, 4]], Box::new(|g, v| g.softmax(v[0], 1))),
        ("softmax_last", vec![vec![2, 3, 4]], Box::new(|g, v| g.softmax(v[0], 2))),
        ("reshape", vec![vec![2, 6]], Box::new(|g, v| g.reshape(v[0], &[3, 4]))),
        ("transpose", vec![vec![3, 4]], Box::new(|g, v| g.transpose(v[0]))),
        ("concat", vec![vec![2, 3, 4], vec![2, 1, 4]], Box::new(|g, v| g.concat(&[v[0], v[1]], 1))),
        ("slice", vec![vec![2, 3, 4]], Box::new(|g, v| g.slice(v[0], 2, 1, 2))),
        ("gather", vec![vec![5, 3]], Box::new(|g, v| g.gather(v[0], &[4, 0, 4]))),
        ("tile", vec![vec![3]], Box::new(|g, v| g.tile(v[0], 2, 3))),
        (
            "correlate",
            vec![vec![4]],
            Box::new(|g, v| g.correlate(v[0], &[Some(1), None, Some(3), Some(1), None, Some(0)], &[2, 3])),
        ),
        (
            "soft_argmax",
            vec![vec![2, 12]],
            Box::new(|g, v| {
                let s = g.softmax(v[0], 1)?;
                let s = g.reshape(s, &[2, 3, 4])?;
                g.soft_argmax(s)
            }),
        ),
        (
            "conv2d",
            vec![vec![2, 5, 5], vec![3, 2, 3, 3], vec![3]],
            Box::new(|g, v| g.conv2d(v[0], v[1], Some(v[2]), 1, Padding::Same)),
        ),
        (
            "conv2d_stride2",
            vec![vec![2, 8, 8], vec![3, 2, 5, 5]],
            Box::new(|g, v| g.conv2d(v[0], v[1], None, 2, Padding::Same)),
        ),
        (
            "conv2d_valid",
            vec![vec![2, 6, 6], vec![2, 2, 3, 3]],
            Box::new(|g, v| g.conv2d(v[0], v[1], None, 1, Padding::Valid)),
        ),
        (
            "conv_transpose2d",
            vec![vec![2, 3, 3], vec![2, 3, 5, 5], vec![3]],
            Box::new(|g, v| g.conv_transpose2d(v[0], v[1], Some(v[2]), 2)),
        ),
        (
            "conv1d",
            vec![vec![3, 6], vec![4, 3, 3], vec![4]],
            Box::new(|g, v| g.conv1d(v[0], v[1], Some(v[2]))),
        ),
        (
            "conv2d_tiled",
            vec![vec![4], vec![3, 4, 5, 5]],
            Box::new(|g, v| g.conv2d_tiled(v[0], v[1], 8, 8, 2, Padding::Same)),
        ),
        ("lstm_unroll", vec![vec![3, 8], vec![2, 8], vec![8], vec![3, 3], vec![1, 2], vec![1, 2]], lstm),
    ]
}

fn criterion_4() -> Result<Outcome> {
    let t = Instant::now();
    let seeds = 10u64;
    let mut worst: (f64, String) = (0.0, String::new());
    let mut failed = Vec::new();
    let mut note = |name: &str, seed: u64, err: f64, passed: bool| {
        if err > worst.0 {
            worst = (err, format!("{name} seed {seed}"));
        }
        if !passed {
            failed.push(format!("{name}/{seed}"));
        }
    };

    let cases = op_cases();
    for (name, shapes, build) in &cases {
        for seed in 0..seeds {
            let inputs: Vec<Tensor> = shapes.iter().enumerate().map(|(k, s)| random(s, seed * 31 + k as u64)).collect();
            let r = grad_check(
                &inputs,
                |g, v| {
                    let y = build(g, v)?;
                    weighted_sum(g, y, seed)
                },
                GradCheckOptions::default(),
            )?;
            note(name, seed, r.max_rel_error, r.passed());
        }
    }
    // abs away from its kink
    for seed in 0..seeds {
        let mut x = random(&[3, 4], seed);
        x.data_mut().iter_mut().for_each(|v| *v += v.signum() * 0.1);
        let r = grad_check(
            &[x],
            |g, v| {
                let a = g.abs(v[0])?;
                weighted_sum(g, a, seed)
            },
            GradCheckOptions::default(),
        )?;
        note("abs", seed, r.max_rel_error, r.passed());
    }

    let cfg = reduced_config();
    for seed in 0..seeds {
        let (arch, params) = Architecture::build(cfg.clone(), ModelKind::Langunet, 100 + seed)?;
        let inp = random_input(&cfg, 8, 5, 200 + seed);
        let r = grad_check(
            params.values(),
            |g, vars| {
                let fw = arch.forward(g, vars, &inp)?;
                let a = weighted_sum(g, fw.world, seed)?;
                let heat = fw.grounding.expect("grid head").heatmaps;
                let b = weighted_sum(g, heat, seed + 1)?;
                let b = g.scale(b, 30.0)?;
                g.add(a, b)
            },
            GradCheckOptions {
                max_coords: Some(6),
                seed,
                floor: 1e-5,
                ..GradCheckOptions::default()
            },
        )?;
        note("langunet", seed, r.max_rel_error, r.passed());
    }

    let secs = t.elapsed().as_secs_f64();
    Ok(outcome(
        failed.is_empty() && secs < 120.0,
        format!(
            "{} ops + full reduced model × {seeds} seeds, worst rel err {:.2e} ({}) (need < 1e-4), failures {:?}, runtime {secs:.1}s (need < 120)",
            cases.len() + 1,
            worst.0,
            worst.1,
            failed
        ),
    ))
}

fn criterion_5() -> Result<Outcome> {
    let mut worst_heat: f64 = 0.0;
    let mut worst_attn: f64 = 0.0;
    let n = 1000u64;
    for seed in 0..n {
        let mut rng = rng_from_seed(seed ^ 0x5eed);
        let grid = [8, 16, 32][rng.gen_range(0..3)];
        let cfg = ModelConfig {
            grid_w: grid,
            grid_h: grid,
            embed_dim: rng.gen_range(2..8),
            hidden: rng.gen_range(2..6),
            width: rng.gen_range(2..6),
            depth: rng.gen_range(1..3),
            kernel: [3, 5][rng.gen_range(0..2)],
            skips: rng.gen_bool(0.5),
            vocab_size: rng.gen_range(4..40),
            ..ModelConfig::default()
        };
        let (arch, params) = Architecture::build(cfg.clone(), ModelKind::Langunet, seed)?;
        let inp = random_input(&cfg, rng.gen_range(1..grid.min(24)), rng.gen_range(1..20), seed + 7);
        let mut g = Graph::new();
        let vars = params.bind(&mut g);
        let fw = arch.forward(&mut g, &vars, &inp)?;
        let heat = g.value(fw.grounding.expect("grid head").heatmaps).data();
        for map in heat.chunks(grid * grid) {
            worst_heat = worst_heat.max((map.iter().sum::<f64>() - 1.0).abs());
        }
        let att = g.value(fw.encoder.attention);
        let t = *att.shape().last().unwrap();
        for row in att.data().chunks(t) {
            worst_attn = worst_attn.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    Ok(outcome(
        worst_heat <= 1e-9 && worst_attn <= 1e-9,
        format!("{n} pairs, max |heatmap sum - 1| = {worst_heat:.2e}, max |attention row sum - 1| = {worst_attn:.2e} (need <= 1e-9)"),
    ))
}

fn criterion_6() -> Result<Outcome> {
    let cfg = ModelConfig {
        vocab_size: 9,
        ..ModelConfig::default()
    };
    let n = 100u64;
    let mut mismatched = Vec::new();
    for seed in 0..n {
        let (arch, params) = Architecture::build(cfg.clone(), ModelKind::Langunet, 1000 + seed)?;
        let Head::Unet(hg) = &arch.head else { unreachable!() };
        let mut rng = rng_from_seed(seed);
        let n_obj = rng.gen_range(1..=24);
        let grid = encode_grid(&random_scene(n_obj, cfg.grid_w, seed + 3), cfg.grid_w, cfg.grid_h)?;
        let mut perm: Vec<usize> = (0..TYPES).collect();
        perm.shuffle(&mut rng);
        let sel: Vec<Vec<f64>> = (0..2).map(|_| (0..TYPES).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let ctx: Vec<f64> = (0..2 * cfg.embed_dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let activations = |permute: bool| -> Result<Vec<Vec<u64>>> {
            let mut g = Graph::new();
            let vars = params.bind(&mut g);
            let (grid, sel) = if permute {
                let mut ps = vec![vec![0.0; TYPES]; 2];
                for k in 0..2 {
                    for l in 0..TYPES {
                        ps[k][perm[l]] = sel[k][l];
                    }
                }
                (grid.permuted(&perm), ps)
            } else {
                (grid.clone(), sel.clone())
            };
            let s1 = g.input(Tensor::new(vec![1, TYPES], sel[0].clone())?);
            let s2 = g.input(Tensor::new(vec![1, TYPES], sel[1].clone())?);
            let c = g.input(Tensor::new(vec![ctx.len()], ctx.clone())?);
            let gv = hg.apply(&mut g, &vars, &grid, s1, s2, c)?;
            let mut all = vec![gv.u1, gv.u2, gv.spatial, gv.logits, gv.heatmaps, gv.pixel];
            all.extend(gv.down);
            all.extend(gv.up);
            Ok(all.iter().map(|&v| g.value(v).data().iter().map(|x| x.to_bits()).collect()).collect())
        };
        if activations(false)? != activations(true)? {
            mismatched.push(seed);
        }
    }
    Ok(outcome(
        mismatched.is_empty(),
        format!("{} of {n} instances bit-identical under joint permutation, mismatches {mismatched:?}", n - mismatched.len() as u64),
    ))
}

fn criterion_7() -> Result<Outcome> {
    let cfg = DataConfig {
        seed: 77,
        train: 10_000,
        ..DataConfig::default()
    };
    let records = generate_split(&cfg, Split::Train, cfg.train)?;
    let mut agree = 0;
    let mut first_bad = None;
    for r in &records {
        let ok = match &r.semantics {
            Some(sem) => oracle_gold(sem, &r.scene()?, cfg.cell()).ok() == Some(r.gold_start),
            None => false,
        };
        if ok {
            agree += 1;
        } else if first_bad.is_none() {
            first_bad = Some(r.seed);
        }
    }
    Ok(outcome(
        agree == records.len() && records.len() == 10_000,
        format!("oracle agrees on {agree}/{} records, first disagreement {first_bad:?}", records.len()),
    ))
}

fn small_run(dir: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("grid", "16"),
        ("depth", "2"),
        ("width", "6"),
        ("hidden", "8"),
        ("embed_dim", "8"),
        ("train", "96"),
        ("dev", "32"),
        ("test", "32"),
        ("epochs", "3"),
        ("batch_size", "16"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.data = dir.join("data");
    cfg.out = dir.join("run");
    cfg
}

fn criterion_8() -> Result<Outcome> {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut runs = Vec::new();
    for d in &dirs {
        let cfg = small_run(d.path());
        cmd_generate(&cfg)?;
        let summary = cmd_train(&cfg, &mut |_| {})?;
        let dev = evaluate(&summary.model, &load_dataset(&cfg)?.dev, cfg.tol)?;
        runs.push((cfg, dev));
    }
    let mut same_files = true;
    for f in ["train.jsonl", "dev.jsonl", "test.jsonl", "manifest.json"] {
        let read = |k: usize| std::fs::read(runs[k].0.data.join(f)).ok();
        same_files &= read(0).is_some() && read(0) == read(1);
    }
    let (a, b) = (&runs[0].1, &runs[1].1);
    let metric_diff = (a.mse_start - b.mse_start).abs().max((a.ta_start - b.ta_start).abs());

    let model = load_model(&runs[0].0)?;
    let reloaded = Model::from_bytes(&model.to_bytes())?;
    let params_equal = model
        .params()
        .values()
        .iter()
        .zip(reloaded.params().values())
        .all(|(x, y)| x.shape() == y.shape() && x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    let bytes_equal = reloaded.to_bytes() == model.to_bytes();
    let records = &load_dataset(&runs[0].0)?.dev;
    let mut preds_equal = true;
    for r in records {
        let inp = model.input(&r.instruction, &r.scene()?)?;
        let (p, q) = (model.predict(&inp)?, reloaded.predict(&inp)?);
        preds_equal &= p.start.x.to_bits() == q.start.x.to_bits() && p.start.y.to_bits() == q.start.y.to_bits();
    }
    Ok(outcome(
        same_files && metric_diff <= 1e-9 && params_equal && bytes_equal && preds_equal,
        format!(
            "dataset files identical={same_files}, dev metric diff={metric_diff:.1e} (need <= 1e-9), checkpoint bit-exact={}, predictions bit-exact={preds_equal}",
            params_equal && bytes_equal
        ),
    ))
}

fn criterion_9() -> Result<Outcome> {
    let gold = [WorldPoint::new(0.3, -0.2)];
    let inside = compute_ta(&[WorldPoint::new(0.34, -0.16)], &gold, TOL)?;
    let origin = [WorldPoint::ORIGIN];
    let near = compute_ta(&[WorldPoint::new(0.04, 0.04)], &origin, TOL)?;
    let far = compute_ta(&[WorldPoint::new(0.06, 0.0)], &origin, TOL)?;
    Ok(outcome(
        near == 100.0 && far == 0.0 && inside == 100.0,
        format!("error (0.04, 0.04) -> {near}%, error (0.06, 0.00) -> {far}%"),
    ))
}

fn main() -> ExitCode {
    // `cargo test -- --list` and similar probes expect no work.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(usize, fn() -> Result<Outcome>); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let only: Vec<usize> = std::env::var("LANGGRID_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (n, run) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let o = run().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n}: {verdict} {} [{:.1}s]", o.detail, t.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

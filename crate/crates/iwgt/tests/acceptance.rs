use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use iwgt::config::{Config, GradCheckConfig, OracleConfig};
use iwgt::dataset::{Dataset, Encoding, Source};
use iwgt::experiments::{fewshot_sweep, finetune_on, gradcheck, jitter, oracle, pretrain_on, FewshotSpec, Init};
use iwgt_core::eval::{ModelPolicy, PowerPolicy};
use iwgt_core::model::{infer_powers, init_params, ModelConfig, Network, ParamGroup};
use iwgt_core::netgraph::{mask_edges, MaskView};
use iwgt_core::objectives::{rates, sinr, utility, GainMatrix, Objective};
use iwgt_core::scenarios::STRONG_SIGMA2;
use iwgt_core::solvers::brute_force;
use iwgt_core::tensor::{Tape, Tensor};
use iwgt_core::training::{pretrain, PretrainConfig, PretrainEvent};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn data(name: &str, n: usize, seed: u64) -> Result<Dataset, iwgt::Error> {
    Dataset::generate(Source::named(name)?, n, seed, Encoding::Binary)
}

fn toy() -> Config {
    Config::load("toy").expect("toy preset loads")
}

fn gradient_fidelity() -> Outcome {
    let cfg = toy();
    let model = &cfg.model;
    let shape_ok = model.layers == 2 && model.d_model == 32;
    let sampled = gradcheck(model, &cfg.pretrain, &cfg.finetune.objective, &cfg.gradcheck)?;
    let full = gradcheck(model, &cfg.pretrain, &cfg.finetune.objective, &GradCheckConfig { coords: 0, ..cfg.gradcheck.clone() })?;
    let pass = shape_ok && sampled.k == 4 && sampled.max_rel_error() < 1e-4 && sampled.seconds < 120.0;
    let resolvable = full.pretrain.max_rel_error_resolvable.max(full.finetune.max_rel_error_resolvable);
    Ok((
        pass,
        format!(
            "K={} L={} d={} {} sampled coords: L_pre {:.3e}, L_down {:.3e} in {:.1}s | full sweep of {} coords: max {:.3e}, \
             resolvable max {:.3e}, {} coords below float64 resolution",
            sampled.k,
            model.layers,
            model.d_model,
            cfg.gradcheck.coords,
            sampled.pretrain.max_rel_error,
            sampled.finetune.max_rel_error,
            sampled.seconds,
            full.pretrain.checked + full.finetune.checked,
            full.max_rel_error(),
            resolvable,
            full.pretrain.unresolvable + full.finetune.unresolvable,
        ),
    ))
}

fn oracle_checks() -> Result<(Outcome, Outcome), Box<dyn std::error::Error>> {
    let cfg = toy();
    let oc = OracleConfig::default();
    assert_eq!((oc.snapshots, oc.grid_points, oc.n_starts, oc.dominance_snapshots), (100, 101, 100, 1000));
    let start = Instant::now();
    let out = oracle(&oc, &cfg.wmmse)?;
    let secs = start.elapsed().as_secs_f64();
    let eq = (
        out.ratio_of_means >= 0.98 && out.oracle_snapshots == 100 && secs < 300.0,
        format!(
            "{} snapshots K in {:?}: WMMSE-Best / brute force = {:.5} (worst snapshot {:.5}), {:.1}s for both checks",
            out.oracle_snapshots, oc.k_values, out.ratio_of_means, out.worst_ratio, secs
        ),
    );
    let dom = (
        out.dominance_violations == 0 && out.dominance_snapshots == 1000,
        format!("{} violations over {} K=4 snapshots", out.dominance_violations, out.dominance_snapshots),
    );
    Ok((Ok(eq), Ok(dom)))
}

fn permutation_equivariance() -> Outcome {
    let model = ModelConfig::default();
    let mut params = init_params(&model, 3, &ParamGroup::DEPLOYED)?;
    jitter(&mut params, 0.2, 4);
    let d = data("D7-toy", 10, 5)?;
    let graphs = d.graphs(&d.norm_stats()?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let g = &graphs[i % graphs.len()];
        assert_eq!(g.k, 6);
        let mask = mask_edges(6, 0.3, i as u64)?;
        let base = infer_powers(&model, &params, g, &mask, d.p_max())?;
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut rng);
        let out = infer_powers(&model, &params, &g.permuted(&perm)?, &mask.permuted(&perm), d.p_max())?;
        for (a, &j) in out.iter().zip(&perm) {
            worst = worst.max(((a - base[j]) / d.p_max()).abs());
        }
    }
    Ok((worst < 1e-8, format!("50 permutations on K=6 graphs, max |p(pi g) - pi p(g)| / p_max = {worst:.2e}")))
}

fn feasibility() -> Outcome {
    let model = ModelConfig::default();
    let mut params = init_params(&model, 7, &ParamGroup::DEPLOYED)?;
    jitter(&mut params, 0.3, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p_max = 0.01;
    let (mut inside, mut seen) = (0usize, 0usize);
    for _ in 0..100 {
        let scale = 10f64.powf(rng.random_range(-2.0..3.0));
        let z: Vec<f64> = (0..100 * model.d_model).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let b = tape.bind(&params, |_| false);
        let zv = tape.constant(Tensor::matrix(100, model.d_model, z)?);
        let out = Network::new(&model, &b).decision_head(&mut tape, zv, p_max)?;
        for v in tape.value(out).data() {
            seen += 1;
            inside += usize::from((0.0..=p_max).contains(v));
        }
    }

    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let one = GainMatrix::new(1, vec![1.0])?;
    let sym = GainMatrix::new(2, vec![1.0, 0.5, 0.5, 1.0])?;
    let qos = Objective::Qos { r_min: 0.3, alpha: 15.0 };
    let pf = Objective::ProportionalFairness { epsilon: 1e-6 };
    let table = [
        close(sinr(&one, &[1.0], 1.0)?[0], 1.0),
        sinr(&sym, &[1.0, 1.0], 1.0)?.iter().all(|&s| close(s, 2.0 / 3.0)),
        sinr(&sym, &[0.0, 0.0], 1.0)?.iter().all(|&s| s == 0.0),
        close(rates(&one, &[1.0], 1.0)?[0], 1.0),
        rates(&one, &[0.0], 1.0)?[0] == 0.0,
        rates(&sym, &[1.0, 1.0], 1.0)?.iter().all(|&r| close(r, (5.0f64 / 3.0).log2())),
        close(utility(&[1.0, 2.0, 3.0], &Objective::SumRate), 6.0),
        close(utility(&[0.5], &qos), 0.5),
        close(utility(&[0.1], &qos), 0.1 - 15.0 * 0.2),
        close(utility(&[1.0, 1.0], &pf), 0.0),
        close(utility(&[0.0], &pf), 1e-6f64.ln()),
    ];
    let matched = table.iter().filter(|&&ok| ok).count();
    Ok((
        inside == seen && seen == 10_000 && matched == table.len(),
        format!("{inside}/{seen} head outputs in [0, p_max]; {matched}/{} tabulated utilities within 1e-12", table.len()),
    ))
}

fn pretrain_efficacy() -> Outcome {
    let cfg = toy();
    let d = data("D7-toy", 200, 13)?;
    let stats = d.norm_stats()?;
    let pc = PretrainConfig { epochs: 30, rho: 0.3, lambda: 0.1, ..cfg.pretrain };
    let start = Instant::now();
    let out = pretrain(&d.graphs(&stats)?, stats, &cfg.model, &pc, |_| {})?;
    let secs = start.elapsed().as_secs_f64();
    let last = out.history.last().ok_or("no epochs")?.val;
    Ok((
        last.edge < 0.5 * out.initial_val.edge && last.cl < -0.9 && secs < 600.0,
        format!(
            "held-out L_edge {:.4} -> {:.4} ({:.1}%), L_cl {:.4} -> {:.4}, {:.1}s",
            out.initial_val.edge,
            last.edge,
            100.0 * last.edge / out.initial_val.edge,
            out.initial_val.cl,
            last.cl,
            secs
        ),
    ))
}

fn masking() -> Outcome {
    let mut count_errors = 0;
    for k in [2usize, 4, 8] {
        for rho in [0.0, 0.1, 0.3, 0.5, 1.0] {
            let want = (rho * (k * (k - 1)) as f64 + 0.5).floor() as usize;
            for seed in 0..100 {
                let m = mask_edges(k, rho, seed)?;
                let diag = (0..k).any(|i| m.is_masked(i, i));
                if m.count() != want || diag {
                    count_errors += 1;
                }
            }
        }
    }
    let seeds = 10_000u64;
    let (mut outside, mut edges, mut worst_z) = (0usize, 0usize, 0.0f64);
    for k in [2usize, 4, 8] {
        for rho in [0.1, 0.3, 0.5] {
            let n = k * (k - 1);
            let p = (rho * n as f64 + 0.5).floor() / n as f64;
            let mut hits = vec![0u64; k * k];
            for seed in 0..seeds {
                let m = mask_edges(k, rho, seed)?;
                for (r, c) in m.pairs() {
                    hits[r * k + c] += 1;
                }
            }
            let sigma = (p * (1.0 - p) / seeds as f64).sqrt();
            for r in 0..k {
                for c in (0..k).filter(|&c| c != r) {
                    let dev = (hits[r * k + c] as f64 / seeds as f64 - p).abs();
                    edges += 1;
                    if sigma > 0.0 {
                        worst_z = worst_z.max(dev / sigma);
                    }
                    if dev > 3.0 * sigma {
                        outside += 1;
                    }
                }
            }
        }
    }
    Ok((
        count_errors == 0 && outside == 0,
        format!(
            "{count_errors} count mismatches over 1500 masks; {outside}/{edges} edge frequencies outside 3 sigma \
             over {seeds} seeds (max {worst_z:.2} sigma)"
        ),
    ))
}

fn ema_invariants() -> Outcome {
    let cfg = toy();
    let d = data("D7-toy", 40, 9)?;
    let stats = d.norm_stats()?;
    let graphs = d.graphs(&stats)?;
    let pc = PretrainConfig { epochs: 1, ..cfg.pretrain.clone() };
    let (mut steps, mut grad_max, mut cl_out) = (0usize, 0.0f64, 0usize);
    pretrain(&graphs, stats, &cfg.model, &pc, |e| {
        if let PretrainEvent::Step { report, .. } = e {
            steps += 1;
            grad_max = grad_max.max(report.teacher_grad_max);
            cl_out += usize::from(!(-1.0..=1.0).contains(&report.losses.cl));
        }
    })?;
    let frozen = PretrainConfig { tau: 1.0, epochs: 2, ..pc };
    let out = pretrain(&graphs, stats, &cfg.model, &frozen, |_| {})?;
    let init = init_params(&cfg.model, frozen.seed, &ParamGroup::PRETRAIN)?
        .subset(|n| ParamGroup::TEACHER.contains(&ParamGroup::of(n)));
    let identical = out.teacher.values_bit_equal(&init);
    Ok((
        steps > 0 && grad_max == 0.0 && cl_out == 0 && identical,
        format!(
            "{steps} steps: max teacher gradient {grad_max:e}, {cl_out} L_cl values outside [-1, 1]; \
             tau=1 teacher bit-identical after 2 epochs: {identical}"
        ),
    ))
}

fn fewshot_direction() -> Outcome {
    let cfg = toy();
    let pre_data = ["D4-toy", "D7-toy", "D10-toy", "D13-toy", "D5-toy", "D11-toy"]
        .iter()
        .enumerate()
        .map(|(i, n)| data(n, 100, 100 * i as u64))
        .collect::<Result<Vec<_>, _>>()?;
    let test = data("D20-toy", 200, 50_000)?;
    assert_eq!(test.header.source.k(), 8);
    let mut wins = 0;
    let mut detail = Vec::new();
    let seeds = 3u64;
    for s in 0..seeds {
        let pc = PretrainConfig { seed: s, ..cfg.pretrain.clone() };
        let pre = pretrain_on(&pre_data, &cfg.model, &pc, |_| {})?;
        let train = data("D20-toy", 64, 40_000 + 1000 * s)?;
        let ft = iwgt_core::training::FinetuneConfig { seed: s, ..cfg.finetune.clone() };
        let rows = fewshot_sweep(&FewshotSpec {
            pretrained: Some(&pre.checkpoint),
            model: &cfg.model,
            train: &train,
            test: &test,
            finetune: &ft,
            shots: &[64],
            wmmse: &cfg.wmmse,
            eval_seed: 0,
        })?;
        let (p, sc) = (rows[0].mean_utility, rows[1].mean_utility);
        wins += usize::from(p >= sc);
        detail.push(format!("seed {s}: {p:.4} vs {sc:.4}"));
    }
    Ok((
        2 * wins > seeds as usize,
        format!("D20-toy, 64 shots, pretrained vs scratch sum rate ({wins}/{seeds} wins): {}", detail.join("; ")),
    ))
}

fn finetune_optimality() -> Outcome {
    let cfg = toy();
    let one = data("strong-k1", 64, 17)?;
    let one_test = data("strong-k1", 100, 18)?;
    let stats = one.norm_stats()?;
    let ft = iwgt_core::training::FinetuneConfig { n_shot: 64, ..cfg.finetune.clone() };
    let ck = finetune_on(Init::Scratch { model: &cfg.model, stats }, &one, &ft, |_| {})?;
    let policy = ModelPolicy { model: &ck.model, params: &ck.params, p_max: 1.0 };
    let mut lowest = f64::INFINITY;
    for g in one_test.graphs(&stats)? {
        lowest = lowest.min(policy.powers(&g, &MaskView::none(1))?[0]);
    }

    let two = data("strong-k2", 128, 19)?;
    let two_test = data("strong-k2", 100, 20)?;
    let stats = two.norm_stats()?;
    let ft = iwgt_core::training::FinetuneConfig { n_shot: 128, ..cfg.finetune.clone() };
    let ck = finetune_on(Init::Scratch { model: &cfg.model, stats }, &two, &ft, |_| {})?;
    let policy = ModelPolicy { model: &ck.model, params: &ck.params, p_max: 1.0 };
    let (mut um, mut ub) = (0.0, 0.0);
    for (s, g) in two_test.snapshots.iter().zip(two_test.graphs(&stats)?) {
        let gm = GainMatrix::new(2, s.power_gains())?;
        let grid = brute_force(&gm, STRONG_SIGMA2, 1.0, 101, &Objective::SumRate)?;
        um += utility(&rates(&gm, &policy.powers(&g, &MaskView::none(2))?, STRONG_SIGMA2)?, &Objective::SumRate);
        ub += utility(&rates(&gm, &grid, STRONG_SIGMA2)?, &Objective::SumRate);
    }
    Ok((
        lowest >= 0.99 && um >= 0.85 * ub,
        format!(
            "K=1 lowest learned power {lowest:.5} of p_max; K=2 model / brute force = {:.4} over 100 held-out snapshots",
            um / ub
        ),
    ))
}

fn run_pipeline(dir: &Path) -> Result<(), String> {
    fs::write(
        dir.join("run.toml"),
        "[pretrain]\nepochs = 3\n\n[finetune]\nwarmup_epochs = 2\nfull_epochs = 4\nn_shot = 16\n\n[wmmse]\nn_starts = 8\n",
    )
    .map_err(|e| e.to_string())?;
    let steps: [&[&str]; 5] = [
        &["gen", "--scenario", "D7-toy", "--n", "40", "--seed", "1", "--out", "pre.bin"],
        &["gen", "--scenario", "D20-toy", "--n", "40", "--seed", "2", "--out", "test.bin"],
        &["pretrain", "--data", "pre.bin", "--out", "pre.ckpt"],
        &["finetune", "--checkpoint", "pre.ckpt", "--data", "test.bin", "--out", "ft.ckpt"],
        &["eval", "--checkpoint", "ft.ckpt", "--data", "test.bin", "--out", "eval.csv", "--records", "records.csv"],
    ];
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_iwgt"))
            .args(["--config", "run.toml"])
            .args(args)
            .current_dir(dir)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
    run_pipeline(a.path())?;
    run_pipeline(b.path())?;
    let files = [
        "pre.bin",
        "test.bin",
        "pre.ckpt/manifest",
        "pre.ckpt/params.bin",
        "ft.ckpt/manifest",
        "ft.ckpt/params.bin",
        "eval.csv",
        "records.csv",
    ];
    let mut differing = Vec::new();
    for f in files {
        if fs::read(a.path().join(f))? != fs::read(b.path().join(f))? {
            differing.push(f);
        }
    }
    Ok((
        differing.is_empty(),
        format!("{} files compared across two runs of gen, pretrain, finetune, eval; differing: {differing:?}", files.len()),
    ))
}

fn report(name: &str, outcome: Outcome, failures: &mut usize) {
    match outcome {
        Ok((true, detail)) => println!("PASS {name}: {detail}"),
        Ok((false, detail)) => {
            *failures += 1;
            println!("FAIL {name}: {detail}");
        }
        Err(e) => {
            *failures += 1;
            println!("FAIL {name}: error: {e}");
        }
    }
}

fn main() {
    let mut failures = 0;
    report("gradient fidelity", gradient_fidelity(), &mut failures);
    match oracle_checks() {
        Ok((eq, dom)) => {
            report("oracle equivalence", eq, &mut failures);
            report("wmmse dominance", dom, &mut failures);
        }
        Err(e) => {
            report("oracle equivalence", Err(e.to_string().into()), &mut failures);
            report("wmmse dominance", Err(e), &mut failures);
        }
    }
    report("permutation equivariance", permutation_equivariance(), &mut failures);
    report("feasibility", feasibility(), &mut failures);
    report("pre-training efficacy", pretrain_efficacy(), &mut failures);
    report("masking mechanics", masking(), &mut failures);
    report("ema and contrastive invariants", ema_invariants(), &mut failures);
    report("few-shot direction", fewshot_direction(), &mut failures);
    report("fine-tune optimality", finetune_optimality(), &mut failures);
    report("determinism", determinism(), &mut failures);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

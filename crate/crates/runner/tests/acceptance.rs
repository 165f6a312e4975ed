//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use fedcal_core::calibration::{
    apply_temperature, calibration_report, fit_temperature, harmonic_mean, nll_at, LogitBatch,
    MetricConfig, ProbBatch, TemperatureScaler,
};
use fedcal_core::federation::{
    aggregate, build_clients, fedavg_weights, local_train, personalized_evaluate, AggregatorConfig,
    AggregatorKind, Execution, LocalUpdate, ServerState, TAG_LOCAL,
};
use fedcal_core::losses::{total_loss, AuxKind, LossSpec};
use fedcal_core::model::{Activation, DualEncoder, HeadKind, LayerId, Modality, ModelConfig};
use fedcal_core::numerics::{argmax, softmax_rows, standard_normal, DenseMatrix, RngStream};
use fedcal_core::partition::{
    build_partition, heterogeneity_stats, shannon_entropy, tv_from_uniform, LabeledDataset,
    PartitionKind, PartitionSpec, Split,
};
use fedcal_runner::bench::{run_bench, BenchConfig};
use fedcal_runner::experiment::{build_data, build_plan, zero_shot_model};
use fedcal_runner::report::{render_csv, rows_of};
use fedcal_runner::synthetic::SyntheticSpec;
use fedcal_runner::{run_experiment, ExperimentConfig, RunOptions};
use nalgebra::DMatrix;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn random_probs(n: usize, c: usize, spread: f64, rng: &mut RngStream) -> ProbBatch<f64> {
    let z = DenseMatrix::from_fn(n, c, |_, _| spread * standard_normal(rng));
    let y = (0..n).map(|_| rng.below(c)).collect();
    ProbBatch::new(softmax_rows(&z).unwrap(), y).unwrap()
}

// ---------------------------------------------------------------- 1

struct Oracle {
    ece: f64,
    mce: f64,
    ace: f64,
    brier: f64,
    nll: f64,
}

/// Straightforward per-bin double loop over samples.
fn naive_metrics(p: &[Vec<f64>], y: &[usize], g: usize) -> Oracle {
    let n = p.len();
    let conf: Vec<f64> = p
        .iter()
        .map(|r| r.iter().cloned().fold(f64::MIN, f64::max))
        .collect();
    let pred: Vec<usize> = p
        .iter()
        .zip(&conf)
        .map(|(r, &m)| r.iter().position(|&v| v == m).unwrap())
        .collect();
    let (mut ece, mut mce, mut ace_sum, mut nonempty) = (0.0, 0.0f64, 0.0, 0);
    for b in 0..g {
        let lo = b as f64 / g as f64;
        let hi = (b + 1) as f64 / g as f64;
        let (mut count, mut hits, mut csum) = (0usize, 0usize, 0.0);
        for i in 0..n {
            let inside = (conf[i] > lo && conf[i] <= hi) || (b == 0 && conf[i] == 0.0);
            if inside {
                count += 1;
                csum += conf[i];
                if pred[i] == y[i] {
                    hits += 1;
                }
            }
        }
        if count > 0 {
            let gap = (hits as f64 / count as f64 - csum / count as f64).abs();
            ece += count as f64 / n as f64 * gap;
            mce = mce.max(gap);
            ace_sum += gap;
            nonempty += 1;
        }
    }
    let mut brier = 0.0;
    let mut nll = 0.0;
    for i in 0..n {
        for (c, &v) in p[i].iter().enumerate() {
            let t = if c == y[i] { 1.0 } else { 0.0 };
            brier += (v - t) * (v - t);
        }
        nll -= p[i][y[i]].max(1e-12).ln();
    }
    Oracle {
        ece,
        mce,
        ace: ace_sum / nonempty as f64,
        brier: brier / n as f64,
        nll: nll / n as f64,
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for s in 0..100 {
        let mut rng = RngStream::new(s, 1);
        let n = 1 + rng.below(200);
        let c = 2 + rng.below(9);
        let spread = [0.3, 1.0, 3.0, 10.0][s as usize % 4];
        let batch = random_probs(n, c, spread, &mut rng);
        let g = [15, 10, 5, 1][s as usize % 4];
        let r =
            calibration_report(&batch, &MetricConfig::with_bins(g)).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<f64>> = batch.probs().row_iter().map(|r| r.to_vec()).collect();
        let o = naive_metrics(&rows, batch.labels(), g);
        let m = r.metrics;
        for (name, got, want) in [
            ("ece", m.ece, o.ece),
            ("mce", m.mce, o.mce),
            ("ace", m.ace, o.ace),
            ("brier", m.brier, o.brier),
            ("nll", m.nll, o.nll),
        ] {
            let d = (got - want).abs();
            worst = worst.max(d);
            check(d <= 1e-12, || {
                format!("batch {s}: {name} {got} vs oracle {want}")
            })?;
        }
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "100 batches, max |diff| {worst:.1e} <= 1e-12, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut violations = 0;
    for s in 0..10_000u64 {
        let mut rng = RngStream::new(s, 2);
        let n = 1 + rng.below(100);
        let c = 2 + rng.below(9);
        let batch = random_probs(n, c, 0.5 + 5.0 * rng.uniform(), &mut rng);
        let m = calibration_report(&batch, &MetricConfig::default())
            .map_err(|e| e.to_string())?
            .metrics;
        if m.mce < m.ece || m.mce < m.ace {
            violations += 1;
        }
    }
    check(violations == 0, || format!("{violations} violations"))?;
    Ok("10000 batches, 0 violations of MCE >= ECE, MCE >= ACE".into())
}

// ---------------------------------------------------------------- 3

const GH: f64 = 1e-4;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn central_diff(w: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = w.to_vec();
    (0..w.len())
        .map(|k| {
            probe[k] = w[k] + GH;
            let up = f(&probe);
            probe[k] = w[k] - GH;
            let down = f(&probe);
            probe[k] = w[k];
            (up - down) / (2.0 * GH)
        })
        .collect()
}

fn unit_rows(n: usize, d: usize, rng: &mut RngStream) -> DenseMatrix<f64> {
    let mut m = DenseMatrix::from_fn(n, d, |_, _| standard_normal(rng));
    for i in 0..n {
        let norm = m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        m.row_mut(i).iter_mut().for_each(|v| *v /= norm);
    }
    m
}

/// Smallest |pre-activation| over every relu unit the batch touches.
fn relu_margin(model: &DualEncoder<f64>, x: &DenseMatrix<f64>) -> f64 {
    let mut margin = f64::INFINITY;
    for (m, input) in [
        (Modality::Vision, x.clone()),
        (Modality::Text, model.prototypes().clone()),
    ] {
        let mut h = input;
        for (k, layer) in model.encoder(m).layers.iter().enumerate() {
            let w = model.effective_layer_weight(LayerId::new(m, k)).unwrap();
            let mut pre = h.matmul(&w).unwrap();
            for row in 0..pre.rows() {
                for (v, b) in pre.row_mut(row).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            if layer.activation == Activation::Relu {
                margin = pre.data().iter().fold(margin, |a, v| a.min(v.abs()));
                pre.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = pre;
        }
    }
    margin
}

/// Random model and batch, redrawn until no relu unit sits within 10h of
/// its kink, where a central difference would straddle the corner.
fn gradient_fixture(seed: u64) -> (DualEncoder<f64>, DenseMatrix<f64>, Vec<usize>) {
    const HEADS: [HeadKind; 5] = [
        HeadKind::LoraBoth,
        HeadKind::LoraText,
        HeadKind::LoraVision,
        HeadKind::Prompt,
        HeadKind::Bitfit,
    ];
    let config = ModelConfig {
        embed_dim: 8,
        class_count: 4,
        head_kind: HEADS[seed as usize % HEADS.len()],
        logit_scale: 10.0,
        ..ModelConfig::default()
    };
    let mut rng = RngStream::new(seed, 3);
    loop {
        let protos = unit_rows(4, 8, &mut rng);
        let mut model = DualEncoder::zero_shot_init(config.clone(), protos, &mut rng).unwrap();
        let w: Vec<f64> = (0..model.trainable_len())
            .map(|_| 0.3 * standard_normal(&mut rng))
            .collect();
        model.load_trainable(&w).unwrap();
        let x = unit_rows(6, 8, &mut rng);
        let y = (0..6).map(|_| rng.below(4)).collect();
        if relu_margin(&model, &x) >= 10.0 * GH {
            return (model, x, y);
        }
    }
}

fn loss_at(
    model: &mut DualEncoder<f64>,
    w: &[f64],
    x: &DenseMatrix<f64>,
    y: &[usize],
    spec: &LossSpec,
) -> f64 {
    model.load_trainable(w).unwrap();
    let p = softmax_rows(&model.logits(x).unwrap()).unwrap();
    total_loss(&ProbBatch::new(p, y.to_vec()).unwrap(), spec)
        .unwrap()
        .total
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        // CE and MDCA with respect to logits through the softmax
        let mut rng = RngStream::new(seed, 4);
        let z = DenseMatrix::from_fn(6, 4, |_, _| 2.0 * standard_normal(&mut rng));
        let y: Vec<usize> = (0..6).map(|_| rng.below(4)).collect();
        for spec in [LossSpec::ce(), LossSpec::with_aux(AuxKind::Mdca, 1.0)] {
            let batch = ProbBatch::new(softmax_rows(&z).unwrap(), y.clone()).unwrap();
            let g = total_loss(&batch, &spec).unwrap().grad_wrt_probs;
            let mut analytic = Vec::new();
            for i in 0..6 {
                let p = batch.probs().row(i);
                let inner: f64 = p.iter().zip(g.row(i)).map(|(a, b)| a * b).sum();
                analytic.extend(p.iter().zip(g.row(i)).map(|(pj, gj)| pj * (gj - inner)));
            }
            let numeric = central_diff(z.data(), |v| {
                let p = softmax_rows(&DenseMatrix::new(6, 4, v.to_vec()).unwrap()).unwrap();
                total_loss(&ProbBatch::new(p, y.clone()).unwrap(), &spec)
                    .unwrap()
                    .total
            });
            let e = rel_err(&analytic, &numeric);
            worst = worst.max(e);
            check(e < 1e-4, || {
                format!("softmax seed {seed} {:?}: rel err {e:e}", spec.aux_kind)
            })?;
        }

        // full model chain, dropout disabled
        for spec in [LossSpec::ce(), LossSpec::with_aux(AuxKind::Mdca, 1.0)] {
            let (mut model, x, y) = gradient_fixture(seed);
            let w = model.trainable_vector();
            model.forward(&x, None).unwrap();
            let analytic = model.backward(&y, &spec).unwrap().1.flatten();
            let numeric = central_diff(&w, |v| loss_at(&mut model, v, &x, &y, &spec));
            let e = rel_err(&analytic, &numeric);
            worst = worst.max(e);
            check(e < 1e-4, || {
                format!(
                    "model seed {seed} {:?} {:?}: rel err {e:e}",
                    model.head_kind(),
                    spec.aux_kind
                )
            })?;
        }

        // DCA against its detached surrogate
        let beta = 0.7;
        let spec = LossSpec::with_aux(AuxKind::Dca, beta);
        let (mut model, x, y) = gradient_fixture(seed);
        let w = model.trainable_vector();
        let p0 = softmax_rows(&model.logits(&x).unwrap()).unwrap();
        let acc = (0..6).filter(|&i| argmax(p0.row(i)) == y[i]).count() as f64 / 6.0;
        let conf0 = (0..6).map(|i| p0.get(i, y[i])).sum::<f64>() / 6.0;
        let sign = (acc - conf0).signum();
        model.forward(&x, None).unwrap();
        let analytic = model.backward(&y, &spec).unwrap().1.flatten();
        let numeric = central_diff(&w, |v| {
            model.load_trainable(v).unwrap();
            let p = softmax_rows(&model.logits(&x).unwrap()).unwrap();
            let ce = -(0..6).map(|i| p.get(i, y[i]).ln()).sum::<f64>() / 6.0;
            let conf = (0..6).map(|i| p.get(i, y[i])).sum::<f64>() / 6.0;
            ce + beta * sign * (acc - conf)
        });
        let e = rel_err(&analytic, &numeric);
        worst = worst.max(e);
        check(e < 1e-4, || format!("dca seed {seed}: rel err {e:e}"))?;
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!(
        "20 models (d=8, C=4), max rel err {worst:.1e} < 1e-4, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 4

fn small_synthetic_config(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.seed = seed;
    c.synthetic = Some(SyntheticSpec {
        classes: 6,
        dim: 16,
        samples_per_class: 30,
        ..SyntheticSpec::default()
    });
    c.model.embed_dim = 16;
    c.model.class_count = 6;
    c
}

/// One-client, one-round federated run against direct local training.
fn single_client_matches_offline() -> Result<(), String> {
    let mut c = small_synthetic_config(11);
    c.partition.num_clients = 1;
    c.federation.rounds = 1;
    c.federation.participation = 1.0;
    c.federation.warmup = fedcal_core::federation::WarmupMode::None;
    c.federation.lr = 0.05;
    let fl = run_experiment(&c, &RunOptions::default()).map_err(|e| e.to_string())?;

    let (data, protos) = build_data(&c).map_err(|e| e.to_string())?;
    let model = zero_shot_model(&c, protos).map_err(|e| e.to_string())?;
    let plan = build_plan(&c, &data).map_err(|e| e.to_string())?;
    let mut clients = build_clients(&plan, &data, &model, &c.aggregator);
    let global = model.trainable_vector();
    let mut rng = RngStream::derive(c.seed, &[TAG_LOCAL, 0, 0]);
    let (update, _) = local_train(
        &mut clients[0],
        &global,
        &c.federation,
        &c.aggregator,
        &c.loss,
        0,
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    clients[0].model.load_trainable(&update.vector).unwrap();
    let offline = personalized_evaluate(&clients, &c.metrics, None).map_err(|e| e.to_string())?;

    let last = fl.rounds.last().unwrap();
    check(last.global == update.vector, || {
        "global vector differs from local training".into()
    })?;
    check(last.global != global, || {
        "training did not move the parameters".into()
    })?;
    check(fl.final_report.evaluation == offline, || {
        "evaluation differs from offline run".into()
    })
}

fn criterion_4() -> Outcome {
    single_client_matches_offline()?;

    let fedavg = AggregatorConfig::of(AggregatorKind::Fedavg);
    let fednova = AggregatorConfig::of(AggregatorKind::Fednova);
    let mut worst_sum = 0.0f64;
    for s in 0..100u64 {
        let mut rng = RngStream::new(s, 5);
        let m = 1 + rng.below(8);
        let dim = 1 + rng.below(50);
        let steps = 1 + rng.below(20);
        let global: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
        let updates: Vec<LocalUpdate<f64>> = (0..m)
            .map(|k| LocalUpdate {
                client_id: k,
                vector: (0..dim).map(|_| standard_normal(&mut rng)).collect(),
                samples: 1 + rng.below(500),
                steps,
            })
            .collect();
        let a = aggregate(
            &updates,
            &global,
            &fedavg,
            &mut ServerState::new(global.clone(), m, &fedavg),
        )
        .map_err(|e| e.to_string())?;
        let b = aggregate(
            &updates,
            &global,
            &fednova,
            &mut ServerState::new(global.clone(), m, &fednova),
        )
        .map_err(|e| e.to_string())?;
        check(a == b, || {
            format!("set {s}: FedNova differs from FedAvg with equal steps")
        })?;
        let samples: Vec<usize> = updates.iter().map(|u| u.samples).collect();
        let sum: f64 = fedavg_weights(&samples)
            .map_err(|e| e.to_string())?
            .iter()
            .sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
    }
    check(worst_sum <= 1e-12, || {
        format!("weights sum off by {worst_sum:e}")
    })?;
    Ok(format!(
        "single client bit-identical to local training; FedNova == FedAvg on 100 sets; |sum w - 1| <= {worst_sum:.1e}"
    ))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut c = ExperimentConfig::default();
    c.partition.num_clients = 10;
    c.partition.alpha = 0.5;
    c.federation.rounds = 5;
    let serial = run_experiment(
        &c,
        &RunOptions {
            execution: Execution::Serial,
        },
    )
    .map_err(|e| e.to_string())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(8)
        .build()
        .map_err(|e| e.to_string())?;
    let parallel = pool
        .install(|| {
            run_experiment(
                &c,
                &RunOptions {
                    execution: Execution::Parallel,
                },
            )
        })
        .map_err(|e| e.to_string())?;
    let a = serial
        .without_timing()
        .to_json()
        .map_err(|e| e.to_string())?;
    let b = parallel
        .without_timing()
        .to_json()
        .map_err(|e| e.to_string())?;
    check(a == b, || "serial and 8-worker results differ".into())?;
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "synth-20, N=10, T=5: serial and 8 workers byte-identical ({} bytes), {:.1}s",
        a.len(),
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 6

fn balanced_labels(classes: usize, per_class: usize) -> LabeledDataset<f64> {
    let n = classes * per_class;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    LabeledDataset::new(
        DenseMatrix::zeros(n, 1),
        labels,
        vec![0; n],
        vec![Split::Train; n],
        classes,
    )
    .unwrap()
}

fn criterion_6() -> Outcome {
    let (classes, clients) = (10, 10);
    let data = balanced_labels(classes, 1000);
    let run = |alpha: f64, seed: u64| {
        let spec = PartitionSpec {
            kind: PartitionKind::Dirichlet,
            alpha,
            num_clients: clients,
            ..PartitionSpec::default()
        };
        build_partition(&spec, &data, &mut RngStream::new(seed, 6)).unwrap()
    };
    let (mut near_uniform, mut skewed, mut conserved) = (0, 0, 0);
    let half_ln_c = 0.5 * (classes as f64).ln();
    for seed in 0..100u64 {
        let plan = run(1000.0, seed);
        let stats = heterogeneity_stats(&plan);
        let max_tv = stats
            .proportions
            .iter()
            .map(|p| tv_from_uniform(p))
            .fold(0.0, f64::max);
        near_uniform += usize::from(max_tv < 0.1);
        conserved +=
            usize::from(plan.assigned_count() == data.len() && plan.is_consistent(&data.labels));

        let plan = run(0.05, seed);
        let mean_entropy = heterogeneity_stats(&plan)
            .proportions
            .iter()
            .map(|p| shannon_entropy(p))
            .sum::<f64>()
            / clients as f64;
        skewed += usize::from(mean_entropy < half_ln_c);
        conserved +=
            usize::from(plan.assigned_count() == data.len() && plan.is_consistent(&data.labels));
    }
    check(near_uniform >= 99, || {
        format!("alpha 1000: only {near_uniform}/100 seeds with max TV < 0.1")
    })?;
    check(skewed >= 95, || {
        format!("alpha 0.05: only {skewed}/100 seeds with mean entropy < 0.5 ln C")
    })?;
    check(conserved == 200, || {
        format!("conservation held on {conserved}/200 plans")
    })?;
    Ok(format!(
        "alpha 1000: {near_uniform}/100 max-TV < 0.1; alpha 0.05: {skewed}/100 entropy < 0.5 ln C; conservation 200/200"
    ))
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let mut c = small_synthetic_config(7);
    c.partition.num_clients = 3;
    c.federation.rounds = 50;
    c.federation.participation = 1.0;
    c.federation.lr = 0.05;
    c.model.head_kind = HeadKind::LoraBoth;
    let rank = c.model.lora_rank;
    let results = run_experiment(&c, &RunOptions::default()).map_err(|e| e.to_string())?;
    let (data, protos) = build_data(&c).map_err(|e| e.to_string())?;
    let mut model = zero_shot_model(&c, protos.clone()).map_err(|e| e.to_string())?;
    model
        .load_trainable(&results.rounds.last().unwrap().global)
        .unwrap();

    let mut worst_trailing = 0.0f64;
    let mut smallest_leading = f64::INFINITY;
    let ids: Vec<_> = model.adapters().map(|a| a.target).collect();
    for id in ids {
        let eff = model.effective_layer_weight(id).unwrap();
        let base = &model.layer(id).unwrap().weight;
        let delta = eff.sub(base).unwrap();
        let m = DMatrix::from_row_slice(delta.rows(), delta.cols(), delta.data());
        let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        worst_trailing = sv[rank..].iter().copied().fold(worst_trailing, f64::max);
        smallest_leading = smallest_leading.min(sv[0]);
    }
    check(worst_trailing < 1e-8, || {
        format!("trailing singular value {worst_trailing:e} >= 1e-8")
    })?;
    check(smallest_leading > 1e-6, || {
        "an adapter did not train".into()
    })?;

    // zero-initialized B reproduces the zero-shot model
    let mut zs = c.clone();
    zs.model.head_kind = HeadKind::ZeroShot;
    let zero_shot = zero_shot_model(&zs, protos.clone()).map_err(|e| e.to_string())?;
    let fresh = zero_shot_model(&c, protos).map_err(|e| e.to_string())?;
    let a = fresh.logits(&data.embeddings).unwrap();
    let b = zero_shot.logits(&data.embeddings).unwrap();
    check(a.data() == b.data(), || {
        "B = 0 logits differ from zero-shot".into()
    })?;
    check(results.drift.global[0] == 0.0, || {
        format!("round-0 drift {}", results.drift.global[0])
    })?;
    Ok(format!(
        "after 50 rounds trailing singular values <= {worst_trailing:.1e} (rank {rank}); B = 0 logits bit-identical; drift 0 at round 0"
    ))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let mut worst_gain = f64::NEG_INFINITY;
    for s in 0..100u64 {
        let mut rng = RngStream::new(s, 8);
        let n = 5 + rng.below(200);
        let c = 2 + rng.below(9);
        let scale = [0.5, 2.0, 8.0, 30.0][s as usize % 4];
        let z = DenseMatrix::from_fn(n, c, |_, _| scale * standard_normal(&mut rng));
        let y: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
        let logits = LogitBatch::new(z, y).unwrap();
        let base = apply_temperature(&logits, &TemperatureScaler::new(1.0).unwrap())
            .unwrap()
            .accuracy();
        for tau in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let acc = apply_temperature(&logits, &TemperatureScaler::new(tau).unwrap())
                .unwrap()
                .accuracy();
            check(acc == base, || {
                format!("batch {s}: accuracy {acc} at tau {tau} vs {base}")
            })?;
        }
        let tau = fit_temperature(&logits).map_err(|e| e.to_string())?.tau();
        let gain = nll_at(&logits, tau) - nll_at(&logits, 1.0);
        worst_gain = worst_gain.max(gain);
        check(gain <= 0.0, || {
            format!("batch {s}: fitted tau {tau} raises NLL by {gain:e}")
        })?;
    }
    Ok(format!(
        "accuracy invariant for tau in {{0.1, 0.5, 1, 2, 5}} on 100 batches; fitted NLL - NLL(1) <= {worst_gain:.2e}"
    ))
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let cfg = BenchConfig::default();
    let report = run_bench(&cfg, &RunOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let lines = report.summary_lines().join("; ");
    check(report.passed(), || lines.clone())?;
    within(elapsed, 300.0)?;
    Ok(format!("{lines}; {:.1}s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Outcome {
    let hm = harmonic_mean(89.34, 89.83).map_err(|e| e.to_string())?;
    check(format!("{hm:.2}") == "89.58", || {
        format!("HM(89.34, 89.83) = {hm}")
    })?;

    let mut c = small_synthetic_config(0);
    c.partition.kind = PartitionKind::BaseToNew;
    c.partition.num_clients = 3;
    for seed in 0..100u64 {
        c.seed = seed;
        let (data, _) = build_data(&c).map_err(|e| e.to_string())?;
        let plan = build_plan(&c, &data).map_err(|e| e.to_string())?;
        let (base, new) = (plan.base_classes.unwrap(), plan.new_classes.unwrap());
        check(base.iter().all(|b| !new.contains(b)), || {
            format!("seed {seed}: base and new overlap")
        })?;
        check(base.len() + new.len() == c.model.class_count, || {
            format!("seed {seed}: classes lost")
        })?;
    }

    c.seed = 3;
    c.federation.rounds = 2;
    c.federation.participation = 1.0;
    let r = run_experiment(&c, &RunOptions::default()).map_err(|e| e.to_string())?;
    let e = &r.final_report.evaluation;
    let (b, n, h) = (
        e.base_mean.unwrap(),
        e.new_mean.unwrap(),
        e.harmonic.unwrap(),
    );
    check(
        h.accuracy == harmonic_mean(b.accuracy, n.accuracy).unwrap(),
        || "hm row mismatch".into(),
    )?;
    let csv = render_csv(&rows_of(&r));
    check(csv.contains("base_to_new:hm"), || {
        "no harmonic row in report".into()
    })?;
    Ok(
        "HM(89.34, 89.83) = 89.58; base/new disjoint and covering on 100 seeds; hm row reported"
            .into(),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "metric oracle equivalence", criterion_1),
        (2, "binning invariant", criterion_2),
        (3, "gradient checks", criterion_3),
        (4, "aggregation identities", criterion_4),
        (5, "determinism", criterion_5),
        (6, "partition statistics", criterion_6),
        (7, "LoRA structure", criterion_7),
        (8, "temperature scaling", criterion_8),
        (9, "directional trends", criterion_9),
        (10, "base-to-new pipeline", criterion_10),
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {id} ({name}): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

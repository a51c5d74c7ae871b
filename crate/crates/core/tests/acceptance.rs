use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use weakanno::annotate::{annotate_oracle, find_centroids, propagate, Threshold};
use weakanno::eval::{labelling_accuracy, oracle_weak_labels, sweep_clusters, sweep_thresholds, SweepSettings, ThresholdRule};
use weakanno::gmm::{assign, fit, log_det_from_cholesky, log_pdf, GmmConfig, GmmModel};
use weakanno::ingest::{EmbeddingSet, WindowingSpec};
use weakanno::pipeline::{
    cmd_annotate_oracle, cmd_cluster, cmd_report, cmd_train, corrupt_labels, prepare_participant, run_scenarios,
    ExperimentSettings, LossParams, PreparedParticipant, Protocol, RunConfig, SeedData,
};
use weakanno::synth::{
    embedding_suite, participant_name, sensor_suite, write_dataset, EmbeddingSuiteConfig, SensorSuiteConfig,
    SynthParticipant,
};
use weakanno::transfer::Scenario;
use weakanno::weaktrain::{softmax, LossKind, LossSpec, TrainConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian_mixture(rng: &mut ChaCha8Rng, t: usize, e: usize, c: usize, spread: f64) -> Array2<f64> {
    let centres: Vec<Vec<f64>> = (0..c)
        .map(|_| (0..e).map(|_| spread * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let scales: Vec<f64> = (0..c).map(|_| rng.random_range(0.5..1.5)).collect();
    Array2::from_shape_fn((t, e), |(i, j)| {
        let k = i % c;
        centres[k][j] + scales[k] * rng.sample::<f64, _>(StandardNormal)
    })
}

fn em_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_drop = 0.0f64;
    let mut worst_closed = 0.0f64;
    let mut iterations = 0;
    for instance in 0..20 {
        let e = rng.random_range(1..=8);
        let c = rng.random_range(1..=4);
        let t = rng.random_range(60..=200);
        let data = gaussian_mixture(&mut rng, t, e, c, 3.0);
        let cfg = GmmConfig {
            tol: 1e-12,
            ..GmmConfig::new(c, instance)
        };
        let model = fit(data.view(), &cfg).map_err(|e| e.to_string())?;
        let trace = model.log_likelihood_trace();
        iterations += trace.len();
        let after_reseed: Vec<usize> = model.reseeds().iter().map(|r| r.iteration + 1).collect();
        for i in 1..trace.len() {
            if after_reseed.contains(&i) {
                continue;
            }
            let drop = (trace[i - 1] - trace[i]) / trace[i - 1].abs();
            worst_drop = worst_drop.max(drop);
            if drop > 1e-8 {
                return Err(format!(
                    "instance {instance}: log-likelihood fell from {} to {} at iteration {i}",
                    trace[i - 1],
                    trace[i]
                ));
            }
        }

        let single = GmmConfig::new(1, instance);
        let m1 = fit(data.view(), &single).map_err(|e| e.to_string())?;
        let mut mean = vec![0.0; e];
        for row in data.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x / t as f64;
            }
        }
        for j in 0..e {
            worst_closed = worst_closed.max((m1.means()[[0, j]] - mean[j]).abs());
            for k in 0..e {
                let mut s = 0.0;
                for row in data.rows() {
                    s += (row[j] - mean[j]) * (row[k] - mean[k]);
                }
                let expected = s / t as f64 + if j == k { single.reg } else { 0.0 };
                worst_closed = worst_closed.max((m1.covariance(0)[[j, k]] - expected).abs());
            }
        }
    }
    check(
        worst_closed <= 1e-10,
        format!("20 instances, {iterations} EM iterations, worst relative drop {worst_drop:.1e}, C=1 max deviation {worst_closed:.1e}"),
    )
}

fn random_spd(rng: &mut ChaCha8Rng, e: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(e, e, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() / e as f64 + DMatrix::identity(e, e) * 0.1
}

fn dense_log_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let e = x.len() as f64;
    let inv = cov.clone().try_inverse().expect("spd");
    let d = x - mean;
    let maha = (d.transpose() * inv * &d)[(0, 0)];
    -0.5 * (e * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + maha)
}

fn to_ndarray(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn density_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let e = if i == 0 { 64 } else { rng.random_range(1..=64) };
        let cov = random_spd(&mut rng, e);
        let mean = DVector::from_fn(e, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = DVector::from_fn(e, |_, _| rng.sample::<f64, _>(StandardNormal));
        let expected = dense_log_pdf(&x, &mean, &cov);
        let model = GmmModel::from_parts(vec![1.0], to_ndarray(&DMatrix::from_row_slice(1, e, mean.as_slice())), vec![to_ndarray(&cov)])
            .map_err(|e| e.to_string())?;
        let chol = model.cholesky(0);
        let got = log_pdf(
            Array1::from(x.as_slice().to_vec()).view(),
            model.means().row(0),
            chol,
            log_det_from_cholesky(chol),
        )
        .map_err(|e| e.to_string())?;
        worst = worst.max((got - expected).abs() / expected.abs().max(1.0));
    }
    check(worst <= 1e-8, format!("100 SPD matrices up to E=64, worst relative error {worst:.1e}"))
}

struct BruteForce {
    cluster: Vec<usize>,
    centroids: BTreeMap<usize, usize>,
    labels: Vec<usize>,
    retained: Vec<bool>,
}

fn brute_force(model: &GmmModel, data: &Array2<f64>, emb: &EmbeddingSet, gt: &[usize], threshold: f64) -> BruteForce {
    let (t, e) = data.dim();
    let c = model.num_components();
    let comps: Vec<(DVector<f64>, DMatrix<f64>)> = (0..c)
        .map(|k| {
            (
                DVector::from_fn(e, |j, _| model.means()[[k, j]]),
                DMatrix::from_fn(e, e, |a, b| model.covariance(k)[[a, b]]),
            )
        })
        .collect();
    let mut cluster = Vec::with_capacity(t);
    let mut density = Vec::with_capacity(t);
    for i in 0..t {
        let x = DVector::from_fn(e, |j, _| data[[i, j]]);
        let logs: Vec<f64> = comps.iter().map(|(m, s)| dense_log_pdf(&x, m, s)).collect();
        let mut best = 0;
        for k in 1..c {
            if model.weights()[k].ln() + logs[k] > model.weights()[best].ln() + logs[best] {
                best = k;
            }
        }
        cluster.push(best);
        density.push(logs[best]);
    }
    let mut centroids = BTreeMap::new();
    for i in 0..t {
        let k = cluster[i];
        match centroids.get(&k) {
            Some(&j) if density[j] >= density[i] => {}
            _ => {
                centroids.insert(k, i);
            }
        }
    }
    let rows = emb.clips();
    let labels = cluster.iter().map(|k| gt[centroids[k]]).collect();
    let retained = (0..t)
        .map(|i| {
            let j = centroids[&cluster[i]];
            let d: f64 = (0..e).map(|a| (f64::from(rows[[i, a]]) - f64::from(rows[[j, a]])).powi(2)).sum::<f64>().sqrt();
            d <= threshold
        })
        .collect();
    BruteForce {
        cluster,
        centroids,
        labels,
        retained,
    }
}

fn propagation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut clips = 0;
    for instance in 0..20u64 {
        let e = rng.random_range(2..=6);
        let c = rng.random_range(2..=10);
        let t = rng.random_range(100..=500);
        let a = rng.random_range(2..=5);
        let raw = gaussian_mixture(&mut rng, t, e, c, 2.5);
        let emb = EmbeddingSet::new("p", raw.mapv(|v| v as f32), WindowingSpec::CLIPS.spans(t, 0.0), "x")
            .map_err(|e| e.to_string())?;
        let data = emb.to_f64();
        let gt: Vec<usize> = (0..t).map(|i| (i % c + rng.random_range(0..2)) % a).collect();
        let model = fit(data.view(), &GmmConfig::new(c, instance)).map_err(|e| e.to_string())?;
        let assignment = assign(&model, data.view()).map_err(|e| e.to_string())?;
        let centroids = find_centroids(&model, &assignment);
        let labels = annotate_oracle(&centroids, &gt).map_err(|e| e.to_string())?;
        let threshold = rng.random_range(0.5..4.0);
        let weak = propagate(&assignment, &labels, &emb, &centroids, Threshold::new(threshold).unwrap())
            .map_err(|e| e.to_string())?;
        let oracle = brute_force(&model, &data, &emb, &gt, threshold);

        if assignment.cluster_ids != oracle.cluster {
            return Err(format!("instance {instance}: assignments differ"));
        }
        if weak.centroid_clips != oracle.centroids {
            return Err(format!("instance {instance}: centroids {:?} vs {:?}", weak.centroid_clips, oracle.centroids));
        }
        let got_labels: Vec<usize> = weak.clips.iter().map(|w| w.label).collect();
        if got_labels != oracle.labels {
            return Err(format!("instance {instance}: propagated labels differ"));
        }
        let got_retained: Vec<bool> = weak.clips.iter().map(|w| w.retained).collect();
        if got_retained != oracle.retained {
            return Err(format!("instance {instance}: retained sets differ"));
        }
        clips += t;
    }
    Ok(format!("20 instances, {clips} clips: centroids, labels and retained sets identical"))
}

fn cluster_trend() -> Outcome {
    let suite = embedding_suite(&EmbeddingSuiteConfig::default()).map_err(|e| e.to_string())?;
    let clips: Vec<_> = suite.iter().map(SynthParticipant::clips).collect();
    let report = sweep_clusters(&clips, &[10, 30, 60], &[1, 2, 3], &SweepSettings::default()).map_err(|e| e.to_string())?;
    let acc: Vec<f64> = report.summary.iter().map(|s| s.accuracy_mean).collect();
    let max_budget = report.rows.iter().map(|r| r.budget as f64 / r.axis.parse::<f64>().unwrap()).fold(0.0, f64::max);
    let detail = format!(
        "mean accuracy C=10 {:.2}%, C=30 {:.2}%, C=60 {:.2}%",
        100.0 * acc[0],
        100.0 * acc[1],
        100.0 * acc[2]
    );
    check(acc.windows(2).all(|w| w[1] >= w[0]) && acc[2] >= 0.90 && max_budget <= 1.0, detail)
}

fn threshold_trend() -> Outcome {
    let suite = embedding_suite(&EmbeddingSuiteConfig::overlap_heavy()).map_err(|e| e.to_string())?;
    let clips: Vec<_> = suite.iter().map(SynthParticipant::clips).collect();
    let rules = [
        ThresholdRule::Absolute(Threshold::NONE),
        ThresholdRule::NoiseScaled(6.0),
        ThresholdRule::NoiseScaled(4.0),
    ];
    let seeds: Vec<u64> = (1..=20).collect();
    let report = sweep_thresholds(&clips, 20, &rules, &seeds, &SweepSettings::default()).map_err(|e| e.to_string())?;
    let acc: Vec<f64> = report.summary.iter().map(|s| s.accuracy_mean).collect();
    let cov: Vec<f64> = report.summary.iter().map(|s| s.coverage_mean).collect();
    let detail = format!(
        "accuracy {:.2}% -> {:.2}% -> {:.2}%, coverage {:.2}% -> {:.2}% -> {:.2}%",
        100.0 * acc[0],
        100.0 * acc[1],
        100.0 * acc[2],
        100.0 * cov[0],
        100.0 * cov[1],
        100.0 * cov[2]
    );
    check(
        acc.windows(2).all(|w| w[1] >= w[0] - 0.02) && cov.windows(2).all(|w| w[1] < w[0]),
        detail,
    )
}

fn loss_at(spec: &LossSpec, logits: &[f64], y: usize) -> f64 {
    spec.loss_and_grad(&softmax(logits), y).unwrap().0
}

fn loss_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_grad = 0.0f64;
    let mut worst_slope = 0.0f64;
    let mut bound_violations = 0;
    let mut gce_mismatch = 0.0f64;
    for _ in 0..1000 {
        let q = rng.random_range(0.05..=1.0);
        let tau = rng.random_range(1.0..50.0);
        let p: f64 = rng.random_range(1e-3..0.999);
        let k = rng.random_range(2..=8);
        let y = rng.random_range(0..k);
        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..3.0)).collect();
        let mut rest: Vec<f64> = (0..k - 1).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = rest.iter().sum();
        rest.iter_mut().for_each(|r| *r *= (1.0 - p) / total);
        let mut probs = rest;
        probs.insert(y, p);
        let logits: Vec<f64> = probs.iter().map(|v| v.ln()).collect();

        for kind in [LossKind::WeightedCe, LossKind::Gce, LossKind::Phgce] {
            let spec = LossSpec::new(kind, weights.clone()).with_q(q).with_tau(tau);
            let p0 = spec.pivot();
            let (_, grad) = spec.loss_and_grad(&softmax(&logits), y).unwrap();
            let mut h = 1e-6;
            while kind == LossKind::Phgce && (p - p0).abs() < 4.0 * h && h > 1e-12 {
                h *= 0.01;
            }
            let numeric: Vec<f64> = (0..k)
                .map(|j| {
                    let (mut up, mut down) = (logits.clone(), logits.clone());
                    up[j] += h;
                    down[j] -= h;
                    (loss_at(&spec, &up, y) - loss_at(&spec, &down, y)) / (2.0 * h)
                })
                .collect();
            let diff: f64 = grad.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm = grad.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
            worst_grad = worst_grad.max(diff / norm.max(1e-12));

            let (_, slope) = spec.value_and_slope(p);
            let fd = (spec.value_and_slope(p + h).0 - spec.value_and_slope(p - h).0) / (2.0 * h);
            worst_slope = worst_slope.max((slope - fd).abs() / slope.abs().max(fd.abs()).max(1e-12));

            if kind == LossKind::Phgce {
                if weights[y] * slope.abs() > weights[y] * tau * (1.0 + 1e-12) {
                    bound_violations += 1;
                }
                let grad_norm = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
                if grad_norm > weights[y] * tau * (1.0 + 1e-12) {
                    bound_violations += 1;
                }
                if p >= p0 {
                    let gce = LossSpec::new(LossKind::Gce, weights.clone()).with_q(q);
                    let (a, b) = (spec.value_and_slope(p), gce.value_and_slope(p));
                    gce_mismatch = gce_mismatch.max((a.0 - b.0).abs()).max((a.1 - b.1).abs());
                }
            }
        }
    }
    check(
        worst_grad <= 1e-4 && worst_slope <= 1e-4 && bound_violations == 0 && gce_mismatch == 0.0,
        format!(
            "1000 samples x 3 losses: worst logit-gradient error {worst_grad:.1e}, worst slope error {worst_slope:.1e}, \
             {bound_violations} bound violations, PHGCE-GCE gap above pivot {gce_mismatch:.1e}"
        ),
    )
}

const SCENARIO_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const SCENARIO_C: usize = 20;

struct SensorRuns {
    suite: Vec<SynthParticipant>,
    /// Per seed: oracle weak labels of every participant.
    weak: Vec<Vec<weakanno::annotate::WeakLabelSet>>,
    weak_accuracy: f64,
}

fn sensor_runs() -> &'static SensorRuns {
    static RUNS: OnceLock<SensorRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let suite = sensor_suite(&SensorSuiteConfig::default()).expect("sensor suite");
        let mut acc = Vec::new();
        let weak = SCENARIO_SEEDS
            .iter()
            .map(|&seed| {
                suite
                    .iter()
                    .map(|p| {
                        let run = oracle_weak_labels(&p.clips(), &GmmConfig::new(SCENARIO_C, seed), Threshold::NONE).unwrap();
                        acc.push(labelling_accuracy(&run.weak, &p.ground_truth).unwrap().accuracy);
                        run.weak
                    })
                    .collect()
            })
            .collect();
        let weak_accuracy = acc.iter().sum::<f64>() / acc.len() as f64;
        SensorRuns {
            suite,
            weak,
            weak_accuracy,
        }
    })
}

fn scenario_accuracy(noise: f64, names: &[&str]) -> Result<BTreeMap<String, f64>, String> {
    let runs = sensor_runs();
    let a = runs.suite[0].track.num_labels();
    let prepared: Vec<Vec<PreparedParticipant>> = runs
        .weak
        .iter()
        .zip(SCENARIO_SEEDS)
        .map(|(per, seed)| {
            runs.suite
                .iter()
                .zip(per)
                .enumerate()
                .map(|(i, (p, weak))| {
                    let weak = if noise > 0.0 { corrupt_labels(weak, noise, a, seed * 100 + i as u64) } else { weak.clone() };
                    prepare_participant(
                        &p.track,
                        p.sensors.as_ref().unwrap(),
                        &weak,
                        p.embeddings.spans(),
                        &[Threshold::NONE],
                        WindowingSpec::SENSOR,
                    )
                })
                .collect::<weakanno::error::Result<Vec<_>>>()
        })
        .collect::<weakanno::error::Result<_>>()
        .map_err(|e| e.to_string())?;
    let seeds: Vec<SeedData<'_>> = prepared
        .iter()
        .zip(SCENARIO_SEEDS)
        .map(|(participants, seed)| SeedData { seed, participants })
        .collect();
    let scenarios: Vec<Scenario> = names.iter().map(|s| s.parse().unwrap()).collect();
    let settings = ExperimentSettings {
        train: TrainConfig::default(),
        loss: LossParams::default(),
        protocol: Protocol::LeaveOneOut,
        clusters: SCENARIO_C,
    };
    let (report, _) = run_scenarios(&seeds, &scenarios, &settings).map_err(|e| e.to_string())?;
    Ok(report.summary.iter().map(|s| (s.scenario.clone(), s.accuracy_mean)).collect())
}

fn scenario_ordering() -> Outcome {
    let acc = scenario_accuracy(0.0, &["fully-supervised", "few-shot-ce", "random-ce", "weak-ce"])?;
    let (full, few, random, weak) = (acc["fully-supervised"], acc["few-shot-ce"], acc["random-ce"], acc["weak-ce"]);
    let weak_labels = sensor_runs().weak_accuracy;
    check(
        weak > few && weak > random && full - weak <= 0.05,
        format!(
            "weak-label accuracy {:.2}%; test accuracy fully {:.2}, few-shot {:.2}, random {:.2}, weak-ce {:.2}",
            100.0 * weak_labels,
            100.0 * full,
            100.0 * few,
            100.0 * random,
            100.0 * weak
        ),
    )
}

fn noise_robustness() -> Outcome {
    let acc = scenario_accuracy(0.3, &["weak-ce", "weak-phgce"])?;
    let (ce, phgce) = (acc["weak-ce"], acc["weak-phgce"]);
    check(
        phgce >= ce - 0.01,
        format!("30% flipped weak labels: weak-ce {:.2}, weak-phgce {:.2}", 100.0 * ce, 100.0 * phgce),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn determinism_and_budget() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut suite = SensorSuiteConfig::default().with_seed(3);
    suite.participants = 3;
    suite.duration_s = 300.0;
    write_dataset(&tmp.path().join("data"), &sensor_suite(&suite).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::default();
    cfg.dataset.root = tmp.path().join("data");
    cfg.dataset.participants = (0..3).map(participant_name).collect();
    cfg.run.seeds = vec![1, 2];
    cfg.clustering.components = 12;
    cfg.training.optimizer.epochs = 3;
    cfg.report.cluster_sweep = vec![6];

    let run_all = |cfg: &RunConfig| -> weakanno::error::Result<()> {
        cmd_cluster(cfg)?;
        cmd_annotate_oracle(cfg)?;
        cmd_train(cfg)?;
        cmd_report(cfg)?;
        Ok(())
    };
    cfg.run.output = tmp.path().join("a");
    run_all(&cfg).map_err(|e| e.to_string())?;
    let first = snapshot(&cfg.run.output);
    run_all(&cfg).map_err(|e| e.to_string())?;
    let again = snapshot(&cfg.run.output);
    let mut parallel = cfg.clone();
    parallel.run.jobs = 2;
    parallel.run.output = tmp.path().join("b");
    run_all(&parallel).map_err(|e| e.to_string())?;
    let other = snapshot(&parallel.run.output);

    if first != again {
        let differing: Vec<_> = first.keys().filter(|k| again.get(*k) != first.get(*k)).collect();
        return Err(format!("rerun changed {differing:?}"));
    }
    let data_files: Vec<&String> = first.keys().filter(|k| !k.ends_with("manifest.json")).collect();
    if let Some(k) = data_files.iter().find(|k| other.get(**k) != first.get(**k)) {
        return Err(format!("{k} differs between a serial run and a two-job run in another directory"));
    }

    let mut max_budget = 0;
    for p in &cfg.dataset.participants {
        for &seed in &cfg.run.seeds {
            let weak = weakanno::pipeline::load_weak_labels(&cfg, p, seed, Threshold::NONE).map_err(|e| e.to_string())?;
            max_budget = max_budget.max(weak.annotation_budget);
        }
    }
    for weak in sensor_runs().weak.iter().flatten() {
        if weak.annotation_budget > SCENARIO_C {
            return Err(format!("budget {} exceeds C={SCENARIO_C}", weak.annotation_budget));
        }
    }
    check(
        max_budget <= cfg.clustering.components,
        format!(
            "{} files byte-identical across reruns and job counts; max budget {max_budget} <= C={}",
            first.len(),
            cfg.clustering.components
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("EM correctness", Duration::from_secs(10), em_correctness),
        ("density oracle", Duration::from_secs(5), density_oracle),
        ("centroid/propagation/threshold oracle", Duration::from_secs(10), propagation_oracle),
        ("labelling accuracy rises with C", Duration::from_secs(120), cluster_trend),
        ("thresholding trades coverage for accuracy", Duration::from_secs(180), threshold_trend),
        ("loss correctness", Duration::from_secs(5), loss_correctness),
        ("scenario ordering", Duration::from_secs(300 * SCENARIO_SEEDS.len() as u64), scenario_ordering),
        ("noise robustness", Duration::from_secs(300), noise_robustness),
        ("determinism and budget", Duration::from_secs(120), determinism_and_budget),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; took {elapsed:.1?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{elapsed:.1?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{elapsed:.1?}]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

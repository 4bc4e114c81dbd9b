//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! The MNIST criteria (6 and 7) read the IDX files from `DEEPSZ_DATA_DIR`
//! or `<workspace>/data/mnist`. Missing data is a failure unless
//! `DEEPSZ_SKIP_MNIST=1` is set, in which case both are reported as SKIP.

use std::cmp::Ordering;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use deepsz::backends;
use deepsz::commands::{self, Artifacts};
use deepsz::config::{DataPaths, PipelineConfig, DATA_DIR_ENV};
use deepsz::container::{decode_model, encode_model};
use deepsz_core::assessor::AssessmentRecord;
use deepsz_core::codec::{compress, decompress_bytes, entropy_decode, entropy_encode, HuffmanTable, DEFAULT_QUANT_BINS};
use deepsz_core::lossless::{decode_lossless, select_lossless, LosslessBackend};
use deepsz_core::netmodel::{count_correct, Activation, Matrix, Network, ShadowLayer, ShadowNet};
use deepsz_core::planner::{optimize_expected_accuracy, optimize_expected_ratio, predict_loss, BoundPlan, PlanError};
use deepsz_core::pruner::{from_sparse, to_sparse, MAX_GAP};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const CODEC_ARRAYS: usize = 1000;
const CODEC_MAX_LEN: usize = 50_000;
const CODEC_BOUNDS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];
const FUZZ_INPUTS: usize = 1000;
const SPARSE_MATRICES: usize = 1000;
const PLANNER_INSTANCES: usize = 200;
const GRADCHECK_NETS: u64 = 20;
const GRADCHECK_STEP: f64 = 1e-3;
const GRADCHECK_TOL: f64 = 1e-3;
const BASELINE_MIN: f64 = 97.5;
const PRUNE_RECOVERY: f64 = 0.2;
const SPARSE_RATIO_MIN: f64 = 9.0;
const PIPELINE_RATIO_MIN: f64 = 30.0;
const PIPELINE_LOSS_MAX: f64 = 0.3;
const ADDITIVITY_PLANS: usize = 10;
const ADDITIVITY_PREDICTED_MAX: f64 = 2.0;
const ADDITIVITY_TOL: f64 = 0.3;
const HALVING_TARGET: f64 = 4.0;
const HALVING_TOL: f64 = 0.2;

type Outcome = Result<String, String>;

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let t = start.elapsed();
    if t <= limit {
        Ok(t)
    } else {
        Err(format!("took {:.1}s, limit {}s", t.as_secs_f64(), limit.as_secs()))
    }
}

// ---------------------------------------------------------------- 1

fn random_array(rng: &mut ChaCha8Rng, i: usize) -> (Vec<f32>, &'static str) {
    let len = match i {
        0 => 0,
        1 => 1,
        2 => CODEC_MAX_LEN,
        _ => rng.random_range(0..=CODEC_MAX_LEN),
    };
    match i % 3 {
        0 => {
            let sigma = 10f32.powf(rng.random_range(-3.0..1.0));
            let n = Normal::new(0.0f32, sigma).unwrap();
            ((0..len).map(|_| n.sample(rng)).collect(), "gaussian")
        }
        1 => {
            let a = 10f32.powf(rng.random_range(-3.0..2.0));
            ((0..len).map(|_| rng.random_range(-a..=a)).collect(), "uniform")
        }
        _ => {
            // sign flips of varying magnitude defeat the predictor; large
            // values make f32 rounding of reconstructions matter
            let a = 10f32.powf(rng.random_range(-2.0..4.0));
            let v = (0..len)
                .map(|k| {
                    let m = if k % 7 == 3 { a * 1e3 } else { a };
                    if k % 2 == 0 { m } else { -m * rng.random_range(0.5..1.0) }
                })
                .collect();
            (v, "alternating")
        }
    }
}

fn criterion_codec_bound() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let all = backends::all();
    let mut values_checked = 0usize;
    for i in 0..CODEC_ARRAYS {
        let (values, kind) = random_array(&mut rng, i);
        for &eb in &CODEC_BOUNDS {
            // the lossless pass does not touch values; exercise it on a sample
            let use_backends: &[&dyn LosslessBackend] = if i % 50 == 0 { &all } else { &[] };
            let block = compress(&values, eb, DEFAULT_QUANT_BINS, use_backends).map_err(|e| format!("{kind} #{i}: {e}"))?;
            let out = decompress_bytes(&block.to_bytes(), &all).map_err(|e| format!("{kind} #{i}: {e}"))?;
            if out.len() != values.len() {
                return Err(format!("{kind} #{i}: length {} != {}", out.len(), values.len()));
            }
            for (k, (a, b)) in values.iter().zip(&out).enumerate() {
                let err = (f64::from(*a) - f64::from(*b)).abs();
                if err > eb {
                    return Err(format!("{kind} #{i} eb {eb:e} position {k}: error {err:e}"));
                }
            }
            values_checked += values.len();
        }
    }
    let t = within(Duration::from_secs(120), start)?;
    Ok(format!("{values_checked} values, 0 violations, {:.1}s", t.as_secs_f64()))
}

// ---------------------------------------------------------------- 2

fn fuzz_codes(rng: &mut ChaCha8Rng, i: usize) -> Vec<u32> {
    let len = if i == 0 { 0 } else { rng.random_range(1..20_000) };
    let alphabet = match i % 4 {
        0 => 1,
        1 => rng.random_range(2..16),
        2 => rng.random_range(16..2048),
        _ => 65_536,
    };
    let centre = rng.random_range(0..alphabet);
    let spread = rng.random_range(0.5..200.0);
    let n = Normal::new(f64::from(centre), spread).unwrap();
    (0..len)
        .map(|_| if i.is_multiple_of(2) { n.sample(rng).round().clamp(0.0, f64::from(alphabet - 1)) as u32 } else { rng.random_range(0..alphabet) })
        .collect()
}

fn fuzz_bytes(rng: &mut ChaCha8Rng, i: usize) -> Vec<u8> {
    let len = if i == 0 { 0 } else { rng.random_range(1..20_000) };
    match i % 3 {
        0 => (0..len).map(|_| rng.random()).collect(),
        1 => {
            let mut v = Vec::with_capacity(len);
            while v.len() < len {
                let b: u8 = rng.random();
                let run = rng.random_range(1..300);
                v.extend(std::iter::repeat_n(b, run.min(len - v.len())));
            }
            v
        }
        _ => {
            let word: Vec<u8> = (0..rng.random_range(1..40)).map(|_| rng.random_range(b'a'..=b'e')).collect();
            word.iter().copied().cycle().take(len).map(|b| if rng.random_bool(0.02) { !b } else { b }).collect()
        }
    }
}

fn criterion_round_trips() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for i in 0..FUZZ_INPUTS {
        let codes = fuzz_codes(&mut rng, i);
        let (table, payload, bits) = entropy_encode(&codes);
        let table = HuffmanTable::from_bytes(&table.to_bytes()).map_err(|e| format!("huffman table #{i}: {e}"))?;
        let back = entropy_decode(&table, &payload, bits, codes.len()).map_err(|e| format!("huffman #{i}: {e}"))?;
        if back != codes {
            return Err(format!("huffman #{i}: round trip differs"));
        }
    }
    let all = backends::all();
    for backend in all {
        let mut rng = ChaCha8Rng::seed_from_u64(203);
        for i in 0..FUZZ_INPUTS {
            let bytes = fuzz_bytes(&mut rng, i);
            let enc = backend.encode(&bytes).map_err(|e| format!("{} #{i}: {e}", backend.name()))?;
            let dec = backend.decode(&enc).map_err(|e| format!("{} #{i}: {e}", backend.name()))?;
            if dec != bytes {
                return Err(format!("{} #{i}: round trip differs", backend.name()));
            }
            if i % 10 == 0 {
                let (tag, sel) = select_lossless(&bytes, &all);
                if sel.len() > bytes.len() || decode_lossless(tag, &sel, &all).ok().as_deref() != Some(&bytes[..]) {
                    return Err(format!("selection #{i}: tag {tag} does not round-trip"));
                }
            }
        }
    }
    let t = within(Duration::from_secs(60), start)?;
    let names: Vec<&str> = all.iter().map(|b| b.name()).collect();
    Ok(format!("huffman + {} x {FUZZ_INPUTS} inputs exact, {:.1}s", names.join("/"), t.as_secs_f64()))
}

// ---------------------------------------------------------------- 3

fn criterion_sparse() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut with_fillers = 0;
    for i in 0..SPARSE_MATRICES {
        let rows = rng.random_range(1..40);
        let cols = rng.random_range(1..1500);
        // include empty, very sparse (long gaps) and dense matrices
        let density = match i % 4 {
            0 => 0.0005,
            1 => rng.random_range(0.001..0.01),
            2 => rng.random_range(0.01..0.3),
            _ => if i % 8 == 3 { 0.0 } else { 1.0 },
        };
        let data: Vec<f32> = (0..rows * cols)
            .map(|_| if rng.random_bool(density) { rng.random_range(0.01f32..1.0) * if rng.random() { 1.0 } else { -1.0 } } else { 0.0 })
            .collect();
        let m = Matrix::from_vec(rows, cols, data).unwrap();
        let s = to_sparse(&m);
        if from_sparse(&s).map_err(|e| format!("matrix #{i}: {e}"))? != m {
            return Err(format!("matrix #{i}: round trip differs"));
        }
        // filler oracle: one per full 255-step inside each gap
        let mut prev = -1i64;
        let mut nnz = 0;
        let mut fillers = 0;
        for (p, v) in m.as_slice().iter().enumerate() {
            if *v != 0.0 {
                fillers += (p as i64 - prev - 1) as usize / MAX_GAP;
                nnz += 1;
                prev = p as i64;
            }
        }
        if s.nnz_true != nnz || s.filler_count() != fillers || s.len() != nnz + fillers {
            return Err(format!("matrix #{i}: {} stored ({} fillers), expected {nnz} + {fillers}", s.len(), s.filler_count()));
        }
        if s.payload_bytes() * 8 != 40 * s.len() {
            return Err(format!("matrix #{i}: {} bytes for {} entries", s.payload_bytes(), s.len()));
        }
        with_fillers += usize::from(fillers > 0);
    }
    if with_fillers == 0 {
        return Err("no matrix produced a gap over 255".into());
    }
    let t = within(Duration::from_secs(60), start)?;
    Ok(format!("{SPARSE_MATRICES} matrices exact, {with_fillers} with fillers, {:.1}s", t.as_secs_f64()))
}

// ---------------------------------------------------------------- 4

type Table = Vec<Vec<AssessmentRecord>>;

fn oracle_bucket(delta: f64, total: f64, buckets: usize) -> usize {
    if delta <= 0.0 {
        return 0;
    }
    (0..)
        .find(|&k| {
            let edge = if k == buckets { total } else { total * k as f64 / buckets as f64 };
            edge >= delta
        })
        .unwrap()
}

fn combos(table: &Table) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for recs in table {
        out = out.into_iter().flat_map(|p: Vec<usize>| (0..recs.len()).map(move |c| [p.clone(), vec![c]].concat())).collect();
    }
    out
}

fn lex(table: &Table, a: &[usize], b: &[usize]) -> Ordering {
    a.iter().zip(b).enumerate().map(|(l, (&x, &y))| table[l][x].eb.total_cmp(&table[l][y].eb)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

fn size_of(table: &Table, p: &[usize]) -> usize {
    p.iter().enumerate().map(|(l, &c)| table[l][c].sigma).sum()
}

fn ebs_of(table: &Table, p: &[usize]) -> Vec<f64> {
    p.iter().enumerate().map(|(l, &c)| table[l][c].eb).collect()
}

fn brute_accuracy(table: &Table, eps: f64) -> Option<Vec<f64>> {
    combos(table)
        .into_iter()
        .map(|p| (size_of(table, &p), p.iter().enumerate().map(|(l, &c)| oracle_bucket(table[l][c].delta, eps, 100)).sum::<usize>(), p))
        .filter(|c| c.1 <= 100)
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then_with(|| lex(table, &a.2, &b.2)))
        .map(|(_, _, p)| ebs_of(table, &p))
}

fn brute_ratio(table: &Table, budget: usize) -> Option<Vec<f64>> {
    let total: f64 = table.iter().map(|r| r.iter().map(|x| x.delta.max(0.0)).fold(0.0, f64::max)).sum();
    combos(table)
        .into_iter()
        .filter(|p| size_of(table, p) <= budget)
        .map(|p| (p.iter().enumerate().map(|(l, &c)| oracle_bucket(table[l][c].delta, total, 1000)).sum::<usize>(), size_of(table, &p), p))
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then_with(|| lex(table, &a.2, &b.2)))
        .map(|(_, _, p)| ebs_of(table, &p))
}

fn random_table(rng: &mut ChaCha8Rng) -> Table {
    (0..rng.random_range(1..=5))
        .map(|l| {
            (0..rng.random_range(1..=8))
                .map(|c| {
                    let delta: f64 = rng.random_range(-0.05..0.3);
                    let sigma: usize = rng.random_range(1..60);
                    AssessmentRecord {
                        layer_id: l,
                        eb: (c + 1) as f64 * 1e-3,
                        // bucket edges and repeated sizes exercise the tie-breaks
                        delta: if c % 3 == 0 { (delta * 50.0).round() / 500.0 } else { delta },
                        sigma: if c % 2 == 0 { sigma } else { sigma / 10 * 10 + 1 },
                    }
                })
                .collect()
        })
        .collect()
}

fn criterion_planner() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut infeasible = 0;
    for i in 0..PLANNER_INSTANCES {
        let t = random_table(&mut rng);
        let eps = if i % 5 == 0 { 0.2 } else { rng.random_range(0.01..0.6) };
        let want = brute_accuracy(&t, eps);
        match optimize_expected_accuracy(&t, eps) {
            Ok(plan) => {
                if Some(&plan.ebs) != want.as_ref() {
                    return Err(format!("accuracy instance {i}: {:?} vs oracle {want:?}", plan.ebs));
                }
                let spent: f64 =
                    plan.ebs.iter().enumerate().map(|(l, eb)| t[l].iter().find(|r| r.eb == *eb).unwrap().delta.max(0.0)).sum();
                if spent > eps * (1.0 + 1e-12) {
                    return Err(format!("accuracy instance {i}: spent {spent} of {eps}"));
                }
            }
            Err(PlanError::InfeasibleLoss { .. }) if want.is_none() => infeasible += 1,
            Err(e) => return Err(format!("accuracy instance {i}: {e} (oracle {want:?})")),
        }

        let min: usize = t.iter().map(|r| r.iter().map(|x| x.sigma).min().unwrap()).sum();
        let max: usize = t.iter().map(|r| r.iter().map(|x| x.sigma).max().unwrap()).sum();
        let budget = min + ((max - min) as f64 * rng.random_range(0.0..=1.0)) as usize;
        let plan = optimize_expected_ratio(&t, budget).map_err(|e| format!("ratio instance {i}: {e}"))?;
        let want = brute_ratio(&t, budget);
        if Some(&plan.ebs) != want.as_ref() {
            return Err(format!("ratio instance {i}: {:?} vs oracle {want:?}", plan.ebs));
        }
        if plan.predicted_total_size > budget {
            return Err(format!("ratio instance {i}: size {} over budget {budget}", plan.predicted_total_size));
        }
        if min > 0 && optimize_expected_ratio(&t, min - 1).is_ok() {
            return Err(format!("ratio instance {i}: accepted a budget below the minimum size"));
        }
    }
    let t = within(Duration::from_secs(60), start)?;
    Ok(format!("{PLANNER_INSTANCES} instances x 2 modes match enumeration ({infeasible} infeasible), {:.1}s", t.as_secs_f64()))
}

// ---------------------------------------------------------------- 5

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 { diff } else { diff / scale }
}

fn criterion_gradcheck() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..GRADCHECK_NETS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let mut dims = vec![rng.random_range(2..6)];
        for _ in 0..rng.random_range(1..=3) {
            dims.push(rng.random_range(2..6));
        }
        let mut net = ShadowNet::from_network(&Network::mlp(&dims, seed).unwrap());
        for l in &mut net.layers {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let rows = 4;
        let x: Vec<f64> = (0..rows * dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<u8> = (0..rows).map(|_| rng.random_range(0..*dims.last().unwrap() as u8)).collect();
        let (_, grads) = net.loss_and_gradients(&x, &labels);
        for l in 0..net.layers.len() {
            for (bias, analytic) in [(false, &grads.weights[l]), (true, &grads.bias[l])] {
                let n = if bias { net.layers[l].bias.len() } else { net.layers[l].weights.len() };
                let numeric: Vec<f64> = (0..n)
                    .map(|i| {
                        let shifted = |h: f64| {
                            let mut p = net.clone();
                            let l = &mut p.layers[l];
                            if bias { l.bias[i] += h } else { l.weights[i] += h }
                            p.loss(&x, &labels)
                        };
                        let (up, down) = (shifted(GRADCHECK_STEP), shifted(-GRADCHECK_STEP));
                        (up - down) / (2.0 * GRADCHECK_STEP)
                    })
                    .collect();
                let e = rel_err(analytic, &numeric);
                worst = worst.max(e);
                if e > GRADCHECK_TOL {
                    return Err(format!("net {seed} layer {l}{}: relative error {e:e}", if bias { " bias" } else { "" }));
                }
            }
        }
    }
    let t = within(Duration::from_secs(60), start)?;
    Ok(format!("{GRADCHECK_NETS} nets, worst relative error {worst:.2e}, {:.1}s", t.as_secs_f64()))
}

// ---------------------------------------------------------------- 6 and 7

fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

struct MnistRun {
    summary: commands::PipelineSummary,
    art: Artifacts,
    cfg: PipelineConfig,
    elapsed: Duration,
    _dir: tempfile::TempDir,
}

fn run_mnist() -> Result<MnistRun, String> {
    let dir = data_dir();
    let mut cfg = PipelineConfig::with_env_defaults();
    cfg.data = DataPaths::in_dir(&dir);
    for p in [&cfg.data.train_images, &cfg.data.train_labels, &cfg.data.test_images, &cfg.data.test_labels] {
        if !p.is_file() {
            return Err(format!("MNIST file {} not found (set {DATA_DIR_ENV})", p.display()));
        }
    }
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    cfg.out_dir = tmp.path().to_path_buf();
    println!("    running the MNIST pipeline (a few minutes)...");
    let start = Instant::now();
    let summary = commands::cmd_pipeline(&cfg, 1, &mut std::io::sink()).map_err(|e| e.to_string())?;
    Ok(MnistRun { summary, art: Artifacts::new(tmp.path()), cfg, elapsed: start.elapsed(), _dir: tmp })
}

fn criterion_end_to_end(run: &MnistRun) -> Outcome {
    let s = &run.summary;
    let detail = format!(
        "baseline {:.2}%, pruned {:.2}%, sparse {:.2}x, plan {:?}, ratio {:.2}x, decoded {:.2}% (loss {:.2} vs baseline, {:.2} vs pruned), {:.0}s",
        s.baseline_accuracy,
        s.pruned_accuracy,
        s.prune.sparse_ratio(),
        s.plan.ebs,
        s.encode.raw_ratio(),
        s.decoded_accuracy,
        s.measured_loss(),
        s.pruned_accuracy - s.decoded_accuracy,
        run.elapsed.as_secs_f64()
    );
    let mut failed = vec![];
    if s.baseline_accuracy < BASELINE_MIN {
        failed.push("baseline");
    }
    if s.baseline_accuracy - s.pruned_accuracy > PRUNE_RECOVERY {
        failed.push("prune recovery");
    }
    if s.prune.sparse_ratio() < SPARSE_RATIO_MIN {
        failed.push("sparse ratio");
    }
    if s.encode.raw_ratio() < PIPELINE_RATIO_MIN {
        failed.push("pipeline ratio");
    }
    if s.measured_loss() > PIPELINE_LOSS_MAX {
        failed.push("accuracy loss");
    }
    if run.elapsed > Duration::from_secs(30 * 60) {
        failed.push("runtime");
    }
    if failed.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}: {detail}", failed.join(", ")))
    }
}

fn criterion_additivity(run: &MnistRun) -> Outcome {
    let net = commands::load_model(&run.art.pruned()).map_err(|e| e.to_string())?;
    let test = commands::load_test_set(&run.cfg).map_err(|e| e.to_string())?;
    let sparse = commands::sparse_layers(&net);
    let table = &run.summary.table;
    let base = count_correct(&net, &test).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut seen = vec![];
    let mut worst = 0.0f64;
    let mut attempts = 0;
    while seen.len() < ADDITIVITY_PLANS {
        attempts += 1;
        if attempts > 10_000 {
            return Err(format!("only {} distinct plans under {ADDITIVITY_PREDICTED_MAX} points", seen.len()));
        }
        let ebs: Vec<f64> = table.iter().map(|recs| recs.choose(&mut rng).unwrap().eb).collect();
        let candidate = BoundPlan { ebs, predicted_total_size: 0, predicted_loss: 0.0 };
        let predicted = predict_loss(&candidate, table).map_err(|e| e.to_string())?.loss;
        if predicted >= ADDITIVITY_PREDICTED_MAX || seen.contains(&candidate.ebs) {
            continue;
        }
        let model = encode_model(&net, &sparse, &candidate, run.cfg.assess.quant_bins).map_err(|e| e.to_string())?;
        let decoded = decode_model(&model.bytes).map_err(|e| e.to_string())?;
        let correct = count_correct(&decoded.network, &test).map_err(|e| e.to_string())?;
        let joint = 100.0 * (base as f64 - correct as f64) / test.len() as f64;
        let gap = (joint - predicted).abs();
        worst = worst.max(gap);
        if gap > ADDITIVITY_TOL {
            return Err(format!("plan {:?}: joint {joint:.2} vs sum {predicted:.2}", candidate.ebs));
        }
        seen.push(candidate.ebs);
    }
    Ok(format!("{ADDITIVITY_PLANS} plans, worst |joint - sum| {worst:.2} points"))
}

// ---------------------------------------------------------------- 8

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn residual(net: &ShadowNet, x: &[f64], rows: usize, d: [&[f64]; 2], scale: f64) -> f64 {
    let with = |use1: bool, use2: bool| {
        let mut n = net.clone();
        for (l, on) in [use1, use2].into_iter().enumerate() {
            if on {
                n.layers[l].weights.iter_mut().zip(d[l]).for_each(|(w, e)| *w += scale * e);
            }
        }
        n.forward(x, rows)
    };
    let (t, t1, t2, tj) = (with(false, false), with(true, false), with(false, true), with(true, true));
    inf_norm(&(0..t.len()).map(|i| tj[i] - t1[i] - t2[i] + t[i]).collect::<Vec<_>>())
}

fn criterion_independence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (n0, n1, n2, rows) = (12, 8, 5, 6);
    // positive weights, biases and inputs keep every ReLU active
    let mut layer = |o: usize, i: usize, activation| ShadowLayer {
        out_dim: o,
        in_dim: i,
        weights: (0..o * i).map(|_| rng.random_range(0.05..1.0)).collect(),
        bias: (0..o).map(|_| rng.random_range(0.1..0.5)).collect(),
        activation,
    };
    let net = ShadowNet { layers: vec![layer(n1, n0, Activation::Relu), layer(n2, n1, Activation::Identity)] };
    let x: Vec<f64> = (0..rows * n0).map(|_| rng.random_range(0.0..1.0)).collect();
    let d1: Vec<f64> = (0..n1 * n0).map(|_| rng.random_range(-1e-3..1e-3)).collect();
    let d2: Vec<f64> = (0..n2 * n1).map(|_| rng.random_range(-1e-3..1e-3)).collect();
    let full = residual(&net, &x, rows, [&d1, &d2], 1.0);
    let half = residual(&net, &x, rows, [&d1, &d2], 0.5);
    let ratio = full / half;
    let detail = format!("halving ratio {ratio:.3}, residual {full:.2e}");
    if (ratio - HALVING_TARGET).abs() <= HALVING_TOL * HALVING_TARGET {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: u32, name: &str, outcome: Outcome| match outcome {
        Ok(d) => println!("criterion {n} PASS  {name}: {d}"),
        Err(d) => {
            failures += 1;
            println!("criterion {n} FAIL  {name}: {d}");
        }
    };
    report(1, "codec error bound", criterion_codec_bound());
    report(2, "entropy and lossless round trips", criterion_round_trips());
    report(3, "sparse format round trip", criterion_sparse());
    report(4, "planner optimality", criterion_planner());
    report(5, "gradient check", criterion_gradcheck());
    let skip = std::env::var("DEEPSZ_SKIP_MNIST").is_ok_and(|v| v == "1");
    match run_mnist() {
        Ok(run) => {
            report(6, "MNIST end to end", criterion_end_to_end(&run));
            report(7, "additivity of per-layer loss", criterion_additivity(&run));
        }
        Err(e) if skip => {
            println!("criterion 6 SKIP  MNIST end to end: {e}");
            println!("criterion 7 SKIP  additivity of per-layer loss: {e}");
        }
        Err(e) => {
            report(6, "MNIST end to end", Err(e.clone()));
            report(7, "additivity of per-layer loss", Err(e));
        }
    }
    report(8, "independence of layer errors", criterion_independence());
    println!(
        "criterion 9 NOT REPRODUCIBLE  ImageNet-scale ratios, encode/decode timing comparisons and \
         baseline-method tables need AlexNet/VGG-16 and the original tooling; covered in part by criteria 1-8"
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}

//! Pipeline stages as library functions. Each reads and writes the
//! artifacts of one output directory (see [`Artifacts`]) and logs progress
//! to the given writer.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use deepsz_core::assessor::{AssessmentRecord, LayerAssessment};
use deepsz_core::netmodel::{count_correct, train_sgd, Dataset, Network};
use deepsz_core::planner::{
    group_by_layer, optimize_expected_accuracy, optimize_expected_ratio, predict_loss, BoundPlan, PlanError,
};
use deepsz_core::pruner::{prune_network, to_sparse, PrunedLayer};

use crate::checkpoint::{
    load_network, masks_to_bytes, network_from_bytes, read_file, save_network, sparse_to_bytes, write_file,
};
use crate::config::{PipelineConfig, PlannerMode};
use crate::container::{decode_model, encode_model, is_container, EncodedModel};
use crate::idx::load_idx;
use crate::parallel::assess_parallel;
use crate::tables::{parse_assessment, parse_plan, parse_probes, write_assessment, write_plan};
use crate::{backends, Error};

/// Standard artifact locations inside an output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn base(&self) -> PathBuf {
        self.dir.join("base.dszn")
    }

    pub fn pruned(&self) -> PathBuf {
        self.dir.join("pruned.dszn")
    }

    pub fn masks(&self) -> PathBuf {
        self.dir.join("masks.dszm")
    }

    pub fn sparse(&self, layer: usize) -> PathBuf {
        self.dir.join("sparse").join(format!("layer{layer}.dszs"))
    }

    pub fn table(&self) -> PathBuf {
        self.dir.join("assessment.tsv")
    }

    pub fn plan(&self) -> PathBuf {
        self.dir.join("plan.tsv")
    }

    pub fn container(&self) -> PathBuf {
        self.dir.join("model.dsz1")
    }

    pub fn decoded(&self) -> PathBuf {
        self.dir.join("decoded.dszn")
    }

    pub fn summary(&self) -> PathBuf {
        self.dir.join("summary.txt")
    }
}

pub fn load_train_set(cfg: &PipelineConfig) -> Result<Dataset, Error> {
    load_idx(&cfg.data.train_images, &cfg.data.train_labels)
}

pub fn load_test_set(cfg: &PipelineConfig) -> Result<Dataset, Error> {
    load_idx(&cfg.data.test_images, &cfg.data.test_labels)
}

fn accuracy(net: &Network, data: &Dataset) -> Result<f64, Error> {
    if data.is_empty() {
        return Err(Error::Usage("test set is empty".into()));
    }
    Ok(100.0 * count_correct(net, data)? as f64 / data.len() as f64)
}

fn log_line(log: &mut dyn Write, msg: std::fmt::Arguments) {
    // progress output is best effort
    let _ = writeln!(log, "{msg}");
}

/// Dense f32 bytes of all weight matrices.
pub fn raw_weight_bytes(net: &Network) -> usize {
    net.layers().iter().map(|l| 4 * l.weights.len()).sum()
}

pub fn sparse_layers(net: &Network) -> Vec<PrunedLayer> {
    net.layers().iter().map(|l| to_sparse(&l.weights)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    /// Test top-1 accuracy in percent.
    pub accuracy: f64,
}

pub fn cmd_train(cfg: &PipelineConfig, log: &mut dyn Write) -> Result<TrainReport, Error> {
    let train = load_train_set(cfg)?;
    let test = load_test_set(cfg)?;
    let init = Network::mlp(&cfg.dims, cfg.seed)?;
    log_line(log, format_args!("training {:?} on {} samples", cfg.dims, train.len()));
    let net = train_sgd(&init, &train, &cfg.train_config(), None, |e, loss| {
        log_line(log, format_args!("epoch {e}: loss {loss:.5}"));
    })?;
    let art = Artifacts::new(&cfg.out_dir);
    save_network(&art.base(), &net)?;
    let acc = accuracy(&net, &test)?;
    log_line(log, format_args!("test top-1 {acc:.2}%"));
    Ok(TrainReport { checkpoint: art.base(), accuracy: acc })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneReport {
    pub keep_ratios: Vec<f64>,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    /// Stored entries (genuine + filler) per layer.
    pub entries: Vec<usize>,
    pub raw_bytes: usize,
    /// 40 bits per stored entry, summed over layers.
    pub sparse_bytes: usize,
}

impl PruneReport {
    pub fn sparse_ratio(&self) -> f64 {
        self.raw_bytes as f64 / self.sparse_bytes as f64
    }
}

pub fn cmd_prune(cfg: &PipelineConfig, checkpoint: &Path, log: &mut dyn Write) -> Result<PruneReport, Error> {
    let net = load_network(checkpoint)?;
    let train = load_train_set(cfg)?;
    let test = load_test_set(cfg)?;
    let before = accuracy(&net, &test)?;
    log_line(log, format_args!("pruning to keep ratios {:?}", cfg.prune.keep_ratios));
    let (pruned, masks) = prune_network(&net, &cfg.prune, &train, &cfg.retrain_config(), |e, loss| {
        log_line(log, format_args!("retrain epoch {e}: loss {loss:.5}"));
    })?;
    let after = accuracy(&pruned, &test)?;
    let art = Artifacts::new(&cfg.out_dir);
    save_network(&art.pruned(), &pruned)?;
    write_file(&art.masks(), &masks_to_bytes(&masks))?;
    let sparse = sparse_layers(&pruned);
    for (i, s) in sparse.iter().enumerate() {
        write_file(&art.sparse(i), &sparse_to_bytes(s))?;
    }
    let report = PruneReport {
        keep_ratios: cfg.prune.keep_ratios.clone(),
        accuracy_before: before,
        accuracy_after: after,
        entries: sparse.iter().map(PrunedLayer::len).collect(),
        raw_bytes: raw_weight_bytes(&pruned),
        sparse_bytes: sparse.iter().map(PrunedLayer::payload_bytes).sum(),
    };
    log_line(
        log,
        format_args!(
            "top-1 {before:.2}% -> {after:.2}%, sparse {} bytes ({:.2}x vs {} raw)",
            report.sparse_bytes,
            report.sparse_ratio(),
            report.raw_bytes
        ),
    );
    Ok(report)
}

/// Assesses every layer of a pruned checkpoint and writes the table.
///
/// Measurements are appended to the table file as they happen; if the file
/// already holds such lines from an interrupted run they are reused.
pub fn cmd_assess(
    cfg: &PipelineConfig,
    pruned: &Path,
    jobs: usize,
    log: &mut dyn Write,
) -> Result<Vec<LayerAssessment>, Error> {
    let net = load_network(pruned)?;
    let test = load_test_set(cfg)?;
    let art = Artifacts::new(&cfg.out_dir);
    let table = art.table();
    let resume = match std::fs::read_to_string(&table) {
        Ok(text) => parse_probes(&text).map_err(|e| Error::table(&table, e))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(&table, e)),
    };
    if !resume.is_empty() {
        log_line(log, format_args!("resuming with {} logged probes", resume.len()));
    } else if let Some(dir) = table.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let sparse = sparse_layers(&net);
    let all = backends::all();
    let result = assess_parallel(&net, &sparse, &cfg.assess, &test, &all, jobs, &resume, Some(&table))?;
    for a in &result {
        let first = a.records.first().map_or(0.0, |r| r.eb);
        let last = a.records.last().map_or(0.0, |r| r.eb);
        let note = if a.insensitive { " (insensitive)" } else { "" };
        log_line(
            log,
            format_args!("layer {}: {} records, range [{first}, {last}]{note}", a.layer_id, a.records.len()),
        );
    }
    let records: Vec<AssessmentRecord> = result.iter().flat_map(|a| a.records.iter().copied()).collect();
    write_file(&table, write_assessment(&records).as_bytes())?;
    Ok(result)
}

pub fn load_table(path: &Path) -> Result<Vec<Vec<AssessmentRecord>>, Error> {
    let text = String::from_utf8_lossy(&read_file(path)?).into_owned();
    let records = parse_assessment(&text).map_err(|e| Error::table(path, e))?;
    Ok(group_by_layer(&records)?)
}

pub fn load_plan(path: &Path) -> Result<BoundPlan, Error> {
    let text = String::from_utf8_lossy(&read_file(path)?).into_owned();
    parse_plan(&text).map_err(|e| Error::table(path, e))
}

pub fn plan_for(cfg: &PipelineConfig, table: &[Vec<AssessmentRecord>]) -> Result<BoundPlan, PlanError> {
    match cfg.mode {
        PlannerMode::Accuracy => optimize_expected_accuracy(table, cfg.expected_loss()),
        PlannerMode::Ratio => {
            let budget = cfg.budget.expect("validated: ratio mode has a budget");
            optimize_expected_ratio(table, budget.floor() as usize)
        }
    }
}

pub fn cmd_optimize(cfg: &PipelineConfig, table_path: &Path, log: &mut dyn Write) -> Result<BoundPlan, Error> {
    let table = load_table(table_path)?;
    let plan = plan_for(cfg, &table)?;
    let p = predict_loss(&plan, &table)?;
    log_line(
        log,
        format_args!("plan {:?}: {} bytes, predicted loss {:.4} points", plan.ebs, plan.predicted_total_size, p.loss),
    );
    if p.out_of_regime {
        log_line(log, format_args!("warning: predicted loss {:.3} is outside the additive regime", p.loss));
    }
    write_file(&Artifacts::new(&cfg.out_dir).plan(), write_plan(&plan).as_bytes())?;
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeReport {
    pub model: EncodedModel,
    pub sparse_bytes: usize,
}

impl EncodeReport {
    /// Dense weight bytes over container payload bytes.
    pub fn raw_ratio(&self) -> f64 {
        self.model.compression_ratio()
    }

    /// Sparse (40-bit) bytes over container payload bytes.
    pub fn sparse_ratio(&self) -> f64 {
        self.sparse_bytes as f64 / self.model.payload_bytes() as f64
    }
}

pub fn cmd_encode(
    cfg: &PipelineConfig,
    pruned: &Path,
    plan_path: &Path,
    log: &mut dyn Write,
) -> Result<EncodeReport, Error> {
    let net = load_network(pruned)?;
    let plan = load_plan(plan_path)?;
    let sparse = sparse_layers(&net);
    let model = encode_model(&net, &sparse, &plan, cfg.assess.quant_bins)?;
    write_file(&Artifacts::new(&cfg.out_dir).container(), &model.bytes)?;
    let report = EncodeReport { sparse_bytes: sparse.iter().map(PrunedLayer::payload_bytes).sum(), model };
    log_line(
        log,
        format_args!(
            "container payload {} bytes: {:.2}x vs raw {} bytes, {:.2}x vs sparse {} bytes",
            report.model.payload_bytes(),
            report.raw_ratio(),
            report.model.raw_weight_bytes(),
            report.sparse_ratio(),
            report.sparse_bytes
        ),
    );
    Ok(report)
}

pub fn cmd_decode(container: &Path, out: &Path, log: &mut dyn Write) -> Result<Network, Error> {
    let bytes = read_file(container)?;
    let decoded = decode_model(&bytes).map_err(|e| Error::container(container, e))?;
    save_network(out, &decoded.network)?;
    log_line(log, format_args!("decoded {} layers to {}", decoded.network.layers().len(), out.display()));
    Ok(decoded.network)
}

/// Loads a network from a checkpoint or a container, by magic.
pub fn load_model(path: &Path) -> Result<Network, Error> {
    let bytes = read_file(path)?;
    if is_container(&bytes) {
        Ok(decode_model(&bytes).map_err(|e| Error::container(path, e))?.network)
    } else {
        network_from_bytes(&bytes).map_err(|e| Error::format(path, e))
    }
}

/// Test top-1 accuracy (percent) of a checkpoint or container.
pub fn cmd_eval(cfg: &PipelineConfig, model: &Path, log: &mut dyn Write) -> Result<f64, Error> {
    let net = load_model(model)?;
    let test = load_test_set(cfg)?;
    let acc = accuracy(&net, &test)?;
    log_line(log, format_args!("{}: top-1 {acc:.2}% on {} samples", model.display(), test.len()));
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSummary {
    pub baseline_accuracy: f64,
    pub pruned_accuracy: f64,
    pub decoded_accuracy: f64,
    pub prune: PruneReport,
    pub plan: BoundPlan,
    pub table: Vec<Vec<AssessmentRecord>>,
    pub encode: EncodeReport,
}

impl PipelineSummary {
    /// Accuracy lost by the compressed model relative to the unpruned one.
    pub fn measured_loss(&self) -> f64 {
        self.baseline_accuracy - self.decoded_accuracy
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "layer\tshape\tkeep\tentries\teb\tdata_bytes\tindex_bytes\tdelta");
        for (i, l) in self.encode.model.layers.iter().enumerate() {
            let eb = self.plan.ebs[i];
            let delta = self.table[i].iter().find(|r| r.eb == eb).map_or(f64::NAN, |r| r.delta);
            let _ = writeln!(
                s,
                "{i}\t{}x{}\t{}\t{}\t{eb}\t{}\t{}\t{delta}",
                l.out_dim,
                l.in_dim,
                self.prune.keep_ratios.get(i).copied().unwrap_or(1.0),
                self.prune.entries.get(i).copied().unwrap_or(0),
                l.block_bytes,
                l.index_bytes,
            );
        }
        let m = &self.encode.model;
        let _ = writeln!(s, "raw FC bytes\t{}", m.raw_weight_bytes());
        let _ = writeln!(s, "sparse bytes\t{}\t{:.2}x", self.prune.sparse_bytes, self.prune.sparse_ratio());
        let _ = writeln!(s, "container payload bytes\t{}", m.payload_bytes());
        let _ = writeln!(s, "ratio vs raw\t{:.2}x", self.encode.raw_ratio());
        let _ = writeln!(s, "ratio vs sparse\t{:.2}x", self.encode.sparse_ratio());
        let _ = writeln!(s, "baseline top-1\t{:.2}%", self.baseline_accuracy);
        let _ = writeln!(s, "pruned top-1\t{:.2}%", self.pruned_accuracy);
        let _ = writeln!(s, "decoded top-1\t{:.2}%", self.decoded_accuracy);
        let _ = writeln!(s, "predicted loss\t{:.4}", self.plan.predicted_loss);
        let _ = writeln!(s, "measured loss vs pruned\t{:.4}", self.pruned_accuracy - self.decoded_accuracy);
        let _ = writeln!(s, "measured loss vs baseline\t{:.4}", self.measured_loss());
        s
    }
}

/// Runs train, prune, assess, optimize, encode, decode and eval in order.
pub fn cmd_pipeline(cfg: &PipelineConfig, jobs: usize, log: &mut dyn Write) -> Result<PipelineSummary, Error> {
    let art = Artifacts::new(&cfg.out_dir);
    let trained = cmd_train(cfg, log)?;
    let prune = cmd_prune(cfg, &trained.checkpoint, log)?;
    // a fresh run must not resume probes of an older model
    match std::fs::remove_file(art.table()) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(Error::io(&art.table(), e)),
        _ => {}
    }
    cmd_assess(cfg, &art.pruned(), jobs, log)?;
    let plan = cmd_optimize(cfg, &art.table(), log)?;
    let encode = cmd_encode(cfg, &art.pruned(), &art.plan(), log)?;
    cmd_decode(&art.container(), &art.decoded(), log)?;
    let decoded_accuracy = cmd_eval(cfg, &art.container(), log)?;
    let summary = PipelineSummary {
        baseline_accuracy: trained.accuracy,
        pruned_accuracy: prune.accuracy_after,
        decoded_accuracy,
        table: load_table(&art.table())?,
        prune,
        plan,
        encode,
    };
    let text = summary.render();
    write_file(&art.summary(), text.as_bytes())?;
    log_line(log, format_args!("{text}"));
    Ok(summary)
}

//! Layer-parallel assessment with a shared probe cache and an append-only
//! probe log.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use deepsz_core::assessor::{assess_layer, AssessConfig, AssessmentRecord, LayerAssessment, Measurement, NetworkProbe, Probe};
use deepsz_core::lossless::LosslessBackend;
use deepsz_core::netmodel::{Dataset, Network};
use deepsz_core::pruner::PrunedLayer;

use crate::tables::probe_line;
use crate::Error;

struct Shared<'p> {
    cache: Mutex<HashMap<(usize, u64), Measurement>>,
    log: Option<(&'p Path, Mutex<File>)>,
}

impl Shared<'_> {
    fn lookup(&self, layer: usize, eb: f64) -> Option<Measurement> {
        self.cache.lock().unwrap().get(&(layer, eb.to_bits())).copied()
    }

    fn store(&self, layer: usize, eb: f64, m: Measurement) -> Result<(), Error> {
        self.cache.lock().unwrap().insert((layer, eb.to_bits()), m);
        if let Some((path, file)) = &self.log {
            let mut f = file.lock().unwrap();
            f.write_all(probe_line(layer, eb, &m).as_bytes()).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

struct CachedProbe<'a, 'p> {
    inner: NetworkProbe<'a>,
    shared: &'a Shared<'p>,
}

impl Probe for CachedProbe<'_, '_> {
    type Error = Error;

    fn measure(&mut self, layer_id: usize, eb: f64) -> Result<Measurement, Error> {
        if let Some(m) = self.shared.lookup(layer_id, eb) {
            return Ok(m);
        }
        let m = self.inner.measure(layer_id, eb)?;
        self.shared.store(layer_id, eb, m)?;
        Ok(m)
    }
}

/// Assesses all layers on up to `jobs` threads (one layer per task).
///
/// `resume` seeds the probe cache with earlier measurements; new ones are
/// appended to `log` as `#probe` lines. The result does not depend on
/// `jobs`.
#[allow(clippy::too_many_arguments)]
pub fn assess_parallel(
    net: &Network,
    sparse: &[PrunedLayer],
    cfg: &AssessConfig,
    test_set: &Dataset,
    backends: &[&dyn LosslessBackend],
    jobs: usize,
    resume: &[AssessmentRecord],
    log: Option<&Path>,
) -> Result<Vec<LayerAssessment>, Error> {
    let base = NetworkProbe::new(net, sparse, test_set, cfg.quant_bins, backends)?;
    let cache = resume.iter().map(|r| ((r.layer_id, r.eb.to_bits()), Measurement { delta: r.delta, sigma: r.sigma })).collect();
    let log = match log {
        None => None,
        Some(p) => {
            let f = OpenOptions::new().create(true).append(true).open(p).map_err(|e| Error::io(p, e))?;
            Some((p, Mutex::new(f)))
        }
    };
    let shared = Shared { cache: Mutex::new(cache), log };
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<LayerAssessment, Error>>>> =
        Mutex::new((0..sparse.len()).map(|_| None).collect());
    let workers = jobs.clamp(1, sparse.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                let mut probe = CachedProbe { inner: base.clone(), shared: &shared };
                loop {
                    let layer = next.fetch_add(1, Ordering::Relaxed);
                    if layer >= sparse.len() {
                        break;
                    }
                    let r = assess_layer(&mut probe, layer, cfg);
                    let failed = r.is_err();
                    results.lock().unwrap()[layer] = Some(r);
                    if failed {
                        next.store(sparse.len(), Ordering::Relaxed);
                    }
                }
            });
        }
    });
    let mut out = Vec::with_capacity(sparse.len());
    for r in results.into_inner().unwrap() {
        match r {
            Some(r) => out.push(r?),
            None => continue,
        }
    }
    Ok(out)
}

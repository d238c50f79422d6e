//! Per-epoch uncertainty bookkeeping and relabeling-epoch detection.
//!
//! The trace records the mean cumulative uncertainty per epoch and its
//! backward relative change. The relabeling epoch is the one where the
//! relative change is most negative (uncertainty collapses fastest); an
//! online variant declares that minimum once it has not improved for a
//! configurable number of epochs, since a live trainer cannot see the
//! full curve.

use std::path::Path;

use crate::error::{Error, Result};

/// One row of the training trace. `delta_sigma_u` is undefined for the
/// first epoch and whenever the previous sigma_u was zero; the Dice
/// diagnostics are optional.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub sigma_u: f64,
    pub delta_sigma_u: Option<f64>,
    pub d_clean: Option<f64>,
    pub d_noisy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    records: Vec<EpochRecord>,
}

impl TrainingTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an epoch; epochs must arrive strictly increasing.
    pub fn push(
        &mut self,
        epoch: usize,
        sigma_u: f64,
        d_clean: Option<f64>,
        d_noisy: Option<f64>,
    ) -> Result<()> {
        if sigma_u < 0.0 || !sigma_u.is_finite() {
            return Err(Error::Parameter(format!(
                "sigma_u must be >= 0, got {sigma_u}"
            )));
        }
        if let Some(last) = self.records.last() {
            if epoch <= last.epoch {
                return Err(Error::Parameter(format!(
                    "epochs must increase: {} then {epoch}",
                    last.epoch
                )));
            }
        }
        let delta_sigma_u = self
            .records
            .last()
            .filter(|prev| prev.sigma_u > 0.0)
            .map(|prev| (sigma_u - prev.sigma_u) / prev.sigma_u);
        self.records.push(EpochRecord {
            epoch,
            sigma_u,
            delta_sigma_u,
            d_clean,
            d_noisy,
        });
        Ok(())
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    // -- CSV ----------------------------------------------------------------

    /// Writes `epoch,sigma_u,delta_sigma_u,d_clean,d_noisy`; undefined
    /// cells are left empty.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        w.write_record(["epoch", "sigma_u", "delta_sigma_u", "d_clean", "d_noisy"])?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.sigma_u.to_string(),
                fmt(r.delta_sigma_u),
                fmt(r.d_clean),
                fmt(r.d_noisy),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let parse_opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|e| Error::Manifest(format!("bad float {s:?}: {e}")))
        };
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row?;
            if row.len() != 5 {
                return Err(Error::Manifest(format!(
                    "trace row has {} fields, expected 5",
                    row.len()
                )));
            }
            records.push(EpochRecord {
                epoch: row[0]
                    .parse()
                    .map_err(|e| Error::Manifest(format!("bad epoch {:?}: {e}", &row[0])))?,
                sigma_u: row[1]
                    .parse()
                    .map_err(|e| Error::Manifest(format!("bad sigma_u {:?}: {e}", &row[1])))?,
                delta_sigma_u: parse_opt(&row[2])?,
                d_clean: parse_opt(&row[3])?,
                d_noisy: parse_opt(&row[4])?,
            });
        }
        Ok(Self { records })
    }
}

/// Backward relative change per epoch, aligned with the trace records:
/// `out[t] = (sigma_u[t] - sigma_u[t-1]) / sigma_u[t-1]`, `None` for the
/// first record and after a zero previous value.
pub fn relative_change(trace: &TrainingTrace) -> Vec<Option<f64>> {
    let recs = trace.records();
    let mut out = vec![None; recs.len()];
    for t in 1..recs.len() {
        if recs[t - 1].sigma_u > 0.0 {
            out[t] = Some((recs[t].sigma_u - recs[t - 1].sigma_u) / recs[t - 1].sigma_u);
        }
    }
    out
}

/// The epoch with the most negative relative change, considering only
/// epochs strictly after `warmup`; ties break toward the earliest epoch.
pub fn detect_relabel_epoch(trace: &TrainingTrace, warmup: usize) -> Result<usize> {
    let deltas = relative_change(trace);
    let mut best: Option<(f64, usize)> = None;
    for (rec, delta) in trace.records().iter().zip(&deltas) {
        let Some(d) = delta else { continue };
        if rec.epoch <= warmup {
            continue;
        }
        if best.is_none_or(|(b, _)| *d < b) {
            best = Some((*d, rec.epoch));
        }
    }
    best.map(|(_, e)| e).ok_or_else(|| {
        Error::NotEnoughData(format!(
            "no epoch after warmup {warmup} has a defined relative change"
        ))
    })
}

/// Streaming minimum detector with a patience rule: the running minimum
/// of the relative change is declared final once it has not decreased
/// for `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct OnlineDetector {
    warmup: usize,
    patience: usize,
    best: Option<(f64, usize)>,
    stale: usize,
    fired: Option<usize>,
}

impl OnlineDetector {
    pub fn new(warmup: usize, patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Parameter("patience must be >= 1".into()));
        }
        Ok(Self {
            warmup,
            patience,
            best: None,
            stale: 0,
            fired: None,
        })
    }

    /// Feeds one epoch's relative change (as produced by the trace).
    /// Returns `Some(epoch)` the first time the detector fires, with the
    /// epoch bearing the minimum.
    pub fn observe(&mut self, epoch: usize, delta: Option<f64>) -> Option<usize> {
        if self.fired.is_some() {
            return None;
        }
        let d = delta?;
        if epoch <= self.warmup {
            return None;
        }
        match self.best {
            Some((best, _)) if d >= best => {
                self.stale += 1;
                if self.stale >= self.patience {
                    self.fired = Some(self.best.unwrap().1);
                    return self.fired;
                }
            }
            _ => {
                self.best = Some((d, epoch));
                self.stale = 0;
            }
        }
        None
    }

    pub fn fired(&self) -> Option<usize> {
        self.fired
    }

    /// Epoch currently holding the minimum (the candidate).
    pub fn candidate(&self) -> Option<usize> {
        self.best.map(|(_, e)| e)
    }
}

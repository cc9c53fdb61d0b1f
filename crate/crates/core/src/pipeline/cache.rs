use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    export_keyframes, group_stage, ingest, pairs_stage, prepare, screen, stats_stage, timestamp, AnalysisReport,
    ConditionSynchrony, Prepared, StatsReport, Study, TOOL_VERSION,
};
use crate::dataset::ValidationReport;
use crate::error::{Context, Error};
use crate::synchrony::PairTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Preprocess,
    Synchrony,
    Pairs,
    Stats,
    Report,
    Keyframes,
}

impl Stage {
    fn file(self) -> &'static str {
        match self {
            Stage::Ingest => "screening.json",
            Stage::Preprocess => "prepared.json",
            Stage::Synchrony => "group_synchrony.json",
            Stage::Pairs => "pairs.csv",
            Stage::Stats => "stats.json",
            Stage::Report => "report.json",
            Stage::Keyframes => "keyframes",
        }
    }
}

const PAIRS_KEY_FILE: &str = "pairs.key";

#[derive(Serialize, Deserialize)]
struct Artifact<T> {
    key: String,
    tool_version: String,
    data: T,
}

/// Stage artifacts for one study in an output directory. Getters reuse an
/// artifact when its key matches the study and recompute it otherwise.
pub struct Workspace<'a> {
    study: &'a Study,
    out: PathBuf,
    key: String,
}

impl<'a> Workspace<'a> {
    pub fn new(study: &'a Study, out: &Path) -> Result<Self, Error> {
        fs::create_dir_all(out).map_err(Error::io(out))?;
        Ok(Self { study, out: out.to_path_buf(), key: study.cache_key() })
    }

    pub fn path(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.file())
    }

    fn load<T: DeserializeOwned>(&self, stage: Stage) -> Result<Option<T>, Error> {
        let path = self.path(stage);
        let Ok(text) = fs::read_to_string(&path) else { return Ok(None) };
        let artifact: Artifact<T> = serde_json::from_str(&text).map_err(|source| Error::Artifact { path, source })?;
        Ok((artifact.key == self.key).then_some(artifact.data))
    }

    fn store<T: Serialize>(&self, stage: Stage, data: &T) -> Result<(), Error> {
        let artifact = Artifact { key: self.key.clone(), tool_version: TOOL_VERSION.into(), data };
        let path = self.path(stage);
        let text = serde_json::to_string(&artifact).expect("artifact serializes");
        fs::write(&path, text).map_err(Error::io(path))
    }

    pub fn screening(&self) -> Result<Vec<ValidationReport>, Error> {
        match self.load(Stage::Ingest)? {
            Some(s) => Ok(s),
            None => self.refresh_screening(),
        }
    }

    pub fn refresh_screening(&self) -> Result<Vec<ValidationReport>, Error> {
        let screening = screen(&ingest(self.study)?);
        self.store(Stage::Ingest, &screening)?;
        Ok(screening)
    }

    pub fn prepared(&self) -> Result<Prepared, Error> {
        match self.load(Stage::Preprocess)? {
            Some(p) => Ok(p),
            None => self.refresh_prepared(),
        }
    }

    pub fn refresh_prepared(&self) -> Result<Prepared, Error> {
        let prepared = prepare(self.study, &ingest(self.study)?)?;
        self.store(Stage::Ingest, &prepared.screening)?;
        self.store(Stage::Preprocess, &prepared)?;
        Ok(prepared)
    }

    pub fn group(&self) -> Result<Vec<ConditionSynchrony>, Error> {
        match self.load(Stage::Synchrony)? {
            Some(g) => Ok(g),
            None => self.refresh_group(),
        }
    }

    pub fn refresh_group(&self) -> Result<Vec<ConditionSynchrony>, Error> {
        let group = group_stage(self.study, &self.prepared()?)?;
        self.store(Stage::Synchrony, &group)?;
        Ok(group)
    }

    /// `None` when the manifest disables pairwise analysis.
    pub fn pairs(&self) -> Result<Option<PairTable>, Error> {
        if !self.study.manifest.analysis.pairwise {
            return Ok(None);
        }
        let key_path = self.out.join(PAIRS_KEY_FILE);
        let csv_path = self.path(Stage::Pairs);
        if fs::read_to_string(&key_path).is_ok_and(|k| k.trim() == self.key) {
            if let Ok(bytes) = fs::read(&csv_path) {
                return PairTable::read_csv(bytes.as_slice()).context(csv_path.display().to_string()).map(Some);
            }
        }
        self.refresh_pairs()
    }

    pub fn refresh_pairs(&self) -> Result<Option<PairTable>, Error> {
        if !self.study.manifest.analysis.pairwise {
            return Ok(None);
        }
        let pairs = pairs_stage(self.study, &self.prepared()?)?;
        self.write_pairs(&pairs)?;
        Ok(Some(pairs))
    }

    fn write_pairs(&self, pairs: &PairTable) -> Result<(), Error> {
        let csv_path = self.path(Stage::Pairs);
        let file = fs::File::create(&csv_path).map_err(Error::io(&csv_path))?;
        pairs.write_csv(std::io::BufWriter::new(file)).context(csv_path.display().to_string())?;
        let key_path = self.out.join(PAIRS_KEY_FILE);
        fs::write(&key_path, format!("{}\n", self.key)).map_err(Error::io(key_path))
    }

    pub fn stats(&self) -> Result<StatsReport, Error> {
        match self.load(Stage::Stats)? {
            Some(s) => Ok(s),
            None => self.refresh_stats(),
        }
    }

    pub fn refresh_stats(&self) -> Result<StatsReport, Error> {
        let pairs = self.pairs()?;
        let stats = stats_stage(self.study, pairs.as_ref())?;
        self.store(Stage::Stats, &stats)?;
        Ok(stats)
    }

    /// Assemble the report from stage artifacts, computing missing ones.
    pub fn report(&self) -> Result<AnalysisReport, Error> {
        let prepared = self.prepared()?;
        let group = self.group()?;
        let pairs = self.pairs()?;
        let stats = self.stats()?;
        let report =
            AnalysisReport::assemble(self.study, prepared.screening, group, pairs.as_ref(), stats, timestamp());
        self.write_report(&report)?;
        Ok(report)
    }

    fn write_report(&self, report: &AnalysisReport) -> Result<(), Error> {
        let path = self.path(Stage::Report);
        fs::write(&path, report.to_json()).map_err(Error::io(path))
    }

    pub fn keyframes(&self) -> Result<Vec<PathBuf>, Error> {
        export_keyframes(self.study, &ingest(self.study)?, &self.path(Stage::Keyframes))
    }

    /// Every analysis stage from scratch, writing all artifacts.
    pub fn run_all(&self) -> Result<AnalysisReport, Error> {
        let prepared = prepare(self.study, &ingest(self.study)?)?;
        self.store(Stage::Ingest, &prepared.screening)?;
        self.store(Stage::Preprocess, &prepared)?;
        let group = group_stage(self.study, &prepared)?;
        self.store(Stage::Synchrony, &group)?;
        let pairs = if self.study.manifest.analysis.pairwise {
            let p = pairs_stage(self.study, &prepared)?;
            self.write_pairs(&p)?;
            Some(p)
        } else {
            None
        };
        let stats = stats_stage(self.study, pairs.as_ref())?;
        self.store(Stage::Stats, &stats)?;
        let report =
            AnalysisReport::assemble(self.study, prepared.screening, group, pairs.as_ref(), stats, timestamp());
        self.write_report(&report)?;
        Ok(report)
    }
}

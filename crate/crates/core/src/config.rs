//! Engine configuration: INI parsing, defaults, validation.
//!
//! The file format is plain INI with `;` comments (full-line or trailing).
//! Unknown keys are warned about and ignored so configs stay forward
//! compatible; any value that violates an invariant is a hard error naming
//! the offending key.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Incremental,
    KmeansHybrid,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Incremental => write!(f, "incremental"),
            Strategy::KmeansHybrid => write!(f, "kmeans"),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "incremental" => Ok(Strategy::Incremental),
            "kmeans" | "kmeans_hybrid" => Ok(Strategy::KmeansHybrid),
            other => Err(format!("unknown strategy '{other}'")),
        }
    }
}

/// Parameters of the randomized K-means local search.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansConfig {
    /// Upper bound on the cluster counts tried per task.
    pub max_clusters: usize,
    /// (a, b, c, d) of the stage budget `a + (b*k + c*n)^d`.
    pub stage_coeffs: [f64; 4],
    /// Stop refining when one pass loses less than this fraction of distortion.
    pub min_consec_rdl: f64,
    /// Stop refining when `max_run_stage` passes together lose less than this.
    pub min_accum_rdl: f64,
    pub max_run_stage: usize,
    /// Initial probability of accepting a worse solution.
    pub init_prob_accept: f64,
    /// Stages between temperature reductions.
    pub temp_run_length: usize,
    /// Acceptance probability multiplier per temperature step.
    pub temp_reduc_fact: f64,
    /// Required distortion ratio d(K-1)/d(K) to accept a larger K.
    pub elbow_fact: f64,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        KmeansConfig {
            max_clusters: 10_000,
            stage_coeffs: [100.0, 10.0, 2.0, 1.0],
            min_consec_rdl: 0.10,
            min_accum_rdl: 0.10,
            max_run_stage: 3,
            init_prob_accept: 0.5,
            temp_run_length: 10,
            temp_reduc_fact: 0.95,
            elbow_fact: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Resolution exponent of the parallel task grid.
    pub task_k: u8,
    /// Resolution exponent of the overlap-ring grid.
    pub overlap_k: u8,
    /// Resolution exponent used to mint catalog identifiers.
    pub id_k: u8,
    /// Resolution exponent of the in-task / merge spatial index.
    pub catalog_index_k: u8,
    /// Two cluster centers closer than this are duplicates (arcsec).
    pub cluster_duplicates_arcsec: f64,
    /// An observation closer than this to a center joins it (arcsec).
    pub cluster_radius_arcsec: f64,
    pub kmeans: KmeansConfig,
    pub strategy: Strategy,
    pub threads: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            task_k: 15,
            overlap_k: 18,
            id_k: 29,
            catalog_index_k: 17,
            cluster_duplicates_arcsec: 0.5,
            cluster_radius_arcsec: 1.0,
            kmeans: KmeansConfig::default(),
            strategy: Strategy::Incremental,
            threads: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config value for '{key}': {reason}")]
    InvalidConfig { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidConfig {
        key: key.to_string(),
        reason: reason.into(),
    }
}

impl EngineConfig {
    /// Parse INI text; missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<EngineConfig, ConfigError> {
        let mut cfg = EngineConfig::default();
        let mut section = String::new();

        for raw_line in text.lines() {
            let line = match raw_line.find(';') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_ascii_lowercase();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                log::warn!("config: ignoring malformed line '{raw_line}'");
                continue;
            };
            let key = key.trim();
            let value = value.trim();
            cfg.apply(&section, key, value)?;
        }

        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: fmt::Display,
        {
            value
                .parse::<T>()
                .map_err(|e| invalid(key, format!("cannot parse '{value}': {e}")))
        }

        let k = key.to_ascii_lowercase();
        match (section, k.as_str()) {
            (_, "bigpixelnsideexp") => self.task_k = num::<u8>(key, value)?,
            (_, "overlappixelnsideexp") => self.overlap_k = num::<u8>(key, value)?,
            (_, "idnsideexp") => self.id_k = num::<u8>(key, value)?,
            (_, "clusterduplicatesarcsec") => {
                self.cluster_duplicates_arcsec = num::<f64>(key, value)?
            }
            (_, "catalogindexnsideexp") => self.catalog_index_k = num::<u8>(key, value)?,
            (_, "clusterradiusarcsec") => self.cluster_radius_arcsec = num::<f64>(key, value)?,
            (_, "maxclusters") => self.kmeans.max_clusters = num::<usize>(key, value)?,
            (_, "maxtotstagevec0") => self.kmeans.stage_coeffs[0] = num::<f64>(key, value)?,
            (_, "maxtotstagevec1") => self.kmeans.stage_coeffs[1] = num::<f64>(key, value)?,
            (_, "maxtotstagevec2") => self.kmeans.stage_coeffs[2] = num::<f64>(key, value)?,
            (_, "maxtotstagevec3") => self.kmeans.stage_coeffs[3] = num::<f64>(key, value)?,
            (_, "minconsecrdl") => self.kmeans.min_consec_rdl = num::<f64>(key, value)?,
            (_, "minaccumrdl") => self.kmeans.min_accum_rdl = num::<f64>(key, value)?,
            (_, "maxrunstage") => self.kmeans.max_run_stage = num::<usize>(key, value)?,
            (_, "initprobaccept") => self.kmeans.init_prob_accept = num::<f64>(key, value)?,
            // the canonical key spelling lacks the trailing 'h'
            (_, "temprunlengt") | (_, "temprunlength") => {
                self.kmeans.temp_run_length = num::<usize>(key, value)?
            }
            (_, "tempreducfact") => self.kmeans.temp_reduc_fact = num::<f64>(key, value)?,
            (_, "elbowfact") => self.kmeans.elbow_fact = num::<f64>(key, value)?,
            (_, "threads") => self.threads = num::<usize>(key, value)?,
            (_, "strategy") => {
                self.strategy = value.parse().map_err(|e: String| invalid(key, e))?
            }
            _ => log::warn!("config: unknown key '{key}' in section '[{section}]' ignored"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.task_k == 0 {
            return Err(invalid("bigPixelNsideExp", "must be positive"));
        }
        if self.task_k >= self.overlap_k {
            return Err(invalid(
                "overlapPixelNsideExp",
                format!(
                    "overlap resolution ({}) must exceed task resolution ({})",
                    self.overlap_k, self.task_k
                ),
            ));
        }
        if self.overlap_k > self.id_k {
            return Err(invalid(
                "IDNsideExp",
                "catalog id resolution must be at least the overlap resolution",
            ));
        }
        if self.id_k > 29 {
            return Err(invalid("IDNsideExp", "resolution exponent exceeds 29"));
        }
        if self.catalog_index_k == 0 || self.catalog_index_k > 29 {
            return Err(invalid("catalogIndexNsideExp", "must be in [1, 29]"));
        }
        if !(self.cluster_duplicates_arcsec > 0.0) {
            return Err(invalid("clusterDuplicatesArcSec", "must be positive"));
        }
        if !(self.cluster_radius_arcsec > 0.0) {
            return Err(invalid("clusterRadiusArcSec", "must be positive"));
        }
        if self.threads == 0 {
            return Err(invalid("threads", "must be positive"));
        }
        let km = &self.kmeans;
        if km.max_clusters == 0 {
            return Err(invalid("maxClusters", "must be positive"));
        }
        if !(km.init_prob_accept > 0.0 && km.init_prob_accept <= 1.0) {
            return Err(invalid("initProbAccept", "must be in (0, 1]"));
        }
        if !(km.temp_reduc_fact > 0.0 && km.temp_reduc_fact < 1.0) {
            return Err(invalid("tempReducFact", "must be in (0, 1)"));
        }
        if !(km.elbow_fact > 1.0) {
            return Err(invalid("elbowFact", "must exceed 1"));
        }
        if km.max_run_stage == 0 {
            return Err(invalid("maxRunStage", "must be positive"));
        }
        if km.temp_run_length == 0 {
            return Err(invalid("tempRunLengt", "must be positive"));
        }
        if km.stage_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("maxTotStageVec", "coefficients must be finite"));
        }
        if !(km.min_consec_rdl.is_finite() && km.min_accum_rdl.is_finite()) {
            return Err(invalid("minConsecRDL", "must be finite"));
        }
        Ok(())
    }
}

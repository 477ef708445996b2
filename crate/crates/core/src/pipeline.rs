//! End-to-end runs: choose a fragmentation, anonymize every fragment, and
//! make the fragments safe to publish together.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infotheory::{build_mi_matrix, construct_fragments, construct_fragments_recursive};
use crate::ldiversity::ldiverse_pipeline;
use crate::model::{project, Dataset, Fragmentation};
use crate::mondrian::{mondrian_k_anonymize, AnonymizedFragment};
use crate::reconstruct::{
    dgbe_enforce, delta_enforce, naive_enforce, to_ec_level, DependencyGraph, EnforcementReport, Strategy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "k-anon")]
    KAnonymity,
    #[serde(rename = "l-div")]
    LDiversity,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::KAnonymity => "k-anon",
            Model::LDiversity => "l-div",
        })
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k-anon" => Ok(Model::KAnonymity),
            "l-div" => Ok(Model::LDiversity),
            other => Err(Error::InvalidParameter(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub model: Model,
    pub k: usize,
    /// Required for l-diversity.
    pub l: Option<usize>,
    /// Join protection for k-anonymity; ignored for l-diversity.
    pub strategy: Strategy,
    pub delta: f64,
    pub bins: usize,
    pub seed: u64,
    /// Number of fragments; 1 publishes the table unfragmented.
    pub fragments: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model: Model::KAnonymity,
            k: 5,
            l: None,
            strategy: Strategy::Dgbe,
            delta: 0.5,
            bins: crate::infotheory::DEFAULT_BINS,
            seed: 0,
            fragments: 2,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidParameter(format!("k must be at least 2, got {}", self.k)));
        }
        if self.bins == 0 {
            return Err(Error::InvalidParameter("bins must be positive".into()));
        }
        if self.fragments == 0 {
            return Err(Error::InvalidParameter("at least one fragment is needed".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if self.model == Model::LDiversity && self.l.is_none_or(|l| l < 2) {
            return Err(Error::InvalidParameter("l-diversity needs l of at least 2".into()));
        }
        Ok(())
    }
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct Publication {
    pub config: PipelineConfig,
    pub fragmentation: Fragmentation,
    /// Fragments as released.
    pub fragments: Vec<AnonymizedFragment>,
    /// Fragments straight out of the anonymizer, before join protection.
    pub anonymized: Vec<AnonymizedFragment>,
    pub report: Option<EnforcementReport>,
    /// Source segment of every released class (l-diversity only).
    pub segment_of: Option<Vec<Vec<usize>>>,
}

/// Fragmentation with `parts` fragments: the greedy binary split for two,
/// repeated splits for more, and the whole table for one.
pub fn choose_fragmentation(dataset: &Dataset, parts: usize, bins: usize) -> Result<Fragmentation> {
    match parts {
        0 => Err(Error::InvalidParameter("at least one fragment is needed".into())),
        1 => Fragmentation::single(dataset.feature_count()),
        _ => {
            let mi = build_mi_matrix(dataset, bins)?;
            if parts == 2 {
                construct_fragments(&mi)
            } else {
                construct_fragments_recursive(&mi, parts)
            }
        }
    }
}

/// Runs median Mondrian on every fragment of the table.
pub fn anonymize_fragments(
    dataset: &Dataset,
    fragmentation: &Fragmentation,
    k: usize,
) -> Result<Vec<AnonymizedFragment>> {
    fragmentation
        .fragments()
        .par_iter()
        .map(|fragment| mondrian_k_anonymize(&project(dataset, fragment)?, k)?.with_fragment(fragment.clone()))
        .collect()
}

pub fn run(dataset: &Dataset, config: &PipelineConfig) -> Result<Publication> {
    config.validate()?;
    let fragmentation = choose_fragmentation(dataset, config.fragments, config.bins)?;
    run_with_fragmentation(dataset, fragmentation, config)
}

pub fn run_with_fragmentation(
    dataset: &Dataset,
    fragmentation: Fragmentation,
    config: &PipelineConfig,
) -> Result<Publication> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let graph_seed = rng.next_u64();
    let shuffle_seed = rng.next_u64();
    log::info!(
        "{} run, k = {}, {} fragments: {:?}",
        config.model,
        config.k,
        fragmentation.len(),
        fragmentation.fragments().iter().map(|f| f.features().to_vec()).collect::<Vec<_>>()
    );

    match config.model {
        Model::LDiversity => {
            let l = config.l.expect("validated");
            let out = ldiverse_pipeline(dataset, &fragmentation, config.k, l, shuffle_seed)?;
            log::info!("{} segments", out.segments.len());
            Ok(Publication {
                config: config.clone(),
                fragmentation,
                anonymized: out.fragments.clone(),
                fragments: out.fragments,
                report: None,
                segment_of: Some(out.segment_of),
            })
        }
        Model::KAnonymity => {
            let anonymized = anonymize_fragments(dataset, &fragmentation, config.k)?;
            if anonymized.len() < 2 {
                return Ok(Publication {
                    config: config.clone(),
                    fragmentation,
                    fragments: anonymized.clone(),
                    anonymized,
                    report: None,
                    segment_of: None,
                });
            }
            let (fragments, report) = protect(&anonymized, config, graph_seed)?;
            log::info!(
                "{} enforcement: {} changed, {} removed",
                report.strategy,
                report.distorted_class_values,
                report.removed_class_values
            );
            Ok(Publication {
                config: config.clone(),
                fragmentation,
                fragments,
                anonymized,
                report: Some(report),
                segment_of: None,
            })
        }
    }
}

/// Applies the configured join protection to anonymized fragments.
pub fn protect(
    anonymized: &[AnonymizedFragment],
    config: &PipelineConfig,
    graph_seed: u64,
) -> Result<(Vec<AnonymizedFragment>, EnforcementReport)> {
    let mut fragments: Vec<AnonymizedFragment> = match config.strategy {
        Strategy::Delta => anonymized.iter().map(to_ec_level).collect(),
        _ => anonymized.to_vec(),
    };
    let report = match config.strategy {
        Strategy::Naive => naive_enforce(&mut fragments)?,
        Strategy::Dgbe => {
            let graph = DependencyGraph::build(&fragments, graph_seed);
            log::debug!("dependency graph: {} components", graph.component_count());
            dgbe_enforce(&mut fragments, &graph, config.k)?
        }
        Strategy::Delta => {
            let graph = DependencyGraph::build(&fragments, graph_seed);
            delta_enforce(&mut fragments, &graph, config.delta, config.k)?
        }
    };
    Ok((fragments, report))
}

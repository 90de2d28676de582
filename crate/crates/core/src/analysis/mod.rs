//! Post-hoc analyses over a run history: per-budget hyperparameter
//! importance (fANOVA with across-tree uncertainty, LPI at the incumbent),
//! cross-budget rank correlation, and the MDS optimizer footprint. All
//! analyses are pure functions of an immutable history snapshot and never
//! evaluate the objective.

mod correlation;
mod footprint;
mod forest;

pub use correlation::{average_ranks, spearman_from_pairs, spearman_rank_correlation};
pub use footprint::{gower_distance, mds_embed, MdsParams, MdsResult};
pub use forest::{
    fit_forest, fit_forest_records, lpi_fractions, FanovaReport, ForestParams, ForestSurrogate,
    FractionStat,
};

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::history::{HistoryError, RunHistory, TrajectoryPoint};
use crate::optimizer::mix_seed;
use crate::space::{Configuration, DesignSpace, SpaceError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("NotEnoughData: need at least {needed} records, got {got}")]
    NotEnoughData { needed: usize, got: usize },
    #[error("DimensionOutOfRange: dimension {dim} of {d}")]
    DimensionOutOfRange { dim: usize, d: usize },
    #[error("InvalidIncumbent: {0}")]
    InvalidIncumbent(String),
    #[error("SpaceMismatch: {0}")]
    SpaceMismatch(String),
    #[error("InvalidDistanceMatrix: {0}")]
    InvalidDistanceMatrix(String),
    #[error("EmptyHistory: nothing to analyze")]
    EmptyHistory,
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    History(#[from] HistoryError),
}

/// Report construction parameters.
#[derive(Clone, Debug, Default)]
pub struct AnalysisParams {
    pub forest: ForestParams,
    pub mds: MdsParams,
    /// Restrict per-budget importance blocks to these budgets.
    pub budget_filter: Option<Vec<f64>>,
    /// Also report pairwise fANOVA interaction fractions.
    pub interactions: bool,
}

/// Machine-readable analysis output; serialized as `report.json`.
#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub budgets: Vec<f64>,
    pub n_records: usize,
    pub n_failed: usize,
    pub incumbent: Option<IncumbentInfo>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub importance: Vec<BudgetImportance>,
    pub rank_correlation: CorrelationMatrix,
    pub footprint: Option<Footprint>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct IncumbentInfo {
    pub config_id: u64,
    pub loss: f64,
    pub values: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Serialize)]
pub struct BudgetImportance {
    pub budget: f64,
    pub n_obs: usize,
    pub status: ImportanceStatus,
    /// True when every tree had zero prediction variance.
    pub degenerate: bool,
    pub hyperparameters: Vec<HpImportance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interactions: Option<Vec<InteractionImportance>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceStatus {
    Computed,
    NotEnoughData,
}

#[derive(Debug, Serialize)]
pub struct HpImportance {
    pub name: String,
    pub fanova_mean: Option<f64>,
    pub fanova_std: Option<f64>,
    pub lpi: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct InteractionImportance {
    pub a: String,
    pub b: String,
    pub fanova_mean: f64,
    pub fanova_std: f64,
}

#[derive(Debug, Serialize)]
pub struct CorrelationMatrix {
    pub budgets: Vec<f64>,
    /// `values[i][j]` is Spearman rho between budgets i and j, `None` when
    /// undefined (fewer than 3 paired configurations or no rank variance).
    pub values: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Serialize)]
pub struct Footprint {
    pub points: Vec<FootprintPoint>,
    pub stress: f64,
    pub degenerate: bool,
}

#[derive(Debug, Serialize)]
pub struct FootprintPoint {
    pub config_id: u64,
    pub x: f64,
    pub y: f64,
    /// Loss at the configuration's highest successfully evaluated budget;
    /// absent for configurations whose evaluations all failed.
    pub loss: Option<f64>,
    pub budget: Option<f64>,
    pub incumbent: bool,
}

/// Assembles the full analysis report for one run.
pub fn build_report(
    history: &RunHistory,
    space: &DesignSpace,
    params: &AnalysisParams,
) -> Result<AnalysisReport, AnalysisError> {
    if history.is_empty() {
        return Err(AnalysisError::EmptyHistory);
    }
    let mut notes = Vec::new();
    let n_failed = history.records().iter().filter(|r| !r.is_success()).count();
    if n_failed > 0 {
        notes.push(format!("{n_failed} failed evaluations are excluded from all analyses"));
    }

    let trajectory = match history.incumbent_trajectory() {
        Ok(points) => points,
        Err(HistoryError::NoMaxBudgetRecord) => {
            notes.push(
                "no successful evaluation at the highest budget; incumbent unavailable".into(),
            );
            Vec::new()
        }
        Err(e) => return Err(e.into()),
    };
    let incumbent_point = trajectory.last().cloned();
    let incumbent_config = incumbent_point.as_ref().and_then(|p| {
        history
            .records()
            .iter()
            .find(|r| r.config_id == p.config_id)
            .map(|r| r.config.clone())
    });
    let incumbent = incumbent_point.as_ref().zip(incumbent_config.as_ref()).map(|(p, c)| {
        IncumbentInfo {
            config_id: p.config_id,
            loss: p.best_loss,
            values: space.config_value_map(c),
        }
    });

    let budgets = history.budget_set().to_vec();
    let importance_budgets: Vec<f64> = match &params.budget_filter {
        Some(filter) => budgets.iter().copied().filter(|b| filter.contains(b)).collect(),
        None => budgets.clone(),
    };

    let mut importance = Vec::new();
    for &budget in &importance_budgets {
        importance.push(budget_importance(
            history,
            space,
            params,
            budget,
            incumbent_config.as_ref(),
            &mut notes,
        )?);
    }

    let values: Vec<Vec<Option<f64>>> = budgets
        .iter()
        .map(|&a| budgets.iter().map(|&b| spearman_rank_correlation(history, a, b)).collect())
        .collect();
    let rank_correlation = CorrelationMatrix { budgets: budgets.clone(), values };

    let footprint = build_footprint(
        history,
        space,
        params,
        incumbent_point.as_ref().map(|p| p.config_id),
        &mut notes,
    )?;

    Ok(AnalysisReport {
        budgets,
        n_records: history.len(),
        n_failed,
        incumbent,
        trajectory,
        importance,
        rank_correlation,
        footprint,
        notes,
    })
}

fn budget_importance(
    history: &RunHistory,
    space: &DesignSpace,
    params: &AnalysisParams,
    budget: f64,
    incumbent: Option<&Configuration>,
    notes: &mut Vec<String>,
) -> Result<BudgetImportance, AnalysisError> {
    let records = history.records_at_budget(budget)?;
    let n_obs = records.len();
    let needed = 10.max(space.len() + 2);
    let names: Vec<String> =
        space.hyperparameters().iter().map(|hp| hp.name.clone()).collect();

    if n_obs < needed {
        notes.push(format!(
            "budget {budget}: NotEnoughData for importance (needs {needed}, has {n_obs})"
        ));
        return Ok(BudgetImportance {
            budget,
            n_obs,
            status: ImportanceStatus::NotEnoughData,
            degenerate: false,
            hyperparameters: names
                .into_iter()
                .map(|name| HpImportance {
                    name,
                    fanova_mean: None,
                    fanova_std: None,
                    lpi: None,
                })
                .collect(),
            interactions: None,
        });
    }

    let forest_params = ForestParams {
        seed: mix_seed(params.forest.seed, budget.to_bits()),
        ..params.forest.clone()
    };
    let forest = fit_forest_records(&records, space, &forest_params)?;
    let fanova = forest.fanova_singletons();
    if fanova.degenerate {
        notes.push(format!("budget {budget}: constant losses, importance degenerate"));
    }
    let lpi = match incumbent {
        Some(config) => Some(lpi_fractions(&forest, space, config)?),
        None => None,
    };

    let hyperparameters = names
        .into_iter()
        .enumerate()
        .map(|(i, name)| HpImportance {
            name,
            fanova_mean: Some(fanova.singles[i].mean),
            fanova_std: Some(fanova.singles[i].std),
            lpi: lpi.as_ref().map(|l| l[i]),
        })
        .collect();

    let interactions = if params.interactions {
        let mut pairs = Vec::new();
        for i in 0..space.len() {
            for j in (i + 1)..space.len() {
                let stat = forest.fanova_pair(i, j)?;
                pairs.push(InteractionImportance {
                    a: space.hyperparameters()[i].name.clone(),
                    b: space.hyperparameters()[j].name.clone(),
                    fanova_mean: stat.mean,
                    fanova_std: stat.std,
                });
            }
        }
        Some(pairs)
    } else {
        None
    };

    Ok(BudgetImportance {
        budget,
        n_obs,
        status: ImportanceStatus::Computed,
        degenerate: fanova.degenerate,
        hyperparameters,
        interactions,
    })
}

/// Embeds every distinct configuration (failed ones included) under the
/// Gower distance; each point carries the loss from its highest
/// successfully evaluated budget.
fn build_footprint(
    history: &RunHistory,
    space: &DesignSpace,
    params: &AnalysisParams,
    incumbent_id: Option<u64>,
    notes: &mut Vec<String>,
) -> Result<Option<Footprint>, AnalysisError> {
    let mut configs: BTreeMap<u64, (&Configuration, Option<(f64, f64)>)> = BTreeMap::new();
    for record in history.records() {
        let entry = configs.entry(record.config_id).or_insert((&record.config, None));
        if let Some(loss) = record.outcome.loss() {
            let better = match entry.1 {
                Some((budget, _)) => record.budget > budget,
                None => true,
            };
            if better {
                entry.1 = Some((record.budget, loss));
            }
        }
    }
    if configs.len() < 3 {
        notes.push(format!(
            "footprint skipped: needs at least 3 distinct configurations, has {}",
            configs.len()
        ));
        return Ok(None);
    }

    let ids: Vec<u64> = configs.keys().copied().collect();
    let n = ids.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = gower_distance(space, configs[&ids[i]].0, configs[&ids[j]].0)?;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let embedding = mds_embed(&dist, &params.mds)?;
    if embedding.degenerate {
        notes.push("footprint is degenerate: all configurations coincide".into());
    }

    let points = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let (_, best) = configs[id];
            FootprintPoint {
                config_id: *id,
                x: embedding.coords[i][0],
                y: embedding.coords[i].get(1).copied().unwrap_or(0.0),
                loss: best.map(|(_, loss)| loss),
                budget: best.map(|(budget, _)| budget),
                incumbent: incumbent_id == Some(*id),
            }
        })
        .collect();

    Ok(Some(Footprint { points, stress: embedding.stress, degenerate: embedding.degenerate }))
}

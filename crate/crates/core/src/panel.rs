//! Two-way fixed-effects regression of `ln(M+1)` on the pinning flag,
//! `ln(size)` and their interaction, with entity (project) and time effects
//! absorbed by the within transform.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::metrics::{Condition, Metric, MetricRecord};

const DEMEAN_TOLERANCE: f64 = 1e-10;
const DEMEAN_MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PanelError {
    #[error("need at least 2 entities and 2 time periods (got {entities} and {times})")]
    TooFewGroups { entities: usize, times: usize },
    #[error("design matrix is singular after demeaning")]
    RankDeficient,
    #[error("no residual degrees of freedom (n_obs={n_obs}, k={k}, entities={entities}, times={times})")]
    NoDegreesOfFreedom {
        n_obs: usize,
        k: usize,
        entities: usize,
        times: usize,
    },
    #[error("Cohen's f2 requires 0 <= r2_reduced <= r2_full < 1 (got full={full}, reduced={reduced})")]
    EffectSizeDomain { full: f64, reduced: f64 },
}

/// One regression row.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelObservation {
    pub entity: String,
    pub time: usize,
    pub y: f64,
    pub x_pinning: f64,
    pub x_lnsize: f64,
    pub x_interaction: f64,
}

impl PanelObservation {
    pub fn new(entity: impl Into<String>, time: usize, y: f64, pinning: bool, x_lnsize: f64) -> Self {
        let x_pinning = if pinning { 1.0 } else { 0.0 };
        PanelObservation {
            entity: entity.into(),
            time,
            y,
            x_pinning,
            x_lnsize,
            x_interaction: x_pinning * x_lnsize,
        }
    }

    /// `y = ln(M + 1)`, `x_lnsize = ln(size)` with an empty graph mapped to 0.
    pub fn from_record(r: &MetricRecord, metric: Metric) -> Self {
        PanelObservation::new(
            r.project.clone(),
            r.time_index,
            (metric.value(r) as f64).ln_1p(),
            r.condition == Condition::Pinning,
            (r.size_g.max(1) as f64).ln(),
        )
    }

    fn regressor(&self, term: Term) -> f64 {
        match term {
            Term::Pinning => self.x_pinning,
            Term::LnSize => self.x_lnsize,
            Term::Interaction => self.x_interaction,
        }
    }
}

pub fn observations(records: &[MetricRecord], metric: Metric) -> Vec<PanelObservation> {
    records
        .iter()
        .map(|r| PanelObservation::from_record(r, metric))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Pinning,
    LnSize,
    Interaction,
}

impl Term {
    pub const ALL: [Term; 3] = [Term::Pinning, Term::LnSize, Term::Interaction];

    pub fn as_str(self) -> &'static str {
        match self {
            Term::Pinning => "pinning",
            Term::LnSize => "ln_size",
            Term::Interaction => "pinning_x_ln_size",
        }
    }
}

/// A within-estimator fit on an arbitrary subset of terms.
#[derive(Debug, Clone, PartialEq)]
pub struct WithinFit {
    pub terms: Vec<Term>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub r2_within: f64,
    pub n_obs: usize,
    pub n_entities: usize,
    pub n_times: usize,
    pub balanced: bool,
}

/// Full-model fit; arrays are ordered (pinning, ln_size, interaction).
#[derive(Debug, Clone, PartialEq)]
pub struct PanelFit {
    pub coefficients: [f64; 3],
    pub std_errors: [f64; 3],
    pub r2_within: f64,
    pub n_obs: usize,
    pub n_entities: usize,
    pub n_times: usize,
    pub balanced: bool,
}

pub fn fit_twfe(obs: &[PanelObservation]) -> Result<PanelFit, PanelError> {
    let fit = fit_within(obs, &Term::ALL)?;
    Ok(PanelFit {
        coefficients: [fit.coefficients[0], fit.coefficients[1], fit.coefficients[2]],
        std_errors: [fit.std_errors[0], fit.std_errors[1], fit.std_errors[2]],
        r2_within: fit.r2_within,
        n_obs: fit.n_obs,
        n_entities: fit.n_entities,
        n_times: fit.n_times,
        balanced: fit.balanced,
    })
}

/// Group layout of a panel: dense entity/time indices per observation.
struct Groups {
    entity: Vec<usize>,
    time: Vec<usize>,
    n_entities: usize,
    n_times: usize,
    balanced: bool,
}

impl Groups {
    fn new(obs: &[PanelObservation]) -> Groups {
        let mut entity_ids: BTreeMap<&str, usize> = BTreeMap::new();
        let mut time_ids: BTreeMap<usize, usize> = BTreeMap::new();
        for o in obs {
            let n = entity_ids.len();
            entity_ids.entry(o.entity.as_str()).or_insert(n);
            let n = time_ids.len();
            time_ids.entry(o.time).or_insert(n);
        }
        let entity: Vec<usize> = obs.iter().map(|o| entity_ids[o.entity.as_str()]).collect();
        let time: Vec<usize> = obs.iter().map(|o| time_ids[&o.time]).collect();
        let (n_entities, n_times) = (entity_ids.len(), time_ids.len());
        let mut cells = vec![0usize; n_entities * n_times];
        for (e, t) in entity.iter().zip(&time) {
            cells[e * n_times + t] += 1;
        }
        let balanced = cells.first().is_some_and(|&c| c > 0 && cells.iter().all(|&x| x == c));
        Groups {
            entity,
            time,
            n_entities,
            n_times,
            balanced,
        }
    }

    fn group_means(&self, x: &[f64], by_entity: bool) -> Vec<f64> {
        let (ids, n) = if by_entity {
            (&self.entity, self.n_entities)
        } else {
            (&self.time, self.n_times)
        };
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for (&g, &v) in ids.iter().zip(x) {
            sum[g] += v;
            count[g] += 1;
        }
        sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
    }

    /// Removes entity and time effects from `x`.
    fn demean(&self, x: &[f64]) -> Vec<f64> {
        if self.balanced {
            let em = self.group_means(x, true);
            let tm = self.group_means(x, false);
            let grand = x.iter().sum::<f64>() / x.len() as f64;
            return x
                .iter()
                .enumerate()
                .map(|(i, v)| v - em[self.entity[i]] - tm[self.time[i]] + grand)
                .collect();
        }
        let mut cur = x.to_vec();
        for _ in 0..DEMEAN_MAX_SWEEPS {
            let before = cur.clone();
            for by_entity in [true, false] {
                let means = self.group_means(&cur, by_entity);
                let ids = if by_entity { &self.entity } else { &self.time };
                for (v, &g) in cur.iter_mut().zip(ids) {
                    *v -= means[g];
                }
            }
            let change = cur
                .iter()
                .zip(&before)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if change < DEMEAN_TOLERANCE {
                break;
            }
        }
        cur
    }
}

/// Within (two-way demeaned) OLS on the listed terms with classical
/// standard errors.
pub fn fit_within(obs: &[PanelObservation], terms: &[Term]) -> Result<WithinFit, PanelError> {
    let groups = Groups::new(obs);
    if groups.n_entities < 2 || groups.n_times < 2 {
        return Err(PanelError::TooFewGroups {
            entities: groups.n_entities,
            times: groups.n_times,
        });
    }
    let n = obs.len();
    let k = terms.len();
    let dof = n as i64 - k as i64 - groups.n_entities as i64 - groups.n_times as i64 + 1;
    if dof <= 0 {
        return Err(PanelError::NoDegreesOfFreedom {
            n_obs: n,
            k,
            entities: groups.n_entities,
            times: groups.n_times,
        });
    }

    let y: Vec<f64> = obs.iter().map(|o| o.y).collect();
    let y_dm = DVector::from_vec(groups.demean(&y));
    let mut x_dm = DMatrix::zeros(n, k);
    for (j, &term) in terms.iter().enumerate() {
        let raw: Vec<f64> = obs.iter().map(|o| o.regressor(term)).collect();
        let raw_ss: f64 = raw.iter().map(|v| v * v).sum();
        let dm = groups.demean(&raw);
        let dm_ss: f64 = dm.iter().map(|v| v * v).sum();
        if dm_ss <= 1e-20 * (1.0 + raw_ss) {
            return Err(PanelError::RankDeficient);
        }
        x_dm.set_column(j, &DVector::from_vec(dm));
    }

    let xtx = x_dm.transpose() * &x_dm;
    let xty = x_dm.transpose() * &y_dm;
    // Conditioning check on the unit-diagonal rescaling of X'X.
    let scale = DVector::from_iterator(k, (0..k).map(|j| xtx[(j, j)].sqrt().recip()));
    let scaled = DMatrix::from_fn(k, k, |i, j| xtx[(i, j)] * scale[i] * scale[j]);
    let min_eig = SymmetricEigen::new(scaled).eigenvalues.min();
    if !(min_eig > 1e-10) {
        return Err(PanelError::RankDeficient);
    }
    let chol = xtx.clone().cholesky().ok_or(PanelError::RankDeficient)?;
    let beta = chol.solve(&xty);
    let resid = &y_dm - &x_dm * &beta;
    let ssr = resid.norm_squared();
    let tss = y_dm.norm_squared();
    let y_ss: f64 = y.iter().map(|v| v * v).sum();
    let r2_within = if tss <= 1e-24 * (1.0 + y_ss) {
        0.0
    } else {
        (1.0 - ssr / tss).clamp(0.0, 1.0)
    };
    let sigma2 = ssr / dof as f64;
    let inv = chol.inverse();
    Ok(WithinFit {
        terms: terms.to_vec(),
        coefficients: beta.iter().copied().collect(),
        std_errors: (0..k).map(|j| (sigma2 * inv[(j, j)]).max(0.0).sqrt()).collect(),
        r2_within,
        n_obs: n,
        n_entities: groups.n_entities,
        n_times: groups.n_times,
        balanced: groups.balanced,
    })
}

/// `(r2_full - r2_reduced) / (1 - r2_full)`.
pub fn cohens_f2(r2_full: f64, r2_reduced: f64) -> Result<f64, PanelError> {
    if !(0.0..1.0).contains(&r2_full) || !(0.0..=r2_full).contains(&r2_reduced) {
        return Err(PanelError::EffectSizeDomain {
            full: r2_full,
            reduced: r2_reduced,
        });
    }
    Ok((r2_full - r2_reduced) / (1.0 - r2_full))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectSize {
    Negligible,
    Small,
    Medium,
    Large,
}

impl EffectSize {
    /// Cohen's conventional cut-offs: 0.02, 0.15, 0.35.
    pub fn from_f2(f2: f64) -> EffectSize {
        if f2 >= 0.35 {
            EffectSize::Large
        } else if f2 >= 0.15 {
            EffectSize::Medium
        } else if f2 >= 0.02 {
            EffectSize::Small
        } else {
            EffectSize::Negligible
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EffectSize::Negligible => "negligible",
            EffectSize::Small => "small",
            EffectSize::Medium => "medium",
            EffectSize::Large => "large",
        }
    }
}

impl fmt::Display for EffectSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermReport {
    pub metric: String,
    pub term: &'static str,
    pub coefficient: f64,
    pub std_error: f64,
    pub r2_within: f64,
    /// R² of the model without this term.
    pub r2_reduced: f64,
    pub f2_local: f64,
    pub effect: Option<EffectSize>,
    pub n_obs: usize,
    pub n_entities: usize,
    pub n_times: usize,
}

/// Full fit plus a local effect size per term (full model vs. the model
/// with that term dropped).
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub metric: Metric,
    pub fit: PanelFit,
    /// R² of the size-only model.
    pub r2_size_only: f64,
    pub terms: Vec<TermReport>,
}

pub fn fit_report(records: &[MetricRecord], metric: Metric) -> Result<FitReport, PanelError> {
    let obs = observations(records, metric);
    let fit = fit_twfe(&obs)?;
    let r2_size_only = fit_within(&obs, &[Term::LnSize])?.r2_within;
    let terms = Term::ALL
        .iter()
        .enumerate()
        .map(|(j, &term)| {
            let kept: Vec<Term> = Term::ALL.into_iter().filter(|&t| t != term).collect();
            let r2_reduced = fit_within(&obs, &kept).map_or(f64::NAN, |f| f.r2_within);
            let f2 = cohens_f2(fit.r2_within, r2_reduced.min(fit.r2_within)).ok();
            TermReport {
                metric: metric.as_str().to_string(),
                term: term.as_str(),
                coefficient: fit.coefficients[j],
                std_error: fit.std_errors[j],
                r2_within: fit.r2_within,
                r2_reduced,
                f2_local: f2.unwrap_or(f64::NAN),
                effect: f2.map(EffectSize::from_f2),
                n_obs: fit.n_obs,
                n_entities: fit.n_entities,
                n_times: fit.n_times,
            }
        })
        .collect();
    Ok(FitReport {
        metric,
        fit,
        r2_size_only,
        terms,
    })
}

/// Fit report CSV: one row per term.
pub fn write_fit_report_csv<W: Write>(report: &FitReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &report.terms {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(entities: usize, times: usize, f: impl Fn(usize, usize, usize) -> PanelObservation) -> Vec<PanelObservation> {
        let mut out = Vec::new();
        for e in 0..entities {
            for t in 0..times {
                for c in 0..2 {
                    out.push(f(e, t, c));
                }
            }
        }
        out
    }

    fn pseudo(e: usize, t: usize, c: usize) -> f64 {
        // Deterministic, irregular regressor values.
        ((e * 7919 + t * 104_729 + c * 1_299_709) % 1000) as f64 / 137.0
    }

    #[test]
    fn exact_linear_relation() {
        let obs = grid(6, 5, |e, t, c| {
            let lnsize = pseudo(e, t, c) + 1.0;
            PanelObservation::new(format!("p{e}"), t, 2.0 * lnsize, c == 1, lnsize)
        });
        let fit = fit_twfe(&obs).unwrap();
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-10, "{:?}", fit);
        assert!(fit.coefficients[0].abs() < 1e-10);
        assert!(fit.coefficients[2].abs() < 1e-10);
        assert!((fit.r2_within - 1.0).abs() < 1e-12);
        assert!(fit.balanced);
    }

    #[test]
    fn constant_outcome_gives_zero_coefficients() {
        let obs = grid(5, 4, |e, t, c| PanelObservation::new(format!("p{e}"), t, 3.5, c == 1, pseudo(e, t, c)));
        let fit = fit_twfe(&obs).unwrap();
        for b in fit.coefficients {
            assert!(b.abs() < 1e-10);
        }
    }

    #[test]
    fn too_few_groups() {
        let obs = grid(1, 5, |e, t, c| PanelObservation::new(format!("p{e}"), t, 1.0, c == 1, pseudo(e, t, c)));
        assert_eq!(
            fit_twfe(&obs).unwrap_err(),
            PanelError::TooFewGroups { entities: 1, times: 5 }
        );
    }

    #[test]
    fn constant_pinning_is_rank_deficient() {
        let obs = grid(4, 4, |e, t, c| PanelObservation::new(format!("p{e}"), t, pseudo(t, e, c), true, pseudo(e, t, c)));
        assert_eq!(fit_twfe(&obs).unwrap_err(), PanelError::RankDeficient);
    }

    #[test]
    fn unbalanced_panel_converges() {
        let mut obs = grid(8, 5, |e, t, c| {
            let lnsize = pseudo(e, t, c) + 1.0;
            PanelObservation::new(format!("p{e}"), t, 0.5 * lnsize + e as f64 + 0.1 * t as f64, c == 1, lnsize)
        });
        obs.remove(3);
        obs.remove(17);
        let fit = fit_twfe(&obs).unwrap();
        assert!(!fit.balanced);
        assert!((fit.coefficients[1] - 0.5).abs() < 1e-8, "{:?}", fit.coefficients);
    }

    #[test]
    fn effect_size_examples() {
        assert!((cohens_f2(0.715, 0.5).unwrap() - 0.215 / 0.285).abs() < 1e-12);
        assert!((cohens_f2(0.715, 0.5).unwrap() - 0.7544).abs() < 1e-4);
        assert_eq!(cohens_f2(0.3, 0.3).unwrap(), 0.0);
        let f2 = cohens_f2(0.154, 0.10).unwrap();
        assert!((f2 - 0.0638).abs() < 1e-4);
        assert_eq!(EffectSize::from_f2(f2), EffectSize::Small);
        assert_eq!(EffectSize::from_f2(0.2), EffectSize::Medium);
        assert_eq!(EffectSize::from_f2(0.75), EffectSize::Large);
        assert_eq!(EffectSize::from_f2(0.01), EffectSize::Negligible);
        assert!(cohens_f2(1.0, 0.5).is_err());
        assert!(cohens_f2(0.4, 0.5).is_err());
        assert!(cohens_f2(0.4, -0.1).is_err());
    }

    #[test]
    fn zero_metric_maps_to_zero_outcome() {
        let r = MetricRecord {
            project: "p".into(),
            time_index: 0,
            condition: Condition::Control,
            n_floating: 0,
            n_auto_updates: 0,
            n_vuln: 0,
            n_outdated_deps: 0,
            n_bloated: 0,
            size_g: 0,
        };
        let o = PanelObservation::from_record(&r, Metric::NVuln);
        assert_eq!(o.y, 0.0);
        assert_eq!(o.x_lnsize, 0.0);
        assert_eq!(o.x_interaction, o.x_pinning * o.x_lnsize);
    }
}

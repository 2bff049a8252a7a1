//! Event probabilities derived from the fixed model inputs.

use super::params::{District, YEAR_DAYS};
use super::ModelError;

/// Daily probability of visiting the medical environment.
pub fn medical_visit_prob(n_inj: f64, n_bt: f64, n_sur: f64, n_dp: f64) -> Result<f64, ModelError> {
    let counts = [n_inj, n_bt, n_sur, n_dp];
    if counts.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
        return Err(ModelError::Invalid {
            field: "medical counts",
            reason: format!("{counts:?} must be finite and >= 0"),
        });
    }
    let p = counts.iter().sum::<f64>() / YEAR_DAYS as f64;
    if p > 1.0 {
        return Err(ModelError::Invalid {
            field: "medical counts",
            reason: format!("{} annual procedures exceed one per day", p * YEAR_DAYS as f64),
        });
    }
    Ok(p)
}

/// Procedure-count-weighted mean of per-procedure infection probabilities.
/// Arguments are `(count, probability)` for injections, transfusions, surgeries
/// and dental procedures.
pub fn medical_infection_prob(events: [(f64, f64); 4]) -> Result<f64, ModelError> {
    if events
        .iter()
        .any(|(n, p)| !(*n >= 0.0 && n.is_finite()) || !(0.0..=1.0).contains(p))
    {
        return Err(ModelError::Invalid {
            field: "medical event probabilities",
            reason: format!("{events:?}"),
        });
    }
    let total: f64 = events.iter().map(|(n, _)| n).sum();
    if total == 0.0 {
        return Err(ModelError::UndefinedWeights);
    }
    Ok(events.iter().map(|(n, p)| n * p).sum::<f64>() / total)
}

/// Daily probability that an IDU visits the social environment: the
/// population-weighted weekly injecting frequency over 7, clamped to `[0, 1]`.
pub fn idu_visit_prob(districts: &[District]) -> Result<f64, ModelError> {
    let weekly = population_weighted(districts, |d| d.weekly_frequency)?;
    Ok((weekly / 7.0).clamp(0.0, 1.0))
}

/// Population-weighted fraction of IDUs who ever shared a needle. An upper
/// reference for the per-event sharing probability.
pub fn needle_share_reference(districts: &[District]) -> Result<f64, ModelError> {
    population_weighted(districts, |d| d.needle_share)
}

fn population_weighted(
    districts: &[District],
    value: impl Fn(&District) -> f64,
) -> Result<f64, ModelError> {
    if districts.is_empty() {
        return Err(ModelError::Invalid {
            field: "districts",
            reason: "at least one district is required".into(),
        });
    }
    if let Some(d) = districts
        .iter()
        .find(|d| !(d.population > 0.0 && d.population.is_finite()))
    {
        return Err(ModelError::Invalid {
            field: "districts",
            reason: format!("district '{}' has population {}", d.name, d.population),
        });
    }
    if let Some(d) = districts
        .iter()
        .find(|d| !(value(d) >= 0.0 && value(d).is_finite()))
    {
        return Err(ModelError::Invalid {
            field: "districts",
            reason: format!("district '{}' has a negative or non-finite rate", d.name),
        });
    }
    let total: f64 = districts.iter().map(|d| d.population).sum();
    Ok(districts.iter().map(|d| d.population * value(d)).sum::<f64>() / total)
}

/// Split the mean influence probability into employed and unemployed parts.
///
/// Solves `p_ue * p_ue_gen + p_e * (1 - p_ue_gen) = p_inf` together with
/// `p_ue / p_e = p_ue_idu / p_ue_gen`. Returns `(p_e, p_ue)`.
pub fn solve_influence_probs(
    p_inf: f64,
    p_ue_idu: f64,
    p_ue_gen: f64,
) -> Result<(f64, f64), ModelError> {
    if !(p_ue_gen > 0.0 && p_ue_gen < 1.0) {
        return Err(ModelError::Invalid {
            field: "p_ue_gen",
            reason: format!("{p_ue_gen} must lie in (0, 1)"),
        });
    }
    if !(p_ue_idu > 0.0 && p_ue_idu <= 1.0) {
        return Err(ModelError::Invalid {
            field: "p_ue_idu",
            reason: format!("{p_ue_idu} must lie in (0, 1]"),
        });
    }
    if !(0.0..=1.0).contains(&p_inf) {
        return Err(ModelError::Invalid {
            field: "x3",
            reason: format!("{p_inf} is not a probability"),
        });
    }
    let ratio = p_ue_idu / p_ue_gen;
    let p_e = p_inf / (1.0 + p_ue_gen * (ratio - 1.0));
    let p_ue = ratio * p_e;
    if p_ue > 1.0 {
        return Err(ModelError::InfeasibleInfluence { p_ue });
    }
    Ok((p_e, p_ue))
}

use serde::{Deserialize, Serialize};

use super::rates;
use super::ModelError;

/// Days per simulated year.
pub const YEAR_DAYS: u32 = 360;

/// Population and injecting behaviour of one surveyed district.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct District {
    pub name: String,
    pub population: f64,
    /// Injections per week for an IDU in this district.
    pub weekly_frequency: f64,
    /// Fraction of IDUs who report having shared a needle.
    pub needle_share: f64,
}

/// Inputs of the HCV transmission model.
///
/// `x1..x3` are the calibration parameters; everything else is fixed during a
/// calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Per-visit infection probability at a contaminated medical workspace.
    pub x1: f64,
    /// Per-injecting-event probability that an injecting group shares a needle.
    pub x2: f64,
    /// Per-contact probability that an IDU influences a non-IDU to start.
    pub x3: f64,

    /// Mean annual injections, transfusions, surgeries and dental procedures.
    pub n_inj: f64,
    pub n_bt: f64,
    pub n_sur: f64,
    pub n_dp: f64,
    /// Infection probability of one injection with a contaminated needle.
    pub p_inj: f64,

    pub districts: Vec<District>,
    pub p_ue_idu: f64,
    pub p_ue_gen: f64,
    pub non_idu_visit_prob: f64,
    pub idu_group_size: usize,
    /// Multiplier on the number of IDU contacts a visiting non-IDU makes.
    /// 1.0 means every visitor meets every visiting IDU of its cluster once.
    pub social_contact_scale: f64,
    pub education_fraction: f64,
    pub sexual_transmission_prob: f64,

    pub population_size: usize,
    pub horizon_days: u32,
    pub year_length_days: u32,
    pub professionals: usize,
    pub contaminated_professionals: usize,
    pub max_age_years: u32,

    pub initial_rna_fraction: f64,
    pub initial_idu_fraction: f64,
    /// Fraction of the initial IDUs who are RNA positive.
    pub initial_idu_rna_fraction: f64,
    /// Probability that a new infection clears (RNA negative, antibody
    /// positive) within `clearance_window_days`.
    pub clearance_prob: f64,
    pub clearance_window_days: u32,
}

impl Default for ModelParams {
    /// Desk-scale configuration: 5,000 agents over 10 years.
    fn default() -> Self {
        Self {
            x1: 0.035,
            x2: 0.2,
            x3: 1.9e-5,
            n_inj: 2.9,
            n_bt: 0.05,
            n_sur: 0.1,
            n_dp: 0.55,
            p_inj: 0.018,
            districts: default_districts(),
            p_ue_idu: 0.4,
            p_ue_gen: 0.1,
            non_idu_visit_prob: 1.0 / 7.0,
            idu_group_size: 3,
            social_contact_scale: 1.5,
            education_fraction: 0.2,
            sexual_transmission_prob: 1e-5,
            population_size: 5_000,
            horizon_days: 10 * YEAR_DAYS,
            year_length_days: YEAR_DAYS,
            professionals: 40,
            contaminated_professionals: 20,
            max_age_years: 70,
            initial_rna_fraction: 0.005,
            initial_idu_fraction: 0.002,
            initial_idu_rna_fraction: 0.5,
            clearance_prob: 0.26,
            clearance_window_days: 180,
        }
    }
}

/// Placeholder survey districts; replace with field data for real use.
pub fn default_districts() -> Vec<District> {
    vec![
        District {
            name: "district-a".into(),
            population: 3.6e6,
            weekly_frequency: 4.5,
            needle_share: 0.55,
        },
        District {
            name: "district-b".into(),
            population: 2.5e6,
            weekly_frequency: 3.8,
            needle_share: 0.46,
        },
        District {
            name: "district-c".into(),
            population: 2.0e6,
            weekly_frequency: 4.2,
            needle_share: 0.48,
        },
    ]
}

fn check_prob(field: &'static str, v: f64, errs: &mut Vec<ModelError>) {
    if !(0.0..=1.0).contains(&v) {
        errs.push(ModelError::Invalid {
            field,
            reason: format!("{v} is not a probability"),
        });
    }
}

fn check_count(field: &'static str, v: f64, errs: &mut Vec<ModelError>) {
    if !(v >= 0.0 && v.is_finite()) {
        errs.push(ModelError::Invalid {
            field,
            reason: format!("{v} must be a finite count >= 0"),
        });
    }
}

impl ModelParams {
    /// Full-scale configuration: 75,000 agents over 50 years. The contact
    /// scale shrinks with the population so each visitor keeps the same
    /// expected number of IDU contacts as at desk scale.
    pub fn full_scale() -> Self {
        let desk = Self::default();
        Self {
            population_size: 75_000,
            horizon_days: 50 * YEAR_DAYS,
            social_contact_scale: desk.social_contact_scale * desk.population_size as f64 / 75_000.0,
            ..desk
        }
    }

    pub fn with_calibration(&self, x: &[f64]) -> Result<Self, ModelError> {
        if x.len() != 3 {
            return Err(ModelError::Invalid {
                field: "x",
                reason: format!("expected 3 calibration parameters, got {}", x.len()),
            });
        }
        let mut errs = Vec::new();
        for (f, v) in [("x1", x[0]), ("x2", x[1]), ("x3", x[2])] {
            check_prob(f, v, &mut errs);
        }
        if let Some(e) = errs.into_iter().next() {
            return Err(e);
        }
        Ok(Self {
            x1: x[0],
            x2: x[1],
            x3: x[2],
            ..self.clone()
        })
    }

    pub fn calibration(&self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }

    /// Every violated constraint.
    pub fn violations(&self) -> Vec<ModelError> {
        let mut errs = Vec::new();
        for (f, v) in [
            ("x1", self.x1),
            ("x2", self.x2),
            ("x3", self.x3),
            ("p_inj", self.p_inj),
            ("p_ue_idu", self.p_ue_idu),
            ("p_ue_gen", self.p_ue_gen),
            ("non_idu_visit_prob", self.non_idu_visit_prob),
            ("education_fraction", self.education_fraction),
            ("sexual_transmission_prob", self.sexual_transmission_prob),
            ("initial_rna_fraction", self.initial_rna_fraction),
            ("initial_idu_fraction", self.initial_idu_fraction),
            ("initial_idu_rna_fraction", self.initial_idu_rna_fraction),
            ("clearance_prob", self.clearance_prob),
        ] {
            check_prob(f, v, &mut errs);
        }
        for (f, v) in [
            ("n_inj", self.n_inj),
            ("n_bt", self.n_bt),
            ("n_sur", self.n_sur),
            ("n_dp", self.n_dp),
            ("social_contact_scale", self.social_contact_scale),
        ] {
            check_count(f, v, &mut errs);
        }
        if self.year_length_days != YEAR_DAYS {
            errs.push(ModelError::Invalid {
                field: "year_length_days",
                reason: format!("must be {YEAR_DAYS}"),
            });
        }
        if self.population_size == 0 {
            errs.push(ModelError::Invalid {
                field: "population_size",
                reason: "must be positive".into(),
            });
        }
        if self.idu_group_size < 2 {
            errs.push(ModelError::Invalid {
                field: "idu_group_size",
                reason: "needle sharing needs groups of at least 2".into(),
            });
        }
        if self.professionals == 0 || self.contaminated_professionals > self.professionals {
            errs.push(ModelError::Invalid {
                field: "contaminated_professionals",
                reason: format!(
                    "{} contaminated out of {} professionals",
                    self.contaminated_professionals, self.professionals
                ),
            });
        }
        if self.max_age_years < 49 {
            errs.push(ModelError::Invalid {
                field: "max_age_years",
                reason: "groups start with members aged 48 and above".into(),
            });
        }
        if self.clearance_window_days == 0 {
            errs.push(ModelError::Invalid {
                field: "clearance_window_days",
                reason: "must be positive".into(),
            });
        }
        if let Err(e) =
            rates::medical_visit_prob(self.n_inj, self.n_bt, self.n_sur, self.n_dp)
        {
            errs.push(e);
        }
        if let Err(e) = rates::idu_visit_prob(&self.districts) {
            errs.push(e);
        }
        if let Err(e) = rates::solve_influence_probs(self.x3, self.p_ue_idu, self.p_ue_gen) {
            errs.push(e);
        }
        errs
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert_eq!(ModelParams::default().violations(), vec![]);
        assert_eq!(ModelParams::full_scale().violations(), vec![]);
    }

    #[test]
    fn default_visit_probability_is_one_percent() {
        let p = ModelParams::default();
        let p1 = rates::medical_visit_prob(p.n_inj, p.n_bt, p.n_sur, p.n_dp).unwrap();
        assert!((p1 - 0.01).abs() < 1e-15);
    }

    #[test]
    fn collects_all_violations() {
        let p = ModelParams {
            x1: 1.5,
            n_bt: -1.0,
            year_length_days: 365,
            population_size: 0,
            ..ModelParams::default()
        };
        let fields: Vec<_> = p
            .violations()
            .into_iter()
            .filter_map(|e| match e {
                ModelError::Invalid { field, .. } => Some(field),
                _ => None,
            })
            .collect();
        for f in ["x1", "n_bt", "year_length_days", "population_size"] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn calibration_override() {
        let p = ModelParams::default().with_calibration(&[0.036, 0.3, 2.1e-5]).unwrap();
        assert_eq!(p.calibration(), [0.036, 0.3, 2.1e-5]);
        assert!(ModelParams::default().with_calibration(&[0.1]).is_err());
    }
}

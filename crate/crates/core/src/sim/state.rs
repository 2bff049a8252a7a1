use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{ModelParams, YEAR_DAYS};
use super::rates;
use super::ModelError;

pub const IDU_MIN_AGE_DAYS: u32 = 18 * YEAR_DAYS;
/// Last day of age 32.
pub const IDU_MAX_AGE_DAYS: u32 = 33 * YEAR_DAYS - 1;
pub const IDU_MAX_DURATION_DAYS: i64 = 3 * YEAR_DAYS as i64;
pub const EDUCATION_MIN_AGE_DAYS: u32 = 18 * YEAR_DAYS;
/// Last day of age 24.
pub const EDUCATION_MAX_AGE_DAYS: u32 = 25 * YEAR_DAYS - 1;

const OLDER_MIN_AGE: u32 = 48 * YEAR_DAYS;
const YOUNG_MIN_AGE: u32 = 23 * YEAR_DAYS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HcvState {
    Susceptible,
    RnaPositive,
    ClearedAntibodyPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IduState {
    NonIdu,
    /// `start_day` may be negative for agents who were already injecting when
    /// the simulation began.
    ActiveIdu { start_day: i64, start_age_days: u32 },
    FormerIdu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: u64,
    pub age_days: u32,
    pub group_id: usize,
    pub cluster_id: u8,
    pub hcv_state: HcvState,
    pub idu_state: IduState,
    pub in_higher_education: bool,
    pub unemployed: bool,
    /// Whether the agent enrols in higher education on turning 18.
    pub enrols: bool,
    /// Slot of the agent's partner, if paired.
    pub partner: Option<usize>,
    pub clearance_day: Option<u32>,
}

impl Agent {
    pub fn is_age_eligible_for_idu(&self) -> bool {
        (IDU_MIN_AGE_DAYS..=IDU_MAX_AGE_DAYS).contains(&self.age_days)
    }

    pub fn is_active_idu(&self) -> bool {
        matches!(self.idu_state, IduState::ActiveIdu { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub id: usize,
    pub member_ids: Vec<u64>,
    /// Agent slots, parallel to `member_ids`.
    pub members: Vec<usize>,
    pub cluster_id: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Professional {
    pub contaminated_workspace: bool,
    /// An RNA-positive agent has visited since the last reset.
    pub exposure_state: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicalEnvironment {
    pub professionals: Vec<Professional>,
}

/// Per-day event probabilities, fixed for a replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyRates {
    pub medical_visit: f64,
    pub medical_infection: f64,
    pub idu_visit: f64,
    pub non_idu_visit: f64,
    pub influence_employed: f64,
    pub influence_unemployed: f64,
    pub needle_share: f64,
    pub injection_infection: f64,
    pub sexual: f64,
}

impl DailyRates {
    pub fn from_params(p: &ModelParams) -> Result<Self, ModelError> {
        let (influence_employed, influence_unemployed) =
            rates::solve_influence_probs(p.x3, p.p_ue_idu, p.p_ue_gen)?;
        Ok(Self {
            medical_visit: rates::medical_visit_prob(p.n_inj, p.n_bt, p.n_sur, p.n_dp)?,
            medical_infection: p.x1,
            idu_visit: rates::idu_visit_prob(&p.districts)?,
            non_idu_visit: p.non_idu_visit_prob,
            influence_employed,
            influence_unemployed,
            needle_share: p.x2,
            injection_infection: p.p_inj,
            sexual: p.sexual_transmission_prob,
        })
    }
}

/// New events recorded during one simulated day.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayEvents {
    pub medical_infections: u32,
    pub needle_infections: u32,
    pub education_infections: u32,
    pub sexual_infections: u32,
    pub idu_initiations: u32,
    pub clearances: u32,
    pub replacements: u32,
}

impl DayEvents {
    pub fn infections(&self) -> u32 {
        self.medical_infections
            + self.needle_infections
            + self.education_infections
            + self.sexual_infections
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub population: usize,
    pub susceptible: usize,
    pub rna_positive: usize,
    pub cleared: usize,
    pub active_idu: usize,
    pub former_idu: usize,
}

impl Counts {
    pub fn antibody_positive(&self) -> usize {
        self.rna_positive + self.cleared
    }
}

/// Complete state of one replication.
#[derive(Debug, Clone)]
pub struct SimulationState {
    pub day: u32,
    pub agents: Vec<Agent>,
    pub groups: Vec<Group>,
    pub medical: MedicalEnvironment,
    pub params: ModelParams,
    pub rates: DailyRates,
    pub last_events: DayEvents,
    pub(super) next_id: u64,
    pub(super) base_rng: ChaCha8Rng,
}

/// Random streams used inside a day. Each `(day, channel)` pair gets its own
/// stream, and within a stream every agent slot owns a fixed block of draws,
/// so neither the state nor other channels shift what a slot sees.
#[derive(Debug, Clone, Copy)]
pub(super) enum Channel {
    MedicalVisit = 0,
    MedicalEvent,
    SocialVisit,
    SocialEvent,
    Education,
    Sexual,
    Demography,
}

const CHANNELS: u64 = 7;
const INIT_STREAM: u64 = u64::MAX;

impl SimulationState {
    /// Build the initial population.
    ///
    /// Groups are filled with an older pair (48 and above), one or two young
    /// pairs (23 to 47) and one to three children (under 23) until the
    /// population size is reached; each group is placed in one of three
    /// clusters uniformly. Initial RNA-positive agents and initial IDUs are
    /// drawn without replacement in the configured proportions.
    pub fn initialize(params: &ModelParams, seed: u64) -> Result<Self, ModelError> {
        params.validate()?;
        let rates = DailyRates::from_params(params)?;
        let base_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rng = base_rng.clone();
        rng.set_stream(INIT_STREAM);

        let n = params.population_size;
        let max_age = params.max_age_years * YEAR_DAYS;
        let mut agents: Vec<Agent> = Vec::with_capacity(n);
        let mut groups: Vec<Group> = Vec::new();
        while agents.len() < n {
            let gid = groups.len();
            let cluster = rng.random_range(0..3u8);
            let mut ages: Vec<(u32, bool)> = Vec::new();
            ages.push((rng.random_range(OLDER_MIN_AGE..max_age), true));
            ages.push((rng.random_range(OLDER_MIN_AGE..max_age), true));
            for _ in 0..rng.random_range(1..=2) {
                ages.push((rng.random_range(YOUNG_MIN_AGE..OLDER_MIN_AGE), true));
                ages.push((rng.random_range(YOUNG_MIN_AGE..OLDER_MIN_AGE), true));
            }
            for _ in 0..rng.random_range(1..=3) {
                ages.push((rng.random_range(0..YOUNG_MIN_AGE), false));
            }
            let mut group = Group {
                id: gid,
                member_ids: Vec::new(),
                members: Vec::new(),
                cluster_id: cluster,
            };
            let first = agents.len();
            for (k, (age, paired)) in ages.into_iter().enumerate() {
                if agents.len() >= n {
                    break;
                }
                let slot = agents.len();
                let partner = if paired {
                    // members come in consecutive pairs
                    let other = if k % 2 == 0 { slot + 1 } else { slot - 1 };
                    Some(other)
                } else {
                    None
                };
                let enrols = rng.random::<f64>() < params.education_fraction;
                agents.push(Agent {
                    id: slot as u64,
                    age_days: age,
                    group_id: gid,
                    cluster_id: cluster,
                    hcv_state: HcvState::Susceptible,
                    idu_state: IduState::NonIdu,
                    in_higher_education: enrols
                        && (EDUCATION_MIN_AGE_DAYS..=EDUCATION_MAX_AGE_DAYS).contains(&age),
                    unemployed: rng.random::<f64>() < params.p_ue_gen,
                    enrols,
                    partner,
                    clearance_day: None,
                });
                group.member_ids.push(slot as u64);
                group.members.push(slot);
            }
            // a pair cut short by the population limit has no partner
            if let Some(last) = agents.last_mut() {
                if last.partner.is_some_and(|p| p >= n) {
                    last.partner = None;
                }
            }
            debug_assert!(agents.len() > first);
            groups.push(group);
        }

        let n_rna = (params.initial_rna_fraction * n as f64).round() as usize;
        for slot in sample(&mut rng, n, n_rna.min(n)) {
            agents[slot].hcv_state = HcvState::RnaPositive;
        }
        let eligible: Vec<usize> = (0..n).filter(|&i| agents[i].is_age_eligible_for_idu()).collect();
        let n_idu = ((params.initial_idu_fraction * n as f64).round() as usize).min(eligible.len());
        let n_idu_rna = (params.initial_idu_rna_fraction * n_idu as f64).round() as usize;
        for (k, pick) in sample(&mut rng, eligible.len(), n_idu).into_iter().enumerate() {
            let a = &mut agents[eligible[pick]];
            if k < n_idu_rna {
                a.hcv_state = HcvState::RnaPositive;
            }
            let max_elapsed = (IDU_MAX_DURATION_DAYS as u32 - 1).min(a.age_days - IDU_MIN_AGE_DAYS);
            let elapsed = rng.random_range(0..=max_elapsed);
            a.idu_state = IduState::ActiveIdu {
                start_day: -(elapsed as i64),
                start_age_days: a.age_days - elapsed,
            };
        }

        let mut professionals = vec![
            Professional {
                contaminated_workspace: false,
                exposure_state: false,
            };
            params.professionals
        ];
        for i in sample(&mut rng, params.professionals, params.contaminated_professionals) {
            professionals[i].contaminated_workspace = true;
        }

        Ok(Self {
            day: 0,
            agents,
            groups,
            medical: MedicalEnvironment { professionals },
            params: params.clone(),
            rates,
            last_events: DayEvents::default(),
            next_id: n as u64,
            base_rng,
        })
    }

    pub(super) fn channel_rng(&self, channel: Channel) -> ChaCha8Rng {
        let mut rng = self.base_rng.clone();
        rng.set_stream(self.day as u64 * CHANNELS + channel as u64);
        rng.set_word_pos(0);
        rng
    }

    pub fn counts(&self) -> Counts {
        let mut c = Counts {
            population: self.agents.len(),
            susceptible: 0,
            rna_positive: 0,
            cleared: 0,
            active_idu: 0,
            former_idu: 0,
        };
        for a in &self.agents {
            match a.hcv_state {
                HcvState::Susceptible => c.susceptible += 1,
                HcvState::RnaPositive => c.rna_positive += 1,
                HcvState::ClearedAntibodyPositive => c.cleared += 1,
            }
            match a.idu_state {
                IduState::ActiveIdu { .. } => c.active_idu += 1,
                IduState::FormerIdu => c.former_idu += 1,
                IduState::NonIdu => {}
            }
        }
        c
    }

    /// Checks every structural invariant of the population and returns the
    /// first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let c = self.counts();
        if c.population != self.params.population_size {
            return Err(format!(
                "population {} differs from configured {}",
                c.population, self.params.population_size
            ));
        }
        if c.susceptible + c.rna_positive + c.cleared != c.population {
            return Err("hcv states do not partition the population".into());
        }
        let prof = &self.medical.professionals;
        if prof.len() != self.params.professionals
            || prof.iter().filter(|p| p.contaminated_workspace).count()
                != self.params.contaminated_professionals
        {
            return Err("medical environment changed shape".into());
        }
        let today = self.day as i64;
        for (slot, a) in self.agents.iter().enumerate() {
            if let IduState::ActiveIdu {
                start_day,
                start_age_days,
            } = a.idu_state
            {
                if !(IDU_MIN_AGE_DAYS..=IDU_MAX_AGE_DAYS).contains(&start_age_days) {
                    return Err(format!("agent {} started injecting at age {start_age_days}", a.id));
                }
                if today - start_day > IDU_MAX_DURATION_DAYS {
                    return Err(format!("agent {} injecting for {} days", a.id, today - start_day));
                }
                if !a.is_age_eligible_for_idu() {
                    return Err(format!("agent {} is an IDU at age {}", a.id, a.age_days));
                }
            }
            if a.in_higher_education
                && !(EDUCATION_MIN_AGE_DAYS..=EDUCATION_MAX_AGE_DAYS).contains(&a.age_days)
            {
                return Err(format!("agent {} enrolled at age {}", a.id, a.age_days));
            }
            let g = &self.groups[a.group_id];
            if g.cluster_id != a.cluster_id || !g.members.contains(&slot) {
                return Err(format!("agent {} disagrees with group {}", a.id, g.id));
            }
            if let Some(p) = a.partner {
                if self.agents[p].partner != Some(slot) {
                    return Err(format!("agent {} has a one-sided partnership", a.id));
                }
            }
            if a.hcv_state != HcvState::RnaPositive && a.clearance_day.is_some() {
                return Err(format!("agent {} has a stale clearance date", a.id));
            }
        }
        for g in &self.groups {
            for (&slot, &id) in g.members.iter().zip(&g.member_ids) {
                if self.agents[slot].id != id {
                    return Err(format!("group {} lists stale member {id}", g.id));
                }
            }
        }
        Ok(())
    }
}

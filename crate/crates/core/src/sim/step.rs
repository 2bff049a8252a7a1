use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::YEAR_DAYS;
use super::state::{
    Agent, Channel, DayEvents, HcvState, IduState, SimulationState, EDUCATION_MAX_AGE_DAYS,
    EDUCATION_MIN_AGE_DAYS, IDU_MAX_AGE_DAYS, IDU_MAX_DURATION_DAYS,
};

/// Fixed-size blocks of uniforms addressed by agent slot.
struct SlotDraws<const K: usize> {
    rng: ChaCha8Rng,
}

impl<const K: usize> SlotDraws<K> {
    fn new(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }

    fn get(&mut self, slot: usize) -> [f64; K] {
        // one f64 consumes two 32-bit words
        self.rng.set_word_pos((slot * K * 2) as u128);
        std::array::from_fn(|_| self.rng.random())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Medical,
    Needle,
    Education,
    Sexual,
}

/// Pending changes collected during a day and applied at its end, so each
/// channel sees the state as it was at the start of the day.
#[derive(Default)]
struct Pending {
    infected: Vec<Option<Source>>,
    converted: Vec<bool>,
}

impl Pending {
    fn new(n: usize) -> Self {
        Self {
            infected: vec![None; n],
            converted: vec![false; n],
        }
    }

    fn infect(&mut self, slot: usize, src: Source) {
        self.infected[slot].get_or_insert(src);
    }
}

fn uniform_index(u: f64, n: usize) -> usize {
    ((u * n as f64) as usize).min(n - 1)
}

fn conversion_prob(p: f64, idu_contacts: usize, scale: f64) -> f64 {
    if idu_contacts == 0 || p == 0.0 {
        return 0.0;
    }
    1.0 - (1.0 - p).powf(idu_contacts as f64 * scale)
}

/// Draw order inside the social and education blocks.
const CONVERT: usize = 0;
const KEY: usize = 1;
const SHARE: usize = 2;
const INJECT: usize = 3;

impl SimulationState {
    /// Advance the population by one day.
    ///
    /// In order: medical visits, social visits with IDU conversion and needle
    /// sharing within clusters, the same two processes among enrolled agents
    /// on weekdays across clusters, sexual transmission between partners, then
    /// infection and conversion updates, clearance, exposure reset, aging, IDU
    /// expiry and replacement of agents at the maximum age.
    pub fn step_day(&mut self) {
        let n = self.agents.len();
        let mut pending = Pending::new(n);
        self.medical_channel(&mut pending);
        self.social_channel(&mut pending);
        if self.day % 7 < 5 {
            self.education_channel(&mut pending);
        }
        self.sexual_channel(&mut pending);
        self.last_events = self.end_of_day(pending);
        self.day += 1;
    }

    fn medical_channel(&mut self, pending: &mut Pending) {
        let r = self.rates;
        let n_prof = self.medical.professionals.len();
        let mut visit = self.channel_rng(Channel::MedicalVisit);
        let mut events = SlotDraws::<3>::new(self.channel_rng(Channel::MedicalEvent));
        // (slot, time of visit, professional, infection draw)
        let mut visits = Vec::new();
        for slot in 0..self.agents.len() {
            if visit.random::<f64>() < r.medical_visit {
                let [time, prof, inf] = events.get(slot);
                visits.push((slot, time, uniform_index(prof, n_prof), inf));
            }
        }
        // earliest visit by an RNA-positive agent at each professional
        let mut first_infected = vec![f64::INFINITY; n_prof];
        for &(slot, time, prof, _) in &visits {
            if self.agents[slot].hcv_state == HcvState::RnaPositive {
                let p = &mut self.medical.professionals[prof];
                p.exposure_state = true;
                first_infected[prof] = first_infected[prof].min(time);
            }
        }
        for &(slot, time, prof, inf) in &visits {
            let p = &self.medical.professionals[prof];
            if self.agents[slot].hcv_state == HcvState::Susceptible
                && p.contaminated_workspace
                && p.exposure_state
                && time > first_infected[prof]
                && inf < r.medical_infection
            {
                pending.infect(slot, Source::Medical);
            }
        }
    }

    fn social_channel(&mut self, pending: &mut Pending) {
        let r = self.rates;
        let mut visit = self.channel_rng(Channel::SocialVisit);
        let mut events = SlotDraws::<4>::new(self.channel_rng(Channel::SocialEvent));
        let mut idus: [Vec<(usize, [f64; 4])>; 3] = Default::default();
        let mut others: [Vec<(usize, [f64; 4])>; 3] = Default::default();
        for (slot, a) in self.agents.iter().enumerate() {
            let u = visit.random::<f64>();
            let c = a.cluster_id as usize;
            if a.is_active_idu() {
                if u < r.idu_visit {
                    idus[c].push((slot, events.get(slot)));
                }
            } else if u < r.non_idu_visit
                && a.idu_state == IduState::NonIdu
                && a.is_age_eligible_for_idu()
            {
                others[c].push((slot, events.get(slot)));
            }
        }
        for c in 0..3 {
            self.convert(&others[c], idus[c].len(), pending);
            self.share_needles(&mut idus[c], Source::Needle, pending);
        }
    }

    fn education_channel(&mut self, pending: &mut Pending) {
        let mut events = SlotDraws::<4>::new(self.channel_rng(Channel::Education));
        let mut idus = Vec::new();
        let mut others = Vec::new();
        for (slot, a) in self.agents.iter().enumerate() {
            if !a.in_higher_education {
                continue;
            }
            if a.is_active_idu() {
                idus.push((slot, events.get(slot)));
            } else if a.idu_state == IduState::NonIdu && a.is_age_eligible_for_idu() {
                others.push((slot, events.get(slot)));
            }
        }
        self.convert(&others, idus.len(), pending);
        self.share_needles(&mut idus, Source::Education, pending);
    }

    fn convert(&self, candidates: &[(usize, [f64; 4])], idu_contacts: usize, pending: &mut Pending) {
        let r = &self.rates;
        let scale = self.params.social_contact_scale;
        let p_e = conversion_prob(r.influence_employed, idu_contacts, scale);
        let p_ue = conversion_prob(r.influence_unemployed, idu_contacts, scale);
        for &(slot, u) in candidates {
            let p = if self.agents[slot].unemployed { p_ue } else { p_e };
            if u[CONVERT] < p {
                pending.converted[slot] = true;
            }
        }
    }

    /// Injecting groups are formed by sorting on a per-agent key and cutting
    /// into chunks of the configured size; a trailing chunk of one injects
    /// alone. A group shares one needle with probability `x2`, and every
    /// susceptible sharer in a group with an RNA-positive member is infected
    /// with the per-injection probability.
    fn share_needles(&self, idus: &mut [(usize, [f64; 4])], src: Source, pending: &mut Pending) {
        let r = &self.rates;
        idus.sort_by(|a, b| a.1[KEY].total_cmp(&b.1[KEY]).then(a.0.cmp(&b.0)));
        for group in idus.chunks(self.params.idu_group_size) {
            if group.len() < 2 || group[0].1[SHARE] >= r.needle_share {
                continue;
            }
            let carrier = group
                .iter()
                .any(|(s, _)| self.agents[*s].hcv_state == HcvState::RnaPositive);
            if !carrier {
                continue;
            }
            for &(slot, u) in group {
                if self.agents[slot].hcv_state == HcvState::Susceptible
                    && u[INJECT] < r.injection_infection
                {
                    pending.infect(slot, src);
                }
            }
        }
    }

    fn sexual_channel(&mut self, pending: &mut Pending) {
        let p = self.rates.sexual;
        let mut rng = self.channel_rng(Channel::Sexual);
        for slot in 0..self.agents.len() {
            let u = rng.random::<f64>();
            let Some(other) = self.agents[slot].partner else {
                continue;
            };
            if other < slot || u >= p {
                continue;
            }
            let (a, b) = (self.agents[slot].hcv_state, self.agents[other].hcv_state);
            match (a, b) {
                (HcvState::RnaPositive, HcvState::Susceptible) => pending.infect(other, Source::Sexual),
                (HcvState::Susceptible, HcvState::RnaPositive) => pending.infect(slot, Source::Sexual),
                _ => {}
            }
        }
    }

    fn end_of_day(&mut self, pending: Pending) -> DayEvents {
        let mut ev = DayEvents::default();
        let mut demo = SlotDraws::<4>::new(self.channel_rng(Channel::Demography));
        let day = self.day;
        let next = day as i64 + 1;
        let max_age = self.params.max_age_years * YEAR_DAYS;
        let window = self.params.clearance_window_days;
        let clearance_prob = self.params.clearance_prob;
        let education_fraction = self.params.education_fraction;
        let p_ue_gen = self.params.p_ue_gen;

        for slot in 0..self.agents.len() {
            let needs_draws = pending.infected[slot].is_some()
                || self.agents[slot].age_days + 1 >= max_age;
            let [u_clear, u_when, u_enrol, u_ue] = if needs_draws {
                demo.get(slot)
            } else {
                [1.0; 4]
            };
            let a = &mut self.agents[slot];

            if let Some(src) = pending.infected[slot] {
                a.hcv_state = HcvState::RnaPositive;
                a.clearance_day = (u_clear < clearance_prob)
                    .then(|| day + 1 + ((u_when * window as f64) as u32).min(window - 1));
                match src {
                    Source::Medical => ev.medical_infections += 1,
                    Source::Needle => ev.needle_infections += 1,
                    Source::Education => ev.education_infections += 1,
                    Source::Sexual => ev.sexual_infections += 1,
                }
            } else if a.hcv_state == HcvState::RnaPositive && a.clearance_day == Some(day) {
                a.hcv_state = HcvState::ClearedAntibodyPositive;
                a.clearance_day = None;
                ev.clearances += 1;
            }
            if pending.converted[slot] {
                a.idu_state = IduState::ActiveIdu {
                    start_day: day as i64,
                    start_age_days: a.age_days,
                };
                ev.idu_initiations += 1;
            }

            a.age_days += 1;
            if let IduState::ActiveIdu { start_day, .. } = a.idu_state {
                if next - start_day >= IDU_MAX_DURATION_DAYS || a.age_days > IDU_MAX_AGE_DAYS {
                    a.idu_state = IduState::FormerIdu;
                }
            }
            a.in_higher_education = a.enrols
                && (EDUCATION_MIN_AGE_DAYS..=EDUCATION_MAX_AGE_DAYS).contains(&a.age_days);

            if a.age_days >= max_age {
                let id = self.next_id;
                self.next_id += 1;
                let old = std::mem::replace(
                    a,
                    Agent {
                        id,
                        age_days: 0,
                        group_id: a.group_id,
                        cluster_id: a.cluster_id,
                        hcv_state: HcvState::Susceptible,
                        idu_state: IduState::NonIdu,
                        in_higher_education: false,
                        unemployed: u_ue < p_ue_gen,
                        enrols: u_enrol < education_fraction,
                        partner: None,
                        clearance_day: None,
                    },
                );
                if let Some(p) = old.partner {
                    self.agents[p].partner = None;
                }
                let g = &mut self.groups[old.group_id];
                if let Some(pos) = g.members.iter().position(|&s| s == slot) {
                    g.member_ids[pos] = id;
                }
                ev.replacements += 1;
            }
        }
        for p in &mut self.medical.professionals {
            p.exposure_state = false;
        }
        ev
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ModelParams;

    fn small() -> ModelParams {
        ModelParams {
            population_size: 600,
            ..ModelParams::default()
        }
    }

    #[test]
    fn conversion_probability() {
        assert_eq!(conversion_prob(0.1, 0, 1.0), 0.0);
        assert!((conversion_prob(0.1, 1, 1.0) - 0.1).abs() < 1e-15);
        assert!((conversion_prob(0.1, 2, 1.0) - 0.19).abs() < 1e-15);
    }

    #[test]
    fn closed_channels_keep_infections_constant() {
        let p = ModelParams {
            x1: 0.0,
            x2: 0.0,
            sexual_transmission_prob: 0.0,
            clearance_prob: 0.0,
            max_age_years: 200,
            ..small()
        };
        let mut s = SimulationState::initialize(&p, 3).unwrap();
        let start = s.counts().antibody_positive();
        for _ in 0..400 {
            s.step_day();
            assert_eq!(s.last_events.infections(), 0);
        }
        assert_eq!(s.counts().antibody_positive(), start);
    }

    #[test]
    fn no_infected_no_idu_stays_clean() {
        let p = ModelParams {
            x3: 0.0,
            initial_rna_fraction: 0.0,
            initial_idu_fraction: 0.0,
            ..small()
        };
        let mut s = SimulationState::initialize(&p, 5).unwrap();
        for _ in 0..200 {
            s.step_day();
        }
        let c = s.counts();
        assert_eq!(c.antibody_positive(), 0);
        assert_eq!(c.active_idu, 0);
    }

    #[test]
    fn invariants_hold_daily() {
        let p = ModelParams {
            x2: 0.9,
            social_contact_scale: 20.0,
            initial_idu_fraction: 0.01,
            ..small()
        };
        let mut s = SimulationState::initialize(&p, 11).unwrap();
        s.check_invariants().unwrap();
        for _ in 0..3 * YEAR_DAYS {
            s.step_day();
            s.check_invariants().unwrap();
        }
        assert!(s.counts().former_idu > 0);
    }

    #[test]
    fn replacement_keeps_population() {
        let p = ModelParams {
            max_age_years: 50,
            ..small()
        };
        let mut s = SimulationState::initialize(&p, 2).unwrap();
        let mut replaced = 0;
        for _ in 0..YEAR_DAYS {
            s.step_day();
            replaced += s.last_events.replacements;
        }
        assert!(replaced > 0);
        assert_eq!(s.agents.len(), 600);
        s.check_invariants().unwrap();
    }
}

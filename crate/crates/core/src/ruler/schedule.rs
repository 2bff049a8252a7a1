use serde::{Deserialize, Serialize};

/// Number of consecutive ruler tests a candidate must pass at iteration `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MtSchedule {
    /// `ceil(ln(t + 10) - ln 5)`
    #[default]
    Text,
    /// `ceil(ln(t + 10) / ln 5)`
    Commented,
}

impl MtSchedule {
    pub fn tests_required(self, t: u64) -> u32 {
        let t = t.max(1) as f64;
        let raw = match self {
            MtSchedule::Text => ((t + 10.0) / 5.0).ln(),
            MtSchedule::Commented => (t + 10.0).ln() / 5f64.ln(),
        };
        (raw.ceil() as u32).max(1)
    }
}

impl std::str::FromStr for MtSchedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(MtSchedule::Text),
            "commented" => Ok(MtSchedule::Commented),
            other => Err(format!("unknown M_t form '{other}' (expected text or commented)")),
        }
    }
}

pub fn m_t(t: u64, schedule: MtSchedule) -> u32 {
    schedule.tests_required(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values() {
        assert_eq!(m_t(1, MtSchedule::Text), 1);
        assert_eq!(m_t(40, MtSchedule::Text), 3);
        assert_eq!(m_t(1, MtSchedule::Commented), 2);
    }

    #[test]
    fn text_form_steps() {
        // ln((t+10)/5) crosses 1 at t = 5e - 10 ~ 3.59 and 2 at 5e^2 - 10 ~ 26.9
        assert_eq!(m_t(3, MtSchedule::Text), 1);
        assert_eq!(m_t(4, MtSchedule::Text), 2);
        assert_eq!(m_t(26, MtSchedule::Text), 2);
        assert_eq!(m_t(27, MtSchedule::Text), 3);
    }

    #[test]
    fn non_decreasing_and_positive() {
        for schedule in [MtSchedule::Text, MtSchedule::Commented] {
            let mut prev = m_t(1, schedule);
            assert!(prev >= 1);
            for t in 2..=1_000_000u64 {
                let cur = m_t(t, schedule);
                assert!(cur >= prev, "{schedule:?} decreases at t={t}");
                prev = cur;
            }
        }
    }
}

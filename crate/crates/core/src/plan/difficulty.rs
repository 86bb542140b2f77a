use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AggFunc, AnalysisPlan, OperationStep, Step};

/// Task difficulty level, 1 (single basic step) to 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Difficulty(u8);

impl Difficulty {
    pub const L1: Difficulty = Difficulty(1);
    pub const L2: Difficulty = Difficulty(2);
    pub const L3: Difficulty = Difficulty(3);
    pub const L4: Difficulty = Difficulty(4);
    pub const ALL: [Difficulty; 4] = [Self::L1, Self::L2, Self::L3, Self::L4];

    pub fn new(level: u8) -> Option<Difficulty> {
        (1..=4).contains(&level).then_some(Difficulty(level))
    }

    pub fn level(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Difficulty {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Difficulty::new(v).ok_or_else(|| format!("difficulty must be 1..=4, got {v}"))
    }
}

impl From<Difficulty> for u8 {
    fn from(d: Difficulty) -> u8 {
        d.0
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Grouped aggregates and the statistics `mean`, `median`, `sum`,
/// `distinct_count` count as advanced steps.
fn is_advanced(step: &Step) -> bool {
    match step {
        Step::Operation(OperationStep::Aggregate(a)) => {
            !a.group_by.is_empty()
                || matches!(
                    a.func,
                    AggFunc::Mean | AggFunc::Median | AggFunc::Sum | AggFunc::DistinctCount
                )
        }
        _ => false,
    }
}

/// Level 4: two or more advanced steps, or one advanced step in a plan of
/// four or more steps. Level 3: any advanced step, or more than three steps.
/// Level 2: two or three steps. Level 1 otherwise.
pub fn classify_difficulty(plan: &AnalysisPlan) -> Difficulty {
    let total = plan.steps.len();
    let advanced = plan.steps.iter().filter(|s| is_advanced(s)).count();
    if advanced >= 2 || (advanced >= 1 && total >= 4) {
        Difficulty::L4
    } else if advanced >= 1 || total > 3 {
        Difficulty::L3
    } else if (2..=3).contains(&total) {
        Difficulty::L2
    } else {
        Difficulty::L1
    }
}

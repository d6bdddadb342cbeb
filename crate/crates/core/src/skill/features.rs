//! Skill feature vectors for action instances.

use serde::{Deserialize, Serialize};

use crate::data_model::Action;
use crate::error::{Error, Result};

/// One graded action instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillInstance {
    pub procedure_id: String,
    pub action: Action,
    /// Prior instances of the same action in the procedure.
    pub repetition: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    pub features: Vec<f64>,
}

/// Segment summary, action one-hot, repetition ordinal and duration, with
/// the procedure total of the action appended when given.
pub fn skill_features(
    summary: &[f64],
    action: Action,
    repetition: usize,
    duration_s: f64,
    total_repetitions: Option<usize>,
) -> Result<Vec<f64>> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::Validation(format!("duration must be positive, got {duration_s}")));
    }
    if summary.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite segment summary".into()));
    }
    let mut f = summary.to_vec();
    f.extend(Action::ALL.iter().map(|a| (*a == action) as u8 as f64));
    f.push(repetition as f64);
    f.push(duration_s);
    if let Some(t) = total_repetitions {
        f.push(t as f64);
    }
    Ok(f)
}

/// Ordinal of each entry among earlier entries with the same action.
pub fn repetition_ordinals(actions: &[Action]) -> Vec<usize> {
    let mut counts = [0usize; 4];
    actions
        .iter()
        .map(|a| {
            let r = counts[a.index()];
            counts[a.index()] += 1;
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let f = skill_features(&[1.0, 2.0], Action::KnotTying, 3, 4.5, None).unwrap();
        assert_eq!(f, vec![1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 3.0, 4.5]);
        let f = skill_features(&[], Action::Cutting, 0, 1.0, Some(7)).unwrap();
        assert_eq!(f.last(), Some(&7.0));
        assert!(skill_features(&[], Action::Cutting, 0, 0.0, None).is_err());
    }

    #[test]
    fn ordinals() {
        use Action::*;
        assert_eq!(
            repetition_ordinals(&[Cutting, NeedleDriving, Cutting, NeedleDriving, KnotTying]),
            vec![0, 0, 1, 1, 0]
        );
    }
}

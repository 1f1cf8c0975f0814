use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlannedRun {
    pub condition: String,
    /// 1-based count of this condition so far in the plan.
    pub repetition: usize,
}

/// Every condition `repetitions` times, shuffled uniformly with a seeded
/// ChaCha8 generator. The same seed always yields the same plan.
pub fn randomized_schedule(
    conditions: &[String],
    repetitions: usize,
    seed: u64,
) -> Result<Vec<PlannedRun>, AnalysisError> {
    if conditions.is_empty() {
        return Err(AnalysisError::NoConditions);
    }
    if repetitions == 0 {
        return Err(AnalysisError::NoRepetitions);
    }
    let mut order: Vec<usize> = (0..conditions.len())
        .flat_map(|c| std::iter::repeat_n(c, repetitions))
        .collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut seen = vec![0usize; conditions.len()];
    Ok(order
        .into_iter()
        .map(|c| {
            seen[c] += 1;
            PlannedRun {
                condition: conditions[c].clone(),
                repetition: seen[c],
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn conds(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_by_twenty() {
        let plan = randomized_schedule(&conds(&["chrome", "idle"]), 20, 7).unwrap();
        assert_eq!(plan.len(), 40);
        assert_eq!(plan.iter().filter(|r| r.condition == "chrome").count(), 20);
        assert_eq!(plan, randomized_schedule(&conds(&["chrome", "idle"]), 20, 7).unwrap());
        assert_ne!(plan, randomized_schedule(&conds(&["chrome", "idle"]), 20, 8).unwrap());
    }

    #[test]
    fn rejects_empty() {
        assert!(randomized_schedule(&[], 3, 0).is_err());
        assert!(randomized_schedule(&conds(&["a"]), 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn plan_is_a_permutation(seed: u64, n in 1usize..6, reps in 1usize..30) {
            let names: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
            let plan = randomized_schedule(&names, reps, seed).unwrap();
            prop_assert_eq!(plan.len(), n * reps);
            for name in &names {
                let mine: Vec<usize> = plan.iter().filter(|r| &r.condition == name).map(|r| r.repetition).collect();
                prop_assert_eq!(mine, (1..=reps).collect::<Vec<_>>());
            }
        }
    }
}

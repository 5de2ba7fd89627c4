//! Randomized constraint search in the Moser-Tardos style: sample all
//! variables, then repeatedly resample the variables of the first violated
//! constraint until none is violated or the budget runs out. Deterministic
//! for a fixed seed.

use rand_chacha::ChaCha8Rng;

use crate::error::StageError;

pub type Sampler<'a> = Box<dyn Fn(&mut ChaCha8Rng) -> u64 + 'a>;

pub struct Constraint<'a> {
    /// Variables the predicate reads; these get resampled on violation.
    pub vars: Vec<usize>,
    /// Returns true when the bad event holds for the current assignment.
    pub bad: Box<dyn Fn(&[u64]) -> bool + 'a>,
    pub name: String,
}

impl<'a> Constraint<'a> {
    pub fn new(
        name: impl Into<String>,
        vars: Vec<usize>,
        bad: impl Fn(&[u64]) -> bool + 'a,
    ) -> Self {
        Constraint { vars, bad: Box::new(bad), name: name.into() }
    }
}

/// Find an assignment avoiding every bad event. The default budget is 1000
/// resampling rounds per constraint.
pub fn lll_search(
    samplers: &[Sampler<'_>],
    constraints: &[Constraint<'_>],
    rng: &mut ChaCha8Rng,
    budget: Option<usize>,
) -> Result<Vec<u64>, StageError> {
    let mut state: Vec<u64> = samplers.iter().map(|s| s(rng)).collect();
    let budget = budget.unwrap_or(1000 * constraints.len().max(1));
    for _ in 0..budget {
        let violated = constraints.iter().find(|c| (c.bad)(&state));
        match violated {
            None => return Ok(state),
            Some(c) => {
                for &v in &c.vars {
                    state[v] = samplers[v](rng);
                }
            }
        }
    }
    let stuck: Vec<&str> = constraints
        .iter()
        .filter(|c| (c.bad)(&state))
        .map(|c| c.name.as_str())
        .take(5)
        .collect();
    Err(StageError::budget(
        "lll_search",
        format!("still violated after {budget} rounds: {}", stuck.join(", ")),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn solves_chain_of_disequalities() {
        // 20 ternary variables; adjacent ones must differ
        let n = 20;
        let samplers: Vec<Sampler> = (0..n)
            .map(|_| {
                Box::new(|rng: &mut ChaCha8Rng| {
                    use rand::Rng;
                    rng.gen_range(0..3u64)
                }) as Sampler
            })
            .collect();
        let constraints: Vec<Constraint> = (0..n - 1)
            .map(|i| {
                Constraint::new(format!("eq{i}"), vec![i, i + 1], move |s: &[u64]| {
                    s[i] == s[i + 1]
                })
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sol = lll_search(&samplers, &constraints, &mut rng, None).unwrap();
        for i in 0..n - 1 {
            assert_ne!(sol[i], sol[i + 1]);
        }
        // deterministic under the same seed
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let sol2 = lll_search(&samplers, &constraints, &mut rng2, None).unwrap();
        assert_eq!(sol, sol2);
    }

    #[test]
    fn reports_budget_exhaustion() {
        let samplers: Vec<Sampler> =
            vec![Box::new(|_: &mut ChaCha8Rng| 0u64) as Sampler];
        let constraints = vec![Constraint::new("always", vec![0], |_: &[u64]| true)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = lll_search(&samplers, &constraints, &mut rng, Some(10)).unwrap_err();
        assert!(format!("{err}").contains("always"));
    }
}

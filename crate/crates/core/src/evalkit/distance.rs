use serde::{Deserialize, Serialize};

use super::EvalError;

/// Unit-cost edit distance (insert, delete, substitute), two-row DP.
pub fn levenshtein<T: PartialEq>(x: &[T], y: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=y.len()).collect();
    let mut cur = vec![0; y.len() + 1];
    for (i, a) in x.iter().enumerate() {
        cur[0] = i + 1;
        for (j, b) in y.iter().enumerate() {
            let sub = prev[j] + usize::from(a != b);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[y.len()]
}

/// Edit distance of a prediction against its reference, kept as an exact
/// ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub levenshtein: usize,
    pub reference_len: usize,
}

impl DistanceResult {
    /// `levenshtein / reference_len` rounded to the nearest f64.
    pub fn relative(&self) -> f64 {
        self.levenshtein as f64 / self.reference_len as f64
    }

    /// Exact comparison `levenshtein / reference_len == num / den`.
    pub fn relative_equals(&self, num: usize, den: usize) -> bool {
        self.levenshtein * den == num * self.reference_len
    }
}

/// `L(x, y) / |y|`, with `y` the reference.
pub fn relative_levenshtein<T: PartialEq>(x: &[T], y: &[T]) -> Result<DistanceResult, EvalError> {
    if y.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    Ok(DistanceResult {
        levenshtein: levenshtein(x, y),
        reference_len: y.len(),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    /// Exhaustive recursion straight from the definition.
    fn brute(x: &[u8], y: &[u8]) -> usize {
        match (x, y) {
            ([], _) => y.len(),
            (_, []) => x.len(),
            ([a, xs @ ..], [b, ys @ ..]) => {
                let sub = brute(xs, ys) + usize::from(a != b);
                sub.min(brute(xs, y) + 1).min(brute(x, ys) + 1)
            }
        }
    }

    #[test]
    fn three_edits_example() {
        assert_eq!(levenshtein(&[2, 3, 4, 6, 7, 8], &[1, 2, 3, 5, 6, 7]), 3);
    }

    #[test]
    fn degenerate_predictions_all_score_one() {
        for k in 1..=16usize {
            let reference: Vec<u8> = (0..k as u8).collect();
            let empty = relative_levenshtein(&[], &reference).unwrap();
            let wrong: Vec<u8> = reference.iter().map(|v| v + 100).collect();
            let mut doubled = reference.clone();
            doubled.extend(wrong.iter());
            for r in [
                empty,
                relative_levenshtein(&wrong, &reference).unwrap(),
                relative_levenshtein(&doubled, &reference).unwrap(),
            ] {
                assert!(r.relative_equals(1, 1));
                assert_eq!(r.relative(), 1.0);
            }
        }
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert_eq!(
            relative_levenshtein::<u8>(&[1], &[]),
            Err(EvalError::EmptyReference)
        );
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            x in prop::collection::vec(0u8..4, 0..=8),
            y in prop::collection::vec(0u8..4, 0..=8),
        ) {
            prop_assert_eq!(levenshtein(&x, &y), brute(&x, &y));
        }

        #[test]
        fn metric_axioms(
            x in prop::collection::vec(0u8..4, 0..12),
            y in prop::collection::vec(0u8..4, 0..12),
            z in prop::collection::vec(0u8..4, 0..12),
        ) {
            let d = levenshtein(&x, &y);
            prop_assert_eq!(d, levenshtein(&y, &x));
            prop_assert_eq!(levenshtein(&x, &x), 0);
            prop_assert!(levenshtein(&x, &z) <= d + levenshtein(&y, &z));
            prop_assert!(x.len().abs_diff(y.len()) <= d);
            prop_assert!(d <= x.len().max(y.len()));
            prop_assert_eq!(d == 0, x == y);
        }
    }
}

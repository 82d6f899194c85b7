//! Greedy CTC decoding and symbol error rate.

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Per-frame argmax (ties to the lowest class), then collapse repeats and
/// drop blanks. The blank is the last class.
pub fn greedy_decode<T: Real>(logpost: &Tensor<T>) -> Vec<u16> {
    let classes = *logpost.shape().last().unwrap();
    let blank = classes - 1;
    let mut out = Vec::new();
    let mut prev: Option<usize> = None;
    for row in logpost.data().chunks(classes) {
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        if best != blank && prev != Some(best) {
            out.push(best as u16);
        }
        prev = Some(best);
    }
    out
}

/// Levenshtein distance with unit costs.
pub fn edit_distance<S: PartialEq>(reference: &[S], hypothesis: &[S]) -> usize {
    let mut row: Vec<usize> = (0..=hypothesis.len()).collect();
    for (i, r) in reference.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = diag + usize::from(r != h);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(row[j + 1] + 1);
        }
    }
    row[hypothesis.len()]
}

/// Edit distance over reference length.
pub fn wer<S: PartialEq>(reference: &[S], hypothesis: &[S]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::InvalidArgument("WER needs a non-empty reference".into()));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(argmaxes: &[usize], classes: usize) -> Tensor<f64> {
        let mut d = vec![-5.0; argmaxes.len() * classes];
        for (t, &k) in argmaxes.iter().enumerate() {
            d[t * classes + k] = -0.1;
        }
        Tensor::new(vec![argmaxes.len(), classes], d).unwrap()
    }

    #[test]
    fn collapse_rules() {
        let blank = 2;
        assert!(greedy_decode(&one_hot(&[blank, blank], 3)).is_empty());
        assert_eq!(greedy_decode(&one_hot(&[0, 0, blank], 3)), vec![0]);
        assert_eq!(greedy_decode(&one_hot(&[0, blank, 0], 3)), vec![0, 0]);
        assert_eq!(greedy_decode(&one_hot(&[1, 0, 0, 1], 3)), vec![1, 0, 1]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let t = Tensor::<f64>::from_f64(&[1, 3], &[-1.0, -1.0, -1.0]).unwrap();
        assert_eq!(greedy_decode(&t), vec![0]);
    }

    #[test]
    fn wer_cases() {
        assert_eq!(wer(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(wer(&['a', 'b'], &['b']).unwrap(), 0.5);
        let k: Vec<char> = "kitten".chars().collect();
        let s: Vec<char> = "sitting".chars().collect();
        assert_eq!(edit_distance(&k, &s), 3);
        assert_eq!(wer::<u16>(&[1], &[]).unwrap(), 1.0);
        assert!(wer::<u16>(&[], &[1]).is_err());
        assert_eq!(wer(&[1u16], &[2, 3, 4]).unwrap(), 3.0);
    }
}

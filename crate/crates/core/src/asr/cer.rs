//! Character error rate.

/// Unit-cost Levenshtein distance over characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            cur[j] = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Character error rate in percent: distance / max(1, |reference|) * 100.
///
/// The max(1, .) guard makes the silence class well defined: empty vs empty
/// is 0, a nonempty hypothesis against an empty reference counts 100 per
/// inserted character.
pub fn cer(reference: &str, hypothesis: &str) -> f64 {
    let d = levenshtein(reference, hypothesis);
    100.0 * d as f64 / reference.chars().count().max(1) as f64
}

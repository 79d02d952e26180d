//! Answer metrics: ANLS and ROUGE-L.

/// Lowercases, strips ASCII punctuation, collapses whitespace and trims.
pub fn normalize_answer(s: &str) -> String {
    let lowered: String = s
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .flat_map(char::to_lowercase)
        .collect();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub const DEFAULT_ANLS_THRESHOLD: f64 = 0.5;

/// Best normalized Levenshtein similarity against any gold answer, zeroed
/// below `threshold`. Two empty strings are identical.
pub fn anls(pred: &str, golds: &[&str], threshold: f64) -> f64 {
    let p = normalize_answer(pred);
    let best = golds
        .iter()
        .map(|g| {
            let g = normalize_answer(g);
            let len = p.chars().count().max(g.chars().count());
            if len == 0 {
                1.0
            } else {
                1.0 - levenshtein(&p, &g) as f64 / len as f64
            }
        })
        .fold(0.0, f64::max);
    if best >= threshold {
        best
    } else {
        0.0
    }
}

fn lcs(a: &[&str], b: &[&str]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// LCS F-measure over whitespace tokens of the normalized answers.
pub fn rouge_l(pred: &str, gold: &str) -> f64 {
    let (p, g) = (normalize_answer(pred), normalize_answer(gold));
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return 0.0;
    }
    let l = lcs(&pt, &gt) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (prec, rec) = (l / pt.len() as f64, l / gt.len() as f64);
    2.0 * prec * rec / (prec + rec)
}

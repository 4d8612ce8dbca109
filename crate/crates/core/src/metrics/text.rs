//! Corpus BLEU-4, ROUGE-L and an exact-plus-stem METEOR variant.

use std::collections::HashMap;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

use crate::error::{Error, Result};

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

/// Lowercase, split on whitespace, and make each ASCII punctuation mark its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() || c.is_ascii_punctuation() {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if c.is_ascii_punctuation() {
                out.push(c.to_string());
            }
        } else {
            word.push(c);
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn check_corpus<R: AsRef<str>, H: AsRef<str>>(refs: &[R], hyps: &[H]) -> Result<()> {
    if refs.len() != hyps.len() {
        return Err(Error::LengthMismatch(refs.len(), hyps.len()));
    }
    if refs.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// Corpus-level BLEU-4 with uniform weights and brevity penalty, no smoothing.
pub fn bleu4<R: AsRef<str>, H: AsRef<str>>(references: &[R], hypotheses: &[H]) -> Result<f64> {
    check_corpus(references, hypotheses)?;
    let mut matched = [0u64; 4];
    let mut total = [0u64; 4];
    let (mut ref_len, mut hyp_len) = (0usize, 0usize);
    for (r, h) in references.iter().zip(hypotheses) {
        let r = tokenize(r.as_ref());
        let h = tokenize(h.as_ref());
        ref_len += r.len();
        hyp_len += h.len();
        for n in 1..=4 {
            let rc = ngram_counts(&r, n);
            for (g, c) in ngram_counts(&h, n) {
                matched[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
                total[n - 1] += c;
            }
        }
    }
    if matched.contains(&0) {
        return Ok(0.0);
    }
    let log_p: f64 = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / 4.0;
    let bp = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(bp * log_p.exp())
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F1 for one pair.
pub fn rouge_l_pair(reference: &str, hypothesis: &str) -> f64 {
    let r = tokenize(reference);
    let h = tokenize(hypothesis);
    let lcs = lcs_len(&r, &h);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / h.len() as f64;
    let rec = lcs as f64 / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

/// Mean ROUGE-L F1 over pairs.
pub fn rouge_l<R: AsRef<str>, H: AsRef<str>>(references: &[R], hypotheses: &[H]) -> Result<f64> {
    check_corpus(references, hypotheses)?;
    let sum: f64 = references
        .iter()
        .zip(hypotheses)
        .map(|(r, h)| rouge_l_pair(r.as_ref(), h.as_ref()))
        .sum();
    Ok(sum / references.len() as f64)
}

fn stem(word: &str) -> String {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER
        .get_or_init(|| Stemmer::create(Algorithm::English))
        .stem(word)
        .into_owned()
}

/// Greedy unigram alignment: exact matches first, then stem matches. Each
/// hypothesis token, left to right, takes the first free reference token.
/// Returns `(hyp_index, ref_index)` pairs sorted by hypothesis position.
pub fn align(reference: &[String], hypothesis: &[String]) -> Vec<(usize, usize)> {
    let mut ref_used = vec![false; reference.len()];
    let mut hyp_used = vec![false; hypothesis.len()];
    let mut pairs = Vec::new();

    let mut stage = |keys_r: &[String], keys_h: &[String], pairs: &mut Vec<(usize, usize)>| {
        for (i, h) in keys_h.iter().enumerate() {
            if hyp_used[i] {
                continue;
            }
            if let Some(j) = (0..keys_r.len()).find(|&j| !ref_used[j] && keys_r[j] == *h) {
                ref_used[j] = true;
                hyp_used[i] = true;
                pairs.push((i, j));
            }
        }
    };
    stage(reference, hypothesis, &mut pairs);
    let rs: Vec<String> = reference.iter().map(|w| stem(w)).collect();
    let hs: Vec<String> = hypothesis.iter().map(|w| stem(w)).collect();
    stage(&rs, &hs, &mut pairs);
    pairs.sort_unstable();
    pairs
}

/// Number of maximal runs of alignments contiguous in both sequences.
fn chunks(alignment: &[(usize, usize)]) -> usize {
    if alignment.is_empty() {
        return 0;
    }
    1 + alignment
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

/// METEOR score for one pair.
pub fn meteor_pair(reference: &str, hypothesis: &str) -> f64 {
    let r = tokenize(reference);
    let h = tokenize(hypothesis);
    let a = align(&r, &h);
    let m = a.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / h.len() as f64;
    let rec = m as f64 / r.len() as f64;
    let f_mean = p * rec / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * rec);
    let penalty = METEOR_GAMMA * (chunks(&a) as f64 / m as f64).powf(METEOR_BETA);
    f_mean * (1.0 - penalty)
}

/// Mean METEOR over pairs, using exact and stem matching only.
pub fn meteor_lite<R: AsRef<str>, H: AsRef<str>>(
    references: &[R],
    hypotheses: &[H],
) -> Result<f64> {
    check_corpus(references, hypotheses)?;
    let sum: f64 = references
        .iter()
        .zip(hypotheses)
        .map(|(r, h)| meteor_pair(r.as_ref(), h.as_ref()))
        .sum();
    Ok(sum / references.len() as f64)
}

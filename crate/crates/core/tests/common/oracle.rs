//! Brute-force reference implementations of the text metrics.
//!
//! Written without looking at the production code paths: n-grams are kept
//! as plain vectors and matched by linear scan, LCS is found by trying
//! every subsequence, and the METEOR alignment by trying every injective
//! assignment.

#[derive(Debug, Clone, Copy)]
pub struct OracleScores {
    pub bleu: [f64; 4],
    pub bleu_avg: f64,
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub meteor_matches: usize,
    pub meteor_chunks: usize,
}

pub fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn grams<'a>(t: &[&'a str], n: usize) -> Vec<Vec<&'a str>> {
    if t.len() < n {
        return Vec::new();
    }
    (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
}

/// Multiset intersection size, computed by consuming matches one at a time.
fn clipped_overlap(cand: &[Vec<&str>], reference: &[Vec<&str>]) -> usize {
    let mut pool: Vec<Option<&Vec<&str>>> = reference.iter().map(Some).collect();
    let mut hits = 0;
    for g in cand {
        if let Some(slot) = pool.iter_mut().find(|s| s.map(|r| r == g).unwrap_or(false)) {
            *slot = None;
            hits += 1;
        }
    }
    hits
}

fn precision(c: &[&str], r: &[&str], n: usize) -> f64 {
    let cg = grams(c, n);
    if cg.is_empty() {
        return 1.0;
    }
    clipped_overlap(&cg, &grams(r, n)) as f64 / cg.len() as f64
}

pub fn bleu(c: &[&str], r: &[&str]) -> [f64; 4] {
    if c.is_empty() {
        return [0.0; 4];
    }
    let bp = if c.len() > r.len() { 1.0 } else { (1.0 - r.len() as f64 / c.len() as f64).exp() };
    let p: Vec<f64> = (1..=4).map(|n| precision(c, r, n)).collect();
    let mut out = [0.0; 4];
    for n in 1..=4 {
        let prod: f64 = p[..n].iter().product();
        out[n - 1] = bp * prod.powf(1.0 / n as f64);
    }
    out
}

fn f1(overlap: usize, a: usize, b: usize) -> f64 {
    if overlap == 0 {
        0.0
    } else {
        2.0 * overlap as f64 / (a + b) as f64
    }
}

pub fn rouge_n(c: &[&str], r: &[&str], n: usize) -> f64 {
    let cg = grams(c, n);
    let rg = grams(r, n);
    if cg.is_empty() && rg.is_empty() {
        return if n > 1 { rouge_n(c, r, n - 1) } else { 0.0 };
    }
    f1(clipped_overlap(&cg, &rg), cg.len(), rg.len())
}

fn is_subsequence(needle: &[&str], hay: &[&str]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|w| it.any(|h| h == w))
}

/// Longest common subsequence by enumerating every subsequence of `a`.
pub fn lcs(a: &[&str], b: &[&str]) -> usize {
    assert!(a.len() <= 20, "oracle LCS is exponential");
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let k = mask.count_ones() as usize;
        if k <= best {
            continue;
        }
        let sub: Vec<&str> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
        if is_subsequence(&sub, b) {
            best = k;
        }
    }
    best
}

pub fn rouge_l(c: &[&str], r: &[&str]) -> f64 {
    f1(lcs(c, r), c.len(), r.len())
}

fn chunks_of(pairs: &[(usize, usize)]) -> usize {
    let mut sorted = pairs.to_vec();
    sorted.sort();
    let mut chunks = 0;
    for (k, &(i, j)) in sorted.iter().enumerate() {
        if k == 0 || !(sorted[k - 1].0 + 1 == i && sorted[k - 1].1 + 1 == j) {
            chunks += 1;
        }
    }
    chunks
}

fn search(c: &[&str], r: &[&str], i: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, best: &mut (usize, usize)) {
    if i == c.len() {
        let m = cur.len();
        let ch = chunks_of(cur);
        if m > best.0 || (m == best.0 && ch < best.1) {
            *best = (m, ch);
        }
        return;
    }
    search(c, r, i + 1, used, cur, best);
    for j in 0..r.len() {
        if !used[j] && r[j] == c[i] {
            used[j] = true;
            cur.push((i, j));
            search(c, r, i + 1, used, cur, best);
            cur.pop();
            used[j] = false;
        }
    }
}

/// Maximum matches and, among maximal alignments, minimum chunks.
pub fn meteor_alignment(c: &[&str], r: &[&str]) -> (usize, usize) {
    let mut best = (0, usize::MAX);
    search(c, r, 0, &mut vec![false; r.len()], &mut Vec::new(), &mut best);
    if best.0 == 0 {
        (0, 0)
    } else {
        best
    }
}

pub fn meteor(c: &[&str], r: &[&str]) -> (f64, usize, usize) {
    let (m, ch) = meteor_alignment(c, r);
    if m == 0 {
        return (0.0, 0, 0);
    }
    let p = m as f64 / c.len() as f64;
    let rec = m as f64 / r.len() as f64;
    let f_mean = 10.0 * p * rec / (rec + 9.0 * p);
    let pen = 0.5 * (ch as f64 / m as f64).powi(3);
    (f_mean * (1.0 - pen), m, ch)
}

pub fn score(candidate: &str, reference: &str) -> OracleScores {
    let c = words(candidate);
    let r = words(reference);
    let b = bleu(&c, &r);
    let (rouge_1, rouge_2, rouge_l) = if r.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        (rouge_n(&c, &r, 1), rouge_n(&c, &r, 2), rouge_l(&c, &r))
    };
    let (met, m, ch) = meteor(&c, &r);
    OracleScores {
        bleu: b,
        bleu_avg: b.iter().sum::<f64>() / 4.0,
        rouge_1,
        rouge_2,
        rouge_l,
        meteor: met,
        meteor_matches: m,
        meteor_chunks: ch,
    }
}

use std::collections::{BTreeSet, HashMap};

use super::{GramEntry, NGramModel, WordId, BOS, EOS, NEVER_PREDICTED, UNK};
use crate::error::{Error, Result};

/// Highest order the scorer's fixed key buffer supports.
pub(crate) const MAX_ORDER: usize = 15;

/// Trains an absolute-discounting backoff model on word sequences.
///
/// Each sentence is padded as `<s> w1 .. wn </s>`; every token after `<s>`
/// is a prediction event. For a context `h` with total count `c(h)` and
/// `n(h)` distinct successors:
///
/// ```text
/// p(w | h)  = (c(h w) - D) / c(h)                     if c(h w) > 0
///           = bo(h) * p(w | h')                        otherwise
/// bo(h)     = (D n(h) / c(h)) / (1 - sum_{c(h w) > 0} p(w | h'))
/// ```
///
/// where `h'` drops the oldest word. At the unigram level the freed mass
/// `D n / N` becomes the probability of the unknown marker.
pub fn train_ngram<S: AsRef<str>>(
    transcripts: &[Vec<S>],
    order: usize,
    discount: f64,
) -> Result<NGramModel> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::param(format!("order must be in 1..={MAX_ORDER}")));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::param("discount must lie in (0, 1)"));
    }
    if transcripts.iter().all(|t| t.is_empty()) {
        return Err(Error::param("training needs at least one nonempty transcript"));
    }

    // Stable ids: markers first, then words in sorted order.
    let mut vocab: BTreeSet<&str> = BTreeSet::new();
    for t in transcripts {
        for w in t {
            vocab.insert(w.as_ref());
        }
    }
    let mut words: Vec<String> = vec![BOS.into(), EOS.into(), UNK.into()];
    words.extend(
        vocab
            .into_iter()
            .filter(|w| ![BOS, EOS, UNK].contains(w))
            .map(String::from),
    );
    let ids: HashMap<&str, WordId> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i as WordId))
        .collect();
    let (bos, unk) = (0 as WordId, 2 as WordId);

    let mut counts: Vec<HashMap<Vec<WordId>, u64>> = vec![HashMap::new(); order];
    for t in transcripts {
        let mut sent = Vec::with_capacity(t.len() + 2);
        sent.push(bos);
        sent.extend(t.iter().map(|w| ids[w.as_ref()]));
        sent.push(1);
        for i in 1..sent.len() {
            for k in 1..=order.min(i + 1) {
                *counts[k - 1].entry(sent[i + 1 - k..=i].to_vec()).or_default() += 1;
            }
        }
    }

    let mut grams: Vec<HashMap<Vec<WordId>, GramEntry>> = vec![HashMap::new(); order];

    // Unigrams.
    let total: u64 = counts[0].values().sum();
    let types = counts[0].len() as f64;
    let n = total as f64;
    for (g, &c) in &counts[0] {
        grams[0].insert(
            g.clone(),
            GramEntry {
                log_prob: ((c as f64 - discount) / n).log10(),
                backoff: None,
            },
        );
    }
    let unk_mass = discount * types / n;
    let unk_entry = grams[0].entry(vec![unk]).or_insert(GramEntry {
        log_prob: f64::NEG_INFINITY,
        backoff: None,
    });
    unk_entry.log_prob = (10f64.powf(unk_entry.log_prob) + unk_mass).log10();
    grams[0].insert(
        vec![bos],
        GramEntry {
            log_prob: NEVER_PREDICTED,
            backoff: None,
        },
    );

    for k in 2..=order {
        // Group k-gram counts by context.
        let mut by_context: HashMap<&[WordId], Vec<(WordId, u64)>> = HashMap::new();
        for (g, &c) in &counts[k - 1] {
            by_context
                .entry(&g[..k - 1])
                .or_default()
                .push((g[k - 1], c));
        }
        let mut contexts: Vec<_> = by_context.into_iter().collect();
        contexts.sort_by(|a, b| a.0.cmp(b.0));
        let mut new_entries = Vec::new();
        let mut backoffs = Vec::new();
        for (ctx, mut succ) in contexts {
            // Fixed order so the floating-point sums below do not depend on
            // hash iteration order.
            succ.sort_unstable();
            let c_h: u64 = succ.iter().map(|&(_, c)| c).sum();
            let c_h = c_h as f64;
            let lower_ctx = &ctx[1..];
            let mut lower_seen = 0.0;
            for &(w, c) in &succ {
                let mut g = ctx.to_vec();
                g.push(w);
                new_entries.push((
                    g,
                    GramEntry {
                        log_prob: ((c as f64 - discount) / c_h).log10(),
                        backoff: None,
                    },
                ));
                lower_seen += 10f64.powf(resolve(&grams, lower_ctx, w));
            }
            let freed = discount * succ.len() as f64 / c_h;
            let denom = 1.0 - lower_seen;
            let bo = if denom > 1e-12 { freed / denom } else { 1.0 };
            backoffs.push((ctx.to_vec(), bo.log10()));
        }
        for (ctx, bo) in backoffs {
            let e = grams[k - 2]
                .get_mut(&ctx)
                .expect("every context is itself a counted lower-order gram");
            e.backoff = Some(bo);
        }
        grams[k - 1].extend(new_entries);
    }

    NGramModel::from_parts(order, words, grams)
}

/// Backoff resolution over a partially built table (orders below the one
/// being estimated are complete).
fn resolve(grams: &[HashMap<Vec<WordId>, GramEntry>], context: &[WordId], word: WordId) -> f64 {
    let mut backoff = 0.0;
    for start in 0..=context.len() {
        let ctx = &context[start..];
        let mut key = ctx.to_vec();
        key.push(word);
        if let Some(e) = grams[ctx.len()].get(&key) {
            return backoff + e.log_prob;
        }
        if !ctx.is_empty() {
            if let Some(e) = grams[ctx.len() - 1].get(ctx) {
                backoff += e.backoff.unwrap_or(0.0);
            }
        }
    }
    grams[0][&vec![2 as WordId]].log_prob + backoff
}

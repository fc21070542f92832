//! ARPA text serialization.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{GramEntry, NGramModel, WordId, BOS, EOS, NEVER_PREDICTED, UNK};
use crate::error::{Error, Result};
use crate::io;

fn fmt_log(x: f64) -> String {
    format!("{x:.7}")
}

pub fn write_arpa(model: &NGramModel) -> String {
    let entries = model.entries();
    let mut out = String::from("\\data\\\n");
    for k in 1..=model.order() {
        let _ = writeln!(out, "ngram {k}={}", model.num_grams(k));
    }
    for k in 1..=model.order() {
        let _ = write!(out, "\n\\{k}-grams:\n");
        for (words, e) in entries.iter().filter(|(w, _)| w.len() == k) {
            out.push_str(&fmt_log(e.log_prob));
            out.push('\t');
            out.push_str(&words.join(" "));
            if let Some(bo) = e.backoff {
                out.push('\t');
                out.push_str(&fmt_log(bo));
            }
            out.push('\n');
        }
    }
    out.push_str("\n\\end\\\n");
    out
}

pub fn save_arpa(model: &NGramModel, path: &Path) -> Result<()> {
    io::write_atomic(path, write_arpa(model).as_bytes())
}

pub fn load_arpa(path: &Path) -> Result<NGramModel> {
    parse_arpa(&io::read_string(path)?, &path.display().to_string())
}

enum Section {
    Preamble,
    Data,
    Grams(usize),
    End,
}

/// Parses ARPA text. `origin` names the source in error messages.
pub fn parse_arpa(text: &str, origin: &str) -> Result<NGramModel> {
    let err = |line: usize, msg: String| Error::format(origin, format!("line {line}"), msg);
    let mut section = Section::Preamble;
    let mut declared: Vec<usize> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    let mut words: Vec<String> = Vec::new();
    let mut ids: HashMap<String, WordId> = HashMap::new();
    let mut grams: Vec<HashMap<Vec<WordId>, GramEntry>> = Vec::new();
    let mut last_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        last_line = ln;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "\\end\\" {
            if matches!(section, Section::Preamble) {
                return Err(err(ln, "\\end\\ before \\data\\".into()));
            }
            section = Section::End;
            continue;
        }
        if let Some(k) = line
            .strip_prefix('\\')
            .and_then(|l| l.strip_suffix("-grams:"))
        {
            let k: usize = k
                .parse()
                .map_err(|_| err(ln, format!("bad section header {line:?}")))?;
            if k == 0 || k > declared.len() {
                return Err(err(ln, format!("section for undeclared order {k}")));
            }
            if let Section::Grams(prev) = section {
                if seen[prev - 1] != declared[prev - 1] {
                    return Err(err(
                        ln,
                        format!(
                            "{prev}-grams section has {} entries, header declares {}",
                            seen[prev - 1],
                            declared[prev - 1]
                        ),
                    ));
                }
            }
            section = Section::Grams(k);
            continue;
        }
        match section {
            Section::Preamble => {
                if line == "\\data\\" {
                    section = Section::Data;
                }
            }
            Section::Data => {
                let rest = line
                    .strip_prefix("ngram ")
                    .ok_or_else(|| err(ln, format!("expected 'ngram k=n', got {line:?}")))?;
                let (k, n) = rest
                    .split_once('=')
                    .ok_or_else(|| err(ln, format!("expected 'ngram k=n', got {line:?}")))?;
                let k: usize = k.trim().parse().map_err(|_| err(ln, "bad order".into()))?;
                let n: usize = n.trim().parse().map_err(|_| err(ln, "bad count".into()))?;
                if k != declared.len() + 1 {
                    return Err(err(ln, format!("order {k} declared out of sequence")));
                }
                declared.push(n);
                seen.push(0);
                grams.push(HashMap::with_capacity(n));
            }
            Section::Grams(k) => {
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != k + 1 && fields.len() != k + 2 {
                    return Err(err(ln, format!("expected {k} words with probability and optional backoff")));
                }
                let parse = |s: &str| -> Result<f64> {
                    s.parse::<f64>()
                        .map_err(|_| err(ln, format!("bad number {s:?}")))
                };
                let log_prob = parse(fields[0])?;
                if log_prob > 0.0 {
                    return Err(err(ln, format!("log probability {log_prob} is positive")));
                }
                let backoff = fields.get(k + 1).map(|s| parse(s)).transpose()?;
                let key: Vec<WordId> = fields[1..=k]
                    .iter()
                    .map(|w| {
                        *ids.entry(w.to_string()).or_insert_with(|| {
                            words.push(w.to_string());
                            (words.len() - 1) as WordId
                        })
                    })
                    .collect();
                if k > 1 && !grams[k - 2].contains_key(&key[..k - 1]) {
                    return Err(err(ln, format!("prefix of {:?} has no entry", fields[1..=k].join(" "))));
                }
                if grams[k - 1].insert(key, GramEntry { log_prob, backoff }).is_some() {
                    return Err(err(ln, format!("duplicate n-gram {:?}", fields[1..=k].join(" "))));
                }
                seen[k - 1] += 1;
                if seen[k - 1] > declared[k - 1] {
                    return Err(err(ln, format!("more {k}-grams than declared")));
                }
            }
            Section::End => return Err(err(ln, "content after \\end\\".into())),
        }
    }
    match section {
        Section::End => {}
        Section::Preamble => return Err(err(last_line, "missing \\data\\ section".into())),
        _ => return Err(err(last_line, "missing \\end\\ marker".into())),
    }
    if declared.is_empty() {
        return Err(err(last_line, "no n-gram orders declared".into()));
    }
    for (k, (&d, &s)) in declared.iter().zip(&seen).enumerate() {
        if d != s {
            return Err(err(
                last_line,
                format!("{}-grams: declared {d}, found {s}", k + 1),
            ));
        }
    }
    for marker in [BOS, EOS, UNK] {
        if !ids.contains_key(marker) {
            words.push(marker.to_string());
            let id = (words.len() - 1) as WordId;
            ids.insert(marker.to_string(), id);
            grams[0].insert(
                vec![id],
                GramEntry {
                    log_prob: NEVER_PREDICTED,
                    backoff: None,
                },
            );
        }
    }
    let order = declared.len();
    NGramModel::from_parts(order, words, grams)
}

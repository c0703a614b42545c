//! Trajectory similarity via a unigram METEOR score.
//!
//! Each step becomes the word `o<obs_id>-a<action_id>`. With `m` the size of
//! the multiset intersection of two word lists, the score is
//! `(m / |translation|) * (m / |reference|)`. Word order is ignored.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::gridworld::GridMap;
use crate::trajio::{Source, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrajWords {
    pub tokens: Vec<String>,
}

impl TrajWords {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for TrajWords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TrajWords {
            tokens: iter.into_iter().map(Into::into).collect(),
        }
    }
}

pub fn token(obs_id: usize, action_id: usize) -> String {
    format!("o{obs_id}-a{action_id}")
}

pub fn parse_token(token: &str) -> Option<(usize, usize)> {
    let (o, a) = token.strip_prefix('o')?.split_once("-a")?;
    Some((o.parse().ok()?, a.parse().ok()?))
}

pub fn to_words(traj: &Trajectory, map: &GridMap) -> Result<TrajWords> {
    if traj.map_id != map.map_id {
        return Err(Error::MapMismatch {
            expected: map.map_id.clone(),
            found: traj.map_id.clone(),
        });
    }
    Ok(traj.steps.iter().map(|s| token(s.obs_id, s.action_id)).collect())
}

fn counts(words: &TrajWords) -> HashMap<&str, usize> {
    let mut c = HashMap::new();
    for t in &words.tokens {
        *c.entry(t.as_str()).or_insert(0) += 1;
    }
    c
}

/// Number of tokens matched when each token maps at most once.
pub fn matched(translation: &TrajWords, reference: &TrajWords) -> usize {
    let r = counts(reference);
    counts(translation)
        .iter()
        .map(|(t, &n)| n.min(r.get(t).copied().unwrap_or(0)))
        .sum()
}

pub fn meteor(translation: &TrajWords, reference: &TrajWords) -> Result<f64> {
    if translation.is_empty() || reference.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let m = matched(translation, reference) as f64;
    Ok((m / translation.len() as f64) * (m / reference.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub source: Option<Source>,
    pub demo_ids: Vec<String>,
    /// `scores[i][j]`: generated trajectory `i` against demonstration `j`.
    pub scores: Vec<Vec<f64>>,
    pub demo_means: Vec<f64>,
}

impl ScoreMatrix {
    pub fn rows(&self) -> usize {
        self.scores.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.scores.iter().map(|r| r[j]).collect()
    }

    pub fn overall_mean(&self) -> f64 {
        self.demo_means.iter().sum::<f64>() / self.demo_means.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for id in &self.demo_ids {
            let _ = write!(out, ",{id}");
        }
        out.push('\n');
        for (i, row) in self.scores.iter().enumerate() {
            let _ = write!(out, "{i}");
            for v in row {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out.push_str("mean");
        for v in &self.demo_means {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
        out
    }
}

impl ScoreMatrix {
    /// Parses the layout written by [`ScoreMatrix::to_csv`]. The `mean` row
    /// is recomputed rather than trusted; `source` is not recorded in CSV.
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("score csv: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let mut cols = header.split(',');
        if cols.next() != Some("row") {
            return Err(bad("header must start with `row`".into()));
        }
        let demo_ids: Vec<String> = cols.map(str::to_string).collect();
        if demo_ids.is_empty() {
            return Err(bad("no demonstration columns".into()));
        }
        let mut scores = Vec::new();
        for (n, line) in lines.enumerate() {
            let mut cells = line.split(',');
            let label = cells.next().unwrap_or_default();
            if label == "mean" {
                continue;
            }
            if label.parse::<usize>().ok() != Some(scores.len()) {
                return Err(bad(format!("line {}: expected row {}", n + 2, scores.len())));
            }
            let row = cells
                .map(|c| c.trim().parse::<f64>().map_err(|e| bad(format!("line {}: {e}", n + 2))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != demo_ids.len() {
                return Err(bad(format!("line {}: {} values for {} columns", n + 2, row.len(), demo_ids.len())));
            }
            scores.push(row);
        }
        if scores.is_empty() {
            return Err(bad("no score rows".into()));
        }
        let n = scores.len() as f64;
        let demo_means = (0..demo_ids.len()).map(|j| scores.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        Ok(ScoreMatrix {
            source: None,
            demo_ids,
            scores,
            demo_means,
        })
    }
}

/// Demonstration ids default to `demo<j>` unless the record carries a session id.
pub fn demo_id(j: usize, demo: &Trajectory) -> String {
    demo.session_id.clone().unwrap_or_else(|| format!("demo{j}"))
}

pub fn score_matrix(generated: &[Trajectory], demos: &[Trajectory], map: &GridMap) -> Result<ScoreMatrix> {
    if generated.is_empty() || demos.is_empty() {
        return Err(Error::InsufficientData("score matrix needs trajectories on both sides".into()));
    }
    let refs = demos.iter().map(|d| to_words(d, map)).collect::<Result<Vec<_>>>()?;
    let mut scores = Vec::with_capacity(generated.len());
    for g in generated {
        let words = to_words(g, map)?;
        scores.push(refs.iter().map(|r| meteor(&words, r)).collect::<Result<Vec<_>>>()?);
    }
    let n = scores.len() as f64;
    let demo_means = (0..demos.len()).map(|j| scores.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut sources: Vec<Source> = generated.iter().map(|t| t.source).collect();
    sources.dedup();
    Ok(ScoreMatrix {
        source: (sources.len() == 1).then(|| sources[0]),
        demo_ids: demos.iter().enumerate().map(|(j, d)| demo_id(j, d)).collect(),
        scores,
        demo_means,
    })
}

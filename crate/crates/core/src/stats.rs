//! One-way ANOVA and frequency-above-average counts over METEOR scores.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaResult {
    pub f_stat: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub group_means: Vec<f64>,
    pub grand_mean: f64,
    /// Within-group variance was zero while the means differ. `f_stat` is
    /// then infinite and `p_value` zero.
    pub degenerate: bool,
}

pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::InsufficientData("ANOVA needs at least two groups".into()));
    }
    if groups.iter().any(|g| g.len() < 2) {
        return Err(Error::InsufficientData("every ANOVA group needs two observations".into()));
    }
    if groups.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("ANOVA input contains non-finite values".into()));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let group_means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let grand_mean = groups.iter().flatten().sum::<f64>() / n as f64;
    let ssb: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.len() as f64 * (m - grand_mean).powi(2))
        .sum();
    let ssw: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.iter().map(|x| (x - m).powi(2)).sum::<f64>())
        .sum();
    let (df_between, df_within) = (k - 1, n - k);
    let msb = ssb / df_between as f64;
    let msw = ssw / df_within as f64;

    let equal_means = group_means.iter().all(|m| *m == group_means[0]);
    let (f_stat, p_value, degenerate) = if msb == 0.0 || equal_means {
        (0.0, 1.0, false)
    } else if msw == 0.0 {
        (f64::INFINITY, 0.0, true)
    } else {
        let f = msb / msw;
        (f, f_survival(f, df_between, df_within), false)
    };
    Ok(AnovaResult {
        f_stat,
        p_value,
        df_between,
        df_within,
        group_means,
        grand_mean,
        degenerate,
    })
}

/// Upper tail of the F(d1, d2) distribution.
pub fn f_survival(f: f64, d1: usize, d2: usize) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    let (a, b) = (d1 as f64, d2 as f64);
    reg_inc_beta(b / 2.0, a / 2.0, b / (b + a * f)).clamp(0.0, 1.0)
}

fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_cf(a, b, x) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b).clamp(0.0, 1.0)
    }
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Entries strictly greater than `baseline`.
pub fn freq_above(scores: &[f64], baseline: f64) -> usize {
    scores.iter().filter(|&&s| s > baseline).count()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreqRow {
    pub dagger_e_above_dqn_avg: usize,
    pub dagger_plus_e_above_dqn_avg: usize,
    pub dagger_plus_e_above_dagger_e_avg: usize,
    pub n_generated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreqTable {
    pub demo_ids: Vec<String>,
    pub rows: Vec<FreqRow>,
}

/// Per-demonstration score columns for the three generators.
#[derive(Debug, Clone)]
pub struct DemoScores<'a> {
    pub demo_id: String,
    pub dqn: &'a [f64],
    pub dagger_e: &'a [f64],
    pub dagger_plus_e: &'a [f64],
}

pub fn freq_table(per_demo: &[DemoScores<'_>]) -> Result<FreqTable> {
    let mut rows = Vec::new();
    for d in per_demo {
        if d.dqn.is_empty() || d.dagger_e.is_empty() || d.dagger_plus_e.is_empty() {
            return Err(Error::InsufficientData(format!("empty score column for {}", d.demo_id)));
        }
        let (dqn_avg, de_avg) = (mean(d.dqn), mean(d.dagger_e));
        rows.push(FreqRow {
            dagger_e_above_dqn_avg: freq_above(d.dagger_e, dqn_avg),
            dagger_plus_e_above_dqn_avg: freq_above(d.dagger_plus_e, dqn_avg),
            dagger_plus_e_above_dagger_e_avg: freq_above(d.dagger_plus_e, de_avg),
            n_generated: d.dagger_plus_e.len(),
        });
    }
    Ok(FreqTable {
        demo_ids: per_demo.iter().map(|d| d.demo_id.clone()).collect(),
        rows,
    })
}

impl FreqTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("demo,dagger_e_above_dqn_avg,dagger_plus_e_above_dqn_avg,dagger_plus_e_above_dagger_e_avg,n\n");
        for (id, r) in self.demo_ids.iter().zip(&self.rows) {
            let _ = writeln!(
                out,
                "{id},{},{},{},{}",
                r.dagger_e_above_dqn_avg, r.dagger_plus_e_above_dqn_avg, r.dagger_plus_e_above_dagger_e_avg, r.n_generated
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<12}{:>14}{:>14}{:>14}\n", "Expert", "DAgger-E>DQN", "DAgger+E>DQN", "DAgger+E>-E");
        for (id, r) in self.demo_ids.iter().zip(&self.rows) {
            let _ = writeln!(
                out,
                "{id:<12}{:>14}{:>14}{:>14}",
                r.dagger_e_above_dqn_avg, r.dagger_plus_e_above_dqn_avg, r.dagger_plus_e_above_dagger_e_avg
            );
        }
        out
    }
}

/// ANOVA across the three generators for each demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct AnovaReport {
    pub demo_ids: Vec<String>,
    pub results: Vec<AnovaResult>,
}

pub fn anova_report(per_demo: &[DemoScores<'_>]) -> Result<AnovaReport> {
    let results = per_demo
        .iter()
        .map(|d| one_way_anova(&[d.dqn.to_vec(), d.dagger_e.to_vec(), d.dagger_plus_e.to_vec()]))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnovaReport {
        demo_ids: per_demo.iter().map(|d| d.demo_id.clone()).collect(),
        results,
    })
}

impl AnovaReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("demo,f_stat,p_value,df_between,df_within,degenerate\n");
        for (id, r) in self.demo_ids.iter().zip(&self.results) {
            let _ = writeln!(
                out,
                "{id},{:.16e},{:.16e},{},{},{}",
                r.f_stat, r.p_value, r.df_between, r.df_within, r.degenerate
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<12}{:>28}\n", "Expert", "F (p)");
        for (id, r) in self.demo_ids.iter().zip(&self.results) {
            let flag = if r.degenerate { " *" } else { "" };
            let _ = writeln!(out, "{id:<12}{:>28}", format!("{:.4} ({:.3e}){flag}", r.f_stat, r.p_value));
        }
        if self.results.iter().any(|r| r.degenerate) {
            out.push_str("* zero within-group variance\n");
        }
        out
    }
}

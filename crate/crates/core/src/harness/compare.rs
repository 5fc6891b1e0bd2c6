//! Side-by-side comparison of run reports.

use std::fmt::Write as _;

use thiserror::Error;

use super::RunReport;
use crate::envs::Domain;

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("need at least two reports, got {0}")]
    TooFew(usize),
    #[error("report `{agent}` is for {found}, expected {expected}")]
    MismatchedDomain {
        agent: String,
        found: Domain,
        expected: Domain,
    },
    #[error("report `{0}` was produced under a different protocol")]
    MismatchedProtocol(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub agent: String,
    pub avg_training: f64,
    pub asymptotic: f64,
}

/// How agent `a` fares against agent `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairFlags {
    pub a: String,
    pub b: String,
    pub better_avg_training: bool,
    pub better_asymptotic: bool,
    /// Batches in which `a` strictly beats `b`.
    pub batches_won: usize,
    pub batches: usize,
}

impl PairFlags {
    /// Better on at least one of the two summary metrics.
    pub fn successful(&self) -> bool {
        self.better_avg_training || self.better_asymptotic
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub domain: Domain,
    pub higher_is_better: bool,
    pub rows: Vec<SummaryRow>,
    pub pairs: Vec<PairFlags>,
}

/// Strict improvement in the domain's orientation.
pub fn better(domain: Domain, x: f64, y: f64) -> bool {
    if domain.higher_is_better() {
        x > y
    } else {
        x < y
    }
}

pub fn compare(reports: &[RunReport]) -> Result<Comparison, CompareError> {
    if reports.len() < 2 {
        return Err(CompareError::TooFew(reports.len()));
    }
    let first = &reports[0];
    for r in &reports[1..] {
        if r.domain != first.domain {
            return Err(CompareError::MismatchedDomain {
                agent: r.agent.clone(),
                found: r.domain,
                expected: first.domain,
            });
        }
        if r.protocol != first.protocol {
            return Err(CompareError::MismatchedProtocol(r.agent.clone()));
        }
    }
    let domain = first.domain;
    let rows = reports
        .iter()
        .map(|r| SummaryRow {
            agent: r.agent.clone(),
            avg_training: r.avg_training,
            asymptotic: r.asymptotic,
        })
        .collect();
    let mut pairs = Vec::new();
    for a in reports {
        for b in reports {
            if std::ptr::eq(a, b) {
                continue;
            }
            let batches_won = a
                .curve
                .iter()
                .zip(&b.curve)
                .filter(|(x, y)| better(domain, x.mean_score, y.mean_score))
                .count();
            pairs.push(PairFlags {
                a: a.agent.clone(),
                b: b.agent.clone(),
                better_avg_training: better(domain, a.avg_training, b.avg_training),
                better_asymptotic: better(domain, a.asymptotic, b.asymptotic),
                batches_won,
                batches: a.curve.len().min(b.curve.len()),
            });
        }
    }
    Ok(Comparison {
        domain,
        higher_is_better: domain.higher_is_better(),
        rows,
        pairs,
    })
}

impl Comparison {
    /// Fixed-width text table for the terminal.
    pub fn render(&self) -> String {
        let orient = if self.higher_is_better {
            "higher is better"
        } else {
            "lower is better"
        };
        let mut out = format!("domain: {} ({orient})\n", self.domain);
        let w = self
            .rows
            .iter()
            .map(|r| r.agent.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let _ = writeln!(
            out,
            "{:<w$}  {:>14}  {:>14}",
            "agent", "avg_training", "asymptotic"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<w$}  {:>14.6}  {:>14.6}",
                r.agent, r.avg_training, r.asymptotic
            );
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:<w$}  {:<w$}  {:>8}  {:>10}  {:>9}",
            "a", "vs b", "avg", "asymptotic", "batches"
        );
        for p in &self.pairs {
            let flag = |x: bool| if x { "better" } else { "-" };
            let _ = writeln!(
                out,
                "{:<w$}  {:<w$}  {:>8}  {:>10}  {:>4}/{:<4}",
                p.a,
                p.b,
                flag(p.better_avg_training),
                flag(p.better_asymptotic),
                p.batches_won,
                p.batches
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("a,b,better_avg_training,better_asymptotic,batches_won,batches\n");
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.a, p.b, p.better_avg_training, p.better_asymptotic, p.batches_won, p.batches
            );
        }
        out
    }
}

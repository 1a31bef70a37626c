//! CSV rendering of loss traces and sweep tables.
//!
//! Numbers use Rust's shortest round-trip formatting, which does not depend
//! on locale.

use std::fmt::Write as _;

use super::classifier::EpochRecord;
use super::sweep::SweepRow;
use crate::evaluation::MetricsRecord;

fn metrics_fields(out: &mut String, m: Option<&MetricsRecord>) {
    match m {
        Some(m) => write!(out, ",{},{},{}", m.accuracy, m.f1, m.auc),
        None => write!(out, ",,,"),
    }
    .expect("writing to a String");
}

/// `run_id,epoch,loss,accuracy,f1,auc`; metric fields are empty when the
/// epoch was not evaluated.
pub fn trace_csv(run_id: &str, records: &[EpochRecord]) -> String {
    let mut out = String::from("run_id,epoch,loss,accuracy,f1,auc\n");
    for r in records {
        write!(out, "{run_id},{},{}", r.epoch, r.loss).expect("writing to a String");
        metrics_fields(&mut out, r.metrics.as_ref());
        out.push('\n');
    }
    out
}

/// `run_id,b_dis,epoch,loss,accuracy,f1,auc`.
pub fn sweep_csv(run_id: &str, rows: &[SweepRow]) -> String {
    let mut out = String::from("run_id,b_dis,epoch,loss,accuracy,f1,auc\n");
    for r in rows {
        write!(out, "{run_id},{},{},{}", r.b_dis, r.epoch, r.loss).expect("writing to a String");
        metrics_fields(&mut out, Some(&r.metrics));
        out.push('\n');
    }
    out
}

/// `run_id,accuracy,f1,auc,n_test,threshold` for one evaluation.
pub fn metrics_csv(run_id: &str, m: &MetricsRecord) -> String {
    format!(
        "run_id,accuracy,f1,auc,n_test,threshold\n{run_id},{},{},{},{},{}\n",
        m.accuracy, m.f1, m.auc, m.n_test, m.threshold
    )
}

/// Loss traces without evaluation, one row per epoch.
pub fn loss_trace_csv(run_id: &str, losses: &[f64]) -> String {
    let records: Vec<EpochRecord> = losses
        .iter()
        .enumerate()
        .map(|(i, &loss)| EpochRecord {
            epoch: i + 1,
            loss,
            metrics: None,
        })
        .collect();
    trace_csv(run_id, &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_layout() {
        let csv = loss_trace_csv("r1", &[0.5, 0.25]);
        assert_eq!(csv, "run_id,epoch,loss,accuracy,f1,auc\nr1,1,0.5,,,\nr1,2,0.25,,,\n");
    }

    #[test]
    fn metrics_layout() {
        let m = MetricsRecord {
            accuracy: 0.6,
            f1: 0.0,
            auc: 0.5,
            n_test: 10,
            threshold: 0.0,
            loss: None,
        };
        assert_eq!(metrics_csv("e", &m), "run_id,accuracy,f1,auc,n_test,threshold\ne,0.6,0,0.5,10,0\n");
    }

    #[test]
    fn sweep_layout() {
        let m = MetricsRecord {
            accuracy: 0.75,
            f1: 0.5,
            auc: 1.0,
            n_test: 4,
            threshold: 0.0,
            loss: None,
        };
        let rows = [SweepRow {
            b_dis: 0.1,
            epoch: 3,
            loss: 0.125,
            metrics: m,
        }];
        assert_eq!(
            sweep_csv("s", &rows),
            "run_id,b_dis,epoch,loss,accuracy,f1,auc\ns,0.1,3,0.125,0.75,0.5,1\n"
        );
    }
}

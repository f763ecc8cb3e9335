//! Plain-text plan dumps.
//!
//! ```text
//! rows,cols,epsilon,violation
//! 2,2,2.50000000e-1,0.00000000e0
//! 4.91006895e-1,8.99310498e-3
//! 8.99310498e-3,4.91006895e-1
//! ```
//!
//! Every real is written with nine significant digits.

use std::io::{BufRead, Write};

use super::sinkhorn::TransportPlan;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const PLAN_DUMP_HEADER: &str = "rows,cols,epsilon,violation";

fn sci(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn write_plan_dump<W: Write>(out: &mut W, plan: &TransportPlan, epsilon: f64) -> Result<()> {
    writeln!(out, "{PLAN_DUMP_HEADER}")?;
    writeln!(out, "{},{},{},{}", plan.rows(), plan.cols(), sci(epsilon), sci(plan.violation))?;
    for row in plan.plan.row_iter() {
        let line: Vec<String> = row.iter().map(|v| sci(*v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Reads one dump block back as `(plan, epsilon, violation)`.
pub fn parse_plan_dump<R: BufRead>(input: R) -> Result<(Matrix, f64, f64)> {
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        lines.next().ok_or_else(|| Error::Format("truncated plan dump".into()))?.map_err(Error::from)
    };
    if next()?.trim() != PLAN_DUMP_HEADER {
        return Err(Error::Format("missing plan dump header".into()));
    }
    let meta = next()?;
    let fields: Vec<&str> = meta.trim().split(',').collect();
    if fields.len() != 4 {
        return Err(Error::Format(format!("bad plan dump metadata line `{meta}`")));
    }
    let bad = |s: &str| Error::Format(format!("cannot parse `{s}`"));
    let rows: usize = fields[0].parse().map_err(|_| bad(fields[0]))?;
    let cols: usize = fields[1].parse().map_err(|_| bad(fields[1]))?;
    let epsilon: f64 = fields[2].parse().map_err(|_| bad(fields[2]))?;
    let violation: f64 = fields[3].parse().map_err(|_| bad(fields[3]))?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let line = next()?;
        for tok in line.trim().split(',') {
            data.push(tok.parse::<f64>().map_err(|_| bad(tok))?);
        }
    }
    Ok((Matrix::new(rows, cols, data)?, epsilon, violation))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips_at_nine_digits() {
        let plan = TransportPlan {
            plan: Matrix::from_rows(&[[0.491006895018954, 0.008993104981045], [0.0, 0.5]]).unwrap(),
            violation: 3.2e-9,
            iterations: 4,
            converged: true,
        };
        let mut buf = Vec::new();
        write_plan_dump(&mut buf, &plan, 0.25).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("rows,cols,epsilon,violation\n2,2,2.50000000e-1,3.20000000e-9\n"));
        assert!(text.contains("4.91006895e-1,8.99310498e-3"));
        let (m, eps, viol) = parse_plan_dump(buf.as_slice()).unwrap();
        assert_eq!(eps, 0.25);
        assert_eq!(viol, 3.2e-9);
        assert!(m.max_abs_diff(&plan.plan) < 1e-9);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_plan_dump("nope\n".as_bytes()).is_err());
        assert!(parse_plan_dump("rows,cols,epsilon,violation\n2,2,0.1\n".as_bytes()).is_err());
        assert!(parse_plan_dump("rows,cols,epsilon,violation\n1,2,0.1,0\n1.0\n".as_bytes()).is_err());
    }
}

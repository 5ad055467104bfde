//! Plain-text dump of a problem for offline reproduction.
//!
//! ```text
//! qp <n> <m>
//! hessian
//! <n lines of n values>
//! gradient
//! <n values>
//! ineq
//! <m lines: n row values then the lower bound>
//! lower
//! <n values>
//! upper
//! <n values>
//! ```

use std::fmt::Write as _;

use super::QpProblem;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn join<T: Scalar>(v: &[T]) -> String {
    let mut s = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        // f64 round-trips through Display
        write!(s, "{}", x.as_f64()).unwrap();
    }
    s
}

impl<T: Scalar> QpProblem<T> {
    pub fn to_text(&self) -> String {
        let n = self.n;
        let mut out = format!("qp {} {}\nhessian\n", n, self.m());
        for row in self.hessian.chunks(n.max(1)).take(n) {
            out.push_str(&join(row));
            out.push('\n');
        }
        out.push_str("gradient\n");
        out.push_str(&join(&self.gradient));
        out.push_str("\nineq\n");
        for k in 0..self.m() {
            out.push_str(&join(self.ineq_row(k)));
            writeln!(out, " {}", self.ineq_lb[k].as_f64()).unwrap();
        }
        out.push_str("lower\n");
        out.push_str(&join(&self.lower));
        out.push_str("\nupper\n");
        out.push_str(&join(&self.upper));
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Config(format!("qp dump: {msg}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        if dims.len() != 3 || dims[0] != "qp" {
            return Err(bad("bad header"));
        }
        let n: usize = dims[1].parse().map_err(|_| bad("bad n"))?;
        let m: usize = dims[2].parse().map_err(|_| bad("bad m"))?;
        if n == 0 {
            return Err(bad("empty problem"));
        }
        let values = |line: Option<&str>, count: usize| -> Result<Vec<T>> {
            let line = line.ok_or_else(|| bad("truncated"))?;
            let v = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map(T::lit).map_err(|_| bad(&format!("bad number `{t}`"))))
                .collect::<Result<Vec<T>>>()?;
            if v.len() != count {
                return Err(bad("wrong value count"));
            }
            Ok(v)
        };
        let tag = |lines: &mut dyn Iterator<Item = &str>, t: &str| -> Result<()> {
            if lines.next() == Some(t) {
                Ok(())
            } else {
                Err(bad(&format!("expected `{t}`")))
            }
        };

        tag(&mut lines, "hessian")?;
        let mut hessian = Vec::with_capacity(n * n);
        for _ in 0..n {
            hessian.extend(values(lines.next(), n)?);
        }
        tag(&mut lines, "gradient")?;
        let gradient = values(lines.next(), n)?;
        let mut p = QpProblem::new(hessian, gradient)?;
        tag(&mut lines, "ineq")?;
        for _ in 0..m {
            let mut row = values(lines.next(), n + 1)?;
            let lb = row.pop().unwrap();
            p.add_inequality(&row, lb)?;
        }
        tag(&mut lines, "lower")?;
        let lower = values(lines.next(), n)?;
        tag(&mut lines, "upper")?;
        let upper = values(lines.next(), n)?;
        p.set_bounds(lower, upper)?;
        Ok(p)
    }
}

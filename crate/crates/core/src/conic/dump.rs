//! Plain-text dump of a subproblem for cross-checking with external solvers.
//!
//! ```text
//! mixflow-conic 1
//! vars <n> rows <m> cones <k>
//! offset <value>
//! P <nnz>                      upper triangle, "i j v" per line
//! q <n>                        one value per line
//! block <name> <start> <end> <nnz>
//!   "row col v" per line, then "lo hi" per row of the block (cone blocks omit bounds)
//! cones <k>                    "first_row rho_var m_var t_var" per cone
//! ```
//!
//! Indices are zero-based. Infinite bounds are written as `inf` / `-inf`.
//! Cone `k` is `{(z0, z1, z2) : 2 z0 z2 >= z1^2, z0 >= 0, z2 >= 0}` on rows
//! `first_row .. first_row + 3`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::subproblem::ConicProblem;
use crate::error::{Error, Result};

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.17e}")
    }
}

pub fn dump_string(problem: &ConicProblem) -> String {
    let prog = &problem.program;
    let mut out = String::new();
    let _ = writeln!(out, "mixflow-conic 1");
    let _ = writeln!(out, "vars {} rows {} cones {}", prog.num_vars(), prog.num_rows(), prog.sets.cones);
    let _ = writeln!(out, "offset {}", num(prog.offset));

    let mut upper = Vec::new();
    for (v, (i, j)) in prog.p.iter() {
        if i <= j {
            upper.push((i, j, *v));
        }
    }
    upper.sort_by_key(|&(i, j, _)| (i, j));
    let _ = writeln!(out, "P {}", upper.len());
    for (i, j, v) in upper {
        let _ = writeln!(out, "{i} {j} {}", num(v));
    }
    let _ = writeln!(out, "q {}", prog.q.len());
    for v in &prog.q {
        let _ = writeln!(out, "{}", num(*v));
    }

    let a = prog.a.to_csr();
    for (name, range) in problem.blocks.named() {
        let mut entries = Vec::new();
        for row in range.clone() {
            if let Some(r) = a.outer_view(row) {
                for (col, v) in r.iter() {
                    entries.push((row, col, *v));
                }
            }
        }
        let _ = writeln!(out, "block {name} {} {} {}", range.start, range.end, entries.len());
        for (r, c, v) in entries {
            let _ = writeln!(out, "{r} {c} {}", num(v));
        }
        if name != "cones" {
            for row in range {
                let _ = writeln!(out, "{} {}", num(prog.sets.lower[row]), num(prog.sets.upper[row]));
            }
        }
    }

    let l = problem.layout;
    let _ = writeln!(out, "cones {}", prog.sets.cones);
    for s in 0..l.nt {
        for j in 0..l.nx {
            let k = s * l.nx + j;
            let _ = writeln!(
                out,
                "{} {} {} {}",
                prog.sets.cone_start(k),
                l.rho(s, j),
                l.flux(s, j),
                l.epigraph(s, j)
            );
        }
    }
    out
}

pub fn write_dump(problem: &ConicProblem, path: &Path) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(dump_string(problem).as_bytes()).map_err(io)
}

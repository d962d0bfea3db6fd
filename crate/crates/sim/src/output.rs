//! CSV writers for sweep results and pair traces.

use std::io::{self, Write};

use mpqkd_core::mc::PairRecord;

use crate::sweep::ResultRow;

pub const RESULT_HEADER: &str = "mode,method,l_a,l_b,total_distance,delta,lambda,e_d,mu_a,mu_b,rate,converged,\
p,r_p,r_s,q_bar_11,e_z,y_11,e_11,raw_rate";

pub const TRACE_HEADER: &str = "i,j,basis,kappa_a,kappa_b,error";

/// Ten significant digits in scientific notation; `inf` for infinities.
pub fn format_number(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.9e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_results<W: Write>(rows: &[ResultRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{RESULT_HEADER}")?;
    for r in rows {
        let b = r.breakdown;
        let fields = [
            r.mode.name().to_string(),
            r.method.label().to_string(),
            opt(r.l_a),
            opt(r.l_b),
            format_number(r.total_distance),
            opt(r.delta),
            r.lambda.map(|l| l.to_string()).unwrap_or_default(),
            opt(r.e_d),
            opt(r.mu_a),
            opt(r.mu_b),
            format_number(r.rate),
            r.converged.map(|c| c.to_string()).unwrap_or_default(),
            opt(b.map(|b| b.p)),
            opt(b.map(|b| b.r_p)),
            opt(b.map(|b| b.r_s)),
            opt(b.map(|b| b.q_bar_11)),
            opt(b.map(|b| b.e_z)),
            opt(b.map(|b| b.y_11)),
            opt(b.map(|b| b.e_11)),
            opt(b.map(|b| b.raw_rate)),
        ];
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()
}

pub fn write_trace<W: Write>(pairs: &[PairRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for p in pairs {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.i,
            p.j,
            p.basis.label(),
            p.kappa_a.map_or("", bit),
            p.kappa_b.map_or("", bit),
            bit(p.error)
        )?;
    }
    out.flush()
}
